use super::env::{Environment, GoalObservation};
use crate::error::Result;

/// Anything that maps observations to actions.
pub trait Policy: Send {
    fn act(&mut self, observation: &GoalObservation) -> Vec<f64>;

    /// Called once before the first action of every episode.
    fn begin_episode(&mut self) {}
}

impl<F> Policy for F
where
    F: FnMut(&GoalObservation) -> Vec<f64> + Send,
{
    fn act(&mut self, observation: &GoalObservation) -> Vec<f64> {
        self(observation)
    }
}

/// One full episode, `T` actions long.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    /// `T + 1` observations, including the one returned by reset.
    pub observations: Vec<Vec<f64>>,
    /// Achieved goal at each of the `T + 1` observations.
    pub achieved_goals: Vec<[f64; 3]>,
    pub desired_goal: [f64; 3],
    pub actions: Vec<Vec<f64>>,
    /// Reward after each action.
    pub rewards: Vec<f64>,
    /// Attachment flag at each of the `T + 1` observations.
    pub attached: Vec<bool>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn final_reward(&self) -> Option<f64> {
        self.rewards.last().copied()
    }

    pub fn is_success(&self) -> bool {
        self.final_reward() == Some(0.0)
    }

    pub fn episode_return(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Resets `env` and runs `policy` until the horizon.
pub fn run_episode(env: &mut Environment, policy: &mut dyn Policy) -> Result<Episode> {
    let first = env.reset();
    policy.begin_episode();
    let horizon = env.config().horizon;
    let mut ep = Episode {
        observations: Vec::with_capacity(horizon + 1),
        achieved_goals: Vec::with_capacity(horizon + 1),
        desired_goal: first.desired_goal,
        actions: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        attached: Vec::with_capacity(horizon + 1),
    };
    let mut obs = first;
    loop {
        let action = policy.act(&obs);
        ep.observations.push(std::mem::take(&mut obs.state));
        ep.achieved_goals.push(obs.achieved_goal);
        ep.attached.push(env.scene().arm.attached);
        let step = env.step(&action)?;
        ep.actions.push(action);
        ep.rewards.push(step.reward);
        obs = step.observation;
        if step.done {
            break;
        }
    }
    ep.observations.push(obs.state);
    ep.achieved_goals.push(obs.achieved_goal);
    ep.attached.push(env.scene().arm.attached);
    Ok(ep)
}
