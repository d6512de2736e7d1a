use std::collections::VecDeque;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::envs::{compute_reward, EnvConfig, Episode};
use crate::error::{Error, Result};

/// One `(s, a, r, s')` record with its goal bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub achieved_goal: [f64; 3],
    pub next_achieved_goal: [f64; 3],
    pub desired_goal: [f64; 3],
    /// True when `desired_goal` was substituted by a later achieved goal.
    pub relabeled: bool,
}

/// Row-stacked transitions ready for the network updates.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBatch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub achieved_goals: Array2<f64>,
    pub next_achieved_goals: Array2<f64>,
    pub desired_goals: Array2<f64>,
    pub relabeled: Vec<bool>,
}

impl TransitionBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn transition(&self, i: usize) -> Transition {
        let goal = |m: &Array2<f64>| [m[[i, 0]], m[[i, 1]], m[[i, 2]]];
        Transition {
            state: self.states.row(i).to_vec(),
            action: self.actions.row(i).to_vec(),
            reward: self.rewards[i],
            next_state: self.next_states.row(i).to_vec(),
            achieved_goal: goal(&self.achieved_goals),
            next_achieved_goal: goal(&self.next_achieved_goals),
            desired_goal: goal(&self.desired_goals),
            relabeled: self.relabeled[i],
        }
    }
}

#[derive(Debug, Clone)]
struct StoredEpisode {
    /// `(T + 1) × obs_dim`.
    observations: Array2<f64>,
    /// `T × act_dim`.
    actions: Array2<f64>,
    /// `(T + 1) × 3`.
    achieved: Array2<f64>,
    desired: [f64; 3],
    rewards: Vec<f64>,
}

/// Whole-episode replay storage with FIFO eviction.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    horizon: usize,
    obs_dim: usize,
    act_dim: usize,
    goal_offset: usize,
    threshold: f64,
    range: f64,
    capacity: usize,
    episodes: VecDeque<StoredEpisode>,
}

impl ReplayBuffer {
    /// Buffer for episodes of `env`, holding at most `capacity` episodes.
    pub fn new(env: &EnvConfig, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be at least 1".into()));
        }
        Ok(Self {
            horizon: env.horizon,
            obs_dim: env.observation_dim(),
            act_dim: env.action_dim(),
            goal_offset: env.kind.goal_offset(),
            threshold: env.threshold,
            range: env.workspace.range,
            capacity,
            episodes: VecDeque::with_capacity(capacity.min(4096)),
        })
    }

    pub fn num_episodes(&self) -> usize {
        self.episodes.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.episodes.len() * self.horizon
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn store_episode(&mut self, ep: &Episode) -> Result<()> {
        let t = self.horizon;
        if ep.len() != t
            || ep.observations.len() != t + 1
            || ep.achieved_goals.len() != t + 1
            || ep.rewards.len() != t
        {
            return Err(Error::dim("episode length", t, ep.len()));
        }
        if let Some(bad) = ep.observations.iter().find(|o| o.len() != self.obs_dim) {
            return Err(Error::dim("episode observation", self.obs_dim, bad.len()));
        }
        if let Some(bad) = ep.actions.iter().find(|a| a.len() != self.act_dim) {
            return Err(Error::dim("episode action", self.act_dim, bad.len()));
        }
        let observations = Array2::from_shape_vec((t + 1, self.obs_dim), ep.observations.concat())
            .expect("checked shape");
        let actions =
            Array2::from_shape_vec((t, self.act_dim), ep.actions.concat()).expect("checked shape");
        let achieved = Array2::from_shape_vec(
            (t + 1, 3),
            ep.achieved_goals.iter().flatten().copied().collect(),
        )
        .expect("checked shape");
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(StoredEpisode {
            observations,
            actions,
            achieved,
            desired: ep.desired_goal,
            rewards: ep.rewards.clone(),
        });
        Ok(())
    }

    /// Uniform transition sample in which each transition, with probability
    /// `k / (k + 1)`, has its goal replaced by the achieved goal of a
    /// uniformly chosen later timestep `t' ∈ [t + 1, T]` of the same episode
    /// and its reward recomputed for that goal.
    pub fn sample_her_batch(
        &self,
        batch_size: usize,
        k: usize,
        rng: &mut impl Rng,
    ) -> Result<TransitionBatch> {
        if self.episodes.is_empty() {
            return Err(Error::Empty("replay buffer"));
        }
        let (t_max, od, ad, go) = (self.horizon, self.obs_dim, self.act_dim, self.goal_offset);
        let relabel_p = k as f64 / (k as f64 + 1.0);
        let mut b = TransitionBatch {
            states: Array2::zeros((batch_size, od)),
            actions: Array2::zeros((batch_size, ad)),
            rewards: Array1::zeros(batch_size),
            next_states: Array2::zeros((batch_size, od)),
            achieved_goals: Array2::zeros((batch_size, 3)),
            next_achieved_goals: Array2::zeros((batch_size, 3)),
            desired_goals: Array2::zeros((batch_size, 3)),
            relabeled: vec![false; batch_size],
        };
        for i in 0..batch_size {
            let ep = &self.episodes[rng.gen_range(0..self.episodes.len())];
            let t = rng.gen_range(0..t_max);
            b.states.row_mut(i).assign(&ep.observations.row(t));
            b.next_states.row_mut(i).assign(&ep.observations.row(t + 1));
            b.actions.row_mut(i).assign(&ep.actions.row(t));
            b.achieved_goals.row_mut(i).assign(&ep.achieved.row(t));
            b.next_achieved_goals
                .row_mut(i)
                .assign(&ep.achieved.row(t + 1));
            let relabel = k > 0 && rng.gen_bool(relabel_p);
            let (goal, reward) = if relabel {
                let future = rng.gen_range(t + 1..=t_max);
                let g = [
                    ep.achieved[[future, 0]],
                    ep.achieved[[future, 1]],
                    ep.achieved[[future, 2]],
                ];
                let next = [
                    ep.achieved[[t + 1, 0]],
                    ep.achieved[[t + 1, 1]],
                    ep.achieved[[t + 1, 2]],
                ];
                (g, compute_reward(&next, &g, self.threshold, self.range))
            } else {
                (ep.desired, ep.rewards[t])
            };
            for (j, &g) in goal.iter().enumerate() {
                b.desired_goals[[i, j]] = g;
                b.states[[i, go + j]] = g;
                b.next_states[[i, go + j]] = g;
            }
            b.rewards[i] = reward;
            b.relabeled[i] = relabel;
        }
        Ok(b)
    }
}
