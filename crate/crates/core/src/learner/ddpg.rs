use std::sync::Arc;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::buffer::TransitionBatch;
use crate::envs::{EnvConfig, GoalObservation, Policy};
use crate::error::{Error, Result};
use crate::neural::{
    polyak_update, AdamConfig, Checkpoint, Gradients, Mlp, OptimizerState, OutputActivation,
};

/// Actor, critic, their target copies, and one optimizer per online network.
#[derive(Debug, Clone)]
pub struct Agent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    pub actor_opt: OptimizerState,
    pub critic_opt: OptimizerState,
}

impl Agent {
    /// Fresh networks; targets start as exact copies.
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        actor_lr: f64,
        critic_lr: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let sizes = |input: usize, output: usize| {
            let mut v = vec![input];
            v.extend_from_slice(hidden);
            v.push(output);
            v
        };
        let actor = Mlp::new(&sizes(obs_dim, act_dim), OutputActivation::Tanh, rng);
        let critic = Mlp::new(
            &sizes(obs_dim + act_dim, 1),
            OutputActivation::Identity,
            rng,
        );
        Self::from_networks(
            actor.clone(),
            critic.clone(),
            actor,
            critic,
            actor_lr,
            critic_lr,
        )
    }

    pub fn from_networks(
        actor: Mlp,
        critic: Mlp,
        target_actor: Mlp,
        target_critic: Mlp,
        actor_lr: f64,
        critic_lr: f64,
    ) -> Self {
        let adam = |lr| AdamConfig {
            learning_rate: lr,
            ..AdamConfig::default()
        };
        Self {
            actor_opt: OptimizerState::new(&actor, adam(actor_lr)),
            critic_opt: OptimizerState::new(&critic, adam(critic_lr)),
            actor,
            critic,
            target_actor,
            target_critic,
        }
    }

    /// Networks from a checkpoint with fresh optimizer moments.
    pub fn from_checkpoint(ckpt: &Checkpoint, actor_lr: f64, critic_lr: f64) -> Self {
        Self::from_networks(
            ckpt.actor.clone(),
            ckpt.critic.clone(),
            ckpt.target_actor.clone(),
            ckpt.target_critic.clone(),
            actor_lr,
            critic_lr,
        )
    }

    pub fn to_checkpoint(&self, env: &EnvConfig) -> Checkpoint {
        Checkpoint {
            env: env.clone(),
            actor: self.actor.clone(),
            critic: self.critic.clone(),
            target_actor: self.target_actor.clone(),
            target_critic: self.target_critic.clone(),
        }
    }

    pub fn update_targets(&mut self, polyak: f64) -> Result<()> {
        polyak_update(&mut self.target_actor, &self.actor, polyak)?;
        polyak_update(&mut self.target_critic, &self.critic, polyak)
    }
}

fn critic_input(states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[states.view(), actions.view()]).expect("row counts match")
}

/// Bellman loss `mean((Q(s,a) − y)²)` with `y = clip(r + γ·Q'(s', π'(s')), −1/(1−γ), 0)`,
/// and its gradient with respect to the critic parameters.
pub fn critic_loss_and_gradients(
    agent: &Agent,
    batch: &TransitionBatch,
    gamma: f64,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Empty("critic batch"));
    }
    let n = batch.len() as f64;
    let next_actions = agent.target_actor.predict_batch(batch.next_states.view())?;
    let next_q = agent
        .target_critic
        .predict_batch(critic_input(batch.next_states.view(), next_actions.view()).view())?;
    let clip_low = -1.0 / (1.0 - gamma);
    let targets: Array1<f64> =
        (&batch.rewards + &(next_q.column(0).to_owned() * gamma)).mapv(|y| y.clamp(clip_low, 0.0));
    let cache = agent
        .critic
        .forward_batch(critic_input(batch.states.view(), batch.actions.view()).view())?;
    let err = &cache.output.column(0) - &targets;
    let loss = err.mapv(|e| e * e).sum() / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("critic loss"));
    }
    let grad_out = (err * (2.0 / n)).insert_axis(Axis(1));
    let (grads, _) = agent.critic.backward(&cache, grad_out.view())?;
    Ok((loss, grads))
}

/// One optimizer step on the critic; returns the loss before the step.
pub fn critic_update(agent: &mut Agent, batch: &TransitionBatch, gamma: f64) -> Result<f64> {
    let (loss, grads) = critic_loss_and_gradients(agent, batch, gamma)?;
    agent.critic_opt.step(&mut agent.critic, &grads)?;
    Ok(loss)
}

/// Demonstration pairs drawn for one actor update.
#[derive(Debug, Clone, Copy)]
pub struct DemoBatch<'a> {
    pub states: ArrayView2<'a, f64>,
    pub actions: ArrayView2<'a, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorSettings {
    pub bc_weight: f64,
    pub action_l2: f64,
    pub q_filter: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActorLosses {
    /// `−mean Q(s, π(s))` plus the pre-tanh action penalty.
    pub policy: f64,
    /// `Σ ‖π(s_d) − a_d‖²` over the demo batch, before weighting.
    pub bc: f64,
    /// `policy + bc_weight · bc`.
    pub total: f64,
}

/// Actor loss `L_π + λ·L_BC` and its gradient with respect to the actor
/// parameters. `L_π = −mean Q(s, π(s)) + action_l2 · mean z(s)²`, where `z`
/// is the actor's pre-tanh output, so the penalty also keeps the tanh head
/// out of deep saturation. With the Q
/// filter on, demo pairs whose action the critic rates below the policy's
/// own action are left out of `L_BC`.
pub fn actor_loss_and_gradients(
    agent: &Agent,
    states: ArrayView2<f64>,
    demos: Option<DemoBatch>,
    settings: ActorSettings,
) -> Result<(ActorLosses, Gradients)> {
    let b = states.nrows();
    if b == 0 {
        return Err(Error::Empty("actor batch"));
    }
    let demos = demos.filter(|d| d.states.nrows() > 0);
    if let Some(d) = demos {
        if d.states.nrows() != d.actions.nrows() {
            return Err(Error::dim(
                "demo actions",
                d.states.nrows(),
                d.actions.nrows(),
            ));
        }
    }
    let obs_dim = states.ncols();
    let input = match demos {
        Some(d) => concatenate(Axis(0), &[states.view(), d.states.view()])
            .map_err(|_| Error::dim("demo states", obs_dim, d.states.ncols()))?,
        None => states.to_owned(),
    };
    let actor_cache = agent.actor.forward_batch(input.view())?;
    let pi = &actor_cache.output;
    let act_dim = pi.ncols();
    let pi_replay = pi.slice(s![..b, ..]);

    let critic_cache = agent
        .critic
        .forward_batch(critic_input(states, pi_replay).view())?;
    let mean_q = critic_cache.output.sum() / b as f64;
    let z_replay = actor_cache
        .pre_activations
        .last()
        .expect("actor has layers")
        .slice(s![..b, ..]);
    let l2 = z_replay.mapv(|z| z * z).sum() / (b * act_dim) as f64;
    let policy = -mean_q + settings.action_l2 * l2;

    let dq = Array2::from_elem((b, 1), -1.0 / b as f64);
    let (_, d_input) = agent.critic.backward(&critic_cache, dq.view())?;
    let mut grad_pi = Array2::zeros(pi.raw_dim());
    grad_pi
        .slice_mut(s![..b, ..])
        .assign(&d_input.slice(s![.., obs_dim..]));

    let mut bc = 0.0;
    if let Some(d) = demos {
        let pi_demo = pi.slice(s![b.., ..]);
        let diff = &pi_demo - &d.actions;
        let keep: Vec<bool> = if settings.q_filter {
            let q_demo = agent
                .critic
                .predict_batch(critic_input(d.states, d.actions).view())?;
            let q_pi = agent
                .critic
                .predict_batch(critic_input(d.states, pi_demo).view())?;
            q_demo
                .column(0)
                .iter()
                .zip(q_pi.column(0))
                .map(|(qd, qp)| qd > qp)
                .collect()
        } else {
            vec![true; diff.nrows()]
        };
        for (i, row) in diff.rows().into_iter().enumerate() {
            if keep[i] {
                bc += row.mapv(|e| e * e).sum();
                grad_pi
                    .row_mut(b + i)
                    .assign(&(&row * (2.0 * settings.bc_weight)));
            }
        }
    }
    let total = policy + settings.bc_weight * bc;
    if !total.is_finite() {
        return Err(Error::NonFinite("actor loss"));
    }
    let mut grad_z = grad_pi;
    Zip::from(&mut grad_z)
        .and(pi)
        .for_each(|g, &y| *g *= 1.0 - y * y);
    grad_z
        .slice_mut(s![..b, ..])
        .scaled_add(2.0 * settings.action_l2 / (b * act_dim) as f64, &z_replay);
    let (grads, _) = agent
        .actor
        .backward_from_pre_activation(&actor_cache, grad_z)?;
    Ok((ActorLosses { policy, bc, total }, grads))
}

/// One optimizer step on the actor; returns the losses before the step.
pub fn actor_update(
    agent: &mut Agent,
    states: ArrayView2<f64>,
    demos: Option<DemoBatch>,
    settings: ActorSettings,
) -> Result<ActorLosses> {
    let (losses, grads) = actor_loss_and_gradients(agent, states, demos, settings)?;
    agent.actor_opt.step(&mut agent.actor, &grads)?;
    Ok(losses)
}

/// With probability `random_eps` a uniform action on `[−1, 1]^d`, otherwise
/// `π(s)` plus `N(0, σ²)` noise per coordinate, clipped to `[−1, 1]`.
pub fn explore_action(
    actor: &Mlp,
    state: &[f64],
    random_eps: f64,
    noise_sigma: f64,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let greedy = actor.forward(state)?;
    if rng.gen_bool(random_eps.clamp(0.0, 1.0)) {
        return Ok((0..greedy.len())
            .map(|_| rng.gen_range(-1.0..=1.0))
            .collect());
    }
    if noise_sigma == 0.0 {
        return Ok(greedy);
    }
    let noise =
        Normal::new(0.0, noise_sigma).map_err(|e| Error::Config(format!("noise sigma: {e}")))?;
    Ok(greedy
        .into_iter()
        .map(|a| (a + noise.sample(rng)).clamp(-1.0, 1.0))
        .collect())
}

/// Deterministic policy `π(s)` over a shared, read-only actor snapshot.
#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    pub actor: Arc<Mlp>,
}

impl Policy for GreedyPolicy {
    fn act(&mut self, observation: &GoalObservation) -> Vec<f64> {
        self.actor
            .forward(&observation.state)
            .expect("observation matches actor input")
    }
}

/// Exploring policy used for training rollouts.
#[derive(Debug, Clone)]
pub struct ExplorationPolicy<R> {
    pub actor: Arc<Mlp>,
    pub random_eps: f64,
    pub noise_sigma: f64,
    pub rng: R,
}

impl<R: Rng + Send> Policy for ExplorationPolicy<R> {
    fn act(&mut self, observation: &GoalObservation) -> Vec<f64> {
        explore_action(
            &self.actor,
            &observation.state,
            self.random_eps,
            self.noise_sigma,
            &mut self.rng,
        )
        .expect("observation matches actor input")
    }
}
