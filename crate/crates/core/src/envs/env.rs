use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{EnvConfig, EnvKind, GoalSampling};
use super::frame::Frame;
use crate::error::{Error, Result};
use crate::sim::{normalize, PsmState, Scene, SceneObject};

/// Sparse goal reward: 0 when `range * |achieved - desired| <= threshold`, else -1.
///
/// Both goals are in normalized workspace coordinates.
pub fn compute_reward(achieved: &[f64; 3], desired: &[f64; 3], threshold: f64, range: f64) -> f64 {
    let d2: f64 = achieved
        .iter()
        .zip(desired)
        .map(|(a, d)| (a - d) * (a - d))
        .sum();
    if range * d2.sqrt() > threshold {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalObservation {
    /// Reach: `[p, g]`; Pick: `[p, 2j - 1, o, g]`, positions normalized.
    pub state: Vec<f64>,
    pub achieved_goal: [f64; 3],
    pub desired_goal: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepInfo {
    pub is_success: bool,
    pub action_clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: GoalObservation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// A goal-conditioned PSM environment (Reach or Pick).
///
/// Call [`reset`](Self::reset) before stepping; an episode ends after exactly
/// `horizon` steps.
#[derive(Debug, Clone)]
pub struct Environment {
    config: EnvConfig,
    rng: ChaCha8Rng,
    scene: Scene,
    goal: Vector3<f64>,
    steps: usize,
    ready: bool,
    last_reward: Option<f64>,
    frame_log: Option<Vec<Frame>>,
}

impl Environment {
    pub fn make(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let ws = config.workspace;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            scene: Scene {
                workspace: ws,
                arm: PsmState {
                    position: ws.center,
                    jaw: 1.0,
                    attached: false,
                },
                object: None,
            },
            goal: ws.center,
            steps: 0,
            ready: false,
            last_reward: None,
            frame_log: None,
            config,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn kind(&self) -> EnvKind {
        self.config.kind
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    /// Mutable access to the scene, for tests and tooling that place the arm directly.
    pub fn scene_mut(&mut self) -> &mut Scene {
        &mut self.scene
    }

    pub fn goal(&self) -> Vector3<f64> {
        self.goal
    }

    pub fn set_goal(&mut self, goal: Vector3<f64>) {
        self.goal = goal;
    }

    fn sample_box(&mut self, z_floor: f64) -> Vector3<f64> {
        let ws = &self.config.workspace;
        let (lo, hi) = (ws.lower(), ws.upper());
        let z_lo = lo.z.max(z_floor).min(hi.z);
        Vector3::new(
            self.rng.gen_range(lo.x..=hi.x),
            self.rng.gen_range(lo.y..=hi.y),
            self.rng.gen_range(z_lo..=hi.z),
        )
    }

    pub fn reset(&mut self) -> GoalObservation {
        let ws = self.config.workspace;
        match self.config.kind {
            EnvKind::Reach => {
                let start = self.sample_box(f64::NEG_INFINITY);
                let goal = self.sample_box(f64::NEG_INFINITY);
                self.scene.arm = PsmState {
                    position: start,
                    jaw: 1.0,
                    attached: false,
                };
                self.scene.object = None;
                self.goal = match self.config.goal_sampling {
                    GoalSampling::Uniform => goal,
                    GoalSampling::AtStart => start,
                };
            }
            EnvKind::Pick => {
                // Goals are kept at least one threshold above the table.
                let goal = self.sample_box(ws.table_height + self.config.threshold);
                self.scene.arm = PsmState {
                    position: ws.center,
                    jaw: 1.0,
                    attached: false,
                };
                let object = Vector3::new(ws.center.x, ws.center.y, ws.table_height);
                self.scene.object = Some(SceneObject {
                    position: object,
                    grasp_radius: self.config.grasp_radius,
                });
                self.goal = match self.config.goal_sampling {
                    GoalSampling::Uniform => goal,
                    GoalSampling::AtStart => object,
                };
            }
        }
        self.steps = 0;
        self.ready = true;
        self.last_reward = None;
        if self.frame_log.is_some() {
            self.render();
        }
        self.observe()
    }

    pub fn observe(&self) -> GoalObservation {
        let ws = &self.config.workspace;
        let p = normalize(&self.scene.arm.position, ws);
        let g = normalize(&self.goal, ws);
        let desired_goal = [g.x, g.y, g.z];
        match self.config.kind {
            EnvKind::Reach => GoalObservation {
                state: vec![p.x, p.y, p.z, g.x, g.y, g.z],
                achieved_goal: [p.x, p.y, p.z],
                desired_goal,
            },
            EnvKind::Pick => {
                let o = self
                    .scene
                    .object
                    .map(|o| normalize(&o.position, ws))
                    .unwrap_or_else(Vector3::zeros);
                let jaw = 2.0 * self.scene.arm.jaw - 1.0;
                GoalObservation {
                    state: vec![p.x, p.y, p.z, jaw, o.x, o.y, o.z, g.x, g.y, g.z],
                    achieved_goal: [o.x, o.y, o.z],
                    desired_goal,
                }
            }
        }
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let dim = self.config.action_dim();
        if action.len() != dim {
            return Err(Error::dim("action", dim, action.len()));
        }
        if !action.iter().all(|a| a.is_finite()) {
            return Err(Error::NonFinite("action"));
        }
        if !self.ready {
            return Err(Error::Config(
                "environment needs reset before stepping".into(),
            ));
        }
        let delta = Vector3::new(action[0], action[1], action[2]);
        // Reach has no jaw action; the jaw stays where reset put it.
        let phi = match self.config.kind {
            EnvKind::Reach => 2.0 * self.scene.arm.jaw - 1.0,
            EnvKind::Pick => action[3],
        };
        let action_clamped = self.scene.step(&delta, phi);
        self.steps += 1;
        let observation = self.observe();
        let reward = compute_reward(
            &observation.achieved_goal,
            &observation.desired_goal,
            self.config.threshold,
            self.config.workspace.range,
        );
        let done = self.steps >= self.config.horizon;
        if done {
            self.ready = false;
        }
        self.last_reward = Some(reward);
        if self.frame_log.is_some() {
            self.render();
        }
        Ok(StepResult {
            observation,
            reward,
            done,
            info: StepInfo {
                is_success: reward == 0.0,
                action_clamped,
            },
        })
    }

    /// Snapshot of the scene. When frame logging is on, the snapshot is also
    /// appended to the log (reset and step do this automatically).
    pub fn render(&mut self) -> Frame {
        let frame = Frame {
            step: self.steps,
            gripper: self.scene.arm.position.into(),
            jaw: self.scene.arm.jaw,
            object: self.scene.object.map(|o| o.position.into()),
            attached: self.scene.arm.attached,
            goal: self.goal.into(),
            reward: self.last_reward,
        };
        if let Some(log) = self.frame_log.as_mut() {
            if log.last() != Some(&frame) {
                log.push(frame.clone());
            }
        }
        frame
    }

    pub fn enable_frame_log(&mut self) {
        self.frame_log.get_or_insert_with(Vec::new);
    }

    pub fn take_frames(&mut self) -> Vec<Frame> {
        self.frame_log
            .as_mut()
            .map(std::mem::take)
            .unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_examples() {
        let range = 0.05;
        let four_mm = 0.004 / range;
        assert_eq!(
            compute_reward(&[four_mm, 0.0, 0.0], &[0.0; 3], 0.003, range),
            -1.0
        );
        assert_eq!(
            compute_reward(&[0.3, -0.2, 0.9], &[0.3, -0.2, 0.9], 0.003, range),
            0.0
        );
        // Exactly on the threshold: 0.5 * |(0.5, 0, 0)| = 0.25.
        assert_eq!(compute_reward(&[0.5, 0.0, 0.0], &[0.0; 3], 0.25, 0.5), 0.0);
    }

    #[test]
    fn dimensions_by_kind() {
        let mut reach = Environment::make(EnvConfig::reach()).unwrap();
        assert_eq!(reach.reset().state.len(), 6);
        let mut pick = Environment::make(EnvConfig::pick()).unwrap();
        assert_eq!(pick.reset().state.len(), 10);
        assert!(matches!(
            reach.step(&[0.0; 4]),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(pick.step(&[0.0; 3]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn make_rejects_invalid_config() {
        let mut cfg = EnvConfig::reach();
        cfg.threshold = -1.0;
        assert!(Environment::make(cfg).is_err());
    }

    #[test]
    fn same_seed_same_resets() {
        let mut a = Environment::make(EnvConfig::reach().with_seed(4)).unwrap();
        let mut b = Environment::make(EnvConfig::reach().with_seed(4)).unwrap();
        for _ in 0..5 {
            assert_eq!(a.reset(), b.reset());
        }
    }

    #[test]
    fn pick_reset_layout() {
        let mut env = Environment::make(EnvConfig::pick().with_seed(2)).unwrap();
        for _ in 0..20 {
            let obs = env.reset();
            assert_eq!(&obs.state[0..3], &[0.0, 0.0, 0.0]);
            assert_eq!(obs.state[3], 1.0);
            assert_eq!(obs.state[4], obs.state[0]);
            assert_eq!(obs.state[5], obs.state[1]);
            let ws = env.config().workspace;
            assert_eq!(obs.state[6], (ws.table_height - ws.center.z) / ws.range);
            let g_z = obs.desired_goal[2] * ws.range + ws.center.z;
            assert!(g_z >= ws.table_height + env.config().threshold);
        }
    }

    #[test]
    fn done_exactly_at_horizon() {
        let mut env = Environment::make(EnvConfig::reach().with_horizon(100)).unwrap();
        env.reset();
        for t in 1..=100 {
            let r = env.step(&[0.0; 3]).unwrap();
            assert_eq!(r.done, t == 100);
        }
        assert!(env.step(&[0.0; 3]).is_err());
    }

    #[test]
    fn reach_at_goal_is_success() {
        let mut env = Environment::make(EnvConfig::reach()).unwrap();
        env.reset();
        let p = env.scene().arm.position;
        env.set_goal(p);
        let r = env.step(&[0.5, -0.5, 0.5]).unwrap();
        assert_eq!(r.reward, 0.0);
        assert!(r.info.is_success);
    }

    #[test]
    fn pick_reward_follows_object_not_gripper() {
        let mut env = Environment::make(EnvConfig::pick()).unwrap();
        env.reset();
        let gripper = env.scene().arm.position;
        env.set_goal(gripper);
        let r = env.step(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(r.reward, -1.0);
        assert!(!r.info.is_success);
    }

    #[test]
    fn reach_jaw_is_frozen() {
        let mut env = Environment::make(EnvConfig::reach()).unwrap();
        env.reset();
        env.step(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(env.scene().arm.jaw, 1.0);
    }

    #[test]
    fn clamped_action_flagged() {
        let mut env = Environment::make(EnvConfig::reach()).unwrap();
        env.reset();
        assert!(env.step(&[2.0, 0.0, 0.0]).unwrap().info.action_clamped);
        assert!(!env.step(&[1.0, 0.0, 0.0]).unwrap().info.action_clamped);
        assert!(env.step(&[f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn render_tracks_step_and_attachment() {
        let mut env = Environment::make(EnvConfig::pick()).unwrap();
        env.enable_frame_log();
        env.reset();
        assert_eq!(env.render().step, 0);
        let ws = env.config().workspace;
        let drop = (ws.center.z - ws.table_height) / ws.eta;
        for _ in 0..drop.round() as usize {
            env.step(&[0.0, 0.0, -1.0, 1.0]).unwrap();
        }
        env.step(&[0.0, 0.0, 0.0, -1.0]).unwrap();
        let frame = env.render();
        assert!(frame.attached);
        assert_eq!(frame.object, Some(frame.gripper));
        let log = env.take_frames();
        assert_eq!(log.len(), drop.round() as usize + 2);
        assert_eq!(log[0].step, 0);
    }
}
