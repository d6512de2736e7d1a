//! Physics-free PSM scene: a Cartesian gripper point with a jaw, an optional
//! object, and a table half-space.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Jaw angle strictly below this closes on an object.
pub const GRASP_JAW_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workspace {
    /// Box center in the arm base frame (m).
    pub center: Vector3<f64>,
    /// Half-width of the box along every axis (m).
    pub range: f64,
    /// z of the table plane (m).
    pub table_height: f64,
    /// Cartesian displacement for a unit action (m).
    pub eta: f64,
}

impl Workspace {
    /// A workspace whose table sits on the floor of the box.
    pub fn with_range(center: Vector3<f64>, range: f64, eta: f64) -> Self {
        Self {
            center,
            range,
            table_height: center.z - range,
            eta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.range.is_finite() && self.range > 0.0) {
            return Err(Error::Config(format!(
                "range must be > 0, got {}",
                self.range
            )));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Config(format!("eta must be > 0, got {}", self.eta)));
        }
        if !self.center.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("workspace center"));
        }
        let (lo, hi) = (self.center.z - self.range, self.center.z + self.range);
        if !(self.table_height >= lo && self.table_height <= hi) {
            return Err(Error::Config(format!(
                "table height {} outside workspace z range [{lo}, {hi}]",
                self.table_height
            )));
        }
        Ok(())
    }

    pub fn lower(&self) -> Vector3<f64> {
        let mut lo = self.center.add_scalar(-self.range);
        lo.z = lo.z.max(self.table_height);
        lo
    }

    pub fn upper(&self) -> Vector3<f64> {
        self.center.add_scalar(self.range)
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let (lo, hi) = (self.lower(), self.upper());
        (0..3).all(|i| p[i] >= lo[i] && p[i] <= hi[i])
    }
}

/// Projects `p` onto the workspace box, then lifts it above the table.
pub fn clamp_to_workspace(p: &Vector3<f64>, ws: &Workspace) -> Vector3<f64> {
    let (lo, hi) = (ws.lower(), ws.upper());
    Vector3::from_fn(|i, _| p[i].clamp(lo[i], hi[i]))
}

pub fn normalize(p: &Vector3<f64>, ws: &Workspace) -> Vector3<f64> {
    (p - ws.center) / ws.range
}

pub fn denormalize(p: &Vector3<f64>, ws: &Workspace) -> Vector3<f64> {
    p * ws.range + ws.center
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsmState {
    pub position: Vector3<f64>,
    /// 0 is fully closed, 1 fully open.
    pub jaw: f64,
    pub attached: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub position: Vector3<f64>,
    /// Radius of the proximity sphere around the gripper point that counts as contact.
    pub grasp_radius: f64,
}

/// Result of one arm step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmStep {
    pub state: PsmState,
    /// Set when any action component was outside [-1, 1] and got clipped.
    pub action_clamped: bool,
}

fn clip_unit(v: f64, clamped: &mut bool) -> f64 {
    let c = v.clamp(-1.0, 1.0);
    *clamped |= c != v;
    c
}

/// Applies a displacement action and a jaw action to the arm.
///
/// `p' = clamp(eta * delta + p)`, `j' = (phi + 1) / 2`. The attachment flag
/// is carried over unchanged; use [`update_grasp`] afterwards.
pub fn step_arm(state: &PsmState, delta: &Vector3<f64>, phi: f64, ws: &Workspace) -> ArmStep {
    let mut action_clamped = false;
    let delta = delta.map(|d| clip_unit(d, &mut action_clamped));
    let phi = clip_unit(phi, &mut action_clamped);
    let position = clamp_to_workspace(&(delta * ws.eta + state.position), ws);
    ArmStep {
        state: PsmState {
            position,
            jaw: (phi + 1.0) / 2.0,
            attached: state.attached,
        },
        action_clamped,
    }
}

/// Re-evaluates the grasp condition and moves the object accordingly.
///
/// Attached iff the jaw is below [`GRASP_JAW_THRESHOLD`] and the object is
/// within `grasp_radius` of the gripper. An attached object sits exactly at
/// the gripper; a released one drops straight down onto the table.
pub fn update_grasp(
    state: &PsmState,
    obj: &SceneObject,
    ws: &Workspace,
) -> (PsmState, SceneObject) {
    let near = (state.position - obj.position).norm() <= obj.grasp_radius;
    let attached = state.jaw < GRASP_JAW_THRESHOLD && near;
    let mut obj = *obj;
    if attached {
        obj.position = state.position;
    } else if state.attached {
        obj.position.z = ws.table_height;
    }
    (PsmState { attached, ..*state }, obj)
}

/// Arm plus optional object, stepped as one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub workspace: Workspace,
    pub arm: PsmState,
    pub object: Option<SceneObject>,
}

impl Scene {
    pub fn step(&mut self, delta: &Vector3<f64>, phi: f64) -> bool {
        let moved = step_arm(&self.arm, delta, phi, &self.workspace);
        self.arm = moved.state;
        if let Some(obj) = self.object.as_mut() {
            if self.arm.attached {
                obj.position = self.arm.position;
            }
            let (arm, o) = update_grasp(&self.arm, obj, &self.workspace);
            self.arm = arm;
            *obj = o;
        }
        moved.action_clamped
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn ws() -> Workspace {
        Workspace::with_range(Vector3::new(0.01, -0.02, -0.12), 0.05, 0.001)
    }

    fn open_arm(position: Vector3<f64>) -> PsmState {
        PsmState {
            position,
            jaw: 1.0,
            attached: false,
        }
    }

    #[test]
    fn clamp_examples() {
        let ws = ws();
        assert_eq!(clamp_to_workspace(&ws.center, &ws), ws.center);
        let far = ws.center + Vector3::new(2.0 * ws.range, 0.0, 0.0);
        let expected = ws.center + Vector3::new(ws.range, 0.0, 0.0);
        assert!((clamp_to_workspace(&far, &ws) - expected).norm() < 1e-15);

        let mut raised = ws;
        raised.table_height = ws.center.z - 0.01;
        let below = Vector3::new(0.0, -0.03, ws.center.z - 0.02);
        let c = clamp_to_workspace(&below, &raised);
        assert_eq!((c.x, c.y, c.z), (below.x, below.y, raised.table_height));
    }

    #[test]
    fn normalize_examples() {
        let ws = ws();
        assert_eq!(normalize(&ws.center, &ws), Vector3::zeros());
        let corner = ws.center + Vector3::repeat(ws.range);
        assert!((normalize(&corner, &ws) - Vector3::repeat(1.0)).norm() < 1e-12);
    }

    #[test]
    fn step_examples() {
        let ws = ws();
        let s0 = open_arm(ws.center);
        let s1 = step_arm(&s0, &Vector3::new(1.0, 0.0, 0.0), 1.0, &ws);
        assert!((s1.state.position.x - ws.center.x - 0.001).abs() < 1e-15);
        assert!(!s1.action_clamped);

        let still = step_arm(&s0, &Vector3::zeros(), 1.0, &ws);
        assert_eq!(still.state, s0);

        assert_eq!(step_arm(&s0, &Vector3::zeros(), 0.0, &ws).state.jaw, 0.5);
        assert_eq!(step_arm(&s0, &Vector3::zeros(), 1.0, &ws).state.jaw, 1.0);

        let wild = step_arm(&s0, &Vector3::new(3.0, 0.0, 0.0), -2.0, &ws);
        assert!(wild.action_clamped);
        assert_eq!(wild.state.jaw, 0.0);
        assert!((wild.state.position.x - s1.state.position.x).abs() < 1e-15);
    }

    #[test]
    fn grasp_threshold_is_strict() {
        let ws = ws();
        let obj = SceneObject {
            position: ws.center + Vector3::new(0.002, 0.0, 0.0),
            grasp_radius: 0.005,
        };
        let mut arm = open_arm(ws.center);
        arm.jaw = 0.2;
        let (a, o) = update_grasp(&arm, &obj, &ws);
        assert!(a.attached);
        assert_eq!(o.position, arm.position);

        arm.jaw = 0.25;
        let (a, o) = update_grasp(&arm, &obj, &ws);
        assert!(!a.attached);
        assert_eq!(o, obj);
    }

    #[test]
    fn out_of_reach_does_not_attach() {
        let ws = ws();
        let obj = SceneObject {
            position: ws.center + Vector3::new(0.006, 0.0, 0.0),
            grasp_radius: 0.005,
        };
        let mut arm = open_arm(ws.center);
        arm.jaw = 0.0;
        assert!(!update_grasp(&arm, &obj, &ws).0.attached);
    }

    #[test]
    fn release_drops_to_table() {
        let ws = ws();
        let mut scene = Scene {
            workspace: ws,
            arm: open_arm(ws.center),
            object: Some(SceneObject {
                position: ws.center,
                grasp_radius: 0.005,
            }),
        };
        scene.step(&Vector3::zeros(), -1.0);
        assert!(scene.arm.attached);
        scene.step(&Vector3::new(0.0, 1.0, 1.0), -1.0);
        let obj = scene.object.unwrap();
        assert_eq!(obj.position, scene.arm.position);
        // jaw 0.3 -> release
        scene.step(&Vector3::zeros(), -0.4);
        assert!(!scene.arm.attached);
        let obj = scene.object.unwrap();
        assert_eq!(obj.position.z, ws.table_height);
        assert_eq!(obj.position.x, scene.arm.position.x);
    }

    #[test]
    fn workspace_validation() {
        let mut bad = ws();
        bad.range = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = ws();
        bad.eta = -1.0;
        assert!(bad.validate().is_err());
        let mut bad = ws();
        bad.table_height = bad.center.z + 1.0;
        assert!(bad.validate().is_err());
        assert!(ws().validate().is_ok());
    }

    fn vec3(bound: f64) -> impl Strategy<Value = Vector3<f64>> {
        prop::array::uniform3(-bound..bound).prop_map(Vector3::from)
    }

    proptest! {
        #[test]
        fn clamp_is_idempotent(p in vec3(1.0)) {
            let ws = ws();
            let once = clamp_to_workspace(&p, &ws);
            prop_assert_eq!(clamp_to_workspace(&once, &ws), once);
            prop_assert!(ws.contains(&once));
        }

        #[test]
        fn normalize_round_trip(p in vec3(1.0)) {
            let ws = ws();
            let back = denormalize(&normalize(&p, &ws), &ws);
            prop_assert!((back - p).amax() <= 1e-12);
        }

        #[test]
        fn step_invariants(
            start in vec3(1.0),
            delta in vec3(1.5),
            phi in -1.5f64..1.5,
        ) {
            let ws = ws();
            let s0 = open_arm(clamp_to_workspace(&start, &ws));
            let s1 = step_arm(&s0, &delta, phi, &ws).state;
            prop_assert!((s1.position - s0.position).amax() <= ws.eta + 1e-15);
            prop_assert!((0.0..=1.0).contains(&s1.jaw));
            prop_assert!(ws.contains(&s1.position));
            let n = normalize(&s1.position, &ws);
            prop_assert!(n.amax() <= 1.0 + 1e-12);
        }

        #[test]
        fn attached_object_tracks_gripper(
            moves in prop::collection::vec((vec3(1.0), -1.0f64..-0.6), 1..30),
        ) {
            let ws = ws();
            let mut scene = Scene {
                workspace: ws,
                arm: PsmState { position: ws.center, jaw: 0.0, attached: false },
                object: Some(SceneObject { position: ws.center, grasp_radius: 0.005 }),
            };
            scene.step(&Vector3::zeros(), -1.0);
            for (d, phi) in moves {
                scene.step(&d, phi);
                prop_assert!(scene.arm.attached);
                prop_assert_eq!(scene.object.unwrap().position, scene.arm.position);
            }
        }
    }
}
