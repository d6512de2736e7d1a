use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{DMatrix, DVector, Vector3};

use super::dh::ToolPose;
use super::tool::{JointKind, ToolKinematics};
use crate::error::{Error, Result};

/// `|sin θ6|` at or below this is treated as the wrist singularity.
pub const WRIST_SINGULAR_TOL: f64 = 1e-3;
/// Distance of the tip from the first joint axis below which θ1 is undefined.
pub const AXIS_SINGULAR_TOL: f64 = 1e-6;

/// Closed-form inverse kinematics of the Suction & Irrigation tool.
///
/// Returns `(q1, q2, q3, q5, q6)` as the tool's 5-joint vector. Each DH angle
/// θᵢ is recovered with `atan2`, then the row offsets are removed. Both sign
/// branches of θ1 and θ6 are tried and the one inside the joint limits with
/// the smallest round-trip residual wins.
pub fn ik_suction(pose: &ToolPose, tool: &ToolKinematics) -> Result<Vec<f64>> {
    if tool.num_joints() != 5 || tool.rows.len() != 5 {
        return Err(Error::Config(format!(
            "{} is not a five-joint suction-style tool",
            tool.name
        )));
    }
    let l2 = tool.link("l2")?;
    let l5 = tool.link("l5")?;
    let p = pose.position;
    let v = pose.direction.normalize();

    if p.x.hypot(p.z) <= AXIS_SINGULAR_TOL {
        return Err(Error::Singular(
            "tip lies on the first joint axis (p_x = p_z = 0)".into(),
        ));
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut saw_singular = false;
    let mut nearest_violation = None;
    let base_theta1 = p.z.atan2(p.x);
    for theta1 in [base_theta1, wrap(base_theta1 + PI)] {
        let (s1, c1) = theta1.sin_cos();
        let cos6 = (s1 * v.x - c1 * v.z).clamp(-1.0, 1.0);
        for theta6 in [cos6.acos(), -cos6.acos()] {
            let s6 = theta6.sin();
            if s6.abs() <= WRIST_SINGULAR_TOL {
                saw_singular = true;
                continue;
            }
            let s25 = -v.y / s6;
            let c25 = -(v.x * c1 + v.z * s1) / s6;
            // Radial distance of the tip from the first axis, signed by this θ1 branch.
            let radial = p.x * c1 + p.z * s1;
            let num = radial - l5 * c25;
            let den = -p.y + l5 * s25;
            let theta2 = num.atan2(den);
            let (s2, c2) = theta2.sin_cos();
            // Equal to den / cos θ2 (and num / sin θ2) without dividing by either.
            let q3 = num * s2 + den * c2 + l2;
            let theta5 = wrap(s25.atan2(c25) - theta2);

            let raw = [
                theta1 - FRAC_PI_2,
                theta2 + FRAC_PI_2,
                q3,
                theta5 + FRAC_PI_2,
                theta6 + FRAC_PI_2,
            ];
            let Some(q) = fit_limits(tool, &raw) else {
                let violation = raw
                    .iter()
                    .zip(&tool.joint_limits)
                    .enumerate()
                    .find(|(_, (v, l))| !l.contains(**v))
                    .map(|(j, (v, l))| (j, *v, *l));
                nearest_violation = nearest_violation.or(violation);
                continue;
            };
            let fk = tool.forward_kinematics(&q)?;
            let residual = (fk.position - p).norm() + (fk.direction - v).norm();
            if best.as_ref().is_none_or(|(r, _)| residual < *r) {
                best = Some((residual, q));
            }
        }
    }
    match best {
        Some((_, q)) => Ok(q),
        None if saw_singular => Err(Error::Singular(
            "wrist singularity: sin(theta6) is zero".into(),
        )),
        None => Err(Error::Unreachable(match nearest_violation {
            Some((j, v, l)) => format!(
                "joint {} would be {v:.6}, outside [{}, {}]",
                j + 1,
                l.min,
                l.max
            ),
            None => "no solution branch".into(),
        })),
    }
}

fn wrap(angle: f64) -> f64 {
    let a = (angle + PI).rem_euclid(TAU) - PI;
    if a == -PI {
        PI
    } else {
        a
    }
}

/// Shifts revolute joints by whole turns into their limits; `None` if any
/// joint cannot be placed inside.
fn fit_limits(tool: &ToolKinematics, raw: &[f64]) -> Option<Vec<f64>> {
    let kinds = joint_kinds(tool);
    raw.iter()
        .zip(&tool.joint_limits)
        .zip(kinds)
        .map(|((&v, lim), kind)| {
            if lim.contains(v) {
                return Some(v);
            }
            if kind == JointKind::Prismatic {
                return None;
            }
            let w = wrap(v);
            [w, w - TAU, w + TAU].into_iter().find(|c| lim.contains(*c))
        })
        .collect()
}

fn joint_kinds(tool: &ToolKinematics) -> Vec<JointKind> {
    let mut kinds = vec![JointKind::Revolute; tool.num_joints()];
    for b in tool.rows.iter().filter_map(|r| r.binding) {
        kinds[b.index] = b.kind;
    }
    kinds
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DlsOptions {
    pub damping: f64,
    pub max_iterations: usize,
    /// Largest per-joint change in one iteration (rad, or m for prismatic).
    pub max_step: f64,
    /// Converged once the stacked position/direction residual norm drops below this.
    pub tolerance: f64,
}

impl Default for DlsOptions {
    fn default() -> Self {
        Self {
            damping: 1e-3,
            max_iterations: 200,
            max_step: 0.1,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub joints: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// Residual after each accepted iteration, starting with the initial guess.
    pub residual_trace: Vec<f64>,
    /// Set when a proposed step had to be clamped at a joint limit.
    pub clamped: bool,
    pub converged: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum IkError {
    #[error("numeric IK did not converge (residual {:.3e})", .0.residual)]
    NoConvergence(Box<IkSolution>),
    #[error(transparent)]
    Kinematics(#[from] Error),
}

/// Position error is scaled so a 1 cm miss weighs like a 0.1 rad direction error.
const POSITION_WEIGHT: f64 = 10.0;

fn residual(
    tool: &ToolKinematics,
    q: &[f64],
    target: &ToolPose,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (pose, jac) = tool.pose_jacobian(q)?;
    let w = POSITION_WEIGHT;
    let p = (pose.position - target.position) * w;
    let v = pose.direction - target.direction;
    let mut jac = jac;
    jac.rows_mut(0, 3).scale_mut(w);
    Ok((
        DVector::from_iterator(6, p.iter().chain(v.iter()).copied()),
        jac,
    ))
}

/// Damped-least-squares (Levenberg–Marquardt) inverse kinematics on the
/// stacked position and direction error.
///
/// A step is only accepted if it lowers the residual; otherwise damping is
/// raised tenfold and the step recomputed, so the residual trace never rises.
pub fn ik_numeric(
    tool: &ToolKinematics,
    target: &ToolPose,
    q_init: &[f64],
    opts: &DlsOptions,
) -> Result<IkSolution, IkError> {
    tool.check_limits(q_init)?;
    let mut q = q_init.to_vec();
    let (mut r, mut jac) = residual(tool, &q, target)?;
    let mut err = r.norm();
    let mut trace = vec![err];
    let mut clamped = false;
    let mut damping = opts.damping;
    let n = q.len();
    let mut iterations = 0;

    while err > opts.tolerance && iterations < opts.max_iterations {
        iterations += 1;
        // Joints resting on a limit and pushed further out by the descent
        // direction are frozen for this iteration.
        let grad = jac.transpose() * &r;
        let mut active = jac.clone();
        for (j, lim) in tool.joint_limits.iter().enumerate() {
            let at_min = q[j] <= lim.min && grad[j] > 0.0;
            let at_max = q[j] >= lim.max && grad[j] < 0.0;
            if at_min || at_max {
                active.column_mut(j).fill(0.0);
            }
        }
        let jt = active.transpose();
        let jtj = &jt * &active;
        let g = &jt * &r;
        let mut accepted = false;
        // Inner loop raises damping until a descent step is found.
        for _ in 0..12 {
            let lhs = &jtj + DMatrix::identity(n, n) * damping;
            let Some(step) = lhs.cholesky().map(|c| c.solve(&(-&g))) else {
                damping *= 10.0;
                continue;
            };
            let scale = (opts.max_step / step.amax()).min(1.0);
            let mut candidate = q.clone();
            let mut hit_limit = false;
            for (j, lim) in tool.joint_limits.iter().enumerate() {
                let raw = q[j] + scale * step[j];
                candidate[j] = lim.clamp(raw);
                hit_limit |= candidate[j] != raw;
            }
            let (r_new, jac_new) = residual(tool, &candidate, target)?;
            let err_new = r_new.norm();
            if err_new < err {
                q = candidate;
                r = r_new;
                jac = jac_new;
                err = err_new;
                clamped |= hit_limit;
                damping = (damping * 0.1).max(opts.damping);
                accepted = true;
                break;
            }
            damping *= 10.0;
        }
        trace.push(err);
        if !accepted {
            break;
        }
    }

    let solution = IkSolution {
        joints: q,
        residual: err,
        iterations,
        residual_trace: trace,
        clamped,
        converged: err <= opts.tolerance,
    };
    if solution.converged {
        Ok(solution)
    } else {
        Err(IkError::NoConvergence(Box::new(solution)))
    }
}

/// Direction that puts the suction wrist exactly at sin θ6 = 0 for a tip at
/// `position`. Useful for exercising the singular branch.
pub fn suction_singular_direction(position: &Vector3<f64>) -> Vector3<f64> {
    let theta1 = position.z.atan2(position.x);
    Vector3::new(theta1.sin(), 0.0, -theta1.cos())
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_q(tool: &ToolKinematics, rng: &mut impl Rng) -> Vec<f64> {
        tool.joint_limits
            .iter()
            .map(|l| rng.gen_range(l.min..=l.max))
            .collect()
    }

    #[test]
    fn suction_round_trip_small_sample() {
        let tool = ToolKinematics::suction_irrigation();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let q = random_q(&tool, &mut rng);
            let pose = tool.forward_kinematics(&q).unwrap();
            let back = ik_suction(&pose, &tool).unwrap();
            for (a, b) in q.iter().zip(&back) {
                assert!((a - b).abs() < 1e-6, "{q:?} vs {back:?}");
            }
        }
    }

    #[test]
    fn wrist_singularity_is_reported() {
        let tool = ToolKinematics::suction_irrigation();
        let pose = tool
            .forward_kinematics(&[0.2, 0.1, 0.12, 0.3, 0.4])
            .unwrap();
        let dir = suction_singular_direction(&pose.position);
        let singular = ToolPose::new(pose.position, dir).unwrap();
        assert!(matches!(
            ik_suction(&singular, &tool),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn first_axis_singularity_is_reported() {
        let tool = ToolKinematics::suction_irrigation();
        let pose =
            ToolPose::new(Vector3::new(0.0, -0.1, 0.0), Vector3::new(0.0, 1.0, 0.0)).unwrap();
        assert!(matches!(ik_suction(&pose, &tool), Err(Error::Singular(_))));
    }

    #[test]
    fn insertion_out_of_range_is_unreachable() {
        let tool = ToolKinematics::suction_irrigation();
        let mut q = vec![0.2, 0.1, 0.12, 0.3, 0.4];
        let unlimited = {
            let mut t = tool.clone();
            t.joint_limits[2].max = 10.0;
            t
        };
        q[2] = 0.5;
        let pose = unlimited.forward_kinematics(&q).unwrap();
        assert!(matches!(
            ik_suction(&pose, &tool),
            Err(Error::Unreachable(_))
        ));
    }

    #[test]
    fn wrong_tool_rejected() {
        let lnd = ToolKinematics::lnd();
        let pose = lnd.forward_kinematics(&lnd.mid_range()).unwrap();
        assert!(ik_suction(&pose, &lnd).is_err());
    }

    #[test]
    fn numeric_ik_starting_at_solution_takes_no_iterations() {
        let tool = ToolKinematics::lnd();
        let q = vec![0.1, -0.2, 0.1, 0.5, 0.2, -0.3];
        let pose = tool.forward_kinematics(&q).unwrap();
        let sol = ik_numeric(&tool, &pose, &q, &DlsOptions::default()).unwrap();
        assert!(sol.iterations <= 1);
        assert_eq!(sol.joints, q);
    }

    #[test]
    fn numeric_ik_lnd_from_mid_range() {
        let tool = ToolKinematics::lnd();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut solved = 0;
        for _ in 0..50 {
            let q = random_q(&tool, &mut rng);
            let pose = tool.forward_kinematics(&q).unwrap();
            if let Ok(sol) = ik_numeric(&tool, &pose, &tool.mid_range(), &DlsOptions::default()) {
                let fk = tool.forward_kinematics(&sol.joints).unwrap();
                assert!((fk.position - pose.position).norm() <= 1e-6);
                solved += 1;
            }
        }
        // DLS is local; a few targets need a roll branch far from mid-range.
        assert!(solved >= 45, "only {solved}/50 converged");
    }

    #[test]
    fn unreachable_target_reports_monotone_trace() {
        let tool = ToolKinematics::lnd();
        let target =
            ToolPose::new(Vector3::new(2.0, 2.0, 2.0), Vector3::new(0.0, 0.0, 1.0)).unwrap();
        match ik_numeric(&tool, &target, &tool.mid_range(), &DlsOptions::default()) {
            Err(IkError::NoConvergence(sol)) => {
                assert!(!sol.converged);
                assert!(sol.residual_trace.windows(2).all(|w| w[1] <= w[0]));
                assert!(tool.within_limits(&sol.joints));
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap(PI), PI);
        assert_eq!(wrap(-PI), PI);
        assert!((wrap(3.0 * PI / 2.0) + FRAC_PI_2).abs() < 1e-15);
    }
}
