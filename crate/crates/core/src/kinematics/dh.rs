use nalgebra::{Matrix4, Vector3};

use super::tool::{DhRow, JointKind, ToolKinematics};
use crate::error::{Error, Result};

/// Pose of the tool tip in the base frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToolPose {
    pub position: Vector3<f64>,
    /// Unit tool-axis direction: the y-axis of the final DH frame.
    pub direction: Vector3<f64>,
}

impl ToolPose {
    /// Builds a pose, normalizing `direction`.
    pub fn new(position: Vector3<f64>, direction: Vector3<f64>) -> Result<Self> {
        let norm = direction.norm();
        if !(norm.is_finite() && norm > 1e-12) || !position.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("tool pose"));
        }
        Ok(Self {
            position,
            direction: direction / norm,
        })
    }
}

fn trans_x(a: f64) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m[(0, 3)] = a;
    m
}

fn trans_z(d: f64) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m[(2, 3)] = d;
    m
}

fn rot_x(alpha: f64) -> Matrix4<f64> {
    let (s, c) = alpha.sin_cos();
    let mut m = Matrix4::identity();
    m[(1, 1)] = c;
    m[(1, 2)] = -s;
    m[(2, 1)] = s;
    m[(2, 2)] = c;
    m
}

fn rot_z(theta: f64) -> Matrix4<f64> {
    let (s, c) = theta.sin_cos();
    let mut m = Matrix4::identity();
    m[(0, 0)] = c;
    m[(0, 1)] = -s;
    m[(1, 0)] = s;
    m[(1, 1)] = c;
    m
}

/// The x-side half of a row, `Trans_x(a) * Rot_x(alpha)`. Its z-axis is the
/// joint axis of the row.
fn row_pre(row: &DhRow) -> Matrix4<f64> {
    trans_x(row.a) * rot_x(row.alpha)
}

/// Homogeneous transform of one DH row at joint vector `q`.
///
/// `q` is the full joint vector of the tool; only the bound entry is read.
pub fn dh_transform(row: &DhRow, q: &[f64]) -> Matrix4<f64> {
    let (d, theta) = row.resolve(q);
    row_pre(row) * trans_z(d) * rot_z(theta)
}

impl ToolKinematics {
    fn check_dim(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.num_joints() {
            return Err(Error::dim("joint vector", self.num_joints(), q.len()));
        }
        if !q.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("joint vector"));
        }
        Ok(())
    }

    /// Full base-to-tip transform.
    pub fn transform(&self, q: &[f64]) -> Result<Matrix4<f64>> {
        self.check_dim(q)?;
        Ok(self
            .rows
            .iter()
            .fold(Matrix4::identity(), |acc, row| acc * dh_transform(row, q)))
    }

    pub fn forward_kinematics(&self, q: &[f64]) -> Result<ToolPose> {
        let t = self.transform(q)?;
        Ok(pose_of(&t))
    }

    /// Like [`forward_kinematics`](Self::forward_kinematics) but rejects joint
    /// values outside the configured limits.
    pub fn forward_kinematics_checked(&self, q: &[f64]) -> Result<ToolPose> {
        self.check_dim(q)?;
        self.check_limits(q)?;
        self.forward_kinematics(q)
    }

    /// Pose plus its 6×n Jacobian (rows: position xyz, direction xyz).
    pub fn pose_jacobian(&self, q: &[f64]) -> Result<(ToolPose, nalgebra::DMatrix<f64>)> {
        self.check_dim(q)?;
        // Joint axes are collected while walking the chain.
        let mut axes =
            vec![(JointKind::Revolute, Vector3::zeros(), Vector3::zeros(), 0.0); q.len()];
        let mut acc: Matrix4<f64> = Matrix4::identity();
        for row in &self.rows {
            let pre: Matrix4<f64> = acc * row_pre(row);
            if let Some(b) = row.binding {
                let z = pre.fixed_view::<3, 1>(0, 2).into_owned();
                let o = pre.fixed_view::<3, 1>(0, 3).into_owned();
                axes[b.index] = (b.kind, z, o, b.sign);
            }
            let (d, theta) = row.resolve(q);
            acc = pre * trans_z(d) * rot_z(theta);
        }
        let pose = pose_of(&acc);
        let mut jac = nalgebra::DMatrix::zeros(6, q.len());
        for (j, (kind, z, o, sign)) in axes.into_iter().enumerate() {
            let (dp, dv) = match kind {
                JointKind::Prismatic => (z, Vector3::zeros()),
                JointKind::Revolute => (z.cross(&(pose.position - o)), z.cross(&pose.direction)),
            };
            jac.fixed_view_mut::<3, 1>(0, j).copy_from(&(dp * sign));
            jac.fixed_view_mut::<3, 1>(3, j).copy_from(&(dv * sign));
        }
        Ok((pose, jac))
    }
}

fn pose_of(t: &Matrix4<f64>) -> ToolPose {
    ToolPose {
        position: t.fixed_view::<3, 1>(0, 3).into_owned(),
        direction: t.fixed_view::<3, 1>(0, 1).into_owned(),
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use super::*;

    #[test]
    fn zero_row_is_identity() {
        let row = DhRow::fixed(0.0, 0.0, 0.0, 0.0);
        assert_eq!(dh_transform(&row, &[]), Matrix4::identity());
    }

    #[test]
    fn lnd_frame3_offset_cancels() {
        let lnd = ToolKinematics::lnd();
        let l1 = lnd.link("l1").unwrap();
        let t = dh_transform(&lnd.rows[2], &[0.0, 0.0, l1, 0.0, 0.0, 0.0]);
        // alpha = pi/2 remains, so only the translation is checked exactly;
        // the rotation is Rot_x(pi/2).
        assert!((t.fixed_view::<3, 1>(0, 3)).norm() < 1e-15);
        let expected = rot_x(FRAC_PI_2);
        assert!((t - expected).amax() < 1e-15);
    }

    #[test]
    fn lnd_frame1_matches_hand_product() {
        // Rot_x(pi/2) * Rot_z(pi/2) multiplied out by hand:
        // Rot_x(pi/2) = [[1,0,0],[0,0,-1],[0,1,0]], Rot_z(pi/2) = [[0,-1,0],[1,0,0],[0,0,1]]
        // product    = [[0,-1,0],[0,0,-1],[1,0,0]]
        let lnd = ToolKinematics::lnd();
        let t = dh_transform(&lnd.rows[0], &[0.0; 6]);
        let hand = [[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]];
        for (r, row) in hand.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                assert!((t[(r, c)] - v).abs() < 1e-15, "({r},{c})");
            }
        }
    }

    #[test]
    fn dimension_and_limits_checked() {
        let tool = ToolKinematics::suction_irrigation();
        assert!(matches!(
            tool.forward_kinematics(&[0.0; 4]),
            Err(Error::Dimension { .. })
        ));
        let q = [0.0, 0.0, 0.5, 0.0, 0.0];
        assert!(tool.forward_kinematics(&q).is_ok());
        assert!(matches!(
            tool.forward_kinematics_checked(&q),
            Err(Error::JointLimit { joint: 2, .. })
        ));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for tool in [ToolKinematics::lnd(), ToolKinematics::suction_irrigation()] {
            let q: Vec<f64> = tool
                .joint_limits
                .iter()
                .enumerate()
                .map(|(i, l)| l.min + (l.max - l.min) * (0.3 + 0.07 * i as f64))
                .collect();
            let (_, jac) = tool.pose_jacobian(&q).unwrap();
            let h = 1e-6;
            for j in 0..q.len() {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[j] += h;
                qm[j] -= h;
                let p = tool.forward_kinematics(&qp).unwrap();
                let m = tool.forward_kinematics(&qm).unwrap();
                let dp = (p.position - m.position) / (2.0 * h);
                let dv = (p.direction - m.direction) / (2.0 * h);
                for r in 0..3 {
                    assert!(
                        (jac[(r, j)] - dp[r]).abs() < 1e-7,
                        "{} dp {r},{j}",
                        tool.name
                    );
                    assert!(
                        (jac[(r + 3, j)] - dv[r]).abs() < 1e-7,
                        "{} dv {r},{j}",
                        tool.name
                    );
                }
            }
        }
    }
}
