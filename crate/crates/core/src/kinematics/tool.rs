use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

const LND_TOML: &str = include_str!("../../tools/lnd.toml");
const SUCTION_TOML: &str = include_str!("../../tools/suction_irrigation.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointKind {
    Revolute,
    Prismatic,
}

/// Which joint variable enters a row, and how: `value = offset + sign * q[index]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointBinding {
    /// Zero-based index into the tool's joint vector.
    pub index: usize,
    pub kind: JointKind,
    pub sign: f64,
}

/// One row of a DH table. A row is applied as
/// `Trans_x(a) * Rot_x(alpha) * Trans_z(d) * Rot_z(theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DhRow {
    /// Frame label as printed in the tool's table (not necessarily contiguous).
    pub frame: u32,
    pub a: f64,
    pub alpha: f64,
    pub d_offset: f64,
    pub theta_offset: f64,
    pub binding: Option<JointBinding>,
}

impl DhRow {
    pub fn fixed(a: f64, alpha: f64, d_offset: f64, theta_offset: f64) -> Self {
        Self {
            frame: 0,
            a,
            alpha,
            d_offset,
            theta_offset,
            binding: None,
        }
    }

    /// Effective `(d, theta)` for the given joint vector.
    pub fn resolve(&self, q: &[f64]) -> (f64, f64) {
        match self.binding {
            None => (self.d_offset, self.theta_offset),
            Some(b) => {
                let v = b.sign * q[b.index];
                match b.kind {
                    JointKind::Prismatic => (self.d_offset + v, self.theta_offset),
                    JointKind::Revolute => (self.d_offset, self.theta_offset + v),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimit {
    pub min: f64,
    pub max: f64,
}

impl JointLimit {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.min + self.max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolKinematics {
    pub name: String,
    pub rows: Vec<DhRow>,
    pub link_lengths: BTreeMap<String, f64>,
    pub joint_limits: Vec<JointLimit>,
    /// Source expressions for `(a, alpha, d_offset, theta_offset)` per row and
    /// `(min, max)` per limit, kept so lengths can be overridden and re-resolved.
    row_exprs: Vec<[Quantity; 4]>,
    limit_exprs: Vec<[Quantity; 2]>,
}

impl ToolKinematics {
    pub fn lnd() -> Self {
        Self::from_toml_str(LND_TOML).expect("bundled LND definition is valid")
    }

    pub fn suction_irrigation() -> Self {
        Self::from_toml_str(SUCTION_TOML).expect("bundled suction definition is valid")
    }

    /// Looks up a bundled tool by a loose name (`lnd`, `suction`, ...).
    pub fn builtin(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "lnd" | "large_needle_driver" => Some(Self::lnd()),
            "suction" | "suctionirrigation" | "suction_irrigation" => {
                Some(Self::suction_irrigation())
            }
            _ => None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn num_joints(&self) -> usize {
        self.joint_limits.len()
    }

    pub fn link(&self, name: &str) -> Result<f64> {
        self.link_lengths
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("tool {} has no link length {name}", self.name)))
    }

    pub fn mid_range(&self) -> Vec<f64> {
        self.joint_limits.iter().map(JointLimit::mid).collect()
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.len() == self.num_joints()
            && q.iter()
                .zip(&self.joint_limits)
                .all(|(v, l)| l.contains(*v))
    }

    pub fn check_limits(&self, q: &[f64]) -> Result<()> {
        for (joint, (&value, lim)) in q.iter().zip(&self.joint_limits).enumerate() {
            if !lim.contains(value) {
                return Err(Error::JointLimit {
                    joint,
                    value,
                    min: lim.min,
                    max: lim.max,
                });
            }
        }
        Ok(())
    }

    /// Returns a copy with one link length replaced; rows referencing the
    /// length are rebuilt.
    pub fn with_link(&self, name: &str, value: f64) -> Result<Self> {
        let mut file: ToolFile =
            toml::from_str(&self.to_toml_string()).map_err(|e| Error::Config(e.to_string()))?;
        if !file.lengths.contains_key(name) {
            return Err(Error::Config(format!("unknown link length {name}")));
        }
        file.lengths.insert(name.to_string(), value);
        file.build()
    }

    pub fn from_toml_str(src: &str) -> Result<Self> {
        let file: ToolFile = toml::from_str(src).map_err(|e| Error::Config(e.to_string()))?;
        file.build()
    }

    /// Serializes back into the tool-definition format, preserving expressions.
    pub fn to_toml_string(&self) -> String {
        use std::fmt::Write;
        let mut out = format!("name = {:?}\n\n[lengths]\n", self.name);
        for (k, v) in &self.link_lengths {
            let _ = writeln!(out, "{k} = {v:?}");
        }
        for (row, [a, alpha, d, theta]) in self.rows.iter().zip(&self.row_exprs) {
            let _ = write!(
                out,
                "\n[[frame]]\nframe = {}\na = {a}\nalpha = {alpha}\nd_offset = {d}\ntheta_offset = {theta}\n",
                row.frame
            );
            if let Some(b) = row.binding {
                let kind = match b.kind {
                    JointKind::Revolute => "revolute",
                    JointKind::Prismatic => "prismatic",
                };
                let _ = write!(
                    out,
                    "joint = {}\njoint_kind = \"{kind}\"\njoint_sign = {:?}\n",
                    b.index + 1,
                    b.sign
                );
            }
        }
        for [min, max] in &self.limit_exprs {
            let _ = write!(out, "\n[[limit]]\nmin = {min}\nmax = {max}\n");
        }
        out
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ToolFile {
    name: String,
    #[serde(default)]
    lengths: BTreeMap<String, f64>,
    #[serde(rename = "frame")]
    frames: Vec<FrameSpec>,
    #[serde(rename = "limit", default)]
    limits: Vec<LimitSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameSpec {
    frame: u32,
    #[serde(default)]
    a: Quantity,
    #[serde(default)]
    alpha: Quantity,
    #[serde(default)]
    d_offset: Quantity,
    #[serde(default)]
    theta_offset: Quantity,
    /// One-based joint number.
    joint: Option<usize>,
    joint_kind: Option<String>,
    joint_sign: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitSpec {
    min: Quantity,
    max: Quantity,
}

/// A number, or a small expression such as `pi/2`, `-l1`, `2*pi`.
#[derive(Deserialize, Clone, Debug, PartialEq)]
#[serde(untagged)]
enum Quantity {
    Number(f64),
    Expr(String),
}

impl std::fmt::Display for Quantity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Quantity::Number(v) => write!(f, "{v:?}"),
            Quantity::Expr(s) => write!(f, "{s:?}"),
        }
    }
}

impl Default for Quantity {
    fn default() -> Self {
        Quantity::Number(0.0)
    }
}

impl Quantity {
    fn eval(&self, lengths: &BTreeMap<String, f64>) -> Result<f64> {
        let expr = match self {
            Quantity::Number(v) => return Ok(*v),
            Quantity::Expr(s) => s.replace(' ', ""),
        };
        let bad = || Error::Config(format!("cannot evaluate tool quantity {expr:?}"));
        let (sign, body) = match expr.strip_prefix('-') {
            Some(rest) => (-1.0, rest),
            None => (1.0, expr.strip_prefix('+').unwrap_or(&expr)),
        };
        let (num, den) = match body.split_once('/') {
            Some((n, d)) => (n, Some(d.parse::<f64>().map_err(|_| bad())?)),
            None => (body, None),
        };
        let product = num
            .split('*')
            .map(|term| match term {
                "pi" => Ok(PI),
                t => t
                    .parse::<f64>()
                    .ok()
                    .or_else(|| lengths.get(t).copied())
                    .ok_or_else(bad),
            })
            .product::<Result<f64>>()?;
        Ok(sign * product / den.unwrap_or(1.0))
    }
}

impl ToolFile {
    fn build(self) -> Result<ToolKinematics> {
        for (k, v) in &self.lengths {
            if !(v.is_finite() && *v > 0.0) {
                return Err(Error::Config(format!("link length {k} must be positive")));
            }
        }
        let mut rows = Vec::with_capacity(self.frames.len());
        let mut bound = Vec::new();
        for f in &self.frames {
            let binding = match f.joint {
                None => None,
                Some(0) => return Err(Error::Config("joint numbers start at 1".into())),
                Some(n) => {
                    let kind = match f.joint_kind.as_deref().unwrap_or("revolute") {
                        "revolute" => JointKind::Revolute,
                        "prismatic" => JointKind::Prismatic,
                        other => return Err(Error::Config(format!("unknown joint kind {other}"))),
                    };
                    bound.push(n - 1);
                    Some(JointBinding {
                        index: n - 1,
                        kind,
                        sign: f.joint_sign.unwrap_or(1.0),
                    })
                }
            };
            let alpha = f.alpha.eval(&self.lengths)?;
            let theta_offset = f.theta_offset.eval(&self.lengths)?;
            for angle in [alpha, theta_offset] {
                if !(angle > -PI && angle <= PI) {
                    return Err(Error::Config(format!(
                        "frame {} angle {angle} outside (-pi, pi]",
                        f.frame
                    )));
                }
            }
            rows.push(DhRow {
                frame: f.frame,
                a: f.a.eval(&self.lengths)?,
                alpha,
                d_offset: f.d_offset.eval(&self.lengths)?,
                theta_offset,
                binding,
            });
        }
        let n_joints = bound.len();
        let mut sorted = bound.clone();
        sorted.sort_unstable();
        if sorted != (0..n_joints).collect::<Vec<_>>() {
            return Err(Error::Config(
                "joint bindings must number each joint 1..n exactly once".into(),
            ));
        }
        let row_exprs = self
            .frames
            .iter()
            .map(|f| {
                [
                    f.a.clone(),
                    f.alpha.clone(),
                    f.d_offset.clone(),
                    f.theta_offset.clone(),
                ]
            })
            .collect();
        let limit_exprs = self
            .limits
            .iter()
            .map(|l| [l.min.clone(), l.max.clone()])
            .collect();
        let joint_limits = if self.limits.is_empty() {
            vec![
                JointLimit {
                    min: f64::NEG_INFINITY,
                    max: f64::INFINITY
                };
                n_joints
            ]
        } else {
            if self.limits.len() != n_joints {
                return Err(Error::dim("joint limits", n_joints, self.limits.len()));
            }
            self.limits
                .iter()
                .map(|l| {
                    let lim = JointLimit {
                        min: l.min.eval(&self.lengths)?,
                        max: l.max.eval(&self.lengths)?,
                    };
                    if lim.min > lim.max {
                        return Err(Error::Config(format!(
                            "joint limit min {} exceeds max {}",
                            lim.min, lim.max
                        )));
                    }
                    Ok(lim)
                })
                .collect::<Result<_>>()?
        };
        Ok(ToolKinematics {
            name: self.name,
            rows,
            link_lengths: self.lengths,
            joint_limits,
            row_exprs,
            limit_exprs,
        })
    }
}
