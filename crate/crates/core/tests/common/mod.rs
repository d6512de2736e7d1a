//! Oracles shared by the integration and acceptance tests. They deliberately
//! avoid the library's own matrix code.

#![allow(dead_code)]

use dvrl::kinematics::ToolKinematics;
use dvrl::neural::Mlp;
use ndarray::Array2;
use rand::Rng;
use std::f64::consts::FRAC_PI_2;

pub type Mat4 = [[f64; 4]; 4];

fn matmul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

/// Closed form of `Trans_x(a)·Rot_x(alpha)·Trans_z(d)·Rot_z(theta)`.
pub fn modified_dh(a: f64, alpha: f64, d: f64, theta: f64) -> Mat4 {
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = alpha.sin_cos();
    [
        [ct, -st, 0.0, a],
        [st * ca, ct * ca, -sa, -sa * d],
        [st * sa, ct * sa, ca, ca * d],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

/// `(a, alpha, d, theta)` per frame, transcribed from the DH table of each
/// tool with the given link lengths.
pub fn dh_table(tool: &ToolKinematics, q: &[f64]) -> Vec<(f64, f64, f64, f64)> {
    let l = |name: &str| tool.link(name).expect("link length");
    match q.len() {
        6 => vec![
            (0.0, FRAC_PI_2, 0.0, q[0] + FRAC_PI_2),
            (0.0, -FRAC_PI_2, 0.0, q[1] - FRAC_PI_2),
            (0.0, FRAC_PI_2, q[2] - l("l1"), 0.0),
            (0.0, 0.0, l("l3"), q[3]),
            (0.0, -FRAC_PI_2, 0.0, q[4] - FRAC_PI_2),
            (l("l4"), -FRAC_PI_2, 0.0, q[5] - FRAC_PI_2),
        ],
        5 => vec![
            (0.0, FRAC_PI_2, 0.0, q[0] + FRAC_PI_2),
            (0.0, -FRAC_PI_2, 0.0, q[1] - FRAC_PI_2),
            (0.0, FRAC_PI_2, q[2] - l("l2"), 0.0),
            (0.0, -FRAC_PI_2, 0.0, q[3] - FRAC_PI_2),
            (l("l5"), -FRAC_PI_2, 0.0, q[4] - FRAC_PI_2),
        ],
        n => panic!("no DH table for {n} joints"),
    }
}

/// Base-to-tip transform by explicit chaining of the closed-form rows.
pub fn oracle_transform(tool: &ToolKinematics, q: &[f64]) -> Mat4 {
    let mut t = [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ];
    for (a, alpha, d, theta) in dh_table(tool, q) {
        t = matmul(&t, &modified_dh(a, alpha, d, theta));
    }
    t
}

/// Tip position and tool axis (second rotation column) from the oracle.
pub fn oracle_pose(tool: &ToolKinematics, q: &[f64]) -> ([f64; 3], [f64; 3]) {
    let t = oracle_transform(tool, q);
    ([t[0][3], t[1][3], t[2][3]], [t[0][1], t[1][1], t[2][1]])
}

pub fn random_joints(tool: &ToolKinematics, rng: &mut impl Rng) -> Vec<f64> {
    tool.joint_limits
        .iter()
        .map(|l| rng.gen_range(l.min..=l.max))
        .collect()
}

/// Suction joints away from the wrist singularity `|sin theta6| <= 1e-3`,
/// where `theta6 = q5 - pi/2`.
pub fn random_nonsingular_suction(tool: &ToolKinematics, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let q = random_joints(tool, rng);
        if (q[4] - FRAC_PI_2).sin().abs() > 1e-3 {
            return q;
        }
    }
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Worst relative error between backpropagated and central-difference
/// gradients of `sum(w ⊙ net(x))`, over every parameter and input entry.
pub fn gradient_check(net: &Mlp, x: &Array2<f64>, w: &Array2<f64>, h: f64) -> f64 {
    let objective = |n: &Mlp, x: &Array2<f64>| -> f64 {
        (&n.forward_batch(x.view()).unwrap().output * w).sum()
    };
    let cache = net.forward_batch(x.view()).unwrap();
    let (grads, dx) = net.backward(&cache, w.view()).unwrap();
    let rel = |g: f64, n: f64| (g - n).abs() / g.abs().max(n.abs()).max(1e-6);
    let mut worst = 0.0f64;
    for (li, layer) in net.layers.iter().enumerate() {
        for idx in 0..layer.weight.len() + layer.bias.len() {
            let shifted = |delta: f64| {
                let mut n = net.clone();
                let l = &mut n.layers[li];
                if idx < layer.weight.len() {
                    let cols = l.weight.ncols();
                    l.weight[[idx / cols, idx % cols]] += delta;
                } else {
                    l.bias[idx - layer.weight.len()] += delta;
                }
                objective(&n, x)
            };
            let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
            let analytic = if idx < layer.weight.len() {
                let cols = layer.weight.ncols();
                grads[li].weight[[idx / cols, idx % cols]]
            } else {
                grads[li].bias[idx - layer.weight.len()]
            };
            worst = worst.max(rel(analytic, numeric));
        }
    }
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let mut plus = x.clone();
            plus[[i, j]] += h;
            let mut minus = x.clone();
            minus[[i, j]] -= h;
            let numeric = (objective(net, &plus) - objective(net, &minus)) / (2.0 * h);
            worst = worst.max(rel(dx[[i, j]], numeric));
        }
    }
    worst
}
