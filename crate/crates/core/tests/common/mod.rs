//! Reference implementations written independently of the library, used as
//! test oracles.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::Rng;
use shaped_transfer::nn::{Activation, DenseNet};

/// Pendulum step in the textbook form: returns `(theta', theta_dot', reward)`.
pub fn pendulum_oracle(theta: f64, theta_dot: f64, u: f64) -> (f64, f64, f64) {
    let (g, m, l, dt) = (10.0, 1.0, 1.0, 0.05);
    let u = u.max(-2.0).min(2.0);
    let wrapped = {
        let two_pi = 2.0 * PI;
        let y = theta + PI;
        y - two_pi * (y / two_pi).floor() - PI
    };
    let cost = wrapped * wrapped + 0.1 * theta_dot * theta_dot + 0.001 * u * u;
    let mut new_dot = theta_dot + (3.0 * g / (2.0 * l) * theta.sin() + 3.0 / (m * l * l) * u) * dt;
    new_dot = new_dot.max(-8.0).min(8.0);
    (theta + new_dot * dt, new_dot, -cost)
}

/// Acrobot equations of motion with gravity written through `cos(x - pi/2)`.
fn acrobot_dsdt(s: [f64; 5]) -> [f64; 5] {
    let (m1, m2, l1, lc1, lc2, i1, i2, g): (f64, f64, f64, f64, f64, f64, f64, f64) = (1.0, 1.0, 1.0, 0.5, 0.5, 1.0, 1.0, 9.8);
    let a = s[4];
    let (t1, t2, dt1, dt2) = (s[0], s[1], s[2], s[3]);
    let d1 = m1 * lc1.powi(2) + m2 * (l1.powi(2) + lc2.powi(2) + 2.0 * l1 * lc2 * t2.cos()) + i1 + i2;
    let d2 = m2 * (lc2.powi(2) + l1 * lc2 * t2.cos()) + i2;
    let phi2 = m2 * lc2 * g * (t1 + t2 - PI / 2.0).cos();
    let phi1 = -m2 * l1 * lc2 * dt2.powi(2) * t2.sin() - 2.0 * m2 * l1 * lc2 * dt2 * dt1 * t2.sin()
        + (m1 * lc1 + m2 * l1) * g * (t1 - PI / 2.0).cos()
        + phi2;
    let ddt2 = (a + d2 / d1 * phi1 - m2 * l1 * lc2 * dt1.powi(2) * t2.sin() - phi2) / (m2 * lc2.powi(2) + i2 - d2.powi(2) / d1);
    let ddt1 = -(d2 * ddt2 + phi1) / d1;
    [dt1, dt2, ddt1, ddt2, 0.0]
}

fn gym_wrap(mut x: f64, m: f64, big_m: f64) -> f64 {
    let diff = big_m - m;
    while x > big_m {
        x -= diff;
    }
    while x < m {
        x += diff;
    }
    x
}

/// One acrobot step: RK4 over the augmented state, wrap, clamp. Returns the
/// next state and the terminal flag.
pub fn acrobot_oracle(s: [f64; 4], torque: f64) -> ([f64; 4], bool) {
    let dt = 0.2;
    let y0 = [s[0], s[1], s[2], s[3], torque];
    let add = |y: [f64; 5], k: [f64; 5], h: f64| {
        let mut r = y;
        for i in 0..5 {
            r[i] += h * k[i];
        }
        r
    };
    let k1 = acrobot_dsdt(y0);
    let k2 = acrobot_dsdt(add(y0, k1, dt / 2.0));
    let k3 = acrobot_dsdt(add(y0, k2, dt / 2.0));
    let k4 = acrobot_dsdt(add(y0, k3, dt));
    let mut ns = [0.0; 4];
    for i in 0..4 {
        ns[i] = y0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    ns[0] = gym_wrap(ns[0], -PI, PI);
    ns[1] = gym_wrap(ns[1], -PI, PI);
    ns[2] = ns[2].max(-4.0 * PI).min(4.0 * PI);
    ns[3] = ns[3].max(-9.0 * PI).min(9.0 * PI);
    let terminal = -ns[0].cos() - (ns[1] + ns[0]).cos() > 1.0;
    (ns, terminal)
}

/// Cosine-weighted mean of `values`, evaluated term by term.
pub fn potential_oracle(z: &[f64], embeddings: &[Vec<f64>], values: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nz = norm(z);
    let mut acc = 0.0;
    for (e, q) in embeddings.iter().zip(values) {
        let ne = norm(e);
        let cos = if nz < 1e-12 || ne < 1e-12 {
            0.0
        } else {
            z.iter().zip(e).map(|(a, b)| a * b).sum::<f64>() / (nz * ne)
        };
        acc += cos * q;
    }
    acc / embeddings.len() as f64
}

pub fn act(a: Activation, x: f64) -> f64 {
    match a {
        Activation::Relu => {
            if x > 0.0 {
                x
            } else {
                0.0
            }
        }
        Activation::Tanh => x.tanh(),
        Activation::Identity => x,
    }
}

/// Forward pass by explicit matrix-vector products, returning every layer's
/// pre-activation and output.
pub fn forward_oracle(net: &DenseNet, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut pre = Vec::new();
    let mut h = x.to_vec();
    for layer in net.layers() {
        let (n_out, n_in) = (layer.out_dim(), layer.in_dim());
        let w = layer.weights();
        let mut z = vec![0.0; n_out];
        for i in 0..n_out {
            let mut s = layer.bias()[i];
            for j in 0..n_in {
                s += w[i * n_in + j] * h[j];
            }
            z[i] = s;
        }
        h = z.iter().map(|&v| act(layer.activation(), v)).collect();
        pre.push(z);
    }
    (pre, h)
}

/// A random small network: 1 to 3 hidden layers, widths 1 to 8.
pub fn random_net<R: Rng>(rng: &mut R, hidden: Activation) -> DenseNet {
    let depth = rng.random_range(1..=3);
    let mut sizes = vec![rng.random_range(1..=6)];
    for _ in 0..depth {
        sizes.push(rng.random_range(1..=8));
    }
    sizes.push(rng.random_range(1..=4));
    DenseNet::random(&sizes, hidden, rng).unwrap()
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Relative difference with a floor on the denominator for near-zero values.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}
