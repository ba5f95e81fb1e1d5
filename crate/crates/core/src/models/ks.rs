//! Periodic tanh network for Kuramoto–Sivashinsky  u_t = −u u_x − u_xx − u_xxxx.
//!
//! û(x) = Σ a_i tanh(w_i sin(kx + c_i) + b_i) with k = 2π/L, so û is
//! L-periodic for every θ. Node i occupies θ[4i..4i+4] = (a, w, b, c).

use std::f64::consts::PI;

use crate::sms::{Domain, Point, SmsModel};

/// Parameters per node.
pub const KS_NODE_PARAMS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsNetwork {
    pub nodes: usize,
    pub length: f64,
}

impl KsNetwork {
    pub fn new(nodes: usize, length: f64) -> Self {
        Self { nodes, length }
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// û and its first four x-derivatives.
    ///
    /// With T = tanh(z) the tanh derivatives are polynomials in T:
    ///   T1 = 1 − T², T2 = −2T T1, T3 = −2 + 8T² − 6T⁴, T4 = (16T − 24T³) T1.
    /// For z = w sin(kx + c) + b:
    ///   z' = wk cos, z'' = −wk² sin, z''' = −wk³ cos, z'''' = wk⁴ sin,
    /// and Faà di Bruno gives
    ///   D1 = T1 z'
    ///   D2 = T2 z'² + T1 z''
    ///   D3 = T3 z'³ + 3 T2 z' z'' + T1 z'''
    ///   D4 = T4 z'⁴ + 6 T3 z'² z'' + T2 (3 z''² + 4 z' z''') + T1 z''''.
    pub fn derivatives(&self, x: f64, theta: &[f64]) -> [f64; 5] {
        let k = self.wavenumber();
        let mut d = [0.0; 5];
        for node in theta.chunks_exact(KS_NODE_PARAMS) {
            let (a, w, b, c) = (node[0], node[1], node[2], node[3]);
            let (s, co) = (k * x + c).sin_cos();
            let t = (w * s + b).tanh();
            let t2 = t * t;
            let t1 = 1.0 - t2;
            let tt2 = -2.0 * t * t1;
            let tt3 = -2.0 + 8.0 * t2 - 6.0 * t2 * t2;
            let tt4 = (16.0 * t - 24.0 * t * t2) * t1;
            let z1 = w * k * co;
            let z2 = -w * k * k * s;
            let z3 = -w * k * k * k * co;
            let z4 = w * k * k * k * k * s;
            d[0] += a * t;
            d[1] += a * t1 * z1;
            d[2] += a * (tt2 * z1 * z1 + t1 * z2);
            d[3] += a * (tt3 * z1 * z1 * z1 + 3.0 * tt2 * z1 * z2 + t1 * z3);
            d[4] += a * (tt4 * z1.powi(4) + 6.0 * tt3 * z1 * z1 * z2 + tt2 * (3.0 * z2 * z2 + 4.0 * z1 * z3) + t1 * z4);
        }
        d
    }
}

impl SmsModel for KsNetwork {
    type Value = f64;

    fn param_count(&self) -> usize {
        KS_NODE_PARAMS * self.nodes
    }

    fn domain(&self) -> Domain {
        Domain::interval(-0.5 * self.length, 0.5 * self.length, true)
    }

    fn eval(&self, x: &Point, theta: &[f64]) -> f64 {
        let k = self.wavenumber();
        theta
            .chunks_exact(KS_NODE_PARAMS)
            .map(|n| n[0] * (n[1] * (k * x[0] + n[3]).sin() + n[2]).tanh())
            .sum()
    }

    fn grad_theta(&self, x: &Point, theta: &[f64], out: &mut [f64]) {
        let k = self.wavenumber();
        for (node, g) in theta.chunks_exact(KS_NODE_PARAMS).zip(out.chunks_exact_mut(KS_NODE_PARAMS)) {
            let (a, w, b, c) = (node[0], node[1], node[2], node[3]);
            let (s, co) = (k * x[0] + c).sin_cos();
            let t = (w * s + b).tanh();
            let at1 = a * (1.0 - t * t);
            g[0] = t;
            g[1] = at1 * s;
            g[2] = at1;
            g[3] = at1 * w * co;
        }
    }

    fn pde_rhs(&self, x: &Point, theta: &[f64], _t: f64) -> f64 {
        let d = self.derivatives(x[0], theta);
        -d[0] * d[1] - d[2] - d[4]
    }
}

/// Unnormalized initial condition sin(kx) + Σ_{j=2..4} [sin(jkx) + cos(jkx)], k = 2π/L.
pub fn ks_initial_raw(x: f64, length: f64) -> f64 {
    let k = 2.0 * PI / length;
    let mut u = (k * x).sin();
    for j in 2..=4 {
        let jk = j as f64 * k;
        u += (jk * x).sin() + (jk * x).cos();
    }
    u
}

/// max |u0*| over one period, from 10⁵ uniform samples.
pub fn ks_initial_scale(length: f64) -> f64 {
    const SAMPLES: usize = 100_000;
    (0..SAMPLES)
        .map(|i| ks_initial_raw(i as f64 * length / SAMPLES as f64, length).abs())
        .fold(0.0, f64::max)
}

/// Initial condition rescaled to unit maximum amplitude.
pub fn ks_initial_condition(length: f64) -> impl Fn(f64) -> f64 {
    let scale = ks_initial_scale(length);
    move |x| ks_initial_raw(x, length) / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> Vec<f64> {
        vec![0.7, 1.3, -0.2, 0.4, -0.5, 0.8, 0.3, 2.1, 0.25, -1.6, 0.6, -0.9]
    }

    #[test]
    fn zero_amplitudes_vanish() {
        let m = KsNetwork::new(2, 22.0);
        let th = [0.0, 1.0, 0.5, 0.1, 0.0, -2.0, 0.3, 1.0];
        assert_eq!(m.derivatives(3.3, &th), [0.0; 5]);
        assert_eq!(m.pde_rhs(&[3.3, 0.0], &th, 0.0), 0.0);
    }

    #[test]
    fn periodic() {
        let m = KsNetwork::new(3, 22.0);
        let th = params();
        for i in 0..100 {
            let x = -11.0 + 0.2173 * i as f64;
            let a = m.eval(&[x, 0.0], &th);
            let b = m.eval(&[x + 22.0, 0.0], &th);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let m = KsNetwork::new(3, 22.0);
        let th = params();
        let f = |x: f64| m.eval(&[x, 0.0], &th);
        let h = 1e-2;
        for x in [-7.1, 0.0, 2.4, 9.9] {
            let d = m.derivatives(x, &th);
            let d4 = (f(x - 2.0 * h) - 4.0 * f(x - h) + 6.0 * f(x) - 4.0 * f(x + h) + f(x + 2.0 * h)) / h.powi(4);
            assert!((d[4] - d4).abs() <= 1e-4 * d[4].abs().max(1e-2), "x={x}: {} vs {d4}", d[4]);
            let h1 = 1e-4;
            let d1 = (f(x + h1) - f(x - h1)) / (2.0 * h1);
            let d2 = (f(x + h1) - 2.0 * f(x) + f(x - h1)) / (h1 * h1);
            assert!((d[1] - d1).abs() < 1e-7);
            assert!((d[2] - d2).abs() < 1e-5);
        }
    }

    #[test]
    fn single_node_rhs_at_origin() {
        // û = tanh(sin(kx)). At x = 0, T = 0 and z'' = z'''' = 0, so û = û_xx = û_xxxx = 0.
        let m = KsNetwork::new(1, 22.0);
        let th = [1.0, 1.0, 0.0, 0.0];
        assert!(m.pde_rhs(&[0.0, 0.0], &th, 0.0).abs() < 1e-15);
        // away from the origin compare with a high-order FD oracle
        let f = |x: f64| (m.wavenumber() * x).sin().tanh();
        let x = 1.7;
        let h = 2e-2;
        let d1 = (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h);
        let d2 = (-f(x - 2.0 * h) + 16.0 * f(x - h) - 30.0 * f(x) + 16.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h * h);
        let d4 = (-f(x - 3.0 * h) + 12.0 * f(x - 2.0 * h) - 39.0 * f(x - h) + 56.0 * f(x) - 39.0 * f(x + h)
            + 12.0 * f(x + 2.0 * h)
            - f(x + 3.0 * h))
            / (6.0 * h.powi(4));
        let expect = -f(x) * d1 - d2 - d4;
        assert!((m.pde_rhs(&[x, 0.0], &th, 0.0) - expect).abs() < 1e-8, "{}", m.pde_rhs(&[x, 0.0], &th, 0.0) - expect);
    }

    #[test]
    fn initial_condition_has_unit_peak() {
        let u0 = ks_initial_condition(22.0);
        let peak = (0..20_000).map(|i| u0(-11.0 + i as f64 * 22.0 / 20_000.0).abs()).fold(0.0, f64::max);
        assert!((peak - 1.0).abs() < 1e-6);
    }
}
