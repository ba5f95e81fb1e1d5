//! Advection–diffusion of a temperature fluctuation in a double-gyre flow,
//!
//!   u_t + v·∇u = v2 + κΔu  on [0, L]×[0, H],
//!
//! with u = 0 at z ∈ {0, H} and u_x = 0 at x ∈ {0, L}.
//!
//! The ansatz reflects a periodic tanh network N_p on [−L, L]×[−H, H]:
//!   û(x, z) = N_p(x, z) − N_p(x, −z) + N_p(−x, z) − N_p(−x, −z),
//! which is even in x and odd in z. Combined with the 2L- and 2H-periodicity
//! of N_p this makes û vanish at z = 0 and z = H and makes û_x vanish at
//! x = 0 and x = L for every θ. Node i occupies θ[6i..6i+6] = (a, b, wx, wz, cx, cz).

use std::f64::consts::PI;

use crate::sms::{Domain, Point, SmsModel};

pub const AD_NODE_PARAMS: usize = 6;

/// Time-periodic double gyre. The z-dependence is cos(πz), sin(πz) as
/// written, which is divergence free for any f(x, t).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GyreFlowConfig {
    pub m: f64,
    pub amplitude: f64,
    pub eps: f64,
    pub omega: f64,
    pub length: f64,
    pub height: f64,
}

impl Default for GyreFlowConfig {
    fn default() -> Self {
        Self { m: 2.0, amplitude: 0.1, eps: 0.025, omega: PI, length: 4.0, height: 1.0 }
    }
}

impl GyreFlowConfig {
    /// f = m x/L + εL⁴ sin(ωt) [x/L − 2(x/L)³ + (x/L)⁴] and its first two x-derivatives.
    pub fn f(&self, x: f64, t: f64) -> (f64, f64, f64) {
        let l = self.length;
        let s = x / l;
        let amp = self.eps * l.powi(4) * (self.omega * t).sin();
        let f = self.m * s + amp * (s - 2.0 * s.powi(3) + s.powi(4));
        let fx = self.m / l + amp * (1.0 - 6.0 * s * s + 4.0 * s.powi(3)) / l;
        let fxx = amp * (-12.0 * s + 12.0 * s * s) / (l * l);
        (f, fx, fxx)
    }

    /// (v1, v2) = (−πA sin(πf) cos(πz), πA cos(πf) sin(πz) f_x).
    pub fn velocity(&self, x: f64, z: f64, t: f64) -> (f64, f64) {
        let (f, fx, _) = self.f(x, t);
        let (sf, cf) = (PI * f).sin_cos();
        let (sz, cz) = (PI * z).sin_cos();
        let pa = PI * self.amplitude;
        (-pa * sf * cz, pa * cf * sz * fx)
    }

    /// ∂v1/∂x + ∂v2/∂z, evaluated analytically.
    pub fn divergence(&self, x: f64, z: f64, t: f64) -> f64 {
        let (f, fx, _) = self.f(x, t);
        let cf = (PI * f).cos();
        let cz = (PI * z).cos();
        let pa = PI * self.amplitude;
        let dv1dx = -pa * PI * cf * fx * cz;
        let dv2dz = pa * cf * PI * cz * fx;
        dv1dx + dv2dz
    }
}

pub fn gyre_velocity(cfg: &GyreFlowConfig, x: f64, z: f64, t: f64) -> (f64, f64) {
    cfg.velocity(x, z, t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdNetwork {
    pub nodes: usize,
    pub length: f64,
    pub height: f64,
    pub kappa: f64,
    pub flow: GyreFlowConfig,
}

/// û with its first and second derivatives (u_x, u_z, u_xx, u_zz).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AdJet {
    pub u: f64,
    pub ux: f64,
    pub uz: f64,
    pub uxx: f64,
    pub uzz: f64,
}

const REFLECTIONS: [(f64, f64); 4] = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];

impl AdNetwork {
    pub fn new(nodes: usize, kappa: f64, flow: GyreFlowConfig) -> Self {
        Self { nodes, length: flow.length, height: flow.height, kappa, flow }
    }

    pub fn jet(&self, x: f64, z: f64, theta: &[f64]) -> AdJet {
        let kx = PI / self.length;
        let kz = PI / self.height;
        let mut j = AdJet::default();
        for node in theta.chunks_exact(AD_NODE_PARAMS) {
            let (a, b, wx, wz, cx, cz) = (node[0], node[1], node[2], node[3], node[4], node[5]);
            for (sx, sz) in REFLECTIONS {
                // the z-reflected terms enter with a minus sign
                let sign = sz;
                let (six, cox) = (kx * sx * x + cx).sin_cos();
                let (siz, coz) = (kz * sz * z + cz).sin_cos();
                let t = (wx * six + wz * siz + b).tanh();
                let t1 = 1.0 - t * t;
                let t2 = -2.0 * t * t1;
                let qx = wx * kx * cox * sx;
                let qz = wz * kz * coz * sz;
                let qxx = -wx * kx * kx * six;
                let qzz = -wz * kz * kz * siz;
                let sa = sign * a;
                j.u += sa * t;
                j.ux += sa * t1 * qx;
                j.uz += sa * t1 * qz;
                j.uxx += sa * (t2 * qx * qx + t1 * qxx);
                j.uzz += sa * (t2 * qz * qz + t1 * qzz);
            }
        }
        j
    }
}

impl SmsModel for AdNetwork {
    type Value = f64;

    fn param_count(&self) -> usize {
        AD_NODE_PARAMS * self.nodes
    }

    fn domain(&self) -> Domain {
        Domain::rectangle([0.0, 0.0], [self.length, self.height])
    }

    fn eval(&self, x: &Point, theta: &[f64]) -> f64 {
        let kx = PI / self.length;
        let kz = PI / self.height;
        let mut u = 0.0;
        for node in theta.chunks_exact(AD_NODE_PARAMS) {
            let (a, b, wx, wz, cx, cz) = (node[0], node[1], node[2], node[3], node[4], node[5]);
            for (sx, sz) in REFLECTIONS {
                let q = wx * (kx * sx * x[0] + cx).sin() + wz * (kz * sz * x[1] + cz).sin() + b;
                u += sz * a * q.tanh();
            }
        }
        u
    }

    fn grad_theta(&self, x: &Point, theta: &[f64], out: &mut [f64]) {
        let kx = PI / self.length;
        let kz = PI / self.height;
        for (node, g) in theta.chunks_exact(AD_NODE_PARAMS).zip(out.chunks_exact_mut(AD_NODE_PARAMS)) {
            let (a, b, wx, wz, cx, cz) = (node[0], node[1], node[2], node[3], node[4], node[5]);
            g.fill(0.0);
            for (sx, sz) in REFLECTIONS {
                let (six, cox) = (kx * sx * x[0] + cx).sin_cos();
                let (siz, coz) = (kz * sz * x[1] + cz).sin_cos();
                let t = (wx * six + wz * siz + b).tanh();
                let at1 = sz * a * (1.0 - t * t);
                g[0] += sz * t;
                g[1] += at1;
                g[2] += at1 * six;
                g[3] += at1 * siz;
                g[4] += at1 * wx * cox;
                g[5] += at1 * wz * coz;
            }
        }
    }

    fn pde_rhs(&self, x: &Point, theta: &[f64], t: f64) -> f64 {
        let j = self.jet(x[0], x[1], theta);
        let (v1, v2) = self.flow.velocity(x[0], x[1], t);
        -(v1 * j.ux + v2 * j.uz) + v2 + self.kappa * (j.uxx + j.uzz)
    }

    fn grad_and_rhs(&self, x: &Point, theta: &[f64], t: f64, out: &mut [f64]) -> f64 {
        let kx = PI / self.length;
        let kz = PI / self.height;
        // sin(s·k·x + c) = s·sin(kx)cos(c) + cos(kx)sin(c), shared across nodes and reflections
        let (spx, cpx) = (kx * x[0]).sin_cos();
        let (spz, cpz) = (kz * x[1]).sin_cos();
        let mut j = AdJet::default();
        for (node, g) in theta.chunks_exact(AD_NODE_PARAMS).zip(out.chunks_exact_mut(AD_NODE_PARAMS)) {
            let (a, b, wx, wz, cx, cz) = (node[0], node[1], node[2], node[3], node[4], node[5]);
            let (scx, ccx) = cx.sin_cos();
            let (scz, ccz) = cz.sin_cos();
            g.fill(0.0);
            for (sx, sz) in REFLECTIONS {
                let six = sx * spx * ccx + cpx * scx;
                let cox = cpx * ccx - sx * spx * scx;
                let siz = sz * spz * ccz + cpz * scz;
                let coz = cpz * ccz - sz * spz * scz;
                let th = (wx * six + wz * siz + b).tanh();
                let t1 = 1.0 - th * th;
                let t2 = -2.0 * th * t1;
                let sa = sz * a;
                let at1 = sa * t1;
                g[0] += sz * th;
                g[1] += at1;
                g[2] += at1 * six;
                g[3] += at1 * siz;
                g[4] += at1 * wx * cox;
                g[5] += at1 * wz * coz;
                let qx = wx * kx * cox * sx;
                let qz = wz * kz * coz * sz;
                j.ux += at1 * qx;
                j.uz += at1 * qz;
                j.uxx += sa * (t2 * qx * qx - t1 * wx * kx * kx * six);
                j.uzz += sa * (t2 * qz * qz - t1 * wz * kz * kz * siz);
            }
        }
        let (v1, v2) = self.flow.velocity(x[0], x[1], t);
        -(v1 * j.ux + v2 * j.uz) + v2 + self.kappa * (j.uxx + j.uzz)
    }
}

/// 0.1 cos(πx/L) sin(πz/H).
pub fn ad_initial_condition(length: f64, height: f64) -> impl Fn(f64, f64) -> f64 {
    move |x, z| 0.1 * (PI * x / length).cos() * (PI * z / height).sin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_theta(rng: &mut ChaCha8Rng, nodes: usize) -> Vec<f64> {
        (0..AD_NODE_PARAMS * nodes).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    fn model() -> AdNetwork {
        AdNetwork::new(4, 1e-3, GyreFlowConfig::default())
    }

    #[test]
    fn fused_gradient_and_rhs_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = model();
        for _ in 0..20 {
            let theta = random_theta(&mut rng, m.nodes);
            let x = [rng.random_range(0.0..4.0), rng.random_range(0.0..1.0)];
            let t = rng.random_range(0.0..5.0);
            let mut g1 = vec![0.0; m.param_count()];
            let mut g2 = vec![0.0; m.param_count()];
            m.grad_theta(&x, &theta, &mut g1);
            let f = m.grad_and_rhs(&x, &theta, t, &mut g2);
            let f_ref = m.pde_rhs(&x, &theta, t);
            assert!((f - f_ref).abs() <= 1e-12 * (1.0 + f_ref.abs()));
            for (a, b) in g1.iter().zip(&g2) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn boundary_identities() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let th = random_theta(&mut rng, m.nodes);
            let x = rng.random_range(0.0..4.0);
            let z = rng.random_range(0.0..1.0);
            assert!(m.eval(&[x, 0.0], &th).abs() < 1e-10);
            assert!(m.eval(&[x, 1.0], &th).abs() < 1e-10);
            assert!(m.jet(0.0, z, &th).ux.abs() < 1e-10);
            assert!(m.jet(4.0, z, &th).ux.abs() < 1e-10);
        }
    }

    #[test]
    fn jet_matches_eval_and_fd() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let th = random_theta(&mut rng, m.nodes);
        let (x, z) = (1.37, 0.61);
        let f = |x: f64, z: f64| m.eval(&[x, z], &th);
        let j = m.jet(x, z, &th);
        let h = 1e-4;
        assert!((j.u - f(x, z)).abs() < 1e-14);
        assert!((j.ux - (f(x + h, z) - f(x - h, z)) / (2.0 * h)).abs() < 1e-6);
        assert!((j.uz - (f(x, z + h) - f(x, z - h)) / (2.0 * h)).abs() < 1e-6);
        assert!((j.uxx - (f(x + h, z) - 2.0 * f(x, z) + f(x - h, z)) / (h * h)).abs() < 1e-4);
        assert!((j.uzz - (f(x, z + h) - 2.0 * f(x, z) + f(x, z - h)) / (h * h)).abs() < 1e-4);
    }

    #[test]
    fn gyre_boundary_conditions() {
        let g = GyreFlowConfig::default();
        for i in 0..20 {
            let t = 0.37 * i as f64;
            let z = 0.05 * i as f64;
            let x = 0.2 * i as f64;
            assert!(g.velocity(0.0, z, t).0.abs() < 1e-12);
            assert!(g.velocity(4.0, z, t).0.abs() < 1e-12);
            assert!(g.velocity(x, 0.0, t).1.abs() < 1e-12);
            assert!(g.velocity(x, 1.0, t).1.abs() < 1e-12);
        }
    }

    #[test]
    fn gyre_divergence_free() {
        let g = GyreFlowConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let (x, z, t) = (rng.random_range(0.0..4.0), rng.random_range(0.0..1.0), rng.random_range(0.0..45.0));
            assert!(g.divergence(x, z, t).abs() < 1e-10);
            // and the analytic expression agrees with finite differences of the velocity
            let h = 1e-5;
            let fd = (g.velocity(x + h, z, t).0 - g.velocity(x - h, z, t).0) / (2.0 * h)
                + (g.velocity(x, z + h, t).1 - g.velocity(x, z - h, t).1) / (2.0 * h);
            assert!(fd.abs() < 1e-6, "{fd}");
        }
    }

    #[test]
    fn rhs_trivial_cases() {
        let still = GyreFlowConfig { amplitude: 0.0, ..GyreFlowConfig::default() };
        let m = AdNetwork::new(2, 0.0, still);
        let th = [0.3, 0.1, 1.0, -0.4, 0.2, 0.9, -0.7, 0.5, 0.3, 1.1, -0.6, 0.1];
        assert_eq!(m.pde_rhs(&[1.1, 0.4], &th, 2.0), 0.0);
        let zero = vec![0.0; 12];
        let m = AdNetwork::new(2, 1e-3, GyreFlowConfig::default());
        // v2 vanishes on z = 0
        assert_eq!(m.pde_rhs(&[1.3, 0.0], &zero, 0.7), 0.0);
    }

    #[test]
    fn rhs_matches_fd_evaluation() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let th = random_theta(&mut rng, m.nodes);
            let (x, z, t) = (rng.random_range(0.2..3.8), rng.random_range(0.1..0.9), rng.random_range(0.0..10.0));
            let f = |x: f64, z: f64| m.eval(&[x, z], &th);
            let h = 1e-3;
            let ux = (f(x + h, z) - f(x - h, z)) / (2.0 * h);
            let uz = (f(x, z + h) - f(x, z - h)) / (2.0 * h);
            let lap = (f(x + h, z) + f(x - h, z) + f(x, z + h) + f(x, z - h) - 4.0 * f(x, z)) / (h * h);
            let (v1, v2) = m.flow.velocity(x, z, t);
            let expect = -(v1 * ux + v2 * uz) + v2 + m.kappa * lap;
            let got = m.pde_rhs(&[x, z], &th, t);
            assert!((got - expect).abs() <= 1e-4 * expect.abs().max(1e-2), "{got} vs {expect}");
        }
    }
}
