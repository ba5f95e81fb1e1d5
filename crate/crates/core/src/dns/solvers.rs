//! Pseudo-spectral reference solvers for the three experiments.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::field::{Grid, GridField};
use super::stepper::{run, DnsScheme, Nonlinear, Stepper};
use crate::error::{Error, Result};
use crate::models::GyreFlowConfig;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Spectral discretization of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct DnsConfig {
    /// Fourier modes per physical axis.
    pub modes: Vec<usize>,
    pub dt: f64,
    pub scheme: DnsScheme,
}

impl DnsConfig {
    pub fn new(modes: Vec<usize>, dt: f64) -> Self {
        Self { modes, dt, scheme: DnsScheme::Etdrk4 }
    }

    pub fn validate(&self, dims: usize) -> Result<()> {
        if self.modes.len() != dims {
            return Err(Error::InvalidInput(format!("expected {dims} mode counts, got {}", self.modes.len())));
        }
        if self.modes.iter().any(|&m| m < 2 || !m.is_power_of_two()) {
            return Err(Error::InvalidInput(format!("mode counts must be powers of two, got {:?}", self.modes)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

/// Wavenumbers 2π/L · (0, 1, …, n/2, −n/2+1, …, −1).
fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            TAU * kk / length
        })
        .collect()
}

/// Wavenumbers for odd derivatives: the Nyquist entry is zeroed.
fn derivative_wavenumbers(n: usize, length: f64) -> Vec<f64> {
    let mut k = wavenumbers(n, length);
    k[n / 2] = 0.0;
    k
}

struct Fft1 {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Fft1 {
    fn new(n: usize) -> Self {
        let mut p = FftPlanner::new();
        let fwd = p.plan_fft_forward(n);
        let inv = p.plan_fft_inverse(n);
        let len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Self { fwd, inv, scratch: vec![ZERO; len] }
    }

    fn forward(&mut self, buf: &mut [Complex64]) {
        self.fwd.process_with_scratch(buf, &mut self.scratch);
    }

    /// Normalized inverse.
    fn inverse(&mut self, buf: &mut [Complex64]) {
        self.inv.process_with_scratch(buf, &mut self.scratch);
        let s = 1.0 / buf.len() as f64;
        for z in buf.iter_mut() {
            *z *= s;
        }
    }
}

fn check_periodic_input<V>(u0: &GridField<V>, n: usize, length: f64) -> Result<()> {
    let g = &u0.grid;
    if g.dim() != 1 || g.axes[0].len() != n || g.period[0].map_or(true, |p| (p - length).abs() > 1e-9 * length) {
        return Err(Error::InvalidInput(format!("initial field must live on the periodic {n}-point grid of length {length}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// NLS: u_t = i u_xx + i|u|²u

struct NlsNonlinear {
    fft: Fft1,
    buf: Vec<Complex64>,
}

impl Nonlinear for NlsNonlinear {
    fn eval(&mut self, v: &[Complex64], _t: f64, out: &mut [Complex64]) {
        self.buf.copy_from_slice(v);
        self.fft.inverse(&mut self.buf);
        for z in self.buf.iter_mut() {
            *z = Complex64::i() * *z * z.norm_sqr();
        }
        self.fft.forward(&mut self.buf);
        out.copy_from_slice(&self.buf);
    }
}

/// Periodic grid for the NLS reference run, centred on x = 0.
pub fn nls_grid(length: f64, modes: usize) -> Grid {
    Grid::periodic_1d(-0.5 * length, 0.5 * length, modes)
}

/// Streams NLS snapshots at `times` into `sink`. Snapshots delivered before a
/// blow-up are kept by the caller.
pub fn nls_dns_visit<S>(u0: &GridField<Complex64>, window: (f64, f64), cfg: &DnsConfig, times: &[f64], mut sink: S) -> Result<()>
where
    S: FnMut(GridField<Complex64>) -> Result<()>,
{
    cfg.validate(1)?;
    let n = cfg.modes[0];
    let length = u0.grid.period.first().copied().flatten().unwrap_or(0.0);
    check_periodic_input(u0, n, length)?;
    let k = wavenumbers(n, length);
    let lin: Vec<Complex64> = k.iter().map(|&k| Complex64::new(0.0, -k * k)).collect();
    let mut fft = Fft1::new(n);
    let mut v = u0.values.clone();
    fft.forward(&mut v);
    let nl = NlsNonlinear { fft: Fft1::new(n), buf: vec![ZERO; n] };
    let mut stepper = Stepper::new(lin, cfg.scheme, nl);
    let grid = u0.grid.clone();
    let mut phys = vec![ZERO; n];
    run(&mut stepper, &mut v, window, cfg.dt, times, |t, v| {
        phys.copy_from_slice(v);
        fft.inverse(&mut phys);
        sink(GridField { grid: grid.clone(), values: phys.clone(), time: t })
    })
}

pub fn nls_dns(u0: &GridField<Complex64>, window: (f64, f64), cfg: &DnsConfig, times: &[f64]) -> Result<Vec<GridField<Complex64>>> {
    let mut out = Vec::with_capacity(times.len());
    nls_dns_visit(u0, window, cfg, times, |f| {
        out.push(f);
        Ok(())
    })?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// KS: u_t = −u u_x − u_xx − u_xxxx

struct KsNonlinear {
    fft: Fft1,
    buf: Vec<Complex64>,
    kd: Vec<f64>,
}

impl Nonlinear for KsNonlinear {
    fn eval(&mut self, v: &[Complex64], _t: f64, out: &mut [Complex64]) {
        self.buf.copy_from_slice(v);
        self.fft.inverse(&mut self.buf);
        for z in self.buf.iter_mut() {
            *z = Complex64::new(z.re * z.re, 0.0);
        }
        self.fft.forward(&mut self.buf);
        // −u u_x = −(u²)_x / 2
        for ((o, b), &k) in out.iter_mut().zip(&self.buf).zip(&self.kd) {
            *o = Complex64::new(0.0, -0.5 * k) * b;
        }
    }
}

pub fn ks_grid(length: f64, modes: usize) -> Grid {
    Grid::periodic_1d(-0.5 * length, 0.5 * length, modes)
}

pub fn ks_dns_visit<S>(u0: &GridField<f64>, window: (f64, f64), cfg: &DnsConfig, times: &[f64], mut sink: S) -> Result<()>
where
    S: FnMut(GridField<f64>) -> Result<()>,
{
    cfg.validate(1)?;
    let n = cfg.modes[0];
    let length = u0.grid.period.first().copied().flatten().unwrap_or(0.0);
    check_periodic_input(u0, n, length)?;
    let k = wavenumbers(n, length);
    let lin: Vec<Complex64> = k.iter().map(|&k| Complex64::new(k * k - k.powi(4), 0.0)).collect();
    let mut fft = Fft1::new(n);
    let mut v: Vec<Complex64> = u0.values.iter().map(|&u| Complex64::new(u, 0.0)).collect();
    fft.forward(&mut v);
    let nl = KsNonlinear { fft: Fft1::new(n), buf: vec![ZERO; n], kd: derivative_wavenumbers(n, length) };
    let mut stepper = Stepper::new(lin, cfg.scheme, nl);
    let grid = u0.grid.clone();
    let mut phys = vec![ZERO; n];
    run(&mut stepper, &mut v, window, cfg.dt, times, |t, v| {
        phys.copy_from_slice(v);
        fft.inverse(&mut phys);
        sink(GridField { grid: grid.clone(), values: phys.iter().map(|z| z.re).collect(), time: t })
    })
}

pub fn ks_dns(u0: &GridField<f64>, window: (f64, f64), cfg: &DnsConfig, times: &[f64]) -> Result<Vec<GridField<f64>>> {
    let mut out = Vec::with_capacity(times.len());
    ks_dns_visit(u0, window, cfg, times, |f| {
        out.push(f);
        Ok(())
    })?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// AD: u_t = −v·∇u + v2 + κΔu on [0, L]×[0, H], solved on [−L, L)×[−H, H)
// with u even in x and odd in z. Storage is x-major: index i·nzz + k.

struct Fft2 {
    nxx: usize,
    nzz: usize,
    x: Fft1,
    z: Fft1,
    tmp: Vec<Complex64>,
}

impl Fft2 {
    fn new(nxx: usize, nzz: usize) -> Self {
        Self { nxx, nzz, x: Fft1::new(nxx), z: Fft1::new(nzz), tmp: vec![ZERO; nxx * nzz] }
    }

    fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
        for r in 0..rows {
            for c in 0..cols {
                dst[c * rows + r] = src[r * cols + c];
            }
        }
    }

    fn apply(&mut self, buf: &mut [Complex64], inverse: bool) {
        let (nxx, nzz) = (self.nxx, self.nzz);
        for row in buf.chunks_exact_mut(nzz) {
            if inverse {
                self.z.inverse(row);
            } else {
                self.z.forward(row);
            }
        }
        Self::transpose(buf, &mut self.tmp, nxx, nzz);
        for col in self.tmp.chunks_exact_mut(nxx) {
            if inverse {
                self.x.inverse(col);
            } else {
                self.x.forward(col);
            }
        }
        Self::transpose(&self.tmp, buf, nzz, nxx);
    }

    fn forward(&mut self, buf: &mut [Complex64]) {
        self.apply(buf, false);
    }

    fn inverse(&mut self, buf: &mut [Complex64]) {
        self.apply(buf, true);
    }
}

struct AdNonlinear {
    fft: Fft2,
    nxx: usize,
    nzz: usize,
    kx: Vec<f64>,
    kz: Vec<f64>,
    /// |x| and sign(x) on the extended x axis.
    xabs: Vec<f64>,
    xsign: Vec<f64>,
    cos_z: Vec<f64>,
    sin_z: Vec<f64>,
    flow: GyreFlowConfig,
    ux: Vec<Complex64>,
    uz: Vec<Complex64>,
    v1x: Vec<f64>,
    v2x: Vec<f64>,
}

impl Nonlinear for AdNonlinear {
    fn eval(&mut self, v: &[Complex64], t: f64, out: &mut [Complex64]) {
        let (nxx, nzz) = (self.nxx, self.nzz);
        for i in 0..nxx {
            for k in 0..nzz {
                let idx = i * nzz + k;
                self.ux[idx] = Complex64::new(0.0, self.kx[i]) * v[idx];
                self.uz[idx] = Complex64::new(0.0, self.kz[k]) * v[idx];
            }
        }
        self.fft.inverse(&mut self.ux);
        self.fft.inverse(&mut self.uz);
        // v1 = −πA sin(πf) cos(πz) (odd-extended in x), v2 = πA cos(πf) f_x sin(πz)
        let pa = PI * self.flow.amplitude;
        for i in 0..nxx {
            let (f, fx, _) = self.flow.f(self.xabs[i], t);
            let (sf, cf) = (PI * f).sin_cos();
            self.v1x[i] = -pa * sf * self.xsign[i];
            self.v2x[i] = pa * cf * fx;
        }
        for i in 0..nxx {
            for k in 0..nzz {
                let idx = i * nzz + k;
                let v1 = self.v1x[i] * self.cos_z[k];
                let v2 = self.v2x[i] * self.sin_z[k];
                out[idx] = Complex64::new(-(v1 * self.ux[idx].re + v2 * self.uz[idx].re) + v2, 0.0);
            }
        }
        self.fft.forward(out);
    }
}

/// Physical output grid for the AD run: (nx+1)×(nz+1) nodes including the walls.
pub fn ad_grid(length: f64, height: f64, modes: &[usize]) -> Grid {
    Grid::closed_box(length, height, modes[0], modes[1])
}

/// Streams AD snapshots on the physical grid (see [`ad_grid`]).
pub fn ad_dns_visit<S>(
    u0: &GridField<f64>,
    window: (f64, f64),
    cfg: &DnsConfig,
    flow: &GyreFlowConfig,
    kappa: f64,
    times: &[f64],
    mut sink: S,
) -> Result<()>
where
    S: FnMut(GridField<f64>) -> Result<()>,
{
    cfg.validate(2)?;
    let (nx, nz) = (cfg.modes[0], cfg.modes[1]);
    let (lx, lz) = (flow.length, flow.height);
    let g = &u0.grid;
    if g.dim() != 2 || g.axes[0].len() != nx + 1 || g.axes[1].len() != nz + 1 {
        return Err(Error::InvalidInput(format!("initial field must live on the {}×{} closed box grid", nx + 1, nz + 1)));
    }
    let (nxx, nzz) = (2 * nx, 2 * nz);
    let dx = lx / nx as f64;
    let dz = lz / nz as f64;
    let kx = wavenumbers(nxx, 2.0 * lx);
    let kz = wavenumbers(nzz, 2.0 * lz);
    let mut lin = vec![ZERO; nxx * nzz];
    for i in 0..nxx {
        for k in 0..nzz {
            lin[i * nzz + k] = Complex64::new(-kappa * (kx[i] * kx[i] + kz[k] * kz[k]), 0.0);
        }
    }
    // Extended node (i, k) sits at (−L + i dx, −H + k dz); fold it back with the symmetries.
    let nzp = nz + 1;
    let mut v = vec![ZERO; nxx * nzz];
    for i in 0..nxx {
        let ip = (i as isize - nx as isize).unsigned_abs();
        for k in 0..nzz {
            let kr = k as isize - nz as isize;
            let sign = kr.signum() as f64;
            v[i * nzz + k] = Complex64::new(sign * u0.values[ip * nzp + kr.unsigned_abs()], 0.0);
        }
    }
    let mut fft = Fft2::new(nxx, nzz);
    fft.forward(&mut v);

    let xs: Vec<f64> = (0..nxx).map(|i| -lx + i as f64 * dx).collect();
    let zs: Vec<f64> = (0..nzz).map(|k| -lz + k as f64 * dz).collect();
    let nl = AdNonlinear {
        fft: Fft2::new(nxx, nzz),
        nxx,
        nzz,
        kx: derivative_wavenumbers(nxx, 2.0 * lx),
        kz: derivative_wavenumbers(nzz, 2.0 * lz),
        xabs: xs.iter().map(|x| x.abs()).collect(),
        xsign: xs.iter().map(|&x| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 }).collect(),
        cos_z: zs.iter().map(|z| (PI * z).cos()).collect(),
        sin_z: zs.iter().map(|z| (PI * z).sin()).collect(),
        flow: *flow,
        ux: vec![ZERO; nxx * nzz],
        uz: vec![ZERO; nxx * nzz],
        v1x: vec![0.0; nxx],
        v2x: vec![0.0; nxx],
    };
    let mut stepper = Stepper::new(lin, cfg.scheme, nl);
    let grid = u0.grid.clone();
    let mut phys = vec![ZERO; nxx * nzz];
    run(&mut stepper, &mut v, window, cfg.dt, times, |t, v| {
        phys.copy_from_slice(v);
        fft.inverse(&mut phys);
        let mut values = Vec::with_capacity((nx + 1) * nzp);
        for ip in 0..=nx {
            let i = (nx + ip) % nxx;
            for kp in 0..=nz {
                let k = (nz + kp) % nzz;
                values.push(phys[i * nzz + k].re);
            }
        }
        sink(GridField { grid: grid.clone(), values, time: t })
    })
}

pub fn ad_dns(
    u0: &GridField<f64>,
    window: (f64, f64),
    cfg: &DnsConfig,
    flow: &GyreFlowConfig,
    kappa: f64,
    times: &[f64],
) -> Result<Vec<GridField<f64>>> {
    let mut out = Vec::with_capacity(times.len());
    ad_dns_visit(u0, window, cfg, flow, kappa, times, |f| {
        out.push(f);
        Ok(())
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ad_initial_condition, ks_initial_condition, NLS_DOMAIN_LENGTH};
    use crate::sms::Point;

    #[test]
    fn nls_zero_stays_zero() {
        let grid = Arc::new(nls_grid(NLS_DOMAIN_LENGTH, 256));
        let u0 = GridField::from_fn(grid, 0.0, |_| ZERO);
        let out = nls_dns(&u0, (0.0, 1.0), &DnsConfig::new(vec![256], 0.025), &[1.0]).unwrap();
        assert!(out[0].values.iter().all(|z| *z == ZERO));
    }

    #[test]
    fn nls_constant_state_rotates() {
        let grid = Arc::new(nls_grid(50.0, 64));
        let c = Complex64::new(0.3, 0.4);
        let u0 = GridField::from_fn(grid, 0.0, |_| c);
        let out = nls_dns(&u0, (0.0, 5.0), &DnsConfig::new(vec![64], 0.025), &[5.0]).unwrap();
        let expect = c * Complex64::from_polar(1.0, c.norm_sqr() * 5.0);
        for z in &out[0].values {
            assert!((z.norm() - c.norm()).abs() < 1e-12);
            assert!((z - expect).norm() < 1e-9);
        }
    }

    #[test]
    fn ks_zero_and_mean() {
        let grid = Arc::new(ks_grid(22.0, 128));
        let zero = GridField::from_fn(grid.clone(), 0.0, |_| 0.0);
        let out = ks_dns(&zero, (0.0, 1.0), &DnsConfig::new(vec![128], 0.01), &[1.0]).unwrap();
        assert!(out[0].values.iter().all(|&u| u == 0.0));

        let u0 = ks_initial_condition(22.0);
        let init = GridField::from_fn(grid, 0.0, |p: &Point| u0(p[0]) + 0.1);
        let mean = |f: &GridField<f64>| f.values.iter().sum::<f64>() / f.values.len() as f64;
        let out = ks_dns(&init, (0.0, 20.0), &DnsConfig::new(vec![128], 0.01), &[20.0]).unwrap();
        assert!((mean(&out[0]) - mean(&init)).abs() < 1e-8);
    }

    #[test]
    fn ks_resolution_doubling() {
        let u0 = ks_initial_condition(22.0);
        let run = |n: usize| {
            let grid = Arc::new(ks_grid(22.0, n));
            let init = GridField::from_fn(grid, 0.0, |p: &Point| u0(p[0]));
            ks_dns(&init, (0.0, 10.0), &DnsConfig::new(vec![n], 0.01), &[10.0]).unwrap().pop().unwrap()
        };
        let coarse = run(128);
        let fine = run(256);
        let diff: f64 = coarse.values.iter().zip(fine.values.iter().step_by(2)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = coarse.values.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(diff / norm < 1e-6, "{}", diff / norm);
    }

    #[test]
    fn ad_heat_decay_without_flow() {
        let flow = GyreFlowConfig { amplitude: 0.0, ..GyreFlowConfig::default() };
        let modes = vec![32, 16];
        let grid = Arc::new(ad_grid(4.0, 1.0, &modes));
        let u0f = ad_initial_condition(4.0, 1.0);
        let u0 = GridField::from_fn(grid, 0.0, |p: &Point| u0f(p[0], p[1]));
        let kappa = 1e-2;
        let t = 3.0;
        let out = ad_dns(&u0, (0.0, t), &DnsConfig::new(modes, 0.01), &flow, kappa, &[t]).unwrap();
        let decay = (-kappa * ((PI / 4.0).powi(2) + PI * PI) * t).exp();
        for (u, p) in out[0].values.iter().zip(out[0].grid.points()) {
            assert!((u - decay * u0f(p[0], p[1])).abs() < 1e-8);
        }
    }

    #[test]
    fn ad_boundary_conditions_hold() {
        let flow = GyreFlowConfig::default();
        let modes = vec![64, 16];
        let grid = Arc::new(ad_grid(4.0, 1.0, &modes));
        let u0f = ad_initial_condition(4.0, 1.0);
        let u0 = GridField::from_fn(grid, 0.0, |p: &Point| u0f(p[0], p[1]));
        let out = ad_dns(&u0, (0.0, 2.0), &DnsConfig::new(modes, 0.01), &flow, 1e-3, &[2.0]).unwrap();
        let f = &out[0];
        let nzp = 17;
        for i in 0..=64 {
            assert!(f.values[i * nzp].abs() < 1e-6);
            assert!(f.values[i * nzp + 16].abs() < 1e-6);
        }
        assert!(f.values.iter().any(|u| u.abs() > 1e-3));
    }
}
