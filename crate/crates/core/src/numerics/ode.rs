//! Explicit time stepping for the parameter ODEs.
//!
//! Two schemes: classic fixed-step RK4 and Dormand–Prince 5(4) with
//! embedded error control and dense output. Extra output times requested
//! through [`integrate_recorded`] never change the step sequence; they are
//! filled by interpolation (cubic Hermite for RK4, the fifth-order continuous
//! extension for Dormand–Prince).

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Rk4Fixed,
    Rk45Adaptive,
}

/// Integrator settings. `dt_init` is the fixed step for RK4 and the first
/// trial step for the adaptive scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub dt_init: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub dt_max: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { scheme: Scheme::Rk45Adaptive, dt_init: 1e-2, rel_tol: 1e-6, abs_tol: 1e-9, dt_max: f64::INFINITY }
    }
}

impl IntegratorConfig {
    pub fn rk4(dt: f64) -> Self {
        Self { scheme: Scheme::Rk4Fixed, dt_init: dt, dt_max: dt, ..Self::default() }
    }

    pub fn adaptive(rel_tol: f64, abs_tol: f64) -> Self {
        Self { rel_tol, abs_tol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_init > 0.0 && self.dt_init.is_finite()) {
            return Err(Error::InvalidInput(format!("dt_init must be positive, got {}", self.dt_init)));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidInput("integrator tolerances must be positive".into()));
        }
        if !(self.dt_max > 0.0) {
            return Err(Error::InvalidInput(format!("dt_max must be positive, got {}", self.dt_max)));
        }
        Ok(())
    }
}

/// Sampled solution: `states[k]` is the state at `times[k]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn single(t: f64, state: DVector<f64>) -> Self {
        Self { times: vec![t], states: vec![state] }
    }

    pub fn push(&mut self, t: f64, state: DVector<f64>) {
        self.times.push(t);
        self.states.push(state);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&DVector<f64>> {
        self.states.last()
    }

    pub fn final_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    /// Appends `other`, dropping its first sample when it repeats our last time.
    pub fn extend_from(&mut self, other: Trajectory) {
        let skip = match (self.times.last(), other.times.first()) {
            (Some(a), Some(b)) if a == b => 1,
            _ => 0,
        };
        for (t, s) in other.times.into_iter().zip(other.states).skip(skip) {
            self.push(t, s);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &DVector<f64>)> {
        self.times.iter().copied().zip(self.states.iter())
    }
}

/// Integrates `θ̇ = rhs(θ, t)` over `window`, returning the two endpoints.
pub fn integrate<F>(rhs: F, theta0: &DVector<f64>, window: (f64, f64), cfg: &IntegratorConfig) -> Result<Trajectory>
where
    F: FnMut(&DVector<f64>, f64) -> Result<DVector<f64>>,
{
    integrate_recorded(rhs, theta0, window, cfg, &[])
}

/// As [`integrate`], also recording the state at every `record` time lying
/// strictly inside the window. Record times must be sorted.
pub fn integrate_recorded<F>(
    mut rhs: F,
    theta0: &DVector<f64>,
    window: (f64, f64),
    cfg: &IntegratorConfig,
    record: &[f64],
) -> Result<Trajectory>
where
    F: FnMut(&DVector<f64>, f64) -> Result<DVector<f64>>,
{
    let (ta, tb) = window;
    if !(ta.is_finite() && tb.is_finite() && tb > ta) {
        return Err(Error::InvalidWindow { start: ta, end: tb });
    }
    cfg.validate()?;
    if theta0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state"));
    }
    let inner: Vec<f64> = record.iter().copied().filter(|&t| t > ta && t < tb).collect();
    if inner.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("record times must be sorted".into()));
    }
    let mut eval = |y: &DVector<f64>, t: f64| -> Result<DVector<f64>> {
        let f = rhs(y, t)?;
        if f.len() != y.len() {
            return Err(Error::DimensionMismatch(format!("rhs returned {} entries for a state of {}", f.len(), y.len())));
        }
        Ok(f)
    };
    match cfg.scheme {
        Scheme::Rk4Fixed => rk4(&mut eval, theta0, ta, tb, cfg.dt_init, &inner),
        Scheme::Rk45Adaptive => dopri5(&mut eval, theta0, ta, tb, cfg, &inner),
    }
}

fn finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn rk4<F>(rhs: &mut F, y0: &DVector<f64>, ta: f64, tb: f64, dt: f64, record: &[f64]) -> Result<Trajectory>
where
    F: FnMut(&DVector<f64>, f64) -> Result<DVector<f64>>,
{
    // Shrink the step slightly so an integer number of steps lands on tb.
    let n = ((tb - ta) / dt).ceil().max(1.0) as usize;
    let h = (tb - ta) / n as f64;
    let mut traj = Trajectory::single(ta, y0.clone());
    let mut y = y0.clone();
    let mut k1 = rhs(&y, ta)?;
    if !finite(&k1) {
        return Err(Error::NonFinite("rhs"));
    }
    let mut next = 0;
    for i in 0..n {
        let t = ta + i as f64 * h;
        let t1 = if i + 1 == n { tb } else { ta + (i + 1) as f64 * h };
        let k2 = rhs(&(&y + &k1 * (0.5 * h)), t + 0.5 * h)?;
        let k3 = rhs(&(&y + &k2 * (0.5 * h)), t + 0.5 * h)?;
        let k4 = rhs(&(&y + &k3 * h), t1)?;
        let y1 = &y + (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (h / 6.0);
        if !finite(&y1) {
            return Err(Error::NonFinite("rk4 step"));
        }
        let needs_record = next < record.len() && record[next] <= t1;
        if i + 1 == n && !needs_record {
            traj.push(tb, y1);
            return Ok(traj);
        }
        let f1 = rhs(&y1, t1)?;
        if !finite(&f1) {
            return Err(Error::NonFinite("rhs"));
        }
        while next < record.len() && record[next] <= t1 {
            let s = (record[next] - t) / h;
            traj.push(record[next], hermite(&y, &k1, &y1, &f1, h, s));
            next += 1;
        }
        y = y1;
        k1 = f1;
    }
    traj.push(tb, y);
    Ok(traj)
}

fn hermite(y0: &DVector<f64>, f0: &DVector<f64>, y1: &DVector<f64>, f1: &DVector<f64>, h: f64, s: f64) -> DVector<f64> {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    y0 * h00 + f0 * (h10 * h) + y1 * h01 + f1 * (h11 * h)
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Difference between the fifth- and fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension (Hairer's contd5 coefficients).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

fn dopri5<F>(rhs: &mut F, y0: &DVector<f64>, ta: f64, tb: f64, cfg: &IntegratorConfig, record: &[f64]) -> Result<Trajectory>
where
    F: FnMut(&DVector<f64>, f64) -> Result<DVector<f64>>,
{
    let span = tb - ta;
    let h_min = 1e-12 * span;
    let mut traj = Trajectory::single(ta, y0.clone());
    let mut t = ta;
    let mut y = y0.clone();
    let mut k1 = rhs(&y, t)?;
    if !finite(&k1) {
        return Err(Error::NonFinite("rhs"));
    }
    let mut h = cfg.dt_init.min(cfg.dt_max).min(span);
    let mut next = 0;
    let mut last_rejected = false;

    loop {
        let mut last = false;
        if t + h >= tb || (tb - (t + h)) < h_min {
            h = tb - t;
            last = true;
        }
        if h < h_min {
            return Err(Error::StepFailure { t, h });
        }

        let k2 = rhs(&(&y + &k1 * (h * A21)), t + C2 * h)?;
        let k3 = rhs(&(&y + (&k1 * A31 + &k2 * A32) * h), t + C3 * h)?;
        let k4 = rhs(&(&y + (&k1 * A41 + &k2 * A42 + &k3 * A43) * h), t + C4 * h)?;
        let k5 = rhs(&(&y + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * h), t + C5 * h)?;
        let k6 = rhs(&(&y + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * h), t + h)?;
        let y1 = &y + (&k1 * A71 + &k3 * A73 + &k4 * A74 + &k5 * A75 + &k6 * A76) * h;
        let t1 = if last { tb } else { t + h };
        let k7 = rhs(&y1, t1)?;

        let stages_ok = finite(&k2) && finite(&k3) && finite(&k4) && finite(&k5) && finite(&k6) && finite(&k7) && finite(&y1);
        let err = if stages_ok {
            let e = (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * h;
            let mut acc = 0.0;
            for i in 0..y.len() {
                let sc = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y1[i].abs());
                acc += (e[i] / sc).powi(2);
            }
            (acc / y.len().max(1) as f64).sqrt()
        } else {
            f64::INFINITY
        };

        if err <= 1.0 {
            if next < record.len() && record[next] <= t1 {
                let ydiff = &y1 - &y;
                let r3 = &k1 * h - &ydiff;
                let r4 = &ydiff - &k7 * h - &r3;
                let r5 = (&k1 * D1 + &k3 * D3 + &k4 * D4 + &k5 * D5 + &k6 * D6 + &k7 * D7) * h;
                while next < record.len() && record[next] <= t1 {
                    let s = (record[next] - t) / h;
                    let s1 = 1.0 - s;
                    let inner = &r4 + &r5 * s1;
                    let inner = &r3 + inner * s;
                    let inner = &ydiff + inner * s1;
                    traj.push(record[next], &y + inner * s);
                    next += 1;
                }
            }
            t = t1;
            y = y1;
            k1 = k7;
            if last {
                traj.push(tb, y);
                return Ok(traj);
            }
            let mut fac = if err == 0.0 { FAC_MAX } else { SAFETY * err.powf(-0.2) };
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h = (h * fac).min(cfg.dt_max);
            last_rejected = false;
        } else {
            let fac = if err.is_finite() { (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0) } else { FAC_MIN };
            h *= fac;
            last_rejected = true;
            if h < h_min {
                return Err(Error::StepFailure { t, h });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn exp_rhs(lambda: f64) -> impl FnMut(&DVector<f64>, f64) -> Result<DVector<f64>> {
        move |y, _| Ok(y * lambda)
    }

    #[test]
    fn constant_solution() {
        let tr = integrate(|y, _| Ok(DVector::zeros(y.len())), &dvector![3.0], (0.0, 1.0), &IntegratorConfig::default()).unwrap();
        assert_eq!(tr.times, vec![0.0, 1.0]);
        assert_eq!(tr.final_state().unwrap()[0], 3.0);
    }

    #[test]
    fn rk4_exponential() {
        let tr = integrate(exp_rhs(1.0), &dvector![1.0], (0.0, 1.0), &IntegratorConfig::rk4(1e-3)).unwrap();
        assert!((tr.final_state().unwrap()[0] - std::f64::consts::E).abs() < 1e-9);
        assert_eq!(tr.final_time(), Some(1.0));
    }

    #[test]
    fn rk4_fourth_order() {
        let lambda = -1.3;
        let exact = (lambda * 2.0_f64).exp();
        let errs: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&dt| {
                let tr = integrate(exp_rhs(lambda), &dvector![1.0], (0.0, 2.0), &IntegratorConfig::rk4(dt)).unwrap();
                (tr.final_state().unwrap()[0] - exact).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 3.8, "observed order {order}");
        }
    }

    #[test]
    fn adaptive_meets_tolerance() {
        let cfg = IntegratorConfig::adaptive(1e-8, 1e-12);
        let tr = integrate(exp_rhs(-0.7), &dvector![2.0, -1.0], (0.0, 5.0), &cfg).unwrap();
        let f = (-0.7_f64 * 5.0).exp();
        let y = tr.final_state().unwrap();
        assert!((y[0] - 2.0 * f).abs() < 1e-7);
        assert!((y[1] + f).abs() < 1e-7);
    }

    #[test]
    fn adaptive_oscillator_and_dense_output() {
        // harmonic oscillator, dense output compared against cos/sin
        let rhs = |y: &DVector<f64>, _t: f64| Ok(dvector![y[1], -y[0]]);
        let record: Vec<f64> = (1..40).map(|k| k as f64 * 0.25).collect();
        let cfg = IntegratorConfig::adaptive(1e-9, 1e-12);
        let tr = integrate_recorded(rhs, &dvector![1.0, 0.0], (0.0, 10.0), &cfg, &record).unwrap();
        assert_eq!(tr.len(), record.len() + 2);
        for (t, y) in tr.iter() {
            assert!((y[0] - t.cos()).abs() < 1e-7, "t={t}");
            assert!((y[1] + t.sin()).abs() < 1e-7, "t={t}");
        }
    }

    #[test]
    fn rk4_records_do_not_change_final_state() {
        let rhs = |y: &DVector<f64>, t: f64| Ok(dvector![y[1], -y[0] + t.sin()]);
        let cfg = IntegratorConfig::rk4(0.01);
        let plain = integrate(rhs, &dvector![0.3, 0.1], (0.0, 3.0), &cfg).unwrap();
        let rec = integrate_recorded(rhs, &dvector![0.3, 0.1], (0.0, 3.0), &cfg, &[0.505, 1.0, 2.2]).unwrap();
        assert_eq!(plain.final_state(), rec.final_state());
        assert_eq!(rec.times, vec![0.0, 0.505, 1.0, 2.2, 3.0]);
    }

    #[test]
    fn blow_up_fails() {
        // y' = y², y(0) = 1 blows up at t = 1
        let err = integrate(|y, _| Ok(y.component_mul(y)), &dvector![1.0], (0.0, 2.0), &IntegratorConfig::default()).unwrap_err();
        assert!(matches!(err, Error::StepFailure { .. } | Error::NonFinite(_)), "{err:?}");
    }

    #[test]
    fn nan_rhs_is_reported() {
        let err = integrate(|y, _| Ok(y * f64::NAN), &dvector![1.0], (0.0, 1.0), &IntegratorConfig::rk4(0.1)).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn bad_window_rejected() {
        let err = integrate(exp_rhs(1.0), &dvector![1.0], (1.0, 1.0), &IntegratorConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidWindow { .. }));
    }

    #[test]
    fn nls_rate_arithmetic() {
        // θ̇ for the Gaussian envelope at (A, L, V, φ) = (0.2, 20, 0, 0)
        let (a, l, v) = (0.2_f64, 20.0_f64, 0.0_f64);
        let s2 = std::f64::consts::SQRT_2;
        let rate = [-2.0 * a * v / l, 4.0 * v, 4.0 / l.powi(3) - a * a / (s2 * l), 5.0 * a * a / (4.0 * s2) - 2.0 / (l * l)];
        assert_eq!(rate[0], 0.0);
        assert_eq!(rate[1], 0.0);
        assert!((rate[2] + 0.000914214).abs() < 1e-9);
        assert!((rate[3] - 0.0303553).abs() < 1e-7);
    }
}
