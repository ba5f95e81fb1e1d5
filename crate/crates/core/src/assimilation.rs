//! Observation operators, the DA-SMS predictor–corrector, continuous-time
//! data assimilation and sensor-coverage diagnostics.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::linalg::{check_finite_matrix, check_finite_vector, factor_spd};
use crate::numerics::{gram, reg_pinv_apply, IntegratorConfig, Trajectory};
use crate::sms::{assemble_collocation, assemble_quadrature, evolve, FieldValue, ParamFlow, Point, Projection, SmsModel};

/// Below this modulus the gradient of |û| is treated as undefined.
pub const MODULUS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObservationKind {
    /// y_j = û(x_j)
    PointwiseState,
    /// y_j = |û(x_j)|
    PointwiseModulus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationOperator {
    pub kind: ObservationKind,
    pub locations: Vec<Point>,
}

impl ObservationOperator {
    pub fn new(kind: ObservationKind, locations: Vec<Point>) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::InvalidInput("an observation operator needs at least one sensor".into()));
        }
        Ok(Self { kind, locations })
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// Applies the operator to a state value (real or complex).
    pub fn apply_value<V: FieldValue>(&self, v: V) -> Result<f64> {
        match self.kind {
            ObservationKind::PointwiseModulus => Ok(v.modulus()),
            ObservationKind::PointwiseState if V::PARTS == 1 => Ok(v.part(0)),
            ObservationKind::PointwiseState => {
                Err(Error::InvalidInput("pointwise-state observations need a real-valued state".into()))
            }
        }
    }
}

/// Measurements y_i at increasing times t_i.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationSeries {
    pub times: Vec<f64>,
    pub values: Vec<DVector<f64>>,
    pub noise_sigma_frac: f64,
}

impl ObservationSeries {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self, sensors: usize) -> Result<()> {
        if self.times.len() != self.values.len() {
            return Err(Error::DimensionMismatch("observation times and values differ in length".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("observation times must be strictly increasing".into()));
        }
        for y in &self.values {
            if y.len() != sensors {
                return Err(Error::DimensionMismatch(format!("observation has {} entries, operator has {sensors} sensors", y.len())));
            }
            check_finite_vector(y, "observation")?;
        }
        Ok(())
    }
}

/// Inputs of the predictor–corrector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DaConfig {
    pub delta: f64,
    pub maxits: usize,
    pub gamma_t: f64,
    pub da_window: (f64, f64),
    pub forecast_end: f64,
}

impl DaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::InvalidInput(format!("delta must be positive, got {}", self.delta)));
        }
        if self.maxits < 1 {
            return Err(Error::InvalidInput("maxits must be at least 1".into()));
        }
        if !(self.gamma_t >= 0.0 && self.gamma_t.is_finite()) {
            return Err(Error::InvalidInput(format!("gamma_t must be >= 0, got {}", self.gamma_t)));
        }
        let (t0, tm) = self.da_window;
        if !(t0 < tm && tm <= self.forecast_end) {
            return Err(Error::InvalidWindow { start: t0, end: self.forecast_end });
        }
        Ok(())
    }
}

/// ŷ_j = C_j(û(·, θ)).
pub fn observe_model<M: SmsModel>(op: &ObservationOperator, model: &M, theta: &[f64]) -> Result<DVector<f64>> {
    let mut y = DVector::zeros(op.len());
    for (j, x) in op.locations.iter().enumerate() {
        y[j] = op.apply_value(model.eval(x, theta))?;
    }
    check_finite_vector(&y, "model observation")?;
    Ok(y)
}

/// Rows ∇_θ C_j. For the modulus, ∂|û|/∂θ = Re(û* ∂û/∂θ)/|û|.
pub fn observation_jacobian<M: SmsModel>(op: &ObservationOperator, model: &M, theta: &[f64]) -> Result<DMatrix<f64>> {
    let p = model.param_count();
    let mut j = DMatrix::zeros(op.len(), p);
    let mut g = vec![M::Value::zero(); p];
    for (row, x) in op.locations.iter().enumerate() {
        model.grad_theta(x, theta, &mut g);
        match op.kind {
            ObservationKind::PointwiseState => {
                if M::Value::PARTS != 1 {
                    return Err(Error::InvalidInput("pointwise-state observations need a real-valued state".into()));
                }
                for (col, gc) in g.iter().enumerate() {
                    j[(row, col)] = gc.part(0);
                }
            }
            ObservationKind::PointwiseModulus => {
                let u = model.eval(x, theta);
                let m = u.modulus();
                if !(m > MODULUS_FLOOR) {
                    return Err(Error::DegenerateModulus { sensor: row, modulus: m });
                }
                for (col, gc) in g.iter().enumerate() {
                    j[(row, col)] = u.real_dot(gc) / m;
                }
            }
        }
    }
    check_finite_matrix(&j, "observation Jacobian")?;
    Ok(j)
}

/// ‖ŷ − y‖/‖y‖, or the absolute misfit when y = 0.
pub fn observation_error(yhat: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let ny = y.norm();
    let d = (yhat - y).norm();
    if ny > 0.0 {
        d / ny
    } else {
        d
    }
}

/// Outcome of one correction step.
#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub theta: DVector<f64>,
    pub iterations: usize,
    pub pre_rel_err: f64,
    pub post_rel_err: f64,
    /// False when maxits iterations did not reduce the misfit; `theta` is then the best iterate.
    pub reduced: bool,
}

/// Regularized Newton iterations θ ← θ + Jᵀ(JJᵀ + γ̃I)⁻¹(y − ŷ).
///
/// Stops once ‖ŷ − y‖/‖y‖ < δ or after `maxits` iterations. When ‖y‖ = 0 the
/// absolute misfit is compared with δ instead.
pub fn newton_correct<M: SmsModel>(
    theta_in: &DVector<f64>,
    y: &DVector<f64>,
    op: &ObservationOperator,
    model: &M,
    cfg: &DaConfig,
) -> Result<Correction> {
    model.check_params(theta_in.as_slice())?;
    if y.len() != op.len() {
        return Err(Error::DimensionMismatch(format!("{} observations for {} sensors", y.len(), op.len())));
    }
    check_finite_vector(y, "observation")?;

    let mut theta = theta_in.clone();
    let mut yhat = observe_model(op, model, theta.as_slice())?;
    let pre = observation_error(&yhat, y);
    let mut err = pre;
    let mut best = (pre, theta.clone());
    let mut iterations = 0;
    while err >= cfg.delta && iterations < cfg.maxits {
        let j = observation_jacobian(op, model, theta.as_slice())?;
        let step = reg_pinv_apply(&j, &(y - &yhat), cfg.gamma_t)?;
        theta += step;
        iterations += 1;
        yhat = observe_model(op, model, theta.as_slice())?;
        err = observation_error(&yhat, y);
        if err < best.0 {
            best = (err, theta.clone());
        }
    }
    if iterations > 0 && !(err < pre) {
        return Ok(Correction { theta: best.1, iterations, pre_rel_err: pre, post_rel_err: best.0, reduced: false });
    }
    Ok(Correction { theta, iterations, pre_rel_err: pre, post_rel_err: err, reduced: true })
}

/// One line of the correction log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionRecord {
    pub t: f64,
    pub iterations: usize,
    pub pre_rel_err: f64,
    pub post_rel_err: f64,
    pub reduced: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaRun {
    /// States at the window ends, observation times (after correction) and record times.
    pub trajectory: Trajectory,
    pub theta_f: DVector<f64>,
    pub log: Vec<CorrectionRecord>,
}

/// Predictor–corrector over the observation series, followed by a forecast
/// to `cfg.forecast_end`.
///
/// The evolution between observations uses `flow`; states at `record` times
/// are kept in the trajectory. At each observation time the trajectory holds
/// the corrected state.
#[allow(clippy::too_many_arguments)]
pub fn da_sms_run<M: SmsModel, F: ParamFlow>(
    flow: &mut F,
    model: &M,
    theta0: &DVector<f64>,
    series: &ObservationSeries,
    op: &ObservationOperator,
    cfg: &DaConfig,
    evolve_cfg: &IntegratorConfig,
    record: &[f64],
) -> Result<DaRun> {
    cfg.validate()?;
    series.validate(op.len())?;
    model.check_params(theta0.as_slice())?;
    let (t0, tm) = cfg.da_window;
    if let (Some(&first), Some(&last)) = (series.times.first(), series.times.last()) {
        if first < t0 || last > tm {
            return Err(Error::InvalidInput(format!("observation times [{first}, {last}] outside the window [{t0}, {tm}]")));
        }
    }

    let mut trajectory = Trajectory::single(t0, theta0.clone());
    let mut theta = theta0.clone();
    let mut t_prev = t0;
    let mut log = Vec::with_capacity(series.len());
    for (&t, y) in series.times.iter().zip(&series.values) {
        let seg = evolve(flow, &theta, (t_prev, t), evolve_cfg, record)?;
        theta = seg.final_state().expect("nonempty segment").clone();
        trajectory.extend_from(seg);
        let c = newton_correct(&theta, y, op, model, cfg)?;
        log.push(CorrectionRecord {
            t,
            iterations: c.iterations,
            pre_rel_err: c.pre_rel_err,
            post_rel_err: c.post_rel_err,
            reduced: c.reduced,
        });
        theta = c.theta;
        *trajectory.states.last_mut().expect("nonempty trajectory") = theta.clone();
        t_prev = t;
    }
    let seg = evolve(flow, &theta, (t_prev, cfg.forecast_end), evolve_cfg, record)?;
    theta = seg.final_state().expect("nonempty segment").clone();
    trajectory.extend_from(seg);
    Ok(DaRun { trajectory, theta_f: theta, log })
}

/// Writes the correction log as CSV: t, iterations, pre_rel_err, post_rel_err.
pub fn write_corrections_csv<W: Write>(log: &[CorrectionRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,iterations,pre_rel_err,post_rel_err")?;
    for r in log {
        writeln!(out, "{:.16e},{},{:.16e},{:.16e}", r.t, r.iterations, r.pre_rel_err, r.post_rel_err)?;
    }
    Ok(())
}

/// θ̇ = g − Aλ with g = M_γ⁻¹f, A = M_γ⁻¹Jᵀ and (JA)λ = Jg − ẏ, so that Jθ̇ = ẏ.
fn constrained_rate(mg: &DMatrix<f64>, f: &DVector<f64>, j: &DMatrix<f64>, ydot: &DVector<f64>, gamma: f64) -> Result<DVector<f64>> {
    let p = mg.nrows();
    if j.ncols() != p || f.len() != p || j.nrows() != ydot.len() {
        return Err(Error::DimensionMismatch(format!(
            "metric {}×{}, vector field {}, Jacobian {}×{}, ẏ {}",
            p,
            mg.ncols(),
            f.len(),
            j.nrows(),
            j.ncols(),
            ydot.len()
        )));
    }
    check_finite_matrix(j, "continuous DA Jacobian")?;
    check_finite_vector(ydot, "observation rate")?;
    let chol = factor_spd(mg, gamma > 0.0)?;
    // Same refinement as the unconstrained solve, so r = 0 reproduces it bit for bit.
    let mut g = chol.solve(f);
    let r = f - mg * &g;
    g += chol.solve(&r);
    if j.nrows() == 0 {
        check_finite_vector(&g, "continuous DA rate")?;
        return Ok(g);
    }
    let a = chol.solve(&j.transpose());
    let mut s = j * &a;
    // JA is symmetric in exact arithmetic; symmetrize the rounding.
    for r in 0..s.nrows() {
        for c in 0..r {
            let v = 0.5 * (s[(r, c)] + s[(c, r)]);
            s[(r, c)] = v;
            s[(c, r)] = v;
        }
    }
    let s_chol = factor_spd(&s, false).map_err(|_| Error::RankDeficientJacobian)?;
    let rhs = j * &g - ydot;
    let mut lambda = s_chol.solve(&rhs);
    lambda += s_chol.solve(&(&rhs - &s * &lambda));
    let rate = g - a * lambda;
    check_finite_vector(&rate, "continuous DA rate")?;
    Ok(rate)
}

/// Constrained symbolic rate: minimizes the residual subject to Jθ̇ = ẏ with M_γ = M + γI.
pub fn continuous_da_rhs_symbolic(
    m: &DMatrix<f64>,
    f: &DVector<f64>,
    j: &DMatrix<f64>,
    ydot: &DVector<f64>,
    gamma: f64,
) -> Result<DVector<f64>> {
    check_finite_matrix(m, "metric tensor")?;
    check_finite_vector(f, "vector field")?;
    let mut mg = m.clone();
    for i in 0..mg.nrows().min(mg.ncols()) {
        mg[(i, i)] += gamma;
    }
    constrained_rate(&mg, f, j, ydot, gamma)
}

/// Collocation form: M_γ = M̃ᵀM̃ + γI and f = M̃ᵀf̃.
pub fn continuous_da_rhs_collocation(
    mt: &DMatrix<f64>,
    ft: &DVector<f64>,
    j: &DMatrix<f64>,
    ydot: &DVector<f64>,
    gamma: f64,
) -> Result<DVector<f64>> {
    if mt.nrows() != ft.len() {
        return Err(Error::DimensionMismatch("collocation matrix and vector differ in rows".into()));
    }
    check_finite_matrix(mt, "collocation matrix")?;
    check_finite_vector(ft, "collocation vector")?;
    let mut mg = gram(mt);
    for i in 0..mg.nrows() {
        mg[(i, i)] += gamma;
    }
    let f = mt.tr_mul(ft);
    constrained_rate(&mg, &f, j, ydot, gamma)
}

/// Continuous-time DA flow: the SMS projection constrained by Jθ̇ = ẏ(t).
pub struct ContinuousDaFlow<'a, M, Y> {
    pub model: &'a M,
    pub projection: &'a Projection,
    pub op: &'a ObservationOperator,
    pub ydot: Y,
}

impl<M, Y> ParamFlow for ContinuousDaFlow<'_, M, Y>
where
    M: SmsModel,
    Y: FnMut(f64) -> DVector<f64>,
{
    fn rate(&mut self, theta: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let j = observation_jacobian(self.op, self.model, theta.as_slice())?;
        let ydot = (self.ydot)(t);
        match self.projection {
            Projection::Collocation { grid, gamma } => {
                let (mt, ft) = assemble_collocation(self.model, theta.as_slice(), grid, t)?;
                continuous_da_rhs_collocation(&mt, &ft, &j, &ydot, *gamma)
            }
            Projection::Quadrature { rule, gamma } => {
                let (m, f) = assemble_quadrature(self.model, theta.as_slice(), rule, t)?;
                continuous_da_rhs_symbolic(&m, &f, &j, &ydot, *gamma)
            }
        }
    }
}

/// Δ = max over samples of the distance to the nearest sensor.
pub fn fill_distance(sensors: &[Point], samples: &[Point], dim: usize) -> f64 {
    samples
        .iter()
        .map(|x| nearest(sensors, x, dim).1)
        .fold(0.0, f64::max)
}

fn dist(a: &Point, b: &Point, dim: usize) -> f64 {
    (0..dim).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
}

/// Index of and distance to the closest sensor (lowest index on ties).
fn nearest(sensors: &[Point], x: &Point, dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, s) in sensors.iter().enumerate() {
        let d = dist(s, x, dim);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Dense sample set over a domain box: `n` points per axis including both ends.
pub fn dense_samples(domain: &crate::sms::Domain, n: usize) -> Vec<Point> {
    let n = n.max(2);
    let axis = |a: usize, i: usize| domain.lower[a] + domain.length(a) * i as f64 / (n - 1) as f64;
    if domain.dim == 1 {
        (0..n).map(|i| [axis(0, i), 0.0]).collect()
    } else {
        let mut pts = Vec::with_capacity(n * n);
        for i in 0..n {
            for k in 0..n {
                pts.push([axis(0, i), axis(1, k)]);
            }
        }
        pts
    }
}

/// Sensor coverage and sampled Lipschitz bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorDiagnostics {
    pub fill_distance: f64,
    pub lipschitz_u: f64,
    pub lipschitz_uhat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Report {
    pub diagnostics: SensorDiagnostics,
    /// max over samples of |û − u| − bound; ≤ 0 means the inequality held everywhere.
    pub max_violation: f64,
    pub violations: usize,
}

/// Checks |û(x) − u(x)| ≤ (L_u + L_û)Δ + |û(x_ĵ) − u(x_ĵ)| at every sample,
/// with x_ĵ the sensor nearest to x.
///
/// The Lipschitz constants are the largest difference quotients over two
/// families of pairs: consecutive samples, and each sample with its nearest
/// sensor.
pub fn lemma1_bound_check<M, U>(u_ref: U, model: &M, theta: &[f64], sensors: &[Point], samples: &[Point]) -> Lemma1Report
where
    M: SmsModel,
    U: Fn(&Point) -> M::Value,
{
    let dim = model.domain().dim;
    let uhat: Vec<M::Value> = samples.iter().map(|x| model.eval(x, theta)).collect();
    let u: Vec<M::Value> = samples.iter().map(&u_ref).collect();
    let s_hat: Vec<M::Value> = sensors.iter().map(|x| model.eval(x, theta)).collect();
    let s_u: Vec<M::Value> = sensors.iter().map(&u_ref).collect();
    let near: Vec<(usize, f64)> = samples.iter().map(|x| nearest(sensors, x, dim)).collect();

    let mut l_u = 0.0_f64;
    let mut l_hat = 0.0_f64;
    let quotient = |a: M::Value, b: M::Value, d: f64, l: &mut f64| {
        if d > 0.0 {
            *l = l.max((a - b).modulus() / d);
        }
    };
    for k in 1..samples.len() {
        let d = dist(&samples[k], &samples[k - 1], dim);
        quotient(u[k], u[k - 1], d, &mut l_u);
        quotient(uhat[k], uhat[k - 1], d, &mut l_hat);
    }
    for (k, &(j, d)) in near.iter().enumerate() {
        quotient(u[k], s_u[j], d, &mut l_u);
        quotient(uhat[k], s_hat[j], d, &mut l_hat);
    }

    let delta = near.iter().map(|n| n.1).fold(0.0, f64::max);
    let mut max_violation = f64::NEG_INFINITY;
    let mut violations = 0;
    for (k, &(j, _)) in near.iter().enumerate() {
        let lhs = (uhat[k] - u[k]).modulus();
        let bound = (l_u + l_hat) * delta + (s_hat[j] - s_u[j]).modulus();
        let v = lhs - bound;
        if v > 1e-6 {
            violations += 1;
        }
        max_violation = max_violation.max(v);
    }
    Lemma1Report {
        diagnostics: SensorDiagnostics { fill_distance: delta, lipschitz_u: l_u, lipschitz_uhat: l_hat },
        max_violation,
        violations,
    }
}
