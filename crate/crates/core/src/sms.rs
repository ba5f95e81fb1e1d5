//! Shape-morphing solutions: the ansatz interface and the least-squares
//! evolution equations built from it.
//!
//! A model supplies û(x, θ), the parameter gradient ∂û/∂θ and the PDE
//! right-hand side F(û). The parameter rate θ̇ is the minimizer of the PDE
//! residual Σ ∂û/∂θ_j θ̇_j − F(û), measured either at collocation points or
//! through a quadrature of the L² inner product, plus a Tikhonov term γ‖θ̇‖².

use std::fmt::Debug;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{gram, integrate_recorded, tikhonov_solve, IntegratorConfig, Trajectory};

/// Parameter vector θ; the layout is defined by the owning model.
pub type ParamVector = DVector<f64>;

/// A spatial location. One-dimensional models read only `x[0]`.
pub type Point = [f64; 2];

/// Scalar state values: real, or complex with real/imaginary parts treated as
/// two real components.
pub trait FieldValue:
    Copy + Debug + PartialEq + Send + Sync + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + 'static
{
    /// Number of real components (1 or 2).
    const PARTS: usize;
    fn zero() -> Self;
    /// Builds a value from its components; only the first `PARTS` are read.
    fn from_parts(parts: [f64; 2]) -> Self;
    fn part(&self, k: usize) -> f64;
    fn modulus(&self) -> f64;
    /// Real inner product Re(a* b).
    fn real_dot(&self, other: &Self) -> f64 {
        (0..Self::PARTS).map(|k| self.part(k) * other.part(k)).sum()
    }
    fn is_finite(&self) -> bool {
        (0..Self::PARTS).all(|k| self.part(k).is_finite())
    }
}

impl FieldValue for f64 {
    const PARTS: usize = 1;
    fn zero() -> Self {
        0.0
    }
    fn from_parts(parts: [f64; 2]) -> Self {
        parts[0]
    }
    fn part(&self, _k: usize) -> f64 {
        *self
    }
    fn modulus(&self) -> f64 {
        self.abs()
    }
}

impl FieldValue for Complex64 {
    const PARTS: usize = 2;
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_parts(parts: [f64; 2]) -> Self {
        Complex64::new(parts[0], parts[1])
    }
    fn part(&self, k: usize) -> f64 {
        if k == 0 {
            self.re
        } else {
            self.im
        }
    }
    fn modulus(&self) -> f64 {
        self.norm()
    }
}

/// Axis-aligned box. `dim` is 1 or 2; unused upper coordinates are ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub dim: usize,
    pub lower: Point,
    pub upper: Point,
    pub periodic: [bool; 2],
}

impl Domain {
    pub fn interval(a: f64, b: f64, periodic: bool) -> Self {
        Self { dim: 1, lower: [a, 0.0], upper: [b, 0.0], periodic: [periodic, false] }
    }

    pub fn rectangle(lower: Point, upper: Point) -> Self {
        Self { dim: 2, lower, upper, periodic: [false, false] }
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn measure(&self) -> f64 {
        (0..self.dim).map(|a| self.length(a)).product()
    }

    pub fn contains(&self, x: &Point) -> bool {
        (0..self.dim).all(|a| x[a] >= self.lower[a] - 1e-12 && x[a] <= self.upper[a] + 1e-12)
    }

    pub fn distance(&self, a: &Point, b: &Point) -> f64 {
        (0..self.dim).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
    }
}

/// One shape-morphing ansatz together with the PDE it approximates.
pub trait SmsModel {
    type Value: FieldValue;

    fn param_count(&self) -> usize;
    fn domain(&self) -> Domain;
    fn eval(&self, x: &Point, theta: &[f64]) -> Self::Value;
    /// Writes ∂û/∂θ_j into `out[j]`; `out.len() == param_count()`.
    fn grad_theta(&self, x: &Point, theta: &[f64], out: &mut [Self::Value]);
    /// F(û) at `x`, built from exact spatial derivatives of the ansatz.
    fn pde_rhs(&self, x: &Point, theta: &[f64], t: f64) -> Self::Value;

    /// ∂û/∂θ into `out` and F(û) in one pass; models may share work between the two.
    fn grad_and_rhs(&self, x: &Point, theta: &[f64], t: f64, out: &mut [Self::Value]) -> Self::Value {
        self.grad_theta(x, theta, out);
        self.pde_rhs(x, theta, t)
    }

    fn check_params(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} parameters, got {}",
                self.param_count(),
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(())
    }
}

/// Collocation points x_1..x_{N_c}.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationGrid {
    pub points: Vec<Point>,
}

impl CollocationGrid {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("collocation grid is empty".into()));
        }
        Ok(Self { points })
    }

    /// `n` equispaced points on a periodic interval, right endpoint excluded.
    pub fn periodic_1d(a: f64, b: f64, n: usize) -> Self {
        let h = (b - a) / n as f64;
        Self { points: (0..n).map(|i| [a + i as f64 * h, 0.0]).collect() }
    }

    /// Cell centres of an `nx × nz` partition of the box.
    pub fn cell_centres_2d(domain: &Domain, nx: usize, nz: usize) -> Self {
        let hx = domain.length(0) / nx as f64;
        let hz = domain.length(1) / nz as f64;
        let mut points = Vec::with_capacity(nx * nz);
        for i in 0..nx {
            for j in 0..nz {
                points.push([domain.lower[0] + (i as f64 + 0.5) * hx, domain.lower[1] + (j as f64 + 0.5) * hz]);
            }
        }
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Nodes and positive weights approximating ∫_Ω.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn midpoint_1d(a: f64, b: f64, n: usize) -> Self {
        let h = (b - a) / n as f64;
        Self { nodes: (0..n).map(|i| [a + (i as f64 + 0.5) * h, 0.0]).collect(), weights: vec![h; n] }
    }

    pub fn midpoint_2d(domain: &Domain, nx: usize, nz: usize) -> Self {
        let grid = CollocationGrid::cell_centres_2d(domain, nx, nz);
        let w = domain.measure() / (nx * nz) as f64;
        Self { weights: vec![w; grid.len()], nodes: grid.points }
    }

    /// The default rule for a model domain: 4096 midpoint nodes in 1D, 256×64 in 2D.
    pub fn default_for(domain: &Domain) -> Self {
        if domain.dim == 1 {
            Self::midpoint_1d(domain.lower[0], domain.upper[0], 4096)
        } else {
            Self::midpoint_2d(domain, 256, 64)
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Residual Σ_j ∂û/∂θ_j θ̇_j − F(û) at `x`.
pub fn residual<M: SmsModel>(model: &M, x: &Point, theta: &[f64], theta_dot: &[f64], t: f64) -> Result<M::Value> {
    model.check_params(theta)?;
    let mut g = vec![M::Value::zero(); model.param_count()];
    model.grad_theta(x, theta, &mut g);
    let mut acc = M::Value::zero();
    for (gj, &dj) in g.iter().zip(theta_dot) {
        acc = acc + *gj * dj;
    }
    let r = acc - model.pde_rhs(x, theta, t);
    if !r.is_finite() {
        return Err(Error::NonFinite("residual"));
    }
    Ok(r)
}

/// Collocation system (M̃, f̃). Complex models contribute two real rows per
/// point, real part first.
pub fn assemble_collocation<M: SmsModel>(
    model: &M,
    theta: &[f64],
    grid: &CollocationGrid,
    t: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    model.check_params(theta)?;
    if grid.is_empty() {
        return Err(Error::InvalidInput("collocation grid is empty".into()));
    }
    let parts = M::Value::PARTS;
    let p = model.param_count();
    let rows = parts * grid.len();
    let mut mt = DMatrix::zeros(rows, p);
    let mut ft = DVector::zeros(rows);
    let mut g = vec![M::Value::zero(); p];
    for (i, x) in grid.points.iter().enumerate() {
        let f = model.grad_and_rhs(x, theta, t, &mut g);
        for k in 0..parts {
            let row = parts * i + k;
            for (j, gj) in g.iter().enumerate() {
                mt[(row, j)] = gj.part(k);
            }
            ft[row] = f.part(k);
        }
    }
    if !(mt.iter().all(|v| v.is_finite()) && ft.iter().all(|v| v.is_finite())) {
        return Err(Error::NonFinite("collocation assembly"));
    }
    Ok((mt, ft))
}

/// θ̇ from (M̃ᵀM̃ + γI)θ̇ = M̃ᵀf̃.
pub fn sms_rhs_collocation<M: SmsModel>(
    model: &M,
    theta: &[f64],
    grid: &CollocationGrid,
    gamma: f64,
    t: f64,
) -> Result<DVector<f64>> {
    let (mt, ft) = assemble_collocation(model, theta, grid, t)?;
    tikhonov_solve(&mt, &ft, gamma)
}

/// Quadrature-weighted gradient matrix G with rows √w ∂û/∂θ (split into real
/// parts) and the matching weighted F(û). M = GᵀG and f = Gᵀ F_w.
fn weighted_rows<M: SmsModel>(model: &M, theta: &[f64], rule: &QuadratureRule, t: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if rule.nodes.len() != rule.weights.len() || rule.nodes.is_empty() {
        return Err(Error::InvalidInput("quadrature rule needs matching nonempty nodes and weights".into()));
    }
    let parts = M::Value::PARTS;
    let p = model.param_count();
    let mut g_mat = DMatrix::zeros(parts * rule.nodes.len(), p);
    let mut f_w = DVector::zeros(parts * rule.nodes.len());
    let mut g = vec![M::Value::zero(); p];
    for (i, (x, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        let sw = w.sqrt();
        let f = model.grad_and_rhs(x, theta, t, &mut g);
        for k in 0..parts {
            let row = parts * i + k;
            for (j, gj) in g.iter().enumerate() {
                g_mat[(row, j)] = sw * gj.part(k);
            }
            f_w[row] = sw * f.part(k);
        }
    }
    Ok((g_mat, f_w))
}

/// Metric tensor M_ij = Re⟨∂_iû, ∂_jû⟩ and vector field f_i = Re⟨∂_iû, F(û)⟩.
pub fn assemble_quadrature<M: SmsModel>(
    model: &M,
    theta: &[f64],
    rule: &QuadratureRule,
    t: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    model.check_params(theta)?;
    let (g_mat, f_w) = weighted_rows(model, theta, rule, t)?;
    let m = gram(&g_mat);
    let f = g_mat.tr_mul(&f_w);
    if !(m.iter().all(|v| v.is_finite()) && f.iter().all(|v| v.is_finite())) {
        return Err(Error::NonFinite("quadrature assembly"));
    }
    Ok((m, f))
}

/// Something that produces θ̇ from (θ, t).
pub trait ParamFlow {
    fn rate(&mut self, theta: &DVector<f64>, t: f64) -> Result<DVector<f64>>;
}

impl<F> ParamFlow for F
where
    F: FnMut(&DVector<f64>, f64) -> Result<DVector<f64>>,
{
    fn rate(&mut self, theta: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        self(theta, t)
    }
}

/// How the residual is projected onto parameter rates.
#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    Collocation { grid: CollocationGrid, gamma: f64 },
    Quadrature { rule: QuadratureRule, gamma: f64 },
}

/// The standard SMS flow of a model under a projection.
pub struct ProjectedFlow<'a, M> {
    pub model: &'a M,
    pub projection: &'a Projection,
}

impl<'a, M: SmsModel> ProjectedFlow<'a, M> {
    pub fn new(model: &'a M, projection: &'a Projection) -> Self {
        Self { model, projection }
    }
}

impl<M: SmsModel> ParamFlow for ProjectedFlow<'_, M> {
    fn rate(&mut self, theta: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        match self.projection {
            Projection::Collocation { grid, gamma } => sms_rhs_collocation(self.model, theta.as_slice(), grid, *gamma, t),
            Projection::Quadrature { rule, gamma } => {
                let (mut m, f) = assemble_quadrature(self.model, theta.as_slice(), rule, t)?;
                for i in 0..m.nrows() {
                    m[(i, i)] += gamma;
                }
                crate::numerics::solve_spd(&m, &f, *gamma > 0.0)
            }
        }
    }
}

/// Integrates a parameter flow over `window`, recording the state at any
/// `record` times strictly inside it. A zero-length window returns θ0.
pub fn evolve<F: ParamFlow>(
    flow: &mut F,
    theta0: &DVector<f64>,
    window: (f64, f64),
    cfg: &IntegratorConfig,
    record: &[f64],
) -> Result<Trajectory> {
    let (ta, tb) = window;
    if ta == tb {
        return Ok(Trajectory::single(ta, theta0.clone()));
    }
    integrate_recorded(|y, t| flow.rate(y, t), theta0, window, cfg, record)
}

/// Evolves a model under `projection`.
pub fn evolve_model<M: SmsModel>(
    model: &M,
    projection: &Projection,
    theta0: &DVector<f64>,
    window: (f64, f64),
    cfg: &IntegratorConfig,
    record: &[f64],
) -> Result<Trajectory> {
    model.check_params(theta0.as_slice())?;
    let mut flow = ProjectedFlow::new(model, projection);
    evolve(&mut flow, theta0, window, cfg, record)
}

/// Samples û on a set of points.
pub fn sample_model<M: SmsModel>(model: &M, theta: &[f64], points: &[Point]) -> Vec<M::Value> {
    points.iter().map(|x| model.eval(x, theta)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::toy::{ScaledSine, ToyPde};
    use crate::models::NlsGaussian;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn residual_of_static_model() {
        let m = ScaledSine::new(ToyPde::Static);
        for x in [0.1, 1.0, 2.5] {
            assert_eq!(residual(&m, &[x, 0.0], &[1.7], &[0.0], 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn residual_sine_rate_one() {
        let m = ScaledSine::new(ToyPde::Static);
        let r = residual(&m, &[FRAC_PI_2, 0.0], &[2.0], &[1.0], 0.0).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn residual_nls_closed_form_rates() {
        let m = NlsGaussian::default();
        let theta = [0.2, 20.0, 0.0, 0.0];
        let rate = crate::models::nls::closed_form_rate(&theta).unwrap();
        let r = residual(&m, &[0.0, 0.0], &theta, rate.as_slice(), 0.0).unwrap();
        assert!(r.norm() < 1e-3);
        assert!(r.norm() > 0.0);
    }

    #[test]
    fn collocation_sine_entries() {
        let grid = CollocationGrid::new(vec![[FRAC_PI_2, 0.0]]).unwrap();
        let (mt, _) = assemble_collocation(&ScaledSine::new(ToyPde::Static), &[1.0], &grid, 0.0).unwrap();
        assert_eq!(mt.shape(), (1, 1));
        assert!((mt[(0, 0)] - 1.0).abs() < 1e-15);
        let (_, ft) = assemble_collocation(&ScaledSine::new(ToyPde::Diffusion), &[2.0], &grid, 0.0).unwrap();
        assert!((ft[0] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn collocation_complex_rows_split() {
        let grid = CollocationGrid::periodic_1d(-50.0, 50.0, 7);
        let (mt, ft) = assemble_collocation(&NlsGaussian::default(), &[0.3, 10.0, 0.2, 0.1], &grid, 0.0).unwrap();
        assert_eq!(mt.shape(), (14, 4));
        assert_eq!(ft.len(), 14);
    }

    #[test]
    fn collocation_rates() {
        let grid = CollocationGrid::new(vec![[FRAC_PI_2, 0.0]]).unwrap();
        let m = ScaledSine::new(ToyPde::Growth);
        assert!((sms_rhs_collocation(&m, &[1.0], &grid, 0.0, 0.0).unwrap()[0] - 1.0).abs() < 1e-14);
        assert!((sms_rhs_collocation(&m, &[1.0], &grid, 1.0, 0.0).unwrap()[0] - 0.5).abs() < 1e-14);
        let zero = ScaledSine::new(ToyPde::Static);
        assert_eq!(sms_rhs_collocation(&zero, &[1.3], &grid, 1e-3, 0.0).unwrap()[0], 0.0);
    }

    #[test]
    fn quadrature_sine_metric() {
        let rule = QuadratureRule::midpoint_1d(0.0, 2.0 * PI, 10_000);
        assert!((rule.total_weight() - 2.0 * PI).abs() < 1e-8);
        let (m, _) = assemble_quadrature(&ScaledSine::new(ToyPde::Static), &[1.0], &rule, 0.0).unwrap();
        assert!((m[(0, 0)] - PI).abs() < 1e-3);
    }

    #[test]
    fn quadrature_metric_exactly_symmetric() {
        let m = NlsGaussian::default();
        let rule = QuadratureRule::midpoint_1d(-200.0, 200.0, 4096);
        let (mm, _) = assemble_quadrature(&m, &[0.3, 12.0, 0.1, 0.4], &rule, 0.0).unwrap();
        assert_eq!(mm, mm.transpose());
    }

    #[test]
    fn evolve_zero_window_is_identity() {
        let m = NlsGaussian::default();
        let theta0 = DVector::from_vec(vec![0.2, 20.0, 0.0, 0.0]);
        let proj = Projection::Quadrature { rule: QuadratureRule::midpoint_1d(-100.0, 100.0, 64), gamma: 0.0 };
        let tr = evolve_model(&m, &proj, &theta0, (0.0, 0.0), &IntegratorConfig::default(), &[]).unwrap();
        assert_eq!(tr.times, vec![0.0]);
        assert_eq!(tr.states[0], theta0);
    }

    #[test]
    fn evolve_growth_matches_exponential() {
        let grid = CollocationGrid::periodic_1d(0.0, 2.0 * PI, 16);
        let proj = Projection::Collocation { grid, gamma: 0.0 };
        let m = ScaledSine::new(ToyPde::Growth);
        let tr = evolve_model(&m, &proj, &DVector::from_vec(vec![1.0]), (0.0, 1.0), &IntegratorConfig::default(), &[0.5]).unwrap();
        assert_eq!(tr.len(), 3);
        assert!((tr.states[1][0] - 0.5_f64.exp()).abs() < 1e-6);
        assert!((tr.final_state().unwrap()[0] - 1.0_f64.exp()).abs() < 1e-6);
    }
}
