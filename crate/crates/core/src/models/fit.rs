//! Least-squares fit of a real ansatz to an initial condition.
//!
//! Each restart draws random shape parameters, solves the linear problem
//! for the amplitudes, then runs damped Gauss–Newton (Levenberg) on all
//! parameters. Restarts run in order and stop at the first one that reaches
//! the target; otherwise the best restart is reported in the error.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::{AdNetwork, KsNetwork, AD_NODE_PARAMS, KS_NODE_PARAMS};
use crate::numerics::tikhonov_solve;
use crate::sms::{Point, SmsModel};

/// A real ansatz that knows how to seed a fit.
pub trait FitAnsatz: SmsModel<Value = f64> {
    /// Random starting parameters; amplitudes may be arbitrary.
    fn random_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    /// Indices of parameters that enter û linearly.
    fn amplitude_indices(&self) -> Vec<usize>;
}

impl FitAnsatz for KsNetwork {
    fn random_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut th = Vec::with_capacity(self.param_count());
        for _ in 0..self.nodes {
            th.push(0.0);
            th.push(rng.random_range(-2.0..2.0));
            th.push(rng.random_range(-1.0..1.0));
            th.push(rng.random_range(0.0..std::f64::consts::TAU));
        }
        th
    }

    fn amplitude_indices(&self) -> Vec<usize> {
        (0..self.nodes).map(|i| KS_NODE_PARAMS * i).collect()
    }
}

impl FitAnsatz for AdNetwork {
    fn random_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut th = Vec::with_capacity(self.param_count());
        for _ in 0..self.nodes {
            th.push(0.0);
            th.push(rng.random_range(-1.0..1.0));
            th.push(rng.random_range(-1.5..1.5));
            th.push(rng.random_range(-1.5..1.5));
            th.push(rng.random_range(0.0..std::f64::consts::TAU));
            th.push(rng.random_range(0.0..std::f64::consts::TAU));
        }
        th
    }

    fn amplitude_indices(&self) -> Vec<usize> {
        (0..self.nodes).map(|i| AD_NODE_PARAMS * i).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_rel_error: f64,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_rel_error: 1e-3, restarts: 20, max_iters: 400, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta: DVector<f64>,
    pub rel_error: f64,
    pub restart: usize,
}

struct Problem<'a, M> {
    model: &'a M,
    points: &'a [Point],
    target: &'a DVector<f64>,
    target_norm: f64,
}

impl<M: FitAnsatz> Problem<'_, M> {
    fn residual(&self, theta: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.points.len(),
            self.points.iter().zip(self.target.iter()).map(|(x, u)| self.model.eval(x, theta) - u),
        )
    }

    fn jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        let p = self.model.param_count();
        let mut j = DMatrix::zeros(self.points.len(), p);
        let mut g = vec![0.0; p];
        for (i, x) in self.points.iter().enumerate() {
            self.model.grad_theta(x, theta, &mut g);
            for (k, gk) in g.iter().enumerate() {
                j[(i, k)] = *gk;
            }
        }
        j
    }

    fn rel(&self, r: &DVector<f64>) -> f64 {
        r.norm() / self.target_norm
    }

    /// Amplitudes by linear least squares at fixed shapes.
    fn init_amplitudes(&self, theta: &mut [f64]) -> Result<()> {
        let idx = self.model.amplitude_indices();
        for &i in &idx {
            theta[i] = 0.0;
        }
        let full = self.jacobian(theta);
        let basis = full.select_columns(idx.iter());
        let amps = tikhonov_solve(&basis, self.target, 1e-10 * self.target_norm * self.target_norm)?;
        for (&i, a) in idx.iter().zip(amps.iter()) {
            theta[i] = *a;
        }
        Ok(())
    }

    fn levenberg(&self, theta: &mut DVector<f64>, opts: &FitOptions) -> f64 {
        let mut r = self.residual(theta.as_slice());
        let mut err = self.rel(&r);
        let mut mu = {
            let j = self.jacobian(theta.as_slice());
            1e-3 * j.column_iter().map(|c| c.norm_squared()).fold(0.0, f64::max).max(1e-12)
        };
        for _ in 0..opts.max_iters {
            if err <= 0.5 * opts.max_rel_error {
                break;
            }
            let j = self.jacobian(theta.as_slice());
            let mut improved = false;
            for _ in 0..30 {
                let Ok(step) = tikhonov_solve(&j, &(-&r), mu) else {
                    mu *= 10.0;
                    continue;
                };
                let trial = &*theta + &step;
                let r_trial = self.residual(trial.as_slice());
                let e_trial = self.rel(&r_trial);
                if e_trial.is_finite() && e_trial < err {
                    *theta = trial;
                    r = r_trial;
                    let gain = (err - e_trial) / err;
                    err = e_trial;
                    mu = (mu / 3.0).max(1e-15);
                    improved = gain > 1e-10;
                    break;
                }
                mu *= 4.0;
            }
            if !improved {
                break;
            }
        }
        err
    }
}

/// Fits `model` to `target[k] = u0(points[k])`.
pub fn fit_initial<M: FitAnsatz>(model: &M, points: &[Point], target: &[f64], opts: &FitOptions) -> Result<FitResult> {
    if points.len() != target.len() || points.is_empty() {
        return Err(Error::InvalidInput("fit grid and target must be nonempty and of equal length".into()));
    }
    let target = DVector::from_column_slice(target);
    let target_norm = target.norm();
    if target_norm == 0.0 {
        return Ok(FitResult { theta: DVector::zeros(model.param_count()), rel_error: 0.0, restart: 0 });
    }
    let problem = Problem { model, points, target: &target, target_norm };
    let mut best: Option<FitResult> = None;
    for restart in 0..opts.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(restart as u64));
        let mut theta = model.random_params(&mut rng);
        problem.init_amplitudes(&mut theta)?;
        let mut theta = DVector::from_vec(theta);
        let err = problem.levenberg(&mut theta, opts);
        if best.as_ref().is_none_or(|b| err < b.rel_error) {
            best = Some(FitResult { theta, rel_error: err, restart });
        }
        if err <= opts.max_rel_error {
            break;
        }
    }
    let best = best.expect("at least one restart");
    if best.rel_error <= opts.max_rel_error {
        Ok(best)
    } else {
        Err(Error::FitFailed { best: best.rel_error, target: opts.max_rel_error })
    }
}

/// Fits starting from a given parameter vector, without restarts.
pub fn refine_fit<M: FitAnsatz>(model: &M, points: &[Point], target: &[f64], theta0: &[f64], opts: &FitOptions) -> FitResult {
    let target = DVector::from_column_slice(target);
    let problem = Problem { model, points, target: &target, target_norm: target.norm().max(f64::MIN_POSITIVE) };
    let mut theta = DVector::from_column_slice(theta0);
    let err = problem.levenberg(&mut theta, opts);
    FitResult { theta, rel_error: err, restart: 0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ks_initial_condition, GyreFlowConfig};
    use crate::sms::CollocationGrid;

    #[test]
    fn realizable_target_is_recovered() {
        let m = KsNetwork::new(2, 22.0);
        let star = [0.8, 1.1, 0.2, 0.5, -0.4, 0.7, -0.3, 2.0];
        let pts = CollocationGrid::periodic_1d(-11.0, 11.0, 128).points;
        let target: Vec<f64> = pts.iter().map(|x| m.eval(x, &star)).collect();
        let opts = FitOptions { max_rel_error: 1e-9, restarts: 20, max_iters: 2000, seed: 1 };
        let fit = fit_initial(&m, &pts, &target, &opts).unwrap();
        assert!(fit.rel_error < 1e-8);
    }

    #[test]
    fn ks_initial_condition_fit() {
        let m = KsNetwork::new(10, 22.0);
        let u0 = ks_initial_condition(22.0);
        let pts = CollocationGrid::periodic_1d(-11.0, 11.0, 256).points;
        let target: Vec<f64> = pts.iter().map(|x| u0(x[0])).collect();
        let fit = fit_initial(&m, &pts, &target, &FitOptions::default()).unwrap();
        assert!(fit.rel_error < 1e-3, "{}", fit.rel_error);
    }

    #[test]
    fn unreachable_target_reports_best() {
        let m = KsNetwork::new(1, 22.0);
        let pts = CollocationGrid::periodic_1d(-11.0, 11.0, 64).points;
        let target: Vec<f64> = pts.iter().map(|x| (x[0] * 3.0).sin() + (x[0] * 1.7).cos()).collect();
        let opts = FitOptions { max_rel_error: 1e-6, restarts: 2, max_iters: 50, seed: 0 };
        match fit_initial(&m, &pts, &target, &opts) {
            Err(Error::FitFailed { best, target }) => {
                assert!(best > target);
            }
            other => panic!("expected FitFailed, got {other:?}"),
        }
    }

    #[test]
    fn ad_small_network_fit_runs() {
        let m = AdNetwork::new(6, 1e-3, GyreFlowConfig::default());
        let pts = CollocationGrid::cell_centres_2d(&m.domain(), 16, 8).points;
        let u0 = crate::models::ad_initial_condition(4.0, 1.0);
        let target: Vec<f64> = pts.iter().map(|x| u0(x[0], x[1])).collect();
        let opts = FitOptions { max_rel_error: 1e-2, restarts: 5, max_iters: 300, seed: 0 };
        let fit = fit_initial(&m, &pts, &target, &opts).unwrap();
        assert!(fit.rel_error <= 1e-2);
    }
}
