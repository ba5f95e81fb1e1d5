//! Gaussian wave packet for the focusing NLS  u_t = i u_xx + i|u|²u.
//!
//! û = A exp(−x²/L² + i(V/L)x² + iφ), θ = (A, L, V, φ).

use nalgebra::DVector;
use num_complex::Complex64;
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::sms::{Domain, ParamFlow, Point, SmsModel};

/// Periodic domain length used by the reference solver, 256√2π.
pub const NLS_DOMAIN_LENGTH: f64 = 256.0 * SQRT_2 * PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlsGaussianParams {
    pub amplitude: f64,
    pub length: f64,
    pub speed: f64,
    pub phase: f64,
}

impl NlsGaussianParams {
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.amplitude, self.length, self.speed, self.phase])
    }

    pub fn from_slice(theta: &[f64]) -> Self {
        Self { amplitude: theta[0], length: theta[1], speed: theta[2], phase: theta[3] }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NlsGaussian {
    pub domain_length: f64,
}

impl Default for NlsGaussian {
    fn default() -> Self {
        Self { domain_length: NLS_DOMAIN_LENGTH }
    }
}

impl NlsGaussian {
    /// û and the chirp factor c = −2/L² + 2iV/L, for which û_x = c x û.
    fn value_and_chirp(x: f64, theta: &[f64]) -> (Complex64, Complex64) {
        let (a, l, v, phi) = (theta[0], theta[1], theta[2], theta[3]);
        let x2 = x * x;
        let g = Complex64::new(-x2 / (l * l), v / l * x2 + phi);
        (a * g.exp(), Complex64::new(-2.0 / (l * l), 2.0 * v / l))
    }
}

impl SmsModel for NlsGaussian {
    type Value = Complex64;

    fn param_count(&self) -> usize {
        4
    }

    fn domain(&self) -> Domain {
        Domain::interval(-0.5 * self.domain_length, 0.5 * self.domain_length, true)
    }

    fn eval(&self, x: &Point, theta: &[f64]) -> Complex64 {
        Self::value_and_chirp(x[0], theta).0
    }

    fn grad_theta(&self, x: &Point, theta: &[f64], out: &mut [Complex64]) {
        let (l, v) = (theta[1], theta[2]);
        let x2 = x[0] * x[0];
        let u = Self::value_and_chirp(x[0], theta).0;
        let i = Complex64::i();
        // ∂A uses exp(g) directly so the gradient stays defined at A = 0.
        let g = Complex64::new(-x2 / (l * l), v / l * x2 + theta[3]);
        out[0] = g.exp();
        out[1] = u * Complex64::new(2.0 * x2 / (l * l * l), -v * x2 / (l * l));
        out[2] = u * i * (x2 / l);
        out[3] = u * i;
    }

    fn pde_rhs(&self, x: &Point, theta: &[f64], _t: f64) -> Complex64 {
        let (u, c) = Self::value_and_chirp(x[0], theta);
        let uxx = u * (c * c * (x[0] * x[0]) + c);
        Complex64::i() * (uxx + u * u.norm_sqr())
    }
}

/// Ȧ = −2AV/L, L̇ = 4V, V̇ = 4/L³ − A²/(√2 L), φ̇ = 5A²/(4√2) − 2/L².
pub fn closed_form_rate(theta: &[f64]) -> Result<DVector<f64>> {
    let (a, l, v) = (theta[0], theta[1], theta[2]);
    if !(l > 1e-8) {
        return Err(Error::DegenerateLengthScale(l));
    }
    Ok(DVector::from_vec(vec![
        -2.0 * a * v / l,
        4.0 * v,
        4.0 / (l * l * l) - a * a / (SQRT_2 * l),
        5.0 * a * a / (4.0 * SQRT_2) - 2.0 / (l * l),
    ]))
}

/// The closed-form parameter flow.
#[derive(Debug, Clone, Copy, Default)]
pub struct NlsClosedForm;

impl ParamFlow for NlsClosedForm {
    fn rate(&mut self, theta: &DVector<f64>, _t: f64) -> Result<DVector<f64>> {
        closed_form_rate(theta.as_slice())
    }
}
