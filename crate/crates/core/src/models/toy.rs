//! û(x) = a·sin(x) on [0, 2π]: small enough to check assembly by hand.

use crate::sms::{Domain, Point, SmsModel};

/// Right-hand side paired with the sine ansatz.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyPde {
    /// u_t = 0
    Static,
    /// u_t = u
    Growth,
    /// u_t = u_xx
    Diffusion,
}

#[derive(Debug, Clone, Copy)]
pub struct ScaledSine {
    pub pde: ToyPde,
}

impl ScaledSine {
    pub fn new(pde: ToyPde) -> Self {
        Self { pde }
    }
}

impl SmsModel for ScaledSine {
    type Value = f64;

    fn param_count(&self) -> usize {
        1
    }

    fn domain(&self) -> Domain {
        Domain::interval(0.0, 2.0 * std::f64::consts::PI, true)
    }

    fn eval(&self, x: &Point, theta: &[f64]) -> f64 {
        theta[0] * x[0].sin()
    }

    fn grad_theta(&self, x: &Point, _theta: &[f64], out: &mut [f64]) {
        out[0] = x[0].sin();
    }

    fn pde_rhs(&self, x: &Point, theta: &[f64], _t: f64) -> f64 {
        match self.pde {
            ToyPde::Static => 0.0,
            ToyPde::Growth => self.eval(x, theta),
            ToyPde::Diffusion => -self.eval(x, theta),
        }
    }
}
