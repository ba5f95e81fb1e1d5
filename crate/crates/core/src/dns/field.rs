//! Tensor grids and sampled fields.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::sms::{FieldValue, Point, SmsModel};

/// Tensor-product grid. `weights[a][i]` is the quadrature weight of node i on
/// axis a; point weights are products over axes. Points are ordered with the
/// last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub axes: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
    /// Periodic axes exclude the duplicate right endpoint; `period` is the domain length.
    pub period: Vec<Option<f64>>,
}

impl Grid {
    /// n equispaced nodes on the periodic interval [a, b), equal weights.
    pub fn periodic_1d(a: f64, b: f64, n: usize) -> Self {
        let h = (b - a) / n as f64;
        Self { axes: vec![(0..n).map(|i| a + i as f64 * h).collect()], weights: vec![vec![h; n]], period: vec![Some(b - a)] }
    }

    /// (nx+1)×(nz+1) nodes on [0, lx]×[0, lz] including the boundary, trapezoid weights.
    pub fn closed_box(lx: f64, lz: f64, nx: usize, nz: usize) -> Self {
        let axis = |len: f64, n: usize| -> (Vec<f64>, Vec<f64>) {
            let h = len / n as f64;
            let nodes = (0..=n).map(|i| i as f64 * h).collect();
            let w = (0..=n).map(|i| if i == 0 || i == n { 0.5 * h } else { h }).collect();
            (nodes, w)
        };
        let (x, wx) = axis(lx, nx);
        let (z, wz) = axis(lz, nz);
        Self { axes: vec![x, z], weights: vec![wx, wz], period: vec![None, None] }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, idx: usize) -> Point {
        if self.dim() == 1 {
            [self.axes[0][idx], 0.0]
        } else {
            let nz = self.axes[1].len();
            [self.axes[0][idx / nz], self.axes[1][idx % nz]]
        }
    }

    pub fn weight(&self, idx: usize) -> f64 {
        if self.dim() == 1 {
            self.weights[0][idx]
        } else {
            let nz = self.axes[1].len();
            self.weights[0][idx / nz] * self.weights[1][idx % nz]
        }
    }

    pub fn points(&self) -> Vec<Point> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

/// A snapshot u(·, t) on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField<V> {
    pub grid: Arc<Grid>,
    pub values: Vec<V>,
    pub time: f64,
}

impl<V: FieldValue> GridField<V> {
    pub fn new(grid: Arc<Grid>, values: Vec<V>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!("{} values for a grid of {}", values.len(), grid.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid field"));
        }
        Ok(Self { grid, values, time })
    }

    pub fn from_fn<F: Fn(&Point) -> V>(grid: Arc<Grid>, time: f64, f: F) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self { grid, values, time }
    }

    /// Grid-weighted L² norm.
    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| self.grid.weight(i) * v.real_dot(v))
            .sum::<f64>()
            .sqrt()
    }

    /// Value at an arbitrary point: trigonometric interpolation on a periodic
    /// 1D grid, bilinear interpolation on a 2D grid.
    pub fn sample(&self, x: &Point) -> V {
        self.sampler().sample(x)
    }

    /// Precomputes what repeated sampling needs.
    pub fn sampler(&self) -> FieldSampler<'_, V> {
        let spectrum = if self.grid.dim() == 1 && self.grid.period[0].is_some() {
            Some(periodic_spectrum(&self.values))
        } else {
            None
        };
        FieldSampler { field: self, spectrum }
    }
}

pub struct FieldSampler<'a, V> {
    field: &'a GridField<V>,
    spectrum: Option<Vec<[Complex64; 2]>>,
}

/// Per-component DFT coefficients divided by n.
fn periodic_spectrum<V: FieldValue>(values: &[V]) -> Vec<[Complex64; 2]> {
    let n = values.len();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut out = vec![[Complex64::new(0.0, 0.0); 2]; n];
    for part in 0..V::PARTS {
        let mut buf: Vec<Complex64> = values.iter().map(|v| Complex64::new(v.part(part), 0.0)).collect();
        fft.process(&mut buf);
        for (o, b) in out.iter_mut().zip(buf) {
            o[part] = b / n as f64;
        }
    }
    out
}

impl<V: FieldValue> FieldSampler<'_, V> {
    pub fn sample(&self, x: &Point) -> V {
        let grid = &self.field.grid;
        match &self.spectrum {
            Some(spec) => {
                let n = spec.len();
                let period = grid.period[0].expect("periodic axis");
                let s = (x[0] - grid.axes[0][0]) * std::f64::consts::TAU / period;
                let mut parts = [0.0; 2];
                for (k, c) in spec.iter().enumerate() {
                    let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
                    // the Nyquist mode is split symmetrically, which keeps real data real
                    let phase = if 2 * k == n { Complex64::new((kk * s).cos(), 0.0) } else { Complex64::from_polar(1.0, kk * s) };
                    for p in 0..V::PARTS {
                        parts[p] += (c[p] * phase).re;
                    }
                }
                V::from_parts(parts)
            }
            None if grid.dim() == 1 => {
                let xs = &grid.axes[0];
                let (i, w) = locate(xs, x[0]);
                let v = &self.field.values;
                v[i] * (1.0 - w) + v[(i + 1).min(xs.len() - 1)] * w
            }
            None => {
                let (xs, zs) = (&grid.axes[0], &grid.axes[1]);
                let nz = zs.len();
                let (i, wx) = locate(xs, x[0]);
                let (k, wz) = locate(zs, x[1]);
                let i1 = (i + 1).min(xs.len() - 1);
                let k1 = (k + 1).min(nz - 1);
                let v = &self.field.values;
                v[i * nz + k] * ((1.0 - wx) * (1.0 - wz))
                    + v[i1 * nz + k] * (wx * (1.0 - wz))
                    + v[i * nz + k1] * ((1.0 - wx) * wz)
                    + v[i1 * nz + k1] * (wx * wz)
            }
        }
    }
}

/// Cell index and fractional offset of `x` on a sorted axis, clamped to the ends.
fn locate(axis: &[f64], x: f64) -> (usize, f64) {
    let n = axis.len();
    if n == 1 || x <= axis[0] {
        return (0, 0.0);
    }
    if x >= axis[n - 1] {
        return (n - 2, 1.0);
    }
    let i = axis.partition_point(|&a| a <= x) - 1;
    let w = (x - axis[i]) / (axis[i + 1] - axis[i]);
    (i, w)
}

/// E = ‖u − û‖/‖u‖ with grid quadrature weights.
pub fn compute_relative_error<M: SmsModel>(u_ref: &GridField<M::Value>, model: &M, theta: &[f64]) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, u) in u_ref.values.iter().enumerate() {
        let w = u_ref.grid.weight(i);
        let d = model.eval(&u_ref.grid.point(i), theta) - *u;
        num += w * d.real_dot(&d);
        den += w * u.real_dot(u);
    }
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    let e = (num / den).sqrt();
    if !e.is_finite() {
        return Err(Error::NonFinite("relative error"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::toy::{ScaledSine, ToyPde};
    use std::f64::consts::TAU;

    #[test]
    fn trig_interpolation_is_exact_for_band_limited_data() {
        let grid = Arc::new(Grid::periodic_1d(-11.0, 11.0, 32));
        let f = |x: f64| (TAU * x / 22.0).sin() + 0.3 * (3.0 * TAU * x / 22.0).cos();
        let field = GridField::from_fn(grid, 0.0, |p: &Point| f(p[0]));
        for x in [-10.3, 0.17, 5.5, 10.9] {
            assert!((field.sample(&[x, 0.0]) - f(x)).abs() < 1e-13);
        }
        let cgrid = Arc::new(Grid::periodic_1d(0.0, 1.0, 16));
        let g = |x: f64| Complex64::from_polar(1.0, TAU * 2.0 * x);
        let cf = GridField::from_fn(cgrid, 0.0, |p: &Point| g(p[0]));
        assert!((cf.sample(&[0.123, 0.0]) - g(0.123)).norm() < 1e-13);
    }

    #[test]
    fn bilinear_reproduces_bilinear_functions() {
        let grid = Arc::new(Grid::closed_box(4.0, 1.0, 8, 4));
        let f = |p: &Point| 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[0] * p[1];
        let field = GridField::from_fn(grid, 0.0, f);
        for p in [[0.0, 0.0], [4.0, 1.0], [1.3, 0.77], [3.99, 0.01]] {
            assert!((field.sample(&p) - f(&p)).abs() < 1e-13);
        }
    }

    #[test]
    fn trapezoid_weights_integrate_box() {
        let g = Grid::closed_box(4.0, 1.0, 16, 8);
        let total: f64 = (0..g.len()).map(|i| g.weight(i)).sum();
        assert!((total - 4.0).abs() < 1e-12);
    }

    #[test]
    fn relative_error_identities() {
        let m = ScaledSine::new(ToyPde::Static);
        let grid = Arc::new(Grid::periodic_1d(0.0, TAU, 64));
        let u = GridField::from_fn(grid.clone(), 0.0, |p: &Point| 1.5 * p[0].sin());
        assert!(compute_relative_error(&u, &m, &[1.5]).unwrap() < 1e-15);
        assert!((compute_relative_error(&u, &m, &[3.0]).unwrap() - 1.0).abs() < 1e-14);
        assert!((compute_relative_error(&u, &m, &[0.0]).unwrap() - 1.0).abs() < 1e-14);
        let zero = GridField::from_fn(grid, 0.0, |_| 0.0);
        assert!(matches!(compute_relative_error(&zero, &m, &[1.0]), Err(Error::ZeroReference)));
    }
}
