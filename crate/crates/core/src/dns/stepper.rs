//! Exponential integrators for diagonal-linear spectral systems v̂_t = L v̂ + N(v̂, t).

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Fixed-step scheme for the stiff linear part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DnsScheme {
    /// Cox–Matthews exponential time differencing, fourth order.
    Etdrk4,
    /// Integrating-factor RK4.
    IfRk4,
}

/// The nonlinear (and forcing) part evaluated on spectral coefficients.
pub(crate) trait Nonlinear {
    fn eval(&mut self, v: &[Complex64], t: f64, out: &mut [Complex64]);
}

struct Coefficients {
    h: f64,
    e: Vec<Complex64>,
    e2: Vec<Complex64>,
    q: Vec<Complex64>,
    f1: Vec<Complex64>,
    f2: Vec<Complex64>,
    f3: Vec<Complex64>,
}

/// Number of contour points for the φ-function averages.
const CONTOUR_POINTS: usize = 32;

impl Coefficients {
    fn new(lin: &[Complex64], h: f64, scheme: DnsScheme) -> Self {
        let n = lin.len();
        let mut c = Coefficients {
            h,
            e: Vec::with_capacity(n),
            e2: Vec::with_capacity(n),
            q: vec![Complex64::new(0.0, 0.0); n],
            f1: vec![Complex64::new(0.0, 0.0); n],
            f2: vec![Complex64::new(0.0, 0.0); n],
            f3: vec![Complex64::new(0.0, 0.0); n],
        };
        for &l in lin {
            c.e.push((l * h).exp());
            c.e2.push((l * (0.5 * h)).exp());
        }
        if scheme == DnsScheme::IfRk4 {
            return c;
        }
        // Contour averages (Kassam & Trefethen) avoid cancellation for small |hL|.
        let roots: Vec<Complex64> = (0..CONTOUR_POINTS)
            .map(|j| Complex64::from_polar(1.0, std::f64::consts::TAU * (j as f64 + 0.5) / CONTOUR_POINTS as f64))
            .collect();
        let inv = 1.0 / CONTOUR_POINTS as f64;
        for (idx, &l) in lin.iter().enumerate() {
            let (mut q, mut a, mut b, mut g) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
            for &r in &roots {
                let z = l * h + r;
                let ez = z.exp();
                let z3 = z * z * z;
                q += ((z * 0.5).exp() - 1.0) / z;
                a += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
                b += (2.0 + z + ez * (z - 2.0)) / z3;
                g += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
            }
            c.q[idx] = q * (h * inv);
            c.f1[idx] = a * (h * inv);
            c.f2[idx] = b * (h * inv);
            c.f3[idx] = g * (h * inv);
        }
        c
    }
}

/// Advances v̂ with a fixed scheme; coefficient sets are cached per step size.
pub(crate) struct Stepper<N> {
    lin: Vec<Complex64>,
    scheme: DnsScheme,
    pub(crate) nl: N,
    cache: Vec<Coefficients>,
    nv: Vec<Complex64>,
    na: Vec<Complex64>,
    nb: Vec<Complex64>,
    nc: Vec<Complex64>,
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    c: Vec<Complex64>,
}

impl<N: Nonlinear> Stepper<N> {
    pub(crate) fn new(lin: Vec<Complex64>, scheme: DnsScheme, nl: N) -> Self {
        let n = lin.len();
        let z = vec![Complex64::new(0.0, 0.0); n];
        Self {
            lin,
            scheme,
            nl,
            cache: Vec::new(),
            nv: z.clone(),
            na: z.clone(),
            nb: z.clone(),
            nc: z.clone(),
            a: z.clone(),
            b: z.clone(),
            c: z,
        }
    }

    fn coefficients(&mut self, h: f64) -> usize {
        if let Some(i) = self.cache.iter().position(|c| c.h == h) {
            return i;
        }
        self.cache.push(Coefficients::new(&self.lin, h, self.scheme));
        self.cache.len() - 1
    }

    fn step(&mut self, v: &mut [Complex64], t: f64, h: f64) {
        let ci = self.coefficients(h);
        let co = &self.cache[ci];
        let n = v.len();
        match self.scheme {
            DnsScheme::Etdrk4 => {
                self.nl.eval(v, t, &mut self.nv);
                for k in 0..n {
                    self.a[k] = co.e2[k] * v[k] + co.q[k] * self.nv[k];
                }
                self.nl.eval(&self.a, t + 0.5 * h, &mut self.na);
                for k in 0..n {
                    self.b[k] = co.e2[k] * v[k] + co.q[k] * self.na[k];
                }
                self.nl.eval(&self.b, t + 0.5 * h, &mut self.nb);
                for k in 0..n {
                    self.c[k] = co.e2[k] * self.a[k] + co.q[k] * (2.0 * self.nb[k] - self.nv[k]);
                }
                self.nl.eval(&self.c, t + h, &mut self.nc);
                for k in 0..n {
                    v[k] = co.e[k] * v[k]
                        + self.nv[k] * co.f1[k]
                        + (self.na[k] + self.nb[k]) * (2.0 * co.f2[k])
                        + self.nc[k] * co.f3[k];
                }
            }
            DnsScheme::IfRk4 => {
                self.nl.eval(v, t, &mut self.nv);
                for k in 0..n {
                    self.a[k] = co.e2[k] * (v[k] + self.nv[k] * (0.5 * h));
                }
                self.nl.eval(&self.a, t + 0.5 * h, &mut self.na);
                for k in 0..n {
                    self.b[k] = co.e2[k] * v[k] + self.na[k] * (0.5 * h);
                }
                self.nl.eval(&self.b, t + 0.5 * h, &mut self.nb);
                for k in 0..n {
                    self.c[k] = co.e[k] * v[k] + co.e2[k] * self.nb[k] * h;
                }
                self.nl.eval(&self.c, t + h, &mut self.nc);
                for k in 0..n {
                    v[k] = co.e[k] * v[k]
                        + (co.e[k] * self.nv[k] + 2.0 * co.e2[k] * (self.na[k] + self.nb[k]) + self.nc[k]) * (h / 6.0);
                }
            }
        }
    }

    /// Integrates from t0 to t1 with the largest step ≤ dt that divides the interval evenly.
    pub(crate) fn advance(&mut self, v: &mut [Complex64], t0: f64, t1: f64, dt: f64) -> Result<()> {
        if t1 <= t0 {
            return Ok(());
        }
        let steps = ((t1 - t0) / dt - 1e-9).ceil().max(1.0) as usize;
        let h = (t1 - t0) / steps as f64;
        for s in 0..steps {
            self.step(v, t0 + s as f64 * h, h);
        }
        if v.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite("spectral solution"));
        }
        Ok(())
    }
}

/// Runs from `window.0`, handing the state to `emit` at every requested time.
/// Each output interval is stepped independently with dt' ≤ dt.
pub(crate) fn run<N, E>(stepper: &mut Stepper<N>, v: &mut [Complex64], window: (f64, f64), dt: f64, times: &[f64], mut emit: E) -> Result<()>
where
    N: Nonlinear,
    E: FnMut(f64, &[Complex64]) -> Result<()>,
{
    let (t0, t1) = window;
    if !(t1 >= t0) {
        return Err(Error::InvalidWindow { start: t0, end: t1 });
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| t < t0 - 1e-12 || t > t1 + 1e-12) {
        return Err(Error::InvalidInput("output times must be sorted and inside the window".into()));
    }
    let mut t = t0;
    for &target in times {
        stepper.advance(v, t, target, dt)?;
        t = t.max(target);
        emit(target, v)?;
    }
    stepper.advance(v, t, t1, dt)
}
