//! Reference pseudo-spectral solvers and noisy observation sampling.

mod field;
mod io;
mod solvers;
mod stepper;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use field::{compute_relative_error, FieldSampler, Grid, GridField};
pub use io::{read_smda, write_smda, write_snapshots_csv, SMDA_MAGIC, SMDA_VERSION};
pub use solvers::{ad_dns, ad_dns_visit, ad_grid, ks_dns, ks_dns_visit, ks_grid, nls_dns, nls_dns_visit, nls_grid, DnsConfig};
pub use stepper::DnsScheme;

use crate::assimilation::{ObservationOperator, ObservationSeries};
use crate::error::{Error, Result};
use crate::sms::FieldValue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// η ~ N(0, (fraction·|clean value|)²) for every entry.
    #[default]
    PerValueMultiplicative,
    /// η ~ N(0, (fraction·rms)²) with rms over all clean entries of the series.
    SignalRms,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseSpec {
    pub fraction: f64,
    pub seed: u64,
    #[serde(default)]
    pub mode: NoiseMode,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self { fraction: 0.0, seed: 0, mode: NoiseMode::PerValueMultiplicative }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fraction >= 0.0 && self.fraction.is_finite()) {
            return Err(Error::InvalidInput(format!("noise fraction must be ≥ 0, got {}", self.fraction)));
        }
        Ok(())
    }

    /// Perturbs `clean` in place. Draws are taken row by row (time, then sensor).
    pub fn apply(&self, clean: &mut [DVector<f64>]) -> Result<()> {
        self.validate()?;
        if self.fraction == 0.0 {
            return Ok(());
        }
        let rms = match self.mode {
            NoiseMode::SignalRms => {
                let (sum, count) = clean.iter().flat_map(|v| v.iter()).fold((0.0, 0usize), |(s, c), y| (s + y * y, c + 1));
                if count == 0 { 0.0 } else { (sum / count as f64).sqrt() }
            }
            NoiseMode::PerValueMultiplicative => 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for row in clean.iter_mut() {
            for y in row.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                let scale = match self.mode {
                    NoiseMode::PerValueMultiplicative => y.abs(),
                    NoiseMode::SignalRms => rms,
                };
                *y += self.fraction * scale * z;
            }
        }
        Ok(())
    }
}

/// Observations of `snapshots` at `times`. Each time must match a snapshot;
/// sensors between grid nodes are interpolated.
pub fn sample_observations<V: FieldValue>(
    snapshots: &[GridField<V>],
    op: &ObservationOperator,
    times: &[f64],
    noise: &NoiseSpec,
) -> Result<ObservationSeries> {
    let mut values = Vec::with_capacity(times.len());
    for &t in times {
        let tol = 1e-9 * t.abs().max(1.0);
        let snap = snapshots
            .iter()
            .find(|s| (s.time - t).abs() <= tol)
            .ok_or_else(|| Error::InvalidInput(format!("no snapshot at observation time {t}")))?;
        let sampler = snap.sampler();
        let y: Result<Vec<f64>> = op.locations.iter().map(|x| op.apply_value(sampler.sample(x))).collect();
        values.push(DVector::from_vec(y?));
    }
    noise.apply(&mut values)?;
    Ok(ObservationSeries { times: times.to_vec(), values, noise_sigma_frac: noise.fraction })
}
