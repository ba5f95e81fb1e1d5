//! Experiment configuration: presets, `key=value` overrides and validation.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assimilation::ObservationKind;
use crate::dns::{DnsConfig, DnsScheme, NoiseMode, NoiseSpec};
use crate::error::{Error, Result};
use crate::models::{GyreFlowConfig, FitOptions, NLS_DOMAIN_LENGTH};
use crate::numerics::{IntegratorConfig, Scheme};
use crate::sms::{Domain, Point};

const NLS_PRESET: &str = include_str!("../../presets/nls.toml");
const KS_PRESET: &str = include_str!("../../presets/ks.toml");
const AD_PRESET: &str = include_str!("../../presets/ad.toml");

/// Smallest Newton tolerance used when δ is left to its default.
pub const DELTA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Nls,
    Ks,
    Ad,
}

impl Preset {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "nls" => Ok(Self::Nls),
            "ks" => Ok(Self::Ks),
            "ad" => Ok(Self::Ad),
            other => Err(Error::Config(format!("unknown preset {other:?} (expected nls, ks or ad)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Nls => "nls",
            Self::Ks => "ks",
            Self::Ad => "ad",
        }
    }

    fn source(self) -> &'static str {
        match self {
            Self::Nls => NLS_PRESET,
            Self::Ks => KS_PRESET,
            Self::Ad => AD_PRESET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmsProjection {
    /// The NLS closed-form parameter ODEs.
    ClosedForm,
    Collocation,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DnsFormat {
    Csv,
    Bin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SensorLayout {
    Explicit { points: Vec<[f64; 2]> },
    /// x_j = a + j (b − a)/count on a 1D domain [a, b].
    Equispaced { count: usize },
    /// `rows` rows of `cols` sensors inside the box, odd rows shifted by half
    /// a cell, minus the `drop` sensors closest to a corner.
    StaggeredLattice { cols: usize, rows: usize, drop: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSettings {
    pub scheme: Scheme,
    /// Fixed step for RK4, first trial step for the adaptive scheme.
    pub dt: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl IntegratorSettings {
    pub fn to_config(self) -> IntegratorConfig {
        match self.scheme {
            Scheme::Rk4Fixed => IntegratorConfig::rk4(self.dt),
            Scheme::Rk45Adaptive => IntegratorConfig { dt_init: self.dt, ..IntegratorConfig::adaptive(self.rel_tol, self.abs_tol) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSettings {
    /// Midpoint fit grid, points per axis.
    pub grid: Vec<usize>,
    pub max_rel_error: f64,
    pub restarts: usize,
    pub max_iters: usize,
}

/// Every constant of one experiment. Field names are the override keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub seed: Option<u64>,
    pub nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nls_initial: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ks_length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    pub sms_projection: SmsProjection,
    pub collocation: Vec<usize>,
    pub gamma: f64,
    pub gamma_t: f64,
    /// Newton tolerance; defaults to the noise level of each run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub maxits: usize,
    pub dt_obs: f64,
    pub da_window: [f64; 2],
    pub forecast_end: f64,
    /// Spacing of snapshots, error rows and parameter rows.
    pub output_dt: f64,
    pub observation: ObservationKind,
    pub sensor_jitter: f64,
    pub noise_fraction: f64,
    pub noise_mode: NoiseMode,
    pub dns_modes: Vec<usize>,
    pub dns_dt: f64,
    pub dns_scheme: DnsScheme,
    pub dns_format: DnsFormat,
    /// Spacing of exported DNS snapshots; defaults to `output_dt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dns_export_dt: Option<f64>,
    pub sensors: SensorLayout,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gyre: Option<GyreFlowConfig>,
    pub integrator: IntegratorSettings,
    pub fit: FitSettings,
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets a dotted `key` in a TOML table, creating intermediate tables.
fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::Config(format!("empty override key in {key:?}")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::Config(format!("{p:?} in {key:?} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        Self::from_toml(preset.source()).expect("shipped presets parse")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    /// Reads either a config file or a run manifest (its `[config]` table).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut table: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(e.message().to_string()))?;
        if let Some(toml::Value::Table(cfg)) = table.remove("config") {
            table = cfg;
        }
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Self = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        Ok(cfg)
    }

    pub fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("config serializes")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `key=value` overrides; the result is type-checked against the schema.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut table = self.to_table();
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o.split_once('=').ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            set_path(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        Self::from_table(table)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.noise_fraction > 0.0 && self.seed.is_none() {
            return bad("a seed is required when noise_fraction > 0".into());
        }
        if !(self.noise_fraction >= 0.0 && self.noise_fraction.is_finite()) {
            return bad(format!("noise_fraction must be ≥ 0, got {}", self.noise_fraction));
        }
        if self.nodes == 0 {
            return bad("nodes must be ≥ 1".into());
        }
        if !(self.gamma >= 0.0 && self.gamma_t >= 0.0) {
            return bad("gamma and gamma_t must be ≥ 0".into());
        }
        if self.maxits == 0 {
            return bad("maxits must be ≥ 1".into());
        }
        if let Some(d) = self.delta {
            if !(d > 0.0) {
                return bad(format!("delta must be positive, got {d}"));
            }
        }
        if !(self.sensor_jitter >= 0.0 && self.sensor_jitter.is_finite()) {
            return bad(format!("sensor_jitter must be ≥ 0, got {}", self.sensor_jitter));
        }
        let [t0, tm] = self.da_window;
        if !(t0 < tm && tm <= self.forecast_end) {
            return bad(format!("need da_window[0] < da_window[1] ≤ forecast_end, got {t0}, {tm}, {}", self.forecast_end));
        }
        if !(self.output_dt > 0.0 && self.dt_obs > 0.0) {
            return bad("output_dt and dt_obs must be positive".into());
        }
        self.stride(self.dt_obs, "dt_obs")?;
        self.stride(self.dns_export_dt.unwrap_or(self.output_dt), "dns_export_dt")?;
        self.output_count()?;
        self.dns_config().validate(self.dimension()).map_err(|e| Error::Config(e.to_string()))?;
        self.integrator.to_config().validate().map_err(|e| Error::Config(e.to_string()))?;
        let dims = self.dimension();
        if self.sms_projection != SmsProjection::ClosedForm && self.collocation.len() != dims {
            return bad(format!("collocation needs {dims} point counts, got {:?}", self.collocation));
        }
        match self.preset {
            Preset::Nls => {
                if self.sms_projection == SmsProjection::Collocation {
                    return bad("the NLS experiment uses closed-form or quadrature projection".into());
                }
                let p = self.nls_initial.ok_or_else(|| Error::Config("nls_initial is required for the nls preset".into()))?;
                if !(p[1] > 0.0 && p[0] >= 0.0) {
                    return bad(format!("nls_initial needs A ≥ 0 and L > 0, got {p:?}"));
                }
            }
            Preset::Ks | Preset::Ad => {
                if self.sms_projection == SmsProjection::ClosedForm {
                    return bad("closed-form projection exists only for the NLS experiment".into());
                }
                if self.fit.grid.len() != dims || self.fit.grid.contains(&0) {
                    return bad(format!("fit.grid needs {dims} positive counts, got {:?}", self.fit.grid));
                }
                if self.observation != ObservationKind::PointwiseState {
                    return bad("the KS and AD experiments observe the state pointwise".into());
                }
            }
        }
        match self.preset {
            Preset::Ks if !(self.ks_length.is_some_and(|l| l > 0.0)) => bad("ks_length must be positive".into()),
            Preset::Ad if self.kappa.is_none_or(|k| k < 0.0) => bad("kappa must be ≥ 0".into()),
            Preset::Ad if self.gyre.is_none() => bad("the ad preset needs a [gyre] table".into()),
            _ => {
                self.sensor_points()?;
                Ok(())
            }
        }
    }

    pub fn dimension(&self) -> usize {
        if self.preset == Preset::Ad { 2 } else { 1 }
    }

    fn stride(&self, dt: f64, name: &str) -> Result<usize> {
        let r = dt / self.output_dt;
        let k = r.round();
        if k < 1.0 || (r - k).abs() > 1e-9 * r {
            return Err(Error::Config(format!("{name} = {dt} must be a positive multiple of output_dt = {}", self.output_dt)));
        }
        Ok(k as usize)
    }

    fn output_count(&self) -> Result<usize> {
        let span = |a: f64, b: f64, name: &str| -> Result<usize> {
            let r = (b - a) / self.output_dt;
            let k = r.round();
            if (r - k).abs() > 1e-9 * r.max(1.0) {
                return Err(Error::Config(format!("{name} is not a whole number of output_dt steps")));
            }
            Ok(k as usize)
        };
        span(self.da_window[0], self.da_window[1], "da_window")?;
        span(self.da_window[0], self.forecast_end, "forecast window")
    }

    /// t0 + k·output_dt up to the forecast end.
    pub fn output_times(&self) -> Vec<f64> {
        let n = self.output_count().expect("validated");
        (0..=n).map(|k| self.da_window[0] + k as f64 * self.output_dt).collect()
    }

    /// Indices into [`output_times`](Self::output_times) of the observation times t0 + i·dt_obs ≤ da end.
    pub fn observation_indices(&self) -> Vec<usize> {
        let stride = self.stride(self.dt_obs, "dt_obs").expect("validated");
        let end = ((self.da_window[1] - self.da_window[0]) / self.output_dt).round() as usize;
        (1..).map(|i| i * stride).take_while(|&k| k <= end).collect()
    }

    pub fn observation_times(&self) -> Vec<f64> {
        let times = self.output_times();
        self.observation_indices().into_iter().map(|k| times[k]).collect()
    }

    pub fn export_indices(&self) -> Vec<usize> {
        let stride = self.stride(self.dns_export_dt.unwrap_or(self.output_dt), "dns_export_dt").expect("validated");
        (0..self.output_times().len()).step_by(stride).collect()
    }

    pub fn dns_config(&self) -> DnsConfig {
        DnsConfig { modes: self.dns_modes.clone(), dt: self.dns_dt, scheme: self.dns_scheme }
    }

    pub fn noise(&self) -> NoiseSpec {
        NoiseSpec { fraction: self.noise_fraction, seed: self.seed.unwrap_or(0), mode: self.noise_mode }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            max_rel_error: self.fit.max_rel_error,
            restarts: self.fit.restarts,
            max_iters: self.fit.max_iters,
            seed: self.seed.unwrap_or(0),
        }
    }

    /// Physical domain of the experiment.
    pub fn domain(&self) -> Domain {
        match self.preset {
            Preset::Nls => Domain::interval(-0.5 * NLS_DOMAIN_LENGTH, 0.5 * NLS_DOMAIN_LENGTH, true),
            Preset::Ks => {
                let l = self.ks_length.unwrap_or(22.0);
                Domain::interval(-0.5 * l, 0.5 * l, true)
            }
            Preset::Ad => {
                let g = self.gyre.unwrap_or_default();
                Domain::rectangle([0.0, 0.0], [g.length, g.height])
            }
        }
    }

    /// Sensor coordinates after layout and jitter. Jitter moves each sensor
    /// by `sensor_jitter` DNS grid spacings along each axis, in a direction
    /// drawn from `seed`.
    pub fn sensor_points(&self) -> Result<Vec<Point>> {
        let dom = self.domain();
        let mut pts = match &self.sensors {
            SensorLayout::Explicit { points } => {
                if points.is_empty() {
                    return Err(Error::Config("explicit sensor list is empty".into()));
                }
                points.clone()
            }
            SensorLayout::Equispaced { count } => {
                if dom.dim != 1 || *count == 0 {
                    return Err(Error::Config("equispaced sensors need a 1D domain and count ≥ 1".into()));
                }
                let h = dom.length(0) / *count as f64;
                (0..*count).map(|j| [dom.lower[0] + j as f64 * h, 0.0]).collect()
            }
            SensorLayout::StaggeredLattice { cols, rows, drop } => {
                if dom.dim != 2 || *cols == 0 || *rows == 0 || drop >= &(cols * rows) {
                    return Err(Error::Config("staggered lattice needs a 2D domain, cols, rows ≥ 1 and drop < cols·rows".into()));
                }
                let hx = dom.length(0) / *cols as f64;
                let hz = dom.length(1) / *rows as f64;
                let mut pts: Vec<Point> = Vec::with_capacity(cols * rows);
                for r in 0..*rows {
                    let shift = if r % 2 == 0 { 0.25 } else { 0.75 };
                    for c in 0..*cols {
                        pts.push([dom.lower[0] + (c as f64 + shift) * hx, dom.lower[1] + (r as f64 + 0.5) * hz]);
                    }
                }
                let corners = [dom.lower, [dom.upper[0], dom.lower[1]], [dom.lower[0], dom.upper[1]], dom.upper];
                let corner_dist = |p: &Point| corners.iter().map(|c| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt()).fold(f64::INFINITY, f64::min);
                let mut order: Vec<usize> = (0..pts.len()).collect();
                order.sort_by(|&a, &b| corner_dist(&pts[a]).total_cmp(&corner_dist(&pts[b])).then(a.cmp(&b)));
                let mut dropped = order[..*drop].to_vec();
                dropped.sort_unstable();
                for &i in dropped.iter().rev() {
                    pts.remove(i);
                }
                pts
            }
        };
        if self.sensor_jitter > 0.0 {
            if self.dns_modes.len() != dom.dim {
                return Err(Error::Config("dns_modes must give one mode count per axis".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed.unwrap_or(0));
            rng.set_stream(1);
            for p in pts.iter_mut() {
                for a in 0..dom.dim {
                    let step = self.sensor_jitter * dom.length(a) / self.dns_modes[a] as f64;
                    p[a] += if rng.random_bool(0.5) { step } else { -step };
                    if dom.periodic[a] {
                        let len = dom.length(a);
                        p[a] = dom.lower[a] + (p[a] - dom.lower[a]).rem_euclid(len);
                    } else {
                        p[a] = p[a].clamp(dom.lower[a], dom.upper[a]);
                    }
                }
            }
        }
        for p in &pts {
            if !dom.contains(p) {
                return Err(Error::Config(format!("sensor {p:?} lies outside the domain")));
            }
        }
        Ok(pts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for p in [Preset::Nls, Preset::Ks, Preset::Ad] {
            let cfg = ExperimentConfig::preset(p);
            cfg.validate().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        }
    }

    #[test]
    fn overrides_are_type_checked() {
        let cfg = ExperimentConfig::preset(Preset::Ks);
        let c = cfg.with_overrides(&["gamma_t=5e-4", "sensors.count=20", "integrator.rel_tol = 1e-7"]).unwrap();
        assert_eq!(c.gamma_t, 5e-4);
        assert_eq!(c.sensors, SensorLayout::Equispaced { count: 20 });
        assert_eq!(c.integrator.rel_tol, 1e-7);
        assert!(cfg.with_overrides(&["gamma_t=abc"]).is_err());
        assert!(cfg.with_overrides(&["no_such_key=1"]).is_err());
        assert!(cfg.with_overrides(&["maxits"]).is_err());
        assert!(cfg.with_overrides(&["maxits=-1"]).is_err());
        let bad = cfg.with_overrides(&["dt_obs=0.3"]).unwrap();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn noisy_runs_need_a_seed() {
        let mut cfg = ExperimentConfig::preset(Preset::Ks);
        cfg.seed = None;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.noise_fraction = 0.0;
        cfg.validate().unwrap();
    }

    #[test]
    fn time_grids() {
        let cfg = ExperimentConfig::preset(Preset::Ks);
        let t = cfg.output_times();
        assert_eq!(t.len(), 201);
        assert_eq!(t[200], 100.0);
        let obs = cfg.observation_times();
        assert_eq!(obs.len(), 15);
        assert_eq!(obs[0], 2.0);
        assert_eq!(*obs.last().unwrap(), 30.0);
    }

    #[test]
    fn sensor_layouts() {
        let ks = ExperimentConfig::preset(Preset::Ks).sensor_points().unwrap();
        assert_eq!(ks.len(), 10);
        assert!((ks[1][0] - ks[0][0] - 2.2).abs() < 1e-12);
        assert_eq!(ks[0][0], -11.0);

        let ad = ExperimentConfig::preset(Preset::Ad).sensor_points().unwrap();
        assert_eq!(ad.len(), 46);
        assert!(ad.iter().all(|p| p[0] > 0.0 && p[0] < 4.0 && p[1] > 0.0 && p[1] < 1.0));

        let jit = ExperimentConfig::preset(Preset::Ks).with_overrides(&["sensor_jitter=1"]).unwrap();
        let a = jit.sensor_points().unwrap();
        assert_eq!(a, jit.sensor_points().unwrap());
        // one DNS grid point to either side, wrapping periodically
        for (p, q) in a.iter().zip(&ks) {
            let d = (p[0] - q[0]).abs().min(22.0 - (p[0] - q[0]).abs());
            assert!((d - 22.0 / 128.0).abs() < 1e-12);
        }
        let moved_right = a.iter().zip(&ks).filter(|(p, q)| (p[0] - q[0]).rem_euclid(22.0) < 1.0).count();
        assert!(moved_right > 0 && moved_right < 10);
    }
}
