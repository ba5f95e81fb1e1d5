//! Experiment drivers: reference DNS, SMS, and clean and noisy DA-SMS runs,
//! their error tables and on-disk artifacts.

mod config;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;

pub use config::{DnsFormat, ExperimentConfig, FitSettings, IntegratorSettings, Preset, SensorLayout, SmsProjection, DELTA_FLOOR};

use crate::assimilation::{da_sms_run, dense_samples, fill_distance, write_corrections_csv, CorrectionRecord, DaConfig, ObservationOperator};
use crate::dns::{
    ad_dns, ad_grid, compute_relative_error, ks_dns, ks_grid, nls_dns, nls_grid, sample_observations, write_smda, write_snapshots_csv,
    GridField, NoiseSpec,
};
use crate::error::{Error, Result};
use crate::models::{
    ad_initial_condition, fit_initial, ks_initial_condition, AdNetwork, FitAnsatz, KsNetwork, NlsClosedForm, NlsGaussian, NLS_DOMAIN_LENGTH,
};
use crate::numerics::Trajectory;
use crate::sms::{evolve, CollocationGrid, FieldValue, ParamFlow, Point, Projection, ProjectedFlow, QuadratureRule, SmsModel};

/// DNS snapshots at the output times.
#[derive(Debug, Clone)]
pub enum DnsSnapshots {
    Real(Vec<GridField<f64>>),
    Complex(Vec<GridField<Complex64>>),
}

/// Snapshot value types the drivers know how to store.
pub trait SnapshotValue: FieldValue {
    fn wrap(snaps: Vec<GridField<Self>>) -> DnsSnapshots;
}

impl SnapshotValue for f64 {
    fn wrap(snaps: Vec<GridField<Self>>) -> DnsSnapshots {
        DnsSnapshots::Real(snaps)
    }
}

impl SnapshotValue for Complex64 {
    fn wrap(snaps: Vec<GridField<Self>>) -> DnsSnapshots {
        DnsSnapshots::Complex(snaps)
    }
}

/// Parameters of one method at the output times.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub times: Vec<f64>,
    pub thetas: Vec<DVector<f64>>,
    pub corrections: Vec<CorrectionRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub t: f64,
    pub sms: f64,
    pub dasms_clean: f64,
    pub dasms_noisy: f64,
}

/// Largest |u(0, t)| over the output times.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakRow {
    pub method: String,
    pub t_peak: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub sensors: Vec<Point>,
    pub fill_distance: f64,
    pub fit_rel_error: Option<f64>,
    pub errors: Vec<ErrorRow>,
    /// Filled for the NLS experiment only.
    pub peaks: Vec<PeakRow>,
    pub sms: MethodRun,
    pub dasms_clean: MethodRun,
    pub dasms_noisy: MethodRun,
    pub dns: DnsSnapshots,
    pub timings: Vec<(String, f64)>,
}

impl ExperimentOutcome {
    /// The error row at time `t`, if `t` is an output time.
    pub fn error_at(&self, t: f64) -> Option<&ErrorRow> {
        self.errors.iter().find(|r| (r.t - t).abs() < 1e-9)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    GammaT,
    DtObs,
    NumSensors,
    SensorJitter,
}

impl SweepParam {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "gamma_t" => Ok(Self::GammaT),
            "dt_obs" => Ok(Self::DtObs),
            "num_sensors" => Ok(Self::NumSensors),
            "sensor_jitter" => Ok(Self::SensorJitter),
            other => Err(Error::Config(format!("unknown sweep parameter {other:?} (gamma_t, dt_obs, num_sensors, sensor_jitter)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::GammaT => "gamma_t",
            Self::DtObs => "dt_obs",
            Self::NumSensors => "num_sensors",
            Self::SensorJitter => "sensor_jitter",
        }
    }

    fn override_for(self, value: f64) -> Result<String> {
        Ok(match self {
            Self::GammaT => format!("gamma_t={value:?}"),
            Self::DtObs => format!("dt_obs={value:?}"),
            Self::SensorJitter => format!("sensor_jitter={value:?}"),
            Self::NumSensors => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!("num_sensors must be a positive integer, got {value}")));
                }
                format!("sensors.count={}", value as usize)
            }
        })
    }
}

/// One row of a sensitivity table; `value` is `None` for the SMS baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub value: Option<f64>,
    pub error: f64,
}

// ---------------------------------------------------------------------------
// artifacts

/// Writes files into the output directory through a temporary name and a rename.
struct Artifacts {
    dir: Option<PathBuf>,
    written: Vec<String>,
}

impl Artifacts {
    fn new(dir: Option<&Path>) -> Result<Self> {
        if let Some(d) = dir {
            fs::create_dir_all(d)?;
        }
        Ok(Self { dir: dir.map(Path::to_path_buf), written: Vec::new() })
    }

    fn write<F>(&mut self, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<fs::File>) -> Result<()>,
    {
        let Some(dir) = &self.dir else { return Ok(()) };
        let tmp = dir.join(format!(".{name}.tmp"));
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        body(&mut w)?;
        w.flush()?;
        drop(w);
        fs::rename(&tmp, dir.join(name))?;
        self.written.push(name.to_string());
        Ok(())
    }
}

fn write_params_csv(run: &MethodRun, w: &mut impl Write) -> Result<()> {
    let p = run.thetas.first().map_or(0, |t| t.len());
    write!(w, "t")?;
    for j in 0..p {
        write!(w, ",theta_{j}")?;
    }
    writeln!(w)?;
    for (t, th) in run.times.iter().zip(&run.thetas) {
        write!(w, "{t:.16e}")?;
        for v in th.iter() {
            write!(w, ",{v:.16e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn write_errors_csv(rows: &[ErrorRow], w: &mut impl Write) -> Result<()> {
    writeln!(w, "t,E_sms,E_dasms_clean,E_dasms_noisy")?;
    for r in rows {
        writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", r.t, r.sms, r.dasms_clean, r.dasms_noisy)?;
    }
    Ok(())
}

fn write_peaks_csv(rows: &[PeakRow], w: &mut impl Write) -> Result<()> {
    writeln!(w, "method,t_peak,max_abs_u0")?;
    for r in rows {
        writeln!(w, "{},{:.16e},{:.16e}", r.method, r.t_peak, r.amplitude)?;
    }
    Ok(())
}

struct Manifest<'a> {
    cfg: &'a ExperimentConfig,
    status: String,
    sensors: &'a [Point],
    fill_distance: f64,
    fit_rel_error: Option<f64>,
    timings: &'a [(String, f64)],
    outputs: &'a [String],
}

impl Manifest<'_> {
    fn to_toml(&self) -> String {
        let mut t = toml::Table::new();
        t.insert("code_version".into(), env!("CARGO_PKG_VERSION").into());
        t.insert("status".into(), self.status.clone().into());
        if self.cfg.preset == Preset::Ad {
            t.insert("boundary_treatment".into(), "DNS on the even-in-x, odd-in-z extension to [-L, L) x [-H, H)".into());
        }
        let sensors: Vec<toml::Value> =
            self.sensors.iter().map(|p| toml::Value::Array(p[..self.cfg.dimension()].iter().map(|&v| v.into()).collect())).collect();
        t.insert("sensors".into(), toml::Value::Array(sensors));
        t.insert("fill_distance".into(), self.fill_distance.into());
        if let Some(e) = self.fit_rel_error {
            t.insert("fit_rel_error".into(), e.into());
        }
        t.insert("outputs".into(), toml::Value::Array(self.outputs.iter().map(|s| s.clone().into()).collect()));
        let mut timings = toml::Table::new();
        for (k, v) in self.timings {
            timings.insert(k.clone(), (*v).into());
        }
        t.insert("wall_seconds".into(), toml::Value::Table(timings));
        t.insert("config".into(), toml::Value::Table(self.cfg.to_table()));
        toml::to_string(&t).expect("manifest serializes")
    }
}

// ---------------------------------------------------------------------------
// pipeline

struct Setup<M: SmsModel> {
    model: M,
    snaps: Vec<GridField<M::Value>>,
    theta0: DVector<f64>,
    fit_rel_error: Option<f64>,
    flow: FlowSpec,
}

enum FlowSpec {
    ClosedForm,
    Projected(Projection),
}

enum AnyFlow<'a, M> {
    Closed(NlsClosedForm),
    Projected(ProjectedFlow<'a, M>),
}

impl<M: SmsModel> ParamFlow for AnyFlow<'_, M> {
    fn rate(&mut self, theta: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        match self {
            AnyFlow::Closed(f) => f.rate(theta, t),
            AnyFlow::Projected(f) => f.rate(theta, t),
        }
    }
}

impl<M: SmsModel> Setup<M> {
    fn flow(&self) -> AnyFlow<'_, M> {
        match &self.flow {
            FlowSpec::ClosedForm => AnyFlow::Closed(NlsClosedForm),
            FlowSpec::Projected(p) => AnyFlow::Projected(ProjectedFlow::new(&self.model, p)),
        }
    }
}

fn midpoint_points(cfg: &ExperimentConfig, counts: &[usize]) -> Vec<Point> {
    let dom = cfg.domain();
    if dom.dim == 1 {
        QuadratureRule::midpoint_1d(dom.lower[0], dom.upper[0], counts[0]).nodes
    } else {
        QuadratureRule::midpoint_2d(&dom, counts[0], counts[1]).nodes
    }
}

fn projection(cfg: &ExperimentConfig) -> FlowSpec {
    let dom = cfg.domain();
    match cfg.sms_projection {
        SmsProjection::ClosedForm => FlowSpec::ClosedForm,
        SmsProjection::Collocation => {
            let grid = if dom.dim == 1 {
                CollocationGrid::periodic_1d(dom.lower[0], dom.upper[0], cfg.collocation[0])
            } else {
                CollocationGrid::cell_centres_2d(&dom, cfg.collocation[0], cfg.collocation[1])
            };
            FlowSpec::Projected(Projection::Collocation { grid, gamma: cfg.gamma })
        }
        SmsProjection::Quadrature => {
            FlowSpec::Projected(Projection::Quadrature { rule: QuadratureRule { nodes: midpoint_points(cfg, &cfg.collocation), weights: quadrature_weights(cfg) }, gamma: cfg.gamma })
        }
    }
}

fn quadrature_weights(cfg: &ExperimentConfig) -> Vec<f64> {
    let dom = cfg.domain();
    let n: usize = cfg.collocation.iter().product();
    vec![dom.measure() / n as f64; n]
}

fn fit_theta0<M: FitAnsatz>(cfg: &ExperimentConfig, model: &M, u0: impl Fn(&Point) -> f64) -> Result<(DVector<f64>, f64)> {
    let pts = midpoint_points(cfg, &cfg.fit.grid);
    let target: Vec<f64> = pts.iter().map(&u0).collect();
    let fit = fit_initial(model, &pts, &target, &cfg.fit_options())?;
    Ok((fit.theta, fit.rel_error))
}

fn setup_nls(cfg: &ExperimentConfig, times: &[f64]) -> Result<Setup<NlsGaussian>> {
    let model = NlsGaussian::default();
    let theta0 = DVector::from_row_slice(&cfg.nls_initial.expect("validated"));
    let grid = Arc::new(nls_grid(NLS_DOMAIN_LENGTH, cfg.dns_modes[0]));
    let u0 = GridField::from_fn(grid, times[0], |x| model.eval(x, theta0.as_slice()));
    let snaps = nls_dns(&u0, (times[0], *times.last().expect("nonempty")), &cfg.dns_config(), times)?;
    Ok(Setup { model, snaps, theta0, fit_rel_error: None, flow: projection(cfg) })
}

fn setup_ks(cfg: &ExperimentConfig, times: &[f64]) -> Result<Setup<KsNetwork>> {
    let length = cfg.ks_length.expect("validated");
    let model = KsNetwork::new(cfg.nodes, length);
    let ic = ks_initial_condition(length);
    let grid = Arc::new(ks_grid(length, cfg.dns_modes[0]));
    let u0 = GridField::from_fn(grid, times[0], |x| ic(x[0]));
    let snaps = ks_dns(&u0, (times[0], *times.last().expect("nonempty")), &cfg.dns_config(), times)?;
    let (theta0, err) = fit_theta0(cfg, &model, |x| ic(x[0]))?;
    Ok(Setup { model, snaps, theta0, fit_rel_error: Some(err), flow: projection(cfg) })
}

fn setup_ad(cfg: &ExperimentConfig, times: &[f64]) -> Result<Setup<AdNetwork>> {
    let flow = cfg.gyre.expect("validated");
    let kappa = cfg.kappa.expect("validated");
    let model = AdNetwork::new(cfg.nodes, kappa, flow);
    let ic = ad_initial_condition(flow.length, flow.height);
    let grid = Arc::new(ad_grid(flow.length, flow.height, &cfg.dns_modes));
    let u0 = GridField::from_fn(grid, times[0], |x| ic(x[0], x[1]));
    let snaps = ad_dns(&u0, (times[0], *times.last().expect("nonempty")), &cfg.dns_config(), &flow, kappa, times)?;
    let (theta0, err) = fit_theta0(cfg, &model, |x| ic(x[0], x[1]))?;
    Ok(Setup { model, snaps, theta0, fit_rel_error: Some(err), flow: projection(cfg) })
}

/// States of `traj` at each of `times`; the last entry wins on repeated times.
fn states_at(traj: &Trajectory, times: &[f64]) -> Result<Vec<DVector<f64>>> {
    let mut out = Vec::with_capacity(times.len());
    let mut k = 0;
    for &t in times {
        while k < traj.times.len() && traj.times[k] < t {
            k += 1;
        }
        let mut found = None;
        while k < traj.times.len() && traj.times[k] == t {
            found = Some(k);
            k += 1;
        }
        let i = found.ok_or_else(|| Error::InvalidInput(format!("trajectory has no state at t = {t}")))?;
        out.push(traj.states[i].clone());
        k = i + 1;
    }
    Ok(out)
}

fn sms_run<M: SmsModel>(cfg: &ExperimentConfig, setup: &Setup<M>, times: &[f64]) -> Result<MethodRun> {
    let mut flow = setup.flow();
    let window = (times[0], *times.last().expect("nonempty"));
    let traj = evolve(&mut flow, &setup.theta0, window, &cfg.integrator.to_config(), times)?;
    Ok(MethodRun { times: times.to_vec(), thetas: states_at(&traj, times)?, corrections: Vec::new() })
}

fn da_run<M: SmsModel>(cfg: &ExperimentConfig, setup: &Setup<M>, sensors: &[Point], times: &[f64], noise: &NoiseSpec) -> Result<MethodRun> {
    let op = ObservationOperator::new(cfg.observation, sensors.to_vec())?;
    let obs_idx = cfg.observation_indices();
    let obs_snaps: Vec<GridField<M::Value>> = obs_idx.iter().map(|&k| setup.snaps[k].clone()).collect();
    let obs_times: Vec<f64> = obs_idx.iter().map(|&k| times[k]).collect();
    let series = sample_observations(&obs_snaps, &op, &obs_times, noise)?;
    let da = DaConfig {
        delta: cfg.delta.unwrap_or(noise.fraction.max(DELTA_FLOOR)),
        maxits: cfg.maxits,
        gamma_t: cfg.gamma_t,
        da_window: (cfg.da_window[0], cfg.da_window[1]),
        forecast_end: cfg.forecast_end,
    };
    let mut flow = setup.flow();
    let run = da_sms_run(&mut flow, &setup.model, &setup.theta0, &series, &op, &da, &cfg.integrator.to_config(), times)?;
    Ok(MethodRun { times: times.to_vec(), thetas: states_at(&run.trajectory, times)?, corrections: run.log })
}

fn field_errors<M: SmsModel>(setup: &Setup<M>, run: &MethodRun) -> Result<Vec<f64>> {
    setup.snaps.iter().zip(&run.thetas).map(|(s, th)| compute_relative_error(s, &setup.model, th.as_slice())).collect()
}

fn peak<I: Iterator<Item = (f64, f64)>>(method: &str, it: I) -> PeakRow {
    let mut best = PeakRow { method: method.to_string(), t_peak: f64::NAN, amplitude: f64::NEG_INFINITY };
    for (t, a) in it {
        if a > best.amplitude {
            best.t_peak = t;
            best.amplitude = a;
        }
    }
    best
}

fn sensor_fill_distance(cfg: &ExperimentConfig, sensors: &[Point]) -> f64 {
    let dom = cfg.domain();
    let samples = dense_samples(&dom, if dom.dim == 1 { 10_001 } else { 101 });
    fill_distance(sensors, &samples, dom.dim)
}

struct Driver<'a> {
    cfg: &'a ExperimentConfig,
    artifacts: Artifacts,
    timings: Vec<(String, f64)>,
    sensors: Vec<Point>,
    fill_distance: f64,
    fit_rel_error: Option<f64>,
}

impl Driver<'_> {
    fn timed<T>(&mut self, phase: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let r = f();
        self.timings.push((phase.to_string(), start.elapsed().as_secs_f64()));
        r
    }

    fn manifest(&mut self, status: String) -> Result<()> {
        let text = Manifest {
            cfg: self.cfg,
            status,
            sensors: &self.sensors,
            fill_distance: self.fill_distance,
            fit_rel_error: self.fit_rel_error,
            timings: &self.timings,
            outputs: &self.artifacts.written.clone(),
        }
        .to_toml();
        self.artifacts.write("manifest.toml", |w| Ok(w.write_all(text.as_bytes())?))
    }

    /// Records a failure in the manifest before passing the error on.
    fn fail<T>(&mut self, r: Result<T>) -> Result<T> {
        if let Err(e) = &r {
            let _ = self.manifest(format!("failed: {e}"));
        }
        r
    }

    fn run<M>(&mut self, setup: Result<Setup<M>>, times: &[f64]) -> Result<ExperimentOutcome>
    where
        M: SmsModel + Sync,
        M::Value: SnapshotValue,
    {
        let setup = self.fail(setup)?;
        self.fit_rel_error = setup.fit_rel_error;
        let cfg = self.cfg;
        let exported: Vec<GridField<M::Value>> = cfg.export_indices().into_iter().map(|k| setup.snaps[k].clone()).collect();
        let r = match cfg.dns_format {
            DnsFormat::Csv => self.artifacts.write("dns.csv", |w| write_snapshots_csv(&exported, w)),
            DnsFormat::Bin => self.artifacts.write("dns.bin", |w| write_smda(&exported, w)),
        };
        self.fail(r)?;
        drop(exported);

        let sensors = self.sensors.clone();
        let clean_noise = NoiseSpec { fraction: 0.0, ..cfg.noise() };
        let noisy_noise = cfg.noise();
        let timed = |f: &dyn Fn() -> Result<MethodRun>| {
            let start = Instant::now();
            let r = f();
            (r, start.elapsed().as_secs_f64())
        };
        let ((sms, t_sms), (clean, t_clean), (noisy, t_noisy)) = std::thread::scope(|s| {
            let h_sms = s.spawn(|| timed(&|| sms_run(cfg, &setup, times)));
            let h_clean = s.spawn(|| timed(&|| da_run(cfg, &setup, &sensors, times, &clean_noise)));
            let noisy = timed(&|| da_run(cfg, &setup, &sensors, times, &noisy_noise));
            (h_sms.join().expect("sms thread"), h_clean.join().expect("clean DA thread"), noisy)
        });
        self.timings.extend([("sms".to_string(), t_sms), ("dasms_clean".to_string(), t_clean), ("dasms_noisy".to_string(), t_noisy)]);

        if let Ok(run) = &sms {
            let r = self.artifacts.write("sms.csv", |w| write_params_csv(run, w));
            self.fail(r)?;
        }
        if let Ok(run) = &clean {
            let r = self.artifacts.write("dasms_clean.csv", |w| write_params_csv(run, w));
            self.fail(r)?;
            let r = self.artifacts.write("corrections.csv", |w| Ok(write_corrections_csv(&run.corrections, w)?));
            self.fail(r)?;
        }
        if let Ok(run) = &noisy {
            let r = self.artifacts.write("dasms_noisy.csv", |w| write_params_csv(run, w));
            self.fail(r)?;
            let r = self.artifacts.write("corrections_noisy.csv", |w| Ok(write_corrections_csv(&run.corrections, w)?));
            self.fail(r)?;
        }
        let sms = self.fail(sms)?;
        let clean = self.fail(clean)?;
        let noisy = self.fail(noisy)?;

        let r = self.timed("errors", || {
            let e_sms = field_errors(&setup, &sms)?;
            let e_clean = field_errors(&setup, &clean)?;
            let e_noisy = field_errors(&setup, &noisy)?;
            Ok(times
                .iter()
                .enumerate()
                .map(|(k, &t)| ErrorRow { t, sms: e_sms[k], dasms_clean: e_clean[k], dasms_noisy: e_noisy[k] })
                .collect::<Vec<_>>())
        });
        let errors = self.fail(r)?;
        let r = self.artifacts.write("errors.csv", |w| write_errors_csv(&errors, w));
        self.fail(r)?;

        let mut peaks = Vec::new();
        if cfg.preset == Preset::Nls {
            let origin = [0.0, 0.0];
            let model = &setup.model;
            peaks.push(peak("dns", setup.snaps.iter().map(|s| (s.time, s.sample(&origin).modulus()))));
            for (name, run) in [("sms", &sms), ("dasms_clean", &clean), ("dasms_noisy", &noisy)] {
                peaks.push(peak(name, run.times.iter().zip(&run.thetas).map(|(&t, th)| (t, model.eval(&origin, th.as_slice()).modulus()))));
            }
            let r = self.artifacts.write("peaks.csv", |w| write_peaks_csv(&peaks, w));
            self.fail(r)?;
        }
        self.manifest("ok".into())?;
        Ok(ExperimentOutcome {
            config: cfg.clone(),
            sensors: self.sensors.clone(),
            fill_distance: self.fill_distance,
            fit_rel_error: self.fit_rel_error,
            errors,
            peaks,
            sms,
            dasms_clean: clean,
            dasms_noisy: noisy,
            dns: M::Value::wrap(setup.snaps),
            timings: self.timings.clone(),
        })
    }
}

/// Runs DNS, SMS and both DA-SMS variants and writes the artifacts to `out`
/// when given. Numerical failures leave the artifacts written so far, plus a
/// manifest recording the failure.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let sensors = cfg.sensor_points()?;
    let fill = sensor_fill_distance(cfg, &sensors);
    let mut driver = Driver { cfg, artifacts: Artifacts::new(out)?, timings: Vec::new(), sensors, fill_distance: fill, fit_rel_error: None };
    let times = cfg.output_times();
    match cfg.preset {
        Preset::Nls => {
            let s = driver.timed("dns", || setup_nls(cfg, &times));
            driver.run(s, &times)
        }
        Preset::Ks => {
            let s = driver.timed("dns_and_fit", || setup_ks(cfg, &times));
            driver.run(s, &times)
        }
        Preset::Ad => {
            let s = driver.timed("dns_and_fit", || setup_ad(cfg, &times));
            driver.run(s, &times)
        }
    }
}

fn sweep_generic<M: SmsModel>(cfg: &ExperimentConfig, setup: Setup<M>, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>> {
    let times = cfg.output_times();
    let k_end = times.iter().position(|&t| t == cfg.da_window[1]).expect("da end is an output time");
    let sms = sms_run(cfg, &setup, &times)?;
    let mut rows = vec![SweepRow { value: None, error: compute_relative_error(&setup.snaps[k_end], &setup.model, sms.thetas[k_end].as_slice())? }];
    for &v in values {
        let c = cfg.with_overrides(&[param.override_for(v)?])?;
        c.validate()?;
        let sensors = c.sensor_points()?;
        let run = da_run(&c, &setup, &sensors, &times, &c.noise())?;
        rows.push(SweepRow { value: Some(v), error: compute_relative_error(&setup.snaps[k_end], &setup.model, run.thetas[k_end].as_slice())? });
    }
    Ok(rows)
}

/// Relative error at the end of the DA window of the noisy DA-SMS run for
/// each swept value, after an SMS-only baseline row.
pub fn run_sensitivity(cfg: &ExperimentConfig, param: SweepParam, values: &[f64], out: Option<&Path>) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    for &v in values {
        cfg.with_overrides(&[param.override_for(v)?])?.validate()?;
    }
    let times = cfg.output_times();
    let rows = match cfg.preset {
        Preset::Nls => sweep_generic(cfg, setup_nls(cfg, &times)?, param, values),
        Preset::Ks => sweep_generic(cfg, setup_ks(cfg, &times)?, param, values),
        Preset::Ad => sweep_generic(cfg, setup_ad(cfg, &times)?, param, values),
    }?;
    let mut artifacts = Artifacts::new(out)?;
    artifacts.write("sweep.csv", |w| {
        writeln!(w, "param,value,error")?;
        for r in &rows {
            match r.value {
                None => writeln!(w, "sms_baseline,,{:.16e}", r.error)?,
                Some(v) => writeln!(w, "{},{:.16e},{:.16e}", param.name(), v, r.error)?,
            }
        }
        Ok(())
    })?;
    Ok(rows)
}
