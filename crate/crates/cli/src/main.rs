use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dasms::experiment::{run_experiment, run_sensitivity, ExperimentConfig, Preset, SweepParam};
use dasms::Error;

#[derive(Parser)]
#[command(name = "dasms", version, about = "Shape-morphing solutions with data assimilation: experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run DNS, SMS and clean and noisy DA-SMS for one experiment.
    Run {
        #[command(flatten)]
        common: Common,
        /// Resolved configuration from an earlier run's manifest.toml (or a full config file).
        #[arg(long, conflicts_with = "preset")]
        manifest: Option<PathBuf>,
    },
    /// Sweep one DA parameter and tabulate the error at the end of the DA window.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// gamma_t, dt_obs, num_sensors or sensor_jitter.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
    },
}

#[derive(clap::Args)]
struct Common {
    /// nls, ks or ad.
    #[arg(long)]
    preset: Option<String>,
    /// Override a configuration key, e.g. `--set gamma_t=2e-3` or `--set sensors.count=20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn config(&self, manifest: Option<&PathBuf>) -> Result<ExperimentConfig, Error> {
        let base = match (manifest, &self.preset) {
            (Some(path), _) => ExperimentConfig::from_file(path)?,
            (None, Some(name)) => ExperimentConfig::preset(Preset::parse(name)?),
            (None, None) => return Err(Error::Config("either --preset or --manifest is required".into())),
        };
        let mut sets = self.sets.clone();
        if let Some(seed) = self.seed {
            sets.push(format!("seed={seed}"));
        }
        let cfg = base.with_overrides(&sets)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { common, manifest } => {
            let cfg = common.config(manifest.as_ref())?;
            let outcome = run_experiment(&cfg, Some(&common.out))?;
            let last = outcome.errors.last().expect("at least one output time");
            println!("wrote {}", common.out.display());
            println!("final errors at t = {}: sms {:.3e}, dasms_clean {:.3e}, dasms_noisy {:.3e}", last.t, last.sms, last.dasms_clean, last.dasms_noisy);
            for p in &outcome.peaks {
                println!("peak {}: t = {:.2}, |u(0,t)| = {:.5}", p.method, p.t_peak, p.amplitude);
            }
        }
        Command::Sweep { common, param, values } => {
            let cfg = common.config(None)?;
            let param = SweepParam::parse(&param)?;
            let rows = run_sensitivity(&cfg, param, &values, Some(&common.out))?;
            println!("{:>14} {:>12}", param.name(), "error");
            for r in rows {
                match r.value {
                    None => println!("{:>14} {:>12.4e}", "sms", r.error),
                    Some(v) => println!("{v:>14} {:>12.4e}", r.error),
                }
            }
        }
    }
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code.
fn run_cli<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() { 2 } else { 3 }
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run_cli(std::env::args_os()))
}
