use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use defglm::simlab::ScenarioConfig;
use defglm::tuning::Method;
use defglm_cli::commands::{rerun, run};
use defglm_cli::io::load_json;
use defglm_cli::manifest::{Invocation, MANIFEST_FILE};
use defglm_cli::traffic::{Direction, TrafficConfig};
use defglm_cli::{CliError, CliResult};

/// Extended GLMs with dropout regularization in mean and dispersion.
///
/// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
#[derive(Parser)]
#[command(name = "defglm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario configuration (JSON). Unknown keys are rejected.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one data set from a scenario and write it as `data.csv` (columns x,y).
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Replicate index; 0 is the data set used for cross-validation.
        #[arg(long, default_value_t = 0)]
        replicate: usize,
    },
    /// Run a full scenario: CV on replicate 0, fits on replicates 1..=R, RMSE tables.
    Scenario {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of bernoulli,gaussian,pmle.
        #[arg(long, default_value = "bernoulli,gaussian,pmle")]
        methods: String,
        /// Drop dispersion RMSEs above their 95th percentile before summarizing.
        #[arg(long)]
        cut_disp: bool,
    },
    /// Random-search cross-validation on a data file or on replicate 0 of the scenario.
    Cv {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "bernoulli,gaussian,pmle")]
        methods: String,
        /// Data CSV with columns x,y; defaults to the scenario's replicate 0.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Fit one model with fixed hyperparameters and export curves, coefficients and trace.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        methods: String,
        /// The two hyperparameters, comma-separated (dropout rates, noise sds or lambdas).
        #[arg(long)]
        params: String,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Cyclic double Poisson model of hourly traffic counts.
    ///
    /// The input CSV needs the columns sensor,direction,date,hour,count with direction
    /// inbound or outbound, date as YYYY-MM-DD and hour in 0..=23 (24 is read as 0).
    Traffic {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        sensor: String,
        #[arg(long)]
        direction: String,
        /// Dropout noise: bernoulli or gaussian.
        #[arg(long, default_value = "bernoulli")]
        methods: String,
        /// Number of random-search samples.
        #[arg(long, default_value_t = 5000)]
        samples: usize,
        /// Keep only June to August 2019.
        #[arg(long)]
        summer_2019: bool,
        /// Optional model configuration (JSON): knots_mean, knots_disp, folds, grid, optim.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat a recorded run and verify that every output is byte-identical.
    Rerun {
        /// A manifest.json, or the directory containing it.
        #[arg(long)]
        manifest: PathBuf,
        /// Where to write the repeated outputs; defaults to the manifest's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_methods(s: &str) -> CliResult<Vec<Method>> {
    let mut out = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let m = Method::parse(part)?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(CliError::Config("--methods names no method".into()));
    }
    Ok(out)
}

fn single_method(s: &str) -> CliResult<Method> {
    match parse_methods(s)?.as_slice() {
        [m] => Ok(*m),
        _ => Err(CliError::Config("exactly one method is required".into())),
    }
}

fn parse_pair(s: &str) -> CliResult<[f64; 2]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("--params: {e}")))?;
    match v.as_slice() {
        [a, b] => Ok([*a, *b]),
        _ => Err(CliError::Config(format!("--params needs two values, got {}", v.len()))),
    }
}

fn absolute(path: PathBuf) -> CliResult<PathBuf> {
    path.canonicalize().map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))
}

fn scenario_config(path: &Path) -> CliResult<ScenarioConfig> {
    let c: ScenarioConfig = load_json(path)?;
    c.validate()?;
    Ok(c)
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let (inv, out) = match cli.command {
        Command::Simulate { common, replicate } => (
            Invocation::Simulate { config: scenario_config(&common.config)?, replicate, seed: common.seed },
            common.out,
        ),
        Command::Scenario { common, methods, cut_disp } => (
            Invocation::Scenario {
                config: scenario_config(&common.config)?,
                methods: parse_methods(&methods)?,
                cut_disp,
                seed: common.seed,
            },
            common.out,
        ),
        Command::Cv { common, methods, data } => (
            Invocation::Cv {
                config: scenario_config(&common.config)?,
                methods: parse_methods(&methods)?,
                data: data.map(absolute).transpose()?,
                seed: common.seed,
            },
            common.out,
        ),
        Command::Fit { common, methods, params, data } => (
            Invocation::Fit {
                config: scenario_config(&common.config)?,
                method: single_method(&methods)?,
                params: parse_pair(&params)?,
                data: data.map(absolute).transpose()?,
                seed: common.seed,
            },
            common.out,
        ),
        Command::Traffic { input, sensor, direction, methods, samples, summer_2019, config, seed, out } => {
            let config: TrafficConfig = match config {
                Some(p) => load_json(&p)?,
                None => TrafficConfig::default(),
            };
            config.optim.validate()?;
            let direction = Direction::parse(&direction).ok_or_else(|| {
                CliError::Config(format!("--direction must be inbound or outbound, got `{direction}`"))
            })?;
            if samples == 0 {
                return Err(CliError::Config("--samples must be positive".into()));
            }
            let inv = Invocation::Traffic {
                config,
                input: absolute(input)?,
                sensor,
                direction,
                method: single_method(&methods)?,
                samples,
                summer_2019,
                seed,
            };
            (inv, out)
        }
        Command::Rerun { manifest, out } => {
            let path = if manifest.is_dir() { manifest.join(MANIFEST_FILE) } else { manifest };
            let dir = out.unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
            let m = rerun(&path, &dir)?;
            println!("reproduced {} outputs of `{}` in {}", m.outputs.len(), m.command, dir.display());
            return Ok(());
        }
    };
    let m = run(&inv, &out)?;
    for note in &m.notes {
        log::info!("{note}");
    }
    println!("wrote {} files and {MANIFEST_FILE} to {}", m.outputs.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
