use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dasrate::montecarlo::MrtEstimator;
use dasrate::{Layout, Scheme};
use dasrate_cli::config::{
    ConfigLayer, Evaluation, ExperimentConfig, ExperimentKind, GridLayer, NoiseModel, OutputFormat, OutputLayer,
    PlanLayer, SelectionLayer,
};
use dasrate_cli::{output, run, CliError};

#[derive(Parser)]
#[command(
    name = "dasrate",
    version,
    about = "Ergodic-rate experiments for co-located and distributed antenna layouts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write one table per curve.
    Run(RunArgs),
    /// Print the resolved configuration as JSON without running.
    ShowConfig(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Instantaneous,
    AveragedWithNoise,
    AveragedInterferenceLimited,
}

impl From<EstimatorArg> for MrtEstimator {
    fn from(arg: EstimatorArg) -> Self {
        match arg {
            EstimatorArg::Instantaneous => MrtEstimator::Instantaneous,
            EstimatorArg::AveragedWithNoise => MrtEstimator::AveragedWithNoise,
            EstimatorArg::AveragedInterferenceLimited => MrtEstimator::AveragedInterferenceLimited,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Experiment; may instead come from the config file.
    #[arg(value_enum)]
    experiment: Option<ExperimentKind>,
    /// TOML config file with [grid], [plan], [scenario] and [output] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Antenna counts L (comma separated).
    #[arg(long = "L", value_delimiter = ',')]
    antennas: Option<Vec<usize>>,
    /// User counts K (comma separated).
    #[arg(long = "K", value_delimiter = ',')]
    users: Option<Vec<usize>>,
    /// Antenna-to-user ratios L/K (comma separated), instead of K.
    #[arg(long = "ratio", value_delimiter = ',')]
    ratios: Option<Vec<f64>>,
    /// L/K grid for figure3 and figure6.
    #[arg(long, value_delimiter = ',')]
    upsilon: Option<Vec<f64>>,
    /// Path-loss factor.
    #[arg(long)]
    alpha: Option<f64>,
    /// SNR budget P_t/N_0 in dB.
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<f64>,
    /// Antenna layouts for scenario and sweep (ca, da).
    #[arg(long, value_delimiter = ',')]
    layout: Option<Vec<Layout>>,
    /// Precoding schemes for scenario and sweep (mrt, zfbf).
    #[arg(long, value_delimiter = ',')]
    scheme: Option<Vec<Scheme>>,
    /// Analytic route or simulation for scenario and sweep.
    #[arg(long, value_enum)]
    method: Option<Evaluation>,
    /// Noise handling of the analytic DA MRT SINR (figure2).
    #[arg(long, value_enum)]
    sinr_model: Option<NoiseModel>,
    /// SINR used by simulated MRT rates.
    #[arg(long, value_enum)]
    mrt_estimator: Option<EstimatorArg>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Fading draws per scenario.
    #[arg(long)]
    fading_draws: Option<usize>,
    /// User position realizations per antenna realization.
    #[arg(long)]
    user_realizations: Option<usize>,
    /// Antenna position realizations (DA only).
    #[arg(long)]
    antenna_realizations: Option<usize>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Use the published realization counts (500 user, 50 antenna).
    #[arg(long)]
    paper_scale: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Curve file format.
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

impl RunArgs {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            experiment: self.experiment,
            grid: GridLayer {
                antennas: self.antennas.clone(),
                users: self.users.clone(),
                ratios: self.ratios.clone(),
                upsilon: self.upsilon.clone(),
                alpha: self.alpha,
                snr_db: self.snr_db,
            },
            plan: PlanLayer {
                fading_draws: self.fading_draws,
                user_realizations: self.user_realizations,
                antenna_realizations: self.antenna_realizations,
                master_seed: self.seed,
                workers: self.workers,
                mrt_estimator: self.mrt_estimator.map(Into::into),
                paper_scale: self.paper_scale.then_some(true),
            },
            scenario: SelectionLayer {
                layouts: self.layout.clone(),
                schemes: self.scheme.clone(),
                method: self.method,
                sinr_model: self.sinr_model,
            },
            output: OutputLayer {
                dir: self.out.clone(),
                format: self.format,
            },
        }
    }

    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let file = match &self.config {
            Some(path) => ConfigLayer::from_file(path)?,
            None => ConfigLayer::default(),
        };
        ExperimentConfig::resolve(self.layer().over(file))
    }
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    let args = match cli.command {
        Command::ShowConfig(args) => {
            println!("{}", serde_json::to_string_pretty(&args.resolve()?)?);
            return Ok(0);
        }
        Command::Run(args) => args,
    };
    let config = args.resolve()?;
    output::prepare(&config)?;
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();
    let outcome = run(&config, |curve| {
        let path = output::write_curve(&config, curve)?;
        eprintln!("wrote {} ({} rows)", path.display(), curve.rows.len());
        Ok(())
    })?;
    let meta = output::write_meta(
        &config,
        &outcome.curves,
        &outcome.failures,
        started,
        clock.elapsed().as_secs_f64(),
    )?;
    eprintln!("wrote {}", meta.display());
    for failure in &outcome.failures {
        eprintln!("error: {failure}");
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let code = match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
