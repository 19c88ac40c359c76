//! Command-line entry point.
//!
//! Exit codes: 0 on success, 1 when verification fails or a run errors, 2 for
//! usage and configuration errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::adagan::{reweight_against, run_adagan, AdaganConfig, BetaSchedule, TrainingContext};
use crate::bench::{
    format_g6, generate_toy_dataset, parse_report, plot_columns, report_to_csv, report_to_json, run_experiment,
    ExperimentConfig, ReportFormat, ToyDatasetSpec,
};
use crate::error::Error;
use crate::generators::{DiscriminatorMode, GeneratorMixture, WeakLearner, WeightedSample};
use crate::theory_verify::{run_verification_with, VerifySettings, DEFAULT_CANDIDATES};

#[derive(Parser, Debug)]
#[command(name = "adagan", version, about = "Boosted generative mixtures and their discrete theory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the optimal-mixture theory on random discrete instances.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 16)]
        max_support: usize,
        /// Random candidates per brute-force instance.
        #[arg(long, default_value_t = DEFAULT_CANDIDATES)]
        candidates: usize,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run boosting once on a toy dataset and write mixture.json and run.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run a repeated-run experiment and write its report.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Directory for report.csv / report.json; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Print per-example discriminator values and weights for one reweighting round.
    WeightsDemo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a bench report into per-round columns for plotting.
    PlotData {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

fn default_seed() -> u64 {
    0
}

fn default_beta() -> f64 {
    0.5
}

/// Configuration of `run`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub dataset: ToyDatasetSpec,
    #[serde(default)]
    pub learner: WeakLearner,
    #[serde(default)]
    pub discriminator: DiscriminatorMode,
    pub iterations: usize,
    pub schedule: BetaSchedule,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// Configuration of `weights-demo`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightsDemoConfig {
    #[serde(default)]
    pub dataset: ToyDatasetSpec,
    #[serde(default)]
    pub learner: WeakLearner,
    #[serde(default)]
    pub discriminator: DiscriminatorMode,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

enum CliError {
    Usage(String),
    Failed(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Failed(_) => 1,
        }
    }
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(failed)?;
            }
            fs::write(path, text).map_err(|e| failed(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            match &e {
                CliError::Usage(m) | CliError::Failed(m) => eprintln!("error: {m}"),
            }
            e.code()
        }
    }
}

fn dispatch(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Verify {
            seed,
            instances,
            max_support,
            candidates,
            out,
        } => verify(
            VerifySettings {
                seed,
                instances,
                max_support,
                candidates,
            },
            out.as_deref(),
        ),
        Command::Run { config, out } => run(&config, &out).map(|_| 0),
        Command::Bench { config, out, format } => bench(&config, out, format.map(Into::into)).map(|_| 0),
        Command::WeightsDemo { config, out } => weights_demo(&config, out.as_deref()).map(|_| 0),
        Command::PlotData { report, out } => {
            let text = fs::read_to_string(&report).map_err(|e| usage(format!("cannot read {}: {e}", report.display())))?;
            let rows = parse_report(&text).map_err(usage)?;
            write_output(out.as_deref(), &plot_columns(&rows)).map(|_| 0)
        }
    }
}

fn verify(settings: VerifySettings, out: Option<&Path>) -> Result<i32, CliError> {
    let report = run_verification_with(&settings).map_err(usage)?;
    for p in &report.properties {
        eprintln!(
            "{} {:<34} checks={:<9} worst={:+.3e}",
            if p.passed { "PASS" } else { "FAIL" },
            p.id,
            p.checks,
            p.worst_violation
        );
    }
    let mut json = report.to_json().map_err(failed)?;
    json.push('\n');
    write_output(out, &json)?;
    Ok(if report.all_passed { 0 } else { 1 })
}

fn run(config_path: &Path, out: &Path) -> Result<(), CliError> {
    let config: RunConfig = load_json(config_path)?;
    config.schedule.validate().map_err(usage)?;
    if config.iterations == 0 {
        return Err(usage("iterations must be at least 1"));
    }
    let dataset = generate_toy_dataset(&config.dataset).map_err(usage)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ctx = TrainingContext::new(config.learner.clone(), config.discriminator);
    let adagan = AdaganConfig {
        iterations: config.iterations,
        schedule: config.schedule,
    };
    let result = run_adagan(&dataset.train, &adagan, &mut ctx, &mut rng);
    let (run, error) = match result {
        Ok(run) => (Some(run), None),
        Err(partial) => (partial.completed.clone(), Some(partial)),
    };
    fs::create_dir_all(out).map_err(failed)?;
    if let Some(run) = &run {
        let mixture = serde_json::to_string_pretty(&run.mixture).map_err(failed)?;
        write_output(Some(&out.join("mixture.json")), &(mixture + "\n"))?;
        let record = serde_json::to_string_pretty(&run.iterations).map_err(failed)?;
        write_output(Some(&out.join("run.json")), &(record + "\n"))?;
    }
    match error {
        Some(e) => Err(failed(e)),
        None => Ok(()),
    }
}

fn bench(config_path: &Path, out: Option<PathBuf>, format: Option<ReportFormat>) -> Result<(), CliError> {
    let text =
        fs::read_to_string(config_path).map_err(|e| usage(format!("cannot read {}: {e}", config_path.display())))?;
    let config = ExperimentConfig::from_json(&text).map_err(usage)?;
    let report = run_experiment(&config).map_err(|e| match e {
        Error::Config(_) => usage(e),
        other => failed(other),
    })?;
    for failure in &report.failures {
        eprintln!("warning: {failure}");
    }
    let format = format.unwrap_or(config.output.format);
    let (body, file) = match format {
        ReportFormat::Csv => (report_to_csv(&report), "report.csv"),
        ReportFormat::Json => (report_to_json(&report).map_err(failed)?, "report.json"),
    };
    let dir = out.or(config.output.dir.clone());
    match dir {
        Some(dir) => write_output(Some(&dir.join(file)), &body),
        None => write_output(None, &body),
    }
}

fn weights_demo(config_path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let config: WeightsDemoConfig = load_json(config_path)?;
    crate::error::check_unit_interval("beta", config.beta).map_err(usage)?;
    let dataset = generate_toy_dataset(&config.dataset).map_err(usage)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ctx = TrainingContext::new(config.learner.clone(), config.discriminator);
    let sample = WeightedSample::uniform(dataset.train.clone()).map_err(failed)?;
    let first = GeneratorMixture::single(config.learner.fit(&sample, &mut rng).map_err(failed)?);
    let round = reweight_against(&dataset.train, &first, config.beta, &mut ctx, &mut rng).map_err(failed)?;

    let d = dataset.train[0].len();
    let mut text: String = (0..d).map(|k| format!("x{k},")).collect();
    text.push_str("d,h,weight\n");
    for (i, x) in dataset.train.iter().enumerate() {
        for v in x {
            text.push_str(&format_g6(*v));
            text.push(',');
        }
        text.push_str(&format!(
            "{},{},{}\n",
            format_g6(round.d_values[i]),
            format_g6(round.h_values[i]),
            format_g6(round.weights[i])
        ));
    }
    write_output(out, &text)
}
