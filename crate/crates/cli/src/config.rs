//! Training configuration: flags over config file over defaults.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use spikelda::checkpoint::{CheckpointFormat, WeightEncoding};
use spikelda::online::StepSchedule;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Cgs,
    Spikecgs,
    EdSpikelda,
    DuSpikelda,
    SemiSpikelda,
    EdSpikeplsi,
}

impl Algorithm {
    pub fn encoding(self) -> WeightEncoding {
        match self {
            Algorithm::Cgs | Algorithm::Spikecgs => WeightEncoding::Counts,
            Algorithm::EdSpikelda | Algorithm::DuSpikelda => WeightEncoding::Map,
            Algorithm::SemiSpikelda => WeightEncoding::Semi,
            Algorithm::EdSpikeplsi => WeightEncoding::Plsi,
        }
    }

    fn default_lambda(self) -> f64 {
        match self {
            Algorithm::EdSpikelda | Algorithm::DuSpikelda => 1.1,
            Algorithm::EdSpikeplsi => 1.0,
            _ => 0.1,
        }
    }

    fn default_iterations(self) -> u64 {
        match self {
            Algorithm::Cgs | Algorithm::Spikecgs => 200,
            Algorithm::EdSpikelda | Algorithm::EdSpikeplsi => 1_000_000,
            Algorithm::DuSpikelda | Algorithm::SemiSpikelda => 1000,
        }
    }

    fn default_schedules(self) -> (&'static str, &'static str) {
        match self {
            Algorithm::EdSpikelda => ("variance-tracking", "adagrad:0.5,1"),
            Algorithm::EdSpikeplsi => ("variance-tracking", "variance-tracking"),
            Algorithm::DuSpikelda => ("rmsprop:0.5", "rmsprop:1"),
            Algorithm::SemiSpikelda => ("rmsprop:0.5", "rmsprop:0.5"),
            Algorithm::Cgs | Algorithm::Spikecgs => ("robbins-monro", "robbins-monro"),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CkptFormat {
    #[default]
    Json,
    Binary,
}

impl From<CkptFormat> for CheckpointFormat {
    fn from(f: CkptFormat) -> Self {
        match f {
            CkptFormat::Json => CheckpointFormat::Json,
            CkptFormat::Binary => CheckpointFormat::Binary,
        }
    }
}

/// Training options as given on the command line or in a config file.
/// Every field is optional here; [`TrainArgs::resolve`] fills defaults.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub algo: Option<Algorithm>,
    /// Number of topics.
    #[arg(long)]
    pub k: Option<usize>,
    /// Symmetric document-topic prior.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Symmetric topic-word prior (CGS and SpikeCGS).
    #[arg(long)]
    pub phi: Option<f64>,
    /// Step schedule for M^α, e.g. `rmsprop:0.5` or `robbins-monro:0.1,1000,0.7`.
    #[arg(long)]
    pub schedule: Option<String>,
    /// Step schedule for M^β; defaults per algorithm.
    #[arg(long)]
    pub schedule_beta: Option<String>,
    /// Sweeps (Gibbs), token events (ed-*) or minibatches (du-, semi-).
    #[arg(long)]
    pub iters: Option<u64>,
    /// Minibatch size: tokens for du-SpikeLDA, documents for semi-SpikeLDA.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Gibbs sweeps per document in semi-SpikeLDA (required there).
    #[arg(long = "T", id = "T")]
    #[serde(rename = "T")]
    pub t: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Record a trajectory row every this many iterations.
    #[arg(long)]
    pub report_every: Option<u64>,
    /// Fraction of documents held out for fold-in perplexity; 0 trains on
    /// everything.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub fold_in_sweeps: Option<usize>,
    /// Corpus in UCI docword format (optionally gzipped); defaults to the
    /// bundled toy corpus.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub checkpoint_format: Option<CkptFormat>,
    /// Append trajectory rows here.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Append the final perplexity row here instead of stdout.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Evaluate the exact objective at every trajectory row (tiny corpora).
    #[arg(long)]
    pub objective: Option<bool>,

    /// Config file of `key = value` lines; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    #[serde(skip)]
    pub dump_config: bool,
}

/// Fully resolved training configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunConfig {
    pub algo: Algorithm,
    pub k: usize,
    pub lambda: f64,
    pub phi: f64,
    pub schedule: String,
    pub schedule_beta: String,
    pub iters: u64,
    pub batch: usize,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    pub seed: u64,
    pub report_every: u64,
    pub test_fraction: f64,
    pub fold_in_sweeps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,
    pub out: PathBuf,
    pub checkpoint_format: CkptFormat,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<PathBuf>,
    pub format: Format,
    pub objective: bool,
}

impl RunConfig {
    pub fn schedules(&self) -> Result<(StepSchedule, StepSchedule), CliError> {
        let parse = |s: &str, flag: &str| s.parse::<StepSchedule>().map_err(|e| CliError::Usage(format!("--{flag}: {e}")));
        Ok((parse(&self.schedule, "schedule")?, parse(&self.schedule_beta, "schedule-beta")?))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn load_file(path: &Path) -> Result<TrainArgs, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("reading config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

fn or<T>(a: Option<T>, b: Option<T>) -> Option<T> {
    a.or(b)
}

impl TrainArgs {
    fn overlay(self, file: TrainArgs) -> TrainArgs {
        TrainArgs {
            algo: or(self.algo, file.algo),
            k: or(self.k, file.k),
            lambda: or(self.lambda, file.lambda),
            phi: or(self.phi, file.phi),
            schedule: or(self.schedule, file.schedule),
            schedule_beta: or(self.schedule_beta, file.schedule_beta),
            iters: or(self.iters, file.iters),
            batch: or(self.batch, file.batch),
            t: or(self.t, file.t),
            seed: or(self.seed, file.seed),
            report_every: or(self.report_every, file.report_every),
            test_fraction: or(self.test_fraction, file.test_fraction),
            fold_in_sweeps: or(self.fold_in_sweeps, file.fold_in_sweeps),
            corpus: or(self.corpus, file.corpus),
            vocab: or(self.vocab, file.vocab),
            out: or(self.out, file.out),
            checkpoint_format: or(self.checkpoint_format, file.checkpoint_format),
            trajectory: or(self.trajectory, file.trajectory),
            metrics: or(self.metrics, file.metrics),
            format: or(self.format, file.format),
            objective: or(self.objective, file.objective),
            config: self.config,
            dump_config: self.dump_config,
        }
    }

    pub fn resolve(self) -> Result<RunConfig, CliError> {
        let args = match &self.config {
            Some(path) => {
                let file = load_file(path)?;
                self.overlay(file)
            }
            None => self,
        };
        let algo = args.algo.ok_or_else(|| CliError::Usage("missing required option --algo".into()))?;
        let seed = args.seed.ok_or_else(|| CliError::Usage("missing required option --seed".into()))?;
        let t = match (algo, args.t) {
            (Algorithm::SemiSpikelda, None) => return Err(CliError::Usage("semi-spikelda requires --T (Gibbs sweeps per document)".into())),
            (Algorithm::SemiSpikelda, Some(0)) => return Err(CliError::Usage("--T must be at least 1".into())),
            (Algorithm::SemiSpikelda, t) => t,
            (_, Some(_)) => {
                log::warn!("--T only applies to semi-spikelda; ignored");
                None
            }
            (_, None) => None,
        };
        let (sa, sb) = algo.default_schedules();
        let cfg = RunConfig {
            algo,
            k: args.k.unwrap_or(3),
            lambda: args.lambda.unwrap_or(algo.default_lambda()),
            phi: args.phi.unwrap_or(0.01),
            schedule_beta: args.schedule_beta.or_else(|| args.schedule.clone()).unwrap_or_else(|| sb.into()),
            schedule: args.schedule.unwrap_or_else(|| sa.into()),
            iters: args.iters.unwrap_or(algo.default_iterations()),
            batch: args.batch.unwrap_or(match algo {
                Algorithm::SemiSpikelda => 100,
                _ => 1000,
            }),
            t,
            seed,
            report_every: args.report_every.unwrap_or(0),
            test_fraction: args.test_fraction.unwrap_or(0.1),
            fold_in_sweeps: args.fold_in_sweeps.unwrap_or(200),
            corpus: args.corpus,
            vocab: args.vocab,
            out: args.out.unwrap_or_else(|| PathBuf::from("spikelda-checkpoint.json")),
            checkpoint_format: args.checkpoint_format.unwrap_or_default(),
            trajectory: args.trajectory,
            metrics: args.metrics,
            format: args.format.unwrap_or_default(),
            objective: args.objective.unwrap_or(false),
        };
        if cfg.k == 0 {
            return Err(CliError::Usage("--k must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&cfg.test_fraction) {
            return Err(CliError::Usage("--test-fraction must lie in [0, 1)".into()));
        }
        if cfg.batch == 0 {
            return Err(CliError::Usage("--batch must be at least 1".into()));
        }
        if matches!(algo, Algorithm::EdSpikelda | Algorithm::DuSpikelda) && cfg.lambda <= 1.0 {
            return Err(CliError::Usage(format!("{algo} needs --lambda > 1, got {}", cfg.lambda)));
        }
        cfg.schedules()?;
        Ok(cfg)
    }
}
