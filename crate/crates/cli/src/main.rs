mod config;
mod metrics;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spikelda::checkpoint::{CheckpointMeta, WeightEncoding};
use spikelda::corpus::{parse_uci, read_uci, split_fold_in, write_uci_files, SplitSpec};
use spikelda::eval::{fold_in_perplexity, weights_to_model, Decoding};
use spikelda::gibbs::{cgs_train, spikecgs_init, spikecgs_train, ScanOrder};
use spikelda::online::{du_train, ed_train, semi_train, DirectionField, Integrator, LearningMode, StepSchedule, TrainOptions, TrainOutput};
use spikelda::pruning::{continue_training_pruned, prune, DEFAULT_RESIDENT_DOCS, DEFAULT_TOP_WORDS};
use spikelda::synth::{generate, SynthConfig};
use spikelda::verify::{self, Check, InstanceSpec, VerifyConfig};
use spikelda::{Checkpoint, Corpus, Hyperparams};

use config::{Algorithm, CkptFormat, Format, RunConfig, TrainArgs};
use metrics::{write_metrics, write_trajectory, MetricsRow};

const TOY_DOCWORD: &str = include_str!("../data/docword.toy.txt");
const TOY_VOCAB: &str = include_str!("../data/vocab.toy.txt");

#[derive(Debug)]
pub enum CliError {
    /// Exit 1: a property check or evaluation failed.
    Failure(String),
    /// Exit 2.
    Usage(String),
    /// Exit 3.
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Failure(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Failure(m) | CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl From<spikelda::Error> for CliError {
    fn from(e: spikelda::Error) -> Self {
        use spikelda::Error as E;
        let msg = e.to_string();
        match e {
            E::Config(_) => CliError::Usage(msg),
            E::Parse { .. } | E::Range { .. } | E::Consistency(_) | E::EmptyCorpus | E::Store { .. } | E::Io { .. } | E::Stream(_) | E::Checkpoint(_) => {
                CliError::Data(msg)
            }
            _ => CliError::Failure(msg),
        }
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(name = "spikelda", version, about = "Topic models trained by spiking neural networks")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory searched for relative corpus paths that do not exist.
    #[arg(long, global = true, env = "SPIKELDA_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Fold-in perplexity of a checkpoint.
    Eval(EvalArgs),
    /// Prune a checkpoint to the hardware fan-in limit.
    Prune(PruneArgs),
    /// Run the mean-limit ODE checks.
    Verify(VerifyArgs),
    /// Generate a synthetic LDA corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// Corpus in UCI docword format; defaults to the bundled toy corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Held-out fraction; defaults to the split recorded in the checkpoint.
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long, default_value_t = 200)]
    fold_in_sweeps: usize,
    /// Average θ over the second half of the fold-in sweeps.
    #[arg(long)]
    average: bool,
    #[arg(long, default_value = "normalized", value_parser = parse_from_str::<Decoding>)]
    decoding: Decoding,
    #[arg(long)]
    seed: u64,
    /// Append the result here instead of printing it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Args)]
struct PruneArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value_t = DEFAULT_TOP_WORDS)]
    top_words: usize,
    #[arg(long, default_value_t = DEFAULT_RESIDENT_DOCS)]
    resident_docs: usize,
    /// Pruned checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// External store for non-resident document synapses; defaults to the
    /// output path with extension `mbeta`.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Token events of ed-SpikeLDA training on the pruned network.
    #[arg(long, default_value_t = 0)]
    continue_iters: u64,
    #[arg(long, default_value = "variance-tracking")]
    schedule: String,
    #[arg(long, default_value = "adagrad:0.5,1")]
    schedule_beta: String,
    /// Required with --continue-iters.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = CkptFormat::Json)]
    checkpoint_format: CkptFormat,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Restrict to these modes (plsi, map, semi).
    #[arg(long, value_parser = parse_from_str::<LearningMode>)]
    mode: Vec<LearningMode>,
    /// Restrict to these checks.
    #[arg(long, value_parser = parse_from_str::<Check>)]
    check: Vec<Check>,
    #[arg(long, value_parser = parse_from_str::<Integrator>)]
    integrator: Option<Integrator>,
    #[arg(long)]
    dt: Option<f64>,
    /// Seed of the generated instance.
    #[arg(long)]
    seed: Option<u64>,
    /// Scale the M^α direction field by 1.5 (negative control).
    #[arg(long, hide = true)]
    corrupt: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Start from the bundled toy configuration (K=3, V=50, D=20).
    #[arg(long)]
    toy: bool,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    docs: Option<usize>,
    #[arg(long)]
    doc_len: Option<usize>,
    #[arg(long)]
    topic_concentration: Option<f64>,
    #[arg(long)]
    doc_concentration: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "synth")]
    name: String,
}

fn parse_from_str<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

fn resolve_path(p: &Path, data_dir: Option<&Path>) -> PathBuf {
    match data_dir {
        Some(dir) if p.is_relative() && !p.exists() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

/// `docword.NAME.txt[.gz]` pairs with `vocab.NAME.txt[.gz]` in the same
/// directory when present.
fn sibling_vocab(docword: &Path) -> Option<PathBuf> {
    let name = docword.file_name()?.to_str()?;
    let rest = name.strip_prefix("docword.")?;
    let dir = docword.parent().unwrap_or(Path::new(""));
    let stem = rest.strip_suffix(".gz").unwrap_or(rest);
    [stem.to_string(), format!("{stem}.gz")]
        .into_iter()
        .map(|f| dir.join(format!("vocab.{f}")))
        .find(|p| p.exists())
}

fn load_corpus(corpus: Option<&Path>, vocab: Option<&Path>, data_dir: Option<&Path>) -> Result<Corpus> {
    let corpus = match corpus {
        None => parse_uci(TOY_DOCWORD.as_bytes(), Some(TOY_VOCAB.as_bytes()))?,
        Some(p) => {
            let dw = resolve_path(p, data_dir);
            let vocab = vocab.map(|v| resolve_path(v, data_dir)).or_else(|| sibling_vocab(&dw));
            read_uci(&dw, vocab.as_deref())?
        }
    };
    Ok(corpus.without_empty_docs().0)
}

fn train_corpus(corpus: &Corpus, split: Option<SplitSpec>) -> Result<Corpus> {
    Ok(match split {
        Some(s) => split_fold_in(corpus, s.test_fraction, s.seed)?.train,
        None => corpus.clone(),
    })
}

fn cmd_train(args: TrainArgs, data_dir: Option<&Path>) -> Result<()> {
    let dump = args.dump_config;
    let cfg = args.resolve()?;
    if dump {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let corpus = load_corpus(cfg.corpus.as_deref(), cfg.vocab.as_deref(), data_dir)?;
    let split_spec = (cfg.test_fraction > 0.0).then_some(SplitSpec {
        test_fraction: cfg.test_fraction,
        seed: cfg.seed,
    });
    let split = split_spec.map(|s| split_fold_in(&corpus, s.test_fraction, s.seed)).transpose()?;
    let train = split.as_ref().map_or(&corpus, |s| &s.train);
    let hp = Hyperparams::symmetric(cfg.k, corpus.vocab_size(), cfg.lambda, cfg.phi)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let out = run_training(&cfg, train, &hp, &mut rng)?;

    let mut extra = BTreeMap::new();
    extra.insert("config".to_string(), cfg.to_toml());
    let meta = CheckpointMeta {
        algorithm: cfg.algo.to_string(),
        iterations: cfg.iters,
        seed: cfg.seed,
        split: split_spec,
        extra,
    };
    let ckpt = Checkpoint::new(cfg.algo.encoding(), out.weights.clone(), hp.clone(), meta);
    ckpt.save(&cfg.out, cfg.checkpoint_format.into())?;
    log::info!("wrote checkpoint {}", cfg.out.display());
    if let Some(path) = &cfg.trajectory {
        if out.trajectory.is_empty() {
            log::warn!("{} records no trajectory", cfg.algo);
        }
        write_trajectory(&out.trajectory, cfg.format, path)?;
    }
    if let Some(split) = &split {
        let model = weights_to_model(&out.weights, &hp, Decoding::Normalized)?;
        let report = fold_in_perplexity(
            &model,
            &split.test_observed,
            &split.test_holdout,
            hp.lambda(),
            cfg.fold_in_sweeps,
            false,
            cfg.seed,
        )?;
        eprintln!("{} perplexity {:.4} on {} held-out tokens", cfg.algo, report.perplexity, report.tokens);
        let row = MetricsRow::new(cfg.algo.to_string(), cfg.iters, report.perplexity, cfg.seed);
        write_metrics(&[row], cfg.format, cfg.metrics.as_deref())?;
    }
    Ok(())
}

fn run_training(cfg: &RunConfig, train: &Corpus, hp: &Hyperparams<f64>, rng: &mut ChaCha8Rng) -> Result<TrainOutput<f64>> {
    let opts = TrainOptions {
        report_every: cfg.report_every,
        objective: cfg.objective,
    };
    let (sa, sb) = cfg.schedules()?;
    let out = match cfg.algo {
        Algorithm::Cgs => {
            let counts = cgs_train(train, hp, cfg.iters as usize, ScanOrder::Systematic, rng)?;
            TrainOutput {
                weights: spikecgs_init(&counts, hp)?,
                trajectory: Vec::new(),
            }
        }
        Algorithm::Spikecgs => TrainOutput {
            weights: spikecgs_train(train, hp, cfg.iters as usize, ScanOrder::TokenUniform, rng)?.0,
            trajectory: Vec::new(),
        },
        Algorithm::EdSpikelda => ed_train(train, hp, LearningMode::Map, (sa, sb), cfg.iters, opts, rng)?,
        Algorithm::EdSpikeplsi => ed_train(train, hp, LearningMode::Plsi, (sa, sb), cfg.iters, opts, rng)?,
        Algorithm::DuSpikelda => du_train(train, hp, LearningMode::Map, (sa, sb), cfg.iters, cfg.batch, opts, rng)?,
        Algorithm::SemiSpikelda => {
            let t = cfg.t.expect("validated");
            semi_train(train, hp, sa, cfg.iters, cfg.batch, t, opts, rng)?
        }
    };
    Ok(out)
}

fn cmd_eval(args: EvalArgs, data_dir: Option<&Path>) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let corpus = load_corpus(args.corpus.corpus.as_deref(), args.corpus.vocab.as_deref(), data_dir)?;
    if ckpt.weights.vocab_size() != corpus.vocab_size() {
        return Err(CliError::Data(format!(
            "vocabulary mismatch: checkpoint has V={}, corpus has V={}",
            ckpt.weights.vocab_size(),
            corpus.vocab_size()
        )));
    }
    let spec = match (args.test_fraction, ckpt.meta.split) {
        (Some(f), _) => SplitSpec {
            test_fraction: f,
            seed: args.seed,
        },
        (None, Some(s)) => s,
        (None, None) => return Err(CliError::Usage("checkpoint records no split; pass --test-fraction".into())),
    };
    let split = split_fold_in(&corpus, spec.test_fraction, spec.seed)?;
    let model = weights_to_model(&ckpt.weights, &ckpt.hyperparams, args.decoding)?;
    let report = fold_in_perplexity(
        &model,
        &split.test_observed,
        &split.test_holdout,
        ckpt.hyperparams.lambda(),
        args.fold_in_sweeps,
        args.average,
        args.seed,
    )?;
    if !report.perplexity.is_finite() {
        return Err(CliError::Failure(format!(
            "perplexity is not finite ({} held-out tokens with zero probability)",
            report.zero_probability.len()
        )));
    }
    eprintln!(
        "perplexity {:.4} on {} held-out tokens ({} documents excluded)",
        report.perplexity, report.tokens, report.excluded_docs
    );
    let row = MetricsRow::new(ckpt.meta.algorithm.clone(), ckpt.meta.iterations, report.perplexity, args.seed);
    write_metrics(&[row], args.format, args.out.as_deref())
}

fn cmd_prune(args: PruneArgs, data_dir: Option<&Path>) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let corpus = load_corpus(args.corpus.corpus.as_deref(), args.corpus.vocab.as_deref(), data_dir)?;
    let train = train_corpus(&corpus, ckpt.meta.split)?;
    if train.vocab_size() != ckpt.weights.vocab_size() || train.num_docs() != ckpt.weights.num_docs() {
        return Err(CliError::Data(format!(
            "corpus (V={}, D={}) does not match the checkpoint (V={}, D={})",
            train.vocab_size(),
            train.num_docs(),
            ckpt.weights.vocab_size(),
            ckpt.weights.num_docs()
        )));
    }
    let store = args.store.unwrap_or_else(|| args.out.with_extension("mbeta"));
    let mut net = prune(&ckpt.weights, &train, args.top_words, args.resident_docs, &store)?;
    if args.continue_iters > 0 {
        if ckpt.encoding != WeightEncoding::Map {
            return Err(CliError::Usage("--continue-iters needs a MAP-encoded (ed- or du-spikelda) checkpoint".into()));
        }
        let seed = args.seed.ok_or_else(|| CliError::Usage("--continue-iters requires --seed".into()))?;
        let parse = |s: &str| s.parse::<StepSchedule>().map_err(CliError::from);
        let steps = (parse(&args.schedule)?, parse(&args.schedule_beta)?);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        net = continue_training_pruned(net, &train, &ckpt.hyperparams, steps, args.continue_iters, &mut rng)?;
    }
    let manifest = net.manifest();
    let weights = net.to_weights()?;
    let mut meta = ckpt.meta.clone();
    meta.extra.insert("pruned-top-words".into(), args.top_words.to_string());
    meta.extra.insert("pruned-resident-docs".into(), args.resident_docs.to_string());
    meta.extra.insert("pruned-fan-in".into(), format!("{:?}", manifest.fan_in));
    meta.extra.insert("pruned-store".into(), store.display().to_string());
    Checkpoint::new(ckpt.encoding, weights, ckpt.hyperparams.clone(), meta).save(&args.out, args.checkpoint_format.into())?;
    println!("{}", serde_json::to_string(&manifest).expect("manifest serializes"));
    Ok(())
}

fn scale_alpha(g: &mut DirectionField<f64>) {
    g.alpha.iter_mut().for_each(|x| *x *= 1.5);
}

fn cmd_verify(args: VerifyArgs) -> Result<()> {
    let mut cfg = VerifyConfig::default();
    if !args.mode.is_empty() {
        cfg.modes = args.mode;
    }
    if !args.check.is_empty() {
        cfg.checks = args.check;
    }
    if let Some(i) = args.integrator {
        cfg.integrator = i;
    }
    if let Some(dt) = args.dt {
        if !(dt > 0.0) {
            return Err(CliError::Usage("--dt must be positive".into()));
        }
        cfg.dt = dt;
    }
    if let Some(seed) = args.seed {
        cfg.instance = InstanceSpec { seed, ..cfg.instance };
    }
    if args.corrupt {
        cfg.hook = Some(scale_alpha);
    }
    let reports = verify::run(&cfg)?;
    for r in &reports {
        println!("{}", serde_json::to_string(r).expect("report serializes"));
    }
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed).map(|r| format!("{}/{}", r.mode, r.check)).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failure(format!("failed checks: {}", failed.join(", "))))
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let base = if args.toy { SynthConfig::toy() } else { SynthConfig::default() };
    let cfg = SynthConfig {
        topics: args.k.unwrap_or(base.topics),
        vocab_size: args.vocab_size.unwrap_or(base.vocab_size),
        docs: args.docs.unwrap_or(base.docs),
        doc_len: args.doc_len.unwrap_or(base.doc_len),
        topic_concentration: args.topic_concentration.unwrap_or(base.topic_concentration),
        doc_concentration: args.doc_concentration.unwrap_or(base.doc_concentration),
        seed: match (args.seed, args.toy) {
            (Some(s), _) => s,
            (None, true) => base.seed,
            (None, false) => return Err(CliError::Usage("missing required option --seed".into())),
        },
    };
    let syn = generate(&cfg)?;
    write_uci_files(&syn.corpus, &args.out, &args.name)?;
    let planted = serde_json::json!({ "config": cfg, "phi": syn.phi, "theta": syn.theta });
    let path = args.out.join(format!("planted.{}.json", args.name));
    std::fs::write(&path, serde_json::to_string(&planted).expect("json")).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let data_dir = cli.data_dir.as_deref();
    match cli.command {
        Command::Train(a) => cmd_train(a, data_dir),
        Command::Eval(a) => cmd_eval(a, data_dir),
        Command::Prune(a) => cmd_prune(a, data_dir),
        Command::Verify(a) => cmd_verify(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
