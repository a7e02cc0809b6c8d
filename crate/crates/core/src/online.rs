//! Online learning rules for the spiking topic network and their mean-limit
//! ODEs.
//!
//! * ed-SpikeLDA / ed-SpikePLSI: one token event per update.
//! * du-SpikeLDA: the mean of event deltas over a minibatch, evaluated at
//!   frozen weights.
//! * semi-SpikeLDA: semi-collapsed Gibbs statistics per document minibatch
//!   drive the `M^α` update.
//!
//! [`expected_update`] evaluates the exact expectation of each stochastic
//! rule on a small corpus, and [`ode_integrate`] follows the resulting flow.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use log::debug;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::gibbs::semi_cgs_minibatch;
use crate::scalar::{log_sum_exp, softmax_in_place, Scalar};
use crate::snn::{constraint_deviation, max_abs, potentials_into, race_sample, Hyperparams, NetworkWeights};

/// Which optimization problem the network solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearningMode {
    /// Maximum likelihood for pLSI; document columns normalize to one.
    Plsi,
    /// MAP for LDA with a Gamma prior on `M^β`; columns normalize to κ.
    Map,
    /// Maximum likelihood of the semi-collapsed model (θ integrated out).
    Semi,
}

impl LearningMode {
    /// Target of `Σ_z exp M^β_zd`, if the mode constrains `M^β`.
    pub fn beta_target<T: Scalar>(self, hp: &Hyperparams<T>) -> Option<T> {
        match self {
            LearningMode::Plsi => Some(T::one()),
            LearningMode::Map => Some(hp.kappa()),
            LearningMode::Semi => None,
        }
    }
}

impl FromStr for LearningMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plsi" | "ml" => Ok(LearningMode::Plsi),
            "map" => Ok(LearningMode::Map),
            "semi" => Ok(LearningMode::Semi),
            _ => Err(Error::Config(format!("unknown mode `{s}` (expected plsi, map or semi)"))),
        }
    }
}

impl fmt::Display for LearningMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearningMode::Plsi => "plsi",
            LearningMode::Map => "map",
            LearningMode::Semi => "semi",
        })
    }
}

/// Statistics returned by one semi-collapsed minibatch pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinibatchStats {
    pub k: usize,
    pub v: usize,
    /// `N̂_zw`, topic-major.
    pub n_zw: Vec<u64>,
    pub n_z: Vec<u64>,
    pub batch_size: usize,
    pub sweeps: usize,
    /// Final topic counts of each document, in batch order.
    pub doc_topic_counts: Vec<Vec<u64>>,
}

impl MinibatchStats {
    pub fn zeros(k: usize, v: usize, batch_size: usize, sweeps: usize) -> Self {
        Self {
            k,
            v,
            n_zw: vec![0; k * v],
            n_z: vec![0; k],
            batch_size,
            sweeps,
            doc_topic_counts: Vec::with_capacity(batch_size),
        }
    }
}

/// Step-size policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum StepSchedule {
    /// `η_t = a (1 + t/b)^(−c)`; `0.5 < c ≤ 1` gives `Σ η = ∞`, `Σ η² < ∞`.
    RobbinsMonro {
        a: f64,
        b: f64,
        c: f64,
    },
    RmsProp {
        eta: f64,
        decay: f64,
        eps: f64,
    },
    /// AdaGrad whose step is multiplied by `amplify` after every pass.
    AdaGrad {
        eta: f64,
        amplify: f64,
        eps: f64,
    },
    /// Per-synapse `η = clip((S − Q²) / (exp(−Q) + 1), eta_min, eta_max)`
    /// where `Q` and `S` track the first two moments of the synapse with its
    /// own step size. `Q` starts at the initial weight and `S − Q²` at
    /// `init_var`.
    VarianceTracking {
        init_var: f64,
        eta_min: f64,
        eta_max: f64,
    },
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::RobbinsMonro { a: 0.1, b: 1000.0, c: 0.7 }
    }
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::RobbinsMonro { a, b, c } => a > 0.0 && b > 0.0 && c > 0.0,
            StepSchedule::RmsProp { eta, decay, eps } => eta > 0.0 && (0.0..1.0).contains(&decay) && eps > 0.0,
            StepSchedule::AdaGrad { eta, amplify, eps } => eta > 0.0 && amplify > 0.0 && eps > 0.0,
            StepSchedule::VarianceTracking { init_var, eta_min, eta_max } => init_var > 0.0 && eta_min > 0.0 && eta_max >= eta_min && eta_max <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid step schedule {self}")))
        }
    }
}

impl fmt::Display for StepSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            StepSchedule::RobbinsMonro { a, b, c } => write!(f, "robbins-monro:{a},{b},{c}"),
            StepSchedule::RmsProp { eta, decay, eps } => write!(f, "rmsprop:{eta},{decay},{eps}"),
            StepSchedule::AdaGrad { eta, amplify, eps } => write!(f, "adagrad:{eta},{amplify},{eps}"),
            StepSchedule::VarianceTracking { init_var, eta_min, eta_max } => {
                write!(f, "variance-tracking:{init_var},{eta_min},{eta_max}")
            }
        }
    }
}

/// Parses `name[:p1,p2,...]`; omitted trailing parameters take defaults.
///
/// ```
/// use spikelda::online::StepSchedule;
/// let s: StepSchedule = "rmsprop:0.5".parse().unwrap();
/// assert_eq!(s, StepSchedule::RmsProp { eta: 0.5, decay: 0.9, eps: 1e-8 });
/// ```
impl FromStr for StepSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let vals = args
            .split(',')
            .filter(|a| !a.trim().is_empty())
            .map(|a| a.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("step schedule `{s}`: {e}")))?;
        let get = |i: usize, default: f64| vals.get(i).copied().unwrap_or(default);
        let (schedule, arity) = match name.trim() {
            "robbins-monro" | "rm" => (
                StepSchedule::RobbinsMonro {
                    a: get(0, 0.1),
                    b: get(1, 1000.0),
                    c: get(2, 0.7),
                },
                3,
            ),
            "rmsprop" | "rmsp" => (
                StepSchedule::RmsProp {
                    eta: get(0, 0.5),
                    decay: get(1, 0.9),
                    eps: get(2, 1e-8),
                },
                3,
            ),
            "adagrad" => (
                StepSchedule::AdaGrad {
                    eta: get(0, 0.5),
                    amplify: get(1, 1.0),
                    eps: get(2, 1e-8),
                },
                3,
            ),
            "variance-tracking" | "vt" => (
                StepSchedule::VarianceTracking {
                    init_var: get(0, 1.0),
                    eta_min: get(1, 1e-6),
                    eta_max: get(2, 0.5),
                },
                3,
            ),
            other => return Err(Error::Config(format!("unknown step schedule `{other}`"))),
        };
        if vals.len() > arity {
            return Err(Error::Config(format!("step schedule `{s}` takes at most {arity} parameters")));
        }
        schedule.validate()?;
        Ok(schedule)
    }
}

/// Running state of a [`StepSchedule`] for one parameter group.
#[derive(Debug, Clone)]
pub struct StepState {
    schedule: StepSchedule,
    t: u64,
    scale: f64,
    acc: Vec<f64>,
    mean: Vec<f64>,
    mean_sq: Vec<f64>,
}

impl StepState {
    pub fn new(schedule: StepSchedule, num_params: usize) -> Self {
        let per_param = |needed: bool| if needed { vec![0.0; num_params] } else { Vec::new() };
        let (acc, moments) = match schedule {
            StepSchedule::RobbinsMonro { .. } => (false, false),
            StepSchedule::RmsProp { .. } | StepSchedule::AdaGrad { .. } => (true, false),
            StepSchedule::VarianceTracking { .. } => (false, true),
        };
        Self {
            schedule,
            t: 0,
            scale: 1.0,
            acc: per_param(acc),
            mean: if moments { vec![f64::NAN; num_params] } else { Vec::new() },
            mean_sq: per_param(moments),
        }
    }

    pub fn schedule(&self) -> StepSchedule {
        self.schedule
    }

    /// Number of completed updates.
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn tick(&mut self) {
        self.t += 1;
    }

    /// Called once per pass over the corpus.
    pub fn end_pass(&mut self) {
        if let StepSchedule::AdaGrad { amplify, .. } = self.schedule {
            self.scale *= amplify;
        }
    }

    /// Global step size for logging (per-parameter policies report their
    /// base rate).
    pub fn current(&self) -> f64 {
        match self.schedule {
            StepSchedule::RobbinsMonro { a, b, c } => a * (1.0 + self.t as f64 / b).powf(-c),
            StepSchedule::RmsProp { eta, .. } => eta,
            StepSchedule::AdaGrad { eta, .. } => eta * self.scale,
            StepSchedule::VarianceTracking { eta_max, .. } => eta_max,
        }
    }

    /// Step size for parameter `i` whose current value is `m` and whose
    /// update direction is `g`. Updates the per-parameter statistics.
    #[inline]
    pub fn eta(&mut self, i: usize, g: f64, m: f64) -> f64 {
        match self.schedule {
            StepSchedule::RobbinsMonro { .. } => self.current(),
            StepSchedule::RmsProp { eta, decay, eps } => {
                let a = &mut self.acc[i];
                *a = decay * *a + (1.0 - decay) * g * g;
                eta / (a.sqrt() + eps)
            }
            StepSchedule::AdaGrad { eta, eps, .. } => {
                let a = &mut self.acc[i];
                *a += g * g;
                eta * self.scale / (a.sqrt() + eps)
            }
            StepSchedule::VarianceTracking { init_var, eta_min, eta_max } => {
                let (q, s) = (&mut self.mean[i], &mut self.mean_sq[i]);
                if q.is_nan() {
                    *q = m;
                    *s = m * m + init_var;
                }
                let eta = ((*s - *q * *q) / ((-*q).exp() + 1.0)).clamp(eta_min, eta_max);
                let next = m + eta * g;
                *q += eta * (next - *q);
                *s += eta * (next * next - *s);
                eta
            }
        }
    }
}

/// Separate step-size state for the `M^α` and `M^β` groups.
#[derive(Debug, Clone)]
pub struct StepSizes {
    pub alpha: StepState,
    pub beta: StepState,
}

impl StepSizes {
    pub fn new<T: Scalar>(alpha: StepSchedule, beta: StepSchedule, weights: &NetworkWeights<T>) -> Self {
        Self {
            alpha: StepState::new(alpha, weights.m_alpha().len()),
            beta: StepState::new(beta, weights.m_beta().len()),
        }
    }

    fn tick(&mut self) {
        self.alpha.tick();
        self.beta.tick();
    }

    fn end_pass(&mut self) {
        self.alpha.end_pass();
        self.beta.end_pass();
    }
}

fn check_beta_rule<T: Scalar>(mode: LearningMode, hp: &Hyperparams<T>) -> Result<()> {
    match mode {
        LearningMode::Map => hp.require_positive_kappa(),
        LearningMode::Plsi => Ok(()),
        LearningMode::Semi => Err(Error::Config("semi mode has no event-driven rule".into())),
    }
}

/// Update direction of one token event: the `M^α` row of the winning topic
/// and the `M^β` column of the token's document. Multiply by `η` to obtain
/// the event-driven delta.
#[derive(Debug, Clone, PartialEq)]
pub struct EventDirection<T> {
    pub z: usize,
    pub d: usize,
    pub alpha_row: Vec<T>,
    pub beta_col: Vec<T>,
}

impl<T: Scalar> EventDirection<T> {
    pub fn new(k: usize, v: usize) -> Self {
        Self {
            z: 0,
            d: 0,
            alpha_row: vec![T::zero(); v],
            beta_col: vec![T::zero(); k],
        }
    }

    /// Fills the direction for token `(w, d)` won by topic `z`.
    ///
    /// `M^α_zw' : h_z (x_w' exp(−M^α_zw') − 1)` for the winning row.
    /// `M^β_z'd`: MAP `(h_z' + (λ_z' − 1)/N_d) exp(−M) − 1/κ − 1/N_d`,
    /// pLSI `h_z' exp(−M) − 1`.
    pub fn fill(&mut self, weights: &NetworkWeights<T>, w: usize, d: usize, z: usize, hp: &Hyperparams<T>, n_d: u64, mode: LearningMode) {
        self.z = z;
        self.d = d;
        for (wp, (g, &m)) in self.alpha_row.iter_mut().zip(weights.alpha_row(z)).enumerate() {
            *g = if wp == w { (-m).exp() - T::one() } else { -T::one() };
        }
        let col = weights.beta_col(d);
        match mode {
            LearningMode::Map => {
                let inv_nd = T::one() / T::of_count(n_d);
                let c = T::one() / hp.kappa() + inv_nd;
                for (zp, (g, &m)) in self.beta_col.iter_mut().zip(col).enumerate() {
                    let h = if zp == z { T::one() } else { T::zero() };
                    *g = (h + (hp.lambda()[zp] - T::one()) * inv_nd) * (-m).exp() - c;
                }
            }
            LearningMode::Plsi | LearningMode::Semi => {
                for (zp, (g, &m)) in self.beta_col.iter_mut().zip(col).enumerate() {
                    *g = if zp == z { (-m).exp() - T::one() } else { -T::one() };
                }
            }
        }
    }

    fn apply_scaled(&self, weights: &mut NetworkWeights<T>, eta: T) {
        weights.alpha_row_mut(self.z).iter_mut().zip(&self.alpha_row).for_each(|(m, &g)| *m += eta * g);
        weights.beta_col_mut(self.d).iter_mut().zip(&self.beta_col).for_each(|(m, &g)| *m += eta * g);
    }

    fn apply_adaptive(&self, weights: &mut NetworkWeights<T>, steps: &mut StepSizes) {
        let (v, k) = (weights.vocab_size(), weights.num_topics());
        let (z, d) = (self.z, self.d);
        for (w, (m, &g)) in weights.alpha_row_mut(z).iter_mut().zip(&self.alpha_row).enumerate() {
            let eta = steps.alpha.eta(z * v + w, g.f64(), m.f64());
            *m += T::of(eta) * g;
        }
        for (zz, (m, &g)) in weights.beta_col_mut(d).iter_mut().zip(&self.beta_col).enumerate() {
            let eta = steps.beta.eta(d * k + zz, g.f64(), m.f64());
            *m += T::of(eta) * g;
        }
    }
}

/// Event-driven SpikeLDA learning step for token `(w, d)` won by topic `z`.
pub fn spikelda_update<T: Scalar>(weights: &mut NetworkWeights<T>, w: usize, d: usize, z: usize, hp: &Hyperparams<T>, eta: T, n_d: u64) {
    let mut dir = EventDirection::new(weights.num_topics(), weights.vocab_size());
    dir.fill(weights, w, d, z, hp, n_d, LearningMode::Map);
    dir.apply_scaled(weights, eta);
}

/// Event-driven SpikePLSI learning step; the `M^α` rule is shared with
/// [`spikelda_update`].
pub fn spikeplsi_update<T: Scalar>(weights: &mut NetworkWeights<T>, w: usize, d: usize, z: usize, eta: T) {
    let (k, v) = (weights.num_topics(), weights.vocab_size());
    let hp = Hyperparams::symmetric(k, v, T::one(), T::one()).expect("unit priors");
    let mut dir = EventDirection::new(k, v);
    dir.fill(weights, w, d, z, &hp, 1, LearningMode::Plsi);
    dir.apply_scaled(weights, eta);
}

/// One sampled token together with the topic that won its race.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenEvent {
    pub w: u32,
    pub d: u32,
    pub z: u32,
    pub n_d: u64,
}

/// Mean event direction over a minibatch, all terms evaluated at the same
/// weights. `alpha` is dense (K x V); `beta` holds the touched columns.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchDirection<T> {
    pub alpha: Vec<T>,
    pub beta: BTreeMap<u32, Vec<T>>,
}

pub fn du_direction<T: Scalar>(weights: &NetworkWeights<T>, batch: &[TokenEvent], hp: &Hyperparams<T>, mode: LearningMode) -> Result<BatchDirection<T>> {
    if batch.is_empty() {
        return Err(Error::Config("delayed update needs a non-empty minibatch".into()));
    }
    let (k, v) = (weights.num_topics(), weights.vocab_size());
    let mut alpha = vec![T::zero(); k * v];
    let mut beta: BTreeMap<u32, Vec<T>> = BTreeMap::new();
    let mut dir = EventDirection::new(k, v);
    for e in batch {
        dir.fill(weights, e.w as usize, e.d as usize, e.z as usize, hp, e.n_d, mode);
        alpha[e.z as usize * v..(e.z as usize + 1) * v]
            .iter_mut()
            .zip(&dir.alpha_row)
            .for_each(|(a, &g)| *a += g);
        let col = beta.entry(e.d).or_insert_with(|| vec![T::zero(); k]);
        col.iter_mut().zip(&dir.beta_col).for_each(|(a, &g)| *a += g);
    }
    let n = T::of(batch.len() as f64);
    alpha.iter_mut().for_each(|a| *a /= n);
    beta.values_mut().flatten().for_each(|a| *a /= n);
    Ok(BatchDirection { alpha, beta })
}

/// Delayed update: adds `η` times the mean of the frozen-weight event
/// deltas of the batch.
pub fn du_update<T: Scalar>(weights: &mut NetworkWeights<T>, batch: &[TokenEvent], hp: &Hyperparams<T>, eta: T, mode: LearningMode) -> Result<()> {
    check_beta_rule(mode, hp)?;
    let dir = du_direction(weights, batch, hp, mode)?;
    weights.m_alpha_mut().iter_mut().zip(&dir.alpha).for_each(|(m, &g)| *m += eta * g);
    for (d, col) in &dir.beta {
        weights.beta_col_mut(*d as usize).iter_mut().zip(col).for_each(|(m, &g)| *m += eta * g);
    }
    Ok(())
}

fn apply_batch_adaptive<T: Scalar>(weights: &mut NetworkWeights<T>, dir: &BatchDirection<T>, steps: &mut StepSizes) {
    let k = weights.num_topics();
    for (i, (m, &g)) in weights.m_alpha_mut().iter_mut().zip(&dir.alpha).enumerate() {
        if g != T::zero() {
            let eta = steps.alpha.eta(i, g.f64(), m.f64());
            *m += T::of(eta) * g;
        }
    }
    for (d, col) in &dir.beta {
        let d = *d as usize;
        for (z, (m, &g)) in weights.beta_col_mut(d).iter_mut().zip(col).enumerate() {
            let eta = steps.beta.eta(d * k + z, g.f64(), m.f64());
            *m += T::of(eta) * g;
        }
    }
}

/// Direction of the semi-SpikeLDA update,
/// `(N̂_zw exp(−M^α_zw) − N̂_z) / (|D̂| T)`, topic-major.
pub fn semi_direction<T: Scalar>(m_alpha: &[T], stats: &MinibatchStats) -> Vec<T> {
    let scale = T::one() / T::of((stats.batch_size * stats.sweeps) as f64);
    let v = stats.v;
    m_alpha
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let z = i / v;
            (T::of_count(stats.n_zw[i]) * (-m).exp() - T::of_count(stats.n_z[z])) * scale
        })
        .collect()
}

pub fn semi_update<T: Scalar>(weights: &mut NetworkWeights<T>, stats: &MinibatchStats, eta: T) {
    let dir = semi_direction(weights.m_alpha(), stats);
    weights.m_alpha_mut().iter_mut().zip(dir).for_each(|(m, g)| *m += eta * g);
}

/// Initial weights: every synapse from `Normal(1, 1)`, except pLSI's
/// `M^β = log(1/K)`.
pub fn init_weights<T: Scalar, R: Rng + ?Sized>(k: usize, v: usize, d: usize, mode: LearningMode, rng: &mut R) -> NetworkWeights<T> {
    let mut w = NetworkWeights::random_normal(k, v, d, 1.0, 1.0, rng);
    if mode == LearningMode::Plsi {
        let x = T::of(-(k as f64).ln());
        w.m_beta_mut().iter_mut().for_each(|m| *m = x);
    }
    w
}

/// One line of a training trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    /// Updates applied (token events, minibatches or sweeps, per algorithm).
    pub iteration: u64,
    pub tokens: u64,
    pub passes: f64,
    pub eta: f64,
    pub max_zeta_alpha: f64,
    pub max_zeta_beta: Option<f64>,
    pub objective: Option<f64>,
    pub wall_clock_s: f64,
}

pub const TRAJECTORY_CSV_HEADER: &str = "iteration,tokens,passes,eta,max_zeta_alpha,max_zeta_beta,objective,wall_clock_s";

impl TrajectoryRecord {
    pub fn csv_row(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.iteration,
            self.tokens,
            self.passes,
            self.eta,
            self.max_zeta_alpha,
            opt(self.max_zeta_beta),
            opt(self.objective),
            self.wall_clock_s
        )
    }
}

pub fn write_trajectory_csv<W: Write>(records: &[TrajectoryRecord], mut out: W) -> Result<()> {
    writeln!(out, "{TRAJECTORY_CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

pub fn write_trajectory_jsonl<W: Write>(records: &[TrajectoryRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        writeln!(out)?;
    }
    Ok(())
}

/// Reporting options shared by the training loops.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainOptions {
    /// Record every this many updates; 0 records only the final state.
    pub report_every: u64,
    /// Evaluate the exact objective at every record (small corpora only).
    pub objective: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutput<T> {
    pub weights: NetworkWeights<T>,
    pub trajectory: Vec<TrajectoryRecord>,
}

struct Recorder<'a> {
    start: Instant,
    opts: TrainOptions,
    corpus: &'a Corpus,
    records: Vec<TrajectoryRecord>,
}

impl<'a> Recorder<'a> {
    fn new(corpus: &'a Corpus, opts: TrainOptions) -> Self {
        Self {
            start: Instant::now(),
            opts,
            corpus,
            records: Vec::new(),
        }
    }

    fn due(&self, iteration: u64, last: bool) -> bool {
        last || (self.opts.report_every > 0 && iteration.is_multiple_of(self.opts.report_every))
    }

    fn record<T: Scalar>(&mut self, weights: &NetworkWeights<T>, hp: &Hyperparams<T>, mode: LearningMode, iteration: u64, tokens: u64, eta: f64) -> Result<()> {
        if !weights.is_finite() {
            return Err(Error::NonFinite {
                what: "network weights",
                iteration,
            });
        }
        let target = mode.beta_target(hp).unwrap_or(T::one());
        let (za, zb) = constraint_deviation(weights, target);
        let objective = if self.opts.objective {
            Some(objective(weights, self.corpus, hp, mode)?)
        } else {
            None
        };
        let rec = TrajectoryRecord {
            iteration,
            tokens,
            passes: tokens as f64 / self.corpus.total_tokens().max(1) as f64,
            eta,
            max_zeta_alpha: max_abs(&za).f64(),
            max_zeta_beta: mode.beta_target(hp).map(|_| max_abs(&zb).f64()),
            objective,
            wall_clock_s: self.start.elapsed().as_secs_f64(),
        };
        debug!("{}", rec.csv_row());
        self.records.push(rec);
        Ok(())
    }
}

fn require_nonempty(corpus: &Corpus) -> Result<()> {
    if corpus.total_tokens() == 0 {
        return Err(Error::EmptyCorpus);
    }
    if (0..corpus.num_docs()).any(|d| corpus.doc_len(d) == 0) {
        return Err(Error::Config("training corpus contains empty documents; drop them first".into()));
    }
    Ok(())
}

fn check_finite_event<T: Scalar>(weights: &NetworkWeights<T>, z: usize, d: usize, iteration: u64) -> Result<()> {
    let ok = weights.alpha_row(z).iter().chain(weights.beta_col(d)).all(|x| x.is_finite());
    if ok {
        Ok(())
    } else {
        Err(Error::NonFinite {
            what: "network weights",
            iteration,
        })
    }
}

/// Event-driven training (ed-SpikeLDA in MAP mode, ed-SpikePLSI in pLSI
/// mode): sample a token, run the Poisson race, apply the learning rule.
/// `iterations` counts token events.
pub fn ed_train<T: Scalar, R: Rng + ?Sized>(
    corpus: &Corpus,
    hp: &Hyperparams<T>,
    mode: LearningMode,
    steps: (StepSchedule, StepSchedule),
    iterations: u64,
    opts: TrainOptions,
    rng: &mut R,
) -> Result<TrainOutput<T>> {
    require_nonempty(corpus)?;
    check_beta_rule(mode, hp)?;
    let (k, v, d) = (hp.num_topics(), corpus.vocab_size(), corpus.num_docs());
    let weights = init_weights(k, v, d, mode, rng);
    ed_continue(weights, corpus, hp, mode, steps, iterations, opts, rng)
}

/// Continues event-driven training from the given weights.
#[allow(clippy::too_many_arguments)]
pub fn ed_continue<T: Scalar, R: Rng + ?Sized>(
    mut weights: NetworkWeights<T>,
    corpus: &Corpus,
    hp: &Hyperparams<T>,
    mode: LearningMode,
    steps: (StepSchedule, StepSchedule),
    iterations: u64,
    opts: TrainOptions,
    rng: &mut R,
) -> Result<TrainOutput<T>> {
    require_nonempty(corpus)?;
    check_beta_rule(mode, hp)?;
    let (k, v) = (weights.num_topics(), weights.vocab_size());
    let n = corpus.total_tokens();
    let mut steps = StepSizes::new(steps.0, steps.1, &weights);
    let mut rec = Recorder::new(corpus, opts);
    let mut dir = EventDirection::new(k, v);
    let mut u = vec![T::zero(); k];
    if opts.report_every > 0 {
        rec.record(&weights, hp, mode, 0, 0, steps.alpha.current())?;
    }
    for it in 1..=iterations {
        let (w, d) = corpus.sample_token(rng)?;
        let (w, d) = (w as usize, d as usize);
        potentials_into(&weights, w, d, false, &mut u);
        let z = race_sample(&u, rng);
        dir.fill(&weights, w, d, z, hp, corpus.doc_len(d), mode);
        let eta = steps.alpha.current();
        dir.apply_adaptive(&mut weights, &mut steps);
        steps.tick();
        if it % n == 0 {
            steps.end_pass();
        }
        check_finite_event(&weights, z, d, it)?;
        if rec.due(it, it == iterations) {
            rec.record(&weights, hp, mode, it, it, eta)?;
        }
    }
    if iterations == 0 && opts.report_every == 0 {
        rec.record(&weights, hp, mode, 0, 0, steps.alpha.current())?;
    }
    Ok(TrainOutput {
        weights,
        trajectory: rec.records,
    })
}

/// Samples `batch_size` tokens and their race winners at the current
/// (frozen) weights.
pub fn sample_batch<T: Scalar, R: Rng + ?Sized>(weights: &NetworkWeights<T>, corpus: &Corpus, batch_size: usize, rng: &mut R) -> Result<Vec<TokenEvent>> {
    let mut u = vec![T::zero(); weights.num_topics()];
    (0..batch_size)
        .map(|_| {
            let (w, d) = corpus.sample_token(rng)?;
            potentials_into(weights, w as usize, d as usize, false, &mut u);
            let z = race_sample(&u, rng) as u32;
            Ok(TokenEvent {
                w,
                d,
                z,
                n_d: corpus.doc_len(d as usize),
            })
        })
        .collect()
}

/// Delayed-update training. `iterations` counts minibatches.
#[allow(clippy::too_many_arguments)]
pub fn du_train<T: Scalar, R: Rng + ?Sized>(
    corpus: &Corpus,
    hp: &Hyperparams<T>,
    mode: LearningMode,
    steps: (StepSchedule, StepSchedule),
    iterations: u64,
    batch_size: usize,
    opts: TrainOptions,
    rng: &mut R,
) -> Result<TrainOutput<T>> {
    require_nonempty(corpus)?;
    check_beta_rule(mode, hp)?;
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let (k, v, d) = (hp.num_topics(), corpus.vocab_size(), corpus.num_docs());
    let mut weights = init_weights(k, v, d, mode, rng);
    let n = corpus.total_tokens();
    let mut steps = StepSizes::new(steps.0, steps.1, &weights);
    let mut rec = Recorder::new(corpus, opts);
    if opts.report_every > 0 || iterations == 0 {
        rec.record(&weights, hp, mode, 0, 0, steps.alpha.current())?;
    }
    let mut tokens = 0u64;
    for it in 1..=iterations {
        let batch = sample_batch(&weights, corpus, batch_size, rng)?;
        let dir = du_direction(&weights, &batch, hp, mode)?;
        let eta = steps.alpha.current();
        apply_batch_adaptive(&mut weights, &dir, &mut steps);
        steps.tick();
        let before = tokens / n;
        tokens += batch_size as u64;
        for _ in before..tokens / n {
            steps.end_pass();
        }
        if !weights.is_finite() {
            return Err(Error::NonFinite {
                what: "network weights",
                iteration: it,
            });
        }
        if rec.due(it, it == iterations) {
            rec.record(&weights, hp, mode, it, tokens, eta)?;
        }
    }
    Ok(TrainOutput {
        weights,
        trajectory: rec.records,
    })
}

/// semi-SpikeLDA outer loop. `iterations` counts document minibatches.
///
/// `M^β` columns of visited documents hold `log(C_zd + λ_z)` from their most
/// recent visit; they are not trained.
#[allow(clippy::too_many_arguments)]
pub fn semi_train<T: Scalar, R: Rng + ?Sized>(
    corpus: &Corpus,
    hp: &Hyperparams<T>,
    step: StepSchedule,
    iterations: u64,
    batch_size: usize,
    sweeps: usize,
    opts: TrainOptions,
    rng: &mut R,
) -> Result<TrainOutput<T>> {
    require_nonempty(corpus)?;
    if batch_size == 0 || sweeps == 0 {
        return Err(Error::Config("semi-SpikeLDA needs batch size >= 1 and T >= 1".into()));
    }
    let (k, v, d) = (hp.num_topics(), corpus.vocab_size(), corpus.num_docs());
    let mut weights = init_weights(k, v, d, LearningMode::Semi, rng);
    for dd in 0..d {
        for (m, &l) in weights.beta_col_mut(dd).iter_mut().zip(hp.lambda()) {
            *m = l.ln();
        }
    }
    let mut state = StepState::new(step, weights.m_alpha().len());
    let mut rec = Recorder::new(corpus, opts);
    let mode = LearningMode::Semi;
    if opts.report_every > 0 || iterations == 0 {
        rec.record(&weights, hp, mode, 0, 0, state.current())?;
    }
    let n = corpus.total_tokens();
    let mut tokens = 0u64;
    for it in 1..=iterations {
        let docs: Vec<u32> = if batch_size >= d {
            (0..d as u32).collect()
        } else {
            sample_indices(rng, d, batch_size).into_iter().map(|i| i as u32).collect()
        };
        let stats = semi_cgs_minibatch(&weights, corpus, &docs, hp, sweeps, rng)?;
        let dir = semi_direction(weights.m_alpha(), &stats);
        let eta = state.current();
        for (i, (m, g)) in weights.m_alpha_mut().iter_mut().zip(dir).enumerate() {
            let e = state.eta(i, g.f64(), m.f64());
            *m += T::of(e) * g;
        }
        state.tick();
        for (&dd, counts) in docs.iter().zip(&stats.doc_topic_counts) {
            for ((m, &c), &l) in weights.beta_col_mut(dd as usize).iter_mut().zip(counts).zip(hp.lambda()) {
                *m = (T::of_count(c) + l).ln();
            }
        }
        let before = tokens / n;
        tokens += docs.iter().map(|&dd| corpus.doc_len(dd as usize)).sum::<u64>();
        for _ in before..tokens / n {
            state.end_pass();
        }
        if !weights.m_alpha().iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { what: "M^α", iteration: it });
        }
        if rec.due(it, it == iterations) {
            rec.record(&weights, hp, mode, it, tokens, eta)?;
        }
    }
    Ok(TrainOutput {
        weights,
        trajectory: rec.records,
    })
}

/// Exact posterior expectations under the empirical token distribution.
///
/// For pLSI and MAP, `q(z | w, d) = softmax_z(M^α_zw + M^β_zd)` and
/// `e_wz = Σ_d π(w,d) q`, `e_z = Σ_wd π(w,d) q`, `e_dz = Σ_w π(w,d) q`.
/// For the semi-collapsed model, `e_wz = (1/D) Σ_d E[C_dzw]` under
/// `p(z_d | w_d; exp M^α, λ)` and `e_z` its row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub k: usize,
    pub v: usize,
    pub d: usize,
    /// Topic-major.
    pub e_wz: Vec<f64>,
    pub e_z: Vec<f64>,
    /// Document-major.
    pub e_dz: Vec<f64>,
    pub pi_d: Vec<f64>,
    pub n_d: Vec<f64>,
}

pub fn posterior<T: Scalar>(weights: &NetworkWeights<T>, corpus: &Corpus, hp: &Hyperparams<T>, mode: LearningMode) -> Result<Posterior> {
    check_shapes(weights, corpus, hp)?;
    let (k, v, d) = (weights.num_topics(), weights.vocab_size(), weights.num_docs());
    let mut p = Posterior {
        k,
        v,
        d,
        e_wz: vec![0.0; k * v],
        e_z: vec![0.0; k],
        e_dz: vec![0.0; d * k],
        pi_d: (0..d).map(|dd| corpus.pi_d(dd)).collect(),
        n_d: (0..d).map(|dd| corpus.doc_len(dd) as f64).collect(),
    };
    match mode {
        LearningMode::Plsi | LearningMode::Map => {
            let mut q = vec![0.0f64; k];
            for (w, dd, pi) in corpus.pi_wd() {
                let (w, dd) = (w as usize, dd as usize);
                for (z, qz) in q.iter_mut().enumerate() {
                    *qz = (weights.alpha(z, w) + weights.beta(z, dd)).f64();
                }
                softmax_in_place(&mut q);
                for z in 0..k {
                    p.e_wz[z * v + w] += pi * q[z];
                    p.e_z[z] += pi * q[z];
                    p.e_dz[dd * k + z] += pi * q[z];
                }
            }
        }
        LearningMode::Semi => {
            let rates: Vec<f64> = weights.m_alpha().iter().map(|m| m.f64().exp()).collect();
            let lambda: Vec<f64> = hp.lambda().iter().map(|x| x.f64()).collect();
            for dd in 0..d {
                let tokens = corpus.doc_tokens(dd);
                let (_, marg) = semi_doc_posterior(&rates, v, &tokens, &lambda);
                for (i, &w) in tokens.iter().enumerate() {
                    for z in 0..k {
                        let m = marg[i * k + z] / d as f64;
                        p.e_wz[z * v + w as usize] += m;
                        p.e_z[z] += m;
                        p.e_dz[dd * k + z] += marg[i * k + z];
                    }
                }
            }
        }
    }
    Ok(p)
}

fn check_shapes<T: Scalar>(weights: &NetworkWeights<T>, corpus: &Corpus, hp: &Hyperparams<T>) -> Result<()> {
    if weights.vocab_size() != corpus.vocab_size()
        || weights.num_docs() != corpus.num_docs()
        || hp.num_topics() != weights.num_topics()
        || hp.vocab_size() != weights.vocab_size()
    {
        return Err(Error::Consistency(format!(
            "weights K={} V={} D={} do not match corpus V={} D={} / hyperparameters K={} V={}",
            weights.num_topics(),
            weights.vocab_size(),
            weights.num_docs(),
            corpus.vocab_size(),
            corpus.num_docs(),
            hp.num_topics(),
            hp.vocab_size()
        )));
    }
    Ok(())
}

/// Exact document posterior of the semi-collapsed model.
///
/// `rates` is K x V (topic-major) and plays the role of `φ_zw`; it need not
/// be normalized. The sequence weight is
/// `Π_i rates[z_i, w_i] (C^{<i}_{z_i} + λ_{z_i})`, which depends on the
/// assignment only through the running topic counts, so a forward-backward
/// pass over the lattice of count vectors is exact. Returns
/// `log Σ_z Π_i ...` and per-token marginals (N_d x K).
pub fn semi_doc_posterior(rates: &[f64], v: usize, tokens: &[u32], lambda: &[f64]) -> (f64, Vec<f64>) {
    let k = lambda.len();
    let n = tokens.len();
    // levels[i]: count vectors summing to i; next[i][s * k + z]: index of s + e_z.
    let mut levels: Vec<Vec<Vec<u16>>> = vec![vec![vec![0; k]]];
    let mut next: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut index: HashMap<Vec<u16>, usize> = HashMap::new();
        let mut upper = Vec::new();
        let mut links = Vec::with_capacity(levels[i].len() * k);
        for s in &levels[i] {
            for z in 0..k {
                let mut c = s.clone();
                c[z] += 1;
                let id = *index.entry(c.clone()).or_insert_with(|| {
                    upper.push(c);
                    upper.len() - 1
                });
                links.push(id);
            }
        }
        levels.push(upper);
        next.push(links);
    }
    let step = |i: usize, s: &[u16], z: usize| rates[z * v + tokens[i] as usize] * (s[z] as f64 + lambda[z]);
    let mut fwd: Vec<Vec<f64>> = vec![vec![1.0]];
    let mut log_z = 0.0;
    for i in 0..n {
        let mut f = vec![0.0; levels[i + 1].len()];
        for (si, s) in levels[i].iter().enumerate() {
            for z in 0..k {
                f[next[i][si * k + z]] += fwd[i][si] * step(i, s, z);
            }
        }
        let total: f64 = f.iter().sum();
        f.iter_mut().for_each(|x| *x /= total);
        log_z += total.ln();
        fwd.push(f);
    }
    let mut bwd: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    bwd[n] = vec![1.0; levels[n].len()];
    for i in (0..n).rev() {
        let mut b = vec![0.0; levels[i].len()];
        for (si, s) in levels[i].iter().enumerate() {
            for z in 0..k {
                b[si] += step(i, s, z) * bwd[i + 1][next[i][si * k + z]];
            }
        }
        let max = b.iter().copied().fold(0.0, f64::max);
        b.iter_mut().for_each(|x| *x /= max);
        bwd[i] = b;
    }
    let mut marg = vec![0.0; n * k];
    for i in 0..n {
        let row = &mut marg[i * k..(i + 1) * k];
        for (si, s) in levels[i].iter().enumerate() {
            for (z, r) in row.iter_mut().enumerate() {
                *r += fwd[i][si] * step(i, s, z) * bwd[i + 1][next[i][si * k + z]];
            }
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= total);
    }
    (log_z, marg)
}

/// Mean-limit direction field. `alpha` is topic-major K x V; `beta` is
/// document-major and all zeros in semi mode.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionField<T> {
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
}

/// Direction field from given posterior expectations (held fixed).
///
/// `g^α_zw = e_wz exp(−M) − e_z`;
/// pLSI `g^β_zd = e_dz exp(−M) − π(d)`;
/// MAP `g^β_zd = (e_dz + π(d)(λ_z − 1)/N_d) exp(−M) − π(d)(1/κ + 1/N_d)`.
pub fn direction_from_posterior<T: Scalar>(weights: &NetworkWeights<T>, post: &Posterior, hp: &Hyperparams<T>, mode: LearningMode) -> DirectionField<T> {
    let (k, v) = (post.k, post.v);
    let alpha = weights
        .m_alpha()
        .iter()
        .enumerate()
        .map(|(i, &m)| T::of(post.e_wz[i] * (-m.f64()).exp() - post.e_z[i / v]))
        .collect();
    let kappa = hp.kappa().f64();
    let beta = weights
        .m_beta()
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let (d, z) = (i / k, i % k);
            let (pi, nd, e) = (post.pi_d[d], post.n_d[d], post.e_dz[i]);
            let em = (-m.f64()).exp();
            T::of(match mode {
                LearningMode::Plsi => e * em - pi,
                LearningMode::Map if nd > 0.0 => (e + pi * (hp.lambda()[z].f64() - 1.0) / nd) * em - pi * (1.0 / kappa + 1.0 / nd),
                LearningMode::Map | LearningMode::Semi => 0.0,
            })
        })
        .collect();
    DirectionField { alpha, beta }
}

/// Exact expectation of the stochastic update rule at `weights`.
pub fn expected_update<T: Scalar>(weights: &NetworkWeights<T>, corpus: &Corpus, hp: &Hyperparams<T>, mode: LearningMode) -> Result<DirectionField<T>> {
    if mode == LearningMode::Map {
        hp.require_positive_kappa()?;
    }
    let post = posterior(weights, corpus, hp, mode)?;
    Ok(direction_from_posterior(weights, &post, hp, mode))
}

/// Closed-form zero of the direction field with the posterior held fixed:
/// `M^α = log(e_wz / e_z)`; pLSI `M^β = log(e_dz / π(d))`;
/// MAP `M^β = log((e_dz + π(d)(λ_z − 1)/N_d) / (π(d)(1/κ + 1/N_d)))`.
/// Semi mode keeps `template`'s `M^β`.
pub fn stationary_point<T: Scalar>(template: &NetworkWeights<T>, post: &Posterior, hp: &Hyperparams<T>, mode: LearningMode) -> NetworkWeights<T> {
    let mut out = template.clone();
    let v = post.v;
    for (i, m) in out.m_alpha_mut().iter_mut().enumerate() {
        *m = T::of((post.e_wz[i] / post.e_z[i / v]).ln());
    }
    let k = post.k;
    let kappa = hp.kappa().f64();
    if mode != LearningMode::Semi {
        for (i, m) in out.m_beta_mut().iter_mut().enumerate() {
            let (d, z) = (i / k, i % k);
            let (pi, nd, e) = (post.pi_d[d], post.n_d[d], post.e_dz[i]);
            *m = T::of(match mode {
                LearningMode::Plsi => (e / pi).ln(),
                _ => ((e + pi * (hp.lambda()[z].f64() - 1.0) / nd) / (pi * (1.0 / kappa + 1.0 / nd))).ln(),
            });
        }
    }
    out
}

/// Unnormalized Gamma log-prior of one `M^β` column,
/// `Σ_z (λ_z − 1) M_z − exp(M_z)`.
pub fn gamma_prior_logdensity<T: Scalar>(m_beta_col: &[T], lambda: &[T]) -> T {
    m_beta_col.iter().zip(lambda).map(|(&m, &l)| (l - T::one()) * m - m.exp()).sum()
}

pub fn gamma_prior_gradient<T: Scalar>(m_beta_col: &[T], lambda: &[T]) -> Vec<T> {
    m_beta_col.iter().zip(lambda).map(|(&m, &l)| l - T::one() - m.exp()).collect()
}

/// Objective maximized by each mode.
///
/// pLSI: `Σ_wd π(w,d) log Σ_z φ_zw θ_dz` with `φ`, `θ` the row and column
/// normalizations of `exp M^α`, `exp M^β`.
/// MAP: the pLSI term plus `Σ_d π(d)/N_d · Σ_z [(λ_z − 1) M^β_zd − exp M^β_zd]`.
/// Semi: `(1/D) Σ_d log p(w_d | φ, λ)` with `θ_d` integrated out.
pub fn objective<T: Scalar>(weights: &NetworkWeights<T>, corpus: &Corpus, hp: &Hyperparams<T>, mode: LearningMode) -> Result<f64> {
    check_shapes(weights, corpus, hp)?;
    let (k, v, d) = (weights.num_topics(), weights.vocab_size(), weights.num_docs());
    let row_lse: Vec<f64> = (0..k).map(|z| log_sum_exp(weights.alpha_row(z)).f64()).collect();
    match mode {
        LearningMode::Plsi | LearningMode::Map => {
            let col_lse: Vec<f64> = (0..d).map(|dd| log_sum_exp(weights.beta_col(dd)).f64()).collect();
            let mut terms = vec![0.0f64; k];
            let mut total = 0.0;
            for (w, dd, pi) in corpus.pi_wd() {
                let (w, dd) = (w as usize, dd as usize);
                for (z, t) in terms.iter_mut().enumerate() {
                    *t = weights.alpha(z, w).f64() - row_lse[z] + weights.beta(z, dd).f64() - col_lse[dd];
                }
                total += pi * log_sum_exp(&terms);
            }
            if mode == LearningMode::Map {
                for dd in 0..d {
                    let nd = corpus.doc_len(dd) as f64;
                    if nd > 0.0 {
                        total += corpus.pi_d(dd) / nd * gamma_prior_logdensity(weights.beta_col(dd), hp.lambda()).f64();
                    }
                }
            }
            Ok(total)
        }
        LearningMode::Semi => {
            let phi: Vec<f64> = weights.m_alpha().iter().enumerate().map(|(i, m)| (m.f64() - row_lse[i / v]).exp()).collect();
            let lambda: Vec<f64> = hp.lambda().iter().map(|x| x.f64()).collect();
            let lambda_bar: f64 = lambda.iter().sum();
            let mut total = 0.0;
            for dd in 0..d {
                let tokens = corpus.doc_tokens(dd);
                let (log_z, _) = semi_doc_posterior(&phi, v, &tokens, &lambda);
                let norm: f64 = (0..tokens.len()).map(|i| (i as f64 + lambda_bar).ln()).sum();
                total += log_z - norm;
            }
            Ok(total / d as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    /// Forward Euler.
    #[default]
    Euler,
    /// Classical fourth-order Runge-Kutta.
    Rk4,
}

impl FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Integrator::Euler),
            "rk4" => Ok(Integrator::Rk4),
            _ => Err(Error::Config(format!("unknown integrator `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeConfig {
    pub dt: f64,
    pub steps: usize,
    pub integrator: Integrator,
    pub objective: bool,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            steps: 1000,
            integrator: Integrator::Euler,
            objective: true,
        }
    }
}

/// State of the flow after each step (index 0 is the start).
#[derive(Debug, Clone, PartialEq)]
pub struct OdeRecord {
    pub step: usize,
    /// `|ζ^α_z|` per topic.
    pub zeta_alpha: Vec<f64>,
    /// `|ζ^β_d|` per document; empty in semi mode.
    pub zeta_beta: Vec<f64>,
    pub objective: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct OdeTrajectory<T> {
    pub weights: NetworkWeights<T>,
    pub records: Vec<OdeRecord>,
}

/// Integrates `dM/dt = g(M)` for the mode's exact direction field.
pub fn ode_integrate<T: Scalar>(
    weights0: &NetworkWeights<T>,
    corpus: &Corpus,
    hp: &Hyperparams<T>,
    mode: LearningMode,
    cfg: OdeConfig,
) -> Result<OdeTrajectory<T>> {
    ode_integrate_with(weights0, corpus, hp, mode, cfg, |w| expected_update(w, corpus, hp, mode))
}

/// [`ode_integrate`] with a caller-supplied direction field.
pub fn ode_integrate_with<T: Scalar, F>(
    weights0: &NetworkWeights<T>,
    corpus: &Corpus,
    hp: &Hyperparams<T>,
    mode: LearningMode,
    cfg: OdeConfig,
    field: F,
) -> Result<OdeTrajectory<T>>
where
    F: Fn(&NetworkWeights<T>) -> Result<DirectionField<T>>,
{
    let record = |w: &NetworkWeights<T>, step: usize| -> Result<OdeRecord> {
        let target = mode.beta_target(hp);
        let (za, zb) = constraint_deviation(w, target.unwrap_or(T::one()));
        Ok(OdeRecord {
            step,
            zeta_alpha: za.iter().map(|x| x.f64().abs()).collect(),
            zeta_beta: if target.is_some() {
                zb.iter().map(|x| x.f64().abs()).collect()
            } else {
                Vec::new()
            },
            objective: if cfg.objective { Some(objective(w, corpus, hp, mode)?) } else { None },
        })
    };
    let dt = T::of(cfg.dt);
    let axpy = |base: &NetworkWeights<T>, g: &DirectionField<T>, h: T| {
        let mut out = base.clone();
        out.m_alpha_mut().iter_mut().zip(&g.alpha).for_each(|(m, &x)| *m += h * x);
        out.m_beta_mut().iter_mut().zip(&g.beta).for_each(|(m, &x)| *m += h * x);
        out
    };
    let mut w = weights0.clone();
    let mut records = vec![record(&w, 0)?];
    for step in 1..=cfg.steps {
        w = match cfg.integrator {
            Integrator::Euler => axpy(&w, &field(&w)?, dt),
            Integrator::Rk4 => {
                let half = dt / T::of(2.0);
                let k1 = field(&w)?;
                let k2 = field(&axpy(&w, &k1, half))?;
                let k3 = field(&axpy(&w, &k2, half))?;
                let k4 = field(&axpy(&w, &k3, dt))?;
                let sixth = dt / T::of(6.0);
                let mut out = w.clone();
                let combine = |m: &mut T, a: T, b: T, c: T, d: T| *m += sixth * (a + T::of(2.0) * (b + c) + d);
                for (i, m) in out.m_alpha_mut().iter_mut().enumerate() {
                    combine(m, k1.alpha[i], k2.alpha[i], k3.alpha[i], k4.alpha[i]);
                }
                for (i, m) in out.m_beta_mut().iter_mut().enumerate() {
                    combine(m, k1.beta[i], k2.beta[i], k3.beta[i], k4.beta[i]);
                }
                out
            }
        };
        if !w.is_finite() {
            return Err(Error::NonFinite {
                what: "ODE state",
                iteration: step as u64,
            });
        }
        records.push(record(&w, step)?);
    }
    Ok(OdeTrajectory { weights: w, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn alpha_rule_reading() {
        let mut w = NetworkWeights::<f64>::zeros(2, 3, 1);
        let hp = Hyperparams::symmetric(2, 3, 2.0, 0.1).unwrap();
        spikelda_update(&mut w, 1, 0, 0, &hp, 0.1, 4);
        assert_eq!(w.alpha(0, 1), 0.0);
        assert!((w.alpha(0, 0) + 0.1).abs() < 1e-15);
        assert_eq!(w.alpha(1, 0), 0.0);
        // β: winner (1 + 1/4) − 1/2 − 1/4, loser 1/4 − 1/2 − 1/4.
        assert!((w.beta(0, 0) - 0.1 * 0.5).abs() < 1e-15);
        assert!((w.beta(1, 0) + 0.1 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn plsi_beta_rule() {
        let mut w = NetworkWeights::<f64>::zeros(2, 2, 1);
        spikeplsi_update(&mut w, 0, 0, 1, 0.25);
        assert_eq!(w.beta(1, 0), 0.0);
        assert_eq!(w.beta(0, 0), -0.25);
    }

    #[test]
    fn semi_update_fixed_point() {
        let mut w = NetworkWeights::<f64>::zeros(1, 1, 0);
        let mut s = MinibatchStats::zeros(1, 1, 2, 3);
        s.n_zw[0] = 12;
        s.n_z[0] = 12;
        semi_update(&mut w, &s, 0.5);
        assert_eq!(w.alpha(0, 0), 0.0);
        *w.alpha_mut(0, 0) = 0.3;
        semi_update(&mut w, &s, 0.5);
        assert!(w.alpha(0, 0) < 0.3);
    }

    #[test]
    fn du_requires_batch() {
        let mut w = NetworkWeights::<f64>::zeros(2, 2, 1);
        let hp = Hyperparams::symmetric(2, 2, 2.0, 0.1).unwrap();
        assert!(du_update(&mut w, &[], &hp, 0.1, LearningMode::Map).is_err());
    }

    #[test]
    fn schedule_parse_round_trip() {
        for s in [
            "robbins-monro:0.2,50,0.6",
            "rmsprop:0.5,0.9,0.00000001",
            "adagrad:0.3,1.5,0.001",
            "variance-tracking:2,0.001,0.5",
        ] {
            let parsed: StepSchedule = s.parse().unwrap();
            assert_eq!(parsed.to_string().parse::<StepSchedule>().unwrap(), parsed);
        }
        assert!("rm:0.1,10,0.7,3".parse::<StepSchedule>().is_err());
        assert!("sgd".parse::<StepSchedule>().is_err());
        assert!("rm:-1".parse::<StepSchedule>().is_err());
    }

    #[test]
    fn robbins_monro_decays() {
        let mut s = StepState::new(StepSchedule::RobbinsMonro { a: 1.0, b: 1.0, c: 1.0 }, 0);
        assert_eq!(s.current(), 1.0);
        s.tick();
        assert_eq!(s.current(), 0.5);
    }

    #[test]
    fn zero_iterations_returns_init() {
        let c = Corpus::from_docs(2, vec![vec![(0, 1), (1, 1)]], None).unwrap();
        let hp = Hyperparams::symmetric(2, 2, 2.0, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = ed_train(&c, &hp, LearningMode::Map, Default::default(), 0, TrainOptions::default(), &mut rng).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let init = init_weights::<f64, _>(2, 2, 1, LearningMode::Map, &mut rng);
        assert_eq!(out.weights, init);
        assert_eq!(out.trajectory.len(), 1);
    }

    #[test]
    fn semi_posterior_matches_enumeration() {
        let (k, v) = (2usize, 3usize);
        let rates = [0.5, 0.2, 0.3, 0.1, 0.6, 0.3];
        let lambda = [0.7, 1.3];
        let tokens = [0u32, 1, 1, 2];
        let (log_z, marg) = semi_doc_posterior(&rates, v, &tokens, &lambda);
        let n = tokens.len();
        let mut total = 0.0;
        let mut m = vec![0.0; n * k];
        for code in 0..k.pow(n as u32) {
            let z: Vec<usize> = (0..n).map(|i| code / k.pow(i as u32) % k).collect();
            let mut c = vec![0.0; k];
            let mut weight = 1.0;
            for i in 0..n {
                weight *= rates[z[i] * v + tokens[i] as usize] * (c[z[i]] + lambda[z[i]]);
                c[z[i]] += 1.0;
            }
            total += weight;
            for i in 0..n {
                m[i * k + z[i]] += weight;
            }
        }
        assert!((log_z - total.ln()).abs() < 1e-12);
        for (a, b) in marg.iter().zip(&m) {
            assert!((a - b / total).abs() < 1e-12);
        }
    }
}
