//! Deterministic checks of the mean-limit theory on small generated
//! instances: constraint decay, the natural-gradient identity, closed-form
//! stationary points and objective monotonicity.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::online::{
    direction_from_posterior, expected_update, init_weights, objective, ode_integrate_with, posterior, stationary_point, DirectionField, Integrator,
    LearningMode, OdeConfig, OdeRecord,
};
use crate::snn::{constraint_deviation, Hyperparams, NetworkWeights};
use crate::synth::{generate, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    ConstraintDecay,
    NaturalGradient,
    StationaryPoint,
    ObjectiveMonotone,
}

impl Check {
    pub const ALL: [Check; 4] = [Check::ConstraintDecay, Check::NaturalGradient, Check::StationaryPoint, Check::ObjectiveMonotone];
}

impl FromStr for Check {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constraint-decay" => Ok(Check::ConstraintDecay),
            "natural-gradient" => Ok(Check::NaturalGradient),
            "stationary-point" => Ok(Check::StationaryPoint),
            "objective-monotone" => Ok(Check::ObjectiveMonotone),
            _ => Err(Error::Config(format!("unknown check `{s}`"))),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Check::ConstraintDecay => "constraint-decay",
            Check::NaturalGradient => "natural-gradient",
            Check::StationaryPoint => "stationary-point",
            Check::ObjectiveMonotone => "objective-monotone",
        })
    }
}

/// Size of the generated verification corpus. Semi mode uses short
/// documents so the exact posterior stays cheap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub topics: usize,
    pub vocab_size: usize,
    pub docs: usize,
    pub doc_len: usize,
    pub semi_doc_len: usize,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        Self {
            topics: 3,
            vocab_size: 12,
            docs: 10,
            doc_len: 30,
            semi_doc_len: 6,
            lambda: 1.5,
            seed: 11,
        }
    }
}

pub type FieldHook = fn(&mut DirectionField<f64>);

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub modes: Vec<LearningMode>,
    pub checks: Vec<Check>,
    pub instance: InstanceSpec,
    pub integrator: Integrator,
    pub dt: f64,
    /// Step budget for the constraint-decay run from a random start; the run
    /// stops early once every deviation is below tolerance.
    pub decay_steps: usize,
    /// Steps for the on-manifold objective run.
    pub objective_steps: usize,
    /// Applied to every evaluated direction field; used to build negative
    /// controls.
    pub hook: Option<FieldHook>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            modes: vec![LearningMode::Plsi, LearningMode::Map, LearningMode::Semi],
            checks: Check::ALL.to_vec(),
            instance: InstanceSpec::default(),
            integrator: Integrator::Rk4,
            dt: 1e-2,
            decay_steps: 50_000,
            objective_steps: 1000,
            hook: None,
        }
    }
}

pub const DECAY_STEP_TOL: f64 = 1e-6;
pub const DECAY_FINAL_TOL: f64 = 1e-3;
pub const NATURAL_GRADIENT_TOL: f64 = 1e-5;
pub const STATIONARY_TOL: f64 = 1e-10;
pub const OBJECTIVE_STEP_TOL: f64 = 1e-9;
pub const MANIFOLD_DRIFT_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;
const DECAY_CHUNK: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: Check,
    pub mode: LearningMode,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

/// Generated corpus (every word occurs at least once) and hyperparameters.
pub fn instance(spec: &InstanceSpec, mode: LearningMode) -> Result<(Corpus, Hyperparams<f64>)> {
    let doc_len = if mode == LearningMode::Semi { spec.semi_doc_len } else { spec.doc_len };
    let synth = generate(&SynthConfig {
        topics: spec.topics,
        vocab_size: spec.vocab_size,
        docs: spec.docs,
        doc_len,
        topic_concentration: 0.5,
        doc_concentration: 1.0,
        seed: spec.seed,
    })?;
    let mut docs: Vec<Vec<(u32, u32)>> = synth.corpus.docs().map(|d| d.to_vec()).collect();
    let counts = synth.corpus.unigram_counts();
    for (w, _) in counts.iter().enumerate().filter(|(_, &c)| c == 0) {
        docs[w % spec.docs].push((w as u32, 1));
    }
    let corpus = Corpus::from_docs(spec.vocab_size, docs, None)?;
    if mode == LearningMode::Semi && (0..corpus.num_docs()).any(|d| corpus.doc_len(d) as usize > 3 * spec.semi_doc_len.max(4)) {
        return Err(Error::Config("semi verification documents too long for the exact posterior".into()));
    }
    let hp = Hyperparams::symmetric(spec.topics, spec.vocab_size, spec.lambda, 0.01)?;
    if mode == LearningMode::Map {
        hp.require_positive_kappa()?;
    }
    Ok((corpus, hp))
}

fn field_with_hook<'a>(
    corpus: &'a Corpus,
    hp: &'a Hyperparams<f64>,
    mode: LearningMode,
    hook: Option<FieldHook>,
) -> impl Fn(&NetworkWeights<f64>) -> Result<DirectionField<f64>> + 'a {
    move |w| {
        let mut g = expected_update(w, corpus, hp, mode)?;
        if let Some(h) = hook {
            h(&mut g);
        }
        Ok(g)
    }
}

fn manifold_point(corpus: &Corpus, hp: &Hyperparams<f64>, mode: LearningMode, seed: u64) -> NetworkWeights<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = init_weights(hp.num_topics(), corpus.vocab_size(), corpus.num_docs(), mode, &mut rng);
    w.project_to_manifold(mode.beta_target(hp).unwrap_or(1.0));
    w
}

fn report(check: Check, mode: LearningMode, measured: f64, tolerance: f64, detail: String) -> CheckReport {
    CheckReport {
        check,
        mode,
        passed: measured.is_finite() && measured <= tolerance,
        measured,
        tolerance,
        detail,
    }
}

/// Largest per-step increase of `|ζ^α_z|` and `|ζ^β_d|` along the flow from a
/// random start, and the final deviation.
fn check_constraint_decay(corpus: &Corpus, hp: &Hyperparams<f64>, mode: LearningMode, cfg: &VerifyConfig) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.instance.seed ^ 0xdeca);
    let mut w = init_weights(hp.num_topics(), corpus.vocab_size(), corpus.num_docs(), mode, &mut rng);
    let ode = OdeConfig {
        dt: cfg.dt,
        steps: DECAY_CHUNK,
        integrator: cfg.integrator,
        objective: false,
    };
    let max_dev = |r: &OdeRecord| r.zeta_alpha.iter().chain(&r.zeta_beta).fold(0.0f64, |m, &x| m.max(x));
    let mut worst = 0.0f64;
    let mut start_dev = None;
    let mut final_dev = f64::INFINITY;
    let mut steps = 0;
    while steps < cfg.decay_steps && final_dev >= DECAY_FINAL_TOL {
        let traj = ode_integrate_with(&w, corpus, hp, mode, ode, field_with_hook(corpus, hp, mode, cfg.hook))?;
        start_dev.get_or_insert_with(|| max_dev(&traj.records[0]));
        for pair in traj.records.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            for (x, y) in a.zeta_alpha.iter().zip(&b.zeta_alpha).chain(a.zeta_beta.iter().zip(&b.zeta_beta)) {
                worst = worst.max(y - x);
            }
        }
        final_dev = max_dev(traj.records.last().expect("start record"));
        w = traj.weights;
        steps += DECAY_CHUNK;
    }
    let mut r = report(
        Check::ConstraintDecay,
        mode,
        worst,
        DECAY_STEP_TOL,
        format!("max deviation {:.3e} -> {final_dev:.3e} after {steps} steps", start_dev.unwrap_or(f64::NAN)),
    );
    r.passed &= final_dev < DECAY_FINAL_TOL;
    Ok(r)
}

/// `‖FD − exp(M) g‖∞ / ‖exp(M) g‖∞` at an on-manifold point.
fn check_natural_gradient(corpus: &Corpus, hp: &Hyperparams<f64>, mode: LearningMode, cfg: &VerifyConfig) -> Result<CheckReport> {
    let w = manifold_point(corpus, hp, mode, cfg.instance.seed ^ 0x9a7);
    let g = field_with_hook(corpus, hp, mode, cfg.hook)(&w)?;
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let n_alpha = w.m_alpha().len();
    let n_beta = if mode == LearningMode::Semi { 0 } else { w.m_beta().len() };
    for i in 0..n_alpha + n_beta {
        let (m, gi) = if i < n_alpha {
            (w.m_alpha()[i], g.alpha[i])
        } else {
            (w.m_beta()[i - n_alpha], g.beta[i - n_alpha])
        };
        analytic.push(m.exp() * gi);
        let eval = |h: f64| -> Result<f64> {
            let mut p = w.clone();
            if i < n_alpha {
                p.m_alpha_mut()[i] += h;
            } else {
                p.m_beta_mut()[i - n_alpha] += h;
            }
            objective(&p, corpus, hp, mode)
        };
        numeric.push((eval(FD_STEP)? - eval(-FD_STEP)?) / (2.0 * FD_STEP));
    }
    let scale = analytic.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let err = analytic.iter().zip(&numeric).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(report(
        Check::NaturalGradient,
        mode,
        err / scale,
        NATURAL_GRADIENT_TOL,
        format!("{} coordinates, ‖exp(M) g‖∞ = {scale:.3e}", analytic.len()),
    ))
}

/// Closed-form stationary point of the posterior-frozen field: residual
/// field norm and constraint deviation.
fn check_stationary_point(corpus: &Corpus, hp: &Hyperparams<f64>, mode: LearningMode, cfg: &VerifyConfig) -> Result<CheckReport> {
    let w = manifold_point(corpus, hp, mode, cfg.instance.seed ^ 0x57a7);
    let post = posterior(&w, corpus, hp, mode)?;
    let star = stationary_point(&w, &post, hp, mode);
    let mut g = direction_from_posterior(&star, &post, hp, mode);
    if let Some(h) = cfg.hook {
        h(&mut g);
    }
    let resid = g.alpha.iter().chain(&g.beta).fold(0.0f64, |m, x| m.max(x.abs()));
    let (za, zb) = constraint_deviation(&star, mode.beta_target(hp).unwrap_or(1.0));
    let zb_max = if mode == LearningMode::Semi {
        0.0
    } else {
        zb.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    };
    let dev = za.iter().fold(zb_max, |m, x| m.max(x.abs()));
    Ok(report(
        Check::StationaryPoint,
        mode,
        resid.max(dev),
        STATIONARY_TOL,
        format!("field residual {resid:.3e}, constraint deviation {dev:.3e}"),
    ))
}

/// Largest per-step decrease of the objective along an on-manifold flow.
fn check_objective_monotone(corpus: &Corpus, hp: &Hyperparams<f64>, mode: LearningMode, cfg: &VerifyConfig) -> Result<CheckReport> {
    let w0 = manifold_point(corpus, hp, mode, cfg.instance.seed ^ 0x0b1);
    let ode = OdeConfig {
        dt: cfg.dt,
        steps: cfg.objective_steps,
        integrator: cfg.integrator,
        objective: true,
    };
    let traj = ode_integrate_with(&w0, corpus, hp, mode, ode, field_with_hook(corpus, hp, mode, cfg.hook))?;
    let objs: Vec<f64> = traj.records.iter().map(|r| r.objective.expect("objective recorded")).collect();
    let worst = objs.windows(2).fold(0.0f64, |m, p| m.max(p[0] - p[1]));
    let drift = traj
        .records
        .iter()
        .flat_map(|r| r.zeta_alpha.iter().chain(&r.zeta_beta))
        .fold(0.0f64, |m, &x| m.max(x));
    let mut r = report(
        Check::ObjectiveMonotone,
        mode,
        worst,
        OBJECTIVE_STEP_TOL,
        format!(
            "objective {:.6} -> {:.6} over {} steps, manifold drift {drift:.3e}",
            objs[0],
            objs[objs.len() - 1],
            cfg.objective_steps
        ),
    );
    r.passed &= drift < MANIFOLD_DRIFT_TOL;
    Ok(r)
}

pub fn run_check(check: Check, mode: LearningMode, cfg: &VerifyConfig) -> Result<CheckReport> {
    let (corpus, hp) = instance(&cfg.instance, mode)?;
    match check {
        Check::ConstraintDecay => check_constraint_decay(&corpus, &hp, mode, cfg),
        Check::NaturalGradient => check_natural_gradient(&corpus, &hp, mode, cfg),
        Check::StationaryPoint => check_stationary_point(&corpus, &hp, mode, cfg),
        Check::ObjectiveMonotone => check_objective_monotone(&corpus, &hp, mode, cfg),
    }
}

/// Runs every configured (mode, check) pair.
pub fn run(cfg: &VerifyConfig) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    for &mode in &cfg.modes {
        for &check in &cfg.checks {
            out.push(run_check(check, mode, cfg)?);
        }
    }
    Ok(out)
}
