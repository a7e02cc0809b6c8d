//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any gating criterion fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikelda::corpus::{read_uci, split_fold_in, FoldInSplit};
use spikelda::eval::{fold_in_perplexity, weights_to_model, Decoding};
use spikelda::gibbs::{cgs_conditional, cgs_train, semi_cgs_minibatch, spikecgs_conditional, spikecgs_init, spikecgs_train, CountTables, ScanOrder};
use spikelda::online::{
    du_direction, du_train, du_update, ed_continue, ed_train, expected_update, gamma_prior_logdensity, init_weights, semi_direction, semi_train,
    EventDirection, LearningMode, StepSchedule, TokenEvent, TrainOptions,
};
use spikelda::pruning::{continue_training_pruned, prune, DEFAULT_RESIDENT_DOCS, DEFAULT_TOP_WORDS};
use spikelda::snn::{potentials_into, race_sample, tau1};
use spikelda::synth::{generate, SynthConfig, SyntheticCorpus};
use spikelda::verify::{self, InstanceSpec, VerifyConfig};
use spikelda::{Corpus, Hyperparams, Weights};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const LAMBDA: f64 = 1.1;
const PHI: f64 = 0.01;

struct Outcome {
    passed: bool,
    line: String,
}

fn outcome(passed: bool, line: String) -> Outcome {
    Outcome { passed, line }
}

fn std_softmax(u: &[f64]) -> Vec<f64> {
    let m = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = u.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, k - 1);
            out.push(q);
        }
    }
    out
}

/// Mean cosine between planted and learned topics under the best matching.
fn best_permutation_cosine(planted: &[Vec<f64>], learned: &[f64], v: usize) -> f64 {
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let k = planted.len();
    permutations(k)
        .iter()
        .map(|p| (0..k).map(|z| cos(&planted[z], &learned[p[z] * v..(p[z] + 1) * v])).sum::<f64>() / k as f64)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn kernel_equivalence() -> Outcome {
    let start = Instant::now();
    let syn = generate(&SynthConfig::toy()).unwrap();
    let corpus = &syn.corpus;
    let (k, v) = (3, corpus.vocab_size());
    let hp = Hyperparams::<f64>::symmetric(k, v, 0.1, 0.01).unwrap();
    let tokens = corpus.tokens();
    let n = tokens.len();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let z: Vec<u32> = (0..n).map(|_| rng.random_range(0..k as u32)).collect();
        let t = rng.random_range(0..n);
        let (w, d) = (tokens.words[t] as usize, tokens.docs[t] as usize);
        let mut c_wz = vec![0.0; v * k];
        let mut c_zd = vec![0.0; corpus.num_docs() * k];
        let mut c_z = vec![0.0; k];
        for i in (0..n).filter(|&i| i != t) {
            let zi = z[i] as usize;
            c_wz[tokens.words[i] as usize * k + zi] += 1.0;
            c_zd[tokens.docs[i] as usize * k + zi] += 1.0;
            c_z[zi] += 1.0;
        }
        let unnorm: Vec<f64> = (0..k)
            .map(|zz| (c_wz[w * k + zz] + PHI) / (c_z[zz] + PHI * v as f64) * (c_zd[d * k + zz] + 0.1))
            .collect();
        let total: f64 = unnorm.iter().sum();
        let oracle: Vec<f64> = unnorm.iter().map(|x| x / total).collect();

        let counts = CountTables::from_assignments(corpus, k, z.clone()).unwrap();
        let cgs = cgs_conditional(&counts, &hp, w, d, Some(z[t] as usize)).unwrap();
        let mut weights = spikecgs_init(&counts, &hp).unwrap();
        let zt = z[t] as usize;
        *weights.alpha_mut(zt, w) = tau1(weights.alpha(zt, w)).unwrap();
        *weights.beta_mut(zt, d) = tau1(weights.beta(zt, d)).unwrap();
        let b = weights.b_mut().unwrap();
        b[zt] = tau1(b[zt]).unwrap();
        let spike = spikecgs_conditional(&weights, w, d);
        for zz in 0..k {
            worst = worst.max((cgs[zz] - oracle[zz]).abs()).max((spike[zz] - oracle[zz]).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-10 && secs < 1.0,
        format!("kernel equivalence: max |SpikeCGS - CGS| = {worst:.2e} (tol 1e-10) over 100 states, {secs:.2}s (limit 1s)"),
    )
}

fn race_sampler() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let draws = 100_000;
    let mut worst = 0.0f64;
    for &k in &[2usize, 3, 5] {
        for _ in 0..20 {
            let u: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
            let p = std_softmax(&u);
            let mut hist = vec![0usize; k];
            for _ in 0..draws {
                hist[race_sample(&u, &mut rng)] += 1;
            }
            let tv = 0.5 * hist.iter().zip(&p).map(|(&c, &q)| (c as f64 / draws as f64 - q).abs()).sum::<f64>();
            worst = worst.max(tv);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 0.01 && secs < 10.0,
        format!("race sampler: max TV = {worst:.4} (tol 0.01) over 60 vectors x 1e5 draws, {secs:.2}s (limit 10s)"),
    )
}

fn ode_suite() -> Outcome {
    let start = Instant::now();
    let reports = verify::run(&VerifyConfig::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed).map(|r| format!("{}/{}", r.mode, r.check)).collect();
    outcome(
        failed.is_empty() && secs < 60.0,
        format!(
            "ODE theory suite: {}/{} checks pass {failed:?}, {secs:.2}s (limit 60s)",
            reports.len() - failed.len(),
            reports.len()
        ),
    )
}

/// Fraction of coordinates whose Monte Carlo mean lies outside 3 standard
/// errors of the exact value, and the largest |z|-score.
fn z_scores(sum: &[f64], sum_sq: &[f64], n: usize, exact: &[f64]) -> (f64, f64) {
    let nf = n as f64;
    let mut outside = 0usize;
    let mut max_z = 0.0f64;
    for ((&s, &s2), &e) in sum.iter().zip(sum_sq).zip(exact) {
        let mean = s / nf;
        let var = (s2 / nf - mean * mean).max(0.0);
        let se = (var / nf).sqrt();
        let dev = (mean - e).abs();
        let z = if se > 0.0 {
            dev / se
        } else if dev < 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        if z > 3.0 {
            outside += 1;
        }
        max_z = max_z.max(z);
    }
    (outside as f64 / exact.len() as f64, max_z)
}

fn unbiasedness() -> Outcome {
    let start = Instant::now();
    let samples = 100_000;
    let spec = InstanceSpec::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for mode in [LearningMode::Map, LearningMode::Plsi] {
        let (corpus, hp) = verify::instance(&spec, mode).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (k, v, d) = (hp.num_topics(), corpus.vocab_size(), corpus.num_docs());
        let w: Weights = init_weights(k, v, d, mode, &mut rng);
        let exact = expected_update(&w, &corpus, &hp, mode).unwrap();
        let exact: Vec<f64> = exact.alpha.iter().chain(&exact.beta).copied().collect();
        let (mut sum, mut sum_sq) = (vec![0.0; exact.len()], vec![0.0; exact.len()]);
        let mut dir = EventDirection::new(k, v);
        let mut u = vec![0.0; k];
        for _ in 0..samples {
            let (tw, td) = corpus.sample_token(&mut rng).unwrap();
            let (tw, td) = (tw as usize, td as usize);
            potentials_into(&w, tw, td, false, &mut u);
            let z = race_sample(&u, &mut rng);
            dir.fill(&w, tw, td, z, &hp, corpus.doc_len(td), mode);
            for (i, &g) in dir.alpha_row.iter().enumerate() {
                sum[z * v + i] += g;
                sum_sq[z * v + i] += g * g;
            }
            for (zz, &g) in dir.beta_col.iter().enumerate() {
                sum[k * v + td * k + zz] += g;
                sum_sq[k * v + td * k + zz] += g * g;
            }
        }
        let (frac, max_z) = z_scores(&sum, &sum_sq, samples, &exact);
        ok &= frac <= 0.01;
        parts.push(format!("{mode}: {:.1}% outside 3σ, max |z| {max_z:.2}", 100.0 * frac));
    }
    {
        let mode = LearningMode::Semi;
        let (corpus, hp) = verify::instance(&spec, mode).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (k, v, d) = (hp.num_topics(), corpus.vocab_size(), corpus.num_docs());
        let w: Weights = init_weights(k, v, d, mode, &mut rng);
        let exact = expected_update(&w, &corpus, &hp, mode).unwrap().alpha;
        let (mut sum, mut sum_sq) = (vec![0.0; exact.len()], vec![0.0; exact.len()]);
        for _ in 0..samples {
            let doc = rng.random_range(0..d as u32);
            let stats = semi_cgs_minibatch(&w, &corpus, &[doc], &hp, 20, &mut rng).unwrap();
            for (i, g) in semi_direction(w.m_alpha(), &stats).into_iter().enumerate() {
                sum[i] += g;
                sum_sq[i] += g * g;
            }
        }
        let (frac, max_z) = z_scores(&sum, &sum_sq, samples, &exact);
        ok &= frac <= 0.01;
        parts.push(format!("{mode}: {:.1}% outside 3σ, max |z| {max_z:.2}", 100.0 * frac));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        ok && secs < 30.0,
        format!(
            "unbiasedness (1e5 samples, ≤1% of coordinates beyond 3σ): {}, {secs:.2}s (limit 30s)",
            parts.join("; ")
        ),
    )
}

fn gamma_dirichlet() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let lambda = [1.3, 2.0, 1.05, 1.7];
    let kappa: f64 = lambda.iter().map(|l| l - 1.0).sum();
    let diffs: Vec<f64> = (0..20)
        .map(|_| {
            let x: Vec<f64> = lambda.iter().map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = x.iter().sum();
            let col: Vec<f64> = x.iter().map(|xi| (kappa * xi / s).ln()).collect();
            let theta = std_softmax(&col);
            let log_dir: f64 = lambda.iter().zip(&theta).map(|(l, t)| (l - 1.0) * t.ln()).sum();
            gamma_prior_logdensity(&col, &lambda) - log_dir
        })
        .collect();
    let spread = diffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - diffs.iter().cloned().fold(f64::INFINITY, f64::min);
    outcome(
        spread < 1e-10,
        format!("Gamma/Dirichlet equivalence: spread of log-density difference {spread:.2e} (tol 1e-10) over 20 manifold points"),
    )
}

struct Setup {
    syn: SyntheticCorpus,
    split: FoldInSplit,
    hp: Hyperparams<f64>,
}

fn setup(seed: u64) -> Setup {
    let syn = generate(&SynthConfig {
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    let split = split_fold_in(&syn.corpus, 0.1, seed).unwrap();
    let hp = Hyperparams::symmetric(3, syn.corpus.vocab_size(), LAMBDA, PHI).unwrap();
    Setup { syn, split, hp }
}

fn ed_steps() -> (StepSchedule, StepSchedule) {
    ("variance-tracking".parse().unwrap(), "adagrad:0.5,1".parse().unwrap())
}

fn score(s: &Setup, w: &Weights, seed: u64) -> (f64, f64) {
    let model = weights_to_model(w, &s.hp, Decoding::Normalized).unwrap();
    let cos = best_permutation_cosine(&s.syn.phi, &model.phi, s.syn.corpus.vocab_size());
    let p = fold_in_perplexity(&model, &s.split.test_observed, &s.split.test_holdout, s.hp.lambda(), 200, false, seed).unwrap();
    (cos, p.perplexity)
}

fn train(algo: &str, s: &Setup, seed: u64) -> Weights {
    let train = &s.split.train;
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let opts = TrainOptions::default();
    let rmsp = |eta: f64| StepSchedule::RmsProp { eta, decay: 0.9, eps: 1e-8 };
    match algo {
        "cgs" => spikecgs_init(&cgs_train(train, &s.hp, 200, ScanOrder::Systematic, &mut rng).unwrap(), &s.hp).unwrap(),
        "spikecgs" => spikecgs_train(train, &s.hp, 200, ScanOrder::TokenUniform, &mut rng).unwrap().0,
        "ed-spikelda" => {
            ed_train(train, &s.hp, LearningMode::Map, ed_steps(), 2_000_000, opts, &mut rng)
                .unwrap()
                .weights
        }
        "du-spikelda" => {
            du_train(train, &s.hp, LearningMode::Map, (rmsp(0.5), rmsp(1.0)), 4000, 1000, opts, &mut rng)
                .unwrap()
                .weights
        }
        "semi-spikelda" => semi_train(train, &s.hp, rmsp(0.5), 600, 20, 10, opts, &mut rng).unwrap().weights,
        _ => unreachable!(),
    }
}

fn recovery(ed_models: &mut Vec<(Setup, Weights)>) -> Outcome {
    let algos = ["cgs", "spikecgs", "ed-spikelda", "du-spikelda", "semi-spikelda"];
    let setups: Vec<Setup> = SEEDS.iter().map(|&s| setup(s)).collect();
    let mut cgs_perp = Vec::new();
    let mut ok = true;
    let mut parts = Vec::new();
    for algo in algos {
        let start = Instant::now();
        let mut cos = Vec::new();
        let mut ratio = Vec::new();
        for (s, &seed) in setups.iter().zip(&SEEDS) {
            let w = train(algo, s, seed);
            let (c, p) = score(s, &w, seed);
            cos.push(c);
            if algo == "cgs" {
                cgs_perp.push(p);
            }
            ratio.push(p / cgs_perp[ratio.len()]);
            if algo == "ed-spikelda" {
                ed_models.push((setup(seed), w));
            }
        }
        let secs = start.elapsed().as_secs_f64();
        let (mc, mr) = (median(cos), median(ratio));
        ok &= mc > 0.9 && (mr - 1.0).abs() <= 0.15 && secs < 300.0;
        parts.push(format!("{algo} cos {mc:.3} perp/CGS {mr:.3} ({secs:.0}s)"));
    }
    outcome(
        ok,
        format!("statistical recovery (5-seed medians, cos > 0.9, perplexity within 15%): {}", parts.join("; ")),
    )
}

fn du_ed_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let syn = generate(&SynthConfig::toy()).unwrap();
    let corpus = &syn.corpus;
    let (k, v, d) = (3, corpus.vocab_size(), corpus.num_docs());
    let hp = Hyperparams::<f64>::symmetric(k, v, 1.5, 0.01).unwrap();
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let mode = if i % 2 == 0 { LearningMode::Map } else { LearningMode::Plsi };
        let w: Weights = init_weights(k, v, d, mode, &mut rng);
        let size = rng.random_range(1..64);
        let batch: Vec<TokenEvent> = (0..size)
            .map(|_| {
                let (tw, td) = corpus.sample_token(&mut rng).unwrap();
                TokenEvent {
                    w: tw,
                    d: td,
                    z: rng.random_range(0..k as u32),
                    n_d: corpus.doc_len(td as usize),
                }
            })
            .collect();
        let eta = 0.05;
        let mut expected_alpha = w.m_alpha().to_vec();
        let mut expected_beta = w.m_beta().to_vec();
        let mut dir = EventDirection::new(k, v);
        for e in &batch {
            let (z, dd) = (e.z as usize, e.d as usize);
            dir.fill(&w, e.w as usize, dd, z, &hp, e.n_d, mode);
            for (ww, g) in dir.alpha_row.iter().enumerate() {
                expected_alpha[z * v + ww] += eta * g / size as f64;
            }
            for (zz, g) in dir.beta_col.iter().enumerate() {
                expected_beta[dd * k + zz] += eta * g / size as f64;
            }
        }
        let mut updated = w.clone();
        du_update(&mut updated, &batch, &hp, eta, mode).unwrap();
        let dense = du_direction(&w, &batch, &hp, mode).unwrap();
        assert_eq!(dense.alpha.len(), k * v);
        for (a, b) in updated.m_alpha().iter().zip(&expected_alpha).chain(updated.m_beta().iter().zip(&expected_beta)) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(
        worst < 1e-12,
        format!("du/ed consistency: max |batch delta - mean event delta| = {worst:.2e} (tol 1e-12) over 1000 batches"),
    )
}

fn pruning(ed_models: &[(Setup, Weights)]) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let syn = generate(&SynthConfig {
        vocab_size: 500,
        docs: 120,
        seed: 8,
        ..SynthConfig::default()
    })
    .unwrap();
    let corpus = &syn.corpus;
    let hp = Hyperparams::symmetric(3, corpus.vocab_size(), LAMBDA, PHI).unwrap();
    let w = ed_train(corpus, &hp, LearningMode::Map, ed_steps(), 200_000, TrainOptions::default(), &mut rng)
        .unwrap()
        .weights;
    let net = prune(&w, corpus, DEFAULT_TOP_WORDS, DEFAULT_RESIDENT_DOCS, &dir.path().join("store")).unwrap();
    let fan_in: Vec<usize> = (0..3).map(|z| net.fan_in(z)).collect();
    let v = corpus.vocab_size();
    let mut tied_err = 0.0f64;
    for z in 0..3 {
        let phi = std_softmax(w.alpha_row(z));
        let mut order: Vec<usize> = (0..v).collect();
        order.sort_by(|&a, &b| phi[b].partial_cmp(&phi[a]).unwrap().then(a.cmp(&b)));
        let p: f64 = order[DEFAULT_TOP_WORDS..].iter().map(|&i| phi[i]).sum();
        let tied = net.tied(z).unwrap();
        tied_err = tied_err.max((tied.exp() * (v - DEFAULT_TOP_WORDS) as f64 - p).abs());
    }
    let fan_ok = fan_in.iter().all(|&f| f == 251);

    let mut worst_drop = f64::NEG_INFINITY;
    for (i, (s, w)) in ed_models.iter().enumerate() {
        let seed = SEEDS[i];
        let iters = 200_000;
        let train = &s.split.train;
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 200);
        let plain = ed_continue(w.clone(), train, &s.hp, LearningMode::Map, ed_steps(), iters, TrainOptions::default(), &mut rng)
            .unwrap()
            .weights;
        let net = prune(w, train, 50, 90, &dir.path().join(format!("store{seed}"))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 200);
        let mut net = continue_training_pruned(net, train, &s.hp, ed_steps(), iters, &mut rng).unwrap();
        let pruned = net.to_weights().unwrap();
        let (c_plain, _) = score(s, &plain, seed);
        let (c_pruned, _) = score(s, &pruned, seed);
        worst_drop = worst_drop.max(c_plain - c_pruned);
    }
    outcome(
        fan_ok && tied_err < 1e-10 && worst_drop <= 0.05,
        format!(
            "pruning: fan-in {fan_in:?} (want 251), tied identity error {tied_err:.2e} (tol 1e-10), max cosine drop after pruned continuation {worst_drop:.4} (tol 0.05, top 50 of V=100, 90 resident docs)"
        ),
    )
}

/// Long run on KOS; needs `docword.kos.txt[.gz]` under `SPIKELDA_DATA_DIR`.
fn kos_extended() -> Option<Outcome> {
    let dir = std::env::var("SPIKELDA_DATA_DIR").ok()?;
    if std::env::var("SPIKELDA_EXTENDED").is_err() {
        return None;
    }
    let path = ["docword.kos.txt.gz", "docword.kos.txt"]
        .iter()
        .map(|f| Path::new(&dir).join(f))
        .find(|p| p.exists())?;
    let corpus: Corpus = read_uci(&path, None).ok()?.without_empty_docs().0;
    let split = split_fold_in(&corpus, 0.1, 0).ok()?;
    let k = 200;
    let mut best = f64::INFINITY;
    for lambda in [1.01, 1.05, 1.1] {
        let hp = Hyperparams::symmetric(k, corpus.vocab_size(), lambda, PHI).ok()?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let iters = 200 * split.train.total_tokens();
        let w = ed_train(&split.train, &hp, LearningMode::Map, ed_steps(), iters, TrainOptions::default(), &mut rng)
            .ok()?
            .weights;
        let model = weights_to_model(&w, &hp, Decoding::Normalized).ok()?;
        let p = fold_in_perplexity(&model, &split.test_observed, &split.test_holdout, hp.lambda(), 200, false, 0).ok()?;
        best = best.min(p.perplexity);
    }
    let hp = Hyperparams::symmetric(k, corpus.vocab_size(), 0.1, PHI).ok()?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let counts = cgs_train(&split.train, &hp, 500, ScanOrder::Systematic, &mut rng).ok()?;
    let model = weights_to_model(&spikecgs_init(&counts, &hp).ok()?, &hp, Decoding::Normalized).ok()?;
    let cgs = fold_in_perplexity(&model, &split.test_observed, &split.test_holdout, hp.lambda(), 200, false, 0).ok()?;
    let ratio = best / cgs.perplexity;
    Some(outcome(
        ratio <= 1.10,
        format!(
            "KOS K=200: ed-SpikeLDA best perplexity {best:.1} vs CGS {:.1} (ratio {ratio:.3}, limit 1.10)",
            cgs.perplexity
        ),
    ))
}

fn main() -> ExitCode {
    let mut ed_models = Vec::new();
    let criteria: Vec<(usize, Box<dyn FnOnce(&mut Vec<(Setup, Weights)>) -> Outcome>)> = vec![
        (1, Box::new(|_| kernel_equivalence())),
        (2, Box::new(|_| race_sampler())),
        (3, Box::new(|_| ode_suite())),
        (4, Box::new(|_| unbiasedness())),
        (5, Box::new(|_| gamma_dirichlet())),
        (6, Box::new(recovery)),
        (7, Box::new(|_| du_ed_consistency())),
        (8, Box::new(|m| pruning(m))),
    ];
    let mut all = true;
    for (i, f) in criteria {
        let o = f(&mut ed_models);
        all &= o.passed;
        println!("criterion {i}: {} {}", if o.passed { "PASS" } else { "FAIL" }, o.line);
    }
    match kos_extended() {
        Some(o) => println!("criterion 9: {} {}", if o.passed { "PASS" } else { "FAIL" }, o.line),
        None => println!("criterion 9: SKIP set SPIKELDA_EXTENDED=1 and SPIKELDA_DATA_DIR with docword.kos.txt[.gz] to run"),
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
