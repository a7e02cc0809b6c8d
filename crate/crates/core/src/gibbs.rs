//! Gibbs samplers: the collapsed baseline, its spiking realization
//! (SpikeCGS) and the semi-collapsed per-document sampler used by
//! semi-SpikeLDA and fold-in evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::online::MinibatchStats;
use crate::scalar::Scalar;
use crate::snn::{potentials_into, race_sample, sample_unnormalized, tau1, tau2, Hyperparams, NetworkWeights};

/// How tokens are visited by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanOrder {
    /// Tokens in storage order, wrapping around.
    #[default]
    Systematic,
    /// Each step draws a token uniformly at random.
    TokenUniform,
}

/// Topic assignment counts for a corpus.
///
/// `c_wz` is word-major (`w * K + z`), `c_zd` document-major (`d * K + z`).
/// Assignments follow the corpus token index order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTables {
    k: usize,
    v: usize,
    d: usize,
    c_wz: Vec<u64>,
    c_zd: Vec<u64>,
    c_dot_z: Vec<u64>,
    z: Vec<u32>,
}

impl CountTables {
    /// Tabulates the given assignments against the corpus.
    pub fn from_assignments(corpus: &Corpus, k: usize, z: Vec<u32>) -> Result<Self> {
        let tokens = corpus.tokens();
        if z.len() != tokens.len() {
            return Err(Error::Consistency(format!("{} assignments for {} tokens", z.len(), tokens.len())));
        }
        let (v, d) = (corpus.vocab_size(), corpus.num_docs());
        let mut c = Self {
            k,
            v,
            d,
            c_wz: vec![0; v * k],
            c_zd: vec![0; d * k],
            c_dot_z: vec![0; k],
            z: vec![0; 0],
        };
        for (t, &zt) in z.iter().enumerate() {
            if zt as usize >= k {
                return Err(Error::Consistency(format!("topic {zt} out of range at token {t}")));
            }
            c.add(tokens.words[t] as usize, tokens.docs[t] as usize, zt as usize);
        }
        c.z = z;
        Ok(c)
    }

    /// Uniformly random topic per token.
    pub fn random<R: Rng + ?Sized>(corpus: &Corpus, k: usize, rng: &mut R) -> Self {
        let z = (0..corpus.tokens().len()).map(|_| rng.random_range(0..k as u32)).collect();
        Self::from_assignments(corpus, k, z).expect("in-range assignments")
    }

    pub fn num_topics(&self) -> usize {
        self.k
    }

    pub fn vocab_size(&self) -> usize {
        self.v
    }

    pub fn num_docs(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn c_wz(&self, w: usize, z: usize) -> u64 {
        self.c_wz[w * self.k + z]
    }

    #[inline]
    pub fn c_zd(&self, z: usize, d: usize) -> u64 {
        self.c_zd[d * self.k + z]
    }

    #[inline]
    pub fn c_dot_z(&self, z: usize) -> u64 {
        self.c_dot_z[z]
    }

    pub fn assignments(&self) -> &[u32] {
        &self.z
    }

    fn add(&mut self, w: usize, d: usize, z: usize) {
        self.c_wz[w * self.k + z] += 1;
        self.c_zd[d * self.k + z] += 1;
        self.c_dot_z[z] += 1;
    }

    fn sub(&mut self, w: usize, d: usize, z: usize) -> Result<()> {
        let k = self.k;
        for (slot, what) in [
            (&mut self.c_wz[w * k + z], "C_wz"),
            (&mut self.c_zd[d * k + z], "C_zd"),
            (&mut self.c_dot_z[z], "C_.z"),
        ] {
            *slot = slot
                .checked_sub(1)
                .ok_or_else(|| Error::Invariant(format!("{what} would become negative (w={w}, d={d}, z={z})")))?;
        }
        Ok(())
    }

    /// Removes token `t` from the tables and returns its old topic.
    pub fn remove_token(&mut self, t: usize, w: usize, d: usize) -> Result<usize> {
        let z = self.z[t] as usize;
        self.sub(w, d, z)?;
        Ok(z)
    }

    pub fn assign_token(&mut self, t: usize, w: usize, d: usize, z: usize) {
        self.z[t] = z as u32;
        self.add(w, d, z);
    }

    /// Checks the sum identities and that the tables tabulate the assignments.
    pub fn check(&self, corpus: &Corpus) -> Result<()> {
        let fresh = Self::from_assignments(corpus, self.k, self.z.clone())?;
        if fresh != *self {
            return Err(Error::Invariant("count tables disagree with assignments".into()));
        }
        for d in 0..self.d {
            let s: u64 = self.c_zd[d * self.k..(d + 1) * self.k].iter().sum();
            if s != corpus.doc_len(d) {
                return Err(Error::Invariant(format!("Σ_z C_zd = {s} != N_d for document {d}")));
            }
        }
        Ok(())
    }
}

/// Collapsed conditional
/// `p(z) ∝ (C_wz + φ_w) / (C_·z + φ̄) · (C_zd + λ_z)`, normalized.
///
/// With `exclude = Some(z0)` one token of topic `z0` at `(w, d)` is taken out
/// of the counts first.
pub fn cgs_conditional<T: Scalar>(counts: &CountTables, hp: &Hyperparams<T>, w: usize, d: usize, exclude: Option<usize>) -> Result<Vec<T>> {
    let mut p = vec![T::zero(); counts.k];
    cgs_weights_into(counts, hp, w, d, exclude, &mut p)?;
    let total: T = p.iter().copied().sum();
    p.iter_mut().for_each(|x| *x /= total);
    Ok(p)
}

fn cgs_weights_into<T: Scalar>(counts: &CountTables, hp: &Hyperparams<T>, w: usize, d: usize, exclude: Option<usize>, out: &mut [T]) -> Result<()> {
    let (phi_w, phi_bar, lambda) = (hp.phi()[w], hp.phi_bar(), hp.lambda());
    for (z, p) in out.iter_mut().enumerate() {
        let minus = u64::from(exclude == Some(z));
        let get = |c: u64, what: &str| {
            c.checked_sub(minus)
                .ok_or_else(|| Error::Invariant(format!("excluded {what} count negative (w={w}, d={d}, z={z})")))
        };
        let cwz = get(counts.c_wz(w, z), "C_wz")?;
        let cz = get(counts.c_dot_z(z), "C_.z")?;
        let czd = get(counts.c_zd(z, d), "C_zd")?;
        *p = (T::of_count(cwz) + phi_w) / (T::of_count(cz) + phi_bar) * (T::of_count(czd) + lambda[z]);
    }
    Ok(())
}

fn pick_token<R: Rng + ?Sized>(order: ScanOrder, step: usize, n: usize, rng: &mut R) -> usize {
    match order {
        ScanOrder::Systematic => step % n,
        ScanOrder::TokenUniform => rng.random_range(0..n),
    }
}

/// Resamples token `t`: decrement, draw from the collapsed conditional,
/// increment.
pub fn cgs_token_step<T: Scalar, R: Rng + ?Sized>(corpus: &Corpus, counts: &mut CountTables, hp: &Hyperparams<T>, t: usize, rng: &mut R) -> Result<usize> {
    let tokens = corpus.tokens();
    let (w, d) = (tokens.words[t] as usize, tokens.docs[t] as usize);
    counts.remove_token(t, w, d)?;
    let mut p = vec![T::zero(); counts.k];
    cgs_weights_into(counts, hp, w, d, None, &mut p)?;
    let z = sample_unnormalized(&p, rng);
    counts.assign_token(t, w, d, z);
    Ok(z)
}

/// Runs `num_tokens` collapsed Gibbs steps.
pub fn cgs_sweep<T: Scalar, R: Rng + ?Sized>(
    corpus: &Corpus,
    counts: &mut CountTables,
    hp: &Hyperparams<T>,
    rng: &mut R,
    num_tokens: usize,
    order: ScanOrder,
) -> Result<()> {
    let n = corpus.tokens().len();
    if n == 0 {
        return Err(Error::EmptyCorpus);
    }
    let mut p = vec![T::zero(); counts.k];
    for step in 0..num_tokens {
        let t = pick_token(order, step, n, rng);
        let tokens = corpus.tokens();
        let (w, d) = (tokens.words[t] as usize, tokens.docs[t] as usize);
        counts.remove_token(t, w, d)?;
        cgs_weights_into(counts, hp, w, d, None, &mut p)?;
        let z = sample_unnormalized(&p, rng);
        counts.assign_token(t, w, d, z);
    }
    if cfg!(debug_assertions) {
        counts.check(corpus)?;
    }
    Ok(())
}

/// Encodes count tables as weights:
/// `M^α_zw = log(C_wz + φ_w)`, `M^β_zd = log(C_zd + λ_z)`,
/// `b_z = log(C_·z + φ̄)`.
pub fn spikecgs_init<T: Scalar>(counts: &CountTables, hp: &Hyperparams<T>) -> Result<NetworkWeights<T>> {
    let (k, v, d) = (counts.k, counts.v, counts.d);
    let log = |c: u64, prior: T, what: &str| -> Result<T> {
        let x = (T::of_count(c) + prior).ln();
        if x.is_finite() {
            Ok(x)
        } else {
            Err(Error::Domain(format!("{what}: log of zero count with zero prior")))
        }
    };
    let mut weights = NetworkWeights::zeros(k, v, d);
    for z in 0..k {
        for w in 0..v {
            *weights.alpha_mut(z, w) = log(counts.c_wz(w, z), hp.phi()[w], "M^α")?;
        }
        for dd in 0..d {
            *weights.beta_mut(z, dd) = log(counts.c_zd(z, dd), hp.lambda()[z], "M^β")?;
        }
    }
    let b = (0..k).map(|z| log(counts.c_dot_z(z), hp.phi_bar(), "b")).collect::<Result<Vec<_>>>()?;
    weights.set_b(Some(b));
    Ok(weights)
}

/// Counts recovered from SpikeCGS weights, as reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedCounts {
    /// Word-major, `w * K + z`.
    pub c_wz: Vec<f64>,
    /// Document-major, `d * K + z`.
    pub c_zd: Vec<f64>,
    pub c_dot_z: Vec<f64>,
}

pub fn decode_counts<T: Scalar>(weights: &NetworkWeights<T>, hp: &Hyperparams<T>) -> DecodedCounts {
    let (k, v, d) = (weights.num_topics(), weights.vocab_size(), weights.num_docs());
    let mut c_wz = vec![0.0; v * k];
    let mut c_zd = vec![0.0; d * k];
    for z in 0..k {
        for w in 0..v {
            c_wz[w * k + z] = weights.alpha(z, w).f64().exp() - hp.phi()[w].f64();
        }
        for dd in 0..d {
            c_zd[dd * k + z] = weights.beta(z, dd).f64().exp() - hp.lambda()[z].f64();
        }
    }
    let c_dot_z = weights
        .b()
        .map(|b| b.iter().map(|x| x.f64().exp() - hp.phi_bar().f64()).collect())
        .unwrap_or_default();
    DecodedCounts { c_wz, c_zd, c_dot_z }
}

/// Resampling distribution of a SpikeCGS network whose weights already
/// exclude the current token: `softmax(M^α_zw + M^β_zd − b_z)`.
pub fn spikecgs_conditional<T: Scalar>(weights: &NetworkWeights<T>, w: usize, d: usize) -> Vec<T> {
    let mut u = vec![T::zero(); weights.num_topics()];
    potentials_into(weights, w, d, true, &mut u);
    crate::scalar::softmax_in_place(&mut u);
    u
}

fn spike_phase<T: Scalar>(weights: &mut NetworkWeights<T>, w: usize, d: usize, z: usize, remove: bool) -> Result<()> {
    let f = |x: T| if remove { tau1(x) } else { Ok(tau2(x)) };
    *weights.alpha_mut(z, w) = f(weights.alpha(z, w))?;
    *weights.beta_mut(z, d) = f(weights.beta(z, d))?;
    let b = weights.b_mut().ok_or_else(|| Error::Config("SpikeCGS needs self-excitation weights".into()))?;
    b[z] = f(b[z])?;
    Ok(())
}

/// Processes token `t`: negative phase on the last topic's synapses, a
/// Poisson race with self-excitation, positive phase on the winner.
pub fn spikecgs_token_step<T: Scalar, R: Rng + ?Sized>(
    weights: &mut NetworkWeights<T>,
    corpus: &Corpus,
    z: &mut [u32],
    t: usize,
    rng: &mut R,
) -> Result<usize> {
    let tokens = corpus.tokens();
    let (w, d) = (tokens.words[t] as usize, tokens.docs[t] as usize);
    spike_phase(weights, w, d, z[t] as usize, true)?;
    let mut u = [T::zero(); 64];
    let k = weights.num_topics();
    let winner = if k <= u.len() {
        potentials_into(weights, w, d, true, &mut u[..k]);
        race_sample(&u[..k], rng)
    } else {
        let mut u = vec![T::zero(); k];
        potentials_into(weights, w, d, true, &mut u);
        race_sample(&u, rng)
    };
    spike_phase(weights, w, d, winner, false)?;
    z[t] = winner as u32;
    Ok(winner)
}

/// One SpikeCGS step on a uniformly drawn token. Returns the token index.
pub fn spikecgs_step<T: Scalar, R: Rng + ?Sized>(weights: &mut NetworkWeights<T>, corpus: &Corpus, z: &mut [u32], rng: &mut R) -> Result<usize> {
    let n = corpus.tokens().len();
    if n == 0 {
        return Err(Error::EmptyCorpus);
    }
    let t = rng.random_range(0..n);
    spikecgs_token_step(weights, corpus, z, t, rng)?;
    Ok(t)
}

pub fn spikecgs_sweep<T: Scalar, R: Rng + ?Sized>(
    weights: &mut NetworkWeights<T>,
    corpus: &Corpus,
    z: &mut [u32],
    rng: &mut R,
    num_tokens: usize,
    order: ScanOrder,
) -> Result<()> {
    let n = corpus.tokens().len();
    if n == 0 {
        return Err(Error::EmptyCorpus);
    }
    for step in 0..num_tokens {
        let t = pick_token(order, step, n, rng);
        spikecgs_token_step(weights, corpus, z, t, rng)?;
    }
    Ok(())
}

/// Collapsed Gibbs from a uniform random assignment; `sweeps` full passes.
pub fn cgs_train<T: Scalar, R: Rng + ?Sized>(corpus: &Corpus, hp: &Hyperparams<T>, sweeps: usize, order: ScanOrder, rng: &mut R) -> Result<CountTables> {
    let mut counts = CountTables::random(corpus, hp.num_topics(), rng);
    cgs_sweep(corpus, &mut counts, hp, rng, sweeps * corpus.tokens().len(), order)?;
    Ok(counts)
}

/// SpikeCGS from a uniform random assignment encoded as weights. Returns the
/// weights and the final assignments.
pub fn spikecgs_train<T: Scalar, R: Rng + ?Sized>(
    corpus: &Corpus,
    hp: &Hyperparams<T>,
    sweeps: usize,
    order: ScanOrder,
    rng: &mut R,
) -> Result<(NetworkWeights<T>, Vec<u32>)> {
    let counts = CountTables::random(corpus, hp.num_topics(), rng);
    let mut weights = spikecgs_init(&counts, hp)?;
    let mut z = counts.assignments().to_vec();
    spikecgs_sweep(&mut weights, corpus, &mut z, rng, sweeps * corpus.tokens().len(), order)?;
    Ok((weights, z))
}

/// `exp(M^α_zw − max_z' M^α_z'w)`, word-major. The per-word shift leaves the
/// conditional over topics unchanged.
pub(crate) fn word_topic_rates<T: Scalar>(m_alpha: &[T], k: usize, v: usize) -> Vec<f64> {
    let mut out = vec![0.0; v * k];
    for w in 0..v {
        let max = (0..k).map(|z| m_alpha[z * v + w].f64()).fold(f64::NEG_INFINITY, f64::max);
        for z in 0..k {
            out[w * k + z] = (m_alpha[z * v + w].f64() - max).exp();
        }
    }
    out
}

/// Semi-collapsed Gibbs chain for one document with fixed topic-word rates.
///
/// Runs `burn + collect` sweeps from a uniform random start and calls
/// `on_sample(position, topic)` for every token in each collected sweep.
/// Returns the final document-topic counts.
pub(crate) fn semi_doc_chain<R: Rng + ?Sized>(
    rates: &[f64],
    k: usize,
    tokens: &[u32],
    lambda: &[f64],
    burn: usize,
    collect: usize,
    rng: &mut R,
    mut on_sample: impl FnMut(usize, usize),
) -> Vec<u64> {
    let mut counts = vec![0u64; k];
    let mut z: Vec<u32> = tokens
        .iter()
        .map(|_| {
            let z = rng.random_range(0..k as u32);
            counts[z as usize] += 1;
            z
        })
        .collect();
    let mut p = vec![0.0f64; k];
    for sweep in 0..burn + collect {
        let collecting = sweep >= burn;
        for (i, &w) in tokens.iter().enumerate() {
            counts[z[i] as usize] -= 1;
            let row = &rates[w as usize * k..(w as usize + 1) * k];
            for zz in 0..k {
                p[zz] = row[zz] * (counts[zz] as f64 + lambda[zz]);
            }
            let nz = sample_unnormalized(&p, rng);
            counts[nz] += 1;
            z[i] = nz as u32;
            if collecting {
                on_sample(i, nz);
            }
        }
    }
    counts
}

/// Semi-collapsed Gibbs over a minibatch of documents with `M^α` frozen.
///
/// Each document starts from uniform random assignments (so
/// `M^β_zd = log(C_zd + λ_z)`), runs `2T` sweeps with resampling
/// distribution `∝ exp(M^α_zw) (C_zd + λ_z)`, and contributes the
/// assignments of the last `T` sweeps. Documents run in parallel, each with
/// its own RNG stream seeded from `rng` in batch order.
pub fn semi_cgs_minibatch<T: Scalar, R: Rng + ?Sized>(
    weights: &NetworkWeights<T>,
    corpus: &Corpus,
    docs: &[u32],
    hp: &Hyperparams<T>,
    sweeps: usize,
    rng: &mut R,
) -> Result<MinibatchStats> {
    if sweeps < 1 {
        return Err(Error::Config("semi-collapsed sampling needs T >= 1 sweeps".into()));
    }
    let (k, v) = (weights.num_topics(), weights.vocab_size());
    let rates = word_topic_rates(weights.m_alpha(), k, v);
    let lambda: Vec<f64> = hp.lambda().iter().map(|x| x.f64()).collect();
    let seeds: Vec<u64> = docs.iter().map(|_| rng.random()).collect();
    let per_doc: Vec<(Vec<u32>, Vec<u64>, Vec<u64>)> = docs
        .par_iter()
        .zip(seeds)
        .map(|(&d, seed)| {
            let tokens = corpus.doc_tokens(d as usize);
            let mut local = vec![0u64; tokens.len() * k];
            let mut drng = ChaCha8Rng::seed_from_u64(seed);
            let counts = semi_doc_chain(&rates, k, &tokens, &lambda, sweeps, sweeps, &mut drng, |i, z| {
                local[i * k + z] += 1;
            });
            (tokens, local, counts)
        })
        .collect();
    let mut stats = MinibatchStats::zeros(k, v, docs.len(), sweeps);
    for (tokens, local, counts) in per_doc {
        for (i, &w) in tokens.iter().enumerate() {
            for z in 0..k {
                let c = local[i * k + z];
                stats.n_zw[z * v + w as usize] += c;
                stats.n_z[z] += c;
            }
        }
        stats.doc_topic_counts.push(counts);
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(docs: Vec<Vec<(u32, u32)>>, v: usize) -> Corpus {
        Corpus::from_docs(v, docs, None).unwrap()
    }

    #[test]
    fn conditional_hand_example() {
        // Word 0 in doc 0 plus filler tokens arranged so that the excluded
        // counts are C_00=2, C_.0=3, C_0d=1, C_01=0, C_.1=1, C_1d=0.
        let c = corpus(vec![vec![(0, 1), (1, 1)], vec![(0, 2), (1, 1)]], 2);
        let z = vec![0, 0, 0, 0, 1];
        let counts = CountTables::from_assignments(&c, 2, z).unwrap();
        let hp = Hyperparams::<f64>::symmetric(2, 2, 1.0, 1.0).unwrap();
        let p = cgs_conditional(&counts, &hp, 0, 0, Some(0)).unwrap();
        let (a, b) = ((2.0 + 1.0) / (3.0 + 2.0) * (1.0 + 1.0), (0.0 + 1.0) / (1.0 + 2.0) * (0.0 + 1.0));
        assert!((a - 1.2f64).abs() < 1e-15);
        assert!((p[0] - a / (a + b)).abs() < 1e-12);
        assert!((p[0] - 0.782_608_695_652_174).abs() < 1e-12);
    }

    #[test]
    fn conditional_uniform_at_zero_counts() {
        let c = corpus(vec![vec![(0, 1)]], 3);
        let counts = CountTables::from_assignments(&c, 4, vec![2]).unwrap();
        let hp = Hyperparams::<f64>::symmetric(4, 3, 0.5, 0.5).unwrap();
        let p = cgs_conditional(&counts, &hp, 0, 0, Some(2)).unwrap();
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn negative_exclusion_is_an_invariant_error() {
        let c = corpus(vec![vec![(0, 1)]], 1);
        let counts = CountTables::from_assignments(&c, 2, vec![0]).unwrap();
        let hp = Hyperparams::<f64>::symmetric(2, 1, 1.0, 1.0).unwrap();
        assert!(matches!(cgs_conditional(&counts, &hp, 0, 0, Some(1)), Err(Error::Invariant(_))));
    }

    #[test]
    fn single_topic_sweep_is_identity() {
        let c = corpus(vec![vec![(0, 1)]], 1);
        let mut counts = CountTables::from_assignments(&c, 1, vec![0]).unwrap();
        let before = counts.clone();
        let hp = Hyperparams::<f64>::symmetric(1, 1, 1.0, 1.0).unwrap();
        cgs_sweep(&c, &mut counts, &hp, &mut ChaCha8Rng::seed_from_u64(1), 1, ScanOrder::Systematic).unwrap();
        assert_eq!(counts, before);
    }

    #[test]
    fn spikecgs_init_prior_only() {
        let c = corpus(vec![vec![(0, 1)]], 3);
        let mut counts = CountTables::from_assignments(&c, 2, vec![0]).unwrap();
        counts.remove_token(0, 0, 0).unwrap();
        let hp = Hyperparams::<f64>::symmetric(2, 3, 1.0, 1.0).unwrap();
        let w = spikecgs_init(&counts, &hp).unwrap();
        assert!(w.m_alpha().iter().chain(w.m_beta()).all(|&x| x == 0.0));
        assert!(w.b().unwrap().iter().all(|&b| (b - 3f64.ln()).abs() < 1e-15));
        let zero_prior = Hyperparams::<f64>::new(vec![1.0, 1.0], vec![0.0, 1.0, 1.0]).unwrap();
        assert!(matches!(spikecgs_init(&counts, &zero_prior), Err(Error::Domain(_))));
    }

    #[test]
    fn spikecgs_same_topic_resample_is_identity() {
        let c = corpus(vec![vec![(0, 3), (1, 1)], vec![(1, 2)]], 2);
        let counts = CountTables::from_assignments(&c, 1, vec![0; 6]).unwrap();
        let hp = Hyperparams::<f64>::symmetric(1, 2, 0.5, 0.1).unwrap();
        let mut w = spikecgs_init(&counts, &hp).unwrap();
        let before = w.clone();
        let mut z = counts.assignments().to_vec();
        spikecgs_token_step(&mut w, &c, &mut z, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for (a, b) in w.m_alpha().iter().chain(w.m_beta()).zip(before.m_alpha().iter().chain(before.m_beta())) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn semi_single_topic_counts() {
        let c = corpus(vec![vec![(0, 2), (2, 1)], vec![(1, 4)]], 3);
        let w = NetworkWeights::<f64>::zeros(1, 3, 2);
        let hp = Hyperparams::symmetric(1, 3, 1.0, 1.0).unwrap();
        let s = semi_cgs_minibatch(&w, &c, &[0, 1], &hp, 5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(s.n_zw, vec![10, 20, 5]);
        assert_eq!(s.n_z, vec![35]);
        assert!(semi_cgs_minibatch(&w, &c, &[0], &hp, 0, &mut ChaCha8Rng::seed_from_u64(3)).is_err());
    }
}
