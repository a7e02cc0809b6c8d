//! Decoding weights into topic-model parameters, fold-in perplexity and
//! feature export.

use std::io::{BufRead, Write};

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::gibbs::semi_doc_chain;
use crate::scalar::{softmax_in_place, Scalar};
use crate::snn::{Hyperparams, NetworkWeights};

/// How weights map to `Φ` and `Θ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decoding {
    /// `exp M^α = C_wz + φ_w`, `exp M^β = C_zd + λ_z` (SpikeCGS weights).
    Counts,
    /// `φ_zw ∝ exp M^α_zw`, `θ_dz ∝ exp M^β_zd` (SpikeLDA, SpikePLSI).
    #[default]
    Normalized,
    /// `φ` from normalized `M^α`; `θ` from count-encoded `M^β` (semi-SpikeLDA).
    Mixed,
}

impl std::str::FromStr for Decoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "counts" => Ok(Decoding::Counts),
            "normalized" => Ok(Decoding::Normalized),
            "mixed" => Ok(Decoding::Mixed),
            _ => Err(Error::Config(format!("unknown decoding `{s}`"))),
        }
    }
}

/// Dense `Φ` (K x V) and `Θ` (D x K), both row-stochastic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DenseTopicModel<T> {
    pub k: usize,
    pub v: usize,
    pub d: usize,
    pub phi: Vec<T>,
    pub theta: Vec<T>,
}

impl<T: Scalar> DenseTopicModel<T> {
    pub fn phi_row(&self, z: usize) -> &[T] {
        &self.phi[z * self.v..(z + 1) * self.v]
    }

    pub fn theta_row(&self, d: usize) -> &[T] {
        &self.theta[d * self.k..(d + 1) * self.k]
    }

    /// Uniform `Φ` and `Θ`.
    pub fn uniform(k: usize, v: usize, d: usize) -> Self {
        Self {
            k,
            v,
            d,
            phi: vec![T::one() / T::of(v as f64); k * v],
            theta: vec![T::one() / T::of(k as f64); d * k],
        }
    }
}

/// Every decoding is a row softmax of `M^α` and a column softmax of `M^β`:
/// additive priors and normalizers cancel. For count-encoded weights the
/// implied counts are checked to be non-negative.
pub fn weights_to_model<T: Scalar>(weights: &NetworkWeights<T>, hp: &Hyperparams<T>, decoding: Decoding) -> Result<DenseTopicModel<T>> {
    if !weights.is_finite() {
        return Err(Error::Domain("cannot decode non-finite weights".into()));
    }
    let (k, v, d) = (weights.num_topics(), weights.vocab_size(), weights.num_docs());
    let tol = 1e-9;
    if decoding == Decoding::Counts {
        for z in 0..k {
            for w in 0..v {
                if weights.alpha(z, w).f64().exp() - hp.phi()[w].f64() < -tol {
                    warn!("word-topic weight ({z}, {w}) encodes a negative count");
                }
            }
        }
    }
    if decoding != Decoding::Normalized {
        for dd in 0..d {
            for z in 0..k {
                if weights.beta(z, dd).f64().exp() - hp.lambda()[z].f64() < -tol {
                    warn!("document-topic weight ({z}, {dd}) encodes a negative count");
                }
            }
        }
    }
    let mut phi = weights.m_alpha().to_vec();
    phi.chunks_mut(v.max(1)).for_each(softmax_in_place);
    let mut theta = weights.m_beta().to_vec();
    theta.chunks_mut(k.max(1)).for_each(softmax_in_place);
    Ok(DenseTopicModel { k, v, d, phi, theta })
}

/// Estimates `θ_d` of an unseen document by semi-collapsed Gibbs sampling
/// with `Φ` frozen.
///
/// Without averaging the estimate is `(C_zd + λ_z) / (N_d + λ̄)` from the
/// final sweep. With averaging, the first half of the sweeps is burn-in and
/// the counts of the remaining sweeps are averaged.
pub fn fold_in_theta<T: Scalar, R: Rng + ?Sized>(
    model: &DenseTopicModel<T>,
    tokens: &[u32],
    lambda: &[T],
    sweeps: usize,
    average: bool,
    rng: &mut R,
) -> Result<Vec<T>> {
    let rates = word_major(model);
    let lambda: Vec<f64> = lambda.iter().map(|x| x.f64()).collect();
    fold_in_rates(&rates, model.k, tokens, &lambda, sweeps, average, rng)
}

fn word_major<T: Scalar>(model: &DenseTopicModel<T>) -> Vec<f64> {
    let (k, v) = (model.k, model.v);
    let mut rates = vec![0.0; v * k];
    for z in 0..k {
        for w in 0..v {
            rates[w * k + z] = model.phi[z * v + w].f64();
        }
    }
    rates
}

fn fold_in_rates<T: Scalar, R: Rng + ?Sized>(
    rates: &[f64],
    k: usize,
    tokens: &[u32],
    lambda: &[f64],
    sweeps: usize,
    average: bool,
    rng: &mut R,
) -> Result<Vec<T>> {
    if sweeps == 0 {
        return Err(Error::Config("fold-in needs at least one sweep".into()));
    }
    if lambda.len() != k {
        return Err(Error::Consistency(format!("{} priors for {k} topics", lambda.len())));
    }
    let n = tokens.len() as f64;
    let lambda_bar: f64 = lambda.iter().sum();
    let (burn, collect) = if average { (sweeps / 2, sweeps - sweeps / 2) } else { (sweeps, 0) };
    let mut acc = vec![0u64; k];
    let counts = semi_doc_chain(rates, k, tokens, lambda, burn, collect, rng, |_, z| acc[z] += 1);
    let theta = (0..k)
        .map(|z| {
            let c = if average { acc[z] as f64 / collect as f64 } else { counts[z] as f64 };
            T::of((c + lambda[z]) / (n + lambda_bar))
        })
        .collect();
    Ok(theta)
}

/// Folds in every document of `observed` in parallel. Documents with no
/// observed tokens yield `None`. Per-document RNG streams are derived from
/// `seed` in document order.
pub fn fold_in_corpus<T: Scalar>(
    model: &DenseTopicModel<T>,
    observed: &Corpus,
    lambda: &[T],
    sweeps: usize,
    average: bool,
    seed: u64,
) -> Result<Vec<Option<Vec<T>>>> {
    if observed.vocab_size() != model.v {
        return Err(Error::Consistency(format!(
            "model vocabulary {} does not match corpus vocabulary {}",
            model.v,
            observed.vocab_size()
        )));
    }
    let rates = word_major(model);
    let lambda: Vec<f64> = lambda.iter().map(|x| x.f64()).collect();
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..observed.num_docs()).map(|_| master.random()).collect();
    seeds
        .into_par_iter()
        .enumerate()
        .map(|(d, s)| {
            let tokens = observed.doc_tokens(d);
            if tokens.is_empty() {
                return Ok(None);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            fold_in_rates(&rates, model.k, &tokens, &lambda, sweeps, average, &mut rng).map(Some)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    pub perplexity: f64,
    pub log_likelihood: f64,
    pub tokens: u64,
    pub excluded_docs: usize,
    /// Holdout tokens `(doc, word)` that received zero predictive probability.
    pub zero_probability: Vec<(u32, u32)>,
}

/// `exp(−Σ log Σ_z θ_dz φ_zw / N_holdout)` over holdout tokens of documents
/// with a fold-in estimate.
pub fn perplexity<T: Scalar>(model: &DenseTopicModel<T>, thetas: &[Option<Vec<T>>], holdout: &Corpus) -> Result<PerplexityReport> {
    if holdout.vocab_size() != model.v {
        return Err(Error::Consistency(format!(
            "model vocabulary {} does not match holdout vocabulary {}",
            model.v,
            holdout.vocab_size()
        )));
    }
    if thetas.len() != holdout.num_docs() {
        return Err(Error::Consistency(format!(
            "{} fold-in estimates for {} holdout documents",
            thetas.len(),
            holdout.num_docs()
        )));
    }
    let mut ll = 0.0;
    let mut tokens = 0u64;
    let mut excluded = 0;
    let mut zeros = Vec::new();
    for (d, theta) in thetas.iter().enumerate() {
        let Some(theta) = theta else {
            excluded += 1;
            continue;
        };
        for &(w, c) in holdout.doc(d) {
            let p: f64 = (0..model.k).map(|z| theta[z].f64() * model.phi[z * model.v + w as usize].f64()).sum();
            if p <= 0.0 {
                zeros.push((d as u32, w));
            }
            ll += c as f64 * p.ln();
            tokens += c as u64;
        }
    }
    if !zeros.is_empty() {
        warn!("{} holdout tokens have zero predictive probability, first {:?}", zeros.len(), zeros[0]);
    }
    let perplexity = if tokens == 0 {
        f64::NAN
    } else if zeros.is_empty() {
        (-ll / tokens as f64).exp()
    } else {
        f64::INFINITY
    };
    Ok(PerplexityReport {
        perplexity,
        log_likelihood: ll,
        tokens,
        excluded_docs: excluded,
        zero_probability: zeros,
    })
}

/// Fold-in on `observed` then perplexity on `holdout`.
pub fn fold_in_perplexity<T: Scalar>(
    model: &DenseTopicModel<T>,
    observed: &Corpus,
    holdout: &Corpus,
    lambda: &[T],
    sweeps: usize,
    average: bool,
    seed: u64,
) -> Result<PerplexityReport> {
    let thetas = fold_in_corpus(model, observed, lambda, sweeps, average, seed)?;
    perplexity(model, &thetas, holdout)
}

/// Writes one libsvm line `label idx:val ...` per row of `theta` (K columns),
/// with 1-based indices and zero entries omitted. Missing labels are written
/// as 0.
pub fn export_features<T: Scalar, W: Write>(theta: &[T], k: usize, labels: Option<&[f64]>, mut out: W) -> Result<()> {
    let rows = theta.len() / k.max(1);
    if let Some(l) = labels {
        if l.len() != rows {
            return Err(Error::Consistency(format!("{} labels for {rows} documents", l.len())));
        }
    }
    for (d, row) in theta.chunks(k.max(1)).enumerate() {
        let label = labels.map_or(0.0, |l| l[d]);
        let mut line = label.to_string();
        for (i, &x) in row.iter().enumerate() {
            if x != T::zero() {
                line.push_str(&format!(" {}:{}", i + 1, x));
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Parses libsvm lines into `(label, [(0-based index, value)])`.
pub fn parse_features<R: BufRead>(input: R) -> Result<Vec<(f64, Vec<(usize, f64)>)>> {
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let bad = |msg: &str| Error::Parse {
            line: i + 1,
            msg: msg.to_string(),
        };
        let mut parts = line.split_whitespace();
        let Some(label) = parts.next() else {
            continue;
        };
        let label = label.parse().map_err(|_| bad("bad label"))?;
        let feats = parts
            .map(|p| {
                let (idx, val) = p.split_once(':').ok_or_else(|| bad("expected idx:val"))?;
                let idx: usize = idx.parse().map_err(|_| bad("bad index"))?;
                let val: f64 = val.parse().map_err(|_| bad("bad value"))?;
                if idx == 0 {
                    return Err(bad("indices are 1-based"));
                }
                Ok((idx - 1, val))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((label, feats));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_row_decodes_uniform() {
        let mut w = NetworkWeights::<f64>::zeros(2, 4, 1);
        w.alpha_row_mut(0).iter_mut().for_each(|m| *m = 3.0);
        let hp = Hyperparams::symmetric(2, 4, 1.0, 1.0).unwrap();
        let m = weights_to_model(&w, &hp, Decoding::Normalized).unwrap();
        assert!(m.phi_row(0).iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn counts_decoding_is_smoothed_frequency() {
        let mut w = NetworkWeights::<f64>::zeros(1, 2, 0);
        *w.alpha_mut(0, 0) = 4f64.ln();
        *w.alpha_mut(0, 1) = 2f64.ln();
        let hp = Hyperparams::symmetric(1, 2, 1.0, 1.0).unwrap();
        let m = weights_to_model(&w, &hp, Decoding::Counts).unwrap();
        assert!((m.phi[0] - 4.0 / 6.0).abs() < 1e-15);
        assert!((m.phi[1] - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_rejected() {
        let mut w = NetworkWeights::<f64>::zeros(1, 2, 0);
        *w.alpha_mut(0, 1) = f64::NAN;
        let hp = Hyperparams::symmetric(1, 2, 1.0, 1.0).unwrap();
        assert!(weights_to_model(&w, &hp, Decoding::Normalized).is_err());
    }

    #[test]
    fn perplexity_hand_cases() {
        let holdout = Corpus::from_docs(2, vec![vec![(1, 2)]], None).unwrap();
        let model = DenseTopicModel::<f64> {
            k: 2,
            v: 2,
            d: 0,
            phi: vec![0.8, 0.2, 0.4, 0.6],
            theta: vec![],
        };
        let r = perplexity(&model, &[Some(vec![0.5, 0.5])], &holdout).unwrap();
        assert!((r.perplexity - 2.5).abs() < 1e-12);
        let one_hot = DenseTopicModel::<f64> {
            k: 2,
            v: 2,
            d: 0,
            phi: vec![0.0, 1.0, 0.5, 0.5],
            theta: vec![],
        };
        let r = perplexity(&one_hot, &[Some(vec![1.0, 0.0])], &holdout).unwrap();
        assert!((r.perplexity - 1.0).abs() < 1e-12);
        let r = perplexity(&one_hot, &[Some(vec![0.0, 1.0])], &Corpus::from_docs(2, vec![vec![(0, 1)]], None).unwrap()).unwrap();
        assert!(r.perplexity.is_finite());
        let dead = DenseTopicModel::<f64> {
            k: 1,
            v: 2,
            d: 0,
            phi: vec![0.0, 1.0],
            theta: vec![],
        };
        let r = perplexity(&dead, &[Some(vec![1.0])], &Corpus::from_docs(2, vec![vec![(0, 1)]], None).unwrap()).unwrap();
        assert!(r.perplexity.is_infinite());
        assert_eq!(r.zero_probability, vec![(0, 0)]);
    }

    #[test]
    fn single_topic_fold_in() {
        let m = DenseTopicModel::<f64>::uniform(1, 3, 0);
        let t = fold_in_theta(&m, &[0, 2, 2], &[0.5], 10, false, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(t, vec![1.0]);
    }

    #[test]
    fn features_format_and_round_trip() {
        let mut buf = Vec::new();
        export_features(&[0.25f64, 0.75, 0.0, 1.0], 2, Some(&[1.0, -1.0]), &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "1 1:0.25 2:0.75\n-1 2:1\n");
        let rows = parse_features(s.as_bytes()).unwrap();
        assert_eq!(rows[0], (1.0, vec![(0, 0.25), (1, 0.75)]));
        assert!(export_features(&[0.5f64, 0.5], 2, Some(&[]), Vec::new()).is_err());
    }
}
