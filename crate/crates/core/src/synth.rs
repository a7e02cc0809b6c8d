//! Seed-deterministic LDA forward sampler with planted topics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Entry};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub topics: usize,
    pub vocab_size: usize,
    pub docs: usize,
    pub doc_len: usize,
    /// Symmetric Dirichlet concentration for the planted topic-word rows.
    pub topic_concentration: f64,
    /// Symmetric Dirichlet concentration for the document mixtures.
    pub doc_concentration: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            topics: 3,
            vocab_size: 100,
            docs: 200,
            doc_len: 100,
            topic_concentration: 0.1,
            doc_concentration: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// The small corpus bundled with the CLI: D=20, V=50, K=3.
    pub fn toy() -> Self {
        Self {
            topics: 3,
            vocab_size: 50,
            docs: 20,
            doc_len: 40,
            seed: 20,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// Planted K x V topic-word distributions.
    pub phi: Vec<Vec<f64>>,
    /// Planted D x K document mixtures.
    pub theta: Vec<Vec<f64>>,
}

fn dirichlet<R: Rng>(rng: &mut R, dim: usize, conc: f64) -> Vec<f64> {
    let g = Gamma::new(conc, 1.0).expect("positive concentration");
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| g.sample(rng)).collect();
        let s: f64 = v.iter().sum();
        if s > 0.0 && s.is_finite() {
            v.iter_mut().for_each(|x| *x /= s);
            return v;
        }
    }
}

fn categorical<R: Rng>(rng: &mut R, p: &[f64]) -> usize {
    let mut u = rng.random::<f64>();
    for (i, &pi) in p.iter().enumerate() {
        if u < pi {
            return i;
        }
        u -= pi;
    }
    p.len() - 1
}

pub fn generate(cfg: &SynthConfig) -> Result<SyntheticCorpus> {
    if cfg.topics == 0 || cfg.vocab_size == 0 || cfg.docs == 0 || cfg.doc_len == 0 {
        return Err(Error::Config("synthetic corpus dimensions must be positive".into()));
    }
    if cfg.topic_concentration <= 0.0 || cfg.doc_concentration <= 0.0 {
        return Err(Error::Config("Dirichlet concentrations must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let phi: Vec<Vec<f64>> = (0..cfg.topics).map(|_| dirichlet(&mut rng, cfg.vocab_size, cfg.topic_concentration)).collect();
    let mut theta = Vec::with_capacity(cfg.docs);
    let mut docs: Vec<Vec<Entry>> = Vec::with_capacity(cfg.docs);
    for _ in 0..cfg.docs {
        let th = dirichlet(&mut rng, cfg.topics, cfg.doc_concentration);
        let mut counts = vec![0u32; cfg.vocab_size];
        for _ in 0..cfg.doc_len {
            let z = categorical(&mut rng, &th);
            let w = categorical(&mut rng, &phi[z]);
            counts[w] += 1;
        }
        docs.push(counts.into_iter().enumerate().filter(|&(_, c)| c > 0).map(|(w, c)| (w as u32, c)).collect());
        theta.push(th);
    }
    let vocab = (0..cfg.vocab_size).map(|w| format!("word{w}")).collect();
    Ok(SyntheticCorpus {
        corpus: Corpus::from_docs(cfg.vocab_size, docs, Some(vocab))?,
        phi,
        theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_deterministic_and_shaped() {
        let cfg = SynthConfig::toy();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.corpus.num_docs(), 20);
        assert_eq!(a.corpus.vocab_size(), 50);
        assert_eq!(a.corpus.total_tokens(), 20 * 40);
        for row in &a.phi {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
