//! Fan-in limited networks.
//!
//! Each topic neuron keeps individual synapses for its most probable words,
//! one shared synapse for every other word, and individual synapses for a
//! small set of resident documents. The remaining document columns live in an
//! external fixed-record file and are fetched per token.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::online::{EventDirection, LearningMode, StepSchedule, StepSizes};
use crate::scalar::{log_sum_exp, Scalar};
use crate::snn::{race_sample, Hyperparams, NetworkWeights};

pub const MAX_FAN_IN: usize = 256;
pub const DEFAULT_TOP_WORDS: usize = 200;
pub const DEFAULT_RESIDENT_DOCS: usize = 50;

const STORE_MAGIC: &[u8; 8] = b"SPKMBETA";
const STORE_VERSION: u32 = 1;
const STORE_HEADER: u64 = 8 + 4 + 8 + 8;

/// Random-access file of `M^β` columns: a header (magic, version, K, D)
/// followed by one record of K little-endian `f64` per document.
#[derive(Debug)]
pub struct ExternalStore {
    file: File,
    path: PathBuf,
    k: usize,
    d: usize,
}

impl ExternalStore {
    pub fn create(path: &Path, k: usize, d: usize) -> Result<Self> {
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut header = Vec::with_capacity(STORE_HEADER as usize);
        header.extend_from_slice(STORE_MAGIC);
        header.extend_from_slice(&STORE_VERSION.to_le_bytes());
        header.extend_from_slice(&(k as u64).to_le_bytes());
        header.extend_from_slice(&(d as u64).to_le_bytes());
        file.write_all(&header).map_err(|e| Error::io(path, e))?;
        file.set_len(STORE_HEADER + (k * d * 8) as u64).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
            k,
            d,
        })
    }

    pub fn open(path: &Path) -> Result<Self> {
        let mut file = OpenOptions::new().read(true).write(true).open(path).map_err(|e| Error::io(path, e))?;
        let mut header = [0u8; STORE_HEADER as usize];
        file.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
        if &header[..8] != STORE_MAGIC {
            return Err(Error::Checkpoint(format!("{} is not a document store", path.display())));
        }
        let version = u32::from_le_bytes(header[8..12].try_into().expect("4"));
        if version != STORE_VERSION {
            return Err(Error::Checkpoint(format!("unsupported store version {version}")));
        }
        let k = u64::from_le_bytes(header[12..20].try_into().expect("8")) as usize;
        let d = u64::from_le_bytes(header[20..28].try_into().expect("8")) as usize;
        Ok(Self {
            file,
            path: path.to_path_buf(),
            k,
            d,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn offset(&self, doc: usize) -> u64 {
        STORE_HEADER + (doc * self.k * 8) as u64
    }

    pub fn read<T: Scalar>(&mut self, doc: usize, out: &mut [T]) -> Result<()> {
        let store_err = |source| Error::Store { doc: doc as u64, source };
        if doc >= self.d {
            return Err(store_err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "document out of range")));
        }
        let mut buf = vec![0u8; self.k * 8];
        self.file.seek(SeekFrom::Start(self.offset(doc))).map_err(store_err)?;
        self.file.read_exact(&mut buf).map_err(store_err)?;
        for (o, b) in out.iter_mut().zip(buf.chunks_exact(8)) {
            *o = T::of(f64::from_le_bytes(b.try_into().expect("8")));
        }
        Ok(())
    }

    pub fn write<T: Scalar>(&mut self, doc: usize, col: &[T]) -> Result<()> {
        let store_err = |source| Error::Store { doc: doc as u64, source };
        if doc >= self.d {
            return Err(store_err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "document out of range")));
        }
        let buf: Vec<u8> = col.iter().flat_map(|x| x.f64().to_le_bytes()).collect();
        self.file.seek(SeekFrom::Start(self.offset(doc))).map_err(store_err)?;
        self.file.write_all(&buf).map_err(store_err)
    }
}

/// Summary of a pruned network, suitable for JSON export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneManifest {
    pub top_words: Vec<Vec<u32>>,
    pub tied: Vec<Option<f64>>,
    pub resident_docs: Vec<u32>,
    pub fan_in: Vec<usize>,
    pub store: Option<PathBuf>,
}

#[derive(Debug)]
pub struct PrunedNetwork<T> {
    k: usize,
    v: usize,
    d: usize,
    /// K x V; non-top entries hold the topic's tied value.
    m_alpha: Vec<T>,
    is_top: Vec<bool>,
    top_words: Vec<Vec<u32>>,
    tied: Vec<Option<T>>,
    resident: Vec<u32>,
    /// Document -> slot in `resident_cols`.
    slot: Vec<Option<usize>>,
    resident_cols: Vec<T>,
    store: Option<ExternalStore>,
}

fn fan_in_error(z: usize, fan_in: usize) -> Error {
    Error::Invariant(format!("topic {z} has fan-in {fan_in} > {MAX_FAN_IN}"))
}

/// Prunes trained weights.
///
/// Per topic, the `top_words` words with the largest `φ_zw` (softmax of the
/// `M^α` row; ties by word id) keep their synapses and the rest share
/// `log(p / (V − top_words))`, where `p` is their total probability. The
/// `resident_docs` longest documents (ties by id) keep in-memory columns;
/// the others are written to `store_path`.
///
/// With `V ≤ top_words` the word side is left unpruned and a warning is
/// logged.
pub fn prune<T: Scalar>(weights: &NetworkWeights<T>, corpus: &Corpus, top_words: usize, resident_docs: usize, store_path: &Path) -> Result<PrunedNetwork<T>> {
    let (k, v, d) = (weights.num_topics(), weights.vocab_size(), weights.num_docs());
    if corpus.num_docs() != d || corpus.vocab_size() != v {
        return Err(Error::Consistency("corpus does not match the weights".into()));
    }
    let mut m_alpha = weights.m_alpha().to_vec();
    let mut is_top = vec![true; k * v];
    let mut tops = Vec::with_capacity(k);
    let mut tied = Vec::with_capacity(k);
    if v <= top_words {
        warn!("vocabulary size {v} <= top words {top_words}; word synapses left unpruned");
        tops = (0..k).map(|_| (0..v as u32).collect()).collect();
        tied = vec![None; k];
    } else {
        for z in 0..k {
            let row = weights.alpha_row(z);
            let lse = log_sum_exp(row);
            let mut order: Vec<u32> = (0..v as u32).collect();
            order.sort_by(|&a, &b| row[b as usize].partial_cmp(&row[a as usize]).expect("finite weights").then(a.cmp(&b)));
            let (top, rest) = order.split_at(top_words);
            let p: f64 = rest.iter().map(|&w| (row[w as usize] - lse).f64().exp()).sum();
            let value = T::of((p / (v - top_words) as f64).ln());
            for &w in rest {
                m_alpha[z * v + w as usize] = value;
                is_top[z * v + w as usize] = false;
            }
            let mut top = top.to_vec();
            top.sort_unstable();
            tops.push(top);
            tied.push(Some(value));
        }
    }
    let mut by_len: Vec<u32> = (0..d as u32).collect();
    by_len.sort_by(|&a, &b| corpus.doc_len(b as usize).cmp(&corpus.doc_len(a as usize)).then(a.cmp(&b)));
    let mut resident: Vec<u32> = by_len.into_iter().take(resident_docs).collect();
    resident.sort_unstable();
    let mut slot = vec![None; d];
    let mut resident_cols = Vec::with_capacity(resident.len() * k);
    for (i, &doc) in resident.iter().enumerate() {
        slot[doc as usize] = Some(i);
        resident_cols.extend_from_slice(weights.beta_col(doc as usize));
    }
    let store = if resident.len() < d {
        let mut s = ExternalStore::create(store_path, k, d)?;
        for doc in (0..d).filter(|&doc| slot[doc].is_none()) {
            s.write(doc, weights.beta_col(doc))?;
        }
        Some(s)
    } else {
        None
    };
    let net = PrunedNetwork {
        k,
        v,
        d,
        m_alpha,
        is_top,
        top_words: tops,
        tied,
        resident,
        slot,
        resident_cols,
        store,
    };
    net.check_fan_in()?;
    Ok(net)
}

impl<T: Scalar> PrunedNetwork<T> {
    pub fn num_topics(&self) -> usize {
        self.k
    }

    pub fn top_words(&self, z: usize) -> &[u32] {
        &self.top_words[z]
    }

    pub fn tied(&self, z: usize) -> Option<T> {
        self.tied[z]
    }

    pub fn resident_docs(&self) -> &[u32] {
        &self.resident
    }

    pub fn alpha_row(&self, z: usize) -> &[T] {
        &self.m_alpha[z * self.v..(z + 1) * self.v]
    }

    /// Individual word synapses, the tied synapse and resident document
    /// synapses of topic `z`.
    pub fn fan_in(&self, z: usize) -> usize {
        self.top_words[z].len() + usize::from(self.tied[z].is_some()) + self.resident.len()
    }

    pub fn check_fan_in(&self) -> Result<()> {
        match (0..self.k).map(|z| (z, self.fan_in(z))).find(|&(_, f)| f > MAX_FAN_IN) {
            Some((z, f)) if self.tied.iter().any(Option::is_some) => Err(fan_in_error(z, f)),
            Some((z, f)) => {
                warn!("unpruned topic {z} has fan-in {f} > {MAX_FAN_IN}");
                Ok(())
            }
            None => Ok(()),
        }
    }

    pub fn manifest(&self) -> PruneManifest {
        PruneManifest {
            top_words: self.top_words.clone(),
            tied: self.tied.iter().map(|t| t.map(|x| x.f64())).collect(),
            resident_docs: self.resident.clone(),
            fan_in: (0..self.k).map(|z| self.fan_in(z)).collect(),
            store: self.store.as_ref().map(|s| s.path().to_path_buf()),
        }
    }

    fn load_col(&mut self, d: usize, out: &mut [T]) -> Result<()> {
        match self.slot[d] {
            Some(i) => {
                out.copy_from_slice(&self.resident_cols[i * self.k..(i + 1) * self.k]);
                Ok(())
            }
            None => self.store.as_mut().expect("store holds non-resident columns").read(d, out),
        }
    }

    fn save_col(&mut self, d: usize, col: &[T]) -> Result<()> {
        match self.slot[d] {
            Some(i) => {
                self.resident_cols[i * self.k..(i + 1) * self.k].copy_from_slice(col);
                Ok(())
            }
            None => self.store.as_mut().expect("store holds non-resident columns").write(d, col),
        }
    }

    /// Dense weights with tied entries expanded and all columns fetched.
    pub fn to_weights(&mut self) -> Result<NetworkWeights<T>> {
        let mut m_beta = vec![T::zero(); self.d * self.k];
        for d in 0..self.d {
            let mut col = vec![T::zero(); self.k];
            self.load_col(d, &mut col)?;
            m_beta[d * self.k..(d + 1) * self.k].copy_from_slice(&col);
        }
        NetworkWeights::from_parts(self.k, self.v, self.d, self.m_alpha.clone(), m_beta, None)
    }
}

/// Continues ed-SpikeLDA training on a pruned network. Tied synapses stay
/// fixed; top-word synapses and document columns adapt, non-resident
/// columns going through the external store. `iterations` counts token
/// events.
pub fn continue_training_pruned<T: Scalar, R: Rng + ?Sized>(
    mut net: PrunedNetwork<T>,
    corpus: &Corpus,
    hp: &Hyperparams<T>,
    steps: (StepSchedule, StepSchedule),
    iterations: u64,
    rng: &mut R,
) -> Result<PrunedNetwork<T>> {
    hp.require_positive_kappa()?;
    let (k, v) = (net.k, net.v);
    // A view with one document column lets the shared event rule run
    // unchanged on the fetched column.
    let mut view = NetworkWeights::from_parts(k, v, 1, net.m_alpha.clone(), vec![T::zero(); k], None)?;
    let mut steps = StepSizes::new(steps.0, steps.1, &NetworkWeights::<T>::zeros(k, v, net.d));
    let mut dir = EventDirection::new(k, v);
    let mut col = vec![T::zero(); k];
    let mut u = vec![T::zero(); k];
    for it in 1..=iterations {
        let (w, d) = corpus.sample_token(rng)?;
        let (w, d) = (w as usize, d as usize);
        net.load_col(d, &mut col)?;
        view.beta_col_mut(0).copy_from_slice(&col);
        for (z, uz) in u.iter_mut().enumerate() {
            *uz = view.alpha(z, w) + col[z];
        }
        let z = race_sample(&u, rng);
        dir.fill(&view, w, 0, z, hp, corpus.doc_len(d), LearningMode::Map);
        for (ww, (m, &g)) in view.alpha_row_mut(z).iter_mut().zip(&dir.alpha_row).enumerate() {
            if net.is_top[z * v + ww] {
                let eta = steps.alpha.eta(z * v + ww, g.f64(), m.f64());
                *m += T::of(eta) * g;
            }
        }
        for (zz, (m, &g)) in col.iter_mut().zip(&dir.beta_col).enumerate() {
            let eta = steps.beta.eta(d * k + zz, g.f64(), m.f64());
            *m += T::of(eta) * g;
        }
        steps.alpha.tick();
        steps.beta.tick();
        if !view.alpha_row(z).iter().chain(&col).all(|x| x.is_finite()) {
            return Err(Error::NonFinite {
                what: "pruned network weights",
                iteration: it,
            });
        }
        net.save_col(d, &col)?;
    }
    net.m_alpha.copy_from_slice(view.m_alpha());
    net.check_fan_in()?;
    Ok(net)
}
