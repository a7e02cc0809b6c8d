//! Versioned checkpoint container for network weights and hyperparameters.
//!
//! Two encodings share one logical layout: pretty JSON, and a little-endian
//! binary form that round-trips bit-exactly.
//!
//! Binary layout:
//! ```text
//! magic "SPKLDACK" | version u32 | scalar width u8 | encoding u8 | has_b u8
//! K u64 | V u64 | D u64
//! M^α (K*V scalars, topic-major) | M^β (D*K scalars, document-major) | b (K, if has_b)
//! λ (K) | φ (V)
//! meta length u64 | meta JSON bytes
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::SplitSpec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::snn::{Hyperparams, NetworkWeights};

pub const MAGIC: &[u8; 8] = b"SPKLDACK";
pub const VERSION: u32 = 1;

/// How the weights map back onto topic-model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightEncoding {
    /// `exp M = count + prior`, with self-excitation `b` (CGS, SpikeCGS).
    Counts,
    /// Normalized `M^α`, `M^β` columns summing to κ (SpikeLDA).
    Map,
    /// Normalized `M^α`, `M^β` columns summing to one (SpikePLSI).
    Plsi,
    /// Normalized `M^α`; `exp M^β = count + λ` from the last semi-CGS visit.
    Semi,
}

impl WeightEncoding {
    fn code(self) -> u8 {
        match self {
            WeightEncoding::Counts => 0,
            WeightEncoding::Map => 1,
            WeightEncoding::Plsi => 2,
            WeightEncoding::Semi => 3,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        Ok(match c {
            0 => WeightEncoding::Counts,
            1 => WeightEncoding::Map,
            2 => WeightEncoding::Plsi,
            3 => WeightEncoding::Semi,
            _ => return Err(Error::Checkpoint(format!("unknown encoding tag {c}"))),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub algorithm: String,
    pub iterations: u64,
    pub seed: u64,
    pub split: Option<SplitSpec>,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Checkpoint<T> {
    pub version: u32,
    pub encoding: WeightEncoding,
    pub weights: NetworkWeights<T>,
    pub hyperparams: Hyperparams<T>,
    pub meta: CheckpointMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointFormat {
    Json,
    Binary,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(encoding: WeightEncoding, weights: NetworkWeights<T>, hyperparams: Hyperparams<T>, meta: CheckpointMeta) -> Self {
        Self {
            version: VERSION,
            encoding,
            weights,
            hyperparams,
            meta,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let w = &self.weights;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(T::TAG);
        out.push(self.encoding.code());
        out.push(w.b().is_some() as u8);
        for n in [w.num_topics(), w.vocab_size(), w.num_docs()] {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        let arrays = w
            .m_alpha()
            .iter()
            .chain(w.m_beta())
            .chain(w.b().into_iter().flatten())
            .chain(self.hyperparams.lambda())
            .chain(self.hyperparams.phi());
        for x in arrays {
            x.write_le(&mut out);
        }
        let meta = serde_json::to_vec(&self.meta).expect("meta serializes");
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4"));
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let tag = r.take(1)?[0];
        if tag != T::TAG {
            return Err(Error::Checkpoint(format!("scalar width {tag} does not match requested width {}", T::TAG)));
        }
        let encoding = WeightEncoding::from_code(r.take(1)?[0])?;
        let has_b = r.take(1)?[0] != 0;
        let k = r.u64()? as usize;
        let v = r.u64()? as usize;
        let d = r.u64()? as usize;
        let mut read = |n: usize| -> Result<Vec<T>> {
            let width = T::TAG as usize;
            let raw = r.take(n * width)?;
            Ok(raw.chunks_exact(width).map(T::read_le).collect())
        };
        let m_alpha = read(k * v)?;
        let m_beta = read(k * d)?;
        let b = if has_b { Some(read(k)?) } else { None };
        let lambda = read(k)?;
        let phi = read(v)?;
        let meta_len = r.u64()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?).map_err(|e| Error::Checkpoint(format!("meta: {e}")))?;
        Ok(Self {
            version,
            encoding,
            weights: NetworkWeights::from_parts(k, v, d, m_alpha, m_beta, b)?,
            hyperparams: Hyperparams::new(lambda, phi)?,
            meta,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path, format: CheckpointFormat) -> Result<()> {
        let bytes = match format {
            CheckpointFormat::Json => self.to_json().into_bytes(),
            CheckpointFormat::Binary => self.to_bytes(),
        };
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Loads either encoding, detected from the leading bytes.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(MAGIC) {
            Self::from_bytes(&bytes)
        } else {
            let s = std::str::from_utf8(&bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
            Self::from_json(s)
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }
}
