//! Bag-of-words corpora: UCI ingestion, fold-in splits and token sampling.
//!
//! Documents are stored as a CSR-style sparse count matrix of
//! `(word_id, multiplicity)` pairs. The per-token expansion needed by the
//! Gibbs samplers is built lazily on first use.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use flate2::read::GzDecoder;
use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One document entry: a word id and how many times it occurs.
pub type Entry = (u32, u32);

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    vocab_size: usize,
    doc_ptr: Vec<usize>,
    entries: Vec<Entry>,
    /// Running token count up to and including each entry.
    cum: Vec<u64>,
    vocab: Vec<String>,
    tokens: OnceLock<TokenIndex>,
}

/// Flat per-token view: token `t` is word `words[t]` in document `docs[t]`.
/// Tokens of document `d` occupy `doc_offsets[d]..doc_offsets[d + 1]`.
#[derive(Debug, Clone, Default)]
pub struct TokenIndex {
    pub words: Vec<u32>,
    pub docs: Vec<u32>,
    pub doc_offsets: Vec<usize>,
}

impl TokenIndex {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn doc_range(&self, d: usize) -> std::ops::Range<usize> {
        self.doc_offsets[d]..self.doc_offsets[d + 1]
    }
}

impl Corpus {
    /// Builds a corpus from per-document entry lists. Zero multiplicities are
    /// dropped and repeated word ids within a document are merged.
    pub fn from_docs(vocab_size: usize, docs: Vec<Vec<Entry>>, vocab: Option<Vec<String>>) -> Result<Self> {
        let vocab = match vocab {
            Some(v) if v.len() != vocab_size => return Err(Error::Consistency(format!("vocabulary has {} words, expected {vocab_size}", v.len()))),
            Some(v) => v,
            None => (0..vocab_size).map(|i| format!("w{i}")).collect(),
        };
        let mut doc_ptr = Vec::with_capacity(docs.len() + 1);
        let mut entries = Vec::new();
        let mut cum = Vec::new();
        let mut running = 0u64;
        doc_ptr.push(0);
        for (d, mut doc) in docs.into_iter().enumerate() {
            doc.retain(|&(_, c)| c > 0);
            doc.sort_unstable_by_key(|&(w, _)| w);
            let start = entries.len();
            for (w, c) in doc {
                if w as usize >= vocab_size {
                    return Err(Error::Range {
                        what: "word",
                        id: w as u64,
                        limit: vocab_size as u64,
                        line: d,
                    });
                }
                match entries[start..].last_mut() {
                    Some((lw, lc)) if *lw == w => {
                        *lc += c;
                        *cum.last_mut().expect("entry") += c as u64;
                    }
                    _ => {
                        entries.push((w, c));
                        cum.push(running + c as u64);
                    }
                }
                running += c as u64;
            }
            doc_ptr.push(entries.len());
        }
        Ok(Self {
            vocab_size,
            doc_ptr,
            entries,
            cum,
            vocab,
            tokens: OnceLock::new(),
        })
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ptr.len() - 1
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn total_tokens(&self) -> u64 {
        self.cum.last().copied().unwrap_or(0)
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn doc(&self, d: usize) -> &[Entry] {
        &self.entries[self.doc_ptr[d]..self.doc_ptr[d + 1]]
    }

    pub fn doc_len(&self, d: usize) -> u64 {
        self.doc(d).iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn doc_lengths(&self) -> Vec<u64> {
        (0..self.num_docs()).map(|d| self.doc_len(d)).collect()
    }

    pub fn docs(&self) -> impl Iterator<Item = &[Entry]> + '_ {
        (0..self.num_docs()).map(move |d| self.doc(d))
    }

    /// Word ids of document `d`, one per token, in ascending word order.
    pub fn doc_tokens(&self, d: usize) -> Vec<u32> {
        self.doc(d).iter().flat_map(|&(w, c)| std::iter::repeat_n(w, c as usize)).collect()
    }

    pub fn tokens(&self) -> &TokenIndex {
        self.tokens.get_or_init(|| {
            let n = self.total_tokens() as usize;
            let mut words = Vec::with_capacity(n);
            let mut docs = Vec::with_capacity(n);
            let mut doc_offsets = Vec::with_capacity(self.num_docs() + 1);
            doc_offsets.push(0);
            for d in 0..self.num_docs() {
                for &(w, c) in self.doc(d) {
                    for _ in 0..c {
                        words.push(w);
                        docs.push(d as u32);
                    }
                }
                doc_offsets.push(words.len());
            }
            TokenIndex { words, docs, doc_offsets }
        })
    }

    /// Draws one token instance uniformly, i.e. a sample `(w, d)` from the
    /// empirical co-occurrence distribution `N_wd / N`.
    pub fn sample_token<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(u32, u32)> {
        let n = self.total_tokens();
        if n == 0 {
            return Err(Error::EmptyCorpus);
        }
        let t = rng.random_range(0..n);
        let e = self.cum.partition_point(|&c| c <= t);
        let d = self.doc_ptr.partition_point(|&p| p <= e) - 1;
        Ok((self.entries[e].0, d as u32))
    }

    /// Empirical co-occurrence probabilities `(w, d, N_wd / N)`.
    pub fn pi_wd(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        let n = self.total_tokens() as f64;
        (0..self.num_docs()).flat_map(move |d| self.doc(d).iter().map(move |&(w, c)| (w, d as u32, c as f64 / n)))
    }

    /// Token-weighted document probability `N_d / N`.
    pub fn pi_d(&self, d: usize) -> f64 {
        self.doc_len(d) as f64 / self.total_tokens() as f64
    }

    /// Corpus restricted to the given documents, renumbered in the given order.
    pub fn subset(&self, ids: &[u32]) -> Corpus {
        let docs = ids.iter().map(|&d| self.doc(d as usize).to_vec()).collect();
        Corpus::from_docs(self.vocab_size, docs, Some(self.vocab.clone())).expect("subset of a valid corpus is valid")
    }

    /// Drops zero-length documents. Returns the filtered corpus and the
    /// original ids of the kept documents.
    pub fn without_empty_docs(&self) -> (Corpus, Vec<u32>) {
        let kept: Vec<u32> = (0..self.num_docs() as u32).filter(|&d| self.doc_len(d as usize) > 0).collect();
        if kept.len() < self.num_docs() {
            warn!("dropping {} empty documents", self.num_docs() - kept.len());
        }
        (self.subset(&kept), kept)
    }

    /// Word frequencies over the whole corpus.
    pub fn unigram_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.vocab_size];
        for &(w, c) in &self.entries {
            counts[w as usize] += c as u64;
        }
        counts
    }
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.vocab_size == other.vocab_size && self.doc_ptr == other.doc_ptr && self.entries == other.entries && self.vocab == other.vocab
    }
}

fn open_maybe_gz(path: &Path) -> Result<Box<dyn BufRead>> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 2];
    let n = f.read(&mut magic).map_err(|e| Error::io(path, e))?;
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::new(GzDecoder::new(f))))
    } else {
        Ok(Box::new(BufReader::new(f)))
    }
}

/// Reads `docword.<name>.txt` / `vocab.<name>.txt` pairs; either file may be
/// gzip-compressed.
pub fn read_uci(docword: &Path, vocab: Option<&Path>) -> Result<Corpus> {
    let dw = open_maybe_gz(docword)?;
    match vocab {
        Some(p) => parse_uci(dw, Some(open_maybe_gz(p)?)),
        None => parse_uci(dw, None::<&[u8]>),
    }
}

fn header_value(lines: &mut impl Iterator<Item = (usize, std::io::Result<String>)>, name: &str) -> Result<u64> {
    loop {
        let Some((i, line)) = lines.next() else {
            return Err(Error::Parse {
                line: 0,
                msg: format!("missing header value {name}"),
            });
        };
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        return t.parse().map_err(|_| Error::Parse {
            line: i + 1,
            msg: format!("expected integer {name}, found {t:?}"),
        });
    }
}

/// Parses the UCI bag-of-words format: three header lines `D`, `W`, `NNZ`,
/// then `NNZ` lines of `docID wordID count` with 1-based ids.
pub fn parse_uci<R1: BufRead, R2: BufRead>(docword: R1, vocab: Option<R2>) -> Result<Corpus> {
    let mut lines = docword.lines().enumerate();
    let d = header_value(&mut lines, "D")? as usize;
    let v = header_value(&mut lines, "W")? as usize;
    let nnz = header_value(&mut lines, "NNZ")?;
    let mut docs: Vec<Vec<Entry>> = vec![Vec::new(); d];
    let mut seen = 0u64;
    for (i, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let mut it = t.split_whitespace().map(|s| {
            s.parse::<u64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("expected integer, found {s:?}"),
            })
        });
        let (Some(di), Some(wi), Some(c), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(Error::Parse {
                line: lineno,
                msg: "expected `docID wordID count`".into(),
            });
        };
        let (di, wi, c) = (di?, wi?, c?);
        if di == 0 || di as usize > d {
            return Err(Error::Range {
                what: "document",
                id: di,
                limit: d as u64,
                line: lineno,
            });
        }
        if wi == 0 || wi as usize > v {
            return Err(Error::Range {
                what: "word",
                id: wi,
                limit: v as u64,
                line: lineno,
            });
        }
        let c = u32::try_from(c).map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("count {c} too large"),
        })?;
        docs[di as usize - 1].push((wi as u32 - 1, c));
        seen += 1;
    }
    if seen != nnz {
        return Err(Error::Consistency(format!("header declares {nnz} entries, found {seen}")));
    }
    let vocab = match vocab {
        Some(r) => {
            let words: Vec<String> = r.lines().map(|l| l.map(|s| s.trim().to_string())).collect::<std::io::Result<_>>()?;
            let words: Vec<String> = words.into_iter().filter(|s| !s.is_empty()).collect();
            Some(words)
        }
        None => None,
    };
    Corpus::from_docs(v, docs, vocab)
}

/// Writes the corpus back out in UCI format (entries sorted by document then word).
pub fn write_uci<W1: Write, W2: Write>(corpus: &Corpus, mut docword: W1, vocab: Option<W2>) -> Result<()> {
    writeln!(docword, "{}", corpus.num_docs())?;
    writeln!(docword, "{}", corpus.vocab_size())?;
    writeln!(docword, "{}", corpus.entries.len())?;
    for d in 0..corpus.num_docs() {
        for &(w, c) in corpus.doc(d) {
            writeln!(docword, "{} {} {}", d + 1, w + 1, c)?;
        }
    }
    if let Some(mut out) = vocab {
        for word in corpus.vocab() {
            writeln!(out, "{word}")?;
        }
    }
    Ok(())
}

pub fn write_uci_files(corpus: &Corpus, dir: &Path, name: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let dw = dir.join(format!("docword.{name}.txt"));
    let vp = dir.join(format!("vocab.{name}.txt"));
    let f1 = File::create(&dw).map_err(|e| Error::io(&dw, e))?;
    let f2 = File::create(&vp).map_err(|e| Error::io(&vp, e))?;
    write_uci(corpus, std::io::BufWriter::new(f1), Some(std::io::BufWriter::new(f2)))
}

/// Train / fold-in test partition of a corpus.
#[derive(Debug, Clone)]
pub struct FoldInSplit {
    pub train: Corpus,
    pub test_observed: Corpus,
    pub test_holdout: Corpus,
    /// Original ids of the training documents.
    pub train_ids: Vec<u32>,
    /// Original ids of the test documents (same order in both halves).
    pub test_ids: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

/// Splits documents into train and test sets, then splits every test
/// document's tokens into an observed half and a holdout half.
///
/// Splitting is by token instance; an odd token goes to the observed half.
/// Test documents with fewer than two tokens are excluded, as are empty
/// documents.
pub fn split_fold_in(corpus: &Corpus, test_fraction: f64, seed: u64) -> Result<FoldInSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<u32> = (0..corpus.num_docs() as u32)
        .filter(|&d| {
            let keep = corpus.doc_len(d as usize) > 0;
            if !keep {
                warn!("document {d} is empty and is dropped from the split");
            }
            keep
        })
        .collect();
    ids.shuffle(&mut rng);
    let n_test = (ids.len() as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test >= ids.len() {
        return Err(Error::Config(format!(
            "test fraction {test_fraction} over {} documents leaves an empty train or test set",
            ids.len()
        )));
    }
    let (test_pool, train_pool) = ids.split_at(n_test);
    let mut train_ids = train_pool.to_vec();
    train_ids.sort_unstable();
    let mut test_ids: Vec<u32> = test_pool
        .iter()
        .copied()
        .filter(|&d| {
            let keep = corpus.doc_len(d as usize) >= 2;
            if !keep {
                warn!("test document {d} has fewer than two tokens and is excluded");
            }
            keep
        })
        .collect();
    test_ids.sort_unstable();
    if test_ids.is_empty() {
        return Err(Error::Config("no test document has at least two tokens".into()));
    }
    let mut observed = Vec::with_capacity(test_ids.len());
    let mut holdout = Vec::with_capacity(test_ids.len());
    for &d in &test_ids {
        let mut toks = corpus.doc_tokens(d as usize);
        toks.shuffle(&mut rng);
        let half = toks.len().div_ceil(2);
        observed.push(collect_entries(&toks[..half]));
        holdout.push(collect_entries(&toks[half..]));
    }
    let v = corpus.vocab_size();
    let vocab = Some(corpus.vocab().to_vec());
    Ok(FoldInSplit {
        train: corpus.subset(&train_ids),
        test_observed: Corpus::from_docs(v, observed, vocab.clone())?,
        test_holdout: Corpus::from_docs(v, holdout, vocab)?,
        train_ids,
        test_ids,
    })
}

fn collect_entries(tokens: &[u32]) -> Vec<Entry> {
    let mut sorted = tokens.to_vec();
    sorted.sort_unstable();
    let mut out: Vec<Entry> = Vec::new();
    for w in sorted {
        match out.last_mut() {
            Some((lw, c)) if *lw == w => *c += 1,
            _ => out.push((w, 1)),
        }
    }
    out
}
