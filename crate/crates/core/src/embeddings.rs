//! Activity encoders: pre-trained vector stores in word2vec text format
//! and the one-hot baseline.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Casing {
    Cased,
    Uncased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreKind {
    /// One vector per word; activities are tokenized and mean-pooled.
    TokenLevel,
    /// One vector per activity name (spaces escaped as `_`).
    ActivityLevel,
}

/// Token to dense-vector table.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    casing: Casing,
    kind: StoreKind,
    index: IndexMap<String, usize>,
    data: Vec<f32>,
}

/// Result of embedding one activity, with the vocabulary coverage that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Lookup {
    pub vector: Vec<f64>,
    pub tokens: usize,
    pub known: usize,
}

impl Lookup {
    pub fn is_oov(&self) -> bool {
        self.known == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OovReport {
    pub activities: usize,
    pub oov_activities: Vec<String>,
    pub tokens: usize,
    pub oov_tokens: usize,
}

impl OovReport {
    pub fn activity_oov_rate(&self) -> f64 {
        if self.activities == 0 {
            0.0
        } else {
            self.oov_activities.len() as f64 / self.activities as f64
        }
    }

    pub fn token_oov_rate(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.oov_tokens as f64 / self.tokens as f64
        }
    }
}

/// Splits an activity name on whitespace and punctuation.
pub fn tokenize(activity: &str) -> impl Iterator<Item = &str> {
    activity
        .split(|c: char| c.is_whitespace() || !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
}

/// Key under which an activity-level store holds `activity`.
pub fn activity_key(activity: &str, casing: Casing) -> String {
    let key = activity.split_whitespace().collect::<Vec<_>>().join("_");
    match casing {
        Casing::Cased => key,
        Casing::Uncased => key.to_lowercase(),
    }
}

impl EmbeddingStore {
    /// Builds a store from `(key, vector)` pairs. Keys are lowercased for
    /// uncased stores; later duplicates overwrite earlier ones.
    pub fn from_entries<I, K>(dim: usize, casing: Casing, kind: StoreKind, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, Vec<f32>)>,
        K: AsRef<str>,
    {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        let mut store = Self::empty(dim, casing, kind);
        for (i, (key, vector)) in entries.into_iter().enumerate() {
            if vector.len() != dim {
                return Err(Error::VectorFormat {
                    line: i as u64 + 1,
                    message: format!("expected {dim} values, found {}", vector.len()),
                });
            }
            store.insert(key.as_ref(), &vector);
        }
        Ok(store)
    }

    fn empty(dim: usize, casing: Casing, kind: StoreKind) -> Self {
        Self {
            dim,
            casing,
            kind,
            index: IndexMap::new(),
            data: Vec::new(),
        }
    }

    fn insert(&mut self, key: &str, vector: &[f32]) {
        let key = match self.casing {
            Casing::Cased => key.to_string(),
            Casing::Uncased => key.to_lowercase(),
        };
        match self.index.get(&key) {
            Some(&slot) => self.data[slot * self.dim..(slot + 1) * self.dim].copy_from_slice(vector),
            None => {
                self.index.insert(key, self.index.len());
                self.data.extend_from_slice(vector);
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn casing(&self) -> Casing {
        self.casing
    }

    pub fn kind(&self) -> StoreKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Raw stored vector for an exact key.
    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.index
            .get(key)
            .map(|&slot| &self.data[slot * self.dim..(slot + 1) * self.dim])
    }

    fn get_normalized(&self, token: &str) -> Option<&[f32]> {
        match self.casing {
            Casing::Cased => self.get(token),
            Casing::Uncased => self.get(&token.to_lowercase()),
        }
    }

    pub fn lookup(&self, activity: &str) -> Lookup {
        let mut vector = vec![0.0; self.dim];
        let (tokens, known) = match self.kind {
            StoreKind::ActivityLevel => match self.get(&activity_key(activity, self.casing)) {
                Some(v) => {
                    for (o, &x) in vector.iter_mut().zip(v) {
                        *o = f64::from(x);
                    }
                    (1, 1)
                }
                None => (1, 0),
            },
            StoreKind::TokenLevel => {
                let mut tokens = 0;
                let mut known = 0;
                for token in tokenize(activity) {
                    tokens += 1;
                    if let Some(v) = self.get_normalized(token) {
                        known += 1;
                        for (o, &x) in vector.iter_mut().zip(v) {
                            *o += f64::from(x);
                        }
                    }
                }
                if known > 1 {
                    let k = known as f64;
                    vector.iter_mut().for_each(|o| *o /= k);
                }
                (tokens, known)
            }
        };
        Lookup { vector, tokens, known }
    }

    /// Dense feature vector for an activity name. Out-of-vocabulary
    /// activities map to the zero vector.
    pub fn embed_activity(&self, activity: &str) -> Vec<f64> {
        let lookup = self.lookup(activity);
        if lookup.is_oov() {
            log::debug!("activity `{activity}` is out of vocabulary; using zero vector");
        }
        lookup.vector
    }

    pub fn oov_report<'a>(&self, vocabulary: impl IntoIterator<Item = &'a String>) -> OovReport {
        let mut report = OovReport::default();
        for activity in vocabulary {
            let lookup = self.lookup(activity);
            report.activities += 1;
            report.tokens += lookup.tokens;
            report.oov_tokens += lookup.tokens - lookup.known;
            if lookup.is_oov() {
                report.oov_activities.push(activity.clone());
            }
        }
        report
    }

    /// Writes the store in word2vec text format with a `<count> <dim>`
    /// header. Values use the shortest representation that parses back to
    /// the same `f32`.
    pub fn write_word2vec<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (key, &slot) in &self.index {
            out.write_all(key.as_bytes())?;
            for x in &self.data[slot * self.dim..(slot + 1) * self.dim] {
                write!(out, " {x}")?;
            }
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Reads a word2vec text-format vector file (optional `<count> <dim>`
/// header, then `token v1 ... v_dim` per line).
pub fn load_embedding_store<R: BufRead>(mut source: R, casing: Casing, kind: StoreKind) -> Result<EmbeddingStore> {
    let mut store: Option<EmbeddingStore> = None;
    let mut buf = Vec::new();
    let mut line_no = 0u64;
    let mut values = Vec::new();
    loop {
        buf.clear();
        if source.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let line = String::from_utf8_lossy(&buf);
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        values.clear();
        for f in fields {
            let v: f32 = f.parse().map_err(|_| Error::VectorFormat {
                line: line_no,
                message: format!("`{f}` is not a number"),
            })?;
            values.push(v);
        }

        let store = match &mut store {
            Some(s) => s,
            None => {
                // A first line made of two integers is the header.
                if values.len() == 1 && token.parse::<usize>().is_ok() && values[0].fract() == 0.0 {
                    let dim = values[0] as usize;
                    if dim == 0 {
                        return Err(Error::VectorFormat {
                            line: line_no,
                            message: "header declares dimension 0".into(),
                        });
                    }
                    store = Some(EmbeddingStore::empty(dim, casing, kind));
                    continue;
                }
                if values.is_empty() {
                    return Err(Error::VectorFormat {
                        line: line_no,
                        message: "vector has dimension 0".into(),
                    });
                }
                store.insert(EmbeddingStore::empty(values.len(), casing, kind))
            }
        };
        if values.len() != store.dim {
            return Err(Error::VectorFormat {
                line: line_no,
                message: format!("expected {} values, found {}", store.dim, values.len()),
            });
        }
        store.insert(token, &values);
    }
    store.ok_or(Error::VectorFormat {
        line: line_no,
        message: "no vectors found".into(),
    })
}

/// Writes an activity-level vector file (one row per activity name, with
/// spaces escaped as `_`) for vectors computed elsewhere.
pub fn export_activity_vectors<'a, W, I>(out: W, dim: usize, casing: Casing, entries: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, Vec<f32>)>,
{
    let store = EmbeddingStore::from_entries(
        dim,
        casing,
        StoreKind::ActivityLevel,
        entries.into_iter().map(|(a, v)| (activity_key(a, casing), v)),
    )?;
    store.write_word2vec(out)
}

/// One-hot activity encoder fitted on a source vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneHotEncoder {
    index: BTreeMap<String, usize>,
}

impl OneHotEncoder {
    pub fn size(&self) -> usize {
        self.index.len()
    }

    pub fn position(&self, activity: &str) -> Option<usize> {
        self.index.get(activity).copied()
    }

    /// Activities in position order.
    pub fn vocabulary(&self) -> Vec<&str> {
        // BTreeMap iteration is sorted, which is also position order.
        self.index.keys().map(String::as_str).collect()
    }

    pub fn encode(&self, activity: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.size()];
        if let Some(p) = self.position(activity) {
            v[p] = 1.0;
        }
        v
    }
}

/// Fits a one-hot encoder; positions follow sorted activity names.
pub fn fit_one_hot<'a>(vocabulary: impl IntoIterator<Item = &'a String>) -> Result<OneHotEncoder> {
    let names: BTreeSet<&String> = vocabulary.into_iter().collect();
    if names.is_empty() {
        return Err(Error::InvalidArgument("one-hot vocabulary is empty".into()));
    }
    let index = names.into_iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
    Ok(OneHotEncoder { index })
}

/// The activity half of the per-event feature vector.
#[derive(Debug, Clone, PartialEq)]
pub enum ActivityEncoder {
    Embedding(Arc<EmbeddingStore>),
    OneHot(OneHotEncoder),
}

impl ActivityEncoder {
    pub fn dim(&self) -> usize {
        match self {
            ActivityEncoder::Embedding(s) => s.dim(),
            ActivityEncoder::OneHot(o) => o.size(),
        }
    }

    pub fn encode(&self, activity: &str) -> Vec<f64> {
        match self {
            ActivityEncoder::Embedding(s) => s.embed_activity(activity),
            ActivityEncoder::OneHot(o) => o.encode(activity),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn token_store(casing: Casing) -> EmbeddingStore {
        let text = "caused 1 2 3\nby 3 2 1\nclosed 0.5 0.5 0.5\nopen -1 0 1\n";
        load_embedding_store(text.as_bytes(), casing, StoreKind::TokenLevel).unwrap()
    }

    #[test]
    fn single_entry_store() {
        let line = format!("closed{}\n", " 0".repeat(100));
        let store = load_embedding_store(line.as_bytes(), Casing::Uncased, StoreKind::TokenLevel).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.dim(), 100);
        assert_eq!(store.embed_activity("closed"), vec![0.0; 100]);
    }

    #[test]
    fn header_is_detected() {
        let text = "2 3\nopen 1 2 3\nclose 4 5 6\n";
        let store = load_embedding_store(text.as_bytes(), Casing::Cased, StoreKind::TokenLevel).unwrap();
        assert_eq!((store.len(), store.dim()), (2, 3));
        assert_eq!(store.get("close").unwrap(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn format_errors() {
        let ragged = "open 1 2 3\nclose 4 5\n";
        assert!(matches!(
            load_embedding_store(ragged.as_bytes(), Casing::Cased, StoreKind::TokenLevel),
            Err(Error::VectorFormat { line: 2, .. })
        ));
        assert!(load_embedding_store("3 0\n".as_bytes(), Casing::Cased, StoreKind::TokenLevel).is_err());
        assert!(load_embedding_store("lonely\n".as_bytes(), Casing::Cased, StoreKind::TokenLevel).is_err());
        assert!(load_embedding_store("open 1 x\n".as_bytes(), Casing::Cased, StoreKind::TokenLevel).is_err());
    }

    #[test]
    fn uncased_last_occurrence_wins() {
        let text = "Open 1 1\nopen 2 2\n";
        let store = load_embedding_store(text.as_bytes(), Casing::Uncased, StoreKind::TokenLevel).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.get("open").unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn multi_token_mean_skips_oov() {
        let store = token_store(Casing::Uncased);
        let lookup = store.lookup("Caused By CI");
        assert_eq!((lookup.tokens, lookup.known), (3, 2));
        assert_eq!(lookup.vector, vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn all_oov_is_zero() {
        let store = token_store(Casing::Uncased);
        let lookup = store.lookup("VERIFIED");
        assert!(lookup.is_oov());
        assert_eq!(lookup.vector, vec![0.0; 3]);
        assert_eq!(store.embed_activity(""), vec![0.0; 3]);
    }

    #[test]
    fn casing() {
        let uncased = token_store(Casing::Uncased);
        assert_eq!(uncased.embed_activity("Closed"), uncased.embed_activity("closed"));
        let cased = token_store(Casing::Cased);
        assert_eq!(cased.embed_activity("Closed"), vec![0.0; 3]);
        assert_eq!(cased.embed_activity("closed"), vec![0.5; 3]);
    }

    #[test]
    fn single_token_is_exact() {
        let store = token_store(Casing::Cased);
        let stored: Vec<f64> = store.get("open").unwrap().iter().map(|&x| f64::from(x)).collect();
        assert_eq!(store.embed_activity("open"), stored);
        assert_eq!(store.embed_activity("  open! "), stored);
    }

    #[test]
    fn activity_level_round_trip() {
        let entries = vec![
            ("Take in charge ticket", vec![0.125f32, -1.5, 3.0e-7]),
            ("Resolve ticket", vec![1.0f32 / 3.0, 2.0, -0.0]),
            ("Closed", vec![9.75f32, 0.1, 0.2]),
        ];
        let mut buf = Vec::new();
        export_activity_vectors(&mut buf, 3, Casing::Cased, entries.iter().map(|(a, v)| (*a, v.clone()))).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("Take_in_charge_ticket "));

        let store = load_embedding_store(buf.as_slice(), Casing::Cased, StoreKind::ActivityLevel).unwrap();
        assert_eq!(store.kind(), StoreKind::ActivityLevel);
        for (activity, v) in &entries {
            let got = store.embed_activity(activity);
            for (g, e) in got.iter().zip(v) {
                assert_eq!(g.to_bits(), f64::from(*e).to_bits());
            }
        }
        assert_eq!(store.embed_activity("Take in charge"), vec![0.0; 3]);
    }

    #[test]
    fn word2vec_writer_round_trips() {
        let store = token_store(Casing::Cased);
        let mut buf = Vec::new();
        store.write_word2vec(&mut buf).unwrap();
        let back = load_embedding_store(buf.as_slice(), Casing::Cased, StoreKind::TokenLevel).unwrap();
        assert_eq!(back, store);
    }

    #[test]
    fn oov_report_counts() {
        let store = token_store(Casing::Uncased);
        let vocab: Vec<String> = ["Caused By CI", "INVALID", "Open"].iter().map(|s| s.to_string()).collect();
        let report = store.oov_report(&vocab);
        assert_eq!(report.activities, 3);
        assert_eq!(report.oov_activities, vec!["INVALID".to_string()]);
        assert_eq!((report.tokens, report.oov_tokens), (5, 2));
    }

    #[test]
    fn one_hot() {
        let vocab: Vec<String> = ["Open", "Closed", "Assignment"].iter().map(|s| s.to_string()).collect();
        let enc = fit_one_hot(&vocab).unwrap();
        assert_eq!(enc.size(), 3);
        assert_eq!(enc.vocabulary(), ["Assignment", "Closed", "Open"]);
        assert_eq!(enc.encode("Open"), vec![0.0, 0.0, 1.0]);
        assert_eq!(enc.encode("Wait"), vec![0.0; 3]);

        let mut sum = vec![0.0; 3];
        for a in &vocab {
            for (s, x) in sum.iter_mut().zip(enc.encode(a)) {
                *s += x;
            }
        }
        assert_eq!(sum, vec![1.0; 3]);

        let single = fit_one_hot(&["A".to_string()]).unwrap();
        assert_eq!(single.encode("A"), vec![1.0]);
        assert!(fit_one_hot(&Vec::<String>::new()).is_err());
    }
}
