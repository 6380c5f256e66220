use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::pipeline::{PipelineConfig, SourceRun};
use crate::embeddings::{fit_one_hot, load_embedding_store, ActivityEncoder, Casing, StoreKind};
use crate::error::{Error, Result};
use crate::nn::{InitScheme, LstmModel, LstmParams, TensorShape};
use crate::tensorize::FeatureEncoder;
use crate::timefeat::TimeEncoder;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
pub const VECTORS_FILE: &str = "activity_vectors.txt";
pub const CHECKSUMS_FILE: &str = "checksums.txt";

/// Metric names in report column order.
pub const METRICS: [&str; 5] = ["precision_w", "recall_w", "f1_w", "mcc", "auc_roc"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub init_scheme: InitScheme,
    /// Little-endian f32, tensors back to back in this order.
    pub tensors: Vec<TensorShape>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActivityManifest {
    Embedding {
        dim: usize,
        casing: Casing,
        store_kind: StoreKind,
        /// SHA-256 of the embedded vector file.
        fingerprint: String,
        /// Name of the vector file the store was loaded from.
        origin: Option<String>,
    },
    OneHot {
        vocabulary: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub source_log: String,
    pub seed: u64,
    pub source_threshold_days: f64,
    /// Activities of the filtered source log.
    pub source_vocabulary: Vec<String>,
    pub best_epoch: usize,
    pub model: ModelManifest,
    pub activity: ActivityManifest,
    /// The time encoder fitted on the source training split.
    pub time: TimeEncoder,
    pub pipeline: PipelineConfig,
    pub metrics: Vec<String>,
}

/// A frozen model with everything needed to encode new data for it.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferBundle {
    pub manifest: Manifest,
    pub model: LstmModel,
    pub features: FeatureEncoder,
}

struct HashWriter(Sha256);

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn activity_manifest(activity: &ActivityEncoder, origin: Option<String>) -> Result<ActivityManifest> {
    Ok(match activity {
        ActivityEncoder::Embedding(store) => {
            let mut hasher = HashWriter(Sha256::new());
            store.write_word2vec(&mut hasher)?;
            ActivityManifest::Embedding {
                dim: store.dim(),
                casing: store.casing(),
                store_kind: store.kind(),
                fingerprint: hex::encode(hasher.0.finalize()),
                origin,
            }
        }
        ActivityEncoder::OneHot(one_hot) => ActivityManifest::OneHot {
            vocabulary: one_hot.vocabulary().into_iter().map(String::from).collect(),
        },
    })
}

impl TransferBundle {
    /// Packages a phase-1 run. `vectors_origin` names the vector file the
    /// embedding store came from, if any.
    pub fn from_source_run(run: &SourceRun, vectors_origin: Option<String>) -> Result<Self> {
        let model = run.model.clone();
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            source_log: run.prepared.log.name.clone(),
            seed: run.seed,
            source_threshold_days: run.prepared.threshold_days,
            source_vocabulary: run.prepared.log.activity_vocabulary().iter().cloned().collect(),
            best_epoch: run.history.best_epoch,
            model: ModelManifest {
                input_dim: model.input_dim(),
                hidden: model.hidden(),
                layers: model.num_layers(),
                init_scheme: model.init_scheme,
                tensors: model.params.shapes(),
            },
            activity: activity_manifest(&run.features.activity, vectors_origin)?,
            time: run.features.time.clone(),
            pipeline: run.config.clone(),
            metrics: METRICS.iter().map(|m| m.to_string()).collect(),
        };
        Ok(Self {
            manifest,
            model,
            features: run.features.clone(),
        })
    }

    /// The weights as stored: little-endian f32 in declared order.
    pub fn weights_bytes(&self) -> Vec<u8> {
        self.model
            .params
            .flatten()
            .into_iter()
            .flat_map(|x| (x as f32).to_le_bytes())
            .collect()
    }
}

/// Writes the bundle files and their checksums into `dir`.
pub fn save_bundle(dir: &Path, bundle: &TransferBundle) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let mut files: Vec<(&str, Vec<u8>)> = vec![
        (MANIFEST_FILE, serde_json::to_vec_pretty(&bundle.manifest)?),
        (WEIGHTS_FILE, bundle.weights_bytes()),
    ];
    if let ActivityEncoder::Embedding(store) = &bundle.features.activity {
        let mut text = Vec::new();
        store.write_word2vec(&mut text)?;
        files.push((VECTORS_FILE, text));
    }
    let mut checksums = String::new();
    for (name, bytes) in &files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::file(&path, e))?;
        checksums.push_str(&format!("{}  {name}\n", sha256_hex(bytes)));
    }
    let path = dir.join(CHECKSUMS_FILE);
    fs::write(&path, checksums).map_err(|e| Error::file(&path, e))
}

/// Strict `sha256sum`-style listing: lowercase hex, two spaces, a known
/// file name, one entry per line, newline-terminated.
fn parse_checksums(text: &str) -> Result<BTreeMap<String, String>> {
    let bad = |why: &str| Error::Integrity(format!("{CHECKSUMS_FILE}: {why}"));
    let body = text.strip_suffix('\n').ok_or_else(|| bad("not newline-terminated"))?;
    let mut out = BTreeMap::new();
    for line in body.split('\n') {
        let (digest, name) = line.split_once("  ").ok_or_else(|| bad("malformed line"))?;
        if digest.len() != 64 || !digest.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
            return Err(bad("malformed digest"));
        }
        if ![MANIFEST_FILE, WEIGHTS_FILE, VECTORS_FILE].contains(&name) {
            return Err(bad(&format!("unexpected entry {name:?}")));
        }
        if out.insert(name.to_string(), digest.to_string()).is_some() {
            return Err(bad(&format!("duplicate entry {name:?}")));
        }
    }
    Ok(out)
}

fn read_verified(dir: &Path, name: &str, expected: &str) -> Result<Vec<u8>> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| Error::Integrity(format!("{}: {e}", path.display())))?;
    if sha256_hex(&bytes) != expected {
        return Err(Error::Integrity(format!("{name} does not match its checksum")));
    }
    Ok(bytes)
}

/// Reads and verifies a bundle directory.
pub fn load_bundle(dir: &Path) -> Result<TransferBundle> {
    let path = dir.join(CHECKSUMS_FILE);
    let listing = fs::read(&path).map_err(|e| Error::Integrity(format!("{}: {e}", path.display())))?;
    let listing = String::from_utf8(listing).map_err(|_| Error::Integrity(format!("{CHECKSUMS_FILE} is not UTF-8")))?;
    let sums = parse_checksums(&listing)?;
    let digest = |name: &str| {
        sums.get(name)
            .ok_or_else(|| Error::Integrity(format!("{CHECKSUMS_FILE} lacks {name}")))
    };

    let manifest_bytes = read_verified(dir, MANIFEST_FILE, digest(MANIFEST_FILE)?)?;
    let raw: serde_json::Value =
        serde_json::from_slice(&manifest_bytes).map_err(|e| Error::Integrity(format!("{MANIFEST_FILE}: {e}")))?;
    match raw.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => return Err(Error::Version(format!("bundle format {v}, supported {FORMAT_VERSION}"))),
        None => return Err(Error::Version("manifest has no format_version".into())),
    }
    let manifest: Manifest =
        serde_json::from_value(raw).map_err(|e| Error::Integrity(format!("{MANIFEST_FILE}: {e}")))?;

    let activity = match &manifest.activity {
        ActivityManifest::Embedding {
            dim,
            casing,
            store_kind,
            fingerprint,
            ..
        } => {
            let listed = digest(VECTORS_FILE)?;
            if listed != fingerprint {
                return Err(Error::Integrity(format!("{VECTORS_FILE} does not match the manifest fingerprint")));
            }
            let text = read_verified(dir, VECTORS_FILE, listed)?;
            let store = load_embedding_store(text.as_slice(), *casing, *store_kind)?;
            if store.dim() != *dim {
                return Err(Error::Integrity(format!("vectors have dimension {}, manifest says {dim}", store.dim())));
            }
            ActivityEncoder::Embedding(Arc::new(store))
        }
        ActivityManifest::OneHot { vocabulary } => {
            if sums.contains_key(VECTORS_FILE) {
                return Err(Error::Integrity(format!("one-hot bundle lists {VECTORS_FILE}")));
            }
            ActivityEncoder::OneHot(fit_one_hot(vocabulary)?)
        }
    };

    let m = &manifest.model;
    let expected = LstmParams::zeros(m.input_dim, m.hidden, m.layers);
    if expected.shapes() != m.tensors {
        return Err(Error::Integrity("manifest tensor shapes do not match the declared architecture".into()));
    }
    let weights = read_verified(dir, WEIGHTS_FILE, digest(WEIGHTS_FILE)?)?;
    let count: usize = m.tensors.iter().map(TensorShape::numel).sum();
    if weights.len() != 4 * count {
        return Err(Error::Integrity(format!(
            "{WEIGHTS_FILE} holds {} bytes, shapes need {}",
            weights.len(),
            4 * count
        )));
    }
    let flat: Vec<f64> = weights
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    let model = LstmModel {
        params: LstmParams::from_flat(m.input_dim, m.hidden, m.layers, &flat)?,
        init_scheme: m.init_scheme,
        seed: manifest.seed,
    };

    let features = FeatureEncoder::new(activity, manifest.time.clone());
    if features.width() != m.input_dim {
        return Err(Error::Config(format!(
            "encoders produce {} features, model expects {}",
            features.width(),
            m.input_dim
        )));
    }
    Ok(TransferBundle {
        manifest,
        model,
        features,
    })
}
