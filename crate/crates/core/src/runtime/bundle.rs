//! Deployable directory consumed by the CLI and the browser shell:
//!
//! ```text
//! bundle/
//!   bundle.json   manifest: threshold, gates, seed, file hashes
//!   config.json   model config
//!   model.mdq8    quantized checkpoint
//!   vocab.txt     one token per line
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{Classifier, Engine, RuntimeError};
use crate::encoder::{CheckpointError, ModelConfig};
use crate::quant::{self, QuantModel};
use crate::textnorm::GateConfig;
use crate::tokenizer::{Vocab, VocabError};

pub const BUNDLE_MANIFEST: &str = "bundle.json";
pub const BUNDLE_FORMAT: &str = "misdetect-bundle";
pub const BUNDLE_VERSION: u32 = 1;
const MODEL_FILE: &str = "model.mdq8";
const VOCAB_FILE: &str = "vocab.txt";
const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{file}: sha256 {actual} does not match manifest {expected}")]
    Hash {
        file: String,
        expected: String,
        actual: String,
    },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub format: String,
    pub version: u32,
    pub tau: f64,
    pub seed: u64,
    pub max_len: usize,
    pub gates: GateConfig,
    /// File name → lowercase hex sha256.
    pub files: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<(), BundleError> {
    fs::write(&path, bytes).map_err(|source| BundleError::Io { path, source })
}

fn read(path: PathBuf) -> Result<Vec<u8>, BundleError> {
    fs::read(&path).map_err(|source| BundleError::Io { path, source })
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serializable");
    s.push(b'\n');
    s
}

/// Writes the bundle into `dir` (created if needed) and returns its manifest.
pub fn export_bundle(
    dir: &Path,
    model: &QuantModel,
    vocab: &Vocab,
    gates: &GateConfig,
    tau: f64,
    seed: u64,
) -> Result<BundleManifest, BundleError> {
    let classifier = Classifier::new(Engine::Quant(model.clone()), vocab.clone(), gates.clone())?;
    super::SessionState::new(tau)?;
    fs::create_dir_all(dir).map_err(|source| BundleError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let payloads = [
        (MODEL_FILE, quant::to_bytes(model)),
        (VOCAB_FILE, vocab.to_text().into_bytes()),
        (CONFIG_FILE, json(&model.config)),
    ];
    let mut files = BTreeMap::new();
    for (name, bytes) in &payloads {
        write(dir.join(name), bytes)?;
        files.insert(name.to_string(), sha256_hex(bytes));
    }
    let manifest = BundleManifest {
        format: BUNDLE_FORMAT.into(),
        version: BUNDLE_VERSION,
        tau,
        seed,
        max_len: classifier.max_len(),
        gates: gates.clone(),
        files,
    };
    write(dir.join(BUNDLE_MANIFEST), &json(&manifest))?;
    Ok(manifest)
}

/// Loads and verifies a bundle written by [`export_bundle`].
pub fn load_bundle(dir: &Path) -> Result<(Classifier, BundleManifest), BundleError> {
    let manifest_path = dir.join(BUNDLE_MANIFEST);
    let format_err = |path: &Path, message: String| BundleError::Format {
        path: path.to_path_buf(),
        message,
    };
    let manifest: BundleManifest =
        serde_json::from_slice(&read(manifest_path.clone())?).map_err(|e| format_err(&manifest_path, e.to_string()))?;
    if manifest.format != BUNDLE_FORMAT || manifest.version != BUNDLE_VERSION {
        return Err(format_err(
            &manifest_path,
            format!("unsupported bundle {} v{}", manifest.format, manifest.version),
        ));
    }
    let mut contents = BTreeMap::new();
    for name in [MODEL_FILE, VOCAB_FILE, CONFIG_FILE] {
        let expected = manifest
            .files
            .get(name)
            .ok_or_else(|| format_err(&manifest_path, format!("no entry for {name}")))?;
        let bytes = read(dir.join(name))?;
        let actual = sha256_hex(&bytes);
        if &actual != expected {
            return Err(BundleError::Hash {
                file: name.into(),
                expected: expected.clone(),
                actual,
            });
        }
        contents.insert(name, bytes);
    }
    let model = quant::from_bytes(&contents[MODEL_FILE])?;
    let config_path = dir.join(CONFIG_FILE);
    let config: ModelConfig =
        serde_json::from_slice(&contents[CONFIG_FILE]).map_err(|e| format_err(&config_path, e.to_string()))?;
    if config != model.config {
        return Err(format_err(&config_path, "differs from the checkpoint header".into()));
    }
    let vocab_text = String::from_utf8(contents[VOCAB_FILE].clone())
        .map_err(|e| format_err(&dir.join(VOCAB_FILE), e.to_string()))?;
    let vocab = Vocab::parse(&vocab_text)?;
    super::SessionState::new(manifest.tau)?;
    let classifier = Classifier::new(Engine::Quant(model), vocab, manifest.gates.clone())?;
    Ok((classifier, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::ModelParams;
    use crate::tokenizer::build_vocab;

    fn parts() -> (QuantModel, Vocab) {
        let vocab = build_vocab([&crate::textnorm::normalize("the quick brown fox jumps over the lazy dog")], 60).unwrap();
        let mut cfg = ModelConfig::tiny();
        cfg.vocab_size = vocab.len();
        let (q, _) = quant::quantize_model(&ModelParams::init(cfg, 4)).unwrap();
        (q, vocab)
    }

    #[test]
    fn export_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let (q, vocab) = parts();
        let m = export_bundle(dir.path(), &q, &vocab, &GateConfig::default(), 0.6, 42).unwrap();
        assert_eq!(m.files.len(), 3);
        let (c, back) = load_bundle(dir.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(c.vocab, vocab);
        let seq = c.tokenize("the lazy dog jumps");
        assert_eq!(c.engine.predict(&seq).unwrap(), Engine::Quant(q).predict(&seq).unwrap());
    }

    #[test]
    fn tampered_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (q, vocab) = parts();
        export_bundle(dir.path(), &q, &vocab, &GateConfig::default(), 0.6, 42).unwrap();
        let vp = dir.path().join(VOCAB_FILE);
        let mut v = fs::read_to_string(&vp).unwrap();
        v.push_str("extra\n");
        fs::write(&vp, v).unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(BundleError::Hash { .. })));
    }
}
