//! On-disk model bundles and response matrices: a JSON manifest next to raw
//! little-endian float32 tensors, each with a SHA-256 checksum.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::frontend::{GaborBank, GaborConfig};
use crate::ica::IcaFilters;
use crate::pipeline::{ModelPipeline, ModelSpec, V2Kind, V2Stage};
use crate::sc::{Dictionary, TrainLog};
use crate::whitening::PcaModel;

pub const BUNDLE_FORMAT: &str = "v2model-bundle";
pub const RESPONSES_FORMAT: &str = "v2model-responses";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub file: String,
    pub dtype: String,
    pub byte_order: String,
    pub shape: Vec<usize>,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub spec: ModelSpec,
    pub gabor: GaborConfig,
    pub tensors: Vec<TensorEntry>,
    pub training_log: TrainLog,
    /// Free-form run description (configuration, corpus, seed).
    pub provenance: serde_json::Value,
}

impl Manifest {
    pub fn tensor(&self, name: &str) -> Result<&TensorEntry> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Bundle(format!("manifest lists no tensor '{name}'")))
    }
}

fn f32_bytes(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(|v| (v as f32).to_le_bytes()).collect()
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn check_header(format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(Error::Bundle(format!("expected format '{expected}', found '{format}'")));
    }
    if version != FORMAT_VERSION {
        return Err(Error::Bundle(format!(
            "unsupported format version {version}; this build reads version {FORMAT_VERSION}"
        )));
    }
    Ok(())
}

/// Write `values` as float32 to `dir/file` and describe it.
pub fn write_tensor(dir: &Path, name: &str, file: &str, shape: &[usize], values: impl Iterator<Item = f64>) -> Result<TensorEntry> {
    let bytes = f32_bytes(values);
    let expected: usize = shape.iter().product();
    if bytes.len() != 4 * expected {
        return Err(Error::dims(expected, bytes.len() / 4, "tensor element count"));
    }
    let path = dir.join(file);
    fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
    Ok(TensorEntry {
        name: name.into(),
        file: file.into(),
        dtype: "float32".into(),
        byte_order: "little".into(),
        shape: shape.to_vec(),
        sha256: sha256_hex(&bytes),
    })
}

/// Read and verify a tensor described by `entry`.
pub fn read_tensor(dir: &Path, entry: &TensorEntry) -> Result<Vec<f64>> {
    if entry.dtype != "float32" || entry.byte_order != "little" {
        return Err(Error::Bundle(format!(
            "tensor '{}' is {} {}-endian; only little-endian float32 is supported",
            entry.name, entry.dtype, entry.byte_order
        )));
    }
    let path = dir.join(&entry.file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let digest = sha256_hex(&bytes);
    if digest != entry.sha256 {
        return Err(Error::Bundle(format!(
            "checksum mismatch for {}: manifest {}, file {digest}",
            path.display(),
            entry.sha256
        )));
    }
    let expected: usize = entry.shape.iter().product();
    if bytes.len() != 4 * expected {
        return Err(Error::Bundle(format!(
            "{} holds {} bytes, shape {:?} needs {}",
            path.display(),
            bytes.len(),
            entry.shape,
            4 * expected
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn matrix(dir: &Path, entry: &TensorEntry) -> Result<Array2<f64>> {
    let [r, c] = entry.shape[..] else {
        return Err(Error::Bundle(format!("tensor '{}' is not a matrix: {:?}", entry.name, entry.shape)));
    };
    Ok(Array2::from_shape_vec((r, c), read_tensor(dir, entry)?).expect("length verified"))
}

fn vector(dir: &Path, entry: &TensorEntry) -> Result<Array1<f64>> {
    if entry.shape.len() != 1 {
        return Err(Error::Bundle(format!("tensor '{}' is not a vector: {:?}", entry.name, entry.shape)));
    }
    Ok(Array1::from(read_tensor(dir, entry)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Bundle(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Bundle(format!("{}: {e}", path.display())))
}

/// Write a trained pipeline to `dir`.
pub fn save_bundle(
    dir: &Path,
    pipeline: &ModelPipeline,
    spec: &ModelSpec,
    log: &TrainLog,
    provenance: serde_json::Value,
) -> Result<()> {
    if pipeline.v2().kind() != kind_tag(spec.kind) {
        return Err(Error::Bundle("spec kind does not match the pipeline's V2 stage".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let pca = pipeline.pca();
    let (k, d) = pca.components.dim();
    let mut tensors = vec![
        write_tensor(dir, "pca.mean", "pca_mean.f32", &[d], pca.mean.iter().copied())?,
        write_tensor(dir, "pca.components", "pca_components.f32", &[k, d], pca.components.iter().copied())?,
        write_tensor(dir, "pca.eigenvalues", "pca_eigenvalues.f32", &[k], pca.eigenvalues.iter().copied())?,
    ];
    match pipeline.v2() {
        V2Stage::Sc { dict, .. } => {
            let phi = dict.phi();
            tensors.push(write_tensor(dir, "sc.dictionary", "sc_dictionary.f32", &[phi.nrows(), phi.ncols()], phi.iter().copied())?);
        }
        V2Stage::Ica(f) => {
            let (w, a) = (f.w(), f.mixing());
            tensors.push(write_tensor(dir, "ica.filters", "ica_filters.f32", &[w.nrows(), w.ncols()], w.iter().copied())?);
            tensors.push(write_tensor(dir, "ica.mixing", "ica_mixing.f32", &[a.nrows(), a.ncols()], a.iter().copied())?);
        }
    }
    let manifest = Manifest {
        format: BUNDLE_FORMAT.into(),
        version: FORMAT_VERSION,
        spec: spec.clone(),
        gabor: pipeline.bank().config().clone(),
        tensors,
        training_log: log.clone(),
        provenance,
    };
    write_json(&dir.join(MANIFEST), &manifest)
}

fn kind_tag(kind: V2Kind) -> &'static str {
    match kind {
        V2Kind::Sc => "sc",
        V2Kind::Ica => "ica",
    }
}

/// A pipeline read back from disk with its manifest.
#[derive(Debug, Clone)]
pub struct LoadedBundle {
    pub pipeline: ModelPipeline,
    pub manifest: Manifest,
}

/// Read a bundle, verifying version, checksums and stage dimensions.
pub fn load_bundle(dir: &Path) -> Result<LoadedBundle> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
    check_header(&manifest.format, manifest.version, BUNDLE_FORMAT)?;
    let bank = GaborBank::new(manifest.gabor.clone())?;
    let pca = PcaModel::from_parts(
        vector(dir, manifest.tensor("pca.mean")?)?,
        matrix(dir, manifest.tensor("pca.components")?)?,
        vector(dir, manifest.tensor("pca.eigenvalues")?)?,
    )?;
    let v2 = match manifest.spec.kind {
        V2Kind::Sc => {
            // float32 storage perturbs column norms slightly; restore them.
            let phi = matrix(dir, manifest.tensor("sc.dictionary")?)?;
            V2Stage::Sc {
                dict: Dictionary::from_unnormalized(phi, manifest.spec.sc.lambda)?,
                lambda: manifest.spec.sc.lambda,
                infer: manifest.spec.infer,
            }
        }
        V2Kind::Ica => V2Stage::Ica(IcaFilters::from_parts(
            matrix(dir, manifest.tensor("ica.filters")?)?,
            matrix(dir, manifest.tensor("ica.mixing")?)?,
        )?),
    };
    let pipeline = ModelPipeline::new(bank, pca, v2).map_err(|e| Error::Bundle(format!("inconsistent stages: {e}")))?;
    Ok(LoadedBundle { pipeline, manifest })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsesHeader {
    pub format: String,
    pub version: u32,
    pub tensor: TensorEntry,
    /// One name per row (e.g. the source patch file).
    pub rows: Vec<String>,
}

/// Write an `n × m` response matrix as `responses.f32` plus
/// `responses.json`.
pub fn save_responses(dir: &Path, responses: &Array2<f64>, rows: &[String]) -> Result<()> {
    if rows.len() != responses.nrows() {
        return Err(Error::dims(responses.nrows(), rows.len(), "row names"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (n, m) = responses.dim();
    let tensor = write_tensor(dir, "responses", "responses.f32", &[n, m], responses.iter().copied())?;
    let header = ResponsesHeader {
        format: RESPONSES_FORMAT.into(),
        version: FORMAT_VERSION,
        tensor,
        rows: rows.to_vec(),
    };
    write_json(&dir.join("responses.json"), &header)
}

pub fn load_responses(dir: &Path) -> Result<(Array2<f64>, Vec<String>)> {
    let header: ResponsesHeader = read_json(&dir.join("responses.json"))?;
    check_header(&header.format, header.version, RESPONSES_FORMAT)?;
    let m = matrix(dir, &header.tensor)?;
    if m.nrows() != header.rows.len() {
        return Err(Error::Bundle(format!("{} rows but {} row names", m.nrows(), header.rows.len())));
    }
    Ok((m, header.rows))
}
