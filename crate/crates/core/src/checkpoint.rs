//! Binary checkpoints: magic, manifest length, JSON manifest, f32 payload.
//!
//! ```text
//! "GCNN1\n" | u32 LE manifest length | manifest (UTF-8 JSON) | f32 LE tensors
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LayerGraph, LayerSpec, ModelName, Tensor};
use crate::train::{AdamConfig, OptimizerState};

pub const MAGIC: &[u8; 6] = b"GCNN1\n";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the payload.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerEntry {
    pub present: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam: Option<AdamConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub model: ModelName,
    pub seed: u64,
    pub dtype: String,
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
    pub tensors: Vec<TensorEntry>,
    pub optimizer: OptimizerEntry,
}

/// A model with its optional optimizer state, as stored on disk.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: LayerGraph<f32>,
    pub optimizer: Option<OptimizerState<f32>>,
}

fn element_count(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

/// Serialise to bytes.
pub fn encode(model: &LayerGraph<f32>, optimizer: Option<&OptimizerState<f32>>) -> Result<Vec<u8>> {
    let mut tensors = model.tensors();
    if let Some(opt) = optimizer {
        let params = model.parameters();
        if opt.m.len() != params.len() {
            return Err(Error::shape("optimizer state does not belong to this model"));
        }
        for (i, p) in params.iter().enumerate() {
            for (which, data) in [("m", &opt.m[i]), ("v", &opt.v[i])] {
                tensors.push(Tensor {
                    name: format!("adam.{which}.{}", p.name),
                    shape: p.shape.clone(),
                    data: data.clone(),
                });
            }
        }
    }
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0;
    for t in &tensors {
        entries.push(TensorEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            offset,
        });
        offset += t.data.len() * 4;
    }
    let (c, h, w) = model.input_shape();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        model: model.name(),
        seed: model.seed(),
        dtype: "f32".into(),
        input: [c, h, w],
        layers: model.specs().to_vec(),
        tensors: entries,
        optimizer: OptimizerEntry {
            present: optimizer.is_some(),
            step: optimizer.map(|o| o.t),
            adam: optimizer.map(|o| o.config),
        },
    };
    let json = serde_json::to_vec(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    let len = u32::try_from(json.len()).map_err(|_| Error::Format("manifest too large".into()))?;
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + json.len() + offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&json);
    for t in &tensors {
        for x in &t.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

/// Split the header from the payload and parse the manifest.
pub fn decode_manifest(bytes: &[u8]) -> Result<(Manifest, &[u8])> {
    let rest = bytes
        .strip_prefix(MAGIC.as_slice())
        .ok_or_else(|| Error::Format("not a checkpoint (bad magic bytes)".into()))?;
    if rest.len() < 4 {
        return Err(Error::Format("truncated header".into()));
    }
    let len = u32::from_le_bytes(rest[..4].try_into().expect("4 bytes")) as usize;
    let rest = &rest[4..];
    if rest.len() < len {
        return Err(Error::Format("truncated manifest".into()));
    }
    let value: serde_json::Value =
        serde_json::from_slice(&rest[..len]).map_err(|e| Error::Format(format!("manifest: {e}")))?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Format("manifest lacks format_version".into()))?;
    if version != FORMAT_VERSION as u64 {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION as u64,
        });
    }
    let manifest: Manifest =
        serde_json::from_value(value).map_err(|e| Error::Format(format!("manifest: {e}")))?;
    if manifest.dtype != "f32" {
        return Err(Error::Format(format!("unsupported dtype {}", manifest.dtype)));
    }
    Ok((manifest, &rest[len..]))
}

/// Parse checkpoint bytes. Every declared tensor must be present, laid out
/// contiguously, and the payload must end exactly after the last one.
pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let (manifest, payload) = decode_manifest(bytes)?;
    let mut expected_offset = 0usize;
    for entry in &manifest.tensors {
        let n = element_count(&entry.shape)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format(format!("tensor {} is too large", entry.name)))?;
        if entry.offset != expected_offset {
            return Err(Error::Format(format!("tensor {} at unexpected offset", entry.name)));
        }
        expected_offset = expected_offset
            .checked_add(n)
            .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    }
    if expected_offset != payload.len() {
        return Err(Error::Format(format!(
            "payload holds {} bytes, manifest declares {expected_offset}",
            payload.len()
        )));
    }
    // Parameter sizes implied by the layers must fit the payload before
    // anything is allocated for them.
    let mut implied = 0usize;
    for spec in &manifest.layers {
        let n = match *spec {
            LayerSpec::Conv {
                group,
                kind,
                in_channels,
                out_channels,
                size,
            } => {
                let slices = match kind {
                    crate::gconv::LayerKind::FirstLayer => 1,
                    crate::gconv::LayerKind::Full => group.stabilizer_size(),
                };
                element_count(&[out_channels, in_channels, slices, size, size])
                    .and_then(|w| w.checked_add(out_channels))
            }
            LayerSpec::BatchNorm { channels } => channels.checked_mul(4),
            _ => Some(0),
        };
        implied = n
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| implied.checked_add(n))
            .filter(|&n| n <= payload.len())
            .ok_or_else(|| Error::Format("layers declare more parameters than the payload holds".into()))?;
    }

    let [c, h, w] = manifest.input;
    let mut model = LayerGraph::<f32>::from_specs(manifest.model, manifest.seed, manifest.layers.clone(), (c, h, w))
        .map_err(|e| Error::Format(format!("layers: {e}")))?;
    let mut tensors: Vec<Tensor<f32>> = manifest
        .tensors
        .iter()
        .map(|e| {
            let n = element_count(&e.shape).expect("checked above");
            let data = payload[e.offset..e.offset + n * 4]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            Tensor {
                name: e.name.clone(),
                shape: e.shape.clone(),
                data,
            }
        })
        .collect();
    let adam: Vec<Tensor<f32>> = {
        let split = tensors.iter().position(|t| t.name.starts_with("adam.")).unwrap_or(tensors.len());
        tensors.split_off(split)
    };
    model
        .load_tensors(&tensors)
        .map_err(|e| Error::Format(format!("tensors: {e}")))?;

    let optimizer = if manifest.optimizer.present {
        let params = model.parameters();
        if adam.len() != 2 * params.len() {
            return Err(Error::Format("optimizer state is incomplete".into()));
        }
        let mut m = Vec::with_capacity(params.len());
        let mut v = Vec::with_capacity(params.len());
        for (p, pair) in params.iter().zip(adam.chunks_exact(2)) {
            if pair[0].name != format!("adam.m.{}", p.name)
                || pair[1].name != format!("adam.v.{}", p.name)
                || pair[0].shape != p.shape
                || pair[1].shape != p.shape
            {
                return Err(Error::Format(format!("optimizer tensors for {} are malformed", p.name)));
            }
            m.push(pair[0].data.clone());
            v.push(pair[1].data.clone());
        }
        Some(OptimizerState {
            config: manifest
                .optimizer
                .adam
                .ok_or_else(|| Error::Format("optimizer hyperparameters missing".into()))?,
            t: manifest
                .optimizer
                .step
                .ok_or_else(|| Error::Format("optimizer step missing".into()))?,
            m,
            v,
        })
    } else {
        if !adam.is_empty() {
            return Err(Error::Format("optimizer tensors present but not declared".into()));
        }
        None
    };
    Ok(Checkpoint { model, optimizer })
}

/// Write `bytes` to a sibling temp file, sync, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::Error::other("path has no file name")))?;
    let tmp = dir.join(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn save_checkpoint(
    model: &LayerGraph<f32>,
    optimizer: Option<&OptimizerState<f32>>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_atomic(path.as_ref(), &encode(model, optimizer)?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
