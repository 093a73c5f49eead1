//! Checkpoints: a JSON descriptor next to a little-endian f64 blob.
//!
//! `<base>.json` holds the caller's architecture document plus the
//! parameter table (names, dims, blob offsets) and optional optimizer
//! metadata; `<base>.bin` holds raw IEEE-754 payloads — parameters first,
//! then Adam's first and second moments when present — so round-trips are
//! bit-exact, matching the raster convention.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adam::AdamState;
use crate::error::NnError;
use crate::param::{Param, ParamSet};

const BLOB_MAGIC: [u8; 4] = *b"FBCK";
const BLOB_VERSION: u16 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    dims: Vec<usize>,
    /// Offset into the blob, in f64 elements (not bytes).
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct AdamMeta {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step_count: u64,
    /// Element offsets of the m and v sections in the blob.
    m_offset: usize,
    v_offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Descriptor {
    format_version: u16,
    architecture: serde_json::Value,
    params: Vec<ParamMeta>,
    adam: Option<AdamMeta>,
    total_values: usize,
}

fn json_path(base: &Path) -> PathBuf {
    base.with_extension("json")
}

fn bin_path(base: &Path) -> PathBuf {
    base.with_extension("bin")
}

/// Write `<base>.json` and `<base>.bin`.
pub fn save_checkpoint(
    base: &Path,
    architecture: &serde_json::Value,
    params: &ParamSet,
    adam: Option<&AdamState>,
) -> Result<(), NnError> {
    if let Some(parent) = base.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut metas = Vec::with_capacity(params.len());
    let mut blob: Vec<f64> = Vec::with_capacity(params.total_values());
    for p in params.iter() {
        metas.push(ParamMeta {
            name: p.name.clone(),
            dims: p.dims.clone(),
            offset: blob.len(),
        });
        blob.extend_from_slice(&p.values);
    }
    let adam_meta = match adam {
        Some(state) => {
            if state.m.len() != params.len() {
                return Err(NnError::Checkpoint(format!(
                    "adam has {} moment buffers for {} params",
                    state.m.len(),
                    params.len()
                )));
            }
            let m_offset = blob.len();
            for m in &state.m {
                blob.extend_from_slice(m);
            }
            let v_offset = blob.len();
            for v in &state.v {
                blob.extend_from_slice(v);
            }
            Some(AdamMeta {
                learning_rate: state.learning_rate,
                beta1: state.beta1,
                beta2: state.beta2,
                epsilon: state.epsilon,
                step_count: state.step_count,
                m_offset,
                v_offset,
            })
        }
        None => None,
    };
    let descriptor = Descriptor {
        format_version: BLOB_VERSION,
        architecture: architecture.clone(),
        params: metas,
        adam: adam_meta,
        total_values: blob.len(),
    };
    let json = serde_json::to_string_pretty(&descriptor)
        .map_err(|e| NnError::Checkpoint(e.to_string()))?;
    std::fs::write(json_path(base), json + "\n")?;

    let mut bytes = Vec::with_capacity(8 + blob.len() * 8);
    bytes.extend_from_slice(&BLOB_MAGIC);
    bytes.extend_from_slice(&BLOB_VERSION.to_le_bytes());
    bytes.extend_from_slice(&[0, 0]);
    for &v in &blob {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(bin_path(base), bytes)?;
    Ok(())
}

/// Load a checkpoint; returns the architecture document, parameters, and
/// Adam state when one was saved.
pub fn load_checkpoint(
    base: &Path,
) -> Result<(serde_json::Value, ParamSet, Option<AdamState>), NnError> {
    let text = std::fs::read_to_string(json_path(base))?;
    let descriptor: Descriptor =
        serde_json::from_str(&text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    if descriptor.format_version != BLOB_VERSION {
        return Err(NnError::Checkpoint(format!(
            "unsupported checkpoint version {}",
            descriptor.format_version
        )));
    }
    let bytes = std::fs::read(bin_path(base))?;
    if bytes.len() < 8 || bytes[0..4] != BLOB_MAGIC {
        return Err(NnError::Checkpoint("bad blob header".into()));
    }
    if u16::from_le_bytes([bytes[4], bytes[5]]) != BLOB_VERSION {
        return Err(NnError::Checkpoint("blob version mismatch".into()));
    }
    let payload = &bytes[8..];
    if payload.len() != descriptor.total_values * 8 {
        return Err(NnError::Checkpoint(format!(
            "blob holds {} bytes, descriptor expects {}",
            payload.len(),
            descriptor.total_values * 8
        )));
    }
    let blob: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();

    let take = |offset: usize, len: usize| -> Result<Vec<f64>, NnError> {
        blob.get(offset..offset + len)
            .map(|s| s.to_vec())
            .ok_or_else(|| NnError::Checkpoint(format!("blob range {offset}+{len} out of bounds")))
    };

    let mut params = ParamSet::new();
    for meta in &descriptor.params {
        let len: usize = meta.dims.iter().product();
        params.push(Param::new(
            meta.name.clone(),
            meta.dims.clone(),
            take(meta.offset, len)?,
        )?)?;
    }

    let adam = match &descriptor.adam {
        Some(meta) => {
            let mut m = Vec::with_capacity(descriptor.params.len());
            let mut v = Vec::with_capacity(descriptor.params.len());
            let mut m_off = meta.m_offset;
            let mut v_off = meta.v_offset;
            for pm in &descriptor.params {
                let len: usize = pm.dims.iter().product();
                m.push(take(m_off, len)?);
                v.push(take(v_off, len)?);
                m_off += len;
                v_off += len;
            }
            Some(AdamState {
                learning_rate: meta.learning_rate,
                beta1: meta.beta1,
                beta2: meta.beta2,
                epsilon: meta.epsilon,
                step_count: meta.step_count,
                m,
                v,
            })
        }
        None => None,
    };

    Ok((descriptor.architecture, params, adam))
}
