//! Checkpoint serialization.
//!
//! Binary layout, per parameter in sorted name order:
//! `u32 name_len | name bytes | u32 rank | u32 dims[rank] | f32 data[numel]`,
//! all little-endian. A JSON manifest of names and shapes is written next to
//! the binary.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::params::ModelParams;
use super::Tensor;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("manifest error: {0}")]
    Manifest(#[from] serde_json::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    params: Vec<ManifestEntry>,
}

/// Manifest path for a given checkpoint binary: `model.bin` ->
/// `model.manifest.json`.
pub fn manifest_path(bin: &Path) -> PathBuf {
    let stem = bin.file_stem().map(|s| s.to_string_lossy().to_string()).unwrap_or_default();
    bin.with_file_name(format!("{stem}.manifest.json"))
}

pub fn save_checkpoint(params: &ModelParams, bin: &Path) -> Result<(), CheckpointError> {
    let mut out = Vec::new();
    let mut manifest = Manifest { params: Vec::new() };
    for (name, t) in params.iter() {
        let bytes = name.as_bytes();
        out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(bytes);
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &t.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        manifest.params.push(ManifestEntry { name: name.clone(), shape: t.shape.clone() });
    }
    let mut f = fs::File::create(bin)?;
    f.write_all(&out)?;
    let mf = fs::File::create(manifest_path(bin))?;
    serde_json::to_writer_pretty(mf, &manifest)?;
    Ok(())
}

fn read_u32(buf: &[u8], pos: &mut usize) -> Result<u32, CheckpointError> {
    if *pos + 4 > buf.len() {
        return Err(CheckpointError::Format("truncated record".into()));
    }
    let v = u32::from_le_bytes(buf[*pos..*pos + 4].try_into().unwrap());
    *pos += 4;
    Ok(v)
}

pub fn load_checkpoint(bin: &Path) -> Result<ModelParams, CheckpointError> {
    let mut buf = Vec::new();
    fs::File::open(bin)?.read_to_end(&mut buf)?;
    let mut params = ModelParams::new();
    let mut pos = 0;
    while pos < buf.len() {
        let name_len = read_u32(&buf, &mut pos)? as usize;
        if pos + name_len > buf.len() {
            return Err(CheckpointError::Format("truncated name".into()));
        }
        let name = String::from_utf8(buf[pos..pos + name_len].to_vec())
            .map_err(|_| CheckpointError::Format("parameter name is not utf-8".into()))?;
        pos += name_len;
        let rank = read_u32(&buf, &mut pos)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&buf, &mut pos)? as usize);
        }
        let numel: usize = shape.iter().product();
        if pos + numel * 4 > buf.len() {
            return Err(CheckpointError::Format(format!("truncated data for {name}")));
        }
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            let v = f32::from_le_bytes(buf[pos..pos + 4].try_into().unwrap());
            pos += 4;
            data.push(v as f64);
        }
        let t = Tensor::new(shape, data)
            .map_err(|e| CheckpointError::Format(format!("{name}: {e}")))?;
        params.insert(&name, t);
    }
    // Cross-check the manifest when present.
    let mp = manifest_path(bin);
    if mp.exists() {
        let manifest: Manifest = serde_json::from_reader(fs::File::open(mp)?)?;
        for entry in &manifest.params {
            match params.get(&entry.name) {
                Some(t) if t.shape == entry.shape => {}
                Some(t) => {
                    return Err(CheckpointError::Format(format!(
                        "manifest shape {:?} disagrees with binary shape {:?} for {}",
                        entry.shape, t.shape, entry.name
                    )))
                }
                None => {
                    return Err(CheckpointError::Format(format!(
                        "manifest names {} which is absent from the binary",
                        entry.name
                    )))
                }
            }
        }
    }
    Ok(params)
}
