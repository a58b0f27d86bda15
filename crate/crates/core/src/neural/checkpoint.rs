//! Single-file checkpoint container.
//!
//! ```text
//! offset  size  content
//! 0       8     magic "PFNNCKPT"
//! 8       4     format version, u32 little-endian
//! 12      8     header length H, u64 little-endian
//! 20      H     UTF-8 JSON header: format_version, config, input_names,
//!               layers, param_count, input_scaler, output_scaler, provenance
//! 20+H    8*P   P = param_count parameters, f64 little-endian; for each layer
//!               in order, weights W[i][o] row-major (in × out), then biases
//! end-32  32    SHA-256 of every preceding byte
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LayerShape, ModelConfig, Network, Provenance, Scaler, TrainedModel};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PFNNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_START: usize = 20;
const DIGEST_LEN: usize = 32;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    input_names: Vec<String>,
    layers: Vec<LayerShape>,
    param_count: usize,
    input_scaler: Scaler,
    output_scaler: Scaler,
    provenance: Provenance,
}

/// Serializes `model` into the checkpoint byte layout.
pub fn write_checkpoint(model: &TrainedModel) -> Result<Vec<u8>> {
    model.validate()?;
    let header = Header {
        format_version: CHECKPOINT_VERSION,
        config: model.config.clone(),
        input_names: model.input_names.clone(),
        layers: model.network.layers().to_vec(),
        param_count: model.network.param_count(),
        input_scaler: model.input_scaler.clone(),
        output_scaler: model.output_scaler.clone(),
        provenance: model.provenance.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(HEADER_START + json.len() + 8 * header.param_count + DIGEST_LEN);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.network.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

/// Parses checkpoint bytes; `path` only labels diagnostics.
pub fn read_checkpoint(bytes: &[u8], path: &Path) -> Result<TrainedModel> {
    let fail = |offset: usize, message: String| Error::Checkpoint {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    if bytes.len() < HEADER_START {
        return Err(fail(bytes.len(), format!("file is {} bytes, shorter than the fixed preamble", bytes.len())));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(fail(0, "bad magic; not a model checkpoint".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(fail(
            8,
            format!("unsupported format version {version}, expected {CHECKPOINT_VERSION}"),
        ));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let header_end = usize::try_from(header_len)
        .ok()
        .and_then(|h| HEADER_START.checked_add(h))
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| fail(12, format!("header length {header_len} runs past end of file")))?;
    let header: Header = serde_json::from_slice(&bytes[HEADER_START..header_end]).map_err(|e| {
        let at = HEADER_START + e.column().saturating_sub(1);
        fail(at, format!("invalid header: {e}"))
    })?;
    if header.format_version != version {
        return Err(fail(HEADER_START, "header version disagrees with preamble".into()));
    }
    let data_end = header
        .param_count
        .checked_mul(8)
        .and_then(|n| header_end.checked_add(n))
        .ok_or_else(|| fail(HEADER_START, "parameter count overflows".into()))?;
    if data_end + DIGEST_LEN > bytes.len() {
        return Err(fail(
            bytes.len(),
            format!(
                "truncated: expected {} bytes of parameters and checksum after offset {header_end}",
                data_end + DIGEST_LEN - header_end
            ),
        ));
    }
    if data_end + DIGEST_LEN < bytes.len() {
        return Err(fail(data_end + DIGEST_LEN, "unexpected trailing bytes".into()));
    }
    let digest = Sha256::digest(&bytes[..data_end]);
    if digest.as_slice() != &bytes[data_end..] {
        return Err(fail(data_end, "checksum mismatch; file is corrupted".into()));
    }
    let params: Vec<f64> = bytes[header_end..data_end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if let Some(k) = params.iter().position(|p| !p.is_finite()) {
        return Err(fail(header_end + 8 * k, "non-finite parameter".into()));
    }
    let network = Network::from_parts(header.layers, header.config.activation, params)
        .map_err(|e| fail(HEADER_START, format!("inconsistent layer table: {e}")))?;
    let model = TrainedModel {
        config: header.config,
        input_names: header.input_names,
        network,
        input_scaler: header.input_scaler,
        output_scaler: header.output_scaler,
        provenance: header.provenance,
    };
    model
        .validate()
        .map_err(|e| fail(HEADER_START, format!("inconsistent header: {e}")))?;
    Ok(model)
}

pub fn save_checkpoint(model: &TrainedModel, path: &Path) -> Result<()> {
    let bytes = write_checkpoint(model)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes, path)
}
