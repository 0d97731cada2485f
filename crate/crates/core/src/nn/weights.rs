//! Binary weight container.
//!
//! Layout: the 8-byte magic `SPFOCUS\0`, a little-endian `u64` header length,
//! a UTF-8 JSON header, then every tensor as little-endian `f64` values in
//! header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{FocusModel, ModelConfig, NormalizationStats, Variant};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SPFOCUS\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset into the payload, in values.
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    variant: Variant,
    base_channels: usize,
    input_size: (usize, usize),
    normalization_stats: NormalizationStats,
    tensors: Vec<TensorEntry>,
}

pub fn to_bytes(model: &FocusModel) -> Vec<u8> {
    let mut offset = 0;
    let tensors = model
        .params()
        .iter()
        .map(|p| {
            let e = TensorEntry {
                name: p.name.clone(),
                shape: p.shape.clone(),
                offset,
            };
            offset += p.data.len();
            e
        })
        .collect();
    let cfg = model.config();
    let header = Header {
        format_version: FORMAT_VERSION,
        variant: cfg.variant,
        base_channels: cfg.base_channels,
        input_size: cfg.input_size,
        normalization_stats: model.normalization().clone(),
        tensors,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + offset * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.params().iter() {
        for v in &p.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses a container; `origin` is only used in error messages.
pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<FocusModel> {
    let fail = |reason: String| Error::load(origin, reason);
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(fail("not a weight file (bad magic)".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if hlen > body.len() {
        return Err(fail(format!("header length {hlen} exceeds file size")));
    }
    let header: Header =
        serde_json::from_slice(&body[..hlen]).map_err(|e| fail(format!("malformed header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(fail(format!(
            "format version {} is not supported (expected {FORMAT_VERSION})",
            header.format_version
        )));
    }
    let payload = &body[hlen..];
    let config = ModelConfig {
        variant: header.variant,
        base_channels: header.base_channels,
        input_size: header.input_size,
        ..ModelConfig::default()
    };
    let mut model = FocusModel::new(config, 0).map_err(|e| fail(format!("invalid architecture in header: {e}")))?;
    model
        .set_normalization(header.normalization_stats)
        .map_err(|e| fail(e.to_string()))?;
    let total: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if payload.len() != total * 8 {
        return Err(fail(format!(
            "payload holds {} bytes, header describes {}",
            payload.len(),
            total * 8
        )));
    }
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for t in header.tensors {
        let n: usize = t.shape.iter().product();
        let end = t.offset.checked_add(n).filter(|&e| e <= total);
        let Some(end) = end else {
            return Err(fail(format!("tensor {:?} lies outside the payload", t.name)));
        };
        let data = payload[t.offset * 8..end * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push((t.name, t.shape, data));
    }
    let variant = model.variant();
    model
        .replace_params(tensors)
        .map_err(|reason| fail(format!("weights do not fit the {variant} architecture: {reason}")))?;
    Ok(model)
}

pub fn save_weights(model: &FocusModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<FocusModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::load(path, e.to_string()))?;
    from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Image;

    fn small(v: Variant) -> FocusModel {
        FocusModel::new(ModelConfig::new(v, 4).with_input_size(32, 32), 3).unwrap()
    }

    fn tile() -> Image {
        Image::from_fn(32, 32, 3, |c, x, y| ((x * 7 + y * 3 + c) % 13) as f32 / 13.0)
    }

    #[test]
    fn round_trip_preserves_predictions_bitwise() {
        let m = small(Variant::Spatiospectral);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.spfw");
        save_weights(&m, &path).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(back.params(), m.params());
        assert_eq!(
            m.predict_one(&tile()).unwrap().to_bits(),
            back.predict_one(&tile()).unwrap().to_bits()
        );
    }

    #[test]
    fn mismatched_variant_tag_is_a_load_error() {
        let bytes = to_bytes(&small(Variant::Spatial));
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&bytes[16..16 + hlen]).unwrap();
        let patched = header.replacen("\"spatial\"", "\"spectral\"", 1);
        let mut forged = bytes[..8].to_vec();
        forged.extend_from_slice(&(patched.len() as u64).to_le_bytes());
        forged.extend_from_slice(patched.as_bytes());
        forged.extend_from_slice(&bytes[16 + hlen..]);
        let err = from_bytes(&forged, Path::new("forged")).unwrap_err();
        assert!(matches!(err, Error::Load { .. }), "{err}");
    }

    #[test]
    fn truncated_or_garbage_files_are_load_errors() {
        let bytes = to_bytes(&small(Variant::Spectral));
        for cut in [0, 5, 20, bytes.len() - 1] {
            assert!(matches!(from_bytes(&bytes[..cut], Path::new("t")), Err(Error::Load { .. })));
        }
        let missing = load_weights("/nonexistent/weights.spfw");
        assert!(matches!(missing, Err(Error::Load { .. })));
    }
}
