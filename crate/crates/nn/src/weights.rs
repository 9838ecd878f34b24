//! Binary weight files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic            4 bytes  "L3WT"
//! version          u32      = 1
//! levels           u32
//! base_channels    u32
//! convs_per_block  u32
//! head             u8       0 = heatmap1d, 1 = segmentation
//! classes          u32      0 for heatmap1d
//! input_channels   u32
//! seed             u64
//! param_count      u32
//! per parameter:
//!   name_len u16, name (UTF-8), trainable u8, ndim u8, dims u32 * ndim,
//!   values f32 * prod(dims)
//! ```
//!
//! Parameters are stored at 32-bit precision; loading widens them back to
//! `f64`, so save -> load -> save is byte-identical.

use std::fs;
use std::path::Path;

use crate::error::{NnError, Result};
use crate::unet::{build_unet, Head, Model, ModelSpec};

const MAGIC: &[u8; 4] = b"L3WT";
pub const WEIGHTS_VERSION: u32 = 1;

pub fn encode_weights(model: &Model) -> Vec<u8> {
    let spec = &model.spec;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    for v in [spec.levels, spec.base_channels, spec.convs_per_block] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    let (kind, classes) = match spec.head {
        Head::Heatmap1d => (0u8, 0u32),
        Head::Segmentation { classes } => (1u8, classes as u32),
    };
    out.push(kind);
    out.extend_from_slice(&classes.to_le_bytes());
    out.extend_from_slice(&(spec.input_channels as u32).to_le_bytes());
    out.extend_from_slice(&model.seed.to_le_bytes());
    let params = model.params();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(p.trainable as u8);
        out.push(p.value.shape().len() as u8);
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.value.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(NnError::PayloadLength {
                needed: self.pos + n,
                available: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NnError::Format("bad magic (not an L3WT weight file)".into()));
    }
    let version = r.u32()?;
    if version != WEIGHTS_VERSION {
        return Err(NnError::UnsupportedVersion {
            found: version,
            supported: WEIGHTS_VERSION,
        });
    }
    let levels = r.u32()? as usize;
    let base_channels = r.u32()? as usize;
    let convs_per_block = r.u32()? as usize;
    let kind = r.u8()?;
    let classes = r.u32()? as usize;
    let input_channels = r.u32()? as usize;
    let seed = r.u64()?;
    let head = match kind {
        0 => Head::Heatmap1d,
        1 => Head::Segmentation { classes },
        k => return Err(NnError::Format(format!("unknown head kind {k}"))),
    };
    let spec = ModelSpec {
        levels,
        base_channels,
        convs_per_block,
        head,
        input_channels,
    };
    let mut model = build_unet(spec, seed)?;
    let count = r.u32()? as usize;
    let mut params = model.params_mut();
    if count != params.len() {
        return Err(NnError::Format(format!(
            "spec implies {} parameters, file lists {count}",
            params.len()
        )));
    }
    for p in params.iter_mut() {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| NnError::Format("parameter name is not UTF-8".into()))?;
        if name != p.name {
            return Err(NnError::Format(format!(
                "expected parameter `{}`, found `{name}`",
                p.name
            )));
        }
        let trainable = r.u8()? != 0;
        let ndim = r.u8()? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(r.u32()? as usize);
        }
        if dims != p.value.shape() || trainable != p.trainable {
            return Err(NnError::Format(format!(
                "parameter `{name}` has shape {dims:?}, model expects {:?}",
                p.value.shape()
            )));
        }
        let raw = r.take(4 * p.value.len())?;
        for (dst, chunk) in p.value.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        }
    }
    if r.pos != bytes.len() {
        return Err(NnError::Format(format!(
            "{} trailing bytes after last parameter",
            bytes.len() - r.pos
        )));
    }
    Ok(model)
}

/// Human-readable echo of the model spec written next to the weights.
pub fn manifest_text(model: &Model) -> String {
    let s = &model.spec;
    let (head, classes) = match s.head {
        Head::Heatmap1d => ("heatmap1d", 1),
        Head::Segmentation { classes } => ("segmentation", classes),
    };
    format!(
        "format = L3WT\nversion = {WEIGHTS_VERSION}\nhead = {head}\nclasses = {classes}\n\
         levels = {}\nbase_channels = {}\nconvs_per_block = {}\ninput_channels = {}\n\
         seed = {}\nparameters = {}\n",
        s.levels,
        s.base_channels,
        s.convs_per_block,
        s.input_channels,
        model.seed,
        model.parameter_count()
    )
}

/// Writes `path` and a sidecar `path.manifest`.
pub fn save_weights(model: &Model, path: &Path) -> Result<()> {
    let io = |source| NnError::Io {
        path: path.display().to_string(),
        source,
    };
    fs::write(path, encode_weights(model)).map_err(io)?;
    let mut manifest = path.as_os_str().to_owned();
    manifest.push(".manifest");
    fs::write(&manifest, manifest_text(model)).map_err(io)
}

pub fn load_weights(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|source| NnError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_weights(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_byte_identical() {
        let m = build_unet(ModelSpec::segmentation(2, 4, 4), 3).unwrap();
        let bytes = encode_weights(&m);
        let again = encode_weights(&decode_weights(&bytes).unwrap());
        assert_eq!(bytes, again);
    }

    #[test]
    fn truncated_file_reports_payload_length() {
        let m = build_unet(ModelSpec::heatmap(1, 2), 3).unwrap();
        let bytes = encode_weights(&m);
        let err = decode_weights(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, NnError::PayloadLength { .. }), "{err}");
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let m = build_unet(ModelSpec::heatmap(1, 2), 3).unwrap();
        let mut bytes = encode_weights(&m);
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            decode_weights(&bytes),
            Err(NnError::UnsupportedVersion { found: 7, .. })
        ));
    }
}
