//! Binary checkpoint format, little endian throughout:
//!
//! ```text
//! magic "NBXCKPT\x01"
//! u32 len, config JSON
//! u32 len, config hash (hex)
//! u32 tensor count
//!   per tensor: u32 name len, name, u32 ndim, u64 dims..., f64 values...
//! 32-byte sha256 of everything above
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use super::model::{ModelConfig, ModelParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"NBXCKPT\x01";
const DIGEST_LEN: usize = 32;

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len());
    buf.extend_from_slice(s.as_bytes());
}

pub fn encode_checkpoint(params: &ModelParams) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 * params.num_params());
    buf.extend_from_slice(MAGIC);
    put_str(
        &mut buf,
        &serde_json::to_string(&params.config).expect("config serializes"),
    );
    put_str(&mut buf, &params.config.hash());
    let layers = params.layers();
    let names = params.layer_names();
    put_u32(&mut buf, 2 * layers.len());
    for (layer, name) in layers.iter().zip(&names) {
        for (suffix, dims, values) in [
            (
                "weight",
                vec![layer.fan_in(), layer.fan_out()],
                layer.params()[0],
            ),
            ("bias", vec![layer.fan_out()], layer.params()[1]),
        ] {
            put_str(&mut buf, &format!("{name}.{suffix}"));
            put_u32(&mut buf, dims.len());
            for d in dims {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

/// Writes atomically: a temporary sibling is renamed over `path`.
pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, encode_checkpoint(params))
        .map_err(|e| Error::io(format!("write {}", tmp.display()), e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(format!("rename to {}", path.display()), e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("unexpected end of data at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> std::result::Result<usize, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")) as usize)
    }

    fn string(&mut self) -> std::result::Result<String, String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| e.to_string())
    }
}

/// Decodes a checkpoint; `expected` rejects files written for another config.
pub fn decode_checkpoint(
    bytes: &[u8],
    expected: Option<&ModelConfig>,
    path: &Path,
) -> Result<ModelParams> {
    let corrupt = |reason: String| Error::CorruptCheckpoint {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < MAGIC.len() + DIGEST_LEN || &bytes[..MAGIC.len()] != MAGIC {
        return Err(corrupt("bad magic or truncated header".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch (truncated or modified)".into()));
    }
    let mut r = Reader {
        bytes: body,
        pos: MAGIC.len(),
    };
    let config_json = r.string().map_err(corrupt)?;
    let hash = r.string().map_err(corrupt)?;
    let config: ModelConfig =
        serde_json::from_str(&config_json).map_err(|e| corrupt(format!("config: {e}")))?;
    if config.hash() != hash {
        return Err(corrupt("stored hash does not match stored config".into()));
    }
    if let Some(exp) = expected {
        let want = exp.hash();
        if want != hash {
            return Err(Error::ConfigHashMismatch {
                expected: want,
                found: hash,
            });
        }
    }
    let mut params = ModelParams::init(&config, 0)?;
    let names = params.layer_names();
    let count = r.u32().map_err(corrupt)?;
    if count != 2 * names.len() {
        return Err(corrupt(format!(
            "{count} tensors, expected {}",
            2 * names.len()
        )));
    }
    for (layer, name) in params.layers_mut().into_iter().zip(&names) {
        for (k, slot) in layer.params_mut().into_iter().enumerate() {
            let want_name = format!("{name}.{}", if k == 0 { "weight" } else { "bias" });
            let got = r.string().map_err(corrupt)?;
            if got != want_name {
                return Err(corrupt(format!("tensor {got}, expected {want_name}")));
            }
            let ndim = r.u32().map_err(corrupt)?;
            let mut len = 1usize;
            for _ in 0..ndim {
                len = len.saturating_mul(r.u64().map_err(corrupt)?);
            }
            if len != slot.len() {
                return Err(corrupt(format!(
                    "{got} has {len} values, expected {}",
                    slot.len()
                )));
            }
            let raw = r.take(8 * len).map_err(corrupt)?;
            for (v, chunk) in slot.iter_mut().zip(raw.chunks_exact(8)) {
                *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            }
        }
    }
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes".into()));
    }
    Ok(params)
}

pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<ModelParams> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    decode_checkpoint(&bytes, expected, path)
}
