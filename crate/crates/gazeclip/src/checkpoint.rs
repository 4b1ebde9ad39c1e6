//! Checkpoint file format: magic `GZCLIP01`, a format version, the config
//! echo as flat text, then every parameter in store order as
//! (name, frozen flag, shape, little-endian f32 values).
//! Save -> load -> save is byte-identical.

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::params::ParameterStore;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"GZCLIP01";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(store: &ParameterStore, cfg: &ModelConfig) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let echo = cfg.to_text();
    out.extend_from_slice(&(echo.len() as u32).to_le_bytes());
    out.extend_from_slice(echo.as_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, param) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(u8::from(param.frozen));
        out.extend_from_slice(&(param.shape.len() as u32).to_le_bytes());
        for &d in &param.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &param.values {
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
        if self.pos + n > self.bytes.len() {
            return Err(Error::Data("checkpoint truncated".into()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

pub fn decode(bytes: &[u8]) -> Result<(ParameterStore, ModelConfig)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Data("not a checkpoint: bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Version(format!(
            "checkpoint format {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let echo_len = r.u32()? as usize;
    let echo = std::str::from_utf8(r.take(echo_len)?)
        .map_err(|_| Error::Data("config echo is not UTF-8".into()))?;
    let cfg = ModelConfig::from_text(echo)?;
    let count = r.u32()? as usize;
    let mut store = ParameterStore::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Data("parameter name is not UTF-8".into()))?
            .to_string();
        let frozen = r.u8()? != 0;
        let ndim = r.u32()? as usize;
        if ndim > 8 {
            return Err(Error::Data(format!("parameter `{name}` claims {ndim} dims")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Data(format!("parameter `{name}` shape overflows")))?;
        // The remaining bytes bound the element count; check before
        // allocating.
        if numel > (bytes.len() - r.pos) / 4 {
            return Err(Error::Data("checkpoint truncated".into()));
        }
        let mut values = Vec::with_capacity(numel);
        for _ in 0..numel {
            let b = r.take(4)?;
            values.push(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64);
        }
        store.insert(&name, shape, values, frozen)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Data(format!(
            "checkpoint has {} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok((store, cfg))
}

pub fn save(store: &ParameterStore, cfg: &ModelConfig, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(&encode(store, cfg))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(ParameterStore, ModelConfig)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_store;

    #[test]
    fn save_load_save_is_byte_identical() {
        let cfg = ModelConfig::desk();
        let store = build_store(&cfg, Some(40), 3).unwrap();
        let first = encode(&store, &cfg);
        let (loaded, cfg2) = decode(&first).unwrap();
        assert_eq!(cfg2, cfg);
        let second = encode(&loaded, &cfg2);
        assert_eq!(first, second);
    }

    #[test]
    fn f32_mode_round_trip_is_bitwise_on_values() {
        // In f32 precision every stored value is f32-representable, so the
        // store survives a round trip bitwise.
        let cfg = ModelConfig::desk();
        let store = build_store(&cfg, Some(40), 5).unwrap();
        let (loaded, _) = decode(&encode(&store, &cfg)).unwrap();
        for (name, p) in store.iter() {
            let q = loaded.get(name).unwrap();
            assert_eq!(p.frozen, q.frozen);
            assert_eq!(p.shape, q.shape);
            for (a, b) in p.values.iter().zip(&q.values) {
                assert_eq!(a.to_bits(), b.to_bits(), "{name}");
            }
        }
    }

    #[test]
    fn bad_magic_is_data_error() {
        let err = decode(b"NOTMAGIC").unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn wrong_version_is_version_error() {
        let cfg = ModelConfig::desk();
        let store = build_store(&cfg, Some(10), 1).unwrap();
        let mut bytes = encode(&store, &cfg);
        bytes[8] = 9;
        let err = decode(&bytes).unwrap_err();
        assert!(matches!(err, Error::Version(_)));
    }

    #[test]
    fn absurd_shape_header_is_rejected_before_allocation() {
        let cfg = ModelConfig::desk();
        let mut store = ParameterStore::new();
        store.insert("w", vec![2], vec![1.0, 2.0], false).unwrap();
        let mut bytes = encode(&store, &cfg);
        // Rewrite the single dim (2) to u32::MAX.
        let dim_pos = bytes.len() - 2 * 4 - 4;
        bytes[dim_pos..dim_pos + 4].copy_from_slice(&u32::MAX.to_le_bytes());
        let err = decode(&bytes).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err:?}");
    }

    #[test]
    fn truncated_file_is_data_error() {
        let cfg = ModelConfig::desk();
        let store = build_store(&cfg, Some(10), 1).unwrap();
        let bytes = encode(&store, &cfg);
        let err = decode(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }
}
