//! Versioned binary checkpoint format.
//!
//! Byte layout (all integers little-endian, all floats IEEE-754 f64 bits):
//!
//! ```text
//! magic            8  bytes   "GTCKPT01"
//! version          u32        currently 1
//! config_len       u32
//! config_text      config_len bytes of UTF-8 (canonical run config)
//! config_hash      u64        FNV-1a over config_text
//! store_count      u32
//! per store:
//!   name_len u32, name bytes
//!   lr, beta1, beta2, eps     4 x f64 (Adam hyperparameters)
//!   step            u64
//!   param_count     u32
//!   per param:
//!     name_len u32, name bytes
//!     rows u32, cols u32
//!     t               u64     per-parameter Adam step count
//!     values          rows*cols x f64
//!     m               rows*cols x f64
//!     v               rows*cols x f64
//! ```
//!
//! Round-trips are bit-exact: floats are serialized via their raw bits.

use super::params::{AdamConfig, ParamStore};
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"GTCKPT01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("bad magic: not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("config hash mismatch (stored {stored:#x}, computed {computed:#x})")]
    HashMismatch { stored: u64, computed: u64 },
    #[error("truncated checkpoint ({0})")]
    Truncated(&'static str),
    #[error("malformed checkpoint ({0})")]
    Malformed(&'static str),
}

/// A decoded checkpoint: the canonical config it was produced from plus the
/// named parameter stores.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config_text: String,
    pub stores: Vec<(String, ParamStore)>,
}

impl Checkpoint {
    pub fn store(&self, name: &str) -> Option<&ParamStore> {
        self.stores.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }
}

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn encode_checkpoint(config_text: &str, stores: &[(&str, &ParamStore)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(config_text.len() as u32).to_le_bytes());
    out.extend_from_slice(config_text.as_bytes());
    out.extend_from_slice(&fnv1a64(config_text.as_bytes()).to_le_bytes());
    out.extend_from_slice(&(stores.len() as u32).to_le_bytes());
    for (name, store) in stores {
        write_str(&mut out, name);
        let AdamConfig { lr, beta1, beta2, eps } = store.cfg;
        for x in [lr, beta1, beta2, eps] {
            out.extend_from_slice(&x.to_bits().to_le_bytes());
        }
        out.extend_from_slice(&store.step.to_le_bytes());
        out.extend_from_slice(&(store.len() as u32).to_le_bytes());
        for id in store.ids() {
            write_str(&mut out, store.name(id));
            let (rows, cols) = store.shape(id);
            out.extend_from_slice(&(rows as u32).to_le_bytes());
            out.extend_from_slice(&(cols as u32).to_le_bytes());
            out.extend_from_slice(&store.t[id.0].to_le_bytes());
            for arr in [&store.values[id.0], &store.m[id.0], &store.v[id.0]] {
                for &x in arr.iter() {
                    out.extend_from_slice(&x.to_bits().to_le_bytes());
                }
            }
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(8, "magic")?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = cur.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let config_text = cur.string("config")?;
    let stored = cur.u64("config hash")?;
    let computed = fnv1a64(config_text.as_bytes());
    if stored != computed {
        return Err(CheckpointError::HashMismatch { stored, computed });
    }
    let store_count = cur.u32("store count")? as usize;
    if store_count > 64 {
        return Err(CheckpointError::Malformed("implausible store count"));
    }
    let mut stores = Vec::with_capacity(store_count);
    for _ in 0..store_count {
        let store_name = cur.string("store name")?;
        let lr = cur.f64("lr")?;
        let beta1 = cur.f64("beta1")?;
        let beta2 = cur.f64("beta2")?;
        let eps = cur.f64("eps")?;
        let step = cur.u64("step")?;
        let param_count = cur.u32("param count")? as usize;
        let mut store = ParamStore::new(AdamConfig { lr, beta1, beta2, eps });
        store.step = step;
        for _ in 0..param_count {
            let pname = cur.string("param name")?;
            let rows = cur.u32("rows")? as usize;
            let cols = cur.u32("cols")? as usize;
            let t = cur.u64("param step")?;
            let n = rows
                .checked_mul(cols)
                .ok_or(CheckpointError::Malformed("shape overflow"))?;
            // three f64 arrays of n elements must fit in what's left
            if n > cur.remaining() / 24 + 1 {
                return Err(CheckpointError::Truncated("parameter data"));
            }
            if store.id(&pname).is_some() {
                return Err(CheckpointError::Malformed("duplicate parameter name"));
            }
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
            let id = store.add_param(&pname, rows, cols, super::params::Init::Zeros, &mut rng);
            store.t[id.0] = t;
            store.values[id.0] = cur.f64_vec(n, "values")?;
            store.m[id.0] = cur.f64_vec(n, "m")?;
            store.v[id.0] = cur.f64_vec(n, "v")?;
        }
        stores.push((store_name, store));
    }
    if cur.remaining() != 0 {
        return Err(CheckpointError::Malformed("trailing bytes"));
    }
    Ok(Checkpoint { config_text, stores })
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.remaining() < n {
            return Err(CheckpointError::Truncated(what));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &'static str) -> Result<f64, CheckpointError> {
        Ok(f64::from_bits(self.u64(what)?))
    }

    fn f64_vec(&mut self, n: usize, what: &'static str) -> Result<Vec<f64>, CheckpointError> {
        let raw = self.take(n * 8, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }

    fn string(&mut self, what: &'static str) -> Result<String, CheckpointError> {
        let len = self.u32(what)? as usize;
        if len > 1 << 20 {
            return Err(CheckpointError::Malformed("implausible string length"));
        }
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| CheckpointError::Malformed("invalid UTF-8"))
    }
}

use rand::SeedableRng;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::params::Init;
    use rand_chacha::ChaCha8Rng;

    fn sample_store(seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new(AdamConfig::with_lr(3e-4));
        store.add_param("enc.w", 4, 3, Init::Xavier, &mut rng);
        store.add_param("enc.b", 4, 1, Init::Zeros, &mut rng);
        store.add_param("head.w", 2, 4, Init::Xavier, &mut rng);
        store.step = 17;
        store
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let store = sample_store(9);
        let disc = sample_store(10);
        let cfg = "seed = 9\nepisodes = 100\n";
        let bytes = encode_checkpoint(cfg, &[("policy", &store), ("disc", &disc)]);
        let decoded = decode_checkpoint(&bytes).unwrap();
        assert_eq!(decoded.config_text, cfg);
        let bytes2 = encode_checkpoint(
            &decoded.config_text,
            &decoded
                .stores
                .iter()
                .map(|(n, s)| (n.as_str(), s))
                .collect::<Vec<_>>(),
        );
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn rejects_bad_magic() {
        let store = sample_store(1);
        let mut bytes = encode_checkpoint("x = 1\n", &[("policy", &store)]);
        bytes[0] ^= 0xff;
        assert_eq!(decode_checkpoint(&bytes), Err(CheckpointError::BadMagic));
    }

    #[test]
    fn rejects_bad_version() {
        let store = sample_store(1);
        let mut bytes = encode_checkpoint("x = 1\n", &[("policy", &store)]);
        bytes[8] = 0xfe;
        assert!(matches!(decode_checkpoint(&bytes), Err(CheckpointError::UnsupportedVersion(_))));
    }

    #[test]
    fn rejects_corrupted_config() {
        let store = sample_store(1);
        let mut bytes = encode_checkpoint("seed = 1\n", &[("policy", &store)]);
        // flip a config byte: hash check must fail
        bytes[16] ^= 0x01;
        assert!(matches!(decode_checkpoint(&bytes), Err(CheckpointError::HashMismatch { .. })));
    }

    #[test]
    fn rejects_truncation_anywhere() {
        let store = sample_store(1);
        let bytes = encode_checkpoint("seed = 1\n", &[("policy", &store)]);
        for cut in [3, 10, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(decode_checkpoint(&bytes[..cut]).is_err(), "cut at {cut} accepted");
        }
    }

    #[test]
    fn decode_never_panics_on_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        use rand::Rng;
        for _ in 0..500 {
            let len = rng.random_range(0..200);
            let noise: Vec<u8> = (0..len).map(|_| rng.random()).collect();
            let _ = decode_checkpoint(&noise);
        }
    }
}
