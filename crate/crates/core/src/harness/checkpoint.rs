//! `MLPT1` checkpoint format.
//!
//! ```text
//! magic     5 bytes   b"MLPT1"
//! meta_len  8 bytes   little-endian u64
//! meta      meta_len  UTF-8 JSON: format_version, scalar, episode,
//!                     cumulative_updates, config echo, tensor directory
//! payload   ...       little-endian f64 values, tensors in directory order
//! ```
//!
//! Directory offsets are byte offsets into the payload. Values are always
//! stored as f64 whatever the in-memory scalar type.

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParameterSet, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::config::RunConfig;

pub const MAGIC: &[u8; 5] = b"MLPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub config: RunConfig,
    /// Episodes completed when the checkpoint was taken.
    pub episode: u64,
    pub cumulative_updates: u64,
    pub params: ParameterSet<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    format_version: u32,
    scalar: String,
    episode: u64,
    cumulative_updates: u64,
    config: RunConfig,
    tensors: Vec<DirEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DirEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

pub fn save_checkpoint<T: Scalar>(ckpt: &Checkpoint<T>) -> Result<Vec<u8>> {
    let mut tensors = Vec::with_capacity(ckpt.params.len());
    let mut offset = 0u64;
    for (name, t) in ckpt.params.iter() {
        tensors.push(DirEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset,
        });
        offset += 8 * t.len() as u64;
    }
    let meta = Meta {
        format_version: FORMAT_VERSION,
        scalar: T::NAME.to_string(),
        episode: ckpt.episode,
        cumulative_updates: ckpt.cumulative_updates,
        config: ckpt.config.resolved(),
        tensors,
    };
    let meta = serde_json::to_vec(&meta)?;
    let mut out = Vec::with_capacity(MAGIC.len() + 8 + meta.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    for (_, t) in ckpt.params.iter() {
        for &v in t.data() {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    Ok(out)
}

pub fn load_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let reject = |why: String| Error::Checkpoint(why);
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(reject("bad magic, not an MLPT1 checkpoint".into()));
    }
    let rest = &bytes[MAGIC.len()..];
    if rest.len() < 8 {
        return Err(reject("truncated before metadata length".into()));
    }
    let meta_len = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes")) as usize;
    let rest = &rest[8..];
    if rest.len() < meta_len {
        return Err(reject(format!(
            "truncated metadata: need {meta_len} bytes, have {}",
            rest.len()
        )));
    }
    let meta: Meta = serde_json::from_slice(&rest[..meta_len])
        .map_err(|e| reject(format!("unreadable metadata: {e}")))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(reject(format!(
            "format version {} but this build reads {FORMAT_VERSION}",
            meta.format_version
        )));
    }
    let payload = &rest[meta_len..];
    let mut params = ParameterSet::new();
    let mut expected_offset = 0u64;
    for entry in &meta.tensors {
        if entry.offset != expected_offset {
            return Err(reject(format!(
                "tensor `{}` at offset {} but directory implies {expected_offset}",
                entry.name, entry.offset
            )));
        }
        let n: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let end = start + 8 * n;
        if end > payload.len() {
            return Err(reject(format!(
                "truncated payload: tensor `{}` needs bytes {start}..{end}, have {}",
                entry.name,
                payload.len()
            )));
        }
        let data: Vec<T> = payload[start..end]
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        params.insert(entry.name.clone(), Tensor::new(entry.shape.clone(), data)?)?;
        expected_offset = end as u64;
    }
    if expected_offset as usize != payload.len() {
        return Err(reject(format!(
            "{} trailing bytes after the last tensor",
            payload.len() - expected_offset as usize
        )));
    }
    Ok(Checkpoint {
        config: meta.config,
        episode: meta.episode,
        cumulative_updates: meta.cumulative_updates,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Checkpoint<f64> {
        let mut params = ParameterSet::new();
        params
            .insert("a", Tensor::new(vec![2, 2], vec![1.0, -0.0, f64::MIN_POSITIVE, 3.5]).unwrap())
            .unwrap();
        params.insert("b", Tensor::vector(vec![0.1, 0.2, 0.3])).unwrap();
        Checkpoint {
            config: RunConfig::default(),
            episode: 7,
            cumulative_updates: 56,
            params,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let ckpt = sample();
        let back: Checkpoint<f64> = load_checkpoint(&save_checkpoint(&ckpt).unwrap()).unwrap();
        assert!(back.params.bitwise_eq(&ckpt.params));
        assert_eq!(back.episode, 7);
        assert_eq!(back.cumulative_updates, 56);
        assert_eq!(back.config, ckpt.config.resolved());
    }

    #[test]
    fn layout_starts_with_magic_and_length() {
        let bytes = save_checkpoint(&sample()).unwrap();
        assert_eq!(&bytes[..5], b"MLPT1");
        let meta_len = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
        let meta: serde_json::Value = serde_json::from_slice(&bytes[13..13 + meta_len]).unwrap();
        assert_eq!(meta["tensors"][1]["offset"], 32);
        assert_eq!(bytes.len(), 13 + meta_len + 8 * 7);
        let first = f64::from_le_bytes(bytes[13 + meta_len..21 + meta_len].try_into().unwrap());
        assert_eq!(first, 1.0);
    }

    #[test]
    fn corrupted_inputs_rejected() {
        let bytes = save_checkpoint(&sample()).unwrap();
        let mut flipped = bytes.clone();
        flipped[0] ^= 0x20;
        assert!(matches!(load_checkpoint::<f64>(&flipped), Err(Error::Checkpoint(m)) if m.contains("magic")));
        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(load_checkpoint::<f64>(truncated), Err(Error::Checkpoint(m)) if m.contains("truncated")));
        assert!(load_checkpoint::<f64>(&bytes[..9]).is_err());
        let key = b"\"format_version\":1";
        let at = bytes.windows(key.len()).position(|w| w == key).unwrap();
        let mut bumped = bytes.clone();
        bumped[at + key.len() - 1] = b'2';
        assert!(matches!(load_checkpoint::<f64>(&bumped), Err(Error::Checkpoint(m)) if m.contains("version")));
    }

    proptest! {
        #[test]
        fn arbitrary_values_round_trip(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..40)) {
            let mut params = ParameterSet::new();
            params.insert("w", Tensor::vector(values)).unwrap();
            let ckpt = Checkpoint { config: RunConfig::default(), episode: 1, cumulative_updates: 8, params };
            let back: Checkpoint<f64> = load_checkpoint(&save_checkpoint(&ckpt).unwrap()).unwrap();
            prop_assert!(back.params.bitwise_eq(&ckpt.params));
        }
    }
}
