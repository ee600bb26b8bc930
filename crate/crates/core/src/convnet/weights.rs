//! Reader and writer for VGGW weight files.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! "VGGW"  u32 version (=1)  u32 layer_count
//! per layer:
//!     u16 name_len  name (UTF-8)  u8 tensor_count (=2)
//!     per tensor: u32 ndim  ndim × u32 extents  product(extents) × f32
//! ```
//!
//! The first tensor of a layer is its kernel (out, in, 3, 3), the second its
//! bias (out). Values are widened to `f64` on load.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::topology::NetworkTopology;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"VGGW";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Pretrained convolution parameters keyed by layer name. Never modified
/// after load.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    layers: BTreeMap<String, ConvParams>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, params: ConvParams) {
        self.layers.insert(name.to_string(), params);
    }

    pub fn get(&self, name: &str) -> Option<&ConvParams> {
        self.layers.get(name)
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ConvParams)> {
        self.layers.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Checks that every convolution in `topology` has parameters of the
    /// right shape and that no extra layers are present.
    pub fn validate(&self, topology: &NetworkTopology) -> Result<()> {
        let mut expected = 0;
        for (name, c_in, c_out) in topology.conv_layers() {
            expected += 1;
            let p = self
                .get(name)
                .ok_or_else(|| Error::Topology(format!("missing layer `{name}`")))?;
            if p.weights.shape() != [c_out, c_in, 3, 3] {
                return Err(Error::Topology(format!(
                    "layer `{name}` kernel has shape {:?}, expected {:?}",
                    p.weights.shape(),
                    [c_out, c_in, 3, 3]
                )));
            }
            if p.bias.shape() != [c_out] {
                return Err(Error::Topology(format!(
                    "layer `{name}` bias has shape {:?}, expected [{c_out}]",
                    p.bias.shape()
                )));
            }
        }
        if self.len() != expected {
            let extra: Vec<_> = self
                .layers
                .keys()
                .filter(|k| topology.index_of(k).is_none())
                .cloned()
                .collect();
            return Err(Error::Topology(format!("unexpected layers {extra:?}")));
        }
        Ok(())
    }
}

/// Truncated hex SHA-256 over a layer's kernel then bias, both as
/// little-endian `f32`.
pub fn layer_checksum(params: &ConvParams) -> String {
    let mut h = Sha256::new();
    for v in params.weights.data().iter().chain(params.bias.data()) {
        h.update((*v as f32).to_le_bytes());
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: impl FnOnce() -> String) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated {
                offset: self.pos as u64,
                what: format!("{} ({n} bytes needed, {} left)", what(), self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: impl FnOnce() -> String) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: impl FnOnce() -> String) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: impl FnOnce() -> String) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn tensor(&mut self, layer: &str, role: &str) -> Result<Tensor> {
        let ndim = self.u32(|| format!("{layer} {role} rank"))? as usize;
        if ndim == 0 || ndim > 8 {
            return Err(Error::Format(format!("{layer} {role}: unsupported rank {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for d in 0..ndim {
            shape.push(self.u32(|| format!("{layer} {role} extent {d}"))? as usize);
        }
        if shape.contains(&0) {
            return Err(Error::Format(format!("{layer} {role}: zero extent in {shape:?}")));
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format(format!("{layer} {role}: shape {shape:?} overflows")))?;
        let start = self.pos;
        let raw = self.take(count, || format!("{layer} {role} values"))?;
        let mut data = Vec::with_capacity(count / 4);
        for (i, chunk) in raw.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::Corrupt(format!(
                    "{layer} {role}: non-finite value at byte offset {}",
                    start + 4 * i
                )));
            }
            data.push(v as f64);
        }
        Tensor::from_vec(&shape, data)
    }
}

/// Parses a VGGW image without checking it against a topology.
pub fn parse_weights(bytes: &[u8]) -> Result<WeightStore> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, || "magic".into())?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"VGGW\"",
            String::from_utf8_lossy(magic)
        )));
    }
    let version = r.u32(|| "version".into())?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}, expected {VERSION}")));
    }
    let count = r.u32(|| "layer count".into())?;
    let mut store = WeightStore::new();
    for i in 0..count {
        let name_len = r.u16(|| format!("name length of layer #{i}"))? as usize;
        let name = std::str::from_utf8(r.take(name_len, || format!("name of layer #{i}"))?)
            .map_err(|_| Error::Format(format!("layer #{i} name is not UTF-8")))?
            .to_string();
        let tensors = r.u8(|| format!("{name} tensor count"))?;
        if tensors != 2 {
            return Err(Error::Format(format!("{name}: tensor count {tensors}, expected 2")));
        }
        let weights = r.tensor(&name, "kernel")?;
        let bias = r.tensor(&name, "bias")?;
        if store.get(&name).is_some() {
            return Err(Error::Format(format!("duplicate layer `{name}`")));
        }
        store.insert(&name, ConvParams { weights, bias });
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after last layer (offset {})",
            bytes.len() - r.pos,
            r.pos
        )));
    }
    Ok(store)
}

/// Reads a VGGW file and checks it matches `topology` exactly.
pub fn load_weights(path: impl AsRef<Path>, topology: &NetworkTopology) -> Result<WeightStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let store = parse_weights(&bytes)?;
    store.validate(topology)?;
    Ok(store)
}

/// Serializes `store` with layers in topology order (values narrowed to
/// `f32`).
pub fn encode_weights(store: &WeightStore, topology: &NetworkTopology) -> Result<Vec<u8>> {
    store.validate(topology)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, _, _) in topology.conv_layers() {
        let p = store.get(name).expect("validated");
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(2);
        for t in [&p.weights, &p.bias] {
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &e in t.shape() {
                out.extend_from_slice(&(e as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn save_weights(
    path: impl AsRef<Path>,
    store: &WeightStore,
    topology: &NetworkTopology,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_weights(store, topology)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convnet::topology::LayerSpec;

    fn tiny() -> (NetworkTopology, WeightStore) {
        let topo = NetworkTopology::new(
            3,
            vec![
                LayerSpec::conv("conv1_1", 3, 2),
                LayerSpec::relu("relu1_1"),
                LayerSpec::conv("conv1_2", 2, 1),
            ],
        )
        .unwrap();
        let mut store = WeightStore::new();
        let mut v = 0.0;
        for (name, c_in, c_out) in topo.conv_layers() {
            let w: Vec<f64> = (0..c_out * c_in * 9)
                .map(|_| {
                    v += 0.25;
                    v
                })
                .collect();
            store.insert(
                name,
                ConvParams {
                    weights: Tensor::from_vec(&[c_out, c_in, 3, 3], w).unwrap(),
                    bias: Tensor::new(&[c_out], -1.5).unwrap(),
                },
            );
        }
        (topo, store)
    }

    #[test]
    fn round_trip() {
        let (topo, store) = tiny();
        let bytes = encode_weights(&store, &topo).unwrap();
        assert_eq!(&bytes[..4], b"VGGW");
        let back = parse_weights(&bytes).unwrap();
        back.validate(&topo).unwrap();
        assert_eq!(back, store);
    }

    #[test]
    fn bad_magic_and_version() {
        let (topo, store) = tiny();
        let mut bytes = encode_weights(&store, &topo).unwrap();
        bytes[4] = 2;
        assert!(matches!(parse_weights(&bytes), Err(Error::Format(m)) if m.contains("version")));
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(parse_weights(&bytes), Err(Error::Format(m)) if m.contains("magic")));
    }

    #[test]
    fn truncation_names_offset() {
        let (topo, store) = tiny();
        let bytes = encode_weights(&store, &topo).unwrap();
        let cut = &bytes[..bytes.len() - 3];
        match parse_weights(cut) {
            Err(Error::Truncated { offset, what }) => {
                assert!(offset > 12);
                assert!(what.contains("conv1_2 bias"), "{what}");
            }
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_is_corrupt() {
        let (topo, store) = tiny();
        let mut bytes = encode_weights(&store, &topo).unwrap();
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(parse_weights(&bytes), Err(Error::Corrupt(_))));
    }

    #[test]
    fn topology_mismatch() {
        let (topo, mut store) = tiny();
        store.layers.remove("conv1_2");
        assert!(matches!(store.validate(&topo), Err(Error::Topology(m)) if m.contains("conv1_2")));
        let (_, mut store) = tiny();
        store.insert(
            "conv1_2",
            ConvParams {
                weights: Tensor::zeros(&[1, 3, 3, 3]).unwrap(),
                bias: Tensor::zeros(&[1]).unwrap(),
            },
        );
        assert!(matches!(store.validate(&topo), Err(Error::Topology(_))));
    }

    #[test]
    fn checksum_is_stable() {
        let (_, store) = tiny();
        let p = store.get("conv1_1").unwrap();
        assert_eq!(layer_checksum(p), layer_checksum(&p.clone()));
        assert_eq!(layer_checksum(p).len(), 16);
    }
}
