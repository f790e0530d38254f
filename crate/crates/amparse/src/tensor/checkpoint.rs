//! Named parameter store and its binary checkpoint container.
//!
//! Layout: magic `AMPK`, version (u32 LE), parameter count (u64 LE), then per
//! parameter: name length (u32 LE), UTF-8 name, rank (u32 LE), extents
//! (u64 LE each), raw values (f64 LE, row-major).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::tape::{Tape, Var};
use super::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"AMPK";
const VERSION: u32 = 1;

/// All trainable tensors, keyed by dotted names (`concept_enc.fw0.w_ih`).
/// Iteration order is the sorted name order, which keeps every fold over
/// parameters deterministic.
#[derive(Clone, Default)]
pub struct ParamStore {
    map: BTreeMap<String, Tensor>,
}

pub type GradMap = BTreeMap<String, Tensor>;

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        self.map.insert(name.to_string(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.map.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.map.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.map.values().map(Tensor::numel).sum()
    }

    /// Binds every parameter onto a tape as a gradient leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bindings {
        self.bind_with(tape, |_| true)
    }

    /// Binds parameters onto a tape; names failing the predicate become
    /// constants and receive no gradient (frozen groups in staged training).
    pub fn bind_with(&self, tape: &mut Tape, trainable: impl Fn(&str) -> bool) -> Bindings {
        let mut vars = BTreeMap::new();
        for (name, t) in &self.map {
            let var = if trainable(name) {
                tape.leaf(t.clone().with_grad())
            } else {
                tape.constant(t.clone())
            };
            vars.insert(name.clone(), var);
        }
        Bindings { vars }
    }

    /// FNV-1a over names and raw bits; used to assert frozen groups stay put.
    pub fn checksum(&self, prefix: &str) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for (name, t) in &self.map {
            if !name.starts_with(prefix) {
                continue;
            }
            eat(name.as_bytes());
            for v in t.data() {
                eat(&v.to_le_bytes());
            }
        }
        h
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.map.len() as u64).to_le_bytes())?;
        for (name, t) in &self.map {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "bad magic {magic:?}, expected {MAGIC:?}"
            )));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = read_u64(&mut r)? as usize;
        let mut map = BTreeMap::new();
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name_bytes = vec![0u8; name_len];
            r.read_exact(&mut name_bytes)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|e| Error::Checkpoint(format!("bad name: {e}")))?;
            let rank = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u64(&mut r)? as usize);
            }
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            let mut buf = [0u8; 8];
            for _ in 0..numel {
                r.read_exact(&mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            map.insert(
                name,
                Tensor::from_vec(shape, data).map_err(|e| Error::Checkpoint(e.to_string()))?,
            );
        }
        Ok(ParamStore { map })
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

/// Map from parameter name to its tape var for one forward pass.
pub struct Bindings {
    vars: BTreeMap<String, Var>,
}

impl Bindings {
    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("unbound parameter {name}"))
    }

    pub fn try_var(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }

    /// Collects gradients for every bound parameter, zeros where unreached.
    pub fn grads(&self, store: &ParamStore, grads: &super::tape::Gradients) -> GradMap {
        let mut out = GradMap::new();
        for (name, &var) in &self.vars {
            let shape = store.get(name).expect("store/bindings mismatch").shape();
            out.insert(name.clone(), grads.get_or_zeros(var, shape));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.bin");
        let mut store = ParamStore::new();
        store.insert("b.vec", Tensor::vector(vec![1.5, -2.25, 1e-300]));
        store.insert("a.mat", Tensor::matrix(2, 2, vec![0.0, 1.0, -1.0, 3.125]).unwrap());
        store.save(&path).unwrap();
        let loaded = ParamStore::load(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded.get("a.mat"), store.get("a.mat"));
        assert_eq!(loaded.get("b.vec"), store.get("b.vec"));
    }

    #[test]
    fn checksum_tracks_prefix_only() {
        let mut store = ParamStore::new();
        store.insert("enc.w", Tensor::vector(vec![1.0]));
        store.insert("rel.w", Tensor::vector(vec![2.0]));
        let before = store.checksum("enc.");
        store.get_mut("rel.w").unwrap().data_mut()[0] = 9.0;
        assert_eq!(store.checksum("enc."), before);
        store.get_mut("enc.w").unwrap().data_mut()[0] = 9.0;
        assert_ne!(store.checksum("enc."), before);
    }
}
