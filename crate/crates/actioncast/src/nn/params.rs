//! Named parameter store with seeded initialization, matching gradient
//! slots, and a versioned binary file format (little-endian float32
//! payloads) that round-trips bit-exactly.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::tensor::{Scalar, Tensor};

pub const MAGIC: &[u8; 4] = b"ACPM";
pub const FORMAT_VERSION: u32 = 1;

const MAX_ENTRIES: u32 = 1 << 16;
const MAX_NAME: u16 = 4096;
const MAX_DIMS: u8 = 8;
const MAX_VOLUME: u64 = 1 << 26;

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

/// Initialization rule for a new parameter.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zero,
    /// Uniform in [-sqrt(6/fan_in), sqrt(6/fan_in)].
    HeUniform { fan_in: usize },
    Uniform { lo: f64, hi: f64 },
}

#[derive(Clone, Debug)]
pub struct ParamStore<T> {
    names: Vec<String>,
    index: HashMap<String, usize>,
    params: Vec<Param<T>>,
    pub seed: u64,
    rng: ChaCha8Rng,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            names: Vec::new(),
            index: HashMap::new(),
            params: Vec::new(),
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Registers a parameter. Creation order drives RNG consumption, so a
    /// fixed registration sequence plus a fixed seed is fully deterministic.
    pub fn create(&mut self, name: &str, shape: &[usize], init: Init) {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter {name}"
        );
        let mut value = Tensor::zeros(shape);
        match init {
            Init::Zero => {}
            Init::HeUniform { fan_in } => {
                let limit = (6.0 / fan_in.max(1) as f64).sqrt();
                for v in value.data_mut() {
                    *v = T::of_f64(self.rng.gen_range(-limit..limit));
                }
            }
            Init::Uniform { lo, hi } => {
                for v in value.data_mut() {
                    *v = T::of_f64(self.rng.gen_range(lo..hi));
                }
            }
        }
        let grad = Tensor::zeros(shape);
        self.index.insert(name.to_string(), self.params.len());
        self.names.push(name.to_string());
        self.params.push(Param { value, grad });
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> &Tensor<T> {
        &self.params[self.idx(name)].value
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor<T> {
        let i = self.idx(name);
        &mut self.params[i].value
    }

    pub fn grad(&self, name: &str) -> &Tensor<T> {
        &self.params[self.idx(name)].grad
    }

    pub fn add_grad(&mut self, name: &str, g: &Tensor<T>) {
        let i = self.idx(name);
        self.params[i].grad.add_assign(g);
    }

    pub fn add_grad_slice(&mut self, name: &str, g: &[T]) {
        let i = self.idx(name);
        let dst = self.params[i].grad.data_mut();
        assert_eq!(dst.len(), g.len(), "grad slice length for {name}");
        for (d, &s) in dst.iter_mut().zip(g) {
            *d = *d + s;
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::zero());
        }
    }

    /// Names in registration order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn param_mut(&mut self, name: &str) -> &mut Param<T> {
        let i = self.idx(name);
        &mut self.params[i]
    }

    /// Adds every gradient of `other` into this store (same layout).
    pub fn merge_grads(&mut self, other: &ParamStore<T>) {
        assert_eq!(self.names, other.names, "param store layout mismatch");
        for (p, o) in self.params.iter_mut().zip(&other.params) {
            p.grad.add_assign(&o.grad);
        }
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            index: self.index.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    value: p.value.cast(),
                    grad: p.grad.cast(),
                })
                .collect(),
            seed: self.seed,
            rng: self.rng.clone(),
        }
    }

    fn idx(&self, name: &str) -> usize {
        *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    /// Serializes values (as f32) in registration order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, p) in self.names.iter().zip(&self.params) {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(p.value.shape().len() as u8);
            for &d in p.value.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in p.value.data() {
                out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC.as_slice() {
            return Err(Error::Format("parameter file: bad magic".into()));
        }
        let version = cur.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "parameter file: unsupported version {version}"
            )));
        }
        let seed = cur.u64()?;
        let count = cur.u32()?;
        if count > MAX_ENTRIES {
            return Err(Error::Format("parameter file: too many entries".into()));
        }
        let mut store = ParamStore::new(seed);
        for _ in 0..count {
            let name_len = cur.u16()?;
            if name_len == 0 || name_len > MAX_NAME {
                return Err(Error::Format("parameter file: bad name length".into()));
            }
            let name = std::str::from_utf8(cur.take(name_len as usize)?)
                .map_err(|_| Error::Format("parameter file: name not utf-8".into()))?
                .to_string();
            if store.index.contains_key(&name) {
                return Err(Error::Format(format!(
                    "parameter file: duplicate entry {name}"
                )));
            }
            let ndim = cur.u8()?;
            if ndim == 0 || ndim > MAX_DIMS {
                return Err(Error::Format("parameter file: bad rank".into()));
            }
            let mut shape = Vec::with_capacity(ndim as usize);
            let mut volume = 1u64;
            for _ in 0..ndim {
                let d = cur.u32()? as u64;
                volume = volume.saturating_mul(d);
                shape.push(d as usize);
            }
            if volume == 0 || volume > MAX_VOLUME {
                return Err(Error::Format("parameter file: bad volume".into()));
            }
            let mut data = Vec::with_capacity(volume as usize);
            for _ in 0..volume {
                let raw = cur.take(4)?;
                data.push(T::of_f64(
                    f32::from_le_bytes(raw.try_into().unwrap()) as f64
                ));
            }
            let value = Tensor::from_vec(&shape, data);
            let grad = Tensor::zeros(&shape);
            store.index.insert(name.clone(), store.params.len());
            store.names.push(name);
            store.params.push(Param { value, grad });
        }
        if cur.pos != bytes.len() {
            return Err(Error::Format("parameter file: trailing bytes".into()));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("parameter file: truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_values() {
        let mut a = ParamStore::<f32>::new(9);
        let mut b = ParamStore::<f32>::new(9);
        for s in [&mut a, &mut b] {
            s.create("w", &[4, 3], Init::HeUniform { fan_in: 3 });
            s.create("b", &[4], Init::Zero);
        }
        assert_eq!(a.get("w").data(), b.get("w").data());
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn different_seed_different_values() {
        let mut a = ParamStore::<f32>::new(1);
        let mut b = ParamStore::<f32>::new(2);
        a.create("w", &[8], Init::HeUniform { fan_in: 8 });
        b.create("w", &[8], Init::HeUniform { fan_in: 8 });
        assert_ne!(a.get("w").data(), b.get("w").data());
    }

    #[test]
    fn bytes_round_trip_bit_exact() {
        let mut s = ParamStore::<f32>::new(1234);
        s.create("enc.conv0.w", &[2, 3, 3, 3, 3], Init::HeUniform { fan_in: 81 });
        s.create("enc.conv0.b", &[2], Init::Uniform { lo: -0.5, hi: 0.5 });
        let bytes = s.to_bytes();
        let back = ParamStore::<f32>::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.seed, 1234);
        assert_eq!(back.names(), s.names());
        assert_eq!(back.get("enc.conv0.w").data(), s.get("enc.conv0.w").data());
    }

    #[test]
    fn from_bytes_rejects_corruption() {
        let mut s = ParamStore::<f32>::new(0);
        s.create("w", &[2, 2], Init::Zero);
        let good = s.to_bytes();
        assert!(ParamStore::<f32>::from_bytes(&good[..good.len() - 1]).is_err());
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(ParamStore::<f32>::from_bytes(&bad_magic).is_err());
        let mut trailing = good;
        trailing.push(0);
        assert!(ParamStore::<f32>::from_bytes(&trailing).is_err());
        assert!(ParamStore::<f32>::from_bytes(b"").is_err());
    }
}
