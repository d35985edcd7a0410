//! Named trainable parameters and the binary checkpoint format.
//!
//! Checkpoint layout (all integers little-endian):
//!
//! ```text
//! b"REXP"  version:u32  count:u64
//! repeated count times:
//!   name_len:u64  name:[u8; name_len]  rank:u64  extents:[u64; rank]  values:[f64; prod(extents)]
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, IntegrityKind, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"REXP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Param { value, grad }
    }
}

/// Parameters keyed by name; iteration is in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter {name}")));
        }
        self.params.insert(name, Param::new(value));
        Ok(())
    }

    /// Uniform init in `[-scale, scale]`.
    pub fn insert_uniform(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        scale: f64,
        rng: &mut impl Rng,
    ) -> Result<()> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-scale..=scale)).collect();
        self.insert(name, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.get_mut(name)
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.params
            .get_mut(name)
            .map(|p| &mut p.value)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params.values_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .values()
            .flat_map(|p| p.grad.data())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let scale = max_norm / norm;
            for p in self.params.values_mut() {
                p.grad.data_mut().iter_mut().for_each(|g| *g *= scale);
            }
        }
        norm
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for (name, p) in &self.params {
            w.write_all(&(name.len() as u64).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            let shape = p.value.shape();
            w.write_all(&(shape.len() as u64).to_le_bytes())?;
            for &e in shape {
                w.write_all(&(e as u64).to_le_bytes())?;
            }
            for v in p.value.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_checkpoint(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, IntegrityKind::Checkpoint);
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(r.fail("bad magic"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(r.fail(format!("unsupported version {version}")));
        }
        let count = r.u64()?;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let name_len = r.len_field()?;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| r.fail("parameter name is not UTF-8"))?
                .to_string();
            let rank = r.len_field()?;
            if rank > 8 {
                return Err(r.fail(format!("implausible rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.len_field()?);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &e| acc.checked_mul(e))
                .filter(|&n| n.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| r.fail(format!("parameter {name} overruns file")))?;
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let v = r.f64()?;
                if !v.is_finite() {
                    return Err(r.fail(format!("non-finite value in {name}")));
                }
                data.push(v);
            }
            let value = Tensor::new(shape, data).map_err(|e| r.fail(e.to_string()))?;
            store
                .insert(name, value)
                .map_err(|e| r.fail(e.to_string()))?;
        }
        if r.remaining() != 0 {
            return Err(r.fail("trailing bytes"));
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_checkpoint_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }
}

/// Cursor over a little-endian binary buffer that reports truncation as an
/// integrity error of the given kind.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    kind: IntegrityKind,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8], kind: IntegrityKind) -> Self {
        ByteReader {
            bytes,
            pos: 0,
            kind,
        }
    }

    pub(crate) fn fail(&self, msg: impl Into<String>) -> Error {
        Error::integrity(self.kind, format!("{} (at byte {})", msg.into(), self.pos))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(self.fail("unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn len_field(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&n| n <= self.bytes.len())
            .ok_or_else(|| self.fail(format!("length field {v} exceeds file size")))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_store() -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = ParamStore::new();
        s.insert_uniform("b", &[4], 0.08, &mut rng).unwrap();
        s.insert_uniform("a.weight", &[3, 2], 0.08, &mut rng).unwrap();
        s.insert("c", Tensor::scalar(1.5)).unwrap();
        s
    }

    #[test]
    fn uniform_init_range() {
        let s = sample_store();
        for (_, p) in s.iter() {
            assert!(p.value.data().iter().all(|v| v.abs() <= 0.08 || *v == 1.5));
        }
        assert_eq!(s.names().collect::<Vec<_>>(), vec!["a.weight", "b", "c"]);
    }

    #[test]
    fn duplicate_name_rejected() {
        let mut s = sample_store();
        assert!(s.insert("b", Tensor::scalar(0.0)).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let s = sample_store();
        let bytes = s.to_checkpoint_bytes();
        let back = ParamStore::from_checkpoint_bytes(&bytes).unwrap();
        assert_eq!(back.to_checkpoint_bytes(), bytes);
        for ((n1, p1), (n2, p2)) in s.iter().zip(back.iter()) {
            assert_eq!(n1, n2);
            let b1: Vec<u64> = p1.value.data().iter().map(|v| v.to_bits()).collect();
            let b2: Vec<u64> = p2.value.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(b1, b2);
        }
    }

    #[test]
    fn corrupted_checkpoints_rejected() {
        let bytes = sample_store().to_checkpoint_bytes();
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        let truncated = &bytes[..bytes.len() - 3];
        let mut trailing = bytes.clone();
        trailing.push(0);
        for b in [&bad_magic[..], truncated, &trailing[..], &[][..]] {
            let err = ParamStore::from_checkpoint_bytes(b).unwrap_err();
            assert_eq!(err.category(), "checkpoint-integrity");
        }
    }

    #[test]
    fn clipping_bounds_global_norm() {
        let mut s = sample_store();
        for (_, p) in s.iter_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g = 3.0);
        }
        let before = s.clip_grad_norm(1.0);
        assert!(before > 1.0);
        assert!(s.grad_norm() <= 1.0 + 1e-9);
        s.zero_grad();
        assert_eq!(s.grad_norm(), 0.0);
    }

    proptest! {
        #[test]
        fn arbitrary_values_round_trip(values in proptest::collection::vec(-1e300f64..1e300, 1..40)) {
            let mut s = ParamStore::new();
            s.insert("p", Tensor::vector(values.clone())).unwrap();
            let back = ParamStore::from_checkpoint_bytes(&s.to_checkpoint_bytes()).unwrap();
            let got = back.value("p").unwrap().data();
            prop_assert!(got.iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
