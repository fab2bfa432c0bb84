use super::Tensor;
use crate::error::{shape_err, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Index of a parameter inside its [`ParameterSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named trainable tensors plus a gradient accumulator of identical shape.
///
/// Registration order is the canonical order used by checkpoints and the
/// optimizer, so ids stay stable across save/load.
#[derive(Debug, Clone)]
pub struct ParameterSet {
    seed: u64,
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
}

fn init_rng(name: &str, seed: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(name.as_bytes());
    hasher.update(seed.to_le_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

fn default_fan_in(shape: &[usize]) -> usize {
    shape[1..].iter().product::<usize>().max(1)
}

impl ParameterSet {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Registers a parameter drawn from `uniform(-sqrt(1/fan_in), +sqrt(1/fan_in))`
    /// with `fan_in` the product of all but the leading dimension.
    pub fn init_parameter(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        if shape.is_empty() {
            return Err(shape_err("init_parameter", "empty shape"));
        }
        self.init_with_fan_in(name, shape, default_fan_in(shape))
    }

    pub fn init_with_fan_in(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Result<ParamId> {
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        self.init_uniform(name, shape, bound)
    }

    /// Word and action embedding tables: `uniform(-0.1, 0.1)`.
    pub fn init_embedding(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.init_uniform(name, shape, 0.1)
    }

    pub fn init_uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<ParamId> {
        if shape.is_empty() {
            return Err(shape_err("init_parameter", "empty shape"));
        }
        let n: usize = shape.iter().product();
        let mut rng = init_rng(name, self.seed);
        let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        self.insert(name, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.names.iter().any(|n| n == name) {
            return Err(Error::DuplicateParameter(name.to_string()));
        }
        self.grads.push(Tensor::zeros(value.shape()));
        self.values.push(value.with_requires_grad(true));
        self.names.push(name.to_string());
        Ok(ParamId(self.names.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(ParamId)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn grads(&self) -> &[Tensor] {
        &self.grads
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.data_mut().fill(0.0);
        }
    }

    /// Adds a worker's gradient buffer into the accumulator.
    pub fn accumulate(&mut self, buf: &GradBuffer) {
        for (acc, g) in self.grads.iter_mut().zip(&buf.grads) {
            for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += v;
            }
        }
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Split borrow used by the optimizer.
    pub fn values_and_grads_mut(&mut self) -> (&mut [Tensor], &[Tensor]) {
        (&mut self.values, &self.grads)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Order-sensitive FNV-style checksum over the raw bits of every value.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in &self.values {
            for v in t.data() {
                h ^= v.to_bits();
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    pub fn grad_buffer(&self) -> GradBuffer {
        GradBuffer {
            grads: self.values.iter().map(|v| Tensor::zeros(v.shape())).collect(),
        }
    }
}

/// Per-worker gradient storage mirroring a [`ParameterSet`].
#[derive(Debug, Clone)]
pub struct GradBuffer {
    grads: Vec<Tensor>,
}

impl GradBuffer {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub(crate) fn add(&mut self, id: ParamId, g: &Tensor) {
        for (a, v) in self.grads[id.0].data_mut().iter_mut().zip(g.data()) {
            *a += v;
        }
    }

    pub fn add_buffer(&mut self, other: &GradBuffer) {
        for (acc, g) in self.grads.iter_mut().zip(&other.grads) {
            for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += v;
            }
        }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_fan_in_bounds_values() {
        for seed in 0..50 {
            let mut p = ParameterSet::new(seed);
            let id = p.init_parameter("w", &[1]).unwrap();
            let v = p.value(id).item();
            assert!((-1.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn init_is_deterministic() {
        let mut a = ParameterSet::new(7);
        let mut b = ParameterSet::new(7);
        a.init_parameter("layer.w", &[3, 5]).unwrap();
        b.init_parameter("layer.w", &[3, 5]).unwrap();
        assert_eq!(a.value(ParamId(0)), b.value(ParamId(0)));
    }

    #[test]
    fn large_init_checksum_matches_recomputation() {
        let mut a = ParameterSet::new(42);
        let id = a.init_parameter("gen.out.w", &[128, 4160]).unwrap();
        let bound = (1.0f64 / 4160.0).sqrt();
        assert!(a.value(id).data().iter().all(|v| v.abs() <= bound));
        let mut b = ParameterSet::new(42);
        b.init_parameter("gen.out.w", &[128, 4160]).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        let mut c = ParameterSet::new(43);
        c.init_parameter("gen.out.w", &[128, 4160]).unwrap();
        assert_ne!(a.checksum(), c.checksum());
    }

    #[test]
    fn duplicate_name_rejected() {
        let mut p = ParameterSet::new(0);
        p.init_parameter("w", &[2]).unwrap();
        assert!(matches!(
            p.init_parameter("w", &[2]),
            Err(Error::DuplicateParameter(_))
        ));
    }

    #[test]
    fn embeddings_use_fixed_range() {
        let mut p = ParameterSet::new(3);
        let id = p.init_embedding("words", &[40, 16]).unwrap();
        assert!(p.value(id).data().iter().all(|v| v.abs() <= 0.1));
        assert_eq!(p.grad(id).shape(), &[40, 16]);
    }
}
