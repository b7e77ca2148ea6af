//! Named tensor store for encoder and updater parameters.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{ArrayD, ArrayViewD, IxDyn};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::container::{Container, TensorData};

pub const CONTAINER_KIND: &str = "weights";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Uniform in `+-sqrt(1 / fan_in)`.
    Uniform { fan_in: usize },
    Ones,
    Zeros,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl WeightSpec {
    pub fn new(name: impl Into<String>, shape: &[usize], init: Init) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        }
    }
}

/// 64-bit FNV-1a, used to give every tensor its own PRNG stream.
fn stream_id(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelWeights {
    tensors: BTreeMap<String, ArrayD<f32>>,
    pub meta: BTreeMap<String, String>,
}

impl ModelWeights {
    pub fn new() -> Self {
        Self::default()
    }

    /// Seeded initialization. Each tensor draws from its own ChaCha stream
    /// keyed by name, so adding a tensor never perturbs the others.
    pub fn random(specs: &[WeightSpec], seed: u64) -> Self {
        let mut w = Self::new();
        for spec in specs {
            let len: usize = spec.shape.iter().product();
            let data: Vec<f32> = match spec.init {
                Init::Ones => vec![1.0; len],
                Init::Zeros => vec![0.0; len],
                Init::Uniform { fan_in } => {
                    let bound = (1.0 / fan_in.max(1) as f64).sqrt() as f32;
                    let dist = Uniform::new_inclusive(-bound, bound).unwrap();
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(stream_id(&spec.name));
                    (0..len).map(|_| dist.sample(&mut rng)).collect()
                }
            };
            w.insert(&spec.name, ArrayD::from_shape_vec(IxDyn(&spec.shape), data).unwrap());
        }
        w.meta.insert("seed".into(), seed.to_string());
        w
    }

    pub fn insert(&mut self, name: &str, a: ArrayD<f32>) {
        self.tensors.insert(name.to_string(), a);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.tensors.values().map(|a| a.len()).sum()
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ArrayD<f32>> {
        self.tensors.get_mut(name)
    }

    /// Looks up `name` and checks its shape.
    pub fn get(&self, name: &str, shape: &[usize]) -> Result<ArrayViewD<'_, f32>> {
        let a = self
            .tensors
            .get(name)
            .ok_or_else(|| Error::MissingWeight(name.to_string()))?;
        if a.shape() != shape {
            return Err(Error::WeightShape {
                name: name.to_string(),
                expected: shape.to_vec(),
                found: a.shape().to_vec(),
            });
        }
        Ok(a.view())
    }

    /// Checks every spec is present with the right shape.
    pub fn validate(&self, specs: &[WeightSpec]) -> Result<()> {
        for s in specs {
            self.get(&s.name, &s.shape)?;
        }
        Ok(())
    }

    /// Zeros every tensor whose name starts with one of `prefixes`.
    pub fn zero_prefixed(&mut self, prefixes: &[&str]) {
        for (name, a) in self.tensors.iter_mut() {
            if prefixes.iter().any(|p| name.starts_with(p)) {
                a.fill(0.0);
            }
        }
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(CONTAINER_KIND);
        c.meta = self.meta.clone();
        for (name, a) in &self.tensors {
            c.push_f32(name.clone(), a.clone());
        }
        c
    }

    pub fn from_container(c: Container) -> Result<Self> {
        if c.kind != CONTAINER_KIND {
            return Err(Error::CorruptManifest(format!(
                "expected a `{CONTAINER_KIND}` container, found `{}`",
                c.kind
            )));
        }
        let meta = c.meta.clone();
        let mut w = Self::new();
        for (name, t) in c.into_tensors() {
            match t {
                TensorData::F32(a) => w.insert(&name, a),
                other => {
                    return Err(Error::CorruptManifest(format!(
                        "weight `{name}` has dtype {}",
                        other.dtype()
                    )))
                }
            }
        }
        w.meta = meta;
        Ok(w)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        self.to_container().write(dir)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Self::from_container(Container::read(dir)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn specs() -> Vec<WeightSpec> {
        vec![
            WeightSpec::new("a.weight", &[4, 3], Init::Uniform { fan_in: 3 }),
            WeightSpec::new("a.bias", &[4], Init::Uniform { fan_in: 3 }),
            WeightSpec::new("n.weight", &[4], Init::Ones),
        ]
    }

    #[test]
    fn seeded_and_bounded() {
        let a = ModelWeights::random(&specs(), 7);
        let b = ModelWeights::random(&specs(), 7);
        let c = ModelWeights::random(&specs(), 8);
        assert_eq!(a, b);
        assert_ne!(a.get("a.weight", &[4, 3]).unwrap(), c.get("a.weight", &[4, 3]).unwrap());
        let bound = (1.0f32 / 3.0).sqrt();
        assert!(a.get("a.weight", &[4, 3]).unwrap().iter().all(|v| v.abs() <= bound));
        assert!(a.get("n.weight", &[4]).unwrap().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn streams_are_independent_of_other_tensors() {
        let a = ModelWeights::random(&specs(), 7);
        let b = ModelWeights::random(&specs()[..1], 7);
        assert_eq!(a.get("a.weight", &[4, 3]).unwrap(), b.get("a.weight", &[4, 3]).unwrap());
    }

    #[test]
    fn shape_errors_name_the_tensor() {
        let w = ModelWeights::random(&specs(), 1);
        let err = w.get("a.weight", &[3, 4]).unwrap_err().to_string();
        assert!(err.contains("a.weight"), "{err}");
        assert!(matches!(w.get("missing", &[1]), Err(Error::MissingWeight(_))));
        let mut bad = specs();
        bad[1].shape = vec![5];
        assert!(w.validate(&bad).unwrap_err().to_string().contains("a.bias"));
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let w = ModelWeights::random(&specs(), 3);
        w.write(dir.path()).unwrap();
        assert_eq!(ModelWeights::read(dir.path()).unwrap(), w);
    }
}
