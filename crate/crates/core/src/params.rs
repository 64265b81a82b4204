//! Named parameter storage with per-name deterministic initialisation.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform in `±1/sqrt(fan_in)`.
    FanIn(usize),
    Zeros,
    Ones,
}

/// FNV-1a, used to derive a stable per-name RNG stream.
pub(crate) fn stable_hash(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Ordered map from parameter name to value.
///
/// Each initial value depends only on the run seed and the parameter's own
/// name, so adding or removing an unrelated parameter never changes it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare(&mut self, name: &str, shape: &[usize], init: Init, seed: u64) -> Result<()> {
        let n: usize = shape.iter().product();
        let data = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::FanIn(fan_in) => {
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stable_hash(name.as_bytes()));
                (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
            }
        };
        self.insert(name, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::InvalidArgument(format!("parameter {name:?} declared twice")));
        }
        self.index.insert(name.to_owned(), self.names.len());
        self.names.push(name.to_owned());
        self.values.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Total number of scalar entries.
    pub fn size(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.values[i])
    }

    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name:?}")))?;
        if value.shape() != self.values[i].shape() {
            return Err(Error::shape(
                "ParamStore::set",
                format!("{name}: {:?} vs {:?}", value.shape(), self.values[i].shape()),
            ));
        }
        self.values[i] = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Registers every parameter as a learnable leaf of `g`.
    pub fn bind(&self, g: &mut Graph) -> Bound<'_> {
        let ids = self
            .names
            .iter()
            .zip(&self.values)
            .map(|(n, v)| g.param_named(n.clone(), v.clone()))
            .collect();
        Bound { store: self, ids }
    }
}

/// Graph handles for the parameters of a [`ParamStore`].
pub struct Bound<'a> {
    store: &'a ParamStore,
    ids: Vec<NodeId>,
}

impl Bound<'_> {
    pub fn id(&self, name: &str) -> Result<NodeId> {
        self.store
            .index
            .get(name)
            .map(|&i| self.ids[i])
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name:?}")))
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    /// Gradients in store order; parameters the output does not reach get zeros.
    pub fn grads(&self, g: &Graph) -> Vec<Tensor> {
        self.ids
            .iter()
            .zip(&self.store.values)
            .map(|(&id, v)| g.grad(id).cloned().unwrap_or_else(|| Tensor::zeros(v.shape())))
            .collect()
    }
}
