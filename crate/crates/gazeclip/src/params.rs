//! Named parameters with a frozen/trainable partition and deterministic
//! iteration order. The store is plain data (`Send + Sync`), so evaluation
//! workers can share it read-only; training mutates it only between a
//! backward pass and the next forward.

use crate::error::{Error, Result};
use indexmap::IndexMap;
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub values: Vec<f64>,
    pub shape: Vec<usize>,
    pub frozen: bool,
}

impl Param {
    pub fn numel(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    entries: IndexMap<String, Param>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        values: Vec<f64>,
        frozen: bool,
    ) -> Result<()> {
        if values.len() != shape.iter().product::<usize>() {
            return Err(Error::Dimension(format!(
                "parameter `{}`: {} values do not fill shape {:?}",
                name,
                values.len(),
                shape
            )));
        }
        if self.entries.contains_key(name) {
            return Err(Error::Contract(format!(
                "parameter `{}` registered twice",
                name
            )));
        }
        self.entries.insert(
            name.to_string(),
            Param {
                values,
                shape,
                frozen,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.entries.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    /// Entries in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count, optionally restricted to trainable entries.
    pub fn scalar_count(&self, trainable_only: bool) -> usize {
        self.entries
            .values()
            .filter(|p| !trainable_only || !p.frozen)
            .map(|p| p.numel())
            .sum()
    }

    /// Bit-exact equality of one entry across two stores.
    pub fn bitwise_equal(&self, other: &ParameterStore, name: &str) -> bool {
        match (self.get(name), other.get(name)) {
            (Some(a), Some(b)) => {
                a.shape == b.shape
                    && a.values.len() == b.values.len()
                    && a.values
                        .iter()
                        .zip(&b.values)
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            }
            _ => false,
        }
    }
}

/// Scale of frozen pretrained stand-in weights and of token/position
/// embeddings (recorded seed, no claim of equivalence to real pretraining).
pub const INIT_STD: f64 = 0.02;

pub fn gaussian(rng: &mut impl Rng, n: usize, std: f64) -> Vec<f64> {
    let dist = Normal::new(0.0, std).expect("valid normal");
    (0..n).map(|_| dist.sample(rng)).collect()
}

/// Weight std for a linear map: frozen stand-ins use the fixed pretrained
/// scale; trainable weights use fan-in scaling so signals propagate at
/// desk scale.
pub fn weight_std(fan_in: usize, frozen: bool) -> f64 {
    if frozen {
        INIT_STD
    } else {
        1.0 / (fan_in as f64).sqrt()
    }
}

pub fn zeros(n: usize) -> Vec<f64> {
    vec![0.0; n]
}

pub fn ones(n: usize) -> Vec<f64> {
    vec![1.0; n]
}
