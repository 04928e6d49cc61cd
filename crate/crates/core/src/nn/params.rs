use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Named parameter registry shared by every layer of a model.
///
/// Trainable parameters and non-trainable buffers (normalization running
/// statistics) live in separate maps; both are keyed by dotted path names and
/// iterated in lexicographic order so checkpoints and optimizer sweeps are
/// reproducible.
pub struct ParamStore {
    dtype: DType,
    rng: ChaCha8Rng,
    params: BTreeMap<String, Var>,
    buffers: BTreeMap<String, Var>,
}

impl ParamStore {
    pub fn new(dtype: DType, seed: u64) -> Self {
        Self {
            dtype,
            rng: ChaCha8Rng::seed_from_u64(seed),
            params: BTreeMap::new(),
            buffers: BTreeMap::new(),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn root(&mut self) -> Scope<'_> {
        Scope {
            store: self,
            prefix: String::new(),
        }
    }

    pub fn trainable(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.buffers.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Every tensor (parameters and buffers) in name order.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut all: Vec<(String, Tensor)> = self
            .params
            .iter()
            .chain(self.buffers.iter())
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect();
        all.sort_by(|a, b| a.0.cmp(&b.0));
        all
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.params.get(name).or_else(|| self.buffers.get(name))
    }

    pub fn num_parameters(&self) -> usize {
        self.params.values().map(|v| v.elem_count()).sum()
    }

    /// Overwrite every registered tensor from `named`; names and shapes must match exactly.
    pub fn load(&self, named: &[(String, Tensor)]) -> Result<()> {
        let expected = self.params.len() + self.buffers.len();
        if named.len() != expected {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} tensors, model expects {expected}",
                named.len()
            )));
        }
        for (name, t) in named {
            let var = self
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor `{name}`")))?;
            if var.dims() != t.dims() {
                return Err(Error::Checkpoint(format!(
                    "`{name}`: shape {:?} does not match model shape {:?}",
                    t.dims(),
                    var.dims()
                )));
            }
            var.set(&t.to_dtype(self.dtype)?)?;
        }
        Ok(())
    }

    fn insert(&mut self, name: String, values: Vec<f64>, shape: &[usize], trainable: bool) -> Result<Var> {
        let t = Tensor::from_vec(values, shape, &Device::Cpu)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let map = if trainable { &mut self.params } else { &mut self.buffers };
        if map.insert(name.clone(), var.clone()).is_some() {
            return Err(Error::Config(format!("parameter `{name}` registered twice")));
        }
        Ok(var)
    }
}

/// Path-prefixed view into a [`ParamStore`] used while building layers.
pub struct Scope<'a> {
    store: &'a mut ParamStore,
    prefix: String,
}

impl Scope<'_> {
    pub fn sub(&mut self, name: &str) -> Scope<'_> {
        Scope {
            prefix: self.path(name),
            store: self.store,
        }
    }

    fn path(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        let rng = &mut self.store.rng;
        let values = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        let path = self.path(name);
        self.store.insert(path, values, shape, true)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        let path = self.path(name);
        self.store.insert(path, vec![value; n], shape, true)
    }

    pub fn buffer(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        let path = self.path(name);
        self.store.insert(path, vec![value; n], shape, false)
    }
}
