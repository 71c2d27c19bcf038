//! Named parameter construction.
//!
//! Every component declares its parameters through a [`Builder`], which asks
//! a [`ParamSource`] for each tensor by hierarchical name. The same
//! construction code therefore serves random initialization, checkpoint
//! loading, structural rewrites (pruning, dequantization) and binding
//! parameters to a tape for training.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// Initialization rule for a freshly created parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Normal(f64),
    Uniform(f64, f64),
    Zeros,
    Ones,
    /// `[c, n]` filled with `ln(1..=n)` along each row.
    ALog,
    /// Inverse softplus of step sizes drawn log-uniformly in `[1e-3, 1e-1]`.
    DtBias,
}

/// Name → tensor mapping; the serialized form of any component.
pub type TensorMap<S> = BTreeMap<String, Arc<Tensor<S>>>;

pub trait ParamSource<S: Scalar> {
    fn fetch(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Var<S>>;
}

fn name_hash(name: &str) -> u64 {
    // FNV-1a
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Fresh parameters. Each tensor draws from its own stream derived from the
/// master seed and its name, so values do not depend on construction order.
pub struct RandomInit {
    seed: u64,
}

impl RandomInit {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn tensor<S: Scalar>(&self, name: &str, shape: &[usize], init: Init) -> Tensor<S> {
        let mut r = rng::seeded(rng::derive_seed(self.seed, name_hash(name)));
        match init {
            Init::Normal(std) => Tensor::randn(shape, std, &mut r),
            Init::Uniform(lo, hi) => Tensor::uniform(shape, lo, hi, &mut r),
            Init::Zeros => Tensor::zeros(shape),
            Init::Ones => Tensor::ones(shape),
            Init::ALog => {
                let n = *shape.last().unwrap_or(&1);
                Tensor::from_fn(shape, |i| S::of(((i % n) + 1) as f64).ln())
            }
            Init::DtBias => Tensor::from_fn(shape, |_| {
                let dt = (rng::uniform(&mut r, 1e-3f64.ln(), 1e-1f64.ln())).exp();
                // softplus⁻¹(dt) = dt + ln(1 − e^{−dt})
                S::of(dt + (-(-dt).exp_m1()).ln())
            }),
        }
    }
}

impl<S: Scalar> ParamSource<S> for RandomInit {
    fn fetch(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Var<S>> {
        Ok(Var::constant(self.tensor::<S>(name, shape, init)))
    }
}

fn lookup<'a, S: Scalar>(map: &'a TensorMap<S>, name: &str, shape: &[usize]) -> Result<&'a Arc<Tensor<S>>> {
    let t = map
        .get(name)
        .ok_or_else(|| Error::CheckpointFormat(format!("missing tensor {name}")))?;
    if t.shape() != shape {
        return Err(Error::CheckpointShape {
            name: name.to_string(),
            found: t.shape().to_vec(),
            expected: shape.to_vec(),
        });
    }
    Ok(t)
}

/// Parameters taken from an existing map; shapes must match exactly.
impl<S: Scalar> ParamSource<S> for &TensorMap<S> {
    fn fetch(&mut self, name: &str, shape: &[usize], _init: Init) -> Result<Var<S>> {
        lookup(self, name, shape).map(|t| Var::constant(Arc::clone(t)))
    }
}

/// Parameters from a map registered as tape leaves. Only names accepted by
/// `trainable` require a gradient; the rest stay constant.
pub struct Bind<'a, S: Scalar> {
    pub map: &'a TensorMap<S>,
    pub tape: &'a Tape<S>,
    pub trainable: &'a dyn Fn(&str) -> bool,
}

impl<S: Scalar> ParamSource<S> for Bind<'_, S> {
    fn fetch(&mut self, name: &str, shape: &[usize], _init: Init) -> Result<Var<S>> {
        let t = lookup(self.map, name, shape)?;
        Ok(self.tape.leaf(Arc::clone(t), (self.trainable)(name)))
    }
}

/// Collects parameters under a dotted name prefix.
pub struct Builder<'a, S: Scalar> {
    source: &'a mut dyn ParamSource<S>,
    prefix: Vec<String>,
    registry: Vec<(String, Var<S>)>,
}

impl<'a, S: Scalar> Builder<'a, S> {
    pub fn new(source: &'a mut dyn ParamSource<S>) -> Self {
        Self {
            source,
            prefix: Vec::new(),
            registry: Vec::new(),
        }
    }

    pub fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Var<S>> {
        let full = self.full_name(name);
        let v = self.source.fetch(&full, shape, init)?;
        self.registry.push((full, v.clone()));
        Ok(v)
    }

    /// Runs `f` with `name` appended to the prefix.
    pub fn scope<T>(&mut self, name: impl std::fmt::Display, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        self.prefix.push(name.to_string());
        let out = f(self);
        self.prefix.pop();
        out
    }

    fn full_name(&self, name: &str) -> String {
        let mut s = self.prefix.join(".");
        if !s.is_empty() {
            s.push('.');
        }
        s.push_str(name);
        s
    }

    /// Parameters in declaration order.
    pub fn finish(self) -> Params<S> {
        Params(self.registry)
    }
}

/// Ordered, named parameter list of a built component.
#[derive(Clone, Debug)]
pub struct Params<S: Scalar>(Vec<(String, Var<S>)>);

impl<S: Scalar> Params<S> {
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var<S>)> {
        self.0.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Var<S>> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn numel(&self) -> usize {
        self.0.iter().map(|(_, v)| v.value().numel()).sum()
    }

    pub fn to_map(&self) -> TensorMap<S> {
        self.0.iter().map(|(n, v)| (n.clone(), v.shared_value())).collect()
    }
}
