use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::{Mode, Scalar, Tape, Tensor, Var};
use crate::{Error, Result};

/// Index of a parameter in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }

    pub(crate) fn from_index(index: usize) -> Self {
        Self(index)
    }
}

/// A named tensor. Non-trainable entries hold state such as batch-norm
/// running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<S> {
    pub name: String,
    pub tensor: Tensor<S>,
    pub trainable: bool,
}

/// Ordered collection of the tensors that make up a model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<S> {
    entries: Vec<ParamEntry<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, tensor: Tensor<S>, trainable: bool) -> ParamId {
        debug_assert!(self.find(name).is_none(), "duplicate parameter {name}");
        self.entries.push(ParamEntry {
            name: name.to_string(),
            tensor,
            trainable,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry<S>] {
        &self.entries
    }

    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.entries[id.0].tensor
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    /// Number of scalar weights in trainable entries.
    pub fn trainable_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.tensor.len())
            .sum()
    }

    /// Records every entry on `tape`; trainable entries require gradients.
    /// The returned vector is indexed by [`ParamId::index`].
    pub fn bind(&self, tape: &mut Tape<S>) -> Vec<Var> {
        self.entries
            .iter()
            .map(|e| tape.leaf(e.tensor.clone(), e.trainable))
            .collect()
    }

    /// Replaces every tensor with the one of the same name in `other`.
    pub fn load_from(&mut self, other: &[ParamEntry<S>]) -> Result<()> {
        if other.len() != self.entries.len() {
            return Err(Error::Shape(format!(
                "expected {} tensors, got {}",
                self.entries.len(),
                other.len()
            )));
        }
        for entry in &mut self.entries {
            let src = other
                .iter()
                .find(|o| o.name == entry.name)
                .ok_or_else(|| Error::Shape(format!("missing tensor {}", entry.name)))?;
            if src.tensor.shape() != entry.tensor.shape() {
                return Err(Error::Shape(format!(
                    "tensor {} has shape {:?}, expected {:?}",
                    entry.name,
                    src.tensor.shape(),
                    entry.tensor.shape()
                )));
            }
            entry.tensor = src.tensor.clone();
        }
        Ok(())
    }
}

/// Glorot (Xavier) uniform initialization on `[-l, l]`,
/// `l = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<S: Scalar, R: RngCore + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor<S> {
    let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    let len = shape.iter().product();
    let data = (0..len)
        .map(|_| S::lit(rng.random_range(-limit..limit)))
        .collect();
    Tensor::new(shape, data).expect("shape and length agree")
}

/// Per-channel temporal convolution without bias.
#[derive(Debug, Clone, Copy)]
pub struct DepthwiseConv {
    pub kernel: ParamId,
    pub channels: usize,
    pub kernel_len: usize,
}

impl DepthwiseConv {
    pub fn new<S: Scalar, R: RngCore + ?Sized>(
        store: &mut ParamStore<S>,
        name: &str,
        channels: usize,
        kernel_len: usize,
        rng: &mut R,
    ) -> Self {
        let w = glorot_uniform(&[channels, kernel_len], kernel_len, kernel_len, rng);
        let kernel = store.add(&format!("{name}.kernel"), w, true);
        Self {
            kernel,
            channels,
            kernel_len,
        }
    }

    pub fn forward<S: Scalar>(&self, tape: &mut Tape<S>, bound: &[Var], x: Var) -> Result<Var> {
        tape.depthwise_conv_time(x, bound[self.kernel.0])
    }
}

/// Batch normalization with learned scale/shift and running statistics.
#[derive(Debug, Clone, Copy)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, features: usize) -> Self {
        Self {
            gamma: store.add(&format!("{name}.gamma"), Tensor::full(&[features], S::one()), true),
            beta: store.add(&format!("{name}.beta"), Tensor::zeros(&[features]), true),
            running_mean: store.add(&format!("{name}.running_mean"), Tensor::zeros(&[features]), false),
            running_var: store.add(
                &format!("{name}.running_var"),
                Tensor::full(&[features], S::one()),
                false,
            ),
        }
    }

    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        bound: &[Var],
        store: &mut ParamStore<S>,
        x: Var,
        mode: Mode,
    ) -> Result<Var> {
        let mut mean = store.get(self.running_mean).clone();
        let mut var = store.get(self.running_var).clone();
        let out = tape.batch_norm(
            x,
            bound[self.gamma.0],
            bound[self.beta.0],
            mean.data_mut(),
            var.data_mut(),
            mode,
        )?;
        *store.get_mut(self.running_mean) = mean;
        *store.get_mut(self.running_var) = var;
        Ok(out)
    }
}

/// Fully connected layer `x W + b`.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new<S: Scalar, R: RngCore + ?Sized>(
        store: &mut ParamStore<S>,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Self {
        let w = glorot_uniform(&[inputs, outputs], inputs, outputs, rng);
        Self {
            weight: store.add(&format!("{name}.weight"), w, true),
            bias: store.add(&format!("{name}.bias"), Tensor::zeros(&[outputs]), true),
            inputs,
            outputs,
        }
    }

    pub fn forward<S: Scalar>(&self, tape: &mut Tape<S>, bound: &[Var], x: Var) -> Result<Var> {
        let h = tape.matmul(x, bound[self.weight.0])?;
        tape.add_bias(h, bound[self.bias.0])
    }
}
