//! Dense f64 tensors and named trainable parameters.

use std::collections::HashMap;

use super::NnError;

/// N-dimensional real array, row-major, 64-bit throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; numel] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, NnError> {
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(NnError::ShapeMismatch(format!(
                "{} values do not fill shape {shape:?} ({numel})",
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A named trainable array with its gradient buffer.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub frozen: bool,
    /// Set when backward has written this gradient since the last zeroing.
    pub grad_set: bool,
}

/// Ordered collection of parameters; order is the canonical checkpoint and
/// optimizer-state order.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: Vec<Param>,
    by_name: HashMap<String, usize>,
}

impl ParamSet {
    pub fn add(&mut self, name: &str, value: Tensor) -> usize {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name {name}"
        );
        let grad = Tensor::zeros(value.shape());
        let idx = self.params.len();
        self.params.push(Param {
            name: name.to_string(),
            value,
            grad,
            frozen: false,
            grad_set: false,
        });
        self.by_name.insert(name.to_string(), idx);
        idx
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Param {
        &self.params[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Param {
        &mut self.params[idx]
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.by_name.get(name).map(|&i| &self.params[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
            p.grad_set = false;
        }
    }

    /// Accumulates `delta` into the gradient of parameter `idx` and marks it
    /// populated.
    pub fn accumulate_grad(&mut self, idx: usize, delta: &[f64]) {
        let p = &mut self.params[idx];
        debug_assert_eq!(p.grad.numel(), delta.len());
        for (g, d) in p.grad.data_mut().iter_mut().zip(delta) {
            *g += d;
        }
        p.grad_set = true;
    }

    /// Marks every parameter whose name starts with one of `prefixes` as
    /// frozen. Returns the number of parameters frozen by this call; if some
    /// prefix matched nothing the count is carried inside the error.
    pub fn set_frozen(&mut self, prefixes: &[String]) -> Result<usize, NnError> {
        let mut matched = vec![false; self.params.len()];
        let mut unmatched = Vec::new();
        for prefix in prefixes {
            let mut hit = false;
            for (i, p) in self.params.iter_mut().enumerate() {
                if p.name.starts_with(prefix.as_str()) {
                    p.frozen = true;
                    matched[i] = true;
                    hit = true;
                }
            }
            if !hit {
                unmatched.push(prefix.clone());
            }
        }
        let frozen = matched.iter().filter(|&&m| m).count();
        if unmatched.is_empty() {
            Ok(frozen)
        } else {
            Err(NnError::FreezePrefixUnmatched { unmatched, frozen })
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }
}

/// Non-trainable named state (batch-norm running statistics).
#[derive(Debug, Clone, Default)]
pub struct BufferSet {
    buffers: Vec<(String, Tensor)>,
    by_name: HashMap<String, usize>,
}

impl BufferSet {
    pub fn add(&mut self, name: &str, value: Tensor) -> usize {
        assert!(!self.by_name.contains_key(name), "duplicate buffer name {name}");
        let idx = self.buffers.len();
        self.buffers.push((name.to_string(), value));
        self.by_name.insert(name.to_string(), idx);
        idx
    }

    pub fn len(&self) -> usize {
        self.buffers.len()
    }

    pub fn get(&self, idx: usize) -> &Tensor {
        &self.buffers[idx].1
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.buffers[idx].1
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.buffers[idx].0
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, Tensor)> {
        self.buffers.iter()
    }
}
