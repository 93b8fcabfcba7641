//! Named parameter tensors with a flat view for the optimizer.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense tensor.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// All learnable tensors of one network, in a fixed canonical order.
///
/// The order is set at construction and shared by gradients and Adam moment
/// buffers, so "the j-th parameter" means the same thing everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    tensors: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl NetworkParams {
    pub fn new() -> Self {
        NetworkParams {
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate tensor name {name}"
        );
        self.index.insert(name.clone(), self.tensors.len());
        self.tensors.push((name, tensor));
    }

    pub fn get(&self, name: &str) -> &Tensor {
        let i = self.index[name];
        &self.tensors[i].1
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        let i = self.index[name];
        &mut self.tensors[i].1
    }

    pub fn tensors(&self) -> &[(String, Tensor)] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    /// Same names and shapes, all zeros. Gradient and moment containers.
    pub fn zeros_like(&self) -> Self {
        let mut out = NetworkParams::new();
        for (name, t) in &self.tensors {
            out.push(name.clone(), Tensor::zeros(t.shape.clone()));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Flat parameter view: all values in canonical order.
    pub fn flat(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|(_, t)| t.data.iter().copied())
            .collect()
    }

    /// Value at flat index `i`, with its tensor name.
    pub fn flat_get(&self, i: usize) -> (&str, f64) {
        let mut rest = i;
        for (name, t) in &self.tensors {
            if rest < t.numel() {
                return (name, t.data[rest]);
            }
            rest -= t.numel();
        }
        panic!("flat index {i} out of range");
    }

    pub fn flat_add(&mut self, i: usize, delta: f64) {
        let mut rest = i;
        for (_, t) in &mut self.tensors {
            if rest < t.numel() {
                t.data[rest] += delta;
                return;
            }
            rest -= t.numel();
        }
        panic!("flat index {i} out of range");
    }

    /// Fails with the offending tensor's name if any value is non-finite.
    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        for (name, t) in &self.tensors {
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericFailure {
                    tensor: name.clone(),
                    msg: format!("non-finite value during {context}"),
                });
            }
        }
        Ok(())
    }

    pub fn same_layout(&self, other: &NetworkParams) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|((an, at), (bn, bt))| an == bn && at.shape == bt.shape)
    }
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_view_is_dense_and_ordered() {
        let mut p = NetworkParams::new();
        p.push("a", Tensor { shape: vec![2], data: vec![1.0, 2.0] });
        p.push("b", Tensor { shape: vec![1, 2], data: vec![3.0, 4.0] });
        assert_eq!(p.flat(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(p.flat_get(2), ("b", 3.0));
        assert_eq!(p.param_count(), 4);
        let z = p.zeros_like();
        assert!(p.same_layout(&z));
        assert_eq!(z.flat(), vec![0.0; 4]);
    }

    #[test]
    fn non_finite_reports_tensor_name() {
        let mut p = NetworkParams::new();
        p.push("w", Tensor { shape: vec![1], data: vec![f64::NAN] });
        match p.ensure_finite("test") {
            Err(Error::NumericFailure { tensor, .. }) => assert_eq!(tensor, "w"),
            other => panic!("expected numeric failure, got {other:?}"),
        }
    }
}
