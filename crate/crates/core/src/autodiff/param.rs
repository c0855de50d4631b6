use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// A named, shaped block of trainable (or frozen) reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: DenseMatrix,
    pub trainable: bool,
}

impl Parameter {
    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

/// Tape variables for every parameter of a store, valid for one tape.
#[derive(Debug, Clone)]
pub struct Bindings(Vec<Var>);

impl Bindings {
    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: DenseMatrix, trainable: bool) -> ParamId {
        self.params.push(Parameter {
            name: name.into(),
            value,
            trainable,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &DenseMatrix {
        &self.params[id.0].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Total number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(Parameter::numel).sum()
    }

    /// Scalars in parameters whose name starts with `prefix`, trainable or not.
    pub fn count_with_prefix(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|p| p.name.starts_with(prefix))
            .map(Parameter::numel)
            .sum()
    }

    /// Places every parameter on the tape; frozen ones become constants.
    pub fn bind(&self, tape: &mut Tape) -> Bindings {
        Bindings(
            self.params
                .iter()
                .map(|p| {
                    if p.trainable {
                        tape.leaf(p.value.clone())
                    } else {
                        tape.constant(p.value.clone())
                    }
                })
                .collect(),
        )
    }

    /// Gradients of all parameters after a backward pass (zeros for frozen).
    pub fn gradients(&self, tape: &Tape, bindings: &Bindings) -> Vec<DenseMatrix> {
        self.params
            .iter()
            .zip(&bindings.0)
            .map(|(p, v)| {
                if p.trainable {
                    tape.grad(*v)
                } else {
                    let (r, c) = p.shape();
                    DenseMatrix::zeros(r, c)
                }
            })
            .collect()
    }

    /// Flattened trainable values, in store order.
    pub fn flat_trainable(&self) -> Vec<f64> {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .flat_map(|p| p.value.as_slice().iter().copied())
            .collect()
    }

    pub fn set_flat_trainable(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.trainable_count() {
            return Err(Error::DimensionMismatch {
                expected: self.trainable_count(),
                got: flat.len(),
                context: "flat parameter vector",
            });
        }
        let mut offset = 0;
        for p in self.params.iter_mut().filter(|p| p.trainable) {
            let n = p.numel();
            p.value.as_mut_slice().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Copies values for every parameter of `other` whose name exists here.
    /// Shapes must agree. Returns the number of parameters copied.
    pub fn load_matching(&mut self, other: &ParamStore) -> Result<usize> {
        let mut copied = 0;
        for src in &other.params {
            if let Some(id) = self.find(&src.name) {
                let dst = &mut self.params[id.0];
                if dst.shape() != src.shape() {
                    return Err(Error::ShapeMismatch {
                        op: "load parameter",
                        lhs: dst.shape(),
                        rhs: src.shape(),
                    });
                }
                dst.value = src.value.clone();
                copied += 1;
            }
        }
        Ok(copied)
    }
}

/// Flattens a gradient list the same way as [`ParamStore::flat_trainable`].
pub fn flatten_trainable_grads(store: &ParamStore, grads: &[DenseMatrix]) -> Vec<f64> {
    store
        .iter()
        .zip(grads)
        .filter(|(p, _)| p.trainable)
        .flat_map(|(_, g)| g.as_slice().iter().copied())
        .collect()
}
