use std::collections::BTreeMap;
use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{NnError, Result};
use crate::diff::{Gradients, Tape, Tensor};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Named trainable matrices of one model.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<S> {
    names: Vec<String>,
    values: Vec<Array2<S>>,
}

/// Parameters recorded as leaves on one tape.
#[derive(Debug, Clone)]
pub struct Bound(Vec<Tensor>);

impl Bound {
    /// Wraps leaves that were recorded in parameter order.
    pub fn from_tensors(tensors: Vec<Tensor>) -> Self {
        Self(tensors)
    }

    pub fn get(&self, id: ParamId) -> Tensor {
        self.0[id.0]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.0
    }
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    shape: (usize, usize),
    values: Vec<f64>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<S>) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Array2<S> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<S> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Array2<S>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Array2<S>] {
        &mut self.values
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Array2::len).sum()
    }

    /// Records every parameter as a trainable leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape<S>) -> Bound {
        Bound(self.values.iter().map(|v| tape.param(v.clone())).collect())
    }

    /// Per-parameter gradients, zero where the loss did not reach.
    pub fn collect_grads(&self, bound: &Bound, grads: &Gradients<S>) -> Vec<Array2<S>> {
        self.values
            .iter()
            .zip(bound.tensors())
            .map(|(v, &t)| grads.get_or_zeros(t, v.dim()))
            .collect()
    }

    /// Writes `{name: {shape, values}}` as JSON, values row-major.
    pub fn save_json<W: Write>(&self, out: W) -> Result<()> {
        let map: BTreeMap<&str, TensorRecord> = self
            .names
            .iter()
            .zip(&self.values)
            .map(|(n, v)| {
                (
                    n.as_str(),
                    TensorRecord {
                        shape: v.dim(),
                        values: v.iter().map(|x| x.as_f64()).collect(),
                    },
                )
            })
            .collect();
        serde_json::to_writer(out, &map)?;
        Ok(())
    }

    /// Overwrites parameter values from a checkpoint with the same names and
    /// shapes.
    pub fn load_json<R: Read>(&mut self, input: R) -> Result<()> {
        let mut map: BTreeMap<String, TensorRecord> = serde_json::from_reader(input)?;
        for (name, value) in self.names.iter().zip(self.values.iter_mut()) {
            let record = map
                .remove(name)
                .ok_or_else(|| NnError::MalformedCheckpoint(format!("missing {name}")))?;
            if record.shape != value.dim() || record.values.len() != value.len() {
                return Err(NnError::ShapeMismatch {
                    name: name.clone(),
                    expected: value.dim(),
                    got: record.shape,
                });
            }
            for (dst, src) in value.iter_mut().zip(record.values) {
                *dst = S::of(src);
            }
        }
        if let Some(extra) = map.keys().next() {
            return Err(NnError::MalformedCheckpoint(format!("unknown parameter {extra}")));
        }
        Ok(())
    }
}
