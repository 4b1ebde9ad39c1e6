//! Minimal dense tensor kernel with reverse-mode differentiation.
//!
//! A [`Graph`] is a define-by-run tape: every operation appends a node, so
//! node index order is already topological and [`Graph::backward`] is a
//! single reverse sweep. Parameters enter the graph by name through
//! [`Graph::param`] and are cached, so two uses of the same parameter share
//! one node and gradients accumulate correctly.
//!
//! Values are held as `f64`; in [`Precision::F32`] mode every op output is
//! rounded through `f32`, emulating 32-bit compute with a single code path.

mod backward;
mod forward;

use crate::config::Precision;
use crate::error::{Error, Result};
use crate::params::ParameterStore;
use indexmap::IndexMap;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Constant,
    Param(#[allow(dead_code)] String),
    Add(TensorId, TensorId),
    AddBias(TensorId, TensorId),
    Mul(TensorId, TensorId),
    MulScalar(TensorId, f64),
    ScaleByScalar(TensorId, TensorId),
    MatMul(TensorId, TensorId),
    Transpose(TensorId),
    Reshape(TensorId),
    SliceRows(TensorId, usize, usize),
    SliceCols(TensorId, usize, usize),
    ConcatRows(Vec<TensorId>),
    ConcatCols(Vec<TensorId>),
    LayerNorm {
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        eps: f64,
    },
    Gelu(TensorId),
    Exp(TensorId),
    SoftmaxRows(TensorId),
    Conv2d {
        x: TensorId,
        w: TensorId,
        b: TensorId,
        stride: usize,
        pad: usize,
    },
    ExtractPatches {
        x: TensorId,
        patch: usize,
    },
    Embedding {
        table: TensorId,
        ids: Vec<usize>,
    },
    RowScale {
        x: TensorId,
        diag: TensorId,
    },
    L2NormalizeRows(TensorId),
    CrossEntropyLogits {
        logits: TensorId,
        targets: Vec<usize>,
    },
    SumAll(TensorId),
    MeanAll(TensorId),
}

#[derive(Debug)]
pub(crate) struct Node {
    pub values: Vec<f64>,
    pub shape: Vec<usize>,
    pub grad: Option<Vec<f64>>,
    pub requires_grad: bool,
    pub op: Op,
}

/// Define-by-run computation graph.
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    param_ids: IndexMap<String, TensorId>,
    precision: Precision,
    /// Largest absolute deviation of any softmax row sum from 1 so far.
    pub(crate) softmax_row_dev: f64,
    /// Total attention logits pushed through softmax (instrumentation).
    pub(crate) softmax_elements: usize,
}

impl Graph {
    pub fn new(precision: Precision) -> Self {
        Graph {
            nodes: Vec::new(),
            param_ids: IndexMap::new(),
            precision,
            softmax_row_dev: 0.0,
            softmax_elements: 0,
        }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub(crate) fn push(
        &mut self,
        mut values: Vec<f64>,
        shape: Vec<usize>,
        op: Op,
        requires_grad: bool,
    ) -> TensorId {
        if self.precision == Precision::F32 {
            for v in values.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
        debug_assert_eq!(values.len(), shape.iter().product::<usize>());
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node {
            values,
            shape,
            grad: None,
            requires_grad,
            op,
        });
        id
    }

    /// Leaf node with no gradient tracking (inputs, labels, masks).
    pub fn constant(&mut self, values: Vec<f64>, shape: Vec<usize>) -> Result<TensorId> {
        if values.len() != shape.iter().product::<usize>() {
            return Err(Error::Dimension(format!(
                "constant: {} values do not fill shape {:?}",
                values.len(),
                shape
            )));
        }
        Ok(self.push(values, shape, Op::Constant, false))
    }

    /// Materialize a named parameter from the store. Repeated calls with the
    /// same name return the same node.
    pub fn param(&mut self, store: &ParameterStore, name: &str) -> Result<TensorId> {
        if let Some(&id) = self.param_ids.get(name) {
            return Ok(id);
        }
        let p = store
            .get(name)
            .ok_or_else(|| Error::Contract(format!("parameter `{}` not in store", name)))?;
        let id = self.push(
            p.values.clone(),
            p.shape.clone(),
            Op::Param(name.to_string()),
            true,
        );
        self.param_ids.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn values(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].values
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn numel(&self, id: TensorId) -> usize {
        self.nodes[id.0].values.len()
    }

    /// Value of a scalar node.
    pub fn scalar(&self, id: TensorId) -> Result<f64> {
        if self.numel(id) != 1 {
            return Err(Error::Contract(format!(
                "expected scalar, found shape {:?}",
                self.shape(id)
            )));
        }
        Ok(self.nodes[id.0].values[0])
    }

    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    /// Names of all parameters this graph has materialized.
    pub fn touched_params(&self) -> impl Iterator<Item = &str> {
        self.param_ids.keys().map(|s| s.as_str())
    }

    /// Gradients of every materialized parameter, keyed by name, in first-use
    /// order. Call after [`Graph::backward`].
    pub fn param_grads(&self) -> IndexMap<String, Vec<f64>> {
        let mut out = IndexMap::new();
        for (name, &id) in &self.param_ids {
            let grad = self.nodes[id.0]
                .grad
                .clone()
                .unwrap_or_else(|| vec![0.0; self.nodes[id.0].values.len()]);
            out.insert(name.clone(), grad);
        }
        out
    }

    /// Worst softmax row-sum deviation observed across all softmax ops.
    pub fn max_softmax_row_deviation(&self) -> f64 {
        self.softmax_row_dev
    }

    /// Total number of logits fed through softmax ops (work instrumentation).
    pub fn softmax_elements(&self) -> usize {
        self.softmax_elements
    }
}

pub(crate) fn shape2d(shape: &[usize]) -> Option<(usize, usize)> {
    match shape {
        [r, c] => Some((*r, *c)),
        _ => None,
    }
}

/// Row-major 2D matmul on raw slices; shared by forward and backward.
pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow.iter()) {
                *cv += av * bv;
            }
        }
    }
    c
}

pub(crate) const GELU_COEFF: f64 = 0.044715;

pub(crate) fn gelu_scalar(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + GELU_COEFF * x * x * x)).tanh())
}

pub(crate) fn gelu_grad_scalar(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let inner = c * (x + GELU_COEFF * x * x * x);
    let t = inner.tanh();
    let sech2 = 1.0 - t * t;
    let d_inner = c * (1.0 + 3.0 * GELU_COEFF * x * x);
    0.5 * (1.0 + t) + 0.5 * x * sech2 * d_inner
}
