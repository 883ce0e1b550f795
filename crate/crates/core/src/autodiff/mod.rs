//! Reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records every primitive as it is evaluated; [`Graph::backward`]
//! then propagates exact vector-Jacobian products from a scalar loss back to
//! the leaves. [`grad_check`] compares those gradients with central finite
//! differences and is the verification hook used throughout the test suites.

mod graph;
mod tensor;

pub use graph::{Graph, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: axis {axis} out of range for rank {rank}")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        rank: usize,
    },
    #[error("slice {start}..{end} invalid for axis {axis} of extent {extent}")]
    BadSlice {
        axis: usize,
        start: usize,
        end: usize,
        extent: usize,
    },
    #[error("shape {shape:?} does not hold {len} elements")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("cannot broadcast {from:?} to {to:?}")]
    BadBroadcast { from: Vec<usize>, to: Vec<usize> },
    #[error("concat of zero tensors")]
    EmptyConcat,
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward already ran on this graph; reset gradients first")]
    AlreadyBackpropagated,
}

/// Largest relative disagreement between the analytic gradient of `f` at `x`
/// and a central finite difference with step `eps`.
///
/// Per coordinate the error is `|a − n| / max(1, |a|, |n|)`. `f` must build a
/// scalar from the leaf it is handed and is re-evaluated on fresh graphs for
/// every perturbation.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64, GraphError>
where
    F: Fn(&mut Graph, Var) -> Result<Var, GraphError>,
{
    let mut g = Graph::new();
    let leaf = g.leaf(x.clone());
    let out = f(&mut g, leaf)?;
    g.backward(out)?;
    let analytic = g.grad_or_zeros(leaf);

    let eval = |probe: Tensor| -> Result<f64, GraphError> {
        let mut g = Graph::new();
        let leaf = g.leaf(probe);
        let out = f(&mut g, leaf)?;
        Ok(g.value(out).item())
    };

    let mut worst: f64 = 0.0;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let a = analytic.data()[i];
        let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}
