//! Dense tensors, a small reverse-mode differentiation graph, AdamW and a
//! central-difference gradient oracle.

mod graph;
mod optim;
pub(crate) mod softmax;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use optim::{adam_step, OptimizerConfig};
pub use softmax::grouped_softmax;
pub use tensor::{Parameter, Tensor};

use crate::error::Result;

/// `y = x·W (+ b)` recorded on `graph`.
pub fn linear(graph: &mut Graph<'_>, x: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
    let y = graph.matmul(x, weight)?;
    match bias {
        Some(b) => graph.add_row_bias(y, b),
        None => Ok(y),
    }
}

/// Central-difference estimate of the gradient of `f` at `x`.
pub fn finite_diff_gradient<F>(f: F, x: &Tensor, eps: f64) -> Tensor
where
    F: Fn(&Tensor) -> f64,
{
    let mut probe = x.clone();
    let mut grad = vec![0.0; x.len()];
    for (i, g) in grad.iter_mut().enumerate() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        *g = (plus - minus) / (2.0 * eps);
    }
    Tensor::from_parts(x.shape().to_vec(), grad)
}
