//! Reverse-mode differentiation over a recorded computation graph.
//!
//! A [`Graph`] lives for one forward/backward pass. Parameter values are
//! borrowed rather than copied, so building a graph over a large model is
//! cheap; gradients come back from [`Graph::backward`] keyed by [`Var`].

use std::sync::atomic::{AtomicBool, Ordering};

use log::{debug, warn};

use crate::error::{Error, Result};
use crate::numeric::softmax::{grouped_softmax_backward, masked_grouped_softmax};
use crate::numeric::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Value<'a> {
    Owned(Tensor),
    Borrowed(&'a Tensor),
}

impl Value<'_> {
    fn get(&self) -> &Tensor {
        match self {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }
}

enum Op {
    Input,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRowBias(Var, Var),
    Relu(Var),
    MulConst(Var, Tensor),
    Scale(Var, f64),
    Reshape(Var),
    ConcatRows(Vec<Var>),
    Transpose(Var),
    GroupedSoftmax {
        input: Var,
        groups: Vec<usize>,
        allowed: Option<Vec<bool>>,
    },
    SquaredError {
        input: Var,
        target: Tensor,
        norm: f64,
    },
    NegLogLikelihood {
        input: Var,
        target: Tensor,
        floor: f64,
    },
    Sum(Vec<Var>),
}

struct Node<'a> {
    value: Value<'a>,
    op: Op,
}

#[derive(Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients of a scalar with respect to every node that influences it.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.nodes[v.0].value.get()
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    /// Leaf that borrows its value, typically a model parameter.
    pub fn borrowed(&mut self, t: &'a Tensor) -> Var {
        self.nodes.push(Node {
            value: Value::Borrowed(t),
            op: Op::Input,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).matmul(self.value(b))?;
        Ok(self.push(y, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).matmul_nt(self.value(b))?;
        Ok(self.push(y, Op::MatMulNt(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).add(self.value(b))?;
        Ok(self.push(y, Op::Add(a, b)))
    }

    /// Adds a length-B bias to every row of an N×B matrix.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if xv.shape().len() != 2 || bv.len() != xv.cols() {
            return Err(Error::shape(format!(
                "bias {:?} for input {:?}",
                bv.shape(),
                xv.shape()
            )));
        }
        let cols = xv.cols();
        let mut out = xv.clone();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            *o += bv.data()[i % cols];
        }
        Ok(self.push(out, Op::AddRowBias(x, bias)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let y = Tensor::from_parts(
            xv.shape().to_vec(),
            xv.data().iter().map(|&v| v.max(0.0)).collect(),
        );
        self.push(y, Op::Relu(x))
    }

    /// Elementwise product with a constant of the same shape.
    pub fn mul_const(&mut self, x: Var, c: Tensor) -> Result<Var> {
        let y = self.value(x).mul(&c)?;
        Ok(self.push(y, Op::MulConst(x, c)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let y = self.value(x).scaled(s);
        self.push(y, Op::Scale(x, s))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let y = self.value(x).reshape(shape)?;
        Ok(self.push(y, Op::Reshape(x)))
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = match parts.first() {
            Some(&p) => self.value(p).cols(),
            None => return Err(Error::shape("concat of zero parts")),
        };
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.shape().len() != 2 || v.cols() != cols {
                return Err(Error::shape(format!(
                    "concat part {:?} with {cols} columns",
                    v.shape()
                )));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        Ok(self.push(
            Tensor::from_parts(vec![rows, cols], data),
            Op::ConcatRows(parts.to_vec()),
        ))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let y = self.value(x).transpose()?;
        Ok(self.push(y, Op::Transpose(x)))
    }

    /// Row softmax within column groups; entries with `allowed == false` are
    /// excluded and output as zero.
    pub fn grouped_softmax(
        &mut self,
        x: Var,
        groups: Vec<usize>,
        allowed: Option<Vec<bool>>,
    ) -> Result<Var> {
        let xv = self.value(x);
        crate::numeric::softmax::check_groups(xv, &groups)?;
        if let Some(a) = &allowed {
            if a.len() != xv.len() {
                return Err(Error::shape("softmax allowance mask size"));
            }
        }
        let y = masked_grouped_softmax(xv, &groups, allowed.as_deref());
        Ok(self.push(
            y,
            Op::GroupedSoftmax {
                input: x,
                groups,
                allowed,
            },
        ))
    }

    /// `Σ (x − target)² / norm` as a scalar node.
    pub fn squared_error(&mut self, x: Var, target: Tensor, norm: f64) -> Result<Var> {
        let d = self.value(x).sub(&target)?;
        let loss = d.data().iter().map(|v| v * v).sum::<f64>() / norm;
        Ok(self.push(
            Tensor::from_parts(vec![1], vec![loss]),
            Op::SquaredError {
                input: x,
                target,
                norm,
            },
        ))
    }

    /// `−Σ target · ln(max(x, floor))` as a scalar node.
    pub fn neg_log_likelihood(&mut self, x: Var, target: Tensor, floor: f64) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape() != target.shape() {
            return Err(Error::shape(format!(
                "likelihood target {:?} for {:?}",
                target.shape(),
                xv.shape()
            )));
        }
        let mut loss = 0.0;
        let mut clamped = 0usize;
        for (&p, &t) in xv.data().iter().zip(target.data()) {
            if t != 0.0 {
                if p < floor {
                    clamped += 1;
                }
                loss -= t * p.max(floor).ln();
            }
        }
        if clamped > 0 {
            static WARNED: AtomicBool = AtomicBool::new(false);
            if WARNED.swap(true, Ordering::Relaxed) {
                debug!("{clamped} probabilities clamped to {floor:e} in log-likelihood");
            } else {
                warn!("{clamped} probabilities clamped to {floor:e} in log-likelihood (repeats logged at debug level)");
            }
        }
        Ok(self.push(
            Tensor::from_parts(vec![1], vec![loss]),
            Op::NegLogLikelihood {
                input: x,
                target,
                floor,
            },
        ))
    }

    pub fn sum(&mut self, parts: &[Var]) -> Result<Var> {
        let mut total = 0.0;
        for &p in parts {
            let v = self.value(p);
            if v.len() != 1 {
                return Err(Error::shape("sum of non-scalar nodes"));
            }
            total += v.data()[0];
        }
        Ok(self.push(Tensor::from_parts(vec![1], vec![total]), Op::Sum(parts.to_vec())))
    }

    /// Back-propagates from scalar node `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.value(root).len() != 1 {
            return Err(Error::shape("backward from a non-scalar node"));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(Tensor::from_parts(self.value(root).shape().to_vec(), vec![1.0]));

        for idx in (0..=root.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {
                    grads[idx] = Some(dy);
                }
                Op::MatMul(a, b) => {
                    let da = dy.matmul_nt(self.value(*b))?;
                    let db = self.value(*a).matmul_tn(&dy)?;
                    accumulate(&mut grads, *a, da)?;
                    accumulate(&mut grads, *b, db)?;
                }
                Op::MatMulNt(a, b) => {
                    let da = dy.matmul(self.value(*b))?;
                    let db = dy.matmul_tn(self.value(*a))?;
                    accumulate(&mut grads, *a, da)?;
                    accumulate(&mut grads, *b, db)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, dy.clone())?;
                    accumulate(&mut grads, *b, dy)?;
                }
                Op::AddRowBias(x, bias) => {
                    let cols = dy.cols();
                    let mut db = vec![0.0; cols];
                    for (i, g) in dy.data().iter().enumerate() {
                        db[i % cols] += g;
                    }
                    let bshape = self.value(*bias).shape().to_vec();
                    accumulate(&mut grads, *bias, Tensor::from_parts(bshape, db))?;
                    accumulate(&mut grads, *x, dy)?;
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    let dx = Tensor::from_parts(
                        dy.shape().to_vec(),
                        dy.data()
                            .iter()
                            .zip(xv.data())
                            .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                            .collect(),
                    );
                    accumulate(&mut grads, *x, dx)?;
                }
                Op::MulConst(x, c) => accumulate(&mut grads, *x, dy.mul(c)?)?,
                Op::Scale(x, s) => accumulate(&mut grads, *x, dy.scaled(*s))?,
                Op::Reshape(x) => {
                    let shape = self.value(*x).shape().to_vec();
                    accumulate(&mut grads, *x, dy.reshape(&shape)?)?;
                }
                Op::ConcatRows(parts) => {
                    let cols = dy.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let rows = self.value(p).rows();
                        let slice = dy.data()[offset * cols..(offset + rows) * cols].to_vec();
                        accumulate(&mut grads, p, Tensor::from_parts(vec![rows, cols], slice))?;
                        offset += rows;
                    }
                }
                Op::Transpose(x) => accumulate(&mut grads, *x, dy.transpose()?)?,
                Op::GroupedSoftmax {
                    input,
                    groups,
                    allowed,
                } => {
                    let dx = grouped_softmax_backward(
                        node.value.get(),
                        &dy,
                        groups,
                        allowed.as_deref(),
                    );
                    accumulate(&mut grads, *input, dx)?;
                }
                Op::SquaredError {
                    input,
                    target,
                    norm,
                } => {
                    let g = dy.data()[0] * 2.0 / norm;
                    let dx = self.value(*input).sub(target)?.scaled(g);
                    accumulate(&mut grads, *input, dx)?;
                }
                Op::NegLogLikelihood {
                    input,
                    target,
                    floor,
                } => {
                    let g = dy.data()[0];
                    let xv = self.value(*input);
                    let dx = Tensor::from_parts(
                        xv.shape().to_vec(),
                        xv.data()
                            .iter()
                            .zip(target.data())
                            .map(|(&p, &t)| {
                                if t != 0.0 && p >= *floor {
                                    -g * t / p
                                } else {
                                    0.0
                                }
                            })
                            .collect(),
                    );
                    accumulate(&mut grads, *input, dx)?;
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        accumulate(&mut grads, p, dy.clone())?;
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.axpy(1.0, &g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}
