//! Reverse-mode gradient tape over dense tensors.
//!
//! The primitive set is deliberately closed: every composite computation in the
//! crate (coefficient nets, backbones, losses) is expressed with these ops, so a
//! single finite-difference checker covers all of them.
//!
//! Binary ops accept operands of identical shape, or one operand holding a
//! single element which is broadcast. Any other broadcast must be spelled out
//! with [`GradTape::expand_last`] or [`GradTape::expand_first`].

use alloc::vec;
use alloc::vec::Vec;

use crate::conet::EPS_FLOOR;
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Default leaky-ReLU slope.
pub const DEFAULT_SLOPE: f64 = 0.01;

/// Handle to a value recorded on a [`GradTape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy)]
enum Op {
    Constant,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    MatVec(Var, Var),
    Sum(Var),
    Mean(Var),
    SumLast(Var),
    MeanLast(Var),
    Sqrt(Var),
    Square(Var),
    LeakyRelu(Var, f64),
    ClampMin(Var, f64),
    ExpandLast(Var),
    ExpandFirst(Var),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Ordered record of primitive operations. Nodes are appended only, so every
/// node's inputs precede it and reverse insertion order is a valid backward order.
#[derive(Debug, Clone, Default)]
pub struct GradTape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every node of a tape.
#[derive(Debug, Clone)]
pub struct Grads {
    grads: Vec<Option<Tensor>>,
}

impl Grads {
    /// Gradient of `var`, or `None` when `var` has no path to the loss.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
}

fn binary_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Vec<usize>> {
    if a.shape() == b.shape() || b.is_scalar() {
        Ok(a.shape().to_vec())
    } else if a.is_scalar() {
        Ok(b.shape().to_vec())
    } else {
        Err(Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })
    }
}

fn zip_broadcast(a: &Tensor, b: &Tensor, shape: Vec<usize>, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let len: usize = shape.iter().product();
    let (da, db) = (a.data(), b.data());
    let pick = |d: &[f64], i: usize| if d.len() == 1 { d[0] } else { d[i] };
    let data = (0..len).map(|i| f(pick(da, i), pick(db, i))).collect();
    Tensor::new(shape, data).expect("broadcast shape is consistent")
}

/// Sums an upstream gradient back down to an operand's shape (undoing scalar broadcast).
fn reduce_to(grad: Tensor, target: &Tensor) -> Tensor {
    if grad.shape() == target.shape() {
        grad
    } else {
        let total: f64 = grad.data().iter().sum();
        Tensor::new(target.shape().to_vec(), vec![total; target.len()]).expect("scalar target")
    }
}

fn last_dim(t: &Tensor) -> usize {
    t.shape().last().copied().unwrap_or(1)
}

impl GradTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, name: &'static str) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: name });
        }
        self.nodes.push(Node { op, value });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records an untracked input.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(Op::Constant, value, "constant")
    }

    /// Records a learnable leaf whose gradient is accumulated into `store` on backward.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        self.push(Op::Param(id), store.value(id).clone(), "param")
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = binary_shape(name, ta, tb)?;
        let out = zip_broadcast(ta, tb, shape, f);
        self.push(op, out, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(b).data().contains(&0.0) {
            return Err(Error::NonFinite { op: "div" });
        }
        self.binary("div", a, b, Op::Div(a, b), |x, y| x / y)
    }

    /// Matrix-vector product in three layouts:
    /// `[M,K]·[K] → [M]`, `[M,K]` applied to each row of `[B,K]` → `[B,M]`,
    /// and batched `[B,M,K]·[B,K] → [B,M]`.
    pub fn matvec(&mut self, a: Var, x: Var) -> Result<Var> {
        let (ta, tx) = (self.value(a), self.value(x));
        let mismatch = || Error::ShapeMismatch {
            op: "matvec",
            lhs: ta.shape().to_vec(),
            rhs: tx.shape().to_vec(),
        };
        let (ad, xd) = (ta.data(), tx.data());
        let out = match (ta.shape(), tx.shape()) {
            (&[m, k], &[kx]) if k == kx => {
                let data = (0..m).map(|r| dot(&ad[r * k..(r + 1) * k], xd)).collect();
                Tensor::new(vec![m], data)?
            }
            (&[m, k], &[b, kx]) if k == kx => {
                let mut data = Vec::with_capacity(b * m);
                for bi in 0..b {
                    let xr = &xd[bi * k..(bi + 1) * k];
                    data.extend((0..m).map(|r| dot(&ad[r * k..(r + 1) * k], xr)));
                }
                Tensor::new(vec![b, m], data)?
            }
            (&[b, m, k], &[bx, kx]) if b == bx && k == kx => {
                let mut data = Vec::with_capacity(b * m);
                for bi in 0..b {
                    let xr = &xd[bi * k..(bi + 1) * k];
                    let block = &ad[bi * m * k..(bi + 1) * m * k];
                    data.extend((0..m).map(|r| dot(&block[r * k..(r + 1) * k], xr)));
                }
                Tensor::new(vec![b, m], data)?
            }
            _ => return Err(mismatch()),
        };
        self.push(Op::MatVec(a, x), out, "matvec")
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.push(Op::Sum(x), Tensor::scalar(s), "sum")
    }

    /// Mean of all elements, as a rank-0 tensor.
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.is_empty() {
            return Err(Error::contract("mean of an empty tensor"));
        }
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Op::Mean(x), Tensor::scalar(m), "mean")
    }

    fn reduce_last(&mut self, x: Var, scale_by_len: bool) -> Result<Var> {
        let t = self.value(x);
        let k = last_dim(t);
        if k == 0 {
            return Err(Error::contract("reduction over an empty axis"));
        }
        let shape = t.shape()[..t.rank().saturating_sub(1)].to_vec();
        let data = t
            .data()
            .chunks(k)
            .map(|c| {
                let s: f64 = c.iter().sum();
                if scale_by_len {
                    s / k as f64
                } else {
                    s
                }
            })
            .collect();
        let out = Tensor::new(shape, data)?;
        if scale_by_len {
            self.push(Op::MeanLast(x), out, "mean_last")
        } else {
            self.push(Op::SumLast(x), out, "sum_last")
        }
    }

    /// Sum over the last axis: `[.., K] → [..]`.
    pub fn sum_last(&mut self, x: Var) -> Result<Var> {
        self.reduce_last(x, false)
    }

    /// Mean over the last axis: `[.., K] → [..]`.
    pub fn mean_last(&mut self, x: Var) -> Result<Var> {
        self.reduce_last(x, true)
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.data().iter().any(|&v| v < 0.0) {
            return Err(Error::NonFinite { op: "sqrt" });
        }
        let out = t.map(libm::sqrt);
        self.push(Op::Sqrt(x), out, "sqrt")
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v * v);
        self.push(Op::Square(x), out, "square")
    }

    /// `max(x, slope·x)` for `0 ≤ slope < 1`.
    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        let out = self.value(x).map(|v| leaky_relu(v, slope));
        self.push(Op::LeakyRelu(x, slope), out, "leaky_relu")
    }

    /// `max(x, floor)`; the gradient is zero wherever the floor is active.
    pub fn clamp_min(&mut self, x: Var, floor: f64) -> Result<Var> {
        let out = self.value(x).map(|v| v.max(floor));
        self.push(Op::ClampMin(x, floor), out, "clamp_min")
    }

    /// Repeats each element `k` times along a new trailing axis: `[..] → [.., k]`.
    pub fn expand_last(&mut self, x: Var, k: usize) -> Result<Var> {
        let t = self.value(x);
        let mut shape = t.shape().to_vec();
        shape.push(k);
        let data = t.data().iter().flat_map(|&v| core::iter::repeat(v).take(k)).collect();
        let out = Tensor::new(shape, data)?;
        self.push(Op::ExpandLast(x), out, "expand_last")
    }

    /// Stacks `b` copies along a new leading axis: `[..] → [b, ..]`.
    pub fn expand_first(&mut self, x: Var, b: usize) -> Result<Var> {
        let t = self.value(x);
        let mut shape = vec![b];
        shape.extend_from_slice(t.shape());
        let mut data = Vec::with_capacity(b * t.len());
        for _ in 0..b {
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new(shape, data)?;
        self.push(Op::ExpandFirst(x), out, "expand_first")
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn grads(&self, loss: Var) -> Result<Grads> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::contract(alloc::format!(
                "backward from a non-scalar of shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lt.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            for (input, contribution) in self.local_grads(node, &g) {
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&contribution)?,
                    slot @ None => *slot = Some(contribution),
                }
            }
            grads[i] = Some(g);
        }
        Ok(Grads { grads })
    }

    /// Accumulates `d(loss)/d(param)` into the store's gradient buffers.
    ///
    /// Buffers are added to, not overwritten: call [`ParamStore::zero_grad`]
    /// between steps. Parameters with no path to the loss are left untouched.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let grads = self.grads(loss)?;
        for (i, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if let (Op::Param(id), Some(g)) = (node.op, &grads.grads[i]) {
                store.grad_mut(id).add_assign(g)?;
            }
        }
        Ok(())
    }

    fn local_grads(&self, node: &Node, g: &Tensor) -> Vec<(Var, Tensor)> {
        let val = |v: Var| self.value(v);
        match node.op {
            Op::Constant | Op::Param(_) => Vec::new(),
            Op::Add(a, b) => vec![(a, reduce_to(g.clone(), val(a))), (b, reduce_to(g.clone(), val(b)))],
            Op::Sub(a, b) => vec![(a, reduce_to(g.clone(), val(a))), (b, reduce_to(g.map(|x| -x), val(b)))],
            Op::Mul(a, b) => {
                let ga = zip_broadcast(g, val(b), g.shape().to_vec(), |gi, bi| gi * bi);
                let gb = zip_broadcast(g, val(a), g.shape().to_vec(), |gi, ai| gi * ai);
                vec![(a, reduce_to(ga, val(a))), (b, reduce_to(gb, val(b)))]
            }
            Op::Div(a, b) => {
                let ga = zip_broadcast(g, val(b), g.shape().to_vec(), |gi, bi| gi / bi);
                let ab = zip_broadcast(val(a), val(b), g.shape().to_vec(), |ai, bi| -ai / (bi * bi));
                let gb = zip_broadcast(g, &ab, g.shape().to_vec(), |gi, q| gi * q);
                vec![(a, reduce_to(ga, val(a))), (b, reduce_to(gb, val(b)))]
            }
            Op::MatVec(a, x) => {
                let (ga, gx) = matvec_grads(val(a), val(x), g);
                vec![(a, ga), (x, gx)]
            }
            Op::Sum(x) => {
                let t = val(x);
                vec![(x, Tensor::full(t.shape(), g.data()[0]))]
            }
            Op::Mean(x) => {
                let t = val(x);
                vec![(x, Tensor::full(t.shape(), g.data()[0] / t.len() as f64))]
            }
            Op::SumLast(x) | Op::MeanLast(x) => {
                let t = val(x);
                let k = last_dim(t);
                let scale = if matches!(node.op, Op::MeanLast(_)) {
                    1.0 / k as f64
                } else {
                    1.0
                };
                let data = g
                    .data()
                    .iter()
                    .flat_map(|&gi| core::iter::repeat(gi * scale).take(k))
                    .collect();
                vec![(x, Tensor::new(t.shape().to_vec(), data).expect("reduction shape"))]
            }
            Op::Sqrt(x) => {
                let gx = zip_broadcast(g, &node.value, g.shape().to_vec(), |gi, y| {
                    gi / (2.0 * y.max(EPS_FLOOR))
                });
                vec![(x, gx)]
            }
            Op::Square(x) => {
                let gx = zip_broadcast(g, val(x), g.shape().to_vec(), |gi, xi| 2.0 * xi * gi);
                vec![(x, gx)]
            }
            Op::LeakyRelu(x, slope) => {
                let gx = zip_broadcast(
                    g,
                    val(x),
                    g.shape().to_vec(),
                    |gi, xi| {
                        if xi > 0.0 {
                            gi
                        } else {
                            slope * gi
                        }
                    },
                );
                vec![(x, gx)]
            }
            Op::ClampMin(x, floor) => {
                let gx = zip_broadcast(
                    g,
                    val(x),
                    g.shape().to_vec(),
                    |gi, xi| {
                        if xi > floor {
                            gi
                        } else {
                            0.0
                        }
                    },
                );
                vec![(x, gx)]
            }
            Op::ExpandLast(x) => {
                let t = val(x);
                let k = last_dim(g);
                let data = g.data().chunks(k).map(|c| c.iter().sum()).collect();
                vec![(x, Tensor::new(t.shape().to_vec(), data).expect("expand shape"))]
            }
            Op::ExpandFirst(x) => {
                let t = val(x);
                let n = t.len();
                let mut acc = vec![0.0; n];
                for block in g.data().chunks(n.max(1)) {
                    for (a, b) in acc.iter_mut().zip(block) {
                        *a += b;
                    }
                }
                vec![(x, Tensor::new(t.shape().to_vec(), acc).expect("expand shape"))]
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn matvec_grads(a: &Tensor, x: &Tensor, g: &Tensor) -> (Tensor, Tensor) {
    let mut ga = Tensor::zeros(a.shape());
    let mut gx = Tensor::zeros(x.shape());
    let (ad, xd, gd) = (a.data(), x.data(), g.data());
    match *a.shape() {
        [m, k] => {
            let batch = if x.rank() == 1 { 1 } else { x.shape()[0] };
            let gad = ga.data_mut();
            for bi in 0..batch {
                let xr = &xd[bi * k..(bi + 1) * k];
                let gr = &gd[bi * m..(bi + 1) * m];
                for r in 0..m {
                    let row = &mut gad[r * k..(r + 1) * k];
                    for (c, slot) in row.iter_mut().enumerate() {
                        *slot += gr[r] * xr[c];
                    }
                }
            }
            let gxd = gx.data_mut();
            for bi in 0..batch {
                let gr = &gd[bi * m..(bi + 1) * m];
                let out = &mut gxd[bi * k..(bi + 1) * k];
                for r in 0..m {
                    let arow = &ad[r * k..(r + 1) * k];
                    for (c, slot) in out.iter_mut().enumerate() {
                        *slot += arow[c] * gr[r];
                    }
                }
            }
        }
        [b, m, k] => {
            let gad = ga.data_mut();
            let gxd = gx.data_mut();
            for bi in 0..b {
                let xr = &xd[bi * k..(bi + 1) * k];
                let gr = &gd[bi * m..(bi + 1) * m];
                for (r, &g) in gr.iter().enumerate() {
                    let off = bi * m * k + r * k;
                    for c in 0..k {
                        gad[off + c] += g * xr[c];
                        gxd[bi * k + c] += ad[off + c] * g;
                    }
                }
            }
        }
        _ => unreachable!("matvec shapes validated on forward"),
    }
    (ga, gx)
}

/// Scalar leaky ReLU, `max(x, slope·x)`.
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}
