use crate::error::{Error, Result};

use super::ops::{col2im_add, gemm, ConvGeom};
use super::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    SoftmaxLast(Var),
    Conv2d {
        input: Var,
        kernel: Var,
        geom: ConvGeom,
        cols: Vec<f64>,
    },
    Mask(Var, Vec<f64>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    Transpose(Var),
    PairSum(Var, Var),
    Gather {
        src: Var,
        taps: Vec<[(usize, f64); 4]>,
    },
    Reshape(Var),
    Sum(Var),
    WeightedSqErr {
        pred: Var,
        target: Vec<f64>,
        weights: Vec<f64>,
        scale: f64,
    },
    Bce {
        probs: Var,
        labels: Vec<f64>,
        scale: f64,
        lo: f64,
        hi: f64,
    },
}

pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) requires_grad: bool,
    pub(crate) op: Op,
}

/// Linear record of operations. Nodes are appended in evaluation order, so the
/// node list is already a topological order and `backward` is a single reverse
/// sweep.
#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`]. Only leaves keep their gradient;
/// intermediate buffers are released during the sweep.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input. Leaves with `requires_grad` receive gradients.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = &self.nodes[output.0].value;
        if out.len() != 1 {
            return Err(Error::dim(format!(
                "backward needs a scalar output, got shape {:?}",
                out.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::new();
        grads.resize_with(output.0 + 1, || None);
        if !self.nodes[output.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[output.0] = Some(vec![1.0]);

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn grad_slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]))
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                if let Some(da) = self.grad_slot(grads, *a) {
                    // dA += dC · Bᵀ
                    gemm(m, n, k, g, n as isize, 1, bv.data(), 1, n as isize, da, 1.0);
                }
                if let Some(db) = self.grad_slot(grads, *b) {
                    // dB += Aᵀ · dC
                    gemm(k, m, n, av.data(), 1, k as isize, g, n as isize, 1, db, 1.0);
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(d) = self.grad_slot(grads, *v) {
                        d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::AddBias(x, bias) => {
                if let Some(dx) = self.grad_slot(grads, *x) {
                    dx.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                }
                let c = self.value(*bias).len();
                if let Some(db) = self.grad_slot(grads, *bias) {
                    for row in g.chunks_exact(c) {
                        db.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::Scale(x, s) => {
                if let Some(dx) = self.grad_slot(grads, *x) {
                    dx.iter_mut().zip(g).for_each(|(d, g)| *d += s * g);
                }
            }
            Op::Relu(x) => {
                if let Some(dx) = self.grad_slot(grads, *x) {
                    for ((d, g), y) in dx.iter_mut().zip(g).zip(y) {
                        if *y > 0.0 {
                            *d += g;
                        }
                    }
                }
            }
            Op::Sigmoid(x) => {
                if let Some(dx) = self.grad_slot(grads, *x) {
                    for ((d, g), y) in dx.iter_mut().zip(g).zip(y) {
                        *d += g * y * (1.0 - y);
                    }
                }
            }
            Op::SoftmaxLast(x) => {
                let w = node.value.last_dim();
                if let Some(dx) = self.grad_slot(grads, *x) {
                    for ((d, g), y) in dx
                        .chunks_exact_mut(w)
                        .zip(g.chunks_exact(w))
                        .zip(y.chunks_exact(w))
                    {
                        let dot: f64 = g.iter().zip(y).map(|(g, y)| g * y).sum();
                        for ((d, g), y) in d.iter_mut().zip(g).zip(y) {
                            *d += y * (g - dot);
                        }
                    }
                }
            }
            Op::Conv2d {
                input,
                kernel,
                geom,
                cols,
            } => {
                let rows = geom.out_h * geom.out_w;
                let kdim = geom.patch_len();
                let cout = geom.cout;
                if let Some(dk) = self.grad_slot(grads, *kernel) {
                    // dK += colsᵀ · dOut
                    gemm(
                        kdim,
                        rows,
                        cout,
                        cols,
                        1,
                        kdim as isize,
                        g,
                        cout as isize,
                        1,
                        dk,
                        1.0,
                    );
                }
                if self.nodes[input.0].requires_grad {
                    let kv = self.value(*kernel);
                    let mut dcols = vec![0.0; rows * kdim];
                    // dCols = dOut · Kᵀ
                    gemm(
                        rows,
                        cout,
                        kdim,
                        g,
                        cout as isize,
                        1,
                        kv.data(),
                        1,
                        cout as isize,
                        &mut dcols,
                        0.0,
                    );
                    let dx = self
                        .grad_slot(grads, *input)
                        .expect("requires_grad checked");
                    col2im_add(geom, &dcols, dx);
                }
            }
            Op::Mask(x, mask) => {
                if let Some(dx) = self.grad_slot(grads, *x) {
                    for ((d, g), m) in dx.iter_mut().zip(g).zip(mask) {
                        *d += g * m;
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.last_dim();
                let mut offset = 0;
                for part in parts {
                    let w = self.value(*part).last_dim();
                    if let Some(dp) = self.grad_slot(grads, *part) {
                        for (d, grow) in dp.chunks_exact_mut(w).zip(g.chunks_exact(total)) {
                            d.iter_mut()
                                .zip(&grow[offset..offset + w])
                                .for_each(|(d, g)| *d += g);
                        }
                    }
                    offset += w;
                }
            }
            Op::SliceRows(x, start) => {
                let w = node.value.last_dim();
                if let Some(dx) = self.grad_slot(grads, *x) {
                    dx[start * w..start * w + g.len()]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(d, g)| *d += g);
                }
            }
            Op::Transpose(x) => {
                let (r, c) = (node.value.shape()[0], node.value.shape()[1]);
                if let Some(dx) = self.grad_slot(grads, *x) {
                    // output is r×c, input is c×r
                    for i in 0..r {
                        for j in 0..c {
                            dx[j * r + i] += g[i * c + j];
                        }
                    }
                }
            }
            Op::PairSum(a, b) => {
                let n = self.value(*a).shape()[0];
                let w = node.value.last_dim();
                if let Some(da) = self.grad_slot(grads, *a) {
                    for i in 0..n {
                        for j in 0..n {
                            let grow = &g[(i * n + j) * w..(i * n + j + 1) * w];
                            da[i * w..(i + 1) * w]
                                .iter_mut()
                                .zip(grow)
                                .for_each(|(d, g)| *d += g);
                        }
                    }
                }
                if let Some(db) = self.grad_slot(grads, *b) {
                    for i in 0..n {
                        for j in 0..n {
                            let grow = &g[(i * n + j) * w..(i * n + j + 1) * w];
                            db[j * w..(j + 1) * w]
                                .iter_mut()
                                .zip(grow)
                                .for_each(|(d, g)| *d += g);
                        }
                    }
                }
            }
            Op::Gather { src, taps } => {
                let c = node.value.last_dim();
                if let Some(ds) = self.grad_slot(grads, *src) {
                    for (taps, grow) in taps.iter().zip(g.chunks_exact(c)) {
                        for &(cell, weight) in taps {
                            if weight == 0.0 {
                                continue;
                            }
                            ds[cell * c..(cell + 1) * c]
                                .iter_mut()
                                .zip(grow)
                                .for_each(|(d, g)| *d += weight * g);
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(dx) = self.grad_slot(grads, *x) {
                    dx.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                }
            }
            Op::Sum(x) => {
                if let Some(dx) = self.grad_slot(grads, *x) {
                    dx.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::WeightedSqErr {
                pred,
                target,
                weights,
                scale,
            } => {
                let pv = self.value(*pred).data();
                if let Some(dp) = self.grad_slot(grads, *pred) {
                    for i in 0..dp.len() {
                        dp[i] += g[0] * scale * 2.0 * weights[i] * (pv[i] - target[i]);
                    }
                }
            }
            Op::Bce {
                probs,
                labels,
                scale,
                lo,
                hi,
            } => {
                let pv = self.value(*probs).data();
                if let Some(dp) = self.grad_slot(grads, *probs) {
                    for i in 0..dp.len() {
                        let p = pv[i];
                        // clamp is flat outside (lo, hi)
                        if p <= *lo || p >= *hi {
                            continue;
                        }
                        let l = labels[i];
                        dp[i] += g[0] * scale * (-l / p + (1.0 - l) / (1.0 - p));
                    }
                }
            }
        }
    }
}
