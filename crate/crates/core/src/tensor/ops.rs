use rand::Rng;

use crate::error::{Error, Result};

use super::tape::{Op, Tape, Var};
use super::Tensor;

/// `c = a·b + beta·c` for row-major `c` (m×n). Strides describe how `a` (m×k)
/// and `b` (k×n) are laid out, so transposed operands need no copy.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_rs: isize,
    a_cs: isize,
    b: &[f64],
    b_rs: isize,
    b_cs: isize,
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: the strides address elements within `a` (m×k), `b` (k×n) and
    // `c` (m×n, row-major); callers derive them from checked tensor shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_rs,
            a_cs,
            b.as_ptr(),
            b_rs,
            b_cs,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn patch_len(&self) -> usize {
        self.kh * self.kw * self.cin
    }
}

fn im2col(geom: &ConvGeom, input: &[f64]) -> Vec<f64> {
    let kdim = geom.patch_len();
    let mut cols = vec![0.0; geom.out_h * geom.out_w * kdim];
    let cin = geom.cin;
    for oy in 0..geom.out_h {
        for ox in 0..geom.out_w {
            let row = (oy * geom.out_w + ox) * kdim;
            for ky in 0..geom.kh {
                let iy = (oy * geom.stride + ky) as isize - geom.pad as isize;
                if iy < 0 || iy >= geom.h as isize {
                    continue;
                }
                for kx in 0..geom.kw {
                    let ix = (ox * geom.stride + kx) as isize - geom.pad as isize;
                    if ix < 0 || ix >= geom.w as isize {
                        continue;
                    }
                    let src = (iy as usize * geom.w + ix as usize) * cin;
                    let dst = row + (ky * geom.kw + kx) * cin;
                    cols[dst..dst + cin].copy_from_slice(&input[src..src + cin]);
                }
            }
        }
    }
    cols
}

pub(crate) fn col2im_add(geom: &ConvGeom, dcols: &[f64], dx: &mut [f64]) {
    let kdim = geom.patch_len();
    let cin = geom.cin;
    for oy in 0..geom.out_h {
        for ox in 0..geom.out_w {
            let row = (oy * geom.out_w + ox) * kdim;
            for ky in 0..geom.kh {
                let iy = (oy * geom.stride + ky) as isize - geom.pad as isize;
                if iy < 0 || iy >= geom.h as isize {
                    continue;
                }
                for kx in 0..geom.kw {
                    let ix = (ox * geom.stride + kx) as isize - geom.pad as isize;
                    if ix < 0 || ix >= geom.w as isize {
                        continue;
                    }
                    let dst = (iy as usize * geom.w + ix as usize) * cin;
                    let src = row + (ky * geom.kw + kx) * cin;
                    dx[dst..dst + cin]
                        .iter_mut()
                        .zip(&dcols[src..src + cin])
                        .for_each(|(d, s)| *d += s);
                }
            }
        }
    }
}

/// Bilinear weights of the four cells around a continuous grid coordinate.
/// `gx`, `gy` are clamped into `[0, size-1]` (border replication).
pub(crate) fn bilinear_taps(gx: f64, gy: f64, width: usize, height: usize) -> [(usize, f64); 4] {
    let gx = gx.clamp(0.0, (width - 1) as f64);
    let gy = gy.clamp(0.0, (height - 1) as f64);
    let x0 = (gx.floor() as usize).min(width - 1);
    let y0 = (gy.floor() as usize).min(height - 1);
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = gx - x0 as f64;
    let fy = gy - y0 as f64;
    [
        (y0 * width + x0, (1.0 - fx) * (1.0 - fy)),
        (y0 * width + x1, fx * (1.0 - fy)),
        (y1 * width + x0, (1.0 - fx) * fy),
        (y1 * width + x1, fx * fy),
    ]
}

fn expect_rank(t: &Tensor, rank: usize, what: &str) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::dim(format!(
            "{what} expects a rank-{rank} tensor, got shape {:?}",
            t.shape()
        )));
    }
    Ok(())
}

impl Tape {
    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.requires_grad(*v))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        expect_rank(av, 2, "matmul")?;
        expect_rank(bv, 2, "matmul")?;
        let (m, k) = (av.shape()[0], av.shape()[1]);
        let (k2, n) = (bv.shape()[0], bv.shape()[1]);
        if k != k2 {
            return Err(Error::dim(format!(
                "matmul inner dimensions differ: {:?} · {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            av.data(),
            k as isize,
            1,
            bv.data(),
            n as isize,
            1,
            &mut out,
            0.0,
        );
        let value = Tensor::new_allow_empty([m, n], out)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::dim(format!(
                "add needs equal shapes, got {:?} and {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new_allow_empty(av.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::Add(a, b)))
    }

    /// Adds a vector along the last axis (per-channel / per-column bias).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let c = xv.last_dim();
        if bv.len() != c {
            return Err(Error::dim(format!(
                "bias of length {} does not fit last axis of {:?}",
                bv.len(),
                xv.shape()
            )));
        }
        let mut data = xv.data().to_vec();
        for row in data.chunks_exact_mut(c) {
            row.iter_mut().zip(bv.data()).for_each(|(v, b)| *v += b);
        }
        let value = Tensor::new_allow_empty(xv.shape().to_vec(), data)?;
        let rg = self.any_grad(&[x, bias]);
        Ok(self.push(value, rg, Op::AddBias(x, bias)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let value = self.value(x).map(|v| v * s);
        let rg = self.requires_grad(x);
        self.push(value, rg, Op::Scale(x, s))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let rg = self.requires_grad(x);
        self.push(value, rg, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        let rg = self.requires_grad(x);
        self.push(value, rg, Op::Sigmoid(x))
    }

    /// Softmax along the last axis (each row of a matrix, or a whole vector).
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.is_empty() {
            return Err(Error::dim(format!(
                "softmax of empty tensor {:?}",
                xv.shape()
            )));
        }
        let w = xv.last_dim();
        let mut data = xv.data().to_vec();
        for row in data.chunks_exact_mut(w) {
            softmax_in_place(row);
        }
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        let rg = self.requires_grad(x);
        Ok(self.push(value, rg, Op::SoftmaxLast(x)))
    }

    /// Cross-correlation of an `H×W×Cin` input with a `kh×kw×Cin×Cout` kernel.
    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (iv, kv) = (self.value(input), self.value(kernel));
        expect_rank(iv, 3, "conv2d input")?;
        expect_rank(kv, 4, "conv2d kernel")?;
        if stride == 0 {
            return Err(Error::Parameter("conv2d stride must be positive".into()));
        }
        let (h, w, cin) = (iv.shape()[0], iv.shape()[1], iv.shape()[2]);
        let (kh, kw, kcin, cout) = (kv.shape()[0], kv.shape()[1], kv.shape()[2], kv.shape()[3]);
        if kcin != cin {
            return Err(Error::dim(format!(
                "conv2d kernel {:?} expects {kcin} input channels, input is {:?}",
                kv.shape(),
                iv.shape()
            )));
        }
        if kh > h + 2 * padding || kw > w + 2 * padding {
            return Err(Error::dim(format!(
                "conv2d kernel {:?} larger than padded input {:?} (padding {padding})",
                kv.shape(),
                iv.shape()
            )));
        }
        let geom = ConvGeom {
            h,
            w,
            cin,
            kh,
            kw,
            cout,
            stride,
            pad: padding,
            out_h: (h + 2 * padding - kh) / stride + 1,
            out_w: (w + 2 * padding - kw) / stride + 1,
        };
        let cols = im2col(&geom, iv.data());
        let rows = geom.out_h * geom.out_w;
        let kdim = geom.patch_len();
        let mut out = vec![0.0; rows * cout];
        gemm(
            rows,
            kdim,
            cout,
            &cols,
            kdim as isize,
            1,
            kv.data(),
            cout as isize,
            1,
            &mut out,
            0.0,
        );
        let value = Tensor::new([geom.out_h, geom.out_w, cout], out)?;
        let rg = self.any_grad(&[input, kernel]);
        Ok(self.push(
            value,
            rg,
            Op::Conv2d {
                input,
                kernel,
                geom,
                cols,
            },
        ))
    }

    /// Inverted dropout. Outside training (or with `rate == 0`) the input
    /// handle itself is returned.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Parameter(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.value(x).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        Ok(self.apply_mask(x, mask))
    }

    /// Elementwise product with a constant mask.
    pub fn apply_mask(&mut self, x: Var, mask: Vec<f64>) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new_allow_empty(xv.shape().to_vec(), data).expect("mask matches input");
        let rg = self.requires_grad(x);
        self.push(value, rg, Op::Mask(x, mask))
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(Error::dim("concat of zero tensors"));
        };
        let rows = self.value(*first).shape()[0];
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let v = self.value(*p);
            expect_rank(v, 2, "concat_cols")?;
            if v.shape()[0] != rows {
                return Err(Error::dim(format!(
                    "concat_cols row mismatch: {} vs {:?}",
                    rows,
                    v.shape()
                )));
            }
            widths.push(v.shape()[1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(*p).data()[r * w..(r + 1) * w]);
            }
        }
        let value = Tensor::new_allow_empty([rows, total], data)?;
        let rg = self.any_grad(parts);
        Ok(self.push(value, rg, Op::ConcatCols(parts.to_vec())))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let xv = self.value(x);
        expect_rank(xv, 2, "slice_rows")?;
        if start >= end || end > xv.shape()[0] {
            return Err(Error::dim(format!(
                "row range {start}..{end} invalid for {:?}",
                xv.shape()
            )));
        }
        let w = xv.shape()[1];
        let value = Tensor::new([end - start, w], xv.data()[start * w..end * w].to_vec())?;
        let rg = self.requires_grad(x);
        Ok(self.push(value, rg, Op::SliceRows(x, start)))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        expect_rank(xv, 2, "transpose")?;
        let (r, c) = (xv.shape()[0], xv.shape()[1]);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = xv.data()[i * c + j];
            }
        }
        let value = Tensor::new_allow_empty([c, r], data)?;
        let rg = self.requires_grad(x);
        Ok(self.push(value, rg, Op::Transpose(x)))
    }

    /// All ordered row pairs: row `i·N + j` of the result is `a[i] + b[j]`.
    pub fn pair_sum(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        expect_rank(av, 2, "pair_sum")?;
        if av.shape() != bv.shape() {
            return Err(Error::dim(format!(
                "pair_sum needs equal shapes, got {:?} and {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let (n, w) = (av.shape()[0], av.shape()[1]);
        let mut data = Vec::with_capacity(n * n * w);
        for i in 0..n {
            for j in 0..n {
                data.extend(av.row(i).iter().zip(bv.row(j)).map(|(x, y)| x + y));
            }
        }
        let value = Tensor::new_allow_empty([n * n, w], data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::PairSum(a, b)))
    }

    /// Bilinear sampling of an `H×W×C` map at continuous grid coordinates
    /// `(gx, gy)`; coordinates are constants of the graph.
    pub fn bilinear_gather(&mut self, map: Var, coords: &[(f64, f64)]) -> Result<Var> {
        let mv = self.value(map);
        expect_rank(mv, 3, "bilinear_gather")?;
        let (h, w, c) = (mv.shape()[0], mv.shape()[1], mv.shape()[2]);
        let taps: Vec<_> = coords
            .iter()
            .map(|&(gx, gy)| bilinear_taps(gx, gy, w, h))
            .collect();
        let mut data = vec![0.0; taps.len() * c];
        for (t, out) in taps.iter().zip(data.chunks_exact_mut(c)) {
            for &(cell, weight) in t {
                if weight == 0.0 {
                    continue;
                }
                out.iter_mut()
                    .zip(&mv.data()[cell * c..(cell + 1) * c])
                    .for_each(|(o, v)| *o += weight * v);
            }
        }
        let value = Tensor::new_allow_empty([coords.len(), c], data)?;
        let rg = self.requires_grad(map);
        Ok(self.push(value, rg, Op::Gather { src: map, taps }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone();
        let value = if shape.iter().product::<usize>() == 0 {
            Tensor::new_allow_empty(shape.to_vec(), value.into_data())?
        } else {
            value.reshape(shape.to_vec())?
        };
        let rg = self.requires_grad(x);
        Ok(self.push(value, rg, Op::Reshape(x)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.requires_grad(x);
        self.push(value, rg, Op::Sum(x))
    }

    /// `scale · Σ wᵢ (predᵢ − targetᵢ)²` as a scalar.
    pub fn weighted_sq_error(
        &mut self,
        pred: Var,
        target: Vec<f64>,
        weights: Vec<f64>,
        scale: f64,
    ) -> Result<Var> {
        let pv = self.value(pred);
        if target.len() != pv.len() || weights.len() != pv.len() {
            return Err(Error::dim(format!(
                "squared error targets ({}) / weights ({}) do not match prediction {:?}",
                target.len(),
                weights.len(),
                pv.shape()
            )));
        }
        let total: f64 = pv
            .data()
            .iter()
            .zip(&target)
            .zip(&weights)
            .map(|((p, t), w)| w * (p - t) * (p - t))
            .sum();
        let rg = self.requires_grad(pred);
        Ok(self.push(
            Tensor::scalar(scale * total),
            rg,
            Op::WeightedSqErr {
                pred,
                target,
                weights,
                scale,
            },
        ))
    }

    /// `scale · Σ −[l·ln p + (1−l)·ln(1−p)]` with `p` clamped to `[lo, hi]`.
    pub fn binary_cross_entropy(
        &mut self,
        probs: Var,
        labels: Vec<f64>,
        scale: f64,
        lo: f64,
        hi: f64,
    ) -> Result<Var> {
        let pv = self.value(probs);
        if labels.len() != pv.len() {
            return Err(Error::dim(format!(
                "{} labels for probabilities of shape {:?}",
                labels.len(),
                pv.shape()
            )));
        }
        let total: f64 = pv
            .data()
            .iter()
            .zip(&labels)
            .map(|(&p, &l)| {
                let p = p.clamp(lo, hi);
                -(l * p.ln() + (1.0 - l) * (1.0 - p).ln())
            })
            .sum();
        let rg = self.requires_grad(probs);
        Ok(self.push(
            Tensor::scalar(scale * total),
            rg,
            Op::Bce {
                probs,
                labels,
                scale,
                lo,
                hi,
            },
        ))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}
