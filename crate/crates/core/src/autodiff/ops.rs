use super::kernel::gemm;
use super::tape::{Op, Var};
use super::{Tensor, TensorError};

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation.
pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub(crate) fn gelu_grad_scalar(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

/// (outer, len, inner) split of `shape` around `axis`.
fn axis_split(shape: &[usize], axis: usize) -> Result<(usize, usize, usize), TensorError> {
    if axis >= shape.len() {
        return Err(TensorError::Axis {
            axis,
            shape: shape.to_vec(),
        });
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut out: Vec<usize> = shape
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != axis)
        .map(|(_, &d)| d)
        .collect();
    if out.is_empty() {
        out.push(1);
    }
    out
}

impl<'t> Var<'t> {
    fn same_tape(&self, other: &Var<'_>) -> Result<(), TensorError> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(TensorError::ForeignVar)
        }
    }

    fn unary(&self, value: Tensor, op: Op) -> Var<'t> {
        let rg = self.requires_grad();
        self.tape.push(value, op, rg)
    }

    fn binary(&self, other: &Var<'t>, value: Tensor, op: Op) -> Var<'t> {
        let rg = self.requires_grad() || other.requires_grad();
        self.tape.push(value, op, rg)
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        let v = self.value();
        Tensor::from_parts(v.shape().to_vec(), v.data().iter().map(|&x| f(x)).collect())
    }

    fn zip_same_shape(
        &self,
        other: &Var<'t>,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, TensorError> {
        self.same_tape(other)?;
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(mismatch(op, a.shape(), b.shape()));
        }
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(Tensor::from_parts(a.shape().to_vec(), data))
    }

    /// Matrix product of `m×k` and `k×n` operands.
    pub fn matmul(&self, other: &Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(other)?;
        let (a, b) = (self.value(), other.value());
        let (sa, sb) = (a.shape(), b.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(mismatch("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, a.data(), false, b.data(), false, &mut out, false);
        drop((a, b));
        let op = Op::MatMul {
            a: self.id,
            b: other.id,
            m,
            k,
            n,
        };
        Ok(self.binary(other, Tensor::from_parts(vec![m, n], out), op))
    }

    /// Batched product over matching leading axes: `[..., m, k] · [..., k, n]`.
    /// With `transpose_rhs` the right operand is read as `[..., n, k]`.
    pub fn batch_matmul(&self, other: &Var<'t>, transpose_rhs: bool) -> Result<Var<'t>, TensorError> {
        self.same_tape(other)?;
        let (a, b) = (self.value(), other.value());
        let (sa, sb) = (a.shape(), b.shape());
        let r = sa.len();
        if r < 2 || sb.len() != r || sa[..r - 2] != sb[..r - 2] {
            return Err(mismatch("batch_matmul", sa, sb));
        }
        let (m, k) = (sa[r - 2], sa[r - 1]);
        let (kb, n) = if transpose_rhs {
            (sb[r - 1], sb[r - 2])
        } else {
            (sb[r - 2], sb[r - 1])
        };
        if k != kb {
            return Err(mismatch("batch_matmul", sa, sb));
        }
        let batch: usize = sa[..r - 2].iter().product();
        let mut out = vec![0.0; batch * m * n];
        for i in 0..batch {
            gemm(
                m,
                k,
                n,
                &a.data()[i * m * k..(i + 1) * m * k],
                false,
                &b.data()[i * k * n..(i + 1) * k * n],
                transpose_rhs,
                &mut out[i * m * n..(i + 1) * m * n],
                false,
            );
        }
        let mut shape = sa[..r - 2].to_vec();
        shape.extend([m, n]);
        drop((a, b));
        let op = Op::BatchMatMul {
            a: self.id,
            b: other.id,
            batch,
            m,
            k,
            n,
            b_t: transpose_rhs,
        };
        Ok(self.binary(other, Tensor::from_parts(shape, out), op))
    }

    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>, TensorError> {
        let value = self.zip_same_shape(other, "add", |x, y| x + y)?;
        Ok(self.binary(
            other,
            value,
            Op::Add {
                a: self.id,
                b: other.id,
            },
        ))
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>, TensorError> {
        let value = self.zip_same_shape(other, "sub", |x, y| x - y)?;
        Ok(self.binary(
            other,
            value,
            Op::Sub {
                a: self.id,
                b: other.id,
            },
        ))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Var<'t>) -> Result<Var<'t>, TensorError> {
        let value = self.zip_same_shape(other, "mul", |x, y| x * y)?;
        Ok(self.binary(
            other,
            value,
            Op::Mul {
                a: self.id,
                b: other.id,
            },
        ))
    }

    /// Adds a vector along the last axis: `x[..., d] + b[d]`.
    pub fn add_bias(&self, bias: &Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(bias)?;
        let (x, b) = (self.value(), bias.value());
        let width = *x.shape().last().unwrap();
        if b.numel() != width || b.ndim() != 1 {
            return Err(mismatch("add_bias", x.shape(), b.shape()));
        }
        let mut data = x.data().to_vec();
        for row in data.chunks_exact_mut(width) {
            row.iter_mut().zip(b.data()).for_each(|(v, b)| *v += b);
        }
        let value = Tensor::from_parts(x.shape().to_vec(), data);
        drop((x, b));
        Ok(self.binary(bias, value, Op::AddBias { x: self.id, b: bias.id }))
    }

    pub fn scale(&self, c: f64) -> Var<'t> {
        self.unary(self.map(|x| c * x), Op::Scale { x: self.id, c })
    }

    /// Elementwise product with a fixed, non-trainable mask.
    pub fn mul_const(&self, mask: Vec<f64>) -> Result<Var<'t>, TensorError> {
        let x = self.value();
        if mask.len() != x.numel() {
            return Err(mismatch("mul_const", x.shape(), &[mask.len()]));
        }
        let data = x.data().iter().zip(&mask).map(|(a, b)| a * b).collect();
        let value = Tensor::from_parts(x.shape().to_vec(), data);
        drop(x);
        Ok(self.unary(value, Op::MulConst { x: self.id, mask }))
    }

    pub fn gelu(&self) -> Var<'t> {
        self.unary(self.map(gelu_scalar), Op::Gelu { x: self.id })
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(self.map(|x| 1.0 / (1.0 + (-x).exp())), Op::Sigmoid { x: self.id })
    }

    /// Softmax over the last axis, computed with max-subtraction.
    pub fn softmax(&self) -> Var<'t> {
        let x = self.value();
        let width = *x.shape().last().unwrap();
        let mut data = x.data().to_vec();
        for row in data.chunks_exact_mut(width) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            row.iter_mut().for_each(|v| *v /= sum);
        }
        let value = Tensor::from_parts(x.shape().to_vec(), data);
        drop(x);
        self.unary(value, Op::Softmax { x: self.id })
    }

    /// Normalizes each slice along the last axis to zero mean and unit
    /// variance, then applies `gain` and `bias`.
    pub fn layer_norm(&self, gain: &Var<'t>, bias: &Var<'t>, eps: f64) -> Result<Var<'t>, TensorError> {
        self.same_tape(gain)?;
        self.same_tape(bias)?;
        let (x, gv, bv) = (self.value(), gain.value(), bias.value());
        let width = *x.shape().last().unwrap();
        if gv.numel() != width || gv.ndim() != 1 {
            return Err(mismatch("layer_norm", x.shape(), gv.shape()));
        }
        if bv.numel() != width || bv.ndim() != 1 {
            return Err(mismatch("layer_norm", x.shape(), bv.shape()));
        }
        let rows = x.numel() / width;
        let mut xhat = vec![0.0; x.numel()];
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = vec![0.0; x.numel()];
        for r in 0..rows {
            let row = &x.data()[r * width..(r + 1) * width];
            let mean = row.iter().sum::<f64>() / width as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std.push(inv);
            for i in 0..width {
                let h = (row[i] - mean) * inv;
                xhat[r * width + i] = h;
                out[r * width + i] = gv.data()[i] * h + bv.data()[i];
            }
        }
        let value = Tensor::from_parts(x.shape().to_vec(), out);
        drop((x, gv, bv));
        let rg = self.requires_grad() || gain.requires_grad() || bias.requires_grad();
        let op = Op::LayerNorm {
            x: self.id,
            gain: gain.id,
            bias: bias.id,
            xhat,
            inv_std,
        };
        Ok(self.tape.push(value, op, rg))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t>, TensorError> {
        let value = self.to_tensor().reshape(shape)?;
        Ok(self.unary(value, Op::Reshape { x: self.id }))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Var<'t>, TensorError> {
        let x = self.value();
        let shape = x.shape();
        let rank = shape.len();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(mismatch("permute", shape, perm));
        }
        let mut in_strides = vec![1usize; rank];
        for i in (0..rank.saturating_sub(1)).rev() {
            in_strides[i] = in_strides[i + 1] * shape[i + 1];
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let n = x.numel();
        let mut src = Vec::with_capacity(n);
        let mut counter = vec![0usize; rank];
        let mut offset = 0usize;
        for _ in 0..n {
            src.push(offset);
            for ax in (0..rank).rev() {
                counter[ax] += 1;
                offset += strides[ax];
                if counter[ax] < out_shape[ax] {
                    break;
                }
                offset -= strides[ax] * out_shape[ax];
                counter[ax] = 0;
            }
        }
        let data = src.iter().map(|&s| x.data()[s]).collect();
        let value = Tensor::from_parts(out_shape, data);
        drop(x);
        Ok(self.unary(value, Op::Permute { x: self.id, src }))
    }

    /// Mean over `axis`, removing it.
    pub fn mean_axis(&self, axis: usize) -> Result<Var<'t>, TensorError> {
        let x = self.value();
        let (outer, len, inner) = axis_split(x.shape(), axis)?;
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let base = (o * len + l) * inner;
                for i in 0..inner {
                    out[o * inner + i] += x.data()[base + i];
                }
            }
        }
        out.iter_mut().for_each(|v| *v /= len as f64);
        let value = Tensor::from_parts(reduced_shape(x.shape(), axis), out);
        drop(x);
        Ok(self.unary(
            value,
            Op::MeanAxis {
                x: self.id,
                outer,
                len,
                inner,
            },
        ))
    }

    /// Max over `axis`, removing it. Ties route the gradient to the first maximum.
    pub fn max_axis(&self, axis: usize) -> Result<Var<'t>, TensorError> {
        let x = self.value();
        let (outer, len, inner) = axis_split(x.shape(), axis)?;
        let mut out = vec![f64::NEG_INFINITY; outer * inner];
        let mut argmax = vec![0usize; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let base = (o * len + l) * inner;
                for i in 0..inner {
                    let v = x.data()[base + i];
                    if v > out[o * inner + i] {
                        out[o * inner + i] = v;
                        argmax[o * inner + i] = base + i;
                    }
                }
            }
        }
        let value = Tensor::from_parts(reduced_shape(x.shape(), axis), out);
        drop(x);
        Ok(self.unary(value, Op::MaxAxis { x: self.id, argmax }))
    }

    /// Slice at `index` along `axis`, removing the axis.
    pub fn select_axis(&self, axis: usize, index: usize) -> Result<Var<'t>, TensorError> {
        let x = self.value();
        let (outer, len, inner) = axis_split(x.shape(), axis)?;
        if index >= len {
            return Err(TensorError::IndexOutOfRange { index, len });
        }
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let base = (o * len + index) * inner;
            out.extend_from_slice(&x.data()[base..base + inner]);
        }
        let value = Tensor::from_parts(reduced_shape(x.shape(), axis), out);
        drop(x);
        Ok(self.unary(
            value,
            Op::SelectAxis {
                x: self.id,
                outer,
                len,
                inner,
                index,
            },
        ))
    }

    /// Concatenates two rank-2 tensors along their columns.
    pub fn concat_cols(&self, other: &Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(other)?;
        let (a, b) = (self.value(), other.value());
        let (sa, sb) = (a.shape(), b.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(mismatch("concat_cols", sa, sb));
        }
        let (rows, da, db) = (sa[0], sa[1], sb[1]);
        let mut out = Vec::with_capacity(rows * (da + db));
        for r in 0..rows {
            out.extend_from_slice(&a.data()[r * da..(r + 1) * da]);
            out.extend_from_slice(&b.data()[r * db..(r + 1) * db]);
        }
        let value = Tensor::from_parts(vec![rows, da + db], out);
        drop((a, b));
        let op = Op::Concat {
            a: self.id,
            b: other.id,
            rows,
            da,
            db,
        };
        Ok(self.binary(other, value, op))
    }

    /// Selects rows of a rank-2 tensor; indices may repeat.
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Var<'t>, TensorError> {
        let x = self.value();
        if x.ndim() != 2 {
            return Err(TensorError::Rank {
                op: "gather_rows",
                expected: 2,
                shape: x.shape().to_vec(),
            });
        }
        let (len, width) = (x.shape()[0], x.shape()[1]);
        if idx.is_empty() {
            return Err(TensorError::Empty("gather_rows"));
        }
        let mut out = Vec::with_capacity(idx.len() * width);
        for &i in idx {
            if i >= len {
                return Err(TensorError::IndexOutOfRange { index: i, len });
            }
            out.extend_from_slice(&x.data()[i * width..(i + 1) * width]);
        }
        let value = Tensor::from_parts(vec![idx.len(), width], out);
        drop(x);
        let op = Op::GatherRows {
            x: self.id,
            idx: idx.to_vec(),
            width,
        };
        Ok(self.unary(value, op))
    }

    pub fn sum(&self) -> Var<'t> {
        let s: f64 = self.value().data().iter().sum();
        self.unary(Tensor::scalar(s), Op::Sum { x: self.id })
    }

    /// Mean over the leading (batch) axis of the squared Euclidean distance
    /// between corresponding slices of `self` and `target`.
    pub fn l2_loss(&self, target: &Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(target)?;
        let (y, t) = (self.value(), target.value());
        if y.shape() != t.shape() {
            return Err(mismatch("l2_loss", y.shape(), t.shape()));
        }
        let batch = y.shape()[0];
        let sq: f64 = y.data().iter().zip(t.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        drop((y, t));
        let op = Op::L2Loss {
            y: self.id,
            t: target.id,
            batch,
        };
        Ok(self.binary(target, Tensor::scalar(sq / batch as f64), op))
    }

    /// Mean negative log-likelihood of `labels` under softmax of `self[B×C]`.
    pub fn cross_entropy(&self, labels: &[usize]) -> Result<Var<'t>, TensorError> {
        let x = self.value();
        if x.ndim() != 2 {
            return Err(TensorError::Rank {
                op: "cross_entropy",
                expected: 2,
                shape: x.shape().to_vec(),
            });
        }
        let (rows, classes) = (x.shape()[0], x.shape()[1]);
        if labels.len() != rows {
            return Err(mismatch("cross_entropy", x.shape(), &[labels.len()]));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(TensorError::LabelOutOfRange { label, classes });
        }
        let mut probs = vec![0.0; rows * classes];
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = &x.data()[r * classes..(r + 1) * classes];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_z = max + sum.ln();
            total += log_z - row[label];
            for (p, v) in probs[r * classes..(r + 1) * classes].iter_mut().zip(row) {
                *p = (v - max).exp() / sum;
            }
        }
        drop(x);
        let op = Op::CrossEntropy {
            logits: self.id,
            labels: labels.to_vec(),
            probs,
        };
        Ok(self.unary(Tensor::scalar(total / rows as f64), op))
    }
}
