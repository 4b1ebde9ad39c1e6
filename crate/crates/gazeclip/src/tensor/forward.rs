//! Forward op constructors. Each checks its shape contract, computes the
//! output, and records the op for the backward sweep.

use super::{gelu_scalar, matmul_raw, shape2d, Graph, Op, TensorId};
use crate::error::{Error, Result};

impl Graph {
    fn req(&self, ids: &[TensorId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// Elementwise addition of two same-shape tensors.
    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension(format!(
                "add: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        let values: Vec<f64> = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.req(&[a, b]);
        Ok(self.push(values, shape, Op::Add(a, b), rg))
    }

    /// Matrix plus row bias: `[n,k] + [k]` (or `[1,k]`).
    pub fn add_bias(&mut self, x: TensorId, b: TensorId) -> Result<TensorId> {
        let (n, k) = shape2d(self.shape(x)).ok_or_else(|| {
            Error::Dimension(format!("add_bias: x must be 2D, got {:?}", self.shape(x)))
        })?;
        let bk = self.numel(b);
        if bk != k {
            return Err(Error::Dimension(format!(
                "add_bias: bias length {} does not match {} columns",
                bk, k
            )));
        }
        let mut values = self.values(x).to_vec();
        let bias = self.values(b);
        for row in 0..n {
            for col in 0..k {
                values[row * k + col] += bias[col];
            }
        }
        let shape = self.shape(x).to_vec();
        let rg = self.req(&[x, b]);
        Ok(self.push(values, shape, Op::AddBias(x, b), rg))
    }

    /// Elementwise product of two same-shape tensors.
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension(format!(
                "mul: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        let values: Vec<f64> = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.req(&[a, b]);
        Ok(self.push(values, shape, Op::Mul(a, b), rg))
    }

    /// Multiply every element by a compile-time constant.
    pub fn mul_scalar(&mut self, x: TensorId, c: f64) -> Result<TensorId> {
        let values: Vec<f64> = self.values(x).iter().map(|v| v * c).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.req(&[x]);
        Ok(self.push(values, shape, Op::MulScalar(x, c), rg))
    }

    /// Multiply a tensor by a scalar node (e.g. a learnable temperature).
    pub fn scale_by_scalar(&mut self, x: TensorId, s: TensorId) -> Result<TensorId> {
        if self.numel(s) != 1 {
            return Err(Error::Dimension(format!(
                "scale_by_scalar: scale has shape {:?}, expected scalar",
                self.shape(s)
            )));
        }
        let sv = self.values(s)[0];
        let values: Vec<f64> = self.values(x).iter().map(|v| v * sv).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.req(&[x, s]);
        Ok(self.push(values, shape, Op::ScaleByScalar(x, s), rg))
    }

    /// `[p,q] x [q,r] -> [p,r]`.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (p, q) = shape2d(self.shape(a)).ok_or_else(|| {
            Error::Dimension(format!("matmul: lhs must be 2D, got {:?}", self.shape(a)))
        })?;
        let (q2, r) = shape2d(self.shape(b)).ok_or_else(|| {
            Error::Dimension(format!("matmul: rhs must be 2D, got {:?}", self.shape(b)))
        })?;
        if q != q2 {
            return Err(Error::Dimension(format!(
                "matmul: inner extents differ, lhs {:?} vs rhs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let values = matmul_raw(self.values(a), self.values(b), p, q, r);
        let rg = self.req(&[a, b]);
        Ok(self.push(values, vec![p, r], Op::MatMul(a, b), rg))
    }

    /// 2D transpose.
    pub fn transpose(&mut self, x: TensorId) -> Result<TensorId> {
        let (n, k) = shape2d(self.shape(x)).ok_or_else(|| {
            Error::Dimension(format!("transpose: need 2D, got {:?}", self.shape(x)))
        })?;
        let src = self.values(x);
        let mut values = vec![0.0; n * k];
        for i in 0..n {
            for j in 0..k {
                values[j * n + i] = src[i * k + j];
            }
        }
        let rg = self.req(&[x]);
        Ok(self.push(values, vec![k, n], Op::Transpose(x), rg))
    }

    /// Reinterpret the data with a new shape of equal element count.
    pub fn reshape(&mut self, x: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        if shape.iter().product::<usize>() != self.numel(x) {
            return Err(Error::Dimension(format!(
                "reshape: {:?} cannot view {} elements",
                shape,
                self.numel(x)
            )));
        }
        let values = self.values(x).to_vec();
        let rg = self.req(&[x]);
        Ok(self.push(values, shape, Op::Reshape(x), rg))
    }

    /// Rows `[r0, r1)` of a 2D tensor.
    pub fn slice_rows(&mut self, x: TensorId, r0: usize, r1: usize) -> Result<TensorId> {
        let (n, k) = shape2d(self.shape(x)).ok_or_else(|| {
            Error::Dimension(format!("slice_rows: need 2D, got {:?}", self.shape(x)))
        })?;
        if r0 >= r1 || r1 > n {
            return Err(Error::Dimension(format!(
                "slice_rows: range {}..{} outside {} rows",
                r0, r1, n
            )));
        }
        let values = self.values(x)[r0 * k..r1 * k].to_vec();
        let rg = self.req(&[x]);
        Ok(self.push(values, vec![r1 - r0, k], Op::SliceRows(x, r0, r1), rg))
    }

    /// Columns `[c0, c1)` of a 2D tensor.
    pub fn slice_cols(&mut self, x: TensorId, c0: usize, c1: usize) -> Result<TensorId> {
        let (n, k) = shape2d(self.shape(x)).ok_or_else(|| {
            Error::Dimension(format!("slice_cols: need 2D, got {:?}", self.shape(x)))
        })?;
        if c0 >= c1 || c1 > k {
            return Err(Error::Dimension(format!(
                "slice_cols: range {}..{} outside {} cols",
                c0, c1, k
            )));
        }
        let src = self.values(x);
        let w = c1 - c0;
        let mut values = vec![0.0; n * w];
        for row in 0..n {
            values[row * w..(row + 1) * w]
                .copy_from_slice(&src[row * k + c0..row * k + c1]);
        }
        let rg = self.req(&[x]);
        Ok(self.push(values, vec![n, w], Op::SliceCols(x, c0, c1), rg))
    }

    /// Stack 2D tensors with equal column counts.
    pub fn concat_rows(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::Dimension("concat_rows: empty input".into()));
        }
        let (_, k) = shape2d(self.shape(parts[0])).ok_or_else(|| {
            Error::Dimension(format!(
                "concat_rows: need 2D, got {:?}",
                self.shape(parts[0])
            ))
        })?;
        let mut rows = 0;
        let mut values = Vec::new();
        for &p in parts {
            let (n, kp) = shape2d(self.shape(p)).ok_or_else(|| {
                Error::Dimension(format!("concat_rows: need 2D, got {:?}", self.shape(p)))
            })?;
            if kp != k {
                return Err(Error::Dimension(format!(
                    "concat_rows: column mismatch, {} vs {}",
                    kp, k
                )));
            }
            rows += n;
            values.extend_from_slice(self.values(p));
        }
        let rg = self.req(parts);
        Ok(self.push(values, vec![rows, k], Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Concatenate 2D tensors with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::Dimension("concat_cols: empty input".into()));
        }
        let (n, _) = shape2d(self.shape(parts[0])).ok_or_else(|| {
            Error::Dimension(format!(
                "concat_cols: need 2D, got {:?}",
                self.shape(parts[0])
            ))
        })?;
        let mut widths = Vec::with_capacity(parts.len());
        let mut total = 0;
        for &p in parts {
            let (np, kp) = shape2d(self.shape(p)).ok_or_else(|| {
                Error::Dimension(format!("concat_cols: need 2D, got {:?}", self.shape(p)))
            })?;
            if np != n {
                return Err(Error::Dimension(format!(
                    "concat_cols: row mismatch, {} vs {}",
                    np, n
                )));
            }
            widths.push(kp);
            total += kp;
        }
        let mut values = vec![0.0; n * total];
        for row in 0..n {
            let mut off = 0;
            for (idx, &p) in parts.iter().enumerate() {
                let w = widths[idx];
                let src = &self.nodes[p.0].values[row * w..(row + 1) * w];
                values[row * total + off..row * total + off + w].copy_from_slice(src);
                off += w;
            }
        }
        let rg = self.req(parts);
        Ok(self.push(values, vec![n, total], Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Row-wise layer normalization with affine parameters.
    ///
    /// Zero-variance rows are stabilized by `eps` inside the square root, so
    /// a constant row maps to zero before the affine transform.
    pub fn layer_norm(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        eps: f64,
    ) -> Result<TensorId> {
        let (n, k) = shape2d(self.shape(x)).ok_or_else(|| {
            Error::Dimension(format!("layer_norm: need 2D, got {:?}", self.shape(x)))
        })?;
        if self.numel(gamma) != k || self.numel(beta) != k {
            return Err(Error::Dimension(format!(
                "layer_norm: gamma/beta lengths {}/{} do not match {} columns",
                self.numel(gamma),
                self.numel(beta),
                k
            )));
        }
        let src = self.values(x);
        let g = self.values(gamma);
        let b = self.values(beta);
        let mut values = vec![0.0; n * k];
        for row in 0..n {
            let slice = &src[row * k..(row + 1) * k];
            let mean = slice.iter().sum::<f64>() / k as f64;
            let var = slice.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for col in 0..k {
                values[row * k + col] = (slice[col] - mean) * inv * g[col] + b[col];
            }
        }
        let rg = self.req(&[x, gamma, beta]);
        Ok(self.push(
            values,
            vec![n, k],
            Op::LayerNorm { x, gamma, beta, eps },
            rg,
        ))
    }

    /// GELU activation (tanh approximation).
    pub fn gelu(&mut self, x: TensorId) -> Result<TensorId> {
        let values: Vec<f64> = self.values(x).iter().map(|&v| gelu_scalar(v)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.req(&[x]);
        Ok(self.push(values, shape, Op::Gelu(x), rg))
    }

    /// Elementwise exponential.
    pub fn exp(&mut self, x: TensorId) -> Result<TensorId> {
        let values: Vec<f64> = self.values(x).iter().map(|v| v.exp()).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.req(&[x]);
        Ok(self.push(values, shape, Op::Exp(x), rg))
    }

    /// Row-wise softmax of a 2D tensor (a 1D tensor is treated as one row).
    /// Max-subtraction keeps the exponentials in range.
    pub fn softmax_rows(&mut self, x: TensorId) -> Result<TensorId> {
        let shape = self.shape(x).to_vec();
        let (n, k) = match shape.as_slice() {
            [k] => (1usize, *k),
            [n, k] => (*n, *k),
            _ => {
                return Err(Error::Dimension(format!(
                    "softmax: need 1D or 2D, got {:?}",
                    shape
                )))
            }
        };
        if k == 0 {
            return Err(Error::Data("softmax: empty input".into()));
        }
        let src = self.values(x);
        let mut values = vec![0.0; n * k];
        let mut worst = self.softmax_row_dev;
        for row in 0..n {
            let slice = &src[row * k..(row + 1) * k];
            let max = slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for col in 0..k {
                let e = (slice[col] - max).exp();
                values[row * k + col] = e;
                sum += e;
            }
            let mut row_sum = 0.0;
            for col in 0..k {
                values[row * k + col] /= sum;
                row_sum += values[row * k + col];
            }
            worst = worst.max((row_sum - 1.0).abs());
        }
        self.softmax_row_dev = worst;
        self.softmax_elements += n * k;
        let rg = self.req(&[x]);
        Ok(self.push(values, shape, Op::SoftmaxRows(x), rg))
    }

    /// 2D convolution over a single `[c,h,w]` image with weight
    /// `[oc,ic,kh,kw]`, bias `[oc]`, stride and zero padding.
    pub fn conv2d(
        &mut self,
        x: TensorId,
        w: TensorId,
        b: TensorId,
        stride: usize,
        pad: usize,
    ) -> Result<TensorId> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let (ic, h, wd) = match xs.as_slice() {
            [c, h, w] => (*c, *h, *w),
            _ => {
                return Err(Error::Dimension(format!(
                    "conv2d: input must be [c,h,w], got {:?}",
                    xs
                )))
            }
        };
        let (oc, wic, kh, kw) = match ws.as_slice() {
            [oc, ic, kh, kw] => (*oc, *ic, *kh, *kw),
            _ => {
                return Err(Error::Dimension(format!(
                    "conv2d: weight must be [oc,ic,kh,kw], got {:?}",
                    ws
                )))
            }
        };
        if wic != ic {
            return Err(Error::Dimension(format!(
                "conv2d: input channels {} do not match weight channels {}",
                ic, wic
            )));
        }
        if self.numel(b) != oc {
            return Err(Error::Dimension(format!(
                "conv2d: bias length {} does not match {} output channels",
                self.numel(b),
                oc
            )));
        }
        if stride == 0 || h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(Error::Dimension(format!(
                "conv2d: kernel {}x{} does not fit padded input {}x{}",
                kh,
                kw,
                h + 2 * pad,
                wd + 2 * pad
            )));
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (wd + 2 * pad - kw) / stride + 1;
        let xv = self.values(x);
        let wv = self.values(w);
        let bv = self.values(b);
        let mut values = vec![0.0; oc * oh * ow];
        for o in 0..oc {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bv[o];
                    for ci in 0..ic {
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if ix < 0 || ix >= wd as isize {
                                    continue;
                                }
                                acc += xv[ci * h * wd + iy as usize * wd + ix as usize]
                                    * wv[o * ic * kh * kw + ci * kh * kw + ky * kw + kx];
                            }
                        }
                    }
                    values[o * oh * ow + oy * ow + ox] = acc;
                }
            }
        }
        let rg = self.req(&[x, w, b]);
        Ok(self.push(
            values,
            vec![oc, oh, ow],
            Op::Conv2d { x, w, b, stride, pad },
            rg,
        ))
    }

    /// Split a `[c,H,W]` image into non-overlapping `patch x patch` squares,
    /// flattened channel-major: output `[m, c*patch*patch]`.
    pub fn extract_patches(&mut self, x: TensorId, patch: usize) -> Result<TensorId> {
        let xs = self.shape(x).to_vec();
        let (c, h, w) = match xs.as_slice() {
            [c, h, w] => (*c, *h, *w),
            _ => {
                return Err(Error::Dimension(format!(
                    "extract_patches: input must be [c,h,w], got {:?}",
                    xs
                )))
            }
        };
        if patch == 0 || h % patch != 0 || w % patch != 0 {
            return Err(Error::Config(format!(
                "extract_patches: {}x{} not divisible by patch {}",
                h, w, patch
            )));
        }
        let gh = h / patch;
        let gw = w / patch;
        let m = gh * gw;
        let flat = c * patch * patch;
        let src = self.values(x);
        let mut values = vec![0.0; m * flat];
        for py in 0..gh {
            for px in 0..gw {
                let row = py * gw + px;
                let mut k = 0;
                for ci in 0..c {
                    for dy in 0..patch {
                        for dx in 0..patch {
                            let iy = py * patch + dy;
                            let ix = px * patch + dx;
                            values[row * flat + k] = src[ci * h * w + iy * w + ix];
                            k += 1;
                        }
                    }
                }
            }
        }
        let rg = self.req(&[x]);
        Ok(self.push(values, vec![m, flat], Op::ExtractPatches { x, patch }, rg))
    }

    /// Look up rows of an embedding table: `table[V,s]`, ids of length t,
    /// output `[t,s]`.
    pub fn embedding(&mut self, table: TensorId, ids: &[usize]) -> Result<TensorId> {
        let (v, s) = shape2d(self.shape(table)).ok_or_else(|| {
            Error::Dimension(format!(
                "embedding: table must be 2D, got {:?}",
                self.shape(table)
            ))
        })?;
        for &id in ids {
            if id >= v {
                return Err(Error::Data(format!(
                    "embedding: id {} outside vocabulary of {}",
                    id, v
                )));
            }
        }
        let src = self.values(table);
        let mut values = Vec::with_capacity(ids.len() * s);
        for &id in ids {
            values.extend_from_slice(&src[id * s..(id + 1) * s]);
        }
        let rg = self.req(&[table]);
        Ok(self.push(
            values,
            vec![ids.len(), s],
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Scale row i of `[t,s]` by `diag[i]` (diagonal left-multiplication).
    pub fn row_scale(&mut self, x: TensorId, diag: TensorId) -> Result<TensorId> {
        let (t, s) = shape2d(self.shape(x)).ok_or_else(|| {
            Error::Dimension(format!("row_scale: need 2D, got {:?}", self.shape(x)))
        })?;
        if self.numel(diag) != t {
            return Err(Error::Dimension(format!(
                "row_scale: diagonal length {} does not match {} rows",
                self.numel(diag),
                t
            )));
        }
        let src = self.values(x);
        let d = self.values(diag);
        let mut values = vec![0.0; t * s];
        for row in 0..t {
            for col in 0..s {
                values[row * s + col] = src[row * s + col] * d[row];
            }
        }
        let rg = self.req(&[x, diag]);
        Ok(self.push(values, vec![t, s], Op::RowScale { x, diag }, rg))
    }

    /// Normalize each row to unit L2 norm.
    pub fn l2_normalize_rows(&mut self, x: TensorId) -> Result<TensorId> {
        let (n, k) = shape2d(self.shape(x)).ok_or_else(|| {
            Error::Dimension(format!(
                "l2_normalize_rows: need 2D, got {:?}",
                self.shape(x)
            ))
        })?;
        let src = self.values(x);
        let mut values = vec![0.0; n * k];
        for row in 0..n {
            let slice = &src[row * k..(row + 1) * k];
            let norm = slice.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-30);
            for col in 0..k {
                values[row * k + col] = slice[col] / norm;
            }
        }
        let rg = self.req(&[x]);
        Ok(self.push(values, vec![n, k], Op::L2NormalizeRows(x), rg))
    }

    /// Mean over rows of the cross entropy between `softmax(logits)` and the
    /// target class indices, computed from logits via log-sum-exp.
    pub fn cross_entropy_logits(&mut self, logits: TensorId, targets: &[usize]) -> Result<TensorId> {
        let (n, k) = shape2d(self.shape(logits)).ok_or_else(|| {
            Error::Dimension(format!(
                "cross_entropy: logits must be 2D, got {:?}",
                self.shape(logits)
            ))
        })?;
        if targets.len() != n {
            return Err(Error::Dimension(format!(
                "cross_entropy: {} targets for {} rows",
                targets.len(),
                n
            )));
        }
        for &t in targets {
            if t >= k {
                return Err(Error::Data(format!(
                    "cross_entropy: target {} outside {} classes",
                    t, k
                )));
            }
        }
        let src = self.values(logits);
        let mut total = 0.0;
        for (row, &t) in targets.iter().enumerate() {
            let slice = &src[row * k..(row + 1) * k];
            let max = slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + slice.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - slice[t];
        }
        let rg = self.req(&[logits]);
        Ok(self.push(
            vec![total / n as f64],
            vec![1],
            Op::CrossEntropyLogits {
                logits,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum_all(&mut self, x: TensorId) -> Result<TensorId> {
        let total: f64 = self.values(x).iter().sum();
        let rg = self.req(&[x]);
        Ok(self.push(vec![total], vec![1], Op::SumAll(x), rg))
    }

    /// Mean of all elements, as a scalar node.
    pub fn mean_all(&mut self, x: TensorId) -> Result<TensorId> {
        let n = self.numel(x);
        if n == 0 {
            return Err(Error::Data("mean_all: empty input".into()));
        }
        let total: f64 = self.values(x).iter().sum();
        let rg = self.req(&[x]);
        Ok(self.push(vec![total / n as f64], vec![1], Op::MeanAll(x), rg))
    }
}
