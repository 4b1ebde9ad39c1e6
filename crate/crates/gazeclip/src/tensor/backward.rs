//! Reverse sweep: gradients accumulate additively into every node that
//! requires them, in reverse creation order (reverse topological order for a
//! define-by-run tape).

use super::{gelu_grad_scalar, matmul_raw, Graph, Op, TensorId};
use crate::error::{Error, Result};

impl Graph {
    fn accumulate(&mut self, id: TensorId, delta: &[f64]) {
        let node = &mut self.nodes[id.0];
        if !node.requires_grad {
            return;
        }
        let grad = node
            .grad
            .get_or_insert_with(|| vec![0.0; node.values.len()]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += d;
        }
    }

    /// Run reverse-mode accumulation from a scalar root. Every node with
    /// `requires_grad` receives a gradient buffer (zero if unreachable).
    pub fn backward(&mut self, root: TensorId) -> Result<()> {
        if self.numel(root) != 1 {
            return Err(Error::Contract(format!(
                "backward: root must be scalar, got shape {:?}",
                self.shape(root)
            )));
        }
        if !self.nodes[root.0].values[0].is_finite() {
            return Err(Error::Numeric(format!(
                "backward: loss is not finite ({})",
                self.nodes[root.0].values[0]
            )));
        }
        for node in self.nodes.iter_mut() {
            if node.requires_grad && node.grad.is_none() {
                node.grad = Some(vec![0.0; node.values.len()]);
            }
        }
        if let Some(g) = self.nodes[root.0].grad.as_mut() {
            g[0] += 1.0;
        }

        for i in (0..self.nodes.len()).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let grad = match self.nodes[i].grad.clone() {
                Some(g) => g,
                None => continue,
            };
            let op = self.nodes[i].op.clone();
            match op {
                Op::Constant | Op::Param(_) => {}

                Op::Add(a, b) => {
                    self.accumulate(a, &grad);
                    self.accumulate(b, &grad);
                }

                Op::AddBias(x, b) => {
                    let k = self.nodes[b.0].values.len();
                    let n = grad.len() / k;
                    let mut db = vec![0.0; k];
                    for row in 0..n {
                        for col in 0..k {
                            db[col] += grad[row * k + col];
                        }
                    }
                    self.accumulate(x, &grad);
                    self.accumulate(b, &db);
                }

                Op::Mul(a, b) => {
                    let da: Vec<f64> = grad
                        .iter()
                        .zip(&self.nodes[b.0].values)
                        .map(|(g, v)| g * v)
                        .collect();
                    let db: Vec<f64> = grad
                        .iter()
                        .zip(&self.nodes[a.0].values)
                        .map(|(g, v)| g * v)
                        .collect();
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }

                Op::MulScalar(x, c) => {
                    let dx: Vec<f64> = grad.iter().map(|g| g * c).collect();
                    self.accumulate(x, &dx);
                }

                Op::ScaleByScalar(x, s) => {
                    let sv = self.nodes[s.0].values[0];
                    let dx: Vec<f64> = grad.iter().map(|g| g * sv).collect();
                    let ds: f64 = grad
                        .iter()
                        .zip(&self.nodes[x.0].values)
                        .map(|(g, v)| g * v)
                        .sum();
                    self.accumulate(x, &dx);
                    self.accumulate(s, &[ds]);
                }

                Op::MatMul(a, b) => {
                    let (p, q) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                    let r = self.nodes[b.0].shape[1];
                    // dA = G * B^T
                    let bv = &self.nodes[b.0].values;
                    let mut bt = vec![0.0; r * q];
                    for x in 0..q {
                        for y in 0..r {
                            bt[y * q + x] = bv[x * r + y];
                        }
                    }
                    let da = matmul_raw(&grad, &bt, p, r, q);
                    // dB = A^T * G
                    let av = &self.nodes[a.0].values;
                    let mut at = vec![0.0; q * p];
                    for x in 0..p {
                        for y in 0..q {
                            at[y * p + x] = av[x * q + y];
                        }
                    }
                    let db = matmul_raw(&at, &grad, q, p, r);
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }

                Op::Transpose(x) => {
                    let (k, n) = (self.nodes[i].shape[0], self.nodes[i].shape[1]);
                    let mut dx = vec![0.0; n * k];
                    for a in 0..k {
                        for b in 0..n {
                            dx[b * k + a] = grad[a * n + b];
                        }
                    }
                    self.accumulate(x, &dx);
                }

                Op::Reshape(x) => {
                    self.accumulate(x, &grad);
                }

                Op::SliceRows(x, r0, _r1) => {
                    let k = self.nodes[x.0].shape[1];
                    let mut dx = vec![0.0; self.nodes[x.0].values.len()];
                    dx[r0 * k..r0 * k + grad.len()].copy_from_slice(&grad);
                    self.accumulate(x, &dx);
                }

                Op::SliceCols(x, c0, c1) => {
                    let (n, k) = (self.nodes[x.0].shape[0], self.nodes[x.0].shape[1]);
                    let w = c1 - c0;
                    let mut dx = vec![0.0; n * k];
                    for row in 0..n {
                        dx[row * k + c0..row * k + c1]
                            .copy_from_slice(&grad[row * w..(row + 1) * w]);
                    }
                    self.accumulate(x, &dx);
                }

                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let len = self.nodes[p.0].values.len();
                        let slice = grad[off..off + len].to_vec();
                        self.accumulate(p, &slice);
                        off += len;
                    }
                }

                Op::ConcatCols(parts) => {
                    let n = self.nodes[i].shape[0];
                    let total = self.nodes[i].shape[1];
                    let mut off = 0;
                    for p in parts {
                        let w = self.nodes[p.0].shape[1];
                        let mut dp = vec![0.0; n * w];
                        for row in 0..n {
                            dp[row * w..(row + 1) * w]
                                .copy_from_slice(&grad[row * total + off..row * total + off + w]);
                        }
                        self.accumulate(p, &dp);
                        off += w;
                    }
                }

                Op::LayerNorm { x, gamma, beta, eps } => {
                    let (n, k) = (self.nodes[x.0].shape[0], self.nodes[x.0].shape[1]);
                    let xv = self.nodes[x.0].values.clone();
                    let gv = self.nodes[gamma.0].values.clone();
                    let mut dx = vec![0.0; n * k];
                    let mut dgamma = vec![0.0; k];
                    let mut dbeta = vec![0.0; k];
                    for row in 0..n {
                        let xs = &xv[row * k..(row + 1) * k];
                        let gs = &grad[row * k..(row + 1) * k];
                        let mean = xs.iter().sum::<f64>() / k as f64;
                        let var =
                            xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k as f64;
                        let inv = 1.0 / (var + eps).sqrt();
                        let xhat: Vec<f64> = xs.iter().map(|v| (v - mean) * inv).collect();
                        let mut dxhat = vec![0.0; k];
                        for col in 0..k {
                            dgamma[col] += gs[col] * xhat[col];
                            dbeta[col] += gs[col];
                            dxhat[col] = gs[col] * gv[col];
                        }
                        let sum_dxhat: f64 = dxhat.iter().sum();
                        let sum_dxhat_xhat: f64 =
                            dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum();
                        let kf = k as f64;
                        for col in 0..k {
                            dx[row * k + col] = inv / kf
                                * (kf * dxhat[col] - sum_dxhat - xhat[col] * sum_dxhat_xhat);
                        }
                    }
                    self.accumulate(x, &dx);
                    self.accumulate(gamma, &dgamma);
                    self.accumulate(beta, &dbeta);
                }

                Op::Gelu(x) => {
                    let dx: Vec<f64> = grad
                        .iter()
                        .zip(&self.nodes[x.0].values)
                        .map(|(g, &v)| g * gelu_grad_scalar(v))
                        .collect();
                    self.accumulate(x, &dx);
                }

                Op::Exp(x) => {
                    let dx: Vec<f64> = grad
                        .iter()
                        .zip(&self.nodes[i].values)
                        .map(|(g, y)| g * y)
                        .collect();
                    self.accumulate(x, &dx);
                }

                Op::SoftmaxRows(x) => {
                    let shape = &self.nodes[i].shape;
                    let (n, k) = match shape.as_slice() {
                        [k] => (1usize, *k),
                        [n, k] => (*n, *k),
                        _ => unreachable!(),
                    };
                    let yv = self.nodes[i].values.clone();
                    let mut dx = vec![0.0; n * k];
                    for row in 0..n {
                        let ys = &yv[row * k..(row + 1) * k];
                        let gs = &grad[row * k..(row + 1) * k];
                        let dot: f64 = ys.iter().zip(gs).map(|(y, g)| y * g).sum();
                        for col in 0..k {
                            dx[row * k + col] = ys[col] * (gs[col] - dot);
                        }
                    }
                    self.accumulate(x, &dx);
                }

                Op::Conv2d { x, w, b, stride, pad } => {
                    let xs = self.nodes[x.0].shape.clone();
                    let ws = self.nodes[w.0].shape.clone();
                    let (ic, h, wd) = (xs[0], xs[1], xs[2]);
                    let (oc, _, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
                    let os = self.nodes[i].shape.clone();
                    let (oh, ow) = (os[1], os[2]);
                    let xv = self.nodes[x.0].values.clone();
                    let wv = self.nodes[w.0].values.clone();
                    let mut dx = vec![0.0; ic * h * wd];
                    let mut dw = vec![0.0; wv.len()];
                    let mut db = vec![0.0; oc];
                    for o in 0..oc {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let go = grad[o * oh * ow + oy * ow + ox];
                                if go == 0.0 {
                                    continue;
                                }
                                db[o] += go;
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
                                            let xi = ci * h * wd + iy as usize * wd + ix as usize;
                                            let wi = o * ic * kh * kw + ci * kh * kw + ky * kw + kx;
                                            dw[wi] += go * xv[xi];
                                            dx[xi] += go * wv[wi];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    self.accumulate(x, &dx);
                    self.accumulate(w, &dw);
                    self.accumulate(b, &db);
                }

                Op::ExtractPatches { x, patch } => {
                    let xs = self.nodes[x.0].shape.clone();
                    let (c, h, w) = (xs[0], xs[1], xs[2]);
                    let gw = w / patch;
                    let flat = c * patch * patch;
                    let mut dx = vec![0.0; c * h * w];
                    let rows = self.nodes[i].shape[0];
                    for row in 0..rows {
                        let (py, px) = (row / gw, row % gw);
                        let mut k = 0;
                        for ci in 0..c {
                            for dy in 0..patch {
                                for dxp in 0..patch {
                                    let iy = py * patch + dy;
                                    let ix = px * patch + dxp;
                                    dx[ci * h * w + iy * w + ix] += grad[row * flat + k];
                                    k += 1;
                                }
                            }
                        }
                    }
                    self.accumulate(x, &dx);
                }

                Op::Embedding { table, ids } => {
                    let s = self.nodes[table.0].shape[1];
                    let mut dt = vec![0.0; self.nodes[table.0].values.len()];
                    for (row, &id) in ids.iter().enumerate() {
                        for col in 0..s {
                            dt[id * s + col] += grad[row * s + col];
                        }
                    }
                    self.accumulate(table, &dt);
                }

                Op::RowScale { x, diag } => {
                    let (t, s) = (self.nodes[x.0].shape[0], self.nodes[x.0].shape[1]);
                    let dv = self.nodes[diag.0].values.clone();
                    let xv = self.nodes[x.0].values.clone();
                    let mut dx = vec![0.0; t * s];
                    let mut dd = vec![0.0; t];
                    for row in 0..t {
                        for col in 0..s {
                            dx[row * s + col] = grad[row * s + col] * dv[row];
                            dd[row] += grad[row * s + col] * xv[row * s + col];
                        }
                    }
                    self.accumulate(x, &dx);
                    self.accumulate(diag, &dd);
                }

                Op::L2NormalizeRows(x) => {
                    let (n, k) = (self.nodes[x.0].shape[0], self.nodes[x.0].shape[1]);
                    let xv = self.nodes[x.0].values.clone();
                    let yv = self.nodes[i].values.clone();
                    let mut dx = vec![0.0; n * k];
                    for row in 0..n {
                        let xs = &xv[row * k..(row + 1) * k];
                        let ys = &yv[row * k..(row + 1) * k];
                        let gs = &grad[row * k..(row + 1) * k];
                        let norm = xs.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-30);
                        let dot: f64 = ys.iter().zip(gs).map(|(y, g)| y * g).sum();
                        for col in 0..k {
                            dx[row * k + col] = (gs[col] - ys[col] * dot) / norm;
                        }
                    }
                    self.accumulate(x, &dx);
                }

                Op::CrossEntropyLogits { logits, targets } => {
                    let (n, k) = (
                        self.nodes[logits.0].shape[0],
                        self.nodes[logits.0].shape[1],
                    );
                    let lv = self.nodes[logits.0].values.clone();
                    let g0 = grad[0];
                    let mut dl = vec![0.0; n * k];
                    for (row, &t) in targets.iter().enumerate() {
                        let slice = &lv[row * k..(row + 1) * k];
                        let max = slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let exps: Vec<f64> = slice.iter().map(|v| (v - max).exp()).collect();
                        let sum: f64 = exps.iter().sum();
                        for col in 0..k {
                            let p = exps[col] / sum;
                            let tgt = if col == t { 1.0 } else { 0.0 };
                            dl[row * k + col] = g0 * (p - tgt) / n as f64;
                        }
                    }
                    self.accumulate(logits, &dl);
                }

                Op::SumAll(x) => {
                    let dx = vec![grad[0]; self.nodes[x.0].values.len()];
                    self.accumulate(x, &dx);
                }

                Op::MeanAll(x) => {
                    let n = self.nodes[x.0].values.len();
                    let dx = vec![grad[0] / n as f64; n];
                    self.accumulate(x, &dx);
                }
            }
        }
        Ok(())
    }
}
