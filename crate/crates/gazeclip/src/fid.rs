//! Frechet distance between Gaussian fits of two 2-D sample sets:
//! `||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2})`, with the 2x2 matrix
//! square-root trace computed in closed form from trace/determinant
//! identities: `Tr(sqrt(M)) = sqrt(Tr(M) + 2 sqrt(det M))`.

use crate::error::{Error, Result};

/// Mean and symmetric PSD covariance of a 2-D sample set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSummary {
    pub mean: [f64; 2],
    /// Row-major symmetric 2x2 covariance.
    pub cov: [[f64; 2]; 2],
}

impl GaussianSummary {
    pub fn new(mean: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Self> {
        if (cov[0][1] - cov[1][0]).abs() > 1e-9 {
            return Err(Error::Numeric(format!(
                "covariance not symmetric: {} vs {}",
                cov[0][1], cov[1][0]
            )));
        }
        let (lo, _) = sym_eigenvalues(&cov);
        if lo < -1e-12 {
            return Err(Error::Numeric(format!(
                "covariance has negative eigenvalue {lo}"
            )));
        }
        Ok(GaussianSummary { mean, cov })
    }

    /// Fit with the unbiased covariance estimator. Needs at least 2 samples.
    pub fn fit(samples: &[[f64; 2]]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::Data(format!(
                "need at least 2 samples to fit a Gaussian, got {n}"
            )));
        }
        let nf = n as f64;
        let mut mean = [0.0, 0.0];
        for s in samples {
            mean[0] += s[0];
            mean[1] += s[1];
        }
        mean[0] /= nf;
        mean[1] /= nf;
        let mut cov = [[0.0; 2]; 2];
        for s in samples {
            let dx = s[0] - mean[0];
            let dy = s[1] - mean[1];
            cov[0][0] += dx * dx;
            cov[0][1] += dx * dy;
            cov[1][1] += dy * dy;
        }
        let denom = nf - 1.0;
        cov[0][0] /= denom;
        cov[0][1] /= denom;
        cov[1][1] /= denom;
        cov[1][0] = cov[0][1];
        GaussianSummary::new(mean, cov)
    }
}

fn sym_eigenvalues(m: &[[f64; 2]; 2]) -> (f64, f64) {
    let half_trace = (m[0][0] + m[1][1]) / 2.0;
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (half_trace * half_trace - det).max(0.0).sqrt();
    (half_trace - disc, half_trace + disc)
}

fn matmul2(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn stabilize(summary: &GaussianSummary, label: &str) -> GaussianSummary {
    let (lo, _) = sym_eigenvalues(&summary.cov);
    let det = summary.cov[0][0] * summary.cov[1][1] - summary.cov[0][1] * summary.cov[1][0];
    if lo <= 0.0 || det <= 0.0 {
        log::warn!("degenerate covariance in {label}; adding 1e-10 * I");
        let mut cov = summary.cov;
        cov[0][0] += 1e-10;
        cov[1][1] += 1e-10;
        return GaussianSummary { mean: summary.mean, cov };
    }
    *summary
}

/// Frechet distance between two fitted Gaussians.
pub fn frechet(a: &GaussianSummary, b: &GaussianSummary) -> f64 {
    let a = stabilize(a, "lhs");
    let b = stabilize(b, "rhs");
    let dx = a.mean[0] - b.mean[0];
    let dy = a.mean[1] - b.mean[1];
    let mean_term = dx * dx + dy * dy;
    let product = matmul2(&a.cov, &b.cov);
    let trace_product = product[0][0] + product[1][1];
    let det_product =
        product[0][0] * product[1][1] - product[0][1] * product[1][0];
    let sqrt_trace = (trace_product + 2.0 * det_product.max(0.0).sqrt())
        .max(0.0)
        .sqrt();
    let trace_term =
        a.cov[0][0] + a.cov[1][1] + b.cov[0][0] + b.cov[1][1] - 2.0 * sqrt_trace;
    (mean_term + trace_term).max(0.0)
}

/// Fit both sides and return their Frechet distance.
pub fn fid_2d(samples_a: &[[f64; 2]], samples_b: &[[f64; 2]]) -> Result<f64> {
    let a = GaussianSummary::fit(samples_a)?;
    let b = GaussianSummary::fit(samples_b)?;
    Ok(frechet(&a, &b))
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Independent eigendecomposition route: sqrt(S1) explicitly, then
    //! Tr(sqrt(S1 S2)) = Tr(sqrt(sqrt(S1) S2 sqrt(S1))) via the symmetric
    //! eigenvalues of the inner product.

    pub fn sym_eig(m: &[[f64; 2]; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        let (lo, hi) = super::sym_eigenvalues(m);
        let b = m[0][1];
        // (A - hi I) v = 0: v = (b, hi - a) unless the matrix is diagonal.
        let v_hi = if b.abs() > 1e-300 {
            let n = (b * b + (hi - m[0][0]) * (hi - m[0][0])).sqrt();
            [b / n, (hi - m[0][0]) / n]
        } else if m[0][0] >= m[1][1] {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        };
        let v_lo = [-v_hi[1], v_hi[0]];
        ([lo, hi], [v_lo, v_hi])
    }

    pub fn sym_sqrt(m: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
        let (vals, vecs) = sym_eig(m);
        let mut out = [[0.0; 2]; 2];
        for (lambda, v) in vals.iter().zip(vecs.iter()) {
            let s = lambda.max(0.0).sqrt();
            for i in 0..2 {
                for j in 0..2 {
                    out[i][j] += s * v[i] * v[j];
                }
            }
        }
        out
    }

    pub fn frechet_eigen(a: &super::GaussianSummary, b: &super::GaussianSummary) -> f64 {
        let dx = a.mean[0] - b.mean[0];
        let dy = a.mean[1] - b.mean[1];
        let root_a = sym_sqrt(&a.cov);
        let inner = super::matmul2(&super::matmul2(&root_a, &b.cov), &root_a);
        let (vals, _) = sym_eig(&inner);
        let sqrt_trace = vals[0].max(0.0).sqrt() + vals[1].max(0.0).sqrt();
        dx * dx
            + dy * dy
            + a.cov[0][0] + a.cov[1][1] + b.cov[0][0] + b.cov[1][1]
            - 2.0 * sqrt_trace
    }
}
