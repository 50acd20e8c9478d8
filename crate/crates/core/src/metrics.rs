//! Error measures shared by the tests, the verify suites and the benchmark.

use crate::attention::augment;
use crate::encoding::{BiasMatrix, EtaPair};
use crate::error::{Error, Result};
use crate::tensor::{dot_f64, Matrix, Scalar};

/// Max-norm relative error `max|a - b| / max|b|`.
///
/// Zero when both are exactly zero; infinite when only `b` is zero.
pub fn max_rel_error<T: Scalar>(actual: &Matrix<T>, expected: &Matrix<T>) -> f64 {
    assert_eq!(
        actual.shape(),
        expected.shape(),
        "max_rel_error: shape mismatch"
    );
    let diff = actual
        .as_slice()
        .iter()
        .zip(expected.as_slice())
        .fold(0.0f64, |m, (a, b)| m.max((a.to_f64() - b.to_f64()).abs()));
    if diff == 0.0 {
        return 0.0;
    }
    diff / expected.max_abs()
}

/// Symmetric scalar relative difference `|a - b| / max(|a|, |b|)`.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if a == b {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Worst entry of the augmented-product identity
/// `(concat(Q, eta_q) · concat(K, eta_k)ᵀ - Q·Kᵀ) / sqrt(d) = bias`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityError {
    /// Largest `|lhs - bias|` relative to the entry's floating-point scale
    /// (see [`identity_error`]).
    pub rel: f64,
    /// Largest `|lhs - bias|`.
    pub abs: f64,
    /// Largest `|lhs - bias| / |bias|` over entries with a nonzero bias.
    pub pointwise: f64,
}

/// Measures the product identity entry by entry.
///
/// The left side is the difference of two dot products that share their
/// first `d` terms, so its rounding error scales with the magnitude of the
/// terms being summed rather than with the (possibly tiny) bias. Each
/// entry's error is therefore divided by
/// `max(|bias|, sum_j |q̂_j k̂_j| / sqrt(d))`, the textbook forward-error
/// scale of a dot product. `pointwise` reports the plain ratio as well.
pub fn identity_error<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    eta: &EtaPair<T>,
    bias: &BiasMatrix<T>,
) -> Result<IdentityError> {
    let sqrt_d = (q.cols() as f64).sqrt();
    let (q_hat, k_hat) = augment(q, k, eta)?;
    let full = q_hat.matmul_nt(&k_hat)?;
    let plain = q.matmul_nt(k)?;
    if bias.values.shape() != full.shape() {
        return Err(Error::shape(
            "identity_error",
            format!(
                "bias {:?} vs product {:?}",
                bias.values.shape(),
                full.shape()
            ),
        ));
    }
    let abs_q = q_hat.map(f64::abs)?;
    let abs_k = k_hat.map(f64::abs)?;
    let mut worst = IdentityError {
        rel: 0.0,
        abs: 0.0,
        pointwise: 0.0,
    };
    for i in 0..full.rows() {
        for l in 0..full.cols() {
            let lhs = (full.get(i, l).to_f64() - plain.get(i, l).to_f64()) / sqrt_d;
            let want = bias.values.get(i, l).to_f64();
            let err = (lhs - want).abs();
            if err == 0.0 {
                continue;
            }
            let scale = want.abs().max(dot_f64(abs_q.row(i), abs_k.row(l)) / sqrt_d);
            worst.rel = worst.rel.max(err / scale);
            worst.abs = worst.abs.max(err);
            worst.pointwise = worst.pointwise.max(if want == 0.0 {
                f64::INFINITY
            } else {
                err / want.abs()
            });
        }
    }
    Ok(worst)
}
