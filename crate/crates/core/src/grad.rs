//! Gradients of a scalar attention loss with respect to `mu` and `tau`.
//!
//! Two analytic routes are provided. The explicit route differentiates the
//! bias `-tau * sinh(mu (j - i))` directly; the concat route differentiates
//! the eta columns and pushes the derivative through the augmented product.
//! Both share the softmax backward pass. A central finite-difference
//! estimator of the same loss serves as the independent check.

use serde::{Deserialize, Serialize};

use crate::attention::{trace_hype_concat, trace_with_bias};
use crate::encoding::{build_bias_hype, build_eta_pair, EtaPair, HypeHeadParams};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Scalar reduction applied to the attention output.
#[derive(Debug, Clone, Copy)]
pub enum Loss<'a> {
    /// Sum of all output entries.
    Sum,
    /// `sum(C ⊙ O)` for an upstream cotangent `C` shaped like the output.
    Cotangent(&'a Matrix<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    Sum,
    Cotangent,
}

impl Loss<'_> {
    pub fn kind(&self) -> LossKind {
        match self {
            Loss::Sum => LossKind::Sum,
            Loss::Cotangent(_) => LossKind::Cotangent,
        }
    }

    fn apply(&self, output: &Matrix<f64>) -> Result<f64> {
        match self {
            Loss::Sum => Ok(output.sum()),
            Loss::Cotangent(c) => Ok(output.hadamard(c)?.sum()),
        }
    }

    fn cotangent(&self, rows: usize, cols: usize) -> Result<Matrix<f64>> {
        match self {
            Loss::Sum => Matrix::from_fn(rows, cols, |_, _| 1.0),
            Loss::Cotangent(c) if c.shape() == (rows, cols) => Ok((*c).clone()),
            Loss::Cotangent(c) => Err(Error::shape(
                "loss cotangent",
                format!("{:?} for an output of {:?}", c.shape(), (rows, cols)),
            )),
        }
    }
}

/// `dLoss/dmu` and `dLoss/dtau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamGradient {
    pub d_mu: f64,
    pub d_tau: f64,
    pub loss_kind: LossKind,
}

/// Entrywise `(da/dmu, da/dtau)` of the HyPE bias:
/// `-tau (j - i) cosh(mu (j - i))` and `-sinh(mu (j - i))`.
pub fn bias_param_grads(len: usize, params: HypeHeadParams) -> Result<(Matrix<f64>, Matrix<f64>)> {
    // Range check shared with the forward builder.
    build_bias_hype::<f64>(len, params)?;
    let d_mu = Matrix::from_fn(len, len, |i, j| {
        let off = j as f64 - i as f64;
        -params.tau * off * (params.mu * off).cosh() + 0.0
    })?;
    let d_tau = Matrix::from_fn(len, len, |i, j| {
        -(params.mu * (j as f64 - i as f64)).sinh() + 0.0
    })?;
    Ok((d_mu, d_tau))
}

/// Loss of the explicit-bias forward pass.
pub fn loss_value(
    q: &Matrix<f64>,
    k: &Matrix<f64>,
    v: &Matrix<f64>,
    params: HypeHeadParams,
    causal: bool,
    loss: Loss<'_>,
) -> Result<f64> {
    let bias = build_bias_hype(q.rows(), params)?;
    loss.apply(&trace_with_bias(q, k, v, &bias, causal)?.output)
}

/// Backward through `O = P·V`, `P = softmax(Z)`: returns `dLoss/dZ`.
fn logit_cotangent(weights: &Matrix<f64>, v: &Matrix<f64>, loss: Loss<'_>) -> Result<Matrix<f64>> {
    let upstream = loss.cotangent(weights.rows(), v.cols())?;
    let d_weights = upstream.matmul_nt(v)?;
    let mut data = Vec::with_capacity(weights.len());
    for i in 0..weights.rows() {
        let p = weights.row(i);
        let g = d_weights.row(i);
        let inner: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        data.extend(p.iter().zip(g).map(|(a, b)| a * (b - inner)));
    }
    Matrix::new(weights.rows(), weights.cols(), data)
}

fn contract(a: &Matrix<f64>, b: &Matrix<f64>) -> Result<f64> {
    Ok(a.hadamard(b)?.sum())
}

/// Analytic gradients through the explicit-bias parameterisation.
pub fn attention_param_grads(
    q: &Matrix<f64>,
    k: &Matrix<f64>,
    v: &Matrix<f64>,
    params: HypeHeadParams,
    causal: bool,
    loss: Loss<'_>,
) -> Result<ParamGradient> {
    let bias = build_bias_hype(q.rows(), params)?;
    let trace = trace_with_bias(q, k, v, &bias, causal)?;
    let d_logits = logit_cotangent(&trace.weights, v, loss)?;
    let (d_bias_mu, d_bias_tau) = bias_param_grads(q.rows(), params)?;
    Ok(ParamGradient {
        d_mu: contract(&d_logits, &d_bias_mu)?,
        d_tau: contract(&d_logits, &d_bias_tau)?,
        loss_kind: loss.kind(),
    })
}

/// `d eta / d mu` for one eta pair: columns of `eta_q` at even positions
/// grow like `e^{+mu i}`, odd ones like `e^{-mu i}`; `eta_k` is the mirror.
fn eta_mu_derivative(eta: &EtaPair<f64>) -> Result<(Matrix<f64>, Matrix<f64>)> {
    let sign = |j: usize| if j.is_multiple_of(2) { 1.0 } else { -1.0 };
    let dq = Matrix::from_fn(eta.eta_q.rows(), eta.eta_q.cols(), |i, j| {
        sign(j) * i as f64 * eta.eta_q.get(i, j)
    })?;
    let dk = Matrix::from_fn(eta.eta_k.rows(), eta.eta_k.cols(), |i, j| {
        -sign(j) * i as f64 * eta.eta_k.get(i, j)
    })?;
    Ok((dq, dk))
}

/// Analytic gradients through the concat parameterisation: the derivative
/// flows into the eta columns and out through `Q̂·K̂ᵀ / sqrt(d)`.
///
/// `d eta_q / d tau` is the `tau = 1` eta_q, which keeps `tau = 0` regular.
pub fn attention_param_grads_concat(
    q: &Matrix<f64>,
    k: &Matrix<f64>,
    v: &Matrix<f64>,
    params: HypeHeadParams,
    n_copies: usize,
    causal: bool,
    loss: Loss<'_>,
) -> Result<ParamGradient> {
    let (len, d) = q.shape();
    let sqrt_d = (d as f64).sqrt();
    let trace = trace_hype_concat(q, k, v, params, n_copies, causal)?;
    let d_logits = logit_cotangent(&trace.weights, v, loss)?;

    let eta = build_eta_pair::<f64>(len, d, params, n_copies)?;
    let (dq_mu, dk_mu) = eta_mu_derivative(&eta)?;
    let d_logits_mu = dq_mu
        .matmul_nt(&eta.eta_k)?
        .add(&eta.eta_q.matmul_nt(&dk_mu)?)?
        .scale(1.0 / sqrt_d)?;
    let unit = build_eta_pair::<f64>(len, d, params.unit_amplitude(), n_copies)?;
    let d_logits_tau = unit.eta_q.matmul_nt(&eta.eta_k)?.scale(1.0 / sqrt_d)?;

    Ok(ParamGradient {
        d_mu: contract(&d_logits, &d_logits_mu)?,
        d_tau: contract(&d_logits, &d_logits_tau)?,
        loss_kind: loss.kind(),
    })
}

/// Central-difference step for a parameter value: `eps^{1/3} * max(1, |x|)`.
pub fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// `(f(x + h) - f(x - h)) / 2h`.
pub fn central_difference(mut f: impl FnMut(f64) -> Result<f64>, x: f64, h: f64) -> Result<f64> {
    Ok((f(x + h)? - f(x - h)?) / (2.0 * h))
}

/// Finite-difference estimate of both gradients from the explicit forward
/// pass alone.
pub fn finite_difference_grads(
    q: &Matrix<f64>,
    k: &Matrix<f64>,
    v: &Matrix<f64>,
    params: HypeHeadParams,
    causal: bool,
    loss: Loss<'_>,
) -> Result<ParamGradient> {
    let d_mu = central_difference(
        |mu| loss_value(q, k, v, HypeHeadParams { mu, ..params }, causal, loss),
        params.mu,
        fd_step(params.mu),
    )?;
    let d_tau = central_difference(
        |tau| loss_value(q, k, v, HypeHeadParams { tau, ..params }, causal, loss),
        params.tau,
        fd_step(params.tau),
    )?;
    Ok(ParamGradient {
        d_mu,
        d_tau,
        loss_kind: loss.kind(),
    })
}
