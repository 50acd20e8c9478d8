//! Reference attention kernels: vanilla, explicit additive bias, and the
//! HyPE concat path that folds the bias into the query/key product.
//!
//! All three compute `softmax(logits) · V` with the logit row reductions in
//! `f64`. The concat path never builds an `L x L` bias; the only `L x L`
//! object it holds is the logit matrix every attention computes.

use serde::{Deserialize, Serialize};

use crate::encoding::{
    build_bias_hype, build_eta_grid, build_eta_pair, refill_bias_hype, BiasMatrix, BiasProvenance,
    EtaPair, HypeHeadParams,
};
use crate::error::{Error, Result};
use crate::grid::GridShape;
use crate::storage::PeLedger;
use crate::tensor::{Fill, Matrix, Scalar, Width};

/// Post-softmax weights alongside the output, for inspecting row sums,
/// causal zeros and permutation behaviour.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace<T> {
    pub weights: Matrix<T>,
    pub output: Matrix<T>,
}

fn check_qkv<T: Scalar>(q: &Matrix<T>, k: &Matrix<T>, v: &Matrix<T>) -> Result<f64> {
    if q.shape() != k.shape() || v.rows() != k.rows() {
        return Err(Error::shape(
            "attention",
            format!(
                "Q {:?}, K {:?}, V {:?}: Q and K must match and V needs one row per key",
                q.shape(),
                k.shape(),
                v.shape()
            ),
        ));
    }
    if q.cols() == 0 || q.rows() == 0 {
        return Err(Error::shape("attention", "empty Q"));
    }
    Ok((q.cols() as f64).sqrt())
}

fn finish<T: Scalar>(logits: Matrix<T>, v: &Matrix<T>, causal: bool) -> Result<AttentionTrace<T>> {
    let weights = logits.row_softmax_masked(causal)?;
    let output = weights.matmul(v)?;
    Ok(AttentionTrace { weights, output })
}

pub fn trace_vanilla<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    causal: bool,
) -> Result<AttentionTrace<T>> {
    let sqrt_d = check_qkv(q, k, v)?;
    let logits = q.matmul_nt_map(k, |_, _, dot| dot / sqrt_d)?;
    finish(logits, v, causal)
}

/// `softmax(Q·Kᵀ / sqrt(d)) · V`, optionally causal.
pub fn attend_vanilla<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    causal: bool,
) -> Result<Matrix<T>> {
    trace_vanilla(q, k, v, causal).map(|t| t.output)
}

pub fn trace_with_bias<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    bias: &BiasMatrix<T>,
    causal: bool,
) -> Result<AttentionTrace<T>> {
    let sqrt_d = check_qkv(q, k, v)?;
    if bias.values.shape() != (q.rows(), k.rows()) {
        return Err(Error::shape(
            "attend_with_bias",
            format!("bias {:?} for {} tokens", bias.values.shape(), q.rows()),
        ));
    }
    let b = &bias.values;
    let logits = q.matmul_nt_map(k, |i, l, dot| dot / sqrt_d + b.get(i, l).to_f64())?;
    finish(logits, v, causal)
}

/// `softmax(Q·Kᵀ / sqrt(d) + bias) · V`. The causal mask is applied after
/// the bias is added.
pub fn attend_with_bias<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    bias: &BiasMatrix<T>,
    causal: bool,
) -> Result<Matrix<T>> {
    trace_with_bias(q, k, v, bias, causal).map(|t| t.output)
}

/// `(concat(Q, eta_q), concat(K, eta_k))`.
pub fn augment<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    eta: &EtaPair<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    Ok((q.concat_cols(&eta.eta_q)?, k.concat_cols(&eta.eta_k)?))
}

fn trace_augmented<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    eta: &EtaPair<T>,
    causal: bool,
) -> Result<AttentionTrace<T>> {
    let sqrt_d = check_qkv(q, k, v)?;
    let (q_hat, k_hat) = augment(q, k, eta)?;
    // Scaled by the un-augmented head dimension.
    let logits = q_hat.matmul_nt_map(&k_hat, |_, _, dot| dot / sqrt_d)?;
    finish(logits, v, causal)
}

pub fn trace_hype_concat<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    params: HypeHeadParams,
    n_copies: usize,
    causal: bool,
) -> Result<AttentionTrace<T>> {
    hype_concat_recorded(q, k, v, params, n_copies, causal, None)
}

/// `softmax(concat(Q, eta_q) · concat(K, eta_k)ᵀ / sqrt(d)) · V`.
pub fn attend_hype_concat<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    params: HypeHeadParams,
    n_copies: usize,
    causal: bool,
) -> Result<Matrix<T>> {
    trace_hype_concat(q, k, v, params, n_copies, causal).map(|t| t.output)
}

fn hype_concat_recorded<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    params: HypeHeadParams,
    n_copies: usize,
    causal: bool,
    ledger: Option<&PeLedger>,
) -> Result<AttentionTrace<T>> {
    check_qkv(q, k, v)?;
    let eta = build_eta_pair(q.rows(), q.cols(), params, n_copies)?;
    if let Some(ledger) = ledger {
        ledger.record_eta(&eta);
    }
    trace_augmented(q, k, v, &eta, causal)
}

/// Concat-path attention over a flattened grid of tokens, one eta column
/// pair per axis.
pub fn attend_grid<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    shape: &GridShape,
    params_per_dim: &[HypeHeadParams],
    causal: bool,
) -> Result<Matrix<T>> {
    check_qkv(q, k, v)?;
    if q.rows() != shape.len() {
        return Err(Error::shape(
            "attend_grid",
            format!("{} tokens for a grid of {} cells", q.rows(), shape.len()),
        ));
    }
    let eta = build_eta_grid(shape, q.cols(), params_per_dim)?;
    trace_augmented(q, k, v, &eta, causal).map(|t| t.output)
}

/// Published causal ALiBi: `-m (i - j)` on `j <= i`, zero above the
/// diagonal (those positions are masked anyway).
pub fn alibi_causal_bias<T: Scalar>(len: usize, slope: f64) -> Result<BiasMatrix<T>> {
    if len == 0 || !slope.is_finite() {
        return Err(Error::InvalidParam(format!(
            "causal ALiBi needs len >= 1 and a finite slope (len = {len}, slope = {slope})"
        )));
    }
    let values = Matrix::from_fn(len, len, |i, j| {
        if j <= i {
            -slope * (i - j) as f64 + 0.0
        } else {
            0.0
        }
    })?;
    Ok(BiasMatrix {
        values,
        provenance: BiasProvenance::AlibiCausal { len, slope },
    })
}

/// Causal attention with the published ALiBi bias.
pub fn attend_alibi_causal<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    slope: f64,
) -> Result<Matrix<T>> {
    let bias = alibi_causal_bias(q.rows(), slope)?;
    attend_with_bias(q, k, v, &bias, true)
}

/// Shape and per-head HyPE parameters of a multi-head layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionConfig {
    #[serde(rename = "L")]
    pub seq_len: usize,
    #[serde(rename = "d")]
    pub head_dim: usize,
    #[serde(rename = "h")]
    pub n_heads: usize,
    pub heads: Vec<HypeHeadParams>,
    pub causal: bool,
    pub n_copies: usize,
    pub width: Width,
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 || self.head_dim == 0 || self.n_heads == 0 || self.n_copies == 0 {
            return Err(Error::InvalidParam(format!(
                "L, d, heads and n_copies must all be >= 1 (got {}, {}, {}, {})",
                self.seq_len, self.head_dim, self.n_heads, self.n_copies
            )));
        }
        if self.heads.len() != self.n_heads {
            return Err(Error::shape(
                "AttentionConfig",
                format!(
                    "{} head parameter sets for {} heads",
                    self.heads.len(),
                    self.n_heads
                ),
            ));
        }
        for p in &self.heads {
            HypeHeadParams::new(p.mu, p.tau)?;
        }
        Ok(())
    }
}

/// Projection weights of one head, each `d_model x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights<T> {
    pub w_q: Matrix<T>,
    pub w_k: Matrix<T>,
    pub w_v: Matrix<T>,
}

impl<T: Scalar> HeadWeights<T> {
    /// Normal weights scaled by `1/sqrt(d_model)`, three consecutive seeds.
    pub fn random(d_model: usize, head_dim: usize, seed: u64) -> Result<Self> {
        let s = 1.0 / (d_model as f64).sqrt();
        let draw = |offset: u64| {
            Matrix::<f64>::random_fill(
                d_model,
                head_dim,
                seed.wrapping_add(offset),
                Fill::StandardNormal,
            )
            .map(|x| x * s)?
            .cast::<T>()
        };
        Ok(Self {
            w_q: draw(0)?,
            w_k: draw(1)?,
            w_v: draw(2)?,
        })
    }

    /// `(X·W_q, X·W_k, X·W_v)`.
    pub fn project(&self, x: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>, Matrix<T>)> {
        Ok((
            x.matmul(&self.w_q)?,
            x.matmul(&self.w_k)?,
            x.matmul(&self.w_v)?,
        ))
    }
}

fn check_multihead<T: Scalar>(
    x: &Matrix<T>,
    weights: &[HeadWeights<T>],
    config: &AttentionConfig,
) -> Result<()> {
    config.validate()?;
    if config.width != T::WIDTH {
        return Err(Error::InvalidParam(format!(
            "config width {} does not match storage width {}",
            config.width,
            T::WIDTH
        )));
    }
    if x.rows() != config.seq_len {
        return Err(Error::shape(
            "attend_multihead",
            format!("X has {} rows, config L = {}", x.rows(), config.seq_len),
        ));
    }
    if weights.len() != config.n_heads {
        return Err(Error::shape(
            "attend_multihead",
            format!("{} weight sets for {} heads", weights.len(), config.n_heads),
        ));
    }
    let want = (x.cols(), config.head_dim);
    for w in weights {
        if w.w_q.shape() != want || w.w_k.shape() != want || w.w_v.shape() != want {
            return Err(Error::shape(
                "attend_multihead",
                format!("projection weights must be {want:?}"),
            ));
        }
    }
    Ok(())
}

fn merge_heads<T: Scalar>(outputs: Vec<Matrix<T>>) -> Result<Matrix<T>> {
    let mut it = outputs.into_iter();
    let first = it
        .next()
        .ok_or_else(|| Error::InvalidParam("no heads".into()))?;
    it.try_fold(first, |acc, m| acc.concat_cols(&m))
}

/// Multi-head HyPE attention through the concat path. Head `h` uses
/// `config.heads[h]`; outputs are concatenated along columns, so head `h`
/// occupies columns `h*d .. (h+1)*d`. There is no output projection.
pub fn attend_multihead<T: Scalar>(
    x: &Matrix<T>,
    weights: &[HeadWeights<T>],
    config: &AttentionConfig,
) -> Result<Matrix<T>> {
    attend_multihead_recorded(x, weights, config, &PeLedger::new())
}

/// [`attend_multihead`] that records every eta pair it builds in `ledger`.
pub fn attend_multihead_recorded<T: Scalar>(
    x: &Matrix<T>,
    weights: &[HeadWeights<T>],
    config: &AttentionConfig,
    ledger: &PeLedger,
) -> Result<Matrix<T>> {
    check_multihead(x, weights, config)?;
    let outputs = weights
        .iter()
        .zip(&config.heads)
        .map(|(w, &params)| {
            let (q, k, v) = w.project(x)?;
            hype_concat_recorded(
                &q,
                &k,
                &v,
                params,
                config.n_copies,
                config.causal,
                Some(ledger),
            )
            .map(|t| t.output)
        })
        .collect::<Result<Vec<_>>>()?;
    merge_heads(outputs)
}

/// Multi-head attention through explicit `L x L` masks. One mask buffer is
/// allocated and rewritten for each head; `ledger` sees that single
/// allocation.
pub fn attend_multihead_explicit<T: Scalar>(
    x: &Matrix<T>,
    weights: &[HeadWeights<T>],
    config: &AttentionConfig,
    ledger: &PeLedger,
) -> Result<Matrix<T>> {
    check_multihead(x, weights, config)?;
    let mut mask: Option<BiasMatrix<T>> = None;
    let mut outputs = Vec::with_capacity(config.n_heads);
    for (w, &params) in weights.iter().zip(&config.heads) {
        let bias = match mask.as_mut() {
            Some(m) => {
                refill_bias_hype(m, params)?;
                m
            }
            None => {
                let m = build_bias_hype(config.seq_len, params)?;
                ledger.record_mask(&m);
                mask.insert(m)
            }
        };
        let (q, k, v) = w.project(x)?;
        outputs.push(attend_with_bias(&q, &k, &v, bias, config.causal)?);
    }
    merge_heads(outputs)
}

/// Columns of head `head` in a merged multi-head output.
pub fn head_output<T: Scalar>(
    merged: &Matrix<T>,
    head: usize,
    head_dim: usize,
) -> Result<Matrix<T>> {
    merged.slice_cols(head * head_dim..(head + 1) * head_dim)
}
