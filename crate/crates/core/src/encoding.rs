//! Hyperbolic positional bias and the eta column augmentations.
//!
//! The bias for a head with slope `mu` and amplitude `tau` is
//! `a[i][j] = -tau * sinh(mu * (j - i))`. Appending the eta columns to the
//! queries and keys reproduces it inside the logit product:
//! `concat(Q, eta_q) · concat(K, eta_k)ᵀ = Q·Kᵀ + sqrt(d) * a`.
//!
//! Column layout for one copy (0-based columns, `c = tau*sqrt(d)/2`):
//!
//! | column | eta_q          | eta_k        |
//! |--------|----------------|--------------|
//! | 0      | `c * e^{+mu*i}` | `+e^{-mu*i}` |
//! | 1      | `c * e^{-mu*i}` | `-e^{+mu*i}` |
//!
//! With `n` copies the layout repeats and `c` is divided by `n`, so the
//! product does not depend on `n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridShape;
use crate::tensor::{Matrix, Scalar};

/// Slope and amplitude of one head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypeHeadParams {
    pub mu: f64,
    pub tau: f64,
}

impl HypeHeadParams {
    pub fn new(mu: f64, tau: f64) -> Result<Self> {
        if !mu.is_finite() || !tau.is_finite() {
            return Err(Error::InvalidParam(format!(
                "mu and tau must be finite (mu = {mu}, tau = {tau})"
            )));
        }
        Ok(Self { mu, tau })
    }

    /// `-tau * sinh(mu * offset)` for a key-minus-query offset.
    #[inline]
    pub fn bias_at(&self, offset: f64) -> f64 {
        // `+ 0.0` turns the -0.0 on the diagonal into +0.0.
        -self.tau * (self.mu * offset).sinh() + 0.0
    }

    /// Same parameters with `tau = 1`.
    pub fn unit_amplitude(&self) -> Self {
        Self {
            mu: self.mu,
            tau: 1.0,
        }
    }
}

/// Where a bias matrix came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BiasProvenance {
    Hype {
        len: usize,
        params: HypeHeadParams,
    },
    Alibi {
        len: usize,
        slope: f64,
    },
    /// Causal ALiBi in its published form, `-m (i - j)` for `j <= i`.
    AlibiCausal {
        len: usize,
        slope: f64,
    },
    Grid {
        shape: GridShape,
        params: Vec<HypeHeadParams>,
    },
    Sum(Vec<BiasProvenance>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BiasKind {
    Hype,
    Alibi,
    Composite,
}

/// An explicit `L x L` additive attention bias.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasMatrix<T> {
    pub values: Matrix<T>,
    pub provenance: BiasProvenance,
}

impl<T: Scalar> BiasMatrix<T> {
    pub fn kind(&self) -> BiasKind {
        match self.provenance {
            BiasProvenance::Hype { .. } => BiasKind::Hype,
            BiasProvenance::Alibi { .. } | BiasProvenance::AlibiCausal { .. } => BiasKind::Alibi,
            BiasProvenance::Grid { .. } | BiasProvenance::Sum(_) => BiasKind::Composite,
        }
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    /// Entrywise sum; the result is a composite bias.
    pub fn sum(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            values: self.values.add(&other.values)?,
            provenance: BiasProvenance::Sum(vec![
                self.provenance.clone(),
                other.provenance.clone(),
            ]),
        })
    }
}

fn require_len(op: &'static str, len: usize) -> Result<()> {
    if len == 0 {
        return Err(Error::InvalidParam(format!(
            "{op}: sequence length must be >= 1"
        )));
    }
    Ok(())
}

/// Fails if `-tau * sinh(mu * (len - 1))` does not fit in `T`.
fn check_bias_range<T: Scalar>(len: usize, params: &HypeHeadParams) -> Result<()> {
    let arg = (params.mu * (len as f64 - 1.0)).abs();
    let peak = T::from_f64(params.tau.abs() * arg.sinh());
    if !peak.is_finite() {
        return Err(Error::Overflow {
            what: "hyperbolic bias",
            mu: params.mu,
            len,
            arg,
            width: T::WIDTH,
        });
    }
    Ok(())
}

/// Explicit HyPE bias, `a[i][j] = -tau * sinh(mu * (j - i))`.
pub fn build_bias_hype<T: Scalar>(len: usize, params: HypeHeadParams) -> Result<BiasMatrix<T>> {
    require_len("build_bias_hype", len)?;
    let params = HypeHeadParams::new(params.mu, params.tau)?;
    check_bias_range::<T>(len, &params)?;
    let values = Matrix::from_fn(len, len, |i, j| params.bias_at(j as f64 - i as f64))?;
    Ok(BiasMatrix {
        values,
        provenance: BiasProvenance::Hype { len, params },
    })
}

/// Rewrites an existing `L x L` bias in place for new parameters, without
/// allocating. Used by the explicit-mask path to share one buffer across heads.
pub fn refill_bias_hype<T: Scalar>(bias: &mut BiasMatrix<T>, params: HypeHeadParams) -> Result<()> {
    let len = bias.len();
    let params = HypeHeadParams::new(params.mu, params.tau)?;
    check_bias_range::<T>(len, &params)?;
    bias.values.refill("refill_bias_hype", |i, j| {
        params.bias_at(j as f64 - i as f64)
    })?;
    bias.provenance = BiasProvenance::Hype { len, params };
    Ok(())
}

/// Antisymmetric linear comparator `-m (j - i)`, the first-order term of
/// the hyperbolic bias at `tau = 1`.
pub fn build_bias_alibi<T: Scalar>(len: usize, slope: f64) -> Result<BiasMatrix<T>> {
    require_len("build_bias_alibi", len)?;
    if !slope.is_finite() {
        return Err(Error::InvalidParam(format!(
            "ALiBi slope must be finite, got {slope}"
        )));
    }
    let values = Matrix::from_fn(len, len, |i, j| -slope * (j as f64 - i as f64) + 0.0)?;
    Ok(BiasMatrix {
        values,
        provenance: BiasProvenance::Alibi { len, slope },
    })
}

/// The eta augmentation pair for one head (or one grid).
#[derive(Debug, Clone, PartialEq)]
pub struct EtaPair<T> {
    pub eta_q: Matrix<T>,
    pub eta_k: Matrix<T>,
    pub n_copies: usize,
    /// One entry per column-pair group: a single entry for a sequence,
    /// one per axis for a grid.
    pub params: Vec<HypeHeadParams>,
}

impl<T: Scalar> EtaPair<T> {
    /// Positional values held by this pair (`eta_q` plus `eta_k`).
    pub fn stored_values(&self) -> usize {
        self.eta_q.len() + self.eta_k.len()
    }

    /// `eta_q · eta_kᵀ`, which equals `sqrt(d)` times the bias.
    pub fn product(&self) -> Result<Matrix<T>> {
        self.eta_q.matmul_nt(&self.eta_k)
    }
}

/// Fills `copies` column pairs per axis. `positions[a][i]` is the
/// coordinate of token `i` along axis `a`.
fn eta_from_positions<T: Scalar>(
    positions: &[Vec<usize>],
    len: usize,
    head_dim: usize,
    params: &[HypeHeadParams],
    n_copies: usize,
) -> Result<EtaPair<T>> {
    if head_dim == 0 {
        return Err(Error::InvalidParam("head dimension must be >= 1".into()));
    }
    if n_copies == 0 {
        return Err(Error::InvalidParam("n_copies must be >= 1".into()));
    }
    let sqrt_d = (head_dim as f64).sqrt();
    let width = 2 * n_copies * params.len();
    let mut eta_q = Vec::with_capacity(len * width);
    let mut eta_k = Vec::with_capacity(len * width);
    for (axis, p) in params.iter().enumerate() {
        let extent = positions[axis].iter().copied().max().unwrap_or(0);
        let arg = (p.mu * extent as f64).abs();
        let amp = p.tau * sqrt_d / (2.0 * n_copies as f64);
        let overflow =
            !T::from_f64(arg.exp()).is_finite() || !T::from_f64(amp.abs() * arg.exp()).is_finite();
        if overflow {
            return Err(Error::Overflow {
                what: "eta exponential",
                mu: p.mu,
                len: extent + 1,
                arg,
                width: T::WIDTH,
            });
        }
    }
    for i in 0..len {
        for (p, pos) in params.iter().zip(positions) {
            let x = p.mu * pos[i] as f64;
            let (up, down) = (x.exp(), (-x).exp());
            let amp = p.tau * sqrt_d / (2.0 * n_copies as f64);
            for _ in 0..n_copies {
                eta_q.push(T::from_f64(amp * up));
                eta_q.push(T::from_f64(amp * down));
                eta_k.push(T::from_f64(down));
                eta_k.push(T::from_f64(-up));
            }
        }
    }
    Ok(EtaPair {
        eta_q: Matrix::new(len, width, eta_q)?,
        eta_k: Matrix::new(len, width, eta_k)?,
        n_copies,
        params: params.to_vec(),
    })
}

/// Builds the `L x 2n` eta pair for one head.
pub fn build_eta_pair<T: Scalar>(
    len: usize,
    head_dim: usize,
    params: HypeHeadParams,
    n_copies: usize,
) -> Result<EtaPair<T>> {
    require_len("build_eta_pair", len)?;
    let params = HypeHeadParams::new(params.mu, params.tau)?;
    let positions = vec![(0..len).collect::<Vec<_>>()];
    eta_from_positions(&positions, len, head_dim, &[params], n_copies)
}

/// Eta pair for a grid layout: one column pair per axis, each driven by the
/// token's coordinate along that axis.
pub fn build_eta_grid<T: Scalar>(
    shape: &GridShape,
    head_dim: usize,
    params_per_dim: &[HypeHeadParams],
) -> Result<EtaPair<T>> {
    check_grid_params(shape, params_per_dim)?;
    let len = shape.len();
    let positions: Vec<Vec<usize>> = (0..shape.ndim())
        .map(|axis| (0..len).map(|flat| shape.coord(flat, axis)).collect())
        .collect();
    eta_from_positions(&positions, len, head_dim, params_per_dim, 1)
}

fn check_grid_params(shape: &GridShape, params_per_dim: &[HypeHeadParams]) -> Result<()> {
    if params_per_dim.len() != shape.ndim() {
        return Err(Error::shape(
            "grid",
            format!(
                "{} parameter sets for a {}-dimensional grid",
                params_per_dim.len(),
                shape.ndim()
            ),
        ));
    }
    for p in params_per_dim {
        HypeHeadParams::new(p.mu, p.tau)?;
    }
    Ok(())
}

/// Summed per-axis bias over a grid:
/// `a[p][q] = sum_axis -tau_axis * sinh(mu_axis * (coord_axis(q) - coord_axis(p)))`.
pub fn build_bias_grid<T: Scalar>(
    shape: &GridShape,
    params_per_dim: &[HypeHeadParams],
) -> Result<BiasMatrix<T>> {
    check_grid_params(shape, params_per_dim)?;
    for (axis, p) in params_per_dim.iter().enumerate() {
        check_bias_range::<T>(shape.dims()[axis], p)?;
    }
    let len = shape.len();
    let coords: Vec<Vec<usize>> = (0..len).map(|flat| shape.coords(flat)).collect();
    let values = Matrix::from_fn(len, len, |p, q| {
        params_per_dim
            .iter()
            .enumerate()
            .map(|(axis, prm)| prm.bias_at(coords[q][axis] as f64 - coords[p][axis] as f64))
            .sum::<f64>()
            + 0.0
    })?;
    Ok(BiasMatrix {
        values,
        provenance: BiasProvenance::Grid {
            shape: shape.clone(),
            params: params_per_dim.to_vec(),
        },
    })
}

/// Default per-head slopes for extrapolating to `l_extra` tokens:
/// `mu_h = 2^{-h} / (2 * l_extra)` with `tau_h = 1`.
///
/// Every slope is below `1 / l_extra`, so `|mu_h (j - i)| < 1/2` for all
/// token pairs up to that length and the bias stays near-linear.
pub fn recommend_mu_schedule(n_heads: usize, l_extra: usize) -> Result<Vec<HypeHeadParams>> {
    if n_heads == 0 || l_extra == 0 {
        return Err(Error::InvalidParam(format!(
            "schedule needs n_heads >= 1 and l_extra >= 1 (got {n_heads}, {l_extra})"
        )));
    }
    let base = 1.0 / (2.0 * l_extra as f64);
    Ok((0..n_heads)
        .map(|h| HypeHeadParams {
            mu: base * (-(h as f64)).exp2(),
            tau: 1.0,
        })
        .collect())
}
