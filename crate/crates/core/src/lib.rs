//! Hyperbolic positional encoding (HyPE) for attention.
//!
//! A head with slope `mu` and amplitude `tau` biases attention by
//! `a[i][j] = -tau * sinh(mu * (j - i))`. Because
//! `2 sinh(x - y) = e^{x-y} - e^{y-x}`, the bias factors into two `L x 2`
//! matrices whose product is `sqrt(d) * a`. Appending them to the queries
//! and keys lets an unmodified attention kernel apply the bias without an
//! `L x L` mask.
//!
//! Modules:
//! - [`tensor`]: dense matrices with `f64` accumulation at either storage width.
//! - [`encoding`] and [`grid`]: bias builders, eta pairs, slope schedules,
//!   grid layouts.
//! - [`attention`]: vanilla, explicit-bias and concat-path kernels,
//!   multi-head orchestration.
//! - [`grad`]: analytic `(mu, tau)` gradients and a finite-difference check.
//! - [`storage`]: counters for positional values materialised by each path.
//! - [`harness`]: config parsing, the verification suites, bias dumps and
//!   the storage benchmark behind the `hype` binary.

pub mod attention;
pub mod encoding;
pub mod error;
pub mod grad;
pub mod grid;
pub mod harness;
pub mod metrics;
pub mod storage;
pub mod tensor;

pub use attention::{
    attend_grid, attend_hype_concat, attend_multihead, attend_vanilla, attend_with_bias,
    AttentionConfig, AttentionTrace, HeadWeights,
};
pub use encoding::{
    build_bias_alibi, build_bias_grid, build_bias_hype, build_eta_grid, build_eta_pair,
    recommend_mu_schedule, BiasKind, BiasMatrix, EtaPair, HypeHeadParams,
};
pub use error::{Error, Result};
pub use grid::GridShape;
pub use tensor::{Fill, Matrix, Scalar, Width};
