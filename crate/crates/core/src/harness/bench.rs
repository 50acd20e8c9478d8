//! Storage and wall-time comparison of the concat path against the
//! explicit-mask path on a multi-head layer.

use std::time::Instant;

use serde::Serialize;

use super::config::RunConfig;
use super::HarnessError;
use crate::attention::{
    attend_multihead_explicit, attend_multihead_recorded, head_output, AttentionConfig, HeadWeights,
};
use crate::metrics::max_rel_error;
use crate::storage::{PeCounts, PeLedger};
use crate::tensor::{Fill, Matrix, Scalar, Width};

/// Largest sequence length `bench` accepts at each width. One `L x L` logit
/// matrix at the cap is 256 MiB (f32) or 128 MiB (f64).
pub const MAX_BENCH_LEN_F32: usize = 8192;
pub const MAX_BENCH_LEN_F64: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub config: AttentionConfig,
    /// Positional values materialised by the concat path (eta pairs).
    pub stored_pe_values_hype: usize,
    /// Positional values materialised by the explicit path (one shared mask).
    pub stored_pe_values_explicit: usize,
    /// Median seconds over `trials` runs.
    pub wall_time_concat: f64,
    pub wall_time_explicit: f64,
    pub max_equivalence_error: f64,
    pub width: Width,
    pub seed: u64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn bench_width<T: Scalar>(cfg: &RunConfig) -> Result<BenchReport, HarnessError> {
    let att = cfg.attention_config();
    let d_model = cfg.d * cfg.heads;
    let x =
        Matrix::<f64>::random_fill(cfg.len, d_model, cfg.seed, Fill::StandardNormal).cast::<T>()?;
    let weights = (0..cfg.heads)
        .map(|h| HeadWeights::<T>::random(d_model, cfg.d, cfg.seed.wrapping_add(1 + 3 * h as u64)))
        .collect::<crate::Result<Vec<_>>>()?;

    let mut times = (Vec::new(), Vec::new());
    let mut counts: Option<(PeCounts, PeCounts)> = None;
    let mut max_err = 0.0f64;
    for _ in 0..cfg.trials {
        let concat_ledger = PeLedger::new();
        let start = Instant::now();
        let concat = attend_multihead_recorded(&x, &weights, &att, &concat_ledger)?;
        times.0.push(start.elapsed().as_secs_f64());

        let explicit_ledger = PeLedger::new();
        let start = Instant::now();
        let explicit = attend_multihead_explicit(&x, &weights, &att, &explicit_ledger)?;
        times.1.push(start.elapsed().as_secs_f64());

        for h in 0..cfg.heads {
            let err = max_rel_error(
                &head_output(&concat, h, cfg.d)?,
                &head_output(&explicit, h, cfg.d)?,
            );
            max_err = max_err.max(err);
        }
        let now = (concat_ledger.counts(), explicit_ledger.counts());
        if counts.is_some_and(|c| c != now) {
            return Err(HarnessError::Failed(
                "storage counts changed between trials".into(),
            ));
        }
        counts = Some(now);
    }
    let (concat_counts, explicit_counts) = counts.expect("trials >= 1");
    Ok(BenchReport {
        config: att,
        stored_pe_values_hype: concat_counts.eta_values + concat_counts.mask_values,
        stored_pe_values_explicit: explicit_counts.eta_values + explicit_counts.mask_values,
        wall_time_concat: median(times.0),
        wall_time_explicit: median(times.1),
        max_equivalence_error: max_err,
        width: cfg.width,
        seed: cfg.seed,
    })
}

/// Runs the benchmark and checks its invariants: the concat path stores
/// exactly `4 n L h` values, the explicit path exactly `L^2`, and the two
/// agree within the configured cross-path tolerance.
pub fn run_bench(cfg: &RunConfig) -> Result<BenchReport, HarnessError> {
    cfg.validate()?;
    let cap = match cfg.width {
        Width::F32 => MAX_BENCH_LEN_F32,
        Width::F64 => MAX_BENCH_LEN_F64,
    };
    if cfg.len > cap {
        return Err(HarnessError::Refused(format!(
            "L = {} exceeds the {} benchmark cap of {cap}: each path holds an L x L logit matrix per head",
            cfg.len, cfg.width
        )));
    }
    let report = match cfg.width {
        Width::F32 => bench_width::<f32>(cfg)?,
        Width::F64 => bench_width::<f64>(cfg)?,
    };
    let want_hype = 4 * cfg.n_copies * cfg.len * cfg.heads;
    if report.stored_pe_values_hype != want_hype {
        return Err(HarnessError::Failed(format!(
            "concat path stored {} positional values, expected 4nLh = {want_hype}",
            report.stored_pe_values_hype
        )));
    }
    if report.stored_pe_values_explicit != cfg.len * cfg.len {
        return Err(HarnessError::Failed(format!(
            "explicit path stored {} positional values, expected L^2 = {}",
            report.stored_pe_values_explicit,
            cfg.len * cfg.len
        )));
    }
    if report.max_equivalence_error.is_nan() || report.max_equivalence_error > cfg.tol.cross_path {
        return Err(HarnessError::Failed(format!(
            "paths disagree: max relative error {:e} > {:e}",
            report.max_equivalence_error, cfg.tol.cross_path
        )));
    }
    Ok(report)
}
