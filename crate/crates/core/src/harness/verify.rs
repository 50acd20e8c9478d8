//! The `verify` suites. Each suite runs a set of named checks; the run
//! passes only if every check in every suite passes.
//!
//! Equivalence, antisymmetry, stacking, grid and degenerate suites run at
//! the configured storage width. The ALiBi-bound and gradient suites are
//! statements about the exact functions and always run in `f64`.

use std::fmt;

use serde::Serialize;

use super::config::RunConfig;
use crate::attention::{
    attend_grid, attend_hype_concat, attend_multihead, attend_vanilla, attend_with_bias,
    head_output, HeadWeights,
};
use crate::encoding::{
    build_bias_alibi, build_bias_grid, build_bias_hype, build_eta_pair, HypeHeadParams,
};
use crate::error::{Error, Result};
use crate::grad::{
    attention_param_grads, attention_param_grads_concat, finite_difference_grads, Loss,
};
use crate::grid::GridShape;
use crate::metrics::{identity_error, max_rel_error, rel_diff};
use crate::tensor::{Fill, Matrix, Scalar, Width};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: measured {:.3e} (limit {:.3e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub checks: Vec<CheckResult>,
    /// Set when the suite aborted on a numerical error (e.g. overflow).
    pub error: Option<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.passed)
    }

    fn first_failure(&self) -> Option<String> {
        if let Some(e) = &self.error {
            return Some(format!("{}: {e}", self.name));
        }
        self.checks
            .iter()
            .find(|c| !c.passed)
            .map(|c| c.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub config: RunConfig,
    pub suites: Vec<SuiteReport>,
    pub passed: bool,
    pub first_failure: Option<String>,
}

/// Collects checks for one suite.
struct Checks {
    name: &'static str,
    checks: Vec<CheckResult>,
}

impl Checks {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            checks: Vec::new(),
        }
    }

    /// Passes when `measured <= tolerance`; NaN never passes.
    fn at_most(&mut self, name: impl Into<String>, measured: f64, tolerance: f64) {
        self.checks.push(CheckResult {
            name: format!("{}.{}", self.name, name.into()),
            measured,
            tolerance,
            passed: measured <= tolerance,
        });
    }

    fn holds(&mut self, name: impl Into<String>, ok: bool) {
        self.at_most(name, if ok { 0.0 } else { 1.0 }, 0.0);
    }
}

fn run_suite(name: &'static str, body: impl FnOnce(&mut Checks) -> Result<()>) -> SuiteReport {
    let mut checks = Checks::new(name);
    let error = body(&mut checks).err().map(|e| e.to_string());
    SuiteReport {
        name,
        checks: checks.checks,
        error,
    }
}

fn random<T: Scalar>(rows: usize, cols: usize, seed: u64) -> Result<Matrix<T>> {
    Matrix::<f64>::random_fill(rows, cols, seed, Fill::StandardNormal).cast()
}

fn qkv<T: Scalar>(len: usize, d: usize, seed: u64) -> Result<(Matrix<T>, Matrix<T>, Matrix<T>)> {
    Ok((
        random(len, d, seed)?,
        random(len, d, seed.wrapping_add(1))?,
        random(len, d, seed.wrapping_add(2))?,
    ))
}

fn suite_equivalence<T: Scalar>(
    cfg: &RunConfig,
    heads: &[HypeHeadParams],
    c: &mut Checks,
) -> Result<()> {
    let tol = &cfg.tol;
    for (h, &p) in heads.iter().enumerate() {
        let seed = cfg.seed.wrapping_add(100 * h as u64);
        let (q, k, v) = qkv::<T>(cfg.len, cfg.d, seed)?;
        let eta = build_eta_pair::<T>(cfg.len, cfg.d, p, cfg.n_copies)?;
        let bias = build_bias_hype::<T>(cfg.len, p)?;
        let id = identity_error(&q, &k, &eta, &bias)?;
        c.at_most(format!("identity[head {h}]"), id.rel, tol.identity);

        let explicit = attend_with_bias(&q, &k, &v, &bias, cfg.causal)?;
        let concat = attend_hype_concat(&q, &k, &v, p, cfg.n_copies, cfg.causal)?;
        c.at_most(
            format!("cross_path[head {h}]"),
            max_rel_error(&concat, &explicit),
            tol.cross_path,
        );
    }

    let d_model = cfg.d * cfg.heads;
    let x = random::<T>(cfg.len, d_model, cfg.seed.wrapping_add(7))?;
    let weights = (0..cfg.heads)
        .map(|h| {
            HeadWeights::<T>::random(d_model, cfg.d, cfg.seed.wrapping_add(1000 + 3 * h as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut att = cfg.attention_config();
    att.heads = heads.to_vec();
    let merged = attend_multihead(&x, &weights, &att)?;
    for (h, (w, &p)) in weights.iter().zip(heads).enumerate() {
        let (q, k, v) = w.project(&x)?;
        let bias = build_bias_hype::<T>(cfg.len, p)?;
        let single = attend_with_bias(&q, &k, &v, &bias, cfg.causal)?;
        c.at_most(
            format!("multihead[head {h}]"),
            max_rel_error(&head_output(&merged, h, cfg.d)?, &single),
            tol.multihead,
        );
    }
    Ok(())
}

fn suite_antisymmetry<T: Scalar>(
    cfg: &RunConfig,
    heads: &[HypeHeadParams],
    c: &mut Checks,
) -> Result<()> {
    for (h, &p) in heads.iter().enumerate() {
        let bias = build_bias_hype::<T>(cfg.len, p)?;
        let b = &bias.values;
        let n = cfg.len;
        let antisymmetric =
            (0..n).all(|i| (0..n).all(|j| b.get(i, j).to_f64() == -b.get(j, i).to_f64()));
        c.holds(format!("antisymmetric[head {h}]"), antisymmetric);
        c.holds(
            format!("zero_diagonal[head {h}]"),
            (0..n).all(|i| b.get(i, i).to_f64() == 0.0),
        );
        if p.mu > 0.0 && p.tau > 0.0 {
            // Strict decrease is only resolvable where consecutive entries
            // differ by more than rounding; check in f64.
            let b64 = build_bias_hype::<f64>(cfg.len, p)?;
            let decreasing =
                (0..n).all(|i| (1..n).all(|j| b64.values.get(i, j) < b64.values.get(i, j - 1)));
            c.holds(format!("row_decreasing[head {h}]"), decreasing);
        }
    }
    Ok(())
}

/// Entries with `|x| < ALIBI_TIGHT_FLOOR` are left out of the tight check:
/// below it the rounding of `x` is no longer small next to `x^3/6`.
pub const ALIBI_TIGHT_FLOOR: f64 = 1e-4;

/// Worst ratios `(err / (|x|^3 sinh 1), err / (|x|^3 / 6))` of the HyPE vs
/// ALiBi difference over one bias, where `x = mu (j - i)`. The first covers
/// `|x| <= 1`, the second `ALIBI_TIGHT_FLOOR <= |x| <= 0.1`.
pub fn alibi_ratios(len: usize, mu: f64) -> Result<(f64, f64)> {
    let hype = build_bias_hype::<f64>(len, HypeHeadParams::new(mu, 1.0)?)?;
    let alibi = build_bias_alibi::<f64>(len, mu)?;
    let (mut loose, mut tight) = (0.0f64, 0.0f64);
    for i in 0..len {
        for j in 0..len {
            let x = (mu * (j as f64 - i as f64)).abs();
            let err = (hype.values.get(i, j) - alibi.values.get(i, j)).abs();
            if x <= 1.0 && err > 0.0 {
                loose = loose.max(err / (x.powi(3) * 1f64.sinh()));
            }
            if (ALIBI_TIGHT_FLOOR..=0.1).contains(&x) {
                tight = tight.max(err / (x.powi(3) / 6.0));
            }
        }
    }
    Ok((loose, tight))
}

fn suite_alibi(cfg: &RunConfig, heads: &[HypeHeadParams], c: &mut Checks) -> Result<()> {
    let mut slopes: Vec<(String, f64)> = heads
        .iter()
        .enumerate()
        .map(|(h, p)| (format!("head {h}"), p.mu))
        .collect();
    slopes.push(("mu=1/(2L)".into(), 1.0 / (2.0 * cfg.len as f64)));
    for (label, mu) in slopes {
        let (loose, tight) = alibi_ratios(cfg.len, mu)?;
        c.at_most(format!("sinh1_bound[{label}]"), loose, 1.0);
        c.at_most(
            format!("cubic_term[{label}]"),
            tight,
            1.0 + cfg.tol.alibi_slack,
        );
    }
    Ok(())
}

fn suite_stacking<T: Scalar>(
    cfg: &RunConfig,
    heads: &[HypeHeadParams],
    c: &mut Checks,
) -> Result<()> {
    let (q, k, v) = qkv::<T>(cfg.len, cfg.d, cfg.seed.wrapping_add(11))?;
    for (h, &p) in heads.iter().enumerate() {
        let base = attend_hype_concat(&q, &k, &v, p, 1, cfg.causal)?;
        let base_prod = build_eta_pair::<T>(cfg.len, cfg.d, p, 1)?.product()?;
        for n in [2, 4, 8] {
            let out = attend_hype_concat(&q, &k, &v, p, n, cfg.causal)?;
            c.at_most(
                format!("output[head {h}, n={n}]"),
                max_rel_error(&out, &base),
                cfg.tol.stacking,
            );
            let prod = build_eta_pair::<T>(cfg.len, cfg.d, p, n)?.product()?;
            let err = if base_prod.max_abs() == 0.0 {
                prod.max_abs()
            } else {
                max_rel_error(&prod, &base_prod)
            };
            c.at_most(format!("product[head {h}, n={n}]"), err, cfg.tol.stacking);
        }
    }
    Ok(())
}

fn suite_grid<T: Scalar>(cfg: &RunConfig, heads: &[HypeHeadParams], c: &mut Checks) -> Result<()> {
    let fixed = [0.1, 0.05, 0.2, 0.15];
    for (s, dims) in [vec![3, 4], vec![4, 4, 2], vec![2, 2, 2, 2]]
        .into_iter()
        .enumerate()
    {
        let shape = GridShape::new(dims)?;
        let (q, k, v) = qkv::<T>(
            shape.len(),
            cfg.d,
            cfg.seed.wrapping_add(200 + 10 * s as u64),
        )?;
        let label = format!("{:?}", shape.dims());
        let param_sets: [Vec<HypeHeadParams>; 2] = [
            (0..shape.ndim())
                .map(|a| HypeHeadParams {
                    mu: fixed[a],
                    tau: 1.0,
                })
                .collect(),
            (0..shape.ndim()).map(|a| heads[a % heads.len()]).collect(),
        ];
        for (which, params) in ["fixed", "config"].iter().zip(&param_sets) {
            let bias = build_bias_grid::<T>(&shape, params)?;
            let explicit = attend_with_bias(&q, &k, &v, &bias, cfg.causal)?;
            let concat = attend_grid(&q, &k, &v, &shape, params, cfg.causal)?;
            c.at_most(
                format!("{label}[{which} mu]"),
                max_rel_error(&concat, &explicit),
                cfg.tol.grid,
            );
        }
    }
    let (q, k, v) = qkv::<T>(cfg.len, cfg.d, cfg.seed.wrapping_add(300))?;
    let line = GridShape::new(vec![cfg.len])?;
    let reduced = attend_grid(&q, &k, &v, &line, &heads[..1], cfg.causal)?;
    let sequence = attend_hype_concat(&q, &k, &v, heads[0], 1, cfg.causal)?;
    c.holds("1d_reduces_exactly", reduced == sequence);
    Ok(())
}

/// Parameter grid for the gradient suite.
pub const GRAD_LENS: [usize; 3] = [4, 16, 64];
pub const GRAD_DIMS: [usize; 2] = [2, 8];
pub const GRAD_MUS: [f64; 3] = [0.0, 1e-3, 1e-2];
pub const GRAD_TAUS: [f64; 3] = [0.0, 1.0, 2.0];

/// Worst `(finite-difference, cross-route)` relative gradient errors for one
/// configuration.
pub fn gradient_errors(
    len: usize,
    d: usize,
    params: HypeHeadParams,
    n_copies: usize,
    causal: bool,
    seed: u64,
) -> Result<(f64, f64)> {
    let (q, k, v) = qkv::<f64>(len, d, seed)?;
    let analytic = attention_param_grads(&q, &k, &v, params, causal, Loss::Sum)?;
    let numeric = finite_difference_grads(&q, &k, &v, params, causal, Loss::Sum)?;
    let concat = attention_param_grads_concat(&q, &k, &v, params, n_copies, causal, Loss::Sum)?;
    let fd = rel_diff(analytic.d_mu, numeric.d_mu).max(rel_diff(analytic.d_tau, numeric.d_tau));
    let paths = rel_diff(analytic.d_mu, concat.d_mu).max(rel_diff(analytic.d_tau, concat.d_tau));
    Ok((fd, paths))
}

fn suite_gradient(cfg: &RunConfig, heads: &[HypeHeadParams], c: &mut Checks) -> Result<()> {
    let (mut fd, mut paths) = (0.0f64, 0.0f64);
    for &len in &GRAD_LENS {
        for &d in &GRAD_DIMS {
            for &mu in &GRAD_MUS {
                for &tau in &GRAD_TAUS {
                    let (a, b) = gradient_errors(
                        len,
                        d,
                        HypeHeadParams::new(mu, tau)?,
                        cfg.n_copies,
                        cfg.causal,
                        cfg.seed,
                    )?;
                    fd = fd.max(a);
                    paths = paths.max(b);
                }
            }
        }
    }
    c.at_most("finite_difference[grid]", fd, cfg.tol.grad_fd);
    c.at_most("routes_agree[grid]", paths, cfg.tol.grad_paths);
    for (h, &p) in heads.iter().enumerate() {
        let (a, b) = gradient_errors(
            cfg.len,
            cfg.d,
            p,
            cfg.n_copies,
            cfg.causal,
            cfg.seed.wrapping_add(h as u64),
        )?;
        c.at_most(format!("finite_difference[head {h}]"), a, cfg.tol.grad_fd);
        c.at_most(format!("routes_agree[head {h}]"), b, cfg.tol.grad_paths);
    }
    Ok(())
}

fn suite_degenerate<T: Scalar>(cfg: &RunConfig, c: &mut Checks) -> Result<()> {
    let (q, k, v) = qkv::<T>(cfg.len, cfg.d, cfg.seed.wrapping_add(400))?;
    let zero = HypeHeadParams::new(0.0, 1.0)?;
    let vanilla = attend_vanilla(&q, &k, &v, cfg.causal)?;
    let concat = attend_hype_concat(&q, &k, &v, zero, cfg.n_copies, cfg.causal)?;
    c.at_most(
        "zero_slope_is_vanilla",
        max_rel_error(&concat, &vanilla),
        cfg.tol.degenerate,
    );

    let (q1, k1, v1) = qkv::<T>(1, cfg.d, cfg.seed.wrapping_add(401))?;
    let single = attend_hype_concat(
        &q1,
        &k1,
        &v1,
        HypeHeadParams::new(0.3, 2.0)?,
        cfg.n_copies,
        cfg.causal,
    )?;
    c.holds("single_token", single == v1);

    // Overflow must surface as an error naming the parameters, not as NaN.
    let big = HypeHeadParams::new(10.0, 1.0)?;
    let clean =
        |r: Result<()>| matches!(r, Err(Error::Overflow { mu, len: 128, .. }) if mu == 10.0);
    c.holds(
        "bias_overflow_diagnostic",
        clean(build_bias_hype::<T>(128, big).map(drop)),
    );
    c.holds(
        "eta_overflow_diagnostic",
        clean(build_eta_pair::<T>(128, cfg.d, big, 1).map(drop)),
    );
    Ok(())
}

type SuiteFn<'a> = Box<dyn FnOnce() -> SuiteReport + Send + 'a>;

fn suites_for<'a, T: Scalar>(cfg: &'a RunConfig, heads: &'a [HypeHeadParams]) -> Vec<SuiteFn<'a>> {
    vec![
        Box::new(move || run_suite("equivalence", |c| suite_equivalence::<T>(cfg, heads, c))),
        Box::new(move || run_suite("antisymmetry", |c| suite_antisymmetry::<T>(cfg, heads, c))),
        Box::new(move || run_suite("alibi", |c| suite_alibi(cfg, heads, c))),
        Box::new(move || run_suite("stacking", |c| suite_stacking::<T>(cfg, heads, c))),
        Box::new(move || run_suite("grid", |c| suite_grid::<T>(cfg, heads, c))),
        Box::new(move || run_suite("gradient", |c| suite_gradient(cfg, heads, c))),
        Box::new(move || run_suite("degenerate", |c| suite_degenerate::<T>(cfg, c))),
    ]
}

/// Runs every suite. With `parallel`, suites run on separate threads; the
/// report is assembled in the same fixed order either way.
pub fn run_verify(cfg: &RunConfig, parallel: bool) -> VerifyReport {
    let heads = cfg.head_params();
    let suites = match cfg.width {
        Width::F32 => suites_for::<f32>(cfg, &heads),
        Width::F64 => suites_for::<f64>(cfg, &heads),
    };
    let reports: Vec<SuiteReport> = if parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = suites.into_iter().map(|f| s.spawn(f)).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("verify suite panicked"))
                .collect()
        })
    } else {
        suites.into_iter().map(|f| f()).collect()
    };
    let first_failure = reports.iter().find_map(SuiteReport::first_failure);
    VerifyReport {
        config: cfg.clone(),
        passed: first_failure.is_none(),
        first_failure,
        suites: reports,
    }
}

impl VerifyReport {
    /// One line per check, plus suite-level errors.
    pub fn lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for s in &self.suites {
            out.extend(s.checks.iter().map(|c| c.to_string()));
            if let Some(e) = &s.error {
                out.push(format!("FAIL {}: {e}", s.name));
            }
        }
        out
    }
}
