//! Flat `key = value` run configuration shared by `verify` and `bench`.
//!
//! ```text
//! # comments start with '#'
//! L = 128
//! d = 16
//! heads = 4
//! mu = auto:256          # or one value, or a comma list with one per head
//! tau = 1                # one value or one per head
//! n_copies = 1
//! causal = false
//! width = f64
//! seed = 0
//! trials = 5
//! tol.identity = 1e-12   # any tolerance may be overridden
//! ```

use std::path::Path;

use serde::Serialize;

use super::HarnessError;
use crate::attention::AttentionConfig;
use crate::encoding::{recommend_mu_schedule, HypeHeadParams};
use crate::tensor::Width;

/// How per-head slopes are chosen.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum MuSpec {
    /// Geometric schedule for the given extrapolation length.
    Auto { l_extra: usize },
    /// One value broadcast to every head, or one per head.
    Explicit(Vec<f64>),
}

/// Pass thresholds for the verify suites. Errors are max-norm relative
/// unless noted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Augmented-product identity, per-entry scaled relative error.
    pub identity: f64,
    /// Concat-path vs explicit-bias attention outputs.
    pub cross_path: f64,
    pub stacking: f64,
    pub multihead: f64,
    pub grid: f64,
    /// Zero slope vs vanilla attention.
    pub degenerate: f64,
    /// Analytic vs central finite-difference gradients.
    pub grad_fd: f64,
    /// Concat-route vs explicit-route analytic gradients.
    pub grad_paths: f64,
    /// Allowed excess over the leading `|x|^3 / 6` term of `sinh(x) - x`.
    pub alibi_slack: f64,
}

impl Tolerances {
    pub fn for_width(width: Width) -> Self {
        let (identity, outputs) = match width {
            Width::F64 => (1e-12, 1e-12),
            Width::F32 => (1e-4, 1e-3),
        };
        Self {
            identity,
            cross_path: outputs,
            stacking: outputs,
            multihead: outputs,
            grid: outputs,
            degenerate: outputs,
            // Gradient suites always run in f64.
            grad_fd: 1e-5,
            grad_paths: 1e-10,
            alibi_slack: 0.01,
        }
    }

    fn set(&mut self, key: &str, value: f64) -> bool {
        let slot = match key {
            "identity" => &mut self.identity,
            "cross_path" => &mut self.cross_path,
            "stacking" => &mut self.stacking,
            "multihead" => &mut self.multihead,
            "grid" => &mut self.grid,
            "degenerate" => &mut self.degenerate,
            "grad_fd" => &mut self.grad_fd,
            "grad_paths" => &mut self.grad_paths,
            "alibi_slack" => &mut self.alibi_slack,
            _ => return false,
        };
        *slot = value;
        true
    }

    pub const KEYS: [&'static str; 9] = [
        "identity",
        "cross_path",
        "stacking",
        "multihead",
        "grid",
        "degenerate",
        "grad_fd",
        "grad_paths",
        "alibi_slack",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    #[serde(rename = "L")]
    pub len: usize,
    pub d: usize,
    pub heads: usize,
    pub mu: MuSpec,
    pub tau: Vec<f64>,
    pub n_copies: usize,
    pub causal: bool,
    pub width: Width,
    pub seed: u64,
    pub trials: usize,
    pub tol: Tolerances,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            len: 128,
            d: 16,
            heads: 4,
            mu: MuSpec::Auto { l_extra: 256 },
            tau: vec![1.0],
            n_copies: 1,
            causal: false,
            width: Width::F64,
            seed: 0,
            trials: 5,
            tol: Tolerances::for_width(Width::F64),
        }
    }
}

fn bad(line: usize, msg: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(format!("line {line}: {msg}"))
}

fn parse_num<N: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<N, HarnessError> {
    value
        .parse()
        .map_err(|_| bad(line, format!("`{key}` expects a number, got `{value}`")))
}

fn parse_list(line: usize, key: &str, value: &str) -> Result<Vec<f64>, HarnessError> {
    value
        .split(',')
        .map(|v| parse_num::<f64>(line, key, v.trim()))
        .collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = RunConfig::default();
        let mut width_set = false;
        let mut overrides: Vec<(usize, String, f64)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| bad(line, format!("expected `key = value`, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "L" => cfg.len = parse_num(line, key, value)?,
                "d" => cfg.d = parse_num(line, key, value)?,
                "heads" => cfg.heads = parse_num(line, key, value)?,
                "mu" => {
                    cfg.mu = match value.strip_prefix("auto:") {
                        Some(l) => MuSpec::Auto {
                            l_extra: parse_num(line, "mu auto", l.trim())?,
                        },
                        None => MuSpec::Explicit(parse_list(line, key, value)?),
                    }
                }
                "tau" => cfg.tau = parse_list(line, key, value)?,
                "n_copies" => cfg.n_copies = parse_num(line, key, value)?,
                "causal" => {
                    cfg.causal = match value {
                        "true" | "1" | "yes" => true,
                        "false" | "0" | "no" => false,
                        _ => {
                            return Err(bad(
                                line,
                                format!("`causal` expects true/false, got `{value}`"),
                            ))
                        }
                    }
                }
                "width" => {
                    cfg.width = value.parse().map_err(|e| bad(line, e))?;
                    width_set = true;
                }
                "seed" => cfg.seed = parse_num(line, key, value)?,
                "trials" => cfg.trials = parse_num(line, key, value)?,
                _ => match key.strip_prefix("tol.") {
                    Some(name) if Tolerances::KEYS.contains(&name) => {
                        overrides.push((line, name.to_string(), parse_num(line, key, value)?))
                    }
                    _ => return Err(bad(line, format!("unknown key `{key}`"))),
                },
            }
        }
        if width_set {
            cfg.tol = Tolerances::for_width(cfg.width);
        }
        for (line, name, value) in overrides {
            if value.is_nan() || value < 0.0 {
                return Err(bad(line, format!("tolerance `{name}` must be >= 0")));
            }
            cfg.tol.set(&name, value);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Switches storage width, resetting tolerances to that width's defaults.
    pub fn with_width(mut self, width: Width) -> Self {
        if width != self.width {
            self.width = width;
            self.tol = Tolerances::for_width(width);
        }
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.len == 0 || self.d == 0 || self.heads == 0 || self.n_copies == 0 || self.trials == 0
        {
            return Err(HarnessError::Config(
                "L, d, heads, n_copies and trials must all be >= 1".into(),
            ));
        }
        let per_head = |what: &str, n: usize| -> Result<(), HarnessError> {
            if n == 1 || n == self.heads {
                Ok(())
            } else {
                Err(HarnessError::Config(format!(
                    "{what} lists {n} values for {} heads",
                    self.heads
                )))
            }
        };
        match &self.mu {
            MuSpec::Auto { l_extra } if *l_extra == 0 => {
                return Err(HarnessError::Config(
                    "mu = auto:L_extra needs L_extra >= 1".into(),
                ))
            }
            MuSpec::Explicit(v) => per_head("mu", v.len())?,
            MuSpec::Auto { .. } => {}
        }
        per_head("tau", self.tau.len())?;
        let finite = match &self.mu {
            MuSpec::Explicit(v) => v.iter().chain(&self.tau).all(|x| x.is_finite()),
            MuSpec::Auto { .. } => self.tau.iter().all(|x| x.is_finite()),
        };
        if !finite {
            return Err(HarnessError::Config("mu and tau must be finite".into()));
        }
        Ok(())
    }

    pub fn head_params(&self) -> Vec<HypeHeadParams> {
        let mus: Vec<f64> = match &self.mu {
            MuSpec::Auto { l_extra } => recommend_mu_schedule(self.heads, *l_extra)
                .expect("validated schedule inputs")
                .into_iter()
                .map(|p| p.mu)
                .collect(),
            MuSpec::Explicit(v) => v.clone(),
        };
        let pick = |v: &[f64], h: usize| if v.len() == 1 { v[0] } else { v[h] };
        (0..self.heads)
            .map(|h| HypeHeadParams {
                mu: pick(&mus, h),
                tau: pick(&self.tau, h),
            })
            .collect()
    }

    pub fn attention_config(&self) -> AttentionConfig {
        AttentionConfig {
            seq_len: self.len,
            head_dim: self.d,
            n_heads: self.heads,
            heads: self.head_params(),
            causal: self.causal,
            n_copies: self.n_copies,
            width: self.width,
        }
    }
}
