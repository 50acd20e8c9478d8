//! Explicit bias dumps in CSV or JSON.
//!
//! CSV is one line per row, comma separated, no header, every value in the
//! shortest decimal form that parses back to the same float at the storage
//! width. JSON carries the parameters alongside the rows.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::encoding::{build_bias_hype, HypeHeadParams};
use crate::tensor::{Scalar, Width};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpFormat {
    Csv,
    Json,
}

impl FromStr for DumpFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DumpFormat::Csv),
            "json" => Ok(DumpFormat::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BiasDump<T> {
    #[serde(rename = "L")]
    pub len: usize,
    pub mu: f64,
    pub tau: f64,
    pub width: Width,
    pub values: Vec<Vec<T>>,
}

fn render<T: Scalar>(
    len: usize,
    params: HypeHeadParams,
    format: DumpFormat,
) -> Result<String, HarnessError> {
    let bias = build_bias_hype::<T>(len, params)?;
    Ok(match format {
        DumpFormat::Csv => {
            let mut out = String::new();
            for i in 0..len {
                let row: Vec<String> = bias.values.row(i).iter().map(|x| x.to_string()).collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
            out
        }
        DumpFormat::Json => {
            let dump = BiasDump {
                len,
                mu: params.mu,
                tau: params.tau,
                width: T::WIDTH,
                values: (0..len).map(|i| bias.values.row(i).to_vec()).collect(),
            };
            serde_json::to_string(&dump).expect("bias dump serialises") + "\n"
        }
    })
}

/// Renders `-tau * sinh(mu (j - i))` for an `len x len` bias.
pub fn bias_dump(
    len: usize,
    mu: f64,
    tau: f64,
    width: Width,
    format: DumpFormat,
) -> Result<String, HarnessError> {
    let params = HypeHeadParams::new(mu, tau)?;
    match width {
        Width::F32 => render::<f32>(len, params, format),
        Width::F64 => render::<f64>(len, params, format),
    }
}

/// Parses a CSV dump back into rows.
pub fn parse_csv(text: &str) -> Result<Vec<Vec<f64>>, HarnessError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            line.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| HarnessError::Failed(format!("bad CSV value `{v}`")))
                })
                .collect()
        })
        .collect()
}

/// Parses a JSON dump back into rows.
pub fn parse_json(text: &str) -> Result<BiasDump<f64>, HarnessError> {
    serde_json::from_str(text).map_err(|e| HarnessError::Failed(format!("bad JSON dump: {e}")))
}
