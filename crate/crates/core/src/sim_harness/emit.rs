//! CSV result table and JSON sidecar.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::run::{PerfectSe, ResultRecord, RunOutput, UserSupport};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str =
    "seed,user,rs_index,delta_used,nmse_ms,nmse_bs,se_mf_sum,se_zf_sum,feedback_scalars,bit_cost_dl";

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Shortest round-trip formatting keeps the table deterministic and exact.
fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn to_csv(records: &[ResultRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{:e},{:e},{},{},{},{}",
            r.seed,
            r.user,
            r.rs_index,
            r.delta_used,
            r.nmse_ms,
            r.nmse_bs,
            opt(r.se_mf_sum),
            opt(r.se_zf_sum),
            r.feedback_scalars,
            r.bit_cost_dl
        );
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Serialization("unexpected CSV header".into()));
    }
    let bad = |line: &str| Error::Serialization(format!("malformed CSV row `{line}`"));
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(bad(line));
            }
            let int = |s: &str| s.parse::<u64>().map_err(|_| bad(line));
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
            let optnum = |s: &str| {
                if s.is_empty() {
                    Ok(None)
                } else {
                    num(s).map(Some)
                }
            };
            Ok(ResultRecord {
                seed: int(f[0])?,
                user: int(f[1])? as usize,
                rs_index: int(f[2])? as usize,
                delta_used: int(f[3])? as usize,
                nmse_ms: num(f[4])?,
                nmse_bs: num(f[5])?,
                se_mf_sum: optnum(f[6])?,
                se_zf_sum: optnum(f[7])?,
                feedback_scalars: int(f[8])? as usize,
                bit_cost_dl: int(f[9])? as usize,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub version: String,
    pub config: ScenarioConfig,
    pub pilot_noise_var: f64,
    pub data_noise_var: f64,
    pub delta_values: Vec<usize>,
    pub supports: Vec<UserSupport>,
    pub perfect_se: Vec<PerfectSe>,
    pub zf_regularized: usize,
}

impl Sidecar {
    pub fn new(out: &RunOutput) -> Result<Self> {
        let cfg = &out.config;
        Ok(Self {
            version: VERSION.to_string(),
            config: cfg.clone(),
            pilot_noise_var: cfg.pilot_noise_var(),
            data_noise_var: cfg.data_noise_var(),
            delta_values: cfg.delta_schedule()?.values(),
            supports: out.supports.clone(),
            perfect_se: out.perfect_se.clone(),
            zf_regularized: out.zf_regularized,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// Writes `results.csv` and `results.json` into `dir`.
pub fn emit(out: &RunOutput, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv = dir.join("results.csv");
    let json = dir.join("results.json");
    std::fs::write(&csv, to_csv(&out.records))?;
    std::fs::write(&json, Sidecar::new(out)?.to_json()?)?;
    Ok((csv, json))
}
