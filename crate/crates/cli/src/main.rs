use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use csi_align::sim_harness::summary::{converged, converged_perfect};
use csi_align::sim_harness::{emit, run_scenario, MsType, RunOutput, ScenarioConfig};
use csi_align::{selftest, Error, Result};

/// Downlink CSI acquisition simulator (path-aligned pilots, Kalman tracking,
/// compressed feedback).
#[derive(Parser, Debug)]
#[command(name = "csi-align", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write results.csv / results.json.
    Simulate {
        /// TOML scenario file; omitted sections take the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated seed list, replaces `run.seeds`.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// `section.key=value`, repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run a scenario once per value of one parameter.
    Sweep {
        /// `key=v1,v2,...`; `L` means scalars per tap (smart MS) or the
        /// total budget (dumb MS).
        #[arg(long)]
        param: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run the built-in property checks.
    Selftest,
}

fn load_config(
    path: Option<&PathBuf>,
    seeds: &[u64],
    overrides: &[String],
) -> Result<ScenarioConfig> {
    let base = match path {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    let mut all = overrides.to_vec();
    if !seeds.is_empty() {
        let list: Vec<String> = seeds.iter().map(u64::to_string).collect();
        all.push(format!("run.seeds=[{}]", list.join(",")));
    }
    let cfg = base.with_overrides(&all)?;
    cfg.validate()?;
    Ok(cfg)
}

fn summarize(out: &RunOutput) -> String {
    let window = 10.min(out.config.run.num_rs);
    let bs = converged(&out.records, 0, window, |r| Some(r.nmse_bs));
    let ms = converged(&out.records, 0, window, |r| Some(r.nmse_ms));
    let mut line = format!(
        "user 0 converged NMSE: MS {:.4e}, BS {:.4e} (±{:.1e})",
        ms.mean, bs.mean, bs.stderr
    );
    if out.config.se_enabled() {
        let zf = converged(&out.records, 0, window, |r| r.se_zf_sum);
        let mf = converged(&out.records, 0, window, |r| r.se_mf_sum);
        let perfect = converged_perfect(&out.perfect_se, window, true);
        line += &format!(
            "; sum SE ZF {:.2} MF {:.2} (perfect-CSI ZF {:.2}) bit/s/Hz",
            zf.mean, mf.mean, perfect.mean
        );
    }
    line
}

fn simulate(cfg: ScenarioConfig, out: &PathBuf) -> Result<()> {
    let result = run_scenario(&cfg)?;
    let (csv, json) = emit(&result, out)?;
    println!("{}", summarize(&result));
    println!(
        "wrote {} ({} rows) and {}",
        csv.display(),
        result.records.len(),
        json.display()
    );
    Ok(())
}

fn parse_param(param: &str) -> Result<(String, Vec<String>)> {
    let (key, values) = param
        .split_once('=')
        .ok_or_else(|| Error::Validation(format!("--param `{param}` is not key=v1,v2")))?;
    let values: Vec<String> = values
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(Error::Validation("--param needs at least one value".into()));
    }
    Ok((key.trim().to_string(), values))
}

fn sweep(base: ScenarioConfig, param: &str, out: &PathBuf) -> Result<()> {
    let (key, values) = parse_param(param)?;
    let key = match key.as_str() {
        "L" if base.feedback.ms_type == MsType::Smart => "feedback.scalars_per_tap".to_string(),
        "L" => "feedback.budget".to_string(),
        _ => key,
    };
    for v in &values {
        let cfg = base.with_overrides(&[format!("{key}={v}")])?;
        cfg.validate()?;
        let result = run_scenario(&cfg)?;
        let dir = out.join(format!("{key}={v}"));
        emit(&result, &dir)?;
        println!("{key}={v}: {}", summarize(&result));
    }
    println!("wrote {} runs under {}", values.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate {
            config,
            seeds,
            out,
            overrides,
        } => {
            simulate(load_config(config.as_ref(), &seeds, &overrides)?, &out)?;
        }
        Command::Sweep {
            param,
            config,
            seeds,
            out,
            overrides,
        } => {
            sweep(
                load_config(config.as_ref(), &seeds, &overrides)?,
                &param,
                &out,
            )?;
        }
        Command::Selftest => {
            let results = selftest::run_all();
            for r in &results {
                println!(
                    "{:<28} {}  {}",
                    r.name,
                    if r.passed { "ok" } else { "FAILED" },
                    r.detail
                );
            }
            return Ok(results.iter().all(|r| r.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        // A failed property check is a numerical failure.
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
