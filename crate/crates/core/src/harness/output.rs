//! CSV and JSON emission. Floats use Rust's shortest round-trip formatting,
//! so identical results give identical bytes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::detection::CyberMode;

use super::bench::ScalingRow;
use super::experiment::{PolicyReport, RunReport};
use super::{HarnessError, HarnessResult};

pub const COST_SERIES_HEADER: &str = "k,policy,expected_cost";
pub const MODEL_COST_HEADER: &str = "k,policy,model_cost";
pub const MODE_PROB_HEADER: &str = "k,policy,p_safe,p_nodetect,p_false";
pub const STRATEGY_HEADER: &str = "policy,stage,mode,player,action_index,probability";
pub const SCALING_HEADER: &str = "K,wall_time_alg2_s,wall_time_alg1_s";

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> HarnessResult<()> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = BufWriter::new(file);
    body(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| HarnessError::io(path, e))
}

fn series(
    path: &Path,
    header: &str,
    policies: &[PolicyReport],
    values: impl Fn(&PolicyReport) -> &[f64],
) -> HarnessResult<()> {
    write_file(path, |out| {
        writeln!(out, "{header}")?;
        for p in policies {
            for (k, v) in values(p).iter().enumerate() {
                writeln!(out, "{k},{},{v:?}", p.name)?;
            }
        }
        Ok(())
    })
}

/// Writes `cost_series.csv`, `model_cost_series.csv`, `mode_prob.csv`,
/// `strategy_series.csv` and `report.json` into `outdir`; returns the paths.
pub fn emit_plot_data(report: &RunReport, outdir: &Path) -> HarnessResult<Vec<PathBuf>> {
    fs::create_dir_all(outdir).map_err(|e| HarnessError::io(outdir, e))?;
    let mut written = Vec::new();

    let path = outdir.join("cost_series.csv");
    series(&path, COST_SERIES_HEADER, &report.policies, |p| &p.mc_cost)?;
    written.push(path);

    let path = outdir.join("model_cost_series.csv");
    series(&path, MODEL_COST_HEADER, &report.policies, |p| &p.model_cost)?;
    written.push(path);

    let path = outdir.join("mode_prob.csv");
    write_file(&path, |out| {
        writeln!(out, "{MODE_PROB_HEADER}")?;
        for p in &report.policies {
            for (k, d) in p.mode_prob.iter().enumerate() {
                writeln!(out, "{k},{},{:?},{:?},{:?}", p.name, d[0], d[1], d[2])?;
            }
        }
        Ok(())
    })?;
    written.push(path);

    let path = outdir.join("strategy_series.csv");
    write_file(&path, |out| {
        writeln!(out, "{STRATEGY_HEADER}")?;
        for p in &report.policies {
            for (k, profile) in p.strategies.iter().enumerate() {
                for mode in CyberMode::ALL {
                    let l = mode.index();
                    for (player, dist) in [("attacker", &profile.f[l]), ("system", &profile.g[l])] {
                        for (idx, prob) in dist.iter().enumerate() {
                            writeln!(out, "{},{k},{mode},{player},{},{prob:?}", p.name, idx + 1)?;
                        }
                    }
                }
            }
        }
        Ok(())
    })?;
    written.push(path);

    let path = outdir.join("report.json");
    let json = serde_json::to_string_pretty(report).map_err(|e| HarnessError::io(&path, e.into()))?;
    write_file(&path, |out| writeln!(out, "{json}"))?;
    written.push(path);
    Ok(written)
}

/// `scaling.csv`; a blank field means the algorithm was not timed at that K.
pub fn write_scaling_csv(rows: &[ScalingRow], path: &Path) -> HarnessResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let cell = |v: Option<f64>| v.map(|t| format!("{t:?}")).unwrap_or_default();
    write_file(path, |out| {
        writeln!(out, "{SCALING_HEADER}")?;
        for r in rows {
            writeln!(out, "{},{},{}", r.k, cell(r.wall_time_alg2_s), cell(r.wall_time_alg1_s))?;
        }
        Ok(())
    })
}
