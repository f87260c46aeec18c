//! Artifact files: CSV tables and JSON summaries.
//!
//! Every file starts with comment lines embedding the resolved config and
//! seed list, so any artifact can be reproduced byte-for-byte from its own
//! header. Nothing time- or host-dependent is written.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::{ExperimentConfig, GridOutcome, LrSearchResult, RunResult, SweepResult};

pub fn canonical_config_json(cfg: &ExperimentConfig) -> Result<String> {
    serde_json::to_string(cfg).map_err(|e| Error::Config(e.to_string()))
}

/// Content hash of the resolved configuration (sha256 of its canonical
/// JSON form).
pub fn config_fingerprint(cfg: &ExperimentConfig) -> Result<String> {
    let json = canonical_config_json(cfg)?;
    let digest = Sha256::digest(json.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn provenance_header(cfg: &ExperimentConfig) -> Result<String> {
    let json = canonical_config_json(cfg)?;
    let seeds: Vec<String> = cfg.seeds.iter().map(|s| s.to_string()).collect();
    Ok(format!(
        "# config = {json}\n# seeds = [{}]\n",
        seeds.join(",")
    ))
}

/// Render one seed's score matrix as CSV with the provenance header.
pub fn render_scores_csv(
    cfg: &ExperimentConfig,
    seed: u64,
    matrix: &crate::metrics::ScoreMatrix,
) -> Result<String> {
    let mut out = provenance_header(cfg)?;
    out.push_str(&format!("# seed = {seed}\n"));
    let mut buf = Vec::new();
    matrix.write_scores_csv(&mut buf)?;
    out.push_str(&String::from_utf8(buf).expect("csv is utf-8"));
    Ok(out)
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, json + "\n")?;
    Ok(())
}

/// Write `summary.json` plus one `seed_<s>/scores.csv` per seed.
pub fn write_run_artifacts(
    dir: &Path,
    result: &RunResult,
    per_seed_scores: &[(u64, String)],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json_file(&dir.join("summary.json"), result)?;
    for (seed, csv) in per_seed_scores {
        let seed_dir = dir.join(format!("seed_{seed}"));
        fs::create_dir_all(&seed_dir)?;
        fs::write(seed_dir.join("scores.csv"), csv)?;
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write `grid.csv` (one row per ablation cell, RP/LP columns per regime)
/// and `grid_summary.json`.
pub fn write_grid_artifacts(dir: &Path, grid: &GridOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv = provenance_header(&grid.base_config)?;
    csv.push_str(
        "row,method,first_moment,second_moment,lr_adjust,\
         rp_same,rp_same_se,rp_perturb,rp_perturb_se,rp_shift,rp_shift_se,\
         lp_same,lp_same_se,lp_perturb,lp_perturb_se,lp_shift,lp_shift_se\n",
    );
    for row in grid.rows() {
        let cells = grid.row_cells(row);
        let first = cells.first().expect("grid rows are non-empty");
        let mut line = format!(
            "{row},{},{},{},{}",
            first.method_label,
            first.first_moment_label(),
            first.second_moment_label(),
            first.lr_adjust_label()
        );
        for metric in ["rp", "lp"] {
            for cell in &cells {
                let (m, se) = match metric {
                    "rp" => (cell.result.mean.rp, cell.result.std_error.rp),
                    _ => (cell.result.mean.lp, cell.result.std_error.lp),
                };
                line.push_str(&format!(",{},{}", fmt_opt(m), fmt_opt(se)));
            }
        }
        csv.push_str(&line);
        csv.push('\n');
    }
    fs::write(dir.join("grid.csv"), csv)?;
    write_json_file(&dir.join("grid_summary.json"), grid)?;
    Ok(())
}

/// Write `sweep.csv` (per checkpoint RPs and their difference) and
/// `sweep_summary.json`.
pub fn write_sweep_artifacts(dir: &Path, sweep: &SweepResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv = provenance_header(&sweep.base_config)?;
    csv.push_str("checkpoint,rp_continual,rp_reset,diff,diff_se\n");
    for (i, cp) in sweep.checkpoints.iter().enumerate() {
        csv.push_str(&format!(
            "{cp},{},{},{},{}\n",
            sweep.rp_continual_mean[i],
            sweep.rp_reset_mean[i],
            sweep.diff_mean[i],
            fmt_opt(sweep.diff_se[i]),
        ));
    }
    fs::write(dir.join("sweep.csv"), csv)?;
    write_json_file(&dir.join("sweep_summary.json"), sweep)?;
    Ok(())
}

/// Write `lr_search.csv`, one row per candidate learning rate.
pub fn write_lr_search_artifacts(dir: &Path, search: &LrSearchResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv = provenance_header(&search.base_config)?;
    csv.push_str("alpha,rp_mean,rp_se,lp_mean,lp_se\n");
    for entry in &search.entries {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            entry.alpha,
            fmt_opt(entry.result.mean.rp),
            fmt_opt(entry.result.std_error.rp),
            fmt_opt(entry.result.mean.lp),
            fmt_opt(entry.result.std_error.lp),
        ));
    }
    fs::write(dir.join("lr_search.csv"), csv)?;
    write_json_file(&dir.join("lr_search_summary.json"), search)?;
    Ok(())
}
