//! `clab` — run continual-learning experiments from JSON configs.
//!
//! Subcommands: `run` (single experiment), `grid` (moment-policy
//! ablation), `sweep` (task-count comparison), `dump-sequence` (export a
//! generated task sequence), `lr-search` (learning-rate scan). The output
//! directory resolves from `--output-dir`, then `CLAB_OUTPUT_DIR`, then
//! the config's `output_dir` field.

use clap::{Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clab_core::harness::{
    run_ablation_grid, run_experiment_with_scores, run_lr_search, run_taskcount_sweep,
    write_grid_artifacts, write_lr_search_artifacts, write_run_artifacts, write_sweep_artifacts,
    ExperimentConfig, RunResult,
};
use clab_core::synth::generate_sequence;

const OUTPUT_DIR_ENV: &str = "CLAB_OUTPUT_DIR";

#[derive(Parser)]
#[command(
    name = "clab",
    version,
    about = "Continual-learning optimization laboratory"
)]
struct Cli {
    /// Override the output directory (also: CLAB_OUTPUT_DIR).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single experiment and write summary.json plus per-seed
    /// scores.csv files.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the moment-policy ablation (10 optimizer rows plus the pooled
    /// reference, on all three regimes) and write grid.csv.
    Grid {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare the task-averaged optimizer against per-task Adam at a
    /// list of checkpoints and write sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoints as start:end:step or a comma-separated list.
        #[arg(long, default_value = "50:1000:50")]
        checkpoints: String,
    },
    /// Generate the configured task sequence and write it as JSON.
    DumpSequence {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the experiment across candidate learning rates.
    LrSearch {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated learning rates.
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.03,0.1,0.3")]
        alphas: Vec<f64>,
    },
}

fn load_config(path: &Path) -> Result<ExperimentConfig, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    ExperimentConfig::from_json_str(&text).map_err(|e| e.to_string())
}

fn resolve_output_dir(cli_dir: &Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(dir) = cli_dir {
        return dir.clone();
    }
    if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    cfg.output_dir.clone()
}

fn parse_checkpoints(spec: &str) -> Result<Vec<usize>, String> {
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| format!("invalid checkpoint component {s:?}"))
    };
    let parts: Vec<&str> = spec.split(':').collect();
    let list = match parts.as_slice() {
        [single] => single
            .split(',')
            .map(parse)
            .collect::<Result<Vec<_>, _>>()?,
        [start, end, step] => {
            let (start, end, step) = (parse(start)?, parse(end)?, parse(step)?);
            if step == 0 {
                return Err("checkpoint step must be positive".into());
            }
            (start..=end).step_by(step).collect()
        }
        _ => return Err(format!("cannot parse checkpoint spec {spec:?}")),
    };
    if list.is_empty() {
        return Err("checkpoint list is empty".into());
    }
    Ok(list)
}

fn fmt_metric(mean: Option<f64>, se: Option<f64>) -> String {
    match (mean, se) {
        (Some(m), Some(se)) => format!("{m:.6} ± {se:.6}"),
        (Some(m), None) => format!("{m:.6}"),
        _ => "-".into(),
    }
}

fn print_run_summary(label: &str, result: &RunResult) {
    println!(
        "{label}: rp {}  lp {}  bwt {}  fgt {}  ({}/{} seeds, {:.2}s)",
        fmt_metric(result.mean.rp, result.std_error.rp),
        fmt_metric(result.mean.lp, result.std_error.lp),
        fmt_metric(result.mean.bwt, result.std_error.bwt),
        fmt_metric(result.mean.fgt, result.std_error.fgt),
        result.ok_seeds(),
        result.per_seed.len(),
        result.wall_clock_secs,
    );
}

fn execute(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            let dir = resolve_output_dir(&cli.output_dir, &cfg);
            let (result, scores) =
                run_experiment_with_scores(&cfg).map_err(|e| e.to_string())?;
            write_run_artifacts(&dir, &result, &scores).map_err(|e| e.to_string())?;
            print_run_summary("run", &result);
            for seed_run in &result.per_seed {
                if let Some(err) = &seed_run.error {
                    println!("seed {} failed: {err}", seed_run.seed);
                }
            }
            println!("artifacts written to {}", dir.display());
            Ok(())
        }
        Command::Grid { config } => {
            let cfg = load_config(&config)?;
            let dir = resolve_output_dir(&cli.output_dir, &cfg);
            let grid = run_ablation_grid(&cfg).map_err(|e| e.to_string())?;
            for cell in &grid.cells {
                let label = if cell.method_label == "mtl" {
                    format!("row {:>2} mtl             {:>7}", cell.row, cell.regime_label())
                } else {
                    format!(
                        "row {:>2} {:>12}/{:>12}/{:<3} {:>7}",
                        cell.row,
                        cell.first_moment_label(),
                        cell.second_moment_label(),
                        cell.lr_adjust_label(),
                        cell.regime_label()
                    )
                };
                print_run_summary(&label, &cell.result);
            }
            write_grid_artifacts(&dir, &grid).map_err(|e| e.to_string())?;
            println!("artifacts written to {}", dir.display());
            Ok(())
        }
        Command::Sweep { config, checkpoints } => {
            let cfg = load_config(&config)?;
            let dir = resolve_output_dir(&cli.output_dir, &cfg);
            let checkpoints = parse_checkpoints(&checkpoints)?;
            let sweep = run_taskcount_sweep(&cfg, &checkpoints).map_err(|e| e.to_string())?;
            for (i, cp) in sweep.checkpoints.iter().enumerate() {
                println!(
                    "checkpoint {cp:>6}: rp continual {:.6}  rp reset {:.6}  diff {:+.6}",
                    sweep.rp_continual_mean[i], sweep.rp_reset_mean[i], sweep.diff_mean[i]
                );
            }
            if let (Some(rho), Some(p)) = (sweep.spearman_gap_magnitude, sweep.p_value) {
                println!("gap-magnitude trend: spearman {rho:.4}, one-sided p {p:.5}");
            }
            write_sweep_artifacts(&dir, &sweep).map_err(|e| e.to_string())?;
            println!("artifacts written to {}", dir.display());
            Ok(())
        }
        Command::DumpSequence { config, out } => {
            let cfg = load_config(&config)?;
            let sequence = generate_sequence(&cfg.synth).map_err(|e| e.to_string())?;
            let file = fs::File::create(&out)
                .map_err(|e| format!("cannot create {}: {e}", out.display()))?;
            sequence
                .write_json(std::io::BufWriter::new(file))
                .map_err(|e| e.to_string())?;
            let examples: usize = sequence.tasks.iter().map(|t| t.size).sum();
            println!(
                "wrote {} tasks ({examples} examples) to {}",
                sequence.tasks.len(),
                out.display()
            );
            Ok(())
        }
        Command::LrSearch { config, alphas } => {
            let cfg = load_config(&config)?;
            let dir = resolve_output_dir(&cli.output_dir, &cfg);
            let search = run_lr_search(&cfg, &alphas).map_err(|e| e.to_string())?;
            for entry in &search.entries {
                print_run_summary(&format!("alpha {:>10}", entry.alpha), &entry.result);
            }
            write_lr_search_artifacts(&dir, &search).map_err(|e| e.to_string())?;
            println!("artifacts written to {}", dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
