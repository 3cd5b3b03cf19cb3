//! Experiment runner: configuration ingestion, orchestration, deterministic
//! seeding, and machine-readable result emission (fixed-schema CSV plus a
//! summary JSON with every verdict).

pub mod config;
pub mod experiments;
pub mod output;

use std::path::Path;

use config::{Overrides, RunPlan};
use experiments::ExperimentResult;
use output::{render_csv, render_summary, Row, Summary, VerdictOut};

/// Exit codes: 0 all verdicts pass, 1 any verdict fails, 2 on configuration
/// or execution errors.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VERDICT_FAIL: i32 = 1;
pub const EXIT_CONFIG_ERROR: i32 = 2;

/// Run a resolved plan and write `<prefix>.csv` and `<prefix>.summary.json`.
/// Nothing is written until every experiment has finished.
pub fn execute(plan: &RunPlan) -> Result<bool, String> {
    let mut results: Vec<ExperimentResult> = Vec::with_capacity(plan.experiments.len());
    for cfg in &plan.experiments {
        let res = experiments::run_experiment(cfg)
            .map_err(|e| format!("experiment {} failed: {e}", cfg.experiment.name()))?;
        results.push(res);
    }
    let rows: Vec<Row> = results.iter().flat_map(|r| r.rows.clone()).collect();
    let verdicts: Vec<VerdictOut> = results.iter().flat_map(|r| r.verdicts.clone()).collect();
    let all_pass = verdicts.iter().all(|v| v.pass);

    let csv = render_csv(&rows);
    let summary = render_summary(&Summary {
        seed: plan.seed,
        all_pass,
        csv_rows: rows.len(),
        configs: &plan.experiments,
        verdicts: &verdicts,
    });
    write_output(&format!("{}.csv", plan.output), &csv)?;
    write_output(&format!("{}.summary.json", plan.output), &summary)?;
    Ok(all_pass)
}

fn write_output(path: &str, contents: &str) -> Result<(), String> {
    if let Some(parent) = Path::new(path).parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| format!("cannot create output directory {parent:?}: {e}"))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| format!("cannot write {path}: {e}"))
}

/// Full pipeline from config text and overrides to an exit code, printing a
/// short verdict report to stdout.
pub fn run_from_text(text: &str, overrides: &Overrides) -> i32 {
    let plan = match config::load_config(text, overrides) {
        Ok(plan) => plan,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG_ERROR;
        }
    };
    match execute(&plan) {
        Ok(all_pass) => {
            println!(
                "wrote {}.csv and {}.summary.json ({})",
                plan.output,
                plan.output,
                if all_pass {
                    "all verdicts pass"
                } else {
                    "some verdicts FAILED"
                }
            );
            if all_pass {
                EXIT_OK
            } else {
                EXIT_VERDICT_FAIL
            }
        }
        Err(e) => {
            eprintln!("{e}");
            EXIT_CONFIG_ERROR
        }
    }
}
