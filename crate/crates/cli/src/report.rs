//! The JSON run report and the per-iteration CSV.

use std::io::Write;

use pint_core::driver::{IterationRecord, RunOutcome, StopReason, Timing};
use pint_core::solver::SequentialSolution;
use serde::Serialize;

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Run,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: Command,
    pub config: RunConfig,
    pub ranks: usize,
    pub records: Vec<IterationRecord>,
    pub iterations: usize,
    pub converged: bool,
    pub stop: Option<StopReason>,
    pub gamma: Option<f64>,
    pub w_norm: f64,
    pub m0: Option<f64>,
    /// Last step block against the step-by-step collocation solution.
    pub final_error: Option<f64>,
    /// Final value against the exact solution.
    pub exact_error: Option<f64>,
    /// Real and imaginary parts of the final value, componentwise.
    pub final_value: Vec<[f64; 2]>,
    pub timing: Timing,
    pub gmres_iterations: usize,
}

fn pairs(v: &[num_complex::Complex64]) -> Vec<[f64; 2]> {
    v.iter().map(|c| [c.re, c.im]).collect()
}

impl RunReport {
    pub fn from_run(config: &RunConfig, ranks: usize, run: RunOutcome, dim: usize) -> Self {
        let last = run.blocks.last().expect("at least one step");
        let gmres_iterations = run.outcome.records.iter().map(|r| r.gmres_iters).sum();
        RunReport {
            schema_version: SCHEMA_VERSION,
            command: Command::Run,
            config: config.clone(),
            ranks,
            iterations: run.outcome.records.len(),
            converged: run.outcome.converged,
            stop: Some(run.outcome.stop),
            gamma: Some(run.outcome.gamma),
            w_norm: run.w_norm,
            m0: Some(run.m0),
            final_error: run.final_error,
            exact_error: run.exact_error,
            final_value: pairs(&last[last.len() - dim..]),
            timing: run.outcome.timing,
            gmres_iterations,
            records: run.outcome.records,
        }
    }

    pub fn from_baseline(config: &RunConfig, seq: &SequentialSolution, w_norm: f64, dim: usize) -> Self {
        RunReport {
            schema_version: SCHEMA_VERSION,
            command: Command::Baseline,
            config: config.clone(),
            ranks: 1,
            records: Vec::new(),
            iterations: 0,
            converged: true,
            stop: None,
            gamma: None,
            w_norm,
            m0: None,
            final_error: Some(0.0),
            exact_error: seq.final_error,
            final_value: pairs(seq.final_value(dim)),
            timing: Timing {
                transform_s: 0.0,
                solve_s: seq.solve_s,
                comm_s: 0.0,
            },
            gmres_iterations: seq.step_stats.iter().map(|s| s.gmres_iterations).sum(),
        }
    }

    /// Zeroes every wall-clock field so reports can be compared bytewise.
    pub fn normalize_timings(&mut self) {
        self.timing = Timing::default();
        for r in &mut self.records {
            r.wall_s = 0.0;
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

#[derive(Serialize)]
struct CsvRow {
    k: usize,
    alpha: f64,
    m_k: f64,
    consec_diff: f64,
    true_err: Option<f64>,
    gmres_iters: usize,
    wall_s: f64,
}

pub fn write_csv<W: Write>(records: &[IterationRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(CsvRow {
            k: r.k,
            alpha: r.alpha,
            m_k: r.m_k,
            consec_diff: r.consec_diff,
            true_err: r.true_err,
            gmres_iters: r.gmres_iters,
            wall_s: r.wall_s,
        })?;
    }
    w.flush()?;
    Ok(())
}
