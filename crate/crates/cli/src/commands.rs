//! The subcommands, independent of argument parsing.

use pint_core::driver::{run_serial, AlphaMode, DriverSettings, Prepared};
use pint_core::problems::{blocks_norm_inf, composite_rhs};
use pint_core::runtime::{block_on, run_loopback, run_parallel, RankTopology, TcpTransport};
use pint_core::schedule::{AlphaSchedule, ScheduleStep};
use pint_core::solver::{sequential_solve, AlphaGuard, ALPHA_MARGIN};
use pint_core::spectral::{defective_shifts, forbidden_alphas, ForbiddenAlpha};
use pint_core::{PintError, Result};
use serde::Serialize;

use crate::config::{RunConfig, TransportKind};
use crate::report::RunReport;

/// Runs the iteration. Under TCP only rank 0 returns a report.
pub fn run(config: &RunConfig) -> Result<Option<RunReport>> {
    config.validate()?;
    let settings = config.settings();
    let prepared = Prepared::new(config.problem()?, config.tableau()?, &settings)?;
    let dim = prepared.ivp.dim;
    match config.transport {
        TransportKind::Serial => {
            let out = run_serial(&prepared, &settings)?;
            Ok(Some(RunReport::from_run(config, 1, out, dim)))
        }
        TransportKind::Loopback => {
            let out = run_loopback(&prepared, &settings, config.n_step(), config.n_coll)?;
            let ranks = config.n_step() * config.n_coll;
            Ok(Some(RunReport::from_run(config, ranks, out.outcome, dim)))
        }
        TransportKind::Tcp => {
            let transport = TcpTransport::from_env()?;
            let topo = RankTopology::new(
                config.n_step(),
                config.n_coll,
                config.stages,
                pint_core::runtime::Transport::rank(&transport),
            )?;
            let size = pint_core::runtime::Transport::size(&transport);
            if size != topo.size() {
                return Err(PintError::Config(format!(
                    "{size} ranks launched but n_step * n_coll = {}",
                    topo.size()
                )));
            }
            let out = block_on(run_parallel(&prepared, &settings, topo, &transport))?;
            Ok(out.map(|o| RunReport::from_run(config, size, o, dim)))
        }
    }
}

/// Solves the composite system step by step.
pub fn baseline(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let ivp = config.problem()?;
    let tableau = config.tableau()?;
    let w = composite_rhs(&ivp, &ivp.grid, &tableau)?;
    let seq = sequential_solve(&ivp, &ivp.grid, &tableau, config.tau_inner)?;
    Ok(RunReport::from_baseline(config, &seq, blocks_norm_inf(&w), ivp.dim))
}

fn prepare_without_reference(config: &RunConfig) -> Result<(Prepared, DriverSettings)> {
    config.validate()?;
    let settings = DriverSettings {
        reference: false,
        ..config.settings()
    };
    let prepared = Prepared::new(config.problem()?, config.tableau()?, &settings)?;
    Ok((prepared, settings))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchedulePreview {
    pub gamma: f64,
    pub m0: f64,
    pub steps: Vec<ScheduleStep>,
}

/// `(k, alpha_k, m_k)` of the adaptive schedule until `m_k <= tol`,
/// without solving anything.
pub fn schedule(config: &RunConfig) -> Result<SchedulePreview> {
    let (prepared, settings) = prepare_without_reference(config)?;
    let sc = prepared.schedule_config(&settings);
    Ok(SchedulePreview {
        gamma: sc.gamma(),
        m0: sc.m0,
        steps: AlphaSchedule::preview(&sc, settings.max_iterations)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlaggedAlpha {
    pub k: usize,
    pub alpha: f64,
    pub alpha_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaAnalysis {
    /// Radii from the published closed-form polynomial's discriminant roots.
    pub forbidden: Vec<ForbiddenAlpha>,
    /// Radii at which the inner matrix is actually defective.
    pub defective: Vec<ForbiddenAlpha>,
    pub margin: f64,
    /// Planned `alpha_k` within the margin of a defective radius.
    pub flagged: Vec<FlaggedAlpha>,
}

pub fn analyze_alpha(config: &RunConfig) -> Result<AlphaAnalysis> {
    let tableau = config.tableau()?;
    let forbidden = forbidden_alphas(&tableau, config.steps)?;
    let defective = defective_shifts(&tableau, config.steps)?;
    let guard = AlphaGuard {
        radii: defective.iter().map(|f| f.alpha_star).collect(),
        margin: ALPHA_MARGIN,
    };
    let planned: Vec<f64> = match &config.alpha_mode {
        AlphaMode::Adaptive => schedule(config)?.steps.iter().map(|s| s.alpha).collect(),
        AlphaMode::Fixed(a) => vec![*a],
        AlphaMode::Sequence(v) => v.clone(),
    };
    let flagged = planned
        .iter()
        .enumerate()
        .filter_map(|(i, &alpha)| {
            guard.violation(alpha).map(|alpha_star| FlaggedAlpha {
                k: i + 1,
                alpha,
                alpha_star,
            })
        })
        .collect();
    Ok(AlphaAnalysis {
        forbidden,
        defective,
        margin: ALPHA_MARGIN,
        flagged,
    })
}

/// Process exit code for an error: 1 for configuration, 3 for solver
/// failures.
pub fn exit_code(err: &PintError) -> i32 {
    match err {
        PintError::Config(_) | PintError::InvalidArgument(_) => 1,
        _ => 3,
    }
}
