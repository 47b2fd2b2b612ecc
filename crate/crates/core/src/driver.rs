//! The outer loop: alpha selection, stopping rule and per-iteration records,
//! shared by the single-rank path and the distributed runtime.

use std::future::Future;
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::collocation::CollocationTableau;
use crate::error::{PintError, Result};
use crate::problems::{blocks_norm_inf, composite_rhs, LinearIvp};
use crate::schedule::{
    estimate_m0, fixed_alpha_m, AlphaSchedule, M0Strategy, ScheduleConfig, DEFAULT_EPS,
};
use crate::solver::{
    diff_norm_inf, last_stage, richardson_iteration, sequential_solve, AlphaGuard, CompositeState,
    InnerStats, SequentialSolution, SolverContext,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    Adaptive,
    Fixed(f64),
    /// `alpha_k` for iteration `k`; the last entry repeats.
    Sequence(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverSettings {
    pub alpha_mode: AlphaMode,
    pub tol_outer: f64,
    pub tau_inner: f64,
    pub eps: f64,
    pub m0_strategy: M0Strategy,
    pub max_iterations: usize,
    pub gmres_restart: usize,
    /// Keep alpha away from defective radii.
    pub alpha_guard: bool,
    /// Measure errors against the step-by-step collocation solution.
    pub reference: bool,
}

impl Default for DriverSettings {
    fn default() -> Self {
        DriverSettings {
            alpha_mode: AlphaMode::Adaptive,
            tol_outer: 1e-9,
            tau_inner: 1e-12,
            eps: DEFAULT_EPS,
            m0_strategy: M0Strategy::OperatorBound,
            max_iterations: 50,
            gmres_restart: crate::krylov::DEFAULT_RESTART,
            alpha_guard: true,
            reference: true,
        }
    }
}

impl DriverSettings {
    pub fn validate(&self) -> Result<()> {
        let check_alpha = |a: f64| {
            if a > 0.0 && a < 1.0 {
                Ok(())
            } else {
                Err(PintError::Config(format!("alpha must lie in (0, 1), got {a}")))
            }
        };
        match &self.alpha_mode {
            AlphaMode::Adaptive => {}
            AlphaMode::Fixed(a) => check_alpha(*a)?,
            AlphaMode::Sequence(v) => {
                if v.is_empty() {
                    return Err(PintError::Config("alpha sequence is empty".into()));
                }
                v.iter().try_for_each(|&a| check_alpha(a))?;
            }
        }
        for (name, v) in [
            ("tol_outer", self.tol_outer),
            ("tau_inner", self.tau_inner),
            ("eps", self.eps),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PintError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iterations == 0 || self.gmres_restart == 0 {
            return Err(PintError::Config(
                "max_iterations and gmres_restart must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Problem data every rank needs read-only.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub ivp: Arc<LinearIvp>,
    pub tableau: Arc<CollocationTableau>,
    pub w: Arc<Vec<Vec<Complex64>>>,
    pub w_norm: f64,
    pub m0: f64,
    pub reference: Option<Arc<SequentialSolution>>,
}

impl Prepared {
    pub fn new(ivp: LinearIvp, tableau: CollocationTableau, settings: &DriverSettings) -> Result<Self> {
        settings.validate()?;
        let w = composite_rhs(&ivp, &ivp.grid, &tableau)?;
        let w_norm = blocks_norm_inf(&w);
        let m0 = estimate_m0(settings.m0_strategy, &ivp, &ivp.grid)?;
        let reference = if settings.reference {
            Some(Arc::new(sequential_solve(
                &ivp,
                &ivp.grid,
                &tableau,
                settings.tau_inner,
            )?))
        } else {
            None
        };
        Ok(Prepared {
            ivp: Arc::new(ivp),
            tableau: Arc::new(tableau),
            w: Arc::new(w),
            w_norm,
            m0,
            reference,
        })
    }

    pub fn steps(&self) -> usize {
        self.w.len()
    }

    pub fn context(&self, settings: &DriverSettings) -> SolverContext<'_> {
        let mut ctx = SolverContext::new(&self.ivp, &self.tableau, settings.tau_inner);
        ctx.gmres.restart = settings.gmres_restart;
        ctx
    }

    pub fn schedule_config(&self, settings: &DriverSettings) -> ScheduleConfig {
        ScheduleConfig {
            eps: settings.eps,
            tau: settings.tau_inner,
            steps: self.steps(),
            w_norm: self.w_norm,
            m0: self.m0,
            tol: settings.tol_outer,
        }
    }

    pub fn guard(&self, settings: &DriverSettings) -> AlphaGuard {
        if settings.alpha_guard {
            AlphaGuard::new(&self.tableau, self.steps())
        } else {
            AlphaGuard::disabled()
        }
    }

    /// Error of a last step block against the reference last step block.
    pub fn reference_error(&self, last_block: &[Complex64]) -> Option<f64> {
        self.reference
            .as_ref()
            .map(|r| diff_norm_inf(last_block, r.blocks.last().unwrap()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlannedStep {
    pub alpha: f64,
    pub m: f64,
    pub stagnation_risk: bool,
    pub adjusted: bool,
}

/// Produces `alpha_k` and the error estimate `m_k` for every iteration.
#[derive(Debug, Clone)]
pub struct AlphaPlan {
    mode: AlphaMode,
    schedule: AlphaSchedule,
    guard: AlphaGuard,
    tol: f64,
}

impl AlphaPlan {
    pub fn new(mode: AlphaMode, config: &ScheduleConfig, guard: AlphaGuard) -> Result<Self> {
        let schedule = AlphaSchedule::new(config)?.with_guard(guard.clone());
        Ok(AlphaPlan {
            mode,
            schedule,
            guard,
            tol: config.tol,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.schedule.gamma
    }

    pub fn current_m(&self) -> f64 {
        self.schedule.current_m()
    }

    /// The adaptive loop runs only while `m_k > tol`.
    pub fn bound_reached(&self) -> bool {
        matches!(self.mode, AlphaMode::Adaptive) && self.current_m() <= self.tol
    }

    pub fn next(&mut self) -> PlannedStep {
        let fixed = match &self.mode {
            AlphaMode::Adaptive => {
                let s = self.schedule.next_alpha();
                return PlannedStep {
                    alpha: s.alpha,
                    m: s.m,
                    stagnation_risk: s.stagnation_risk,
                    adjusted: s.adjusted,
                };
            }
            AlphaMode::Fixed(a) => *a,
            AlphaMode::Sequence(v) => v[self.schedule.k.min(v.len() - 1)],
        };
        let alpha = self.guard.adjust(fixed);
        let gamma = self.schedule.gamma;
        let m = fixed_alpha_m(self.current_m(), alpha, gamma);
        let stagnation_risk = 4.0 * gamma > self.current_m();
        self.schedule.m_seq.push(m);
        self.schedule.alpha_seq.push(alpha);
        self.schedule.k += 1;
        PlannedStep {
            alpha,
            m,
            stagnation_risk,
            adjusted: alpha != fixed,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Timing {
    pub transform_s: f64,
    pub solve_s: f64,
    pub comm_s: f64,
}

impl Timing {
    pub fn add(&mut self, other: &Timing) {
        self.transform_s += other.transform_s;
        self.solve_s += other.solve_s;
        self.comm_s += other.comm_s;
    }
}

/// What an engine reports after one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationMeasure {
    pub consec_diff: f64,
    pub true_err: Option<f64>,
    pub inner: InnerStats,
    pub timing: Timing,
}

pub trait IterationEngine {
    fn iterate(&mut self, alpha: f64) -> impl Future<Output = Result<IterationMeasure>>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    pub alpha: f64,
    pub m_k: f64,
    pub consec_diff: f64,
    pub true_err: Option<f64>,
    pub gmres_iters: usize,
    pub wall_s: f64,
    pub stagnation_risk: bool,
    pub alpha_adjusted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ConsecutiveDiff,
    ScheduleBound,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopOutcome {
    pub records: Vec<IterationRecord>,
    pub stop: StopReason,
    pub converged: bool,
    pub gamma: f64,
    pub timing: Timing,
}

/// Runs iterations until the last-step consecutive difference or the
/// schedule estimate reaches `tol`, or the iteration cap. At least one
/// iteration is always performed.
pub async fn drive<E: IterationEngine>(
    engine: &mut E,
    plan: &mut AlphaPlan,
    settings: &DriverSettings,
) -> Result<LoopOutcome> {
    let mut records = Vec::new();
    let mut timing = Timing::default();
    let mut stop = StopReason::MaxIterations;
    while records.len() < settings.max_iterations {
        if !records.is_empty() && plan.bound_reached() {
            stop = StopReason::ScheduleBound;
            break;
        }
        let step = plan.next();
        if step.stagnation_risk {
            warn!("4 gamma exceeds m_k; alpha clamped at {:.3e}", step.alpha);
        }
        let clock = Instant::now();
        let measure = engine.iterate(step.alpha).await?;
        let wall_s = clock.elapsed().as_secs_f64();
        timing.add(&measure.timing);
        let record = IterationRecord {
            k: records.len() + 1,
            alpha: step.alpha,
            m_k: step.m,
            consec_diff: measure.consec_diff,
            true_err: measure.true_err,
            gmres_iters: measure.inner.gmres_iterations,
            wall_s,
            stagnation_risk: step.stagnation_risk,
            alpha_adjusted: step.adjusted,
        };
        info!(
            "k={} alpha={:.3e} m={:.3e} diff={:.3e}",
            record.k, record.alpha, record.m_k, record.consec_diff
        );
        records.push(record);
        if measure.consec_diff <= settings.tol_outer {
            stop = StopReason::ConsecutiveDiff;
            break;
        }
    }
    Ok(LoopOutcome {
        records,
        stop,
        converged: stop != StopReason::MaxIterations,
        gamma: plan.gamma(),
        timing,
    })
}

pub struct SerialEngine<'a> {
    pub prepared: &'a Prepared,
    pub ctx: SolverContext<'a>,
    pub state: CompositeState,
    pub guard: AlphaGuard,
}

impl<'a> SerialEngine<'a> {
    pub fn new(prepared: &'a Prepared, settings: &DriverSettings) -> Self {
        let ctx = prepared.context(settings);
        let state = CompositeState::replicated(
            &prepared.ivp.initial,
            prepared.steps(),
            prepared.tableau.stages(),
        );
        SerialEngine {
            prepared,
            ctx,
            state,
            guard: prepared.guard(settings),
        }
    }
}

impl IterationEngine for SerialEngine<'_> {
    async fn iterate(&mut self, alpha: f64) -> Result<IterationMeasure> {
        let (next, stats) =
            richardson_iteration(&self.ctx, &self.state, &self.prepared.w, alpha, &self.guard)?;
        self.state = next;
        Ok(IterationMeasure {
            consec_diff: self.state.consecutive_diff(),
            true_err: self.prepared.reference_error(self.state.last_block()),
            inner: stats.inner,
            timing: Timing {
                transform_s: stats.transform_s,
                solve_s: stats.solve_s,
                comm_s: 0.0,
            },
        })
    }
}

/// Result of a complete run on the driving rank.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub outcome: LoopOutcome,
    pub blocks: Vec<Vec<Complex64>>,
    pub w_norm: f64,
    pub m0: f64,
    /// Final last step block against the collocation reference.
    pub final_error: Option<f64>,
    /// Final value against the exact solution at `t_end`.
    pub exact_error: Option<f64>,
}

impl RunOutcome {
    pub fn assemble(prepared: &Prepared, outcome: LoopOutcome, blocks: Vec<Vec<Complex64>>) -> Self {
        let last = blocks.last().expect("at least one step");
        let final_error = prepared.reference_error(last);
        let exact_error = prepared
            .ivp
            .exact_at(prepared.ivp.grid.t_end)
            .map(|u| diff_norm_inf(last_stage(last, prepared.ivp.dim), &u));
        RunOutcome {
            outcome,
            blocks,
            w_norm: prepared.w_norm,
            m0: prepared.m0,
            final_error,
            exact_error,
        }
    }
}

pub fn run_serial(prepared: &Prepared, settings: &DriverSettings) -> Result<RunOutcome> {
    let mut engine = SerialEngine::new(prepared, settings);
    let mut plan = AlphaPlan::new(
        settings.alpha_mode.clone(),
        &prepared.schedule_config(settings),
        prepared.guard(settings),
    )?;
    let outcome = crate::runtime::block_on(drive(&mut engine, &mut plan, settings))?;
    Ok(RunOutcome::assemble(prepared, outcome, engine.state.blocks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::make_dahlquist;

    fn dahlquist(settings: &DriverSettings) -> Prepared {
        let ivp = make_dahlquist(Complex64::new(-1.0, 0.0), 1.0, 8).unwrap();
        Prepared::new(ivp, CollocationTableau::radau(2).unwrap(), settings).unwrap()
    }

    #[test]
    fn adaptive_dahlquist_converges_quickly() {
        let settings = DriverSettings::default();
        let prepared = dahlquist(&settings);
        let out = run_serial(&prepared, &settings).unwrap();
        assert!(out.outcome.converged);
        assert!(out.outcome.records.len() <= 4, "{:?}", out.outcome.records);
        assert!(out.final_error.unwrap() <= 10.0 * settings.tol_outer);
    }

    #[test]
    fn sequence_mode_repeats_last_entry() {
        let settings = DriverSettings {
            alpha_mode: AlphaMode::Sequence(vec![0.3, 0.2]),
            max_iterations: 4,
            tol_outer: 1e-300,
            ..DriverSettings::default()
        };
        let prepared = dahlquist(&settings);
        let out = run_serial(&prepared, &settings).unwrap();
        let alphas: Vec<f64> = out.outcome.records.iter().map(|r| r.alpha).collect();
        assert_eq!(alphas, vec![0.3, 0.2, 0.2, 0.2]);
        assert_eq!(out.outcome.stop, StopReason::MaxIterations);
        assert!(!out.outcome.converged);
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let bad = DriverSettings {
            alpha_mode: AlphaMode::Fixed(1.0),
            ..DriverSettings::default()
        };
        assert!(bad.validate().is_err());
        let bad = DriverSettings {
            alpha_mode: AlphaMode::Sequence(vec![]),
            ..DriverSettings::default()
        };
        assert!(bad.validate().is_err());
    }
}
