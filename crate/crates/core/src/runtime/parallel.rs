//! The iteration with state distributed over `n_step x n_coll` ranks.
//!
//! Rank `(p, j)` owns step block `p` (all stages when `n_coll = 1`, stage
//! `j` otherwise). Between the forward and inverse transforms it owns
//! spectral slot `p`, whose circulant eigenvalue has index `bit_reverse(p)`.

use std::time::Instant;

use num_complex::Complex64;

use super::collective::{
    allreduce, butterfly_exchange, column_broadcast, gather_blocks, last_step_broadcast,
    stage_reduce, Direction, ReduceOp,
};
use super::topology::RankTopology;
use super::transport::Transport;
use crate::driver::{
    drive, AlphaPlan, DriverSettings, IterationEngine, IterationMeasure, Prepared, RunOutcome,
    Timing,
};
use crate::error::{PintError, Result};
use crate::solver::{
    apply_g_inverse, diff_norm_inf, slot_factors, solve_stage, subtract_transfer, AlphaGuard,
    InnerStats, SolverContext,
};
use crate::spectral::TimeTransform;

pub struct RankEngine<'a, T: Transport> {
    prepared: &'a Prepared,
    ctx: SolverContext<'a>,
    topo: RankTopology,
    transport: &'a T,
    guard: AlphaGuard,
    /// Held stages of the current iterate, concatenated.
    local: Vec<Complex64>,
    local_w: Vec<Complex64>,
    iteration: usize,
}

impl<'a, T: Transport> RankEngine<'a, T> {
    pub fn new(
        prepared: &'a Prepared,
        settings: &DriverSettings,
        topo: RankTopology,
        transport: &'a T,
    ) -> Result<Self> {
        if topo.n_step != prepared.steps() {
            return Err(PintError::Config(format!(
                "n_step = {} must equal the number of time steps L = {}",
                topo.n_step,
                prepared.steps()
            )));
        }
        let dim = prepared.ivp.dim;
        let held = topo.held_stages(prepared.tableau.stages());
        let slice = held.start * dim..held.end * dim;
        Ok(RankEngine {
            prepared,
            ctx: prepared.context(settings),
            topo,
            transport,
            guard: prepared.guard(settings),
            local: prepared.ivp.initial.repeat(held.len()),
            local_w: prepared.w[topo.step_index()][slice].to_vec(),
            iteration: 0,
        })
    }

    fn dim(&self) -> usize {
        self.prepared.ivp.dim
    }

    fn stages(&self) -> usize {
        self.prepared.tableau.stages()
    }

    fn holds_last_stage(&self) -> bool {
        self.topo.step_index() == self.topo.n_step - 1 && self.topo.node_index() == self.topo.n_coll - 1
    }

    fn split(&self, v: &[Complex64]) -> Vec<Vec<Complex64>> {
        v.chunks(self.dim()).map(<[Complex64]>::to_vec).collect()
    }

    /// Inner solve of the owned slot. GMRES failures are returned beside
    /// the (possibly inaccurate) result so every rank keeps to the
    /// message schedule.
    async fn inner_solve(
        &self,
        factors: &crate::spectral::StepFactors,
        x: &[Complex64],
        comm: &mut f64,
    ) -> Result<(Vec<Complex64>, InnerStats, Option<PintError>)> {
        let (topo, t, it) = (&self.topo, self.transport, self.iteration);
        let held = topo.held_stages(self.stages());
        let clock = Instant::now();
        let x1 = stage_reduce(topo, t, &factors.s_inverse, &self.split(x), it, 0).await?;
        *comm += clock.elapsed().as_secs_f64();
        let mut stats = InnerStats::default();
        let mut failure = None;
        let mut x2 = Vec::with_capacity(x1.len());
        for (rhs, node) in x1.iter().zip(held.clone()) {
            let shift = factors.d_inner[node] * self.ctx.dt;
            match solve_stage(&self.ctx, shift, rhs, topo.step_index(), node) {
                Ok((sol, s)) => {
                    stats.absorb(&s);
                    x2.push(sol);
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    x2.push(vec![Complex64::new(0.0, 0.0); self.dim()]);
                }
            }
        }
        let clock = Instant::now();
        let z = stage_reduce(topo, t, &factors.s_matrix, &x2, it, 1).await?;
        let y = if topo.n_coll == 1 {
            apply_g_inverse(factors.r_l, &z)
        } else {
            let last_node = self.stages() - 1;
            let held_last = (topo.node_index() == last_node).then(|| z[0].as_slice());
            let z_last = column_broadcast(topo, t, last_node, held_last, it, 2).await?;
            vec![z[0].iter().zip(&z_last).map(|(&a, &b)| a - factors.r_l * b).collect()]
        };
        *comm += clock.elapsed().as_secs_f64();
        Ok((y.concat(), stats, failure))
    }
}

impl<T: Transport> IterationEngine for RankEngine<'_, T> {
    async fn iterate(&mut self, alpha: f64) -> Result<IterationMeasure> {
        self.guard.check(alpha)?;
        let (topo, t) = (self.topo, self.transport);
        let it = self.iteration;
        let p = topo.step_index();
        let transform = TimeTransform::new(topo.n_step, alpha)?;
        let factors = slot_factors(&self.prepared.tableau, topo.n_step, alpha)?;
        let mut timing = Timing::default();

        let clock = Instant::now();
        let last = self
            .holds_last_stage()
            .then(|| &self.local[self.local.len() - self.dim()..]);
        let v = last_step_broadcast(&topo, t, last, it).await?;
        timing.comm_s += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let mut r = self.local_w.clone();
        if let Some(v) = v {
            subtract_transfer(&mut r, &v, alpha);
        }
        let s = transform.forward_scale[p];
        let mut x: Vec<Complex64> = r.iter().map(|&v| v * s).collect();
        for stage in 0..transform.stages() {
            x = butterfly_exchange(&topo, t, &x, stage, Direction::Forward, it).await?;
        }
        timing.transform_s += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let mut comm = 0.0;
        let (mut y, inner, failure) = self.inner_solve(&factors[p], &x, &mut comm).await?;
        timing.solve_s += clock.elapsed().as_secs_f64() - comm;
        timing.comm_s += comm;

        let clock = Instant::now();
        for stage in 0..transform.stages() {
            y = butterfly_exchange(&topo, t, &y, stage, Direction::Inverse, it).await?;
        }
        let s = transform.inverse_scale[p];
        y.iter_mut().for_each(|v| *v *= s);
        timing.transform_s += clock.elapsed().as_secs_f64();

        let on_last_step = p == topo.n_step - 1;
        let consec = if on_last_step { diff_norm_inf(&y, &self.local) } else { 0.0 };
        let true_err = match (&self.prepared.reference, on_last_step) {
            (Some(reference), true) => {
                let block = reference.blocks.last().unwrap();
                let held = topo.held_stages(self.stages());
                diff_norm_inf(&y, &block[held.start * self.dim()..held.end * self.dim()])
            }
            _ => 0.0,
        };
        let failed = if failure.is_some() { topo.rank as f64 } else { f64::INFINITY };
        self.local = y;

        let clock = Instant::now();
        let reduced = allreduce(
            t,
            &[consec, true_err, inner.gmres_iterations as f64, inner.max_residual, failed],
            &[ReduceOp::Max, ReduceOp::Max, ReduceOp::Sum, ReduceOp::Max, ReduceOp::Min],
            it,
            0,
        )
        .await?;
        timing.comm_s += clock.elapsed().as_secs_f64();
        self.iteration += 1;

        if reduced[4].is_finite() {
            return Err(failure.unwrap_or(PintError::PeerFailed {
                rank: reduced[4] as usize,
            }));
        }
        Ok(IterationMeasure {
            consec_diff: reduced[0],
            true_err: self.prepared.reference.as_ref().map(|_| reduced[1]),
            inner: InnerStats {
                gmres_iterations: reduced[2] as usize,
                max_residual: reduced[3],
            },
            timing,
        })
    }
}

/// Runs the full outer loop on this rank. Rank 0 returns the gathered
/// outcome; the others return `None`.
pub async fn run_parallel<T: Transport>(
    prepared: &Prepared,
    settings: &DriverSettings,
    topo: RankTopology,
    transport: &T,
) -> Result<Option<RunOutcome>> {
    let mut engine = RankEngine::new(prepared, settings, topo, transport)?;
    let mut plan = AlphaPlan::new(
        settings.alpha_mode.clone(),
        &prepared.schedule_config(settings),
        prepared.guard(settings),
    )?;
    let outcome = drive(&mut engine, &mut plan, settings).await?;
    let blocks = gather_blocks(&topo, transport, &engine.local, engine.iteration).await?;
    Ok(blocks.map(|b| RunOutcome::assemble(prepared, outcome, b)))
}
