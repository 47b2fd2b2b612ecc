//! One preconditioned Richardson iteration over the composite collocation
//! system, and the step-by-step baseline.
//!
//! A composite vector is stored as `L` step blocks of length `M N`, each
//! stage-major: stage `m` of step `l` is `blocks[l][m N .. (m + 1) N]`.

use std::time::Instant;

use log::{debug, warn};
use num_complex::Complex64;
use serde::Serialize;

use crate::collocation::CollocationTableau;
use crate::error::{PintError, Result};
use crate::krylov::{gmres, GmresConfig, ShiftedOperator, SolveStats};
use crate::linalg::{self, ZERO};
use crate::problems::{composite_rhs, CsrMatrix, LinearIvp, TimeGrid};
use crate::spectral::{self, StepFactors, TimeTransform};

/// A non-converged inner solve is still accepted when its true relative
/// residual is below this level (GMRES stagnating at round-off).
pub const INNER_ACCEPT_FLOOR: f64 = 1e-13;

/// Relative keep-away margin around defective alpha radii.
pub const ALPHA_MARGIN: f64 = 1e-2;

/// Shared read-only data of one solve.
#[derive(Debug, Clone, Copy)]
pub struct SolverContext<'a> {
    pub operator: &'a CsrMatrix,
    pub tableau: &'a CollocationTableau,
    pub dt: f64,
    pub gmres: GmresConfig,
}

impl<'a> SolverContext<'a> {
    pub fn new(ivp: &'a LinearIvp, tableau: &'a CollocationTableau, tau: f64) -> Self {
        SolverContext {
            operator: &ivp.operator,
            tableau,
            dt: ivp.grid.dt,
            gmres: GmresConfig::for_dim(ivp.dim, tau),
        }
    }

    pub fn dim(&self) -> usize {
        self.operator.dim()
    }

    pub fn stages(&self) -> usize {
        self.tableau.stages()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeState {
    pub blocks: Vec<Vec<Complex64>>,
    pub k: usize,
    /// Last step block of the previous iterate.
    pub last_step_prev: Vec<Complex64>,
}

impl CompositeState {
    /// `u0` at every stage of every step.
    pub fn replicated(initial: &[Complex64], steps: usize, stages: usize) -> Self {
        let block: Vec<Complex64> = initial.repeat(stages);
        CompositeState {
            blocks: vec![block.clone(); steps],
            k: 0,
            last_step_prev: block,
        }
    }

    pub fn last_block(&self) -> &[Complex64] {
        self.blocks.last().expect("at least one step")
    }

    /// `u` at the end of the last step.
    pub fn final_value(&self, dim: usize) -> &[Complex64] {
        last_stage(self.last_block(), dim)
    }

    /// `||u_L^(k) - u_L^(k-1)||_inf` over the whole last step block.
    pub fn consecutive_diff(&self) -> f64 {
        diff_norm_inf(self.last_block(), &self.last_step_prev)
    }
}

pub fn last_stage(block: &[Complex64], dim: usize) -> &[Complex64] {
    &block[block.len() - dim..]
}

pub fn diff_norm_inf(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn blocks_diff_norm_inf(a: &[Vec<Complex64>], b: &[Vec<Complex64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| diff_norm_inf(x, y)).fold(0.0, f64::max)
}

fn check_conformal(state: &CompositeState, w: &[Vec<Complex64>]) -> Result<()> {
    if state.blocks.len() != w.len() {
        return Err(PintError::DimensionMismatch {
            expected: w.len(),
            found: state.blocks.len(),
        });
    }
    for (u, r) in state.blocks.iter().zip(w) {
        if u.len() != r.len() {
            return Err(PintError::DimensionMismatch {
                expected: r.len(),
                found: u.len(),
            });
        }
    }
    Ok(())
}

/// `r = (C_alpha - C) u + w`: `w` with `alpha H u_L` removed from step 0.
pub fn residual_rhs(
    state: &CompositeState,
    w: &[Vec<Complex64>],
    alpha: f64,
    dim: usize,
) -> Result<Vec<Vec<Complex64>>> {
    check_conformal(state, w)?;
    let mut r = w.to_vec();
    subtract_transfer(&mut r[0], last_stage(state.last_block(), dim), alpha);
    Ok(r)
}

/// `block -= alpha * (v, v, ..., v)`.
pub fn subtract_transfer(block: &mut [Complex64], v: &[Complex64], alpha: f64) {
    for stage in block.chunks_mut(v.len()) {
        stage.iter_mut().zip(v).for_each(|(s, &x)| *s -= alpha * x);
    }
}

/// `y_m = z_m - r z_{M-1}`, i.e. `(G^-1 (x) I) z`.
pub fn apply_g_inverse(r: Complex64, stages: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    let last = stages.last().expect("at least one stage");
    stages
        .iter()
        .map(|z| z.iter().zip(last).map(|(&a, &b)| a - r * b).collect())
        .collect()
}

/// Solves `(I - shift A) x = rhs` and enforces the inner tolerance.
pub fn solve_stage(
    ctx: &SolverContext,
    shift: Complex64,
    rhs: &[Complex64],
    step: usize,
    node: usize,
) -> Result<(Vec<Complex64>, SolveStats)> {
    let op = ShiftedOperator::new(ctx.operator, shift);
    let (x, stats) = gmres(&op, rhs, None, &ctx.gmres);
    if !stats.converged {
        if stats.residual <= INNER_ACCEPT_FLOOR {
            debug!(
                "step {step} node {node}: inner residual {:.2e} stagnated above tau {:.1e}",
                stats.residual, ctx.gmres.tol
            );
        } else {
            return Err(PintError::InnerSolve {
                step,
                node,
                residual: stats.residual,
                iterations: stats.iterations,
            });
        }
    }
    Ok((x, stats))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct InnerStats {
    pub gmres_iterations: usize,
    pub max_residual: f64,
}

impl InnerStats {
    pub fn absorb(&mut self, s: &SolveStats) {
        self.gmres_iterations += s.iterations;
        self.max_residual = self.max_residual.max(s.residual);
    }

    pub fn merge(&mut self, other: &InnerStats) {
        self.gmres_iterations += other.gmres_iterations;
        self.max_residual = self.max_residual.max(other.max_residual);
    }
}

pub fn split_stages(block: &[Complex64], dim: usize) -> Vec<&[Complex64]> {
    block.chunks(dim).collect()
}

/// Solves `(d_l H_M (x) I + I - dt Q (x) A) y = x` for one spectral slot
/// through `x1 = S^-1 x`, `M` shifted solves, `z = S x2`, `y = G^-1 z`.
pub fn inner_step_solve(
    ctx: &SolverContext,
    factors: &StepFactors,
    x: &[Complex64],
    step: usize,
) -> Result<(Vec<Complex64>, InnerStats)> {
    let dim = ctx.dim();
    let x1 = linalg::mix_stages(&factors.s_inverse, &split_stages(x, dim));
    let mut stats = InnerStats::default();
    let mut x2 = Vec::with_capacity(x1.len());
    for (node, (rhs, &lambda)) in x1.iter().zip(&factors.d_inner).enumerate() {
        let (sol, s) = solve_stage(ctx, lambda * ctx.dt, rhs, step, node)?;
        stats.absorb(&s);
        x2.push(sol);
    }
    let x2_refs: Vec<&[Complex64]> = x2.iter().map(Vec::as_slice).collect();
    let z = linalg::mix_stages(&factors.s_matrix, &x2_refs);
    Ok((apply_g_inverse(factors.r_l, &z).concat(), stats))
}

/// Keeps alpha away from the radii at which some `Q G_l^-1` is defective.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaGuard {
    pub radii: Vec<f64>,
    pub margin: f64,
}

impl AlphaGuard {
    pub fn new(tableau: &CollocationTableau, steps: usize) -> Self {
        let radii = if tableau.stages() <= spectral::MAX_FORBIDDEN_STAGES {
            match spectral::defective_shifts(tableau, steps) {
                Ok(set) => set.iter().map(|f| f.alpha_star).collect(),
                Err(e) => {
                    warn!("defective alpha radii unavailable: {e}");
                    Vec::new()
                }
            }
        } else {
            Vec::new()
        };
        AlphaGuard {
            radii,
            margin: ALPHA_MARGIN,
        }
    }

    pub fn disabled() -> Self {
        AlphaGuard {
            radii: Vec::new(),
            margin: ALPHA_MARGIN,
        }
    }

    /// The first radius closer to `alpha` than the relative margin.
    pub fn violation(&self, alpha: f64) -> Option<f64> {
        self.radii
            .iter()
            .copied()
            .find(|&rho| (alpha - rho).abs() < self.margin * rho)
    }

    /// Moves alpha upward past every violated radius.
    pub fn adjust(&self, alpha: f64) -> f64 {
        let mut a = alpha;
        while let Some(rho) = self.violation(a) {
            let next = rho * (1.0 + self.margin);
            warn!("alpha {a:.6e} within {} of defective radius {rho:.6e}; using {next:.6e}", self.margin);
            a = next;
        }
        a
    }

    pub fn check(&self, alpha: f64) -> Result<()> {
        match self.violation(alpha) {
            Some(rho) => Err(PintError::ForbiddenAlpha {
                alpha,
                alpha_star: rho,
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct IterationStats {
    pub inner: InnerStats,
    pub transform_s: f64,
    pub solve_s: f64,
}

/// Inner factors for every forward-output slot; slot `p` carries spectral
/// index `bit_reverse(p)`.
pub fn slot_factors(
    tableau: &CollocationTableau,
    steps: usize,
    alpha: f64,
) -> Result<Vec<StepFactors>> {
    let circ = spectral::diagonalize_circulant(steps, alpha)?;
    (0..steps)
        .map(|p| {
            let l = spectral::bit_reverse(p, steps);
            spectral::factor_step(tableau, l + 1, circ.d[l])
        })
        .collect()
}

/// `u^(k+1) = C_alpha^-1 ((C_alpha - C) u^(k) + w)`.
pub fn richardson_iteration(
    ctx: &SolverContext,
    state: &CompositeState,
    w: &[Vec<Complex64>],
    alpha: f64,
    guard: &AlphaGuard,
) -> Result<(CompositeState, IterationStats)> {
    guard.check(alpha)?;
    let steps = w.len();
    let transform = TimeTransform::new(steps, alpha)?;
    let factors = slot_factors(ctx.tableau, steps, alpha)?;
    let mut stats = IterationStats::default();

    let clock = Instant::now();
    let r = residual_rhs(state, w, alpha, ctx.dim())?;
    let x = spectral::forward_transform(&r, &transform)?;
    stats.transform_s += clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let mut y = Vec::with_capacity(steps);
    for (p, (xp, f)) in x.iter().zip(&factors).enumerate() {
        let (yp, s) = inner_step_solve(ctx, f, xp, p)?;
        stats.inner.merge(&s);
        y.push(yp);
    }
    stats.solve_s += clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let u = spectral::inverse_transform(&y, &transform)?;
    stats.transform_s += clock.elapsed().as_secs_f64();

    Ok((
        CompositeState {
            blocks: u,
            k: state.k + 1,
            last_step_prev: state.last_block().to_vec(),
        },
        stats,
    ))
}

#[derive(Debug, Clone)]
pub struct SequentialSolution {
    /// Composite collocation solution, one block per step.
    pub blocks: Vec<Vec<Complex64>>,
    pub step_stats: Vec<InnerStats>,
    /// `||u_L - u(t_end)||_inf` when the exact solution is known.
    pub final_error: Option<f64>,
    pub solve_s: f64,
}

impl SequentialSolution {
    pub fn final_value(&self, dim: usize) -> &[Complex64] {
        last_stage(self.blocks.last().expect("at least one step"), dim)
    }
}

/// Marches the collocation steps one after another, each through the
/// diagonalization of `Q`.
pub fn sequential_solve(
    ivp: &LinearIvp,
    grid: &TimeGrid,
    tableau: &CollocationTableau,
    tau: f64,
) -> Result<SequentialSolution> {
    let ctx = SolverContext {
        operator: &ivp.operator,
        tableau,
        dt: grid.dt,
        gmres: GmresConfig::for_dim(ivp.dim, tau),
    };
    let w = composite_rhs(ivp, grid, tableau)?;
    let factors = spectral::factor_step(tableau, 0, ZERO)?;
    let dim = ivp.dim;
    let clock = Instant::now();
    let mut blocks: Vec<Vec<Complex64>> = Vec::with_capacity(grid.steps);
    let mut step_stats = Vec::with_capacity(grid.steps);
    for (l, wl) in w.iter().enumerate() {
        let mut rhs = wl.clone();
        if let Some(prev) = blocks.last() {
            subtract_transfer(&mut rhs, last_stage(prev, dim), -1.0);
        }
        let (u, s) = inner_step_solve(&ctx, &factors, &rhs, l)?;
        blocks.push(u);
        step_stats.push(s);
    }
    let solve_s = clock.elapsed().as_secs_f64();
    let final_error = ivp
        .exact_at(grid.t_end)
        .map(|u| diff_norm_inf(last_stage(blocks.last().unwrap(), dim), &u));
    Ok(SequentialSolution {
        blocks,
        step_stats,
        final_error,
        solve_s,
    })
}
