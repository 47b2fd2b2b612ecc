//! Linear test problems `u' = A u + b(t)` on a periodic unit square.
//!
//! Grid points are `x_j = j / n` for `j = 0..n` with no duplicated endpoint,
//! and the unknown at `(x_i, y_j)` sits at index `j * n + i`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::collocation::CollocationTableau;
use crate::error::{PintError, Result};
use crate::linalg::{CMatrix, ZERO};

/// Compressed sparse row matrix with complex entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
}

impl CsrMatrix {
    /// Square matrix from `(row, col, value)` triplets; duplicates are summed
    /// and exact zeros dropped.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, Complex64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, Complex64)> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside {dim}x{dim}");
            match merged.last_mut() {
                Some(last) if (last.0, last.1) == (r, c) => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|t| t.2 != ZERO);
        let mut row_ptr = vec![0usize; dim + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = merged.iter().map(|t| t.1).collect();
        let values = merged.iter().map(|t| t.2).collect();
        CsrMatrix {
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn diagonal(entries: &[Complex64]) -> Self {
        let triplets = entries.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(entries.len(), triplets)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// `out = A x`.
    pub fn apply_into(&self, x: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).map(|(j, a)| a * x[j]).sum();
        }
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.dim];
        self.apply_into(x, &mut out);
        out
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.row(i).map(|(_, a)| a.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn transpose(&self) -> Self {
        let triplets = (0..self.dim)
            .flat_map(|i| self.row(i).map(move |(j, a)| (j, i, a)))
            .collect();
        Self::from_triplets(self.dim, triplets)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let t = self.transpose();
        t.row_ptr == self.row_ptr
            && t.col_idx == self.col_idx
            && t.values.iter().zip(&self.values).all(|(a, b)| (a - b).norm() <= tol)
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut dense = CMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, a) in self.row(i) {
                dense[(i, j)] = a;
            }
        }
        dense
    }
}

/// Equidistant subdivision of `[t_start, t_end]` into `steps` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub steps: usize,
    pub dt: f64,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(PintError::invalid("number of time steps must be positive"));
        }
        let dt = (t_end - t_start) / steps as f64;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(PintError::invalid(format!(
                "time interval [{t_start}, {t_end}] must be nonempty and finite"
            )));
        }
        Ok(TimeGrid {
            t_start,
            t_end,
            steps,
            dt,
        })
    }

    /// Left end of step `l` (0-based).
    pub fn step_start(&self, l: usize) -> f64 {
        self.t_start + l as f64 * self.dt
    }

    /// Time of collocation node `m` in step `l` (both 0-based).
    pub fn node_time(&self, l: usize, m: usize, tableau: &CollocationTableau) -> f64 {
        self.step_start(l) + tableau.nodes[m] * self.dt
    }
}

pub type TimeFunction = Arc<dyn Fn(f64) -> Vec<Complex64> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equation {
    Heat,
    Advection,
    Dahlquist,
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Equation::Heat => "heat",
            Equation::Advection => "advection",
            Equation::Dahlquist => "dahlquist",
        })
    }
}

#[derive(Clone)]
pub struct LinearIvp {
    pub equation: Equation,
    pub dim: usize,
    pub operator: CsrMatrix,
    /// `None` for homogeneous problems.
    pub forcing: Option<TimeFunction>,
    pub initial: Vec<Complex64>,
    pub exact: Option<TimeFunction>,
    pub grid: TimeGrid,
}

impl fmt::Debug for LinearIvp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearIvp")
            .field("equation", &self.equation)
            .field("dim", &self.dim)
            .field("nnz", &self.operator.nnz())
            .field("homogeneous", &self.forcing.is_none())
            .field("grid", &self.grid)
            .finish()
    }
}

impl LinearIvp {
    pub fn forcing_at(&self, t: f64) -> Vec<Complex64> {
        match &self.forcing {
            Some(b) => b(t),
            None => vec![ZERO; self.dim],
        }
    }

    pub fn exact_at(&self, t: f64) -> Option<Vec<Complex64>> {
        self.exact.as_ref().map(|u| u(t))
    }
}

/// Second-derivative central stencils, offsets `-p..=p`, to be scaled by `1/h^2`.
fn central_second(order: usize) -> Option<&'static [f64]> {
    match order {
        2 => Some(&[1.0, -2.0, 1.0]),
        4 => Some(&[-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0]),
        6 => Some(&[
            1.0 / 90.0,
            -3.0 / 20.0,
            3.0 / 2.0,
            -49.0 / 18.0,
            3.0 / 2.0,
            -3.0 / 20.0,
            1.0 / 90.0,
        ]),
        _ => None,
    }
}

/// Upwind-biased first-derivative stencils as `(first offset, weights)`,
/// to be scaled by `1/h`.
fn upwind_first(order: usize) -> Option<(isize, Vec<f64>)> {
    match order {
        1 => Some((-1, vec![-1.0, 1.0])),
        3 => Some((-2, [1.0, -6.0, 3.0, 2.0].map(|c| c / 6.0).to_vec())),
        5 => Some((
            -3,
            [-2.0, 15.0, -60.0, 20.0, 30.0, -3.0]
                .map(|c| c / 60.0)
                .to_vec(),
        )),
        _ => None,
    }
}

fn wrap(i: usize, offset: isize, n: usize) -> usize {
    (i as isize + offset).rem_euclid(n as isize) as usize
}

/// `sum_k w_k (u(x + (first + k) h, y) + u(x, y + (first + k) h)) * scale`.
fn periodic_2d(n: usize, first: isize, weights: &[f64], scale: f64) -> CsrMatrix {
    let mut triplets = Vec::with_capacity(2 * n * n * weights.len());
    for iy in 0..n {
        for ix in 0..n {
            let row = iy * n + ix;
            for (k, &w) in weights.iter().enumerate() {
                let offset = first + k as isize;
                let v = Complex64::new(w * scale, 0.0);
                triplets.push((row, iy * n + wrap(ix, offset, n), v));
                triplets.push((row, wrap(iy, offset, n) * n + ix, v));
            }
        }
    }
    CsrMatrix::from_triplets(n * n, triplets)
}

/// Samples of `f(x, y)` on the grid.
pub fn grid_samples(n: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let h = 1.0 / n as f64;
    (0..n * n)
        .map(|idx| f((idx % n) as f64 * h, (idx / n) as f64 * h))
        .collect()
}

fn real_to_complex(v: &[f64]) -> Vec<Complex64> {
    v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

pub fn heat_operator(n: usize, order: usize) -> Result<CsrMatrix> {
    let weights = central_second(order)
        .ok_or_else(|| PintError::invalid(format!("heat supports orders 2, 4, 6, got {order}")))?;
    if n < order + 1 {
        return Err(PintError::invalid(format!(
            "order {order} needs at least {} points per dimension, got {n}",
            order + 1
        )));
    }
    let h = 1.0 / n as f64;
    Ok(periodic_2d(
        n,
        -(weights.len() as isize / 2),
        weights,
        1.0 / (h * h),
    ))
}

pub fn advection_operator(n: usize, order: usize) -> Result<CsrMatrix> {
    let (first, weights) = upwind_first(order).ok_or_else(|| {
        PintError::invalid(format!("advection supports orders 1, 3, 5, got {order}"))
    })?;
    if n < 2 * order + 1 {
        return Err(PintError::invalid(format!(
            "order {order} needs at least {} points per dimension, got {n}",
            2 * order + 1
        )));
    }
    Ok(periodic_2d(n, first, &weights, -(n as f64)))
}

/// `u_t = Lap u + b` on `[pi, pi + T]` with exact solution
/// `sin(t) sin(2 pi x) sin(2 pi y)`.
pub fn make_heat(n: usize, order: usize, t_span: f64, steps: usize) -> Result<LinearIvp> {
    let operator = heat_operator(n, order)?;
    let grid = TimeGrid::new(PI, PI + t_span, steps)?;
    let shape = Arc::new(grid_samples(n, |x, y| {
        (2.0 * PI * x).sin() * (2.0 * PI * y).sin()
    }));
    let s = Arc::clone(&shape);
    let forcing: TimeFunction = Arc::new(move |t: f64| {
        let amp = t.cos() + 8.0 * PI * PI * t.sin();
        s.iter().map(|&v| Complex64::new(amp * v, 0.0)).collect()
    });
    let s = Arc::clone(&shape);
    let exact: TimeFunction = Arc::new(move |t: f64| {
        let amp = t.sin();
        s.iter().map(|&v| Complex64::new(amp * v, 0.0)).collect()
    });
    Ok(LinearIvp {
        equation: Equation::Heat,
        dim: n * n,
        operator,
        forcing: Some(forcing),
        initial: exact(PI),
        exact: Some(exact),
        grid,
    })
}

/// `u_t + u_x + u_y = 0` on `[0, T]` with exact solution
/// `sin(2 pi (x - t)) sin(2 pi (y - t))`.
pub fn make_advection(n: usize, order: usize, t_span: f64, steps: usize) -> Result<LinearIvp> {
    let operator = advection_operator(n, order)?;
    let grid = TimeGrid::new(0.0, t_span, steps)?;
    let exact: TimeFunction = Arc::new(move |t: f64| {
        real_to_complex(&grid_samples(n, |x, y| {
            (2.0 * PI * (x - t)).sin() * (2.0 * PI * (y - t)).sin()
        }))
    });
    Ok(LinearIvp {
        equation: Equation::Advection,
        dim: n * n,
        operator,
        forcing: None,
        initial: exact(0.0),
        exact: Some(exact),
        grid,
    })
}

/// Scalar `u' = lambda u`, `u(0) = 1` on `[0, T]`.
pub fn make_dahlquist(lambda: Complex64, t_span: f64, steps: usize) -> Result<LinearIvp> {
    let grid = TimeGrid::new(0.0, t_span, steps)?;
    let exact: TimeFunction = Arc::new(move |t: f64| vec![(lambda * t).exp()]);
    Ok(LinearIvp {
        equation: Equation::Dahlquist,
        dim: 1,
        operator: CsrMatrix::diagonal(&[lambda]),
        forcing: None,
        initial: vec![Complex64::new(1.0, 0.0)],
        exact: Some(exact),
        grid,
    })
}

/// Composite right-hand side `w`: one block of length `M N` per step,
/// stage-major. Block 0 carries `u0` at every stage.
pub fn composite_rhs(
    ivp: &LinearIvp,
    grid: &TimeGrid,
    tableau: &CollocationTableau,
) -> Result<Vec<Vec<Complex64>>> {
    let n = ivp.dim;
    if ivp.initial.len() != n {
        return Err(PintError::DimensionMismatch {
            expected: n,
            found: ivp.initial.len(),
        });
    }
    let m = tableau.stages();
    let mut blocks = Vec::with_capacity(grid.steps);
    for l in 0..grid.steps {
        let mut block = vec![ZERO; m * n];
        if ivp.forcing.is_some() {
            let samples: Vec<Vec<Complex64>> = (0..m)
                .map(|j| ivp.forcing_at(grid.node_time(l, j, tableau)))
                .collect();
            if let Some(bad) = samples.iter().find(|b| b.len() != n) {
                return Err(PintError::DimensionMismatch {
                    expected: n,
                    found: bad.len(),
                });
            }
            for (i, stage) in block.chunks_mut(n).enumerate() {
                for (j, b) in samples.iter().enumerate() {
                    let q = grid.dt * tableau.q(i, j);
                    stage.iter_mut().zip(b).for_each(|(s, &v)| *s += q * v);
                }
            }
        }
        if l == 0 {
            for stage in block.chunks_mut(n) {
                stage.iter_mut().zip(&ivp.initial).for_each(|(s, &u)| *s += u);
            }
        }
        blocks.push(block);
    }
    Ok(blocks)
}

pub fn blocks_norm_inf(blocks: &[Vec<Complex64>]) -> f64 {
    blocks
        .iter()
        .flat_map(|b| b.iter())
        .map(|v| v.norm())
        .fold(0.0, f64::max)
}
