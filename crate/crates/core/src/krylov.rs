//! Restarted GMRES for the shifted systems `(I - s A) x = y`.

use num_complex::Complex64;
use serde::Serialize;

use crate::linalg::{vec_norm2, ZERO};
use crate::problems::CsrMatrix;

pub const DEFAULT_RESTART: usize = 50;
pub const MAX_ITER_CAP: usize = 10_000;

/// `I - shift * A`.
#[derive(Debug, Clone, Copy)]
pub struct ShiftedOperator<'a> {
    pub base: &'a CsrMatrix,
    pub shift: Complex64,
}

impl<'a> ShiftedOperator<'a> {
    pub fn new(base: &'a CsrMatrix, shift: Complex64) -> Self {
        ShiftedOperator { base, shift }
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn apply_into(&self, x: &[Complex64], out: &mut [Complex64]) {
        self.base.apply_into(x, out);
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = xi - self.shift * *o;
        }
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.dim()];
        self.apply_into(x, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GmresConfig {
    /// Relative 2-norm residual target.
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl GmresConfig {
    /// Restart 50 and `min(10 N, 10^4)` iterations.
    pub fn for_dim(dim: usize, tol: f64) -> Self {
        GmresConfig {
            tol,
            restart: DEFAULT_RESTART,
            max_iter: (10 * dim).clamp(1, MAX_ITER_CAP),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    /// `||b - M x|| / ||b||` recomputed from the returned iterate.
    pub residual: f64,
    /// Final Arnoldi estimate of the same quantity.
    pub estimate: f64,
    pub converged: bool,
    /// Relative residual estimate after every inner iteration, starting with
    /// the initial residual.
    pub history: Vec<f64>,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn true_residual(op: &ShiftedOperator, rhs: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
    let mut r = op.apply(x);
    for (ri, &bi) in r.iter_mut().zip(rhs) {
        *ri = bi - *ri;
    }
    r
}

/// Rotation `[c s; -conj(s) c]` mapping `(a, b)` to `(rho, 0)`.
fn givens(a: Complex64, b: Complex64) -> (f64, Complex64, Complex64) {
    if b == ZERO {
        return (1.0, ZERO, a);
    }
    if a == ZERO {
        let nb = b.norm();
        return (0.0, b.conj() / nb, Complex64::new(nb, 0.0));
    }
    let na = a.norm();
    let rho = na.hypot(b.norm());
    let phase = a / na;
    (na / rho, phase * b.conj() / rho, phase * rho)
}

/// Solves `op x = rhs` starting from `x0` (zero if `None`).
///
/// Each restart cycle re-evaluates the true residual. The solve ends when
/// that residual meets `tol`, when `max_iter` inner iterations are spent,
/// or when a full cycle fails to reduce the true residual (stagnation at
/// the round-off floor). `converged` reports whether `tol` was met.
pub fn gmres(
    op: &ShiftedOperator,
    rhs: &[Complex64],
    x0: Option<&[Complex64]>,
    config: &GmresConfig,
) -> (Vec<Complex64>, SolveStats) {
    let n = op.dim();
    assert_eq!(rhs.len(), n, "right-hand side length");
    let mut x = x0.map_or_else(|| vec![ZERO; n], <[Complex64]>::to_vec);
    let b_norm = vec_norm2(rhs);
    if b_norm == 0.0 {
        return (
            vec![ZERO; n],
            SolveStats {
                iterations: 0,
                residual: 0.0,
                estimate: 0.0,
                converged: true,
                history: vec![0.0],
            },
        );
    }
    let restart = config.restart.max(1);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut estimate;
    let mut best = f64::INFINITY;
    loop {
        let r = true_residual(op, rhs, &x);
        let beta = vec_norm2(&r);
        let rel = beta / b_norm;
        if history.is_empty() {
            history.push(rel);
        }
        estimate = *history.last().unwrap();
        if rel <= config.tol || iterations >= config.max_iter || rel >= best {
            let converged = rel <= config.tol;
            return (
                x,
                SolveStats {
                    iterations,
                    residual: rel,
                    estimate,
                    converged,
                    history,
                },
            );
        }
        best = rel;

        let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(restart + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        // column j of the Hessenberg matrix, already rotated
        let mut hess: Vec<Vec<Complex64>> = Vec::with_capacity(restart);
        let mut rotations: Vec<(f64, Complex64)> = Vec::with_capacity(restart);
        let mut g = vec![Complex64::new(beta, 0.0)];
        let mut w = vec![ZERO; n];
        for j in 0..restart {
            if iterations >= config.max_iter {
                break;
            }
            op.apply_into(&basis[j], &mut w);
            let mut h = vec![ZERO; j + 2];
            for _pass in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(v, &w);
                    h[i] += c;
                    w.iter_mut().zip(v).for_each(|(wk, &vk)| *wk -= c * vk);
                }
            }
            let h_next = vec_norm2(&w);
            h[j + 1] = Complex64::new(h_next, 0.0);
            for (i, &(c, s)) in rotations.iter().enumerate() {
                let (a, b) = (h[i], h[i + 1]);
                h[i] = c * a + s * b;
                h[i + 1] = -s.conj() * a + c * b;
            }
            let (c, s, rho) = givens(h[j], h[j + 1]);
            h[j] = rho;
            h.truncate(j + 1);
            rotations.push((c, s));
            let gj = g[j];
            g[j] = c * gj;
            g.push(-s.conj() * gj);
            hess.push(h);
            iterations += 1;
            let est = g[j + 1].norm() / b_norm;
            history.push(est);
            if h_next == 0.0 || est <= config.tol {
                break;
            }
            basis.push(w.iter().map(|v| v / h_next).collect());
        }

        let k = hess.len();
        let mut y = vec![ZERO; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for (jj, yj) in y.iter().enumerate().skip(i + 1) {
                acc -= hess[jj][i] * yj;
            }
            y[i] = acc / hess[i][i];
        }
        for (v, &yi) in basis.iter().zip(&y) {
            x.iter_mut().zip(v).for_each(|(xk, &vk)| *xk += yi * vk);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::heat_operator;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn zero_shift_is_identity() {
        let a = heat_operator(8, 2).unwrap();
        let op = ShiftedOperator::new(&a, ZERO);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_vec(&mut rng, 64);
        let (x, stats) = gmres(&op, &b, None, &GmresConfig::for_dim(64, 1e-14));
        assert!(stats.converged);
        assert!(stats.iterations <= 1);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).norm() < 1e-14);
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let a = heat_operator(8, 2).unwrap();
        let op = ShiftedOperator::new(&a, c(0.1, 0.0));
        let (x, stats) = gmres(&op, &[ZERO; 64], None, &GmresConfig::for_dim(64, 1e-12));
        assert!(stats.converged && stats.iterations == 0);
        assert!(x.iter().all(|v| *v == ZERO));
    }

    #[test]
    fn diagonal_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let diag: Vec<Complex64> = (0..30).map(|_| c(rng.random_range(-5.0..0.0), 0.0)).collect();
        let a = CsrMatrix::diagonal(&diag);
        let s = c(0.3, -0.2);
        let op = ShiftedOperator::new(&a, s);
        let b = random_vec(&mut rng, 30);
        let tol = 1e-12;
        let (x, stats) = gmres(&op, &b, None, &GmresConfig::for_dim(30, tol));
        assert!(stats.converged);
        for ((xi, bi), ai) in x.iter().zip(&b).zip(&diag) {
            let want = bi / (1.0 - s * ai);
            assert!((xi - want).norm() <= 10.0 * tol * vec_norm2(&b));
        }
    }

    #[test]
    fn heat_matches_dense_solve() {
        let a = heat_operator(16, 2).unwrap();
        let s = c(-0.01, 0.0);
        let op = ShiftedOperator::new(&a, s);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_vec(&mut rng, 256);
        let (x, stats) = gmres(&op, &b, None, &GmresConfig::for_dim(256, 1e-12));
        assert!(stats.converged, "{stats:?}");
        let dense = crate::linalg::CMatrix::identity(256, 256) - a.to_dense() * s;
        let want = dense
            .lu()
            .solve(&nalgebra::DVector::from_column_slice(&b))
            .unwrap();
        for (xi, wi) in x.iter().zip(want.iter()) {
            assert!((xi - wi).norm() < 1e-10);
        }
    }

    #[test]
    fn estimate_tracks_true_residual() {
        let a = heat_operator(16, 4).unwrap();
        let s = c(-2e-3, 1e-3);
        let op = ShiftedOperator::new(&a, s);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = random_vec(&mut rng, 256);
        let (x, stats) = gmres(&op, &b, None, &GmresConfig::for_dim(256, 1e-13));
        assert!(stats.converged);
        let scale = (1.0 + s.norm() * a.norm_inf()) * vec_norm2(&x) / vec_norm2(&b);
        assert!((stats.residual - stats.estimate).abs() <= 10.0 * f64::EPSILON * scale);
    }

    #[test]
    fn unreachable_tolerance_reports_nonconvergence() {
        let a = heat_operator(16, 2).unwrap();
        let op = ShiftedOperator::new(&a, c(-1.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = random_vec(&mut rng, 256);
        let (_, stats) = gmres(&op, &b, None, &GmresConfig::for_dim(256, 1e-30));
        assert!(!stats.converged);
        assert!(stats.residual < 1e-12);
        assert_abs_diff_eq!(stats.history[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn iteration_cap_is_respected() {
        let a = heat_operator(16, 2).unwrap();
        let op = ShiftedOperator::new(&a, c(-1.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let b = random_vec(&mut rng, 256);
        let config = GmresConfig {
            tol: 1e-14,
            restart: 3,
            max_iter: 7,
        };
        let (_, stats) = gmres(&op, &b, None, &config);
        assert_eq!(stats.iterations, 7);
        assert!(!stats.converged);
    }
}
