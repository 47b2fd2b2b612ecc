//! Right-included Gauss–Radau nodes on [0, 1] and the collocation
//! integration matrix `Q`, `q[m][i] = ∫_0^{t_m} c_i(s) ds`.
//!
//! Nodes are the roots of `P_{M-1} + P_M` (Legendre) mapped through
//! `x = 1 - 2t`, so the Radau endpoint `x = -1` becomes `t = 1`.

use serde::Serialize;

use crate::error::{PintError, Result};
use crate::poly;

/// Largest stage count accepted by [`radau_nodes`]; Newton refinement is
/// only validated up to this size.
pub const MAX_NODES: usize = 9;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_ACCEPT: f64 = 1e-14;
const NEWTON_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollocationTableau {
    pub m_nodes: usize,
    pub nodes: Vec<f64>,
    /// Row-major `M x M` integration matrix.
    pub q_matrix: Vec<Vec<f64>>,
    /// Monic node polynomial `w_M(t) = prod (t - t_m)`, ascending order,
    /// `w_poly[M] == 1`.
    pub w_poly: Vec<f64>,
}

impl CollocationTableau {
    /// Tableau on the `M` right-included Radau nodes.
    pub fn radau(m: usize) -> Result<Self> {
        build_tableau(&radau_nodes(m)?)
    }

    pub fn stages(&self) -> usize {
        self.m_nodes
    }

    pub fn q(&self, m: usize, i: usize) -> f64 {
        self.q_matrix[m][i]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tableau serializes")
    }
}

fn check_stage_count(m: usize) -> Result<()> {
    if m == 0 {
        return Err(PintError::invalid("number of collocation nodes must be positive"));
    }
    if m > MAX_NODES {
        return Err(PintError::invalid(format!(
            "at most {MAX_NODES} Radau nodes are supported, got {m}"
        )));
    }
    Ok(())
}

/// Legendre polynomial `P_n` and its derivative at `x` via the three-term
/// recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut prev, mut cur) = (1.0, x);
    let (mut dprev, mut dcur) = (0.0, 1.0);
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * cur - kf * prev) / (kf + 1.0);
        let dnext = ((2.0 * kf + 1.0) * (cur + x * dcur) - kf * dprev) / (kf + 1.0);
        prev = cur;
        cur = next;
        dprev = dcur;
        dcur = dnext;
    }
    (cur, dcur)
}

/// Monomial coefficients of `P_n`, ascending order.
fn legendre_coefficients(n: usize) -> Vec<f64> {
    let mut prev = vec![1.0];
    if n == 0 {
        return prev;
    }
    let mut cur = vec![0.0, 1.0];
    for k in 1..n {
        let kf = k as f64;
        let mut next = vec![0.0; k + 2];
        for (j, &c) in cur.iter().enumerate() {
            next[j + 1] += (2.0 * kf + 1.0) * c / (kf + 1.0);
        }
        for (j, &c) in prev.iter().enumerate() {
            next[j] -= kf * c / (kf + 1.0);
        }
        prev = cur;
        cur = next;
    }
    cur
}

/// The `M` right-included Gauss–Radau nodes on (0, 1], ascending, with the
/// last node exactly `1.0`.
pub fn radau_nodes(m: usize) -> Result<Vec<f64>> {
    check_stage_count(m)?;
    let radau = |x: f64| {
        let (p0, d0) = legendre(m - 1, x);
        let (p1, d1) = legendre(m, x);
        (p0 + p1, d0 + d1)
    };

    // Interior roots of R_M on (-1, 1); x = -1 is a root for every M.
    let mut found: Vec<f64> = Vec::with_capacity(m - 1);
    for k in 1..m {
        let mut x = -(2.0 * std::f64::consts::PI * k as f64 / (2 * m - 1) as f64).cos();
        let mut last_step = f64::INFINITY;
        for _ in 0..NEWTON_MAX_ITER {
            let (r, dr) = radau(x);
            // Newton on R(x) / ((x + 1) prod (x - x_j)), deflating known roots.
            let deflation: f64 =
                1.0 / (x + 1.0) + found.iter().map(|&xj| 1.0 / (x - xj)).sum::<f64>();
            let step = r / (dr - r * deflation);
            x -= step;
            last_step = step.abs();
            if last_step < NEWTON_TOL {
                break;
            }
        }
        if !(last_step < NEWTON_ACCEPT) || !(x > -1.0 && x < 1.0) {
            return Err(PintError::RootRefinement(format!(
                "Radau node {k} of M = {m} did not converge (last step {last_step:e})"
            )));
        }
        found.push(x);
    }

    let mut nodes: Vec<f64> = found.iter().map(|&x| (1.0 - x) / 2.0).collect();
    nodes.push(1.0);
    nodes.sort_by(f64::total_cmp);
    Ok(nodes)
}

/// Monic coefficients (ascending) of the polynomial colinear with
/// `(P_{M-1} + P_M)(1 - 2t)`.
///
/// Built from the Legendre monomial expansion, independently of the
/// Newton-refined nodes.
pub fn radau_poly(m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(PintError::invalid("number of collocation nodes must be positive"));
    }
    let mut r = legendre_coefficients(m);
    for (k, c) in legendre_coefficients(m - 1).into_iter().enumerate() {
        r[k] += c;
    }
    // Substitute x = 1 - 2t.
    let mut composed = vec![0.0; m + 1];
    let mut power = vec![1.0];
    for &c in &r {
        for (j, &p) in power.iter().enumerate() {
            composed[j] += c * p;
        }
        power = poly::mul_real(&power, &[1.0, -2.0]);
    }
    let lead = composed[m];
    Ok(composed.into_iter().map(|c| c / lead).collect())
}

/// Integration matrix for arbitrary distinct nodes in (0, 1].
///
/// Each Lagrange basis polynomial is expanded into monomials and
/// integrated analytically.
pub fn build_tableau(nodes: &[f64]) -> Result<CollocationTableau> {
    if nodes.is_empty() {
        return Err(PintError::invalid("at least one collocation node is required"));
    }
    if nodes.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return Err(PintError::invalid("collocation nodes must lie in (0, 1]"));
    }
    if nodes.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(PintError::DuplicateNodes);
    }
    let m = nodes.len();
    let basis: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut c = vec![1.0];
            for (j, &tj) in nodes.iter().enumerate() {
                if j != i {
                    let denom = nodes[i] - tj;
                    c = poly::mul_real(&c, &[-tj / denom, 1.0 / denom]);
                }
            }
            c
        })
        .collect();

    let q_matrix = nodes
        .iter()
        .map(|&tm| {
            basis
                .iter()
                .map(|c| {
                    // ∫_0^{tm} sum c_k s^k ds, Horner in tm
                    let antiderivative: Vec<f64> = std::iter::once(0.0)
                        .chain(c.iter().enumerate().map(|(k, &ck)| ck / (k + 1) as f64))
                        .collect();
                    poly::eval_real(&antiderivative, tm)
                })
                .collect()
        })
        .collect();

    Ok(CollocationTableau {
        m_nodes: m,
        nodes: nodes.to_vec(),
        q_matrix,
        w_poly: poly::from_roots(nodes),
    })
}
