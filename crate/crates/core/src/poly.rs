//! Dense univariate polynomials in ascending coefficient order and a
//! simultaneous (Aberth–Ehrlich) root finder.

use num_complex::Complex64;

use crate::error::{PintError, Result};

/// Evaluates `sum c_k x^k` by Horner's rule.
pub fn eval_real(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

pub fn eval_complex(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

pub fn mul_real(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn mul_complex(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn derivative_complex(coeffs: &[Complex64]) -> Vec<Complex64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| c * k as f64)
        .collect()
}

/// Monic polynomial with the given real roots.
pub fn from_roots(roots: &[f64]) -> Vec<f64> {
    roots
        .iter()
        .fold(vec![1.0], |acc, &r| mul_real(&acc, &[-r, 1.0]))
}

/// Drops leading coefficients whose magnitude is below `rel_tol` times the
/// largest coefficient.
pub fn trim_complex(coeffs: &[Complex64], rel_tol: f64) -> Vec<Complex64> {
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut end = coeffs.len();
    while end > 1 && coeffs[end - 1].norm() <= rel_tol * scale {
        end -= 1;
    }
    coeffs[..end].to_vec()
}

const ABERTH_MAX_ITER: usize = 2000;

/// All complex roots of a polynomial given in ascending order.
///
/// Aberth–Ehrlich iteration from points on a circle, stopped when every
/// root has backward error at the rounding level, then polished with a
/// few Newton steps. Roots are returned sorted by (re, im).
pub fn roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let coeffs = trim_complex(coeffs, 0.0);
    let degree = coeffs.len().saturating_sub(1);
    if degree == 0 {
        return Ok(Vec::new());
    }
    let lead = coeffs[degree];
    let monic: Vec<Complex64> = coeffs.iter().map(|&c| c / lead).collect();
    if degree == 1 {
        return Ok(vec![-monic[0]]);
    }
    let deriv = derivative_complex(&monic);
    let abs_coeffs: Vec<f64> = monic.iter().map(|c| c.norm()).collect();

    // Cauchy bound on the root moduli.
    let radius = 1.0
        + monic[..degree]
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
    let start_radius = radius.min(
        // geometric mean of the roots is a better initial circle
        monic[0].norm().powf(1.0 / degree as f64).max(1e-3),
    );
    let mut z: Vec<Complex64> = (0..degree)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / degree as f64 + 0.4;
            Complex64::from_polar(start_radius, theta)
        })
        .collect();

    let backward_ok = |zk: Complex64| {
        let pv = eval_complex(&monic, zk).norm();
        let bound = eval_real(&abs_coeffs, zk.norm());
        pv <= 8.0 * (degree as f64) * f64::EPSILON * bound
    };

    let mut done = vec![false; degree];
    for _ in 0..ABERTH_MAX_ITER {
        let mut all_done = true;
        for i in 0..degree {
            if done[i] {
                continue;
            }
            let p = eval_complex(&monic, z[i]);
            let dp = eval_complex(&deriv, z[i]);
            if p.norm() == 0.0 || backward_ok(z[i]) {
                done[i] = true;
                continue;
            }
            all_done = false;
            let ratio = p / dp;
            let repulsion: Complex64 = (0..degree)
                .filter(|&j| j != i)
                .map(|j| (z[i] - z[j]).inv())
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if step.is_finite() {
                z[i] -= step;
            } else {
                z[i] -= ratio;
            }
        }
        if all_done {
            break;
        }
    }
    if !z.iter().all(|&zk| backward_ok(zk)) {
        return Err(PintError::RootRefinement(format!(
            "Aberth iteration failed for degree-{degree} polynomial"
        )));
    }
    for zk in z.iter_mut() {
        for _ in 0..3 {
            let dp = eval_complex(&deriv, *zk);
            if dp.norm() == 0.0 {
                break;
            }
            let step = eval_complex(&monic, *zk) / dp;
            let candidate = *zk - step;
            if eval_complex(&monic, candidate).norm() < eval_complex(&monic, *zk).norm() {
                *zk = candidate;
            } else {
                break;
            }
        }
    }
    sort_complex(&mut z);
    Ok(z)
}

pub fn sort_complex(values: &mut [Complex64]) {
    values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Largest distance after greedily pairing each value of `a` with its
/// nearest unused value of `b`. Insensitive to ordering ties that a plain
/// sort would break on rounding noise.
pub fn pairing_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for &x in a {
        let (idx, dist) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, &y)| (j, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .expect("equal lengths");
        used[idx] = true;
        worst = worst.max(dist);
    }
    worst
}
