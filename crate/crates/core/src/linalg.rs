//! Small dense complex linear algebra used on `M x M` stage matrices, and
//! the fixed-order summation shared by the serial and distributed paths.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Eigendecomposition `A = S diag(values) S^-1` of a small complex matrix.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<Complex64>,
    /// Columns are unit 2-norm eigenvectors.
    pub vectors: CMatrix,
    pub inverse: CMatrix,
}

/// Eigendecomposition through the complex Schur form `A = Z T Z*`:
/// eigenvectors of the triangular factor by back substitution, mapped back
/// by `Z`. Returns `None` when the eigenvector matrix is singular.
pub fn eigen(a: &CMatrix) -> Option<Eigen> {
    let n = a.nrows();
    let schur = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, 10_000)?;
    let (z, t) = schur.unpack();
    let values: Vec<Complex64> = (0..n).map(|k| t[(k, k)]).collect();

    let mut v = CMatrix::zeros(n, n);
    for k in 0..n {
        v[(k, k)] = ONE;
        for j in (0..k).rev() {
            let mut acc = ZERO;
            for i in j + 1..=k {
                acc += t[(j, i)] * v[(i, k)];
            }
            let denom = t[(j, j)] - values[k];
            if denom.norm() == 0.0 {
                return None;
            }
            v[(j, k)] = -acc / denom;
        }
    }
    let mut vectors = z * v;
    for mut col in vectors.column_iter_mut() {
        let norm = col.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        col.iter_mut().for_each(|c| *c /= norm);
    }
    let inverse = vectors.clone().try_inverse()?;
    Some(Eigen {
        values,
        vectors,
        inverse,
    })
}

/// Smallest pairwise distance between eigenvalues (infinite for one value).
pub fn min_gap(values: &[Complex64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            gap = gap.min((values[i] - values[j]).norm());
        }
    }
    gap
}

pub fn spectral_radius(values: &[Complex64]) -> f64 {
    values.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Infinity-norm (max absolute row sum).
pub fn norm_inf(a: &CMatrix) -> f64 {
    a.row_iter()
        .map(|row| row.iter().map(|c| c.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Infinity norm of a vector.
pub fn vec_norm_inf(x: &[Complex64]) -> f64 {
    x.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

pub fn vec_norm2(x: &[Complex64]) -> f64 {
    x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Elementwise sum of equally sized vectors in binary-tree order: at stride
/// `s = 1, 2, 4, ...` slot `i` (a multiple of `2s`) absorbs slot `i + s`.
/// The distributed reduction uses exactly this pairing, so both paths give
/// bitwise identical sums.
pub fn tree_sum(mut parts: Vec<Vec<Complex64>>) -> Vec<Complex64> {
    let n = parts.len();
    assert!(n > 0, "tree_sum needs at least one operand");
    let mut stride = 1;
    while stride < n {
        let mut i = 0;
        while i + stride < n {
            let (lo, hi) = parts.split_at_mut(i + stride);
            add_assign(&mut lo[i], &hi[0]);
            i += 2 * stride;
        }
        stride *= 2;
    }
    parts.swap_remove(0)
}

pub fn add_assign(acc: &mut [Complex64], other: &[Complex64]) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a += *b;
    }
}

/// Contribution of stage `j` to output stage `m`: `a[m][j] * x_j`.
pub fn scaled(coefficient: Complex64, x: &[Complex64]) -> Vec<Complex64> {
    x.iter().map(|&v| coefficient * v).collect()
}

/// `out_m = sum_j a[(m, j)] x_j` over stage vectors, summed with
/// [`tree_sum`].
pub fn mix_stages(a: &CMatrix, stages: &[&[Complex64]]) -> Vec<Vec<Complex64>> {
    (0..a.nrows())
        .map(|m| {
            tree_sum(
                stages
                    .iter()
                    .enumerate()
                    .map(|(j, x)| scaled(a[(m, j)], x))
                    .collect(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_sum_pairs_in_fixed_order() {
        let parts: Vec<Vec<Complex64>> = (0..5)
            .map(|k| vec![Complex64::new(10f64.powi(k), 0.0)])
            .collect();
        // ((p0 + p1) + (p2 + p3)) + p4
        let want = ((1.0 + 10.0) + (100.0 + 1000.0)) + 10000.0;
        assert_eq!(tree_sum(parts)[0].re, want);
    }

    #[test]
    fn eigen_reconstructs_nonnormal_matrix() {
        let a = CMatrix::from_row_slice(
            3,
            3,
            &[
                Complex64::new(1.0, 0.5),
                Complex64::new(2.0, 0.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(-1.0, 0.0),
                Complex64::new(3.0, -1.0),
                Complex64::new(0.5, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(2.0, 2.0),
            ],
        );
        let e = eigen(&a).unwrap();
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(e.values.clone()));
        let rec = &e.vectors * d * &e.inverse;
        assert!(norm_inf(&(rec - a)) < 1e-12);
    }

    #[test]
    fn mix_with_identity_is_identity() {
        let x = vec![vec![Complex64::new(1.0, 2.0)], vec![Complex64::new(-3.0, 0.5)]];
        let refs: Vec<&[Complex64]> = x.iter().map(|v| v.as_slice()).collect();
        let out = mix_stages(&CMatrix::identity(2, 2), &refs);
        assert_eq!(out, x);
    }
}
