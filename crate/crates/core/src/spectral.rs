//! Diagonalization of the alpha-circulant step coupling and of the shifted
//! stage matrices `Q G_l^-1`.
//!
//! # DFT convention
//!
//! The circulant factorization is `E_alpha = V D V^-1` with
//! `V = (1/L) J F`, `V^-1 = F^* J^-1`, `F[j][k] = exp(+2 pi i jk / L)` and
//! `J = diag(alpha^{-l/L})` (0-based `l`). `F^*` therefore carries the
//! negative exponent of the usual "forward" FFT, and `(1/L) F` is the usual
//! inverse FFT. [`forward_transform`] applies `F^* J^-1` with a
//! decimation-in-frequency radix-2 pass and leaves its output in
//! bit-reversed order: slot `p` holds spectral index `bit_reverse(p)`.
//! [`inverse_transform`] consumes that order with a decimation-in-time pass
//! and returns natural order.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::collocation::CollocationTableau;
use crate::error::{PintError, Result};
use crate::linalg::{self, CMatrix, ONE, ZERO};
use crate::poly;

/// Eigenvalue-gap cutoff relative to the spectral radius below which
/// `Q G^-1` is treated as defective.
pub const DEFECTIVE_GAP: f64 = 1e-7;

/// Largest stage count for which the resultant-based forbidden set is
/// computed.
pub const MAX_FORBIDDEN_STAGES: usize = 5;

pub fn is_power_of_two(n: usize) -> bool {
    n >= 1 && n & (n - 1) == 0
}

pub fn bit_reverse(index: usize, len: usize) -> usize {
    let bits = len.trailing_zeros();
    if bits == 0 {
        return 0;
    }
    index.reverse_bits() >> (usize::BITS - bits)
}

/// Twiddle `exp(sign * 2 pi i j / span)`.
pub fn twiddle(j: usize, span: usize, sign: f64) -> Complex64 {
    Complex64::from_polar(1.0, sign * 2.0 * PI * j as f64 / span as f64)
}

// Butterfly kernels. Each writes one side of a radix-2 pair from the two
// inputs, so a rank holding only one block computes the same bits as the
// in-place serial transform.

/// DIF lower output `a + b`.
pub fn dif_lower(a: &[Complex64], b: &[Complex64], out: &mut [Complex64]) {
    for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
        *o = x + y;
    }
}

/// DIF upper output `(a - b) w`.
pub fn dif_upper(a: &[Complex64], b: &[Complex64], w: Complex64, out: &mut [Complex64]) {
    for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
        *o = (x - y) * w;
    }
}

/// DIT lower output `a + b w`.
pub fn dit_lower(a: &[Complex64], b: &[Complex64], w: Complex64, out: &mut [Complex64]) {
    for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
        *o = x + y * w;
    }
}

/// DIT upper output `a - b w`.
pub fn dit_upper(a: &[Complex64], b: &[Complex64], w: Complex64, out: &mut [Complex64]) {
    for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
        *o = x - y * w;
    }
}

/// Half-distance between butterfly partners at forward stage `stage`.
pub fn forward_half(len: usize, stage: usize) -> usize {
    len >> (stage + 1)
}

/// Half-distance between butterfly partners at inverse stage `stage`.
pub fn inverse_half(stage: usize) -> usize {
    1 << stage
}

/// The `J`-scalings and length of the scaled time transform.
#[derive(Debug, Clone, Serialize)]
pub struct TimeTransform {
    pub len: usize,
    pub alpha: f64,
    /// `alpha^{l/L}`, applied before the forward DFT.
    pub forward_scale: Vec<f64>,
    /// `alpha^{-l/L} / L`, applied after the inverse DFT.
    pub inverse_scale: Vec<f64>,
}

impl TimeTransform {
    /// Accepts `alpha` in (0, 1]; `alpha = 1` gives the plain DFT pair.
    pub fn new(len: usize, alpha: f64) -> Result<Self> {
        if !is_power_of_two(len) {
            return Err(PintError::invalid(format!(
                "number of time steps must be a power of two, got {len}"
            )));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(PintError::invalid(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        let lf = len as f64;
        Ok(TimeTransform {
            len,
            alpha,
            forward_scale: (0..len).map(|l| alpha.powf(l as f64 / lf)).collect(),
            inverse_scale: (0..len).map(|l| alpha.powf(-(l as f64) / lf) / lf).collect(),
        })
    }

    pub fn stages(&self) -> usize {
        self.len.trailing_zeros() as usize
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CirculantFactors {
    pub len: usize,
    pub alpha: f64,
    /// `d_l = -alpha^{1/L} exp(-2 pi i l / L)`, natural (0-based) order.
    pub d: Vec<Complex64>,
    /// Diagonal of `J`, `alpha^{-l/L}`.
    pub j_scale: Vec<f64>,
    pub transform: TimeTransform,
}

impl CirculantFactors {
    /// Eigenvalue paired with forward-output slot `p`.
    pub fn d_for_slot(&self, slot: usize) -> Complex64 {
        self.d[bit_reverse(slot, self.len)]
    }
}

pub fn diagonalize_circulant(len: usize, alpha: f64) -> Result<CirculantFactors> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(PintError::invalid(format!(
            "alpha must lie in (0, 1) for a nonsingular G_l, got {alpha}"
        )));
    }
    let transform = TimeTransform::new(len, alpha)?;
    let lf = len as f64;
    let modulus = alpha.powf(1.0 / lf);
    let d = (0..len)
        .map(|l| -Complex64::from_polar(modulus, -2.0 * PI * l as f64 / lf))
        .collect();
    let j_scale = (0..len).map(|l| alpha.powf(-(l as f64) / lf)).collect();
    Ok(CirculantFactors {
        len,
        alpha,
        d,
        j_scale,
        transform,
    })
}

fn check_blocks(blocks: &[Vec<Complex64>], len: usize) -> Result<()> {
    if blocks.len() != len {
        return Err(PintError::DimensionMismatch {
            expected: len,
            found: blocks.len(),
        });
    }
    if let Some(first) = blocks.first() {
        if let Some(bad) = blocks.iter().find(|b| b.len() != first.len()) {
            return Err(PintError::DimensionMismatch {
                expected: first.len(),
                found: bad.len(),
            });
        }
    }
    Ok(())
}

/// `x = (F^* J^-1) r`, output in bit-reversed order.
pub fn forward_transform(
    blocks: &[Vec<Complex64>],
    transform: &TimeTransform,
) -> Result<Vec<Vec<Complex64>>> {
    let len = transform.len;
    check_blocks(blocks, len)?;
    let mut cur: Vec<Vec<Complex64>> = blocks
        .iter()
        .zip(&transform.forward_scale)
        .map(|(b, &s)| b.iter().map(|&v| v * s).collect())
        .collect();
    let mut next = cur.clone();
    for stage in 0..transform.stages() {
        let half = forward_half(len, stage);
        let span = 2 * half;
        for a in (0..len).filter(|a| a & half == 0) {
            let b = a + half;
            let w = twiddle(a % span, span, -1.0);
            dif_lower(&cur[a], &cur[b], &mut next[a]);
            dif_upper(&cur[a], &cur[b], w, &mut next[b]);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

/// `u = ((1/L) J F) y` for `y` in bit-reversed order; output in natural order.
pub fn inverse_transform(
    blocks: &[Vec<Complex64>],
    transform: &TimeTransform,
) -> Result<Vec<Vec<Complex64>>> {
    let len = transform.len;
    check_blocks(blocks, len)?;
    let mut cur = blocks.to_vec();
    let mut next = cur.clone();
    for stage in 0..transform.stages() {
        let half = inverse_half(stage);
        let span = 2 * half;
        for a in (0..len).filter(|a| a & half == 0) {
            let b = a + half;
            let w = twiddle(a % span, span, 1.0);
            dit_lower(&cur[a], &cur[b], w, &mut next[a]);
            dit_upper(&cur[a], &cur[b], w, &mut next[b]);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    for (block, &s) in cur.iter_mut().zip(&transform.inverse_scale) {
        block.iter_mut().for_each(|v| *v *= s);
    }
    Ok(cur)
}

/// Per-step inner factorization `Q G_l^-1 = S_l D_l S_l^-1`.
#[derive(Debug, Clone)]
pub struct StepFactors {
    /// 1-based spectral index `l` of `d_l`.
    pub l_index: usize,
    pub d_l: Complex64,
    pub r_l: Complex64,
    pub s_matrix: CMatrix,
    pub d_inner: Vec<Complex64>,
    pub s_inverse: CMatrix,
    /// `G_l^-1 = I - r_l H_M`.
    pub g_inverse: CMatrix,
    /// `Q G_l^-1 = Q - r_l D_t H_M`.
    pub qg_inverse: CMatrix,
}

impl StepFactors {
    pub fn condition(&self) -> f64 {
        linalg::norm_inf(&self.s_matrix) * linalg::norm_inf(&self.s_inverse)
    }

    pub fn reconstruction_error(&self) -> f64 {
        let d = CMatrix::from_diagonal(&DVector::from_vec(self.d_inner.clone()));
        linalg::norm_inf(&(&self.s_matrix * d * &self.s_inverse - &self.qg_inverse))
    }
}

/// `Q - r D_t H_M`: the last column of `Q` shifted by `-r t_m`.
pub fn shifted_stage_matrix(tableau: &CollocationTableau, r: Complex64) -> CMatrix {
    let m = tableau.stages();
    CMatrix::from_fn(m, m, |i, j| {
        let q = Complex64::new(tableau.q(i, j), 0.0);
        if j == m - 1 {
            q - r * tableau.nodes[i]
        } else {
            q
        }
    })
}

/// `G^-1 = I - r H_M`.
pub fn g_inverse(m: usize, r: Complex64) -> CMatrix {
    CMatrix::from_fn(m, m, |i, j| {
        let id = if i == j { ONE } else { ZERO };
        if j == m - 1 {
            id - r
        } else {
            id
        }
    })
}

/// Factors the inner system of spectral index `l_index` (1-based) with
/// circulant eigenvalue `d_l`.
pub fn factor_step(
    tableau: &CollocationTableau,
    l_index: usize,
    d_l: Complex64,
) -> Result<StepFactors> {
    let one_plus_d = ONE + d_l;
    if one_plus_d.norm() < 1e-14 {
        return Err(PintError::invalid("1 + d_l vanishes, G_l is singular"));
    }
    let r_l = d_l / one_plus_d;
    let m = tableau.stages();
    let qg_inverse = shifted_stage_matrix(tableau, r_l);
    let eig = linalg::eigen(&qg_inverse);
    let threshold_for = |values: &[Complex64]| DEFECTIVE_GAP * linalg::spectral_radius(values);
    let eig = match eig {
        Some(e) => e,
        None => {
            return Err(PintError::NotDiagonalizable {
                r: r_l,
                gap: 0.0,
                threshold: 0.0,
            })
        }
    };
    let gap = linalg::min_gap(&eig.values);
    let threshold = threshold_for(&eig.values);
    if gap < threshold {
        return Err(PintError::NotDiagonalizable {
            r: r_l,
            gap,
            threshold,
        });
    }
    Ok(StepFactors {
        l_index,
        d_l,
        r_l,
        s_matrix: eig.vectors,
        d_inner: eig.values,
        s_inverse: eig.inverse,
        g_inverse: g_inverse(m, r_l),
        qg_inverse,
    })
}

/// Scaled characteristic polynomial `p_M(lambda) = M! lambda^M + ... + c_0`
/// in its closed coefficient form
///
/// `c_0 = (r + 1) b_0`,
/// `c_m = m! b_m - r sum_{j=1}^{M-m} (m+j)!/j! b_{m+j}`, `c_M = M!`,
///
/// with `b` the monic node polynomial. Its roots are the eigenvalues of
/// `Q + r D_t H_M`, i.e. of `Q G^-1` at the reflected shift `-r`; use
/// [`stage_char_poly`] for the shift of `Q G^-1 = Q - r D_t H_M` itself.
#[derive(Debug, Clone, Serialize)]
pub struct CharPoly {
    pub degree: usize,
    /// `c_0 ..= c_M`.
    pub coefficients: Vec<Complex64>,
    /// Parameter the coefficients were evaluated at.
    pub r: Complex64,
}

impl CharPoly {
    pub fn eval(&self, lambda: Complex64) -> Complex64 {
        poly::eval_complex(&self.coefficients, lambda)
    }

    pub fn roots(&self) -> Result<Vec<Complex64>> {
        poly::roots(&self.coefficients)
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Closed-form coefficients split as `base + r * slope`.
fn char_poly_parts(tableau: &CollocationTableau) -> (Vec<f64>, Vec<f64>) {
    let m = tableau.stages();
    let b = &tableau.w_poly;
    let mut base = vec![0.0; m + 1];
    let mut slope = vec![0.0; m + 1];
    base[0] = b[0];
    slope[0] = b[0];
    for k in 1..m {
        base[k] = factorial(k) * b[k];
        slope[k] = -(1..=m - k)
            .map(|j| factorial(k + j) / factorial(j) * b[k + j])
            .sum::<f64>();
    }
    base[m] = factorial(m);
    (base, slope)
}

pub fn char_poly(tableau: &CollocationTableau, r: Complex64) -> CharPoly {
    let (base, slope) = char_poly_parts(tableau);
    CharPoly {
        degree: tableau.stages(),
        coefficients: base
            .iter()
            .zip(&slope)
            .map(|(&b, &s)| b + r * s)
            .collect(),
        r,
    }
}

/// Polynomial whose roots are the eigenvalues of `Q - r D_t H_M`.
pub fn stage_char_poly(tableau: &CollocationTableau, r: Complex64) -> CharPoly {
    let mut p = char_poly(tableau, -r);
    p.r = r;
    p
}

/// A parameter value `r_*` at which the closed-form polynomial has a
/// repeated root, and the alpha radius `|r_* / (1 - r_*)|^L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForbiddenAlpha {
    pub r_re: f64,
    pub r_im: f64,
    pub alpha_star: f64,
}

impl ForbiddenAlpha {
    pub fn r(&self) -> Complex64 {
        Complex64::new(self.r_re, self.r_im)
    }
}

/// `Res(p_M, p_M')` of the closed-form polynomial as a polynomial in `r`,
/// ascending coefficients.
///
/// Each Sylvester-matrix entry is affine in `r`, so the determinant has
/// degree at most `2M - 1`; it is sampled on the unit circle and
/// interpolated by an inverse DFT. Leading coefficients below `1e-11`
/// relative are dropped.
pub fn discriminant_poly(tableau: &CollocationTableau) -> Vec<Complex64> {
    let m = tableau.stages();
    if m < 2 {
        return vec![ONE];
    }
    let (base, slope) = char_poly_parts(tableau);
    let size = 2 * m - 1;
    let samples = 2 * m;
    let sylvester_det = |r: Complex64| {
        let p: Vec<Complex64> = base.iter().zip(&slope).map(|(&b, &s)| b + r * s).collect();
        let dp = poly::derivative_complex(&p);
        // rows hold coefficients from the leading term down
        let mut s = CMatrix::zeros(size, size);
        for row in 0..m - 1 {
            for (k, &c) in p.iter().rev().enumerate() {
                s[(row, row + k)] = c;
            }
        }
        for row in 0..m {
            for (k, &c) in dp.iter().rev().enumerate() {
                s[(m - 1 + row, row + k)] = c;
            }
        }
        s.determinant()
    };
    let values: Vec<Complex64> = (0..samples)
        .map(|k| sylvester_det(twiddle(k, samples, 1.0)))
        .collect();
    let coeffs: Vec<Complex64> = (0..samples)
        .map(|j| {
            values
                .iter()
                .enumerate()
                .map(|(k, &v)| v * twiddle(j * k % samples, samples, -1.0))
                .sum::<Complex64>()
                / samples as f64
        })
        .collect();
    poly::trim_complex(&coeffs, 1e-11)
}

fn check_forbidden_args(tableau: &CollocationTableau, len: usize) -> Result<()> {
    let m = tableau.stages();
    if m > MAX_FORBIDDEN_STAGES {
        return Err(PintError::invalid(format!(
            "forbidden alpha analysis supports at most {MAX_FORBIDDEN_STAGES} nodes, got {m}"
        )));
    }
    if len == 0 {
        return Err(PintError::invalid("number of time steps must be positive"));
    }
    Ok(())
}

/// Refines a zero `r0` of the discriminant by Newton's method on
/// `p(lambda; r) = 0`, `dp/dlambda(lambda; r) = 0` in `(lambda, r)`, started
/// from the closest root pair of `p(.; r0)`. Unlike the resultant, whose
/// zeros cluster for larger `M`, this system is well conditioned.
fn polish_shift(base: &[f64], slope: &[f64], r0: Complex64) -> Complex64 {
    let to_c = |v: &[f64]| v.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>();
    let (b, s) = (to_c(base), to_c(slope));
    let (db, ds) = (poly::derivative_complex(&b), poly::derivative_complex(&s));
    let ddb = poly::derivative_complex(&db);
    let dds = poly::derivative_complex(&ds);
    let p_at = |r: Complex64| b.iter().zip(&s).map(|(&x, &y)| x + r * y).collect::<Vec<_>>();
    let Ok(lams) = poly::roots(&p_at(r0)) else {
        return r0;
    };
    let mut pair = (f64::INFINITY, ZERO);
    for i in 0..lams.len() {
        for j in i + 1..lams.len() {
            let d = (lams[i] - lams[j]).norm();
            if d < pair.0 {
                pair = (d, 0.5 * (lams[i] + lams[j]));
            }
        }
    }
    let (mut lam, mut r) = (pair.1, r0);
    let ev = poly::eval_complex;
    for _ in 0..30 {
        let f1 = ev(&b, lam) + r * ev(&s, lam);
        let f2 = ev(&db, lam) + r * ev(&ds, lam);
        let (a11, a12) = (f2, ev(&s, lam));
        let (a21, a22) = (ev(&ddb, lam) + r * ev(&dds, lam), ev(&ds, lam));
        let det = a11 * a22 - a12 * a21;
        if det.norm() == 0.0 {
            break;
        }
        let dl = (f1 * a22 - a12 * f2) / det;
        let dr = (a11 * f2 - a21 * f1) / det;
        lam -= dl;
        r -= dr;
        if dr.norm() <= 4.0 * f64::EPSILON * r.norm().max(1.0) {
            break;
        }
    }
    // Keep the resultant root if Newton wandered off.
    if (r - r0).norm() > 1e-4 * r0.norm().max(1.0) {
        r0
    } else {
        r
    }
}

/// Zeros of the discriminant of the closed-form polynomial, refined.
fn closed_form_critical_shifts(tableau: &CollocationTableau) -> Result<Vec<Complex64>> {
    let (base, slope) = char_poly_parts(tableau);
    Ok(poly::roots(&discriminant_poly(tableau))?
        .into_iter()
        .map(|r| polish_shift(&base, &slope, r))
        .collect())
}

fn radii(roots: impl IntoIterator<Item = Complex64>, len: usize) -> Vec<ForbiddenAlpha> {
    let mut out: Vec<ForbiddenAlpha> = roots
        .into_iter()
        .map(|r| ForbiddenAlpha {
            r_re: r.re,
            r_im: r.im,
            alpha_star: (r / (ONE - r)).norm().powi(len as i32),
        })
        .collect();
    out.sort_by(|a, b| a.alpha_star.total_cmp(&b.alpha_star));
    out
}

/// Zeros of the discriminant of the closed-form [`char_poly`] in its own
/// parameter, mapped to `alpha_* = |r_*/(1 - r_*)|^L` and sorted ascending.
///
/// These are the tabulated radii for the closed-form parameterization. The
/// shifts at which `Q G^-1 = Q - r D_t H_M` is actually defective are the
/// reflections `-r_*`; see [`defective_shifts`].
pub fn forbidden_alphas(tableau: &CollocationTableau, len: usize) -> Result<Vec<ForbiddenAlpha>> {
    check_forbidden_args(tableau, len)?;
    if tableau.stages() < 2 {
        return Ok(Vec::new());
    }
    Ok(radii(closed_form_critical_shifts(tableau)?, len))
}

/// Shifts `r_l` at which `Q - r_l D_t H_M` has a repeated eigenvalue, with
/// the alpha radius `|d_l|^L = |r_l / (1 - r_l)|^L` at which a circulant
/// eigenvalue reaches them in modulus. Sorted ascending by radius.
pub fn defective_shifts(tableau: &CollocationTableau, len: usize) -> Result<Vec<ForbiddenAlpha>> {
    check_forbidden_args(tableau, len)?;
    if tableau.stages() < 2 {
        return Ok(Vec::new());
    }
    Ok(radii(
        closed_form_critical_shifts(tableau)?.into_iter().map(|r| -r),
        len,
    ))
}
