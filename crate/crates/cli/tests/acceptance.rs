//! Acceptance suite: one line per criterion, nonzero exit on any failure.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use pint_cli::speedup::{speedup_model, SpeedupParams};
use pint_core::collocation::CollocationTableau;
use pint_core::driver::{run_serial, DriverSettings, Prepared, RunOutcome};
use pint_core::problems::{
    advection_operator, composite_rhs, grid_samples, heat_operator, make_advection,
    make_dahlquist, make_heat, LinearIvp,
};
use pint_core::runtime::run_loopback;
use pint_core::schedule::{closed_form_m, AlphaSchedule, M0Strategy, ScheduleConfig, DEFAULT_EPS};
use pint_core::solver::{
    blocks_diff_norm_inf, richardson_iteration, sequential_solve, AlphaGuard, CompositeState,
    SolverContext,
};
use pint_core::spectral::{
    bit_reverse, char_poly, diagonalize_circulant, discriminant_poly, forbidden_alphas,
    forward_transform, inverse_transform, stage_char_poly, TimeTransform,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type C = Complex64;
type CMat = DMatrix<C>;

fn c(re: f64) -> C {
    C::new(re, 0.0)
}

fn mat_norm_inf(a: &CMat) -> f64 {
    a.row_iter()
        .map(|row| row.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn vec_norm_inf<'a>(v: impl IntoIterator<Item = &'a C>) -> f64 {
    v.into_iter().map(|x| x.norm()).fold(0.0, f64::max)
}

fn random_blocks(rng: &mut ChaCha8Rng, count: usize, len: usize) -> Vec<Vec<C>> {
    (0..count)
        .map(|_| {
            (0..len)
                .map(|_| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect()
        })
        .collect()
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- 1

fn criterion_1() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_diag = 0.0f64;
    let mut worst_fwd = 0.0f64;
    let mut worst_inv = 0.0f64;
    let mut pass = true;
    for len in [2usize, 4, 8, 16] {
        for alpha in [1e-4, 1e-2, 0.5] {
            let lf = len as f64;
            let circ = diagonalize_circulant(len, alpha).unwrap();
            // E_alpha: ones below the diagonal, alpha in the top right corner.
            let e = CMat::from_fn(len, len, |i, j| {
                if i == j + 1 {
                    c(1.0)
                } else if i == 0 && j == len - 1 {
                    c(alpha)
                } else {
                    c(0.0)
                }
            });
            let lambda: Vec<C> = circ.d.iter().map(|d| -d).collect();
            // Eigenvectors v_i = lambda^-i, and the closed-form inverse.
            let v = CMat::from_fn(len, len, |i, l| lambda[l].powi(-(i as i32)));
            let v_inv = CMat::from_fn(len, len, |l, i| {
                C::from_polar(alpha.powf(i as f64 / lf), -2.0 * PI * (i * l) as f64 / lf) / lf
            });
            let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(lambda.clone()));
            let scale = alpha.powf(-(lf - 1.0) / lf);
            let ident_err = mat_norm_inf(&(&v * &v_inv - CMat::identity(len, len)));
            let diag_err = mat_norm_inf(&(&v * &d * &v_inv - &e));
            worst_diag = worst_diag.max(diag_err / scale);
            pass &= diag_err <= 1e-10 * scale && ident_err <= 1e-10 * scale;

            let transform = TimeTransform::new(len, alpha).unwrap();
            let r = random_blocks(&mut rng, len, 3);
            let x = forward_transform(&r, &transform).unwrap();
            let y = random_blocks(&mut rng, len, 3);
            let u = inverse_transform(&y, &transform).unwrap();
            for comp in 0..3 {
                let rv = nalgebra::DVector::from_fn(len, |i, _| r[i][comp]);
                let dense_x = (&v_inv * &rv) * c(lf);
                let yv = nalgebra::DVector::from_fn(len, |l, _| y[bit_reverse(l, len)][comp]);
                let dense_u = (&v * &yv) / c(lf);
                let fwd = (0..len)
                    .map(|p| (x[p][comp] - dense_x[bit_reverse(p, len)]).norm())
                    .fold(0.0, f64::max)
                    / vec_norm_inf(dense_x.iter());
                let inv = (0..len)
                    .map(|i| (u[i][comp] - dense_u[i]).norm())
                    .fold(0.0, f64::max)
                    / vec_norm_inf(dense_u.iter());
                worst_fwd = worst_fwd.max(fwd);
                worst_inv = worst_inv.max(inv);
            }
        }
    }
    pass &= worst_fwd <= 1e-12 && worst_inv <= 1e-12;
    verdict(
        pass,
        format!(
            "max |VDV^-1 - E_a| / a^-(L-1)/L = {worst_diag:.2e} (<= 1e-10); \
             forward rel {worst_fwd:.2e}, inverse rel {worst_inv:.2e} (<= 1e-12)"
        ),
    )
}

// ---------------------------------------------------------------- 2

/// Smallest over all pairings of the largest pair distance.
fn match_distance(a: &[C], b: &[C]) -> f64 {
    fn go(a: &[C], b: &mut Vec<C>, worst: f64, best: &mut f64) {
        if worst >= *best {
            return;
        }
        let Some((first, rest)) = a.split_first() else {
            *best = worst;
            return;
        };
        for i in 0..b.len() {
            let v = b.swap_remove(i);
            go(rest, b, worst.max((v - first).norm()), best);
            b.push(v);
            let last = b.len() - 1;
            b.swap(i, last);
        }
    }
    let mut best = f64::INFINITY;
    go(a, &mut b.to_vec(), 0.0, &mut best);
    best
}

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut literal = f64::INFINITY;
    for m in 2..=5 {
        let tab = CollocationTableau::radau(m).unwrap();
        for _ in 0..100 {
            let r = loop {
                let z = C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                if z.norm() < 1.0 {
                    break z;
                }
            };
            // Q - r D_t H_M: only the last column moves.
            let mat = CMat::from_fn(m, m, |i, j| {
                let q = c(tab.q_matrix[i][j]);
                if j == m - 1 {
                    q - r * tab.nodes[i]
                } else {
                    q
                }
            });
            let eig: Vec<C> = mat.clone().schur().eigenvalues().unwrap().iter().copied().collect();
            let roots = stage_char_poly(&tab, r).roots().unwrap();
            worst = worst.max(match_distance(&roots, &eig));
            let published = char_poly(&tab, r).roots().unwrap();
            literal = literal.min(match_distance(&published, &eig));
        }
    }
    verdict(
        worst <= 1e-8,
        format!(
            "M = 2..5, 100 r each: max root/eigenvalue distance {worst:.2e} (<= 1e-8) using \
             p_M with r -> -r; the closed form as printed misses by >= {literal:.2e}"
        ),
    )
}

// ---------------------------------------------------------------- 3

fn normalized_real(coeffs: &[C]) -> Vec<f64> {
    let lead = coeffs.last().unwrap();
    coeffs.iter().rev().map(|v| (v / lead).re).collect()
}

fn close_coeffs(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * y.abs().max(1.0))
}

fn criterion_3() -> Verdict {
    let mut pass = true;
    let mut found = Vec::new();
    for (m, published) in [(2usize, vec![0.323, 0.477]), (3, vec![0.516, 0.504, 0.069])] {
        let tab = CollocationTableau::radau(m).unwrap();
        let radii: Vec<f64> = forbidden_alphas(&tab, 1)
            .unwrap()
            .iter()
            .map(|f| f.alpha_star)
            .collect();
        for p in published {
            let best = radii.iter().map(|r| (r - p).abs()).fold(f64::INFINITY, f64::min);
            pass &= best <= 5e-3;
        }
        found.push(format!(
            "M={m}: {}",
            radii.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>().join(", ")
        ));
    }
    let d2 = normalized_real(&discriminant_poly(&CollocationTableau::radau(2).unwrap()));
    let d3 = normalized_real(&discriminant_poly(&CollocationTableau::radau(3).unwrap()));
    let nine = close_coeffs(&d2, &[1.0, 6.0 / 9.0, -2.0 / 9.0]);
    let thirteen = close_coeffs(&d2, &[1.0, 2.0 / 13.0, -2.0 / 13.0]);
    let quartic = close_coeffs(
        &d3,
        &[1.0, 3560.0 / 1700.0, 1872.0 / 1700.0, 18.0 / 1700.0, 9.0 / 1700.0],
    );
    pass &= nine && quartic;
    verdict(
        pass,
        format!(
            "radii {} (within 5e-3 of published); discriminant confirms 9r^2+6r-2: {nine}, \
             13r^2+2r-2: {thirteen}, 1700r^4+3560r^3+1872r^2+18r+9: {quartic}",
            found.join("; ")
        ),
    )
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Verdict {
    let ivp = make_dahlquist(c(-1.0), 1.0, 16).unwrap();
    let tab = CollocationTableau::radau(2).unwrap();
    let tau = 1e-14;
    let reference = sequential_solve(&ivp, &ivp.grid, &tab, tau).unwrap();
    let w = composite_rhs(&ivp, &ivp.grid, &tab).unwrap();
    let ctx = SolverContext::new(&ivp, &tab, tau);
    let guard = AlphaGuard::new(&tab, 16);
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in [0.05, 0.1, 0.2] {
        let mut state = CompositeState::replicated(&ivp.initial, 16, 2);
        let mut errors = vec![blocks_diff_norm_inf(&state.blocks, &reference.blocks)];
        for _ in 0..60 {
            state = richardson_iteration(&ctx, &state, &w, alpha, &guard).unwrap().0;
            errors.push(blocks_diff_norm_inf(&state.blocks, &reference.blocks));
        }
        let floor = errors.iter().copied().fold(f64::INFINITY, f64::min).max(f64::EPSILON);
        let bound = alpha / (1.0 - alpha) * 1.1;
        let mut worst = 0.0f64;
        let mut checked = 0;
        for pair in errors.windows(2) {
            if pair[1] <= 100.0 * floor {
                break;
            }
            worst = worst.max(pair[1] / pair[0]);
            checked += 1;
        }
        pass &= worst <= bound && checked > 0;
        parts.push(format!(
            "a={alpha}: max ratio {worst:.4} <= {bound:.4} over {checked} iterations, floor {floor:.1e}"
        ));
    }
    verdict(pass, parts.join("; "))
}

// ---------------------------------------------------------------- 5

const ADV_T: f64 = 0.0128;
const FIG3_ALPHAS: [f64; 4] = [6.19e-7, 5.56e-4, 1.67e-2, 9.13e-2];

fn advection_desk(m0: M0Strategy) -> (Prepared, DriverSettings) {
    let settings = DriverSettings {
        tol_outer: 1e-12,
        tau_inner: 1e-15,
        m0_strategy: m0,
        ..DriverSettings::default()
    };
    let ivp = make_advection(64, 5, ADV_T, 64).unwrap();
    let prepared = Prepared::new(ivp, CollocationTableau::radau(3).unwrap(), &settings).unwrap();
    (prepared, settings)
}

fn criterion_5(converged_runs: &mut Vec<(String, RunOutcome, f64)>) -> Verdict {
    // (a) closed form.
    let mut worst_a = 0.0f64;
    for (gamma_target, m0) in [(1e-13, 1.0), (7.65e-16, 2e-3), (1e-10, 50.0)] {
        let config = ScheduleConfig {
            eps: DEFAULT_EPS,
            tau: 1e-15,
            steps: 64,
            w_norm: 1.0,
            m0,
            tol: 1e-300,
        };
        let scale = gamma_target / config.gamma();
        let config = ScheduleConfig {
            w_norm: scale,
            ..config
        };
        let mut s = AlphaSchedule::new(&config).unwrap();
        for k in 1..=40u32 {
            let m = s.next_alpha().m;
            let exact = closed_form_m(config.gamma(), m0, k);
            worst_a = worst_a.max((m - exact).abs() / exact);
        }
    }
    let pass_a = worst_a <= 1e-12;

    // (b) desk advection with m0 = 10 dT, and with an operator upper bound.
    let (prepared, settings) = advection_desk(M0Strategy::DtMultiple(10.0));
    let run = run_serial(&prepared, &settings);
    let (pass_b, detail_b, alphas) = match run {
        Ok(out) => {
            let recs = &out.outcome.records;
            let alphas: Vec<f64> = recs.iter().map(|r| r.alpha).collect();
            let ascending = alphas.windows(2).all(|w| w[0] < w[1]);
            let pass = out.outcome.converged && recs.len() <= 6 && ascending;
            let detail = format!(
                "m0=10dT: {} iterations, converged {}, alpha {:?}",
                recs.len(),
                out.outcome.converged,
                alphas.iter().map(|a| format!("{a:.2e}")).collect::<Vec<_>>()
            );
            if out.outcome.converged {
                converged_runs.push(("advection m0=10dT".into(), out, settings.tol_outer));
            }
            (pass, detail, alphas)
        }
        Err(e) => (false, format!("m0=10dT run failed: {e}"), Vec::new()),
    };
    let (bounded, bounded_settings) = advection_desk(M0Strategy::OperatorBound);
    let (pass_bound, detail_bound) = match run_serial(&bounded, &bounded_settings) {
        Ok(out) => {
            let initial = blocks_diff_norm_inf(
                &CompositeState::replicated(&bounded.ivp.initial, 64, 3).blocks,
                &bounded.reference.as_ref().unwrap().blocks,
            );
            let holds = out
                .outcome
                .records
                .iter()
                .all(|r| r.true_err.unwrap() <= r.m_k);
            let worst = out
                .outcome
                .records
                .iter()
                .map(|r| r.true_err.unwrap() / r.m_k)
                .fold(0.0, f64::max);
            let detail = format!(
                "m0={:.3} (initial error {initial:.3}): err <= m_k at all {} iterations: {holds} \
                 (max err/m_k {worst:.2e})",
                bounded.m0,
                out.outcome.records.len()
            );
            (holds && bounded.m0 >= initial, detail)
        }
        Err(e) => (false, format!("bounded run failed: {e}")),
    };

    // (c) magnitudes against the published sequence.
    let sc = prepared.schedule_config(&settings);
    let preview: Vec<f64> = AlphaSchedule::preview(&sc, 10)
        .unwrap()
        .iter()
        .map(|s| s.alpha)
        .collect();
    let planned = if alphas.is_empty() { preview } else { alphas };
    let decade = |x: f64| x.log10().round();
    let pass_c = planned.len() >= 4
        && FIG3_ALPHAS
            .iter()
            .zip(&planned)
            .all(|(p, a)| (decade(*a) - decade(*p)).abs() <= 1.0);
    let ratios: Vec<String> = FIG3_ALPHAS
        .iter()
        .zip(&planned)
        .map(|(p, a)| format!("{:.1}", a / p))
        .collect();
    verdict(
        pass_a && pass_b && pass_bound && pass_c,
        format!(
            "(a) closed form rel {worst_a:.1e} (<= 1e-12); (b) {detail_b}; {detail_bound}; \
             (c) gamma {:.3e}, alpha/published ratios [{}], rounded decades differ by <= 1: {pass_c}",
            sc.gamma(),
            ratios.join(", ")
        ),
    )
}

// ---------------------------------------------------------------- 6

/// `C_alpha` and `C` of the composite system as dense matrices.
fn dense_composite(ivp: &LinearIvp, tab: &CollocationTableau, alpha: f64) -> (CMat, CMat) {
    let n = ivp.dim;
    let m = tab.stages();
    let steps = ivp.grid.steps;
    let dt = ivp.grid.dt;
    let a = ivp.operator.to_dense();
    let mn = m * n;
    let size = steps * mn;
    let mut cmat = CMat::zeros(size, size);
    for l in 0..steps {
        let base = l * mn;
        for i in 0..m {
            for j in 0..m {
                for r in 0..n {
                    for s in 0..n {
                        let id = if i == j && r == s { 1.0 } else { 0.0 };
                        cmat[(base + i * n + r, base + j * n + s)] =
                            c(id) - c(dt * tab.q_matrix[i][j]) * a[(r, s)];
                    }
                }
            }
            if l > 0 {
                for i in 0..m {
                    for r in 0..n {
                        cmat[(base + i * n + r, base - mn + (m - 1) * n + r)] = c(-1.0);
                    }
                }
            }
        }
    }
    let mut calpha = cmat.clone();
    for i in 0..m {
        for r in 0..n {
            calpha[(i * n + r, (steps - 1) * mn + (m - 1) * n + r)] = c(-alpha);
        }
    }
    (calpha, cmat)
}

fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cases: Vec<(&str, LinearIvp, usize)> = vec![
        ("dahlquist L=8 M=4", make_dahlquist(C::new(-1.0, 2.0), 1.0, 8).unwrap(), 4),
        ("heat n=3 L=2 M=3", make_heat(3, 2, 0.1, 2).unwrap(), 3),
        ("advection n=3 L=2 M=3", make_advection(3, 1, 0.1, 2).unwrap(), 3),
        ("heat n=4 L=4 M=1", make_heat(4, 2, 0.1, 4).unwrap(), 1),
    ];
    let mut worst = 0.0f64;
    let mut pass = true;
    for (_, ivp, m) in &cases {
        let tab = CollocationTableau::radau(*m).unwrap();
        let w = composite_rhs(ivp, &ivp.grid, &tab).unwrap();
        let ctx = SolverContext::new(ivp, &tab, 1e-14);
        let steps = ivp.grid.steps;
        pass &= steps * m * ivp.dim <= 64;
        for alpha in [1e-3, 0.1, 0.5] {
            let blocks = random_blocks(&mut rng, steps, m * ivp.dim);
            let state = CompositeState {
                last_step_prev: blocks[steps - 1].clone(),
                blocks,
                k: 0,
            };
            let (next, _) =
                richardson_iteration(&ctx, &state, &w, alpha, &AlphaGuard::disabled()).unwrap();
            let (calpha, cmat) = dense_composite(ivp, &tab, alpha);
            let u = nalgebra::DVector::from_iterator(
                state.blocks.iter().flatten().count(),
                state.blocks.iter().flatten().copied(),
            );
            let wv = nalgebra::DVector::from_iterator(
                w.iter().flatten().count(),
                w.iter().flatten().copied(),
            );
            let rhs = (&calpha - &cmat) * u + wv;
            let dense = calpha.lu().solve(&rhs).unwrap();
            let got: Vec<C> = next.blocks.iter().flatten().copied().collect();
            let err = got
                .iter()
                .zip(dense.iter())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
                / vec_norm_inf(dense.iter());
            worst = worst.max(err);
        }
    }
    pass &= worst <= 1e-10;
    verdict(
        pass,
        format!(
            "{} systems x 3 alphas: max rel diff to dense C_a^-1((C_a - C)u + w) {worst:.2e} (<= 1e-10)",
            cases.len()
        ),
    )
}

// ---------------------------------------------------------------- 7

fn block_bits(blocks: &[Vec<C>]) -> Vec<(u64, u64)> {
    blocks
        .iter()
        .flatten()
        .map(|v| (v.re.to_bits(), v.im.to_bits()))
        .collect()
}

fn criterion_7() -> Verdict {
    let settings = DriverSettings::default();
    let ivp = make_heat(8, 2, 0.1, 8).unwrap();
    let prepared = Prepared::new(ivp, CollocationTableau::radau(3).unwrap(), &settings).unwrap();
    let serial = run_serial(&prepared, &settings).unwrap();
    let scale = serial.blocks.iter().map(|b| vec_norm_inf(b)).fold(0.0, f64::max);
    let mut pass = true;
    let mut parts = Vec::new();
    for n_coll in [1, 3] {
        let a = run_loopback(&prepared, &settings, 8, n_coll).unwrap();
        let b = run_loopback(&prepared, &settings, 8, n_coll).unwrap();
        let rel = blocks_diff_norm_inf(&a.outcome.blocks, &serial.blocks) / scale;
        let same_iters = a.outcome.outcome.records.len() == serial.outcome.records.len();
        let repeat = block_bits(&a.outcome.blocks) == block_bits(&b.outcome.blocks)
            && a.log == b.log;
        pass &= rel <= 1e-10 && same_iters && repeat;
        parts.push(format!(
            "n_step=8 n_coll={n_coll}: rel {rel:.1e}, repeat bitwise {repeat}"
        ));
    }
    verdict(pass, parts.join("; "))
}

// ---------------------------------------------------------------- 8

fn observed_order(errors: &[f64]) -> f64 {
    errors
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .fold(f64::INFINITY, f64::min)
}

/// Heat on the grid, order 2: the semi-discrete solution is `a(t) s` with
/// `a' = -mu a + cos t + 8 pi^2 sin t`, `a(pi) = 0`, solved in closed form.
fn semi_discrete_heat(n: usize, t: f64) -> f64 {
    let h = 1.0 / n as f64;
    let mu = 2.0 * (2.0 - 2.0 * (2.0 * PI * h).cos()) / (h * h);
    let k = 8.0 * PI * PI;
    let r = (k * mu + 1.0) / (1.0 + mu * mu);
    let p = mu * r - k;
    p * t.cos() + r * t.sin() + p * (-mu * (t - PI)).exp()
}

fn criterion_8(converged_runs: &mut Vec<(String, RunOutcome, f64)>) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for m in [2usize, 3] {
        let tab = CollocationTableau::radau(m).unwrap();
        let target = (2 * m - 1) as f64 - 0.5;
        let dahl: Vec<f64> = [4usize, 8, 16]
            .iter()
            .map(|&l| {
                let ivp = make_dahlquist(c(-1.0), 1.0, l).unwrap();
                sequential_solve(&ivp, &ivp.grid, &tab, 1e-14).unwrap().final_error.unwrap()
            })
            .collect();
        let n = 16;
        let shape = grid_samples(n, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).sin());
        let heat: Vec<f64> = [4usize, 8, 16]
            .iter()
            .map(|&l| {
                let ivp = make_heat(n, 2, 0.1, l).unwrap();
                let seq = sequential_solve(&ivp, &ivp.grid, &tab, 1e-14).unwrap();
                let amp = semi_discrete_heat(n, ivp.grid.t_end);
                seq.final_value(ivp.dim)
                    .iter()
                    .zip(&shape)
                    .map(|(u, s)| (u - amp * s).norm())
                    .fold(0.0, f64::max)
            })
            .collect();
        let (od, oh) = (observed_order(&dahl), observed_order(&heat));
        pass &= od >= target && oh >= target;
        parts.push(format!("M={m}: dahlquist {od:.2}, heat {oh:.2} (>= {target})"));
    }

    let s = |x: f64, y: f64| (2.0 * PI * x).sin() * (2.0 * PI * y).sin();
    let lap = |x: f64, y: f64| -8.0 * PI * PI * s(x, y);
    let grad_sum = |x: f64, y: f64| {
        2.0 * PI
            * ((2.0 * PI * x).cos() * (2.0 * PI * y).sin()
                + (2.0 * PI * x).sin() * (2.0 * PI * y).cos())
    };
    let consistency = |n: usize, heat: bool, order: usize| {
        let op = if heat {
            heat_operator(n, order).unwrap()
        } else {
            advection_operator(n, order).unwrap()
        };
        let u: Vec<C> = grid_samples(n, s).into_iter().map(c).collect();
        let exact = grid_samples(n, |x, y| if heat { lap(x, y) } else { -grad_sum(x, y) });
        op.apply(&u)
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a.re - b).abs())
            .fold(0.0, f64::max)
    };
    let mut spatial = Vec::new();
    for (heat, order) in [(true, 2), (true, 4), (true, 6), (false, 1), (false, 3), (false, 5)] {
        let o = (consistency(16, heat, order) / consistency(32, heat, order)).log2();
        pass &= (o - order as f64).abs() <= 0.3;
        spatial.push(format!("{}{order}: {o:.2}", if heat { "central" } else { "upwind" }));
    }
    parts.push(format!("space n=16->32 {}", spatial.join(", ")));

    // Converged desk runs feeding criterion 10.
    for (name, ivp, m, tol) in [
        ("dahlquist L=8 M=2", make_dahlquist(c(-1.0), 1.0, 8).unwrap(), 2, 1e-9),
        ("heat n=32 k=4 L=32 M=2", make_heat(32, 4, 0.1, 32).unwrap(), 2, 1e-9),
    ] {
        let settings = DriverSettings {
            tol_outer: tol,
            ..DriverSettings::default()
        };
        let prepared =
            Prepared::new(ivp, CollocationTableau::radau(m).unwrap(), &settings).unwrap();
        if let Ok(out) = run_serial(&prepared, &settings) {
            if out.outcome.converged {
                converged_runs.push((name.into(), out, tol));
            }
        }
    }
    verdict(pass, parts.join("; "))
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut violations = 0;
    for _ in 0..100 {
        let steps = (1u32 << rng.random_range(1..=10)) as f64;
        let stages = rng.random_range(1..=8) as f64;
        let iterations = rng.random_range(1..=(steps * stages) as u32) as f64;
        let params = SpeedupParams {
            steps,
            stages,
            iterations,
            t_sol: rng.random_range(1.0..1e4),
            t_sol_par: rng.random_range(1.0..1e4),
        };
        let row = speedup_model(params).unwrap();
        let ratio_seq = row.t_seq / row.t_par;
        let ratio_mpar = row.t_mpar / row.t_par;
        if !(row.speedup_seq <= row.bound_seq && row.speedup_mpar <= row.bound_mpar)
            || (ratio_seq - row.speedup_seq).abs() > 1e-12 * ratio_seq
            || (ratio_mpar - row.speedup_mpar).abs() > 1e-12 * ratio_mpar
        {
            violations += 1;
        }
    }
    let flagged = speedup_model(SpeedupParams {
        steps: 1.0,
        stages: 3.0,
        iterations: 3.0,
        t_sol: 100.0,
        t_sol_par: 100.0,
    })
    .unwrap()
    .no_gain;
    verdict(
        violations == 0 && flagged,
        format!("100 draws: {violations} bound violations; L=1, k=LM flagged as no gain: {flagged}"),
    )
}

// ---------------------------------------------------------------- 10

fn criterion_10(runs: &[(String, RunOutcome, f64)]) -> Verdict {
    let mut pass = runs.len() >= 3;
    let mut parts = Vec::new();
    for (name, out, tol) in runs {
        let err = out.final_error.unwrap();
        pass &= err <= 10.0 * tol;
        parts.push(format!(
            "{name}: {} it, err vs collocation {err:.1e} <= {:.0e} (vs exact PDE {:.1e})",
            out.outcome.records.len(),
            10.0 * tol,
            out.exact_error.unwrap_or(f64::NAN)
        ));
    }
    verdict(pass, parts.join("; "))
}

fn main() -> ExitCode {
    let mut converged = Vec::new();
    let mut failures = 0;
    let mut report = |id: u32, budget_s: f64, f: &mut dyn FnMut() -> Verdict| {
        let clock = Instant::now();
        let v = f();
        let secs = clock.elapsed().as_secs_f64();
        let pass = v.pass && secs < budget_s;
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {id}: {} ({secs:.2} s, budget {budget_s} s) {}",
            if pass { "PASS" } else { "FAIL" },
            v.detail
        );
    };
    report(1, 1.0, &mut criterion_1);
    report(2, 5.0, &mut criterion_2);
    report(3, 5.0, &mut criterion_3);
    report(4, 5.0, &mut criterion_4);
    report(5, 120.0, &mut || criterion_5(&mut converged));
    report(6, 1.0, &mut criterion_6);
    report(7, 60.0, &mut criterion_7);
    report(8, 120.0, &mut || criterion_8(&mut converged));
    report(9, 1.0, &mut criterion_9);
    let runs = std::mem::take(&mut converged);
    report(10, 1.0, &mut || criterion_10(&runs));
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
