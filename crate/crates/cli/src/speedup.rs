//! Operation-count model of the sequential baselines and the parallel
//! iteration. Logarithms are base 2 (one butterfly stage per factor of two).

use pint_core::{PintError, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedupParams {
    pub steps: f64,
    pub stages: f64,
    pub iterations: f64,
    pub t_sol: f64,
    pub t_sol_par: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedupRow {
    pub params: SpeedupParams,
    pub t_seq: f64,
    pub t_mpar: f64,
    pub t_par: f64,
    /// `T_seq / T_par`.
    pub speedup_seq: f64,
    /// `T_Mpar / T_par`.
    pub speedup_mpar: f64,
    pub bound_seq: f64,
    pub bound_mpar: f64,
    /// The model predicts no gain over the sequential baseline.
    pub no_gain: bool,
}

pub fn speedup_model(p: SpeedupParams) -> Result<SpeedupRow> {
    let values = [p.steps, p.stages, p.iterations, p.t_sol, p.t_sol_par];
    if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(PintError::Config(format!(
            "L, M, k, T_sol and T_sol_par must be positive: {p:?}"
        )));
    }
    let (l, m, k) = (p.steps, p.stages, p.iterations);
    let m_log_m = m * m.log2();
    let overhead = 2.0 * l.log2() + 3.0 * m_log_m;
    let t_seq = l * m * (p.t_sol + 2.0 * m);
    let t_mpar = l * (p.t_sol + 2.0 * m_log_m);
    let par_step = p.t_sol_par + overhead;
    let t_par = k * par_step;
    // Ratios and bounds share every factor except the final denominator,
    // so the bounds hold under rounding whenever they hold exactly.
    let speedup_seq = (l * m / k) * ((p.t_sol + 2.0 * m) / par_step);
    let speedup_mpar = (l / k) * ((p.t_sol + 2.0 * m_log_m) / par_step);
    let bound_seq = (l * m / k) * ((p.t_sol + 2.0 * m) / (p.t_sol_par + 2.0 * m));
    let bound_mpar = (l / k) * ((p.t_sol + 2.0 * m_log_m) / (p.t_sol_par + 2.0 * m_log_m));
    Ok(SpeedupRow {
        params: p,
        t_seq,
        t_mpar,
        t_par,
        speedup_seq,
        speedup_mpar,
        bound_seq,
        bound_mpar,
        no_gain: speedup_seq <= 1.0,
    })
}
