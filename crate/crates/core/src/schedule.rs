//! Adaptive alpha sequence, stopping rule and round-off bound evaluators.
//!
//! With `gamma = L (3 eps + tau) ||w||_inf` the error estimate after an
//! iteration with parameter `alpha` is `alpha m_k + gamma / alpha`; its
//! minimizer gives `alpha_{k+1} = sqrt(gamma / m_k)` and
//! `m_{k+1} = 2 sqrt(m_k gamma)`.

use serde::{Deserialize, Serialize};

use crate::error::{PintError, Result};
use crate::problems::{LinearIvp, TimeGrid};
use crate::solver::AlphaGuard;

/// Unit roundoff of binary64 arithmetic, `2^-52`.
pub const DEFAULT_EPS: f64 = f64::EPSILON;

/// Upper clamp of the adaptive alpha.
pub const MAX_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub eps: f64,
    pub tau: f64,
    pub steps: usize,
    pub w_norm: f64,
    pub m0: f64,
    pub tol: f64,
}

impl ScheduleConfig {
    pub fn gamma(&self) -> f64 {
        self.steps as f64 * (3.0 * self.eps + self.tau) * self.w_norm
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("eps", self.eps),
            ("tau", self.tau),
            ("w_norm", self.w_norm),
            ("m0", self.m0),
            ("tol", self.tol),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PintError::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.steps == 0 {
            return Err(PintError::invalid("number of time steps must be positive"));
        }
        Ok(())
    }
}

/// One advance of the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleStep {
    pub k: usize,
    pub alpha: f64,
    pub m: f64,
    /// `4 gamma > m_k`: the estimate no longer decreases.
    pub stagnation_risk: bool,
    /// Alpha was moved by the defective-radius guard.
    pub adjusted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaSchedule {
    pub gamma: f64,
    /// `m_0, m_1, ...`
    pub m_seq: Vec<f64>,
    /// `alpha_1, alpha_2, ...`
    pub alpha_seq: Vec<f64>,
    pub k: usize,
    #[serde(skip)]
    guard: Option<AlphaGuard>,
}

impl AlphaSchedule {
    pub fn new(config: &ScheduleConfig) -> Result<Self> {
        config.validate()?;
        Ok(AlphaSchedule {
            gamma: config.gamma(),
            m_seq: vec![config.m0],
            alpha_seq: Vec::new(),
            k: 0,
            guard: None,
        })
    }

    pub fn with_guard(mut self, guard: AlphaGuard) -> Self {
        self.guard = Some(guard);
        self
    }

    pub fn current_m(&self) -> f64 {
        *self.m_seq.last().expect("m_0 is always present")
    }

    /// Returns `(alpha_{k+1}, m_{k+1})` and advances `k`.
    pub fn next_alpha(&mut self) -> ScheduleStep {
        let m = self.current_m();
        let stagnation_risk = 4.0 * self.gamma > m;
        let raw = (self.gamma / m).sqrt().min(MAX_ALPHA);
        let alpha = match &self.guard {
            Some(g) => g.adjust(raw),
            None => raw,
        };
        let m_next = 2.0 * (m * self.gamma).sqrt();
        self.m_seq.push(m_next);
        self.alpha_seq.push(alpha);
        self.k += 1;
        ScheduleStep {
            k: self.k,
            alpha,
            m: m_next,
            stagnation_risk,
            adjusted: alpha != raw,
        }
    }

    /// The sequence up to the first `m_k <= tol`, capped at `max_steps`.
    pub fn preview(config: &ScheduleConfig, max_steps: usize) -> Result<Vec<ScheduleStep>> {
        let mut s = AlphaSchedule::new(config)?;
        let mut out = Vec::new();
        while s.current_m() > config.tol && out.len() < max_steps {
            out.push(s.next_alpha());
        }
        Ok(out)
    }
}

/// `m_k = (4 gamma)^{1 - 2^-k} m_0^{2^-k}`.
pub fn closed_form_m(gamma: f64, m0: f64, k: u32) -> f64 {
    let e = 0.5f64.powi(k as i32);
    (4.0 * gamma).powf(1.0 - e) * m0.powf(e)
}

/// Error estimate after one iteration with an arbitrary alpha.
pub fn fixed_alpha_m(m: f64, alpha: f64, gamma: f64) -> f64 {
    alpha * m + gamma / alpha
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum M0Strategy {
    User(f64),
    /// `c * dt`.
    DtMultiple(f64),
    /// `T (||A||_inf M_u + M_b)`.
    OperatorBound,
}

/// Number of forcing samples used for `M_b`.
const FORCING_SAMPLES: usize = 65;

pub fn estimate_m0(strategy: M0Strategy, ivp: &LinearIvp, grid: &TimeGrid) -> Result<f64> {
    let m0 = match strategy {
        M0Strategy::User(v) => v,
        M0Strategy::DtMultiple(c) => c * grid.dt,
        M0Strategy::OperatorBound => {
            let m_u = ivp.initial.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let m_b = if ivp.forcing.is_some() {
                (0..FORCING_SAMPLES)
                    .map(|i| {
                        let t = grid.t_start
                            + (grid.t_end - grid.t_start) * i as f64 / (FORCING_SAMPLES - 1) as f64;
                        ivp.forcing_at(t).iter().map(|v| v.norm()).fold(0.0, f64::max)
                    })
                    .fold(0.0, f64::max)
            } else {
                0.0
            };
            (grid.t_end - grid.t_start) * (ivp.operator.norm_inf() * m_u + m_b)
        }
    };
    if !(m0 > 0.0 && m0.is_finite()) {
        return Err(PintError::invalid(format!(
            "initial error estimate must be positive, got {m0}"
        )));
    }
    Ok(m0)
}

/// `||u_L^(k+1) - u_L^(k)||_inf <= tol`.
pub fn should_stop(
    curr: &[num_complex::Complex64],
    prev: &[num_complex::Complex64],
    tol: f64,
) -> bool {
    crate::solver::diff_norm_inf(curr, prev) <= tol
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundoffBound {
    /// `||B^-1|| / (1 - eps kappa) * L (2 eps + tau + eps kappa) / alpha * ||r||`.
    pub full: f64,
    /// `(L / alpha) (3 eps + tau) ||r||`.
    pub simplified: f64,
}

pub fn roundoff_bound(
    steps: usize,
    alpha: f64,
    eps: f64,
    tau: f64,
    r_norm: f64,
    binv_norm: f64,
    cond_b: f64,
) -> Result<RoundoffBound> {
    if !(alpha > 0.0) {
        return Err(PintError::invalid(format!("alpha must be positive, got {alpha}")));
    }
    let ek = eps * cond_b;
    if ek >= 1.0 {
        return Err(PintError::invalid(format!(
            "eps * kappa(B) = {ek} must be below 1"
        )));
    }
    let l = steps as f64;
    Ok(RoundoffBound {
        full: binv_norm / (1.0 - ek) * l * (2.0 * eps + tau + ek) / alpha * r_norm,
        simplified: l / alpha * (3.0 * eps + tau) * r_norm,
    })
}
