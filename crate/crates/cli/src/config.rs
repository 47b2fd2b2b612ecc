//! The run configuration: one flat JSON document.

use std::path::PathBuf;

use num_complex::Complex64;
use pint_core::collocation::CollocationTableau;
use pint_core::driver::{AlphaMode, DriverSettings};
use pint_core::problems::{make_advection, make_dahlquist, make_heat, Equation, LinearIvp};
use pint_core::schedule::{M0Strategy, DEFAULT_EPS};
use pint_core::spectral::is_power_of_two;
use pint_core::{PintError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    /// Single rank, no message passing.
    Serial,
    /// All ranks in this process.
    Loopback,
    /// One process per rank, bootstrapped from the environment.
    Tcp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub equation: Equation,
    pub n_per_dim: usize,
    pub order: usize,
    #[serde(rename = "T")]
    pub t_span: f64,
    #[serde(rename = "L")]
    pub steps: usize,
    #[serde(rename = "M")]
    pub stages: usize,
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub tol_outer: f64,
    pub tau_inner: f64,
    pub eps: f64,
    pub m0_strategy: M0Strategy,
    pub alpha_mode: AlphaMode,
    pub max_iterations: usize,
    pub gmres_restart: usize,
    pub alpha_guard: bool,
    pub reference: bool,
    pub transport: TransportKind,
    /// Defaults to `L` for the parallel transports.
    pub n_step: Option<usize>,
    pub n_coll: usize,
    /// Recorded in the report; the solver itself draws no random numbers.
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = DriverSettings::default();
        RunConfig {
            equation: Equation::Dahlquist,
            n_per_dim: 16,
            order: 2,
            t_span: 1.0,
            steps: 8,
            stages: 2,
            lambda_re: -1.0,
            lambda_im: 0.0,
            tol_outer: d.tol_outer,
            tau_inner: d.tau_inner,
            eps: DEFAULT_EPS,
            m0_strategy: d.m0_strategy,
            alpha_mode: d.alpha_mode,
            max_iterations: d.max_iterations,
            gmres_restart: d.gmres_restart,
            alpha_guard: d.alpha_guard,
            reference: d.reference,
            transport: TransportKind::Serial,
            n_step: None,
            n_coll: 1,
            seed: 0,
            output: None,
            csv: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| PintError::Config(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn n_step(&self) -> usize {
        match self.transport {
            TransportKind::Serial => 1,
            _ => self.n_step.unwrap_or(self.steps),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || !is_power_of_two(self.steps) {
            return Err(PintError::Config(format!(
                "L must be a power of two for the radix-2 step transform, got L = {}",
                self.steps
            )));
        }
        if !(self.t_span > 0.0 && self.t_span.is_finite()) {
            return Err(PintError::Config(format!("T must be positive, got {}", self.t_span)));
        }
        if self.stages == 0 {
            return Err(PintError::Config("M must be positive".into()));
        }
        if self.transport != TransportKind::Serial {
            let n_step = self.n_step();
            if n_step != self.steps {
                return Err(PintError::Config(format!(
                    "n_step = {n_step} must equal L = {}",
                    self.steps
                )));
            }
            if self.n_coll != 1 && self.n_coll != self.stages {
                return Err(PintError::Config(format!(
                    "n_coll must be 1 or M = {}, got {}",
                    self.stages, self.n_coll
                )));
            }
        }
        self.settings().validate()
    }

    pub fn settings(&self) -> DriverSettings {
        DriverSettings {
            alpha_mode: self.alpha_mode.clone(),
            tol_outer: self.tol_outer,
            tau_inner: self.tau_inner,
            eps: self.eps,
            m0_strategy: self.m0_strategy,
            max_iterations: self.max_iterations,
            gmres_restart: self.gmres_restart,
            alpha_guard: self.alpha_guard,
            reference: self.reference,
        }
    }

    pub fn tableau(&self) -> Result<CollocationTableau> {
        CollocationTableau::radau(self.stages)
    }

    pub fn problem(&self) -> Result<LinearIvp> {
        match self.equation {
            Equation::Heat => make_heat(self.n_per_dim, self.order, self.t_span, self.steps),
            Equation::Advection => {
                make_advection(self.n_per_dim, self.order, self.t_span, self.steps)
            }
            Equation::Dahlquist => make_dahlquist(
                Complex64::new(self.lambda_re, self.lambda_im),
                self.t_span,
                self.steps,
            ),
        }
    }
}
