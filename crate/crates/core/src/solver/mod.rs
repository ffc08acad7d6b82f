//! Convex first-order minimization of `max_j f_j` over a convex set, and the
//! condenser quasicentral modulus built on it.

mod condenser;
mod engine;
mod sweep;

pub use condenser::{
    solve_condenser, solve_condenser_from, sup_over_projections, CondenserProblem, ScanEntry, SupReport,
};
pub use engine::{minimize, ConvexMaxProblem, Eval, GradMode, Minimized};
pub use sweep::{extrapolate, scale_sweep, Extrapolation, ExtrapolationFit, SweepPoint, SweepReport};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    Diminishing,
    PolyakWithEstimate,
}

/// Which minimization scheme to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Smooth dual scheme when every component is the same Schatten `p > 1`,
    /// projected subgradient otherwise.
    Auto,
    Subgradient,
    SmoothDual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Relative objective-change tolerance.
    pub tol: f64,
    pub step_rule: StepRule,
    /// Target value for the Polyak rule.
    pub target: Option<f64>,
    pub seed: u64,
    /// Number of starting points; the first is the center of the feasible set.
    pub restarts: usize,
    pub method: Method,
    /// Iterations per subgradient epoch.
    pub epoch_len: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            tol: 1e-8,
            step_rule: StepRule::Diminishing,
            target: None,
            seed: 0,
            restarts: 3,
            method: Method::Auto,
            epoch_len: 100,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::Validation("max_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Validation("tol must be positive".into()));
        }
        if self.restarts < 1 {
            return Err(Error::Validation("restarts must be at least 1".into()));
        }
        if self.epoch_len < 1 {
            return Err(Error::Validation("epoch_len must be at least 1".into()));
        }
        if self.step_rule == StepRule::PolyakWithEstimate && self.target.is_none() {
            return Err(Error::Validation("polyak_with_estimate requires a target".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iter: usize,
    pub objective: f64,
    pub step: f64,
}

/// Outcome of a variational solve. `value` is the best objective found, an
/// upper bound on the infimum.
#[derive(Clone, Debug)]
pub struct SolveReport<M> {
    pub value: f64,
    pub minimizer: M,
    pub history: Vec<HistoryRow>,
    /// Best value reached from each starting point, by start index.
    pub restart_values: Vec<f64>,
    pub feasibility_residuals: BTreeMap<String, f64>,
    pub converged: bool,
    pub iters: usize,
    pub method: Method,
    pub wall_time: f64,
    pub flags: Vec<String>,
}

impl<M> SolveReport<M> {
    /// `max - min` over restarts.
    pub fn restart_spread(&self) -> f64 {
        let hi = self.restart_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = self.restart_values.iter().copied().fold(f64::INFINITY, f64::min);
        if hi.is_finite() {
            hi - lo
        } else {
            0.0
        }
    }

    pub fn map_minimizer<N>(self, f: impl FnOnce(M) -> N) -> SolveReport<N> {
        SolveReport {
            value: self.value,
            minimizer: f(self.minimizer),
            history: self.history,
            restart_values: self.restart_values,
            feasibility_residuals: self.feasibility_residuals,
            converged: self.converged,
            iters: self.iters,
            method: self.method,
            wall_time: self.wall_time,
            flags: self.flags,
        }
    }
}
