//! Desk-scale exact solving: bounded-variable primal simplex, best-first
//! branch and bound on integer variables, file-format writers/parsers, and
//! an external-solver escape hatch via files.
//!
//! The solver is dense and correctness-first. Every `Optimal` result is
//! audited against the original model (row residuals and integrality)
//! before it is returned.

mod branch_bound;
mod external;
mod lp_format;
mod mps;
mod simplex;
mod sol_file;

pub use branch_bound::{solve_milp, MilpConfig};
pub use external::{external_solve, ExternalCommand, SolutionDialect};
pub use lp_format::{parse_lp_format, write_lp_format, write_lp_format_to_string};
pub use mps::{parse_mps, write_mps, write_mps_to_string};
pub use simplex::solve_lp;
pub use sol_file::parse_sol_file;

use crate::model::{MilpModel, Sense, VarKind};
use serde::{Deserialize, Serialize};

pub const FEAS_TOL: f64 = 1e-7;
pub const OPT_TOL: f64 = 1e-7;
pub const AUDIT_TOL: f64 = 1e-6;
pub const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NodeLimit,
    TimeLimit,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NodeLimit => "node_limit",
            SolveStatus::TimeLimit => "time_limit",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for SolveStatus {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "optimal" => Ok(SolveStatus::Optimal),
            "infeasible" => Ok(SolveStatus::Infeasible),
            "unbounded" => Ok(SolveStatus::Unbounded),
            "node_limit" => Ok(SolveStatus::NodeLimit),
            "time_limit" => Ok(SolveStatus::TimeLimit),
            other => Err(format!("unknown status `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Variable values indexed by var id; empty when no point is available.
    pub values: Vec<f64>,
    /// Objective of the reported point (NaN when none).
    pub objective: f64,
    /// Best proven dual bound.
    pub bound: f64,
    pub nodes: u64,
    pub elapsed_ms: u128,
}

impl SolveResult {
    pub fn value_of(&self, id: usize) -> f64 {
        self.values.get(id).copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("model has quadratic content; the built-in solver is linear only")]
    QuadraticContent,
    #[error("integer variable {0} has non-finite bounds")]
    UnboundedInteger(usize),
    #[error("simplex iteration limit reached ({0} iterations)")]
    IterationLimit(usize),
    #[error("post-solve audit failed: {0}")]
    AuditFailed(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("external solver: {0}")]
    External(String),
}

/// Largest violation of bounds and linear rows at `values`.
pub fn max_violation(model: &MilpModel, values: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for v in &model.variables {
        let x = values[v.id];
        worst = worst.max(v.lb - x).max(x - v.ub);
    }
    for c in &model.constraints {
        let lhs: f64 = c.terms.iter().map(|&(v, a)| a * values[v]).sum();
        let viol = match c.sense {
            Sense::Le => lhs - c.rhs,
            Sense::Ge => c.rhs - lhs,
            Sense::Eq => (lhs - c.rhs).abs(),
        };
        worst = worst.max(viol);
    }
    worst
}

/// Mandatory audit run on every solve that reports a point.
pub fn audit(model: &MilpModel, values: &[f64], check_integrality: bool) -> Result<(), SolveError> {
    if values.len() != model.num_vars() {
        return Err(SolveError::AuditFailed(format!(
            "point has {} entries for {} variables",
            values.len(),
            model.num_vars()
        )));
    }
    let viol = max_violation(model, values);
    if viol > AUDIT_TOL {
        return Err(SolveError::AuditFailed(format!("constraint violation {viol:.3e}")));
    }
    if check_integrality {
        for v in &model.variables {
            if matches!(v.kind, VarKind::Binary | VarKind::Integer) {
                let x = values[v.id];
                if (x - x.round()).abs() > INT_TOL {
                    return Err(SolveError::AuditFailed(format!(
                        "variable {} = {x} is not integral",
                        v.name
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Objective value of `values` under the model's objective (including
/// quadratic terms and the constant).
pub fn objective_value(model: &MilpModel, values: &[f64]) -> f64 {
    let lin: f64 = model.objective.lin_terms.iter().map(|&(v, c)| c * values[v]).sum();
    let quad: f64 = model
        .objective
        .quad_terms
        .iter()
        .map(|&(i, j, c)| c * values[i] * values[j])
        .sum();
    lin + quad + model.objective.constant
}
