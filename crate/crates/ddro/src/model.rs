//! In-memory representation of (bilevel) mixed-integer linear models.
//!
//! Every variable and constraint carries a category tag so that model
//! sizes can be accounted for per category (decision vs. dual vs.
//! linearization machinery). Nonnegativity of continuous variables is
//! encoded as a lower bound, not a row; size accounting counts such a
//! bound as one constraint when the builder sets `counts_as_constraint`.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

pub type VarId = usize;
pub type ConId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
    Integer,
}

/// Role of a variable in the reformulation it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarTag {
    /// Original decision variable (route, item selection, allocation).
    Decision,
    /// Hedging decision reducing uncertainty.
    Hedging,
    /// Uncertainty realization kept in the model (bilevel reformulations).
    Uncertainty,
    /// LP dual variable of the inner worst-case problem.
    Dual,
    /// Auxiliary variable from a McCormick product linearization.
    McCormickAux,
    /// Binary indicator from a big-M complementarity linearization.
    ComplAux,
    /// Epigraph bound variable.
    Epigraph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConTag {
    Structural,
    DualFeasibility,
    UncertaintySet,
    StrongDuality,
    McCormick,
    ComplBigM,
    Stationarity,
    Epigraph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sense::Le => write!(f, "<="),
            Sense::Eq => write!(f, "="),
            Sense::Ge => write!(f, ">="),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjSense {
    Min,
    Max,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Variable {
    pub id: VarId,
    pub name: String,
    pub lb: f64,
    pub ub: f64,
    pub kind: VarKind,
    pub tag: VarTag,
    /// The paper's size tables count nonnegativity conditions as
    /// constraints; builders set this on each variable whose `lb = 0`
    /// bound stands in for an explicit nonnegativity row.
    pub counts_as_constraint: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinConstraint {
    pub id: ConId,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub tag: ConTag,
}

/// Quadratic constraint; the coefficient list is interpreted symmetrically,
/// i.e. a term `(i, j, c)` means `c * x_i * x_j` and is the same as `(j, i, c)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadConstraint {
    pub id: ConId,
    pub quad_terms: Vec<(VarId, VarId, f64)>,
    pub lin_terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub tag: ConTag,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Objective {
    pub sense: ObjSense,
    pub lin_terms: Vec<(VarId, f64)>,
    /// Bilinear terms prior to linearization (portfolio models keep them).
    pub quad_terms: Vec<(VarId, VarId, f64)>,
    pub constant: f64,
}

impl Objective {
    pub fn new(sense: ObjSense) -> Self {
        Objective {
            sense,
            lin_terms: Vec::new(),
            quad_terms: Vec::new(),
            constant: 0.0,
        }
    }

    pub fn is_linear(&self) -> bool {
        self.quad_terms.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MilpModel {
    pub name: String,
    pub variables: Vec<Variable>,
    pub constraints: Vec<LinConstraint>,
    pub quad_constraints: Vec<QuadConstraint>,
    pub objective: Objective,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("inverted bounds on `{name}`: lb={lb} > ub={ub}")]
    InvertedBounds { name: String, lb: f64, ub: f64 },
    #[error("unknown variable id {0}")]
    UnknownVar(VarId),
    #[error("non-finite coefficient on variable id {0}")]
    NonFiniteCoefficient(VarId),
}

/// One violated model invariant, reported by [`MilpModel::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    InvertedBounds(VarId),
    NonBinaryBounds(VarId),
    DuplicateName(String),
    DanglingVar { constraint: ConId, var: VarId },
    DuplicateTerm { constraint: ConId, var: VarId },
    NonFiniteData(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::InvertedBounds(v) => write!(f, "variable {v}: lb > ub"),
            Violation::NonBinaryBounds(v) => write!(f, "binary variable {v} has bounds outside [0,1]"),
            Violation::DuplicateName(n) => write!(f, "duplicate variable name `{n}`"),
            Violation::DanglingVar { constraint, var } => {
                write!(f, "constraint {constraint} references unknown variable {var}")
            }
            Violation::DuplicateTerm { constraint, var } => {
                write!(f, "constraint {constraint} has duplicate term on variable {var}")
            }
            Violation::NonFiniteData(what) => write!(f, "non-finite data in {what}"),
        }
    }
}

impl MilpModel {
    pub fn new(name: impl Into<String>) -> Self {
        MilpModel {
            name: name.into(),
            variables: Vec::new(),
            constraints: Vec::new(),
            quad_constraints: Vec::new(),
            objective: Objective::new(ObjSense::Min),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len() + self.quad_constraints.len()
    }

    pub fn is_linear(&self) -> bool {
        self.quad_constraints.is_empty() && self.objective.is_linear()
    }

    pub fn var_by_name(&self, name: &str) -> Option<&Variable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn add_variable(
        &mut self,
        name: impl Into<String>,
        lb: f64,
        ub: f64,
        kind: VarKind,
        tag: VarTag,
    ) -> Result<VarId, ModelError> {
        let name = name.into();
        if self.variables.iter().any(|v| v.name == name) {
            return Err(ModelError::DuplicateName(name));
        }
        if lb > ub {
            return Err(ModelError::InvertedBounds { name, lb, ub });
        }
        let (lb, ub) = match kind {
            VarKind::Binary => (0.0, 1.0),
            _ => (lb, ub),
        };
        let id = self.variables.len();
        self.variables.push(Variable {
            id,
            name,
            lb,
            ub,
            kind,
            tag,
            counts_as_constraint: false,
        });
        Ok(id)
    }

    /// Adds a variable whose `lb = 0` bound is counted as a constraint in
    /// size reports.
    pub fn add_counted_variable(
        &mut self,
        name: impl Into<String>,
        lb: f64,
        ub: f64,
        kind: VarKind,
        tag: VarTag,
    ) -> Result<VarId, ModelError> {
        let id = self.add_variable(name, lb, ub, kind, tag)?;
        self.variables[id].counts_as_constraint = true;
        Ok(id)
    }

    pub fn add_linear_constraint(
        &mut self,
        terms: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
        tag: ConTag,
    ) -> Result<ConId, ModelError> {
        for &(v, c) in &terms {
            if v >= self.variables.len() {
                return Err(ModelError::UnknownVar(v));
            }
            if !c.is_finite() {
                return Err(ModelError::NonFiniteCoefficient(v));
            }
        }
        let id = self.constraints.len();
        self.constraints.push(LinConstraint {
            id,
            terms,
            sense,
            rhs,
            tag,
        });
        Ok(id)
    }

    pub fn add_quad_constraint(
        &mut self,
        quad_terms: Vec<(VarId, VarId, f64)>,
        lin_terms: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
        tag: ConTag,
    ) -> Result<ConId, ModelError> {
        for &(i, j, _) in &quad_terms {
            if i >= self.variables.len() {
                return Err(ModelError::UnknownVar(i));
            }
            if j >= self.variables.len() {
                return Err(ModelError::UnknownVar(j));
            }
        }
        for &(v, _) in &lin_terms {
            if v >= self.variables.len() {
                return Err(ModelError::UnknownVar(v));
            }
        }
        let id = self.quad_constraints.len();
        self.quad_constraints.push(QuadConstraint {
            id,
            quad_terms,
            lin_terms,
            sense,
            rhs,
            tag,
        });
        Ok(id)
    }

    /// Moves the objective into a fresh epigraph variable `t` bounded by
    /// one new constraint; the optimal value and optimizer set over the
    /// original variables are unchanged.
    pub fn to_epigraph(&self) -> MilpModel {
        let mut out = self.clone();
        let t = out
            .add_variable("__epi_t", f64::NEG_INFINITY, f64::INFINITY, VarKind::Continuous, VarTag::Epigraph)
            .expect("fresh epigraph variable");
        let obj = out.objective.clone();
        // min: c x + k <= t  <=>  c x - t <= -k ; max: t <= c x + k.
        let sign = match obj.sense {
            ObjSense::Min => 1.0,
            ObjSense::Max => -1.0,
        };
        let mut terms: Vec<(VarId, f64)> = obj.lin_terms.iter().map(|&(v, c)| (v, sign * c)).collect();
        terms.push((t, -sign));
        if obj.quad_terms.is_empty() {
            out.add_linear_constraint(terms, Sense::Le, -sign * obj.constant, ConTag::Epigraph)
                .expect("epigraph row");
        } else {
            let quad = obj.quad_terms.iter().map(|&(i, j, c)| (i, j, sign * c)).collect();
            out.add_quad_constraint(quad, terms, Sense::Le, -sign * obj.constant, ConTag::Epigraph)
                .expect("epigraph row");
        }
        out.objective = Objective {
            sense: obj.sense,
            lin_terms: vec![(t, 1.0)],
            quad_terms: Vec::new(),
            constant: 0.0,
        };
        out
    }

    pub fn size_report(&self) -> SizeReport {
        let mut r = SizeReport::default();
        for v in &self.variables {
            let aux = matches!(v.tag, VarTag::McCormickAux | VarTag::ComplAux);
            match (v.kind, aux) {
                (VarKind::Continuous, false) => r.continuous_vars += 1,
                (VarKind::Continuous, true) => r.continuous_aux += 1,
                (_, false) => r.binary_vars += 1,
                (_, true) => r.binary_aux += 1,
            }
            if v.counts_as_constraint {
                match v.tag {
                    VarTag::McCormickAux => r.mccormick_constraints += 1,
                    VarTag::ComplAux => r.compl_constraints += 1,
                    _ => r.constraints += 1,
                }
            }
        }
        let mut count = |tag: ConTag| match tag {
            ConTag::McCormick => r.mccormick_constraints += 1,
            ConTag::ComplBigM => r.compl_constraints += 1,
            _ => r.constraints += 1,
        };
        for c in &self.constraints {
            count(c.tag);
        }
        for c in &self.quad_constraints {
            count(c.tag);
        }
        r
    }

    /// Checks all structural invariants; returns the list of violations
    /// (empty iff the model is well formed).
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut names = BTreeSet::new();
        for v in &self.variables {
            if v.lb > v.ub {
                out.push(Violation::InvertedBounds(v.id));
            }
            if v.kind == VarKind::Binary && (v.lb != 0.0 || v.ub != 1.0) {
                out.push(Violation::NonBinaryBounds(v.id));
            }
            if !names.insert(v.name.clone()) {
                out.push(Violation::DuplicateName(v.name.clone()));
            }
        }
        let n = self.variables.len();
        for c in &self.constraints {
            let mut seen = BTreeSet::new();
            for &(v, coef) in &c.terms {
                if v >= n {
                    out.push(Violation::DanglingVar { constraint: c.id, var: v });
                } else if !seen.insert(v) {
                    out.push(Violation::DuplicateTerm { constraint: c.id, var: v });
                }
                if !coef.is_finite() {
                    out.push(Violation::NonFiniteData(format!("constraint {} coefficient", c.id)));
                }
            }
            if !c.rhs.is_finite() {
                out.push(Violation::NonFiniteData(format!("constraint {} rhs", c.id)));
            }
        }
        for c in &self.quad_constraints {
            for &(i, j, _) in &c.quad_terms {
                for v in [i, j] {
                    if v >= n {
                        out.push(Violation::DanglingVar { constraint: c.id, var: v });
                    }
                }
            }
        }
        for &(v, _) in &self.objective.lin_terms {
            if v >= n {
                out.push(Violation::DanglingVar { constraint: usize::MAX, var: v });
            }
        }
        out
    }
}

/// Model size partitioned by category, mirroring the reformulation
/// size-comparison tables.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeReport {
    pub continuous_vars: usize,
    pub binary_vars: usize,
    pub continuous_aux: usize,
    pub binary_aux: usize,
    pub constraints: usize,
    pub mccormick_constraints: usize,
    pub compl_constraints: usize,
}

/// A MILP together with a leader/follower split: the follower controls
/// `lower_vars`, is constrained by `lower_cons` (which may reference
/// leader variables), and optimizes `lower_objective`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BilevelModel {
    pub base: MilpModel,
    pub lower_vars: BTreeSet<VarId>,
    pub lower_cons: BTreeSet<ConId>,
    pub lower_objective: Objective,
}

impl BilevelModel {
    pub fn leader_vars(&self) -> impl Iterator<Item = &Variable> {
        self.base.variables.iter().filter(|v| !self.lower_vars.contains(&v.id))
    }

    pub fn is_lower_var(&self, id: VarId) -> bool {
        self.lower_vars.contains(&id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_model_is_empty() {
        let m = MilpModel::new("sp");
        assert_eq!(m.num_vars(), 0);
        assert_eq!(m.num_constraints(), 0);
        let unnamed = MilpModel::new("");
        assert_eq!(unnamed.name, "");
    }

    #[test]
    fn add_variable_assigns_dense_ids() {
        let mut m = MilpModel::new("m");
        let a = m.add_variable("x_a", 0.0, 1.0, VarKind::Binary, VarTag::Decision).unwrap();
        assert_eq!(a, 0);
        let b = m
            .add_variable("pi", 0.0, f64::INFINITY, VarKind::Continuous, VarTag::Dual)
            .unwrap();
        assert_eq!(b, 1);
        assert_eq!(m.variables[b].ub, f64::INFINITY);
        let dup = m.add_variable("x_a", 0.0, 1.0, VarKind::Binary, VarTag::Decision);
        assert_eq!(dup, Err(ModelError::DuplicateName("x_a".into())));
        let inv = m.add_variable("z", 2.0, 1.0, VarKind::Continuous, VarTag::Decision);
        assert!(matches!(inv, Err(ModelError::InvertedBounds { .. })));
    }

    #[test]
    fn constraints_reject_unknown_vars() {
        let mut m = MilpModel::new("m");
        for i in 0..3 {
            m.add_variable(format!("v{i}"), 0.0, 1.0, VarKind::Binary, VarTag::Decision)
                .unwrap();
        }
        let ok = m.add_linear_constraint(vec![(0, 1.0), (1, -1.0)], Sense::Eq, 1.0, ConTag::Structural);
        assert_eq!(ok, Ok(0));
        // vacuous constraint is allowed
        let vac = m.add_linear_constraint(vec![], Sense::Le, 1.0, ConTag::Structural);
        assert!(vac.is_ok());
        let bad = m.add_linear_constraint(vec![(999, 1.0)], Sense::Le, 0.0, ConTag::Structural);
        assert_eq!(bad, Err(ModelError::UnknownVar(999)));
    }

    #[test]
    fn epigraph_adds_one_var_and_one_row() {
        let mut m = MilpModel::new("m");
        for i in 0..3 {
            m.add_variable(format!("v{i}"), 0.0, 1.0, VarKind::Continuous, VarTag::Decision)
                .unwrap();
        }
        m.objective = Objective {
            sense: ObjSense::Min,
            lin_terms: vec![(0, 2.0), (1, 1.0)],
            quad_terms: vec![],
            constant: 0.5,
        };
        let e = m.to_epigraph();
        assert_eq!(e.num_vars(), 4);
        assert_eq!(e.num_constraints(), m.num_constraints() + 1);
        assert_eq!(e.objective.lin_terms, vec![(3, 1.0)]);
        let row = e.constraints.last().unwrap();
        assert_eq!(row.tag, ConTag::Epigraph);
        assert_eq!(row.rhs, -0.5);
    }

    #[test]
    fn validate_reports_injected_damage() {
        let mut m = MilpModel::new("m");
        m.add_variable("a", 0.0, 1.0, VarKind::Binary, VarTag::Decision).unwrap();
        m.add_linear_constraint(vec![(0, 1.0)], Sense::Le, 1.0, ConTag::Structural)
            .unwrap();
        assert!(m.validate().is_empty());

        let mut bad = m.clone();
        bad.variables[0].lb = 2.0;
        bad.variables[0].ub = 1.0;
        assert_eq!(bad.validate().len(), 2); // inverted + non-binary bounds

        let mut dangling = m.clone();
        dangling.constraints[0].terms.push((7, 1.0));
        assert_eq!(dangling.validate(), vec![Violation::DanglingVar { constraint: 0, var: 7 }]);
    }

    #[test]
    fn size_report_buckets_by_tag() {
        let mut m = MilpModel::new("m");
        let x = m.add_variable("x", 0.0, 1.0, VarKind::Binary, VarTag::Decision).unwrap();
        let l = m
            .add_counted_variable("l", 0.0, 5.0, VarKind::Continuous, VarTag::Dual)
            .unwrap();
        let r = m
            .add_counted_variable("r", 0.0, 5.0, VarKind::Continuous, VarTag::McCormickAux)
            .unwrap();
        m.add_linear_constraint(vec![(x, 1.0), (l, 1.0)], Sense::Le, 1.0, ConTag::Structural)
            .unwrap();
        m.add_linear_constraint(vec![(r, 1.0), (x, -5.0)], Sense::Le, 0.0, ConTag::McCormick)
            .unwrap();
        let s = m.size_report();
        assert_eq!(s.continuous_vars, 1);
        assert_eq!(s.binary_vars, 1);
        assert_eq!(s.continuous_aux, 1);
        assert_eq!(s.constraints, 2); // structural row + counted lb of `l`
        assert_eq!(s.mccormick_constraints, 2); // mccormick row + counted lb of `r`
    }
}
