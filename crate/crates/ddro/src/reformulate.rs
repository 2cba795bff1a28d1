//! Single-level reformulation pipelines for continuous decision-dependent
//! uncertainty sets, plus the reusable linearization passes.
//!
//! Three routes are built per problem where the derivation exists:
//! the classic robust counterpart (dualize the inner maximization and
//! merge the dual), the duality-based single-level reformulation of the
//! equivalent bilevel problem (primal + dual lower-level feasibility plus
//! the strong-duality inequality), and, for the shortest path only, the
//! KKT-based reformulation with big-M-linearized complementarity.
//! Binary-times-bounded products are McCormick-linearized exactly; the
//! portfolio models keep their continuous bilinearities symbolic.

use crate::model::{ConTag, MilpModel, ObjSense, Sense, VarId, VarKind, VarTag};
use crate::problems::{Instance, KpInstance, KpUncertainty, PortfolioInstance, SpInstance};
use crate::uncertainty::{BudgetedSet, KnapsackMode, KnapsackSet, UncertaintySet};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReformKind {
    RobustDual,
    BilevelDuality,
    BilevelKkt,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ReformError {
    #[error("discrete uncertainty sets have no single-level reformulation")]
    DiscreteSetUnsupported,
    #[error("KKT reformulation is derived for the shortest path problem only")]
    KktUnsupported,
    #[error("cannot bound the product factor: {0}")]
    UnboundedFactor(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
}

/// Which form the knapsack weight row takes in the budgeted bilevel
/// reformulation: the dual objective (the paper's stated model) or the
/// primal worst-case term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BudgetedWeightRow {
    #[default]
    Dual,
    Primal,
}

/// Bounds backing every McCormick and big-M coefficient emitted by the
/// builders; tests recompute these and compare against the models.
#[derive(Debug, Clone, PartialEq)]
pub struct BigMLedger {
    /// Bound on the budget dual: `max_a d_hat_a` (shortest path) or
    /// `max_i a_hat_i / min_i f_i` (knapsack-set knapsack).
    pub pi_bound: f64,
    /// Per-index bound on the cap duals (`d_hat_a`, `a_hat_i`).
    pub lambda_bounds: Vec<f64>,
    /// Per-index bound on the lower-bound duals in the KKT route:
    /// `max d_hat + d_hat_a`.
    pub lambda_minus_bounds: Vec<f64>,
    /// Bound on the budget slack `Gamma - sum u`.
    pub budget_slack: f64,
    /// Bound on a cap slack `1 - gamma x - u` and on each `u_i`.
    pub cap_slack: f64,
}

impl BigMLedger {
    pub fn sp_budgeted(inst: &SpInstance) -> BigMLedger {
        let dmax = inst.d_hat.iter().cloned().fold(0.0f64, f64::max);
        BigMLedger {
            pi_bound: dmax,
            lambda_bounds: inst.d_hat.clone(),
            lambda_minus_bounds: inst.d_hat.iter().map(|d| dmax + d).collect(),
            budget_slack: inst.budget as f64,
            cap_slack: 1.0,
        }
    }

    pub fn kp_budgeted(inst: &KpInstance) -> BigMLedger {
        let budget = match &inst.uncertainty {
            KpUncertainty::Budgeted { budget, .. } => *budget as f64,
            _ => 0.0,
        };
        BigMLedger {
            pi_bound: inst.a_hat.iter().cloned().fold(0.0f64, f64::max),
            lambda_bounds: inst.a_hat.clone(),
            lambda_minus_bounds: Vec::new(),
            budget_slack: budget,
            cap_slack: 1.0,
        }
    }

    pub fn kp_knapsack(inst: &KpInstance) -> Result<BigMLedger, ReformError> {
        let KpUncertainty::Knapsack { f, .. } = &inst.uncertainty else {
            return Err(ReformError::InvalidInstance("expected knapsack uncertainty".into()));
        };
        let fmin = f.iter().cloned().fold(f64::INFINITY, f64::min);
        if fmin <= 0.0 {
            return Err(ReformError::UnboundedFactor(
                "pi needs max a_hat / min f, but min f is zero".into(),
            ));
        }
        let amax = inst.a_hat.iter().cloned().fold(0.0f64, f64::max);
        Ok(BigMLedger {
            pi_bound: amax / fmin,
            lambda_bounds: inst.a_hat.clone(),
            lambda_minus_bounds: Vec::new(),
            budget_slack: 0.0,
            cap_slack: 1.0,
        })
    }
}

/// The uncertainty set descriptor an instance carries.
pub fn uncertainty_set(inst: &Instance) -> UncertaintySet {
    match inst {
        Instance::ShortestPath(sp) => match &sp.discrete {
            Some(d) => UncertaintySet::Knapsack(KnapsackSet::new(
                d.f.clone(),
                d.b,
                d.w.clone(),
                KnapsackMode::Discrete,
            )),
            None => UncertaintySet::Budgeted(BudgetedSet::new(sp.budget, sp.gamma.clone())),
        },
        Instance::Knapsack(kp) => match &kp.uncertainty {
            KpUncertainty::Budgeted { budget, gamma, .. } => {
                UncertaintySet::Budgeted(BudgetedSet::new(*budget, gamma.clone()))
            }
            KpUncertainty::Knapsack { f, b, w, discrete } => UncertaintySet::Knapsack(
                KnapsackSet::new(
                    f.clone(),
                    *b,
                    w.clone(),
                    if *discrete { KnapsackMode::Discrete } else { KnapsackMode::Continuous },
                ),
            ),
        },
        Instance::Portfolio(pf) => match &pf.discrete {
            Some(d) => UncertaintySet::Knapsack(KnapsackSet::new(
                d.f.clone(),
                d.b,
                d.w.clone(),
                KnapsackMode::Discrete,
            )),
            None => UncertaintySet::Budgeted(BudgetedSet::new(pf.budget, pf.gamma.clone())),
        },
    }
}

/// Linearizes `x * v` for binary `x` and continuous `v` in `[0, vmax]`:
/// adds an auxiliary `r` with `r <= vmax*x`, `r <= v`, `v - vmax*(1-x) <=
/// r`, `r >= 0`; exact at binary points. Returns the id of `r`.
pub fn mccormick_bin_cont(
    model: &mut MilpModel,
    x: VarId,
    v: VarId,
    vmax: f64,
) -> Result<VarId, ReformError> {
    if !vmax.is_finite() || vmax < 0.0 {
        return Err(ReformError::UnboundedFactor(format!(
            "product {} * {} needs a finite nonnegative bound, got {vmax}",
            model.variables[x].name, model.variables[v].name
        )));
    }
    debug_assert_eq!(model.variables[v].lb, 0.0);
    debug_assert!(model.variables[v].ub <= vmax + 1e-9);
    let name = format!("r_{}_{}", model.variables[x].name, model.variables[v].name);
    let r = model
        .add_counted_variable(name, 0.0, vmax, VarKind::Continuous, VarTag::McCormickAux)
        .expect("fresh aux");
    model
        .add_linear_constraint(vec![(r, 1.0), (x, -vmax)], Sense::Le, 0.0, ConTag::McCormick)
        .expect("mccormick row");
    model
        .add_linear_constraint(vec![(r, 1.0), (v, -1.0)], Sense::Le, 0.0, ConTag::McCormick)
        .expect("mccormick row");
    model
        .add_linear_constraint(vec![(v, 1.0), (x, vmax), (r, -1.0)], Sense::Le, vmax, ConTag::McCormick)
        .expect("mccormick row");
    Ok(r)
}

/// Linearizes `x * u` for binary factors: `-u + r <= 0`, `-x + r <= 0`,
/// `x + u - r <= 1`. The auxiliary is binary or continuous per `binary_aux`.
pub fn mccormick_bin_bin(model: &mut MilpModel, x: VarId, u: VarId, binary_aux: bool) -> VarId {
    let name = format!("r_{}_{}", model.variables[x].name, model.variables[u].name);
    let r = if binary_aux {
        model
            .add_variable(name, 0.0, 1.0, VarKind::Binary, VarTag::McCormickAux)
            .expect("fresh aux")
    } else {
        model
            .add_counted_variable(name, 0.0, 1.0, VarKind::Continuous, VarTag::McCormickAux)
            .expect("fresh aux")
    };
    model
        .add_linear_constraint(vec![(u, -1.0), (r, 1.0)], Sense::Le, 0.0, ConTag::McCormick)
        .expect("mccormick row");
    model
        .add_linear_constraint(vec![(x, -1.0), (r, 1.0)], Sense::Le, 0.0, ConTag::McCormick)
        .expect("mccormick row");
    model
        .add_linear_constraint(vec![(x, 1.0), (u, 1.0), (r, -1.0)], Sense::Le, 1.0, ConTag::McCormick)
        .expect("mccormick row");
    r
}

/// Big-M linearization of the complementarity `mu * g = 0` where
/// `0 <= mu <= m_mu` and `0 <= g = g_const + g_terms <= m_g` hold at every
/// feasible point: adds a binary `z` with `mu <= m_mu z` and
/// `g <= m_g (1 - z)`. Returns the id of `z`.
pub fn bigm_complementarity(
    model: &mut MilpModel,
    mu: VarId,
    g_terms: &[(VarId, f64)],
    g_const: f64,
    m_mu: f64,
    m_g: f64,
) -> Result<VarId, ReformError> {
    if !m_mu.is_finite() || !m_g.is_finite() {
        return Err(ReformError::UnboundedFactor(format!(
            "complementarity on {} needs finite bounds",
            model.variables[mu].name
        )));
    }
    let name = format!("z_{}", model.variables[mu].name);
    let z = model
        .add_variable(name, 0.0, 1.0, VarKind::Binary, VarTag::ComplAux)
        .expect("fresh indicator");
    model
        .add_linear_constraint(vec![(mu, 1.0), (z, -m_mu)], Sense::Le, 0.0, ConTag::ComplBigM)
        .expect("compl row");
    let mut terms: Vec<(VarId, f64)> = g_terms.to_vec();
    terms.push((z, m_g));
    model
        .add_linear_constraint(terms, Sense::Le, m_g - g_const, ConTag::ComplBigM)
        .expect("compl row");
    Ok(z)
}

/// Variable ids shared by the shortest-path builders.
struct SpVars {
    x: Vec<VarId>,
    y: Vec<VarId>,
}

fn sp_decision_vars(model: &mut MilpModel, m: usize) -> SpVars {
    let x = (0..m)
        .map(|a| {
            model
                .add_variable(format!("x_{a}"), 0.0, 1.0, VarKind::Binary, VarTag::Hedging)
                .expect("fresh var")
        })
        .collect();
    let y = (0..m)
        .map(|a| {
            model
                .add_variable(format!("y_{a}"), 0.0, 1.0, VarKind::Binary, VarTag::Decision)
                .expect("fresh var")
        })
        .collect();
    SpVars { x, y }
}

fn sp_robust(inst: &SpInstance) -> Result<MilpModel, ReformError> {
    let m = inst.num_arcs();
    let ledger = BigMLedger::sp_budgeted(inst);
    let mut model = MilpModel::new("sp_robust");
    let SpVars { x, y } = sp_decision_vars(&mut model, m);
    let pi = model
        .add_counted_variable("pi", 0.0, f64::INFINITY, VarKind::Continuous, VarTag::Dual)
        .expect("fresh var");
    let lambda: Vec<VarId> = (0..m)
        .map(|a| {
            model
                .add_counted_variable(
                    format!("lambda_{a}"),
                    0.0,
                    ledger.lambda_bounds[a],
                    VarKind::Continuous,
                    VarTag::Dual,
                )
                .expect("fresh var")
        })
        .collect();
    crate::problems::add_flow_rows(&mut model, inst, &y);
    for a in 0..m {
        model
            .add_linear_constraint(
                vec![(pi, 1.0), (lambda[a], 1.0), (y[a], -inst.d_hat[a])],
                Sense::Ge,
                0.0,
                ConTag::DualFeasibility,
            )
            .expect("dual row");
    }
    let r: Vec<VarId> = (0..m)
        .map(|a| mccormick_bin_cont(&mut model, x[a], lambda[a], ledger.lambda_bounds[a]))
        .collect::<Result<_, _>>()?;

    model.objective.sense = ObjSense::Min;
    let mut obj = Vec::new();
    for a in 0..m {
        obj.push((x[a], inst.hedging_cost[a]));
        obj.push((y[a], inst.d_bar[a]));
    }
    obj.push((pi, inst.budget as f64));
    for a in 0..m {
        obj.push((lambda[a], 1.0));
        if inst.gamma[a] != 0.0 {
            obj.push((r[a], -inst.gamma[a]));
        }
    }
    model.objective.lin_terms = obj;
    Ok(model)
}

fn sp_duality(inst: &SpInstance) -> Result<MilpModel, ReformError> {
    let m = inst.num_arcs();
    let ledger = BigMLedger::sp_budgeted(inst);
    let mut model = MilpModel::new("sp_bilevel_duality");
    let SpVars { x, y } = sp_decision_vars(&mut model, m);
    let u: Vec<VarId> = (0..m)
        .map(|a| {
            model
                .add_counted_variable(format!("u_{a}"), 0.0, 1.0, VarKind::Continuous, VarTag::Uncertainty)
                .expect("fresh var")
        })
        .collect();
    let pi = model
        .add_counted_variable("pi", 0.0, f64::INFINITY, VarKind::Continuous, VarTag::Dual)
        .expect("fresh var");
    let lambda: Vec<VarId> = (0..m)
        .map(|a| {
            model
                .add_counted_variable(
                    format!("lambda_{a}"),
                    0.0,
                    ledger.lambda_bounds[a],
                    VarKind::Continuous,
                    VarTag::Dual,
                )
                .expect("fresh var")
        })
        .collect();
    crate::problems::add_flow_rows(&mut model, inst, &y);
    model
        .add_linear_constraint(
            u.iter().map(|&v| (v, 1.0)).collect(),
            Sense::Le,
            inst.budget as f64,
            ConTag::UncertaintySet,
        )
        .expect("budget row");
    for a in 0..m {
        model
            .add_linear_constraint(
                vec![(u[a], 1.0), (x[a], inst.gamma[a])],
                Sense::Le,
                1.0,
                ConTag::UncertaintySet,
            )
            .expect("cap row");
    }
    for a in 0..m {
        model
            .add_linear_constraint(
                vec![(pi, 1.0), (lambda[a], 1.0), (y[a], -inst.d_hat[a])],
                Sense::Ge,
                0.0,
                ConTag::DualFeasibility,
            )
            .expect("dual row");
    }
    let r: Vec<VarId> = (0..m)
        .map(|a| mccormick_bin_cont(&mut model, x[a], lambda[a], ledger.lambda_bounds[a]))
        .collect::<Result<_, _>>()?;
    let q: Vec<VarId> = (0..m)
        .map(|a| mccormick_bin_cont(&mut model, y[a], u[a], 1.0))
        .collect::<Result<_, _>>()?;
    // pi*Gamma + sum lambda(1 - gamma x) <= sum d_hat u y
    let mut sd = vec![(pi, inst.budget as f64)];
    for a in 0..m {
        sd.push((lambda[a], 1.0));
        if inst.gamma[a] != 0.0 {
            sd.push((r[a], -inst.gamma[a]));
        }
        sd.push((q[a], -inst.d_hat[a]));
    }
    model
        .add_linear_constraint(sd, Sense::Le, 0.0, ConTag::StrongDuality)
        .expect("strong duality row");

    model.objective.sense = ObjSense::Min;
    let mut obj = Vec::new();
    for a in 0..m {
        obj.push((x[a], inst.hedging_cost[a]));
        obj.push((y[a], inst.d_bar[a]));
        obj.push((q[a], inst.d_hat[a]));
    }
    model.objective.lin_terms = obj;
    Ok(model)
}

fn sp_kkt(inst: &SpInstance) -> Result<MilpModel, ReformError> {
    let m = inst.num_arcs();
    let ledger = BigMLedger::sp_budgeted(inst);
    let mut model = MilpModel::new("sp_bilevel_kkt");
    let SpVars { x, y } = sp_decision_vars(&mut model, m);
    let u: Vec<VarId> = (0..m)
        .map(|a| {
            model
                .add_counted_variable(format!("u_{a}"), 0.0, 1.0, VarKind::Continuous, VarTag::Uncertainty)
                .expect("fresh var")
        })
        .collect();
    let pi = model
        .add_counted_variable("pi", 0.0, f64::INFINITY, VarKind::Continuous, VarTag::Dual)
        .expect("fresh var");
    let lam_p: Vec<VarId> = (0..m)
        .map(|a| {
            model
                .add_counted_variable(format!("lambdap_{a}"), 0.0, f64::INFINITY, VarKind::Continuous, VarTag::Dual)
                .expect("fresh var")
        })
        .collect();
    let lam_m: Vec<VarId> = (0..m)
        .map(|a| {
            model
                .add_counted_variable(format!("lambdam_{a}"), 0.0, f64::INFINITY, VarKind::Continuous, VarTag::Dual)
                .expect("fresh var")
        })
        .collect();
    crate::problems::add_flow_rows(&mut model, inst, &y);
    model
        .add_linear_constraint(
            u.iter().map(|&v| (v, 1.0)).collect(),
            Sense::Le,
            inst.budget as f64,
            ConTag::UncertaintySet,
        )
        .expect("budget row");
    for a in 0..m {
        model
            .add_linear_constraint(
                vec![(u[a], 1.0), (x[a], inst.gamma[a])],
                Sense::Le,
                1.0,
                ConTag::UncertaintySet,
            )
            .expect("cap row");
    }
    // stationarity: d_hat_a y_a = pi + lambda+_a - lambda-_a
    for a in 0..m {
        model
            .add_linear_constraint(
                vec![(pi, 1.0), (lam_p[a], 1.0), (lam_m[a], -1.0), (y[a], -inst.d_hat[a])],
                Sense::Eq,
                0.0,
                ConTag::Stationarity,
            )
            .expect("stationarity row");
    }
    let q: Vec<VarId> = (0..m)
        .map(|a| mccormick_bin_cont(&mut model, y[a], u[a], 1.0))
        .collect::<Result<_, _>>()?;
    // pi (Gamma - sum u) = 0
    let g_terms: Vec<(VarId, f64)> = u.iter().map(|&v| (v, -1.0)).collect();
    bigm_complementarity(
        &mut model,
        pi,
        &g_terms,
        inst.budget as f64,
        ledger.pi_bound,
        ledger.budget_slack,
    )?;
    // lambda+_a (1 - gamma_a x_a - u_a) = 0
    for a in 0..m {
        bigm_complementarity(
            &mut model,
            lam_p[a],
            &[(x[a], -inst.gamma[a]), (u[a], -1.0)],
            1.0,
            ledger.lambda_bounds[a],
            ledger.cap_slack,
        )?;
    }
    // lambda-_a u_a = 0
    for a in 0..m {
        bigm_complementarity(
            &mut model,
            lam_m[a],
            &[(u[a], 1.0)],
            0.0,
            ledger.lambda_minus_bounds[a],
            ledger.cap_slack,
        )?;
    }

    model.objective.sense = ObjSense::Min;
    let mut obj = Vec::new();
    for a in 0..m {
        obj.push((x[a], inst.hedging_cost[a]));
        obj.push((y[a], inst.d_bar[a]));
        obj.push((q[a], inst.d_hat[a]));
    }
    model.objective.lin_terms = obj;
    Ok(model)
}

fn kp_decision_vars(model: &mut MilpModel, n: usize) -> Vec<VarId> {
    (0..n)
        .map(|i| {
            model
                .add_variable(format!("x_{i}"), 0.0, 1.0, VarKind::Binary, VarTag::Decision)
                .expect("fresh var")
        })
        .collect()
}

fn kp_knapsack_robust(inst: &KpInstance) -> Result<MilpModel, ReformError> {
    let KpUncertainty::Knapsack { f, b, w, .. } = &inst.uncertainty else {
        unreachable!("dispatch")
    };
    let n = inst.n;
    let ledger = BigMLedger::kp_knapsack(inst)?;
    let mut model = MilpModel::new("kp_knapsack_robust");
    let x = kp_decision_vars(&mut model, n);
    let pi = model
        .add_counted_variable("pi", 0.0, ledger.pi_bound, VarKind::Continuous, VarTag::Dual)
        .expect("fresh var");
    let lambda: Vec<VarId> = (0..n)
        .map(|i| {
            model
                .add_counted_variable(format!("lambda_{i}"), 0.0, f64::INFINITY, VarKind::Continuous, VarTag::Dual)
                .expect("fresh var")
        })
        .collect();
    let r: Vec<VarId> = (0..n)
        .map(|i| mccormick_bin_cont(&mut model, x[i], pi, ledger.pi_bound))
        .collect::<Result<_, _>>()?;
    // sum a_bar x + sum lambda + pi b - sum w_i r_i <= d
    let mut row = Vec::new();
    for i in 0..n {
        row.push((x[i], inst.a_bar[i]));
        row.push((lambda[i], 1.0));
        if w[i] != 0.0 {
            row.push((r[i], -w[i]));
        }
    }
    row.push((pi, *b));
    model
        .add_linear_constraint(row, Sense::Le, inst.capacity, ConTag::Structural)
        .expect("weight row");
    for i in 0..n {
        model
            .add_linear_constraint(
                vec![(pi, f[i]), (lambda[i], 1.0), (x[i], -inst.a_hat[i])],
                Sense::Ge,
                0.0,
                ConTag::DualFeasibility,
            )
            .expect("dual row");
    }
    model.objective.sense = ObjSense::Max;
    model.objective.lin_terms = x.iter().zip(&inst.values).map(|(&v, &c)| (v, c)).collect();
    Ok(model)
}

fn kp_knapsack_duality(inst: &KpInstance) -> Result<MilpModel, ReformError> {
    let KpUncertainty::Knapsack { f, b, w, .. } = &inst.uncertainty else {
        unreachable!("dispatch")
    };
    let n = inst.n;
    let ledger = BigMLedger::kp_knapsack(inst)?;
    let mut model = MilpModel::new("kp_knapsack_bilevel_duality");
    let x = kp_decision_vars(&mut model, n);
    let u: Vec<VarId> = (0..n)
        .map(|i| {
            model
                .add_counted_variable(format!("u_{i}"), 0.0, 1.0, VarKind::Continuous, VarTag::Uncertainty)
                .expect("fresh var")
        })
        .collect();
    let pi = model
        .add_counted_variable("pi", 0.0, ledger.pi_bound, VarKind::Continuous, VarTag::Dual)
        .expect("fresh var");
    let lambda: Vec<VarId> = (0..n)
        .map(|i| {
            model
                .add_counted_variable(format!("lambda_{i}"), 0.0, f64::INFINITY, VarKind::Continuous, VarTag::Dual)
                .expect("fresh var")
        })
        .collect();
    let r: Vec<VarId> = (0..n)
        .map(|i| mccormick_bin_cont(&mut model, x[i], pi, ledger.pi_bound))
        .collect::<Result<_, _>>()?;
    let q: Vec<VarId> = (0..n)
        .map(|i| mccormick_bin_cont(&mut model, x[i], u[i], 1.0))
        .collect::<Result<_, _>>()?;
    // sum (a_bar + u a_hat) x <= d, products via q
    let mut row = Vec::new();
    for i in 0..n {
        row.push((x[i], inst.a_bar[i]));
        row.push((q[i], inst.a_hat[i]));
    }
    model
        .add_linear_constraint(row, Sense::Le, inst.capacity, ConTag::Structural)
        .expect("weight row");
    // uncertainty set: sum f u + w'x <= b
    let mut row = Vec::new();
    for i in 0..n {
        row.push((u[i], f[i]));
        if w[i] != 0.0 {
            row.push((x[i], w[i]));
        }
    }
    model
        .add_linear_constraint(row, Sense::Le, *b, ConTag::UncertaintySet)
        .expect("uncertainty row");
    for i in 0..n {
        model
            .add_linear_constraint(
                vec![(pi, f[i]), (lambda[i], 1.0), (x[i], -inst.a_hat[i])],
                Sense::Ge,
                0.0,
                ConTag::DualFeasibility,
            )
            .expect("dual row");
    }
    // strong duality: sum lambda + pi b(x) <= sum u a_hat x
    let mut sd = vec![(pi, *b)];
    for i in 0..n {
        sd.push((lambda[i], 1.0));
        if w[i] != 0.0 {
            sd.push((r[i], -w[i]));
        }
        sd.push((q[i], -inst.a_hat[i]));
    }
    model
        .add_linear_constraint(sd, Sense::Le, 0.0, ConTag::StrongDuality)
        .expect("strong duality row");
    // explicit box rows u <= 1
    for i in 0..n {
        model
            .add_linear_constraint(vec![(u[i], 1.0)], Sense::Le, 1.0, ConTag::UncertaintySet)
            .expect("box row");
    }
    model.objective.sense = ObjSense::Max;
    model.objective.lin_terms = x.iter().zip(&inst.values).map(|(&v, &c)| (v, c)).collect();
    Ok(model)
}

fn kp_budgeted_robust(inst: &KpInstance) -> Result<MilpModel, ReformError> {
    let KpUncertainty::Budgeted { hedging_cost, budget, gamma } = &inst.uncertainty else {
        unreachable!("dispatch")
    };
    let n = inst.n;
    let ledger = BigMLedger::kp_budgeted(inst);
    let mut model = MilpModel::new("kp_budgeted_robust");
    let x = kp_decision_vars(&mut model, n);
    let y: Vec<VarId> = (0..n)
        .map(|i| {
            model
                .add_variable(format!("y_{i}"), 0.0, 1.0, VarKind::Binary, VarTag::Hedging)
                .expect("fresh var")
        })
        .collect();
    let pi = model
        .add_counted_variable("pi", 0.0, f64::INFINITY, VarKind::Continuous, VarTag::Dual)
        .expect("fresh var");
    let lambda: Vec<VarId> = (0..n)
        .map(|i| {
            model
                .add_counted_variable(
                    format!("lambda_{i}"),
                    0.0,
                    ledger.lambda_bounds[i],
                    VarKind::Continuous,
                    VarTag::Dual,
                )
                .expect("fresh var")
        })
        .collect();
    let r: Vec<VarId> = (0..n)
        .map(|i| mccormick_bin_cont(&mut model, y[i], lambda[i], ledger.lambda_bounds[i]))
        .collect::<Result<_, _>>()?;
    // sum a_bar x + pi Gamma + sum lambda (1 - gamma y) <= d
    let mut row = vec![(pi, *budget as f64)];
    for i in 0..n {
        row.push((x[i], inst.a_bar[i]));
        row.push((lambda[i], 1.0));
        if gamma[i] != 0.0 {
            row.push((r[i], -gamma[i]));
        }
    }
    model
        .add_linear_constraint(row, Sense::Le, inst.capacity, ConTag::Structural)
        .expect("weight row");
    for i in 0..n {
        model
            .add_linear_constraint(
                vec![(pi, 1.0), (lambda[i], 1.0), (x[i], -inst.a_hat[i])],
                Sense::Ge,
                0.0,
                ConTag::DualFeasibility,
            )
            .expect("dual row");
    }
    model.objective.sense = ObjSense::Max;
    let mut obj: Vec<(VarId, f64)> = x.iter().zip(&inst.values).map(|(&v, &c)| (v, c)).collect();
    obj.extend(y.iter().zip(hedging_cost).map(|(&v, &h)| (v, -h)));
    model.objective.lin_terms = obj;
    Ok(model)
}

fn kp_budgeted_duality(inst: &KpInstance, weight_row: BudgetedWeightRow) -> Result<MilpModel, ReformError> {
    let KpUncertainty::Budgeted { hedging_cost, budget, gamma } = &inst.uncertainty else {
        unreachable!("dispatch")
    };
    let n = inst.n;
    let ledger = BigMLedger::kp_budgeted(inst);
    let mut model = MilpModel::new("kp_budgeted_bilevel_duality");
    let x = kp_decision_vars(&mut model, n);
    let y: Vec<VarId> = (0..n)
        .map(|i| {
            model
                .add_variable(format!("y_{i}"), 0.0, 1.0, VarKind::Binary, VarTag::Hedging)
                .expect("fresh var")
        })
        .collect();
    let u: Vec<VarId> = (0..n)
        .map(|i| {
            model
                .add_counted_variable(format!("u_{i}"), 0.0, 1.0, VarKind::Continuous, VarTag::Uncertainty)
                .expect("fresh var")
        })
        .collect();
    let pi = model
        .add_counted_variable("pi", 0.0, f64::INFINITY, VarKind::Continuous, VarTag::Dual)
        .expect("fresh var");
    let lambda: Vec<VarId> = (0..n)
        .map(|i| {
            model
                .add_counted_variable(
                    format!("lambda_{i}"),
                    0.0,
                    ledger.lambda_bounds[i],
                    VarKind::Continuous,
                    VarTag::Dual,
                )
                .expect("fresh var")
        })
        .collect();
    let r: Vec<VarId> = (0..n)
        .map(|i| mccormick_bin_cont(&mut model, y[i], lambda[i], ledger.lambda_bounds[i]))
        .collect::<Result<_, _>>()?;
    let q: Vec<VarId> = (0..n)
        .map(|i| mccormick_bin_cont(&mut model, x[i], u[i], 1.0))
        .collect::<Result<_, _>>()?;

    // weight row: dual objective form (paper default) or the primal term
    match weight_row {
        BudgetedWeightRow::Dual => {
            let mut row = vec![(pi, *budget as f64)];
            for i in 0..n {
                row.push((x[i], inst.a_bar[i]));
                row.push((lambda[i], 1.0));
                if gamma[i] != 0.0 {
                    row.push((r[i], -gamma[i]));
                }
            }
            model
                .add_linear_constraint(row, Sense::Le, inst.capacity, ConTag::Structural)
                .expect("weight row");
        }
        BudgetedWeightRow::Primal => {
            let mut row = Vec::new();
            for i in 0..n {
                row.push((x[i], inst.a_bar[i]));
                row.push((q[i], inst.a_hat[i]));
            }
            model
                .add_linear_constraint(row, Sense::Le, inst.capacity, ConTag::Structural)
                .expect("weight row");
        }
    }
    for i in 0..n {
        model
            .add_linear_constraint(
                vec![(pi, 1.0), (lambda[i], 1.0), (x[i], -inst.a_hat[i])],
                Sense::Ge,
                0.0,
                ConTag::DualFeasibility,
            )
            .expect("dual row");
    }
    model
        .add_linear_constraint(
            u.iter().map(|&v| (v, 1.0)).collect(),
            Sense::Le,
            *budget as f64,
            ConTag::UncertaintySet,
        )
        .expect("budget row");
    for i in 0..n {
        model
            .add_linear_constraint(
                vec![(u[i], 1.0), (y[i], gamma[i])],
                Sense::Le,
                1.0,
                ConTag::UncertaintySet,
            )
            .expect("cap row");
    }
    // pi Gamma + sum lambda (1 - gamma y) <= sum u a_hat x
    let mut sd = vec![(pi, *budget as f64)];
    for i in 0..n {
        sd.push((lambda[i], 1.0));
        if gamma[i] != 0.0 {
            sd.push((r[i], -gamma[i]));
        }
        sd.push((q[i], -inst.a_hat[i]));
    }
    model
        .add_linear_constraint(sd, Sense::Le, 0.0, ConTag::StrongDuality)
        .expect("strong duality row");

    model.objective.sense = ObjSense::Max;
    let mut obj: Vec<(VarId, f64)> = x.iter().zip(&inst.values).map(|(&v, &c)| (v, c)).collect();
    obj.extend(y.iter().zip(hedging_cost).map(|(&v, &h)| (v, -h)));
    model.objective.lin_terms = obj;
    Ok(model)
}

/// Shared upper-level structure of the portfolio models.
struct PfVars {
    y: Vec<VarId>,
    s: Vec<VarId>,
    x: Vec<VarId>,
}

fn portfolio_core(model: &mut MilpModel, inst: &PortfolioInstance) -> PfVars {
    let n = inst.n_assets;
    let y: Vec<VarId> = (0..n)
        .map(|i| {
            model
                .add_counted_variable(format!("y_{i}"), 0.0, 1.0, VarKind::Continuous, VarTag::Decision)
                .expect("fresh var")
        })
        .collect();
    let s: Vec<VarId> = (0..n)
        .map(|i| {
            model
                .add_variable(format!("s_{i}"), 0.0, 1.0, VarKind::Binary, VarTag::Decision)
                .expect("fresh var")
        })
        .collect();
    let x: Vec<VarId> = (0..n)
        .map(|i| {
            model
                .add_counted_variable(format!("x_{i}"), 0.0, 1.0, VarKind::Continuous, VarTag::Hedging)
                .expect("fresh var")
        })
        .collect();
    let mut quad = Vec::new();
    for i in 0..n {
        for j in i..n {
            let c = if i == j { inst.sigma[i][j] } else { 2.0 * inst.sigma[i][j] };
            if c != 0.0 {
                quad.push((y[i], y[j], c));
            }
        }
    }
    model
        .add_quad_constraint(quad, vec![], Sense::Le, inst.v0, ConTag::Structural)
        .expect("variance row");
    model
        .add_linear_constraint(y.iter().map(|&v| (v, 1.0)).collect(), Sense::Eq, 1.0, ConTag::Structural)
        .expect("budget row");
    model
        .add_linear_constraint(
            s.iter().map(|&v| (v, 1.0)).collect(),
            Sense::Le,
            inst.k as f64,
            ConTag::Structural,
        )
        .expect("cardinality row");
    for i in 0..n {
        model
            .add_linear_constraint(vec![(y[i], 1.0), (s[i], -1.0)], Sense::Le, 0.0, ConTag::Structural)
            .expect("link row");
    }
    // x in [0,1]: the upper bound is counted as an explicit row
    for i in 0..n {
        model
            .add_linear_constraint(vec![(x[i], 1.0)], Sense::Le, 1.0, ConTag::Structural)
            .expect("hedge box row");
    }
    PfVars { y, s, x }
}

fn portfolio_robust(inst: &PortfolioInstance) -> Result<MilpModel, ReformError> {
    let n = inst.n_assets;
    let mut model = MilpModel::new("portfolio_robust");
    let PfVars { y, s: _s, x } = portfolio_core(&mut model, inst);
    let pi = model
        .add_counted_variable("pi", 0.0, f64::INFINITY, VarKind::Continuous, VarTag::Dual)
        .expect("fresh var");
    let lambda: Vec<VarId> = (0..n)
        .map(|i| {
            model
                .add_counted_variable(format!("lambda_{i}"), 0.0, f64::INFINITY, VarKind::Continuous, VarTag::Dual)
                .expect("fresh var")
        })
        .collect();
    for i in 0..n {
        model
            .add_linear_constraint(
                vec![(lambda[i], 1.0), (pi, 1.0), (y[i], -inst.mu_hat[i])],
                Sense::Ge,
                0.0,
                ConTag::DualFeasibility,
            )
            .expect("dual row");
    }
    model.objective.sense = ObjSense::Max;
    let mut obj = Vec::new();
    for i in 0..n {
        obj.push((y[i], inst.mu_bar[i]));
        obj.push((x[i], -inst.hedging_cost[i]));
        obj.push((lambda[i], -1.0));
    }
    obj.push((pi, -(inst.budget as f64)));
    model.objective.lin_terms = obj;
    // + sum gamma_i lambda_i x_i stays bilinear
    model.objective.quad_terms = (0..n)
        .filter(|&i| inst.gamma[i] != 0.0)
        .map(|i| (lambda[i], x[i], inst.gamma[i]))
        .collect();
    Ok(model)
}

fn portfolio_duality(inst: &PortfolioInstance) -> Result<MilpModel, ReformError> {
    let n = inst.n_assets;
    let mut model = MilpModel::new("portfolio_bilevel_duality");
    let PfVars { y, s: _s, x } = portfolio_core(&mut model, inst);
    let u: Vec<VarId> = (0..n)
        .map(|i| {
            model
                .add_counted_variable(format!("u_{i}"), 0.0, 1.0, VarKind::Continuous, VarTag::Uncertainty)
                .expect("fresh var")
        })
        .collect();
    let pi = model
        .add_counted_variable("pi", 0.0, f64::INFINITY, VarKind::Continuous, VarTag::Dual)
        .expect("fresh var");
    let lambda: Vec<VarId> = (0..n)
        .map(|i| {
            model
                .add_counted_variable(format!("lambda_{i}"), 0.0, f64::INFINITY, VarKind::Continuous, VarTag::Dual)
                .expect("fresh var")
        })
        .collect();
    for i in 0..n {
        model
            .add_linear_constraint(
                vec![(lambda[i], 1.0), (pi, 1.0), (y[i], -inst.mu_hat[i])],
                Sense::Ge,
                0.0,
                ConTag::DualFeasibility,
            )
            .expect("dual row");
    }
    model
        .add_linear_constraint(
            u.iter().map(|&v| (v, 1.0)).collect(),
            Sense::Le,
            inst.budget as f64,
            ConTag::UncertaintySet,
        )
        .expect("budget row");
    for i in 0..n {
        model
            .add_linear_constraint(
                vec![(u[i], 1.0), (x[i], inst.gamma[i])],
                Sense::Le,
                1.0,
                ConTag::UncertaintySet,
            )
            .expect("cap row");
    }
    // sum u mu_hat y >= pi Gamma + sum lambda (1 - gamma x): bilinear rows stay symbolic
    let mut lin = vec![(pi, inst.budget as f64)];
    let mut quad = Vec::new();
    for i in 0..n {
        lin.push((lambda[i], 1.0));
        if inst.gamma[i] != 0.0 {
            quad.push((lambda[i], x[i], -inst.gamma[i]));
        }
        quad.push((u[i], y[i], -inst.mu_hat[i]));
    }
    model
        .add_quad_constraint(quad, lin, Sense::Le, 0.0, ConTag::StrongDuality)
        .expect("strong duality row");

    model.objective.sense = ObjSense::Max;
    let mut obj = Vec::new();
    for i in 0..n {
        obj.push((y[i], inst.mu_bar[i]));
        obj.push((x[i], -inst.hedging_cost[i]));
    }
    model.objective.lin_terms = obj;
    model.objective.quad_terms =
        (0..n).map(|i| (u[i], y[i], -inst.mu_hat[i])).collect();
    Ok(model)
}

/// Classic robust counterpart (dualized inner problem merged into the
/// outer one). Rejects discrete uncertainty sets.
pub fn build_robust_counterpart(inst: &Instance) -> Result<MilpModel, ReformError> {
    inst.validate().map_err(|e| ReformError::InvalidInstance(e.to_string()))?;
    match inst {
        Instance::ShortestPath(sp) => {
            if sp.discrete.is_some() {
                return Err(ReformError::DiscreteSetUnsupported);
            }
            sp_robust(sp)
        }
        Instance::Knapsack(kp) => match &kp.uncertainty {
            KpUncertainty::Budgeted { .. } => kp_budgeted_robust(kp),
            KpUncertainty::Knapsack { discrete: true, .. } => Err(ReformError::DiscreteSetUnsupported),
            KpUncertainty::Knapsack { .. } => kp_knapsack_robust(kp),
        },
        Instance::Portfolio(pf) => {
            if pf.discrete.is_some() {
                return Err(ReformError::DiscreteSetUnsupported);
            }
            portfolio_robust(pf)
        }
    }
}

/// Duality-based single-level reformulation of the equivalent bilevel
/// problem (primal + dual feasibility + strong duality). Rejects discrete
/// sets. The budgeted knapsack weight row follows the stated model (dual
/// objective form); see [`build_bilevel_duality_sl_with`] for the variant.
pub fn build_bilevel_duality_sl(inst: &Instance) -> Result<MilpModel, ReformError> {
    build_bilevel_duality_sl_with(inst, BudgetedWeightRow::default())
}

pub fn build_bilevel_duality_sl_with(
    inst: &Instance,
    weight_row: BudgetedWeightRow,
) -> Result<MilpModel, ReformError> {
    inst.validate().map_err(|e| ReformError::InvalidInstance(e.to_string()))?;
    match inst {
        Instance::ShortestPath(sp) => {
            if sp.discrete.is_some() {
                return Err(ReformError::DiscreteSetUnsupported);
            }
            sp_duality(sp)
        }
        Instance::Knapsack(kp) => match &kp.uncertainty {
            KpUncertainty::Budgeted { .. } => kp_budgeted_duality(kp, weight_row),
            KpUncertainty::Knapsack { discrete: true, .. } => Err(ReformError::DiscreteSetUnsupported),
            KpUncertainty::Knapsack { .. } => kp_knapsack_duality(kp),
        },
        Instance::Portfolio(pf) => {
            if pf.discrete.is_some() {
                return Err(ReformError::DiscreteSetUnsupported);
            }
            portfolio_duality(pf)
        }
    }
}

/// KKT-based single-level reformulation (shortest path, budgeted set).
pub fn build_bilevel_kkt_sl(inst: &SpInstance) -> Result<MilpModel, ReformError> {
    inst.validate().map_err(|e| ReformError::InvalidInstance(e.to_string()))?;
    if inst.discrete.is_some() {
        return Err(ReformError::DiscreteSetUnsupported);
    }
    sp_kkt(inst)
}

/// Dispatch by reformulation kind.
pub fn build(inst: &Instance, kind: ReformKind) -> Result<MilpModel, ReformError> {
    match kind {
        ReformKind::RobustDual => build_robust_counterpart(inst),
        ReformKind::BilevelDuality => build_bilevel_duality_sl(inst),
        ReformKind::BilevelKkt => match inst {
            Instance::ShortestPath(sp) => build_bilevel_kkt_sl(sp),
            _ => Err(ReformError::KktUnsupported),
        },
    }
}

/// Post-solve audit: every McCormick auxiliary equals the exact product of
/// its factors at the given point (identified by the aux naming scheme).
pub fn mccormick_products_exact(model: &MilpModel, values: &[f64], tol: f64) -> bool {
    for v in &model.variables {
        if v.tag != VarTag::McCormickAux {
            continue;
        }
        let rest = v.name.strip_prefix("r_").expect("aux naming");
        // name is r_<xname>_<vname>; factor names never contain '_' twice
        // in a row, so split at each '_' and try both partitions.
        let parts: Vec<&str> = rest.split('_').collect();
        let mut matched = false;
        for cut in 1..parts.len() {
            let left = parts[..cut].join("_");
            let right = parts[cut..].join("_");
            if let (Some(a), Some(b)) = (model.var_by_name(&left), model.var_by_name(&right)) {
                let prod = values[a.id] * values[b.id];
                if (values[v.id] - prod).abs() > tol {
                    return false;
                }
                matched = true;
                break;
            }
        }
        if !matched {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instgen::{gen_kp_budgeted, gen_kp_contknap, gen_portfolio, gen_sp_budgeted, Rng};
    use crate::model::SizeReport;
    use crate::oracles;
    use crate::solver::{solve_lp, solve_milp, MilpConfig, SolveStatus};

    fn sp_instance(arcs: usize, nodes: usize, seed: u64) -> SpInstance {
        crate::instgen::gen_sp_with_arc_count(nodes, arcs, seed)
    }

    #[test]
    fn sp_sizes_match_comparison_table() {
        let inst = sp_instance(10, 5, 0);
        let expect = |m: &MilpModel| m.size_report();

        let robust = expect(&sp_robust(&inst).unwrap());
        assert_eq!(
            robust,
            SizeReport {
                continuous_vars: 11,
                binary_vars: 20,
                continuous_aux: 10,
                binary_aux: 0,
                constraints: 26,
                mccormick_constraints: 40,
                compl_constraints: 0,
            }
        );

        let duality = expect(&sp_duality(&inst).unwrap());
        assert_eq!(
            duality,
            SizeReport {
                continuous_vars: 21,
                binary_vars: 20,
                continuous_aux: 20,
                binary_aux: 0,
                constraints: 48,
                mccormick_constraints: 80,
                compl_constraints: 0,
            }
        );

        let kkt = expect(&sp_kkt(&inst).unwrap());
        assert_eq!(
            kkt,
            SizeReport {
                continuous_vars: 31,
                binary_vars: 20,
                continuous_aux: 10,
                binary_aux: 21,
                constraints: 57, // 5|A| + |V| + 2
                mccormick_constraints: 40,
                compl_constraints: 42,
            }
        );
    }

    #[test]
    fn kp_sizes_match_comparison_tables() {
        let n = 5;
        let contknap = gen_kp_contknap(n, 3, 1);
        let robust = kp_knapsack_robust(&contknap).unwrap().size_report();
        assert_eq!(
            robust,
            SizeReport {
                continuous_vars: n + 1,
                binary_vars: n,
                continuous_aux: n,
                binary_aux: 0,
                constraints: 2 * n + 2,
                mccormick_constraints: 4 * n,
                compl_constraints: 0,
            }
        );
        let duality = kp_knapsack_duality(&contknap).unwrap().size_report();
        assert_eq!(
            duality,
            SizeReport {
                continuous_vars: 2 * n + 1,
                binary_vars: n,
                continuous_aux: 2 * n,
                binary_aux: 0,
                constraints: 4 * n + 4,
                mccormick_constraints: 8 * n,
                compl_constraints: 0,
            }
        );

        let budgeted = gen_kp_budgeted(n, 1);
        let robust = kp_budgeted_robust(&budgeted).unwrap().size_report();
        assert_eq!(
            robust,
            SizeReport {
                continuous_vars: n + 1,
                binary_vars: 2 * n,
                continuous_aux: n,
                binary_aux: 0,
                constraints: 2 * n + 2,
                mccormick_constraints: 4 * n,
                compl_constraints: 0,
            }
        );
        let duality = kp_budgeted_duality(&budgeted, BudgetedWeightRow::Dual).unwrap().size_report();
        assert_eq!(
            duality,
            SizeReport {
                continuous_vars: 2 * n + 1,
                binary_vars: 2 * n,
                continuous_aux: 2 * n,
                binary_aux: 0,
                constraints: 4 * n + 4,
                mccormick_constraints: 8 * n,
                compl_constraints: 0,
            }
        );
    }

    #[test]
    fn portfolio_sizes_match_comparison_table() {
        let inst = gen_portfolio(10, 4);
        let n = 10;
        let robust = portfolio_robust(&inst).unwrap();
        let s = robust.size_report();
        assert_eq!(s.continuous_vars, 3 * n + 1);
        assert_eq!(s.binary_vars, n);
        assert_eq!(s.constraints, 6 * n + 4);
        assert!(!robust.is_linear());

        let duality = portfolio_duality(&inst).unwrap();
        let s = duality.size_report();
        assert_eq!(s.continuous_vars, 4 * n + 1);
        assert_eq!(s.binary_vars, n);
        assert_eq!(s.constraints, 8 * n + 6);
    }

    #[test]
    fn mccormick_bin_cont_projection_is_exact_product() {
        // For each binary value of x and several v targets, maximizing and
        // minimizing r subject to the three rows plus bounds pins r = x*v.
        for xv in [0.0, 1.0] {
            for vv in [0.0, 0.35, 0.7, 1.0] {
                let mut m = MilpModel::new("mc");
                let x = m.add_variable("x", 0.0, 1.0, VarKind::Binary, VarTag::Hedging).unwrap();
                let v = m.add_variable("v", 0.0, 1.0, VarKind::Continuous, VarTag::Dual).unwrap();
                let r = mccormick_bin_cont(&mut m, x, v, 1.0).unwrap();
                m.variables[x].lb = xv;
                m.variables[x].ub = xv;
                m.variables[v].lb = vv;
                m.variables[v].ub = vv;
                for sense in [ObjSense::Min, ObjSense::Max] {
                    m.objective = crate::model::Objective {
                        sense,
                        lin_terms: vec![(r, 1.0)],
                        quad_terms: vec![],
                        constant: 0.0,
                    };
                    let sol = solve_lp(&m).unwrap();
                    assert_eq!(sol.status, SolveStatus::Optimal);
                    assert!((sol.objective - xv * vv).abs() < 1e-8, "x={xv} v={vv}");
                }
            }
        }
    }

    #[test]
    fn mccormick_bin_bin_truth_table() {
        for xv in [0.0, 1.0] {
            for uv in [0.0, 1.0] {
                let mut m = MilpModel::new("mc");
                let x = m.add_variable("x", 0.0, 1.0, VarKind::Binary, VarTag::Hedging).unwrap();
                let u = m.add_variable("u", 0.0, 1.0, VarKind::Binary, VarTag::Uncertainty).unwrap();
                let r = mccormick_bin_bin(&mut m, x, u, true);
                m.variables[x].lb = xv;
                m.variables[x].ub = xv;
                m.variables[u].lb = uv;
                m.variables[u].ub = uv;
                for sense in [ObjSense::Min, ObjSense::Max] {
                    m.objective = crate::model::Objective {
                        sense,
                        lin_terms: vec![(r, 1.0)],
                        quad_terms: vec![],
                        constant: 0.0,
                    };
                    let sol = solve_lp(&m).unwrap();
                    assert!((sol.objective - xv * uv).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn bigm_complementarity_enforces_exclusivity() {
        // mu > 0 and g > 0 simultaneously must be infeasible for both z.
        let mut m = MilpModel::new("compl");
        let mu = m.add_variable("mu", 0.5, 0.5, VarKind::Continuous, VarTag::Dual).unwrap();
        let g = m.add_variable("g", 0.5, 0.5, VarKind::Continuous, VarTag::Uncertainty).unwrap();
        bigm_complementarity(&mut m, mu, &[(g, 1.0)], 0.0, 1.0, 1.0).unwrap();
        let r = solve_milp(&m, &MilpConfig::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);

        // mu = 0, g = M feasible; mu = M, g = 0 feasible.
        for (muv, gv) in [(0.0, 1.0), (1.0, 0.0)] {
            let mut m = MilpModel::new("compl");
            let mu = m.add_variable("mu", muv, muv, VarKind::Continuous, VarTag::Dual).unwrap();
            let g = m.add_variable("g", gv, gv, VarKind::Continuous, VarTag::Uncertainty).unwrap();
            bigm_complementarity(&mut m, mu, &[(g, 1.0)], 0.0, 1.0, 1.0).unwrap();
            let r = solve_milp(&m, &MilpConfig::default()).unwrap();
            assert_eq!(r.status, SolveStatus::Optimal, "mu={muv} g={gv}");
        }
    }

    #[test]
    fn sp_three_way_value_agreement_small() {
        let mut checked = 0;
        for seed in 0..40u64 {
            let inst = gen_sp_budgeted(5, seed);
            let Some(brute) = oracles::robust_sp_brute_force(&inst) else {
                continue;
            };
            let cfg = MilpConfig::default();
            let robust = solve_milp(&sp_robust(&inst).unwrap(), &cfg).unwrap();
            let duality = solve_milp(&sp_duality(&inst).unwrap(), &cfg).unwrap();
            let kkt = solve_milp(&sp_kkt(&inst).unwrap(), &cfg).unwrap();
            assert_eq!(robust.status, SolveStatus::Optimal);
            assert!((robust.objective - brute).abs() < 1e-5, "seed {seed}: robust {} brute {brute}", robust.objective);
            assert!((duality.objective - brute).abs() < 1e-5, "seed {seed}: duality {} brute {brute}", duality.objective);
            assert!((kkt.objective - brute).abs() < 1e-5, "seed {seed}: kkt {} brute {brute}", kkt.objective);
            assert!(mccormick_products_exact(&sp_robust(&inst).unwrap(), &robust.values, 1e-6));
            checked += 1;
            if checked >= 12 {
                break;
            }
        }
        assert!(checked >= 8, "too few connected instances");
    }

    #[test]
    fn kp_two_way_agreement_small() {
        let mut rng = Rng::new(17);
        for trial in 0..12 {
            let n = 6 + (trial % 4);
            let inst = gen_kp_budgeted(n, rng.next_u64());
            let brute = oracles::robust_kp_budgeted_brute_force(&inst);
            let cfg = MilpConfig::default();
            let robust = solve_milp(&kp_budgeted_robust(&inst).unwrap(), &cfg).unwrap();
            let duality =
                solve_milp(&kp_budgeted_duality(&inst, BudgetedWeightRow::Dual).unwrap(), &cfg).unwrap();
            let primal_variant =
                solve_milp(&kp_budgeted_duality(&inst, BudgetedWeightRow::Primal).unwrap(), &cfg).unwrap();
            assert!((robust.objective - brute).abs() < 1e-5, "robust {} vs brute {brute}", robust.objective);
            assert!((duality.objective - brute).abs() < 1e-5, "duality {} vs brute {brute}", duality.objective);
            assert!((primal_variant.objective - brute).abs() < 1e-5);

            let inst = gen_kp_contknap(n, 1 + (trial % 5), rng.next_u64());
            let brute = oracles::robust_kp_contknap_brute_force(&inst);
            let robust = solve_milp(&kp_knapsack_robust(&inst).unwrap(), &cfg).unwrap();
            let duality = solve_milp(&kp_knapsack_duality(&inst).unwrap(), &cfg).unwrap();
            assert!((robust.objective - brute).abs() < 1e-5, "ck robust {} vs brute {brute}", robust.objective);
            assert!((duality.objective - brute).abs() < 1e-5, "ck duality {} vs brute {brute}", duality.objective);
        }
    }

    #[test]
    fn kp_zero_deviation_reduces_to_nominal() {
        let mut inst = gen_kp_contknap(8, 2, 5);
        inst.a_hat = vec![0.0; 8];
        let cfg = MilpConfig::default();
        let robust = solve_milp(&kp_knapsack_robust(&inst).unwrap(), &cfg).unwrap();
        let nominal = solve_milp(&crate::problems::build_kp_nominal(&inst).unwrap(), &cfg).unwrap();
        assert!((robust.objective - nominal.objective).abs() < 1e-6);
    }

    #[test]
    fn discrete_sets_are_rejected() {
        let inst = crate::instgen::gen_sp_discrete(4, 0);
        assert!(matches!(
            build_robust_counterpart(&Instance::ShortestPath(inst.clone())),
            Err(ReformError::DiscreteSetUnsupported)
        ));
        assert!(matches!(
            build_bilevel_duality_sl(&Instance::ShortestPath(inst.clone())),
            Err(ReformError::DiscreteSetUnsupported)
        ));
        assert!(matches!(build_bilevel_kkt_sl(&inst), Err(ReformError::DiscreteSetUnsupported)));
        let kp = crate::instgen::gen_kp_discrete(6, 0);
        assert!(matches!(
            build_robust_counterpart(&Instance::Knapsack(kp)),
            Err(ReformError::DiscreteSetUnsupported)
        ));
    }

    #[test]
    fn kkt_slack_budget_allows_zero_pi() {
        // budget >= |A| and gamma = 0: u = 1 on all arcs is interior of the
        // budget row, so pi = 0 with lambda+ = d_hat y is stationary.
        let mut inst = gen_sp_budgeted(4, 1); // seed 1 is s-t connected
        inst.budget = inst.num_arcs() as u32 + 1;
        inst.gamma = vec![0.0; inst.num_arcs()];
        let model = sp_kkt(&inst).unwrap();
        let r = solve_milp(&model, &MilpConfig::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        let pi = model.var_by_name("pi").unwrap().id;
        assert!(r.values[pi].abs() < 1e-6);
    }

    #[test]
    fn ledger_values_appear_in_emitted_rows() {
        let inst = sp_instance(6, 4, 9);
        let ledger = BigMLedger::sp_budgeted(&inst);
        let model = sp_kkt(&inst).unwrap();
        // every compl row's big-M coefficient matches a ledger formula
        let m = inst.num_arcs();
        let mut mu_bounds: Vec<f64> = Vec::new();
        for c in model.constraints.iter().filter(|c| c.tag == ConTag::ComplBigM) {
            for &(v, coef) in &c.terms {
                if model.variables[v].tag == VarTag::ComplAux && coef < 0.0 {
                    mu_bounds.push(-coef);
                }
            }
        }
        assert_eq!(mu_bounds.len(), 1 + 2 * m);
        assert!((mu_bounds[0] - ledger.pi_bound).abs() < 1e-12);
        for a in 0..m {
            assert!((mu_bounds[1 + a] - ledger.lambda_bounds[a]).abs() < 1e-12);
            assert!((mu_bounds[1 + m + a] - ledger.lambda_minus_bounds[a]).abs() < 1e-12);
        }
    }
}
