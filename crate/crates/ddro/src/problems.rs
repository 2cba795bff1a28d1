//! Instance types, nominal model builders, and fixed-decision robust
//! evaluation for the three applications (shortest path, knapsack,
//! portfolio selection).

use crate::instgen::DiscreteUncertainty;
use crate::model::{ConTag, MilpModel, ObjSense, Sense, VarKind, VarTag};
use crate::uncertainty::{
    worst_case_budgeted_greedy, worst_case_discrete_dp, worst_case_knapsack_ratio_greedy,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ProblemError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("decision vector has wrong length (expected {expected}, got {got})")]
    DecisionLength { expected: usize, got: usize },
    #[error("decision violates nominal constraints: {0}")]
    InfeasibleDecision(String),
    #[error("instance has no discrete uncertainty payload")]
    MissingDiscreteData,
}

/// Shortest path instance on a directed graph with decision-dependent
/// cost uncertainty (budgeted by default, discrete payload optional).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpInstance {
    pub nodes: usize,
    pub arcs: Vec<(usize, usize)>,
    pub source: usize,
    pub target: usize,
    pub d_bar: Vec<f64>,
    pub d_hat: Vec<f64>,
    pub hedging_cost: Vec<f64>,
    pub gamma: Vec<f64>,
    pub budget: u32,
    pub discrete: Option<DiscreteUncertainty>,
}

impl SpInstance {
    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let m = self.arcs.len();
        let err = |s: String| Err(ProblemError::InvalidInstance(s));
        if self.source == self.target {
            return err("source equals target".into());
        }
        if self.source >= self.nodes || self.target >= self.nodes {
            return err("source/target out of range".into());
        }
        for &(u, v) in &self.arcs {
            if u == v {
                return err(format!("self-loop at node {u}"));
            }
            if u >= self.nodes || v >= self.nodes {
                return err(format!("arc ({u},{v}) out of range"));
            }
        }
        for (name, v) in [("d_bar", &self.d_bar), ("d_hat", &self.d_hat), ("hedging_cost", &self.hedging_cost), ("gamma", &self.gamma)] {
            if v.len() != m {
                return err(format!("{name} has length {} for {m} arcs", v.len()));
            }
            if v.iter().any(|x| *x < 0.0 || !x.is_finite()) {
                return err(format!("{name} has a negative or non-finite entry"));
            }
        }
        if self.gamma.iter().any(|g| *g > 1.0) {
            return err("gamma entry above 1".into());
        }
        if let Some(d) = &self.discrete {
            if d.f.len() != m || d.w.len() != m {
                return err("discrete payload dimension mismatch".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum KpUncertainty {
    Budgeted {
        hedging_cost: Vec<f64>,
        budget: u32,
        gamma: Vec<f64>,
    },
    Knapsack {
        f: Vec<f64>,
        b: f64,
        w: Vec<f64>,
        discrete: bool,
    },
}

/// Knapsack instance with weight uncertainty.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KpInstance {
    pub n: usize,
    pub values: Vec<f64>,
    pub a_bar: Vec<f64>,
    pub a_hat: Vec<f64>,
    pub capacity: f64,
    pub uncertainty: KpUncertainty,
}

impl KpInstance {
    pub fn validate(&self) -> Result<(), ProblemError> {
        let err = |s: String| Err(ProblemError::InvalidInstance(s));
        for (name, v) in [("values", &self.values), ("a_bar", &self.a_bar), ("a_hat", &self.a_hat)] {
            if v.len() != self.n {
                return err(format!("{name} has length {} for n = {}", v.len(), self.n));
            }
            if v.iter().any(|x| *x < 0.0 || !x.is_finite()) {
                return err(format!("{name} has a negative or non-finite entry"));
            }
        }
        if self.capacity < 0.0 {
            return err("negative capacity".into());
        }
        match &self.uncertainty {
            KpUncertainty::Budgeted { hedging_cost, gamma, .. } => {
                if hedging_cost.len() != self.n || gamma.len() != self.n {
                    return err("budgeted payload dimension mismatch".into());
                }
                if gamma.iter().any(|g| !(0.0..=1.0).contains(g)) {
                    return err("gamma outside [0,1]".into());
                }
            }
            KpUncertainty::Knapsack { f, w, .. } => {
                if f.len() != self.n || w.len() != self.n {
                    return err("knapsack payload dimension mismatch".into());
                }
                if f.iter().chain(w.iter()).any(|x| *x < 0.0) {
                    return err("negative knapsack payload entry".into());
                }
            }
        }
        Ok(())
    }
}

/// Cardinality-constrained portfolio instance with return uncertainty.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PortfolioInstance {
    pub n_assets: usize,
    pub mu_bar: Vec<f64>,
    pub mu_hat: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub v0: f64,
    pub k: usize,
    pub hedging_cost: Vec<f64>,
    pub budget: u32,
    pub gamma: Vec<f64>,
    pub discrete: Option<DiscreteUncertainty>,
}

impl PortfolioInstance {
    pub fn validate(&self) -> Result<(), ProblemError> {
        let n = self.n_assets;
        let err = |s: String| Err(ProblemError::InvalidInstance(s));
        if self.k < 1 || self.k > n {
            return err(format!("cardinality {} outside [1,{n}]", self.k));
        }
        if self.v0 <= 0.0 {
            return err("v0 must be positive".into());
        }
        if self.sigma.len() != n || self.sigma.iter().any(|r| r.len() != n) {
            return err("sigma is not NxN".into());
        }
        for i in 0..n {
            for j in 0..n {
                if (self.sigma[i][j] - self.sigma[j][i]).abs() > 1e-9 {
                    return err("sigma is not symmetric".into());
                }
            }
        }
        for (name, v) in [("mu_bar", &self.mu_bar), ("mu_hat", &self.mu_hat), ("hedging_cost", &self.hedging_cost), ("gamma", &self.gamma)] {
            if v.len() != n {
                return err(format!("{name} has wrong length"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "snake_case")]
pub enum Instance {
    ShortestPath(SpInstance),
    Knapsack(KpInstance),
    Portfolio(PortfolioInstance),
}

impl Instance {
    pub fn validate(&self) -> Result<(), ProblemError> {
        match self {
            Instance::ShortestPath(i) => i.validate(),
            Instance::Knapsack(i) => i.validate(),
            Instance::Portfolio(i) => i.validate(),
        }
    }
}

/// Flow-conservation rows: in - out = 1 at the target, -1 at the source,
/// 0 elsewhere. `y` maps arcs to variable ids.
pub(crate) fn add_flow_rows(model: &mut MilpModel, inst: &SpInstance, y: &[usize]) {
    for v in 0..inst.nodes {
        let mut terms = Vec::new();
        for (a, &(tail, head)) in inst.arcs.iter().enumerate() {
            if head == v {
                terms.push((y[a], 1.0));
            } else if tail == v {
                terms.push((y[a], -1.0));
            }
        }
        let rhs = if v == inst.target {
            1.0
        } else if v == inst.source {
            -1.0
        } else {
            0.0
        };
        model
            .add_linear_constraint(terms, Sense::Eq, rhs, ConTag::Structural)
            .expect("flow row");
    }
}

/// Nominal shortest path: binary arc choices, flow conservation, minimal
/// nominal cost.
pub fn build_sp_nominal(inst: &SpInstance) -> Result<MilpModel, ProblemError> {
    inst.validate()?;
    let mut m = MilpModel::new("sp_nominal");
    let y: Vec<usize> = (0..inst.num_arcs())
        .map(|a| {
            m.add_variable(format!("y_{a}"), 0.0, 1.0, VarKind::Binary, VarTag::Decision)
                .expect("fresh var")
        })
        .collect();
    add_flow_rows(&mut m, inst, &y);
    m.objective.sense = ObjSense::Min;
    m.objective.lin_terms = y.iter().zip(&inst.d_bar).map(|(&v, &d)| (v, d)).collect();
    Ok(m)
}

/// Nominal knapsack: max value under the nominal weight row.
pub fn build_kp_nominal(inst: &KpInstance) -> Result<MilpModel, ProblemError> {
    inst.validate()?;
    let mut m = MilpModel::new("kp_nominal");
    let x: Vec<usize> = (0..inst.n)
        .map(|i| {
            m.add_variable(format!("x_{i}"), 0.0, 1.0, VarKind::Binary, VarTag::Decision)
                .expect("fresh var")
        })
        .collect();
    m.add_linear_constraint(
        x.iter().zip(&inst.a_bar).map(|(&v, &w)| (v, w)).collect(),
        Sense::Le,
        inst.capacity,
        ConTag::Structural,
    )
    .expect("weight row");
    m.objective.sense = ObjSense::Max;
    m.objective.lin_terms = x.iter().zip(&inst.values).map(|(&v, &c)| (v, c)).collect();
    Ok(m)
}

/// Nominal cardinality-constrained portfolio: max return, variance cap,
/// full investment, at most k supported assets.
pub fn build_portfolio_nominal(inst: &PortfolioInstance) -> Result<MilpModel, ProblemError> {
    inst.validate()?;
    let n = inst.n_assets;
    let mut m = MilpModel::new("portfolio_nominal");
    let y: Vec<usize> = (0..n)
        .map(|i| {
            m.add_counted_variable(format!("y_{i}"), 0.0, 1.0, VarKind::Continuous, VarTag::Decision)
                .expect("fresh var")
        })
        .collect();
    let s: Vec<usize> = (0..n)
        .map(|i| {
            m.add_variable(format!("s_{i}"), 0.0, 1.0, VarKind::Binary, VarTag::Decision)
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
    m.add_quad_constraint(quad, vec![], Sense::Le, inst.v0, ConTag::Structural)
        .expect("variance row");
    m.add_linear_constraint(y.iter().map(|&v| (v, 1.0)).collect(), Sense::Eq, 1.0, ConTag::Structural)
        .expect("budget row");
    m.add_linear_constraint(s.iter().map(|&v| (v, 1.0)).collect(), Sense::Le, inst.k as f64, ConTag::Structural)
        .expect("cardinality row");
    for i in 0..n {
        m.add_linear_constraint(vec![(y[i], 1.0), (s[i], -1.0)], Sense::Le, 0.0, ConTag::Structural)
            .expect("link row");
    }
    m.objective.sense = ObjSense::Max;
    m.objective.lin_terms = y.iter().zip(&inst.mu_bar).map(|(&v, &mu)| (v, mu)).collect();
    Ok(m)
}

/// Outcome of evaluating fixed decisions against the exact worst case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustEvaluation {
    /// Full robust objective (shortest path and portfolio include the
    /// worst-case term; knapsack is the plain value objective).
    pub objective: f64,
    /// Inner worst-case value (cost deviation, return deviation, or the
    /// worst-case total weight for knapsack).
    pub worst_case: f64,
    /// Nominal feasibility, including the worst-case weight row for
    /// knapsack variants.
    pub feasible: bool,
}

fn check_flow(inst: &SpInstance, y: &[f64]) -> bool {
    for v in 0..inst.nodes {
        let mut net = 0.0;
        for (a, &(tail, head)) in inst.arcs.iter().enumerate() {
            if head == v {
                net += y[a];
            }
            if tail == v {
                net -= y[a];
            }
        }
        let want = if v == inst.target {
            1.0
        } else if v == inst.source {
            -1.0
        } else {
            0.0
        };
        if (net - want).abs() > 1e-6 {
            return false;
        }
    }
    true
}

/// Evaluates fixed decisions by calling the worst-case oracles.
///
/// Decision layout: shortest path takes `(x, y)` (hedging, arcs), knapsack
/// budgeted takes `(x, y)` (items, hedging), continuous/discrete knapsack
/// takes `x` with `y` empty, portfolio takes `(x, y)` = (hedging,
/// allocation) plus the cardinality pattern implied by `y > 0`.
pub fn evaluate_robust_objective(
    inst: &Instance,
    x: &[f64],
    y: &[f64],
) -> Result<RobustEvaluation, ProblemError> {
    inst.validate()?;
    match inst {
        Instance::ShortestPath(sp) => {
            let m = sp.num_arcs();
            if x.len() != m || y.len() != m {
                return Err(ProblemError::DecisionLength { expected: m, got: x.len().max(y.len()) });
            }
            if !check_flow(sp, y) {
                return Err(ProblemError::InfeasibleDecision("flow conservation".into()));
            }
            let coeffs: Vec<f64> = sp.d_hat.iter().zip(y).map(|(d, yi)| d * yi).collect();
            let worst = match &sp.discrete {
                None => {
                    let caps: Vec<f64> = sp.gamma.iter().zip(x).map(|(g, xi)| 1.0 - g * xi).collect();
                    worst_case_budgeted_greedy(sp.budget as f64, &caps, &coeffs)
                }
                Some(d) => {
                    let cap = d.b - d.w.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
                    worst_case_discrete_dp(&d.f, cap, &coeffs).0
                }
            };
            let base: f64 = sp
                .hedging_cost
                .iter()
                .zip(x)
                .map(|(c, xi)| c * xi)
                .chain(sp.d_bar.iter().zip(y).map(|(d, yi)| d * yi))
                .sum();
            Ok(RobustEvaluation { objective: base + worst, worst_case: worst, feasible: true })
        }
        Instance::Knapsack(kp) => {
            if x.len() != kp.n {
                return Err(ProblemError::DecisionLength { expected: kp.n, got: x.len() });
            }
            let nominal_weight: f64 = kp.a_bar.iter().zip(x).map(|(a, xi)| a * xi).sum();
            let coeffs: Vec<f64> = kp.a_hat.iter().zip(x).map(|(a, xi)| a * xi).collect();
            match &kp.uncertainty {
                KpUncertainty::Budgeted { hedging_cost, budget, gamma } => {
                    if y.len() != kp.n {
                        return Err(ProblemError::DecisionLength { expected: kp.n, got: y.len() });
                    }
                    let caps: Vec<f64> = gamma.iter().zip(y).map(|(g, yi)| 1.0 - g * yi).collect();
                    let dev = worst_case_budgeted_greedy(*budget as f64, &caps, &coeffs);
                    let worst_weight = nominal_weight + dev;
                    let objective: f64 = kp.values.iter().zip(x).map(|(c, xi)| c * xi).sum::<f64>()
                        - hedging_cost.iter().zip(y).map(|(h, yi)| h * yi).sum::<f64>();
                    Ok(RobustEvaluation {
                        objective,
                        worst_case: worst_weight,
                        feasible: worst_weight <= kp.capacity + 1e-9,
                    })
                }
                KpUncertainty::Knapsack { f, b, w, discrete } => {
                    let cap = b - w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
                    let dev = if *discrete {
                        worst_case_discrete_dp(f, cap, &coeffs).0
                    } else {
                        worst_case_knapsack_ratio_greedy(f, cap, &coeffs)
                    };
                    let worst_weight = nominal_weight + dev;
                    let objective: f64 = kp.values.iter().zip(x).map(|(c, xi)| c * xi).sum();
                    Ok(RobustEvaluation {
                        objective,
                        worst_case: worst_weight,
                        feasible: cap >= -1e-9 && worst_weight <= kp.capacity + 1e-9,
                    })
                }
            }
        }
        Instance::Portfolio(pf) => {
            let n = pf.n_assets;
            if x.len() != n || y.len() != n {
                return Err(ProblemError::DecisionLength { expected: n, got: x.len().max(y.len()) });
            }
            let total: f64 = y.iter().sum();
            if (total - 1.0).abs() > 1e-6 {
                return Err(ProblemError::InfeasibleDecision("weights must sum to one".into()));
            }
            let support = y.iter().filter(|v| **v > 1e-9).count();
            if support > pf.k {
                return Err(ProblemError::InfeasibleDecision(format!(
                    "support {support} exceeds cardinality {}",
                    pf.k
                )));
            }
            let mut variance = 0.0;
            for i in 0..n {
                for j in 0..n {
                    variance += y[i] * pf.sigma[i][j] * y[j];
                }
            }
            if variance > pf.v0 + 1e-6 {
                return Err(ProblemError::InfeasibleDecision("variance cap violated".into()));
            }
            let coeffs: Vec<f64> = pf.mu_hat.iter().zip(y).map(|(m, yi)| m * yi).collect();
            let worst = match &pf.discrete {
                None => {
                    let caps: Vec<f64> = pf.gamma.iter().zip(x).map(|(g, xi)| 1.0 - g * xi).collect();
                    worst_case_budgeted_greedy(pf.budget as f64, &caps, &coeffs)
                }
                Some(d) => {
                    let cap = d.b - d.w.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
                    worst_case_discrete_dp(&d.f, cap, &coeffs).0
                }
            };
            let objective: f64 = pf.mu_bar.iter().zip(y).map(|(m, yi)| m * yi).sum::<f64>()
                - pf.hedging_cost.iter().zip(x).map(|(c, xi)| c * xi).sum::<f64>()
                - worst;
            Ok(RobustEvaluation { objective, worst_case: worst, feasible: true })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instgen::{gen_kp_budgeted, gen_sp_budgeted, Rng};
    use crate::oracles::dijkstra;
    use crate::solver::{solve_milp, MilpConfig, SolveStatus};

    fn tiny_sp(arcs: Vec<(usize, usize)>, d: Vec<f64>, nodes: usize) -> SpInstance {
        let m = arcs.len();
        SpInstance {
            nodes,
            arcs,
            source: 0,
            target: nodes - 1,
            d_bar: d.clone(),
            d_hat: d,
            hedging_cost: vec![1.0; m],
            gamma: vec![0.2; m],
            budget: 2,
            discrete: None,
        }
    }

    #[test]
    fn single_arc_path() {
        let inst = tiny_sp(vec![(0, 1)], vec![3.0], 2);
        let model = build_sp_nominal(&inst).unwrap();
        let r = solve_milp(&model, &MilpConfig::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 3.0).abs() < 1e-9);
        assert!((r.values[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn triangle_prefers_two_hops() {
        let inst = tiny_sp(vec![(0, 1), (1, 2), (0, 2)], vec![1.0, 1.0, 3.0], 3);
        let model = build_sp_nominal(&inst).unwrap();
        let r = solve_milp(&model, &MilpConfig::default()).unwrap();
        assert!((r.objective - 2.0).abs() < 1e-9);
    }

    #[test]
    fn disconnected_is_infeasible() {
        let inst = tiny_sp(vec![(1, 0)], vec![1.0], 2);
        let model = build_sp_nominal(&inst).unwrap();
        let r = solve_milp(&model, &MilpConfig::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
    }

    #[test]
    fn nominal_sp_matches_dijkstra_randomized() {
        for seed in 0..100u64 {
            let inst = gen_sp_budgeted(7, seed);
            let model = build_sp_nominal(&inst).unwrap();
            let r = solve_milp(&model, &MilpConfig::default()).unwrap();
            match dijkstra(inst.nodes, &inst.arcs, &inst.d_bar, inst.source, inst.target) {
                Some(dist) => {
                    assert_eq!(r.status, SolveStatus::Optimal, "seed {seed}");
                    assert!((r.objective - dist).abs() < 1e-6, "seed {seed}: milp {} dijkstra {dist}", r.objective);
                }
                None => assert_eq!(r.status, SolveStatus::Infeasible, "seed {seed}"),
            }
        }
    }

    #[test]
    fn nominal_kp_examples_and_dp() {
        let inst = KpInstance {
            n: 2,
            values: vec![10.0, 6.0],
            a_bar: vec![5.0, 3.0],
            a_hat: vec![0.5, 0.3],
            capacity: 4.0,
            uncertainty: KpUncertainty::Budgeted {
                hedging_cost: vec![1.0, 1.0],
                budget: 1,
                gamma: vec![0.2, 0.2],
            },
        };
        let model = build_kp_nominal(&inst).unwrap();
        let r = solve_milp(&model, &MilpConfig::default()).unwrap();
        assert!((r.objective - 6.0).abs() < 1e-9);

        // zero capacity -> nothing fits
        let mut zero = inst.clone();
        zero.capacity = 0.0;
        let r = solve_milp(&build_kp_nominal(&zero).unwrap(), &MilpConfig::default()).unwrap();
        assert!(r.objective.abs() < 1e-9);

        for seed in 0..20u64 {
            let inst = gen_kp_budgeted(18, seed);
            let model = build_kp_nominal(&inst).unwrap();
            let r = solve_milp(&model, &MilpConfig::default()).unwrap();
            let dp = crate::oracles::knapsack_best_value(&inst.a_bar, inst.capacity, &inst.values);
            assert!((r.objective - dp).abs() < 1e-6, "seed {seed}");
        }
    }

    #[test]
    fn portfolio_nominal_tiny_cases() {
        let inst = PortfolioInstance {
            n_assets: 2,
            mu_bar: vec![1.0, 2.0],
            mu_hat: vec![0.5, 0.5],
            sigma: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            v0: 1.0,
            k: 1,
            hedging_cost: vec![0.1, 0.1],
            budget: 1,
            gamma: vec![0.2, 0.2],
            discrete: None,
        };
        let model = build_portfolio_nominal(&inst).unwrap();
        // solver rejects the quadratic row; evaluate by hand instead
        assert!(!model.is_linear());
        assert_eq!(model.size_report().binary_vars, 2);
        let eval = evaluate_robust_objective(
            &Instance::Portfolio(inst.clone()),
            &[0.0, 0.0],
            &[0.0, 1.0],
        )
        .unwrap();
        // budget 1: full deviation on the chosen asset
        assert!((eval.objective - (2.0 - 0.5)).abs() < 1e-9);
    }

    #[test]
    fn evaluate_sp_budgeted_matches_hand_value() {
        // path of 3 arcs, budget 2, gamma 0: worst case = two largest d_hat
        let inst = SpInstance {
            nodes: 4,
            arcs: vec![(0, 1), (1, 2), (2, 3)],
            source: 0,
            target: 3,
            d_bar: vec![1.0, 2.0, 3.0],
            d_hat: vec![0.5, 2.5, 1.5],
            hedging_cost: vec![1.0; 3],
            gamma: vec![0.0; 3],
            budget: 2,
            discrete: None,
        };
        let eval = evaluate_robust_objective(
            &Instance::ShortestPath(inst),
            &[0.0, 0.0, 0.0],
            &[1.0, 1.0, 1.0],
        )
        .unwrap();
        assert!((eval.worst_case - 4.0).abs() < 1e-12);
        assert!((eval.objective - (6.0 + 4.0)).abs() < 1e-12);
    }

    #[test]
    fn evaluate_rejects_broken_flow() {
        let inst = tiny_sp(vec![(0, 1)], vec![1.0], 2);
        let err = evaluate_robust_objective(&Instance::ShortestPath(inst), &[0.0], &[0.0]);
        assert!(matches!(err, Err(ProblemError::InfeasibleDecision(_))));
    }

    #[test]
    fn gamma_zero_budget_zero_reduces_to_nominal() {
        let mut rng = Rng::new(3);
        for _ in 0..20 {
            let n = rng.uniform_int(3, 8) as usize;
            let mut inst = gen_kp_budgeted(n, rng.next_u64());
            if let KpUncertainty::Budgeted { budget, .. } = &mut inst.uncertainty {
                *budget = 0;
            }
            let x: Vec<f64> = (0..n).map(|_| rng.uniform_int(0, 1) as f64).collect();
            let y = vec![0.0; n];
            let eval = evaluate_robust_objective(&Instance::Knapsack(inst.clone()), &x, &y).unwrap();
            let nominal: f64 = inst.a_bar.iter().zip(&x).map(|(a, xi)| a * xi).sum();
            assert!((eval.worst_case - nominal).abs() < 1e-9);
        }
    }
}
