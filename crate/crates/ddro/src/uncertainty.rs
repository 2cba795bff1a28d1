//! Decision-dependent uncertainty set descriptors, membership tests, and
//! two independent worst-case oracles used to cross-validate every
//! reformulation: an LP route (inner maximization and its dual, solved by
//! the simplex core) and a combinatorial route (greedy filling for the
//! budgeted polytope, ratio greedy for the continuous knapsack, dynamic
//! programming for the discrete knapsack).

use crate::model::{ConTag, MilpModel, ObjSense, Sense, VarKind, VarTag};
use serde::{Deserialize, Serialize};

pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum UncertaintyError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operation requires a continuous uncertainty set")]
    DiscreteSetUnsupported,
}

/// Budgeted set: `{ u : sum u <= budget, 0 <= u_i <= 1 - gamma_i * x_i }`
/// where `x` is the hedging decision the set depends on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudgetedSet {
    pub dim: usize,
    pub budget: u32,
    pub gamma: Vec<f64>,
}

impl BudgetedSet {
    pub fn new(budget: u32, gamma: Vec<f64>) -> Self {
        BudgetedSet { dim: gamma.len(), budget, gamma }
    }

    /// Per-coordinate caps `1 - gamma_i * x_i` at a fixed hedging decision.
    pub fn caps(&self, x: &[f64]) -> Result<Vec<f64>, UncertaintyError> {
        if x.len() != self.dim {
            return Err(UncertaintyError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(self.gamma.iter().zip(x).map(|(g, xi)| 1.0 - g * xi).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnapsackMode {
    Continuous,
    Discrete,
}

/// Knapsack set: `{ u : f'u <= b - w'x }` with box `[0,1]` (continuous
/// mode) or binary `u` (discrete mode).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnapsackSet {
    pub dim: usize,
    pub f: Vec<f64>,
    pub b: f64,
    pub w: Vec<f64>,
    pub mode: KnapsackMode,
}

impl KnapsackSet {
    pub fn new(f: Vec<f64>, b: f64, w: Vec<f64>, mode: KnapsackMode) -> Self {
        KnapsackSet { dim: f.len(), f, b, w, mode }
    }

    /// Decision-dependent budget `b(x) = b - w'x`.
    pub fn budget_rhs(&self, x: &[f64]) -> Result<f64, UncertaintyError> {
        if x.len() != self.dim {
            return Err(UncertaintyError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(self.b - self.w.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum UncertaintySet {
    Budgeted(BudgetedSet),
    Knapsack(KnapsackSet),
}

impl UncertaintySet {
    pub fn dim(&self) -> usize {
        match self {
            UncertaintySet::Budgeted(s) => s.dim,
            UncertaintySet::Knapsack(s) => s.dim,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, UncertaintySet::Knapsack(s) if s.mode == KnapsackMode::Discrete)
    }

    /// True iff `u` lies in the set at the fixed decision `x`.
    pub fn membership(&self, x: &[f64], u: &[f64]) -> Result<bool, UncertaintyError> {
        if u.len() != self.dim() {
            return Err(UncertaintyError::DimensionMismatch { expected: self.dim(), got: u.len() });
        }
        let t = MEMBERSHIP_TOL;
        match self {
            UncertaintySet::Budgeted(s) => {
                let caps = s.caps(x)?;
                let total: f64 = u.iter().sum();
                Ok(total <= s.budget as f64 + t
                    && u.iter().zip(&caps).all(|(ui, c)| *ui >= -t && *ui <= c + t))
            }
            UncertaintySet::Knapsack(s) => {
                let rhs = s.budget_rhs(x)?;
                let weight: f64 = s.f.iter().zip(u).map(|(f, ui)| f * ui).sum();
                let boxed = match s.mode {
                    KnapsackMode::Continuous => u.iter().all(|ui| *ui >= -t && *ui <= 1.0 + t),
                    KnapsackMode::Discrete => u.iter().all(|ui| (ui - ui.round()).abs() <= t && (*ui - 0.5).abs() <= 0.5 + t),
                };
                Ok(boxed && weight <= rhs + t)
            }
        }
    }
}

/// Builds the inner worst-case maximization as an LP over `u` at a fixed
/// decision `x`: `max coeffs'u` over the (continuous) set.
pub fn worst_case_lp(
    set: &UncertaintySet,
    x: &[f64],
    coeffs: &[f64],
) -> Result<MilpModel, UncertaintyError> {
    if coeffs.len() != set.dim() {
        return Err(UncertaintyError::DimensionMismatch { expected: set.dim(), got: coeffs.len() });
    }
    if set.is_discrete() {
        return Err(UncertaintyError::DiscreteSetUnsupported);
    }
    let mut m = MilpModel::new("worst_case_primal");
    m.objective.sense = ObjSense::Max;
    match set {
        UncertaintySet::Budgeted(s) => {
            let caps = s.caps(x)?;
            let mut budget_terms = Vec::with_capacity(s.dim);
            for (i, cap) in caps.iter().enumerate() {
                let u = m
                    .add_variable(format!("u_{i}"), 0.0, cap.max(0.0), VarKind::Continuous, VarTag::Uncertainty)
                    .expect("fresh var");
                budget_terms.push((u, 1.0));
                m.objective.lin_terms.push((u, coeffs[i]));
            }
            m.add_linear_constraint(budget_terms, Sense::Le, s.budget as f64, ConTag::UncertaintySet)
                .expect("budget row");
        }
        UncertaintySet::Knapsack(s) => {
            let rhs = s.budget_rhs(x)?;
            let mut row = Vec::with_capacity(s.dim);
            for i in 0..s.dim {
                let u = m
                    .add_variable(format!("u_{i}"), 0.0, 1.0, VarKind::Continuous, VarTag::Uncertainty)
                    .expect("fresh var");
                row.push((u, s.f[i]));
                m.objective.lin_terms.push((u, coeffs[i]));
            }
            m.add_linear_constraint(row, Sense::Le, rhs, ConTag::UncertaintySet).expect("knapsack row");
        }
    }
    Ok(m)
}

/// Builds the LP dual of [`worst_case_lp`] at the same fixed decision.
pub fn worst_case_dual_lp(
    set: &UncertaintySet,
    x: &[f64],
    coeffs: &[f64],
) -> Result<MilpModel, UncertaintyError> {
    if coeffs.len() != set.dim() {
        return Err(UncertaintyError::DimensionMismatch { expected: set.dim(), got: coeffs.len() });
    }
    if set.is_discrete() {
        return Err(UncertaintyError::DiscreteSetUnsupported);
    }
    let mut m = MilpModel::new("worst_case_dual");
    m.objective.sense = ObjSense::Min;
    match set {
        UncertaintySet::Budgeted(s) => {
            // min pi*budget + sum lambda_i * cap_i  s.t. pi + lambda_i >= coeff_i
            let caps = s.caps(x)?;
            let pi = m
                .add_variable("pi", 0.0, f64::INFINITY, VarKind::Continuous, VarTag::Dual)
                .expect("fresh var");
            m.objective.lin_terms.push((pi, s.budget as f64));
            for (i, cap) in caps.iter().enumerate() {
                let l = m
                    .add_variable(format!("lambda_{i}"), 0.0, f64::INFINITY, VarKind::Continuous, VarTag::Dual)
                    .expect("fresh var");
                m.objective.lin_terms.push((l, *cap));
                m.add_linear_constraint(vec![(pi, 1.0), (l, 1.0)], Sense::Ge, coeffs[i], ConTag::DualFeasibility)
                    .expect("dual row");
            }
        }
        UncertaintySet::Knapsack(s) => {
            // min pi*b(x) + sum lambda_i  s.t. pi*f_i + lambda_i >= coeff_i
            let rhs = s.budget_rhs(x)?;
            let pi = m
                .add_variable("pi", 0.0, f64::INFINITY, VarKind::Continuous, VarTag::Dual)
                .expect("fresh var");
            m.objective.lin_terms.push((pi, rhs));
            for i in 0..s.dim {
                let l = m
                    .add_variable(format!("lambda_{i}"), 0.0, f64::INFINITY, VarKind::Continuous, VarTag::Dual)
                    .expect("fresh var");
                m.objective.lin_terms.push((l, 1.0));
                m.add_linear_constraint(
                    vec![(pi, s.f[i]), (l, 1.0)],
                    Sense::Ge,
                    coeffs[i],
                    ConTag::DualFeasibility,
                )
                .expect("dual row");
            }
        }
    }
    Ok(m)
}

/// Exact worst case over the budgeted polytope by filling caps in
/// decreasing coefficient order until the budget is exhausted. Valid for
/// nonnegative coefficients; accepts a real budget for internal reuse.
pub fn worst_case_budgeted_greedy(budget: f64, caps: &[f64], coeffs: &[f64]) -> f64 {
    debug_assert_eq!(caps.len(), coeffs.len());
    let mut order: Vec<usize> = (0..coeffs.len()).collect();
    order.sort_by(|&a, &b| coeffs[b].partial_cmp(&coeffs[a]).unwrap().then(a.cmp(&b)));
    let mut remaining = budget.max(0.0);
    let mut value = 0.0;
    for i in order {
        if remaining <= 0.0 || coeffs[i] <= 0.0 {
            break;
        }
        let take = caps[i].max(0.0).min(remaining);
        value += coeffs[i] * take;
        remaining -= take;
    }
    value
}

/// Exact worst case over the continuous knapsack set `{0<=u<=1, f'u<=cap}`
/// by the classic ratio greedy. Valid for nonnegative coefficients and
/// weights. A negative capacity makes the set empty; the caller must treat
/// that case separately (here zero-weight items are still summed).
pub fn worst_case_knapsack_ratio_greedy(f: &[f64], cap: f64, coeffs: &[f64]) -> f64 {
    debug_assert_eq!(f.len(), coeffs.len());
    let mut value = 0.0;
    let mut remaining = cap;
    // Zero-weight items with positive coefficient are free.
    let mut order: Vec<usize> = (0..f.len()).filter(|&i| coeffs[i] > 0.0).collect();
    for &i in &order {
        if f[i] == 0.0 {
            value += coeffs[i];
        }
    }
    order.retain(|&i| f[i] > 0.0);
    order.sort_by(|&a, &b| {
        let ra = coeffs[a] / f[a];
        let rb = coeffs[b] / f[b];
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for i in order {
        if remaining <= 0.0 {
            break;
        }
        let take = (remaining / f[i]).min(1.0);
        value += coeffs[i] * take;
        remaining -= f[i] * take;
    }
    value
}

/// 0/1 knapsack worst case. Uses dynamic programming over the integer
/// capacity when all weights are integral (and small enough), otherwise an
/// exact depth-first branch and bound with the fractional greedy bound.
/// Returns the optimal value and one maximizer (negative capacity gives
/// value 0 and u = 0).
pub fn worst_case_discrete_dp(f: &[f64], cap: f64, coeffs: &[f64]) -> (f64, Vec<u8>) {
    debug_assert_eq!(f.len(), coeffs.len());
    let n = f.len();
    if cap < 0.0 {
        return (0.0, vec![0; n]);
    }
    let integral = f.iter().all(|w| *w >= 0.0 && w.fract() == 0.0);
    let cap_floor = cap.floor();
    if integral && n <= 64 && cap_floor <= 1e6 {
        knapsack_dp(f, cap_floor as usize, coeffs)
    } else {
        knapsack_branch_bound(f, cap, coeffs)
    }
}

fn knapsack_dp(f: &[f64], cap: usize, coeffs: &[f64]) -> (f64, Vec<u8>) {
    let n = f.len();
    // dp[i][w]: best value with items 0..i and weight budget w.
    let mut dp = vec![vec![0.0f64; cap + 1]; n + 1];
    for i in 0..n {
        let wi = f[i] as usize;
        let vi = coeffs[i].max(0.0); // negative values never help a maximizer
        for w in 0..=cap {
            let skip = dp[i][w];
            let take = if wi <= w { dp[i][w - wi] + vi } else { f64::NEG_INFINITY };
            dp[i + 1][w] = skip.max(take);
        }
    }
    let mut u = vec![0u8; n];
    let mut w = cap;
    for i in (0..n).rev() {
        if dp[i + 1][w] > dp[i][w] {
            u[i] = 1;
            w -= f[i] as usize;
        }
    }
    (dp[n][cap], u)
}

fn knapsack_branch_bound(f: &[f64], cap: f64, coeffs: &[f64]) -> (f64, Vec<u8>) {
    let n = f.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let ra = if f[a] > 0.0 { coeffs[a] / f[a] } else { f64::INFINITY };
        let rb = if f[b] > 0.0 { coeffs[b] / f[b] } else { f64::INFINITY };
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut best = 0.0f64;
    let mut best_u = vec![0u8; n];
    let mut cur = vec![0u8; n];

    fn bound(order: &[usize], start: usize, f: &[f64], coeffs: &[f64], cap: f64) -> f64 {
        let mut rem = cap;
        let mut v = 0.0;
        for &i in &order[start..] {
            if coeffs[i] <= 0.0 {
                continue;
            }
            if f[i] <= rem {
                v += coeffs[i];
                rem -= f[i];
            } else if f[i] > 0.0 {
                v += coeffs[i] * rem / f[i];
                break;
            }
        }
        v
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        order: &[usize],
        pos: usize,
        value: f64,
        rem: f64,
        f: &[f64],
        coeffs: &[f64],
        cur: &mut Vec<u8>,
        best: &mut f64,
        best_u: &mut Vec<u8>,
    ) {
        if value > *best {
            *best = value;
            best_u.copy_from_slice(cur);
        }
        if pos == order.len() {
            return;
        }
        if value + bound(order, pos, f, coeffs, rem) <= *best {
            return;
        }
        let i = order[pos];
        if f[i] <= rem && coeffs[i] > 0.0 {
            cur[i] = 1;
            dfs(order, pos + 1, value + coeffs[i], rem - f[i], f, coeffs, cur, best, best_u);
            cur[i] = 0;
        }
        dfs(order, pos + 1, value, rem, f, coeffs, cur, best, best_u);
    }
    dfs(&order, 0, 0.0, cap, f, coeffs, &mut cur, &mut best, &mut best_u);
    (best, best_u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::solve_lp;

    #[test]
    fn budget_rhs_examples() {
        let s = KnapsackSet::new(vec![1.0, 1.0], 10.0, vec![1.0, 2.0], KnapsackMode::Continuous);
        assert_eq!(s.budget_rhs(&[0.0, 0.0]).unwrap(), 10.0);
        assert_eq!(s.budget_rhs(&[1.0, 1.0]).unwrap(), 7.0);
        assert!(matches!(
            s.budget_rhs(&[1.0]),
            Err(UncertaintyError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn membership_examples() {
        let b = UncertaintySet::Budgeted(BudgetedSet::new(2, vec![0.2, 0.2, 0.2]));
        assert!(b.membership(&[0.0, 0.0, 0.0], &[1.0, 1.0, 0.0]).unwrap());
        assert!(!b.membership(&[1.0, 0.0, 0.0], &[0.9, 0.0, 0.0]).unwrap());

        let k = UncertaintySet::Knapsack(KnapsackSet::new(
            vec![5.0, 3.0],
            4.0,
            vec![0.0, 0.0],
            KnapsackMode::Discrete,
        ));
        assert!(!k.membership(&[0.0, 0.0], &[1.0, 0.0]).unwrap());
        assert!(k.membership(&[0.0, 0.0], &[0.0, 1.0]).unwrap());
    }

    #[test]
    fn greedy_oracle_examples() {
        assert_eq!(worst_case_budgeted_greedy(2.0, &[1.0, 1.0, 1.0], &[5.0, 4.0, 1.0]), 9.0);
        let v = worst_case_budgeted_greedy(1.0, &[0.8, 1.0], &[10.0, 1.0]);
        assert!((v - 8.2).abs() < 1e-12);
        assert_eq!(worst_case_budgeted_greedy(3.0, &[1.0, 1.0], &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn dp_oracle_examples() {
        let (v, u) = worst_case_discrete_dp(&[5.0, 3.0], 4.0, &[10.0, 6.0]);
        assert_eq!(v, 6.0);
        assert_eq!(u, vec![0, 1]);
        let (v, u) = worst_case_discrete_dp(&[5.0, 3.0], 2.0, &[10.0, 6.0]);
        assert_eq!(v, 0.0);
        assert_eq!(u, vec![0, 0]);
        let (v, u) = worst_case_discrete_dp(&[1.0, 1.0, 1.0], 3.0, &[1.0, 2.0, 3.0]);
        assert_eq!(v, 6.0);
        assert_eq!(u, vec![1, 1, 1]);
        let (v, u) = worst_case_discrete_dp(&[1.0], -0.5, &[7.0]);
        assert_eq!(v, 0.0);
        assert_eq!(u, vec![0]);
    }

    #[test]
    fn dp_against_full_enumeration() {
        let mut rng = crate::instgen::Rng::new(11);
        for _ in 0..200 {
            let n = rng.uniform_int(1, 10) as usize;
            let f: Vec<f64> = (0..n).map(|_| rng.uniform_int(0, 20) as f64).collect();
            let coeffs: Vec<f64> = (0..n).map(|_| rng.uniform_real(0.0, 10.0)).collect();
            let cap = rng.uniform_real(0.0, 40.0);
            let (v, u) = worst_case_discrete_dp(&f, cap, &coeffs);
            // check maximizer is feasible and matches its value
            let w: f64 = f.iter().zip(&u).map(|(w, ui)| w * *ui as f64).sum();
            assert!(w <= cap + 1e-9);
            let uv: f64 = coeffs.iter().zip(&u).map(|(c, ui)| c * *ui as f64).sum();
            assert!((uv - v).abs() < 1e-9);
            // full enumeration
            let mut best = 0.0f64;
            for mask in 0u32..(1 << n) {
                let mut wt = 0.0;
                let mut val = 0.0;
                for i in 0..n {
                    if mask >> i & 1 == 1 {
                        wt += f[i];
                        val += coeffs[i];
                    }
                }
                if wt <= cap && val > best {
                    best = val;
                }
            }
            assert!((v - best).abs() < 1e-9, "dp {v} vs enum {best}");
        }
    }

    #[test]
    fn lp_matches_greedy_on_examples() {
        let set = UncertaintySet::Budgeted(BudgetedSet::new(1, vec![0.0, 0.0]));
        let lp = worst_case_lp(&set, &[0.0, 0.0], &[3.0, 2.0]).unwrap();
        let r = solve_lp(&lp).unwrap();
        assert!((r.objective - 3.0).abs() < 1e-8);

        let zero = UncertaintySet::Budgeted(BudgetedSet::new(0, vec![0.0, 0.0]));
        let lp = worst_case_lp(&zero, &[0.0, 0.0], &[3.0, 2.0]).unwrap();
        assert!(solve_lp(&lp).unwrap().objective.abs() < 1e-10);

        let ks = UncertaintySet::Knapsack(KnapsackSet::new(
            vec![1.0, 1.0],
            2.0,
            vec![0.0, 0.0],
            KnapsackMode::Continuous,
        ));
        let lp = worst_case_lp(&ks, &[0.0, 0.0], &[3.0, 2.0]).unwrap();
        assert!((solve_lp(&lp).unwrap().objective - 5.0).abs() < 1e-8);

        let discrete = UncertaintySet::Knapsack(KnapsackSet::new(
            vec![1.0],
            1.0,
            vec![0.0],
            KnapsackMode::Discrete,
        ));
        assert!(matches!(
            worst_case_lp(&discrete, &[0.0], &[1.0]),
            Err(UncertaintyError::DiscreteSetUnsupported)
        ));
    }

    #[test]
    fn lp_and_dual_agree_with_greedy_randomized() {
        let mut rng = crate::instgen::Rng::new(42);
        for _ in 0..150 {
            let n = rng.uniform_int(1, 8) as usize;
            let budget = rng.uniform_int(0, 4) as u32;
            let gamma: Vec<f64> = (0..n).map(|_| rng.uniform_real(0.0, 1.0)).collect();
            let x: Vec<f64> = (0..n).map(|_| rng.uniform_int(0, 1) as f64).collect();
            let coeffs: Vec<f64> = (0..n).map(|_| rng.uniform_real(0.0, 10.0)).collect();
            let set = UncertaintySet::Budgeted(BudgetedSet::new(budget, gamma.clone()));
            let caps: Vec<f64> = gamma.iter().zip(&x).map(|(g, xi)| 1.0 - g * xi).collect();
            let greedy = worst_case_budgeted_greedy(budget as f64, &caps, &coeffs);
            let primal = solve_lp(&worst_case_lp(&set, &x, &coeffs).unwrap()).unwrap().objective;
            let dual = solve_lp(&worst_case_dual_lp(&set, &x, &coeffs).unwrap()).unwrap().objective;
            assert!((primal - greedy).abs() < 1e-8, "primal {primal} greedy {greedy}");
            assert!((primal - dual).abs() < 1e-6, "primal {primal} dual {dual}");
        }
    }

    #[test]
    fn monotonicity_in_hedging() {
        let mut rng = crate::instgen::Rng::new(7);
        for _ in 0..50 {
            let n = 6;
            let gamma: Vec<f64> = (0..n).map(|_| rng.uniform_real(0.0, 1.0)).collect();
            let coeffs: Vec<f64> = (0..n).map(|_| rng.uniform_real(0.0, 5.0)).collect();
            let mut x = vec![0.0; n];
            let caps0: Vec<f64> = gamma.iter().map(|_| 1.0).collect();
            let mut prev = worst_case_budgeted_greedy(2.0, &caps0, &coeffs);
            for i in 0..n {
                x[i] = 1.0;
                let caps: Vec<f64> = gamma.iter().zip(&x).map(|(g, xi)| 1.0 - g * xi).collect();
                let v = worst_case_budgeted_greedy(2.0, &caps, &coeffs);
                assert!(v <= prev + 1e-12);
                prev = v;
            }
        }
    }
}
