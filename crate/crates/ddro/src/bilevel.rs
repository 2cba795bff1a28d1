//! Discrete-uncertainty bilevel models: construction, lower-level product
//! linearization (with the choice of placing McCormick rows in both levels
//! or only in the lower level), an exact desk-scale enumeration solver,
//! and export to the MPS + auxiliary-file format consumed by external
//! mixed-integer bilevel solvers.
//!
//! The enumeration solver implements optimistic semantics. For the models
//! built here the follower objective coincides termwise with the leader's
//! uncertain term, so every follower optimum yields the same leader value
//! and the choice among optima is immaterial.

use crate::model::{
    BilevelModel, ConTag, MilpModel, Objective, ObjSense, Sense, VarId, VarKind, VarTag,
};
use crate::problems::{Instance, KpInstance, KpUncertainty, PortfolioInstance, SpInstance};
use crate::reformulate::mccormick_bin_cont;
use crate::solver::{write_mps, SolveError, SolveResult, SolveStatus};
use crate::uncertainty::worst_case_discrete_dp;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum BilevelError {
    #[error("instance carries no discrete uncertainty payload")]
    MissingDiscreteData,
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("leader space too large: {0} free leader binaries exceed the limit {1}")]
    LeaderSpaceTooLarge(usize, usize),
    #[error("enumeration requires a pure-binary leader; variable `{0}` is continuous")]
    ContinuousLeader(String),
    #[error("follower subproblem is not a knapsack and has {0} binaries (enumeration cap 22)")]
    FollowerTooLarge(usize),
    #[error("model has quadratic content that cannot be exported")]
    QuadraticContent,
    #[error("product {0} * {1} cannot be linearized: {2}")]
    BadProduct(String, String, String),
    #[error("solver: {0}")]
    Solver(#[from] SolveError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

/// Where the McCormick rows of lower-level products live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    BothLevels,
    LowerOnly,
}

/// Kind of the auxiliary product variables (binary matches the reported
/// experiments; continuous is equivalent).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AuxKind {
    #[default]
    Binary,
    Continuous,
}

/// One linearized leader-follower product.
#[derive(Debug, Clone)]
pub struct ProductAux {
    pub leader: VarId,
    pub follower: VarId,
    pub lower_aux: VarId,
    pub upper_aux: Option<VarId>,
}

/// A bilevel model whose leader-follower products have been replaced by
/// McCormick auxiliaries.
#[derive(Debug, Clone)]
pub struct LinearizedBilevel {
    pub model: BilevelModel,
    pub products: Vec<ProductAux>,
    pub placement: Placement,
}

/// Builds the discrete-uncertainty bilevel model for an instance carrying
/// an `(f, b, w)` payload. The follower maximizes the uncertain term over
/// the binary knapsack set with decision-dependent budget `b - w'x`.
pub fn build_bilevel_discrete(inst: &Instance) -> Result<BilevelModel, BilevelError> {
    inst.validate().map_err(|e| BilevelError::InvalidInstance(e.to_string()))?;
    match inst {
        Instance::ShortestPath(sp) => sp_bilevel(sp),
        Instance::Knapsack(kp) => kp_bilevel(kp),
        Instance::Portfolio(pf) => portfolio_bilevel(pf),
    }
}

fn sp_bilevel(inst: &SpInstance) -> Result<BilevelModel, BilevelError> {
    let payload = inst.discrete.as_ref().ok_or(BilevelError::MissingDiscreteData)?;
    let m = inst.num_arcs();
    let mut base = MilpModel::new("sp_bilevel_discrete");
    let x: Vec<VarId> = (0..m)
        .map(|a| base.add_variable(format!("x_{a}"), 0.0, 1.0, VarKind::Binary, VarTag::Hedging).expect("var"))
        .collect();
    let y: Vec<VarId> = (0..m)
        .map(|a| base.add_variable(format!("y_{a}"), 0.0, 1.0, VarKind::Binary, VarTag::Decision).expect("var"))
        .collect();
    let u: Vec<VarId> = (0..m)
        .map(|a| base.add_variable(format!("u_{a}"), 0.0, 1.0, VarKind::Binary, VarTag::Uncertainty).expect("var"))
        .collect();
    crate::problems::add_flow_rows(&mut base, inst, &y);
    // follower knapsack: f'u + w'x <= b
    let mut row: Vec<(VarId, f64)> = u.iter().zip(&payload.f).map(|(&v, &f)| (v, f)).collect();
    for a in 0..m {
        if payload.w[a] != 0.0 {
            row.push((x[a], payload.w[a]));
        }
    }
    let lower_row = base
        .add_linear_constraint(row, Sense::Le, payload.b, ConTag::UncertaintySet)
        .expect("knapsack row");

    base.objective.sense = ObjSense::Min;
    for a in 0..m {
        base.objective.lin_terms.push((x[a], inst.hedging_cost[a]));
        base.objective.lin_terms.push((y[a], inst.d_bar[a]));
        base.objective.quad_terms.push((y[a], u[a], inst.d_hat[a]));
    }
    let mut lower_objective = Objective::new(ObjSense::Max);
    for a in 0..m {
        lower_objective.quad_terms.push((y[a], u[a], inst.d_hat[a]));
    }
    Ok(BilevelModel {
        base,
        lower_vars: u.into_iter().collect(),
        lower_cons: BTreeSet::from([lower_row]),
        lower_objective,
    })
}

fn kp_bilevel(inst: &KpInstance) -> Result<BilevelModel, BilevelError> {
    let KpUncertainty::Knapsack { f, b, w, discrete } = &inst.uncertainty else {
        return Err(BilevelError::MissingDiscreteData);
    };
    if !discrete {
        return Err(BilevelError::MissingDiscreteData);
    }
    let n = inst.n;
    let mut base = MilpModel::new("kp_bilevel_discrete");
    let x: Vec<VarId> = (0..n)
        .map(|i| base.add_variable(format!("x_{i}"), 0.0, 1.0, VarKind::Binary, VarTag::Decision).expect("var"))
        .collect();
    let u: Vec<VarId> = (0..n)
        .map(|i| base.add_variable(format!("u_{i}"), 0.0, 1.0, VarKind::Binary, VarTag::Uncertainty).expect("var"))
        .collect();
    // upper weight row with bilinear worst-case term: a_bar'x + sum a_hat x u <= d
    let lin: Vec<(VarId, f64)> = x.iter().zip(&inst.a_bar).map(|(&v, &a)| (v, a)).collect();
    let quad: Vec<(VarId, VarId, f64)> =
        (0..n).map(|i| (x[i], u[i], inst.a_hat[i])).collect();
    base.add_quad_constraint(quad, lin, Sense::Le, inst.capacity, ConTag::Structural)
        .expect("weight row");
    // follower knapsack: f'u + w'x <= b
    let mut row: Vec<(VarId, f64)> = u.iter().zip(f).map(|(&v, &fi)| (v, fi)).collect();
    for i in 0..n {
        if w[i] != 0.0 {
            row.push((x[i], w[i]));
        }
    }
    let lower_row = base
        .add_linear_constraint(row, Sense::Le, *b, ConTag::UncertaintySet)
        .expect("knapsack row");

    base.objective.sense = ObjSense::Max;
    base.objective.lin_terms = x.iter().zip(&inst.values).map(|(&v, &c)| (v, c)).collect();
    let mut lower_objective = Objective::new(ObjSense::Max);
    for i in 0..n {
        lower_objective.quad_terms.push((x[i], u[i], inst.a_hat[i]));
    }
    Ok(BilevelModel {
        base,
        lower_vars: u.into_iter().collect(),
        lower_cons: BTreeSet::from([lower_row]),
        lower_objective,
    })
}

fn portfolio_bilevel(inst: &PortfolioInstance) -> Result<BilevelModel, BilevelError> {
    let payload = inst.discrete.as_ref().ok_or(BilevelError::MissingDiscreteData)?;
    let n = inst.n_assets;
    let mut base = MilpModel::new("portfolio_bilevel_discrete");
    let y: Vec<VarId> = (0..n)
        .map(|i| base.add_variable(format!("y_{i}"), 0.0, 1.0, VarKind::Continuous, VarTag::Decision).expect("var"))
        .collect();
    let s: Vec<VarId> = (0..n)
        .map(|i| base.add_variable(format!("s_{i}"), 0.0, 1.0, VarKind::Binary, VarTag::Decision).expect("var"))
        .collect();
    let x: Vec<VarId> = (0..n)
        .map(|i| base.add_variable(format!("x_{i}"), 0.0, 1.0, VarKind::Continuous, VarTag::Hedging).expect("var"))
        .collect();
    let u: Vec<VarId> = (0..n)
        .map(|i| base.add_variable(format!("u_{i}"), 0.0, 1.0, VarKind::Binary, VarTag::Uncertainty).expect("var"))
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
    base.add_quad_constraint(quad, vec![], Sense::Le, inst.v0, ConTag::Structural)
        .expect("variance row");
    base.add_linear_constraint(y.iter().map(|&v| (v, 1.0)).collect(), Sense::Eq, 1.0, ConTag::Structural)
        .expect("budget row");
    base.add_linear_constraint(
        s.iter().map(|&v| (v, 1.0)).collect(),
        Sense::Le,
        inst.k as f64,
        ConTag::Structural,
    )
    .expect("cardinality row");
    for i in 0..n {
        base.add_linear_constraint(vec![(y[i], 1.0), (s[i], -1.0)], Sense::Le, 0.0, ConTag::Structural)
            .expect("link row");
    }
    let mut row: Vec<(VarId, f64)> = u.iter().zip(&payload.f).map(|(&v, &f)| (v, f)).collect();
    for i in 0..n {
        if payload.w[i] != 0.0 {
            row.push((x[i], payload.w[i]));
        }
    }
    let lower_row = base
        .add_linear_constraint(row, Sense::Le, payload.b, ConTag::UncertaintySet)
        .expect("knapsack row");

    base.objective.sense = ObjSense::Max;
    for i in 0..n {
        base.objective.lin_terms.push((y[i], inst.mu_bar[i]));
        base.objective.lin_terms.push((x[i], -inst.hedging_cost[i]));
        base.objective.quad_terms.push((y[i], u[i], -inst.mu_hat[i]));
    }
    let mut lower_objective = Objective::new(ObjSense::Max);
    for i in 0..n {
        lower_objective.quad_terms.push((y[i], u[i], inst.mu_hat[i]));
    }
    Ok(BilevelModel {
        base,
        lower_vars: u.into_iter().collect(),
        lower_cons: BTreeSet::from([lower_row]),
        lower_objective,
    })
}

fn is_binary(model: &MilpModel, v: VarId) -> bool {
    model.variables[v].kind == VarKind::Binary
}

/// Replaces every leader-follower product by a McCormick auxiliary. Under
/// `LowerOnly` the auxiliaries and their rows belong to the lower level
/// and the upper level references them directly; under `BothLevels` the
/// upper level gets its own copies. Binary-binary products use `aux_kind`
/// auxiliaries; products with a bounded continuous leader factor are
/// linearized with continuous auxiliaries.
pub fn linearize_lower_products(
    bm: &BilevelModel,
    placement: Placement,
    aux_kind: AuxKind,
) -> Result<LinearizedBilevel, BilevelError> {
    let mut model = bm.clone();
    let mut products: Vec<ProductAux> = Vec::new();

    // Distinct (leader, follower) pairs in first-seen order.
    let mut pairs: Vec<(VarId, VarId)> = Vec::new();
    let collect = |terms: &[(VarId, VarId, f64)], pairs: &mut Vec<(VarId, VarId)>| {
        for &(a, b, _) in terms {
            let pair = match (bm.lower_vars.contains(&a), bm.lower_vars.contains(&b)) {
                (false, true) => Some((a, b)),
                (true, false) => Some((b, a)),
                _ => None,
            };
            if let Some(p) = pair {
                if !pairs.contains(&p) {
                    pairs.push(p);
                }
            }
        }
    };
    collect(&bm.base.objective.quad_terms, &mut pairs);
    for qc in &bm.base.quad_constraints {
        collect(&qc.quad_terms, &mut pairs);
    }
    collect(&bm.lower_objective.quad_terms, &mut pairs);

    let make_aux = |model: &mut BilevelModel,
                        leader: VarId,
                        follower: VarId,
                        which: &str|
     -> Result<VarId, BilevelError> {
        let aux = if is_binary(&model.base, leader) {
            crate::reformulate::mccormick_bin_bin(&mut model.base, leader, follower, aux_kind == AuxKind::Binary)
        } else {
            let lv = &model.base.variables[leader];
            if !lv.ub.is_finite() || lv.lb != 0.0 {
                return Err(BilevelError::BadProduct(
                    lv.name.clone(),
                    model.base.variables[follower].name.clone(),
                    "continuous leader factor must live in [0, ub] with finite ub".into(),
                ));
            }
            let ub = lv.ub;
            // follower is the binary factor here
            mccormick_bin_cont(&mut model.base, follower, leader, ub).map_err(|e| {
                BilevelError::BadProduct(
                    model.base.variables[leader].name.clone(),
                    model.base.variables[follower].name.clone(),
                    e.to_string(),
                )
            })?
        };
        // keep the aux names unique per placement copy
        let name = format!(
            "r{which}_{}_{}",
            model.base.variables[leader].name, model.base.variables[follower].name
        );
        model.base.variables[aux].name = name;
        Ok(aux)
    };

    for &(leader, follower) in &pairs {
        match placement {
            Placement::LowerOnly => {
                let rows_before = model.base.constraints.len();
                let aux = make_aux(&mut model, leader, follower, "l")?;
                model.lower_vars.insert(aux);
                for id in rows_before..model.base.constraints.len() {
                    model.lower_cons.insert(id);
                }
                products.push(ProductAux { leader, follower, lower_aux: aux, upper_aux: None });
            }
            Placement::BothLevels => {
                let rows_before = model.base.constraints.len();
                let lower_aux = make_aux(&mut model, leader, follower, "l")?;
                model.lower_vars.insert(lower_aux);
                for id in rows_before..model.base.constraints.len() {
                    model.lower_cons.insert(id);
                }
                let upper_aux = make_aux(&mut model, leader, follower, "u")?;
                products.push(ProductAux { leader, follower, lower_aux, upper_aux: Some(upper_aux) });
            }
        }
    }

    let aux_for = |leader: VarId, follower: VarId, upper: bool| -> Option<VarId> {
        products.iter().find(|p| p.leader == leader && p.follower == follower).map(|p| {
            if upper {
                p.upper_aux.unwrap_or(p.lower_aux)
            } else {
                p.lower_aux
            }
        })
    };
    let orient = |a: VarId, b: VarId| -> Option<(VarId, VarId)> {
        match (bm.lower_vars.contains(&a), bm.lower_vars.contains(&b)) {
            (false, true) => Some((a, b)),
            (true, false) => Some((b, a)),
            _ => None,
        }
    };

    // Rewrite the upper objective.
    let mut kept_quad = Vec::new();
    for &(a, b, c) in &bm.base.objective.quad_terms {
        if let Some((l, f)) = orient(a, b) {
            let aux = aux_for(l, f, true).expect("collected product");
            model.base.objective.lin_terms.push((aux, c));
        } else {
            kept_quad.push((a, b, c));
        }
    }
    model.base.objective.quad_terms = kept_quad;

    // Rewrite quadratic constraints; fully linearized ones become rows.
    let quads = std::mem::take(&mut model.base.quad_constraints);
    for mut qc in quads {
        let mut lin = std::mem::take(&mut qc.lin_terms);
        let mut kept = Vec::new();
        for &(a, b, c) in &qc.quad_terms {
            if let Some((l, f)) = orient(a, b) {
                let aux = aux_for(l, f, true).expect("collected product");
                lin.push((aux, c));
            } else {
                kept.push((a, b, c));
            }
        }
        if kept.is_empty() {
            model
                .base
                .add_linear_constraint(lin, qc.sense, qc.rhs, qc.tag)
                .expect("linearized row");
        } else {
            qc.lin_terms = lin;
            qc.quad_terms = kept;
            let id = model.base.quad_constraints.len();
            qc.id = id;
            model.base.quad_constraints.push(qc);
        }
    }

    // Rewrite the follower objective (always onto the lower auxiliaries).
    let mut lower_obj = Objective::new(bm.lower_objective.sense);
    lower_obj.lin_terms = bm.lower_objective.lin_terms.clone();
    lower_obj.constant = bm.lower_objective.constant;
    for &(a, b, c) in &bm.lower_objective.quad_terms {
        let (l, f) = orient(a, b).ok_or_else(|| {
            BilevelError::BadProduct(
                model.base.variables[a].name.clone(),
                model.base.variables[b].name.clone(),
                "follower objective product must pair leader and follower variables".into(),
            )
        })?;
        let aux = aux_for(l, f, false).expect("collected product");
        lower_obj.lin_terms.push((aux, c));
    }
    model.lower_objective = lower_obj;

    Ok(LinearizedBilevel { model, products, placement })
}

/// Exact optimistic bilevel optimum by enumerating leader points.
///
/// Leader points are pruned by the leader-only constraints before the
/// follower is solved; the follower knapsack is solved by dynamic
/// programming (or exact branch and bound for fractional weights), and
/// auxiliaries are reconstructed as exact products. Ties between leader
/// points are broken toward the lexicographically smallest point.
pub fn solve_bilevel_enumeration(
    lb: &LinearizedBilevel,
    limit: usize,
) -> Result<SolveResult, BilevelError> {
    let start = Instant::now();
    let model = &lb.model;
    let base = &model.base;
    if !base.quad_constraints.is_empty() {
        return Err(BilevelError::QuadraticContent);
    }

    // Enumerated leader variables: everything not lower and not an aux.
    let mut leader_vars: Vec<VarId> = Vec::new();
    for v in &base.variables {
        if model.lower_vars.contains(&v.id) || v.tag == VarTag::McCormickAux {
            continue;
        }
        if v.kind != VarKind::Binary {
            return Err(BilevelError::ContinuousLeader(v.name.clone()));
        }
        leader_vars.push(v.id);
    }
    let k = leader_vars.len();
    if k > limit {
        return Err(BilevelError::LeaderSpaceTooLarge(k, limit));
    }

    // Follower structure.
    let follower_vars: Vec<VarId> = model
        .lower_vars
        .iter()
        .copied()
        .filter(|&v| base.variables[v].tag != VarTag::McCormickAux)
        .collect();
    let nf = follower_vars.len();
    let fpos = |v: VarId| follower_vars.iter().position(|&w| w == v);

    // Upper aux values derive from products; map aux -> (leader, follower).
    let mut aux_of: Vec<Option<(VarId, VarId)>> = vec![None; base.num_vars()];
    for p in &lb.products {
        aux_of[p.lower_aux] = Some((p.leader, p.follower));
        if let Some(u) = p.upper_aux {
            aux_of[u] = Some((p.leader, p.follower));
        }
    }

    // Partition linear rows.
    let leader_set: Vec<bool> = {
        let mut s = vec![false; base.num_vars()];
        for &v in &leader_vars {
            s[v] = true;
        }
        s
    };
    let mut leader_rows: Vec<&crate::model::LinConstraint> = Vec::new();
    let mut coupling_rows: Vec<&crate::model::LinConstraint> = Vec::new();
    let mut follower_rows: Vec<&crate::model::LinConstraint> = Vec::new();
    for c in &base.constraints {
        if model.lower_cons.contains(&c.id) {
            if c.tag != ConTag::McCormick {
                follower_rows.push(c);
            }
            continue;
        }
        if c.tag == ConTag::McCormick {
            continue; // exact by aux reconstruction
        }
        if c.terms.iter().all(|&(v, _)| leader_set[v]) {
            leader_rows.push(c);
        } else {
            coupling_rows.push(c);
        }
    }

    let maximize = base.objective.sense == ObjSense::Max;
    let lower_maximize = model.lower_objective.sense == ObjSense::Max;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut nodes: u64 = 0;

    let mut values = vec![0.0; base.num_vars()];
    for mask in 0u64..(1u64 << k) {
        // Leader point, bit 0 = first leader var as the most significant
        // position so the scan order is lexicographic.
        for (j, &v) in leader_vars.iter().enumerate() {
            values[v] = ((mask >> (k - 1 - j)) & 1) as f64;
        }
        let row_ok = |c: &crate::model::LinConstraint, vals: &[f64]| -> bool {
            let lhs: f64 = c.terms.iter().map(|&(v, a)| a * vals[v]).sum();
            match c.sense {
                Sense::Le => lhs <= c.rhs + 1e-9,
                Sense::Ge => lhs >= c.rhs - 1e-9,
                Sense::Eq => (lhs - c.rhs).abs() <= 1e-9,
            }
        };
        if !leader_rows.iter().all(|c| row_ok(c, &values)) {
            continue;
        }
        nodes += 1;

        // Follower problem over the free follower binaries: substitute the
        // fixed leader and the aux identity r = leader * u.
        let mut fobj = vec![0.0; nf];
        for &(v, c) in &model.lower_objective.lin_terms {
            if let Some(p) = fpos(v) {
                fobj[p] += c;
            } else if let Some((l, f)) = aux_of[v] {
                let p = fpos(f).expect("aux pairs a follower var");
                fobj[p] += c * values[l];
            }
            // terms on fixed leader vars only shift the objective
        }
        if !lower_maximize {
            for c in fobj.iter_mut() {
                *c = -*c;
            }
        }

        // Rows over u after substitution.
        let mut knap: Option<(Vec<f64>, f64)> = None;
        let mut generic_rows: Vec<(Vec<f64>, Sense, f64)> = Vec::new();
        let mut infeasible_follower = false;
        for c in &follower_rows {
            let mut coeff = vec![0.0; nf];
            let mut rhs = c.rhs;
            for &(v, a) in &c.terms {
                if let Some(p) = fpos(v) {
                    coeff[p] += a;
                } else if let Some((l, f)) = aux_of[v] {
                    let p = fpos(f).expect("aux pairs a follower var");
                    coeff[p] += a * values[l];
                } else {
                    rhs -= a * values[v];
                }
            }
            if coeff.iter().all(|&c| c == 0.0) {
                let ok = match c.sense {
                    Sense::Le => 0.0 <= rhs + 1e-9,
                    Sense::Ge => 0.0 >= rhs - 1e-9,
                    Sense::Eq => rhs.abs() <= 1e-9,
                };
                if !ok {
                    infeasible_follower = true;
                    break;
                }
                continue;
            }
            if knap.is_none() && generic_rows.is_empty() && c.sense == Sense::Le && coeff.iter().all(|&c| c >= 0.0) {
                knap = Some((coeff, rhs));
            } else {
                generic_rows.push((coeff, c.sense, rhs));
            }
        }
        if infeasible_follower {
            continue; // no adversary move exists; leader point yields no bilevel-feasible pair
        }

        let fu = if generic_rows.is_empty() {
            match &knap {
                Some((w, cap)) => {
                    if *cap < 0.0 {
                        continue;
                    }
                    worst_case_discrete_dp(w, *cap, &fobj).1
                }
                None => {
                    // unconstrained: take every positive coefficient
                    fobj.iter().map(|&c| (c > 0.0) as u8).collect()
                }
            }
        } else {
            if nf > 22 {
                return Err(BilevelError::FollowerTooLarge(nf));
            }
            let mut bestf: Option<(f64, Vec<u8>)> = None;
            'umask: for um in 0u32..(1u32 << nf) {
                let u: Vec<u8> = (0..nf).map(|i| (um >> i & 1) as u8).collect();
                if let Some((w, cap)) = &knap {
                    let lhs: f64 = w.iter().zip(&u).map(|(a, ui)| a * *ui as f64).sum();
                    if lhs > cap + 1e-9 {
                        continue;
                    }
                }
                for (coeff, sense, rhs) in &generic_rows {
                    let lhs: f64 = coeff.iter().zip(&u).map(|(a, ui)| a * *ui as f64).sum();
                    let ok = match sense {
                        Sense::Le => lhs <= rhs + 1e-9,
                        Sense::Ge => lhs >= rhs - 1e-9,
                        Sense::Eq => (lhs - rhs).abs() <= 1e-9,
                    };
                    if !ok {
                        continue 'umask;
                    }
                }
                let v: f64 = fobj.iter().zip(&u).map(|(c, ui)| c * *ui as f64).sum();
                if bestf.as_ref().map_or(true, |(bv, _)| v > *bv) {
                    bestf = Some((v, u));
                }
            }
            match bestf {
                Some((_, u)) => u,
                None => continue,
            }
        };

        // Full point: follower response and exact product auxiliaries.
        for (p, &v) in follower_vars.iter().enumerate() {
            values[v] = fu[p] as f64;
        }
        for pr in &lb.products {
            let prod = values[pr.leader] * values[pr.follower];
            values[pr.lower_aux] = prod;
            if let Some(u) = pr.upper_aux {
                values[u] = prod;
            }
        }
        if !coupling_rows.iter().all(|c| row_ok(c, &values)) {
            continue;
        }
        let obj = crate::solver::objective_value(base, &values);
        let better = match &best {
            None => true,
            Some((b, _)) => {
                if maximize {
                    obj > *b + 1e-12
                } else {
                    obj < *b - 1e-12
                }
            }
        };
        if better {
            best = Some((obj, values.clone()));
        }
    }

    let elapsed_ms = start.elapsed().as_millis();
    match best {
        Some((obj, values)) => Ok(SolveResult {
            status: SolveStatus::Optimal,
            values,
            objective: obj,
            bound: obj,
            nodes,
            elapsed_ms,
        }),
        None => Ok(SolveResult {
            status: SolveStatus::Infeasible,
            values: Vec::new(),
            objective: f64::NAN,
            bound: f64::NAN,
            nodes,
            elapsed_ms,
        }),
    }
}

/// Sense convention for the auxiliary file's `OS` record (1 = the
/// follower minimizes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AuxObjSense {
    /// Emit the follower objective as stated: `OS -1` for max.
    #[default]
    AsStated,
    /// Negate a maximizing follower objective and emit `OS 1`.
    NormalizeMin,
}

/// Auxiliary-file content (column/row indices refer to the MPS column
/// order and to the constraint rows in emission order).
#[derive(Debug, Clone, PartialEq)]
pub struct AuxData {
    pub n: usize,
    pub m: usize,
    pub lc: Vec<usize>,
    pub lr: Vec<usize>,
    pub lo: Vec<f64>,
    pub os: i32,
}

/// Exports `<stem>.mps` and `<stem>.aux`. The model must be fully linear.
pub fn export_mibs(
    lb: &LinearizedBilevel,
    stem: &Path,
    sense: AuxObjSense,
) -> Result<(PathBuf, PathBuf), BilevelError> {
    let aux = build_aux_data(lb, sense)?;
    let mps_path = stem.with_extension("mps");
    let aux_path = stem.with_extension("aux");
    write_mps(&lb.model.base, &mps_path).map_err(|e| match e {
        SolveError::QuadraticContent => BilevelError::QuadraticContent,
        other => BilevelError::Solver(other),
    })?;
    std::fs::write(&aux_path, write_aux_string(&aux))?;
    Ok((mps_path, aux_path))
}

pub fn build_aux_data(lb: &LinearizedBilevel, sense: AuxObjSense) -> Result<AuxData, BilevelError> {
    let model = &lb.model;
    if !model.base.quad_constraints.is_empty() || !model.base.objective.is_linear() {
        return Err(BilevelError::QuadraticContent);
    }
    if !model.lower_objective.is_linear() {
        return Err(BilevelError::QuadraticContent);
    }
    let lc: Vec<usize> = model.lower_vars.iter().copied().collect(); // BTreeSet: increasing
    let lr: Vec<usize> = model.lower_cons.iter().copied().collect();
    let mut coeff = vec![0.0; model.base.num_vars()];
    for &(v, c) in &model.lower_objective.lin_terms {
        if !model.lower_vars.contains(&v) {
            return Err(BilevelError::Parse(format!(
                "follower objective references upper-level variable `{}`",
                model.base.variables[v].name
            )));
        }
        coeff[v] += c;
    }
    let maximizing = model.lower_objective.sense == ObjSense::Max;
    let (flip, os) = match (sense, maximizing) {
        (AuxObjSense::AsStated, true) => (1.0, -1),
        (AuxObjSense::AsStated, false) => (1.0, 1),
        (AuxObjSense::NormalizeMin, true) => (-1.0, 1),
        (AuxObjSense::NormalizeMin, false) => (1.0, 1),
    };
    let lo: Vec<f64> = lc.iter().map(|&v| flip * coeff[v]).collect();
    Ok(AuxData { n: lc.len(), m: lr.len(), lc, lr, lo, os })
}

pub fn write_aux_string(aux: &AuxData) -> String {
    let mut s = String::new();
    s.push_str(&format!("N {}\n", aux.n));
    s.push_str(&format!("M {}\n", aux.m));
    for c in &aux.lc {
        s.push_str(&format!("LC {c}\n"));
    }
    for r in &aux.lr {
        s.push_str(&format!("LR {r}\n"));
    }
    for v in &aux.lo {
        s.push_str(&format!("LO {v}\n"));
    }
    s.push_str(&format!("OS {}\n", aux.os));
    s
}

pub fn parse_aux(text: &str) -> Result<AuxData, BilevelError> {
    let mut aux = AuxData { n: 0, m: 0, lc: Vec::new(), lr: Vec::new(), lo: Vec::new(), os: 1 };
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let key = it.next().unwrap();
        let val = it
            .next()
            .ok_or_else(|| BilevelError::Parse(format!("aux line {}: missing value", lineno + 1)))?;
        let parse_usize = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| BilevelError::Parse(format!("aux line {}: bad integer `{v}`", lineno + 1)))
        };
        match key {
            "N" => aux.n = parse_usize(val)?,
            "M" => aux.m = parse_usize(val)?,
            "LC" => aux.lc.push(parse_usize(val)?),
            "LR" => aux.lr.push(parse_usize(val)?),
            "LO" => aux.lo.push(
                val.parse::<f64>()
                    .map_err(|_| BilevelError::Parse(format!("aux line {}: bad real `{val}`", lineno + 1)))?,
            ),
            "OS" => {
                aux.os = val
                    .parse::<i32>()
                    .map_err(|_| BilevelError::Parse(format!("aux line {}: bad sense `{val}`", lineno + 1)))?
            }
            other => return Err(BilevelError::Parse(format!("aux line {}: unknown record `{other}`", lineno + 1))),
        }
    }
    if aux.lc.len() != aux.n || aux.lr.len() != aux.m || aux.lo.len() != aux.n {
        return Err(BilevelError::Parse("aux record counts disagree with N/M".into()));
    }
    Ok(aux)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instgen::{gen_kp_discrete, gen_sp_discrete, DiscreteUncertainty, Rng};
    use crate::oracles;

    fn one_arc_sp() -> SpInstance {
        SpInstance {
            nodes: 2,
            arcs: vec![(0, 1)],
            source: 0,
            target: 1,
            d_bar: vec![4.0],
            d_hat: vec![3.0],
            hedging_cost: vec![1.0],
            gamma: vec![0.2],
            budget: 0,
            discrete: Some(DiscreteUncertainty { f: vec![1.0], b: 1.0, w: vec![0.0] }),
        }
    }

    #[test]
    fn one_arc_follower_attacks_when_budget_allows() {
        let bm = build_bilevel_discrete(&Instance::ShortestPath(one_arc_sp())).unwrap();
        let lb = linearize_lower_products(&bm, Placement::LowerOnly, AuxKind::Binary).unwrap();
        let r = solve_bilevel_enumeration(&lb, 24).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        // hedging cannot shrink the budget (w = 0), so u = 1: cost 4 + 3
        assert!((r.objective - 7.0).abs() < 1e-9);
    }

    #[test]
    fn hedging_that_starves_the_adversary_pays_off() {
        let mut inst = one_arc_sp();
        inst.discrete = Some(DiscreteUncertainty { f: vec![1.0], b: 1.0, w: vec![1.0] });
        // x = 1 shrinks b(x) to 0 < f: follower is frozen; cost 4 + 1 < 4 + 3.
        let bm = build_bilevel_discrete(&Instance::ShortestPath(inst)).unwrap();
        let lb = linearize_lower_products(&bm, Placement::LowerOnly, AuxKind::Binary).unwrap();
        let r = solve_bilevel_enumeration(&lb, 24).unwrap();
        assert!((r.objective - 5.0).abs() < 1e-9);
    }

    #[test]
    fn kp_with_starved_adversary_reduces_to_nominal() {
        let mut inst = gen_kp_discrete(6, 1);
        if let KpUncertainty::Knapsack { b, .. } = &mut inst.uncertainty {
            *b = 0.5; // below min f = 1: u = 0 always
        }
        let bm = build_bilevel_discrete(&Instance::Knapsack(inst.clone())).unwrap();
        let lb = linearize_lower_products(&bm, Placement::LowerOnly, AuxKind::Binary).unwrap();
        let r = solve_bilevel_enumeration(&lb, 24).unwrap();
        let nominal = oracles::knapsack_best_value(&inst.a_bar, inst.capacity, &inst.values);
        assert!((r.objective - nominal).abs() < 1e-9);
    }

    #[test]
    fn zero_deviation_reduces_to_nominal() {
        let mut inst = gen_kp_discrete(6, 2);
        inst.a_hat = vec![0.0; 6];
        let bm = build_bilevel_discrete(&Instance::Knapsack(inst.clone())).unwrap();
        let lb = linearize_lower_products(&bm, Placement::LowerOnly, AuxKind::Binary).unwrap();
        let r = solve_bilevel_enumeration(&lb, 24).unwrap();
        let nominal = oracles::knapsack_best_value(&inst.a_bar, inst.capacity, &inst.values);
        assert!((r.objective - nominal).abs() < 1e-9);
    }

    #[test]
    fn placements_agree_and_match_joint_brute_force() {
        let mut rng = Rng::new(23);
        let mut done = 0;
        for _ in 0..40 {
            let n = rng.uniform_int(4, 8) as usize;
            let inst = gen_kp_discrete(n, rng.next_u64());
            let bm = build_bilevel_discrete(&Instance::Knapsack(inst.clone())).unwrap();
            let both = linearize_lower_products(&bm, Placement::BothLevels, AuxKind::Binary).unwrap();
            let lower = linearize_lower_products(&bm, Placement::LowerOnly, AuxKind::Binary).unwrap();
            let rb = solve_bilevel_enumeration(&both, 24).unwrap();
            let rl = solve_bilevel_enumeration(&lower, 24).unwrap();
            assert_eq!(rb.objective, rl.objective, "placements disagree");
            let brute = oracles::kp_discrete_joint_brute_force(&inst);
            assert!((rb.objective - brute).abs() < 1e-9, "enum {} brute {brute}", rb.objective);
            done += 1;
        }
        assert_eq!(done, 40);
    }

    #[test]
    fn sp_discrete_matches_joint_brute_force() {
        let mut checked = 0;
        for seed in 0..20u64 {
            let inst = gen_sp_discrete(3, seed);
            if oracles::dijkstra(inst.nodes, &inst.arcs, &inst.d_bar, inst.source, inst.target).is_none() {
                continue;
            }
            let bm = build_bilevel_discrete(&Instance::ShortestPath(inst.clone())).unwrap();
            let lb = linearize_lower_products(&bm, Placement::LowerOnly, AuxKind::Binary).unwrap();
            let r = solve_bilevel_enumeration(&lb, 24).unwrap();
            let brute = oracles::sp_discrete_joint_brute_force(&inst).unwrap();
            assert!((r.objective - brute).abs() < 1e-9, "seed {seed}: enum {} brute {brute}", r.objective);
            checked += 1;
        }
        assert!(checked >= 5);
    }

    #[test]
    fn zero_products_leave_model_unchanged() {
        let mut inst = gen_kp_discrete(4, 3);
        inst.a_hat = vec![0.0; 4];
        let mut bm = build_bilevel_discrete(&Instance::Knapsack(inst)).unwrap();
        // drop the zero-coefficient product terms entirely
        bm.base.objective.quad_terms.clear();
        bm.lower_objective.quad_terms.clear();
        bm.base.quad_constraints[0].quad_terms.clear();
        let before_vars = bm.base.num_vars();
        let lb = linearize_lower_products(&bm, Placement::LowerOnly, AuxKind::Binary).unwrap();
        assert_eq!(lb.model.base.num_vars(), before_vars);
        assert!(lb.products.is_empty());
    }

    #[test]
    fn follower_objective_lands_on_lower_aux() {
        let inst = one_arc_sp();
        let bm = build_bilevel_discrete(&Instance::ShortestPath(inst)).unwrap();
        let lb = linearize_lower_products(&bm, Placement::LowerOnly, AuxKind::Binary).unwrap();
        assert_eq!(lb.model.lower_objective.sense, ObjSense::Max);
        assert_eq!(lb.model.lower_objective.lin_terms.len(), 1);
        let (aux, c) = lb.model.lower_objective.lin_terms[0];
        assert_eq!(aux, lb.products[0].lower_aux);
        assert_eq!(c, 3.0);
        assert!(lb.model.lower_vars.contains(&aux));
    }

    #[test]
    fn aux_export_round_trip_and_format_invariants() {
        let inst = one_arc_sp();
        let bm = build_bilevel_discrete(&Instance::ShortestPath(inst)).unwrap();
        let lb = linearize_lower_products(&bm, Placement::LowerOnly, AuxKind::Binary).unwrap();
        let aux = build_aux_data(&lb, AuxObjSense::AsStated).unwrap();
        assert_eq!(aux.n, 2); // u and its product aux
        assert_eq!(aux.os, -1);
        assert!(aux.lc.windows(2).all(|w| w[0] < w[1]));
        assert!(aux.lc.iter().all(|&c| c < lb.model.base.num_vars()));
        let text = write_aux_string(&aux);
        let parsed = parse_aux(&text).unwrap();
        assert_eq!(parsed, aux);

        let min_form = build_aux_data(&lb, AuxObjSense::NormalizeMin).unwrap();
        assert_eq!(min_form.os, 1);
        for (a, b) in min_form.lo.iter().zip(&aux.lo) {
            assert_eq!(*a, -b);
        }
    }

    #[test]
    fn export_rejects_quadratic_portfolio() {
        let mut inst = crate::instgen::gen_portfolio(10, 5);
        inst.discrete = Some(DiscreteUncertainty {
            f: vec![10.0; 10],
            b: 30.0,
            w: vec![0.0; 10],
        });
        let bm = build_bilevel_discrete(&Instance::Portfolio(inst)).unwrap();
        let lb = linearize_lower_products(&bm, Placement::LowerOnly, AuxKind::Binary).unwrap();
        // the variance row stays quadratic
        assert!(!lb.model.base.quad_constraints.is_empty());
        assert!(matches!(
            build_aux_data(&lb, AuxObjSense::AsStated),
            Err(BilevelError::QuadraticContent)
        ));
        // and the enumeration solver refuses the continuous leader anyway
        assert!(matches!(
            solve_bilevel_enumeration(&lb, 24),
            Err(BilevelError::QuadraticContent) | Err(BilevelError::ContinuousLeader(_))
        ));
    }

    #[test]
    fn leader_space_cap_is_enforced() {
        let inst = gen_kp_discrete(26, 0);
        let bm = build_bilevel_discrete(&Instance::Knapsack(inst)).unwrap();
        let lb = linearize_lower_products(&bm, Placement::LowerOnly, AuxKind::Binary).unwrap();
        assert!(matches!(
            solve_bilevel_enumeration(&lb, 24),
            Err(BilevelError::LeaderSpaceTooLarge(26, 24))
        ));
    }
}
