//! Bounded-variable simplex on sparse columns with a dense basis inverse.
//!
//! Root and standalone solves run a two-phase primal with Dantzig pricing
//! and deterministic tie-breaks (largest reduced cost then smallest
//! column; minimum ratio then largest pivot then smallest row), switching
//! to Bland's rule after 5000 degenerate pivots. Branch-and-bound nodes
//! re-solve under tightened bounds with a dual simplex warm-started from
//! the root optimal basis (bound changes keep the root basis dual
//! feasible); any numerical anomaly falls back to the scratch primal.

use super::{audit, objective_value, SolveError, SolveResult, SolveStatus, FEAS_TOL, OPT_TOL};
use crate::model::{MilpModel, ObjSense, Sense, VarId};
use std::time::Instant;

const PIVOT_TOL: f64 = 1e-9;
const DEGEN_TOL: f64 = 1e-9;
const BLAND_TRIGGER: usize = 5000;
const MAX_ITERS: usize = 500_000;
const DUAL_MAX_ITERS: usize = 5_000;

#[derive(Debug, Clone, Copy)]
enum ColOrigin {
    /// Column is the model variable itself.
    Direct(VarId),
    /// Variable with `lb = -inf` and finite ub: x = shift - column.
    UpperShift(VarId),
    /// Positive/negative part of a free-variable split.
    SplitPos(VarId),
    SplitNeg(VarId),
    Slack,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum RawStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

type SparseCol = Vec<(u32, f64)>;

/// Computational form of a linear model: min c'x over columns with bounds,
/// all rows equalities via slack columns.
pub(crate) struct LpForm {
    m: usize,
    cols: Vec<SparseCol>,
    origin: Vec<ColOrigin>,
    cost: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    shift: Vec<f64>,
    rhs: Vec<f64>,
    var_col: Vec<usize>,
    num_model_vars: usize,
}

/// An optimal basis captured for warm starts: artificial columns are
/// kept (fixed at zero) so indices stay aligned with the tableau, and the
/// reduced costs (bound-independent) ride along.
pub(crate) struct WarmState {
    arts: Vec<(usize, f64)>,
    basis: Vec<usize>,
    basis_pos: Vec<Option<usize>>,
    at_ub: Vec<bool>,
    binv: Vec<f64>,
    red_cost: Vec<f64>,
}

impl LpForm {
    pub fn build(model: &MilpModel) -> Result<LpForm, SolveError> {
        if !model.is_linear() {
            return Err(SolveError::QuadraticContent);
        }
        let m = model.constraints.len();
        let sign = if model.objective.sense == ObjSense::Max { -1.0 } else { 1.0 };

        let mut obj = vec![0.0; model.num_vars()];
        for &(v, c) in &model.objective.lin_terms {
            obj[v] += sign * c;
        }

        let mut var_cols: Vec<SparseCol> = vec![Vec::new(); model.num_vars()];
        for c in &model.constraints {
            for &(v, a) in &c.terms {
                if a != 0.0 {
                    var_cols[v].push((c.id as u32, a));
                }
            }
        }
        for col in var_cols.iter_mut() {
            col.sort_by_key(|&(r, _)| r);
            // merge duplicates defensively
            let mut merged: SparseCol = Vec::with_capacity(col.len());
            for &(r, a) in col.iter() {
                match merged.last_mut() {
                    Some((lr, la)) if *lr == r => *la += a,
                    _ => merged.push((r, a)),
                }
            }
            *col = merged;
        }

        let mut cols: Vec<SparseCol> = Vec::new();
        let mut origin = Vec::new();
        let mut cost = Vec::new();
        let mut lb = Vec::new();
        let mut ub = Vec::new();
        let mut shift = Vec::new();
        let mut var_col = vec![usize::MAX; model.num_vars()];
        let mut rhs_shift = vec![0.0; m];

        for v in &model.variables {
            let col = std::mem::take(&mut var_cols[v.id]);
            var_col[v.id] = cols.len();
            if v.lb.is_finite() {
                origin.push(ColOrigin::Direct(v.id));
                cost.push(obj[v.id]);
                lb.push(v.lb);
                ub.push(v.ub);
                shift.push(0.0);
                cols.push(col);
            } else if v.ub.is_finite() {
                // x = ub - x', x' in [0, inf)
                for &(r, a) in &col {
                    rhs_shift[r as usize] += a * v.ub;
                }
                origin.push(ColOrigin::UpperShift(v.id));
                cost.push(-obj[v.id]);
                lb.push(0.0);
                ub.push(f64::INFINITY);
                shift.push(v.ub);
                cols.push(col.iter().map(|&(r, a)| (r, -a)).collect());
            } else {
                origin.push(ColOrigin::SplitPos(v.id));
                cost.push(obj[v.id]);
                lb.push(0.0);
                ub.push(f64::INFINITY);
                shift.push(0.0);
                cols.push(col.clone());
                origin.push(ColOrigin::SplitNeg(v.id));
                cost.push(-obj[v.id]);
                lb.push(0.0);
                ub.push(f64::INFINITY);
                shift.push(0.0);
                cols.push(col.iter().map(|&(r, a)| (r, -a)).collect());
            }
        }

        let mut rhs = vec![0.0; m];
        for c in &model.constraints {
            rhs[c.id] = c.rhs - rhs_shift[c.id];
            let coef = if c.sense == Sense::Ge { -1.0 } else { 1.0 };
            origin.push(ColOrigin::Slack);
            cost.push(0.0);
            lb.push(0.0);
            ub.push(if c.sense == Sense::Eq { 0.0 } else { f64::INFINITY });
            shift.push(0.0);
            cols.push(vec![(c.id as u32, coef)]);
        }

        Ok(LpForm {
            m,
            cols,
            origin,
            cost,
            lb,
            ub,
            shift,
            rhs,
            var_col,
            num_model_vars: model.num_vars(),
        })
    }

    fn bounds_with(&self, overrides: &[(VarId, f64, f64)]) -> Option<(Vec<f64>, Vec<f64>)> {
        let mut lb = self.lb.clone();
        let mut ub = self.ub.clone();
        for &(v, l, u) in overrides {
            if l > u {
                return None;
            }
            let j = self.var_col[v];
            lb[j] = l;
            ub[j] = u;
        }
        Some((lb, ub))
    }

    fn extract(&self, st: &Tableau) -> Vec<f64> {
        let mut out = vec![0.0; self.num_model_vars];
        for j in 0..self.cols.len() {
            let x = st.value(j);
            match self.origin[j] {
                ColOrigin::Direct(v) => out[v] = x,
                ColOrigin::UpperShift(v) => out[v] = self.shift[j] - x,
                ColOrigin::SplitPos(v) => out[v] += x,
                ColOrigin::SplitNeg(v) => out[v] -= x,
                ColOrigin::Slack => {}
            }
        }
        out
    }

    /// Scratch two-phase primal solve under bound overrides.
    pub fn solve(&self, overrides: &[(VarId, f64, f64)]) -> Result<(RawStatus, Vec<f64>), SolveError> {
        Ok(match self.solve_capture(overrides, false)? {
            (status, values, _) => (status, values),
        })
    }

    /// Scratch solve that optionally captures the optimal basis for warm
    /// starts.
    pub fn solve_capture(
        &self,
        overrides: &[(VarId, f64, f64)],
        capture: bool,
    ) -> Result<(RawStatus, Vec<f64>, Option<WarmState>), SolveError> {
        let Some((lb, ub)) = self.bounds_with(overrides) else {
            return Ok((RawStatus::Infeasible, Vec::new(), None));
        };
        let mut st = Tableau::init(self, lb, ub);
        let status = st.optimize(self)?;
        match status {
            RawStatus::Optimal => {
                let values = self.extract(&st);
                let warm = capture.then(|| st.into_warm());
                Ok((RawStatus::Optimal, values, warm))
            }
            s => Ok((s, Vec::new(), None)),
        }
    }

    /// Dual-simplex re-solve from a previously optimal basis under
    /// tightened bounds, optionally capturing the new optimal basis.
    /// Falls back to the scratch primal if the dual path stalls.
    pub fn solve_warm(
        &self,
        warm: &WarmState,
        overrides: &[(VarId, f64, f64)],
        capture: bool,
    ) -> Result<(RawStatus, Vec<f64>, Option<WarmState>), SolveError> {
        let Some((lb, ub)) = self.bounds_with(overrides) else {
            return Ok((RawStatus::Infeasible, Vec::new(), None));
        };
        let mut st = Tableau::from_warm(self, warm, lb, ub);
        match st.dual_simplex(self) {
            Ok(RawStatus::Optimal) => {
                let values = self.extract(&st);
                let state = capture.then(|| st.into_warm());
                Ok((RawStatus::Optimal, values, state))
            }
            Ok(s) => Ok((s, Vec::new(), None)),
            Err(_) => self.solve_capture(overrides, capture), // deterministic fallback
        }
    }
}

struct Tableau<'a> {
    m: usize,
    nreal: usize,
    lb: Vec<f64>,
    ub: Vec<f64>,
    /// Artificial columns appended after the real ones: (row, coefficient).
    arts: Vec<(usize, f64)>,
    cost: Vec<f64>,
    basis: Vec<usize>,
    basis_pos: Vec<Option<usize>>,
    at_ub: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    /// Reduced costs maintained by the dual simplex (None on primal paths).
    red_cost: Option<Vec<f64>>,
    degen: usize,
    bland: bool,
    form_cols: &'a [SparseCol],
    form_rhs: &'a [f64],
}

/// Outcome of one dual-simplex step.
enum DualStep {
    Done,
    Pivoted,
    PrimalInfeasible,
    Stalled,
}

impl<'a> Tableau<'a> {
    fn init(form: &'a LpForm, lb: Vec<f64>, ub: Vec<f64>) -> Tableau<'a> {
        let m = form.m;
        let nreal = form.cols.len();
        let mut at_ub = vec![false; nreal];
        for j in 0..nreal {
            if !lb[j].is_finite() && ub[j].is_finite() {
                at_ub[j] = true;
            }
        }

        // Residuals with every real column nonbasic at its bound.
        let mut res = form.rhs.to_vec();
        for j in 0..nreal {
            let x = if at_ub[j] { ub[j] } else { lb[j] };
            if x != 0.0 {
                for &(r, a) in &form.cols[j] {
                    res[r as usize] -= a * x;
                }
            }
        }

        let mut basis = vec![0usize; m];
        let mut basis_pos = vec![None; nreal];
        let mut binv = vec![0.0; m * m];
        let mut xb = vec![0.0; m];
        let mut arts: Vec<(usize, f64)> = Vec::new();

        for r in 0..m {
            let sj = nreal - m + r; // slack of row r
            let coef = form.cols[sj][0].1;
            let v = res[r] / coef;
            if v >= lb[sj] - FEAS_TOL && v <= ub[sj] + FEAS_TOL {
                basis[r] = sj;
                basis_pos[sj] = Some(r);
                binv[r * m + r] = 1.0 / coef;
                xb[r] = v;
            } else {
                let acoef = if res[r] >= 0.0 { 1.0 } else { -1.0 };
                arts.push((r, acoef));
                let j = nreal + arts.len() - 1;
                basis[r] = j;
                binv[r * m + r] = acoef;
                xb[r] = res[r] * acoef;
            }
        }

        let ncols = nreal + arts.len();
        let mut full_lb = lb;
        let mut full_ub = ub;
        let mut cost = vec![0.0; ncols];
        full_lb.resize(ncols, 0.0);
        full_ub.resize(ncols, f64::INFINITY);
        let mut full_pos = basis_pos;
        full_pos.resize(ncols, None);
        for r in 0..m {
            if basis[r] >= nreal {
                full_pos[basis[r]] = Some(r);
                cost[basis[r]] = 1.0;
            }
        }
        let mut full_at_ub = at_ub;
        full_at_ub.resize(ncols, false);

        Tableau {
            m,
            nreal,
            lb: full_lb,
            ub: full_ub,
            arts,
            cost,
            basis,
            basis_pos: full_pos,
            at_ub: full_at_ub,
            binv,
            xb,
            red_cost: None,
            degen: 0,
            bland: false,
            form_cols: &form.cols,
            form_rhs: &form.rhs,
        }
    }

    fn from_warm(form: &'a LpForm, warm: &WarmState, lb: Vec<f64>, ub: Vec<f64>) -> Tableau<'a> {
        let nreal = form.cols.len();
        let ncols = nreal + warm.arts.len();
        let mut full_lb = lb;
        let mut full_ub = ub;
        full_lb.resize(ncols, 0.0);
        full_ub.resize(ncols, 0.0); // artificials stay fixed at zero
        let mut st = Tableau {
            m: form.m,
            nreal,
            lb: full_lb,
            ub: full_ub,
            arts: warm.arts.clone(),
            cost: {
                let mut c = form.cost.clone();
                c.resize(ncols, 0.0);
                c
            },
            basis: warm.basis.clone(),
            basis_pos: warm.basis_pos.clone(),
            at_ub: warm.at_ub.clone(),
            binv: warm.binv.clone(),
            xb: vec![0.0; form.m],
            red_cost: Some(warm.red_cost.clone()),
            degen: 0,
            bland: false,
            form_cols: &form.cols,
            form_rhs: &form.rhs,
        };
        st.refresh_xb();
        st
    }

    /// Consumes the tableau into a warm-start snapshot.
    fn into_warm(self) -> WarmState {
        let red_cost = match &self.red_cost {
            Some(d) => d.clone(),
            None => self.reduced_costs(),
        };
        WarmState {
            arts: self.arts,
            basis: self.basis,
            basis_pos: self.basis_pos,
            at_ub: self.at_ub,
            binv: self.binv,
            red_cost,
        }
    }

    fn ncols(&self) -> usize {
        self.nreal + self.arts.len()
    }

    fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.nreal {
            let mut s = 0.0;
            for &(r, a) in &self.form_cols[j] {
                s += y[r as usize] * a;
            }
            s
        } else {
            let (r, a) = self.arts[j - self.nreal];
            y[r] * a
        }
    }

    fn binv_col(&self, j: usize, out: &mut [f64]) {
        let m = self.m;
        for v in out.iter_mut() {
            *v = 0.0;
        }
        if j < self.nreal {
            for &(r, a) in &self.form_cols[j] {
                let r = r as usize;
                for p in 0..m {
                    out[p] += self.binv[p * m + r] * a;
                }
            }
        } else {
            let (r, a) = self.arts[j - self.nreal];
            for p in 0..m {
                out[p] = self.binv[p * m + r] * a;
            }
        }
    }

    fn value(&self, j: usize) -> f64 {
        if let Some(p) = self.basis_pos[j] {
            self.xb[p]
        } else if self.at_ub[j] {
            self.ub[j]
        } else {
            self.lb[j]
        }
    }

    fn refresh_xb(&mut self) {
        let m = self.m;
        let mut res = self.form_rhs.to_vec();
        for j in 0..self.ncols() {
            if self.basis_pos[j].is_none() {
                let x = if self.at_ub[j] { self.ub[j] } else { self.lb[j] };
                if x != 0.0 {
                    if j < self.nreal {
                        for &(r, a) in &self.form_cols[j] {
                            res[r as usize] -= a * x;
                        }
                    } else {
                        let (r, a) = self.arts[j - self.nreal];
                        res[r] -= a * x;
                    }
                }
            }
        }
        for p in 0..m {
            let row = &self.binv[p * m..(p + 1) * m];
            let mut s = 0.0;
            for r in 0..m {
                let v = res[r];
                if v != 0.0 {
                    s += row[r] * v;
                }
            }
            self.xb[p] = s;
        }
    }

    /// y = c_B' B^-1, then d_j = c_j - y a_j for every column.
    fn reduced_costs(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for p in 0..m {
            let c = self.cost[self.basis[p]];
            if c != 0.0 {
                let row = &self.binv[p * m..(p + 1) * m];
                for r in 0..m {
                    y[r] += c * row[r];
                }
            }
        }
        (0..self.ncols()).map(|j| self.cost[j] - self.col_dot(j, &y)).collect()
    }

    fn optimize(&mut self, form: &LpForm) -> Result<RawStatus, SolveError> {
        if !self.arts.is_empty() {
            match self.run()? {
                RawStatus::Optimal => {}
                RawStatus::Unbounded => {
                    return Err(SolveError::AuditFailed("phase 1 unbounded".into()))
                }
                s => return Ok(s),
            }
            let infeas: f64 = (0..self.ncols()).map(|j| self.cost[j] * self.value(j)).sum();
            let scale = 1.0 + form.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if infeas > FEAS_TOL * scale {
                return Ok(RawStatus::Infeasible);
            }
            self.drive_out_artificials();
            for j in self.nreal..self.ncols() {
                self.lb[j] = 0.0;
                self.ub[j] = 0.0;
                self.cost[j] = 0.0;
            }
            for (j, c) in form.cost.iter().enumerate() {
                self.cost[j] = *c;
            }
            self.refresh_xb();
            self.degen = 0;
            self.bland = false;
            self.run()
        } else {
            for (j, c) in form.cost.iter().enumerate() {
                self.cost[j] = *c;
            }
            self.run()
        }
    }

    fn drive_out_artificials(&mut self) {
        let mut w = vec![0.0; self.m];
        for p in 0..self.m {
            if self.basis[p] < self.nreal {
                continue;
            }
            let mut found = None;
            for j in 0..self.nreal {
                if self.basis_pos[j].is_some() {
                    continue;
                }
                self.binv_col(j, &mut w);
                if w[p].abs() > 1e-7 {
                    found = Some(j);
                    break;
                }
            }
            if let Some(j) = found {
                self.binv_col(j, &mut w);
                let leaving = self.basis[p];
                let entering_val = self.value(j);
                self.pivot(p, j, &w);
                self.basis_pos[leaving] = None;
                self.at_ub[leaving] = false;
                self.xb[p] = entering_val;
            }
            // otherwise the row is dependent; the artificial stays basic at 0
        }
    }

    fn pivot(&mut self, p: usize, q: usize, w: &[f64]) {
        let piv = w[p];
        let m = self.m;
        for r in 0..m {
            self.binv[p * m + r] /= piv;
        }
        let prow = self.binv[p * m..(p + 1) * m].to_vec();
        for i in 0..m {
            if i != p {
                let f = w[i];
                if f != 0.0 {
                    let row = &mut self.binv[i * m..(i + 1) * m];
                    for (r, pv) in prow.iter().enumerate() {
                        row[r] -= f * pv;
                    }
                }
            }
        }
        self.basis[p] = q;
        self.basis_pos[q] = Some(p);
    }

    fn run(&mut self) -> Result<RawStatus, SolveError> {
        let m = self.m;
        let mut y = vec![0.0; m];
        let mut w = vec![0.0; m];
        for iter in 0..MAX_ITERS {
            if iter > 0 && iter % 512 == 0 {
                self.refresh_xb();
            }
            for r in y.iter_mut() {
                *r = 0.0;
            }
            for p in 0..m {
                let c = self.cost[self.basis[p]];
                if c != 0.0 {
                    let row = &self.binv[p * m..(p + 1) * m];
                    for r in 0..m {
                        y[r] += c * row[r];
                    }
                }
            }
            let mut entering: Option<(usize, f64)> = None; // (j, score)
            for j in 0..self.ncols() {
                if self.basis_pos[j].is_some() || self.lb[j] >= self.ub[j] {
                    continue;
                }
                let d = self.cost[j] - self.col_dot(j, &y);
                let score = if !self.at_ub[j] && d < -OPT_TOL {
                    -d
                } else if self.at_ub[j] && d > OPT_TOL {
                    d
                } else {
                    continue;
                };
                if self.bland {
                    entering = Some((j, score));
                    break;
                }
                match entering {
                    Some((_, best)) if best >= score => {}
                    _ => entering = Some((j, score)),
                }
            }
            let Some((q, _)) = entering else {
                self.refresh_xb();
                return Ok(RawStatus::Optimal);
            };

            let sigma = if self.at_ub[q] { -1.0 } else { 1.0 };
            self.binv_col(q, &mut w);

            let own_range = self.ub[q] - self.lb[q];
            let mut best_t = f64::INFINITY;
            let mut leave: Option<(usize, bool, f64)> = None;
            for p in 0..m {
                let wp = sigma * w[p];
                let bj = self.basis[p];
                if wp > PIVOT_TOL {
                    if self.lb[bj].is_finite() {
                        let t = ((self.xb[p] - self.lb[bj]) / wp).max(0.0);
                        let replace = t < best_t - DEGEN_TOL
                            || (t < best_t + DEGEN_TOL
                                && leave.map_or(true, |(_, _, lw)| wp.abs() > lw + 1e-12));
                        if replace {
                            best_t = t.min(best_t);
                            leave = Some((p, false, wp.abs()));
                        }
                    }
                } else if wp < -PIVOT_TOL && self.ub[bj].is_finite() {
                    let t = ((self.xb[p] - self.ub[bj]) / wp).max(0.0);
                    let replace = t < best_t - DEGEN_TOL
                        || (t < best_t + DEGEN_TOL
                            && leave.map_or(true, |(_, _, lw)| wp.abs() > lw + 1e-12));
                    if replace {
                        best_t = t.min(best_t);
                        leave = Some((p, true, wp.abs()));
                    }
                }
            }

            let t = best_t.min(own_range);
            if !t.is_finite() {
                return Ok(RawStatus::Unbounded);
            }
            if t <= DEGEN_TOL {
                self.degen += 1;
                if self.degen > BLAND_TRIGGER {
                    self.bland = true;
                }
            }

            for p in 0..m {
                self.xb[p] -= sigma * t * w[p];
            }

            if own_range <= best_t {
                self.at_ub[q] = !self.at_ub[q];
                continue;
            }
            let (p, to_ub, _) = leave.expect("bounded step has a leaving row");
            let leaving = self.basis[p];
            let enter_val = if self.at_ub[q] { self.ub[q] } else { self.lb[q] } + sigma * t;
            self.pivot(p, q, &w);
            self.basis_pos[leaving] = None;
            self.at_ub[leaving] = to_ub;
            self.xb[p] = enter_val;
        }
        Err(SolveError::IterationLimit(MAX_ITERS))
    }

    /// Dual simplex from a dual-feasible basis. Maintains reduced costs
    /// incrementally; errors trigger the caller's scratch fallback.
    fn dual_simplex(&mut self, _form: &LpForm) -> Result<RawStatus, SolveError> {
        let mut d = match self.red_cost.take() {
            Some(d) => d,
            None => self.reduced_costs(),
        };
        let mut rho = vec![0.0; self.m];
        let mut alpha = vec![0.0; self.ncols()];
        let mut w = vec![0.0; self.m];
        for iter in 0..DUAL_MAX_ITERS {
            if iter > 0 && iter % 64 == 0 {
                // keep the reduced costs honest
                d = self.reduced_costs();
            }
            match self.dual_step(&mut d, &mut rho, &mut alpha, &mut w) {
                DualStep::Done => {
                    // Inherited reduced costs can drift across warm-start
                    // generations; verify dual feasibility before trusting
                    // the basis, else finish with primal pivots.
                    let fresh = self.reduced_costs();
                    let dual_ok = (0..self.ncols()).all(|j| {
                        if self.basis_pos[j].is_some() || self.lb[j] >= self.ub[j] {
                            return true;
                        }
                        if self.at_ub[j] {
                            fresh[j] <= 1e-7
                        } else {
                            fresh[j] >= -1e-7
                        }
                    });
                    if dual_ok {
                        self.red_cost = Some(fresh);
                        return Ok(RawStatus::Optimal);
                    }
                    self.red_cost = None;
                    let status = self.run()?;
                    if status == RawStatus::Optimal {
                        self.red_cost = Some(self.reduced_costs());
                    }
                    return Ok(status);
                }
                DualStep::PrimalInfeasible => return Ok(RawStatus::Infeasible),
                DualStep::Pivoted => {}
                DualStep::Stalled => {
                    return Err(SolveError::IterationLimit(iter));
                }
            }
        }
        Err(SolveError::IterationLimit(DUAL_MAX_ITERS))
    }

    fn dual_step(
        &mut self,
        d: &mut [f64],
        rho: &mut [f64],
        alpha: &mut [f64],
        w: &mut [f64],
    ) -> DualStep {
        let m = self.m;
        // Leaving: the basic variable with the largest bound violation.
        let mut leave: Option<(usize, bool, f64)> = None; // (row, below, violation)
        for p in 0..m {
            let bj = self.basis[p];
            let x = self.xb[p];
            let below = self.lb[bj] - x;
            let above = x - self.ub[bj];
            let (viol, is_below) = if below >= above { (below, true) } else { (above, false) };
            if viol > FEAS_TOL {
                match leave {
                    Some((_, _, best)) if best >= viol => {}
                    _ => leave = Some((p, is_below, viol)),
                }
            }
        }
        let Some((p, below, _)) = leave else {
            return DualStep::Done;
        };

        // Row p of B^-1, then alpha_j for every nonbasic column.
        rho.copy_from_slice(&self.binv[p * m..(p + 1) * m]);
        for (j, a) in alpha.iter_mut().enumerate().take(self.ncols()) {
            *a = if self.basis_pos[j].is_some() { 0.0 } else { self.col_dot(j, rho) };
        }

        // Entering: dual ratio test. Moving x_B[p] toward its violated
        // bound needs alpha with the right sign per nonbasic status.
        let mut enter: Option<(usize, f64, f64)> = None; // (j, ratio, |alpha|)
        for j in 0..self.ncols() {
            if self.basis_pos[j].is_some() || self.lb[j] >= self.ub[j] {
                continue;
            }
            let a = alpha[j];
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let usable = if below {
                // x_B[p] must increase: delta x_j and alpha must oppose
                (!self.at_ub[j] && a < 0.0) || (self.at_ub[j] && a > 0.0)
            } else {
                (!self.at_ub[j] && a > 0.0) || (self.at_ub[j] && a < 0.0)
            };
            if !usable {
                continue;
            }
            let ratio = (d[j] / a).abs();
            let better = match enter {
                None => true,
                Some((_, best, ba)) => {
                    ratio < best - 1e-12 || (ratio < best + 1e-12 && a.abs() > ba + 1e-12)
                }
            };
            if better {
                enter = Some((j, ratio, a.abs()));
            }
        }
        let Some((q, _, _)) = enter else {
            // No entering column can repair the violation: primal infeasible.
            return DualStep::PrimalInfeasible;
        };

        // Primal step: leaving lands exactly on its violated bound.
        let target = if below { self.lb[self.basis[p]] } else { self.ub[self.basis[p]] };
        self.binv_col(q, w);
        if w[p].abs() <= PIVOT_TOL {
            return DualStep::Stalled;
        }
        let t = (self.xb[p] - target) / w[p];
        let enter_old = self.value(q);
        for i in 0..m {
            self.xb[i] -= t * w[i];
        }
        // Reduced-cost update: d_j -= (d_q/alpha_q) alpha_j; leaving gets -d_q/alpha_q.
        let dual_step = d[q] / alpha[q];
        for j in 0..self.ncols() {
            if self.basis_pos[j].is_none() && alpha[j] != 0.0 {
                d[j] -= dual_step * alpha[j];
            }
        }
        let leaving = self.basis[p];
        self.pivot(p, q, w);
        self.basis_pos[leaving] = None;
        self.at_ub[leaving] = !below;
        d[leaving] = -dual_step;
        d[q] = 0.0;
        self.xb[p] = enter_old + t;
        DualStep::Pivoted
    }
}

/// Solves the LP relaxation of `model` (integrality ignored).
pub fn solve_lp(model: &MilpModel) -> Result<SolveResult, SolveError> {
    let start = Instant::now();
    let form = LpForm::build(model)?;
    let (status, values) = form.solve(&[])?;
    let result = match status {
        RawStatus::Optimal => {
            audit(model, &values, false)?;
            let obj = objective_value(model, &values);
            SolveResult {
                status: SolveStatus::Optimal,
                values,
                objective: obj,
                bound: obj,
                nodes: 1,
                elapsed_ms: start.elapsed().as_millis(),
            }
        }
        RawStatus::Infeasible => SolveResult {
            status: SolveStatus::Infeasible,
            values: Vec::new(),
            objective: f64::NAN,
            bound: f64::NAN,
            nodes: 1,
            elapsed_ms: start.elapsed().as_millis(),
        },
        RawStatus::Unbounded => SolveResult {
            status: SolveStatus::Unbounded,
            values: Vec::new(),
            objective: f64::NAN,
            bound: f64::NAN,
            nodes: 1,
            elapsed_ms: start.elapsed().as_millis(),
        },
    };
    Ok(result)
}

/// LP solve for branch and bound with optional warm start; captures the
/// node's optimal basis for its children.
pub(crate) fn solve_relaxation(
    form: &LpForm,
    model: &MilpModel,
    warm: Option<&WarmState>,
    overrides: &[(VarId, f64, f64)],
) -> Result<(RawStatus, Vec<f64>, f64, Option<WarmState>), SolveError> {
    let (status, values, state) = match warm {
        Some(w) => form.solve_warm(w, overrides, true)?,
        None => form.solve_capture(overrides, true)?,
    };
    let obj = if status == RawStatus::Optimal {
        // guard the warm path: a violated point means the dual solve lied
        if super::max_violation(model, &values) > 1e-6 {
            let (s2, v2, st2) = form.solve_capture(overrides, true)?;
            let obj = if s2 == RawStatus::Optimal { objective_value(model, &v2) } else { f64::NAN };
            return Ok((s2, v2, obj, st2));
        }
        objective_value(model, &values)
    } else {
        f64::NAN
    };
    Ok((status, values, obj, state))
}

/// Root solve capturing the warm-start state.
pub(crate) fn solve_root(
    form: &LpForm,
    model: &MilpModel,
) -> Result<(RawStatus, Vec<f64>, f64, Option<WarmState>), SolveError> {
    let (status, values, warm) = form.solve_capture(&[], true)?;
    let obj = if status == RawStatus::Optimal { objective_value(model, &values) } else { f64::NAN };
    Ok((status, values, obj, warm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConTag, ObjSense, VarKind, VarTag};

    fn lp(sense: ObjSense) -> MilpModel {
        let mut m = MilpModel::new("lp");
        m.objective.sense = sense;
        m
    }

    #[test]
    fn tiny_budget_lp() {
        // max 3u1 + 2u2 s.t. u1 + u2 <= 1, 0 <= u <= 1  ->  3
        let mut m = lp(ObjSense::Max);
        let u1 = m.add_variable("u1", 0.0, 1.0, VarKind::Continuous, VarTag::Uncertainty).unwrap();
        let u2 = m.add_variable("u2", 0.0, 1.0, VarKind::Continuous, VarTag::Uncertainty).unwrap();
        m.add_linear_constraint(vec![(u1, 1.0), (u2, 1.0)], Sense::Le, 1.0, ConTag::UncertaintySet)
            .unwrap();
        m.objective.lin_terms = vec![(u1, 3.0), (u2, 2.0)];
        let r = solve_lp(&m).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 3.0).abs() < 1e-9);
        assert!((r.values[u1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_row_detected() {
        let mut m = lp(ObjSense::Min);
        let x = m.add_variable("x", 0.0, 1.0, VarKind::Continuous, VarTag::Decision).unwrap();
        m.add_linear_constraint(vec![(x, 0.0)], Sense::Le, -1.0, ConTag::Structural).unwrap();
        let r = solve_lp(&m).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let mut m = lp(ObjSense::Max);
        let x = m
            .add_variable("x", 0.0, f64::INFINITY, VarKind::Continuous, VarTag::Decision)
            .unwrap();
        m.objective.lin_terms = vec![(x, 1.0)];
        let r = solve_lp(&m).unwrap();
        assert_eq!(r.status, SolveStatus::Unbounded);
    }

    #[test]
    fn equality_and_free_variable() {
        let mut m = lp(ObjSense::Min);
        let x = m
            .add_variable("x", f64::NEG_INFINITY, f64::INFINITY, VarKind::Continuous, VarTag::Decision)
            .unwrap();
        let y = m.add_variable("y", 0.0, 1.0, VarKind::Continuous, VarTag::Decision).unwrap();
        m.add_linear_constraint(vec![(x, 1.0), (y, 1.0)], Sense::Eq, 2.0, ConTag::Structural)
            .unwrap();
        m.objective.lin_terms = vec![(x, 1.0), (y, 1.0)];
        let r = solve_lp(&m).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 2.0).abs() < 1e-8);
    }

    #[test]
    fn negative_lower_bounds_and_ge_rows() {
        let mut m = lp(ObjSense::Min);
        let a = m
            .add_variable("a", -1.0, f64::INFINITY, VarKind::Continuous, VarTag::Decision)
            .unwrap();
        let b = m.add_variable("b", 0.0, 10.0, VarKind::Continuous, VarTag::Decision).unwrap();
        m.add_linear_constraint(vec![(a, 1.0), (b, 1.0)], Sense::Ge, 1.0, ConTag::Structural)
            .unwrap();
        m.objective.lin_terms = vec![(a, 2.0), (b, 1.0)];
        let r = solve_lp(&m).unwrap();
        assert!((r.objective - 0.0).abs() < 1e-8, "got {}", r.objective);
    }

    #[test]
    fn rejects_quadratic_content() {
        let mut m = lp(ObjSense::Min);
        let x = m.add_variable("x", 0.0, 1.0, VarKind::Continuous, VarTag::Decision).unwrap();
        m.objective.quad_terms.push((x, x, 1.0));
        assert!(matches!(solve_lp(&m), Err(SolveError::QuadraticContent)));
    }

    #[test]
    fn warm_dual_matches_scratch_under_bound_changes() {
        // randomized LPs: solve root, then re-solve with random binary
        // fixings both warm and scratch; objectives must agree.
        let mut rng = crate::instgen::Rng::new(77);
        for _ in 0..60 {
            let n = rng.uniform_int(3, 8) as usize;
            let rows = rng.uniform_int(2, 6) as usize;
            let mut m = lp(ObjSense::Min);
            let vars: Vec<usize> = (0..n)
                .map(|i| {
                    m.add_variable(format!("v{i}"), 0.0, 1.0, VarKind::Continuous, VarTag::Decision)
                        .unwrap()
                })
                .collect();
            for _ in 0..rows {
                let terms: Vec<(usize, f64)> =
                    vars.iter().map(|&v| (v, rng.uniform_real(-2.0, 4.0))).collect();
                let rhs = rng.uniform_real(0.5, 4.0);
                let sense = if rng.uniform_int(0, 1) == 0 { Sense::Le } else { Sense::Ge };
                m.add_linear_constraint(terms, sense, rhs, ConTag::Structural).unwrap();
            }
            m.objective.lin_terms = vars.iter().map(|&v| (v, rng.uniform_real(-3.0, 3.0))).collect();
            let form = LpForm::build(&m).unwrap();
            let (status, _, _, warm) = solve_root(&form, &m).unwrap();
            if status != RawStatus::Optimal {
                continue;
            }
            let warm = warm.unwrap();
            for _ in 0..10 {
                let mut overrides: Vec<(usize, f64, f64)> = Vec::new();
                for &v in &vars {
                    if rng.uniform_int(0, 2) == 0 {
                        let b = rng.uniform_int(0, 1) as f64;
                        overrides.push((v, b, b));
                    }
                }
                let (s1, v1, _) = form.solve_warm(&warm, &overrides, false).unwrap();
                let (s2, v2) = form.solve(&overrides).unwrap();
                assert_eq!(s1, s2, "status mismatch");
                if s1 == RawStatus::Optimal {
                    let o1 = objective_value(&m, &v1);
                    let o2 = objective_value(&m, &v2);
                    assert!((o1 - o2).abs() < 1e-7, "warm {o1} scratch {o2}");
                }
            }
        }
    }
}
