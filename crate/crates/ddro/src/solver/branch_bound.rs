//! Best-first branch and bound on integer variables.
//!
//! Branching picks the most fractional integer variable (ties: smallest
//! id); nodes are explored in order of parent relaxation bound, with ties
//! broken toward the most recently created node (dives on bound plateaus
//! reach incumbents early). Node relaxations are warm-started from the
//! root basis by the dual simplex. Identical inputs give identical trees
//! and node counts. No cuts, no presolve.

use super::simplex::{solve_relaxation, solve_root, LpForm, RawStatus};
use super::{audit, SolveError, SolveResult, SolveStatus, INT_TOL};
use crate::model::{MilpModel, ObjSense, VarId, VarKind};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct MilpConfig {
    pub node_limit: u64,
    pub time_limit: Option<Duration>,
    /// Absolute optimality gap.
    pub gap_abs: f64,
}

impl Default for MilpConfig {
    fn default() -> Self {
        MilpConfig {
            node_limit: 1_000_000,
            time_limit: None,
            gap_abs: 1e-6,
        }
    }
}

struct NodeData {
    parent: usize,
    branch: Option<(VarId, f64, f64)>,
}

/// Heap entry ordered so that the smallest bound pops first. Bounds are
/// compared on a fine quantization grid so that numerically equal bounds
/// tie (floating-point noise would otherwise break every tie); among tied
/// bounds the newest node pops first, which dives on bound plateaus.
struct HeapItem {
    key_q: i64,
    key: f64,
    id: usize,
}

impl HeapItem {
    fn new(key: f64, id: usize) -> HeapItem {
        let key_q = if key.is_finite() { (key * 1e8).round() as i64 } else { i64::MIN };
        HeapItem { key_q, key, id }
    }
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.key_q == other.key_q && self.id == other.id
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert so the best bound pops first.
        other.key_q.cmp(&self.key_q).then_with(|| self.id.cmp(&other.id))
    }
}

pub fn solve_milp(model: &MilpModel, config: &MilpConfig) -> Result<SolveResult, SolveError> {
    let start = Instant::now();
    let form = LpForm::build(model)?;
    let scale = if model.objective.sense == ObjSense::Max { -1.0 } else { 1.0 };

    let int_vars: Vec<VarId> = model
        .variables
        .iter()
        .filter(|v| matches!(v.kind, VarKind::Binary | VarKind::Integer))
        .map(|v| v.id)
        .collect();
    for &v in &int_vars {
        let var = &model.variables[v];
        if !var.lb.is_finite() || !var.ub.is_finite() {
            return Err(SolveError::UnboundedInteger(v));
        }
    }

    let mut arena = vec![NodeData { parent: usize::MAX, branch: None }];
    let mut heap = BinaryHeap::new();
    heap.push(HeapItem::new(f64::NEG_INFINITY, 0));

    let mut incumbent: Option<(f64, Vec<f64>)> = None; // scaled objective
    let mut nodes: u64 = 0;
    let mut status = SolveStatus::Optimal;
    let mut best_open = f64::NAN;
    let mut root_warm = None;
    // Bases of recently solved nodes: a popped node whose parent is still
    // in the ring warm-starts from it in a couple of dual pivots instead
    // of replaying the whole bound path from the root (covers both
    // dive-children and siblings).
    const WARM_RING: usize = 16;
    let mut recent: VecDeque<(usize, super::simplex::WarmState)> = VecDeque::new();

    while let Some(item) = heap.peek() {
        if let Some((inc, _)) = &incumbent {
            if item.key >= inc - config.gap_abs {
                break; // every open node is within the gap
            }
        }
        if nodes >= config.node_limit {
            status = SolveStatus::NodeLimit;
            best_open = item.key;
            break;
        }
        if let Some(limit) = config.time_limit {
            if start.elapsed() >= limit {
                status = SolveStatus::TimeLimit;
                best_open = item.key;
                break;
            }
        }
        let item = heap.pop().expect("peeked");
        nodes += 1;

        // Collect bound overrides along the ancestor chain (leaf-most wins,
        // which is the tightest since branching only tightens).
        let mut overrides: Vec<(VarId, f64, f64)> = Vec::new();
        let mut cur = item.id;
        while cur != usize::MAX {
            if let Some((v, l, u)) = arena[cur].branch {
                if !overrides.iter().any(|&(w, _, _)| w == v) {
                    overrides.push((v, l, u));
                }
            }
            cur = arena[cur].parent;
        }

        let (lp_status, values, obj) = if item.id == 0 {
            let (s, v, o, w) = solve_root(&form, model)?;
            root_warm = w;
            (s, v, o)
        } else {
            let parent = arena[item.id].parent;
            let warm = recent
                .iter()
                .find(|(id, _)| *id == parent)
                .map(|(_, w)| w)
                .or(root_warm.as_ref());
            let (s, v, o, captured) = solve_relaxation(&form, model, warm, &overrides)?;
            if let Some(w) = captured {
                if recent.len() == WARM_RING {
                    recent.pop_front();
                }
                recent.push_back((item.id, w));
            }
            (s, v, o)
        };
        match lp_status {
            RawStatus::Infeasible => continue,
            RawStatus::Unbounded => {
                if item.id == 0 {
                    return Ok(SolveResult {
                        status: SolveStatus::Unbounded,
                        values: Vec::new(),
                        objective: f64::NAN,
                        bound: f64::NAN,
                        nodes,
                        elapsed_ms: start.elapsed().as_millis(),
                    });
                }
                continue;
            }
            RawStatus::Optimal => {}
        }
        let z = scale * obj;
        if let Some((inc, _)) = &incumbent {
            if z >= inc - config.gap_abs {
                continue;
            }
        }

        // Most fractional integer variable, ties by smallest id.
        let mut branch_var: Option<(VarId, f64, f64)> = None; // (id, value, score)
        for &v in &int_vars {
            let x = values[v];
            let frac = x - x.floor();
            let dist = frac.min(1.0 - frac);
            if dist > INT_TOL {
                match branch_var {
                    Some((_, _, best)) if best >= dist => {}
                    _ => branch_var = Some((v, x, dist)),
                }
            }
        }

        match branch_var {
            None => {
                incumbent = Some((z, values));
            }
            Some((v, x, _)) => {
                for (l, u) in [
                    (model.variables[v].lb, x.floor()),
                    (x.floor() + 1.0, model.variables[v].ub),
                ] {
                    let id = arena.len();
                    arena.push(NodeData { parent: item.id, branch: Some((v, l, u)) });
                    heap.push(HeapItem::new(z, id));
                }
            }
        }
    }

    if status == SolveStatus::Optimal {
        best_open = match (heap.peek(), &incumbent) {
            (Some(top), Some((inc, _))) => top.key.min(*inc),
            (Some(top), None) => top.key,
            (None, Some((inc, _))) => *inc,
            (None, None) => f64::NAN,
        };
    }

    let elapsed_ms = start.elapsed().as_millis();
    match incumbent {
        Some((z, values)) => {
            audit(model, &values, true)?;
            Ok(SolveResult {
                status,
                objective: scale * z,
                bound: scale * best_open.min(z),
                values,
                nodes,
                elapsed_ms,
            })
        }
        None => Ok(SolveResult {
            status: if status == SolveStatus::Optimal { SolveStatus::Infeasible } else { status },
            values: Vec::new(),
            objective: f64::NAN,
            bound: if best_open.is_nan() { f64::NAN } else { scale * best_open },
            nodes,
            elapsed_ms,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConTag, Sense, VarTag};

    #[test]
    fn pure_lp_takes_one_node() {
        let mut m = MilpModel::new("lp");
        let x = m.add_variable("x", 0.0, 2.5, VarKind::Continuous, VarTag::Decision).unwrap();
        m.objective.sense = ObjSense::Max;
        m.objective.lin_terms = vec![(x, 1.0)];
        let r = solve_milp(&m, &MilpConfig::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.nodes, 1);
        assert!((r.objective - 2.5).abs() < 1e-9);
    }

    #[test]
    fn small_knapsack_matches_enumeration() {
        // max 10a + 6b s.t. 5a + 3b <= 4, binary -> 6
        let mut m = MilpModel::new("kp");
        let a = m.add_variable("a", 0.0, 1.0, VarKind::Binary, VarTag::Decision).unwrap();
        let b = m.add_variable("b", 0.0, 1.0, VarKind::Binary, VarTag::Decision).unwrap();
        m.add_linear_constraint(vec![(a, 5.0), (b, 3.0)], Sense::Le, 4.0, ConTag::Structural)
            .unwrap();
        m.objective.sense = ObjSense::Max;
        m.objective.lin_terms = vec![(a, 10.0), (b, 6.0)];
        let r = solve_milp(&m, &MilpConfig::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 6.0).abs() < 1e-9);
        assert!((r.values[a]).abs() < 1e-6);
        assert!((r.values[b] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_integer_model() {
        let mut m = MilpModel::new("inf");
        let a = m.add_variable("a", 0.0, 1.0, VarKind::Binary, VarTag::Decision).unwrap();
        m.add_linear_constraint(vec![(a, 2.0)], Sense::Ge, 3.0, ConTag::Structural).unwrap();
        let r = solve_milp(&m, &MilpConfig::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
    }

    #[test]
    fn determinism_including_node_count() {
        let mut m = MilpModel::new("det");
        let n = 12;
        let mut terms = Vec::new();
        let mut obj = Vec::new();
        for i in 0..n {
            let v = m
                .add_variable(format!("x{i}"), 0.0, 1.0, VarKind::Binary, VarTag::Decision)
                .unwrap();
            terms.push((v, 3.0 + (i as f64 * 7.0) % 11.0));
            obj.push((v, 5.0 + (i as f64 * 13.0) % 17.0));
        }
        m.add_linear_constraint(terms, Sense::Le, 31.0, ConTag::Structural).unwrap();
        m.objective.sense = ObjSense::Max;
        m.objective.lin_terms = obj;
        let a = solve_milp(&m, &MilpConfig::default()).unwrap();
        let b = solve_milp(&m, &MilpConfig::default()).unwrap();
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.values, b.values);
    }
}
