//! Independent reference implementations used by the test suites to
//! cross-check the model/reformulation/solver pipeline. Everything here
//! deliberately avoids the MILP path: plain graph algorithms, dynamic
//! programs, and exhaustive enumeration at desk scale.

use crate::problems::{KpInstance, KpUncertainty, SpInstance};
use crate::uncertainty::{worst_case_budgeted_greedy, worst_case_knapsack_ratio_greedy};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Dijkstra on nonnegative arc costs; `None` when the target is
/// unreachable.
pub fn dijkstra(
    nodes: usize,
    arcs: &[(usize, usize)],
    costs: &[f64],
    source: usize,
    target: usize,
) -> Option<f64> {
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nodes];
    for (a, &(u, v)) in arcs.iter().enumerate() {
        adj[u].push((v, costs[a]));
    }
    #[derive(PartialEq)]
    struct Entry(f64, usize);
    impl Eq for Entry {}
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> Ordering {
            other.0.partial_cmp(&self.0).unwrap_or(Ordering::Equal)
        }
    }
    let mut dist = vec![f64::INFINITY; nodes];
    dist[source] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Entry(0.0, source));
    while let Some(Entry(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        if u == target {
            return Some(d);
        }
        for &(v, c) in &adj[u] {
            let nd = d + c;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Entry(nd, v));
            }
        }
    }
    None
}

/// 0/1 knapsack value by a table over the integer capacity (weights must
/// be nonnegative; fractional weights fall back to full enumeration, so
/// keep `n` small in that case).
pub fn knapsack_best_value(weights: &[f64], capacity: f64, values: &[f64]) -> f64 {
    let n = weights.len();
    if capacity < 0.0 {
        return 0.0;
    }
    if weights.iter().all(|w| w.fract() == 0.0) && capacity.floor() <= 5e6 {
        let cap = capacity.floor() as usize;
        let mut dp = vec![0.0f64; cap + 1];
        for i in 0..n {
            let w = weights[i] as usize;
            let v = values[i];
            if v <= 0.0 {
                continue;
            }
            for c in (w..=cap).rev() {
                let cand = dp[c - w] + v;
                if cand > dp[c] {
                    dp[c] = cand;
                }
            }
        }
        dp[cap]
    } else {
        assert!(n <= 25, "enumeration oracle limited to 25 items");
        let mut best = 0.0f64;
        for mask in 0u32..(1u32 << n) {
            let mut w = 0.0;
            let mut v = 0.0;
            for i in 0..n {
                if mask >> i & 1 == 1 {
                    w += weights[i];
                    v += values[i];
                }
            }
            if w <= capacity && v > best {
                best = v;
            }
        }
        best
    }
}

/// Calls `visit` with the arc indices of every simple source-target path.
pub fn enumerate_simple_paths<F: FnMut(&[usize])>(
    nodes: usize,
    arcs: &[(usize, usize)],
    source: usize,
    target: usize,
    visit: &mut F,
) {
    let mut out: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nodes]; // (arc idx, head)
    for (a, &(u, v)) in arcs.iter().enumerate() {
        out[u].push((a, v));
    }
    let mut visited = vec![false; nodes];
    let mut stack: Vec<usize> = Vec::new();
    fn dfs<F: FnMut(&[usize])>(
        u: usize,
        target: usize,
        out: &[Vec<(usize, usize)>],
        visited: &mut Vec<bool>,
        stack: &mut Vec<usize>,
        visit: &mut F,
    ) {
        if u == target {
            visit(stack);
            return;
        }
        visited[u] = true;
        for &(a, v) in &out[u] {
            if !visited[v] {
                stack.push(a);
                dfs(v, target, out, visited, stack, visit);
                stack.pop();
            }
        }
        visited[u] = false;
    }
    dfs(source, target, &out, &mut visited, &mut stack, visit);
}

/// Exact robust optimum of the budgeted shortest path by enumerating
/// simple paths and hedging subsets on the path (hedging off the path is
/// dominated). `None` when no path exists.
pub fn robust_sp_brute_force(inst: &SpInstance) -> Option<f64> {
    assert!(inst.discrete.is_none(), "budgeted variant only");
    let mut best: Option<f64> = None;
    enumerate_simple_paths(inst.nodes, &inst.arcs, inst.source, inst.target, &mut |path| {
        let len = path.len();
        let nominal: f64 = path.iter().map(|&a| inst.d_bar[a]).sum();
        // Greedy order by deviation is independent of the hedge choice.
        let mut order: Vec<usize> = path.to_vec();
        order.sort_by(|&a, &b| inst.d_hat[b].partial_cmp(&inst.d_hat[a]).unwrap().then(a.cmp(&b)));
        for mask in 0u32..(1u32 << len) {
            let mut hedge_cost = 0.0;
            for (k, &a) in path.iter().enumerate() {
                if mask >> k & 1 == 1 {
                    hedge_cost += inst.hedging_cost[a];
                }
            }
            let mut remaining = inst.budget as f64;
            let mut worst = 0.0;
            for &a in &order {
                if remaining <= 0.0 {
                    break;
                }
                let k = path.iter().position(|&p| p == a).unwrap();
                let cap = if mask >> k & 1 == 1 { 1.0 - inst.gamma[a] } else { 1.0 };
                let take = cap.min(remaining);
                worst += inst.d_hat[a] * take;
                remaining -= take;
            }
            let total = nominal + hedge_cost + worst;
            if best.map_or(true, |b| total < b) {
                best = Some(total);
            }
        }
    });
    best
}

/// Exact robust optimum of the budgeted knapsack by enumerating item
/// choices and hedging subsets of the chosen items (hedging an unchosen
/// item only costs).
pub fn robust_kp_budgeted_brute_force(inst: &KpInstance) -> f64 {
    let KpUncertainty::Budgeted { hedging_cost, budget, gamma } = &inst.uncertainty else {
        panic!("budgeted variant only");
    };
    let n = inst.n;
    assert!(n <= 16, "joint enumeration limited to 16 items");
    let mut best = f64::NEG_INFINITY;
    for x_mask in 0u32..(1u32 << n) {
        let mut value = 0.0;
        let mut nominal = 0.0;
        for i in 0..n {
            if x_mask >> i & 1 == 1 {
                value += inst.values[i];
                nominal += inst.a_bar[i];
            }
        }
        // y over sub-masks of x (plus empty), cheapest feasible.
        let mut y_mask = x_mask;
        loop {
            let mut hedge = 0.0;
            let mut caps = Vec::with_capacity(n);
            let mut coeffs = Vec::with_capacity(n);
            for i in 0..n {
                let hedged = y_mask >> i & 1 == 1;
                if hedged {
                    hedge += hedging_cost[i];
                }
                caps.push(if hedged { 1.0 - gamma[i] } else { 1.0 });
                coeffs.push(if x_mask >> i & 1 == 1 { inst.a_hat[i] } else { 0.0 });
            }
            let dev = worst_case_budgeted_greedy(*budget as f64, &caps, &coeffs);
            if nominal + dev <= inst.capacity + 1e-9 {
                let total = value - hedge;
                if total > best {
                    best = total;
                }
            }
            if y_mask == 0 {
                break;
            }
            y_mask = (y_mask - 1) & x_mask;
        }
    }
    best.max(0.0)
}

/// Exact robust optimum of the continuous-knapsack-uncertainty knapsack by
/// enumerating item choices; the worst case is the ratio greedy.
pub fn robust_kp_contknap_brute_force(inst: &KpInstance) -> f64 {
    let KpUncertainty::Knapsack { f, b, w, discrete } = &inst.uncertainty else {
        panic!("knapsack variant only");
    };
    assert!(!discrete, "continuous variant only");
    let n = inst.n;
    assert!(n <= 20, "enumeration limited to 20 items");
    let mut best = f64::NEG_INFINITY;
    for x_mask in 0u32..(1u32 << n) {
        let mut value = 0.0;
        let mut nominal = 0.0;
        let mut cap = *b;
        let mut coeffs = vec![0.0; n];
        for i in 0..n {
            if x_mask >> i & 1 == 1 {
                value += inst.values[i];
                nominal += inst.a_bar[i];
                coeffs[i] = inst.a_hat[i];
                cap -= w[i];
            }
        }
        if cap < -1e-12 {
            continue;
        }
        let dev = worst_case_knapsack_ratio_greedy(f, cap, &coeffs);
        if nominal + dev <= inst.capacity + 1e-9 {
            if value > best {
                best = value;
            }
        }
    }
    best.max(0.0)
}

/// Worst case over `{0<=u<=1, f'u<=cap}` by enumerating candidate extreme
/// points (binary supports plus at most one fractional coordinate).
/// Exponential in `n`; intended for n <= 12 cross-checks.
pub fn contknap_vertex_enumeration(f: &[f64], cap: f64, coeffs: &[f64]) -> f64 {
    let n = f.len();
    assert!(n <= 16);
    if cap < 0.0 {
        return f64::NEG_INFINITY;
    }
    let mut best = 0.0f64;
    for mask in 0u32..(1u32 << n) {
        let mut weight = 0.0;
        let mut value = 0.0;
        for i in 0..n {
            if mask >> i & 1 == 1 {
                weight += f[i];
                value += coeffs[i];
            }
        }
        if weight <= cap {
            if value > best {
                best = value;
            }
            // try topping up each unchosen coordinate fractionally
            for j in 0..n {
                if mask >> j & 1 == 0 && f[j] > 0.0 {
                    let u = ((cap - weight) / f[j]).min(1.0);
                    let v = value + coeffs[j] * u;
                    if v > best {
                        best = v;
                    }
                }
            }
        }
    }
    best
}

/// Exact optimistic bilevel optimum of the discrete-uncertainty shortest
/// path by joint enumeration over hedging masks, routing masks (checked
/// against flow conservation), and follower masks.
pub fn sp_discrete_joint_brute_force(inst: &SpInstance) -> Option<f64> {
    let d = inst.discrete.as_ref().expect("discrete payload");
    let m = inst.num_arcs();
    assert!(2 * m <= 26, "joint enumeration limited to 13 arcs");
    let mut best: Option<f64> = None;
    for y_mask in 0u32..(1u32 << m) {
        let y: Vec<f64> = (0..m).map(|a| (y_mask >> a & 1) as f64).collect();
        if !flow_ok(inst, &y) {
            continue;
        }
        let nominal: f64 = (0..m).filter(|a| y_mask >> a & 1 == 1).map(|a| inst.d_bar[a]).sum();
        for x_mask in 0u32..(1u32 << m) {
            let hedge: f64 =
                (0..m).filter(|a| x_mask >> a & 1 == 1).map(|a| inst.hedging_cost[a]).sum();
            let cap =
                d.b - (0..m).filter(|a| x_mask >> a & 1 == 1).map(|a| d.w[a]).sum::<f64>();
            let mut follower_best = f64::NEG_INFINITY;
            for u_mask in 0u32..(1u32 << m) {
                let weight: f64 =
                    (0..m).filter(|a| u_mask >> a & 1 == 1).map(|a| d.f[a]).sum();
                if weight > cap + 1e-12 {
                    continue;
                }
                let v: f64 = (0..m)
                    .filter(|a| u_mask >> a & 1 == 1 && y_mask >> *a & 1 == 1)
                    .map(|a| inst.d_hat[a])
                    .sum();
                if v > follower_best {
                    follower_best = v;
                }
            }
            if follower_best == f64::NEG_INFINITY {
                continue; // adversary has no feasible move (cap < 0): leader point invalid
            }
            let total = hedge + nominal + follower_best;
            if best.map_or(true, |b| total < b) {
                best = Some(total);
            }
        }
    }
    best
}

/// Exact optimistic bilevel optimum of the discrete-uncertainty knapsack
/// by joint enumeration.
pub fn kp_discrete_joint_brute_force(inst: &KpInstance) -> f64 {
    let KpUncertainty::Knapsack { f, b, w, discrete } = &inst.uncertainty else {
        panic!("knapsack variant only");
    };
    assert!(*discrete);
    let n = inst.n;
    assert!(n <= 14, "joint enumeration limited to 14 items");
    let mut best = f64::NEG_INFINITY;
    for x_mask in 0u32..(1u32 << n) {
        let mut value = 0.0;
        let mut nominal = 0.0;
        let mut cap = *b;
        for i in 0..n {
            if x_mask >> i & 1 == 1 {
                value += inst.values[i];
                nominal += inst.a_bar[i];
                cap -= w[i];
            }
        }
        let mut follower_best = f64::NEG_INFINITY;
        for u_mask in 0u32..(1u32 << n) {
            let weight: f64 = (0..n).filter(|i| u_mask >> i & 1 == 1).map(|i| f[i]).sum();
            if weight > cap + 1e-12 {
                continue;
            }
            let v: f64 = (0..n)
                .filter(|i| u_mask >> i & 1 == 1 && x_mask >> *i & 1 == 1)
                .map(|i| inst.a_hat[i])
                .sum();
            if v > follower_best {
                follower_best = v;
            }
        }
        if follower_best == f64::NEG_INFINITY {
            continue;
        }
        if nominal + follower_best <= inst.capacity + 1e-9 && value > best {
            best = value;
        }
    }
    best.max(0.0)
}

fn flow_ok(inst: &SpInstance, y: &[f64]) -> bool {
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
        if (net - want).abs() > 1e-9 {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dijkstra_triangle() {
        let arcs = vec![(0, 1), (1, 2), (0, 2)];
        let d = dijkstra(3, &arcs, &[1.0, 1.0, 3.0], 0, 2);
        assert_eq!(d, Some(2.0));
        assert_eq!(dijkstra(3, &arcs, &[1.0, 1.0, 3.0], 2, 0), None);
    }

    #[test]
    fn path_enumeration_counts() {
        // diamond: 0->1->3, 0->2->3, 0->3
        let arcs = vec![(0, 1), (1, 3), (0, 2), (2, 3), (0, 3)];
        let mut count = 0;
        enumerate_simple_paths(4, &arcs, 0, 3, &mut |_| count += 1);
        assert_eq!(count, 3);
    }

    #[test]
    fn vertex_enumeration_matches_ratio_greedy() {
        let mut rng = crate::instgen::Rng::new(5);
        for _ in 0..100 {
            let n = rng.uniform_int(1, 10) as usize;
            let f: Vec<f64> = (0..n).map(|_| rng.uniform_int(1, 20) as f64).collect();
            let coeffs: Vec<f64> = (0..n).map(|_| rng.uniform_real(0.0, 5.0)).collect();
            let cap = rng.uniform_real(0.0, 40.0);
            let a = contknap_vertex_enumeration(&f, cap, &coeffs);
            let b = worst_case_knapsack_ratio_greedy(&f, cap, &coeffs);
            assert!((a - b).abs() < 1e-9, "vertex {a} greedy {b}");
        }
    }
}
