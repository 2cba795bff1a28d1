//! Deterministic, seeded instance generators.
//!
//! All randomness flows through a splitmix64 stream with a 53-bit
//! uniform-real mapper; every draw consumes exactly one 64-bit output, so
//! instances are bit-identical across platforms for a given seed.

use crate::problems::{Instance, KpInstance, KpUncertainty, PortfolioInstance, SpInstance};
use serde::{Deserialize, Serialize};

/// splitmix64 stream; `uniform_int` and `uniform_real` are the only draw
/// primitives.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform integer in `[a, b]` (inclusive), one 64-bit draw.
    pub fn uniform_int(&mut self, a: i64, b: i64) -> i64 {
        debug_assert!(a <= b);
        let span = (b - a) as u64 + 1;
        a + (self.next_u64() % span) as i64
    }

    /// Uniform real in `[a, b)` from the top 53 bits, one 64-bit draw.
    pub fn uniform_real(&mut self, a: f64, b: f64) -> f64 {
        let u = (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0);
        a + (b - a) * u
    }
}

/// Rounds half up, pinning the arc-count formula `|V|*(|V|-1)*density`.
fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Grid points, complete-digraph distances, and the removal of the longest
/// arcs shared by both shortest-path generators.
fn sp_skeleton(nodes: usize, keep_fraction: f64, rng: &mut Rng) -> (Vec<(usize, usize)>, Vec<f64>, usize, usize) {
    let points: Vec<(f64, f64)> = (0..nodes)
        .map(|_| {
            let x = rng.uniform_real(0.0, 100.0);
            let y = rng.uniform_real(0.0, 100.0);
            (x, y)
        })
        .collect();
    let dist = |i: usize, j: usize| -> f64 {
        let dx = points[i].0 - points[j].0;
        let dy = points[i].1 - points[j].1;
        (dx * dx + dy * dy).sqrt()
    };
    // Source and target: the two furthest nodes (smallest index pair on ties).
    let mut best = (0usize, 1usize, -1.0f64);
    for i in 0..nodes {
        for j in (i + 1)..nodes {
            let d = dist(i, j);
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    let (source, target) = (best.0, best.1);

    let mut arcs: Vec<(usize, usize)> = Vec::with_capacity(nodes * (nodes - 1));
    for i in 0..nodes {
        for j in 0..nodes {
            if i != j {
                arcs.push((i, j));
            }
        }
    }
    let keep = round_half_up(nodes as f64 * (nodes - 1) as f64 * keep_fraction);
    // Remove the longest arcs: sort indices by length descending (stable on
    // ties), drop the first `len - keep`, restore original arc order.
    let mut idx: Vec<usize> = (0..arcs.len()).collect();
    idx.sort_by(|&a, &b| {
        dist(arcs[b].0, arcs[b].1)
            .partial_cmp(&dist(arcs[a].0, arcs[a].1))
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = idx.into_iter().skip(arcs.len() - keep).collect();
    kept.sort_unstable();
    let arcs: Vec<(usize, usize)> = kept.iter().map(|&k| arcs[k]).collect();
    let lengths: Vec<f64> = arcs.iter().map(|&(i, j)| dist(i, j)).collect();
    (arcs, lengths, source, target)
}

/// Shortest path with budgeted uncertainty: 100x100 grid, 60 % of the
/// longest arcs removed, c = 1, d_hat = d_bar, budget 2, gamma 0.2.
pub fn gen_sp_budgeted(nodes: usize, seed: u64) -> SpInstance {
    assert!(nodes >= 2, "need at least two nodes");
    let mut rng = Rng::new(seed);
    let (arcs, d_bar, source, target) = sp_skeleton(nodes, 0.4, &mut rng);
    let m = arcs.len();
    SpInstance {
        nodes,
        arcs,
        source,
        target,
        d_hat: d_bar.clone(),
        d_bar,
        hedging_cost: vec![1.0; m],
        gamma: vec![0.2; m],
        budget: 2,
        discrete: None,
    }
}

/// Discrete payload `(f, b, w)` of an instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscreteUncertainty {
    pub f: Vec<f64>,
    pub b: f64,
    pub w: Vec<f64>,
}

/// Budgeted shortest-path instance with an exact arc count: same grid and
/// longest-arc removal as [`gen_sp_budgeted`] but keeping `num_arcs` arcs.
/// Used for size checks that pin (|A|, |V|) independently.
pub fn gen_sp_with_arc_count(nodes: usize, num_arcs: usize, seed: u64) -> SpInstance {
    assert!(nodes >= 2 && num_arcs >= 1 && num_arcs <= nodes * (nodes - 1));
    let mut rng = Rng::new(seed);
    let frac = num_arcs as f64 / (nodes * (nodes - 1)) as f64;
    let (arcs, d_bar, source, target) = sp_skeleton(nodes, frac, &mut rng);
    debug_assert_eq!(arcs.len(), num_arcs);
    let m = arcs.len();
    SpInstance {
        nodes,
        arcs,
        source,
        target,
        d_hat: d_bar.clone(),
        d_bar,
        hedging_cost: vec![1.0; m],
        gamma: vec![0.2; m],
        budget: 2,
        discrete: None,
    }
}

/// Shortest path with discrete knapsack uncertainty: 20 % of the longest
/// arcs removed, integer uncertainty weights in [1,100], b = 0.1 * sum f,
/// w_a uniform in [0, b/|V|] (so b(x) >= 0 for every binary x).
pub fn gen_sp_discrete(nodes: usize, seed: u64) -> SpInstance {
    assert!(nodes >= 2, "need at least two nodes");
    let mut rng = Rng::new(seed);
    let (arcs, d_bar, source, target) = sp_skeleton(nodes, 0.8, &mut rng);
    let m = arcs.len();
    let f: Vec<f64> = (0..m).map(|_| rng.uniform_int(1, 100) as f64).collect();
    let b = 0.1 * f.iter().sum::<f64>();
    let w: Vec<f64> = (0..m).map(|_| rng.uniform_real(0.0, b / nodes as f64)).collect();
    SpInstance {
        nodes,
        arcs,
        source,
        target,
        d_hat: d_bar.clone(),
        d_bar,
        hedging_cost: vec![1.0; m],
        gamma: vec![0.2; m],
        budget: 0,
        discrete: Some(DiscreteUncertainty { f, b, w }),
    }
}

/// Knapsack with budgeted uncertainty: strongly correlated weights in
/// [1,100] (value = weight + 10), capacity 0.35 * sum weights, hedging
/// cost uniform in [c_i/10, c_i/5], budget = n/100 rounded (at least 1),
/// gamma 0.2, deviations 10 % of nominal weights.
pub fn gen_kp_budgeted(n: usize, seed: u64) -> KpInstance {
    assert!(n >= 1);
    let mut rng = Rng::new(seed);
    let a_bar: Vec<f64> = (0..n).map(|_| rng.uniform_int(1, 100) as f64).collect();
    let values: Vec<f64> = a_bar.iter().map(|w| w + 10.0).collect();
    let hedging: Vec<f64> = values.iter().map(|c| rng.uniform_real(c / 10.0, c / 5.0)).collect();
    let budget = round_half_up(n as f64 / 100.0).max(1) as u32;
    let capacity = 0.35 * a_bar.iter().sum::<f64>();
    KpInstance {
        n,
        values,
        a_hat: a_bar.iter().map(|w| 0.1 * w).collect(),
        a_bar,
        capacity,
        uncertainty: KpUncertainty::Budgeted {
            hedging_cost: hedging,
            budget,
            gamma: vec![0.2; n],
        },
    }
}

/// Knapsack with continuous knapsack uncertainty: strongly correlated
/// weights, both capacities set to `max(W_sum/k, max_i w_i)`, uncertainty
/// weights equal to the nominal weights.
pub fn gen_kp_contknap(n: usize, k: usize, seed: u64) -> KpInstance {
    assert!(n >= 1 && (1..=20).contains(&k));
    let mut rng = Rng::new(seed);
    let a_bar: Vec<f64> = (0..n).map(|_| rng.uniform_int(1, 100) as f64).collect();
    let values: Vec<f64> = a_bar.iter().map(|w| w + 10.0).collect();
    let w_sum: f64 = a_bar.iter().sum();
    let w_max = a_bar.iter().cloned().fold(0.0f64, f64::max);
    let capacity = (w_sum / k as f64).max(w_max);
    KpInstance {
        n,
        values,
        a_hat: a_bar.iter().map(|w| 0.1 * w).collect(),
        capacity,
        uncertainty: KpUncertainty::Knapsack {
            f: a_bar.clone(),
            b: capacity,
            w: vec![0.0; n],
            discrete: false,
        },
        a_bar,
    }
}

/// Knapsack with discrete knapsack uncertainty: two uncorrelated draws
/// (values and weights in [1,100]), both capacities 0.1 * sum weights.
pub fn gen_kp_discrete(n: usize, seed: u64) -> KpInstance {
    assert!(n >= 1);
    let mut rng = Rng::new(seed);
    let mut a_bar = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        a_bar.push(rng.uniform_int(1, 100) as f64);
        values.push(rng.uniform_int(1, 100) as f64);
    }
    let f: Vec<f64> = (0..n).map(|_| rng.uniform_int(1, 100) as f64).collect();
    let capacity = 0.1 * a_bar.iter().sum::<f64>();
    let b = 0.1 * f.iter().sum::<f64>();
    KpInstance {
        n,
        values,
        a_hat: a_bar.iter().map(|w| 0.1 * w).collect(),
        a_bar,
        capacity,
        uncertainty: KpUncertainty::Knapsack { f, b, w: vec![0.0; n], discrete: true },
    }
}

/// Portfolio with budgeted uncertainty. The covariance is a PSD factor
/// model `F'F + diag(D)` with `F` 5xN uniform in [-1,1] and `D` uniform in
/// [0.1,1]; nominal returns uniform in [0.5,1.5]; V0 uniform between the
/// mean and the max entry of the covariance; k = 10, budget 20, gamma 0.2.
pub fn gen_portfolio(n_assets: usize, seed: u64) -> PortfolioInstance {
    assert!(n_assets >= 10, "cardinality 10 needs at least 10 assets");
    let mut rng = Rng::new(seed);
    let factors = 5usize;
    let mut f = vec![vec![0.0; n_assets]; factors];
    for row in f.iter_mut() {
        for entry in row.iter_mut() {
            *entry = rng.uniform_real(-1.0, 1.0);
        }
    }
    let d: Vec<f64> = (0..n_assets).map(|_| rng.uniform_real(0.1, 1.0)).collect();
    let mut sigma = vec![vec![0.0; n_assets]; n_assets];
    for i in 0..n_assets {
        for j in 0..n_assets {
            let mut s = 0.0;
            for row in &f {
                s += row[i] * row[j];
            }
            sigma[i][j] = s;
        }
        sigma[i][i] += d[i];
    }
    let mu_bar: Vec<f64> = (0..n_assets).map(|_| rng.uniform_real(0.5, 1.5)).collect();
    let mut sum = 0.0;
    let mut max = f64::NEG_INFINITY;
    for row in &sigma {
        for &v in row {
            sum += v;
            max = max.max(v);
        }
    }
    let mean = sum / (n_assets * n_assets) as f64;
    let v0 = rng.uniform_real(mean, max);
    let mu_hat: Vec<f64> = mu_bar.iter().map(|m| rng.uniform_real(m / 2.0, *m)).collect();
    let hedging: Vec<f64> = mu_bar.iter().map(|m| rng.uniform_real(m / 10.0, m / 5.0)).collect();
    PortfolioInstance {
        n_assets,
        mu_bar,
        mu_hat,
        sigma,
        v0,
        k: 10,
        hedging_cost: hedging,
        budget: 20,
        gamma: vec![0.2; n_assets],
        discrete: None,
    }
}

/// Instance file wrapper: `{problem, uncertainty, seed, params, data}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub problem: String,
    pub uncertainty: String,
    pub seed: u64,
    pub params: serde_json::Value,
    pub data: serde_json::Value,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum InstgenError {
    #[error("unknown generator family `{0}`")]
    UnknownFamily(String),
    #[error("json: {0}")]
    Json(String),
}

/// Generator families exposed by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    SpBudgeted,
    SpDiscrete,
    KpBudgeted,
    KpContknap,
    KpDiscrete,
    Portfolio,
}

impl std::str::FromStr for Family {
    type Err = InstgenError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sp-budgeted" => Ok(Family::SpBudgeted),
            "sp-discrete" => Ok(Family::SpDiscrete),
            "kp-budgeted" => Ok(Family::KpBudgeted),
            "kp-contknap" => Ok(Family::KpContknap),
            "kp-discrete" => Ok(Family::KpDiscrete),
            "portfolio" => Ok(Family::Portfolio),
            other => Err(InstgenError::UnknownFamily(other.into())),
        }
    }
}

/// Generates an instance and wraps it in the JSON file schema.
pub fn generate(family: Family, size: usize, k: usize, seed: u64) -> InstanceFile {
    let to_value = |v: &Instance| serde_json::to_value(v).expect("instance serializes");
    match family {
        Family::SpBudgeted => {
            let inst = Instance::ShortestPath(gen_sp_budgeted(size, seed));
            InstanceFile {
                problem: "shortest_path".into(),
                uncertainty: "budgeted".into(),
                seed,
                params: serde_json::json!({ "nodes": size }),
                data: to_value(&inst),
            }
        }
        Family::SpDiscrete => {
            let inst = Instance::ShortestPath(gen_sp_discrete(size, seed));
            InstanceFile {
                problem: "shortest_path".into(),
                uncertainty: "discrete_knapsack".into(),
                seed,
                params: serde_json::json!({ "nodes": size }),
                data: to_value(&inst),
            }
        }
        Family::KpBudgeted => {
            let inst = Instance::Knapsack(gen_kp_budgeted(size, seed));
            InstanceFile {
                problem: "knapsack".into(),
                uncertainty: "budgeted".into(),
                seed,
                params: serde_json::json!({ "items": size }),
                data: to_value(&inst),
            }
        }
        Family::KpContknap => {
            let inst = Instance::Knapsack(gen_kp_contknap(size, k, seed));
            InstanceFile {
                problem: "knapsack".into(),
                uncertainty: "continuous_knapsack".into(),
                seed,
                params: serde_json::json!({ "items": size, "k": k }),
                data: to_value(&inst),
            }
        }
        Family::KpDiscrete => {
            let inst = Instance::Knapsack(gen_kp_discrete(size, seed));
            InstanceFile {
                problem: "knapsack".into(),
                uncertainty: "discrete_knapsack".into(),
                seed,
                params: serde_json::json!({ "items": size }),
                data: to_value(&inst),
            }
        }
        Family::Portfolio => {
            let inst = Instance::Portfolio(gen_portfolio(size, seed));
            InstanceFile {
                problem: "portfolio".into(),
                uncertainty: "budgeted".into(),
                seed,
                params: serde_json::json!({ "assets": size }),
                data: to_value(&inst),
            }
        }
    }
}

impl InstanceFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance file serializes")
    }

    pub fn from_json(text: &str) -> Result<InstanceFile, InstgenError> {
        serde_json::from_str(text).map_err(|e| InstgenError::Json(e.to_string()))
    }

    pub fn instance(&self) -> Result<Instance, InstgenError> {
        serde_json::from_value(self.data.clone()).map_err(|e| InstgenError::Json(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // First outputs for seed 1234567 (reference splitmix64 sequence).
        let mut rng = Rng::new(1234567);
        let a = rng.next_u64();
        let b = rng.next_u64();
        let mut rng2 = Rng::new(1234567);
        assert_eq!(a, rng2.next_u64());
        assert_eq!(b, rng2.next_u64());
        assert_ne!(a, b);
    }

    #[test]
    fn sp_budgeted_arc_count_formula() {
        let inst = gen_sp_budgeted(50, 3);
        assert_eq!(inst.arcs.len(), 980);
        assert_eq!(inst.budget, 2);
        assert!(inst.gamma.iter().all(|g| *g == 0.2));
        assert!(inst.hedging_cost.iter().all(|c| *c == 1.0));
        assert_eq!(inst.d_bar, inst.d_hat);
    }

    #[test]
    fn sp_discrete_recipe() {
        let inst = gen_sp_discrete(5, 42);
        assert_eq!(inst.arcs.len(), 16); // round(5*4*0.8)
        let d = inst.discrete.as_ref().unwrap();
        assert!(d.f.iter().all(|f| (1.0..=100.0).contains(f) && f.fract() == 0.0));
        assert!((d.b - 0.1 * d.f.iter().sum::<f64>()).abs() < 1e-12);
        // b(x) >= 0 for every binary x: sum of w is at most b.
        let wsum: f64 = d.w.iter().sum();
        assert!(wsum <= d.b * inst.arcs.len() as f64 / 5.0 + 1e-9);
        assert!(d.w.iter().all(|w| *w >= 0.0 && *w <= d.b / 5.0));
    }

    #[test]
    fn determinism_identical_json() {
        for family in [
            Family::SpBudgeted,
            Family::SpDiscrete,
            Family::KpBudgeted,
            Family::KpContknap,
            Family::KpDiscrete,
        ] {
            let a = generate(family, 12, 3, 9).to_json();
            let b = generate(family, 12, 3, 9).to_json();
            assert_eq!(a, b);
        }
        let a = generate(Family::Portfolio, 10, 0, 9).to_json();
        let b = generate(Family::Portfolio, 10, 0, 9).to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn kp_budgeted_constants() {
        let inst = gen_kp_budgeted(1000, 5);
        match &inst.uncertainty {
            KpUncertainty::Budgeted { budget, gamma, hedging_cost } => {
                assert_eq!(*budget, 10);
                assert!(gamma.iter().all(|g| *g == 0.2));
                for (h, c) in hedging_cost.iter().zip(&inst.values) {
                    assert!(*h >= c / 10.0 - 1e-12 && *h <= c / 5.0 + 1e-12);
                }
            }
            _ => panic!("wrong variant"),
        }
        for (hat, bar) in inst.a_hat.iter().zip(&inst.a_bar) {
            assert_eq!(*hat, 0.1 * bar);
        }
        assert!((inst.capacity - 0.35 * inst.a_bar.iter().sum::<f64>()).abs() < 1e-9);
        // strongly correlated: value = weight + 10
        for (v, w) in inst.values.iter().zip(&inst.a_bar) {
            assert_eq!(*v, w + 10.0);
        }
    }

    #[test]
    fn kp_contknap_capacity() {
        let inst = gen_kp_contknap(200, 1, 7);
        assert!((inst.capacity - inst.a_bar.iter().sum::<f64>()).abs() < 1e-9);
        let inst = gen_kp_contknap(200, 20, 7);
        let w_sum: f64 = inst.a_bar.iter().sum();
        let w_max = inst.a_bar.iter().cloned().fold(0.0f64, f64::max);
        assert_eq!(inst.capacity, (w_sum / 20.0).max(w_max));
        match &inst.uncertainty {
            KpUncertainty::Knapsack { f, b, w, discrete } => {
                assert_eq!(*f, inst.a_bar);
                assert_eq!(*b, inst.capacity);
                assert!(w.iter().all(|x| *x == 0.0));
                assert!(!discrete);
            }
            _ => panic!("wrong variant"),
        }
    }

    #[test]
    fn kp_discrete_capacities() {
        let inst = gen_kp_discrete(50, 2);
        assert!((inst.capacity / inst.a_bar.iter().sum::<f64>() - 0.1).abs() < 1e-12);
        match &inst.uncertainty {
            KpUncertainty::Knapsack { f, b, discrete, .. } => {
                assert!(discrete);
                assert!((b / f.iter().sum::<f64>() - 0.1).abs() < 1e-12);
                assert!(f.iter().all(|x| (1.0..=100.0).contains(x) && x.fract() == 0.0));
            }
            _ => panic!("wrong variant"),
        }
    }

    #[test]
    fn portfolio_recipe_ranges() {
        let inst = gen_portfolio(30, 11);
        assert_eq!(inst.k, 10);
        assert_eq!(inst.budget, 20);
        assert!(inst.gamma.iter().all(|g| *g == 0.2));
        // symmetric PSD by construction
        for i in 0..30 {
            for j in 0..30 {
                assert!((inst.sigma[i][j] - inst.sigma[j][i]).abs() < 1e-12);
            }
        }
        let mut sum = 0.0;
        let mut max = f64::NEG_INFINITY;
        for row in &inst.sigma {
            for &v in row {
                sum += v;
                max = max.max(v);
            }
        }
        let mean = sum / 900.0;
        assert!(inst.v0 >= mean && inst.v0 <= max);
        for ((hat, bar), c) in inst.mu_hat.iter().zip(&inst.mu_bar).zip(&inst.hedging_cost) {
            assert!(*hat >= bar / 2.0 && *hat <= *bar);
            assert!(*c >= bar / 10.0 && *c <= bar / 5.0);
        }
    }

    #[test]
    fn uniform_draw_statistics() {
        let mut rng = Rng::new(99);
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += rng.uniform_real(0.0, 1.0);
        }
        let mean = sum / n as f64;
        // 3 sigma of the sample mean of U(0,1): 3/sqrt(12 n)
        assert!((mean - 0.5).abs() < 3.0 / (12.0f64 * n as f64).sqrt());

        let mut sum_i = 0.0;
        for _ in 0..n {
            sum_i += rng.uniform_int(1, 100) as f64;
        }
        let mean_i = sum_i / n as f64;
        let sd = ((100.0f64 * 100.0 - 1.0) / 12.0).sqrt(); // sd of U{1..100}
        assert!((mean_i - 50.5).abs() < 3.0 * sd / (n as f64).sqrt());
    }
}
