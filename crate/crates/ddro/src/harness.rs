//! Experiment runner: sweeps (size, seed, approach) grids, records one CSV
//! row per run, and computes ECDF tables of runtimes or node counts,
//! optionally restricted to instances solved by every approach.

use crate::bilevel::{
    build_bilevel_discrete, linearize_lower_products, solve_bilevel_enumeration, AuxKind,
    Placement,
};
use crate::instgen::{generate, Family};
use crate::problems::Instance;
use crate::reformulate::{build, ReformKind};
use crate::solver::{external_solve, solve_milp, ExternalCommand, MilpConfig};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::{mpsc, Arc, Mutex};
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    Robust,
    BilevelDuality,
    BilevelKkt,
    BilevelDiscreteEnum,
    External,
}

impl std::fmt::Display for Approach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Approach::Robust => "robust",
            Approach::BilevelDuality => "bilevel_duality",
            Approach::BilevelKkt => "bilevel_kkt",
            Approach::BilevelDiscreteEnum => "bilevel_discrete_enum",
            Approach::External => "external",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Approach {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "robust" => Ok(Approach::Robust),
            "bilevel_duality" => Ok(Approach::BilevelDuality),
            "bilevel_kkt" => Ok(Approach::BilevelKkt),
            "bilevel_discrete_enum" => Ok(Approach::BilevelDiscreteEnum),
            "external" => Ok(Approach::External),
            other => Err(format!("unknown approach `{other}`")),
        }
    }
}

pub const CSV_HEADER: &str =
    "instance_id,problem,uncertainty,approach,size,seed,status,objective,bound,time_ms,nodes";

/// One run of one approach on one instance. `status` extends the solver
/// vocabulary with `error` for runs that failed outside the solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub instance_id: String,
    pub problem: String,
    pub uncertainty: String,
    pub approach: Approach,
    pub size: usize,
    pub seed: u64,
    pub status: String,
    pub objective: Option<f64>,
    pub bound: Option<f64>,
    pub time_ms: u128,
    pub nodes: u64,
}

impl ExperimentRecord {
    pub fn to_csv_row(&self) -> String {
        let opt = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.instance_id,
            self.problem,
            self.uncertainty,
            self.approach,
            self.size,
            self.seed,
            self.status,
            opt(&self.objective),
            opt(&self.bound),
            self.time_ms,
            self.nodes
        )
    }

    pub fn from_csv_row(line: &str) -> Result<ExperimentRecord, HarnessError> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(HarnessError::Csv(format!("expected 11 fields, got {}", fields.len())));
        }
        let opt = |s: &str| -> Result<Option<f64>, HarnessError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| HarnessError::Csv(format!("bad real `{s}`")))
            }
        };
        Ok(ExperimentRecord {
            instance_id: fields[0].to_string(),
            problem: fields[1].to_string(),
            uncertainty: fields[2].to_string(),
            approach: fields[3].parse().map_err(HarnessError::Csv)?,
            size: fields[4].parse().map_err(|_| HarnessError::Csv("bad size".into()))?,
            seed: fields[5].parse().map_err(|_| HarnessError::Csv("bad seed".into()))?,
            status: fields[6].to_string(),
            objective: opt(fields[7])?,
            bound: opt(fields[8])?,
            time_ms: fields[9].parse().map_err(|_| HarnessError::Csv("bad time".into()))?,
            nodes: fields[10].parse().map_err(|_| HarnessError::Csv("bad nodes".into()))?,
        })
    }
}

pub fn write_csv(records: &[ExperimentRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.to_csv_row());
        s.push('\n');
    }
    s
}

pub fn parse_csv(text: &str) -> Result<Vec<ExperimentRecord>, HarnessError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        Some(h) => return Err(HarnessError::Csv(format!("unexpected header `{h}`"))),
        None => return Err(HarnessError::Csv("empty file".into())),
    }
    lines.filter(|l| !l.trim().is_empty()).map(ExperimentRecord::from_csv_row).collect()
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("empty selection after filtering")]
    EmptySelection,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Sweep configuration (JSON).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: String,
    pub uncertainty: String,
    pub sizes: Vec<usize>,
    pub seeds_per_size: u64,
    pub approaches: Vec<Approach>,
    #[serde(default = "default_time_limit")]
    pub time_limit_s: f64,
    #[serde(default = "default_node_limit")]
    pub node_limit: u64,
    #[serde(default)]
    pub external_command: Option<String>,
    /// Workers for the sweep; 0 means one per available core.
    #[serde(default)]
    pub workers: usize,
}

fn default_time_limit() -> f64 {
    60.0
}

fn default_node_limit() -> u64 {
    1_000_000
}

impl ExperimentConfig {
    pub fn family(&self) -> Result<Family, HarnessError> {
        let name = match (self.problem.as_str(), self.uncertainty.as_str()) {
            ("shortest_path", "budgeted") => "sp-budgeted",
            ("shortest_path", "discrete_knapsack") => "sp-discrete",
            ("knapsack", "budgeted") => "kp-budgeted",
            ("knapsack", "continuous_knapsack") => "kp-contknap",
            ("knapsack", "discrete_knapsack") => "kp-discrete",
            ("portfolio", "budgeted") => "portfolio",
            (p, u) => {
                return Err(HarnessError::Config(format!(
                    "no generator for problem `{p}` with uncertainty `{u}`"
                )))
            }
        };
        name.parse().map_err(|e: crate::instgen::InstgenError| HarnessError::Config(e.to_string()))
    }
}

/// Runs one approach on one instance; never panics on solver errors.
pub fn run_single(
    inst: &Instance,
    approach: Approach,
    config: &MilpConfig,
    external: Option<&ExternalCommand>,
) -> (String, Option<f64>, Option<f64>, u128, u64) {
    let out = |status: String, obj: Option<f64>, bound: Option<f64>, ms: u128, nodes: u64| {
        (status, obj, bound, ms, nodes)
    };
    let from_result = |r: crate::solver::SolveResult| {
        let obj = r.objective.is_finite().then_some(r.objective);
        let bound = r.bound.is_finite().then_some(r.bound);
        out(r.status.to_string(), obj, bound, r.elapsed_ms, r.nodes)
    };
    match approach {
        Approach::Robust | Approach::BilevelDuality | Approach::BilevelKkt => {
            let kind = match approach {
                Approach::Robust => ReformKind::RobustDual,
                Approach::BilevelDuality => ReformKind::BilevelDuality,
                _ => ReformKind::BilevelKkt,
            };
            match build(inst, kind) {
                Ok(model) => match solve_milp(&model, config) {
                    Ok(r) => from_result(r),
                    Err(e) => out(format!("error: {e}"), None, None, 0, 0),
                },
                Err(e) => out(format!("error: {e}"), None, None, 0, 0),
            }
        }
        Approach::BilevelDiscreteEnum => {
            let run = || -> Result<crate::solver::SolveResult, crate::bilevel::BilevelError> {
                let bm = build_bilevel_discrete(inst)?;
                let lb = linearize_lower_products(&bm, Placement::LowerOnly, AuxKind::Binary)?;
                solve_bilevel_enumeration(&lb, 24)
            };
            match run() {
                Ok(r) => from_result(r),
                Err(e) => out(format!("error: {e}"), None, None, 0, 0),
            }
        }
        Approach::External => match external {
            Some(cmd) => {
                let model = match build(inst, ReformKind::RobustDual) {
                    Ok(m) => m,
                    Err(e) => return out(format!("error: {e}"), None, None, 0, 0),
                };
                match external_solve(&model, cmd) {
                    Ok(r) => from_result(r),
                    Err(e) => out(format!("error: {e}"), None, None, 0, 0),
                }
            }
            None => out("error: no external command configured".into(), None, None, 0, 0),
        },
    }
}

/// Runs the full sweep: every (size, seed, approach) triple, one record per
/// run, failures recorded rather than aborting. Rows are sorted by
/// (instance_id, approach) regardless of worker scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ExperimentRecord>, HarnessError> {
    let family = config.family()?;
    let milp_cfg = MilpConfig {
        node_limit: config.node_limit,
        time_limit: Some(Duration::from_secs_f64(config.time_limit_s)),
        gap_abs: 1e-6,
    };
    let external = config.external_command.as_ref().map(|t| ExternalCommand {
        template: t.clone(),
        timeout: Some(Duration::from_secs_f64(config.time_limit_s)),
    });

    struct Job {
        size: usize,
        seed: u64,
        approach: Approach,
    }
    let mut jobs = VecDeque::new();
    for &size in &config.sizes {
        for seed in 0..config.seeds_per_size {
            for &approach in &config.approaches {
                jobs.push_back(Job { size, seed, approach });
            }
        }
    }

    let workers = if config.workers == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        config.workers
    };
    let queue = Arc::new(Mutex::new(jobs));
    let (tx, rx) = mpsc::channel::<ExperimentRecord>();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            let queue = Arc::clone(&queue);
            let tx = tx.clone();
            let milp_cfg = milp_cfg.clone();
            let external = external.clone();
            let config = &config;
            scope.spawn(move || loop {
                let job = { queue.lock().expect("queue lock").pop_front() };
                let Some(job) = job else { break };
                let file = generate(family, job.size, 1, job.seed);
                let record = match file.instance() {
                    Ok(inst) => {
                        let (status, objective, bound, time_ms, nodes) =
                            run_single(&inst, job.approach, &milp_cfg, external.as_ref());
                        ExperimentRecord {
                            instance_id: format!(
                                "{}-{}-{}-{}",
                                config.problem, config.uncertainty, job.size, job.seed
                            ),
                            problem: config.problem.clone(),
                            uncertainty: config.uncertainty.clone(),
                            approach: job.approach,
                            size: job.size,
                            seed: job.seed,
                            status,
                            objective,
                            bound,
                            time_ms,
                            nodes,
                        }
                    }
                    Err(e) => ExperimentRecord {
                        instance_id: format!(
                            "{}-{}-{}-{}",
                            config.problem, config.uncertainty, job.size, job.seed
                        ),
                        problem: config.problem.clone(),
                        uncertainty: config.uncertainty.clone(),
                        approach: job.approach,
                        size: job.size,
                        seed: job.seed,
                        status: format!("error: {e}"),
                        objective: None,
                        bound: None,
                        time_ms: 0,
                        nodes: 0,
                    },
                };
                if tx.send(record).is_err() {
                    break;
                }
            });
        }
        drop(tx);
    });

    let mut records: Vec<ExperimentRecord> = rx.into_iter().collect();
    records.sort_by(|a, b| a.instance_id.cmp(&b.instance_id).then(a.approach.cmp(&b.approach)));
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EcdfMetric {
    TimeMs,
    Nodes,
}

impl std::str::FromStr for EcdfMetric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "time_ms" => Ok(EcdfMetric::TimeMs),
            "nodes" => Ok(EcdfMetric::Nodes),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

/// Right-continuous ECDF step points `(value, fraction)` of the metric
/// over records with `status == optimal` matching the approach filter.
/// With `solved_by_all`, only instances solved by every approach present
/// in the record set are kept (per the filtered selection).
pub fn ecdf(
    records: &[ExperimentRecord],
    metric: EcdfMetric,
    approach: Option<Approach>,
    solved_by_all: bool,
) -> Result<Vec<(f64, f64)>, HarnessError> {
    let mut keep: Vec<&ExperimentRecord> = records.iter().collect();
    if solved_by_all {
        let approaches: BTreeSet<Approach> = records.iter().map(|r| r.approach).collect();
        let mut solved: BTreeMap<&str, BTreeSet<Approach>> = BTreeMap::new();
        for r in records {
            if r.status == "optimal" {
                solved.entry(r.instance_id.as_str()).or_default().insert(r.approach);
            }
        }
        keep.retain(|r| {
            solved.get(r.instance_id.as_str()).map_or(false, |s| s.len() == approaches.len())
        });
    }
    if let Some(a) = approach {
        keep.retain(|r| r.approach == a);
    }
    keep.retain(|r| r.status == "optimal");
    if keep.is_empty() {
        return Err(HarnessError::EmptySelection);
    }
    let mut values: Vec<f64> = keep
        .iter()
        .map(|r| match metric {
            EcdfMetric::TimeMs => r.time_ms as f64,
            EcdfMetric::Nodes => r.nodes as f64,
        })
        .collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, v) in values.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some((last, f)) if *last == *v => *f = frac,
            _ => out.push((*v, frac)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, approach: Approach, status: &str, time_ms: u128, nodes: u64) -> ExperimentRecord {
        ExperimentRecord {
            instance_id: id.into(),
            problem: "knapsack".into(),
            uncertainty: "budgeted".into(),
            approach,
            size: 10,
            seed: 0,
            status: status.into(),
            objective: (status == "optimal").then_some(1.0),
            bound: (status == "optimal").then_some(1.0),
            time_ms,
            nodes,
        }
    }

    #[test]
    fn csv_round_trip() {
        let records = vec![
            rec("a-1", Approach::Robust, "optimal", 12, 3),
            rec("a-1", Approach::BilevelDuality, "time_limit", 60000, 100),
            ExperimentRecord { objective: None, bound: None, ..rec("a-2", Approach::Robust, "infeasible", 1, 1) },
        ];
        let text = write_csv(&records);
        assert!(text.starts_with(CSV_HEADER));
        let parsed = parse_csv(&text).unwrap();
        assert_eq!(parsed, records);
    }

    #[test]
    fn ecdf_step_points() {
        let records = vec![
            rec("i1", Approach::Robust, "optimal", 1, 0),
            rec("i2", Approach::Robust, "optimal", 2, 0),
            rec("i3", Approach::Robust, "optimal", 2, 0),
            rec("i4", Approach::Robust, "optimal", 4, 0),
        ];
        let pts = ecdf(&records, EcdfMetric::TimeMs, Some(Approach::Robust), false).unwrap();
        assert_eq!(pts, vec![(1.0, 0.25), (2.0, 0.75), (4.0, 1.0)]);
        assert_eq!(pts.last().unwrap().1, 1.0);
    }

    #[test]
    fn ecdf_solved_by_all_filter() {
        let records = vec![
            rec("i1", Approach::Robust, "optimal", 1, 0),
            rec("i1", Approach::BilevelDuality, "optimal", 5, 0),
            rec("i2", Approach::Robust, "optimal", 2, 0),
            rec("i2", Approach::BilevelDuality, "time_limit", 60000, 0),
        ];
        let pts = ecdf(&records, EcdfMetric::TimeMs, Some(Approach::Robust), true).unwrap();
        assert_eq!(pts, vec![(1.0, 1.0)]);

        // every record timed out -> empty selection
        let all_to = vec![
            rec("i1", Approach::Robust, "time_limit", 1, 0),
            rec("i1", Approach::BilevelDuality, "time_limit", 1, 0),
        ];
        assert!(matches!(
            ecdf(&all_to, EcdfMetric::TimeMs, None, true),
            Err(HarnessError::EmptySelection)
        ));
    }

    #[test]
    fn sweep_cardinality_and_determinism() {
        let config = ExperimentConfig {
            problem: "knapsack".into(),
            uncertainty: "budgeted".into(),
            sizes: vec![6, 8],
            seeds_per_size: 3,
            approaches: vec![Approach::Robust, Approach::BilevelDuality],
            time_limit_s: 30.0,
            node_limit: 1_000_000,
            external_command: None,
            workers: 2,
        };
        let records = run_experiment(&config).unwrap();
        assert_eq!(records.len(), 12);
        assert!(records.iter().all(|r| r.status == "optimal"));
        let again = run_experiment(&config).unwrap();
        for (a, b) in records.iter().zip(&again) {
            assert_eq!(a.instance_id, b.instance_id);
            assert_eq!(a.approach, b.approach);
            assert_eq!(a.objective, b.objective);
            assert_eq!(a.nodes, b.nodes);
        }
        // robust and duality agree per instance
        for pair in records.chunks(2) {
            let (a, b) = (&pair[0], &pair[1]);
            assert_eq!(a.instance_id, b.instance_id);
            assert!((a.objective.unwrap() - b.objective.unwrap()).abs() < 1e-5);
        }
    }
}
