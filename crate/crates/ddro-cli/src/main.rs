//! `ddro` command-line front end: generate instances, build and export
//! models, solve and cross-check reformulations, run experiment sweeps,
//! and extract ECDF tables from result CSVs.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ddro::bilevel::{
    build_bilevel_discrete, export_mibs, linearize_lower_products, solve_bilevel_enumeration,
    AuxKind, AuxObjSense, Placement,
};
use ddro::harness::{
    ecdf, parse_csv, run_experiment, write_csv, Approach, EcdfMetric, ExperimentConfig,
};
use ddro::instgen::{generate, Family, InstanceFile};
use ddro::problems::{evaluate_robust_objective, Instance};
use ddro::reformulate::{
    build_bilevel_duality_sl_with, build_robust_counterpart, BudgetedWeightRow,
};
use ddro::solver::{
    parse_mps, solve_milp, write_lp_format, write_mps, ExternalCommand, MilpConfig,
    SolutionDialect, SolveResult, SolveStatus,
};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

#[derive(Parser)]
#[command(name = "ddro", version, about = "Decision-dependent robust optimization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BuildApproach {
    Robust,
    BilevelDuality,
    BilevelKkt,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FileFormat {
    Mps,
    Lp,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlacementArg {
    LowerOnly,
    BothLevels,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WeightRowArg {
    Dual,
    Primal,
}

#[derive(Args)]
struct LimitArgs {
    /// Wall-clock limit per solve in seconds.
    #[arg(long, default_value_t = 60.0)]
    time_limit: f64,
    /// Branch-and-bound node limit.
    #[arg(long, default_value_t = 1_000_000)]
    node_limit: u64,
}

impl LimitArgs {
    fn milp_config(&self) -> MilpConfig {
        MilpConfig {
            node_limit: self.node_limit,
            time_limit: Some(Duration::from_secs_f64(self.time_limit)),
            gap_abs: 1e-6,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded instance and write it as JSON.
    Generate {
        /// Family: sp-budgeted, sp-discrete, kp-budgeted, kp-contknap,
        /// kp-discrete, portfolio.
        family: String,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        items: Option<usize>,
        #[arg(long)]
        assets: Option<usize>,
        /// Capacity divisor for kp-contknap (1..=20).
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Build a single-level reformulation and write it to MPS or LP format.
    Build {
        #[arg(long, value_enum)]
        approach: BuildApproach,
        #[arg(long)]
        instance: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Output format (default: from the output extension, MPS otherwise).
        #[arg(long, value_enum)]
        format: Option<FileFormat>,
        /// Weight-row form for the budgeted-knapsack bilevel model.
        #[arg(long, value_enum, default_value = "dual")]
        weight_row: WeightRowArg,
    },
    /// Solve an instance with the built-in solver (or a raw MPS file).
    Solve {
        #[arg(long, conflicts_with = "model")]
        instance: Option<PathBuf>,
        /// robust | bilevel_duality | bilevel_kkt | bilevel_discrete_enum
        #[arg(long, default_value = "robust")]
        approach: String,
        /// Solve an MPS model file directly.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// Evaluate the exact worst case at a fixed decision.
    WorstCase {
        #[arg(long)]
        instance: PathBuf,
        /// JSON file with fields `x` and `y` (arrays; `y` may be empty).
        #[arg(long)]
        decision: PathBuf,
    },
    /// Cross-check approaches on one instance and report agreement.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        /// Comma-separated list, e.g. robust,bilevel_duality,bilevel_kkt.
        #[arg(long)]
        approaches: String,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// Run a sweep from a JSON config and write the record CSV.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Compute an ECDF table from an experiment CSV.
    Ecdf {
        #[arg(long)]
        csv: PathBuf,
        /// time_ms | nodes
        #[arg(long, default_value = "time_ms")]
        metric: String,
        #[arg(long)]
        approach: Option<String>,
        /// Keep only instances solved by every approach in the CSV.
        #[arg(long)]
        solved_by_all: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Export a discrete-uncertainty instance as MPS + AUX for a bilevel solver.
    ExportMibs {
        #[arg(long)]
        instance: PathBuf,
        /// Output stem; writes <stem>.mps and <stem>.aux.
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "lower-only")]
        placement: PlacementArg,
        /// Use continuous auxiliaries instead of binary ones.
        #[arg(long)]
        continuous_aux: bool,
        /// Emit the follower objective in minimization form (OS 1).
        #[arg(long)]
        normalize_min: bool,
    },
}

fn load_instance(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read instance file {}", path.display()))?;
    let file = InstanceFile::from_json(&text)?;
    Ok(file.instance()?)
}

fn print_result(r: &SolveResult) {
    println!(
        "{}",
        serde_json::json!({
            "status": r.status.to_string(),
            "objective": if r.objective.is_finite() { Some(r.objective) } else { None },
            "bound": if r.bound.is_finite() { Some(r.bound) } else { None },
            "nodes": r.nodes,
            "time_ms": r.elapsed_ms,
        })
    );
}

fn solve_approach(inst: &Instance, approach: &str, cfg: &MilpConfig) -> Result<SolveResult> {
    match approach {
        "robust" => Ok(solve_milp(&build_robust_counterpart(inst)?, cfg)?),
        "bilevel_duality" => Ok(solve_milp(
            &build_bilevel_duality_sl_with(inst, BudgetedWeightRow::Dual)?,
            cfg,
        )?),
        "bilevel_kkt" => match inst {
            Instance::ShortestPath(sp) => {
                Ok(solve_milp(&ddro::reformulate::build_bilevel_kkt_sl(sp)?, cfg)?)
            }
            _ => bail!("bilevel_kkt is available for shortest path instances only"),
        },
        "bilevel_discrete_enum" => {
            let bm = build_bilevel_discrete(inst)?;
            let lb = linearize_lower_products(&bm, Placement::LowerOnly, AuxKind::Binary)?;
            Ok(solve_bilevel_enumeration(&lb, 24)?)
        }
        other => bail!("unknown approach `{other}`"),
    }
}

#[derive(Deserialize)]
struct DecisionFile {
    #[serde(default)]
    x: Vec<f64>,
    #[serde(default)]
    y: Vec<f64>,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { family, nodes, items, assets, k, seed, output } => {
            let family: Family = family.parse()?;
            let size = match family {
                Family::SpBudgeted | Family::SpDiscrete => {
                    nodes.ok_or_else(|| anyhow!("--nodes is required for shortest path families"))?
                }
                Family::KpBudgeted | Family::KpContknap | Family::KpDiscrete => {
                    items.ok_or_else(|| anyhow!("--items is required for knapsack families"))?
                }
                Family::Portfolio => {
                    assets.ok_or_else(|| anyhow!("--assets is required for portfolio"))?
                }
            };
            let file = generate(family, size, k, seed);
            std::fs::write(&output, file.to_json())
                .with_context(|| format!("cannot write {}", output.display()))?;
            println!("wrote {}", output.display());
        }
        Command::Build { approach, instance, output, format, weight_row } => {
            let inst = load_instance(&instance)?;
            let model = match approach {
                BuildApproach::Robust => build_robust_counterpart(&inst)?,
                BuildApproach::BilevelDuality => build_bilevel_duality_sl_with(
                    &inst,
                    match weight_row {
                        WeightRowArg::Dual => BudgetedWeightRow::Dual,
                        WeightRowArg::Primal => BudgetedWeightRow::Primal,
                    },
                )?,
                BuildApproach::BilevelKkt => match &inst {
                    Instance::ShortestPath(sp) => ddro::reformulate::build_bilevel_kkt_sl(sp)?,
                    _ => bail!("bilevel_kkt is available for shortest path instances only"),
                },
            };
            let format = format.unwrap_or_else(|| {
                match output.extension().and_then(|e| e.to_str()) {
                    Some("lp") => FileFormat::Lp,
                    _ => FileFormat::Mps,
                }
            });
            match format {
                FileFormat::Mps => write_mps(&model, &output)?,
                FileFormat::Lp => write_lp_format(&model, &output)?,
            }
            let s = model.size_report();
            println!(
                "wrote {} ({} vars, {} constraints, {} mccormick rows)",
                output.display(),
                model.num_vars(),
                s.constraints,
                s.mccormick_constraints
            );
        }
        Command::Solve { instance, approach, model, limits } => {
            let cfg = limits.milp_config();
            let result = match (instance, model) {
                (Some(path), None) => {
                    let inst = load_instance(&path)?;
                    solve_approach(&inst, &approach, &cfg)?
                }
                (None, Some(path)) => {
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("cannot read {}", path.display()))?;
                    let model = parse_mps(&text)?;
                    solve_milp(&model, &cfg)?
                }
                _ => bail!("pass exactly one of --instance or --model"),
            };
            print_result(&result);
        }
        Command::WorstCase { instance, decision } => {
            let inst = load_instance(&instance)?;
            let text = std::fs::read_to_string(&decision)
                .with_context(|| format!("cannot read {}", decision.display()))?;
            let d: DecisionFile = serde_json::from_str(&text).context("decision file")?;
            let eval = evaluate_robust_objective(&inst, &d.x, &d.y)?;
            println!(
                "{}",
                serde_json::json!({
                    "objective": eval.objective,
                    "worst_case": eval.worst_case,
                    "feasible": eval.feasible,
                })
            );
        }
        Command::Verify { instance, approaches, tol, limits } => {
            let inst = load_instance(&instance)?;
            let cfg = limits.milp_config();
            let names: Vec<&str> = approaches.split(',').map(|s| s.trim()).collect();
            if names.len() < 2 {
                bail!("verify needs at least two approaches");
            }
            let mut values = Vec::new();
            for name in &names {
                let r = solve_approach(&inst, name, &cfg)?;
                if r.status != SolveStatus::Optimal {
                    bail!("approach `{name}` finished with status {}", r.status);
                }
                println!("{name}: {}", r.objective);
                values.push(r.objective);
            }
            // Optional external bilevel-solver cross-check.
            if let Ok(cmd) = std::env::var("DDRO_MIBS_CMD") {
                if names.contains(&"bilevel_discrete_enum") {
                    let bm = build_bilevel_discrete(&inst)?;
                    let lb = linearize_lower_products(&bm, Placement::LowerOnly, AuxKind::Binary)?;
                    let dir = tempfile_dir()?;
                    let stem = dir.join("instance");
                    let (mps, aux) = export_mibs(&lb, &stem, AuxObjSense::AsStated)?;
                    let external = ExternalCommand::new(cmd);
                    let r = external.run(
                        &[("mps", mps.as_path()), ("aux", aux.as_path())],
                        SolutionDialect::MibsLog,
                        None,
                    )?;
                    println!("external: {}", r.objective);
                    values.push(r.objective);
                }
            }
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if max - min <= tol {
                println!("values agree within {tol}");
            } else {
                bail!("values disagree: spread {} exceeds {tol}", max - min);
            }
        }
        Command::Experiment { config, output } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("cannot read {}", config.display()))?;
            let config: ExperimentConfig = serde_json::from_str(&text).context("config file")?;
            let records = run_experiment(&config)?;
            std::fs::write(&output, write_csv(&records))
                .with_context(|| format!("cannot write {}", output.display()))?;
            let solved = records.iter().filter(|r| r.status == "optimal").count();
            println!("wrote {} ({} runs, {} optimal)", output.display(), records.len(), solved);
        }
        Command::Ecdf { csv, metric, approach, solved_by_all, output } => {
            let text = std::fs::read_to_string(&csv)
                .with_context(|| format!("cannot read {}", csv.display()))?;
            let records = parse_csv(&text)?;
            let metric: EcdfMetric = metric.parse().map_err(|e: String| anyhow!(e))?;
            let approach: Option<Approach> = match approach {
                Some(a) => Some(a.parse().map_err(|e: String| anyhow!(e))?),
                None => None,
            };
            let points = ecdf(&records, metric, approach, solved_by_all)?;
            let mut table = String::from("value,fraction\n");
            for (v, f) in &points {
                table.push_str(&format!("{v},{f}\n"));
            }
            match output {
                Some(path) => {
                    std::fs::write(&path, table)
                        .with_context(|| format!("cannot write {}", path.display()))?;
                    println!("wrote {} ({} steps)", path.display(), points.len());
                }
                None => print!("{table}"),
            }
        }
        Command::ExportMibs { instance, output, placement, continuous_aux, normalize_min } => {
            let inst = load_instance(&instance)?;
            let bm = build_bilevel_discrete(&inst)?;
            let placement = match placement {
                PlacementArg::LowerOnly => Placement::LowerOnly,
                PlacementArg::BothLevels => Placement::BothLevels,
            };
            let aux_kind = if continuous_aux { AuxKind::Continuous } else { AuxKind::Binary };
            let lb = linearize_lower_products(&bm, placement, aux_kind)?;
            let sense = if normalize_min { AuxObjSense::NormalizeMin } else { AuxObjSense::AsStated };
            let (mps, aux) = export_mibs(&lb, &output, sense)?;
            println!("wrote {} and {}", mps.display(), aux.display());
        }
    }
    Ok(())
}

fn tempfile_dir() -> Result<PathBuf> {
    let dir = std::env::temp_dir().join(format!("ddro-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
