//! External-solver escape hatch: write model files, run a command template
//! through the shell, parse the solution back.

use super::{audit, objective_value, parse_sol_file, write_mps, SolveError, SolveResult, SolveStatus};
use crate::model::MilpModel;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolutionDialect {
    /// `<name> <value>` lines in the `{output}` file.
    SolFile,
    /// Scrape the objective value from the solver's stdout/stderr log
    /// (used for bilevel solvers that report no machine-readable point).
    MibsLog,
}

#[derive(Debug, Clone)]
pub struct ExternalCommand {
    /// Shell command with `{...}` placeholders for file paths.
    pub template: String,
    pub timeout: Option<Duration>,
}

impl ExternalCommand {
    pub fn new(template: impl Into<String>) -> Self {
        ExternalCommand { template: template.into(), timeout: None }
    }

    /// Runs the command with the given `{key}` -> path substitutions and
    /// parses the result. For `SolFile` the caller must pass the model the
    /// solution refers to; its values are audited.
    pub fn run(
        &self,
        files: &[(&str, &Path)],
        dialect: SolutionDialect,
        model: Option<&MilpModel>,
    ) -> Result<SolveResult, SolveError> {
        let start = Instant::now();
        let mut cmd_line = self.template.clone();
        for (key, path) in files {
            cmd_line = cmd_line.replace(&format!("{{{key}}}"), &path.display().to_string());
        }

        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&cmd_line)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| SolveError::External(format!("spawn failed: {e}")))?;

        let deadline = self.timeout.map(|t| Instant::now() + t);
        let status = loop {
            match child.try_wait().map_err(|e| SolveError::External(e.to_string()))? {
                Some(status) => break status,
                None => {
                    if let Some(d) = deadline {
                        if Instant::now() >= d {
                            let _ = child.kill();
                            let _ = child.wait();
                            return Err(SolveError::External("timeout".into()));
                        }
                    }
                    std::thread::sleep(Duration::from_millis(10));
                }
            }
        };
        let output = child.wait_with_output().map_err(|e| SolveError::External(e.to_string()))?;
        if !status.success() {
            return Err(SolveError::External(format!(
                "command exited with {status}: {}",
                String::from_utf8_lossy(&output.stderr)
            )));
        }

        match dialect {
            SolutionDialect::SolFile => {
                let model = model.ok_or_else(|| {
                    SolveError::External("SolFile dialect needs the model for value mapping".into())
                })?;
                let out_path = files
                    .iter()
                    .find(|(k, _)| *k == "output")
                    .map(|(_, p)| *p)
                    .ok_or_else(|| SolveError::External("no {output} file declared".into()))?;
                let text = std::fs::read_to_string(out_path).map_err(|e| {
                    SolveError::Parse(format!("missing or unreadable output file: {e}"))
                })?;
                let values = parse_sol_file(&text, model)?;
                audit(model, &values, true)?;
                let obj = objective_value(model, &values);
                Ok(SolveResult {
                    status: SolveStatus::Optimal,
                    values,
                    objective: obj,
                    bound: obj,
                    nodes: 0,
                    elapsed_ms: start.elapsed().as_millis(),
                })
            }
            SolutionDialect::MibsLog => {
                let log = format!(
                    "{}\n{}",
                    String::from_utf8_lossy(&output.stdout),
                    String::from_utf8_lossy(&output.stderr)
                );
                let obj = scrape_objective(&log).ok_or_else(|| {
                    SolveError::Parse("no objective value found in solver log".into())
                })?;
                Ok(SolveResult {
                    status: SolveStatus::Optimal,
                    values: Vec::new(),
                    objective: obj,
                    bound: obj,
                    nodes: 0,
                    elapsed_ms: start.elapsed().as_millis(),
                })
            }
        }
    }
}

/// Looks for the last line announcing an objective/solution value and
/// returns the first number after the marker.
fn scrape_objective(log: &str) -> Option<f64> {
    const MARKERS: [&str; 4] = ["optimal objective value", "objective value", "best solution", "cost ="];
    let mut found = None;
    for line in log.lines() {
        let lower = line.to_ascii_lowercase();
        for marker in MARKERS {
            if let Some(pos) = lower.find(marker) {
                let tail = &line[pos + marker.len()..];
                for tok in tail.split(|c: char| c.is_whitespace() || c == ':' || c == '=') {
                    if tok.is_empty() {
                        continue;
                    }
                    if let Ok(v) = tok.trim_end_matches(&[',', ';'][..]).parse::<f64>() {
                        found = Some(v);
                        break;
                    }
                }
            }
        }
    }
    found
}

/// Writes the model to a temporary MPS file, runs the command template
/// (`{input}`, `{output}` placeholders), and parses a `.sol` answer.
pub fn external_solve(model: &MilpModel, command: &ExternalCommand) -> Result<SolveResult, SolveError> {
    let dir = tempfile::tempdir()?;
    let input = dir.path().join("model.mps");
    let output = dir.path().join("model.sol");
    write_mps(model, &input)?;
    command.run(
        &[("input", input.as_path()), ("output", output.as_path())],
        SolutionDialect::SolFile,
        Some(model),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConTag, ObjSense, Sense, VarKind, VarTag};

    fn toy_model() -> MilpModel {
        let mut m = MilpModel::new("toy");
        let x = m.add_variable("x", 0.0, 1.0, VarKind::Binary, VarTag::Decision).unwrap();
        let y = m.add_variable("y", 0.0, 1.0, VarKind::Binary, VarTag::Decision).unwrap();
        m.add_linear_constraint(vec![(x, 1.0), (y, 1.0)], Sense::Le, 1.0, ConTag::Structural)
            .unwrap();
        m.objective.sense = ObjSense::Max;
        m.objective.lin_terms = vec![(x, 2.0), (y, 1.0)];
        m
    }

    #[test]
    fn echo_style_fake_solver() {
        let m = toy_model();
        let cmd = ExternalCommand::new("printf 'x 1\\ny 0\\n' > {output} && cat {input} > /dev/null");
        let r = external_solve(&m, &cmd).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 2.0).abs() < 1e-12);
        assert_eq!(r.values, vec![1.0, 0.0]);
    }

    #[test]
    fn missing_output_is_parse_failure() {
        let m = toy_model();
        let cmd = ExternalCommand::new("true");
        match external_solve(&m, &cmd) {
            Err(SolveError::Parse(_)) => {}
            other => panic!("expected parse failure, got {other:?}"),
        }
    }

    #[test]
    fn infeasible_external_point_fails_audit() {
        let m = toy_model();
        let cmd = ExternalCommand::new("printf 'x 1\\ny 1\\n' > {output}");
        match external_solve(&m, &cmd) {
            Err(SolveError::AuditFailed(_)) => {}
            other => panic!("expected audit failure, got {other:?}"),
        }
    }

    #[test]
    fn log_scraping_finds_last_value() {
        let log = "preamble\nObjective value: 12.5\nlater Optimal objective value = -3.25\n";
        assert_eq!(scrape_objective(log), Some(-3.25));
    }
}
