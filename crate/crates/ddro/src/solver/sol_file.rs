//! `.sol` solution files: one `<name> <value>` pair per line, `#` comments.

use super::SolveError;
use crate::model::MilpModel;
use std::collections::HashMap;

/// Parses a solution file against a model; variables absent from the file
/// are zero, names unknown to the model are ignored.
pub fn parse_sol_file(text: &str, model: &MilpModel) -> Result<Vec<f64>, SolveError> {
    let mut by_name: HashMap<&str, usize> = HashMap::new();
    for v in &model.variables {
        by_name.insert(v.name.as_str(), v.id);
    }
    let mut values = vec![0.0; model.num_vars()];
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('*') {
            continue;
        }
        let mut it = line.split_whitespace();
        let name = it.next().unwrap();
        let value = it
            .next()
            .ok_or_else(|| SolveError::Parse(format!("sol line {}: missing value", lineno + 1)))?;
        let value: f64 = value
            .parse()
            .map_err(|_| SolveError::Parse(format!("sol line {}: bad value `{value}`", lineno + 1)))?;
        if let Some(&id) = by_name.get(name) {
            values[id] = value;
        }
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{VarKind, VarTag};

    #[test]
    fn parses_names_and_skips_comments() {
        let mut m = MilpModel::new("m");
        m.add_variable("x", 0.0, 1.0, VarKind::Binary, VarTag::Decision).unwrap();
        m.add_variable("y", 0.0, 2.0, VarKind::Continuous, VarTag::Decision).unwrap();
        let text = "# solution\nx 1\nunknown 3\ny 0.5\n";
        let v = parse_sol_file(text, &m).unwrap();
        assert_eq!(v, vec![1.0, 0.5]);
    }

    #[test]
    fn missing_value_is_an_error() {
        let mut m = MilpModel::new("m");
        m.add_variable("x", 0.0, 1.0, VarKind::Binary, VarTag::Decision).unwrap();
        assert!(parse_sol_file("x\n", &m).is_err());
    }
}
