//! Free-format MPS writer and parser.
//!
//! Layout: NAME, optional OBJSENSE, ROWS (objective row `obj` first),
//! COLUMNS (integer variables bracketed by INTORG/INTEND markers, column
//! order = variable id order), RHS (objective constant as `obj` entry with
//! flipped sign), BOUNDS, ENDATA. Linear models only; category tags are
//! not representable and parse back as defaults.

use super::SolveError;
use crate::model::{ConTag, MilpModel, ObjSense, Sense, VarKind, VarTag};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

fn sanitize(name: &str, fallback: String) -> String {
    if name.is_empty() {
        return fallback;
    }
    name.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect()
}

pub fn write_mps_to_string(model: &MilpModel) -> Result<String, SolveError> {
    if !model.is_linear() {
        return Err(SolveError::QuadraticContent);
    }
    let mut s = String::new();
    let name = sanitize(&model.name, "model".into());
    writeln!(s, "NAME {name}").unwrap();
    if model.objective.sense == ObjSense::Max {
        writeln!(s, "OBJSENSE").unwrap();
        writeln!(s, "    MAX").unwrap();
    }
    writeln!(s, "ROWS").unwrap();
    writeln!(s, " N obj").unwrap();
    for c in &model.constraints {
        let letter = match c.sense {
            Sense::Le => 'L',
            Sense::Ge => 'G',
            Sense::Eq => 'E',
        };
        writeln!(s, " {letter} c{}", c.id).unwrap();
    }

    // Coefficients grouped per column, in row order.
    let mut obj_coef = vec![0.0; model.num_vars()];
    for &(v, c) in &model.objective.lin_terms {
        obj_coef[v] += c;
    }
    let mut col_entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.num_vars()];
    for c in &model.constraints {
        let mut row_sum: HashMap<usize, f64> = HashMap::new();
        for &(v, a) in &c.terms {
            *row_sum.entry(v).or_insert(0.0) += a;
        }
        let mut vars: Vec<usize> = row_sum.keys().copied().collect();
        vars.sort_unstable();
        for v in vars {
            col_entries[v].push((c.id, row_sum[&v]));
        }
    }

    writeln!(s, "COLUMNS").unwrap();
    let mut in_int = false;
    let mut marker = 0usize;
    for v in &model.variables {
        let integral = matches!(v.kind, VarKind::Binary | VarKind::Integer);
        if integral != in_int {
            let tag = if integral { "INTORG" } else { "INTEND" };
            writeln!(s, " M{marker} 'MARKER' '{tag}'").unwrap();
            marker += 1;
            in_int = integral;
        }
        let vname = sanitize(&v.name, format!("v{}", v.id));
        let mut wrote = false;
        if obj_coef[v.id] != 0.0 {
            writeln!(s, " {vname} obj {}", obj_coef[v.id]).unwrap();
            wrote = true;
        }
        for &(row, a) in &col_entries[v.id] {
            writeln!(s, " {vname} c{row} {a}").unwrap();
            wrote = true;
        }
        if !wrote {
            // Register columns that appear nowhere.
            writeln!(s, " {vname} obj 0").unwrap();
        }
    }
    if in_int {
        writeln!(s, " M{marker} 'MARKER' 'INTEND'").unwrap();
    }

    writeln!(s, "RHS").unwrap();
    if model.objective.constant != 0.0 {
        writeln!(s, " rhs obj {}", -model.objective.constant).unwrap();
    }
    for c in &model.constraints {
        if c.rhs != 0.0 {
            writeln!(s, " rhs c{} {}", c.id, c.rhs).unwrap();
        }
    }

    writeln!(s, "BOUNDS").unwrap();
    for v in &model.variables {
        let vname = sanitize(&v.name, format!("v{}", v.id));
        match (v.lb.is_finite(), v.ub.is_finite()) {
            (false, false) => writeln!(s, " FR bnd {vname}").unwrap(),
            (false, true) => {
                writeln!(s, " MI bnd {vname}").unwrap();
                writeln!(s, " UP bnd {vname} {}", v.ub).unwrap();
            }
            (true, false) => writeln!(s, " LO bnd {vname} {}", v.lb).unwrap(),
            (true, true) => {
                if v.lb == v.ub {
                    writeln!(s, " FX bnd {vname} {}", v.lb).unwrap();
                } else {
                    writeln!(s, " LO bnd {vname} {}", v.lb).unwrap();
                    writeln!(s, " UP bnd {vname} {}", v.ub).unwrap();
                }
            }
        }
    }
    writeln!(s, "ENDATA").unwrap();
    Ok(s)
}

pub fn write_mps(model: &MilpModel, path: &Path) -> Result<(), SolveError> {
    let s = write_mps_to_string(model)?;
    std::fs::write(path, s)?;
    Ok(())
}

#[derive(PartialEq)]
enum Section {
    None,
    ObjSense,
    Rows,
    Columns,
    Rhs,
    Bounds,
    Done,
}

pub fn parse_mps(text: &str) -> Result<MilpModel, SolveError> {
    let mut model = MilpModel::new("");
    let mut section = Section::None;
    let mut row_sense: Vec<(String, Sense)> = Vec::new();
    let mut obj_row: Option<String> = None;
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut var_index: HashMap<String, usize> = HashMap::new();
    let mut var_kind: Vec<VarKind> = Vec::new();
    let mut var_names: Vec<String> = Vec::new();
    let mut obj_terms: HashMap<usize, f64> = HashMap::new();
    let mut row_terms: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut row_rhs: Vec<f64> = Vec::new();
    let mut obj_const = 0.0;
    let mut bounds: Vec<(f64, f64, bool, bool)> = Vec::new(); // (lb, ub, lb_set, ub_set)
    let mut in_int = false;
    let mut sense = ObjSense::Min;

    let err = |msg: String| SolveError::Parse(format!("MPS: {msg}"));

    for raw in text.lines() {
        let line = raw.trim_end();
        if line.is_empty() || line.starts_with('*') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let is_header = !raw.starts_with(' ') && !raw.starts_with('\t');
        if is_header {
            match tokens[0].to_ascii_uppercase().as_str() {
                "NAME" => {
                    model.name = tokens.get(1).unwrap_or(&"").to_string();
                    continue;
                }
                "OBJSENSE" => {
                    section = Section::ObjSense;
                    if let Some(tok) = tokens.get(1) {
                        sense = parse_objsense(tok)?;
                        section = Section::None;
                    }
                    continue;
                }
                "ROWS" => {
                    section = Section::Rows;
                    continue;
                }
                "COLUMNS" => {
                    section = Section::Columns;
                    continue;
                }
                "RHS" => {
                    section = Section::Rhs;
                    continue;
                }
                "RANGES" => {
                    return Err(err("RANGES section is not supported".into()));
                }
                "BOUNDS" => {
                    section = Section::Bounds;
                    continue;
                }
                "ENDATA" => {
                    section = Section::Done;
                    continue;
                }
                _ => return Err(err(format!("unknown section `{}`", tokens[0]))),
            }
        }
        match section {
            Section::ObjSense => {
                sense = parse_objsense(tokens[0])?;
                section = Section::None;
            }
            Section::Rows => {
                if tokens.len() != 2 {
                    return Err(err(format!("bad ROWS line `{line}`")));
                }
                match tokens[0].to_ascii_uppercase().as_str() {
                    "N" => {
                        if obj_row.is_some() {
                            return Err(err("multiple objective rows".into()));
                        }
                        obj_row = Some(tokens[1].to_string());
                    }
                    letter => {
                        let s = match letter {
                            "L" => Sense::Le,
                            "G" => Sense::Ge,
                            "E" => Sense::Eq,
                            _ => return Err(err(format!("unknown row type `{letter}`"))),
                        };
                        row_index.insert(tokens[1].to_string(), row_sense.len());
                        row_sense.push((tokens[1].to_string(), s));
                        row_terms.push(Vec::new());
                        row_rhs.push(0.0);
                    }
                }
            }
            Section::Columns => {
                if tokens.len() >= 3 && tokens[1] == "'MARKER'" {
                    match tokens[2] {
                        "'INTORG'" => in_int = true,
                        "'INTEND'" => in_int = false,
                        other => return Err(err(format!("unknown marker `{other}`"))),
                    }
                    continue;
                }
                if tokens.len() < 3 || tokens.len() % 2 == 0 {
                    return Err(err(format!("bad COLUMNS line `{line}`")));
                }
                let vid = *var_index.entry(tokens[0].to_string()).or_insert_with(|| {
                    var_names.push(tokens[0].to_string());
                    var_kind.push(if in_int { VarKind::Integer } else { VarKind::Continuous });
                    bounds.push((0.0, f64::INFINITY, false, false));
                    var_names.len() - 1
                });
                for pair in tokens[1..].chunks(2) {
                    let value: f64 = pair[1]
                        .parse()
                        .map_err(|_| err(format!("bad number `{}`", pair[1])))?;
                    if Some(pair[0]) == obj_row.as_deref() {
                        if value != 0.0 {
                            *obj_terms.entry(vid).or_insert(0.0) += value;
                        }
                    } else {
                        let rid = *row_index
                            .get(pair[0])
                            .ok_or_else(|| err(format!("unknown row `{}`", pair[0])))?;
                        row_terms[rid].push((vid, value));
                    }
                }
            }
            Section::Rhs => {
                if tokens.len() < 3 || tokens.len() % 2 == 0 {
                    return Err(err(format!("bad RHS line `{line}`")));
                }
                for pair in tokens[1..].chunks(2) {
                    let value: f64 = pair[1]
                        .parse()
                        .map_err(|_| err(format!("bad number `{}`", pair[1])))?;
                    if Some(pair[0]) == obj_row.as_deref() {
                        obj_const = -value;
                    } else {
                        let rid = *row_index
                            .get(pair[0])
                            .ok_or_else(|| err(format!("unknown row `{}`", pair[0])))?;
                        row_rhs[rid] = value;
                    }
                }
            }
            Section::Bounds => {
                if tokens.len() < 3 {
                    return Err(err(format!("bad BOUNDS line `{line}`")));
                }
                let vid = *var_index
                    .get(tokens[2])
                    .ok_or_else(|| err(format!("bound on unknown column `{}`", tokens[2])))?;
                let value = || -> Result<f64, SolveError> {
                    tokens
                        .get(3)
                        .ok_or_else(|| err(format!("missing bound value in `{line}`")))?
                        .parse()
                        .map_err(|_| err(format!("bad number in `{line}`")))
                };
                let b = &mut bounds[vid];
                match tokens[0].to_ascii_uppercase().as_str() {
                    "UP" => {
                        b.1 = value()?;
                        b.3 = true;
                    }
                    "LO" => {
                        b.0 = value()?;
                        b.2 = true;
                    }
                    "FX" => {
                        let v = value()?;
                        *b = (v, v, true, true);
                    }
                    "FR" => *b = (f64::NEG_INFINITY, f64::INFINITY, true, true),
                    "MI" => {
                        b.0 = f64::NEG_INFINITY;
                        b.2 = true;
                    }
                    "PL" => {
                        b.1 = f64::INFINITY;
                        b.3 = true;
                    }
                    "BV" => {
                        *b = (0.0, 1.0, true, true);
                        var_kind[vid] = VarKind::Integer;
                    }
                    other => return Err(err(format!("unknown bound type `{other}`"))),
                }
            }
            Section::None | Section::Done => {
                return Err(err(format!("data outside any section: `{line}`")))
            }
        }
    }

    if obj_row.is_none() {
        return Err(err("no objective row".into()));
    }

    for (i, name) in var_names.iter().enumerate() {
        let (lb, ub, _, _) = bounds[i];
        let kind = if var_kind[i] == VarKind::Integer && lb == 0.0 && ub == 1.0 {
            VarKind::Binary
        } else {
            var_kind[i]
        };
        model
            .add_variable(name.clone(), lb, ub, kind, VarTag::Decision)
            .map_err(|e| err(e.to_string()))?;
    }
    for (rid, (_, s)) in row_sense.iter().enumerate() {
        // Duplicate (col,row) entries accumulate.
        let mut sum: HashMap<usize, f64> = HashMap::new();
        let mut order: Vec<usize> = Vec::new();
        for &(v, a) in &row_terms[rid] {
            if !sum.contains_key(&v) {
                order.push(v);
            }
            *sum.entry(v).or_insert(0.0) += a;
        }
        let terms: Vec<(usize, f64)> = order.into_iter().map(|v| (v, sum[&v])).collect();
        model
            .add_linear_constraint(terms, *s, row_rhs[rid], ConTag::Structural)
            .map_err(|e| err(e.to_string()))?;
    }
    model.objective.sense = sense;
    model.objective.constant = obj_const;
    let mut vids: Vec<usize> = obj_terms.keys().copied().collect();
    vids.sort_unstable();
    model.objective.lin_terms = vids.into_iter().map(|v| (v, obj_terms[&v])).collect();
    Ok(model)
}

fn parse_objsense(tok: &str) -> Result<ObjSense, SolveError> {
    match tok.to_ascii_uppercase().as_str() {
        "MAX" | "MAXIMIZE" => Ok(ObjSense::Max),
        "MIN" | "MINIMIZE" => Ok(ObjSense::Min),
        other => Err(SolveError::Parse(format!("MPS: unknown objective sense `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VarTag;

    #[test]
    fn round_trip_small_model() {
        let mut m = MilpModel::new("rt");
        let x = m.add_variable("x", 0.0, 1.0, VarKind::Binary, VarTag::Decision).unwrap();
        let y = m
            .add_variable("y", -2.5, f64::INFINITY, VarKind::Continuous, VarTag::Dual)
            .unwrap();
        let z = m
            .add_variable("z", f64::NEG_INFINITY, f64::INFINITY, VarKind::Continuous, VarTag::Dual)
            .unwrap();
        m.add_linear_constraint(vec![(x, 2.0), (y, -1.25)], Sense::Le, 4.5, ConTag::Structural)
            .unwrap();
        m.add_linear_constraint(vec![(y, 1.0), (z, 3.0)], Sense::Eq, -1.0, ConTag::Structural)
            .unwrap();
        m.objective.sense = ObjSense::Max;
        m.objective.lin_terms = vec![(x, 1.0), (z, -0.75)];
        m.objective.constant = 2.25;

        let text = write_mps_to_string(&m).unwrap();
        let p = parse_mps(&text).unwrap();
        assert_eq!(p.num_vars(), 3);
        assert_eq!(p.num_constraints(), 2);
        assert_eq!(p.objective.sense, ObjSense::Max);
        assert_eq!(p.objective.constant, 2.25);
        assert_eq!(p.variables[0].kind, VarKind::Binary);
        assert_eq!(p.variables[1].lb, -2.5);
        assert!(p.variables[2].lb.is_infinite() && p.variables[2].ub.is_infinite());
        assert_eq!(p.constraints[0].terms, vec![(x, 2.0), (y, -1.25)]);
        assert_eq!(p.constraints[1].rhs, -1.0);
        assert_eq!(p.objective.lin_terms, vec![(x, 1.0), (z, -0.75)]);
    }

    #[test]
    fn quadratic_model_rejected() {
        let mut m = MilpModel::new("q");
        let x = m.add_variable("x", 0.0, 1.0, VarKind::Continuous, VarTag::Decision).unwrap();
        m.add_quad_constraint(vec![(x, x, 1.0)], vec![], Sense::Le, 1.0, ConTag::Structural)
            .unwrap();
        assert!(matches!(write_mps_to_string(&m), Err(SolveError::QuadraticContent)));
    }

    #[test]
    fn objective_constant_via_rhs() {
        let mut m = MilpModel::new("k");
        m.add_variable("x", 0.0, 1.0, VarKind::Continuous, VarTag::Decision).unwrap();
        m.objective.lin_terms = vec![(0, 1.0)];
        m.objective.constant = -3.5;
        let text = write_mps_to_string(&m).unwrap();
        assert!(text.contains("rhs obj 3.5"));
        let p = parse_mps(&text).unwrap();
        assert_eq!(p.objective.constant, -3.5);
    }
}
