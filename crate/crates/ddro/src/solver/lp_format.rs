//! LP file format writer and parser with quadratic blocks.
//!
//! Quadratic terms are written in `[ ... ]` blocks: divided by two in the
//! objective (coefficients are doubled on write, halved on read) and plain
//! in constraints. This carries the portfolio models, whose bilinear terms
//! cannot be linearized exactly.

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

fn var_name(model: &MilpModel, id: usize) -> String {
    sanitize(&model.variables[id].name, format!("v{id}"))
}

fn push_term(out: &mut String, first: &mut bool, coef: f64, body: &str) {
    if coef == 0.0 {
        return;
    }
    let mag = coef.abs();
    if *first {
        if coef < 0.0 {
            out.push_str("- ");
        }
        *first = false;
    } else if coef < 0.0 {
        out.push_str(" - ");
    } else {
        out.push_str(" + ");
    }
    write!(out, "{mag} {body}").unwrap();
}

fn write_expr(
    model: &MilpModel,
    lin: &[(usize, f64)],
    quad: &[(usize, usize, f64)],
    quad_scale: f64,
    constant: f64,
) -> String {
    let mut s = String::new();
    let mut first = true;
    for &(v, c) in lin {
        push_term(&mut s, &mut first, c, &var_name(model, v));
    }
    if !quad.is_empty() {
        if first {
            s.push_str("[ ");
        } else {
            s.push_str(" + [ ");
        }
        let mut qfirst = true;
        for &(i, j, c) in quad {
            let body = if i == j {
                format!("{} ^ 2", var_name(model, i))
            } else {
                format!("{} * {}", var_name(model, i), var_name(model, j))
            };
            push_term(&mut s, &mut qfirst, c * quad_scale, &body);
        }
        s.push_str(" ]");
        if quad_scale == 2.0 {
            s.push_str(" / 2");
        }
        first = false;
    }
    if constant != 0.0 {
        push_term(&mut s, &mut first, constant, "");
        // trailing space from empty body
        while s.ends_with(' ') {
            s.pop();
        }
    }
    if first {
        s.push('0');
    }
    s
}

pub fn write_lp_format_to_string(model: &MilpModel) -> String {
    let mut s = String::new();
    writeln!(s, "\\ {}", sanitize(&model.name, "model".into())).unwrap();
    let head = match model.objective.sense {
        ObjSense::Min => "Minimize",
        ObjSense::Max => "Maximize",
    };
    writeln!(s, "{head}").unwrap();
    writeln!(
        s,
        " obj: {}",
        write_expr(
            model,
            &model.objective.lin_terms,
            &model.objective.quad_terms,
            2.0,
            model.objective.constant,
        )
    )
    .unwrap();
    writeln!(s, "Subject To").unwrap();
    for c in &model.constraints {
        writeln!(
            s,
            " c{}: {} {} {}",
            c.id,
            write_expr(model, &c.terms, &[], 1.0, 0.0),
            c.sense,
            c.rhs
        )
        .unwrap();
    }
    for q in &model.quad_constraints {
        writeln!(
            s,
            " q{}: {} {} {}",
            q.id,
            write_expr(model, &q.lin_terms, &q.quad_terms, 1.0, 0.0),
            q.sense,
            q.rhs
        )
        .unwrap();
    }
    writeln!(s, "Bounds").unwrap();
    for v in &model.variables {
        let name = var_name(model, v.id);
        match (v.lb.is_finite(), v.ub.is_finite()) {
            (false, false) => writeln!(s, " {name} free").unwrap(),
            (false, true) => writeln!(s, " -inf <= {name} <= {}", v.ub).unwrap(),
            (true, false) => writeln!(s, " {name} >= {}", v.lb).unwrap(),
            (true, true) => {
                if v.lb == v.ub {
                    writeln!(s, " {name} = {}", v.lb).unwrap()
                } else {
                    writeln!(s, " {} <= {name} <= {}", v.lb, v.ub).unwrap()
                }
            }
        }
    }
    let binaries: Vec<String> = model
        .variables
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .map(|v| var_name(model, v.id))
        .collect();
    if !binaries.is_empty() {
        writeln!(s, "Binaries").unwrap();
        writeln!(s, " {}", binaries.join(" ")).unwrap();
    }
    let generals: Vec<String> = model
        .variables
        .iter()
        .filter(|v| v.kind == VarKind::Integer)
        .map(|v| var_name(model, v.id))
        .collect();
    if !generals.is_empty() {
        writeln!(s, "Generals").unwrap();
        writeln!(s, " {}", generals.join(" ")).unwrap();
    }
    writeln!(s, "End").unwrap();
    s
}

pub fn write_lp_format(model: &MilpModel, path: &Path) -> Result<(), SolveError> {
    std::fs::write(path, write_lp_format_to_string(model))?;
    Ok(())
}

#[derive(Debug, Default)]
struct Expr {
    lin: Vec<(String, f64)>,
    quad: Vec<(String, String, f64)>,
    constant: f64,
}

struct Tokens<'a> {
    toks: Vec<&'a str>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.pos).copied()
    }
    fn next(&mut self) -> Option<&'a str> {
        let t = self.peek();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }
}

fn is_number(tok: &str) -> bool {
    tok.parse::<f64>().is_ok()
}

fn section_of(tok: &str) -> Option<&'static str> {
    match tok.to_ascii_lowercase().as_str() {
        "minimize" | "minimise" | "min" => Some("min"),
        "maximize" | "maximise" | "max" => Some("max"),
        "subject" | "st" | "s.t." | "such" => Some("st"),
        "bounds" | "bound" => Some("bounds"),
        "binaries" | "binary" | "bin" => Some("bin"),
        "generals" | "general" | "gen" => Some("gen"),
        "end" => Some("end"),
        _ => None,
    }
}

/// Parses an expression until a sense token, a section keyword, or a label.
fn parse_expr(t: &mut Tokens, err: &dyn Fn(String) -> SolveError) -> Result<Expr, SolveError> {
    let mut e = Expr::default();
    let mut sign = 1.0;
    let mut pending: Option<f64> = None;
    let mut in_block = false;
    let mut block_scale = 1.0;
    let mut block_terms: Vec<(String, String, f64)> = Vec::new();

    loop {
        let Some(tok) = t.peek() else { break };
        match tok {
            "<=" | ">=" | "=" | "<" | ">" => break,
            "+" => {
                t.next();
                sign = 1.0;
            }
            "-" => {
                t.next();
                sign = -sign;
            }
            "[" => {
                t.next();
                in_block = true;
                block_terms.clear();
                block_scale = 1.0;
            }
            "]" => {
                t.next();
                if t.peek() == Some("/") {
                    t.next();
                    let d = t.next().ok_or_else(|| err("missing divisor".into()))?;
                    let d: f64 = d.parse().map_err(|_| err(format!("bad divisor `{d}`")))?;
                    block_scale = 1.0 / d;
                }
                for (a, b, c) in block_terms.drain(..) {
                    e.quad.push((a, b, c * block_scale));
                }
                in_block = false;
                sign = 1.0;
                pending = None;
            }
            _ if is_number(tok) => {
                let v: f64 = tok.parse().unwrap();
                t.next();
                if pending.is_some() {
                    return Err(err(format!("two numbers in a row near `{tok}`")));
                }
                pending = Some(v);
            }
            _ => {
                // Section keyword or a constraint label ends the expression,
                // unless a coefficient is pending (then it is a name).
                if !in_block && pending.is_none() && (section_of(tok).is_some() || tok.ends_with(':')) {
                    break;
                }
                let name = tok.to_string();
                t.next();
                let coef = sign * pending.take().unwrap_or(1.0);
                sign = 1.0;
                // Lookahead: `^ 2` or `* other`.
                if t.peek() == Some("^") {
                    t.next();
                    let two = t.next().ok_or_else(|| err("missing exponent".into()))?;
                    if two != "2" {
                        return Err(err(format!("only power 2 is supported, got `{two}`")));
                    }
                    if in_block {
                        block_terms.push((name.clone(), name, coef));
                    } else {
                        e.quad.push((name.clone(), name, coef));
                    }
                } else if t.peek() == Some("*") {
                    t.next();
                    let other = t.next().ok_or_else(|| err("missing product factor".into()))?;
                    if in_block {
                        block_terms.push((name, other.to_string(), coef));
                    } else {
                        e.quad.push((name, other.to_string(), coef));
                    }
                } else if in_block {
                    return Err(err(format!("linear term `{name}` inside a quadratic block")));
                } else {
                    e.lin.push((name, coef));
                }
            }
        }
        // A pending number followed by the end of the expression (sense
        // token, section keyword, or label) is a constant term.
        if pending.is_some() {
            let flush = match t.peek() {
                None | Some("<=") | Some(">=") | Some("=") | Some("<") | Some(">") => true,
                Some(tok2) if !in_block && (section_of(tok2).is_some() || tok2.ends_with(':')) => true,
                _ => false,
            };
            if flush {
                e.constant += sign * pending.take().unwrap();
                sign = 1.0;
            }
        }
    }
    if let Some(v) = pending {
        e.constant += sign * v;
    }
    Ok(e)
}

pub fn parse_lp_format(text: &str) -> Result<MilpModel, SolveError> {
    let err = |msg: String| SolveError::Parse(format!("LP format: {msg}"));

    // Strip comments, pad punctuation so it tokenizes.
    let mut cleaned = String::new();
    for line in text.lines() {
        let line = match line.find('\\') {
            Some(i) => &line[..i],
            None => line,
        };
        cleaned.push_str(line);
        cleaned.push('\n');
    }
    for pat in ["[", "]", "+", "-", "*", "^", "/"] {
        cleaned = cleaned.replace(pat, &format!(" {pat} "));
    }
    cleaned = cleaned
        .replace("<=", " <= ")
        .replace(">=", " >= ")
        .replace("< =", " <= ")
        .replace("> =", " >= ");
    // Re-join scientific-notation exponents split by the +/- padding
    // (e.g. `1e - 5`). Numbers are written without exponents by this
    // writer, so this only matters for foreign files.
    let toks_raw: Vec<String> = {
        let mut out: Vec<String> = Vec::new();
        let toks: Vec<&str> = cleaned.split_whitespace().collect();
        let mut i = 0;
        while i < toks.len() {
            let t = toks[i];
            let splittable = (t.ends_with('e') || t.ends_with('E'))
                && t.len() > 1
                && t[..t.len() - 1].chars().all(|c| c.is_ascii_digit() || c == '.')
                && i + 2 < toks.len()
                && (toks[i + 1] == "+" || toks[i + 1] == "-")
                && toks[i + 2].chars().all(|c| c.is_ascii_digit());
            if splittable {
                out.push(format!("{}{}{}", t, toks[i + 1], toks[i + 2]));
                i += 3;
            } else {
                out.push(t.to_string());
                i += 1;
            }
        }
        out
    };
    let toks: Vec<&str> = toks_raw.iter().map(|s| s.as_str()).collect();
    let mut t = Tokens { toks, pos: 0 };

    let mut model = MilpModel::new("lp_model");
    let mut names: HashMap<String, usize> = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut objective: Option<(ObjSense, Expr)> = None;
    let mut cons: Vec<(Expr, Sense, f64)> = Vec::new();
    let mut bounds: HashMap<String, (f64, f64)> = HashMap::new();
    let mut binaries: Vec<String> = Vec::new();
    let mut generals: Vec<String> = Vec::new();

    let register = |e: &Expr, order: &mut Vec<String>, names: &mut HashMap<String, usize>| {
        for (n, _) in &e.lin {
            if !names.contains_key(n) {
                names.insert(n.clone(), order.len());
                order.push(n.clone());
            }
        }
        for (a, b, _) in &e.quad {
            for n in [a, b] {
                if !names.contains_key(n) {
                    names.insert(n.clone(), order.len());
                    order.push(n.clone());
                }
            }
        }
    };

    let mut state = "";
    while let Some(tok) = t.peek() {
        if let Some(sec) = section_of(tok) {
            t.next();
            if sec == "st" {
                // consume optional "To"
                if t.peek().map(|s| s.to_ascii_lowercase()) == Some("to".into()) {
                    t.next();
                }
            }
            if sec == "end" {
                break;
            }
            state = sec;
            if sec == "min" || sec == "max" {
                // objective, optionally labeled
                if t.peek().map(|s| s.ends_with(':')) == Some(true) {
                    t.next();
                }
                let e = parse_expr(&mut t, &err)?;
                register(&e, &mut order, &mut names);
                objective = Some((if sec == "min" { ObjSense::Min } else { ObjSense::Max }, e));
            }
            continue;
        }
        match state {
            "st" => {
                if tok.ends_with(':') {
                    t.next();
                }
                let e = parse_expr(&mut t, &err)?;
                let sense = match t.next() {
                    Some("<=") | Some("<") => Sense::Le,
                    Some(">=") | Some(">") => Sense::Ge,
                    Some("=") => Sense::Eq,
                    other => return Err(err(format!("expected sense, got {other:?}"))),
                };
                let rhs_tok = t.next().ok_or_else(|| err("missing rhs".into()))?;
                let mut rhs: f64 = if rhs_tok == "-" {
                    let v: f64 = t
                        .next()
                        .ok_or_else(|| err("missing rhs".into()))?
                        .parse()
                        .map_err(|_| err(format!("bad rhs near `{rhs_tok}`")))?;
                    -v
                } else {
                    rhs_tok.parse().map_err(|_| err(format!("bad rhs `{rhs_tok}`")))?
                };
                rhs -= e.constant;
                register(&e, &mut order, &mut names);
                cons.push((e, sense, rhs));
            }
            "bounds" => {
                // Forms: `a <= x <= b`, `x <= b`, `x >= a`, `x = a`, `x free`, `-inf <= x <= b`
                let first = t.next().unwrap();
                let parse_bound_val = |tok: &str| -> Result<f64, SolveError> {
                    match tok.to_ascii_lowercase().as_str() {
                        "inf" | "infinity" => Ok(f64::INFINITY),
                        _ => tok.parse().map_err(|_| err(format!("bad bound `{tok}`"))),
                    }
                };
                let mut neg = false;
                let mut lead = first;
                if lead == "-" {
                    neg = true;
                    lead = t.next().ok_or_else(|| err("dangling -".into()))?;
                }
                if is_number(lead) || lead.eq_ignore_ascii_case("inf") || lead.eq_ignore_ascii_case("infinity") {
                    let mut lo = parse_bound_val(lead)?;
                    if neg {
                        lo = -lo;
                    }
                    if t.next() != Some("<=") {
                        return Err(err("expected `<=` in bound".into()));
                    }
                    let name = t.next().ok_or_else(|| err("missing name in bound".into()))?.to_string();
                    if t.next() != Some("<=") {
                        return Err(err("expected `<=` in bound".into()));
                    }
                    let mut up_neg = false;
                    let mut up_tok = t.next().ok_or_else(|| err("missing upper bound".into()))?;
                    if up_tok == "-" {
                        up_neg = true;
                        up_tok = t.next().ok_or_else(|| err("missing upper bound".into()))?;
                    }
                    let mut hi = parse_bound_val(up_tok)?;
                    if up_neg {
                        hi = -hi;
                    }
                    let entry = bounds.entry(name).or_insert((0.0, f64::INFINITY));
                    *entry = (lo, hi);
                } else {
                    let name = lead.to_string();
                    match t.peek() {
                        Some(k) if k.eq_ignore_ascii_case("free") => {
                            t.next();
                            bounds.insert(name, (f64::NEG_INFINITY, f64::INFINITY));
                        }
                        Some("<=") => {
                            t.next();
                            let mut up_neg = false;
                            let mut v = t.next().ok_or_else(|| err("missing bound".into()))?;
                            if v == "-" {
                                up_neg = true;
                                v = t.next().ok_or_else(|| err("missing bound".into()))?;
                            }
                            let mut hi = parse_bound_val(v)?;
                            if up_neg {
                                hi = -hi;
                            }
                            let entry = bounds.entry(name).or_insert((0.0, f64::INFINITY));
                            entry.1 = hi;
                        }
                        Some(">=") => {
                            t.next();
                            let mut lo_neg = false;
                            let mut v = t.next().ok_or_else(|| err("missing bound".into()))?;
                            if v == "-" {
                                lo_neg = true;
                                v = t.next().ok_or_else(|| err("missing bound".into()))?;
                            }
                            let mut lo = parse_bound_val(v)?;
                            if lo_neg {
                                lo = -lo;
                            }
                            let entry = bounds.entry(name).or_insert((0.0, f64::INFINITY));
                            entry.0 = lo;
                        }
                        Some("=") => {
                            t.next();
                            let mut v_neg = false;
                            let mut v = t.next().ok_or_else(|| err("missing bound".into()))?;
                            if v == "-" {
                                v_neg = true;
                                v = t.next().ok_or_else(|| err("missing bound".into()))?;
                            }
                            let mut x = parse_bound_val(v)?;
                            if v_neg {
                                x = -x;
                            }
                            bounds.insert(name, (x, x));
                        }
                        other => return Err(err(format!("bad bound line near {other:?}"))),
                    }
                }
            }
            "bin" => {
                binaries.push(t.next().unwrap().to_string());
            }
            "gen" => {
                generals.push(t.next().unwrap().to_string());
            }
            _ => return Err(err(format!("unexpected token `{tok}`"))),
        }
    }

    let (sense, obj_expr) = objective.ok_or_else(|| err("no objective".into()))?;

    // Ensure bound-only / kind-only variables are registered too.
    for n in bounds.keys().chain(binaries.iter()).chain(generals.iter()) {
        if !names.contains_key(n) {
            names.insert(n.clone(), order.len());
            order.push(n.clone());
        }
    }

    for n in &order {
        let (mut lb, mut ub) = bounds.get(n).copied().unwrap_or((0.0, f64::INFINITY));
        let kind = if binaries.contains(n) {
            lb = 0.0;
            ub = 1.0;
            VarKind::Binary
        } else if generals.contains(n) {
            VarKind::Integer
        } else {
            VarKind::Continuous
        };
        model
            .add_variable(n.clone(), lb, ub, kind, VarTag::Decision)
            .map_err(|e| err(e.to_string()))?;
    }

    let to_lin = |e: &Expr| -> Vec<(usize, f64)> {
        let mut acc: HashMap<usize, f64> = HashMap::new();
        let mut ord = Vec::new();
        for (n, c) in &e.lin {
            let id = names[n];
            if !acc.contains_key(&id) {
                ord.push(id);
            }
            *acc.entry(id).or_insert(0.0) += c;
        }
        ord.into_iter().map(|id| (id, acc[&id])).collect()
    };
    let to_quad = |e: &Expr| -> Vec<(usize, usize, f64)> {
        e.quad.iter().map(|(a, b, c)| (names[a], names[b], *c)).collect()
    };

    model.objective.sense = sense;
    model.objective.lin_terms = to_lin(&obj_expr);
    model.objective.quad_terms = to_quad(&obj_expr);
    model.objective.constant = obj_expr.constant;
    for (e, s, rhs) in &cons {
        if e.quad.is_empty() {
            model
                .add_linear_constraint(to_lin(e), *s, *rhs, ConTag::Structural)
                .map_err(|er| err(er.to_string()))?;
        } else {
            model
                .add_quad_constraint(to_quad(e), to_lin(e), *s, *rhs, ConTag::Structural)
                .map_err(|er| err(er.to_string()))?;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_quadratic_portfolio_style() {
        let mut m = MilpModel::new("pf");
        let y0 = m.add_variable("y0", 0.0, 1.0, VarKind::Continuous, VarTag::Decision).unwrap();
        let y1 = m.add_variable("y1", 0.0, 1.0, VarKind::Continuous, VarTag::Decision).unwrap();
        let s0 = m.add_variable("s0", 0.0, 1.0, VarKind::Binary, VarTag::Decision).unwrap();
        m.add_quad_constraint(
            vec![(y0, y0, 1.5), (y0, y1, -0.25), (y1, y1, 2.0)],
            vec![],
            Sense::Le,
            0.75,
            ConTag::Structural,
        )
        .unwrap();
        m.add_linear_constraint(vec![(y0, 1.0), (y1, 1.0)], Sense::Eq, 1.0, ConTag::Structural)
            .unwrap();
        m.add_linear_constraint(vec![(y0, 1.0), (s0, -1.0)], Sense::Le, 0.0, ConTag::Structural)
            .unwrap();
        m.objective.sense = ObjSense::Max;
        m.objective.lin_terms = vec![(y0, 1.25), (y1, 0.5)];
        m.objective.quad_terms = vec![(y0, s0, -0.125)];
        m.objective.constant = 3.0;

        let text = write_lp_format_to_string(&m);
        let p = parse_lp_format(&text).unwrap();
        assert_eq!(p.num_vars(), 3);
        assert_eq!(p.constraints.len(), 2);
        assert_eq!(p.quad_constraints.len(), 1);
        assert_eq!(p.objective.sense, ObjSense::Max);
        assert_eq!(p.objective.constant, 3.0);
        assert_eq!(p.objective.quad_terms, vec![(y0, s0, -0.125)]);
        let q = &p.quad_constraints[0];
        assert_eq!(q.quad_terms, vec![(0, 0, 1.5), (0, 1, -0.25), (1, 1, 2.0)]);
        assert_eq!(q.rhs, 0.75);
        assert_eq!(p.variables[s0].kind, VarKind::Binary);
    }

    #[test]
    fn parses_negative_rhs_and_constants() {
        let text = "Minimize\n obj: 2 x - 3 y + 1.5\nSubject To\n c0: x + y >= -2\nBounds\n x free\nEnd\n";
        let m = parse_lp_format(text).unwrap();
        assert_eq!(m.objective.constant, 1.5);
        assert_eq!(m.constraints[0].rhs, -2.0);
        assert!(m.variables[0].lb.is_infinite());
    }
}
