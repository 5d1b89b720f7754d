//! LP file format export and a reader for the subset this crate emits.
//!
//! The writer produces the classic `Minimize / Subject To / Bounds /
//! Binaries / End` layout accepted by mainstream solvers (CPLEX, Gurobi,
//! HiGHS, CBC, GLPK). Numerals carry 17 significant digits so values
//! round-trip exactly through text.

use super::{Direction, LinExpr, MilpError, MilpModel, Sense, VarId, VarKind};

fn fmt_num(v: f64) -> String {
    format!("{:.16e}", v)
}

/// Renders a model as LP-format text.
pub fn export_lp(model: &MilpModel) -> String {
    let mut out = String::new();
    match model.direction {
        Direction::Minimize => out.push_str("Minimize\n"),
        Direction::Maximize => out.push_str("Maximize\n"),
    }
    out.push_str(" obj:");
    if model.objective.is_empty() {
        out.push_str(" 0 ");
        if let Some(v) = model.variables().first() {
            out.push_str(&v.name);
        }
    } else {
        for (v, c) in model.objective.terms() {
            out.push_str(&format!(" + {} {}", fmt_num(*c), model.var(*v).name));
        }
    }
    out.push('\n');

    out.push_str("Subject To\n");
    for (i, c) in model.constraints().iter().enumerate() {
        out.push_str(&format!(" c{}:", i));
        if c.expr.is_empty() {
            // Constant rows keep a zero term so parsers accept the line.
            out.push_str(" 0 ");
            out.push_str(&model.variables().first().map(|v| v.name.as_str()).unwrap_or("x"));
        } else {
            for (v, coef) in c.expr.terms() {
                out.push_str(&format!(" + {} {}", fmt_num(*coef), model.var(*v).name));
            }
        }
        out.push_str(&format!(" {} {}\n", c.sense, fmt_num(c.rhs)));
    }

    out.push_str("Bounds\n");
    for v in model.variables() {
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (true, true) => {
                out.push_str(&format!(" {} <= {} <= {}\n", fmt_num(v.lower), v.name, fmt_num(v.upper)))
            }
            (true, false) => out.push_str(&format!(" {} >= {}\n", v.name, fmt_num(v.lower))),
            (false, true) => out.push_str(&format!(" {} <= {}\n", v.name, fmt_num(v.upper))),
            (false, false) => out.push_str(&format!(" {} free\n", v.name)),
        }
    }

    let binaries: Vec<&str> = model
        .variables()
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .map(|v| v.name.as_str())
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for chunk in binaries.chunks(8) {
            out.push_str(" ");
            out.push_str(&chunk.join(" "));
            out.push('\n');
        }
    }
    out.push_str("End\n");
    out
}

/// Parses LP text produced by [`export_lp`] back into a model. Not a general
/// LP reader: it accepts the subset this crate writes (one constraint per
/// line, explicit `+`-separated terms, the four bound forms).
pub fn parse_lp(text: &str) -> Result<MilpModel, MilpError> {
    #[derive(PartialEq)]
    enum Section {
        Preamble,
        Objective,
        Constraints,
        Bounds,
        Binaries,
        Done,
    }

    let mut model = MilpModel::new();
    let mut direction = Direction::Minimize;
    let mut objective_terms: Vec<(String, f64)> = Vec::new();
    let mut constraint_lines: Vec<(usize, String)> = Vec::new();
    let mut bounds: Vec<(usize, String)> = Vec::new();
    let mut binaries: Vec<String> = Vec::new();
    let mut section = Section::Preamble;

    let err = |line: usize, msg: &str| MilpError::LpParse { line, msg: msg.to_string() };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('\\') {
            continue;
        }
        let lower = line.to_ascii_lowercase();
        match lower.as_str() {
            "minimize" | "min" => {
                direction = Direction::Minimize;
                section = Section::Objective;
                continue;
            }
            "maximize" | "max" => {
                direction = Direction::Maximize;
                section = Section::Objective;
                continue;
            }
            "subject to" | "st" | "s.t." => {
                section = Section::Constraints;
                continue;
            }
            "bounds" => {
                section = Section::Bounds;
                continue;
            }
            "binaries" | "binary" | "bin" => {
                section = Section::Binaries;
                continue;
            }
            "end" => {
                section = Section::Done;
                continue;
            }
            _ => {}
        }
        match section {
            Section::Preamble | Section::Done => return Err(err(line_no, "unexpected content")),
            Section::Objective => {
                let body = line.split_once(':').map(|(_, b)| b).unwrap_or(line);
                objective_terms.extend(parse_terms(body, line_no)?);
            }
            Section::Constraints => constraint_lines.push((line_no, line.to_string())),
            Section::Bounds => bounds.push((line_no, line.to_string())),
            Section::Binaries => binaries.extend(line.split_whitespace().map(str::to_string)),
        }
    }

    // Collect variable names in first-appearance order, then bounds/kinds.
    let mut names: Vec<String> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mention = |n: &str, names: &mut Vec<String>, seen: &mut std::collections::HashSet<String>| {
        if seen.insert(n.to_string()) {
            names.push(n.to_string());
        }
    };
    for (n, _) in &objective_terms {
        mention(n, &mut names, &mut seen);
    }
    let mut parsed_constraints = Vec::new();
    for (line_no, line) in &constraint_lines {
        let body = line.split_once(':').map(|(_, b)| b).unwrap_or(line);
        let (sense, pos) = if let Some(p) = body.find("<=") {
            (Sense::Le, p)
        } else if let Some(p) = body.find(">=") {
            (Sense::Ge, p)
        } else if let Some(p) = body.find('=') {
            (Sense::Eq, p)
        } else {
            return Err(err(*line_no, "constraint has no sense"));
        };
        let lhs = &body[..pos];
        let rhs_text = body[pos..].trim_start_matches(['<', '>', '=']).trim();
        let rhs: f64 = rhs_text.parse().map_err(|_| err(*line_no, "bad rhs"))?;
        let terms = parse_terms(lhs, *line_no)?;
        for (n, _) in &terms {
            mention(n, &mut names, &mut seen);
        }
        parsed_constraints.push((terms, sense, rhs));
    }
    #[allow(clippy::type_complexity)]
    let mut bound_specs: Vec<(String, Option<f64>, Option<f64>, bool)> = Vec::new();
    for (line_no, line) in &bounds {
        let spec = parse_bound_line(line, *line_no)?;
        mention(&spec.0, &mut names, &mut seen);
        bound_specs.push(spec);
    }
    for b in &binaries {
        mention(b, &mut names, &mut seen);
    }

    let mut ids = std::collections::HashMap::new();
    for name in &names {
        let kind = if binaries.iter().any(|b| b == name) { VarKind::Binary } else { VarKind::Continuous };
        let (mut lo, mut hi) = match kind {
            VarKind::Binary => (0.0, 1.0),
            VarKind::Continuous => (f64::NEG_INFINITY, f64::INFINITY),
        };
        for (n, blo, bhi, free) in &bound_specs {
            if n == name {
                if *free {
                    lo = f64::NEG_INFINITY;
                    hi = f64::INFINITY;
                } else {
                    if let Some(v) = blo {
                        lo = *v;
                    }
                    if let Some(v) = bhi {
                        hi = *v;
                    }
                }
            }
        }
        let id = model.add_variable(kind, lo, hi, name.clone())?;
        ids.insert(name.clone(), id);
    }

    let to_expr = |terms: &[(String, f64)], ids: &std::collections::HashMap<String, VarId>| {
        let mut e = LinExpr::new();
        for (n, c) in terms {
            e.add(ids[n], *c);
        }
        e
    };
    for (terms, sense, rhs) in &parsed_constraints {
        model.add_constraint(to_expr(terms, &ids), *sense, *rhs)?;
    }
    model.set_objective(to_expr(&objective_terms, &ids), direction);
    Ok(model)
}

fn parse_terms(text: &str, line_no: usize) -> Result<Vec<(String, f64)>, MilpError> {
    let mut out = Vec::new();
    let spaced = text.replace('+', " + ").replace('-', " - ");
    let toks: Vec<&str> = spaced.split_whitespace().collect();
    let mut i = 0;
    let mut sign = 1.0;
    while i < toks.len() {
        match toks[i] {
            "+" => {
                sign = 1.0;
                i += 1;
            }
            "-" => {
                sign = -sign;
                i += 1;
            }
            t => {
                // Either "coef name" or bare "name". Scientific notation may
                // itself contain a sign that was split; re-join e-exponents.
                let mut num_text = t.to_string();
                let mut j = i + 1;
                if (num_text.ends_with('e') || num_text.ends_with('E')) && j < toks.len() {
                    // e.g. "1.5e" "-" "2"
                    if toks[j] == "-" || toks[j] == "+" {
                        num_text.push_str(toks[j]);
                        j += 1;
                    }
                    if j < toks.len() {
                        num_text.push_str(toks[j]);
                        j += 1;
                    }
                }
                if let Ok(c) = num_text.parse::<f64>() {
                    if j < toks.len() && !matches!(toks[j], "+" | "-") {
                        out.push((toks[j].to_string(), sign * c));
                        i = j + 1;
                    } else {
                        return Err(MilpError::LpParse {
                            line: line_no,
                            msg: format!("dangling coefficient {num_text}"),
                        });
                    }
                } else {
                    out.push((t.to_string(), sign));
                    i += 1;
                }
                sign = 1.0;
            }
        }
    }
    Ok(out)
}

type BoundSpec = (String, Option<f64>, Option<f64>, bool);

fn parse_bound_line(line: &str, line_no: usize) -> Result<BoundSpec, MilpError> {
    let err = |msg: &str| MilpError::LpParse { line: line_no, msg: msg.to_string() };
    let l = line.trim();
    if let Some(name) = l.strip_suffix("free").or_else(|| l.strip_suffix("Free")) {
        return Ok((name.trim().to_string(), None, None, true));
    }
    let parts: Vec<&str> = l.split("<=").map(str::trim).collect();
    match parts.len() {
        3 => {
            let lo: f64 = parts[0].parse().map_err(|_| err("bad lower bound"))?;
            let hi: f64 = parts[2].parse().map_err(|_| err("bad upper bound"))?;
            Ok((parts[1].to_string(), Some(lo), Some(hi), false))
        }
        2 => {
            // "name <= hi" or "lo <= name"
            if let Ok(hi) = parts[1].parse::<f64>() {
                Ok((parts[0].to_string(), None, Some(hi), false))
            } else if let Ok(lo) = parts[0].parse::<f64>() {
                Ok((parts[1].to_string(), Some(lo), None, false))
            } else {
                Err(err("unrecognized bound line"))
            }
        }
        _ => {
            let ge: Vec<&str> = l.split(">=").map(str::trim).collect();
            if ge.len() == 2 {
                let lo: f64 = ge[1].parse().map_err(|_| err("bad lower bound"))?;
                return Ok((ge[0].to_string(), Some(lo), None, false));
            }
            Err(err("unrecognized bound line"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{solve, SolveConfig, SolveStatus};

    #[test]
    fn empty_model_exports_headers_only() {
        let m = MilpModel::new();
        let text = export_lp(&m);
        assert!(text.contains("Minimize"));
        assert!(text.contains("Subject To"));
        assert!(text.contains("Bounds"));
        assert!(text.ends_with("End\n"));
        assert!(!text.contains("Binaries"));
    }

    #[test]
    fn single_variable_bounds_entry() {
        let mut m = MilpModel::new();
        m.add_variable(VarKind::Continuous, -5.0, 5.0, "x").unwrap();
        let text = export_lp(&m);
        assert!(text.contains("Bounds"));
        assert!(text.contains("x"));
        assert!(text.lines().any(|l| l.contains("<= x <=")));
    }

    #[test]
    fn equality_sense_round_trips() {
        let mut m = MilpModel::new();
        let x = m.add_variable(VarKind::Continuous, 0.0, 4.0, "x").unwrap();
        let y = m.add_binary("y").unwrap();
        m.add_constraint(LinExpr::term(x, 1.0).plus(y, 2.0), Sense::Eq, 2.0).unwrap();
        m.set_objective(LinExpr::term(x, 1.0), Direction::Maximize);
        let text = export_lp(&m);
        let back = parse_lp(&text).unwrap();
        assert_eq!(back.num_constraints(), 1);
        assert_eq!(back.constraints()[0].sense, Sense::Eq);
        // Textual comparison: re-export equals the original export.
        assert_eq!(export_lp(&back), text);
    }

    #[test]
    fn reimported_model_solves_to_same_objective() {
        let mut m = MilpModel::new();
        let x = m.add_variable(VarKind::Continuous, 0.0, 10.0, "x").unwrap();
        let b = m.add_binary("b").unwrap();
        m.add_constraint(LinExpr::term(x, 1.0).plus(b, 5.0), Sense::Le, 8.0).unwrap();
        m.set_objective(LinExpr::term(x, 1.0).plus(b, 10.0), Direction::Maximize);
        let s1 = solve(&m, &SolveConfig::default());
        let back = parse_lp(&export_lp(&m)).unwrap();
        let s2 = solve(&back, &SolveConfig::default());
        assert_eq!(s1.status, SolveStatus::Optimal);
        assert_eq!(s2.status, SolveStatus::Optimal);
        assert!((s1.objective - s2.objective).abs() < 1e-9);
    }
}
