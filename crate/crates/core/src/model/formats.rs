//! MPS and CPLEX-LP text for [`Model`], plus readers for both.
//!
//! The MPS writer uses the fixed-format column layout; names longer than the
//! eight-character fields push later fields right, which free-format readers
//! (including ours) accept since names never contain blanks.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{Column, Model, ModelError, Row, Sense};

const OBJ: &str = "obj";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown row `{0}`")]
    UnknownRow(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("value `{0}` is not an integer")]
    NotInteger(String),
}

fn syntax(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Syntax {
        line,
        message: message.into(),
    }
}

fn int_value(tok: &str) -> Result<i64, FormatError> {
    let v: f64 = tok.parse().map_err(|_| FormatError::NotInteger(tok.into()))?;
    if v.is_infinite() {
        return Ok(if v > 0.0 { i64::MAX } else { i64::MIN });
    }
    if v.fract() != 0.0 || v.abs() > 9.0e15 {
        return Err(FormatError::NotInteger(tok.into()));
    }
    Ok(v as i64)
}

fn sense_code(s: Sense) -> &'static str {
    match s {
        Sense::Eq => "E",
        Sense::Le => "L",
        Sense::Ge => "G",
    }
}

impl Model {
    /// Fixed-format MPS with `OBJSENSE MAX` and integer markers around the
    /// customer columns.
    pub fn to_mps(&self) -> String {
        let mut out = String::new();
        let w = &mut out;
        let _ = writeln!(w, "NAME          {}", self.name);
        let _ = writeln!(w, "OBJSENSE\n    MAX");
        let _ = writeln!(w, "ROWS");
        let _ = writeln!(w, " N  {OBJ}");
        for r in &self.rows {
            let _ = writeln!(w, " {}  {}", sense_code(r.sense), r.name);
        }
        let _ = writeln!(w, "COLUMNS");
        let mut by_col: Vec<Vec<(usize, i64)>> = vec![Vec::new(); self.columns.len()];
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, a) in &r.coeffs {
                by_col[j].push((i, a));
            }
        }
        let mut in_int = false;
        let mut markers = 0;
        for (j, c) in self.columns.iter().enumerate() {
            if c.integer != in_int {
                let tag = if c.integer { "'INTORG'" } else { "'INTEND'" };
                let _ = writeln!(w, "    MARKER{markers:<4}             'MARKER'                 {tag}");
                if !c.integer {
                    markers += 1;
                }
                in_int = c.integer;
            }
            let mut wrote = false;
            if c.objective != 0 {
                let _ = writeln!(w, "    {:<8}  {:<8}  {:>12}", c.name, OBJ, c.objective);
                wrote = true;
            }
            for &(i, a) in &by_col[j] {
                let _ = writeln!(w, "    {:<8}  {:<8}  {:>12}", c.name, self.rows[i].name, a);
                wrote = true;
            }
            if !wrote {
                // keep the column declared
                let _ = writeln!(w, "    {:<8}  {:<8}  {:>12}", c.name, OBJ, 0);
            }
        }
        if in_int {
            let _ = writeln!(w, "    MARKER{markers:<4}             'MARKER'                 'INTEND'");
        }
        let _ = writeln!(w, "RHS");
        for r in self.rows.iter().filter(|r| r.rhs != 0) {
            let _ = writeln!(w, "    RHS       {:<8}  {:>12}", r.name, r.rhs);
        }
        let _ = writeln!(w, "BOUNDS");
        for c in &self.columns {
            if c.lower == c.upper {
                let _ = writeln!(w, " FX BND       {:<8}  {:>12}", c.name, c.lower);
                continue;
            }
            if c.lower != 0 {
                let _ = writeln!(w, " LO BND       {:<8}  {:>12}", c.name, c.lower);
            }
            if c.upper != i64::MAX {
                let _ = writeln!(w, " UP BND       {:<8}  {:>12}", c.name, c.upper);
            }
        }
        let _ = writeln!(w, "ENDATA");
        out
    }

    /// CPLEX-style LP text.
    pub fn to_lp(&self) -> String {
        let mut out = String::new();
        let w = &mut out;
        let _ = writeln!(w, "\\ Problem name: {}", self.name);
        let _ = writeln!(w, "Maximize");
        let obj: Vec<(usize, i64)> = self
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.objective != 0)
            .map(|(j, c)| (j, c.objective))
            .collect();
        let _ = writeln!(w, " {OBJ}:{}", self.lp_terms(&obj));
        let _ = writeln!(w, "Subject To");
        for r in &self.rows {
            let op = match r.sense {
                Sense::Eq => "=",
                Sense::Le => "<=",
                Sense::Ge => ">=",
            };
            let _ = writeln!(w, " {}:{} {} {}", r.name, self.lp_terms(&r.coeffs), op, r.rhs);
        }
        let _ = writeln!(w, "Bounds");
        for c in &self.columns {
            if c.lower == c.upper {
                let _ = writeln!(w, " {} = {}", c.name, c.lower);
            } else if c.upper == i64::MAX {
                let _ = writeln!(w, " {} >= {}", c.name, c.lower);
            } else {
                let _ = writeln!(w, " {} <= {} <= {}", c.lower, c.name, c.upper);
            }
        }
        let ints: Vec<&str> = self.columns.iter().filter(|c| c.integer).map(|c| c.name.as_str()).collect();
        if !ints.is_empty() {
            let _ = writeln!(w, "Generals");
            for chunk in ints.chunks(8) {
                let _ = writeln!(w, " {}", chunk.join(" "));
            }
        }
        let _ = writeln!(w, "End");
        out
    }

    fn lp_terms(&self, coeffs: &[(usize, i64)]) -> String {
        let mut s = String::new();
        if coeffs.is_empty() {
            if let Some(c) = self.columns.first() {
                let _ = write!(s, " 0 {}", c.name);
            }
            return s;
        }
        for (k, &(j, a)) in coeffs.iter().enumerate() {
            if k > 0 && k % 8 == 0 {
                s.push_str("\n   ");
            }
            let sign = if a < 0 { '-' } else { '+' };
            let name = &self.columns[j].name;
            if a.abs() == 1 {
                let _ = write!(s, " {sign} {name}");
            } else {
                let _ = write!(s, " {sign} {} {name}", a.abs());
            }
        }
        s
    }

    pub fn write_mps(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        fs::write(path, self.to_mps())?;
        Ok(())
    }

    pub fn write_lp(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        fs::write(path, self.to_lp())?;
        Ok(())
    }

    fn restore_customer_columns(&mut self) {
        let mut custs: Vec<(usize, usize)> = self
            .columns
            .iter()
            .enumerate()
            .filter_map(|(j, c)| {
                let id = c.name.strip_prefix("xd_").or_else(|| c.name.strip_prefix("xo_"))?;
                id.parse::<usize>().ok().map(|id| (id, j))
            })
            .collect();
        custs.sort_unstable();
        self.customer_columns = custs.into_iter().map(|(_, j)| j).collect();
    }
}

#[derive(PartialEq)]
enum MpsSection {
    None,
    ObjSense,
    Rows,
    Columns,
    Rhs,
    Bounds,
}

/// Reads MPS text (fixed or free layout) produced by [`Model::to_mps`] or a
/// compatible writer. A minimizing objective is negated.
pub fn read_mps(text: &str) -> Result<Model, FormatError> {
    let mut model = Model {
        name: String::new(),
        columns: Vec::new(),
        rows: Vec::new(),
        customer_columns: Vec::new(),
    };
    let mut section = MpsSection::None;
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut objective_row: Option<String> = None;
    let mut maximize = false;
    let mut integer = false;
    let mut coeffs: Vec<Vec<(usize, i64)>> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') && !raw.starts_with('\t') {
            section = match toks[0] {
                "NAME" => {
                    model.name = toks.get(1).unwrap_or(&"").to_string();
                    MpsSection::None
                }
                "OBJSENSE" => {
                    if let Some(s) = toks.get(1) {
                        maximize = s.starts_with("MAX");
                    }
                    MpsSection::ObjSense
                }
                "ROWS" => MpsSection::Rows,
                "COLUMNS" => MpsSection::Columns,
                "RHS" => MpsSection::Rhs,
                "BOUNDS" => MpsSection::Bounds,
                "ENDATA" => break,
                other => return Err(syntax(line_no, format!("unknown section `{other}`"))),
            };
            continue;
        }
        match section {
            MpsSection::ObjSense => maximize = toks[0].starts_with("MAX"),
            MpsSection::Rows => {
                let [kind, name] = toks[..] else {
                    return Err(syntax(line_no, "expected `<type> <name>`"));
                };
                let sense = match kind {
                    "N" => {
                        objective_row.get_or_insert_with(|| name.to_string());
                        continue;
                    }
                    "E" => Sense::Eq,
                    "L" => Sense::Le,
                    "G" => Sense::Ge,
                    other => return Err(syntax(line_no, format!("unknown row type `{other}`"))),
                };
                row_index.insert(name.to_string(), model.rows.len());
                model.rows.push(Row {
                    name: name.to_string(),
                    sense,
                    rhs: 0,
                    coeffs: Vec::new(),
                });
            }
            MpsSection::Columns => {
                if toks.len() >= 3 && toks[1] == "'MARKER'" {
                    integer = toks[2] == "'INTORG'";
                    continue;
                }
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(syntax(line_no, "expected `<col> <row> <value> [<row> <value>]`"));
                }
                let j = *col_index.entry(toks[0].to_string()).or_insert_with(|| {
                    model.columns.push(Column {
                        name: toks[0].to_string(),
                        lower: 0,
                        upper: i64::MAX,
                        objective: 0,
                        integer,
                    });
                    coeffs.push(Vec::new());
                    model.columns.len() - 1
                });
                for pair in toks[1..].chunks(2) {
                    let v = int_value(pair[1])?;
                    if Some(pair[0]) == objective_row.as_deref() {
                        model.columns[j].objective = v;
                    } else {
                        let i = *row_index.get(pair[0]).ok_or_else(|| FormatError::UnknownRow(pair[0].into()))?;
                        coeffs[j].push((i, v));
                    }
                }
            }
            MpsSection::Rhs => {
                for pair in toks[1..].chunks(2) {
                    if pair.len() != 2 {
                        return Err(syntax(line_no, "dangling RHS entry"));
                    }
                    if Some(pair[0]) == objective_row.as_deref() {
                        continue;
                    }
                    let i = *row_index.get(pair[0]).ok_or_else(|| FormatError::UnknownRow(pair[0].into()))?;
                    model.rows[i].rhs = int_value(pair[1])?;
                }
            }
            MpsSection::Bounds => {
                if toks.len() < 3 {
                    return Err(syntax(line_no, "short bound line"));
                }
                let j = *col_index.get(toks[2]).ok_or_else(|| FormatError::UnknownColumn(toks[2].into()))?;
                let value = || -> Result<i64, FormatError> {
                    int_value(toks.get(3).ok_or_else(|| syntax(line_no, "bound needs a value"))?)
                };
                let c = &mut model.columns[j];
                match toks[0] {
                    "UP" => c.upper = value()?,
                    "LO" => c.lower = value()?,
                    "FX" => {
                        c.lower = value()?;
                        c.upper = c.lower;
                    }
                    "BV" => {
                        c.lower = 0;
                        c.upper = 1;
                        c.integer = true;
                    }
                    "PL" => c.upper = i64::MAX,
                    other => return Err(syntax(line_no, format!("unsupported bound `{other}`"))),
                }
            }
            MpsSection::None => return Err(syntax(line_no, "data outside a section")),
        }
    }
    for (j, list) in coeffs.into_iter().enumerate() {
        for (i, a) in list {
            model.rows[i].coeffs.push((j, a));
        }
    }
    for r in &mut model.rows {
        r.coeffs = super::normalize(std::mem::take(&mut r.coeffs));
    }
    if !maximize {
        for c in &mut model.columns {
            c.objective = -c.objective;
        }
    }
    model.restore_customer_columns();
    Ok(model)
}

fn is_section(tok: &str) -> Option<&'static str> {
    match tok.to_ascii_lowercase().as_str() {
        "maximize" | "maximum" | "max" => Some("max"),
        "minimize" | "minimum" | "min" => Some("min"),
        "subject" | "st" | "s.t." | "such" => Some("st"),
        "bounds" | "bound" => Some("bounds"),
        "generals" | "general" | "integers" | "gen" => Some("gen"),
        "binaries" | "binary" | "bin" => Some("bin"),
        "end" => Some("end"),
        _ => None,
    }
}

/// Reads the CPLEX-LP subset produced by [`Model::to_lp`]: linear objective
/// and rows, two-sided or one-sided bounds, general and binary sections.
pub fn read_lp(text: &str) -> Result<Model, FormatError> {
    let mut model = Model {
        name: String::new(),
        columns: Vec::new(),
        rows: Vec::new(),
        customer_columns: Vec::new(),
    };
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut section = "";
    let mut maximize = true;
    let mut bound_order: Vec<usize> = Vec::new();
    // tokens of the current section, with line numbers
    let mut pending: Vec<(usize, String)> = Vec::new();
    let mut sections: Vec<(&'static str, Vec<(usize, String)>)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('\\').next().unwrap_or("");
        if let Some(name) = raw.trim().strip_prefix("\\ Problem name:") {
            model.name = name.trim().to_string();
        }
        let toks: Vec<String> = line
            .replace(':', " : ")
            .replace("<=", " <= ")
            .replace(">=", " >= ")
            .split_whitespace()
            .map(str::to_string)
            .collect();
        if let Some(first) = toks.first() {
            let sec = is_section(first);
            let is_header = sec.is_some()
                && (toks.len() == 1 || (sec == Some("st") && toks.len() == 2 && toks[1].eq_ignore_ascii_case("to")));
            if is_header {
                if !section.is_empty() {
                    sections.push((section, std::mem::take(&mut pending)));
                }
                section = sec.expect("checked");
                if section == "min" {
                    maximize = false;
                }
                if section == "end" {
                    break;
                }
                continue;
            }
        }
        pending.extend(toks.into_iter().map(|t| (idx + 1, t)));
    }
    if !section.is_empty() && section != "end" {
        sections.push((section, pending));
    }

    let mut column = |model: &mut Model, name: &str| -> usize {
        *col_index.entry(name.to_string()).or_insert_with(|| {
            model.columns.push(Column {
                name: name.to_string(),
                lower: 0,
                upper: i64::MAX,
                objective: 0,
                integer: false,
            });
            model.columns.len() - 1
        })
    };

    for (sec, toks) in sections {
        match sec {
            "max" | "min" => {
                let (_, terms) = split_label(&toks);
                for (a, name) in parse_terms(terms)? {
                    let j = column(&mut model, &name);
                    model.columns[j].objective += if maximize { a } else { -a };
                }
            }
            "st" => {
                let mut rest = &toks[..];
                while !rest.is_empty() {
                    let (label, body) = split_label(rest);
                    let end = body
                        .iter()
                        .position(|(_, t)| t == "=" || t == "<=" || t == ">=" || t == "<" || t == ">" || t == "=<" || t == "=>")
                        .ok_or_else(|| syntax(body[0].0, "row without a sense"))?;
                    let (line, op) = (&body[end].0, body[end].1.as_str());
                    let rhs_tok = body.get(end + 1).ok_or_else(|| syntax(*line, "row without a right-hand side"))?;
                    let sense = match op {
                        "=" => Sense::Eq,
                        "<=" | "<" | "=<" => Sense::Le,
                        _ => Sense::Ge,
                    };
                    let mut coeffs = Vec::new();
                    for (a, name) in parse_terms(&body[..end])? {
                        coeffs.push((column(&mut model, &name), a));
                    }
                    model.rows.push(Row {
                        name: label.unwrap_or_else(|| format!("R{}", model.rows.len() + 1)),
                        sense,
                        rhs: int_value(&rhs_tok.1)?,
                        coeffs: super::normalize(coeffs),
                    });
                    rest = &body[end + 2..];
                }
            }
            "bounds" => {
                let lines = group_lines(&toks);
                for (line, t) in lines {
                    let t: Vec<&str> = t.iter().map(String::as_str).collect();
                    let named = match t[..] {
                        [_, "<=", name, "<=", _] => name,
                        [name, ..] => name,
                        [] => continue,
                    };
                    bound_order.push(column(&mut model, named));
                    match t[..] {
                        [lo, "<=", name, "<=", up] => {
                            let j = column(&mut model, name);
                            model.columns[j].lower = int_value(lo)?;
                            model.columns[j].upper = int_value(up)?;
                        }
                        [name, "=", v] => {
                            let j = column(&mut model, name);
                            model.columns[j].lower = int_value(v)?;
                            model.columns[j].upper = model.columns[j].lower;
                        }
                        [name, ">=", v] => {
                            let j = column(&mut model, name);
                            model.columns[j].lower = int_value(v)?;
                        }
                        [name, "<=", v] => {
                            let j = column(&mut model, name);
                            model.columns[j].upper = int_value(v)?;
                        }
                        _ => return Err(syntax(line, "unsupported bound")),
                    }
                }
            }
            "gen" | "bin" => {
                for (_, name) in toks {
                    let j = column(&mut model, &name);
                    model.columns[j].integer = true;
                    if sec == "bin" {
                        model.columns[j].lower = 0;
                        model.columns[j].upper = 1;
                    }
                }
            }
            _ => {}
        }
    }
    reorder_columns(&mut model, &bound_order);
    model.restore_customer_columns();
    Ok(model)
}

/// Puts columns in the order they are listed in the bounds section, with
/// unlisted columns after them in order of appearance.
fn reorder_columns(model: &mut Model, order: &[usize]) {
    let n = model.columns.len();
    let mut placed = vec![false; n];
    let mut perm = Vec::with_capacity(n);
    for j in order.iter().copied().chain(0..n) {
        if !placed[j] {
            placed[j] = true;
            perm.push(j);
        }
    }
    let mut new_of = vec![0; n];
    for (new, &old) in perm.iter().enumerate() {
        new_of[old] = new;
    }
    let old_cols = std::mem::take(&mut model.columns);
    let mut slots: Vec<Option<Column>> = old_cols.into_iter().map(Some).collect();
    model.columns = perm.iter().map(|&j| slots[j].take().expect("permutation")).collect();
    for r in &mut model.rows {
        let coeffs = r.coeffs.iter().map(|&(j, a)| (new_of[j], a)).collect();
        r.coeffs = super::normalize(coeffs);
    }
}

type Tok = (usize, String);

fn split_label(toks: &[Tok]) -> (Option<String>, &[Tok]) {
    if toks.len() >= 2 && toks[1].1 == ":" {
        (Some(toks[0].1.clone()), &toks[2..])
    } else {
        (None, toks)
    }
}

fn group_lines(toks: &[Tok]) -> Vec<(usize, Vec<String>)> {
    let mut out: Vec<(usize, Vec<String>)> = Vec::new();
    for (line, t) in toks {
        match out.last_mut() {
            Some((l, v)) if l == line => v.push(t.clone()),
            _ => out.push((*line, vec![t.clone()])),
        }
    }
    out
}

fn parse_terms(toks: &[Tok]) -> Result<Vec<(i64, String)>, FormatError> {
    let mut out = Vec::new();
    let mut sign = 1i64;
    let mut coef: Option<i64> = None;
    for (line, t) in toks {
        match t.as_str() {
            "+" => sign = 1,
            "-" => sign = -1,
            _ if t.parse::<f64>().is_ok() => {
                if coef.is_some() {
                    return Err(syntax(*line, "two coefficients in a row"));
                }
                coef = Some(int_value(t)?);
            }
            name => {
                out.push((sign * coef.unwrap_or(1), name.to_string()));
                sign = 1;
                coef = None;
            }
        }
    }
    Ok(out.into_iter().filter(|(a, _)| *a != 0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{fixtures, generate_ft};
    use crate::model::{build_cs1, build_unmerged, Problem};
    use crate::model::Formulation;
    use crate::network::Network;

    fn models() -> Vec<Model> {
        let mut v = vec![
            build_cs1(&Network::build(&fixtures::all_or_nothing()).unwrap()),
            build_unmerged(&Network::build(&fixtures::network_example(2, 1)).unwrap()),
            Problem::new(generate_ft(150, 3), Formulation::Cs2, true).unwrap().model,
        ];
        let mut fixed = v[0].clone();
        fixed.columns[2].upper = 0;
        v.push(fixed);
        v
    }

    #[test]
    fn mps_round_trip() {
        for m in models() {
            let text = m.to_mps();
            assert!(text.starts_with("NAME"));
            assert!(text.contains("'INTORG'") && text.contains("'INTEND'"));
            let back = read_mps(&text).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn lp_round_trip() {
        for m in models() {
            let back = read_lp(&m.to_lp()).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn mps_layout() {
        let m = build_cs1(&Network::build(&fixtures::all_or_nothing()).unwrap());
        let text = m.to_mps();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "OBJSENSE");
        assert_eq!(lines[2], "    MAX");
        assert!(lines.contains(&" N  obj"));
        assert!(lines.iter().any(|l| l.starts_with(" UP BND       xd_1")));
        assert_eq!(*lines.last().unwrap(), "ENDATA");
    }

    #[test]
    fn reader_errors() {
        assert!(matches!(read_mps("ROWS\n X  r\n"), Err(FormatError::Syntax { line: 2, .. })));
        assert!(matches!(
            read_mps("ROWS\n E  r\nCOLUMNS\n    x  q  1\n"),
            Err(FormatError::UnknownRow(_))
        ));
        assert!(matches!(
            read_mps("ROWS\n E  r\nCOLUMNS\n    x  r  0.5\n"),
            Err(FormatError::NotInteger(_))
        ));
    }

    #[test]
    fn minimize_is_negated() {
        let m = read_lp("Minimize\n obj: 2 x - y\nSubject To\n c: x + y <= 3\nEnd\n").unwrap();
        assert_eq!(m.columns[0].objective, -2);
        assert_eq!(m.columns[1].objective, 1);
        assert_eq!(m.rows[0].coeffs, vec![(0, 1), (1, 1)]);
    }
}
