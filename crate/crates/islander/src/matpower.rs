//! Reader for the subset of MATPOWER `.m` case files the algorithm needs.
//!
//! Only topology and injections are read: `mpc.bus` columns BUS_I and PD,
//! `mpc.gen` columns GEN_BUS, PG, GEN_STATUS, and `mpc.branch` columns F_BUS,
//! T_BUS, BR_STATUS. The node injection is `p_i = sum of in-service PG at bus
//! i - PD_i`. Out-of-service branches are dropped and parallel branches
//! collapse to a single edge. Impedances, limits, and cost data are ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::grid::{Grid, GridError, NodeKind};

pub(crate) fn load_case(path: impl AsRef<Path>) -> Result<Grid, GridError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GridError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_case(&text, &path.display().to_string())
}

/// Parses MATPOWER case text. `origin` labels error loci.
pub fn parse_case(text: &str, origin: &str) -> Result<Grid, GridError> {
    let bus = extract_matrix(text, origin, "mpc.bus")?;
    let gen = extract_matrix(text, origin, "mpc.gen")?;
    let branch = extract_matrix(text, origin, "mpc.branch")?;

    let perr = |line: usize, msg: String| GridError::Parse {
        path: origin.to_string(),
        line,
        msg,
    };

    let mut pd = BTreeMap::new();
    for (line, row) in &bus {
        if row.len() < 3 {
            return Err(perr(*line, format!("bus row has {} columns, need >= 3", row.len())));
        }
        let id = int_field(row[0]).ok_or_else(|| perr(*line, format!("BUS_I {} is not an integer", row[0])))?;
        if pd.insert(id, row[2]).is_some() {
            return Err(perr(*line, format!("duplicate bus {id}")));
        }
    }

    // bus -> (sum of in-service PG, has any in-service machine)
    let mut dispatch: BTreeMap<i64, (f64, bool)> = BTreeMap::new();
    for (line, row) in &gen {
        if row.len() < 8 {
            return Err(perr(*line, format!("gen row has {} columns, need >= 8", row.len())));
        }
        let bus = int_field(row[0]).ok_or_else(|| perr(*line, format!("GEN_BUS {} is not an integer", row[0])))?;
        if !pd.contains_key(&bus) {
            return Err(perr(*line, format!("generator references unknown bus {bus}")));
        }
        if row[7] > 0.0 {
            let e = dispatch.entry(bus).or_insert((0.0, true));
            e.0 += row[1];
        }
    }

    let mut edges = BTreeSet::new();
    for (line, row) in &branch {
        if row.len() < 11 {
            return Err(perr(*line, format!("branch row has {} columns, need >= 11", row.len())));
        }
        let f = int_field(row[0]).ok_or_else(|| perr(*line, format!("F_BUS {} is not an integer", row[0])))?;
        let t = int_field(row[1]).ok_or_else(|| perr(*line, format!("T_BUS {} is not an integer", row[1])))?;
        if row[10] <= 0.0 {
            continue;
        }
        if f == t {
            return Err(perr(*line, format!("self-loop branch at bus {f}")));
        }
        if !pd.contains_key(&f) {
            return Err(perr(*line, format!("branch references unknown bus {f}")));
        }
        if !pd.contains_key(&t) {
            return Err(perr(*line, format!("branch references unknown bus {t}")));
        }
        edges.insert((f.min(t), f.max(t)));
    }

    let mut records = Vec::with_capacity(pd.len());
    for (&bus, &load) in &pd {
        let (pg, has_gen) = dispatch.get(&bus).copied().unwrap_or((0.0, false));
        let p = pg - load;
        let kind = if has_gen && pg != 0.0 {
            if p < 0.0 {
                log::warn!("bus {bus}: generator bus has net injection {p} MW (local load exceeds dispatch)");
            }
            Some(NodeKind::Generator)
        } else {
            None
        };
        records.push((bus, p, kind));
    }
    Grid::from_records(records, edges.into_iter().collect())
}

fn int_field(v: f64) -> Option<i64> {
    (v.fract() == 0.0 && v.abs() < 9e15).then_some(v as i64)
}

/// Collects the rows of `name = [ ... ];`. Returns `(line, values)` per row;
/// rows may share a line (separated by `;`) and `%` starts a comment.
fn extract_matrix(text: &str, origin: &str, name: &str) -> Result<Vec<(usize, Vec<f64>)>, GridError> {
    let perr = |line: usize, msg: String| GridError::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut rows = Vec::new();
    let mut inside = false;
    let mut seen = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('%').next().unwrap_or("");
        let mut content = line.trim();
        if !inside {
            let Some(rest) = header_remainder(content, name) else {
                continue;
            };
            if seen {
                return Err(perr(line_no, format!("{name} defined twice")));
            }
            inside = true;
            seen = true;
            content = rest.trim();
            if content.is_empty() {
                continue;
            }
        }
        let (body, closed) = match content.find(']') {
            Some(pos) => (&content[..pos], true),
            None => (content, false),
        };
        for row_text in body.split(';') {
            let row_text = row_text.trim();
            if row_text.is_empty() {
                continue;
            }
            let mut row = Vec::new();
            for token in row_text.split([' ', '\t', ',']).filter(|t| !t.is_empty()) {
                let v: f64 = token
                    .parse()
                    .map_err(|_| perr(line_no, format!("bad number {token:?} in {name}")))?;
                row.push(v);
            }
            rows.push((line_no, row));
        }
        if closed {
            inside = false;
        }
    }
    let total_lines = text.lines().count();
    if inside {
        return Err(perr(total_lines, format!("{name} matrix is not closed")));
    }
    if !seen {
        return Err(perr(total_lines, format!("{name} matrix not found")));
    }
    Ok(rows)
}

/// If `line` opens the matrix `name`, returns the text after `[`.
fn header_remainder<'a>(line: &'a str, name: &str) -> Option<&'a str> {
    let rest = line.strip_prefix(name)?;
    let rest = rest.trim_start();
    let rest = rest.strip_prefix('=')?;
    let rest = rest.trim_start();
    rest.strip_prefix('[')
}
