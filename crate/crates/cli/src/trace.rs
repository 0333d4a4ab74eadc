//! Reading trace CSVs and column-named predicate files for `monitor`.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;
use stlgame_core::scenarios::ScenarioId;
use stlgame_core::stl::{Predicate, PredicateKind, PredicateTable};

use crate::usage;

const VEHICLE_STATE: [&str; 5] = ["sx", "sy", "delta", "v", "psi"];
const DRONE_STATE: [&str; 6] = ["vx", "vy", "vz", "x", "y", "z"];

/// A trace flattened to one joint state per time step.
#[derive(Debug)]
pub struct CsvTrace {
    /// Column name of each joint-state index, `agent.field` in the per-agent layout.
    pub columns: Vec<String>,
    pub states: Vec<Vec<f64>>,
    /// Set when the trace is an (ego, opponent) rollout of a known scenario.
    pub scenario: Option<ScenarioId>,
}

impl CsvTrace {
    pub fn index_of(&self, column: &str) -> anyhow::Result<usize> {
        let alias = column.strip_prefix("opp.").map(|f| format!("opponent.{f}"));
        self.columns
            .iter()
            .position(|c| c == column || Some(c) == alias.as_ref())
            .ok_or_else(|| usage(format!("trace has no column `{column}` (columns: {})", self.columns.join(", "))))
    }
}

fn parse_cell(cell: &str, row: usize, column: &str) -> anyhow::Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| usage(format!("row {row}, column `{column}`: `{cell}` is not a number")))
}

/// Accepts either `t,agent,<fields>` rows (as written by `rollout`) or one row per
/// step with an optional leading `t` column.
pub fn load(path: &Path) -> anyhow::Result<CsvTrace> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| usage(format!("trace {}: {e}", path.display())))?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let rows: Vec<csv::StringRecord> =
        reader.records().collect::<Result<_, _>>().map_err(|e| usage(format!("trace {}: {e}", path.display())))?;
    if header.get(1).map(String::as_str) == Some("agent") {
        agent_layout(&header, &rows)
    } else {
        flat_layout(&header, &rows)
    }
}

fn flat_layout(header: &[String], rows: &[csv::StringRecord]) -> anyhow::Result<CsvTrace> {
    let skip = usize::from(header.first().map(String::as_str) == Some("t"));
    let columns: Vec<String> = header[skip..].to_vec();
    let mut states = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        let s = columns.iter().enumerate().map(|(j, c)| parse_cell(row.get(j + skip).unwrap_or(""), r, c)).collect::<anyhow::Result<_>>()?;
        states.push(s);
    }
    Ok(CsvTrace { columns, states, scenario: None })
}

fn agent_layout(header: &[String], rows: &[csv::StringRecord]) -> anyhow::Result<CsvTrace> {
    let fields = &header[2..];
    let scenario = if fields.starts_with(&VEHICLE_STATE.map(String::from)) {
        Some(ScenarioId::Vehicles)
    } else if fields.starts_with(&DRONE_STATE.map(String::from)) {
        Some(ScenarioId::Drones)
    } else {
        None
    };
    // actions are not part of the state, and are blank at the last step
    let n_state = match scenario {
        Some(ScenarioId::Vehicles) => VEHICLE_STATE.len(),
        Some(ScenarioId::Drones) => DRONE_STATE.len(),
        None => fields.len(),
    };
    let mut agents: Vec<String> = Vec::new();
    let mut steps: Vec<(String, HashMap<String, Vec<f64>>)> = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        let t = row.get(0).unwrap_or("").trim().to_string();
        let agent = row.get(1).unwrap_or("").trim().to_string();
        if !agents.contains(&agent) {
            agents.push(agent.clone());
        }
        let values = (0..n_state).map(|j| parse_cell(row.get(j + 2).unwrap_or(""), r, &fields[j])).collect::<anyhow::Result<Vec<f64>>>()?;
        if steps.last().map(|(s, _)| s != &t).unwrap_or(true) {
            steps.push((t.clone(), HashMap::new()));
        }
        let step = &mut steps.last_mut().expect("just pushed").1;
        if step.insert(agent.clone(), values).is_some() {
            return Err(usage(format!("row {r}: agent `{agent}` appears twice at t={t}")));
        }
    }
    // ego first, as in the joint state
    agents.sort_by_key(|a| (a != "ego", a != "opponent"));
    let mut columns = Vec::new();
    for a in &agents {
        columns.extend(fields[..n_state].iter().map(|f| format!("{a}.{f}")));
    }
    let mut states = Vec::with_capacity(steps.len());
    for (t, step) in steps {
        let mut s = Vec::with_capacity(columns.len());
        for a in &agents {
            s.extend(step.get(a).ok_or_else(|| usage(format!("t={t}: no row for agent `{a}`")))?);
        }
        states.push(s);
    }
    let pair = agents.len() == 2 && agents[0] == "ego" && agents[1] == "opponent";
    Ok(CsvTrace { columns, states, scenario: scenario.filter(|_| pair) })
}

/// Predicate over named trace columns.
#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ColumnKind {
    Affine { columns: Vec<String>, coeffs: Vec<f64>, #[serde(default)] offset: f64 },
    Ball { columns: Vec<String>, center: Vec<f64>, radius: f64 },
    Box { columns: Vec<String>, lo: Vec<f64>, hi: Vec<f64> },
    Separation { a: Vec<String>, b: Vec<String>, d_min: f64 },
}

// `deny_unknown_fields` does not combine with `flatten`; the inner enum rejects extras
#[derive(Debug, Deserialize)]
struct ColumnPredicate {
    name: String,
    #[serde(flatten)]
    kind: ColumnKind,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredicateFile {
    #[serde(default)]
    predicate: Vec<ColumnPredicate>,
}

/// Adds the `[[predicate]]` entries of a TOML file to `table`, resolving column names against `trace`.
pub fn add_predicates(text: &str, trace: &CsvTrace, table: &mut PredicateTable) -> anyhow::Result<()> {
    let file: PredicateFile = toml::from_str(text).map_err(|e| usage(format!("predicate file: {e}")))?;
    let idx = |cols: &[String]| cols.iter().map(|c| trace.index_of(c)).collect::<anyhow::Result<Vec<usize>>>();
    for p in file.predicate {
        let kind = match p.kind {
            ColumnKind::Affine { columns, coeffs, offset } => PredicateKind::Affine { indices: idx(&columns)?, coeffs, offset },
            ColumnKind::Ball { columns, center, radius } => PredicateKind::Ball { indices: idx(&columns)?, center, radius },
            ColumnKind::Box { columns, lo, hi } => PredicateKind::Box { indices: idx(&columns)?, lo, hi },
            ColumnKind::Separation { a, b, d_min } => PredicateKind::SeparationSq { a: idx(&a)?, b: idx(&b)?, d_min },
        };
        table.insert(Predicate::new(p.name, kind)?);
    }
    Ok(())
}
