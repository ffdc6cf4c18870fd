//! Serializable run reports and CSV emitters.
//!
//! Documents are deterministic: field order is fixed by struct declaration,
//! collections are vectors in stable order, floats use the shortest
//! round-trip representation, and nothing time- or host-dependent is
//! recorded. Re-running the same inputs yields byte-identical output.

use serde::{Deserialize, Serialize};

use crate::analysis::{imbalance_stddev, BoundReport, GapCertificate};
use crate::estimator::ConsensusRun;
use crate::grid::Grid;
use crate::migration::{RunOutput, Termination};
use crate::partition::{cut_set, Partition};

/// Bumped whenever the report layout changes shape.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GridSummary {
    pub nodes: usize,
    pub edges: usize,
    pub p_total: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct OptionsSummary {
    pub n_mu: usize,
    /// "simulate" or "exact".
    pub estimator_mode: String,
    /// "euler" or "rk4".
    pub integrator: String,
    pub eq_tol: f64,
    pub step_cap: u64,
    /// How the initial partition was obtained (e.g. "sspr", "random:7").
    pub init_source: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BoundSummary {
    pub p_bar: f64,
    pub p_star: f64,
    pub l_star: usize,
    pub bound: f64,
    pub gap: f64,
    pub satisfied: bool,
    /// Largest imbalance difference across a tie line in the final partition.
    pub certificate_max_gap: f64,
    /// `certificate_max_gap <= p_bar`: the bound's hypothesis.
    pub certificate_holds: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EventSummary {
    pub step: u64,
    pub node: i64,
    pub from: usize,
    pub to: usize,
    pub p_i: f64,
    pub zero_power: bool,
}

/// Top-level report for one migration run.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunDocument {
    pub schema_version: u32,
    pub grid: GridSummary,
    pub options: OptionsSummary,
    /// "converged", "step-cap", or "stalled".
    pub termination: String,
    pub steps: u64,
    pub estimator_evals: u64,
    pub skipped_singular: u64,
    pub skipped_disagreements: u64,
    pub skipped_structural: u64,
    pub j_initial: f64,
    pub j_final: f64,
    pub j_star: f64,
    pub imbalances: Vec<f64>,
    pub imbalance_stddev: f64,
    /// External ids per island, islands in index order.
    pub islands: Vec<Vec<i64>>,
    /// Severed lines as `a-b` external id pairs, in grid edge order.
    pub cut_set: Vec<String>,
    pub bound: BoundSummary,
    pub events: Vec<EventSummary>,
}

pub fn termination_label(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::StepCap => "step-cap",
        Termination::Stalled => "stalled",
    }
}

/// Assembles the report document from a finished run and its offline
/// analysis.
pub fn run_document(
    grid: &Grid,
    options: OptionsSummary,
    out: &RunOutput,
    bound: &BoundReport,
    certificate: &GapCertificate,
) -> RunDocument {
    let r = &out.report;
    let islands: Vec<Vec<i64>> = (0..r.final_partition.n_mu())
        .map(|l| {
            r.final_partition
                .members(l)
                .iter()
                .map(|&v| grid.ext_id(v))
                .collect()
        })
        .collect();
    let cut: Vec<String> = cut_set(grid, &r.final_partition)
        .iter()
        .map(|&(a, b)| format!("{}-{}", grid.ext_id(a), grid.ext_id(b)))
        .collect();
    RunDocument {
        schema_version: SCHEMA_VERSION,
        grid: GridSummary {
            nodes: grid.n(),
            edges: grid.edges().len(),
            p_total: grid.p_total(),
        },
        options,
        termination: termination_label(r.termination).to_string(),
        steps: r.events.len() as u64,
        estimator_evals: r.estimator_evals,
        skipped_singular: r.skipped_singular,
        skipped_disagreements: r.skipped_disagreements,
        skipped_structural: r.skipped_structural,
        j_initial: r.initial_j,
        j_final: r.final_j,
        j_star: r.j_star,
        imbalances: r.final_imbalances.clone(),
        imbalance_stddev: imbalance_stddev(&r.final_imbalances),
        islands,
        cut_set: cut,
        bound: BoundSummary {
            p_bar: bound.p_bar,
            p_star: bound.p_star,
            l_star: bound.l_star,
            bound: bound.bound,
            gap: bound.gap.expect("bound scored against the final cost"),
            satisfied: bound.satisfied.expect("bound scored against the final cost"),
            certificate_max_gap: certificate.max_gap,
            certificate_holds: certificate.holds,
        },
        events: r
            .events
            .iter()
            .map(|e| EventSummary {
                step: e.step,
                node: e.node,
                from: e.from,
                to: e.to,
                p_i: e.p_i,
                zero_power: e.zero_power,
            })
            .collect(),
    }
}

impl RunDocument {
    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Imbalance trajectory as CSV: `k,P_1,...,P_n,J,J_star`, one row per
/// recorded event (row `k = 0` is the initial state).
pub fn trajectory_csv(history: &[(u64, Vec<f64>)], j_star: f64) -> String {
    let n_mu = history.first().map_or(0, |(_, v)| v.len());
    let mut out = String::from("k");
    for l in 1..=n_mu {
        out.push_str(&format!(",P_{l}"));
    }
    out.push_str(",J,J_star\n");
    for (k, values) in history {
        out.push_str(&k.to_string());
        for v in values {
            out.push_str(&format!(",{v}"));
        }
        let j = values.iter().map(|v| v.abs()).sum::<f64>() / values.len() as f64;
        out.push_str(&format!(",{j},{j_star}\n"));
    }
    out
}

/// Consensus state trace as CSV: `t,node,x,xdot` with external node ids.
pub fn trace_csv(grid: &Grid, run: &ConsensusRun) -> String {
    let mut out = String::from("t,node,x,xdot\n");
    for row in &run.trace {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.t,
            grid.ext_id(row.node),
            row.x,
            row.xdot
        ));
    }
    out
}

/// Cut-set text for a partition: one `a-b` line per severed edge, in grid
/// edge order. Round-trips through the cut-set loader.
pub fn cut_set_text(grid: &Grid, part: &Partition) -> String {
    let mut out = String::new();
    for (a, b) in cut_set(grid, part) {
        out.push_str(&format!("{}-{}\n", grid.ext_id(a), grid.ext_id(b)));
    }
    out
}
