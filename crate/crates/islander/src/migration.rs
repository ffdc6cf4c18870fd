//! Self-organizing migration scheduler.
//!
//! Boundary nodes repeatedly evaluate whether defecting to an adjacent
//! island would raise the smaller of the two island imbalances involved;
//! the first improving move of each sweep is applied and the bookkept
//! imbalances are updated. Nodes with zero power cannot change any
//! imbalance, so they move only under a visited-imbalance history rule that
//! prevents cycling. The scheduler terminates when a full sweep produces no
//! move.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::estimator::{
    build_auxiliary_graph, estimate_for_decision, estimate_imbalance, integrate_consensus,
    steady_rates, ConsensusRun, DecisionEstimate, EstimatorError, EstimatorMode,
    EstimatorOptions, ImbalanceEstimate, RunStatus,
};
use crate::graph;
use crate::grid::{Grid, NodeId};
use crate::partition::{
    boundary_nodes, j_star, ImbalanceVector, IslandId, Partition, PartitionError,
};

#[derive(Debug, Error)]
pub enum MigrationError {
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("bookkept imbalances drifted {drift:e} from recomputation at step {step}")]
    ImbalanceDrift { drift: f64, step: u64 },
    #[error("decision tracing requires the simulate estimator mode")]
    TraceNeedsSimulate,
}

#[derive(Clone, Debug)]
pub struct MigrationOptions {
    pub estimator: EstimatorOptions,
    /// Tolerance for imbalance equality in decisions, MW.
    pub eq_tol: f64,
    /// Cap on migration events; `None` selects `50 * n`.
    pub step_cap: Option<u64>,
    /// Record the imbalance trajectory (one row per event).
    pub record_history: bool,
    /// Capture the four consensus runs behind the first evaluated decision.
    pub trace_first_decision: bool,
}

impl Default for MigrationOptions {
    fn default() -> Self {
        MigrationOptions {
            estimator: EstimatorOptions::default(),
            eq_tol: 1e-6,
            step_cap: None,
            record_history: true,
            trace_first_decision: false,
        }
    }
}

impl MigrationOptions {
    pub fn exact() -> Self {
        MigrationOptions {
            estimator: EstimatorOptions::exact(),
            ..Self::default()
        }
    }
}

/// One applied migration.
#[derive(Clone, Debug, PartialEq)]
pub struct MigrationEvent {
    /// 1-based event counter.
    pub step: u64,
    /// External id of the migrating node.
    pub node: i64,
    pub from: IslandId,
    pub to: IslandId,
    pub p_i: f64,
    pub zero_power: bool,
    pub imbalances_before: Vec<f64>,
    pub imbalances_after: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// A full sweep found no admissible move and every candidate was
    /// decidable: the partition is a fixed point of the rule.
    Converged,
    /// The event cap fired first.
    StepCap,
    /// A full sweep found no move but some candidates could not be decided
    /// (singular estimates, or an equal-rate split that only the structural
    /// check caught), so local optimality is not certified.
    Stalled,
}

#[derive(Clone, Debug)]
pub struct NamedTrace {
    pub label: String,
    pub run: ConsensusRun,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub termination: Termination,
    /// Applied migration events, in order.
    pub events: Vec<MigrationEvent>,
    /// `(event_index, imbalances)` rows; row 0 is the initial state.
    pub history: Vec<(u64, Vec<f64>)>,
    pub final_partition: Partition,
    pub final_imbalances: Vec<f64>,
    pub final_j: f64,
    pub j_star: f64,
    pub initial_j: f64,
    /// Total consensus integrations performed.
    pub estimator_evals: u64,
    /// Candidates skipped because the probe saw rate disagreement.
    pub skipped_disagreements: u64,
    /// Candidates skipped because a rate pair was singular.
    pub skipped_singular: u64,
    /// Improving moves vetoed by the authoritative connectivity check after
    /// the estimates missed a split (equal-rate components).
    pub skipped_structural: u64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    /// First-decision consensus traces; empty unless requested.
    pub traces: Vec<NamedTrace>,
}

/// Migration predicate: moving a node with power `p_i` out of the island at
/// imbalance `source` into the island at imbalance `target` must raise the
/// smaller of the two imbalances by more than `eq_tol`.
pub fn evaluate_migration(target: f64, source: f64, p_i: f64, eq_tol: f64) -> bool {
    let before = target.min(source);
    let after = (target + p_i).min(source - p_i);
    after > before + eq_tol
}

/// Picks the admissible target that leaves the largest post-move minimum of
/// the two imbalances involved; ties within `eq_tol` resolve to the lowest
/// island index. `targets` holds `(island, estimated imbalance)` pairs in
/// ascending island order. Returns the chosen island and its post-move
/// minimum.
pub fn select_target(
    source: f64,
    p_i: f64,
    targets: &[(IslandId, f64)],
    eq_tol: f64,
) -> Option<(IslandId, f64)> {
    let mut best: Option<(IslandId, f64)> = None;
    for &(island, target) in targets {
        if !evaluate_migration(target, source, p_i, eq_tol) {
            continue;
        }
        let after = (target + p_i).min(source - p_i);
        match best {
            Some((_, a)) if after <= a + eq_tol => {
                // tie or worse: keep the earlier (lower-index) island
            }
            _ => best = Some((island, after)),
        }
    }
    best
}

/// Zero-power nodes may only enter an island whose current imbalance differs
/// from every imbalance that island had, at earlier steps, while the node
/// was one of its members; this is what rules out infinite shuffling of
/// weightless nodes.
pub fn zero_power_eligible(history: &[f64], target: f64, eq_tol: f64) -> bool {
    history.iter().all(|&h| (target - h).abs() > eq_tol)
}

/// Per-candidate diagnostic of the migration hypothesis: with `p_i != 0`,
/// the move improves iff the node's sign opposes the target-source imbalance
/// ordering and the imbalance gap exceeds `|p_i|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HypothesisCheck {
    pub node: i64,
    pub from: IslandId,
    pub to: IslandId,
    pub p_i: f64,
    /// `(P_to > P_from && p_i < 0) || (P_to < P_from && p_i > 0)`.
    pub sign_pattern: bool,
    /// `|P_to - P_from| > |p_i|`.
    pub gap_exceeds_power: bool,
    pub source_stays_connected: bool,
    /// The full migration predicate on true imbalances.
    pub improving: bool,
}

/// Evaluates every (boundary node, adjacent island) pair against the true
/// imbalances. Useful to audit that the decomposition
/// `improving == sign_pattern && gap_exceeds_power` holds on an instance.
pub fn check_hypothesis(grid: &Grid, part: &Partition) -> Vec<HypothesisCheck> {
    let imb = ImbalanceVector::compute(grid, part);
    let mut out = Vec::new();
    for (i, targets) in boundary_nodes(grid, part) {
        let from = part.island_of(i);
        let p_i = grid.p(i);
        let members = part.members(from);
        let connected = members.len() > 1
            && graph::is_connected_subset(grid.adjacency(), &members, Some(i));
        for to in targets {
            let p_from = imb.values()[from];
            let p_to = imb.values()[to];
            out.push(HypothesisCheck {
                node: grid.ext_id(i),
                from,
                to,
                p_i,
                sign_pattern: (p_to > p_from && p_i < 0.0) || (p_to < p_from && p_i > 0.0),
                gap_exceeds_power: (p_to - p_from).abs() > p_i.abs(),
                source_stays_connected: connected,
                improving: evaluate_migration(p_to, p_from, p_i, 0.0),
            });
        }
    }
    out
}

struct Candidate {
    node: NodeId,
    from: IslandId,
    /// Adjacent foreign islands, ascending.
    targets: Vec<IslandId>,
}

/// Result of evaluating one candidate.
enum CandidateVerdict {
    Move { to: IslandId },
    NotImproving,
    /// A rate pair was singular; the node cannot price the move.
    Singular,
    /// The source-island probe saw rate disagreement: the node knows its
    /// removal would split the island and correctly declines.
    Disagreement,
}

/// What one call to [`MigrationState::step`] did.
#[derive(Clone, Debug)]
pub enum StepOutcome {
    Migrated(MigrationEvent),
    /// Full sweep, no move. `undecided` counts candidates whose estimates
    /// could not support a decision (singular or structurally vetoed).
    NoMove { undecided: u64 },
}

/// Live scheduler state, steppable one migration at a time.
pub struct MigrationState<'g> {
    grid: &'g Grid,
    part: Partition,
    imb: ImbalanceVector,
    opts: MigrationOptions,
    events_applied: u64,
    events: Vec<MigrationEvent>,
    history: Vec<(u64, Vec<f64>)>,
    /// For each zero-power node and island: the imbalances that island had
    /// at completed steps while the node was a member (the current step's
    /// value is deliberately absent).
    zero_history: BTreeMap<NodeId, BTreeMap<IslandId, Vec<f64>>>,
    estimator_evals: u64,
    skipped_disagreements: u64,
    skipped_singular: u64,
    skipped_structural: u64,
    traces: Vec<NamedTrace>,
}

impl<'g> MigrationState<'g> {
    pub fn new(
        grid: &'g Grid,
        init: Partition,
        opts: MigrationOptions,
    ) -> Result<Self, MigrationError> {
        init.validate(grid)?;
        if opts.trace_first_decision && opts.estimator.mode != EstimatorMode::Simulate {
            return Err(MigrationError::TraceNeedsSimulate);
        }
        let imb = ImbalanceVector::compute(grid, &init);
        let zero_history: BTreeMap<NodeId, BTreeMap<IslandId, Vec<f64>>> = (0..grid.n())
            .filter(|&v| grid.p(v) == 0.0)
            .map(|v| (v, BTreeMap::new()))
            .collect();
        let history = vec![(0, imb.values().to_vec())];
        Ok(MigrationState {
            grid,
            part: init,
            imb,
            opts,
            events_applied: 0,
            events: Vec::new(),
            history,
            zero_history,
            estimator_evals: 0,
            skipped_disagreements: 0,
            skipped_singular: 0,
            skipped_structural: 0,
            traces: Vec::new(),
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.part
    }

    pub fn imbalances(&self) -> &[f64] {
        self.imb.values()
    }

    pub fn events_applied(&self) -> u64 {
        self.events_applied
    }

    /// Runs one full sweep and applies at most one migration: the first
    /// admissible power-carrying move in ascending node order, falling back
    /// to the first admissible zero-power move.
    pub fn step(&mut self) -> Result<StepOutcome, MigrationError> {
        let candidates = self.sweep_order();
        let island_runs = self.island_runs(&candidates)?;
        if self.opts.trace_first_decision && self.traces.is_empty() {
            self.capture_first_decision_trace(&candidates)?;
        }
        let mut undecided = 0u64;

        let normal: Vec<&Candidate> = candidates
            .iter()
            .filter(|c| self.grid.p(c.node) != 0.0)
            .collect();
        // Candidates are evaluated in parallel chunks so a hit near the
        // cursor avoids paying for the whole boundary, while the applied
        // move stays the first in sweep order.
        let chunk = rayon::current_num_threads().max(2) * 2;
        for block in normal.chunks(chunk) {
            let verdicts: Vec<(CandidateVerdict, u64)> = {
                let state: &Self = self;
                let runs = island_runs.as_deref();
                block
                    .par_iter()
                    .map(|c| state.evaluate_candidate(c, runs))
                    .collect::<Result<_, MigrationError>>()?
            };
            let mut hit: Option<(&Candidate, IslandId)> = None;
            for (c, (verdict, evals)) in block.iter().zip(verdicts) {
                self.estimator_evals += evals;
                match verdict {
                    CandidateVerdict::Move { to } => {
                        let members = self.part.members(c.from);
                        let ok = members.len() > 1
                            && graph::is_connected_subset(
                                self.grid.adjacency(),
                                &members,
                                Some(c.node),
                            );
                        if ok {
                            if hit.is_none() {
                                hit = Some((c, to));
                            }
                        } else {
                            self.skipped_structural += 1;
                            undecided += 1;
                            log::warn!(
                                "node {}: estimates approved leaving island {} but removal \
                                 disconnects it (equal-rate split); structural check vetoed \
                                 the move",
                                self.grid.ext_id(c.node),
                                c.from
                            );
                        }
                    }
                    CandidateVerdict::NotImproving => {}
                    CandidateVerdict::Singular => {
                        self.skipped_singular += 1;
                        undecided += 1;
                    }
                    CandidateVerdict::Disagreement => {
                        self.skipped_disagreements += 1;
                    }
                }
            }
            if let Some((c, to)) = hit {
                let event = self.apply(c.node, c.from, to)?;
                return Ok(StepOutcome::Migrated(event));
            }
        }

        // Zero-power fallback: connectivity-preserving moves to the
        // lowest-index adjacent island whose current imbalance the node has
        // not already seen as a member.
        for c in candidates.iter().filter(|c| self.grid.p(c.node) == 0.0) {
            let members = self.part.members(c.from);
            let connected = members.len() > 1
                && graph::is_connected_subset(self.grid.adjacency(), &members, Some(c.node));
            if !connected {
                continue;
            }
            let seen = &self.zero_history[&c.node];
            let to = c.targets.iter().copied().find(|&l| {
                let recorded = seen.get(&l).map_or(&[][..], Vec::as_slice);
                zero_power_eligible(recorded, self.imb.values()[l], self.opts.eq_tol)
            });
            if let Some(to) = to {
                let event = self.apply(c.node, c.from, to)?;
                return Ok(StepOutcome::Migrated(event));
            }
        }

        Ok(StepOutcome::NoMove { undecided })
    }

    /// Boundary candidates in ascending node order, the fixed sweep order
    /// that makes runs reproducible.
    fn sweep_order(&self) -> Vec<Candidate> {
        boundary_nodes(self.grid, &self.part)
            .into_iter()
            .map(|(node, targets)| Candidate {
                node,
                from: self.part.island_of(node),
                targets,
            })
            .collect()
    }

    /// One consensus run per island, shared by every candidate of this
    /// sweep. `None` in exact mode.
    fn island_runs(
        &mut self,
        candidates: &[Candidate],
    ) -> Result<Option<Vec<ConsensusRun>>, MigrationError> {
        if self.opts.estimator.mode != EstimatorMode::Simulate || candidates.is_empty() {
            return Ok(None);
        }
        let mut runs = Vec::with_capacity(self.part.n_mu());
        for l in 0..self.part.n_mu() {
            let members = self.part.members(l);
            runs.push(integrate_consensus(self.grid, &members, &self.opts.estimator)?);
            self.estimator_evals += 1;
        }
        Ok(Some(runs))
    }

    /// Decides one candidate. Returns the verdict and how many consensus
    /// integrations it spent.
    fn evaluate_candidate(
        &self,
        c: &Candidate,
        island_runs: Option<&[ConsensusRun]>,
    ) -> Result<(CandidateVerdict, u64), MigrationError> {
        // The sole member of an island may never leave it empty; that is a
        // decidable rule-level no, not an estimation failure.
        if self.part.members(c.from).len() == 1 {
            return Ok((CandidateVerdict::NotImproving, 0));
        }
        let p_i = self.grid.p(c.node);
        let mut evals = 0u64;

        let d_source = self.measure(c.node, c.from, island_runs, &mut evals)?;
        if d_source.disagreement {
            return Ok((CandidateVerdict::Disagreement, evals));
        }
        let source = match d_source.estimate {
            ImbalanceEstimate::WellPosed { p_hat, .. } => p_hat,
            ImbalanceEstimate::Singular => return Ok((CandidateVerdict::Singular, evals)),
        };
        let mut targets = Vec::with_capacity(c.targets.len());
        for &m in &c.targets {
            let d = self.measure(c.node, m, island_runs, &mut evals)?;
            match d.estimate {
                ImbalanceEstimate::WellPosed { p_hat, .. } => targets.push((m, p_hat)),
                ImbalanceEstimate::Singular => {
                    return Ok((CandidateVerdict::Singular, evals))
                }
            }
        }

        match select_target(source, p_i, &targets, self.opts.eq_tol) {
            Some((to, _)) => Ok((CandidateVerdict::Move { to }, evals)),
            None => Ok((CandidateVerdict::NotImproving, evals)),
        }
    }

    /// One probe measurement of island `l` by node `i`. In simulate mode the
    /// island-wide run is shared across the sweep and only the auxiliary run
    /// is paid per probe; exact mode goes through the closed-form pipeline.
    fn measure(
        &self,
        i: NodeId,
        l: IslandId,
        island_runs: Option<&[ConsensusRun]>,
        evals: &mut u64,
    ) -> Result<DecisionEstimate, MigrationError> {
        let Some(runs) = island_runs else {
            return Ok(estimate_for_decision(
                self.grid,
                &self.part,
                i,
                l,
                &self.opts.estimator,
            )?);
        };
        let aux = build_auxiliary_graph(self.grid, &self.part, l, i)?;
        let aux_run = integrate_consensus(self.grid, &aux.vertices, &self.opts.estimator)?;
        *evals += 1;
        if aux_run.status == RunStatus::Disagreement {
            return Ok(DecisionEstimate {
                estimate: ImbalanceEstimate::Singular,
                disagreement: true,
                island_run: None,
                aux_run: Some(aux_run),
            });
        }
        let rates = steady_rates(&runs[l], &aux_run, aux.member)?;
        let estimate = estimate_imbalance(rates, self.grid.p(i), self.opts.estimator.eps_sing)?;
        Ok(DecisionEstimate {
            estimate,
            disagreement: false,
            island_run: None,
            aux_run: Some(aux_run),
        })
    }

    fn capture_first_decision_trace(
        &mut self,
        candidates: &[Candidate],
    ) -> Result<(), MigrationError> {
        let Some(c) = candidates.iter().find(|c| !c.targets.is_empty()) else {
            return Ok(());
        };
        let m = c.targets[0];
        let traced = EstimatorOptions {
            trace: true,
            ..self.opts.estimator.clone()
        };
        let ext = self.grid.ext_id(c.node);
        let aux_from = build_auxiliary_graph(self.grid, &self.part, c.from, c.node)?;
        let aux_to = build_auxiliary_graph(self.grid, &self.part, m, c.node)?;
        let jobs = [
            (format!("island-{}", c.from), self.part.members(c.from)),
            (format!("aux-island-{}-minus-{ext}", c.from), aux_from.vertices),
            (format!("island-{m}"), self.part.members(m)),
            (format!("aux-island-{m}-plus-{ext}"), aux_to.vertices),
        ];
        for (label, verts) in jobs {
            let run = integrate_consensus(self.grid, &verts, &traced)?;
            self.traces.push(NamedTrace { label, run });
            self.estimator_evals += 1;
        }
        Ok(())
    }

    /// Applies one migration: records pre-event imbalances into the
    /// zero-power histories, reassigns the node, shifts the bookkept
    /// imbalances, and cross-checks them against a fresh recomputation.
    fn apply(
        &mut self,
        node: NodeId,
        from: IslandId,
        to: IslandId,
    ) -> Result<MigrationEvent, MigrationError> {
        let p_i = self.grid.p(node);
        let before = self.imb.values().to_vec();
        // Histories hold strictly earlier steps, so feed them the pre-event
        // state of the step now completing: each zero-power node sees its
        // current island's imbalance.
        for (&z, islands) in self.zero_history.iter_mut() {
            let l = self.part.island_of(z);
            let cur = self.imb.values()[l];
            let hist = islands.entry(l).or_default();
            if hist.iter().all(|&h| (cur - h).abs() > self.opts.eq_tol) {
                hist.push(cur);
            }
        }

        self.events_applied += 1;
        self.part.reassign(node, to);
        self.part.set_step(self.events_applied);
        self.imb.shift(from, to, p_i);

        let fresh = ImbalanceVector::compute(self.grid, &self.part);
        for (a, b) in self.imb.values().iter().zip(fresh.values()) {
            let drift = (a - b).abs();
            if drift > 1e-9 * (1.0 + b.abs()) {
                return Err(MigrationError::ImbalanceDrift {
                    drift,
                    step: self.events_applied,
                });
            }
        }

        let after = self.imb.values().to_vec();
        let event = MigrationEvent {
            step: self.events_applied,
            node: self.grid.ext_id(node),
            from,
            to,
            p_i,
            zero_power: p_i == 0.0,
            imbalances_before: before,
            imbalances_after: after.clone(),
        };
        self.events.push(event.clone());
        if self.opts.record_history {
            self.history.push((self.events_applied, after));
        }
        Ok(event)
    }

    fn into_output(self, termination: Termination) -> RunOutput {
        let mean_abs =
            |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64;
        let final_j = mean_abs(self.imb.values());
        let initial_j = mean_abs(&self.history[0].1);
        RunOutput {
            report: RunReport {
                termination,
                events: self.events,
                history: self.history,
                final_imbalances: self.imb.values().to_vec(),
                final_j,
                j_star: j_star(self.grid, self.part.n_mu()),
                initial_j,
                final_partition: self.part,
                estimator_evals: self.estimator_evals,
                skipped_disagreements: self.skipped_disagreements,
                skipped_singular: self.skipped_singular,
                skipped_structural: self.skipped_structural,
            },
            traces: self.traces,
        }
    }
}

/// Runs migration from `init` to termination.
pub fn run(
    grid: &Grid,
    init: Partition,
    opts: &MigrationOptions,
) -> Result<RunOutput, MigrationError> {
    let cap = opts.step_cap.unwrap_or(50 * grid.n() as u64);
    let mut state = MigrationState::new(grid, init, opts.clone())?;
    let termination = loop {
        if state.events_applied >= cap {
            break Termination::StepCap;
        }
        match state.step()? {
            StepOutcome::Migrated(_) => {}
            StepOutcome::NoMove { undecided } => {
                break if undecided > 0 {
                    Termination::Stalled
                } else {
                    Termination::Converged
                };
            }
        }
    };
    Ok(state.into_output(termination))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two triangles joined by one edge; powers make the left island heavy.
    fn demo() -> (Grid, Partition) {
        let g = Grid::new(
            vec![
                (1, 30.0),
                (2, 20.0),
                (3, 10.0),
                (4, -10.0),
                (5, -20.0),
                (6, -15.0),
            ],
            vec![(1, 2), (1, 3), (2, 3), (3, 4), (4, 5), (4, 6), (5, 6)],
        )
        .unwrap();
        let part = Partition::new(vec![0, 0, 0, 1, 1, 1], 2).unwrap();
        (g, part)
    }

    #[test]
    fn predicate_matches_hand_case() {
        // Target -45, source 60, p_i = 10: min goes -45 -> -35.
        assert!(evaluate_migration(-45.0, 60.0, 10.0, 1e-6));
        // Reverse direction is not improving.
        assert!(!evaluate_migration(60.0, -45.0, 10.0, 1e-6));
        // Equality is not improvement.
        assert!(!evaluate_migration(-5.0, 5.0, 0.0, 1e-6));
    }

    #[test]
    fn target_selection_prefers_largest_gain_then_lowest_index() {
        // Source 60, p_i 10: island 1 leaves min at -30, island 2 at -70.
        let targets = vec![(1, -40.0), (2, -80.0)];
        let (to, _) = select_target(60.0, 10.0, &targets, 1e-6).unwrap();
        assert_eq!(to, 1);
        // Tie: equal target imbalances, lowest index wins.
        let tie = vec![(2, -40.0), (3, -40.0)];
        let (to, _) = select_target(60.0, 10.0, &tie, 1e-6).unwrap();
        assert_eq!(to, 2);
        // Nothing improves: no target.
        assert!(select_target(-45.0, 10.0, &[(1, 60.0)], 1e-6).is_none());
    }

    #[test]
    fn hypothesis_decomposition_holds_on_demo() {
        let (g, part) = demo();
        for check in check_hypothesis(&g, &part) {
            assert_eq!(
                check.improving,
                check.sign_pattern && check.gap_exceeds_power,
                "decomposition must match the predicate for {check:?}"
            );
        }
    }

    #[test]
    fn demo_converges_exact() {
        let (g, part) = demo();
        let out = run(&g, part, &MigrationOptions::exact()).unwrap();
        assert_eq!(out.report.termination, Termination::Converged);
        assert!(out.report.final_j < out.report.initial_j);
        assert!(out.report.final_j + 1e-9 >= out.report.j_star);
        // Every event must have improved the smaller of the two imbalances.
        for e in &out.report.events {
            let before = e.imbalances_before[e.to].min(e.imbalances_before[e.from]);
            let after = e.imbalances_after[e.to].min(e.imbalances_after[e.from]);
            assert!(e.zero_power || after > before);
        }
        // Bookkeeping equals recomputation at the end.
        let fresh = ImbalanceVector::compute(&g, &out.report.final_partition);
        for (a, b) in out.report.final_imbalances.iter().zip(fresh.values()) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn demo_simulate_matches_exact_decisions() {
        let (g, part) = demo();
        let exact = run(&g, part.clone(), &MigrationOptions::exact()).unwrap();
        let sim = run(&g, part, &MigrationOptions::default()).unwrap();
        assert_eq!(exact.report.events.len(), sim.report.events.len());
        for (a, b) in exact.report.events.iter().zip(&sim.report.events) {
            assert_eq!((a.node, a.from, a.to), (b.node, b.from, b.to));
        }
        assert_eq!(
            exact.report.final_partition.assignment(),
            sim.report.final_partition.assignment()
        );
    }

    #[test]
    fn step_cap_terminates() {
        let (g, part) = demo();
        let opts = MigrationOptions {
            step_cap: Some(0),
            ..MigrationOptions::exact()
        };
        let out = run(&g, part, &opts).unwrap();
        assert_eq!(out.report.termination, Termination::StepCap);
        assert!(out.report.events.is_empty());
    }

    #[test]
    fn zero_power_node_cannot_bounce_back_to_an_unchanged_island() {
        // Path 1-2-3-4, islands {1,2,3} at 11 and {4} at 10. No power move
        // improves anything, so the zero-power node 3 hops into island 1
        // (never a member, so no history), but may not hop back: island 0
        // still sits at the 11 MW it had while 3 was a member.
        let g = Grid::new(
            vec![(1, 5.0), (2, 6.0), (3, 0.0), (4, 10.0)],
            vec![(1, 2), (2, 3), (3, 4)],
        )
        .unwrap();
        let part = Partition::new(vec![0, 0, 0, 1], 2).unwrap();
        let out = run(&g, part, &MigrationOptions::exact()).unwrap();
        assert_eq!(out.report.termination, Termination::Converged);
        assert_eq!(out.report.events.len(), 1);
        let e = &out.report.events[0];
        assert!(e.zero_power);
        assert_eq!(e.node, 3);
        assert_eq!((e.from, e.to), (0, 1));
        assert_eq!(e.imbalances_before, e.imbalances_after);
    }

    #[test]
    fn zero_power_eligibility_is_per_target_value() {
        // The predicate itself: fresh values pass, recorded values block.
        assert!(zero_power_eligible(&[], 10.0, 1e-6));
        assert!(zero_power_eligible(&[11.0, 9.0], 10.0, 1e-6));
        assert!(!zero_power_eligible(&[11.0, 10.0], 10.0, 1e-6));
        // Equality is judged by tolerance, not bit-identity.
        assert!(!zero_power_eligible(&[10.0 + 1e-9], 10.0, 1e-6));
    }

    #[test]
    fn singleton_source_cannot_be_emptied() {
        // Star around node 1; island 1 is the singleton {4} with a terrible
        // imbalance, but its only member may not leave.
        let g = Grid::new(
            vec![(1, 1.0), (2, 1.0), (3, 1.0), (4, -50.0)],
            vec![(1, 2), (1, 3), (1, 4)],
        )
        .unwrap();
        let part = Partition::new(vec![0, 0, 0, 1], 2).unwrap();
        let out = run(&g, part, &MigrationOptions::exact()).unwrap();
        for e in &out.report.events {
            assert_ne!(e.node, 4, "singleton member must not migrate");
        }
        for island in 0..2 {
            assert!(!out.report.final_partition.members(island).is_empty());
        }
    }

    #[test]
    fn equal_rate_split_is_vetoed_structurally() {
        // Island 0 is the path 2-1-3 with equal leaf powers; removing its
        // center (node 1) splits it into components with identical rates, so
        // the probe cannot see the split and only the structural veto blocks
        // the move. Island 1 is a sink that would welcome the center's power.
        let g = Grid::new(
            vec![(1, 8.0), (2, 3.0), (3, 3.0), (4, -40.0)],
            vec![(1, 2), (1, 3), (1, 4)],
        )
        .unwrap();
        let part = Partition::new(vec![0, 0, 0, 1], 2).unwrap();
        let out = run(&g, part, &MigrationOptions::exact()).unwrap();
        assert_eq!(out.report.termination, Termination::Stalled);
        assert!(out.report.skipped_structural > 0);
        assert!(out.report.events.iter().all(|e| e.node != 1));
    }

    #[test]
    fn trace_capture_requires_simulate() {
        let (g, part) = demo();
        let opts = MigrationOptions {
            trace_first_decision: true,
            ..MigrationOptions::exact()
        };
        assert!(matches!(
            MigrationState::new(&g, part, opts),
            Err(MigrationError::TraceNeedsSimulate)
        ));
    }

    #[test]
    fn trace_capture_records_four_runs() {
        let (g, part) = demo();
        let opts = MigrationOptions {
            trace_first_decision: true,
            ..MigrationOptions::default()
        };
        let out = run(&g, part, &opts).unwrap();
        assert_eq!(out.traces.len(), 4);
        assert!(out.traces.iter().all(|t| !t.run.trace.is_empty()));
    }
}
