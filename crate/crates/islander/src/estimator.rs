//! Virtual consensus dynamics and the recovery of island imbalance and size
//! from steady-state rates.
//!
//! A probing node estimates the imbalance `P_l` and size `|V_l|` of an island
//! by running two simulations of `xdot = p - L x` from zero initial
//! conditions: one over the island's vertex set (rate `omega = P_l / |V_l|`)
//! and one over the auxiliary set that removes the probe if it is a member or
//! adds it if it is a neighbor (rate `omega_hat`). The pair `(omega,
//! omega_hat)` determines `P_l` and `|V_l|` in closed form whenever
//! `omega_hat != omega`. Each node only ever exchanges state with its direct
//! neighbors inside the vertex set, which is what makes the scheme
//! distributable.

use thiserror::Error;

use crate::graph;
use crate::grid::{Grid, NodeId};
use crate::partition::{IslandId, Partition};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("empty vertex set")]
    EmptyVertexSet,
    #[error("consensus run not steady after {steps} steps (dt = {dt})")]
    IterationCap { steps: usize, dt: f64 },
    #[error("consensus state diverged at t = {t} (bad dt?)")]
    Diverged { t: f64 },
    #[error("conservation drift {drift:e} at step {step} exceeds tolerance")]
    ConservationDrift { drift: f64, step: usize },
    #[error("consensus runs are not both steady")]
    NotSteady,
    #[error("estimated island size {size_hat} is not a positive integer; rates are inconsistent")]
    InconsistentSize { size_hat: f64 },
    #[error("probe {probe} is neither a member nor a neighbor of island {island}")]
    NotAdjacent { probe: NodeId, island: IslandId },
}

/// Neighbor lookup used by the integrator. The instrumented implementation
/// in tests verifies one-hop locality: only vertices inside the simulated
/// set are ever queried.
pub trait AdjacencySource {
    fn neighbors(&self, v: NodeId) -> &[NodeId];
}

impl AdjacencySource for Grid {
    fn neighbors(&self, v: NodeId) -> &[NodeId] {
        Grid::neighbors(self, v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum IntegratorKind {
    /// Explicit Euler with `dt = 1/(d_max + 1)`, which makes the step map a
    /// convex (stochastic-matrix) combination, so the rate spread decays
    /// monotonically. Mirrors a synchronous-rounds protocol.
    #[default]
    Euler,
    /// Classic fourth-order Runge-Kutta behind the same interface.
    Rk4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EstimatorMode {
    /// Integrate the dynamics; the deployed protocol.
    #[default]
    Simulate,
    /// Closed-form rates (mean injection over the vertex set). Fast path for
    /// CI and big sweeps; must agree with Simulate to 1e-6.
    Exact,
}

#[derive(Clone, Debug)]
pub struct EstimatorOptions {
    pub mode: EstimatorMode,
    pub integrator: IntegratorKind,
    /// Relative steady-state tolerance on the rate spread.
    pub eps_ss: f64,
    /// Absolute disagreement threshold between component rates, MW.
    pub eps_dis: f64,
    /// Relative singularity threshold on `omega_hat - omega`.
    pub eps_sing: f64,
    /// Hard cap on integrator steps per run.
    pub max_steps: usize,
    /// Step-size override; `None` selects `1/(d_max + 1)`.
    pub dt: Option<f64>,
    /// Record decimated `(t, node, x, xdot)` rows.
    pub trace: bool,
    /// Record the max-min rate spread per step.
    pub record_spread: bool,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            mode: EstimatorMode::default(),
            integrator: IntegratorKind::default(),
            eps_ss: 1e-9,
            eps_dis: 1e-6,
            eps_sing: 1e-8,
            max_steps: 5_000_000,
            dt: None,
            trace: false,
            record_spread: false,
        }
    }
}

impl EstimatorOptions {
    pub fn exact() -> Self {
        EstimatorOptions {
            mode: EstimatorMode::Exact,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    /// Every connected component reached rate consensus, and all component
    /// rates agree.
    Steady,
    /// Components reached internally steady rates that differ from each
    /// other: the simulated set is disconnected (the warning signal a probe
    /// gets when its removal would split the island).
    Disagreement,
}

#[derive(Clone, Debug)]
pub struct TraceRow {
    pub t: f64,
    pub node: NodeId,
    pub x: f64,
    pub xdot: f64,
}

/// Finished consensus simulation over one vertex set.
#[derive(Clone, Debug)]
pub struct ConsensusRun {
    /// Simulated vertices, ascending. Local index = position here.
    pub vertices: Vec<NodeId>,
    pub x: Vec<f64>,
    pub xdot: Vec<f64>,
    pub t: f64,
    pub dt: f64,
    pub steps: usize,
    pub status: RunStatus,
    /// Connected components as local indices, ordered by smallest member.
    pub components: Vec<Vec<usize>>,
    /// Mean rate per component at finish.
    pub component_rates: Vec<f64>,
    /// Largest `|sum xdot - sum p|` seen across all steps.
    pub max_conservation_drift: f64,
    /// Decimated state history; empty unless requested.
    pub trace: Vec<TraceRow>,
    /// Max-min rate spread per step; empty unless requested.
    pub spread_history: Vec<f64>,
}

impl ConsensusRun {
    /// Consensus rate: mean of `xdot` over all vertices. For a steady run on
    /// a connected set this is `P/|V|` up to `eps_ss`.
    pub fn rate(&self) -> f64 {
        self.xdot.iter().sum::<f64>() / self.xdot.len() as f64
    }
}

/// Integrates `xdot = p - L x` from zero initial conditions over the
/// subgraph induced by `vertices`, until every connected component has an
/// internally steady rate. Fails on divergence, iteration cap, or
/// conservation drift beyond `1e-9 * (1 + |sum p|)`.
pub fn integrate_consensus(
    grid: &Grid,
    vertices: &[NodeId],
    opts: &EstimatorOptions,
) -> Result<ConsensusRun, EstimatorError> {
    integrate_consensus_with(grid, |v| grid.p(v), vertices, opts)
}

/// [`integrate_consensus`] over any adjacency source and power lookup.
pub fn integrate_consensus_with<A: AdjacencySource + ?Sized>(
    adj: &A,
    p_of: impl Fn(NodeId) -> f64,
    vertices: &[NodeId],
    opts: &EstimatorOptions,
) -> Result<ConsensusRun, EstimatorError> {
    if vertices.is_empty() {
        return Err(EstimatorError::EmptyVertexSet);
    }
    let mut verts: Vec<NodeId> = vertices.to_vec();
    verts.sort_unstable();
    verts.dedup();
    let nv = verts.len();
    let local = |v: NodeId| verts.binary_search(&v).expect("vertex in set");

    // Local adjacency, filtered to the vertex set. Only member vertices are
    // ever passed to the adjacency source (one-hop locality).
    let mut local_adj: Vec<Vec<usize>> = Vec::with_capacity(nv);
    for &v in &verts {
        let row: Vec<usize> = adj
            .neighbors(v)
            .iter()
            .filter(|&&u| verts.binary_search(&u).is_ok())
            .map(|&u| local(u))
            .collect();
        local_adj.push(row);
    }
    let p: Vec<f64> = verts.iter().map(|&v| p_of(v)).collect();
    let p_sum: f64 = p.iter().sum();
    let drift_tol = 1e-9 * (1.0 + p_sum.abs());

    let all_local: Vec<usize> = (0..nv).collect();
    let components = graph::components_of_subset(&local_adj, &all_local);

    let d_max = local_adj.iter().map(Vec::len).max().unwrap_or(0);
    let dt = opts.dt.unwrap_or(1.0 / (d_max as f64 + 1.0));

    let mut x = vec![0.0; nv];
    let mut xdot = vec![0.0; nv];
    let mut scratch = (
        vec![0.0; nv],
        vec![0.0; nv],
        vec![0.0; nv],
        vec![0.0; nv],
    );
    let mut max_drift = 0.0f64;
    let mut trace = Vec::new();
    let mut spread_history = Vec::new();

    let mut steps = 0usize;
    loop {
        let t = steps as f64 * dt;
        rate_of(&local_adj, &p, &x, &mut xdot);

        if !xdot.iter().all(|v| v.is_finite()) {
            return Err(EstimatorError::Diverged { t });
        }
        let drift = (xdot.iter().sum::<f64>() - p_sum).abs();
        max_drift = max_drift.max(drift);
        if drift > drift_tol {
            return Err(EstimatorError::ConservationDrift { drift, step: steps });
        }

        if opts.record_spread {
            let lo = xdot.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xdot.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            spread_history.push(hi - lo);
        }
        // Full resolution early, decimated afterwards.
        let trace_now = |s: usize| s < 1000 || s.is_multiple_of(100);
        if opts.trace && trace_now(steps) {
            for (h, &v) in verts.iter().enumerate() {
                trace.push(TraceRow {
                    t,
                    node: v,
                    x: x[h],
                    xdot: xdot[h],
                });
            }
        }

        let mut all_steady = true;
        for comp in &components {
            let mean = comp.iter().map(|&h| xdot[h]).sum::<f64>() / comp.len() as f64;
            let tol = opts.eps_ss * (1.0 + mean.abs());
            if comp.iter().any(|&h| (xdot[h] - mean).abs() > tol) {
                all_steady = false;
                break;
            }
        }
        if all_steady {
            let component_rates: Vec<f64> = components
                .iter()
                .map(|c| c.iter().map(|&h| xdot[h]).sum::<f64>() / c.len() as f64)
                .collect();
            let lo = component_rates.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = component_rates
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            let status = if components.len() > 1 && hi - lo > opts.eps_dis {
                RunStatus::Disagreement
            } else {
                RunStatus::Steady
            };
            if opts.trace && !trace_now(steps) {
                for (h, &v) in verts.iter().enumerate() {
                    trace.push(TraceRow {
                        t,
                        node: v,
                        x: x[h],
                        xdot: xdot[h],
                    });
                }
            }
            return Ok(ConsensusRun {
                vertices: verts,
                x,
                xdot,
                t,
                dt,
                steps,
                status,
                components,
                component_rates,
                max_conservation_drift: max_drift,
                trace,
                spread_history,
            });
        }

        if steps >= opts.max_steps {
            return Err(EstimatorError::IterationCap { steps, dt });
        }
        match opts.integrator {
            IntegratorKind::Euler => {
                for h in 0..nv {
                    x[h] += dt * xdot[h];
                }
            }
            IntegratorKind::Rk4 => {
                let (k2, k3, k4, xs) = (
                    &mut scratch.0,
                    &mut scratch.1,
                    &mut scratch.2,
                    &mut scratch.3,
                );
                // k1 is the already-computed xdot.
                for h in 0..nv {
                    xs[h] = x[h] + 0.5 * dt * xdot[h];
                }
                rate_of(&local_adj, &p, xs, k2);
                for h in 0..nv {
                    xs[h] = x[h] + 0.5 * dt * k2[h];
                }
                rate_of(&local_adj, &p, xs, k3);
                for h in 0..nv {
                    xs[h] = x[h] + dt * k3[h];
                }
                rate_of(&local_adj, &p, xs, k4);
                for h in 0..nv {
                    x[h] += dt / 6.0 * (xdot[h] + 2.0 * k2[h] + 2.0 * k3[h] + k4[h]);
                }
            }
        }
        steps += 1;
    }
}

/// `out = p - L x` on the local subgraph.
fn rate_of(local_adj: &[Vec<usize>], p: &[f64], x: &[f64], out: &mut [f64]) {
    for h in 0..p.len() {
        let mut acc = p[h];
        for &u in &local_adj[h] {
            acc -= x[h] - x[u];
        }
        out[h] = acc;
    }
}

/// The vertex set a probe simulates to measure an island from one hop away:
/// the island minus the probe if the probe is a member, or plus the probe if
/// it neighbors the island.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuxiliaryGraph {
    pub island: IslandId,
    pub probe: NodeId,
    pub member: bool,
    /// Sorted vertex set.
    pub vertices: Vec<NodeId>,
    /// Induced edges, `(low, high)` sorted.
    pub edges: Vec<(NodeId, NodeId)>,
}

pub fn build_auxiliary_graph(
    grid: &Grid,
    part: &Partition,
    l: IslandId,
    i: NodeId,
) -> Result<AuxiliaryGraph, EstimatorError> {
    let member = part.island_of(i) == l;
    if !member && !grid.neighbors(i).iter().any(|&j| part.island_of(j) == l) {
        return Err(EstimatorError::NotAdjacent {
            probe: i,
            island: l,
        });
    }
    let mut vertices = part.members(l);
    if member {
        vertices.retain(|&v| v != i);
    } else {
        let pos = vertices.binary_search(&i).unwrap_err();
        vertices.insert(pos, i);
    }
    let mut inside = vec![false; grid.n()];
    for &v in &vertices {
        inside[v] = true;
    }
    let edges: Vec<(NodeId, NodeId)> = grid
        .edges()
        .iter()
        .copied()
        .filter(|&(a, b)| inside[a] && inside[b])
        .collect();
    Ok(AuxiliaryGraph {
        island: l,
        probe: i,
        member,
        vertices,
        edges,
    })
}

/// Steady-state rate pair for one island as seen by one probe. `a_l` is the
/// sign in the recovery formulas: -1 for a member probe, +1 otherwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateEstimate {
    pub omega: f64,
    pub omega_hat: f64,
    pub a_l: f64,
}

pub fn steady_rates(
    run_island: &ConsensusRun,
    run_aux: &ConsensusRun,
    member: bool,
) -> Result<RateEstimate, EstimatorError> {
    if run_island.status != RunStatus::Steady || run_aux.status != RunStatus::Steady {
        return Err(EstimatorError::NotSteady);
    }
    Ok(RateEstimate {
        omega: run_island.rate(),
        omega_hat: run_aux.rate(),
        a_l: if member { -1.0 } else { 1.0 },
    })
}

/// Recovered island imbalance and size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ImbalanceEstimate {
    WellPosed {
        /// Estimated `P_l`, MW.
        p_hat: f64,
        /// Estimated `|V_l|` before rounding.
        size_hat: f64,
        size_rounded: usize,
    },
    /// `omega_hat = omega` up to tolerance: the probe's power equals the
    /// island mean and the rate pair carries no size information.
    Singular,
}

/// Solves the rate pair for `P_l` and `|V_l|`:
/// `P = a_l * omega * (p_i - omega_hat) / (omega_hat - omega)` and
/// `|V| = a_l * (p_i - omega_hat) / (omega_hat - omega)`. A size that fails
/// to round to a positive integer signals inconsistent inputs (rates from a
/// non-steady or disagreeing run) and is an error, not an estimate.
pub fn estimate_imbalance(
    rates: RateEstimate,
    p_i: f64,
    eps_sing: f64,
) -> Result<ImbalanceEstimate, EstimatorError> {
    let denom = rates.omega_hat - rates.omega;
    if denom.abs() <= eps_sing * (1.0 + rates.omega.abs()) {
        return Ok(ImbalanceEstimate::Singular);
    }
    let size_hat = rates.a_l * (p_i - rates.omega_hat) / denom;
    let p_hat = rates.omega * size_hat;
    let size_rounded = size_hat.round();
    // NaN must land in the error branch too.
    if size_rounded.is_nan() || size_rounded < 1.0 {
        return Err(EstimatorError::InconsistentSize { size_hat });
    }
    Ok(ImbalanceEstimate::WellPosed {
        p_hat,
        size_hat,
        size_rounded: size_rounded as usize,
    })
}

/// One probe's estimate of one island, with the disconnection warning.
#[derive(Clone, Debug)]
pub struct DecisionEstimate {
    pub estimate: ImbalanceEstimate,
    /// True when the auxiliary run disagreed across components: removing the
    /// probe would split its island.
    pub disagreement: bool,
    /// The island-wide and auxiliary runs (Simulate mode only).
    pub island_run: Option<ConsensusRun>,
    pub aux_run: Option<ConsensusRun>,
}

/// Full estimation pipeline for a probe `i` measuring island `l`: auxiliary
/// set construction, two consensus runs (or closed-form rates in Exact
/// mode), rate extraction, and recovery.
pub fn estimate_for_decision(
    grid: &Grid,
    part: &Partition,
    i: NodeId,
    l: IslandId,
    opts: &EstimatorOptions,
) -> Result<DecisionEstimate, EstimatorError> {
    let aux = build_auxiliary_graph(grid, part, l, i)?;
    let members = part.members(l);
    match opts.mode {
        EstimatorMode::Simulate => {
            let island_run = integrate_consensus(grid, &members, opts)?;
            let aux_run = integrate_consensus(grid, &aux.vertices, opts)?;
            if island_run.status != RunStatus::Steady {
                return Err(EstimatorError::NotSteady);
            }
            if aux_run.status == RunStatus::Disagreement {
                return Ok(DecisionEstimate {
                    estimate: ImbalanceEstimate::Singular,
                    disagreement: true,
                    island_run: Some(island_run),
                    aux_run: Some(aux_run),
                });
            }
            if aux_run.components.len() > 1 {
                log::warn!(
                    "probe {} on island {l}: removal splits the island into equal-rate \
                     components; rate disagreement cannot flag it, structural connectivity \
                     checks remain authoritative",
                    grid.ext_id(i)
                );
            }
            let rates = steady_rates(&island_run, &aux_run, aux.member)?;
            let estimate = estimate_imbalance(rates, grid.p(i), opts.eps_sing)?;
            Ok(DecisionEstimate {
                estimate,
                disagreement: false,
                island_run: Some(island_run),
                aux_run: Some(aux_run),
            })
        }
        EstimatorMode::Exact => {
            let (estimate, disagreement) =
                exact_estimate(grid, &members, &aux.vertices, aux.member, grid.p(i), opts)?;
            Ok(DecisionEstimate {
                estimate,
                disagreement,
                island_run: None,
                aux_run: None,
            })
        }
    }
}

/// Closed-form twin of the simulate path: rates are plain means over the
/// vertex sets, disagreement is decided from component means of the
/// auxiliary set.
fn exact_estimate(
    grid: &Grid,
    members: &[NodeId],
    aux_vertices: &[NodeId],
    member: bool,
    p_i: f64,
    opts: &EstimatorOptions,
) -> Result<(ImbalanceEstimate, bool), EstimatorError> {
    if members.is_empty() || aux_vertices.is_empty() {
        return Err(EstimatorError::EmptyVertexSet);
    }
    let mean = |set: &[NodeId]| set.iter().map(|&v| grid.p(v)).sum::<f64>() / set.len() as f64;
    let comps = graph::components_of_subset(grid.adjacency(), aux_vertices);
    if comps.len() > 1 {
        let rates: Vec<f64> = comps.iter().map(|c| mean(c)).collect();
        let lo = rates.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > opts.eps_dis {
            return Ok((ImbalanceEstimate::Singular, true));
        }
    }
    let rates = RateEstimate {
        omega: mean(members),
        omega_hat: mean(aux_vertices),
        a_l: if member { -1.0 } else { 1.0 },
    };
    Ok((estimate_imbalance(rates, p_i, opts.eps_sing)?, false))
}
