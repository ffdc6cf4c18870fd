//! Offline analysis: the suboptimality bound for converged partitions, local
//! optimality certificates, contraction audits of migration traces, and a
//! brute-force optimum for small grids.

use thiserror::Error;

use crate::graph;
use crate::grid::{Grid, NodeId};
use crate::migration::MigrationEvent;
use crate::partition::{condensed_graph, ImbalanceVector, IslandId, Partition};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("grid has {n} nodes; exhaustive search is capped at {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("cannot split {n} nodes into {n_mu} non-empty islands")]
    BadIslandCount { n: usize, n_mu: usize },
}

/// Index (1-based, in the imbalance-sorted order) of the first island whose
/// imbalance a worst-case final partition can push above the target mean,
/// clamped into `[1, n_mu]`.
pub fn l_star(p_star: f64, p_bar: f64, n_mu: usize) -> usize {
    assert!(n_mu >= 1);
    if p_bar <= 0.0 {
        return 1;
    }
    let raw = (-p_star / p_bar + (n_mu as f64 + 1.0) / 2.0).ceil();
    raw.clamp(1.0, n_mu as f64) as usize
}

/// Worst-case excess of the converged cost over the ideal `|p_star|`, from
/// the largest single-node power `p_bar` and the per-island target
/// `p_star = P_total / n_mu`.
///
/// The sorted worst-case imbalance profile spaces islands `p_bar` apart
/// around the target; summing the positive tail from the raw (unclamped)
/// crossover index and subtracting `p_star + |p_star|` gives the bound. An
/// empty tail means a zero bound contribution from the sum.
pub fn bound_from_params(p_star: f64, p_bar: f64, n_mu: usize) -> f64 {
    assert!(n_mu >= 1);
    if p_bar <= 0.0 {
        return 0.0;
    }
    let mid = (n_mu as f64 + 1.0) / 2.0;
    let raw = (-p_star / p_bar + mid).ceil();
    let start = raw.max(1.0) as usize;
    let mut tail = 0.0;
    for l in start..=n_mu {
        tail += p_star + p_bar * (l as f64 - mid);
    }
    2.0 / n_mu as f64 * tail - (p_star + p_star.abs())
}

/// Suboptimality bound for one grid and island count, optionally scored
/// against an achieved final cost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundReport {
    pub n_mu: usize,
    /// Largest absolute nodal power.
    pub p_bar: f64,
    /// Target per-island imbalance `P_total / n_mu` (signed).
    pub p_star: f64,
    pub l_star: usize,
    /// Upper bound on `J_final - J_ideal`.
    pub bound: f64,
    /// `J_final - J_ideal`, when a final cost was supplied.
    pub gap: Option<f64>,
    /// `gap <= bound`, when a final cost was supplied.
    pub satisfied: Option<bool>,
}

pub fn bound_report(grid: &Grid, n_mu: usize, final_j: Option<f64>) -> BoundReport {
    let p_bar = grid.p_bar();
    let p_star = grid.p_total() / n_mu as f64;
    let bound = bound_from_params(p_star, p_bar, n_mu);
    let (gap, satisfied) = match final_j {
        Some(j) => {
            let gap = j - p_star.abs();
            (Some(gap), Some(gap <= bound + 1e-9))
        }
        None => (None, None),
    };
    BoundReport {
        n_mu,
        p_bar,
        p_star,
        l_star: l_star(p_star, p_bar, n_mu),
        bound,
        gap,
        satisfied,
    }
}

/// Neighbor-gap certificate: over every pair of islands that share a tie
/// line, the imbalance difference must stay within the largest nodal power.
/// On a connected grid this forces consecutive sorted imbalances at most
/// `p_bar` apart, which is the hypothesis the suboptimality bound needs; a
/// partition failing it voids the bound guarantee.
#[derive(Clone, Debug, PartialEq)]
pub struct GapCertificate {
    /// Largest `|P_l - P_m|` over linked island pairs; 0 for a single island.
    pub max_gap: f64,
    /// The link attaining `max_gap`, when any link exists.
    pub worst_link: Option<(IslandId, IslandId)>,
    pub p_bar: f64,
    /// `max_gap <= p_bar + 1e-6`.
    pub holds: bool,
}

pub fn neighbor_gap_certificate(grid: &Grid, part: &Partition) -> GapCertificate {
    let imb = ImbalanceVector::compute(grid, part);
    let mut max_gap = 0.0;
    let mut worst_link = None;
    for (l, m) in condensed_graph(grid, part).links {
        let gap = (imb.values()[l] - imb.values()[m]).abs();
        if worst_link.is_none() || gap > max_gap {
            max_gap = gap;
            worst_link = Some((l, m));
        }
    }
    let p_bar = grid.p_bar();
    GapCertificate {
        max_gap,
        worst_link,
        p_bar,
        holds: max_gap <= p_bar + 1e-6,
    }
}

/// Per-event contraction audit row: distance of the imbalance vector to the
/// uniform target before and after the event, plus the sign certificate
/// `p_i * (P_to - P_from + p_i)` that is negative exactly when the squared
/// distance strictly drops.
#[derive(Clone, Debug, PartialEq)]
pub struct ContractionRow {
    pub step: u64,
    pub node: i64,
    pub from: IslandId,
    pub to: IslandId,
    pub p_i: f64,
    pub zero_power: bool,
    pub norm_before: f64,
    pub norm_after: f64,
    pub discriminant: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractionTrace {
    pub p_star: f64,
    pub rows: Vec<ContractionRow>,
    /// Every power-carrying event strictly reduced the distance and carried
    /// a negative discriminant.
    pub all_normal_contract: bool,
    /// Every zero-power event left the distance exactly unchanged.
    pub all_zero_unchanged: bool,
}

pub fn contraction_trace(events: &[MigrationEvent], p_star: f64) -> ContractionTrace {
    let dist = |values: &[f64]| -> f64 {
        values
            .iter()
            .map(|&v| (v - p_star) * (v - p_star))
            .sum::<f64>()
            .sqrt()
    };
    let mut rows = Vec::with_capacity(events.len());
    let mut all_normal = true;
    let mut all_zero = true;
    for e in events {
        let norm_before = dist(&e.imbalances_before);
        let norm_after = dist(&e.imbalances_after);
        let discriminant =
            e.p_i * (e.imbalances_before[e.to] - e.imbalances_before[e.from] + e.p_i);
        if e.zero_power {
            if norm_after != norm_before {
                all_zero = false;
            }
        } else if !(norm_after < norm_before && discriminant < 0.0) {
            all_normal = false;
        }
        rows.push(ContractionRow {
            step: e.step,
            node: e.node,
            from: e.from,
            to: e.to,
            p_i: e.p_i,
            zero_power: e.zero_power,
            norm_before,
            norm_after,
            discriminant,
        });
    }
    ContractionTrace {
        p_star,
        rows,
        all_normal_contract: all_normal,
        all_zero_unchanged: all_zero,
    }
}

/// Population standard deviation of island imbalances around their mean.
pub fn imbalance_stddev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Exhaustive optimum over connected partitions.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub optimal_j: f64,
    /// Every assignment achieving the optimum (within 1e-9 relative), in
    /// canonical first-occurrence island numbering.
    pub optimal_partitions: Vec<Vec<IslandId>>,
    /// Set partitions with exactly `n_mu` blocks that were examined.
    pub enumerated_count: u64,
}

pub const ORACLE_DEFAULT_CAP: usize = 14;

/// Enumerates every partition of the grid into exactly `n_mu` unlabeled
/// non-empty blocks (restricted growth strings), keeps those whose blocks
/// are all connected, and returns the minimum cost with all its witnesses.
pub fn brute_force_optimum(
    grid: &Grid,
    n_mu: usize,
    cap: usize,
) -> Result<OracleResult, AnalysisError> {
    let n = grid.n();
    if n > cap {
        return Err(AnalysisError::TooLarge { n, cap });
    }
    if n_mu == 0 || n_mu > n {
        return Err(AnalysisError::BadIslandCount { n, n_mu });
    }
    let mut search = OracleSearch {
        grid,
        n_mu,
        assignment: vec![0; n],
        best_j: f64::INFINITY,
        best: Vec::new(),
        examined: 0,
    };
    search.descend(0, 0);
    debug_assert!(search.best_j.is_finite(), "a connected grid always admits a connected split");
    Ok(OracleResult {
        optimal_j: search.best_j,
        optimal_partitions: search.best,
        enumerated_count: search.examined,
    })
}

struct OracleSearch<'g> {
    grid: &'g Grid,
    n_mu: usize,
    assignment: Vec<IslandId>,
    best_j: f64,
    best: Vec<Vec<IslandId>>,
    examined: u64,
}

impl OracleSearch<'_> {
    /// Restricted growth: node `i` may join blocks `0..=used`, with `used`
    /// capped at `n_mu - 1`; only completions using exactly `n_mu` blocks
    /// are scored.
    fn descend(&mut self, i: NodeId, used: usize) {
        let n = self.grid.n();
        if i == n {
            if used == self.n_mu {
                self.score();
            }
            return;
        }
        // Remaining nodes must still be able to open the missing blocks.
        if used + (n - i) < self.n_mu {
            return;
        }
        let top = (used + 1).min(self.n_mu);
        for b in 0..top {
            self.assignment[i] = b;
            self.descend(i + 1, used.max(b + 1));
        }
    }

    fn score(&mut self) {
        self.examined += 1;
        let mut power = vec![0.0f64; self.n_mu];
        for (b, slot) in power.iter_mut().enumerate() {
            let members: Vec<NodeId> = (0..self.grid.n())
                .filter(|&v| self.assignment[v] == b)
                .collect();
            if !graph::is_connected_subset(self.grid.adjacency(), &members, None) {
                return;
            }
            *slot = members.iter().map(|&v| self.grid.p(v)).sum();
        }
        let j = power.iter().map(|p| p.abs()).sum::<f64>() / self.n_mu as f64;
        let tol = 1e-9 * (1.0 + self.best_j.min(j).abs());
        if j < self.best_j - tol {
            self.best_j = j;
            self.best.clear();
            self.best.push(self.assignment.clone());
        } else if (j - self.best_j).abs() <= tol {
            self.best.push(self.assignment.clone());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::cost_j;

    #[test]
    fn bound_tail_formula_hand_values() {
        // n_mu = 2, p_star = 58.25, p_bar = 542.78: crossover index 2, tail
        // (58.25 + 271.39), bound 329.64 - 116.5 = 213.14.
        let b2 = bound_from_params(58.25, 542.78, 2);
        assert!((b2 - 213.14).abs() < 1e-9, "got {b2}");
        // n_mu = 3, p_star = 38.83: bound 335.966...
        let b3 = bound_from_params(38.83, 542.78, 3);
        assert!((b3 - 335.96666666666664).abs() < 1e-9, "got {b3}");
    }

    #[test]
    fn l_star_clamps_and_handles_degenerate_inputs() {
        assert_eq!(l_star(58.25, 542.78, 2), 2);
        assert_eq!(l_star(38.83, 542.78, 3), 2);
        // Huge positive target pushes the raw index below 1.
        assert_eq!(l_star(1e6, 1.0, 2), 1);
        // Huge negative target pushes it above n_mu.
        assert_eq!(l_star(-1e6, 1.0, 3), 3);
        // All-zero powers.
        assert_eq!(l_star(0.0, 0.0, 4), 1);
        assert_eq!(bound_from_params(0.0, 0.0, 4), 0.0);
    }

    #[test]
    fn l_star_monotonicity_directions() {
        // Nondecreasing as the target mean falls, at any p_bar. In p_bar the
        // direction is set by the target's sign: a deficit target (p_star
        // <= 0) can only lower l_star as p_bar grows, a surplus target can
        // only raise it (raw index mid - p_star/p_bar moves toward mid from
        // opposite sides).
        for n_mu in 1..=5usize {
            for pb in [0.5, 1.0, 2.0, 8.0] {
                let mut prev = l_star(15.0, pb, n_mu);
                for k in (-30..30).rev() {
                    let v = l_star(k as f64 * 0.5, pb, n_mu);
                    assert!(v >= prev, "n_mu={n_mu} pb={pb} k={k}");
                    prev = v;
                }
            }
            for ps in [-4.0, -1.0, 0.0, 1.0, 4.0] {
                let series: Vec<usize> = [0.25, 0.5, 1.0, 2.0, 4.0, 16.0]
                    .iter()
                    .map(|&pb| l_star(ps, pb, n_mu))
                    .collect();
                for w in series.windows(2) {
                    if ps <= 0.0 {
                        assert!(w[1] <= w[0], "n_mu={n_mu} ps={ps}: {series:?}");
                    } else {
                        assert!(w[1] >= w[0], "n_mu={n_mu} ps={ps}: {series:?}");
                    }
                }
            }
        }
        // Surplus witness at the reference point: l_star steps up, not down,
        // as p_bar crosses 2 * p_star.
        assert_eq!(l_star(58.25, 116.5, 2), 1);
        assert_eq!(l_star(58.25, 120.0, 2), 2);
    }

    #[test]
    fn bound_report_scores_a_final_cost() {
        let g = Grid::new(
            vec![(1, 100.0), (2, -40.0), (3, -20.0)],
            vec![(1, 2), (2, 3)],
        )
        .unwrap();
        // p_bar = 100, p_star = 20, n_mu = 2: raw index ceil(-0.2 + 1.5) = 2,
        // tail = 20 + 100 * 0.5 = 70, bound = 70 - 40 = 30.
        let r = bound_report(&g, 2, Some(30.0));
        assert_eq!(r.p_bar, 100.0);
        assert_eq!(r.p_star, 20.0);
        assert!((r.bound - 30.0).abs() < 1e-12);
        // J = 30 against ideal 20: gap 10, inside the bound.
        assert!((r.gap.unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(r.satisfied, Some(true));
    }

    fn demo() -> Grid {
        Grid::new(
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
        .unwrap()
    }

    #[test]
    fn certificate_compares_linked_island_gaps_to_p_bar() {
        // p_bar = 30. Splitting at the 3-4 bridge leaves imbalances 60 and
        // -45: the only link gaps by 105, far beyond any single node.
        let g = demo();
        let wide = Partition::new(vec![0, 0, 0, 1, 1, 1], 2).unwrap();
        let cert = neighbor_gap_certificate(&g, &wide);
        assert!(!cert.holds);
        assert_eq!(cert.worst_link, Some((0, 1)));
        assert!((cert.max_gap - 105.0).abs() < 1e-9);
        assert_eq!(cert.p_bar, 30.0);

        // Peeling node 2 off instead leaves 20 vs -5: gap 25 <= 30.
        let tight = Partition::new(vec![1, 0, 1, 1, 1, 1], 2).unwrap();
        let cert = neighbor_gap_certificate(&g, &tight);
        assert!(cert.holds, "gap {} over {}", cert.max_gap, cert.p_bar);
        assert!((cert.max_gap - 25.0).abs() < 1e-9);

        // A single island has no links and trivially certifies.
        let whole = Partition::new(vec![0; 6], 1).unwrap();
        let cert = neighbor_gap_certificate(&g, &whole);
        assert!(cert.holds);
        assert_eq!(cert.max_gap, 0.0);
        assert_eq!(cert.worst_link, None);
    }

    #[test]
    fn oracle_finds_path_optimum() {
        // Path of four nodes, powers 5, -5, 5, -5. Connected 2-splits are the
        // three prefix cuts: J = 5 (|5|+|-5|)/2... prefix {1}: (5, -5) -> 5;
        // {1,2}: (0, 0) -> 0; {1,2,3}: (5, -5) -> 5. Optimum 0, unique.
        let g = Grid::new(
            vec![(1, 5.0), (2, -5.0), (3, 5.0), (4, -5.0)],
            vec![(1, 2), (2, 3), (3, 4)],
        )
        .unwrap();
        let r = brute_force_optimum(&g, 2, ORACLE_DEFAULT_CAP).unwrap();
        assert_eq!(r.optimal_j, 0.0);
        assert_eq!(r.optimal_partitions, vec![vec![0, 0, 1, 1]]);
        // S(4, 2) = 7 set partitions examined.
        assert_eq!(r.enumerated_count, 7);
    }

    #[test]
    fn oracle_three_islands_on_a_path() {
        // Path 1-2-3, three singleton islands is the only 3-split.
        let g = Grid::new(vec![(1, 2.0), (2, -1.0), (3, 2.0)], vec![(1, 2), (2, 3)]).unwrap();
        let r = brute_force_optimum(&g, 3, ORACLE_DEFAULT_CAP).unwrap();
        assert!((r.optimal_j - 5.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.enumerated_count, 1);
        assert_eq!(r.optimal_partitions, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn oracle_respects_the_cap_and_island_count() {
        let g = demo();
        assert!(matches!(
            brute_force_optimum(&g, 2, 5),
            Err(AnalysisError::TooLarge { n: 6, cap: 5 })
        ));
        assert!(matches!(
            brute_force_optimum(&g, 7, ORACLE_DEFAULT_CAP),
            Err(AnalysisError::BadIslandCount { .. })
        ));
    }

    #[test]
    fn oracle_never_beats_ideal_and_matches_rescoring() {
        let g = demo();
        let r = brute_force_optimum(&g, 2, ORACLE_DEFAULT_CAP).unwrap();
        let ideal = (g.p_total() / 2.0).abs();
        assert!(r.optimal_j + 1e-12 >= ideal);
        for assignment in &r.optimal_partitions {
            let part = Partition::new(assignment.clone(), 2).unwrap();
            part.validate(&g).unwrap();
            assert!((cost_j(&g, &part) - r.optimal_j).abs() <= 1e-9 * (1.0 + r.optimal_j));
        }
    }

    #[test]
    fn contraction_audit_on_synthetic_events() {
        // One normal improving event and one zero-power event.
        let events = vec![
            MigrationEvent {
                step: 1,
                node: 3,
                from: 0,
                to: 1,
                p_i: 10.0,
                zero_power: false,
                imbalances_before: vec![60.0, -45.0],
                imbalances_after: vec![50.0, -35.0],
            },
            MigrationEvent {
                step: 2,
                node: 5,
                from: 1,
                to: 0,
                p_i: 0.0,
                zero_power: true,
                imbalances_before: vec![50.0, -35.0],
                imbalances_after: vec![50.0, -35.0],
            },
        ];
        let trace = contraction_trace(&events, 7.5);
        assert!(trace.all_normal_contract);
        assert!(trace.all_zero_unchanged);
        let row = &trace.rows[0];
        // discriminant = 10 * (-45 - 60 + 10) = -950.
        assert_eq!(row.discriminant, -950.0);
        assert!(row.norm_after < row.norm_before);
        assert_eq!(trace.rows[1].norm_after, trace.rows[1].norm_before);
    }

    #[test]
    fn stddev_matches_hand_value() {
        assert_eq!(imbalance_stddev(&[]), 0.0);
        assert_eq!(imbalance_stddev(&[3.0, 3.0]), 0.0);
        // Values 1, 5: mean 3, deviations 2 -> stddev 2.
        assert_eq!(imbalance_stddev(&[1.0, 5.0]), 2.0);
    }
}
