//! Partitions of a grid into connected islands, imbalance arithmetic, and
//! boundary/cut-set queries. Everything here is ground truth: exact sums over
//! node injections, no estimation involved.

use std::path::Path;

use thiserror::Error;

use crate::graph;
use crate::grid::{Grid, GridError, NodeId};

/// Island index in `[0, n_mu)`.
pub type IslandId = usize;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("assignment covers {got} nodes, grid has {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("node {node} assigned to island {island}, but n_mu = {n_mu}")]
    IslandOutOfRange {
        node: i64,
        island: IslandId,
        n_mu: usize,
    },
    #[error("island {island} is empty")]
    EmptyIsland { island: IslandId },
    #[error("island {island} induces a disconnected subgraph")]
    DisconnectedIsland { island: IslandId },
    #[error("node {node} listed more than once")]
    DuplicateNode { node: i64 },
    #[error("unknown node {node}")]
    UnknownNode { node: i64 },
    #[error("partition file: {0}")]
    File(#[from] GridError),
}

/// Assignment of every node to exactly one island.
///
/// `step` is the migration step `k` at which this partition was current; it
/// starts at 0 and is advanced by the migration scheduler.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<IslandId>,
    n_mu: usize,
    step: u64,
}

impl Partition {
    /// Builds a partition from a dense assignment. Checks island indices are
    /// in range and every island nonempty; connectivity is checked against a
    /// grid by [`Partition::validate`].
    pub fn new(assignment: Vec<IslandId>, n_mu: usize) -> Result<Self, PartitionError> {
        let mut seen = vec![false; n_mu];
        for (node, &l) in assignment.iter().enumerate() {
            if l >= n_mu {
                return Err(PartitionError::IslandOutOfRange {
                    node: node as i64,
                    island: l,
                    n_mu,
                });
            }
            seen[l] = true;
        }
        if let Some(island) = seen.iter().position(|&s| !s) {
            return Err(PartitionError::EmptyIsland { island });
        }
        Ok(Partition {
            assignment,
            n_mu,
            step: 0,
        })
    }

    /// Full validation against a grid: coverage, nonempty islands, and
    /// per-island connectivity.
    pub fn validate(&self, grid: &Grid) -> Result<(), PartitionError> {
        if self.assignment.len() != grid.n() {
            return Err(PartitionError::LengthMismatch {
                got: self.assignment.len(),
                want: grid.n(),
            });
        }
        for (island, members) in self.all_members().into_iter().enumerate() {
            if members.is_empty() {
                return Err(PartitionError::EmptyIsland { island });
            }
            if !graph::is_connected_subset(grid.adjacency(), &members, None) {
                return Err(PartitionError::DisconnectedIsland { island });
            }
        }
        Ok(())
    }

    pub fn n_mu(&self) -> usize {
        self.n_mu
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn island_of(&self, i: NodeId) -> IslandId {
        self.assignment[i]
    }

    pub fn assignment(&self) -> &[IslandId] {
        &self.assignment
    }

    /// Members of island `l`, ascending.
    pub fn members(&self, l: IslandId) -> Vec<NodeId> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|&(_, &a)| a == l)
            .map(|(i, _)| i)
            .collect()
    }

    /// Members of every island, ascending within each island.
    pub fn all_members(&self) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new(); self.n_mu];
        for (i, &l) in self.assignment.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub(crate) fn reassign(&mut self, i: NodeId, to: IslandId) {
        debug_assert!(to < self.n_mu);
        self.assignment[i] = to;
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    /// Loads the partition JSON format `{"0": [bus ids], "1": [...]}` and
    /// validates it against the grid. Island keys must be `0..n_mu`.
    pub fn load(path: impl AsRef<Path>, grid: &Grid) -> Result<Self, PartitionError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| GridError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text, &path.display().to_string(), grid)
    }

    pub fn from_json_str(text: &str, origin: &str, grid: &Grid) -> Result<Self, PartitionError> {
        let islands: std::collections::BTreeMap<String, Vec<i64>> = serde_json::from_str(text)
            .map_err(|e| GridError::Parse {
                path: origin.to_string(),
                line: e.line(),
                msg: e.to_string(),
            })?;
        let n_mu = islands.len();
        let mut assignment = vec![usize::MAX; grid.n()];
        for (key, buses) in &islands {
            let island: IslandId = key.parse().map_err(|_| GridError::Parse {
                path: origin.to_string(),
                line: 1,
                msg: format!("island key {key:?} is not an index"),
            })?;
            if island >= n_mu {
                return Err(GridError::Parse {
                    path: origin.to_string(),
                    line: 1,
                    msg: format!("island keys must be 0..{n_mu}, got {island}"),
                }
                .into());
            }
            for &bus in buses {
                let node = grid
                    .dense_of(bus)
                    .ok_or(PartitionError::UnknownNode { node: bus })?;
                if assignment[node] != usize::MAX {
                    return Err(PartitionError::DuplicateNode { node: bus });
                }
                assignment[node] = island;
            }
        }
        let uncovered = assignment.iter().filter(|&&a| a == usize::MAX).count();
        if uncovered > 0 {
            return Err(PartitionError::LengthMismatch {
                got: grid.n() - uncovered,
                want: grid.n(),
            });
        }
        let part = Partition::new(assignment, n_mu)?;
        part.validate(grid)?;
        Ok(part)
    }

    /// Canonical partition JSON: islands ascending, bus ids ascending, one
    /// island per line.
    pub fn to_json_string(&self, grid: &Grid) -> String {
        let mut out = String::from("{\n");
        for (l, members) in self.all_members().iter().enumerate() {
            let buses: Vec<String> = members
                .iter()
                .map(|&i| grid.ext_id(i).to_string())
                .collect();
            let sep = if l + 1 == self.n_mu { "" } else { "," };
            out.push_str(&format!("  \"{}\": [{}]{}\n", l, buses.join(", "), sep));
        }
        out.push_str("}\n");
        out
    }

    pub fn save(&self, grid: &Grid, path: impl AsRef<Path>) -> Result<(), PartitionError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string(grid)).map_err(|source| GridError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(())
    }
}

/// Per-island imbalances `P_l` in MW, indexed by island.
///
/// Entries are summed over members in ascending node order, so the vector is
/// bitwise reproducible for a given grid and partition. The entries sum to
/// the grid total up to floating-point reassociation; `J*` and `p*` are
/// always derived from [`Grid::p_total`], which is partition independent.
#[derive(Clone, Debug, PartialEq)]
pub struct ImbalanceVector {
    values: Vec<f64>,
}

impl ImbalanceVector {
    pub fn compute(grid: &Grid, part: &Partition) -> Self {
        let mut values = vec![0.0; part.n_mu()];
        for (i, &l) in part.assignment().iter().enumerate() {
            values[l] += grid.p(i);
        }
        ImbalanceVector { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, l: IslandId) -> f64 {
        self.values[l]
    }

    pub fn n_mu(&self) -> usize {
        self.values.len()
    }

    /// Average absolute imbalance `J` in MW.
    pub fn cost_j(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() / self.values.len() as f64
    }

    pub(crate) fn shift(&mut self, from: IslandId, to: IslandId, p: f64) {
        self.values[to] += p;
        self.values[from] -= p;
    }
}

/// `P_l`: exact injection sum of island `l`.
pub fn island_imbalance(grid: &Grid, part: &Partition, l: IslandId) -> f64 {
    part.members(l).iter().map(|&i| grid.p(i)).sum()
}

/// Average absolute imbalance `J` of a partition, in MW.
pub fn cost_j(grid: &Grid, part: &Partition) -> f64 {
    ImbalanceVector::compute(grid, part).cost_j()
}

/// Lower bound `J* = |P_tot| / n_mu`; no partition of the grid into `n_mu`
/// islands can do better.
pub fn j_star(grid: &Grid, n_mu: usize) -> f64 {
    grid.p_total().abs() / n_mu as f64
}

/// Boundary nodes: `(i, islands adjacent to i other than its own)`, node
/// ascending, islands ascending. A node appears iff some neighbor lies in a
/// different island.
pub fn boundary_nodes(grid: &Grid, part: &Partition) -> Vec<(NodeId, Vec<IslandId>)> {
    let mut out = Vec::new();
    for i in 0..grid.n() {
        let own = part.island_of(i);
        let mut adj: Vec<IslandId> = grid
            .neighbors(i)
            .iter()
            .map(|&j| part.island_of(j))
            .filter(|&l| l != own)
            .collect();
        adj.sort_unstable();
        adj.dedup();
        if !adj.is_empty() {
            out.push((i, adj));
        }
    }
    out
}

/// True iff island `l` stays connected after removing its member `i`.
/// The empty and singleton remainders count as connected.
pub fn is_connected_without(grid: &Grid, part: &Partition, l: IslandId, i: NodeId) -> bool {
    debug_assert_eq!(part.island_of(i), l, "node must belong to the island");
    let members = part.members(l);
    graph::is_connected_subset(grid.adjacency(), &members, Some(i))
}

/// The condensed graph: one vertex per island, a link wherever some grid
/// edge crosses two islands.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CondensedGraph {
    pub islands: Vec<IslandId>,
    /// Links `(l, m)` with `l < m`, sorted.
    pub links: Vec<(IslandId, IslandId)>,
}

impl CondensedGraph {
    /// Connected whenever the grid is connected and the partition valid.
    pub fn is_connected(&self) -> bool {
        let n = self.islands.len();
        let mut adj = vec![Vec::new(); n];
        for &(l, m) in &self.links {
            adj[l].push(m);
            adj[m].push(l);
        }
        let all: Vec<usize> = (0..n).collect();
        graph::is_connected_subset(&adj, &all, None)
    }
}

pub fn condensed_graph(grid: &Grid, part: &Partition) -> CondensedGraph {
    let mut links: Vec<(IslandId, IslandId)> = grid
        .edges()
        .iter()
        .map(|&(a, b)| (part.island_of(a), part.island_of(b)))
        .filter(|&(l, m)| l != m)
        .map(|(l, m)| (l.min(m), l.max(m)))
        .collect();
    links.sort_unstable();
    links.dedup();
    CondensedGraph {
        islands: (0..part.n_mu()).collect(),
        links,
    }
}

/// Cross-island edges as dense `(low, high)` pairs, sorted; the order matches
/// ascending external-id pairs because the dense remap is monotone.
pub fn cut_set(grid: &Grid, part: &Partition) -> Vec<(NodeId, NodeId)> {
    grid.edges()
        .iter()
        .copied()
        .filter(|&(a, b)| part.island_of(a) != part.island_of(b))
        .collect()
}
