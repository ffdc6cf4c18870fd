//! Initial partition construction: seeded shortest-path regions, seeded
//! random partitions, and partitions recovered from a cut set.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph;
use crate::grid::{Grid, NodeId};
use crate::partition::{IslandId, Partition, PartitionError};

#[derive(Debug, thiserror::Error)]
pub enum InitError {
    #[error("island count {n_mu} invalid for {n} nodes")]
    BadIslandCount { n_mu: usize, n: usize },
    #[error("seed group {group} is empty")]
    EmptySeedGroup { group: usize },
    #[error("seed node {id} appears in more than one group")]
    SeedOverlap { id: i64 },
    #[error("seed node {id} is not in the grid")]
    UnknownSeed { id: i64 },
    #[error(
        "connecting trees for seed groups {group_a} and {group_b} share a vertex; \
         pick groups that are farther apart"
    )]
    EntangledGroups { group_a: usize, group_b: usize },
    #[error("cut line {a}-{b} is not an edge of the grid")]
    UnknownCutEdge { a: i64, b: i64 },
    #[error("region growth left nodes unassigned")]
    Uncovered,
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    CutParse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
}

/// Seeded shortest-path regions: each group is first joined into a connecting
/// tree (members attached to the partial tree along shortest unweighted
/// paths), then islands grow from their trees one BFS layer per round, in
/// island order; every node joins the island that reaches it first. Ties at
/// equal distance go to the lower island index. Seed groups are external ids
/// and must be non-empty; their connecting trees must be vertex-disjoint.
pub fn sspr_bfs(grid: &Grid, seed_groups: &[Vec<i64>]) -> Result<Partition, InitError> {
    let n_mu = seed_groups.len();
    if n_mu == 0 || n_mu > grid.n() {
        return Err(InitError::BadIslandCount { n_mu, n: grid.n() });
    }
    let mut dense_groups: Vec<Vec<NodeId>> = Vec::with_capacity(n_mu);
    let mut seen: BTreeSet<NodeId> = BTreeSet::new();
    for (gi, group) in seed_groups.iter().enumerate() {
        if group.is_empty() {
            return Err(InitError::EmptySeedGroup { group: gi });
        }
        let mut dense = Vec::with_capacity(group.len());
        for &id in group {
            let v = grid
                .dense_of(id)
                .ok_or(InitError::UnknownSeed { id })?;
            if !seen.insert(v) {
                return Err(InitError::SeedOverlap { id });
            }
            dense.push(v);
        }
        dense_groups.push(dense);
    }
    let mut owner: Vec<Option<usize>> = vec![None; grid.n()];
    let mut tree_groups: Vec<Vec<NodeId>> = Vec::with_capacity(n_mu);
    for (gi, dense) in dense_groups.iter().enumerate() {
        let tree = connecting_tree(grid, dense);
        for &v in &tree {
            if let Some(prev) = owner[v] {
                return Err(InitError::EntangledGroups {
                    group_a: prev,
                    group_b: gi,
                });
            }
            owner[v] = Some(gi);
        }
        tree_groups.push(tree.into_iter().collect());
    }
    let assignment = round_robin_regions(grid, &tree_groups)?;
    let part = Partition::new(assignment, n_mu)?;
    part.validate(grid)?;
    Ok(part)
}

/// Joins a vertex group into one tree by attaching each member to the partial
/// tree along a shortest path. Deterministic: members in input order, BFS in
/// adjacency order.
fn connecting_tree(grid: &Grid, members: &[NodeId]) -> BTreeSet<NodeId> {
    let mut tree: BTreeSet<NodeId> = BTreeSet::new();
    tree.insert(members[0]);
    for &m in &members[1..] {
        if tree.contains(&m) {
            continue;
        }
        let mut parent: Vec<Option<NodeId>> = vec![None; grid.n()];
        let mut seen = vec![false; grid.n()];
        seen[m] = true;
        let mut queue = std::collections::VecDeque::from([m]);
        let mut hit = None;
        'bfs: while let Some(v) = queue.pop_front() {
            for &u in grid.neighbors(v) {
                if seen[u] {
                    continue;
                }
                seen[u] = true;
                parent[u] = Some(v);
                if tree.contains(&u) {
                    hit = Some(u);
                    break 'bfs;
                }
                queue.push_back(u);
            }
        }
        // The grid is connected, so the search always reaches the tree.
        let mut v = hit.expect("connected grid");
        loop {
            tree.insert(v);
            match parent[v] {
                Some(p) => v = p,
                None => break,
            }
        }
    }
    tree
}

/// Partition from `n_mu` uniformly chosen distinct singleton seeds grown by
/// the same round-robin rule. Valid by construction; same seed, same
/// partition.
pub fn random_partition(grid: &Grid, n_mu: usize, seed: u64) -> Result<Partition, InitError> {
    if n_mu == 0 || n_mu > grid.n() {
        return Err(InitError::BadIslandCount { n_mu, n: grid.n() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, grid.n(), n_mu);
    let groups: Vec<Vec<NodeId>> = picks.iter().map(|v| vec![v]).collect();
    let assignment = round_robin_regions(grid, &groups)?;
    let part = Partition::new(assignment, n_mu)?;
    part.validate(grid)?;
    Ok(part)
}

/// Recovers the partition induced by removing a set of cut edges (external
/// id pairs): islands are the connected components that remain, indexed in
/// order of their smallest dense node. Every pair must be an existing edge.
pub fn from_cut_set(grid: &Grid, cut: &[(i64, i64)]) -> Result<Partition, InitError> {
    let mut removed: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    for &(a, b) in cut {
        let (Some(da), Some(db)) = (grid.dense_of(a), grid.dense_of(b)) else {
            return Err(InitError::UnknownCutEdge { a, b });
        };
        let key = (da.min(db), da.max(db));
        if grid.edges().binary_search(&key).is_err() {
            return Err(InitError::UnknownCutEdge { a, b });
        }
        removed.insert(key);
    }
    let filtered: Vec<Vec<NodeId>> = (0..grid.n())
        .map(|v| {
            grid.neighbors(v)
                .iter()
                .copied()
                .filter(|&u| !removed.contains(&(v.min(u), v.max(u))))
                .collect()
        })
        .collect();
    let all: Vec<NodeId> = (0..grid.n()).collect();
    let comps = graph::components_of_subset(&filtered, &all);
    let mut assignment = vec![0usize; grid.n()];
    for (island, comp) in comps.iter().enumerate() {
        for &v in comp {
            assignment[v] = island;
        }
    }
    let part = Partition::new(assignment, comps.len())?;
    Ok(part)
}

/// Reads a cut-set file: one `a-b` pair of external ids per line, `#`
/// comments and blank lines ignored. Negative ids are not representable in
/// this format.
pub fn load_cut_set(path: &Path) -> Result<Vec<(i64, i64)>, InitError> {
    let text = std::fs::read_to_string(path).map_err(|source| InitError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cut = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse = |s: &str| -> Option<i64> { s.trim().parse().ok() };
        let pair = line
            .split_once('-')
            .and_then(|(a, b)| Some((parse(a)?, parse(b)?)));
        match pair {
            Some(p) => cut.push(p),
            None => {
                return Err(InitError::CutParse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    msg: format!("expected `<id>-<id>`, got {line:?}"),
                })
            }
        }
    }
    Ok(cut)
}

/// Round-robin layered growth shared by the seeded constructors. Returns a
/// full assignment; errors only if some node was never reached, which a
/// connected grid rules out.
fn round_robin_regions(
    grid: &Grid,
    seed_groups: &[Vec<NodeId>],
) -> Result<Vec<IslandId>, InitError> {
    let mut assign: Vec<Option<IslandId>> = vec![None; grid.n()];
    let mut frontiers: Vec<Vec<NodeId>> = Vec::with_capacity(seed_groups.len());
    for (island, group) in seed_groups.iter().enumerate() {
        for &v in group {
            assign[v] = Some(island);
        }
        frontiers.push(group.clone());
    }
    while frontiers.iter().any(|f| !f.is_empty()) {
        for (island, frontier) in frontiers.iter_mut().enumerate() {
            let layer = std::mem::take(frontier);
            let mut next = Vec::new();
            for &v in &layer {
                for &u in grid.neighbors(v) {
                    if assign[u].is_none() {
                        assign[u] = Some(island);
                        next.push(u);
                    }
                }
            }
            *frontier = next;
        }
    }
    assign
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or(InitError::Uncovered)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

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
    fn seeded_regions_split_the_demo_grid() {
        let g = demo();
        let part = sspr_bfs(&g, &[vec![1], vec![4]]).unwrap();
        assert_eq!(part.assignment(), &[0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn equal_distance_ties_go_to_the_lower_island() {
        let g = Grid::new(
            vec![(1, 1.0), (2, 1.0), (3, 1.0), (4, 1.0), (5, 1.0)],
            vec![(1, 2), (2, 3), (3, 4), (4, 5)],
        )
        .unwrap();
        let part = sspr_bfs(&g, &[vec![1], vec![5]]).unwrap();
        // Node 3 is two hops from both seeds; island 0 expands first.
        assert_eq!(part.assignment(), &[0, 0, 0, 1, 1]);
    }

    #[test]
    fn spread_group_is_joined_by_its_connecting_tree() {
        let g = Grid::new(
            vec![
                (1, 1.0),
                (2, 1.0),
                (3, 1.0),
                (4, 1.0),
                (5, 1.0),
                (6, 1.0),
            ],
            vec![(1, 2), (2, 3), (3, 4), (4, 5), (5, 6)],
        )
        .unwrap();
        // Group {1, 3} pulls node 2 into its tree before any growth happens,
        // so island 0 already holds three nodes when the layering starts.
        let part = sspr_bfs(&g, &[vec![1, 3], vec![5]]).unwrap();
        assert_eq!(part.assignment(), &[0, 0, 0, 0, 1, 1]);
    }

    #[test]
    fn entangled_groups_are_rejected() {
        let g = Grid::new(
            vec![(1, 1.0), (2, 1.0), (3, 1.0), (4, 1.0), (5, 1.0)],
            vec![(1, 2), (2, 3), (3, 4), (4, 5)],
        )
        .unwrap();
        // The only 1-to-5 path runs through 3, the other group's seed.
        assert!(matches!(
            sspr_bfs(&g, &[vec![1, 5], vec![3]]),
            Err(InitError::EntangledGroups {
                group_a: 0,
                group_b: 1
            })
        ));
    }

    #[test]
    fn seed_validation() {
        let g = demo();
        assert!(matches!(
            sspr_bfs(&g, &[vec![1], vec![1]]),
            Err(InitError::SeedOverlap { id: 1 })
        ));
        assert!(matches!(
            sspr_bfs(&g, &[vec![1], vec![]]),
            Err(InitError::EmptySeedGroup { group: 1 })
        ));
        assert!(matches!(
            sspr_bfs(&g, &[vec![1], vec![99]]),
            Err(InitError::UnknownSeed { id: 99 })
        ));
        assert!(matches!(
            sspr_bfs(&g, &[]),
            Err(InitError::BadIslandCount { .. })
        ));
    }

    #[test]
    fn random_partitions_are_valid_and_deterministic() {
        let g = demo();
        let a = random_partition(&g, 2, 42).unwrap();
        let b = random_partition(&g, 2, 42).unwrap();
        assert_eq!(a.assignment(), b.assignment());
        for seed in 0..50 {
            for n_mu in 1..=3 {
                let part = random_partition(&g, n_mu, seed).unwrap();
                part.validate(&g).unwrap();
            }
        }
        assert!(matches!(
            random_partition(&g, 7, 0),
            Err(InitError::BadIslandCount { .. })
        ));
    }

    #[test]
    fn cut_set_recovers_components() {
        let g = demo();
        let part = from_cut_set(&g, &[(3, 4)]).unwrap();
        assert_eq!(part.n_mu(), 2);
        assert_eq!(part.assignment(), &[0, 0, 0, 1, 1, 1]);

        // Removing a cycle edge does not disconnect anything.
        let whole = from_cut_set(&g, &[(1, 2)]).unwrap();
        assert_eq!(whole.n_mu(), 1);

        assert!(matches!(
            from_cut_set(&g, &[(1, 6)]),
            Err(InitError::UnknownCutEdge { a: 1, b: 6 })
        ));
    }

    #[test]
    fn cut_set_files_parse_with_comments() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# demo cut").unwrap();
        writeln!(f, "3-4").unwrap();
        writeln!(f).unwrap();
        writeln!(f, "  1-2  ").unwrap();
        let cut = load_cut_set(f.path()).unwrap();
        assert_eq!(cut, vec![(3, 4), (1, 2)]);

        let mut bad = tempfile::NamedTempFile::new().unwrap();
        writeln!(bad, "3-4").unwrap();
        writeln!(bad, "x-4").unwrap();
        let err = load_cut_set(bad.path()).unwrap_err();
        match err {
            InitError::CutParse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
