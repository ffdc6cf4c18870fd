//! Graph primitives over induced subsets of a fixed node universe.
//!
//! All functions take the full adjacency table (`adj[v]` lists the neighbors
//! of `v`, sorted ascending) plus an explicit subset of nodes, and operate on
//! the subgraph induced by that subset. Nothing here allocates per-node data
//! beyond `O(adj.len())` scratch.

use crate::grid::NodeId;

/// True iff the subgraph induced by `subset` (minus `skip`, if given) is
/// connected. The empty set and singletons count as connected.
pub fn is_connected_subset(adj: &[Vec<NodeId>], subset: &[NodeId], skip: Option<NodeId>) -> bool {
    let mut member = vec![false; adj.len()];
    let mut count = 0usize;
    for &v in subset {
        if Some(v) != skip {
            member[v] = true;
            count += 1;
        }
    }
    if count <= 1 {
        return true;
    }
    let start = subset
        .iter()
        .copied()
        .find(|&v| member[v])
        .expect("count > 0 implies a member exists");
    reach_count(adj, &mut member, start) == count
}

/// Connected components of the subgraph induced by `subset`. Each component
/// is sorted ascending; components are ordered by smallest member.
pub fn components_of_subset(adj: &[Vec<NodeId>], subset: &[NodeId]) -> Vec<Vec<NodeId>> {
    let mut member = vec![false; adj.len()];
    for &v in subset {
        member[v] = true;
    }
    let mut order: Vec<NodeId> = subset.to_vec();
    order.sort_unstable();
    let mut seen = vec![false; adj.len()];
    let mut out = Vec::new();
    for &v in &order {
        if seen[v] {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = std::collections::VecDeque::from([v]);
        seen[v] = true;
        while let Some(u) = queue.pop_front() {
            comp.push(u);
            for &w in &adj[u] {
                if member[w] && !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Articulation vertices of the subgraph induced by `subset`, sorted
/// ascending. Disconnected subsets are handled per component. Uses the
/// iterative lowpoint algorithm; `is_connected_subset` with node removal is
/// the slow oracle for this in tests.
pub fn articulation_of_subset(adj: &[Vec<NodeId>], subset: &[NodeId]) -> Vec<NodeId> {
    let n = adj.len();
    let mut member = vec![false; n];
    for &v in subset {
        member[v] = true;
    }
    const UNSET: usize = usize::MAX;
    let mut disc = vec![UNSET; n];
    let mut low = vec![0usize; n];
    let mut parent = vec![UNSET; n];
    let mut is_art = vec![false; n];
    let mut timer = 0usize;

    let mut roots: Vec<NodeId> = subset.to_vec();
    roots.sort_unstable();

    // Stack frames: (vertex, index into adj[vertex]).
    let mut stack: Vec<(NodeId, usize)> = Vec::new();
    for &root in &roots {
        if disc[root] != UNSET {
            continue;
        }
        let mut root_children = 0usize;
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        stack.push((root, 0));
        while let Some(frame) = stack.last_mut() {
            let v = frame.0;
            if frame.1 < adj[v].len() {
                let w = adj[v][frame.1];
                frame.1 += 1;
                if !member[w] {
                    continue;
                }
                if disc[w] == UNSET {
                    parent[w] = v;
                    if v == root {
                        root_children += 1;
                    }
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    stack.push((w, 0));
                } else if w != parent[v] {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if let Some(&(u, _)) = stack.last() {
                    low[u] = low[u].min(low[v]);
                    if u != root && low[v] >= disc[u] {
                        is_art[u] = true;
                    }
                }
            }
        }
        if root_children >= 2 {
            is_art[root] = true;
        }
    }
    roots.retain(|&v| is_art[v]);
    roots
}

fn reach_count(adj: &[Vec<NodeId>], member: &mut [bool], start: NodeId) -> usize {
    // Consumes membership flags as visit marks.
    let mut queue = std::collections::VecDeque::from([start]);
    member[start] = false;
    let mut reached = 1usize;
    while let Some(u) = queue.pop_front() {
        for &w in &adj[u] {
            if member[w] {
                member[w] = false;
                reached += 1;
                queue.push_back(w);
            }
        }
    }
    reached
}

#[cfg(test)]
mod tests {
    use super::*;

    fn adj_of(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<NodeId>> {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for row in &mut adj {
            row.sort_unstable();
        }
        adj
    }

    #[test]
    fn connectivity_on_path() {
        let adj = adj_of(3, &[(0, 1), (1, 2)]);
        assert!(is_connected_subset(&adj, &[0, 1, 2], None));
        assert!(!is_connected_subset(&adj, &[0, 1, 2], Some(1)));
        assert!(is_connected_subset(&adj, &[0, 1, 2], Some(0)));
        assert!(is_connected_subset(&adj, &[0], None));
        assert!(is_connected_subset(&adj, &[], None));
        assert!(is_connected_subset(&adj, &[0], Some(0)));
    }

    #[test]
    fn components_split_by_missing_middle() {
        let adj = adj_of(4, &[(0, 1), (1, 2), (2, 3)]);
        let comps = components_of_subset(&adj, &[0, 1, 3]);
        assert_eq!(comps, vec![vec![0, 1], vec![3]]);
    }

    #[test]
    fn articulation_matches_removal_oracle() {
        // Two triangles joined at vertex 2, plus a pendant at 5.
        let edges = [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (2, 4), (4, 5)];
        let adj = adj_of(6, &edges);
        let subset: Vec<NodeId> = (0..6).collect();
        let fast = articulation_of_subset(&adj, &subset);
        let slow: Vec<NodeId> = subset
            .iter()
            .copied()
            .filter(|&v| !is_connected_subset(&adj, &subset, Some(v)))
            .collect();
        assert_eq!(fast, slow);
        assert_eq!(fast, vec![2, 4]);
    }

    #[test]
    fn articulation_per_component() {
        // Component {0,1,2} is a path (1 is an articulation vertex);
        // component {4,5,6} is a triangle (none).
        let adj = adj_of(7, &[(0, 1), (1, 2), (4, 5), (5, 6), (4, 6)]);
        let subset = [0, 1, 2, 4, 5, 6];
        assert_eq!(articulation_of_subset(&adj, &subset), vec![1]);
    }
}
