//! Grid data model and the native JSON grid format.
//!
//! A [`Grid`] is an undirected, simple, connected graph whose nodes carry a
//! signed active-power injection in MW. Node ids in input files (bus numbers)
//! may be arbitrary unique integers; they are remapped to dense indices
//! `0..n` on load, ascending by original id, and the original ids are kept
//! for reporting. A `Grid` is immutable after construction and safe to share
//! across threads.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::graph;

/// Dense node index in `[0, n)`.
pub type NodeId = usize;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("grid has no nodes")]
    Empty,
    #[error("duplicate node id {id}")]
    DuplicateNode { id: i64 },
    #[error("node {id}: power is not finite")]
    NonFinitePower { id: i64 },
    #[error("edge {a}-{b}: unknown node id {missing}")]
    UnknownEndpoint { a: i64, b: i64, missing: i64 },
    #[error("self-loop at node {id}")]
    SelfLoop { id: i64 },
    #[error("duplicate edge {a}-{b}")]
    DuplicateEdge { a: i64, b: i64 },
    #[error("grid is disconnected ({components} components)")]
    Disconnected { components: usize },
}

/// Role of a node, as carried by the input data.
///
/// The native format derives the kind from the sign of `p`. The MATPOWER
/// importer marks a bus as a generator when it has in-service machines with
/// nonzero dispatch, so a generator bus whose local load exceeds its dispatch
/// keeps the `Generator` kind with `p < 0` (this triggers a sign-convention
/// warning, not an error).
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Generator,
    Load,
    Passive,
}

impl NodeKind {
    fn from_power(p: f64) -> Self {
        if p > 0.0 {
            NodeKind::Generator
        } else if p < 0.0 {
            NodeKind::Load
        } else {
            NodeKind::Passive
        }
    }
}

#[derive(Clone, Debug)]
pub struct NodeRecord {
    /// Dense id, equal to this record's index in `Grid::nodes`.
    pub id: NodeId,
    /// Original id from the input file (bus number).
    pub ext_id: i64,
    /// Active power injection in MW; positive generates, negative consumes.
    pub p: f64,
    pub kind: NodeKind,
}

/// Input format accepted by [`Grid::load`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridFormat {
    Native,
    Matpower,
}

#[derive(Clone, Debug)]
pub struct Grid {
    nodes: Vec<NodeRecord>,
    edges: Vec<(NodeId, NodeId)>,
    adj: Vec<Vec<NodeId>>,
    ext_to_dense: BTreeMap<i64, NodeId>,
    n_g: usize,
    p_total: f64,
    p_bar: f64,
}

impl Grid {
    /// Builds a grid from `(ext_id, p)` nodes and `(ext_id, ext_id)` edges,
    /// deriving node kinds from the power sign.
    pub fn new(nodes: Vec<(i64, f64)>, edges: Vec<(i64, i64)>) -> Result<Self, GridError> {
        let records = nodes.into_iter().map(|(id, p)| (id, p, None)).collect();
        Self::from_records(records, edges)
    }

    /// Builds a grid from nodes with explicit kinds (`None` derives from the
    /// power sign). Nodes are sorted by external id; edges are normalized to
    /// `(low, high)` dense pairs. Rejects duplicates, self-loops, unknown
    /// endpoints, and disconnected graphs.
    pub fn from_records(
        mut nodes: Vec<(i64, f64, Option<NodeKind>)>,
        edges: Vec<(i64, i64)>,
    ) -> Result<Self, GridError> {
        if nodes.is_empty() {
            return Err(GridError::Empty);
        }
        nodes.sort_by_key(|&(ext, _, _)| ext);
        let mut ext_to_dense = BTreeMap::new();
        let mut records = Vec::with_capacity(nodes.len());
        for (dense, &(ext, p, kind)) in nodes.iter().enumerate() {
            if ext_to_dense.insert(ext, dense).is_some() {
                return Err(GridError::DuplicateNode { id: ext });
            }
            if !p.is_finite() {
                return Err(GridError::NonFinitePower { id: ext });
            }
            records.push(NodeRecord {
                id: dense,
                ext_id: ext,
                p,
                kind: kind.unwrap_or_else(|| NodeKind::from_power(p)),
            });
        }

        let n = records.len();
        let mut dense_edges = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a == b {
                return Err(GridError::SelfLoop { id: a });
            }
            let da = *ext_to_dense
                .get(&a)
                .ok_or(GridError::UnknownEndpoint { a, b, missing: a })?;
            let db = *ext_to_dense
                .get(&b)
                .ok_or(GridError::UnknownEndpoint { a, b, missing: b })?;
            dense_edges.push((da.min(db), da.max(db)));
        }
        dense_edges.sort_unstable();
        if let Some(w) = dense_edges.windows(2).find(|w| w[0] == w[1]) {
            return Err(GridError::DuplicateEdge {
                a: records[w[0].0].ext_id,
                b: records[w[0].1].ext_id,
            });
        }

        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &dense_edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for row in &mut adj {
            row.sort_unstable();
        }

        let all: Vec<NodeId> = (0..n).collect();
        let components = graph::components_of_subset(&adj, &all).len();
        if components != 1 {
            return Err(GridError::Disconnected { components });
        }

        let n_g = records
            .iter()
            .filter(|r| r.kind == NodeKind::Generator)
            .count();
        let p_total = records.iter().map(|r| r.p).sum();
        let p_bar = records.iter().map(|r| r.p.abs()).fold(0.0, f64::max);
        Ok(Grid {
            nodes: records,
            edges: dense_edges,
            adj,
            ext_to_dense,
            n_g,
            p_total,
            p_bar,
        })
    }

    /// Loads a grid file in the given format.
    pub fn load(path: impl AsRef<Path>, format: GridFormat) -> Result<Self, GridError> {
        match format {
            GridFormat::Native => Self::load_native(path),
            GridFormat::Matpower => crate::matpower::load_case(path),
        }
    }

    /// Loads the native JSON format: `{"nodes":[{"id":1,"p":30}],"edges":[[1,2]]}`.
    pub fn load_native(path: impl AsRef<Path>) -> Result<Self, GridError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| GridError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_native_str(&text, &path.display().to_string())
    }

    /// Parses the native JSON format from a string; `origin` labels errors.
    pub fn from_native_str(text: &str, origin: &str) -> Result<Self, GridError> {
        let parsed: NativeGrid = serde_json::from_str(text).map_err(|e| GridError::Parse {
            path: origin.to_string(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        let nodes = parsed.nodes.into_iter().map(|n| (n.id, n.p)).collect();
        Self::new(nodes, parsed.edges)
    }

    /// Canonical native serialization: nodes ascending by id, edges ascending
    /// with `i < j`, one datum per line. `save . load` is the identity on
    /// files written by this function.
    pub fn to_native_string(&self) -> String {
        let mut out = String::from("{\n  \"nodes\": [\n");
        for (k, r) in self.nodes.iter().enumerate() {
            let sep = if k + 1 == self.nodes.len() { "" } else { "," };
            let _ = writeln!(out, "    {{\"id\": {}, \"p\": {}}}{}", r.ext_id, r.p, sep);
        }
        out.push_str("  ],\n  \"edges\": [\n");
        for (k, &(a, b)) in self.edges.iter().enumerate() {
            let sep = if k + 1 == self.edges.len() { "" } else { "," };
            let _ = writeln!(
                out,
                "    [{}, {}]{}",
                self.nodes[a].ext_id, self.nodes[b].ext_id, sep
            );
        }
        out.push_str("  ]\n}\n");
        out
    }

    pub fn save_native(&self, path: impl AsRef<Path>) -> Result<(), GridError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_native_string()).map_err(|source| GridError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    /// Number of generator-kind nodes.
    pub fn n_g(&self) -> usize {
        self.n_g
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn p(&self, i: NodeId) -> f64 {
        self.nodes[i].p
    }

    pub fn kind(&self, i: NodeId) -> NodeKind {
        self.nodes[i].kind
    }

    pub fn ext_id(&self, i: NodeId) -> i64 {
        self.nodes[i].ext_id
    }

    /// Dense id for an original bus number.
    pub fn dense_of(&self, ext: i64) -> Option<NodeId> {
        self.ext_to_dense.get(&ext).copied()
    }

    pub fn neighbors(&self, i: NodeId) -> &[NodeId] {
        &self.adj[i]
    }

    /// Edges as dense `(low, high)` pairs, sorted. Because the dense remap is
    /// ascending in external id, this order matches the external-id order.
    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub(crate) fn adjacency(&self) -> &[Vec<NodeId>] {
        &self.adj
    }

    /// Total injection `P_tot` in MW, summed in dense node order. This exact
    /// value (bitwise stable for a given grid) defines `J*` and `p*`.
    pub fn p_total(&self) -> f64 {
        self.p_total
    }

    /// `max_i |p_i|` in MW.
    pub fn p_bar(&self) -> f64 {
        self.p_bar
    }
}

#[derive(Deserialize)]
struct NativeGrid {
    nodes: Vec<NativeNode>,
    edges: Vec<(i64, i64)>,
}

#[derive(Deserialize)]
struct NativeNode {
    id: i64,
    p: f64,
}
