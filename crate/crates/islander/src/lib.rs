//! Self-organizing power-grid islanding.
//!
//! A power grid is an undirected connected graph whose nodes carry a signed
//! active-power injection `p_i` (MW): positive for net generation, negative
//! for net load, zero for passive buses. Splitting the grid into `n_mu`
//! connected islands leaves each island `l` with a power imbalance
//! `P_l = sum of p_i over the island`. The quality of a partition is the
//! average absolute imbalance `J = (1/n_mu) * sum |P_l|`, bounded below by
//! `J* = |P_tot| / n_mu`.
//!
//! This crate simulates a distributed protocol that drives an initial
//! partition toward low `J`: each boundary node estimates the imbalance and
//! size of its own island and of neighboring islands by running virtual
//! consensus dynamics (`xdot = p - L x` on the island subgraph, from zero
//! initial conditions) and migrates to a neighbor island whenever the move
//! raises the smaller imbalance of the pair and keeps its source island
//! connected. The crate provides:
//!
//! * [`grid`]: the grid data model, native JSON format, and ground-truth
//!   imbalance arithmetic,
//! * [`matpower`]: a reader for the subset of MATPOWER `.m` case files the
//!   algorithm needs (topology and injections),
//! * [`partition`]: partitions, imbalance vectors, boundary and cut-set
//!   queries, connectivity checks,
//! * [`estimator`]: the consensus-dynamics simulator and the closed-form
//!   recovery of island imbalance and size from steady-state rates,
//! * [`migration`]: the single-migration-per-step scheduler and run reports,
//! * [`analysis`]: the a-priori imbalance bound, contraction diagnostics,
//!   and a brute-force optimal-partition oracle for small instances,
//! * [`initpart`]: initial partitions (generator-group seeding, random
//!   seeded partitions, partition files, cut-set files),
//! * [`synth`]: deterministic random grids for tests and benchmarks.

pub mod analysis;
pub mod estimator;
pub mod graph;
pub mod grid;
pub mod initpart;
pub mod matpower;
pub mod migration;
pub mod partition;
pub mod report;
pub mod synth;

pub use grid::{Grid, GridError, GridFormat, NodeId, NodeKind, NodeRecord};
pub use partition::{IslandId, Partition, PartitionError};
