//! A desk-scale laboratory for measurable equidecompositions of spherical sets.
//!
//! The crate builds, measures, and cross-checks every quantitative step of the
//! expander-matching route to equidecomposing two subsets of the 2-sphere of
//! equal measure:
//!
//! * [`rotation`] — unit-quaternion SO(3) arithmetic, symmetric rotation sets,
//!   the edge set `R = T⁻¹S ∪ ST`, and greedy covering-set search.
//! * [`sphere`] — an exact equal-area cell partition of the sphere, measurable
//!   sets as cell masks, and measure-tracked transport of sets by rotations.
//! * [`spectral`] — per-degree operator norms of the rotation averaging
//!   operator on spherical harmonics, a Monte Carlo cross-estimate, and the
//!   expansion property check.
//! * [`graph`] — the bipartite orbit graph on `A ⊔ B` with generator-labeled
//!   edges, synthetic permutation expanders, and Hall-condition verification.
//! * [`matching`] — the iterated matching scheme in which phase `i` leaves no
//!   augmenting path of length at most `2i−1`, with full layer-measure
//!   instrumentation of the growth and decay bounds.
//! * [`decomposition`] — extraction of the generator-indexed pieces from a
//!   matching, invariant verification, rendering, and reports.
//! * [`config`] / [`pipeline`] — reproducible end-to-end runs with hashed
//!   artifact manifests, driving the `equidecomp` CLI.

pub mod config;
pub mod decomposition;
pub mod graph;
pub mod matching;
pub mod pipeline;
pub mod rotation;
pub mod sphere;
pub mod spectral;

pub use decomposition::PieceDecomposition;
pub use graph::{BipartiteGraph, GraphMode};
pub use matching::{LayerProfile, Matching, PhaseReport};
pub use rotation::{Rotation, RotationSet, UnitVector};
pub use spectral::{DegreeBlock, GapReport};
pub use sphere::{MeasurableSet, SpherePartition, Universe};
