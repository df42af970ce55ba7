//! The measured bipartite graph on `A ⊔ B` with generator-labeled edges.
//!
//! Spherical graphs are built by transporting cell centers of `A` by every
//! rotation of the edge set `R`; synthetic graphs are unions of random
//! permutations, on which every measure identity holds exactly. Both share
//! one internal representation: left/right vertices are positions into the
//! cell lists of `A` and `B`, and the forward adjacency is CSR with a
//! generator label per edge. Reverse adjacency is built lazily on first use.

use std::io::Read;
use std::sync::OnceLock;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rotation::{RotationSet, RotationSetFile};
use crate::sphere::{MeasurableSet, SpherePartition, SphereError, Universe};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("A and B overlap in {0} cells")]
    SetsOverlap(usize),
    #[error("measure mismatch: |A| = {left} cells, |B| = {right} cells")]
    MeasureMismatch { left: usize, right: usize },
    #[error("set straddles both sides of the graph (or leaves them)")]
    StraddlesSides,
    #[error("set belongs to a different universe than the graph")]
    UniverseMismatch,
    #[error("too many generators for edge labels: {0}")]
    TooManyGenerators(usize),
    #[error("malformed graph file: {0}")]
    MalformedFile(String),
    #[error(transparent)]
    Sphere(#[from] SphereError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphMode {
    Spherical,
    Synthetic,
}

/// A `d`-generator synthetic expander: the union of `d` uniformly random
/// permutations between two vertex sets of size `n`, deterministic given the
/// seed. Each generator alone is a perfect matching.
#[derive(Debug, Clone)]
pub struct SyntheticExpander {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub permutations: Vec<Vec<u32>>,
}

impl SyntheticExpander {
    pub fn new(n: usize, d: usize, seed: u64) -> Self {
        assert!(n >= 2, "expander needs n >= 2");
        assert!(d >= 3, "expander needs d >= 3");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let permutations = (0..d)
            .map(|_| {
                let mut perm: Vec<u32> = (0..n as u32).collect();
                for i in (1..n).rev() {
                    let j = rng.gen_range(0..=i);
                    perm.swap(i, j);
                }
                perm
            })
            .collect();
        Self {
            n,
            d,
            seed,
            permutations,
        }
    }

    fn tag(&self) -> u64 {
        (self.n as u64)
            .wrapping_mul(0x9e3779b97f4a7c15)
            .wrapping_add(self.d as u64)
            .wrapping_mul(0x2545f4914f6cdd1d)
            .wrapping_add(self.seed)
    }
}

/// The bipartite graph 𝒢 on `A ⊔ B` with an edge `(x, γ, y)` whenever
/// `γ(x) = y` for a generator `γ` of the edge set.
#[derive(Debug)]
pub struct BipartiteGraph {
    mode: GraphMode,
    universe: Universe,
    left_cells: Vec<u32>,
    right_cells: Vec<u32>,
    adj_offsets: Vec<u32>,
    adj_right: Vec<u32>,
    adj_gen: Vec<u16>,
    n_generators: usize,
    rotations: Option<RotationSet>,
    rev: OnceLock<(Vec<u32>, Vec<u32>)>,
}

impl BipartiteGraph {
    pub fn mode(&self) -> GraphMode {
        self.mode
    }

    pub fn universe(&self) -> Universe {
        self.universe
    }

    pub fn is_synthetic(&self) -> bool {
        self.mode == GraphMode::Synthetic
    }

    pub fn n_left(&self) -> usize {
        self.left_cells.len()
    }

    pub fn n_right(&self) -> usize {
        self.right_cells.len()
    }

    pub fn n_edges(&self) -> usize {
        self.adj_right.len()
    }

    pub fn n_generators(&self) -> usize {
        self.n_generators
    }

    pub fn rotations(&self) -> Option<&RotationSet> {
        self.rotations.as_ref()
    }

    pub fn cell_area(&self) -> f64 {
        self.universe.cell_area()
    }

    pub fn left_cell(&self, local: usize) -> u32 {
        self.left_cells[local]
    }

    pub fn right_cell(&self, local: usize) -> u32 {
        self.right_cells[local]
    }

    pub fn left_set(&self) -> MeasurableSet {
        MeasurableSet::from_cells(self.universe, self.left_cells.iter().map(|&c| c as usize))
    }

    pub fn right_set(&self) -> MeasurableSet {
        MeasurableSet::from_cells(self.universe, self.right_cells.iter().map(|&c| c as usize))
    }

    pub fn mu_left(&self) -> f64 {
        self.n_left() as f64 * self.cell_area()
    }

    #[inline]
    pub fn degree(&self, left: usize) -> usize {
        (self.adj_offsets[left + 1] - self.adj_offsets[left]) as usize
    }

    /// Edges of a left vertex as `(generator, right local)` pairs.
    #[inline]
    pub fn edges_of(&self, left: usize) -> impl Iterator<Item = (u16, u32)> + '_ {
        let lo = self.adj_offsets[left] as usize;
        let hi = self.adj_offsets[left + 1] as usize;
        self.adj_gen[lo..hi]
            .iter()
            .copied()
            .zip(self.adj_right[lo..hi].iter().copied())
    }

    /// Looks up the generator label of the edge `(left, right)`, if present.
    pub fn edge_label(&self, left: usize, right: u32) -> Option<u16> {
        self.edges_of(left)
            .find(|&(_, r)| r == right)
            .map(|(g, _)| g)
    }

    /// Absolute CSR range of a left vertex's edges, for cursor-based walks.
    #[inline]
    pub fn edge_range(&self, left: usize) -> std::ops::Range<usize> {
        self.adj_offsets[left] as usize..self.adj_offsets[left + 1] as usize
    }

    /// The edge at an absolute CSR position as `(generator, right local)`.
    #[inline]
    pub fn edge_at(&self, idx: usize) -> (u16, u32) {
        (self.adj_gen[idx], self.adj_right[idx])
    }

    fn rev_adjacency(&self) -> &(Vec<u32>, Vec<u32>) {
        self.rev.get_or_init(|| {
            let mut counts = vec![0u32; self.n_right() + 1];
            for &r in &self.adj_right {
                counts[r as usize + 1] += 1;
            }
            for i in 1..counts.len() {
                counts[i] += counts[i - 1];
            }
            let offsets = counts.clone();
            let mut lefts = vec![0u32; self.adj_right.len()];
            let mut cursor = counts;
            for left in 0..self.n_left() {
                let lo = self.adj_offsets[left] as usize;
                let hi = self.adj_offsets[left + 1] as usize;
                for &r in &self.adj_right[lo..hi] {
                    lefts[cursor[r as usize] as usize] = left as u32;
                    cursor[r as usize] += 1;
                }
            }
            (offsets, lefts)
        })
    }

    /// Left neighbors of a right vertex (unlabeled).
    pub fn rev_edges_of(&self, right: usize) -> &[u32] {
        let (offsets, lefts) = self.rev_adjacency();
        &lefts[offsets[right] as usize..offsets[right + 1] as usize]
    }

    pub fn left_local_of_cell(&self, cell: u32) -> Option<usize> {
        self.left_cells.binary_search(&cell).ok()
    }

    pub fn right_local_of_cell(&self, cell: u32) -> Option<usize> {
        self.right_cells.binary_search(&cell).ok()
    }

    /// Which side a set lives on; errors when it straddles or escapes both.
    pub fn side_of(&self, u: &MeasurableSet) -> Result<Side, GraphError> {
        if u.universe() != self.universe {
            return Err(GraphError::UniverseMismatch);
        }
        let mut any_left = false;
        let mut any_right = false;
        for cell in u.cells() {
            let c = cell as u32;
            if self.left_local_of_cell(c).is_some() {
                any_left = true;
            } else if self.right_local_of_cell(c).is_some() {
                any_right = true;
            } else {
                return Err(GraphError::StraddlesSides);
            }
            if any_left && any_right {
                return Err(GraphError::StraddlesSides);
            }
        }
        Ok(if any_right { Side::Right } else { Side::Left })
    }

    /// The set of neighbors `N(U)` for a one-sided set `U`.
    pub fn neighborhood(&self, u: &MeasurableSet) -> Result<MeasurableSet, GraphError> {
        let side = self.side_of(u)?;
        let out = match side {
            Side::Left => {
                let mut seen = vec![false; self.n_right()];
                for cell in u.cells() {
                    let local = self.left_local_of_cell(cell as u32).expect("checked side");
                    for (_, r) in self.edges_of(local) {
                        seen[r as usize] = true;
                    }
                }
                MeasurableSet::from_cells(
                    self.universe,
                    seen.iter()
                        .enumerate()
                        .filter(|(_, &s)| s)
                        .map(|(r, _)| self.right_cells[r] as usize),
                )
            }
            Side::Right => {
                let mut seen = vec![false; self.n_left()];
                for cell in u.cells() {
                    let local = self
                        .right_local_of_cell(cell as u32)
                        .expect("checked side");
                    for &l in self.rev_edges_of(local) {
                        seen[l as usize] = true;
                    }
                }
                MeasurableSet::from_cells(
                    self.universe,
                    seen.iter()
                        .enumerate()
                        .filter(|(_, &s)| s)
                        .map(|(l, _)| self.left_cells[l] as usize),
                )
            }
        };
        Ok(out)
    }

    /// Claim 1 check: `μ(N(U)) ≥ min((2/3)μ(A), 2μ(U))`, with one cell of
    /// slack in spherical mode and exact counting in synthetic mode.
    /// Returns `(ok, lhs, rhs)` as measures.
    pub fn claim1_check(&self, u: &MeasurableSet) -> Result<(bool, f64, f64), GraphError> {
        let n_u = self.neighborhood(u)?;
        let lhs = n_u.cell_count() as u64;
        let a = self.n_left() as u64;
        let u_cnt = u.cell_count() as u64;
        let slack = if self.is_synthetic() { 0u64 } else { 1 };
        let ok = 3 * (lhs + slack) >= 2 * a || lhs + slack >= 2 * u_cnt;
        let area = self.cell_area();
        let rhs = (2.0 / 3.0 * a as f64 * area).min(2.0 * u_cnt as f64 * area);
        Ok((ok, lhs as f64 * area, rhs))
    }

    /// Deficiency `|A| − (maximum matching size)` by Hopcroft–Karp, with a
    /// Hall-violating witness from the final alternating-reachability cut
    /// when positive.
    pub fn finite_hall_deficiency(&self) -> (usize, Option<MeasurableSet>) {
        let matched = hopcroft_karp(self);
        let size = matched.iter().filter(|m| m.is_some()).count();
        let deficiency = self.n_left() - size;
        if deficiency == 0 {
            return (0, None);
        }
        // alternating reachability from unmatched lefts
        let mut right_match = vec![u32::MAX; self.n_right()];
        for (l, m) in matched.iter().enumerate() {
            if let Some(r) = m {
                right_match[*r as usize] = l as u32;
            }
        }
        let mut left_reached = vec![false; self.n_left()];
        let mut queue: Vec<u32> = (0..self.n_left())
            .filter(|&l| matched[l].is_none())
            .map(|l| l as u32)
            .collect();
        for &l in &queue {
            left_reached[l as usize] = true;
        }
        while let Some(l) = queue.pop() {
            for (_, r) in self.edges_of(l as usize) {
                let owner = right_match[r as usize];
                if owner != u32::MAX && !left_reached[owner as usize] {
                    left_reached[owner as usize] = true;
                    queue.push(owner);
                }
            }
        }
        let witness = MeasurableSet::from_cells(
            self.universe,
            left_reached
                .iter()
                .enumerate()
                .filter(|(_, &v)| v)
                .map(|(l, _)| self.left_cells[l] as usize),
        );
        (deficiency, Some(witness))
    }

    /// Consistency validation of the adjacency structure; in spherical mode
    /// re-checks a sample of edge transports against the partition.
    pub fn validate(&self, partition: Option<&SpherePartition>) -> Result<(), GraphError> {
        for left in 0..self.n_left() {
            if self.degree(left) > self.n_generators {
                return Err(GraphError::MalformedFile(format!(
                    "degree of left vertex {} exceeds |R|",
                    left
                )));
            }
            for (g, r) in self.edges_of(left) {
                if (g as usize) >= self.n_generators || (r as usize) >= self.n_right() {
                    return Err(GraphError::MalformedFile(format!(
                        "edge ({}, {}, {}) out of range",
                        left, g, r
                    )));
                }
            }
        }
        if let (Some(partition), Some(rotations)) = (partition, &self.rotations) {
            let step = (self.n_left() / 64).max(1);
            for left in (0..self.n_left()).step_by(step) {
                for (g, r) in self.edges_of(left) {
                    let src = partition.center(self.left_cells[left] as usize);
                    let image = rotations.elements()[g as usize].apply(&src);
                    if partition.locate(&image) as u32 != self.right_cells[r as usize] {
                        return Err(GraphError::MalformedFile(format!(
                            "edge ({}, {}) does not match transport",
                            left, g
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Which side of the bipartition a vertex set lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// Builds the orbit graph: for each cell `x` of `A` and each `γ ∈ R`, an edge
/// to the cell of `B` containing `γ(center(x))`, if any. Duplicate `(x, y)`
/// pairs keep the lowest generator index.
pub fn build_graph(
    a: &MeasurableSet,
    b: &MeasurableSet,
    r: &RotationSet,
    partition: &SpherePartition,
) -> Result<BipartiteGraph, GraphError> {
    if a.universe() != partition.universe() || b.universe() != partition.universe() {
        return Err(GraphError::UniverseMismatch);
    }
    let overlap = a.intersect(b)?.cell_count();
    if overlap > 0 {
        return Err(GraphError::SetsOverlap(overlap));
    }
    let (ca, cb) = (a.cell_count(), b.cell_count());
    if ca.abs_diff(cb) > 1 {
        return Err(GraphError::MeasureMismatch {
            left: ca,
            right: cb,
        });
    }
    if r.len() > u16::MAX as usize {
        return Err(GraphError::TooManyGenerators(r.len()));
    }

    let left_cells: Vec<u32> = a.cells().map(|c| c as u32).collect();
    let right_cells: Vec<u32> = b.cells().map(|c| c as u32).collect();
    let mut right_local = vec![u32::MAX; partition.n_cells()];
    for (i, &c) in right_cells.iter().enumerate() {
        right_local[c as usize] = i as u32;
    }

    let mut adj_offsets = Vec::with_capacity(left_cells.len() + 1);
    adj_offsets.push(0u32);
    let mut adj_right: Vec<u32> = Vec::new();
    let mut adj_gen: Vec<u16> = Vec::new();
    let mut stamp = vec![u32::MAX; right_cells.len()];
    for (li, &cell) in left_cells.iter().enumerate() {
        let src = partition.center(cell as usize);
        for (gi, gamma) in r.elements().iter().enumerate() {
            let dst = partition.locate(&gamma.apply(&src));
            let rl = right_local[dst];
            if rl != u32::MAX && stamp[rl as usize] != li as u32 {
                stamp[rl as usize] = li as u32;
                adj_right.push(rl);
                adj_gen.push(gi as u16);
            }
        }
        adj_offsets.push(adj_right.len() as u32);
        if li == 127 {
            // extrapolate total edge count to avoid repeated doubling spikes
            let estimate = adj_right.len() / 128 * left_cells.len() + left_cells.len();
            adj_right.reserve(estimate.saturating_sub(adj_right.len()));
            adj_gen.reserve(estimate.saturating_sub(adj_gen.len()));
        }
    }

    Ok(BipartiteGraph {
        mode: GraphMode::Spherical,
        universe: partition.universe(),
        left_cells,
        right_cells,
        adj_offsets,
        adj_right,
        adj_gen,
        n_generators: r.len(),
        rotations: Some(r.clone()),
        rev: OnceLock::new(),
    })
}

/// Synthetic expander graph: the union of `d` random permutations on vertex
/// sets of size `n`, with unit cell measure `1/(2n)`.
pub fn synthesize_expander(n: usize, d: usize, seed: u64) -> BipartiteGraph {
    let expander = SyntheticExpander::new(n, d, seed);
    expander_graph(&expander)
}

/// Builds the graph view of a [`SyntheticExpander`].
///
/// Each vertex's edge list is stored in a seeded pseudo-random order;
/// dedup still keeps the lowest generator label per vertex pair. With
/// generator-ordered lists the greedy phase would match everything through
/// the first permutation alone and the phase machinery would never see a
/// non-trivial instance.
pub fn expander_graph(expander: &SyntheticExpander) -> BipartiteGraph {
    let n = expander.n;
    let universe = Universe::Synthetic {
        n_vertices: (2 * n) as u32,
        tag: expander.tag(),
    };
    let mut order_rng = ChaCha8Rng::seed_from_u64(expander.seed ^ 0x5u64.wrapping_mul(0x9e3779b97f4a7c15));
    let mut adj_offsets = Vec::with_capacity(n + 1);
    adj_offsets.push(0u32);
    let mut adj_right = Vec::with_capacity(n * expander.d);
    let mut adj_gen = Vec::with_capacity(n * expander.d);
    let mut stamp = vec![u32::MAX; n];
    let mut local: Vec<(u16, u32)> = Vec::with_capacity(expander.d);
    for x in 0..n {
        local.clear();
        for (g, perm) in expander.permutations.iter().enumerate() {
            let y = perm[x];
            if stamp[y as usize] != x as u32 {
                stamp[y as usize] = x as u32;
                local.push((g as u16, y));
            }
        }
        for i in (1..local.len()).rev() {
            let j = order_rng.gen_range(0..=i);
            local.swap(i, j);
        }
        for &(g, y) in &local {
            adj_gen.push(g);
            adj_right.push(y);
        }
        adj_offsets.push(adj_right.len() as u32);
    }
    BipartiteGraph {
        mode: GraphMode::Synthetic,
        universe,
        left_cells: (0..n as u32).collect(),
        right_cells: (n as u32..2 * n as u32).collect(),
        adj_offsets,
        adj_right,
        adj_gen,
        n_generators: expander.d,
        rotations: None,
        rev: OnceLock::new(),
    }
}

/// Builds a synthetic graph from explicit adjacency lists (irregular and
/// hand-built instances). Left vertices take universe indices `0..n_left`,
/// right vertices `n_left..n_left+n_right`.
pub fn from_adjacency(
    n_left: usize,
    n_right: usize,
    adjacency: &[Vec<(u16, u32)>],
    tag: u64,
) -> BipartiteGraph {
    assert_eq!(adjacency.len(), n_left);
    let n_generators = adjacency
        .iter()
        .flat_map(|edges| edges.iter().map(|&(g, _)| g as usize + 1))
        .max()
        .unwrap_or(1);
    let mut adj_offsets = Vec::with_capacity(n_left + 1);
    adj_offsets.push(0u32);
    let mut adj_right = Vec::new();
    let mut adj_gen = Vec::new();
    for edges in adjacency {
        for &(g, r) in edges {
            assert!((r as usize) < n_right);
            adj_right.push(r);
            adj_gen.push(g);
        }
        adj_offsets.push(adj_right.len() as u32);
    }
    BipartiteGraph {
        mode: GraphMode::Synthetic,
        universe: Universe::Synthetic {
            n_vertices: (n_left + n_right) as u32,
            tag,
        },
        left_cells: (0..n_left as u32).collect(),
        right_cells: (n_left as u32..(n_left + n_right) as u32).collect(),
        adj_offsets,
        adj_right,
        adj_gen,
        n_generators,
        rotations: None,
        rev: OnceLock::new(),
    }
}

/// Compact Hopcroft–Karp maximum matching; returns per-left matched right.
fn hopcroft_karp(g: &BipartiteGraph) -> Vec<Option<u32>> {
    let (nl, nr) = (g.n_left(), g.n_right());
    let mut left_match: Vec<u32> = vec![u32::MAX; nl];
    let mut right_match: Vec<u32> = vec![u32::MAX; nr];
    let mut dist = vec![u32::MAX; nl];
    let mut queue = std::collections::VecDeque::new();
    loop {
        queue.clear();
        for l in 0..nl {
            if left_match[l] == u32::MAX {
                dist[l] = 0;
                queue.push_back(l as u32);
            } else {
                dist[l] = u32::MAX;
            }
        }
        let mut found = false;
        while let Some(l) = queue.pop_front() {
            for (_, r) in g.edges_of(l as usize) {
                let owner = right_match[r as usize];
                if owner == u32::MAX {
                    found = true;
                } else if dist[owner as usize] == u32::MAX {
                    dist[owner as usize] = dist[l as usize] + 1;
                    queue.push_back(owner);
                }
            }
        }
        if !found {
            break;
        }
        for l in 0..nl {
            if left_match[l] == u32::MAX && dist[l] == 0 {
                hk_dfs(g, l, &mut dist, &mut left_match, &mut right_match);
            }
        }
    }
    left_match
        .into_iter()
        .map(|r| if r == u32::MAX { None } else { Some(r) })
        .collect()
}

fn hk_dfs(
    g: &BipartiteGraph,
    l: usize,
    dist: &mut [u32],
    left_match: &mut [u32],
    right_match: &mut [u32],
) -> bool {
    let d = dist[l];
    dist[l] = u32::MAX;
    for (_, r) in g.edges_of(l) {
        let owner = right_match[r as usize];
        if owner == u32::MAX
            || (dist[owner as usize] == d + 1
                && hk_dfs(g, owner as usize, dist, left_match, right_match))
        {
            left_match[l] = r;
            right_match[r as usize] = l as u32;
            return true;
        }
    }
    false
}

/// JSON sidecar stored next to the binary graph file.
#[derive(Debug, Serialize, Deserialize)]
pub struct GraphSidecar {
    pub mode: GraphMode,
    pub universe: Universe,
    pub left_runs: Vec<[u32; 2]>,
    pub right_runs: Vec<[u32; 2]>,
    pub n_generators: usize,
    pub rotation_set_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotations: Option<RotationSetFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition_target: Option<u32>,
    pub seed: u64,
}

/// Writes the binary graph file: header `{mode, |A|, |B|, |R|}` as four
/// little-endian u32 words, then per left vertex the degree followed by
/// `(generator, right)` u32 pairs. A JSON sidecar carries provenance.
pub fn write_graph_file(
    g: &BipartiteGraph,
    path: &std::path::Path,
    partition_target: Option<u32>,
    seed: u64,
) -> Result<(), GraphError> {
    use std::io::Write;
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::with_capacity(1 << 20, file);
    let mode_word: u32 = match g.mode {
        GraphMode::Spherical => 0,
        GraphMode::Synthetic => 1,
    };
    for word in [
        mode_word,
        g.n_left() as u32,
        g.n_right() as u32,
        g.n_generators as u32,
    ] {
        out.write_all(&word.to_le_bytes())?;
    }
    for left in 0..g.n_left() {
        out.write_all(&(g.degree(left) as u32).to_le_bytes())?;
        for (gen, r) in g.edges_of(left) {
            out.write_all(&(gen as u32).to_le_bytes())?;
            out.write_all(&r.to_le_bytes())?;
        }
    }
    out.flush()?;
    drop(out);

    let sidecar = GraphSidecar {
        mode: g.mode,
        universe: g.universe,
        left_runs: g.left_set().mask().to_runs(),
        right_runs: g.right_set().mask().to_runs(),
        n_generators: g.n_generators,
        rotation_set_hash: g.rotations.as_ref().map(|r| r.content_hash()),
        rotations: g.rotations.as_ref().map(RotationSetFile::from),
        partition_target,
        seed,
    };
    let sidecar_path = path.with_extension("json");
    std::fs::write(&sidecar_path, serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(())
}

impl From<serde_json::Error> for GraphError {
    fn from(e: serde_json::Error) -> Self {
        GraphError::MalformedFile(e.to_string())
    }
}

/// Reads a graph back from its binary file plus JSON sidecar.
pub fn read_graph_file(path: &std::path::Path) -> Result<BipartiteGraph, GraphError> {
    let sidecar_path = path.with_extension("json");
    let sidecar: GraphSidecar = serde_json::from_slice(&std::fs::read(&sidecar_path)?)?;
    let file = std::fs::File::open(path)?;
    let file_len = file.metadata()?.len();
    let mut reader = std::io::BufReader::with_capacity(1 << 20, file);
    let mut consumed = 0u64;
    let mut next_u32 = |reader: &mut std::io::BufReader<std::fs::File>| -> Result<u32, GraphError> {
        let mut word = [0u8; 4];
        reader
            .read_exact(&mut word)
            .map_err(|_| GraphError::MalformedFile("truncated".into()))?;
        consumed += 4;
        Ok(u32::from_le_bytes(word))
    };
    let mode_word = next_u32(&mut reader)?;
    let n_left = next_u32(&mut reader)? as usize;
    let n_right = next_u32(&mut reader)? as usize;
    let n_generators = next_u32(&mut reader)? as usize;
    let mode = match mode_word {
        0 => GraphMode::Spherical,
        1 => GraphMode::Synthetic,
        other => {
            return Err(GraphError::MalformedFile(format!(
                "unknown mode {}",
                other
            )))
        }
    };
    if mode != sidecar.mode || n_generators != sidecar.n_generators {
        return Err(GraphError::MalformedFile(
            "sidecar disagrees with binary header".into(),
        ));
    }
    let mut adj_offsets = Vec::with_capacity(n_left + 1);
    adj_offsets.push(0u32);
    let edge_estimate = (file_len / 8).min(u32::MAX as u64) as usize;
    let mut adj_right = Vec::with_capacity(edge_estimate);
    let mut adj_gen = Vec::with_capacity(edge_estimate);
    for _ in 0..n_left {
        let degree = next_u32(&mut reader)? as usize;
        for _ in 0..degree {
            let gen = next_u32(&mut reader)?;
            let right = next_u32(&mut reader)?;
            if gen as usize >= n_generators || right as usize >= n_right {
                return Err(GraphError::MalformedFile("edge out of range".into()));
            }
            adj_gen.push(gen as u16);
            adj_right.push(right);
        }
        adj_offsets.push(adj_right.len() as u32);
    }
    if consumed != file_len {
        return Err(GraphError::MalformedFile("trailing bytes".into()));
    }
    let left_mask =
        crate::sphere::BitMask::from_runs(sidecar.universe.n_cells(), &sidecar.left_runs);
    let right_mask =
        crate::sphere::BitMask::from_runs(sidecar.universe.n_cells(), &sidecar.right_runs);
    let left_cells: Vec<u32> = left_mask.iter_ones().map(|c| c as u32).collect();
    let right_cells: Vec<u32> = right_mask.iter_ones().map(|c| c as u32).collect();
    if left_cells.len() != n_left || right_cells.len() != n_right {
        return Err(GraphError::MalformedFile(
            "sidecar cell lists disagree with binary header".into(),
        ));
    }
    let rotations = match sidecar.rotations {
        Some(file) => Some(
            file.into_rotation_set()
                .map_err(|e| GraphError::MalformedFile(e.to_string()))?,
        ),
        None => None,
    };
    let graph = BipartiteGraph {
        mode,
        universe: sidecar.universe,
        left_cells,
        right_cells,
        adj_offsets,
        adj_right,
        adj_gen,
        n_generators,
        rotations,
        rev: OnceLock::new(),
    };
    graph.validate(None)?;
    Ok(graph)
}
