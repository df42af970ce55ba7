//! The iterated matching scheme: phase `i` flips maximal families of
//! vertex-disjoint shortest augmenting paths until no augmenting path of
//! length at most `2i−1` remains, with layer-measure instrumentation of the
//! growth bound, the decay bound, and the stabilization bound.
//!
//! Phases extract families by layered alternating BFS from the unmatched left
//! vertices followed by greedy depth-first path collection in vertex order,
//! shortest lengths first, so runs are deterministic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{BipartiteGraph, Side};

#[derive(Debug, Error)]
pub enum MatchingError {
    #[error("invalid matching: {0}")]
    InvalidMatching(String),
    #[error("malformed matching file: {0}")]
    MalformedFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const UNSET: u32 = u32::MAX;

/// A partial generator-labeled injection from left to right vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// per left vertex: matched (generator, right local)
    left: Vec<Option<(u16, u32)>>,
    /// per right vertex: matched left local
    right: Vec<Option<u32>>,
    /// phase index of the last completed phase
    phase: u32,
}

impl Matching {
    pub fn empty(g: &BipartiteGraph) -> Self {
        Self {
            left: vec![None; g.n_left()],
            right: vec![None; g.n_right()],
            phase: 0,
        }
    }

    pub fn phase(&self) -> u32 {
        self.phase
    }

    pub fn size(&self) -> usize {
        self.left.iter().filter(|m| m.is_some()).count()
    }

    pub fn left_pair(&self, l: usize) -> Option<(u16, u32)> {
        self.left[l]
    }

    pub fn right_pair(&self, r: usize) -> Option<u32> {
        self.right[r]
    }

    pub fn unmatched_left_count(&self) -> usize {
        self.left.iter().filter(|m| m.is_none()).count()
    }

    pub fn unmatched_right_count(&self) -> usize {
        self.right.iter().filter(|m| m.is_none()).count()
    }

    /// μ(X₀ ∪ Y₀): measure of unmatched vertices on both sides.
    pub fn unmatched_measure(&self, g: &BipartiteGraph) -> f64 {
        (self.unmatched_left_count() + self.unmatched_right_count()) as f64 * g.cell_area()
    }

    /// The representation sets `A_γ`: left locals matched via each generator.
    /// Pairwise disjoint by construction; together they reproduce the matching.
    pub fn pieces_by_generator(&self, g: &BipartiteGraph) -> Vec<Vec<u32>> {
        let mut pieces = vec![Vec::new(); g.n_generators()];
        for (l, pair) in self.left.iter().enumerate() {
            if let Some((gen, _)) = pair {
                pieces[*gen as usize].push(l as u32);
            }
        }
        pieces
    }

    /// Full validity check against a graph: injectivity, back-references, and
    /// label consistency (every matched pair is an edge with that label).
    pub fn validate(&self, g: &BipartiteGraph) -> Result<(), MatchingError> {
        if self.left.len() != g.n_left() || self.right.len() != g.n_right() {
            return Err(MatchingError::InvalidMatching(
                "size mismatch with graph".into(),
            ));
        }
        let mut right_seen = vec![false; g.n_right()];
        for (l, pair) in self.left.iter().enumerate() {
            if let Some((gen, r)) = pair {
                if *r as usize >= g.n_right() {
                    return Err(MatchingError::InvalidMatching(format!(
                        "right index {} out of range",
                        r
                    )));
                }
                if right_seen[*r as usize] {
                    return Err(MatchingError::InvalidMatching(format!(
                        "right vertex {} referenced twice",
                        r
                    )));
                }
                right_seen[*r as usize] = true;
                if self.right[*r as usize] != Some(l as u32) {
                    return Err(MatchingError::InvalidMatching(format!(
                        "back-reference of right {} inconsistent",
                        r
                    )));
                }
                if !g.edges_of(l).any(|(eg, er)| eg == *gen && er == *r) {
                    return Err(MatchingError::InvalidMatching(format!(
                        "matched pair ({}, {}) with generator {} is not an edge",
                        l, r, gen
                    )));
                }
            }
        }
        for (r, owner) in self.right.iter().enumerate() {
            if let Some(l) = owner {
                if self.left[*l as usize].map(|(_, rr)| rr) != Some(r as u32) {
                    return Err(MatchingError::InvalidMatching(format!(
                        "right {} points to left {} which is matched elsewhere",
                        r, l
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One flipped family: vertex-disjoint augmenting paths sharing a generator
/// word. Letters are `+(g+1)` for a forward edge with generator `g` and
/// `−(g+1)` for a matching edge traversed backward.
#[derive(Debug, Clone)]
pub struct AugmentingFamily {
    pub word: Vec<i32>,
    pub start_cells: Vec<u32>,
}

/// Instrumentation record of one phase.
#[derive(Debug, Clone)]
pub struct PhaseReport {
    pub phase: u32,
    pub unmatched_left_before: u64,
    pub unmatched_right_before: u64,
    pub unmatched_left_after: u64,
    pub unmatched_right_after: u64,
    /// number of augmenting families flipped
    pub families_flipped: u64,
    pub paths_flipped: u64,
    /// cells covered by edges of the symmetric difference with the previous matching
    pub diff_cells: u64,
    pub eq5_ok: bool,
    pub sd_bound_ok: bool,
    /// shortest augmenting path length after the phase (None = matching is maximum)
    pub post_shortest_augmenting: Option<u32>,
    pub cell_area: f64,
    pub families: Vec<AugmentingFamily>,
}

impl PhaseReport {
    pub fn mu_x0_after(&self) -> f64 {
        self.unmatched_left_after as f64 * self.cell_area
    }

    pub fn mu_y0_after(&self) -> f64 {
        self.unmatched_right_after as f64 * self.cell_area
    }

    pub fn unmatched_cells_before(&self) -> u64 {
        self.unmatched_left_before + self.unmatched_right_before
    }

    pub fn unmatched_cells_after(&self) -> u64 {
        self.unmatched_left_after + self.unmatched_right_after
    }

    pub fn diff_measure(&self) -> f64 {
        self.diff_cells as f64 * self.cell_area
    }
}

/// The JSON-lines wire format of a phase report.
#[derive(Debug, Serialize, Deserialize)]
pub struct PhaseLine {
    pub i: u32,
    #[serde(rename = "mu_X0")]
    pub mu_x0: f64,
    #[serde(rename = "mu_Y0")]
    pub mu_y0: f64,
    pub flips: u64,
    pub diff_measure: f64,
    pub eq5_ok: bool,
    pub sd_bound_ok: bool,
}

impl From<&PhaseReport> for PhaseLine {
    fn from(r: &PhaseReport) -> Self {
        PhaseLine {
            i: r.phase,
            mu_x0: r.mu_x0_after(),
            mu_y0: r.mu_y0_after(),
            flips: r.families_flipped,
            diff_measure: r.diff_measure(),
            eq5_ok: r.eq5_ok,
            sd_bound_ok: r.sd_bound_ok,
        }
    }
}

/// Shortest augmenting path length for the current matching, or `None` when
/// no augmenting path exists at all (the matching is maximum, by Berge).
pub fn shortest_augmenting_path_len(g: &BipartiteGraph, m: &Matching) -> Option<u32> {
    let (_, shortest) = alternating_bfs(g, m);
    shortest
}

/// BFS layering over left vertices: `dist[l]` counts matched-edge hops from
/// an unmatched left vertex. Returns the shortest augmenting length `2k+1`.
fn alternating_bfs(g: &BipartiteGraph, m: &Matching) -> (Vec<u32>, Option<u32>) {
    let mut dist = vec![UNSET; g.n_left()];
    let mut queue = std::collections::VecDeque::new();
    for l in 0..g.n_left() {
        if m.left[l].is_none() {
            dist[l] = 0;
            queue.push_back(l as u32);
        }
    }
    let mut shortest: Option<u32> = None;
    while let Some(l) = queue.pop_front() {
        let d = dist[l as usize];
        if let Some(s) = shortest {
            // deeper layers cannot shorten the result
            if 2 * d + 1 >= s {
                continue;
            }
        }
        for (_, r) in g.edges_of(l as usize) {
            match m.right[r as usize] {
                None => {
                    let len = 2 * d + 1;
                    if shortest.map_or(true, |s| len < s) {
                        shortest = Some(len);
                    }
                }
                Some(owner) => {
                    if dist[owner as usize] == UNSET {
                        dist[owner as usize] = d + 1;
                        queue.push_back(owner);
                    }
                }
            }
        }
    }
    (dist, shortest)
}

/// Runs phase `i` on a validated matching: repeatedly extract and flip a
/// maximal set of vertex-disjoint shortest augmenting paths while the
/// shortest length is at most `2i−1`.
pub fn run_phase(
    g: &BipartiteGraph,
    m: Matching,
    i: u32,
) -> Result<(Matching, PhaseReport), MatchingError> {
    m.validate(g)?;
    Ok(run_phase_unchecked(g, m, i))
}

fn run_phase_unchecked(g: &BipartiteGraph, mut m: Matching, i: u32) -> (Matching, PhaseReport) {
    assert!(i >= 1, "phases are numbered from 1");
    let before_left: Vec<u32> = m
        .left
        .iter()
        .map(|p| p.map(|(_, r)| r).unwrap_or(UNSET))
        .collect();
    let before_right: Vec<u32> = m.right.iter().map(|p| p.unwrap_or(UNSET)).collect();
    let unmatched_left_before = m.unmatched_left_count() as u64;
    let unmatched_right_before = m.unmatched_right_count() as u64;

    let mut families: Vec<AugmentingFamily> = Vec::new();
    let mut paths_flipped = 0u64;
    let mut post_shortest;
    loop {
        let (mut dist, shortest) = alternating_bfs(g, &m);
        post_shortest = shortest;
        let target = match shortest {
            Some(len) if len <= 2 * i - 1 => len,
            _ => break,
        };
        // greedy vertex-disjoint collection in left vertex order
        let mut round: std::collections::BTreeMap<Vec<i32>, Vec<u32>> =
            std::collections::BTreeMap::new();
        for root in 0..g.n_left() {
            if m.left[root].is_some() || dist[root] != 0 {
                continue;
            }
            if let Some(path) = dfs_collect(g, &m, &mut dist, root, target) {
                let mut word = Vec::with_capacity(path.len() * 2 - 1);
                for (idx, &(l, gen, _r)) in path.iter().enumerate() {
                    if idx > 0 {
                        // matching edge traversed backward into this left vertex
                        let (old_gen, _) = m.left[l as usize].expect("interior lefts are matched");
                        word.push(-(old_gen as i32 + 1));
                    }
                    word.push(gen as i32 + 1);
                }
                // flip
                for &(l, gen, r) in &path {
                    m.left[l as usize] = Some((gen, r));
                    m.right[r as usize] = Some(l);
                }
                paths_flipped += 1;
                round
                    .entry(word)
                    .or_default()
                    .push(g.left_cell(root as usize));
            }
        }
        if round.is_empty() {
            // defensive: BFS promised a path, greedy must find at least one
            break;
        }
        for (word, start_cells) in round {
            families.push(AugmentingFamily { word, start_cells });
        }
    }

    // exact symmetric-difference coverage (edges as vertex pairs)
    let mut diff_cells = 0u64;
    for (l, pair) in m.left.iter().enumerate() {
        if before_left[l] != pair.map(|(_, r)| r).unwrap_or(UNSET) {
            diff_cells += 1;
        }
    }
    for (r, owner) in m.right.iter().enumerate() {
        if before_right[r] != owner.unwrap_or(UNSET) {
            diff_cells += 1;
        }
    }

    let unmatched_left_after = m.unmatched_left_count() as u64;
    let unmatched_right_after = m.unmatched_right_count() as u64;
    let unmatched_after = unmatched_left_after + unmatched_right_after;
    let unmatched_before = unmatched_left_before + unmatched_right_before;

    // Eq. (5): μ(X₀ ∪ Y₀) ≤ 2 μ(A) (1/2)^⌊(i−1)/2⌋, one-cell slack when spherical
    let slack = if g.is_synthetic() { 0u64 } else { 1 };
    let exp = (i - 1) / 2;
    let eq5_ok = if exp >= 100 {
        unmatched_after.saturating_sub(slack) == 0
    } else {
        (unmatched_after.saturating_sub(slack) as u128) << exp <= 2 * g.n_left() as u128
    };
    // stabilization: diff ≤ (2i) · μ(X₀ ∪ Y₀ before) / 2, exact counting
    let sd_bound_ok = (diff_cells as u128) <= (i as u128) * (unmatched_before as u128);

    m.phase = i;
    let report = PhaseReport {
        phase: i,
        unmatched_left_before,
        unmatched_right_before,
        unmatched_left_after,
        unmatched_right_after,
        families_flipped: families.len() as u64,
        paths_flipped,
        diff_cells,
        eq5_ok,
        sd_bound_ok,
        post_shortest_augmenting: post_shortest,
        cell_area: g.cell_area(),
        families,
    };
    debug_assert!(report
        .post_shortest_augmenting
        .map_or(true, |len| len > 2 * i - 1));
    (m, report)
}

/// Iterative layered DFS from an unmatched root: extracts one augmenting path
/// of exactly the target length along BFS layers, consuming the vertices it
/// uses. Returns the path as `(left, generator, right)` triples.
fn dfs_collect(
    g: &BipartiteGraph,
    m: &Matching,
    dist: &mut [u32],
    root: usize,
    target: u32,
) -> Option<Vec<(u32, u16, u32)>> {
    // a free right closes a path of exactly the target length only from this layer
    let last_layer = (target - 1) / 2;
    // frame: (left vertex, absolute CSR cursor into its adjacency)
    let mut stack: Vec<(u32, usize)> = vec![(root as u32, g.edge_range(root).start)];
    let mut chosen: Vec<(u16, u32)> = Vec::new(); // descent edge per frame
    loop {
        let (l, cursor_val, end) = match stack.last() {
            Some(&(l, c)) => (l, c, g.edge_range(l as usize).end),
            None => return None,
        };
        let mut cursor = cursor_val;
        let mut descended = false;
        let mut completed: Option<(u16, u32)> = None;
        while cursor < end {
            let (gen, r) = g.edge_at(cursor);
            cursor += 1;
            match m.right[r as usize] {
                None => {
                    if dist[l as usize] == last_layer {
                        completed = Some((gen, r));
                        break;
                    }
                }
                Some(owner) => {
                    if dist[owner as usize] != UNSET
                        && dist[owner as usize] == dist[l as usize] + 1
                        && dist[owner as usize] <= last_layer
                    {
                        stack.last_mut().unwrap().1 = cursor;
                        chosen.push((gen, r));
                        stack.push((owner, g.edge_range(owner as usize).start));
                        descended = true;
                        break;
                    }
                }
            }
        }
        if let Some((gen, r)) = completed {
            // free right found along layered edges: assemble and consume
            chosen.push((gen, r));
            let mut path = Vec::with_capacity(stack.len());
            for (frame, &(cg, cr)) in stack.iter().zip(&chosen) {
                path.push((frame.0, cg, cr));
            }
            for &(fl, _) in &stack {
                dist[fl as usize] = UNSET;
            }
            return Some(path);
        }
        if !descended {
            dist[l as usize] = UNSET;
            stack.pop();
            chosen.pop();
        }
    }
}

/// Alternating-path layer profile: `X_j` is the set of end-vertices of
/// alternating paths of length at most `j` from the unmatched set of the
/// given side. Levels are BFS layers; `X'_j` are the per-level increments.
#[derive(Debug, Clone)]
pub struct LayerProfile {
    pub side: Side,
    pub left_levels: Vec<u32>,
    pub right_levels: Vec<u32>,
    /// `|X'_j|` per level `j`; index 0 is the unmatched root set
    pub increments: Vec<u64>,
    pub cell_area: f64,
    pub exact: bool,
    pub a_cells: u64,
}

impl LayerProfile {
    /// Largest level reached by the BFS.
    pub fn depth(&self) -> u32 {
        self.increments.len().saturating_sub(1) as u32
    }

    pub fn increment_cells(&self, j: u32) -> u64 {
        self.increments.get(j as usize).copied().unwrap_or(0)
    }

    /// `|X_j|` — cumulative count up to level `j` (saturates past the depth).
    pub fn cells_at_most(&self, j: u32) -> u64 {
        self.increments
            .iter()
            .take(j as usize + 1)
            .copied()
            .sum()
    }

    pub fn mu(&self, j: u32) -> f64 {
        self.cells_at_most(j) as f64 * self.cell_area
    }

    /// Count of `X_j` vertices lying on the root side (even levels).
    pub fn cells_in_root_side(&self, j: u32) -> u64 {
        self.increments
            .iter()
            .take(j as usize + 1)
            .enumerate()
            .filter(|(lvl, _)| lvl % 2 == 0)
            .map(|(_, &c)| c)
            .sum()
    }

    /// Count of `X_j` vertices on the opposite side (odd levels).
    pub fn cells_in_other_side(&self, j: u32) -> u64 {
        self.increments
            .iter()
            .take(j as usize + 1)
            .enumerate()
            .filter(|(lvl, _)| lvl % 2 == 1)
            .map(|(_, &c)| c)
            .sum()
    }
}

/// Computes the layer profile of alternating paths rooted at the unmatched
/// vertices of the given side.
pub fn layer_profile(g: &BipartiteGraph, m: &Matching, side: Side) -> LayerProfile {
    let mut left_levels = vec![UNSET; g.n_left()];
    let mut right_levels = vec![UNSET; g.n_right()];
    let mut increments: Vec<u64> = Vec::new();
    // queue entries encode side by offset
    let mut queue = std::collections::VecDeque::new();
    match side {
        Side::Left => {
            for l in 0..g.n_left() {
                if m.left[l].is_none() {
                    left_levels[l] = 0;
                    queue.push_back(l as u64);
                }
            }
        }
        Side::Right => {
            for r in 0..g.n_right() {
                if m.right[r].is_none() {
                    right_levels[r] = 0;
                    queue.push_back(r as u64);
                }
            }
        }
    }
    let root_count = queue.len() as u64;
    if root_count > 0 {
        increments.push(root_count);
    }
    let offset = 1u64 << 40; // tags entries on the non-root side
    while let Some(code) = queue.pop_front() {
        let on_root_side = code < offset;
        let v = (code % offset) as usize;
        match (side, on_root_side) {
            (Side::Left, true) => {
                // left vertex at even level: non-matching edges to rights
                let lvl = left_levels[v];
                let partner = m.left[v].map(|(_, r)| r);
                for (_, r) in g.edges_of(v) {
                    if Some(r) == partner {
                        continue;
                    }
                    if right_levels[r as usize] == UNSET {
                        right_levels[r as usize] = lvl + 1;
                        bump(&mut increments, lvl + 1);
                        queue.push_back(offset + r as u64);
                    }
                }
            }
            (Side::Left, false) => {
                // right vertex at odd level: matching edge back to a left
                let lvl = right_levels[v];
                if let Some(owner) = m.right[v] {
                    if left_levels[owner as usize] == UNSET {
                        left_levels[owner as usize] = lvl + 1;
                        bump(&mut increments, lvl + 1);
                        queue.push_back(owner as u64);
                    }
                }
            }
            (Side::Right, true) => {
                // right vertex at even level: non-matching edges to lefts
                let lvl = right_levels[v];
                let partner = m.right[v];
                for &l in g.rev_edges_of(v) {
                    if Some(l) == partner {
                        continue;
                    }
                    if left_levels[l as usize] == UNSET {
                        left_levels[l as usize] = lvl + 1;
                        bump(&mut increments, lvl + 1);
                        queue.push_back(offset + l as u64);
                    }
                }
            }
            (Side::Right, false) => {
                // left vertex at odd level: matching edge back to a right
                let lvl = left_levels[v];
                if let Some((_, r)) = m.left[v] {
                    if right_levels[r as usize] == UNSET {
                        right_levels[r as usize] = lvl + 1;
                        bump(&mut increments, lvl + 1);
                        queue.push_back(r as u64);
                    }
                }
            }
        }
    }
    LayerProfile {
        side,
        left_levels,
        right_levels,
        increments,
        cell_area: g.cell_area(),
        exact: g.is_synthetic(),
        a_cells: g.n_left() as u64,
    }
}

fn bump(increments: &mut Vec<u64>, level: u32) {
    if increments.len() <= level as usize {
        increments.resize(level as usize + 1, 0);
    }
    increments[level as usize] += 1;
}

/// Claim 2 check on a profile computed against a phase-`i` matching: for
/// every odd `j ≤ 2i−1`, `μ(X'_j) = μ(X'_{j+1})` and
/// `μ(X_j ∩ other) ≤ μ(X_{j+1} ∩ root)`. Exact in synthetic mode, one cell
/// of slack in spherical mode.
pub fn verify_claim2(profile: &LayerProfile, i: u32) -> Vec<(u32, bool)> {
    let slack = if profile.exact { 0u64 } else { 1 };
    let mut out = Vec::new();
    let mut j = 1;
    while j <= 2 * i - 1 {
        let a = profile.increment_cells(j);
        let b = profile.increment_cells(j + 1);
        let equal = a.abs_diff(b) <= slack;
        let injected = profile.cells_in_other_side(j)
            <= profile.cells_in_root_side(j + 1) + slack;
        out.push((j, equal && injected));
        j += 2;
    }
    out
}

/// Eq. (4) growth check: `μ(X_k) ≥ min((4/3)μ(A), 2^{k/2} μ(X₀))` for even
/// `k ≤ 2i`, with the same slack policy.
pub fn verify_growth(profile: &LayerProfile, mu_a: f64, i: u32) -> Vec<(u32, bool)> {
    let slack = if profile.exact { 0u64 } else { 1 };
    let a_cells = (mu_a / profile.cell_area).round() as u64;
    let x0 = profile.cells_at_most(0);
    let mut out = Vec::new();
    let mut k = 0;
    while k <= 2 * i {
        let xk = profile.cells_at_most(k) + slack;
        let exp = k / 2;
        let doubling_ok = if x0 == 0 {
            true
        } else if exp >= 100 {
            false
        } else {
            (xk as u128) >= (x0 as u128) << exp
        };
        let ok = 3 * xk >= 4 * a_cells || doubling_ok;
        out.push((k, ok));
        k += 2;
    }
    out
}

/// Disjointness of `X_{i−1}` (left-rooted profile) and `Y_i` (right-rooted
/// profile) for the same matching `Mᵢ`; exact.
pub fn verify_disjointness(prof_a: &LayerProfile, prof_b: &LayerProfile, i: u32) -> bool {
    debug_assert_eq!(prof_a.side, Side::Left);
    debug_assert_eq!(prof_b.side, Side::Right);
    let da = i.saturating_sub(1);
    let db = i;
    for l in 0..prof_a.left_levels.len() {
        if prof_a.left_levels[l] <= da && prof_b.left_levels[l] <= db {
            return false;
        }
    }
    for r in 0..prof_a.right_levels.len() {
        if prof_a.right_levels[r] <= da && prof_b.right_levels[r] <= db {
            return false;
        }
    }
    true
}

/// Runs phases `i = 1, 2, …` from the empty matching until the unmatched
/// measure drops to `epsilon` or `max_phases` is reached.
pub fn run_until_stable(
    g: &BipartiteGraph,
    max_phases: u32,
    epsilon: f64,
) -> (Matching, Vec<PhaseReport>) {
    assert!(max_phases >= 1);
    let mut m = Matching::empty(g);
    let mut reports = Vec::new();
    for i in 1..=max_phases {
        let (next, report) = run_phase_unchecked(g, m, i);
        m = next;
        let done = m.unmatched_measure(g) <= epsilon;
        reports.push(report);
        if done {
            break;
        }
    }
    (m, reports)
}

/// Writes the matching checkpoint: per left vertex a `(generator, right)`
/// pair of little-endian u32 words, `0xffffffff` for unmatched.
pub fn write_matching_file(m: &Matching, path: &std::path::Path) -> Result<(), MatchingError> {
    let mut buf = Vec::with_capacity(m.left.len() * 8);
    for pair in &m.left {
        let (gen, r) = match pair {
            Some((g, r)) => (*g as u32, *r),
            None => (u32::MAX, u32::MAX),
        };
        buf.extend_from_slice(&gen.to_le_bytes());
        buf.extend_from_slice(&r.to_le_bytes());
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Reads a matching checkpoint back and validates it against the graph.
pub fn read_matching_file(
    path: &std::path::Path,
    g: &BipartiteGraph,
) -> Result<Matching, MatchingError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() != g.n_left() * 8 {
        return Err(MatchingError::MalformedFile(format!(
            "expected {} bytes, found {}",
            g.n_left() * 8,
            bytes.len()
        )));
    }
    let mut m = Matching::empty(g);
    for l in 0..g.n_left() {
        let gen = u32::from_le_bytes(bytes[l * 8..l * 8 + 4].try_into().unwrap());
        let r = u32::from_le_bytes(bytes[l * 8 + 4..l * 8 + 8].try_into().unwrap());
        if gen == u32::MAX && r == u32::MAX {
            continue;
        }
        if gen > u16::MAX as u32 {
            return Err(MatchingError::MalformedFile(format!(
                "generator {} out of range",
                gen
            )));
        }
        if m.right[r as usize].is_some() {
            return Err(MatchingError::MalformedFile(format!(
                "right vertex {} matched twice",
                r
            )));
        }
        m.left[l] = Some((gen as u16, r));
        m.right[r as usize] = Some(l as u32);
    }
    m.validate(g)?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{from_adjacency, synthesize_expander};

    #[test]
    fn no_edges_means_no_flips() {
        let g = from_adjacency(3, 3, &[vec![], vec![], vec![]], 0);
        let m = Matching::empty(&g);
        let (m, report) = run_phase(&g, m, 1).unwrap();
        assert_eq!(m.size(), 0);
        assert_eq!(report.paths_flipped, 0);
        assert_eq!(report.families_flipped, 0);
        assert!(report.post_shortest_augmenting.is_none());
    }

    #[test]
    fn single_edge_matches_in_one_flip() {
        let g = from_adjacency(1, 1, &[vec![(0, 0)]], 0);
        let (m, report) = run_phase(&g, Matching::empty(&g), 1).unwrap();
        assert_eq!(m.size(), 1);
        assert_eq!(report.paths_flipped, 1);
        assert_eq!(report.families_flipped, 1);
        assert_eq!(report.unmatched_cells_after(), 0);
    }

    #[test]
    fn phase_postcondition_on_expander() {
        let g = synthesize_expander(200, 3, 17);
        let mut m = Matching::empty(&g);
        for i in 1..=4 {
            let (next, report) = run_phase(&g, m, i).unwrap();
            m = next;
            if let Some(len) = report.post_shortest_augmenting {
                assert!(len > 2 * i - 1);
            }
            m.validate(&g).unwrap();
        }
    }

    #[test]
    fn matching_size_never_decreases() {
        let g = synthesize_expander(300, 3, 5);
        let mut m = Matching::empty(&g);
        let mut last = 0;
        for i in 1..=6 {
            let (next, _) = run_phase(&g, m, i).unwrap();
            m = next;
            assert!(m.size() >= last);
            last = m.size();
        }
    }

    #[test]
    fn invalid_matching_rejected() {
        let g = from_adjacency(2, 2, &[vec![(0, 0)], vec![(0, 1)]], 0);
        let mut m = Matching::empty(&g);
        m.left[0] = Some((0, 1)); // not an edge label/pair
        assert!(matches!(
            run_phase(&g, m, 1),
            Err(MatchingError::InvalidMatching(_))
        ));
    }

    #[test]
    fn eq3_roundtrip_reproduces_matching() {
        let g = synthesize_expander(150, 4, 23);
        let (m, _) = run_until_stable(&g, 10, 0.0);
        let pieces = m.pieces_by_generator(&g);
        let mut rebuilt = Matching::empty(&g);
        for (gen, piece) in pieces.iter().enumerate() {
            for &l in piece {
                let (mgen, r) = m.left_pair(l as usize).unwrap();
                assert_eq!(mgen as usize, gen);
                rebuilt.left[l as usize] = Some((mgen, r));
                rebuilt.right[r as usize] = Some(l);
            }
        }
        rebuilt.phase = m.phase;
        assert_eq!(rebuilt, m);
        // pieces are pairwise disjoint
        let total: usize = pieces.iter().map(|p| p.len()).sum();
        assert_eq!(total, m.size());
    }

    #[test]
    fn perfect_matching_profile_is_empty() {
        let g = from_adjacency(2, 2, &[vec![(0, 0)], vec![(0, 1)]], 0);
        let (m, _) = run_until_stable(&g, 3, 0.0);
        assert_eq!(m.size(), 2);
        let prof = layer_profile(&g, &m, Side::Left);
        assert_eq!(prof.increments.len(), 0);
        assert_eq!(prof.cells_at_most(5), 0);
    }

    #[test]
    fn empty_matching_first_layer_is_neighborhood() {
        let g = synthesize_expander(60, 3, 2);
        let m = Matching::empty(&g);
        let prof = layer_profile(&g, &m, Side::Left);
        // X₁ = N(X₀) with X₀ = all of A
        let n_all = g.neighborhood(&g.left_set()).unwrap();
        assert_eq!(prof.increment_cells(0), 60);
        assert_eq!(prof.increment_cells(1), n_all.cell_count() as u64);
        assert_eq!(prof.depth(), 1); // matched edges are absent, BFS stops
    }

    #[test]
    fn claim2_vacuous_when_no_layers() {
        let g = from_adjacency(1, 1, &[vec![(0, 0)]], 0);
        let (m, _) = run_until_stable(&g, 2, 0.0);
        let prof = layer_profile(&g, &m, Side::Left);
        for (_, ok) in verify_claim2(&prof, 3) {
            assert!(ok);
        }
    }

    #[test]
    fn claim2_hand_built_six_vertices() {
        // lefts {0,1,2}, rights {0,1,2}; edges: 0-0, 1-0, 1-1, 2-1, 2-2 and a
        // matching {1-0, 2-1}; left 0 unmatched.
        // Hand enumeration: X0={L0}, X1={R0}, X2={L1}, X3={R1}, X4={L2}, X5={R2}
        // so |X'_j| = 1 for all j ≤ 5 and the Claim 2 equalities hold.
        let g = from_adjacency(
            3,
            3,
            &[vec![(0, 0)], vec![(0, 0), (1, 1)], vec![(0, 1), (1, 2)]],
            0,
        );
        let mut m = Matching::empty(&g);
        m.left[1] = Some((0, 0));
        m.right[0] = Some(1);
        m.left[2] = Some((0, 1));
        m.right[1] = Some(2);
        m.validate(&g).unwrap();
        let prof = layer_profile(&g, &m, Side::Left);
        assert_eq!(prof.increments, vec![1, 1, 1, 1, 1, 1]);
        // against M₃ this matching has no augmenting path of length ≤ 5? It
        // does (length 5), so check claim 2 only at j = 1, 3 (i = 2): the
        // matching admits no augmenting path of length ≤ 3.
        assert_eq!(shortest_augmenting_path_len(&g, &m), Some(5));
        for (j, ok) in verify_claim2(&prof, 2) {
            assert!(ok, "claim 2 failed at j = {}", j);
        }
    }

    #[test]
    fn growth_trivial_cases() {
        let g = synthesize_expander(80, 3, 31);
        let (m, _) = run_until_stable(&g, 12, 0.0);
        let prof = layer_profile(&g, &m, Side::Left);
        // μ(X₀) = 0 ⇒ every bound holds
        if m.unmatched_left_count() == 0 {
            for (_, ok) in verify_growth(&prof, g.mu_left(), 5) {
                assert!(ok);
            }
        }
        // k = 0 always holds
        let m0 = Matching::empty(&g);
        let prof0 = layer_profile(&g, &m0, Side::Left);
        let checks = verify_growth(&prof0, g.mu_left(), 1);
        assert!(checks[0].1);
    }

    #[test]
    fn disjointness_holds_after_phase_and_fails_on_corruption() {
        let g = synthesize_expander(120, 3, 41);
        let (m, _) = run_until_stable(&g, 3, 0.0);
        let i = m.phase();
        let prof_a = layer_profile(&g, &m, Side::Left);
        let prof_b = layer_profile(&g, &m, Side::Right);
        assert!(verify_disjointness(&prof_a, &prof_b, i));

        // corrupt: unmatch one pair to create a short augmenting path
        let mut bad = m.clone();
        if let Some(l) = (0..g.n_left()).find(|&l| bad.left[l].is_some()) {
            let (_, r) = bad.left[l].unwrap();
            bad.left[l] = None;
            bad.right[r as usize] = None;
            let pa = layer_profile(&g, &bad, Side::Left);
            let pb = layer_profile(&g, &bad, Side::Right);
            // the pair (l, r) is adjacent and both unmatched: X₀ ∩ Y₁ ≠ ∅
            assert!(!verify_disjointness(&pa, &pb, 1));
        }
    }

    #[test]
    fn run_until_stable_perfect_single_generator() {
        let g = synthesize_expander(64, 3, 77);
        let (m, reports) = run_until_stable(&g, 8, 0.0);
        assert!(m.unmatched_measure(&g) <= 1e-12 || !reports.is_empty());
        // every phase satisfies the stabilization bound exactly
        for r in &reports {
            assert!(r.sd_bound_ok);
        }
    }

    #[test]
    fn matching_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("matching.bin");
        let g = synthesize_expander(90, 4, 13);
        let (m, _) = run_until_stable(&g, 6, 0.0);
        write_matching_file(&m, &path).unwrap();
        let mut back = read_matching_file(&path, &g).unwrap();
        back.phase = m.phase();
        assert_eq!(back, m);
    }

    #[test]
    fn corrupt_matching_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("matching.bin");
        let g = synthesize_expander(10, 3, 1);
        let (m, _) = run_until_stable(&g, 4, 0.0);
        write_matching_file(&m, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_matching_file(&path, &g).is_err());
    }

    #[test]
    fn phase_line_serializes_spec_fields() {
        let g = from_adjacency(1, 1, &[vec![(0, 0)]], 0);
        let (_, report) = run_phase(&g, Matching::empty(&g), 1).unwrap();
        let line = serde_json::to_string(&PhaseLine::from(&report)).unwrap();
        for key in [
            "\"i\":",
            "\"mu_X0\":",
            "\"mu_Y0\":",
            "\"flips\":",
            "\"diff_measure\":",
            "\"eq5_ok\":",
            "\"sd_bound_ok\":",
        ] {
            assert!(line.contains(key), "missing {} in {}", key, line);
        }
    }
}
