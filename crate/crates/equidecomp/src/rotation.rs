//! Unit-quaternion SO(3) arithmetic and the rotation sets used throughout.
//!
//! Quaternions are the canonical representation: composition of long generator
//! words stays on the group after renormalization, and the 3×3 orthogonal
//! matrix view is derived on demand. Two rotations are considered equal when
//! their quaternions agree up to global sign within [`ROTATION_EQ_TOL`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sphere::{MeasurableSet, SpherePartition};

/// Tolerance for rotation equality (quaternion comparison up to sign).
pub const ROTATION_EQ_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum RotationError {
    #[error("rotation set is not symmetric: element {index} has no inverse in the set")]
    NotSymmetric { index: usize },
    #[error("covering impossible: {uncovered} cells uncovered after exhausting the pool")]
    CoverageImpossible { uncovered: usize },
    #[error("covering impossible: the set to cover is empty")]
    EmptyCoverTarget,
    #[error("vector too close to zero to normalize")]
    ZeroVector,
    #[error("unknown rotation preset `{0}`")]
    UnknownPreset(String),
}

/// A point on the unit sphere in ℝ³.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitVector {
    /// Normalizes `(x, y, z)`; errors on (near-)zero input.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self, RotationError> {
        let n = (x * x + y * y + z * z).sqrt();
        if n < 1e-12 {
            return Err(RotationError::ZeroVector);
        }
        Ok(Self {
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    pub const X: UnitVector = UnitVector {
        x: 1.0,
        y: 0.0,
        z: 0.0,
    };
    pub const Y: UnitVector = UnitVector {
        x: 0.0,
        y: 1.0,
        z: 0.0,
    };
    pub const Z: UnitVector = UnitVector {
        x: 0.0,
        y: 0.0,
        z: 1.0,
    };

    pub fn dot(&self, other: &UnitVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, other: &UnitVector) -> (f64, f64, f64) {
        (
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    /// Spherical (geodesic) distance to `other`, in radians.
    pub fn angle_to(&self, other: &UnitVector) -> f64 {
        self.dot(other).clamp(-1.0, 1.0).acos()
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

/// One letter of a generator word: generator index plus sign (+1 or −1).
pub type WordLetter = (u8, i8);

/// An element of SO(3): a unit quaternion `(w, x, y, z)` with an optional
/// record of the generator word it was composed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    q: [f64; 4],
    word: Option<Vec<WordLetter>>,
}

impl Rotation {
    pub fn identity() -> Self {
        Self {
            q: [1.0, 0.0, 0.0, 0.0],
            word: Some(Vec::new()),
        }
    }

    /// Rotation by `angle` radians about `axis` (right-hand rule).
    pub fn from_axis_angle(axis: UnitVector, angle: f64) -> Self {
        let (s, c) = (angle / 2.0).sin_cos();
        let mut r = Self {
            q: [c, s * axis.x, s * axis.y, s * axis.z],
            word: None,
        };
        r.renormalize();
        r
    }

    /// Builds directly from quaternion components, renormalizing.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Result<Self, RotationError> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if n < 1e-12 {
            return Err(RotationError::ZeroVector);
        }
        Ok(Self {
            q: [w / n, x / n, y / n, z / n],
            word: None,
        })
    }

    pub fn quaternion(&self) -> [f64; 4] {
        self.q
    }

    pub fn word(&self) -> Option<&[WordLetter]> {
        self.word.as_deref()
    }

    pub fn with_word(mut self, word: Vec<WordLetter>) -> Self {
        self.word = Some(word);
        self
    }

    fn renormalize(&mut self) {
        let n = self.q.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut self.q {
            *v /= n;
        }
    }

    /// Group composition `self ∘ other` (apply `other` first, then `self`).
    ///
    /// The word is the concatenation when both operands carry one.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        let [a, b, c, d] = self.q;
        let [e, f, g, h] = other.q;
        let mut r = Rotation {
            q: [
                a * e - b * f - c * g - d * h,
                a * f + b * e + c * h - d * g,
                a * g - b * h + c * e + d * f,
                a * h + b * g - c * f + d * e,
            ],
            word: match (&self.word, &other.word) {
                (Some(u), Some(v)) => {
                    let mut w = u.clone();
                    w.extend_from_slice(v);
                    Some(w)
                }
                _ => None,
            },
        };
        r.renormalize();
        r
    }

    pub fn inverse(&self) -> Rotation {
        Rotation {
            q: [self.q[0], -self.q[1], -self.q[2], -self.q[3]],
            word: self
                .word
                .as_ref()
                .map(|w| w.iter().rev().map(|&(g, s)| (g, -s)).collect()),
        }
    }

    /// Applies the rotation to a point on the sphere.
    pub fn apply(&self, p: &UnitVector) -> UnitVector {
        let [w, x, y, z] = self.q;
        // q * (0, p) * q⁻¹ expanded: v' = v + 2 w (u × v) + 2 u × (u × v)
        let (ux, uy, uz) = (x, y, z);
        let (cx, cy, cz) = (
            uy * p.z - uz * p.y,
            uz * p.x - ux * p.z,
            ux * p.y - uy * p.x,
        );
        let (dx, dy, dz) = (uy * cz - uz * cy, uz * cx - ux * cz, ux * cy - uy * cx);
        UnitVector {
            x: p.x + 2.0 * (w * cx + dx),
            y: p.y + 2.0 * (w * cy + dy),
            z: p.z + 2.0 * (w * cz + dz),
        }
    }

    /// The 3×3 orthogonal matrix view, row-major, acting on column vectors.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let [w, x, y, z] = self.q;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    /// Equality up to quaternion sign, with the given tolerance.
    pub fn approx_eq(&self, other: &Rotation, tol: f64) -> bool {
        let same = self
            .q
            .iter()
            .zip(&other.q)
            .all(|(a, b)| (a - b).abs() <= tol);
        let negated = self
            .q
            .iter()
            .zip(&other.q)
            .all(|(a, b)| (a + b).abs() <= tol);
        same || negated
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.approx_eq(&Rotation::identity(), tol)
    }

    /// Sign-canonical quaternion: the first component of magnitude > 1e-6 is
    /// made positive, so `q` and `-q` share a key.
    fn canonical(&self) -> [f64; 4] {
        let mut q = self.q;
        for v in q {
            if v.abs() > 1e-6 {
                if v < 0.0 {
                    for u in &mut q {
                        *u = -*u;
                    }
                }
                break;
            }
        }
        q
    }
}

const DEDUP_GRID: f64 = 1e8;

/// Hash-grid membership structure for deduplicating rotations up to
/// [`ROTATION_EQ_TOL`]. Keys quantize the sign-canonical quaternion; lookups
/// probe neighboring grid keys so near-boundary duplicates are still found.
struct RotationIndex {
    map: std::collections::HashMap<[i64; 4], Vec<usize>>,
}

impl RotationIndex {
    fn new() -> Self {
        Self {
            map: std::collections::HashMap::new(),
        }
    }

    fn key(q: &[f64; 4]) -> [i64; 4] {
        [
            (q[0] * DEDUP_GRID).round() as i64,
            (q[1] * DEDUP_GRID).round() as i64,
            (q[2] * DEDUP_GRID).round() as i64,
            (q[3] * DEDUP_GRID).round() as i64,
        ]
    }

    fn find(&self, r: &Rotation, elements: &[Rotation], tol: f64) -> Option<usize> {
        let base = Self::key(&r.canonical());
        let mut probe = [0i64; 4];
        for d0 in -1..=1 {
            for d1 in -1..=1 {
                for d2 in -1..=1 {
                    for d3 in -1..=1 {
                        probe = [base[0] + d0, base[1] + d1, base[2] + d2, base[3] + d3];
                        if let Some(idxs) = self.map.get(&probe) {
                            for &i in idxs {
                                if elements[i].approx_eq(r, tol) {
                                    return Some(i);
                                }
                            }
                        }
                    }
                }
            }
        }
        let _ = probe;
        None
    }

    fn insert(&mut self, r: &Rotation, index: usize) {
        self.map
            .entry(Self::key(&r.canonical()))
            .or_default()
            .push(index);
    }
}

/// An ordered, duplicate-free set of rotations, optionally flagged symmetric
/// (closed under inverses up to [`ROTATION_EQ_TOL`]).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RotationSet {
    elements: Vec<Rotation>,
    symmetric: bool,
}

impl RotationSet {
    /// Builds a set from the given rotations, dropping duplicates (first
    /// occurrence wins). The symmetric flag starts unset.
    pub fn from_rotations(rotations: Vec<Rotation>) -> Self {
        let mut elements: Vec<Rotation> = Vec::with_capacity(rotations.len());
        let mut index = RotationIndex::new();
        for r in rotations {
            if index.find(&r, &elements, ROTATION_EQ_TOL).is_none() {
                index.insert(&r, elements.len());
                elements.push(r);
            }
        }
        Self {
            elements,
            symmetric: false,
        }
    }

    pub fn elements(&self) -> &[Rotation] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn contains(&self, r: &Rotation) -> bool {
        let mut index = RotationIndex::new();
        for (i, e) in self.elements.iter().enumerate() {
            index.insert(e, i);
        }
        index.find(r, &self.elements, ROTATION_EQ_TOL).is_some()
    }

    /// Verifies that every element's inverse is in the set.
    pub fn check_symmetric(&self, tol: f64) -> Result<(), RotationError> {
        let mut index = RotationIndex::new();
        for (i, e) in self.elements.iter().enumerate() {
            index.insert(e, i);
        }
        for (i, e) in self.elements.iter().enumerate() {
            if index.find(&e.inverse(), &self.elements, tol).is_none() {
                return Err(RotationError::NotSymmetric { index: i });
            }
        }
        Ok(())
    }

    /// Marks the set symmetric after verifying the property.
    pub fn into_symmetric(mut self) -> Result<Self, RotationError> {
        self.check_symmetric(ROTATION_EQ_TOL)?;
        self.symmetric = true;
        Ok(self)
    }

    /// sha256 over the canonical JSON serialization; stable provenance key.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let file = RotationSetFile::from(self);
        let bytes = serde_json::to_vec(&file).expect("rotation set serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// JSON wire format for rotation sets: quaternions as 4-tuples plus the
/// symmetric flag and optional word annotations.
#[derive(Debug, Serialize, Deserialize)]
pub struct RotationSetFile {
    pub symmetric: bool,
    pub quaternions: Vec<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words: Option<Vec<Option<Vec<WordLetter>>>>,
}

impl From<&RotationSet> for RotationSetFile {
    fn from(set: &RotationSet) -> Self {
        let words: Vec<Option<Vec<WordLetter>>> = set
            .elements
            .iter()
            .map(|r| r.word().map(|w| w.to_vec()))
            .collect();
        Self {
            symmetric: set.symmetric,
            quaternions: set.elements.iter().map(|r| r.quaternion()).collect(),
            words: if words.iter().any(|w| w.is_some()) {
                Some(words)
            } else {
                None
            },
        }
    }
}

impl RotationSetFile {
    pub fn into_rotation_set(self) -> Result<RotationSet, RotationError> {
        let mut rotations = Vec::with_capacity(self.quaternions.len());
        for (i, q) in self.quaternions.iter().enumerate() {
            let mut r = Rotation::from_quaternion(q[0], q[1], q[2], q[3])?;
            if let Some(words) = &self.words {
                if let Some(Some(w)) = words.get(i) {
                    r = r.with_word(w.clone());
                }
            }
            rotations.push(r);
        }
        let set = RotationSet::from_rotations(rotations);
        if self.symmetric {
            set.into_symmetric()
        } else {
            Ok(set)
        }
    }
}

/// Adds the inverse of every element and deduplicates; the result carries the
/// verified symmetric flag.
pub fn symmetrize(set: &RotationSet) -> RotationSet {
    let mut all = set.elements.to_vec();
    all.extend(set.elements.iter().map(Rotation::inverse));
    let mut out = RotationSet::from_rotations(all);
    out.symmetric = true;
    debug_assert!(out.check_symmetric(ROTATION_EQ_TOL).is_ok());
    out
}

/// The edge set `R := {τ⁻¹γ : γ ∈ S, τ ∈ T} ∪ {γτ : γ ∈ S, τ ∈ T}`,
/// deduplicated. `S` must be symmetric, which makes `R` symmetric as well.
pub fn build_edge_set(s: &RotationSet, t: &RotationSet) -> Result<RotationSet, RotationError> {
    if !s.symmetric {
        s.check_symmetric(ROTATION_EQ_TOL)?;
    }
    let mut elems = Vec::with_capacity(2 * s.len() * t.len());
    for tau in t.elements() {
        let tau_inv = tau.inverse();
        for gamma in s.elements() {
            elems.push(tau_inv.compose(gamma));
        }
    }
    for gamma in s.elements() {
        for tau in t.elements() {
            elems.push(gamma.compose(tau));
        }
    }
    let mut r = RotationSet::from_rotations(elems);
    r.check_symmetric(ROTATION_EQ_TOL)?;
    r.symmetric = true;
    Ok(r)
}

/// All products of at most `max_len` generators (the identity is the empty
/// word). The generator set is used as given; pass a symmetrized set to get a
/// symmetric ball.
pub fn word_ball(generators: &RotationSet, max_len: usize) -> RotationSet {
    let mut elements = vec![Rotation::identity()];
    let mut index = RotationIndex::new();
    index.insert(&elements[0], 0);
    let mut frontier: Vec<usize> = vec![0];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for &fi in &frontier {
            let base = elements[fi].clone();
            for (gi, g) in generators.elements().iter().enumerate() {
                let mut w = base.compose(g);
                if w.word().is_none() {
                    // generator without a word: label by its set index
                    let mut word = base.word().map(|v| v.to_vec()).unwrap_or_default();
                    word.push((gi as u8, 1));
                    w = w.with_word(word);
                }
                if index.find(&w, &elements, ROTATION_EQ_TOL).is_none() {
                    index.insert(&w, elements.len());
                    next.push(elements.len());
                    elements.push(w);
                }
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    let mut out = RotationSet {
        elements,
        symmetric: false,
    };
    if generators.symmetric || generators.check_symmetric(ROTATION_EQ_TOL).is_ok() {
        out.symmetric = true;
    }
    out
}

/// The `preset:arccos35` generator triple: rotations by arccos(3/5) about the
/// three coordinate axes. cos(θ/2) = 2/√5, sin(θ/2) = 1/√5 exactly.
pub fn preset(name: &str) -> Result<RotationSet, RotationError> {
    match name {
        "arccos35" => {
            let angle = (3.0f64 / 5.0).acos();
            let axes = [UnitVector::X, UnitVector::Y, UnitVector::Z];
            let rotations = axes
                .iter()
                .enumerate()
                .map(|(i, &axis)| {
                    Rotation::from_axis_angle(axis, angle).with_word(vec![(i as u8, 1)])
                })
                .collect();
            Ok(RotationSet::from_rotations(rotations))
        }
        other => Err(RotationError::UnknownPreset(other.to_string())),
    }
}

/// A deterministic pool of candidate covering rotations: the identity plus
/// shortest-arc rotations taking `from` to each point of a Fibonacci grid.
pub fn covering_pool(from: UnitVector, n_grid: usize) -> RotationSet {
    let mut rotations = vec![Rotation::identity()];
    let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
    for k in 0..n_grid {
        let z = 1.0 - (2.0 * k as f64 + 1.0) / n_grid as f64;
        let phi = 2.0 * std::f64::consts::PI * (k as f64 / golden).fract();
        let s = (1.0 - z * z).sqrt();
        let target = UnitVector {
            x: s * phi.cos(),
            y: s * phi.sin(),
            z,
        };
        rotations.push(arc_rotation(&from, &target));
    }
    RotationSet::from_rotations(rotations)
}

/// Shortest-arc rotation taking `a` to `b`.
pub fn arc_rotation(a: &UnitVector, b: &UnitVector) -> Rotation {
    let d = a.dot(b).clamp(-1.0, 1.0);
    if d > 1.0 - 1e-14 {
        return Rotation::identity();
    }
    if d < -1.0 + 1e-14 {
        // antipodal: half-turn about any axis orthogonal to a
        let axis = if a.x.abs() < 0.9 {
            UnitVector::new(0.0, -a.z, a.y).expect("orthogonal axis")
        } else {
            UnitVector::new(-a.y, a.x, 0.0).expect("orthogonal axis")
        };
        return Rotation::from_axis_angle(axis, std::f64::consts::PI);
    }
    let (cx, cy, cz) = a.cross(b);
    let axis = UnitVector::new(cx, cy, cz).expect("non-parallel vectors");
    Rotation::from_axis_angle(axis, d.acos())
}

/// Greedy covering-set search: selects rotations `τ` from `pool` until every
/// cell center of the partition lies in some `τ(A)`, maximizing newly covered
/// measure at each step with first-index tie-break.
///
/// Coverage is tested at cell centers: center `c` is covered by `τ` when
/// `τ⁻¹(c)` falls in a cell of `A`.
pub fn greedy_cover(
    a: &MeasurableSet,
    pool: &RotationSet,
    partition: &SpherePartition,
) -> Result<RotationSet, RotationError> {
    if a.cell_count() == 0 {
        return Err(RotationError::EmptyCoverTarget);
    }
    let n = partition.n_cells();
    // coverage mask per pool rotation
    let coverage: Vec<crate::sphere::BitMask> = pool
        .elements()
        .iter()
        .map(|tau| {
            let inv = tau.inverse();
            let mut mask = crate::sphere::BitMask::new(n);
            for c in 0..n {
                let p = inv.apply(&partition.center(c));
                if a.contains_cell(partition.locate(&p)) {
                    mask.set(c, true);
                }
            }
            mask
        })
        .collect();

    let mut uncovered = crate::sphere::BitMask::full(n);
    let mut chosen: Vec<usize> = Vec::new();
    let mut chosen_mask = vec![false; pool.len()];
    while uncovered.count_ones() > 0 {
        let mut best: Option<(usize, usize)> = None; // (gain, index)
        for (i, cov) in coverage.iter().enumerate() {
            if chosen_mask[i] {
                continue;
            }
            let gain = cov.intersection_count(&uncovered);
            match best {
                Some((g, _)) if g >= gain => {}
                _ => {
                    if gain > 0 {
                        best = Some((gain, i));
                    }
                }
            }
        }
        match best {
            Some((_, i)) => {
                uncovered.subtract_in_place(&coverage[i]);
                chosen_mask[i] = true;
                chosen.push(i);
            }
            None => {
                return Err(RotationError::CoverageImpossible {
                    uncovered: uncovered.count_ones(),
                })
            }
        }
    }
    Ok(RotationSet::from_rotations(
        chosen
            .into_iter()
            .map(|i| pool.elements()[i].clone())
            .collect(),
    ))
}
