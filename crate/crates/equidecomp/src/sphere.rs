//! Equal-area cell partition of the 2-sphere and measurable sets as bitmasks.
//!
//! The partition slices the sphere into latitude bands of equal height in `z`
//! and splits every band into the same number of azimuthal cells, so each cell
//! has exactly area `1/N` under the normalized uniform measure. All set
//! algebra is integer-exact on cell counts; only [`transport`] introduces
//! discretization error, and it reports that error as a first-class output.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rotation::{Rotation, UnitVector};

#[derive(Debug, Error)]
pub enum SphereError {
    #[error("sets belong to different universes")]
    PartitionMismatch,
    #[error("cap radius {0} outside [0, π]")]
    BadCapRadius(f64),
}

/// Identity of the index space a [`MeasurableSet`] lives in: either an
/// equal-area band partition of the sphere or a synthetic vertex universe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Universe {
    #[serde(rename = "equal-area-bands")]
    Bands {
        n_bands: u32,
        cells_per_band: u32,
    },
    #[serde(rename = "synthetic")]
    Synthetic { n_vertices: u32, tag: u64 },
}

impl Universe {
    pub fn n_cells(&self) -> usize {
        match self {
            Universe::Bands {
                n_bands,
                cells_per_band,
            } => (*n_bands as usize) * (*cells_per_band as usize),
            Universe::Synthetic { n_vertices, .. } => *n_vertices as usize,
        }
    }

    /// Measure of a single cell: the uniform measure is normalized to 1.
    pub fn cell_area(&self) -> f64 {
        1.0 / self.n_cells() as f64
    }

    pub fn is_synthetic(&self) -> bool {
        matches!(self, Universe::Synthetic { .. })
    }
}

/// Fixed-length bitmask with the operations the set algebra needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    words: Vec<u64>,
    len: usize,
}

impl BitMask {
    pub fn new(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn full(len: usize) -> Self {
        let mut m = Self::new(len);
        for w in &mut m.words {
            *w = u64::MAX;
        }
        m.clear_tail();
        m
    }

    fn clear_tail(&mut self) {
        let tail = self.len % 64;
        if tail != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        if value {
            self.words[i / 64] |= 1u64 << (i % 64);
        } else {
            self.words[i / 64] &= !(1u64 << (i % 64));
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn union_in_place(&mut self, other: &BitMask) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn intersect_in_place(&mut self, other: &BitMask) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn subtract_in_place(&mut self, other: &BitMask) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
    }

    pub fn intersection_count(&self, other: &BitMask) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn is_disjoint(&self, other: &BitMask) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0)
    }

    pub fn is_subset_of(&self, other: &BitMask) -> bool {
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    /// Iterates the indices of set bits, ascending.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    None
                } else {
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    Some(wi * 64 + b)
                }
            })
        })
    }

    /// Run-length encoding as `[start, len]` pairs over set bits.
    pub fn to_runs(&self) -> Vec<[u32; 2]> {
        let mut runs = Vec::new();
        let mut current: Option<[u32; 2]> = None;
        for i in self.iter_ones() {
            match current.as_mut() {
                Some(run) if run[0] as usize + run[1] as usize == i => run[1] += 1,
                _ => {
                    if let Some(run) = current.take() {
                        runs.push(run);
                    }
                    current = Some([i as u32, 1]);
                }
            }
        }
        if let Some(run) = current {
            runs.push(run);
        }
        runs
    }

    pub fn from_runs(len: usize, runs: &[[u32; 2]]) -> Self {
        let mut m = Self::new(len);
        for run in runs {
            for i in run[0]..run[0] + run[1] {
                m.set(i as usize, true);
            }
        }
        m
    }
}

/// A measurable set: a bitmask over the cells of a universe. The measure is
/// `count_ones × cell_area` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurableSet {
    universe: Universe,
    mask: BitMask,
}

impl MeasurableSet {
    pub fn empty(universe: Universe) -> Self {
        Self {
            mask: BitMask::new(universe.n_cells()),
            universe,
        }
    }

    pub fn full(universe: Universe) -> Self {
        Self {
            mask: BitMask::full(universe.n_cells()),
            universe,
        }
    }

    pub fn from_mask(universe: Universe, mask: BitMask) -> Self {
        assert_eq!(mask.len(), universe.n_cells());
        Self { universe, mask }
    }

    pub fn from_cells(universe: Universe, cells: impl IntoIterator<Item = usize>) -> Self {
        let mut mask = BitMask::new(universe.n_cells());
        for c in cells {
            mask.set(c, true);
        }
        Self { universe, mask }
    }

    pub fn universe(&self) -> Universe {
        self.universe
    }

    pub fn mask(&self) -> &BitMask {
        &self.mask
    }

    pub fn contains_cell(&self, cell: usize) -> bool {
        self.mask.get(cell)
    }

    pub fn cell_count(&self) -> usize {
        self.mask.count_ones()
    }

    pub fn measure(&self) -> f64 {
        self.cell_count() as f64 * self.universe.cell_area()
    }

    pub fn cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter_ones()
    }

    fn check_same_universe(&self, other: &MeasurableSet) -> Result<(), SphereError> {
        if self.universe == other.universe {
            Ok(())
        } else {
            Err(SphereError::PartitionMismatch)
        }
    }

    pub fn union(&self, other: &MeasurableSet) -> Result<MeasurableSet, SphereError> {
        self.check_same_universe(other)?;
        let mut out = self.clone();
        out.mask.union_in_place(&other.mask);
        Ok(out)
    }

    pub fn intersect(&self, other: &MeasurableSet) -> Result<MeasurableSet, SphereError> {
        self.check_same_universe(other)?;
        let mut out = self.clone();
        out.mask.intersect_in_place(&other.mask);
        Ok(out)
    }

    pub fn subtract(&self, other: &MeasurableSet) -> Result<MeasurableSet, SphereError> {
        self.check_same_universe(other)?;
        let mut out = self.clone();
        out.mask.subtract_in_place(&other.mask);
        Ok(out)
    }

    pub fn is_disjoint(&self, other: &MeasurableSet) -> Result<bool, SphereError> {
        self.check_same_universe(other)?;
        Ok(self.mask.is_disjoint(&other.mask))
    }

    pub fn is_subset_of(&self, other: &MeasurableSet) -> Result<bool, SphereError> {
        self.check_same_universe(other)?;
        Ok(self.mask.is_subset_of(&other.mask))
    }
}

/// JSON wire format for measurable sets: run-length-encoded cell indices.
#[derive(Debug, Serialize, Deserialize)]
pub struct MeasurableSetFile {
    pub universe: Universe,
    pub runs: Vec<[u32; 2]>,
}

impl From<&MeasurableSet> for MeasurableSetFile {
    fn from(set: &MeasurableSet) -> Self {
        Self {
            universe: set.universe,
            runs: set.mask.to_runs(),
        }
    }
}

impl MeasurableSetFile {
    pub fn into_set(self) -> MeasurableSet {
        MeasurableSet {
            mask: BitMask::from_runs(self.universe.n_cells(), &self.runs),
            universe: self.universe,
        }
    }
}

/// Equal-area latitude-band partition of the sphere.
///
/// `n_bands` bands of equal height in `z`, each split into `cells_per_band`
/// cells of equal azimuthal extent; every cell has area `1/N` exactly. Both
/// counts are even so the partition is exactly symmetric under the antipodal
/// map and no cell center lies on the equator.
#[derive(Debug, Clone)]
pub struct SpherePartition {
    n_bands: u32,
    cells_per_band: u32,
    n_cells_target: u32,
}

impl SpherePartition {
    /// Builds the partition closest to `n_cells_target` (within 10%).
    pub fn new(n_cells_target: usize) -> Self {
        assert!(n_cells_target >= 8, "partition needs at least 8 cells");
        let ideal_bands = (n_cells_target as f64 / std::f64::consts::PI).sqrt();
        let n_bands = (((ideal_bands / 2.0).round() as u32) * 2).max(2);
        let cells_per_band =
            (((n_cells_target as f64 / n_bands as f64 / 2.0).round() as u32) * 2).max(2);
        Self {
            n_bands,
            cells_per_band,
            n_cells_target: n_cells_target as u32,
        }
    }

    /// Reconstructs the partition a band universe describes; `None` for
    /// synthetic universes.
    pub fn from_universe(universe: Universe) -> Option<Self> {
        match universe {
            Universe::Bands {
                n_bands,
                cells_per_band,
            } => Some(Self {
                n_bands,
                cells_per_band,
                n_cells_target: n_bands * cells_per_band,
            }),
            Universe::Synthetic { .. } => None,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_bands as usize * self.cells_per_band as usize
    }

    pub fn n_bands(&self) -> u32 {
        self.n_bands
    }

    pub fn cells_per_band(&self) -> u32 {
        self.cells_per_band
    }

    pub fn n_cells_target(&self) -> u32 {
        self.n_cells_target
    }

    pub fn cell_area(&self) -> f64 {
        1.0 / self.n_cells() as f64
    }

    pub fn universe(&self) -> Universe {
        Universe::Bands {
            n_bands: self.n_bands,
            cells_per_band: self.cells_per_band,
        }
    }

    /// Center of a cell: midpoint of the band's `z` range and of the cell's
    /// azimuthal range.
    pub fn center(&self, cell: usize) -> UnitVector {
        debug_assert!(cell < self.n_cells());
        let band = cell / self.cells_per_band as usize;
        let j = cell % self.cells_per_band as usize;
        let z = 1.0 - (2.0 * band as f64 + 1.0) / self.n_bands as f64;
        let phi = (j as f64 + 0.5) * 2.0 * std::f64::consts::PI / self.cells_per_band as f64;
        let s = (1.0 - z * z).max(0.0).sqrt();
        UnitVector {
            x: s * phi.cos(),
            y: s * phi.sin(),
            z,
        }
    }

    /// Index of the cell containing a point.
    #[inline]
    pub fn locate(&self, p: &UnitVector) -> usize {
        let band_f = (1.0 - p.z) * 0.5 * self.n_bands as f64;
        let band = (band_f as i64).clamp(0, self.n_bands as i64 - 1) as usize;
        let mut phi = p.y.atan2(p.x);
        if phi < 0.0 {
            phi += 2.0 * std::f64::consts::PI;
        }
        let j_f = phi * (0.5 / std::f64::consts::PI) * self.cells_per_band as f64;
        let j = (j_f as i64).clamp(0, self.cells_per_band as i64 - 1) as usize;
        band * self.cells_per_band as usize + j
    }

    pub fn empty_set(&self) -> MeasurableSet {
        MeasurableSet::empty(self.universe())
    }

    pub fn full_set(&self) -> MeasurableSet {
        MeasurableSet::full(self.universe())
    }

    /// Cells whose centers lie within spherical distance `radius` of `center`.
    pub fn cap(&self, center: UnitVector, radius: f64) -> MeasurableSet {
        self.try_cap(center, radius).expect("radius in [0, π]")
    }

    pub fn try_cap(&self, center: UnitVector, radius: f64) -> Result<MeasurableSet, SphereError> {
        if !(0.0..=std::f64::consts::PI).contains(&radius) {
            return Err(SphereError::BadCapRadius(radius));
        }
        let threshold = radius.cos();
        let mut mask = BitMask::new(self.n_cells());
        for c in 0..self.n_cells() {
            if self.center(c).dot(&center) >= threshold {
                mask.set(c, true);
            }
        }
        Ok(MeasurableSet::from_mask(self.universe(), mask))
    }

    /// Cap of (approximately) the given measure: radius `acos(1 − 2μ)`.
    pub fn cap_of_measure(&self, center: UnitVector, mu: f64) -> MeasurableSet {
        let radius = (1.0 - 2.0 * mu.clamp(0.0, 1.0)).clamp(-1.0, 1.0).acos();
        self.cap(center, radius)
    }
}

/// Nearest-cell image of a set under a rotation, with the measure distortion
/// `|μ(image) − μ(U)|` caused by cell collisions.
pub fn transport(
    r: &Rotation,
    u: &MeasurableSet,
    partition: &SpherePartition,
) -> Result<(MeasurableSet, f64), SphereError> {
    if u.universe() != partition.universe() {
        return Err(SphereError::PartitionMismatch);
    }
    let mut mask = BitMask::new(partition.n_cells());
    for cell in u.cells() {
        let image = r.apply(&partition.center(cell));
        mask.set(partition.locate(&image), true);
    }
    let image = MeasurableSet::from_mask(u.universe(), mask);
    let distortion = (image.measure() - u.measure()).abs();
    Ok((image, distortion))
}

/// Cell-to-cell transport map for one rotation: `map[c] = locate(r(center(c)))`.
/// Precomputing it turns repeated set transports into table lookups.
pub fn transport_map(r: &Rotation, partition: &SpherePartition) -> Vec<u32> {
    (0..partition.n_cells())
        .map(|c| partition.locate(&r.apply(&partition.center(c))) as u32)
        .collect()
}

/// Applies a precomputed transport map to a set.
pub fn transport_with_map(map: &[u32], u: &MeasurableSet) -> MeasurableSet {
    let mut mask = BitMask::new(map.len());
    for cell in u.cells() {
        mask.set(map[cell] as usize, true);
    }
    MeasurableSet::from_mask(u.universe(), mask)
}
