//! Extraction of the equidecomposition pieces from a matching, invariant
//! verification, rendering, and JSON reports.
//!
//! A matching induces the sets `A_γ` of left cells matched via generator `γ`;
//! the images `B_γ = γ(A_γ)` are the matched partner cells. Pieces are
//! indexed by generator and never re-merged; unmatched residuals are reported
//! as-is, standing in for the measure-zero exceptional sets of the continuum
//! statement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{BipartiteGraph, GraphMode};
use crate::matching::{Matching, MatchingError};
use crate::rotation::{Rotation, WordLetter};
use crate::sphere::{MeasurableSet, SpherePartition, Universe};

#[derive(Debug, Error)]
pub enum DecompositionError {
    #[error(transparent)]
    InvalidMatching(#[from] MatchingError),
    #[error("rendering requires a spherical decomposition")]
    SyntheticModeUnsupported,
    #[error("piece invariant violated: {0}")]
    InvariantViolation(String),
    #[error("malformed report: {0}")]
    MalformedReport(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One piece `A_γ` together with its image `B_γ`.
#[derive(Debug, Clone)]
pub struct Piece {
    pub generator: u16,
    pub rotation: Option<Rotation>,
    pub part_a: MeasurableSet,
    pub part_b: MeasurableSet,
    /// measure lost when `A_γ` is re-transported by fresh nearest-cell
    /// snapping; zero whenever the matching came from the graph's own edges
    pub distortion: f64,
}

/// The generator-indexed piece decomposition of a matching.
#[derive(Debug, Clone)]
pub struct PieceDecomposition {
    pub mode: GraphMode,
    pub universe: Universe,
    pub pieces: Vec<Piece>,
    pub residual_a: MeasurableSet,
    pub residual_b: MeasurableSet,
}

impl PieceDecomposition {
    pub fn residual_measure(&self) -> f64 {
        self.residual_a.measure() + self.residual_b.measure()
    }

    pub fn piece_cells_total(&self) -> u64 {
        self.pieces.iter().map(|p| p.part_a.cell_count() as u64).sum()
    }
}

/// Extracts the pieces `A_γ` from a valid matching and verifies the piece
/// laws (disjointness, additivity, equal part sizes) before returning.
pub fn extract_pieces(
    g: &BipartiteGraph,
    m: &Matching,
) -> Result<PieceDecomposition, DecompositionError> {
    m.validate(g)?;
    let universe = g.universe();
    let by_gen = m.pieces_by_generator(g);
    let mut pieces = Vec::new();
    for (gen, lefts) in by_gen.iter().enumerate() {
        if lefts.is_empty() {
            continue;
        }
        let part_a = MeasurableSet::from_cells(
            universe,
            lefts.iter().map(|&l| g.left_cell(l as usize) as usize),
        );
        let part_b = MeasurableSet::from_cells(
            universe,
            lefts.iter().map(|&l| {
                let (_, r) = m.left_pair(l as usize).expect("piece members are matched");
                g.right_cell(r as usize) as usize
            }),
        );
        let rotation = g
            .rotations()
            .map(|rs| rs.elements()[gen].clone());
        let distortion = match (&rotation, SpherePartition::from_universe(universe)) {
            (Some(rot), Some(partition)) => {
                let (image, d) =
                    crate::sphere::transport(rot, &part_a, &partition).expect("same universe");
                debug_assert!(image.is_subset_of(&part_b).unwrap_or(false) || d > 0.0);
                d
            }
            _ => 0.0,
        };
        pieces.push(Piece {
            generator: gen as u16,
            rotation,
            part_a,
            part_b,
            distortion,
        });
    }
    let matched_a = MeasurableSet::from_cells(
        universe,
        (0..g.n_left())
            .filter(|&l| m.left_pair(l).is_some())
            .map(|l| g.left_cell(l) as usize),
    );
    let matched_b = MeasurableSet::from_cells(
        universe,
        (0..g.n_right())
            .filter(|&r| m.right_pair(r).is_some())
            .map(|r| g.right_cell(r) as usize),
    );
    let residual_a = g.left_set().subtract(&matched_a).expect("same universe");
    let residual_b = g.right_set().subtract(&matched_b).expect("same universe");

    // piece laws
    let mut union_a = MeasurableSet::empty(universe);
    let mut union_b = MeasurableSet::empty(universe);
    let mut total_a = 0usize;
    let mut total_b = 0usize;
    for p in &pieces {
        if p.part_a.cell_count() != p.part_b.cell_count() {
            return Err(DecompositionError::InvariantViolation(format!(
                "piece {} has unequal part sizes",
                p.generator
            )));
        }
        total_a += p.part_a.cell_count();
        total_b += p.part_b.cell_count();
        union_a = union_a.union(&p.part_a).expect("same universe");
        union_b = union_b.union(&p.part_b).expect("same universe");
    }
    if union_a.cell_count() != total_a || union_b.cell_count() != total_b {
        return Err(DecompositionError::InvariantViolation(
            "pieces are not pairwise disjoint".into(),
        ));
    }
    if union_a != matched_a || union_b != matched_b {
        return Err(DecompositionError::InvariantViolation(
            "pieces do not cover the matched parts".into(),
        ));
    }
    Ok(PieceDecomposition {
        mode: g.mode(),
        universe,
        pieces,
        residual_a,
        residual_b,
    })
}

/// μ(residual_A) + μ(residual_B): the finite-scale surrogate for the
/// measure-zero exceptional sets.
pub fn residual_measure(d: &PieceDecomposition) -> f64 {
    d.residual_measure()
}

/// Reassembles the matching edges `{(x, γ(x)) : x ∈ A_γ}` from the pieces via
/// the graph's labeled edges; the round-trip must reproduce the matching.
pub fn reassemble_matching(
    g: &BipartiteGraph,
    d: &PieceDecomposition,
) -> Result<Vec<(u32, u16, u32)>, DecompositionError> {
    let mut edges = Vec::new();
    for p in &d.pieces {
        for cell in p.part_a.cells() {
            let l = g
                .left_local_of_cell(cell as u32)
                .ok_or_else(|| DecompositionError::MalformedReport(
                    format!("piece cell {} is not a left vertex", cell),
                ))?;
            let target = g
                .edges_of(l)
                .find(|&(gen, _)| gen == p.generator)
                .map(|(_, r)| r)
                .ok_or_else(|| DecompositionError::MalformedReport(
                    format!("no edge with generator {} from cell {}", p.generator, cell),
                ))?;
            edges.push((l as u32, p.generator, target));
        }
    }
    edges.sort_unstable();
    Ok(edges)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let i = (h * 6.0).floor();
    let f = h * 6.0 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - f * s);
    let t = v * (1.0 - (1.0 - f) * s);
    let (r, g, b) = match (i as i64).rem_euclid(6) {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [
        (r * 255.0).round() as u8,
        (g * 255.0).round() as u8,
        (b * 255.0).round() as u8,
    ]
}

/// Deterministic palette: golden-angle hue walk by generator index.
pub fn piece_color(generator: u16) -> [u8; 3] {
    let h = (generator as f64 * 0.618_033_988_75).fract();
    hsv_to_rgb(h, 0.65, 0.93)
}

pub const RESIDUAL_COLOR: [u8; 3] = [0, 0, 0];
pub const BACKGROUND_COLOR: [u8; 3] = [255, 255, 255];

/// Renders the decomposition to a binary P6 portable pixmap in
/// equirectangular projection (width = 2 × height): one color per generator
/// piece, residual cells black, cells outside `A ∪ B` white.
pub fn render(d: &PieceDecomposition, height: usize) -> Result<Vec<u8>, DecompositionError> {
    let partition = SpherePartition::from_universe(d.universe)
        .ok_or(DecompositionError::SyntheticModeUnsupported)?;
    let mut cell_color = vec![BACKGROUND_COLOR; partition.n_cells()];
    for cell in d.residual_a.cells().chain(d.residual_b.cells()) {
        cell_color[cell] = RESIDUAL_COLOR;
    }
    for p in &d.pieces {
        let color = piece_color(p.generator);
        for cell in p.part_a.cells().chain(p.part_b.cells()) {
            cell_color[cell] = color;
        }
    }
    let width = 2 * height;
    let mut out = format!("P6\n{} {}\n255\n", width, height).into_bytes();
    out.reserve(width * height * 3);
    for py in 0..height {
        let theta = (py as f64 + 0.5) / height as f64 * std::f64::consts::PI;
        let (sin_t, cos_t) = theta.sin_cos();
        for px in 0..width {
            let phi = (px as f64 + 0.5) / width as f64 * 2.0 * std::f64::consts::PI;
            let point = crate::rotation::UnitVector {
                x: sin_t * phi.cos(),
                y: sin_t * phi.sin(),
                z: cos_t,
            };
            let color = cell_color[partition.locate(&point)];
            out.extend_from_slice(&color);
        }
    }
    Ok(out)
}

/// JSON report of a decomposition.
#[derive(Debug, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub version: u32,
    pub mode: GraphMode,
    pub universe: Universe,
    pub pieces: Vec<PieceReport>,
    pub residual_a_runs: Vec<[u32; 2]>,
    pub residual_b_runs: Vec<[u32; 2]>,
    pub residual_a_measure: f64,
    pub residual_b_measure: f64,
    pub provenance: ReportProvenance,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PieceReport {
    pub generator: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quaternion: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word: Option<Vec<WordLetter>>,
    pub cells: u64,
    pub measure_a: f64,
    pub measure_b: f64,
    pub distortion: f64,
    pub runs_a: Vec<[u32; 2]>,
    pub runs_b: Vec<[u32; 2]>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct ReportProvenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation_set_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition_target: Option<u32>,
    pub seed: u64,
}

pub const REPORT_VERSION: u32 = 1;

impl DecompositionReport {
    pub fn from_decomposition(d: &PieceDecomposition, provenance: ReportProvenance) -> Self {
        DecompositionReport {
            version: REPORT_VERSION,
            mode: d.mode,
            universe: d.universe,
            pieces: d
                .pieces
                .iter()
                .map(|p| PieceReport {
                    generator: p.generator,
                    quaternion: p.rotation.as_ref().map(|r| r.quaternion()),
                    word: p
                        .rotation
                        .as_ref()
                        .and_then(|r| r.word().map(|w| w.to_vec())),
                    cells: p.part_a.cell_count() as u64,
                    measure_a: p.part_a.measure(),
                    measure_b: p.part_b.measure(),
                    distortion: p.distortion,
                    runs_a: p.part_a.mask().to_runs(),
                    runs_b: p.part_b.mask().to_runs(),
                })
                .collect(),
            residual_a_runs: d.residual_a.mask().to_runs(),
            residual_b_runs: d.residual_b.mask().to_runs(),
            residual_a_measure: d.residual_a.measure(),
            residual_b_measure: d.residual_b.measure(),
            provenance,
        }
    }

    /// Rebuilds the in-memory decomposition (rotations are restored from the
    /// quaternions when present).
    pub fn into_decomposition(self) -> Result<PieceDecomposition, DecompositionError> {
        let universe = self.universe;
        let n = universe.n_cells();
        let pieces = self
            .pieces
            .into_iter()
            .map(|p| {
                let rotation = match p.quaternion {
                    Some(q) => {
                        let mut r = Rotation::from_quaternion(q[0], q[1], q[2], q[3])
                            .map_err(|e| DecompositionError::MalformedReport(e.to_string()))?;
                        if let Some(w) = p.word {
                            r = r.with_word(w);
                        }
                        Some(r)
                    }
                    None => None,
                };
                Ok(Piece {
                    generator: p.generator,
                    rotation,
                    part_a: MeasurableSet::from_mask(
                        universe,
                        crate::sphere::BitMask::from_runs(n, &p.runs_a),
                    ),
                    part_b: MeasurableSet::from_mask(
                        universe,
                        crate::sphere::BitMask::from_runs(n, &p.runs_b),
                    ),
                    distortion: p.distortion,
                })
            })
            .collect::<Result<Vec<_>, DecompositionError>>()?;
        Ok(PieceDecomposition {
            mode: self.mode,
            universe,
            pieces,
            residual_a: MeasurableSet::from_mask(
                universe,
                crate::sphere::BitMask::from_runs(n, &self.residual_a_runs),
            ),
            residual_b: MeasurableSet::from_mask(
                universe,
                crate::sphere::BitMask::from_runs(n, &self.residual_b_runs),
            ),
        })
    }
}

/// Writes the decomposition report to a JSON file.
pub fn export_report(
    d: &PieceDecomposition,
    provenance: ReportProvenance,
    path: &std::path::Path,
) -> Result<(), DecompositionError> {
    let report = DecompositionReport::from_decomposition(d, provenance);
    let json = serde_json::to_vec_pretty(&report)
        .map_err(|e| DecompositionError::MalformedReport(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Loads a report back, validating required fields.
pub fn load_report(path: &std::path::Path) -> Result<DecompositionReport, DecompositionError> {
    let bytes = std::fs::read(path)?;
    let report: DecompositionReport = serde_json::from_slice(&bytes)
        .map_err(|e| DecompositionError::MalformedReport(e.to_string()))?;
    if report.version != REPORT_VERSION {
        return Err(DecompositionError::MalformedReport(format!(
            "unsupported report version {}",
            report.version
        )));
    }
    Ok(report)
}
