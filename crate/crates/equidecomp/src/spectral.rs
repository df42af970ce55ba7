//! Spectral-gap estimation for rotation averaging operators and the
//! expansion property check.
//!
//! The averaging operator over a rotation set acts block-diagonally on
//! spherical harmonics; per degree ℓ the block is the average of Wigner
//! D-matrices. The reported gap is a certificate over the truncated harmonic
//! range ℓ ≤ `max_degree` only, and is cross-validated by a Monte Carlo power
//! iteration on discretized cell functions.

pub mod wigner;

use nalgebra::{Complex, DMatrix};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rotation::{word_ball, Rotation, RotationError, RotationSet, UnitVector};
use crate::sphere::{transport, MeasurableSet, SpherePartition};

/// Maximum number of matrix entries a representation block may hold.
pub const MATRIX_BUDGET: usize = 1 << 22;

/// Partition resolution used internally by [`find_expander_set`].
pub const FIND_EXPANDER_CELLS: usize = 100_000;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("degree {degree} overflows the matrix budget of {budget} entries")]
    DegreeOverflow { degree: u32, budget: usize },
    #[error("rotation set is empty")]
    EmptySet,
    #[error("max_degree must be at least 1")]
    BadMaxDegree,
    #[error("no word-length ball up to {max_word_length} passed the expansion trials")]
    NotFound { max_word_length: usize },
    #[error(transparent)]
    Rotation(#[from] RotationError),
}

/// The operator restricted to the degree-ℓ spherical harmonics: a
/// `(2ℓ+1) × (2ℓ+1)` complex matrix.
#[derive(Debug, Clone)]
pub struct DegreeBlock {
    pub degree: u32,
    pub matrix: DMatrix<Complex<f64>>,
}

impl DegreeBlock {
    pub fn dim(&self) -> usize {
        (2 * self.degree + 1) as usize
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> f64 {
        self.matrix.clone().svd(false, false).singular_values.max()
    }

    /// Max entry-wise deviation from the adjoint; 0 for Hermitian blocks.
    pub fn hermitian_defect(&self) -> f64 {
        let adj = self.matrix.adjoint();
        (&self.matrix - adj)
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// Max entry-wise deviation of `U*U` from the identity.
    pub fn unitary_defect(&self) -> f64 {
        let dim = self.matrix.nrows();
        let prod = self.matrix.adjoint() * &self.matrix;
        let eye = DMatrix::<Complex<f64>>::identity(dim, dim);
        (prod - eye).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

/// Unitary matrix of a rotation acting on degree-ℓ spherical harmonics.
pub fn representation_block(r: &Rotation, degree: u32) -> Result<DegreeBlock, SpectralError> {
    let dim = (2 * degree + 1) as usize;
    if dim * dim > MATRIX_BUDGET {
        return Err(SpectralError::DegreeOverflow {
            degree,
            budget: MATRIX_BUDGET,
        });
    }
    let (alpha, beta, gamma) = wigner::euler_zyz(r);
    Ok(DegreeBlock {
        degree,
        matrix: wigner::d_matrix(degree, alpha, beta, gamma),
    })
}

/// The degree-ℓ block of the averaging operator:
/// `(1/|S|) Σ_{γ∈S} representation_block(γ, ℓ)`.
pub fn averaging_block(s: &RotationSet, degree: u32) -> Result<DegreeBlock, SpectralError> {
    if s.is_empty() {
        return Err(SpectralError::EmptySet);
    }
    let dim = (2 * degree + 1) as usize;
    let mut sum = DMatrix::<Complex<f64>>::zeros(dim, dim);
    for gamma in s.elements() {
        sum += representation_block(gamma, degree)?.matrix;
    }
    sum /= Complex::new(s.len() as f64, 0.0);
    Ok(DegreeBlock {
        degree,
        matrix: sum,
    })
}

/// Per-degree operator norms and the derived spectral-gap lower bound.
///
/// The bound certifies `‖Tf‖ ≤ (1 − gap)‖f‖` only for mean-zero `f` supported
/// on harmonics of degree at most `max_degree`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapReport {
    pub max_degree: u32,
    pub gap_lower_bound: f64,
    pub per_degree: Vec<DegreeNorm>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DegreeNorm {
    pub l: u32,
    pub norm: f64,
}

impl GapReport {
    pub fn max_norm(&self) -> f64 {
        self.per_degree.iter().map(|d| d.norm).fold(0.0, f64::max)
    }
}

/// Computes the per-degree norms for ℓ = 1..max_degree and the gap
/// `1 − max norm`. Degree 0 (the constants) is evaluated as a sanity check
/// and excluded from the gap.
pub fn estimate_gap(s: &RotationSet, max_degree: u32) -> Result<GapReport, SpectralError> {
    if max_degree < 1 {
        return Err(SpectralError::BadMaxDegree);
    }
    let zero_norm = averaging_block(s, 0)?.operator_norm();
    debug_assert!((zero_norm - 1.0).abs() < 1e-9, "degree-0 norm must be 1");
    let mut per_degree = Vec::with_capacity(max_degree as usize);
    for l in 1..=max_degree {
        let norm = averaging_block(s, l)?.operator_norm();
        debug_assert!(norm <= 1.0 + 1e-8);
        per_degree.push(DegreeNorm { l, norm });
    }
    let gap_lower_bound = 1.0 - per_degree.iter().map(|d| d.norm).fold(0.0, f64::max);
    Ok(GapReport {
        max_degree,
        gap_lower_bound,
        per_degree,
    })
}

/// Monte Carlo cross-estimate of `‖T‖` on mean-zero cell functions.
///
/// Draws `samples` uniform points, builds the sampled nearest-cell transport
/// operator, and runs power iteration with mean projection after every step.
/// Deterministic given the seed.
pub fn monte_carlo_gap(
    s: &RotationSet,
    partition: &SpherePartition,
    samples: usize,
    iterations: usize,
    seed: u64,
) -> f64 {
    assert!(!s.is_empty(), "rotation set must be non-empty");
    assert!(iterations >= 1);
    let n = partition.n_cells();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // sampled operator: per (sample, γ) one (src, dst) transition
    let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(samples * s.len());
    for _ in 0..samples {
        let p: [f64; 3] = UnitSphere.sample(&mut rng);
        let x = UnitVector {
            x: p[0],
            y: p[1],
            z: p[2],
        };
        let src = partition.locate(&x) as u32;
        for gamma in s.elements() {
            let dst = partition.locate(&gamma.apply(&x)) as u32;
            pairs.push((src, dst));
        }
    }
    let mut weight = vec![0u32; n];
    for &(src, _) in &pairs {
        weight[src as usize] += 1;
    }

    let apply = |v: &[f64]| -> Vec<f64> {
        let mut w = vec![0.0; n];
        for &(src, dst) in &pairs {
            w[src as usize] += v[dst as usize];
        }
        for (wi, &cnt) in w.iter_mut().zip(&weight) {
            if cnt > 0 {
                *wi /= cnt as f64;
            }
        }
        w
    };
    let project_mean = |v: &mut [f64]| {
        let mean = v.iter().sum::<f64>() / n as f64;
        for x in v.iter_mut() {
            *x -= mean;
        }
    };
    let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();

    let mut v: Vec<f64> = (0..n)
        .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    project_mean(&mut v);
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let nv = norm2(&v);
        if nv < 1e-300 {
            return 0.0;
        }
        for x in v.iter_mut() {
            *x /= nv;
        }
        let mut w = apply(&v);
        project_mean(&mut w);
        estimate = norm2(&w);
        v = w;
    }
    estimate
}

/// Checks the expansion inequality
/// `μ(∪_{γ∈S} γ(U)) ≥ min(1−η, μ(U)/η)` by cell transport, with one cell of
/// discretization slack. Returns `(ok, achieved, required)`.
pub fn expansion_check(
    s: &RotationSet,
    eta: f64,
    u: &MeasurableSet,
    partition: &SpherePartition,
) -> (bool, f64, f64) {
    assert!(eta > 0.0 && eta < 1.0, "eta must be in (0, 1)");
    let mut union = partition.empty_set();
    for gamma in s.elements() {
        let (image, _) = transport(gamma, u, partition).expect("set matches partition");
        union = union.union(&image).expect("same partition");
    }
    let achieved = union.measure();
    let required = (1.0 - eta).min(u.measure() / eta);
    let ok = achieved >= required - partition.cell_area();
    (ok, achieved, required)
}

/// Searches for the smallest word-length ball over the generators that passes
/// [`expansion_check`] on `trials` random spherical caps. Deterministic given
/// the seed; the trial caps are fixed up front and reused for every ball.
///
/// Trial caps stay in the sub-crossover regime `μ(U) ≤ η²`, where the
/// required bound is `μ(U)/η` — the regime exercised by the matching
/// machinery. Their size is floored so that an inert set (the identity alone)
/// can never pass on slack.
pub fn find_expander_set(
    generators: &RotationSet,
    eta: f64,
    max_word_length: usize,
    trials: usize,
    seed: u64,
) -> Result<RotationSet, SpectralError> {
    assert!(eta > 0.0 && eta < 1.0, "eta must be in (0, 1)");
    generators.check_symmetric(crate::rotation::ROTATION_EQ_TOL)?;
    let partition = SpherePartition::new(FIND_EXPANDER_CELLS);
    let cell = partition.cell_area();

    let min_measure = (2.0 / (1.0 / eta - 1.0) * cell).max(8.0 * cell);
    let max_measure = (eta * eta).max(min_measure);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let caps: Vec<MeasurableSet> = (0..trials)
        .map(|_| {
            let p: [f64; 3] = UnitSphere.sample(&mut rng);
            let center = UnitVector {
                x: p[0],
                y: p[1],
                z: p[2],
            };
            let t: f64 = rng.gen_range(0.0..1.0);
            let mu = min_measure + t * t * (max_measure - min_measure);
            partition.cap_of_measure(center, mu)
        })
        .collect();

    for m in 1..=max_word_length {
        let ball = word_ball(generators, m);
        let all_pass = caps
            .iter()
            .all(|cap| expansion_check(&ball, eta, cap, &partition).0);
        if all_pass {
            return Ok(ball);
        }
    }
    Err(SpectralError::NotFound { max_word_length })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::{preset, symmetrize};

    fn random_rotation(seed: u64) -> Rotation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Rotation::from_quaternion(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .unwrap()
    }

    #[test]
    fn identity_block_is_identity_matrix() {
        for l in [0u32, 1, 5, 12] {
            let block = representation_block(&Rotation::identity(), l).unwrap();
            let dim = block.dim();
            let eye = DMatrix::<Complex<f64>>::identity(dim, dim);
            let defect = (&block.matrix - eye).iter().map(|c| c.norm()).fold(0.0, f64::max);
            assert!(defect < 1e-14);
        }
    }

    #[test]
    fn blocks_are_unitary() {
        for (i, l) in [1u32, 2, 5, 10, 20].iter().enumerate() {
            let r = random_rotation(100 + i as u64);
            let block = representation_block(&r, *l).unwrap();
            assert!(
                block.unitary_defect() < 1e-8,
                "unitary defect at l={}: {}",
                l,
                block.unitary_defect()
            );
        }
    }

    #[test]
    fn blocks_are_homomorphic() {
        // oracle: compose first, then represent
        for trial in 0..25 {
            let a = random_rotation(200 + trial);
            let b = random_rotation(300 + trial);
            let l = 1 + (trial % 8) as u32;
            let ab = representation_block(&a.compose(&b), l).unwrap().matrix;
            let product = representation_block(&a, l).unwrap().matrix
                * representation_block(&b, l).unwrap().matrix;
            let defect = (ab - product).iter().map(|c| c.norm()).fold(0.0, f64::max);
            assert!(defect < 1e-7, "homomorphism defect at l={}: {}", l, defect);
        }
    }

    #[test]
    fn degree_overflow_detected() {
        let r = Rotation::identity();
        assert!(matches!(
            representation_block(&r, 1_200),
            Err(SpectralError::DegreeOverflow { .. })
        ));
    }

    #[test]
    fn averaging_identity_set_has_norm_one() {
        let s = RotationSet::from_rotations(vec![Rotation::identity()]);
        for l in [1u32, 3, 7] {
            let block = averaging_block(&s, l).unwrap();
            assert!((block.operator_norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn averaging_symmetric_set_is_hermitian() {
        let s = symmetrize(&preset("arccos35").unwrap());
        for l in [1u32, 2, 6, 11] {
            let block = averaging_block(&s, l).unwrap();
            assert!(block.hermitian_defect() < 1e-8);
        }
    }

    #[test]
    fn averaging_norm_never_exceeds_one() {
        for trial in 0..10 {
            let s = RotationSet::from_rotations(vec![
                random_rotation(400 + trial),
                random_rotation(500 + trial),
                random_rotation(600 + trial),
            ]);
            for l in [1u32, 4, 9] {
                let norm = averaging_block(&s, l).unwrap().operator_norm();
                assert!(norm <= 1.0 + 1e-8, "norm {} exceeds 1", norm);
            }
        }
    }

    #[test]
    fn empty_set_rejected() {
        let s = RotationSet::from_rotations(vec![]);
        assert!(matches!(
            averaging_block(&s, 1),
            Err(SpectralError::EmptySet)
        ));
        assert!(matches!(estimate_gap(&s, 0), Err(SpectralError::BadMaxDegree)));
    }

    #[test]
    fn identity_set_has_zero_gap() {
        let s = RotationSet::from_rotations(vec![Rotation::identity()]);
        let report = estimate_gap(&s, 6).unwrap();
        for d in &report.per_degree {
            assert!((d.norm - 1.0).abs() < 1e-12);
        }
        assert!(report.gap_lower_bound.abs() < 1e-12);
    }

    #[test]
    fn abelian_z_axis_set_has_zero_gap() {
        // the invariant axis vector survives at ℓ = 1, so SO(2) has no gap
        let s = symmetrize(&RotationSet::from_rotations(vec![Rotation::from_axis_angle(
            UnitVector::Z,
            (3.0f64 / 5.0).acos(),
        )]));
        let report = estimate_gap(&s, 3).unwrap();
        assert!((report.per_degree[0].norm - 1.0).abs() < 1e-10);
        assert!(report.gap_lower_bound.abs() < 1e-10);
    }

    #[test]
    fn gap_lower_bound_is_monotone_in_max_degree() {
        let s = symmetrize(&preset("arccos35").unwrap());
        let mut last = f64::INFINITY;
        for max_degree in [1u32, 2, 4, 8] {
            let report = estimate_gap(&s, max_degree).unwrap();
            assert!(report.gap_lower_bound <= last + 1e-15);
            last = report.gap_lower_bound;
        }
    }

    #[test]
    fn preset_degree_one_norm_is_eleven_fifteenths() {
        // analytic: each axis pair averages to diag(1, cosθ, cosθ); the three
        // axes sum to ((1 + 2cosθ)/3)·I with cosθ = 3/5.
        let s = symmetrize(&preset("arccos35").unwrap());
        let norm = averaging_block(&s, 1).unwrap().operator_norm();
        assert!((norm - 11.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_identity_estimates_one() {
        let s = RotationSet::from_rotations(vec![Rotation::identity()]);
        let partition = SpherePartition::new(2_000);
        let est = monte_carlo_gap(&s, &partition, 20_000, 30, 7);
        assert!((est - 1.0).abs() < 0.01, "estimate {}", est);
    }

    #[test]
    fn expansion_trivial_cases() {
        let partition = SpherePartition::new(2_000);
        let s = symmetrize(&preset("arccos35").unwrap());
        let (ok, achieved, required) = expansion_check(&s, 0.3, &partition.empty_set(), &partition);
        assert!(ok);
        assert_eq!(achieved, 0.0);
        assert_eq!(required, 0.0);
        let (ok, achieved, required) =
            expansion_check(&s, 0.3, &partition.full_set(), &partition);
        assert!(ok);
        assert!((achieved - 1.0).abs() < 1e-12);
        assert!((required - 0.7).abs() < 1e-12);
    }

    #[test]
    fn find_expander_weak_demand_needs_single_word() {
        let gens = symmetrize(&preset("arccos35").unwrap());
        let s = find_expander_set(&gens, 0.9, 3, 16, 42).unwrap();
        assert_eq!(s.len(), 7); // identity + six generators
    }

    #[test]
    fn find_expander_identity_generators_fail() {
        let gens = symmetrize(&RotationSet::from_rotations(vec![Rotation::identity()]));
        assert!(matches!(
            find_expander_set(&gens, 0.5, 3, 8, 1),
            Err(SpectralError::NotFound { .. })
        ));
    }

    #[test]
    fn find_expander_result_passes_fresh_seed() {
        let gens = symmetrize(&preset("arccos35").unwrap());
        let s = find_expander_set(&gens, 0.8, 3, 8, 5).unwrap();
        let partition = SpherePartition::new(20_000);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..8 {
            let p: [f64; 3] = UnitSphere.sample(&mut rng);
            let center = UnitVector {
                x: p[0],
                y: p[1],
                z: p[2],
            };
            let cap = partition.cap_of_measure(center, rng.gen_range(0.005..0.5));
            let (ok, achieved, required) = expansion_check(&s, 0.8, &cap, &partition);
            assert!(ok, "achieved {} < required {}", achieved, required);
        }
    }
}
