//! Quadrature oracle for the averaging-operator blocks: matrix elements by
//! Gauss–Legendre quadrature against directly evaluated spherical harmonics,
//! and operator norms by a complex Jacobi eigensolver — both independent of
//! the Euler-angle recursion the library uses.

mod common;

use common::{averaging_block_quadrature, operator_norm_jacobi, preset_symmetric, C64};
use equidecomp::rotation::{symmetrize, Rotation, RotationSet, UnitVector};
use equidecomp::spectral::{averaging_block, estimate_gap, expansion_check, monte_carlo_gap};
use equidecomp::sphere::SpherePartition;

#[test]
fn quadrature_identity_set_gives_identity_matrix() {
    let s = RotationSet::from_rotations(vec![Rotation::identity()]);
    for l in [1u32, 3, 6] {
        let m = averaging_block_quadrature(&s, l);
        let dim = (2 * l + 1) as usize;
        for i in 0..dim {
            for j in 0..dim {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (m[i][j].re - expect).abs() < 1e-11 && m[i][j].im.abs() < 1e-11,
                    "l={} entry ({},{}) = ({}, {})",
                    l,
                    i,
                    j,
                    m[i][j].re,
                    m[i][j].im
                );
            }
        }
    }
}

#[test]
fn blocks_match_quadrature_oracle_entrywise() {
    let sets: Vec<RotationSet> = vec![
        preset_symmetric(),
        symmetrize(&RotationSet::from_rotations(vec![
            common::seeded_rotation(2024),
            common::seeded_rotation(2025),
        ])),
        RotationSet::from_rotations(vec![
            common::seeded_rotation(31),
            common::seeded_rotation(37),
            common::seeded_rotation(41),
        ]),
    ];
    for s in &sets {
        for l in 1..=6u32 {
            let oracle = averaging_block_quadrature(s, l);
            let block = averaging_block(s, l).unwrap();
            let dim = (2 * l + 1) as usize;
            let mut worst = 0.0f64;
            for i in 0..dim {
                for j in 0..dim {
                    let got = block.matrix[(i, j)];
                    let want = oracle[i][j];
                    worst = worst
                        .max((got.re - want.re).abs())
                        .max((got.im - want.im).abs());
                }
            }
            assert!(
                worst < 1e-9,
                "entrywise defect {} at l = {} for |S| = {}",
                worst,
                l,
                s.len()
            );
        }
    }
}

#[test]
fn norms_match_jacobi_oracle_at_high_degree() {
    let s = preset_symmetric();
    for l in [10u32, 15, 20] {
        let oracle_norm = operator_norm_jacobi(&averaging_block_quadrature(&s, l));
        let impl_norm = averaging_block(&s, l).unwrap().operator_norm();
        assert!(
            (oracle_norm - impl_norm).abs() < 1e-8,
            "l = {}: oracle {} vs implementation {}",
            l,
            oracle_norm,
            impl_norm
        );
    }
}

#[test]
fn jacobi_norm_agrees_on_single_rotation_blocks() {
    // unitary blocks: every singular value is 1
    for seed in [7u64, 8, 9] {
        let r = RotationSet::from_rotations(vec![common::seeded_rotation(seed)]);
        let m = averaging_block_quadrature(&r, 4);
        let norm = operator_norm_jacobi(&m);
        assert!((norm - 1.0).abs() < 1e-9, "norm {}", norm);
    }
}

/// Frozen pass/fail table for the expansion check on small seeded caps under
/// preset word balls, verified against a brute-force transport oracle.
///
/// The table was produced by the `frozen_expansion_table` regenerator below
/// (run with `--ignored --nocapture`) and hand-copied here.
#[test]
fn expansion_check_matches_brute_force_and_frozen_table() {
    use equidecomp::rotation::word_ball;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_distr::{Distribution, UnitSphere};

    let eta = 0.05;
    let partition = SpherePartition::new(20_000);
    let gens = preset_symmetric();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2718);
    let caps: Vec<_> = (0..12)
        .map(|_| {
            let p: [f64; 3] = UnitSphere.sample(&mut rng);
            let center = UnitVector::new(p[0], p[1], p[2]).unwrap();
            let mu: f64 = rng.gen_range(0.2..1.0) * eta * eta;
            partition.cap_of_measure(center, mu)
        })
        .collect();

    const FROZEN: [[bool; 12]; 3] = [
        [
            false, false, false, false, false, false, false, false, false, false, false, false,
        ],
        [
            true, true, true, true, false, true, true, true, true, true, false, true,
        ],
        [
            true, true, true, true, true, true, true, true, true, true, true, true,
        ],
    ];

    for (mi, m) in [1usize, 2, 3].iter().enumerate() {
        let ball = word_ball(&gens, *m);
        for (ci, cap) in caps.iter().enumerate() {
            let (ok, achieved, required) = expansion_check(&ball, eta, cap, &partition);
            // brute-force union oracle agrees exactly on the achieved measure
            let cells: Vec<usize> = cap.cells().collect();
            let union_cells = common::brute_force_expansion_union(&ball, &cells, &partition);
            assert_eq!(
                achieved,
                union_cells as f64 * partition.cell_area(),
                "union disagrees with brute force at m={} cap={}",
                m,
                ci
            );
            let oracle_ok =
                achieved >= required - partition.cell_area();
            assert_eq!(ok, oracle_ok);
            assert_eq!(
                ok, FROZEN[mi][ci],
                "frozen table mismatch at m = {} cap = {} (achieved {:.6}, required {:.6})",
                m, ci, achieved, required
            );
        }
    }
}

/// Regenerates the frozen expansion table; run with
/// `cargo test -p equidecomp --test spectral_oracle -- --ignored --nocapture`.
#[test]
#[ignore]
fn frozen_expansion_table() {
    use equidecomp::rotation::word_ball;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_distr::{Distribution, UnitSphere};

    let eta = 0.05;
    let partition = SpherePartition::new(20_000);
    let gens = preset_symmetric();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2718);
    let caps: Vec<_> = (0..12)
        .map(|_| {
            let p: [f64; 3] = UnitSphere.sample(&mut rng);
            let center = UnitVector::new(p[0], p[1], p[2]).unwrap();
            let mu: f64 = rng.gen_range(0.2..1.0) * eta * eta;
            partition.cap_of_measure(center, mu)
        })
        .collect();
    for m in [1usize, 2, 3] {
        let ball = word_ball(&gens, m);
        let row: Vec<bool> = caps
            .iter()
            .map(|cap| expansion_check(&ball, eta, cap, &partition).0)
            .collect();
        println!("m = {}: {:?}", m, row);
    }
}

/// Regenerates the frozen per-degree norms used in the acceptance suite,
/// computed entirely through the quadrature + Jacobi oracle.
#[test]
#[ignore]
fn frozen_norm_fixture_regenerator() {
    let s = preset_symmetric();
    println!("quadrature-oracle norms for the symmetrized arccos(3/5) triple:");
    for l in 1..=20u32 {
        let norm = operator_norm_jacobi(&averaging_block_quadrature(&s, l));
        println!("    {:.15e},  // l = {}", norm, l);
    }
}

#[test]
fn monte_carlo_cross_validates_spectral_norms() {
    let s = preset_symmetric();
    let report = estimate_gap(&s, 20).unwrap();
    let max_norm = report.max_norm();
    let partition = SpherePartition::new(10_000);
    let estimate = monte_carlo_gap(&s, &partition, 100_000, 50, 11);
    assert!(
        (estimate - max_norm).abs() < 0.05,
        "mc {} vs spectral {}",
        estimate,
        max_norm
    );
    // doubling the resolution moves the estimate by far less than 0.05
    let partition2 = SpherePartition::new(20_000);
    let estimate2 = monte_carlo_gap(&s, &partition2, 200_000, 50, 11);
    assert!(
        (estimate - estimate2).abs() < 0.05,
        "resolution instability: {} vs {}",
        estimate,
        estimate2
    );
}

#[test]
fn quadrature_oracle_self_check_hermitian() {
    // symmetric set ⇒ Hermitian oracle matrix
    let s = preset_symmetric();
    let m = averaging_block_quadrature(&s, 5);
    let dim = m.len();
    for i in 0..dim {
        for j in 0..dim {
            let a = m[i][j];
            let b = C64::new(m[j][i].re, -m[j][i].im);
            assert!((a.re - b.re).abs() < 1e-11 && (a.im - b.im).abs() < 1e-11);
        }
    }
}
