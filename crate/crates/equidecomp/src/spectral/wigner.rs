//! Wigner D-matrices: the unitary action of a rotation on the degree-ℓ
//! spherical harmonics, computed from z-y-z Euler angles.
//!
//! Conventions, fixed once for the whole crate:
//! * Euler decomposition `R = Rz(α) · Ry(β) · Rz(γ)` (active rotations).
//! * `D^ℓ_{m'm}(α,β,γ) = e^{-i m' α} d^ℓ_{m'm}(β) e^{-i m γ}` with the
//!   standard real small-d matrix, rows and columns ordered by increasing `m`
//!   from `-ℓ` to `ℓ`.
//!
//! With these choices `D(R₁ R₂) = D(R₁) · D(R₂)`.

use nalgebra::{Complex, DMatrix};

use crate::rotation::Rotation;

/// z-y-z Euler angles `(α, β, γ)` of a rotation, `β ∈ [0, π]`.
///
/// At the gimbal singularities (`β = 0` or `β = π`) the convention `γ = 0`
/// is used.
pub fn euler_zyz(r: &Rotation) -> (f64, f64, f64) {
    let m = r.matrix();
    let cb = m[2][2].clamp(-1.0, 1.0);
    if cb > 1.0 - 1e-13 {
        // pure z-rotation
        (m[1][0].atan2(m[0][0]), 0.0, 0.0)
    } else if cb < -1.0 + 1e-13 {
        ((-m[1][0]).atan2(m[1][1]), std::f64::consts::PI, 0.0)
    } else {
        let alpha = m[1][2].atan2(m[0][2]);
        let gamma = m[2][1].atan2(-m[2][0]);
        (alpha, cb.acos(), gamma)
    }
}

fn ln_factorials(upto: usize) -> Vec<f64> {
    let mut lf = vec![0.0; upto + 1];
    for i in 1..=upto {
        lf[i] = lf[i - 1] + (i as f64).ln();
    }
    lf
}

/// The real Wigner small-d matrix element `d^ℓ_{m'm}(β)` by the explicit sum
/// formula, with log-factorials for stability at moderate ℓ.
pub fn small_d(l: i64, mp: i64, m: i64, beta: f64, lf: &[f64]) -> f64 {
    let (c, s) = ((beta / 2.0).cos(), (beta / 2.0).sin());
    let prefactor = 0.5
        * (lf[(l + mp) as usize] + lf[(l - mp) as usize] + lf[(l + m) as usize]
            + lf[(l - m) as usize]);
    let s_min = 0.max(m - mp);
    let s_max = (l + m).min(l - mp);
    let mut sum = 0.0;
    for k in s_min..=s_max {
        let ln_denom = lf[(l + m - k) as usize]
            + lf[k as usize]
            + lf[(mp - m + k) as usize]
            + lf[(l - mp - k) as usize];
        let mag = (prefactor - ln_denom).exp()
            * c.powi((2 * l + m - mp - 2 * k) as i32)
            * s.powi((mp - m + 2 * k) as i32);
        if (mp - m + k) % 2 == 0 {
            sum += mag;
        } else {
            sum -= mag;
        }
    }
    sum
}

/// Full `(2ℓ+1) × (2ℓ+1)` Wigner D-matrix for the given Euler angles.
pub fn d_matrix(l: u32, alpha: f64, beta: f64, gamma: f64) -> DMatrix<Complex<f64>> {
    let li = l as i64;
    let dim = (2 * l + 1) as usize;
    let lf = ln_factorials(2 * l as usize);
    let mut out = DMatrix::zeros(dim, dim);
    for (row, mp) in (-li..=li).enumerate() {
        let pa = Complex::from_polar(1.0, -(mp as f64) * alpha);
        for (col, m) in (-li..=li).enumerate() {
            let pg = Complex::from_polar(1.0, -(m as f64) * gamma);
            out[(row, col)] = pa * pg * small_d(li, mp, m, beta, &lf);
        }
    }
    out
}
