//! Independent oracles shared by the integration tests. Everything here
//! recomputes results through routes disjoint from the library's own
//! implementations: plain-adjacency matching algorithms, exhaustive
//! alternating-path enumeration, and spherical-harmonic quadrature.

#![allow(dead_code)]

use equidecomp::graph::BipartiteGraph;
use equidecomp::matching::Matching;
use equidecomp::rotation::{Rotation, RotationSet};

/// Plain adjacency lists of a graph, for oracle consumption.
pub fn plain_adjacency(g: &BipartiteGraph) -> Vec<Vec<u32>> {
    (0..g.n_left())
        .map(|l| g.edges_of(l).map(|(_, r)| r).collect())
        .collect()
}

/// Matching as plain option arrays.
pub fn plain_matching(g: &BipartiteGraph, m: &Matching) -> (Vec<Option<u32>>, Vec<Option<u32>>) {
    let left: Vec<Option<u32>> = (0..g.n_left()).map(|l| m.left_pair(l).map(|(_, r)| r)).collect();
    let mut right = vec![None; g.n_right()];
    for (l, p) in left.iter().enumerate() {
        if let Some(r) = p {
            right[*r as usize] = Some(l as u32);
        }
    }
    (left, right)
}

/// Kuhn's augmenting-path maximum matching, iterative, on plain adjacency.
pub fn kuhn_maximum_matching(n_right: usize, adj: &[Vec<u32>]) -> usize {
    let n_left = adj.len();
    let mut match_l: Vec<u32> = vec![u32::MAX; n_left];
    let mut match_r: Vec<u32> = vec![u32::MAX; n_right];
    let mut visited = vec![u64::MAX; n_right];
    for root in 0..n_left {
        let epoch = root as u64;
        // stack frames: (left, cursor); trying[j] = right tried by frame j
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        let mut trying: Vec<u32> = Vec::new();
        'search: while let Some(&(l, cur)) = stack.last() {
            let mut cursor = cur;
            let mut advanced = false;
            while cursor < adj[l].len() {
                let r = adj[l][cursor];
                cursor += 1;
                if visited[r as usize] == epoch {
                    continue;
                }
                visited[r as usize] = epoch;
                let owner = match_r[r as usize];
                if owner == u32::MAX {
                    // augment along the stack
                    stack.last_mut().unwrap().1 = cursor;
                    trying.push(r);
                    for (frame, &tr) in stack.iter().zip(&trying) {
                        match_l[frame.0] = tr;
                        match_r[tr as usize] = frame.0 as u32;
                    }
                    break 'search;
                }
                stack.last_mut().unwrap().1 = cursor;
                trying.push(r);
                stack.push((owner as usize, 0));
                advanced = true;
                break;
            }
            if !advanced && cursor >= adj[l].len() {
                stack.pop();
                trying.pop();
            }
        }
    }
    match_l.iter().filter(|&&r| r != u32::MAX).count()
}

/// Shortest augmenting path length by an alternating BFS written against
/// plain arrays, independent of the engine's search.
pub fn oracle_shortest_augmenting(
    adj: &[Vec<u32>],
    match_l: &[Option<u32>],
    match_r: &[Option<u32>],
) -> Option<u32> {
    let n_left = adj.len();
    let mut dist = vec![u32::MAX; n_left];
    let mut queue = std::collections::VecDeque::new();
    for (l, m) in match_l.iter().enumerate() {
        if m.is_none() {
            dist[l] = 0;
            queue.push_back(l);
        }
    }
    let mut best: Option<u32> = None;
    while let Some(l) = queue.pop_front() {
        let d = dist[l];
        if let Some(b) = best {
            if 2 * d + 1 >= b {
                continue;
            }
        }
        for &r in &adj[l] {
            match match_r[r as usize] {
                None => {
                    let len = 2 * d + 1;
                    if best.map_or(true, |b| len < b) {
                        best = Some(len);
                    }
                }
                Some(owner) => {
                    if dist[owner as usize] == u32::MAX {
                        dist[owner as usize] = d + 1;
                        queue.push_back(owner as usize);
                    }
                }
            }
        }
    }
    best
}

/// Exhaustive enumeration of alternating paths with distinct vertices:
/// returns, per vertex, the minimal alternating-path length from the
/// unmatched left set reaching it (usize::MAX when unreachable). Exponential;
/// for small instances only.
pub fn enumerate_alternating_levels(
    adj: &[Vec<u32>],
    match_l: &[Option<u32>],
    match_r: &[Option<u32>],
    max_len: usize,
) -> (Vec<usize>, Vec<usize>) {
    let n_left = adj.len();
    let n_right = match_r.len();
    let mut best_left = vec![usize::MAX; n_left];
    let mut best_right = vec![usize::MAX; n_right];

    fn explore(
        l: usize,
        len: usize,
        max_len: usize,
        adj: &[Vec<u32>],
        match_l: &[Option<u32>],
        match_r: &[Option<u32>],
        used_left: &mut Vec<bool>,
        used_right: &mut Vec<bool>,
        best_left: &mut [usize],
        best_right: &mut [usize],
    ) {
        if len < best_left[l] {
            best_left[l] = len;
        }
        if len >= max_len {
            return;
        }
        for &r in &adj[l] {
            if used_right[r as usize] || match_l[l] == Some(r) {
                continue;
            }
            used_right[r as usize] = true;
            if len + 1 < best_right[r as usize] {
                best_right[r as usize] = len + 1;
            }
            if len + 1 < max_len {
                if let Some(owner) = match_r[r as usize] {
                    if !used_left[owner as usize] {
                        used_left[owner as usize] = true;
                        explore(
                            owner as usize,
                            len + 2,
                            max_len,
                            adj,
                            match_l,
                            match_r,
                            used_left,
                            used_right,
                            best_left,
                            best_right,
                        );
                        used_left[owner as usize] = false;
                    }
                }
            }
            used_right[r as usize] = false;
        }
    }

    for root in 0..n_left {
        if match_l[root].is_some() {
            continue;
        }
        let mut used_left = vec![false; n_left];
        let mut used_right = vec![false; n_right];
        used_left[root] = true;
        explore(
            root,
            0,
            max_len,
            adj,
            match_l,
            match_r,
            &mut used_left,
            &mut used_right,
            &mut best_left,
            &mut best_right,
        );
    }
    (best_left, best_right)
}

// ---------------------------------------------------------------------------
// spherical-harmonic quadrature oracle
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct C64 {
    pub re: f64,
    pub im: f64,
}

impl C64 {
    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }
    pub fn zero() -> Self {
        Self::new(0.0, 0.0)
    }
    pub fn conj(self) -> Self {
        Self::new(self.re, -self.im)
    }
    pub fn mul(self, o: C64) -> Self {
        Self::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
    pub fn add(self, o: C64) -> Self {
        Self::new(self.re + o.re, self.im + o.im)
    }
    pub fn scale(self, s: f64) -> Self {
        Self::new(self.re * s, self.im * s)
    }
    pub fn norm(self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Legendre P_n(x) and its derivative by recurrence
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Fully-normalized spherical harmonics `Ỹ_{l,m}(θ, φ)` for all
/// `m = −l..l` at once (orthonormal under ∫ dΩ), Condon–Shortley phase.
/// Index `m + l`.
pub fn spherical_harmonics_row(l: u32, cos_theta: f64, phi: f64) -> Vec<C64> {
    let l = l as i64;
    let x = cos_theta;
    let s = (1.0 - x * x).max(0.0).sqrt();
    // normalized associated Legendre P̃_l^m for m = 0..l
    let mut plm = vec![0.0; (l + 1) as usize];
    // P̃_m^m upward in m, then P̃_l^m upward in l
    let mut pmm = (1.0 / (4.0 * std::f64::consts::PI)).sqrt();
    for m in 0..=l {
        if m > 0 {
            pmm *= -(((2 * m + 1) as f64) / ((2 * m) as f64)).sqrt() * s;
        }
        // l' = m term
        let mut p_prev = pmm; // P̃_m^m
        if m == l {
            plm[m as usize] = p_prev;
            break;
        }
        let mut p_curr = x * ((2 * m + 3) as f64).sqrt() * p_prev; // P̃_{m+1}^m
        if m + 1 == l {
            plm[m as usize] = p_curr;
        }
        for lp in (m + 2)..=l {
            let a = (((4 * lp * lp - 1) as f64) / ((lp * lp - m * m) as f64)).sqrt();
            let b = ((((lp - 1) * (lp - 1) - m * m) as f64)
                / ((4 * (lp - 1) * (lp - 1) - 1) as f64))
                .sqrt();
            let p_next = a * (x * p_curr - b * p_prev);
            p_prev = p_curr;
            p_curr = p_next;
            if lp == l {
                plm[m as usize] = p_curr;
            }
        }
        if l == m {
            plm[m as usize] = p_prev;
        }
    }
    let mut row = vec![C64::zero(); (2 * l + 1) as usize];
    for m in 0..=l {
        let (sin_m, cos_m) = (m as f64 * phi).sin_cos();
        let val = plm[m as usize];
        row[(m + l) as usize] = C64::new(val * cos_m, val * sin_m);
        if m > 0 {
            // Y_{l,−m} = (−1)^m conj(Y_{l,m})
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            row[(l - m) as usize] = C64::new(sign * val * cos_m, -sign * val * sin_m);
        }
    }
    row
}

/// Matrix of the averaging operator on degree-l harmonics by quadrature:
/// `M[m'][m] = (1/|S|) Σ_γ ∫ conj(Ỹ_{l,m'}(x)) Ỹ_{l,m}(γ⁻¹ x) dΩ / ‖·‖`,
/// with a Gauss–Legendre × uniform-φ grid exact for this integrand.
pub fn averaging_block_quadrature(s: &RotationSet, l: u32) -> Vec<Vec<C64>> {
    let dim = (2 * l + 1) as usize;
    let n_theta = (2 * l + 4) as usize;
    let n_phi = (4 * l + 5) as usize;
    let (nodes, weights) = gauss_legendre(n_theta);
    let inverses: Vec<[[f64; 3]; 3]> = s.elements().iter().map(|g| g.inverse().matrix()).collect();
    let mut matrix = vec![vec![C64::zero(); dim]; dim];
    let phi_weight = 2.0 * std::f64::consts::PI / n_phi as f64;
    for (ti, &z) in nodes.iter().enumerate() {
        let sin_t = (1.0 - z * z).max(0.0).sqrt();
        for pj in 0..n_phi {
            let phi = (pj as f64 + 0.5) * 2.0 * std::f64::consts::PI / n_phi as f64;
            let x = [sin_t * phi.cos(), sin_t * phi.sin(), z];
            let y_here = spherical_harmonics_row(l, z, phi);
            // Σ_γ Ỹ(γ⁻¹ x), averaged
            let mut y_avg = vec![C64::zero(); dim];
            for m3 in &inverses {
                let gx = [
                    m3[0][0] * x[0] + m3[0][1] * x[1] + m3[0][2] * x[2],
                    m3[1][0] * x[0] + m3[1][1] * x[1] + m3[1][2] * x[2],
                    m3[2][0] * x[0] + m3[2][1] * x[1] + m3[2][2] * x[2],
                ];
                let gphi = gx[1].atan2(gx[0]);
                let row = spherical_harmonics_row(l, gx[2].clamp(-1.0, 1.0), gphi);
                for (acc, v) in y_avg.iter_mut().zip(row) {
                    *acc = acc.add(v);
                }
            }
            let w = weights[ti] * phi_weight / s.len() as f64;
            for mp in 0..dim {
                let left = y_here[mp].conj().scale(w);
                for m in 0..dim {
                    matrix[mp][m] = matrix[mp][m].add(left.mul(y_avg[m]));
                }
            }
        }
    }
    matrix
}

/// Largest singular value via a cyclic complex Jacobi eigensolver on `M†M`.
pub fn operator_norm_jacobi(matrix: &[Vec<C64>]) -> f64 {
    let n = matrix.len();
    // H = M†M, Hermitian PSD
    let mut h = vec![vec![C64::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = C64::zero();
            for (k, row) in matrix.iter().enumerate() {
                let _ = k;
                acc = acc.add(row[i].conj().mul(row[j]));
            }
            h[i][j] = acc;
        }
    }
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(h[p][q].norm());
            }
        }
        if off < 1e-14 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = h[p][q];
                let r = apq.norm();
                if r < 1e-300 {
                    continue;
                }
                let phase = C64::new(apq.re / r, apq.im / r);
                let tau = (h[p][p].re - h[q][q].re) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // column update H ← H U with U[p][p]=c, U[p][q]=−s·phase,
                // U[q][p]=s·conj(phase), U[q][q]=c
                for k in 0..n {
                    let hkp = h[k][p];
                    let hkq = h[k][q];
                    h[k][p] = hkp.scale(c).add(hkq.mul(phase.conj()).scale(s));
                    h[k][q] = hkq.scale(c).add(hkp.mul(phase).scale(-s));
                }
                // row update H ← U† H
                for k in 0..n {
                    let hpk = h[p][k];
                    let hqk = h[q][k];
                    h[p][k] = hpk.scale(c).add(hqk.mul(phase).scale(s));
                    h[q][k] = hqk.scale(c).add(hpk.mul(phase.conj()).scale(-s));
                }
            }
        }
    }
    let mut max_eig = 0.0f64;
    for i in 0..n {
        max_eig = max_eig.max(h[i][i].re);
    }
    max_eig.max(0.0).sqrt()
}

/// Transport a small cell set by a rotation the slow way (no bitmask union),
/// for the brute-force expansion oracle.
pub fn brute_force_expansion_union(
    s: &RotationSet,
    cells: &[usize],
    partition: &equidecomp::sphere::SpherePartition,
) -> usize {
    let mut image = std::collections::BTreeSet::new();
    for gamma in s.elements() {
        let m = gamma.matrix();
        for &cell in cells {
            let c = partition.center(cell);
            let p = equidecomp::rotation::UnitVector::new(
                m[0][0] * c.x + m[0][1] * c.y + m[0][2] * c.z,
                m[1][0] * c.x + m[1][1] * c.y + m[1][2] * c.z,
                m[2][0] * c.x + m[2][1] * c.y + m[2][2] * c.z,
            )
            .unwrap();
            image.insert(partition.locate(&p));
        }
    }
    image.len()
}

/// The preset generator triple symmetrized, used across the oracle tests.
pub fn preset_symmetric() -> RotationSet {
    equidecomp::rotation::symmetrize(&equidecomp::rotation::preset("arccos35").unwrap())
}

/// A deterministic pseudo-random rotation for oracle tests.
pub fn seeded_rotation(seed: u64) -> Rotation {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    loop {
        let q: [f64; 4] = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        if q.iter().map(|v| v * v).sum::<f64>() > 0.01 {
            return Rotation::from_quaternion(q[0], q[1], q[2], q[3]).unwrap();
        }
    }
}
