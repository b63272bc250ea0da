//! Shared test oracles, independent of the library's implementation paths.
#![allow(dead_code)] // each test target uses a different subset

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use std::collections::BTreeSet;
use viewalign::geometry::RotationCandidate;
use viewalign::model::PredictionMatrix;

/// Deterministic golden-angle spiral of unit vectors.
pub fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let theta = golden * i as f64;
            Vector3::new(r * theta.cos(), r * theta.sin(), z)
        })
        .collect()
}

/// Nearest-vertex correspondence of a rotated vertex set, if it is a
/// bijection within the snap tolerance.
fn snap_correspondence(
    verts: &[Vector3<f64>],
    rot: &Matrix3<f64>,
    tol: f64,
) -> Option<Vec<usize>> {
    let mut used = vec![false; verts.len()];
    let mut perm = Vec::with_capacity(verts.len());
    for v in verts {
        let r = rot * v;
        let (j, d) = verts
            .iter()
            .enumerate()
            .map(|(j, w)| (j, (r - w).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        if d > tol || used[j] {
            return None;
        }
        used[j] = true;
        perm.push(j);
    }
    Some(perm)
}

/// Orthogonal Procrustes: rotation best mapping `verts[i]` onto
/// `verts[perm[i]]`, constrained to determinant +1.
fn procrustes(verts: &[Vector3<f64>], perm: &[usize]) -> Matrix3<f64> {
    let mut h = Matrix3::zeros();
    for (i, &j) in perm.iter().enumerate() {
        h += verts[j] * verts[i].transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("svd with u");
    let v_t = svd.v_t.expect("svd with v_t");
    let d = (u * v_t).determinant().signum();
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t
}

/// Brute-force search for every rotation mapping the vertex set onto itself:
/// coarse axis-angle sampling, nearest-vertex matching, Procrustes
/// refinement, strict verification. Returns the distinct vertex permutations.
pub fn rotation_search_oracle(verts: &[Vector3<f64>]) -> BTreeSet<Vec<usize>> {
    let mut found = BTreeSet::new();
    // identity is a rotation too
    found.insert((0..verts.len()).collect::<Vec<usize>>());
    let snap_tol = 0.36; // half the minimum vertex chord distance
    for axis in fibonacci_sphere(600) {
        let unit_axis = Unit::new_normalize(axis);
        for step in 1..40 {
            let angle = (step as f64) * 9.0_f64.to_radians();
            let coarse = Rotation3::from_axis_angle(&unit_axis, angle).into_inner();
            let Some(perm) = snap_correspondence(verts, &coarse, snap_tol) else {
                continue;
            };
            if found.contains(&perm) {
                continue;
            }
            let refined = procrustes(verts, &perm);
            let exact = perm
                .iter()
                .enumerate()
                .all(|(i, &j)| (refined * verts[i] - verts[j]).norm() < 1e-9);
            if exact && (refined.determinant() - 1.0).abs() < 1e-9 {
                found.insert(perm);
            }
        }
    }
    found
}

/// Longhand evaluation of the full joint objective for one candidate: the
/// class term on the assigned row plus incorrect-view terms on all other rows,
/// summed over images. Written independently of the library's scorer.
pub fn full_objective_longhand(
    stacks: &[PredictionMatrix],
    candidate: &RotationCandidate,
    y: usize,
) -> f64 {
    let mut total = 0.0;
    for (p, &v) in stacks.iter().zip(&candidate.perm) {
        let incorrect = p.cols() - 1;
        for j in 0..p.rows() {
            let col = if j == v { y } else { incorrect };
            total += p.prob(j, col).ln();
        }
    }
    total
}

/// Random row-stochastic prediction stack: M matrices of M x (N+1).
pub fn random_stack(seed: u64, m: usize, n: usize) -> Vec<PredictionMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|_| {
            let mut v = Array2::from_shape_fn((m, n + 1), |_| rng.random_range(0.02..1.0));
            for mut row in v.rows_mut() {
                let s: f64 = row.sum();
                row.mapv_inplace(|x| x / s);
            }
            PredictionMatrix::from_values(v)
        })
        .collect()
}

/// All ids attaining the maximum of `scores` under exact comparison.
pub fn argmax_set(scores: &[f64]) -> Vec<usize> {
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == best)
        .map(|(i, _)| i)
        .collect()
}
