//! Discrete camera-rig geometry: viewpoint setups, the admissible
//! image-to-viewpoint assignment candidates for each setup, and rotation
//! utilities shared by the rest of the crate.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use thiserror::Error;

/// Unit-norm tolerance on viewpoint positions.
pub const UNIT_TOL: f64 = 1e-12;
/// Tolerance for matching rotated positions onto the viewpoint set.
pub const ANGLE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("theta = {theta} does not divide 360 degrees")]
    ThetaNotDivisor { theta: f64 },
    #[error("phi = {phi} does not divide 180 degrees")]
    PhiNotDivisor { phi: f64 },
    #[error("phi = {phi} is not a valid elevation in [-90, 90]")]
    ElevationOutOfRange { phi: f64 },
    #[error("orientation trial {trial} out of range 1..=11")]
    TrialOutOfRange { trial: usize },
    #[error("matrix is not a proper rotation: {reason}")]
    NotARotation { reason: String },
}

/// The three supported camera-rig layouts.
///
/// * `UprightRing` ("i"): one ring of azimuths at a fixed elevation, upright axis known.
/// * `Dodecahedron` ("ii"): cameras on the 20 vertices of a regular dodecahedron.
/// * `UprightGrid` ("iii"): azimuth ring replicated over several elevation levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SetupCase {
    #[serde(rename = "i")]
    UprightRing,
    #[serde(rename = "ii")]
    Dodecahedron,
    #[serde(rename = "iii")]
    UprightGrid,
}

impl std::fmt::Display for SetupCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SetupCase::UprightRing => "i",
            SetupCase::Dodecahedron => "ii",
            SetupCase::UprightGrid => "iii",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for SetupCase {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" | "ring" => Ok(SetupCase::UprightRing),
            "ii" | "2" | "dodeca" | "dodecahedron" => Ok(SetupCase::Dodecahedron),
            "iii" | "3" | "grid" => Ok(SetupCase::UprightGrid),
            other => Err(format!("unknown setup case '{other}' (expected i, ii or iii)")),
        }
    }
}

/// A concrete camera rig: the discrete viewpoint positions plus the angular
/// parameters they were built from.
///
/// Positions are unit vectors pointing from the object at the origin towards
/// each camera. Canonical ordering is documented per case on [`ViewpointSetup::build`].
#[derive(Debug, Clone)]
pub struct ViewpointSetup {
    pub case: SetupCase,
    /// Azimuth interval in degrees (cases i and iii; 0 for case ii).
    pub theta_deg: f64,
    /// Elevation (case i) or elevation interval (case iii) in degrees; 0 for case ii.
    pub phi_deg: f64,
    /// Number of azimuth steps per ring (cases i/iii; 0 for case ii).
    pub azimuth_count: usize,
    /// Number of elevation levels (1 for case i; 0 for case ii).
    pub elevation_count: usize,
    pub positions: Vec<Vector3<f64>>,
    /// Rigid rotation applied to the whole rig (identity unless swept).
    pub orientation: Matrix3<f64>,
}

/// One admissible global assignment of captured images to viewpoints.
///
/// `perm[i]` is the 0-based viewpoint index assigned to the i-th image, and
/// `rotation` realizes the assignment on the position set:
/// `positions[perm[i]] = rotation * positions[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationCandidate {
    pub id: usize,
    pub perm: Vec<usize>,
    pub rotation: Matrix3<f64>,
}

impl RotationCandidate {
    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, &p)| i == p)
    }

    /// Inverse of `perm` as a permutation array.
    pub fn inverse_perm(&self) -> Vec<usize> {
        let mut inv = vec![0; self.perm.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            inv[p] = i;
        }
        inv
    }
}

/// `result[i] = outer[inner[i]]`: apply `inner` first, then `outer`.
pub fn compose_perms(outer: &[usize], inner: &[usize]) -> Vec<usize> {
    inner.iter().map(|&i| outer[i]).collect()
}

pub fn rotation_x_deg(deg: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::x_axis(), deg.to_radians()).into_inner()
}

pub fn rotation_y_deg(deg: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), deg.to_radians()).into_inner()
}

pub fn rotation_z_deg(deg: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), deg.to_radians()).into_inner()
}

fn exact_divisor(total: f64, step: f64) -> Option<usize> {
    if !(step > 0.0) || !step.is_finite() {
        return None;
    }
    let q = total / step;
    let r = q.round();
    if (q - r).abs() < 1e-9 && r >= 1.0 {
        Some(r as usize)
    } else {
        None
    }
}

fn direction(azimuth_deg: f64, elevation_deg: f64) -> Vector3<f64> {
    let a = azimuth_deg.to_radians();
    let e = elevation_deg.to_radians();
    Vector3::new(e.cos() * a.cos(), e.cos() * a.sin(), e.sin())
}

/// The 20 vertices of a regular dodecahedron, unit-normalized and sorted
/// lexicographically by (x, y, z).
pub fn dodecahedron_vertices() -> Vec<Vector3<f64>> {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let inv = 1.0 / phi;
    let mut verts = Vec::with_capacity(20);
    for &sx in &[-1.0, 1.0] {
        for &sy in &[-1.0, 1.0] {
            for &sz in &[-1.0, 1.0] {
                verts.push(Vector3::new(sx, sy, sz));
            }
        }
    }
    for &s1 in &[-1.0, 1.0] {
        for &s2 in &[-1.0, 1.0] {
            verts.push(Vector3::new(0.0, s1 * inv, s2 * phi));
            verts.push(Vector3::new(s1 * inv, s2 * phi, 0.0));
            verts.push(Vector3::new(s1 * phi, 0.0, s2 * inv));
        }
    }
    let norm = 3.0_f64.sqrt();
    for v in &mut verts {
        *v /= norm;
    }
    verts.sort_by(|a, b| {
        a.x.total_cmp(&b.x)
            .then(a.y.total_cmp(&b.y))
            .then(a.z.total_cmp(&b.z))
    });
    verts
}

impl ViewpointSetup {
    /// Builds a canonical (un-swept) setup.
    ///
    /// Canonical position ordering:
    /// * case i: increasing azimuth `k * theta` at elevation `phi`, k = 0..M-1;
    /// * case ii: dodecahedron vertices sorted lexicographically by coordinates
    ///   (theta and phi are ignored);
    /// * case iii: elevation-major from -90 to +90 in steps of `phi`, azimuth-minor
    ///   within each level. Pole levels repeat the pole position `M_a` times so that
    ///   `M = M_a * M_e` holds uniformly.
    pub fn build(case: SetupCase, theta_deg: f64, phi_deg: f64) -> Result<Self, GeometryError> {
        match case {
            SetupCase::UprightRing => {
                let m_a = exact_divisor(360.0, theta_deg)
                    .ok_or(GeometryError::ThetaNotDivisor { theta: theta_deg })?;
                if !(phi_deg.abs() <= 90.0) {
                    return Err(GeometryError::ElevationOutOfRange { phi: phi_deg });
                }
                let positions = (0..m_a)
                    .map(|k| direction(k as f64 * theta_deg, phi_deg))
                    .collect();
                Ok(ViewpointSetup {
                    case,
                    theta_deg,
                    phi_deg,
                    azimuth_count: m_a,
                    elevation_count: 1,
                    positions,
                    orientation: Matrix3::identity(),
                })
            }
            SetupCase::Dodecahedron => Ok(ViewpointSetup {
                case,
                theta_deg: 0.0,
                phi_deg: 0.0,
                azimuth_count: 0,
                elevation_count: 0,
                positions: dodecahedron_vertices(),
                orientation: Matrix3::identity(),
            }),
            SetupCase::UprightGrid => {
                let m_a = exact_divisor(360.0, theta_deg)
                    .ok_or(GeometryError::ThetaNotDivisor { theta: theta_deg })?;
                let m_e = exact_divisor(180.0, phi_deg)
                    .ok_or(GeometryError::PhiNotDivisor { phi: phi_deg })?
                    + 1;
                let mut positions = Vec::with_capacity(m_a * m_e);
                for e in 0..m_e {
                    let elevation = -90.0 + e as f64 * phi_deg;
                    for a in 0..m_a {
                        positions.push(direction(a as f64 * theta_deg, elevation));
                    }
                }
                Ok(ViewpointSetup {
                    case,
                    theta_deg,
                    phi_deg,
                    azimuth_count: m_a,
                    elevation_count: m_e,
                    positions,
                    orientation: Matrix3::identity(),
                })
            }
        }
    }

    /// Number of viewpoints.
    pub fn view_count(&self) -> usize {
        self.positions.len()
    }

    /// Rig orientation trial for the camera-system sweep.
    ///
    /// Trial 1 is the unrotated rig; trial t >= 2 rotates every position by 36
    /// degrees about the x-axis followed by (t-2) * 36 degrees about the y-axis.
    /// Position indices are preserved.
    pub fn orientation_sweep(&self, trial: usize) -> Result<Self, GeometryError> {
        if !(1..=11).contains(&trial) {
            return Err(GeometryError::TrialOutOfRange { trial });
        }
        if trial == 1 {
            return Ok(self.clone());
        }
        let rot = rotation_y_deg((trial as f64 - 2.0) * 36.0) * rotation_x_deg(36.0);
        let mut swept = self.clone();
        swept.positions = self.positions.iter().map(|p| rot * p).collect();
        swept.orientation = rot * self.orientation;
        Ok(swept)
    }

    /// JSON-exportable view of the setup together with its candidate list.
    /// Permutations are exported 1-based.
    pub fn export(&self, candidates: &[RotationCandidate]) -> SetupExport {
        SetupExport {
            case: self.case.to_string(),
            m: self.view_count(),
            theta: self.theta_deg,
            phi: self.phi_deg,
            positions: self.positions.iter().map(|p| [p.x, p.y, p.z]).collect(),
            candidates: candidates
                .iter()
                .map(|c| c.perm.iter().map(|&v| v + 1).collect())
                .collect(),
        }
    }
}

/// Serialized form of a setup and its candidates: `{case, M, theta, phi, positions, candidates}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetupExport {
    pub case: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub theta: f64,
    pub phi: f64,
    pub positions: Vec<[f64; 3]>,
    pub candidates: Vec<Vec<usize>>,
}

/// Enumerates all admissible assignment candidates for a setup, in a
/// deterministic order (sorted lexicographically by permutation array).
/// Candidate 0 is always the identity assignment.
///
/// Case i yields the M cyclic shifts, case ii the 60 rotational symmetries of
/// the dodecahedron, case iii the `M_a` simultaneous azimuth shifts.
pub fn enumerate_candidates(setup: &ViewpointSetup) -> Vec<RotationCandidate> {
    let q = setup.orientation;
    let qt = q.transpose();
    let mut raw: Vec<(Vec<usize>, Matrix3<f64>)> = match setup.case {
        SetupCase::UprightRing => {
            let m = setup.view_count();
            (0..m)
                .map(|k| {
                    let perm = (0..m).map(|i| (i + k) % m).collect();
                    (perm, rotation_z_deg(k as f64 * setup.theta_deg))
                })
                .collect()
        }
        SetupCase::UprightGrid => {
            let m_a = setup.azimuth_count;
            let m_e = setup.elevation_count;
            (0..m_a)
                .map(|k| {
                    let mut perm = Vec::with_capacity(m_a * m_e);
                    for e in 0..m_e {
                        for a in 0..m_a {
                            perm.push(e * m_a + (a + k) % m_a);
                        }
                    }
                    (perm, rotation_z_deg(k as f64 * setup.theta_deg))
                })
                .collect()
        }
        SetupCase::Dodecahedron => dodecahedron_rotations(),
    };
    raw.sort_by(|a, b| a.0.cmp(&b.0));
    raw.into_iter()
        .enumerate()
        .map(|(id, (perm, rot))| RotationCandidate {
            id,
            perm,
            // Conjugate so the rotation acts on the (possibly swept) rig.
            rotation: q * rot * qt,
        })
        .collect()
}

/// Closure of the dodecahedron's rotation group from three generators,
/// expressed as vertex permutations of the canonical embedding.
fn dodecahedron_rotations() -> Vec<(Vec<usize>, Matrix3<f64>)> {
    let verts = dodecahedron_vertices();
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let generators = [
        rotation_z_deg(180.0),
        // 120 degrees about the (1,1,1) vertex axis: cycles the coordinates.
        Matrix3::new(0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0),
        // 72 degrees about a face-center axis (face centers of this embedding
        // lie along the cyclic permutations of (0, phi, 1)).
        Rotation3::from_axis_angle(
            &Unit::new_normalize(Vector3::new(0.0, phi, 1.0)),
            72.0_f64.to_radians(),
        )
        .into_inner(),
    ];

    let perm_of = |rot: &Matrix3<f64>| -> Vec<usize> {
        verts
            .iter()
            .map(|v| {
                let r = rot * v;
                let (j, d) = verts
                    .iter()
                    .enumerate()
                    .map(|(j, w)| (j, (r - w).norm()))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .expect("vertex list is non-empty");
                assert!(d < ANGLE_TOL, "rotation does not map vertices to vertices");
                j
            })
            .collect()
    };

    let mut seen: BTreeMap<Vec<usize>, Matrix3<f64>> = BTreeMap::new();
    let identity = Matrix3::identity();
    seen.insert(perm_of(&identity), identity);
    let mut queue: VecDeque<Matrix3<f64>> = VecDeque::from([identity]);
    while let Some(rot) = queue.pop_front() {
        for g in &generators {
            let next = g * rot;
            let perm = perm_of(&next);
            if !seen.contains_key(&perm) {
                seen.insert(perm, next);
                queue.push_back(next);
            }
        }
    }
    assert_eq!(seen.len(), 60, "dodecahedron rotation group has order 60");
    seen.into_iter().collect()
}

/// Geodesic distance between two rotations in degrees, in [0, 180].
///
/// Both inputs must be orthogonal with determinant +1.
pub fn angular_error_deg(a: &Matrix3<f64>, b: &Matrix3<f64>) -> Result<f64, GeometryError> {
    for (name, m) in [("first", a), ("second", b)] {
        let gram = m.transpose() * m;
        let defect = (gram - Matrix3::identity()).abs().max();
        if defect > 1e-9 {
            return Err(GeometryError::NotARotation {
                reason: format!("{name} input deviates from orthogonality by {defect:.3e}"),
            });
        }
        let det = m.determinant();
        if (det - 1.0).abs() > 1e-9 {
            return Err(GeometryError::NotARotation {
                reason: format!("{name} input has determinant {det:.6}"),
            });
        }
    }
    let cos = ((a.transpose() * b).trace() - 1.0) / 2.0;
    Ok(cos.clamp(-1.0, 1.0).acos().to_degrees())
}
