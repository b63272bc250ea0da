//! Synthetic multi-view dataset generation.
//!
//! Objects are small compositions of blocks and ellipsoids with azimuthally
//! asymmetric layouts, so that every discrete viewpoint renders differently.
//! Each instance gets bounded per-instance jitter and a hidden pose drawn from
//! the rig's admissible assignment candidates, which makes the dataset
//! "unaligned": capture order alone does not reveal absolute viewpoints.

mod container;
mod render;

pub use container::{load_dataset, save_dataset, DATASET_FORMAT_VERSION};
pub use render::{camera_frame, render_view, Primitive, PrimitiveKind, RenderConfig, RenderError};

use crate::geometry::{enumerate_candidates, GeometryError, SetupCase, ViewpointSetup};
use crate::model::Image;
use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-instance jitter magnitudes at `jitter = 1.0`. Kept well below the
/// separation between the catalog shapes.
pub const JITTER_CENTER: f64 = 0.04;
pub const JITTER_SCALE: f64 = 0.08;
pub const JITTER_ALBEDO: f64 = 0.06;

/// Thresholds for the confusable-variant rendering certificate.
pub const PIXEL_DIFF_TOL: f64 = 0.02;
pub const DISTINGUISHING_MIN_FRACTION: f64 = 0.10;
pub const CONFUSABLE_MAX_FRACTION: f64 = 0.01;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid dataset config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("malformed dataset file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetVariant {
    /// Mutually distinct shapes; every viewpoint is informative.
    Standard,
    /// Classes come in pairs that differ only at a marker visible from a
    /// couple of designated viewpoints.
    Confusable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoseMode {
    /// Hidden pose drawn uniformly from the candidate set (unaligned objects).
    UniformCandidate,
    /// All objects share the identity pose (aligned; for tests and anchors).
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub classes: usize,
    pub train_instances: usize,
    pub test_instances: usize,
    pub case: SetupCase,
    pub theta_deg: f64,
    pub phi_deg: f64,
    /// Camera-system orientation trial (1 = unrotated; see
    /// [`ViewpointSetup::orientation_sweep`]).
    pub orientation_trial: usize,
    pub jitter: f64,
    pub seed: u64,
    pub variant: DatasetVariant,
    pub pose: PoseMode,
    pub render: RenderConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            classes: 4,
            train_instances: 20,
            test_instances: 10,
            case: SetupCase::UprightRing,
            theta_deg: 30.0,
            phi_deg: 30.0,
            orientation_trial: 1,
            jitter: 1.0,
            seed: 7,
            variant: DatasetVariant::Standard,
            pose: PoseMode::UniformCandidate,
            render: RenderConfig::default(),
        }
    }
}

impl DatasetConfig {
    pub fn build_setup(&self) -> Result<ViewpointSetup, DataError> {
        let setup = ViewpointSetup::build(self.case, self.theta_deg, self.phi_deg)?;
        Ok(setup.orientation_sweep(self.orientation_trial)?)
    }
}

/// One generated object: its jittered primitives plus the hidden pose.
///
/// `pose` is the rig-alignment rotation of the instance: the rotation of the
/// assignment candidate that relates capture order to canonical viewpoints
/// (equivalently, the object is physically rotated by its inverse).
#[derive(Debug, Clone)]
pub struct SyntheticObject {
    pub class_id: usize,
    pub instance_id: usize,
    pub primitives: Vec<Primitive>,
    pub pose: Matrix3<f64>,
}

/// One training/test sample: M images in canonical capture order plus
/// evaluation-only ground truth (hidden from training).
#[derive(Debug, Clone)]
pub struct MultiViewSample {
    pub object: SyntheticObject,
    pub images: Vec<Image>,
    /// Category label, 0-based.
    pub label: usize,
    /// Index of the pose candidate within the setup's candidate list.
    pub pose_candidate: usize,
    /// Ground-truth viewpoint of each image (the pose candidate's permutation).
    pub gt_views: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub setup: ViewpointSetup,
    pub train: Vec<MultiViewSample>,
    pub test: Vec<MultiViewSample>,
}

/// Canonical (un-jittered) primitives for a class under a variant.
pub fn class_primitives(
    variant: DatasetVariant,
    class_id: usize,
    n_classes: usize,
) -> Result<Vec<Primitive>, DataError> {
    if class_id >= n_classes {
        return Err(DataError::InvalidConfig(format!(
            "class {class_id} out of range for {n_classes} classes"
        )));
    }
    match variant {
        DatasetVariant::Standard => standard_class(class_id, n_classes),
        DatasetVariant::Confusable => confusable_class(class_id, n_classes),
    }
}

fn standard_class(class_id: usize, n_classes: usize) -> Result<Vec<Primitive>, DataError> {
    if n_classes > 6 {
        return Err(DataError::InvalidConfig(format!(
            "standard variant supports up to 6 classes, requested {n_classes}"
        )));
    }
    let v = Vector3::new;
    let prims = match class_id {
        // tower with an off-axis knob
        0 => vec![
            Primitive::block(v(0.0, 0.0, 0.0), v(0.22, 0.22, 0.62), 1.0),
            Primitive::ellipsoid(v(0.52, 0.18, 0.34), v(0.26, 0.26, 0.26), 1.25),
        ],
        // flat slab with a chimney in one quadrant
        1 => vec![
            Primitive::block(v(0.0, 0.0, -0.28), v(0.62, 0.34, 0.16), 1.0),
            Primitive::block(v(-0.36, 0.2, 0.22), v(0.14, 0.14, 0.45), 1.3),
        ],
        // three unequal blobs
        2 => vec![
            Primitive::ellipsoid(v(0.4, -0.05, -0.3), v(0.34, 0.26, 0.26), 1.15),
            Primitive::ellipsoid(v(-0.32, 0.16, 0.22), v(0.2, 0.2, 0.5), 0.9),
            Primitive::ellipsoid(v(0.12, 0.42, 0.3), v(0.14, 0.14, 0.14), 1.3),
        ],
        // beam over a flattened body with a side post
        3 => vec![
            Primitive::block(v(0.05, -0.28, 0.42), v(0.55, 0.14, 0.13), 1.3),
            Primitive::ellipsoid(v(0.05, 0.22, -0.32), v(0.45, 0.3, 0.2), 0.95),
            Primitive::block(v(-0.5, 0.05, 0.1), v(0.12, 0.3, 0.12), 1.1),
        ],
        // asymmetric cross
        4 => vec![
            Primitive::block(v(0.0, 0.0, 0.0), v(0.55, 0.12, 0.12), 1.2),
            Primitive::block(v(0.1, 0.0, 0.25), v(0.12, 0.5, 0.12), 0.95),
            Primitive::ellipsoid(v(0.3, 0.3, -0.3), v(0.18, 0.18, 0.18), 1.3),
        ],
        // lozenge with a tilted mast
        _ => vec![
            Primitive::ellipsoid(v(0.0, 0.0, -0.15), v(0.55, 0.35, 0.22), 1.0),
            Primitive::block(v(0.3, -0.25, 0.35), v(0.15, 0.15, 0.4), 1.3),
        ],
    };
    Ok(prims)
}

fn direction_deg(azimuth: f64, elevation: f64) -> Vector3<f64> {
    let a = azimuth.to_radians();
    let e = elevation.to_radians();
    Vector3::new(e.cos() * a.cos(), e.cos() * a.sin(), e.sin())
}

/// Direction the confusable-variant marker of a pair faces: halfway between
/// two adjacent azimuths of the default ring, tilted towards its cameras.
pub fn marker_direction(pair: usize) -> Vector3<f64> {
    match pair {
        0 => direction_deg(15.0, 20.0),
        _ => direction_deg(15.0, 25.0),
    }
}

/// A flat bright "decal" cap hugging the base body, facing `dir`.
fn marker_cap(dir: Vector3<f64>, center_scale: f64, half: Vector3<f64>) -> Primitive {
    let az = 15.0_f64.to_radians();
    let tangent_h = Vector3::new(-az.sin(), az.cos(), 0.0);
    let tangent_v = dir.cross(&tangent_h).normalize();
    let mut cap = Primitive::ellipsoid(dir * center_scale, half, 1.45);
    cap.orientation = nalgebra::Matrix3::from_columns(&[tangent_h, tangent_v, dir]);
    cap
}

fn confusable_class(class_id: usize, n_classes: usize) -> Result<Vec<Primitive>, DataError> {
    if n_classes % 2 != 0 || n_classes > 4 {
        return Err(DataError::InvalidConfig(format!(
            "confusable variant needs an even class count of at most 4, requested {n_classes}"
        )));
    }
    let pair = class_id / 2;
    let marked = class_id % 2 == 0;
    let v = Vector3::new;
    // bases are azimuthally symmetric, so single plain views carry no
    // information about absolute azimuth; only the marker anchors it
    let mut prims = match pair {
        0 => vec![Primitive::ellipsoid(v(0.0, 0.0, 0.0), v(0.55, 0.55, 0.7), 1.0)],
        _ => vec![Primitive::block(v(0.0, 0.0, 0.0), v(0.55, 0.55, 0.55), 0.85)],
    };
    if marked {
        let cap = match pair {
            0 => marker_cap(marker_direction(0), 0.45, v(0.55, 0.45, 0.2)),
            _ => marker_cap(marker_direction(1), 0.5, v(0.65, 0.4, 0.25)),
        };
        prims.push(cap);
    }
    Ok(prims)
}

fn jittered(prims: &[Primitive], jitter: f64, rng: &mut ChaCha8Rng) -> Vec<Primitive> {
    prims
        .iter()
        .map(|p| {
            let mut q = p.clone();
            for axis in 0..3 {
                q.center[axis] += rng.random_range(-JITTER_CENTER..JITTER_CENTER) * jitter;
                q.half[axis] *= 1.0 + rng.random_range(-JITTER_SCALE..JITTER_SCALE) * jitter;
            }
            q.albedo = (q.albedo * (1.0 + rng.random_range(-JITTER_ALBEDO..JITTER_ALBEDO) * jitter))
                .clamp(0.2, 1.45);
            q
        })
        .collect()
}

/// Uniform random rotation (Shoemake's quaternion method).
pub fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let u1: f64 = rng.random_range(0.0..1.0);
    let u2: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let u3: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let q = Quaternion::new(a * u2.sin(), a * u2.cos(), b * u3.sin(), b * u3.cos());
    UnitQuaternion::new_normalize(q).to_rotation_matrix().into_inner()
}

#[derive(Clone, Copy)]
enum Split {
    Train,
    Test,
}

/// RNG stream for one instance; parallel and serial generation draw the same
/// bytes because every instance owns a disjoint ChaCha stream.
fn instance_rng(seed: u64, split: Split, class_id: usize, instance_id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let split_tag = match split {
        Split::Train => 1u64,
        Split::Test => 2u64,
    };
    rng.set_stream((split_tag << 40) | ((class_id as u64) << 20) | instance_id as u64);
    rng
}

/// Generates reproducible train/test splits of multi-view samples.
pub fn generate_dataset(config: &DatasetConfig) -> Result<Dataset, DataError> {
    if config.classes == 0 || config.train_instances == 0 {
        return Err(DataError::InvalidConfig(
            "need at least one class and one training instance".into(),
        ));
    }
    if config.jitter < 0.0 || !config.jitter.is_finite() {
        return Err(DataError::InvalidConfig("jitter must be non-negative".into()));
    }
    // validate the catalog up front so errors name the config, not a worker
    class_primitives(config.variant, config.classes - 1, config.classes)?;
    let setup = config.build_setup()?;
    let candidates = enumerate_candidates(&setup);

    let make_split = |split: Split, count: usize| -> Result<Vec<MultiViewSample>, DataError> {
        let specs: Vec<(usize, usize)> = (0..config.classes)
            .flat_map(|c| (0..count).map(move |i| (c, i)))
            .collect();
        specs
            .into_par_iter()
            .map(|(class_id, instance_id)| {
                let mut rng = instance_rng(config.seed, split, class_id, instance_id);
                let base = class_primitives(config.variant, class_id, config.classes)?;
                let prims = jittered(&base, config.jitter, &mut rng);
                let cand_idx = match config.pose {
                    PoseMode::UniformCandidate => rng.random_range(0..candidates.len()),
                    PoseMode::Identity => 0,
                };
                let cand = &candidates[cand_idx];
                let images = cand
                    .perm
                    .iter()
                    .map(|&view| render_view(&prims, &setup.positions[view], &config.render))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(MultiViewSample {
                    object: SyntheticObject {
                        class_id,
                        instance_id,
                        primitives: prims,
                        pose: cand.rotation,
                    },
                    images,
                    label: class_id,
                    pose_candidate: cand_idx,
                    gt_views: cand.perm.clone(),
                })
            })
            .collect()
    };

    let train = make_split(Split::Train, config.train_instances)?;
    let test = make_split(Split::Test, config.test_instances)?;
    Ok(Dataset {
        config: config.clone(),
        setup,
        train,
        test,
    })
}

/// Re-renders a sample's views under explicit global rotations (off-grid when
/// the rotations are not rig symmetries).
pub fn perturbed_views_with(
    sample: &MultiViewSample,
    setup: &ViewpointSetup,
    rotations: &[Matrix3<f64>],
    render_cfg: &RenderConfig,
) -> Result<Vec<Vec<Image>>, DataError> {
    rotations
        .iter()
        .map(|rot| {
            sample
                .gt_views
                .iter()
                .map(|&view| {
                    let dir = rot * setup.positions[view];
                    Ok(render_view(&sample.object.primitives, &dir, render_cfg)?)
                })
                .collect()
        })
        .collect()
}

/// `n_trials` independently seeded uniform random rotations of the test
/// object, each rendered from the full rig.
pub fn perturbed_views(
    sample: &MultiViewSample,
    setup: &ViewpointSetup,
    n_trials: usize,
    seed: u64,
    render_cfg: &RenderConfig,
) -> Result<Vec<Vec<Image>>, DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x70_65_72_74); // distinct stream from dataset generation
    let rotations: Vec<_> = (0..n_trials).map(|_| random_rotation(&mut rng)).collect();
    perturbed_views_with(sample, setup, &rotations, render_cfg)
}

/// Writes a grayscale array as a binary PGM (P5) file, mapping [0, 1] to 0..255.
pub fn write_pgm(pixels: &ndarray::ArrayView2<f64>, path: &std::path::Path) -> std::io::Result<()> {
    let (h, w) = pixels.dim();
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend(pixels.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    std::fs::write(path, bytes)
}

fn stack_distance(a: &MultiViewSample, b: &MultiViewSample, shift_perms: &[Vec<usize>]) -> f64 {
    shift_perms
        .iter()
        .map(|perm| {
            a.images
                .iter()
                .enumerate()
                .map(|(i, img)| {
                    img.pixels
                        .iter()
                        .zip(b.images[perm[i]].pixels.iter())
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                })
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Alignment-aware nearest-neighbour accuracy of the test split against the
/// train split, on raw pixel stacks. Serves as a separability certificate:
/// the learning problem is well-posed only if this is (near) perfect.
pub fn nearest_neighbor_accuracy(dataset: &Dataset) -> f64 {
    let candidates = enumerate_candidates(&dataset.setup);
    let perms: Vec<Vec<usize>> = candidates.iter().map(|c| c.perm.clone()).collect();
    let hits: usize = dataset
        .test
        .par_iter()
        .map(|probe| {
            let best = dataset
                .train
                .iter()
                .min_by(|a, b| {
                    stack_distance(probe, a, &perms).total_cmp(&stack_distance(probe, b, &perms))
                })
                .expect("train split is non-empty");
            usize::from(best.label == probe.label)
        })
        .sum();
    hits as f64 / dataset.test.len().max(1) as f64
}

/// Pixel-difference certificate for the confusable variant: the marked and
/// unmarked class of each pair must differ in at least
/// [`DISTINGUISHING_MIN_FRACTION`] of pixels at the designated distinguishing
/// view and in at most [`CONFUSABLE_MAX_FRACTION`] at the designated
/// confusable (opposite) view.
pub fn confusable_certificate(config: &DatasetConfig) -> Result<(), DataError> {
    if config.variant != DatasetVariant::Confusable {
        return Err(DataError::InvalidConfig(
            "certificate applies to the confusable variant".into(),
        ));
    }
    let setup = config.build_setup()?;
    let nearest_view = |target: &Vector3<f64>| {
        setup
            .positions
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                target.dot(b).partial_cmp(&target.dot(a)).expect("finite dots")
            })
            .map(|(i, _)| i)
            .expect("setup has positions")
    };

    let diff_fraction = |a: &Image, b: &Image| {
        let differing = a
            .pixels
            .iter()
            .zip(b.pixels.iter())
            .filter(|(x, y)| (*x - *y).abs() > PIXEL_DIFF_TOL)
            .count();
        differing as f64 / (a.pixels.len() as f64)
    };

    for pair in 0..config.classes / 2 {
        let marker = marker_direction(pair);
        let distinguishing = nearest_view(&marker);
        let confusable = nearest_view(&(-marker));
        let marked = class_primitives(config.variant, 2 * pair, config.classes)?;
        let plain = class_primitives(config.variant, 2 * pair + 1, config.classes)?;
        for (view, min_frac, max_frac, name) in [
            (distinguishing, DISTINGUISHING_MIN_FRACTION, 1.0, "distinguishing"),
            (confusable, 0.0, CONFUSABLE_MAX_FRACTION, "confusable"),
        ] {
            let a = render_view(&marked, &setup.positions[view], &config.render)?;
            let b = render_view(&plain, &setup.positions[view], &config.render)?;
            let frac = diff_fraction(&a, &b);
            if frac < min_frac || frac > max_frac {
                return Err(DataError::InvalidConfig(format!(
                    "pair {pair}: {name} view {view} differs in {:.1}% of pixels \
                     (required within [{:.0}%, {:.0}%])",
                    frac * 100.0,
                    min_frac * 100.0,
                    max_frac * 100.0,
                )));
            }
        }
    }
    Ok(())
}
