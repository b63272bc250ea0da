//! Orthographic rasterizer for small primitive-based objects.
//!
//! Cameras sit on the unit sphere looking at the origin. The image plane
//! passes through the origin; depth along the view ray drives a simple linear
//! shading term so nearer surfaces render brighter, scaled by a per-primitive
//! albedo. Background pixels are 0.

use crate::model::Image;
use nalgebra::{Matrix3, Vector3};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("view direction is degenerate (zero norm)")]
    DegenerateDirection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrimitiveKind {
    Ellipsoid,
    Block,
}

/// One solid primitive in world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub kind: PrimitiveKind,
    pub center: Vector3<f64>,
    /// Semi-axes (ellipsoid) or half-extents (block) in the local frame.
    pub half: Vector3<f64>,
    /// Local-to-world rotation.
    pub orientation: Matrix3<f64>,
    /// Brightness multiplier applied to the depth shading.
    pub albedo: f64,
}

impl Primitive {
    pub fn ellipsoid(center: Vector3<f64>, half: Vector3<f64>, albedo: f64) -> Self {
        Primitive {
            kind: PrimitiveKind::Ellipsoid,
            center,
            half,
            orientation: Matrix3::identity(),
            albedo,
        }
    }

    pub fn block(center: Vector3<f64>, half: Vector3<f64>, albedo: f64) -> Self {
        Primitive {
            kind: PrimitiveKind::Block,
            center,
            half,
            orientation: Matrix3::identity(),
            albedo,
        }
    }

    /// The primitive rigidly rotated about the origin.
    pub fn rotated(&self, rot: &Matrix3<f64>) -> Self {
        Primitive {
            kind: self.kind,
            center: rot * self.center,
            half: self.half,
            orientation: rot * self.orientation,
            albedo: self.albedo,
        }
    }

    /// Entry parameter of the ray `base + t * dir` into the primitive, if any.
    fn intersect(&self, base: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let rot_t = self.orientation.transpose();
        let b = rot_t * (base - self.center);
        let d = rot_t * dir;
        match self.kind {
            PrimitiveKind::Ellipsoid => {
                let bs = b.component_div(&self.half);
                let ds = d.component_div(&self.half);
                let a = ds.dot(&ds);
                let bq = bs.dot(&ds);
                let cq = bs.dot(&bs) - 1.0;
                let disc = bq * bq - a * cq;
                if disc < 0.0 {
                    None
                } else {
                    Some((-bq - disc.sqrt()) / a)
                }
            }
            PrimitiveKind::Block => {
                let mut t_min = f64::NEG_INFINITY;
                let mut t_max = f64::INFINITY;
                for axis in 0..3 {
                    let h = self.half[axis];
                    if d[axis].abs() < 1e-12 {
                        if b[axis].abs() > h {
                            return None;
                        }
                        continue;
                    }
                    let t0 = (-h - b[axis]) / d[axis];
                    let t1 = (h - b[axis]) / d[axis];
                    t_min = t_min.max(t0.min(t1));
                    t_max = t_max.min(t0.max(t1));
                }
                if t_min <= t_max {
                    Some(t_min)
                } else {
                    None
                }
            }
        }
    }
}

/// Rasterization parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub height: usize,
    pub width: usize,
    /// Half-width of the square world window mapped onto the image.
    pub half_extent: f64,
    /// Shading floor: the intensity multiplier of the farthest visible depth.
    pub ambient: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            height: 16,
            width: 16,
            half_extent: 1.3,
            ambient: 0.25,
        }
    }
}

/// Orthonormal camera frame for a camera at `dir` (unit, pointing from the
/// origin towards the camera), world up-axis z. At the poles the right vector
/// falls back to the x-axis.
pub fn camera_frame(dir: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let forward = -dir;
    let z = Vector3::z();
    let cross = z.cross(&forward);
    let right = if cross.norm() < 1e-9 {
        Vector3::x()
    } else {
        cross.normalize()
    };
    let up = forward.cross(&right);
    (right, up, forward)
}

/// Renders the primitives from the given view direction (orthographic).
pub fn render_view(
    primitives: &[Primitive],
    view_dir: &Vector3<f64>,
    cfg: &RenderConfig,
) -> Result<Image, RenderError> {
    let norm = view_dir.norm();
    if norm < 1e-9 {
        return Err(RenderError::DegenerateDirection);
    }
    let dir = view_dir / norm;
    let (right, up, forward) = camera_frame(&dir);
    let he = cfg.half_extent;
    let depth_span = 2.0 * he;

    let mut pixels = Array2::zeros((cfg.height, cfg.width));
    for r in 0..cfg.height {
        let y = (1.0 - (r as f64 + 0.5) / cfg.height as f64 * 2.0) * he;
        for c in 0..cfg.width {
            let x = ((c as f64 + 0.5) / cfg.width as f64 * 2.0 - 1.0) * he;
            let base = x * right + y * up;
            let mut best: Option<(f64, f64)> = None;
            for prim in primitives {
                if let Some(t) = prim.intersect(&base, &forward) {
                    if best.map_or(true, |(bt, _)| t < bt) {
                        best = Some((t, prim.albedo));
                    }
                }
            }
            if let Some((t, albedo)) = best {
                let shade = cfg.ambient + (1.0 - cfg.ambient) * ((he - t) / depth_span);
                pixels[(r, c)] = (albedo * shade).clamp(0.0, 1.0);
            }
        }
    }
    Ok(Image { pixels })
}
