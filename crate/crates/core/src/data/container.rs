//! Single-file dataset container.
//!
//! Byte layout (all integers and floats little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic bytes "MVDS"
//! 4       4     u32 format version (currently 1)
//! 8       8     u64 header length L
//! 16      L     header JSON: {format_version, config, n_train, n_test,
//!               views, image_h, image_w}
//! 16+L    ...   sample blocks, train split first, then test split
//! ```
//!
//! Each sample block:
//!
//! ```text
//! u32   class id
//! u32   instance id
//! u64   pose candidate id
//! 9*f64 pose rotation, row-major
//! u32   primitive count P
//! P x { u8 kind (0 ellipsoid, 1 block); 3*f64 center; 3*f64 half;
//!       9*f64 orientation row-major; f64 albedo }
//! M*u32 ground-truth view index per image (0-based)
//! M*H*W*f64 pixel intensities, image-major then row-major
//! ```
//!
//! Images round-trip bit-exactly because intensities are stored as raw f64.

use super::{Dataset, DataError, DatasetConfig, MultiViewSample, SyntheticObject};
use super::render::{Primitive, PrimitiveKind};
use crate::model::Image;
use nalgebra::{Matrix3, Vector3};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const DATASET_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"MVDS";

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: DatasetConfig,
    n_train: usize,
    n_test: usize,
    views: usize,
    image_h: usize,
    image_w: usize,
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_matrix<W: Write>(w: &mut W, m: &Matrix3<f64>) -> std::io::Result<()> {
    for r in 0..3 {
        for c in 0..3 {
            write_f64(w, m[(r, c)])?;
        }
    }
    Ok(())
}

fn write_vector<W: Write>(w: &mut W, v: &Vector3<f64>) -> std::io::Result<()> {
    for i in 0..3 {
        write_f64(w, v[i])?;
    }
    Ok(())
}

fn write_sample<W: Write>(w: &mut W, s: &MultiViewSample) -> std::io::Result<()> {
    write_u32(w, s.object.class_id as u32)?;
    write_u32(w, s.object.instance_id as u32)?;
    w.write_all(&(s.pose_candidate as u64).to_le_bytes())?;
    write_matrix(w, &s.object.pose)?;
    write_u32(w, s.object.primitives.len() as u32)?;
    for p in &s.object.primitives {
        let kind = match p.kind {
            PrimitiveKind::Ellipsoid => 0u8,
            PrimitiveKind::Block => 1u8,
        };
        w.write_all(&[kind])?;
        write_vector(w, &p.center)?;
        write_vector(w, &p.half)?;
        write_matrix(w, &p.orientation)?;
        write_f64(w, p.albedo)?;
    }
    for &v in &s.gt_views {
        write_u32(w, v as u32)?;
    }
    for img in &s.images {
        for &px in img.pixels.iter() {
            write_f64(w, px)?;
        }
    }
    Ok(())
}

pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<(), DataError> {
    let header = Header {
        format_version: DATASET_FORMAT_VERSION,
        config: dataset.config.clone(),
        n_train: dataset.train.len(),
        n_test: dataset.test.len(),
        views: dataset.setup.view_count(),
        image_h: dataset.config.render.height,
        image_w: dataset.config.render.width,
    };
    let header_json = serde_json::to_vec(&header)?;
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    write_u32(&mut w, DATASET_FORMAT_VERSION)?;
    w.write_all(&(header_json.len() as u64).to_le_bytes())?;
    w.write_all(&header_json)?;
    for s in dataset.train.iter().chain(&dataset.test) {
        write_sample(&mut w, s)?;
    }
    w.flush()?;
    Ok(())
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn u8(&mut self) -> Result<u8, DataError> {
        let mut b = [0u8; 1];
        self.inner.read_exact(&mut b)?;
        Ok(b[0])
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        let mut b = [0u8; 4];
        self.inner.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64, DataError> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self) -> Result<f64, DataError> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    fn vector(&mut self) -> Result<Vector3<f64>, DataError> {
        Ok(Vector3::new(self.f64()?, self.f64()?, self.f64()?))
    }

    fn matrix(&mut self) -> Result<Matrix3<f64>, DataError> {
        let mut m = Matrix3::zeros();
        for r in 0..3 {
            for c in 0..3 {
                m[(r, c)] = self.f64()?;
            }
        }
        Ok(m)
    }
}

fn read_sample<R: Read>(
    r: &mut Reader<R>,
    views: usize,
    h: usize,
    w: usize,
) -> Result<MultiViewSample, DataError> {
    let class_id = r.u32()? as usize;
    let instance_id = r.u32()? as usize;
    let pose_candidate = r.u64()? as usize;
    let pose = r.matrix()?;
    let prim_count = r.u32()? as usize;
    if prim_count > 64 {
        return Err(DataError::Malformed(format!(
            "implausible primitive count {prim_count}"
        )));
    }
    let mut primitives = Vec::with_capacity(prim_count);
    for _ in 0..prim_count {
        let kind = match r.u8()? {
            0 => PrimitiveKind::Ellipsoid,
            1 => PrimitiveKind::Block,
            k => return Err(DataError::Malformed(format!("unknown primitive kind {k}"))),
        };
        primitives.push(Primitive {
            kind,
            center: r.vector()?,
            half: r.vector()?,
            orientation: r.matrix()?,
            albedo: r.f64()?,
        });
    }
    let mut gt_views = Vec::with_capacity(views);
    for _ in 0..views {
        gt_views.push(r.u32()? as usize);
    }
    // ground-truth views must form a permutation of the viewpoints
    let mut seen = vec![false; views];
    for &v in &gt_views {
        if v >= views || seen[v] {
            return Err(DataError::Malformed(format!(
                "gt view list {gt_views:?} is not a permutation of 0..{views}"
            )));
        }
        seen[v] = true;
    }
    let mut images = Vec::with_capacity(views);
    for _ in 0..views {
        let mut pixels = Array2::zeros((h, w));
        for px in pixels.iter_mut() {
            *px = r.f64()?;
        }
        let img = Image { pixels };
        img.validate()
            .map_err(|_| DataError::Malformed("pixel out of [0, 1]".into()))?;
        images.push(img);
    }
    Ok(MultiViewSample {
        object: SyntheticObject {
            class_id,
            instance_id,
            primitives,
            pose,
        },
        images,
        label: class_id,
        pose_candidate,
        gt_views,
    })
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path)?;
    let mut r = Reader {
        inner: BufReader::new(file),
    };
    let mut magic = [0u8; 4];
    r.inner.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(DataError::Malformed("bad magic bytes".into()));
    }
    let version = r.u32()?;
    if version != DATASET_FORMAT_VERSION {
        return Err(DataError::Malformed(format!(
            "unsupported dataset format version {version}"
        )));
    }
    let header_len = r.u64()? as usize;
    if header_len > 16 << 20 {
        return Err(DataError::Malformed("implausible header length".into()));
    }
    let mut header_bytes = vec![0u8; header_len];
    r.inner.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)?;
    if header.format_version != DATASET_FORMAT_VERSION {
        return Err(DataError::Malformed("header version mismatch".into()));
    }
    let setup = header.config.build_setup()?;
    if setup.view_count() != header.views {
        return Err(DataError::Malformed("view count disagrees with config".into()));
    }
    let mut train = Vec::with_capacity(header.n_train);
    for _ in 0..header.n_train {
        train.push(read_sample(&mut r, header.views, header.image_h, header.image_w)?);
    }
    let mut test = Vec::with_capacity(header.n_test);
    for _ in 0..header.n_test {
        test.push(read_sample(&mut r, header.views, header.image_h, header.image_w)?);
    }
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing)? != 0 {
        return Err(DataError::Malformed("trailing bytes after last sample".into()));
    }
    Ok(Dataset {
        config: header.config,
        setup,
        train,
        test,
    })
}
