//! JSON side files: cameras, superpoints and segmentations.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_file, write_file};
use crate::model::{CameraView, InstanceSegmentation, SceneGeometry, Superpoint};

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    serde_json::from_slice(&read_file(path)?)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), serde_json::to_string(value)?.as_bytes())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CameraRecord {
    view_id: u32,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    #[serde(rename = "R")]
    r: [f64; 9],
    t: [f64; 3],
}

impl From<&CameraView> for CameraRecord {
    fn from(v: &CameraView) -> Self {
        let m = &v.rotation;
        CameraRecord {
            view_id: v.view_id,
            fx: v.fx,
            fy: v.fy,
            cx: v.cx,
            cy: v.cy,
            width: v.width,
            height: v.height,
            r: [
                m[(0, 0)], m[(0, 1)], m[(0, 2)],
                m[(1, 0)], m[(1, 1)], m[(1, 2)],
                m[(2, 0)], m[(2, 1)], m[(2, 2)],
            ],
            t: [v.translation.x, v.translation.y, v.translation.z],
        }
    }
}

impl From<CameraRecord> for CameraView {
    fn from(c: CameraRecord) -> Self {
        CameraView {
            view_id: c.view_id,
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            rotation: Matrix3::from_row_slice(&c.r),
            translation: Vector3::from(c.t),
            width: c.width,
            height: c.height,
        }
    }
}

pub fn cameras_to_json(views: &[CameraView]) -> Result<String> {
    let recs: Vec<CameraRecord> = views.iter().map(CameraRecord::from).collect();
    Ok(serde_json::to_string_pretty(&recs)?)
}

pub fn cameras_from_json(text: &str) -> Result<Vec<CameraView>> {
    let recs: Vec<CameraRecord> = serde_json::from_str(text)?;
    let views: Vec<CameraView> = recs.into_iter().map(CameraView::from).collect();
    let mut ids = std::collections::HashSet::new();
    for v in &views {
        v.validate()?;
        if !ids.insert(v.view_id) {
            return Err(Error::invalid("camera", format!("duplicate view_id {}", v.view_id)));
        }
    }
    Ok(views)
}

pub fn save_cameras(views: &[CameraView], path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), cameras_to_json(views)?.as_bytes())
}

pub fn load_cameras(path: impl AsRef<Path>) -> Result<Vec<CameraView>> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    cameras_from_json(&String::from_utf8_lossy(&bytes))
}

pub fn save_superpoints(sps: &[Superpoint], path: impl AsRef<Path>) -> Result<()> {
    write_json(sps, path)
}

/// Loads superpoints and fills centroids from the scene. Ids must equal
/// their position in the file.
pub fn load_superpoints(path: impl AsRef<Path>, scene: &SceneGeometry) -> Result<Vec<Superpoint>> {
    let mut sps: Vec<Superpoint> = read_json(path)?;
    crate::model::validate_superpoints(&sps, scene.len())?;
    for (i, sp) in sps.iter_mut().enumerate() {
        if sp.sp_id as usize != i {
            return Err(Error::invalid(
                "superpoints",
                format!("entry {i} has sp_id {}; ids must be 0..n in order", sp.sp_id),
            ));
        }
        sp.update_centroid(scene);
    }
    Ok(sps)
}

pub fn save_segmentation(seg: &InstanceSegmentation, path: impl AsRef<Path>) -> Result<()> {
    write_json(seg, path)
}

pub fn load_segmentation(path: impl AsRef<Path>) -> Result<InstanceSegmentation> {
    let seg: InstanceSegmentation = read_json(path)?;
    seg.validate()?;
    Ok(seg)
}
