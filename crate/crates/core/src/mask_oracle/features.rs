use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::features::{load_feature_map, save_feature_map};
use crate::model::FEATURE_DIM;
use crate::scalar::Scalar;

/// Encoder feature grid for one view, `data[(y * width + x) * channels + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub view_id: u32,
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn validate(&self) -> Result<()> {
        if self.channels as usize != FEATURE_DIM {
            return Err(Error::invalid(
                "feature map",
                format!("view {}: {} channels, expected {FEATURE_DIM}", self.view_id, self.channels),
            ));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::invalid("feature map", format!("view {}: empty grid", self.view_id)));
        }
        let expected = self.height as usize * self.width as usize * self.channels as usize;
        if self.data.len() != expected {
            return Err(Error::invalid(
                "feature map",
                format!("view {}: {} values, expected {expected}", self.view_id, self.data.len()),
            ));
        }
        if self.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("feature map", format!("view {}: non-finite value", self.view_id)));
        }
        Ok(())
    }

    #[inline]
    pub fn cell(&self, y: usize, x: usize) -> &[f32] {
        let c = self.channels as usize;
        let at = (y * self.width as usize + x) * c;
        &self.data[at..at + c]
    }
}

/// Bilinear lookup at an image pixel. The pixel center is mapped
/// proportionally onto the grid, `(row + 0.5) / H * H_f - 0.5`, and
/// coordinates are clamped to the grid edges.
pub fn interpolate_feature<T: Scalar>(
    fm: &FeatureMap,
    pixel: (u32, u32),
    image_height: u32,
    image_width: u32,
) -> Vec<T> {
    let grid = |p: u32, img: u32, cells: u32| -> (usize, usize, f64) {
        let g = (p as f64 + 0.5) / img as f64 * cells as f64 - 0.5;
        let g = g.clamp(0.0, (cells - 1) as f64);
        let g0 = g.floor() as usize;
        let g1 = (g0 + 1).min(cells as usize - 1);
        (g0, g1, g - g0 as f64)
    };
    let (y0, y1, ty) = grid(pixel.0, image_height, fm.height);
    let (x0, x1, tx) = grid(pixel.1, image_width, fm.width);
    let weights = [
        ((y0, x0), (1.0 - ty) * (1.0 - tx)),
        ((y0, x1), (1.0 - ty) * tx),
        ((y1, x0), ty * (1.0 - tx)),
        ((y1, x1), ty * tx),
    ];
    let mut out = vec![T::zero(); fm.channels as usize];
    for ((y, x), wgt) in weights {
        if wgt == 0.0 {
            continue;
        }
        let wgt = T::lit(wgt);
        for (o, &v) in out.iter_mut().zip(fm.cell(y, x)) {
            *o += wgt * T::lit(v as f64);
        }
    }
    out
}

/// Feature maps keyed by view id.
#[derive(Debug, Clone, Default)]
pub struct FeatureStore {
    maps: BTreeMap<u32, FeatureMap>,
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, fm: FeatureMap) {
        self.maps.insert(fm.view_id, fm);
    }

    pub fn get(&self, view_id: u32) -> Option<&FeatureMap> {
        self.maps.get(&view_id)
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &FeatureMap> {
        self.maps.values()
    }

    pub fn file_name(view_id: u32) -> String {
        format!("features_{view_id}.fmap")
    }

    /// Loads every `features_<view_id>.fmap` in `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut store = FeatureStore::new();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let name = entry.file_name();
            let name = name.to_string_lossy();
            let Some(id) = name
                .strip_prefix("features_")
                .and_then(|s| s.strip_suffix(".fmap"))
                .and_then(|s| s.parse::<u32>().ok())
            else {
                continue;
            };
            store.insert(load_feature_map(entry.path(), id)?);
        }
        Ok(store)
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        for fm in self.maps.values() {
            save_feature_map(fm, dir.as_ref().join(Self::file_name(fm.view_id)))?;
        }
        Ok(())
    }
}
