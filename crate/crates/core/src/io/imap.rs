//! `.imap` instance label images: magic `IMP1`, u32 height, u32 width,
//! then row-major `u16` labels (0 is background).

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_file, write_file, PutLe, Reader};

const MAGIC: &[u8; 4] = b"IMP1";

/// Whole-image instance segmentation of one view; ids are view-local.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMap {
    pub view_id: u32,
    pub height: u32,
    pub width: u32,
    pub labels: Vec<u16>,
}

impl InstanceMap {
    #[inline]
    pub fn at(&self, row: u32, col: u32) -> u16 {
        self.labels[row as usize * self.width as usize + col as usize]
    }
}

pub fn instance_map_to_bytes(map: &InstanceMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + map.labels.len() * 2);
    out.extend_from_slice(MAGIC);
    out.put_u32(map.height);
    out.put_u32(map.width);
    for &l in &map.labels {
        out.put_u16(l);
    }
    out
}

pub fn instance_map_from_bytes(bytes: &[u8], view_id: u32) -> Result<InstanceMap> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MAGIC)?;
    let height = r.u32()?;
    let width = r.u32()?;
    let n = height as usize * width as usize;
    let raw = r.bytes(n * 2)?;
    r.finish()?;
    Ok(InstanceMap {
        view_id,
        height,
        width,
        labels: raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect(),
    })
}

/// Per-view instance maps.
#[derive(Debug, Clone, Default)]
pub struct InstanceMapStore {
    maps: BTreeMap<u32, InstanceMap>,
}

impl InstanceMapStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, map: InstanceMap) {
        self.maps.insert(map.view_id, map);
    }

    pub fn get(&self, view_id: u32) -> Option<&InstanceMap> {
        self.maps.get(&view_id)
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &InstanceMap> {
        self.maps.values()
    }

    pub fn file_name(view_id: u32) -> String {
        format!("instances_{view_id}.imap")
    }

    /// Checks each map against its camera's image size.
    pub fn validate_dims(&self, views: &[crate::model::CameraView]) -> Result<()> {
        for v in views {
            if let Some(m) = self.get(v.view_id) {
                if (m.height, m.width) != (v.height, v.width) {
                    return Err(Error::invalid(
                        "instance map",
                        format!(
                            "view {}: {}x{} map for a {}x{} camera",
                            v.view_id, m.height, m.width, v.height, v.width
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut store = InstanceMapStore::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let name = entry.file_name();
            let name = name.to_string_lossy();
            let Some(id) = name
                .strip_prefix("instances_")
                .and_then(|s| s.strip_suffix(".imap"))
                .and_then(|s| s.parse::<u32>().ok())
            else {
                continue;
            };
            store.insert(instance_map_from_bytes(&read_file(&entry.path())?, id)?);
        }
        Ok(store)
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        for m in self.maps.values() {
            write_file(&dir.as_ref().join(Self::file_name(m.view_id)), &instance_map_to_bytes(m))?;
        }
        Ok(())
    }
}
