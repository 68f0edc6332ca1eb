//! `.fmap` feature grids: magic `FMP1`, u32 height, u32 width, u32
//! channels, then row-major `f32` data (channels fastest).

use std::path::Path;

use crate::error::Result;
use crate::io::{read_file, write_file, PutLe, Reader};
use crate::mask_oracle::FeatureMap;

const MAGIC: &[u8; 4] = b"FMP1";

pub fn feature_map_to_bytes(fm: &FeatureMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + fm.data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.put_u32(fm.height);
    out.put_u32(fm.width);
    out.put_u32(fm.channels);
    for &x in &fm.data {
        out.put_f32(x);
    }
    out
}

pub fn feature_map_from_bytes(bytes: &[u8], view_id: u32) -> Result<FeatureMap> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MAGIC)?;
    let height = r.u32()?;
    let width = r.u32()?;
    let channels = r.u32()?;
    let n = height as usize * width as usize * channels as usize;
    let raw = r.bytes(n * 4)?;
    r.finish()?;
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let fm = FeatureMap {
        view_id,
        height,
        width,
        channels,
        data,
    };
    fm.validate()?;
    Ok(fm)
}

pub fn load_feature_map(path: impl AsRef<Path>, view_id: u32) -> Result<FeatureMap> {
    feature_map_from_bytes(&read_file(path.as_ref())?, view_id)
}

pub fn save_feature_map(fm: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    fm.validate()?;
    write_file(path.as_ref(), &feature_map_to_bytes(fm))
}
