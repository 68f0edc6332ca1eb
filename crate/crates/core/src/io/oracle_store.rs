//! On-disk oracle store: a directory holding `index.json` and `masks.bin`.
//!
//! Each record in `masks.bin` holds three candidates, each written as
//! `u32 rle_len`, `rle_len` u32 run lengths (row-major, first run counts
//! unset pixels), then an `f32` confidence. The index maps a
//! (view, superpoint) pair to its record's byte offset and image size.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bitmap::Bitmap;
use crate::error::{Error, Result};
use crate::io::{read_file, write_file, PutLe, Reader};
use crate::mask_oracle::{MaskCandidate, OracleResponse};

pub const INDEX_FILE: &str = "index.json";
pub const MASKS_FILE: &str = "masks.bin";
pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub view_id: u32,
    pub sp_id: u32,
    pub offset: u64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreIndex {
    pub version: u32,
    #[serde(default)]
    pub model: String,
    pub entries: Vec<IndexEntry>,
}

pub fn encode_response(resp: &OracleResponse, out: &mut Vec<u8>) {
    for cand in &resp.candidates {
        let rle = cand.mask.to_rle();
        out.put_u32(rle.len() as u32);
        for run in rle {
            out.put_u32(run);
        }
        out.put_f32(cand.confidence);
    }
}

fn decode_response(r: &mut Reader<'_>, width: u32, height: u32) -> Result<OracleResponse> {
    let mut cands = Vec::with_capacity(3);
    for _ in 0..3 {
        let len = r.u32()? as usize;
        if len > r.remaining() / 4 {
            return Err(Error::Format(format!("run count {len} exceeds the remaining data")));
        }
        let counts: Vec<u32> = (0..len).map(|_| r.u32()).collect::<Result<_>>()?;
        let conf = r.f32()?;
        let mask = Bitmap::from_rle(width, height, &counts)?;
        cands.push(MaskCandidate::new(mask, conf)?);
    }
    let cands: [MaskCandidate; 3] = cands.try_into().expect("three candidates");
    OracleResponse::new(cands)
}

/// Accumulates responses and writes the store in one go.
#[derive(Debug, Default)]
pub struct OracleStoreWriter {
    model: String,
    entries: Vec<IndexEntry>,
    data: Vec<u8>,
}

impl OracleStoreWriter {
    pub fn new(model: impl Into<String>) -> Self {
        OracleStoreWriter {
            model: model.into(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, view_id: u32, sp_id: u32, resp: &OracleResponse) {
        let mask = &resp.candidates[0].mask;
        self.entries.push(IndexEntry {
            view_id,
            sp_id,
            offset: self.data.len() as u64,
            width: mask.width(),
            height: mask.height(),
        });
        encode_response(resp, &mut self.data);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write(self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let index = StoreIndex {
            version: STORE_VERSION,
            model: self.model,
            entries: self.entries,
        };
        write_file(&dir.join(MASKS_FILE), &self.data)?;
        write_file(&dir.join(INDEX_FILE), serde_json::to_string_pretty(&index)?.as_bytes())
    }
}

/// Read-only store loaded fully into memory.
#[derive(Debug, Clone)]
pub struct OracleStore {
    pub dir: PathBuf,
    pub index: StoreIndex,
    lookup: HashMap<(u32, u32), usize>,
    data: Vec<u8>,
}

impl OracleStore {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let index: StoreIndex = serde_json::from_slice(&read_file(&dir.join(INDEX_FILE))?)?;
        if index.version != STORE_VERSION {
            return Err(Error::VersionMismatch {
                expected: STORE_VERSION.to_string(),
                found: index.version.to_string(),
            });
        }
        let data = read_file(&dir.join(MASKS_FILE))?;
        let mut lookup = HashMap::with_capacity(index.entries.len());
        for (i, e) in index.entries.iter().enumerate() {
            if lookup.insert((e.view_id, e.sp_id), i).is_some() {
                return Err(Error::Format(format!(
                    "duplicate oracle entry (view {}, superpoint {})",
                    e.view_id, e.sp_id
                )));
            }
        }
        Ok(OracleStore {
            dir,
            index,
            lookup,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.index.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.entries.is_empty()
    }

    pub fn contains(&self, view_id: u32, sp_id: u32) -> bool {
        self.lookup.contains_key(&(view_id, sp_id))
    }

    fn decode_entry(&self, e: &IndexEntry) -> Result<OracleResponse> {
        let start = usize::try_from(e.offset).unwrap_or(usize::MAX);
        let decoded = if start > self.data.len() {
            Err(Error::Truncated {
                offset: e.offset,
                needed: e.offset - self.data.len() as u64,
            })
        } else {
            decode_response(&mut Reader::new(&self.data[start..]), e.width, e.height)
        };
        decoded.map_err(|err| {
            Error::Format(format!(
                "oracle entry (view {}, superpoint {}) at offset {}: {err}",
                e.view_id, e.sp_id, e.offset
            ))
        })
    }

    pub fn get(&self, view_id: u32, sp_id: u32) -> Result<OracleResponse> {
        let &i = self
            .lookup
            .get(&(view_id, sp_id))
            .ok_or(Error::MissingOracleData { view_id, sp_id })?;
        self.decode_entry(&self.index.entries[i])
    }

    /// Decodes every entry; the first failure is returned.
    pub fn validate(&self) -> Result<()> {
        for e in &self.index.entries {
            self.decode_entry(e)?;
        }
        Ok(())
    }
}
