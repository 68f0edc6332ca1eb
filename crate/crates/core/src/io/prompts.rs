//! Prompt dump consumed by the offline export adapter: magic `PRM1`, u32
//! record count, then per record u32 view_id, u32 sp_id, u32 k and k
//! (u32 row, u32 col) pairs.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_file, write_file, PutLe, Reader};
use crate::mask_oracle::{PromptSet, MAX_PROMPTS};

const MAGIC: &[u8; 4] = b"PRM1";

pub fn prompts_to_bytes(prompts: &[PromptSet]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.put_u32(prompts.len() as u32);
    for p in prompts {
        out.put_u32(p.view_id);
        out.put_u32(p.sp_id);
        out.put_u32(p.points.len() as u32);
        for &(r, c) in &p.points {
            out.put_u32(r);
            out.put_u32(c);
        }
    }
    out
}

pub fn prompts_from_bytes(bytes: &[u8]) -> Result<Vec<PromptSet>> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MAGIC)?;
    let n = r.u32()?;
    let mut out = Vec::with_capacity((n as usize).min(r.remaining() / 12));
    for _ in 0..n {
        let view_id = r.u32()?;
        let sp_id = r.u32()?;
        let k = r.u32()? as usize;
        if k > MAX_PROMPTS {
            return Err(Error::Format(format!(
                "prompt set (view {view_id}, superpoint {sp_id}) has {k} points"
            )));
        }
        let points = (0..k).map(|_| Ok((r.u32()?, r.u32()?))).collect::<Result<_>>()?;
        out.push(PromptSet { view_id, sp_id, points });
    }
    r.finish()?;
    Ok(out)
}

pub fn save_prompts(prompts: &[PromptSet], path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &prompts_to_bytes(prompts))
}

pub fn load_prompts(path: impl AsRef<Path>) -> Result<Vec<PromptSet>> {
    prompts_from_bytes(&read_file(path.as_ref())?)
}
