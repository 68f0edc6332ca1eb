//! Promptable-segmenter abstraction.
//!
//! Prompts are sampled inside a superpoint's projection mask; an oracle
//! answers with three candidate masks (whole, medium, small) and one of
//! them is chosen by the multi-scale selection rule. Two oracles exist: a
//! store of exported model outputs and a synthetic ground-truth oracle.

mod features;
mod file;
mod synthetic;

pub use features::{interpolate_feature, FeatureMap, FeatureStore};
pub use file::FileOracle;
pub use synthetic::{gt_label_image, pixel_points, NoiseConfig, SyntheticOracle};
pub(crate) use synthetic::{instance_layout, plane_side};

use serde::{Deserialize, Serialize};

use crate::bitmap::Bitmap;
use crate::edt::squared_edt;
use crate::error::{Error, Result};
use crate::model::CameraView;
use crate::projection::ProjectionMask;

/// Default number of prompt points per projection.
pub const DEFAULT_PROMPTS: usize = 5;
pub const MAX_PROMPTS: usize = 16;
/// Confidence margin of the multi-scale selection rule.
pub const SELECTION_MARGIN: f32 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub view_id: u32,
    pub sp_id: u32,
    /// (row, col) pixels.
    pub points: Vec<(u32, u32)>,
}

/// Radius of the disk cleared around each chosen prompt.
pub fn suppression_radius(area: usize) -> f64 {
    ((area as f64).sqrt() / 4.0).max(3.0)
}

/// Picks up to `k` prompts by repeatedly taking the distance-transform
/// maximum (ties to the smallest (row, col)) and clearing a disk around it.
pub fn sample_prompts(mask: &ProjectionMask, k: usize) -> PromptSet {
    let mut prompt = PromptSet {
        view_id: mask.view_id,
        sp_id: mask.sp_id,
        points: Vec::new(),
    };
    if mask.pixels.is_empty() || k == 0 {
        return prompt;
    }
    let r0 = mask.pixels.iter().map(|p| p.0).min().unwrap();
    let r1 = mask.pixels.iter().map(|p| p.0).max().unwrap();
    let c0 = mask.pixels.iter().map(|p| p.1).min().unwrap();
    let c1 = mask.pixels.iter().map(|p| p.1).max().unwrap();
    let (w, h) = (c1 - c0 + 1, r1 - r0 + 1);
    // Cropping to the bounding box does not change the transform: every
    // pixel outside it is background anyway.
    let local = Bitmap::from_pixels(w, h, mask.pixels.iter().map(|&(r, c)| (r - r0, c - c0)));
    let mut dist = squared_edt(&local);
    let radius = suppression_radius(mask.pixel_count);
    let r2 = radius * radius;
    let reach = radius.ceil() as i64;

    for _ in 0..k.min(MAX_PROMPTS) {
        let (best, &best_val) = dist
            .iter()
            .enumerate()
            .fold((0, &0u32), |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc });
        if best_val == 0 {
            break;
        }
        let (br, bc) = ((best / w as usize) as i64, (best % w as usize) as i64);
        prompt.points.push((br as u32 + r0, bc as u32 + c0));
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                let (r, c) = (br + dr, bc + dc);
                if r < 0 || c < 0 || r >= h as i64 || c >= w as i64 {
                    continue;
                }
                if ((dr * dr + dc * dc) as f64) < r2 {
                    dist[(r * w as i64 + c) as usize] = 0;
                }
            }
        }
    }
    prompt
}

/// One scale of an oracle answer.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskCandidate {
    pub mask: Bitmap,
    pub confidence: f32,
    pub area: u32,
}

impl MaskCandidate {
    pub fn new(mask: Bitmap, confidence: f32) -> Result<Self> {
        let area = mask.count() as u32;
        if area == 0 {
            return Err(Error::invalid("mask candidate", "empty mask"));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::invalid(
                "mask candidate",
                format!("confidence {confidence} outside [0, 1]"),
            ));
        }
        Ok(MaskCandidate {
            mask,
            confidence,
            area,
        })
    }
}

/// Three candidates ordered by non-increasing area: whole, medium, small.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResponse {
    pub candidates: [MaskCandidate; 3],
}

impl OracleResponse {
    pub fn new(candidates: [MaskCandidate; 3]) -> Result<Self> {
        let [a, b, c] = &candidates;
        if !(a.area >= b.area && b.area >= c.area) {
            return Err(Error::invalid(
                "oracle response",
                format!("areas {} {} {} are not descending", a.area, b.area, c.area),
            ));
        }
        let dims = (a.mask.width(), a.mask.height());
        if candidates.iter().any(|m| (m.mask.width(), m.mask.height()) != dims) {
            return Err(Error::invalid("oracle response", "candidate sizes differ"));
        }
        Ok(OracleResponse { candidates })
    }
}

/// Index of the chosen candidate: the largest unless a smaller one is more
/// confident by more than the margin, then the medium under the same rule.
pub fn select_index(resp: &OracleResponse) -> usize {
    let [l, m, s] = resp.candidates.each_ref().map(|c| c.confidence);
    if l >= m.max(s) - SELECTION_MARGIN {
        0
    } else if m >= s - SELECTION_MARGIN {
        1
    } else {
        2
    }
}

pub fn select_mask(resp: &OracleResponse) -> &MaskCandidate {
    &resp.candidates[select_index(resp)]
}

/// Anything that answers point prompts with multi-scale masks.
pub trait MaskOracle: Send + Sync {
    fn query(&self, view: &CameraView, prompt: &PromptSet) -> Result<OracleResponse>;
}
