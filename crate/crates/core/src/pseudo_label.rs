//! Sparse edge labels from per-view whole-image instance maps.
//!
//! In each view where both superpoints of an edge are visible, each side
//! takes the majority instance label under its projection. Views where
//! either side is mostly background or tied abstain. An edge is labeled
//! only when enough views vote and they all agree.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::imap::{InstanceMap, InstanceMapStore};
use crate::model::{CameraView, EdgeLabel, SuperpointGraph};
use crate::projection::{ProjectionMask, VisibilityIndex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PseudoLabelConfig {
    pub n_min: usize,
}

impl Default for PseudoLabelConfig {
    fn default() -> Self {
        PseudoLabelConfig { n_min: 10 }
    }
}

impl PseudoLabelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_min < 1 {
            return Err(Error::Config("n_min must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CoVisibilityRecord {
    pub u: u32,
    pub v: u32,
    pub votes_same: u32,
    pub votes_diff: u32,
}

/// Most frequent non-background label under the mask; `None` when every
/// pixel is background or the top count is shared.
pub fn majority_instance(mask: &ProjectionMask, map: &InstanceMap) -> Option<u16> {
    let mut counts: Vec<(u16, u32)> = Vec::new();
    for &(r, c) in &mask.pixels {
        let l = map.at(r, c);
        if l == 0 {
            continue;
        }
        match counts.iter_mut().find(|e| e.0 == l) {
            Some(e) => e.1 += 1,
            None => counts.push((l, 1)),
        }
    }
    let best = counts.iter().map(|e| e.1).max()?;
    let mut top = counts.iter().filter(|e| e.1 == best);
    let first = top.next()?;
    top.next().is_none().then_some(first.0)
}

/// Same/different votes for edge `(u, v)` over every co-visible view.
pub fn record_edge_votes(
    u: u32,
    v: u32,
    visibility: &VisibilityIndex,
    views: &[CameraView],
    maps: &InstanceMapStore,
) -> Result<CoVisibilityRecord> {
    let mut rec = CoVisibilityRecord {
        u,
        v,
        ..Default::default()
    };
    for vi in visibility.co_visible_views(u as usize, v as usize) {
        let view = &views[vi];
        let map = maps.get(view.view_id).ok_or_else(|| {
            Error::invalid("instance maps", format!("no instance map for view {}", view.view_id))
        })?;
        let la = majority_instance(visibility.mask(vi, u as usize).unwrap(), map);
        let lb = majority_instance(visibility.mask(vi, v as usize).unwrap(), map);
        if let (Some(a), Some(b)) = (la, lb) {
            if a == b {
                rec.votes_same += 1;
            } else {
                rec.votes_diff += 1;
            }
        }
    }
    Ok(rec)
}

/// POSITIVE for at least `n_min` unanimous same votes, NEGATIVE for at
/// least `n_min` unanimous different votes.
pub fn make_pseudo_label(rec: &CoVisibilityRecord, n_min: usize) -> Option<EdgeLabel> {
    let n = n_min as u32;
    if rec.votes_same >= n && rec.votes_diff == 0 {
        Some(EdgeLabel::Positive)
    } else if rec.votes_diff >= n && rec.votes_same == 0 {
        Some(EdgeLabel::Negative)
    } else {
        None
    }
}

pub fn make_pseudo_labels(records: &[CoVisibilityRecord], n_min: usize) -> Vec<Option<EdgeLabel>> {
    records.iter().map(|r| make_pseudo_label(r, n_min)).collect()
}

pub fn record_all_votes(
    graph: &SuperpointGraph,
    visibility: &VisibilityIndex,
    views: &[CameraView],
    maps: &InstanceMapStore,
) -> Result<Vec<CoVisibilityRecord>> {
    maps.validate_dims(views)?;
    graph
        .edges
        .par_iter()
        .map(|e| record_edge_votes(e.u, e.v, visibility, views, maps))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelStats {
    pub positive: usize,
    pub negative: usize,
    pub unlabeled: usize,
}

/// Overwrites every edge label of `graph` from the vote records.
pub fn apply_labels(graph: &mut SuperpointGraph, records: &[CoVisibilityRecord], n_min: usize) -> LabelStats {
    let mut stats = LabelStats::default();
    for (e, r) in graph.edges.iter_mut().zip(records) {
        debug_assert_eq!((e.u, e.v), (r.u, r.v));
        e.label = make_pseudo_label(r, n_min);
        match e.label {
            Some(EdgeLabel::Positive) => stats.positive += 1,
            Some(EdgeLabel::Negative) => stats.negative += 1,
            None => stats.unlabeled += 1,
        }
    }
    stats
}
