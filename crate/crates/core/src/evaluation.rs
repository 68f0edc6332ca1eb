//! Class-agnostic average precision with floor and wall exclusion.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{InstanceSegmentation, Superpoint, FLOOR_ID, NONE_ID, WALL_ID};

/// How predictions touching excluded regions are handled; stored in every
/// report.
pub const EXCLUSION_RULE: &str = "points labeled NONE or an excluded id are removed from ground truth; \
     predictions with at least half their points excluded are dropped, the rest are trimmed to \
     their non-excluded points";

pub const DEFAULT_EXCLUSIONS: [i32; 2] = [FLOOR_ID, WALL_ID];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub map: f64,
    pub ap50: f64,
    pub ap25: f64,
    /// (IoU threshold, AP), ascending thresholds.
    pub per_threshold: Vec<(f64, f64)>,
    pub num_gt: usize,
    pub num_pred: usize,
    pub excluded_ids: Vec<i32>,
    pub exclusion_rule: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// The IoU thresholds averaged into mAP: 0.50, 0.55, ..., 0.95.
pub fn map_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

fn sorted_count(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// IoU of two point sets after removing excluded points; 0 when both end
/// up empty.
pub fn mask_iou(pred: &[u32], gt: &[u32], excluded: impl Fn(u32) -> bool) -> f64 {
    let keep = |s: &[u32]| {
        let mut v: Vec<u32> = s.iter().copied().filter(|&p| !excluded(p)).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let (p, g) = (keep(pred), keep(gt));
    let inter = sorted_count(&p, &g);
    let union = p.len() + g.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Area under the precision-recall curve with precision made monotone
/// from the right (all-point interpolation). `tp` is in ranking order.
pub fn average_precision(tp: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 || tp.is_empty() {
        return 0.0;
    }
    let mut recall = Vec::with_capacity(tp.len());
    let mut precision = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (i, &t) in tp.iter().enumerate() {
        hits += t as usize;
        recall.push(hits as f64 / num_gt as f64);
        precision.push(hits as f64 / (i + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for (r, p) in recall.into_iter().zip(precision) {
        ap += (r - prev_r) * p;
        prev_r = r;
    }
    ap
}

/// One predicted instance as an explicit point set, so predictions may
/// overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedInstance {
    pub id: u32,
    pub confidence: f64,
    pub points: Vec<u32>,
}

/// Instances of a per-point segmentation, in id order.
pub fn predicted_instances(pred: &InstanceSegmentation) -> Vec<PredictedInstance> {
    let mut points: BTreeMap<i64, Vec<u32>> = BTreeMap::new();
    for (p, &a) in pred.assignment.iter().enumerate() {
        if a != NONE_ID as i64 {
            points.entry(a).or_default().push(p as u32);
        }
    }
    let conf: HashMap<i64, f64> = pred.instances.iter().map(|i| (i.id as i64, i.confidence)).collect();
    points
        .into_iter()
        .map(|(id, points)| PredictedInstance {
            id: id as u32,
            confidence: conf.get(&id).copied().unwrap_or(0.0),
            points,
        })
        .collect()
}

struct Prepared {
    /// (confidence, id, IoU with each GT) for surviving predictions.
    preds: Vec<(f64, u32, Vec<f64>)>,
    num_gt: usize,
}

fn prepare(preds: &[PredictedInstance], gt: &[i32], exclusions: &[i32]) -> Prepared {
    let excluded = |g: i32| g == NONE_ID || exclusions.contains(&g);
    // GT instances are indexed by first appearance in point order, which
    // keeps matching ties independent of the ids chosen for them.
    let mut gt_index: HashMap<i32, usize> = HashMap::new();
    for &g in gt {
        if !excluded(g) {
            let n = gt_index.len();
            gt_index.entry(g).or_insert(n);
        }
    }
    let mut gt_size = vec![0usize; gt_index.len()];
    for &g in gt {
        if let Some(&i) = gt_index.get(&g) {
            gt_size[i] += 1;
        }
    }

    let preds = preds
        .iter()
        .filter_map(|pi| {
            let mut pts = pi.points.clone();
            pts.sort_unstable();
            pts.dedup();
            let mut overlap: HashMap<usize, usize> = HashMap::new();
            let mut dropped = 0;
            for &p in &pts {
                match gt_index.get(&gt[p as usize]) {
                    Some(&g) => *overlap.entry(g).or_default() += 1,
                    None => dropped += 1,
                }
            }
            if pts.is_empty() || 2 * dropped >= pts.len() {
                return None;
            }
            let size = pts.len() - dropped;
            let ious = (0..gt_size.len())
                .map(|g| {
                    let inter = overlap.get(&g).copied().unwrap_or(0);
                    inter as f64 / (size + gt_size[g] - inter) as f64
                })
                .collect();
            Some((pi.confidence, pi.id, ious))
        })
        .collect();
    Prepared {
        preds,
        num_gt: gt_size.len(),
    }
}

fn ap_at(prep: &Prepared, order: &[usize], threshold: f64) -> f64 {
    let mut matched = vec![false; prep.num_gt];
    let tp: Vec<bool> = order
        .iter()
        .map(|&k| {
            let ious = &prep.preds[k].2;
            let mut best: Option<usize> = None;
            for (g, &iou) in ious.iter().enumerate() {
                if !matched[g] && iou >= threshold && best.map_or(true, |b| iou > ious[b]) {
                    best = Some(g);
                }
            }
            if let Some(g) = best {
                matched[g] = true;
            }
            best.is_some()
        })
        .collect();
    average_precision(&tp, prep.num_gt)
}

/// AP report of `pred` against per-point ground truth `gt`.
pub fn evaluate(pred: &InstanceSegmentation, gt: &[i32], exclusions: &[i32]) -> Result<ApReport> {
    pred.validate()?;
    if pred.assignment.len() != gt.len() {
        return Err(crate::error::Error::invalid(
            "segmentation",
            format!("{} assignments for {} points", pred.assignment.len(), gt.len()),
        ));
    }
    evaluate_instances(&predicted_instances(pred), gt, exclusions)
}

/// AP report for explicit, possibly overlapping, predicted point sets.
/// Points must index `gt`.
pub fn evaluate_instances(preds: &[PredictedInstance], gt: &[i32], exclusions: &[i32]) -> Result<ApReport> {
    if let Some(p) = preds.iter().find(|p| p.points.iter().any(|&x| x as usize >= gt.len())) {
        return Err(crate::error::Error::invalid(
            "prediction",
            format!("instance {} references a point beyond the {} scene points", p.id, gt.len()),
        ));
    }
    let prep = prepare(preds, gt, exclusions);
    let mut order: Vec<usize> = (0..prep.preds.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&prep.preds[a], &prep.preds[b]);
        pb.0.total_cmp(&pa.0).then(pa.1.cmp(&pb.1))
    });
    let mut report = ApReport {
        map: 0.0,
        ap50: 0.0,
        ap25: 0.0,
        per_threshold: Vec::new(),
        num_gt: prep.num_gt,
        num_pred: prep.preds.len(),
        excluded_ids: exclusions.to_vec(),
        exclusion_rule: EXCLUSION_RULE.to_string(),
        warning: None,
    };
    if prep.num_gt == 0 {
        let msg = "no ground-truth instances remain after exclusion".to_string();
        log::warn!("{msg}");
        report.warning = Some(msg);
        return Ok(report);
    }
    let mut thresholds = vec![0.25];
    thresholds.extend(map_thresholds());
    for t in thresholds {
        report.per_threshold.push((t, ap_at(&prep, &order, t)));
    }
    report.ap25 = report.per_threshold[0].1;
    report.ap50 = report.per_threshold[1].1;
    report.map = report.per_threshold[1..].iter().map(|x| x.1).sum::<f64>() / 10.0;
    Ok(report)
}

/// Ground truth coarsened to superpoints: every point takes the majority
/// label of its superpoint (ties to the smaller id). Points outside all
/// superpoints keep their label.
pub fn superpoint_granular_gt(gt: &[i32], superpoints: &[Superpoint]) -> Vec<i32> {
    let mut out = gt.to_vec();
    for sp in superpoints {
        let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
        for &p in &sp.point_indices {
            *counts.entry(gt[p as usize]).or_default() += 1;
        }
        let best = counts.iter().map(|c| *c.1).max().unwrap_or(0);
        let Some((&label, _)) = counts.iter().find(|c| *c.1 == best) else { continue };
        for &p in &sp.point_indices {
            out[p as usize] = label;
        }
    }
    out
}
