//! Turning edge scores into instances: thresholding, a veto based on
//! two-edge paths around each edge, then union-find merging.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InstanceInfo, InstanceSegmentation, Superpoint, SuperpointGraph, NONE_ID};
use crate::union_find::UnionFind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CutConfig {
    /// τ: edges scoring below it are cut.
    pub affinity_threshold: f64,
    /// ρ: an edge is also cut when more than this share of its two-edge
    /// paths disagree (one side above τ, the other below).
    pub veto_ratio: f64,
    /// Score edges by network affinity instead of the raw oracle weight.
    pub use_affinity: bool,
}

impl Default for CutConfig {
    fn default() -> Self {
        CutConfig {
            affinity_threshold: 0.5,
            veto_ratio: 0.25,
            use_affinity: true,
        }
    }
}

impl CutConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("affinity_threshold", self.affinity_threshold), ("veto_ratio", self.veto_ratio)] {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Config(format!("{name} = {x} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// The score the cut uses for every edge.
pub fn edge_scores(graph: &SuperpointGraph, use_affinity: bool) -> Result<Vec<f64>> {
    graph
        .edges
        .iter()
        .map(|e| {
            let s = if use_affinity { e.affinity } else { e.w_sam };
            s.map(|s| s as f64).ok_or_else(|| {
                Error::invalid(
                    "graph",
                    format!(
                        "edge ({}, {}) has no {}",
                        e.u,
                        e.v,
                        if use_affinity { "affinity" } else { "oracle weight" }
                    ),
                )
            })
        })
        .collect()
}

/// Connect/cut decision per edge given explicit scores.
pub fn decide_with_scores(
    num_nodes: usize,
    edges: &[(u32, u32)],
    scores: &[f64],
    tau: f64,
    rho: f64,
) -> Vec<bool> {
    let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); num_nodes];
    for (&(u, v), &s) in edges.iter().zip(scores) {
        adj[u as usize].push((v, s));
        adj[v as usize].push((u, s));
    }
    for list in &mut adj {
        list.sort_by_key(|x| x.0);
    }
    edges
        .par_iter()
        .zip(scores)
        .map(|(&(u, v), &s)| {
            if s < tau {
                return false;
            }
            let (a, b) = (&adj[u as usize], &adj[v as usize]);
            let (mut i, mut j) = (0, 0);
            let (mut hh, mut mixed) = (0usize, 0usize);
            while i < a.len() && j < b.len() {
                match a[i].0.cmp(&b[j].0) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        match (a[i].1 >= tau, b[j].1 >= tau) {
                            (true, true) => hh += 1,
                            (true, false) | (false, true) => mixed += 1,
                            (false, false) => {}
                        }
                        i += 1;
                        j += 1;
                    }
                }
            }
            let total = hh + mixed;
            !(total > 0 && mixed as f64 / total as f64 > rho)
        })
        .collect()
}

pub fn decide_connections(graph: &SuperpointGraph, config: &CutConfig) -> Result<Vec<bool>> {
    config.validate()?;
    let scores = edge_scores(graph, config.use_affinity)?;
    let edges: Vec<(u32, u32)> = graph.edges.iter().map(|e| (e.u, e.v)).collect();
    Ok(decide_with_scores(
        graph.nodes.len(),
        &edges,
        &scores,
        config.affinity_threshold,
        config.veto_ratio,
    ))
}

/// Node components of the connected edges, numbered by smallest node.
pub fn components(num_nodes: usize, edges: &[(u32, u32)], connected: &[bool]) -> (Vec<u32>, usize) {
    let mut uf = UnionFind::new(num_nodes);
    for (&(u, v), &c) in edges.iter().zip(connected) {
        if c {
            uf.union(u as usize, v as usize);
        }
    }
    uf.labels()
}

/// One instance per component of connected edges. Instance confidence is
/// the mean score of the component's connected edges, 1 for a lone node.
/// Node `i` owns the points of `superpoints[i]`.
pub fn partition(
    superpoints: &[Superpoint],
    num_points: usize,
    edges: &[(u32, u32)],
    scores: &[f64],
    connected: &[bool],
) -> InstanceSegmentation {
    let (label, k) = components(superpoints.len(), edges, connected);
    let mut sum = vec![0.0f64; k];
    let mut count = vec![0usize; k];
    for ((&(u, _), &s), &c) in edges.iter().zip(scores).zip(connected) {
        if c {
            let l = label[u as usize] as usize;
            sum[l] += s;
            count[l] += 1;
        }
    }
    let instances = (0..k)
        .map(|l| InstanceInfo {
            id: l as u32,
            confidence: if count[l] == 0 {
                1.0
            } else {
                (sum[l] / count[l] as f64).clamp(0.0, 1.0)
            },
        })
        .collect();
    let mut assignment = vec![NONE_ID as i64; num_points];
    for (i, sp) in superpoints.iter().enumerate() {
        for &p in &sp.point_indices {
            assignment[p as usize] = label[i] as i64;
        }
    }
    InstanceSegmentation { assignment, instances }
}

/// Decision plus partition.
pub fn segment(
    graph: &SuperpointGraph,
    superpoints: &[Superpoint],
    num_points: usize,
    config: &CutConfig,
) -> Result<InstanceSegmentation> {
    if graph.nodes.len() != superpoints.len() {
        return Err(Error::invalid(
            "graph",
            format!("{} nodes for {} superpoints", graph.nodes.len(), superpoints.len()),
        ));
    }
    let by_id: HashMap<u32, usize> = superpoints.iter().enumerate().map(|(i, s)| (s.sp_id, i)).collect();
    for (i, n) in graph.nodes.iter().enumerate() {
        if by_id.get(&n.sp_id) != Some(&i) {
            return Err(Error::invalid(
                "graph",
                format!("node {i} has sp_id {} which is not superpoint {i}", n.sp_id),
            ));
        }
    }
    let connected = decide_connections(graph, config)?;
    let scores = edge_scores(graph, config.use_affinity)?;
    let edges: Vec<(u32, u32)> = graph.edges.iter().map(|e| (e.u, e.v)).collect();
    let seg = partition(superpoints, num_points, &edges, &scores, &connected);
    seg.validate()?;
    Ok(seg)
}
