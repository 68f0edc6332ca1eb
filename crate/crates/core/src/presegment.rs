//! Geometric over-segmentation into superpoints: Felzenszwalb–Huttenlocher
//! merging over a normal-dissimilarity graph built from mesh edges or
//! symmetrized k-nearest-neighbour edges.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointIndex;
use crate::model::{SceneGeometry, Superpoint};
use crate::union_find::UnionFind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PresegmentConfig {
    pub k_thresh: f64,
    pub seg_min_verts: usize,
    pub knn: usize,
}

impl PresegmentConfig {
    /// Parameters for ScanNet-density meshes.
    pub const SCANNET: PresegmentConfig = PresegmentConfig {
        k_thresh: 0.01,
        seg_min_verts: 20,
        knn: 8,
    };

    /// Parameters for the denser ScanNet++ meshes.
    pub const SCANNETPP: PresegmentConfig = PresegmentConfig {
        k_thresh: 0.2,
        seg_min_verts: 500,
        knn: 8,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.k_thresh > 0.0) {
            return Err(Error::Config(format!("k_thresh must be > 0, got {}", self.k_thresh)));
        }
        if self.seg_min_verts < 1 || self.knn < 1 {
            return Err(Error::Config("seg_min_verts and knn must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for PresegmentConfig {
    fn default() -> Self {
        Self::SCANNET
    }
}

/// Graph edge between points `i < j` with dissimilarity `1 - cos`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinityEdge {
    pub i: u32,
    pub j: u32,
    pub dissimilarity: f64,
}

fn dissimilarity(scene: &SceneGeometry, i: usize, j: usize) -> f64 {
    let (a, b) = (scene.normals[i], scene.normals[j]);
    let dot = a[0] as f64 * b[0] as f64 + a[1] as f64 * b[1] as f64 + a[2] as f64 * b[2] as f64;
    (1.0 - dot).clamp(0.0, 2.0)
}

/// Mesh edges in mesh mode, symmetrized k-NN pairs otherwise; sorted by
/// (i, j) and free of duplicates and self-loops.
pub fn build_affinity_edges(scene: &SceneGeometry, config: &PresegmentConfig) -> Vec<AffinityEdge> {
    let mut pairs: Vec<(u32, u32)> = match &scene.faces {
        Some(faces) => faces
            .iter()
            .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .filter(|(a, b)| a != b)
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect(),
        None => {
            if scene.is_empty() {
                return Vec::new();
            }
            let index = PointIndex::new(&scene.points);
            (0..scene.len())
                .into_par_iter()
                .flat_map_iter(|i| {
                    index
                        .knn_excluding(&scene.points, i, config.knn)
                        .into_iter()
                        .map(move |(j, _)| {
                            let i = i as u32;
                            (i.min(j), i.max(j))
                        })
                })
                .collect()
        }
    };
    pairs.par_sort_unstable();
    pairs.dedup();
    pairs
        .into_par_iter()
        .map(|(i, j)| AffinityEdge {
            i,
            j,
            dissimilarity: dissimilarity(scene, i as usize, j as usize),
        })
        .collect()
}

/// Felzenszwalb–Huttenlocher segmentation followed by absorption of
/// undersized components. Superpoints are numbered by their smallest
/// point index; centroids are left at zero (see
/// [`Superpoint::update_centroid`]).
pub fn felzenszwalb_partition(
    edges: &[AffinityEdge],
    num_points: usize,
    config: &PresegmentConfig,
) -> Vec<Vec<u32>> {
    let mut order: Vec<&AffinityEdge> = edges.iter().collect();
    order.sort_by(|a, b| {
        a.dissimilarity
            .total_cmp(&b.dissimilarity)
            .then(a.i.cmp(&b.i))
            .then(a.j.cmp(&b.j))
    });

    let mut uf = UnionFind::new(num_points);
    // Largest internal edge per root; merges happen in ascending order so
    // the merging edge is always the new maximum.
    let mut internal = vec![0.0f64; num_points];
    let k = config.k_thresh;
    for e in &order {
        let (a, b) = (uf.find(e.i as usize), uf.find(e.j as usize));
        if a == b {
            continue;
        }
        let ta = internal[a] + k / uf.set_size(a) as f64;
        let tb = internal[b] + k / uf.set_size(b) as f64;
        if e.dissimilarity <= ta.min(tb) {
            let root = uf.union(a, b).expect("distinct roots");
            internal[root] = e.dissimilarity;
        }
    }
    let min = config.seg_min_verts;
    for e in &order {
        let (a, b) = (uf.find(e.i as usize), uf.find(e.j as usize));
        if a != b && (uf.set_size(a) < min || uf.set_size(b) < min) {
            uf.union(a, b);
        }
    }
    uf.groups()
}

pub fn felzenszwalb_segment(
    scene: &SceneGeometry,
    edges: &[AffinityEdge],
    config: &PresegmentConfig,
) -> Vec<Superpoint> {
    felzenszwalb_partition(edges, scene.len(), config)
        .into_iter()
        .enumerate()
        .map(|(id, pts)| Superpoint::new(id as u32, pts, scene))
        .collect()
}

/// Edge construction plus segmentation.
pub fn presegment(scene: &SceneGeometry, config: &PresegmentConfig) -> Result<Vec<Superpoint>> {
    config.validate()?;
    let edges = build_affinity_edges(scene, config);
    Ok(felzenszwalb_segment(scene, &edges, config))
}
