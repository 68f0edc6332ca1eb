//! Normal estimation and nearest-neighbour queries over scene points.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use rstar::primitives::GeomWithData;
use rstar::RTree;

/// Neighbour count used for point-cloud normal estimation.
pub const PCA_NEIGHBORS: usize = 16;

type Entry = GeomWithData<[f32; 3], u32>;

/// Spatial index over scene points with deterministic tie handling. An
/// R-tree copes with the large runs of identical coordinates that planar
/// floors and walls produce.
pub struct PointIndex {
    tree: RTree<Entry>,
    len: usize,
}

impl PointIndex {
    pub fn new(points: &[[f32; 3]]) -> Self {
        let entries = points.iter().enumerate().map(|(i, p)| Entry::new(*p, i as u32)).collect();
        PointIndex {
            tree: RTree::bulk_load(entries),
            len: points.len(),
        }
    }

    fn nearest(&self, query: &[f32; 3], n: usize) -> impl Iterator<Item = (u32, f32)> + '_ {
        self.tree
            .nearest_neighbor_iter_with_distance_2(query)
            .take(n)
            .map(|(e, d)| (e.data, d))
    }

    /// The `k` nearest other points of `points[i]`, ordered by
    /// (distance, index).
    pub fn knn_excluding(&self, points: &[[f32; 3]], i: usize, k: usize) -> Vec<(u32, f32)> {
        if k == 0 || self.len <= 1 {
            return Vec::new();
        }
        // Pull a few extra so ties at the cut-off resolve by index.
        let want = (k + 1 + 4).min(self.len);
        let mut found: Vec<(u32, f32)> = self.nearest(&points[i], want).filter(|nn| nn.0 as usize != i).collect();
        found.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        found.truncate(k);
        found
    }

    /// The `k` nearest points of `query` (including coincident ones).
    pub fn knn(&self, query: &[f32; 3], k: usize) -> Vec<u32> {
        if k == 0 || self.len == 0 {
            return Vec::new();
        }
        let mut found: Vec<(u32, f32)> = self.nearest(query, k.min(self.len)).collect();
        found.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        found.into_iter().map(|(i, _)| i).collect()
    }
}

/// Area-weighted vertex normals. Vertices touched by no (non-degenerate)
/// face get `None`.
pub fn face_vertex_normals(points: &[[f32; 3]], faces: &[[u32; 3]]) -> Vec<Option<[f32; 3]>> {
    let mut acc = vec![Vector3::<f64>::zeros(); points.len()];
    let v = |i: u32| {
        let p = points[i as usize];
        Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64)
    };
    for f in faces {
        // Cross product length is twice the area, so this weights by area.
        let n = (v(f[1]) - v(f[0])).cross(&(v(f[2]) - v(f[0])));
        for &i in f {
            acc[i as usize] += n;
        }
    }
    acc.into_iter()
        .map(|n| {
            let len = n.norm();
            (len > 1e-20).then(|| to_f32(n / len))
        })
        .collect()
}

/// Normal of the plane fitted to the point's neighbourhood, oriented away
/// from `orient_from`.
pub fn pca_normal(
    points: &[[f32; 3]],
    neighborhood: &[u32],
    at: usize,
    orient_from: &Vector3<f64>,
) -> [f32; 3] {
    let pts: Vec<Vector3<f64>> = neighborhood
        .iter()
        .map(|&i| {
            let p = points[i as usize];
            Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64)
        })
        .collect();
    if pts.len() < 3 {
        return [0.0, 0.0, 1.0];
    }
    let mean = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
    let mut cov = Matrix3::<f64>::zeros();
    for p in &pts {
        let d = p - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let (min_idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &ev)| if ev < best.1 { (i, ev) } else { best });
    let mut n: Vector3<f64> = eig.eigenvectors.column(min_idx).into_owned();
    let len = n.norm();
    if !(len > 1e-20) {
        return [0.0, 0.0, 1.0];
    }
    n /= len;
    let p = points[at];
    let outward = Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64) - orient_from;
    if n.dot(&outward) < 0.0 {
        n = -n;
    }
    to_f32(n)
}

/// Fills normals for a scene lacking them: from faces when available, with
/// 16-neighbour PCA for everything else.
pub fn estimate_normals(points: &[[f32; 3]], faces: Option<&[[u32; 3]]>) -> Vec<[f32; 3]> {
    let from_faces = match faces {
        Some(f) => face_vertex_normals(points, f),
        None => vec![None; points.len()],
    };
    if from_faces.iter().all(Option::is_some) {
        return from_faces.into_iter().map(Option::unwrap).collect();
    }
    let index = PointIndex::new(points);
    let centroid = points
        .iter()
        .map(|p| Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64))
        .sum::<Vector3<f64>>()
        / points.len().max(1) as f64;
    from_faces
        .into_par_iter()
        .enumerate()
        .map(|(i, n)| {
            n.unwrap_or_else(|| {
                let nb = index.knn(&points[i], PCA_NEIGHBORS);
                renormalize(pca_normal(points, &nb, i, &centroid))
            })
        })
        .collect()
}

/// Pairs of distinct groups `(a, b)`, `a < b`, having at least one pair of
/// member points closer than `threshold`, found by hashing points into a
/// grid of `threshold`-sized cells. `group[i]` is the group of point `i`;
/// `u32::MAX` marks points to ignore. Output is sorted.
pub fn groups_within(points: &[[f32; 3]], group: &[u32], threshold: f64) -> Vec<(u32, u32)> {
    use std::collections::{HashMap, HashSet};
    assert!(threshold > 0.0);
    let cell_of = |p: &[f32; 3]| -> [i64; 3] {
        [0, 1, 2].map(|k| (p[k] as f64 / threshold).floor() as i64)
    };
    // Cell -> (group, point) sorted by group, so each cell holds runs.
    let mut cells: HashMap<[i64; 3], Vec<(u32, u32)>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        if group[i] != u32::MAX {
            cells.entry(cell_of(p)).or_default().push((group[i], i as u32));
        }
    }
    for v in cells.values_mut() {
        v.sort_unstable();
    }
    let runs = |v: &[(u32, u32)]| -> Vec<(u32, std::ops::Range<usize>)> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=v.len() {
            if i == v.len() || v[i].0 != v[start].0 {
                out.push((v[start].0, start..i));
                start = i;
            }
        }
        out
    };
    let t2 = threshold * threshold;
    let d2 = |a: u32, b: u32| -> f64 {
        let (p, q) = (points[a as usize], points[b as usize]);
        (0..3).map(|k| (p[k] as f64 - q[k] as f64).powi(2)).sum()
    };
    let keys: Vec<[i64; 3]> = cells.keys().copied().collect();
    let mut pairs: Vec<(u32, u32)> = keys
        .par_iter()
        .flat_map_iter(|key| {
            let here = &cells[key];
            let here_runs = runs(here);
            let mut found: HashSet<(u32, u32)> = HashSet::new();
            for dx in -1..=1i64 {
                for dy in -1..=1i64 {
                    for dz in -1..=1i64 {
                        let nk = [key[0] + dx, key[1] + dy, key[2] + dz];
                        // Visit each unordered cell pair once.
                        if nk < *key {
                            continue;
                        }
                        let Some(there) = cells.get(&nk) else { continue };
                        let there_runs = runs(there);
                        for (ga, ra) in &here_runs {
                            for (gb, rb) in &there_runs {
                                if ga == gb {
                                    continue;
                                }
                                let pair = ((*ga).min(*gb), (*ga).max(*gb));
                                if found.contains(&pair) {
                                    continue;
                                }
                                let hit = here[ra.clone()].iter().any(|&(_, a)| {
                                    there[rb.clone()].iter().any(|&(_, b)| d2(a, b) < t2)
                                });
                                if hit {
                                    found.insert(pair);
                                }
                            }
                        }
                    }
                }
            }
            found.into_iter()
        })
        .collect();
    pairs.par_sort_unstable();
    pairs.dedup();
    pairs
}

fn to_f32(n: Vector3<f64>) -> [f32; 3] {
    renormalize([n.x as f32, n.y as f32, n.z as f32])
}

/// Rescales in f32 so the stored vector is unit length to f32 precision.
pub fn renormalize(n: [f32; 3]) -> [f32; 3] {
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if len > 0.0 && len.is_finite() {
        [n[0] / len, n[1] / len, n[2] / len]
    } else {
        [0.0, 0.0, 1.0]
    }
}
