//! Superpoint graph assembly: adjacency, oracle-derived edge weights fused
//! over views, and node features sampled from encoder feature maps.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::groups_within;
use crate::mask_oracle::{
    interpolate_feature, sample_prompts, select_mask, FeatureStore, MaskCandidate, MaskOracle,
    PromptSet, DEFAULT_PROMPTS, MAX_PROMPTS,
};
use crate::model::{CameraView, GraphEdge, GraphNode, SceneGeometry, Superpoint, SuperpointGraph, FEATURE_DIM};
use crate::projection::{render_all, superpoint_distance_2d, DepthMap, ProjectionConfig, VisibilityIndex};
use crate::rng::keyed_rng;
use crate::scalar::Scalar;

const KEY_FEATURE_SAMPLES: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyMode {
    /// Superpoints are adjacent when a mesh edge joins them.
    MeshSharedEdge,
    /// Superpoints are adjacent when some pair of their points is closer
    /// than the threshold.
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyConfig {
    pub mode: AdjacencyMode,
    pub distance_threshold: f64,
}

impl Default for AdjacencyConfig {
    fn default() -> Self {
        AdjacencyConfig {
            mode: AdjacencyMode::Distance,
            distance_threshold: 0.10,
        }
    }
}

impl AdjacencyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mode == AdjacencyMode::Distance && !(self.distance_threshold > 0.0) {
            return Err(Error::Config(format!(
                "distance_threshold must be > 0, got {}",
                self.distance_threshold
            )));
        }
        Ok(())
    }
}

/// Owning superpoint index of every point (`u32::MAX` if unowned).
pub fn point_owners(superpoints: &[Superpoint], num_points: usize) -> Vec<u32> {
    let mut owner = vec![u32::MAX; num_points];
    for (i, sp) in superpoints.iter().enumerate() {
        for &p in &sp.point_indices {
            owner[p as usize] = i as u32;
        }
    }
    owner
}

/// Adjacent superpoint pairs as sorted `(u, v)` position indices, `u < v`.
pub fn build_adjacency(
    scene: &SceneGeometry,
    superpoints: &[Superpoint],
    config: &AdjacencyConfig,
) -> Result<Vec<(u32, u32)>> {
    config.validate()?;
    let owner = point_owners(superpoints, scene.len());
    let mut pairs = match (config.mode, &scene.faces) {
        (AdjacencyMode::MeshSharedEdge, Some(faces)) => {
            let mut pairs: Vec<(u32, u32)> = faces
                .iter()
                .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
                .filter_map(|(a, b)| {
                    let (oa, ob) = (owner[a as usize], owner[b as usize]);
                    (oa != ob && oa != u32::MAX && ob != u32::MAX).then(|| (oa.min(ob), oa.max(ob)))
                })
                .collect();
            pairs.sort_unstable();
            pairs.dedup();
            pairs
        }
        (AdjacencyMode::MeshSharedEdge, None) => {
            return Err(Error::Config("mesh_shared_edge adjacency needs a mesh scene".into()))
        }
        (AdjacencyMode::Distance, _) => groups_within(&scene.points, &owner, config.distance_threshold),
    };
    pairs.dedup();
    Ok(pairs)
}

/// `max(|A∩B|/|A|, |A∩B|/|B|)` from counts; zero for empty masks.
pub fn overlap_weight(intersection: usize, area_a: usize, area_b: usize) -> f64 {
    if area_a == 0 || area_b == 0 {
        return 0.0;
    }
    let i = intersection as f64;
    (i / area_a as f64).max(i / area_b as f64)
}

/// Single-view edge weight of two selected masks.
pub fn single_view_weight(a: &MaskCandidate, b: &MaskCandidate) -> f64 {
    overlap_weight(a.mask.intersection_count(&b.mask), a.area as usize, b.area as usize)
}

/// What one view says about an edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeObservation<T = f64> {
    pub view_id: u32,
    pub w_i: T,
    pub conf_a: T,
    pub conf_b: T,
    pub dist_2d: T,
}

/// L1-normalized view coefficients from `dist_2d · conf_a · conf_b`, or
/// uniform ones when every score is zero.
pub fn aggregation_coefficients<T: Scalar>(observations: &[EdgeObservation<T>]) -> Vec<T> {
    let scores: Vec<T> = observations.iter().map(|o| o.dist_2d * o.conf_a * o.conf_b).collect();
    let total: T = scores.iter().copied().sum();
    if total > T::zero() && total.is_finite() {
        scores.into_iter().map(|s| s / total).collect()
    } else {
        let n = T::lit(observations.len() as f64);
        vec![T::one() / n; observations.len()]
    }
}

/// Confidence- and separation-weighted mean of the per-view weights; zero
/// when no view sees both superpoints.
pub fn aggregate_edge_weight<T: Scalar>(observations: &[EdgeObservation<T>]) -> T {
    if observations.is_empty() {
        return T::zero();
    }
    let c = aggregation_coefficients(observations);
    let w: T = c.iter().zip(observations).map(|(&c, o)| c * o.w_i).sum();
    // Rounding can push a mean of ones a hair above one.
    w.max(T::zero()).min(T::one())
}

/// Mean of `samples_per_view` seeded feature samples per visible view,
/// averaged over views. Returns `None` when no view sees the superpoint.
pub fn compute_node_feature<T: Scalar>(
    sp_idx: usize,
    sp_id: u32,
    visibility: &VisibilityIndex,
    views: &[CameraView],
    features: &FeatureStore,
    samples_per_view: usize,
    seed: u64,
) -> Result<Option<Vec<T>>> {
    let visible = visibility.visible_views(sp_idx);
    if visible.is_empty() || samples_per_view == 0 {
        return Ok(None);
    }
    let mut total = vec![T::zero(); FEATURE_DIM];
    for &vi in &visible {
        let view = &views[vi];
        let fm = features
            .get(view.view_id)
            .ok_or(Error::MissingFeatureMap { view_id: view.view_id })?;
        let mask = visibility.mask(vi, sp_idx).expect("visible");
        let mut rng = keyed_rng(seed, &[KEY_FEATURE_SAMPLES, sp_id as u64, view.view_id as u64]);
        let mut acc = vec![T::zero(); fm.channels as usize];
        for _ in 0..samples_per_view {
            let px = mask.pixels[rng.gen_range(0..mask.pixels.len())];
            let f: Vec<T> = interpolate_feature(fm, px, view.height, view.width);
            for (a, x) in acc.iter_mut().zip(f) {
                *a += x;
            }
        }
        let k = T::lit(samples_per_view as f64);
        for (t, a) in total.iter_mut().zip(acc) {
            *t += a / k;
        }
    }
    let n = T::lit(visible.len() as f64);
    Ok(Some(total.into_iter().map(|t| t / n).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphBuildConfig {
    pub adjacency: AdjacencyConfig,
    pub projection: ProjectionConfig,
    pub prompts_per_view: usize,
    pub samples_per_view: usize,
    /// Cap on views consulted per edge; the views where the smaller of the
    /// two projections is largest are kept.
    pub max_views: Option<usize>,
    pub seed: u64,
}

impl Default for GraphBuildConfig {
    fn default() -> Self {
        GraphBuildConfig {
            adjacency: AdjacencyConfig::default(),
            projection: ProjectionConfig::default(),
            prompts_per_view: DEFAULT_PROMPTS,
            samples_per_view: 5,
            max_views: None,
            seed: 0,
        }
    }
}

impl GraphBuildConfig {
    pub fn validate(&self) -> Result<()> {
        self.adjacency.validate()?;
        if !(1..=MAX_PROMPTS).contains(&self.prompts_per_view) {
            return Err(Error::Config(format!(
                "prompts_per_view must be in 1..={MAX_PROMPTS}, got {}",
                self.prompts_per_view
            )));
        }
        if self.samples_per_view == 0 {
            return Err(Error::Config("samples_per_view must be >= 1".into()));
        }
        if self.max_views == Some(0) {
            return Err(Error::Config("max_views must be >= 1".into()));
        }
        Ok(())
    }
}

/// Rendered depth maps and the projection masks derived from them.
#[derive(Debug, Clone)]
pub struct SceneViews {
    pub depth_maps: Vec<DepthMap>,
    pub visibility: VisibilityIndex,
}

impl SceneViews {
    pub fn build(
        scene: &SceneGeometry,
        superpoints: &[Superpoint],
        views: &[CameraView],
        config: &ProjectionConfig,
    ) -> Self {
        let depth_maps = render_all(scene, views);
        let visibility = VisibilityIndex::build(scene, superpoints, views, &depth_maps, config);
        SceneViews { depth_maps, visibility }
    }
}

/// Views consulted for edge `(a, b)`.
pub fn edge_views(visibility: &VisibilityIndex, a: usize, b: usize, max_views: Option<usize>) -> Vec<usize> {
    let mut vs = visibility.co_visible_views(a, b);
    if let Some(cap) = max_views {
        if vs.len() > cap {
            let size = |v: usize| {
                let pa = visibility.mask(v, a).unwrap().pixel_count;
                let pb = visibility.mask(v, b).unwrap().pixel_count;
                pa.min(pb)
            };
            vs.sort_by_key(|&v| (std::cmp::Reverse(size(v)), v));
            vs.truncate(cap);
            vs.sort_unstable();
        }
    }
    vs
}

/// Every (view index, superpoint index) the graph builder will query,
/// with the first edge that needs it. Sorted by view then superpoint.
pub fn required_queries(
    edges: &[(u32, u32)],
    visibility: &VisibilityIndex,
    max_views: Option<usize>,
) -> Vec<((usize, usize), (u32, u32))> {
    let mut first: HashMap<(usize, usize), (u32, u32)> = HashMap::new();
    for &(a, b) in edges {
        for v in edge_views(visibility, a as usize, b as usize, max_views) {
            for s in [a, b] {
                first.entry((v, s as usize)).or_insert((a, b));
            }
        }
    }
    let mut out: Vec<_> = first.into_iter().collect();
    out.sort_unstable();
    out
}

/// The prompt sets the graph builder sends to the oracle, for export.
pub fn collect_prompts(
    scene: &SceneGeometry,
    superpoints: &[Superpoint],
    views: &[CameraView],
    config: &GraphBuildConfig,
) -> Result<Vec<PromptSet>> {
    config.validate()?;
    let sv = SceneViews::build(scene, superpoints, views, &config.projection);
    let edges = build_adjacency(scene, superpoints, &config.adjacency)?;
    Ok(required_queries(&edges, &sv.visibility, config.max_views)
        .into_par_iter()
        .map(|((v, s), _)| {
            let mut p = sample_prompts(sv.visibility.mask(v, s).unwrap(), config.prompts_per_view);
            p.sp_id = superpoints[s].sp_id;
            p
        })
        .collect())
}

/// Oracle mask chosen for one (view, superpoint), kept sparse.
#[derive(Debug, Clone)]
struct Selected {
    pixels: Vec<u32>,
    confidence: f32,
}

fn sorted_intersection(a: &[u32], b: &[u32]) -> usize {
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

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub nodes: usize,
    pub edges: usize,
    /// Nodes seen by no view; their features are zero.
    pub invisible_nodes: Vec<u32>,
    /// Edges whose superpoints are never co-visible; their weight is zero.
    pub edges_without_views: usize,
    pub oracle_queries: usize,
}

/// Builds the annotated graph: adjacency, fused oracle weights and node
/// features. Node `i` is `superpoints[i]`.
pub fn annotate_graph(
    scene: &SceneGeometry,
    superpoints: &[Superpoint],
    views: &[CameraView],
    oracle: &dyn MaskOracle,
    features: &FeatureStore,
    config: &GraphBuildConfig,
) -> Result<(SuperpointGraph, BuildReport)> {
    config.validate()?;
    let sv = SceneViews::build(scene, superpoints, views, &config.projection);
    annotate_with_views(scene, superpoints, views, &sv, oracle, features, config)
}

pub fn annotate_with_views(
    scene: &SceneGeometry,
    superpoints: &[Superpoint],
    views: &[CameraView],
    sv: &SceneViews,
    oracle: &dyn MaskOracle,
    features: &FeatureStore,
    config: &GraphBuildConfig,
) -> Result<(SuperpointGraph, BuildReport)> {
    config.validate()?;
    let vis = &sv.visibility;
    let adjacency = build_adjacency(scene, superpoints, &config.adjacency)?;
    let queries = required_queries(&adjacency, vis, config.max_views);

    let answers: Vec<Result<Selected>> = queries
        .par_iter()
        .map(|&((v, s), (a, b))| {
            let view = &views[v];
            let mut prompt = sample_prompts(vis.mask(v, s).unwrap(), config.prompts_per_view);
            prompt.sp_id = superpoints[s].sp_id;
            let resp = oracle
                .query(view, &prompt)
                .map_err(|e| e.with_edge(superpoints[a as usize].sp_id, superpoints[b as usize].sp_id))?;
            let chosen = select_mask(&resp);
            let w = chosen.mask.width();
            Ok(Selected {
                pixels: chosen.mask.pixels().map(|(r, c)| r * w + c).collect(),
                confidence: chosen.confidence,
            })
        })
        .collect();
    let mut selected: HashMap<(usize, usize), Selected> = HashMap::with_capacity(queries.len());
    for ((key, _), ans) in queries.iter().zip(answers) {
        selected.insert(*key, ans?);
    }

    let mut edges_without_views = 0;
    let edges: Vec<GraphEdge> = adjacency
        .par_iter()
        .map(|&(a, b)| {
            let obs: Vec<EdgeObservation> = edge_views(vis, a as usize, b as usize, config.max_views)
                .into_iter()
                .map(|v| {
                    let sa = &selected[&(v, a as usize)];
                    let sb = &selected[&(v, b as usize)];
                    let inter = sorted_intersection(&sa.pixels, &sb.pixels);
                    EdgeObservation {
                        view_id: views[v].view_id,
                        w_i: overlap_weight(inter, sa.pixels.len(), sb.pixels.len()),
                        conf_a: sa.confidence as f64,
                        conf_b: sb.confidence as f64,
                        dist_2d: superpoint_distance_2d(
                            vis.mask(v, a as usize).unwrap(),
                            vis.mask(v, b as usize).unwrap(),
                        ),
                    }
                })
                .collect();
            let mut e = GraphEdge::new(a, b);
            e.w_sam = Some(aggregate_edge_weight(&obs) as f32);
            (e, obs.is_empty())
        })
        .collect::<Vec<_>>()
        .into_iter()
        .map(|(e, empty)| {
            edges_without_views += empty as usize;
            e
        })
        .collect();

    let feats: Vec<Result<Option<Vec<f32>>>> = (0..superpoints.len())
        .into_par_iter()
        .map(|i| {
            compute_node_feature::<f64>(
                i,
                superpoints[i].sp_id,
                vis,
                views,
                features,
                config.samples_per_view,
                config.seed,
            )
            .map(|f| f.map(|f| f.into_iter().map(|x| x as f32).collect()))
        })
        .collect();
    let mut nodes = Vec::with_capacity(superpoints.len());
    let mut invisible = Vec::new();
    for (sp, f) in superpoints.iter().zip(feats) {
        let feature = match f? {
            Some(f) => f,
            None => {
                invisible.push(sp.sp_id);
                vec![0.0; FEATURE_DIM]
            }
        };
        nodes.push(GraphNode {
            sp_id: sp.sp_id,
            feature: Some(feature),
        });
    }
    if !invisible.is_empty() {
        log::warn!("{} superpoints are visible in no view; using zero features", invisible.len());
    }

    let graph = SuperpointGraph { nodes, edges };
    graph.validate()?;
    let report = BuildReport {
        nodes: graph.nodes.len(),
        edges: graph.edges.len(),
        invisible_nodes: invisible,
        edges_without_views,
        oracle_queries: queries.len(),
    };
    Ok((graph, report))
}
