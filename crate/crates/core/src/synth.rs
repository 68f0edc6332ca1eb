//! Seeded synthetic rooms: floor, four walls and a set of boxes and
//! cylinders standing on the floor, a ring of inward-facing cameras, and
//! the stand-ins for 2D model outputs (encoder feature maps and
//! whole-image instance maps) rendered from ground truth.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::renormalize;
use crate::graph_build::{collect_prompts, GraphBuildConfig};
use crate::io::imap::{InstanceMap, InstanceMapStore};
use crate::io::oracle_store::OracleStoreWriter;
use crate::mask_oracle::{
    gt_label_image, instance_layout, pixel_points, plane_side, FeatureMap, FeatureStore, MaskOracle, NoiseConfig,
    SyntheticOracle,
};
use crate::model::{CameraView, SceneGeometry, Superpoint, FEATURE_DIM, FLOOR_ID, NONE_ID, WALL_ID};
use crate::presegment::PresegmentConfig;
use crate::projection::{render_all, DepthMap, NO_INDEX};
use crate::rng::keyed_rng;
use crate::union_find::UnionFind;

/// Smallest gap between two objects' footprints.
pub const MIN_GAP: f64 = 0.05;
/// Objects placed next to another one get a gap below this, so they end
/// up adjacent in the superpoint graph.
pub const CLUSTER_GAP: f64 = 0.09;
pub const CAMERA_HEIGHT: f64 = 1.5;
/// Pixels an object needs in a view to count as seen there.
pub const MIN_OBJECT_PIXELS: usize = 50;
pub const PLACEMENT_ATTEMPTS: usize = 1000;
const LAYOUT_ATTEMPTS: u64 = 20;
/// Objects stay within this fraction of the room size from its center.
const OBJECT_REGION: f64 = 0.3;
const CAMERA_RING: f64 = 0.45;
const WALL_HEIGHT: f64 = 0.6;
const LOOK_AT_HEIGHT: f64 = 0.2;

/// Pre-segmentation for synthetic scenes. Their sampling is far sparser
/// than a scanned mesh, so the minimum segment size is raised to keep
/// curved surfaces from shattering into slivers no view sees whole.
pub const PRESEGMENT: PresegmentConfig = PresegmentConfig {
    k_thresh: 0.01,
    seg_min_verts: 150,
    knn: 8,
};

const KEY_LAYOUT: u64 = 100;
const KEY_SURFACE: u64 = 101;
const KEY_TYPE: u64 = 102;
const KEY_INSTANCE: u64 = 103;
const KEY_NORMAL: u64 = 104;
const KEY_FEATURE_NOISE: u64 = 105;
const KEY_IMAP: u64 = 106;
/// Semantic directions are shared by all scenes.
const TYPE_SEED: u64 = 0x5eed_7e9e;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_objects: usize,
    /// Side of the square room in meters.
    pub room_size: f64,
    pub points_per_object: usize,
    /// Total over floor and walls.
    pub points_on_walls_floor: usize,
    pub camera_count: usize,
    pub seed: u64,
    pub noise: NoiseConfig,
    pub image_width: u32,
    pub image_height: u32,
    /// Image pixels per feature-grid cell.
    pub feature_stride: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_objects: 8,
            room_size: 4.0,
            points_per_object: 3000,
            points_on_walls_floor: 40_000,
            camera_count: 36,
            seed: 0,
            noise: NoiseConfig::OFF,
            image_width: 320,
            image_height: 240,
            feature_stride: 8,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_objects < 1 || self.points_per_object < 1 || self.points_on_walls_floor < 1 || self.camera_count < 1 {
            return Err(Error::Config("object, point and camera counts must be >= 1".into()));
        }
        if !(self.room_size >= 2.0) || !self.room_size.is_finite() {
            return Err(Error::Config(format!("room_size must be at least 2 m, got {}", self.room_size)));
        }
        if self.image_width < 16 || self.image_height < 16 {
            return Err(Error::Config("images must be at least 16x16".into()));
        }
        if self.feature_stride < 1 {
            return Err(Error::Config("feature_stride must be >= 1".into()));
        }
        self.noise.validate()
    }

    /// Views every object must be seen in.
    pub fn required_views(&self) -> usize {
        (self.camera_count / 4).max(3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Box { half_x: f64, half_y: f64 },
    Cylinder { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub id: i32,
    pub shape: Shape,
    pub center: [f64; 2],
    pub height: f64,
}

impl PlacedObject {
    fn half_extent(&self) -> [f64; 2] {
        match self.shape {
            Shape::Box { half_x, half_y } => [half_x, half_y],
            Shape::Cylinder { radius } => [radius, radius],
        }
    }

    /// Gap between axis-aligned footprints; a lower bound on the true gap.
    pub fn footprint_gap(&self, other: &PlacedObject) -> f64 {
        let (a, b) = (self.half_extent(), other.half_extent());
        let gx = (self.center[0] - other.center[0]).abs() - a[0] - b[0];
        let gy = (self.center[1] - other.center[1]).abs() - a[1] - b[1];
        gx.max(gy)
    }

    fn covers(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        match self.shape {
            Shape::Box { half_x, half_y } => dx.abs() <= half_x && dy.abs() <= half_y,
            Shape::Cylinder { radius } => dx * dx + dy * dy <= radius * radius,
        }
    }

    fn area(&self) -> (f64, f64) {
        let h = self.height;
        match self.shape {
            Shape::Box { half_x, half_y } => (4.0 * half_x * half_y, 4.0 * h * (half_x + half_y)),
            Shape::Cylinder { radius } => (PI * radius * radius, 2.0 * PI * radius * h),
        }
    }

    /// Area-uniform surface point and its outward normal.
    fn sample(&self, rng: &mut ChaCha8Rng) -> ([f64; 3], [f64; 3]) {
        let (top_area, side_area) = self.area();
        let [cx, cy] = self.center;
        let h = self.height;
        let on_top = rng.gen::<f64>() * (top_area + side_area) < top_area;
        match self.shape {
            Shape::Box { half_x, half_y } => {
                if on_top {
                    let x = cx + rng.gen_range(-half_x..half_x);
                    let y = cy + rng.gen_range(-half_y..half_y);
                    return ([x, y, h], [0.0, 0.0, 1.0]);
                }
                let z = rng.gen_range(0.0..h);
                let t = rng.gen::<f64>() * 2.0 * (half_x + half_y);
                let side = rng.gen::<bool>();
                let s = if side { 1.0 } else { -1.0 };
                if t < 2.0 * half_x {
                    let x = cx - half_x + t;
                    ([x, cy + s * half_y, z], [0.0, s, 0.0])
                } else {
                    let y = cy - half_y + (t - 2.0 * half_x);
                    ([cx + s * half_x, y, z], [s, 0.0, 0.0])
                }
            }
            Shape::Cylinder { radius } => {
                if on_top {
                    let r = radius * rng.gen::<f64>().sqrt();
                    let a = rng.gen_range(0.0..2.0 * PI);
                    return ([cx + r * a.cos(), cy + r * a.sin(), h], [0.0, 0.0, 1.0]);
                }
                let a = rng.gen_range(0.0..2.0 * PI);
                let z = rng.gen_range(0.0..h);
                ([cx + radius * a.cos(), cy + radius * a.sin(), z], [a.cos(), a.sin(), 0.0])
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthScene {
    pub scene: SceneGeometry,
    pub cameras: Vec<CameraView>,
    pub objects: Vec<PlacedObject>,
}

fn random_object(rng: &mut ChaCha8Rng, id: i32) -> PlacedObject {
    let shape = if rng.gen::<bool>() {
        Shape::Box {
            half_x: rng.gen_range(0.12..0.3),
            half_y: rng.gen_range(0.12..0.3),
        }
    } else {
        Shape::Cylinder {
            radius: rng.gen_range(0.15..0.28),
        }
    };
    PlacedObject {
        id,
        shape,
        center: [0.0; 2],
        height: rng.gen_range(0.2..0.7),
    }
}

/// Non-overlapping footprints. About half the objects are pushed against
/// an already placed one so that close pairs occur.
fn place_objects(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<PlacedObject>> {
    let center = config.room_size / 2.0;
    let region = OBJECT_REGION * config.room_size;
    let inside = |o: &PlacedObject| {
        let [hx, hy] = o.half_extent();
        let dx = (o.center[0] - center).abs() + hx;
        let dy = (o.center[1] - center).abs() + hy;
        dx * dx + dy * dy <= region * region
    };
    let mut placed: Vec<PlacedObject> = Vec::with_capacity(config.num_objects);
    let mut attempts = 0;
    while placed.len() < config.num_objects {
        attempts += 1;
        if attempts > PLACEMENT_ATTEMPTS {
            return Err(Error::Placement {
                objects: config.num_objects,
                attempts: PLACEMENT_ATTEMPTS,
            });
        }
        let mut obj = random_object(rng, placed.len() as i32);
        let [hx, hy] = obj.half_extent();
        if !placed.is_empty() && rng.gen::<bool>() {
            let anchor = placed[rng.gen_range(0..placed.len())];
            let [ax, ay] = anchor.half_extent();
            let gap = rng.gen_range(MIN_GAP..CLUSTER_GAP);
            let s = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            if rng.gen::<bool>() {
                obj.center = [
                    anchor.center[0] + s * (ax + hx + gap),
                    anchor.center[1] + rng.gen_range(-(ay + hy) * 0.8..(ay + hy) * 0.8),
                ];
            } else {
                obj.center = [
                    anchor.center[0] + rng.gen_range(-(ax + hx) * 0.8..(ax + hx) * 0.8),
                    anchor.center[1] + s * (ay + hy + gap),
                ];
            }
        } else {
            obj.center = [
                center + rng.gen_range(-region..region),
                center + rng.gen_range(-region..region),
            ];
        }
        if inside(&obj) && placed.iter().all(|p| p.footprint_gap(&obj) >= MIN_GAP) {
            placed.push(obj);
        }
    }
    Ok(placed)
}

fn to_f32(p: [f64; 3]) -> [f32; 3] {
    p.map(|x| x as f32)
}

fn build_geometry(config: &SynthConfig, objects: &[PlacedObject], rng: &mut ChaCha8Rng) -> Result<SceneGeometry> {
    let l = config.room_size;
    let wall_h = WALL_HEIGHT * l;
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut colors = Vec::new();
    let mut gt = Vec::new();

    for obj in objects {
        let color = [rng.gen::<f32>(), rng.gen::<f32>(), rng.gen::<f32>()];
        for _ in 0..config.points_per_object {
            let (p, n) = obj.sample(rng);
            points.push(to_f32(p));
            normals.push(renormalize(to_f32(n)));
            colors.push(color);
            gt.push(obj.id);
        }
    }

    let floor_area = l * l;
    let wall_area = 4.0 * l * wall_h;
    let n_floor = ((config.points_on_walls_floor as f64) * floor_area / (floor_area + wall_area)).round() as usize;
    let n_wall = config.points_on_walls_floor.saturating_sub(n_floor);
    let mut made = 0;
    while made < n_floor {
        let (x, y) = (rng.gen_range(0.0..l), rng.gen_range(0.0..l));
        if objects.iter().any(|o| o.covers(x, y)) {
            continue;
        }
        points.push(to_f32([x, y, 0.0]));
        normals.push([0.0, 0.0, 1.0]);
        colors.push([0.5, 0.5, 0.5]);
        gt.push(FLOOR_ID);
        made += 1;
    }
    for _ in 0..n_wall {
        let t = rng.gen_range(0.0..l);
        let z = rng.gen_range(0.0..wall_h);
        let (p, n) = match rng.gen_range(0..4) {
            0 => ([0.0, t, z], [1.0, 0.0, 0.0]),
            1 => ([l, t, z], [-1.0, 0.0, 0.0]),
            2 => ([t, 0.0, z], [0.0, 1.0, 0.0]),
            _ => ([t, l, z], [0.0, -1.0, 0.0]),
        };
        points.push(to_f32(p));
        normals.push(to_f32(n));
        colors.push([0.9, 0.9, 0.85]);
        gt.push(WALL_ID);
    }
    SceneGeometry::new(points, normals, Some(colors), None, Some(gt))
}

/// Camera at `eye` looking at `target` with world +z up.
pub fn look_at(view_id: u32, eye: Vector3<f64>, target: Vector3<f64>, width: u32, height: u32, focal: f64) -> CameraView {
    let f = (target - eye).normalize();
    let x = f.cross(&Vector3::z()).normalize();
    let y = f.cross(&x);
    let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), f.transpose()]);
    CameraView {
        view_id,
        fx: focal,
        fy: focal,
        cx: width as f64 / 2.0,
        cy: height as f64 / 2.0,
        translation: -(rotation * eye),
        rotation,
        width,
        height,
    }
}

pub fn camera_ring(config: &SynthConfig) -> Vec<CameraView> {
    let c = config.room_size / 2.0;
    let r = CAMERA_RING * config.room_size;
    let target = Vector3::new(c, c, LOOK_AT_HEIGHT);
    let focal = 0.6 * config.image_width as f64;
    (0..config.camera_count)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / config.camera_count as f64;
            let eye = Vector3::new(c + r * a.cos(), c + r * a.sin(), CAMERA_HEIGHT);
            look_at(i as u32, eye, target, config.image_width, config.image_height, focal)
        })
        .collect()
}

/// Number of views in which each ground-truth id covers at least
/// [`MIN_OBJECT_PIXELS`] pixels.
pub fn view_coverage(scene: &SceneGeometry, depth_maps: &[DepthMap]) -> Result<BTreeMap<i32, usize>> {
    let mut views: BTreeMap<i32, usize> = BTreeMap::new();
    for d in depth_maps {
        let mut count: BTreeMap<i32, usize> = BTreeMap::new();
        for g in gt_label_image(scene, d)? {
            *count.entry(g).or_default() += 1;
        }
        for (g, n) in count {
            if n >= MIN_OBJECT_PIXELS {
                *views.entry(g).or_default() += 1;
            }
        }
    }
    Ok(views)
}

/// Generates a room. Layouts whose objects are not all seen in enough
/// views are redrawn.
pub fn generate(config: &SynthConfig) -> Result<SynthScene> {
    config.validate()?;
    let cameras = camera_ring(config);
    let need = config.required_views();
    let mut worst = 0;
    for attempt in 0..LAYOUT_ATTEMPTS {
        let mut rng = keyed_rng(config.seed, &[KEY_LAYOUT, attempt]);
        let objects = place_objects(config, &mut rng)?;
        let mut srng = keyed_rng(config.seed, &[KEY_SURFACE, attempt]);
        let scene = build_geometry(config, &objects, &mut srng)?;
        let coverage = view_coverage(&scene, &render_all(&scene, &cameras))?;
        let seen = objects
            .iter()
            .map(|o| coverage.get(&o.id).copied().unwrap_or(0))
            .min()
            .unwrap_or(0);
        if seen >= need {
            return Ok(SynthScene { scene, cameras, objects });
        }
        worst = worst.max(seen);
        log::debug!("layout {attempt}: an object is seen in only {seen} views, redrawing");
    }
    Err(Error::invalid(
        "synthetic scene",
        format!(
            "no layout in {LAYOUT_ATTEMPTS} attempts shows every object in {need} views (best {worst}); \
             try fewer objects or more cameras"
        ),
    ))
}

/// Magnitudes of the parts of a synthetic encoder feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSynthesis {
    /// Floor, wall and object directions, shared by all scenes.
    pub type_scale: f32,
    /// A random direction per instance.
    pub instance_scale: f32,
    /// Linear image of the surface normal.
    pub normal_scale: f32,
    /// Per-cell noise norm.
    pub noise_scale: f32,
}

impl Default for FeatureSynthesis {
    fn default() -> Self {
        FeatureSynthesis {
            type_scale: 1.0,
            instance_scale: 0.5,
            normal_scale: 0.3,
            noise_scale: 0.3,
        }
    }
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vec<f32> {
    let v: Vec<f64> = (0..FEATURE_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| (x / n) as f32).collect()
}

fn type_class(g: i32) -> u64 {
    match g {
        FLOOR_ID => 0,
        WALL_ID => 1,
        _ => 2,
    }
}

/// Encoder-like feature grids rendered from ground truth: a semantic
/// direction, an instance direction, the normal and noise, sampled at the
/// center pixel of every cell.
pub fn synth_feature_maps(
    scene: &SceneGeometry,
    views: &[CameraView],
    depth_maps: &[DepthMap],
    synthesis: &FeatureSynthesis,
    stride: u32,
    seed: u64,
) -> Result<FeatureStore> {
    let gt = scene
        .gt_instance
        .as_ref()
        .ok_or_else(|| Error::invalid("scene", "ground-truth instances required"))?;
    let types: Vec<Vec<f32>> = (0..3).map(|c| unit_vector(&mut keyed_rng(TYPE_SEED, &[KEY_TYPE, c]))).collect();
    let normal_dirs: Vec<Vec<f32>> = (0..3).map(|k| unit_vector(&mut keyed_rng(TYPE_SEED, &[KEY_NORMAL, k]))).collect();
    let mut instance_dirs: BTreeMap<i32, Vec<f32>> = BTreeMap::new();
    for &g in gt {
        instance_dirs
            .entry(g)
            .or_insert_with(|| unit_vector(&mut keyed_rng(seed, &[KEY_INSTANCE, g as i64 as u64])));
    }
    let noise_amp = synthesis.noise_scale * (3.0 / FEATURE_DIM as f32).sqrt();

    let mut store = FeatureStore::new();
    for (view, depth) in views.iter().zip(depth_maps) {
        let hf = view.height.div_ceil(stride);
        let wf = view.width.div_ceil(stride);
        let owners = pixel_points(scene, depth);
        let mut rng = keyed_rng(seed, &[KEY_FEATURE_NOISE, view.view_id as u64]);
        let mut data = Vec::with_capacity((hf * wf) as usize * FEATURE_DIM);
        for y in 0..hf {
            for x in 0..wf {
                let center = |g: u32, img: u32, cells: u32| {
                    let p = (g as f64 + 0.5) * img as f64 / cells as f64 - 0.5;
                    (p.round().max(0.0) as u32).min(img - 1)
                };
                let (r, c) = (center(y, view.height, hf), center(x, view.width, wf));
                let owner = owners[(r * view.width + c) as usize];
                let mut f = vec![0f32; FEATURE_DIM];
                if owner != NO_INDEX {
                    let g = gt[owner as usize];
                    let n = scene.normals[owner as usize];
                    for k in 0..FEATURE_DIM {
                        f[k] = synthesis.type_scale * types[type_class(g) as usize][k]
                            + synthesis.instance_scale * instance_dirs[&g][k]
                            + synthesis.normal_scale * (0..3).map(|a| n[a] * normal_dirs[a][k]).sum::<f32>();
                    }
                }
                for v in &mut f {
                    *v += noise_amp * rng.gen_range(-1.0f32..1.0);
                }
                data.extend_from_slice(&f);
            }
        }
        let fm = FeatureMap {
            view_id: view.view_id,
            height: hf,
            width: wf,
            channels: FEATURE_DIM as u32,
            data,
        };
        fm.validate()?;
        store.insert(fm);
    }
    Ok(store)
}

/// Whole-image instance maps rendered from ground truth. Unlike the
/// promptable oracle, mistakes here are drawn independently per view and
/// instance: with `p_merge` an instance shares its label with a
/// neighbour, otherwise with `p_split` one side of a random vertical
/// plane gets a label of its own. Labels are numbered from 1 per view.
pub fn synth_instance_maps(
    scene: &SceneGeometry,
    views: &[CameraView],
    depth_maps: &[DepthMap],
    noise: &NoiseConfig,
    seed: u64,
) -> Result<InstanceMapStore> {
    noise.validate()?;
    let gt = scene
        .gt_instance
        .as_ref()
        .ok_or_else(|| Error::invalid("scene", "ground-truth instances required"))?;
    let (neighbors, centroids) = instance_layout(&scene.points, gt);
    let ids: Vec<i32> = neighbors.keys().copied().collect();
    let dense: BTreeMap<i32, usize> = ids.iter().enumerate().map(|(i, &g)| (g, i)).collect();

    let mut store = InstanceMapStore::new();
    for (view, depth) in views.iter().zip(depth_maps) {
        let labels = gt_label_image(scene, depth)?;
        let owners = pixel_points(scene, depth);
        let mut uf = UnionFind::new(ids.len());
        let mut split: BTreeMap<i32, f64> = BTreeMap::new();
        if !noise.is_off() {
            for &g in &ids {
                let mut rng = keyed_rng(seed, &[KEY_IMAP, view.view_id as u64, g as i64 as u64]);
                let (u_merge, u_split, pick, theta): (f64, f64, u64, f64) =
                    (rng.gen(), rng.gen(), rng.gen(), rng.gen_range(0.0..PI));
                let nb = &neighbors[&g];
                if u_merge < noise.p_merge && !nb.is_empty() {
                    let other = nb[(pick % nb.len() as u64) as usize];
                    uf.union(dense[&g], dense[&other]);
                } else if u_split < noise.p_split {
                    split.insert(g, theta);
                }
            }
        }
        let keys: Vec<Option<(usize, i32)>> = {
            let (comp, _) = uf.labels();
            (0..labels.len())
                .map(|i| {
                    let g = labels[i];
                    if g == NONE_ID {
                        return None;
                    }
                    let part = match split.get(&g) {
                        Some(&theta) if plane_side(scene.points[owners[i] as usize], centroids[&g], theta) => g,
                        _ => i32::MIN,
                    };
                    Some((comp[dense[&g]] as usize, part))
                })
                .collect()
        };
        let mut numbering: BTreeMap<(usize, i32), u16> = BTreeMap::new();
        for k in keys.iter().flatten() {
            numbering.insert(*k, 0);
        }
        if numbering.len() >= u16::MAX as usize {
            return Err(Error::invalid("instance map", format!("view {} has too many instances", view.view_id)));
        }
        for (i, v) in numbering.values_mut().enumerate() {
            *v = i as u16 + 1;
        }
        store.insert(InstanceMap {
            view_id: view.view_id,
            height: view.height,
            width: view.width,
            labels: keys.iter().map(|k| k.map_or(0, |k| numbering[&k])).collect(),
        });
    }
    Ok(store)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub oracle_entries: usize,
    pub feature_maps: usize,
    pub instance_maps: usize,
}

/// Writes what the export tooling would produce for a real scene: the
/// oracle store answering every prompt the graph builder will send, one
/// feature map and one instance map per view.
#[allow(clippy::too_many_arguments)]
pub fn export_store(
    scene: &SceneGeometry,
    views: &[CameraView],
    superpoints: &[Superpoint],
    build: &GraphBuildConfig,
    noise: &NoiseConfig,
    synthesis: &FeatureSynthesis,
    stride: u32,
    seed: u64,
    dir: impl AsRef<Path>,
) -> Result<ExportSummary> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let depth = render_all(scene, views);
    let oracle = SyntheticOracle::with_depth_maps(scene, views, &depth, *noise, seed)?;
    let by_id: BTreeMap<u32, &CameraView> = views.iter().map(|v| (v.view_id, v)).collect();
    let mut writer = OracleStoreWriter::new("synthetic");
    for prompt in collect_prompts(scene, superpoints, views, build)? {
        let resp = oracle.query(by_id[&prompt.view_id], &prompt)?;
        writer.push(prompt.view_id, prompt.sp_id, &resp);
    }
    let oracle_entries = writer.len();
    writer.write(dir)?;
    let features = synth_feature_maps(scene, views, &depth, synthesis, stride, seed)?;
    features.save_dir(dir)?;
    let imaps = synth_instance_maps(scene, views, &depth, noise, seed)?;
    imaps.save_dir(dir)?;
    Ok(ExportSummary {
        oracle_entries,
        feature_maps: features.len(),
        instance_maps: imaps.len(),
    })
}
