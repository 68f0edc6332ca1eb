use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bitmap::Bitmap;
use crate::error::{Error, Result};
use crate::geometry::groups_within;
use crate::mask_oracle::{MaskCandidate, MaskOracle, OracleResponse, PromptSet};
use crate::model::{CameraView, SceneGeometry, NONE_ID};
use crate::projection::{render_all, DepthMap, NO_INDEX};
use crate::rng::keyed_rng;

/// Instances closer than this count as neighbours for merge noise.
pub const INSTANCE_NEIGHBOR_DIST: f64 = 0.10;

const CLEAN_CONF: (f32, f32) = (0.8, 1.0);
const CORRUPT_CONF: (f32, f32) = (0.3, 0.6);
const BACKGROUND_CONF: (f32, f32) = (0.05, 0.3);

const KEY_CORRUPTION: u64 = 1;
const KEY_PLANE: u64 = 2;
const KEY_CONFIDENCE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub p_merge: f64,
    pub p_split: f64,
}

impl NoiseConfig {
    pub const OFF: NoiseConfig = NoiseConfig {
        p_merge: 0.0,
        p_split: 0.0,
    };

    pub fn new(p_merge: f64, p_split: f64) -> Result<Self> {
        let n = NoiseConfig { p_merge, p_split };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_merge", self.p_merge), ("p_split", self.p_split)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not a probability")));
            }
        }
        Ok(())
    }

    pub fn is_off(&self) -> bool {
        self.p_merge == 0.0 && self.p_split == 0.0
    }
}

/// Scene point drawn at each pixel of a depth map, if any.
pub fn pixel_points(scene: &SceneGeometry, depth: &DepthMap) -> Vec<u32> {
    depth
        .index
        .iter()
        .map(|&idx| match (&scene.faces, idx) {
            (_, NO_INDEX) => NO_INDEX,
            (Some(faces), f) => faces[f as usize][0],
            (None, p) => p,
        })
        .collect()
}

/// Ground-truth instance id at each pixel (`NONE_ID` where nothing is drawn).
pub fn gt_label_image(scene: &SceneGeometry, depth: &DepthMap) -> Result<Vec<i32>> {
    let gt = scene
        .gt_instance
        .as_ref()
        .ok_or_else(|| Error::invalid("scene", "ground-truth instances required"))?;
    Ok(pixel_points(scene, depth)
        .into_iter()
        .map(|p| if p == NO_INDEX { NONE_ID } else { gt[p as usize] })
        .collect())
}

/// Neighbouring instances (within [`INSTANCE_NEIGHBOR_DIST`]) and the
/// horizontal centroid of every instance, `NONE_ID` excluded.
pub(crate) fn instance_layout(
    points: &[[f32; 3]],
    gt: &[i32],
) -> (BTreeMap<i32, Vec<i32>>, BTreeMap<i32, [f64; 2]>) {
    let ids: Vec<i32> = {
        let mut ids: Vec<i32> = gt.iter().copied().filter(|&g| g != NONE_ID).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    };
    let dense: HashMap<i32, u32> = ids.iter().enumerate().map(|(i, &g)| (g, i as u32)).collect();
    let group: Vec<u32> = gt
        .iter()
        .map(|g| dense.get(g).copied().unwrap_or(u32::MAX))
        .collect();
    let mut neighbors: BTreeMap<i32, Vec<i32>> = ids.iter().map(|&g| (g, Vec::new())).collect();
    for (a, b) in groups_within(points, &group, INSTANCE_NEIGHBOR_DIST) {
        let (ga, gb) = (ids[a as usize], ids[b as usize]);
        neighbors.get_mut(&ga).unwrap().push(gb);
        neighbors.get_mut(&gb).unwrap().push(ga);
    }
    for list in neighbors.values_mut() {
        list.sort_unstable();
    }

    let mut sums: BTreeMap<i32, ([f64; 2], usize)> = BTreeMap::new();
    for (p, &g) in points.iter().zip(gt) {
        if g == NONE_ID {
            continue;
        }
        let e = sums.entry(g).or_default();
        e.0[0] += p[0] as f64;
        e.0[1] += p[1] as f64;
        e.1 += 1;
    }
    let centroids = sums
        .into_iter()
        .map(|(g, (s, n))| (g, [s[0] / n as f64, s[1] / n as f64]))
        .collect();
    (neighbors, centroids)
}

/// Side of a vertical plane through `centroid` at angle `theta`.
pub(crate) fn plane_side(point: [f32; 3], centroid: [f64; 2], theta: f64) -> bool {
    (point[0] as f64 - centroid[0]) * theta.cos() + (point[1] as f64 - centroid[1]) * theta.sin() >= 0.0
}

#[derive(Debug, Clone)]
struct ViewRender {
    width: u32,
    height: u32,
    labels: Vec<i32>,
    points: Vec<u32>,
}

impl ViewRender {
    fn mask_where(&self, mut f: impl FnMut(usize) -> bool) -> Bitmap {
        let w = self.width as usize;
        Bitmap::from_fn(self.width, self.height, |r, c| f(r as usize * w + c as usize))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Corruption {
    Clean,
    Merge(i32),
    Split,
}

/// Ground-truth stand-in for a promptable segmenter.
///
/// The base mask is the rendering of the instance under most prompt
/// points. Noise is drawn once per superpoint rather than per view, the
/// way a real model tends to repeat the same mistake on the same surface:
/// with probability `p_merge` the answer also covers a neighbouring
/// instance, otherwise with probability `p_split` it covers only the half
/// of the instance on the prompt's side of a fixed vertical plane.
/// Corrupted answers carry low confidences; the whole mask always gets the
/// highest one, so the selection rule keeps the corrupted mask.
#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    noise: NoiseConfig,
    seed: u64,
    renders: HashMap<u32, ViewRender>,
    points: Vec<[f32; 3]>,
    neighbors: BTreeMap<i32, Vec<i32>>,
    centroids: BTreeMap<i32, [f64; 2]>,
}

impl SyntheticOracle {
    pub fn new(scene: &SceneGeometry, views: &[CameraView], noise: NoiseConfig, seed: u64) -> Result<Self> {
        let depth = render_all(scene, views);
        Self::with_depth_maps(scene, views, &depth, noise, seed)
    }

    pub fn with_depth_maps(
        scene: &SceneGeometry,
        views: &[CameraView],
        depth_maps: &[DepthMap],
        noise: NoiseConfig,
        seed: u64,
    ) -> Result<Self> {
        noise.validate()?;
        let gt = scene
            .gt_instance
            .as_ref()
            .ok_or_else(|| Error::invalid("scene", "the synthetic oracle needs ground-truth instances"))?;
        let mut renders = HashMap::new();
        for (v, d) in views.iter().zip(depth_maps) {
            renders.insert(
                v.view_id,
                ViewRender {
                    width: v.width,
                    height: v.height,
                    labels: gt_label_image(scene, d)?,
                    points: pixel_points(scene, d),
                },
            );
        }

        let (neighbors, centroids) = instance_layout(&scene.points, gt);

        Ok(SyntheticOracle {
            noise,
            seed,
            renders,
            points: scene.points.clone(),
            neighbors,
            centroids,
        })
    }

    pub fn noise(&self) -> NoiseConfig {
        self.noise
    }

    /// Instances within [`INSTANCE_NEIGHBOR_DIST`] of `id`.
    pub fn instance_neighbors(&self, id: i32) -> &[i32] {
        self.neighbors.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn label_image(&self, view_id: u32) -> Option<&[i32]> {
        self.renders.get(&view_id).map(|r| r.labels.as_slice())
    }

    /// Rendering of one ground-truth instance in a view.
    pub fn instance_mask(&self, view_id: u32, id: i32) -> Option<Bitmap> {
        let r = self.renders.get(&view_id)?;
        Some(r.mask_where(|i| r.labels[i] == id))
    }

    fn corruption(&self, sp_id: u32, label: i32) -> Corruption {
        if self.noise.is_off() {
            return Corruption::Clean;
        }
        let mut rng = keyed_rng(self.seed, &[KEY_CORRUPTION, sp_id as u64]);
        let (u_merge, u_split, pick): (f64, f64, u64) = (rng.gen(), rng.gen(), rng.gen());
        let nb = self.instance_neighbors(label);
        if u_merge < self.noise.p_merge && !nb.is_empty() {
            Corruption::Merge(nb[(pick % nb.len() as u64) as usize])
        } else if u_split < self.noise.p_split {
            Corruption::Split
        } else {
            Corruption::Clean
        }
    }

    /// The instance's split plane: a vertical plane through its horizontal
    /// centroid with a seeded orientation. Returns a side classifier.
    fn split_plane(&self, label: i32) -> impl Fn(u32) -> bool + '_ {
        let mut rng = keyed_rng(self.seed, &[KEY_PLANE, label as i64 as u64]);
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let c = self.centroids[&label];
        move |point: u32| plane_side(self.points[point as usize], c, theta)
    }
}

fn majority(labels: impl Iterator<Item = i32>) -> Option<i32> {
    // Ties go to the label seen first.
    let mut counts: Vec<(i32, usize)> = Vec::new();
    for l in labels {
        match counts.iter_mut().find(|(x, _)| *x == l) {
            Some(e) => e.1 += 1,
            None => counts.push((l, 1)),
        }
    }
    let best = counts.iter().map(|c| c.1).max()?;
    counts.into_iter().find(|c| c.1 == best).map(|c| c.0)
}

/// Whole, medium and small masks derived from `base` around `seed_px`.
pub(crate) fn derive_candidates(base: &Bitmap, seed_px: (u32, u32)) -> [Bitmap; 3] {
    let area = base.count();
    let mut medium = base.clone();
    loop {
        let e = medium.erode();
        let n = e.count();
        if n == 0 {
            break;
        }
        medium = e;
        if n as f64 <= 0.75 * area as f64 {
            break;
        }
    }
    let radius = ((area as f64).sqrt() / 4.0).max(2.0);
    let (sr, sc) = (seed_px.0 as f64, seed_px.1 as f64);
    let disk = Bitmap::from_fn(base.width(), base.height(), |r, c| {
        base.get(r, c) && (r as f64 - sr).powi(2) + (c as f64 - sc).powi(2) <= radius * radius
    });
    let mut small = disk.component_at(seed_px.0, seed_px.1);
    if small.count() > medium.count() {
        std::mem::swap(&mut small, &mut medium);
    }
    [base.clone(), medium, small]
}

fn draw_confidences(rng: &mut impl Rng, range: (f32, f32)) -> [f32; 3] {
    let mut c = [0f32; 3].map(|_| rng.gen_range(range.0..range.1));
    c.sort_by(|a, b| b.total_cmp(a));
    c
}

impl MaskOracle for SyntheticOracle {
    fn query(&self, view: &CameraView, prompt: &PromptSet) -> Result<OracleResponse> {
        let render = self
            .renders
            .get(&view.view_id)
            .ok_or(Error::MissingOracleData {
                view_id: view.view_id,
                sp_id: prompt.sp_id,
            })?;
        let w = render.width as usize;
        let at = |(r, c): (u32, u32)| r as usize * w + c as usize;
        if prompt.points.is_empty() {
            return Err(Error::invalid("prompt", format!("superpoint {} has no prompt points", prompt.sp_id)));
        }
        if let Some(p) = prompt.points.iter().find(|p| p.0 >= render.height || p.1 >= render.width) {
            return Err(Error::invalid("prompt", format!("pixel {p:?} outside the image")));
        }
        let label = majority(prompt.points.iter().map(|&p| render.labels[at(p)])).expect("nonempty");
        let seed_px = *prompt
            .points
            .iter()
            .find(|&&p| render.labels[at(p)] == label)
            .expect("majority label occurs");
        let mut rng = keyed_rng(self.seed, &[KEY_CONFIDENCE, view.view_id as u64, prompt.sp_id as u64]);

        let (base, conf_range) = if label == NONE_ID {
            let bg = render.mask_where(|i| render.labels[i] == NONE_ID);
            (bg.component_at(seed_px.0, seed_px.1), BACKGROUND_CONF)
        } else {
            let clean = render.mask_where(|i| render.labels[i] == label);
            let noisy = match self.corruption(prompt.sp_id, label) {
                Corruption::Clean => clean.clone(),
                Corruption::Merge(other) => render.mask_where(|i| {
                    let l = render.labels[i];
                    l == label || l == other
                }),
                Corruption::Split => {
                    let side_of = self.split_plane(label);
                    let side = side_of(render.points[at(seed_px)]);
                    render.mask_where(|i| render.labels[i] == label && side_of(render.points[i]) == side)
                }
            };
            let range = if noisy == clean { CLEAN_CONF } else { CORRUPT_CONF };
            (noisy, range)
        };
        let conf = draw_confidences(&mut rng, conf_range);
        let [a, b, c] = derive_candidates(&base, seed_px);
        OracleResponse::new([
            MaskCandidate::new(a, conf[0])?,
            MaskCandidate::new(b, conf[1])?,
            MaskCandidate::new(c, conf[2])?,
        ])
    }
}
