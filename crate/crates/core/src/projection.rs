//! Rendering depth buffers and projecting superpoints into views with
//! occlusion handling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitmap::Bitmap;
use crate::model::{CameraView, SceneGeometry, Superpoint};

/// Pixel footprint half-width used for point splatting and masks (3×3).
pub const SPLAT_RADIUS: i64 = 1;

pub const NO_INDEX: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    /// Meters a point may lie behind the rendered surface and still count
    /// as visible.
    pub occlusion_tol: f64,
    pub min_visible_pixels: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            occlusion_tol: 0.03,
            min_visible_pixels: 50,
        }
    }
}

/// Depth buffer (meters, `+inf` where empty) plus the primitive that won
/// each pixel: a face index in mesh mode, a point index otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub view_id: u32,
    pub width: u32,
    pub height: u32,
    pub depth: Vec<f32>,
    pub index: Vec<u32>,
}

impl DepthMap {
    fn empty(view: &CameraView) -> Self {
        DepthMap {
            view_id: view.view_id,
            width: view.width,
            height: view.height,
            depth: vec![f32::INFINITY; view.pixel_count()],
            index: vec![NO_INDEX; view.pixel_count()],
        }
    }

    #[inline]
    pub fn at(&self, row: u32, col: u32) -> f32 {
        self.depth[row as usize * self.width as usize + col as usize]
    }

    #[inline]
    pub fn index_at(&self, row: u32, col: u32) -> u32 {
        self.index[row as usize * self.width as usize + col as usize]
    }
}

/// Z-buffer rendering: triangles in mesh mode, 3×3 point splats otherwise.
pub fn render_depth(scene: &SceneGeometry, view: &CameraView) -> DepthMap {
    match &scene.faces {
        Some(faces) => rasterize_mesh(scene, faces, view),
        None => splat_points(scene, view),
    }
}

fn splat_points(scene: &SceneGeometry, view: &CameraView) -> DepthMap {
    let mut map = DepthMap::empty(view);
    let (w, h) = (view.width as i64, view.height as i64);
    for i in 0..scene.len() {
        let Some(p) = view.project(&scene.point(i)) else { continue };
        let (r0, c0) = (p.row.floor() as i64, p.col.floor() as i64);
        let z = p.depth as f32;
        for dr in -SPLAT_RADIUS..=SPLAT_RADIUS {
            for dc in -SPLAT_RADIUS..=SPLAT_RADIUS {
                let (r, c) = (r0 + dr, c0 + dc);
                if r < 0 || c < 0 || r >= h || c >= w {
                    continue;
                }
                let k = (r * w + c) as usize;
                if z < map.depth[k] {
                    map.depth[k] = z;
                    map.index[k] = i as u32;
                }
            }
        }
    }
    map
}

fn rasterize_mesh(scene: &SceneGeometry, faces: &[[u32; 3]], view: &CameraView) -> DepthMap {
    let mut map = DepthMap::empty(view);
    let w = view.width as i64;
    let h = view.height as i64;
    for (fi, f) in faces.iter().enumerate() {
        let mut verts = [(0.0f64, 0.0f64, 0.0f64); 3];
        let mut ok = true;
        for k in 0..3 {
            match view.project(&scene.point(f[k] as usize)) {
                Some(p) => verts[k] = (p.col, p.row, p.depth),
                None => ok = false,
            }
        }
        if !ok {
            continue;
        }
        let [(x0, y0, z0), (x1, y1, z1), (x2, y2, z2)] = verts;
        let area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
        if area.abs() < 1e-12 {
            continue;
        }
        let cmin = (x0.min(x1).min(x2).floor() as i64).max(0);
        let cmax = (x0.max(x1).max(x2).ceil() as i64).min(w - 1);
        let rmin = (y0.min(y1).min(y2).floor() as i64).max(0);
        let rmax = (y0.max(y1).max(y2).ceil() as i64).min(h - 1);
        for r in rmin..=rmax {
            for c in cmin..=cmax {
                let (px, py) = (c as f64 + 0.5, r as f64 + 0.5);
                let l0 = ((x1 - px) * (y2 - py) - (x2 - px) * (y1 - py)) / area;
                let l1 = ((x2 - px) * (y0 - py) - (x0 - px) * (y2 - py)) / area;
                let l2 = 1.0 - l0 - l1;
                if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
                    continue;
                }
                // Perspective-correct: 1/z is affine in screen space.
                let z = (1.0 / (l0 / z0 + l1 / z1 + l2 / z2)) as f32;
                let k = (r * w + c) as usize;
                if z < map.depth[k] {
                    map.depth[k] = z;
                    map.index[k] = fi as u32;
                }
            }
        }
    }
    map
}

/// Renders every view in parallel; output order follows `views`.
pub fn render_all(scene: &SceneGeometry, views: &[CameraView]) -> Vec<DepthMap> {
    views.par_iter().map(|v| render_depth(scene, v)).collect()
}

/// Pixels covered by a visible superpoint in one view.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMask {
    pub view_id: u32,
    pub sp_id: u32,
    /// Sorted row-major, no duplicates.
    pub pixels: Vec<(u32, u32)>,
    pub pixel_count: usize,
    /// (row, col) mean of the pixel coordinates.
    pub centroid_2d: (f64, f64),
}

impl ProjectionMask {
    pub fn new(view_id: u32, sp_id: u32, mut pixels: Vec<(u32, u32)>) -> Self {
        pixels.sort_unstable();
        pixels.dedup();
        let n = pixels.len().max(1) as f64;
        let (sr, sc) = pixels
            .iter()
            .fold((0.0, 0.0), |(a, b), &(r, c)| (a + r as f64, b + c as f64));
        ProjectionMask {
            view_id,
            sp_id,
            pixel_count: pixels.len(),
            pixels,
            centroid_2d: (sr / n, sc / n),
        }
    }

    pub fn to_bitmap(&self, width: u32, height: u32) -> Bitmap {
        Bitmap::from_pixels(width, height, self.pixels.iter().copied())
    }
}

/// Does the point pass the depth test against `depth`?
pub fn passes_depth_test(
    scene: &SceneGeometry,
    point: usize,
    view: &CameraView,
    depth: &DepthMap,
    occlusion_tol: f64,
) -> Option<(u32, u32)> {
    let p = view.project(&scene.point(point))?;
    let (r, c) = view.pixel_of(&p)?;
    let d = depth.at(r, c) as f64;
    (p.depth <= d + occlusion_tol).then_some((r, c))
}

/// Projects the superpoint's points, keeps those that pass the depth test,
/// and returns the union of their 3×3 footprints. `None` means not visible.
pub fn project_superpoint(
    scene: &SceneGeometry,
    sp: &Superpoint,
    view: &CameraView,
    depth: &DepthMap,
    config: &ProjectionConfig,
) -> Option<ProjectionMask> {
    let (w, h) = (view.width as i64, view.height as i64);
    let mut pixels = Vec::new();
    for &i in &sp.point_indices {
        let Some((r0, c0)) = passes_depth_test(scene, i as usize, view, depth, config.occlusion_tol) else {
            continue;
        };
        for dr in -SPLAT_RADIUS..=SPLAT_RADIUS {
            for dc in -SPLAT_RADIUS..=SPLAT_RADIUS {
                let (r, c) = (r0 as i64 + dr, c0 as i64 + dc);
                if r >= 0 && c >= 0 && r < h && c < w {
                    pixels.push((r as u32, c as u32));
                }
            }
        }
    }
    let mask = ProjectionMask::new(view.view_id, sp.sp_id, pixels);
    (mask.pixel_count >= config.min_visible_pixels.max(1)).then_some(mask)
}

/// Euclidean distance between mask centroids, in pixels.
pub fn superpoint_distance_2d(a: &ProjectionMask, b: &ProjectionMask) -> f64 {
    debug_assert_eq!(a.view_id, b.view_id);
    let dr = a.centroid_2d.0 - b.centroid_2d.0;
    let dc = a.centroid_2d.1 - b.centroid_2d.1;
    (dr * dr + dc * dc).sqrt()
}

/// Projection masks for every (view, superpoint) pair, indexed by position
/// in the view and superpoint slices used to build it.
#[derive(Debug, Clone)]
pub struct VisibilityIndex {
    pub view_ids: Vec<u32>,
    masks: Vec<Vec<Option<ProjectionMask>>>,
}

impl VisibilityIndex {
    pub fn build(
        scene: &SceneGeometry,
        superpoints: &[Superpoint],
        views: &[CameraView],
        depth_maps: &[DepthMap],
        config: &ProjectionConfig,
    ) -> Self {
        let masks = views
            .par_iter()
            .zip(depth_maps)
            .map(|(view, depth)| {
                superpoints
                    .iter()
                    .map(|sp| project_superpoint(scene, sp, view, depth, config))
                    .collect()
            })
            .collect();
        VisibilityIndex {
            view_ids: views.iter().map(|v| v.view_id).collect(),
            masks,
        }
    }

    pub fn num_views(&self) -> usize {
        self.masks.len()
    }

    pub fn mask(&self, view_idx: usize, sp_idx: usize) -> Option<&ProjectionMask> {
        self.masks[view_idx][sp_idx].as_ref()
    }

    pub fn is_visible(&self, view_idx: usize, sp_idx: usize) -> bool {
        self.masks[view_idx][sp_idx].is_some()
    }

    pub fn visible_views(&self, sp_idx: usize) -> Vec<usize> {
        (0..self.masks.len()).filter(|&v| self.is_visible(v, sp_idx)).collect()
    }

    pub fn co_visible_views(&self, a: usize, b: usize) -> Vec<usize> {
        (0..self.masks.len())
            .filter(|&v| self.is_visible(v, a) && self.is_visible(v, b))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Vector3};

    fn camera() -> CameraView {
        CameraView {
            view_id: 0,
            fx: 100.0,
            fy: 100.0,
            cx: 50.0,
            cy: 50.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            width: 100,
            height: 100,
        }
    }

    fn quad(z: f32, half: f32, base: u32) -> (Vec<[f32; 3]>, Vec<[u32; 3]>) {
        let pts = vec![[-half, -half, z], [half, -half, z], [half, half, z], [-half, half, z]];
        (pts, vec![[base, base + 1, base + 2], [base, base + 2, base + 3]])
    }

    fn mesh(parts: &[(f32, f32)]) -> SceneGeometry {
        let mut pts = Vec::new();
        let mut faces = Vec::new();
        for &(z, half) in parts {
            let (p, f) = quad(z, half, pts.len() as u32);
            pts.extend(p);
            faces.extend(f);
        }
        let n = pts.len();
        SceneGeometry::new(pts, vec![[0.0, 0.0, -1.0]; n], None, Some(faces), None).unwrap()
    }

    /// Grid of points covering a square at depth z.
    fn square_cloud(z: f32, half: f32, step: f32) -> SceneGeometry {
        let mut pts = Vec::new();
        let n = (2.0 * half / step).round() as i32;
        for i in 0..=n {
            for j in 0..=n {
                pts.push([-half + i as f32 * step, -half + j as f32 * step, z]);
            }
        }
        let n = pts.len();
        SceneGeometry::new(pts, vec![[0.0, 0.0, -1.0]; n], None, None, None).unwrap()
    }

    #[test]
    fn fronto_parallel_triangle_depth() {
        let s = SceneGeometry::new(
            vec![[-0.5, -0.5, 2.0], [0.5, -0.5, 2.0], [0.0, 0.5, 2.0]],
            vec![[0.0, 0.0, -1.0]; 3],
            None,
            Some(vec![[0, 1, 2]]),
            None,
        )
        .unwrap();
        let d = render_depth(&s, &camera());
        let covered: Vec<f32> = d.depth.iter().copied().filter(|z| z.is_finite()).collect();
        assert!(!covered.is_empty());
        assert!(covered.iter().all(|z| (z - 2.0).abs() < 1e-3));
    }

    #[test]
    fn empty_scene_renders_infinity() {
        // A scene whose only point is behind the camera renders nothing.
        let s = SceneGeometry::new(vec![[0.0, 0.0, -1.0]], vec![[0.0, 0.0, 1.0]], None, None, None).unwrap();
        let d = render_depth(&s, &camera());
        assert!(d.depth.iter().all(|z| z.is_infinite()));
    }

    #[test]
    fn z_buffer_keeps_nearest() {
        let s = mesh(&[(2.0, 0.5), (1.0, 0.2)]);
        let d = render_depth(&s, &camera());
        assert!((d.at(50, 50) - 1.0).abs() < 1e-5);
        // Outside the small quad, the far one shows.
        assert!((d.at(50, 27) - 2.0).abs() < 1e-5);
    }

    #[test]
    fn occluded_superpoint_not_visible() {
        let mut near = square_cloud(1.0, 0.3, 0.01);
        let far = square_cloud(2.0, 0.3, 0.02);
        let near_n = near.len();
        near.points.extend(far.points.iter().copied());
        near.normals.extend(far.normals.iter().copied());
        let sp_far = Superpoint::new(1, (near_n as u32..near.len() as u32).collect(), &near);
        let sp_near = Superpoint::new(0, (0..near_n as u32).collect(), &near);
        let cam = camera();
        let d = render_depth(&near, &cam);
        let cfg = ProjectionConfig::default();
        assert!(project_superpoint(&near, &sp_far, &cam, &d, &cfg).is_none());
        assert!(project_superpoint(&near, &sp_near, &cam, &d, &cfg).is_some());
    }

    #[test]
    fn outside_frustum_not_visible() {
        let s = square_cloud(-2.0, 0.3, 0.02);
        let sp = Superpoint::new(0, (0..s.len() as u32).collect(), &s);
        let cam = camera();
        let d = render_depth(&s, &cam);
        assert!(project_superpoint(&s, &sp, &cam, &d, &ProjectionConfig::default()).is_none());
    }

    #[test]
    fn square_area_matches_pinhole() {
        // 1.6 m square at 2 m with f = 100 px spans 80 px; the 3x3
        // footprint adds about one pixel per side.
        let s = square_cloud(2.0, 0.8, 0.01);
        let sp = Superpoint::new(0, (0..s.len() as u32).collect(), &s);
        let cam = camera();
        let d = render_depth(&s, &cam);
        let m = project_superpoint(&s, &sp, &cam, &d, &ProjectionConfig::default()).unwrap();
        let analytic = {
            let a = cam.project(&Vector3::new(-0.8, -0.8, 2.0)).unwrap();
            let b = cam.project(&Vector3::new(0.8, 0.8, 2.0)).unwrap();
            (b.col - a.col) * (b.row - a.row)
        };
        let rel = (m.pixel_count as f64 - analytic).abs() / analytic;
        assert!(rel < 0.10, "pixels {} analytic {analytic}", m.pixel_count);
    }

    #[test]
    fn distance_examples() {
        let a = ProjectionMask::new(0, 0, vec![(0, 0)]);
        let b = ProjectionMask::new(0, 1, vec![(3, 4)]);
        assert_eq!(superpoint_distance_2d(&a, &a), 0.0);
        assert_eq!(superpoint_distance_2d(&a, &b), 5.0);
        assert_eq!(superpoint_distance_2d(&b, &a), 5.0);
    }

    #[test]
    fn kept_points_pass_depth_test() {
        let s = square_cloud(2.0, 0.3, 0.01);
        let cam = camera();
        let d = render_depth(&s, &cam);
        for i in 0..s.len() {
            if let Some((r, c)) = passes_depth_test(&s, i, &cam, &d, 0.03) {
                assert!(d.at(r, c) as f64 + 0.03 >= 2.0 - 1e-6);
            }
        }
    }
}
