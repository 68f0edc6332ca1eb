//! Shared domain types: scene geometry, cameras, superpoints, the annotated
//! superpoint graph and the final instance segmentation.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth id for unannotated points.
pub const NONE_ID: i32 = -1;
/// Ground-truth id reserved for floor points.
pub const FLOOR_ID: i32 = -2;
/// Ground-truth id reserved for wall points.
pub const WALL_ID: i32 = -3;

/// Width of SAM-style node features.
pub const FEATURE_DIM: usize = 256;

const NORMAL_TOL: f32 = 1e-4;

/// Triangle mesh or point cloud. `faces` present means mesh mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGeometry {
    pub points: Vec<[f32; 3]>,
    pub normals: Vec<[f32; 3]>,
    pub colors: Option<Vec<[f32; 3]>>,
    pub faces: Option<Vec<[u32; 3]>>,
    pub gt_instance: Option<Vec<i32>>,
}

impl SceneGeometry {
    /// Builds a scene and checks every invariant. Nothing is repaired.
    pub fn new(
        points: Vec<[f32; 3]>,
        normals: Vec<[f32; 3]>,
        colors: Option<Vec<[f32; 3]>>,
        faces: Option<Vec<[u32; 3]>>,
        gt_instance: Option<Vec<i32>>,
    ) -> Result<Self> {
        let scene = SceneGeometry {
            points,
            normals,
            colors,
            faces,
            gt_instance,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if n == 0 {
            return Err(Error::EmptyScene);
        }
        if let Some(i) = self
            .points
            .iter()
            .position(|p| p.iter().any(|c| !c.is_finite()))
        {
            return Err(Error::invalid("scene", format!("point {i} is not finite")));
        }
        if self.normals.len() != n {
            return Err(Error::invalid(
                "scene",
                format!("{} normals for {n} points", self.normals.len()),
            ));
        }
        for (i, nrm) in self.normals.iter().enumerate() {
            let len = (nrm[0] * nrm[0] + nrm[1] * nrm[1] + nrm[2] * nrm[2]).sqrt();
            if !len.is_finite() || (len - 1.0).abs() > NORMAL_TOL {
                return Err(Error::invalid(
                    "scene",
                    format!("normal {i} has length {len}"),
                ));
            }
        }
        if let Some(colors) = &self.colors {
            if colors.len() != n {
                return Err(Error::invalid("scene", "color count differs from point count"));
            }
        }
        if let Some(faces) = &self.faces {
            if let Some(f) = faces.iter().position(|f| f.iter().any(|&v| v as usize >= n)) {
                return Err(Error::invalid(
                    "scene",
                    format!("face {f} references a vertex out of range"),
                ));
            }
        }
        if let Some(gt) = &self.gt_instance {
            if gt.len() != n {
                return Err(Error::invalid(
                    "scene",
                    format!("{} instance labels for {n} points", gt.len()),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_mesh(&self) -> bool {
        self.faces.is_some()
    }

    pub fn point(&self, i: usize) -> Vector3<f64> {
        let p = self.points[i];
        Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64)
    }

    pub fn normal(&self, i: usize) -> Vector3<f64> {
        let n = self.normals[i];
        Vector3::new(n[0] as f64, n[1] as f64, n[2] as f64)
    }
}

/// Calibrated pinhole camera. The extrinsic transform maps world points to
/// camera coordinates: `x_cam = R * x_world + t`, with +z looking forward,
/// +x towards increasing columns and +y towards increasing rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub view_id: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub width: u32,
    pub height: u32,
}

/// A point projected into an image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected {
    pub row: f64,
    pub col: f64,
    pub depth: f64,
}

impl CameraView {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid("camera", format!("view {}: {m}", self.view_id)));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad(format!("focal lengths must be positive ({}, {})", self.fx, self.fy));
        }
        if self.width == 0 || self.height == 0 {
            return bad("empty image".into());
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64) || !(self.cy > 0.0 && self.cy < self.height as f64) {
            return bad(format!("principal point ({}, {}) outside image", self.cx, self.cy));
        }
        let rrt = self.rotation * self.rotation.transpose();
        let err = (rrt - Matrix3::identity()).abs().max();
        if !(err <= 1e-6) || !(self.rotation.determinant() > 0.0) {
            return bad(format!("rotation is not orthonormal (error {err:e})"));
        }
        if self.translation.iter().any(|t| !t.is_finite()) {
            return bad("translation is not finite".into());
        }
        Ok(())
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Projects a world point; `None` when it lies behind the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<Projected> {
        let c = self.to_camera(p);
        if c.z <= 1e-9 {
            return None;
        }
        Some(Projected {
            col: self.fx * c.x / c.z + self.cx,
            row: self.fy * c.y / c.z + self.cy,
            depth: c.z,
        })
    }

    /// Integer pixel containing a projected point, if inside the image.
    pub fn pixel_of(&self, p: &Projected) -> Option<(u32, u32)> {
        let r = p.row.floor();
        let c = p.col.floor();
        if r >= 0.0 && c >= 0.0 && r < self.height as f64 && c < self.width as f64 {
            Some((r as u32, c as u32))
        } else {
            None
        }
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Geometric over-segment of the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Superpoint {
    pub sp_id: u32,
    pub point_indices: Vec<u32>,
    #[serde(default, skip_serializing)]
    pub centroid: [f64; 3],
}

impl Superpoint {
    pub fn new(sp_id: u32, point_indices: Vec<u32>, scene: &SceneGeometry) -> Self {
        let mut sp = Superpoint {
            sp_id,
            point_indices,
            centroid: [0.0; 3],
        };
        sp.update_centroid(scene);
        sp
    }

    pub fn update_centroid(&mut self, scene: &SceneGeometry) {
        let mut acc = [0.0f64; 3];
        for &i in &self.point_indices {
            let p = scene.points[i as usize];
            for k in 0..3 {
                acc[k] += p[k] as f64;
            }
        }
        let n = self.point_indices.len().max(1) as f64;
        self.centroid = [acc[0] / n, acc[1] / n, acc[2] / n];
    }

    pub fn len(&self) -> usize {
        self.point_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_indices.is_empty()
    }
}

/// Checks that superpoints are nonempty, in range and pairwise disjoint.
pub fn validate_superpoints(superpoints: &[Superpoint], num_points: usize) -> Result<()> {
    let mut owner = vec![u32::MAX; num_points];
    for sp in superpoints {
        if sp.is_empty() {
            return Err(Error::invalid("superpoints", format!("superpoint {} is empty", sp.sp_id)));
        }
        for &i in &sp.point_indices {
            let slot = owner
                .get_mut(i as usize)
                .ok_or_else(|| Error::invalid("superpoints", format!("point {i} out of range")))?;
            if *slot != u32::MAX {
                return Err(Error::invalid(
                    "superpoints",
                    format!("point {i} belongs to superpoints {} and {}", *slot, sp.sp_id),
                ));
            }
            *slot = sp.sp_id;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeLabel {
    Negative,
    Positive,
}

impl EdgeLabel {
    pub fn target(self) -> f64 {
        match self {
            EdgeLabel::Negative => 0.0,
            EdgeLabel::Positive => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub sp_id: u32,
    pub feature: Option<Vec<f32>>,
}

/// Edge between node indices `u < v`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEdge {
    pub u: u32,
    pub v: u32,
    pub w_sam: Option<f32>,
    pub affinity: Option<f32>,
    pub label: Option<EdgeLabel>,
}

impl GraphEdge {
    pub fn new(u: u32, v: u32) -> Self {
        let (u, v) = if u < v { (u, v) } else { (v, u) };
        GraphEdge {
            u,
            v,
            w_sam: None,
            affinity: None,
            label: None,
        }
    }
}

/// Superpoint adjacency graph annotated with SAM weights, node features,
/// network affinities and pseudo-labels. Edge endpoints index `nodes`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuperpointGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl SuperpointGraph {
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len() as u32;
        let mut seen = std::collections::HashSet::with_capacity(self.edges.len());
        for e in &self.edges {
            if e.u >= e.v {
                return Err(Error::invalid(
                    "graph",
                    format!("edge ({}, {}) is not in canonical order", e.u, e.v),
                ));
            }
            if e.v >= n {
                return Err(Error::invalid(
                    "graph",
                    format!("edge ({}, {}) references a missing node", e.u, e.v),
                ));
            }
            if !seen.insert((e.u, e.v)) {
                return Err(Error::invalid("graph", format!("duplicate edge ({}, {})", e.u, e.v)));
            }
            for (name, val) in [("w_sam", e.w_sam), ("affinity", e.affinity)] {
                if let Some(x) = val {
                    if !(0.0..=1.0).contains(&x) {
                        return Err(Error::invalid(
                            "graph",
                            format!("edge ({}, {}) {name} = {x} outside [0, 1]", e.u, e.v),
                        ));
                    }
                }
            }
        }
        for node in &self.nodes {
            if let Some(f) = &node.feature {
                if f.len() != FEATURE_DIM {
                    return Err(Error::invalid(
                        "graph",
                        format!("node {} feature has {} channels", node.sp_id, f.len()),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Node-index adjacency lists, sorted ascending.
    pub fn neighbors(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.u as usize].push(e.v);
            adj[e.v as usize].push(e.u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn labeled_count(&self) -> usize {
        self.edges.iter().filter(|e| e.label.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceInfo {
    pub id: u32,
    pub confidence: f64,
}

/// Per-point instance assignment (`NONE_ID` for unassigned points).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSegmentation {
    pub assignment: Vec<i64>,
    pub instances: Vec<InstanceInfo>,
}

impl InstanceSegmentation {
    pub fn validate(&self) -> Result<()> {
        let ids: std::collections::HashSet<i64> =
            self.instances.iter().map(|i| i.id as i64).collect();
        if ids.len() != self.instances.len() {
            return Err(Error::invalid("segmentation", "duplicate instance ids"));
        }
        for inst in &self.instances {
            if !(0.0..=1.0).contains(&inst.confidence) {
                return Err(Error::invalid(
                    "segmentation",
                    format!("instance {} confidence {} outside [0, 1]", inst.id, inst.confidence),
                ));
            }
        }
        if let Some(bad) = self
            .assignment
            .iter()
            .find(|&&a| a != NONE_ID as i64 && !ids.contains(&a))
        {
            return Err(Error::invalid(
                "segmentation",
                format!("assigned id {bad} has no instance entry"),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri_scene() -> SceneGeometry {
        SceneGeometry::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0.0, 0.0, 1.0]; 3],
            None,
            Some(vec![[0, 1, 2]]),
            None,
        )
        .unwrap()
    }

    #[test]
    fn scene_rejects_bad_normals_and_faces() {
        let s = tri_scene();
        let mut bad = s.clone();
        bad.normals[1] = [0.0, 0.0, 2.0];
        assert!(bad.validate().is_err());
        let mut bad = s.clone();
        bad.faces = Some(vec![[0, 1, 3]]);
        assert!(bad.validate().is_err());
        let mut bad = s.clone();
        bad.gt_instance = Some(vec![0, 1]);
        assert!(bad.validate().is_err());
        let mut bad = s;
        bad.points[0][2] = f32::NAN;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn empty_scene_is_an_error() {
        let r = SceneGeometry::new(vec![], vec![], None, None, None);
        assert!(matches!(r, Err(Error::EmptyScene)));
    }

    #[test]
    fn centroid_is_mean() {
        let s = tri_scene();
        let sp = Superpoint::new(0, vec![0, 1, 2], &s);
        assert!((sp.centroid[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((sp.centroid[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn camera_validation() {
        let mut cam = CameraView {
            view_id: 0,
            fx: 100.0,
            fy: 100.0,
            cx: 50.0,
            cy: 40.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            width: 100,
            height: 80,
        };
        cam.validate().unwrap();
        let p = cam.project(&Vector3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!((p.row, p.col, p.depth), (40.0, 50.0, 2.0));
        assert!(cam.project(&Vector3::new(0.0, 0.0, -1.0)).is_none());
        cam.rotation[(0, 0)] = 1.1;
        assert!(cam.validate().is_err());
        cam.rotation = Matrix3::identity();
        cam.cx = 120.0;
        assert!(cam.validate().is_err());
    }

    #[test]
    fn graph_invariants() {
        let mut g = SuperpointGraph {
            nodes: (0..3).map(|i| GraphNode { sp_id: i, feature: None }).collect(),
            edges: vec![GraphEdge::new(1, 0), GraphEdge::new(1, 2)],
        };
        g.validate().unwrap();
        assert_eq!(g.neighbors()[1], vec![0, 2]);
        g.edges.push(GraphEdge::new(0, 1));
        assert!(g.validate().is_err());
        g.edges.pop();
        g.edges[0].w_sam = Some(1.5);
        assert!(g.validate().is_err());
    }

    #[test]
    fn superpoint_overlap_detected() {
        let s = tri_scene();
        let a = Superpoint::new(0, vec![0, 1], &s);
        let b = Superpoint::new(1, vec![1, 2], &s);
        assert!(validate_superpoints(&[a.clone()], 3).is_ok());
        assert!(validate_superpoints(&[a, b], 3).is_err());
    }
}
