//! Reference implementations shared by the integration and acceptance tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use supercut::gnn::{loss_and_gradients, GnnParameters, GraphInput};
use supercut::graph_build::EdgeObservation;
use supercut::rng::keyed_rng;
use supercut::{EdgeLabel, GraphEdge, GraphNode, SuperpointGraph, FEATURE_DIM};

/// Random connected-ish graph with features in [-1, 1], random oracle
/// weights (some exactly 0.5) and a mix of labeled and unlabeled edges.
pub fn random_graph(seed: u64, n: usize, extra_edges: usize) -> SuperpointGraph {
    let mut rng = keyed_rng(seed, &[900]);
    let nodes = (0..n)
        .map(|i| GraphNode {
            sp_id: i as u32 * 2 + 5,
            feature: Some((0..FEATURE_DIM).map(|_| rng.gen_range(-1.0f32..1.0)).collect()),
        })
        .collect();
    let mut pairs: Vec<(u32, u32)> = (1..n as u32).map(|v| (rng.gen_range(0..v), v)).collect();
    for _ in 0..extra_edges {
        let (a, b) = (rng.gen_range(0..n as u32), rng.gen_range(0..n as u32));
        if a != b {
            pairs.push((a.min(b), a.max(b)));
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    let edges = pairs
        .into_iter()
        .map(|(u, v)| {
            let mut e = GraphEdge::new(u, v);
            e.w_sam = Some(match rng.gen_range(0..4) {
                0 => 0.5,
                _ => rng.gen_range(0.0f32..1.0),
            });
            e.label = match rng.gen_range(0..3) {
                0 => Some(EdgeLabel::Positive),
                1 => Some(EdgeLabel::Negative),
                _ => None,
            };
            e
        })
        .collect();
    SuperpointGraph { nodes, edges }
}

/// Glorot weights with small random biases so every bias matters.
pub fn random_params(seed: u64) -> GnnParameters<f64> {
    let mut p = GnnParameters::<f64>::glorot(seed);
    let mut rng = keyed_rng(seed, &[901]);
    for layer in p.gcn.iter_mut().chain(p.mlp.iter_mut()) {
        layer.bias.mapv_inplace(|_| rng.gen_range(-0.1..0.1));
    }
    p
}

pub struct GradCheck {
    pub max_rel_err: f64,
    pub coordinates: usize,
    pub directions: usize,
    /// Coordinates whose stencil straddles a ReLU kink and were left out.
    pub kinked: usize,
    /// Flat index (or `None` for a direction), analytic and numeric values
    /// at the worst disagreement.
    pub worst: (Option<usize>, f64, f64),
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares the analytic gradient with central differences (h = 1e-4) on
/// `per_layer` sampled coordinates of every weight and bias tensor, and
/// along `directions` random directions that move every parameter at once.
///
/// The loss is only piecewise smooth. When a pre-activation lies within h
/// of zero the stencil crosses a ReLU kink and the central difference
/// averages two different slopes. Such coordinates show up as a central
/// difference that changes when h is halved, which on a smooth stretch
/// only moves by O(h^2); they are counted in `kinked` and excluded.
pub fn gradient_check(graph: &SuperpointGraph, params: &GnnParameters<f64>, per_layer: usize, directions: usize, seed: u64) -> GradCheck {
    const H: f64 = 1e-4;
    let input = GraphInput::<f64>::from_graph(graph, true).unwrap();
    let (_, grads) = loss_and_gradients(&input, params).unwrap();
    let flat = params.to_flat();
    let g = grads.to_flat();
    let loss_at = |values: &[f64]| {
        let mut p = params.clone();
        p.set_flat(values);
        loss_and_gradients(&input, &p).unwrap().0.total
    };

    // Offsets of each tensor in the flat layout.
    let mut tensors = Vec::new();
    let mut at = 0;
    for l in params.layers() {
        tensors.push((at, l.weight.len()));
        at += l.weight.len();
        tensors.push((at, l.bias.len()));
        at += l.bias.len();
    }

    let mut rng = keyed_rng(seed, &[902]);
    let mut worst = 0.0f64;
    let mut worst_at = (None, 0.0, 0.0);
    let mut coordinates = 0;
    let mut kinked = 0;
    let mut buf = flat.clone();
    for &(start, len) in &tensors {
        let mut idx: Vec<usize> = (start..start + len).collect();
        idx.shuffle(&mut rng);
        for &i in idx.iter().take(per_layer) {
            let mut central = |h: f64| {
                buf[i] = flat[i] + h;
                let up = loss_at(&buf);
                buf[i] = flat[i] - h;
                let down = loss_at(&buf);
                buf[i] = flat[i];
                (up - down) / (2.0 * h)
            };
            let numeric = central(H);
            let half = central(H / 2.0);
            coordinates += 1;
            // On a smooth stretch the two stencils agree to O(h^2).
            if rel_err(numeric, half) > 1e-5 {
                kinked += 1;
                continue;
            }
            if rel_err(g[i], numeric) > worst {
                worst = rel_err(g[i], numeric);
                worst_at = (Some(i), g[i], numeric);
            }
        }
    }
    for _ in 0..directions {
        let d: Vec<f64> = (0..flat.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        let step = |sign: f64| -> Vec<f64> { flat.iter().zip(&d).map(|(p, x)| p + sign * H * x / norm).collect() };
        let numeric = (loss_at(&step(1.0)) - loss_at(&step(-1.0))) / (2.0 * H);
        let analytic: f64 = g.iter().zip(&d).map(|(a, x)| a * x / norm).sum();
        if rel_err(analytic, numeric) > worst {
            worst = rel_err(analytic, numeric);
            worst_at = (None, analytic, numeric);
        }
    }
    GradCheck { max_rel_err: worst, coordinates, directions, kinked, worst: worst_at }
}

/// Connected components by breadth-first search, as sorted member lists
/// sorted by first member.
pub fn bfs_components(n: usize, edges: &[(u32, u32)]) -> Vec<Vec<u32>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a as usize].push(b as usize);
        adj[b as usize].push(a as usize);
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut queue = std::collections::VecDeque::from([s]);
        let mut comp = Vec::new();
        while let Some(v) = queue.pop_front() {
            comp.push(v as u32);
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out.sort();
    out
}

/// Confidence- and distance-weighted mean, computed term by term.
pub fn brute_aggregate(obs: &[EdgeObservation]) -> (f64, Vec<f64>) {
    if obs.is_empty() {
        return (0.0, Vec::new());
    }
    let scores: Vec<f64> = obs.iter().map(|o| o.dist_2d * o.conf_a * o.conf_b).collect();
    let total: f64 = scores.iter().sum();
    let coeffs: Vec<f64> = if total > 0.0 {
        scores.iter().map(|s| s / total).collect()
    } else {
        vec![1.0 / obs.len() as f64; obs.len()]
    };
    let w = coeffs.iter().zip(obs).map(|(c, o)| c * o.w_i).sum();
    (w, coeffs)
}

pub fn random_observations(rng: &mut impl Rng) -> Vec<EdgeObservation> {
    let n = rng.gen_range(0..10);
    (0..n)
        .map(|v| EdgeObservation {
            view_id: v,
            w_i: rng.gen_range(0.0..=1.0),
            conf_a: if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..=1.0) },
            conf_b: rng.gen_range(0.0..=1.0),
            dist_2d: rng.gen_range(0.0..300.0),
        })
        .collect()
}

/// Writes a synthetic room with its oracle store the way `supercut synth
/// --with-store` does, and returns a pipeline config over it.
pub fn synth_setup(dir: &std::path::Path, synth: &supercut::synth::SynthConfig) -> supercut::pipeline::PipelineConfig {
    use supercut::graph_build::GraphBuildConfig;
    use supercut::pipeline::{Paths, PipelineConfig, Stage};
    use supercut::synth::{export_store, generate, FeatureSynthesis, PRESEGMENT};

    let s = generate(synth).unwrap();
    supercut::io::ply::save_scene(&s.scene, dir.join("scene.ply")).unwrap();
    supercut::io::json::save_cameras(&s.cameras, dir.join("cams.json")).unwrap();
    let sps = supercut::presegment::presegment(&s.scene, &PRESEGMENT).unwrap();
    let build = GraphBuildConfig { seed: synth.seed, ..Default::default() };
    export_store(
        &s.scene,
        &s.cameras,
        &sps,
        &build,
        &synth.noise,
        &FeatureSynthesis::default(),
        synth.feature_stride,
        synth.seed,
        dir.join("store"),
    )
    .unwrap();
    PipelineConfig {
        seed: synth.seed,
        stages: Stage::ALL.to_vec(),
        paths: Paths {
            scene: dir.join("scene.ply"),
            cameras: dir.join("cams.json"),
            oracle: dir.join("store"),
            features: None,
            instance_maps: None,
            out_dir: dir.join("run"),
            pretrained_model: None,
        },
        presegment: PRESEGMENT,
        graph: build,
        pseudo_label: Default::default(),
        train: Default::default(),
        cut: Default::default(),
        eval: Default::default(),
    }
}

/// A room small enough for a full pipeline run in a few seconds.
pub fn small_room(seed: u64) -> supercut::synth::SynthConfig {
    supercut::synth::SynthConfig {
        num_objects: 3,
        points_per_object: 1500,
        points_on_walls_floor: 8000,
        camera_count: 16,
        image_width: 160,
        image_height: 120,
        seed,
        ..Default::default()
    }
}
