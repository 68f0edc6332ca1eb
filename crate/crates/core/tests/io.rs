mod common;

use proptest::prelude::*;
use supercut::bitmap::Bitmap;
use supercut::gnn::{params_from_bytes, params_to_bytes, GnnParameters};
use supercut::graph_build::{collect_prompts, GraphBuildConfig};
use supercut::io::features::{feature_map_from_bytes, feature_map_to_bytes};
use supercut::io::imap::{instance_map_from_bytes, instance_map_to_bytes, InstanceMap, InstanceMapStore};
use supercut::io::json::{cameras_from_json, cameras_to_json, load_segmentation, save_segmentation};
use supercut::io::oracle_store::{OracleStore, OracleStoreWriter, INDEX_FILE, MASKS_FILE};
use supercut::io::ply::{load_scene, parse_scene, save_scene, scene_to_bytes};
use supercut::io::prompts::{prompts_from_bytes, prompts_to_bytes};
use supercut::io::spg::{graph_from_bytes, graph_to_bytes, load_graph, save_graph};
use supercut::io::store::validate_store;
use supercut::mask_oracle::{FeatureMap, FeatureStore, MaskCandidate, NoiseConfig, OracleResponse, PromptSet};
use supercut::presegment::presegment;
use supercut::synth::{self, export_store, generate, FeatureSynthesis, SynthConfig};
use supercut::{
    EdgeLabel, Error, GraphEdge, GraphNode, InstanceInfo, InstanceSegmentation, SceneGeometry, SuperpointGraph,
    FEATURE_DIM,
};

fn unit(v: [f32; 3]) -> [f32; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if n < 1e-3 {
        [0.0, 0.0, 1.0]
    } else {
        v.map(|x| x / n)
    }
}

fn scenes() -> impl Strategy<Value = SceneGeometry> {
    (1usize..60).prop_flat_map(|n| {
        let coord = -1e3f32..1e3;
        (
            prop::collection::vec([coord.clone(), coord.clone(), coord], n),
            prop::collection::vec([-1.0f32..1.0, -1.0f32..1.0, -1.0f32..1.0], n),
            prop::option::of(prop::collection::vec([0.0f32..1.0, 0.0f32..1.0, 0.0f32..1.0], n)),
            prop::option::of(prop::collection::vec(-3i32..20, n)),
            prop::option::of(prop::collection::vec([0..n as u32, 0..n as u32, 0..n as u32], 0..20)),
        )
            .prop_map(|(p, nrm, c, g, f)| {
                SceneGeometry::new(p, nrm.into_iter().map(unit).collect(), c, f, g).unwrap()
            })
    })
}

fn graphs() -> impl Strategy<Value = SuperpointGraph> {
    (0usize..40, any::<u64>(), prop::bool::ANY, prop::bool::ANY, prop::bool::ANY, prop::bool::ANY).prop_map(
        |(n, seed, features, weights, affinities, labels)| {
            let mut g = common::random_graph(seed, n.max(2), n);
            for node in &mut g.nodes {
                if !features {
                    node.feature = None;
                }
            }
            for (i, e) in g.edges.iter_mut().enumerate() {
                if !weights {
                    e.w_sam = None;
                }
                e.affinity = affinities.then_some(((i * 37) % 101) as f32 / 100.0);
                if !labels {
                    e.label = None;
                }
            }
            if n == 0 {
                g = SuperpointGraph::default();
            }
            g
        },
    )
}

/// Three nested masks, so areas are descending by construction.
fn responses() -> impl Strategy<Value = OracleResponse> {
    (1u32..24, 1u32..24).prop_flat_map(|(w, h)| {
        let n = (w * h) as usize;
        (
            prop::collection::vec(prop::bool::ANY, n),
            prop::collection::vec(prop::bool::ANY, n),
            [0.0f32..=1.0, 0.0f32..=1.0, 0.0f32..=1.0],
        )
            .prop_map(move |(a, b, conf)| {
                let big = Bitmap::from_fn(w, h, |r, c| (r, c) == (0, 0) || a[(r * w + c) as usize]);
                let mid = Bitmap::from_fn(w, h, |r, c| big.get(r, c) && ((r, c) == (0, 0) || b[(r * w + c) as usize]));
                let small = Bitmap::from_pixels(w, h, [(0, 0)]);
                OracleResponse::new([
                    MaskCandidate::new(big, conf[0]).unwrap(),
                    MaskCandidate::new(mid, conf[1]).unwrap(),
                    MaskCandidate::new(small, conf[2]).unwrap(),
                ])
                .unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ply_round_trip(scene in scenes()) {
        let back = parse_scene(&scene_to_bytes(&scene)).unwrap();
        prop_assert_eq!(&back, &scene);
        prop_assert_eq!(scene_to_bytes(&back), scene_to_bytes(&scene));
    }

    #[test]
    fn spg_round_trip(graph in graphs()) {
        let bytes = graph_to_bytes(&graph).unwrap();
        let back = graph_from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &graph);
        prop_assert_eq!(graph_to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn truncated_spg_is_rejected(graph in graphs(), cut in any::<prop::sample::Index>()) {
        let bytes = graph_to_bytes(&graph).unwrap();
        let at = cut.index(bytes.len());
        prop_assert!(graph_from_bytes(&bytes[..at]).is_err());
    }

    #[test]
    fn fmap_round_trip(h in 1u32..6, w in 1u32..6, seed in any::<u32>()) {
        let c = FEATURE_DIM as u32;
        let data: Vec<f32> = (0..h * w * c).map(|i| ((i ^ seed) as f32).sin() * 1e3).collect();
        let fm = FeatureMap { view_id: 7, height: h, width: w, channels: c, data };
        prop_assert_eq!(feature_map_from_bytes(&feature_map_to_bytes(&fm), 7).unwrap(), fm);
    }

    #[test]
    fn imap_round_trip(h in 1u32..20, w in 1u32..20, labels in prop::collection::vec(any::<u16>(), 400)) {
        let map = InstanceMap { view_id: 3, height: h, width: w, labels: labels[..(h * w) as usize].to_vec() };
        prop_assert_eq!(instance_map_from_bytes(&instance_map_to_bytes(&map), 3).unwrap(), map);
    }

    #[test]
    fn prompts_round_trip(raw in prop::collection::vec((any::<u32>(), any::<u32>(), prop::collection::vec((any::<u32>(), any::<u32>()), 0..6)), 0..20)) {
        let prompts: Vec<PromptSet> = raw.into_iter().map(|(view_id, sp_id, points)| PromptSet { view_id, sp_id, points }).collect();
        prop_assert_eq!(prompts_from_bytes(&prompts_to_bytes(&prompts)).unwrap(), prompts);
    }

    #[test]
    fn oracle_store_round_trip(resps in prop::collection::vec(responses(), 0..6)) {
        let dir = tempfile::tempdir().unwrap();
        let mut w = OracleStoreWriter::new("test");
        for (i, r) in resps.iter().enumerate() {
            w.push(i as u32 % 3, i as u32, r);
        }
        w.write(dir.path()).unwrap();
        let store = OracleStore::load(dir.path()).unwrap();
        prop_assert_eq!(store.len(), resps.len());
        for (i, r) in resps.iter().enumerate() {
            prop_assert_eq!(&store.get(i as u32 % 3, i as u32).unwrap(), r);
        }
    }

    #[test]
    fn params_round_trip(seed in any::<u64>()) {
        let p = GnnParameters::<f32>::glorot(seed);
        let back = params_from_bytes(&params_to_bytes(&p)).unwrap();
        prop_assert_eq!(back.to_flat(), p.to_flat());
    }
}

#[test]
fn large_graph_round_trips_through_a_file() {
    let mut g = common::random_graph(3, 5000, 15000);
    for (i, e) in g.edges.iter_mut().enumerate() {
        e.affinity = Some((i % 997) as f32 / 996.0);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.spg");
    save_graph(&g, &path).unwrap();
    assert_eq!(load_graph(&path).unwrap(), g);
}

#[test]
fn small_graph_keeps_weight_bits() {
    let mut e = GraphEdge::new(1, 0);
    e.w_sam = Some(0.75);
    e.label = Some(EdgeLabel::Negative);
    let g = SuperpointGraph {
        nodes: vec![GraphNode { sp_id: 4, feature: None }, GraphNode { sp_id: 9, feature: None }],
        edges: vec![e],
    };
    let back = graph_from_bytes(&graph_to_bytes(&g).unwrap()).unwrap();
    assert_eq!(back.edges[0].w_sam.unwrap().to_bits(), 0.75f32.to_bits());
    assert_eq!((back.edges[0].u, back.edges[0].v), (0, 1));
}

#[test]
fn synthetic_room_loads_with_ground_truth() {
    let s = generate(&SynthConfig {
        num_objects: 4,
        points_per_object: 1000,
        points_on_walls_floor: 6000,
        camera_count: 12,
        image_width: 160,
        image_height: 120,
        seed: 2,
        ..SynthConfig::default()
    })
    .unwrap();
    assert_eq!(s.scene.len(), 10_000);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.ply");
    save_scene(&s.scene, &path).unwrap();
    let back = load_scene(&path).unwrap();
    assert_eq!(back.gt_instance, s.scene.gt_instance);
    assert_eq!(back, s.scene);

    let views = cameras_from_json(&cameras_to_json(&s.cameras).unwrap()).unwrap();
    assert_eq!(views, s.cameras);
}

#[test]
fn segmentation_json_round_trips() {
    let seg = InstanceSegmentation {
        assignment: vec![0, 0, 1, -1, 1],
        instances: vec![InstanceInfo { id: 0, confidence: 0.1 + 0.2 }, InstanceInfo { id: 1, confidence: 1.0 / 3.0 }],
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("seg.json");
    save_segmentation(&seg, &path).unwrap();
    assert_eq!(load_segmentation(&path).unwrap(), seg);
}

struct Exported {
    dir: tempfile::TempDir,
    cameras: Vec<supercut::CameraView>,
    prompts: Vec<PromptSet>,
}

fn exported() -> Exported {
    let s = generate(&SynthConfig {
        num_objects: 2,
        points_per_object: 1200,
        points_on_walls_floor: 5000,
        camera_count: 8,
        image_width: 128,
        image_height: 96,
        seed: 6,
        ..SynthConfig::default()
    })
    .unwrap();
    let sps = presegment(&s.scene, &synth::PRESEGMENT).unwrap();
    let build = GraphBuildConfig::default();
    let dir = tempfile::tempdir().unwrap();
    let summary = export_store(
        &s.scene,
        &s.cameras,
        &sps,
        &build,
        &NoiseConfig::OFF,
        &FeatureSynthesis::default(),
        8,
        6,
        dir.path(),
    )
    .unwrap();
    assert_eq!(summary.feature_maps, 8);
    assert_eq!(summary.instance_maps, 8);
    let prompts = collect_prompts(&s.scene, &sps, &s.cameras, &build).unwrap();
    assert_eq!(summary.oracle_entries, prompts.len());
    Exported { dir, cameras: s.cameras, prompts }
}

#[test]
fn exported_store_validates() {
    let e = exported();
    let report = validate_store(e.dir.path(), Some(&e.cameras), Some(&e.prompts));
    assert!(report.is_ok(), "{:?}", report.problems);
    assert_eq!(report.missing_answers, 0);
    assert_eq!(report.oracle_entries, e.prompts.len());
}

#[test]
fn missing_files_and_answers_are_reported() {
    let e = exported();
    let dir = e.dir.path();
    std::fs::remove_file(dir.join(FeatureStore::file_name(e.cameras[2].view_id))).unwrap();
    std::fs::remove_file(dir.join(InstanceMapStore::file_name(e.cameras[5].view_id))).unwrap();
    let mut prompts = e.prompts.clone();
    prompts.push(PromptSet { view_id: 0, sp_id: 99_999, points: vec![(1, 1)] });
    let report = validate_store(dir, Some(&e.cameras), Some(&prompts));
    assert_eq!(report.missing_answers, 1);
    let all = report.problems.join("\n");
    assert!(all.contains("no feature map for 1 views, first view 2"), "{all}");
    assert!(all.contains("no instance map for 1 views, first view 5"), "{all}");
    assert!(all.contains("superpoint 99999"), "{all}");
}

#[test]
fn corrupted_masks_name_the_entry() {
    let e = exported();
    let dir = e.dir.path();
    let store = OracleStore::load(dir).unwrap();
    let victim = store.index.entries[store.len() / 2].clone();
    let mut bytes = std::fs::read(dir.join(MASKS_FILE)).unwrap();
    // The first run length of the victim's first candidate.
    let at = victim.offset as usize + 4;
    bytes[at] = bytes[at].wrapping_add(1);
    std::fs::write(dir.join(MASKS_FILE), bytes).unwrap();

    let store = OracleStore::load(dir).unwrap();
    let err = store.get(victim.view_id, victim.sp_id).unwrap_err();
    assert!(matches!(err, Error::Format(_)));
    let msg = err.to_string();
    assert!(msg.contains(&format!("view {}, superpoint {}", victim.view_id, victim.sp_id)), "{msg}");
    let report = validate_store(dir, Some(&e.cameras), None);
    assert!(!report.is_ok());
}

#[test]
fn missing_store_is_reported_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let report = validate_store(dir.path(), None, None);
    assert!(report.problems.iter().any(|p| p.contains(INDEX_FILE)), "{:?}", report.problems);
}
