use std::collections::HashMap;

use proptest::prelude::*;
use supercut::graph_build::{build_adjacency, AdjacencyConfig, SceneViews};
use supercut::io::imap::{InstanceMap, InstanceMapStore};
use supercut::mask_oracle::NoiseConfig;
use supercut::presegment::presegment;
use supercut::projection::{ProjectionConfig, ProjectionMask};
use supercut::pseudo_label::{
    apply_labels, majority_instance, make_pseudo_label, make_pseudo_labels, record_all_votes, record_edge_votes,
    CoVisibilityRecord,
};
use supercut::synth::{self, generate, synth_instance_maps, SynthConfig};
use supercut::{EdgeLabel, GraphEdge, GraphNode, SuperpointGraph};

fn records() -> impl Strategy<Value = Vec<CoVisibilityRecord>> {
    prop::collection::vec(
        (0u32..30, 0u32..30, prop::bool::ANY).prop_map(|(a, b, pure)| CoVisibilityRecord {
            u: 0,
            v: 1,
            // Half the records are unanimous so labels actually occur.
            votes_same: a,
            votes_diff: if pure { 0 } else { b },
        }),
        0..60,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn labeled_count_falls_with_n_min(recs in records(), n in 1usize..25) {
        let count = |n| make_pseudo_labels(&recs, n).iter().filter(|l| l.is_some()).count();
        prop_assert!(count(n + 1) <= count(n));
    }

    #[test]
    fn labels_follow_unanimity(recs in records(), n in 1usize..25) {
        for (r, l) in recs.iter().zip(make_pseudo_labels(&recs, n)) {
            let (s, d) = (r.votes_same as usize, r.votes_diff as usize);
            let want = if s >= n && d == 0 {
                Some(EdgeLabel::Positive)
            } else if d >= n && s == 0 {
                Some(EdgeLabel::Negative)
            } else {
                None
            };
            prop_assert_eq!(l, want);
        }
    }

    #[test]
    fn majority_matches_counting(labels in prop::collection::vec(0u16..4, 48), pick in prop::collection::vec(0usize..48, 1..30)) {
        let map = InstanceMap { view_id: 0, height: 6, width: 8, labels: labels.clone() };
        let mask = ProjectionMask::new(0, 0, pick.iter().map(|&i| ((i / 8) as u32, (i % 8) as u32)).collect());
        let mut counts: HashMap<u16, usize> = HashMap::new();
        for &(r, c) in &mask.pixels {
            let l = labels[(r * 8 + c) as usize];
            if l != 0 {
                *counts.entry(l).or_default() += 1;
            }
        }
        let best = counts.values().copied().max();
        let winners: Vec<u16> = counts.iter().filter(|e| Some(*e.1) == best).map(|e| *e.0).collect();
        let want = (winners.len() == 1).then(|| winners[0]);
        prop_assert_eq!(majority_instance(&mask, &map), want);
    }
}

#[test]
fn label_examples() {
    let rec = |s, d| CoVisibilityRecord { u: 0, v: 1, votes_same: s, votes_diff: d };
    assert_eq!(make_pseudo_label(&rec(10, 0), 10), Some(EdgeLabel::Positive));
    assert_eq!(make_pseudo_label(&rec(9, 1), 10), None);
    assert_eq!(make_pseudo_label(&rec(0, 10), 10), Some(EdgeLabel::Negative));
}

struct Fixture {
    scene: synth::SynthScene,
    sps: Vec<supercut::Superpoint>,
    sv: SceneViews,
    graph: SuperpointGraph,
}

fn fixture() -> Fixture {
    let scene = generate(&SynthConfig {
        num_objects: 3,
        points_per_object: 1500,
        points_on_walls_floor: 8000,
        camera_count: 24,
        image_width: 160,
        image_height: 120,
        seed: 4,
        ..SynthConfig::default()
    })
    .unwrap();
    let sps = presegment(&scene.scene, &synth::PRESEGMENT).unwrap();
    let sv = SceneViews::build(&scene.scene, &sps, &scene.cameras, &ProjectionConfig::default());
    let edges = build_adjacency(&scene.scene, &sps, &AdjacencyConfig::default()).unwrap();
    let graph = SuperpointGraph {
        nodes: sps.iter().map(|s| GraphNode { sp_id: s.sp_id, feature: None }).collect(),
        edges: edges.into_iter().map(|(u, v)| GraphEdge::new(u, v)).collect(),
    };
    Fixture { scene, sps, sv, graph }
}

#[test]
fn noiseless_maps_give_exact_labels() {
    let f = fixture();
    let maps = synth_instance_maps(&f.scene.scene, &f.scene.cameras, &f.sv.depth_maps, &NoiseConfig::OFF, 4).unwrap();
    let recs = record_all_votes(&f.graph, &f.sv.visibility, &f.scene.cameras, &maps).unwrap();
    let mut graph = f.graph.clone();
    let stats = apply_labels(&mut graph, &recs, 3);
    assert!(stats.positive > 0);

    let gt = f.scene.scene.gt_instance.as_ref().unwrap();
    let majority = |i: usize| {
        let mut counts: HashMap<i32, usize> = HashMap::new();
        for &p in &f.sps[i].point_indices {
            *counts.entry(gt[p as usize]).or_default() += 1;
        }
        counts.into_iter().max_by_key(|e| (e.1, e.0)).unwrap().0
    };
    for e in &graph.edges {
        let same = majority(e.u as usize) == majority(e.v as usize);
        match e.label {
            Some(EdgeLabel::Positive) => assert!(same, "positive edge ({}, {}) spans instances", e.u, e.v),
            Some(EdgeLabel::Negative) => assert!(!same, "negative edge ({}, {}) inside an instance", e.u, e.v),
            None => {}
        }
    }
}

#[test]
fn background_view_abstains() {
    let f = fixture();
    let maps = synth_instance_maps(&f.scene.scene, &f.scene.cameras, &f.sv.depth_maps, &NoiseConfig::OFF, 4).unwrap();
    // Find an edge with a voting view, then blank one side in that view.
    let vis = &f.sv.visibility;
    for e in &f.graph.edges {
        let before = record_edge_votes(e.u, e.v, vis, &f.scene.cameras, &maps).unwrap();
        let Some(vi) = vis.co_visible_views(e.u as usize, e.v as usize).into_iter().find(|&vi| {
            let m = maps.get(f.scene.cameras[vi].view_id).unwrap();
            majority_instance(vis.mask(vi, e.u as usize).unwrap(), m).is_some()
                && majority_instance(vis.mask(vi, e.v as usize).unwrap(), m).is_some()
        }) else {
            continue;
        };
        let view_id = f.scene.cameras[vi].view_id;
        let mut edited = InstanceMapStore::new();
        for m in maps.iter() {
            let mut m = m.clone();
            if m.view_id == view_id {
                for &(r, c) in &vis.mask(vi, e.u as usize).unwrap().pixels {
                    m.labels[(r * m.width + c) as usize] = 0;
                }
            }
            edited.insert(m);
        }
        let after = record_edge_votes(e.u, e.v, vis, &f.scene.cameras, &edited).unwrap();
        assert_eq!(
            after.votes_same + after.votes_diff + 1,
            before.votes_same + before.votes_diff,
            "blanking one view must remove exactly its vote"
        );
        return;
    }
    panic!("no edge with a voting view");
}

#[test]
fn missing_instance_map_is_an_error() {
    let f = fixture();
    let maps = synth_instance_maps(&f.scene.scene, &f.scene.cameras, &f.sv.depth_maps, &NoiseConfig::OFF, 4).unwrap();
    let mut partial = InstanceMapStore::new();
    for m in maps.iter().skip(1) {
        partial.insert(m.clone());
    }
    let first = f.scene.cameras[0].view_id;
    let e = f
        .graph
        .edges
        .iter()
        .find(|e| f.sv.visibility.co_visible_views(e.u as usize, e.v as usize).contains(&0))
        .expect("an edge seen by the first view");
    let err = record_edge_votes(e.u, e.v, &f.sv.visibility, &f.scene.cameras, &partial).unwrap_err();
    assert!(err.to_string().contains(&format!("view {first}")));
}
