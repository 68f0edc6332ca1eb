mod common;

use std::collections::{BTreeSet, HashSet};

use proptest::prelude::*;
use supercut::graph_cut::{components, decide_with_scores, partition, segment, CutConfig};
use supercut::union_find::UnionFind;
use supercut::{GraphEdge, GraphNode, SceneGeometry, Superpoint, SuperpointGraph};

fn random_edges() -> impl Strategy<Value = (usize, Vec<(u32, u32)>, Vec<f64>)> {
    (2usize..60).prop_flat_map(|n| {
        prop::collection::btree_set((0..n as u32, 0..n as u32), 0..3 * n).prop_flat_map(move |pairs| {
            let edges: Vec<(u32, u32)> = pairs
                .into_iter()
                .filter(|(a, b)| a != b)
                .map(|(a, b)| (a.min(b), a.max(b)))
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let m = edges.len();
            (Just(n), Just(edges), prop::collection::vec(0.0f64..1.0, m))
        })
    })
}

/// The veto rule evaluated directly from an edge set.
fn brute_decisions(edges: &[(u32, u32)], scores: &[f64], tau: f64, rho: f64) -> Vec<bool> {
    let score = |a: u32, b: u32| {
        edges
            .iter()
            .position(|&e| e == (a.min(b), a.max(b)))
            .map(|i| scores[i])
    };
    let nodes: BTreeSet<u32> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    edges
        .iter()
        .zip(scores)
        .map(|(&(u, v), &s)| {
            if s < tau {
                return false;
            }
            let (mut hh, mut mixed) = (0, 0);
            for &w in &nodes {
                if let (Some(a), Some(b)) = (score(u, w), score(v, w)) {
                    match ((a >= tau) as u8) + ((b >= tau) as u8) {
                        2 => hh += 1,
                        1 => mixed += 1,
                        _ => {}
                    }
                }
            }
            !(hh + mixed > 0 && mixed as f64 / (hh + mixed) as f64 > rho)
        })
        .collect()
}

fn as_partition(labels: &[u32]) -> BTreeSet<Vec<u32>> {
    let mut groups: std::collections::BTreeMap<u32, Vec<u32>> = Default::default();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i as u32);
    }
    groups.into_values().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn decisions_match_rule((_n, edges, scores) in random_edges(), tau in 0.0f64..1.0, rho in 0.0f64..1.0) {
        let n = edges.iter().map(|e| e.1 as usize + 1).max().unwrap_or(0);
        prop_assert_eq!(decide_with_scores(n, &edges, &scores, tau, rho), brute_decisions(&edges, &scores, tau, rho));
    }

    #[test]
    fn components_match_bfs((n, edges, scores) in random_edges(), tau in 0.0f64..1.0) {
        let connected: Vec<bool> = scores.iter().map(|&s| s >= tau).collect();
        let (labels, k) = components(n, &edges, &connected);
        let kept: Vec<(u32, u32)> = edges.iter().zip(&connected).filter(|x| *x.1).map(|x| *x.0).collect();
        let bfs = common::bfs_components(n, &kept);
        prop_assert_eq!(k, bfs.len());
        prop_assert_eq!(as_partition(&labels), bfs.into_iter().collect::<BTreeSet<_>>());
    }

    #[test]
    fn raising_tau_never_merges((n, edges, scores) in random_edges(), t1 in 0.0f64..1.0, dt in 0.0f64..0.5) {
        let t2 = (t1 + dt).min(1.0);
        let labels = |t| components(n, &edges, &decide_with_scores(n, &edges, &scores, t, 1.0)).0;
        let (low, high) = (labels(t1), labels(t2));
        for a in 0..n {
            for b in 0..n {
                if high[a] == high[b] {
                    prop_assert_eq!(low[a], low[b]);
                }
            }
        }
    }

    #[test]
    fn edge_order_does_not_matter((n, edges, scores) in random_edges(), tau in 0.0f64..1.0, rho in 0.0f64..1.0, seed in any::<u64>()) {
        let mut order: Vec<usize> = (0..edges.len()).collect();
        let mut state = seed | 1;
        for i in (1..order.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            order.swap(i, (state >> 33) as usize % (i + 1));
        }
        let e2: Vec<(u32, u32)> = order.iter().map(|&i| edges[i]).collect();
        let s2: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
        let c1 = decide_with_scores(n, &edges, &scores, tau, rho);
        let c2 = decide_with_scores(n, &e2, &s2, tau, rho);
        for (k, &i) in order.iter().enumerate() {
            prop_assert_eq!(c2[k], c1[i]);
        }
        let p1 = as_partition(&components(n, &edges, &c1).0);
        let p2 = as_partition(&components(n, &e2, &c2).0);
        prop_assert_eq!(p1, p2);
    }

    #[test]
    fn union_find_partition_commutes(pairs in prop::collection::vec((0usize..30, 0usize..30), 0..60)) {
        let mut a = UnionFind::new(30);
        let mut b = UnionFind::new(30);
        for &(x, y) in &pairs {
            a.union(x, y);
        }
        for &(x, y) in pairs.iter().rev() {
            b.union(y, x);
        }
        prop_assert_eq!(as_partition(&a.labels().0), as_partition(&b.labels().0));
        for x in 0..30 {
            let r = a.find(x);
            prop_assert_eq!(a.find(r), r);
        }
    }
}

#[test]
fn veto_examples() {
    // Triangle 0-1-2 where edge (0, 1) is scored 0.9.
    let edges = [(0, 1), (0, 2), (1, 2)];
    assert_eq!(decide_with_scores(3, &edges[..1], &[0.9], 0.5, 0.25), vec![true]);
    assert!(!decide_with_scores(3, &edges, &[0.9, 0.9, 0.1], 0.5, 0.25)[0]);
    assert!(!decide_with_scores(3, &edges, &[0.3, 0.9, 0.9], 0.5, 0.25)[0]);
    // Low-low paths are ignored.
    assert!(decide_with_scores(3, &edges, &[0.9, 0.1, 0.1], 0.5, 0.25)[0]);
}

fn chain_fixture(n: u32) -> (SceneGeometry, Vec<Superpoint>, SuperpointGraph) {
    let pts: Vec<[f32; 3]> = (0..2 * n).map(|i| [i as f32, 0.0, 0.0]).collect();
    let scene = SceneGeometry::new(pts, vec![[0.0, 0.0, 1.0]; 2 * n as usize], None, None, None).unwrap();
    let sps: Vec<Superpoint> = (0..n).map(|i| Superpoint::new(i + 100, vec![2 * i, 2 * i + 1], &scene)).collect();
    let graph = SuperpointGraph {
        nodes: sps.iter().map(|s| GraphNode { sp_id: s.sp_id, feature: None }).collect(),
        edges: (0..n - 1)
            .map(|i| {
                let mut e = GraphEdge::new(i, i + 1);
                e.w_sam = Some(0.8);
                e.affinity = Some(if i == 2 { 0.2 } else { 0.7 });
                e
            })
            .collect(),
    };
    (scene, sps, graph)
}

#[test]
fn segment_uses_selected_score() {
    let (scene, sps, graph) = chain_fixture(6);
    let seg = segment(&graph, &sps, scene.len(), &CutConfig::default()).unwrap();
    assert_eq!(seg.instances.len(), 2);
    let ids: HashSet<i64> = seg.assignment.iter().copied().collect();
    assert_eq!(ids.len(), 2);
    assert!((seg.instances[0].confidence - 0.7).abs() < 1e-6);

    let raw = segment(&graph, &sps, scene.len(), &CutConfig { use_affinity: false, ..CutConfig::default() }).unwrap();
    assert_eq!(raw.instances.len(), 1);
    assert!(raw.assignment.iter().all(|&a| a == raw.assignment[0]));
}

#[test]
fn no_connections_gives_one_instance_per_superpoint() {
    let (scene, sps, graph) = chain_fixture(5);
    let edges: Vec<(u32, u32)> = graph.edges.iter().map(|e| (e.u, e.v)).collect();
    let seg = partition(&sps, scene.len(), &edges, &[0.1; 4], &[false; 4]);
    assert_eq!(seg.instances.len(), 5);
    assert!(seg.instances.iter().all(|i| i.confidence == 1.0));
    for sp in &sps {
        let a = seg.assignment[sp.point_indices[0] as usize];
        assert!(sp.point_indices.iter().all(|&p| seg.assignment[p as usize] == a));
    }
}

#[test]
fn missing_score_is_an_error() {
    let (scene, sps, mut graph) = chain_fixture(4);
    graph.edges[1].affinity = None;
    assert!(segment(&graph, &sps, scene.len(), &CutConfig::default()).is_err());
}
