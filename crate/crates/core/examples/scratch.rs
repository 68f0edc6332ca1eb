use std::time::Instant;
use supercut::evaluation::{evaluate, superpoint_granular_gt, DEFAULT_EXCLUSIONS};
use supercut::graph_build::{annotate_with_views, GraphBuildConfig, SceneViews};
use supercut::graph_cut::{segment, CutConfig};
use supercut::gnn::{infer_graph, train_pooled, TrainConfig};
use supercut::mask_oracle::{NoiseConfig, SyntheticOracle};
use supercut::presegment::{presegment, PresegmentConfig};
use supercut::pseudo_label::{apply_labels, record_all_votes};
use supercut::synth::*;
use supercut::*;

struct Run { graph: SuperpointGraph, sps: Vec<Superpoint>, gt: Vec<i32>, n: usize }

fn make(seed: u64, noise: f64) -> Run {
    let t = Instant::now();
    let w: u32 = std::env::var("W").map(|s| s.parse().unwrap()).unwrap_or(320);
    let mv: usize = std::env::var("MV").map(|s| s.parse().unwrap()).unwrap_or(150);
    let cfg = SynthConfig { seed, noise: NoiseConfig::new(noise, noise).unwrap(), image_width: w, image_height: w * 3 / 4, camera_count: std::env::var("CAMS").map(|s| s.parse().unwrap()).unwrap_or(36), ..Default::default() };
    let s = generate(&cfg).unwrap();
    let t1 = t.elapsed();
    let sps = presegment(&s.scene, &PresegmentConfig { seg_min_verts: mv, ..Default::default() }).unwrap();
    let t2 = t.elapsed();
    let bc = GraphBuildConfig { seed, ..Default::default() };
    let sv = SceneViews::build(&s.scene, &sps, &s.cameras, &bc.projection);
    let oracle = SyntheticOracle::with_depth_maps(&s.scene, &s.cameras, &sv.depth_maps, cfg.noise, seed).unwrap();
    let feats = synth_feature_maps(&s.scene, &s.cameras, &sv.depth_maps, &FeatureSynthesis::default(), 8, seed).unwrap();
    let (mut g, rep) = annotate_with_views(&s.scene, &sps, &s.cameras, &sv, &oracle, &feats, &bc).unwrap();
    let t3 = t.elapsed();
    if std::env::var("DIAG3").is_ok() {
        for e in &g.edges {
            let (a, b) = (e.u as usize, e.v as usize);
            if sv.visibility.co_visible_views(a, b).is_empty() {
                let px = |s: usize| sv.visibility.visible_views(s).iter().map(|&v| (v, sv.visibility.mask(v, s).unwrap().pixel_count)).collect::<Vec<_>>();
                eprintln!("nov {a}-{b}: sizes {} {} cent {:?} {:?}\n  a {:?}\n  b {:?}", sps[a].len(), sps[b].len(), sps[a].centroid, sps[b].centroid, px(a), px(b));
            }
        }
    }
    let maps = synth_instance_maps(&s.scene, &s.cameras, &sv.depth_maps, &cfg.noise, seed).unwrap();
    let rec = record_all_votes(&g, &sv.visibility, &s.cameras, &maps).unwrap();
    let st = apply_labels(&mut g, &rec, 10);
    eprintln!("seed {seed}: pts {} sps {} edges {} invisible {} nov {} queries {} labels {:?} times {:?} {:?} {:?} {:?}",
        s.scene.len(), sps.len(), g.edges.len(), rep.invisible_nodes.len(), rep.edges_without_views, rep.oracle_queries, st, t1, t2, t3, t.elapsed());
    let gt = s.scene.gt_instance.clone().unwrap();
    if std::env::var("DIAG").is_ok() {
        let mut per: std::collections::BTreeMap<i32, Vec<(usize, bool)>> = Default::default();
        for sp in sps.iter() {
            let g = gt[sp.point_indices[0] as usize];
            per.entry(g).or_default().push((sp.len(), rep.invisible_nodes.contains(&sp.sp_id)));
        }
        for (g, v) in &per { eprintln!("gt {g}: {:?}", v); }
        for o in &s.objects { eprintln!("{:?}", o); }
    }
    Run { graph: g, sps, gt, n: s.scene.len() }
}

fn score(r: &Run, aff: bool) -> f64 {
    let seg = segment(&r.graph, &r.sps, r.n, &CutConfig { use_affinity: aff, ..Default::default() }).unwrap();
    let gt = superpoint_granular_gt(&r.gt, &r.sps);
    if std::env::var("DIAG2").is_ok() {
        let mut comp: std::collections::BTreeMap<i64, std::collections::BTreeMap<i32, usize>> = Default::default();
        for (p, &a) in seg.assignment.iter().enumerate() { *comp.entry(a).or_default().entry(gt[p]).or_default() += 1; }
        let dec = supercut::graph_cut::decide_connections(&r.graph, &CutConfig { use_affinity: aff, ..Default::default() }).unwrap();
        let spg: Vec<i32> = r.sps.iter().map(|sp| gt[sp.point_indices[0] as usize]).collect();
        for (e, d) in r.graph.edges.iter().zip(&dec) {
            let same = spg[e.u as usize] == spg[e.v as usize];
            if same != *d && spg[e.u as usize] >= 0 { eprintln!("edge {}-{} gt {} {} w {:?} s {:?} connected {}", e.u, e.v, spg[e.u as usize], spg[e.v as usize], e.w_sam, e.affinity, d); }
        }
        let mut by_gt: std::collections::BTreeMap<i32, Vec<(i64, usize)>> = Default::default();
        for (a, m) in &comp { for (g, c) in m { by_gt.entry(*g).or_default().push((*a, *c)); } }
        for (g, v) in &by_gt { if v.len() > 1 && *g >= 0 { eprintln!("gt {g} split: {:?}", v); } }
        for (a, m) in &comp { if m.len() > 1 || m.values().sum::<usize>() < 200 { eprintln!("pred {a} conf {:.2}: {:?}", seg.instances[*a as usize].confidence, m); } }
    }
    evaluate(&seg, &gt, &DEFAULT_EXCLUSIONS).unwrap().map
}

fn main() {
    let noise: f64 = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(0.0);
    let n: u64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(2);
    let s0: u64 = std::env::args().nth(3).map(|s| s.parse().unwrap()).unwrap_or(0);
    let runs: Vec<Run> = (s0..s0 + n).map(|s| make(s, noise)).collect();
    for r in &runs { eprintln!("raw mAP {:.3}", score(r, false)); }
    if n < 2 { return; }
    let half = (n / 2) as usize;
    for use_w in [true, false] {
        let t = Instant::now();
        let train: Vec<&SuperpointGraph> = runs[..half].iter().map(|r| &r.graph).collect();
        let out = train_pooled::<f32>(&train, &TrainConfig { use_edge_weights: use_w, ..Default::default() }).unwrap();
        eprintln!("train {:?} loss {:?} -> {:?}", t.elapsed(), out.history[0].total, out.history.last().unwrap().total);
        let mut tot = 0.0; let mut raw = 0.0;
        for r in &runs[half..] {
            let mut g = r.graph.clone();
            infer_graph(&mut g, &out.params, use_w).unwrap();
            let rr = Run { graph: g, sps: r.sps.clone(), gt: r.gt.clone(), n: r.n };
            tot += score(&rr, true); raw += score(r, false);
            let gtg = superpoint_granular_gt(&r.gt, &r.sps);
            let spg: Vec<i32> = r.sps.iter().map(|sp| gtg[sp.point_indices[0] as usize]).collect();
            let mut cat: std::collections::BTreeMap<&str, (usize, usize, f64)> = Default::default();
            for e in &rr.graph.edges {
                let (a, b) = (spg[e.u as usize], spg[e.v as usize]);
                let k = if a == b && a >= 0 { "same-obj" } else if a == b { "same-bg" } else if a >= 0 && b >= 0 { "obj-obj" } else if a < 0 && b < 0 { "bg-bg" } else { "obj-bg" };
                let s = e.affinity.unwrap() as f64;
                let ok = (s >= 0.5) == (a == b);
                let c = cat.entry(k).or_default(); c.0 += 1; c.1 += ok as usize; c.2 += s;
            }
            eprintln!("  edge acc {:?}", cat.iter().map(|(k, v)| format!("{k}: {}/{} mean {:.2}", v.1, v.0, v.2 / v.0 as f64)).collect::<Vec<_>>());
        }
        eprintln!("use_w {use_w}: raw {:.3} gnn {:.3}", raw / (n as f64 - half as f64), tot / (n as f64 - half as f64));
    }
}
