use std::collections::{BTreeMap, BTreeSet};

use supercut::projection::{render_all, NO_INDEX};
use supercut::synth::{generate, Shape, SynthConfig, SynthScene, MIN_GAP, MIN_OBJECT_PIXELS};
use supercut::{Error, FLOOR_ID, WALL_ID};

fn config(num_objects: usize, points_per_object: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        num_objects,
        points_per_object,
        points_on_walls_floor: 6000,
        camera_count: 24,
        image_width: 160,
        image_height: 120,
        seed,
        ..SynthConfig::default()
    }
}

fn object_ids(s: &SynthScene) -> BTreeSet<i32> {
    s.scene.gt_instance.as_ref().unwrap().iter().copied().filter(|&g| g != FLOOR_ID && g != WALL_ID).collect()
}

#[test]
fn single_object_gives_one_instance() {
    let s = generate(&config(1, 500, 3)).unwrap();
    assert_eq!(object_ids(&s).len(), 1);
    assert_eq!(s.objects.len(), 1);
    let gt = s.scene.gt_instance.as_ref().unwrap();
    assert!(gt.contains(&FLOOR_ID) && gt.contains(&WALL_ID));
}

#[test]
fn same_seed_is_bit_identical() {
    let a = generate(&config(5, 800, 11)).unwrap();
    let b = generate(&config(5, 800, 11)).unwrap();
    let bits = |s: &SynthScene| -> Vec<u32> {
        s.scene.points.iter().chain(&s.scene.normals).flatten().map(|x| x.to_bits()).collect()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.scene.gt_instance, b.scene.gt_instance);
    assert_eq!(a.cameras, b.cameras);
    assert_eq!(a.objects, b.objects);
    let c = generate(&config(5, 800, 12)).unwrap();
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn every_object_seen_in_enough_views() {
    let cfg = SynthConfig { num_objects: 8, camera_count: 24, seed: 1, ..SynthConfig::default() };
    let s = generate(&cfg).unwrap();
    let gt = s.scene.gt_instance.as_ref().unwrap();
    let mut views: BTreeMap<i32, usize> = BTreeMap::new();
    for d in render_all(&s.scene, &s.cameras) {
        let mut pixels: BTreeMap<i32, usize> = BTreeMap::new();
        for &i in d.index.iter().filter(|&&i| i != NO_INDEX) {
            *pixels.entry(gt[i as usize]).or_default() += 1;
        }
        for (g, n) in pixels {
            if n >= MIN_OBJECT_PIXELS {
                *views.entry(g).or_default() += 1;
            }
        }
    }
    for o in &s.objects {
        let n = views.get(&o.id).copied().unwrap_or(0);
        assert!(n >= (24 / 4).max(3), "object {} seen in {n} views", o.id);
    }
}

#[test]
fn objects_keep_their_distance() {
    for seed in 0..4 {
        let s = generate(&config(8, 400, seed)).unwrap();
        let gt = s.scene.gt_instance.as_ref().unwrap();
        let mut by_object: BTreeMap<i32, Vec<[f32; 3]>> = BTreeMap::new();
        for (p, &g) in s.scene.points.iter().zip(gt) {
            if g >= 0 {
                by_object.entry(g).or_default().push(*p);
            }
        }
        let groups: Vec<&Vec<[f32; 3]>> = by_object.values().collect();
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                for a in groups[i] {
                    for b in groups[j] {
                        let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() as f64;
                        assert!(d >= MIN_GAP - 1e-5, "seed {seed}: objects {i} and {j} only {d} apart");
                    }
                }
            }
        }
        for (i, a) in s.objects.iter().enumerate() {
            for b in &s.objects[i + 1..] {
                assert!(a.footprint_gap(b) >= MIN_GAP);
            }
        }
    }
}

#[test]
fn normals_are_unit_and_outward() {
    let cfg = config(6, 600, 8);
    let s = generate(&cfg).unwrap();
    let gt = s.scene.gt_instance.as_ref().unwrap();
    let room = cfg.room_size as f32 / 2.0;
    for ((p, n), &g) in s.scene.points.iter().zip(&s.scene.normals).zip(gt) {
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        assert!((len - 1.0).abs() < 1e-5, "normal length {len}");
        // Objects are convex, so outward means away from their center; the
        // room's surfaces face into the room.
        let center = match g {
            FLOOR_ID | WALL_ID => [room, room, 0.5],
            _ => {
                let o = s.objects.iter().find(|o| o.id == g).unwrap();
                [o.center[0] as f32, o.center[1] as f32, o.height as f32 / 2.0]
            }
        };
        let to_point: Vec<f32> = (0..3).map(|k| p[k] - center[k]).collect();
        let dot: f32 = (0..3).map(|k| to_point[k] * n[k]).sum();
        if g < 0 {
            assert!(dot < 0.0, "room normal {n:?} at {p:?} faces outward");
        } else {
            assert!(dot > 0.0, "object normal {n:?} at {p:?} faces inward");
        }
    }
}

#[test]
fn both_shapes_occur() {
    let shapes: BTreeSet<bool> = (0..4)
        .flat_map(|seed| generate(&config(6, 100, seed)).unwrap().objects)
        .map(|o| matches!(o.shape, Shape::Box { .. }))
        .collect();
    assert_eq!(shapes.len(), 2);
}

#[test]
fn crowded_room_is_an_error() {
    let err = generate(&SynthConfig { num_objects: 400, points_per_object: 10, ..config(1, 10, 0) }).unwrap_err();
    assert!(matches!(err, Error::Placement { objects: 400, .. }));
    assert!(err.to_string().contains("fewer objects"));
}

#[test]
fn invalid_config_is_rejected() {
    assert!(generate(&SynthConfig { num_objects: 0, ..config(1, 10, 0) }).is_err());
    assert!(generate(&SynthConfig { camera_count: 0, ..config(1, 10, 0) }).is_err());
}
