mod common;

use std::path::Path;

use supercut::pipeline::{
    run_pipeline, Manifest, PipelineConfig, RunOptions, Stage, StageStatus, GRAPH, MANIFEST, MODEL, REPORT,
    SEGMENTATION,
};
use supercut::Error;

fn quick(cfg: &mut PipelineConfig) {
    cfg.train.epochs = 30;
    cfg.pseudo_label.n_min = 3;
}

fn statuses(m: &Manifest) -> Vec<StageStatus> {
    m.stages.iter().map(|r| r.status).collect()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn full_run_then_resume() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::synth_setup(dir.path(), &common::small_room(21));
    quick(&mut cfg);
    let opts = RunOptions { resume: true, threads: Some(1) };

    let m = run_pipeline(&cfg, opts).unwrap();
    assert_eq!(statuses(&m), vec![StageStatus::Done; 7]);
    for stage in Stage::ALL {
        for f in stage.outputs() {
            assert!(cfg.paths.out(f).exists(), "{f} missing");
        }
    }
    let on_disk = Manifest::load(cfg.paths.out(MANIFEST)).unwrap();
    assert_eq!(statuses(&on_disk), statuses(&m));
    assert_eq!(on_disk.config_hash, cfg_hash(&cfg));

    let report: supercut::evaluation::ApReport = supercut::io::json::read_json(cfg.paths.out(REPORT)).unwrap();
    assert_eq!(report.num_gt, 3);
    assert!(report.ap25 > 0.5, "noiseless room scored AP25 {}", report.ap25);

    // Nothing changed: every stage is reused.
    let m = run_pipeline(&cfg, opts).unwrap();
    assert_eq!(statuses(&m), vec![StageStatus::Skipped; 7]);

    // Losing the segmentation reruns only the stages from there on.
    let seg = read(&cfg.paths.out(SEGMENTATION));
    std::fs::remove_file(cfg.paths.out(SEGMENTATION)).unwrap();
    let m = run_pipeline(&cfg, opts).unwrap();
    let mut want = vec![StageStatus::Skipped; 5];
    want.extend([StageStatus::Done, StageStatus::Done]);
    assert_eq!(statuses(&m), want);
    assert_eq!(read(&cfg.paths.out(SEGMENTATION)), seg);

    // A corrupt intermediate is not trusted.
    std::fs::write(cfg.paths.out(GRAPH), b"SPG1 garbage").unwrap();
    let m = run_pipeline(&cfg, opts).unwrap();
    assert_eq!(m.stages[0].status, StageStatus::Skipped);
    assert!(m.stages[1..].iter().all(|r| r.status == StageStatus::Done));

    // A different config invalidates the previous run.
    cfg.cut.veto_ratio = 0.3;
    let m = run_pipeline(&cfg, opts).unwrap();
    assert_eq!(statuses(&m), vec![StageStatus::Done; 7]);
}

fn cfg_hash(cfg: &PipelineConfig) -> String {
    let mut c = cfg.clone();
    c.apply_seed();
    c.hash().unwrap()
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::synth_setup(dir.path(), &common::small_room(22));
    quick(&mut cfg);
    let mut other = cfg.clone();
    other.paths.out_dir = dir.path().join("again");
    run_pipeline(&cfg, RunOptions { resume: false, threads: Some(1) }).unwrap();
    run_pipeline(&other, RunOptions { resume: false, threads: Some(2) }).unwrap();
    for f in [GRAPH, MODEL, SEGMENTATION, REPORT] {
        assert_eq!(read(&cfg.paths.out(f)), read(&other.paths.out(f)), "{f} differs");
    }
}

#[test]
fn invalid_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::synth_setup(dir.path(), &common::small_room(23));
    cfg.paths.oracle = dir.path().join("no-such-store");
    let err = run_pipeline(&cfg, RunOptions::default()).unwrap_err();
    assert!(matches!(&err, Error::Config(m) if m.contains("oracle")), "{err}");
    assert!(!cfg.paths.out_dir.exists());

    let mut cfg = common::synth_setup(dir.path(), &common::small_room(23));
    cfg.pseudo_label.n_min = 0;
    assert!(run_pipeline(&cfg, RunOptions::default()).is_err());
    cfg.pseudo_label.n_min = 10;
    cfg.stages = vec![Stage::Train, Stage::BuildGraph];
    assert!(run_pipeline(&cfg, RunOptions::default()).is_err());
    assert!(!cfg.paths.out_dir.exists());
}

#[test]
fn failed_stage_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::synth_setup(dir.path(), &common::small_room(24));
    quick(&mut cfg);
    std::fs::write(dir.path().join("store").join("masks.bin"), b"").unwrap();
    assert!(run_pipeline(&cfg, RunOptions::default()).is_err());
    let m = Manifest::load(cfg.paths.out(MANIFEST)).unwrap();
    assert_eq!(m.stages[0].status, StageStatus::Done);
    assert_eq!(m.stages[1].status, StageStatus::Failed);
    assert!(m.stages[1].error.is_some());
    assert!(m.stages[2..].iter().all(|r| r.status == StageStatus::NotRun));
}

#[test]
fn config_files_resolve_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[paths]\nscene = \"scene.ply\"\ncameras = \"cams.json\"\noracle = \"store\"\nout_dir = \"run\"\n";
    std::fs::write(dir.path().join("run.toml"), text).unwrap();
    let cfg = PipelineConfig::load(dir.path().join("run.toml")).unwrap();
    assert_eq!(cfg.paths.scene, dir.path().join("scene.ply"));
    assert_eq!(cfg.paths.features_dir(), dir.path().join("store"));
    assert!(PipelineConfig::from_toml("[paths]\nscene = 3\n").is_err());
}
