//! End-to-end runs driven by one TOML file.
//!
//! Seven fixed stages run in order, each reading and writing files in the
//! output directory. `manifest.json` records the config hash, the seed and
//! per-stage status and wall time. With `resume`, a stage is skipped when
//! its outputs load cleanly, the previous manifest recorded it as done
//! under the same config hash, and nothing upstream ran in this session.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::evaluate;
use crate::gnn::{infer_graph, load_params, save_params, train, TrainConfig};
use crate::graph_build::{annotate_with_views, GraphBuildConfig, SceneViews};
use crate::graph_cut::{segment, CutConfig};
use crate::io::imap::InstanceMapStore;
use crate::io::json::{load_cameras, load_segmentation, load_superpoints, read_json, save_segmentation, save_superpoints, write_json};
use crate::io::ply::load_scene;
use crate::io::spg::{load_graph, save_graph};
use crate::mask_oracle::{FeatureStore, FileOracle};
use crate::model::{CameraView, SceneGeometry, Superpoint, FLOOR_ID, WALL_ID};
use crate::presegment::{presegment, PresegmentConfig};
use crate::pseudo_label::{apply_labels, record_all_votes, PseudoLabelConfig};

pub const MANIFEST: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Presegment,
    BuildGraph,
    PseudoLabel,
    Train,
    Infer,
    Segment,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Presegment,
        Stage::BuildGraph,
        Stage::PseudoLabel,
        Stage::Train,
        Stage::Infer,
        Stage::Segment,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Presegment => "presegment",
            Stage::BuildGraph => "build_graph",
            Stage::PseudoLabel => "pseudo_label",
            Stage::Train => "train",
            Stage::Infer => "infer",
            Stage::Segment => "segment",
            Stage::Eval => "eval",
        }
    }

    /// Files the stage writes, relative to the output directory.
    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Presegment => &[SUPERPOINTS],
            Stage::BuildGraph => &[GRAPH],
            Stage::PseudoLabel => &[GRAPH_LABELED],
            Stage::Train => &[MODEL],
            Stage::Infer => &[GRAPH_REFINED],
            Stage::Segment => &[SEGMENTATION],
            Stage::Eval => &[REPORT],
        }
    }
}

pub const SUPERPOINTS: &str = "sp.json";
pub const GRAPH: &str = "graph.spg";
pub const GRAPH_LABELED: &str = "graph_labeled.spg";
pub const MODEL: &str = "model.gnn";
pub const GRAPH_REFINED: &str = "graph_refined.spg";
pub const SEGMENTATION: &str = "seg.json";
pub const REPORT: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    pub scene: PathBuf,
    pub cameras: PathBuf,
    /// Directory holding the `.oracle` store.
    pub oracle: PathBuf,
    /// Feature maps; defaults to the oracle directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    /// Instance maps; defaults to the oracle directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_maps: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Use this model instead of the one the train stage writes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrained_model: Option<PathBuf>,
}

impl Paths {
    pub fn features_dir(&self) -> &Path {
        self.features.as_deref().unwrap_or(&self.oracle)
    }

    pub fn instance_maps_dir(&self) -> &Path {
        self.instance_maps.as_deref().unwrap_or(&self.oracle)
    }

    pub fn out(&self, file: &str) -> PathBuf {
        self.out_dir.join(file)
    }

    pub fn model(&self) -> PathBuf {
        self.pretrained_model.clone().unwrap_or_else(|| self.out(MODEL))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Ground-truth ids left out of scoring: `floor`, `wall` or integers.
    pub exclude: Vec<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            exclude: vec!["floor".into(), "wall".into()],
        }
    }
}

/// Parses exclusion names such as `floor`, `wall` or `-4`.
pub fn parse_exclusions<S: AsRef<str>>(names: &[S]) -> Result<Vec<i32>> {
    let mut out = Vec::new();
    for name in names {
        let name = name.as_ref().trim();
        let id = match name.to_ascii_lowercase().as_str() {
            "floor" => FLOOR_ID,
            "wall" => WALL_ID,
            other => other
                .parse()
                .map_err(|_| Error::Config(format!("unknown exclusion {name:?}")))?,
        };
        if !out.contains(&id) {
            out.push(id);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "all_stages")]
    pub stages: Vec<Stage>,
    pub paths: Paths,
    #[serde(default)]
    pub presegment: PresegmentConfig,
    #[serde(default)]
    pub graph: GraphBuildConfig,
    #[serde(default)]
    pub pseudo_label: PseudoLabelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub cut: CutConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn all_stages() -> Vec<Stage> {
    Stage::ALL.to_vec()
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative paths are taken relative to the config file.
        if let Some(base) = path.parent() {
            cfg.paths.rebase(base);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// The seed every stage sees.
    pub fn apply_seed(&mut self) {
        self.graph.seed = self.seed;
        self.train.seed = self.seed;
    }

    /// sha256 over the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        let json = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&json)))
    }

    /// Module parameters, stage order, and external inputs needed by the
    /// listed stages. Runs before anything is written.
    pub fn validate(&self) -> Result<()> {
        self.presegment.validate()?;
        self.graph.validate()?;
        self.pseudo_label.validate()?;
        self.train.validate()?;
        self.cut.validate()?;
        parse_exclusions(&self.eval.exclude)?;
        if self.stages.is_empty() {
            return Err(Error::Config("no stages listed".into()));
        }
        if self.stages.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "stages must be listed once each in pipeline order ({})",
                Stage::ALL.map(Stage::name).join(", ")
            )));
        }
        let p = &self.paths;
        let mut required: Vec<(&str, &Path)> = vec![("scene", &p.scene)];
        let runs = |s| self.stages.contains(&s);
        if runs(Stage::BuildGraph) || runs(Stage::PseudoLabel) {
            required.push(("cameras", &p.cameras));
        }
        if runs(Stage::BuildGraph) {
            required.push(("oracle", &p.oracle));
            required.push(("features", p.features_dir()));
        }
        if runs(Stage::PseudoLabel) {
            required.push(("instance_maps", p.instance_maps_dir()));
        }
        if let Some(m) = &p.pretrained_model {
            required.push(("pretrained_model", m));
        }
        for (what, path) in required {
            if !path.exists() {
                return Err(Error::Config(format!("{what} path {} does not exist", path.display())));
            }
        }
        Ok(())
    }
}

impl Paths {
    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.scene);
        fix(&mut self.cameras);
        fix(&mut self.oracle);
        fix(&mut self.out_dir);
        for p in [&mut self.features, &mut self.instance_maps, &mut self.pretrained_model]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Done,
    Skipped,
    Failed,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path)
    }

    pub fn record(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage)
    }

    fn completed(&self, stage: Stage) -> bool {
        self.record(stage)
            .is_some_and(|r| matches!(r.status, StageStatus::Done | StageStatus::Skipped))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub resume: bool,
    /// Worker threads; hardware parallelism when `None`.
    pub threads: Option<usize>,
}

/// Loaded inputs shared by several stages.
#[derive(Default)]
struct Cache {
    scene: Option<SceneGeometry>,
    cameras: Option<Vec<CameraView>>,
    superpoints: Option<Vec<Superpoint>>,
}

impl Cache {
    fn scene(&mut self, p: &Paths) -> Result<&SceneGeometry> {
        if self.scene.is_none() {
            self.scene = Some(load_scene(&p.scene)?);
        }
        Ok(self.scene.as_ref().unwrap())
    }

    fn cameras(&mut self, p: &Paths) -> Result<&[CameraView]> {
        if self.cameras.is_none() {
            self.cameras = Some(load_cameras(&p.cameras)?);
        }
        Ok(self.cameras.as_ref().unwrap())
    }

    fn superpoints(&mut self, p: &Paths) -> Result<&[Superpoint]> {
        if self.superpoints.is_none() {
            let scene = self.scene(p)?;
            let sps = load_superpoints(p.out(SUPERPOINTS), scene)?;
            self.superpoints = Some(sps);
        }
        Ok(self.superpoints.as_ref().unwrap())
    }
}

/// Whether the stage's outputs exist and parse.
fn outputs_valid(stage: Stage, cfg: &PipelineConfig, cache: &mut Cache) -> bool {
    let p = &cfg.paths;
    let mut check = || -> Result<()> {
        match stage {
            Stage::Presegment => {
                cache.superpoints = None;
                cache.superpoints(p)?;
            }
            Stage::BuildGraph => load_graph(p.out(GRAPH))?.validate()?,
            Stage::PseudoLabel => load_graph(p.out(GRAPH_LABELED))?.validate()?,
            Stage::Train => load_params(p.out(MODEL))?.validate()?,
            Stage::Infer => load_graph(p.out(GRAPH_REFINED))?.validate()?,
            Stage::Segment => {
                load_segmentation(p.out(SEGMENTATION))?;
            }
            Stage::Eval => {
                read_json::<crate::evaluation::ApReport>(p.out(REPORT))?;
            }
        }
        Ok(())
    };
    check().is_ok()
}

fn run_stage(stage: Stage, cfg: &PipelineConfig, cache: &mut Cache) -> Result<()> {
    let p = &cfg.paths;
    match stage {
        Stage::Presegment => {
            let sps = presegment(cache.scene(p)?, &cfg.presegment)?;
            save_superpoints(&sps, p.out(SUPERPOINTS))?;
            cache.superpoints = Some(sps);
        }
        Stage::BuildGraph => {
            let oracle = FileOracle::open(&p.oracle)?;
            let features = FeatureStore::load_dir(p.features_dir())?;
            cache.superpoints(p)?;
            cache.cameras(p)?;
            let (scene, cams, sps) = (
                cache.scene.as_ref().unwrap(),
                cache.cameras.as_deref().unwrap(),
                cache.superpoints.as_deref().unwrap(),
            );
            let sv = SceneViews::build(scene, sps, cams, &cfg.graph.projection);
            let (graph, report) = annotate_with_views(scene, sps, cams, &sv, &oracle, &features, &cfg.graph)?;
            log::info!(
                "graph: {} nodes, {} edges, {} invisible nodes, {} oracle queries",
                report.nodes,
                report.edges,
                report.invisible_nodes.len(),
                report.oracle_queries
            );
            save_graph(&graph, p.out(GRAPH))?;
        }
        Stage::PseudoLabel => {
            let maps = InstanceMapStore::load_dir(p.instance_maps_dir())?;
            let mut graph = load_graph(p.out(GRAPH))?;
            cache.superpoints(p)?;
            cache.cameras(p)?;
            let (scene, cams, sps) = (
                cache.scene.as_ref().unwrap(),
                cache.cameras.as_deref().unwrap(),
                cache.superpoints.as_deref().unwrap(),
            );
            let sv = SceneViews::build(scene, sps, cams, &cfg.graph.projection);
            let records = record_all_votes(&graph, &sv.visibility, cams, &maps)?;
            let stats = apply_labels(&mut graph, &records, cfg.pseudo_label.n_min);
            log::info!(
                "pseudo-labels: {} positive, {} negative, {} unlabeled",
                stats.positive,
                stats.negative,
                stats.unlabeled
            );
            save_graph(&graph, p.out(GRAPH_LABELED))?;
        }
        Stage::Train => {
            if p.pretrained_model.is_some() {
                log::info!("pretrained model given; training skipped");
                return Ok(());
            }
            let graph = load_graph(p.out(GRAPH_LABELED))?;
            let out = train::<f32>(&graph, &cfg.train)?;
            if let (Some(a), Some(b)) = (out.history.first(), out.history.last()) {
                log::info!("loss {} -> {}", a.total, b.total);
            }
            save_params(&out.params, p.out(MODEL))?;
        }
        Stage::Infer => {
            let params = load_params(p.model())?;
            let mut graph = load_graph(p.out(GRAPH_LABELED))?;
            infer_graph(&mut graph, &params, cfg.train.use_edge_weights)?;
            save_graph(&graph, p.out(GRAPH_REFINED))?;
        }
        Stage::Segment => {
            let graph = load_graph(p.out(if cfg.cut.use_affinity { GRAPH_REFINED } else { GRAPH }))?;
            let n = cache.scene(p)?.len();
            let sps = cache.superpoints(p)?;
            let seg = segment(&graph, sps, n, &cfg.cut)?;
            log::info!("{} instances", seg.instances.len());
            save_segmentation(&seg, p.out(SEGMENTATION))?;
        }
        Stage::Eval => {
            let seg = load_segmentation(p.out(SEGMENTATION))?;
            let scene = cache.scene(p)?;
            let gt = scene
                .gt_instance
                .as_ref()
                .ok_or_else(|| Error::invalid("scene", "evaluation needs ground-truth instances"))?;
            let report = evaluate(&seg, gt, &parse_exclusions(&cfg.eval.exclude)?)?;
            log::info!("mAP {:.4}, AP50 {:.4}, AP25 {:.4}", report.map, report.ap50, report.ap25);
            write_json(&report, p.out(REPORT))?;
        }
    }
    Ok(())
}

/// Runs the configured stages. The manifest is written after every stage,
/// so a failure leaves it marking the failed stage; the error is returned.
pub fn run_pipeline(config: &PipelineConfig, options: RunOptions) -> Result<Manifest> {
    let mut cfg = config.clone();
    cfg.apply_seed();
    cfg.validate()?;
    let threads = options.threads.unwrap_or_else(rayon::current_num_threads);
    if threads == 0 {
        return Err(Error::Config("threads must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| run_in_pool(&cfg, options, threads))
}

fn run_in_pool(cfg: &PipelineConfig, options: RunOptions, threads: usize) -> Result<Manifest> {
    let hash = cfg.hash()?;
    let out_dir = &cfg.paths.out_dir;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let manifest_path = cfg.paths.out(MANIFEST);
    let previous = if options.resume {
        Manifest::load(&manifest_path).ok().filter(|m| m.config_hash == hash)
    } else {
        None
    };
    let mut manifest = Manifest {
        version: MANIFEST_VERSION,
        config_hash: hash,
        seed: cfg.seed,
        threads,
        stages: cfg
            .stages
            .iter()
            .map(|&stage| StageRecord {
                stage,
                status: StageStatus::NotRun,
                wall_time_s: 0.0,
                outputs: stage.outputs().iter().map(|s| s.to_string()).collect(),
                error: None,
            })
            .collect(),
    };
    let mut cache = Cache::default();
    let mut dirty = false;
    for (k, &stage) in cfg.stages.iter().enumerate() {
        let t = Instant::now();
        let reusable = !dirty
            && previous.as_ref().is_some_and(|m| m.completed(stage))
            && outputs_valid(stage, cfg, &mut cache);
        if reusable {
            log::info!("{}: outputs valid, skipped", stage.name());
            manifest.stages[k].status = StageStatus::Skipped;
            continue;
        }
        dirty = true;
        log::info!("{}: running", stage.name());
        let result = run_stage(stage, cfg, &mut cache);
        let rec = &mut manifest.stages[k];
        rec.wall_time_s = t.elapsed().as_secs_f64();
        match result {
            Ok(()) => {
                rec.status = StageStatus::Done;
                write_json(&manifest, &manifest_path)?;
            }
            Err(e) => {
                rec.status = StageStatus::Failed;
                rec.error = Some(e.to_string());
                write_json(&manifest, &manifest_path)?;
                return Err(e);
            }
        }
    }
    write_json(&manifest, &manifest_path)?;
    Ok(manifest)
}
