use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use supercut::evaluation::evaluate;
use supercut::gnn::{infer_graph, load_params, save_params, train_pooled, TrainConfig};
use supercut::graph_build::{annotate_graph, collect_prompts, GraphBuildConfig};
use supercut::graph_cut::{segment, CutConfig};
use supercut::io::imap::InstanceMapStore;
use supercut::io::json::{load_cameras, load_segmentation, load_superpoints, read_json, save_cameras, save_segmentation, save_superpoints, write_json};
use supercut::io::ply::{load_scene, save_scene};
use supercut::io::prompts::{load_prompts, save_prompts};
use supercut::io::spg::{load_graph, save_graph};
use supercut::io::store::validate_store;
use supercut::mask_oracle::{FeatureStore, FileOracle, NoiseConfig};
use supercut::pipeline::{parse_exclusions, run_pipeline, Paths, PipelineConfig, RunOptions};
use supercut::presegment::{presegment, PresegmentConfig};
use supercut::projection::VisibilityIndex;
use supercut::pseudo_label::{apply_labels, record_all_votes};
use supercut::synth::{export_store, generate, FeatureSynthesis, SynthConfig, PRESEGMENT};
use supercut::{validate_superpoints, Superpoint};

#[derive(Parser)]
#[command(name = "supercut", version, about = "Superpoint-graph 3D instance segmentation")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Over-segment a scene into superpoints.
    Presegment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = PresegmentConfig::SCANNET.k_thresh)]
        k_thresh: f64,
        #[arg(long, default_value_t = PresegmentConfig::SCANNET.seg_min_verts)]
        min_verts: usize,
        #[arg(long, default_value_t = PresegmentConfig::SCANNET.knn)]
        knn: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the superpoint graph with oracle edge weights and node features.
    BuildGraph {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        oracle: PathBuf,
        /// Feature map directory (default: the oracle directory).
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_views: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label edges from per-view instance maps.
    PseudoLabel {
        #[arg(long)]
        graph: PathBuf,
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        imaps: PathBuf,
        #[arg(long, default_value_t = 10)]
        n_min: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the affinity network on one or more labeled graphs.
    Train {
        #[arg(long, required = true, num_args = 1..)]
        graph: Vec<PathBuf>,
        #[arg(long, default_value_t = TrainConfig::default().epochs)]
        epochs: usize,
        #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Hide oracle weights from the network and drop the consistency term.
        #[arg(long)]
        no_edge_weights: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write network affinities into a graph.
    Infer {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        no_edge_weights: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cut the graph into instances.
    Segment {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        superpoints: PathBuf,
        #[arg(long, default_value_t = CutConfig::default().affinity_threshold)]
        tau: f64,
        #[arg(long, default_value_t = CutConfig::default().veto_ratio)]
        rho: f64,
        /// Cut on raw oracle weights instead of affinities.
        #[arg(long)]
        raw_weights: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Class-agnostic AP against the scene's ground truth.
    Eval {
        #[arg(long)]
        seg: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "floor,wall")]
        exclude: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic room with cameras.
    Synth(SynthArgs),
    /// Run the configured pipeline stages.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Write every prompt the graph builder will send, for offline export.
    DumpPrompts {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        max_views: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check an oracle store, feature maps and instance maps.
    ValidateStore {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        cameras: Option<PathBuf>,
        /// Prompt dump whose every entry must have an answer.
        #[arg(long)]
        prompts: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SceneArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    superpoints: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = SynthConfig::default().num_objects)]
    objects: usize,
    #[arg(long, default_value_t = SynthConfig::default().camera_count)]
    cameras: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Merge and split probability for the simulated 2D models.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Also write superpoints, an oracle store with feature and instance
    /// maps, and a run.toml for `supercut run`.
    #[arg(long)]
    with_store: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli.command, cli.threads) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_scene_args(a: &SceneArgs) -> Result<(supercut::SceneGeometry, Vec<Superpoint>, Vec<supercut::CameraView>)> {
    let scene = load_scene(&a.scene)?;
    let sps = load_superpoints(&a.superpoints, &scene)?;
    let cams = load_cameras(&a.cameras)?;
    Ok((scene, sps, cams))
}

fn run(command: Command, threads: Option<usize>) -> Result<()> {
    match command {
        Command::Presegment {
            input,
            k_thresh,
            min_verts,
            knn,
            out,
        } => {
            let scene = load_scene(&input)?;
            let cfg = PresegmentConfig {
                k_thresh,
                seg_min_verts: min_verts,
                knn,
            };
            let sps = presegment(&scene, &cfg)?;
            log::info!("{} points -> {} superpoints", scene.len(), sps.len());
            save_superpoints(&sps, &out)?;
        }
        Command::BuildGraph {
            scene,
            oracle,
            features,
            seed,
            max_views,
            out,
        } => {
            let (geom, sps, cams) = load_scene_args(&scene)?;
            let oracle_store = FileOracle::open(&oracle)?;
            let feats = FeatureStore::load_dir(features.as_deref().unwrap_or(&oracle))?;
            let cfg = GraphBuildConfig {
                seed,
                max_views,
                ..Default::default()
            };
            let (graph, report) = annotate_graph(&geom, &sps, &cams, &oracle_store, &feats, &cfg)?;
            log::info!(
                "{} nodes, {} edges, {} invisible nodes, {} edges never co-visible",
                report.nodes,
                report.edges,
                report.invisible_nodes.len(),
                report.edges_without_views
            );
            save_graph(&graph, &out)?;
        }
        Command::PseudoLabel {
            graph,
            scene,
            imaps,
            n_min,
            out,
        } => {
            if n_min < 1 {
                bail!("--n-min must be >= 1");
            }
            let (geom, sps, cams) = load_scene_args(&scene)?;
            let mut g = load_graph(&graph)?;
            let maps = InstanceMapStore::load_dir(&imaps)?;
            let depth = supercut::projection::render_all(&geom, &cams);
            let vis = VisibilityIndex::build(&geom, &sps, &cams, &depth, &Default::default());
            let records = record_all_votes(&g, &vis, &cams, &maps)?;
            let stats = apply_labels(&mut g, &records, n_min);
            log::info!(
                "{} positive, {} negative, {} unlabeled",
                stats.positive,
                stats.negative,
                stats.unlabeled
            );
            save_graph(&g, &out)?;
        }
        Command::Train {
            graph,
            epochs,
            lr,
            seed,
            no_edge_weights,
            out,
        } => {
            let graphs = graph.iter().map(load_graph).collect::<supercut::Result<Vec<_>>>()?;
            let refs: Vec<_> = graphs.iter().collect();
            let cfg = TrainConfig {
                epochs,
                learning_rate: lr,
                seed,
                use_edge_weights: !no_edge_weights,
            };
            let trained = train_pooled::<f32>(&refs, &cfg)?;
            if let (Some(a), Some(b)) = (trained.history.first(), trained.history.last()) {
                log::info!("loss {} -> {} ({} labeled edges)", a.total, b.total, a.labeled);
            }
            save_params(&trained.params, &out)?;
        }
        Command::Infer {
            graph,
            model,
            no_edge_weights,
            out,
        } => {
            let mut g = load_graph(&graph)?;
            let params = load_params(&model)?;
            infer_graph(&mut g, &params, !no_edge_weights)?;
            save_graph(&g, &out)?;
        }
        Command::Segment {
            graph,
            superpoints,
            tau,
            rho,
            raw_weights,
            out,
        } => {
            let g = load_graph(&graph)?;
            let sps: Vec<Superpoint> = read_json(&superpoints)?;
            let n = sps
                .iter()
                .flat_map(|s| s.point_indices.iter())
                .max()
                .map_or(0, |&m| m as usize + 1);
            validate_superpoints(&sps, n)?;
            let cfg = CutConfig {
                affinity_threshold: tau,
                veto_ratio: rho,
                use_affinity: !raw_weights,
            };
            let seg = segment(&g, &sps, n, &cfg)?;
            log::info!("{} instances", seg.instances.len());
            save_segmentation(&seg, &out)?;
        }
        Command::Eval {
            seg,
            scene,
            exclude,
            out,
        } => {
            let s = load_segmentation(&seg)?;
            let geom = load_scene(&scene)?;
            let gt = geom
                .gt_instance
                .as_ref()
                .context("scene has no ground-truth instance labels")?;
            let report = evaluate(&s, gt, &parse_exclusions(&exclude)?)?;
            println!(
                "mAP {:.4}  AP50 {:.4}  AP25 {:.4}  ({} gt, {} predictions)",
                report.map, report.ap50, report.ap25, report.num_gt, report.num_pred
            );
            if let Some(out) = out {
                write_json(&report, &out)?;
            }
        }
        Command::Synth(args) => synth(args)?,
        Command::Run {
            config,
            resume,
            seed,
            out_dir,
        } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(d) = out_dir {
                cfg.paths.out_dir = d;
            }
            let manifest = run_pipeline(&cfg, RunOptions { resume, threads })?;
            for r in &manifest.stages {
                log::info!("{:>12}: {:?} in {:.2}s", r.stage.name(), r.status, r.wall_time_s);
            }
        }
        Command::DumpPrompts { scene, max_views, out } => {
            let (geom, sps, cams) = load_scene_args(&scene)?;
            let cfg = GraphBuildConfig {
                max_views,
                ..Default::default()
            };
            let prompts = collect_prompts(&geom, &sps, &cams, &cfg)?;
            log::info!("{} prompt sets", prompts.len());
            save_prompts(&prompts, &out)?;
        }
        Command::ValidateStore { store, cameras, prompts } => {
            let cams = cameras.as_deref().map(load_cameras).transpose()?;
            let prompts = prompts.as_deref().map(load_prompts).transpose()?;
            let report = validate_store(&store, cams.as_deref(), prompts.as_deref());
            println!(
                "{} oracle entries, {} feature maps, {} instance maps",
                report.oracle_entries, report.feature_maps, report.instance_maps
            );
            for p in &report.problems {
                println!("problem: {p}");
            }
            if !report.is_ok() {
                bail!("{} problems in {}", report.problems.len(), store.display());
            }
            println!("ok");
        }
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        num_objects: args.objects,
        camera_count: args.cameras,
        seed: args.seed,
        noise: NoiseConfig::new(args.noise, args.noise)?,
        ..Default::default()
    };
    let out = &args.out_dir;
    let s = generate(&cfg)?;
    save_scene(&s.scene, out.join("scene.ply"))?;
    save_cameras(&s.cameras, out.join("cams.json"))?;
    write_json(&s.objects, out.join("objects.json"))?;
    log::info!("{} points, {} objects, {} cameras", s.scene.len(), s.objects.len(), s.cameras.len());
    if !args.with_store {
        return Ok(());
    }
    let sps = presegment(&s.scene, &PRESEGMENT)?;
    save_superpoints(&sps, out.join("sp.json"))?;
    let build = GraphBuildConfig {
        seed: cfg.seed,
        ..Default::default()
    };
    let summary = export_store(
        &s.scene,
        &s.cameras,
        &sps,
        &build,
        &cfg.noise,
        &FeatureSynthesis::default(),
        cfg.feature_stride,
        cfg.seed,
        out.join("store"),
    )?;
    log::info!(
        "store: {} oracle entries, {} feature maps, {} instance maps",
        summary.oracle_entries,
        summary.feature_maps,
        summary.instance_maps
    );
    write_run_config(out, cfg.seed)?;
    Ok(())
}

/// A config for `supercut run` over the files just written.
fn write_run_config(dir: &Path, seed: u64) -> Result<()> {
    let cfg = PipelineConfig {
        seed,
        stages: supercut::pipeline::Stage::ALL.to_vec(),
        paths: Paths {
            scene: "scene.ply".into(),
            cameras: "cams.json".into(),
            oracle: "store".into(),
            features: None,
            instance_maps: None,
            out_dir: "run".into(),
            pretrained_model: None,
        },
        presegment: PRESEGMENT,
        graph: Default::default(),
        pseudo_label: Default::default(),
        train: Default::default(),
        cut: Default::default(),
        eval: Default::default(),
    };
    std::fs::write(dir.join("run.toml"), cfg.to_toml()?).context("writing run.toml")?;
    Ok(())
}
