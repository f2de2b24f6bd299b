//! `fovea` command line: crop planning, detection, fusion, evaluation, scene
//! simulation and crop-count sweeps over frame logs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fovea_core::detector::{ReplayDetector, SyntheticConfig};
use fovea_core::metrics::{evaluate, FrameDetection};
use fovea_core::pipeline::{
    record_detections, plan_frame, run_pipeline, sweep_crops, BackendSpec, FrameFailure, PipelineConfig,
    PipelineFile,
};
use fovea_core::record::{
    load_json, save_json, write_frame_log, FusedFile, GroundTruthFile, PlanFrame,
};
use fovea_core::simworld::{generate_scene, SceneConfig};

const DEFAULT_OUT: &str = "fovea-out";

#[derive(Parser)]
#[command(name = "fovea", version, about = "Path-guided crop detection for distant vehicles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan crop rectangles for every frame (or one frame).
    Plan {
        #[command(flatten)]
        common: Common,
        /// Only plan this frame and print its crops to stdout.
        #[arg(long)]
        frame: Option<u64>,
    },
    /// Run the detector on the full image and all crops; writes a replay file.
    Detect {
        #[command(flatten)]
        common: Common,
    },
    /// Fuse recorded detections into one set per frame.
    Fuse {
        #[command(flatten)]
        common: Common,
        /// Replay file written by `detect`. Defaults to OUT/detections.json.
        #[arg(long)]
        detections: Option<PathBuf>,
    },
    /// Score fused detections against ground truth.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Ground-truth file. Defaults to the frame log named in the config.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Fused detections. Defaults to OUT/fused.json.
        #[arg(long)]
        fused: Option<PathBuf>,
    },
    /// Generate a synthetic drive: frame log, calibration, ground truth, config.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Number of frames, overriding the scene config.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Run the pipeline once per crop count.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Crop counts to evaluate.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5")]
        counts: Vec<usize>,
    },
    /// Plan, detect, fuse and evaluate in one pass.
    Pipeline {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    Replay,
    Synthetic,
    External,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline config (scene config for `simulate`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of crops.
    #[arg(long)]
    crops: Option<usize>,
    /// Distance between reference waypoints, meters.
    #[arg(long = "spacing-m")]
    spacing_m: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    backend: Option<Backend>,
    /// Recorded detections for the replay backend.
    #[arg(long)]
    replay_file: Option<PathBuf>,
    /// Command line of the external detector, split on whitespace.
    #[arg(long)]
    detector_cmd: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Frames allowed to fail before exiting with status 2.
    #[arg(long)]
    max_failed_frames: Option<usize>,
}

/// How a command ended when it did not succeed.
enum Failure {
    Config(anyhow::Error),
    TooManyFailures { failed: usize, allowed: usize },
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

impl From<fovea_core::Error> for Failure {
    fn from(e: fovea_core::Error) -> Self {
        Failure::Config(e.into())
    }
}

type CmdResult = Result<(), Failure>;

/// Settings shared by the pipeline-driven commands.
struct Loaded {
    cfg: PipelineConfig,
    file: PipelineFile,
    out: PathBuf,
}

impl Common {
    fn pipeline_file(&self) -> anyhow::Result<PipelineFile> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| anyhow!("--config is required"))?;
        let mut file = PipelineFile::load(path)?;
        if let Some(n) = self.crops {
            file.crop.n = n;
        }
        if let Some(d) = self.spacing_m {
            file.crop.d = d;
        }
        if let Some(j) = self.jobs {
            file.jobs = j;
        }
        if let Some(m) = self.max_failed_frames {
            file.max_failed_frames = m;
        }
        file.backend = self.backend_spec(&file.backend)?;
        Ok(file)
    }

    fn backend_spec(&self, current: &BackendSpec) -> anyhow::Result<BackendSpec> {
        let kind = self.backend.unwrap_or(match current {
            BackendSpec::Replay { .. } => Backend::Replay,
            BackendSpec::Synthetic(_) => Backend::Synthetic,
            BackendSpec::External { .. } => Backend::External,
        });
        Ok(match kind {
            Backend::Synthetic => {
                let mut cfg = match current {
                    BackendSpec::Synthetic(c) => *c,
                    _ => SyntheticConfig::default(),
                };
                if let Some(s) = self.seed {
                    cfg.seed = s;
                }
                BackendSpec::Synthetic(cfg)
            }
            Backend::Replay => match (&self.replay_file, current) {
                (Some(p), _) => BackendSpec::Replay { path: p.clone() },
                (None, BackendSpec::Replay { path }) => BackendSpec::Replay { path: path.clone() },
                _ => return Err(anyhow!("the replay backend needs --replay-file")),
            },
            Backend::External => match (&self.detector_cmd, current) {
                (Some(c), _) => BackendSpec::External {
                    cmd: c.split_whitespace().map(str::to_string).collect(),
                },
                (None, BackendSpec::External { cmd }) => BackendSpec::External { cmd: cmd.clone() },
                _ => return Err(anyhow!("the external backend needs --detector-cmd")),
            },
        })
    }

    fn out_dir(&self, file: Option<&PipelineFile>) -> PathBuf {
        self.out
            .clone()
            .or_else(|| file.and_then(|f| f.out.clone()))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    fn load(&self) -> anyhow::Result<Loaded> {
        let file = self.pipeline_file()?;
        let out = self.out_dir(Some(&file));
        let cfg = file.clone().into_config()?;
        Ok(Loaded { cfg, file, out })
    }
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn check_failures(failures: &[FrameFailure], allowed: usize) -> CmdResult {
    for f in failures {
        eprintln!("frame {} failed: {}", f.frame_id, f.message);
    }
    if failures.len() > allowed {
        return Err(Failure::TooManyFailures {
            failed: failures.len(),
            allowed,
        });
    }
    Ok(())
}

fn eval_json(ap: Option<f64>, tp: usize, fp: usize, n_gt: usize) -> String {
    let v = serde_json::json!({
        "ap": ap,
        "tp": tp,
        "fp": fp,
        "n_gt": n_gt,
        "recall_undefined": n_gt == 0,
    });
    serde_json::to_string_pretty(&v).expect("report serializes") + "\n"
}

fn cmd_plan(common: &Common, only: Option<u64>) -> CmdResult {
    let Loaded { cfg, out, .. } = common.load()?;
    let mut plans = Vec::new();
    for frame in &cfg.frames {
        if only.is_some_and(|id| id != frame.frame_id) {
            continue;
        }
        plans.push(PlanFrame {
            frame_id: frame.frame_id,
            crops: plan_frame(&cfg, frame)?,
        });
    }
    if let Some(id) = only {
        let plan = plans
            .first()
            .ok_or_else(|| anyhow!("frame {id} is not in the frame log"))?;
        print!("{}", fovea_core::record::to_json_pretty(&plan.crops));
    }
    create_dir(&out)?;
    save_json(out.join("plan.json"), &plans)?;
    eprintln!("planned {} frame(s) into {}", plans.len(), out.join("plan.json").display());
    Ok(())
}

fn cmd_detect(common: &Common) -> CmdResult {
    let Loaded { cfg, file, out } = common.load()?;
    let (replay, failures) = record_detections(&cfg)?;
    create_dir(&out)?;
    replay.save(out.join("detections.json"))?;
    eprintln!("recorded {} frame(s) with {}", replay.frames.len(), cfg.detector.name());
    check_failures(&failures, file.max_failed_frames)
}

fn cmd_fuse(common: &Common, detections: Option<&Path>) -> CmdResult {
    let Loaded { mut cfg, file, out } = common.load()?;
    let path = detections.map_or_else(|| out.join("detections.json"), Path::to_path_buf);
    cfg.detector = Arc::new(ReplayDetector::load(&path)?);
    let run = run_pipeline(&cfg)?;
    create_dir(&out)?;
    save_json(out.join("fused.json"), &run.fused_file())?;
    let kept: usize = run.frames.iter().map(|f| f.fused.len()).sum();
    eprintln!("fused {} frame(s), {kept} detection(s) kept", run.frames.len());
    check_failures(&run.failures, file.max_failed_frames)
}

fn cmd_eval(common: &Common, gt: Option<&Path>, fused: Option<&Path>) -> CmdResult {
    let file = match &common.config {
        Some(_) => Some(common.pipeline_file()?),
        None => None,
    };
    let out = common.out_dir(file.as_ref());
    let gt_file: GroundTruthFile = match (gt, &file) {
        (Some(p), _) => load_json("ground truth", p)?,
        (None, Some(f)) => {
            GroundTruthFile::from_frames(&fovea_core::record::read_frame_log(&f.frame_log)?)
        }
        (None, None) => return Err(anyhow!("eval needs --gt or --config").into()),
    };
    let fused_path = fused.map_or_else(|| out.join("fused.json"), Path::to_path_buf);
    let fused_file: FusedFile = load_json("fused detections", &fused_path)?;
    let defaults = PipelineFile::default();
    let (classes, iou) = file
        .as_ref()
        .map_or((defaults.classes, defaults.eval_iou), |f| (f.classes.clone(), f.eval_iou));

    let gts: Vec<_> = gt_file
        .boxes()?
        .into_iter()
        .filter(|g| classes.contains(&g.class_label))
        .collect();
    let dets: Vec<FrameDetection> = fused_file
        .frames
        .iter()
        .flat_map(|f| {
            f.detections.iter().map(|d| FrameDetection {
                frame_id: f.frame_id,
                detection: d.clone(),
            })
        })
        .collect();
    let result = evaluate(&dets, &gts, iou);
    create_dir(&out)?;
    write_text(
        &out.join("eval.json"),
        &eval_json(Some(result.ap), result.tp, result.fp, result.n_gt),
    )?;
    write_text(&out.join("pr.csv"), &result.curve.to_csv())?;
    println!(
        "AP {:.2}%  TP {}  FP {}  GT {}",
        result.ap * 100.0,
        result.tp,
        result.fp,
        result.n_gt
    );
    Ok(())
}

fn cmd_simulate(common: &Common, frames: Option<usize>) -> CmdResult {
    let mut scene: SceneConfig = match &common.config {
        Some(p) => load_json("scene config", p)?,
        None => SceneConfig::default(),
    };
    if let Some(s) = common.seed {
        scene.seed = s;
    }
    if let Some(n) = frames {
        scene.frames = n;
    }
    let out = common.out_dir(None);
    let records = generate_scene(&scene)?.frames()?;

    let mut file = PipelineFile {
        waypoint_spacing: scene.waypoint_spacing,
        ..PipelineFile::default()
    };
    if let Some(n) = common.crops {
        file.crop.n = n;
    }
    if let Some(d) = common.spacing_m {
        file.crop.d = d;
    }
    if let Some(j) = common.jobs {
        file.jobs = j;
    }
    file.backend = common.backend_spec(&BackendSpec::Synthetic(SyntheticConfig {
        seed: scene.seed,
        ..SyntheticConfig::default()
    }))?;

    create_dir(&out)?;
    write_frame_log(out.join("frames.jsonl"), &records)?;
    write_text(&out.join("calibration.json"), &scene.calibration.to_json())?;
    save_json(out.join("gt.json"), &GroundTruthFile::from_frames(&records))?;
    save_json(out.join("config.json"), &file)?;
    let boxes: usize = records.iter().map(|r| r.gt.len()).sum();
    eprintln!(
        "wrote {} frame(s), {boxes} ground-truth box(es) into {}",
        records.len(),
        out.display()
    );
    Ok(())
}

fn cmd_sweep(common: &Common, counts: &[usize]) -> CmdResult {
    let Loaded { cfg, file, out } = common.load()?;
    let report = sweep_crops(&cfg, counts)?;
    create_dir(&out)?;
    write_text(&out.join("sweep.json"), &report.to_json())?;
    let table = report.to_table();
    write_text(&out.join("sweep.txt"), &table)?;
    for row in &report.rows {
        write_text(&out.join(format!("pr_crops_{}.csv", row.crops)), &row.curve.to_csv())?;
    }
    print!("{table}");
    let failed = report.failed_frames();
    if failed > file.max_failed_frames {
        return Err(Failure::TooManyFailures {
            failed,
            allowed: file.max_failed_frames,
        });
    }
    Ok(())
}

fn cmd_pipeline(common: &Common) -> CmdResult {
    let Loaded { cfg, file, out } = common.load()?;
    let run = run_pipeline(&cfg)?;
    create_dir(&out)?;
    save_json(out.join("fused.json"), &run.fused_file())?;
    save_json(out.join("failures.json"), &run.failures)?;
    let eval = run.evaluation.as_ref();
    write_text(
        &out.join("eval.json"),
        &eval_json(
            eval.map(|e| e.ap),
            eval.map_or(0, |e| e.tp),
            eval.map_or(0, |e| e.fp),
            eval.map_or(0, |e| e.n_gt),
        ),
    )?;
    if let Some(e) = eval {
        write_text(&out.join("pr.csv"), &e.curve.to_csv())?;
        println!(
            "AP {:.2}%  TP {}  FP {}  GT {}  frames {}",
            e.ap * 100.0,
            e.tp,
            e.fp,
            e.n_gt,
            run.frames.len()
        );
    } else {
        println!("no frames processed");
    }
    check_failures(&run.failures, file.max_failed_frames)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Plan { common, frame } => cmd_plan(common, *frame),
        Command::Detect { common } => cmd_detect(common),
        Command::Fuse { common, detections } => cmd_fuse(common, detections.as_deref()),
        Command::Eval { common, gt, fused } => cmd_eval(common, gt.as_deref(), fused.as_deref()),
        Command::Simulate { common, frames } => cmd_simulate(common, *frames),
        Command::Sweep { common, counts } => cmd_sweep(common, counts),
        Command::Pipeline { common } => cmd_pipeline(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::TooManyFailures { failed, allowed }) => {
            eprintln!("error: {failed} frame(s) failed, at most {allowed} allowed");
            ExitCode::from(2)
        }
    }
}
