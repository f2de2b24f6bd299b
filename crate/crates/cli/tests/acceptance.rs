//! Acceptance checks, one line per criterion. Exits non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use fovea_core::detector::{Detection, ReplayFile, SyntheticConfig, SyntheticDetector};
use fovea_core::frames::{CameraModel, CameraPoint, ExtrinsicChain, Frame, RigidTransform, VehiclePose};
use fovea_core::fuse::{build_matrix, overlap_filter, Box2D};
use fovea_core::metrics::{average_precision, pr_curve, MatchedDetection};
use fovea_core::pathcrop::{crop_size, CropPlanConfig};
use fovea_core::pipeline::{sweep_crops, PipelineConfig};
use fovea_core::record::{
    format_frame_log, from_json, parse_frame_log, to_json_pretty, FusedFile, PlanFrame,
};
use fovea_core::simworld::{generate_scene, SceneConfig};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let t = Instant::now();
    let o = f();
    (o, t.elapsed())
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn crop_sizes() -> Outcome {
    let cam = CameraModel::new(1e-3, 1e-3, 1e-6, (640.0, 384.0), (1280, 768)).unwrap();
    let cfg = CropPlanConfig { alpha: 0.6, ..CropPlanConfig::default() };
    let (four, five) = (crop_size(4, &cam, &cfg), crop_size(5, &cam, &cfg));
    outcome(
        four == (192, 115) && five == (153, 92),
        format!("j=4 -> {four:?}, j=5 -> {five:?}"),
    )
}

fn random_transform(rng: &mut ChaCha8Rng, from: Frame, to: Frame, reach: f64, tilt: f64) -> RigidTransform {
    let a = |rng: &mut ChaCha8Rng, r: f64| rng.random_range(-r..r);
    let t = Vector3::new(a(rng, reach), a(rng, reach), a(rng, reach));
    RigidTransform::from_rpy(a(rng, tilt), a(rng, tilt), a(rng, std::f64::consts::PI), t, from, to)
}

fn projection_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_24);
    let cam = CameraModel::new(1e-3, 1e-3, 1e-6, (640.0, 384.0), (1280, 768)).unwrap();
    let (mut ray, mut origin, mut chain_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let pose = VehiclePose {
            x: rng.random_range(-500.0..500.0),
            y: rng.random_range(-500.0..500.0),
            z: rng.random_range(-5.0..5.0),
            roll: rng.random_range(-0.2..0.2),
            pitch: rng.random_range(-0.2..0.2),
            yaw: rng.random_range(-3.14..3.14),
        };
        let pb = random_transform(&mut rng, Frame::Pose, Frame::Board, 2.0, 0.3);
        let bc = random_transform(&mut rng, Frame::Board, Frame::Camera, 1.0, 0.3);
        let ch = ExtrinsicChain::new(pose.world_to_pose(), pb, bc).unwrap();

        let c = CameraPoint::new(rng.random_range(0.5..300.0), rng.random_range(-50.0..50.0), rng.random_range(-20.0..20.0));
        let lambda = rng.random_range(0.05..20.0);
        let p0 = cam.project(c).unwrap();
        let p1 = cam.project(c.scaled(lambda)).unwrap();
        ray = ray.max((p0.u - p1.u).abs()).max((p0.v - p1.v).abs());

        origin = origin.max(ch.world_to_camera(ch.camera_origin_in_world()).to_vector().amax());

        let w = Vector3::new(rng.random_range(-600.0..600.0), rng.random_range(-600.0..600.0), rng.random_range(-10.0..10.0));
        let seq = ch.world_to_camera(fovea_core::WorldPoint::from_vector(&w)).to_vector();
        chain_err = chain_err.max((seq - ch.composite().apply(&w)).amax());
    }
    let worst = ray.max(origin).max(chain_err);
    outcome(
        worst <= 1e-9,
        format!("1000 configs; max ray {ray:.1e}, origin {origin:.1e}, chain {chain_err:.1e} (tol 1e-9)"),
    )
}

fn iou_oracle(a: &Box2D, b: &Box2D) -> f64 {
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    iw * ih / (a.w * a.h + b.w * b.h - iw * ih)
}

/// Walks the lines in order: the first non-empty line is copied whole, every
/// later box is added unless its IoU with a listed box is larger than `thresh`.
fn filter_oracle(lines: &[(u32, Vec<Detection>)], thresh: f64) -> Vec<Detection> {
    let mut list: Vec<Detection> = Vec::new();
    let mut started = false;
    for (_, line) in lines {
        if line.is_empty() {
            continue;
        }
        if !started {
            list.extend(line.iter().cloned());
            started = true;
            continue;
        }
        for d in line {
            if !list.iter().any(|k| iou_oracle(&k.bbox, &d.bbox) > thresh) {
                list.push(d.clone());
            }
        }
    }
    list
}

fn det(x: f64, y: f64, w: f64, h: f64, j: u32) -> Detection {
    Detection::new("car", 0.5, Box2D::new(x, y, w, h).unwrap(), j)
}

fn overlap_filter_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    for _ in 0..500 {
        let n_rows = rng.random_range(1..=6u32);
        let mut budget = rng.random_range(0..=12usize);
        let lines: Vec<(u32, Vec<Detection>)> = (0..n_rows)
            .map(|j| {
                let k = rng.random_range(0..=budget.min(4));
                budget -= k;
                let row = (0..k)
                    .map(|_| {
                        let g = |rng: &mut ChaCha8Rng, lo: u32, hi: u32| rng.random_range(lo..hi) as f64 * 5.0;
                        det(g(&mut rng, 0, 6), g(&mut rng, 0, 6), g(&mut rng, 1, 5), g(&mut rng, 1, 5), j)
                    })
                    .collect();
                (j, row)
            })
            .collect();
        let got = overlap_filter(&build_matrix(lines.clone()).unwrap(), 0.5).accepted;
        if got != filter_oracle(&lines, 0.5) {
            mismatches += 1;
        }
    }

    let exempt = vec![(0, vec![]), (1, vec![det(0.0, 0.0, 10.0, 10.0, 1), det(0.0, 0.0, 10.0, 8.0, 1)])];
    let exempt_ok = overlap_filter(&build_matrix(exempt.clone()).unwrap(), 0.5).accepted.len() == 2
        && filter_oracle(&exempt, 0.5).len() == 2;
    let half = vec![(0, vec![det(0.0, 0.0, 20.0, 10.0, 0)]), (1, vec![det(0.0, 0.0, 10.0, 10.0, 1)])];
    let half_ok = iou_oracle(&half[0].1[0].bbox, &half[1].1[0].bbox) == 0.5
        && overlap_filter(&build_matrix(half).unwrap(), 0.5).accepted.len() == 2;
    outcome(
        mismatches == 0 && exempt_ok && half_ok,
        format!("500 matrices, {mismatches} mismatches; exemption case {exempt_ok}; IoU=0.5 kept {half_ok}"),
    )
}

fn ap_oracle(labels: &[bool], n_gt: usize) -> f64 {
    let mut rec = vec![0.0];
    let mut prec = vec![0.0];
    let (mut tp, mut fp) = (0.0, 0.0);
    for &l in labels {
        if l { tp += 1.0 } else { fp += 1.0 }
        rec.push(tp / n_gt as f64);
        prec.push(tp / (tp + fp));
    }
    rec.push(1.0);
    prec.push(0.0);
    for i in (0..prec.len() - 1).rev() {
        prec[i] = prec[i].max(prec[i + 1]);
    }
    (1..rec.len()).map(|i| (rec[i] - rec[i - 1]) * prec[i]).sum()
}

fn curve_ap(labels: &[bool], n_gt: usize) -> f64 {
    let matched: Vec<MatchedDetection> = labels
        .iter()
        .enumerate()
        .map(|(i, &is_tp)| MatchedDetection {
            frame_id: 0,
            detection: Detection::new("car", 1.0 - i as f64 * 1e-3, Box2D::new(0.0, 0.0, 1.0, 1.0).unwrap(), 0),
            is_tp,
            gt_index: None,
        })
        .collect();
    average_precision(&pr_curve(&matched, n_gt))
}

fn ap_oracle_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let len = rng.random_range(1..200);
        let p_tp = rng.random_range(0.05..0.95);
        let labels: Vec<bool> = (0..len).map(|_| rng.random_bool(p_tp)).collect();
        let tps = labels.iter().filter(|&&l| l).count();
        let n_gt = tps.max(1) + rng.random_range(0..20);
        worst = worst.max((curve_ap(&labels, n_gt) - ap_oracle(&labels, n_gt)).abs());
    }
    let hand = curve_ap(&[true, false, true], 2);
    outcome(
        worst <= 1e-12 && hand == 5.0 / 6.0,
        format!("200 instances, max |diff| {worst:.1e} (tol 1e-12); [TP,FP,TP]/2 = {hand:?}"),
    )
}

fn foveation_benefit() -> Outcome {
    let scene = SceneConfig::default();
    let frames = generate_scene(&scene).unwrap().frames().unwrap();
    let n_frames = frames.len();
    let det = SyntheticDetector::new(SyntheticConfig { h_min: 20.0, ..SyntheticConfig::default() }.noiseless()).unwrap();
    let cfg = PipelineConfig::new(scene.calibration, frames, Arc::new(det));
    let report = sweep_crops(&cfg, &[0, 1, 2, 3, 4, 5]).unwrap();
    let ap: Vec<f64> = report.rows.iter().map(|r| r.ap.unwrap_or(f64::NAN)).collect();
    let monotone = ap.windows(2).all(|w| w[1] >= w[0]);
    let gain = ap[0] < ap[3];
    let saturates = ap[5] - ap[4] < ap[3] - ap[2];
    let shown: Vec<String> = ap.iter().map(|a| format!("{:.3}", a)).collect();
    outcome(
        monotone && gain && saturates && n_frames == 200,
        format!(
            "{n_frames} frames, AP by crops [{}]; non-decreasing {monotone}, AP(0)<AP(3) {gain}, saturation {saturates}",
            shown.join(", ")
        ),
    )
}

fn fovea(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_fovea"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("fovea {args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn sweep_determinism(dir: &Path) -> Outcome {
    let run = || -> Result<bool, String> {
        fovea(&["simulate", "--out", p(dir), "--frames", "60", "--seed", "17"])?;
        let cfg = dir.join("config.json");
        for name in ["a", "b"] {
            fovea(&["sweep", "--config", p(&cfg), "--seed", "17", "--out", p(&dir.join(name))])?;
        }
        let a = std::fs::read(dir.join("a/sweep.json")).map_err(|e| e.to_string())?;
        let b = std::fs::read(dir.join("b/sweep.json")).map_err(|e| e.to_string())?;
        Ok(!a.is_empty() && a == b)
    };
    match run() {
        Ok(same) => outcome(same, format!("two sweep runs, seed 17: byte-identical {same}")),
        Err(e) => outcome(false, e),
    }
}

fn format_round_trips(dir: &Path) -> Outcome {
    let run = || -> Result<Vec<(&'static str, bool)>, String> {
        let cfg = dir.join("config.json");
        let out = dir.join("artifacts");
        fovea(&["plan", "--config", p(&cfg), "--out", p(&out)])?;
        fovea(&["detect", "--config", p(&cfg), "--out", p(&out)])?;
        fovea(&["fuse", "--config", p(&cfg), "--out", p(&out)])?;
        let read = |name: &str| std::fs::read_to_string(out.join(name)).or_else(|_| std::fs::read_to_string(dir.join(name)));
        let read = |name: &str| read(name).map_err(|e| format!("{name}: {e}"));

        let log = read("frames.jsonl")?;
        let log_ok = format_frame_log(&parse_frame_log(&log).map_err(|e| e.to_string())?) == log;
        let replay = read("detections.json")?;
        let replay_ok = ReplayFile::from_json(&replay).map_err(|e| e.to_string())?.to_json() + "\n" == replay;
        let plan = read("plan.json")?;
        let plan_ok = to_json_pretty(&from_json::<Vec<PlanFrame>>("plan", &plan).map_err(|e| e.to_string())?) == plan;
        let fused = read("fused.json")?;
        let fused_ok = to_json_pretty(&from_json::<FusedFile>("fused", &fused).map_err(|e| e.to_string())?) == fused;
        Ok(vec![("frame log", log_ok), ("replay", replay_ok), ("crop plan", plan_ok), ("fused", fused_ok)])
    };
    match run() {
        Ok(checks) => {
            let pass = checks.iter().all(|(_, ok)| *ok);
            let detail: Vec<String> = checks.iter().map(|(n, ok)| format!("{n} {ok}")).collect();
            outcome(pass, format!("write -> read -> write: {}", detail.join(", ")))
        }
        Err(e) => outcome(false, e),
    }
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<(u32, &str, Option<Duration>, Box<dyn FnOnce() -> Outcome + '_>)> = vec![
        (1, "crop-size exactness", Some(Duration::from_millis(1)), Box::new(crop_sizes)),
        (2, "projection properties", Some(Duration::from_secs(1)), Box::new(projection_properties)),
        (3, "overlap-filter oracle", Some(Duration::from_secs(5)), Box::new(overlap_filter_oracle)),
        (4, "AP oracle", Some(Duration::from_secs(5)), Box::new(ap_oracle_check)),
        (5, "foveation benefit", Some(Duration::from_secs(30)), Box::new(foveation_benefit)),
        (6, "end-to-end determinism", None, Box::new(|| sweep_determinism(dir.path()))),
        (7, "format round-trips", None, Box::new(|| format_round_trips(dir.path()))),
    ];

    let mut failed = 0;
    for (n, name, budget, check) in criteria {
        let (o, took) = timed(check);
        let in_time = budget.is_none_or(|b| took < b);
        let pass = o.pass && in_time;
        if !pass {
            failed += 1;
        }
        let limit = budget.map_or(String::new(), |b| format!(" < {:.0} ms", ms(b)));
        println!(
            "{} criterion {n} ({name}): {} [{:.3} ms{limit}]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            ms(took)
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
