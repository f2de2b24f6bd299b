//! A geometric stand-in for a CNN detector.
//!
//! A ground-truth box is reported when at least half of it lies inside the region
//! and its height after letterboxing the region into the detector input reaches
//! `h_min`. This reproduces the effect that matters here: distant cars are too
//! small at full-image scale but become detectable once a crop magnifies them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Detection, Detector, DetectorInput};
use crate::error::{Error, Result};
use crate::fuse::Box2D;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Minimum box height in detector-input pixels.
    pub h_min: f64,
    /// Corner jitter, detector-input pixels.
    pub sigma: f64,
    /// Standard deviation of additive score noise.
    pub score_sigma: f64,
    pub seed: u64,
    /// Fraction of a ground-truth box that must fall inside the region.
    pub min_visible: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            h_min: 20.0,
            sigma: 1.5,
            score_sigma: 0.05,
            seed: 0,
            min_visible: 0.5,
        }
    }
}

impl SyntheticConfig {
    /// Noise-free variant: boxes are exact, scores deterministic.
    pub fn noiseless(self) -> Self {
        Self {
            sigma: 0.0,
            score_sigma: 0.0,
            ..self
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDetector {
    cfg: SyntheticConfig,
}

impl SyntheticDetector {
    pub fn new(cfg: SyntheticConfig) -> Result<Self> {
        if !(cfg.h_min > 0.0) {
            return Err(Error::Config("synthetic h_min must be positive".into()));
        }
        if !(cfg.sigma >= 0.0 && cfg.score_sigma >= 0.0) {
            return Err(Error::Config("synthetic noise levels must be non-negative".into()));
        }
        if !(cfg.min_visible > 0.0 && cfg.min_visible <= 1.0) {
            return Err(Error::Config("synthetic min_visible must be in (0, 1]".into()));
        }
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.cfg
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    } else {
        0.0
    }
}

impl Detector for SyntheticDetector {
    fn detect(&self, input: &DetectorInput<'_>) -> Result<Vec<Detection>> {
        let cfg = &self.cfg;
        let r = &input.region;
        let region = Box2D {
            x: r.u as f64,
            y: r.v as f64,
            w: r.w as f64,
            h: r.h as f64,
        };
        let meta = input.resize();
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, &[input.frame.frame_id, r.j as u64]));

        let mut out = Vec::new();
        for gt in &input.frame.gt {
            let gt_box = gt.bbox()?;
            // Draw noise for every ground-truth box so the stream does not depend
            // on which boxes end up detected.
            let jitter: [f64; 4] = std::array::from_fn(|_| gaussian(&mut rng, cfg.sigma));
            let score_noise = gaussian(&mut rng, cfg.score_sigma);

            let Some(visible) = gt_box.intersection(&region) else {
                continue;
            };
            if visible.area() < cfg.min_visible * gt_box.area() {
                continue;
            }
            let local = visible.translate(-region.x, -region.y);
            let input_height = local.h * meta.scale;
            if input_height < cfg.h_min {
                continue;
            }
            let score = ((input_height / (3.0 * cfg.h_min)).min(1.0) + score_noise).clamp(0.0, 1.0);

            let bbox = if cfg.sigma > 0.0 {
                let (x0, y0) = meta.to_input(local.x, local.y);
                let (x1, y1) = meta.to_input(local.right(), local.bottom());
                let (x0, y0) = meta.to_region(x0 + jitter[0], y0 + jitter[1]);
                let (x1, y1) = meta.to_region(x1 + jitter[2], y1 + jitter[3]);
                let clipped = Box2D::from_corners(
                    x0.clamp(0.0, region.w),
                    y0.clamp(0.0, region.h),
                    x1.clamp(0.0, region.w),
                    y1.clamp(0.0, region.h),
                );
                match clipped {
                    Some(b) => b,
                    None => continue,
                }
            } else {
                local
            };
            out.push(Detection::new(gt.class.clone(), score, bbox, r.j));
        }
        Ok(out)
    }

    fn name(&self) -> &str {
        "synthetic"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::to_full_image;
    use crate::frames::PixelPoint;
    use crate::pathcrop::CropSpec;
    use crate::record::{FrameRecord, GtBox};

    fn frame(boxes: &[(f64, f64, f64, f64)]) -> FrameRecord {
        FrameRecord {
            frame_id: 3,
            gt: boxes
                .iter()
                .map(|&(x, y, w, h)| GtBox { class: "car".into(), x, y, w, h })
                .collect(),
            ..Default::default()
        }
    }

    fn region(j: u32, u: u32, v: u32, w: u32, h: u32) -> CropSpec {
        CropSpec { j, u, v, w, h, anchor: PixelPoint::new(0.0, 0.0) }
    }

    fn full() -> CropSpec {
        region(0, 0, 0, 1280, 768)
    }

    #[test]
    fn small_car_needs_magnification() {
        // 30 px tall: 30·0.475 = 14.25 < 20 in the full frame, 30·608/192 = 95 in a
        // 192×115 crop.
        let f = frame(&[(600.0, 380.0, 36.0, 30.0)]);
        let det = SyntheticDetector::new(SyntheticConfig::default().noiseless()).unwrap();
        assert!(det.detect(&DetectorInput::new(&f, full())).unwrap().is_empty());
        let crop = region(4, 540, 330, 192, 115);
        let got = det.detect(&DetectorInput::new(&f, crop)).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].bbox, Box2D::new(60.0, 50.0, 36.0, 30.0).unwrap());
        assert_eq!(got[0].score, 1.0);
        assert_eq!(got[0].source, 4);
    }

    #[test]
    fn large_car_seen_in_full_frame() {
        // 60 px tall: 60·0.475 = 28.5 ≥ 20; score = 28.5 / 60
        let f = frame(&[(600.0, 380.0, 72.0, 60.0)]);
        let det = SyntheticDetector::new(SyntheticConfig::default().noiseless()).unwrap();
        let got = det.detect(&DetectorInput::new(&f, full())).unwrap();
        assert_eq!(got.len(), 1);
        assert!((got[0].score - 28.5 / 60.0).abs() < 1e-12);
    }

    #[test]
    fn mostly_outside_region_is_missed() {
        let f = frame(&[(100.0, 100.0, 40.0, 40.0)]);
        let det = SyntheticDetector::new(SyntheticConfig::default().noiseless()).unwrap();
        // 25% inside
        let r = region(1, 120, 120, 200, 200);
        assert!(det.detect(&DetectorInput::new(&f, r)).unwrap().is_empty());
        // 50% inside
        let r = region(1, 120, 0, 200, 300);
        let got = det.detect(&DetectorInput::new(&f, r)).unwrap();
        assert_eq!(got[0].bbox, Box2D::new(0.0, 100.0, 20.0, 40.0).unwrap());
    }

    #[test]
    fn noiseless_boxes_are_exact_intersections() {
        let f = frame(&[(500.0, 300.0, 80.0, 70.0), (900.0, 400.0, 50.0, 45.0)]);
        let det = SyntheticDetector::new(SyntheticConfig::default().noiseless()).unwrap();
        let r = region(1, 256, 55, 768, 460);
        let got = det.detect(&DetectorInput::new(&f, r)).unwrap();
        for (d, g) in got.iter().zip(&f.gt) {
            let reg = Box2D { x: 256.0, y: 55.0, w: 768.0, h: 460.0 };
            let want = g.bbox().unwrap().intersection(&reg).unwrap().translate(-256.0, -55.0);
            assert_eq!(d.bbox, want);
        }
    }

    #[test]
    fn noisy_detections_are_deterministic_and_stay_in_region() {
        let f = frame(&[(500.0, 300.0, 80.0, 70.0), (1250.0, 400.0, 60.0, 45.0)]);
        let det = SyntheticDetector::new(SyntheticConfig { sigma: 4.0, ..Default::default() }).unwrap();
        let input = DetectorInput::new(&f, full());
        let a = det.detect(&input).unwrap();
        let b = det.detect(&input).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        for d in &a {
            assert!(to_full_image(d, &full()).is_ok());
            assert!((0.0..=1.0).contains(&d.score));
        }
        let other_seed = SyntheticDetector::new(SyntheticConfig { sigma: 4.0, seed: 9, ..Default::default() }).unwrap();
        assert_ne!(other_seed.detect(&input).unwrap(), a);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(SyntheticDetector::new(SyntheticConfig { h_min: 0.0, ..Default::default() }).is_err());
        assert!(SyntheticDetector::new(SyntheticConfig { sigma: -1.0, ..Default::default() }).is_err());
    }
}
