/// Aspect-preserving resize of a region into a square input with symmetric padding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResizeMeta {
    /// Input pixels per region pixel.
    pub scale: f64,
    pub pad_u: f64,
    pub pad_v: f64,
}

impl ResizeMeta {
    pub fn letterbox(region_w: u32, region_h: u32, side: u32) -> Self {
        let (w, h, s) = (region_w as f64, region_h as f64, side as f64);
        let scale = (s / w).min(s / h);
        ResizeMeta {
            scale,
            pad_u: ((s - w * scale) / 2.0).max(0.0),
            pad_v: ((s - h * scale) / 2.0).max(0.0),
        }
    }

    pub fn to_input(&self, u: f64, v: f64) -> (f64, f64) {
        (u * self.scale + self.pad_u, v * self.scale + self.pad_v)
    }

    pub fn to_region(&self, u: f64, v: f64) -> (f64, f64) {
        ((u - self.pad_u) / self.scale, (v - self.pad_v) / self.scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_frame_letterbox() {
        let m = ResizeMeta::letterbox(1280, 768, 608);
        assert_eq!(m.scale, 0.475);
        assert_eq!(m.pad_u, 0.0);
        // 768 · 0.475 = 364.8, pad = (608 − 364.8) / 2
        assert!((m.pad_v - 121.6).abs() < 1e-9);
    }

    #[test]
    fn small_crops_are_magnified() {
        let m = ResizeMeta::letterbox(192, 115, 608);
        assert!((m.scale - 608.0 / 192.0).abs() < 1e-12);
        assert!(m.scale > 3.0);
    }

    proptest! {
        #[test]
        fn round_trip(w in 16u32..2000, h in 16u32..2000, u in 0.0f64..1.0, v in 0.0f64..1.0) {
            let m = ResizeMeta::letterbox(w, h, 608);
            prop_assert!(m.scale > 0.0 && m.pad_u >= 0.0 && m.pad_v >= 0.0);
            let (pu, pv) = (u * w as f64, v * h as f64);
            let (iu, iv) = m.to_input(pu, pv);
            prop_assert!(iu >= -1e-9 && iu <= 608.0 + 1e-9 && iv >= -1e-9 && iv <= 608.0 + 1e-9);
            let (bu, bv) = m.to_region(iu, iv);
            prop_assert!((bu - pu).abs() < 1e-9 && (bv - pv).abs() < 1e-9);
        }
    }
}
