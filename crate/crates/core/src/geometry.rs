//! Axis-aligned box arithmetic: IoU, generalized IoU, unit conversions and
//! the bounding-box dilation used to constrain thing masks.
//!
//! Boxes are stored in center form `(cx, cy, w, h)` and tagged with their
//! units so pixel-space and normalized-space boxes cannot be mixed silently.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to union/hull denominators so degenerate boxes divide safely.
const AREA_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    Pixel,
    Normalized,
}

/// Axis-aligned bounding box in center form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub units: Units,
}

impl BBox {
    /// Pixel-space box. Negative extents are rejected.
    pub fn pixel(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        if w < 0.0 || h < 0.0 {
            return Err(Error::InvalidValue(format!(
                "box extents must be nonnegative, got w={w}, h={h}"
            )));
        }
        Ok(Self {
            cx,
            cy,
            w,
            h,
            units: Units::Pixel,
        })
    }

    /// Normalized box; centers must lie in `[0, 1]`.
    pub fn normalized(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        if w < 0.0 || h < 0.0 {
            return Err(Error::InvalidValue(format!(
                "box extents must be nonnegative, got w={w}, h={h}"
            )));
        }
        if !(0.0..=1.0).contains(&cx) || !(0.0..=1.0).contains(&cy) {
            return Err(Error::InvalidValue(format!(
                "normalized box center must lie in [0,1], got cx={cx}, cy={cy}"
            )));
        }
        Ok(Self {
            cx,
            cy,
            w,
            h,
            units: Units::Normalized,
        })
    }

    /// Corner form `(x0, y0, x1, y1)`.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    /// Rebuild a box from corner form. Corners may be given in any order.
    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64, units: Units) -> Self {
        let (x0, x1) = if x0 <= x1 { (x0, x1) } else { (x1, x0) };
        let (y0, y1) = if y0 <= y1 { (y0, y1) } else { (y1, y0) };
        Self {
            cx: (x0 + x1) / 2.0,
            cy: (y0 + y1) / 2.0,
            w: x1 - x0,
            h: y1 - y0,
            units,
        }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn diagonal(&self) -> f64 {
        (self.w * self.w + self.h * self.h).sqrt()
    }

    /// Convert a pixel box to normalized units. Centers are clamped into
    /// `[0, 1]` to preserve the normalized-box invariant.
    pub fn to_normalized(&self, image_w: f64, image_h: f64) -> Result<Self> {
        match self.units {
            Units::Normalized => Ok(*self),
            Units::Pixel => {
                if image_w <= 0.0 || image_h <= 0.0 {
                    return Err(Error::InvalidValue(format!(
                        "image dimensions must be positive, got {image_w}x{image_h}"
                    )));
                }
                Ok(Self {
                    cx: (self.cx / image_w).clamp(0.0, 1.0),
                    cy: (self.cy / image_h).clamp(0.0, 1.0),
                    w: self.w / image_w,
                    h: self.h / image_h,
                    units: Units::Normalized,
                })
            }
        }
    }

    /// Convert a normalized box to pixel units.
    pub fn to_pixel(&self, image_w: f64, image_h: f64) -> Self {
        match self.units {
            Units::Pixel => *self,
            Units::Normalized => Self {
                cx: self.cx * image_w,
                cy: self.cy * image_h,
                w: self.w * image_w,
                h: self.h * image_h,
                units: Units::Pixel,
            },
        }
    }
}

fn check_units(a: &BBox, b: &BBox, op: &'static str) -> Result<()> {
    if a.units != b.units {
        return Err(Error::UnitMismatch(op));
    }
    Ok(())
}

fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.corners();
    let (bx0, by0, bx1, by1) = b.corners();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    iw * ih
}

/// Intersection over union. Zero-area union yields 0.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    check_units(a, b, "iou")?;
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return Ok(0.0);
    }
    Ok(inter / union)
}

/// Generalized IoU in `[-1, 1]`: IoU minus the fraction of the enclosing
/// hull not covered by the union. Degenerate denominators are floored.
pub fn giou(a: &BBox, b: &BBox) -> Result<f64> {
    check_units(a, b, "giou")?;
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    let iou = inter / union.max(AREA_EPS);

    let (ax0, ay0, ax1, ay1) = a.corners();
    let (bx0, by0, bx1, by1) = b.corners();
    let hull = (ax1.max(bx1) - ax0.min(bx0)) * (ay1.max(by1) - ay0.min(by0));
    Ok(iou - (hull - union) / hull.max(AREA_EPS))
}

/// How the per-axis dilation margin combines the proportional term with the
/// 2 px constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginMode {
    /// `eps = min(factor * extent, cap)` — the cap bounds the margin.
    CapAtConstant,
    /// `eps = max(factor * extent, cap)` — the constant is a floor.
    FloorAtConstant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DilationConfig {
    pub factor: f64,
    pub constant_px: f64,
    pub mode: MarginMode,
}

impl Default for DilationConfig {
    fn default() -> Self {
        Self {
            factor: 0.1,
            constant_px: 2.0,
            mode: MarginMode::CapAtConstant,
        }
    }
}

/// Per-axis dilation margins in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DilationMargins {
    pub eps_w: f64,
    pub eps_h: f64,
}

impl DilationMargins {
    /// Margins for a pixel box of extents `(w, h)`.
    pub fn for_box(w: f64, h: f64, config: &DilationConfig) -> Self {
        let combine = |extent: f64| match config.mode {
            MarginMode::CapAtConstant => (config.factor * extent).min(config.constant_px),
            MarginMode::FloorAtConstant => (config.factor * extent).max(config.constant_px),
        };
        Self {
            eps_w: combine(w).max(0.0),
            eps_h: combine(h).max(0.0),
        }
    }
}

/// Grow a pixel box by its dilation margins on every side, then clip the
/// result to the image rectangle. Dilation happens before clipping.
pub fn dilate(b: &BBox, image_w: f64, image_h: f64, config: &DilationConfig) -> Result<BBox> {
    if b.units != Units::Pixel {
        return Err(Error::UnitMismatch("dilate expects a pixel-space box"));
    }
    let margins = DilationMargins::for_box(b.w, b.h, config);
    let (x0, y0, x1, y1) = b.corners();
    let x0 = (x0 - margins.eps_w).clamp(0.0, image_w);
    let x1 = (x1 + margins.eps_w).clamp(0.0, image_w);
    let y0 = (y0 - margins.eps_h).clamp(0.0, image_h);
    let y1 = (y1 + margins.eps_h).clamp(0.0, image_h);
    Ok(BBox::from_corners(x0, y0, x1, y1, Units::Pixel))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn px(cx: f64, cy: f64, w: f64, h: f64) -> BBox {
        BBox::pixel(cx, cy, w, h).unwrap()
    }

    /// Rasterize both boxes on a fine integer grid and count cells. Serves as
    /// the independent area oracle for iou/giou.
    fn grid_iou_giou(a: &BBox, b: &BBox, cells_per_unit: usize) -> (f64, f64) {
        let (ax0, ay0, ax1, ay1) = a.corners();
        let (bx0, by0, bx1, by1) = b.corners();
        let x_lo = ax0.min(bx0);
        let y_lo = ay0.min(by0);
        let x_hi = ax1.max(bx1);
        let y_hi = ay1.max(by1);
        let step = 1.0 / cells_per_unit as f64;
        let nx = ((x_hi - x_lo) / step).ceil() as usize + 1;
        let ny = ((y_hi - y_lo) / step).ceil() as usize + 1;

        let mut inter = 0usize;
        let mut union = 0usize;
        let mut hull = 0usize;
        for iy in 0..ny {
            let y = y_lo + (iy as f64 + 0.5) * step;
            for ix in 0..nx {
                let x = x_lo + (ix as f64 + 0.5) * step;
                let in_a = x >= ax0 && x <= ax1 && y >= ay0 && y <= ay1;
                let in_b = x >= bx0 && x <= bx1 && y >= by0 && y <= by1;
                let in_hull = x >= x_lo && x <= x_hi && y >= y_lo && y <= y_hi;
                if in_a && in_b {
                    inter += 1;
                }
                if in_a || in_b {
                    union += 1;
                }
                if in_hull {
                    hull += 1;
                }
            }
        }
        let iou = if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        };
        let giou = iou - (hull - union) as f64 / hull.max(1) as f64;
        (iou, giou)
    }

    #[test]
    fn iou_identical_boxes_is_one() {
        let a = px(3.0, 4.0, 2.0, 5.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn iou_disjoint_boxes_is_zero() {
        let a = px(0.0, 0.0, 2.0, 2.0);
        let b = px(10.0, 10.0, 2.0, 2.0);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn iou_matches_grid_oracle_on_half_overlap() {
        // Boxes (1,1,2,2) and (2,1,2,2): intersection 2, union 6.
        let a = px(1.0, 1.0, 2.0, 2.0);
        let b = px(2.0, 1.0, 2.0, 2.0);
        let got = iou(&a, &b).unwrap();
        let (oracle, _) = grid_iou_giou(&a, &b, 64);
        assert!((got - oracle).abs() < 1e-3, "got {got}, oracle {oracle}");
        assert!((got - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn iou_rejects_mixed_units() {
        let a = px(1.0, 1.0, 2.0, 2.0);
        let b = BBox::normalized(0.5, 0.5, 0.2, 0.2).unwrap();
        assert!(matches!(iou(&a, &b), Err(Error::UnitMismatch(_))));
    }

    #[test]
    fn giou_identical_boxes_is_one() {
        let a = px(3.0, 4.0, 2.0, 5.0);
        assert!((giou(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn giou_decreases_monotonically_with_separation() {
        let a = px(0.0, 0.0, 2.0, 2.0);
        let mut prev = f64::INFINITY;
        for sep in [4.0, 8.0, 16.0, 64.0, 256.0, 4096.0] {
            let b = px(sep, 0.0, 2.0, 2.0);
            let g = giou(&a, &b).unwrap();
            assert!(g < prev, "giou must decrease with separation");
            assert!(g >= -1.0);
            prev = g;
        }
        assert!(prev < -0.99, "giou should approach -1, got {prev}");
    }

    #[test]
    fn giou_matches_grid_oracle_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        // Box coordinates quantized to 1/8 put every corner on the oracle
        // grid, so cell counting is exact rather than approximate.
        let mut q = |lo: i32, hi: i32| rng.gen_range(lo..hi) as f64 / 8.0;
        for _ in 0..40 {
            let a = px(q(0, 64), q(0, 64), q(4, 48), q(4, 48));
            let b = px(q(0, 64), q(0, 64), q(4, 48), q(4, 48));
            let (iou_oracle, giou_oracle) = grid_iou_giou(&a, &b, 16);
            assert!((iou(&a, &b).unwrap() - iou_oracle).abs() < 1e-3);
            assert!((giou(&a, &b).unwrap() - giou_oracle).abs() < 1e-3);
        }
    }

    #[test]
    fn zero_area_boxes_divide_safely() {
        let a = px(1.0, 1.0, 0.0, 0.0);
        let b = px(4.0, 1.0, 0.0, 0.0);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
        let g = giou(&a, &b).unwrap();
        assert!((-1.0..=1.0).contains(&g));
        // Identical degenerate boxes: hull is also empty.
        assert_eq!(giou(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn dilate_small_box_uses_proportional_margin() {
        // 10x10 box: 0.1 * 10 = 1 < 2, so 1 px per side.
        let b = px(50.0, 50.0, 10.0, 10.0);
        let d = dilate(&b, 200.0, 200.0, &DilationConfig::default()).unwrap();
        assert!((d.w - 12.0).abs() < 1e-12);
        assert!((d.h - 12.0).abs() < 1e-12);
    }

    #[test]
    fn dilate_large_box_margin_caps_at_two_px() {
        let b = px(100.0, 100.0, 100.0, 100.0);
        let d = dilate(&b, 400.0, 400.0, &DilationConfig::default()).unwrap();
        assert!((d.w - 104.0).abs() < 1e-12);
        assert!((d.h - 104.0).abs() < 1e-12);
    }

    #[test]
    fn dilate_clips_to_image_bounds() {
        let b = px(2.0, 2.0, 6.0, 6.0);
        let d = dilate(&b, 100.0, 100.0, &DilationConfig::default()).unwrap();
        let (x0, y0, x1, y1) = d.corners();
        assert!(x0 >= 0.0 && y0 >= 0.0);
        assert!(x1 <= 100.0 && y1 <= 100.0);
        assert!(x0.abs() < 1e-12, "left edge should clip at 0");
        assert!(y0.abs() < 1e-12);
    }

    #[test]
    fn floor_mode_uses_constant_as_minimum() {
        let cfg = DilationConfig {
            mode: MarginMode::FloorAtConstant,
            ..Default::default()
        };
        let m = DilationMargins::for_box(10.0, 10.0, &cfg);
        assert_eq!(m.eps_w, 2.0);
        let m = DilationMargins::for_box(100.0, 100.0, &cfg);
        assert_eq!(m.eps_w, 10.0);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_box() -> impl Strategy<Value = BBox> {
            (0.0f64..20.0, 0.0f64..20.0, 0.0f64..10.0, 0.0f64..10.0)
                .prop_map(|(cx, cy, w, h)| BBox::pixel(cx, cy, w, h).unwrap())
        }

        proptest! {
            #[test]
            fn iou_giou_symmetric(a in arb_box(), b in arb_box()) {
                prop_assert_eq!(iou(&a, &b).unwrap(), iou(&b, &a).unwrap());
                prop_assert_eq!(giou(&a, &b).unwrap(), giou(&b, &a).unwrap());
            }

            #[test]
            fn giou_bounded_by_iou(a in arb_box(), b in arb_box()) {
                let i = iou(&a, &b).unwrap();
                let g = giou(&a, &b).unwrap();
                prop_assert!(i <= 1.0 + 1e-12);
                prop_assert!(g <= i + 1e-12);
                prop_assert!(g >= -1.0 - 1e-12);
            }

            #[test]
            fn dilate_never_shrinks(a in arb_box()) {
                // Before clipping the dilated box contains the input; compare
                // against the input clipped to the same image.
                let img = 1000.0;
                let d = dilate(&a, img, img, &DilationConfig::default()).unwrap();
                let (x0, y0, x1, y1) = a.corners();
                let (dx0, dy0, dx1, dy1) = d.corners();
                prop_assert!(dx0 <= x0.clamp(0.0, img) + 1e-12);
                prop_assert!(dy0 <= y0.clamp(0.0, img) + 1e-12);
                prop_assert!(dx1 >= x1.clamp(0.0, img) - 1e-12);
                prop_assert!(dy1 >= y1.clamp(0.0, img) - 1e-12);
            }

            #[test]
            fn corner_round_trip_is_identity(a in arb_box()) {
                let (x0, y0, x1, y1) = a.corners();
                let back = BBox::from_corners(x0, y0, x1, y1, Units::Pixel);
                prop_assert!((back.cx - a.cx).abs() < 1e-9);
                prop_assert!((back.cy - a.cy).abs() < 1e-9);
                prop_assert!((back.w - a.w).abs() < 1e-9);
                prop_assert!((back.h - a.h).abs() < 1e-9);
            }
        }
    }
}
