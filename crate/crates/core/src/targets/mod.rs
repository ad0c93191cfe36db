//! Supervision-target synthesis for the per-level proposal heads: Gaussian
//! center maps, center/size regression, objectness and per-level ignore
//! regions, gated by each level's object-size range.

pub mod losses;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::rasters::{pixel_to_cell, BinaryMask, RegressionCell, RegressionMap, ScalarMap};

/// Gaussian variance of center targets, in level-grid cells.
pub const CENTER_SIGMA_SQ: f64 = 1.0;
/// Contributions beyond this many sigmas are truncated to zero.
const GAUSSIAN_CUTOFF_SIGMAS: f64 = 4.0;

/// One ground-truth segment with its full-resolution mask and tight box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtInstance {
    pub class_id: u32,
    pub is_thing: bool,
    pub mask: BinaryMask,
    /// Tight pixel bounding box of the mask.
    pub bbox: BBox,
}

impl GtInstance {
    /// Build from a mask; the box is derived as the mask's tight bounds.
    pub fn from_mask(class_id: u32, is_thing: bool, mask: BinaryMask) -> Result<Self> {
        let (x0, y0, x1, y1) = mask
            .tight_bbox()
            .ok_or_else(|| Error::InvalidValue("ground-truth mask is empty".into()))?;
        let bbox = BBox::from_corners(
            x0 as f64,
            y0 as f64,
            x1 as f64,
            y1 as f64,
            crate::geometry::Units::Pixel,
        );
        Ok(Self {
            class_id,
            is_thing,
            mask,
            bbox,
        })
    }

    /// Bounding-box diagonal in original-image pixels.
    pub fn diagonal(&self) -> f64 {
        self.bbox.diagonal()
    }
}

/// Object-size band supervised at one pyramid level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSizeRange {
    pub stride: u32,
    pub d_min: f64,
    pub d_max: f64,
}

impl LevelSizeRange {
    pub fn contains(&self, diagonal: f64) -> bool {
        diagonal >= self.d_min && diagonal <= self.d_max
    }
}

/// The per-level size ranges, finest level first. Adjacent bands overlap so
/// objects near a boundary are supervised at both levels.
pub fn level_ranges() -> [LevelSizeRange; 5] {
    [
        LevelSizeRange {
            stride: 4,
            d_min: 0.0,
            d_max: 64.0,
        },
        LevelSizeRange {
            stride: 8,
            d_min: 32.0,
            d_max: 128.0,
        },
        LevelSizeRange {
            stride: 16,
            d_min: 64.0,
            d_max: 256.0,
        },
        LevelSizeRange {
            stride: 32,
            d_min: 128.0,
            d_max: 512.0,
        },
        LevelSizeRange {
            stride: 64,
            d_min: 256.0,
            d_max: f64::INFINITY,
        },
    ]
}

/// Strides whose size band contains the given diagonal.
pub fn strides_for_diagonal(diagonal: f64) -> Vec<u32> {
    level_ranges()
        .iter()
        .filter(|r| r.contains(diagonal))
        .map(|r| r.stride)
        .collect()
}

/// All supervision targets of one pyramid level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelTargets {
    pub stride: u32,
    pub center: ScalarMap,
    pub regression: RegressionMap,
    pub objectness: ScalarMap,
    /// Cells of out-of-range objects, excluded from regression/objectness
    /// losses.
    pub ignore: BinaryMask,
}

/// Snap an instance's box center to its nearest cell of a stride-`s` grid.
fn center_cell(instance: &GtInstance, stride: u32, map_h: usize, map_w: usize) -> (usize, usize) {
    let cx = pixel_to_cell(stride, instance.bbox.cx).round();
    let cy = pixel_to_cell(stride, instance.bbox.cy).round();
    let col = (cx.max(0.0) as usize).min(map_w.saturating_sub(1));
    let row = (cy.max(0.0) as usize).min(map_h.saturating_sub(1));
    (row, col)
}

/// Gaussian center-target map of one level. Each in-range thing instance
/// plants an isotropic Gaussian (variance [`CENTER_SIGMA_SQ`] in cells) at
/// its snapped center cell; overlapping Gaussians combine with per-pixel
/// max. Out-of-range centers are left at zero.
pub fn center_targets(
    instances: &[GtInstance],
    level: &LevelSizeRange,
    map_h: usize,
    map_w: usize,
) -> Result<ScalarMap> {
    let mut map = ScalarMap::zeros(level.stride, map_h, map_w)?;
    let radius = (GAUSSIAN_CUTOFF_SIGMAS * CENTER_SIGMA_SQ.sqrt()).ceil() as isize;
    for instance in instances {
        if !instance.is_thing || !level.contains(instance.diagonal()) {
            continue;
        }
        let (crow, ccol) = center_cell(instance, level.stride, map_h, map_w);
        let r0 = crow as isize - radius;
        let r1 = crow as isize + radius;
        let c0 = ccol as isize - radius;
        let c1 = ccol as isize + radius;
        for row in r0.max(0)..=r1.min(map_h as isize - 1) {
            for col in c0.max(0)..=c1.min(map_w as isize - 1) {
                let dr = row as f64 - crow as f64;
                let dc = col as f64 - ccol as f64;
                let d_sq = dr * dr + dc * dc;
                if d_sq > (radius * radius) as f64 {
                    continue;
                }
                let value = (-0.5 * d_sq / CENTER_SIGMA_SQ).exp() as f32;
                let (row, col) = (row as usize, col as usize);
                if value > map.get(row, col) {
                    map.set(row, col, value);
                }
            }
        }
    }
    Ok(map)
}

/// Regression, objectness and ignore targets of one level.
///
/// A cell belongs to the smallest-area instance whose mask covers the
/// cell-center pixel. In-range thing cells carry the offset to the box
/// center and the box size (cell units) plus objectness 1; cells of
/// out-of-range things go to the ignore mask; stuff cells supervise
/// objectness 0.
pub fn regression_objectness_targets(
    instances: &[GtInstance],
    level: &LevelSizeRange,
    map_h: usize,
    map_w: usize,
) -> Result<LevelTargets> {
    let mut regression = RegressionMap::zeros(level.stride, map_h, map_w)?;
    let mut objectness = ScalarMap::zeros(level.stride, map_h, map_w)?;
    let mut ignore_grid = vec![0u8; map_h * map_w];

    // Sort instance indices so the smallest area wins overlap ties
    // deterministically (area, then input order).
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.sort_by_key(|&i| (instances[i].mask.area(), i));

    let stride = level.stride;
    for row in 0..map_h {
        for col in 0..map_w {
            let px = crate::rasters::cell_to_pixel(stride, col as f64).floor() as usize;
            let py = crate::rasters::cell_to_pixel(stride, row as f64).floor() as usize;
            let owner = order
                .iter()
                .copied()
                .find(|&i| instances[i].mask.contains(py, px));
            let Some(idx) = owner else { continue };
            let instance = &instances[idx];
            if !instance.is_thing {
                continue; // stuff: objectness stays 0, no regression target
            }
            if level.contains(instance.diagonal()) {
                objectness.set(row, col, 1.0);
                let bx = pixel_to_cell(stride, instance.bbox.cx);
                let by = pixel_to_cell(stride, instance.bbox.cy);
                regression.set(
                    row,
                    col,
                    RegressionCell {
                        dx: (bx - col as f64) as f32,
                        dy: (by - row as f64) as f32,
                        w: (instance.bbox.w / stride as f64) as f32,
                        h: (instance.bbox.h / stride as f64) as f32,
                    },
                );
            } else {
                ignore_grid[row * map_w + col] = 1;
            }
        }
    }

    let center = center_targets(instances, level, map_h, map_w)?;
    let ignore = BinaryMask::encode(&ignore_grid, map_h, map_w)?;
    Ok(LevelTargets {
        stride,
        center,
        regression,
        objectness,
        ignore,
    })
}

/// Targets for every pyramid level. Map dimensions are derived from the
/// image size by ceiling division per stride.
pub fn all_level_targets(
    instances: &[GtInstance],
    image_w: usize,
    image_h: usize,
) -> Result<Vec<LevelTargets>> {
    level_ranges()
        .iter()
        .map(|range| {
            let s = range.stride as usize;
            let map_h = image_h.div_ceil(s);
            let map_w = image_w.div_ceil(s);
            regression_objectness_targets(instances, range, map_h, map_w)
        })
        .collect()
}
