//! Mask-conditioned query sampling: training-time queries built by reading
//! pyramid features at random locations inside ground-truth masks, paired
//! with perturbed ground-truth boxes. Deterministic for a fixed seed.

use rand::Rng;

use crate::config::{BoxNoise, PipelineConfig};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::rasters::FeatureMap;
use crate::rng::rng_from_seed;
use crate::targets::GtInstance;

/// One sampled query with its supervision target.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedQuery {
    pub content_query: Vec<f64>,
    /// Perturbed ground-truth box in normalized units.
    pub positional_query: BBox,
    pub gt_index: usize,
    /// Stride of the level the content query was read from.
    pub stride: u32,
}

/// Foreground cells of a ground-truth mask on one level grid.
fn foreground_cells(gt: &GtInstance, level: &FeatureMap) -> Vec<(usize, usize)> {
    let stride = level.stride();
    let mut cells = Vec::new();
    for row in 0..level.height() {
        let py = crate::rasters::cell_to_pixel(stride, row as f64).floor() as usize;
        for col in 0..level.width() {
            let px = crate::rasters::cell_to_pixel(stride, col as f64).floor() as usize;
            if gt.mask.contains(py, px) {
                cells.push((row, col));
            }
        }
    }
    cells
}

fn perturb_box(bbox: &BBox, noise: &BoxNoise, rng: &mut impl Rng) -> BBox {
    let dx = rng.gen_range(-1.0..=1.0) * noise.shift * bbox.w / 2.0;
    let dy = rng.gen_range(-1.0..=1.0) * noise.shift * bbox.h / 2.0;
    let sw = 1.0 + rng.gen_range(-1.0..=1.0) * noise.scale;
    let sh = 1.0 + rng.gen_range(-1.0..=1.0) * noise.scale;
    BBox {
        cx: bbox.cx + dx,
        cy: bbox.cy + dy,
        w: (bbox.w * sw).max(0.0),
        h: (bbox.h * sh).max(0.0),
        units: bbox.units,
    }
}

/// Sample `count` conditioned queries. Each sample picks a ground truth and
/// a pyramid level uniformly, then a uniform foreground cell of the mask at
/// that level's resolution; the cell's feature vector becomes the content
/// query and the perturbed ground-truth box the positional query. When the
/// mask is empty at the chosen level, the remaining levels are tried finest
/// first; a mask empty at every level is an error.
#[allow(clippy::too_many_arguments)]
pub fn mask_conditioned_queries(
    gts: &[GtInstance],
    pyramid: &[FeatureMap],
    count: usize,
    noise: &BoxNoise,
    image_w: usize,
    image_h: usize,
    config: &PipelineConfig,
    seed: u64,
) -> Result<Vec<ConditionedQuery>> {
    if count > config.queries.conditioned {
        return Err(Error::InvalidValue(format!(
            "requested {count} conditioned queries, budget is {}",
            config.queries.conditioned
        )));
    }
    if count > 0 && gts.is_empty() {
        return Err(Error::EmptyDomain(
            "no ground-truth instances to sample".into(),
        ));
    }
    let mut levels: Vec<&FeatureMap> = pyramid.iter().collect();
    levels.sort_by_key(|l| l.stride());

    let mut rng = rng_from_seed(seed);
    let mut queries = Vec::with_capacity(count);
    for _ in 0..count {
        let gt_index = rng.gen_range(0..gts.len());
        let gt = &gts[gt_index];

        let first_choice = rng.gen_range(0..levels.len());
        // The chosen level first, then the remaining ones finest-first.
        let mut attempt_order = vec![first_choice];
        attempt_order.extend((0..levels.len()).filter(|&l| l != first_choice));

        let mut sample = None;
        for level_idx in attempt_order {
            let level = levels[level_idx];
            let cells = foreground_cells(gt, level);
            if cells.is_empty() {
                continue;
            }
            let (row, col) = cells[rng.gen_range(0..cells.len())];
            let content = level.bilinear_read(col as f64, row as f64)?;
            sample = Some((content, level.stride()));
            break;
        }
        let Some((content_query, stride)) = sample else {
            return Err(Error::EmptyDomain(format!(
                "ground truth {gt_index} has no foreground cell at any pyramid level"
            )));
        };

        let perturbed = perturb_box(&gt.bbox, noise, &mut rng);
        let positional_query = perturbed.to_normalized(image_w as f64, image_h as f64)?;
        queries.push(ConditionedQuery {
            content_query,
            positional_query,
            gt_index,
            stride,
        });
    }
    Ok(queries)
}
