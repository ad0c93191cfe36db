//! Object-centric proposal extraction: peak detection on per-level center
//! heatmaps, cross-level ranking, positional-query readout from regression
//! maps, instance-voting masks and objectness-weighted feature pooling.

use serde::{Deserialize, Serialize};

use crate::config::{PeakConfig, PipelineConfig};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::rasters::{
    cell_to_pixel, BinaryMask, FeatureMap, RegressionMap, ScalarMap, PYRAMID_STRIDES,
};

/// A heatmap cell that won its local window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub row: usize,
    pub col: usize,
    pub probability: f64,
}

/// A selected proposal before query extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalSite {
    pub stride: u32,
    pub row: usize,
    pub col: usize,
    pub probability: f64,
}

/// A fully decoded proposal: score, positional query, content query and the
/// level-grid voting mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub site: ProposalSite,
    /// Positional query in normalized image units.
    pub bbox: BBox,
    /// Set when a negative size channel had to be clamped to zero.
    pub size_clamped: bool,
    pub content_query: Vec<f64>,
    /// Set when the pooling weights summed to zero.
    pub content_empty: bool,
    /// Instance-voting mask on the proposal's level grid.
    pub mask: BinaryMask,
}

/// Head outputs of one pyramid level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelHeads {
    pub center: ScalarMap,
    pub regression: RegressionMap,
    pub objectness: ScalarMap,
    pub features: FeatureMap,
}

impl LevelHeads {
    pub fn stride(&self) -> u32 {
        self.center.stride()
    }

    fn validate(&self) -> Result<()> {
        let (h, w, s) = (
            self.center.height(),
            self.center.width(),
            self.center.stride(),
        );
        let same = self.regression.height() == h
            && self.regression.width() == w
            && self.regression.stride() == s
            && self.objectness.height() == h
            && self.objectness.width() == w
            && self.objectness.stride() == s
            && self.features.height() == h
            && self.features.width() == w
            && self.features.stride() == s;
        if !same {
            return Err(Error::ShapeMismatch(format!(
                "level heads at stride {s} have inconsistent grids"
            )));
        }
        Ok(())
    }
}

/// Decoded query set: opaque stuff content queries plus ranked thing
/// proposals.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySet {
    pub stuff: Vec<Vec<f64>>,
    pub things: Vec<Proposal>,
}

/// Strict-maximum peaks of a center heatmap.
///
/// A cell is a peak when its value strictly exceeds every other cell in the
/// centered `window x window` neighborhood (clipped at borders) and clears
/// the probability floor. Peaks come back sorted by probability descending,
/// ties in row-major order.
pub fn heatmap_nms(center: &ScalarMap, cfg: &PeakConfig) -> Result<Vec<Peak>> {
    if cfg.window == 0 || cfg.window.is_multiple_of(2) {
        return Err(Error::InvalidValue(format!(
            "nms window must be odd and positive, got {}",
            cfg.window
        )));
    }
    let half = (cfg.window / 2) as isize;
    let (h, w) = (center.height(), center.width());
    let mut peaks = Vec::new();
    for row in 0..h {
        for col in 0..w {
            let value = center.get(row, col);
            if (value as f64) <= cfg.probability_floor {
                continue;
            }
            let mut is_max = true;
            'scan: for dr in -half..=half {
                for dc in -half..=half {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let nr = row as isize + dr;
                    let nc = col as isize + dc;
                    if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                        continue;
                    }
                    if center.get(nr as usize, nc as usize) >= value {
                        is_max = false;
                        break 'scan;
                    }
                }
            }
            if is_max {
                peaks.push(Peak {
                    row,
                    col,
                    probability: value as f64,
                });
            }
        }
    }
    peaks.sort_by(|a, b| {
        b.probability
            .partial_cmp(&a.probability)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| (a.row, a.col).cmp(&(b.row, b.col)))
    });
    Ok(peaks)
}

/// Merge per-level peaks into a single ranking and keep the top `n_max`.
///
/// Order: probability descending; ties by stride ascending (finer level
/// first), then row-major cell order.
pub fn rank_and_select(per_level: &[(u32, Vec<Peak>)], n_max: usize) -> Vec<ProposalSite> {
    let mut sites: Vec<ProposalSite> = per_level
        .iter()
        .flat_map(|(stride, peaks)| {
            peaks.iter().map(move |p| ProposalSite {
                stride: *stride,
                row: p.row,
                col: p.col,
                probability: p.probability,
            })
        })
        .collect();
    sites.sort_by(|a, b| {
        b.probability
            .partial_cmp(&a.probability)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| (a.stride, a.row, a.col).cmp(&(b.stride, b.row, b.col)))
    });
    sites.truncate(n_max);
    sites
}

/// Read the positional query at a proposal cell: center = cell center plus
/// the regressed offset, size = the regressed extents, converted to
/// normalized image units. Negative sizes clamp to zero and set the flag.
pub fn positional_query(
    regression: &RegressionMap,
    row: usize,
    col: usize,
    image_w: usize,
    image_h: usize,
) -> Result<(BBox, bool)> {
    if row >= regression.height() || col >= regression.width() {
        return Err(Error::OutOfBounds(format!(
            "proposal cell ({row}, {col}) outside {}x{} regression map",
            regression.height(),
            regression.width()
        )));
    }
    let cell = regression.get(row, col);
    let stride = regression.stride();
    let cx = cell_to_pixel(stride, col as f64 + cell.dx as f64);
    let cy = cell_to_pixel(stride, row as f64 + cell.dy as f64);
    let clamped = cell.w < 0.0 || cell.h < 0.0;
    let w = (cell.w.max(0.0) as f64) * stride as f64;
    let h = (cell.h.max(0.0) as f64) * stride as f64;
    let bbox = BBox::pixel(cx, cy, w, h)?.to_normalized(image_w as f64, image_h as f64)?;
    Ok((bbox, clamped))
}

/// Instance voting: each cell's regressed center is matched to the nearest
/// proposal cell; the cell joins that proposal's mask when the distance is
/// below `theta` (cells). The returned masks are pairwise disjoint and
/// parallel to `sites`.
pub fn instance_voting(
    regression: &RegressionMap,
    sites: &[(usize, usize)],
    theta: f64,
) -> Result<Vec<BinaryMask>> {
    let (h, w) = (regression.height(), regression.width());
    let mut grids: Vec<Vec<u8>> = vec![vec![0u8; h * w]; sites.len()];
    if !sites.is_empty() {
        for row in 0..h {
            for col in 0..w {
                let cell = regression.get(row, col);
                let rx = col as f64 + cell.dx as f64;
                let ry = row as f64 + cell.dy as f64;
                let mut best: Option<(usize, f64)> = None;
                for (i, &(prow, pcol)) in sites.iter().enumerate() {
                    let d = ((pcol as f64 - rx).powi(2) + (prow as f64 - ry).powi(2)).sqrt();
                    let better = match best {
                        None => true,
                        Some((_, bd)) => d < bd,
                    };
                    if better {
                        best = Some((i, d));
                    }
                }
                if let Some((i, d)) = best {
                    if d < theta {
                        grids[i][row * w + col] = 1;
                    }
                }
            }
        }
    }
    grids
        .into_iter()
        .map(|g| BinaryMask::encode(&g, h, w))
        .collect()
}

/// Content query: objectness-weighted pooling of level features over the
/// proposal's voting mask, `sum_j m(j) * S(j) * P(j)`. Unnormalized unless
/// `normalize` divides by the total weight. A zero total weight yields the
/// zero vector with the flag set.
pub fn content_query(
    features: &FeatureMap,
    objectness: &ScalarMap,
    mask: &BinaryMask,
    normalize: bool,
) -> Result<(Vec<f64>, bool)> {
    if features.height() != objectness.height()
        || features.width() != objectness.width()
        || features.height() != mask.height()
        || features.width() != mask.width()
    {
        return Err(Error::ShapeMismatch(
            "content query input grids differ".into(),
        ));
    }
    let mut query = vec![0.0f64; features.channels()];
    let mut weight_sum = 0.0f64;
    for &(start, len) in mask.runs() {
        for idx in start as usize..(start + len) as usize {
            let row = idx / features.width();
            let col = idx % features.width();
            let weight = objectness.get(row, col) as f64;
            if weight == 0.0 {
                continue;
            }
            weight_sum += weight;
            for (q, v) in query.iter_mut().zip(features.cell(row, col)) {
                *q += weight * *v as f64;
            }
        }
    }
    if weight_sum == 0.0 {
        return Ok((vec![0.0; features.channels()], true));
    }
    if normalize {
        for q in query.iter_mut() {
            *q /= weight_sum;
        }
    }
    Ok((query, false))
}

/// Full decode: per-level NMS, global ranking, then per-proposal positional
/// query, voting mask and content query. Pure in its inputs; the proposal
/// list keeps the global rank order.
pub fn decode_all(
    levels: &[LevelHeads],
    stuff_queries: Vec<Vec<f64>>,
    image_w: usize,
    image_h: usize,
    config: &PipelineConfig,
) -> Result<QuerySet> {
    for stride in PYRAMID_STRIDES {
        match levels.iter().filter(|l| l.stride() == stride).count() {
            0 => return Err(Error::MissingLevel(stride)),
            1 => {}
            n => {
                return Err(Error::InvalidValue(format!(
                    "{n} level heads share stride {stride}"
                )))
            }
        }
    }
    let mut ordered: Vec<&LevelHeads> = levels.iter().collect();
    ordered.sort_by_key(|l| l.stride());
    for level in &ordered {
        level.validate()?;
    }

    let per_level: Vec<(u32, Vec<Peak>)> = ordered
        .iter()
        .map(|level| Ok((level.stride(), heatmap_nms(&level.center, &config.peaks)?)))
        .collect::<Result<_>>()?;
    let sites = rank_and_select(&per_level, config.queries.things);

    // Voting runs per level among that level's selected proposals; the
    // voting outcome must not depend on what other levels selected.
    let mut things: Vec<Option<Proposal>> = vec![None; sites.len()];
    for level in &ordered {
        let stride = level.stride();
        let members: Vec<usize> = (0..sites.len())
            .filter(|&i| sites[i].stride == stride)
            .collect();
        if members.is_empty() {
            continue;
        }
        let cells: Vec<(usize, usize)> = members
            .iter()
            .map(|&i| (sites[i].row, sites[i].col))
            .collect();
        let theta = config.voting_theta_factor.0 * level.center.width() as f64;
        let masks = instance_voting(&level.regression, &cells, theta)?;
        for (&site_idx, mask) in members.iter().zip(masks) {
            let site = sites[site_idx];
            let (bbox, size_clamped) =
                positional_query(&level.regression, site.row, site.col, image_w, image_h)?;
            let (query, content_empty) = content_query(
                &level.features,
                &level.objectness,
                &mask,
                config.normalize_content_query,
            )?;
            things[site_idx] = Some(Proposal {
                site,
                bbox,
                size_clamped,
                content_query: query,
                content_empty,
                mask,
            });
        }
    }

    Ok(QuerySet {
        stuff: stuff_queries,
        things: things
            .into_iter()
            .map(|p| p.expect("every site decoded"))
            .collect(),
    })
}
