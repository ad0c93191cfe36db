//! Query-to-ground-truth matching: the class/mask/box assignment cost,
//! Hungarian matching, the two-stage proposal-aware refinement, conditioned
//! query sampling and test-time box NMS.

pub mod conditioned;
pub mod hungarian;

pub use conditioned::{mask_conditioned_queries, ConditionedQuery};
pub use hungarian::Assignment;

use serde::{Deserialize, Serialize};

use crate::config::{FocalConfig, LossWeights, RefinementThresholds};
use crate::error::{Error, Result};
use crate::geometry::iou;
use crate::mask_decode::InstancePrediction;
use crate::rasters::BinaryMask;
use crate::targets::losses::{box_loss, mask_loss};
use crate::targets::GtInstance;

/// Assignment costs with the per-term breakdown retained for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub n_queries: usize,
    pub n_gts: usize,
    /// Row-major `n_queries x n_gts`.
    pub total: Vec<f64>,
    pub class_term: Vec<f64>,
    pub mask_term: Vec<f64>,
    pub box_term: Vec<f64>,
}

impl CostMatrix {
    pub fn at(&self, query: usize, gt: usize) -> f64 {
        self.total[query * self.n_gts + gt]
    }
}

/// Rasterize a full-resolution mask onto a stride grid by cell-center
/// lookup.
pub fn mask_at_grid(mask: &BinaryMask, stride: u32, grid_h: usize, grid_w: usize) -> BinaryMask {
    if stride == 1 && mask.height() == grid_h && mask.width() == grid_w {
        return mask.clone();
    }
    let mut grid = vec![0u8; grid_h * grid_w];
    for (row, chunk) in grid.chunks_mut(grid_w).enumerate() {
        let py = crate::rasters::cell_to_pixel(stride, row as f64).floor() as usize;
        for (col, slot) in chunk.iter_mut().enumerate() {
            let px = crate::rasters::cell_to_pixel(stride, col as f64).floor() as usize;
            *slot = mask.contains(py, px) as u8;
        }
    }
    BinaryMask::encode(&grid, grid_h, grid_w).expect("grid sized above")
}

/// Build the assignment cost between predictions and ground truth:
/// `w_cls * (1 - y[class]) + w_mask * mask_loss + w_box * box_loss`.
/// Ground-truth masks are resampled to each prediction's mask grid and
/// ground-truth boxes normalized by the image size.
pub fn build_cost(
    preds: &[InstancePrediction],
    gts: &[GtInstance],
    weights: &LossWeights,
    image_w: usize,
    image_h: usize,
) -> Result<CostMatrix> {
    let n = preds.len();
    let m = gts.len();
    let mut total = vec![0.0; n * m];
    let mut class_term = vec![0.0; n * m];
    let mut mask_term = vec![0.0; n * m];
    let mut box_term = vec![0.0; n * m];

    for (j, gt) in gts.iter().enumerate() {
        let gt_box = gt.bbox.to_normalized(image_w as f64, image_h as f64)?;
        for (i, pred) in preds.iter().enumerate() {
            let gt_mask = mask_at_grid(
                &gt.mask,
                pred.mask.stride(),
                pred.mask.height(),
                pred.mask.width(),
            );
            let cls = pred
                .class_probs
                .get(gt.class_id as usize)
                .copied()
                .ok_or_else(|| {
                    Error::OutOfBounds(format!(
                        "gt class {} outside {} predicted classes",
                        gt.class_id,
                        pred.class_probs.len()
                    ))
                })?;
            let idx = i * m + j;
            class_term[idx] = 1.0 - cls;
            mask_term[idx] = mask_loss(&pred.mask, &gt_mask)?;
            box_term[idx] = box_loss(&pred.bbox, &gt_box)?;
            total[idx] = weights.class * class_term[idx]
                + weights.mask * mask_term[idx]
                + weights.bbox * box_term[idx];
        }
    }
    Ok(CostMatrix {
        n_queries: n,
        n_gts: m,
        total,
        class_term,
        mask_term,
        box_term,
    })
}

/// Minimum-cost one-to-one assignment of a cost matrix.
pub fn hungarian_assign(cost: &CostMatrix) -> Result<Assignment> {
    hungarian::solve(&cost.total, cost.n_queries, cost.n_gts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStage {
    /// Produced by the base Hungarian assignment.
    Base,
    /// Base match removed by the low-IoU stage.
    RemovedStage1,
    /// Extra supervision match added by the high-IoU stage.
    AddedStage2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub query: usize,
    pub gt: usize,
    /// Box IoU between the prediction and ground truth at match time.
    pub box_iou: f64,
    pub stage: MatchStage,
}

/// The query/ground-truth assignment with stage annotations. `matches`
/// holds the active supervision matches; stage-1 removals move to
/// `removed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MatchSet {
    pub matches: Vec<MatchRecord>,
    pub removed: Vec<MatchRecord>,
    pub unmatched_queries: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

impl MatchSet {
    fn recompute_unmatched(&mut self, n_queries: usize, n_gts: usize) {
        let mut q_used = vec![false; n_queries];
        let mut g_used = vec![false; n_gts];
        for m in &self.matches {
            q_used[m.query] = true;
            g_used[m.gt] = true;
        }
        self.unmatched_queries = (0..n_queries).filter(|&q| !q_used[q]).collect();
        self.unmatched_gts = (0..n_gts).filter(|&g| !g_used[g]).collect();
    }
}

fn pair_box_iou(
    pred: &InstancePrediction,
    gt: &GtInstance,
    image_w: usize,
    image_h: usize,
) -> Result<f64> {
    let gt_box = gt.bbox.to_normalized(image_w as f64, image_h as f64)?;
    iou(&pred.bbox, &gt_box)
}

fn pair_mask_iou(pred: &InstancePrediction, gt: &GtInstance) -> Result<f64> {
    let pred_bin =
        crate::mask_decode::binarize(&pred.mask, &crate::config::BinarizeConfig::default(), None)?;
    let gt_grid = mask_at_grid(
        &gt.mask,
        pred.mask.stride(),
        pred.mask.height(),
        pred.mask.width(),
    );
    pred_bin.iou(&gt_grid)
}

/// Base one-to-one matching: build the cost, run the Hungarian assignment
/// and annotate each match with its box IoU.
pub fn base_match(
    preds: &[InstancePrediction],
    gts: &[GtInstance],
    weights: &LossWeights,
    _focal: &FocalConfig,
    image_w: usize,
    image_h: usize,
) -> Result<MatchSet> {
    let cost = build_cost(preds, gts, weights, image_w, image_h)?;
    let assignment = hungarian_assign(&cost)?;
    let mut set = MatchSet::default();
    for (query, gt) in assignment.pairs {
        let box_iou = pair_box_iou(&preds[query], &gts[gt], image_w, image_h)?;
        set.matches.push(MatchRecord {
            query,
            gt,
            box_iou,
            stage: MatchStage::Base,
        });
    }
    set.recompute_unmatched(preds.len(), gts.len());
    Ok(set)
}

/// Two-stage proposal-aware refinement of a base match set.
///
/// Stage 1 removes active matches whose box IoU falls below `theta_fp`.
/// Stage 2 then gives every query left unmatched (including the ones just
/// removed) a supervision match to its best-overlap ground truth when that
/// overlap exceeds `theta_fn`; several queries may share one ground truth,
/// each query still appears at most once.
pub fn refine_matches(
    base: &MatchSet,
    preds: &[InstancePrediction],
    gts: &[GtInstance],
    thresholds: &RefinementThresholds,
    image_w: usize,
    image_h: usize,
) -> Result<MatchSet> {
    if !thresholds.validate() {
        return Err(Error::InvalidValue(format!(
            "refinement thresholds need 0 <= theta_fp < theta_fn <= 1, got {} / {}",
            thresholds.theta_fp, thresholds.theta_fn
        )));
    }
    let mut refined = MatchSet {
        removed: base.removed.clone(),
        ..Default::default()
    };

    // Stage 1: drop low-overlap base matches.
    for m in &base.matches {
        if m.box_iou < thresholds.theta_fp {
            refined.removed.push(MatchRecord {
                stage: MatchStage::RemovedStage1,
                ..*m
            });
        } else {
            refined.matches.push(*m);
        }
    }

    // Stage 2: recover unmatched queries with a dominant overlap.
    let matched: std::collections::BTreeSet<usize> =
        refined.matches.iter().map(|m| m.query).collect();
    for (query, pred) in preds.iter().enumerate() {
        if matched.contains(&query) {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            let overlap = if thresholds.fn_stage_uses_mask_iou {
                pair_mask_iou(pred, gt)?
            } else {
                pair_box_iou(pred, gt, image_w, image_h)?
            };
            let better = match best {
                None => true,
                Some((_, b)) => overlap > b,
            };
            if better {
                best = Some((g, overlap));
            }
        }
        if let Some((gt, overlap)) = best {
            if overlap > thresholds.theta_fn {
                let box_iou = pair_box_iou(pred, &gts[gt], image_w, image_h)?;
                refined.matches.push(MatchRecord {
                    query,
                    gt,
                    box_iou,
                    stage: MatchStage::AddedStage2,
                });
            }
        }
    }

    refined.matches.sort_by_key(|m| (m.query, m.gt));
    refined.recompute_unmatched(preds.len(), gts.len());
    Ok(refined)
}

/// Greedy confidence-ordered box NMS. Returns the kept indices, sorted by
/// confidence descending (ties keep input order); a prediction survives iff
/// its box IoU with every already-kept box stays at or below the threshold.
pub fn test_time_nms(preds: &[InstancePrediction], iou_threshold: f64) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .confidence
            .partial_cmp(&preds[a].confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for idx in order {
        let mut suppressed = false;
        for &k in &kept {
            if iou(&preds[idx].bbox, &preds[k].bbox)? > iou_threshold {
                suppressed = true;
                break;
            }
        }
        if !suppressed {
            kept.push(idx);
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use crate::rasters::ScalarMap;
    use rand::{Rng, SeedableRng};

    pub(crate) fn gt_square(
        img: usize,
        x0: usize,
        y0: usize,
        side: usize,
        class_id: u32,
    ) -> GtInstance {
        let mut grid = vec![0u8; img * img];
        for row in y0..(y0 + side).min(img) {
            for col in x0..(x0 + side).min(img) {
                grid[row * img + col] = 1;
            }
        }
        GtInstance::from_mask(class_id, true, BinaryMask::encode(&grid, img, img).unwrap()).unwrap()
    }

    /// Prediction whose mask mirrors a pixel box on a stride-4 grid.
    pub(crate) fn pred_for_box(
        img: usize,
        bbox_px: (f64, f64, f64, f64),
        class_probs: Vec<f64>,
    ) -> InstancePrediction {
        let (cx, cy, w, h) = bbox_px;
        let grid_dim = img / 4;
        let mut mask = ScalarMap::zeros(4, grid_dim, grid_dim).unwrap();
        for row in 0..grid_dim {
            for col in 0..grid_dim {
                let px = (col as f64 + 0.5) * 4.0;
                let py = (row as f64 + 0.5) * 4.0;
                let inside = px >= cx - w / 2.0
                    && px <= cx + w / 2.0
                    && py >= cy - h / 2.0
                    && py <= cy + h / 2.0;
                mask.set(row, col, if inside { 0.95 } else { 0.02 });
            }
        }
        let bbox = BBox::pixel(cx, cy, w, h)
            .unwrap()
            .to_normalized(img as f64, img as f64)
            .unwrap();
        InstancePrediction::new(class_probs, bbox, mask, true).unwrap()
    }

    #[test]
    fn perfect_prediction_minimizes_its_cost_column() {
        let img = 64;
        let gt = gt_square(img, 20, 20, 16, 1);
        let perfect = pred_for_box(img, (28.0, 28.0, 16.0, 16.0), vec![0.01, 0.99]);
        let off = pred_for_box(img, (48.0, 12.0, 10.0, 10.0), vec![0.9, 0.05]);
        let cost = build_cost(&[perfect, off], &[gt], &LossWeights::default(), img, img).unwrap();
        assert!(cost.at(0, 0) < cost.at(1, 0));
    }

    #[test]
    fn single_entry_cost_recombines_component_terms() {
        let img = 64;
        let gt = gt_square(img, 8, 16, 20, 0);
        let pred = pred_for_box(img, (20.0, 30.0, 18.0, 22.0), vec![0.7, 0.2]);
        let weights = LossWeights::default();
        let cost = build_cost(
            std::slice::from_ref(&pred),
            std::slice::from_ref(&gt),
            &weights,
            img,
            img,
        )
        .unwrap();

        let gt_mask = mask_at_grid(&gt.mask, 4, pred.mask.height(), pred.mask.width());
        let expect_class = 1.0 - pred.class_probs[0];
        let expect_mask = mask_loss(&pred.mask, &gt_mask).unwrap();
        let expect_box = box_loss(
            &pred.bbox,
            &gt.bbox.to_normalized(img as f64, img as f64).unwrap(),
        )
        .unwrap();
        let expect =
            weights.class * expect_class + weights.mask * expect_mask + weights.bbox * expect_box;
        assert!((cost.at(0, 0) - expect).abs() < 1e-12);
        assert_eq!(cost.class_term[0], expect_class);
    }

    #[test]
    fn permuting_gt_order_permutes_columns() {
        let img = 64;
        let gts = vec![gt_square(img, 4, 4, 12, 0), gt_square(img, 40, 40, 20, 1)];
        let preds = vec![
            pred_for_box(img, (10.0, 10.0, 12.0, 12.0), vec![0.8, 0.1]),
            pred_for_box(img, (50.0, 50.0, 20.0, 20.0), vec![0.2, 0.7]),
        ];
        let weights = LossWeights::default();
        let fwd = build_cost(&preds, &gts, &weights, img, img).unwrap();
        let rev_gts = vec![gts[1].clone(), gts[0].clone()];
        let rev = build_cost(&preds, &rev_gts, &weights, img, img).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(fwd.at(i, j), rev.at(i, 1 - j));
            }
        }
    }

    #[test]
    fn stage1_removes_low_iou_matches() {
        let img = 64;
        let gt = gt_square(img, 8, 8, 16, 0);
        // Prediction far from the GT: forced base match with IoU ~0.
        let pred = pred_for_box(img, (52.0, 52.0, 12.0, 12.0), vec![0.9]);
        let base = base_match(
            std::slice::from_ref(&pred),
            std::slice::from_ref(&gt),
            &LossWeights::default(),
            &FocalConfig::default(),
            img,
            img,
        )
        .unwrap();
        assert_eq!(base.matches.len(), 1);
        assert!(base.matches[0].box_iou < 0.25);

        let refined = refine_matches(
            &base,
            &[pred],
            &[gt],
            &RefinementThresholds::default(),
            img,
            img,
        )
        .unwrap();
        assert!(refined.matches.is_empty());
        assert_eq!(refined.removed.len(), 1);
        assert_eq!(refined.removed[0].stage, MatchStage::RemovedStage1);
        assert_eq!(refined.unmatched_queries, vec![0]);
        assert_eq!(refined.unmatched_gts, vec![0]);
    }

    #[test]
    fn stage2_adds_high_iou_unmatched_queries() {
        let img = 64;
        let gt = gt_square(img, 16, 16, 24, 0);
        // Two near-identical predictions on the same GT; Hungarian matches
        // one, stage 2 must recover the other.
        let a = pred_for_box(img, (28.0, 28.0, 24.0, 24.0), vec![0.95]);
        let b = pred_for_box(img, (28.5, 28.0, 24.0, 24.0), vec![0.90]);
        let base = base_match(
            &[a.clone(), b.clone()],
            std::slice::from_ref(&gt),
            &LossWeights::default(),
            &FocalConfig::default(),
            img,
            img,
        )
        .unwrap();
        assert_eq!(base.matches.len(), 1);
        assert_eq!(base.unmatched_queries.len(), 1);

        let refined = refine_matches(
            &base,
            &[a, b],
            &[gt],
            &RefinementThresholds::default(),
            img,
            img,
        )
        .unwrap();
        assert_eq!(refined.matches.len(), 2, "both queries supervise the GT");
        assert!(refined
            .matches
            .iter()
            .any(|m| m.stage == MatchStage::AddedStage2 && m.box_iou > 0.80));
        // Queries appear at most once.
        let mut queries: Vec<usize> = refined.matches.iter().map(|m| m.query).collect();
        queries.dedup();
        assert_eq!(queries.len(), refined.matches.len());
    }

    #[test]
    fn drift_fixture_removes_fp_and_keeps_both_a_queries() {
        // 2 GTs, 3 queries: two sit on GT A at high IoU, one forced onto
        // GT B at low IoU. After refinement both A-queries supervise A and
        // the bad B match is gone.
        let img = 128;
        let gt_a = gt_square(img, 16, 16, 32, 0);
        let gt_b = gt_square(img, 80, 80, 32, 1);
        let q0 = pred_for_box(img, (32.0, 32.0, 32.0, 32.0), vec![0.9, 0.05]); // on A
        let q1 = pred_for_box(img, (33.0, 32.0, 32.0, 32.0), vec![0.85, 0.05]); // on A
        let q2 = pred_for_box(img, (20.0, 90.0, 20.0, 20.0), vec![0.5, 0.4]); // far from B
        let preds = vec![q0, q1, q2];
        let gts = vec![gt_a, gt_b];

        let base = base_match(
            &preds,
            &gts,
            &LossWeights::default(),
            &FocalConfig::default(),
            img,
            img,
        )
        .unwrap();
        // Base: one-to-one, so one A query matched, q2 forced onto B.
        assert_eq!(base.matches.len(), 2);
        let forced = base.matches.iter().find(|m| m.gt == 1).unwrap();
        assert!(forced.box_iou < 0.25);

        let refined = refine_matches(
            &base,
            &preds,
            &gts,
            &RefinementThresholds::default(),
            img,
            img,
        )
        .unwrap();
        let a_matches: Vec<_> = refined.matches.iter().filter(|m| m.gt == 0).collect();
        assert_eq!(a_matches.len(), 2);
        assert!(a_matches.iter().any(|m| m.stage == MatchStage::Base));
        assert!(a_matches.iter().any(|m| m.stage == MatchStage::AddedStage2));
        assert!(refined.matches.iter().all(|m| m.gt != 1));
        assert_eq!(refined.removed.len(), 1);
        assert_eq!(refined.unmatched_gts, vec![1]);
    }

    #[test]
    fn mid_band_matches_survive_unchanged() {
        let img = 64;
        let gt = gt_square(img, 16, 16, 24, 0);
        // Overlapping but offset: IoU lands between the two thresholds.
        let pred = pred_for_box(img, (34.0, 34.0, 24.0, 24.0), vec![0.9]);
        let base = base_match(
            std::slice::from_ref(&pred),
            std::slice::from_ref(&gt),
            &LossWeights::default(),
            &FocalConfig::default(),
            img,
            img,
        )
        .unwrap();
        let iou0 = base.matches[0].box_iou;
        assert!(
            (0.25..=0.80).contains(&iou0),
            "fixture IoU {iou0} should sit mid-band"
        );
        let refined = refine_matches(
            &base,
            &[pred],
            &[gt],
            &RefinementThresholds::default(),
            img,
            img,
        )
        .unwrap();
        assert_eq!(refined.matches, base.matches);
    }

    #[test]
    fn nms_keeps_highest_confidence_duplicate() {
        let img = 64;
        let a = pred_for_box(img, (30.0, 30.0, 20.0, 20.0), vec![0.9]);
        let b = pred_for_box(img, (30.0, 30.0, 20.0, 20.0), vec![0.8]);
        let kept = test_time_nms(&[a, b], 0.7).unwrap();
        assert_eq!(kept, vec![0]);
    }

    #[test]
    fn nms_keeps_disjoint_boxes() {
        let img = 64;
        let a = pred_for_box(img, (10.0, 10.0, 10.0, 10.0), vec![0.9]);
        let b = pred_for_box(img, (50.0, 50.0, 10.0, 10.0), vec![0.3]);
        let kept = test_time_nms(&[a, b], 0.7).unwrap();
        assert_eq!(kept, vec![0, 1]);
    }

    #[test]
    fn nms_matches_quadratic_reference() {
        let img = 256;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(71);
        let preds: Vec<InstancePrediction> = (0..20)
            .map(|_| {
                pred_for_box(
                    img,
                    (
                        rng.gen_range(30.0..220.0),
                        rng.gen_range(30.0..220.0),
                        rng.gen_range(10.0..60.0),
                        rng.gen_range(10.0..60.0),
                    ),
                    vec![rng.gen_range(0.05..1.0)],
                )
            })
            .collect();
        let thresh = 0.5;
        let kept = test_time_nms(&preds, thresh).unwrap();

        // O(n^2) reference.
        let mut order: Vec<usize> = (0..preds.len()).collect();
        order.sort_by(|&a, &b| {
            preds[b]
                .confidence
                .partial_cmp(&preds[a].confidence)
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut reference = Vec::new();
        for idx in order {
            if reference
                .iter()
                .all(|&k: &usize| iou(&preds[idx].bbox, &preds[k].bbox).unwrap() <= thresh)
            {
                reference.push(idx);
            }
        }
        assert_eq!(kept, reference);

        // Contract: subset, confidence-sorted, pairwise IoU below threshold.
        for pair in kept.windows(2) {
            assert!(preds[pair[0]].confidence >= preds[pair[1]].confidence);
        }
        for (i, &a) in kept.iter().enumerate() {
            for &b in &kept[i + 1..] {
                assert!(iou(&preds[a].bbox, &preds[b].bbox).unwrap() <= thresh);
            }
        }
    }
}
