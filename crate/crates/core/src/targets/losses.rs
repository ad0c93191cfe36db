//! Scalar loss evaluators. These score predictions against targets for
//! matching costs, diagnostics and acceptance checks; nothing here is
//! differentiable machinery.

use crate::config::{FocalConfig, LossWeights};
use crate::error::{Error, Result};
use crate::geometry::{giou, BBox};
use crate::rasters::{BinaryMask, RegressionMap, ScalarMap};
use crate::targets::LevelTargets;

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before
/// taking logs.
pub const PROB_CLAMP: f64 = 1e-6;
/// Additive smoothing in the DICE numerator and denominator.
pub const DICE_SMOOTHING: f64 = 1.0;

/// A loss value plus a flag marking an empty averaging domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub empty_domain: bool,
}

impl LossValue {
    fn of(value: f64) -> Self {
        Self {
            value,
            empty_domain: false,
        }
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Focal term for one probability/target pair; `target` may be soft.
/// At `gamma = 0`, `alpha = 0.5` this is half the binary cross-entropy.
pub fn focal_term(pred: f64, target: f64, cfg: &FocalConfig) -> f64 {
    let p = clamp_prob(pred);
    -cfg.alpha * target * (1.0 - p).powf(cfg.gamma) * p.ln()
        - (1.0 - cfg.alpha) * (1.0 - target) * p.powf(cfg.gamma) * (1.0 - p).ln()
}

/// Mean pixel-wise focal loss over non-ignored cells. An empty domain
/// yields zero with `empty_domain` set.
pub fn focal_loss(
    pred: &ScalarMap,
    target: &ScalarMap,
    ignore: Option<&BinaryMask>,
    cfg: &FocalConfig,
) -> Result<LossValue> {
    if pred.height() != target.height() || pred.width() != target.width() {
        return Err(Error::ShapeMismatch(format!(
            "focal pred {}x{} vs target {}x{}",
            pred.height(),
            pred.width(),
            target.height(),
            target.width()
        )));
    }
    if let Some(mask) = ignore {
        if mask.height() != pred.height() || mask.width() != pred.width() {
            return Err(Error::ShapeMismatch("focal ignore mask dims differ".into()));
        }
    }
    let mut sum = 0.0;
    let mut count = 0u64;
    for row in 0..pred.height() {
        for col in 0..pred.width() {
            if ignore.is_some_and(|m| m.contains(row, col)) {
                continue;
            }
            sum += focal_term(pred.get(row, col) as f64, target.get(row, col) as f64, cfg);
            count += 1;
        }
    }
    if count == 0 {
        return Ok(LossValue {
            value: 0.0,
            empty_domain: true,
        });
    }
    Ok(LossValue::of(sum / count as f64))
}

/// Mean binary cross-entropy of a probability grid against a binary mask.
pub fn bce_loss(pred: &ScalarMap, gt: &BinaryMask) -> Result<f64> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::ShapeMismatch(format!(
            "bce pred {}x{} vs gt {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    let mut sum = 0.0;
    for row in 0..pred.height() {
        for col in 0..pred.width() {
            let p = clamp_prob(pred.get(row, col) as f64);
            let g = gt.contains(row, col) as u8 as f64;
            sum -= g * p.ln() + (1.0 - g) * (1.0 - p).ln();
        }
    }
    Ok(sum / (pred.height() * pred.width()) as f64)
}

/// DICE loss with +1 smoothing; zero when the prediction reproduces the
/// mask with hard 0/1 probabilities.
pub fn dice_loss(pred: &ScalarMap, gt: &BinaryMask) -> Result<f64> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::ShapeMismatch("dice dims differ".into()));
    }
    let mut inter = 0.0;
    let mut p_sum = 0.0;
    for row in 0..pred.height() {
        for col in 0..pred.width() {
            let p = pred.get(row, col) as f64;
            p_sum += p;
            if gt.contains(row, col) {
                inter += p;
            }
        }
    }
    let g_sum = gt.area() as f64;
    Ok(1.0 - (2.0 * inter + DICE_SMOOTHING) / (p_sum + g_sum + DICE_SMOOTHING))
}

/// Mask loss: sigmoid cross-entropy plus DICE.
pub fn mask_loss(pred: &ScalarMap, gt: &BinaryMask) -> Result<f64> {
    Ok(bce_loss(pred, gt)? + dice_loss(pred, gt)?)
}

/// L1 distance over the center-form parameters.
pub fn l1_box_loss(a: &BBox, b: &BBox) -> Result<f64> {
    if a.units != b.units {
        return Err(Error::UnitMismatch("l1_box_loss"));
    }
    Ok((a.cx - b.cx).abs() + (a.cy - b.cy).abs() + (a.w - b.w).abs() + (a.h - b.h).abs())
}

/// Box loss: L1 plus the generalized-IoU complement.
pub fn box_loss(a: &BBox, b: &BBox) -> Result<f64> {
    Ok(l1_box_loss(a, b)? + (1.0 - giou(a, b)?))
}

/// Per-class sigmoid focal classification loss for a one-hot target,
/// averaged over classes.
pub fn classification_loss(probs: &[f64], gt_class: usize, cfg: &FocalConfig) -> Result<f64> {
    if gt_class >= probs.len() {
        return Err(Error::OutOfBounds(format!(
            "gt class {gt_class} with {} class scores",
            probs.len()
        )));
    }
    let sum: f64 = probs
        .iter()
        .enumerate()
        .map(|(c, &p)| focal_term(p, (c == gt_class) as u8 as f64, cfg))
        .sum();
    Ok(sum / probs.len() as f64)
}

/// Weighted components of one matched prediction's loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionLoss {
    pub class: f64,
    pub mask: f64,
    pub bbox: f64,
    pub total: f64,
}

/// `L = w_cls * L_cls + w_mask * L_mask + w_box * L_box` for one match.
#[allow(clippy::too_many_arguments)]
pub fn prediction_loss(
    class_probs: &[f64],
    gt_class: usize,
    pred_mask: &ScalarMap,
    gt_mask: &BinaryMask,
    pred_box: &BBox,
    gt_box: &BBox,
    weights: &LossWeights,
    focal: &FocalConfig,
) -> Result<PredictionLoss> {
    let class = classification_loss(class_probs, gt_class, focal)?;
    let mask = mask_loss(pred_mask, gt_mask)?;
    let bbox = box_loss(pred_box, gt_box)?;
    Ok(PredictionLoss {
        class,
        mask,
        bbox,
        total: weights.class * class + weights.mask * mask + weights.bbox * bbox,
    })
}

/// Weighted components of one level's proposal-head loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelLoss {
    pub objectness: f64,
    pub regression: f64,
    pub center: f64,
    pub total: f64,
    /// Set when a focal/regression domain was empty at this level.
    pub empty_domain: bool,
}

/// Mean L1 regression error over supervised cells (objectness target 1 and
/// not ignored), summing the four channel differences per cell.
pub fn regression_loss(pred: &RegressionMap, targets: &LevelTargets) -> Result<LossValue> {
    if pred.height() != targets.regression.height() || pred.width() != targets.regression.width() {
        return Err(Error::ShapeMismatch(
            "regression pred/target dims differ".into(),
        ));
    }
    let mut sum = 0.0;
    let mut count = 0u64;
    for row in 0..pred.height() {
        for col in 0..pred.width() {
            if targets.objectness.get(row, col) != 1.0 || targets.ignore.contains(row, col) {
                continue;
            }
            let p = pred.get(row, col);
            let t = targets.regression.get(row, col);
            sum += (p.dx as f64 - t.dx as f64).abs()
                + (p.dy as f64 - t.dy as f64).abs()
                + (p.w as f64 - t.w as f64).abs()
                + (p.h as f64 - t.h as f64).abs();
            count += 1;
        }
    }
    if count == 0 {
        return Ok(LossValue {
            value: 0.0,
            empty_domain: true,
        });
    }
    Ok(LossValue::of(sum / count as f64))
}

/// Proposal-head loss of one level:
/// `w_obj * L_obj + w_reg * L_reg + w_center * L_center`.
pub fn level_loss(
    pred_center: &ScalarMap,
    pred_regression: &RegressionMap,
    pred_objectness: &ScalarMap,
    targets: &LevelTargets,
    weights: &LossWeights,
    focal: &FocalConfig,
) -> Result<LevelLoss> {
    let obj = focal_loss(
        pred_objectness,
        &targets.objectness,
        Some(&targets.ignore),
        focal,
    )?;
    let reg = regression_loss(pred_regression, targets)?;
    let center = focal_loss(pred_center, &targets.center, None, focal)?;
    Ok(LevelLoss {
        objectness: obj.value,
        regression: reg.value,
        center: center.value,
        total: weights.objectness * obj.value
            + weights.regression * reg.value
            + weights.center * center.value,
        empty_domain: obj.empty_domain || reg.empty_domain || center.empty_domain,
    })
}

/// Total loss: sum of per-level proposal losses plus per-decode-stage
/// prediction losses.
pub fn total_loss(level_losses: &[LevelLoss], prediction_losses: &[PredictionLoss]) -> f64 {
    level_losses.iter().map(|l| l.total).sum::<f64>()
        + prediction_losses.iter().map(|p| p.total).sum::<f64>()
}
