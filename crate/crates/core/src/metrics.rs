//! Panoptic quality evaluation: per-class PQ/RQ/SQ with the standard
//! IoU > 0.5 unique-matching rule and void handling, thing/stuff group
//! averages, class-agnostic thing scoring and size-binned detection rates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rasters::PanopticMap;

/// Pseudo class id used when all thing segments are merged for
/// class-agnostic scoring.
pub const AGNOSTIC_THING_CLASS: u32 = u32::MAX;

/// Raw accumulators of one class.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub iou_sum: f64,
    pub tp: u64,
    pub fp: u64,
    pub fn_count: u64,
}

impl ClassCounts {
    pub fn merge(&mut self, other: &ClassCounts) {
        self.iou_sum += other.iou_sum;
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_count += other.fn_count;
    }

    pub fn is_empty(&self) -> bool {
        self.tp + self.fp + self.fn_count == 0
    }
}

/// Per-class accumulators over one or more images. Merging shards is
/// commutative and associative, so dataset aggregation is order-free.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PqCounts {
    pub per_class: BTreeMap<u32, ClassCounts>,
}

impl PqCounts {
    pub fn merge(&mut self, other: &PqCounts) {
        for (&class, counts) in &other.per_class {
            self.per_class.entry(class).or_default().merge(counts);
        }
    }
}

/// Evaluate one prediction map against ground truth.
///
/// Segments of the same class match when their IoU exceeds 0.5, with void
/// pixels excluded from the union. Matched pairs accumulate IoU into TP;
/// unmatched ground truth counts FN; unmatched predictions count FP unless
/// more than half their area lies on ground-truth void.
pub fn pq_evaluate(pred: &PanopticMap, gt: &PanopticMap) -> Result<PqCounts> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::ShapeMismatch(format!(
            "pred {}x{} vs gt {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }

    let mut pair_inter: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    let mut gt_area: BTreeMap<u32, u64> = BTreeMap::new();
    let mut pred_area: BTreeMap<u32, u64> = BTreeMap::new();
    for (&g, &p) in gt.ids().iter().zip(pred.ids()) {
        *pair_inter.entry((g, p)).or_default() += 1;
        if g != 0 {
            *gt_area.entry(g).or_default() += 1;
        }
        if p != 0 {
            *pred_area.entry(p).or_default() += 1;
        }
    }

    let mut counts = PqCounts::default();
    let mut gt_matched: BTreeMap<u32, bool> = gt_area.keys().map(|&id| (id, false)).collect();
    let mut pred_matched: BTreeMap<u32, bool> = pred_area.keys().map(|&id| (id, false)).collect();

    for (&(g, p), &inter) in &pair_inter {
        if g == 0 || p == 0 {
            continue;
        }
        let gt_info = gt.segments()[&g];
        let pred_info = pred.segments()[&p];
        if gt_info.class_id != pred_info.class_id {
            continue;
        }
        // Void pixels under the prediction leave the union.
        let pred_void = pair_inter.get(&(0, p)).copied().unwrap_or(0);
        let union = gt_area[&g] + pred_area[&p] - inter - pred_void;
        if union == 0 {
            continue;
        }
        let iou = inter as f64 / union as f64;
        if iou > 0.5 {
            let entry = counts.per_class.entry(gt_info.class_id).or_default();
            entry.tp += 1;
            entry.iou_sum += iou;
            gt_matched.insert(g, true);
            pred_matched.insert(p, true);
        }
    }

    for (&g, &matched) in &gt_matched {
        if !matched {
            counts
                .per_class
                .entry(gt.segments()[&g].class_id)
                .or_default()
                .fn_count += 1;
        }
    }
    for (&p, &matched) in &pred_matched {
        if matched {
            continue;
        }
        // Predictions mostly over void are ignored rather than penalized.
        let void_overlap = pair_inter.get(&(0, p)).copied().unwrap_or(0);
        if void_overlap as f64 > 0.5 * pred_area[&p] as f64 {
            continue;
        }
        counts
            .per_class
            .entry(pred.segments()[&p].class_id)
            .or_default()
            .fp += 1;
    }
    Ok(counts)
}

/// Scores of one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub counts: ClassCounts,
    pub pq: f64,
    pub rq: f64,
    pub sq: f64,
}

impl ClassScore {
    fn from_counts(counts: ClassCounts) -> Self {
        let denom = counts.tp as f64 + 0.5 * counts.fp as f64 + 0.5 * counts.fn_count as f64;
        let pq = if denom > 0.0 {
            counts.iou_sum / denom
        } else {
            0.0
        };
        let rq = if denom > 0.0 {
            counts.tp as f64 / denom
        } else {
            0.0
        };
        let sq = if counts.tp > 0 {
            counts.iou_sum / counts.tp as f64
        } else {
            0.0
        };
        Self { counts, pq, rq, sq }
    }
}

/// Unweighted mean over a set of classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub pq: f64,
    pub rq: f64,
    pub sq: f64,
    pub n_classes: usize,
}

/// Whether a class id names things or stuff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDef {
    pub id: u32,
    pub is_thing: bool,
}

/// Full evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PqReport {
    pub per_class: BTreeMap<u32, ClassScore>,
    pub all: Option<GroupScore>,
    pub things: Option<GroupScore>,
    pub stuff: Option<GroupScore>,
    /// Class-agnostic thing score; absent when no thing segments exist.
    pub things_agnostic: Option<ClassScore>,
    pub detection_rate: Vec<SizeBinRate>,
}

fn group_mean(scores: &[&ClassScore]) -> Option<GroupScore> {
    if scores.is_empty() {
        return None;
    }
    let n = scores.len() as f64;
    Some(GroupScore {
        pq: scores.iter().map(|s| s.pq).sum::<f64>() / n,
        rq: scores.iter().map(|s| s.rq).sum::<f64>() / n,
        sq: scores.iter().map(|s| s.sq).sum::<f64>() / n,
        n_classes: scores.len(),
    })
}

/// Turn accumulated counts into per-class scores and group means. Classes
/// with no TP, FP or FN anywhere are excluded from the averages.
pub fn aggregate(counts: &PqCounts, classes: &[ClassDef]) -> PqReport {
    let is_thing: BTreeMap<u32, bool> = classes.iter().map(|c| (c.id, c.is_thing)).collect();
    let mut per_class = BTreeMap::new();
    for (&class, raw) in &counts.per_class {
        if raw.is_empty() {
            continue;
        }
        per_class.insert(class, ClassScore::from_counts(*raw));
    }
    let all: Vec<&ClassScore> = per_class.values().collect();
    let things: Vec<&ClassScore> = per_class
        .iter()
        .filter(|(id, _)| is_thing.get(id).copied().unwrap_or(false))
        .map(|(_, s)| s)
        .collect();
    let stuff: Vec<&ClassScore> = per_class
        .iter()
        .filter(|(id, _)| !is_thing.get(id).copied().unwrap_or(false))
        .map(|(_, s)| s)
        .collect();
    PqReport {
        all: group_mean(&all),
        things: group_mean(&things),
        stuff: group_mean(&stuff),
        per_class,
        things_agnostic: None,
        detection_rate: Vec::new(),
    }
}

/// Relabel every thing segment to one merged class.
pub fn merge_thing_classes(map: &PanopticMap) -> Result<PanopticMap> {
    let mut segments = map.segments().clone();
    for info in segments.values_mut() {
        if info.is_thing {
            info.class_id = AGNOSTIC_THING_CLASS;
        }
    }
    PanopticMap::from_parts(map.height(), map.width(), map.ids().to_vec(), segments)
}

/// Class-agnostic thing counts of one image pair: things merged into one
/// class in both maps, then evaluated as usual. The returned counts hold
/// only the merged class.
pub fn class_agnostic_counts(pred: &PanopticMap, gt: &PanopticMap) -> Result<PqCounts> {
    let counts = pq_evaluate(&merge_thing_classes(pred)?, &merge_thing_classes(gt)?)?;
    let mut out = PqCounts::default();
    if let Some(c) = counts.per_class.get(&AGNOSTIC_THING_CLASS) {
        out.per_class.insert(AGNOSTIC_THING_CLASS, *c);
    }
    Ok(out)
}

/// Score of the merged thing class, absent when no thing segment exists in
/// either map collection.
pub fn class_agnostic_score(counts: &PqCounts) -> Option<ClassScore> {
    counts
        .per_class
        .get(&AGNOSTIC_THING_CLASS)
        .filter(|c| !c.is_empty())
        .map(|c| ClassScore::from_counts(*c))
}

/// Detection rate of one diagonal bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeBinRate {
    pub d_min: f64,
    /// Exclusive upper edge; the last bin is unbounded.
    pub d_max: f64,
    pub detected: u64,
    pub total: u64,
    /// Absent when the bin holds no ground-truth objects.
    pub rate: Option<f64>,
}

/// Size-binned detection rate over `(prediction, ground truth)` map pairs.
///
/// A ground-truth thing counts as detected when some prediction segment of
/// the same class overlaps it with mask IoU > 0.5. Objects are binned by
/// their tight-box diagonal in pixels; `edges` must be strictly increasing
/// and an unbounded bin follows the last edge.
pub fn detection_rate_by_size(
    pairs: &[(&PanopticMap, &PanopticMap)],
    edges: &[f64],
) -> Result<Vec<SizeBinRate>> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidValue(
            "size bin edges must be strictly increasing".into(),
        ));
    }
    let mut bins: Vec<SizeBinRate> = edges
        .windows(2)
        .map(|w| SizeBinRate {
            d_min: w[0],
            d_max: w[1],
            detected: 0,
            total: 0,
            rate: None,
        })
        .collect();
    bins.push(SizeBinRate {
        d_min: *edges.last().expect("len checked"),
        d_max: f64::INFINITY,
        detected: 0,
        total: 0,
        rate: None,
    });

    for (pred, gt) in pairs {
        if pred.height() != gt.height() || pred.width() != gt.width() {
            return Err(Error::ShapeMismatch(
                "detection-rate pair dims differ".into(),
            ));
        }
        for (&gt_id, gt_info) in gt.segments() {
            if !gt_info.is_thing {
                continue;
            }
            let gt_mask = gt.segment_mask(gt_id)?;
            let Some((x0, y0, x1, y1)) = gt_mask.tight_bbox() else {
                continue;
            };
            let (w, h) = ((x1 - x0) as f64, (y1 - y0) as f64);
            let diagonal = (w * w + h * h).sqrt();
            let bin = bins
                .iter_mut()
                .find(|b| diagonal >= b.d_min && diagonal < b.d_max)
                .expect("last bin is unbounded");
            bin.total += 1;

            let mut detected = false;
            for (&pred_id, pred_info) in pred.segments() {
                if !pred_info.is_thing || pred_info.class_id != gt_info.class_id {
                    continue;
                }
                if pred.segment_mask(pred_id)?.iou(&gt_mask)? > 0.5 {
                    detected = true;
                    break;
                }
            }
            if detected {
                bin.detected += 1;
            }
        }
    }
    for bin in &mut bins {
        if bin.total > 0 {
            bin.rate = Some(bin.detected as f64 / bin.total as f64);
        }
    }
    Ok(bins)
}
