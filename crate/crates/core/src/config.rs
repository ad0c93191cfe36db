//! Pipeline configuration: every tunable constant in one serializable
//! struct so CLI runs can pin them from a config file.

use serde::{Deserialize, Serialize};

use crate::geometry::DilationConfig;

/// Weights combining the individual loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub objectness: f64,
    pub regression: f64,
    pub center: f64,
    pub class: f64,
    pub mask: f64,
    pub bbox: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            objectness: 5.0,
            regression: 5.0,
            center: 5.0,
            class: 4.0,
            mask: 5.0,
            bbox: 5.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> bool {
        [
            self.objectness,
            self.regression,
            self.center,
            self.class,
            self.mask,
            self.bbox,
        ]
        .iter()
        .all(|w| *w >= 0.0 && w.is_finite())
    }
}

/// Focal-loss shape parameters. The defaults are the usual detection
/// settings; they are configuration, not derived values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FocalConfig {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for FocalConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 2.0,
        }
    }
}

/// Peak extraction from center heatmaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeakConfig {
    /// Window side length for the strict-maximum test; must be odd.
    pub window: usize,
    /// Peaks below this probability are dropped.
    pub probability_floor: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self {
            window: 3,
            probability_floor: 0.05,
        }
    }
}

/// Query budget of one decoded scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryBudget {
    pub stuff: usize,
    pub things: usize,
    pub conditioned: usize,
}

impl Default for QueryBudget {
    fn default() -> Self {
        Self {
            stuff: 50,
            things: 250,
            conditioned: 100,
        }
    }
}

/// IoU thresholds of the two matching refinement stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinementThresholds {
    /// Matches below this box IoU are removed (false-positive stage).
    pub theta_fp: f64,
    /// Unmatched queries above this IoU are added (false-negative stage).
    pub theta_fn: f64,
    /// Use mask IoU instead of box IoU for the FN stage.
    pub fn_stage_uses_mask_iou: bool,
}

impl Default for RefinementThresholds {
    fn default() -> Self {
        Self {
            theta_fp: 0.25,
            theta_fn: 0.80,
            fn_stage_uses_mask_iou: false,
        }
    }
}

impl RefinementThresholds {
    pub fn validate(&self) -> bool {
        0.0 <= self.theta_fp && self.theta_fp < self.theta_fn && self.theta_fn <= 1.0
    }
}

/// Magnitudes of the box perturbation applied to conditioned queries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoxNoise {
    /// Center shift, uniform in `±shift * extent / 2` per axis.
    pub shift: f64,
    /// Size scale, uniform in `[1 - scale, 1 + scale]` per axis.
    pub scale: f64,
}

impl Default for BoxNoise {
    fn default() -> Self {
        Self {
            shift: 0.4,
            scale: 0.4,
        }
    }
}

/// How probability masks are resampled to image resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpsampleMode {
    #[default]
    Bilinear,
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinarizeConfig {
    pub threshold: f64,
    pub upsample: UpsampleMode,
}

impl Default for BinarizeConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            upsample: UpsampleMode::Bilinear,
        }
    }
}

/// Greedy panoptic fusion constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Predictions below this confidence never enter the canvas.
    pub confidence_floor: f64,
    /// Minimum fraction of a mask that must survive occlusion.
    pub retention_threshold: f64,
    /// Minimum surviving pixel count for stuff segments.
    pub stuff_min_area: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            confidence_floor: 0.3,
            retention_threshold: 0.5,
            stuff_min_area: 0,
        }
    }
}

/// Top-level configuration bundling every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PipelineConfig {
    pub dilation: DilationConfig,
    pub peaks: PeakConfig,
    pub queries: QueryBudget,
    /// Voting distance threshold as a fraction of the level-map width.
    pub voting_theta_factor: VotingTheta,
    pub focal: FocalConfig,
    pub loss_weights: LossWeights,
    pub refinement: RefinementThresholds,
    pub box_noise: BoxNoise,
    pub test_nms: TestNmsConfig,
    pub binarize: BinarizeConfig,
    /// Divide pooled content queries by their total weight.
    pub normalize_content_query: bool,
    pub fusion: FusionConfig,
    /// Diagonal-pixel bin edges for size-binned detection rates; an
    /// implicit unbounded bin follows the last edge.
    pub size_bin_edges: SizeBins,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VotingTheta(pub f64);

impl Default for VotingTheta {
    fn default() -> Self {
        Self(0.02)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestNmsConfig {
    pub iou_threshold: f64,
}

impl Default for TestNmsConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeBins(pub Vec<f64>);

impl Default for SizeBins {
    fn default() -> Self {
        // Matches the per-level size-range edges so detection rates line up
        // with the pyramid supervision bands.
        Self(vec![0.0, 32.0, 64.0, 128.0, 256.0, 512.0])
    }
}
