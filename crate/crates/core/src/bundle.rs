//! Bundle manifests: the JSON + tensor-file layout that carries scenes,
//! head outputs, predictions and panoptic maps between pipeline stages.
//! Manifests are plain serde structs; masks live inline as RLE, dense
//! grids in sibling tensor files referenced by relative path.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::mask_decode::InstancePrediction;
use crate::matching::MatchSet;
use crate::metrics::ClassDef;
use crate::proposals::{LevelHeads, Proposal};
use crate::rasters::{read_tensor, BinaryMask, PanopticMap, SegmentEntry, Tensor};
use crate::targets::GtInstance;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: u32,
    pub name: String,
    pub is_thing: bool,
}

impl ClassEntry {
    pub fn def(&self) -> ClassDef {
        ClassDef {
            id: self.id,
            is_thing: self.is_thing,
        }
    }
}

/// One ground-truth segment record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtRecord {
    pub class_id: u32,
    pub is_thing: bool,
    pub mask: BinaryMask,
}

/// One prediction record: class scores, box and full-resolution mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub class_probs: Vec<f64>,
    pub confidence: f64,
    pub class_id: u32,
    pub is_thing: bool,
    /// Normalized units.
    pub bbox: BBox,
    pub mask: BinaryMask,
}

/// Per-level tensor file paths, relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelFiles {
    pub stride: u32,
    pub center: String,
    pub regression: String,
    pub objectness: String,
    pub features: String,
}

/// Scene manifest tying together GT segments, head tensors and predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub classes: Vec<ClassEntry>,
    #[serde(default)]
    pub levels: Vec<LevelFiles>,
    #[serde(default)]
    pub gt_instances: Vec<GtRecord>,
    #[serde(default)]
    pub predictions: Vec<PredictionRecord>,
    /// Tensor of opaque stuff content queries, one row per query.
    #[serde(default)]
    pub stuff_queries: Option<String>,
}

impl Manifest {
    pub fn new(image_id: impl Into<String>, width: usize, height: usize) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            image_id: image_id.into(),
            width,
            height,
            classes: Vec::new(),
            levels: Vec::new(),
            gt_instances: Vec::new(),
            predictions: Vec::new(),
            stuff_queries: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        write_json_atomic(path, self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported format_version {}, expected {FORMAT_VERSION}",
                self.format_version
            )));
        }
        for record in &self.gt_instances {
            if record.mask.height() != self.height || record.mask.width() != self.width {
                return Err(Error::ShapeMismatch(format!(
                    "gt mask {}x{} vs image {}x{}",
                    record.mask.height(),
                    record.mask.width(),
                    self.height,
                    self.width
                )));
            }
        }
        for record in &self.predictions {
            if record.mask.height() != self.height || record.mask.width() != self.width {
                return Err(Error::ShapeMismatch(format!(
                    "prediction mask {}x{} vs image {}x{}",
                    record.mask.height(),
                    record.mask.width(),
                    self.height,
                    self.width
                )));
            }
        }
        Ok(())
    }

    /// Materialize the GT records as instances (deriving tight boxes).
    pub fn decode_gt_instances(&self) -> Result<Vec<GtInstance>> {
        self.gt_instances
            .iter()
            .map(|r| GtInstance::from_mask(r.class_id, r.is_thing, r.mask.clone()))
            .collect()
    }

    /// Load the per-level head tensors referenced by this manifest.
    pub fn load_level_heads(&self, base_dir: &Path) -> Result<Vec<LevelHeads>> {
        self.levels
            .iter()
            .map(|level| {
                let read = |rel: &str| -> Result<Tensor> {
                    let tensor = read_tensor(&base_dir.join(rel))?;
                    if tensor.stride != level.stride {
                        return Err(Error::ShapeMismatch(format!(
                            "{rel}: tensor stride {} vs manifest stride {}",
                            tensor.stride, level.stride
                        )));
                    }
                    Ok(tensor)
                };
                let probability_map = |rel: &str, map: crate::rasters::ScalarMap| {
                    if !map.is_probability_map() {
                        return Err(Error::InvalidValue(format!(
                            "{rel}: probability map holds values outside [0, 1]"
                        )));
                    }
                    Ok(map)
                };
                Ok(LevelHeads {
                    center: probability_map(
                        &level.center,
                        read(&level.center)?.into_scalar_map()?,
                    )?,
                    regression: read(&level.regression)?.into_regression_map()?,
                    objectness: probability_map(
                        &level.objectness,
                        read(&level.objectness)?.into_scalar_map()?,
                    )?,
                    features: read(&level.features)?.into_feature_map()?,
                })
            })
            .collect()
    }

    /// Load the stuff query vectors (one tensor row per query).
    pub fn load_stuff_queries(&self, base_dir: &Path) -> Result<Vec<Vec<f64>>> {
        let Some(rel) = &self.stuff_queries else {
            return Ok(Vec::new());
        };
        let tensor = read_tensor(&base_dir.join(rel))?;
        if tensor.channels != 1 {
            return Err(Error::ShapeMismatch(format!(
                "stuff query tensor must be n x dim x 1, got {} channels",
                tensor.channels
            )));
        }
        Ok(tensor
            .data
            .chunks(tensor.width)
            .map(|row| row.iter().map(|&v| v as f64).collect())
            .collect())
    }

    /// Materialize prediction records for matching/fusion. Prediction masks
    /// are stored binarized at image resolution; they are lifted back to a
    /// hard 0/1 probability grid.
    pub fn instance_predictions(&self) -> Result<Vec<InstancePrediction>> {
        self.predictions
            .iter()
            .map(|r| {
                let grid = r.mask.decode();
                let data: Vec<f32> = grid.iter().map(|&v| v as f32).collect();
                let mask = crate::rasters::ScalarMap::from_data(1, self.height, self.width, data)?;
                InstancePrediction::new(r.class_probs.clone(), r.bbox, mask, r.is_thing)
            })
            .collect()
    }
}

/// Decoded proposal in serialized form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub stride: u32,
    pub row: usize,
    pub col: usize,
    pub probability: f64,
    pub bbox: BBox,
    pub size_clamped: bool,
    pub content_empty: bool,
    /// Voting mask on the level grid.
    pub mask: BinaryMask,
}

impl ProposalRecord {
    pub fn from_proposal(p: &Proposal) -> Self {
        Self {
            stride: p.site.stride,
            row: p.site.row,
            col: p.site.col,
            probability: p.site.probability,
            bbox: p.bbox,
            size_clamped: p.size_clamped,
            content_empty: p.content_empty,
            mask: p.mask.clone(),
        }
    }
}

/// Output of the decode stage: proposal records plus a tensor of content
/// queries (row i belongs to proposal i; stuff rows follow thing rows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalsFile {
    pub format_version: u32,
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub proposals: Vec<ProposalRecord>,
    pub n_stuff_queries: usize,
    /// Relative path of the content-query tensor.
    pub content_queries: String,
}

/// Output of the match stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchFile {
    pub format_version: u32,
    pub image_id: String,
    pub refined: bool,
    pub matches: MatchSet,
}

/// Per-level supervision targets written by target generation: dense maps
/// as tensor files, the ignore mask inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetLevelFiles {
    pub stride: u32,
    pub center: String,
    pub regression: String,
    pub objectness: String,
    pub ignore: BinaryMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetsFile {
    pub format_version: u32,
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub levels: Vec<TargetLevelFiles>,
}

/// Serialized panoptic map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanopticFile {
    pub format_version: u32,
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub segments: Vec<SegmentEntry>,
}

impl PanopticFile {
    pub fn from_map(image_id: impl Into<String>, map: &PanopticMap) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            image_id: image_id.into(),
            width: map.width(),
            height: map.height(),
            segments: map.to_entries(),
        }
    }

    pub fn to_map(&self) -> Result<PanopticMap> {
        PanopticMap::from_entries(self.height, self.width, &self.segments)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let file: PanopticFile = serde_json::from_str(&text)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Manifest(format!(
                "{}: unsupported format_version {}",
                path.display(),
                file.format_version
            )));
        }
        Ok(file)
    }
}

/// Write JSON through a temp file and rename, so readers never observe a
/// half-written manifest.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = temp_sibling(path);
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Atomic tensor write (temp + rename).
pub fn write_tensor_atomic(path: &Path, tensor: &Tensor) -> Result<()> {
    let tmp = temp_sibling(path);
    crate::rasters::write_tensor(&tmp, tensor)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Load a class table (a JSON array of [`ClassEntry`]).
pub fn load_classes(path: &Path) -> Result<Vec<ClassEntry>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
}
