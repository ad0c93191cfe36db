//! Mask decoding: correlate a content query with high-resolution features,
//! constrained for thing classes to the dilated predicted box. Outside the
//! dilated box a thing mask is exactly zero.

use crate::config::{BinarizeConfig, UpsampleMode};
use crate::error::{Error, Result};
use crate::geometry::{dilate, BBox, DilationConfig, Units};
use crate::rasters::{BinaryMask, FeatureMap, ScalarMap};

/// Linear projection applied to content queries before correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskProjection {
    out_dim: usize,
    in_dim: usize,
    /// Row-major `out_dim x in_dim`.
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl MaskProjection {
    pub fn new(out_dim: usize, in_dim: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != out_dim * in_dim || bias.len() != out_dim {
            return Err(Error::ShapeMismatch(format!(
                "projection weight {} / bias {} vs {}x{}",
                weight.len(),
                bias.len(),
                out_dim,
                in_dim
            )));
        }
        Ok(Self {
            out_dim,
            in_dim,
            weight,
            bias,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let mut weight = vec![0.0; dim * dim];
        for i in 0..dim {
            weight[i * dim + i] = 1.0;
        }
        Self {
            out_dim: dim,
            in_dim: dim,
            weight,
            bias: vec![0.0; dim],
        }
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }
    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn apply(&self, query: &[f64]) -> Result<Vec<f64>> {
        if query.len() != self.in_dim {
            return Err(Error::ShapeMismatch(format!(
                "query length {} vs projection input {}",
                query.len(),
                self.in_dim
            )));
        }
        let mut out = self.bias.clone();
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.weight[i * self.in_dim..(i + 1) * self.in_dim];
            *o += row.iter().zip(query).map(|(w, q)| w * q).sum::<f64>();
        }
        Ok(out)
    }

    /// Parameter-file layout: a 1-channel tensor of `out_dim` rows by
    /// `in_dim + 1` columns; each row holds one output's weights with its
    /// bias in the final column.
    pub fn from_tensor(tensor: &crate::rasters::Tensor) -> Result<Self> {
        if tensor.channels != 1 || tensor.width < 2 {
            return Err(Error::ShapeMismatch(format!(
                "projection tensor must be out x (in+1) x 1, got {}x{}x{}",
                tensor.height, tensor.width, tensor.channels
            )));
        }
        let out_dim = tensor.height;
        let in_dim = tensor.width - 1;
        let mut weight = Vec::with_capacity(out_dim * in_dim);
        let mut bias = Vec::with_capacity(out_dim);
        for row in tensor.data.chunks(in_dim + 1) {
            weight.extend(row[..in_dim].iter().map(|&v| v as f64));
            bias.push(row[in_dim] as f64);
        }
        Self::new(out_dim, in_dim, weight, bias)
    }

    pub fn to_tensor(&self) -> crate::rasters::Tensor {
        let mut data: Vec<f32> = Vec::with_capacity(self.out_dim * (self.in_dim + 1));
        for (row, &b) in self.weight.chunks(self.in_dim).zip(&self.bias) {
            data.extend(row.iter().map(|&v| v as f32));
            data.push(b as f32);
        }
        crate::rasters::Tensor::new(self.out_dim, self.in_dim + 1, 1, 4, data)
            .expect("dims consistent by construction")
    }
}

/// One query's decoded outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct InstancePrediction {
    /// Per-class sigmoid probabilities.
    pub class_probs: Vec<f64>,
    /// Max class probability.
    pub confidence: f64,
    /// Index of the max class.
    pub class_id: u32,
    pub bbox: BBox,
    /// Probability mask (stride 4 as decoded, stride 1 after upsampling).
    pub mask: ScalarMap,
    pub is_thing: bool,
}

impl InstancePrediction {
    pub fn new(class_probs: Vec<f64>, bbox: BBox, mask: ScalarMap, is_thing: bool) -> Result<Self> {
        if class_probs.is_empty() {
            return Err(Error::InvalidValue(
                "prediction needs at least one class".into(),
            ));
        }
        if class_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidValue(
                "class probabilities must lie in [0,1]".into(),
            ));
        }
        let (class_id, confidence) = class_probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(i, &p)| (i as u32, p))
            .expect("non-empty");
        Ok(Self {
            class_probs,
            confidence,
            class_id,
            bbox,
            mask,
            is_thing,
        })
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn correlate(features: &FeatureMap, projected: &[f64], row: usize, col: usize) -> f64 {
    let cell = features.cell(row, col);
    let dot: f64 = cell.iter().zip(projected).map(|(v, p)| *v as f64 * p).sum();
    sigmoid(dot)
}

/// Cells of a stride grid whose centers fall inside a pixel-space box,
/// as inclusive `(row0..=row1, col0..=col1)` ranges; `None` when no cell
/// center lands inside.
fn covered_cells(
    bbox_px: &BBox,
    stride: u32,
    grid_h: usize,
    grid_w: usize,
) -> Option<(usize, usize, usize, usize)> {
    let (x0, y0, x1, y1) = bbox_px.corners();
    let s = stride as f64;
    // Cell center pixel is (c + 0.5) * s; inclusive on both box edges.
    let col0 = ((x0 / s - 0.5).ceil().max(0.0)) as usize;
    let col1 = (x1 / s - 0.5).floor();
    let row0 = ((y0 / s - 0.5).ceil().max(0.0)) as usize;
    let row1 = (y1 / s - 0.5).floor();
    if col1 < 0.0 || row1 < 0.0 {
        return None;
    }
    let col1 = (col1 as usize).min(grid_w.saturating_sub(1));
    let row1 = (row1 as usize).min(grid_h.saturating_sub(1));
    if col0 > col1 || row0 > row1 || col0 >= grid_w || row0 >= grid_h {
        return None;
    }
    Some((row0, row1, col0, col1))
}

/// Thing mask: sigmoid correlation inside the dilated predicted box, exact
/// zero outside. Returns the probability grid at the feature stride plus a
/// flag set when the box covered no cell at all.
pub fn thing_mask(
    features: &FeatureMap,
    content_query: &[f64],
    positional_query: &BBox,
    projection: &MaskProjection,
    image_w: usize,
    image_h: usize,
    dilation: &DilationConfig,
) -> Result<(ScalarMap, bool)> {
    if positional_query.units != Units::Normalized {
        return Err(Error::UnitMismatch(
            "thing_mask expects a normalized positional query",
        ));
    }
    if projection.out_dim() != features.channels() {
        return Err(Error::ShapeMismatch(format!(
            "projection output {} vs feature channels {}",
            projection.out_dim(),
            features.channels()
        )));
    }
    let projected = projection.apply(content_query)?;
    let mut mask = ScalarMap::zeros(features.stride(), features.height(), features.width())?;

    let box_px = positional_query.to_pixel(image_w as f64, image_h as f64);
    let dilated = dilate(&box_px, image_w as f64, image_h as f64, dilation)?;
    let Some((row0, row1, col0, col1)) = covered_cells(
        &dilated,
        features.stride(),
        features.height(),
        features.width(),
    ) else {
        return Ok((mask, true));
    };
    for row in row0..=row1 {
        for col in col0..=col1 {
            mask.set(row, col, correlate(features, &projected, row, col) as f32);
        }
    }
    Ok((mask, false))
}

/// Stuff mask: sigmoid correlation at every cell, no spatial constraint.
pub fn stuff_mask(
    features: &FeatureMap,
    content_query: &[f64],
    projection: &MaskProjection,
) -> Result<ScalarMap> {
    if projection.out_dim() != features.channels() {
        return Err(Error::ShapeMismatch(format!(
            "projection output {} vs feature channels {}",
            projection.out_dim(),
            features.channels()
        )));
    }
    let projected = projection.apply(content_query)?;
    let mut mask = ScalarMap::zeros(features.stride(), features.height(), features.width())?;
    for row in 0..features.height() {
        for col in 0..features.width() {
            mask.set(row, col, correlate(features, &projected, row, col) as f32);
        }
    }
    Ok(mask)
}

fn bilinear_scalar(map: &ScalarMap, x: f64, y: f64) -> f64 {
    // Border-clamped sampling for resampling use.
    let x = x.clamp(0.0, (map.width() - 1) as f64);
    let y = y.clamp(0.0, (map.height() - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(map.width() - 1);
    let y1 = (y0 + 1).min(map.height() - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    map.get(y0, x0) as f64 * (1.0 - fx) * (1.0 - fy)
        + map.get(y0, x1) as f64 * fx * (1.0 - fy)
        + map.get(y1, x0) as f64 * (1.0 - fx) * fy
        + map.get(y1, x1) as f64 * fx * fy
}

/// Resample a probability grid to image resolution.
pub fn upsample_probabilities(
    mask: &ScalarMap,
    image_w: usize,
    image_h: usize,
    mode: UpsampleMode,
) -> Result<ScalarMap> {
    let stride = mask.stride() as usize;
    if stride == 1 {
        if mask.width() == image_w && mask.height() == image_h {
            return Ok(mask.clone());
        }
        return Err(Error::ShapeMismatch(format!(
            "stride-1 grid {}x{} cannot resample to {}x{}",
            mask.height(),
            mask.width(),
            image_h,
            image_w
        )));
    }
    let mut out = ScalarMap::zeros(1, image_h, image_w)?;
    for row in 0..image_h {
        for col in 0..image_w {
            let value = match mode {
                UpsampleMode::Nearest => {
                    // The cell whose footprint contains the pixel.
                    let r = (row / stride).min(mask.height() - 1);
                    let c = (col / stride).min(mask.width() - 1);
                    mask.get(r, c) as f64
                }
                UpsampleMode::Bilinear => {
                    let x = crate::rasters::pixel_to_cell(mask.stride(), col as f64 + 0.5);
                    let y = crate::rasters::pixel_to_cell(mask.stride(), row as f64 + 0.5);
                    bilinear_scalar(mask, x, y)
                }
            };
            out.set(row, col, value as f32);
        }
    }
    Ok(out)
}

/// Threshold a probability grid into a binary mask, optionally upsampling
/// to a target resolution first. Pixels strictly above the threshold are
/// foreground.
pub fn binarize(
    mask: &ScalarMap,
    config: &BinarizeConfig,
    target: Option<(usize, usize)>,
) -> Result<BinaryMask> {
    let resampled;
    let source = match target {
        Some((image_w, image_h)) => {
            resampled = upsample_probabilities(mask, image_w, image_h, config.upsample)?;
            &resampled
        }
        None => mask,
    };
    let grid: Vec<u8> = source
        .data()
        .iter()
        .map(|&p| (p as f64 > config.threshold) as u8)
        .collect();
    BinaryMask::encode(&grid, source.height(), source.width())
}
