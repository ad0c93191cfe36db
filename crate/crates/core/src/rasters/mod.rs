//! Dense-grid containers for feature maps, heatmaps, regression maps and
//! masks, shared by every decoding and supervision module.
//!
//! All grids are row-major. Continuous coordinates use the cell-center
//! convention: cell `(row, col)` of a stride-`s` grid sits at image pixel
//! `((col + 0.5) * s, (row + 0.5) * s)`. Within a grid, cell `(row, col)`
//! is the point `(x, y) = (col, row)`, so [`FeatureMap::bilinear_read`] at
//! integer coordinates returns the stored cell exactly.

mod mask;
mod panoptic;
mod tensor;

pub use mask::BinaryMask;
pub use panoptic::{PanopticMap, SegmentEntry, SegmentInfo};
pub use tensor::{read_tensor, write_tensor, Tensor};

use crate::error::{Error, Result};

/// Strides of the feature pyramid, finest first.
pub const PYRAMID_STRIDES: [u32; 5] = [4, 8, 16, 32, 64];

/// Image pixel coordinate of a grid cell's center along one axis.
pub fn cell_to_pixel(stride: u32, cell: f64) -> f64 {
    (cell + 0.5) * stride as f64
}

/// Continuous grid coordinate of an image pixel position along one axis.
pub fn pixel_to_cell(stride: u32, pixel: f64) -> f64 {
    pixel / stride as f64 - 0.5
}

fn check_stride(stride: u32) -> Result<()> {
    if stride == 0 || !stride.is_power_of_two() || stride > 64 {
        return Err(Error::InvalidValue(format!(
            "stride must be a power of two in 1..=64, got {stride}"
        )));
    }
    Ok(())
}

/// Multi-channel dense grid, the carrier for pyramid features and head
/// outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    stride: u32,
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn zeros(stride: u32, height: usize, width: usize, channels: usize) -> Result<Self> {
        check_stride(stride)?;
        if !PYRAMID_STRIDES.contains(&stride) {
            return Err(Error::InvalidValue(format!(
                "feature maps live on pyramid strides {PYRAMID_STRIDES:?}, got {stride}"
            )));
        }
        Ok(Self {
            stride,
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        })
    }

    pub fn from_data(
        stride: u32,
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        let mut map = Self::zeros(stride, height, width, channels)?;
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!(
                "feature data length {} != {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        map.data = data;
        Ok(map)
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f32] {
        let base = (row * self.width + col) * self.channels;
        &self.data[base..base + self.channels]
    }

    pub fn cell_mut(&mut self, row: usize, col: usize) -> &mut [f32] {
        let base = (row * self.width + col) * self.channels;
        &mut self.data[base..base + self.channels]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Bilinear interpolation of the four neighboring cells at a continuous
    /// grid coordinate. Exact at integer coordinates.
    pub fn bilinear_read(&self, x: f64, y: f64) -> Result<Vec<f64>> {
        if !(0.0..self.width as f64).contains(&x) || !(0.0..self.height as f64).contains(&y) {
            return Err(Error::OutOfBounds(format!(
                "bilinear read at ({x}, {y}) outside {}x{} grid",
                self.height, self.width
            )));
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;

        let mut out = vec![0.0f64; self.channels];
        let corners = [
            (y0, x0, (1.0 - fx) * (1.0 - fy)),
            (y0, x1, fx * (1.0 - fy)),
            (y1, x0, (1.0 - fx) * fy),
            (y1, x1, fx * fy),
        ];
        for (row, col, weight) in corners {
            if weight == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.cell(row, col)) {
                *o += weight * *v as f64;
            }
        }
        Ok(out)
    }
}

/// One scalar per cell: center heatmaps, objectness maps, probability masks.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    stride: u32,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ScalarMap {
    pub fn zeros(stride: u32, height: usize, width: usize) -> Result<Self> {
        check_stride(stride)?;
        Ok(Self {
            stride,
            height,
            width,
            data: vec![0.0; height * width],
        })
    }

    pub fn from_data(stride: u32, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        let mut map = Self::zeros(stride, height, width)?;
        if data.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "scalar data length {} != {}x{}",
                data.len(),
                height,
                width
            )));
        }
        map.data = data;
        Ok(map)
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f32) {
        self.data[row * self.width + col] = value;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// True when every value lies in `[0, 1]`, the invariant expected of
    /// probability maps arriving from a bundle.
    pub fn is_probability_map(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(&(*v as f64)))
    }
}

/// Channel layout of a [`RegressionMap`] cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionCell {
    /// Offset from the cell to the object center, in cell units.
    pub dx: f32,
    pub dy: f32,
    /// Box extents in cell units.
    pub w: f32,
    pub h: f32,
}

/// Four channels per cell: center offset and box size, in cell units.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionMap {
    stride: u32,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl RegressionMap {
    pub const CHANNELS: usize = 4;

    pub fn zeros(stride: u32, height: usize, width: usize) -> Result<Self> {
        check_stride(stride)?;
        Ok(Self {
            stride,
            height,
            width,
            data: vec![0.0; height * width * Self::CHANNELS],
        })
    }

    pub fn from_data(stride: u32, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        let mut map = Self::zeros(stride, height, width)?;
        if data.len() != height * width * Self::CHANNELS {
            return Err(Error::ShapeMismatch(format!(
                "regression data length {} != {}x{}x4",
                data.len(),
                height,
                width
            )));
        }
        map.data = data;
        Ok(map)
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> RegressionCell {
        let base = (row * self.width + col) * Self::CHANNELS;
        RegressionCell {
            dx: self.data[base],
            dy: self.data[base + 1],
            w: self.data[base + 2],
            h: self.data[base + 3],
        }
    }

    pub fn set(&mut self, row: usize, col: usize, cell: RegressionCell) {
        let base = (row * self.width + col) * Self::CHANNELS;
        self.data[base] = cell.dx;
        self.data[base + 1] = cell.dy;
        self.data[base + 2] = cell.w;
        self.data[base + 3] = cell.h;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}
