//! Portable tensor file: one plain-text header line
//! `v1 <h> <w> <c> <stride>` followed by the row-major, channel-last
//! little-endian f32 payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rasters::{FeatureMap, RegressionMap, ScalarMap};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub stride: u32,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        stride: u32,
        data: Vec<f32>,
    ) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!(
                "tensor payload {} != {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            stride,
            data,
        })
    }

    pub fn into_scalar_map(self) -> Result<ScalarMap> {
        if self.channels != 1 {
            return Err(Error::ShapeMismatch(format!(
                "scalar map needs 1 channel, tensor has {}",
                self.channels
            )));
        }
        ScalarMap::from_data(self.stride, self.height, self.width, self.data)
    }

    pub fn into_regression_map(self) -> Result<RegressionMap> {
        if self.channels != RegressionMap::CHANNELS {
            return Err(Error::ShapeMismatch(format!(
                "regression map needs 4 channels, tensor has {}",
                self.channels
            )));
        }
        RegressionMap::from_data(self.stride, self.height, self.width, self.data)
    }

    pub fn into_feature_map(self) -> Result<FeatureMap> {
        FeatureMap::from_data(
            self.stride,
            self.height,
            self.width,
            self.channels,
            self.data,
        )
    }

    pub fn from_scalar_map(map: &ScalarMap) -> Self {
        Self {
            height: map.height(),
            width: map.width(),
            channels: 1,
            stride: map.stride(),
            data: map.data().to_vec(),
        }
    }

    pub fn from_regression_map(map: &RegressionMap) -> Self {
        Self {
            height: map.height(),
            width: map.width(),
            channels: RegressionMap::CHANNELS,
            stride: map.stride(),
            data: map.data().to_vec(),
        }
    }

    pub fn from_feature_map(map: &FeatureMap) -> Self {
        Self {
            height: map.height(),
            width: map.width(),
            channels: map.channels(),
            stride: map.stride(),
            data: map.data().to_vec(),
        }
    }
}

pub fn write_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "v1 {} {} {} {}",
        tensor.height, tensor.width, tensor.channels, tensor.stride
    )?;
    for v in &tensor.data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte)
            .map_err(|_| Error::Manifest(format!("{}: truncated tensor header", path.display())))?;
        if byte[0] == b'\n' {
            break;
        }
        if header.len() > 128 {
            return Err(Error::Manifest(format!(
                "{}: tensor header line too long",
                path.display()
            )));
        }
        header.push(byte[0]);
    }
    let header = String::from_utf8(header)
        .map_err(|_| Error::Manifest(format!("{}: non-utf8 tensor header", path.display())))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "v1" {
        return Err(Error::Manifest(format!(
            "{}: expected header `v1 <h> <w> <c> <stride>`, got `{header}`",
            path.display()
        )));
    }
    let parse = |s: &str, name: &str| -> Result<usize> {
        s.parse::<usize>().map_err(|_| {
            Error::Manifest(format!(
                "{}: bad {name} `{s}` in tensor header",
                path.display()
            ))
        })
    };
    let height = parse(fields[1], "height")?;
    let width = parse(fields[2], "width")?;
    let channels = parse(fields[3], "channels")?;
    let stride = parse(fields[4], "stride")? as u32;

    let expected = height * width * channels;
    let mut payload = vec![0u8; expected * 4];
    r.read_exact(&mut payload).map_err(|_| {
        Error::ShapeMismatch(format!(
            "{}: payload shorter than {expected} f32 values",
            path.display()
        ))
    })?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::ShapeMismatch(format!(
            "{}: payload longer than declared shape",
            path.display()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Tensor::new(height, width, channels, stride, data)
}
