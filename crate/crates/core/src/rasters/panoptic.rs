//! Per-pixel segment-id raster plus a segment table. Id 0 is reserved for
//! void/ignore; every other id present in the raster must appear in the
//! table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rasters::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentInfo {
    pub class_id: u32,
    pub is_thing: bool,
}

/// Serialized form of one segment: table entry plus its RLE mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub id: u32,
    pub class_id: u32,
    pub is_thing: bool,
    pub mask: BinaryMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanopticMap {
    height: usize,
    width: usize,
    ids: Vec<u32>,
    segments: BTreeMap<u32, SegmentInfo>,
}

impl PanopticMap {
    /// All-void map.
    pub fn void(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            ids: vec![0; height * width],
            segments: BTreeMap::new(),
        }
    }

    pub fn from_parts(
        height: usize,
        width: usize,
        ids: Vec<u32>,
        segments: BTreeMap<u32, SegmentInfo>,
    ) -> Result<Self> {
        if ids.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "id raster length {} != {}x{}",
                ids.len(),
                height,
                width
            )));
        }
        let map = Self {
            height,
            width,
            ids,
            segments,
        };
        map.validate()?;
        Ok(map)
    }

    /// Check that every nonzero pixel id has a table entry and the table
    /// holds no id 0.
    pub fn validate(&self) -> Result<()> {
        if self.segments.contains_key(&0) {
            return Err(Error::InvalidValue(
                "segment id 0 is reserved for void".into(),
            ));
        }
        for &id in &self.ids {
            if id != 0 && !self.segments.contains_key(&id) {
                return Err(Error::InvalidValue(format!(
                    "pixel id {id} missing from the segment table"
                )));
            }
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn ids(&self) -> &[u32] {
        &self.ids
    }
    pub fn segments(&self) -> &BTreeMap<u32, SegmentInfo> {
        &self.segments
    }

    pub fn id_at(&self, row: usize, col: usize) -> u32 {
        self.ids[row * self.width + col]
    }

    pub fn set_id(&mut self, row: usize, col: usize, id: u32) {
        self.ids[row * self.width + col] = id;
    }

    pub fn insert_segment(&mut self, id: u32, info: SegmentInfo) {
        self.segments.insert(id, info);
    }

    /// RLE mask of one segment.
    pub fn segment_mask(&self, id: u32) -> Result<BinaryMask> {
        if !self.segments.contains_key(&id) {
            return Err(Error::InvalidValue(format!("unknown segment id {id}")));
        }
        let grid: Vec<u8> = self.ids.iter().map(|&v| (v == id) as u8).collect();
        BinaryMask::encode(&grid, self.height, self.width)
    }

    /// Mask of void (id 0) pixels.
    pub fn void_mask(&self) -> BinaryMask {
        let grid: Vec<u8> = self.ids.iter().map(|&v| (v == 0) as u8).collect();
        BinaryMask::encode(&grid, self.height, self.width).expect("grid sized from raster")
    }

    /// Decompose into per-segment RLE entries (the serialized form).
    pub fn to_entries(&self) -> Vec<SegmentEntry> {
        self.segments
            .iter()
            .map(|(&id, info)| SegmentEntry {
                id,
                class_id: info.class_id,
                is_thing: info.is_thing,
                mask: self.segment_mask(id).expect("id from table"),
            })
            .collect()
    }

    /// Rebuild from per-segment entries. Masks must be pairwise disjoint and
    /// ids unique.
    pub fn from_entries(height: usize, width: usize, entries: &[SegmentEntry]) -> Result<Self> {
        let mut map = Self::void(height, width);
        for entry in entries {
            if entry.id == 0 {
                return Err(Error::InvalidValue(
                    "segment id 0 is reserved for void".into(),
                ));
            }
            if map.segments.contains_key(&entry.id) {
                return Err(Error::InvalidValue(format!(
                    "duplicate segment id {}",
                    entry.id
                )));
            }
            if entry.mask.height() != height || entry.mask.width() != width {
                return Err(Error::ShapeMismatch(format!(
                    "segment {} mask dims {}x{} != map {}x{}",
                    entry.id,
                    entry.mask.height(),
                    entry.mask.width(),
                    height,
                    width
                )));
            }
            for &(start, len) in entry.mask.runs() {
                for idx in start as usize..(start + len) as usize {
                    if map.ids[idx] != 0 {
                        return Err(Error::InvalidValue(format!(
                            "segments {} and {} overlap at pixel {idx}",
                            map.ids[idx], entry.id
                        )));
                    }
                    map.ids[idx] = entry.id;
                }
            }
            map.segments.insert(
                entry.id,
                SegmentInfo {
                    class_id: entry.class_id,
                    is_thing: entry.is_thing,
                },
            );
        }
        Ok(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_mask(h: usize, w: usize, r0: usize, c0: usize, r1: usize, c1: usize) -> BinaryMask {
        let mut grid = vec![0u8; h * w];
        for row in r0..r1 {
            for col in c0..c1 {
                grid[row * w + col] = 1;
            }
        }
        BinaryMask::encode(&grid, h, w).unwrap()
    }

    #[test]
    fn validation_rejects_untabled_pixel_ids() {
        let mut ids = vec![0u32; 16];
        ids[5] = 3;
        let err = PanopticMap::from_parts(4, 4, ids, BTreeMap::new());
        assert!(err.is_err());
    }

    #[test]
    fn entry_round_trip() {
        let entries = vec![
            SegmentEntry {
                id: 1,
                class_id: 2,
                is_thing: true,
                mask: square_mask(6, 6, 0, 0, 3, 3),
            },
            SegmentEntry {
                id: 7,
                class_id: 5,
                is_thing: false,
                mask: square_mask(6, 6, 3, 3, 6, 6),
            },
        ];
        let map = PanopticMap::from_entries(6, 6, &entries).unwrap();
        map.validate().unwrap();
        assert_eq!(map.id_at(1, 1), 1);
        assert_eq!(map.id_at(4, 4), 7);
        assert_eq!(map.id_at(0, 5), 0);
        let back = map.to_entries();
        assert_eq!(back, entries);
    }

    #[test]
    fn overlapping_entries_are_rejected() {
        let entries = vec![
            SegmentEntry {
                id: 1,
                class_id: 1,
                is_thing: true,
                mask: square_mask(4, 4, 0, 0, 3, 3),
            },
            SegmentEntry {
                id: 2,
                class_id: 1,
                is_thing: true,
                mask: square_mask(4, 4, 2, 2, 4, 4),
            },
        ];
        assert!(PanopticMap::from_entries(4, 4, &entries).is_err());
    }
}
