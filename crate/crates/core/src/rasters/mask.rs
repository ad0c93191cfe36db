//! Run-length encoded binary masks.
//!
//! Runs are `(start, length)` pairs over row-major pixel order, sorted,
//! non-overlapping and strictly inside the raster. Encoding is lossless.

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    /// `(start, length)` foreground runs in row-major order, length > 0.
    runs: Vec<(u32, u32)>,
}

/// Deserialization revalidates the run invariants so malformed manifests
/// cannot smuggle in overlapping or out-of-bounds runs.
impl<'de> Deserialize<'de> for BinaryMask {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            height: usize,
            width: usize,
            runs: Vec<(u32, u32)>,
        }
        let raw = Raw::deserialize(deserializer)?;
        BinaryMask::from_runs(raw.height, raw.width, raw.runs).map_err(serde::de::Error::custom)
    }
}

impl BinaryMask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            runs: Vec::new(),
        }
    }

    /// Encode a dense 0/1 grid (row-major, length `height * width`).
    pub fn encode(grid: &[u8], height: usize, width: usize) -> Result<Self> {
        if grid.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "mask grid length {} != {}x{}",
                grid.len(),
                height,
                width
            )));
        }
        let mut runs = Vec::new();
        let mut start = None;
        for (i, &v) in grid.iter().enumerate() {
            match (v != 0, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    runs.push((s as u32, (i - s) as u32));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            runs.push((s as u32, (grid.len() - s) as u32));
        }
        Ok(Self {
            height,
            width,
            runs,
        })
    }

    pub fn from_bools(grid: &[bool], height: usize, width: usize) -> Result<Self> {
        let bytes: Vec<u8> = grid.iter().map(|&b| b as u8).collect();
        Self::encode(&bytes, height, width)
    }

    /// Build directly from runs, validating the mask invariants.
    pub fn from_runs(height: usize, width: usize, runs: Vec<(u32, u32)>) -> Result<Self> {
        let total = (height * width) as u64;
        let mut prev_end = 0u64;
        for &(start, len) in &runs {
            if len == 0 {
                return Err(Error::InvalidValue("zero-length run".into()));
            }
            if (start as u64) < prev_end {
                return Err(Error::InvalidValue(
                    "runs must be sorted and disjoint".into(),
                ));
            }
            prev_end = start as u64 + len as u64;
            if prev_end > total {
                return Err(Error::OutOfBounds(format!(
                    "run ({start}, {len}) exceeds {height}x{width} raster"
                )));
            }
        }
        Ok(Self {
            height,
            width,
            runs,
        })
    }

    /// Decode to a dense 0/1 grid in row-major order.
    pub fn decode(&self) -> Vec<u8> {
        let mut grid = vec![0u8; self.height * self.width];
        for &(start, len) in &self.runs {
            for slot in &mut grid[start as usize..(start + len) as usize] {
                *slot = 1;
            }
        }
        grid
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn runs(&self) -> &[(u32, u32)] {
        &self.runs
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    /// Foreground pixel count.
    pub fn area(&self) -> u64 {
        self.runs.iter().map(|&(_, len)| len as u64).sum()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        if row >= self.height || col >= self.width {
            return false;
        }
        let idx = (row * self.width + col) as u32;
        // Runs are sorted by start; locate the last run starting at or before idx.
        match self.runs.binary_search_by(|&(start, _)| start.cmp(&idx)) {
            Ok(_) => true,
            Err(0) => false,
            Err(pos) => {
                let (start, len) = self.runs[pos - 1];
                idx < start + len
            }
        }
    }

    /// Intersection pixel count via a two-pointer merge over the run lists.
    pub fn intersection_area(&self, other: &Self) -> Result<u64> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::ShapeMismatch(format!(
                "mask dims {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        let mut inter = 0u64;
        let mut i = 0;
        let mut j = 0;
        while i < self.runs.len() && j < other.runs.len() {
            let (a_start, a_len) = self.runs[i];
            let (b_start, b_len) = other.runs[j];
            let (a_end, b_end) = (a_start + a_len, b_start + b_len);
            let lo = a_start.max(b_start);
            let hi = a_end.min(b_end);
            if hi > lo {
                inter += (hi - lo) as u64;
            }
            if a_end <= b_end {
                i += 1;
            } else {
                j += 1;
            }
        }
        Ok(inter)
    }

    /// Mask IoU; 0 when both masks are empty.
    pub fn iou(&self, other: &Self) -> Result<f64> {
        let inter = self.intersection_area(other)?;
        let union = self.area() + other.area() - inter;
        if union == 0 {
            return Ok(0.0);
        }
        Ok(inter as f64 / union as f64)
    }

    /// Tight bounding box as `(x0, y0, x1, y1)` pixel corners (exclusive
    /// upper), or `None` for an empty mask.
    pub fn tight_bbox(&self) -> Option<(usize, usize, usize, usize)> {
        if self.runs.is_empty() {
            return None;
        }
        let mut x0 = self.width;
        let mut x1 = 0usize;
        let mut y0 = self.height;
        let mut y1 = 0usize;
        for &(start, len) in &self.runs {
            let (start, len) = (start as usize, len as usize);
            let row_first = start / self.width;
            let row_last = (start + len - 1) / self.width;
            y0 = y0.min(row_first);
            y1 = y1.max(row_last + 1);
            if row_first == row_last {
                x0 = x0.min(start % self.width);
                x1 = x1.max((start + len - 1) % self.width + 1);
            } else {
                // A run spanning rows covers full rows in between.
                x0 = 0;
                x1 = self.width;
            }
        }
        Some((x0, y0, x1, y1))
    }

    /// Pixel centroid of the foreground, or `None` when empty.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        if self.runs.is_empty() {
            return None;
        }
        let mut sx = 0.0f64;
        let mut sy = 0.0f64;
        let mut n = 0.0f64;
        for &(start, len) in &self.runs {
            for idx in start..start + len {
                let idx = idx as usize;
                sx += (idx % self.width) as f64;
                sy += (idx / self.width) as f64;
                n += 1.0;
            }
        }
        Some((sx / n, sy / n))
    }

    /// Remove every pixel also set in `other`.
    pub fn subtract(&self, other: &Self) -> Result<Self> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::ShapeMismatch("subtract dims differ".into()));
        }
        let mut grid = self.decode();
        for &(start, len) in other.runs() {
            for slot in &mut grid[start as usize..(start + len) as usize] {
                *slot = 0;
            }
        }
        Self::encode(&grid, self.height, self.width)
    }

    /// Pixelwise union.
    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::ShapeMismatch("union dims differ".into()));
        }
        let mut grid = self.decode();
        for &(start, len) in other.runs() {
            for slot in &mut grid[start as usize..(start + len) as usize] {
                *slot = 1;
            }
        }
        Self::encode(&grid, self.height, self.width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_zero_grid_has_no_runs() {
        let m = BinaryMask::encode(&[0; 12], 3, 4).unwrap();
        assert!(m.runs().is_empty());
        assert_eq!(m.area(), 0);
    }

    #[test]
    fn all_one_grid_is_a_single_run() {
        let m = BinaryMask::encode(&[1; 12], 3, 4).unwrap();
        assert_eq!(m.runs(), &[(0, 12)]);
    }

    #[test]
    fn random_grid_round_trips() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let grid: Vec<u8> = (0..256).map(|_| rng.gen_range(0..=1u8)).collect();
            let m = BinaryMask::encode(&grid, 16, 16).unwrap();
            assert_eq!(m.decode(), grid);
        }
    }

    #[test]
    fn from_runs_rejects_overlap_and_overflow() {
        assert!(BinaryMask::from_runs(2, 4, vec![(0, 3), (2, 2)]).is_err());
        assert!(BinaryMask::from_runs(2, 4, vec![(6, 3)]).is_err());
        assert!(BinaryMask::from_runs(2, 4, vec![(0, 0)]).is_err());
        assert!(BinaryMask::from_runs(2, 4, vec![(0, 3), (4, 4)]).is_ok());
    }

    #[test]
    fn contains_agrees_with_decode() {
        let grid: Vec<u8> = vec![0, 1, 1, 0, 1, 0, 0, 1, 1, 1, 0, 0];
        let m = BinaryMask::encode(&grid, 3, 4).unwrap();
        for row in 0..3 {
            for col in 0..4 {
                assert_eq!(m.contains(row, col), grid[row * 4 + col] != 0);
            }
        }
        assert!(!m.contains(5, 0));
    }

    #[test]
    fn intersection_matches_dense_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let a: Vec<u8> = (0..120)
                .map(|_| (rng.gen_range(0..3u8) == 0) as u8)
                .collect();
            let b: Vec<u8> = (0..120)
                .map(|_| (rng.gen_range(0..3u8) == 0) as u8)
                .collect();
            let ma = BinaryMask::encode(&a, 10, 12).unwrap();
            let mb = BinaryMask::encode(&b, 10, 12).unwrap();
            let dense: u64 = a
                .iter()
                .zip(&b)
                .map(|(x, y)| (*x != 0 && *y != 0) as u64)
                .sum();
            assert_eq!(ma.intersection_area(&mb).unwrap(), dense);
        }
    }

    #[test]
    fn tight_bbox_and_centroid() {
        let mut grid = vec![0u8; 8 * 8];
        for row in 2..5 {
            for col in 3..6 {
                grid[row * 8 + col] = 1;
            }
        }
        let m = BinaryMask::encode(&grid, 8, 8).unwrap();
        assert_eq!(m.tight_bbox(), Some((3, 2, 6, 5)));
        let (cx, cy) = m.centroid().unwrap();
        assert!((cx - 4.0).abs() < 1e-12);
        assert!((cy - 3.0).abs() < 1e-12);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rle_round_trip_identity(grid in proptest::collection::vec(0u8..=1, 64)) {
                let m = BinaryMask::encode(&grid, 8, 8).unwrap();
                prop_assert_eq!(m.decode(), grid);
            }

            #[test]
            fn serde_round_trip(grid in proptest::collection::vec(0u8..=1, 48)) {
                let m = BinaryMask::encode(&grid, 6, 8).unwrap();
                let json = serde_json::to_string(&m).unwrap();
                let back: BinaryMask = serde_json::from_str(&json).unwrap();
                prop_assert_eq!(back, m);
            }
        }

        #[test]
        fn deserialize_rejects_invalid_runs() {
            let overlapping = r#"{"height":2,"width":4,"runs":[[0,3],[2,2]]}"#;
            assert!(serde_json::from_str::<BinaryMask>(overlapping).is_err());
            let oob = r#"{"height":2,"width":4,"runs":[[7,5]]}"#;
            assert!(serde_json::from_str::<BinaryMask>(oob).is_err());
        }
    }
}
