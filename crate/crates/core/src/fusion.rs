//! Greedy panoptic fusion: paste binary segment masks in descending
//! confidence, dropping predictions that lose too much of their area to
//! earlier segments.

use crate::config::FusionConfig;
use crate::error::{Error, Result};
use crate::rasters::{BinaryMask, PanopticMap, SegmentInfo};

/// One candidate segment entering fusion, mask at image resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionInput {
    pub class_id: u32,
    pub confidence: f64,
    pub is_thing: bool,
    pub mask: BinaryMask,
}

/// Fuse thing and stuff candidates into a panoptic map.
///
/// Candidates paste greedily in descending confidence (ties: things before
/// stuff, then input order). A candidate claims its not-yet-claimed pixels;
/// it is dropped entirely when the surviving fraction falls below the
/// retention threshold, when (for stuff) the surviving area is below the
/// minimum, or when its confidence misses the floor. Unclaimed pixels stay
/// void.
pub fn fuse(
    things: &[FusionInput],
    stuffs: &[FusionInput],
    image_w: usize,
    image_h: usize,
    config: &FusionConfig,
) -> Result<PanopticMap> {
    let mut order: Vec<&FusionInput> = things.iter().chain(stuffs.iter()).collect();
    for input in &order {
        if input.mask.height() != image_h || input.mask.width() != image_w {
            return Err(Error::ShapeMismatch(format!(
                "segment mask {}x{} vs image {}x{}",
                input.mask.height(),
                input.mask.width(),
                image_h,
                image_w
            )));
        }
    }
    // Stable sort keeps (is_thing first, then input order) on ties.
    order.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| b.is_thing.cmp(&a.is_thing))
    });

    let mut map = PanopticMap::void(image_h, image_w);
    let mut claimed = vec![false; image_h * image_w];
    let mut next_id = 1u32;

    for input in order {
        if input.confidence < config.confidence_floor {
            continue;
        }
        let area = input.mask.area();
        if area == 0 {
            continue;
        }
        let free: Vec<usize> = input
            .mask
            .runs()
            .iter()
            .flat_map(|&(start, len)| start as usize..(start + len) as usize)
            .filter(|&idx| !claimed[idx])
            .collect();
        let surviving = free.len() as u64;
        if (surviving as f64) / (area as f64) < config.retention_threshold {
            continue;
        }
        if !input.is_thing && surviving < config.stuff_min_area {
            continue;
        }
        if surviving == 0 {
            continue;
        }
        let id = next_id;
        next_id += 1;
        for idx in free {
            claimed[idx] = true;
            map.set_id(idx / image_w, idx % image_w, id);
        }
        map.insert_segment(
            id,
            SegmentInfo {
                class_id: input.class_id,
                is_thing: input.is_thing,
            },
        );
    }
    map.validate()?;
    Ok(map)
}
