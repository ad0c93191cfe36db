//! Copy-paste augmentation: place donor instances at random locations in a
//! scene, optionally constrained to a region, occluding what they cover.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rasters::BinaryMask;
use crate::rng::rng_from_seed;
use crate::targets::GtInstance;

/// Retries per donor before it is skipped.
const PLACEMENT_RETRIES: usize = 50;

/// A ground-truth scene: image dimensions plus its instances, back to
/// front (later instances occlude earlier ones when pasted).
#[derive(Debug, Clone, PartialEq)]
pub struct GtScene {
    pub width: usize,
    pub height: usize,
    pub instances: Vec<GtInstance>,
}

/// Outcome of one augmentation run.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOutcome {
    pub scene: GtScene,
    /// Donors that found no valid placement within the retry budget.
    pub skipped: usize,
}

/// Translate a donor mask into the target raster, clipping at the borders.
fn translate_mask(
    mask: &BinaryMask,
    dx: isize,
    dy: isize,
    target_h: usize,
    target_w: usize,
) -> Result<BinaryMask> {
    let mut grid = vec![0u8; target_h * target_w];
    for &(start, len) in mask.runs() {
        for idx in start as usize..(start + len) as usize {
            let row = (idx / mask.width()) as isize + dy;
            let col = (idx % mask.width()) as isize + dx;
            if row >= 0 && col >= 0 && (row as usize) < target_h && (col as usize) < target_w {
                grid[row as usize * target_w + col as usize] = 1;
            }
        }
    }
    BinaryMask::encode(&grid, target_h, target_w)
}

/// Paste `count` donor instances into the scene at uniform random
/// positions whose pasted-mask centroid lies inside `region` (or anywhere
/// when `region` is `None`). Pasted masks occlude earlier content; fully
/// occluded instances are dropped and surviving boxes recomputed. A donor
/// with no valid placement after bounded retries is skipped and counted.
pub fn copy_paste(
    scene: &GtScene,
    donors: &[GtInstance],
    region: Option<&BinaryMask>,
    count: usize,
    seed: u64,
) -> Result<AugmentOutcome> {
    if let Some(region) = region {
        if region.height() != scene.height || region.width() != scene.width {
            return Err(Error::ShapeMismatch(format!(
                "region {}x{} vs scene {}x{}",
                region.height(),
                region.width(),
                scene.height,
                scene.width
            )));
        }
        if region.is_empty() {
            return Err(Error::EmptyDomain("paste region has no pixels".into()));
        }
    }
    if count > 0 && donors.is_empty() {
        return Err(Error::EmptyDomain("no donor instances".into()));
    }

    let mut rng = rng_from_seed(seed);
    let mut instances = scene.instances.clone();
    let mut skipped = 0usize;

    for _ in 0..count {
        let donor = &donors[rng.gen_range(0..donors.len())];
        let (dcx, dcy) = donor.mask.centroid().expect("gt instances are non-empty");

        let mut placed = None;
        for _ in 0..PLACEMENT_RETRIES {
            // Uniform target position for the donor centroid.
            let tx = rng.gen_range(0..scene.width) as f64;
            let ty = rng.gen_range(0..scene.height) as f64;
            let dx = (tx - dcx).round() as isize;
            let dy = (ty - dcy).round() as isize;
            let pasted = translate_mask(&donor.mask, dx, dy, scene.height, scene.width)?;
            let Some((cx, cy)) = pasted.centroid() else {
                continue;
            };
            if let Some(region) = region {
                let row = (cy.round() as usize).min(scene.height - 1);
                let col = (cx.round() as usize).min(scene.width - 1);
                if !region.contains(row, col) {
                    continue;
                }
            }
            placed = Some(pasted);
            break;
        }
        let Some(pasted) = placed else {
            skipped += 1;
            continue;
        };

        // Occlude earlier content and drop what vanishes.
        let mut survivors = Vec::with_capacity(instances.len() + 1);
        for instance in instances {
            let remaining = instance.mask.subtract(&pasted)?;
            if remaining.is_empty() {
                continue;
            }
            survivors.push(GtInstance::from_mask(
                instance.class_id,
                instance.is_thing,
                remaining,
            )?);
        }
        survivors.push(GtInstance::from_mask(
            donor.class_id,
            donor.is_thing,
            pasted,
        )?);
        instances = survivors;
    }

    Ok(AugmentOutcome {
        scene: GtScene {
            width: scene.width,
            height: scene.height,
            instances,
        },
        skipped,
    })
}
