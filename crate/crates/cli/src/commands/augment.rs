//! `augment`: copy-paste donor thing instances into ground-truth scenes.
//! Each image draws from a substream of the explicit seed, so results do
//! not depend on worker scheduling.

use std::path::Path;

use panoptic_core::augment::{copy_paste, GtScene};
use panoptic_core::bundle::{GtRecord, Manifest};
use panoptic_core::rasters::BinaryMask;
use panoptic_core::rng::item_seed;
use panoptic_core::targets::GtInstance;
use panoptic_core::{Error, Result};

use crate::util::{collect_inputs, ensure_output_dir, run_parallel, stem};

pub fn run(
    input: &Path,
    donors_path: &Path,
    count: usize,
    seed: u64,
    region_class: Option<u32>,
    output: &Path,
    jobs: usize,
) -> Result<()> {
    // Donor pool: every thing instance across the donor manifests.
    let mut donors: Vec<GtInstance> = Vec::new();
    for path in collect_inputs(donors_path)? {
        let manifest = Manifest::load(&path)?;
        donors.extend(manifest.decode_gt_instances()?.into_iter().filter(|i| i.is_thing));
    }
    if donors.is_empty() && count > 0 {
        return Err(Error::EmptyDomain(
            "donor manifests hold no thing instances".into(),
        ));
    }

    let inputs = collect_inputs(input)?;
    ensure_output_dir(output)?;
    let warnings = run_parallel(inputs, jobs, |path| {
        let mut manifest = Manifest::load(path)?;
        let instances = manifest.decode_gt_instances()?;
        let scene = GtScene {
            width: manifest.width,
            height: manifest.height,
            instances,
        };

        let region = match region_class {
            None => None,
            Some(class_id) => {
                let mut region = BinaryMask::empty(manifest.height, manifest.width);
                for record in &manifest.gt_instances {
                    if !record.is_thing && record.class_id == class_id {
                        region = region.union(&record.mask)?;
                    }
                }
                if region.is_empty() {
                    return Err(Error::EmptyDomain(format!(
                        "{}: no stuff segment of class {class_id} to paste into",
                        path.display()
                    )));
                }
                Some(region)
            }
        };

        let outcome = copy_paste(
            &scene,
            &donors,
            region.as_ref(),
            count,
            item_seed(seed, &manifest.image_id),
        )?;

        manifest.gt_instances = outcome
            .scene
            .instances
            .iter()
            .map(|i| GtRecord {
                class_id: i.class_id,
                is_thing: i.is_thing,
                mask: i.mask.clone(),
            })
            .collect();
        manifest.save(&output.join(format!("{}.json", stem(path))))?;
        Ok((manifest.image_id.clone(), outcome.skipped))
    })?;

    for (image_id, skipped) in warnings {
        if skipped > 0 {
            eprintln!("warning: {image_id}: {skipped} donor(s) found no valid placement");
        }
    }
    Ok(())
}
