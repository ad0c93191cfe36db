//! `fuse`: prediction bundles in, panoptic maps out. Thing predictions run
//! through test-time box NMS before the greedy paste.

use std::path::Path;

use panoptic_core::bundle::{write_json_atomic, Manifest, PanopticFile};
use panoptic_core::fusion::{fuse, FusionInput};
use panoptic_core::matching::test_time_nms;
use panoptic_core::{PipelineConfig, Result};

use crate::util::{collect_inputs, ensure_output_dir, run_parallel, stem};

pub fn run(input: &Path, output: &Path, config: &PipelineConfig, jobs: usize) -> Result<()> {
    let inputs = collect_inputs(input)?;
    ensure_output_dir(output)?;
    run_parallel(inputs, jobs, |path| {
        let manifest = Manifest::load(path)?;
        let records = &manifest.predictions;
        let predictions = manifest.instance_predictions()?;

        let thing_indices: Vec<usize> = (0..records.len())
            .filter(|&i| records[i].is_thing)
            .collect();
        let thing_preds: Vec<_> = thing_indices
            .iter()
            .map(|&i| predictions[i].clone())
            .collect();
        let kept = test_time_nms(&thing_preds, config.test_nms.iou_threshold)?;

        let things: Vec<FusionInput> = kept
            .iter()
            .map(|&k| {
                let record = &records[thing_indices[k]];
                FusionInput {
                    class_id: record.class_id,
                    confidence: record.confidence,
                    is_thing: true,
                    mask: record.mask.clone(),
                }
            })
            .collect();
        let stuffs: Vec<FusionInput> = records
            .iter()
            .filter(|r| !r.is_thing)
            .map(|r| FusionInput {
                class_id: r.class_id,
                confidence: r.confidence,
                is_thing: false,
                mask: r.mask.clone(),
            })
            .collect();

        // Named by input stem so a fused directory pairs with a GT panoptic
        // directory in `eval` and `detect-rate`.
        let map = fuse(
            &things,
            &stuffs,
            manifest.width,
            manifest.height,
            &config.fusion,
        )?;
        let file = PanopticFile::from_map(manifest.image_id.clone(), &map);
        write_json_atomic(&output.join(format!("{}.json", stem(path))), &file)
    })
    .map(|_| ())
}
