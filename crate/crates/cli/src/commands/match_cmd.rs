//! `match`: prediction and ground-truth bundles in, a stage-annotated
//! match set out. Matching runs on thing predictions against thing
//! ground-truth segments (stuff queries take a plain one-to-one assignment
//! elsewhere and never enter the refinement stages); emitted indices refer
//! to positions in the input manifests.

use std::path::Path;

use panoptic_core::bundle::{write_json_atomic, Manifest, MatchFile, FORMAT_VERSION};
use panoptic_core::matching::{base_match, refine_matches, MatchRecord, MatchSet};
use panoptic_core::{Error, PipelineConfig, Result};

use crate::util::{ensure_output_dir, pair_inputs, run_parallel, stem};

fn remap(set: MatchSet, pred_idx: &[usize], gt_idx: &[usize]) -> MatchSet {
    let map_record = |m: &MatchRecord| MatchRecord {
        query: pred_idx[m.query],
        gt: gt_idx[m.gt],
        ..*m
    };
    MatchSet {
        matches: set.matches.iter().map(map_record).collect(),
        removed: set.removed.iter().map(map_record).collect(),
        unmatched_queries: set.unmatched_queries.iter().map(|&q| pred_idx[q]).collect(),
        unmatched_gts: set.unmatched_gts.iter().map(|&g| gt_idx[g]).collect(),
    }
}

pub fn run(
    predictions: &Path,
    gt: &Path,
    output: &Path,
    refine: bool,
    config: &PipelineConfig,
    jobs: usize,
) -> Result<()> {
    let pairs = pair_inputs(predictions, gt)?;
    ensure_output_dir(output)?;
    run_parallel(pairs, jobs, |(pred_path, gt_path)| {
        let pred_manifest = Manifest::load(pred_path)?;
        let gt_manifest = Manifest::load(gt_path)?;
        if pred_manifest.width != gt_manifest.width || pred_manifest.height != gt_manifest.height {
            return Err(Error::ShapeMismatch(format!(
                "{}: image {}x{} vs gt {}x{}",
                pred_path.display(),
                pred_manifest.width,
                pred_manifest.height,
                gt_manifest.width,
                gt_manifest.height
            )));
        }
        let all_preds = pred_manifest.instance_predictions()?;
        let all_gts = gt_manifest.decode_gt_instances()?;
        let pred_idx: Vec<usize> = (0..all_preds.len())
            .filter(|&i| all_preds[i].is_thing)
            .collect();
        let gt_idx: Vec<usize> = (0..all_gts.len())
            .filter(|&i| all_gts[i].is_thing)
            .collect();
        let preds: Vec<_> = pred_idx.iter().map(|&i| all_preds[i].clone()).collect();
        let gts: Vec<_> = gt_idx.iter().map(|&i| all_gts[i].clone()).collect();

        let base = base_match(
            &preds,
            &gts,
            &config.loss_weights,
            &config.focal,
            pred_manifest.width,
            pred_manifest.height,
        )?;
        let matches = if refine {
            refine_matches(
                &base,
                &preds,
                &gts,
                &config.refinement,
                pred_manifest.width,
                pred_manifest.height,
            )?
        } else {
            base
        };
        let file = MatchFile {
            format_version: FORMAT_VERSION,
            image_id: pred_manifest.image_id.clone(),
            refined: refine,
            matches: remap(matches, &pred_idx, &gt_idx),
        };
        write_json_atomic(
            &output.join(format!("{}.matches.json", stem(pred_path))),
            &file,
        )
    })
    .map(|_| ())
}
