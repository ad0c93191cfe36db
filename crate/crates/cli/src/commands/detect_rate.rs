//! `detect-rate`: size-binned detection rates of ground-truth things.

use std::path::Path;

use panoptic_core::bundle::{write_json_atomic, PanopticFile, FORMAT_VERSION};
use panoptic_core::metrics::detection_rate_by_size;
use panoptic_core::rasters::PanopticMap;
use panoptic_core::{PipelineConfig, Result};

use crate::util::{pair_inputs, run_parallel};

#[derive(serde::Serialize)]
struct DetectionRateFile {
    format_version: u32,
    bins: Vec<panoptic_core::metrics::SizeBinRate>,
}

pub fn run(
    pred: &Path,
    gt: &Path,
    output: &Path,
    config: &PipelineConfig,
    jobs: usize,
) -> Result<()> {
    let pairs = pair_inputs(pred, gt)?;
    let maps: Vec<(PanopticMap, PanopticMap)> =
        run_parallel(pairs, jobs, |(pred_path, gt_path)| {
            Ok((
                PanopticFile::load(pred_path)?.to_map()?,
                PanopticFile::load(gt_path)?.to_map()?,
            ))
        })?;
    let refs: Vec<(&PanopticMap, &PanopticMap)> = maps.iter().map(|(p, g)| (p, g)).collect();
    let bins = detection_rate_by_size(&refs, &config.size_bin_edges.0)?;

    if let Some(parent) = output.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    write_json_atomic(
        output,
        &DetectionRateFile {
            format_version: FORMAT_VERSION,
            bins,
        },
    )
}
