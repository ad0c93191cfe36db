//! `gen-targets`: ground-truth scenes in, per-level supervision tensors
//! plus a targets manifest out.

use std::path::Path;

use panoptic_core::bundle::{
    write_json_atomic, write_tensor_atomic, Manifest, TargetLevelFiles, TargetsFile, FORMAT_VERSION,
};
use panoptic_core::rasters::Tensor;
use panoptic_core::targets::all_level_targets;
use panoptic_core::Result;

use crate::util::{collect_inputs, ensure_output_dir, run_parallel, stem};

pub fn run(input: &Path, output: &Path, jobs: usize) -> Result<()> {
    let inputs = collect_inputs(input)?;
    ensure_output_dir(output)?;
    run_parallel(inputs, jobs, |path| {
        let manifest = Manifest::load(path)?;
        let instances = manifest.decode_gt_instances()?;
        let targets = all_level_targets(&instances, manifest.width, manifest.height)?;
        let base = stem(path);

        let mut levels = Vec::with_capacity(targets.len());
        for level in &targets {
            let name = |kind: &str| format!("{base}.s{}.{kind}.bin", level.stride);
            write_tensor_atomic(
                &output.join(name("center")),
                &Tensor::from_scalar_map(&level.center),
            )?;
            write_tensor_atomic(
                &output.join(name("regression")),
                &Tensor::from_regression_map(&level.regression),
            )?;
            write_tensor_atomic(
                &output.join(name("objectness")),
                &Tensor::from_scalar_map(&level.objectness),
            )?;
            levels.push(TargetLevelFiles {
                stride: level.stride,
                center: name("center"),
                regression: name("regression"),
                objectness: name("objectness"),
                ignore: level.ignore.clone(),
            });
        }
        let file = TargetsFile {
            format_version: FORMAT_VERSION,
            image_id: manifest.image_id.clone(),
            width: manifest.width,
            height: manifest.height,
            levels,
        };
        write_json_atomic(&output.join(format!("{base}.targets.json")), &file)
    })
    .map(|_| ())
}
