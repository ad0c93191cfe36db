//! `decode`: per-level head tensors in, ranked proposal JSON plus a
//! content-query tensor out.

use std::path::Path;

use panoptic_core::bundle::{
    write_json_atomic, write_tensor_atomic, Manifest, ProposalRecord, ProposalsFile, FORMAT_VERSION,
};
use panoptic_core::proposals::decode_all;
use panoptic_core::rasters::Tensor;
use panoptic_core::{PipelineConfig, Result};

use crate::util::{collect_inputs, ensure_output_dir, run_parallel, stem};

pub fn run(input: &Path, output: &Path, config: &PipelineConfig, jobs: usize) -> Result<()> {
    let inputs = collect_inputs(input)?;
    ensure_output_dir(output)?;
    run_parallel(inputs, jobs, |path| {
        let manifest = Manifest::load(path)?;
        let base_dir = path.parent().unwrap_or(Path::new("."));
        let levels = manifest.load_level_heads(base_dir)?;
        let stuff = manifest.load_stuff_queries(base_dir)?;
        let n_stuff = stuff.len();
        let queries = decode_all(&levels, stuff, manifest.width, manifest.height, config)?;

        let channels = levels.first().map(|l| l.features.channels()).unwrap_or(0);
        let mut data = Vec::with_capacity(queries.things.len() * channels);
        for thing in &queries.things {
            data.extend(thing.content_query.iter().map(|&v| v as f32));
        }
        let tensor = Tensor::new(queries.things.len(), channels, 1, 1, data)?;
        let base = stem(path);
        let tensor_name = format!("{base}.queries.bin");
        write_tensor_atomic(&output.join(&tensor_name), &tensor)?;

        let file = ProposalsFile {
            format_version: FORMAT_VERSION,
            image_id: manifest.image_id.clone(),
            width: manifest.width,
            height: manifest.height,
            proposals: queries
                .things
                .iter()
                .map(ProposalRecord::from_proposal)
                .collect(),
            n_stuff_queries: n_stuff,
            content_queries: tensor_name,
        };
        write_json_atomic(&output.join(format!("{base}.proposals.json")), &file)
    })
    .map(|_| ())
}
