//! `eval`: panoptic map pairs in, a PQ/RQ/SQ report out — per class, All,
//! Th, class-agnostic Th and St, as JSON plus an optional aligned text
//! table.

use std::path::Path;

use panoptic_core::bundle::{load_classes, write_json_atomic, PanopticFile};
use panoptic_core::metrics::{
    aggregate, class_agnostic_counts, class_agnostic_score, pq_evaluate, PqCounts, PqReport,
};
use panoptic_core::{Error, Result};

use crate::util::{pair_inputs, run_parallel};

pub fn run(
    pred: &Path,
    gt: &Path,
    classes_path: &Path,
    output: &Path,
    text: Option<&Path>,
    jobs: usize,
) -> Result<()> {
    let classes = load_classes(classes_path)?;
    let pairs = pair_inputs(pred, gt)?;
    let per_image = run_parallel(pairs, jobs, |(pred_path, gt_path)| {
        let pred_map = PanopticFile::load(pred_path)?.to_map()?;
        let gt_map = PanopticFile::load(gt_path)?.to_map()?;
        if pred_map.height() != gt_map.height() || pred_map.width() != gt_map.width() {
            return Err(Error::ShapeMismatch(format!(
                "{}: pred {}x{} vs gt {}x{}",
                pred_path.display(),
                pred_map.height(),
                pred_map.width(),
                gt_map.height(),
                gt_map.width()
            )));
        }
        let counts = pq_evaluate(&pred_map, &gt_map)?;
        let agnostic = class_agnostic_counts(&pred_map, &gt_map)?;
        Ok((counts, agnostic))
    })?;

    // Counts are a commutative monoid; merging in input order keeps the
    // report independent of worker scheduling.
    let mut counts = PqCounts::default();
    let mut agnostic = PqCounts::default();
    for (c, a) in &per_image {
        counts.merge(c);
        agnostic.merge(a);
    }

    let defs: Vec<_> = classes.iter().map(|c| c.def()).collect();
    let mut report = aggregate(&counts, &defs);
    report.things_agnostic = class_agnostic_score(&agnostic);

    if let Some(parent) = output.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    write_json_atomic(output, &report)?;

    // The text table always accompanies the report; --text moves it.
    let default_text = output.with_extension("txt");
    let text_path = text.unwrap_or(&default_text);
    std::fs::write(text_path, render_table(&report))?;
    Ok(())
}

/// Aligned table: one metric per row over All / Th / Th_a / St.
fn render_table(report: &PqReport) -> String {
    let cell = |value: Option<f64>| match value {
        Some(v) => format!("{:>8.4}", v),
        None => format!("{:>8}", "-"),
    };
    // (metric name, [All, Th, Th_a, St]) with absent groups as None.
    let pick = |idx: usize| -> [Option<f64>; 4] {
        let of_group = |g: &panoptic_core::metrics::GroupScore| [g.pq, g.rq, g.sq][idx];
        let of_class = |c: &panoptic_core::metrics::ClassScore| [c.pq, c.rq, c.sq][idx];
        [
            report.all.as_ref().map(of_group),
            report.things.as_ref().map(of_group),
            report.things_agnostic.as_ref().map(of_class),
            report.stuff.as_ref().map(of_group),
        ]
    };
    let mut out = String::new();
    out.push_str(&format!(
        "{:<6}{:>8}{:>8}{:>8}{:>8}\n",
        "metric", "All", "Th", "Th_a", "St"
    ));
    for (idx, name) in ["PQ", "RQ", "SQ"].iter().enumerate() {
        let [all, th, th_a, st] = pick(idx);
        out.push_str(&format!(
            "{:<6}{}{}{}{}\n",
            name,
            cell(all),
            cell(th),
            cell(th_a),
            cell(st)
        ));
    }
    out
}
