//! Input discovery, deterministic parallel mapping and output naming.

use std::path::{Path, PathBuf};

use panoptic_core::{Error, Result};

/// Resolve an input path into manifest files: a file stands alone, a
/// directory contributes its `*.json` entries sorted by name.
pub fn collect_inputs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Manifest(format!(
                "{}: directory holds no .json manifests",
                path.display()
            )));
        }
        return Ok(files);
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("{}: no such file or directory", path.display()),
    )))
}

/// Pair two input sets by file name. Single files pair directly.
pub fn pair_inputs(a: &Path, b: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let left = collect_inputs(a)?;
    let right = collect_inputs(b)?;
    if left.len() == 1 && right.len() == 1 {
        return Ok(vec![(left[0].clone(), right[0].clone())]);
    }
    let mut pairs = Vec::with_capacity(left.len());
    for l in &left {
        let name = l.file_name().expect("collected inputs are files");
        let matching = right.iter().find(|r| r.file_name() == Some(name));
        let Some(r) = matching else {
            return Err(Error::Manifest(format!(
                "{}: no counterpart named {} under {}",
                l.display(),
                name.to_string_lossy(),
                b.display()
            )));
        };
        pairs.push((l.clone(), r.clone()));
    }
    Ok(pairs)
}

/// File stem used to derive output names.
pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into())
}

/// Map `f` over the items on a bounded worker pool, preserving input order
/// in the result so downstream aggregation is schedule-independent.
pub fn run_parallel<I, T, F>(items: Vec<I>, jobs: usize, f: F) -> Result<Vec<T>>
where
    I: Send + Sync,
    T: Send,
    F: Fn(&I) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidValue(format!("worker pool: {e}")))?;
    pool.install(|| {
        use rayon::prelude::*;
        items.par_iter().map(&f).collect()
    })
}

pub fn ensure_output_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)?;
    Ok(())
}
