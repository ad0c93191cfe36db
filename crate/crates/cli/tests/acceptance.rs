//! CLI acceptance: byte-identical outputs across repeated runs and across
//! `--jobs 1` vs `--jobs 8` for every pipeline command, plus the
//! command-level contracts (perfect-eval scores, planted decode, refine
//! stage annotations, machine-readable errors).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use panoptic_core::bundle::{
    write_json_atomic, write_tensor_atomic, ClassEntry, GtRecord, Manifest, MatchFile,
    PanopticFile, PredictionRecord, ProposalsFile,
};
use panoptic_core::geometry::BBox;
use panoptic_core::rasters::{BinaryMask, PanopticMap, SegmentInfo, Tensor, PYRAMID_STRIDES};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_panoptic")
}

fn run_ok(args: &[&str]) {
    let output = Command::new(bin())
        .args(args)
        .output()
        .expect("spawn panoptic");
    assert!(
        output.status.success(),
        "panoptic {args:?} failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
}

/// Relative path -> file bytes for a whole output tree.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(current) = stack.pop() {
        for entry in std::fs::read_dir(&current).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_path_buf();
                files.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

/// Run one command three times (jobs 1, jobs 8, jobs 1 again) into fresh
/// directories and demand byte-identical trees.
fn assert_deterministic(label: &str, root: &Path, make_args: impl Fn(&Path) -> Vec<String>) {
    let out_a = root.join(format!("{label}_a"));
    let out_b = root.join(format!("{label}_b"));
    let out_c = root.join(format!("{label}_c"));
    for (out, jobs) in [(&out_a, "1"), (&out_b, "8"), (&out_c, "1")] {
        std::fs::create_dir_all(out).unwrap();
        let mut args = make_args(out);
        args.push("--jobs".into());
        args.push(jobs.into());
        let args_ref: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
        run_ok(&args_ref);
    }
    let a = snapshot(&out_a);
    let b = snapshot(&out_b);
    let c = snapshot(&out_c);
    assert_eq!(a, b, "{label}: --jobs 1 vs --jobs 8 outputs differ");
    assert_eq!(a, c, "{label}: repeated runs differ");
    assert!(!a.is_empty(), "{label}: produced no output files");
}

fn rect_mask(dim: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> BinaryMask {
    let mut grid = vec![0u8; dim * dim];
    for row in y0..y1 {
        for col in x0..x1 {
            grid[row * dim + col] = 1;
        }
    }
    BinaryMask::encode(&grid, dim, dim).unwrap()
}

fn norm_box(img: usize, cx: f64, cy: f64, w: f64, h: f64) -> BBox {
    BBox::pixel(cx, cy, w, h)
        .unwrap()
        .to_normalized(img as f64, img as f64)
        .unwrap()
}

/// Planted decode fixture: per image, two objects (strides 4 and 8) with
/// exact Gaussian centers and regression fields.
fn write_head_bundle(
    dir: &Path,
    image_id: &str,
    img: usize,
    shift: usize,
) -> Vec<(u32, usize, usize)> {
    use panoptic_core::rasters::{RegressionCell, RegressionMap, ScalarMap};

    let mut manifest = Manifest::new(image_id, img, img);
    let mut planted = Vec::new();

    let mut level_files = Vec::new();
    for &stride in &PYRAMID_STRIDES {
        let dim = img / stride as usize;
        let mut center = ScalarMap::zeros(stride, dim, dim).unwrap();
        let mut regression = RegressionMap::zeros(stride, dim, dim).unwrap();
        let mut objectness = ScalarMap::zeros(stride, dim, dim).unwrap();
        let features = {
            let mut f = panoptic_core::rasters::FeatureMap::zeros(stride, dim, dim, 4).unwrap();
            for row in 0..dim {
                for col in 0..dim {
                    for ch in 0..4 {
                        f.cell_mut(row, col)[ch] =
                            ((row * 31 + col * 7 + ch * 3 + stride as usize) % 13) as f32 * 0.1;
                    }
                }
            }
            f
        };

        if stride == 4 || stride == 8 {
            let cell = (dim / 4 + shift, dim / 4 + shift);
            let s = stride as f64;
            let size = if stride == 4 { 28.0 } else { 60.0 };
            let cx = (cell.1 as f64 + 0.5) * s + 1.0;
            let cy = (cell.0 as f64 + 0.5) * s - 1.0;
            for row in 0..dim {
                for col in 0..dim {
                    let d_sq =
                        (row as f64 - cell.0 as f64).powi(2) + (col as f64 - cell.1 as f64).powi(2);
                    if d_sq <= 16.0 {
                        let v = (-0.5 * d_sq).exp() as f32;
                        if v > center.get(row, col) {
                            center.set(row, col, v);
                        }
                    }
                    let px = (col as f64 + 0.5) * s;
                    let py = (row as f64 + 0.5) * s;
                    if (px - cx).abs() <= size / 2.0 && (py - cy).abs() <= size / 2.0 {
                        regression.set(
                            row,
                            col,
                            RegressionCell {
                                dx: (cx / s - 0.5 - col as f64) as f32,
                                dy: (cy / s - 0.5 - row as f64) as f32,
                                w: (size / s) as f32,
                                h: (size / s) as f32,
                            },
                        );
                        objectness.set(row, col, 1.0);
                    }
                }
            }
            planted.push((stride, cell.0, cell.1));
        }

        let name = |kind: &str| format!("{image_id}.s{stride}.{kind}.bin");
        write_tensor_atomic(&dir.join(name("center")), &Tensor::from_scalar_map(&center)).unwrap();
        write_tensor_atomic(
            &dir.join(name("regression")),
            &Tensor::from_regression_map(&regression),
        )
        .unwrap();
        write_tensor_atomic(
            &dir.join(name("objectness")),
            &Tensor::from_scalar_map(&objectness),
        )
        .unwrap();
        write_tensor_atomic(
            &dir.join(name("features")),
            &Tensor::from_feature_map(&features),
        )
        .unwrap();
        level_files.push(panoptic_core::bundle::LevelFiles {
            stride,
            center: name("center"),
            regression: name("regression"),
            objectness: name("objectness"),
            features: name("features"),
        });
    }
    manifest.levels = level_files;

    let stuff = Tensor::new(2, 4, 1, 1, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]).unwrap();
    let stuff_name = format!("{image_id}.stuff.bin");
    write_tensor_atomic(&dir.join(&stuff_name), &stuff).unwrap();
    manifest.stuff_queries = Some(stuff_name);

    manifest
        .save(&dir.join(format!("{image_id}.json")))
        .unwrap();
    planted
}

/// GT and prediction bundles realizing the query-drift scene.
fn write_match_bundles(gt_dir: &Path, pred_dir: &Path, image_id: &str, img: usize) {
    let mut gt = Manifest::new(image_id, img, img);
    gt.gt_instances = vec![
        GtRecord {
            class_id: 0,
            is_thing: true,
            mask: rect_mask(img, 16, 16, 48, 48),
        },
        GtRecord {
            class_id: 1,
            is_thing: true,
            mask: rect_mask(img, 80, 80, 112, 112),
        },
    ];
    gt.save(&gt_dir.join(format!("{image_id}.json"))).unwrap();

    let mut pred = Manifest::new(image_id, img, img);
    pred.predictions = vec![
        PredictionRecord {
            class_probs: vec![0.9, 0.05],
            confidence: 0.9,
            class_id: 0,
            is_thing: true,
            bbox: norm_box(img, 32.0, 32.0, 32.0, 32.0),
            mask: rect_mask(img, 16, 16, 48, 48),
        },
        PredictionRecord {
            class_probs: vec![0.85, 0.05],
            confidence: 0.85,
            class_id: 0,
            is_thing: true,
            bbox: norm_box(img, 33.0, 32.0, 32.0, 32.0),
            mask: rect_mask(img, 17, 16, 49, 48),
        },
        PredictionRecord {
            class_probs: vec![0.4, 0.5],
            confidence: 0.5,
            class_id: 1,
            is_thing: true,
            bbox: norm_box(img, 90.0, 70.0, 12.0, 12.0),
            mask: rect_mask(img, 84, 64, 96, 76),
        },
        PredictionRecord {
            class_probs: vec![0.1, 0.2],
            confidence: 0.75,
            class_id: 1,
            is_thing: false,
            bbox: norm_box(img, 64.0, 64.0, 128.0, 128.0),
            mask: rect_mask(img, 0, 0, 128, 64),
        },
    ];
    pred.save(&pred_dir.join(format!("{image_id}.json")))
        .unwrap();
}

fn write_panoptic_pair(gt_dir: &Path, pred_dir: &Path, image_id: &str, dim: usize, shift: usize) {
    let mut gt = PanopticMap::void(dim, dim);
    for row in 4..20 {
        for col in 4..20 {
            gt.set_id(row, col, 1);
        }
    }
    for row in 24..40 {
        for col in 24..40 {
            gt.set_id(row, col, 2);
        }
    }
    gt.insert_segment(
        1,
        SegmentInfo {
            class_id: 1,
            is_thing: true,
        },
    );
    gt.insert_segment(
        2,
        SegmentInfo {
            class_id: 7,
            is_thing: false,
        },
    );

    let mut pred = PanopticMap::void(dim, dim);
    for row in 4..20 {
        for col in (4 + shift)..(20 + shift) {
            pred.set_id(row, col, 9);
        }
    }
    for row in 24..40 {
        for col in 24..40 {
            pred.set_id(row, col, 3);
        }
    }
    pred.insert_segment(
        9,
        SegmentInfo {
            class_id: 1,
            is_thing: true,
        },
    );
    pred.insert_segment(
        3,
        SegmentInfo {
            class_id: 7,
            is_thing: false,
        },
    );

    write_json_atomic(
        &gt_dir.join(format!("{image_id}.json")),
        &PanopticFile::from_map(image_id, &gt),
    )
    .unwrap();
    write_json_atomic(
        &pred_dir.join(format!("{image_id}.json")),
        &PanopticFile::from_map(image_id, &pred),
    )
    .unwrap();
}

#[test]
fn criterion_9_cli_determinism() {
    let root = tempfile::tempdir().unwrap();
    let root = root.path();
    let img = 128usize;

    // --- fixtures -----------------------------------------------------
    let heads_dir = root.join("heads");
    let gt_dir = root.join("gt");
    let pred_dir = root.join("pred");
    let pano_gt_dir = root.join("pano_gt");
    let pano_pred_dir = root.join("pano_pred");
    for dir in [&heads_dir, &gt_dir, &pred_dir, &pano_gt_dir, &pano_pred_dir] {
        std::fs::create_dir_all(dir).unwrap();
    }
    for (i, image_id) in ["img-a", "img-b", "img-c"].iter().enumerate() {
        write_head_bundle(&heads_dir, image_id, img, i);
        write_match_bundles(&gt_dir, &pred_dir, image_id, img);
        write_panoptic_pair(&pano_gt_dir, &pano_pred_dir, image_id, 48, i);
    }
    let classes = vec![
        ClassEntry {
            id: 0,
            name: "boat".into(),
            is_thing: true,
        },
        ClassEntry {
            id: 1,
            name: "buoy".into(),
            is_thing: true,
        },
        ClassEntry {
            id: 7,
            name: "water".into(),
            is_thing: false,
        },
    ];
    let classes_path = root.join("classes.json");
    write_json_atomic(&classes_path, &classes).unwrap();

    let s = |p: &Path| p.to_string_lossy().into_owned();

    // --- determinism across runs and job counts ------------------------
    assert_deterministic("gen_targets", root, |out| {
        vec![
            "gen-targets".into(),
            "--input".into(),
            s(&gt_dir),
            "--output".into(),
            s(out),
        ]
    });
    assert_deterministic("decode", root, |out| {
        vec![
            "decode".into(),
            "--input".into(),
            s(&heads_dir),
            "--output".into(),
            s(out),
        ]
    });
    assert_deterministic("match", root, |out| {
        vec![
            "match".into(),
            "--predictions".into(),
            s(&pred_dir),
            "--gt".into(),
            s(&gt_dir),
            "--output".into(),
            s(out),
        ]
    });
    assert_deterministic("fuse", root, |out| {
        vec![
            "fuse".into(),
            "--input".into(),
            s(&pred_dir),
            "--output".into(),
            s(out),
        ]
    });
    assert_deterministic("eval", root, |out| {
        vec![
            "eval".into(),
            "--pred".into(),
            s(&pano_pred_dir),
            "--gt".into(),
            s(&pano_gt_dir),
            "--classes".into(),
            s(&classes_path),
            "--output".into(),
            s(&out.join("report.json")),
            "--text".into(),
            s(&out.join("report.txt")),
        ]
    });
    assert_deterministic("augment", root, |out| {
        vec![
            "augment".into(),
            "--input".into(),
            s(&gt_dir),
            "--donors".into(),
            s(&gt_dir),
            "--count".into(),
            "3".into(),
            "--seed".into(),
            "42".into(),
            "--output".into(),
            s(out),
        ]
    });
    assert_deterministic("detect_rate", root, |out| {
        vec![
            "detect-rate".into(),
            "--pred".into(),
            s(&pano_pred_dir),
            "--gt".into(),
            s(&pano_gt_dir),
            "--output".into(),
            s(&out.join("rates.json")),
        ]
    });

    println!("[acceptance] criterion 9 (CLI byte determinism, jobs 1 vs 8): PASS");
}

#[test]
fn eval_on_identical_directories_scores_one() {
    let root = tempfile::tempdir().unwrap();
    let root = root.path();
    let gt_dir = root.join("gt");
    let unused_pred = root.join("pred_unused");
    std::fs::create_dir_all(&gt_dir).unwrap();
    std::fs::create_dir_all(&unused_pred).unwrap();
    for (i, image_id) in ["img-a", "img-b"].iter().enumerate() {
        write_panoptic_pair(&gt_dir, &unused_pred, image_id, 48, i);
    }
    let classes = vec![
        ClassEntry {
            id: 1,
            name: "boat".into(),
            is_thing: true,
        },
        ClassEntry {
            id: 7,
            name: "water".into(),
            is_thing: false,
        },
    ];
    let classes_path = root.join("classes.json");
    write_json_atomic(&classes_path, &classes).unwrap();
    let report_path = root.join("report.json");

    run_ok(&[
        "eval",
        "--pred",
        gt_dir.to_str().unwrap(),
        "--gt",
        gt_dir.to_str().unwrap(),
        "--classes",
        classes_path.to_str().unwrap(),
        "--output",
        report_path.to_str().unwrap(),
    ]);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["all"]["pq"], 1.0);
    assert_eq!(report["things"]["pq"], 1.0);
    assert_eq!(report["stuff"]["pq"], 1.0);
    assert_eq!(report["things_agnostic"]["pq"], 1.0);
    for (_, class_score) in report["per_class"].as_object().unwrap() {
        assert_eq!(class_score["pq"], 1.0);
    }
}

#[test]
fn decode_recovers_planted_proposals() {
    let root = tempfile::tempdir().unwrap();
    let root = root.path();
    let heads = root.join("heads");
    let out = root.join("out");
    std::fs::create_dir_all(&heads).unwrap();
    let planted = write_head_bundle(&heads, "img-k", 128, 1);

    run_ok(&[
        "decode",
        "--input",
        heads.join("img-k.json").to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ]);

    let file: ProposalsFile =
        serde_json::from_str(&std::fs::read_to_string(out.join("img-k.proposals.json")).unwrap())
            .unwrap();
    assert_eq!(file.proposals.len(), planted.len());
    let mut got: Vec<(u32, usize, usize)> = file
        .proposals
        .iter()
        .map(|p| (p.stride, p.row, p.col))
        .collect();
    got.sort_unstable();
    let mut want = planted;
    want.sort_unstable();
    assert_eq!(got, want);
    for p in &file.proposals {
        assert_eq!(p.probability, 1.0);
        assert!(!p.size_clamped);
    }
    assert_eq!(file.n_stuff_queries, 2);
    assert!(out.join(&file.content_queries).exists());
}

#[test]
fn refine_flag_changes_stage_annotations_per_the_rules() {
    let root = tempfile::tempdir().unwrap();
    let root = root.path();
    let gt_dir = root.join("gt");
    let pred_dir = root.join("pred");
    std::fs::create_dir_all(&gt_dir).unwrap();
    std::fs::create_dir_all(&pred_dir).unwrap();
    write_match_bundles(&gt_dir, &pred_dir, "img-a", 128);

    let out_plain = root.join("plain");
    let out_refined = root.join("refined");
    run_ok(&[
        "match",
        "--predictions",
        pred_dir.to_str().unwrap(),
        "--gt",
        gt_dir.to_str().unwrap(),
        "--output",
        out_plain.to_str().unwrap(),
        "--no-refine",
    ]);
    run_ok(&[
        "match",
        "--predictions",
        pred_dir.to_str().unwrap(),
        "--gt",
        gt_dir.to_str().unwrap(),
        "--output",
        out_refined.to_str().unwrap(),
        "--refine",
    ]);

    let plain: MatchFile = serde_json::from_str(
        &std::fs::read_to_string(out_plain.join("img-a.matches.json")).unwrap(),
    )
    .unwrap();
    let refined: MatchFile = serde_json::from_str(
        &std::fs::read_to_string(out_refined.join("img-a.matches.json")).unwrap(),
    )
    .unwrap();

    assert!(!plain.refined);
    assert!(refined.refined);
    // Base matching is one-to-one with every stage tagged base.
    assert_eq!(plain.matches.matches.len(), 2);
    assert!(plain
        .matches
        .matches
        .iter()
        .all(|m| matches!(m.stage, panoptic_core::matching::MatchStage::Base)));
    assert!(plain.matches.removed.is_empty());
    // Refinement removes the low-IoU GT-B match and adds the second A query.
    assert_eq!(refined.matches.matches.len(), 2);
    assert!(refined.matches.matches.iter().all(|m| m.gt == 0));
    assert_eq!(refined.matches.removed.len(), 1);
    assert!(refined.matches.removed[0].box_iou < 0.25);
    assert!(refined
        .matches
        .matches
        .iter()
        .any(|m| matches!(m.stage, panoptic_core::matching::MatchStage::AddedStage2)));
}

#[test]
fn errors_exit_with_distinct_codes_and_json_records() {
    let root = tempfile::tempdir().unwrap();
    let root = root.path();

    // Malformed manifest -> manifest error code.
    let bad = root.join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = Command::new(bin())
        .args([
            "gen-targets",
            "--input",
            bad.to_str().unwrap(),
            "--output",
            root.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(10));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let record: serde_json::Value =
        serde_json::from_str(stderr.lines().last().unwrap()).expect("stderr is a JSON record");
    assert_eq!(record["error"]["code"], 10);
    assert_eq!(record["error"]["kind"], "manifest");

    // Missing input -> missing_input code.
    let out = Command::new(bin())
        .args([
            "decode",
            "--input",
            root.join("nope.json").to_str().unwrap(),
            "--output",
            root.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(12));

    // Shape mismatch: manifest with a mask larger than the image.
    let bad_shape = root.join("shape.json");
    std::fs::write(
        &bad_shape,
        r#"{"format_version":1,"image_id":"x","width":8,"height":8,
            "gt_instances":[{"class_id":1,"is_thing":true,
                             "mask":{"height":16,"width":16,"runs":[[0,4]]}}]}"#,
    )
    .unwrap();
    let out = Command::new(bin())
        .args([
            "gen-targets",
            "--input",
            bad_shape.to_str().unwrap(),
            "--output",
            root.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(11));
}
