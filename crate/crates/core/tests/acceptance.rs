//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Oracles are deliberately independent of the code under test: overlap is
//! checked by counting unit cells, suppression against a from-scratch
//! quadratic reference, angles against `atan(h / w)`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use needlepose::augment::{
    corrupt, flip_h, flip_v, rot90, rotate_arbitrary, LabeledScene, Truth,
};
use needlepose::cli::{cmd_augment, cmd_synth, AugmentArgs, Resolver, SynthArgs};
use needlepose::dataset_io::{decode_pgm, decode_yolo, encode_pgm, encode_yolo, load_manifest, read_pgm, ImageGray};
use needlepose::detection::{iou, nms, Detection};
use needlepose::detector::{detect_to_pose, DetectorConfig};
use needlepose::eval::{check_table1, parse_table1, TABLE1_FIXTURE};
use needlepose::geometry::{classify_tip, mid_vertex, needle_angle, pose_from_detection, tip_vertex};
use needlepose::synth::{generate_batch, SynthRanges, SynthScene};
use needlepose::{BoundingBox, TipClass};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances and limits.
const TABLE_ROW_TOL: f64 = 0.005;
const TABLE_MEAN_TOL: f64 = 0.01;
const ANGLE_TOL_DEG: f64 = 1e-9;
const FLIP_LABEL_TOL: f64 = 1e-9;
const ROTATION_KEYPOINT_TOL: f64 = 1e-6;
const YOLO_CORNER_TOL_PX: f64 = 0.002;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within_time(o: Outcome, elapsed: Duration, limit: Duration) -> Outcome {
    if elapsed > limit {
        outcome(false, format!("{}; took {:.2?}, limit {:.0?}", o.detail, elapsed, limit))
    } else {
        o
    }
}

// ---------------------------------------------------------------- 1

fn results_table() -> Outcome {
    let rows = parse_table1(TABLE1_FIXTURE).expect("bundled fixture parses");
    if rows.len() != 24 {
        return outcome(false, format!("expected 24 rows, got {}", rows.len()));
    }
    let check = check_table1(&rows).expect("fixture evaluates");
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    for c in &check.rows {
        let d = (c.tip_dist - c.printed_tip_dist)
            .abs()
            .max((c.ang_err - c.printed_ang_err).abs());
        worst = worst.max(d);
        if d > TABLE_ROW_TOL {
            bad.push(c.image.clone());
        }
    }
    let means_ok = (check.mean_tip_dist - 4.80).abs() <= TABLE_MEAN_TOL
        && (check.mean_ang_err - 0.85).abs() <= TABLE_MEAN_TOL;
    outcome(
        bad.is_empty() && means_ok,
        format!(
            "24 rows, worst row deviation {worst:.4}, means {:.4} px / {:.4} deg{}",
            check.mean_tip_dist,
            check.mean_ang_err,
            if bad.is_empty() { String::new() } else { format!(", failing rows {bad:?}") }
        ),
    )
}

// ---------------------------------------------------------------- 2

type IntBox = (i64, i64, i64, i64);

fn random_int_box(rng: &mut impl Rng, extent: i64) -> IntBox {
    let (a, b) = loop {
        let (a, b) = (rng.random_range(0..=extent), rng.random_range(0..=extent));
        if a != b {
            break (a.min(b), a.max(b));
        }
    };
    let (c, d) = loop {
        let (c, d) = (rng.random_range(0..=extent), rng.random_range(0..=extent));
        if c != d {
            break (c.min(d), c.max(d));
        }
    };
    (a, c, b, d)
}

fn covers(b: IntBox, x: i64, y: i64) -> bool {
    b.0 <= x && x < b.2 && b.1 <= y && y < b.3
}

/// IoU from counting the unit cells each box covers.
fn cell_iou(a: IntBox, b: IntBox, extent: i64) -> f64 {
    let (mut inter, mut union) = (0u32, 0u32);
    for y in 0..extent {
        for x in 0..extent {
            let (ia, ib) = (covers(a, x, y), covers(b, x, y));
            inter += u32::from(ia && ib);
            union += u32::from(ia || ib);
        }
    }
    f64::from(inter) / f64::from(union)
}

fn to_box(b: IntBox) -> BoundingBox {
    BoundingBox::new(b.0 as f64, b.1 as f64, b.2 as f64, b.3 as f64).unwrap()
}

fn iou_vs_cells() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    let mut overlapping = 0;
    for _ in 0..1000 {
        let (a, b) = (random_int_box(&mut rng, 32), random_int_box(&mut rng, 32));
        let expected = cell_iou(a, b, 32);
        overlapping += usize::from(expected > 0.0);
        let got = iou(&to_box(a), &to_box(b));
        let sym = iou(&to_box(b), &to_box(a));
        if got != expected || sym != expected {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("1000 pairs ({overlapping} overlapping), {mismatches} inexact"),
    )
}

// ---------------------------------------------------------------- 3

/// Greedy suppression written from its definition: walking detections by
/// descending confidence (ties in input order), a detection survives when no
/// earlier survivor overlaps it by more than the threshold.
fn reference_nms(boxes: &[IntBox], confs: &[f64], thr: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    for i in 1..order.len() {
        let mut k = i;
        while k > 0 && confs[order[k - 1]] < confs[order[k]] {
            order.swap(k - 1, k);
            k -= 1;
        }
    }
    let mut survivors: Vec<usize> = Vec::new();
    for &i in &order {
        if survivors
            .iter()
            .all(|&s| cell_iou(boxes[s], boxes[i], 32) <= thr)
        {
            survivors.push(i);
        }
    }
    survivors
}

fn nms_vs_reference() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let thresholds = [0.0, 0.25, 0.45, 0.5, 0.7];
    let mut mismatches = 0;
    let mut suppressed_any = 0;
    for set in 0..500 {
        let n = rng.random_range(0..=8);
        let boxes: Vec<IntBox> = (0..n).map(|_| random_int_box(&mut rng, 32)).collect();
        // Coarse confidences so ties occur.
        let confs: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..=10u8)) / 10.0).collect();
        let dets: Vec<Detection> = boxes
            .iter()
            .zip(&confs)
            .map(|(&b, &c)| {
                let class = TipClass::from_index(rng.random_range(0..4)).unwrap();
                Detection::new(to_box(b), class, c).unwrap()
            })
            .collect();
        let thr = thresholds[set % thresholds.len()];
        let expected: Vec<Detection> = reference_nms(&boxes, &confs, thr).into_iter().map(|i| dets[i]).collect();
        suppressed_any += usize::from(expected.len() < n);
        if nms(&dets, thr) != expected {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("500 sets, {suppressed_any} with suppression, {mismatches} differing"),
    )
}

// ---------------------------------------------------------------- 4

fn vertex_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut class_errors = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let x0 = rng.random_range(0.0..1000.0);
        let y0 = rng.random_range(0.0..1000.0);
        let w = rng.random_range(0.5..400.0);
        let h = rng.random_range(0.5..400.0);
        let b = BoundingBox::new(x0, y0, x0 + w, y0 + h).unwrap();
        let expected = (b.height() / b.width()).atan().to_degrees();
        for class in TipClass::ALL {
            let (tip, mid) = (tip_vertex(&b, class), mid_vertex(&b, class));
            if classify_tip(tip, mid).ok() != Some(class) {
                class_errors += 1;
            }
            let a = needle_angle(tip, mid).unwrap();
            let p = pose_from_detection(&b, class).angle_deg;
            worst = worst.max((a - expected).abs()).max((p - expected).abs());
        }
    }
    outcome(
        class_errors == 0 && worst <= ANGLE_TOL_DEG,
        format!("40000 box/class cases, {class_errors} misclassified, worst angle deviation {worst:.2e} deg"),
    )
}

// ---------------------------------------------------------------- 5

fn scene_of(s: &SynthScene) -> LabeledScene {
    LabeledScene::new(s.image.clone(), vec![Truth::from_pose(&s.truth_pose)]).unwrap()
}

fn label_gap(a: &LabeledScene, b: &LabeledScene) -> f64 {
    if a.truths().len() != b.truths().len() {
        return f64::INFINITY;
    }
    a.poses()
        .iter()
        .zip(b.poses())
        .map(|(p, q)| {
            (p.tip.x - q.tip.x)
                .abs()
                .max((p.tip.y - q.tip.y).abs())
                .max((p.midpoint.x - q.midpoint.x).abs())
                .max((p.midpoint.y - q.midpoint.y).abs())
        })
        .fold(0.0, f64::max)
}

fn classes_consistent(s: &LabeledScene) -> bool {
    s.poses()
        .iter()
        .zip(s.truths())
        .all(|(p, t)| classify_tip(p.tip, p.midpoint).ok() == Some(t.class) && p.tip_class == t.class)
}

fn augmentation_consistency() -> Outcome {
    let mut failures = Vec::new();
    let mut compared_rect = 0;
    let mut worst_rot: f64 = 0.0;
    let square = SynthRanges {
        img_w: 256,
        img_h: 256,
        half_length: (50.0, 70.0),
        noise_sigma: 5.0,
        ..SynthRanges::default()
    };
    let rect = SynthRanges {
        noise_sigma: 5.0,
        ..SynthRanges::default()
    };
    for (name, ranges) in [("square", &square), ("692x516", &rect)] {
        let (w, h) = (ranges.img_w as f64, ranges.img_h as f64);
        for (i, s) in generate_batch(20, ranges, 5).unwrap().iter().enumerate() {
            let scene = scene_of(s);
            let tag = format!("{name} scene {i}");
            for (op, twice) in [("flip_h", flip_h(&flip_h(&scene))), ("flip_v", flip_v(&flip_v(&scene)))] {
                if twice.image() != scene.image() || label_gap(&twice, &scene) > FLIP_LABEL_TOL {
                    failures.push(format!("{tag}: {op} twice is not identity"));
                }
            }
            let mut turned = scene.clone();
            for _ in 0..4 {
                turned = rot90(&turned, 1);
            }
            if turned.image() != scene.image() || label_gap(&turned, &scene) > FLIP_LABEL_TOL {
                failures.push(format!("{tag}: four quarter turns are not identity"));
            }

            let quarter = rot90(&scene, 1);
            let (rotated, _) = rotate_arbitrary(&scene, 90.0, 0);
            // Same-canvas rotation is offset from the dimension-swapping
            // quarter turn by half the side difference.
            let (ox, oy) = ((w - h) / 2.0, -(w - h) / 2.0);
            if rotated.truths().len() == 1 {
                let (p, q) = (&rotated.poses()[0], &quarter.poses()[0]);
                let gap = (p.tip.x - ox - q.tip.x)
                    .abs()
                    .max((p.tip.y - oy - q.tip.y).abs())
                    .max((p.midpoint.x - ox - q.midpoint.x).abs())
                    .max((p.midpoint.y - oy - q.midpoint.y).abs());
                worst_rot = worst_rot.max(gap);
                compared_rect += usize::from(name != "square");
            } else if name == "square" {
                failures.push(format!("{tag}: 90 degree rotation dropped the label"));
            }

            let mut outputs = vec![
                flip_h(&scene),
                flip_v(&scene),
                quarter,
                rot90(&scene, 2),
                rot90(&scene, 3),
                rotated,
                rotate_arbitrary(&scene, 15.0, 128).0,
                rotate_arbitrary(&scene, -15.0, 128).0,
                rotate_arbitrary(&scene, 37.5, 128).0,
            ];
            outputs.push(corrupt(&scene, 10.0, i as u64).unwrap());
            if !outputs.iter().all(classes_consistent) {
                failures.push(format!("{tag}: class disagrees with keypoints after augmentation"));
            }
        }
    }
    if worst_rot > ROTATION_KEYPOINT_TOL {
        failures.push(format!("rotation keypoint deviation {worst_rot:.2e}"));
    }
    if compared_rect == 0 {
        failures.push("no 692x516 scene kept its label under rotation".into());
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "40 scenes; involutions exact, 90 deg keypoint deviation {worst_rot:.2e} px ({compared_rect} offset-corrected 692x516 cases)"
            )
        } else {
            failures.join("; ")
        },
    )
}

// ---------------------------------------------------------------- 6

fn label_and_image_round_trip() -> Outcome {
    let (w, h) = (692u32, 516u32);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut class_errors = 0;
    for _ in 0..10_000 {
        let x0 = rng.random_range(0.0..650.0);
        let y0 = rng.random_range(0.0..480.0);
        let x1 = rng.random_range(x0 + 0.5..=f64::from(w));
        let y1 = rng.random_range(y0 + 0.5..=f64::from(h));
        let b = BoundingBox::new(x0, y0, x1, y1).unwrap();
        let class = TipClass::from_index(rng.random_range(0..4)).unwrap();
        let line = encode_yolo(&b, class, w, h).unwrap();
        let (d, c) = decode_yolo(&line, w, h).unwrap();
        class_errors += usize::from(c != class);
        for (u, v) in [
            (d.x_min(), b.x_min()),
            (d.y_min(), b.y_min()),
            (d.x_max(), b.x_max()),
            (d.y_max(), b.y_max()),
        ] {
            worst = worst.max((u - v).abs());
        }
    }

    let mut pgm_ok = true;
    for (iw, ih) in [(1, 1), (7, 3), (64, 48), (692, 516)] {
        let samples: Vec<u8> = (0..iw * ih).map(|_| rng.random()).collect();
        let img = ImageGray::new(iw, ih, samples).unwrap();
        let bytes = encode_pgm(&img);
        let back = decode_pgm(&bytes).unwrap();
        pgm_ok &= back == img && encode_pgm(&back) == bytes;
    }
    outcome(
        worst <= YOLO_CORNER_TOL_PX && class_errors == 0 && pgm_ok,
        format!(
            "10000 labels, worst corner error {worst:.5} px, {class_errors} class changes; PGM round trip {}",
            if pgm_ok { "byte-identical" } else { "differs" }
        ),
    )
}

// ---------------------------------------------------------------- 7

struct DetectorStats {
    class_acc: f64,
    mean_tip: f64,
    mean_ang: f64,
}

fn detector_stats(scenes: &[SynthScene]) -> DetectorStats {
    let cfg = DetectorConfig::default();
    let (mut correct, mut found) = (0usize, 0usize);
    let (mut tip_sum, mut ang_sum) = (0.0, 0.0);
    for s in scenes {
        let Some(p) = detect_to_pose(&s.image, &cfg) else {
            continue;
        };
        found += 1;
        correct += usize::from(p.tip_class == s.truth_class);
        let t = &s.truth_pose;
        tip_sum += (p.tip.x - t.tip.x).hypot(p.tip.y - t.tip.y);
        ang_sum += (p.angle_deg - t.angle_deg).abs();
    }
    let per = |v: f64| if found == 0 { f64::INFINITY } else { v / found as f64 };
    DetectorStats {
        class_acc: correct as f64 / scenes.len() as f64,
        mean_tip: per(tip_sum),
        mean_ang: per(ang_sum),
    }
}

fn reference_detector() -> Outcome {
    let clean_ranges = SynthRanges::default();
    let noisy_ranges = SynthRanges {
        noise_sigma: 10.0,
        ..SynthRanges::default()
    };
    let clean = detector_stats(&generate_batch(100, &clean_ranges, 70).unwrap());
    let noisy = detector_stats(&generate_batch(100, &noisy_ranges, 71).unwrap());
    let pass = clean.class_acc == 1.0
        && clean.mean_tip <= 2.0
        && clean.mean_ang <= 1.0
        && noisy.class_acc >= 0.95
        && noisy.mean_tip <= 5.0;
    outcome(
        pass,
        format!(
            "clean: class {:.2}, tip {:.2} px, angle {:.2} deg; sigma 10: class {:.2}, tip {:.2} px",
            clean.class_acc, clean.mean_tip, clean.mean_ang, noisy.class_acc, noisy.mean_tip
        ),
    )
}

// ---------------------------------------------------------------- 8

fn count_files(dir: &std::path::Path, ext: &str) -> usize {
    std::fs::read_dir(dir)
        .map(|it| {
            it.filter_map(|e| e.ok())
                .filter(|e| e.path().extension().and_then(|x| x.to_str()) == Some(ext))
                .count()
        })
        .unwrap_or(0)
}

fn dataset_commands() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("synth");
    let synth = SynthArgs {
        out: Some(root.clone()),
        ..SynthArgs::default()
    };
    let split = match cmd_synth(&synth, &mut Resolver::new()) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("synth failed: {e}")),
    };
    let train = root.join("train");
    let test = root.join("test");
    let counts = [
        count_files(&train.join("images"), "pgm"),
        count_files(&train.join("labels"), "txt"),
        count_files(&test.join("images"), "pgm"),
        count_files(&test.join("labels"), "txt"),
    ];
    let sample = read_pgm(&train.join("images").join("needle_0000.pgm")).unwrap();
    let manifest_ok = load_manifest(&train).map(|m| m.items.len() == 96).unwrap_or(false);

    let aug_root = tmp.path().join("augmented");
    let augment = AugmentArgs {
        input: Some(train),
        out: Some(aug_root.clone()),
        ..AugmentArgs::default()
    };
    let augmented = match cmd_augment(&augment, &mut Resolver::new()) {
        Ok(a) => a.written,
        Err(e) => return outcome(false, format!("augment failed: {e}")),
    };
    let aug_images = count_files(&aug_root.join("images"), "pgm");
    let aug_labels = count_files(&aug_root.join("labels"), "txt");

    let pass = (split.train, split.test) == (96, 24)
        && counts == [96, 96, 24, 24]
        && (sample.width(), sample.height()) == (692, 516)
        && manifest_ok
        && augmented == 576
        && aug_images == 576
        && aug_labels == 576;
    outcome(
        pass,
        format!(
            "synth {}/{} at {}x{}, augment {} -> {aug_images} images / {aug_labels} labels",
            split.train,
            split.test,
            sample.width(),
            sample.height(),
            split.train
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        ("results table recomputation", results_table, Duration::from_secs(1)),
        ("IoU vs unit-cell counting", iou_vs_cells, Duration::from_secs(5)),
        ("NMS vs quadratic reference", nms_vs_reference, Duration::MAX),
        ("vertex classification and angle", vertex_round_trip, Duration::MAX),
        ("augmentation label consistency", augmentation_consistency, Duration::MAX),
        ("label and image round trips", label_and_image_round_trip, Duration::MAX),
        ("reference detector accuracy", reference_detector, Duration::from_secs(60)),
        ("dataset commands", dataset_commands, Duration::MAX),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let o = within_time(run(), start.elapsed(), limit);
        println!(
            "{} criterion {} {name}: {} ({:.2?})",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            start.elapsed()
        );
        failed += usize::from(!o.pass);
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
