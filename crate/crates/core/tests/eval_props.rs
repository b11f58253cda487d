//! Evaluation-protocol properties beyond the per-op unit tests.

use skeldet::dataset::rotate_image;
use skeldet::evalkit::{evaluate, evaluate_with, EvalOptions};
use skeldet::morphology::{binarize, gaussian_blur};
use skeldet::raster::{BinaryImage, GrayImage};
use skeldet::synthgen::{gen_sample, GenConfig};

fn synth_gt(seed: u64) -> BinaryImage {
    binarize(&gen_sample::<f64>(&GenConfig::default(), seed).unwrap().skeleton)
}

fn rotate_mask(mask: &BinaryImage, quarters: usize) -> BinaryImage {
    let gray: GrayImage<f64> = mask.to_gray();
    binarize(&rotate_image(&gray, quarters))
}

#[test]
fn f_measure_invariant_under_rotation() {
    let mut responses = Vec::new();
    let mut gts = Vec::new();
    for seed in 800..804u64 {
        let gt = synth_gt(seed);
        // A smooth imperfect response: blurred GT.
        let blurred = gaussian_blur(&gt.to_gray::<f64>(), 5).unwrap();
        responses.push(blurred);
        gts.push(gt);
    }
    let base = evaluate(&responses, &gts).unwrap();
    for quarters in 1..4usize {
        let rot_responses: Vec<GrayImage<f64>> = responses
            .iter()
            .map(|r| rotate_image(r, quarters))
            .collect();
        let rot_gts: Vec<BinaryImage> = gts.iter().map(|g| rotate_mask(g, quarters)).collect();
        let rotated = evaluate(&rot_responses, &rot_gts).unwrap();
        assert!(
            (rotated.ods_f - base.ods_f).abs() < 1e-9,
            "rotation {quarters}: {} vs {}",
            rotated.ods_f,
            base.ods_f
        );
    }
}

#[test]
fn recall_is_non_increasing_in_threshold() {
    let mut responses = Vec::new();
    let mut gts = Vec::new();
    for seed in 900..905u64 {
        let gt = synth_gt(seed);
        responses.push(gaussian_blur(&gt.to_gray::<f64>(), 5).unwrap());
        gts.push(gt);
    }
    let report = evaluate(&responses, &gts).unwrap();
    for pair in report.curve.recall.windows(2) {
        assert!(
            pair[1] <= pair[0] + 1e-12,
            "recall rose along the sweep: {} -> {}",
            pair[0],
            pair[1]
        );
    }
}

#[test]
fn tp_bounded_by_pred_and_gt_totals() {
    let gt = synth_gt(1234);
    let resp = gaussian_blur(&gt.to_gray::<f64>(), 5).unwrap();
    let report = evaluate(&[resp], &[gt.clone()]).unwrap();
    let gt_total = gt.count_true() as u64;
    for i in 0..report.curve.thresholds.len() {
        let tp = report.curve.tp[i];
        assert!(tp <= gt_total);
        // TP cannot exceed the number of predicted pixels either.
        assert!(tp <= report.curve.tp[i] + report.curve.fp[i]);
    }
}

#[test]
fn d_tol_override_loosens_matching() {
    let gt = synth_gt(777);
    let (w, h) = gt.dims();
    let mut shifted = BinaryImage::zeros(w, h);
    for (r, c) in gt.iter_true() {
        if c + 1 < w {
            shifted.set(r, c + 1, true);
        }
    }
    let strict = evaluate(&[shifted.to_gray::<f64>()], &[gt.clone()]).unwrap();
    let loose = evaluate_with(
        &[shifted.to_gray::<f64>()],
        &[gt],
        &EvalOptions {
            d_tol_override: Some(2.0),
            ..EvalOptions::default()
        },
    )
    .unwrap();
    assert!(loose.ods_f >= strict.ods_f);
    assert!(loose.ods_f > 0.98);
}

#[test]
fn eval_threads_do_not_change_results() {
    let mut responses = Vec::new();
    let mut gts = Vec::new();
    for seed in 950..956u64 {
        let gt = synth_gt(seed);
        responses.push(gaussian_blur(&gt.to_gray::<f64>(), 5).unwrap());
        gts.push(gt);
    }
    let single = evaluate(&responses, &gts).unwrap();
    let multi = evaluate_with(
        &responses,
        &gts,
        &EvalOptions {
            threads: 3,
            ..EvalOptions::default()
        },
    )
    .unwrap();
    assert_eq!(single.curve.tp, multi.curve.tp);
    assert_eq!(single.ods_f, multi.ods_f);
}
