//! Skeleton evaluation protocol: orientation-aware non-maximal suppression
//! of the raw response, a threshold sweep with thinning, distance-tolerant
//! one-to-one matching against ground truth, and the PR curve with its
//! dataset-wide best F-measure.

use crate::error::{Error, Result};
use crate::morphology::{gaussian_blur_with, thin};
use crate::raster::{BinaryImage, GrayImage};
use crate::scalar::Scalar;

/// Fraction of the image diagonal used as the default match tolerance.
pub const DIAGONAL_TOLERANCE: f64 = 0.0075;

#[derive(Debug, Clone, PartialEq)]
pub struct PRCurve {
    pub thresholds: Vec<f64>,
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    pub fn_: Vec<u64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f: Vec<f64>,
}

impl PRCurve {
    /// `pr_curve.csv` schema: threshold,tp,fp,fn,precision,recall,f
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,tp,fp,fn,precision,recall,f\n");
        for i in 0..self.thresholds.len() {
            out.push_str(&format!(
                "{:.2},{},{},{},{:.6},{:.6},{:.6}\n",
                self.thresholds[i],
                self.tp[i],
                self.fp[i],
                self.fn_[i],
                self.precision[i],
                self.recall[i],
                self.f[i]
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub ods_f: f64,
    pub ods_threshold: f64,
    pub curve: PRCurve,
}

impl EvalReport {
    pub fn to_report_text(&self) -> String {
        format!(
            "ODS F-measure: {:.6}\nODS threshold: {:.2}\n",
            self.ods_f, self.ods_threshold
        )
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub thresholds: Vec<f64>,
    /// Overrides the per-image 0.0075 x diagonal match tolerance.
    pub d_tol_override: Option<f64>,
    pub threads: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            thresholds: default_thresholds(),
            d_tol_override: None,
            threads: 1,
        }
    }
}

/// The canonical sweep 0.01, 0.02, ..., 0.99.
pub fn default_thresholds() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

/// Non-maximal suppression. Orientation comes from the gradient of a
/// sigma=1 smoothed copy; a pixel survives iff its value is >= both
/// bilinearly interpolated neighbors one pixel away along the gradient
/// (ties keep, so plateaus survive and thinning resolves them). Suppressed
/// pixels become 0; kept values pass through unchanged.
pub fn nms<S: Scalar>(response: &GrayImage<S>) -> GrayImage<S> {
    let (w, h) = response.dims();
    let smoothed = gaussian_blur_with(&response.cast::<f64>(), 7, 1.0);
    let mut out = GrayImage::<S>::zeros(w, h);
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    for row in 0..h {
        for col in 0..w {
            let v = response.get(row, col);
            let gx = (smoothed.get(row, clamp(col as isize + 1, w))
                - smoothed.get(row, clamp(col as isize - 1, w)))
                / 2.0;
            let gy = (smoothed.get(clamp(row as isize + 1, h), col)
                - smoothed.get(clamp(row as isize - 1, h), col))
                / 2.0;
            let mag = (gx * gx + gy * gy).sqrt();
            let keep = if mag < 1e-12 {
                true
            } else {
                let (ux, uy) = (gx / mag, gy / mag);
                let fwd = bilinear_sample(response, row as f64 + uy, col as f64 + ux);
                let bwd = bilinear_sample(response, row as f64 - uy, col as f64 - ux);
                let v = v.to_f64c();
                v >= fwd && v >= bwd
            };
            if keep {
                out.set(row, col, v);
            }
        }
    }
    out
}

/// Bilinear sample with out-of-bounds taps reading 0.
fn bilinear_sample<S: Scalar>(img: &GrayImage<S>, row: f64, col: f64) -> f64 {
    let r0 = row.floor();
    let c0 = col.floor();
    let tr = row - r0;
    let tc = col - c0;
    let mut acc = 0.0;
    for (dr, wr) in [(0.0, 1.0 - tr), (1.0, tr)] {
        for (dc, wc) in [(0.0, 1.0 - tc), (1.0, tc)] {
            let rr = r0 + dr;
            let cc = c0 + dc;
            if rr >= 0.0 && cc >= 0.0 && (rr as usize) < img.height() && (cc as usize) < img.width()
            {
                acc += wr * wc * img.get(rr as usize, cc as usize).to_f64c();
            }
        }
    }
    acc
}

/// One-to-one matching between thinned prediction pixels and ground-truth
/// pixels: candidate pairs within `d_tol` (Euclidean) are accepted greedily
/// in ascending-distance order while both endpoints are unmatched.
/// Returns (TP, FP, FN).
pub fn match_skeletons(
    pred_thin: &BinaryImage,
    gt: &BinaryImage,
    d_tol: f64,
) -> Result<(u64, u64, u64)> {
    if pred_thin.dims() != gt.dims() {
        return Err(Error::shape(format!(
            "pred {:?} vs gt {:?}",
            pred_thin.dims(),
            gt.dims()
        )));
    }
    let pred: Vec<(usize, usize)> = pred_thin.iter_true().collect();
    let gts: Vec<(usize, usize)> = gt.iter_true().collect();
    // Bucket ground-truth pixels by row for the window scan.
    let mut by_row: Vec<Vec<usize>> = vec![Vec::new(); gt.height()];
    for (gi, &(r, _)) in gts.iter().enumerate() {
        by_row[r].push(gi);
    }
    let reach = d_tol.floor() as isize;
    let tol_sq = d_tol * d_tol;
    // (squared distance, pred index, gt index); ties break on indices so the
    // matching is deterministic.
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, &(pr, pc)) in pred.iter().enumerate() {
        let row_lo = (pr as isize - reach).max(0) as usize;
        let row_hi = ((pr as isize + reach) as usize).min(gt.height().saturating_sub(1));
        for row in row_lo..=row_hi {
            for &gi in &by_row[row] {
                let (gr, gc) = gts[gi];
                let dr = pr as f64 - gr as f64;
                let dc = pc as f64 - gc as f64;
                let d2 = dr * dr + dc * dc;
                if d2 <= tol_sq {
                    candidates.push((d2, pi, gi));
                }
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("finite distances")
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut pred_used = vec![false; pred.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut tp = 0u64;
    for &(_, pi, gi) in &candidates {
        if !pred_used[pi] && !gt_used[gi] {
            pred_used[pi] = true;
            gt_used[gi] = true;
            tp += 1;
        }
    }
    let fp = pred.len() as u64 - tp;
    let fn_ = gts.len() as u64 - tp;
    Ok((tp, fp, fn_))
}

fn harmonic_f(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Full protocol with the canonical options: NMS once per response, then per
/// threshold binarize -> thin -> match, with counts aggregated over the
/// dataset (a single threshold for the whole set).
pub fn evaluate<S: Scalar>(
    responses: &[GrayImage<S>],
    gts: &[BinaryImage],
) -> Result<EvalReport> {
    evaluate_with(responses, gts, &EvalOptions::default())
}

pub fn evaluate_with<S: Scalar>(
    responses: &[GrayImage<S>],
    gts: &[BinaryImage],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if responses.is_empty() || responses.len() != gts.len() {
        return Err(Error::EmptyDataset);
    }
    for (resp, gt) in responses.iter().zip(gts) {
        if resp.dims() != gt.dims() {
            return Err(Error::shape(format!(
                "response {:?} vs gt {:?}",
                resp.dims(),
                gt.dims()
            )));
        }
    }
    let nt = opts.thresholds.len();
    let threads = opts.threads.clamp(1, responses.len());

    let accumulate = |range: std::ops::Range<usize>| -> Result<(Vec<u64>, Vec<u64>, Vec<u64>)> {
        let mut tp = vec![0u64; nt];
        let mut fp = vec![0u64; nt];
        let mut fn_ = vec![0u64; nt];
        for i in range {
            let resp = &responses[i];
            let gt = &gts[i];
            let (w, h) = resp.dims();
            let d_tol = opts.d_tol_override.unwrap_or_else(|| {
                DIAGONAL_TOLERANCE * ((w * w + h * h) as f64).sqrt()
            });
            let suppressed = nms(resp);
            for (ti, &t) in opts.thresholds.iter().enumerate() {
                let t = S::from_f64c(t);
                let mask = BinaryImage::from_vec(
                    w,
                    h,
                    suppressed.as_slice().iter().map(|&v| v >= t).collect(),
                )
                .expect("dims preserved");
                let thinned = thin(&mask);
                let (a, b, c) = match_skeletons(&thinned, gt, d_tol)?;
                tp[ti] += a;
                fp[ti] += b;
                fn_[ti] += c;
            }
        }
        Ok((tp, fp, fn_))
    };

    let (mut tp, mut fp, mut fn_) = if threads <= 1 {
        accumulate(0..responses.len())?
    } else {
        // Integer counts sum commutatively, so chunked workers stay exact.
        let chunk = responses.len().div_ceil(threads);
        let partials: Vec<Result<(Vec<u64>, Vec<u64>, Vec<u64>)>> = std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for worker in 0..threads {
                let lo = worker * chunk;
                let hi = ((worker + 1) * chunk).min(responses.len());
                let acc = &accumulate;
                handles.push(scope.spawn(move || acc(lo..hi.max(lo))));
            }
            handles.into_iter().map(|h| h.join().expect("eval worker")).collect()
        });
        let mut tp = vec![0u64; nt];
        let mut fp = vec![0u64; nt];
        let mut fn_ = vec![0u64; nt];
        for partial in partials {
            let (a, b, c) = partial?;
            for i in 0..nt {
                tp[i] += a[i];
                fp[i] += b[i];
                fn_[i] += c[i];
            }
        }
        (tp, fp, fn_)
    };

    let mut precision = vec![0.0; nt];
    let mut recall = vec![0.0; nt];
    let mut f = vec![0.0; nt];
    let mut ods_f = 0.0;
    let mut ods_threshold = opts.thresholds.first().copied().unwrap_or(0.0);
    for i in 0..nt {
        let p = if tp[i] + fp[i] > 0 {
            tp[i] as f64 / (tp[i] + fp[i]) as f64
        } else {
            0.0
        };
        let r = if tp[i] + fn_[i] > 0 {
            tp[i] as f64 / (tp[i] + fn_[i]) as f64
        } else {
            0.0
        };
        precision[i] = p;
        recall[i] = r;
        f[i] = harmonic_f(p, r);
        if f[i] > ods_f {
            ods_f = f[i];
            ods_threshold = opts.thresholds[i];
        }
    }
    // Hand the buffers back in one struct.
    tp.shrink_to_fit();
    fp.shrink_to_fit();
    fn_.shrink_to_fit();
    Ok(EvalReport {
        ods_f,
        ods_threshold,
        curve: PRCurve {
            thresholds: opts.thresholds.clone(),
            tp,
            fp,
            fn_,
            precision,
            recall,
            f,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nms_keeps_constant_image() {
        let img = GrayImage::from_vec(6, 6, vec![0.4f64; 36]).unwrap();
        let out = nms(&img);
        assert_eq!(out.as_slice(), img.as_slice());
    }

    #[test]
    fn nms_keeps_isolated_peak() {
        let mut img = GrayImage::<f64>::zeros(9, 9);
        img.set(4, 4, 0.9);
        let out = nms(&img);
        assert_eq!(out.get(4, 4), 0.9);
    }

    #[test]
    fn nms_vertical_ridge_keeps_crest_column() {
        // Oracle: analytic crest of r(x, y) = exp(-(x - x0)^2 / 2).
        let (w, h, x0) = (21usize, 15usize, 10usize);
        let mut img = GrayImage::<f64>::zeros(w, h);
        for row in 0..h {
            for col in 0..w {
                let d = col as f64 - x0 as f64;
                img.set(row, col, (-d * d / 2.0).exp());
            }
        }
        let out = nms(&img);
        for row in 2..h - 2 {
            for col in 2..w - 2 {
                if col == x0 {
                    assert!(out.get(row, col) > 0.0, "crest lost at row {row}");
                } else {
                    assert_eq!(out.get(row, col), 0.0, "col {col} row {row} survived");
                }
            }
        }
    }

    #[test]
    fn nms_never_increases_values_or_support() {
        let mut img = GrayImage::<f64>::zeros(8, 8);
        for (i, v) in img.as_mut_slice().iter_mut().enumerate() {
            *v = ((i * 37 % 11) as f64) / 11.0;
        }
        let out = nms(&img);
        let mut kept = 0;
        for (o, i) in out.as_slice().iter().zip(img.as_slice()) {
            assert!(o <= i);
            if *o > 0.0 {
                kept += 1;
            }
        }
        let input_pos = img.as_slice().iter().filter(|&&v| v > 0.0).count();
        assert!(kept <= input_pos);
    }

    #[test]
    fn match_identical_masks() {
        let mut gt = BinaryImage::zeros(10, 10);
        for c in 2..8 {
            gt.set(5, c, true);
        }
        let (tp, fp, fn_) = match_skeletons(&gt, &gt, 1.0).unwrap();
        assert_eq!((tp, fp, fn_), (6, 0, 0));
    }

    #[test]
    fn match_empty_prediction() {
        let mut gt = BinaryImage::zeros(5, 5);
        gt.set(2, 2, true);
        gt.set(2, 3, true);
        let empty = BinaryImage::zeros(5, 5);
        let (tp, fp, fn_) = match_skeletons(&empty, &gt, 2.0).unwrap();
        assert_eq!((tp, fp, fn_), (0, 0, 2));
    }

    #[test]
    fn match_shifted_line_within_tolerance() {
        let mut gt = BinaryImage::zeros(12, 12);
        let mut pred = BinaryImage::zeros(12, 12);
        for c in 2..10 {
            gt.set(5, c, true);
            pred.set(6, c, true);
        }
        let (tp, fp, fn_) = match_skeletons(&pred, &gt, 2.0).unwrap();
        assert_eq!((tp, fp, fn_), (8, 0, 0));
    }

    #[test]
    fn match_rejects_shape_mismatch() {
        let a = BinaryImage::zeros(3, 3);
        let b = BinaryImage::zeros(4, 3);
        assert!(match_skeletons(&a, &b, 1.0).is_err());
    }

    #[test]
    fn evaluate_gt_as_response_is_perfect() {
        let mut gt = BinaryImage::zeros(16, 16);
        for c in 3..13 {
            gt.set(8, c, true);
        }
        let resp: GrayImage<f64> = gt.to_gray();
        let report = evaluate(&[resp], &[gt]).unwrap();
        assert_eq!(report.ods_f, 1.0);
    }

    #[test]
    fn evaluate_zero_response_is_zero() {
        let mut gt = BinaryImage::zeros(8, 8);
        gt.set(4, 4, true);
        let resp = GrayImage::<f32>::zeros(8, 8);
        let report = evaluate(&[resp], &[gt]).unwrap();
        assert_eq!(report.ods_f, 0.0);
    }

    #[test]
    fn f_is_harmonic_mean_below_arithmetic() {
        assert_eq!(harmonic_f(0.5, 0.5), 0.5);
        assert_eq!(harmonic_f(0.0, 0.0), 0.0);
        for &(p, r) in &[(0.3, 0.9), (0.8, 0.2), (1.0, 0.5)] {
            assert!(harmonic_f(p, r) <= (p + r) / 2.0 + 1e-15);
        }
    }

    #[test]
    fn evaluate_order_invariant() {
        let mut gt1 = BinaryImage::zeros(12, 12);
        let mut gt2 = BinaryImage::zeros(12, 12);
        for c in 2..10 {
            gt1.set(4, c, true);
            gt2.set(7, c, true);
        }
        let r1: GrayImage<f64> = gt1.to_gray();
        let r2 = {
            // Imperfect response for gt2: one pixel off.
            let mut m = gt2.clone();
            m.set(7, 2, false);
            m.set(8, 2, true);
            m.to_gray::<f64>()
        };
        let fwd = evaluate(&[r1.clone(), r2.clone()], &[gt1.clone(), gt2.clone()]).unwrap();
        let rev = evaluate(&[r2, r1], &[gt2, gt1]).unwrap();
        assert_eq!(fwd.ods_f, rev.ods_f);
        assert_eq!(fwd.curve.tp, rev.curve.tp);
    }

    #[test]
    fn csv_schema() {
        let mut gt = BinaryImage::zeros(8, 8);
        gt.set(4, 4, true);
        let report = evaluate(&[gt.to_gray::<f32>()], &[gt]).unwrap();
        let csv = report.curve.to_csv();
        assert!(csv.starts_with("threshold,tp,fp,fn,precision,recall,f\n"));
        assert_eq!(csv.lines().count(), 100);
    }
}
