//! Probability-mask label encoding: turns a scale-valued skeleton label into
//! the soft supervision target used for training. The mask is built from the
//! dilated-and-blurred skeleton support, re-emphasized on true skeleton
//! pixels and joints, and normalized to [0, 1].

use crate::error::{Error, Result};
use crate::morphology::{binarize, branch_points, dilate, gaussian_blur, StructuringElement};
use crate::raster::{normalize, GrayImage};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbMaskConfig {
    mask_radius: usize,
    joint_dilate_radius: usize,
}

impl ProbMaskConfig {
    /// `mask_radius` must be odd and within 3..=31.
    pub fn new(mask_radius: usize) -> Result<Self> {
        Self::with_joint_radius(mask_radius, 3)
    }

    pub fn with_joint_radius(mask_radius: usize, joint_dilate_radius: usize) -> Result<Self> {
        if mask_radius % 2 == 0 || !(3..=31).contains(&mask_radius) {
            return Err(Error::config(format!(
                "mask radius {mask_radius} must be odd and in 3..=31"
            )));
        }
        if joint_dilate_radius % 2 == 0 || joint_dilate_radius < 1 {
            return Err(Error::config(format!(
                "joint dilate radius {joint_dilate_radius} must be odd and >= 1"
            )));
        }
        Ok(ProbMaskConfig {
            mask_radius,
            joint_dilate_radius,
        })
    }

    pub fn mask_radius(&self) -> usize {
        self.mask_radius
    }

    pub fn joint_dilate_radius(&self) -> usize {
        self.joint_dilate_radius
    }
}

/// Encodes a scale-valued skeleton label into the probability mask.
///
/// Stages: binarize; box-dilate by the mask radius; Gaussian-blur the dilated
/// support with the same kernel length; add the normalized blur, the
/// normalized label, and a joint-emphasis term (dilated branch points
/// restricted back onto skeleton pixels); normalize the sum.
///
/// An all-zero label yields an all-zero mask (flagged by `is_empty_label`,
/// not an error). Intermediate arithmetic runs in f64; the result is cast to
/// the caller's scalar type.
pub fn encode<S: Scalar>(label: &GrayImage<S>, cfg: &ProbMaskConfig) -> Result<GrayImage<S>> {
    for (index, &v) in label.as_slice().iter().enumerate() {
        let v = v.to_f64c();
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange { index, value: v });
        }
    }
    let label64: GrayImage<f64> = label.cast();
    let se = StructuringElement::new(cfg.mask_radius)?;
    let joint_se = StructuringElement::new(cfg.joint_dilate_radius)?;

    let bin = binarize(&label64);
    let dilated = dilate(&bin, se).to_gray::<f64>();
    let prob = gaussian_blur(&dilated, cfg.mask_radius)?;

    let joints = dilate(&branch_points(&bin), joint_se);
    let (w, h) = label.dims();
    let mut joint_term = GrayImage::<f64>::zeros(w, h);
    for row in 0..h {
        for col in 0..w {
            if joints.get(row, col) && bin.get(row, col) {
                joint_term.set(row, col, 1.0);
            }
        }
    }

    let prob_n = normalize(&prob)?;
    let label_n = normalize(&label64)?;
    let mut sum = GrayImage::<f64>::zeros(w, h);
    for i in 0..w * h {
        sum.as_mut_slice()[i] =
            prob_n.as_slice()[i] + label_n.as_slice()[i] + joint_term.as_slice()[i];
    }
    Ok(normalize(&sum)?.cast())
}

/// True when the label carries no skeleton pixels (encode then returns an
/// all-zero mask).
pub fn is_empty_label<S: Scalar>(label: &GrayImage<S>) -> bool {
    label.as_slice().iter().all(|&v| v <= S::zero())
}

// Piecewise-linear colormap with monotonically increasing composite
// luminance (dark blue -> teal -> green -> yellow).
const COLORMAP: [(f64, [f64; 3]); 5] = [
    (0.00, [0.050, 0.030, 0.330]),
    (0.25, [0.160, 0.322, 0.571]),
    (0.50, [0.137, 0.576, 0.519]),
    (0.75, [0.455, 0.780, 0.290]),
    (1.00, [0.980, 0.930, 0.080]),
];

pub fn colormap_rgb(t: f64) -> [f64; 3] {
    let t = t.clamp(0.0, 1.0);
    if t >= 1.0 {
        return COLORMAP[COLORMAP.len() - 1].1;
    }
    for pair in COLORMAP.windows(2) {
        let (t0, c0) = pair[0];
        let (t1, c1) = pair[1];
        if t <= t1 {
            let a = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
            return [
                c0[0] + a * (c1[0] - c0[0]),
                c0[1] + a * (c1[1] - c0[1]),
                c0[2] + a * (c1[2] - c0[2]),
            ];
        }
    }
    COLORMAP[COLORMAP.len() - 1].1
}

/// Perceptual colormap rendering of a mask, returned as three channel planes
/// ready for RGB PNG export.
pub fn weight_heatmap<S: Scalar>(mask: &GrayImage<S>) -> [GrayImage<S>; 3] {
    let (w, h) = mask.dims();
    let mut channels = [
        GrayImage::<S>::zeros(w, h),
        GrayImage::<S>::zeros(w, h),
        GrayImage::<S>::zeros(w, h),
    ];
    for (i, &v) in mask.as_slice().iter().enumerate() {
        let rgb = colormap_rgb(v.to_f64c());
        for (ch, &c) in channels.iter_mut().zip(rgb.iter()) {
            ch.as_mut_slice()[i] = S::from_f64c(c);
        }
    }
    channels
}
