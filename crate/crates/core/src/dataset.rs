//! Sample loading, train/test splitting, and data augmentation
//! (input rescaling, flips, quarter-turn rotations).

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{load_gray, GrayImage};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct Sample<S> {
    pub image: GrayImage<S>,
    /// Scale-valued skeleton label in [0, 1].
    pub label: GrayImage<S>,
    pub id: String,
}

/// Loads `img_XXXXX.png` / `lab_XXXXX.png` pairs from a directory, sorted by
/// id. An empty directory yields an empty list; an unpaired file is an error.
pub fn load_dir<S: Scalar>(dir: impl AsRef<Path>) -> Result<Vec<Sample<S>>> {
    let dir = dir.as_ref();
    let mut images: BTreeMap<String, std::path::PathBuf> = BTreeMap::new();
    let mut labels: BTreeMap<String, std::path::PathBuf> = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().to_string();
        if let Some(id) = name.strip_prefix("img_").and_then(|s| s.strip_suffix(".png")) {
            images.insert(id.to_string(), entry.path());
        } else if let Some(id) = name.strip_prefix("lab_").and_then(|s| s.strip_suffix(".png")) {
            labels.insert(id.to_string(), entry.path());
        }
    }
    for id in images.keys() {
        if !labels.contains_key(id) {
            return Err(Error::MissingPair(id.clone()));
        }
    }
    for id in labels.keys() {
        if !images.contains_key(id) {
            return Err(Error::MissingPair(id.clone()));
        }
    }
    let mut samples = Vec::with_capacity(images.len());
    for (id, img_path) in images {
        let image: GrayImage<S> = load_gray(&img_path)?;
        let label: GrayImage<S> = load_gray(&labels[&id])?;
        if image.dims() != label.dims() {
            return Err(Error::DimensionMismatch {
                id,
                image_dims: image.dims(),
                label_dims: label.dims(),
            });
        }
        samples.push(Sample { image, label, id });
    }
    Ok(samples)
}

// ---------------------------------------------------------------------------
// Train/test split file: `split.csv` with rows `id,train|test`.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

pub fn write_split(path: impl AsRef<Path>, rows: &[(String, Split)]) -> Result<()> {
    let mut out = String::from("id,split\n");
    for (id, split) in rows {
        out.push_str(&format!(
            "{id},{}\n",
            match split {
                Split::Train => "train",
                Split::Test => "test",
            }
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_split(path: impl AsRef<Path>) -> Result<BTreeMap<String, Split>> {
    let text = std::fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let (id, kind) = line
            .split_once(',')
            .ok_or_else(|| Error::config(format!("bad split row: {line}")))?;
        let split = match kind.trim() {
            "train" => Split::Train,
            "test" => Split::Test,
            other => return Err(Error::config(format!("bad split kind: {other}"))),
        };
        map.insert(id.trim().to_string(), split);
    }
    Ok(map)
}

/// Partitions samples by a split map; samples missing from the map follow
/// `default`.
pub fn apply_split<S>(
    samples: Vec<Sample<S>>,
    split: &BTreeMap<String, Split>,
    default: Split,
) -> (Vec<Sample<S>>, Vec<Sample<S>>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for sample in samples {
        match split.get(&sample.id).copied().unwrap_or(default) {
            Split::Train => train.push(sample),
            Split::Test => test.push(sample),
        }
    }
    (train, test)
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentSpec {
    /// Rescale to the three input scales 0.8, 1.0, 1.2.
    pub scales: bool,
    /// Flip states none / left-right / up-down.
    pub flips: bool,
    /// Quarter-turn rotations 0, 90, 180, 270 degrees.
    pub rotations: bool,
}

impl AugmentSpec {
    pub fn identity() -> Self {
        AugmentSpec {
            scales: false,
            flips: false,
            rotations: false,
        }
    }

    pub fn full() -> Self {
        AugmentSpec {
            scales: true,
            flips: true,
            rotations: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flip {
    None,
    LeftRight,
    UpDown,
}

pub fn flip_image<S: Scalar>(img: &GrayImage<S>, flip: Flip) -> GrayImage<S> {
    let (w, h) = img.dims();
    let mut out = GrayImage::zeros(w, h);
    for row in 0..h {
        for col in 0..w {
            let v = match flip {
                Flip::None => img.get(row, col),
                Flip::LeftRight => img.get(row, w - 1 - col),
                Flip::UpDown => img.get(h - 1 - row, col),
            };
            out.set(row, col, v);
        }
    }
    out
}

/// Rotation by `quarters` * 90 degrees clockwise; exact pixel permutation.
pub fn rotate_image<S: Scalar>(img: &GrayImage<S>, quarters: usize) -> GrayImage<S> {
    let (w, h) = img.dims();
    match quarters % 4 {
        0 => img.clone(),
        1 => {
            let mut out = GrayImage::zeros(h, w);
            for row in 0..h {
                for col in 0..w {
                    out.set(col, h - 1 - row, img.get(row, col));
                }
            }
            out
        }
        2 => {
            let mut out = GrayImage::zeros(w, h);
            for row in 0..h {
                for col in 0..w {
                    out.set(h - 1 - row, w - 1 - col, img.get(row, col));
                }
            }
            out
        }
        _ => {
            let mut out = GrayImage::zeros(h, w);
            for row in 0..h {
                for col in 0..w {
                    out.set(w - 1 - col, row, img.get(row, col));
                }
            }
            out
        }
    }
}

/// Bilinear intensity resize (align-corners-false sampling).
pub fn resize_bilinear<S: Scalar>(img: &GrayImage<S>, ow: usize, oh: usize) -> GrayImage<S> {
    let (w, h) = img.dims();
    let mut out = GrayImage::zeros(ow, oh);
    let fx = w as f64 / ow as f64;
    let fy = h as f64 / oh as f64;
    for row in 0..oh {
        let sy = ((row as f64 + 0.5) * fy - 0.5).clamp(0.0, h as f64 - 1.0);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = sy - y0 as f64;
        for col in 0..ow {
            let sx = ((col as f64 + 0.5) * fx - 0.5).clamp(0.0, w as f64 - 1.0);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let tx = sx - x0 as f64;
            let v = img.get(y0, x0).to_f64c() * (1.0 - ty) * (1.0 - tx)
                + img.get(y0, x1).to_f64c() * (1.0 - ty) * tx
                + img.get(y1, x0).to_f64c() * ty * (1.0 - tx)
                + img.get(y1, x1).to_f64c() * ty * tx;
            out.set(row, col, S::from_f64c(v));
        }
    }
    out
}

/// Nearest-neighbor label resize: keeps the support thin; stored scale
/// values are multiplied by `value_scale` and clamped to 1.
pub fn resize_label_nearest<S: Scalar>(
    img: &GrayImage<S>,
    ow: usize,
    oh: usize,
    value_scale: f64,
) -> GrayImage<S> {
    let (w, h) = img.dims();
    let mut out = GrayImage::zeros(ow, oh);
    let fx = w as f64 / ow as f64;
    let fy = h as f64 / oh as f64;
    for row in 0..oh {
        let sy = (((row as f64 + 0.5) * fy - 0.5).round()).clamp(0.0, h as f64 - 1.0) as usize;
        for col in 0..ow {
            let sx = (((col as f64 + 0.5) * fx - 0.5).round()).clamp(0.0, w as f64 - 1.0) as usize;
            let v = img.get(sy, sx).to_f64c();
            if v > 0.0 {
                out.set(row, col, S::from_f64c((v * value_scale).min(1.0)));
            }
        }
    }
    out
}

/// Expands one sample into its augmented variants in a fixed order:
/// scale-major, then flip state, then rotation. The full spec yields
/// 3 x 3 x 4 = 36 variants.
pub fn augment<S: Scalar>(sample: &Sample<S>, spec: &AugmentSpec) -> Vec<Sample<S>> {
    let scales: &[f64] = if spec.scales { &[0.8, 1.0, 1.2] } else { &[1.0] };
    let flips: &[Flip] = if spec.flips {
        &[Flip::None, Flip::LeftRight, Flip::UpDown]
    } else {
        &[Flip::None]
    };
    let rotations: &[usize] = if spec.rotations { &[0, 1, 2, 3] } else { &[0] };

    let mut out = Vec::with_capacity(scales.len() * flips.len() * rotations.len());
    let (w, h) = sample.image.dims();
    for &scale in scales {
        let (image_s, label_s) = if scale == 1.0 {
            (sample.image.clone(), sample.label.clone())
        } else {
            let ow = ((w as f64 * scale).round() as usize).max(1);
            let oh = ((h as f64 * scale).round() as usize).max(1);
            (
                resize_bilinear(&sample.image, ow, oh),
                resize_label_nearest(&sample.label, ow, oh, scale),
            )
        };
        for &flip in flips {
            let image_f = flip_image(&image_s, flip);
            let label_f = flip_image(&label_s, flip);
            for &rot in rotations {
                out.push(Sample {
                    image: rotate_image(&image_f, rot),
                    label: rotate_image(&label_f, rot),
                    id: format!(
                        "{}_s{:03}_f{}_r{}",
                        sample.id,
                        (scale * 100.0).round() as usize,
                        match flip {
                            Flip::None => "n",
                            Flip::LeftRight => "lr",
                            Flip::UpDown => "ud",
                        },
                        rot * 90
                    ),
                });
            }
        }
    }
    out
}
