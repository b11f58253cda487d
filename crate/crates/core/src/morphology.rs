//! Classical morphological primitives: binarize, box dilation, separable
//! Gaussian blur, branch-point detection, and two-subiteration thinning.

use crate::error::{Error, Result};
use crate::raster::{BinaryImage, GrayImage};
use crate::scalar::Scalar;

/// Rectangular all-ones window with an odd side, anchored at its center.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructuringElement {
    size: usize,
}

impl StructuringElement {
    pub fn new(size: usize) -> Result<Self> {
        if size % 2 == 0 || size < 1 {
            return Err(Error::config(format!(
                "structuring element size {size} must be odd and >= 1"
            )));
        }
        Ok(StructuringElement { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        (self.size - 1) / 2
    }
}

/// True wherever the input is strictly positive.
pub fn binarize<S: Scalar>(img: &GrayImage<S>) -> BinaryImage {
    let data = img.as_slice().iter().map(|&v| v > S::zero()).collect();
    BinaryImage::from_vec(img.width(), img.height(), data).expect("dims preserved")
}

/// Box dilation: output true iff any true pixel lies in the window centered
/// at it. Out-of-bounds window cells read as false. Separable (rows, then
/// columns) since the window is rectangular.
pub fn dilate(img: &BinaryImage, se: StructuringElement) -> BinaryImage {
    let (w, h) = img.dims();
    let r = se.radius() as isize;
    let mut horiz = BinaryImage::zeros(w, h);
    for row in 0..h {
        for col in 0..w {
            let mut hit = false;
            let lo = (col as isize - r).max(0) as usize;
            let hi = ((col as isize + r) as usize).min(w.saturating_sub(1));
            for c in lo..=hi {
                if img.get(row, c) {
                    hit = true;
                    break;
                }
            }
            horiz.set(row, col, hit);
        }
    }
    let mut out = BinaryImage::zeros(w, h);
    for row in 0..h {
        for col in 0..w {
            let mut hit = false;
            let lo = (row as isize - r).max(0) as usize;
            let hi = ((row as isize + r) as usize).min(h.saturating_sub(1));
            for rr in lo..=hi {
                if horiz.get(rr, col) {
                    hit = true;
                    break;
                }
            }
            out.set(row, col, hit);
        }
    }
    out
}

/// Mirrors an index about the edge pixels without repeating them
/// (…, 2, 1, | 0, 1, …, n-1, | n-2, n-3, …).
#[inline]
pub(crate) fn reflect101(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * n - 2 - i;
        } else {
            return i as usize;
        }
    }
}

/// Samples of a normalized 1-D Gaussian of the given odd length.
pub(crate) fn gaussian_kernel(ksize: usize, sigma: f64) -> Vec<f64> {
    let half = (ksize as isize - 1) / 2;
    let mut kernel: Vec<f64> = (-half..=half)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    for v in kernel.iter_mut() {
        *v /= sum;
    }
    kernel
}

/// The ksize -> sigma rule of the reference image library the label pipeline
/// follows: sigma = 0.3 * ((ksize - 1) * 0.5 - 1) + 0.8.
pub fn sigma_for_ksize(ksize: usize) -> f64 {
    0.3 * ((ksize as f64 - 1.0) * 0.5 - 1.0) + 0.8
}

/// Separable Gaussian blur with an odd kernel length `r` and sigma derived
/// from it. Border policy: mirror about the edge pixel.
pub fn gaussian_blur<S: Scalar>(img: &GrayImage<S>, r: usize) -> Result<GrayImage<S>> {
    if r % 2 == 0 || r < 3 {
        return Err(Error::BadRadius(r));
    }
    Ok(gaussian_blur_with(img, r, sigma_for_ksize(r)))
}

/// Separable Gaussian blur with an explicit sigma (kernel length must be odd).
pub fn gaussian_blur_with<S: Scalar>(img: &GrayImage<S>, ksize: usize, sigma: f64) -> GrayImage<S> {
    assert!(ksize % 2 == 1, "kernel length must be odd");
    let kernel: Vec<S> = gaussian_kernel(ksize, sigma)
        .into_iter()
        .map(S::from_f64c)
        .collect();
    let half = (ksize - 1) / 2;
    let (w, h) = img.dims();

    // Horizontal pass.
    let mut horiz = vec![S::zero(); w * h];
    for row in 0..h {
        let src = img.row(row);
        for col in 0..w {
            let mut acc = S::zero();
            for (k, &g) in kernel.iter().enumerate() {
                let i = reflect101(col as isize + k as isize - half as isize, w);
                acc = acc + g * src[i];
            }
            horiz[row * w + col] = acc;
        }
    }
    // Vertical pass.
    let mut out = vec![S::zero(); w * h];
    for col in 0..w {
        for row in 0..h {
            let mut acc = S::zero();
            for (k, &g) in kernel.iter().enumerate() {
                let i = reflect101(row as isize + k as isize - half as isize, h);
                acc = acc + g * horiz[i * w + col];
            }
            out[row * w + col] = acc;
        }
    }
    GrayImage::from_vec_unchecked(w, h, out)
}

/// Neighbors in circular order starting north: N, NE, E, SE, S, SW, W, NW.
#[inline]
fn neighbors8(img: &BinaryImage, row: usize, col: usize) -> [bool; 8] {
    let (r, c) = (row as isize, col as isize);
    [
        img.get_checked(r - 1, c),
        img.get_checked(r - 1, c + 1),
        img.get_checked(r, c + 1),
        img.get_checked(r + 1, c + 1),
        img.get_checked(r + 1, c),
        img.get_checked(r + 1, c - 1),
        img.get_checked(r, c - 1),
        img.get_checked(r - 1, c - 1),
    ]
}

/// Number of 0 -> 1 transitions walking the 8-neighborhood circularly
/// (the Rutovitz crossing number).
#[inline]
fn crossing_number(nb: &[bool; 8]) -> usize {
    let mut count = 0;
    for i in 0..8 {
        if !nb[i] && nb[(i + 1) % 8] {
            count += 1;
        }
    }
    count
}

/// Skeleton joints: pixels from which three or more branches emanate,
/// detected as crossing number >= 3 on the 8-neighborhood.
pub fn branch_points(img: &BinaryImage) -> BinaryImage {
    let (w, h) = img.dims();
    let mut out = BinaryImage::zeros(w, h);
    for row in 0..h {
        for col in 0..w {
            if !img.get(row, col) {
                continue;
            }
            let nb = neighbors8(img, row, col);
            if crossing_number(&nb) >= 3 {
                out.set(row, col, true);
            }
        }
    }
    out
}

/// Iterative two-subiteration (Zhang-Suen) thinning to a fixed point.
/// Deletes border pixels with 2..=6 neighbors, exactly one circular 0 -> 1
/// transition, and the per-subiteration diagonal conditions. A subiteration
/// that would delete an entire 8-connected component (small blobs collapse
/// through a 2x2 and disappear under the raw rules) retains that
/// component's first pixel in scan order, so per-component connectivity is
/// preserved exactly.
pub fn thin(img: &BinaryImage) -> BinaryImage {
    let (w, h) = img.dims();
    let mut mask = img.clone();
    let mut to_delete: Vec<(usize, usize)> = Vec::new();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            to_delete.clear();
            for row in 0..h {
                for col in 0..w {
                    if !mask.get(row, col) {
                        continue;
                    }
                    let nb = neighbors8(&mask, row, col);
                    let b: usize = nb.iter().filter(|&&v| v).count();
                    if !(2..=6).contains(&b) || crossing_number(&nb) != 1 {
                        continue;
                    }
                    // nb indices: 0=N, 2=E, 4=S, 6=W.
                    let ok = if pass == 0 {
                        (!nb[0] || !nb[2] || !nb[4]) && (!nb[2] || !nb[4] || !nb[6])
                    } else {
                        (!nb[0] || !nb[2] || !nb[6]) && (!nb[0] || !nb[4] || !nb[6])
                    };
                    if ok {
                        to_delete.push((row, col));
                    }
                }
            }
            retain_vanishing_components(&mask, &mut to_delete);
            for &(row, col) in &to_delete {
                mask.set(row, col, false);
            }
            changed |= !to_delete.is_empty();
        }
        if !changed {
            return mask;
        }
    }
}

/// Unmarks the scan-order-first pixel of every component fully covered by
/// the deletion set.
fn retain_vanishing_components(mask: &BinaryImage, to_delete: &mut Vec<(usize, usize)>) {
    if to_delete.is_empty() {
        return;
    }
    let (w, h) = mask.dims();
    let mut parent: Vec<u32> = (0..(w * h) as u32).collect();
    fn find(parent: &mut [u32], mut i: u32) -> u32 {
        while parent[i as usize] != i {
            parent[i as usize] = parent[parent[i as usize] as usize];
            i = parent[i as usize];
        }
        i
    }
    for row in 0..h {
        for col in 0..w {
            if !mask.get(row, col) {
                continue;
            }
            for (dr, dc) in [(0isize, 1isize), (1, -1), (1, 0), (1, 1)] {
                let (rr, cc) = (row as isize + dr, col as isize + dc);
                if mask.get_checked(rr, cc) {
                    let a = find(&mut parent, (row * w + col) as u32);
                    let b = find(&mut parent, (rr as usize * w + cc as usize) as u32);
                    parent[a as usize] = b;
                }
            }
        }
    }
    use std::collections::BTreeMap;
    let mut totals: BTreeMap<u32, usize> = BTreeMap::new();
    for row in 0..h {
        for col in 0..w {
            if mask.get(row, col) {
                *totals.entry(find(&mut parent, (row * w + col) as u32)).or_default() += 1;
            }
        }
    }
    let mut marked: BTreeMap<u32, usize> = BTreeMap::new();
    for &(row, col) in to_delete.iter() {
        *marked.entry(find(&mut parent, (row * w + col) as u32)).or_default() += 1;
    }
    let doomed: Vec<u32> = marked
        .iter()
        .filter(|(root, &count)| count == totals[root])
        .map(|(&root, _)| root)
        .collect();
    if doomed.is_empty() {
        return;
    }
    let mut spared: std::collections::BTreeSet<u32> = std::collections::BTreeSet::new();
    to_delete.retain(|&(row, col)| {
        let root = find(&mut parent, (row * w + col) as u32);
        if doomed.contains(&root) && !spared.contains(&root) {
            spared.insert(root);
            false
        } else {
            true
        }
    });
}
