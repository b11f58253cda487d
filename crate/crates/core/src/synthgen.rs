//! Synthetic dataset generator: capsule shapes swept from random polyline
//! spines with per-vertex radii, so the scale-valued skeleton ground truth
//! is exact by construction.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{save_gray, GrayImage};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    /// (width, height) in pixels.
    pub image_size: (usize, usize),
    /// Maximum shapes per image (1 = single-object images; up to 3 adds
    /// clutter in the style of multi-object datasets).
    pub max_shapes: usize,
    /// Inclusive range of polyline vertex counts.
    pub vertex_range: (usize, usize),
    /// Inclusive radius range in pixels; the label stores radius / r_max.
    pub radius_range: (f64, f64),
    /// Amplitude of the smooth background value noise.
    pub noise_amplitude: f64,
    /// Foreground/background intensity separation.
    pub contrast: f64,
    /// Skeleton-free distractor blobs per image.
    pub distractors: usize,
    /// Base seed used by the CLI when none is given per call.
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            image_size: (64, 64),
            max_shapes: 1,
            vertex_range: (2, 5),
            radius_range: (2.0, 8.0),
            noise_amplitude: 0.15,
            contrast: 0.4,
            distractors: 1,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.image_size;
        let margin = self.margin();
        if self.radius_range.0 < 2.0 || self.radius_range.1 < self.radius_range.0 {
            return Err(Error::config(format!(
                "radius range {:?} must satisfy 2 <= lo <= hi",
                self.radius_range
            )));
        }
        if w < 2 * margin + 8 || h < 2 * margin + 8 {
            return Err(Error::config(format!(
                "image {w}x{h} too small for radius range {:?}",
                self.radius_range
            )));
        }
        if self.max_shapes == 0 || self.max_shapes > 3 {
            return Err(Error::config("max shapes must be 1..=3"));
        }
        if self.vertex_range.0 < 2 || self.vertex_range.1 < self.vertex_range.0 {
            return Err(Error::config("vertex range must satisfy 2 <= lo <= hi"));
        }
        Ok(())
    }

    /// Spines keep this distance from the border so every swept disk stays
    /// inside the frame.
    pub fn margin(&self) -> usize {
        self.radius_range.1.ceil() as usize + 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeMeta {
    pub kind: String,
    pub vertices: Vec<(f64, f64)>,
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleMeta {
    pub seed: u64,
    pub shapes: Vec<ShapeMeta>,
}

#[derive(Debug, Clone)]
pub struct SynthSample<S> {
    pub image: GrayImage<S>,
    /// radius / r_max on spine pixels, 0 elsewhere.
    pub skeleton: GrayImage<S>,
    pub meta: SampleMeta,
}

/// Rasterized spine pixels of a shape, reduced to a thinning fixed point so
/// the stored skeleton is exactly what the evaluation pipeline's thinning
/// stage would preserve (redundant Bresenham corner pixels are dropped).
fn shape_spine(shape: &ShapeMeta, dims: (usize, usize)) -> Vec<(usize, usize, f64)> {
    let (w, h) = dims;
    let raw = rasterize_spine(&shape.vertices, &shape.radii);
    let mut grid = crate::raster::BinaryImage::zeros(w, h);
    for &(r, c, _) in &raw {
        grid.set(r, c, true);
    }
    let thinned = crate::morphology::thin(&grid);
    raw.into_iter()
        .filter(|&(r, c, _)| thinned.get(r, c))
        .collect()
}

/// Integer spine pixels with interpolated radii for one polyline shape.
fn rasterize_spine(vertices: &[(f64, f64)], radii: &[f64]) -> Vec<(usize, usize, f64)> {
    let mut spine: Vec<(usize, usize, f64)> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for seg in 0..vertices.len() - 1 {
        let (r0, c0) = vertices[seg];
        let (r1, c1) = vertices[seg + 1];
        let (rad0, rad1) = (radii[seg], radii[seg + 1]);
        // Bresenham over the rounded endpoints.
        let (mut x0, mut y0) = (c0.round() as isize, r0.round() as isize);
        let (x1, y1) = (c1.round() as isize, r1.round() as isize);
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        let steps = dx.max(-dy).max(1) as f64;
        let mut step = 0.0;
        loop {
            let t = step / steps;
            let rad = rad0 + t * (rad1 - rad0);
            if seen.insert((y0, x0)) {
                spine.push((y0 as usize, x0 as usize, rad));
            }
            if x0 == x1 && y0 == y1 {
                break;
            }
            step += 1.0;
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }
    spine
}

/// True when every spine pixel at least 2 px (Chebyshev) from all vertices
/// has at most two positive 8-neighbors, i.e. the rasterized spine is a
/// clean 1-px path away from corners.
fn spine_is_thin(
    spine: &[(usize, usize, f64)],
    vertices: &[(f64, f64)],
    dims: (usize, usize),
) -> bool {
    let (w, h) = dims;
    let mut grid = vec![false; w * h];
    for &(r, c, _) in spine {
        grid[r * w + c] = true;
    }
    for &(r, c, _) in spine {
        let near_vertex = vertices.iter().any(|&(vr, vc)| {
            (vr.round() as isize - r as isize).abs() <= 2
                && (vc.round() as isize - c as isize).abs() <= 2
        });
        if near_vertex {
            continue;
        }
        let mut count = 0;
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (rr, cc) = (r as isize + dr, c as isize + dc);
                if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                    if grid[rr as usize * w + cc as usize] {
                        count += 1;
                    }
                }
            }
        }
        if count > 2 {
            return false;
        }
    }
    true
}

/// Draws a random polyline shape. When `anchor` is given, the spine starts
/// there (attached to an earlier shape's spine, forming a junction).
fn draw_polyline_shape(
    cfg: &GenConfig,
    rng: &mut ChaCha8Rng,
    anchor: Option<(f64, f64)>,
) -> ShapeMeta {
    let (w, h) = cfg.image_size;
    let margin = cfg.margin() as f64;
    let n_vertices = rng.random_range(cfg.vertex_range.0..=cfg.vertex_range.1);
    let (r_lo, r_hi) = cfg.radius_range;
    let min_dim = w.min(h) as f64;
    let step_range = (0.18 * min_dim, 0.38 * min_dim);

    loop {
        let mut vertices = Vec::with_capacity(n_vertices);
        let mut radii = Vec::with_capacity(n_vertices);
        let (mut row, mut col) = match anchor {
            Some((r, c)) => (r, c),
            None => (
                rng.random_range(margin..h as f64 - margin),
                rng.random_range(margin..w as f64 - margin),
            ),
        };
        let mut angle = rng.random_range(0.0..std::f64::consts::TAU);
        vertices.push((row, col));
        radii.push(rng.random_range(r_lo..=r_hi));
        let mut ok = true;
        for _ in 1..n_vertices {
            let mut placed = false;
            for _ in 0..24 {
                let turn = rng.random_range(-1.0..1.0) * std::f64::consts::FRAC_PI_3;
                let step = rng.random_range(step_range.0..step_range.1);
                let cand_row = row + (angle + turn).sin() * step;
                let cand_col = col + (angle + turn).cos() * step;
                if cand_row >= margin
                    && cand_row < h as f64 - margin
                    && cand_col >= margin
                    && cand_col < w as f64 - margin
                {
                    angle += turn;
                    row = cand_row;
                    col = cand_col;
                    placed = true;
                    break;
                }
                // Re-aim toward the middle when the walk hits the frame.
                angle = (h as f64 / 2.0 - row).atan2(w as f64 / 2.0 - col)
                    + rng.random_range(-0.5..0.5);
            }
            if !placed {
                ok = false;
                break;
            }
            vertices.push((row, col));
            radii.push(rng.random_range(r_lo..=r_hi));
        }
        if !ok {
            continue;
        }
        let candidate = ShapeMeta {
            kind: "polyline".to_string(),
            vertices,
            radii,
        };
        let spine = shape_spine(&candidate, cfg.image_size);
        if spine.len() >= 4 && spine_is_thin(&spine, &candidate.vertices, cfg.image_size) {
            return candidate;
        }
    }
}

/// Smooth lattice value noise in [0, 1]: two octaves, smoothstep-interpolated.
fn value_noise(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    let mut total_amp = 0.0;
    for (spacing, amp) in [(8usize, 1.0), (4usize, 0.5)] {
        let gw = w / spacing + 2;
        let gh = h / spacing + 2;
        let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random::<f64>()).collect();
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        for row in 0..h {
            let gy = row as f64 / spacing as f64;
            let y0 = gy.floor() as usize;
            let ty = smooth(gy - y0 as f64);
            for col in 0..w {
                let gx = col as f64 / spacing as f64;
                let x0 = gx.floor() as usize;
                let tx = smooth(gx - x0 as f64);
                let v00 = lattice[y0 * gw + x0];
                let v01 = lattice[y0 * gw + x0 + 1];
                let v10 = lattice[(y0 + 1) * gw + x0];
                let v11 = lattice[(y0 + 1) * gw + x0 + 1];
                let v = v00 * (1.0 - ty) * (1.0 - tx)
                    + v01 * (1.0 - ty) * tx
                    + v10 * ty * (1.0 - tx)
                    + v11 * ty * tx;
                out[row * w + col] += amp * v;
            }
        }
        total_amp += amp;
    }
    for v in out.iter_mut() {
        *v /= total_amp;
    }
    out
}

/// Generates one sample deterministically from the seed.
pub fn gen_sample<S: Scalar>(cfg: &GenConfig, seed: u64) -> Result<SynthSample<S>> {
    cfg.validate()?;
    let (w, h) = cfg.image_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r_max = cfg.radius_range.1;

    let n_shapes = rng.random_range(1..=cfg.max_shapes);
    let mut shapes: Vec<ShapeMeta> = Vec::with_capacity(n_shapes);
    for index in 0..n_shapes {
        // Shapes after the first attach to an earlier spine half the time,
        // creating the junction structures cluttered scenes exhibit.
        let anchor = if index > 0 && rng.random::<f64>() < 0.5 {
            let host = &shapes[rng.random_range(0..shapes.len())];
            let spine = shape_spine(host, cfg.image_size);
            if spine.is_empty() {
                None
            } else {
                let &(r, c, _) = &spine[rng.random_range(0..spine.len())];
                Some((r as f64, c as f64))
            }
        } else {
            None
        };
        shapes.push(draw_polyline_shape(cfg, &mut rng, anchor));
    }

    // Skeleton label and per-shape foreground levels (each shape gets its
    // own intensity so brightness alone does not identify objects).
    let bg_base = 0.30;
    let mut label = vec![0.0f64; w * h];
    let mut fg = vec![false; w * h];
    let mut fg_level = vec![0.0f64; w * h];
    for shape in &shapes {
        let level = bg_base + cfg.contrast * rng.random_range(0.85..1.15);
        let spine = shape_spine(shape, cfg.image_size);
        for &(r, c, radius) in &spine {
            let v = radius / r_max;
            if v > label[r * w + c] {
                label[r * w + c] = v;
            }
            let reach = radius.ceil() as isize;
            for dr in -reach..=reach {
                for dc in -reach..=reach {
                    if (dr * dr + dc * dc) as f64 <= radius * radius {
                        let rr = r as isize + dr;
                        let cc = c as isize + dc;
                        if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                            let i = rr as usize * w + cc as usize;
                            fg[i] = true;
                            fg_level[i] = level;
                        }
                    }
                }
            }
        }
    }

    // Background texture, distractor blobs, foreground shading, pixel noise.
    let noise = value_noise(w, h, &mut rng);
    let mut image = vec![0.0f64; w * h];
    for i in 0..w * h {
        image[i] = bg_base + cfg.noise_amplitude * (noise[i] - 0.5);
    }
    for _ in 0..cfg.distractors {
        let radius: f64 = rng.random_range(1.5..4.0);
        let reach = radius.ceil() as isize;
        let row = rng.random_range(0..h) as isize;
        let col = rng.random_range(0..w) as isize;
        // Distractor brightness overlaps the shape range, so intensity is
        // not enough to tell confusers from true shapes.
        let level = bg_base + cfg.contrast * rng.random_range(0.5..0.95);
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                if (dr * dr + dc * dc) as f64 <= radius * radius {
                    let (rr, cc) = (row + dr, col + dc);
                    if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                        let i = rr as usize * w + cc as usize;
                        if !fg[i] {
                            image[i] = level;
                        }
                    }
                }
            }
        }
    }
    // Shape interiors stay flat (the value noise is background texture), so
    // the centerline carries no local intensity cue of its own.
    for i in 0..w * h {
        if fg[i] {
            image[i] = fg_level[i];
        }
        image[i] += 0.03 * (rng.random::<f64>() - 0.5);
        image[i] = image[i].clamp(0.0, 1.0);
    }

    Ok(SynthSample {
        image: GrayImage::from_vec(w, h, image)?.cast(),
        skeleton: GrayImage::from_vec(w, h, label)?.cast(),
        meta: SampleMeta {
            seed,
            shapes,
        },
    })
}

/// Generates `n` samples with seeds seed..seed+n-1 and writes them to `dir`
/// as `img_%05d.png` / `lab_%05d.png` plus `manifest.csv`.
pub fn gen_dataset<S: Scalar>(
    cfg: &GenConfig,
    n: usize,
    seed: u64,
    dir: impl AsRef<Path>,
) -> Result<Vec<SynthSample<S>>> {
    if n == 0 {
        return Err(Error::config("dataset size must be >= 1"));
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut samples = Vec::with_capacity(n);
    let mut manifest = String::from("index,seed,kind\n");
    for i in 0..n {
        let sample_seed = seed + i as u64;
        let sample: SynthSample<S> = gen_sample(cfg, sample_seed)?;
        save_gray(&sample.image, dir.join(format!("img_{i:05}.png")))?;
        save_gray(&sample.skeleton, dir.join(format!("lab_{i:05}.png")))?;
        let kind = sample
            .meta
            .shapes
            .first()
            .map(|s| s.kind.clone())
            .unwrap_or_else(|| "empty".to_string());
        manifest.push_str(&format!("{i},{sample_seed},{kind}\n"));
        samples.push(sample);
    }
    std::fs::write(dir.join("manifest.csv"), manifest)?;
    Ok(samples)
}
