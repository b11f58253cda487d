//! Generator guarantees: exact ground truth, determinism on disk, and the
//! self-evaluation identity.

use skeldet::dataset::load_dir;
use skeldet::evalkit::evaluate;
use skeldet::morphology::binarize;
use skeldet::raster::BinaryImage;
use skeldet::synthgen::{gen_dataset, gen_sample, GenConfig, SynthSample};

fn tmpdir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("skeldet-synth-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Brute-force distance transform: per spine pixel, the distance to the
/// nearest background pixel of the rendered foreground.
fn distance_to_background(fg: &BinaryImage, row: usize, col: usize) -> f64 {
    let mut best = f64::MAX;
    for r in 0..fg.height() {
        for c in 0..fg.width() {
            if !fg.get(r, c) {
                let d = ((r as f64 - row as f64).powi(2) + (c as f64 - col as f64).powi(2)).sqrt();
                best = best.min(d);
            }
        }
    }
    best
}

#[test]
fn spine_disks_lie_inside_the_foreground() {
    // Oracle: distance-transform value at every spine pixel is at least its
    // recorded radius minus one pixel of rasterization slack.
    let cfg = GenConfig::default();
    let r_max = cfg.radius_range.1;
    for seed in 0..100u64 {
        let sample: SynthSample<f64> = gen_sample(&cfg, seed).unwrap();
        // Foreground = pixels brighter than the background band.
        let bin = binarize(&sample.skeleton);
        let (w, h) = sample.image.dims();
        let mut fg = BinaryImage::zeros(w, h);
        for r in 0..h {
            for c in 0..w {
                fg.set(r, c, sample.image.get(r, c) > 0.55);
            }
        }
        for (r, c) in bin.iter_true() {
            let radius = sample.skeleton.get(r, c) * r_max;
            let dist = distance_to_background(&fg, r, c);
            assert!(
                dist >= radius - 1.0,
                "seed {seed}: spine ({r},{c}) radius {radius:.2}, distance {dist:.2}"
            );
        }
    }
}

#[test]
fn regeneration_is_byte_identical() {
    let cfg = GenConfig::default();
    let dir_a = tmpdir("rega");
    let dir_b = tmpdir("regb");
    gen_dataset::<f32>(&cfg, 4, 99, &dir_a).unwrap();
    gen_dataset::<f32>(&cfg, 4, 99, &dir_b).unwrap();
    for entry in std::fs::read_dir(&dir_a).unwrap() {
        let name = entry.unwrap().file_name();
        let a = std::fs::read(dir_a.join(&name)).unwrap();
        let b = std::fs::read(dir_b.join(&name)).unwrap();
        assert_eq!(a, b, "{name:?} differs between identical runs");
    }
}

#[test]
fn disjoint_seed_ranges_give_distinct_samples() {
    let cfg = GenConfig::default();
    let dir = tmpdir("dis");
    let first = gen_dataset::<f32>(&cfg, 3, 0, &dir).unwrap();
    let second = gen_dataset::<f32>(&cfg, 3, 100, &tmpdir("dis2")).unwrap();
    for a in &first {
        for b in &second {
            assert_ne!(a.image.as_slice(), b.image.as_slice());
        }
    }
}

#[test]
fn dataset_layout_round_trips_through_loader() {
    let cfg = GenConfig::default();
    let dir = tmpdir("load");
    let generated = gen_dataset::<f32>(&cfg, 3, 7, &dir).unwrap();
    let manifest = std::fs::read_to_string(dir.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 4); // header + 3 rows
    assert!(manifest.starts_with("index,seed,kind\n"));
    let loaded = load_dir::<f32>(&dir).unwrap();
    assert_eq!(loaded.len(), 3);
    // Loaded labels match the generated ones up to 8-bit quantization.
    for (sample, gen) in loaded.iter().zip(&generated) {
        assert_eq!(sample.image.dims(), gen.image.dims());
        for (a, b) in sample.label.as_slice().iter().zip(gen.skeleton.as_slice()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }
}

#[test]
fn gt_response_evaluates_to_perfect_f() {
    // Feeding the binarized label back as the response scores ODS F = 1.
    let cfg = GenConfig::default();
    let mut responses = Vec::new();
    let mut gts = Vec::new();
    for seed in 40..44u64 {
        let s: SynthSample<f32> = gen_sample(&cfg, seed).unwrap();
        let gt = binarize(&s.skeleton);
        responses.push(gt.to_gray::<f32>());
        gts.push(gt);
    }
    let report = evaluate(&responses, &gts).unwrap();
    assert_eq!(report.ods_f, 1.0);
}
