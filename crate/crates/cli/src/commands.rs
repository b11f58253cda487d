use std::path::Path;

use skeldet::autonet::{self, checkpoint, NetworkConfig, Supervision, TrainConfig};
use skeldet::dataset::{self, Sample, Split};
use skeldet::evalkit::{evaluate_with, EvalOptions};
use skeldet::morphology::binarize;
use skeldet::probmask::{encode as encode_mask, is_empty_label, weight_heatmap, ProbMaskConfig};
use skeldet::raster::{load_gray, save_gray, save_rgb, BinaryImage, GrayImage};
use skeldet::synthgen::{gen_dataset, GenConfig};

use crate::config::{out_path, parent_dir, Resolved};
use crate::{AblateArgs, Cli, CliError, EncodeArgs, EvalArgs, GenArgs, InferArgs, PlotArgs, TrainArgs};

fn parse_size(s: &str) -> Option<(usize, usize)> {
    if let Some((w, h)) = s.split_once(['x', 'X']) {
        Some((w.parse().ok()?, h.parse().ok()?))
    } else {
        let n = s.parse().ok()?;
        Some((n, n))
    }
}

pub fn gen(cli: &Cli, args: &GenArgs) -> Result<(), CliError> {
    let mut resolved = Resolved::new(cli, "gen")?;
    if args.n == 0 {
        return Err(CliError::usage("--n must be >= 1"));
    }
    let size = parse_size(&args.size).ok_or_else(|| CliError::usage("--size takes N or WxH"))?;
    let seed = resolved.get("seed", cli.seed, 0, |s| s.parse().ok())?;
    let clutter = resolved.get("clutter", args.clutter, 1, |s| s.parse().ok())?;
    let noise = resolved.get("noise_amplitude", None, 0.15, |s| s.parse().ok())?;
    let contrast = resolved.get("contrast", None, 0.4, |s| s.parse().ok())?;
    let distractors = resolved.get("distractors", None, 1, |s| s.parse().ok())?;
    resolved.record("n", args.n);
    resolved.record("size", format!("{}x{}", size.0, size.1));

    let cfg = GenConfig {
        image_size: size,
        max_shapes: clutter,
        noise_amplitude: noise,
        contrast,
        distractors,
        seed,
        ..GenConfig::default()
    };
    let dir = out_path(cli, &args.out);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(e.to_string()))?;
    gen_dataset::<f32>(&cfg, args.n, seed, &dir)?;
    resolved.write(&dir)?;
    println!("wrote {} samples to {}", args.n, dir.display());
    Ok(())
}

pub fn encode(cli: &Cli, args: &EncodeArgs) -> Result<(), CliError> {
    let mut resolved = Resolved::new(cli, "encode")?;
    let r = resolved.get("r", args.r, 5, |s| s.parse().ok())?;
    let cfg = ProbMaskConfig::new(r)?;
    let label: GrayImage<f32> = load_gray(&args.label)?;
    if is_empty_label(&label) {
        eprintln!("warning: label has no skeleton pixels; mask will be all zero");
    }
    let mask = encode_mask(&label, &cfg)?;
    let out = match &args.out {
        Some(p) => std::path::PathBuf::from(p),
        None => out_path(cli, &None).join("mask.png"),
    };
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    save_gray(&mask, &out)?;
    resolved.record("label", &args.label);
    resolved.record("out", out.display());
    if let Some(heatmap_path) = &args.heatmap {
        let channels = weight_heatmap(&mask);
        save_rgb(&channels, heatmap_path)?;
        resolved.record("heatmap", heatmap_path);
    }
    resolved.write(&parent_dir(&out))?;
    Ok(())
}

/// Loads a dataset directory and partitions it by split.csv when present
/// (everything defaults to the given side otherwise).
fn load_split(
    dir: &str,
    default: Split,
) -> Result<(Vec<Sample<f32>>, Vec<Sample<f32>>), CliError> {
    let samples: Vec<Sample<f32>> = dataset::load_dir(dir)?;
    let split_path = Path::new(dir).join("split.csv");
    if split_path.exists() {
        let map = dataset::read_split(&split_path)?;
        Ok(dataset::apply_split(samples, &map, default))
    } else {
        match default {
            Split::Train => Ok((samples, Vec::new())),
            Split::Test => Ok((Vec::new(), samples)),
        }
    }
}

struct TrainSettings {
    tc: TrainConfig,
    net_cfg: NetworkConfig,
}

fn resolve_train_settings(
    cli: &Cli,
    resolved: &mut Resolved,
    supervision_flag: &Option<String>,
    r_flag: Option<usize>,
    iters: Option<usize>,
    lr: Option<f64>,
    wd: Option<f64>,
) -> Result<TrainSettings, CliError> {
    let supervision_name = resolved.get(
        "supervision",
        supervision_flag.clone(),
        "promask".to_string(),
        |s| Some(s.to_string()),
    )?;
    let r = resolved.get("r", r_flag, 5, |s| s.parse().ok())?;
    let iters = resolved.get("iters", iters, 2000, |s| s.parse().ok())?;
    let lr = resolved.get("lr", lr, 1e-4, |s| s.parse().ok())?;
    let wd = resolved.get("wd", wd, 0.015, |s| s.parse().ok())?;
    let seed = resolved.get("seed", cli.seed, 0, |s| s.parse().ok())?;
    let threads = resolved.get("threads", cli.threads, 1, |s| s.parse().ok())?;
    let batch = resolved.get("batch", None, 4, |s| s.parse().ok())?;
    let supervision = Supervision::parse(&supervision_name, r)?;

    let mut net_cfg = NetworkConfig::default();
    for (key, value) in resolved.file_entries().clone() {
        checkpoint::apply_config_kv(&mut net_cfg, &key, &value)?;
    }
    net_cfg.validate()?;
    resolved.record("network", checkpoint::config_to_text(&net_cfg).replace('\n', ";"));

    Ok(TrainSettings {
        tc: TrainConfig {
            iterations: iters,
            batch_size: batch,
            lr,
            weight_decay: wd,
            seed,
            supervision,
            threads,
            ..TrainConfig::default()
        },
        net_cfg,
    })
}

pub fn train(cli: &Cli, args: &TrainArgs) -> Result<(), CliError> {
    let mut resolved = Resolved::new(cli, "train")?;
    resolved.record("data", &args.data);
    let settings = resolve_train_settings(
        cli,
        &mut resolved,
        &args.supervision,
        args.r,
        args.iters,
        args.lr,
        args.wd,
    )?;
    let (train_set, _) = load_split(&args.data, Split::Train)?;
    if train_set.is_empty() {
        return Err(CliError::Runtime("no training samples".into()));
    }
    let (net, log) = autonet::train(&train_set, &settings.net_cfg, &settings.tc)?;
    let dir = out_path(cli, &args.out);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(e.to_string()))?;
    checkpoint::save(&net, dir.join("model.ckpt"))?;
    std::fs::write(dir.join("train_log.csv"), autonet::train::log_to_csv(&log))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    resolved.write(&dir)?;
    println!(
        "trained {} steps, final loss {:.6}, checkpoint at {}",
        log.len(),
        log.last().map(|r| r.loss).unwrap_or(0.0),
        dir.join("model.ckpt").display()
    );
    Ok(())
}

fn gather_responses(
    ckpt: &Option<String>,
    responses_dir: &Option<String>,
    test_set: &[Sample<f32>],
) -> Result<Vec<GrayImage<f32>>, CliError> {
    match (ckpt, responses_dir) {
        (Some(path), None) => {
            let net: autonet::Network<f32> = checkpoint::load(path)?;
            test_set
                .iter()
                .map(|s| net.infer(&s.image).map_err(CliError::from))
                .collect()
        }
        (None, Some(dir)) => test_set
            .iter()
            .map(|s| {
                let path = Path::new(dir).join(format!("res_{}.png", s.id));
                load_gray(&path).map_err(CliError::from)
            })
            .collect(),
        _ => Err(CliError::usage("exactly one of --ckpt / --responses is required")),
    }
}

pub fn eval(cli: &Cli, args: &EvalArgs) -> Result<(), CliError> {
    let mut resolved = Resolved::new(cli, "eval")?;
    resolved.record("data", &args.data);
    let threads = resolved.get("threads", cli.threads, 1, |s| s.parse().ok())?;
    let (_, test_set) = load_split(&args.data, Split::Test)?;
    if test_set.is_empty() {
        return Err(CliError::Runtime("no test samples".into()));
    }
    let responses = gather_responses(&args.ckpt, &args.responses, &test_set)?;
    if let Some(p) = &args.ckpt {
        resolved.record("ckpt", p);
    }
    if let Some(p) = &args.responses {
        resolved.record("responses", p);
    }
    let gts: Vec<BinaryImage> = test_set.iter().map(|s| binarize(&s.label)).collect();
    let report = evaluate_with(
        &responses,
        &gts,
        &EvalOptions {
            threads,
            ..EvalOptions::default()
        },
    )?;
    let dir = out_path(cli, &args.out);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(dir.join("pr_curve.csv"), report.curve.to_csv())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(dir.join("report.txt"), report.to_report_text())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    if args.svg {
        let svg = crate::plot::pr_curve_svg(&report.curve.recall, &report.curve.precision);
        std::fs::write(dir.join("pr_curve.svg"), svg)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    resolved.write(&dir)?;
    println!("ODS F {:.6} at threshold {:.2}", report.ods_f, report.ods_threshold);
    Ok(())
}

pub fn infer(cli: &Cli, args: &InferArgs) -> Result<(), CliError> {
    let mut resolved = Resolved::new(cli, "infer")?;
    let net: autonet::Network<f32> = checkpoint::load(&args.ckpt)?;
    let image: GrayImage<f32> = load_gray(&args.image)?;
    let response = net.infer(&image)?;
    let out = match &args.out {
        Some(p) => std::path::PathBuf::from(p),
        None => out_path(cli, &None).join("response.png"),
    };
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    save_gray(&response, &out)?;
    resolved.record("ckpt", &args.ckpt);
    resolved.record("image", &args.image);
    resolved.record("out", out.display());
    resolved.write(&parent_dir(&out))?;
    Ok(())
}

pub fn ablate_r(cli: &Cli, args: &AblateArgs) -> Result<(), CliError> {
    let mut resolved = Resolved::new(cli, "ablate_r")?;
    resolved.record("data", &args.data);
    resolved.record("radii", &args.radii);
    let radii: Vec<usize> = args
        .radii
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::usage("--radii takes comma-separated integers"))?;
    if radii.is_empty() {
        return Err(CliError::usage("--radii must name at least one radius"));
    }
    for &r in &radii {
        if r % 2 == 0 {
            return Err(CliError::usage(format!("radius {r} is even")));
        }
    }
    let settings = resolve_train_settings(
        cli,
        &mut resolved,
        &Some("promask".to_string()),
        None,
        args.iters,
        args.lr,
        args.wd,
    )?;
    let (train_set, test_set) = load_split(&args.data, Split::Train)?;
    if train_set.is_empty() {
        return Err(CliError::Runtime("no training samples".into()));
    }
    // Without a split file, evaluate on the training images.
    let eval_set = if test_set.is_empty() { &train_set } else { &test_set };
    let gts: Vec<BinaryImage> = eval_set.iter().map(|s| binarize(&s.label)).collect();

    let mut csv = String::from("r,ods_f\n");
    for &r in &radii {
        let tc = TrainConfig {
            supervision: Supervision::ProbMask { radius: r },
            ..settings.tc.clone()
        };
        let (net, _) = autonet::train(&train_set, &settings.net_cfg, &tc)?;
        let responses: Vec<GrayImage<f32>> = eval_set
            .iter()
            .map(|s| net.infer(&s.image))
            .collect::<skeldet::Result<_>>()?;
        let report = evaluate_with(
            &responses,
            &gts,
            &EvalOptions {
                threads: tc.threads,
                ..EvalOptions::default()
            },
        )?;
        println!("r={r}: ods_f={:.6}", report.ods_f);
        csv.push_str(&format!("{r},{:.6}\n", report.ods_f));
    }
    let dir = out_path(cli, &args.out);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(dir.join("ablate_r.csv"), csv).map_err(|e| CliError::Runtime(e.to_string()))?;
    resolved.write(&dir)?;
    Ok(())
}

pub fn plot(cli: &Cli, args: &PlotArgs) -> Result<(), CliError> {
    let mut resolved = Resolved::new(cli, "plot")?;
    let text = std::fs::read_to_string(&args.csv)
        .map_err(|e| CliError::usage(format!("--csv {}: {e}", args.csv)))?;
    let (xs, ys) = crate::plot::columns_from_csv(&text, &args.x, &args.y)
        .map_err(CliError::usage)?;
    let svg = crate::plot::curve_svg(&xs, &ys, &args.x, &args.y);
    let out = match &args.out {
        Some(p) => std::path::PathBuf::from(p),
        None => out_path(cli, &None).join("plot.svg"),
    };
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    std::fs::write(&out, svg).map_err(|e| CliError::Runtime(e.to_string()))?;
    resolved.record("csv", &args.csv);
    resolved.record("out", out.display());
    resolved.write(&parent_dir(&out))?;
    Ok(())
}
