//! Deterministic training loop: seeded batch sampling, per-sample forward
//! and backward passes merged in index order (so any thread count reproduces
//! the single-threaded result bit for bit), Adam updates, and a step log.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{adam_step, build_network, AdamState, Network, NetworkConfig, Shape4, Tensor};
use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::loss::weighted_l2;
use crate::morphology::{binarize, dilate, StructuringElement};
use crate::probmask::{encode, ProbMaskConfig};
use crate::raster::GrayImage;
use crate::scalar::Scalar;

/// The three supervision regimes: the encoded probability mask, the plain
/// 0/1 dilated skeleton, and the raw 1-px skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Supervision {
    ProbMask { radius: usize },
    BinaryDilated { radius: usize },
    PlainSkeleton,
}

impl Supervision {
    pub fn parse(name: &str, radius: usize) -> Result<Self> {
        match name {
            "promask" => Ok(Supervision::ProbMask { radius }),
            "binary" => Ok(Supervision::BinaryDilated { radius }),
            "plain" => Ok(Supervision::PlainSkeleton),
            other => Err(Error::config(format!("unknown supervision {other}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    /// Learning rate for the first `lr_drop_frac` of the steps.
    pub lr: f64,
    /// Learning rate for the remaining steps.
    pub lr_final: f64,
    pub lr_drop_frac: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub supervision: Supervision,
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 2000,
            batch_size: 4,
            lr: 1e-4,
            lr_final: 1e-5,
            lr_drop_frac: 0.8,
            weight_decay: 0.015,
            seed: 0,
            supervision: Supervision::ProbMask { radius: 5 },
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

/// Renders the training log in the `step,loss,lr` CSV schema.
pub fn log_to_csv(rows: &[LogRow]) -> String {
    let mut out = String::from("step,loss,lr\n");
    for row in rows {
        out.push_str(&format!("{},{:.6},{}\n", row.step, row.loss, row.lr));
    }
    out
}

/// Builds the supervision target for one label under the given regime.
pub fn make_target<S: Scalar>(label: &GrayImage<S>, supervision: Supervision) -> Result<GrayImage<S>> {
    match supervision {
        Supervision::PlainSkeleton => Ok(binarize(label).to_gray()),
        Supervision::BinaryDilated { radius } => {
            let se = StructuringElement::new(radius)?;
            Ok(dilate(&binarize(label), se).to_gray())
        }
        Supervision::ProbMask { radius } => encode(label, &ProbMaskConfig::new(radius)?),
    }
}

struct SampleResult<S> {
    loss: f64,
    grads: Vec<Vec<S>>,
}

fn run_one_sample<S: Scalar>(
    net: &mut Network<S>,
    image: &GrayImage<S>,
    target: &GrayImage<S>,
    inv_batch: f64,
) -> Result<SampleResult<S>> {
    let (w, h) = image.dims();
    let x = Tensor::from_data(Shape4::new(1, 1, h, w), image.as_slice().to_vec());
    net.zero_grads();
    let mut cache = net.forward(x)?;
    let pred = GrayImage::from_vec_unchecked(w, h, cache.y.data().to_vec());
    let (loss, grad) = weighted_l2(&pred, target)?;
    let scale = S::from_f64c(inv_batch);
    for (g, &d) in cache.y.grad_mut().iter_mut().zip(grad.as_slice()) {
        *g = d * scale;
    }
    net.backward(&mut cache);
    let grads = net
        .params()
        .iter()
        .map(|(_, t)| t.grad().to_vec())
        .collect();
    Ok(SampleResult {
        loss: loss.to_f64c(),
        grads,
    })
}

/// Trains a freshly built network on the samples. Deterministic given
/// (seed, config); the thread count changes scheduling only, never results.
pub fn train<S: Scalar>(
    samples: &[Sample<S>],
    net_cfg: &NetworkConfig,
    tc: &TrainConfig,
) -> Result<(Network<S>, Vec<LogRow>)> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if tc.batch_size == 0 {
        return Err(Error::config("batch size must be >= 1"));
    }
    let targets: Vec<GrayImage<S>> = samples
        .iter()
        .map(|s| make_target(&s.label, tc.supervision))
        .collect::<Result<_>>()?;

    // Identical dims are required to draw multi-sample batches; otherwise
    // fall back to batch size 1.
    let dims0 = samples[0].image.dims();
    let uniform = samples.iter().all(|s| s.image.dims() == dims0);
    let batch = if uniform { tc.batch_size } else { 1 };
    let threads = tc.threads.clamp(1, batch);

    let mut net: Network<S> = build_network(net_cfg, tc.seed)?;
    let mut state = AdamState::new();
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut log = Vec::with_capacity(tc.iterations);
    let drop_step = (tc.iterations as f64 * tc.lr_drop_frac).floor() as usize;
    let inv_batch = 1.0 / batch as f64;

    for step in 0..tc.iterations {
        let lr = if step < drop_step { tc.lr } else { tc.lr_final };
        let indices: Vec<usize> = (0..batch).map(|_| rng.random_range(0..samples.len())).collect();

        let results: Vec<SampleResult<S>> = if threads <= 1 {
            let mut worker = net.clone();
            indices
                .iter()
                .map(|&i| run_one_sample(&mut worker, &samples[i].image, &targets[i], inv_batch))
                .collect::<Result<_>>()?
        } else {
            run_batch_parallel(&net, samples, &targets, &indices, inv_batch, threads)?
        };

        net.zero_grads();
        let mut loss_sum = 0.0;
        for result in &results {
            loss_sum += result.loss;
            for ((_, tensor), grads) in net.params_mut().iter_mut().zip(&result.grads) {
                for (g, &s) in tensor.grad_mut().iter_mut().zip(grads) {
                    *g = *g + s;
                }
            }
        }
        adam_step(&mut net, &mut state, lr, tc.weight_decay);
        log.push(LogRow {
            step,
            loss: loss_sum * inv_batch,
            lr,
        });
    }
    Ok((net, log))
}

fn run_batch_parallel<S: Scalar>(
    net: &Network<S>,
    samples: &[Sample<S>],
    targets: &[GrayImage<S>],
    indices: &[usize],
    inv_batch: f64,
    threads: usize,
) -> Result<Vec<SampleResult<S>>> {
    let mut slots: Vec<Option<Result<SampleResult<S>>>> = Vec::new();
    slots.resize_with(indices.len(), || None);
    std::thread::scope(|scope| {
        let mut pending: Vec<(usize, &mut Option<Result<SampleResult<S>>>)> =
            slots.iter_mut().enumerate().collect();
        let mut handles = Vec::new();
        for worker in 0..threads {
            let assigned: Vec<(usize, &mut Option<Result<SampleResult<S>>>)> = {
                let mut mine = Vec::new();
                let mut keep = Vec::new();
                for entry in pending.drain(..) {
                    if entry.0 % threads == worker {
                        mine.push(entry);
                    } else {
                        keep.push(entry);
                    }
                }
                pending = keep;
                mine
            };
            let mut worker_net = net.clone();
            handles.push(scope.spawn(move || {
                for (pos, slot) in assigned {
                    let i = indices[pos];
                    *slot = Some(run_one_sample(
                        &mut worker_net,
                        &samples[i].image,
                        &targets[i],
                        inv_batch,
                    ));
                }
            }));
        }
        for handle in handles {
            handle.join().expect("training worker panicked");
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.expect("every batch slot filled"))
        .collect()
}
