//! Minimal differentiable convolutional network (forward plus manual
//! backward): a 3-stage encoder, a dilated-conv pyramid, multi-level fusion,
//! an optional vector-router block of orthogonal (1xn, nx1) kernel pairs,
//! and a 1-channel logistic head, trained with Adam.

pub mod adam;
pub mod checkpoint;
pub mod ops;
pub mod tensor;
pub mod train;

pub use adam::{adam_step, adam_update, AdamState};
pub use tensor::{Shape4, Tensor};
pub use train::{train, LogRow, Supervision, TrainConfig};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::GrayImage;
use crate::scalar::Scalar;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectionMode {
    /// All vector convolutions chained in a single branch.
    Series,
    /// One branch per orthogonal (1xn, nx1) pair.
    PairedParallel,
    /// Every vector convolution is its own branch.
    AllParallel,
}

impl ConnectionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConnectionMode::Series => "series",
            ConnectionMode::PairedParallel => "paired_parallel",
            ConnectionMode::AllParallel => "all_parallel",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "series" => Ok(ConnectionMode::Series),
            "paired_parallel" => Ok(ConnectionMode::PairedParallel),
            "all_parallel" => Ok(ConnectionMode::AllParallel),
            other => Err(Error::config(format!("unknown connection mode {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouterConfig {
    /// Odd lengths of the orthogonal vector kernels, one entry per pair.
    pub kernel_lengths: Vec<usize>,
    /// Channels per vector branch plus the trailing 1x1 residual branch
    /// (so len == kernel_lengths.len() + 1).
    pub branch_channels: Vec<usize>,
    pub mode: ConnectionMode,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            kernel_lengths: vec![5, 11],
            branch_channels: vec![32, 32, 32],
            mode: ConnectionMode::PairedParallel,
        }
    }
}

impl RouterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_lengths.is_empty() {
            return Err(Error::config("router: no kernel lengths"));
        }
        for &n in &self.kernel_lengths {
            if n % 2 == 0 || n < 3 {
                return Err(Error::config(format!(
                    "router: kernel length {n} must be odd and >= 3"
                )));
            }
        }
        if self.branch_channels.len() != self.kernel_lengths.len() + 1 {
            return Err(Error::config(format!(
                "router: expected {} branch channel entries (pairs + residual), got {}",
                self.kernel_lengths.len() + 1,
                self.branch_channels.len()
            )));
        }
        if self.branch_channels.iter().any(|&c| c == 0) {
            return Err(Error::config("router: zero-channel branch"));
        }
        Ok(())
    }
}

/// Output activation of the 1-channel head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Logistic,
    Identity,
}

impl Activation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Activation::Logistic => "logistic",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(Activation::Logistic),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::config(format!("unknown activation {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    pub input_channels: usize,
    pub stem_channels: usize,
    /// Encoder channels at strides 1, 2, 4.
    pub stage_channels: [usize; 3],
    pub aspp_rates: Vec<usize>,
    pub aspp_channels: usize,
    pub fusion_channels: usize,
    pub router: Option<RouterConfig>,
    pub final_activation: Activation,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_channels: 1,
            stem_channels: 16,
            stage_channels: [16, 32, 64],
            aspp_rates: vec![1, 2, 4, 8],
            aspp_channels: 64,
            fusion_channels: 32,
            router: Some(RouterConfig::default()),
            final_activation: Activation::Logistic,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0
            || self.stem_channels == 0
            || self.stage_channels.iter().any(|&c| c == 0)
            || self.aspp_channels == 0
            || self.fusion_channels == 0
        {
            return Err(Error::config("network: zero channel count"));
        }
        if self.aspp_rates.is_empty() {
            return Err(Error::config("network: empty aspp rates"));
        }
        let increasing = self
            .aspp_rates
            .windows(2)
            .all(|p| p[0] < p[1]);
        if !increasing || self.aspp_rates[0] == 0 {
            return Err(Error::config(
                "network: aspp rates must be strictly increasing positive",
            ));
        }
        if let Some(router) = &self.router {
            router.validate()?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Conv2d<S> {
    pub name: String,
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
    pub dilation: usize,
}

impl<S: Scalar> Conv2d<S> {
    fn new(
        name: &str,
        c_out: usize,
        c_in: usize,
        kh: usize,
        kw: usize,
        dilation: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut weight = Tensor::zeros(Shape4::new(c_out, c_in, kh, kw));
        let std = (2.0 / (c_in * kh * kw) as f64).sqrt();
        for v in weight.data_mut().iter_mut() {
            *v = S::from_f64c(std * standard_normal(rng));
        }
        Conv2d {
            name: name.to_string(),
            weight,
            bias: Tensor::zeros(Shape4::new(1, c_out, 1, 1)),
            dilation,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape().n
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        ops::conv2d(x, &self.weight, &self.bias, self.dilation)
    }

    pub fn backward(&mut self, x: &mut Tensor<S>, out: &Tensor<S>) {
        ops::conv2d_backward(x, &mut self.weight, &mut self.bias, out, self.dilation);
    }
}

/// Box-Muller sample from one uniform pair; only the cosine branch is used so
/// every parameter consumes exactly two RNG draws.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = ((rng.next_u64() >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
    let u2 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

// ---------------------------------------------------------------------------
// ASPP: parallel dilated 3x3 convs + relu, concatenated, fused by 1x1.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Aspp<S> {
    pub branches: Vec<Conv2d<S>>,
    pub fuse: Conv2d<S>,
    pub rates: Vec<usize>,
}

pub struct AsppCache<S> {
    branch_z: Vec<Tensor<S>>,
    branch_a: Vec<Tensor<S>>,
    cat: Tensor<S>,
    pub out: Tensor<S>,
}

impl<S: Scalar> Aspp<S> {
    fn new(
        name: &str,
        c_in: usize,
        channels: usize,
        rates: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let branches = rates
            .iter()
            .map(|&rate| {
                Conv2d::new(&format!("{name}.rate{rate}"), channels, c_in, 3, 3, rate, rng)
            })
            .collect();
        let fuse = Conv2d::new(
            &format!("{name}.fuse"),
            channels,
            channels * rates.len(),
            1,
            1,
            1,
            rng,
        );
        Aspp {
            branches,
            fuse,
            rates: rates.to_vec(),
        }
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<AsppCache<S>> {
        let shape = x.shape();
        let side = shape.h.min(shape.w);
        for &rate in &self.rates {
            // Receptive field of a dilated 3x3 must stay within twice the map side.
            if 2 * rate + 1 > 2 * side {
                return Err(Error::RateTooLarge {
                    rate,
                    height: shape.h,
                    width: shape.w,
                });
            }
        }
        let mut branch_z = Vec::with_capacity(self.branches.len());
        let mut branch_a = Vec::with_capacity(self.branches.len());
        for conv in &self.branches {
            let z = conv.forward(x)?;
            branch_a.push(ops::relu(&z));
            branch_z.push(z);
        }
        let cat = ops::concat(&branch_a.iter().collect::<Vec<_>>())?;
        let out = self.fuse.forward(&cat)?;
        Ok(AsppCache {
            branch_z,
            branch_a,
            cat,
            out,
        })
    }

    pub fn backward(&mut self, x: &mut Tensor<S>, cache: &mut AsppCache<S>) {
        self.fuse.backward(&mut cache.cat, &cache.out);
        {
            let mut parts: Vec<&mut Tensor<S>> = cache.branch_a.iter_mut().collect();
            ops::concat_backward(&mut parts, &cache.cat);
        }
        for ((conv, z), a) in self
            .branches
            .iter_mut()
            .zip(cache.branch_z.iter_mut())
            .zip(cache.branch_a.iter())
        {
            ops::relu_backward(z, a);
            conv.backward(x, z);
        }
    }
}

// ---------------------------------------------------------------------------
// Vector router: orthogonal (1xn, nx1) kernel pairs plus a 1x1 residual,
// fused by concatenation and 1x1 convolution. No activations inside, so an
// identity configuration exists by construction.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Router<S> {
    pub cfg: RouterConfig,
    pub vector_convs: Vec<Conv2d<S>>,
    pub residual: Conv2d<S>,
    pub fuse: Conv2d<S>,
}

pub struct RouterCache<S> {
    stages: Vec<Tensor<S>>,
    res: Tensor<S>,
    cat: Tensor<S>,
    pub out: Tensor<S>,
}

impl<S: Scalar> Router<S> {
    fn new(name: &str, c_in: usize, cfg: &RouterConfig, rng: &mut ChaCha8Rng) -> Self {
        let pairs = cfg.kernel_lengths.len();
        let res_channels = cfg.branch_channels[pairs];
        let mut vector_convs = Vec::new();
        match cfg.mode {
            ConnectionMode::PairedParallel => {
                for (k, &n) in cfg.kernel_lengths.iter().enumerate() {
                    let c = cfg.branch_channels[k];
                    vector_convs.push(Conv2d::new(
                        &format!("{name}.pair{k}.row"),
                        c,
                        c_in,
                        1,
                        n,
                        1,
                        rng,
                    ));
                    vector_convs.push(Conv2d::new(
                        &format!("{name}.pair{k}.col"),
                        c,
                        c,
                        n,
                        1,
                        1,
                        rng,
                    ));
                }
            }
            ConnectionMode::Series => {
                let mut prev = c_in;
                for (k, &n) in cfg.kernel_lengths.iter().enumerate() {
                    let c = cfg.branch_channels[k];
                    vector_convs.push(Conv2d::new(
                        &format!("{name}.chain{k}.row"),
                        c,
                        prev,
                        1,
                        n,
                        1,
                        rng,
                    ));
                    vector_convs.push(Conv2d::new(
                        &format!("{name}.chain{k}.col"),
                        c,
                        c,
                        n,
                        1,
                        1,
                        rng,
                    ));
                    prev = c;
                }
            }
            ConnectionMode::AllParallel => {
                for (k, &n) in cfg.kernel_lengths.iter().enumerate() {
                    let c = cfg.branch_channels[k];
                    vector_convs.push(Conv2d::new(
                        &format!("{name}.solo{k}.row"),
                        c,
                        c_in,
                        1,
                        n,
                        1,
                        rng,
                    ));
                    vector_convs.push(Conv2d::new(
                        &format!("{name}.solo{k}.col"),
                        c,
                        c_in,
                        n,
                        1,
                        1,
                        rng,
                    ));
                }
            }
        }
        let residual = Conv2d::new(&format!("{name}.residual"), res_channels, c_in, 1, 1, 1, rng);
        let cat_channels = match cfg.mode {
            ConnectionMode::PairedParallel => {
                cfg.branch_channels[..pairs].iter().sum::<usize>() + res_channels
            }
            ConnectionMode::Series => cfg.branch_channels[pairs - 1] + res_channels,
            ConnectionMode::AllParallel => {
                2 * cfg.branch_channels[..pairs].iter().sum::<usize>() + res_channels
            }
        };
        let fuse = Conv2d::new(&format!("{name}.fuse"), c_in, cat_channels, 1, 1, 1, rng);
        Router {
            cfg: cfg.clone(),
            vector_convs,
            residual,
            fuse,
        }
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<RouterCache<S>> {
        let mut stages = Vec::new();
        let mut branch_ends: Vec<usize> = Vec::new();
        match self.cfg.mode {
            ConnectionMode::PairedParallel | ConnectionMode::AllParallel => {
                for pair in self.vector_convs.chunks(2) {
                    match self.cfg.mode {
                        ConnectionMode::PairedParallel => {
                            let t1 = pair[0].forward(x)?;
                            let t2 = pair[1].forward(&t1)?;
                            stages.push(t1);
                            stages.push(t2);
                            branch_ends.push(stages.len() - 1);
                        }
                        _ => {
                            // All-parallel: both orientations read the input directly.
                            let t1 = pair[0].forward(x)?;
                            let t2 = pair[1].forward(x)?;
                            stages.push(t1);
                            branch_ends.push(stages.len() - 1);
                            stages.push(t2);
                            branch_ends.push(stages.len() - 1);
                        }
                    }
                }
            }
            ConnectionMode::Series => {
                for (i, conv) in self.vector_convs.iter().enumerate() {
                    let input = if i == 0 { x } else { &stages[i - 1] };
                    stages.push(conv.forward(input)?);
                }
                branch_ends.push(stages.len() - 1);
            }
        }
        let res = self.residual.forward(x)?;
        let mut cat_inputs: Vec<&Tensor<S>> = branch_ends.iter().map(|&i| &stages[i]).collect();
        cat_inputs.push(&res);
        let cat = ops::concat(&cat_inputs)?;
        let out = self.fuse.forward(&cat)?;
        Ok(RouterCache {
            stages,
            res,
            cat,
            out,
        })
    }

    pub fn backward(&mut self, x: &mut Tensor<S>, cache: &mut RouterCache<S>) {
        self.fuse.backward(&mut cache.cat, &cache.out);
        // Split the concat gradient back onto branch ends and the residual.
        match self.cfg.mode {
            ConnectionMode::PairedParallel => {
                let mut parts: Vec<&mut Tensor<S>> = Vec::new();
                for pair in cache.stages.chunks_mut(2) {
                    let (_, second) = pair.split_at_mut(1);
                    parts.push(&mut second[0]);
                }
                parts.push(&mut cache.res);
                ops::concat_backward(&mut parts, &cache.cat);
                for (conv_pair, stage_pair) in self
                    .vector_convs
                    .chunks_mut(2)
                    .zip(cache.stages.chunks_mut(2))
                {
                    let (first, second) = stage_pair.split_at_mut(1);
                    conv_pair[1].backward(&mut first[0], &second[0]);
                    conv_pair[0].backward(x, &first[0]);
                }
            }
            ConnectionMode::AllParallel => {
                let mut parts: Vec<&mut Tensor<S>> = cache.stages.iter_mut().collect();
                parts.push(&mut cache.res);
                ops::concat_backward(&mut parts, &cache.cat);
                for (conv, stage) in self.vector_convs.iter_mut().zip(cache.stages.iter_mut()) {
                    conv.backward(x, stage);
                }
            }
            ConnectionMode::Series => {
                {
                    let last = cache.stages.last_mut().expect("series chain non-empty");
                    let mut parts: Vec<&mut Tensor<S>> = vec![last, &mut cache.res];
                    ops::concat_backward(&mut parts, &cache.cat);
                }
                for i in (0..self.vector_convs.len()).rev() {
                    if i == 0 {
                        let (out_stage, _) = cache.stages.split_at_mut(1);
                        self.vector_convs[0].backward(x, &out_stage[0]);
                    } else {
                        let (before, after) = cache.stages.split_at_mut(i);
                        self.vector_convs[i].backward(&mut before[i - 1], &after[0]);
                    }
                }
            }
        }
        self.residual.backward(x, &cache.res);
    }

    /// Zeroes every vector branch and wires the residual and fuse convs as
    /// identities, so the block reproduces its input. Requires the residual
    /// branch to be at least as wide as the input.
    pub fn configure_identity(&mut self, c_in: usize) {
        for conv in self.vector_convs.iter_mut() {
            for v in conv.weight.data_mut().iter_mut() {
                *v = S::zero();
            }
            for v in conv.bias.data_mut().iter_mut() {
                *v = S::zero();
            }
        }
        let res_channels = self.residual.out_channels();
        assert!(res_channels >= c_in, "residual too narrow for identity");
        for v in self.residual.weight.data_mut().iter_mut() {
            *v = S::zero();
        }
        for v in self.residual.bias.data_mut().iter_mut() {
            *v = S::zero();
        }
        for o in 0..c_in {
            let idx = (o * c_in + o) * 1;
            self.residual.weight.data_mut()[idx] = S::one();
        }
        let cat_channels = self.fuse.weight.shape().c;
        let res_offset = cat_channels - res_channels;
        for v in self.fuse.weight.data_mut().iter_mut() {
            *v = S::zero();
        }
        for v in self.fuse.bias.data_mut().iter_mut() {
            *v = S::zero();
        }
        for o in 0..c_in {
            self.fuse.weight.data_mut()[o * cat_channels + res_offset + o] = S::one();
        }
    }

    /// Parameter count of all weights and biases in the block.
    pub fn parameter_count(&self) -> usize {
        let mut total = 0;
        for conv in self
            .vector_convs
            .iter()
            .chain([&self.residual, &self.fuse])
        {
            total += conv.weight.len() + conv.bias.len();
        }
        total
    }
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Network<S> {
    pub cfg: NetworkConfig,
    pub stem: Conv2d<S>,
    pub stage1: Conv2d<S>,
    pub stage2: Conv2d<S>,
    pub stage3: Conv2d<S>,
    pub aspp: Aspp<S>,
    pub fusion: Conv2d<S>,
    pub router: Option<Router<S>>,
    pub head: Conv2d<S>,
}

pub struct ForwardCache<S> {
    pub x: Tensor<S>,
    stem_z: Tensor<S>,
    stem_a: Tensor<S>,
    s1_z: Tensor<S>,
    s1_a: Tensor<S>,
    p1: Tensor<S>,
    p1_arg: Vec<u32>,
    s2_z: Tensor<S>,
    s2_a: Tensor<S>,
    p2: Tensor<S>,
    p2_arg: Vec<u32>,
    s3_z: Tensor<S>,
    s3_a: Tensor<S>,
    aspp: AsppCache<S>,
    up2: Tensor<S>,
    up3: Tensor<S>,
    upa: Tensor<S>,
    cat: Tensor<S>,
    fuse_z: Tensor<S>,
    fuse_a: Tensor<S>,
    router: Option<RouterCache<S>>,
    head_z: Tensor<S>,
    /// Logistic response in (0, 1); set `y.grad_mut()` before `backward`.
    pub y: Tensor<S>,
}

/// Builds a network with fan-in-scaled normal weights and zero biases,
/// deterministically from the seed.
pub fn build_network<S: Scalar>(cfg: &NetworkConfig, seed: u64) -> Result<Network<S>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [c1, c2, c3] = cfg.stage_channels;
    let stem = Conv2d::new("stem", cfg.stem_channels, cfg.input_channels, 3, 3, 1, &mut rng);
    let stage1 = Conv2d::new("stage1", c1, cfg.stem_channels, 3, 3, 1, &mut rng);
    let stage2 = Conv2d::new("stage2", c2, c1, 3, 3, 1, &mut rng);
    let stage3 = Conv2d::new("stage3", c3, c2, 3, 3, 1, &mut rng);
    let aspp = Aspp::new("aspp", c3, cfg.aspp_channels, &cfg.aspp_rates, &mut rng);
    let cat_channels = c1 + c2 + c3 + cfg.aspp_channels;
    let fusion = Conv2d::new("fusion", cfg.fusion_channels, cat_channels, 1, 1, 1, &mut rng);
    let router = cfg
        .router
        .as_ref()
        .map(|rc| Router::new("router", cfg.fusion_channels, rc, &mut rng));
    let head = Conv2d::new("head", 1, cfg.fusion_channels, 1, 1, 1, &mut rng);
    Ok(Network {
        cfg: cfg.clone(),
        stem,
        stage1,
        stage2,
        stage3,
        aspp,
        fusion,
        router,
        head,
    })
}

impl<S: Scalar> Network<S> {
    /// All parameter tensors in layer-name-sorted order (deterministic for
    /// the optimizer and the checkpoint format).
    pub fn params(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out: Vec<(String, &Tensor<S>)> = Vec::new();
        for conv in self.conv_layers() {
            out.push((format!("{}.weight", conv.name), &conv.weight));
            out.push((format!("{}.bias", conv.name), &conv.bias));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor<S>)> {
        let mut out: Vec<(String, &mut Tensor<S>)> = Vec::new();
        for conv in self.conv_layers_mut() {
            let name = conv.name.clone();
            let Conv2d { weight, bias, .. } = conv;
            out.push((format!("{name}.weight"), weight));
            out.push((format!("{name}.bias"), bias));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    fn conv_layers(&self) -> Vec<&Conv2d<S>> {
        let mut layers = vec![&self.stem, &self.stage1, &self.stage2, &self.stage3];
        layers.extend(self.aspp.branches.iter());
        layers.push(&self.aspp.fuse);
        layers.push(&self.fusion);
        if let Some(router) = &self.router {
            layers.extend(router.vector_convs.iter());
            layers.push(&router.residual);
            layers.push(&router.fuse);
        }
        layers.push(&self.head);
        layers
    }

    fn conv_layers_mut(&mut self) -> Vec<&mut Conv2d<S>> {
        let mut layers = vec![
            &mut self.stem,
            &mut self.stage1,
            &mut self.stage2,
            &mut self.stage3,
        ];
        layers.extend(self.aspp.branches.iter_mut());
        layers.push(&mut self.aspp.fuse);
        layers.push(&mut self.fusion);
        if let Some(router) = &mut self.router {
            layers.extend(router.vector_convs.iter_mut());
            layers.push(&mut router.residual);
            layers.push(&mut router.fuse);
        }
        layers.push(&mut self.head);
        layers
    }

    pub fn zero_grads(&mut self) {
        for conv in self.conv_layers_mut() {
            conv.weight.zero_grad();
            conv.bias.zero_grad();
        }
    }

    /// Full forward pass; input spatial dims must be divisible by 4.
    pub fn forward(&self, x: Tensor<S>) -> Result<ForwardCache<S>> {
        let shape = x.shape();
        if shape.h % 4 != 0 || shape.w % 4 != 0 {
            return Err(Error::shape(format!(
                "input {}x{} not divisible by 4",
                shape.h, shape.w
            )));
        }
        let stem_z = self.stem.forward(&x)?;
        let stem_a = ops::relu(&stem_z);
        let s1_z = self.stage1.forward(&stem_a)?;
        let s1_a = ops::relu(&s1_z);
        let (p1, p1_arg) = ops::maxpool2(&s1_a)?;
        let s2_z = self.stage2.forward(&p1)?;
        let s2_a = ops::relu(&s2_z);
        let (p2, p2_arg) = ops::maxpool2(&s2_a)?;
        let s3_z = self.stage3.forward(&p2)?;
        let s3_a = ops::relu(&s3_z);
        let aspp = self.aspp.forward(&s3_a)?;
        let up2 = ops::bilinear_upsample(&s2_a, 2)?;
        let up3 = ops::bilinear_upsample(&s3_a, 4)?;
        let upa = ops::bilinear_upsample(&aspp.out, 4)?;
        let cat = ops::concat(&[&s1_a, &up2, &up3, &upa])?;
        let fuse_z = self.fusion.forward(&cat)?;
        let fuse_a = ops::relu(&fuse_z);
        let router = match &self.router {
            Some(r) => Some(r.forward(&fuse_a)?),
            None => None,
        };
        let head_in = router.as_ref().map(|r| &r.out).unwrap_or(&fuse_a);
        let head_z = self.head.forward(head_in)?;
        let y = match self.cfg.final_activation {
            Activation::Logistic => ops::logistic(&head_z),
            Activation::Identity => Tensor::from_data(head_z.shape(), head_z.data().to_vec()),
        };
        y.debug_assert_finite();
        Ok(ForwardCache {
            x,
            stem_z,
            stem_a,
            s1_z,
            s1_a,
            p1,
            p1_arg,
            s2_z,
            s2_a,
            p2,
            p2_arg,
            s3_z,
            s3_a,
            aspp,
            up2,
            up3,
            upa,
            cat,
            fuse_z,
            fuse_a,
            router,
            head_z,
            y,
        })
    }

    /// Backpropagates from `cache.y.grad` into every parameter gradient and
    /// `cache.x.grad`. Call `zero_grads` first when accumulation across
    /// calls is not wanted.
    pub fn backward(&mut self, cache: &mut ForwardCache<S>) {
        match self.cfg.final_activation {
            Activation::Logistic => ops::logistic_backward(&mut cache.head_z, &cache.y),
            Activation::Identity => {
                let (_, grad) = cache.head_z.data_and_grad_mut();
                for (g, &gy) in grad.iter_mut().zip(cache.y.grad()) {
                    *g = *g + gy;
                }
            }
        }
        match (&mut self.router, &mut cache.router) {
            (Some(router), Some(rc)) => {
                self.head.backward(&mut rc.out, &cache.head_z);
                router.backward(&mut cache.fuse_a, rc);
            }
            _ => {
                self.head.backward(&mut cache.fuse_a, &cache.head_z);
            }
        }
        ops::relu_backward(&mut cache.fuse_z, &cache.fuse_a);
        self.fusion.backward(&mut cache.cat, &cache.fuse_z);
        {
            let mut parts = vec![
                &mut cache.s1_a,
                &mut cache.up2,
                &mut cache.up3,
                &mut cache.upa,
            ];
            ops::concat_backward(&mut parts, &cache.cat);
        }
        ops::bilinear_upsample_backward(&mut cache.aspp.out, &cache.upa, 4);
        ops::bilinear_upsample_backward(&mut cache.s3_a, &cache.up3, 4);
        ops::bilinear_upsample_backward(&mut cache.s2_a, &cache.up2, 2);
        {
            // Split borrow: aspp backward reads its own cache and writes s3_a.
            let ForwardCache { s3_a, aspp, .. } = cache;
            self.aspp.backward(s3_a, aspp);
        }
        ops::relu_backward(&mut cache.s3_z, &cache.s3_a);
        self.stage3.backward(&mut cache.p2, &cache.s3_z);
        ops::maxpool2_backward(&mut cache.s2_a, &cache.p2, &cache.p2_arg);
        ops::relu_backward(&mut cache.s2_z, &cache.s2_a);
        self.stage2.backward(&mut cache.p1, &cache.s2_z);
        ops::maxpool2_backward(&mut cache.s1_a, &cache.p1, &cache.p1_arg);
        ops::relu_backward(&mut cache.s1_z, &cache.s1_a);
        self.stage1.backward(&mut cache.stem_a, &cache.s1_z);
        ops::relu_backward(&mut cache.stem_z, &cache.stem_a);
        self.stem.backward(&mut cache.x, &cache.stem_z);
    }

    /// Runs the network on one grayscale image, reflect-padding to a multiple
    /// of 4 and cropping back. The response lies in (0, 1).
    pub fn infer(&self, img: &GrayImage<S>) -> Result<GrayImage<S>> {
        let (w, h) = img.dims();
        let ph = (4 - h % 4) % 4;
        let pw = (4 - w % 4) % 4;
        let (fh, fw) = (h + ph, w + pw);
        let mut data = vec![S::zero(); fh * fw];
        for row in 0..fh {
            let sr = crate::morphology::reflect101(row as isize, h);
            for col in 0..fw {
                let sc = crate::morphology::reflect101(col as isize, w);
                data[row * fw + col] = img.get(sr, sc);
            }
        }
        let x = Tensor::from_data(Shape4::new(1, self.cfg.input_channels, fh, fw), data);
        let cache = self.forward(x)?;
        let mut out = GrayImage::zeros(w, h);
        // An identity head can leave the [0, 1] response range; clamp so the
        // downstream threshold sweep always applies.
        let clamp = self.cfg.final_activation == Activation::Identity;
        for row in 0..h {
            for col in 0..w {
                let mut v = cache.y.data()[row * fw + col];
                if clamp {
                    v = v.max(S::zero()).min(S::one());
                }
                out.set(row, col, v);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> NetworkConfig {
        NetworkConfig {
            input_channels: 1,
            stem_channels: 4,
            stage_channels: [4, 6, 8],
            aspp_rates: vec![1, 2],
            aspp_channels: 8,
            fusion_channels: 6,
            router: Some(RouterConfig {
                kernel_lengths: vec![3, 5],
                branch_channels: vec![4, 4, 6],
                mode: ConnectionMode::PairedParallel,
            }),
            final_activation: Default::default(),
        }
    }

    #[test]
    fn config_validation_catches_bad_rates() {
        let mut cfg = tiny_cfg();
        cfg.aspp_rates = vec![2, 2];
        assert!(cfg.validate().is_err());
        cfg.aspp_rates = vec![0, 1];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn router_config_validation() {
        let mut rc = RouterConfig::default();
        rc.kernel_lengths = vec![4];
        assert!(rc.validate().is_err());
        let mut rc = RouterConfig::default();
        rc.branch_channels = vec![8, 8];
        assert!(rc.validate().is_err());
    }

    #[test]
    fn forward_shape_and_range() {
        let net: Network<f32> = build_network(&tiny_cfg(), 7).unwrap();
        let x = Tensor::zeros(Shape4::new(1, 1, 16, 16));
        let cache = net.forward(x).unwrap();
        let s = cache.y.shape();
        assert_eq!((s.n, s.c, s.h, s.w), (1, 1, 16, 16));
        assert!(cache.y.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn same_seed_same_parameters() {
        let a: Network<f32> = build_network(&tiny_cfg(), 42).unwrap();
        let b: Network<f32> = build_network(&tiny_cfg(), 42).unwrap();
        for ((na, ta), (nb, tb)) in a.params().iter().zip(b.params().iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta.data(), tb.data());
        }
        let c: Network<f32> = build_network(&tiny_cfg(), 43).unwrap();
        let differs = a
            .params()
            .iter()
            .zip(c.params())
            .any(|((_, ta), (_, tc))| ta.data() != tc.data());
        assert!(differs);
    }

    #[test]
    fn zero_head_weights_give_half_response() {
        let mut net: Network<f32> = build_network(&tiny_cfg(), 3).unwrap();
        for v in net.head.weight.data_mut().iter_mut() {
            *v = 0.0;
        }
        for v in net.head.bias.data_mut().iter_mut() {
            *v = 0.0;
        }
        let img = GrayImage::from_vec(12, 12, vec![0.3; 144]).unwrap();
        let resp = net.infer(&img).unwrap();
        assert!(resp.as_slice().iter().all(|&v| (v - 0.5).abs() < 1e-7));
    }

    #[test]
    fn infer_preserves_non_multiple_of_four_dims() {
        let net: Network<f32> = build_network(&tiny_cfg(), 3).unwrap();
        for (w, h) in [(13, 9), (16, 10)] {
            let img = GrayImage::zeros(w, h);
            let resp = net.infer(&img).unwrap();
            assert_eq!(resp.dims(), (w, h));
        }
    }

    #[test]
    fn aspp_full_scale_rates_preserve_shape() {
        // Full-scale dilation rates on a 64x64 map: same-padding keeps the
        // spatial size; channel count equals the configured width.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let aspp: Aspp<f32> = Aspp::new("aspp", 3, 8, &[2, 5, 9, 16], &mut rng);
        let x = Tensor::zeros(Shape4::new(2, 3, 64, 64));
        let cache = aspp.forward(&x).unwrap();
        let s = cache.out.shape();
        assert_eq!((s.n, s.c, s.h, s.w), (2, 8, 64, 64));
        // Zero input and zero biases give a zero output.
        assert!(cache.out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn aspp_rate_guard_fires() {
        let mut cfg = tiny_cfg();
        cfg.aspp_rates = vec![1, 16];
        let net: Network<f32> = build_network(&cfg, 1).unwrap();
        // 16x16 input -> 4x4 map at stride 4; rate 16 has RF 33 > 8.
        let x = Tensor::zeros(Shape4::new(1, 1, 16, 16));
        assert!(matches!(
            net.forward(x),
            Err(Error::RateTooLarge { rate: 16, .. })
        ));
    }
}
