//! Declarative network description, shape validation and shipped presets.

use std::fmt;
use std::str::FromStr;

use crate::error::{config_err, Error, Result};
use crate::kv::{KvDoc, Section};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    LReLU,
    LogSg,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::LReLU => "lrelu",
            Activation::LogSg => "logsg",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lrelu" => Ok(Activation::LReLU),
            "logsg" => Ok(Activation::LogSg),
            other => Err(config_err!("unknown activation `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub out_channels: usize,
    pub kernel_size: usize,
    pub dilation: usize,
    pub activation: Activation,
    pub has_bn: bool,
    /// Gaussian noise after the activation, training mode only.
    pub has_gn: bool,
    pub pool_after: usize,
    pub unpool_before: usize,
}

impl LayerSpec {
    pub fn hidden(out_channels: usize, kernel_size: usize, dilation: usize) -> Self {
        LayerSpec {
            out_channels,
            kernel_size,
            dilation,
            activation: Activation::LReLU,
            has_bn: true,
            has_gn: true,
            pool_after: 1,
            unpool_before: 1,
        }
    }
}

/// Which of the five parts a layer belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Part {
    Input,
    Encoder(usize),
    Representation,
    Decoder(usize),
    Output,
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Part::Input => f.write_str("input"),
            Part::Encoder(b) => write!(f, "encoder.{b}"),
            Part::Representation => f.write_str("repr"),
            Part::Decoder(b) => write!(f, "decoder.{b}"),
            Part::Output => f.write_str("output"),
        }
    }
}

impl FromStr for Part {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let block = |v: &str| v.parse::<usize>().map_err(|_| config_err!("bad part `{s}`"));
        match s {
            "input" => Ok(Part::Input),
            "repr" => Ok(Part::Representation),
            "output" => Ok(Part::Output),
            _ => match s.split_once('.') {
                Some(("encoder", b)) => Ok(Part::Encoder(block(b)?)),
                Some(("decoder", b)) => Ok(Part::Decoder(block(b)?)),
                _ => Err(config_err!("bad part `{s}`")),
            },
        }
    }
}

/// The whole network.
///
/// Layers are numbered in a flat order: input layer, encoder blocks,
/// representation layers, decoder blocks, output layer. Skip links
/// concatenate the *output* of a source layer (before any pooling that
/// follows it) onto the input of a target layer (after any unpooling that
/// precedes it). Residual links add a source output onto a target output.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub window_len: usize,
    pub input_layer: LayerSpec,
    pub encoder_blocks: Vec<Vec<LayerSpec>>,
    pub representation_layers: Vec<LayerSpec>,
    pub decoder_blocks: Vec<Vec<LayerSpec>>,
    pub output_layer: LayerSpec,
    /// `(encoder block, decoder block)`: last layer of the encoder block
    /// feeds the first layer of the decoder block.
    pub outer_skips: Vec<(usize, usize)>,
    /// `(from, to)` indices within the representation part.
    pub inner_skips: Vec<(usize, usize)>,
    /// `(from, to)` flat layer indices.
    pub residuals: Vec<(usize, usize)>,
    pub leaky_alpha: f64,
    pub noise_sigma: f64,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
}

/// Resolved wiring of one layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerPlan {
    pub part: Part,
    pub spec: LayerSpec,
    /// Channels arriving from the previous layer (or the input signal).
    pub main_channels: usize,
    /// Flat indices of concatenated sources, in concatenation order.
    pub skips: Vec<usize>,
    pub residuals: Vec<usize>,
    /// Convolution input channels: main plus all skip sources.
    pub in_channels: usize,
    /// Time length at which the layer computes.
    pub len: usize,
}

impl LayerPlan {
    pub fn parameter_count(&self) -> usize {
        let s = &self.spec;
        let conv = s.out_channels * self.in_channels * s.kernel_size + s.out_channels;
        conv + if s.has_bn { 2 * s.out_channels } else { 0 }
    }
}

type Links = Vec<(usize, usize)>;

impl ModelConfig {
    pub fn layers(&self) -> Vec<(Part, &LayerSpec)> {
        let mut out = vec![(Part::Input, &self.input_layer)];
        for (b, block) in self.encoder_blocks.iter().enumerate() {
            out.extend(block.iter().map(|l| (Part::Encoder(b), l)));
        }
        out.extend(self.representation_layers.iter().map(|l| (Part::Representation, l)));
        for (b, block) in self.decoder_blocks.iter().enumerate() {
            out.extend(block.iter().map(|l| (Part::Decoder(b), l)));
        }
        out.push((Part::Output, &self.output_layer));
        out
    }

    pub fn layer_count(&self) -> usize {
        self.layers().len()
    }

    fn encoder_start(&self, block: usize) -> usize {
        1 + self.encoder_blocks[..block].iter().map(Vec::len).sum::<usize>()
    }

    fn representation_start(&self) -> usize {
        1 + self.encoder_blocks.iter().map(Vec::len).sum::<usize>()
    }

    fn decoder_start(&self, block: usize) -> usize {
        self.representation_start()
            + self.representation_layers.len()
            + self.decoder_blocks[..block].iter().map(Vec::len).sum::<usize>()
    }

    /// All links as flat `(from, to)` pairs: skips first, then residuals.
    fn flat_links(&self) -> Result<(Links, Links)> {
        let mut skips = Vec::new();
        for &(e, d) in &self.outer_skips {
            let (Some(eb), Some(db)) = (self.encoder_blocks.get(e), self.decoder_blocks.get(d)) else {
                return Err(config_err!("outer skip {e}->{d}: no such block"));
            };
            if eb.is_empty() || db.is_empty() {
                return Err(config_err!("outer skip {e}->{d}: empty block"));
            }
            skips.push((self.encoder_start(e) + eb.len() - 1, self.decoder_start(d)));
        }
        let r0 = self.representation_start();
        for &(a, b) in &self.inner_skips {
            if a >= self.representation_layers.len() || b >= self.representation_layers.len() {
                return Err(config_err!("inner skip {a}->{b}: no such representation layer"));
            }
            skips.push((r0 + a, r0 + b));
        }
        Ok((skips, self.residuals.clone()))
    }

    /// Propagates shapes through the graph and resolves every link.
    pub fn plan(&self) -> Result<Vec<LayerPlan>> {
        let layers = self.layers();
        let n = layers.len();
        if self.window_len == 0 {
            return Err(config_err!("window length must be positive"));
        }
        if !(0.0..=1.0).contains(&self.leaky_alpha) {
            return Err(config_err!("leaky_alpha must lie in [0, 1]"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(config_err!("noise_sigma must be finite and >= 0"));
        }
        if !(self.bn_epsilon > 0.0 && (0.0..1.0).contains(&self.bn_momentum)) {
            return Err(config_err!("need bn_epsilon > 0 and bn_momentum in [0, 1)"));
        }
        let out = &self.output_layer;
        if out.out_channels != 1 || out.activation != Activation::LogSg || out.pool_after != 1 {
            return Err(config_err!(
                "output layer must have 1 channel, LogSg activation and no pooling"
            ));
        }
        if self.input_layer.activation != Activation::LogSg {
            return Err(config_err!("the first hidden layer must use LogSg activation"));
        }
        let (skips, residuals) = self.flat_links()?;
        for &(a, b) in skips.iter().chain(&residuals) {
            if a >= b || b >= n {
                return Err(config_err!(
                    "link {a}->{b}: links must run forward between existing layers (0..{n})"
                ));
            }
        }

        let mut plans: Vec<LayerPlan> = Vec::with_capacity(n);
        let mut len = self.window_len;
        let mut channels = 1;
        for (i, (part, spec)) in layers.into_iter().enumerate() {
            let at = |msg: String| config_err!("layer {i} ({part}): {msg}");
            if spec.out_channels == 0 || spec.kernel_size % 2 == 0 || spec.dilation == 0 {
                return Err(at("needs channels >= 1, an odd kernel and dilation >= 1".into()));
            }
            if spec.pool_after == 0 || spec.unpool_before == 0 {
                return Err(at("pool factors must be >= 1".into()));
            }
            if spec.pool_after > 1 && spec.unpool_before > 1 {
                return Err(at("cannot both pool and unpool".into()));
            }
            len *= spec.unpool_before;
            let mut in_channels = channels;
            let mut my_skips = Vec::new();
            for &(a, _) in skips.iter().filter(|&&(_, b)| b == i) {
                let src: &LayerPlan = &plans[a];
                if src.len != len {
                    return Err(at(format!(
                        "skip from layer {a} has length {} but this layer runs at {len}",
                        src.len
                    )));
                }
                in_channels += src.spec.out_channels;
                my_skips.push(a);
            }
            let mut my_res = Vec::new();
            for &(a, _) in residuals.iter().filter(|&&(_, b)| b == i) {
                let src: &LayerPlan = &plans[a];
                if src.len != len || src.spec.out_channels != spec.out_channels {
                    return Err(at(format!(
                        "residual from layer {a} has {}x{} but this layer outputs {}x{len}",
                        src.spec.out_channels, src.len, spec.out_channels
                    )));
                }
                my_res.push(a);
            }
            plans.push(LayerPlan {
                part,
                spec: spec.clone(),
                main_channels: channels,
                skips: my_skips,
                residuals: my_res,
                in_channels,
                len,
            });
            if spec.pool_after > 1 {
                if !len.is_multiple_of(spec.pool_after) {
                    return Err(at(format!("length {len} is not divisible by pool factor {}", spec.pool_after)));
                }
                len /= spec.pool_after;
            }
            channels = spec.out_channels;
        }
        if len != self.window_len {
            return Err(config_err!(
                "network output length {len} differs from window length {}",
                self.window_len
            ));
        }
        Ok(plans)
    }

    /// Trainable parameters: kernels, biases, and batch-norm scale and shift.
    pub fn parameter_count(&self) -> Result<usize> {
        Ok(self.plan()?.iter().map(LayerPlan::parameter_count).sum())
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        let pairs = |v: &[(usize, usize)]| v.iter().map(|(a, b)| format!("{a}:{b}")).collect::<Vec<_>>().join(", ");
        doc.section_mut("model")
            .set("window_len", self.window_len)
            .set("outer_skips", pairs(&self.outer_skips))
            .set("inner_skips", pairs(&self.inner_skips))
            .set("residuals", pairs(&self.residuals))
            .set("leaky_alpha", self.leaky_alpha)
            .set("noise_sigma", self.noise_sigma)
            .set("bn_epsilon", self.bn_epsilon)
            .set("bn_momentum", self.bn_momentum);
        for (i, (part, l)) in self.layers().into_iter().enumerate() {
            doc.section_mut(&format!("layer.{i}"))
                .set("part", part)
                .set("out_channels", l.out_channels)
                .set("kernel_size", l.kernel_size)
                .set("dilation", l.dilation)
                .set("activation", l.activation)
                .set("bn", l.has_bn)
                .set("gn", l.has_gn)
                .set("pool_after", l.pool_after)
                .set("unpool_before", l.unpool_before);
        }
        doc
    }

    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        let m = doc
            .section("model")
            .ok_or_else(|| config_err!("missing [model] section"))?;
        m.check_keys(&[
            "window_len",
            "outer_skips",
            "inner_skips",
            "residuals",
            "leaky_alpha",
            "noise_sigma",
            "bn_epsilon",
            "bn_momentum",
        ])?;
        let mut input = None;
        let mut output = None;
        let mut encoder: Vec<Vec<LayerSpec>> = Vec::new();
        let mut repr = Vec::new();
        let mut decoder: Vec<Vec<LayerSpec>> = Vec::new();
        let mut stage = 0;
        for i in 0.. {
            let Some(s) = doc.section(&format!("layer.{i}")) else { break };
            let part: Part = s.require("part")?;
            let spec = layer_from(s)?;
            // parts must appear in order: input, encoder, repr, decoder, output
            let rank = match part {
                Part::Input => 0,
                Part::Encoder(_) => 1,
                Part::Representation => 2,
                Part::Decoder(_) => 3,
                Part::Output => 4,
            };
            if rank < stage || (rank == 0 && input.is_some()) || output.is_some() {
                return Err(config_err!("[layer.{i}]: part `{part}` out of order"));
            }
            stage = rank;
            let push_block = |blocks: &mut Vec<Vec<LayerSpec>>, b: usize| -> Result<()> {
                if b == blocks.len() {
                    blocks.push(Vec::new());
                } else if b + 1 != blocks.len() {
                    return Err(config_err!("[layer.{i}]: block {b} out of order"));
                }
                blocks[b].push(spec.clone());
                Ok(())
            };
            match part {
                Part::Input => input = Some(spec),
                Part::Encoder(b) => push_block(&mut encoder, b)?,
                Part::Representation => repr.push(spec),
                Part::Decoder(b) => push_block(&mut decoder, b)?,
                Part::Output => output = Some(spec),
            }
        }
        if doc
            .sections()
            .filter(|s| s.name().starts_with("layer."))
            .count()
            != 2 + encoder.iter().map(Vec::len).sum::<usize>() + repr.len() + decoder.iter().map(Vec::len).sum::<usize>()
        {
            return Err(config_err!("layer sections must be numbered consecutively from 0"));
        }
        let cfg = ModelConfig {
            window_len: m.require("window_len")?,
            input_layer: input.ok_or_else(|| config_err!("missing input layer"))?,
            encoder_blocks: encoder,
            representation_layers: repr,
            decoder_blocks: decoder,
            output_layer: output.ok_or_else(|| config_err!("missing output layer"))?,
            outer_skips: parse_pairs(m, "outer_skips")?,
            inner_skips: parse_pairs(m, "inner_skips")?,
            residuals: parse_pairs(m, "residuals")?,
            leaky_alpha: m.require("leaky_alpha")?,
            noise_sigma: m.require("noise_sigma")?,
            bn_epsilon: m.require("bn_epsilon")?,
            bn_momentum: m.require("bn_momentum")?,
        };
        cfg.plan()?;
        Ok(cfg)
    }

    /// Looks up a shipped preset by name: `desk`, `paper` or `tiny`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(PresetShape::desk().build()),
            "paper" => Ok(PresetShape::paper().build()),
            "tiny" => Ok(PresetShape::tiny().build()),
            other => Err(config_err!("unknown preset `{other}` (expected desk, paper or tiny)")),
        }
    }
}

fn layer_from(s: &Section) -> Result<LayerSpec> {
    s.check_keys(&[
        "part",
        "out_channels",
        "kernel_size",
        "dilation",
        "activation",
        "bn",
        "gn",
        "pool_after",
        "unpool_before",
    ])?;
    Ok(LayerSpec {
        out_channels: s.require("out_channels")?,
        kernel_size: s.require("kernel_size")?,
        dilation: s.get_or("dilation", 1)?,
        activation: s.require("activation")?,
        has_bn: s.get_or("bn", true)?,
        has_gn: s.get_or("gn", false)?,
        pool_after: s.get_or("pool_after", 1)?,
        unpool_before: s.get_or("unpool_before", 1)?,
    })
}

fn parse_pairs(s: &Section, key: &str) -> Result<Vec<(usize, usize)>> {
    let raw = s.get(key).unwrap_or("");
    raw.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let bad = || config_err!("[{}] {key}: bad link `{p}`, expected from:to", s.name());
            let (a, b) = p.split_once(':').ok_or_else(bad)?;
            Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}

/// Parameters of the regular encoder–decoder family the presets come from.
///
/// Encoder block `b` has `layers_per_block` layers of width
/// `base_width · growth^b`, and its last layer pools by `pools[b]`. The
/// decoder mirrors it; each decoder block starts by unpooling and receives an
/// outer skip from the matching encoder block. Every block carries one
/// residual link from its first to its last layer. Dilations cycle through
/// 1, 2, 4, 8 along the encoder and are mirrored in the decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct PresetShape {
    pub window_len: usize,
    pub layers_per_block: usize,
    pub base_width: usize,
    pub growth: usize,
    pub pools: Vec<usize>,
    pub repr_layers: usize,
    pub inner_skips: Vec<(usize, usize)>,
    pub kernel_size: usize,
}

const DILATIONS: [usize; 4] = [1, 2, 4, 8];

impl PresetShape {
    pub fn desk() -> Self {
        PresetShape {
            window_len: 512,
            layers_per_block: 2,
            base_width: 16,
            growth: 2,
            pools: vec![2; 4],
            repr_layers: 3,
            inner_skips: vec![(0, 2)],
            kernel_size: 3,
        }
    }

    /// 46 layers with roughly 41M parameters on a three-hour window at 1 Hz.
    pub fn paper() -> Self {
        PresetShape {
            window_len: 10_800,
            layers_per_block: 4,
            base_width: 56,
            growth: 2,
            pools: vec![2, 2, 3, 3, 5],
            repr_layers: 4,
            inner_skips: vec![(0, 2), (1, 3)],
            kernel_size: 3,
        }
    }

    /// Smallest config exercising every connection kind; for gradient checks.
    pub fn tiny() -> Self {
        PresetShape {
            window_len: 32,
            layers_per_block: 2,
            base_width: 4,
            growth: 1,
            pools: vec![2, 2],
            repr_layers: 3,
            inner_skips: vec![(0, 2)],
            kernel_size: 3,
        }
    }

    pub fn build(&self) -> ModelConfig {
        let blocks = self.pools.len();
        let k = self.kernel_size;
        let width = |b: usize| self.base_width * self.growth.pow(b as u32);
        let mut input_layer = LayerSpec::hidden(self.base_width, k, 1);
        input_layer.activation = Activation::LogSg;
        input_layer.has_gn = false;

        let mut dil = Vec::new();
        let mut encoder_blocks = Vec::new();
        for (b, &pool) in self.pools.iter().enumerate() {
            let mut block = Vec::new();
            for l in 0..self.layers_per_block {
                let d = DILATIONS[(b * self.layers_per_block + l) % DILATIONS.len()];
                dil.push(d);
                let mut s = LayerSpec::hidden(width(b), k, d);
                if l + 1 == self.layers_per_block {
                    s.pool_after = pool;
                }
                block.push(s);
            }
            encoder_blocks.push(block);
        }
        let repr_width = width(blocks - 1);
        let representation_layers = (0..self.repr_layers)
            .map(|i| LayerSpec::hidden(repr_width, k, DILATIONS[i % DILATIONS.len()]))
            .collect();
        let mut decoder_blocks = Vec::new();
        for d in 0..blocks {
            let e = blocks - 1 - d;
            let block = (0..self.layers_per_block)
                .map(|l| {
                    let dl = dil[e * self.layers_per_block + (self.layers_per_block - 1 - l)];
                    let mut s = LayerSpec::hidden(width(e), k, dl);
                    if l == 0 {
                        s.unpool_before = self.pools[e];
                    }
                    s
                })
                .collect();
            decoder_blocks.push(block);
        }
        let output_layer = LayerSpec {
            out_channels: 1,
            kernel_size: k,
            dilation: 1,
            activation: Activation::LogSg,
            has_bn: false,
            has_gn: false,
            pool_after: 1,
            unpool_before: 1,
        };

        let mut cfg = ModelConfig {
            window_len: self.window_len,
            input_layer,
            encoder_blocks,
            representation_layers,
            decoder_blocks,
            output_layer,
            outer_skips: (0..blocks).map(|e| (e, blocks - 1 - e)).collect(),
            inner_skips: self.inner_skips.clone(),
            residuals: Vec::new(),
            leaky_alpha: 0.01,
            noise_sigma: 0.05,
            bn_epsilon: 1e-5,
            bn_momentum: 0.9,
        };
        if self.layers_per_block > 1 {
            for b in 0..blocks {
                let s = cfg.encoder_start(b);
                cfg.residuals.push((s, s + self.layers_per_block - 1));
            }
            for b in 0..blocks {
                let s = cfg.decoder_start(b);
                cfg.residuals.push((s, s + self.layers_per_block - 1));
            }
        }
        cfg
    }
}
