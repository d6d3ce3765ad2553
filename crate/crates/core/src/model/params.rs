use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::layers::BatchNormState;
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

/// Channel widths through the four stride-2 encoder stages.
pub const ENCODER_CHANNELS: [usize; 5] = [3, 16, 32, 64, 128];
/// Channel widths through the four stride-2 decoder stages.
pub const DECODER_CHANNELS: [usize; 5] = [128, 64, 32, 16, 16];
pub const CLASSIFIER_HIDDEN: usize = 64;
pub const NUM_CLASSES: usize = 2;
/// Total spatial reduction of the encoder.
pub const DOWNSAMPLE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub height: usize,
    pub width: usize,
    pub latent_dim: usize,
}

impl Architecture {
    pub fn new(height: usize, width: usize, latent_dim: usize) -> Result<Self> {
        if latent_dim == 0 {
            return Err(Error::invalid("latent_dim must be at least 1"));
        }
        if height == 0 || width == 0 || height % DOWNSAMPLE != 0 || width % DOWNSAMPLE != 0 {
            return Err(Error::invalid(format!(
                "image size {height}x{width} must be a positive multiple of {DOWNSAMPLE} in both dimensions"
            )));
        }
        Ok(Architecture { height, width, latent_dim })
    }

    /// Spatial size of the encoder's last feature map.
    pub fn grid(&self) -> (usize, usize) {
        (self.height / DOWNSAMPLE, self.width / DOWNSAMPLE)
    }

    pub fn bottleneck_len(&self) -> usize {
        let (gh, gw) = self.grid();
        ENCODER_CHANNELS[4] * gh * gw
    }
}

/// Parameter group, which also selects the learning rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Encoder,
    Decoder,
    Classifier,
}

impl Group {
    pub fn name(&self) -> &'static str {
        match self {
            Group::Encoder => "encoder",
            Group::Decoder => "decoder",
            Group::Classifier => "classifier",
        }
    }
}

/// Description of one named parameter buffer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotInfo {
    pub name: String,
    pub group: Group,
    /// Running statistics are stored but never receive gradients.
    pub learnable: bool,
    pub dims: Vec<usize>,
}

fn he_tensor(shape: Shape, fan_in: usize, rng: &mut Rng) -> Tensor {
    let std = (2.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_, _, _, _| rng.normal(0.0, std))
}

/// Conv 3x3 stride 2 (no bias, batchnorm follows) + batchnorm.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvBlock {
    pub weight: Tensor,
    pub bn: BatchNormState,
}

/// Deconv 2x2 stride 2 (no bias, batchnorm follows) + batchnorm.
#[derive(Clone, Debug, PartialEq)]
pub struct DeconvBlock {
    pub weight: Tensor,
    pub bn: BatchNormState,
}

/// Fully connected layer; weight is `(out, in)` stored as `(out, in, 1, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

impl Dense {
    fn init(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        Dense { weight: he_tensor(Shape::flat(outputs, inputs), inputs, rng), bias: vec![0.0; outputs] }
    }

    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense { weight: Tensor::zeros(Shape::flat(outputs, inputs)), bias: vec![0.0; outputs] }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape().c
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape().n
    }
}

/// Final 3x3 conv producing the RGB reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputConv {
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub blocks: Vec<ConvBlock>,
    pub fc: Dense,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decoder {
    pub fc: Dense,
    pub blocks: Vec<DeconvBlock>,
    pub out_conv: OutputConv,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub hidden: Dense,
    pub output: Dense,
}

/// All parameters, partitioned into encoder, decoder and classifier groups.
/// A model without a decoder is the classification-only baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct JdfdParams {
    pub arch: Architecture,
    pub encoder: Encoder,
    pub decoder: Option<Decoder>,
    pub classifier: Classifier,
}

impl Encoder {
    fn init(arch: &Architecture, rng: &mut Rng) -> Self {
        let blocks = ENCODER_CHANNELS
            .windows(2)
            .map(|io| ConvBlock {
                weight: he_tensor(Shape::new(io[1], io[0], 3, 3), io[0] * 9, rng),
                bn: BatchNormState::new(io[1]),
            })
            .collect();
        Encoder { blocks, fc: Dense::init(arch.bottleneck_len(), arch.latent_dim, rng) }
    }

    fn zeros(arch: &Architecture) -> Self {
        let blocks = ENCODER_CHANNELS
            .windows(2)
            .map(|io| ConvBlock { weight: Tensor::zeros(Shape::new(io[1], io[0], 3, 3)), bn: BatchNormState::new(io[1]) })
            .collect();
        Encoder { blocks, fc: Dense::zeros(arch.bottleneck_len(), arch.latent_dim) }
    }
}

impl Decoder {
    fn init(arch: &Architecture, rng: &mut Rng) -> Self {
        let fc = Dense::init(arch.latent_dim, arch.bottleneck_len(), rng);
        // Stride equals kernel, so each output sees exactly one tap per input channel.
        let blocks = DECODER_CHANNELS
            .windows(2)
            .map(|io| DeconvBlock {
                weight: he_tensor(Shape::new(io[0], io[1], 2, 2), io[0], rng),
                bn: BatchNormState::new(io[1]),
            })
            .collect();
        let last = DECODER_CHANNELS[4];
        let out_conv = OutputConv { weight: he_tensor(Shape::new(3, last, 3, 3), last * 9, rng), bias: vec![0.0; 3] };
        Decoder { fc, blocks, out_conv }
    }

    fn zeros(arch: &Architecture) -> Self {
        let blocks = DECODER_CHANNELS
            .windows(2)
            .map(|io| DeconvBlock {
                weight: Tensor::zeros(Shape::new(io[0], io[1], 2, 2)),
                bn: BatchNormState::new(io[1]),
            })
            .collect();
        let out_conv =
            OutputConv { weight: Tensor::zeros(Shape::new(3, DECODER_CHANNELS[4], 3, 3)), bias: vec![0.0; 3] };
        Decoder { fc: Dense::zeros(arch.latent_dim, arch.bottleneck_len()), blocks, out_conv }
    }
}

impl Classifier {
    fn init(arch: &Architecture, rng: &mut Rng) -> Self {
        Classifier {
            hidden: Dense::init(arch.latent_dim, CLASSIFIER_HIDDEN, rng),
            output: Dense::init(CLASSIFIER_HIDDEN, NUM_CLASSES, rng),
        }
    }

    fn zeros(arch: &Architecture) -> Self {
        Classifier {
            hidden: Dense::zeros(arch.latent_dim, CLASSIFIER_HIDDEN),
            output: Dense::zeros(CLASSIFIER_HIDDEN, NUM_CLASSES),
        }
    }
}

fn dims4(t: &Tensor) -> Vec<usize> {
    let s = t.shape();
    vec![s.n, s.c, s.h, s.w]
}

fn dims2(t: &Tensor) -> Vec<usize> {
    let s = t.shape();
    vec![s.n, s.c]
}

type SlotRef<'a> = (SlotInfo, &'a [f64]);
type SlotMut<'a> = (SlotInfo, &'a mut [f64]);

fn info(name: String, group: Group, learnable: bool, dims: Vec<usize>) -> SlotInfo {
    SlotInfo { name, group, learnable, dims }
}

fn bn_refs<'a>(prefix: &str, group: Group, bn: &'a BatchNormState, out: &mut Vec<SlotRef<'a>>) {
    let c = vec![bn.channels()];
    out.push((info(format!("{prefix}.bn.gamma"), group, true, c.clone()), &bn.gamma));
    out.push((info(format!("{prefix}.bn.beta"), group, true, c.clone()), &bn.beta));
    out.push((info(format!("{prefix}.bn.running_mean"), group, false, c.clone()), &bn.running_mean));
    out.push((info(format!("{prefix}.bn.running_var"), group, false, c), &bn.running_var));
}

fn bn_muts<'a>(prefix: &str, group: Group, bn: &'a mut BatchNormState, out: &mut Vec<SlotMut<'a>>) {
    let c = vec![bn.channels()];
    out.push((info(format!("{prefix}.bn.gamma"), group, true, c.clone()), &mut bn.gamma));
    out.push((info(format!("{prefix}.bn.beta"), group, true, c.clone()), &mut bn.beta));
    out.push((info(format!("{prefix}.bn.running_mean"), group, false, c.clone()), &mut bn.running_mean));
    out.push((info(format!("{prefix}.bn.running_var"), group, false, c), &mut bn.running_var));
}

fn dense_refs<'a>(prefix: &str, group: Group, d: &'a Dense, out: &mut Vec<SlotRef<'a>>) {
    out.push((info(format!("{prefix}.weight"), group, true, dims2(&d.weight)), d.weight.data()));
    out.push((info(format!("{prefix}.bias"), group, true, vec![d.bias.len()]), &d.bias));
}

fn dense_muts<'a>(prefix: &str, group: Group, d: &'a mut Dense, out: &mut Vec<SlotMut<'a>>) {
    let dims = dims2(&d.weight);
    out.push((info(format!("{prefix}.weight"), group, true, dims), d.weight.data_mut()));
    out.push((info(format!("{prefix}.bias"), group, true, vec![d.bias.len()]), &mut d.bias));
}

impl JdfdParams {
    /// He-initialized parameters. Each group draws from its own stream, so the
    /// encoder and classifier come out identical with or without a decoder.
    pub fn init(arch: Architecture, with_decoder: bool, rng: &mut Rng) -> Self {
        let mut enc_rng = Rng::new(rng.next_u64());
        let mut dec_rng = Rng::new(rng.next_u64());
        let mut cls_rng = Rng::new(rng.next_u64());
        JdfdParams {
            arch,
            encoder: Encoder::init(&arch, &mut enc_rng),
            decoder: with_decoder.then(|| Decoder::init(&arch, &mut dec_rng)),
            classifier: Classifier::init(&arch, &mut cls_rng),
        }
    }

    /// All-zero weights with identity batchnorm; a starting point for loading
    /// or for hand-built parameter sets.
    pub fn zeros(arch: Architecture, with_decoder: bool) -> Self {
        JdfdParams {
            arch,
            encoder: Encoder::zeros(&arch),
            decoder: with_decoder.then(|| Decoder::zeros(&arch)),
            classifier: Classifier::zeros(&arch),
        }
    }

    pub fn has_decoder(&self) -> bool {
        self.decoder.is_some()
    }

    /// Every named buffer in a fixed order.
    pub fn slots(&self) -> Vec<SlotRef<'_>> {
        let mut out = Vec::new();
        let g = Group::Encoder;
        for (i, b) in self.encoder.blocks.iter().enumerate() {
            let p = format!("encoder.block{i}");
            out.push((info(format!("{p}.conv.weight"), g, true, dims4(&b.weight)), b.weight.data()));
            bn_refs(&p, g, &b.bn, &mut out);
        }
        dense_refs("encoder.fc", g, &self.encoder.fc, &mut out);
        if let Some(dec) = &self.decoder {
            let g = Group::Decoder;
            dense_refs("decoder.fc", g, &dec.fc, &mut out);
            for (i, b) in dec.blocks.iter().enumerate() {
                let p = format!("decoder.block{i}");
                out.push((info(format!("{p}.deconv.weight"), g, true, dims4(&b.weight)), b.weight.data()));
                bn_refs(&p, g, &b.bn, &mut out);
            }
            let oc = &dec.out_conv;
            out.push((info("decoder.out.weight".into(), g, true, dims4(&oc.weight)), oc.weight.data()));
            out.push((info("decoder.out.bias".into(), g, true, vec![oc.bias.len()]), &oc.bias));
        }
        dense_refs("classifier.hidden", Group::Classifier, &self.classifier.hidden, &mut out);
        dense_refs("classifier.output", Group::Classifier, &self.classifier.output, &mut out);
        out
    }

    /// Mutable view of [`slots`](Self::slots), same order.
    pub fn slots_mut(&mut self) -> Vec<SlotMut<'_>> {
        let mut out = Vec::new();
        let g = Group::Encoder;
        for (i, b) in self.encoder.blocks.iter_mut().enumerate() {
            let p = format!("encoder.block{i}");
            let dims = dims4(&b.weight);
            out.push((info(format!("{p}.conv.weight"), g, true, dims), b.weight.data_mut()));
            bn_muts(&p, g, &mut b.bn, &mut out);
        }
        dense_muts("encoder.fc", g, &mut self.encoder.fc, &mut out);
        if let Some(dec) = &mut self.decoder {
            let g = Group::Decoder;
            dense_muts("decoder.fc", g, &mut dec.fc, &mut out);
            for (i, b) in dec.blocks.iter_mut().enumerate() {
                let p = format!("decoder.block{i}");
                let dims = dims4(&b.weight);
                out.push((info(format!("{p}.deconv.weight"), g, true, dims), b.weight.data_mut()));
                bn_muts(&p, g, &mut b.bn, &mut out);
            }
            let oc = &mut dec.out_conv;
            let dims = dims4(&oc.weight);
            out.push((info("decoder.out.weight".into(), g, true, dims), oc.weight.data_mut()));
            out.push((info("decoder.out.bias".into(), g, true, vec![oc.bias.len()]), &mut oc.bias));
        }
        dense_muts("classifier.hidden", Group::Classifier, &mut self.classifier.hidden, &mut out);
        dense_muts("classifier.output", Group::Classifier, &mut self.classifier.output, &mut out);
        out
    }

    pub fn learnable_count(&self) -> usize {
        self.slots().iter().filter(|(i, _)| i.learnable).map(|(_, d)| d.len()).sum()
    }

    /// Values of one named buffer.
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.slots().into_iter().find(|(i, _)| i.name == name).map(|(_, d)| d)
    }
}

/// Gradients keyed by parameter name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    map: BTreeMap<String, Vec<f64>>,
}

impl Gradients {
    pub fn new() -> Self {
        Gradients::default()
    }

    /// Zero gradients for every learnable buffer of `params`.
    pub fn zeros_like(params: &JdfdParams) -> Self {
        let mut g = Gradients::new();
        for (info, data) in params.slots() {
            if info.learnable {
                g.insert(info.name, vec![0.0; data.len()]);
            }
        }
        g
    }

    pub fn insert(&mut self, name: impl Into<String>, grad: Vec<f64>) {
        self.map.insert(name.into(), grad);
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.map.get(name).map(Vec::as_slice)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        self.map.get_mut(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Vec<f64>> {
        self.map.remove(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.map.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Entries whose name starts with the group prefix.
    pub fn group(&self, group: Group) -> impl Iterator<Item = (&str, &[f64])> {
        let prefix = format!("{}.", group.name());
        self.iter().filter(move |(k, _)| k.starts_with(&prefix))
    }

    pub fn scaled(&self, k: f64) -> Self {
        Gradients { map: self.map.iter().map(|(n, v)| (n.clone(), v.iter().map(|x| x * k).collect())).collect() }
    }

    /// Element-wise sum; names present in only one side are kept as-is.
    pub fn sum(&self, other: &Gradients) -> Self {
        let mut out = self.clone();
        for (name, g) in &other.map {
            match out.map.get_mut(name) {
                Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                None => {
                    out.map.insert(name.clone(), g.clone());
                }
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.map.values().all(|v| v.iter().all(|x| x.is_finite()))
    }
}
