use std::hash::{DefaultHasher, Hash, Hasher};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::layers::{
    batchnorm2d, batchnorm2d_backward, bilinear_resize, bilinear_resize_backward, conv2d, conv2d_backward,
    conv_transpose2d, conv_transpose2d_backward, linear, linear_backward, relu, relu_backward, BatchNormCache,
    BatchNormState, Mode,
};
use crate::tensor::{Shape, Tensor};

use super::params::{Dense, Gradients, JdfdParams, DECODER_CHANNELS, ENCODER_CHANNELS, NUM_CLASSES};

/// Result of one joint forward pass.
#[derive(Clone, Debug)]
pub struct ModelOutput {
    /// `(n, z, 1, 1)`.
    pub latent: Tensor,
    /// Same shape as the input; absent when the model has no decoder.
    pub reconstruction: Option<Tensor>,
    /// `(n, 2, 1, 1)`; index 1 is the fake class.
    pub logits: Tensor,
    pub probabilities: Tensor,
}

/// Intermediates of a conv/deconv + batchnorm + ReLU block.
#[derive(Clone, Debug)]
struct BlockTrace {
    input: Tensor,
    norm: BatchNormCache,
    pre_relu: Tensor,
}

#[derive(Clone, Debug)]
struct EncoderTrace {
    blocks: Vec<BlockTrace>,
    flat: Tensor,
}

#[derive(Clone, Debug)]
struct DecoderTrace {
    fc_in: Tensor,
    blocks: Vec<BlockTrace>,
    out_in: Tensor,
    pre_resize: Tensor,
}

#[derive(Clone, Debug)]
struct ClassifierTrace {
    input: Tensor,
    hidden_pre: Tensor,
    hidden: Tensor,
}

/// Forward pass with everything the backward pass needs.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub mode: Mode,
    pub output: ModelOutput,
    encoder: EncoderTrace,
    decoder: Option<DecoderTrace>,
    classifier: ClassifierTrace,
}

impl ForwardPass {
    /// Hash of the on/off state of every ReLU. Two inputs with the same
    /// pattern lie on the same smooth piece of the model.
    pub fn activation_pattern(&self) -> u64 {
        let mut h = DefaultHasher::new();
        let dec = self.decoder.iter().flat_map(|d| d.blocks.iter());
        let pre = self.encoder.blocks.iter().chain(dec).map(|b| &b.pre_relu);
        for t in pre.chain([&self.classifier.hidden_pre]) {
            for &v in t.data() {
                (v > 0.0).hash(&mut h);
            }
        }
        h.finish()
    }

    /// Batchnorm caches in parameter order, for committing running stats.
    fn norm_caches(&self) -> impl Iterator<Item = &BatchNormCache> {
        let dec = self.decoder.iter().flat_map(|d| d.blocks.iter());
        self.encoder.blocks.iter().chain(dec).map(|b| &b.norm)
    }
}

impl JdfdParams {
    /// Fold the batch statistics of a train-mode pass into the running stats.
    pub fn commit_batch_stats(&mut self, pass: &ForwardPass) {
        if pass.mode != Mode::Train {
            return;
        }
        let mut states: Vec<&mut BatchNormState> = self.encoder.blocks.iter_mut().map(|b| &mut b.bn).collect();
        if let Some(dec) = &mut self.decoder {
            states.extend(dec.blocks.iter_mut().map(|b| &mut b.bn));
        }
        for (state, cache) in states.into_iter().zip(pass.norm_caches()) {
            state.update_running(cache);
        }
    }
}

fn dense(x: &Tensor, d: &Dense) -> Result<Tensor> {
    linear(x, &d.weight, &d.bias)
}

fn conv_block(x: Tensor, weight: &Tensor, bn: &BatchNormState, mode: Mode) -> Result<(BlockTrace, Tensor)> {
    let pre_norm = conv2d(&x, weight, None, 2, 1)?;
    let (pre_relu, norm) = batchnorm2d(&pre_norm, bn, mode)?;
    let out = relu(&pre_relu);
    Ok((BlockTrace { input: x, norm, pre_relu }, out))
}

fn deconv_block(x: Tensor, weight: &Tensor, bn: &BatchNormState, mode: Mode) -> Result<(BlockTrace, Tensor)> {
    let pre_norm = conv_transpose2d(&x, weight, None, 2, 0)?;
    let (pre_relu, norm) = batchnorm2d(&pre_norm, bn, mode)?;
    let out = relu(&pre_relu);
    Ok((BlockTrace { input: x, norm, pre_relu }, out))
}

fn encoder_forward(x: &Tensor, params: &JdfdParams, mode: Mode) -> Result<(EncoderTrace, Tensor)> {
    let s = x.shape();
    let a = params.arch;
    if s.c != ENCODER_CHANNELS[0] || s.h != a.height || s.w != a.width {
        return Err(Error::shape(format!(
            "encode: expected images of 3x{}x{}, got {}x{}x{}",
            a.height, a.width, s.c, s.h, s.w
        )));
    }
    let mut blocks = Vec::with_capacity(params.encoder.blocks.len());
    let mut h = x.clone();
    for b in &params.encoder.blocks {
        let (trace, out) = conv_block(h, &b.weight, &b.bn, mode)?;
        blocks.push(trace);
        h = out;
    }
    let flat = h.flatten();
    let latent = dense(&flat, &params.encoder.fc)?;
    Ok((EncoderTrace { blocks, flat }, latent))
}

fn check_latent(v: &Tensor, params: &JdfdParams, op: &str) -> Result<()> {
    if v.shape().sample_len() != params.arch.latent_dim {
        return Err(Error::shape(format!(
            "{op}: latent has {} values per sample, expected {}",
            v.shape().sample_len(),
            params.arch.latent_dim
        )));
    }
    Ok(())
}

fn decoder_forward(v: &Tensor, params: &JdfdParams, mode: Mode) -> Result<(DecoderTrace, Tensor)> {
    check_latent(v, params, "decode")?;
    let dec = params.decoder.as_ref().ok_or_else(|| Error::invalid("decode: model has no decoder"))?;
    let a = params.arch;
    let (gh, gw) = a.grid();
    let n = v.shape().n;
    let mut h = dense(v, &dec.fc)?.reshape(Shape::new(n, DECODER_CHANNELS[0], gh, gw))?;
    let mut blocks = Vec::with_capacity(dec.blocks.len());
    for b in &dec.blocks {
        let (trace, out) = deconv_block(h, &b.weight, &b.bn, mode)?;
        blocks.push(trace);
        h = out;
    }
    let pre_resize = conv2d(&h, &dec.out_conv.weight, Some(&dec.out_conv.bias), 1, 1)?;
    let recon = bilinear_resize(&pre_resize, a.height, a.width)?;
    Ok((DecoderTrace { fc_in: v.clone(), blocks, out_in: h, pre_resize }, recon))
}

/// Row-wise softmax over the class axis.
pub fn softmax(logits: &Tensor) -> Tensor {
    let k = logits.shape().sample_len();
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(k.max(1)) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for x in row.iter_mut() {
            *x = (*x - m).exp();
            z += *x;
        }
        row.iter_mut().for_each(|x| *x /= z);
    }
    out
}

fn classifier_forward(v: &Tensor, params: &JdfdParams) -> Result<(ClassifierTrace, Tensor)> {
    check_latent(v, params, "classify")?;
    let c = &params.classifier;
    let hidden_pre = dense(v, &c.hidden)?;
    let hidden = relu(&hidden_pre);
    let logits = dense(&hidden, &c.output)?;
    Ok((ClassifierTrace { input: v.clone(), hidden_pre, hidden }, logits))
}

/// Latent vectors `(n, z, 1, 1)` for a batch of images.
pub fn encode(x: &Tensor, params: &JdfdParams, mode: Mode) -> Result<Tensor> {
    encoder_forward(x, params, mode).map(|(_, v)| v)
}

/// Reconstruction `(n, 3, h, w)` from latent vectors.
pub fn decode(v: &Tensor, params: &JdfdParams, mode: Mode) -> Result<Tensor> {
    decoder_forward(v, params, mode).map(|(_, x)| x)
}

/// Logits and class probabilities for latent vectors.
pub fn classify(v: &Tensor, params: &JdfdParams) -> Result<(Tensor, Tensor)> {
    let (_, logits) = classifier_forward(v, params)?;
    let probs = softmax(&logits);
    Ok((logits, probs))
}

/// Encode once, then decode and classify from the same latent values.
pub fn forward_traced(x: &Tensor, params: &JdfdParams, mode: Mode) -> Result<ForwardPass> {
    if x.shape().n == 0 {
        return Err(Error::invalid("forward: empty batch"));
    }
    let (encoder, latent) = encoder_forward(x, params, mode)?;
    let (decoder, reconstruction) = match params.decoder {
        Some(_) => {
            let (t, r) = decoder_forward(&latent, params, mode)?;
            (Some(t), Some(r))
        }
        None => (None, None),
    };
    let (classifier, logits) = classifier_forward(&latent, params)?;
    let probabilities = softmax(&logits);
    Ok(ForwardPass {
        mode,
        output: ModelOutput { latent, reconstruction, logits, probabilities },
        encoder,
        decoder,
        classifier,
    })
}

/// Joint forward over a batch of samples.
pub fn forward_joint(batch: &[Sample], params: &JdfdParams, mode: Mode) -> Result<ModelOutput> {
    if batch.is_empty() {
        return Err(Error::invalid("forward_joint: empty batch"));
    }
    let x = Tensor::stack(batch.iter().map(|s| &s.image))?;
    forward_traced(&x, params, mode).map(|p| p.output)
}

fn block_backward(t: &BlockTrace, bn: &BatchNormState, grad_out: &Tensor) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
    let g = relu_backward(&t.pre_relu, grad_out)?;
    let bg = batchnorm2d_backward(&t.norm, bn, &g)?;
    Ok((bg.input, bg.gamma, bg.beta))
}

fn zero_group(grads: &mut Gradients, params: &JdfdParams, prefix: &str) {
    for (info, data) in params.slots() {
        if info.learnable && info.name.starts_with(prefix) {
            grads.insert(info.name, vec![0.0; data.len()]);
        }
    }
}

/// Gradients of every learnable parameter given the loss gradients at the
/// logits and at the reconstruction. A missing upstream gradient means that
/// branch does not contribute; its parameters get explicit zeros. The
/// encoder receives the sum of both branches' latent gradients.
pub fn backward(
    params: &JdfdParams,
    pass: &ForwardPass,
    d_logits: Option<&Tensor>,
    d_recon: Option<&Tensor>,
) -> Result<Gradients> {
    let mut grads = Gradients::new();
    let mut d_latent: Option<Tensor> = None;
    let mut accumulate = |g: Tensor| {
        d_latent = Some(match d_latent.take() {
            None => g,
            Some(mut acc) => {
                acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b);
                acc
            }
        });
    };

    let logits_shape = pass.output.logits.shape();
    match d_logits {
        Some(dl) => {
            if dl.shape() != logits_shape {
                return Err(Error::shape(format!("backward: logit gradient {} vs {logits_shape}", dl.shape())));
            }
            let c = &params.classifier;
            let t = &pass.classifier;
            let out = linear_backward(&t.hidden, &c.output.weight, dl)?;
            grads.insert("classifier.output.weight", out.weight.into_data());
            grads.insert("classifier.output.bias", out.bias);
            let g = relu_backward(&t.hidden_pre, &out.input)?;
            let hid = linear_backward(&t.input, &c.hidden.weight, &g)?;
            grads.insert("classifier.hidden.weight", hid.weight.into_data());
            grads.insert("classifier.hidden.bias", hid.bias);
            accumulate(hid.input);
        }
        None => zero_group(&mut grads, params, "classifier."),
    }

    if let (Some(dec), Some(t)) = (&params.decoder, &pass.decoder) {
        match d_recon {
            Some(dr) => {
                let a = params.arch;
                let expect = Shape::new(logits_shape.n, 3, a.height, a.width);
                if dr.shape() != expect {
                    return Err(Error::shape(format!("backward: reconstruction gradient {} vs {expect}", dr.shape())));
                }
                let ps = t.pre_resize.shape();
                let g = bilinear_resize_backward(dr, ps.h, ps.w)?;
                let oc = conv2d_backward(&t.out_in, &dec.out_conv.weight, 1, 1, &g)?;
                grads.insert("decoder.out.weight", oc.weight.into_data());
                grads.insert("decoder.out.bias", oc.bias);
                let mut g = oc.input;
                for (i, (b, bt)) in dec.blocks.iter().zip(&t.blocks).enumerate().rev() {
                    let (gn, gamma, beta) = block_backward(bt, &b.bn, &g)?;
                    let cg = conv_transpose2d_backward(&bt.input, &b.weight, 2, 0, &gn)?;
                    grads.insert(format!("decoder.block{i}.deconv.weight"), cg.weight.into_data());
                    grads.insert(format!("decoder.block{i}.bn.gamma"), gamma);
                    grads.insert(format!("decoder.block{i}.bn.beta"), beta);
                    g = cg.input;
                }
                let g = g.flatten();
                let fc = linear_backward(&t.fc_in, &dec.fc.weight, &g)?;
                grads.insert("decoder.fc.weight", fc.weight.into_data());
                grads.insert("decoder.fc.bias", fc.bias);
                accumulate(fc.input);
            }
            None => zero_group(&mut grads, params, "decoder."),
        }
    }

    match d_latent {
        Some(dv) => {
            let t = &pass.encoder;
            let enc = &params.encoder;
            let fc = linear_backward(&t.flat, &enc.fc.weight, &dv.flatten())?;
            grads.insert("encoder.fc.weight", fc.weight.into_data());
            grads.insert("encoder.fc.bias", fc.bias);
            let last = t.blocks.last().expect("encoder has blocks");
            let mut g = fc.input.reshape(last.pre_relu.shape())?;
            for (i, (b, bt)) in enc.blocks.iter().zip(&t.blocks).enumerate().rev() {
                let (gn, gamma, beta) = block_backward(bt, &b.bn, &g)?;
                let cg = conv2d_backward(&bt.input, &b.weight, 2, 1, &gn)?;
                grads.insert(format!("encoder.block{i}.conv.weight"), cg.weight.into_data());
                grads.insert(format!("encoder.block{i}.bn.gamma"), gamma);
                grads.insert(format!("encoder.block{i}.bn.beta"), beta);
                g = cg.input;
            }
        }
        None => zero_group(&mut grads, params, "encoder."),
    }
    debug_assert_eq!(logits_shape.sample_len(), NUM_CLASSES);
    Ok(grads)
}
