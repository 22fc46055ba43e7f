//! U-Net assembled from the primitives in [`crate::tensor::ops`].
//!
//! The network is a contracting path of `depth` levels (two same-padded 3x3
//! convolutions plus ReLU per level, then 2x2 max pooling), a two-conv
//! bottleneck, and a mirrored expanding path. Each expanding level upsamples
//! 2x, applies a 2x2 convolution that halves the channel count, concatenates
//! the level-matched contracting features, and runs another conv pair. A
//! final 1x1 convolution maps to class logits and a per-pixel softmax turns
//! them into probabilities.
//!
//! Channel widths double per contracting level starting at `base_filters`.
//! The conv-layer count is `5 * depth + 3` by construction: two per
//! contracting level, two in the bottleneck, three per expanding level, one
//! head. Depth 4 with 64 base filters gives the full 23-layer configuration.
//!
//! Inputs are expected in `[0, 1]`; the forward pass centers them around
//! zero itself, so no external normalization step exists to forget.
//!
//! `forward` returns an activation cache tied to the parameter version that
//! produced it; `backward` rejects caches that predate an optimizer step.

pub mod checkpoint;

use crate::data::{argmax_labels, LabelMap};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::tensor::ops::{
    concat_channels, conv2d_backward, conv2d_forward, maxpool2x2, maxpool2x2_backward, relu,
    relu_backward, softmax_channels, softmax_channels_backward, split_channels,
    upsample2x_nearest, upsample2x_nearest_backward, Padding,
};
use crate::tensor::{AdamHyper, ParamTensor, Scalar, Tensor};
use rand_distr::{Distribution, Normal};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UNetConfig {
    /// Number of pooling stages.
    pub depth: usize,
    /// Channel count at the top level; doubles per contracting level.
    pub base_filters: usize,
    pub in_channels: usize,
    pub num_classes: usize,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            depth: 2,
            base_filters: 8,
            in_channels: 3,
            num_classes: 7,
            seed: 0,
        }
    }
}

impl UNetConfig {
    /// The full-size configuration: depth 4, 64 base filters, 23 conv layers.
    pub fn full() -> Self {
        UNetConfig {
            depth: 4,
            base_filters: 64,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("model depth must be at least 1".into()));
        }
        if self.base_filters == 0 {
            return Err(Error::Config("base_filters must be at least 1".into()));
        }
        if self.in_channels == 0 {
            return Err(Error::Config("in_channels must be at least 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".into()));
        }
        Ok(())
    }

    /// Spatial dims must be divisible by this for pooling to be exact.
    pub fn pool_factor(&self) -> usize {
        1 << self.depth
    }

    pub fn conv_layer_count(&self) -> usize {
        5 * self.depth + 3
    }

    pub fn check_spatial(&self, h: usize, w: usize) -> Result<()> {
        let f = self.pool_factor();
        if h == 0 || w == 0 || h % f != 0 || w % f != 0 {
            return Err(Error::Shape(format!(
                "input of {h}x{w} is not divisible by 2^depth = {f}; \
                 pad or crop to a multiple"
            )));
        }
        Ok(())
    }

    /// Channel width of level `lvl` (0 = top).
    fn width(&self, lvl: usize) -> usize {
        self.base_filters << lvl
    }
}

/// One convolution with its bias, named for checkpoints and diagnostics.
#[derive(Debug, Clone)]
pub struct ConvLayer<T: Scalar = f64> {
    pub name: String,
    /// OC x IC x KH x KW.
    pub weight: ParamTensor<T>,
    /// OC.
    pub bias: ParamTensor<T>,
    pub padding: Padding,
}

/// The model: ordered conv layers plus the config that shaped them.
#[derive(Debug, Clone)]
pub struct UNet<T: Scalar = f64> {
    config: UNetConfig,
    layers: Vec<ConvLayer<T>>,
    /// Bumped on every parameter update; forward caches record the value
    /// they were computed under.
    version: u64,
}

/// Per-layer index bookkeeping. Layers are stored in application order:
/// contracting pairs, bottleneck pair, then per expanding level the up-conv
/// and its conv pair (deepest level first), then the head.
fn enc_idx(lvl: usize, j: usize) -> usize {
    2 * lvl + j
}
fn mid_idx(depth: usize, j: usize) -> usize {
    2 * depth + j
}
fn dec_up_idx(depth: usize, lvl: usize) -> usize {
    2 * depth + 2 + 3 * (depth - 1 - lvl)
}
fn dec_conv_idx(depth: usize, lvl: usize, j: usize) -> usize {
    dec_up_idx(depth, lvl) + 1 + j
}
fn head_idx(depth: usize) -> usize {
    5 * depth + 2
}

/// Builds a network with He-scaled normal weights and zero biases. Each
/// layer draws from its own derived stream, so the result is a pure function
/// of the config.
pub fn build_unet<T: Scalar>(config: &UNetConfig) -> Result<UNet<T>> {
    config.validate()?;
    let d = config.depth;
    let f = config.base_filters;

    // (name, out_c, in_c, kernel)
    let mut specs: Vec<(String, usize, usize, usize)> = Vec::new();
    for lvl in 0..d {
        let w_in = if lvl == 0 {
            config.in_channels
        } else {
            config.width(lvl - 1)
        };
        let w_out = config.width(lvl);
        specs.push((format!("enc{lvl}_conv0"), w_out, w_in, 3));
        specs.push((format!("enc{lvl}_conv1"), w_out, w_out, 3));
    }
    let mid = f << d;
    specs.push(("mid_conv0".into(), mid, config.width(d - 1), 3));
    specs.push(("mid_conv1".into(), mid, mid, 3));
    for lvl in (0..d).rev() {
        let w = config.width(lvl);
        specs.push((format!("dec{lvl}_up"), w, w * 2, 2));
        specs.push((format!("dec{lvl}_conv0"), w, w * 2, 3));
        specs.push((format!("dec{lvl}_conv1"), w, w, 3));
    }
    specs.push(("head".into(), config.num_classes, f, 1));
    assert_eq!(specs.len(), config.conv_layer_count());

    let mut layers = Vec::with_capacity(specs.len());
    for (i, (name, out_c, in_c, k)) in specs.into_iter().enumerate() {
        let mut rng = stream(config.seed, "unet-init", i as u64);
        let fan_in = (in_c * k * k) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt())
            .map_err(|e| Error::Numeric(format!("weight init: {e}")))?;
        let weight = Tensor::from_fn(vec![out_c, in_c, k, k], |_| {
            T::from_f64(normal.sample(&mut rng))
        });
        layers.push(ConvLayer {
            name,
            weight: ParamTensor::new(weight),
            bias: ParamTensor::new(Tensor::zeros(vec![out_c])),
            padding: Padding::Same,
        });
    }

    Ok(UNet {
        config: *config,
        layers,
        version: 0,
    })
}

/// Activations recorded during a forward pass, consumed by [`UNet::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T: Scalar = f64> {
    version: u64,
    /// Input tensor of each conv, aligned with the layer order.
    conv_inputs: Vec<Tensor<T>>,
    /// Conv output before ReLU (logits for the head).
    pre_acts: Vec<Tensor<T>>,
    /// Winning input index per pooled output element, one entry per level.
    pool_argmax: Vec<Vec<usize>>,
    pool_in_shape: Vec<Vec<usize>>,
    probs: Tensor<T>,
}

/// Gradients for every layer, index-aligned with [`UNet`] layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct UNetGrads<T: Scalar = f64> {
    pub weight: Vec<Tensor<T>>,
    pub bias: Vec<Tensor<T>>,
}

impl<T: Scalar> UNet<T> {
    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn layers(&self) -> &[ConvLayer<T>] {
        &self.layers
    }

    /// Direct parameter access for the verification suite. Callers must
    /// rerun `forward` after mutating: version tracking is not bumped here.
    pub(crate) fn layers_mut(&mut self) -> &mut [ConvLayer<T>] {
        &mut self.layers
    }

    pub fn conv_layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.value.len() + l.bias.value.len())
            .sum()
    }

    /// Runs the network on an NCHW batch. Returns per-pixel class
    /// probabilities and the activation cache needed for [`Self::backward`].
    ///
    /// Values are centered (input minus 0.5) before the first convolution,
    /// so callers pass images in their natural `[0, 1]` range.
    pub fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
        let (_batch, c, h, w) = input.dims4()?;
        if c != self.config.in_channels {
            return Err(Error::Shape(format!(
                "input has {c} channels, the network expects {}",
                self.config.in_channels
            )));
        }
        self.config.check_spatial(h, w)?;
        let d = self.config.depth;

        let mut cache = ForwardCache {
            version: self.version,
            conv_inputs: Vec::with_capacity(self.layers.len()),
            pre_acts: Vec::with_capacity(self.layers.len()),
            pool_argmax: Vec::with_capacity(d),
            pool_in_shape: Vec::with_capacity(d),
            probs: Tensor::zeros(vec![1]),
        };

        let conv_relu = |idx: usize, x: &Tensor<T>, cache: &mut ForwardCache<T>| {
            let layer = &self.layers[idx];
            debug_assert_eq!(cache.conv_inputs.len(), idx);
            let z = conv2d_forward(x, &layer.weight.value, &layer.bias.value, layer.padding)?;
            let a = relu(&z);
            cache.conv_inputs.push(x.clone());
            cache.pre_acts.push(z);
            Ok::<_, Error>(a)
        };

        let half = T::from_f64(0.5);
        let mut x = input.map(|v| v - half);
        let mut skips: Vec<Tensor<T>> = Vec::with_capacity(d);
        for lvl in 0..d {
            let a = conv_relu(enc_idx(lvl, 0), &x, &mut cache)?;
            let b = conv_relu(enc_idx(lvl, 1), &a, &mut cache)?;
            cache.pool_in_shape.push(b.shape().to_vec());
            let (pooled, argmax) = maxpool2x2(&b)?;
            cache.pool_argmax.push(argmax);
            skips.push(b);
            x = pooled;
        }

        let a = conv_relu(mid_idx(d, 0), &x, &mut cache)?;
        x = conv_relu(mid_idx(d, 1), &a, &mut cache)?;

        for lvl in (0..d).rev() {
            let up = upsample2x_nearest(&x)?;
            let a_up = conv_relu(dec_up_idx(d, lvl), &up, &mut cache)?;
            let cat = concat_channels(&skips[lvl], &a_up)?;
            let a = conv_relu(dec_conv_idx(d, lvl, 0), &cat, &mut cache)?;
            x = conv_relu(dec_conv_idx(d, lvl, 1), &a, &mut cache)?;
        }

        let head = &self.layers[head_idx(d)];
        let logits = conv2d_forward(&x, &head.weight.value, &head.bias.value, head.padding)?;
        cache.conv_inputs.push(x);
        let probs = softmax_channels(&logits)?;
        cache.pre_acts.push(logits);
        cache.probs = probs.clone();

        Ok((probs, cache))
    }

    /// Backpropagates `grad_probs` (gradient of a scalar loss with respect to
    /// the forward probabilities) through the cached activations. Pure: the
    /// same cache and upstream gradient always produce the same result.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_probs: &Tensor<T>) -> Result<UNetGrads<T>> {
        if cache.version != self.version {
            return Err(Error::Data(
                "stale activation cache: parameters changed since the forward pass \
                 that produced it; rerun forward"
                    .into(),
            ));
        }
        if grad_probs.shape() != cache.probs.shape() {
            return Err(Error::Shape(format!(
                "upstream gradient shape {:?} does not match probabilities {:?}",
                grad_probs.shape(),
                cache.probs.shape()
            )));
        }
        let d = self.config.depth;
        let n_layers = self.layers.len();
        let mut grads = UNetGrads {
            weight: vec![Tensor::zeros(vec![1]); n_layers],
            bias: vec![Tensor::zeros(vec![1]); n_layers],
        };

        // grad through a conv whose output fed a ReLU
        let conv_relu_back = |idx: usize, g: &Tensor<T>, grads: &mut UNetGrads<T>| {
            let gz = relu_backward(g, &cache.pre_acts[idx])?;
            let (gi, gw, gb) = conv2d_backward(
                &gz,
                &cache.conv_inputs[idx],
                &self.layers[idx].weight.value,
                self.layers[idx].padding,
            )?;
            grads.weight[idx] = gw;
            grads.bias[idx] = gb;
            Ok::<_, Error>(gi)
        };

        let mut g = softmax_channels_backward(grad_probs, &cache.probs)?;

        let head = head_idx(d);
        let (gi, gw, gb) = conv2d_backward(
            &g,
            &cache.conv_inputs[head],
            &self.layers[head].weight.value,
            self.layers[head].padding,
        )?;
        grads.weight[head] = gw;
        grads.bias[head] = gb;
        g = gi;

        let mut skip_grads: Vec<Option<Tensor<T>>> = vec![None; d];
        for lvl in 0..d {
            g = conv_relu_back(dec_conv_idx(d, lvl, 1), &g, &mut grads)?;
            g = conv_relu_back(dec_conv_idx(d, lvl, 0), &g, &mut grads)?;
            let (g_skip, g_up) = split_channels(&g, self.config.width(lvl))?;
            skip_grads[lvl] = Some(g_skip);
            let gu = conv_relu_back(dec_up_idx(d, lvl), &g_up, &mut grads)?;
            g = upsample2x_nearest_backward(&gu)?;
        }

        g = conv_relu_back(mid_idx(d, 1), &g, &mut grads)?;
        g = conv_relu_back(mid_idx(d, 0), &g, &mut grads)?;

        for lvl in (0..d).rev() {
            g = maxpool2x2_backward(&g, &cache.pool_argmax[lvl], &cache.pool_in_shape[lvl])?;
            g.add_assign(skip_grads[lvl].as_ref().expect("skip gradient recorded"))?;
            g = conv_relu_back(enc_idx(lvl, 1), &g, &mut grads)?;
            g = conv_relu_back(enc_idx(lvl, 0), &g, &mut grads)?;
        }

        Ok(grads)
    }

    /// Adds `grads` into the per-layer gradient accumulators.
    pub fn accumulate_grads(&mut self, grads: &UNetGrads<T>) -> Result<()> {
        if grads.weight.len() != self.layers.len() || grads.bias.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "gradient set covers {} layers, the network has {}",
                grads.weight.len(),
                self.layers.len()
            )));
        }
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.weight.accumulate_grad(&grads.weight[i])?;
            layer.bias.accumulate_grad(&grads.bias[i])?;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            layer.weight.zero_grad();
            layer.bias.zero_grad();
        }
    }

    /// One Adam update over every parameter; invalidates outstanding caches.
    pub fn adam_step(&mut self, hyper: &AdamHyper) -> Result<()> {
        for layer in &mut self.layers {
            crate::tensor::adam_step(&mut layer.weight, hyper)?;
            crate::tensor::adam_step(&mut layer.bias, hyper)?;
        }
        self.version += 1;
        Ok(())
    }

    /// Argmax segmentation of a single 1xCxHxW image; ties go to the lowest
    /// class index.
    pub fn predict_labelmap(&self, image: &Tensor<T>) -> Result<LabelMap> {
        let (batch, ..) = image.dims4()?;
        if batch != 1 {
            return Err(Error::Shape(format!(
                "predict_labelmap takes a single image, got a batch of {batch}"
            )));
        }
        let (probs, _) = self.forward(image)?;
        let (_, c, h, w) = probs.dims4()?;
        let chw = Tensor::new(vec![c, h, w], probs.data().to_vec())?;
        argmax_labels(&chw)
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::sampler::parasite_fraction;
    use crate::data::synth::{synth_generate, SynthParams};
    use crate::data::{one_hot, NUM_CLASSES};
    use crate::loss::generalized_dice_loss;

    fn tiny_input(seed: u64, h: usize, w: usize) -> Tensor<f64> {
        let mut rng = stream(seed, "unet-test", 0);
        use rand::Rng;
        Tensor::from_fn(vec![1, 3, h, w], |_| rng.random_range(0.0..1.0))
    }

    #[test]
    fn layer_count_matches_formula() {
        for depth in 1..=4 {
            let config = UNetConfig {
                depth,
                base_filters: 2,
                ..Default::default()
            };
            let net = build_unet::<f64>(&config).unwrap();
            assert_eq!(net.conv_layer_count(), 5 * depth + 3);
        }
        let full = build_unet::<f64>(&UNetConfig::full()).unwrap();
        assert_eq!(full.conv_layer_count(), 23);
    }

    #[test]
    fn full_config_widths_follow_the_doubling_rule() {
        let net = build_unet::<f64>(&UNetConfig::full()).unwrap();
        let dims: Vec<(String, Vec<usize>)> = net
            .layers()
            .iter()
            .map(|l| (l.name.clone(), l.weight.value.shape().to_vec()))
            .collect();
        assert_eq!(dims[0], ("enc0_conv0".into(), vec![64, 3, 3, 3]));
        assert_eq!(dims[7], ("enc3_conv1".into(), vec![512, 512, 3, 3]));
        assert_eq!(dims[8], ("mid_conv0".into(), vec![1024, 512, 3, 3]));
        assert_eq!(dims[10], ("dec3_up".into(), vec![512, 1024, 2, 2]));
        assert_eq!(dims[11], ("dec3_conv0".into(), vec![512, 1024, 3, 3]));
        assert_eq!(dims[22], ("head".into(), vec![7, 64, 1, 1]));
    }

    #[test]
    fn same_seed_builds_identical_networks() {
        let config = UNetConfig::default();
        let a = build_unet::<f64>(&config).unwrap();
        let b = build_unet::<f64>(&config).unwrap();
        for (la, lb) in a.layers().iter().zip(b.layers()) {
            assert_eq!(la.weight.value.data(), lb.weight.value.data());
        }
        let other = build_unet::<f64>(&UNetConfig {
            seed: 1,
            ..config
        })
        .unwrap();
        assert_ne!(
            a.layers()[0].weight.value.data(),
            other.layers()[0].weight.value.data()
        );
    }

    #[test]
    fn forward_keeps_spatial_dims_and_normalizes_channels() {
        let net = build_unet::<f64>(&UNetConfig::default()).unwrap();
        let input = tiny_input(3, 16, 24);
        let (probs, _) = net.forward(&input).unwrap();
        assert_eq!(probs.shape(), &[1, NUM_CLASSES, 16, 24]);
        for p in 0..16 * 24 {
            let sum: f64 = (0..NUM_CLASSES).map(|c| probs.data()[c * 16 * 24 + p]).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_rejects_indivisible_dims() {
        let net = build_unet::<f64>(&UNetConfig::default()).unwrap();
        let input = tiny_input(4, 18, 16);
        let err = net.forward(&input).unwrap_err();
        assert!(matches!(err, Error::Shape(_)), "{err}");
    }

    #[test]
    fn batch_entries_are_independent() {
        let net = build_unet::<f64>(&UNetConfig::default()).unwrap();
        let a = tiny_input(5, 8, 8);
        let b = tiny_input(6, 8, 8);
        let mut both = Tensor::zeros(vec![2, 3, 8, 8]);
        both.data_mut()[..a.len()].copy_from_slice(a.data());
        both.data_mut()[a.len()..].copy_from_slice(b.data());
        let (pa, _) = net.forward(&a).unwrap();
        let (pb, _) = net.forward(&b).unwrap();
        let (pboth, _) = net.forward(&both).unwrap();
        assert_eq!(&pboth.data()[..pa.len()], pa.data());
        assert_eq!(&pboth.data()[pa.len()..], pb.data());
    }

    #[test]
    fn zero_upstream_grad_gives_zero_param_grads() {
        let net = build_unet::<f64>(&UNetConfig::default()).unwrap();
        let input = tiny_input(7, 8, 8);
        let (probs, cache) = net.forward(&input).unwrap();
        let grads = net
            .backward(&cache, &Tensor::zeros(probs.shape().to_vec()))
            .unwrap();
        for gw in &grads.weight {
            assert!(gw.data().iter().all(|&v| v == 0.0));
        }
        for gb in &grads.bias {
            assert!(gb.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn backward_is_pure() {
        let net = build_unet::<f64>(&UNetConfig::default()).unwrap();
        let input = tiny_input(8, 8, 8);
        let (probs, cache) = net.forward(&input).unwrap();
        let upstream = Tensor::from_fn(probs.shape().to_vec(), |i| (i % 5) as f64 - 2.0);
        let g1 = net.backward(&cache, &upstream).unwrap();
        let g2 = net.backward(&cache, &upstream).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn backward_rejects_stale_cache() {
        let mut net = build_unet::<f64>(&UNetConfig::default()).unwrap();
        let input = tiny_input(9, 8, 8);
        let (probs, cache) = net.forward(&input).unwrap();
        let upstream = Tensor::filled(probs.shape().to_vec(), 0.1);
        let grads = net.backward(&cache, &upstream).unwrap();
        net.accumulate_grads(&grads).unwrap();
        net.adam_step(&AdamHyper::with_lr(1e-3)).unwrap();
        let err = net.backward(&cache, &upstream).unwrap_err();
        assert!(err.to_string().contains("stale"), "{err}");
    }

    #[test]
    fn predict_matches_argmax_of_forward_probs() {
        let net = build_unet::<f64>(&UNetConfig::default()).unwrap();
        let input = tiny_input(10, 16, 16);
        let map = net.predict_labelmap(&input).unwrap();
        let (probs, _) = net.forward(&input).unwrap();
        let chw = Tensor::new(vec![NUM_CLASSES, 16, 16], probs.data().to_vec()).unwrap();
        let reference = argmax_labels(&chw).unwrap();
        assert_eq!(map.data(), reference.data());
    }

    #[test]
    fn argmax_is_invariant_to_monotone_rescaling() {
        let net = build_unet::<f64>(&UNetConfig::default()).unwrap();
        let input = tiny_input(11, 8, 8);
        let (probs, _) = net.forward(&input).unwrap();
        let base = argmax_labels(&Tensor::new(
            vec![NUM_CLASSES, 8, 8],
            probs.data().to_vec(),
        )
        .unwrap())
        .unwrap();
        let monotone: [fn(f64) -> f64; 3] = [|v| v.sqrt(), |v| 3.0 * v + 1.0, |v| v.exp()];
        for f in monotone {
            let mapped = probs.map(f);
            let remapped = argmax_labels(
                &Tensor::new(vec![NUM_CLASSES, 8, 8], mapped.data().to_vec()).unwrap(),
            )
            .unwrap();
            assert_eq!(base.data(), remapped.data());
        }
    }

    /// A depth-1, base-4 network must drive the GDL under 0.1 on one fixed
    /// 64x64 synthetic patch (an infected cell on background) within 500
    /// Adam steps at lr 1e-3.
    #[test]
    fn tiny_network_overfits_a_single_patch() {
        let params = SynthParams {
            height: 64,
            width: 64,
            count: 1,
            cells: (1, 1),
            promastigotes: (0, 0),
            adhered: (0, 0),
            amastigotes: (3, 4),
            blob_density: 0.0,
            seed: 41,
            ..SynthParams::parasite_dense()
        };
        let patch = synth_generate(&params).unwrap().pop().unwrap();
        assert!(parasite_fraction(&patch.labels) > 0.0);

        let mut input = Tensor::zeros(vec![1, 3, 64, 64]);
        input.data_mut().copy_from_slice(patch.rgb.data());
        let onehot3 = one_hot::<f64>(&patch.labels, NUM_CLASSES).unwrap();
        let target = Tensor::new(vec![1, NUM_CLASSES, 64, 64], onehot3.data().to_vec()).unwrap();

        let config = UNetConfig {
            depth: 1,
            base_filters: 4,
            ..Default::default()
        };
        let mut net = build_unet::<f64>(&config).unwrap();
        let hyper = AdamHyper::with_lr(1e-3);
        let mut final_loss = f64::INFINITY;
        for _ in 0..500 {
            let (probs, cache) = net.forward(&input).unwrap();
            let (loss, grad) = generalized_dice_loss(&probs, &target).unwrap();
            final_loss = loss;
            if loss < 0.1 {
                break;
            }
            let grads = net.backward(&cache, &grad).unwrap();
            net.zero_grads();
            net.accumulate_grads(&grads).unwrap();
            net.adam_step(&hyper).unwrap();
        }
        assert!(
            final_loss < 0.1,
            "loss stuck at {final_loss} after 500 steps"
        );
    }
}
