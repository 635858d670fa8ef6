//! Masked-convolution PixelCNN networks: a local variant whose receptive
//! field is fixed by the first layer, and a full variant whose residual
//! blocks keep growing it.
//!
//! Layer sequence (same for both variants):
//!
//! ```text
//! conv k×k mask A  (C -> hidden), ReLU
//! r × residual block:  x + ReLU(conv_B(ReLU(conv_B(ReLU(conv_B(x))))))
//! conv 1×1 mask B  (hidden -> hidden), ReLU
//! conv 1×1 mask B  (hidden -> mixture parameters)
//! ```
//!
//! Residual block kernels are `[1, 1, 1]` for the local variant and
//! `[1, 3, 1]` for the full variant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::mixture;
use crate::nn::{ConvKernel, MaskKind, MaskedTaps, Tensor4};

pub const WEIGHT_MAGIC: [u8; 4] = *b"NLW1";
pub const WEIGHT_VERSION: u8 = 1;

/// Lower clamp applied to every predicted log-scale.
pub const MIN_LOG_SCALE: f64 = -7.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Local,
    Full,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Local => "local",
            Variant::Full => "full",
        }
    }

    fn code(self) -> u32 {
        match self {
            Variant::Local => 0,
            Variant::Full => 1,
        }
    }

    fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Variant::Local),
            1 => Ok(Variant::Full),
            other => Err(Error::InvalidSpec(format!("unknown variant code {other}"))),
        }
    }
}

/// Architecture hyperparameters. Everything about layer shapes follows from
/// these six fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelSpec {
    pub variant: Variant,
    pub horizon: usize,
    pub residual_blocks: usize,
    pub hidden_channels: usize,
    pub mixtures: usize,
    pub color_channels: usize,
}

/// Shape of one convolution in the canonical layer order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub mask: MaskKind,
}

impl LayerShape {
    pub fn weight_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    pub fn parameter_count(&self) -> usize {
        self.weight_count() + self.out_channels
    }
}

impl ModelSpec {
    pub fn local(horizon: usize, residual_blocks: usize, hidden_channels: usize, mixtures: usize, color_channels: usize) -> Self {
        Self {
            variant: Variant::Local,
            horizon,
            residual_blocks,
            hidden_channels,
            mixtures,
            color_channels,
        }
    }

    pub fn full(horizon: usize, residual_blocks: usize, hidden_channels: usize, mixtures: usize, color_channels: usize) -> Self {
        Self {
            variant: Variant::Full,
            ..Self::local(horizon, residual_blocks, hidden_channels, mixtures, color_channels)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidSpec("horizon must be positive".into()));
        }
        if self.hidden_channels == 0 || self.mixtures == 0 {
            return Err(Error::InvalidSpec("hidden channels and mixtures must be positive".into()));
        }
        if self.color_channels != 1 && self.color_channels != 3 {
            return Err(Error::InvalidSpec(format!(
                "color channels must be 1 or 3, got {}",
                self.color_channels
            )));
        }
        // Guard the serialized u32 fields and absurd allocations.
        if self.horizon > 64 || self.residual_blocks > 1024 || self.hidden_channels > 1 << 14 || self.mixtures > 1024 {
            return Err(Error::InvalidSpec("hyperparameter out of supported range".into()));
        }
        Ok(())
    }

    /// First-layer kernel size `2h + 1`.
    pub fn kernel_size(&self) -> usize {
        2 * self.horizon + 1
    }

    /// `3K` for grayscale; `10K` for color (logit, 3 means, 3 log-scales,
    /// 3 coupling coefficients per component).
    pub fn output_channels(&self) -> usize {
        match self.color_channels {
            1 => 3 * self.mixtures,
            _ => 10 * self.mixtures,
        }
    }

    pub fn layer_shapes(&self) -> Vec<LayerShape> {
        let hid = self.hidden_channels;
        let hidden = |kernel| LayerShape {
            out_channels: hid,
            in_channels: hid,
            kernel,
            mask: MaskKind::B,
        };
        let middle = match self.variant {
            Variant::Local => 1,
            Variant::Full => 3,
        };
        let mut shapes = vec![LayerShape {
            out_channels: hid,
            in_channels: self.color_channels,
            kernel: self.kernel_size(),
            mask: MaskKind::A,
        }];
        for _ in 0..self.residual_blocks {
            shapes.extend([hidden(1), hidden(middle), hidden(1)]);
        }
        shapes.push(hidden(1));
        shapes.push(LayerShape {
            out_channels: self.output_channels(),
            ..hidden(1)
        });
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(LayerShape::parameter_count).sum()
    }

    /// Size in bytes of the serialized weight file.
    pub fn weight_file_size(&self) -> usize {
        HEADER_LEN + 4 * self.parameter_count()
    }
}

const HEADER_LEN: usize = 4 + 1 + 6 * 4;

/// Architecture plus parameters, in the canonical layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    spec: ModelSpec,
    layers: Vec<ConvKernel>,
}

impl WeightBundle {
    pub fn new(spec: ModelSpec, layers: Vec<ConvKernel>) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.layer_shapes();
        if layers.len() != shapes.len() {
            return Err(Error::DimensionMismatch {
                axis: "layer count",
                expected: shapes.len(),
                actual: layers.len(),
            });
        }
        for (idx, (layer, shape)) in layers.iter().zip(&shapes).enumerate() {
            let matches = layer.out_channels() == shape.out_channels
                && layer.in_channels() == shape.in_channels
                && layer.size() == shape.kernel
                && layer.mask() == shape.mask;
            if !matches {
                return Err(Error::ShapeMismatch {
                    layer: idx,
                    expected: shape.parameter_count(),
                    found: layer.weights().len() + layer.bias().len(),
                });
            }
        }
        Ok(Self { spec, layers })
    }

    /// All parameters zero.
    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_shapes()
            .iter()
            .map(|s| ConvKernel::zeros(s.out_channels, s.in_channels, s.kernel, s.mask))
            .collect();
        Self::new(spec, layers)
    }

    /// Uniform fan-in scaled initialization from a seed.
    pub fn random(spec: ModelSpec, seed: u64) -> Result<Self> {
        let mut bundle = Self::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut bundle.layers {
            let fan_in = (layer.in_channels() * layer.size() * layer.size()) as f32;
            let bound = (3.0 / fan_in).sqrt();
            for w in layer.weights_mut() {
                *w = rng.gen_range(-bound..bound);
            }
            for b in layer.bias_mut() {
                *b = rng.gen_range(-0.1..0.1);
            }
        }
        Ok(bundle)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[ConvKernel] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvKernel] {
        &mut self.layers
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let s = &self.spec;
        let mut out = Vec::with_capacity(s.weight_file_size());
        out.extend_from_slice(&WEIGHT_MAGIC);
        out.push(WEIGHT_VERSION);
        for field in [
            s.variant.code(),
            s.horizon as u32,
            s.residual_blocks as u32,
            s.hidden_channels as u32,
            s.mixtures as u32,
            s.color_channels as u32,
        ] {
            out.extend_from_slice(&field.to_le_bytes());
        }
        for layer in &self.layers {
            for v in layer.weights().iter().chain(layer.bias()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || bytes[..4] != WEIGHT_MAGIC {
            return Err(Error::BadMagic {
                expected: WEIGHT_MAGIC,
                found: bytes[..bytes.len().min(4)].to_vec(),
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated("weight file header"));
        }
        if bytes[4] != WEIGHT_VERSION {
            return Err(Error::UnsupportedVersion(bytes[4]));
        }
        let field = |k: usize| {
            let at = 5 + 4 * k;
            u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
        };
        let spec = ModelSpec {
            variant: Variant::from_code(field(0))?,
            horizon: field(1) as usize,
            residual_blocks: field(2) as usize,
            hidden_channels: field(3) as usize,
            mixtures: field(4) as usize,
            color_channels: field(5) as usize,
        };
        spec.validate()?;

        let mut pos = HEADER_LEN;
        let mut layers = Vec::new();
        for (idx, shape) in spec.layer_shapes().iter().enumerate() {
            let need = 4 * shape.parameter_count();
            let available = bytes.len() - pos;
            if available < need {
                return Err(Error::ShapeMismatch {
                    layer: idx,
                    expected: shape.parameter_count(),
                    found: available / 4,
                });
            }
            let mut floats = bytes[pos..pos + need]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
            let weights: Vec<f32> = floats.by_ref().take(shape.weight_count()).collect();
            let bias: Vec<f32> = floats.collect();
            layers.push(ConvKernel::new(
                shape.out_channels,
                shape.in_channels,
                shape.kernel,
                weights,
                bias,
                shape.mask,
            )?);
            pos += need;
        }
        if pos != bytes.len() {
            return Err(Error::TrailingBytes(bytes.len() - pos));
        }
        Self::new(spec, layers)
    }

    /// First 8 bytes (big-endian) of the SHA-256 of the serialized file.
    pub fn fingerprint(&self) -> u64 {
        fingerprint_bytes(&self.to_bytes())
    }
}

pub fn fingerprint_bytes(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_be_bytes(digest[..8].try_into().unwrap())
}

/// Network outputs for one pixel.
///
/// Raw layout, with `K` mixtures and `C` color channels:
/// `[logits (K) | means (C·K) | log-scales (C·K) | coupling (3K, color only)]`.
/// Coupling coefficients are ordered g←r, b←r, b←g.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    mixtures: usize,
    channels: usize,
    raw: Vec<f32>,
}

impl MixtureParams {
    pub fn from_raw(mixtures: usize, channels: usize, raw: Vec<f32>) -> Result<Self> {
        let expected = if channels == 1 { 3 * mixtures } else { 10 * mixtures };
        if raw.len() != expected {
            return Err(Error::DimensionMismatch {
                axis: "mixture parameters",
                expected,
                actual: raw.len(),
            });
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mixture parameters"));
        }
        Ok(Self { mixtures, channels, raw })
    }

    /// A single-component distribution with the same location and log-scale
    /// on every channel and no coupling.
    pub fn single(channels: usize, mean: f32, log_scale: f32) -> Self {
        let mut raw = vec![0.0; if channels == 1 { 3 } else { 10 }];
        for c in 0..channels {
            raw[1 + c] = mean;
            raw[1 + channels + c] = log_scale;
        }
        Self { mixtures: 1, channels, raw }
    }

    pub fn mixtures(&self) -> usize {
        self.mixtures
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn raw(&self) -> &[f32] {
        &self.raw
    }

    pub fn logit(&self, k: usize) -> f64 {
        self.raw[k] as f64
    }

    pub fn mean(&self, channel: usize, k: usize) -> f64 {
        self.raw[self.mixtures * (1 + channel) + k] as f64
    }

    /// Clamped below at [`MIN_LOG_SCALE`].
    pub fn log_scale(&self, channel: usize, k: usize) -> f64 {
        (self.raw[self.mixtures * (1 + self.channels + channel) + k] as f64).max(MIN_LOG_SCALE)
    }

    /// `tanh` of coupling coefficient `which` (0: g←r, 1: b←r, 2: b←g).
    pub fn coupling(&self, which: usize, k: usize) -> f64 {
        if self.channels == 1 {
            return 0.0;
        }
        (self.raw[self.mixtures * (1 + 2 * self.channels + which) + k] as f64).tanh()
    }

    /// Softmax of the logits.
    pub fn weights(&self) -> Vec<f64> {
        let logits: Vec<f64> = (0..self.mixtures).map(|k| self.logit(k)).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }
}

/// Mixture parameters for every pixel of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    height: usize,
    width: usize,
    mixtures: usize,
    channels: usize,
    stride: usize,
    raw: Vec<f32>,
}

impl ParamGrid {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn raw_at(&self, i: usize, j: usize) -> &[f32] {
        let at = (i * self.width + j) * self.stride;
        &self.raw[at..at + self.stride]
    }

    pub fn at(&self, i: usize, j: usize) -> MixtureParams {
        MixtureParams {
            mixtures: self.mixtures,
            channels: self.channels,
            raw: self.raw_at(i, j).to_vec(),
        }
    }
}

/// Read access to 8-bit pixels, used to assemble causal windows.
pub trait PixelSource {
    fn height(&self) -> usize;
    fn width(&self) -> usize;
    fn channels(&self) -> usize;
    fn read(&self, i: usize, j: usize, c: usize) -> u8;
}

impl PixelSource for ImageTensor {
    fn height(&self) -> usize {
        ImageTensor::height(self)
    }

    fn width(&self) -> usize {
        ImageTensor::width(self)
    }

    fn channels(&self) -> usize {
        ImageTensor::channels(self)
    }

    fn read(&self, i: usize, j: usize, c: usize) -> u8 {
        self.get(i, j, c)
    }
}

/// Maps an intensity to the network input range `[-1, 1]`.
#[inline]
pub fn rescale(v: u8) -> f32 {
    2.0 * v as f32 / 255.0 - 1.0
}

/// The zero-padded causal neighborhood of one pixel: rows `i-h ..= i`,
/// columns `j-h ..= j+h`, with the current pixel and everything right of it
/// on row `i` left at zero. Values are already rescaled.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalWindow {
    horizon: usize,
    channels: usize,
    values: Vec<f32>,
}

impl CausalWindow {
    pub fn zeros(horizon: usize, channels: usize) -> Self {
        Self {
            horizon,
            channels,
            values: vec![0.0; channels * (horizon + 1) * (2 * horizon + 1)],
        }
    }

    /// Reads exactly the in-image pixels of the causal window of `(i, j)`.
    pub fn gather<S: PixelSource + ?Sized>(source: &S, i: usize, j: usize, horizon: usize) -> Self {
        let mut window = Self::zeros(horizon, source.channels());
        let cols = 2 * horizon + 1;
        for row in 0..=horizon {
            let Some(y) = (i + row).checked_sub(horizon) else { continue };
            if y >= source.height() {
                continue;
            }
            for col in 0..cols {
                if row == horizon && col >= horizon {
                    break;
                }
                let Some(x) = (j + col).checked_sub(horizon) else { continue };
                if x >= source.width() {
                    continue;
                }
                for c in 0..source.channels() {
                    window.values[(c * (horizon + 1) + row) * cols + col] = rescale(source.read(y, x, c));
                }
            }
        }
        window
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    fn value(&self, c: usize, row: usize, col: usize) -> f32 {
        let cols = 2 * self.horizon + 1;
        self.values[(c * (self.horizon + 1) + row) * cols + col]
    }
}

/// A [`WeightBundle`] prepared for evaluation.
#[derive(Debug, Clone)]
pub struct Model {
    bundle: WeightBundle,
    layers: Vec<MaskedTaps>,
    fingerprint: u64,
}

impl Model {
    pub fn new(bundle: WeightBundle) -> Self {
        let layers = bundle.layers.iter().map(ConvKernel::taps).collect();
        let fingerprint = bundle.fingerprint();
        Self {
            bundle,
            layers,
            fingerprint,
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Ok(Self::new(WeightBundle::from_bytes(bytes)?))
    }

    pub fn bundle(&self) -> &WeightBundle {
        &self.bundle
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.bundle.spec
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn check_channels(&self, channels: usize) -> Result<()> {
        if channels != self.spec().color_channels {
            return Err(Error::DimensionMismatch {
                axis: "image channels",
                expected: self.spec().color_channels,
                actual: channels,
            });
        }
        Ok(())
    }

    /// Teacher-forced evaluation of every pixel's mixture parameters.
    pub fn forward(&self, image: &ImageTensor) -> Result<ParamGrid> {
        self.check_channels(image.channels())?;
        let (height, width, channels) = (image.height(), image.width(), image.channels());
        let mut input = Tensor4::zeros([1, channels, height, width]);
        for i in 0..height {
            for j in 0..width {
                for c in 0..channels {
                    input.set(0, c, i, j, rescale(image.get(i, j, c)));
                }
            }
        }
        let out = self.forward_tensor(&input)?;
        if !out.is_finite() {
            return Err(Error::NonFinite("network output"));
        }
        let stride = self.spec().output_channels();
        let plane = height * width;
        let mut raw = vec![0.0; plane * stride];
        for (o, chunk) in out.data().chunks_exact(plane).enumerate() {
            for (p, &v) in chunk.iter().enumerate() {
                raw[p * stride + o] = v;
            }
        }
        Ok(ParamGrid {
            height,
            width,
            mixtures: self.spec().mixtures,
            channels,
            stride,
            raw,
        })
    }

    fn forward_tensor(&self, input: &Tensor4) -> Result<Tensor4> {
        let blocks = self.spec().residual_blocks;
        let mut h = self.layers[0].apply(input)?;
        relu(&mut h);
        for b in 0..blocks {
            let mut t = h.clone();
            for layer in &self.layers[1 + 3 * b..4 + 3 * b] {
                t = layer.apply(&t)?;
                relu(&mut t);
            }
            h = crate::nn::add(&h, &t)?;
        }
        let n = self.layers.len();
        h = self.layers[n - 2].apply(&h)?;
        relu(&mut h);
        self.layers[n - 1].apply(&h)
    }

    /// Mixture parameters of the pixel whose causal window is `window`.
    /// Produces exactly the same bits as the corresponding entry of
    /// [`Model::forward`].
    pub fn conditional_params(&self, window: &CausalWindow) -> Result<MixtureParams> {
        let spec = self.spec();
        if spec.variant != Variant::Local {
            return Err(Error::UnsupportedVariant {
                expected: Variant::Local.name(),
                actual: spec.variant.name(),
            });
        }
        if window.horizon != spec.horizon {
            return Err(Error::DimensionMismatch {
                axis: "window horizon",
                expected: spec.horizon,
                actual: window.horizon,
            });
        }
        self.check_channels(window.channels)?;

        let first = &self.layers[0];
        let mut h: Vec<f32> = (0..first.out_channels())
            .map(|o| first.accumulate(o, |c, row, col| window.value(c, row, col)).max(0.0))
            .collect();
        for b in 0..spec.residual_blocks {
            let mut t = h.clone();
            for layer in &self.layers[1 + 3 * b..4 + 3 * b] {
                t = pointwise(layer, &t);
                t.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            for (x, y) in h.iter_mut().zip(&t) {
                *x += y;
            }
        }
        let n = self.layers.len();
        let mut t = pointwise(&self.layers[n - 2], &h);
        t.iter_mut().for_each(|v| *v = v.max(0.0));
        let out = pointwise(&self.layers[n - 1], &t);
        MixtureParams::from_raw(spec.mixtures, spec.color_channels, out)
    }

    /// Raster-order ancestral sampling, deterministic in `seed`.
    pub fn sample(&self, height: usize, width: usize, seed: u64) -> Result<ImageTensor> {
        let channels = self.spec().color_channels;
        let mut image = ImageTensor::filled(height, width, channels, 0)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut prior = Vec::with_capacity(3);
        for i in 0..height {
            for j in 0..width {
                let params = match self.spec().variant {
                    Variant::Local => {
                        self.conditional_params(&CausalWindow::gather(&image, i, j, self.spec().horizon))?
                    }
                    // Future pixels are still zero and cannot influence (i, j).
                    Variant::Full => self.forward(&image)?.at(i, j),
                };
                prior.clear();
                for c in 0..channels {
                    let eval = mixture::mixture_pmf(&params, c, &prior)?;
                    let v = eval.sample(rng.gen::<f64>());
                    image.set(i, j, c, v);
                    prior.push(v);
                }
            }
        }
        Ok(image)
    }
}

fn relu(t: &mut Tensor4) {
    crate::nn::relu_in_place(t);
}

/// A 1×1 convolution at a single position, with the same summation order as
/// [`MaskedTaps::apply`].
fn pointwise(layer: &MaskedTaps, input: &[f32]) -> Vec<f32> {
    (0..layer.out_channels())
        .map(|o| layer.accumulate(o, |c, _, _| input[c]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(h: usize, w: usize, c: usize, seed: u64) -> ImageTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageTensor::new(h, w, c, (0..h * w * c).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn output_channels_follow_mixture_count() {
        assert_eq!(ModelSpec::local(3, 0, 256, 10, 1).output_channels(), 30);
        assert_eq!(ModelSpec::local(3, 0, 256, 10, 3).output_channels(), 100);
        assert_eq!(ModelSpec::local(3, 0, 8, 10, 3).kernel_size(), 7);
    }

    #[test]
    fn local_blocks_are_pointwise_full_blocks_are_not() {
        let local = ModelSpec::local(2, 2, 8, 2, 1).layer_shapes();
        assert_eq!(local.len(), 1 + 6 + 2);
        assert!(local[1..].iter().all(|s| s.kernel == 1 && s.mask == MaskKind::B));
        let full = ModelSpec::full(2, 2, 8, 2, 1).layer_shapes();
        let kernels: Vec<usize> = full.iter().map(|s| s.kernel).collect();
        assert_eq!(kernels, vec![5, 1, 3, 1, 1, 3, 1, 1, 1]);
        assert_eq!(full[0].mask, MaskKind::A);
    }

    #[test]
    fn serialized_sizes_track_reported_model_sizes() {
        // Reference sizes: 0.49 MB (r=0) and 2.75 MB (r=3) for h=3, 256 channels, color.
        let mib = |r| ModelSpec::local(3, r, 256, 10, 3).weight_file_size() as f64 / (1u64 << 20) as f64;
        assert!((mib(0) / 0.49 - 1.0).abs() < 0.05, "{}", mib(0));
        assert!((mib(3) / 2.75 - 1.0).abs() < 0.05, "{}", mib(3));
        // Each residual block adds three 256x256 pointwise convolutions.
        let per_block = ModelSpec::local(3, 1, 256, 10, 3).parameter_count()
            - ModelSpec::local(3, 0, 256, 10, 3).parameter_count();
        assert_eq!(per_block, 3 * (256 * 256 + 256));
    }

    #[test]
    fn zero_weight_model_is_constant() {
        let model = Model::new(WeightBundle::zeros(ModelSpec::local(2, 1, 4, 3, 3)).unwrap());
        let grid = model.forward(&random_image(5, 4, 3, 1)).unwrap();
        let first = grid.raw_at(0, 0).to_vec();
        for i in 0..5 {
            for j in 0..4 {
                assert_eq!(grid.raw_at(i, j), &first[..]);
            }
        }
    }

    #[test]
    fn weight_roundtrip_and_errors() {
        let bundle = WeightBundle::random(ModelSpec::full(1, 1, 4, 2, 3), 9).unwrap();
        let bytes = bundle.to_bytes();
        assert_eq!(bytes.len(), bundle.spec().weight_file_size());
        assert_eq!(WeightBundle::from_bytes(&bytes).unwrap(), bundle);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(WeightBundle::from_bytes(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[4] = 7;
        assert_eq!(WeightBundle::from_bytes(&bad), Err(Error::UnsupportedVersion(7)));
        assert_eq!(WeightBundle::from_bytes(&bytes[..10]), Err(Error::Truncated("weight file header")));
        assert!(matches!(
            WeightBundle::from_bytes(&bytes[..bytes.len() - 4]),
            Err(Error::ShapeMismatch { .. })
        ));
        let mut long = bytes.clone();
        long.extend_from_slice(&[0; 4]);
        assert_eq!(WeightBundle::from_bytes(&long), Err(Error::TrailingBytes(4)));
    }

    #[test]
    fn new_rejects_wrong_layer_shapes() {
        let spec = ModelSpec::local(1, 0, 4, 2, 1);
        let mut layers = WeightBundle::zeros(spec).unwrap().layers().to_vec();
        layers[1] = ConvKernel::zeros(4, 4, 3, MaskKind::B);
        assert!(matches!(WeightBundle::new(spec, layers), Err(Error::ShapeMismatch { layer: 1, .. })));
    }

    #[test]
    fn forward_is_causal_to_the_right() {
        let model = Model::new(WeightBundle::random(ModelSpec::local(2, 1, 8, 2, 3), 3).unwrap());
        let img = random_image(6, 6, 3, 2);
        let base = model.forward(&img).unwrap();
        let mut tweaked = img.clone();
        tweaked.set(3, 4, 0, img.get(3, 4, 0).wrapping_add(100));
        let grid = model.forward(&tweaked).unwrap();
        assert_eq!(grid.raw_at(3, 3), base.raw_at(3, 3));
        assert_ne!(grid.raw_at(3, 5), base.raw_at(3, 5));
    }

    #[test]
    fn conditional_matches_forward_bitwise() {
        for (spec, seed) in [
            (ModelSpec::local(1, 0, 6, 2, 1), 1),
            (ModelSpec::local(2, 2, 8, 3, 3), 2),
            (ModelSpec::local(3, 1, 5, 2, 3), 3),
        ] {
            let model = Model::new(WeightBundle::random(spec, seed).unwrap());
            let img = random_image(7, 9, spec.color_channels, seed + 10);
            let grid = model.forward(&img).unwrap();
            for i in 0..7 {
                for j in 0..9 {
                    let p = model
                        .conditional_params(&CausalWindow::gather(&img, i, j, spec.horizon))
                        .unwrap();
                    let a: Vec<u32> = p.raw().iter().map(|v| v.to_bits()).collect();
                    let b: Vec<u32> = grid.raw_at(i, j).iter().map(|v| v.to_bits()).collect();
                    assert_eq!(a, b, "pixel ({i}, {j})");
                }
            }
        }
    }

    #[test]
    fn conditional_on_zero_context() {
        let spec = ModelSpec::local(2, 1, 6, 2, 1);
        let model = Model::new(WeightBundle::random(spec, 5).unwrap());
        let zeros = ImageTensor::filled(4, 4, 1, 0).unwrap();
        let corner = model.conditional_params(&CausalWindow::zeros(2, 1)).unwrap();
        assert_eq!(corner.raw(), model.forward(&zeros).unwrap().raw_at(0, 0));
        // A 1x1 image gives the all-padding window regardless of its value.
        let single = ImageTensor::filled(1, 1, 1, 200).unwrap();
        assert_eq!(CausalWindow::gather(&single, 0, 0, 2), CausalWindow::zeros(2, 1));
    }

    #[test]
    fn conditional_rejects_full_variant() {
        let model = Model::new(WeightBundle::random(ModelSpec::full(1, 1, 4, 2, 1), 1).unwrap());
        assert!(matches!(
            model.conditional_params(&CausalWindow::zeros(1, 1)),
            Err(Error::UnsupportedVariant { .. })
        ));
    }

    #[test]
    fn non_finite_weights_are_reported() {
        let mut bundle = WeightBundle::zeros(ModelSpec::local(1, 0, 2, 1, 1)).unwrap();
        let n = bundle.layers().len();
        bundle.layers_mut()[n - 1].bias_mut()[0] = f32::NAN;
        let model = Model::new(bundle);
        assert_eq!(
            model.forward(&ImageTensor::filled(2, 2, 1, 0).unwrap()),
            Err(Error::NonFinite("network output"))
        );
        assert_eq!(
            model.conditional_params(&CausalWindow::zeros(1, 1)),
            Err(Error::NonFinite("mixture parameters"))
        );
    }

    #[test]
    fn sampling_is_deterministic() {
        let model = Model::new(WeightBundle::random(ModelSpec::local(1, 1, 6, 2, 3), 4).unwrap());
        let a = model.sample(6, 5, 42).unwrap();
        assert_eq!(a, model.sample(6, 5, 42).unwrap());
        assert_ne!(a, model.sample(6, 5, 43).unwrap());
        let full = Model::new(WeightBundle::random(ModelSpec::full(1, 1, 4, 2, 1), 4).unwrap());
        assert_eq!(full.sample(4, 4, 1).unwrap(), full.sample(4, 4, 1).unwrap());
    }

    #[test]
    fn point_mass_model_samples_constant_image() {
        // Zero weights; the final bias puts the single component far above the
        // top bin, which absorbs the whole logistic tail.
        let spec = ModelSpec::local(1, 0, 2, 1, 1);
        let mut bundle = WeightBundle::zeros(spec).unwrap();
        let n = bundle.layers().len();
        let bias = bundle.layers_mut()[n - 1].bias_mut();
        bias[1] = 5.0;
        bias[2] = -7.0;
        let model = Model::new(bundle);
        let img = model.sample(10, 10, 7).unwrap();
        assert!(img.values().iter().all(|&v| v == 255));
    }
}
