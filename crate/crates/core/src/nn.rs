//! Dense CPU tensor operations used to evaluate the masked convolutional
//! networks.
//!
//! Everything here is `f32` with a fixed accumulation order (input channel,
//! then kernel row, then kernel column) so that an encoder and a decoder
//! built from the same binary compute bit-identical activations.

use crate::error::{Error, Result};

/// A dense `(batch, channels, height, width)` tensor stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f32>,
}

impl Tensor4 {
    pub fn new(dims: [usize; 4], data: Vec<f32>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                axis: "data length",
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    pub fn height(&self) -> usize {
        self.dims[2]
    }

    pub fn width(&self) -> usize {
        self.dims[3]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, b: usize, c: usize, i: usize, j: usize) -> usize {
        let [_, ch, h, w] = self.dims;
        ((b * ch + c) * h + i) * w + j
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, i: usize, j: usize) -> f32 {
        self.data[self.index(b, c, i, j)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, i: usize, j: usize, value: f32) {
        let idx = self.index(b, c, i, j);
        self.data[idx] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Which kernel taps a masked convolution may read.
///
/// Masks are spatial: they act on every input/output channel pair alike.
/// Channel ordering inside a pixel is handled by the mixture's coupling
/// coefficients, so the network never sees any channel of the current pixel
/// through a mask-A layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    /// Rows above the center, plus the center row strictly left of center.
    A,
    /// Mask A plus the center tap itself.
    B,
    /// Every tap.
    None,
}

impl MaskKind {
    /// Whether tap `(row, col)` of a `size`×`size` kernel survives the mask.
    pub fn allows(self, size: usize, row: usize, col: usize) -> bool {
        let center = size / 2;
        match self {
            MaskKind::None => true,
            MaskKind::A => row < center || (row == center && col < center),
            MaskKind::B => row < center || (row == center && col <= center),
        }
    }
}

/// Convolution parameters: weights `(out, in, k, k)`, bias `(out)`, and a mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    out_channels: usize,
    in_channels: usize,
    size: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
    mask: MaskKind,
}

impl ConvKernel {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        size: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
        mask: MaskKind,
    ) -> Result<Self> {
        if size.is_multiple_of(2) {
            return Err(Error::InvalidSpec(format!("kernel size {size} is not odd")));
        }
        let expected = out_channels * in_channels * size * size;
        if weights.len() != expected {
            return Err(Error::DimensionMismatch {
                axis: "kernel weights",
                expected,
                actual: weights.len(),
            });
        }
        if bias.len() != out_channels {
            return Err(Error::DimensionMismatch {
                axis: "kernel bias",
                expected: out_channels,
                actual: bias.len(),
            });
        }
        Ok(Self {
            out_channels,
            in_channels,
            size,
            weights,
            bias,
            mask,
        })
    }

    pub fn zeros(out_channels: usize, in_channels: usize, size: usize, mask: MaskKind) -> Self {
        Self {
            out_channels,
            in_channels,
            size,
            weights: vec![0.0; out_channels * in_channels * size * size],
            bias: vec![0.0; out_channels],
            mask,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn mask(&self) -> MaskKind {
        self.mask
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f32] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f32] {
        &mut self.bias
    }

    #[inline]
    pub fn weight(&self, o: usize, c: usize, row: usize, col: usize) -> f32 {
        self.weights[((o * self.in_channels + c) * self.size + row) * self.size + col]
    }

    pub(crate) fn taps(&self) -> MaskedTaps {
        let per_output = (0..self.out_channels)
            .map(|o| {
                let mut taps = Vec::new();
                for c in 0..self.in_channels {
                    for row in 0..self.size {
                        for col in 0..self.size {
                            if self.mask.allows(self.size, row, col) {
                                taps.push(Tap {
                                    channel: c,
                                    row,
                                    col,
                                    weight: self.weight(o, c, row, col),
                                });
                            }
                        }
                    }
                }
                taps
            })
            .collect();
        MaskedTaps {
            size: self.size,
            in_channels: self.in_channels,
            bias: self.bias.clone(),
            per_output,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Tap {
    pub channel: usize,
    pub row: usize,
    pub col: usize,
    pub weight: f32,
}

/// A kernel with masked-out taps removed, in accumulation order.
#[derive(Debug, Clone)]
pub(crate) struct MaskedTaps {
    pub size: usize,
    pub in_channels: usize,
    pub bias: Vec<f32>,
    pub per_output: Vec<Vec<Tap>>,
}

impl MaskedTaps {
    pub fn out_channels(&self) -> usize {
        self.per_output.len()
    }

    /// One output value. `fetch(channel, row, col)` reads the zero-padded
    /// input in kernel coordinates. This is the only place a convolution sum
    /// is formed, so every caller gets the same rounding.
    #[inline]
    pub fn accumulate(&self, o: usize, fetch: impl Fn(usize, usize, usize) -> f32) -> f32 {
        let mut acc = self.bias[o];
        for tap in &self.per_output[o] {
            acc += tap.weight * fetch(tap.channel, tap.row, tap.col);
        }
        acc
    }

    pub fn apply(&self, input: &Tensor4) -> Result<Tensor4> {
        if input.channels() != self.in_channels {
            return Err(Error::DimensionMismatch {
                axis: "input channels",
                expected: self.in_channels,
                actual: input.channels(),
            });
        }
        let [batch, channels, height, width] = input.dims();
        let pad = (self.size - 1) / 2;
        let padded = zero_pad(input, pad);
        let (ph, pw) = (height + 2 * pad, width + 2 * pad);
        let src = padded.data();
        let mut out = Tensor4::zeros([batch, self.out_channels(), height, width]);
        let dst = out.data_mut();
        let mut k = 0;
        for b in 0..batch {
            for o in 0..self.out_channels() {
                for i in 0..height {
                    for j in 0..width {
                        dst[k] = self.accumulate(o, |c, row, col| {
                            src[((b * channels + c) * ph + i + row) * pw + j + col]
                        });
                        k += 1;
                    }
                }
            }
        }
        Ok(out)
    }
}

fn zero_pad(input: &Tensor4, pad: usize) -> Tensor4 {
    if pad == 0 {
        return input.clone();
    }
    let [batch, channels, height, width] = input.dims();
    let mut out = Tensor4::zeros([batch, channels, height + 2 * pad, width + 2 * pad]);
    for b in 0..batch {
        for c in 0..channels {
            for i in 0..height {
                let src = input.index(b, c, i, 0);
                let dst = out.index(b, c, i + pad, pad);
                out.data[dst..dst + width].copy_from_slice(&input.data[src..src + width]);
            }
        }
    }
    out
}

/// Same-size masked 2-D convolution with zero padding of `(k - 1) / 2`.
pub fn conv2d_masked(input: &Tensor4, kernel: &ConvKernel) -> Result<Tensor4> {
    if input.channels() != kernel.in_channels {
        return Err(Error::DimensionMismatch {
            axis: "input channels",
            expected: kernel.in_channels,
            actual: input.channels(),
        });
    }
    kernel.taps().apply(input)
}

pub fn relu(input: &Tensor4) -> Tensor4 {
    let mut out = input.clone();
    relu_in_place(&mut out);
    out
}

pub fn relu_in_place(t: &mut Tensor4) {
    for v in t.data_mut() {
        *v = v.max(0.0);
    }
}

pub fn add(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
    check_same_dims(a, b)?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
    Ok(Tensor4 { dims: a.dims, data })
}

fn check_same_dims(a: &Tensor4, b: &Tensor4) -> Result<()> {
    const AXES: [&str; 4] = ["batch", "channels", "height", "width"];
    for (axis, (&x, &y)) in AXES.iter().zip(a.dims.iter().zip(&b.dims)) {
        if x != y {
            return Err(Error::DimensionMismatch {
                axis,
                expected: x,
                actual: y,
            });
        }
    }
    Ok(())
}
