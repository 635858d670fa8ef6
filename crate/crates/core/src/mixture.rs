//! Discretized logistic-uniform mixture over the 256 intensity levels, and
//! its quantization to integer frequency tables for the entropy coders.
//!
//! Bin `v` covers `[x - 1/255, x + 1/255]` with `x = 2v/255 - 1`; the end bins
//! absorb the tails. The mixture puts weight `1 - α` on the logistics and
//! `α` on a discrete uniform, which bounds every probability below by
//! `α / 256`.

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::model::{Model, MixtureParams, ParamGrid};

/// Weight of the uniform component.
pub const ALPHA: f64 = 1e-4;
pub const PRECISION_BITS: u32 = 16;
/// Sum of every [`QuantizedPmf`].
pub const TOTAL: u32 = 1 << PRECISION_BITS;

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Logistic CDF at a bin edge.
pub fn discretized_logistic_cdf(u: f64, mean: f64, scale: f64) -> f64 {
    sigmoid((u - mean) / scale)
}

/// Upper edge of bin `v`, for `v` in `0..255`.
#[inline]
fn upper_edge(v: usize) -> f64 {
    (2 * v + 1) as f64 / 255.0 - 1.0
}

#[inline]
pub fn intensity_to_unit(v: u8) -> f64 {
    2.0 * v as f64 / 255.0 - 1.0
}

/// A normalized 256-bin distribution and its natural log.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureEval {
    pub pmf: [f64; 256],
    pub logpmf: [f64; 256],
}

impl MixtureEval {
    pub fn from_pmf(pmf: [f64; 256]) -> Self {
        let mut logpmf = [0.0; 256];
        for (l, p) in logpmf.iter_mut().zip(&pmf) {
            *l = p.ln();
        }
        Self { pmf, logpmf }
    }

    pub fn bits(&self, v: u8) -> f64 {
        -self.pmf[v as usize].log2()
    }

    /// Inverse-CDF draw for `u` in `[0, 1)`.
    pub fn sample(&self, u: f64) -> u8 {
        let mut acc = 0.0;
        for (v, p) in self.pmf.iter().enumerate() {
            acc += p;
            if u < acc {
                return v as u8;
            }
        }
        255
    }
}

/// Predictive distribution of `channel` given the already known values of the
/// earlier channels of the same pixel (`prior`, in channel order).
pub fn mixture_pmf(params: &MixtureParams, channel: usize, prior: &[u8]) -> Result<MixtureEval> {
    mixture_pmf_with_alpha(params, channel, prior, ALPHA)
}

pub fn mixture_pmf_with_alpha(params: &MixtureParams, channel: usize, prior: &[u8], alpha: f64) -> Result<MixtureEval> {
    if channel >= params.channels() {
        return Err(Error::DimensionMismatch {
            axis: "channel",
            expected: params.channels(),
            actual: channel,
        });
    }
    if prior.len() < channel {
        return Err(Error::DimensionMismatch {
            axis: "prior channels",
            expected: channel,
            actual: prior.len(),
        });
    }
    let weights = params.weights();
    let mut mass = [0.0f64; 256];
    for (k, &w) in weights.iter().enumerate() {
        let mut mean = params.mean(channel, k);
        match channel {
            1 => mean += params.coupling(0, k) * intensity_to_unit(prior[0]),
            2 => {
                mean += params.coupling(1, k) * intensity_to_unit(prior[0])
                    + params.coupling(2, k) * intensity_to_unit(prior[1])
            }
            _ => {}
        }
        let inv_scale = (-params.log_scale(channel, k)).exp();
        let mut below = 0.0;
        for (v, m) in mass.iter_mut().enumerate().take(255) {
            let cdf = sigmoid((upper_edge(v) - mean) * inv_scale);
            *m += w * (cdf - below);
            below = cdf;
        }
        mass[255] += w * (1.0 - below);
    }
    let floor = alpha / 256.0;
    let mut pmf = [0.0; 256];
    for (p, m) in pmf.iter_mut().zip(&mass) {
        *p = (1.0 - alpha) * m + floor;
    }
    if pmf.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("mixture probabilities"));
    }
    Ok(MixtureEval::from_pmf(pmf))
}

/// Integer frequencies over 256 symbols summing to [`TOTAL`], each at least 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedPmf {
    freqs: [u32; 256],
    cumulative: [u32; 257],
}

impl QuantizedPmf {
    pub fn from_freqs(freqs: [u32; 256]) -> Result<Self> {
        if let Some(v) = freqs.iter().position(|&f| f == 0) {
            return Err(Error::InvalidPmf(format!("symbol {v} has zero frequency")));
        }
        let sum: u64 = freqs.iter().map(|&f| f as u64).sum();
        if sum != TOTAL as u64 {
            return Err(Error::InvalidPmf(format!("frequencies sum to {sum}, expected {TOTAL}")));
        }
        let mut cumulative = [0u32; 257];
        for v in 0..256 {
            cumulative[v + 1] = cumulative[v] + freqs[v];
        }
        Ok(Self { freqs, cumulative })
    }

    pub fn uniform() -> Self {
        Self::from_freqs([TOTAL / 256; 256]).unwrap()
    }

    pub fn freqs(&self) -> &[u32; 256] {
        &self.freqs
    }

    pub fn cumulative(&self) -> &[u32; 257] {
        &self.cumulative
    }

    #[inline]
    pub fn freq(&self, symbol: u8) -> u32 {
        self.freqs[symbol as usize]
    }

    #[inline]
    pub fn start(&self, symbol: u8) -> u32 {
        self.cumulative[symbol as usize]
    }

    /// Symbol whose interval contains `slot` (`slot < TOTAL`).
    #[inline]
    pub fn symbol_for(&self, slot: u32) -> u8 {
        // Largest v with cumulative[v] <= slot.
        let idx = self.cumulative.partition_point(|&c| c <= slot);
        (idx - 1).min(255) as u8
    }

    /// Codelength of `symbol` under this table, in bits.
    pub fn bits(&self, symbol: u8) -> f64 {
        PRECISION_BITS as f64 - (self.freq(symbol) as f64).log2()
    }
}

/// Rounds `pmf · 2^16` with a floor of 1, then corrects the sum by stepping
/// through the bins from largest to smallest (ties to the lower symbol),
/// adjusting one unit per bin per pass.
pub fn quantize(eval: &MixtureEval) -> QuantizedPmf {
    let scale = TOTAL as f64;
    let mut freqs = [0u32; 256];
    let mut sum: i64 = 0;
    for (f, p) in freqs.iter_mut().zip(&eval.pmf) {
        *f = ((p * scale).round() as u32).max(1);
        sum += *f as i64;
    }
    let mut diff = sum - TOTAL as i64;
    if diff != 0 {
        let mut order: Vec<usize> = (0..256).collect();
        order.sort_by(|&a, &b| freqs[b].cmp(&freqs[a]).then(a.cmp(&b)));
        while diff != 0 {
            for &v in &order {
                if diff > 0 && freqs[v] > 1 {
                    freqs[v] -= 1;
                    diff -= 1;
                } else if diff < 0 {
                    freqs[v] += 1;
                    diff += 1;
                }
                if diff == 0 {
                    break;
                }
            }
        }
    }
    QuantizedPmf::from_freqs(freqs).expect("quantization preserves the total")
}

/// Total negative log2-likelihood of `image` under per-pixel parameters.
pub fn nll_bits(grid: &ParamGrid, image: &ImageTensor) -> Result<f64> {
    nll_bits_with_alpha(grid, image, ALPHA)
}

/// [`nll_bits`] with a different uniform weight; `alpha = 1` is the uniform
/// model.
pub fn nll_bits_with_alpha(grid: &ParamGrid, image: &ImageTensor, alpha: f64) -> Result<f64> {
    if grid.height() != image.height() || grid.width() != image.width() {
        return Err(Error::DimensionMismatch {
            axis: "parameter grid",
            expected: image.height() * image.width(),
            actual: grid.height() * grid.width(),
        });
    }
    let channels = image.channels();
    let mut bits = 0.0;
    let mut prior = Vec::with_capacity(3);
    for i in 0..image.height() {
        for j in 0..image.width() {
            let params = grid.at(i, j);
            prior.clear();
            for c in 0..channels {
                let v = image.get(i, j, c);
                bits += mixture_pmf_with_alpha(&params, c, &prior, alpha)?.bits(v);
                prior.push(v);
            }
        }
    }
    Ok(bits)
}

/// Bits per dimension of `image` under `model`.
pub fn bpd(image: &ImageTensor, model: &Model) -> Result<f64> {
    let grid = model.forward(image)?;
    Ok(nll_bits(&grid, image)? / image.dimension() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelSpec, WeightBundle};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(rng: &mut ChaCha8Rng, mixtures: usize, channels: usize) -> MixtureParams {
        let n = if channels == 1 { 3 * mixtures } else { 10 * mixtures };
        let raw = (0..n).map(|_| rng.gen_range(-3.0f32..3.0)).collect();
        MixtureParams::from_raw(mixtures, channels, raw).unwrap()
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(discretized_logistic_cdf(0.3, 0.3, 0.7), 0.5);
        let v = discretized_logistic_cdf(1.0, 0.0, 1.0);
        assert!((v - 0.731_058_578_630_004_9).abs() < 1e-15);
        let mut last = 0.0;
        for k in -100..=100 {
            let c = discretized_logistic_cdf(k as f64 / 50.0, 0.1, 0.05);
            assert!(c >= last);
            last = c;
        }
    }

    #[test]
    fn pure_uniform_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let eval = mixture_pmf_with_alpha(&random_params(&mut rng, 4, 1), 0, &[], 1.0).unwrap();
        assert!(eval.pmf.iter().all(|&p| p == 1.0 / 256.0));
    }

    #[test]
    fn single_logistic_against_direct_oracle() {
        // Oracle: CDF differences summed independently, with the symmetric
        // form of the sigmoid so each tail is evaluated without cancellation.
        let params = MixtureParams::single(1, 0.0, 0.1f32.ln());
        let eval = mixture_pmf(&params, 0, &[]).unwrap();
        let s = 0.1f32.ln() as f64;
        let s = s.exp();
        let cdf = |u: f64| {
            let z = u / s;
            if z >= 0.0 {
                1.0 / (1.0 + (-z).exp())
            } else {
                let e = z.exp();
                e / (1.0 + e)
            }
        };
        for v in 0..256usize {
            let x = 2.0 * v as f64 / 255.0 - 1.0;
            let lo = if v == 0 { 0.0 } else { cdf(x - 1.0 / 255.0) };
            let hi = if v == 255 { 1.0 } else { cdf(x + 1.0 / 255.0) };
            let expect = (1.0 - ALPHA) * (hi - lo) + ALPHA / 256.0;
            assert!((eval.pmf[v] - expect).abs() < 1e-12, "bin {v}: {} vs {expect}", eval.pmf[v]);
        }
        // Mass is centered on the two bins straddling 0.
        assert!(eval.pmf[127] > 0.009 && (eval.pmf[127] - eval.pmf[128]).abs() < 1e-12);
    }

    #[test]
    fn coupling_shifts_later_channels() {
        let mut raw = vec![0.0f32; 10];
        raw[5] = -3.0; // log-scales
        raw[6] = -3.0;
        raw[7] = 5.0; // g <- r coupling, tanh(5) ~ 1
        raw[4] = -3.0;
        let params = MixtureParams::from_raw(1, 3, raw).unwrap();
        let dark = mixture_pmf(&params, 1, &[0]).unwrap();
        let light = mixture_pmf(&params, 1, &[255]).unwrap();
        let argmax = |e: &MixtureEval| (0..256).max_by(|&a, &b| e.pmf[a].total_cmp(&e.pmf[b])).unwrap();
        assert!(argmax(&dark) < 10 && argmax(&light) > 245);
        assert!(mixture_pmf(&params, 2, &[0]).is_err());
    }

    #[test]
    fn quantize_examples() {
        let uniform = MixtureEval::from_pmf([1.0 / 256.0; 256]);
        assert_eq!(quantize(&uniform), QuantizedPmf::uniform());

        let mut pmf = [ALPHA / 256.0; 256];
        pmf[77] = 1.0 - 255.0 * ALPHA / 256.0;
        let q = quantize(&MixtureEval::from_pmf(pmf));
        assert_eq!(q.freq(77), TOTAL - 255);
        assert!((0..=255u8).filter(|&v| v != 77).all(|v| q.freq(v) == 1));
    }

    #[test]
    fn quantize_random_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let raw: Vec<f64> = (0..256).map(|_| rng.gen::<f64>().powi(8)).collect();
            let total: f64 = raw.iter().sum();
            let mut pmf = [0.0; 256];
            for (p, r) in pmf.iter_mut().zip(&raw) {
                *p = r / total;
            }
            let q = quantize(&MixtureEval::from_pmf(pmf));
            assert_eq!(q.freqs().iter().map(|&f| f as u64).sum::<u64>(), TOTAL as u64);
            assert!(q.freqs().iter().all(|&f| f >= 1));
            assert!(q.cumulative().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn symbol_lookup_inverts_cumulative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = quantize(&mixture_pmf(&random_params(&mut rng, 3, 1), 0, &[]).unwrap());
        for v in 0..=255u8 {
            assert_eq!(q.symbol_for(q.start(v)), v);
            assert_eq!(q.symbol_for(q.start(v) + q.freq(v) - 1), v);
        }
    }

    #[test]
    fn from_freqs_validation() {
        let mut f = [256u32; 256];
        f[3] = 0;
        f[4] = 512;
        assert!(QuantizedPmf::from_freqs(f).is_err());
        let mut f = [256u32; 256];
        f[0] = 257;
        assert!(QuantizedPmf::from_freqs(f).is_err());
    }

    #[test]
    fn uniform_model_has_eight_bpd() {
        let model = Model::new(WeightBundle::random(ModelSpec::local(1, 0, 4, 2, 3), 8).unwrap());
        let img = ImageTensor::new(3, 3, 3, (0..27).map(|v| v * 9 + 3).collect()).unwrap();
        let grid = model.forward(&img).unwrap();
        assert_eq!(nll_bits_with_alpha(&grid, &img, 1.0).unwrap(), 8.0 * 27.0);
    }

    #[test]
    fn quantized_codelength_close_to_real() {
        let model = Model::new(WeightBundle::random(ModelSpec::local(2, 1, 8, 3, 3), 11).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = ImageTensor::new(6, 7, 3, (0..126).map(|_| rng.gen()).collect()).unwrap();
        let grid = model.forward(&img).unwrap();
        let real = nll_bits(&grid, &img).unwrap();
        let mut quant = 0.0;
        for i in 0..6 {
            for j in 0..7 {
                let mut prior = vec![];
                for c in 0..3 {
                    let v = img.get(i, j, c);
                    quant += quantize(&mixture_pmf(&grid.at(i, j), c, &prior).unwrap()).bits(v);
                    prior.push(v);
                }
            }
        }
        let d = img.dimension() as f64;
        assert!(quant / d >= real / d - 1e-3, "{} vs {}", quant / d, real / d);
        assert!((quant - real).abs() / d < 0.02);
    }

    proptest! {
        #[test]
        fn pmf_normalized_with_floor(seed in 0u64..10_000, k in 1usize..6, color in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let channels = if color { 3 } else { 1 };
            let params = random_params(&mut rng, k, channels);
            let prior: Vec<u8> = (0..2).map(|_| rng.gen()).collect();
            for c in 0..channels {
                let eval = mixture_pmf(&params, c, &prior).unwrap();
                let sum: f64 = eval.pmf.iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-6);
                prop_assert!(eval.pmf.iter().all(|&p| p >= ALPHA / 256.0 * (1.0 - 1e-12)));
                let q = quantize(&eval);
                prop_assert_eq!(q.cumulative()[256], TOTAL);
                prop_assert_eq!(quantize(&eval), q);
            }
        }
    }
}
