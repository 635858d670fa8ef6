//! Out-of-distribution scoring with a full model and a local model.
//!
//! The full model's density factors into the local model times a non-local
//! term (up to a normalizer that is never needed for ranking), so
//! `log2 p_full(x) - log2 p_local(x)` scores how well the image's non-local
//! structure matches the training data. Higher means more in-distribution.

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::mixture::{bpd, nll_bits};
use crate::model::{Model, Variant};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OodScore {
    /// `log2 p_full(x)`, in bits.
    pub log2_full: f64,
    /// `log2 p_local(x)`, in bits.
    pub log2_local: f64,
    pub score: f64,
}

impl OodScore {
    pub fn new(log2_full: f64, log2_local: f64) -> Self {
        Self {
            log2_full,
            log2_local,
            score: log2_full - log2_local,
        }
    }
}

pub fn score(image: &ImageTensor, full_model: &Model, local_model: &Model) -> Result<OodScore> {
    for (model, want) in [(full_model, Variant::Full), (local_model, Variant::Local)] {
        if model.spec().variant != want {
            return Err(Error::UnsupportedVariant {
                expected: want.name(),
                actual: model.spec().variant.name(),
            });
        }
    }
    if full_model.spec().color_channels != local_model.spec().color_channels {
        return Err(Error::DimensionMismatch {
            axis: "model color channels",
            expected: full_model.spec().color_channels,
            actual: local_model.spec().color_channels,
        });
    }
    let log2_full = -nll_bits(&full_model.forward(image)?, image)?;
    let log2_local = -nll_bits(&local_model.forward(image)?, image)?;
    Ok(OodScore::new(log2_full, log2_local))
}

/// Area under the ROC curve for separating `id_scores` (positives, expected
/// higher) from `ood_scores`: the Mann-Whitney probability that a random ID
/// score beats a random OOD score, ties counting one half.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    if id_scores.is_empty() {
        return Err(Error::EmptyScores("in-distribution"));
    }
    if ood_scores.is_empty() {
        return Err(Error::EmptyScores("out-of-distribution"));
    }
    // Midranks over the pooled sample; (rank sum of ID - n(n+1)/2) / (n m).
    let mut pooled: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, true))
        .chain(ood_scores.iter().map(|&s| (s, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < pooled.len() {
        let mut end = start + 1;
        while end < pooled.len() && pooled[end].0 == pooled[start].0 {
            end += 1;
        }
        let midrank = (start + end + 1) as f64 / 2.0;
        let ids = pooled[start..end].iter().filter(|p| p.1).count();
        rank_sum += midrank * ids as f64;
        start = end;
    }
    let n = id_scores.len() as f64;
    let m = ood_scores.len() as f64;
    Ok((rank_sum - n * (n + 1.0) / 2.0) / (n * m))
}

/// Mean bits per dimension over a dataset.
pub fn bpd_report(dataset: &[ImageTensor], model: &Model) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyScores("dataset"));
    }
    let total = dataset.iter().map(|img| bpd(img, model)).sum::<Result<f64>>()?;
    Ok(total / dataset.len() as f64)
}
