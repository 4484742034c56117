//! Sample-based counterparts of the oracle quantities.
//!
//! Given i.i.d. base-distribution samples with reward annotations, the tilted
//! policy's reward gain and KL divergences are estimable without drawing a
//! single sample from the tilted policy itself: self-normalized importance
//! weights `w_i = softmax(r_i / lambda)` stand in for the tilt, and
//! `log Zhat = max_i(r_i/lambda) + log mean_i exp(r_i/lambda - max)` for the
//! log-partition function. All softmax-style sums are max-shifted, so tiny
//! lambdas degrade statistically (weight degeneracy) but never numerically.
//!
//! Uncertainty comes from a percentile bootstrap over records, with one RNG
//! stream per replicate so parallel and sequential runs agree bit for bit.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bon::empirical_best_of_n_gain;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::stats::{mean, quantile};
use crate::types::{Estimate, Lambda, PromptSamples};

/// Self-normalized tilt weights of one reward column.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltWeights {
    /// softmax(r_i / lambda); sums to 1 within 1e-12.
    pub weights: Vec<f64>,
    /// log of the empirical partition function, mean_i exp(r_i / lambda).
    pub log_partition: f64,
}

/// Compute softmax weights and the log-partition estimate for `rewards`.
pub fn compute_tilt_weights(rewards: &[f64], lambda: Lambda) -> Result<TiltWeights> {
    if rewards.is_empty() {
        return Err(Error::EmptySamples);
    }
    if let Some(index) = rewards.iter().position(|r| !r.is_finite()) {
        return Err(Error::NonFiniteReward {
            index,
            channel: "<raw input>".to_owned(),
        });
    }
    let lam = lambda.value();
    let (weights, log_partition) = weights_kernel(rewards, lam);
    Ok(TiltWeights {
        weights,
        log_partition,
    })
}

/// (softmax weights, log mean exp) of `rewards / lambda`, max-shifted.
/// Callers guarantee non-empty finite input.
fn weights_kernel(rewards: &[f64], lam: f64) -> (Vec<f64>, f64) {
    let m = rewards
        .iter()
        .map(|r| r / lam)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = rewards.iter().map(|r| (r / lam - m).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let log_partition = m + (total / rewards.len() as f64).ln();
    (weights, log_partition)
}

/// Plug-in gain of the `align`-tilted policy on the `eval` rewards:
/// sum_i w_i eval_i - mean(eval).
pub(crate) fn gain_kernel(align: &[f64], eval: &[f64], lam: f64) -> f64 {
    let (weights, _) = weights_kernel(align, lam);
    let tilted: f64 = weights.iter().zip(eval).map(|(w, e)| w * e).sum();
    tilted - mean(eval)
}

/// Plug-in KL(tilt || base) = sum_i w_i r_i / lambda - log Zhat.
/// Equals KL(softmax weights || uniform), so it is nonnegative up to
/// roundoff; tiny negatives are clamped.
pub(crate) fn kl_forward_kernel(align: &[f64], lam: f64) -> f64 {
    let (weights, log_partition) = weights_kernel(align, lam);
    let tilted_mean: f64 = weights.iter().zip(align).map(|(w, r)| w * r).sum();
    (tilted_mean / lam - log_partition).max(0.0)
}

/// Plug-in KL(base || tilt) = log Zhat - mean(r) / lambda.
/// Nonnegative by Jensen's inequality, up to roundoff.
pub(crate) fn kl_reverse_kernel(align: &[f64], lam: f64) -> f64 {
    let (_, log_partition) = weights_kernel(align, lam);
    (log_partition - mean(align) / lam).max(0.0)
}

fn column<'a>(samples: &'a PromptSamples, channel: &str) -> Result<&'a [f64]> {
    samples.channel_values(channel)
}

/// Estimated reward gain of tilting by `align_channel` and evaluating
/// `eval_channel`: the sample analogue of E_tilt[eval] - E_base[eval].
pub fn estimate_reward_gain(
    samples: &PromptSamples,
    align_channel: &str,
    eval_channel: &str,
    lambda: Lambda,
) -> Result<f64> {
    let align = column(samples, align_channel)?;
    let eval = column(samples, eval_channel)?;
    Ok(gain_kernel(align, eval, lambda.value()))
}

/// Estimated KL(tilt || base) of the `align_channel` tilt.
pub fn estimate_kl_forward(
    samples: &PromptSamples,
    align_channel: &str,
    lambda: Lambda,
) -> Result<f64> {
    Ok(kl_forward_kernel(column(samples, align_channel)?, lambda.value()))
}

/// Estimated KL(base || tilt) of the `align_channel` tilt.
pub fn estimate_kl_reverse(
    samples: &PromptSamples,
    align_channel: &str,
    lambda: Lambda,
) -> Result<f64> {
    Ok(kl_reverse_kernel(column(samples, align_channel)?, lambda.value()))
}

/// Estimated symmetrized (Jeffreys) divergence of the tilt from the base:
/// the self-gain divided by lambda, which analytically equals
/// KL(tilt||base) + KL(base||tilt).
pub fn estimate_jeffreys(
    samples: &PromptSamples,
    align_channel: &str,
    lambda: Lambda,
) -> Result<f64> {
    let align = column(samples, align_channel)?;
    Ok(gain_kernel(align, align, lambda.value()) / lambda.value())
}

/// A scalar statistic of one prompt's samples that the bootstrap can
/// resample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stat", rename_all = "snake_case")]
pub enum Statistic {
    RewardGain {
        align: String,
        eval: String,
        lambda: Lambda,
    },
    KlForward {
        align: String,
        lambda: Lambda,
    },
    KlReverse {
        align: String,
        lambda: Lambda,
    },
    Jeffreys {
        align: String,
        lambda: Lambda,
    },
    /// Empirical expected gain of best-of-n selection on a channel.
    BonGain { channel: String, bon_n: u64 },
}

impl Statistic {
    /// (primary, optional secondary) channel the statistic reads.
    fn channels(&self) -> (&str, Option<&str>) {
        match self {
            Statistic::RewardGain { align, eval, .. } => (align, Some(eval)),
            Statistic::KlForward { align, .. }
            | Statistic::KlReverse { align, .. }
            | Statistic::Jeffreys { align, .. } => (align, None),
            Statistic::BonGain { channel, .. } => (channel, None),
        }
    }

    fn validate(&self) -> Result<()> {
        if let Statistic::BonGain { bon_n: 0, .. } = self {
            return Err(Error::InvalidN(0));
        }
        Ok(())
    }

    /// Evaluate on raw columns; `secondary` is present iff the statistic
    /// declared a second channel.
    fn eval(&self, primary: &[f64], secondary: Option<&[f64]>) -> f64 {
        match self {
            Statistic::RewardGain { lambda, .. } => {
                gain_kernel(primary, secondary.expect("eval column"), lambda.value())
            }
            Statistic::KlForward { lambda, .. } => kl_forward_kernel(primary, lambda.value()),
            Statistic::KlReverse { lambda, .. } => kl_reverse_kernel(primary, lambda.value()),
            Statistic::Jeffreys { lambda, .. } => {
                gain_kernel(primary, primary, lambda.value()) / lambda.value()
            }
            Statistic::BonGain { bon_n, .. } => empirical_best_of_n_gain(primary, *bon_n),
        }
    }
}

/// Configuration of the percentile bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Number of resampled replicates; at least 2.
    pub replicates: u32,
    /// Nominal two-sided coverage, e.g. 0.95.
    pub ci_level: f64,
    pub seed: u64,
}

impl BootstrapConfig {
    pub fn new(replicates: u32, ci_level: f64, seed: u64) -> Result<Self> {
        if replicates < 2 {
            return Err(Error::InvalidArgument(format!(
                "bootstrap needs at least 2 replicates, got {replicates}"
            )));
        }
        if !(0.0 < ci_level && ci_level < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "confidence level {ci_level} outside (0, 1)"
            )));
        }
        Ok(BootstrapConfig {
            replicates,
            ci_level,
            seed,
        })
    }
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 1000,
            ci_level: 0.95,
            seed: 0,
        }
    }
}

/// Percentile-bootstrap estimate of `stat` on one prompt's samples.
///
/// Records are resampled with replacement n-out-of-n; replicate `j` draws
/// from stream `j` of `cfg.seed`, so the replicate values — and therefore
/// the interval — are bit-identical however the replicate loop is scheduled.
/// Needs at least 2 records.
pub fn bootstrap(
    samples: &PromptSamples,
    stat: &Statistic,
    cfg: &BootstrapConfig,
) -> Result<Estimate> {
    stat.validate()?;
    BootstrapConfig::new(cfg.replicates, cfg.ci_level, cfg.seed)?;
    let n = samples.n();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let (primary_name, secondary_name) = stat.channels();
    let primary = samples.channel_values(primary_name)?;
    let secondary = secondary_name
        .map(|c| samples.channel_values(c))
        .transpose()?;

    let point = stat.eval(primary, secondary);

    let values: Vec<f64> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|replicate| {
            let mut rng = stream_rng(cfg.seed, replicate);
            let mut re_primary = Vec::with_capacity(n);
            let mut re_secondary = secondary.map(|_| Vec::with_capacity(n));
            for _ in 0..n {
                let i = rng.random_range(0..n);
                re_primary.push(primary[i]);
                if let (Some(buf), Some(col)) = (re_secondary.as_mut(), secondary) {
                    buf.push(col[i]);
                }
            }
            stat.eval(&re_primary, re_secondary.as_deref())
        })
        .collect();

    let alpha = 1.0 - cfg.ci_level;
    let lo = quantile(&values, alpha / 2.0)?;
    let hi = quantile(&values, 1.0 - alpha / 2.0)?;
    Estimate::with_ci(point, n, lo, hi, cfg.ci_level)
}
