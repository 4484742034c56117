//! Proxy reward hacking: what tilting toward an imperfect reward costs in
//! true reward, and how averaging independent proxies mitigates it.
//!
//! The central quantity is the gap
//!
//! ```text
//! gap(lambda) = E_{tilt(gold)}[gold] - E_{tilt(proxy)}[gold]
//! ```
//!
//! which admits an exact covariance decomposition in terms of the residual
//! `proxy - gold` (see [`crate::oracle::verify_proxy_gap_identity`]) and a
//! Lipschitz-style upper bound proportional to the residual's L2 norm. The
//! gap is usually positive — the proxy wastes KL on its own quirks — but it
//! is *not* sign-definite: a proxy that over-sharpens the tilt can beat the
//! gold tilt on gold reward by spending more KL.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontier::LambdaGrid;
use crate::oracle::{
    self, lipschitz_bound_check, tilted_expectation_raw, verify_proxy_gap_identity,
    DiscreteModel, KlDirection, LipschitzReport,
};
use crate::rng::stream_rng;
use crate::stats::log_log_slope;
use crate::types::{Lambda, PromptSamples};

/// Which of the two clusters an outcome belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cluster {
    A,
    B,
}

/// Families of reward residuals used to corrupt a gold reward into a proxy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResidualKind {
    /// Independent noise, uniform on [-scale, scale] per outcome.
    Uniform { scale: f64 },
    /// Independent gaussian noise with standard deviation `scale`.
    Gaussian { scale: f64 },
    /// A systematic shift: +magnitude on cluster A outcomes, -magnitude on
    /// cluster B. Preserves reward differences *within* each cluster, so the
    /// proxy looks locally faithful while globally misranking the clusters.
    ClusterShift {
        magnitude: f64,
        /// Must assign every outcome of the model to exactly one cluster.
        assignment: BTreeMap<String, Cluster>,
    },
}

/// A residual family plus the seed that makes its draws reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSpec {
    pub kind: ResidualKind,
    pub seed: u64,
}

impl ResidualKind {
    fn scale(&self) -> f64 {
        match self {
            ResidualKind::Uniform { scale } | ResidualKind::Gaussian { scale } => *scale,
            ResidualKind::ClusterShift { magnitude, .. } => *magnitude,
        }
    }

    fn validate(&self, model: &DiscreteModel) -> Result<()> {
        if !self.scale().is_finite() || self.scale() < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "residual scale must be finite and nonnegative, got {}",
                self.scale()
            )));
        }
        if let ResidualKind::ClusterShift { assignment, .. } = self {
            for outcome in model.outcomes() {
                if !assignment.contains_key(outcome) {
                    return Err(Error::BadPartition(format!(
                        "outcome {outcome:?} has no cluster"
                    )));
                }
            }
            if assignment.len() != model.k() {
                let stray = assignment
                    .keys()
                    .find(|k| !model.outcomes().contains(k))
                    .cloned()
                    .unwrap_or_default();
                return Err(Error::BadPartition(format!(
                    "assignment names unknown outcome {stray:?}"
                )));
            }
        }
        Ok(())
    }

    /// One residual vector over the model's outcomes.
    fn draw<R: Rng + ?Sized>(&self, model: &DiscreteModel, rng: &mut R) -> Vec<f64> {
        match self {
            ResidualKind::Uniform { scale } => (0..model.k())
                .map(|_| scale * (2.0 * rng.random::<f64>() - 1.0))
                .collect(),
            ResidualKind::Gaussian { scale } => (0..model.k())
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            ResidualKind::ClusterShift {
                magnitude,
                assignment,
            } => model
                .outcomes()
                .iter()
                .map(|o| match assignment[o] {
                    Cluster::A => *magnitude,
                    Cluster::B => -*magnitude,
                })
                .collect(),
        }
    }
}

/// Extend the model with `proxy_channel` = gold + residual, drawing the
/// residual from stream 0 of `spec.seed`.
pub fn make_proxy(
    model: &DiscreteModel,
    gold_channel: &str,
    proxy_channel: &str,
    spec: &ResidualSpec,
) -> Result<DiscreteModel> {
    spec.kind.validate(model)?;
    let gold = model.reward_table(gold_channel)?;
    let mut rng = stream_rng(spec.seed, 0);
    let residual = spec.kind.draw(model, &mut rng);
    let proxy: Vec<f64> = gold.iter().zip(&residual).map(|(g, e)| g + e).collect();
    let mut out = model.clone();
    out.add_channel(proxy_channel, proxy)?;
    Ok(out)
}

/// The proxy-alignment gap at one lambda, with its identity decomposition
/// and Lipschitz bound. `gap_lhs` is sign-indefinite (see module docs).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HackingReport {
    pub lambda: f64,
    /// E_{tilt(gold)}[gold] - E_{tilt(proxy)}[gold].
    pub gap_lhs: f64,
    /// The covariance form of the same quantity.
    pub gap_rhs: f64,
    pub identity_abs_diff: f64,
    pub lipschitz: LipschitzReport,
}

/// Exact gap report for a (gold, proxy) channel pair at `lambda`.
pub fn hacking_gap(
    model: &DiscreteModel,
    gold_channel: &str,
    proxy_channel: &str,
    lambda: Lambda,
) -> Result<HackingReport> {
    let identity = verify_proxy_gap_identity(model, gold_channel, proxy_channel, lambda, 0.0)?;
    let lipschitz = lipschitz_bound_check(model, gold_channel, proxy_channel, lambda, 1e-12)?;
    Ok(HackingReport {
        lambda: lambda.value(),
        gap_lhs: identity.lhs,
        gap_rhs: identity.rhs,
        identity_abs_diff: identity.abs_diff,
        lipschitz,
    })
}

/// Plug-in gap estimate from samples scored under both channels: the
/// empirical distribution (one outcome of mass 1/n per record) is handed to
/// the exact formulas, so on duplicated channels the estimate is exactly 0.
pub fn hacking_gap_from_samples(
    samples: &PromptSamples,
    gold_channel: &str,
    proxy_channel: &str,
    lambda: Lambda,
) -> Result<HackingReport> {
    samples.channel_values(gold_channel)?;
    samples.channel_values(proxy_channel)?;
    let empirical = DiscreteModel::empirical_from(samples)?;
    hacking_gap(&empirical, gold_channel, proxy_channel, lambda)
}

/// One row of an over-optimization sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    /// KL(tilt(gold) || base): the budget axis.
    pub kl_gold: f64,
    /// E_{tilt(gold)}[gold].
    pub gold_reward_goldaligned: f64,
    /// E_{tilt(proxy)}[gold].
    pub gold_reward_proxyaligned: f64,
    /// goldaligned - proxyaligned.
    pub gap: f64,
}

/// Trace the gold-vs-proxy alignment comparison across a lambda grid.
/// Decreasing lambda moves right on the KL axis; under a misleading proxy
/// the proxy-aligned curve peaks and falls away while the gold-aligned one
/// keeps climbing.
pub fn overoptimization_sweep(
    model: &DiscreteModel,
    gold_channel: &str,
    proxy_channel: &str,
    grid: &LambdaGrid,
) -> Result<Vec<SweepRow>> {
    grid.values()
        .iter()
        .map(|&lambda| {
            let gold_tilt = oracle::tilt(model, gold_channel, lambda)?;
            let proxy_tilt = oracle::tilt(model, proxy_channel, lambda)?;
            let goldaligned = oracle::expected_tilted_reward(model, &gold_tilt, gold_channel)?;
            let proxyaligned = oracle::expected_tilted_reward(model, &proxy_tilt, gold_channel)?;
            Ok(SweepRow {
                lambda: lambda.value(),
                kl_gold: oracle::exact_kl(model, &gold_tilt, KlDirection::TiltFromBase)?,
                gold_reward_goldaligned: goldaligned,
                gold_reward_proxyaligned: proxyaligned,
                gap: goldaligned - proxyaligned,
            })
        })
        .collect()
}

/// How the alignment gap shrinks as independent proxies are averaged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleRateReport {
    pub lambda: f64,
    pub ensemble_sizes: Vec<usize>,
    /// Mean over trials of |gap| when tilting by the size-j ensemble average.
    pub mean_abs_gap: Vec<f64>,
    /// Log-log slope of gap against ensemble size; None when a gap is
    /// exactly 0 (e.g. zero-scale residuals), where no rate is identifiable.
    pub fitted_slope: Option<f64>,
    pub trials: usize,
}

/// Measure the alignment gap of ensemble-averaged proxies.
///
/// For each size m in `sizes` and each of `trials` independent trials, draw
/// m residual vectors, average them onto the gold reward, tilt by the
/// result, and record |E_tilt[gold] - E_{tilt(gold)}[gold]|. Mean-zero
/// residual families (uniform, gaussian) mitigate at the root-m rate;
/// systematic (cluster-shift) residuals are rejected as
/// [`Error::BiasedSpec`] because averaging cannot remove a bias.
///
/// Trial `t` of size index `j` uses stream `j * trials + t` of `spec.seed`,
/// so results are independent of evaluation order and thread count.
pub fn ensemble_rate_experiment(
    model: &DiscreteModel,
    gold_channel: &str,
    spec: &ResidualSpec,
    sizes: &[usize],
    trials: usize,
    lambda: Lambda,
) -> Result<EnsembleRateReport> {
    if matches!(spec.kind, ResidualKind::ClusterShift { .. }) {
        return Err(Error::BiasedSpec(
            "cluster-shift residuals are not mean-zero; averaging cannot remove them",
        ));
    }
    spec.kind.validate(model)?;
    if sizes.is_empty() {
        return Err(Error::EmptyInput("ensemble sizes"));
    }
    for pair in sizes.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::InvalidArgument(format!(
                "ensemble sizes must be strictly increasing, got {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    if sizes[0] == 0 {
        return Err(Error::InvalidArgument("ensemble size 0".into()));
    }
    if trials < 30 {
        return Err(Error::InvalidArgument(format!(
            "need at least 30 trials for a stable rate estimate, got {trials}"
        )));
    }

    let gold = model.reward_table(gold_channel)?;
    // The reference goes through the same kernel as the per-trial values so
    // that a zero residual yields a gap of exactly 0, not a rounding residue.
    let reference = tilted_expectation_raw(model.base_probs(), gold, gold, lambda.value());

    let tasks: Vec<(usize, usize)> = (0..sizes.len())
        .flat_map(|j| (0..trials).map(move |t| (j, t)))
        .collect();
    let gaps: Vec<(usize, f64)> = tasks
        .par_iter()
        .map(|&(j, t)| {
            let mut rng = stream_rng(spec.seed, (j * trials + t) as u64);
            let mut ensemble = vec![0.0; model.k()];
            for _ in 0..sizes[j] {
                let residual = spec.kind.draw(model, &mut rng);
                for (acc, e) in ensemble.iter_mut().zip(&residual) {
                    *acc += e;
                }
            }
            let averaged: Vec<f64> = gold
                .iter()
                .zip(&ensemble)
                .map(|(g, acc)| g + acc / sizes[j] as f64)
                .collect();
            let achieved =
                tilted_expectation_raw(model.base_probs(), &averaged, gold, lambda.value());
            (j, (achieved - reference).abs())
        })
        .collect();

    let mut mean_abs_gap = vec![0.0; sizes.len()];
    for (j, gap) in gaps {
        mean_abs_gap[j] += gap / trials as f64;
    }
    let xs: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let fitted_slope = log_log_slope(&xs, &mean_abs_gap);
    Ok(EnsembleRateReport {
        lambda: lambda.value(),
        ensemble_sizes: sizes.to_vec(),
        mean_abs_gap,
        fitted_slope,
        trials,
    })
}
