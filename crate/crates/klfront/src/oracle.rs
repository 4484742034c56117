//! Exact computations on small discrete outcome models.
//!
//! A [`DiscreteModel`] is a base distribution over K outcomes plus one or
//! more reward tables. Tilting the base distribution by a reward at strength
//! lambda yields the exponential-family policy
//!
//! ```text
//! q_k = p_k * exp(r_k / lambda) / Z,     Z = sum_k p_k * exp(r_k / lambda)
//! ```
//!
//! which maximizes expected reward minus `lambda * KL(q || p)`. Everything
//! here is evaluated by full enumeration in the shifted-log domain, so the
//! results serve as ground truth for the sample-based estimators and remain
//! stable at extreme tilts (tiny or huge lambda).

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Lambda, PromptSamples, RewardChannel, SampleRecord};

/// A finite outcome space with base probabilities and named reward tables.
///
/// Invariants (enforced at construction and deserialization): at least one
/// outcome, distinct outcome names, strictly positive base probabilities
/// summing to 1 within 1e-9 (renormalized exactly on load), and reward
/// tables of matching length containing only finite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct DiscreteModel {
    outcomes: Vec<String>,
    base_probs: Vec<f64>,
    rewards: BTreeMap<RewardChannel, Vec<f64>>,
}

/// Wire format of a model (what the JSON files contain).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRepr {
    outcomes: Vec<String>,
    base_probs: Vec<f64>,
    rewards: BTreeMap<RewardChannel, Vec<f64>>,
}

impl TryFrom<ModelRepr> for DiscreteModel {
    type Error = Error;
    fn try_from(repr: ModelRepr) -> Result<Self> {
        DiscreteModel::new(repr.outcomes, repr.base_probs, repr.rewards)
    }
}

impl From<DiscreteModel> for ModelRepr {
    fn from(m: DiscreteModel) -> ModelRepr {
        ModelRepr {
            outcomes: m.outcomes,
            base_probs: m.base_probs,
            rewards: m.rewards,
        }
    }
}

impl DiscreteModel {
    pub fn new(
        outcomes: Vec<String>,
        base_probs: Vec<f64>,
        rewards: impl IntoIterator<Item = (impl Into<String>, Vec<f64>)>,
    ) -> Result<Self> {
        let k = outcomes.len();
        if k == 0 {
            return Err(Error::InvalidModel("no outcomes".into()));
        }
        {
            let mut seen = std::collections::BTreeSet::new();
            for name in &outcomes {
                if !seen.insert(name.as_str()) {
                    return Err(Error::InvalidModel(format!(
                        "duplicate outcome name {name:?}"
                    )));
                }
            }
        }
        if base_probs.len() != k {
            return Err(Error::InvalidModel(format!(
                "{} outcomes but {} base probabilities",
                k,
                base_probs.len()
            )));
        }
        if base_probs.iter().any(|&p| !p.is_finite() || p <= 0.0) {
            return Err(Error::InvalidModel(
                "base probabilities must be finite and strictly positive".into(),
            ));
        }
        let total: f64 = base_probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!(
                "base probabilities sum to {total}, expected 1 within 1e-9"
            )));
        }
        let base_probs: Vec<f64> = base_probs.iter().map(|p| p / total).collect();

        let mut model = DiscreteModel {
            outcomes,
            base_probs,
            rewards: BTreeMap::new(),
        };
        for (name, table) in rewards {
            model.add_channel(name, table)?;
        }
        Ok(model)
    }

    /// Empirical model of one prompt's samples: every record becomes an
    /// outcome of probability 1/n, carrying all reward channels. Duplicated
    /// records (e.g. after resampling) are kept as separate outcomes.
    pub fn empirical_from(samples: &PromptSamples) -> Result<Self> {
        let n = samples.n();
        let outcomes = (0..n).map(|i| format!("obs{i}")).collect();
        let probs = vec![1.0 / n as f64; n];
        let rewards: Vec<(String, Vec<f64>)> = samples
            .channels()
            .map(|c| {
                let values = samples.channel_values(c).expect("channel just listed");
                (c.to_owned(), values.to_vec())
            })
            .collect();
        DiscreteModel::new(outcomes, probs, rewards)
    }

    /// Number of outcomes.
    pub fn k(&self) -> usize {
        self.outcomes.len()
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn base_probs(&self) -> &[f64] {
        &self.base_probs
    }

    /// Channel names in sorted order.
    pub fn channels(&self) -> impl Iterator<Item = &str> {
        self.rewards.keys().map(|c| c.as_str())
    }

    pub fn has_channel(&self, channel: &str) -> bool {
        self.rewards.contains_key(channel)
    }

    pub fn reward_table(&self, channel: &str) -> Result<&[f64]> {
        self.rewards
            .get(channel)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownChannel(channel.to_owned()))
    }

    /// Add a reward table under a new channel name.
    pub fn add_channel(&mut self, name: impl Into<String>, table: Vec<f64>) -> Result<()> {
        let channel = RewardChannel::new(name)?;
        if self.rewards.contains_key(&channel) {
            return Err(Error::DuplicateChannel(channel.as_str().to_owned()));
        }
        if table.len() != self.k() {
            return Err(Error::DimensionMismatch {
                left: table.len(),
                right: self.k(),
                context: "reward table vs outcomes",
            });
        }
        if let Some(i) = table.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteReward {
                index: i,
                channel: channel.as_str().to_owned(),
            });
        }
        self.rewards.insert(channel, table);
        Ok(())
    }

    /// Expected reward of `channel` under the base distribution.
    pub fn expected_reward(&self, channel: &str) -> Result<f64> {
        let table = self.reward_table(channel)?;
        Ok(dot(&self.base_probs, table))
    }

    /// Draw `n` outcomes i.i.d. from the base distribution and package them
    /// as a validated sample group carrying every reward channel.
    pub fn sample_prompt<R: Rng + ?Sized>(
        &self,
        prompt_id: &str,
        n: usize,
        rng: &mut R,
    ) -> Result<PromptSamples> {
        if n == 0 {
            return Err(Error::InvalidArgument("cannot sample 0 records".into()));
        }
        if self.rewards.is_empty() {
            return Err(Error::InvalidModel("model has no reward channels".into()));
        }
        let mut cdf = Vec::with_capacity(self.k());
        let mut acc = 0.0;
        for &p in &self.base_probs {
            acc += p;
            cdf.push(acc);
        }
        let records: Vec<SampleRecord> = (0..n)
            .map(|i| {
                let u: f64 = rng.random();
                let k = cdf.partition_point(|&c| c <= u).min(self.k() - 1);
                SampleRecord {
                    prompt_id: prompt_id.to_owned(),
                    response_id: format!("s{i}"),
                    rewards: self
                        .rewards
                        .iter()
                        .map(|(c, table)| (c.clone(), table[k]))
                        .collect(),
                }
            })
            .collect();
        PromptSamples::validate(records)
    }
}

/// The distribution obtained by exponentially tilting a model's base
/// distribution with one of its reward tables.
///
/// Probabilities are exponentiated from finite log-probabilities; at extreme
/// tilts a probability may underflow to exactly 0 even though its
/// log-probability stays finite, so KL computations always go through
/// [`TiltedDistribution::log_probs`].
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedDistribution {
    lambda: Lambda,
    log_partition: f64,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl TiltedDistribution {
    pub fn lambda(&self) -> Lambda {
        self.lambda
    }

    /// log E_base[exp(r / lambda)].
    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// log(sum(exp(terms))) with the usual max shift; -inf terms drop out.
fn logsumexp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Tilt the model's base distribution by `channel` at strength `lambda`.
pub fn tilt(model: &DiscreteModel, channel: &str, lambda: Lambda) -> Result<TiltedDistribution> {
    let table = model.reward_table(channel)?;
    let lam = lambda.value();
    let z: Vec<f64> = table.iter().map(|r| r / lam).collect();
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // S = sum_k p_k e^{z_k - m}; in (0, 1], so ln S is well-conditioned.
    let s: f64 = model
        .base_probs
        .iter()
        .zip(&z)
        .map(|(p, zk)| p * (zk - m).exp())
        .sum();
    let ln_s = s.ln();
    let log_partition = m + ln_s;
    let log_probs: Vec<f64> = model
        .base_probs
        .iter()
        .zip(&z)
        .map(|(p, zk)| p.ln() + (zk - m) - ln_s)
        .collect();
    let probs: Vec<f64> = log_probs.iter().map(|lp| lp.exp()).collect();
    Ok(TiltedDistribution {
        lambda,
        log_partition,
        probs,
        log_probs,
    })
}

/// Expected reward of `eval_channel` under a tilted distribution.
pub fn expected_tilted_reward(
    model: &DiscreteModel,
    tilted: &TiltedDistribution,
    eval_channel: &str,
) -> Result<f64> {
    let table = model.reward_table(eval_channel)?;
    if table.len() != tilted.k() {
        return Err(Error::DimensionMismatch {
            left: table.len(),
            right: tilted.k(),
            context: "reward table vs tilted distribution",
        });
    }
    Ok(dot(&tilted.probs, table))
}

/// Which Kullback-Leibler divergence to evaluate between a tilted
/// distribution q and its base p.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlDirection {
    /// KL(q || p): the divergence the tilt "spends".
    TiltFromBase,
    /// KL(p || q): how surprised the tilt is by base samples.
    BaseFromTilt,
}

/// Exact KL between a tilted distribution and the model's base distribution.
///
/// Never negative; computed from log-probabilities so extreme tilts (where
/// probabilities underflow) stay finite and correct. An outcome with tilted
/// probability exactly 0 contributes 0 to KL(q || p) (the x·ln x limit) and
/// a finite log-ratio term to KL(p || q).
pub fn exact_kl(
    model: &DiscreteModel,
    tilted: &TiltedDistribution,
    direction: KlDirection,
) -> Result<f64> {
    if model.k() != tilted.k() {
        return Err(Error::DimensionMismatch {
            left: model.k(),
            right: tilted.k(),
            context: "model vs tilted distribution",
        });
    }
    let p = &model.base_probs;
    let kl = match direction {
        KlDirection::TiltFromBase => tilted
            .probs
            .iter()
            .zip(&tilted.log_probs)
            .zip(p)
            .filter(|((q, _), _)| **q > 0.0)
            .map(|((q, lq), pk)| q * (lq - pk.ln()))
            .sum::<f64>(),
        KlDirection::BaseFromTilt => p
            .iter()
            .zip(&tilted.log_probs)
            .map(|(pk, lq)| pk * (pk.ln() - lq))
            .sum::<f64>(),
    };
    // Tiny negative values are roundoff from near-identical distributions.
    Ok(kl.max(0.0))
}

/// Exact reward gain of the tilt over the base: E_q[r] - E_p[r].
pub fn exact_gain(model: &DiscreteModel, channel: &str, lambda: Lambda) -> Result<f64> {
    let tilted = tilt(model, channel, lambda)?;
    Ok(expected_tilted_reward(model, &tilted, channel)? - model.expected_reward(channel)?)
}

/// Outcome of checking one analytic identity at a given tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityReport {
    pub lambda: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_diff: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl IdentityReport {
    fn from_sides(lambda: Lambda, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let abs_diff = (lhs - rhs).abs();
        IdentityReport {
            lambda: lambda.value(),
            lhs,
            rhs,
            abs_diff,
            tolerance,
            pass: abs_diff <= tolerance,
        }
    }
}

/// Check that the tilt's reward gain equals lambda times its symmetrized KL:
///
/// ```text
/// E_q[r] - E_p[r]  =  lambda * ( KL(q||p) + KL(p||q) )
/// ```
///
/// The two sides are computed through independent arithmetic paths
/// (probability sums vs log-probability sums).
pub fn verify_jeffreys_identity(
    model: &DiscreteModel,
    channel: &str,
    lambda: Lambda,
    tolerance: f64,
) -> Result<IdentityReport> {
    let tilted = tilt(model, channel, lambda)?;
    let lhs =
        expected_tilted_reward(model, &tilted, channel)? - model.expected_reward(channel)?;
    let fwd = exact_kl(model, &tilted, KlDirection::TiltFromBase)?;
    let rev = exact_kl(model, &tilted, KlDirection::BaseFromTilt)?;
    let rhs = lambda.value() * (fwd + rev);
    Ok(IdentityReport::from_sides(lambda, lhs, rhs, tolerance))
}

/// Normalized tilt weights under the base distribution:
/// w_k = exp(r_k/lambda) / E_p[exp(r/lambda)], so that E_p[w] = 1.
fn normalized_base_weights(probs: &[f64], table: &[f64], lambda: f64) -> Vec<f64> {
    let z: Vec<f64> = table.iter().map(|r| r / lambda).collect();
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = probs
        .iter()
        .zip(&z)
        .map(|(p, zk)| p * (zk - m).exp())
        .sum();
    z.iter().map(|zk| (zk - m).exp() / s).collect()
}

/// Check the covariance form of the cross-channel gain:
///
/// ```text
/// E_q[r'] - E_p[r']  =  Cov_p( r', w )   with   w = e^{r/lambda} / E_p[e^{r/lambda}]
/// ```
///
/// where q tilts by `align_channel` and r' is `eval_channel`.
pub fn verify_covariance_identity(
    model: &DiscreteModel,
    align_channel: &str,
    eval_channel: &str,
    lambda: Lambda,
    tolerance: f64,
) -> Result<IdentityReport> {
    let tilted = tilt(model, align_channel, lambda)?;
    let lhs = expected_tilted_reward(model, &tilted, eval_channel)?
        - model.expected_reward(eval_channel)?;

    let p = model.base_probs();
    let align = model.reward_table(align_channel)?;
    let eval = model.reward_table(eval_channel)?;
    let w = normalized_base_weights(p, align, lambda.value());
    let mean_eval = dot(p, eval);
    let mean_w = dot(p, &w);
    let rhs = p
        .iter()
        .zip(eval)
        .zip(&w)
        .map(|((pk, rk), wk)| pk * (rk - mean_eval) * (wk - mean_w))
        .sum::<f64>();
    Ok(IdentityReport::from_sides(lambda, lhs, rhs, tolerance))
}

/// The two sides of the proxy-gap decomposition at one lambda.
///
/// `lhs` is the gold-reward gap between aligning on the gold reward and
/// aligning on the proxy:
///
/// ```text
/// lhs = E_{tilt(gold)}[gold] - E_{tilt(proxy)}[gold]
/// ```
///
/// `rhs` rewrites the same quantity as a base covariance involving the
/// residual nu = proxy - gold:
///
/// ```text
/// rhs = Cov_p( gold, w* · (1 - e^{nu/lambda} / E_{q*}[e^{nu/lambda}]) )
/// ```
///
/// with w* the normalized gold tilt weights and q* the gold-tilted
/// distribution. The gap is *sign-indefinite*: a proxy that over-sharpens
/// the tilt toward high-gold outcomes makes the proxy-aligned policy beat
/// the gold-aligned one on gold reward (it spends more KL to get there), so
/// callers must not assume `lhs >= 0`.
pub fn verify_proxy_gap_identity(
    model: &DiscreteModel,
    gold_channel: &str,
    proxy_channel: &str,
    lambda: Lambda,
    tolerance: f64,
) -> Result<IdentityReport> {
    let gold_tilt = tilt(model, gold_channel, lambda)?;
    let proxy_tilt = tilt(model, proxy_channel, lambda)?;
    let lhs = expected_tilted_reward(model, &gold_tilt, gold_channel)?
        - expected_tilted_reward(model, &proxy_tilt, gold_channel)?;

    let p = model.base_probs();
    let gold = model.reward_table(gold_channel)?;
    let proxy = model.reward_table(proxy_channel)?;
    let lam = lambda.value();

    // b_k = nu_k / lambda; log D = log E_{q*}[e^{nu/lambda}] via per-term
    // logs, because q*_k and e^{b_k} can separately under/overflow while
    // their product stays moderate.
    let b: Vec<f64> = proxy.iter().zip(gold).map(|(pr, g)| (pr - g) / lam).collect();
    let log_d = {
        let terms: Vec<f64> = gold_tilt
            .log_probs()
            .iter()
            .zip(&b)
            .map(|(lq, bk)| lq + bk)
            .collect();
        logsumexp(&terms)
    };

    // w*_k and w*_k · t_k, both bounded by 1/p_k, each exponentiated from a
    // single log expression to dodge intermediate underflow.
    let w = normalized_base_weights(p, gold, lam);
    let mean_gold = dot(p, gold);
    let mut rhs = 0.0;
    let mut mean_g = 0.0;
    let mut g = vec![0.0; p.len()];
    for k in 0..p.len() {
        // log w*_k = log q*_k - log p_k keeps the same shifted path as w.
        let log_wt = gold_tilt.log_probs()[k] - p[k].ln() + b[k] - log_d;
        g[k] = w[k] - log_wt.exp();
        mean_g += p[k] * g[k];
    }
    for k in 0..p.len() {
        rhs += p[k] * (gold[k] - mean_gold) * (g[k] - mean_g);
    }
    Ok(IdentityReport::from_sides(lambda, lhs, rhs, tolerance))
}

/// Result of checking the Lipschitz-style bound on proxy mis-alignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub lambda: f64,
    /// |E_{tilt(gold)}[gold] - E_{tilt(proxy)}[gold]|.
    pub gap_abs: f64,
    /// (W / lambda) * sd_p(gold) * ||proxy - gold||_{L2(p)}.
    pub bound: f64,
    pub gold_sd: f64,
    pub residual_l2: f64,
    /// W = min( e^{2B/lambda}, max_k 1/p_k ), B = max |reward| over both tables.
    pub w_constant: f64,
    pub pass: bool,
}

/// Check that the absolute proxy gap respects its Lipschitz bound
/// `gap <= (W/lambda) * sd_p(gold) * ||proxy - gold||_{L2(p)}`.
pub fn lipschitz_bound_check(
    model: &DiscreteModel,
    gold_channel: &str,
    proxy_channel: &str,
    lambda: Lambda,
    tolerance: f64,
) -> Result<LipschitzReport> {
    let identity =
        verify_proxy_gap_identity(model, gold_channel, proxy_channel, lambda, tolerance)?;
    let p = model.base_probs();
    let gold = model.reward_table(gold_channel)?;
    let proxy = model.reward_table(proxy_channel)?;
    let lam = lambda.value();

    let b = gold
        .iter()
        .chain(proxy)
        .fold(0.0f64, |acc, r| acc.max(r.abs()));
    let min_p = p.iter().copied().fold(f64::INFINITY, f64::min);
    // Compare the two W candidates in log space; e^{2B/lambda} overflows
    // long before the 1/min_p cap kicks in at small lambda.
    let log_w = (2.0 * b / lam).min(-min_p.ln());
    let w_constant = log_w.exp();

    let mean_gold = dot(p, gold);
    let gold_var = p
        .iter()
        .zip(gold)
        .map(|(pk, g)| pk * (g - mean_gold) * (g - mean_gold))
        .sum::<f64>();
    let residual_l2 = p
        .iter()
        .zip(gold)
        .zip(proxy)
        .map(|((pk, g), pr)| pk * (pr - g) * (pr - g))
        .sum::<f64>()
        .sqrt();

    let gap_abs = identity.lhs.abs();
    let bound = w_constant / lam * gold_var.sqrt() * residual_l2;
    Ok(LipschitzReport {
        lambda: lam,
        gap_abs,
        bound,
        gold_sd: gold_var.sqrt(),
        residual_l2,
        w_constant,
        pass: gap_abs <= bound + tolerance,
    })
}

/// Exact behaviour of best-of-n selection on a model channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactBon {
    pub bon_n: u64,
    /// E[max of n i.i.d. base draws] of the channel's reward.
    pub expected_reward: f64,
    /// `expected_reward` minus the base expectation.
    pub gain: f64,
    /// KL(best-of-n policy || base) = ln n - (n-1)/n.
    pub kl: f64,
}

/// KL divergence spent by best-of-n selection: `ln n - (n-1)/n`.
pub fn bon_kl(n: u64) -> f64 {
    let nf = n as f64;
    nf.ln() - (nf - 1.0) / nf
}

/// Exact expected reward of taking the best of `n` i.i.d. base draws,
/// computed from the order statistics of the reward's pushforward
/// distribution: E[max] = sum_v v * (F(v)^n - F(v-)^n).
pub fn best_of_n_exact(model: &DiscreteModel, channel: &str, n: u64) -> Result<ExactBon> {
    if n == 0 {
        return Err(Error::InvalidN(0));
    }
    let table = model.reward_table(channel)?;
    let mut by_value: Vec<(f64, f64)> = Vec::with_capacity(table.len());
    {
        // Collapse equal reward values, accumulating their probability.
        let mut idx: Vec<usize> = (0..table.len()).collect();
        idx.sort_by(|&a, &b| table[a].total_cmp(&table[b]));
        for i in idx {
            match by_value.last_mut() {
                Some((v, p)) if *v == table[i] => *p += model.base_probs[i],
                _ => by_value.push((table[i], model.base_probs[i])),
            }
        }
    }
    let mut expected = 0.0;
    let mut mean_via_cdf = 0.0;
    let mut f_prev = 0.0f64;
    for &(v, p) in &by_value {
        let f = (f_prev + p).min(1.0);
        expected += v * (f.powf(n as f64) - f_prev.powf(n as f64));
        mean_via_cdf += v * (f - f_prev);
        f_prev = f;
    }
    // Using the same CDF representation for the mean makes gain(n=1) an
    // exact zero instead of a rounding residue.
    Ok(ExactBon {
        bon_n: n,
        expected_reward: expected,
        gain: expected - mean_via_cdf,
        kl: bon_kl(n),
    })
}

/// E_{tilt-by-`tilt_rewards`}[eval] on raw parallel slices. Used where the
/// tilting table is synthesized on the fly (reward ensembles) rather than
/// stored as a model channel.
pub(crate) fn tilted_expectation_raw(
    base_probs: &[f64],
    tilt_rewards: &[f64],
    eval: &[f64],
    lambda: f64,
) -> f64 {
    let z: Vec<f64> = tilt_rewards.iter().map(|r| r / lambda).collect();
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    let mut acc = 0.0;
    for k in 0..base_probs.len() {
        let t = base_probs[k] * (z[k] - m).exp();
        s += t;
        acc += t * eval[k];
    }
    acc / s
}
