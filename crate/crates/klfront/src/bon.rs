//! Best-of-n selection as an alignment baseline.
//!
//! Drawing n responses from the base distribution and keeping the
//! highest-reward one is the simplest alignment procedure there is. Its KL
//! cost against the base policy has the closed form `ln n - (n-1)/n`
//! (independent of the reward), and its expected reward is an order
//! statistic of the reward distribution, so both coordinates of a best-of-n
//! run can be placed on the reward-KL plane exactly — which is what makes it
//! a useful yardstick for the tilted-policy frontier.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{bootstrap, BootstrapConfig, Statistic};
use crate::oracle::{best_of_n_exact, bon_kl, DiscreteModel};
use crate::stats::mean;
use crate::types::{Estimate, PromptSamples};

/// Default grid of best-of-n sizes: powers of two up to 8192, capped with a
/// round 10000.
pub const DEFAULT_BON_NS: [u64; 15] = [
    1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096, 8192, 10000,
];

/// One best-of-n operating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BonPoint {
    pub bon_n: u64,
    /// KL(best-of-n || base) = ln n - (n-1)/n.
    pub kl: f64,
    /// Estimated expected reward gain over the base mean.
    pub gain: Estimate,
}

/// A best-of-n curve for one prompt (or an aggregate).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BonCurve {
    pub id: String,
    /// Points in strictly increasing bon_n order.
    pub points: Vec<BonPoint>,
    /// Records per prompt behind the estimates.
    pub n_records: usize,
}

/// Expected gain of best-of-n selection under the *empirical* reward
/// distribution of `values`: E[max of n i.i.d. draws] - mean, both computed
/// from the empirical CDF. Using the same CDF representation for the mean
/// makes n = 1 an exact zero.
pub(crate) fn empirical_best_of_n_gain(values: &[f64], n: u64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let total = sorted.len() as f64;
    let mut expected_max = 0.0;
    let mut expected_mean = 0.0;
    let mut f_prev = 0.0f64;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut count = 0usize;
        while i < sorted.len() && sorted[i] == v {
            count += 1;
            i += 1;
        }
        let f = ((f_prev * total + count as f64) / total).min(1.0);
        expected_max += v * (f.powf(n as f64) - f_prev.powf(n as f64));
        expected_mean += v * (f - f_prev);
        f_prev = f;
    }
    expected_max - expected_mean
}

/// Point estimate of the best-of-n gain on one prompt's samples.
pub fn bon_expected_gain(samples: &PromptSamples, channel: &str, bon_n: u64) -> Result<f64> {
    if bon_n == 0 {
        return Err(Error::InvalidN(0));
    }
    let values = samples.channel_values(channel)?;
    Ok(empirical_best_of_n_gain(values, bon_n))
}

fn validate_size_grid(ns: &[u64]) -> Result<()> {
    if ns.is_empty() {
        return Err(Error::EmptyInput("best-of-n size grid"));
    }
    for pair in ns.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::InvalidArgument(format!(
                "best-of-n sizes must be strictly increasing, got {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    Ok(())
}

/// Best-of-n gain across a grid of sizes, with optional bootstrap CIs.
/// `ns` must be strictly increasing and start at 1 or above.
pub fn bon_curve(
    samples: &PromptSamples,
    channel: &str,
    ns: &[u64],
    cfg: Option<&BootstrapConfig>,
) -> Result<BonCurve> {
    validate_size_grid(ns)?;
    let n_records = samples.n();
    let mut points = Vec::with_capacity(ns.len());
    for &bon_n in ns {
        let point_value = bon_expected_gain(samples, channel, bon_n)?;
        let gain = match cfg {
            Some(cfg) if n_records >= 2 => {
                let stat = Statistic::BonGain {
                    channel: channel.to_owned(),
                    bon_n,
                };
                let boot = bootstrap(samples, &stat, cfg)?;
                debug_assert_eq!(boot.value, point_value);
                boot
            }
            _ => Estimate::point(point_value, n_records),
        };
        points.push(BonPoint {
            bon_n,
            kl: bon_kl(bon_n),
            gain,
        });
    }
    Ok(BonCurve {
        id: samples.prompt_id().to_owned(),
        points,
        n_records,
    })
}

/// The exact best-of-n curve of a model channel, by enumeration of the
/// reward pushforward. The curve id is "exact" and carries no intervals.
pub fn bon_curve_exact(model: &DiscreteModel, channel: &str, ns: &[u64]) -> Result<BonCurve> {
    validate_size_grid(ns)?;
    let points = ns
        .iter()
        .map(|&bon_n| {
            let exact = best_of_n_exact(model, channel, bon_n)?;
            Ok(BonPoint {
                bon_n,
                kl: exact.kl,
                gain: Estimate::point(exact.gain, 0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BonCurve {
        id: "exact".to_owned(),
        points,
        n_records: 0,
    })
}

/// Macro-average of per-prompt curves sharing one size grid. Gains (and CI
/// bounds, where every curve has them) are averaged pointwise; averaged
/// bounds are a heuristic summary, not a joint interval.
pub fn aggregate_bon_curves(curves: &[BonCurve]) -> Result<BonCurve> {
    let first = curves.first().ok_or(Error::EmptyInput("bon curves"))?;
    let ns: Vec<u64> = first.points.iter().map(|p| p.bon_n).collect();
    for c in curves {
        let other: Vec<u64> = c.points.iter().map(|p| p.bon_n).collect();
        if other != ns {
            return Err(Error::GridMismatch);
        }
    }
    let m = curves.len() as f64;
    let mut points = Vec::with_capacity(ns.len());
    for (i, &bon_n) in ns.iter().enumerate() {
        let value = mean(&curves.iter().map(|c| c.points[i].gain.value).collect::<Vec<_>>());
        let n = curves.iter().map(|c| c.points[i].gain.n).min().unwrap_or(0);
        let all_ci = curves.iter().all(|c| c.points[i].gain.ci().is_some());
        let gain = if all_ci {
            let lo = curves
                .iter()
                .map(|c| c.points[i].gain.ci_low.unwrap())
                .sum::<f64>()
                / m;
            let hi = curves
                .iter()
                .map(|c| c.points[i].gain.ci_high.unwrap())
                .sum::<f64>()
                / m;
            let level = first.points[i].gain.ci_level.unwrap_or(0.95);
            Estimate::with_ci(value, n, lo, hi, level)?
        } else {
            Estimate::point(value, n)
        };
        points.push(BonPoint {
            bon_n,
            kl: bon_kl(bon_n),
            gain,
        });
    }
    Ok(BonCurve {
        id: "AGGREGATE".to_owned(),
        points,
        n_records: curves.iter().map(|c| c.n_records).min().unwrap_or(0),
    })
}
