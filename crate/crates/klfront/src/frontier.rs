//! The reward-KL frontier: reward gain against KL cost, traced by sweeping
//! the tilt strength lambda.
//!
//! For each lambda on a grid, the tilted policy's forward KL and reward gain
//! give one point of the curve; small lambda spends more KL for more reward.
//! The frontier can be estimated from base samples (per prompt, optionally
//! with bootstrap intervals) or computed exactly on a discrete model, and
//! the exact version is the ceiling no sampling-based alignment method can
//! beat at matched KL.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    bootstrap, estimate_kl_forward, estimate_reward_gain, BootstrapConfig, Statistic,
};
use crate::oracle::{self, DiscreteModel, KlDirection};
use crate::rng::stream_rng;
use crate::stats::{interp_clamped, mean};
use crate::types::{Estimate, Lambda, PromptSamples};

/// A positive, strictly monotone grid of lambda values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Lambda>", into = "Vec<Lambda>")]
pub struct LambdaGrid {
    values: Vec<Lambda>,
}

impl LambdaGrid {
    /// A grid from explicit values; must be non-empty and strictly monotone
    /// (increasing or decreasing).
    pub fn new(values: Vec<Lambda>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidGrid("empty grid".into()));
        }
        if values.len() > 1 {
            let increasing = values[1].value() > values[0].value();
            for w in values.windows(2) {
                let ok = if increasing {
                    w[1].value() > w[0].value()
                } else {
                    w[1].value() < w[0].value()
                };
                if !ok {
                    return Err(Error::InvalidGrid(format!(
                        "values must be strictly monotone, got {} then {}",
                        w[0].value(),
                        w[1].value()
                    )));
                }
            }
        }
        Ok(LambdaGrid { values })
    }

    /// `count` points spaced evenly in log10 between `min` and `max`
    /// inclusive. Endpoints are exact.
    pub fn log_spaced(min: f64, max: f64, count: usize) -> Result<Self> {
        Self::spaced(min, max, count, true)
    }

    /// `count` points spaced evenly (linearly) between `min` and `max`.
    pub fn linear(min: f64, max: f64, count: usize) -> Result<Self> {
        Self::spaced(min, max, count, false)
    }

    fn spaced(min: f64, max: f64, count: usize, log: bool) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidGrid("count must be at least 1".into()));
        }
        Lambda::new(min)?;
        Lambda::new(max)?;
        if count == 1 {
            if min != max {
                return Err(Error::InvalidGrid(
                    "a single-point grid needs min == max".into(),
                ));
            }
            return LambdaGrid::new(vec![Lambda::new(min)?]);
        }
        if min >= max {
            return Err(Error::InvalidGrid(format!(
                "need min < max, got {min} and {max}"
            )));
        }
        let (lo, hi) = if log { (min.log10(), max.log10()) } else { (min, max) };
        let step = (hi - lo) / (count - 1) as f64;
        let values: Result<Vec<Lambda>> = (0..count)
            .map(|i| {
                let x = if i == 0 {
                    min
                } else if i == count - 1 {
                    max
                } else {
                    let v = lo + i as f64 * step;
                    if log {
                        10f64.powf(v)
                    } else {
                        v
                    }
                };
                Lambda::new(x)
            })
            .collect();
        LambdaGrid::new(values?)
    }

    pub fn values(&self) -> &[Lambda] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees at least one value
    }
}

impl Default for LambdaGrid {
    /// 25 log-spaced points between 0.01 and 10.
    fn default() -> Self {
        LambdaGrid::log_spaced(0.01, 10.0, 25).expect("default grid is valid")
    }
}

impl TryFrom<Vec<Lambda>> for LambdaGrid {
    type Error = Error;
    fn try_from(values: Vec<Lambda>) -> Result<Self> {
        LambdaGrid::new(values)
    }
}

impl From<LambdaGrid> for Vec<Lambda> {
    fn from(g: LambdaGrid) -> Vec<Lambda> {
        g.values
    }
}

/// One frontier point: the tilt of strength `lambda` sits at KL cost `kl`
/// and reward gain `gain`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierPoint {
    pub lambda: f64,
    pub kl: Estimate,
    pub gain: Estimate,
}

/// Provenance of a frontier table's uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierMeta {
    pub seed: Option<u64>,
    pub replicates: u32,
    pub ci_level: Option<f64>,
    /// True when CI bounds were macro-averaged across prompts, which is a
    /// heuristic summary rather than a joint interval.
    pub ci_aggregated_heuristically: bool,
}

impl FrontierMeta {
    fn exact() -> Self {
        FrontierMeta {
            seed: None,
            replicates: 0,
            ci_level: None,
            ci_aggregated_heuristically: false,
        }
    }
}

/// A frontier table for one prompt, one exact model, or an aggregate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierTable {
    /// Prompt id, "exact", or "AGGREGATE".
    pub id: String,
    /// Points in grid order.
    pub points: Vec<FrontierPoint>,
    /// Records behind each point (0 for exact tables; the minimum across
    /// prompts for aggregates).
    pub n_per_prompt: usize,
    pub meta: FrontierMeta,
}

/// Estimate the frontier of one prompt's samples, tilting and evaluating on
/// `align_channel`. With a bootstrap config and at least 2 records, every
/// point carries percentile intervals; a single record yields bare point
/// estimates.
pub fn frontier_for_prompt(
    samples: &PromptSamples,
    align_channel: &str,
    grid: &LambdaGrid,
    cfg: Option<&BootstrapConfig>,
) -> Result<FrontierTable> {
    frontier_with_eval(samples, align_channel, align_channel, grid, cfg)
}

/// Like [`frontier_for_prompt`], but the gain is evaluated on a separate
/// channel (the KL coordinate always belongs to the aligning tilt).
pub fn frontier_with_eval(
    samples: &PromptSamples,
    align_channel: &str,
    eval_channel: &str,
    grid: &LambdaGrid,
    cfg: Option<&BootstrapConfig>,
) -> Result<FrontierTable> {
    let n = samples.n();
    let with_ci = match cfg {
        Some(cfg) if n >= 2 => Some(cfg),
        _ => None,
    };
    let mut points = Vec::with_capacity(grid.len());
    for &lambda in grid.values() {
        let (kl, gain) = match with_ci {
            Some(cfg) => {
                let kl = bootstrap(
                    samples,
                    &Statistic::KlForward {
                        align: align_channel.to_owned(),
                        lambda,
                    },
                    cfg,
                )?;
                let gain = bootstrap(
                    samples,
                    &Statistic::RewardGain {
                        align: align_channel.to_owned(),
                        eval: eval_channel.to_owned(),
                        lambda,
                    },
                    cfg,
                )?;
                (kl, gain)
            }
            None => (
                Estimate::point(estimate_kl_forward(samples, align_channel, lambda)?, n),
                Estimate::point(
                    estimate_reward_gain(samples, align_channel, eval_channel, lambda)?,
                    n,
                ),
            ),
        };
        points.push(FrontierPoint {
            lambda: lambda.value(),
            kl,
            gain,
        });
    }
    Ok(FrontierTable {
        id: samples.prompt_id().to_owned(),
        points,
        n_per_prompt: n,
        meta: FrontierMeta {
            seed: with_ci.map(|c| c.seed),
            replicates: with_ci.map(|c| c.replicates).unwrap_or(0),
            ci_level: with_ci.map(|c| c.ci_level),
            ci_aggregated_heuristically: false,
        },
    })
}

/// The exact frontier of a model channel, by enumeration.
pub fn frontier_exact(
    model: &DiscreteModel,
    channel: &str,
    grid: &LambdaGrid,
) -> Result<FrontierTable> {
    let base_mean = model.expected_reward(channel)?;
    let points: Result<Vec<FrontierPoint>> = grid
        .values()
        .iter()
        .map(|&lambda| {
            let tilted = oracle::tilt(model, channel, lambda)?;
            let kl = oracle::exact_kl(model, &tilted, KlDirection::TiltFromBase)?;
            let gain = oracle::expected_tilted_reward(model, &tilted, channel)? - base_mean;
            Ok(FrontierPoint {
                lambda: lambda.value(),
                kl: Estimate::point(kl, 0),
                gain: Estimate::point(gain, 0),
            })
        })
        .collect();
    Ok(FrontierTable {
        id: "exact".to_owned(),
        points: points?,
        n_per_prompt: 0,
        meta: FrontierMeta::exact(),
    })
}

/// Macro-average per-prompt tables into one dataset-level frontier.
///
/// All tables must share the lambda grid. Values are unweighted means across
/// prompts; CI bounds are averaged only where every table has them and are
/// flagged as heuristic in the metadata.
pub fn aggregate_frontiers(tables: &[FrontierTable]) -> Result<FrontierTable> {
    let first = tables.first().ok_or(Error::EmptyInput("frontier tables"))?;
    let grid: Vec<f64> = first.points.iter().map(|p| p.lambda).collect();
    for t in tables {
        let other: Vec<f64> = t.points.iter().map(|p| p.lambda).collect();
        if other != grid {
            return Err(Error::GridMismatch);
        }
    }
    let m = tables.len() as f64;
    let mut any_ci = false;
    let mut points = Vec::with_capacity(grid.len());
    for (i, &lambda) in grid.iter().enumerate() {
        let combine = |pick_fn: &dyn Fn(&FrontierPoint) -> &Estimate| -> Result<Estimate> {
            let values: Vec<f64> = tables.iter().map(|t| pick_fn(&t.points[i]).value).collect();
            let n = tables
                .iter()
                .map(|t| pick_fn(&t.points[i]).n)
                .min()
                .unwrap_or(0);
            let all_ci = tables.iter().all(|t| pick_fn(&t.points[i]).ci().is_some());
            if all_ci {
                let lo = tables
                    .iter()
                    .map(|t| pick_fn(&t.points[i]).ci_low.unwrap())
                    .sum::<f64>()
                    / m;
                let hi = tables
                    .iter()
                    .map(|t| pick_fn(&t.points[i]).ci_high.unwrap())
                    .sum::<f64>()
                    / m;
                let level = pick_fn(&first.points[i]).ci_level.unwrap_or(0.95);
                Estimate::with_ci(mean(&values), n, lo, hi, level)
            } else {
                Ok(Estimate::point(mean(&values), n))
            }
        };
        let kl = combine(&|p| &p.kl)?;
        let gain = combine(&|p| &p.gain)?;
        any_ci = any_ci || kl.ci().is_some() || gain.ci().is_some();
        points.push(FrontierPoint { lambda, kl, gain });
    }
    Ok(FrontierTable {
        id: "AGGREGATE".to_owned(),
        points,
        n_per_prompt: tables.iter().map(|t| t.n_per_prompt).min().unwrap_or(0),
        meta: FrontierMeta {
            seed: first.meta.seed,
            replicates: first.meta.replicates,
            ci_level: first.meta.ci_level,
            ci_aggregated_heuristically: any_ci,
        },
    })
}

/// Gain of a frontier table at KL budget `kl`, by piecewise-linear
/// interpolation in the KL coordinate (clamped to the table's KL range).
pub fn interpolate_gain_at_kl(table: &FrontierTable, kl: f64) -> Result<f64> {
    if !kl.is_finite() || kl < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "KL budget must be finite and nonnegative, got {kl}"
        )));
    }
    if table.points.is_empty() {
        return Err(Error::EmptyInput("frontier table"));
    }
    let mut pairs: Vec<(f64, f64)> = table
        .points
        .iter()
        .map(|p| (p.kl.value, p.gain.value))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    interp_clamped(&xs, &ys, kl)
}

/// How fast the estimated frontier approaches the exact one as the sample
/// size grows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub n_values: Vec<usize>,
    pub lambdas: Vec<f64>,
    /// `mean_abs_dev[i][j]`: mean over seeds of
    /// |gain_hat - gain| + |kl_hat - kl| at `n_values[i]`, `lambdas[j]`.
    pub mean_abs_dev: Vec<Vec<f64>>,
    /// Per-n deviation averaged over the grid.
    pub overall: Vec<f64>,
}

/// Sample `n` records per seed from the model, estimate the frontier, and
/// measure pointwise deviation from the exact frontier, for each `n` in
/// `ns`. `ns` must be strictly increasing; deviations shrink in n at the
/// usual root-n rate (in the mean over seeds).
pub fn frontier_convergence_study(
    model: &DiscreteModel,
    channel: &str,
    grid: &LambdaGrid,
    ns: &[usize],
    seeds: &[u64],
) -> Result<ConvergenceStudy> {
    if ns.is_empty() || seeds.is_empty() {
        return Err(Error::EmptyInput("convergence study sizes or seeds"));
    }
    for pair in ns.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::InvalidArgument(format!(
                "sample sizes must be strictly increasing, got {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    if ns[0] == 0 {
        return Err(Error::InvalidArgument("sample size 0".into()));
    }
    let exact = frontier_exact(model, channel, grid)?;

    // One task per (n, seed); stream index i keeps draws independent across
    // sizes while staying reproducible.
    let tasks: Vec<(usize, u64)> = (0..ns.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let deviations: Result<Vec<(usize, Vec<f64>)>> = tasks
        .par_iter()
        .map(|&(i, seed)| {
            let samples =
                model.sample_prompt("sim", ns[i], &mut stream_rng(seed, i as u64))?;
            let est = frontier_for_prompt(&samples, channel, grid, None)?;
            let devs = est
                .points
                .iter()
                .zip(&exact.points)
                .map(|(a, b)| (a.gain.value - b.gain.value).abs() + (a.kl.value - b.kl.value).abs())
                .collect();
            Ok((i, devs))
        })
        .collect();
    let deviations = deviations?;

    let lambdas: Vec<f64> = grid.values().iter().map(|l| l.value()).collect();
    let mut mean_abs_dev = vec![vec![0.0; lambdas.len()]; ns.len()];
    for (i, devs) in &deviations {
        for (j, d) in devs.iter().enumerate() {
            mean_abs_dev[*i][j] += d / seeds.len() as f64;
        }
    }
    let overall = mean_abs_dev.iter().map(|row| mean(row)).collect();
    Ok(ConvergenceStudy {
        n_values: ns.to_vec(),
        lambdas,
        mean_abs_dev,
        overall,
    })
}
