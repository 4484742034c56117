//! Core domain types: sample records, validated per-prompt sample groups,
//! regularization strength, and point/interval estimates.

use std::borrow::Borrow;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of a reward channel (a scored quantity attached to every response).
///
/// Invariant: non-empty. Channels are compared as plain strings, so lookups
/// accept `&str`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RewardChannel(String);

impl RewardChannel {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::InvalidArgument(
                "reward channel name must be non-empty".into(),
            ));
        }
        Ok(RewardChannel(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for RewardChannel {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        RewardChannel::new(value)
    }
}

impl From<RewardChannel> for String {
    fn from(c: RewardChannel) -> String {
        c.0
    }
}

impl Borrow<str> for RewardChannel {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RewardChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One scored response to a prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub prompt_id: String,
    pub response_id: String,
    /// Reward value per channel. BTreeMap keeps serialization order stable.
    pub rewards: BTreeMap<RewardChannel, f64>,
}

impl SampleRecord {
    /// Reward under `channel`, if the record carries it.
    pub fn reward(&self, channel: &str) -> Option<f64> {
        self.rewards.get(channel).copied()
    }
}

/// A validated group of records for a single prompt.
///
/// Guarantees: at least one record, a single prompt id, identical channel
/// sets across records, and finite rewards everywhere. Per-channel columns
/// are materialized once so estimators can work on plain slices.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSamples {
    prompt_id: String,
    records: Vec<SampleRecord>,
    columns: BTreeMap<RewardChannel, Vec<f64>>,
}

/// Validate `records` as one prompt's sample group.
///
/// Index-carrying errors refer to positions within `records` (0-based).
pub fn validate_prompt_samples(records: Vec<SampleRecord>) -> Result<PromptSamples> {
    let first = records.first().ok_or(Error::EmptyInput("prompt samples"))?;
    if first.rewards.is_empty() {
        return Err(Error::EmptyInput("reward channels in first record"));
    }
    let prompt_id = first.prompt_id.clone();
    let expected: Vec<&RewardChannel> = first.rewards.keys().collect();

    for (index, rec) in records.iter().enumerate() {
        if rec.prompt_id != prompt_id {
            return Err(Error::MixedPromptIds {
                index,
                expected: prompt_id,
                got: rec.prompt_id.clone(),
            });
        }
        if rec.rewards.len() != expected.len()
            || !rec.rewards.keys().zip(&expected).all(|(a, b)| a == *b)
        {
            return Err(Error::InconsistentChannels {
                index,
                expected: expected.iter().map(|c| c.as_str().to_owned()).collect(),
                got: rec.rewards.keys().map(|c| c.as_str().to_owned()).collect(),
            });
        }
        for (channel, &value) in &rec.rewards {
            if !value.is_finite() {
                return Err(Error::NonFiniteReward {
                    index,
                    channel: channel.as_str().to_owned(),
                });
            }
        }
    }

    let mut columns: BTreeMap<RewardChannel, Vec<f64>> = BTreeMap::new();
    for channel in first.rewards.keys() {
        columns.insert(
            channel.clone(),
            records.iter().map(|r| r.rewards[channel]).collect(),
        );
    }

    Ok(PromptSamples {
        prompt_id,
        records,
        columns,
    })
}

impl PromptSamples {
    /// See [`validate_prompt_samples`].
    pub fn validate(records: Vec<SampleRecord>) -> Result<Self> {
        validate_prompt_samples(records)
    }

    pub fn prompt_id(&self) -> &str {
        &self.prompt_id
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    /// Number of records.
    pub fn n(&self) -> usize {
        self.records.len()
    }

    /// Channel names, in sorted order.
    pub fn channels(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(|c| c.as_str())
    }

    pub fn has_channel(&self, channel: &str) -> bool {
        self.columns.contains_key(channel)
    }

    /// The column of rewards for `channel`, aligned with `records()`.
    pub fn channel_values(&self, channel: &str) -> Result<&[f64]> {
        self.columns
            .get(channel)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownChannel(channel.to_owned()))
    }
}

/// Regularization strength of a tilted policy. Finite and strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Lambda(f64);

impl Lambda {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value <= 0.0 {
            return Err(Error::InvalidLambda(value));
        }
        Ok(Lambda(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Lambda {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Lambda::new(value)
    }
}

impl From<Lambda> for f64 {
    fn from(l: Lambda) -> f64 {
        l.0
    }
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A scalar estimate with the sample count behind it and an optional
/// confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    /// Number of samples the estimate was computed from (0 for exact values).
    pub n: usize,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// Nominal coverage of the interval, e.g. 0.95.
    pub ci_level: Option<f64>,
}

impl Estimate {
    /// Estimate without an interval.
    pub fn point(value: f64, n: usize) -> Self {
        Estimate {
            value,
            n,
            ci_low: None,
            ci_high: None,
            ci_level: None,
        }
    }

    /// Estimate with a `level` confidence interval `[lo, hi]`.
    pub fn with_ci(value: f64, n: usize, lo: f64, hi: f64, level: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::InvalidArgument(format!(
                "confidence interval bounds out of order: [{lo}, {hi}]"
            )));
        }
        if !(0.0 < level && level < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "confidence level {level} outside (0, 1)"
            )));
        }
        Ok(Estimate {
            value,
            n,
            ci_low: Some(lo),
            ci_high: Some(hi),
            ci_level: Some(level),
        })
    }

    /// The interval as a pair, when present.
    pub fn ci(&self) -> Option<(f64, f64)> {
        match (self.ci_low, self.ci_high) {
            (Some(lo), Some(hi)) => Some((lo, hi)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(prompt: &str, resp: &str, pairs: &[(&str, f64)]) -> SampleRecord {
        SampleRecord {
            prompt_id: prompt.into(),
            response_id: resp.into(),
            rewards: pairs
                .iter()
                .map(|(c, v)| (RewardChannel::new(*c).unwrap(), *v))
                .collect(),
        }
    }

    #[test]
    fn accepts_consistent_group() {
        let ps = validate_prompt_samples(vec![
            rec("p1", "a", &[("gold", 1.0), ("proxy", 0.5)]),
            rec("p1", "b", &[("gold", -1.0), ("proxy", 2.0)]),
        ])
        .unwrap();
        assert_eq!(ps.prompt_id(), "p1");
        assert_eq!(ps.n(), 2);
        assert_eq!(ps.channel_values("gold").unwrap(), &[1.0, -1.0]);
        assert_eq!(ps.channel_values("proxy").unwrap(), &[0.5, 2.0]);
        assert_eq!(ps.channels().collect::<Vec<_>>(), vec!["gold", "proxy"]);
    }

    #[test]
    fn rejects_empty_group() {
        assert!(matches!(
            validate_prompt_samples(vec![]),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn rejects_mixed_prompts_with_offending_index() {
        let err = validate_prompt_samples(vec![
            rec("p1", "a", &[("r", 0.0)]),
            rec("p2", "b", &[("r", 0.0)]),
        ])
        .unwrap_err();
        match err {
            Error::MixedPromptIds { index, got, .. } => {
                assert_eq!(index, 1);
                assert_eq!(got, "p2");
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn rejects_channel_drift() {
        let err = validate_prompt_samples(vec![
            rec("p1", "a", &[("r", 0.0), ("s", 0.0)]),
            rec("p1", "b", &[("r", 0.0)]),
            rec("p1", "c", &[("r", 0.0), ("s", 0.0)]),
        ])
        .unwrap_err();
        match err {
            Error::InconsistentChannels { index, expected, got } => {
                assert_eq!(index, 1);
                assert_eq!(expected, vec!["r".to_string(), "s".to_string()]);
                assert_eq!(got, vec!["r".to_string()]);
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn rejects_non_finite_rewards() {
        let err = validate_prompt_samples(vec![
            rec("p1", "a", &[("r", 0.0)]),
            rec("p1", "b", &[("r", f64::NAN)]),
        ])
        .unwrap_err();
        match err {
            Error::NonFiniteReward { index, channel } => {
                assert_eq!(index, 1);
                assert_eq!(channel, "r");
            }
            other => panic!("wrong error: {other}"),
        }
        let err = validate_prompt_samples(vec![rec("p1", "a", &[("r", f64::INFINITY)])]);
        assert!(matches!(err, Err(Error::NonFiniteReward { index: 0, .. })));
    }

    #[test]
    fn validation_is_idempotent() {
        let records = vec![
            rec("p1", "a", &[("r", 1.0)]),
            rec("p1", "b", &[("r", 2.0)]),
        ];
        let once = validate_prompt_samples(records).unwrap();
        let twice = validate_prompt_samples(once.records().to_vec()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn unknown_channel_lookup_errors() {
        let ps = validate_prompt_samples(vec![rec("p1", "a", &[("r", 1.0)])]).unwrap();
        assert!(matches!(
            ps.channel_values("nope"),
            Err(Error::UnknownChannel(name)) if name == "nope"
        ));
    }

    #[test]
    fn lambda_domain() {
        assert!(Lambda::new(0.5).is_ok());
        for bad in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(Lambda::new(bad), Err(Error::InvalidLambda(_))));
        }
    }

    #[test]
    fn estimate_ci_ordering_enforced() {
        assert!(Estimate::with_ci(0.0, 10, 1.0, -1.0, 0.95).is_err());
        assert!(Estimate::with_ci(0.0, 10, -1.0, 1.0, 1.5).is_err());
        let e = Estimate::with_ci(0.5, 10, 0.1, 0.9, 0.95).unwrap();
        assert_eq!(e.ci(), Some((0.1, 0.9)));
        assert_eq!(Estimate::point(0.5, 3).ci(), None);
    }

    #[test]
    fn record_round_trips_through_json() {
        let r = rec("p1", "a", &[("gold", 1.5), ("proxy", -0.25)]);
        let json = serde_json::to_string(&r).unwrap();
        let back: SampleRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(r, back);
    }

    #[test]
    fn record_json_rejects_unknown_fields_and_empty_channel() {
        let bad = r#"{"prompt_id":"p","response_id":"a","rewards":{"r":1.0},"extra":1}"#;
        assert!(serde_json::from_str::<SampleRecord>(bad).is_err());
        let empty = r#"{"prompt_id":"p","response_id":"a","rewards":{"":1.0}}"#;
        assert!(serde_json::from_str::<SampleRecord>(empty).is_err());
    }
}
