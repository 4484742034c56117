//! Serialization: NDJSON sample streams, checkpoint logs, CSV tables, model
//! JSON, and atomic file writes.
//!
//! Conventions: line numbers in errors are 1-based; CSV floats are rendered
//! with 17 significant digits (`{:.16e}`) so that reading a table back
//! reproduces every f64 bit-for-bit; files are written to a temporary file
//! in the destination directory and renamed into place, so readers never
//! observe a half-written table.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bon::BonCurve;
use crate::error::{Error, Result};
use crate::frontier::{FrontierMeta, FrontierTable};
use crate::hacking::SweepRow;
use crate::oracle::DiscreteModel;
use crate::types::{validate_prompt_samples, PromptSamples, SampleRecord};

/// Render `x` with 17 significant digits; parses back to the same f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write `path` atomically: the content goes to a temporary file in the same
/// directory which is renamed over the destination only after `write_fn`
/// succeeds.
pub fn write_atomic(
    path: &Path,
    write_fn: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    write_fn(&mut tmp)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

// ---------------------------------------------------------------- samples

/// Read an NDJSON stream of sample records (one JSON object per line; blank
/// lines are ignored), group them by prompt id, and validate each group.
/// Records of one prompt may be interleaved with other prompts' records.
pub fn read_samples<R: BufRead>(reader: R) -> Result<BTreeMap<String, PromptSamples>> {
    let mut groups: BTreeMap<String, (Vec<usize>, Vec<SampleRecord>)> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SampleRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        for (channel, value) in &record.rewards {
            if !value.is_finite() {
                return Err(Error::Validation {
                    line: line_no,
                    message: format!("non-finite reward in channel {channel:?}"),
                });
            }
        }
        let entry = groups.entry(record.prompt_id.clone()).or_default();
        entry.0.push(line_no);
        entry.1.push(record);
    }
    if groups.is_empty() {
        return Err(Error::EmptyInput("sample stream"));
    }
    let mut out = BTreeMap::new();
    for (prompt_id, (lines, records)) in groups {
        let samples = validate_prompt_samples(records).map_err(|e| at_line(e, &lines))?;
        out.insert(prompt_id, samples);
    }
    Ok(out)
}

/// Rewrite an index-carrying validation error against source line numbers.
fn at_line(err: Error, lines: &[usize]) -> Error {
    match err {
        Error::InconsistentChannels {
            index,
            expected,
            got,
        } => Error::Validation {
            line: lines[index],
            message: format!(
                "inconsistent channels: expected [{}], got [{}]",
                expected.join(", "),
                got.join(", ")
            ),
        },
        Error::NonFiniteReward { index, channel } => Error::Validation {
            line: lines[index],
            message: format!("non-finite reward in channel {channel:?}"),
        },
        Error::EmptyInput(what) => Error::Validation {
            line: lines[0],
            message: format!("empty input: {what}"),
        },
        other => other,
    }
}

pub fn read_samples_path(path: &Path) -> Result<BTreeMap<String, PromptSamples>> {
    read_samples(BufReader::new(File::open(path)?))
}

/// Write records as NDJSON, one object per line.
pub fn write_samples<'a, W: Write + ?Sized>(
    writer: &mut W,
    records: impl IntoIterator<Item = &'a SampleRecord>,
) -> Result<()> {
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::InvalidArgument(format!("unserializable record: {e}")))?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

// -------------------------------------------------------- checkpoint logs

/// One evaluated checkpoint of some alignment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointRecord {
    pub algorithm: String,
    pub checkpoint: u64,
    /// KL(policy || base) at this checkpoint; nonnegative.
    pub kl: f64,
    /// Reward gain over the base policy at this checkpoint.
    pub reward_gain: f64,
}

/// Read an NDJSON checkpoint log. Within each algorithm, checkpoint indices
/// must be strictly increasing in file order.
pub fn read_checkpoint_log<R: BufRead>(reader: R) -> Result<Vec<CheckpointRecord>> {
    let mut records = Vec::new();
    let mut last_checkpoint: BTreeMap<String, u64> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CheckpointRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        if !record.kl.is_finite() || record.kl < 0.0 {
            return Err(Error::Validation {
                line: line_no,
                message: format!("kl must be finite and nonnegative, got {}", record.kl),
            });
        }
        if !record.reward_gain.is_finite() {
            return Err(Error::Validation {
                line: line_no,
                message: "non-finite reward_gain".into(),
            });
        }
        if let Some(&prev) = last_checkpoint.get(&record.algorithm) {
            if record.checkpoint <= prev {
                return Err(Error::Monotonicity {
                    algorithm: record.algorithm,
                    checkpoint: record.checkpoint,
                    line: line_no,
                });
            }
        }
        last_checkpoint.insert(record.algorithm.clone(), record.checkpoint);
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::EmptyInput("checkpoint log"));
    }
    Ok(records)
}

// ------------------------------------------------------------- CSV tables

const FRONTIER_HEADER: [&str; 9] = [
    "prompt_id",
    "lambda",
    "kl",
    "kl_ci_low",
    "kl_ci_high",
    "gain",
    "gain_ci_low",
    "gain_ci_high",
    "n",
];

fn csv_io(err: csv::Error) -> Error {
    match err.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("csv failure: {other:?}")),
    }
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Write frontier tables as CSV (17-significant-digit floats, empty CI
/// fields when no interval was computed).
pub fn write_frontier_csv<W: Write>(writer: W, tables: &[FrontierTable]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(FRONTIER_HEADER).map_err(csv_io)?;
    for table in tables {
        for p in &table.points {
            w.write_record([
                table.id.as_str(),
                &fmt_f64(p.lambda),
                &fmt_f64(p.kl.value),
                &opt_f64(p.kl.ci_low),
                &opt_f64(p.kl.ci_high),
                &fmt_f64(p.gain.value),
                &opt_f64(p.gain.ci_low),
                &opt_f64(p.gain.ci_high),
                &p.gain.n.to_string(),
            ])
            .map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One parsed frontier CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierCsvRow {
    pub prompt_id: String,
    pub lambda: f64,
    pub kl: f64,
    pub kl_ci: Option<(f64, f64)>,
    pub gain: f64,
    pub gain_ci: Option<(f64, f64)>,
    pub n: usize,
}

fn parse_field<T: std::str::FromStr>(field: &str, name: &str, line: usize) -> Result<T> {
    field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad {name}: {field:?}"),
    })
}

fn parse_ci(lo: &str, hi: &str, name: &str, line: usize) -> Result<Option<(f64, f64)>> {
    match (lo.is_empty(), hi.is_empty()) {
        (true, true) => Ok(None),
        (false, false) => {
            let lo: f64 = parse_field(lo, name, line)?;
            let hi: f64 = parse_field(hi, name, line)?;
            if lo > hi {
                return Err(Error::Validation {
                    line,
                    message: format!("{name} bounds out of order: [{lo}, {hi}]"),
                });
            }
            Ok(Some((lo, hi)))
        }
        _ => Err(Error::Validation {
            line,
            message: format!("{name} bounds must both be present or both empty"),
        }),
    }
}

/// Read a frontier CSV produced by [`write_frontier_csv`].
pub fn read_frontier_csv<R: Read>(reader: R) -> Result<Vec<FrontierCsvRow>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    {
        let headers = r.headers().map_err(csv_io)?;
        let expected: Vec<&str> = FRONTIER_HEADER.to_vec();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Parse {
                line: 1,
                message: format!("unexpected header: {headers:?}"),
            });
        }
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(csv_io)?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(rows.len() + 2);
        if record.len() != FRONTIER_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, got {}", FRONTIER_HEADER.len(), record.len()),
            });
        }
        let lambda: f64 = parse_field(&record[1], "lambda", line)?;
        let kl: f64 = parse_field(&record[2], "kl", line)?;
        let gain: f64 = parse_field(&record[5], "gain", line)?;
        if !(lambda.is_finite() && lambda > 0.0) || !kl.is_finite() || !gain.is_finite() {
            return Err(Error::Validation {
                line,
                message: "lambda must be positive and kl/gain finite".into(),
            });
        }
        rows.push(FrontierCsvRow {
            prompt_id: record[0].to_owned(),
            lambda,
            kl,
            kl_ci: parse_ci(&record[3], &record[4], "kl_ci", line)?,
            gain,
            gain_ci: parse_ci(&record[6], &record[7], "gain_ci", line)?,
            n: parse_field(&record[8], "n", line)?,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("frontier csv"));
    }
    Ok(rows)
}

/// JSON form of the frontier tables: same per-row fields as the CSV plus the
/// table metadata.
pub fn write_frontier_json<W: Write + ?Sized>(writer: &mut W, tables: &[FrontierTable]) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        prompt_id: &'a str,
        lambda: f64,
        kl: f64,
        kl_ci_low: Option<f64>,
        kl_ci_high: Option<f64>,
        gain: f64,
        gain_ci_low: Option<f64>,
        gain_ci_high: Option<f64>,
        n: usize,
    }
    #[derive(Serialize)]
    struct Table<'a> {
        id: &'a str,
        n_per_prompt: usize,
        meta: &'a FrontierMeta,
        rows: Vec<Row<'a>>,
    }
    let view: Vec<Table> = tables
        .iter()
        .map(|t| Table {
            id: &t.id,
            n_per_prompt: t.n_per_prompt,
            meta: &t.meta,
            rows: t
                .points
                .iter()
                .map(|p| Row {
                    prompt_id: &t.id,
                    lambda: p.lambda,
                    kl: p.kl.value,
                    kl_ci_low: p.kl.ci_low,
                    kl_ci_high: p.kl.ci_high,
                    gain: p.gain.value,
                    gain_ci_low: p.gain.ci_low,
                    gain_ci_high: p.gain.ci_high,
                    n: p.gain.n,
                })
                .collect(),
        })
        .collect();
    serde_json::to_writer_pretty(&mut *writer, &view)
        .map_err(|e| Error::InvalidArgument(format!("unserializable table: {e}")))?;
    writeln!(writer)?;
    Ok(())
}

/// Write best-of-n curves as CSV.
pub fn write_bon_csv<W: Write>(writer: W, curves: &[BonCurve]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["prompt_id", "bon_n", "kl", "gain", "gain_ci_low", "gain_ci_high"])
        .map_err(csv_io)?;
    for curve in curves {
        for p in &curve.points {
            w.write_record([
                curve.id.as_str(),
                &p.bon_n.to_string(),
                &fmt_f64(p.kl),
                &fmt_f64(p.gain.value),
                &opt_f64(p.gain.ci_low),
                &opt_f64(p.gain.ci_high),
            ])
            .map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write an over-optimization sweep as CSV.
pub fn write_sweep_csv<W: Write>(writer: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "lambda",
        "kl_gold",
        "gold_reward_goldaligned",
        "gold_reward_proxyaligned",
        "gap",
    ])
    .map_err(csv_io)?;
    for r in rows {
        w.write_record([
            fmt_f64(r.lambda),
            fmt_f64(r.kl_gold),
            fmt_f64(r.gold_reward_goldaligned),
            fmt_f64(r.gold_reward_proxyaligned),
            fmt_f64(r.gap),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

// ------------------------------------------------------------- model JSON

/// Read a discrete model from JSON; structural invariants are validated.
pub fn read_model<R: Read>(reader: R) -> Result<DiscreteModel> {
    serde_json::from_reader(reader).map_err(|e| Error::InvalidModel(e.to_string()))
}

pub fn read_model_path(path: &Path) -> Result<DiscreteModel> {
    read_model(BufReader::new(File::open(path)?))
}

pub fn write_model<W: Write + ?Sized>(writer: &mut W, model: &DiscreteModel) -> Result<()> {
    serde_json::to_writer_pretty(&mut *writer, model)
        .map_err(|e| Error::InvalidModel(e.to_string()))?;
    writeln!(writer)?;
    Ok(())
}
