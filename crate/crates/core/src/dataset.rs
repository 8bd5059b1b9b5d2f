//! Labeled samples: CSV persistence, train/validation split, feature scaling.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::angle::Angle;
use crate::rng::substream;
use crate::sensor::{GroundTruthPose, SensorFrame, CHAMBERS};
use crate::{Error, Result};

/// Exact header of the dataset CSV.
pub const CSV_HEADER: [&str; 7] = [
    "p_ch1_kpa",
    "p_ch2_kpa",
    "p_ch3_kpa",
    "p_ch4_kpa",
    "p_atm_kpa",
    "delta_mm",
    "phi_deg",
];

/// A sensor reading with its ground-truth pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub frame: SensorFrame,
    pub pose: GroundTruthPose,
}

/// Formats `x` with 9 significant digits in positional notation.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exponent = x.abs().log10().floor() as i32;
    let decimals = (8 - exponent).max(0) as usize;
    format!("{x:.decimals$}")
}

fn format_phi(phi: Angle) -> String {
    let text = format_sig9(phi.degrees());
    // 359.9999999... rounds to 360 at 9 digits, which is outside the column's range.
    if text.parse::<f64>().is_ok_and(|v| v >= 360.0) {
        format_sig9(0.0)
    } else {
        text
    }
}

pub(crate) fn csv_writer<W: Write>(inner: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(inner)
}

/// Writes samples to `path` using the dataset CSV schema.
pub fn write_csv(samples: &[LabeledSample], path: impl AsRef<Path>) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    write_csv_to(samples, file)
}

pub fn write_csv_to<W: Write>(samples: &[LabeledSample], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(CSV_HEADER)?;
    for s in samples {
        let p = s.frame.p_ch();
        w.write_record([
            format_sig9(p[0]),
            format_sig9(p[1]),
            format_sig9(p[2]),
            format_sig9(p[3]),
            format_sig9(s.frame.p_atm()),
            format_sig9(s.pose.delta_mm()),
            format_phi(s.pose.phi()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset CSV. Errors name the 1-based line (the header is line 1)
/// and the offending column.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<LabeledSample>> {
    read_csv_from(BufReader::new(File::open(path)?))
}

pub fn read_csv_from<R: Read>(input: R) -> Result<Vec<LabeledSample>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = reader.records();

    let header = match records.next() {
        Some(h) => h?,
        None => {
            return Err(parse_err(1, "-", "missing header"));
        }
    };
    check_header(&header)?;

    let mut samples = Vec::new();
    for (i, record) in records.enumerate() {
        let line = i + 2;
        let record = record?;
        samples.push(parse_row(&record, line)?);
    }
    Ok(samples)
}

pub(crate) fn parse_err(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

pub(crate) fn check_header_against(header: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    for (i, name) in expected.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == *name => {}
            Some(got) => {
                return Err(parse_err(1, name, format!("expected column '{name}', found '{got}'")))
            }
            None => return Err(parse_err(1, name, "missing column")),
        }
    }
    if header.len() > expected.len() {
        let extra = header.get(expected.len()).unwrap_or_default();
        return Err(parse_err(1, extra, "unexpected extra column"));
    }
    Ok(())
}

fn check_header(header: &csv::StringRecord) -> Result<()> {
    check_header_against(header, &CSV_HEADER)
}

pub(crate) fn parse_cell(record: &csv::StringRecord, line: usize, col: usize, name: &str) -> Result<f64> {
    let cell = record
        .get(col)
        .ok_or_else(|| parse_err(line, name, "missing column"))?;
    let value: f64 = cell
        .trim()
        .parse()
        .map_err(|_| parse_err(line, name, format!("'{cell}' is not a number")))?;
    if !value.is_finite() {
        return Err(parse_err(line, name, format!("'{cell}' is not finite")));
    }
    Ok(value)
}

fn parse_row(record: &csv::StringRecord, line: usize) -> Result<LabeledSample> {
    if record.len() > CSV_HEADER.len() {
        return Err(parse_err(line, "-", format!("{} columns, expected 7", record.len())));
    }
    let mut values = [0.0; 7];
    for (col, name) in CSV_HEADER.iter().enumerate() {
        values[col] = parse_cell(record, line, col, name)?;
    }
    let [c1, c2, c3, c4, atm, delta, phi] = values;
    let frame = SensorFrame::new([c1, c2, c3, c4], atm)
        .map_err(|e| parse_err(line, "p_ch*_kpa", e.to_string()))?;
    if !(0.0..360.0).contains(&phi) {
        return Err(parse_err(line, "phi_deg", format!("{phi} not in [0, 360)")));
    }
    let pose = GroundTruthPose::from_degrees(delta, phi)
        .map_err(|e| parse_err(line, "delta_mm", e.to_string()))?;
    Ok(LabeledSample { frame, pose })
}

/// How to partition samples into training and validation folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_fraction > 0.0 && self.train_fraction < 1.0 {
            Ok(())
        } else {
            Err(Error::config(format!(
                "train fraction {} must be in (0, 1)",
                self.train_fraction
            )))
        }
    }

    /// Number of training samples out of `n`: `round(n·f)`, kept within
    /// `[1, n-1]` so neither fold is empty.
    pub fn train_len(&self, n: usize) -> usize {
        let raw = (n as f64 * self.train_fraction).round() as usize;
        raw.clamp(1, n.saturating_sub(1).max(1))
    }
}

/// Shuffled index partition `(train, validation)` of `0..n`.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    spec.validate()?;
    if n < 2 {
        return Err(Error::config(format!("need at least 2 samples to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(spec.seed, 0));
    let validation = order.split_off(spec.train_len(n));
    Ok((order, validation))
}

/// Shuffle-then-cut split into `(train, validation)`.
pub fn split(
    samples: &[LabeledSample],
    spec: &SplitSpec,
) -> Result<(Vec<LabeledSample>, Vec<LabeledSample>)> {
    let (train, val) = split_indices(samples.len(), spec)?;
    Ok((
        train.iter().map(|&i| samples[i]).collect(),
        val.iter().map(|&i| samples[i]).collect(),
    ))
}

/// Per-channel mean and population standard deviation of the chamber pressures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: [f64; CHAMBERS],
    pub std: [f64; CHAMBERS],
}

impl FeatureStats {
    pub fn new(mean: [f64; CHAMBERS], std: [f64; CHAMBERS]) -> Result<Self> {
        for ch in 0..CHAMBERS {
            if !mean[ch].is_finite() {
                return Err(Error::invalid(format!("channel {} mean is not finite", ch + 1)));
            }
            if !(std[ch].is_finite() && std[ch] > 0.0) {
                return Err(Error::DegenerateChannel { channel: ch + 1 });
            }
        }
        Ok(Self { mean, std })
    }

    /// `(p_ch[j] - mean[j]) / std[j]` for each channel.
    pub fn standardize(&self, frame: &SensorFrame) -> [f64; CHAMBERS] {
        let p = frame.p_ch();
        std::array::from_fn(|j| (p[j] - self.mean[j]) / self.std[j])
    }
}

/// Statistics of the training fold's chamber pressures.
pub fn feature_stats(train: &[LabeledSample]) -> Result<FeatureStats> {
    if train.is_empty() {
        return Err(Error::config("cannot compute feature statistics of an empty set"));
    }
    let n = train.len() as f64;
    let mut mean = [0.0; CHAMBERS];
    for s in train {
        for (m, p) in mean.iter_mut().zip(s.frame.p_ch()) {
            *m += p;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let mut var = [0.0; CHAMBERS];
    for s in train {
        for (j, p) in s.frame.p_ch().iter().enumerate() {
            var[j] += (p - mean[j]).powi(2);
        }
    }
    let mut std = [0.0; CHAMBERS];
    for j in 0..CHAMBERS {
        std[j] = (var[j] / n).sqrt();
        // A constant channel leaves only rounding noise in the variance.
        if std[j] <= 1e-12 * mean[j].abs().max(1.0) {
            return Err(Error::DegenerateChannel { channel: j + 1 });
        }
    }
    FeatureStats::new(mean, std)
}

/// Standardized input vector for `frame`.
pub fn standardize(frame: &SensorFrame, stats: &FeatureStats) -> [f64; CHAMBERS] {
    stats.standardize(frame)
}
