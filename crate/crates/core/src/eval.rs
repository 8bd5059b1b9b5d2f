//! Angular error metrics and the model-based vs. learned comparison.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::angle::{angular_error, Angle};
use crate::dataset::{
    check_header_against, csv_writer, format_sig9, parse_cell, parse_err, split, LabeledSample,
    SplitSpec,
};
use crate::mlp::{train, Mlp, TrainConfig, TrainHistory};
use crate::sensor::{model_direction, vacuum_pressures};
use crate::{Error, Result};

/// Header of the predicted-vs-true scatter CSV.
pub const SCATTER_HEADER: [&str; 3] = ["phi_true_deg", "phi_pred_deg", "method"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mlp,
    ModelBased,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mlp => "mlp",
            Method::ModelBased => "model_based",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(Method::Mlp),
            "model_based" => Ok(Method::ModelBased),
            other => Err(Error::invalid(format!("unknown method '{other}'"))),
        }
    }
}

/// One estimator output next to the true yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub phi_true: Angle,
    pub phi_pred: Option<Angle>,
}

/// Root mean square of wrap-aware angular errors over `(predicted, true)` pairs.
pub fn rmse_deg(pairs: &[(Angle, Angle)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("RMSE of an empty set"));
    }
    let sq: f64 = pairs.iter().map(|&(p, t)| angular_error(p, t).powi(2)).sum();
    Ok((sq / pairs.len() as f64).sqrt())
}

/// Mean absolute angular error over `(predicted, true)` pairs.
pub fn mae_deg(pairs: &[(Angle, Angle)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("MAE of an empty set"));
    }
    let sum: f64 = pairs.iter().map(|&(p, t)| angular_error(p, t)).sum();
    Ok(sum / pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub rmse_deg: f64,
    pub mae_deg: f64,
    /// All samples, scored or not.
    pub n_samples: usize,
    /// Samples without a defined prediction; excluded from the error metrics.
    pub n_undefined: usize,
}

/// Scores predictions, excluding undefined ones from RMSE/MAE.
pub fn score(predictions: &[Prediction]) -> Result<MethodScore> {
    let pairs: Vec<(Angle, Angle)> = predictions
        .iter()
        .filter_map(|p| p.phi_pred.map(|pred| (pred, p.phi_true)))
        .collect();
    Ok(MethodScore {
        rmse_deg: rmse_deg(&pairs)?,
        mae_deg: mae_deg(&pairs)?,
        n_samples: predictions.len(),
        n_undefined: predictions.len() - pairs.len(),
    })
}

/// Analytic estimator on each sample.
pub fn evaluate_model_based(samples: &[LabeledSample]) -> Vec<Prediction> {
    samples
        .iter()
        .map(|s| Prediction {
            phi_true: s.pose.phi(),
            phi_pred: vacuum_pressures(&s.frame)
                .ok()
                .and_then(|vp| model_direction(&vp).phi_pred),
        })
        .collect()
}

/// Learned estimator on each sample.
pub fn evaluate_mlp(model: &Mlp, samples: &[LabeledSample]) -> Result<Vec<Prediction>> {
    samples
        .iter()
        .map(|s| {
            Ok(Prediction {
                phi_true: s.pose.phi(),
                phi_pred: model.direction(&s.frame)?.phi_pred,
            })
        })
        .collect()
}

/// Everything produced for one seed of the comparison.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub train_len: usize,
    pub model: Mlp,
    pub history: TrainHistory,
    pub mlp: Vec<Prediction>,
    pub model_based: Vec<Prediction>,
}

impl SeedRun {
    pub fn predictions(&self, method: Method) -> &[Prediction] {
        match method {
            Method::Mlp => &self.mlp,
            Method::ModelBased => &self.model_based,
        }
    }
}

/// Splits with `seed`, trains with `seed`, and evaluates both estimators on
/// the validation fold.
pub fn run_seed(
    dataset: &[LabeledSample],
    split_spec: &SplitSpec,
    train_config: &TrainConfig,
    seed: u64,
) -> Result<SeedRun> {
    let (train_set, val_set) = split(dataset, &SplitSpec { seed, ..*split_spec })?;
    let config = TrainConfig {
        seed,
        ..train_config.clone()
    };
    let (model, history) = train(&train_set, &val_set, &config)?;
    let mlp = evaluate_mlp(&model, &val_set)?;
    let model_based = evaluate_model_based(&val_set);
    Ok(SeedRun {
        seed,
        train_len: train_set.len(),
        model,
        history,
        mlp,
        model_based,
    })
}

/// One [`run_seed`] per seed, in seed-list order. Seeds may run in parallel.
pub fn compare_runs(
    dataset: &[LabeledSample],
    split_spec: &SplitSpec,
    train_config: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<SeedRun>> {
    if seeds.is_empty() {
        return Err(Error::config("at least one seed is required"));
    }
    split_spec.validate()?;
    train_config.validate()?;
    crate::map_indexed(seeds.len(), |i| run_seed(dataset, split_spec, train_config, seeds[i]))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedScore {
    pub seed: u64,
    pub rmse_deg: f64,
    pub mae_deg: f64,
    pub n_samples: usize,
    pub n_undefined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub per_seed: Vec<SeedScore>,
    pub rmse_mean_deg: f64,
    /// Population standard deviation across seeds; 0 for a single run.
    pub rmse_std_deg: f64,
    pub mae_mean_deg: f64,
    pub mae_std_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seeds: Vec<u64>,
    /// Set when only one seed was run, so the std fields carry no information.
    pub single_run: bool,
    pub methods: Vec<MethodReport>,
}

impl EvalReport {
    pub fn method(&self, method: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == method)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregates per-seed runs into a report: MLP first, then model-based.
pub fn report(runs: &[SeedRun]) -> Result<EvalReport> {
    if runs.is_empty() {
        return Err(Error::config("at least one seed is required"));
    }
    let mut methods = Vec::new();
    for method in [Method::Mlp, Method::ModelBased] {
        let per_seed = runs
            .iter()
            .map(|run| {
                let s = score(run.predictions(method))?;
                Ok(SeedScore {
                    seed: run.seed,
                    rmse_deg: s.rmse_deg,
                    mae_deg: s.mae_deg,
                    n_samples: s.n_samples,
                    n_undefined: s.n_undefined,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let (rmse_mean_deg, rmse_std_deg) =
            mean_std(&per_seed.iter().map(|s| s.rmse_deg).collect::<Vec<_>>());
        let (mae_mean_deg, mae_std_deg) =
            mean_std(&per_seed.iter().map(|s| s.mae_deg).collect::<Vec<_>>());
        methods.push(MethodReport {
            method,
            per_seed,
            rmse_mean_deg,
            rmse_std_deg,
            mae_mean_deg,
            mae_std_deg,
        });
    }
    Ok(EvalReport {
        seeds: runs.iter().map(|r| r.seed).collect(),
        single_run: runs.len() == 1,
        methods,
    })
}

/// Full comparison: per seed split, train, evaluate both methods; aggregate.
pub fn compare(
    dataset: &[LabeledSample],
    split_spec: &SplitSpec,
    train_config: &TrainConfig,
    seeds: &[u64],
) -> Result<EvalReport> {
    report(&compare_runs(dataset, split_spec, train_config, seeds)?)
}

/// Writes defined predictions as `phi_true_deg,phi_pred_deg,method`.
pub fn export_scatter(predictions: &[Prediction], method: Method, path: impl AsRef<Path>) -> Result<()> {
    write_scatter_to(predictions, method, BufWriter::new(File::create(path)?))
}

pub fn write_scatter_to<W: Write>(predictions: &[Prediction], method: Method, out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(SCATTER_HEADER)?;
    for p in predictions {
        if let Some(pred) = p.phi_pred {
            w.write_record([
                format_sig9(p.phi_true.degrees()),
                format_sig9(pred.degrees()),
                method.as_str().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a scatter CSV back as `(phi_true, phi_pred, method)` rows.
pub fn read_scatter(path: impl AsRef<Path>) -> Result<Vec<(f64, f64, Method)>> {
    read_scatter_from(BufReader::new(File::open(path)?))
}

pub fn read_scatter_from<R: Read>(input: R) -> Result<Vec<(f64, f64, Method)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| parse_err(1, "-", "missing header"))??;
    check_header_against(&header, &SCATTER_HEADER)?;
    let mut rows = Vec::new();
    for (i, record) in records.enumerate() {
        let line = i + 2;
        let record = record?;
        if record.len() != SCATTER_HEADER.len() {
            return Err(parse_err(line, "-", format!("{} columns, expected 3", record.len())));
        }
        let truth = parse_cell(&record, line, 0, SCATTER_HEADER[0])?;
        let pred = parse_cell(&record, line, 1, SCATTER_HEADER[1])?;
        let method = record[2]
            .parse()
            .map_err(|e: Error| parse_err(line, SCATTER_HEADER[2], e.to_string()))?;
        rows.push((truth, pred, method));
    }
    Ok(rows)
}
