use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use cuphaptics::dataset::{read_csv, split, write_csv, SplitSpec};
use cuphaptics::eval::{compare_runs, export_scatter, report, EvalReport, Method};
use cuphaptics::mlp::{load_model, save_trained, train, InputScaling, RmspropConfig, TrainConfig, TrainHistory};
use cuphaptics::search::{batch_search, write_batch_csv, BatchRow, Estimator, SearchConfig, SearchGrid};
use cuphaptics::sensor::{model_direction, vacuum_pressures, SensorFrame, CHAMBERS, STANDARD_ATMOSPHERE_KPA};
use cuphaptics::synth::{generate_dataset, CupGeometry, GenerationConfig, PressureFieldParams, Response, Sampling};
use cuphaptics::Error;

const THREADS_ENV: &str = "CUPHAPTICS_THREADS";

#[derive(Debug, Parser)]
#[command(name = "cuphaptics", version, about = "Yaw estimation and haptic search for a four-chamber suction cup")]
struct Cli {
    /// Seed for every random choice (data, split, initialization, noise).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Directory for output files; created if missing.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// Output format for reports, histories, search results and predictions
    /// [default: csv for search, json otherwise].
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic labelled dataset (dataset.csv).
    Generate(GenerateArgs),
    /// Train the network on a dataset (model.cupmlp, model.cupmlp.json, history).
    Train(TrainArgs),
    /// Train and evaluate both estimators over several seeds (report, scatter files).
    Compare(CompareArgs),
    /// Batch haptic search simulation (search.csv).
    Search(SearchArgs),
    /// Estimate the direction for a single pressure reading.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
struct FieldArgs {
    /// Chamber noise standard deviation, kPa.
    #[arg(long, default_value_t = 0.3)]
    noise_sigma: f64,

    #[arg(long, value_enum, default_value_t = ResponseArg::Sigmoid)]
    response: ResponseArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ResponseArg {
    Affine,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SamplingArg {
    Grid,
    Random,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Number of samples.
    #[arg(long, default_value_t = 25_273)]
    n: usize,

    #[arg(long, default_value_t = 7.0)]
    delta_min: f64,

    #[arg(long, default_value_t = 14.0)]
    delta_max: f64,

    #[command(flatten)]
    field: FieldArgs,

    #[arg(long, value_enum, default_value_t = SamplingArg::Random)]
    sampling: SamplingArg,
}

#[derive(Debug, Args)]
struct TrainOptions {
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,

    /// Maximum number of epochs.
    #[arg(long, default_value_t = 200)]
    epochs: usize,

    #[arg(long, default_value_t = 64)]
    batch_size: usize,

    #[arg(long, default_value_t = 1e-3)]
    lr: f64,

    /// Epochs without validation improvement before stopping.
    #[arg(long, default_value_t = 20)]
    patience: usize,

    /// Feed raw pressures to the network instead of standardized ones.
    #[arg(long)]
    raw_inputs: bool,
}

impl TrainOptions {
    fn config(&self, seed: u64) -> (SplitSpec, TrainConfig) {
        let split = SplitSpec {
            train_fraction: self.train_fraction,
            seed,
        };
        let train = TrainConfig {
            batch_size: self.batch_size,
            max_epochs: self.epochs,
            patience: self.patience,
            seed,
            optimizer: RmspropConfig {
                lr: self.lr,
                ..Default::default()
            },
            input_scaling: if self.raw_inputs {
                InputScaling::Raw
            } else {
                InputScaling::Standardized
            },
            ..Default::default()
        };
        (split, train)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,

    #[command(flatten)]
    options: TrainOptions,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    data: PathBuf,

    /// Comma-separated seeds; each one sets the split and the initialization.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    seeds: Vec<u64>,

    #[command(flatten)]
    options: TrainOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    Oracle,
    #[value(name = "model-based", alias = "model", alias = "model_based")]
    ModelBased,
    Mlp,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long, value_enum, value_delimiter = ',', default_value = "model-based")]
    estimator: Vec<EstimatorArg>,

    /// Trained model, required with `--estimator mlp`.
    #[arg(long)]
    model: Option<PathBuf>,

    /// Initial offsets, mm.
    #[arg(long, value_delimiter = ',', default_value = "14")]
    delta0: Vec<f64>,

    /// Initial yaws, degrees; defaults to 0, 10, ..., 350.
    #[arg(long, value_delimiter = ',')]
    phi0: Vec<f64>,

    /// Chamber noise levels, kPa.
    #[arg(long, value_delimiter = ',', default_value = "0.3")]
    noise_sigma: Vec<f64>,

    #[arg(long, value_enum, default_value_t = ResponseArg::Sigmoid)]
    response: ResponseArg,

    /// Translation per step, mm.
    #[arg(long, default_value_t = 2.0)]
    step: f64,

    #[arg(long, default_value_t = 25)]
    max_steps: usize,

    /// Repetitions per grid cell.
    #[arg(long, default_value_t = 10)]
    reps: usize,

    /// Offset at or below which the grasp succeeds, mm.
    #[arg(long, default_value_t = 7.0)]
    success_delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    #[value(alias = "model-based", alias = "model_based")]
    Model,
    Mlp,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Four absolute chamber pressures, kPa, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    p_ch: Vec<f64>,

    #[arg(long, default_value_t = STANDARD_ATMOSPHERE_KPA)]
    p_atm: f64,

    #[arg(long, value_enum, default_value_t = MethodArg::Model)]
    method: MethodArg,

    /// Trained model, required with `--method mlp`.
    #[arg(long)]
    model: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(if err.is_usage() { 2 } else { 1 })
        }
    }
}

/// Prefixes I/O errors with the file they concern.
fn at_path<T>(path: &Path, result: Result<T, Error>) -> Result<T, Error> {
    result.map_err(|err| match err {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{THREADS_ENV}='{value}' is not a non-negative integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), Error> {
    configure_threads()?;
    let needs_dir = !matches!(cli.command, Command::Predict(_));
    if needs_dir {
        fs::create_dir_all(&cli.out_dir)?;
    }
    match &cli.command {
        Command::Generate(args) => cmd_generate(&cli, args),
        Command::Train(args) => cmd_train(&cli, args),
        Command::Compare(args) => cmd_compare(&cli, args),
        Command::Search(args) => cmd_search(&cli, args),
        Command::Predict(args) => cmd_predict(&cli, args),
    }
}

fn field(noise_sigma: f64, response: ResponseArg) -> PressureFieldParams {
    PressureFieldParams {
        noise_sigma,
        response: match response {
            ResponseArg::Affine => Response::Affine,
            ResponseArg::Sigmoid => Response::Sigmoid,
        },
        ..Default::default()
    }
}

fn cmd_generate(cli: &Cli, args: &GenerateArgs) -> Result<(), Error> {
    let geom = CupGeometry::default();
    let params = field(args.field.noise_sigma, args.field.response);
    let config = GenerationConfig {
        n_samples: args.n,
        delta_range: [args.delta_min, args.delta_max],
        sampling: match args.sampling {
            SamplingArg::Grid => Sampling::Grid,
            SamplingArg::Random => Sampling::UniformRandom,
        },
        seed: cli.seed,
        ..Default::default()
    };
    let data = generate_dataset(&geom, &params, &config)?;
    let path = cli.out_dir.join("dataset.csv");
    write_csv(&data, &path)?;
    println!("wrote {} samples to {}", data.len(), path.display());
    Ok(())
}

fn write_history(history: &TrainHistory, format: Format, dir: &Path) -> Result<PathBuf, Error> {
    match format {
        Format::Json => {
            let path = dir.join("history.json");
            fs::write(&path, serde_json::to_string_pretty(history)? + "\n")?;
            Ok(path)
        }
        Format::Csv => {
            let path = dir.join("history.csv");
            let mut out = String::from("epoch,train_loss,val_loss,val_rmse_deg\n");
            for (i, ((t, v), r)) in history
                .train_loss
                .iter()
                .zip(&history.val_loss)
                .zip(&history.val_rmse_deg)
                .enumerate()
            {
                out.push_str(&format!("{},{t},{v},{r}\n", i + 1));
            }
            fs::write(&path, out)?;
            Ok(path)
        }
    }
}

fn cmd_train(cli: &Cli, args: &TrainArgs) -> Result<(), Error> {
    let (split_spec, config) = args.options.config(cli.seed);
    split_spec.validate()?;
    config.validate()?;
    let data = at_path(&args.data, read_csv(&args.data))?;
    let (train_set, val_set) = split(&data, &split_spec)?;
    let (model, history) = train(&train_set, &val_set, &config)?;

    let model_path = cli.out_dir.join("model.cupmlp");
    let sidecar = save_trained(&model, &config, &history, (train_set.len(), val_set.len()), &model_path)?;
    let history_path = write_history(&history, cli.format.unwrap_or(Format::Json), &cli.out_dir)?;
    println!(
        "trained {} epochs (best {}), best val loss {:.6}",
        history.epochs(),
        history.best_epoch,
        history.best_val_loss
    );
    for p in [&model_path, &sidecar, &history_path] {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn report_csv(report: &EvalReport) -> String {
    let mut out = String::from("method,seed,rmse_deg,mae_deg,n_samples,n_undefined\n");
    for m in &report.methods {
        for s in &m.per_seed {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                m.method.as_str(),
                s.seed,
                s.rmse_deg,
                s.mae_deg,
                s.n_samples,
                s.n_undefined
            ));
        }
    }
    out
}

fn cmd_compare(cli: &Cli, args: &CompareArgs) -> Result<(), Error> {
    let (split_spec, config) = args.options.config(cli.seed);
    split_spec.validate()?;
    config.validate()?;
    if args.seeds.is_empty() {
        return Err(Error::Config("--seeds must list at least one seed".into()));
    }
    let data = at_path(&args.data, read_csv(&args.data))?;
    let runs = compare_runs(&data, &split_spec, &config, &args.seeds)?;
    let summary = report(&runs)?;

    let report_path = match cli.format.unwrap_or(Format::Json) {
        Format::Json => {
            let path = cli.out_dir.join("report.json");
            fs::write(&path, summary.to_json()?)?;
            path
        }
        Format::Csv => {
            let path = cli.out_dir.join("report.csv");
            fs::write(&path, report_csv(&summary))?;
            path
        }
    };
    for run in &runs {
        for method in [Method::Mlp, Method::ModelBased] {
            let path = cli
                .out_dir
                .join(format!("scatter_{}_seed{}.csv", method.as_str(), run.seed));
            export_scatter(run.predictions(method), method, path)?;
        }
    }
    for m in &summary.methods {
        println!(
            "{:<12} RMSE {:.3} ± {:.3}°  MAE {:.3} ± {:.3}°",
            m.method.as_str(),
            m.rmse_mean_deg,
            m.rmse_std_deg,
            m.mae_mean_deg,
            m.mae_std_deg
        );
    }
    println!("wrote {} and {} scatter files", report_path.display(), 2 * runs.len());
    Ok(())
}

fn cmd_search(cli: &Cli, args: &SearchArgs) -> Result<(), Error> {
    let mut estimators = Vec::new();
    for e in &args.estimator {
        estimators.push(match e {
            EstimatorArg::Oracle => Estimator::Oracle,
            EstimatorArg::ModelBased => Estimator::ModelBased,
            EstimatorArg::Mlp => {
                let path = args
                    .model
                    .as_ref()
                    .ok_or_else(|| Error::Config("--estimator mlp requires --model".into()))?;
                Estimator::Mlp(Arc::new(at_path(path, load_model(path))?))
            }
        });
    }
    if args.reps == 0 {
        return Err(Error::Config("--reps must be >= 1".into()));
    }
    let phi0s = if args.phi0.is_empty() {
        (0..36).map(|k| 10.0 * f64::from(k)).collect()
    } else {
        args.phi0.clone()
    };
    let base = SearchConfig {
        step_size: args.step,
        max_steps: args.max_steps,
        success_delta: args.success_delta,
        field: field(0.0, args.response),
        seed: cli.seed,
        ..Default::default()
    };
    let grid = SearchGrid {
        delta0s: args.delta0.clone(),
        phi0s,
        noise_sigmas: args.noise_sigma.clone(),
        estimators,
        base,
        reps: args.reps,
    };
    let rows = batch_search(&grid, &CupGeometry::default())?;
    let path = match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let path = cli.out_dir.join("search.csv");
            let mut file = std::io::BufWriter::new(fs::File::create(&path)?);
            write_batch_csv(&rows, &mut file)?;
            file.flush()?;
            path
        }
        Format::Json => {
            let path = cli.out_dir.join("search.json");
            fs::write(&path, serde_json::to_string_pretty(&rows)? + "\n")?;
            path
        }
    };
    print_search_summary(&rows);
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

fn print_search_summary(rows: &[BatchRow]) {
    let mut names: Vec<&str> = rows.iter().map(|r| r.estimator.as_str()).collect();
    names.dedup();
    for name in names {
        let mine: Vec<&BatchRow> = rows.iter().filter(|r| r.estimator == name).collect();
        let n = mine.len() as f64;
        let success = mine.iter().map(|r| r.success_rate).sum::<f64>() / n;
        let steps = mine.iter().map(|r| r.mean_steps).sum::<f64>() / n;
        println!("{name:<12} success {:.1}%  mean steps {steps:.2}", 100.0 * success);
    }
}

fn cmd_predict(cli: &Cli, args: &PredictArgs) -> Result<(), Error> {
    let p_ch: [f64; CHAMBERS] = args.p_ch.as_slice().try_into().map_err(|_| {
        Error::InvalidInput(format!(
            "--p-ch needs exactly {CHAMBERS} pressures, got {}",
            args.p_ch.len()
        ))
    })?;
    let frame = SensorFrame::new(p_ch, args.p_atm)?;
    let (name, estimate) = match args.method {
        MethodArg::Model => ("model_based", model_direction(&vacuum_pressures(&frame)?)),
        MethodArg::Mlp => {
            let path = args
                .model
                .as_ref()
                .ok_or_else(|| Error::Config("--method mlp requires --model".into()))?;
            ("mlp", at_path(path, load_model(path))?.direction(&frame)?)
        }
    };
    let phi = estimate.phi_pred.map(|a| a.degrees());
    match cli.format.unwrap_or(Format::Json) {
        Format::Json => {
            let out = json!({
                "method": name,
                "v_pred": { "x": estimate.v_pred.x, "y": estimate.v_pred.y },
                "phi_pred_deg": phi,
            });
            println!("{out}");
        }
        Format::Csv => {
            println!("method,v_x,v_y,phi_pred_deg");
            let phi = phi.map(|p| p.to_string()).unwrap_or_default();
            println!("{name},{},{},{phi}", estimate.v_pred.x, estimate.v_pred.y);
        }
    }
    Ok(())
}
