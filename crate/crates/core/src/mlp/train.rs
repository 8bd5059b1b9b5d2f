//! Mini-batch RMSprop training with best-validation checkpointing.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{decode_angle, loss, target_encoding, Backprop, InputMode, Mlp, Rmsprop, RmspropConfig};
use crate::angle::angular_error;
use crate::dataset::{feature_stats, LabeledSample};
use crate::rng::substream;
use crate::sensor::CHAMBERS;
use crate::{Error, Result};

/// Whether the network sees raw kPa or standardized chamber pressures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputScaling {
    Raw,
    Standardized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_layers: Vec<usize>,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Consecutive epochs without a validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub optimizer: RmspropConfig,
    pub input_scaling: InputScaling,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![16, 32, 16],
            batch_size: 64,
            max_epochs: 200,
            patience: 20,
            seed: 0,
            optimizer: RmspropConfig::default(),
            input_scaling: InputScaling::Standardized,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be >= 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max epochs must be >= 1"));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::config("hidden layers must have at least one unit"));
        }
        self.optimizer.validate()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![CHAMBERS];
        sizes.extend(&self.hidden_layers);
        sizes.push(2);
        sizes
    }
}

/// Per-epoch learning curves. Index `e` describes the model after epoch `e + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_rmse_deg: Vec<f64>,
    /// Validation loss of the freshly initialized network.
    pub initial_val_loss: f64,
    /// 1-based epoch of the returned parameters; 0 means no epoch beat the
    /// initial network.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }
}

/// Inputs and `(cos φ, sin φ)` targets laid out flat for the hot loop.
struct Prepared {
    inputs: Vec<[f64; CHAMBERS]>,
    targets: Vec<[f64; 2]>,
}

impl Prepared {
    fn new(model: &Mlp, samples: &[LabeledSample]) -> Self {
        Self {
            inputs: samples.iter().map(|s| model.input_features(&s.frame)).collect(),
            targets: samples.iter().map(|s| target_encoding(s.pose.phi())).collect(),
        }
    }

    /// Mean loss and angular RMSE (degrees, over decodable outputs).
    fn evaluate(&self, model: &Mlp) -> (f64, f64) {
        let mut total = 0.0;
        let mut sq_err = 0.0;
        let mut scored = 0usize;
        let mut out = super::Activations::new(model);
        for (x, t) in self.inputs.iter().zip(&self.targets) {
            model.forward_into(x, &mut out);
            let y = out.output();
            total += loss(y, t);
            let truth = decode_angle(*t).expect("unit target");
            if let Some(pred) = decode_angle([y[0], y[1]]) {
                sq_err += angular_error(pred, truth).powi(2);
                scored += 1;
            }
        }
        let n = self.inputs.len() as f64;
        let rmse = if scored > 0 {
            (sq_err / scored as f64).sqrt()
        } else {
            f64::NAN
        };
        (total / n, rmse)
    }
}

/// Trains the direction network. Deterministic in `(config, data)`.
pub fn train(
    train_set: &[LabeledSample],
    val_set: &[LabeledSample],
    config: &TrainConfig,
) -> Result<(Mlp, TrainHistory)> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::config("training and validation sets must be non-empty"));
    }

    let input_mode = match config.input_scaling {
        InputScaling::Raw => InputMode::Raw,
        InputScaling::Standardized => InputMode::Standardized(feature_stats(train_set)?),
    };
    let mut model = Mlp::new(&config.layer_sizes(), config.seed)?.with_input_mode(input_mode)?;
    let train_data = Prepared::new(&model, train_set);
    let val_data = Prepared::new(&model, val_set);

    let mut optimizer = Rmsprop::new(config.optimizer, model.params.len())?;
    let mut bp = Backprop::new(&model);
    let mut grads = vec![0.0; model.params.len()];
    let mut shuffle_rng = substream(config.seed, 1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let (initial_val_loss, _) = val_data.evaluate(&model);
    let mut best_params = model.params.clone();
    let mut best_val_loss = initial_val_loss;
    let mut best_epoch = 0;
    let mut stale = 0;

    let mut history = TrainHistory {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        val_rmse_deg: Vec::new(),
        initial_val_loss,
        best_epoch,
        best_val_loss,
    };

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            bp.reset();
            for &i in batch {
                bp.accumulate(&model, &train_data.inputs[i], &train_data.targets[i]);
            }
            let batch_loss = bp.mean_into(&mut grads);
            epoch_loss += batch_loss * batch.len() as f64;
            optimizer.step(&mut model.params, &grads);
        }
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid(format!(
                "training diverged at epoch {epoch}; try a smaller learning rate"
            )));
        }

        let (val_loss, val_rmse) = val_data.evaluate(&model);
        history.train_loss.push(epoch_loss / train_set.len() as f64);
        history.val_loss.push(val_loss);
        history.val_rmse_deg.push(val_rmse);

        if val_loss < best_val_loss {
            best_val_loss = val_loss;
            best_epoch = epoch;
            best_params.copy_from_slice(&model.params);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    model.params = best_params;
    history.best_epoch = best_epoch;
    history.best_val_loss = best_val_loss;
    Ok((model, history))
}
