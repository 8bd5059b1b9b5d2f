//! Closed-loop haptic search on the synthetic plate edge.
//!
//! Each step senses a frame at the current pose, estimates a motion
//! direction, and translates the cup `step_size` mm along it. The plate edge
//! is fixed, so only the lateral offset changes: moving along `m̂` shrinks the
//! offset by `step_size · (m̂ · n̂)` where `n̂` points into the plate.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::angle::Angle;
use crate::dataset::{csv_writer, format_sig9};
use crate::mlp::Mlp;
use crate::rng::substream;
use crate::sensor::{model_direction, vacuum_pressures, DirectionEstimate, GroundTruthPose, Vector2};
use crate::synth::{synth_frame, CupGeometry, PressureFieldParams};
use crate::{Error, Result};

/// Header of the batch-search CSV.
pub const BATCH_HEADER: [&str; 6] = [
    "delta0_mm",
    "phi0_deg",
    "noise_sigma_kpa",
    "estimator",
    "success_rate",
    "mean_steps",
];

/// Source of motion directions during a search.
#[derive(Debug, Clone)]
pub enum Estimator {
    /// Pairwise chamber-sum vector.
    ModelBased,
    /// Trained network.
    Mlp(Arc<Mlp>),
    /// The true inward normal; ignores the sensor.
    Oracle,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::ModelBased => "model_based",
            Estimator::Mlp(_) => "mlp",
            Estimator::Oracle => "oracle",
        }
    }

    fn estimate(
        &self,
        geom: &CupGeometry,
        params: &PressureFieldParams,
        pose: &GroundTruthPose,
        rng: &mut crate::rng::Rng,
    ) -> Result<DirectionEstimate> {
        match self {
            Estimator::Oracle => {
                let (c, s) = pose.phi().unit_vector();
                Ok(DirectionEstimate {
                    v_pred: Vector2::new(c, s),
                    phi_pred: Some(pose.phi()),
                })
            }
            Estimator::ModelBased => {
                let frame = synth_frame(geom, params, pose, rng);
                Ok(model_direction(&vacuum_pressures(&frame)?))
            }
            Estimator::Mlp(model) => {
                let frame = synth_frame(geom, params, pose, rng);
                model.direction(&frame)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchConfig {
    /// Translation per step, mm.
    pub step_size: f64,
    pub max_steps: usize,
    /// The grasp succeeds once the offset is at or below this, mm.
    pub success_delta: f64,
    pub estimator: Estimator,
    pub field: PressureFieldParams,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            step_size: 2.0,
            max_steps: 25,
            success_delta: 7.0,
            estimator: Estimator::ModelBased,
            field: PressureFieldParams::default(),
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::config(format!("step size {} must be > 0", self.step_size)));
        }
        if self.max_steps == 0 {
            return Err(Error::config("max steps must be >= 1"));
        }
        if !(self.success_delta.is_finite() && self.success_delta >= 0.0) {
            return Err(Error::config(format!(
                "success offset {} must be >= 0",
                self.success_delta
            )));
        }
        if let Estimator::Mlp(model) = &self.estimator {
            if model.input_dim() != 4 || model.output_dim() != 2 {
                return Err(Error::config("search network must map 4 inputs to 2 outputs"));
            }
        }
        self.field.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    /// The estimator returned no direction.
    NoGradient,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub outcome: Outcome,
    pub steps: usize,
    /// Poses visited, starting with the initial one; `steps + 1` entries.
    pub trajectory: Vec<GroundTruthPose>,
    /// One estimate per sensing, including a final undefined one on `NoGradient`.
    pub estimates: Vec<DirectionEstimate>,
}

impl SearchResult {
    pub fn success(&self) -> bool {
        self.outcome == Outcome::Success
    }
}

/// Translates the cup `step_size` mm along `phi_pred`. The offset is floored
/// at 0 (the fully sealed position).
pub fn search_step(pose: &GroundTruthPose, phi_pred: Angle, step_size: f64) -> GroundTruthPose {
    // m̂ · n̂ = cos(φ_pred − φ_true), exact 1 when the two agree.
    let along = (phi_pred.radians() - pose.phi().radians()).cos();
    let delta = (pose.delta_mm() - step_size * along).max(0.0);
    GroundTruthPose::new(delta, pose.phi()).expect("non-negative offset")
}

/// Runs one search from `initial`. Step `k` senses with stream `k` of `config.seed`.
pub fn run_search(
    initial: GroundTruthPose,
    config: &SearchConfig,
    geom: &CupGeometry,
) -> Result<SearchResult> {
    config.validate()?;
    geom.validate()?;
    let mut pose = initial;
    let mut result = SearchResult {
        outcome: Outcome::BudgetExhausted,
        steps: 0,
        trajectory: vec![pose],
        estimates: Vec::new(),
    };
    if pose.delta_mm() <= config.success_delta {
        result.outcome = Outcome::Success;
        return Ok(result);
    }
    for step in 0..config.max_steps {
        let mut rng = substream(config.seed, step as u64);
        let estimate = config.estimator.estimate(geom, &config.field, &pose, &mut rng)?;
        result.estimates.push(estimate);
        let Some(phi_pred) = estimate.phi_pred else {
            result.outcome = Outcome::NoGradient;
            return Ok(result);
        };
        pose = search_step(&pose, phi_pred, config.step_size);
        result.trajectory.push(pose);
        result.steps += 1;
        if pose.delta_mm() <= config.success_delta {
            result.outcome = Outcome::Success;
            return Ok(result);
        }
    }
    Ok(result)
}

/// Cartesian grid of start poses, noise levels and estimators.
#[derive(Debug, Clone)]
pub struct SearchGrid {
    pub delta0s: Vec<f64>,
    pub phi0s: Vec<f64>,
    pub noise_sigmas: Vec<f64>,
    pub estimators: Vec<Estimator>,
    /// Step size, budget, threshold, field shape and base seed.
    pub base: SearchConfig,
    /// Repetitions per cell; repetition `r` uses seed `base.seed + r`.
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub delta0_mm: f64,
    pub phi0_deg: f64,
    pub noise_sigma_kpa: f64,
    pub estimator: String,
    pub success_rate: f64,
    /// Mean steps taken over all repetitions, successful or not.
    pub mean_steps: f64,
}

/// Success rate and mean steps for every grid cell, in estimator-major,
/// then noise, δ0, φ0 order.
pub fn batch_search(grid: &SearchGrid, geom: &CupGeometry) -> Result<Vec<BatchRow>> {
    if grid.delta0s.is_empty() || grid.phi0s.is_empty() || grid.noise_sigmas.is_empty() || grid.estimators.is_empty() {
        return Err(Error::config("search grid must have at least one value per axis"));
    }
    if grid.reps == 0 {
        return Err(Error::config("repetitions must be >= 1"));
    }
    let mut cells = Vec::new();
    for est in &grid.estimators {
        for &noise in &grid.noise_sigmas {
            for &delta0 in &grid.delta0s {
                for &phi0 in &grid.phi0s {
                    let config = SearchConfig {
                        estimator: est.clone(),
                        field: grid.base.field.with_noise(noise),
                        ..grid.base.clone()
                    };
                    config.validate()?;
                    let pose = GroundTruthPose::from_degrees(delta0, phi0)?;
                    cells.push((config, pose));
                }
            }
        }
    }
    geom.validate()?;

    let reps = grid.reps;
    let runs = crate::map_indexed(cells.len() * reps, |k| {
        let (config, pose) = &cells[k / reps];
        let config = SearchConfig {
            seed: config.seed.wrapping_add((k % reps) as u64),
            ..config.clone()
        };
        run_search(*pose, &config, geom).map(|r| (r.success(), r.steps))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(cells.len());
    for (c, (config, pose)) in cells.iter().enumerate() {
        let mut successes = 0usize;
        let mut steps = 0usize;
        for &(ok, n) in &runs[c * reps..(c + 1) * reps] {
            successes += usize::from(ok);
            steps += n;
        }
        rows.push(BatchRow {
            delta0_mm: pose.delta_mm(),
            phi0_deg: pose.phi().degrees(),
            noise_sigma_kpa: config.field.noise_sigma,
            estimator: config.estimator.name().to_string(),
            success_rate: successes as f64 / reps as f64,
            mean_steps: steps as f64 / reps as f64,
        });
    }
    Ok(rows)
}

/// Writes batch results as CSV.
pub fn write_batch_csv<W: std::io::Write>(rows: &[BatchRow], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(BATCH_HEADER)?;
    for r in rows {
        w.write_record([
            format_sig9(r.delta0_mm),
            format_sig9(r.phi0_deg),
            format_sig9(r.noise_sigma_kpa),
            r.estimator.clone(),
            format_sig9(r.success_rate),
            format_sig9(r.mean_steps),
        ])?;
    }
    w.flush()?;
    Ok(())
}
