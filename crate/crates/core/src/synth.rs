//! Synthetic plate-edge readings.
//!
//! The cup sits near the straight edge of a flat plate. In the tool frame the
//! plate interior lies along the unit normal `(cos φ, sin φ)` and the edge line
//! sits at signed coordinate `δ - r_cup` along it, so `δ = 0` is a full seal and
//! `δ = 2·r_cup` puts the whole lip off the plate. Each chamber's vacuum is a
//! monotone function of how deep its center lies inside the plate half-plane.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::angle::wrap_angle;
use crate::dataset::LabeledSample;
use crate::rng::{substream, Rng};
use crate::sensor::{
    GroundTruthPose, SensorFrame, CHAMBERS, PRESSURE_TOLERANCE_KPA, STANDARD_ATMOSPHERE_KPA,
};
use crate::{Error, Result};

/// Angular positions of chambers 1..4 in the tool frame, degrees.
pub const CHAMBER_ANGLES_DEG: [f64; CHAMBERS] = [315.0, 225.0, 135.0, 45.0];

/// Number of samples in the reference plate-edge dataset.
pub const DEFAULT_SAMPLE_COUNT: usize = 25_273;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CupGeometry {
    /// Sealing-lip radius, mm.
    pub r_cup: f64,
    /// Distance of the chamber centers from the cup axis, mm.
    pub r_chamber: f64,
}

impl Default for CupGeometry {
    fn default() -> Self {
        Self {
            r_cup: 15.0,
            r_chamber: 10.0,
        }
    }
}

impl CupGeometry {
    pub fn validate(&self) -> Result<()> {
        let ok = self.r_cup.is_finite()
            && self.r_chamber.is_finite()
            && 0.0 < self.r_chamber
            && self.r_chamber < self.r_cup;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!(
                "cup geometry needs 0 < r_chamber < r_cup, got r_chamber={} r_cup={}",
                self.r_chamber, self.r_cup
            )))
        }
    }

    pub fn chamber_angles(&self) -> [f64; CHAMBERS] {
        CHAMBER_ANGLES_DEG
    }
}

/// Shape of the vacuum-vs-coverage curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    /// `p_max · clamp01(0.5 + d / 2w)`
    Affine,
    /// `p_max · logistic(d / w)`
    Sigmoid,
}

impl std::str::FromStr for Response {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "affine" => Ok(Response::Affine),
            "sigmoid" => Ok(Response::Sigmoid),
            other => Err(Error::config(format!("unknown response '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureFieldParams {
    /// Vacuum of a fully sealed chamber, kPa.
    pub p_max: f64,
    /// Width of the partial-seal transition, mm.
    pub transition_width: f64,
    pub response: Response,
    /// Standard deviation of i.i.d. Gaussian noise per chamber, kPa.
    pub noise_sigma: f64,
    pub p_atm: f64,
}

impl Default for PressureFieldParams {
    fn default() -> Self {
        Self {
            p_max: 10.0,
            transition_width: 4.0,
            response: Response::Sigmoid,
            noise_sigma: 0.3,
            p_atm: STANDARD_ATMOSPHERE_KPA,
        }
    }
}

impl PressureFieldParams {
    /// Noiseless affine field whose transition spans every depth reachable
    /// with `geom` (`|d| ≤ r_cup + r_chamber` for `δ ∈ [0, 2·r_cup]`), so no
    /// chamber ever saturates and the vacuum is exactly linear in depth.
    pub fn unsaturated_affine(geom: &CupGeometry) -> Self {
        Self {
            response: Response::Affine,
            transition_width: geom.r_cup + geom.r_chamber,
            noise_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn with_noise(self, noise_sigma: f64) -> Self {
        Self {
            noise_sigma,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_max.is_finite() && self.p_max > 0.0) {
            return Err(Error::config(format!("p_max must be > 0, got {}", self.p_max)));
        }
        if !(self.transition_width.is_finite() && self.transition_width > 0.0) {
            return Err(Error::config(format!(
                "transition width must be > 0, got {}",
                self.transition_width
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::config(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !(self.p_atm.is_finite() && self.p_atm > 0.0) {
            return Err(Error::config(format!("p_atm must be > 0, got {}", self.p_atm)));
        }
        Ok(())
    }

    /// Vacuum at coverage depth `d` without noise, kPa.
    pub fn noiseless_vacuum(&self, d: f64) -> f64 {
        let t = d / self.transition_width;
        let fraction = match self.response {
            Response::Affine => (0.5 + 0.5 * t).clamp(0.0, 1.0),
            Response::Sigmoid => 1.0 / (1.0 + (-t).exp()),
        };
        self.p_max * fraction
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    UniformRandom,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub n_samples: usize,
    /// Inclusive lateral offset range, mm.
    pub delta_range: [f64; 2],
    /// Half-open yaw range, degrees.
    pub phi_range: [f64; 2],
    pub sampling: Sampling,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            n_samples: DEFAULT_SAMPLE_COUNT,
            delta_range: [7.0, 14.0],
            phi_range: [0.0, 360.0],
            sampling: Sampling::UniformRandom,
            seed: 0,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self, geom: &CupGeometry) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::config("n_samples must be > 0"));
        }
        let [d0, d1] = self.delta_range;
        if !(d0.is_finite() && d1.is_finite() && 0.0 <= d0 && d0 <= d1 && d1 <= 2.0 * geom.r_cup) {
            return Err(Error::config(format!(
                "delta range [{d0}, {d1}] must lie within [0, {}] mm",
                2.0 * geom.r_cup
            )));
        }
        let [p0, p1] = self.phi_range;
        if !(p0.is_finite() && p1.is_finite() && 0.0 <= p0 && p0 < p1 && p1 <= 360.0) {
            return Err(Error::config(format!(
                "phi range [{p0}, {p1}) must be a non-empty sub-range of [0, 360)"
            )));
        }
        Ok(())
    }
}

/// Signed depth of a chamber center inside the plate half-plane, mm.
/// `chamber` is 1-based.
pub fn coverage_depth(geom: &CupGeometry, pose: &GroundTruthPose, chamber: usize) -> Result<f64> {
    if !(1..=CHAMBERS).contains(&chamber) {
        return Err(Error::invalid(format!("chamber index {chamber} not in 1..=4")));
    }
    Ok(depth(geom, pose, CHAMBER_ANGLES_DEG[chamber - 1]))
}

/// Coverage depths of all four chambers, chamber 1 first.
pub fn coverage_depths(geom: &CupGeometry, pose: &GroundTruthPose) -> [f64; CHAMBERS] {
    CHAMBER_ANGLES_DEG.map(|alpha| depth(geom, pose, alpha))
}

fn depth(geom: &CupGeometry, pose: &GroundTruthPose, alpha_deg: f64) -> f64 {
    let rel = (alpha_deg - pose.phi().degrees()).to_radians();
    geom.r_chamber * rel.cos() - pose.delta_mm() + geom.r_cup
}

/// Vacuum of one chamber at depth `d`, with Gaussian sensor noise drawn from `rng`.
pub fn chamber_vacuum(params: &PressureFieldParams, d: f64, rng: &mut Rng) -> f64 {
    let clean = params.noiseless_vacuum(d);
    if params.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, params.noise_sigma).expect("sigma validated finite");
        clean + noise.sample(rng)
    } else {
        clean
    }
}

/// Simulated reading at `pose`. Chamber pressures are clamped to
/// `[0, p_atm + 0.5]` kPa so noise cannot produce an impossible frame.
pub fn synth_frame(
    geom: &CupGeometry,
    params: &PressureFieldParams,
    pose: &GroundTruthPose,
    rng: &mut Rng,
) -> SensorFrame {
    let depths = coverage_depths(geom, pose);
    let ceiling = params.p_atm + PRESSURE_TOLERANCE_KPA;
    let p_ch = depths.map(|d| (params.p_atm - chamber_vacuum(params, d, rng)).clamp(0.0, ceiling));
    SensorFrame::new(p_ch, params.p_atm).expect("clamped chamber pressures are valid")
}

/// Generates `config.n_samples` labeled readings. Sample `i` is drawn from
/// stream `i` of `config.seed`, so the output is independent of threading.
pub fn generate_dataset(
    geom: &CupGeometry,
    params: &PressureFieldParams,
    config: &GenerationConfig,
) -> Result<Vec<LabeledSample>> {
    geom.validate()?;
    params.validate()?;
    config.validate(geom)?;

    let grid = GridLayout::new(config.n_samples);
    Ok(crate::map_indexed(config.n_samples, |i| {
        let mut rng = substream(config.seed, i as u64);
        let pose = match config.sampling {
            Sampling::UniformRandom => random_pose(config, &mut rng),
            Sampling::Grid => grid.pose(config, i),
        };
        let frame = synth_frame(geom, params, &pose, &mut rng);
        LabeledSample { frame, pose }
    }))
}

fn random_pose(config: &GenerationConfig, rng: &mut Rng) -> GroundTruthPose {
    use rand::Rng as _;
    let [d0, d1] = config.delta_range;
    let [p0, p1] = config.phi_range;
    let delta = d0 + (d1 - d0) * rng.random::<f64>();
    let phi = p0 + (p1 - p0) * rng.random::<f64>();
    GroundTruthPose::new(delta, wrap_angle(phi).expect("finite")).expect("delta in range")
}

/// Near-square lattice: `rows` offsets spanning the δ range inclusively,
/// `cols` yaws over the half-open φ range, filled row by row.
#[derive(Debug, Clone, Copy)]
struct GridLayout {
    rows: usize,
    cols: usize,
}

impl GridLayout {
    fn new(n: usize) -> Self {
        let rows = ((n as f64).sqrt().floor() as usize).max(1);
        let cols = n.div_ceil(rows);
        Self { rows, cols }
    }

    fn pose(&self, config: &GenerationConfig, i: usize) -> GroundTruthPose {
        let [d0, d1] = config.delta_range;
        let [p0, p1] = config.phi_range;
        let (row, col) = (i / self.cols, i % self.cols);
        let delta = if self.rows > 1 {
            d0 + (d1 - d0) * row as f64 / (self.rows - 1) as f64
        } else {
            d0
        };
        let phi = p0 + (p1 - p0) * col as f64 / self.cols as f64;
        GroundTruthPose::new(delta, wrap_angle(phi).expect("finite")).expect("delta in range")
    }
}
