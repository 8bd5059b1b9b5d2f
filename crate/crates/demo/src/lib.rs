//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every exported function takes plain numbers and strings and returns a JSON
//! document, so the page needs no generated TypeScript types. The `*_json`
//! functions hold the logic and run natively in tests.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use cuphaptics::rng::substream;
use cuphaptics::search::{run_search, Estimator, Outcome, SearchConfig};
use cuphaptics::sensor::{model_direction, vacuum_pressures, GroundTruthPose, Vector2, CHAMBERS};
use cuphaptics::synth::{coverage_depths, synth_frame, CupGeometry, PressureFieldParams, Response, CHAMBER_ANGLES_DEG};
use cuphaptics::{angular_error, Error};

#[derive(Debug, Serialize)]
pub struct Reading {
    pub chamber_angles_deg: [f64; CHAMBERS],
    pub depths_mm: [f64; CHAMBERS],
    pub p_ch_kpa: [f64; CHAMBERS],
    pub vacuum_kpa: [f64; CHAMBERS],
    pub v_pred: Vector2,
    pub phi_pred_deg: Option<f64>,
    pub error_deg: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Sweep {
    pub phi_deg: Vec<f64>,
    /// `None` where the estimator gives no direction.
    pub error_deg: Vec<Option<f64>>,
    pub rmse_deg: Option<f64>,
    pub max_error_deg: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Trajectory {
    pub outcome: Outcome,
    pub steps: usize,
    /// Cup center in plate coordinates, mm, with the edge through the origin
    /// and the edge point nearest the start at the origin; `steps + 1` entries.
    pub path_xy: Vec<[f64; 2]>,
    pub delta_mm: Vec<f64>,
    pub phi_pred_deg: Vec<Option<f64>>,
}

fn field(noise_sigma: f64, response: &str) -> Result<PressureFieldParams, Error> {
    let params = PressureFieldParams {
        noise_sigma,
        response: response.parse::<Response>()?,
        ..Default::default()
    };
    params.validate()?;
    Ok(params)
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

pub fn sense_json(delta: f64, phi_deg: f64, noise_sigma: f64, response: &str, seed: u64) -> Result<String, String> {
    let run = || -> Result<Reading, Error> {
        let geom = CupGeometry::default();
        let params = field(noise_sigma, response)?;
        let pose = GroundTruthPose::from_degrees(delta, phi_deg)?;
        let frame = synth_frame(&geom, &params, &pose, &mut substream(seed, 0));
        let vacuum = vacuum_pressures(&frame)?;
        let est = model_direction(&vacuum);
        Ok(Reading {
            chamber_angles_deg: CHAMBER_ANGLES_DEG,
            depths_mm: coverage_depths(&geom, &pose),
            p_ch_kpa: frame.p_ch(),
            vacuum_kpa: vacuum.values(),
            v_pred: est.v_pred,
            phi_pred_deg: est.phi_pred.map(|a| a.degrees()),
            error_deg: est.phi_pred.map(|a| angular_error(a, pose.phi())),
        })
    };
    to_json(&run().map_err(|e| e.to_string())?)
}

pub fn sweep_model_error_json(
    delta: f64,
    noise_sigma: f64,
    response: &str,
    seed: u64,
    step_deg: f64,
) -> Result<String, String> {
    if !(0.1..=90.0).contains(&step_deg) {
        return Err(format!("sweep step {step_deg} must be in [0.1, 90] degrees"));
    }
    let run = || -> Result<Sweep, Error> {
        let geom = CupGeometry::default();
        let params = field(noise_sigma, response)?;
        let n = (360.0 / step_deg).floor() as usize;
        let mut sweep = Sweep {
            phi_deg: Vec::with_capacity(n),
            error_deg: Vec::with_capacity(n),
            rmse_deg: None,
            max_error_deg: None,
        };
        let (mut sum_sq, mut defined) = (0.0, 0usize);
        for i in 0..n {
            let phi = i as f64 * step_deg;
            let pose = GroundTruthPose::from_degrees(delta, phi)?;
            let frame = synth_frame(&geom, &params, &pose, &mut substream(seed, i as u64));
            let err = model_direction(&vacuum_pressures(&frame)?)
                .phi_pred
                .map(|a| angular_error(a, pose.phi()));
            if let Some(e) = err {
                sum_sq += e * e;
                defined += 1;
                sweep.max_error_deg = Some(sweep.max_error_deg.map_or(e, |m: f64| m.max(e)));
            }
            sweep.phi_deg.push(phi);
            sweep.error_deg.push(err);
        }
        if defined > 0 {
            sweep.rmse_deg = Some((sum_sq / defined as f64).sqrt());
        }
        Ok(sweep)
    };
    to_json(&run().map_err(|e| e.to_string())?)
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_search_json(
    delta0: f64,
    phi0_deg: f64,
    noise_sigma: f64,
    response: &str,
    estimator: &str,
    step: f64,
    max_steps: usize,
    seed: u64,
) -> Result<String, String> {
    let run = || -> Result<Trajectory, Error> {
        let estimator = match estimator {
            "oracle" => Estimator::Oracle,
            "model_based" | "model" => Estimator::ModelBased,
            other => return Err(Error::Config(format!("unknown estimator '{other}'"))),
        };
        let geom = CupGeometry::default();
        let config = SearchConfig {
            step_size: step,
            max_steps,
            estimator,
            field: field(noise_sigma, response)?,
            seed,
            ..Default::default()
        };
        let start = GroundTruthPose::from_degrees(delta0, phi0_deg)?;
        let result = run_search(start, &config, &geom)?;
        // Edge through the origin with inward normal n. The offset comes from
        // the search; the drift along the edge is accumulated from the moves.
        let (nx, ny) = start.phi().unit_vector();
        let mut along_edge = 0.0;
        let mut path_xy = Vec::with_capacity(result.trajectory.len());
        for (i, pose) in result.trajectory.iter().enumerate() {
            if i > 0 {
                if let Some(phi_pred) = result.estimates[i - 1].phi_pred {
                    along_edge += step * (phi_pred.radians() - start.phi().radians()).sin();
                }
            }
            let d = pose.delta_mm();
            path_xy.push([-d * nx - along_edge * ny, -d * ny + along_edge * nx]);
        }
        Ok(Trajectory {
            outcome: result.outcome,
            steps: result.steps,
            path_xy,
            delta_mm: result.trajectory.iter().map(|p| p.delta_mm()).collect(),
            phi_pred_deg: result.estimates.iter().map(|e| e.phi_pred.map(|a| a.degrees())).collect(),
        })
    };
    to_json(&run().map_err(|e| e.to_string())?)
}

/// One simulated reading: pressures, analytic direction and its error.
#[wasm_bindgen]
pub fn sense(delta: f64, phi_deg: f64, noise_sigma: f64, response: &str, seed: u32) -> Result<String, JsValue> {
    sense_json(delta, phi_deg, noise_sigma, response, seed.into()).map_err(|e| JsValue::from_str(&e))
}

/// Analytic estimator error over a full turn of yaw at fixed offset.
#[wasm_bindgen]
pub fn sweep_model_error(
    delta: f64,
    noise_sigma: f64,
    response: &str,
    seed: u32,
    step_deg: f64,
) -> Result<String, JsValue> {
    sweep_model_error_json(delta, noise_sigma, response, seed.into(), step_deg).map_err(|e| JsValue::from_str(&e))
}

/// A single haptic search; the trajectory is drawn by the page.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn simulate_search(
    delta0: f64,
    phi0_deg: f64,
    noise_sigma: f64,
    response: &str,
    estimator: &str,
    step: f64,
    max_steps: u32,
    seed: u32,
) -> Result<String, JsValue> {
    simulate_search_json(
        delta0,
        phi0_deg,
        noise_sigma,
        response,
        estimator,
        step,
        max_steps as usize,
        seed.into(),
    )
    .map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(s: Result<String, String>) -> Value {
        serde_json::from_str(&s.unwrap()).unwrap()
    }

    #[test]
    fn sense_noiseless_diagonal_is_exact() {
        let v = parse(sense_json(10.0, 45.0, 0.0, "sigmoid", 1));
        assert!(v["error_deg"].as_f64().unwrap() < 1e-9);
        assert_eq!(v["p_ch_kpa"].as_array().unwrap().len(), 4);
        assert_eq!(v["chamber_angles_deg"][0], 315.0);
    }

    #[test]
    fn sense_rejects_bad_input() {
        assert!(sense_json(-1.0, 0.0, 0.0, "sigmoid", 1).is_err());
        assert!(sense_json(10.0, 0.0, 0.0, "cubic", 1).is_err());
        assert!(sense_json(10.0, 0.0, -0.1, "sigmoid", 1).is_err());
    }

    #[test]
    fn sweep_covers_full_turn() {
        let v = parse(sweep_model_error_json(10.0, 0.0, "sigmoid", 0, 1.0));
        assert_eq!(v["phi_deg"].as_array().unwrap().len(), 360);
        let max = v["max_error_deg"].as_f64().unwrap();
        assert!(max > 0.0 && max < 45.0, "{max}");
        assert_eq!(v["error_deg"][45].as_f64().unwrap(), 0.0);
        assert!(sweep_model_error_json(10.0, 0.0, "sigmoid", 0, 0.0).is_err());
    }

    #[test]
    fn search_oracle_takes_four_steps() {
        let v = parse(simulate_search_json(14.0, 30.0, 0.0, "sigmoid", "oracle", 2.0, 25, 0));
        assert_eq!(v["outcome"], "success");
        assert_eq!(v["steps"], 4);
        assert_eq!(v["path_xy"].as_array().unwrap().len(), 5);
        assert_eq!(v["delta_mm"][4].as_f64().unwrap(), 6.0);
        let end = &v["path_xy"][4];
        let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
        assert!((end[0].as_f64().unwrap() + 6.0 * c).abs() < 1e-12);
        assert!((end[1].as_f64().unwrap() + 6.0 * s).abs() < 1e-12);
    }

    #[test]
    fn search_is_deterministic_and_validated() {
        let run = || simulate_search_json(20.0, 100.0, 1.0, "sigmoid", "model", 2.0, 25, 7).unwrap();
        assert_eq!(run(), run());
        assert!(simulate_search_json(14.0, 0.0, 0.0, "sigmoid", "mlp", 2.0, 25, 0).is_err());
        assert!(simulate_search_json(14.0, 0.0, 0.0, "sigmoid", "oracle", 0.0, 25, 0).is_err());
    }
}
