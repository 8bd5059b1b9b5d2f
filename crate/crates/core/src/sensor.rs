//! Sensor readings, vacuum pressures and the analytic direction estimator.
//!
//! Chambers are numbered 1..4 in the documentation and stored at indices
//! 0..3. In the tool frame, chambers 1 and 4 lie on the +x side and chambers
//! 3 and 4 on the +y side, so their centers sit on the quadrant diagonals at
//! 315°, 225°, 135° and 45° respectively.

use serde::{Deserialize, Serialize};

use crate::angle::{wrap_angle, Angle};
use crate::{Error, Result};

/// Number of pressure chambers in the cup.
pub const CHAMBERS: usize = 4;

/// Allowed excursion above ambient (or below zero gauge) caused by sensor noise, kPa.
pub const PRESSURE_TOLERANCE_KPA: f64 = 0.5;

/// Standard atmosphere, kPa.
pub const STANDARD_ATMOSPHERE_KPA: f64 = 101.325;

/// Magnitude below which a direction vector counts as zero.
pub const EPS_ZERO: f64 = 1e-9;

/// One reading of the four chamber pressures plus ambient pressure, all in kPa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    p_ch: [f64; CHAMBERS],
    p_atm: f64,
}

impl SensorFrame {
    pub fn new(p_ch: [f64; CHAMBERS], p_atm: f64) -> Result<Self> {
        if !p_atm.is_finite() || p_atm < 0.0 {
            return Err(Error::invalid(format!(
                "atmospheric pressure {p_atm} kPa must be finite and non-negative"
            )));
        }
        for (i, &p) in p_ch.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::invalid(format!(
                    "chamber {} pressure {p} kPa must be finite and non-negative",
                    i + 1
                )));
            }
            if p > p_atm + PRESSURE_TOLERANCE_KPA {
                return Err(Error::invalid(format!(
                    "chamber {} pressure {p} kPa exceeds ambient {p_atm} kPa",
                    i + 1
                )));
            }
        }
        Ok(Self { p_ch, p_atm })
    }

    /// Chamber absolute pressures, chamber 1 first.
    pub fn p_ch(&self) -> [f64; CHAMBERS] {
        self.p_ch
    }

    pub fn p_atm(&self) -> f64 {
        self.p_atm
    }
}

/// Gauge (vacuum) pressures `P_i = P_atm - P_ch,i`, kPa. Larger means a better local seal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VacuumPressures([f64; CHAMBERS]);

impl VacuumPressures {
    pub fn new(p: [f64; CHAMBERS]) -> Result<Self> {
        for (i, &v) in p.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::invalid(format!(
                    "vacuum pressure of chamber {} is not finite",
                    i + 1
                )));
            }
            if v < -PRESSURE_TOLERANCE_KPA {
                return Err(Error::invalid(format!(
                    "vacuum pressure {v} kPa of chamber {} is below the noise tolerance",
                    i + 1
                )));
            }
        }
        Ok(Self(p))
    }

    pub fn values(&self) -> [f64; CHAMBERS] {
        self.0
    }
}

/// A vector in the cup's tool frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vector2 {
    pub x: f64,
    pub y: f64,
}

impl Vector2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(&self, other: &Vector2) -> f64 {
        self.x * other.x + self.y * other.y
    }
}

/// Lateral offset from the fully sealed position plus the true yaw of the
/// desired motion direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPose {
    delta_mm: f64,
    phi: Angle,
}

impl GroundTruthPose {
    pub fn new(delta_mm: f64, phi: Angle) -> Result<Self> {
        if !delta_mm.is_finite() || delta_mm < 0.0 {
            return Err(Error::invalid(format!(
                "lateral offset {delta_mm} mm must be finite and non-negative"
            )));
        }
        Ok(Self { delta_mm, phi })
    }

    /// Builds a pose from raw degrees, wrapping the yaw.
    pub fn from_degrees(delta_mm: f64, phi_deg: f64) -> Result<Self> {
        Self::new(delta_mm, wrap_angle(phi_deg)?)
    }

    pub fn delta_mm(&self) -> f64 {
        self.delta_mm
    }

    pub fn phi(&self) -> Angle {
        self.phi
    }
}

/// A predicted motion direction. `phi_pred` is `None` when the vector has no
/// usable direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionEstimate {
    pub v_pred: Vector2,
    pub phi_pred: Option<Angle>,
}

impl DirectionEstimate {
    /// Wraps a raw vector, deriving its polar angle unless it is (numerically) zero.
    pub fn from_vector(v_pred: Vector2) -> Self {
        let phi_pred = if v_pred.norm() > EPS_ZERO {
            Angle::polar(v_pred.x, v_pred.y)
        } else {
            None
        };
        Self { v_pred, phi_pred }
    }
}

/// `P_i = P_atm - P_ch,i` for every chamber.
pub fn vacuum_pressures(frame: &SensorFrame) -> Result<VacuumPressures> {
    let p_atm = frame.p_atm();
    VacuumPressures::new(frame.p_ch().map(|p| p_atm - p))
}

/// Analytic direction estimate from pairwise chamber sums:
/// `x = (P1 + P4) - (P2 + P3)`, `y = (P3 + P4) - (P1 + P2)`.
pub fn model_direction(vp: &VacuumPressures) -> DirectionEstimate {
    let [p1, p2, p3, p4] = vp.values();
    let v = Vector2::new((p1 + p4) - (p2 + p3), (p3 + p4) - (p1 + p2));
    DirectionEstimate::from_vector(v)
}
