//! Yaw angles in degrees on the circle `[0, 360)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A yaw angle in degrees, always normalized to `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);

    /// Wraps any finite number of degrees onto `[0, 360)`.
    pub fn from_degrees(raw: f64) -> Result<Self> {
        wrap_angle(raw)
    }

    /// Polar angle of `(x, y)`, or `None` for a non-finite vector.
    ///
    /// The zero vector maps to 0 here; callers that need to flag it must
    /// check the magnitude themselves.
    pub fn polar(x: f64, y: f64) -> Option<Self> {
        if !(x.is_finite() && y.is_finite()) {
            return None;
        }
        wrap_angle(y.atan2(x).to_degrees()).ok()
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0.to_radians()
    }

    /// Unit vector `(cos, sin)` pointing along this angle.
    pub fn unit_vector(self) -> (f64, f64) {
        let (s, c) = self.radians().sin_cos();
        (c, s)
    }

    /// `self + delta` degrees, wrapped.
    pub fn rotated(self, delta: f64) -> Result<Self> {
        wrap_angle(self.0 + delta)
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}°", self.0)
    }
}

impl TryFrom<f64> for Angle {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        wrap_angle(value)
    }
}

impl From<Angle> for f64 {
    fn from(value: Angle) -> f64 {
        value.0
    }
}

/// Maps a finite angle in degrees onto `[0, 360)`.
pub fn wrap_angle(raw_degrees: f64) -> Result<Angle> {
    if !raw_degrees.is_finite() {
        return Err(Error::invalid(format!("angle {raw_degrees} is not finite")));
    }
    let wrapped = raw_degrees.rem_euclid(360.0);
    // rem_euclid of a tiny negative input rounds up to exactly 360.
    Ok(Angle(if wrapped >= 360.0 { 0.0 } else { wrapped }))
}

/// Shortest angular distance between two angles, in `[0, 180]` degrees.
pub fn angular_error(a: Angle, b: Angle) -> f64 {
    let d = (a.0 - b.0).abs() % 360.0;
    d.min(360.0 - d)
}
