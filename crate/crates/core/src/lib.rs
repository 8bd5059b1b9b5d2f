//! Yaw-direction estimation for a four-chamber smart suction cup.
//!
//! A cup hovering near a plate edge reads four chamber pressures. From them we
//! estimate which way to slide the cup (in its own tool frame) to reach a
//! full seal, either analytically from pairwise chamber sums
//! ([`sensor::model_direction`]) or with a small trained network ([`mlp`]).
//!
//! - [`angle`], [`sensor`]: angles on the circle, readings, the analytic estimator.
//! - [`synth`]: seeded synthetic readings for a cup near a straight edge.
//! - [`dataset`]: CSV persistence, train/validation split, feature scaling.
//! - [`mlp`]: the network, backpropagation, RMSprop, training, model files.
//! - [`eval`]: angular RMSE and the multi-seed comparison of both estimators.
//! - [`search`]: closed-loop search that follows the estimates until the cup seals.
//!
//! Work that fans out (dataset generation, seeds, search repetitions) runs on
//! rayon when the `parallel` feature is on; results never depend on it.

pub mod angle;
pub mod dataset;
mod error;
pub mod eval;
pub mod mlp;
pub mod rng;
pub mod search;
pub mod sensor;
pub mod synth;

pub use angle::{angular_error, wrap_angle, Angle};
pub use dataset::{LabeledSample, SplitSpec};
pub use error::{Error, Result};
pub use sensor::{model_direction, vacuum_pressures, DirectionEstimate, GroundTruthPose, SensorFrame, VacuumPressures, Vector2};

/// `(0..n).map(f)` collected in index order, on the rayon pool when enabled.
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
