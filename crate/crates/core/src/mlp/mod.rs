//! Dense ReLU network regressing the yaw direction from chamber pressures.
//!
//! All parameters live in one flat `Vec<f64>`, layer by layer: the weight
//! matrix of shape `(out, in)` in row-major order, then the bias vector. The
//! same layout is used for gradients, optimizer state and the model file.
//!
//! Hidden layers use ReLU, the output layer is linear. The default network is
//! `4 → 16 → 32 → 16 → 2`; the two outputs are read as `(cos φ, sin φ)`.

mod io;
mod rmsprop;
mod train;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::angle::Angle;
use crate::dataset::FeatureStats;
use crate::rng::substream;
use crate::sensor::{DirectionEstimate, SensorFrame, Vector2, CHAMBERS, EPS_ZERO};
use crate::{Error, Result};

pub use io::{load_model, model_from_bytes, model_to_bytes, save_model, save_trained, ModelSidecar, MAGIC};
pub use rmsprop::{rmsprop_step, Rmsprop, RmspropConfig};
pub use train::{train, InputScaling, TrainConfig, TrainHistory};

/// Layer widths of the reference network.
pub const DEFAULT_LAYER_SIZES: [usize; 5] = [CHAMBERS, 16, 32, 16, 2];

/// How raw sensor frames are turned into network inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InputMode {
    /// Chamber pressures in kPa, unchanged.
    Raw,
    /// Chamber pressures standardized with training-set statistics.
    Standardized(FeatureStats),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
    input_mode: InputMode,
}

/// Number of parameters of a dense network with the given widths.
pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(Error::invalid(format!(
            "layer sizes {layer_sizes:?} need at least two non-zero entries"
        )));
    }
    Ok(())
}

impl Mlp {
    /// Glorot-uniform weights, zero biases, raw inputs. Deterministic in `seed`.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let mut rng = substream(seed, 0);
        let mut params = Vec::with_capacity(param_count(layer_sizes));
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-limit..=limit)));
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params,
            input_mode: InputMode::Raw,
        })
    }

    /// All-zero network.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        check_sizes(layer_sizes)?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params: vec![0.0; param_count(layer_sizes)],
            input_mode: InputMode::Raw,
        })
    }

    pub fn from_parts(layer_sizes: Vec<usize>, params: Vec<f64>, input_mode: InputMode) -> Result<Self> {
        check_sizes(&layer_sizes)?;
        let expected = param_count(&layer_sizes);
        if params.len() != expected {
            return Err(Error::invalid(format!(
                "{} parameters given, layer sizes {layer_sizes:?} need {expected}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("model parameters must be finite"));
        }
        if matches!(input_mode, InputMode::Standardized(_)) && layer_sizes[0] != CHAMBERS {
            return Err(Error::invalid("standardized input requires 4 input units"));
        }
        Ok(Self {
            layer_sizes,
            params,
            input_mode,
        })
    }

    pub fn with_input_mode(mut self, input_mode: InputMode) -> Result<Self> {
        if matches!(input_mode, InputMode::Standardized(_)) && self.input_dim() != CHAMBERS {
            return Err(Error::invalid("standardized input requires 4 input units"));
        }
        self.input_mode = input_mode;
        Ok(self)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_mode(&self) -> &InputMode {
        &self.input_mode
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// `(weights, biases)` of dense layer `layer` (0-based).
    pub fn layer(&self, layer: usize) -> (&[f64], &[f64]) {
        let (w, b, end) = self.layer_offsets(layer);
        (&self.params[w..b], &self.params[b..end])
    }

    fn layer_offsets(&self, layer: usize) -> (usize, usize, usize) {
        let start = param_count(&self.layer_sizes[..=layer]);
        let (fan_in, fan_out) = (self.layer_sizes[layer], self.layer_sizes[layer + 1]);
        let bias = start + fan_in * fan_out;
        (start, bias, bias + fan_out)
    }

    /// Network input for a sensor frame under this model's input mode.
    pub fn input_features(&self, frame: &SensorFrame) -> [f64; CHAMBERS] {
        match &self.input_mode {
            InputMode::Raw => frame.p_ch(),
            InputMode::Standardized(stats) => stats.standardize(frame),
        }
    }

    /// Evaluates the network on an already-prepared input vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "expected {} inputs, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("network input must be finite"));
        }
        let mut acts = Activations::new(self);
        self.forward_into(input, &mut acts);
        Ok(acts.output().to_vec())
    }

    fn forward_into(&self, input: &[f64], acts: &mut Activations) {
        acts.values[0].copy_from_slice(input);
        let last = self.num_layers() - 1;
        for l in 0..self.num_layers() {
            let (weights, biases) = self.layer(l);
            let fan_in = self.layer_sizes[l];
            let (before, after) = acts.values.split_at_mut(l + 1);
            let prev = &before[l];
            let out = &mut after[0];
            for (j, o) in out.iter_mut().enumerate() {
                let row = &weights[j * fan_in..(j + 1) * fan_in];
                let z = biases[j] + row.iter().zip(prev).map(|(w, x)| w * x).sum::<f64>();
                *o = if l < last { z.max(0.0) } else { z };
            }
        }
    }

    /// Direction estimate for `frame`: the raw output vector plus its decoded angle.
    pub fn direction(&self, frame: &SensorFrame) -> Result<DirectionEstimate> {
        if self.output_dim() != 2 {
            return Err(Error::invalid(format!(
                "direction output needs 2 units, model has {}",
                self.output_dim()
            )));
        }
        let out = self.forward(&self.input_features(frame))?;
        let v = Vector2::new(out[0], out[1]);
        Ok(DirectionEstimate {
            v_pred: v,
            phi_pred: decode_angle([out[0], out[1]]),
        })
    }
}

/// Reference network with Glorot-uniform weights.
pub fn init_model(seed: u64) -> Mlp {
    Mlp::new(&DEFAULT_LAYER_SIZES, seed).expect("default sizes are valid")
}

/// Per-layer activations of one forward pass; `values[0]` is the input.
struct Activations {
    values: Vec<Vec<f64>>,
}

impl Activations {
    fn new(model: &Mlp) -> Self {
        Self {
            values: model.layer_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn output(&self) -> &[f64] {
        self.values.last().expect("non-empty")
    }
}

/// `(cos φ, sin φ)`.
pub fn target_encoding(phi: Angle) -> [f64; 2] {
    let (c, s) = phi.unit_vector();
    [c, s]
}

/// Polar angle of a network output; `None` for a (near-)zero or non-finite vector.
pub fn decode_angle(output: [f64; 2]) -> Option<Angle> {
    let [x, y] = output;
    let norm = x.hypot(y);
    if norm.is_nan() || norm <= EPS_ZERO {
        return None;
    }
    Angle::polar(x, y)
}

/// Mean squared error over the output components.
pub fn loss(pred: &[f64], target: &[f64]) -> f64 {
    debug_assert_eq!(pred.len(), target.len());
    pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64
}

/// Standardizes (if the model asks for it), runs the network and decodes the angle.
pub fn predict_angle(model: &Mlp, frame: &SensorFrame) -> Result<Option<Angle>> {
    Ok(model.direction(frame)?.phi_pred)
}

/// Reusable buffers for accumulating batch gradients.
pub struct Backprop {
    acts: Activations,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
    grads: Vec<f64>,
    loss_sum: f64,
    count: usize,
}

impl Backprop {
    pub fn new(model: &Mlp) -> Self {
        let widest = *model.layer_sizes.iter().max().expect("non-empty");
        Self {
            acts: Activations::new(model),
            delta: Vec::with_capacity(widest),
            delta_prev: Vec::with_capacity(widest),
            grads: vec![0.0; model.params.len()],
            loss_sum: 0.0,
            count: 0,
        }
    }

    pub fn reset(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
        self.loss_sum = 0.0;
        self.count = 0;
    }

    /// Adds one example's loss gradient (unscaled) to the running sum and
    /// returns its loss.
    pub fn accumulate(&mut self, model: &Mlp, input: &[f64], target: &[f64]) -> f64 {
        model.forward_into(input, &mut self.acts);
        let out = self.acts.output();
        let k = out.len() as f64;
        let loss = loss(out, target);
        self.delta.clear();
        self.delta
            .extend(out.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / k));

        for l in (0..model.num_layers()).rev() {
            let fan_in = model.layer_sizes[l];
            let (w_start, b_start, _) = model.layer_offsets(l);
            let prev = &self.acts.values[l];
            for (j, &d) in self.delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &mut self.grads[w_start + j * fan_in..w_start + (j + 1) * fan_in];
                for (g, x) in row.iter_mut().zip(prev) {
                    *g += d * x;
                }
                self.grads[b_start + j] += d;
            }
            if l == 0 {
                break;
            }
            // Back through the weights, then the ReLU of layer l-1. A hidden
            // activation of exactly 0 means z ≤ 0, where the derivative is 0.
            let weights = &model.params[w_start..b_start];
            self.delta_prev.clear();
            self.delta_prev.resize(fan_in, 0.0);
            for (j, &d) in self.delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &weights[j * fan_in..(j + 1) * fan_in];
                for (acc, w) in self.delta_prev.iter_mut().zip(row) {
                    *acc += w * d;
                }
            }
            for (acc, &a) in self.delta_prev.iter_mut().zip(prev) {
                if a <= 0.0 {
                    *acc = 0.0;
                }
            }
            std::mem::swap(&mut self.delta, &mut self.delta_prev);
        }

        self.loss_sum += loss;
        self.count += 1;
        loss
    }

    /// Mean gradient and mean loss over the accumulated examples.
    pub fn mean(&self) -> (Vec<f64>, f64) {
        let n = self.count.max(1) as f64;
        (self.grads.iter().map(|g| g / n).collect(), self.loss_sum / n)
    }

    pub(crate) fn mean_into(&self, out: &mut [f64]) -> f64 {
        let n = self.count.max(1) as f64;
        for (o, g) in out.iter_mut().zip(&self.grads) {
            *o = g / n;
        }
        self.loss_sum / n
    }
}

/// Gradient of the mean batch loss with respect to every parameter (same
/// layout as [`Mlp::params`]), plus the mean loss.
pub fn backward<I, T>(model: &Mlp, batch: &[(I, T)]) -> Result<(Vec<f64>, f64)>
where
    I: AsRef<[f64]>,
    T: AsRef<[f64]>,
{
    if batch.is_empty() {
        return Err(Error::invalid("cannot backpropagate an empty batch"));
    }
    let mut bp = Backprop::new(model);
    for (input, target) in batch {
        let (input, target) = (input.as_ref(), target.as_ref());
        if input.len() != model.input_dim() || target.len() != model.output_dim() {
            return Err(Error::invalid("batch example does not match the model's shape"));
        }
        bp.accumulate(model, input, target);
    }
    Ok(bp.mean())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angle::{angular_error, wrap_angle};
    use proptest::prelude::*;

    #[test]
    fn default_shapes_and_count() {
        let m = init_model(3);
        assert_eq!(m.layer_sizes(), &[4, 16, 32, 16, 2]);
        let shapes: Vec<(usize, usize)> = (0..m.num_layers())
            .map(|l| {
                let (w, b) = m.layer(l);
                (b.len(), w.len() / b.len())
            })
            .collect();
        assert_eq!(shapes, vec![(16, 4), (32, 16), (16, 32), (2, 16)]);
        // (4·16+16) + (16·32+32) + (32·16+16) + (16·2+2)
        assert_eq!(m.params().len(), 80 + 544 + 528 + 34);
        assert_eq!(param_count(&DEFAULT_LAYER_SIZES), 1_186);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_model(11);
        assert_eq!(a, init_model(11));
        assert_ne!(a, init_model(12));
        for l in 0..a.num_layers() {
            let (w, b) = a.layer(l);
            let (fan_out, fan_in) = (b.len(), w.len() / b.len());
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            assert!(w.iter().all(|x| x.abs() <= limit));
            assert!(b.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn zero_model_outputs_zero() {
        let m = Mlp::zeros(&DEFAULT_LAYER_SIZES).unwrap();
        assert_eq!(m.forward(&[1.0, -2.0, 3.0, 100.0]).unwrap(), vec![0.0, 0.0]);
        let frame = SensorFrame::new([95.0, 96.0, 97.0, 98.0], 101.325).unwrap();
        assert_eq!(predict_angle(&m, &frame).unwrap(), None);
    }

    #[test]
    fn relu_gates_negative_input() {
        let m = Mlp::from_parts(vec![1, 1, 1], vec![1.0, 0.0, 1.0, 0.0], InputMode::Raw).unwrap();
        assert_eq!(m.forward(&[-3.0]).unwrap(), vec![0.0]);
        assert_eq!(m.forward(&[2.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let m = init_model(0);
        assert!(m.forward(&[f64::NAN, 0.0, 0.0, 0.0]).is_err());
        assert!(m.forward(&[0.0; 3]).is_err());
    }

    /// Written without the flat-layout helpers: explicit nested loops over
    /// weight matrices copied out by hand.
    fn straight_line_forward(m: &Mlp, input: &[f64]) -> Vec<f64> {
        let sizes = m.layer_sizes();
        let mut offset = 0;
        let mut x = input.to_vec();
        for l in 0..sizes.len() - 1 {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let mut w = vec![vec![0.0; n_in]; n_out];
            for (r, row) in w.iter_mut().enumerate() {
                for (c, cell) in row.iter_mut().enumerate() {
                    *cell = m.params()[offset + r * n_in + c];
                }
            }
            offset += n_in * n_out;
            let b = &m.params()[offset..offset + n_out];
            offset += n_out;
            let mut y = vec![0.0; n_out];
            for r in 0..n_out {
                let mut acc = b[r];
                for c in 0..n_in {
                    acc += w[r][c] * x[c];
                }
                y[r] = if l + 2 < sizes.len() && acc < 0.0 { 0.0 } else { acc };
            }
            x = y;
        }
        x
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        let mut m = init_model(42);
        // non-zero biases so they are exercised too
        let n = m.params().len();
        for (i, p) in m.params_mut().iter_mut().enumerate() {
            *p += 0.01 * ((i * 7919 % 97) as f64 / 97.0 - 0.5);
        }
        assert_eq!(m.params().len(), n);
        for input in [[0.3, -1.2, 0.8, 2.0], [-0.5, 0.1, 0.0, -2.2], [95.0, 96.0, 97.0, 98.0]] {
            let got = m.forward(&input).unwrap();
            let want = straight_line_forward(&m, &input);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0), "{g} vs {w}");
            }
        }
    }

    #[test]
    fn encoding_examples() {
        let [c, s] = target_encoding(Angle::ZERO);
        assert_eq!((c, s), (1.0, 0.0));
        assert_eq!(decode_angle([1.0, 0.0]).unwrap().degrees(), 0.0);
        let [c, s] = target_encoding(wrap_angle(90.0).unwrap());
        assert!(c.abs() < 1e-15 && (s - 1.0).abs() < 1e-15);
        assert_eq!(decode_angle([0.0, 1.0]).unwrap().degrees(), 90.0);
        let a = decode_angle([-0.6, -0.6]).unwrap();
        assert!((a.degrees() - 225.0).abs() < 1e-12);
        assert_eq!(decode_angle([0.0, 0.0]), None);
        assert_eq!(decode_angle([f64::NAN, 1.0]), None);
    }

    #[test]
    fn loss_examples() {
        assert_eq!(loss(&[0.3, -0.2], &[0.3, -0.2]), 0.0);
        assert_eq!(loss(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
    }

    #[test]
    fn zero_gradient_when_prediction_is_exact() {
        let m = Mlp::zeros(&DEFAULT_LAYER_SIZES).unwrap();
        let batch = vec![(vec![1.0, 2.0, 3.0, 4.0], vec![0.0, 0.0]); 3];
        let (g, l) = backward(&m, &batch).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn duplicated_example_gives_same_gradient() {
        let m = init_model(5);
        let one = vec![(vec![0.4, -0.3, 1.1, 0.2], vec![0.6, 0.8])];
        let many = vec![one[0].clone(); 7];
        let (g1, l1) = backward(&m, &one).unwrap();
        let (g7, l7) = backward(&m, &many).unwrap();
        assert!((l1 - l7).abs() < 1e-15);
        for (a, b) in g1.iter().zip(&g7) {
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1e-300));
        }
        let empty: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        assert!(backward(&m, &empty).is_err());
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(phi in 0.0f64..360.0) {
            let a = wrap_angle(phi).unwrap();
            let back = decode_angle(target_encoding(a)).unwrap();
            prop_assert!(angular_error(a, back) < 1e-9);
        }

        #[test]
        fn loss_is_non_negative(p in proptest::array::uniform2(-1e3f64..1e3), t in proptest::array::uniform2(-1e3f64..1e3)) {
            prop_assert!(loss(&p, &t) >= 0.0);
        }
    }
}
