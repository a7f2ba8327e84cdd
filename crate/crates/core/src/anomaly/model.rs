//! Two-layer temporal predictor `x̂ = W₂·tanh(W₁·flatten(X) + b₁) + b₂`,
//! squared-error loss, analytic gradients and mini-batch training.
//!
//! Parameter layout in `theta`: `W₁` (h × T·d, row-major), `b₁` (h),
//! `W₂` (d × h, row-major), `b₂` (d).

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anomaly::features::EventWindow;
use crate::error::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelDims {
    pub window: usize,
    pub features: usize,
    pub hidden: usize,
}

impl ModelDims {
    pub fn input_len(&self) -> usize {
        self.window * self.features
    }

    pub fn param_len(&self) -> usize {
        self.input_len() * self.hidden + self.hidden + self.hidden * self.features + self.features
    }

    fn w1(&self) -> std::ops::Range<usize> {
        0..self.input_len() * self.hidden
    }

    fn b1(&self) -> std::ops::Range<usize> {
        let s = self.input_len() * self.hidden;
        s..s + self.hidden
    }

    fn w2(&self) -> std::ops::Range<usize> {
        let s = self.b1().end;
        s..s + self.hidden * self.features
    }

    fn b2(&self) -> std::ops::Range<usize> {
        let s = self.w2().end;
        s..s + self.features
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub theta: Vec<f64>,
    pub dims: ModelDims,
    /// Number of training windows behind these parameters.
    pub sample_count: u64,
}

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        ModelParams {
            theta: vec![0.0; dims.param_len()],
            dims,
            sample_count: 0,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(dims: ModelDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(dims);
        let a1 = (6.0 / (dims.input_len() + dims.hidden) as f64).sqrt();
        let a2 = (6.0 / (dims.hidden + dims.features) as f64).sqrt();
        for w in &mut p.theta[dims.w1()] {
            *w = rng.random_range(-a1..a1);
        }
        for w in &mut p.theta[dims.w2()] {
            *w = rng.random_range(-a2..a2);
        }
        p
    }

    pub fn w1(&self) -> &[f64] {
        &self.theta[self.dims.w1()]
    }

    pub fn b1(&self) -> &[f64] {
        &self.theta[self.dims.b1()]
    }

    pub fn w2(&self) -> &[f64] {
        &self.theta[self.dims.w2()]
    }

    pub fn b2(&self) -> &[f64] {
        &self.theta[self.dims.b2()]
    }

    pub fn b2_mut(&mut self) -> &mut [f64] {
        let r = self.dims.b2();
        &mut self.theta[r]
    }

    pub fn w2_mut(&mut self) -> &mut [f64] {
        let r = self.dims.w2();
        &mut self.theta[r]
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
    }

    fn check(&self, window: &EventWindow) -> Result<(), ModelError> {
        if self.theta.len() != self.dims.param_len() {
            return Err(ModelError::DimensionMismatch {
                expected: self.dims.param_len(),
                got: self.theta.len(),
            });
        }
        if window.input.len() != self.dims.input_len() {
            return Err(ModelError::DimensionMismatch {
                expected: self.dims.input_len(),
                got: window.input.len(),
            });
        }
        if window.target.len() != self.dims.features {
            return Err(ModelError::DimensionMismatch {
                expected: self.dims.features,
                got: window.target.len(),
            });
        }
        Ok(())
    }

    /// Writes `<stem>.json` (header) and `<stem>.bin` (little-endian f64s).
    pub fn save_checkpoint(&self, stem: &Path) -> std::io::Result<()> {
        let header = serde_json::json!({
            "dims": self.dims,
            "sample_count": self.sample_count,
            "len": self.theta.len(),
            "dtype": "f64-le",
        });
        fs::write(
            stem.with_extension("json"),
            serde_json::to_vec_pretty(&header)?,
        )?;
        let mut f = fs::File::create(stem.with_extension("bin"))?;
        for v in &self.theta {
            f.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load_checkpoint(stem: &Path) -> Result<Self, ModelError> {
        let io = |e: std::io::Error| ModelError::Checkpoint(e.to_string());
        let header: serde_json::Value =
            serde_json::from_slice(&fs::read(stem.with_extension("json")).map_err(io)?)
                .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        let dims: ModelDims = serde_json::from_value(header["dims"].clone())
            .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        let sample_count = header["sample_count"].as_u64().unwrap_or(0);
        let bytes = fs::read(stem.with_extension("bin")).map_err(io)?;
        if bytes.len() != dims.param_len() * 8 {
            return Err(ModelError::Checkpoint(format!(
                "expected {} parameters, file holds {} bytes",
                dims.param_len(),
                bytes.len()
            )));
        }
        let theta = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(ModelParams {
            theta,
            dims,
            sample_count,
        })
    }
}

fn forward_into(params: &ModelParams, input: &[f64], hidden: &mut [f64], out: &mut [f64]) {
    let dims = params.dims;
    let n_in = dims.input_len();
    let (w1, b1, w2, b2) = (params.w1(), params.b1(), params.w2(), params.b2());
    for (j, h) in hidden.iter_mut().enumerate() {
        let row = &w1[j * n_in..(j + 1) * n_in];
        let z: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b1[j];
        *h = z.tanh();
    }
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w2[i * dims.hidden..(i + 1) * dims.hidden];
        *o = row.iter().zip(hidden.iter()).map(|(w, a)| w * a).sum::<f64>() + b2[i];
    }
}

/// `x̂_t = f(X_t; θ)`.
pub fn predict(params: &ModelParams, window: &EventWindow) -> Result<Vec<f64>, ModelError> {
    params.check(window)?;
    let mut hidden = vec![0.0; params.dims.hidden];
    let mut out = vec![0.0; params.dims.features];
    forward_into(params, &window.input, &mut hidden, &mut out);
    Ok(out)
}

fn squared_error(target: &[f64], predicted: &[f64]) -> f64 {
    target
        .iter()
        .zip(predicted)
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// `‖x_t − x̂_t‖²`.
pub fn loss(params: &ModelParams, window: &EventWindow) -> Result<f64, ModelError> {
    let predicted = predict(params, window)?;
    Ok(squared_error(&window.target, &predicted))
}

/// Anomaly score; the same quantity as [`loss`].
pub fn score(params: &ModelParams, window: &EventWindow) -> Result<f64, ModelError> {
    loss(params, window)
}

pub fn mean_loss(params: &ModelParams, windows: &[EventWindow]) -> Result<f64, ModelError> {
    if windows.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut total = 0.0;
    for w in windows {
        total += loss(params, w)?;
    }
    Ok(total / windows.len() as f64)
}

/// Scratch buffers for repeated forward/backward passes.
pub struct Workspace {
    hidden: Vec<f64>,
    out: Vec<f64>,
    d_out: Vec<f64>,
    d_hidden: Vec<f64>,
}

impl Workspace {
    pub fn new(dims: ModelDims) -> Self {
        Workspace {
            hidden: vec![0.0; dims.hidden],
            out: vec![0.0; dims.features],
            d_out: vec![0.0; dims.features],
            d_hidden: vec![0.0; dims.hidden],
        }
    }
}

/// Adds `scale · ∂L/∂θ` for one window to `grad` and returns `L`.
pub fn accumulate_gradient(
    params: &ModelParams,
    window: &EventWindow,
    scale: f64,
    grad: &mut [f64],
    ws: &mut Workspace,
) -> f64 {
    let dims = params.dims;
    let n_in = dims.input_len();
    forward_into(params, &window.input, &mut ws.hidden, &mut ws.out);

    let mut l = 0.0;
    for i in 0..dims.features {
        let r = ws.out[i] - window.target[i];
        l += r * r;
        ws.d_out[i] = 2.0 * r * scale;
    }

    let w2 = params.w2();
    ws.d_hidden.fill(0.0);
    let (g_w1, rest) = grad.split_at_mut(dims.b1().start);
    let (g_b1, rest) = rest.split_at_mut(dims.hidden);
    let (g_w2, g_b2) = rest.split_at_mut(dims.hidden * dims.features);
    for i in 0..dims.features {
        let d = ws.d_out[i];
        g_b2[i] += d;
        let row = &w2[i * dims.hidden..(i + 1) * dims.hidden];
        let g_row = &mut g_w2[i * dims.hidden..(i + 1) * dims.hidden];
        for j in 0..dims.hidden {
            g_row[j] += d * ws.hidden[j];
            ws.d_hidden[j] += d * row[j];
        }
    }
    for j in 0..dims.hidden {
        let a = ws.hidden[j];
        let dz = ws.d_hidden[j] * (1.0 - a * a);
        if dz == 0.0 {
            continue;
        }
        g_b1[j] += dz;
        let g_row = &mut g_w1[j * n_in..(j + 1) * n_in];
        for (g, x) in g_row.iter_mut().zip(&window.input) {
            *g += dz * x;
        }
    }
    l
}

/// Gradient of the mean loss over `windows`.
pub fn gradient(params: &ModelParams, windows: &[EventWindow]) -> Result<Vec<f64>, ModelError> {
    if windows.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    for w in windows {
        params.check(w)?;
    }
    let mut grad = vec![0.0; params.theta.len()];
    let mut ws = Workspace::new(params.dims);
    let scale = 1.0 / windows.len() as f64;
    for w in windows {
        accumulate_gradient(params, w, scale, &mut grad, &mut ws);
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean pre-step batch loss for each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch gradient descent on the mean squared prediction error, with
/// windows reshuffled every epoch from `seed`.
pub fn train_local(
    params: &ModelParams,
    data: &[EventWindow],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if cfg.batch_size == 0 {
        return Err(ModelError::InvalidConfig("batch size must be positive".into()));
    }
    for w in data {
        params.check(w)?;
    }
    let mut current = params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; current.theta.len()];
    let mut ws = Workspace::new(current.dims);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                loss_sum += accumulate_gradient(&current, &data[i], scale, &mut grad, &mut ws);
            }
            if cfg.learning_rate != 0.0 {
                for (t, g) in current.theta.iter_mut().zip(&grad) {
                    *t -= cfg.learning_rate * g;
                }
            }
        }
        epoch_losses.push(loss_sum / data.len() as f64);
    }
    current.sample_count = data.len() as u64;
    Ok(TrainOutcome {
        params: current,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anomaly::features::FEATURE_DIM;

    fn window(rng: &mut ChaCha8Rng, t: usize) -> EventWindow {
        EventWindow {
            input: (0..t * FEATURE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect(),
            target: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
            actor: "a".into(),
            label: None,
            position: 0,
        }
    }

    fn dims() -> ModelDims {
        ModelDims {
            window: 3,
            features: FEATURE_DIM,
            hidden: 5,
        }
    }

    #[test]
    fn param_len_formula() {
        let d = ModelDims {
            window: 10,
            features: 10,
            hidden: 32,
        };
        assert_eq!(d.param_len(), 100 * 32 + 32 + 32 * 10 + 10);
        assert_eq!(ModelParams::zeros(d).theta.len(), d.param_len());
    }

    #[test]
    fn zero_params_predict_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = window(&mut rng, 3);
        let p = ModelParams::zeros(dims());
        assert_eq!(predict(&p, &w).unwrap(), vec![0.0; FEATURE_DIM]);
    }

    #[test]
    fn constant_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = ModelParams::init(dims(), 3);
        p.w2_mut().fill(0.0);
        p.b2_mut().iter_mut().enumerate().for_each(|(i, b)| *b = i as f64);
        for _ in 0..3 {
            let w = window(&mut rng, 3);
            let out = predict(&p, &w).unwrap();
            assert_eq!(out, (0..FEATURE_DIM).map(|i| i as f64).collect::<Vec<_>>());
        }
    }

    #[test]
    fn loss_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut w = window(&mut rng, 3);
        let p = ModelParams::zeros(dims());
        w.target = [0.0; FEATURE_DIM];
        assert_eq!(loss(&p, &w).unwrap(), 0.0);
        w.target[0] = 1.0;
        assert_eq!(loss(&p, &w).unwrap(), 1.0);
        assert_eq!(score(&p, &w).unwrap().to_bits(), loss(&p, &w).unwrap().to_bits());
    }

    #[test]
    fn dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = window(&mut rng, 4);
        let p = ModelParams::zeros(dims());
        assert!(matches!(predict(&p, &w), Err(ModelError::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data: Vec<_> = (0..20).map(|_| window(&mut rng, 3)).collect();
        let p = ModelParams::init(dims(), 7);
        let cfg = TrainConfig {
            epochs: 1,
            learning_rate: 0.0,
            batch_size: 8,
            seed: 1,
        };
        let out = train_local(&p, &data, &cfg).unwrap();
        assert_eq!(out.params.theta, p.theta);
        assert_eq!(out.params.sample_count, 20);
        assert_eq!(
            train_local(&p, &[], &cfg).unwrap_err(),
            ModelError::EmptyDataset
        );
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<_> = (0..40).map(|_| window(&mut rng, 3)).collect();
        let p = ModelParams::init(dims(), 9);
        let cfg = TrainConfig {
            epochs: 3,
            learning_rate: 0.01,
            batch_size: 7,
            seed: 11,
        };
        let a = train_local(&p, &data, &cfg).unwrap();
        let b = train_local(&p, &data, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_window_descent() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let data = vec![window(&mut rng, 3)];
        let mut p = ModelParams::init(dims(), 12);
        let cfg = TrainConfig {
            epochs: 1,
            learning_rate: 0.01,
            batch_size: 1,
            seed: 0,
        };
        let mut losses = Vec::new();
        for _ in 0..200 {
            losses.push(loss(&p, &data[0]).unwrap());
            p = train_local(&p, &data, &cfg).unwrap().params;
        }
        for pair in losses[10..].windows(2) {
            assert!(pair[1] <= pair[0] + 1e-15, "{} -> {}", pair[0], pair[1]);
        }
        assert!(losses[199] < losses[0]);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = ModelParams::init(dims(), 13);
        p.sample_count = 77;
        let stem = dir.path().join("model");
        p.save_checkpoint(&stem).unwrap();
        assert_eq!(
            std::fs::metadata(stem.with_extension("bin")).unwrap().len(),
            p.theta.len() as u64 * 8
        );
        assert_eq!(ModelParams::load_checkpoint(&stem).unwrap(), p);
    }
}
