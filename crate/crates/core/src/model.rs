//! A from-scratch two-layer LSTM regressor with a single linear output.
//!
//! The network is deliberately small (35 + 20 units by default) and trained
//! with plain mini-batch gradient descent plus global-norm clipping. All
//! gradients come from full backpropagation through time and are verified
//! against central finite differences in the test suite. Everything is
//! seed-deterministic in single-threaded execution.

use std::io::{Read, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Sample, SampleSet};

const MODEL_MAGIC: &[u8; 8] = b"ACHMODEL";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("empty input")]
    EmptyInput,
    #[error("training diverged at epoch {epoch}")]
    Diverged {
        epoch: usize,
        history: Vec<EpochLoss>,
    },
    #[error("bad model file magic")]
    BadMagic,
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),
    #[error("model file truncated or corrupt")]
    Truncated,
    #[error("model file has trailing bytes")]
    TrailingData,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Network shape: `input_features` per timestep, `lookback` timesteps,
/// two LSTM layers and one dense output neuron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_features: usize,
    pub lstm1_units: usize,
    pub lstm2_units: usize,
    pub lookback: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_features: 7,
            lstm1_units: 35,
            lstm2_units: 20,
            lookback: 120,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_features == 0
            || self.lstm1_units == 0
            || self.lstm2_units == 0
            || self.lookback == 0
        {
            return Err(ModelError::InvalidConfig(
                "all config dimensions must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Closed-form trainable parameter count:
    /// `4*h1*(f+h1+1) + 4*h2*(h1+h2+1) + (h2+1)`.
    pub fn param_count(&self) -> usize {
        let f = self.input_features;
        let h1 = self.lstm1_units;
        let h2 = self.lstm2_units;
        4 * h1 * (f + h1 + 1) + 4 * h2 * (h1 + h2 + 1) + (h2 + 1)
    }
}

/// One LSTM layer's weights. Gate blocks are ordered `[input, forget, cell,
/// output]`; `w_ih` is `4*units x input_dim` row-major, `w_hh` is
/// `4*units x units`, `bias` is `4*units`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    pub input_dim: usize,
    pub units: usize,
    pub w_ih: Vec<f64>,
    pub w_hh: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LstmLayerParams {
    fn zeros(input_dim: usize, units: usize) -> Self {
        LstmLayerParams {
            input_dim,
            units,
            w_ih: vec![0.0; 4 * units * input_dim],
            w_hh: vec![0.0; 4 * units * units],
            bias: vec![0.0; 4 * units],
        }
    }
}

/// All trainable state. Gradient tensors share this layout, so `backward`
/// returns the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub layer1: LstmLayerParams,
    pub layer2: LstmLayerParams,
    pub dense_w: Vec<f64>,
    pub dense_b: f64,
}

pub type Gradients = ModelParams;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-timestep activations cached for backpropagation. `gates` holds the
/// post-activation `[i|f|g|o]` blocks.
struct LayerCache {
    gates: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    tanh_c: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
}

impl LstmLayerParams {
    /// One recurrence step; writes activated gates, cell and hidden state.
    fn step(
        &self,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
        gates: &mut [f64],
        c: &mut [f64],
        tanh_c: &mut [f64],
        h: &mut [f64],
    ) {
        let u = self.units;
        let f_in = self.input_dim;
        for row in 0..4 * u {
            let z = self.bias[row]
                + dot(&self.w_ih[row * f_in..(row + 1) * f_in], x)
                + dot(&self.w_hh[row * u..(row + 1) * u], h_prev);
            gates[row] = if row / u == 2 { z.tanh() } else { sigmoid(z) };
        }
        let (gi, rest) = gates.split_at(u);
        let (gf, rest) = rest.split_at(u);
        let (gg, go) = rest.split_at(u);
        for j in 0..u {
            c[j] = gf[j] * c_prev[j] + gi[j] * gg[j];
            tanh_c[j] = c[j].tanh();
            h[j] = go[j] * tanh_c[j];
        }
    }

    /// Runs the full sequence, returning the final hidden state only.
    fn forward_last(&self, xs: &[&[f64]]) -> Vec<f64> {
        let u = self.units;
        let mut h = vec![0.0; u];
        let mut c = vec![0.0; u];
        let mut gates = vec![0.0; 4 * u];
        let mut c_next = vec![0.0; u];
        let mut tanh_c = vec![0.0; u];
        let mut h_next = vec![0.0; u];
        for x in xs {
            self.step(x, &h, &c, &mut gates, &mut c_next, &mut tanh_c, &mut h_next);
            std::mem::swap(&mut h, &mut h_next);
            std::mem::swap(&mut c, &mut c_next);
        }
        h
    }

    /// Runs the full sequence keeping every intermediate for BPTT.
    fn forward_cached(&self, xs: &[&[f64]]) -> LayerCache {
        let u = self.units;
        let t_len = xs.len();
        let mut cache = LayerCache {
            gates: Vec::with_capacity(t_len),
            c: Vec::with_capacity(t_len),
            tanh_c: Vec::with_capacity(t_len),
            h: Vec::with_capacity(t_len),
        };
        let zero_h = vec![0.0; u];
        let zero_c = vec![0.0; u];
        for (t, x) in xs.iter().enumerate() {
            let h_prev = if t == 0 { &zero_h } else { &cache.h[t - 1] };
            let c_prev = if t == 0 { &zero_c } else { &cache.c[t - 1] };
            let mut gates = vec![0.0; 4 * u];
            let mut c = vec![0.0; u];
            let mut tanh_c = vec![0.0; u];
            let mut h = vec![0.0; u];
            self.step(x, h_prev, c_prev, &mut gates, &mut c, &mut tanh_c, &mut h);
            cache.gates.push(gates);
            cache.c.push(c);
            cache.tanh_c.push(tanh_c);
            cache.h.push(h);
        }
        cache
    }

    /// Backpropagation through time for this layer.
    ///
    /// `dh_out[t]` is the loss gradient arriving at `h_t` from above.
    /// Accumulates weight gradients into `grads` and returns the gradients
    /// with respect to the layer inputs.
    fn backward_seq(
        &self,
        xs: &[&[f64]],
        cache: &LayerCache,
        dh_out: &[Vec<f64>],
        grads: &mut LstmLayerParams,
    ) -> Vec<Vec<f64>> {
        let u = self.units;
        let f_in = self.input_dim;
        let t_len = xs.len();
        let zero = vec![0.0; u];
        let mut dxs = vec![vec![0.0; f_in]; t_len];
        let mut dh_next = vec![0.0; u];
        let mut dc_next = vec![0.0; u];
        let mut dz = vec![0.0; 4 * u];
        for t in (0..t_len).rev() {
            let gates = &cache.gates[t];
            let (gi, rest) = gates.split_at(u);
            let (gf, rest) = rest.split_at(u);
            let (gg, go) = rest.split_at(u);
            let tanh_c = &cache.tanh_c[t];
            let c_prev = if t == 0 { &zero } else { &cache.c[t - 1] };
            let h_prev = if t == 0 { &zero } else { &cache.h[t - 1] };
            for j in 0..u {
                let dh = dh_out[t][j] + dh_next[j];
                let dc = dh * go[j] * (1.0 - tanh_c[j] * tanh_c[j]) + dc_next[j];
                dz[j] = dc * gg[j] * gi[j] * (1.0 - gi[j]); // input gate
                dz[u + j] = dc * c_prev[j] * gf[j] * (1.0 - gf[j]); // forget gate
                dz[2 * u + j] = dc * gi[j] * (1.0 - gg[j] * gg[j]); // cell candidate
                dz[3 * u + j] = dh * tanh_c[j] * go[j] * (1.0 - go[j]); // output gate
                dc_next[j] = dc * gf[j];
            }
            let x = xs[t];
            let dx = &mut dxs[t];
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for row in 0..4 * u {
                let d = dz[row];
                if d == 0.0 {
                    continue;
                }
                let wih_row = &self.w_ih[row * f_in..(row + 1) * f_in];
                let gih_row = &mut grads.w_ih[row * f_in..(row + 1) * f_in];
                for k in 0..f_in {
                    gih_row[k] += d * x[k];
                    dx[k] += d * wih_row[k];
                }
                let whh_row = &self.w_hh[row * u..(row + 1) * u];
                let ghh_row = &mut grads.w_hh[row * u..(row + 1) * u];
                for j in 0..u {
                    ghh_row[j] += d * h_prev[j];
                    dh_next[j] += d * whh_row[j];
                }
                grads.bias[row] += d;
            }
        }
        dxs
    }
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        Ok(ModelParams {
            config,
            layer1: LstmLayerParams::zeros(config.input_features, config.lstm1_units),
            layer2: LstmLayerParams::zeros(config.lstm1_units, config.lstm2_units),
            dense_w: vec![0.0; config.lstm2_units],
            dense_b: 0.0,
        })
    }

    pub fn param_count(&self) -> usize {
        self.flat_iter().count()
    }

    fn flat_iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layer1
            .w_ih
            .iter()
            .chain(&self.layer1.w_hh)
            .chain(&self.layer1.bias)
            .chain(&self.layer2.w_ih)
            .chain(&self.layer2.w_hh)
            .chain(&self.layer2.bias)
            .chain(&self.dense_w)
            .copied()
            .chain(std::iter::once(self.dense_b))
    }

    fn flat_iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layer1
            .w_ih
            .iter_mut()
            .chain(self.layer1.w_hh.iter_mut())
            .chain(self.layer1.bias.iter_mut())
            .chain(self.layer2.w_ih.iter_mut())
            .chain(self.layer2.w_hh.iter_mut())
            .chain(self.layer2.bias.iter_mut())
            .chain(self.dense_w.iter_mut())
            .chain(std::iter::once(&mut self.dense_b))
    }

    /// All weights in declared order (the model-file order).
    pub fn flat_values(&self) -> Vec<f64> {
        self.flat_iter().collect()
    }

    pub fn assign_flat(&mut self, values: &[f64]) -> Result<(), ModelError> {
        if values.len() != self.config.param_count() {
            return Err(ModelError::ShapeMismatch {
                expected: format!("{} weights", self.config.param_count()),
                got: format!("{}", values.len()),
            });
        }
        for (slot, &v) in self.flat_iter_mut().zip(values) {
            *slot = v;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.flat_iter().all(f64::is_finite)
    }

    /// Euclidean norm over every weight, used for gradient clipping.
    pub fn global_norm(&self) -> f64 {
        self.flat_iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn check_input(&self, x: &[f64]) -> Result<(), ModelError> {
        let expected = self.config.lookback * self.config.input_features;
        if x.len() != expected {
            return Err(ModelError::ShapeMismatch {
                expected: format!(
                    "{} values ({} x {})",
                    expected, self.config.lookback, self.config.input_features
                ),
                got: format!("{}", x.len()),
            });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(ModelError::NonFinite("input window"));
        }
        Ok(())
    }

    /// Runs the two LSTM layers over a `lookback x features` window (row
    /// major) and returns the linear dense output. Pure; never mutates.
    pub fn forward(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.check_input(x)?;
        let rows: Vec<&[f64]> = x.chunks(self.config.input_features).collect();
        let h1_cache = self.layer1.forward_cached(&rows);
        let h1_refs: Vec<&[f64]> = h1_cache.h.iter().map(|h| h.as_slice()).collect();
        let h2 = self.layer2.forward_last(&h1_refs);
        Ok(dot(&self.dense_w, &h2) + self.dense_b)
    }
}

/// Anything that can map an input window to a next-value prediction.
/// Implemented by [`ModelParams`] and by test stubs.
pub trait Predictor {
    fn predict(&self, x: &[f64], rows: usize, cols: usize) -> Result<f64, ModelError>;
}

impl Predictor for ModelParams {
    fn predict(&self, x: &[f64], rows: usize, cols: usize) -> Result<f64, ModelError> {
        if rows != self.config.lookback || cols != self.config.input_features {
            return Err(ModelError::ShapeMismatch {
                expected: format!(
                    "{} x {} window",
                    self.config.lookback, self.config.input_features
                ),
                got: format!("{rows} x {cols}"),
            });
        }
        self.forward(x)
    }
}

/// Deterministic weight initialization.
///
/// Input and recurrent weights draw uniformly from `[-1, 1]` scaled by
/// `1/sqrt(fan_in)`; forget-gate biases start at 1 and the rest at 0.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::zeros(*config)?;
    let fill = |values: &mut [f64], fan_in: usize, rng: &mut ChaCha8Rng| {
        let scale = 1.0 / (fan_in as f64).sqrt();
        for v in values {
            *v = rng.random_range(-1.0..1.0) * scale;
        }
    };
    fill(&mut params.layer1.w_ih, config.input_features, &mut rng);
    fill(&mut params.layer1.w_hh, config.lstm1_units, &mut rng);
    fill(&mut params.layer2.w_ih, config.lstm1_units, &mut rng);
    fill(&mut params.layer2.w_hh, config.lstm2_units, &mut rng);
    fill(&mut params.dense_w, config.lstm2_units, &mut rng);
    for layer in [&mut params.layer1, &mut params.layer2] {
        let u = layer.units;
        for b in &mut layer.bias[u..2 * u] {
            *b = 1.0;
        }
    }
    Ok(params)
}

/// Mean squared error.
pub fn loss_mse(predictions: &[f64], targets: &[f64]) -> Result<f64, ModelError> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(ModelError::EmptyInput);
    }
    let sum: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / predictions.len() as f64)
}

/// Mean gradient of the batch MSE with respect to every weight, computed by
/// full backpropagation through time. Same shapes as the parameters.
///
/// Each sample's gradient is accumulated into its own buffer before the
/// mean is taken, so a batch of one sample duplicated k times yields the
/// single-sample gradient bit for bit.
pub fn backward(params: &ModelParams, batch: &[(&[f64], f64)]) -> Result<Gradients, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let cfg = &params.config;
    let mut total = ModelParams::zeros(*cfg)?;
    let mut per = ModelParams::zeros(*cfg)?;
    for (x, y) in batch {
        params.check_input(x)?;
        for slot in per.flat_iter_mut() {
            *slot = 0.0;
        }
        let rows: Vec<&[f64]> = x.chunks(cfg.input_features).collect();
        let cache1 = params.layer1.forward_cached(&rows);
        let h1_refs: Vec<&[f64]> = cache1.h.iter().map(|h| h.as_slice()).collect();
        let cache2 = params.layer2.forward_cached(&h1_refs);
        let h2_last = cache2.h.last().expect("lookback >= 1");
        let pred = dot(&params.dense_w, h2_last) + params.dense_b;

        let dpred = 2.0 * (pred - y);
        per.dense_b = dpred;
        for (gw, h) in per.dense_w.iter_mut().zip(h2_last) {
            *gw = dpred * h;
        }
        let mut dh2 = vec![vec![0.0; cfg.lstm2_units]; rows.len()];
        for (slot, w) in dh2[rows.len() - 1].iter_mut().zip(&params.dense_w) {
            *slot = dpred * w;
        }
        let dh1 = params
            .layer2
            .backward_seq(&h1_refs, &cache2, &dh2, &mut per.layer2);
        params
            .layer1
            .backward_seq(&rows, &cache1, &dh1, &mut per.layer1);
        for (acc, g) in total.flat_iter_mut().zip(per.flat_values()) {
            *acc += g;
        }
    }
    let batch_len = batch.len() as f64;
    for slot in total.flat_iter_mut() {
        *slot /= batch_len;
    }
    if !total.all_finite() {
        return Err(ModelError::NonFinite("gradients"));
    }
    Ok(total)
}

/// Training hyperparameters. The learning rate may be zero (a no-op pass);
/// everything else must be positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub gradient_clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 32,
            seed: 7,
            gradient_clip_norm: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let lr_ok = self.learning_rate.is_finite() && self.learning_rate >= 0.0;
        if !lr_ok {
            return Err(ModelError::InvalidConfig("learning_rate must be finite and >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.gradient_clip_norm > 0.0) {
            return Err(ModelError::InvalidConfig("gradient_clip_norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: Option<f64>,
}

/// Mean squared error of one-step predictions over a sample slice.
pub fn mse_over(params: &ModelParams, samples: &[Sample]) -> Result<f64, ModelError> {
    if samples.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let mut sum = 0.0;
    for s in samples {
        let err = params.forward(&s.x)? - s.y;
        sum += err * err;
    }
    Ok(sum / samples.len() as f64)
}

/// Mini-batch gradient descent with global-norm clipping.
///
/// The sample order is reshuffled each epoch from the seeded generator, so a
/// fixed `(seed, config, data)` triple reproduces the loss history exactly.
/// A non-finite epoch loss aborts with the partial history attached.
pub fn train(
    params: ModelParams,
    train_set: &SampleSet,
    val_set: &SampleSet,
    config: &TrainConfig,
) -> Result<(ModelParams, Vec<EpochLoss>), ModelError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let mut params = params;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        // Fisher-Yates over the index vector.
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&[f64], f64)> = chunk
                .iter()
                .map(|&i| {
                    let s = &train_set.samples[i];
                    (s.x.as_slice(), s.y)
                })
                .collect();
            let grads = match backward(&params, &batch) {
                Ok(g) => g,
                Err(ModelError::NonFinite(_)) => {
                    return Err(ModelError::Diverged { epoch, history });
                }
                Err(e) => return Err(e),
            };
            let norm = grads.global_norm();
            let scale = if norm > config.gradient_clip_norm {
                config.gradient_clip_norm / norm
            } else {
                1.0
            };
            let step = config.learning_rate * scale;
            for (p, g) in params.flat_iter_mut().zip(grads.flat_values()) {
                *p -= step * g;
            }
        }
        let train_mse = mse_over(&params, &train_set.samples)?;
        let val_mse = if val_set.is_empty() {
            None
        } else {
            Some(mse_over(&params, &val_set.samples)?)
        };
        history.push(EpochLoss {
            epoch,
            train_mse,
            val_mse,
        });
        if !train_mse.is_finite() || val_mse.is_some_and(|v| !v.is_finite()) {
            return Err(ModelError::Diverged { epoch, history });
        }
    }
    Ok((params, history))
}

fn write_u32<W: Write>(sink: &mut W, v: u32) -> std::io::Result<()> {
    sink.write_all(&v.to_le_bytes())
}

fn read_u32<R: Read>(source: &mut R) -> Result<u32, ModelError> {
    let mut buf = [0u8; 4];
    source.read_exact(&mut buf).map_err(|_| ModelError::Truncated)?;
    Ok(u32::from_le_bytes(buf))
}

/// Serializes params as magic, format version, config, then the flat weight
/// array in declared order (all little endian). Round trips are bit exact.
pub fn save_params<W: Write>(params: &ModelParams, mut sink: W) -> Result<(), ModelError> {
    sink.write_all(MODEL_MAGIC)?;
    write_u32(&mut sink, MODEL_VERSION)?;
    write_u32(&mut sink, params.config.input_features as u32)?;
    write_u32(&mut sink, params.config.lstm1_units as u32)?;
    write_u32(&mut sink, params.config.lstm2_units as u32)?;
    write_u32(&mut sink, params.config.lookback as u32)?;
    for v in params.flat_values() {
        sink.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn load_params<R: Read>(mut source: R) -> Result<ModelParams, ModelError> {
    let mut magic = [0u8; 8];
    source.read_exact(&mut magic).map_err(|_| ModelError::Truncated)?;
    if &magic != MODEL_MAGIC {
        return Err(ModelError::BadMagic);
    }
    let version = read_u32(&mut source)?;
    if version != MODEL_VERSION {
        return Err(ModelError::UnsupportedVersion(version));
    }
    let config = ModelConfig {
        input_features: read_u32(&mut source)? as usize,
        lstm1_units: read_u32(&mut source)? as usize,
        lstm2_units: read_u32(&mut source)? as usize,
        lookback: read_u32(&mut source)? as usize,
    };
    config
        .validate()
        .map_err(|_| ModelError::Truncated)?;
    let count = config.param_count();
    let mut values = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        source.read_exact(&mut buf).map_err(|_| ModelError::Truncated)?;
        values.push(f64::from_le_bytes(buf));
    }
    if source.read(&mut buf[..1]).map_err(ModelError::Io)? != 0 {
        return Err(ModelError::TrailingData);
    }
    let mut params = ModelParams::zeros(config)?;
    params.assign_flat(&values)?;
    Ok(params)
}
