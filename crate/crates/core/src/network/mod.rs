//! Stacked recurrent network with a linear regression head.
//!
//! Every recurrent layer returns its full hidden sequence to the layer above;
//! the head reads only the top layer's last hidden state:
//! `y = head_w . h_T + head_b`. Initial states are zero for every window.

mod adam;
mod persist;
mod train;

pub use adam::{adam_step, AdamState};
pub use persist::{load_model, parse_model, render_model, save_model, MODEL_HEADER};
pub use train::{lr_schedule, predict, predict_dataset, train, train_with_validator, EpochRecord, TrainConfig, TrainReport};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cells::{CellState, GruCache, GruParams, LstmCache, LstmParams, ParamTensors};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Gru,
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        })
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            other => Err(Error::invalid(format!("unknown cell kind `{other}` (expected lstm or gru)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub cell_kind: CellKind,
    pub layer_sizes: Vec<usize>,
    pub input_dim: usize,
    /// Outputs per sample.
    pub horizon: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.is_empty() {
            return Err(Error::invalid("layer_sizes must not be empty"));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::invalid(format!(
                "layer sizes must be >= 1, got {:?}",
                self.layer_sizes
            )));
        }
        if self.input_dim == 0 {
            return Err(Error::invalid("input_dim must be >= 1"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be >= 1"));
        }
        Ok(())
    }

    fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.layer_sizes[layer - 1]
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Lstm(LstmParams),
    Gru(GruParams),
}

impl Layer {
    pub fn hidden_dim(&self) -> usize {
        match self {
            Layer::Lstm(p) => p.hidden_dim(),
            Layer::Gru(p) => p.hidden_dim(),
        }
    }

    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        match self {
            Layer::Lstm(p) => p.tensors(),
            Layer::Gru(p) => p.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            Layer::Lstm(p) => p.tensors_mut(),
            Layer::Gru(p) => p.tensors_mut(),
        }
    }

    fn zeros_like(kind: CellKind, input: usize, hidden: usize) -> Layer {
        match kind {
            CellKind::Lstm => Layer::Lstm(LstmParams::zeros(input, hidden)),
            CellKind::Gru => Layer::Gru(GruParams::zeros(input, hidden)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub head_w: Matrix,
    pub head_b: Matrix,
    pub config: ModelConfig,
    /// Free-form annotations carried through the model file, e.g. the
    /// preprocessing a model was trained with.
    pub meta: BTreeMap<String, String>,
}

/// Per-step caches of every layer from one `forward_sequence` call.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    last_hidden: Matrix,
    batch: usize,
}

#[derive(Clone, Debug)]
enum LayerCache {
    Lstm(Vec<LstmCache>),
    Gru(Vec<GruCache>),
}

impl ForwardCache {
    pub fn seq_len(&self) -> usize {
        match self.layers.first() {
            Some(LayerCache::Lstm(c)) => c.len(),
            Some(LayerCache::Gru(c)) => c.len(),
            None => 0,
        }
    }
}

/// Gradients aligned one-to-one with [`Network::tensors`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Matrix>,
}

impl Network {
    /// Glorot-initialized network; per-layer seeds are drawn from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut master = ChaCha8Rng::seed_from_u64(config.seed);
        let mut layers = Vec::with_capacity(config.layer_sizes.len());
        for (i, &hidden) in config.layer_sizes.iter().enumerate() {
            let seed: u64 = master.gen();
            let input = config.layer_input(i);
            layers.push(match config.cell_kind {
                CellKind::Lstm => Layer::Lstm(LstmParams::init(input, hidden, seed)?),
                CellKind::Gru => Layer::Gru(GruParams::init(input, hidden, seed)?),
            });
        }
        let last = *config.layer_sizes.last().expect("validated non-empty");
        let mut head_rng = ChaCha8Rng::seed_from_u64(master.gen());
        let bound = (6.0 / (last + config.horizon) as f64).sqrt();
        let head_data = (0..config.horizon * last)
            .map(|_| head_rng.gen_range(-bound..=bound))
            .collect();
        Ok(Network {
            layers,
            head_w: Matrix::from_vec(config.horizon, last, head_data)?,
            head_b: Matrix::zeros(config.horizon, 1),
            config,
            meta: BTreeMap::new(),
        })
    }

    /// Every parameter (including the LSTM forget bias and the head) zero.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_sizes
            .iter()
            .enumerate()
            .map(|(i, &h)| Layer::zeros_like(config.cell_kind, config.layer_input(i), h))
            .collect();
        let last = *config.layer_sizes.last().expect("validated non-empty");
        Ok(Network {
            layers,
            head_w: Matrix::zeros(config.horizon, last),
            head_b: Matrix::zeros(config.horizon, 1),
            config,
            meta: BTreeMap::new(),
        })
    }

    /// Named parameters in a fixed order: each layer's gates, then the head.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, m) in layer.tensors() {
                out.push((format!("layer{i}.{name}"), m));
            }
        }
        out.push(("head.w".to_string(), &self.head_w));
        out.push(("head.b".to_string(), &self.head_b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = Vec::new();
        for layer in &mut self.layers {
            out.extend(layer.tensors_mut());
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.as_slice().len()).sum()
    }

    /// Checks that layer shapes chain correctly and match the config.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.layers.len() != self.config.layer_sizes.len() {
            return Err(Error::invalid(format!(
                "{} layers but config lists {}",
                self.layers.len(),
                self.config.layer_sizes.len()
            )));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let (kind_ok, input, hidden) = match layer {
                Layer::Lstm(p) => {
                    p.validate()?;
                    (self.config.cell_kind == CellKind::Lstm, p.input_dim(), p.hidden_dim())
                }
                Layer::Gru(p) => {
                    p.validate()?;
                    (self.config.cell_kind == CellKind::Gru, p.input_dim(), p.hidden_dim())
                }
            };
            if !kind_ok {
                return Err(Error::invalid(format!("layer {i} cell kind differs from config")));
            }
            let want = (self.config.layer_input(i), self.config.layer_sizes[i]);
            if (input, hidden) != want {
                return Err(Error::shape("layer dims", want, (input, hidden)));
            }
        }
        let last = self.config.layer_sizes[self.config.layer_sizes.len() - 1];
        if self.head_w.shape() != (self.config.horizon, last) {
            return Err(Error::shape("head_w", (self.config.horizon, last), self.head_w.shape()));
        }
        if self.head_b.shape() != (self.config.horizon, 1) {
            return Err(Error::shape("head_b", (self.config.horizon, 1), self.head_b.shape()));
        }
        Ok(())
    }

    fn check_window(&self, window: &[Matrix]) -> Result<usize> {
        let first = window
            .first()
            .ok_or_else(|| Error::invalid("window must contain at least one timestep"))?;
        let batch = first.cols();
        for x in window {
            if x.shape() != (self.config.input_dim, batch) {
                return Err(Error::shape("forward_sequence", (self.config.input_dim, batch), x.shape()));
            }
        }
        Ok(batch)
    }

    /// Runs the stack over `window` (each entry `input_dim x batch`) and
    /// returns the `horizon x batch` prediction plus the caches for BPTT.
    pub fn forward_sequence(&self, window: &[Matrix]) -> Result<(Matrix, ForwardCache)> {
        let batch = self.check_window(window)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut seq: Vec<Matrix> = window.to_vec();
        for layer in &self.layers {
            let hidden = layer.hidden_dim();
            let mut outputs = Vec::with_capacity(seq.len());
            match layer {
                Layer::Lstm(p) => {
                    let mut state = CellState::lstm_zeros(hidden, batch);
                    let mut layer_cache = Vec::with_capacity(seq.len());
                    for x in &seq {
                        let (next, cache) = p.step(x, &state)?;
                        outputs.push(next.h.clone());
                        layer_cache.push(cache);
                        state = next;
                    }
                    caches.push(LayerCache::Lstm(layer_cache));
                }
                Layer::Gru(p) => {
                    let mut state = CellState::gru_zeros(hidden, batch);
                    let mut layer_cache = Vec::with_capacity(seq.len());
                    for x in &seq {
                        let (next, cache) = p.step(x, &state)?;
                        outputs.push(next.h.clone());
                        layer_cache.push(cache);
                        state = next;
                    }
                    caches.push(LayerCache::Gru(layer_cache));
                }
            }
            seq = outputs;
        }
        let last_hidden = seq.pop().expect("window is non-empty");
        let prediction = self.head_w.matmul(&last_hidden)?.add_bias(&self.head_b)?;
        Ok((
            prediction,
            ForwardCache {
                layers: caches,
                last_hidden,
                batch,
            },
        ))
    }

    /// Forward pass that keeps only the running state of each layer.
    pub fn predict_window(&self, window: &[Matrix]) -> Result<Matrix> {
        let batch = self.check_window(window)?;
        let mut seq: Vec<Matrix> = window.to_vec();
        for layer in &self.layers {
            let hidden = layer.hidden_dim();
            let mut outputs = Vec::with_capacity(seq.len());
            match layer {
                Layer::Lstm(p) => {
                    let mut state = CellState::lstm_zeros(hidden, batch);
                    for x in &seq {
                        state = p.step(x, &state)?.0;
                        outputs.push(state.h.clone());
                    }
                }
                Layer::Gru(p) => {
                    let mut state = CellState::gru_zeros(hidden, batch);
                    for x in &seq {
                        state = p.step(x, &state)?.0;
                        outputs.push(state.h.clone());
                    }
                }
            }
            seq = outputs;
        }
        let last = seq.pop().expect("window is non-empty");
        self.head_w.matmul(&last)?.add_bias(&self.head_b)
    }

    /// Backpropagation through time for the whole stack. `d_pred` is the
    /// loss gradient with respect to the `horizon x batch` prediction.
    pub fn backward_sequence(&self, cache: &ForwardCache, d_pred: &Matrix) -> Result<Gradients> {
        if d_pred.shape() != (self.config.horizon, cache.batch) {
            return Err(Error::shape("backward_sequence d_pred", (self.config.horizon, cache.batch), d_pred.shape()));
        }
        if cache.layers.len() != self.layers.len() {
            return Err(Error::invalid(format!(
                "cache has {} layers, network has {}",
                cache.layers.len(),
                self.layers.len()
            )));
        }
        let seq_len = cache.seq_len();
        let batch = cache.batch;

        let head_w_grad = d_pred.matmul_t(&cache.last_hidden)?;
        let head_b_grad = d_pred.sum_cols();

        // Gradient on each timestep's output of the current layer.
        let top_hidden = self.head_w.cols();
        let mut d_out: Vec<Matrix> = (0..seq_len).map(|_| Matrix::zeros(top_hidden, batch)).collect();
        d_out[seq_len - 1] = self.head_w.t_matmul(d_pred)?;

        let mut layer_grads: Vec<Vec<Matrix>> = Vec::with_capacity(self.layers.len());
        for (layer, layer_cache) in self.layers.iter().zip(&cache.layers).rev() {
            let hidden = layer.hidden_dim();
            let mut d_in = Vec::with_capacity(seq_len);
            let grads = match (layer, layer_cache) {
                (Layer::Lstm(p), LayerCache::Lstm(steps)) => {
                    if steps.len() != seq_len {
                        return Err(Error::invalid("cache sequence lengths differ between layers"));
                    }
                    let mut acc = LstmParams::zeros(p.input_dim(), hidden);
                    let mut d_h_next = Matrix::zeros(hidden, batch);
                    let mut d_c_next = Matrix::zeros(hidden, batch);
                    for t in (0..seq_len).rev() {
                        let d_h = d_out[t].add(&d_h_next)?;
                        let (d_x, d_prev) = p.backward_into(&steps[t], &d_h, &d_c_next, &mut acc)?;
                        d_in.push(d_x);
                        d_h_next = d_prev.h;
                        d_c_next = d_prev.c.expect("lstm backward returns a cell gradient");
                    }
                    acc.into_tensors()
                }
                (Layer::Gru(p), LayerCache::Gru(steps)) => {
                    if steps.len() != seq_len {
                        return Err(Error::invalid("cache sequence lengths differ between layers"));
                    }
                    let mut acc = GruParams::zeros(p.input_dim(), hidden);
                    let mut d_h_next = Matrix::zeros(hidden, batch);
                    for t in (0..seq_len).rev() {
                        let d_h = d_out[t].add(&d_h_next)?;
                        let (d_x, d_h_prev) = p.backward_into(&steps[t], &d_h, &mut acc)?;
                        d_in.push(d_x);
                        d_h_next = d_h_prev;
                    }
                    acc.into_tensors()
                }
                _ => return Err(Error::invalid("cache cell kind does not match network")),
            };
            d_in.reverse();
            d_out = d_in;
            layer_grads.push(grads);
        }
        layer_grads.reverse();
        let mut tensors: Vec<Matrix> = layer_grads.into_iter().flatten().collect();
        tensors.push(head_w_grad);
        tensors.push(head_b_grad);
        Ok(Gradients { tensors })
    }
}

/// Mean squared error over every entry and its gradient `2 (pred - target) / n`.
pub fn mse_loss_and_grad(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("mse_loss", pred.shape(), target.shape()));
    }
    let n = pred.as_slice().len();
    if n == 0 {
        return Err(Error::invalid("mse_loss on an empty prediction"));
    }
    let diff = pred.sub(target)?;
    let loss = diff.as_slice().iter().map(|d| d * d).sum::<f64>() / n as f64;
    Ok((loss, diff.scale(2.0 / n as f64)))
}
