//! A small dense network with hand-written backpropagation and per-neuron
//! masks on the hidden layers.
//!
//! Layers compute `o = act(W x + b)`. A mask entry of zero silences a hidden
//! neuron: its post-activation output is multiplied by zero before it feeds
//! the next layer, so neither its incoming nor its outgoing weights affect
//! the masked output or receive gradient. [`PrunableMlp::compact`] deletes
//! masked neurons for good.

mod prune;

pub use prune::{CompactionMap, MaskUpdate, PruneSchedule};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("network needs at least one layer")]
    Empty,
    #[error("layer {layer}: {msg}")]
    Shape { layer: usize, msg: String },
    #[error("layer {layer} has a non-finite parameter")]
    NonFinite { layer: usize },
    #[error("mask for hidden layer {layer} has {got} entries, expected {expected}")]
    Mask { layer: usize, got: usize, expected: usize },
    #[error("prune schedule: {0}")]
    Schedule(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative given the pre-activation `x` and output `y`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// `out x in` weights, stored row-major, and an optional bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    bias: Option<Vec<f64>>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Option<Vec<f64>>,
        activation: Activation,
    ) -> Result<Self, NetError> {
        let layer = DenseLayer { in_dim, out_dim, weights, bias, activation };
        layer.validate(0)?;
        Ok(layer)
    }

    pub fn zeros(in_dim: usize, out_dim: usize, with_bias: bool, activation: Activation) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: with_bias.then(|| vec![0.0; out_dim]),
            activation,
        }
    }

    /// Uniform initialisation: He bounds for relu, Glorot otherwise. Biases
    /// start at zero.
    pub fn random<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        with_bias: bool,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = match activation {
            Activation::Relu => (6.0 / in_dim.max(1) as f64).sqrt(),
            _ => (6.0 / (in_dim + out_dim).max(1) as f64).sqrt(),
        };
        let mut layer = DenseLayer::zeros(in_dim, out_dim, with_bias, activation);
        for w in &mut layer.weights {
            *w = rng.random_range(-bound..=bound);
        }
        layer
    }

    fn validate(&self, index: usize) -> Result<(), NetError> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(NetError::Shape { layer: index, msg: "dimensions must be positive".into() });
        }
        if self.weights.len() != self.in_dim * self.out_dim {
            return Err(NetError::Shape {
                layer: index,
                msg: format!("{} weights for a {}x{} matrix", self.weights.len(), self.out_dim, self.in_dim),
            });
        }
        if let Some(b) = &self.bias {
            if b.len() != self.out_dim {
                return Err(NetError::Shape { layer: index, msg: format!("{} biases for {} outputs", b.len(), self.out_dim) });
            }
        }
        let finite = self.weights.iter().chain(self.bias.iter().flatten()).all(|x| x.is_finite());
        if !finite {
            return Err(NetError::NonFinite { layer: index });
        }
        Ok(())
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    pub fn bias_mut(&mut self) -> Option<&mut [f64]> {
        self.bias.as_deref_mut()
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.in_dim + col]
    }

    #[inline]
    pub fn set_weight(&mut self, row: usize, col: usize, value: f64) {
        self.weights[row * self.in_dim + col] = value;
    }

    pub fn num_parameters(&self) -> usize {
        self.weights.len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out_dim)
            .map(|r| {
                let row = &self.weights[r * self.in_dim..(r + 1) * self.in_dim];
                let dot: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
                dot + self.bias.as_ref().map_or(0.0, |b| b[r])
            })
            .collect()
    }
}

/// Per-layer parameter-shaped values: gradients, optimiser moments, updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn zeros_like(net: &PrunableMlp) -> Self {
        Gradients {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| l.bias.as_ref().map(|b| vec![0.0; b.len()])).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            if let (Some(a), Some(b)) = (a, b) {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.values_mut().for_each(|x| *x *= factor);
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().flatten().chain(self.biases.iter().flatten().flatten())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().flatten().chain(self.biases.iter_mut().flatten().flatten())
    }

    pub fn l2_norm(&self) -> f64 {
        self.values().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|x| x.is_finite())
    }
}

/// Intermediate values of one forward pass, consumed by
/// [`PrunableMlp::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    /// Input to each layer (after masking), plus the final output at the end.
    activations: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
    masked: bool,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds the output")
    }

    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }
}

/// A feed-forward stack of [`DenseLayer`]s with one binary mask per hidden
/// layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunableMlp {
    layers: Vec<DenseLayer>,
    masks: Vec<Vec<bool>>,
    floor_neurons: usize,
}

impl PrunableMlp {
    pub fn new(layers: Vec<DenseLayer>, floor_neurons: usize) -> Result<Self, NetError> {
        if layers.is_empty() {
            return Err(NetError::Empty);
        }
        for (h, layer) in layers.iter().enumerate() {
            layer.validate(h)?;
            if h > 0 && layers[h - 1].out_dim != layer.in_dim {
                return Err(NetError::Shape {
                    layer: h,
                    msg: format!("expects {} inputs but previous layer emits {}", layer.in_dim, layers[h - 1].out_dim),
                });
            }
        }
        let masks = layers[..layers.len() - 1].iter().map(|l| vec![true; l.out_dim]).collect();
        Ok(PrunableMlp { layers, masks, floor_neurons })
    }

    /// Randomly initialised net with layer widths `sizes` (input first).
    pub fn random<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        with_bias: bool,
        floor_neurons: usize,
        rng: &mut R,
    ) -> Result<Self, NetError> {
        if sizes.len() < 2 {
            return Err(NetError::Empty);
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|h| {
                let act = if h + 1 == n { output } else { hidden };
                DenseLayer::random(sizes[h], sizes[h + 1], with_bias, act, rng)
            })
            .collect();
        PrunableMlp::new(layers, floor_neurons)
    }

    pub fn with_masks(mut self, masks: Vec<Vec<bool>>) -> Result<Self, NetError> {
        self.set_masks(masks)?;
        Ok(self)
    }

    pub fn set_masks(&mut self, masks: Vec<Vec<bool>>) -> Result<(), NetError> {
        if masks.len() != self.masks.len() {
            return Err(NetError::Mask { layer: masks.len(), got: masks.len(), expected: self.masks.len() });
        }
        for (h, m) in masks.iter().enumerate() {
            if m.len() != self.masks[h].len() {
                return Err(NetError::Mask { layer: h, got: m.len(), expected: self.masks[h].len() });
            }
        }
        self.masks = masks;
        Ok(())
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn masks(&self) -> &[Vec<bool>] {
        &self.masks
    }

    pub fn floor_neurons(&self) -> usize {
        self.floor_neurons
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.masks.iter().map(Vec::len).collect()
    }

    pub fn num_hidden_neurons(&self) -> usize {
        self.masks.iter().map(Vec::len).sum()
    }

    pub fn num_active_hidden_neurons(&self) -> usize {
        self.masks.iter().flatten().filter(|&&m| m).count()
    }

    /// Fraction of hidden neurons currently masked.
    pub fn sparsity(&self) -> f64 {
        let total = self.num_hidden_neurons();
        if total == 0 {
            0.0
        } else {
            1.0 - self.num_active_hidden_neurons() as f64 / total as f64
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(DenseLayer::num_parameters).sum()
    }

    /// Parameters that survive [`compact`](Self::compact).
    pub fn num_active_parameters(&self) -> usize {
        let n = self.layers.len();
        let active = |h: usize| -> usize {
            if h == 0 {
                self.layers[0].in_dim
            } else if h == n {
                self.layers[n - 1].out_dim
            } else {
                self.masks[h - 1].iter().filter(|&&m| m).count()
            }
        };
        (0..n)
            .map(|h| {
                let outs = active(h + 1);
                outs * active(h) + if self.layers[h].bias.is_some() { outs } else { 0 }
            })
            .sum()
    }

    /// Unmasked forward pass.
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.forward_cached(input, false).activations.pop().expect("output")
    }

    /// Forward pass with the hidden masks applied.
    pub fn masked_forward(&self, input: &[f64]) -> Vec<f64> {
        self.forward_cached(input, true).activations.pop().expect("output")
    }

    /// Panics when `input` does not match the input width.
    pub fn forward_cached(&self, input: &[f64], masked: bool) -> ForwardCache {
        assert_eq!(input.len(), self.input_dim(), "input length");
        let n = self.layers.len();
        let mut activations = Vec::with_capacity(n + 1);
        let mut pre_activations = Vec::with_capacity(n);
        activations.push(input.to_vec());
        for (h, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&activations[h]);
            let mut o: Vec<f64> = z.iter().map(|&x| layer.activation.apply(x)).collect();
            if masked && h + 1 < n {
                for (v, &keep) in o.iter_mut().zip(&self.masks[h]) {
                    if !keep {
                        *v = 0.0;
                    }
                }
            }
            pre_activations.push(z);
            activations.push(o);
        }
        ForwardCache { activations, pre_activations, masked }
    }

    /// Gradient of a scalar loss with respect to every parameter, given
    /// `d loss / d output`. Also returns the gradient with respect to the input.
    pub fn backward(&self, cache: &ForwardCache, output_gradient: &[f64]) -> (Gradients, Vec<f64>) {
        let n = self.layers.len();
        assert_eq!(output_gradient.len(), self.output_dim(), "output gradient length");
        let mut grads = Gradients::zeros_like(self);
        let mut upstream = output_gradient.to_vec();
        for h in (0..n).rev() {
            let layer = &self.layers[h];
            let out = &cache.activations[h + 1];
            let pre = &cache.pre_activations[h];
            let mut delta: Vec<f64> =
                upstream.iter().zip(pre.iter().zip(out)).map(|(g, (&x, &y))| g * layer.activation.derivative(x, y)).collect();
            if cache.masked && h + 1 < n {
                for (d, &keep) in delta.iter_mut().zip(&self.masks[h]) {
                    if !keep {
                        *d = 0.0;
                    }
                }
            }
            let input = &cache.activations[h];
            let gw = &mut grads.weights[h];
            for (r, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    let row = &mut gw[r * layer.in_dim..(r + 1) * layer.in_dim];
                    row.iter_mut().zip(input).for_each(|(g, x)| *g = d * x);
                }
            }
            if let Some(gb) = &mut grads.biases[h] {
                gb.copy_from_slice(&delta);
            }
            let mut next = vec![0.0; layer.in_dim];
            for (r, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    let row = &layer.weights[r * layer.in_dim..(r + 1) * layer.in_dim];
                    next.iter_mut().zip(row).for_each(|(g, w)| *g += d * w);
                }
            }
            upstream = next;
        }
        (grads, upstream)
    }

    /// `self += scale * delta`.
    pub fn apply_update(&mut self, delta: &Gradients, scale: f64) {
        for (layer, (dw, db)) in self.layers.iter_mut().zip(delta.weights.iter().zip(&delta.biases)) {
            layer.weights.iter_mut().zip(dw).for_each(|(w, d)| *w += scale * d);
            if let (Some(b), Some(db)) = (&mut layer.bias, db) {
                b.iter_mut().zip(db).for_each(|(w, d)| *w += scale * d);
            }
        }
    }

    /// Zero mask of every parameter attached to an inactive neuron, shaped
    /// like [`Gradients`] (1 = live, 0 = attached to a masked neuron).
    pub fn parameter_liveness(&self) -> Gradients {
        let n = self.layers.len();
        let mut live = Gradients::zeros_like(self);
        for h in 0..n {
            let layer = &self.layers[h];
            let row_live = |r: usize| h + 1 == n || self.masks[h][r];
            let col_live = |c: usize| h == 0 || self.masks[h - 1][c];
            for r in 0..layer.out_dim {
                for c in 0..layer.in_dim {
                    live.weights[h][r * layer.in_dim + c] = if row_live(r) && col_live(c) { 1.0 } else { 0.0 };
                }
                if let Some(b) = &mut live.biases[h] {
                    b[r] = if row_live(r) { 1.0 } else { 0.0 };
                }
            }
        }
        live
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(l.bias.iter().flatten()).all(|x| x.is_finite()))
    }

    /// Serialise to the versioned JSON checkpoint format.
    pub fn to_checkpoint(&self) -> String {
        serde_json::to_string(&Checkpoint::from(self)).expect("net serialises")
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, NetError> {
        let cp: Checkpoint = serde_json::from_str(text).map_err(|e| NetError::Checkpoint(e.to_string()))?;
        PrunableMlp::try_from(cp)
    }
}

const CHECKPOINT_FORMAT: &str = "tinynet";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    version: u32,
    floor_neurons: usize,
    layers: Vec<DenseLayer>,
    masks: Vec<Vec<bool>>,
}

impl From<&PrunableMlp> for Checkpoint {
    fn from(net: &PrunableMlp) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            floor_neurons: net.floor_neurons,
            layers: net.layers.clone(),
            masks: net.masks.clone(),
        }
    }
}

impl TryFrom<Checkpoint> for PrunableMlp {
    type Error = NetError;

    fn try_from(cp: Checkpoint) -> Result<Self, NetError> {
        if cp.format != CHECKPOINT_FORMAT || cp.version != CHECKPOINT_VERSION {
            return Err(NetError::Checkpoint(format!(
                "unsupported format {:?} version {} (expected {CHECKPOINT_FORMAT:?} version {CHECKPOINT_VERSION})",
                cp.format, cp.version
            )));
        }
        PrunableMlp::new(cp.layers, cp.floor_neurons)?.with_masks(cp.masks)
    }
}

impl Serialize for PrunableMlp {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        Checkpoint::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PrunableMlp {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let cp = Checkpoint::deserialize(deserializer)?;
        PrunableMlp::try_from(cp).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests;
