use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{DenseLayer, Gradients, NetError, PrunableMlp};

/// Cubic sparsity ramp from `initial_sparsity` at `start_epoch` to
/// `target_sparsity` at `start_epoch + total_steps * frequency`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneSchedule {
    pub initial_sparsity: f64,
    pub target_sparsity: f64,
    pub start_epoch: usize,
    pub total_steps: usize,
    pub frequency: usize,
}

impl Default for PruneSchedule {
    fn default() -> Self {
        PruneSchedule { initial_sparsity: 0.0, target_sparsity: 0.5, start_epoch: 10, total_steps: 10, frequency: 5 }
    }
}

impl PruneSchedule {
    /// A schedule that never masks anything.
    pub fn disabled() -> Self {
        PruneSchedule { initial_sparsity: 0.0, target_sparsity: 0.0, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::Schedule(m));
        if !(0.0..1.0).contains(&self.initial_sparsity) {
            return bad(format!("initial_sparsity {} not in [0, 1)", self.initial_sparsity));
        }
        if !(0.0..1.0).contains(&self.target_sparsity) {
            return bad(format!("target_sparsity {} not in [0, 1)", self.target_sparsity));
        }
        if self.initial_sparsity > self.target_sparsity {
            return bad("initial_sparsity exceeds target_sparsity".into());
        }
        if self.frequency == 0 {
            return bad("frequency must be at least 1".into());
        }
        Ok(())
    }

    pub fn is_disabled(&self) -> bool {
        self.target_sparsity == 0.0
    }

    pub fn end_epoch(&self) -> usize {
        self.start_epoch + self.total_steps * self.frequency
    }

    /// Scheduled sparsity; epochs outside the ramp clamp to its endpoints.
    pub fn sparsity_at(&self, epoch: usize) -> f64 {
        let span = self.total_steps * self.frequency;
        if span == 0 {
            return if epoch >= self.start_epoch { self.target_sparsity } else { self.initial_sparsity };
        }
        if epoch <= self.start_epoch {
            return self.initial_sparsity;
        }
        if epoch >= self.start_epoch + span {
            return self.target_sparsity;
        }
        let remaining = 1.0 - (epoch - self.start_epoch) as f64 / span as f64;
        self.target_sparsity + (self.initial_sparsity - self.target_sparsity) * remaining.powi(3)
    }

    /// Whether masks are recomputed at `epoch`.
    pub fn is_update_epoch(&self, epoch: usize) -> bool {
        epoch >= self.start_epoch && epoch <= self.end_epoch() && (epoch - self.start_epoch).is_multiple_of(self.frequency)
    }
}

/// Outcome of one mask recomputation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskUpdate {
    pub scheduled_sparsity: f64,
    pub achieved_sparsity: f64,
    /// Smallest importance among neurons left active by the quantile cut.
    pub threshold: f64,
    pub masked: usize,
    /// Neurons reactivated to honour the per-layer floor.
    pub floor_restored: usize,
}

/// Which neurons of each hidden layer survived [`PrunableMlp::compact`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompactionMap {
    pub kept: Vec<Vec<usize>>,
}

impl CompactionMap {
    /// Shrink parameter-shaped values of the original net (gradients,
    /// optimiser moments) to the compact layout.
    pub fn compact_values(&self, net_before: &PrunableMlp, values: &Gradients) -> Gradients {
        let n = net_before.layers.len();
        let mut out = Gradients { weights: Vec::with_capacity(n), biases: Vec::with_capacity(n) };
        for h in 0..n {
            let layer = &net_before.layers[h];
            let rows = self.rows(h, layer);
            let cols = self.cols(h, layer);
            let mut w = Vec::with_capacity(rows.len() * cols.len());
            for &r in &rows {
                w.extend(cols.iter().map(|&c| values.weights[h][r * layer.in_dim + c]));
            }
            out.weights.push(w);
            out.biases.push(values.biases[h].as_ref().map(|b| rows.iter().map(|&r| b[r]).collect()));
        }
        out
    }

    fn rows(&self, h: usize, layer: &DenseLayer) -> Vec<usize> {
        if h < self.kept.len() {
            self.kept[h].clone()
        } else {
            (0..layer.out_dim).collect()
        }
    }

    fn cols(&self, h: usize, layer: &DenseLayer) -> Vec<usize> {
        if h == 0 {
            (0..layer.in_dim).collect()
        } else {
            self.kept[h - 1].clone()
        }
    }
}

impl PrunableMlp {
    /// Importance of every hidden neuron: the L2 norm of its incoming weight
    /// row joined with its outgoing weight column.
    pub fn neuron_importance(&self) -> Vec<Vec<f64>> {
        (0..self.masks.len())
            .map(|h| {
                let (inc, out) = (&self.layers[h], &self.layers[h + 1]);
                (0..inc.out_dim)
                    .map(|n| {
                        let row: f64 = inc.weights[n * inc.in_dim..(n + 1) * inc.in_dim].iter().map(|w| w * w).sum();
                        let col: f64 = (0..out.out_dim).map(|o| out.weight(o, n).powi(2)).sum();
                        (row + col).sqrt()
                    })
                    .collect()
            })
            .collect()
    }

    /// Recompute masks if `epoch` is an update epoch of `schedule`.
    pub fn update_masks(&mut self, schedule: &PruneSchedule, epoch: usize) -> Option<MaskUpdate> {
        schedule.is_update_epoch(epoch).then(|| self.apply_sparsity(schedule.sparsity_at(epoch)))
    }

    /// Mask the `round(sparsity * N)` least important hidden neurons, pooled
    /// over all hidden layers. Ties are broken by (layer, index): earlier
    /// neurons are masked first. Each layer then gets its best masked neurons
    /// back until it has `floor_neurons` active (at least one). Previously
    /// masked neurons are eligible again.
    pub fn apply_sparsity(&mut self, sparsity: f64) -> MaskUpdate {
        let scores = self.neuron_importance();
        let mut pooled: Vec<(f64, usize, usize)> = scores
            .iter()
            .enumerate()
            .flat_map(|(h, s)| s.iter().enumerate().map(move |(n, &v)| (v, h, n)))
            .collect();
        pooled.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let total = pooled.len();
        let cut = ((sparsity.clamp(0.0, 1.0) * total as f64).round() as usize).min(total);

        let mut masks: Vec<Vec<bool>> = scores.iter().map(|s| vec![true; s.len()]).collect();
        for &(_, h, n) in &pooled[..cut] {
            masks[h][n] = false;
        }
        let threshold = pooled.get(cut).map_or(f64::INFINITY, |p| p.0);

        let mut restored = 0;
        for (h, mask) in masks.iter_mut().enumerate() {
            let floor = self.floor_neurons.max(1).min(mask.len());
            let active = mask.iter().filter(|&&m| m).count();
            if active >= floor {
                continue;
            }
            let mut candidates: Vec<usize> = (0..mask.len()).filter(|&n| !mask[n]).collect();
            candidates.sort_by(|&a, &b| match scores[h][b].total_cmp(&scores[h][a]) {
                Ordering::Equal => a.cmp(&b),
                o => o,
            });
            for n in candidates.into_iter().take(floor - active) {
                mask[n] = true;
                restored += 1;
            }
        }
        self.masks = masks;
        let masked = total - self.num_active_hidden_neurons();
        MaskUpdate {
            scheduled_sparsity: sparsity,
            achieved_sparsity: if total == 0 { 0.0 } else { masked as f64 / total as f64 },
            threshold,
            masked,
            floor_restored: restored,
        }
    }

    /// A new net without the masked neurons. Its plain forward pass equals
    /// this net's masked forward pass.
    pub fn compact(&self) -> (PrunableMlp, CompactionMap) {
        let kept: Vec<Vec<usize>> =
            self.masks.iter().map(|m| m.iter().enumerate().filter(|(_, &k)| k).map(|(n, _)| n).collect()).collect();
        let map = CompactionMap { kept };
        let values = Gradients {
            weights: self.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: self.layers.iter().map(|l| l.bias.clone()).collect(),
        };
        let shrunk = map.compact_values(self, &values);
        let layers = self
            .layers
            .iter()
            .enumerate()
            .zip(shrunk.weights.into_iter().zip(shrunk.biases))
            .map(|((h, layer), (weights, bias))| DenseLayer {
                in_dim: if h == 0 { layer.in_dim } else { map.kept[h - 1].len() },
                out_dim: if h < map.kept.len() { map.kept[h].len() } else { layer.out_dim },
                weights,
                bias,
                activation: layer.activation,
            })
            .collect();
        let net = PrunableMlp::new(layers, self.floor_neurons).expect("compaction keeps shapes consistent");
        (net, map)
    }
}
