#![allow(clippy::needless_range_loop)]

use super::*;
use crate::rng;
use proptest::prelude::*;
use rand::Rng;

fn random_net(sizes: &[usize], hidden: Activation, bias: bool, seed: u64) -> PrunableMlp {
    let mut r = rng::stream(seed, "test/net", 0, 0);
    let mut net = PrunableMlp::random(sizes, hidden, Activation::Identity, bias, 1, &mut r).unwrap();
    if bias {
        for layer in net.layers_mut() {
            for b in layer.bias_mut().unwrap() {
                *b = r.random_range(-0.5..0.5);
            }
        }
    }
    net
}

fn random_input(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, "test/input", 0, 0);
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

fn random_masks(net: &PrunableMlp, seed: u64) -> Vec<Vec<bool>> {
    let mut r = rng::stream(seed, "test/mask", 0, 0);
    net.hidden_sizes().iter().map(|&n| (0..n).map(|k| k == 0 || r.random_bool(0.5)).collect()).collect()
}

/// Straight-line evaluation with optional zeroed rows/columns for masked
/// neurons.
fn oracle(net: &PrunableMlp, input: &[f64], masks: Option<&[Vec<bool>]>) -> Vec<f64> {
    let mut x = input.to_vec();
    let n = net.layers().len();
    for (h, layer) in net.layers().iter().enumerate() {
        let mut y = vec![0.0; layer.out_dim()];
        for r in 0..layer.out_dim() {
            let live_row = h + 1 == n || masks.is_none_or(|m| m[h][r]);
            let mut acc = 0.0;
            for c in 0..layer.in_dim() {
                let live_col = h == 0 || masks.is_none_or(|m| m[h - 1][c]);
                let w = if live_row && live_col { layer.weight(r, c) } else { 0.0 };
                acc += w * x[c];
            }
            if let Some(b) = layer.bias() {
                acc += if live_row { b[r] } else { 0.0 };
            }
            y[r] = match layer.activation() {
                Activation::Relu => {
                    if acc > 0.0 {
                        acc
                    } else {
                        0.0
                    }
                }
                Activation::Tanh => acc.tanh(),
                Activation::Identity => acc,
            };
        }
        x = y;
    }
    x
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn identity_net_passes_input_through() {
    let eye = |n: usize| (0..n * n).map(|k| if k % (n + 1) == 0 { 1.0 } else { 0.0 }).collect::<Vec<_>>();
    let net = PrunableMlp::new(
        vec![
            DenseLayer::new(3, 3, eye(3), None, Activation::Identity).unwrap(),
            DenseLayer::new(3, 3, eye(3), None, Activation::Identity).unwrap(),
        ],
        1,
    )
    .unwrap();
    assert_eq!(net.forward(&[0.5, -2.0, 7.0]), vec![0.5, -2.0, 7.0]);
}

#[test]
fn relu_clamps() {
    let net = PrunableMlp::new(vec![DenseLayer::new(1, 1, vec![-1.0], None, Activation::Relu).unwrap()], 1).unwrap();
    assert_eq!(net.forward(&[2.0]), vec![0.0]);
}

#[test]
fn construction_rejects_bad_shapes() {
    assert_eq!(PrunableMlp::new(vec![], 1), Err(NetError::Empty));
    let a = DenseLayer::zeros(2, 3, false, Activation::Relu);
    let b = DenseLayer::zeros(4, 1, false, Activation::Identity);
    assert!(matches!(PrunableMlp::new(vec![a, b], 1), Err(NetError::Shape { layer: 1, .. })));
    assert!(DenseLayer::new(2, 2, vec![0.0; 3], None, Activation::Relu).is_err());
    assert!(DenseLayer::new(1, 1, vec![f64::NAN], None, Activation::Relu).is_err());
    assert!(DenseLayer::new(1, 2, vec![0.0; 2], Some(vec![0.0]), Activation::Relu).is_err());
}

#[test]
fn forward_matches_oracle() {
    for seed in 0..5 {
        let net = random_net(&[4, 7, 3], Activation::Relu, seed % 2 == 0, seed);
        let x = random_input(4, seed);
        assert!(close(&net.forward(&x), &oracle(&net, &x, None), 1e-12));
    }
}

#[test]
fn masked_forward_matches_zeroed_oracle() {
    for seed in 0..5 {
        let mut net = random_net(&[5, 8, 6, 2], Activation::Relu, true, seed);
        assert_eq!(net.masked_forward(&random_input(5, 1)), net.forward(&random_input(5, 1)));
        let masks = random_masks(&net, seed);
        net.set_masks(masks.clone()).unwrap();
        let x = random_input(5, seed + 10);
        assert!(close(&net.masked_forward(&x), &oracle(&net, &x, Some(&masks)), 1e-12));
    }
}

#[test]
fn linear_net_gradient_is_input() {
    let net = PrunableMlp::new(vec![DenseLayer::new(3, 1, vec![0.3, -0.1, 2.0], None, Activation::Identity).unwrap()], 1)
        .unwrap();
    let x = [1.5, -2.0, 0.25];
    let cache = net.forward_cached(&x, false);
    let (g, gin) = net.backward(&cache, &[1.0]);
    assert_eq!(g.weights[0], x.to_vec());
    assert_eq!(gin, vec![0.3, -0.1, 2.0]);
}

/// Loss `c . output` for a fixed random `c`.
fn loss(net: &PrunableMlp, x: &[f64], c: &[f64], masked: bool) -> f64 {
    let out = if masked { net.masked_forward(x) } else { net.forward(x) };
    out.iter().zip(c).map(|(o, c)| o * c).sum()
}

fn finite_difference_check(net: &PrunableMlp, x: &[f64], masked: bool) -> f64 {
    let c = random_input(net.output_dim(), 99);
    let cache = net.forward_cached(x, masked);
    let (g, _) = net.backward(&cache, &c);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for l in 0..net.layers().len() {
        for k in 0..net.layers()[l].weights().len() {
            let mut plus = net.clone();
            plus.layers_mut()[l].weights_mut()[k] += h;
            let mut minus = net.clone();
            minus.layers_mut()[l].weights_mut()[k] -= h;
            let fd = (loss(&plus, x, &c, masked) - loss(&minus, x, &c, masked)) / (2.0 * h);
            let an = g.weights[l][k];
            worst = worst.max((fd - an).abs() / an.abs().max(fd.abs()).max(1e-6));
        }
        if let Some(b) = net.layers()[l].bias() {
            for k in 0..b.len() {
                let mut plus = net.clone();
                plus.layers_mut()[l].bias_mut().unwrap()[k] += h;
                let mut minus = net.clone();
                minus.layers_mut()[l].bias_mut().unwrap()[k] -= h;
                let fd = (loss(&plus, x, &c, masked) - loss(&minus, x, &c, masked)) / (2.0 * h);
                let an = g.biases[l].as_ref().unwrap()[k];
                worst = worst.max((fd - an).abs() / an.abs().max(fd.abs()).max(1e-6));
            }
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..5 {
        let mut net = random_net(&[4, 6, 5, 2], Activation::Tanh, true, seed);
        let x = random_input(4, seed + 3);
        assert!(finite_difference_check(&net, &x, false) < 1e-4);
        net.set_masks(random_masks(&net, seed)).unwrap();
        assert!(finite_difference_check(&net, &x, true) < 1e-4);
    }
}

#[test]
fn masked_neuron_gets_no_gradient() {
    let mut net = random_net(&[3, 4, 2], Activation::Tanh, true, 5);
    net.set_masks(vec![vec![true, false, true, true]]).unwrap();
    let cache = net.forward_cached(&random_input(3, 0), true);
    let (g, _) = net.backward(&cache, &[1.0, -1.0]);
    assert!(g.weights[0][3..6].iter().all(|&v| v == 0.0));
    assert_eq!(g.biases[0].as_ref().unwrap()[1], 0.0);
    assert_eq!(g.weights[1][1], 0.0);
    assert_eq!(g.weights[1][5], 0.0);
    let live = net.parameter_liveness();
    assert_eq!(live.weights[0][3..6], [0.0; 3]);
    assert_eq!(live.weights[1][1], 0.0);
    assert_eq!(live.weights[1][0], 1.0);
}

#[test]
fn importance_examples() {
    let zero = PrunableMlp::new(
        vec![DenseLayer::zeros(3, 4, false, Activation::Relu), DenseLayer::zeros(4, 2, false, Activation::Identity)],
        1,
    )
    .unwrap();
    assert_eq!(zero.neuron_importance(), vec![vec![0.0; 4]]);

    let single = PrunableMlp::new(
        vec![
            DenseLayer::new(2, 1, vec![3.0, 4.0], None, Activation::Relu).unwrap(),
            DenseLayer::new(1, 1, vec![0.0], None, Activation::Identity).unwrap(),
        ],
        1,
    )
    .unwrap();
    assert_eq!(single.neuron_importance(), vec![vec![5.0]]);

    let net = random_net(&[3, 5, 4, 2], Activation::Relu, false, 1);
    let mut scaled = net.clone();
    for layer in scaled.layers_mut() {
        layer.weights_mut().iter_mut().for_each(|w| *w *= 2.5);
    }
    for (a, b) in net.neuron_importance().iter().flatten().zip(scaled.neuron_importance().iter().flatten()) {
        assert!((2.5 * a - b).abs() < 1e-12);
    }
}

#[test]
fn schedule_values() {
    let s = PruneSchedule { initial_sparsity: 0.0, target_sparsity: 0.8, start_epoch: 10, total_steps: 4, frequency: 5 };
    assert_eq!(s.sparsity_at(10), 0.0);
    assert_eq!(s.sparsity_at(30), 0.8);
    assert!((s.sparsity_at(20) - 0.7).abs() < 1e-15);
    assert_eq!(s.sparsity_at(0), 0.0);
    assert_eq!(s.sparsity_at(1000), 0.8);
    let odd = PruneSchedule { initial_sparsity: 0.1, target_sparsity: 0.8, ..s };
    assert_eq!(odd.sparsity_at(10), 0.1);
    assert!(s.is_update_epoch(10) && s.is_update_epoch(15) && s.is_update_epoch(30));
    assert!(!s.is_update_epoch(12) && !s.is_update_epoch(35) && !s.is_update_epoch(5));
    assert!(s.validate().is_ok());
    assert!(PruneSchedule { frequency: 0, ..s }.validate().is_err());
    assert!(PruneSchedule { initial_sparsity: 0.9, ..s }.validate().is_err());
    assert!(PruneSchedule { target_sparsity: 1.0, ..s }.validate().is_err());
}

/// `1 -> n -> 1` net whose hidden neuron `k` has importance `|scores[k]|`.
fn scored_net(scores: &[f64], floor: usize) -> PrunableMlp {
    PrunableMlp::new(
        vec![
            DenseLayer::new(1, scores.len(), scores.to_vec(), None, Activation::Relu).unwrap(),
            DenseLayer::zeros(scores.len(), 1, false, Activation::Identity),
        ],
        floor,
    )
    .unwrap()
}

#[test]
fn zero_sparsity_keeps_everything() {
    let mut net = random_net(&[3, 6, 6, 1], Activation::Relu, false, 2);
    let up = net.apply_sparsity(0.0);
    assert_eq!(up.masked, 0);
    assert!(net.masks().iter().flatten().all(|&m| m));
}

#[test]
fn quantile_masks_lowest_scores() {
    let scores = [0.9, 0.1, 0.5, 0.3, 0.8, 0.2, 0.7, 0.4, 0.6, 1.0];
    let mut net = scored_net(&scores, 0);
    let up = net.apply_sparsity(0.3);
    assert_eq!(up.masked, 3);
    let masked: Vec<usize> = (0..10).filter(|&n| !net.masks()[0][n]).collect();
    assert_eq!(masked, vec![1, 3, 5]);
    assert_eq!(up.threshold, 0.4);
    // every active neuron is at or above the threshold
    assert!((0..10).all(|n| !net.masks()[0][n] || scores[n] >= up.threshold));
}

#[test]
fn ties_break_by_layer_then_index() {
    let layers = vec![
        DenseLayer::new(1, 4, vec![1.0; 4], None, Activation::Relu).unwrap(),
        DenseLayer::new(4, 4, vec![0.0; 16], None, Activation::Relu).unwrap(),
        DenseLayer::new(4, 1, vec![1.0; 4], None, Activation::Identity).unwrap(),
    ];
    let mut net = PrunableMlp::new(layers, 0).unwrap();
    // every hidden neuron has importance 1
    assert!(net.neuron_importance().iter().flatten().all(|&s| s == 1.0));
    net.apply_sparsity(0.375);
    assert_eq!(net.masks(), &[vec![false, false, false, true], vec![true; 4]]);
    net.apply_sparsity(0.25);
    assert_eq!(net.masks(), &[vec![false, false, true, true], vec![true; 4]]);

    let mut flat = scored_net(&[1.0; 8], 0);
    let up = flat.apply_sparsity(0.5);
    assert_eq!(up.masked, 4);
    assert_eq!(flat.masks()[0], vec![false, false, false, false, true, true, true, true]);
}

#[test]
fn floor_reactivates_best_neurons_and_masks_can_recover() {
    let mut net = scored_net(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6], 4);
    let up = net.apply_sparsity(0.5);
    assert_eq!(up.floor_restored, 1);
    assert_eq!(net.masks()[0], vec![false, false, true, true, true, true]);
    net.layers_mut()[0].weights_mut()[0] = 5.0;
    net.apply_sparsity(0.34);
    assert_eq!(net.masks()[0], vec![true, false, false, true, true, true]);
}

#[test]
fn compact_all_ones_is_identity() {
    let net = random_net(&[3, 5, 4, 2], Activation::Relu, true, 3);
    let (small, map) = net.compact();
    assert_eq!(small, net);
    assert_eq!(map.kept, vec![(0..5).collect::<Vec<_>>(), (0..4).collect()]);
}

#[test]
fn compact_drops_one_neuron() {
    let mut net = random_net(&[3, 4, 2], Activation::Relu, true, 4);
    net.set_masks(vec![vec![true, true, false, true]]).unwrap();
    let (small, _) = net.compact();
    assert_eq!(small.hidden_sizes(), vec![3]);
    assert_eq!(small.num_parameters(), net.num_active_parameters());
    for k in 0..20 {
        let x = random_input(3, k);
        assert!(close(&small.forward(&x), &net.masked_forward(&x), 1e-12));
    }
}

#[test]
fn half_sparsity_on_wide_layers() {
    let mut r = rng::stream(8, "test/net", 0, 0);
    let mut net = PrunableMlp::random(&[6, 64, 64, 3], Activation::Relu, Activation::Identity, false, 4, &mut r).unwrap();
    let before = net.num_parameters();
    let up = net.apply_sparsity(0.5);
    assert_eq!(up.masked + up.floor_restored, 64);
    let (small, map) = net.compact();
    assert!((64..=68).contains(&small.num_hidden_neurons()));
    assert!(map.kept.iter().all(|k| k.len() >= 4));
    assert_eq!(small.num_parameters(), net.num_active_parameters());
    // at most the 64*64 block shrinks quadratically; everything else linearly
    assert!(small.num_parameters() <= before / 2 + 64 * 4);
}

#[test]
fn compaction_map_shrinks_moments() {
    let mut net = random_net(&[2, 4, 3, 1], Activation::Relu, true, 6);
    net.set_masks(vec![vec![true, false, true, true], vec![false, true, true]]).unwrap();
    let mut values = Gradients::zeros_like(&net);
    for (h, layer) in net.layers().iter().enumerate() {
        values.weights[h] = layer.weights().to_vec();
        values.biases[h] = layer.bias().map(<[f64]>::to_vec);
    }
    let (small, map) = net.compact();
    let shrunk = map.compact_values(&net, &values);
    for (h, layer) in small.layers().iter().enumerate() {
        assert_eq!(shrunk.weights[h], layer.weights());
        assert_eq!(shrunk.biases[h].as_deref(), layer.bias());
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut net = random_net(&[4, 9, 7, 2], Activation::Tanh, true, 12);
    net.set_masks(random_masks(&net, 12)).unwrap();
    let text = net.to_checkpoint();
    let back = PrunableMlp::from_checkpoint(&text).unwrap();
    assert_eq!(back, net);
    for (a, b) in net.layers().iter().zip(back.layers()) {
        assert!(a.weights().iter().zip(b.weights()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    assert_eq!(back.to_checkpoint(), text);
    let wrong = text.replace("\"version\":1", "\"version\":2");
    assert!(matches!(PrunableMlp::from_checkpoint(&wrong), Err(NetError::Checkpoint(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn masked_output_ignores_dead_weights(seed in 0u64..1000, noise in -10.0f64..10.0) {
        let mut net = random_net(&[3, 6, 5, 2], Activation::Relu, true, seed);
        let masks = random_masks(&net, seed);
        net.set_masks(masks.clone()).unwrap();
        let x = random_input(3, seed);
        let base = net.masked_forward(&x);
        let cache = net.forward_cached(&x, true);
        let (g0, _) = net.backward(&cache, &[1.0, 0.5]);
        let mut perturbed = net.clone();
        for h in 0..2 {
            for n in 0..masks[h].len() {
                if !masks[h][n] {
                    let inc = perturbed.layers()[h].in_dim();
                    for c in 0..inc {
                        perturbed.layers_mut()[h].set_weight(n, c, noise);
                    }
                    perturbed.layers_mut()[h].bias_mut().unwrap()[n] = noise;
                    for o in 0..perturbed.layers()[h + 1].out_dim() {
                        perturbed.layers_mut()[h + 1].set_weight(o, n, noise);
                    }
                }
            }
        }
        prop_assert_eq!(perturbed.masked_forward(&x), base);
        let (g1, _) = perturbed.backward(&perturbed.forward_cached(&x, true), &[1.0, 0.5]);
        prop_assert_eq!(g1, g0);
    }

    #[test]
    fn compact_matches_masked(seed in 0u64..1000) {
        let mut net = random_net(&[4, 8, 8, 3], Activation::Relu, seed % 2 == 0, seed);
        net.set_masks(random_masks(&net, seed)).unwrap();
        let (small, _) = net.compact();
        prop_assert_eq!(small.num_parameters(), net.num_active_parameters());
        for k in 0..10 {
            let x = random_input(4, seed * 31 + k);
            prop_assert!(close(&small.forward(&x), &net.masked_forward(&x), 1e-12));
        }
    }

    #[test]
    fn achieved_sparsity_tracks_request(seed in 0u64..1000, w in 0.0f64..0.95, floor in 0usize..6) {
        let mut r = rng::stream(seed, "test/prop", 0, 0);
        let mut net = PrunableMlp::random(&[3, 10, 14, 2], Activation::Relu, Activation::Identity, false, floor, &mut r)
            .unwrap();
        let up = net.apply_sparsity(w);
        let total = net.num_hidden_neurons() as f64;
        let slack = 2.0 * floor.max(1) as f64 / total;
        prop_assert!(up.achieved_sparsity <= w + 1.0 / total + 1e-12);
        prop_assert!(up.achieved_sparsity >= w - 1.0 / total - slack - 1e-12);
        for m in net.masks() {
            prop_assert!(m.iter().filter(|&&k| k).count() >= floor.max(1).min(m.len()));
        }
    }

    #[test]
    fn schedule_is_monotone(a in 0.0f64..0.5, b in 0.5f64..0.99, t0 in 0usize..20, m in 1usize..10, f in 1usize..5) {
        let s = PruneSchedule { initial_sparsity: a, target_sparsity: b, start_epoch: t0, total_steps: m, frequency: f };
        prop_assert_eq!(s.sparsity_at(t0), a);
        prop_assert_eq!(s.sparsity_at(s.end_epoch()), b);
        let mut last = a;
        for t in t0..=s.end_epoch() {
            let w = s.sparsity_at(t);
            prop_assert!(w >= last - 1e-15);
            last = w;
        }
    }
}
