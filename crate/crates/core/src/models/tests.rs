use super::*;
use crate::layers::{check_param_grads, softmax_xent};
use crate::numerics::{rng_normal, DEFAULT_STEP};

fn acoustic_cfg(layers: usize, hidden: usize, classes: usize) -> ModelConfig {
    ModelConfig::acoustic(layers, hidden, classes)
}

fn visual_cfg(classes: usize, bottleneck: bool) -> ModelConfig {
    let mut c = ModelConfig::visual(1, 3, classes, parse_conv_stack("p4,c3x3x2,p2").unwrap(), bottleneck);
    c.image_size = 16;
    c.bottleneck_units = 5;
    c
}

fn fused_cfg(classes: usize, attention: bool) -> ModelConfig {
    ModelConfig::audiovisual(
        acoustic_cfg(1, 3, classes),
        visual_cfg(classes, true),
        vec![4],
        attention.then(|| vec![3]),
    )
}

fn example(rng: &mut Rng, frames: usize, classes: usize, image: usize) -> Example {
    let midpoints: Vec<usize> = (0..frames).step_by(2).collect();
    Example {
        features: Some(rng_normal(rng, &[frames, 39], 0.0, 1.0).unwrap()),
        frame_labels: (0..frames).map(|_| rng.below(classes)).collect(),
        images: midpoints.iter().map(|_| rng_normal(rng, &[1, image, image], 0.0, 1.0).unwrap()).collect(),
        labels: midpoints.iter().map(|_| rng.below(classes)).collect(),
        midpoints,
    }
}

/// Independent census: each BiLSTM layer holds two sublayers with four gates
/// of `N_h × (in + N_h)` weights plus `N_h` biases; the head is `C × (N_h + 1)`.
fn census(layers: usize, hidden: usize, classes: usize) -> u64 {
    let mut total = 0;
    let mut input = 39;
    for _ in 0..layers {
        total += 2 * 4 * (hidden * (input + hidden) + hidden);
        input = hidden;
    }
    (total + classes * (hidden + 1)) as u64
}

#[test]
fn acoustic_parameter_count() {
    let m = build_acoustic(&acoustic_cfg(2, 256, 39), &mut Rng::new(1)).unwrap();
    assert_eq!(m.param_count(), 1_666_855);
    assert_eq!(m.param_count(), census(2, 256, 39));
    for (l, h) in [(1, 8), (2, 32), (3, 8), (1, 64)] {
        let m = build_acoustic(&acoustic_cfg(l, h, 12), &mut Rng::new(2)).unwrap();
        assert_eq!(m.param_count(), census(l, h, 12));
    }
}

#[test]
fn acoustic_smoke_forward() {
    let m = build_acoustic(&acoustic_cfg(1, 1, 39), &mut Rng::new(3)).unwrap();
    let x = rng_normal(&mut Rng::new(4), &[3, 39], 0.0, 1.0).unwrap();
    let p = m.probabilities(&x).unwrap();
    assert_eq!(p.shape(), &[3, 39]);
    for r in 0..3 {
        assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert!(build_acoustic(&visual_cfg(4, true), &mut Rng::new(0)).is_err());
}

#[test]
fn visual_bottleneck_shapes() {
    let mut with = visual_cfg(6, true);
    with.bottleneck_units = 39;
    let a = build_visual(&with, &mut Rng::new(5)).unwrap();
    assert_eq!(a.lstm_input_size(), 39);
    let mut big = with.clone();
    big.conv_stack = parse_conv_stack("c3x3x4").unwrap();
    big.use_fc_bottleneck = false;
    let b = build_visual(&big, &mut Rng::new(5)).unwrap();
    assert_eq!(b.lstm_input_size(), 4 * 16 * 16);
    let lstm_params = |m: &VisualModel| m.lstm.iter().map(Parameterized::param_count).sum::<u64>();
    assert!(lstm_params(&b) > lstm_params(&a));

    let images: Vec<Tensor> = (0..4).map(|i| rng_normal(&mut Rng::new(i), &[1, 16, 16], 0.0, 1.0).unwrap()).collect();
    let p = a.probabilities(&images).unwrap();
    assert_eq!(p.shape(), &[4, 6]);
    for r in 0..4 {
        assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn visual_rejects_bad_geometry() {
    let mut c = visual_cfg(4, true);
    c.image_size = 3;
    assert!(matches!(build_visual(&c, &mut Rng::new(0)), Err(crate::Error::Geometry(_))));
}

#[test]
fn fused_with_zero_visual_matches_acoustic_path() {
    let ModelGraph::Fused(mut m) = build_graph(&fused_cfg(5, false), &mut Rng::new(6)).unwrap() else { panic!() };
    m.visual.head.weights.data_mut().fill(0.0);
    m.visual.head.bias.data_mut().fill(0.0);
    let ex = example(&mut Rng::new(7), 9, 5, 16);
    let (logits, _) = m.forward_example(&ex).unwrap();

    let a_all = m.acoustic.logits(ex.features.as_ref().unwrap()).unwrap();
    let mut x = Tensor::zeros(&[ex.midpoints.len(), 10]);
    for (r, &f) in ex.midpoints.iter().enumerate() {
        x.row_mut(r)[..5].copy_from_slice(a_all.row(f));
    }
    for l in &m.head {
        x = l.forward(&x).unwrap().0;
    }
    assert!(logits.max_abs_diff(&x).unwrap() == 0.0);
}

#[test]
fn fixed_half_weights_equal_concat_on_halved_features() {
    let ModelGraph::Fused(concat) = build_graph(&fused_cfg(4, false), &mut Rng::new(8)).unwrap() else { panic!() };
    let mut fixed = concat.clone();
    fixed.fusion = Fusion::Fixed(0.5);
    let ex = example(&mut Rng::new(9), 8, 4, 16);
    let (out_fixed, _) = fixed.forward_example(&ex).unwrap();

    let a_all = concat.acoustic.logits(ex.features.as_ref().unwrap()).unwrap();
    let v = concat.visual.logits(&ex.images).unwrap();
    let mut x = Tensor::zeros(&[ex.midpoints.len(), 8]);
    for (r, &f) in ex.midpoints.iter().enumerate() {
        let row = x.row_mut(r);
        row[..4].copy_from_slice(a_all.row(f));
        row[4..].copy_from_slice(v.row(r));
    }
    let mut x = x.scale(0.5);
    for l in &concat.head {
        x = l.forward(&x).unwrap().0;
    }
    assert!(out_fixed.max_abs_diff(&x).unwrap() < 1e-9);
}

#[test]
fn attention_weights_are_distributions() {
    let ModelGraph::Fused(m) = build_graph(&fused_cfg(4, true), &mut Rng::new(10)).unwrap() else { panic!() };
    for seed in 0..5 {
        let ex = example(&mut Rng::new(seed), 7, 4, 16);
        let w = m.evaluate(&ex).unwrap().weights.unwrap();
        for r in 0..w.rows() {
            assert!((w.row(r)[0] + w.row(r)[1] - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn fused_contains_sub_checkpoint_parameters() {
    let ac = acoustic_cfg(1, 3, 4);
    let vc = visual_cfg(4, true);
    let a = Checkpoint::new(ac.clone(), build_graph(&ac, &mut Rng::new(11)).unwrap(), CheckpointMeta::default());
    let v = Checkpoint::new(vc.clone(), build_graph(&vc, &mut Rng::new(12)).unwrap(), CheckpointMeta::default());
    let cfg = fused_cfg(4, true);
    let fused = build_audiovisual(&cfg, &a, &v, true, &mut Rng::new(13)).unwrap();
    let named: std::collections::HashMap<String, &Tensor> = fused.named_params().into_iter().collect();
    for (prefix, ck) in [("acoustic", &a), ("visual", &v)] {
        for (n, t) in ck.graph.named_params() {
            assert_eq!(named[&format!("{prefix}.{n}")], t);
        }
    }
    let mut other = cfg.clone();
    other.acoustic.as_mut().unwrap().hidden = 4;
    other.visual.as_mut().unwrap().hidden = 4;
    assert!(matches!(build_audiovisual(&other, &a, &v, true, &mut Rng::new(0)), Err(crate::Error::ConfigMismatch(_))));
}

fn grad_check<M: Trainable>(model: &M, ex: &Example) -> f64 {
    let mut grads = model.zeros_like();
    model.loss_and_grads(ex, &mut grads).unwrap();
    check_param_grads(model, &grads, |m| m.loss(ex), DEFAULT_STEP).unwrap()
}

#[test]
fn model_gradients_match_finite_differences() {
    let ex = example(&mut Rng::new(14), 6, 3, 16);
    let a = build_acoustic(&acoustic_cfg(2, 3, 3), &mut Rng::new(15)).unwrap();
    assert!(grad_check(&a, &ex) < 1e-4);
    let v = build_visual(&visual_cfg(3, true), &mut Rng::new(16)).unwrap();
    assert!(grad_check(&v, &ex) < 1e-4);
    let v = build_visual(&visual_cfg(3, false), &mut Rng::new(17)).unwrap();
    assert!(grad_check(&v, &ex) < 1e-4);
    for attention in [false, true] {
        let g = build_graph(&fused_cfg(3, attention), &mut Rng::new(18)).unwrap();
        assert!(grad_check(&g, &ex) < 1e-4);
        let mut cfg = fused_cfg(3, attention);
        cfg.fusion_input = FusionInput::Probabilities;
        let g = build_graph(&cfg, &mut Rng::new(19)).unwrap();
        assert!(grad_check(&g, &ex) < 1e-4);
    }
}

#[test]
fn fusion_input_round_trips_through_text() {
    let mut cfg = fused_cfg(3, true);
    assert!(!cfg.to_kv_string().contains("fusion_input"));
    cfg.fusion_input = FusionInput::Probabilities;
    let text = cfg.to_kv_string();
    assert!(text.contains("fusion_input = probabilities"));
    assert_eq!(ModelConfig::parse(&text).unwrap(), cfg);
    assert!(ModelConfig::parse(&text.replace("probabilities", "posteriors")).is_err());
}

#[test]
fn every_family_learns_one_example() {
    for cfg in [acoustic_cfg(1, 4, 3), visual_cfg(3, false), fused_cfg(3, false), fused_cfg(3, true)] {
        let mut g = build_graph(&cfg, &mut Rng::new(19)).unwrap();
        let ex = example(&mut Rng::new(20), 6, 3, 16);
        let start = g.loss(&ex).unwrap();
        let mut best = start;
        for _ in 0..50 {
            let mut grads = g.zeros_like();
            g.loss_and_grads(&ex, &mut grads).unwrap();
            let mut gi = grads.named_params().into_iter().map(|(_, t)| t.clone()).collect::<Vec<_>>().into_iter();
            g.visit_params_mut("", &mut |_, p| {
                let d = gi.next().unwrap();
                p.data_mut().iter_mut().zip(d.data()).for_each(|(w, g)| *w -= 0.1 * g);
            });
            best = best.min(g.loss(&ex).unwrap());
        }
        assert!(best < start, "{}: {best} !< {start}", cfg.modality);
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let cfg = fused_cfg(4, true);
    let graph = build_graph(&cfg, &mut Rng::new(21)).unwrap();
    let meta = CheckpointMeta { epoch: 3, val_loss_history: vec![1.5, 1.25], rng_state: Some(Rng::new(4).state()), ..Default::default() };
    let ck = Checkpoint::new(cfg.clone(), graph, meta);
    let bytes = encode_checkpoint(&ck).unwrap();
    let back = decode_checkpoint(&bytes, Some(&cfg)).unwrap();
    assert_eq!(back, ck);
    for ((_, a), (_, b)) in back.graph.named_params().iter().zip(ck.graph.named_params()) {
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn checkpoint_errors() {
    let cfg = acoustic_cfg(1, 2, 3);
    let ck = Checkpoint::new(cfg.clone(), build_graph(&cfg, &mut Rng::new(22)).unwrap(), CheckpointMeta::default());
    let bytes = encode_checkpoint(&ck).unwrap();
    for cut in [0, 5, 9, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(decode_checkpoint(&bytes[..cut], None), Err(crate::Error::CorruptCheckpoint(_))), "cut {cut}");
    }
    let mut flipped = bytes.clone();
    flipped[20] ^= 1;
    assert!(matches!(decode_checkpoint(&flipped, None), Err(crate::Error::CorruptCheckpoint(_))));
    let mut v2 = bytes.clone();
    v2[4] = 2;
    assert!(matches!(decode_checkpoint(&v2, None), Err(crate::Error::CheckpointVersion { found: 2, expected: 1 })));
    let other = acoustic_cfg(1, 3, 3);
    assert!(matches!(decode_checkpoint(&bytes, Some(&other)), Err(crate::Error::ConfigMismatch(_))));
}

#[test]
fn loss_of_uniform_head_is_log_classes() {
    let mut m = build_acoustic(&acoustic_cfg(1, 2, 7), &mut Rng::new(23)).unwrap();
    m.head.weights.data_mut().fill(0.0);
    let ex = example(&mut Rng::new(24), 5, 7, 16);
    let logits = m.logits(ex.features.as_ref().unwrap()).unwrap();
    let (loss, _) = softmax_xent(&logits, &ex.frame_labels).unwrap();
    assert!((loss - 7f64.ln()).abs() < 1e-12);
}
