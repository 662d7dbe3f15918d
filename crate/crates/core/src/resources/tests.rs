use proptest::prelude::*;

use super::*;
use crate::layers::{Activation, ConvLayer, Parameterized, PoolLayer};
use crate::numerics::Rng;
use crate::models::{parse_conv_stack, ModelConfig};
use crate::numerics::rng_normal;

fn acoustic_input(frames: usize, seed: u64) -> Example {
    Example { features: Some(rng_normal(&mut Rng::new(seed), &[frames, 39], 0.0, 1.0).unwrap()), ..Default::default() }
}

#[test]
fn fc_spot_values() {
    let r = count_fc(39, 10);
    assert_eq!((r.macs_per_audio_frame, r.flops_per_audio_frame, r.param_count, r.size_bytes), (400, 800, 400, 1600));
    let l = FcLayer::new(39, 10, Activation::Softmax, &mut Rng::new(1));
    let c = MacCounter::new();
    l.forward_counted(&rng_normal(&mut Rng::new(2), &[1, 39], 0.0, 1.0).unwrap(), &c).unwrap();
    assert_eq!(c.count(), 400);
}

#[test]
fn lstm_sublayer_spot_value() {
    assert_eq!(lstm_sublayer_macs(39, 256), 303_104);
}

#[test]
fn dblstm_census_and_oracle() {
    let cfg = ModelConfig::acoustic(2, 256, 39);
    let g = build_graph(&cfg, &mut Rng::new(3)).unwrap();
    let r = count_resources(&g).unwrap();
    assert_eq!(r.macs_per_audio_frame, 1_666_855);
    assert_eq!(r.param_count, 1_666_855);
    assert_eq!(r.param_count, dblstm_closed_form(2, 256, 39));
    assert_eq!(r.size_bytes, 6_667_420);
    assert_eq!(r.flops_per_second, 100 * 3_333_710);
    let (out, macs) = instrumented_forward(&g, &acoustic_input(1, 4)).unwrap();
    assert_eq!(macs, r.macs_per_audio_frame);
    let ModelGraph::Acoustic(m) = &g else { unreachable!() };
    assert_eq!(out, m.logits(acoustic_input(1, 4).features.as_ref().unwrap()).unwrap());
}

#[test]
fn pool_only_stack_costs_nothing() {
    let stack = ConvStack { input: [1, 8, 8], ops: vec![ConvOp::Pool(PoolLayer { size: 2, stride: 2 })] };
    let c = MacCounter::new();
    stack.forward_counted(&Tensor::zeros(&[1, 8, 8]), &c).unwrap();
    assert_eq!(c.count(), 0);
    let mut costs = Vec::new();
    conv_costs("", &stack, &mut costs).unwrap();
    assert_eq!(ResourceReport::from_layers(costs).macs_per_image, 0);
    assert_eq!(ResourceReport::from_layers(Vec::new()).flops_per_second, 0);
}

#[test]
fn conv_census_matches_counter() {
    let mut rng = Rng::new(5);
    let stack = ConvStack {
        input: [1, 12, 12],
        ops: vec![
            ConvOp::Conv(ConvLayer::new(1, 3, 3, 1, 1, true, &mut rng)),
            ConvOp::Pool(PoolLayer { size: 2, stride: 2 }),
            ConvOp::Conv(ConvLayer::new(3, 4, 5, 2, 2, true, &mut rng)),
        ],
    };
    let mut costs = Vec::new();
    conv_costs("", &stack, &mut costs).unwrap();
    let c = MacCounter::new();
    stack.forward_counted(&rng_normal(&mut rng, &[1, 12, 12], 0.0, 1.0).unwrap(), &c).unwrap();
    assert_eq!(c.count(), costs.iter().map(|l| l.macs).sum::<u64>());
    assert_eq!(costs.iter().map(|l| l.params).sum::<u64>(), stack.param_count());
}

fn fused_config(attention: bool) -> ModelConfig {
    let mut v = ModelConfig::visual(1, 5, 4, parse_conv_stack("p2,c3x3x2,p2").unwrap(), true);
    v.image_size = 16;
    v.bottleneck_units = 7;
    ModelConfig::audiovisual(ModelConfig::acoustic(2, 6, 4), v, vec![8, 8], attention.then(|| vec![5]))
}

#[test]
fn fused_census_matches_counter() {
    for attention in [false, true] {
        let g = build_graph(&fused_config(attention), &mut Rng::new(6)).unwrap();
        let r = count_resources(&g).unwrap();
        assert_eq!(r.param_count, g.param_count());
        let mut rng = Rng::new(7);
        let ex = Example {
            features: Some(rng_normal(&mut rng, &[9, 39], 0.0, 1.0).unwrap()),
            images: (0..3).map(|_| rng_normal(&mut rng, &[1, 16, 16], 0.0, 1.0).unwrap()).collect(),
            midpoints: vec![1, 4, 8],
            ..Default::default()
        };
        let (_, macs) = instrumented_forward(&g, &ex).unwrap();
        assert_eq!(macs, expected_macs(&r, 9, 3));
    }
}

#[test]
fn discrepancy_report_lists_both_sides() {
    let d = acoustic_discrepancy_report().unwrap();
    assert_eq!(d.rows[0].published, 1.49e7);
    assert_eq!(d.rows[0].ours, 3_333_710.0);
    assert_eq!(d.rows[1].published, 44.5);
    assert!((d.rows[1].ours - 6.66742).abs() < 1e-12);
    assert!(d.to_table().contains("1 MAC = 2 FLOP"));
}

fn pt(acc: f64, flops: u64) -> ParetoPoint {
    ParetoPoint { label: format!("{acc}@{flops}"), modality: "acoustic".into(), layers: 1, hidden: 1, accuracy: acc, flops, size_bytes: 0 }
}

#[test]
fn frontier_examples() {
    let pts = vec![pt(60.0, 100), pt(70.0, 200), pt(65.0, 300)];
    assert_eq!(pareto_frontier(&pts), vec![0, 1]);
    assert_eq!(pareto_frontier(&pts[..1]), vec![0]);
    let ties = vec![pt(50.0, 10), pt(50.0, 10), pt(40.0, 10), pt(f64::NAN, 1)];
    assert_eq!(pareto_frontier(&ties), vec![0, 1]);
    audit_frontier(&ties, &[0, 1]).unwrap();
    assert!(audit_frontier(&pts, &[0]).is_err());
    assert!(audit_frontier(&pts, &[0, 1, 2]).is_err());
}

#[test]
fn sweep_records_failures_and_continues() {
    let grid = SweepGrid::from_kv(
        &crate::kv::KvDoc::parse_str("modality = acoustic\nclasses = 5\ngrid.layers = 1,2\ngrid.hidden = 4,8\n", "g").unwrap(),
    )
    .unwrap();
    let configs = grid.configs();
    assert_eq!(configs.len(), 4);
    let r = pareto_sweep(&configs, &mut |c| {
        if c.hidden == 8 && c.layers == 2 {
            Err(Error::Training("boom".into()))
        } else {
            Ok((c.layers * 10 + c.hidden) as f64)
        }
    })
    .unwrap();
    assert_eq!(r.outcomes.len(), 4);
    assert!(r.outcomes[3].error.is_some());
    audit_frontier(&r.points(), &r.frontier).unwrap();
    let csv = r.points_csv().unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(pareto_sweep(&[], &mut |_| Ok(0.0)).is_err());
}

#[test]
fn sweep_grid_rejects_fused_and_unknown_keys() {
    let bad = "modality = acoustic\ngrid.depth = 3\n";
    assert!(SweepGrid::from_kv(&crate::kv::KvDoc::parse_str(bad, "g").unwrap()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn census_equals_instrumented_count(layers in 1usize..4, hidden in 1usize..24, classes in 2usize..12, frames in 1usize..4) {
        let g = build_graph(&ModelConfig::acoustic(layers, hidden, classes), &mut Rng::new(8)).unwrap();
        let r = count_resources(&g).unwrap();
        let (_, macs) = instrumented_forward(&g, &acoustic_input(frames, 9)).unwrap();
        prop_assert_eq!(macs, expected_macs(&r, frames, 0));
        prop_assert_eq!(r.param_count, g.param_count());
        prop_assert_eq!(r.param_count, dblstm_closed_form(layers, hidden, classes));
    }

    #[test]
    fn cost_is_monotone(layers in 1usize..4, hidden in 1usize..64, classes in 2usize..40) {
        let c = |l, h| dblstm_closed_form(l, h, classes);
        prop_assert!(c(layers, hidden + 1) > c(layers, hidden));
        prop_assert!(c(layers + 1, hidden) > c(layers, hidden));
    }

    #[test]
    fn frontier_is_sound_and_complete(raw in proptest::collection::vec((0u8..20, 0u64..20), 1..40)) {
        let pts: Vec<ParetoPoint> = raw.iter().map(|&(a, f)| pt(a as f64, f)).collect();
        let fr = pareto_frontier(&pts);
        prop_assert!(audit_frontier(&pts, &fr).is_ok());
    }
}
