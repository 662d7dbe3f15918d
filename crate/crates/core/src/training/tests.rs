use std::cell::Cell;
use std::rc::Rc;

use super::*;
use crate::layers::Parameterized;
use crate::models::{
    build_graph, encode_checkpoint, parse_conv_stack, save_checkpoint, Evaluation, Fusion, ModelConfig, ModelGraph,
};
use crate::numerics::{rng_normal, Tensor};
use crate::signal::Snr;

/// Two classes whose features differ in mean along every dimension.
fn separable(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|_| {
            let frames = 6;
            let labels: Vec<usize> = (0..frames).map(|_| rng.below(2)).collect();
            let mut x = rng_normal(&mut rng, &[frames, 39], 0.0, 0.3).unwrap();
            for (t, &c) in labels.iter().enumerate() {
                let shift = if c == 0 { -1.0 } else { 1.0 };
                x.row_mut(t).iter_mut().for_each(|v| *v += shift);
            }
            let images = (0..3).map(|i| {
                let mut img = rng_normal(&mut rng, &[1, 8, 8], 0.0, 0.3).unwrap();
                let shift = if labels[2 * i] == 0 { -1.0 } else { 1.0 };
                img.data_mut().iter_mut().for_each(|v| *v += shift);
                img
            });
            Example {
                features: Some(x),
                midpoints: vec![0, 2, 4],
                labels: vec![labels[0], labels[2], labels[4]],
                images: images.collect(),
                frame_labels: labels,
            }
        })
        .collect()
}

fn small_tc(max_epochs: usize) -> TrainConfig {
    TrainConfig { max_epochs, seed: 7, ..TrainConfig::default() }
}

fn av_config(attention: bool) -> ModelConfig {
    let mut v = ModelConfig::visual(1, 3, 2, parse_conv_stack("p2").unwrap(), false);
    v.image_size = 8;
    ModelConfig::audiovisual(ModelConfig::acoustic(1, 3, 2), v, vec![4], attention.then(|| vec![3]))
}

#[test]
fn separable_toy_reaches_full_accuracy() {
    let (train, val) = (separable(20, 1), separable(8, 2));
    let g = build_graph(&ModelConfig::acoustic(1, 4, 2), &mut Rng::new(3)).unwrap();
    let mut log = MetricsLog::new();
    let r = run_epochs(g, &train, &val, &small_tc(20), "acoustic", &mut log).unwrap();
    let (_, acc) = evaluate_split(&r.model, &val).unwrap();
    assert_eq!(acc, 100.0);
    assert!(r.best_val_loss < r.initial_val_loss);
}

#[test]
fn training_is_deterministic() {
    let (train, val) = (separable(6, 4), separable(3, 5));
    let run = || {
        let g = build_graph(&ModelConfig::acoustic(1, 3, 2), &mut Rng::new(6)).unwrap();
        let mut log = MetricsLog::new();
        let r = run_epochs(g, &train, &val, &small_tc(3), "acoustic", &mut log).unwrap();
        (r.model, log.to_csv().unwrap())
    };
    let (a, la) = run();
    let (b, lb) = run();
    assert_eq!(a, b);
    assert_eq!(la, lb);
    let parsed = MetricsLog::parse_csv(&la).unwrap();
    assert_eq!(parsed.rows.len(), 1 + 3 * 2);
    assert!(la.starts_with("stage,epoch,split,loss,accuracy,lr\n"));
}

#[test]
fn empty_split_is_an_error() {
    let g = build_graph(&ModelConfig::acoustic(1, 3, 2), &mut Rng::new(6)).unwrap();
    assert!(run_epochs(g, &[], &separable(2, 1), &small_tc(1), "x", &mut MetricsLog::new()).is_err());
}

/// Scalar model whose loss becomes NaN on selected calls.
#[derive(Clone)]
struct Flaky {
    w: Tensor,
    calls: Rc<Cell<usize>>,
    nan_on: Rc<Vec<usize>>,
}

impl Parameterized for Flaky {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(crate::layers::join(prefix, "w"), &self.w);
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(crate::layers::join(prefix, "w"), &mut self.w);
    }
}

impl Trainable for Flaky {
    fn loss_and_grads(&self, _ex: &Example, grads: &mut Self) -> crate::Result<f64> {
        let n = self.calls.get();
        self.calls.set(n + 1);
        let w = self.w.data()[0];
        grads.w.data_mut()[0] += 2.0 * (w - 3.0);
        Ok(if self.nan_on.contains(&n) { f64::NAN } else { (w - 3.0).powi(2) })
    }
    fn evaluate(&self, _ex: &Example) -> crate::Result<Evaluation> {
        Ok(Evaluation { loss: (self.w.data()[0] - 3.0).powi(2), predictions: vec![0], weights: None })
    }
}

#[test]
fn divergent_epoch_restores_best_model() {
    let ex = Example { labels: vec![0], ..Default::default() };
    let data = vec![ex.clone(), ex.clone()];
    let model = Flaky { w: Tensor::vector(vec![0.0]), calls: Rc::new(Cell::new(0)), nan_on: Rc::new(vec![3]) };
    let mut log = MetricsLog::new();
    let r = run_epochs(model, &data, &data, &TrainConfig { max_epochs: 4, eval_train: false, ..small_tc(4) }, "flaky", &mut log).unwrap();
    assert_eq!(r.diverged_epochs, 1);
    assert!(r.val_loss[1].is_nan());
    assert!(r.val_loss[2] < r.val_loss[0]);
    assert!(r.best_val_loss.is_finite());
    let rec = r.stage_record("flaky", 100.0);
    assert_eq!(rec.warnings.len(), 1);
}

#[test]
fn staged_training_records_three_stages() {
    let (train, val) = (separable(4, 8), separable(2, 9));
    let dir = tempfile::tempdir().unwrap();
    let paths = StagePaths::in_dir(dir.path());
    let mut log = MetricsLog::new();
    let ck = train_staged_audiovisual(&av_config(true), &train, &val, &small_tc(2), &paths, &mut log).unwrap();
    assert_eq!(ck.meta.stages.len(), 3);
    assert!(ck.meta.stages.iter().all(|s| s.epochs > 0));
    assert!(paths.fused.exists());

    std::fs::remove_file(&paths.visual).unwrap();
    let err = train_fused_stage(&av_config(false), &paths, false, &train, &val, &small_tc(1), &mut log).unwrap_err();
    assert!(matches!(err, crate::Error::MissingPrerequisite(p) if p == paths.visual));
}

#[test]
fn clean_only_schedule_equals_plain_training() {
    let (train, val) = (separable(4, 10), separable(2, 11));
    let ModelGraph::Fused(model) = build_graph(&av_config(true), &mut Rng::new(12)).unwrap() else { panic!() };
    let schedule: NoiseSchedule = "clean".parse().unwrap();
    let mut log = MetricsLog::new();
    let ck = train_noise_schedule(&av_config(true), model.clone(), &mut |_| Ok((train.clone(), val.clone())), &schedule, &small_tc(2), &mut log)
        .unwrap();
    let plain = run_epochs(ModelGraph::Fused(model), &train, &val, &small_tc(2), "noise:clean", &mut MetricsLog::new()).unwrap();
    assert_eq!(ck.graph, plain.model);
    assert_eq!(log.to_csv().unwrap(), {
        let mut l = MetricsLog::new();
        let ModelGraph::Fused(m) = build_graph(&av_config(true), &mut Rng::new(12)).unwrap() else { panic!() };
        run_epochs(ModelGraph::Fused(m), &train, &val, &small_tc(2), "noise:clean", &mut l).unwrap();
        l.to_csv().unwrap()
    });
}

#[test]
fn noise_schedule_requires_attention() {
    let ModelGraph::Fused(mut model) = build_graph(&av_config(false), &mut Rng::new(13)).unwrap() else { panic!() };
    model.fusion = Fusion::Concat;
    let s: NoiseSchedule = "clean,0".parse().unwrap();
    let r = train_noise_schedule(&av_config(false), model, &mut |_| Ok((vec![], vec![])), &s, &small_tc(1), &mut MetricsLog::new());
    assert!(r.is_err());
}

#[test]
fn schedule_grammar() {
    let s: NoiseSchedule = "clean:3, 20, 10:2,0".parse().unwrap();
    assert_eq!(s.levels, vec![(Snr::Clean, Some(3)), (Snr::Db(20.0), None), (Snr::Db(10.0), Some(2)), (Snr::Db(0.0), None)]);
    assert_eq!(s.to_string(), "clean:3,20,10:2,0");
    assert!("".parse::<NoiseSchedule>().is_err());
    assert!("clean:0".parse::<NoiseSchedule>().is_err());
    assert!("inf".parse::<NoiseSchedule>().is_err());
}

#[test]
fn train_config_kv() {
    let doc = crate::kv::KvDoc::parse_str("lr0 = 0.002\npatience = 3\n", "t").unwrap();
    let c = TrainConfig::from_kv(&doc).unwrap();
    assert_eq!((c.lr0, c.patience, c.decay_factor), (0.002, 3, 0.5));
    let back = TrainConfig::from_kv(&crate::kv::KvDoc::parse_str(&c.to_kv_string(), "t").unwrap()).unwrap();
    assert_eq!(back, c);
    assert!(TrainConfig::from_kv(&crate::kv::KvDoc::parse_str("decay_factor = 0\n", "t").unwrap()).is_err());
}

#[test]
fn checkpoint_of_trained_model_round_trips() {
    let (train, val) = (separable(3, 14), separable(2, 15));
    let ck = train_single(&ModelConfig::acoustic(1, 2, 2), &train, &val, &small_tc(1), &mut MetricsLog::new()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.ckpt");
    save_checkpoint(&p, &ck).unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), encode_checkpoint(&ck).unwrap());
}

#[test]
fn frozen_prefixes_hold_parameters_fixed() {
    let (train, val) = (separable(6, 16), separable(3, 17));
    let g = build_graph(&av_config(true), &mut Rng::new(4)).unwrap();
    let tc = TrainConfig { frozen: vec!["acoustic".into(), "visual".into()], ..small_tc(2) };
    let r = run_epochs(g.clone(), &train, &val, &tc, "fused", &mut MetricsLog::new()).unwrap();
    let mut moved = false;
    for ((name, before), (_, after)) in g.named_params().into_iter().zip(r.model.named_params()) {
        if name.starts_with("acoustic.") || name.starts_with("visual.") {
            assert_eq!(before, after, "{name} changed");
        } else {
            moved |= before != after;
        }
    }
    assert!(moved);
    assert!(is_frozen("acoustic.lstm0.fwd.w", &tc.frozen));
    assert!(!is_frozen("acousticx.w", &tc.frozen));
    let doc = crate::kv::KvDoc::parse_str("frozen = acoustic, visual\n", "t").unwrap();
    assert_eq!(TrainConfig::from_kv(&doc).unwrap().frozen, tc.frozen);
}
