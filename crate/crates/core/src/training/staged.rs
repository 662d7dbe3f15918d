use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{prior_baseline_loss, run_epochs, MetricsLog, TrainConfig};
use crate::error::{Error, Result};
use crate::models::{
    build_audiovisual, build_graph, load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, Example, Fusion,
    FusedModel, ModelConfig, ModelGraph, Modality,
};
use crate::numerics::Rng;
use crate::signal::Snr;

/// Where the three stage checkpoints of an audio-visual run live.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StagePaths {
    pub acoustic: PathBuf,
    pub visual: PathBuf,
    pub fused: PathBuf,
}

impl StagePaths {
    pub fn in_dir(dir: &Path) -> Self {
        StagePaths {
            acoustic: dir.join("acoustic.ckpt"),
            visual: dir.join("visual.ckpt"),
            fused: dir.join("audiovisual.ckpt"),
        }
    }
}

fn init_rng(tc: &TrainConfig) -> Rng {
    Rng::new(tc.seed).derive(0x1417)
}

/// Trains one randomly initialized model of any family.
pub fn train_single(
    config: &ModelConfig,
    train: &[Example],
    val: &[Example],
    tc: &TrainConfig,
    log: &mut MetricsLog,
) -> Result<Checkpoint> {
    let graph = build_graph(config, &mut init_rng(tc))?;
    let stage = config.modality.to_string();
    let report = run_epochs(graph, train, val, tc, &stage, log)?;
    let baseline = prior_baseline_loss(&report.model, train, val, config.classes);
    let record = report.stage_record(&stage, baseline);
    let meta = CheckpointMeta {
        epoch: report.best_epoch,
        val_loss_history: report.val_loss.clone(),
        rng_state: Some(report.rng_state),
        stages: vec![record],
        norm_stats: None,
    };
    Ok(Checkpoint::new(config.clone(), report.model, meta))
}

/// Builds the fused model from the stage checkpoints on disk and trains it
/// end to end.
pub fn train_fused_stage(
    config: &ModelConfig,
    paths: &StagePaths,
    with_attention: bool,
    train: &[Example],
    val: &[Example],
    tc: &TrainConfig,
    log: &mut MetricsLog,
) -> Result<Checkpoint> {
    let (ac, vc) = match (&config.acoustic, &config.visual) {
        (Some(a), Some(v)) => (a.as_ref(), v.as_ref()),
        _ => return Err(Error::Config("audio-visual training needs acoustic and visual sub-configs".into())),
    };
    let a = load_checkpoint(&paths.acoustic, Some(ac))?;
    let v = load_checkpoint(&paths.visual, Some(vc))?;
    let fused = build_audiovisual(config, &a, &v, with_attention, &mut init_rng(tc))?;
    let mut config = config.clone();
    config.modality = if with_attention { Modality::AudioVisualAttention } else { Modality::AudioVisual };
    let stage = config.modality.to_string();
    let report = run_epochs(ModelGraph::Fused(fused), train, val, tc, &stage, log)?;
    let baseline = prior_baseline_loss(&report.model, train, val, config.classes);
    let mut stages = a.meta.stages.clone();
    stages.extend(v.meta.stages.iter().cloned());
    stages.push(report.stage_record(&stage, baseline));
    let meta = CheckpointMeta {
        epoch: report.best_epoch,
        val_loss_history: report.val_loss.clone(),
        rng_state: Some(report.rng_state),
        stages,
        norm_stats: a.meta.norm_stats.clone(),
    };
    Ok(Checkpoint::new(config, report.model, meta))
}

/// Acoustic, visual, then fused training. Each stage checkpoint is written to
/// `paths` and the fused stage reads its inputs back from disk.
pub fn train_staged_audiovisual(
    config: &ModelConfig,
    train: &[Example],
    val: &[Example],
    tc: &TrainConfig,
    paths: &StagePaths,
    log: &mut MetricsLog,
) -> Result<Checkpoint> {
    config.validate()?;
    if !config.modality.is_fused() {
        return Err(Error::Config(format!("{} is not an audio-visual config", config.modality)));
    }
    let a = train_single(config.acoustic.as_ref().unwrap(), train, val, tc, log)?;
    save_checkpoint(&paths.acoustic, &a)?;
    let v = train_single(config.visual.as_ref().unwrap(), train, val, &tc.with_seed(tc.seed.wrapping_add(1)), log)?;
    save_checkpoint(&paths.visual, &v)?;
    let with_attention = config.modality == Modality::AudioVisualAttention;
    let f = train_fused_stage(config, paths, with_attention, train, val, &tc.with_seed(tc.seed.wrapping_add(2)), log)?;
    save_checkpoint(&paths.fused, &f)?;
    Ok(f)
}

/// Ordered SNR levels, each with an optional epoch budget, written
/// `clean:10,20,10:5,0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub levels: Vec<(Snr, Option<usize>)>,
}

impl NoiseSchedule {
    pub fn new(levels: Vec<(Snr, Option<usize>)>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Config("noise schedule is empty".into()));
        }
        if levels.iter().any(|(_, e)| *e == Some(0)) {
            return Err(Error::Config("epoch budgets must be at least 1".into()));
        }
        Ok(NoiseSchedule { levels })
    }
}

impl FromStr for NoiseSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let levels = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| {
                let (snr, epochs) = match p.split_once(':') {
                    Some((a, b)) => (a, Some(b.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad epoch budget in `{p}`")))?)),
                    None => (p, None),
                };
                Ok((snr.trim().parse::<Snr>()?, epochs))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(levels)
    }
}

impl fmt::Display for NoiseSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (snr, epochs)) in self.levels.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{snr}")?;
            if let Some(e) = epochs {
                write!(f, ":{e}")?;
            }
        }
        Ok(())
    }
}

/// Retrains an attention-fused model level by level. `make_data` returns the
/// train and validation examples with audio corrupted at the given SNR; each
/// level trains on the union of all levels seen so far so the clean
/// condition is not forgotten.
pub fn train_noise_schedule(
    config: &ModelConfig,
    model: FusedModel,
    make_data: &mut dyn FnMut(Snr) -> Result<(Vec<Example>, Vec<Example>)>,
    schedule: &NoiseSchedule,
    tc: &TrainConfig,
    log: &mut MetricsLog,
) -> Result<Checkpoint> {
    if !matches!(model.fusion, Fusion::Attention(_)) {
        return Err(Error::Config("noise-schedule training needs an attention model".into()));
    }
    let mut graph = ModelGraph::Fused(model);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    let mut stages = Vec::new();
    let mut history = Vec::new();
    let mut last = None;
    for (i, &(snr, epochs)) in schedule.levels.iter().enumerate() {
        let (t, v) = make_data(snr)?;
        train.extend(t);
        val.extend(v);
        let cfg = TrainConfig {
            max_epochs: epochs.unwrap_or(tc.max_epochs),
            ..tc.with_seed(tc.seed.wrapping_add(i as u64))
        };
        let stage = format!("noise:{snr}");
        let report = run_epochs(graph, &train, &val, &cfg, &stage, log)?;
        let baseline = prior_baseline_loss(&report.model, &train, &val, config.classes);
        stages.push(report.stage_record(&stage, baseline));
        history.extend(report.val_loss.iter().copied());
        last = Some((report.best_epoch, report.rng_state));
        graph = report.model;
    }
    let (epoch, rng) = last.expect("schedule is non-empty");
    let mut config = config.clone();
    config.modality = Modality::AudioVisualAttention;
    let meta = CheckpointMeta { epoch, val_loss_history: history, rng_state: Some(rng), stages, norm_stats: None };
    Ok(Checkpoint::new(config, graph, meta))
}
