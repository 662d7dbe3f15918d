use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use avsr::corpus::{cache_features, generate_synthetic, load_split, scan_corpus, CorpusManifest, Split, SynthSpec, MANIFEST_FILE};
use avsr::error::{Error, Result};
use avsr::kv::KvDoc;
use avsr::labels::{frame_accuracy, to_visemes, VisemeMap, PHONEME_COUNT};
use avsr::models::{
    build_audiovisual, load_checkpoint, save_checkpoint, Checkpoint, Example, ModelConfig, ModelGraph, Modality, Trainable,
};
use avsr::numerics::Rng;
use avsr::resources::{
    acoustic_discrepancy_report, audit_frontier, count_config, count_fc, count_resources, pareto_sweep, point_label,
    SweepGrid,
};
use avsr::signal::{Mfcc, MfccConfig, Snr};
use avsr::training::{
    evaluate_split, train_fused_stage, train_noise_schedule, train_single, MetricsLog, NoiseSchedule, StagePaths, TrainConfig,
};

use crate::record::RunRecord;
use crate::{CacheArgs, EvalNoiseArgs, ResourcesArgs, SweepArgs, SynthArgs, TrainArgs};

const PLOT_NOISE: &str = r#"# Accuracy and stream weights against SNR.
import csv, sys
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open(sys.argv[1] if len(sys.argv) > 1 else "noise.csv")))
x = range(len(rows))
plt.plot(x, [float(r["accuracy"]) for r in rows], marker="o", label="accuracy")
plt.xticks(x, [r["snr"] for r in rows])
plt.xlabel("SNR (dB)")
plt.ylabel("accuracy (%)")
if rows and rows[0]["mean_wv"]:
    ax = plt.gca().twinx()
    ax.plot(x, [float(r["mean_wv"]) for r in rows], color="tab:red", marker="s", label="mean w_v")
    ax.set_ylabel("mean visual weight")
plt.savefig("noise.png", dpi=150)
"#;

const PLOT_SWEEP: &str = r#"# Accuracy against FLOP/s; frontier points joined.
import csv
import matplotlib.pyplot as plt

rows = [r for r in csv.DictReader(open("sweep.csv")) if r["accuracy"] != "NaN"]
for r in rows:
    plt.scatter(float(r["flops"]), float(r["accuracy"]), color="tab:blue")
    plt.annotate(r["label"], (float(r["flops"]), float(r["accuracy"])), fontsize=7)
front = sorted((float(r["flops"]), float(r["accuracy"])) for r in rows if r["frontier"] == "true")
plt.plot([f for f, _ in front], [a for _, a in front], color="tab:orange")
plt.xscale("log")
plt.xlabel("FLOP/s")
plt.ylabel("accuracy (%)")
plt.savefig("sweep.png", dpi=150)
"#;

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Format(format!("csv: {e}"))
}

/// Loads `manifest.json`, scanning the directory (and saving the result)
/// when there is none.
pub fn open_corpus(root: &Path) -> Result<CorpusManifest> {
    if root.join(MANIFEST_FILE).is_file() {
        return CorpusManifest::load(root);
    }
    let m = scan_corpus(root)?;
    m.save()?;
    Ok(m)
}

fn mfcc_config() -> MfccConfig {
    MfccConfig::default()
}

/// Runs the feature cache when features or normalization are missing or
/// were computed with other settings.
fn ensure_cache(m: &mut CorpusManifest) -> Result<()> {
    let cfg = mfcc_config();
    let fresh = m.norm_stats.is_some()
        && m.mfcc.as_deref() == Some(cfg.fingerprint().as_str())
        && Split::ALL.iter().all(|&s| m.split(s).iter().all(|r| r.features.is_some()));
    if !fresh {
        cache_features(m, &cfg)?;
        m.save()?;
    }
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs) -> Result<String> {
    let mut spec = match &a.spec {
        Some(p) => SynthSpec::from_kv(&KvDoc::load(p)?)?,
        None => SynthSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let m = generate_synthetic(&spec, &a.out)?;
    let mut rec = RunRecord::new("synth", spec.to_kv_string(), spec.seed, BTreeMap::new());
    rec.outputs.insert("manifest".into(), MANIFEST_FILE.into());
    for (s, n) in m.counts() {
        rec.metrics.insert(format!("{}_utterances", s.name()), n as f64);
    }
    rec.save(&a.out.join("synth.run.json"))?;
    let c = m.counts();
    Ok(format!(
        "wrote {} utterances ({} train, {} val, {} test) with {} classes to {}\n",
        m.len(),
        c[&Split::Train],
        c[&Split::Val],
        c[&Split::Test],
        spec.classes,
        a.out.display()
    ))
}

pub fn cmd_cache(a: &CacheArgs) -> Result<String> {
    let mut m = open_corpus(&a.corpus)?;
    let report = cache_features(&mut m, &mfcc_config())?;
    m.save()?;
    let mut s = format!("features: {} computed, {} cached\n", report.computed, report.hits);
    for e in &report.errors {
        let _ = writeln!(s, "skipped {}: {}", e.path.display(), e.message);
    }
    if let Some(p) = &m.norm_provenance {
        let _ = writeln!(s, "normalization fitted on {p}");
    }
    Ok(s)
}

/// Model config plus the `train.` section of the same file.
fn load_run_config(path: &Path, seed: Option<u64>, max_epochs: Option<usize>) -> Result<(KvDoc, TrainConfig)> {
    let doc = KvDoc::load(path)?;
    let mut tc = TrainConfig::from_kv(&doc.section("train"))?;
    if let Some(s) = seed {
        tc.seed = s;
    }
    if let Some(e) = max_epochs {
        tc.max_epochs = e;
    }
    tc.validate()?;
    Ok((doc.without_section("train"), tc))
}

fn resolve_modality(base: ModelConfig, requested: Option<&str>) -> Result<ModelConfig> {
    let target: Modality = match requested {
        Some(s) => s.parse()?,
        None => return Ok(base),
    };
    match (target.is_fused(), base.modality.is_fused()) {
        (false, true) => {
            let sub = if target == Modality::Acoustic { &base.acoustic } else { &base.visual };
            Ok(sub.as_deref().cloned().expect("fused configs carry both sub-configs"))
        }
        (false, false) if target == base.modality => Ok(base),
        (true, true) => Ok(ModelConfig { modality: target, ..base }),
        _ => Err(Error::Config(format!("cannot train {target} from a {} config", base.modality))),
    }
}

fn stage_seed(tc: &TrainConfig, modality: Modality) -> TrainConfig {
    let offset = match modality {
        Modality::Acoustic => 0,
        Modality::Visual => 1,
        _ => 2,
    };
    tc.with_seed(tc.seed.wrapping_add(offset))
}

struct Data<'m> {
    manifest: &'m CorpusManifest,
    mfcc: Mfcc,
    classes: usize,
    video: bool,
}

impl Data<'_> {
    fn new(manifest: &CorpusManifest, classes: usize, video: bool) -> Result<Data<'_>> {
        Ok(Data { manifest, mfcc: Mfcc::new(mfcc_config(), manifest.sample_rate.max(1))?, classes, video })
    }

    fn split(&self, split: Split, snr: Snr, seed: u64) -> Result<Vec<Example>> {
        let data = load_split(self.manifest, split, snr, seed, &self.mfcc, self.classes, self.video)?;
        if data.is_empty() {
            return Err(Error::Config(format!("the {} split is empty", split.name())));
        }
        Ok(data)
    }
}

fn train_stage(config: &ModelConfig, train: &[Example], val: &[Example], tc: &TrainConfig, log: &mut MetricsLog) -> Result<Checkpoint> {
    train_single(config, train, val, &stage_seed(tc, config.modality), log)
}

pub fn cmd_train(a: &TrainArgs) -> Result<String> {
    let (doc, tc) = load_run_config(&a.config, a.seed, a.max_epochs)?;
    let config = resolve_modality(ModelConfig::from_kv(&doc)?, a.modality.as_deref())?;
    config.validate()?;
    let schedule: Option<NoiseSchedule> = a.noise_schedule.as_deref().map(str::parse).transpose()?;
    if schedule.is_some() && config.modality != Modality::AudioVisualAttention {
        return Err(Error::Config("--noise-schedule applies to audiovisual_attention runs only".into()));
    }
    if a.all_stages && !config.modality.is_fused() {
        return Err(Error::Config("--all-stages applies to audio-visual runs only".into()));
    }
    let paths = StagePaths::in_dir(&a.out);
    if config.modality.is_fused() && !a.all_stages {
        // Fail before touching the corpus when a prerequisite is missing.
        for p in [&paths.acoustic, &paths.visual] {
            if !p.is_file() {
                return Err(Error::MissingPrerequisite(p.clone()));
            }
        }
    }
    let mut manifest = open_corpus(&a.corpus)?;
    ensure_cache(&mut manifest)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;

    let data = Data::new(&manifest, config.classes, config.modality != Modality::Acoustic)?;
    let train = data.split(Split::Train, Snr::Clean, tc.seed)?;
    let val = data.split(Split::Val, Snr::Clean, tc.seed)?;
    let mut log = MetricsLog::new();
    let mut ckpt = if !config.modality.is_fused() {
        train_stage(&config, &train, &val, &tc, &mut log)?
    } else {
        let (ac, vc) = (config.acoustic.as_deref().unwrap(), config.visual.as_deref().unwrap());
        if a.all_stages {
            let mut c = train_stage(ac, &train, &val, &tc, &mut log)?;
            c.meta.norm_stats = manifest.norm_stats.clone();
            save_checkpoint(&paths.acoustic, &c)?;
            let mut c = train_stage(vc, &train, &val, &tc, &mut log)?;
            c.meta.norm_stats = manifest.norm_stats.clone();
            save_checkpoint(&paths.visual, &c)?;
        }
        let ftc = stage_seed(&tc, config.modality);
        match &schedule {
            None => train_fused_stage(&config, &paths, config.modality == Modality::AudioVisualAttention, &train, &val, &ftc, &mut log)?,
            Some(s) => {
                let sa = load_checkpoint(&paths.acoustic, Some(ac))?;
                let sv = load_checkpoint(&paths.visual, Some(vc))?;
                let fused = build_audiovisual(&config, &sa, &sv, true, &mut Rng::new(ftc.seed).derive(0x1417))?;
                let mut make = |snr: Snr| -> Result<(Vec<Example>, Vec<Example>)> {
                    if snr == Snr::Clean {
                        return Ok((train.clone(), val.clone()));
                    }
                    Ok((data.split(Split::Train, snr, ftc.seed)?, data.split(Split::Val, snr, ftc.seed)?))
                };
                let mut c = train_noise_schedule(&config, fused, &mut make, s, &ftc, &mut log)?;
                let mut stages = sa.meta.stages.clone();
                stages.extend(sv.meta.stages.iter().cloned());
                stages.append(&mut c.meta.stages);
                c.meta.stages = stages;
                c
            }
        }
    };
    ckpt.meta.norm_stats = manifest.norm_stats.clone();
    let name = config.modality.to_string();
    let ckpt_path = a.out.join(format!("{name}.ckpt"));
    save_checkpoint(&ckpt_path, &ckpt)?;
    let metrics_path = a.out.join(format!("{name}.metrics.csv"));
    log.write(&metrics_path)?;

    let test = data.split(Split::Test, Snr::Clean, tc.seed)?;
    let (_, train_acc) = evaluate_split(&ckpt.graph, &train)?;
    let (val_loss, val_acc) = evaluate_split(&ckpt.graph, &val)?;
    let (_, test_acc) = evaluate_split(&ckpt.graph, &test)?;

    let mut snapshot = config.to_kv_string();
    for line in tc.to_kv_string().lines() {
        let _ = writeln!(snapshot, "train.{line}");
    }
    let mut inputs = BTreeMap::from([
        ("corpus".to_string(), a.corpus.display().to_string()),
        ("modality".to_string(), name.clone()),
        ("all_stages".to_string(), a.all_stages.to_string()),
    ]);
    if let Some(s) = &schedule {
        inputs.insert("noise_schedule".into(), s.to_string());
    }
    let mut rec = RunRecord::new("train", snapshot, tc.seed, inputs);
    rec.outputs.insert("checkpoint".into(), PathBuf::from(format!("{name}.ckpt")));
    rec.outputs.insert("metrics".into(), PathBuf::from(format!("{name}.metrics.csv")));
    rec.metrics.insert("train_accuracy".into(), train_acc);
    rec.metrics.insert("val_accuracy".into(), val_acc);
    rec.metrics.insert("val_loss".into(), val_loss);
    rec.metrics.insert("test_accuracy".into(), test_acc);
    rec.metrics.insert("best_epoch".into(), ckpt.meta.epoch as f64);
    rec.save(&a.out.join(format!("{name}.run.json")))?;

    let mut s = format!(
        "{name}: best epoch {}, accuracy train {train_acc:.2}% val {val_acc:.2}% test {test_acc:.2}%\n",
        ckpt.meta.epoch
    );
    for st in &ckpt.meta.stages {
        for w in &st.warnings {
            let _ = writeln!(s, "warning [{}]: {w}", st.name);
        }
    }
    let _ = writeln!(s, "checkpoint {}", ckpt_path.display());
    Ok(s)
}

/// One line of the noise-sweep CSV. Weights are empty for models without
/// an attention network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub snr: String,
    pub accuracy: f64,
    pub viseme_accuracy: Option<f64>,
    pub mean_wa: Option<f64>,
    pub mean_wv: Option<f64>,
    pub midpoints: usize,
}

impl NoiseRow {
    pub fn parse_csv(text: &str) -> Result<Vec<NoiseRow>> {
        csv::Reader::from_reader(text.as_bytes()).deserialize().map(|r| r.map_err(csv_err)).collect()
    }
}

fn evaluate_noise_level(graph: &ModelGraph, data: &[Example], snr: Snr, classes: usize) -> Result<NoiseRow> {
    let (mut preds, mut golds) = (Vec::new(), Vec::new());
    let (mut wa, mut wv, mut nw) = (0.0, 0.0, 0usize);
    for ex in data {
        let e = graph.evaluate(ex)?;
        preds.extend(e.predictions);
        golds.extend_from_slice(&ex.labels);
        if let Some(w) = e.weights {
            for r in 0..w.rows() {
                wa += w.row(r)[0];
                wv += w.row(r)[1];
                nw += 1;
            }
        }
    }
    let viseme_accuracy = if classes <= PHONEME_COUNT {
        let map = VisemeMap::standard();
        Some(frame_accuracy(&to_visemes(&preds, map)?, &to_visemes(&golds, map)?)?)
    } else {
        None
    };
    Ok(NoiseRow {
        snr: snr.to_string(),
        accuracy: frame_accuracy(&preds, &golds)?,
        viseme_accuracy,
        mean_wa: (nw > 0).then(|| wa / nw as f64),
        mean_wv: (nw > 0).then(|| wv / nw as f64),
        midpoints: golds.len(),
    })
}

pub fn cmd_eval_noise(a: &EvalNoiseArgs) -> Result<String> {
    let ckpt = load_checkpoint(&a.checkpoint, None)?;
    let levels: Vec<Snr> = a.snr.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect::<Result<_>>()?;
    if levels.is_empty() {
        return Err(Error::Parameter("no SNR levels given".into()));
    }
    let mut manifest = open_corpus(&a.corpus)?;
    ensure_cache(&mut manifest)?;
    let modality = ckpt.graph.modality();
    let data = Data::new(&manifest, ckpt.graph.classes(), modality != Modality::Acoustic)?;
    let mut rows = Vec::with_capacity(levels.len());
    for &snr in &levels {
        let test = data.split(Split::Test, snr, a.seed)?;
        rows.push(evaluate_noise_level(&ckpt.graph, &test, snr, ckpt.graph.classes())?);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let text = String::from_utf8(w.into_inner().map_err(csv_err)?).map_err(csv_err)?;
    write_text(&a.out, &text)?;
    let dir = a.out.parent().unwrap_or(Path::new(""));
    write_text(&dir.join("plot_noise.py"), PLOT_NOISE)?;

    let inputs = BTreeMap::from([
        ("checkpoint".to_string(), a.checkpoint.display().to_string()),
        ("corpus".to_string(), a.corpus.display().to_string()),
        ("snr".to_string(), a.snr.clone()),
    ]);
    let mut rec = RunRecord::new("eval-noise", ckpt.config.to_kv_string(), a.seed, inputs);
    rec.outputs.insert("csv".into(), a.out.file_name().map(PathBuf::from).unwrap_or_default());
    for r in &rows {
        rec.metrics.insert(format!("accuracy@{}", r.snr), r.accuracy);
        if let Some(v) = r.mean_wv {
            rec.metrics.insert(format!("mean_wv@{}", r.snr), v);
        }
    }
    rec.save(&a.out.with_extension("run.json"))?;

    let mut s = format!("{modality} checkpoint {}\n{:>8} {:>9} {:>8} {:>8}\n", a.checkpoint.display(), "snr", "accuracy", "w_a", "w_v");
    for r in &rows {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        let _ = writeln!(s, "{:>8} {:>8.2}% {:>8} {:>8}", r.snr, r.accuracy, f(r.mean_wa), f(r.mean_wv));
    }
    Ok(s)
}

fn parse_fc(spec: &str) -> Result<(usize, usize)> {
    let bad = || Error::Parameter(format!("--fc expects INxOUT, got `{spec}`"));
    let (i, o) = spec.split_once(['x', 'X']).ok_or_else(bad)?;
    let (i, o): (usize, usize) = (i.trim().parse().map_err(|_| bad())?, o.trim().parse().map_err(|_| bad())?);
    if i == 0 || o == 0 {
        return Err(bad());
    }
    Ok((i, o))
}

pub fn cmd_resources(a: &ResourcesArgs) -> Result<String> {
    let report = if let Some(p) = &a.config {
        Some(count_config(&ModelConfig::load(p)?)?)
    } else if let Some(p) = &a.checkpoint {
        Some(count_resources(&load_checkpoint(p, None)?.graph)?)
    } else if let Some(fc) = &a.fc {
        let (i, o) = parse_fc(fc)?;
        Some(count_fc(i, o))
    } else {
        None
    };
    let discrepancy = a.discrepancy.then(acoustic_discrepancy_report).transpose()?;
    let mut s = String::new();
    if let Some(r) = &report {
        s += &r.to_table();
    }
    if let Some(d) = &discrepancy {
        if !s.is_empty() {
            s.push('\n');
        }
        s += &d.to_table();
    }
    if let Some(path) = &a.json {
        let value = serde_json::json!({ "schema": 1, "report": report, "discrepancy": discrepancy });
        write_text(path, &(serde_json::to_string_pretty(&value)? + "\n"))?;
    }
    Ok(s)
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<String> {
    let (doc, tc) = load_run_config(&a.grid, a.seed, None)?;
    let grid = SweepGrid::from_kv(&doc)?;
    let configs = grid.configs();
    let mut manifest = open_corpus(&a.corpus)?;
    ensure_cache(&mut manifest)?;
    let points_dir = a.out.join("points");
    std::fs::create_dir_all(&points_dir).map_err(|e| Error::io(&points_dir, e))?;

    let base = &grid.base;
    let data = Data::new(&manifest, base.classes, base.modality != Modality::Acoustic)?;
    let train = data.split(Split::Train, Snr::Clean, tc.seed)?;
    let val = data.split(Split::Val, Snr::Clean, tc.seed)?;
    let test = data.split(Split::Test, Snr::Clean, tc.seed)?;
    let corpus = a.corpus.display().to_string();
    let (mut trained, mut resumed) = (0usize, 0usize);
    let mut runner = |c: &ModelConfig| -> Result<f64> {
        let label = point_label(c);
        let mut snapshot = c.to_kv_string();
        for line in tc.to_kv_string().lines() {
            let _ = writeln!(snapshot, "train.{line}");
        }
        let inputs = BTreeMap::from([("corpus".to_string(), corpus.clone())]);
        let mut rec = RunRecord::new("sweep-point", snapshot, tc.seed, inputs);
        let rec_path = points_dir.join(format!("{label}.run.json"));
        if let Ok(done) = RunRecord::load(&rec_path) {
            if let (true, Some(&acc)) = (done.run_id == rec.run_id, done.metrics.get("test_accuracy")) {
                resumed += 1;
                return Ok(acc);
            }
        }
        let mut log = MetricsLog::new();
        let ckpt = train_stage(c, &train, &val, &tc, &mut log)?;
        let (_, acc) = evaluate_split(&ckpt.graph, &test)?;
        save_checkpoint(&points_dir.join(format!("{label}.ckpt")), &ckpt)?;
        log.write(&points_dir.join(format!("{label}.metrics.csv")))?;
        rec.outputs.insert("checkpoint".into(), format!("{label}.ckpt").into());
        rec.outputs.insert("metrics".into(), format!("{label}.metrics.csv").into());
        rec.metrics.insert("test_accuracy".into(), acc);
        rec.save(&rec_path)?;
        trained += 1;
        Ok(acc)
    };
    let result = pareto_sweep(&configs, &mut runner)?;
    let points = result.points();
    audit_frontier(&points, &result.frontier).map_err(|e| Error::Training(format!("frontier audit failed: {e}")))?;
    write_text(&a.out.join("sweep.csv"), &result.points_csv()?)?;
    write_text(&a.out.join("frontier.csv"), &result.frontier_csv()?)?;
    write_text(&a.out.join("plot_sweep.py"), PLOT_SWEEP)?;

    let mut snapshot = std::fs::read_to_string(&a.grid).map_err(|e| Error::io(&a.grid, e))?;
    let _ = write!(snapshot, "# resolved\n{}", tc.to_kv_string());
    let mut rec = RunRecord::new("sweep", snapshot, tc.seed, BTreeMap::from([("corpus".to_string(), corpus.clone())]));
    for (k, v) in [("sweep", "sweep.csv"), ("frontier", "frontier.csv"), ("plot", "plot_sweep.py")] {
        rec.outputs.insert(k.into(), v.into());
    }
    rec.metrics.insert("points".into(), points.len() as f64);
    rec.metrics.insert("frontier".into(), result.frontier.len() as f64);
    rec.metrics.insert("failed".into(), result.outcomes.iter().filter(|o| o.error.is_some()).count() as f64);
    rec.save(&a.out.join("sweep.run.json"))?;

    let mut s = format!("{} points ({trained} trained, {resumed} resumed), {} on the frontier\n", points.len(), result.frontier.len());
    let _ = writeln!(s, "{:<24} {:>9} {:>14} {:>12}  frontier", "label", "accuracy", "FLOP/s", "bytes");
    for (i, o) in result.outcomes.iter().enumerate() {
        let p = &o.point;
        let _ = writeln!(s, "{:<24} {:>8.2}% {:>14} {:>12}  {}", p.label, p.accuracy, p.flops, p.size_bytes, if result.frontier.contains(&i) { "*" } else { "" });
        if let Some(e) = &o.error {
            let _ = writeln!(s, "  failed: {e}");
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fc_argument() {
        assert_eq!(parse_fc("39x10").unwrap(), (39, 10));
        for bad in ["39", "0x3", "ax3", "3x"] {
            assert!(parse_fc(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn modality_resolution() {
        let a = ModelConfig::acoustic(1, 8, 5);
        let v = ModelConfig::visual(1, 8, 5, avsr::models::parse_conv_stack("p2").unwrap(), false);
        let av = ModelConfig::audiovisual(a.clone(), v.clone(), vec![8], Some(vec![8]));
        assert_eq!(resolve_modality(av.clone(), Some("acoustic")).unwrap(), a);
        assert_eq!(resolve_modality(av.clone(), Some("visual")).unwrap(), v);
        assert_eq!(resolve_modality(av.clone(), Some("audiovisual")).unwrap().modality, Modality::AudioVisual);
        assert!(resolve_modality(a.clone(), Some("visual")).is_err());
        assert!(resolve_modality(a, Some("audiovisual")).is_err());
    }
}
