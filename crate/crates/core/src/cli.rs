//! The `loadmon` command-line front end.
//!
//! Every command writes a run manifest (`*.manifest.cfg` beside a file
//! output, `manifest.cfg` inside a directory output) recording its inputs,
//! outputs with SHA-256 checksums, seed and timings. Exit codes: 0 success,
//! 1 usage or configuration error, 2 data error, 3 numeric abort.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::dataio::{
    align, extract_activation_profile, forward_fill_resample, ingest_csv, make_segments, read_load_params, read_profile_csv,
    synth_household, table1_loads, write_profile_csv, write_series_csv, ActivationProfile, CsvSchema, Fold,
    LoadParams, SegmentSet, SignalSeries, Standardizer, SynthConfig,
};
use crate::error::{config_err, data_err, Error, Result};
use crate::kv::KvDoc;
use crate::metrics::{compute_report, report_csv, report_kv, tabulate_states, trivial_classifier_audit, MetricReport};
use crate::model::{build_model, load_checkpoint, save_checkpoint, Checkpoint, Model, ModelConfig, MAGIC};
use crate::real::{DType, Real};
use crate::train::{train_loop, TrainRunConfig};

#[derive(Debug, Parser)]
#[command(name = "loadmon", version, about = "Single-load activation monitoring from aggregate power")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate a load's on/off profile from its sub-metered power.
    ExtractGt(ExtractGtArgs),
    /// Generate a synthetic household split into train/val/eval folds.
    Synth(SynthArgs),
    /// Train a model for one load on a fold-structured dataset.
    Train(TrainArgs),
    /// Predict per-sample posteriors and states from aggregate power.
    Predict(PredictArgs),
    /// Score a predicted profile against a reference profile.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct ExtractGtArgs {
    /// Sub-metered power CSV (`timestamp,watts`).
    #[arg(long)]
    pub input: PathBuf,
    /// Load code, e.g. FR or KT.
    #[arg(long)]
    pub load: String,
    /// Load-parameter CSV; the shipped table is used when omitted.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Sample period of the input in seconds.
    #[arg(long, default_value_t = 1.0)]
    pub period: f64,
    /// Forward-fill to this period (seconds) before extraction.
    #[arg(long, default_value_t = 1.0)]
    pub resample_to: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Household config ([household] and [appliance.CODE] sections).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; receives train/, val/ and eval/.
    #[arg(long)]
    pub out: PathBuf,
    /// Fractions of the trace assigned to train, validation and evaluation.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.25, 0.25])]
    pub split: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory with train/ and val/ folds.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub load: String,
    /// Model preset: desk, paper or tiny.
    #[arg(long, default_value = "desk")]
    pub preset: String,
    /// Model config file; overrides --preset.
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    /// Run config file with a [train] section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value = "f32")]
    pub precision: String,
    /// Record that the run must be bit-reproducible. Execution is always
    /// sequential with fixed reduction order, so this only documents intent.
    #[arg(long)]
    pub deterministic: bool,
    /// Output directory for model.ckpt, history.csv and manifest.cfg.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Aggregate power CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Sample period of the input in seconds.
    #[arg(long, default_value_t = 1.0)]
    pub period: f64,
    /// Forward-fill to this period (seconds) before prediction.
    #[arg(long, default_value_t = 1.0)]
    pub resample_to: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted profile CSV.
    #[arg(long)]
    pub pred: PathBuf,
    /// Reference profile CSV.
    #[arg(long)]
    pub truth: PathBuf,
    /// Report path stem: writes STEM.csv and STEM.cfg.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "load")]
    pub label: String,
    /// Also score the always-off and always-on predictors.
    #[arg(long)]
    pub audit: bool,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, S>(args: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            let _ = e.print();
            std::process::exit(0)
        }
        _ => Error::Config(e.to_string()),
    })?;
    match cli.command {
        Command::ExtractGt(a) => cmd_extract_gt(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Eval(a) => cmd_eval(&a),
    }
}

/// SHA-256 of a file, hex encoded.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct Manifest {
    doc: KvDoc,
    started: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Manifest {
    fn new(command: &str) -> Self {
        let mut doc = KvDoc::new();
        let unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        doc.section_mut("run")
            .set("command", command)
            .set("version", concat!("loadmon-v", env!("CARGO_PKG_VERSION")))
            .set("started_unix", unix);
        Manifest {
            doc,
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn set(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.doc.section_mut("run").set(key, value);
        self
    }

    fn summary(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.doc.section_mut("summary").set(key, value);
        self
    }

    fn write(mut self, path: &Path) -> Result<()> {
        for (sec, files) in [("inputs", &self.inputs), ("outputs", &self.outputs)] {
            self.doc.section_mut(sec);
            for (i, f) in files.iter().enumerate() {
                let sum = file_sha256(f)?;
                self.doc
                    .section_mut(sec)
                    .set(&format!("file{i}"), f.display())
                    .set(&format!("sha256_{i}"), sum);
            }
        }
        self.doc
            .section_mut("timing")
            .set("wall_s", format!("{:.3}", self.started.elapsed().as_secs_f64()));
        fs::write(path, self.doc.to_string()).map_err(|e| Error::io(path, e))
    }
}

fn manifest_beside(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.manifest.cfg"))
}

fn read_kv(path: &Path) -> Result<KvDoc> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    KvDoc::parse(&text).map_err(|e| config_err!("{}: {e}", path.display()))
}

/// Ingests a trace and forward-fills every piece to `target` seconds.
fn ingest_resampled(path: &Path, period: f64, target: f64) -> Result<Vec<SignalSeries>> {
    ingest_csv(path, &schema(period))?
        .series
        .iter()
        .map(|s| forward_fill_resample(s, target))
        .collect()
}

fn schema(period: f64) -> CsvSchema {
    CsvSchema {
        period,
        ..CsvSchema::default()
    }
}

fn load_params(code: &str, file: Option<&Path>) -> Result<LoadParams> {
    let table = match file {
        Some(f) => read_load_params(f)?,
        None => table1_loads(),
    };
    table
        .into_iter()
        .find(|l| l.code == code)
        .ok_or_else(|| config_err!("no parameters for load `{code}`"))
}

pub fn cmd_extract_gt(a: &ExtractGtArgs) -> Result<()> {
    let mut man = Manifest::new("extract-gt");
    let params = load_params(&a.load, a.params.as_deref())?;
    let series = ingest_resampled(&a.input, a.period, a.resample_to)?;
    let profiles = series
        .iter()
        .map(|s| extract_activation_profile(s, &params))
        .collect::<Result<Vec<_>>>()?;
    let parts: Vec<_> = profiles.iter().map(|p| (p, None)).collect();
    write_profile_csv(&a.out, &parts)?;
    let n: usize = profiles.iter().map(ActivationProfile::len).sum();
    let on: usize = profiles.iter().map(|p| p.states.iter().filter(|&&s| s).count()).sum();
    let activations: usize = profiles.iter().map(ActivationProfile::activation_count).sum();
    let fraction = on as f64 / n as f64;
    println!("{}: {n} samples, {on} on ({fraction:.4}), {activations} activations", a.load);
    man.set("load", &a.load)
        .summary("samples", n)
        .summary("on_samples", on)
        .summary("on_fraction", fraction)
        .summary("activations", activations)
        .summary("pieces", profiles.len());
    man.inputs.push(a.input.clone());
    man.outputs.push(a.out.clone());
    man.write(&manifest_beside(&a.out))
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut man = Manifest::new("synth");
    let cfg = match &a.config {
        Some(p) => {
            man.inputs.push(p.clone());
            SynthConfig::from_kv(&read_kv(p)?)?
        }
        None => SynthConfig::default(),
    };
    if a.split.len() != 3 || a.split.iter().any(|f| !(*f >= 0.0)) || (a.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(config_err!("--split needs three non-negative fractions summing to 1"));
    }
    let house = synth_household(&cfg, a.seed)?;
    let n = house.aggregate.len();
    let b1 = (a.split[0] * n as f64).round() as usize;
    let b2 = ((a.split[0] + a.split[1]) * n as f64).round() as usize;
    let ranges = [(Fold::Train, 0, b1), (Fold::Validation, b1, b2), (Fold::Evaluation, b2, n)];
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let cfg_path = a.out.join("household.cfg");
    fs::write(&cfg_path, cfg.to_kv().to_string()).map_err(|e| Error::io(&cfg_path, e))?;
    man.outputs.push(cfg_path);
    for (fold, from, to) in ranges {
        if from == to {
            continue;
        }
        let dir = a.out.join(fold.dir_name());
        let agg = dir.join("aggregate.csv");
        write_series_csv(&agg, &house.aggregate.slice(from, to))?;
        man.outputs.push(agg);
        for (code, s) in &house.loads {
            let p = dir.join(format!("{code}.csv"));
            write_series_csv(&p, &s.slice(from, to))?;
            man.outputs.push(p);
        }
        man.summary(&format!("{}_samples", fold.dir_name()), to - from);
    }
    man.set("seed", a.seed);
    println!("wrote {n} samples for {} appliances to {}", house.loads.len(), a.out.display());
    man.write(&a.out.join("manifest.cfg"))
}

/// Aligned `(aggregate, sub-metered)` pieces of one fold.
fn fold_pairs(dir: &Path, load: &str, period: f64) -> Result<Vec<(SignalSeries, SignalSeries)>> {
    let agg = ingest_csv(&dir.join("aggregate.csv"), &schema(period))?;
    let sub = ingest_csv(&dir.join(format!("{load}.csv")), &schema(period))?;
    let mut out = Vec::new();
    for a in &agg.series {
        for s in &sub.series {
            if let Ok(pair) = align(a, s) {
                out.push(pair);
            }
        }
    }
    if out.is_empty() {
        return Err(data_err!("{}: aggregate and {load} traces do not overlap", dir.display()));
    }
    Ok(out)
}

fn fold_segments(
    pairs: &[(SignalSeries, SignalSeries)],
    params: &LoadParams,
    window: usize,
    scaler: &Standardizer,
    fold: Fold,
) -> Result<SegmentSet> {
    let mut set = SegmentSet::empty(window, fold);
    for (x, sub) in pairs {
        if x.len() < window {
            continue;
        }
        let truth = extract_activation_profile(sub, params)?;
        set.extend(make_segments(x, &truth, window, scaler, fold)?)?;
    }
    Ok(set)
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    match a.precision.parse::<DType>()? {
        DType::F32 => train_typed::<f32>(a),
        DType::F64 => train_typed::<f64>(a),
    }
}

fn train_typed<T: Real>(a: &TrainArgs) -> Result<()> {
    let mut man = Manifest::new("train");
    let model_cfg = match &a.model_config {
        Some(p) => {
            man.inputs.push(p.clone());
            ModelConfig::from_kv(&read_kv(p)?)?
        }
        None => ModelConfig::preset(&a.preset)?,
    };
    let mut run = match &a.config {
        Some(p) => {
            man.inputs.push(p.clone());
            TrainRunConfig::from_kv(&read_kv(p)?)?
        }
        None => TrainRunConfig::default(),
    };
    if let Some(s) = a.seed {
        run.seed = s;
    }
    if let Some(e) = a.epochs {
        run.epochs = e;
    }
    if let Some(b) = a.batch_size {
        run.batch_size = b;
    }
    if let Some(lr) = a.lr {
        run.optimizer.lr = lr;
    }
    run.validate()?;
    let params = load_params(&a.load, a.params.as_deref())?;
    let window = model_cfg.window_len;

    let train_pairs = fold_pairs(&a.data.join(Fold::Train.dir_name()), &a.load, 1.0)?;
    let aggs: Vec<&SignalSeries> = train_pairs.iter().map(|(x, _)| x).collect();
    let scaler = Standardizer::fit(&aggs)?;
    let train_set = fold_segments(&train_pairs, &params, window, &scaler, Fold::Train)?;
    if train_set.is_empty() {
        return Err(data_err!("training fold is shorter than one {window}-sample window"));
    }
    let val_dir = a.data.join(Fold::Validation.dir_name());
    let val_set = if val_dir.join("aggregate.csv").exists() {
        Some(fold_segments(&fold_pairs(&val_dir, &a.load, 1.0)?, &params, window, &scaler, Fold::Validation)?)
    } else {
        None
    };
    for p in [a.data.join("train/aggregate.csv"), a.data.join(format!("train/{}.csv", a.load))] {
        man.inputs.push(p);
    }

    let mut model: Model<T> = build_model(&model_cfg, run.seed)?;
    model.scaler = scaler;
    if !a.quiet {
        eprintln!(
            "training {} on {} segments ({} validation), {} parameters",
            a.load,
            train_set.len(),
            val_set.as_ref().map_or(0, SegmentSet::len),
            model.parameter_count()
        );
    }
    let quiet = a.quiet;
    let outcome = train_loop(model, &train_set, val_set.as_ref(), &run, |r| {
        if !quiet {
            let v = r.val_loss.map_or_else(|| "NA".into(), |v| format!("{v:.5}"));
            eprintln!("epoch {:>3}  train {:.5}  val {v}  {:.1}s", r.epoch, r.train_loss, r.wall_s);
        }
    })?;

    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut ck = Checkpoint::new(outcome.model);
    ck.meta.epoch = outcome.best_epoch;
    ck.meta.seed = run.seed;
    ck.meta.load = a.load.clone();
    ck.meta.train_loss = outcome.history.train_losses();
    ck.meta.val_loss = outcome.history.val_losses();
    ck.meta.optim_step = Some(outcome.optim.t);
    ck.extra = outcome.optim.to_tensors();
    let ck_path = a.out.join("model.ckpt");
    save_checkpoint(&ck_path, &ck)?;
    let hist_path = a.out.join("history.csv");
    fs::write(&hist_path, outcome.history.to_csv()).map_err(|e| Error::io(&hist_path, e))?;
    let run_path = a.out.join("run.cfg");
    fs::write(&run_path, run.to_kv().to_string()).map_err(|e| Error::io(&run_path, e))?;
    man.outputs.extend([ck_path, hist_path, run_path]);
    man.set("load", &a.load)
        .set("seed", run.seed)
        .set("precision", T::DTYPE.name())
        .set("deterministic", a.deterministic)
        .set("preset", a.model_config.as_ref().map_or(a.preset.as_str(), |_| "custom"))
        .summary("best_epoch", outcome.best_epoch)
        .summary("epochs_run", outcome.history.records.len() - 1)
        .summary("parameters", ck.model.parameter_count());
    if let Some(why) = &outcome.aborted {
        man.summary("aborted", why);
    }
    man.write(&a.out.join("manifest.cfg"))?;
    match outcome.aborted {
        Some(why) => Err(Error::Numeric(format!(
            "{why}; last good model (epoch {}) saved to {}",
            outcome.best_epoch,
            a.out.join("model.ckpt").display()
        ))),
        None => Ok(()),
    }
}

/// Precision stored in a checkpoint header.
fn checkpoint_dtype(path: &Path) -> Result<DType> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 9 || &bytes[..4] != MAGIC {
        return Err(Error::Integrity(format!("{}: not a checkpoint file", path.display())));
    }
    DType::from_tag(bytes[8]).ok_or_else(|| Error::Integrity(format!("{}: unknown precision", path.display())))
}

pub fn cmd_predict(a: &PredictArgs) -> Result<()> {
    match checkpoint_dtype(&a.checkpoint)? {
        DType::F32 => predict_typed::<f32>(a),
        DType::F64 => predict_typed::<f64>(a),
    }
}

/// Written posteriors are kept strictly inside (0, 1).
const POSTERIOR_CLAMP: f64 = 1e-7;

fn predict_typed<T: Real>(a: &PredictArgs) -> Result<()> {
    let mut man = Manifest::new("predict");
    let ck = load_checkpoint::<T>(&a.checkpoint)?;
    let series = ingest_resampled(&a.input, a.period, a.resample_to)?;
    let load = if ck.meta.load.is_empty() { "load" } else { ck.meta.load.as_str() };
    let mut profiles = Vec::new();
    let mut posts = Vec::new();
    for s in &series {
        let post: Vec<f64> = ck
            .model
            .posterior_series(s, 16)?
            .into_iter()
            .map(|p| p.clamp(POSTERIOR_CLAMP, 1.0 - POSTERIOR_CLAMP))
            .collect();
        let states = post.iter().map(|&p| crate::model::decide(p)).collect();
        profiles.push(ActivationProfile::new(states, s.period, s.start, load));
        posts.push(post);
    }
    let parts: Vec<_> = profiles.iter().zip(&posts).map(|(p, g)| (p, Some(g.as_slice()))).collect();
    write_profile_csv(&a.out, &parts)?;
    let n: usize = profiles.iter().map(ActivationProfile::len).sum();
    let on: usize = profiles.iter().map(|p| p.states.iter().filter(|&&s| s).count()).sum();
    println!("{load}: predicted {on} of {n} samples on");
    man.set("load", load)
        .summary("samples", n)
        .summary("on_samples", on)
        .summary("windows", profiles.iter().map(|p| p.len().div_ceil(ck.model.window_len())).sum::<usize>());
    man.inputs.extend([a.checkpoint.clone(), a.input.clone()]);
    man.outputs.push(a.out.clone());
    man.write(&manifest_beside(&a.out))
}

/// Matches two profiles on equal timestamps; both must be sorted.
fn join_profiles(pred: &[(f64, bool)], truth: &[(f64, bool)]) -> (Vec<bool>, Vec<bool>) {
    let (mut i, mut j) = (0, 0);
    let (mut p, mut t) = (Vec::new(), Vec::new());
    while i < pred.len() && j < truth.len() {
        let (a, b) = (pred[i].0, truth[j].0);
        if a == b {
            p.push(pred[i].1);
            t.push(truth[j].1);
            i += 1;
            j += 1;
        } else if a < b {
            i += 1;
        } else {
            j += 1;
        }
    }
    (p, t)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let mut man = Manifest::new("eval");
    let pred = read_profile_csv(&a.pred)?;
    let truth = read_profile_csv(&a.truth)?;
    let (p, t) = join_profiles(&pred, &truth);
    if p.is_empty() {
        return Err(data_err!("prediction and truth share no timestamps"));
    }
    let table = tabulate_states(&p, &t)?;
    let report = compute_report(table);
    let mut rows: Vec<(String, MetricReport)> = vec![(a.label.clone(), report)];
    if a.audit {
        let n = table.total();
        if table.rn() > 0 && table.rp() > 0 {
            let audit = trivial_classifier_audit(table.rn() as f64 / n as f64, n)?;
            rows.push((format!("{}_always_off", a.label), audit.always_negative));
            rows.push((format!("{}_always_on", a.label), audit.always_positive));
        }
    }
    let refs: Vec<(&str, &MetricReport)> = rows.iter().map(|(l, r)| (l.as_str(), r)).collect();
    let csv_path = a.out.with_extension("csv");
    let kv_path = a.out.with_extension("cfg");
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&csv_path, report_csv(&refs)).map_err(|e| Error::io(&csv_path, e))?;
    fs::write(&kv_path, report_kv(&refs).to_string()).map_err(|e| Error::io(&kv_path, e))?;
    let f = |v: Option<f64>| v.map_or_else(|| "NA".into(), |x| format!("{x:.4}"));
    println!(
        "{}: n={} MCC={} f1={} B={} M={} accuracy={}",
        a.label,
        table.total(),
        f(report.mcc),
        f(report.f1),
        f(report.informedness),
        f(report.markedness),
        f(report.accuracy)
    );
    man.set("label", &a.label)
        .summary("matched_samples", p.len())
        .summary("pred_rows", pred.len())
        .summary("truth_rows", truth.len());
    man.inputs.extend([a.pred.clone(), a.truth.clone()]);
    man.outputs.extend([csv_path, kv_path]);
    man.write(&manifest_beside(&a.out))
}
