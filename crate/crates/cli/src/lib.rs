//! Command-line driver: data generation, feature extraction, training,
//! k-fold evaluation and ranking of unpublished candidates.

pub mod data;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use popcast::canon::canonical_json;
use popcast::dataset::synthetic::{generate_synthetic, Cue, SyntheticConfig};
use popcast::eval::{run_experiment, ExperimentData, ExperimentSample, ModelSpec};
use popcast::lrcn::{train_with, AnyLrcn, LabeledFrames, LrcnConfig, LrcnModel};
use popcast::shallow::{svm_grid_search, LogRegOptions, ShallowModel, SvmOptions, MODEL_MAGIC};
use popcast::tensor::checkpoint::MAGIC as LRCN_MAGIC;
use popcast::{Precision, Scalar};

use data::{features_for, load_dataset, open_cache, parse_features, read_manifest, LoadedVideo};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] anyhow::Error),
}

impl From<popcast::Error> for CliError {
    fn from(e: popcast::Error) -> Self {
        CliError::Data(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "popcast", version, about = "Predict video popularity from the first seconds of frames")]
pub struct Cli {
    /// Default seed for every randomised step.
    #[arg(long, global = true, env = "POPCAST_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for within-command parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset (manifest + PPM frames).
    Generate(GenerateArgs),
    /// Compute per-video descriptor vectors into a cache file.
    Extract(ExtractArgs),
    /// Train one model on a whole dataset.
    Train(TrainArgs),
    /// k-fold comparison of several models on one shared split.
    Evaluate(EvaluateArgs),
    /// Order candidate videos by predicted probability of becoming popular.
    Rank(RankArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Mini,
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lrcn,
    Logreg,
    Svm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    Fast,
    High,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::Fast => Precision::Fast,
            PrecisionArg::High => Precision::High,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value = "brightness_trend")]
    pub cue: Cue,
    /// Per-pixel Gaussian noise std as a fraction of the 0..255 range.
    #[arg(long, default_value_t = 0.2)]
    pub noise: f64,
    #[arg(long, default_value_t = 6)]
    pub frames: usize,
    #[arg(long, default_value_t = 40)]
    pub width: usize,
    #[arg(long, default_value_t = 40)]
    pub height: usize,
    /// Replace an existing dataset in a non-empty directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset directory (holding manifest.jsonl) or a manifest file.
    #[arg(long)]
    pub data: PathBuf,
    /// Videos younger than this at crawl time are excluded.
    #[arg(long, default_value_t = 14)]
    pub min_age_days: i64,
    /// Reference date for crawl-date checks (default: today, UTC).
    #[arg(long)]
    pub now: Option<NaiveDate>,
}

impl DataArgs {
    fn now(&self) -> NaiveDate {
        self.now.unwrap_or_else(|| chrono::Utc::now().date_naive())
    }
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated descriptors, fused in the given order.
    #[arg(long, default_value = "hog,gist")]
    pub features: String,
    #[arg(long)]
    pub cache: PathBuf,
    #[arg(long, value_enum, default_value = "mini")]
    pub preset: Preset,
}

#[derive(Debug, Args)]
pub struct LrcnArgs {
    #[arg(long, value_enum, default_value = "mini")]
    pub preset: Preset,
    #[arg(long, value_enum, default_value = "fast")]
    pub precision: PrecisionArg,
    /// Acknowledge that the full-size preset needs cluster-scale compute.
    #[arg(long)]
    pub i_have_a_cluster: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub iterations_per_epoch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

impl LrcnArgs {
    fn config(&self, seed: u64) -> CliResult<LrcnConfig> {
        let mut cfg = match self.preset {
            Preset::Mini => LrcnConfig::mini(),
            Preset::Paper => {
                if !self.i_have_a_cluster {
                    return Err(CliError::Usage(
                        "the paper preset trains 12 x 30000 iterations on 227x227 crops; \
                         pass --i-have-a-cluster to run it anyway"
                            .into(),
                    ));
                }
                LrcnConfig::paper()
            }
        };
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(i) = self.iterations_per_epoch {
            cfg.iterations_per_epoch = i;
        }
        if let Some(lr) = self.lr {
            cfg.lr = lr;
        }
        cfg.seed = seed;
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    fn frames(&self) -> usize {
        match self.preset {
            Preset::Mini => LrcnConfig::mini().frames_per_video,
            Preset::Paper => LrcnConfig::paper().frames_per_video,
        }
    }
}

#[derive(Debug, Args)]
pub struct ShallowArgs {
    #[arg(long, default_value = "hog,gist")]
    pub features: String,
    /// Feature cache to read (and extend) instead of recomputing.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub svm_c: f64,
    /// RBF width; defaults to 1 / dim.
    #[arg(long)]
    pub svm_gamma: Option<f64>,
    /// Choose C and gamma by internal 3-fold cross-validation.
    #[arg(long)]
    pub svm_grid: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub model: ModelKind,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub lrcn: LrcnArgs,
    #[command(flatten)]
    pub shallow: ShallowArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated: lrcn, logreg, svm, oracle, coinflip.
    #[arg(long, default_value = "lrcn,logreg,svm")]
    pub models: String,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub lrcn: LrcnArgs,
    #[command(flatten)]
    pub shallow: ShallowArgs,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub top: Option<usize>,
    /// Frames per candidate for shallow models (LRCN uses its own setting).
    #[arg(long, default_value_t = 6)]
    pub frames: usize,
}

pub fn run(cli: Cli) -> CliResult {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Generate(a) => cmd_generate(a, cli.seed),
        Command::Extract(a) => cmd_extract(a, cli.seed),
        Command::Train(a) => cmd_train(a, cli.seed),
        Command::Evaluate(a) => cmd_evaluate(a, cli.seed),
        Command::Rank(a) => cmd_rank(a),
    }
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> CliResult {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// `<file>.<suffix>` next to `file`.
fn sidecar(file: &Path, suffix: &str) -> PathBuf {
    let mut name = file.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(format!(".{suffix}"));
    file.with_file_name(name)
}

fn ensure_parent(path: &Path) -> CliResult {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    Ok(())
}

fn echo_config(path: &Path, value: &serde_json::Value) -> CliResult {
    write_file(path, canonical_json(value) + "\n")
}

pub fn cmd_generate(a: &GenerateArgs, seed: u64) -> CliResult {
    let cfg = SyntheticConfig {
        n_videos: a.n,
        cue: a.cue,
        noise_level: a.noise,
        seed,
        frames: a.frames,
        width: a.width,
        height: a.height,
    };
    if a.n < 4 {
        return Err(CliError::Usage(format!("--n must be at least 4, got {}", a.n)));
    }
    let non_empty = a.out.is_dir()
        && fs::read_dir(&a.out).with_context(|| format!("reading {}", a.out.display()))?.next().is_some();
    if non_empty {
        if !a.force {
            return Err(CliError::Data(anyhow::anyhow!(
                "{} exists and is not empty; pass --force to replace the dataset in it",
                a.out.display()
            )));
        }
        let frames = a.out.join("frames");
        if frames.exists() {
            fs::remove_dir_all(&frames).with_context(|| format!("removing {}", frames.display()))?;
        }
    }
    let videos = generate_synthetic(&cfg, &a.out)?;
    echo_config(
        &a.out.join("run_config.json"),
        &json!({"command": "generate", "seed": seed, "synthetic": cfg, "out": a.out}),
    )?;
    log::info!("wrote {} videos to {}", videos.len(), a.out.display());
    Ok(())
}

pub fn cmd_extract(a: &ExtractArgs, seed: u64) -> CliResult {
    let set = parse_features(&a.features)?;
    let t = match a.preset {
        Preset::Mini => LrcnConfig::mini().frames_per_video,
        Preset::Paper => LrcnConfig::paper().frames_per_video,
    };
    let manifest = read_manifest(&a.data.data, a.data.min_age_days, a.data.now())?;
    let mut cache = open_cache(Some(&a.cache), &set)?;
    let ids: Vec<&str> = manifest.records.iter().map(|r| r.id.as_str()).collect();
    let complete = cache.descriptor_id == set.id() && ids.iter().all(|id| cache.get(id).is_some());
    if complete {
        log::info!("cache {} already holds all {} videos", a.cache.display(), ids.len());
    } else {
        let videos = load_dataset(&manifest, t)?;
        let (_, changed) = features_for(&videos, &set, &mut cache)?;
        if changed {
            ensure_parent(&a.cache)?;
            cache.write(&a.cache)?;
        }
        log::info!("cached {} x {} features in {}", videos.len(), set.dim(), a.cache.display());
    }
    echo_config(
        &sidecar(&a.cache, "config.json"),
        &json!({
            "command": "extract", "seed": seed, "data": a.data.data, "features": set.id(),
            "dim": set.dim(), "frames": t, "cache": a.cache,
        }),
    )
}

fn lrcn_samples(videos: &[LoadedVideo]) -> Vec<LabeledFrames> {
    videos
        .iter()
        .map(|v| LabeledFrames {
            frames: v.frames.clone(),
            label: v.label,
        })
        .collect()
}

fn train_lrcn<S: Scalar>(cfg: LrcnConfig, videos: &[LoadedVideo], out: &Path) -> CliResult {
    let mut model = LrcnModel::<S>::from_config(cfg)?;
    let total = model.config().total_iterations();
    let every = (total / 20).max(1);
    let partial = sidecar(out, "partial");
    let trained = train_with(&mut model, &lrcn_samples(videos), |it, loss| {
        if it % every == 0 || it == total {
            log::info!("iteration {it}/{total}: loss {loss:.4}");
        }
    });
    let curve = match trained {
        Ok(c) => c,
        Err(e) => {
            let _ = fs::remove_file(&partial);
            return Err(anyhow::Error::from(e).context("training aborted").into());
        }
    };
    write_file(&partial, model.to_checkpoint_bytes())?;
    fs::rename(&partial, out).with_context(|| format!("moving checkpoint to {}", out.display()))?;
    write_file(&sidecar(out, "loss.csv"), curve.to_csv())
}

pub fn cmd_train(a: &TrainArgs, seed: u64) -> CliResult {
    let manifest = read_manifest(&a.data.data, a.data.min_age_days, a.data.now())?;
    ensure_parent(&a.out)?;
    let run_config = match a.model {
        ModelKind::Lrcn => {
            let cfg = a.lrcn.config(seed)?;
            let videos = load_dataset(&manifest, cfg.frames_per_video)?;
            let echo = json!({
                "command": "train", "model": a.model, "seed": seed, "data": a.data.data,
                "precision": Precision::from(a.lrcn.precision), "lrcn": cfg, "out": a.out,
                "videos": videos.len(),
            });
            match Precision::from(a.lrcn.precision) {
                Precision::Fast => train_lrcn::<f32>(cfg, &videos, &a.out)?,
                Precision::High => train_lrcn::<f64>(cfg, &videos, &a.out)?,
            }
            echo
        }
        ModelKind::Logreg | ModelKind::Svm => {
            let set = parse_features(&a.shallow.features)?;
            let videos = load_dataset(&manifest, a.lrcn.frames())?;
            let mut cache = open_cache(a.shallow.cache.as_deref(), &set)?;
            let (x, changed) = features_for(&videos, &set, &mut cache)?;
            if let (Some(p), true) = (&a.shallow.cache, changed) {
                ensure_parent(p)?;
                cache.write(p)?;
            }
            let y: Vec<u8> = videos.iter().map(|v| v.label).collect();
            let curve;
            let options;
            let model = if a.model == ModelKind::Logreg {
                let opts = LogRegOptions {
                    l2: a.shallow.l2,
                    seed,
                    ..LogRegOptions::default()
                };
                let (m, rep) = ShallowModel::train_logreg(&set.id(), &x, &y, &opts)?;
                curve = loss_csv("loss", &rep.losses);
                options = json!({"l2": opts.l2, "epochs": opts.epochs, "grad_tol": opts.grad_tol});
                m
            } else {
                let mut opts = SvmOptions {
                    c: a.shallow.svm_c,
                    gamma: a.shallow.svm_gamma,
                    seed,
                    ..SvmOptions::default()
                };
                if a.shallow.svm_grid {
                    opts = svm_grid_search(&x, &y, &opts)?;
                }
                let (m, rep) = ShallowModel::train_svm(&set.id(), &x, &y, &opts)?;
                curve = loss_csv("dual_objective", &rep.dual_history);
                options = json!({"c": opts.c, "gamma": opts.gamma, "tol": opts.tol, "max_passes": opts.max_passes});
                m
            };
            write_file(&a.out, model.encode())?;
            write_file(&sidecar(&a.out, "loss.csv"), curve)?;
            json!({
                "command": "train", "model": a.model, "seed": seed, "data": a.data.data,
                "features": set.id(), "options": options, "out": a.out, "videos": videos.len(),
            })
        }
    };
    echo_config(&sidecar(&a.out, "config.json"), &run_config)
}

fn loss_csv(column: &str, values: &[f64]) -> String {
    let mut s = format!("iteration,{column}\n");
    for (i, v) in values.iter().enumerate() {
        s.push_str(&format!("{},{v}\n", i + 1));
    }
    s
}

fn parse_models(spec: &str, a: &EvaluateArgs, seed: u64) -> CliResult<Vec<ModelSpec>> {
    let mut out = Vec::new();
    for name in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        out.push(match name {
            "lrcn" => ModelSpec::Lrcn {
                config: a.lrcn.config(seed)?,
                precision: a.lrcn.precision.into(),
            },
            "logreg" => ModelSpec::LogReg {
                l2: a.shallow.l2,
                epochs: LogRegOptions::default().epochs,
            },
            "svm" => ModelSpec::Svm {
                c: a.shallow.svm_c,
                gamma: a.shallow.svm_gamma,
                grid_search: a.shallow.svm_grid,
            },
            "oracle" => ModelSpec::Oracle,
            "coinflip" => ModelSpec::CoinFlip,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown model '{other}'; known models: lrcn, logreg, svm, oracle, coinflip"
                )))
            }
        });
    }
    if out.is_empty() {
        return Err(CliError::Usage("no models given".into()));
    }
    Ok(out)
}

pub fn cmd_evaluate(a: &EvaluateArgs, seed: u64) -> CliResult {
    let models = parse_models(&a.models, a, seed)?;
    if a.k < 2 {
        return Err(CliError::Usage(format!("--k must be at least 2, got {}", a.k)));
    }
    let needs_features = models.iter().any(|m| matches!(m, ModelSpec::LogReg { .. } | ModelSpec::Svm { .. }));
    let set = parse_features(&a.shallow.features)?;
    let manifest = read_manifest(&a.data.data, a.data.min_age_days, a.data.now())?;
    let videos = load_dataset(&manifest, a.lrcn.frames())?;
    let features = if needs_features {
        let mut cache = open_cache(a.shallow.cache.as_deref(), &set)?;
        let (x, changed) = features_for(&videos, &set, &mut cache)?;
        if let (Some(p), true) = (&a.shallow.cache, changed) {
            ensure_parent(p)?;
            cache.write(p)?;
        }
        x.into_iter().map(Some).collect()
    } else {
        vec![None; videos.len()]
    };
    let data = ExperimentData {
        samples: videos
            .into_iter()
            .zip(features)
            .map(|(v, features)| ExperimentSample {
                id: v.id,
                label: v.label,
                score: v.score,
                frames: v.frames,
                features,
            })
            .collect(),
        feature_id: set.id(),
    };
    let report = run_experiment(&data, &models, a.k, seed)?;
    report.write(&a.out)?;
    write_file(&a.out.join("rejections.csv"), manifest.rejection_csv())?;
    echo_config(
        &a.out.join("run_config.json"),
        &json!({
            "command": "evaluate", "seed": seed, "data": a.data.data, "k": a.k,
            "models": models, "features": set.id(), "out": a.out,
        }),
    )?;
    print!("{}", report.to_table());
    Ok(())
}

enum Ranker {
    Lrcn(AnyLrcn),
    Shallow(ShallowModel, popcast::features::DescriptorSet),
}

fn load_ranker(path: &Path) -> anyhow::Result<Ranker> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(LRCN_MAGIC) {
        Ok(Ranker::Lrcn(AnyLrcn::load(path)?))
    } else if bytes.starts_with(MODEL_MAGIC) {
        let m = ShallowModel::decode(&bytes)?;
        let set = data::descriptor_set_for_id(&m.descriptor_id)?;
        Ok(Ranker::Shallow(m, set))
    } else {
        anyhow::bail!("{} is neither an LRCN checkpoint nor a shallow model file", path.display())
    }
}

pub fn cmd_rank(a: &RankArgs) -> CliResult {
    let ranker = load_ranker(&a.model)?;
    let t = match &ranker {
        Ranker::Lrcn(m) => m.config().frames_per_video,
        Ranker::Shallow(..) => a.frames,
    };
    let candidates = data::load_candidates(&a.candidates, t)?;
    if candidates.is_empty() {
        return Err(anyhow::anyhow!("no valid candidate videos under {}", a.candidates.display()).into());
    }
    let mut scored = Vec::with_capacity(candidates.len());
    for (id, frames) in &candidates {
        let p = match &ranker {
            Ranker::Lrcn(m) => m.predict(frames)?.probs[1],
            Ranker::Shallow(m, set) => m.predict_proba(&popcast::features::video_features(frames, set)?.values)?[1],
        };
        scored.push((id.clone(), p));
    }
    let ranked = rank_order(scored);
    let top = a.top.unwrap_or(ranked.len()).min(ranked.len());
    println!("rank\tid\tprobability");
    for (i, (id, p)) in ranked.iter().take(top).enumerate() {
        println!("{}\t{id}\t{p:.6}", i + 1);
    }
    Ok(())
}

/// Descending probability; equal probabilities keep id order.
pub fn rank_order(mut scored: Vec<(String, f64)>) -> Vec<(String, f64)> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored
}
