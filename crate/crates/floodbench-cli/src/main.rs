//! `floodbench` — orchestration front end for the flood-nowcasting
//! benchmark. Subcommands mirror the pipeline stages:
//!
//! * `simulate`   terrain + rainfall -> water-depth frame datasets
//! * `prepare`    frames -> cached training patches
//! * `train`      one model, one method -> checkpoint + history
//! * `eval`       checkpoint or baseline -> per-bucket metric files
//! * `report`     metric files -> box-plot CSV + SVG
//! * `experiment` the full protocol: simulate, train, eval, report
//!
//! Every subcommand accepts `--config <json>` (flags win over file values)
//! and `--seed`, and prints a deterministic run fingerprint: the SHA-256 of
//! its fully resolved configuration. Identical config + seed always yields
//! the identical fingerprint and, for `experiment`, bit-identical reports.
//!
//! The results root defaults to `./results`, overridable with the
//! `FLOODBENCH_RESULTS` environment variable; output path flags never
//! enter the fingerprint.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use floodbench_core::features::{assemble, sample_patches, save_samples, FeatureSpec};
use floodbench_core::io::read_raster;
use floodbench_core::rainfall::{
    load_event_csv, long_catalogue, save_catalogue, short_catalogue, RainEvent,
};
use floodbench_core::raster::mask_from_dem;
use floodbench_core::seed::derive_seed;
use floodbench_core::sim::{load_manifest, run_dataset, Boundary, DatasetManifest, SimConfig};
use floodbench_core::terrain::{synthetic_dem, TerrainKind};
use floodbench_core::{CatchmentMask, Raster};
use floodbench_zoo::error::ZooError;
use floodbench_zoo::eval::{evaluate_event, pool_m_values, EvalConfig, BUCKET_COUNT};
use floodbench_zoo::experiment::{
    event_by_name, preset, preset_names, run_experiment, table2_split, write_event_csv,
    ExperimentConfig,
};
use floodbench_zoo::report::{
    read_m_values, write_m_values, write_report_csv, write_report_svg, ModelReport,
};
use floodbench_zoo::training::{train, write_history_csv, EventData, TrainDataset};
use floodbench_zoo::{Family, Model, ModelSpec, TrainConfig, TrainMethod};

#[derive(Parser)]
#[command(
    name = "floodbench",
    version,
    about = "Desk-scale urban flood nowcasting benchmark",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate rainfall events over a terrain into a frame dataset.
    Simulate(SimulateArgs),
    /// Cut cached training patches from a simulated event.
    Prepare(PrepareArgs),
    /// Train one model with one method on a simulated dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint or baseline on simulated events.
    Eval(EvalArgs),
    /// Combine evaluation directories into a box-plot report.
    Report(ReportArgs),
    /// Run a full experiment protocol end to end.
    Experiment(ExperimentArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let (label, result) = match cli.command {
        Command::Simulate(a) => ("simulate", cmd_simulate(a)),
        Command::Prepare(a) => ("prepare", cmd_prepare(a)),
        Command::Train(a) => ("train", cmd_train(a)),
        Command::Eval(a) => ("eval", cmd_eval(a)),
        Command::Report(a) => ("report", cmd_report(a)),
        Command::Experiment(a) => ("experiment", cmd_experiment(a)),
    };
    if let Err(err) = result {
        eprintln!("floodbench {label}: {err:#}");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// shared plumbing

fn results_root() -> PathBuf {
    std::env::var_os("FLOODBENCH_RESULTS")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"))
}

/// SHA-256 over the subcommand name and its resolved configuration JSON.
/// Struct fields serialize in declaration order and maps sort their keys,
/// so the digest is stable across reruns.
fn fingerprint<T: Serialize>(label: &str, resolved: &T) -> Result<String> {
    let json = serde_json::to_string(resolved)?;
    let mut hasher = Sha256::new();
    hasher.update(label.as_bytes());
    hasher.update(b"\n");
    hasher.update(json.as_bytes());
    Ok(format!("{:x}", hasher.finalize()))
}

fn print_fingerprint(label: &str, resolved: &impl Serialize) -> Result<()> {
    println!("run fingerprint: {}", fingerprint(label, resolved)?);
    Ok(())
}

fn load_config_file<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn parse_family(tag: &str) -> Result<Family> {
    Ok(match tag {
        "no_change" => Family::NoChange,
        "linear_extrap" => Family::LinearExtrap,
        "ar_1x1" => Family::Ar1x1,
        "ar_5x5" => Family::Ar5x5,
        "fcn" => Family::Fcn,
        "autoencoder" => Family::Autoencoder,
        "unet" => Family::Unet,
        "graph" => Family::Graph,
        other => bail!(
            "unknown model family {other:?}; expected one of no_change, linear_extrap, \
             ar_1x1, ar_5x5, fcn, autoencoder, unet, graph"
        ),
    })
}

fn parse_method(tag: &str) -> Result<TrainMethod> {
    Ok(match tag {
        "one_ts" => TrainMethod::OneTs,
        "direct_12ts" => TrainMethod::Direct12Ts,
        "iterative_12ts" => TrainMethod::Iterative12Ts,
        other => bail!(
            "unknown training method {other:?}; expected one_ts, direct_12ts or iterative_12ts"
        ),
    })
}

fn parse_name_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(|x| x.trim().to_string())
        .filter(|x| !x.is_empty())
        .collect()
}

/// Open a simulated dataset directory: manifest, DEM, and mask.
struct Dataset {
    dir: PathBuf,
    manifest: DatasetManifest,
    dem: Raster,
    mask: CatchmentMask,
}

impl Dataset {
    fn open(dir: &Path) -> Result<Self> {
        let manifest = load_manifest(dir)
            .with_context(|| format!("loading manifest from {}", dir.display()))?;
        let dem = read_raster(&dir.join(&manifest.dem))?;
        let mask = mask_from_dem(&dem)?;
        Ok(Dataset {
            dir: dir.to_path_buf(),
            manifest,
            dem,
            mask,
        })
    }

    fn frames(&self, event: &str) -> Result<Vec<Raster>> {
        let rels = self
            .manifest
            .events
            .get(event)
            .with_context(|| format!("event {event:?} not in dataset manifest"))?;
        rels.iter()
            .map(|rel| Ok(read_raster(&self.dir.join(rel))?))
            .collect()
    }

    fn event(&self, name: &str) -> Result<RainEvent> {
        let path = self.dir.join("events").join(format!("{name}.csv"));
        Ok(load_event_csv(&path)
            .with_context(|| format!("loading hyetograph {}", path.display()))?)
    }

    fn event_data(&self, name: &str) -> Result<EventData> {
        Ok(EventData {
            event: self.event(name)?,
            frames: self.frames(name)?,
        })
    }
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Args)]
struct SimulateArgs {
    /// JSON file with the same fields as the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// "synthetic-709", "synthetic-744", or a path to a DEM raster file.
    #[arg(long)]
    dem: Option<String>,
    /// Terrain size for synthetic DEMs.
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    /// "short-catalogue", "long-catalogue", or one event name like tr50_3c1.
    #[arg(long)]
    events: Option<String>,
    /// Dataset name under the output root (defaults from the DEM choice).
    #[arg(long)]
    dataset: Option<String>,
    /// Output frames per event.
    #[arg(long)]
    frames: Option<usize>,
    /// CA sub-steps per output frame.
    #[arg(long)]
    inner_steps: Option<u32>,
    /// CA roughness coefficient in (0, 1].
    #[arg(long)]
    roughness: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; the dataset directory is created beneath it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SimulateFile {
    dem: Option<String>,
    rows: Option<usize>,
    cols: Option<usize>,
    events: Option<String>,
    dataset: Option<String>,
    frames: Option<usize>,
    inner_steps: Option<u32>,
    roughness: Option<f64>,
    seed: Option<u64>,
}

#[derive(Serialize)]
struct SimulateResolved {
    dem: String,
    rows: usize,
    cols: usize,
    events: String,
    dataset: String,
    frames: usize,
    inner_steps: u32,
    roughness: f64,
    seed: u64,
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let file: SimulateFile = load_config_file(&args.config)?;
    let dem_arg = args
        .dem
        .or(file.dem)
        .unwrap_or_else(|| "synthetic-709".into());
    let default_dataset = match dem_arg.as_str() {
        "synthetic-709" => "like709".to_string(),
        "synthetic-744" => "like744".to_string(),
        path => Path::new(path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into()),
    };
    let resolved = SimulateResolved {
        dem: dem_arg,
        rows: args.rows.or(file.rows).unwrap_or(256),
        cols: args.cols.or(file.cols).unwrap_or(256),
        events: args
            .events
            .or(file.events)
            .unwrap_or_else(|| "short-catalogue".into()),
        dataset: args.dataset.or(file.dataset).unwrap_or(default_dataset),
        frames: args.frames.or(file.frames).unwrap_or(61),
        inner_steps: args.inner_steps.or(file.inner_steps).unwrap_or(60),
        roughness: args.roughness.or(file.roughness).unwrap_or(0.5),
        seed: args.seed.or(file.seed).unwrap_or(0),
    };
    let out_root = args.out.unwrap_or_else(|| results_root().join("data"));

    let dem = match resolved.dem.as_str() {
        "synthetic-709" => synthetic_dem(
            TerrainKind::Like709,
            resolved.rows,
            resolved.cols,
            resolved.seed,
        )?,
        "synthetic-744" => synthetic_dem(
            TerrainKind::Like744,
            resolved.rows,
            resolved.cols,
            resolved.seed,
        )?,
        path => read_raster(Path::new(path))
            .with_context(|| format!("reading DEM {path}"))?,
    };
    let mask = mask_from_dem(&dem)?;
    let events: Vec<RainEvent> = match resolved.events.as_str() {
        "short-catalogue" => short_catalogue(resolved.seed),
        "long-catalogue" => long_catalogue(resolved.seed),
        name => vec![event_by_name(name, resolved.seed)?],
    };
    let sim_cfg = SimConfig {
        inner_steps_per_frame: resolved.inner_steps,
        roughness_coefficient: resolved.roughness,
        boundary: Boundary::Closed,
        frames: resolved.frames,
        ..SimConfig::default()
    };
    let dataset_dir = out_root.join(&resolved.dataset);
    let previous = load_manifest(&dataset_dir).ok();
    let mut manifest = run_dataset(&dem, &mask, &events, &sim_cfg, &out_root, &resolved.dataset)?;
    if let Some(prev) = previous {
        // Additional events accumulate in an existing dataset as long as
        // the simulator settings agree.
        if prev.config_hash != manifest.config_hash {
            bail!(
                "dataset {} was simulated with different settings; use a fresh --dataset",
                dataset_dir.display()
            );
        }
        for (name, paths) in prev.events {
            manifest.events.entry(name).or_insert(paths);
        }
        let json = serde_json::to_string_pretty(&manifest)?;
        fs::write(dataset_dir.join("manifest.json"), json + "\n")?;
    }
    save_catalogue(&events, &dataset_dir.join("events"))?;
    println!(
        "simulated {} events x {} frames -> {}",
        manifest.events.len(),
        resolved.frames,
        out_root.join(&resolved.dataset).display()
    );
    print_fingerprint("simulate", &resolved)
}

// ---------------------------------------------------------------------------
// prepare

#[derive(Args)]
struct PrepareArgs {
    /// JSON file with the same fields as the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Simulated dataset directory (contains manifest.json).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Event to cut patches from.
    #[arg(long)]
    event: Option<String>,
    /// Observed depth frames per sample (T).
    #[arg(long)]
    t: Option<usize>,
    /// Forecast horizon in steps (H).
    #[arg(long)]
    horizon: Option<usize>,
    /// Patch side length.
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    n_patches: Option<usize>,
    /// Fraction of patches required to contain wet change.
    #[arg(long)]
    wet_bias: Option<f64>,
    /// Anchor step t (1-based; defaults to the middle of the valid range).
    #[arg(long)]
    anchor: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Patch cache directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct PrepareFile {
    data: Option<PathBuf>,
    event: Option<String>,
    t: Option<usize>,
    horizon: Option<usize>,
    patch: Option<usize>,
    n_patches: Option<usize>,
    wet_bias: Option<f64>,
    anchor: Option<usize>,
    seed: Option<u64>,
}

#[derive(Serialize)]
struct PrepareResolved {
    data: PathBuf,
    event: String,
    t: usize,
    horizon: usize,
    patch: usize,
    n_patches: usize,
    wet_bias: f64,
    anchor: Option<usize>,
    seed: u64,
}

fn cmd_prepare(args: PrepareArgs) -> Result<()> {
    let file: PrepareFile = load_config_file(&args.config)?;
    let resolved = PrepareResolved {
        data: args
            .data
            .or(file.data)
            .context("--data <dataset dir> is required")?,
        event: args
            .event
            .or(file.event)
            .context("--event <name> is required")?,
        t: args.t.or(file.t).unwrap_or(5),
        horizon: args.horizon.or(file.horizon).unwrap_or(12),
        patch: args.patch.or(file.patch).unwrap_or(32),
        n_patches: args.n_patches.or(file.n_patches).unwrap_or(64),
        wet_bias: args.wet_bias.or(file.wet_bias).unwrap_or(0.7),
        anchor: args.anchor.or(file.anchor),
        seed: args.seed.or(file.seed).unwrap_or(0),
    };
    let out = args.out.unwrap_or_else(|| {
        results_root().join("patches").join(&resolved.event)
    });

    let ds = Dataset::open(&resolved.data)?;
    let frames = ds.frames(&resolved.event)?;
    let event = ds.event(&resolved.event)?;
    let spec = FeatureSpec {
        t_steps: resolved.t,
        horizon: resolved.horizon,
        include_delta_dem: true,
        include_delta_wd: true,
        patch_size: resolved.patch,
    };
    let lo = resolved.t;
    let hi = frames
        .len()
        .checked_sub(resolved.horizon)
        .unwrap_or(0);
    if hi < lo {
        bail!(
            "event {} has {} frames; need at least {} for T={} H={}",
            resolved.event,
            frames.len(),
            resolved.t + resolved.horizon,
            resolved.t,
            resolved.horizon
        );
    }
    let anchor = resolved.anchor.unwrap_or((lo + hi) / 2);
    if anchor < lo || anchor > hi {
        bail!("anchor {anchor} outside the valid range {lo}..={hi}");
    }
    let full = assemble(&ds.dem, &ds.mask, &frames, &event, anchor, &spec)?;
    let patches = sample_patches(&full, &spec, resolved.n_patches, resolved.seed, resolved.wet_bias)?;
    save_samples(&patches, &out)?;
    println!(
        "prepared {} patches ({} channels, {}x{}) from {} at t={} -> {}",
        patches.len(),
        full.input.len(),
        resolved.patch,
        resolved.patch,
        resolved.event,
        anchor,
        out.display()
    );
    print_fingerprint("prepare", &resolved)
}

// ---------------------------------------------------------------------------
// train

#[derive(Args)]
struct TrainArgs {
    /// JSON file with the same fields as the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Simulated dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model family: ar_1x1, ar_5x5, fcn, autoencoder, unet, graph.
    #[arg(long)]
    model: Option<String>,
    /// Training method: one_ts, direct_12ts, iterative_12ts.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Observed depth frames per sample (T).
    #[arg(long)]
    t: Option<usize>,
    /// Forecast horizon for the 12-step methods.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    patches_per_epoch: Option<usize>,
    #[arg(long)]
    val_patches: Option<usize>,
    #[arg(long)]
    wet_bias: Option<f64>,
    /// Comma-separated layer widths (family default when omitted).
    #[arg(long)]
    widths: Option<String>,
    /// Comma-separated training event names (default: the benchmark split
    /// filtered to events present in the dataset).
    #[arg(long)]
    train_events: Option<String>,
    /// Comma-separated validation event names.
    #[arg(long)]
    val_events: Option<String>,
    /// Supervise intermediate steps of the iterative method.
    #[arg(long)]
    supervise_intermediate: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Model output directory (checkpoint + history).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct TrainFile {
    data: Option<PathBuf>,
    model: Option<String>,
    method: Option<String>,
    epochs: Option<usize>,
    lr: Option<f64>,
    t: Option<usize>,
    horizon: Option<usize>,
    patch: Option<usize>,
    batch: Option<usize>,
    patches_per_epoch: Option<usize>,
    val_patches: Option<usize>,
    wet_bias: Option<f64>,
    widths: Option<String>,
    train_events: Option<String>,
    val_events: Option<String>,
    supervise_intermediate: Option<bool>,
    seed: Option<u64>,
}

#[derive(Serialize)]
struct TrainResolved {
    data: PathBuf,
    model: String,
    method: String,
    epochs: usize,
    lr: f64,
    t: usize,
    horizon: usize,
    patch: usize,
    batch: usize,
    patches_per_epoch: usize,
    val_patches: usize,
    wet_bias: f64,
    widths: Vec<usize>,
    train_events: Vec<String>,
    val_events: Vec<String>,
    supervise_intermediate: bool,
    seed: u64,
}

/// Benchmark split names restricted to what the dataset actually holds;
/// when the named validation events are absent, the tail of the training
/// list is promoted instead.
fn default_split(manifest: &DatasetManifest) -> (Vec<String>, Vec<String>) {
    let split = table2_split();
    let present = |names: &[String]| -> Vec<String> {
        names
            .iter()
            .filter(|n| manifest.events.contains_key(*n))
            .cloned()
            .collect()
    };
    let mut train = present(&split.train);
    let mut val = present(&split.validation);
    if val.is_empty() && train.len() >= 2 {
        val.push(train.pop().expect("nonempty"));
    }
    (train, val)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let file: TrainFile = load_config_file(&args.config)?;
    let data = args
        .data
        .or(file.data)
        .context("--data <dataset dir> is required")?;
    let ds = Dataset::open(&data)?;
    let (default_train, default_val) = default_split(&ds.manifest);
    let widths_arg = args.widths.or(file.widths);
    let widths = match &widths_arg {
        None => Vec::new(),
        Some(s) => parse_name_list(s)
            .iter()
            .map(|w| w.parse::<usize>().with_context(|| format!("bad width {w:?}")))
            .collect::<Result<Vec<_>>>()?,
    };
    let resolved = TrainResolved {
        data,
        model: args.model.or(file.model).context("--model is required")?,
        method: args.method.or(file.method).context("--method is required")?,
        epochs: args.epochs.or(file.epochs).unwrap_or(8),
        lr: args.lr.or(file.lr).unwrap_or(1e-3),
        t: args.t.or(file.t).unwrap_or(5),
        horizon: args.horizon.or(file.horizon).unwrap_or(12),
        patch: args.patch.or(file.patch).unwrap_or(32),
        batch: args.batch.or(file.batch).unwrap_or(8),
        patches_per_epoch: args.patches_per_epoch.or(file.patches_per_epoch).unwrap_or(96),
        val_patches: args.val_patches.or(file.val_patches).unwrap_or(16),
        wet_bias: args.wet_bias.or(file.wet_bias).unwrap_or(0.7),
        widths,
        train_events: args
            .train_events
            .or(file.train_events)
            .map(|s| parse_name_list(&s))
            .unwrap_or(default_train),
        val_events: args
            .val_events
            .or(file.val_events)
            .map(|s| parse_name_list(&s))
            .unwrap_or(default_val),
        supervise_intermediate: args.supervise_intermediate
            || file.supervise_intermediate.unwrap_or(false),
        seed: args.seed.or(file.seed).unwrap_or(0),
    };
    let out = args.out.unwrap_or_else(|| {
        results_root()
            .join("train")
            .join(format!("{}_{}", resolved.model, resolved.method))
    });

    let family = parse_family(&resolved.model)?;
    if !family.is_parametric() {
        bail!("{} is a frozen baseline; nothing to train", resolved.model);
    }
    let method = parse_method(&resolved.method)?;
    if resolved.train_events.is_empty() || resolved.val_events.is_empty() {
        bail!("training needs non-empty --train-events and --val-events");
    }

    let dataset = TrainDataset {
        dem: ds.dem.clone(),
        mask: ds.mask.clone(),
        train: resolved
            .train_events
            .iter()
            .map(|n| ds.event_data(n))
            .collect::<Result<Vec<_>>>()?,
        validation: resolved
            .val_events
            .iter()
            .map(|n| ds.event_data(n))
            .collect::<Result<Vec<_>>>()?,
    };

    let model_horizon = match method {
        TrainMethod::Direct12Ts => resolved.horizon,
        _ => 1,
    };
    let mut spec = ModelSpec::new(
        family,
        resolved.t,
        model_horizon,
        derive_seed(resolved.seed, "model"),
    );
    if !resolved.widths.is_empty() {
        spec = spec.with_widths(resolved.widths.clone());
    }
    let mut model = Model::init(spec)?;

    let mut cfg = TrainConfig::new(method, derive_seed(resolved.seed, "train"));
    cfg.epochs = resolved.epochs;
    cfg.learning_rate = resolved.lr;
    cfg.batch_size = resolved.batch;
    cfg.patches_per_epoch = resolved.patches_per_epoch;
    cfg.val_patches_per_event = resolved.val_patches;
    cfg.wet_bias = resolved.wet_bias;
    cfg.patch_size = resolved.patch;
    cfg.horizon = resolved.horizon;
    cfg.supervise_intermediate = resolved.supervise_intermediate;

    let history = train(&mut model, &dataset, &cfg)?;
    fs::create_dir_all(&out)?;
    write_history_csv(&out.join("history.csv"), &history)?;
    model.save(&out.join("checkpoint"), None)?;
    println!(
        "trained {} ({}): best validation loss {:.6} at epoch {}/{} -> {}",
        resolved.model,
        resolved.method,
        history.best_val_loss,
        history.best_epoch,
        history.records.len(),
        out.display()
    );
    print_fingerprint("train", &resolved)
}

// ---------------------------------------------------------------------------
// eval

#[derive(Args)]
struct EvalArgs {
    /// JSON file with the same fields as the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Simulated dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Trained model directory (as written by `train`). Mutually exclusive
    /// with --model.
    #[arg(long)]
    model_dir: Option<PathBuf>,
    /// Baseline family to evaluate without a checkpoint: no_change,
    /// linear_extrap, or an identity-weight ar_1x1 / ar_5x5.
    #[arg(long)]
    model: Option<String>,
    /// Observed frames T for --model baselines.
    #[arg(long)]
    t: Option<usize>,
    /// Comma-separated event names (default: every event in the dataset).
    #[arg(long)]
    events: Option<String>,
    /// Forecast horizon in steps.
    #[arg(long)]
    horizon: Option<usize>,
    /// Evaluation tile side length.
    #[arg(long)]
    tile: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluation output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct EvalFile {
    data: Option<PathBuf>,
    model_dir: Option<PathBuf>,
    model: Option<String>,
    t: Option<usize>,
    events: Option<String>,
    horizon: Option<usize>,
    tile: Option<usize>,
    seed: Option<u64>,
}

#[derive(Serialize)]
struct EvalResolved {
    data: PathBuf,
    model_dir: Option<PathBuf>,
    model: Option<String>,
    t: usize,
    events: Vec<String>,
    horizon: usize,
    tile: usize,
    seed: u64,
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let file: EvalFile = load_config_file(&args.config)?;
    let data = args
        .data
        .or(file.data)
        .context("--data <dataset dir> is required")?;
    let ds = Dataset::open(&data)?;
    let all_events: Vec<String> = ds.manifest.events.keys().cloned().collect();
    let resolved = EvalResolved {
        data,
        model_dir: args.model_dir.or(file.model_dir),
        model: args.model.or(file.model),
        t: args.t.or(file.t).unwrap_or(5),
        events: args
            .events
            .or(file.events)
            .map(|s| parse_name_list(&s))
            .unwrap_or(all_events),
        horizon: args.horizon.or(file.horizon).unwrap_or(12),
        tile: args.tile.or(file.tile).unwrap_or(32),
        seed: args.seed.or(file.seed).unwrap_or(0),
    };

    let (model, name) = match (&resolved.model_dir, &resolved.model) {
        (Some(dir), None) => {
            let (model, _) = Model::load(&dir.join("checkpoint"))?;
            let name = dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| model.spec().family.tag().to_string());
            (model, name)
        }
        (None, Some(tag)) => {
            let family = parse_family(tag)?;
            let spec = ModelSpec::new(family, resolved.t, 1, 0);
            let model = if family.is_autoregressive() {
                Model::ar_identity(spec)?
            } else if family.is_parametric() {
                bail!("{tag} needs a checkpoint; use --model-dir");
            } else {
                Model::init(spec)?
            };
            (model, tag.clone())
        }
        _ => bail!("pass exactly one of --model-dir or --model"),
    };
    let out = args
        .out
        .unwrap_or_else(|| results_root().join("eval").join(&name));

    let cfg = EvalConfig {
        horizon: resolved.horizon,
        tile: resolved.tile,
    };
    let mut reports = Vec::new();
    for event_name in &resolved.events {
        let frames = ds.frames(event_name)?;
        let event = ds.event(event_name)?;
        let report = evaluate_event(&model, &ds.dem, &ds.mask, &frames, &event, &cfg)?;
        write_event_csv(&out.join("events").join(format!("{event_name}.csv")), &report)?;
        reports.push(report);
    }
    let pooled = pool_m_values(&reports);
    for (b, values) in pooled.iter().enumerate() {
        write_m_values(&out.join(format!("m_values_b{}.txt", b + 1)), values)?;
    }
    let row = ModelReport::from_pooled(&name, &pooled);
    write_report_csv(&out.join("report.csv"), std::slice::from_ref(&row))?;
    print_median_table(std::slice::from_ref(&row));
    println!(
        "evaluated {} on {} events -> {}",
        name,
        resolved.events.len(),
        out.display()
    );
    print_fingerprint("eval", &resolved)
}

// ---------------------------------------------------------------------------
// report

#[derive(Args)]
struct ReportArgs {
    /// JSON file with the same fields as the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Evaluation directories, each holding m_values_b{1..5}.txt.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    from: Vec<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report CSV path.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Report SVG path.
    #[arg(long)]
    out_svg: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ReportFile {
    from: Option<Vec<PathBuf>>,
    seed: Option<u64>,
}

#[derive(Serialize)]
struct ReportResolved {
    from: Vec<PathBuf>,
    seed: u64,
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let file: ReportFile = load_config_file(&args.config)?;
    let from = if args.from.is_empty() {
        file.from.unwrap_or_default()
    } else {
        args.from
    };
    if from.is_empty() {
        bail!("--from needs at least one evaluation directory");
    }
    let resolved = ReportResolved {
        from,
        seed: args.seed.or(file.seed).unwrap_or(0),
    };
    let out_csv = args
        .out_csv
        .unwrap_or_else(|| results_root().join("report").join("report.csv"));
    let out_svg = args
        .out_svg
        .unwrap_or_else(|| results_root().join("report").join("report.svg"));

    let mut rows = Vec::new();
    for dir in &resolved.from {
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        let mut pooled = Vec::with_capacity(BUCKET_COUNT);
        for b in 1..=BUCKET_COUNT {
            let path = dir.join(format!("m_values_b{b}.txt"));
            if path.is_file() {
                pooled.push(read_m_values(&path).map_err(zoo_err)?);
            } else {
                pooled.push(Vec::new());
            }
        }
        rows.push(ModelReport::from_pooled(&name, &pooled));
    }
    write_report_csv(&out_csv, &rows).map_err(zoo_err)?;
    write_report_svg(&out_svg, &rows).map_err(zoo_err)?;
    print_median_table(&rows);
    println!("report -> {} and {}", out_csv.display(), out_svg.display());
    print_fingerprint("report", &resolved)
}

fn zoo_err(e: ZooError) -> anyhow::Error {
    anyhow::Error::new(e)
}

/// Median M per model and bucket, one row per model.
fn print_median_table(rows: &[ModelReport]) {
    let name_width = rows
        .iter()
        .map(|r| r.name.len())
        .max()
        .unwrap_or(5)
        .max("model".len());
    print!("{:name_width$}", "model");
    for b in 1..=BUCKET_COUNT {
        print!("  {:>8}", format!("M(b{b})"));
    }
    println!();
    for row in rows {
        print!("{:name_width$}", row.name);
        for summary in &row.buckets {
            match summary {
                Some(s) => print!("  {:>8.3}", s.median),
                None => print!("  {:>8}", "-"),
            }
        }
        println!();
    }
}

// ---------------------------------------------------------------------------
// experiment

#[derive(Args)]
struct ExperimentArgs {
    /// Built-in protocol name; see --list.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Full experiment configuration as JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// List available presets and exit.
    #[arg(long)]
    list: bool,
    /// Override the experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Train/evaluate up to N model pipelines concurrently.
    #[arg(long, default_value_t = 1)]
    parallel_models: usize,
    /// Import checkpoints from a previous experiment's results directory.
    #[arg(long)]
    checkpoints_from: Option<PathBuf>,
    /// Results root; the experiment writes to <out>/<name>.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    if args.list {
        for name in preset_names() {
            println!("{name}");
        }
        return Ok(());
    }
    let mut cfg: ExperimentConfig = match (&args.preset, &args.config) {
        (Some(name), None) => preset(name).with_context(|| {
            format!(
                "unknown preset {name:?}; available: {}",
                preset_names().join(", ")
            )
        })?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        _ => bail!("pass exactly one of --preset or --config (or --list)"),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(src) = &args.checkpoints_from {
        cfg.checkpoints_from = Some(src.to_string_lossy().into_owned());
    }
    let out_dir = args.out.unwrap_or_else(results_root).join(&cfg.name);

    let outcome = run_experiment(&cfg, &out_dir, args.parallel_models).map_err(zoo_err)?;
    print_median_table(&outcome.reports);
    println!("experiment {} -> {}", cfg.name, out_dir.display());
    println!("summary: {}", out_dir.join("summary.json").display());
    print_fingerprint("experiment", &cfg)
}
