//! The command workflows. Each one validates its configuration before
//! touching the output directory, then writes CSV/JSON reports, plots and a
//! `run.json` metadata file. Failures after that point leave the partial
//! outputs in place together with `errors.json`.

use std::fs;
use std::path::{Path, PathBuf};

use idswap_core::backend::external::load_bundle;
use idswap_core::cache::{cache_latents, LatentCache};
use idswap_core::dataset::{ingest, DatasetManifest};
use idswap_core::eval::{
    compare_methods, evaluate, gallery_probe_split, reference, EvalRecord, EvaluationReport, FaceFeatures,
    MethodReport, MetricValue,
};
use idswap_core::latent::{mask_from_selection, swap};
use idswap_core::mask_anon::anonymize_masked;
use idswap_core::metrics::{privacy_metric, utility_metric, write_json};
use idswap_core::rng::derive_seed;
use idswap_core::search::{
    channel_score_scan, greedy_block_select, greedy_layer_select, layer_window_search, sample_pairs,
};
use idswap_core::swapper::{
    anonymize_with_swapper, build_ground_truth, split, train_swapper, SwapperArchitecture, SwapperCheckpoint,
    SwapperNetwork,
};
use idswap_core::{BackendBundle, Image, SyntheticConfig, SyntheticWorld};
use serde::Serialize;

use crate::config::{Mode, Requirement, RunConfig, SYNTHETIC};
use crate::error::{CliError, CliResult};
use crate::plot::{line_chart, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SearchLayers,
    SearchChannels,
    Anonymize,
    TrainSwapper,
    Evaluate,
    SampleFaces,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SearchLayers => "search-layers",
            Command::SearchChannels => "search-channels",
            Command::Anonymize => "anonymize",
            Command::TrainSwapper => "train-swapper",
            Command::Evaluate => "evaluate",
            Command::SampleFaces => "sample-faces",
        }
    }

    fn requirements(self, cfg: &RunConfig) -> Vec<Requirement> {
        match self {
            Command::Anonymize if cfg.mode == Mode::Swapper => vec![Requirement::Input, Requirement::Checkpoint],
            Command::Anonymize | Command::TrainSwapper => vec![Requirement::Input],
            Command::Evaluate => vec![Requirement::Input, Requirement::Anonymized],
            _ => Vec::new(),
        }
    }
}

pub fn open_backend(cfg: &RunConfig) -> CliResult<BackendBundle> {
    if cfg.backend == SYNTHETIC {
        let sc = match &cfg.synthetic_config {
            Some(p) => SyntheticConfig::load(p).map_err(|e| CliError::Config(e.to_string()))?,
            None => SyntheticConfig::default(),
        };
        let world = SyntheticWorld::new(sc).map_err(|e| CliError::Config(format!("synthetic world: {e}")))?;
        Ok(BackendBundle::synthetic(world))
    } else {
        Ok(load_bundle(Path::new(&cfg.backend))?)
    }
}

/// FNV-1a, used to expand the run seed per image id.
fn id_tag(id: &str) -> u64 {
    id.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn image_seed(run_seed: u64, id: &str) -> u64 {
    derive_seed(run_seed, id_tag(id))
}

#[derive(Debug, Clone, Serialize)]
struct RunMetadata<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    status: &'static str,
    backend_id: Option<String>,
    seed: u64,
    config: &'a RunConfig,
    outputs: Vec<String>,
    item_failures: usize,
}

#[derive(Debug, Clone, Serialize)]
struct ErrorManifest {
    command: &'static str,
    category: Option<&'static str>,
    exit_code: Option<i32>,
    message: Option<String>,
    /// `(item id, message)` for items skipped during the run.
    item_failures: Vec<(String, String)>,
    partial_outputs: Vec<String>,
}

/// Mutable state of one run: the output directory and what has been
/// written so far.
pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub backend: BackendBundle,
    pub out: PathBuf,
    outputs: Vec<PathBuf>,
    failures: Vec<(String, String)>,
}

impl Context<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.outputs.push(p.clone());
        p
    }

    fn subdir(&self, name: &str) -> CliResult<PathBuf> {
        let d = self.out.join(name);
        fs::create_dir_all(&d).map_err(|e| CliError::io(&d, e))?;
        Ok(d)
    }

    fn fail(&mut self, id: &str, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{id}: {msg}");
        self.failures.push((id.to_string(), msg));
    }

    fn relative(&self) -> Vec<String> {
        self.outputs
            .iter()
            .map(|p| p.strip_prefix(&self.out).unwrap_or(p).display().to_string())
            .collect()
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub out: PathBuf,
    pub outputs: Vec<PathBuf>,
    pub failures: Vec<(String, String)>,
}

/// Validates, runs the command and writes run metadata. Configuration
/// errors are reported before the output directory is created.
pub fn run(command: Command, cfg: &RunConfig) -> CliResult<RunOutcome> {
    cfg.validate(&command.requirements(cfg))?;
    let backend = open_backend(cfg)?;
    cfg.validate_for(backend.latent_shape())?;
    let out = cfg.out.clone();
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let mut ctx = Context {
        cfg,
        backend,
        out,
        outputs: Vec::new(),
        failures: Vec::new(),
    };
    let result = match command {
        Command::SearchLayers => search_layers(&mut ctx),
        Command::SearchChannels => search_channels(&mut ctx),
        Command::Anonymize => anonymize(&mut ctx),
        Command::TrainSwapper => train(&mut ctx),
        Command::Evaluate => evaluate_run(&mut ctx),
        Command::SampleFaces => sample_faces(&mut ctx),
    };
    let meta = RunMetadata {
        tool: "idswap",
        version: env!("CARGO_PKG_VERSION"),
        command: command.name(),
        status: if result.is_ok() { "ok" } else { "failed" },
        backend_id: Some(ctx.backend.id().to_string()),
        seed: cfg.seed,
        config: cfg,
        outputs: ctx.relative(),
        item_failures: ctx.failures.len(),
    };
    write_json(&meta, &ctx.out.join("run.json"))?;
    let errors_path = ctx.out.join("errors.json");
    if result.is_err() || !ctx.failures.is_empty() {
        let err = result.as_ref().err();
        let manifest = ErrorManifest {
            command: command.name(),
            category: err.map(|e| e.category()),
            exit_code: err.map(|e| e.exit_code()),
            message: err.map(|e| e.to_string()),
            item_failures: ctx.failures.clone(),
            partial_outputs: ctx.relative(),
        };
        write_json(&manifest, &errors_path)?;
    } else if errors_path.exists() {
        fs::remove_file(&errors_path).map_err(|e| CliError::io(&errors_path, e))?;
    }
    result?;
    Ok(RunOutcome {
        out: ctx.out,
        outputs: ctx.outputs,
        failures: ctx.failures,
    })
}

fn search_layers(ctx: &mut Context) -> CliResult<()> {
    let cfg = ctx.cfg;
    let n_layers = ctx.backend.latent_shape().n_layers;
    let sizes: Vec<usize> = if cfg.window_sizes.is_empty() {
        (1..=n_layers).collect()
    } else {
        cfg.window_sizes.clone()
    };
    let pairs = sample_pairs(&ctx.backend, cfg.n_pairs, cfg.seed)?;
    let result = layer_window_search(&pairs, &sizes, &ctx.backend, &cfg.search())?;
    let greedy = if sizes.contains(&1) {
        Some(greedy_layer_select(&result, cfg.greedy_k.min(n_layers))?)
    } else {
        None
    };
    result.write_csv(&ctx.path("layer_scores.csv"))?;
    #[derive(Serialize)]
    struct Summary<'a> {
        best_consecutive: (usize, usize),
        top_individual: &'a [(usize, f64)],
        greedy_layers: Option<String>,
        id_stats: &'a idswap_core::metrics::NormalizationStats,
        attr_stats: &'a idswap_core::metrics::NormalizationStats,
        n_pairs: usize,
        symmetric: bool,
        backend_id: &'a str,
    }
    let summary = Summary {
        best_consecutive: result.best_consecutive,
        top_individual: &result.top_individual,
        greedy_layers: greedy.as_ref().map(|g| g.to_string()),
        id_stats: &result.id_stats,
        attr_stats: &result.attr_stats,
        n_pairs: result.n_pairs,
        symmetric: result.symmetric,
        backend_id: &result.backend_id,
    };
    write_json(&summary, &ctx.path("layer_search.json"))?;
    let series: Vec<Series> = sizes
        .iter()
        .take(6)
        .map(|&m| {
            let pts = result
                .table
                .iter()
                .filter(|w| w.size == m)
                .map(|w| (w.start as f64, w.ia))
                .collect();
            Series::new(format!("m = {m}"), pts)
        })
        .collect();
    line_chart(&ctx.path("layer_scores.svg"), "Layer window scores", "start layer", "IA score", &series)?;
    log::info!("best window {:?}", result.best_consecutive);
    Ok(())
}

fn search_channels(ctx: &mut Context) -> CliResult<()> {
    let cfg = ctx.cfg;
    let pairs = sample_pairs(&ctx.backend, cfg.n_pairs, cfg.seed)?;
    let layers = cfg.search_layer_set()?;
    let table = channel_score_scan(&pairs, &layers, cfg.block_size, &ctx.backend, &cfg.search())?;
    let selection = greedy_block_select(&table, cfg.stop(), &ctx.backend, &pairs)?;
    table.write_csv(&ctx.path("channel_scores.csv"))?;
    table.write_smoothed_csv(&ctx.path("channel_smoothed.csv"))?;
    selection.write_csv(&ctx.path("block_selection.csv"))?;
    #[derive(Serialize)]
    struct Summary<'a> {
        block_size: usize,
        layers: String,
        stop: idswap_core::search::StopCriterion,
        stop_reason: idswap_core::search::StopReason,
        selection: String,
        n_channels: usize,
        final_distance: f64,
        n_pairs: usize,
        backend_id: &'a str,
    }
    let backend_id = ctx.backend.id().to_string();
    let summary = Summary {
        block_size: cfg.block_size,
        layers: layers.to_string(),
        stop: cfg.stop(),
        stop_reason: selection.stop,
        selection: selection.selection().to_string(),
        n_channels: selection.n_channels(),
        final_distance: selection.final_distance(),
        n_pairs: pairs.len(),
        backend_id: &backend_id,
    };
    let dest = ctx.path("channel_search.json");
    write_json(&summary, &dest)?;
    let smoothed: Vec<Series> = table
        .smoothed
        .iter()
        .map(|(l, v)| Series::new(format!("layer {l}"), v.iter().enumerate().map(|(c, s)| (c as f64, *s)).collect()))
        .collect();
    line_chart(&ctx.path("channel_smoothed.svg"), "Smoothed channel scores", "channel", "score", &smoothed)?;
    let curve = std::iter::once((0.0, 0.0))
        .chain(selection.cum_channels.iter().zip(&selection.id_distance).map(|(&c, &d)| (c as f64, d)))
        .collect();
    line_chart(
        &ctx.path("block_curve.svg"),
        "Greedy block selection",
        "swapped channels",
        "identity distance",
        &[Series::new("identity distance", curve)],
    )?;
    Ok(())
}

fn load_manifest(path: &Path, labels: Option<&Path>) -> CliResult<DatasetManifest> {
    Ok(ingest(path, labels)?)
}

/// Writes an anonymized image. Unchanged outputs are copied byte for byte
/// when the input already has the output format.
fn write_output(source_path: &Path, source: &Image, output: &Image, dest: &Path) -> CliResult<()> {
    let same_ext = source_path
        .extension()
        .zip(dest.extension())
        .is_some_and(|(a, b)| a.eq_ignore_ascii_case(b));
    if output == source && same_ext {
        fs::copy(source_path, dest).map_err(|e| CliError::io(dest, e))?;
    } else {
        output.save(dest)?;
    }
    Ok(())
}

fn anonymize(ctx: &mut Context) -> CliResult<()> {
    let cfg = ctx.cfg;
    let manifest = load_manifest(cfg.input.as_deref().expect("validated"), cfg.labels.as_deref())?;
    let shape = ctx.backend.latent_shape();
    let selection = cfg.selection()?;
    let identity_mask = mask_from_selection(&selection, shape)?;
    let mask_cfg = cfg.mask_anon()?;
    let checkpoint = match cfg.mode {
        Mode::Swapper => {
            let ck = SwapperCheckpoint::load(cfg.checkpoint.as_deref().expect("validated"))?;
            if ck.network.shape() != shape {
                return Err(CliError::Config(format!(
                    "checkpoint latent shape {} does not match backend {}",
                    ck.network.shape(),
                    shape
                )));
            }
            Some(ck)
        }
        _ => None,
    };
    let cache = match cfg.mode {
        Mode::Layers | Mode::Channels => {
            let cache = LatentCache::new(cfg.cache_path())?;
            let report = cache_latents(&manifest, &ctx.backend, &cache);
            for (id, msg) in &report.failed {
                ctx.fail(id, format!("encode: {msg}"));
            }
            Some(cache)
        }
        _ => None,
    };
    let images_dir = ctx.subdir("images")?;
    let ext = cfg.image_format.extension();
    let mut rows = Vec::new();
    let (mut id_pairs, mut attr_pairs) = (Vec::new(), Vec::new());
    for entry in &manifest.entries {
        if ctx.failures.iter().any(|(id, _)| id == &entry.id) {
            continue;
        }
        let seed = image_seed(cfg.seed, &entry.id);
        let b = &ctx.backend;
        let attempt = || -> idswap_core::Result<(Image, Image)> {
            let source = Image::load(&entry.path)?;
            let output = match cfg.mode {
                Mode::Layers | Mode::Channels => {
                    let l_s = cache.as_ref().expect("cache for latent modes").load(&entry.id, b)?;
                    let l_r = b.sample_random_latent(seed)?;
                    b.generate(&swap(&l_s, &l_r, &selection)?)?
                }
                Mode::Mask => anonymize_masked(&source, &mask_cfg, seed, &identity_mask, b)?,
                Mode::Swapper => anonymize_with_swapper(&checkpoint.as_ref().expect("loaded").network, &source, seed, b)?,
            };
            Ok((source, output))
        };
        let (source, output) = match attempt() {
            Ok(v) => v,
            Err(e) => {
                ctx.fail(&entry.id, e.to_string());
                continue;
            }
        };
        let dest = images_dir.join(format!("{}.{ext}", entry.id));
        write_output(&entry.path, &source, &output, &dest)?;
        ctx.outputs.push(dest.clone());
        let e_s = b.embed_identity(&source)?;
        let e_o = b.embed_identity(&output)?;
        let d = idswap_core::metrics::identity_distance(&e_s, &e_o)?;
        attr_pairs.push((b.predict_attributes(&source)?, b.predict_attributes(&output)?));
        id_pairs.push((e_s, e_o));
        rows.push((entry.id.clone(), seed, dest, d));
    }
    let table = ctx.path("anonymized.csv");
    let mut w = csv::Writer::from_path(&table).map_err(idswap_core::Error::from)?;
    w.write_record(["id", "seed", "output", "identity_distance"]).map_err(idswap_core::Error::from)?;
    for (id, seed, dest, d) in &rows {
        let rel = dest.strip_prefix(&ctx.out).unwrap_or(dest).display().to_string();
        w.write_record([id.clone(), seed.to_string(), rel, format!("{d:.12}")])
            .map_err(idswap_core::Error::from)?;
    }
    w.flush().map_err(|e| CliError::io(&table, e))?;
    if id_pairs.is_empty() {
        if manifest.is_empty() {
            return Ok(());
        }
        return Err(idswap_core::Error::Empty("successfully anonymized images").into());
    }
    let privacy = privacy_metric(&id_pairs, cfg.gamma)?;
    let utility = utility_metric(&attr_pairs, cfg.theta, cfg.attribute_logit)?;
    privacy.write_csv(&ctx.path("privacy.csv"))?;
    write_json(&privacy, &ctx.path("privacy.json"))?;
    utility.write_csv(&ctx.path("utility.csv"))?;
    utility.write_attribute_csv(&ctx.path("utility_attributes.csv"))?;
    write_json(&utility, &ctx.path("utility.json"))?;
    Ok(())
}

fn load_images(ctx: &mut Context, manifest: &DatasetManifest) -> Vec<(String, Image)> {
    let mut out = Vec::new();
    for e in &manifest.entries {
        match Image::load(&e.path) {
            Ok(img) => out.push((e.id.clone(), img)),
            Err(err) => ctx.fail(&e.id, err.to_string()),
        }
    }
    out
}

fn train(ctx: &mut Context) -> CliResult<()> {
    let cfg = ctx.cfg;
    let manifest = load_manifest(cfg.input.as_deref().expect("validated"), cfg.labels.as_deref())?;
    let images = load_images(ctx, &manifest);
    let shape = ctx.backend.latent_shape();
    let identity_mask = mask_from_selection(&cfg.selection()?, shape)?;
    let pairs = build_ground_truth(
        &images,
        cfg.seeds_per_image,
        derive_seed(cfg.seed, 0x6754),
        &identity_mask,
        &cfg.mask_anon()?,
        &ctx.backend,
    )?;
    let (train_set, test_set) = split(&pairs, cfg.split);
    let arch = SwapperArchitecture {
        pass_rule: cfg.pass(),
        ..SwapperArchitecture::standard(shape)?
    };
    let net = SwapperNetwork::new(arch, derive_seed(cfg.seed, 0x5EED))?;
    let training = cfg.training();
    let outcome = train_swapper(&training, net, train_set, test_set, &ctx.backend)?;
    SwapperCheckpoint::new(ctx.backend.id(), training, &outcome).save(&ctx.path("swapper.json"))?;
    outcome.write_history_csv(&ctx.path("loss_history.csv"))?;
    #[derive(Serialize)]
    struct Summary {
        n_pairs: usize,
        n_train: usize,
        n_test: usize,
        initial_train_loss: f64,
        final_train_loss: Option<f64>,
        final_test_loss: Option<f64>,
    }
    let last = outcome.history.last();
    write_json(
        &Summary {
            n_pairs: pairs.len(),
            n_train: train_set.len(),
            n_test: test_set.len(),
            initial_train_loss: outcome.initial_train_loss,
            final_train_loss: last.map(|e| e.train),
            final_test_loss: last.and_then(|e| e.test),
        },
        &ctx.path("training.json"),
    )?;
    let mut series = vec![Series::new(
        "train",
        outcome.history.iter().map(|e| (e.epoch as f64, e.train)).collect(),
    )];
    if outcome.history.iter().any(|e| e.test.is_some()) {
        series.push(Series::new(
            "test",
            outcome
                .history
                .iter()
                .filter_map(|e| e.test.map(|t| (e.epoch as f64, t)))
                .collect(),
        ));
    }
    line_chart(&ctx.path("loss_curve.svg"), "Swapper training loss", "epoch", "loss", &series)?;
    Ok(())
}

fn features(b: &BackendBundle, img: &Image) -> idswap_core::Result<FaceFeatures> {
    Ok(FaceFeatures {
        embedding: b.embed_identity(img)?,
        attributes: b.predict_attributes(img)?,
    })
}

fn evaluate_run(ctx: &mut Context) -> CliResult<()> {
    let cfg = ctx.cfg;
    let originals = load_manifest(cfg.input.as_deref().expect("validated"), cfg.labels.as_deref())?;
    let anonymized = load_manifest(cfg.anonymized.as_deref().expect("validated"), None)?;
    let mut records = Vec::new();
    for entry in &originals.entries {
        let Some(anon) = anonymized.get(&entry.id) else {
            ctx.fail(&entry.id, "no anonymized image with this id");
            continue;
        };
        let b = &ctx.backend;
        let attempt = || -> idswap_core::Result<EvalRecord> {
            Ok(EvalRecord {
                id: entry.id.clone(),
                identity: originals.identity_of(entry),
                original: features(b, &Image::load(&entry.path)?)?,
                anonymized: features(b, &Image::load(&anon.path)?)?,
            })
        };
        match attempt() {
            Ok(r) => records.push(r),
            Err(e) => ctx.fail(&entry.id, e.to_string()),
        }
    }
    let eval_cfg = cfg.eval();
    let report = evaluate(&records, &eval_cfg)?;
    write_json(&report, &ctx.path("evaluation.json"))?;
    report.privacy.write_csv(&ctx.path("privacy.csv"))?;
    report.roc.write_csv(&ctx.path("roc.csv"))?;
    write_ranks(ctx, &records, &report)?;
    write_attribute_distribution(ctx, &report)?;
    if let Some(d) = &report.diversity {
        let p = ctx.path("diversity.csv");
        let mut w = csv::Writer::from_path(&p).map_err(idswap_core::Error::from)?;
        w.write_record(["k", "silhouette"]).map_err(idswap_core::Error::from)?;
        for (k, s) in &d.silhouettes {
            w.write_record([k.to_string(), format!("{s:.12}")]).map_err(idswap_core::Error::from)?;
        }
        w.flush().map_err(|e| CliError::io(&p, e))?;
    }
    let (rank_mean, rank_std) = (report.rank.mean, report.rank.std);
    let ids = &report.privacy.distances;
    let id_mean = report.privacy.mean_distance;
    let id_std = (ids.iter().map(|d| (d - id_mean).powi(2)).sum::<f64>() / ids.len() as f64).sqrt();
    let row = MethodReport::new(format!("{:?}", cfg.mode).to_lowercase())
        .with("identity_distance", MetricValue::new(id_mean, Some(id_std)))
        .with("auc", MetricValue::new(report.roc.auc, None))
        .with("accuracy", MetricValue::new(report.roc.accuracy, None))
        .with("rank", MetricValue::new(rank_mean, Some(rank_std)));
    compare_methods(&[row])?.write_csv(&ctx.path("comparison.csv"))?;
    compare_methods(&[reference::identity_distance_row()])?.write_csv(&ctx.path("reference_identity_distance.csv"))?;
    compare_methods(&[reference::auc_row()])?.write_csv(&ctx.path("reference_auc.csv"))?;
    let roc: Vec<(f64, f64)> = report.roc.points.iter().map(|p| (p.fpr, p.tpr)).collect();
    line_chart(
        &ctx.path("roc.svg"),
        &format!("Verification ROC (AUC {:.4})", report.roc.auc),
        "false positive rate",
        "true positive rate",
        &[Series::new("roc", roc), Series::new("chance", vec![(0.0, 0.0), (1.0, 1.0)])],
    )?;
    Ok(())
}

fn write_ranks(ctx: &mut Context, records: &[EvalRecord], report: &EvaluationReport) -> CliResult<()> {
    let (_, probes) = gallery_probe_split(records, ctx.cfg.gallery_split);
    let p = ctx.path("ranks.csv");
    let mut w = csv::Writer::from_path(&p).map_err(idswap_core::Error::from)?;
    w.write_record(["probe", "identity", "rank"]).map_err(idswap_core::Error::from)?;
    for (i, ((label, _), r)) in probes.iter().zip(&report.rank.ranks).enumerate() {
        w.write_record([i.to_string(), label.clone(), format!("{r}")])
            .map_err(idswap_core::Error::from)?;
    }
    w.flush().map_err(|e| CliError::io(&p, e))
}

fn write_attribute_distribution(ctx: &mut Context, report: &EvaluationReport) -> CliResult<()> {
    let a = &report.attributes;
    let p = ctx.path("attribute_distribution.csv");
    let mut w = csv::Writer::from_path(&p).map_err(idswap_core::Error::from)?;
    w.write_record(["attribute", "before", "after", "drift"]).map_err(idswap_core::Error::from)?;
    for (k, &j) in a.attributes.iter().enumerate() {
        w.write_record([
            j.to_string(),
            format!("{:.6}", a.before[k]),
            format!("{:.6}", a.after[k]),
            format!("{:.6}", a.drift[k]),
        ])
        .map_err(idswap_core::Error::from)?;
    }
    w.flush().map_err(|e| CliError::io(&p, e))
}

fn sample_faces(ctx: &mut Context) -> CliResult<()> {
    let cfg = ctx.cfg;
    let dir = ctx.subdir("faces")?;
    let ext = cfg.image_format.extension();
    let labels = ctx.path("labels.csv");
    let mut w = csv::Writer::from_path(&labels).map_err(idswap_core::Error::from)?;
    w.write_record(["id", "identity"]).map_err(idswap_core::Error::from)?;
    for i in 0..cfg.n_faces {
        let id = format!("face_{i:04}");
        let latent = ctx.backend.sample_random_latent(derive_seed(cfg.seed, i as u64))?;
        let img = ctx.backend.generate(&latent)?;
        let dest = dir.join(format!("{id}.{ext}"));
        img.save(&dest)?;
        ctx.outputs.push(dest);
        w.write_record([id.clone(), id]).map_err(idswap_core::Error::from)?;
    }
    w.flush().map_err(|e| CliError::io(&labels, e))
}
