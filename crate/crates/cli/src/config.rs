//! Run configuration: a flat TOML table, overridden by `--set key=value`
//! pairs and then by the dedicated command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use idswap_core::backend::external::MANIFEST_FILE;
use idswap_core::eval::{DiversityConfig, EvalConfig};
use idswap_core::mask_anon::{MaskAnonConfig, OperandPair, RegionSet};
use idswap_core::metrics::MetricConfig;
use idswap_core::search::{SearchConfig, StopCriterion};
use idswap_core::swapper::{IdentitySign, LatentNorm, PassRule, TrainingConfig};
use idswap_core::{ChannelBlockSet, LatentShape, LayerSet, Selection};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SYNTHETIC: &str = "synthetic";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Layers,
    Channels,
    Mask,
    Swapper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageFormat {
    #[default]
    Png,
    Exr,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Exr => "exr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassMode {
    #[default]
    Pass,
    LowWeight,
    Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `synthetic` or a directory holding an external backend manifest.
    pub backend: String,
    /// Optional TOML file with synthetic world parameters.
    pub synthetic_config: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,

    pub input: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub anonymized: Option<PathBuf>,
    /// Defaults to `<out>/cache`.
    pub cache_dir: Option<PathBuf>,
    pub image_format: ImageFormat,

    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub theta: f64,
    pub attribute_logit: bool,

    pub n_pairs: usize,
    pub symmetric: bool,
    /// Window sizes for the layer search; empty means every size.
    pub window_sizes: Vec<usize>,
    pub greedy_k: usize,
    /// Layers scanned by the channel search.
    pub search_layers: String,
    pub block_size: usize,
    pub smoothing: usize,
    pub stop_budget: Option<usize>,
    pub stop_threshold: Option<f64>,

    pub mode: Mode,
    /// Layer selection, e.g. `5,6,7` or `5-7`.
    pub layers: String,
    /// Channel blocks, e.g. `8:0+16,9:32+32`; when set it takes precedence
    /// over `layers` as identity selection.
    pub channels: String,
    pub regions: String,
    pub operand: OperandPair,
    pub color_match: bool,
    pub checkpoint: Option<PathBuf>,

    pub lambda_l2: f64,
    pub lambda_id: f64,
    pub learning_rate: f64,
    pub split: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub identity_sign: IdentitySign,
    pub latent_norm: LatentNorm,
    pub seeds_per_image: usize,
    pub pass_rule: PassMode,
    pub low_weight_alpha: f64,

    pub gallery_split: f64,
    pub impostor_offsets: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub kmeans_restarts: usize,
    /// Attribute indices for the distribution report; empty means all.
    pub eval_attributes: Vec<usize>,

    pub n_faces: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let metric = MetricConfig::default();
        let search = SearchConfig::default();
        let train = TrainingConfig::default();
        let eval = EvalConfig::default();
        Self {
            backend: SYNTHETIC.into(),
            synthetic_config: None,
            seed: 0,
            out: PathBuf::from("out"),
            input: None,
            labels: None,
            anonymized: None,
            cache_dir: None,
            image_format: ImageFormat::Png,
            alpha: metric.alpha,
            beta: metric.beta,
            gamma: metric.gamma,
            theta: metric.theta,
            attribute_logit: metric.attribute_logit,
            n_pairs: search.n_pairs,
            symmetric: search.symmetric,
            window_sizes: Vec::new(),
            greedy_k: 3,
            search_layers: "5-9".into(),
            block_size: 16,
            smoothing: search.smoothing,
            stop_budget: None,
            stop_threshold: None,
            mode: Mode::Layers,
            layers: "5,6,7".into(),
            channels: String::new(),
            regions: "face".into(),
            operand: OperandPair::SourceRandom,
            color_match: false,
            checkpoint: None,
            lambda_l2: train.lambda_l2,
            lambda_id: train.lambda_id,
            learning_rate: train.learning_rate,
            split: train.split,
            epochs: train.epochs,
            batch_size: train.batch_size,
            weight_decay: train.weight_decay,
            identity_sign: train.identity_sign,
            latent_norm: train.latent_norm,
            seeds_per_image: 1,
            pass_rule: PassMode::Pass,
            low_weight_alpha: 0.9,
            gallery_split: eval.gallery_split,
            impostor_offsets: eval.impostor_offsets,
            k_min: 2,
            k_max: 20,
            kmeans_restarts: eval.diversity.restarts,
            eval_attributes: Vec::new(),
            n_faces: 16,
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub backend: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub set: Vec<String>,
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// What a command needs beyond the common keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Requirement {
    Input,
    Anonymized,
    Checkpoint,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for item in &overrides.set {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("`--set {item}` is not of the form key=value")))?;
            table.insert(k.trim().to_string(), parse_value(v.trim()));
        }
        if let Some(b) = &overrides.backend {
            table.insert("backend".into(), toml::Value::String(b.clone()));
        }
        if let Some(s) = overrides.seed {
            let v = i64::try_from(s).map_err(|_| CliError::Config(format!("seed {s} exceeds the TOML integer range")))?;
            table.insert("seed".into(), toml::Value::Integer(v));
        }
        if let Some(o) = &overrides.out {
            table.insert("out".into(), toml::Value::String(o.display().to_string()));
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
    }

    /// Checks values and the existence of every referenced path. Runs
    /// before any output is written.
    pub fn validate(&self, needs: &[Requirement]) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.alpha > 0.0 && self.alpha.is_finite() && self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("alpha and beta must be positive (got {}, {})", self.alpha, self.beta));
        }
        self.metric().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.training().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.backend != SYNTHETIC && !Path::new(&self.backend).join(MANIFEST_FILE).is_file() {
            return bad(format!("backend `{}` is neither `{SYNTHETIC}` nor a directory with {MANIFEST_FILE}", self.backend));
        }
        let paths = [
            ("synthetic_config", &self.synthetic_config),
            ("input", &self.input),
            ("labels", &self.labels),
            ("anonymized", &self.anonymized),
            ("checkpoint", &self.checkpoint),
        ];
        for (name, p) in paths {
            if let Some(p) = p {
                if !p.exists() {
                    return bad(format!("{name} path {} does not exist", p.display()));
                }
            }
        }
        for need in needs {
            let (name, missing) = match need {
                Requirement::Input => ("input", self.input.is_none()),
                Requirement::Anonymized => ("anonymized", self.anonymized.is_none()),
                Requirement::Checkpoint => ("checkpoint", self.checkpoint.is_none()),
            };
            if missing {
                return bad(format!("`{name}` must be set for this command"));
            }
        }
        self.layer_set()?;
        self.channel_blocks()?;
        self.search_layer_set()?;
        self.region_set()?;
        if self.n_pairs == 0 || self.block_size == 0 || self.greedy_k == 0 {
            return bad("n_pairs, block_size and greedy_k must be positive".into());
        }
        if self.seeds_per_image == 0 {
            return bad("seeds_per_image must be positive".into());
        }
        if !(self.gallery_split > 0.0 && self.gallery_split < 1.0) {
            return bad(format!("gallery_split {} outside (0, 1)", self.gallery_split));
        }
        if self.k_min < 2 || self.k_max < self.k_min {
            return bad(format!("k range {}..={} is invalid", self.k_min, self.k_max));
        }
        if !(self.low_weight_alpha > 0.0 && self.low_weight_alpha <= 1.0) {
            return bad(format!("low_weight_alpha {} outside (0, 1]", self.low_weight_alpha));
        }
        if let Some(t) = self.stop_threshold {
            if !t.is_finite() {
                return bad(format!("stop_threshold {t} is not finite"));
            }
        }
        Ok(())
    }

    /// Shape-dependent checks once the backend is known.
    pub fn validate_for(&self, shape: LatentShape) -> Result<(), CliError> {
        let check = |r: idswap_core::Result<()>| r.map_err(|e| CliError::Config(e.to_string()));
        check(self.layer_set()?.validate(shape))?;
        check(self.channel_blocks()?.validate(shape))?;
        check(self.search_layer_set()?.validate(shape))?;
        if self.block_size > shape.n_channels {
            return Err(CliError::Config(format!(
                "block_size {} exceeds {} channels",
                self.block_size, shape.n_channels
            )));
        }
        Ok(())
    }

    fn parse<T: std::str::FromStr<Err = idswap_core::Error>>(key: &str, s: &str) -> Result<T, CliError> {
        s.parse().map_err(|e| CliError::Config(format!("{key}: {e}")))
    }

    pub fn layer_set(&self) -> Result<LayerSet, CliError> {
        Self::parse("layers", &self.layers)
    }

    pub fn channel_blocks(&self) -> Result<ChannelBlockSet, CliError> {
        Self::parse("channels", &self.channels)
    }

    pub fn search_layer_set(&self) -> Result<LayerSet, CliError> {
        Self::parse("search_layers", &self.search_layers)
    }

    pub fn region_set(&self) -> Result<RegionSet, CliError> {
        Self::parse("regions", &self.regions)
    }

    /// Identity selection for swaps and masks: channel blocks when given,
    /// otherwise the layer set.
    pub fn selection(&self) -> Result<Selection, CliError> {
        let blocks = self.channel_blocks()?;
        Ok(if blocks.is_empty() {
            Selection::Layers(self.layer_set()?)
        } else {
            Selection::Channels(blocks)
        })
    }

    pub fn metric(&self) -> MetricConfig {
        MetricConfig {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            theta: self.theta,
            attribute_logit: self.attribute_logit,
        }
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            metric: self.metric(),
            symmetric: self.symmetric,
            n_pairs: self.n_pairs,
            smoothing: self.smoothing,
        }
    }

    /// Threshold wins over budget; with neither, the distance target
    /// `gamma` is used.
    pub fn stop(&self) -> StopCriterion {
        match (self.stop_threshold, self.stop_budget) {
            (Some(t), _) => StopCriterion::Threshold(t),
            (None, Some(b)) => StopCriterion::Budget(b),
            (None, None) => StopCriterion::Threshold(self.gamma),
        }
    }

    pub fn mask_anon(&self) -> Result<MaskAnonConfig, CliError> {
        Ok(MaskAnonConfig {
            regions: self.region_set()?,
            operand: self.operand,
            color_match: self.color_match,
        })
    }

    pub fn training(&self) -> TrainingConfig {
        TrainingConfig {
            lambda_l2: self.lambda_l2,
            lambda_id: self.lambda_id,
            learning_rate: self.learning_rate,
            split: self.split,
            epochs: self.epochs,
            batch_size: self.batch_size,
            weight_decay: self.weight_decay,
            identity_sign: self.identity_sign,
            latent_norm: self.latent_norm,
            seed: self.seed,
        }
    }

    pub fn pass(&self) -> PassRule {
        match self.pass_rule {
            PassMode::Pass => PassRule::Pass,
            PassMode::LowWeight => PassRule::LowWeight {
                alpha: self.low_weight_alpha,
            },
            PassMode::Learned => PassRule::Learned,
        }
    }

    pub fn eval(&self) -> EvalConfig {
        EvalConfig {
            metric: self.metric(),
            gallery_split: self.gallery_split,
            impostor_offsets: self.impostor_offsets,
            diversity: DiversityConfig {
                k_grid: (self.k_min..=self.k_max).collect(),
                restarts: self.kmeans_restarts,
                seed: self.seed,
            },
            attributes: self.eval_attributes.clone(),
        }
    }

    pub fn cache_path(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.out.join("cache"))
    }
}
