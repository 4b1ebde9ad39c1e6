//! Model configuration: architecture extents, ablation toggles, optimizer
//! settings, and the flat dotted-key text format used for config files and
//! the checkpoint config echo.
//!
//! The text format is strict: every key is required, unknown keys are
//! errors, and serialize → parse → serialize is byte-identical.

use crate::error::{Error, Result};
use sha2::{Digest, Sha256};
use std::fmt;

/// Compute precision for forward/backward passes.
///
/// `F32` emulates 32-bit compute by rounding every op output and parameter
/// update through `f32`. `F64` is the verification mode; gradient checking
/// is only meaningful there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn quantize(self, v: f64) -> f64 {
        match self {
            Precision::F32 => v as f32 as f64,
            Precision::F64 => v,
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Precision::F32 => write!(f, "f32"),
            Precision::F64 => write!(f, "f64"),
        }
    }
}

/// Where the adaptive word selector sits relative to the frozen MHA/FF pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AwsPlacement {
    Before,
    Between,
    After,
}

impl fmt::Display for AwsPlacement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AwsPlacement::Before => write!(f, "before"),
            AwsPlacement::Between => write!(f, "between"),
            AwsPlacement::After => write!(f, "after"),
        }
    }
}

/// Which tokens query the gaze features inside the gaze injector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryMode {
    Cls,
    Patch,
    All,
}

impl fmt::Display for QueryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryMode::Cls => write!(f, "cls"),
            QueryMode::Patch => write!(f, "patch"),
            QueryMode::All => write!(f, "all"),
        }
    }
}

/// Which visual feature pairs with the text feature in the contrastive loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmcFeature {
    /// The fused visual feature (projection of image-encoder and
    /// appearance-gaze embeddings added elementwise).
    Fused,
    /// The appearance-gaze embedding alone, projected to the shared space.
    Agpm,
}

impl fmt::Display for CmcFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmcFeature::Fused => write!(f, "fused"),
            CmcFeature::Agpm => write!(f, "agpm"),
        }
    }
}

/// Source of per-image gaze vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GazeSource {
    /// Deterministic eye-region stand-in estimator.
    StandIn,
    /// Verbatim `gaze` field from the manifest record.
    Manifest,
}

impl fmt::Display for GazeSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GazeSource::StandIn => write!(f, "standin"),
            GazeSource::Manifest => write!(f, "manifest"),
        }
    }
}

/// Full model + run configuration. One flat struct; see `to_text` for the
/// on-disk key names.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    // Core extents.
    pub image: usize,
    pub patch: usize,
    /// Number of image patches m; must equal (image/patch)^2.
    pub patches: usize,
    /// Appearance token dimension a.
    pub dim_appearance: usize,
    /// Image-encoder token dimension d.
    pub dim_image: usize,
    /// Shared visual/text feature dimension s.
    pub dim_shared: usize,
    /// Attention head count r (used by every attention in the model).
    pub heads: usize,
    /// Number of seen attribution classes x (real class included).
    pub classes: usize,
    pub lora_rank: usize,
    pub lora_alpha: f64,

    // Gaze encoder.
    pub gaze_enabled: bool,
    pub gaze_source: GazeSource,

    // Appearance-gaze perception module.
    pub agpm_enabled: bool,
    /// Output channels of each stride-2 stage of the appearance encoder.
    pub ae_channels: Vec<usize>,
    /// Declared feature-map extents c, h, w (validated against the stack).
    pub feature_c: usize,
    pub feature_h: usize,
    pub feature_w: usize,
    /// Transformer block count E.
    pub agpm_blocks: usize,

    // Gaze-aware image encoder.
    pub gie_enabled: bool,
    /// Transformer block count N.
    pub gie_blocks: usize,
    /// Number of trailing blocks followed by a LoRA layer.
    pub gie_lora_blocks: usize,
    pub gie_query_mode: QueryMode,

    // Language refinement encoder.
    pub lre_enabled: bool,
    /// Transformer block count L.
    pub lre_blocks: usize,
    /// Token sequence length t.
    pub lre_tokens: usize,
    pub lre_aws_enabled: bool,
    pub lre_aws_placement: AwsPlacement,
    pub lre_lora_blocks: usize,
    /// Prompt hierarchy depth 1..=4.
    pub lre_prompt_level: usize,

    // Loss.
    pub cmc_feature: CmcFeature,

    // Optimizer.
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    /// Learning rate drops by 10x every this many epochs.
    pub lr_decay_epochs: usize,

    // Training run.
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub precision: Precision,
}

impl ModelConfig {
    /// Desk-scale preset: small enough for CPU training in minutes.
    pub fn desk() -> Self {
        ModelConfig {
            image: 32,
            patch: 8,
            patches: 16,
            dim_appearance: 24,
            dim_image: 32,
            dim_shared: 16,
            heads: 4,
            classes: 5,
            lora_rank: 2,
            lora_alpha: 4.0,
            gaze_enabled: true,
            gaze_source: GazeSource::StandIn,
            agpm_enabled: true,
            ae_channels: vec![6, 8, 8],
            feature_c: 8,
            feature_h: 4,
            feature_w: 4,
            agpm_blocks: 2,
            gie_enabled: true,
            gie_blocks: 4,
            gie_lora_blocks: 2,
            gie_query_mode: QueryMode::Cls,
            lre_enabled: true,
            lre_blocks: 2,
            lre_tokens: 16,
            lre_aws_enabled: true,
            lre_aws_placement: AwsPlacement::Before,
            lre_lora_blocks: 1,
            lre_prompt_level: 4,
            cmc_feature: CmcFeature::Fused,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-3,
            lr_decay_epochs: 15,
            batch: 8,
            epochs: 10,
            seed: 7,
            precision: Precision::F32,
        }
    }

    /// Full-scale preset echoing the published hyperparameters. Recorded for
    /// reference; the appearance-encoder extents (7x7 from 256 input) are not
    /// reachable with exact stride-2 halving, so this preset does not pass
    /// `validate` and is not runnable here.
    pub fn paper() -> Self {
        ModelConfig {
            image: 256,
            patch: 32,
            patches: 64,
            dim_appearance: 1024,
            dim_image: 768,
            dim_shared: 512,
            heads: 8,
            classes: 11,
            lora_rank: 8,
            lora_alpha: 32.0,
            gaze_enabled: true,
            gaze_source: GazeSource::StandIn,
            agpm_enabled: true,
            ae_channels: vec![64, 128, 256, 512, 512],
            feature_c: 512,
            feature_h: 7,
            feature_w: 7,
            agpm_blocks: 6,
            gie_enabled: true,
            gie_blocks: 12,
            gie_lora_blocks: 2,
            gie_query_mode: QueryMode::Cls,
            lre_enabled: true,
            lre_blocks: 12,
            lre_tokens: 308,
            lre_aws_enabled: true,
            lre_aws_placement: AwsPlacement::Before,
            lre_lora_blocks: 1,
            lre_prompt_level: 4,
            cmc_feature: CmcFeature::Fused,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-3,
            lr_decay_epochs: 15,
            batch: 32,
            epochs: 60,
            seed: 7,
            precision: Precision::F32,
        }
    }

    /// Number of appearance tokens n = h*w.
    pub fn appearance_tokens(&self) -> usize {
        self.feature_h * self.feature_w
    }

    /// Per-head dimension for a given model width.
    pub fn head_dim(&self, width: usize) -> usize {
        width / self.heads
    }

    /// Check internal consistency: divisibility constraints, extent
    /// cross-checks, and toggle sanity.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.image == 0 || self.patch == 0 {
            return fail("image and patch must be positive".into());
        }
        if !self.image.is_multiple_of(self.patch) {
            return fail(format!(
                "image side {} not divisible by patch side {}",
                self.image, self.patch
            ));
        }
        let side = self.image / self.patch;
        if self.patches != side * side {
            return fail(format!(
                "patches = {} but (image/patch)^2 = {}",
                self.patches,
                side * side
            ));
        }
        for (name, width) in [
            ("dim_appearance", self.dim_appearance),
            ("dim_image", self.dim_image),
            ("dim_shared", self.dim_shared),
        ] {
            if width == 0 || width % self.heads != 0 {
                return fail(format!(
                    "{name} = {width} must be a positive multiple of heads = {}",
                    self.heads
                ));
            }
        }
        if self.ae_channels.is_empty() {
            return fail("ae_channels must list at least one stage".into());
        }
        if *self.ae_channels.last().unwrap() != self.feature_c {
            return fail(format!(
                "feature_c = {} but last appearance stage has {} channels",
                self.feature_c,
                self.ae_channels.last().unwrap()
            ));
        }
        let reduced = self.image >> self.ae_channels.len();
        if reduced << self.ae_channels.len() != self.image
            || reduced != self.feature_h
            || reduced != self.feature_w
        {
            return fail(format!(
                "{} stride-2 stages map {} to {}, not the declared {}x{}",
                self.ae_channels.len(),
                self.image,
                reduced,
                self.feature_h,
                self.feature_w
            ));
        }
        if self.classes < 2 {
            return fail("need at least two attribution classes".into());
        }
        if self.lora_rank == 0 {
            return fail("lora_rank must be positive".into());
        }
        if self.gie_lora_blocks > self.gie_blocks {
            return fail(format!(
                "gie_lora_blocks {} exceeds gie_blocks {}",
                self.gie_lora_blocks, self.gie_blocks
            ));
        }
        if self.lre_lora_blocks > self.lre_blocks {
            return fail(format!(
                "lre_lora_blocks {} exceeds lre_blocks {}",
                self.lre_lora_blocks, self.lre_blocks
            ));
        }
        if self.lre_tokens < 3 {
            return fail("lre_tokens must fit BOS, EOS and padding".into());
        }
        if !(1..=4).contains(&self.lre_prompt_level) {
            return fail(format!(
                "lre_prompt_level {} outside 1..=4",
                self.lre_prompt_level
            ));
        }
        if !self.agpm_enabled && !self.gie_enabled {
            return fail("at least one of agpm/gie must be enabled".into());
        }
        if self.lr <= 0.0 {
            return fail("lr must be positive".into());
        }
        if self.batch == 0 {
            return fail("batch must be positive".into());
        }
        if self.lr_decay_epochs == 0 {
            return fail("lr_decay_epochs must be positive".into());
        }
        Ok(())
    }

    /// Serialize to the flat dotted-key text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("model.image", self.image.to_string());
        kv("model.patch", self.patch.to_string());
        kv("model.patches", self.patches.to_string());
        kv("model.dim_appearance", self.dim_appearance.to_string());
        kv("model.dim_image", self.dim_image.to_string());
        kv("model.dim_shared", self.dim_shared.to_string());
        kv("model.heads", self.heads.to_string());
        kv("model.classes", self.classes.to_string());
        kv("model.lora_rank", self.lora_rank.to_string());
        kv("model.lora_alpha", self.lora_alpha.to_string());
        kv("gaze.enabled", self.gaze_enabled.to_string());
        kv("gaze.source", self.gaze_source.to_string());
        kv("agpm.enabled", self.agpm_enabled.to_string());
        kv(
            "agpm.ae_channels",
            self.ae_channels
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("agpm.feature_c", self.feature_c.to_string());
        kv("agpm.feature_h", self.feature_h.to_string());
        kv("agpm.feature_w", self.feature_w.to_string());
        kv("agpm.blocks", self.agpm_blocks.to_string());
        kv("gie.enabled", self.gie_enabled.to_string());
        kv("gie.blocks", self.gie_blocks.to_string());
        kv("gie.lora_blocks", self.gie_lora_blocks.to_string());
        kv("gie.query_mode", self.gie_query_mode.to_string());
        kv("lre.enabled", self.lre_enabled.to_string());
        kv("lre.blocks", self.lre_blocks.to_string());
        kv("lre.tokens", self.lre_tokens.to_string());
        kv("lre.aws_enabled", self.lre_aws_enabled.to_string());
        kv("lre.aws_placement", self.lre_aws_placement.to_string());
        kv("lre.lora_blocks", self.lre_lora_blocks.to_string());
        kv("lre.prompt_level", self.lre_prompt_level.to_string());
        kv("loss.cmc_feature", self.cmc_feature.to_string());
        kv("optim.lr", self.lr.to_string());
        kv("optim.beta1", self.beta1.to_string());
        kv("optim.beta2", self.beta2.to_string());
        kv("optim.epsilon", self.epsilon.to_string());
        kv("optim.weight_decay", self.weight_decay.to_string());
        kv("optim.lr_decay_epochs", self.lr_decay_epochs.to_string());
        kv("train.batch", self.batch.to_string());
        kv("train.epochs", self.epochs.to_string());
        kv("run.seed", self.seed.to_string());
        kv("run.precision", self.precision.to_string());
        out
    }

    /// Parse the flat text format. Every key must appear exactly once;
    /// unknown keys are config errors.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::desk();
        let mut seen: Vec<String> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{}`",
                    lineno + 1,
                    key
                )));
            }
            seen.push(key.to_string());
            apply_key(&mut cfg, key, value)
                .map_err(|e| Error::Config(format!("line {}: {}", lineno + 1, e)))?;
        }
        let expected = all_keys();
        for k in &expected {
            if !seen.iter().any(|s| s == k) {
                return Err(Error::Config(format!("missing key `{}`", k)));
            }
        }
        Ok(cfg)
    }

    /// Stable hex digest of the canonical serialization.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_text().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{:02x}", b)).collect()
    }
}

fn all_keys() -> Vec<&'static str> {
    vec![
        "model.image",
        "model.patch",
        "model.patches",
        "model.dim_appearance",
        "model.dim_image",
        "model.dim_shared",
        "model.heads",
        "model.classes",
        "model.lora_rank",
        "model.lora_alpha",
        "gaze.enabled",
        "gaze.source",
        "agpm.enabled",
        "agpm.ae_channels",
        "agpm.feature_c",
        "agpm.feature_h",
        "agpm.feature_w",
        "agpm.blocks",
        "gie.enabled",
        "gie.blocks",
        "gie.lora_blocks",
        "gie.query_mode",
        "lre.enabled",
        "lre.blocks",
        "lre.tokens",
        "lre.aws_enabled",
        "lre.aws_placement",
        "lre.lora_blocks",
        "lre.prompt_level",
        "loss.cmc_feature",
        "optim.lr",
        "optim.beta1",
        "optim.beta2",
        "optim.epsilon",
        "optim.weight_decay",
        "optim.lr_decay_epochs",
        "train.batch",
        "train.epochs",
        "run.seed",
        "run.precision",
    ]
}

fn parse_usize(v: &str) -> std::result::Result<usize, String> {
    v.parse().map_err(|_| format!("`{}` is not an integer", v))
}

fn parse_f64(v: &str) -> std::result::Result<f64, String> {
    v.parse().map_err(|_| format!("`{}` is not a number", v))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("`{}` is not true/false", v)),
    }
}

fn apply_key(cfg: &mut ModelConfig, key: &str, v: &str) -> std::result::Result<(), String> {
    match key {
        "model.image" => cfg.image = parse_usize(v)?,
        "model.patch" => cfg.patch = parse_usize(v)?,
        "model.patches" => cfg.patches = parse_usize(v)?,
        "model.dim_appearance" => cfg.dim_appearance = parse_usize(v)?,
        "model.dim_image" => cfg.dim_image = parse_usize(v)?,
        "model.dim_shared" => cfg.dim_shared = parse_usize(v)?,
        "model.heads" => cfg.heads = parse_usize(v)?,
        "model.classes" => cfg.classes = parse_usize(v)?,
        "model.lora_rank" => cfg.lora_rank = parse_usize(v)?,
        "model.lora_alpha" => cfg.lora_alpha = parse_f64(v)?,
        "gaze.enabled" => cfg.gaze_enabled = parse_bool(v)?,
        "gaze.source" => {
            cfg.gaze_source = match v {
                "standin" => GazeSource::StandIn,
                "manifest" => GazeSource::Manifest,
                _ => return Err(format!("unknown gaze source `{}`", v)),
            }
        }
        "agpm.enabled" => cfg.agpm_enabled = parse_bool(v)?,
        "agpm.ae_channels" => {
            cfg.ae_channels = v
                .split(',')
                .map(|c| parse_usize(c.trim()))
                .collect::<std::result::Result<Vec<_>, _>>()?;
        }
        "agpm.feature_c" => cfg.feature_c = parse_usize(v)?,
        "agpm.feature_h" => cfg.feature_h = parse_usize(v)?,
        "agpm.feature_w" => cfg.feature_w = parse_usize(v)?,
        "agpm.blocks" => cfg.agpm_blocks = parse_usize(v)?,
        "gie.enabled" => cfg.gie_enabled = parse_bool(v)?,
        "gie.blocks" => cfg.gie_blocks = parse_usize(v)?,
        "gie.lora_blocks" => cfg.gie_lora_blocks = parse_usize(v)?,
        "gie.query_mode" => {
            cfg.gie_query_mode = match v {
                "cls" => QueryMode::Cls,
                "patch" => QueryMode::Patch,
                "all" => QueryMode::All,
                _ => return Err(format!("unknown query mode `{}`", v)),
            }
        }
        "lre.enabled" => cfg.lre_enabled = parse_bool(v)?,
        "lre.blocks" => cfg.lre_blocks = parse_usize(v)?,
        "lre.tokens" => cfg.lre_tokens = parse_usize(v)?,
        "lre.aws_enabled" => cfg.lre_aws_enabled = parse_bool(v)?,
        "lre.aws_placement" => {
            cfg.lre_aws_placement = match v {
                "before" => AwsPlacement::Before,
                "between" => AwsPlacement::Between,
                "after" => AwsPlacement::After,
                _ => return Err(format!("unknown aws placement `{}`", v)),
            }
        }
        "lre.lora_blocks" => cfg.lre_lora_blocks = parse_usize(v)?,
        "lre.prompt_level" => cfg.lre_prompt_level = parse_usize(v)?,
        "loss.cmc_feature" => {
            cfg.cmc_feature = match v {
                "fused" => CmcFeature::Fused,
                "agpm" => CmcFeature::Agpm,
                _ => return Err(format!("unknown cmc feature `{}`", v)),
            }
        }
        "optim.lr" => cfg.lr = parse_f64(v)?,
        "optim.beta1" => cfg.beta1 = parse_f64(v)?,
        "optim.beta2" => cfg.beta2 = parse_f64(v)?,
        "optim.epsilon" => cfg.epsilon = parse_f64(v)?,
        "optim.weight_decay" => cfg.weight_decay = parse_f64(v)?,
        "optim.lr_decay_epochs" => cfg.lr_decay_epochs = parse_usize(v)?,
        "train.batch" => cfg.batch = parse_usize(v)?,
        "train.epochs" => cfg.epochs = parse_usize(v)?,
        "run.seed" => cfg.seed = v.parse().map_err(|_| format!("`{}` is not a seed", v))?,
        "run.precision" => {
            cfg.precision = match v {
                "f32" => Precision::F32,
                "f64" => Precision::F64,
                _ => return Err(format!("unknown precision `{}`", v)),
            }
        }
        _ => return Err(format!("unknown key `{}`", key)),
    }
    Ok(())
}
