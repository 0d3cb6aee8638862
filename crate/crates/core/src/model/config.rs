//! Pipeline configuration.
//!
//! Every invented threshold used by the pipeline lives here with its default,
//! so a deployment can override any of them from a TOML file.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::money::Currency;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0} must be in (0, 1], got {1}")]
    ThresholdOutOfRange(&'static str, f64),
    #[error("target_dpi must be in [72, 1200], got {0}")]
    DpiOutOfRange(u32),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// API key for the live LLM client. Never printed.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey(String);

impl SecretKey {
    pub fn new(key: impl Into<String>) -> Self {
        SecretKey(key.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(***)")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatePolicy {
    #[default]
    DayFirst,
    MonthFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessTuning {
    pub weight_sharpness: f64,
    pub weight_contrast: f64,
    pub weight_skew: f64,
    pub sharpness_norm: f64,
    pub skew_norm_deg: f64,
    pub denoise_below_sharpness: f64,
    pub denoise_above_salt: f64,
    pub deskew_above_deg: f64,
    pub stretch_below_contrast: f64,
    pub stretch_low_percentile: f64,
    pub stretch_high_percentile: f64,
    pub skew_search_deg: f64,
    pub skew_step_deg: f64,
    pub min_dark_fraction: f64,
}

impl Default for PreprocessTuning {
    fn default() -> Self {
        PreprocessTuning {
            weight_sharpness: 0.5,
            weight_contrast: 0.3,
            weight_skew: 0.2,
            sharpness_norm: 500.0,
            skew_norm_deg: 15.0,
            denoise_below_sharpness: 200.0,
            denoise_above_salt: 0.01,
            deskew_above_deg: 0.3,
            stretch_below_contrast: 0.5,
            stretch_low_percentile: 2.0,
            stretch_high_percentile: 98.0,
            skew_search_deg: 15.0,
            skew_step_deg: 0.1,
            min_dark_fraction: 0.001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutTuning {
    /// Vertical overlap (fraction of the shorter token) to share a line.
    pub line_overlap: f64,
    /// Horizontal gap, in median character widths, that splits a line into
    /// separate segments.
    pub segment_gap_chars: f64,
    /// Maximum vertical gap between merged lines, in median line heights.
    pub block_gap_lines: f64,
    pub block_span_overlap: f64,
    pub graph_band_overlap: f64,
    pub graph_span_overlap: f64,
    pub table_min_rows: usize,
    pub table_min_columns: usize,
    pub table_min_numeric_columns: usize,
    pub table_align_chars: f64,
    /// Gap, in median character widths, separating table cells in a row.
    pub table_cell_gap_chars: f64,
    pub table_row_gap_lines: f64,
    pub header_band: f64,
    pub footer_band: f64,
}

impl Default for LayoutTuning {
    fn default() -> Self {
        LayoutTuning {
            line_overlap: 0.5,
            segment_gap_chars: 3.0,
            block_gap_lines: 1.5,
            block_span_overlap: 0.2,
            graph_band_overlap: 0.5,
            graph_span_overlap: 0.3,
            table_min_rows: 3,
            table_min_columns: 3,
            table_min_numeric_columns: 2,
            table_align_chars: 0.5,
            table_cell_gap_chars: 1.5,
            table_row_gap_lines: 2.5,
            header_band: 0.2,
            footer_band: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfidenceTuning {
    pub embedded_base: f64,
    pub llm_ungrounded_base: f64,
    pub regex_base: f64,
    pub layout_base: f64,
    /// Remaining doubt is multiplied by this when extractors agree.
    pub agreement_shrink: f64,
    pub conflict_factor: f64,
    pub arithmetic_pass_floor: f64,
    pub arithmetic_fail_factor: f64,
}

impl Default for ConfidenceTuning {
    fn default() -> Self {
        ConfidenceTuning {
            embedded_base: 0.95,
            llm_ungrounded_base: 0.60,
            regex_base: 0.75,
            layout_base: 0.70,
            agreement_shrink: 0.5,
            conflict_factor: 0.8,
            arithmetic_pass_floor: 0.90,
            arithmetic_fail_factor: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnomalyTuning {
    pub min_history: usize,
    pub z_threshold: f64,
}

impl Default for AnomalyTuning {
    fn default() -> Self {
        AnomalyTuning {
            min_history: 5,
            z_threshold: 3.0,
        }
    }
}

/// Built-in OCR engine definitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EngineSpec {
    MockPerfect {
        sidecar_root: PathBuf,
    },
    MockNoisy {
        sidecar_root: PathBuf,
        rate: f64,
        #[serde(default)]
        seed: u64,
    },
    External {
        id: Option<String>,
        /// Shell command with `{input.png}` and `{output.tsv}` placeholders.
        command: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CascadeMetric {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcrSettings {
    pub primary: Option<EngineSpec>,
    pub secondary: Option<EngineSpec>,
    pub embedded_min_chars_per_page: usize,
    /// Quality score below which the secondary engine runs first.
    pub low_quality_score: f64,
    pub metric: CascadeMetric,
}

impl Default for OcrSettings {
    fn default() -> Self {
        OcrSettings {
            primary: None,
            secondary: None,
            embedded_min_chars_per_page: 32,
            low_quality_score: 0.4,
            metric: CascadeMetric::Mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LlmMode {
    /// Answer from `<dir>/<sha256(prompt)>.txt` fixtures.
    Replay { dir: PathBuf },
    Live,
    /// Always refuses; exercises the deterministic fallbacks.
    #[default]
    Refusal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    pub mode: LlmMode,
    pub endpoint: String,
    pub model: String,
    pub timeout_ms: u64,
    pub max_attempts: u32,
    pub backoff_ms: Vec<u64>,
    pub max_in_flight: usize,
    pub max_prompt_chars: usize,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            mode: LlmMode::default(),
            endpoint: "http://127.0.0.1:8089/v1/complete".to_string(),
            model: "default".to_string(),
            timeout_ms: 30_000,
            max_attempts: 3,
            backoff_ms: vec![1_000, 2_000, 4_000],
            max_in_flight: 4,
            max_prompt_chars: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input_paths: Vec<PathBuf>,
    /// Read from `LLM_API_KEY`; never from files or the command line.
    #[serde(skip)]
    pub llm_auth_key: Option<SecretKey>,
    pub output_path: Option<PathBuf>,
    pub review_threshold: f64,
    pub ocr_escalation_threshold: f64,
    pub target_dpi: u32,
    pub date_policy: DatePolicy,
    pub default_currency: Currency,
    pub arithmetic_tolerance_minor: i64,
    pub preprocess: PreprocessTuning,
    pub layout: LayoutTuning,
    pub confidence: ConfidenceTuning,
    pub anomaly: AnomalyTuning,
    pub ocr: OcrSettings,
    pub llm: LlmSettings,
    /// Extra `phrase<TAB>field` label mappings.
    pub lexicon_path: Option<PathBuf>,
    /// Extra `from<TAB>to` OCR confusion mappings.
    pub confusion_map_path: Option<PathBuf>,
    /// Template with `{input}`, `{dpi}` and `{outdir}` placeholders.
    pub rasterizer_cmd: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input_paths: Vec::new(),
            llm_auth_key: None,
            output_path: None,
            review_threshold: 0.85,
            ocr_escalation_threshold: 0.80,
            target_dpi: 300,
            date_policy: DatePolicy::DayFirst,
            default_currency: Currency::USD,
            arithmetic_tolerance_minor: 1,
            preprocess: PreprocessTuning::default(),
            layout: LayoutTuning::default(),
            confidence: ConfidenceTuning::default(),
            anomaly: AnomalyTuning::default(),
            ocr: OcrSettings::default(),
            llm: LlmSettings::default(),
            lexicon_path: None,
            confusion_map_path: None,
            rasterizer_cmd: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("review_threshold", self.review_threshold),
            ("ocr_escalation_threshold", self.ocr_escalation_threshold),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(ConfigError::ThresholdOutOfRange(name, v));
            }
        }
        if !(72..=1200).contains(&self.target_dpi) {
            return Err(ConfigError::DpiOutOfRange(self.target_dpi));
        }
        if self.arithmetic_tolerance_minor < 0 {
            return Err(ConfigError::Invalid(
                "arithmetic_tolerance_minor must be non-negative".into(),
            ));
        }
        let p = &self.preprocess;
        if !(0.0..100.0).contains(&p.stretch_low_percentile)
            || !(p.stretch_low_percentile < p.stretch_high_percentile && p.stretch_high_percentile <= 100.0)
        {
            return Err(ConfigError::Invalid("stretch percentiles must satisfy 0 <= low < high <= 100".into()));
        }
        if self.llm.max_attempts == 0 {
            return Err(ConfigError::Invalid("llm.max_attempts must be at least 1".into()));
        }
        Ok(())
    }

    /// Load from TOML and validate. The API key is taken from the
    /// environment by the caller.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: PipelineConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}
