//! TOML run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sigverify_core::dtw::DtwOptions;
use sigverify_core::eval::ReportFormat;
use sigverify_core::ingest::ColumnSchema;
use sigverify_core::render::RenderConfig;
use sigverify_core::scoring::TokenClassSets;
use sigverify_core::vlm::{LiveConfig, MockScript, PromptConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Where `render`, `run`, `dtw` and `eval` write their outputs.
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub synth: SynthConfig,
    pub render: RenderConfig,
    pub prompt: PromptConfig,
    pub transport: TransportConfig,
    pub scoring: TokenClassSets,
    pub dtw: DtwOptions,
    pub run: RunSettings,
    pub eval: EvalSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub protocol: PathBuf,
    pub signatures: PathBuf,
    pub schema: ColumnSchema,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            protocol: PathBuf::from("data/protocol.txt"),
            signatures: PathBuf::from("data/signatures"),
            schema: ColumnSchema::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub subjects: usize,
    pub genuine: usize,
    pub skilled: usize,
    pub out_dir: PathBuf,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            subjects: 8,
            genuine: 4,
            skilled: 3,
            out_dir: PathBuf::from("data"),
        }
    }
}

fn yes() -> bool {
    true
}

/// Exactly one transport per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransportConfig {
    Mock {
        #[serde(default = "yes")]
        logprobs: bool,
        script: MockScript,
    },
    Replay {
        cassette: PathBuf,
    },
    Live {
        #[serde(flatten)]
        api: LiveConfig,
        /// Append every reply to this cassette.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        record: Option<PathBuf>,
    },
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig::Mock {
            logprobs: true,
            script: MockScript::Seeded {
                seed: 42,
                malformed_rate: 0.0,
                refusal_rate: 0.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub workers: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings { workers: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub formats: Vec<ReportFormat>,
    /// Channels to report; all channels found in the score files when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<String>>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            formats: ReportFormat::ALL.to_vec(),
            channels: None,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: PathBuf::from("out"),
            dataset: DatasetConfig::default(),
            synth: SynthConfig::default(),
            render: RenderConfig::default(),
            prompt: PromptConfig::default(),
            transport: TransportConfig::default(),
            scoring: TokenClassSets::default(),
            dtw: DtwOptions::default(),
            run: RunSettings::default(),
            eval: EvalSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::usage(format!("invalid config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Read a config file. Relative paths inside it are taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.dataset.protocol);
        fix(&mut self.dataset.signatures);
        fix(&mut self.synth.out_dir);
        match &mut self.transport {
            TransportConfig::Replay { cassette } => fix(cassette),
            TransportConfig::Live { record: Some(r), .. } => fix(r),
            _ => {}
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.dataset.schema.validate().map_err(|e| CliError::usage(e.to_string()))?;
        self.render.validate().map_err(|e| CliError::usage(e.to_string()))?;
        self.scoring.validate().map_err(|e| CliError::usage(e.to_string()))?;
        if self.run.workers == 0 {
            return Err(CliError::usage("run.workers must be at least 1"));
        }
        if let TransportConfig::Mock {
            script: MockScript::Seeded {
                malformed_rate,
                refusal_rate,
                ..
            },
            ..
        } = &self.transport
        {
            let ok = |r: f64| (0.0..=1.0).contains(&r);
            if !ok(*malformed_rate) || !ok(*refusal_rate) || malformed_rate + refusal_rate > 1.0 {
                return Err(CliError::usage("mock malformed_rate and refusal_rate must lie in [0, 1] and sum to at most 1"));
            }
        }
        Ok(())
    }
}
