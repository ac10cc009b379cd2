use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use iohunter::features::FeatureConfig;
use iohunter::model::{Ablation, Conv, ModelConfig};
use iohunter::simnet::NetworkConfig;
use iohunter::synth::{preset, SynthConfig};
use iohunter::train::TrainConfig;

use crate::error::CliError;

/// Where the trace data comes from: real files or a synthetic preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub traces: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Imported per-user content embeddings (IOEM). Absent → hashed fallback.
    pub embeddings: Option<PathBuf>,
    pub preset: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub conv: Conv,
    pub hidden: usize,
    pub dropout: f64,
    pub ablation: Ablation,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            conv: Conv::Sage,
            hidden: 128,
            dropout: 0.2,
            ablation: Ablation::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lrs: Vec<f64>,
    pub patiences: Vec<usize>,
    pub max_epochs: usize,
    /// Number of seeds; seed `i` of a run is `seed + i`.
    pub seeds: u64,
    pub fractions: Vec<f64>,
    pub mlp_layers: Vec<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            lrs: t.lrs,
            patiences: t.patiences,
            max_epochs: t.max_epochs,
            seeds: t.seeds.len() as u64,
            fractions: t.fractions,
            mlp_layers: t.mlp_layers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSection {
    /// Synthetic presets taking part in leave-one-out transfer.
    pub countries: Vec<String>,
    pub target: String,
    pub fraction: f64,
}

impl Default for TransferSection {
    fn default() -> Self {
        TransferSection {
            countries: ["uae-like", "russia-like", "venezuela-like", "iran-like", "china-like"]
                .map(String::from)
                .to_vec(),
            target: "venezuela-like".into(),
            fraction: 0.001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataSection,
    /// Field overrides applied on top of the chosen preset.
    pub synth: BTreeMap<String, serde_json::Value>,
    pub network: NetworkConfig,
    pub features: FeatureConfig,
    pub model: ModelSection,
    pub train: TrainSection,
    pub transfer: TransferSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("runs"),
            data: DataSection::default(),
            synth: BTreeMap::new(),
            network: NetworkConfig::default(),
            features: FeatureConfig::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            transfer: TransferSection::default(),
        }
    }
}

/// Values given on the command line; each replaces the file value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub preset: Option<String>,
    pub fraction: Option<f64>,
    pub target_country: Option<String>,
    pub ablation: Option<Ablation>,
    pub conv: Option<Conv>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|_| CliError::Missing(path.to_path_buf()))?;
    Ok(sha256_hex(&bytes))
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|_| CliError::Missing(p.to_path_buf()))?;
                toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(p) = &o.preset {
            self.data.preset = Some(p.clone());
            self.data.traces = None;
            self.data.labels = None;
        }
        if let Some(f) = o.fraction {
            self.transfer.fraction = f;
        }
        if let Some(t) = &o.target_country {
            self.transfer.target = t.clone();
        }
        if let Some(a) = o.ablation {
            self.model.ablation = a;
        }
        if let Some(c) = o.conv {
            self.model.conv = c;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        match (&self.data.traces, &self.data.labels, &self.data.preset) {
            (Some(_), Some(_), None) | (None, None, Some(_)) => {}
            (Some(_), None, _) | (None, Some(_), _) => return bad("data.traces and data.labels go together".into()),
            (Some(_), Some(_), Some(_)) => return bad("set either data.traces/labels or data.preset, not both".into()),
            (None, None, None) => return bad("no data source: set data.preset or data.traces and data.labels".into()),
        }
        if self.data.preset.is_some() {
            self.synth_config()?;
        }
        self.train_config().validate().map_err(|e| CliError::Validation(e.to_string()))?;
        if !(0.0..1.0).contains(&self.model.dropout) {
            return bad(format!("model.dropout must be in [0, 1), got {}", self.model.dropout));
        }
        if self.model.hidden == 0 {
            return bad("model.hidden must be positive".into());
        }
        if self.features.d_c < iohunter::features::MIN_FALLBACK_DIM && self.data.embeddings.is_none() {
            return bad(format!("features.d_c must be at least {}", iohunter::features::MIN_FALLBACK_DIM));
        }
        if self.features.d_g < 2 {
            return bad("features.d_g must be at least 2".into());
        }
        if !iohunter::train::SPARSITY_FRACTIONS.contains(&self.transfer.fraction) {
            return bad(format!("fraction {} is not in the sparsity grid", self.transfer.fraction));
        }
        Ok(())
    }

    /// The preset with `[synth]` overrides applied; the run seed seeds it.
    pub fn synth_config(&self) -> Result<SynthConfig, CliError> {
        let name = self
            .data
            .preset
            .as_deref()
            .ok_or_else(|| CliError::Validation("data.preset is not set".into()))?;
        self.synth_for(name)
    }

    pub fn synth_for(&self, name: &str) -> Result<SynthConfig, CliError> {
        let mut cfg = preset(name).map_err(|e| CliError::Validation(e.to_string()))?;
        cfg.seed = self.seed;
        if !self.synth.is_empty() {
            let mut v = serde_json::to_value(&cfg).expect("synth config serializes");
            for (k, x) in &self.synth {
                if v.get(k).is_none() {
                    return Err(CliError::Validation(format!("unknown synth field {k:?}")));
                }
                v[k] = x.clone();
            }
            cfg = serde_json::from_value(v).map_err(|e| CliError::Validation(format!("synth: {e}")))?;
        }
        cfg.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lrs: self.train.lrs.clone(),
            patiences: self.train.patiences.clone(),
            max_epochs: self.train.max_epochs,
            seeds: (self.seed..self.seed + self.train.seeds).collect(),
            fractions: self.train.fractions.clone(),
            mlp_layers: self.train.mlp_layers.clone(),
        }
    }

    pub fn model_config(&self, d_c: usize, d_g: usize) -> ModelConfig {
        ModelConfig {
            conv: self.model.conv,
            hidden: self.model.hidden,
            dropout: self.model.dropout,
            d_c,
            d_g,
            ablation: self.model.ablation,
        }
    }

    /// Identity of the input data: source settings, seed, and the bytes of
    /// any input files.
    pub fn data_fingerprint(&self) -> Result<String, CliError> {
        let mut doc = serde_json::json!({
            "seed": self.seed,
            "data": {"preset": self.data.preset, "synth": self.synth},
        });
        if let (Some(t), Some(l)) = (&self.data.traces, &self.data.labels) {
            doc["data"]["traces"] = file_digest(t)?.into();
            doc["data"]["labels"] = file_digest(l)?.into();
        }
        Ok(sha256_hex(doc.to_string().as_bytes()))
    }

    /// Identity of the fused network and feature tables.
    pub fn network_fingerprint(&self) -> Result<String, CliError> {
        let mut doc = serde_json::json!({
            "data": self.data_fingerprint()?,
            "network": self.network,
            "features": self.features,
        });
        if let Some(e) = &self.data.embeddings {
            doc["embeddings"] = file_digest(e)?.into();
        }
        Ok(sha256_hex(doc.to_string().as_bytes()))
    }

    /// Identity of a whole run. `extra` carries command inputs outside the
    /// config (e.g. a checkpoint digest).
    pub fn fingerprint(&self, extra: &[(&str, String)]) -> Result<String, CliError> {
        let mut doc = serde_json::json!({
            "network": self.network_fingerprint()?,
            "config": self.canonical(),
        });
        for (k, v) in extra {
            doc[*k] = v.clone().into();
        }
        Ok(sha256_hex(doc.to_string().as_bytes()))
    }

    /// Config as JSON, minus the output directory.
    pub fn canonical(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("run config serializes");
        v.as_object_mut().expect("object").remove("out");
        v
    }
}
