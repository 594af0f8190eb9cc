use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mcgen_core::mccreate::McCreateConfig;
use mcgen_core::pvdbow::PvConfig;
use mcgen_core::synth::SynthConfig;
use mcgen_models::{ModelConfig, ModelKind, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    /// Inference epochs for article and option vectors in the PV baseline.
    pub infer_steps: usize,
    /// Dev articles decoded for ROUGE-L in sweeps and model evaluation.
    pub rouge_samples: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            infer_steps: 20,
            rouge_samples: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotateSettings {
    pub host: String,
    pub port: u16,
    /// Record log; relative to the output directory unless absolute.
    pub log: PathBuf,
    pub static_dir: Option<PathBuf>,
}

impl Default for AnnotateSettings {
    fn default() -> Self {
        AnnotateSettings {
            host: "127.0.0.1".into(),
            port: 8080,
            log: "annotations.jsonl".into(),
            static_dir: None,
        }
    }
}

/// The on-disk layout of a config file. Every section is optional and
/// overrides only the keys it names.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    workers: Option<usize>,
    deterministic: Option<bool>,
    synth: Option<toml::Table>,
    pv: Option<toml::Table>,
    dataset: Option<toml::Table>,
    model: Option<toml::Table>,
    train: Option<toml::Table>,
    eval: Option<toml::Table>,
    annotate: Option<toml::Table>,
}

/// Flags that override the file and the defaults.
#[derive(Debug, Default, Clone)]
pub struct GlobalFlags {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub nondeterministic: bool,
}

/// Effective settings: defaults < config file < flags.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub deterministic: bool,
    pub config_file: Option<PathBuf>,
    pub synth: SynthConfig,
    pub pv: PvConfig,
    pub dataset: McCreateConfig,
    pub train: TrainConfig,
    pub eval: EvalSettings,
    pub annotate: AnnotateSettings,
    #[serde(skip)]
    model_overrides: Option<toml::Table>,
}

fn to_json(t: &toml::Table) -> Result<Value> {
    Ok(serde_json::to_value(t)?)
}

fn merge(base: &mut Value, over: &Value, path: &str) -> Result<()> {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                let key = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v, &key)?,
                    Some(slot) => *slot = v.clone(),
                    None => return Err(UsageError(format!("unknown config key `{key}`")).into()),
                }
            }
            Ok(())
        }
        _ => Err(UsageError(format!("config section `{path}` must be a table")).into()),
    }
}

/// Overlays `over` on `base`. A component without its own `seed` key takes
/// `seed`.
fn layer<T: Serialize + DeserializeOwned>(section: &str, base: T, over: Option<&toml::Table>, seed: u64) -> Result<T> {
    let mut v = serde_json::to_value(&base)?;
    if let Some(s) = v.get_mut("seed") {
        *s = seed.into();
    }
    if let Some(t) = over {
        merge(&mut v, &to_json(t)?, section)?;
    }
    serde_json::from_value(v).map_err(|e| UsageError(format!("config section [{section}]: {e}")).into())
}

impl RunConfig {
    pub fn load(flags: &GlobalFlags) -> Result<Self> {
        let file: FileConfig = match &flags.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| UsageError(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", p.display())))?
            }
            None => FileConfig::default(),
        };
        let seed = flags.seed.or(file.seed).unwrap_or(1);
        let workers = flags.workers.or(file.workers).unwrap_or(1);
        if workers == 0 {
            return Err(UsageError("--workers must be at least 1".into()).into());
        }
        let deterministic = !flags.nondeterministic && file.deterministic.unwrap_or(true);
        let mut pv = layer("pv", PvConfig::default(), file.pv.as_ref(), seed)?;
        if deterministic {
            pv.workers = 1;
        } else if file.pv.as_ref().is_none_or(|t| !t.contains_key("workers")) {
            pv.workers = workers;
        }
        let cfg = RunConfig {
            seed,
            out_dir: flags.out_dir.clone().or(file.out_dir).unwrap_or_else(|| PathBuf::from(".")),
            workers,
            deterministic,
            config_file: flags.config.clone(),
            synth: layer("synth", SynthConfig::default(), file.synth.as_ref(), seed)?,
            pv,
            dataset: layer("dataset", McCreateConfig::default(), file.dataset.as_ref(), seed)?,
            train: layer("train", TrainConfig::default(), file.train.as_ref(), seed)?,
            eval: layer("eval", EvalSettings::default(), file.eval.as_ref(), seed)?,
            annotate: layer("annotate", AnnotateSettings::default(), file.annotate.as_ref(), seed)?,
            model_overrides: file.model,
        };
        cfg.pv.validate().map_err(|e| UsageError(format!("[pv]: {e}")))?;
        cfg.dataset.validate().map_err(|e| UsageError(format!("[dataset]: {e}")))?;
        cfg.train.validate().map_err(|e| UsageError(format!("[train]: {e}")))?;
        Ok(cfg)
    }

    /// Desk-scale defaults for `kind` with the `[model]` section on top.
    pub fn model(&self, kind: ModelKind) -> Result<ModelConfig> {
        let mut cfg = layer("model", ModelConfig::desk(kind), self.model_overrides.as_ref(), self.seed)?;
        cfg.kind = kind;
        cfg.validate().map_err(|e| UsageError(format!("[model]: {e}")))?;
        Ok(cfg)
    }

    pub fn out(&self, name: impl AsRef<Path>) -> PathBuf {
        self.out_dir.join(name)
    }

    /// `given`, or `name` inside the output directory.
    pub fn input(&self, given: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        let p = given.clone().unwrap_or_else(|| self.out(name));
        if !p.exists() {
            return Err(UsageError(format!("input {} does not exist", p.display())).into());
        }
        Ok(p)
    }

    pub fn ensure_out_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))
    }
}
