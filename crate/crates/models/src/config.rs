use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Binary (article, title) classifier; an instance picks its highest "yes".
    Ffnn,
    /// One 5-way softmax over the article and all five titles.
    Ffnn5,
    /// GRU encoder-decoder with attention plus an FFNN head.
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attention {
    Tanh,
    Bilinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// Length-masked mean of encoder outputs and of decoder outputs.
    Mean,
    /// Last unpadded encoder output and last unpadded decoder output.
    Final,
}

macro_rules! text_enum {
    ($t:ty, $($v:ident => $s:literal),+) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(<$t>::$v => $s),+ })
            }
        }
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($s => Ok(<$t>::$v),)+
                    _ => Err(Error::Invalid(format!("unknown {} `{s}`", stringify!($t)))),
                }
            }
        }
    };
}

text_enum!(ModelKind, Ffnn => "ffnn", Ffnn5 => "ffnn5", Hybrid => "hybrid");
text_enum!(Attention, Tanh => "tanh", Bilinear => "bilinear");
text_enum!(Pooling, Mean => "mean", Final => "final");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Including the four sentinel tokens.
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// FFNN / FFNN5 hidden layer sizes.
    pub ffnn_hidden: Vec<usize>,
    /// Hidden sizes of the classification head on top of the Seq2seq model.
    pub head_hidden: Vec<usize>,
    pub gru_layers: usize,
    pub gru_hidden: usize,
    pub attention: Attention,
    pub tied_embeddings: bool,
    pub lambda_gen: f64,
    pub pooling: Pooling,
    pub max_article_len: usize,
    pub max_title_len: usize,
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Hybrid,
            vocab_size: 100_000,
            embed_dim: 512,
            ffnn_hidden: vec![1024, 256],
            head_hidden: vec![64, 16],
            gru_layers: 2,
            gru_hidden: 512,
            attention: Attention::Bilinear,
            tied_embeddings: true,
            lambda_gen: 0.01,
            pooling: Pooling::Mean,
            max_article_len: 400,
            max_title_len: 30,
            init_scale: 0.1,
        }
    }
}

impl ModelConfig {
    /// Small sizes that train in seconds to minutes on one core.
    pub fn desk(kind: ModelKind) -> Self {
        ModelConfig {
            kind,
            vocab_size: 2000,
            embed_dim: 64,
            ffnn_hidden: vec![256, 64],
            gru_hidden: 64,
            max_article_len: 100,
            max_title_len: 16,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.vocab_size <= mcgen_core::corpus::SENTINELS.len() {
            return bad(format!("vocab_size {} leaves no room for words", self.vocab_size));
        }
        if self.embed_dim == 0 || self.max_article_len == 0 || self.max_title_len == 0 {
            return bad("sizes must be positive".into());
        }
        if self.ffnn_hidden.contains(&0) || self.head_hidden.contains(&0) {
            return bad("hidden sizes must be positive".into());
        }
        if self.kind == ModelKind::Hybrid && (self.gru_layers == 0 || self.gru_hidden == 0) {
            return bad("hybrid model needs gru_layers >= 1 and gru_hidden >= 1".into());
        }
        if !(self.lambda_gen >= 0.0 && self.lambda_gen.is_finite()) {
            return bad(format!("lambda_gen must be finite and >= 0, got {}", self.lambda_gen));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
    /// Dev evaluation period in steps; the final step is always evaluated.
    pub eval_every: usize,
    /// Caps the dev instances scored at each evaluation.
    pub dev_limit: Option<usize>,
    /// Dev gold articles decoded greedily for ROUGE-L at each evaluation.
    pub rouge_samples: usize,
    pub shuffle_pairs: bool,
    /// Gradient replicas per batch, reduced in shard order.
    pub shards: usize,
    /// Stops once dev accuracy reaches this value.
    pub target_dev_accuracy: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch_size: 16,
            learning_rate: 0.01,
            epsilon: 1e-8,
            clip_norm: 4.0,
            eval_every: 200,
            dev_limit: Some(500),
            rouge_samples: 0,
            shuffle_pairs: true,
            shards: 1,
            target_dev_accuracy: None,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(m.to_string()));
        if self.batch_size == 0 || self.eval_every == 0 || self.shards == 0 {
            return bad("batch_size, eval_every and shards must be positive");
        }
        if self.shards > self.batch_size {
            return bad("shards cannot exceed batch_size");
        }
        if !(self.learning_rate > 0.0 && self.clip_norm > 0.0 && self.epsilon > 0.0) {
            return bad("learning_rate, clip_norm and epsilon must be positive");
        }
        Ok(())
    }
}
