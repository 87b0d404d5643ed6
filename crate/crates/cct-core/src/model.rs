//! A small decoder-only transformer over the duration-weighted attention
//! kernel: config, weight storage, token embedding, forward passes, and
//! next-token distributions.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::archive::TensorArchive;
use crate::attention::{
    add_norm_block, discrete_causal_attention_rotary, duration_weighted_attention, layer_norm,
    AttentionParams, BlockParams, DurationBiasMode, LayerNormParams,
};
use crate::error::{Error, Result};
use crate::rope::RotaryConfig;
use crate::sequence::{SentenceDoc, StepwiseSentence, TokenSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BlockStyle {
    /// `z = LN(y + x); out = LN(W_z z + x)` with no MLP.
    #[default]
    MinimalAddnorm,
    /// Pre-normalization with a two-matrix gated MLP.
    PrenormMlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Positional {
    #[default]
    Rotary,
    None,
}

fn default_rotary_base() -> f64 {
    RotaryConfig::DEFAULT_BASE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layer_count: usize,
    pub head_count: usize,
    pub d_model: usize,
    pub d_head: usize,
    pub vocab_size: usize,
    /// 0 selects the minimal add&norm block; required > 0 for `prenorm_mlp`.
    #[serde(default)]
    pub mlp_hidden: usize,
    #[serde(default)]
    pub block_style: BlockStyle,
    #[serde(default)]
    pub positional: Positional,
    #[serde(default = "default_rotary_base")]
    pub rotary_base: f64,
    /// Rotated components per head; defaults to `d_head`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotary_dim: Option<usize>,
    /// When set, the unembedding aliases `embed.weight`.
    #[serde(default)]
    pub tied_unembed: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |cond: bool, msg: &str| -> Result<()> {
            if cond {
                Ok(())
            } else {
                Err(Error::InvalidConfig(msg.into()))
            }
        };
        check(self.head_count > 0, "head_count must be positive")?;
        check(self.d_head > 0, "d_head must be positive")?;
        check(self.d_model > 0, "d_model must be positive")?;
        check(
            self.d_model == self.head_count * self.d_head,
            "d_model must equal head_count * d_head",
        )?;
        check(self.vocab_size >= 2, "vocab_size must be at least 2")?;
        match self.block_style {
            BlockStyle::MinimalAddnorm => {
                check(self.mlp_hidden == 0, "minimal_addnorm block takes mlp_hidden = 0")?
            }
            BlockStyle::PrenormMlp => {
                check(self.mlp_hidden > 0, "prenorm_mlp block needs mlp_hidden > 0")?
            }
        }
        if self.positional == Positional::Rotary {
            let dim = self.rotary_dim.unwrap_or(self.d_head);
            check(dim % 2 == 0, "rotary_dim must be even")?;
            check(dim <= self.d_head, "rotary_dim must not exceed d_head")?;
            check(self.rotary_base > 0.0, "rotary_base must be positive")?;
        }
        Ok(())
    }

    pub fn rotary_config(&self) -> Option<RotaryConfig> {
        match self.positional {
            Positional::Rotary => Some(RotaryConfig::new(
                self.rotary_base,
                self.rotary_dim.unwrap_or(self.d_head),
            )),
            Positional::None => None,
        }
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let config: ModelConfig = serde_json::from_slice(&std::fs::read(path)?)?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub attn: AttentionParams,
    pub norm1: LayerNormParams,
    pub norm2: LayerNormParams,
    /// Present for `minimal_addnorm`.
    pub w_z: Option<Array2<f32>>,
    /// Present for `prenorm_mlp`.
    pub mlp_up: Option<Array2<f32>>,
    pub mlp_down: Option<Array2<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub embed: Array2<f32>,
    /// `None` when tied to the embedding table.
    pub unembed: Option<Array2<f32>>,
    pub layers: Vec<LayerWeights>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Next-token scores at the final span.
    pub logits: Vec<f32>,
    /// Per-span activations after the last layer, when requested.
    pub hidden: Option<Array2<f32>>,
}

impl Model {
    /// Reproducible weights: ChaCha8 seeded with `seed`, every matrix entry
    /// drawn from Normal(0, 0.02) in a fixed tensor order, norm gains 1 and
    /// biases 0.
    pub fn init_random(seed: u64, config: ModelConfig) -> Result<Model> {
        Self::init_random_with_std(seed, config, 0.02)
    }

    /// [`Model::init_random`] with a custom weight standard deviation. The
    /// 0.02 default keeps activations in the usual init regime; larger values
    /// are useful in sensitivity tests, where 0.02-scale weights attenuate
    /// positional perturbations below single-precision noise.
    pub fn init_random_with_std(seed: u64, config: ModelConfig, std: f32) -> Result<Model> {
        config.validate()?;
        if !(std > 0.0 && std.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "init std {std} must be positive and finite"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f32, std).expect("valid scale");
        let mut mat = |r: usize, c: usize| -> Array2<f32> {
            Array2::from_shape_fn((r, c), |_| normal.sample(&mut rng))
        };
        let stacked = config.head_count * config.d_head;
        let embed = mat(config.vocab_size, config.d_model);
        let mut layers = Vec::with_capacity(config.layer_count);
        for _ in 0..config.layer_count {
            let attn = AttentionParams::new(
                mat(stacked, config.d_model),
                mat(stacked, config.d_model),
                mat(stacked, config.d_model),
                mat(config.d_model, stacked),
                config.head_count,
                config.d_head,
            )?;
            let (w_z, mlp_up, mlp_down) = match config.block_style {
                BlockStyle::MinimalAddnorm => (Some(mat(config.d_model, config.d_model)), None, None),
                BlockStyle::PrenormMlp => (
                    None,
                    Some(mat(config.mlp_hidden, config.d_model)),
                    Some(mat(config.d_model, config.mlp_hidden)),
                ),
            };
            layers.push(LayerWeights {
                attn,
                norm1: LayerNormParams::identity(config.d_model),
                norm2: LayerNormParams::identity(config.d_model),
                w_z,
                mlp_up,
                mlp_down,
            });
        }
        let unembed = if config.tied_unembed {
            None
        } else {
            Some(mat(config.vocab_size, config.d_model))
        };
        Ok(Model {
            config,
            embed,
            unembed,
            layers,
        })
    }

    pub fn unembedding(&self) -> &Array2<f32> {
        self.unembed.as_ref().unwrap_or(&self.embed)
    }

    /// Row lookups into the embedding table, unit duration per token.
    pub fn embed_tokens(&self, token_ids: &[u32]) -> Result<StepwiseSentence> {
        if token_ids.is_empty() {
            return Err(Error::Empty("token id list"));
        }
        let embeddings = token_ids
            .iter()
            .map(|&id| {
                if (id as usize) >= self.config.vocab_size {
                    return Err(Error::TokenOutOfRange {
                        id,
                        vocab: self.config.vocab_size,
                    });
                }
                Ok(self.embed.row(id as usize).to_owned())
            })
            .collect::<Result<Vec<_>>>()?;
        StepwiseSentence::from_embeddings(embeddings)
    }

    /// Resolve a sentence document: token ids through the embedding table,
    /// inline embeddings as-is.
    pub fn resolve_doc(&self, doc: &SentenceDoc) -> Result<StepwiseSentence> {
        doc.validate()?;
        let spans = doc
            .spans
            .iter()
            .map(|span| {
                let embedding = match (span.token_id, &span.embedding) {
                    (Some(id), None) => {
                        if (id as usize) >= self.config.vocab_size {
                            return Err(Error::TokenOutOfRange {
                                id,
                                vocab: self.config.vocab_size,
                            });
                        }
                        self.embed.row(id as usize).to_owned()
                    }
                    (None, Some(e)) => {
                        if e.len() != self.config.d_model {
                            return Err(Error::DimensionMismatch(format!(
                                "span embedding has {} entries, model expects {}",
                                e.len(),
                                self.config.d_model
                            )));
                        }
                        Array1::from_vec(e.clone())
                    }
                    _ => unreachable!("validated above"),
                };
                TokenSpan::new(embedding, span.duration)
            })
            .collect::<Result<Vec<_>>>()?;
        StepwiseSentence::new(spans, doc.origin)
    }

    pub fn forward_continuous(&self, sentence: &StepwiseSentence) -> Result<ForwardOutput> {
        self.forward_continuous_inner(sentence, false)
    }

    pub fn forward_continuous_with_hidden(
        &self,
        sentence: &StepwiseSentence,
    ) -> Result<ForwardOutput> {
        self.forward_continuous_inner(sentence, true)
    }

    fn forward_continuous_inner(
        &self,
        sentence: &StepwiseSentence,
        keep_hidden: bool,
    ) -> Result<ForwardOutput> {
        if sentence.d_model() != self.config.d_model {
            return Err(Error::DimensionMismatch(format!(
                "sentence dimension {} vs model d_model {}",
                sentence.d_model(),
                self.config.d_model
            )));
        }
        let durations = sentence.durations();
        let positions = sentence.positions();
        let rotary = self.config.rotary_config();
        let mut x = sentence.embedding_matrix();
        for (li, layer) in self.layers.iter().enumerate() {
            x = self.apply_layer(li, layer, x, |m, l| {
                duration_weighted_attention(
                    m,
                    &durations,
                    rotary.as_ref().map(|cfg| (positions.as_slice(), cfg)),
                    &l.attn,
                    DurationBiasMode::AdditiveLog,
                )
            })?;
        }
        self.finish(x, keep_hidden)
    }

    /// Reference forward path without any duration machinery: plain causal
    /// attention over the activation matrix with integer rotary positions.
    pub fn forward_discrete_reference(&self, x_input: &Array2<f32>) -> Result<ForwardOutput> {
        if x_input.ncols() != self.config.d_model {
            return Err(Error::DimensionMismatch(format!(
                "input dimension {} vs model d_model {}",
                x_input.ncols(),
                self.config.d_model
            )));
        }
        let rotary = self.config.rotary_config();
        let mut x = x_input.clone();
        for (li, layer) in self.layers.iter().enumerate() {
            x = self.apply_layer(li, layer, x, |m, l| {
                discrete_causal_attention_rotary(m, &l.attn, rotary.as_ref())
            })?;
        }
        self.finish(x, false)
    }

    fn apply_layer(
        &self,
        layer_index: usize,
        layer: &LayerWeights,
        x: Array2<f32>,
        attention: impl Fn(&Array2<f32>, &LayerWeights) -> Result<Array2<f32>>,
    ) -> Result<Array2<f32>> {
        let t_len = x.nrows();
        let out = match self.config.block_style {
            BlockStyle::MinimalAddnorm => {
                let y = attention(&x, layer)?;
                let block = BlockParams {
                    attention: layer.attn.clone(),
                    w_z: layer.w_z.clone().expect("minimal_addnorm layer has w_z"),
                    norm1: layer.norm1.clone(),
                    norm2: layer.norm2.clone(),
                };
                let mut out = Array2::zeros(x.raw_dim());
                for t in 0..t_len {
                    let row = add_norm_block(
                        &x.row(t).to_owned(),
                        &y.row(t).to_owned(),
                        &block,
                    )?;
                    out.row_mut(t).assign(&row);
                }
                out
            }
            BlockStyle::PrenormMlp => {
                let mut normed = Array2::zeros(x.raw_dim());
                for t in 0..t_len {
                    normed
                        .row_mut(t)
                        .assign(&layer_norm(&x.row(t).to_owned(), &layer.norm1));
                }
                let y = attention(&normed, layer)?;
                let mut out = &x + &y;
                let up = layer.mlp_up.as_ref().expect("prenorm layer has mlp_up");
                let down = layer.mlp_down.as_ref().expect("prenorm layer has mlp_down");
                for t in 0..t_len {
                    let z = layer_norm(&out.row(t).to_owned(), &layer.norm2);
                    let hidden = up.dot(&z).mapv(silu);
                    let m = down.dot(&hidden);
                    let mut row = out.row_mut(t);
                    row += &m;
                }
                out
            }
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteActivation {
                layer: layer_index,
                stage: "block output",
            });
        }
        Ok(out)
    }

    fn finish(&self, x: Array2<f32>, keep_hidden: bool) -> Result<ForwardOutput> {
        let last = x.row(x.nrows() - 1).to_owned();
        let logits = self.unembedding().dot(&last);
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteActivation {
                layer: self.layers.len(),
                stage: "unembedding",
            });
        }
        Ok(ForwardOutput {
            logits: logits.to_vec(),
            hidden: keep_hidden.then_some(x),
        })
    }

    pub fn to_archive(&self) -> Result<TensorArchive> {
        let mut archive = TensorArchive::new();
        let put = |archive: &mut TensorArchive, name: String, m: &Array2<f32>| -> Result<()> {
            archive.insert_f32(
                &name,
                &[m.nrows(), m.ncols()],
                m.as_slice().expect("contiguous"),
            )
        };
        let put_vec = |archive: &mut TensorArchive, name: String, v: &Array1<f32>| -> Result<()> {
            archive.insert_f32(&name, &[v.len()], v.as_slice().expect("contiguous"))
        };
        put(&mut archive, "embed.weight".into(), &self.embed)?;
        if let Some(unembed) = &self.unembed {
            put(&mut archive, "unembed.weight".into(), unembed)?;
        }
        for (i, layer) in self.layers.iter().enumerate() {
            put(&mut archive, format!("layers.{i}.attn.q.weight"), &layer.attn.w_q)?;
            put(&mut archive, format!("layers.{i}.attn.k.weight"), &layer.attn.w_k)?;
            put(&mut archive, format!("layers.{i}.attn.v.weight"), &layer.attn.w_v)?;
            put(&mut archive, format!("layers.{i}.attn.o.weight"), &layer.attn.w_o)?;
            put_vec(&mut archive, format!("layers.{i}.norm1.gain"), &layer.norm1.gain)?;
            put_vec(&mut archive, format!("layers.{i}.norm1.bias"), &layer.norm1.bias)?;
            put_vec(&mut archive, format!("layers.{i}.norm2.gain"), &layer.norm2.gain)?;
            put_vec(&mut archive, format!("layers.{i}.norm2.bias"), &layer.norm2.bias)?;
            if let Some(w_z) = &layer.w_z {
                put(&mut archive, format!("layers.{i}.wz.weight"), w_z)?;
            }
            if let Some(up) = &layer.mlp_up {
                put(&mut archive, format!("layers.{i}.mlp.up.weight"), up)?;
            }
            if let Some(down) = &layer.mlp_down {
                put(&mut archive, format!("layers.{i}.mlp.down.weight"), down)?;
            }
        }
        Ok(archive)
    }

    pub fn from_archive(archive: &TensorArchive, config: ModelConfig) -> Result<Model> {
        config.validate()?;
        let matrix = |name: String, rows: usize, cols: usize| -> Result<Array2<f32>> {
            let (shape, values) = archive
                .get_f32(&name)
                .map_err(|e| Error::Archive(format!("{e} (required by config)")))?;
            if shape != [rows, cols] {
                return Err(Error::Archive(format!(
                    "tensor {name:?} has shape {shape:?}, config expects [{rows}, {cols}]"
                )));
            }
            Ok(Array2::from_shape_vec((rows, cols), values).expect("shape checked"))
        };
        let vector = |name: String, len: usize| -> Result<Array1<f32>> {
            let (shape, values) = archive.get_f32(&name)?;
            if shape != [len] {
                return Err(Error::Archive(format!(
                    "tensor {name:?} has shape {shape:?}, config expects [{len}]"
                )));
            }
            Ok(Array1::from_vec(values))
        };

        let d = config.d_model;
        let stacked = config.head_count * config.d_head;
        let embed = matrix("embed.weight".into(), config.vocab_size, d)?;
        let unembed = if config.tied_unembed {
            None
        } else {
            Some(matrix("unembed.weight".into(), config.vocab_size, d)?)
        };
        let mut layers = Vec::with_capacity(config.layer_count);
        for i in 0..config.layer_count {
            let attn = AttentionParams::new(
                matrix(format!("layers.{i}.attn.q.weight"), stacked, d)?,
                matrix(format!("layers.{i}.attn.k.weight"), stacked, d)?,
                matrix(format!("layers.{i}.attn.v.weight"), stacked, d)?,
                matrix(format!("layers.{i}.attn.o.weight"), d, stacked)?,
                config.head_count,
                config.d_head,
            )?;
            let norm1 = LayerNormParams {
                gain: vector(format!("layers.{i}.norm1.gain"), d)?,
                bias: vector(format!("layers.{i}.norm1.bias"), d)?,
            };
            let norm2 = LayerNormParams {
                gain: vector(format!("layers.{i}.norm2.gain"), d)?,
                bias: vector(format!("layers.{i}.norm2.bias"), d)?,
            };
            let (w_z, mlp_up, mlp_down) = match config.block_style {
                BlockStyle::MinimalAddnorm => {
                    (Some(matrix(format!("layers.{i}.wz.weight"), d, d)?), None, None)
                }
                BlockStyle::PrenormMlp => (
                    None,
                    Some(matrix(format!("layers.{i}.mlp.up.weight"), config.mlp_hidden, d)?),
                    Some(matrix(format!("layers.{i}.mlp.down.weight"), d, config.mlp_hidden)?),
                ),
            };
            layers.push(LayerWeights {
                attn,
                norm1,
                norm2,
                w_z,
                mlp_up,
                mlp_down,
            });
        }
        Ok(Model {
            config,
            embed,
            unembed,
            layers,
        })
    }
}

fn silu(x: f32) -> f32 {
    x / (1.0 + (-x).exp())
}

/// Named labels, each mapping to a set of token ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub entries: Vec<(String, Vec<u32>)>,
}

impl LabelSet {
    pub fn new(entries: Vec<(String, Vec<u32>)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("label set"));
        }
        Ok(Self { entries })
    }

    /// Digit labels "0".."9" mapped to token ids 0..9.
    pub fn digits() -> Self {
        Self {
            entries: (0..10u32).map(|i| (i.to_string(), vec![i])).collect(),
        }
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        for (name, ids) in &self.entries {
            if ids.is_empty() {
                return Err(Error::Invalid(format!("label {name:?} has no token ids")));
            }
            for &id in ids {
                if (id as usize) >= vocab_size {
                    return Err(Error::TokenOutOfRange {
                        id,
                        vocab: vocab_size,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|(n, _)| n.clone()).collect()
    }

    /// Parse `name=1,2;other=3` style inline syntax.
    pub fn parse_inline(spec: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for part in spec.split(';').filter(|p| !p.trim().is_empty()) {
            let (name, ids) = part
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("label entry {part:?} missing '='")))?;
            let ids = ids
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<u32>()
                        .map_err(|_| Error::Invalid(format!("bad token id {s:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            entries.push((name.trim().to_string(), ids));
        }
        Self::new(entries)
    }
}

/// Full softmax over the vocabulary plus optional per-label mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionTable {
    pub full: Vec<f64>,
    pub labels: Vec<(String, f64)>,
    /// Probability mass outside the labeled token ids.
    pub other: f64,
}

/// Stabilized softmax over the logits; label masses are sums over their token
/// ids and `other` is the residual.
pub fn next_token_distribution(logits: &[f32], labels: Option<&LabelSet>) -> DistributionTable {
    let m = logits.iter().map(|&v| v as f64).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v as f64 - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    let full: Vec<f64> = exps.into_iter().map(|e| e / z).collect();
    let mut label_probs = Vec::new();
    let mut labeled_mass = 0.0;
    if let Some(labels) = labels {
        for (name, ids) in &labels.entries {
            let p: f64 = ids.iter().map(|&id| full[id as usize]).sum();
            labeled_mass += p;
            label_probs.push((name.clone(), p));
        }
    }
    DistributionTable {
        other: 1.0 - labeled_mass,
        full,
        labels: label_probs,
    }
}
