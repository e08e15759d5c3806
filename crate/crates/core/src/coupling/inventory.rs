use std::collections::BTreeMap;
use std::fmt;

use super::{adapter_param_count, length_adaptor_param_count};

/// Trainable count the coupling-only first training step is reported with.
/// Kept for the discrepancy line in reports; the inventory does not try to
/// reproduce it.
pub const REPORTED_FIRST_STEP_TRAINABLE: usize = 9_100_000;

/// Architecture hyper-parameters behind the reference inventory.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub model_dim: usize,
    pub ffn_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub vocab_size: usize,
    pub max_target_positions: usize,
    pub extractor_channels: usize,
    /// (kernel, stride) per feature-extractor convolution.
    pub extractor_ladder: Vec<(usize, usize)>,
    pub pos_conv_kernel: usize,
    pub pos_conv_groups: usize,
    pub adapter_dim: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            model_dim: 1024,
            ffn_dim: 4096,
            encoder_layers: 24,
            decoder_layers: 12,
            vocab_size: 250_000,
            max_target_positions: 1024,
            extractor_channels: 512,
            extractor_ladder: vec![(10, 5), (3, 2), (3, 2), (3, 2), (3, 2), (2, 2), (2, 2)],
            pos_conv_kernel: 128,
            pos_conv_groups: 16,
            adapter_dim: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

impl ParamEntry {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ParamGroup {
    FeatureExtractor,
    Encoder,
    LengthAdaptor,
    Adapter,
    Decoder,
    Embeddings,
    Other,
}

impl ParamGroup {
    pub fn of(name: &str) -> Self {
        if name.starts_with("encoder.feature_extractor.") {
            ParamGroup::FeatureExtractor
        } else if name.starts_with("encoder.") {
            ParamGroup::Encoder
        } else if name.starts_with("length_adaptor.") {
            ParamGroup::LengthAdaptor
        } else if name.starts_with("adapter.") {
            ParamGroup::Adapter
        } else if name.starts_with("decoder.embed_") {
            ParamGroup::Embeddings
        } else if name.starts_with("decoder.") {
            ParamGroup::Decoder
        } else {
            ParamGroup::Other
        }
    }
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamGroup::FeatureExtractor => "feature_extractor",
            ParamGroup::Encoder => "encoder",
            ParamGroup::LengthAdaptor => "length_adaptor",
            ParamGroup::Adapter => "adapter",
            ParamGroup::Decoder => "decoder",
            ParamGroup::Embeddings => "embeddings",
            ParamGroup::Other => "other",
        })
    }
}

/// Named tensor shapes with trainable flags.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParamInventory {
    pub entries: Vec<ParamEntry>,
}

impl ParamInventory {
    fn push(&mut self, name: impl Into<String>, shape: &[usize]) {
        let name = name.into();
        debug_assert!(self.entries.iter().all(|e| e.name != name), "duplicate {name}");
        self.entries.push(ParamEntry {
            name,
            shape: shape.to_vec(),
            trainable: true,
        });
    }

    fn linear(&mut self, prefix: &str, out_dim: usize, in_dim: usize) {
        self.push(format!("{prefix}.weight"), &[out_dim, in_dim]);
        self.push(format!("{prefix}.bias"), &[out_dim]);
    }

    fn layer_norm(&mut self, prefix: &str, dim: usize) {
        self.push(format!("{prefix}.weight"), &[dim]);
        self.push(format!("{prefix}.bias"), &[dim]);
    }

    fn attention(&mut self, prefix: &str, dim: usize) {
        for proj in ["q_proj", "k_proj", "v_proj", "out_proj"] {
            self.linear(&format!("{prefix}.{proj}"), dim, dim);
        }
    }

    pub fn total(&self) -> usize {
        self.entries.iter().map(ParamEntry::numel).sum()
    }

    pub fn trainable(&self) -> usize {
        self.entries.iter().filter(|e| e.trainable).map(ParamEntry::numel).sum()
    }

    pub fn trainable_fraction(&self) -> f64 {
        self.trainable() as f64 / self.total() as f64
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Sum of parameters whose name starts with `prefix`.
    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.entries
            .iter()
            .filter(|e| e.name.starts_with(prefix))
            .map(ParamEntry::numel)
            .sum()
    }

    /// `(total, trainable)` per group.
    pub fn group_counts(&self) -> BTreeMap<ParamGroup, (usize, usize)> {
        let mut groups = BTreeMap::new();
        for e in &self.entries {
            let slot = groups.entry(ParamGroup::of(&e.name)).or_insert((0, 0));
            slot.0 += e.numel();
            if e.trainable {
                slot.1 += e.numel();
            }
        }
        groups
    }
}

/// Wav2Vec 2.0-style encoder, Length Adaptor, Adapter and mBART-style
/// decoder with a shared token embedding.
pub fn build_inventory(cfg: &ArchConfig) -> ParamInventory {
    let d = cfg.model_dim;
    let mut inv = ParamInventory::default();

    let mut in_channels = 1;
    for (i, &(kernel, _stride)) in cfg.extractor_ladder.iter().enumerate() {
        let prefix = format!("encoder.feature_extractor.conv_layers.{i}");
        inv.push(format!("{prefix}.conv.weight"), &[cfg.extractor_channels, in_channels, kernel]);
        inv.push(format!("{prefix}.conv.bias"), &[cfg.extractor_channels]);
        inv.layer_norm(&format!("{prefix}.layer_norm"), cfg.extractor_channels);
        in_channels = cfg.extractor_channels;
    }
    inv.layer_norm("encoder.feature_layer_norm", cfg.extractor_channels);
    inv.linear("encoder.post_extract_proj", d, cfg.extractor_channels);
    inv.push("encoder.mask_emb", &[d]);
    inv.push("encoder.pos_conv.weight_g", &[1, 1, cfg.pos_conv_kernel]);
    inv.push("encoder.pos_conv.weight_v", &[d, d / cfg.pos_conv_groups, cfg.pos_conv_kernel]);
    inv.push("encoder.pos_conv.bias", &[d]);
    for i in 0..cfg.encoder_layers {
        let prefix = format!("encoder.layers.{i}");
        inv.attention(&format!("{prefix}.self_attn"), d);
        inv.layer_norm(&format!("{prefix}.self_attn_layer_norm"), d);
        inv.linear(&format!("{prefix}.fc1"), cfg.ffn_dim, d);
        inv.linear(&format!("{prefix}.fc2"), d, cfg.ffn_dim);
        inv.layer_norm(&format!("{prefix}.final_layer_norm"), d);
    }
    inv.layer_norm("encoder.layer_norm", d);

    inv.layer_norm("adapter.layer_norm", d);
    inv.linear("adapter.up_proj", cfg.adapter_dim, d);
    inv.linear("adapter.down_proj", d, cfg.adapter_dim);

    for i in 0..super::LENGTH_ADAPTOR_LAYERS {
        inv.push(format!("length_adaptor.layers.{i}.conv.weight"), &[d, d, super::LENGTH_ADAPTOR_KERNEL]);
        inv.push(format!("length_adaptor.layers.{i}.conv.bias"), &[d]);
    }

    inv.push("decoder.embed_tokens.weight", &[cfg.vocab_size, d]);
    inv.push("decoder.embed_positions.weight", &[cfg.max_target_positions + 2, d]);
    inv.layer_norm("decoder.layernorm_embedding", d);
    for i in 0..cfg.decoder_layers {
        let prefix = format!("decoder.layers.{i}");
        inv.attention(&format!("{prefix}.self_attn"), d);
        inv.layer_norm(&format!("{prefix}.self_attn_layer_norm"), d);
        inv.attention(&format!("{prefix}.encoder_attn"), d);
        inv.layer_norm(&format!("{prefix}.encoder_attn_layer_norm"), d);
        inv.linear(&format!("{prefix}.fc1"), cfg.ffn_dim, d);
        inv.linear(&format!("{prefix}.fc2"), d, cfg.ffn_dim);
        inv.layer_norm(&format!("{prefix}.final_layer_norm"), d);
    }
    inv.layer_norm("decoder.layer_norm", d);

    debug_assert_eq!(inv.count_prefix("adapter."), adapter_param_count(d, cfg.adapter_dim));
    debug_assert_eq!(inv.count_prefix("length_adaptor."), length_adaptor_param_count(d));
    inv
}

pub fn build_reference_inventory() -> ParamInventory {
    build_inventory(&ArchConfig::default())
}

/// Outcome of [`lna_trainable_mask`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LnaMask {
    pub inventory: ParamInventory,
    /// Names outside the known grammar; these are left frozen.
    pub unknown: Vec<String>,
}

enum Rule {
    Train,
    Freeze,
}

fn is_layer_index(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn classify(name: &str) -> Option<Rule> {
    if name == "encoder.mask_emb" {
        return Some(Rule::Freeze);
    }
    let parts: Vec<&str> = name.split('.').collect();
    if parts.len() < 2 || !matches!(*parts.last()?, "weight" | "bias" | "weight_g" | "weight_v") {
        return None;
    }
    let module = &parts[..parts.len() - 1];
    if module.last().is_some_and(|m| m.ends_with("layer_norm") || *m == "layernorm_embedding") {
        return Some(Rule::Train);
    }
    match module {
        ["adapter", ..] | ["length_adaptor", ..] => Some(Rule::Train),
        ["encoder", "layers", i, "self_attn", _] if is_layer_index(i) => Some(Rule::Train),
        ["decoder", "layers", i, "encoder_attn", _] if is_layer_index(i) => Some(Rule::Train),
        ["encoder", "layers", i, rest @ ..] | ["decoder", "layers", i, rest @ ..]
            if is_layer_index(i) && matches!(rest, ["self_attn", _] | ["fc1"] | ["fc2"]) =>
        {
            Some(Rule::Freeze)
        }
        ["encoder", "feature_extractor", "conv_layers", i, "conv"] if is_layer_index(i) => Some(Rule::Freeze),
        ["encoder", "post_extract_proj"] | ["encoder", "pos_conv"] => Some(Rule::Freeze),
        ["decoder", "embed_tokens"] | ["decoder", "embed_positions"] => Some(Rule::Freeze),
        _ => None,
    }
}

/// Marks trainable exactly the layer norms, encoder self-attention, decoder
/// cross-attention, Length Adaptor and Adapter; everything else is frozen.
pub fn lna_trainable_mask(inv: &ParamInventory) -> LnaMask {
    let mut unknown = Vec::new();
    let entries = inv
        .entries
        .iter()
        .map(|e| {
            let trainable = match classify(&e.name) {
                Some(Rule::Train) => true,
                Some(Rule::Freeze) => false,
                None => {
                    unknown.push(e.name.clone());
                    false
                }
            };
            ParamEntry {
                trainable,
                ..e.clone()
            }
        })
        .collect();
    LnaMask {
        inventory: ParamInventory { entries },
        unknown,
    }
}
