//! Pipeline configuration file.
//!
//! One TOML document with a section per stage. Every key is optional and
//! falls back to the documented default; command-line flags override file
//! values.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use stforge_core::augment::AugmentPolicy;
use stforge_core::corpus::{BatchSpec, SamplingSpec, Split};
use stforge_core::segmenter::SegmentationConfig;
use stforge_core::text_filter::{FilterConfig, DEFAULT_EVENTS};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsSection,
    pub segmentation: SegmentationSection,
    pub filter: FilterSection,
    pub augment: AugmentSection,
    pub sampling: SamplingSection,
    pub batch: BatchSection,
    pub seeds: SeedsSection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub manifest: Option<PathBuf>,
    pub transcripts: Option<PathBuf>,
    pub asr_hyps: Option<PathBuf>,
    /// Base directory for relative audio paths in manifests.
    pub audio_root: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationSection {
    pub max_seg_len: f64,
    pub min_gap: f64,
}

impl Default for SegmentationSection {
    fn default() -> Self {
        let d = SegmentationConfig::default();
        Self {
            max_seg_len: d.max_seg_len,
            min_gap: d.min_gap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub wer_threshold: f64,
    pub max_samples: u64,
    pub event_lexicon: Vec<String>,
}

impl Default for FilterSection {
    fn default() -> Self {
        let d = FilterConfig::default();
        Self {
            wer_threshold: d.wer_threshold,
            max_samples: d.max_samples,
            event_lexicon: DEFAULT_EVENTS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub p_aug: f64,
    pub tempo: (f64, f64),
    /// Cents.
    pub pitch: (f64, f64),
    /// Milliseconds.
    pub echo_delay: (f64, f64),
    pub echo_decay: (f64, f64),
}

impl Default for AugmentSection {
    fn default() -> Self {
        let d = AugmentPolicy::default();
        Self {
            p_aug: d.p_aug,
            tempo: d.tempo_range,
            pitch: d.pitch_range_cents,
            echo_delay: d.echo_delay_ms_range,
            echo_decay: d.echo_decay_range,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    #[serde(rename = "MuST-C-train")]
    pub must_c_train: f64,
    #[serde(rename = "EuroparlST-train")]
    pub europarl_train: f64,
    #[serde(rename = "EuroparlST-dev")]
    pub europarl_dev: f64,
    #[serde(rename = "CoVoST-train")]
    pub covost_train: f64,
    #[serde(rename = "CoVoST-dev")]
    pub covost_dev: f64,
}

impl Default for SamplingSection {
    fn default() -> Self {
        let d = SamplingSpec::default();
        Self {
            must_c_train: d.ratio(Split::MustCTrain),
            europarl_train: d.ratio(Split::EuroparlTrain),
            europarl_dev: d.ratio(Split::EuroparlDev),
            covost_train: d.ratio(Split::CovostTrain),
            covost_dev: d.ratio(Split::CovostDev),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchSection {
    pub max_batch_samples: u64,
    pub max_src_samples: u64,
    pub max_tgt_tokens: u64,
}

impl Default for BatchSection {
    fn default() -> Self {
        let d = BatchSpec::default();
        Self {
            max_batch_samples: d.max_batch_samples,
            max_src_samples: d.max_src_samples,
            max_tgt_tokens: d.max_tgt_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedsSection {
    pub seed: u64,
}

impl Default for SeedsSection {
    fn default() -> Self {
        Self { seed: 1 }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn segmentation(&self) -> SegmentationConfig {
        SegmentationConfig {
            max_seg_len: self.segmentation.max_seg_len,
            min_gap: self.segmentation.min_gap,
        }
    }

    pub fn filter(&self) -> FilterConfig {
        FilterConfig {
            event_lexicon: self.filter.event_lexicon.iter().cloned().collect::<BTreeSet<_>>(),
            wer_threshold: self.filter.wer_threshold,
            max_samples: self.filter.max_samples,
        }
    }

    pub fn augment_policy(&self) -> AugmentPolicy {
        AugmentPolicy {
            p_aug: self.augment.p_aug,
            tempo_range: self.augment.tempo,
            pitch_range_cents: self.augment.pitch,
            echo_delay_ms_range: self.augment.echo_delay,
            echo_decay_range: self.augment.echo_decay,
        }
    }

    pub fn sampling(&self) -> SamplingSpec {
        let s = &self.sampling;
        SamplingSpec {
            ratios: [
                (Split::MustCTrain, s.must_c_train),
                (Split::EuroparlTrain, s.europarl_train),
                (Split::EuroparlDev, s.europarl_dev),
                (Split::CovostTrain, s.covost_train),
                (Split::CovostDev, s.covost_dev),
            ],
        }
    }

    pub fn batch(&self) -> BatchSpec {
        BatchSpec {
            max_batch_samples: self.batch.max_batch_samples,
            max_src_samples: self.batch.max_src_samples,
            max_tgt_tokens: self.batch.max_tgt_tokens,
        }
    }
}
