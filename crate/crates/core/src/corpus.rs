//! Training manifests, per-epoch split down-sampling, length filtering and
//! sample-capped batch packing.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unknown split {0:?}")]
    UnknownSplit(String),
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("entry {id}: {n_samples} samples exceed the batch cap of {cap}")]
    OversizedEntry { id: String, n_samples: u64, cap: u64 },
    #[error("sampling ratio for {split} must be in (0, 1], got {ratio}")]
    BadRatio { split: Split, ratio: f64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The five training splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    MustCTrain,
    EuroparlTrain,
    EuroparlDev,
    CovostTrain,
    CovostDev,
}

impl Split {
    pub const ALL: [Split; 5] = [
        Split::MustCTrain,
        Split::EuroparlTrain,
        Split::EuroparlDev,
        Split::CovostTrain,
        Split::CovostDev,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Split::MustCTrain => "MuST-C-train",
            Split::EuroparlTrain => "EuroparlST-train",
            Split::EuroparlDev => "EuroparlST-dev",
            Split::CovostTrain => "CoVoST-train",
            Split::CovostDev => "CoVoST-dev",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Split::ALL
            .into_iter()
            .find(|split| split.name() == s)
            .ok_or_else(|| CorpusError::UnknownSplit(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub audio: String,
    pub n_samples: u64,
    pub n_tgt_tokens: u64,
    pub split: Split,
    pub src_text: String,
    pub tgt_text: String,
}

pub const MANIFEST_HEADER: [&str; 7] = [
    "id",
    "audio",
    "n_samples",
    "n_tgt_tokens",
    "split",
    "src_text",
    "tgt_text",
];

/// Reads a tab-separated manifest with the standard header, no quoting.
pub fn read_manifest(reader: impl Read) -> Result<Vec<ManifestEntry>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(CorpusError::Manifest {
            line: 1,
            reason: format!("expected header {:?}", MANIFEST_HEADER.join("\t")),
        });
    }
    let mut out = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 2;
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let count = |i: usize| {
            field(i).parse::<u64>().map_err(|_| CorpusError::Manifest {
                line,
                reason: format!("{} is not a count: {:?}", MANIFEST_HEADER[i], field(i)),
            })
        };
        let n_samples = count(2)?;
        if n_samples == 0 {
            return Err(CorpusError::Manifest {
                line,
                reason: "n_samples must be positive".into(),
            });
        }
        let split = field(4).parse::<Split>().map_err(|e| CorpusError::Manifest {
            line,
            reason: e.to_string(),
        })?;
        out.push(ManifestEntry {
            id: field(0).to_string(),
            audio: field(1).to_string(),
            n_samples,
            n_tgt_tokens: count(3)?,
            split,
            src_text: field(5).to_string(),
            tgt_text: field(6).to_string(),
        });
    }
    Ok(out)
}

pub fn write_manifest(mut writer: impl Write, entries: &[ManifestEntry]) -> Result<(), CorpusError> {
    writeln!(writer, "{}", MANIFEST_HEADER.join("\t"))?;
    for (i, e) in entries.iter().enumerate() {
        for text in [&e.id, &e.audio, &e.src_text, &e.tgt_text] {
            if text.contains(['\t', '\n', '\r']) {
                return Err(CorpusError::Manifest {
                    line: i + 2,
                    reason: format!("entry {} has a tab or newline inside a field", e.id),
                });
            }
        }
        writeln!(
            writer,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            e.id, e.audio, e.n_samples, e.n_tgt_tokens, e.split, e.src_text, e.tgt_text
        )?;
    }
    Ok(())
}

/// Fraction of each split kept per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSpec {
    pub ratios: [(Split, f64); 5],
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self {
            ratios: [
                (Split::MustCTrain, 1.0),
                (Split::EuroparlTrain, 1.0),
                (Split::EuroparlDev, 1.0),
                (Split::CovostTrain, 0.3),
                (Split::CovostDev, 0.3),
            ],
        }
    }
}

impl SamplingSpec {
    pub fn uniform(ratio: f64) -> Self {
        Self {
            ratios: Split::ALL.map(|s| (s, ratio)),
        }
    }

    pub fn ratio(&self, split: Split) -> f64 {
        self.ratios
            .iter()
            .find(|(s, _)| *s == split)
            .map(|&(_, r)| r)
            .unwrap_or(1.0)
    }

    pub fn set_ratio(&mut self, split: Split, ratio: f64) {
        for entry in &mut self.ratios {
            if entry.0 == split {
                entry.1 = ratio;
            }
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        for &(split, ratio) in &self.ratios {
            if !(ratio > 0.0 && ratio <= 1.0) {
                return Err(CorpusError::BadRatio { split, ratio });
            }
        }
        Ok(())
    }
}

/// Number of entries a split of `n` contributes at `ratio`: `floor(ratio·n)`.
///
/// A tiny slack keeps products such as `0.7 · 100` from rounding down.
pub fn sampled_count(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64) + 1e-9).floor().min(n as f64) as usize
}

/// Mixes a run seed and an epoch number into one sampling seed.
pub fn epoch_seed(seed: u64, epoch: u64) -> u64 {
    // splitmix64 finalizer over the combined value
    let mut z = seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws one epoch: full splits are kept whole, down-sampled splits
/// contribute `floor(ratio·N)` entries without replacement, and the result
/// is shuffled.
pub fn epoch_sample(
    manifest: &[ManifestEntry],
    spec: &SamplingSpec,
    epoch_seed: u64,
) -> Result<Vec<ManifestEntry>, CorpusError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
    let mut out = Vec::with_capacity(manifest.len());
    for split in Split::ALL {
        let members: Vec<&ManifestEntry> = manifest.iter().filter(|e| e.split == split).collect();
        let ratio = spec.ratio(split);
        if ratio >= 1.0 {
            out.extend(members.into_iter().cloned());
        } else {
            let k = sampled_count(ratio, members.len());
            out.extend(members.choose_multiple(&mut rng, k).map(|e| (*e).clone()));
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchSpec {
    pub max_batch_samples: u64,
    pub max_src_samples: u64,
    pub max_tgt_tokens: u64,
}

impl Default for BatchSpec {
    fn default() -> Self {
        Self {
            max_batch_samples: 440_000,
            max_src_samples: 400_000,
            max_tgt_tokens: 1024,
        }
    }
}

/// Drops entries longer than the source or target caps (caps inclusive).
pub fn filter_lengths(entries: Vec<ManifestEntry>, spec: &BatchSpec) -> Vec<ManifestEntry> {
    entries
        .into_iter()
        .filter(|e| e.n_samples <= spec.max_src_samples && e.n_tgt_tokens <= spec.max_tgt_tokens)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Batch {
    pub index: usize,
    pub n_samples: u64,
    pub ids: Vec<String>,
}

/// Length-sorted first-fit packing under `max_batch_samples`.
pub fn build_batches(entries: &[ManifestEntry], spec: &BatchSpec) -> Result<Vec<Batch>, CorpusError> {
    let cap = spec.max_batch_samples;
    let mut order: Vec<&ManifestEntry> = entries.iter().collect();
    order.sort_by(|a, b| b.n_samples.cmp(&a.n_samples));
    let mut batches: Vec<Batch> = Vec::new();
    for entry in order {
        if entry.n_samples > cap {
            return Err(CorpusError::OversizedEntry {
                id: entry.id.clone(),
                n_samples: entry.n_samples,
                cap,
            });
        }
        match batches.iter_mut().find(|b| b.n_samples + entry.n_samples <= cap) {
            Some(batch) => {
                batch.n_samples += entry.n_samples;
                batch.ids.push(entry.id.clone());
            }
            None => batches.push(Batch {
                index: batches.len(),
                n_samples: entry.n_samples,
                ids: vec![entry.id.clone()],
            }),
        }
    }
    Ok(batches)
}

/// Data-parallel workers times gradient-accumulation steps.
pub const EFFECTIVE_BATCH_MULTIPLIER: u64 = 4 * 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchStats {
    pub n_batches: usize,
    pub n_entries: usize,
    pub total_samples: u64,
    pub mean_fill: f64,
    pub effective_batch_multiplier: u64,
}

pub fn batch_stats(batches: &[Batch], spec: &BatchSpec) -> BatchStats {
    let total_samples: u64 = batches.iter().map(|b| b.n_samples).sum();
    let mean_fill = if batches.is_empty() {
        0.0
    } else {
        total_samples as f64 / (batches.len() as f64 * spec.max_batch_samples as f64)
    };
    BatchStats {
        n_batches: batches.len(),
        n_entries: batches.iter().map(|b| b.ids.len()).sum(),
        total_samples,
        mean_fill,
        effective_batch_multiplier: EFFECTIVE_BATCH_MULTIPLIER,
    }
}
