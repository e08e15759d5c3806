//! Target-side text cleanup, ASR-side normalization, word error rate and the
//! combined keep/drop decision for training pairs.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::corpus::Split;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FilterError {
    #[error("word error rate is undefined for an empty reference")]
    EmptyReference,
}

/// Events removed from German targets out of the box.
pub const DEFAULT_EVENTS: [&str; 5] = ["Gelächter", "Applaus", "Musik", "Video", "Beifall"];

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub event_lexicon: BTreeSet<String>,
    pub wer_threshold: f64,
    pub max_samples: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            event_lexicon: DEFAULT_EVENTS.iter().map(|s| s.to_string()).collect(),
            wer_threshold: 0.5,
            max_samples: 400_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptPair {
    pub id: String,
    pub split: Split,
    pub n_samples: u64,
    pub src_text: String,
    pub tgt_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    TooLong,
    EmptyAfterFiltering,
    EmptySource,
    HighWer,
    MissingHypothesis,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::TooLong => "too_long",
            DropReason::EmptyAfterFiltering => "empty_after_filtering",
            DropReason::EmptySource => "empty_source",
            DropReason::HighWer => "high_wer",
            DropReason::MissingHypothesis => "missing_asr_hypothesis",
        }
    }
}

impl std::fmt::Display for DropReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    /// Keep the pair; carries the pair with its filtered target text.
    Keep(TranscriptPair),
    Drop(DropReason),
}

fn speaker_prefix_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(?:\p{Lu}\p{Ll}+(?:[-']\p{Lu}?\p{Ll}+)*(?: \p{Lu}\p{Ll}+(?:[-']\p{Lu}?\p{Ll}+)*)*|\p{Lu}{2,4}):[ \t]?")
            .expect("valid speaker regex")
    })
}

fn thousands_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b\d{1,3}(?: \d{3})+\b").expect("valid thousands regex"))
}

/// Removes one leading speaker marker: a run of capitalized words or 2–4
/// capital initials followed by a colon.
pub fn strip_speaker_prefix(sentence: &str) -> String {
    match speaker_prefix_re().find(sentence) {
        Some(m) => sentence[m.end()..].to_string(),
        None => sentence.to_string(),
    }
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Drops parenthesized non-speech events and unwraps parenthesized speech
/// from a secondary speaker (removing its speaker marker).
///
/// A group is an event when its trimmed content is in `lexicon` or is a
/// single word. Groups holding a speaker marker are unwrapped; any other
/// group, and any unbalanced parenthesis, is left as is.
pub fn remove_events(sentence: &str, lexicon: &BTreeSet<String>) -> String {
    let mut out = String::with_capacity(sentence.len());
    let mut changed = false;
    let mut rest = sentence;
    while let Some(open) = rest.find('(') {
        let after = &rest[open + 1..];
        let close = match after.find([')', '(']) {
            Some(i) if after.as_bytes()[i] == b')' => i,
            Some(i) => {
                // Nested or stray '(': keep text up to the inner '(' and rescan.
                out.push_str(&rest[..open + 1 + i]);
                rest = &after[i..];
                continue;
            }
            None => break,
        };
        out.push_str(&rest[..open]);
        let inner = after[..close].trim();
        let stripped = strip_speaker_prefix(inner);
        if lexicon.contains(inner) {
            changed = true;
        } else if stripped != inner {
            out.push(' ');
            out.push_str(&stripped);
            out.push(' ');
            changed = true;
        } else if !inner.is_empty() && !inner.contains(char::is_whitespace) {
            changed = true;
        } else {
            out.push_str(&rest[open..open + close + 2]);
        }
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    if !changed {
        return sentence.to_string();
    }
    // A removed event may have hidden a speaker marker at sentence start.
    strip_speaker_prefix(&collapse_whitespace(&out))
}

/// Replaces space thousands-separators with commas (`10 000` → `10,000`).
pub fn normalize_thousands(sentence: &str) -> String {
    thousands_re()
        .replace_all(sentence, |caps: &regex::Captures<'_>| caps[0].replace(' ', ","))
        .into_owned()
}

/// Split-dependent cleanup of the German target text.
pub fn filter_target_text(text: &str, split: Split, lexicon: &BTreeSet<String>) -> String {
    match split {
        Split::MustCTrain => collapse_whitespace(&remove_events(&strip_speaker_prefix(text), lexicon)),
        Split::EuroparlTrain | Split::EuroparlDev => collapse_whitespace(&normalize_thousands(text)),
        Split::CovostTrain | Split::CovostDev => text.to_string(),
    }
}

const ONES: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen",
];
const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

fn below_thousand(n: u32, out: &mut Vec<&'static str>) {
    debug_assert!(n < 1000);
    if n >= 100 {
        out.push(ONES[(n / 100) as usize]);
        out.push("hundred");
    }
    let rest = n % 100;
    if rest == 0 {
        return;
    }
    if rest < 20 {
        out.push(ONES[rest as usize]);
    } else {
        out.push(TENS[(rest / 10) as usize]);
        if rest % 10 != 0 {
            out.push(ONES[(rest % 10) as usize]);
        }
    }
}

/// Spells out a digit string: values below one million as English number
/// words ("twenty five"), anything larger digit by digit.
pub fn spell_number(digits: &str) -> Vec<&'static str> {
    debug_assert!(digits.bytes().all(|b| b.is_ascii_digit()));
    let value = digits.parse::<u64>().ok().filter(|&v| v < 1_000_000);
    let Some(value) = value else {
        return digits.bytes().map(|b| ONES[(b - b'0') as usize]).collect();
    };
    if value == 0 {
        return vec!["zero"];
    }
    let mut out = Vec::new();
    let (thousands, rest) = ((value / 1000) as u32, (value % 1000) as u32);
    if thousands > 0 {
        below_thousand(thousands, &mut out);
        out.push("thousand");
    }
    below_thousand(rest, &mut out);
    out
}

/// Lower-cases, strips punctuation (apostrophes survive), spells out digit
/// runs and splits into words.
pub fn normalize_for_asr(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut spaced = String::with_capacity(lowered.len());
    let mut digits = String::new();
    let flush = |digits: &mut String, spaced: &mut String| {
        if !digits.is_empty() {
            for w in spell_number(digits) {
                spaced.push(' ');
                spaced.push_str(w);
            }
            spaced.push(' ');
            digits.clear();
        }
    };
    for c in lowered.chars() {
        if c.is_ascii_digit() {
            digits.push(c);
            continue;
        }
        flush(&mut digits, &mut spaced);
        if c.is_ascii_lowercase() || c == '\'' {
            spaced.push(c);
        } else {
            spaced.push(' ');
        }
    }
    flush(&mut digits, &mut spaced);
    spaced
        .split_whitespace()
        .filter(|w| w.bytes().any(|b| b.is_ascii_lowercase()))
        .map(str::to_string)
        .collect()
}

/// Word-level Levenshtein distance with unit costs.
pub fn edit_distance<S: PartialEq>(a: &[S], b: &[S]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance divided by the reference length.
pub fn word_error_rate<S: PartialEq>(hyp: &[S], reference: &[S]) -> Result<f64, FilterError> {
    if reference.is_empty() {
        return Err(FilterError::EmptyReference);
    }
    Ok(edit_distance(hyp, reference) as f64 / reference.len() as f64)
}

/// Length, empty-target and ASR-agreement filtering of one pair.
///
/// The WER rule is strict: a pair at exactly `wer_threshold` is kept.
pub fn filter_pair(pair: &TranscriptPair, asr_hyp: &[String], cfg: &FilterConfig) -> Decision {
    if pair.n_samples > cfg.max_samples {
        return Decision::Drop(DropReason::TooLong);
    }
    let tgt = filter_target_text(&pair.tgt_text, pair.split, &cfg.event_lexicon);
    if tgt.trim().is_empty() {
        return Decision::Drop(DropReason::EmptyAfterFiltering);
    }
    let reference = normalize_for_asr(&pair.src_text);
    let normalized_hyp: Vec<String> = asr_hyp.iter().flat_map(|w| normalize_for_asr(w)).collect();
    match word_error_rate(&normalized_hyp, &reference) {
        Err(FilterError::EmptyReference) => Decision::Drop(DropReason::EmptySource),
        Ok(wer) if wer > cfg.wer_threshold => Decision::Drop(DropReason::HighWer),
        Ok(_) => Decision::Keep(TranscriptPair {
            tgt_text: tgt,
            ..pair.clone()
        }),
    }
}
