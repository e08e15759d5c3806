//! Recursive audio segmentation driven by frame-level ASR token predictions.
//!
//! A file is split on its largest untranscribable period (a run of frames
//! whose predicted token contains no ASCII letter) until every piece fits
//! under `max_seg_len`, or until no run of at least `min_gap` remains inside
//! an over-long piece.

use std::fmt::Write as _;
use std::io::BufRead;

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("line {line}: malformed transcript JSON: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line} ({audio}): empty transcript")]
    EmptyTranscript { line: usize, audio: String },
    #[error("line {line} ({audio}): frame_ms must be positive, got {frame_ms}")]
    BadFrameStep {
        line: usize,
        audio: String,
        frame_ms: i64,
    },
    #[error("segment list line {line}: {reason}")]
    Yaml { line: usize, reason: String },
    #[error("invalid segmentation config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-file ASR token predictions at a fixed frame step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameTranscript {
    pub audio_id: String,
    pub frame_ms: u32,
    pub tokens: Vec<String>,
}

impl FrameTranscript {
    pub fn new(audio_id: impl Into<String>, frame_ms: u32, tokens: Vec<String>) -> Self {
        Self {
            audio_id: audio_id.into(),
            frame_ms,
            tokens,
        }
    }

    pub fn num_frames(&self) -> usize {
        self.tokens.len()
    }

    pub fn duration_seconds(&self) -> f64 {
        frames_to_seconds(self.tokens.len(), self.frame_ms)
    }
}

fn frames_to_seconds(frames: usize, frame_ms: u32) -> f64 {
    (frames as u64 * frame_ms as u64) as f64 / 1000.0
}

/// Maximal run of untranscribable frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gap {
    pub start_frame: usize,
    pub num_frames: usize,
}

impl Gap {
    pub fn end_frame(&self) -> usize {
        self.start_frame + self.num_frames
    }

    /// Frame the split happens at.
    pub fn midpoint(&self) -> usize {
        self.start_frame + self.num_frames / 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub wav: String,
    pub offset: f64,
    pub duration: f64,
    pub speaker_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentationConfig {
    pub max_seg_len: f64,
    pub min_gap: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            max_seg_len: 22.0,
            min_gap: 0.2,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<(), SegmentError> {
        if !(self.min_gap > 0.0) {
            return Err(SegmentError::Config(format!(
                "min_gap must be positive, got {}",
                self.min_gap
            )));
        }
        if !(self.max_seg_len > self.min_gap) {
            return Err(SegmentError::Config(format!(
                "max_seg_len ({}) must exceed min_gap ({})",
                self.max_seg_len, self.min_gap
            )));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct TranscriptLine {
    audio: String,
    frame_ms: i64,
    tokens: Vec<String>,
}

/// Parses the JSON-lines frame transcript format, one object per audio file:
/// `{"audio": "a.wav", "frame_ms": 20, "tokens": ["H", "", "|", ...]}`.
///
/// Blank lines are skipped.
pub fn parse_frame_transcripts(reader: impl BufRead) -> Result<Vec<FrameTranscript>, SegmentError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TranscriptLine = serde_json::from_str(&line).map_err(|source| SegmentError::Json {
            line: line_no,
            source,
        })?;
        if parsed.frame_ms <= 0 || parsed.frame_ms > u32::MAX as i64 {
            return Err(SegmentError::BadFrameStep {
                line: line_no,
                audio: parsed.audio,
                frame_ms: parsed.frame_ms,
            });
        }
        if parsed.tokens.is_empty() {
            return Err(SegmentError::EmptyTranscript {
                line: line_no,
                audio: parsed.audio,
            });
        }
        out.push(FrameTranscript::new(parsed.audio, parsed.frame_ms as u32, parsed.tokens));
    }
    Ok(out)
}

/// A frame is transcribable when its token holds at least one ASCII letter.
///
/// The CTC blank therefore has to be serialized as `""` (or any letter-free
/// symbol), never as something like `"<pad>"`.
pub fn is_transcribable(token: &str) -> bool {
    token.bytes().any(|b| b.is_ascii_alphabetic())
}

fn min_gap_frames(min_gap: f64, frame_ms: u32) -> usize {
    // Smallest run length n with n·frame_ms ≥ min_gap·1000 (with float slack).
    let needed_ms = min_gap * 1000.0 - 1e-9;
    let n = (needed_ms / frame_ms as f64).ceil();
    n.max(1.0) as usize
}

/// All maximal untranscribable runs lasting at least `min_gap` seconds, in
/// positional order.
pub fn find_gaps(t: &FrameTranscript, min_gap: f64) -> Vec<Gap> {
    let min_frames = min_gap_frames(min_gap, t.frame_ms);
    let mut gaps = Vec::new();
    let mut run_start = None;
    for (i, tok) in t.tokens.iter().enumerate() {
        match (is_transcribable(tok), run_start) {
            (false, None) => run_start = Some(i),
            (true, Some(start)) => {
                if i - start >= min_frames {
                    gaps.push(Gap {
                        start_frame: start,
                        num_frames: i - start,
                    });
                }
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(start) = run_start {
        let n = t.tokens.len() - start;
        if n >= min_frames {
            gaps.push(Gap {
                start_frame: start,
                num_frames: n,
            });
        }
    }
    gaps
}

/// Frame-index span `[start, end)` produced by the recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameSpan {
    pub start: usize,
    pub end: usize,
}

/// Picks the largest gap lying strictly inside the span; equal sizes go to
/// the gap whose midpoint is nearest the span centre, then to the earlier.
fn choose_gap(gaps: &[Gap], span: FrameSpan) -> Option<Gap> {
    let centre2 = span.start + span.end;
    gaps.iter()
        .filter(|g| g.start_frame > span.start && g.end_frame() < span.end)
        .min_by_key(|g| {
            let mid2 = 2 * g.midpoint();
            (std::cmp::Reverse(g.num_frames), mid2.abs_diff(centre2), g.start_frame)
        })
        .copied()
}

/// Frame spans of the recursive split; see [`split_recursive`].
pub fn split_spans(t: &FrameTranscript, cfg: &SegmentationConfig) -> Vec<FrameSpan> {
    let gaps = find_gaps(t, cfg.min_gap);
    let max_ms = cfg.max_seg_len * 1000.0;
    let mut out = Vec::new();
    // Explicit stack, right child pushed first so spans come out in order.
    let mut stack = vec![FrameSpan {
        start: 0,
        end: t.tokens.len(),
    }];
    while let Some(span) = stack.pop() {
        let span_ms = ((span.end - span.start) as u64 * t.frame_ms as u64) as f64;
        if span_ms <= max_ms + 1e-9 {
            out.push(span);
            continue;
        }
        match choose_gap(&gaps, span) {
            Some(gap) => {
                let cut = gap.midpoint();
                stack.push(FrameSpan { start: cut, end: span.end });
                stack.push(FrameSpan { start: span.start, end: cut });
            }
            None => out.push(span),
        }
    }
    out
}

/// Splits one file into segments that jointly cover it without overlap.
pub fn split_recursive(
    t: &FrameTranscript,
    cfg: &SegmentationConfig,
    speaker_id: &str,
) -> Vec<Segment> {
    split_spans(t, cfg)
        .into_iter()
        .filter(|s| s.end > s.start)
        .map(|s| Segment {
            wav: t.audio_id.clone(),
            offset: frames_to_seconds(s.start, t.frame_ms),
            duration: frames_to_seconds(s.end - s.start, t.frame_ms),
            speaker_id: speaker_id.to_string(),
        })
        .collect()
}

/// Segments every transcript; speaker ids are `spk.<1-based file index>`.
pub fn segment_all(
    transcripts: &[FrameTranscript],
    cfg: &SegmentationConfig,
) -> Result<Vec<Segment>, SegmentError> {
    cfg.validate()?;
    Ok(transcripts
        .iter()
        .enumerate()
        .flat_map(|(i, t)| split_recursive(t, cfg, &format!("spk.{}", i + 1)))
        .collect())
}

/// Swept `max_seg_len` values `lo, lo+step, …` up to `hi` inclusive.
pub fn sweep_values(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, SegmentError> {
    if !(step > 0.0) || !(lo <= hi) {
        return Err(SegmentError::Config(format!(
            "sweep needs lo ≤ hi and step > 0 (lo={lo}, hi={hi}, step={step})"
        )));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| lo + i as f64 * step).collect())
}

/// One segmentation per swept `max_seg_len`, in increasing order.
pub fn sweep_max_seg_len(
    transcripts: &[FrameTranscript],
    lo: f64,
    hi: f64,
    step: f64,
    min_gap: f64,
) -> Result<Vec<(f64, Vec<Segment>)>, SegmentError> {
    sweep_values(lo, hi, step)?
        .into_iter()
        .map(|max_seg_len| {
            let cfg = SegmentationConfig {
                max_seg_len,
                min_gap,
            };
            segment_all(transcripts, &cfg).map(|segs| (max_seg_len, segs))
        })
        .collect()
}

/// Serializes segments as an IWSLT-style YAML list, one flow mapping per
/// line with keys in alphabetical order and 6-decimal times.
pub fn write_segments_yaml(segments: &[Segment]) -> String {
    let mut out = String::new();
    for s in segments {
        writeln!(
            out,
            "- {{duration: {:.6}, offset: {:.6}, speaker_id: {}, wav: {}}}",
            s.duration, s.offset, s.speaker_id, s.wav
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn parse_segments_yaml(text: &str) -> Result<Vec<Segment>, SegmentError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: String| SegmentError::Yaml {
            line: line_no,
            reason,
        };
        let body = line
            .strip_prefix("- {")
            .and_then(|l| l.strip_suffix('}'))
            .ok_or_else(|| err("expected '- {key: value, ...}'".into()))?;
        let (mut duration, mut offset, mut speaker, mut wav) = (None, None, None, None);
        for field in body.split(',') {
            let (key, value) = field
                .split_once(':')
                .ok_or_else(|| err(format!("field without ':' in {field:?}")))?;
            let value = value.trim().trim_matches(|c| c == '\'' || c == '"');
            match key.trim() {
                "duration" => duration = Some(parse_seconds(value).map_err(&err)?),
                "offset" => offset = Some(parse_seconds(value).map_err(&err)?),
                "speaker_id" => speaker = Some(value.to_string()),
                "wav" => wav = Some(value.to_string()),
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        let offset = offset.ok_or_else(|| err("missing offset".into()))?;
        let duration = duration.ok_or_else(|| err("missing duration".into()))?;
        if offset < 0.0 {
            return Err(err(format!("negative offset {offset}")));
        }
        if duration <= 0.0 {
            return Err(err(format!("non-positive duration {duration}")));
        }
        out.push(Segment {
            wav: wav.ok_or_else(|| err("missing wav".into()))?,
            offset,
            duration,
            speaker_id: speaker.ok_or_else(|| err("missing speaker_id".into()))?,
        });
    }
    Ok(out)
}

fn parse_seconds(value: &str) -> Result<f64, String> {
    let v: f64 = value
        .parse()
        .map_err(|_| format!("not a number: {value:?}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("not finite: {value:?}"))
    }
}
