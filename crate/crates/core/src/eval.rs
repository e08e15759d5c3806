//! Resegmented translation scoring: 13a tokenization, minimum-edit-distance
//! resegmentation of a hypothesis stream onto reference segments, and
//! corpus BLEU with exponential smoothing.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::segmenter::Segment;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("at least one reference segment is required")]
    NoReferences,
    #[error("{hyp} hypothesis segments for {refs} reference segments")]
    SegmentCountMismatch { hyp: usize, refs: usize },
    #[error("all reference segments are empty")]
    EmptyReferences,
    #[error("{segments} segments but {translations} translations")]
    TranslationCountMismatch { segments: usize, translations: usize },
}

/// Sequence of non-empty tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenStream(Vec<String>);

impl TokenStream {
    /// Builds a stream, dropping empty tokens.
    pub fn new<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        Self(tokens.into_iter().map(Into::into).filter(|t: &String| !t.is_empty()).collect())
    }

    /// Whitespace-split, no further tokenization.
    pub fn from_whitespace(text: &str) -> Self {
        Self::new(text.split_whitespace())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

struct Regexes13a {
    symbols: Regex,
    period_comma_before: Regex,
    period_comma_after: Regex,
    dash_after_digit: Regex,
}

fn regexes_13a() -> &'static Regexes13a {
    static RE: OnceLock<Regexes13a> = OnceLock::new();
    RE.get_or_init(|| Regexes13a {
        symbols: Regex::new(r"([\{-~\[-` -&\(-\+:-@/])").expect("13a symbol regex"),
        period_comma_before: Regex::new(r"([^0-9])([\.,])").expect("13a regex"),
        period_comma_after: Regex::new(r"([\.,])([^0-9])").expect("13a regex"),
        dash_after_digit: Regex::new(r"([0-9])(-)").expect("13a regex"),
    })
}

fn map_unicode_punct(c: char) -> Option<&'static str> {
    Some(match c {
        '\u{2018}' | '\u{2019}' | '\u{201A}' | '\u{2032}' => "'",
        '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{00AB}' | '\u{00BB}' => "\"",
        '\u{2013}' | '\u{2014}' | '\u{2212}' => "-",
        '\u{2026}' => "...",
        '\u{00A0}' | '\u{202F}' => " ",
        _ => return None,
    })
}

/// mteval-v13a tokenization as used by the standard BLEU scorer, after
/// mapping common Unicode quotes, dashes and ellipses to ASCII.
pub fn tokenize_13a(text: &str) -> TokenStream {
    let mut line = String::with_capacity(text.len() + 2);
    for c in text.chars() {
        match map_unicode_punct(c) {
            Some(s) => line.push_str(s),
            None => line.push(c),
        }
    }
    let mut line = line.replace("<skipped>", "").replace("-\n", "").replace('\n', " ");
    if line.contains('&') {
        line = line
            .replace("&quot;", "\"")
            .replace("&amp;", "&")
            .replace("&lt;", "<")
            .replace("&gt;", ">");
    }
    let re = regexes_13a();
    let line = format!(" {line} ");
    let line = re.symbols.replace_all(&line, " $1 ");
    let line = re.period_comma_before.replace_all(&line, "$1 $2 ");
    let line = re.period_comma_after.replace_all(&line, " $1 $2");
    let line = re.dash_after_digit.replace_all(&line, "$1 $2 ");
    TokenStream::from_whitespace(&line)
}

/// Key used when aligning words: lower-cased with punctuation removed;
/// pure-punctuation tokens keep their own text.
fn alignment_key(token: &str) -> String {
    let key: String = token
        .chars()
        .filter(|c| c.is_alphanumeric() || *c == '\'')
        .flat_map(char::to_lowercase)
        .collect();
    if key.is_empty() {
        token.to_string()
    } else {
        key
    }
}

/// Result of [`resegment_mwer`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resegmentation {
    pub segments: Vec<TokenStream>,
    /// Start index into the hypothesis of every segment.
    pub boundaries: Vec<usize>,
    pub total_distance: usize,
}

/// Splits `hyp` into one contiguous (possibly empty) group per reference
/// segment so that the summed word edit distance is minimal.
///
/// Among optimal splits the last boundary is placed as early as possible,
/// then the one before it, and so on.
pub fn resegment_mwer(hyp: &TokenStream, refs: &[TokenStream]) -> Result<Resegmentation, EvalError> {
    if refs.is_empty() {
        return Err(EvalError::NoReferences);
    }
    let mut interner: HashMap<String, usize> = HashMap::new();
    let mut intern = |t: &str| {
        let next = interner.len();
        *interner.entry(alignment_key(t)).or_insert(next)
    };
    let h: Vec<usize> = hyp.tokens().iter().map(|t| intern(t)).collect();
    let r: Vec<Vec<usize>> = refs
        .iter()
        .map(|seg| seg.tokens().iter().map(|t| intern(t)).collect())
        .collect();
    let n = h.len();

    // best[j] = (cost, start of the current segment) after k segments have
    // consumed hyp[..j]; starts[k][j] keeps the chosen start for backtracking.
    let mut best: Vec<(usize, usize)> = vec![(usize::MAX, 0); n + 1];
    best[0] = (0, 0);
    let mut starts: Vec<Vec<usize>> = Vec::with_capacity(r.len());
    for seg in &r {
        let m = seg.len();
        // cells[r] holds (cost, start) for the column at the current hyp index.
        let mut col: Vec<(usize, usize)> = vec![(usize::MAX, 0); m + 1];
        let mut next_best = vec![(usize::MAX, 0); n + 1];
        for j in 0..=n {
            let mut new_col = vec![(usize::MAX, 0); m + 1];
            // Enter this segment at j, or extend row 0 by inserting hyp[j-1].
            let mut head = if best[j].0 == usize::MAX { (usize::MAX, 0) } else { (best[j].0, j) };
            if j > 0 && col[0].0 != usize::MAX {
                head = head.min((col[0].0 + 1, col[0].1));
            }
            new_col[0] = head;
            for ri in 1..=m {
                let mut cell = (usize::MAX, 0);
                // deletion of ref word
                if new_col[ri - 1].0 != usize::MAX {
                    cell = cell.min((new_col[ri - 1].0 + 1, new_col[ri - 1].1));
                }
                if j > 0 {
                    if col[ri].0 != usize::MAX {
                        cell = cell.min((col[ri].0 + 1, col[ri].1));
                    }
                    if col[ri - 1].0 != usize::MAX {
                        let sub = usize::from(h[j - 1] != seg[ri - 1]);
                        cell = cell.min((col[ri - 1].0 + sub, col[ri - 1].1));
                    }
                }
                new_col[ri] = cell;
            }
            next_best[j] = new_col[m];
            col = new_col;
        }
        starts.push(next_best.iter().map(|&(_, s)| s).collect());
        best = next_best.into_iter().map(|(c, _)| (c, 0)).collect();
    }
    let total_distance = best[n].0;

    let mut boundaries = vec![0; r.len()];
    let mut end = n;
    for k in (0..r.len()).rev() {
        let start = starts[k][end];
        boundaries[k] = start;
        end = start;
    }
    let segments = (0..r.len())
        .map(|k| {
            let stop = if k + 1 < r.len() { boundaries[k + 1] } else { n };
            TokenStream(hyp.tokens()[boundaries[k]..stop].to_vec())
        })
        .collect();
    Ok(Resegmentation {
        segments,
        boundaries,
        total_distance,
    })
}

pub const MAX_NGRAM_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct BleuScore {
    /// 0–100.
    pub score: f64,
    /// Smoothed n-gram precisions as ratios in [0, 1], orders 1 to 4.
    pub precisions: [f64; MAX_NGRAM_ORDER],
    pub counts: [usize; MAX_NGRAM_ORDER],
    pub totals: [usize; MAX_NGRAM_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
    /// Set when the hypothesis corpus has no tokens; score and brevity
    /// penalty are then reported as 0 by convention.
    pub empty_hypothesis: bool,
}

impl std::fmt::Display for BleuScore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let ratio = if self.ref_len == 0 { 0.0 } else { self.hyp_len as f64 / self.ref_len as f64 };
        write!(
            f,
            "BLEU = {:.2} {:.1}/{:.1}/{:.1}/{:.1} (BP = {:.3} ratio = {:.3} hyp_len = {} ref_len = {})",
            self.score,
            100.0 * self.precisions[0],
            100.0 * self.precisions[1],
            100.0 * self.precisions[2],
            100.0 * self.precisions[3],
            self.brevity_penalty,
            ratio,
            self.hyp_len,
            self.ref_len
        )
    }
}

fn ngram_counts(tokens: &[String], order: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= order {
        for gram in tokens.windows(order) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU-4 over aligned hypothesis/reference segments.
pub fn corpus_bleu(hyp: &[TokenStream], refs: &[TokenStream]) -> Result<BleuScore, EvalError> {
    if hyp.len() != refs.len() {
        return Err(EvalError::SegmentCountMismatch {
            hyp: hyp.len(),
            refs: refs.len(),
        });
    }
    if refs.iter().all(TokenStream::is_empty) {
        return Err(EvalError::EmptyReferences);
    }
    let mut counts = [0usize; MAX_NGRAM_ORDER];
    let mut totals = [0usize; MAX_NGRAM_ORDER];
    let (mut hyp_len, mut ref_len) = (0, 0);
    for (h, r) in hyp.iter().zip(refs) {
        hyp_len += h.len();
        ref_len += r.len();
        for order in 1..=MAX_NGRAM_ORDER {
            let ref_grams = ngram_counts(r.tokens(), order);
            let hyp_grams = ngram_counts(h.tokens(), order);
            totals[order - 1] += h.len().saturating_sub(order - 1);
            counts[order - 1] += hyp_grams
                .iter()
                .map(|(g, &c)| c.min(ref_grams.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }
    let mut result = BleuScore {
        score: 0.0,
        precisions: [0.0; MAX_NGRAM_ORDER],
        counts,
        totals,
        brevity_penalty: 0.0,
        hyp_len,
        ref_len,
        empty_hypothesis: hyp_len == 0,
    };
    if hyp_len == 0 {
        return Ok(result);
    }
    result.brevity_penalty = if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    if counts.iter().all(|&c| c == 0) {
        return Ok(result);
    }
    let mut smooth = 1.0;
    for n in 0..MAX_NGRAM_ORDER {
        if totals[n] == 0 {
            // Orders longer than the whole hypothesis keep precision 0.
            break;
        }
        result.precisions[n] = if counts[n] == 0 {
            smooth *= 2.0;
            1.0 / (smooth * totals[n] as f64)
        } else {
            counts[n] as f64 / totals[n] as f64
        };
    }
    if result.precisions.iter().any(|&p| p == 0.0) {
        return Ok(result);
    }
    let log_mean = result.precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_NGRAM_ORDER as f64;
    result.score = 100.0 * result.brevity_penalty * log_mean.exp();
    Ok(result)
}

/// Concatenates per-segment translations in (wav, offset) order, tokenizes,
/// resegments against `refs` and scores the result.
pub fn score_segmentation(
    segments: &[Segment],
    translations: &[String],
    refs: &[TokenStream],
) -> Result<BleuScore, EvalError> {
    if segments.len() != translations.len() {
        return Err(EvalError::TranslationCountMismatch {
            segments: segments.len(),
            translations: translations.len(),
        });
    }
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.sort_by(|&a, &b| {
        segments[a]
            .wav
            .cmp(&segments[b].wav)
            .then(segments[a].offset.total_cmp(&segments[b].offset))
    });
    let joined = order
        .iter()
        .map(|&i| translations[i].as_str())
        .collect::<Vec<_>>()
        .join(" ");
    score_stream(&joined, refs)
}

/// Scores a raw hypothesis text (segment boundaries ignored) against
/// reference segments after resegmentation.
pub fn score_stream(hyp_text: &str, refs: &[TokenStream]) -> Result<BleuScore, EvalError> {
    let hyp = tokenize_13a(hyp_text);
    let reseg = resegment_mwer(&hyp, refs)?;
    corpus_bleu(&reseg.segments, refs)
}
