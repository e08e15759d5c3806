use ndarray::Array2;
use rand::Rng;

use crate::Real;

/// `T × d` encoder output, one row per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence<T>(pub Array2<T>);

impl<T: Real> FeatureSequence<T> {
    pub fn zeros(steps: usize, dim: usize) -> Self {
        Self(Array2::zeros((steps, dim)))
    }

    pub fn steps(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskPolicy {
    pub n_spans: usize,
    /// Longest span as a fraction of the sequence length.
    pub max_span: f64,
}

impl Default for MaskPolicy {
    fn default() -> Self {
        Self {
            n_spans: 2,
            max_span: 0.1,
        }
    }
}

/// Draws `(start, len)` spans: `len` uniform in `[1, max(1, ⌊max_span·T⌋)]`,
/// start uniform over positions where the span fits.
pub fn sample_mask_spans<R: Rng + ?Sized>(
    steps: usize,
    n_spans: usize,
    max_span: f64,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    assert!((0.0..=1.0).contains(&max_span), "max_span must lie in [0, 1]");
    if steps == 0 {
        return Vec::new();
    }
    let longest = ((max_span * steps as f64).floor() as usize).clamp(1, steps);
    (0..n_spans)
        .map(|_| {
            let len = rng.random_range(1..=longest);
            let start = rng.random_range(0..=steps - len);
            (start, len)
        })
        .collect()
}

/// Zeroes the rows covered by `spans`; other rows are copied unchanged.
pub fn apply_mask_spans<T: Real>(x: &FeatureSequence<T>, spans: &[(usize, usize)]) -> FeatureSequence<T> {
    let mut out = x.clone();
    let steps = x.steps();
    for &(start, len) in spans {
        for t in start.min(steps)..(start + len).min(steps) {
            out.0.row_mut(t).fill(T::zero());
        }
    }
    out
}

/// Time masking on feature-extractor outputs.
pub fn feature_mask<T: Real, R: Rng + ?Sized>(
    x: &FeatureSequence<T>,
    n_spans: usize,
    max_span: f64,
    rng: &mut R,
) -> FeatureSequence<T> {
    let spans = sample_mask_spans(x.steps(), n_spans, max_span, rng);
    apply_mask_spans(x, &spans)
}
