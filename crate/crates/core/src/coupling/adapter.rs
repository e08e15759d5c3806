use ndarray::{Array1, Array2, ArrayView1, Axis};

use super::{CouplingError, FeatureSequence};
use crate::Real;

/// Epsilon added to the variance inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Residual block: layer norm → up-projection → ReLU → down-projection,
/// added back to the input.
///
/// Also used as the gradient container returned by [`adapter_backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterParams<T> {
    pub ln_gain: Array1<T>,
    pub ln_bias: Array1<T>,
    /// `h × d`
    pub w_up: Array2<T>,
    pub b_up: Array1<T>,
    /// `d × h`
    pub w_down: Array2<T>,
    pub b_down: Array1<T>,
}

/// Parameter count of an adapter with model width `d` and inner width `h`.
pub const fn adapter_param_count(d: usize, h: usize) -> usize {
    2 * d + (h * d + h) + (d * h + d)
}

impl<T: Real> AdapterParams<T> {
    /// Zero projections with a neutral layer norm (gain 1, bias 0).
    pub fn neutral(d: usize, h: usize) -> Self {
        Self {
            ln_gain: Array1::ones(d),
            ln_bias: Array1::zeros(d),
            w_up: Array2::zeros((h, d)),
            b_up: Array1::zeros(h),
            w_down: Array2::zeros((d, h)),
            b_down: Array1::zeros(d),
        }
    }

    fn zeros_like(&self) -> Self {
        let (h, d) = self.w_up.dim();
        Self {
            ln_gain: Array1::zeros(d),
            ..Self::neutral(d, h)
        }
    }

    pub fn model_dim(&self) -> usize {
        self.ln_gain.len()
    }

    pub fn inner_dim(&self) -> usize {
        self.b_up.len()
    }

    pub fn param_count(&self) -> usize {
        adapter_param_count(self.model_dim(), self.inner_dim())
    }

    pub fn check_shapes(&self) -> Result<(), CouplingError> {
        let (d, h) = (self.model_dim(), self.inner_dim());
        let ok = self.ln_bias.len() == d
            && self.w_up.dim() == (h, d)
            && self.w_down.dim() == (d, h)
            && self.b_down.len() == d
            && h > 0;
        if ok {
            Ok(())
        } else {
            Err(CouplingError::Shape(format!(
                "adapter parameters inconsistent with d={d}, h={h}"
            )))
        }
    }

    /// Visits every parameter tensor as a flat slice, in a fixed order.
    pub fn tensors_mut(&mut self) -> [&mut [T]; 6] {
        [
            self.ln_gain.as_slice_mut().expect("contiguous"),
            self.ln_bias.as_slice_mut().expect("contiguous"),
            self.w_up.as_slice_mut().expect("contiguous"),
            self.b_up.as_slice_mut().expect("contiguous"),
            self.w_down.as_slice_mut().expect("contiguous"),
            self.b_down.as_slice_mut().expect("contiguous"),
        ]
    }
}

struct Normalized<T> {
    xhat: Array1<T>,
    inv_std: T,
}

fn layer_norm<T: Real>(x: ArrayView1<'_, T>) -> Normalized<T> {
    let d = T::from_usize_lossy(x.len());
    let mean = x.sum() / d;
    let centered = x.mapv(|v| v - mean);
    let var = centered.mapv(|v| v * v).sum() / d;
    let inv_std = (var + T::lit(LAYER_NORM_EPS)).sqrt().recip();
    Normalized {
        xhat: centered.mapv(|v| v * inv_std),
        inv_std,
    }
}

fn check_input<T: Real>(x: &FeatureSequence<T>, p: &AdapterParams<T>) -> Result<(), CouplingError> {
    p.check_shapes()?;
    if x.dim() != p.model_dim() {
        return Err(CouplingError::Shape(format!(
            "input has {} channels, adapter expects {}",
            x.dim(),
            p.model_dim()
        )));
    }
    Ok(())
}

/// `y_t = x_t + W_down·relu(W_up·LN(x_t) + b_up) + b_down` for every step.
pub fn adapter_forward<T: Real>(
    x: &FeatureSequence<T>,
    p: &AdapterParams<T>,
) -> Result<FeatureSequence<T>, CouplingError> {
    check_input(x, p)?;
    let mut out = x.0.clone();
    for (xt, mut yt) in x.0.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        let norm = layer_norm(xt);
        let ln = &norm.xhat * &p.ln_gain + &p.ln_bias;
        let hidden = (p.w_up.dot(&ln) + &p.b_up).mapv(|v| v.max(T::zero()));
        yt += &(p.w_down.dot(&hidden) + &p.b_down);
    }
    Ok(FeatureSequence(out))
}

/// Analytic gradients of `Σ grad_out ⊙ adapter_forward(x, p)` with respect to
/// the input and every parameter.
pub fn adapter_backward<T: Real>(
    x: &FeatureSequence<T>,
    p: &AdapterParams<T>,
    grad_out: &FeatureSequence<T>,
) -> Result<(FeatureSequence<T>, AdapterParams<T>), CouplingError> {
    check_input(x, p)?;
    if grad_out.0.dim() != x.0.dim() {
        return Err(CouplingError::Shape(format!(
            "grad_out {:?} does not match input {:?}",
            grad_out.0.dim(),
            x.0.dim()
        )));
    }
    let d = T::from_usize_lossy(p.model_dim());
    let mut grad_x = grad_out.0.clone();
    let mut g = p.zeros_like();
    for ((xt, dy), mut dxt) in x
        .0
        .axis_iter(Axis(0))
        .zip(grad_out.0.axis_iter(Axis(0)))
        .zip(grad_x.axis_iter_mut(Axis(0)))
    {
        let norm = layer_norm(xt);
        let ln = &norm.xhat * &p.ln_gain + &p.ln_bias;
        let pre = p.w_up.dot(&ln) + &p.b_up;
        let hidden = pre.mapv(|v| v.max(T::zero()));

        g.b_down += &dy;
        g.w_down += &outer(dy, hidden.view());
        let d_hidden = p.w_down.t().dot(&dy);
        let d_pre = ndarray::Zip::from(&d_hidden)
            .and(&pre)
            .map_collect(|&gh, &a| if a > T::zero() { gh } else { T::zero() });
        g.b_up += &d_pre;
        g.w_up += &outer(d_pre.view(), ln.view());
        let d_ln = p.w_up.t().dot(&d_pre);
        g.ln_gain += &(&d_ln * &norm.xhat);
        g.ln_bias += &d_ln;

        let d_xhat = &d_ln * &p.ln_gain;
        let mean_d = d_xhat.sum() / d;
        let mean_dx = (&d_xhat * &norm.xhat).sum() / d;
        let d_x = ndarray::Zip::from(&d_xhat)
            .and(&norm.xhat)
            .map_collect(|&gx, &xh| norm.inv_std * (gx - mean_d - xh * mean_dx));
        dxt += &d_x;
    }
    Ok((FeatureSequence(grad_x), g))
}

fn outer<T: Real>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> Array2<T> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}
