use ndarray::{Array1, Array2, Array3};

use super::{CouplingError, FeatureSequence};
use crate::Real;

pub const LENGTH_ADAPTOR_LAYERS: usize = 3;
pub const LENGTH_ADAPTOR_KERNEL: usize = 3;
pub const LENGTH_ADAPTOR_STRIDE: usize = 2;

/// One stride-2, kernel-3, padding-1 convolution over time.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    /// `d_out × d_in × kernel`
    pub kernel: Array3<T>,
    pub bias: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LengthAdaptorParams<T> {
    pub layers: Vec<ConvLayer<T>>,
}

impl<T: Real> LengthAdaptorParams<T> {
    pub fn zeros(d: usize) -> Self {
        Self {
            layers: (0..LENGTH_ADAPTOR_LAYERS)
                .map(|_| ConvLayer {
                    kernel: Array3::zeros((d, d, LENGTH_ADAPTOR_KERNEL)),
                    bias: Array1::zeros(d),
                })
                .collect(),
        }
    }

    /// Center tap 1 on the channel diagonal, everything else 0.
    pub fn center_tap_identity(d: usize) -> Self {
        let mut p = Self::zeros(d);
        for layer in &mut p.layers {
            for c in 0..d {
                layer.kernel[[c, c, 1]] = T::one();
            }
        }
        p
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.kernel.len() + l.bias.len()).sum()
    }

    fn check(&self, d_in: usize) -> Result<(), CouplingError> {
        if self.layers.len() != LENGTH_ADAPTOR_LAYERS {
            return Err(CouplingError::Shape(format!(
                "length adaptor needs {LENGTH_ADAPTOR_LAYERS} layers, got {}",
                self.layers.len()
            )));
        }
        let mut channels = d_in;
        for (i, layer) in self.layers.iter().enumerate() {
            let (out_c, in_c, k) = layer.kernel.dim();
            if in_c != channels || k != LENGTH_ADAPTOR_KERNEL || layer.bias.len() != out_c {
                return Err(CouplingError::Shape(format!(
                    "layer {i}: kernel {:?} / bias {} incompatible with {channels} input channels",
                    layer.kernel.dim(),
                    layer.bias.len()
                )));
            }
            channels = out_c;
        }
        Ok(())
    }
}

/// Parameters of the channel-preserving adaptor at width `d`.
pub const fn length_adaptor_param_count(d: usize) -> usize {
    LENGTH_ADAPTOR_LAYERS * (d * d * LENGTH_ADAPTOR_KERNEL + d)
}

/// `ceil(ceil(ceil(T/2)/2)/2)`.
pub fn length_adaptor_output_len(steps: usize) -> usize {
    (0..LENGTH_ADAPTOR_LAYERS).fold(steps, |t, _| t.div_ceil(LENGTH_ADAPTOR_STRIDE))
}

fn conv_stride2<T: Real>(x: &Array2<T>, layer: &ConvLayer<T>, relu: bool) -> Array2<T> {
    let steps = x.nrows();
    let out_steps = steps.div_ceil(LENGTH_ADAPTOR_STRIDE);
    let (out_c, in_c, _) = layer.kernel.dim();
    let mut out = Array2::zeros((out_steps, out_c));
    for t in 0..out_steps {
        for o in 0..out_c {
            let mut acc = layer.bias[o];
            for k in 0..LENGTH_ADAPTOR_KERNEL {
                // input index 2t + k - 1 with zero padding of 1 on each side
                let src = (LENGTH_ADAPTOR_STRIDE * t + k).checked_sub(1);
                let Some(src) = src.filter(|&s| s < steps) else {
                    continue;
                };
                for c in 0..in_c {
                    acc += layer.kernel[[o, c, k]] * x[[src, c]];
                }
            }
            out[[t, o]] = if relu { acc.max(T::zero()) } else { acc };
        }
    }
    out
}

/// Three stride-2 convolutions with ReLU after the first two: 8× temporal
/// down-sampling.
pub fn length_adaptor_forward<T: Real>(
    x: &FeatureSequence<T>,
    p: &LengthAdaptorParams<T>,
) -> Result<FeatureSequence<T>, CouplingError> {
    p.check(x.dim())?;
    let mut h = x.0.clone();
    for (i, layer) in p.layers.iter().enumerate() {
        h = conv_stride2(&h, layer, i + 1 < LENGTH_ADAPTOR_LAYERS);
    }
    Ok(FeatureSequence(h))
}
