use super::CouplingError;
use crate::Real;

/// `−(1−eps)·lp[target] − (eps/V)·Σ_v lp[v]` for a log-distribution `lp`.
pub fn label_smoothed_ce<T: Real>(logprobs: &[T], target: usize, eps: T) -> Result<T, CouplingError> {
    let classes = logprobs.len();
    if target >= classes {
        return Err(CouplingError::TargetOutOfRange { target, classes });
    }
    let max = logprobs.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + logprobs.iter().map(|&lp| (lp - max).exp()).sum::<T>().ln();
    if !(lse.abs() <= T::lit(1e-6)) {
        return Err(CouplingError::NotADistribution(lse.to_f64_lossy()));
    }
    let sum = logprobs.iter().copied().sum::<T>();
    let v = T::from_usize_lossy(classes);
    Ok(-(T::one() - eps) * logprobs[target] - eps / v * sum)
}
