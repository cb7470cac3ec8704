//! Return statistics: excess series, information ratio, Newey-West t.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::backtest::ReturnSeries;
use crate::types::{CycleId, ProviderId, SignalStrategy};

/// Per-cycle α = portfolio return − benchmark return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcessReturnSeries {
    pub provider: ProviderId,
    pub strategy: SignalStrategy,
    pub cycles: Vec<CycleId>,
    pub alphas: Vec<f64>,
}

impl ExcessReturnSeries {
    pub fn mean(&self) -> f64 {
        mean(&self.alphas).unwrap_or(0.0)
    }
}

pub fn excess_return_series(returns: &ReturnSeries) -> Result<ExcessReturnSeries, EvalError> {
    if returns.records.is_empty() {
        return Err(EvalError::EmptySample);
    }
    Ok(ExcessReturnSeries {
        provider: returns.provider.clone(),
        strategy: returns.strategy,
        cycles: returns.records.iter().map(|r| r.cycle_id.clone()).collect(),
        alphas: returns.alphas(),
    })
}

/// Sum with Neumaier compensation, so short sums round correctly.
pub fn precise_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn mean(xs: &[f64]) -> Result<f64, EvalError> {
    if xs.is_empty() {
        return Err(EvalError::EmptySample);
    }
    Ok(precise_sum(xs) / xs.len() as f64)
}

/// Sample standard deviation (N − 1 denominator).
pub fn sample_std(xs: &[f64]) -> Result<f64, EvalError> {
    if xs.len() < 2 {
        return Err(EvalError::InsufficientSample { needed: 2, got: xs.len() });
    }
    let m = mean(xs)?;
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    Ok((precise_sum(&dev) / (xs.len() - 1) as f64).sqrt())
}

/// Mean α over its sample standard deviation.
pub fn information_ratio(alphas: &[f64]) -> Result<f64, EvalError> {
    if alphas.len() < 2 {
        return Err(EvalError::InsufficientSample { needed: 2, got: alphas.len() });
    }
    let lo = alphas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = alphas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Err(EvalError::DegenerateTrackingError);
    }
    Ok(mean(alphas)? / sample_std(alphas)?)
}

/// γ̂_j = (1/T) Σ_{t≥j} (α_t − ᾱ)(α_{t−j} − ᾱ).
pub fn autocovariance(alphas: &[f64], j: usize) -> f64 {
    let t = alphas.len();
    if j >= t {
        return 0.0;
    }
    let m = precise_sum(alphas) / t as f64;
    let terms: Vec<f64> = (j..t).map(|i| (alphas[i] - m) * (alphas[i - j] - m)).collect();
    precise_sum(&terms) / t as f64
}

/// Bartlett-kernel long-run variance γ̂_0 + 2 Σ_j (1 − j/(L+1)) γ̂_j.
pub fn newey_west_variance(alphas: &[f64], lag: usize) -> f64 {
    let mut s = autocovariance(alphas, 0);
    for j in 1..=lag {
        let w = 1.0 - j as f64 / (lag as f64 + 1.0);
        s += 2.0 * w * autocovariance(alphas, j);
    }
    s
}

/// t = ᾱ / sqrt(S / T) with the Newey-West long-run variance S.
pub fn nw_tstat(alphas: &[f64], lag: usize) -> Result<f64, EvalError> {
    let t = alphas.len();
    if t < 3 {
        return Err(EvalError::InsufficientSample { needed: 3, got: t });
    }
    if lag >= t {
        return Err(EvalError::InvalidInput(format!("lag {lag} needs more than {t} observations")));
    }
    let s = newey_west_variance(alphas, lag);
    if !(s > 0.0) {
        return Err(EvalError::NonPositiveVariance(s));
    }
    Ok(mean(alphas)? / (s / t as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulativeExcess {
    /// Σ α_t, the headline figure.
    pub arithmetic: f64,
    /// Π (1 + α_t) − 1.
    pub geometric: f64,
}

pub fn cumulative_excess(alphas: &[f64]) -> Result<CumulativeExcess, EvalError> {
    if alphas.is_empty() {
        return Err(EvalError::EmptySample);
    }
    let geometric = alphas.iter().fold(1.0, |acc, a| acc * (1.0 + a)) - 1.0;
    Ok(CumulativeExcess { arithmetic: precise_sum(alphas), geometric })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ir_hand_value() {
        let ir = information_ratio(&[0.01, 0.02, 0.03]).unwrap();
        assert!((ir - 2.0).abs() < 1e-12, "{ir}");
        assert_eq!(information_ratio(&[-0.02, 0.0, 0.02]).unwrap(), 0.0);
        assert_eq!(information_ratio(&[0.01; 4]), Err(EvalError::DegenerateTrackingError));
        assert!(matches!(information_ratio(&[0.01]), Err(EvalError::InsufficientSample { .. })));
    }

    #[test]
    fn ir_invariant_to_common_shift() {
        // α depends only on the difference, so shifting both legs leaves IR unchanged
        let p = [0.03, -0.01, 0.02, 0.05];
        let b = [0.01, 0.00, -0.01, 0.02];
        let a: Vec<f64> = p.iter().zip(b).map(|(p, b)| p - b).collect();
        let a2: Vec<f64> = p.iter().zip(b).map(|(p, b)| (p + 0.07) - (b + 0.07)).collect();
        assert!((information_ratio(&a).unwrap() - information_ratio(&a2).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn nw_short_series() {
        assert_eq!(nw_tstat(&[0.1, 0.2], 1), Err(EvalError::InsufficientSample { needed: 3, got: 2 }));
        assert!(matches!(nw_tstat(&[0.25, 0.25, 0.25], 1), Err(EvalError::NonPositiveVariance(_))));
    }

    #[test]
    fn nw_lag_zero_is_classical() {
        let a = [0.012, -0.004, 0.031, 0.008, 0.019, -0.011, 0.026];
        let n = a.len() as f64;
        let m = a.iter().sum::<f64>() / n;
        let g0 = a.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        let classical = m / (g0 / n).sqrt();
        assert!((nw_tstat(&a, 0).unwrap() - classical).abs() < 1e-12);
    }

    #[test]
    fn nw_with_zero_first_autocovariance() {
        // every adjacent pair of deviations contains a zero, so the lag-1 products vanish
        let a: Vec<f64> = [1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0].iter().map(|d| 0.02 + 0.01 * d).collect();
        let g1 = autocovariance(&a, 1);
        assert!(g1.abs() < 1e-15, "{g1}");
        assert!((nw_tstat(&a, 1).unwrap() - nw_tstat(&a, 0).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn cumulative_values() {
        let c = cumulative_excess(&[0.0402; 10]).unwrap();
        assert_eq!(c.arithmetic, 0.402);
        assert_eq!(cumulative_excess(&[0.0; 3]).unwrap(), CumulativeExcess { arithmetic: 0.0, geometric: 0.0 });
        let c = cumulative_excess(&[0.1, -0.1]).unwrap();
        assert_eq!(c.arithmetic, 0.0);
        assert!((c.geometric + 0.01).abs() < 1e-15);
        assert_eq!(cumulative_excess(&[]), Err(EvalError::EmptySample));
    }
}
