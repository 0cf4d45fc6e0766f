//! Per-path performance statistics and bull/bear regime classification.
//!
//! Conventions (daily grid of step Δ, constant short rate r):
//! - `mean`: annualized arithmetic excess return, average of (X_i/X_{i−1} − 1)/Δ − r
//! - `mean_log`: annualized log excess return, average of ln(X_i/X_{i−1})/Δ − r
//! - `sd`: annualized volatility of log returns (sample sd, N−1)
//! - `sharpe`: mean_log / sd, so sharpe·sd = mean_log exactly
//! - `max_drawdown`: peak-to-current drawdown max_n (1 − X_n/M_n^max)
//!
//! `drawdown_running_extrema` implements the alternative definition
//! max_n (1 − M_n^min/M_n^max) with both extrema run from inception; it
//! reduces to 1 − (global min)/(global max) and is kept for comparison.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceStats {
    pub mean: f64,
    pub mean_log: f64,
    pub sd: f64,
    /// Absent when sd = 0 (deterministic path).
    pub sharpe: Option<f64>,
    pub max_drawdown: f64,
    pub n_days: usize,
}

pub fn performance_stats(wealth: &[f64], dt: f64, r: f64) -> Result<PerformanceStats> {
    if wealth.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two wealth observations".into(),
        ));
    }
    if wealth.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidArgument("wealth must stay positive".into()));
    }
    let n = wealth.len() - 1;
    let mut log_returns = Vec::with_capacity(n);
    let mut sum_arith = 0.0;
    let mut peak = wealth[0];
    let mut mdd: f64 = 0.0;
    for i in 1..=n {
        let gross = wealth[i] / wealth[i - 1];
        sum_arith += gross - 1.0;
        log_returns.push(gross.ln());
        peak = peak.max(wealth[i]);
        mdd = mdd.max(1.0 - wealth[i] / peak);
    }
    let nf = n as f64;
    let mean = sum_arith / nf / dt - r;
    let lr_mean = log_returns.iter().sum::<f64>() / nf;
    let mean_log = lr_mean / dt - r;
    // two-pass variance: the textbook one-pass form cancels catastrophically
    // on near-deterministic paths
    let var = if n > 1 {
        log_returns
            .iter()
            .map(|x| (x - lr_mean) * (x - lr_mean))
            .sum::<f64>()
            / (nf - 1.0)
    } else {
        0.0
    };
    let sd = var.sqrt() / dt.sqrt();
    // sd at rounding-noise level means the path is deterministic; treat the
    // Sharpe ratio as undefined rather than dividing by dust.
    let sharpe = if sd > 1e-12 { Some(mean_log / sd) } else { None };
    Ok(PerformanceStats {
        mean,
        mean_log,
        sd,
        sharpe,
        max_drawdown: mdd,
        n_days: n,
    })
}

/// Drawdown with both extrema run from inception:
/// max_n (1 − M_n^min / M_n^max) = 1 − (global min)/(global max).
pub fn drawdown_running_extrema(wealth: &[f64]) -> Result<f64> {
    if wealth.is_empty() || wealth.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidArgument(
            "wealth must be nonempty and positive".into(),
        ));
    }
    let mut lo = wealth[0];
    let mut hi = wealth[0];
    let mut md: f64 = 0.0;
    for &x in wealth {
        lo = lo.min(x);
        hi = hi.max(x);
        md = md.max(1.0 - lo / hi);
    }
    Ok(md)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Bull,
    Bear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeSegment {
    pub start: usize,
    /// Inclusive end step.
    pub end: usize,
    pub label: Regime,
}

/// Bull/bear state machine over a price series.  Starting in a bull market,
/// a −15% drop from the running high within the current regime flips to
/// bear; a +20% rise from the running low flips back.  The transition is
/// marked at the step where the threshold is crossed.
pub fn classify_regimes(prices: &[f64]) -> Result<Vec<RegimeSegment>> {
    if prices.is_empty() || prices.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidArgument(
            "prices must be nonempty and positive".into(),
        ));
    }
    let mut segments = Vec::new();
    let mut label = Regime::Bull;
    let mut start = 0usize;
    let mut extremum = prices[0]; // running high in bull, running low in bear
    for (k, &s) in prices.iter().enumerate().skip(1) {
        match label {
            Regime::Bull => {
                extremum = extremum.max(s);
                if s <= 0.85 * extremum {
                    segments.push(RegimeSegment {
                        start,
                        end: k,
                        label,
                    });
                    label = Regime::Bear;
                    start = k;
                    extremum = s;
                }
            }
            Regime::Bear => {
                extremum = extremum.min(s);
                if s >= 1.20 * extremum {
                    segments.push(RegimeSegment {
                        start,
                        end: k,
                        label,
                    });
                    label = Regime::Bull;
                    start = k;
                    extremum = s;
                }
            }
        }
    }
    segments.push(RegimeSegment {
        start,
        end: prices.len() - 1,
        label,
    });
    Ok(segments)
}

/// Pearson correlation; `None` when either series is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    let mut sab = 0.0;
    for (x, y) in a.iter().zip(b) {
        let da = x - ma;
        let db = y - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let nf = n as f64;
    let m = xs.iter().sum::<f64>() / nf;
    if n == 1 {
        return (m, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (nf - 1.0);
    (m, (var / nf).sqrt())
}
