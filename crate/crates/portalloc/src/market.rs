//! Square-root stochastic-volatility market model and path simulation.

use serde::{Deserialize, Serialize};

use crate::rng::{normal_increments, path_rng};
use crate::{Error, Result};

/// Coefficients of the stochastic-volatility market:
/// dS/S = (r + lambda V) dt + sqrt(V) dW1,
/// dV = kappa (theta_bar - V) dt + sigma_v sqrt(V) (rho dW1 + sqrt(1-rho^2) dW2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonParams {
    /// Mean-reversion rate of the variance (1/year).
    pub kappa: f64,
    /// Long-run variance level (1/year).
    pub theta_bar: f64,
    /// Volatility of variance.
    pub sigma_v: f64,
    /// Slope of the market price of risk in V (risk premium = lambda * V).
    pub lambda_mpr: f64,
    /// Correlation between price and variance shocks (leverage effect).
    pub rho_lev: f64,
    /// Risk-free rate (1/year).
    pub r: f64,
}

impl HestonParams {
    /// Calibrated S&P 500 ETF parameters used throughout the experiments.
    pub fn preset_paper() -> Self {
        HestonParams {
            kappa: 12.5850,
            theta_bar: 0.0193,
            sigma_v: 0.5385,
            lambda_mpr: 6.6992,
            rho_lev: -0.8141,
            r: 0.0051,
        }
    }

    /// 2*kappa*theta_bar - sigma_v^2; positive iff the variance process
    /// stays strictly positive in the continuous model.
    pub fn feller_margin(&self) -> f64 {
        2.0 * self.kappa * self.theta_bar - self.sigma_v * self.sigma_v
    }

    /// Returns every violated invariant; empty means the parameters are valid.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.kappa > 0.0) {
            v.push(format!("kappa must be > 0, got {}", self.kappa));
        }
        if !(self.theta_bar > 0.0) {
            v.push(format!("theta_bar must be > 0, got {}", self.theta_bar));
        }
        if !(self.sigma_v > 0.0) {
            v.push(format!("sigma_v must be > 0, got {}", self.sigma_v));
        }
        if !(self.rho_lev.abs() <= 1.0) {
            v.push(format!("|rho_lev| must be <= 1, got {}", self.rho_lev));
        }
        if self.kappa > 0.0 && self.theta_bar > 0.0 && self.sigma_v > 0.0 {
            let m = self.feller_margin();
            if !(m > 0.0) {
                v.push(format!(
                    "Feller condition violated: 2*kappa*theta_bar = {} <= sigma_v^2 = {}",
                    2.0 * self.kappa * self.theta_bar,
                    self.sigma_v * self.sigma_v
                ));
            }
        }
        for (name, x) in [
            ("kappa", self.kappa),
            ("theta_bar", self.theta_bar),
            ("sigma_v", self.sigma_v),
            ("lambda_mpr", self.lambda_mpr),
            ("rho_lev", self.rho_lev),
            ("r", self.r),
        ] {
            if !x.is_finite() {
                v.push(format!("{name} must be finite, got {x}"));
            }
        }
        v
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(v.join("; ")))
        }
    }
}

/// A simulated market path on a uniform grid, together with the Brownian
/// increments that produced it. The path is a pure function of
/// (params, S0, V0, increments).
#[derive(Debug, Clone)]
pub struct MarketPath {
    pub dt: f64,
    pub times: Vec<f64>,
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    pub dw1: Vec<f64>,
    pub dw2: Vec<f64>,
}

impl MarketPath {
    pub fn n_steps(&self) -> usize {
        self.dw1.len()
    }
}

/// Number of steps in a horizon of `t_total` years; `t_total` must be a
/// positive near-integer multiple of `dt`.
pub fn step_count(t_total: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(t_total > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need T > 0 and dt > 0, got T={t_total}, dt={dt}"
        )));
    }
    let n = t_total / dt;
    let rounded = n.round();
    if (n - rounded).abs() > 1e-6 * n.max(1.0) || rounded < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "T = {t_total} is not a positive multiple of dt = {dt}"
        )));
    }
    Ok(rounded as usize)
}

/// Build a path from externally supplied Brownian increments.
///
/// Variance uses a full-truncation Euler step: negative excursions are kept
/// in the recursion but clipped to zero in every coefficient, and the stored
/// series is the clipped one. The price is stepped exactly in log space, so
/// S stays positive.
pub fn path_from_increments(
    params: &HestonParams,
    s0: f64,
    v0: f64,
    dt: f64,
    dw1: &[f64],
    dw2: &[f64],
) -> Result<MarketPath> {
    params.ensure_valid()?;
    if !(s0 > 0.0) {
        return Err(Error::InvalidArgument(format!("S0 must be > 0, got {s0}")));
    }
    if !(v0 >= 0.0) {
        return Err(Error::InvalidArgument(format!("V0 must be >= 0, got {v0}")));
    }
    if dw1.len() != dw2.len() {
        return Err(Error::InvalidArgument(format!(
            "increment length mismatch: {} vs {}",
            dw1.len(),
            dw2.len()
        )));
    }
    let n = dw1.len();
    let rho = params.rho_lev;
    let rho_c = (1.0 - rho * rho).sqrt();
    let mut times = Vec::with_capacity(n + 1);
    let mut s = Vec::with_capacity(n + 1);
    let mut v = Vec::with_capacity(n + 1);
    let mut ln_s = s0.ln();
    // v_raw may dip below zero; v stores the truncated value actually used.
    let mut v_raw = v0;
    times.push(0.0);
    s.push(s0);
    v.push(v0.max(0.0));
    for i in 0..n {
        let vp = v_raw.max(0.0);
        let sq = vp.sqrt();
        ln_s += (params.r + params.lambda_mpr * vp - 0.5 * vp) * dt + sq * dw1[i];
        v_raw += params.kappa * (params.theta_bar - vp) * dt
            + params.sigma_v * sq * (rho * dw1[i] + rho_c * dw2[i]);
        times.push((i + 1) as f64 * dt);
        s.push(ln_s.exp());
        v.push(v_raw.max(0.0));
    }
    Ok(MarketPath {
        dt,
        times,
        s,
        v,
        dw1: dw1.to_vec(),
        dw2: dw2.to_vec(),
    })
}

/// Simulate one market path. Identical arguments give a bit-identical path.
pub fn simulate_heston_path(
    params: &HestonParams,
    s0: f64,
    v0: f64,
    t_total: f64,
    dt: f64,
    seed: u64,
    path_index: u64,
) -> Result<MarketPath> {
    let (dw1, dw2) = draw_increments(t_total, dt, seed, path_index)?;
    path_from_increments(params, s0, v0, dt, &dw1, &dw2)
}

/// Draw the two increment series path `path_index` would see.
pub fn draw_increments(
    t_total: f64,
    dt: f64,
    seed: u64,
    path_index: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = step_count(t_total, dt)?;
    let mut rng = path_rng(seed, path_index);
    // the two drivers interleave off one stream: step k draws (dW1_k, dW2_k)
    let flat = normal_increments(&mut rng, 2 * n, dt);
    let dw1 = flat.iter().step_by(2).copied().collect();
    let dw2 = flat.iter().skip(1).step_by(2).copied().collect();
    Ok((dw1, dw2))
}

/// Trailing mean of spot variance over `window` steps; entry `k` covers the
/// grid points `k-window+1..=k`, defined from index `window-1` onward.
pub fn realized_variance(path: &MarketPath, window: usize) -> Result<Vec<f64>> {
    if window < 1 {
        return Err(Error::InvalidArgument("window must be >= 1".into()));
    }
    if path.v.len() < window {
        return Err(Error::InvalidArgument(format!(
            "window {} exceeds path length {}",
            window,
            path.v.len()
        )));
    }
    let mut out = Vec::with_capacity(path.v.len() - window + 1);
    let mut acc: f64 = path.v[..window].iter().sum();
    out.push(acc / window as f64);
    for k in window..path.v.len() {
        acc += path.v[k] - path.v[k - window];
        out.push(acc / window as f64);
    }
    Ok(out)
}

/// Per-year log returns ln(S_end / S_start); the path must span an integer
/// number of years of `steps_per_year` steps.
pub fn annual_log_returns(path: &MarketPath, steps_per_year: usize) -> Result<Vec<f64>> {
    let n = path.n_steps();
    if steps_per_year == 0 || n % steps_per_year != 0 {
        return Err(Error::InvalidArgument(format!(
            "path of {n} steps is not an integer number of {steps_per_year}-step years"
        )));
    }
    let years = n / steps_per_year;
    Ok((0..years)
        .map(|k| (path.s[(k + 1) * steps_per_year] / path.s[k * steps_per_year]).ln())
        .collect())
}
