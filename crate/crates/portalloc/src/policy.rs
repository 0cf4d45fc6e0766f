//! Closed-form optimal portfolio policies under the Heston model for power
//! utility, with and without a terminal subsistence floor, plus the explicit
//! unspanned price of risk and wealth evolution under the optimal policy.

use serde::{Deserialize, Serialize};

use crate::market::{HestonParams, MarketPath};
use crate::utility::UtilitySpec;
use crate::{Error, Result};

/// The risky-asset weight broken into its demand channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct PolicyComponents {
    /// Myopic mean-variance demand.
    pub mv: f64,
    /// Interest-rate hedging demand.
    pub r_hedge: f64,
    /// Hedge against moves in the traded price of risk.
    pub h_hedge: f64,
    /// Investor-specific hedge, state channel.
    pub uY_hedge: f64,
    /// Investor-specific hedge, wealth (multiplier) channel.
    pub uLambda_hedge: f64,
    /// Sum of the five components.
    pub total: f64,
}

impl PolicyComponents {
    pub fn from_parts(mv: f64, r_hedge: f64, h_hedge: f64, u_y: f64, u_lambda: f64) -> Self {
        PolicyComponents {
            mv,
            r_hedge,
            h_hedge,
            uY_hedge: u_y,
            uLambda_hedge: u_lambda,
            total: mv + r_hedge + h_hedge + u_y + u_lambda,
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        PolicyComponents::from_parts(
            c * self.mv,
            c * self.r_hedge,
            c * self.h_hedge,
            c * self.uY_hedge,
            c * self.uLambda_hedge,
        )
    }
}

/// Constants entering the horizon function φ of the Heston closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonPolicyConstants {
    pub kappa_tilde: f64,
    pub delta: f64,
    pub varsigma: f64,
}

impl HestonPolicyConstants {
    pub fn new(params: &HestonParams, gamma: f64) -> Result<Self> {
        if !(gamma > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "closed form requires gamma > 1, got {gamma}"
            )));
        }
        let l = params.lambda_mpr;
        let kappa_tilde = params.kappa - (1.0 - gamma) * l * params.rho_lev * params.sigma_v / gamma;
        let delta = -(1.0 - gamma) * l * l / (2.0 * gamma * gamma);
        let rho2 = params.rho_lev * params.rho_lev;
        let disc = kappa_tilde * kappa_tilde
            + 2.0 * delta * params.sigma_v * params.sigma_v * (rho2 + gamma * (1.0 - rho2));
        if !(disc > 0.0) {
            return Err(Error::InvalidParams(format!(
                "square-root argument for varsigma is not positive: {disc}"
            )));
        }
        Ok(HestonPolicyConstants {
            kappa_tilde,
            delta,
            varsigma: disc.sqrt(),
        })
    }
}

/// Horizon function φ(τ), written with e^{−ςτ} so it cannot overflow for
/// long horizons; φ(0) = 0 and φ(∞) = 2/(κ̃+ς).
pub fn phi(tau: f64, consts: &HestonPolicyConstants) -> f64 {
    debug_assert!(tau >= 0.0);
    let e = (-consts.varsigma * tau).exp();
    let one_me = 1.0 - e;
    2.0 * one_me / ((consts.kappa_tilde + consts.varsigma) * one_me + 2.0 * consts.varsigma * e)
}

/// Optimal weight for the floorless power investor: wealth-independent,
/// mv = λ/γ plus the variance hedge −ρσδφ(T−t).  The hedge lives entirely in
/// the traded-price-of-risk channel: under this model the state channel of
/// the investor-specific hedge integrates to zero exactly, and the rate and
/// multiplier channels vanish because r is constant and the policy is
/// wealth-independent.
pub fn crra_policy(
    t: f64,
    t_end: f64,
    params: &HestonParams,
    gamma: f64,
) -> Result<PolicyComponents> {
    if t > t_end {
        return Err(Error::InvalidArgument(format!(
            "t = {t} is past the horizon {t_end}"
        )));
    }
    let consts = HestonPolicyConstants::new(params, gamma)?;
    let mv = params.lambda_mpr / gamma;
    let h = -params.rho_lev * params.sigma_v * consts.delta * phi(t_end - t, &consts);
    Ok(PolicyComponents::from_parts(mv, 0.0, h, 0.0, 0.0))
}

/// Zero-coupon price exp(−r(s−t)) under a constant rate.
pub fn bond_price(r: f64, t: f64, s: f64) -> Result<f64> {
    if s < t {
        return Err(Error::InvalidArgument(format!(
            "bond maturity {s} before valuation time {t}"
        )));
    }
    Ok((-r * (s - t)).exp())
}

/// Zero-coupon price under a deterministic rate curve, discounting with a
/// trapezoidal ∫r over `n` subintervals.
pub fn bond_price_curve(rate: impl Fn(f64) -> f64, t: f64, s: f64, n: usize) -> Result<f64> {
    if s < t {
        return Err(Error::InvalidArgument(format!(
            "bond maturity {s} before valuation time {t}"
        )));
    }
    if s == t {
        return Ok(1.0);
    }
    let n = n.max(1);
    let h = (s - t) / n as f64;
    let mut integral = 0.5 * (rate(t) + rate(s));
    for k in 1..n {
        integral += rate(t + k as f64 * h);
    }
    Ok((-integral * h).exp())
}

/// Wealth in excess of the funded floors:
/// X̄ = X − x̄·B_{t,T} − c̄·∫_t^T B_{t,s} ds (consumption term only if w>0).
/// May be ≤ 0; the caller decides what a breach means.
pub fn remaining_wealth(x: f64, spec: &UtilitySpec, r: f64, t: f64, t_end: f64) -> f64 {
    let tau = t_end - t;
    let mut floor = spec.xbar * (-r * tau).exp();
    if spec.w > 0.0 && spec.cbar > 0.0 {
        let annuity = if r.abs() < 1e-14 {
            tau
        } else {
            (1.0 - (-r * tau).exp()) / r
        };
        floor += spec.cbar * annuity;
    }
    x - floor
}

/// Optimal weight for the floored terminal-wealth investor: every component
/// of the floorless policy scaled by X̄/X.
pub fn hara_policy(
    t: f64,
    x: f64,
    t_end: f64,
    params: &HestonParams,
    spec: &UtilitySpec,
) -> Result<PolicyComponents> {
    if spec.w != 0.0 {
        return Err(Error::InvalidArgument(
            "closed-form floored policy requires a terminal-wealth-only investor (w = 0)".into(),
        ));
    }
    let xbar = remaining_wealth(x, spec, params.r, t, t_end);
    if !(xbar > 0.0) {
        return Err(Error::WealthBelowFloor {
            wealth: x,
            floor: x - xbar,
        });
    }
    Ok(crra_policy(t, t_end, params, spec.gamma)?.scale(xbar / x))
}

/// Explicit unspanned price of risk (0, γ√(1−ρ²)σδφ(T−t)√V); orthogonal to
/// the asset volatility row (√V, 0) by construction and zero at the horizon.
pub fn theta_u_closed_form(
    t: f64,
    v: f64,
    t_end: f64,
    params: &HestonParams,
    gamma: f64,
) -> Result<[f64; 2]> {
    if v < 0.0 {
        return Err(Error::InvalidArgument(format!("V must be >= 0, got {v}")));
    }
    let consts = HestonPolicyConstants::new(params, gamma)?;
    let rho2 = params.rho_lev * params.rho_lev;
    let second = gamma
        * (1.0 - rho2).sqrt()
        * params.sigma_v
        * consts.delta
        * phi(t_end - t, &consts)
        * v.sqrt();
    Ok([0.0, second])
}

/// Wealth path under the optimal floored policy, with the per-step weight and
/// excess-wealth ratio recorded for export.
#[derive(Debug, Clone)]
pub struct WealthPath {
    pub dt: f64,
    pub x: Vec<f64>,
    /// Risky weight π applied over [t_n, t_{n+1}).
    pub weight: Vec<f64>,
    /// X̄/X at each step.
    pub xbar_ratio: Vec<f64>,
    /// First step at which discretized wealth fell to or below the funded
    /// floor, if any.  After a breach the policy is held at zero.
    pub breach_step: Option<usize>,
}

impl WealthPath {
    pub fn breached(&self) -> bool {
        self.breach_step.is_some()
    }
}

/// Euler evolution of wealth along a simulated market path:
/// dX = rX ds + X̄ π_C(s) (λV ds + √V dW₁), with the policy re-evaluated each
/// step.  On a floor breach, X̄ is clamped at zero (weight 0 from then on)
/// and the path is flagged.
pub fn evolve_wealth(
    path: &MarketPath,
    params: &HestonParams,
    spec: &UtilitySpec,
    x0: f64,
    t_end: f64,
) -> Result<WealthPath> {
    if spec.w != 0.0 {
        return Err(Error::InvalidArgument(
            "wealth evolution implemented for terminal-wealth investors (w = 0)".into(),
        ));
    }
    let consts = HestonPolicyConstants::new(params, spec.gamma)?;
    let pi_c = |tau: f64| {
        params.lambda_mpr / spec.gamma
            - params.rho_lev * params.sigma_v * consts.delta * phi(tau, &consts)
    };
    let n = path.n_steps();
    let dt = path.dt;
    if remaining_wealth(x0, spec, params.r, 0.0, t_end) <= 0.0 {
        return Err(Error::WealthBelowFloor {
            wealth: x0,
            floor: spec.xbar * (-params.r * t_end).exp(),
        });
    }

    let mut x = Vec::with_capacity(n + 1);
    let mut weight = Vec::with_capacity(n + 1);
    let mut xbar_ratio = Vec::with_capacity(n + 1);
    let mut breach_step = None;
    let mut xn = x0;
    for k in 0..=n {
        let t = path.times[k];
        let mut xbar = remaining_wealth(xn, spec, params.r, t, t_end);
        if xbar <= 0.0 {
            if breach_step.is_none() && xbar < 0.0 {
                breach_step = Some(k);
            }
            xbar = 0.0;
        }
        let risky = if breach_step.is_some() { 0.0 } else { xbar * pi_c(t_end - t) };
        x.push(xn);
        weight.push(if xn > 0.0 { risky / xn } else { 0.0 });
        xbar_ratio.push(if xn > 0.0 { xbar / xn } else { 0.0 });
        if k < n {
            let vp = path.v[k].max(0.0);
            xn = xn
                + params.r * xn * dt
                + risky * (params.lambda_mpr * vp * dt + vp.sqrt() * path.dw1[k]);
            if !xn.is_finite() {
                return Err(Error::NonFinite(format!("wealth at step {}", k + 1)));
            }
        }
    }
    Ok(WealthPath {
        dt,
        x,
        weight,
        xbar_ratio,
        breach_step,
    })
}
