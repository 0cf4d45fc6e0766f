//! Monte-Carlo policy components: simulate the building blocks in parallel,
//! weight them with the Γ/Υ functionals of the utility, solve the budget
//! multiplier, and assemble the five demand channels as ratio estimators
//! with standard errors.
//!
//! Estimates use antithetic pairs and the importance-sampling tilt described
//! in `blocks`; standard errors treat each antithetic pair average as one
//! sample.

use rayon::prelude::*;

use crate::malliavin::blocks::{advance_blocks, BlockState};
use crate::malliavin::field::{ThetaUSource, D};
use crate::model::DiffusionModel;
use crate::policy::PolicyComponents;
use crate::rng;
use crate::utility::{UtilitySpec, Which};
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_paths: 4096,
            dt: 1.0 / 1008.0,
            seed: 1,
        }
    }
}

/// Terminal functionals of one simulated path (terminal-wealth investors).
#[derive(Debug, Clone, Copy)]
pub struct PathFunctionals {
    pub xi: f64,
    pub lr: f64,
    pub hr: [f64; D],
    pub hh: [f64; D],
    pub hu_y: [f64; D],
    pub hu_lambda: [f64; D],
    pub htheta: [f64; D],
    pub int_r: f64,
}

/// The Γ/Υ weights of one path at a given multiplier, terminal block only
/// (consumption blocks are integrals over the path and are out of scope for
/// the terminal-wealth engine).
#[derive(Debug, Clone, Copy)]
pub struct GammaUpsilon {
    pub gamma_u: f64,
    pub upsilon_u: f64,
    /// 𝒬 contribution of this path.
    pub q: f64,
    /// 𝒢 contribution of this path.
    pub g: f64,
}

/// Γ = ξ·I(T, λξ) and Υ = λξ²·∂I/∂y(T, λξ) for a terminal-wealth investor.
pub fn gamma_upsilon(
    spec: &UtilitySpec,
    lambda: f64,
    xi: f64,
    t_end: f64,
) -> Result<GammaUpsilon> {
    if spec.w != 0.0 {
        return Err(Error::InvalidArgument(
            "Γ/Υ weights implemented for terminal-wealth investors (w = 0)".into(),
        ));
    }
    if !(lambda > 0.0) || !(xi > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need lambda > 0 and xi > 0, got {lambda}, {xi}"
        )));
    }
    let y = lambda * xi;
    let gamma_u = xi * spec.inverse_marginal(t_end, y, Which::Terminal)?;
    let upsilon_u = lambda * xi * xi * spec.inverse_marginal_derivative(t_end, y, Which::Terminal)?;
    Ok(GammaUpsilon {
        gamma_u,
        upsilon_u,
        q: upsilon_u,
        g: gamma_u,
    })
}

/// Simulate `mc.n_paths` paths (rounded up to antithetic pairs) of the block
/// system from (t, y_t) to t_end and return their terminal functionals.
///
/// `tilt_a` is the importance-sampling coefficient; pass
/// `crra_tilt(spec.gamma)` for production estimates or 0.0 for plain
/// sampling.  θᵘ sources used here must not depend on the multiplier (the
/// multiplier enters only through the Γ/Υ weights afterwards); the blocks
/// are advanced at a reference multiplier of 1.
pub fn simulate_functionals(
    model: &impl DiffusionModel,
    theta_src: &impl ThetaUSource,
    t: f64,
    y_t: f64,
    t_end: f64,
    mc: &McConfig,
    tilt_a: f64,
) -> Result<Vec<PathFunctionals>> {
    if !(t_end > t) {
        return Err(Error::InvalidArgument(format!(
            "horizon {t_end} must exceed start time {t}"
        )));
    }
    let n_steps = ((t_end - t) / mc.dt).round().max(1.0) as usize;
    let ds = (t_end - t) / n_steps as f64;
    let n_pairs = mc.n_paths.div_ceil(2);
    let d = model.n_drivers();

    let results: Vec<Result<[PathFunctionals; 2]>> = (0..n_pairs as u64)
        .into_par_iter()
        .map(|pair| {
            let mut rng = rng::path_rng(mc.seed, pair);
            let mut st_a = BlockState::init(model, theta_src, 1.0, t, y_t);
            let mut st_b = st_a;
            let mut dw = [0.0f64; D];
            let mut dw_neg = [0.0f64; D];
            for k in 0..n_steps {
                let s = t + k as f64 * ds;
                for i in 0..d {
                    dw[i] = rng.sample::<f64, _>(StandardNormal) * ds.sqrt();
                    dw_neg[i] = -dw[i];
                }
                let _ = s;
                advance_blocks(model, theta_src, 1.0, &mut st_a, ds, &dw[..d], tilt_a)?;
                advance_blocks(model, theta_src, 1.0, &mut st_b, ds, &dw_neg[..d], tilt_a)?;
            }
            Ok([functionals_of(&st_a), functionals_of(&st_b)])
        })
        .collect();

    let mut out = Vec::with_capacity(2 * n_pairs);
    for r in results {
        let [a, b] = r?;
        out.push(a);
        out.push(b);
    }
    Ok(out)
}

fn functionals_of(st: &BlockState) -> PathFunctionals {
    PathFunctionals {
        xi: st.xi(),
        lr: st.lr(),
        hr: st.hr,
        hh: st.hh,
        hu_y: st.hu_y,
        hu_lambda: st.hu_lambda,
        htheta: st.htheta(),
        int_r: st.int_r,
    }
}

/// The tilt that cancels the stochastic part of ξ^{1−1/γ} weights.
pub fn crra_tilt(gamma: f64) -> f64 {
    -(1.0 - 1.0 / gamma)
}

/// Sample estimate of the budget 𝒢(λ) = Ê[Γ^U·LR].
pub fn budget_estimate(
    sims: &[PathFunctionals],
    spec: &UtilitySpec,
    lambda: f64,
    t_end: f64,
) -> Result<f64> {
    let mut acc = 0.0;
    for f in sims {
        acc += gamma_upsilon(spec, lambda, f.xi, t_end)?.g * f.lr;
    }
    Ok(acc / sims.len() as f64)
}

/// Solve X_t = Ê[𝒢(λ)] for the multiplier by bisection on ln λ, reusing the
/// already-simulated paths (common random numbers across candidates).
pub fn solve_lambda(
    sims: &[PathFunctionals],
    spec: &UtilitySpec,
    x_t: f64,
    t_end: f64,
) -> Result<f64> {
    // the budget decreases from +∞ (λ→0) to the funded floor (λ→∞)
    let floor: f64 =
        spec.xbar * sims.iter().map(|f| f.xi * f.lr).sum::<f64>() / sims.len() as f64;
    if x_t <= floor {
        return Err(Error::WealthBelowFloor {
            wealth: x_t,
            floor,
        });
    }
    let mut lo = 0.0f64; // ln λ with budget above X
    let mut hi = 0.0f64;
    let b0 = budget_estimate(sims, spec, 1.0, t_end)?;
    if b0 > x_t {
        // budget too high: raise λ
        while budget_estimate(sims, spec, hi.exp(), t_end)? > x_t {
            lo = hi;
            hi += 5.0;
            if hi > 400.0 {
                return Err(Error::Bracketing("multiplier bisection failed to bracket the budget".into()));
            }
        }
    } else {
        while budget_estimate(sims, spec, lo.exp(), t_end)? <= x_t {
            hi = lo;
            lo -= 5.0;
            if lo < -400.0 {
                return Err(Error::Bracketing("multiplier bisection failed to bracket the budget".into()));
            }
        }
    }
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if budget_estimate(sims, spec, mid.exp(), t_end)? > x_t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Policy components with their Monte-Carlo standard errors.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McComponents {
    pub components: PolicyComponents,
    /// Standard error per channel, stored in the same shape (the `total`
    /// field holds the SE of the summed weight).
    pub se: PolicyComponents,
    pub lambda: f64,
    pub n_paths: usize,
}

/// Monte-Carlo estimate of the five-channel policy decomposition at
/// (t, y_t, X_t) for a terminal-wealth investor.
pub fn mc_policy_components(
    model: &impl DiffusionModel,
    theta_src: &impl ThetaUSource,
    spec: &UtilitySpec,
    t: f64,
    y_t: f64,
    x_t: f64,
    t_end: f64,
    mc: &McConfig,
) -> Result<McComponents> {
    spec.ensure_valid()?;
    let sims = simulate_functionals(model, theta_src, t, y_t, t_end, mc, crra_tilt(spec.gamma))?;
    let lambda = solve_lambda(&sims, spec, x_t, t_end)?;

    let d = model.n_drivers();
    let mut sigma = [0.0; D];
    model.sigma_row(t, y_t, &mut sigma[..d]);
    let s2: f64 = sigma.iter().map(|s| s * s).sum();
    if !(s2 > 0.0) {
        return Err(Error::InvalidArgument(
            "degenerate asset volatility at the evaluation point".into(),
        ));
    }
    let pinv: Vec<f64> = sigma.iter().map(|s| s / s2).collect();
    let mut th = [0.0; D];
    model.theta_h(t, y_t, &mut th[..d]);
    let mv_scale: f64 = pinv.iter().zip(th.iter()).map(|(p, t)| p * t).sum();

    // per-pair samples of each channel's weight contribution
    let n_pairs = sims.len() / 2;
    let mut samples: [Vec<f64>; 6] = Default::default();
    for v in samples.iter_mut() {
        v.reserve(n_pairs);
    }
    let proj = |h: &[f64; D]| -> f64 { pinv.iter().zip(h.iter()).map(|(p, x)| p * x).sum() };
    for pair in sims.chunks_exact(2) {
        let mut acc = [0.0f64; 6];
        for f in pair {
            let gu = gamma_upsilon(spec, lambda, f.xi, t_end)?;
            let wq = gu.q * f.lr;
            let wh = (gu.gamma_u + gu.upsilon_u) * f.lr;
            let mv = -mv_scale * wq / x_t;
            let r = -wh * proj(&f.hr) / x_t;
            let h = -wh * proj(&f.hh) / x_t;
            let uy = -wh * proj(&f.hu_y) / x_t;
            let ul = -wh * proj(&f.hu_lambda) / x_t;
            let contrib = [mv, r, h, uy, ul, mv + r + h + uy + ul];
            for (a, c) in acc.iter_mut().zip(contrib) {
                *a += 0.5 * c;
            }
        }
        for (v, a) in samples.iter_mut().zip(acc) {
            v.push(a);
        }
    }

    let stats: Vec<(f64, f64)> = samples
        .iter()
        .map(|v| crate::stats::mean_se(v))
        .collect();
    let components = PolicyComponents {
        mv: stats[0].0,
        r_hedge: stats[1].0,
        h_hedge: stats[2].0,
        uY_hedge: stats[3].0,
        uLambda_hedge: stats[4].0,
        total: stats[5].0,
    };
    let se = PolicyComponents {
        mv: stats[0].1,
        r_hedge: stats[1].1,
        h_hedge: stats[2].1,
        uY_hedge: stats[3].1,
        uLambda_hedge: stats[4].1,
        total: stats[5].1,
    };
    Ok(McComponents {
        components,
        se,
        lambda,
        n_paths: sims.len(),
    })
}
