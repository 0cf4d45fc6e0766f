//! Joint Euler stepping of the building-block processes behind the
//! Monte-Carlo policy representation: the state factor Y, the relative state
//! price density ξ, the Malliavin derivative 𝒟_t Y (as propagator × initial
//! loading), and the accumulated sensitivity vectors H^r, H^h, H^{u,Y},
//! H^{u,λ}; H^θ = H^h + H^{u,Y} + H^{u,λ} by definition.
//!
//! Importance sampling: paths may be generated under a tilted measure where
//! the physical Brownian increment is dW = dŴ + a·θ^S ds with dŴ the
//! simulated one.  The state carries ln of the likelihood ratio
//! dP/dQ = exp(−a∫θ^S·dŴ − a²/2 ∫|θ^S|² ds); every expectation estimate
//! multiplies by it.  With a = −(1−1/γ) the stochastic part of the CRRA
//! weight ξ^{1−1/γ}·(dP/dQ) cancels, which is where the variance reduction
//! comes from.  a = 0 recovers plain sampling.

use crate::malliavin::field::{ThetaUSource, D};
use crate::model::DiffusionModel;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct BlockState {
    pub s: f64,
    pub y: f64,
    /// Scalar Malliavin propagator Φ_s (𝒟_{it}Y_s = Φ_s · β_i(t, Y_t)).
    pub phi: f64,
    /// β_i(t, Y_t): the initial Malliavin loading per driver.
    pub beta0: [f64; D],
    /// θ^S(t, Y_t), frozen at the start (enters the H^{u,λ} drift).
    pub theta_s0: [f64; D],
    pub ln_xi: f64,
    /// ln dP/dQ of the sampling tilt.
    pub ln_lr: f64,
    /// ∫ r ds and ∫ |θ^S|² ds along the path (diagnostics, weights).
    pub int_r: f64,
    pub int_theta2: f64,
    pub hr: [f64; D],
    pub hh: [f64; D],
    pub hu_y: [f64; D],
    pub hu_lambda: [f64; D],
}

impl BlockState {
    pub fn init(
        model: &impl DiffusionModel,
        theta_src: &impl ThetaUSource,
        lambda: f64,
        t: f64,
        y_t: f64,
    ) -> Self {
        let d = model.n_drivers();
        assert!(d <= D, "engine supports at most {D} drivers");
        let mut beta0 = [0.0; D];
        model.diffusion(t, y_t, &mut beta0[..d]);
        let mut th = [0.0; D];
        model.theta_h(t, y_t, &mut th[..d]);
        let mut tu = [0.0; D];
        theta_src.theta_u(t, y_t, lambda, &mut tu);
        let mut theta_s0 = [0.0; D];
        for i in 0..D {
            theta_s0[i] = th[i] + tu[i];
        }
        BlockState {
            s: t,
            y: y_t,
            phi: 1.0,
            beta0,
            theta_s0,
            ln_xi: 0.0,
            ln_lr: 0.0,
            int_r: 0.0,
            int_theta2: 0.0,
            hr: [0.0; D],
            hh: [0.0; D],
            hu_y: [0.0; D],
            hu_lambda: [0.0; D],
        }
    }

    pub fn xi(&self) -> f64 {
        self.ln_xi.exp()
    }

    pub fn lr(&self) -> f64 {
        self.ln_lr.exp()
    }

    pub fn htheta(&self) -> [f64; D] {
        let mut out = [0.0; D];
        for i in 0..D {
            out[i] = self.hh[i] + self.hu_y[i] + self.hu_lambda[i];
        }
        out
    }

    pub fn hu(&self) -> [f64; D] {
        let mut out = [0.0; D];
        for i in 0..D {
            out[i] = self.hu_y[i] + self.hu_lambda[i];
        }
        out
    }

    /// Malliavin derivative 𝒟_{it}Y_s for driver i.
    pub fn dy(&self, i: usize) -> f64 {
        self.phi * self.beta0[i]
    }
}

/// One Euler step of the coupled system.  `dwq` are the increments actually
/// drawn (under the sampling measure); `tilt_a` is the importance-sampling
/// coefficient described in the module docs.
pub fn advance_blocks(
    model: &impl DiffusionModel,
    theta_src: &impl ThetaUSource,
    lambda: f64,
    state: &mut BlockState,
    ds: f64,
    dwq: &[f64],
    tilt_a: f64,
) -> Result<()> {
    let d = model.n_drivers();
    debug_assert!(ds > 0.0 && dwq.len() >= d);
    let (s, y) = (state.s, state.y);

    let mut th = [0.0; D];
    model.theta_h(s, y, &mut th[..d]);
    let mut tu = [0.0; D];
    theta_src.theta_u(s, y, lambda, &mut tu);
    let mut theta_s = [0.0; D];
    for i in 0..D {
        theta_s[i] = th[i] + tu[i];
    }

    // physical increments under the tilt
    let mut dwp = [0.0; D];
    let mut theta2 = 0.0;
    let mut sto = 0.0; // θ^S · dŴ
    for i in 0..d {
        dwp[i] = dwq[i] + tilt_a * theta_s[i] * ds;
        theta2 += theta_s[i] * theta_s[i];
        sto += theta_s[i] * dwq[i];
    }

    let r = model.rate(s, y);
    let r_dy = model.rate_dy(s, y);
    let mut th_dy = [0.0; D];
    model.theta_h_dy(s, y, &mut th_dy[..d]);
    let mut tu_dy = [0.0; D];
    theta_src.theta_u_dy(s, y, lambda, &mut tu_dy);
    let mut tu_dl = [0.0; D];
    theta_src.theta_u_dlambda(s, y, lambda, &mut tu_dl);

    // brackets shared by every driver's H update
    let mut bracket_h = 0.0;
    let mut bracket_u = 0.0;
    let mut bracket_l = 0.0;
    for j in 0..d {
        bracket_h += th_dy[j] * (th[j] * ds + dwp[j]);
        bracket_u += tu_dy[j] * (tu[j] * ds + dwp[j]);
        bracket_l += tu_dl[j] * (tu[j] * ds + dwp[j]);
    }

    let xi = state.xi();
    let htheta = state.htheta();
    for i in 0..d {
        let dyi = state.dy(i);
        let hr_prev = state.hr[i];
        state.hr[i] += dyi * r_dy * ds;
        state.hh[i] += dyi * bracket_h;
        state.hu_y[i] += dyi * bracket_u;
        state.hu_lambda[i] +=
            -lambda * xi * (state.theta_s0[i] + hr_prev + htheta[i]) * bracket_l;
    }

    // ξ in log space (positivity), likelihood ratio, integrals
    let mut sto_p = 0.0; // θ^S · dW (physical)
    for i in 0..d {
        sto_p += theta_s[i] * dwp[i];
    }
    state.ln_xi += -(r + 0.5 * theta2) * ds - sto_p;
    state.ln_lr += -tilt_a * sto - 0.5 * tilt_a * tilt_a * theta2 * ds;
    state.int_r += r * ds;
    state.int_theta2 += theta2 * ds;

    // propagator before the state so both see the step-start state
    state.phi = model.step_propagator(s, y, state.phi, ds, &dwp[..d]);
    state.y = model.step_state(s, y, ds, &dwp[..d]);
    state.s += ds;

    if !(state.y.is_finite() && state.ln_xi.is_finite() && state.phi.is_finite()) {
        return Err(Error::NonFinite(format!("block state at s = {}", state.s)));
    }
    Ok(())
}
