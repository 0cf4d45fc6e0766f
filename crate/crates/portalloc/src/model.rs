//! Generic single-asset diffusion models driving the Monte-Carlo engine.
//!
//! The engine in `malliavin` is written against a trait describing a market
//! with one traded risky asset, `n_drivers` Brownian motions, and a scalar
//! state factor `y` that moves the coefficients (variance for Heston).  All
//! coefficient callbacks are allocation-free: vector-valued quantities are
//! written into caller-provided slices of length `n_drivers`.

use crate::market::HestonParams;

/// Floor applied to the variance factor inside coefficient evaluations
/// (1/√V terms); keeps gradients finite when the discretized factor
/// touches zero.
pub const V_EPS: f64 = 1e-4;

pub trait DiffusionModel: Sync {
    /// Number of Brownian drivers d (the traded asset count is fixed at 1,
    /// so d > 1 means an incomplete market).
    fn n_drivers(&self) -> usize;

    /// Initial value of the state factor.
    fn y0(&self) -> f64;

    /// State drift α(s, y).
    fn drift(&self, s: f64, y: f64) -> f64;

    /// ∂α/∂y.
    fn drift_dy(&self, s: f64, y: f64) -> f64;

    /// State diffusion loadings β_i(s, y), one per driver.
    fn diffusion(&self, s: f64, y: f64, out: &mut [f64]);

    /// ∂β_i/∂y.
    fn diffusion_dy(&self, s: f64, y: f64, out: &mut [f64]);

    /// Short rate r(s, y).
    fn rate(&self, s: f64, y: f64) -> f64;

    /// ∂r/∂y.
    fn rate_dy(&self, s: f64, y: f64) -> f64;

    /// Traded-asset price of risk θ^h(s, y) (zero-padded onto unspanned
    /// drivers).
    fn theta_h(&self, s: f64, y: f64, out: &mut [f64]);

    /// ∂θ^h_i/∂y.
    fn theta_h_dy(&self, s: f64, y: f64, out: &mut [f64]);

    /// Volatility row σ(s, y) of the traded asset.
    fn sigma_row(&self, s: f64, y: f64, out: &mut [f64]);

    /// One step of the state factor.  The default is plain Euler; models
    /// override it when a positivity-preserving scheme is required.
    fn step_state(&self, s: f64, y: f64, ds: f64, dw: &[f64]) -> f64 {
        let mut beta = [0.0f64; MAX_DRIVERS];
        let beta = &mut beta[..self.n_drivers()];
        self.diffusion(s, y, beta);
        let noise: f64 = beta.iter().zip(dw).map(|(b, w)| b * w).sum();
        y + self.drift(s, y) * ds + noise
    }

    /// One step of the scalar first-variation (Malliavin propagator) process
    /// Φ, dΦ = (∂α/∂y) Φ ds + Σ_i (∂β_i/∂y) Φ dW_i, Φ start 1.  The pathwise
    /// derivative of the state w.r.t. a shock at time t is Φ_s · β_i(t, y_t).
    /// Default is Euler; override for multiplicative-noise models where the
    /// log-space step is stable.
    fn step_propagator(&self, s: f64, y: f64, phi: f64, ds: f64, dw: &[f64]) -> f64 {
        let mut bdy = [0.0f64; MAX_DRIVERS];
        let bdy = &mut bdy[..self.n_drivers()];
        self.diffusion_dy(s, y, bdy);
        let noise: f64 = bdy.iter().zip(dw).map(|(b, w)| b * w).sum();
        phi * (1.0 + self.drift_dy(s, y) * ds + noise)
    }
}

/// Upper bound on driver counts for stack-allocated scratch in default
/// trait methods.
pub const MAX_DRIVERS: usize = 4;

/// Heston stochastic volatility: the state factor is the variance V.
///   dS/S = (r + λV) ds + √V dW₁
///   dV   = κ(θ̄ − V) ds + σ√V (ρ dW₁ + √(1−ρ²) dW₂)
#[derive(Debug, Clone, Copy)]
pub struct HestonModel {
    pub params: HestonParams,
    pub v0: f64,
}

impl HestonModel {
    pub fn new(params: HestonParams, v0: f64) -> Self {
        HestonModel { params, v0 }
    }

    #[inline]
    fn ve(&self, y: f64) -> f64 {
        y.max(V_EPS)
    }
}

impl DiffusionModel for HestonModel {
    fn n_drivers(&self) -> usize {
        2
    }

    fn y0(&self) -> f64 {
        self.v0
    }

    fn drift(&self, _s: f64, y: f64) -> f64 {
        self.params.kappa * (self.params.theta_bar - y)
    }

    fn drift_dy(&self, _s: f64, _y: f64) -> f64 {
        -self.params.kappa
    }

    fn diffusion(&self, _s: f64, y: f64, out: &mut [f64]) {
        let sv = self.params.sigma_v * y.max(0.0).sqrt();
        out[0] = sv * self.params.rho_lev;
        out[1] = sv * (1.0 - self.params.rho_lev * self.params.rho_lev).sqrt();
    }

    fn diffusion_dy(&self, _s: f64, y: f64, out: &mut [f64]) {
        let g = self.params.sigma_v / (2.0 * self.ve(y).sqrt());
        out[0] = g * self.params.rho_lev;
        out[1] = g * (1.0 - self.params.rho_lev * self.params.rho_lev).sqrt();
    }

    fn rate(&self, _s: f64, _y: f64) -> f64 {
        self.params.r
    }

    fn rate_dy(&self, _s: f64, _y: f64) -> f64 {
        0.0
    }

    fn theta_h(&self, _s: f64, y: f64, out: &mut [f64]) {
        out[0] = self.params.lambda_mpr * y.max(0.0).sqrt();
        out[1] = 0.0;
    }

    fn theta_h_dy(&self, _s: f64, y: f64, out: &mut [f64]) {
        out[0] = self.params.lambda_mpr / (2.0 * self.ve(y).sqrt());
        out[1] = 0.0;
    }

    fn sigma_row(&self, _s: f64, y: f64, out: &mut [f64]) {
        out[0] = y.max(0.0).sqrt();
        out[1] = 0.0;
    }

    /// Full-truncation Euler: the raw (possibly negative) state feeds the
    /// mean-reverting drift, the positive part feeds the diffusion.
    fn step_state(&self, _s: f64, y: f64, ds: f64, dw: &[f64]) -> f64 {
        let vp = y.max(0.0);
        let dwv = self.params.rho_lev * dw[0]
            + (1.0 - self.params.rho_lev * self.params.rho_lev).sqrt() * dw[1];
        y + self.params.kappa * (self.params.theta_bar - y) * ds
            + self.params.sigma_v * vp.sqrt() * dwv
    }

    /// Log-space step: d ln Φ = (−κ − σ²/(8V)) ds + σ/(2√V) dW̃.  The −σ²/8V
    /// Itô correction damps the propagator exactly when V is small, which is
    /// where the Euler default blows up.
    fn step_propagator(&self, _s: f64, y: f64, phi: f64, ds: f64, dw: &[f64]) -> f64 {
        let ve = self.ve(y);
        let dwv = self.params.rho_lev * dw[0]
            + (1.0 - self.params.rho_lev * self.params.rho_lev).sqrt() * dw[1];
        let sig = self.params.sigma_v;
        phi * ((-self.params.kappa - sig * sig / (8.0 * ve)) * ds
            + sig / (2.0 * ve.sqrt()) * dwv)
            .exp()
    }
}

/// Constant-coefficient complete market with a single driver; the state
/// factor is inert.  Used as the trivial cross-check: every hedge demand is
/// identically zero.
#[derive(Debug, Clone, Copy)]
pub struct BlackScholesModel {
    pub mu: f64,
    pub sigma: f64,
    pub r: f64,
}

impl DiffusionModel for BlackScholesModel {
    fn n_drivers(&self) -> usize {
        1
    }

    fn y0(&self) -> f64 {
        0.0
    }

    fn drift(&self, _s: f64, _y: f64) -> f64 {
        0.0
    }

    fn drift_dy(&self, _s: f64, _y: f64) -> f64 {
        0.0
    }

    fn diffusion(&self, _s: f64, _y: f64, out: &mut [f64]) {
        out[0] = 0.0;
    }

    fn diffusion_dy(&self, _s: f64, _y: f64, out: &mut [f64]) {
        out[0] = 0.0;
    }

    fn rate(&self, _s: f64, _y: f64) -> f64 {
        self.r
    }

    fn rate_dy(&self, _s: f64, _y: f64) -> f64 {
        0.0
    }

    fn theta_h(&self, _s: f64, _y: f64, out: &mut [f64]) {
        out[0] = (self.mu - self.r) / self.sigma;
    }

    fn theta_h_dy(&self, _s: f64, _y: f64, out: &mut [f64]) {
        out[0] = 0.0;
    }

    fn sigma_row(&self, _s: f64, _y: f64, out: &mut [f64]) {
        out[0] = self.sigma;
    }
}

/// Heston with a variance-linked short rate r(V) = r0 + slope·(V − θ̄).
/// With slope ≠ 0 the deterministic-rate orthogonality E[ξ H^θ] = 0 fails;
/// this model is the negative control for that diagnostic.
#[derive(Debug, Clone, Copy)]
pub struct RandomRateHeston {
    pub base: HestonModel,
    pub rate_slope: f64,
}

impl DiffusionModel for RandomRateHeston {
    fn n_drivers(&self) -> usize {
        2
    }

    fn y0(&self) -> f64 {
        self.base.y0()
    }

    fn drift(&self, s: f64, y: f64) -> f64 {
        self.base.drift(s, y)
    }

    fn drift_dy(&self, s: f64, y: f64) -> f64 {
        self.base.drift_dy(s, y)
    }

    fn diffusion(&self, s: f64, y: f64, out: &mut [f64]) {
        self.base.diffusion(s, y, out)
    }

    fn diffusion_dy(&self, s: f64, y: f64, out: &mut [f64]) {
        self.base.diffusion_dy(s, y, out)
    }

    fn rate(&self, _s: f64, y: f64) -> f64 {
        self.base.params.r + self.rate_slope * (y - self.base.params.theta_bar)
    }

    fn rate_dy(&self, _s: f64, _y: f64) -> f64 {
        self.rate_slope
    }

    fn theta_h(&self, s: f64, y: f64, out: &mut [f64]) {
        self.base.theta_h(s, y, out)
    }

    fn theta_h_dy(&self, s: f64, y: f64, out: &mut [f64]) {
        self.base.theta_h_dy(s, y, out)
    }

    fn sigma_row(&self, s: f64, y: f64, out: &mut [f64]) {
        self.base.sigma_row(s, y, out)
    }

    fn step_state(&self, s: f64, y: f64, ds: f64, dw: &[f64]) -> f64 {
        self.base.step_state(s, y, ds, dw)
    }

    fn step_propagator(&self, s: f64, y: f64, phi: f64, ds: f64, dw: &[f64]) -> f64 {
        self.base.step_propagator(s, y, phi, ds, dw)
    }
}
