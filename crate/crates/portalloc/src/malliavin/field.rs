//! Sources of the unspanned (investor-specific) price of risk θᵘ.
//!
//! The Monte-Carlo engine never needs the fictitious completing assets
//! themselves, only θᵘ(s, y) and its sensitivities, so a source is just
//! three callbacks.  Three implementations: identically zero (complete
//! markets), the Heston closed form, and a grid field filled in by the
//! backward solver.

use serde::{Deserialize, Serialize};

use crate::market::HestonParams;
use crate::model::V_EPS;
use crate::policy::{self, HestonPolicyConstants};
use crate::{Error, Result};

/// Driver dimension of the engine's vector quantities.
pub const D: usize = 2;

pub trait ThetaUSource: Sync {
    /// θᵘ(s, y) at multiplier `lambda`, written into `out[..D]`.
    fn theta_u(&self, s: f64, y: f64, lambda: f64, out: &mut [f64; D]);

    /// ∂θᵘ/∂y.
    fn theta_u_dy(&self, s: f64, y: f64, lambda: f64, out: &mut [f64; D]);

    /// ∂θᵘ/∂λ; zero whenever the field is multiplier-free (constant relative
    /// risk aversion, or any utility under a deterministic rate).
    fn theta_u_dlambda(&self, _s: f64, _y: f64, _lambda: f64, out: &mut [f64; D]) {
        out.fill(0.0);
    }
}

/// θᵘ ≡ 0: complete markets, or a deliberately myopic investor.
#[derive(Debug, Clone, Copy)]
pub struct ZeroThetaU;

impl ThetaUSource for ZeroThetaU {
    fn theta_u(&self, _s: f64, _y: f64, _lambda: f64, out: &mut [f64; D]) {
        out.fill(0.0);
    }

    fn theta_u_dy(&self, _s: f64, _y: f64, _lambda: f64, out: &mut [f64; D]) {
        out.fill(0.0);
    }
}

/// The Heston closed form (0, γ√(1−ρ²)σδφ(T−s)√V), with its analytic
/// state gradient.
#[derive(Debug, Clone, Copy)]
pub struct ClosedFormHestonThetaU {
    params: HestonParams,
    consts: HestonPolicyConstants,
    gamma: f64,
    t_end: f64,
}

impl ClosedFormHestonThetaU {
    pub fn new(params: HestonParams, gamma: f64, t_end: f64) -> Result<Self> {
        Ok(ClosedFormHestonThetaU {
            params,
            consts: HestonPolicyConstants::new(&params, gamma)?,
            gamma,
            t_end,
        })
    }

    #[inline]
    fn coeff(&self, s: f64) -> f64 {
        let rho2 = self.params.rho_lev * self.params.rho_lev;
        self.gamma
            * (1.0 - rho2).sqrt()
            * self.params.sigma_v
            * self.consts.delta
            * policy::phi((self.t_end - s).max(0.0), &self.consts)
    }
}

impl ThetaUSource for ClosedFormHestonThetaU {
    fn theta_u(&self, s: f64, y: f64, _lambda: f64, out: &mut [f64; D]) {
        out[0] = 0.0;
        out[1] = self.coeff(s) * y.max(0.0).sqrt();
    }

    fn theta_u_dy(&self, s: f64, y: f64, _lambda: f64, out: &mut [f64; D]) {
        out[0] = 0.0;
        out[1] = self.coeff(s) / (2.0 * y.max(V_EPS).sqrt());
    }
}

/// θᵘ on a (time × state) grid: piecewise linear in the state, left-constant
/// in time between nodes, zero at and beyond the horizon.  State gradients
/// are nodal central differences, interpolated linearly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThetaUField {
    pub t_grid: Vec<f64>,
    pub y_grid: Vec<f64>,
    pub t_end: f64,
    /// values[k][j] = θᵘ(t_k, y_j)
    pub values: Vec<Vec<[f64; D]>>,
    /// nodal ∂θᵘ/∂y by central differences, same layout
    grads: Vec<Vec<[f64; D]>>,
}

impl ThetaUField {
    /// A zero-initialized field on the given grids; the final time row is
    /// pinned to the horizon value 0 forever.
    pub fn zeros(t_grid: Vec<f64>, y_grid: Vec<f64>, t_end: f64) -> Result<Self> {
        if t_grid.len() < 2 || y_grid.len() < 2 {
            return Err(Error::InvalidArgument(
                "field grids need at least two nodes each".into(),
            ));
        }
        if !t_grid.windows(2).all(|w| w[0] < w[1]) || !y_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "field grids must be strictly increasing".into(),
            ));
        }
        if *t_grid.last().unwrap() > t_end {
            return Err(Error::InvalidArgument(
                "time grid extends past the horizon".into(),
            ));
        }
        let values = vec![vec![[0.0; D]; y_grid.len()]; t_grid.len()];
        let grads = values.clone();
        Ok(ThetaUField {
            t_grid,
            y_grid,
            t_end,
            values,
            grads,
        })
    }

    /// Overwrite one time row and refresh its nodal gradients.
    pub fn set_row(&mut self, k: usize, row: Vec<[f64; D]>) {
        assert_eq!(row.len(), self.y_grid.len());
        self.values[k] = row;
        self.grads[k] = central_differences(&self.y_grid, &self.values[k]);
    }

    fn time_index(&self, s: f64) -> Option<usize> {
        if s >= self.t_end {
            return None; // at/after the horizon the field is zero
        }
        // left-constant: the row in force is the last node not after s
        match self
            .t_grid
            .binary_search_by(|t| t.partial_cmp(&s).unwrap())
        {
            Ok(k) => Some(k),
            Err(0) => Some(0), // before the first node: clamp
            Err(k) => Some(k - 1),
        }
    }

    fn interp(&self, table: &[Vec<[f64; D]>], k: usize, y: f64, out: &mut [f64; D]) {
        let row = &table[k];
        let g = &self.y_grid;
        let (j, w) = if y <= g[0] {
            (0, 0.0)
        } else if y >= *g.last().unwrap() {
            (g.len() - 2, 1.0)
        } else {
            let j = match g.binary_search_by(|v| v.partial_cmp(&y).unwrap()) {
                Ok(j) => j.min(g.len() - 2),
                Err(j) => j - 1,
            };
            (j, (y - g[j]) / (g[j + 1] - g[j]))
        };
        for i in 0..D {
            out[i] = (1.0 - w) * row[j][i] + w * row[j + 1][i];
        }
    }
}

fn central_differences(y_grid: &[f64], row: &[[f64; D]]) -> Vec<[f64; D]> {
    let n = y_grid.len();
    let mut out = vec![[0.0; D]; n];
    for j in 0..n {
        let (lo, hi) = if j == 0 {
            (0, 1)
        } else if j == n - 1 {
            (n - 2, n - 1)
        } else {
            (j - 1, j + 1)
        };
        let h = y_grid[hi] - y_grid[lo];
        for i in 0..D {
            out[j][i] = (row[hi][i] - row[lo][i]) / h;
        }
    }
    out
}

impl ThetaUSource for ThetaUField {
    fn theta_u(&self, s: f64, y: f64, _lambda: f64, out: &mut [f64; D]) {
        match self.time_index(s) {
            Some(k) => self.interp(&self.values, k, y, out),
            None => out.fill(0.0),
        }
    }

    fn theta_u_dy(&self, s: f64, y: f64, _lambda: f64, out: &mut [f64; D]) {
        match self.time_index(s) {
            Some(k) => self.interp(&self.grads, k, y, out),
            None => out.fill(0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn closed_form_matches_policy_module() {
        let p = HestonParams::preset_paper();
        let src = ClosedFormHestonThetaU::new(p, 4.0, 10.0).unwrap();
        let mut out = [0.0; D];
        src.theta_u(0.0, p.theta_bar, 1.0, &mut out);
        let direct = policy::theta_u_closed_form(0.0, p.theta_bar, 10.0, &p, 4.0).unwrap();
        assert_eq!(out[0], 0.0);
        assert_relative_eq!(out[1], direct[1], max_relative = 1e-14);

        // gradient vs finite difference
        let mut g = [0.0; D];
        src.theta_u_dy(2.0, 0.02, 1.0, &mut g);
        let (mut a, mut b) = ([0.0; D], [0.0; D]);
        src.theta_u(2.0, 0.02 + 5e-7, 1.0, &mut a);
        src.theta_u(2.0, 0.02 - 5e-7, 1.0, &mut b);
        assert_relative_eq!(g[1], (a[1] - b[1]) / 1e-6, max_relative = 1e-6);

        // at the horizon the source dies
        src.theta_u(10.0, 0.02, 1.0, &mut out);
        assert_eq!(out, [0.0; D]);
    }

    #[test]
    fn field_interpolation_rules() {
        let mut f = ThetaUField::zeros(vec![0.0, 0.5], vec![0.0, 1.0, 2.0], 1.0).unwrap();
        f.set_row(0, vec![[0.0, 0.0], [0.0, 1.0], [0.0, 4.0]]);
        f.set_row(1, vec![[0.0, 0.0], [0.0, 2.0], [0.0, 8.0]]);
        let mut out = [0.0; D];

        // linear in state
        f.theta_u(0.0, 0.5, 1.0, &mut out);
        assert_relative_eq!(out[1], 0.5);
        f.theta_u(0.0, 1.5, 1.0, &mut out);
        assert_relative_eq!(out[1], 2.5);
        // clamped outside the grid
        f.theta_u(0.0, 5.0, 1.0, &mut out);
        assert_relative_eq!(out[1], 4.0);
        f.theta_u(0.0, -1.0, 1.0, &mut out);
        assert_relative_eq!(out[1], 0.0);

        // left-constant in time: row 0 rules on [0, 0.5), row 1 from 0.5
        f.theta_u(0.49, 1.0, 1.0, &mut out);
        assert_relative_eq!(out[1], 1.0);
        f.theta_u(0.5, 1.0, 1.0, &mut out);
        assert_relative_eq!(out[1], 2.0);
        f.theta_u(0.75, 1.0, 1.0, &mut out);
        assert_relative_eq!(out[1], 2.0);
        // zero at/after the horizon
        f.theta_u(1.0, 1.0, 1.0, &mut out);
        assert_eq!(out, [0.0; D]);

        // nodal central differences: interior node uses both neighbours
        let mut g = [0.0; D];
        f.theta_u_dy(0.0, 1.0, 1.0, &mut g);
        assert_relative_eq!(g[1], (4.0 - 0.0) / 2.0);
        // boundary nodes are one-sided
        f.theta_u_dy(0.0, 0.0, 1.0, &mut g);
        assert_relative_eq!(g[1], 1.0);
    }

    #[test]
    fn bad_grids_rejected() {
        assert!(ThetaUField::zeros(vec![0.0], vec![0.0, 1.0], 1.0).is_err());
        assert!(ThetaUField::zeros(vec![0.0, 0.0], vec![0.0, 1.0], 1.0).is_err());
        assert!(ThetaUField::zeros(vec![0.0, 2.0], vec![0.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn dlambda_defaults_to_zero() {
        let f = ThetaUField::zeros(vec![0.0, 0.5], vec![0.0, 1.0], 1.0).unwrap();
        let mut out = [1.0; D];
        f.theta_u_dlambda(0.1, 0.5, 3.0, &mut out);
        assert_eq!(out, [0.0; D]);
    }
}
