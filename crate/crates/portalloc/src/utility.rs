//! Power-family utilities with optional subsistence floors, and the inverse
//! marginal utilities that drive the Monte-Carlo policy representation.
//!
//! Terminal utility: U(T,x) = (1-w) e^{-discount T} (x - xbar)^{1-gamma} / (1-gamma)
//! Consumption flow: u(t,c) =  w    e^{-discount t} (c - cbar)^{1-gamma} / (1-gamma)
//! With xbar = cbar = 0 the family is wealth-independent (constant relative
//! risk aversion).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    /// Relative risk aversion (> 0, != 1).
    pub gamma: f64,
    /// Floor on terminal wealth (currency).
    #[serde(default)]
    pub xbar: f64,
    /// Floor on the consumption rate (currency/year).
    #[serde(default)]
    pub cbar: f64,
    /// Weight on intermediate consumption, in [0,1]; 0 = terminal wealth only.
    #[serde(default)]
    pub w: f64,
    /// Subjective discount rate (1/year).
    #[serde(default)]
    pub discount: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Terminal,
    Consumption,
}

impl UtilitySpec {
    pub fn crra(gamma: f64) -> Self {
        UtilitySpec {
            gamma,
            xbar: 0.0,
            cbar: 0.0,
            w: 0.0,
            discount: 0.0,
        }
    }

    /// Terminal-wealth investor with a subsistence floor.
    pub fn hara_terminal(gamma: f64, xbar: f64) -> Self {
        UtilitySpec {
            gamma,
            xbar,
            cbar: 0.0,
            w: 0.0,
            discount: 0.0,
        }
    }

    pub fn is_crra(&self) -> bool {
        self.xbar == 0.0 && self.cbar == 0.0
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.gamma > 0.0) || self.gamma == 1.0 {
            v.push(format!("gamma must be > 0 and != 1, got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.w) {
            v.push(format!("w must lie in [0,1], got {}", self.w));
        }
        if !(self.xbar >= 0.0) {
            v.push(format!("xbar must be >= 0, got {}", self.xbar));
        }
        if !(self.cbar >= 0.0) {
            v.push(format!("cbar must be >= 0, got {}", self.cbar));
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

    fn weight_const(&self, t: f64, which: Which) -> Result<f64> {
        match which {
            Which::Terminal => {
                if self.w >= 1.0 {
                    return Err(Error::InvalidArgument(
                        "terminal utility absent (w = 1)".into(),
                    ));
                }
                Ok((1.0 - self.w) * (-self.discount * t).exp())
            }
            Which::Consumption => {
                if self.w <= 0.0 {
                    return Err(Error::InvalidArgument(
                        "consumption utility absent (w = 0)".into(),
                    ));
                }
                Ok(self.w * (-self.discount * t).exp())
            }
        }
    }

    fn floor(&self, which: Which) -> f64 {
        match which {
            Which::Terminal => self.xbar,
            Which::Consumption => self.cbar,
        }
    }

    /// Marginal utility, e.g. U'(t,x) = k(t) (x - floor)^{-gamma}.
    pub fn marginal(&self, t: f64, x: f64, which: Which) -> Result<f64> {
        let k = self.weight_const(t, which)?;
        let z = x - self.floor(which);
        if !(z > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "argument {x} is not above the floor {}",
                self.floor(which)
            )));
        }
        Ok(k * z.powf(-self.gamma))
    }

    /// Inverse marginal utility: the x with marginal utility y, i.e.
    /// floor + (k(t)/y)^{1/gamma}.
    pub fn inverse_marginal(&self, t: f64, y: f64, which: Which) -> Result<f64> {
        let k = self.weight_const(t, which)?;
        if !(y > 0.0) {
            return Err(Error::InvalidArgument(format!("y must be > 0, got {y}")));
        }
        Ok(self.floor(which) + (k / y).powf(1.0 / self.gamma))
    }

    /// d/dy of the inverse marginal utility: -(1/gamma) (k/y)^{1/gamma} / y.
    /// Always strictly negative.
    pub fn inverse_marginal_derivative(&self, t: f64, y: f64, which: Which) -> Result<f64> {
        let k = self.weight_const(t, which)?;
        if !(y > 0.0) {
            return Err(Error::InvalidArgument(format!("y must be > 0, got {y}")));
        }
        Ok(-(k / y).powf(1.0 / self.gamma) / (self.gamma * y))
    }
}
