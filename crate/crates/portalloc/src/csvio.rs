//! CSV emission for the batch artifacts.  All floating-point values are
//! written with 17 significant digits (enough to round-trip any double
//! exactly) so reruns diff clean.

use std::io::Write;

use crate::experiments::{HysteresisRow, QuantileRow, StudyRow, QUANTILE_LEVELS};
use crate::malliavin::ThetaUField;
use crate::market::MarketPath;
use crate::policy::WealthPath;
use crate::Result;

/// 17-significant-digit scientific notation (parses back to the exact
/// double); infinities spelled `inf`/`-inf`.
pub fn fmt_f(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{x:.16e}")
}

/// `step,time,S,V,dW1,dW2` — row k holds the state at grid point k and the
/// increments that produced it (zeros on row 0).
pub fn write_market_path(out: &mut impl Write, path: &MarketPath) -> Result<()> {
    writeln!(out, "step,time,S,V,dW1,dW2")?;
    for k in 0..path.s.len() {
        let (d1, d2) = if k == 0 {
            (0.0, 0.0)
        } else {
            (path.dw1[k - 1], path.dw2[k - 1])
        };
        writeln!(
            out,
            "{},{},{},{},{},{}",
            k,
            fmt_f(path.times[k]),
            fmt_f(path.s[k]),
            fmt_f(path.v[k]),
            fmt_f(d1),
            fmt_f(d2)
        )?;
    }
    Ok(())
}

/// `step,time,X,weight,Xbar_ratio`.
pub fn write_wealth_path(out: &mut impl Write, path: &WealthPath) -> Result<()> {
    writeln!(out, "step,time,X,weight,Xbar_ratio")?;
    for k in 0..path.x.len() {
        writeln!(
            out,
            "{},{},{},{},{}",
            k,
            fmt_f(k as f64 * path.dt),
            fmt_f(path.x[k]),
            fmt_f(path.weight[k]),
            fmt_f(path.xbar_ratio[k])
        )?;
    }
    Ok(())
}

/// `t,V,theta_u_1,theta_u_2` over the solver grid.
pub fn write_theta_u_field(out: &mut impl Write, field: &ThetaUField) -> Result<()> {
    writeln!(out, "t,V,theta_u_1,theta_u_2")?;
    for (k, &t) in field.t_grid.iter().enumerate() {
        for (j, &y) in field.y_grid.iter().enumerate() {
            let v = field.values[k][j];
            writeln!(
                out,
                "{},{},{},{}",
                fmt_f(t),
                fmt_f(y),
                fmt_f(v[0]),
                fmt_f(v[1])
            )?;
        }
    }
    Ok(())
}

/// `X0_ratio,r,T,mean,mean_se,sd,sd_se,sharpe,sharpe_se,md,md_se,breaches`;
/// the floor-free reference row carries `X0_ratio = inf`.
pub fn write_study(out: &mut impl Write, rows: &[StudyRow]) -> Result<()> {
    writeln!(
        out,
        "X0_ratio,r,T,mean,mean_se,sd,sd_se,sharpe,sharpe_se,md,md_se,breaches"
    )?;
    for row in rows {
        let s = &row.stats;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt_f(row.x0_ratio),
            fmt_f(row.r),
            fmt_f(row.t),
            fmt_f(s.mean),
            fmt_f(s.mean_se),
            fmt_f(s.sd),
            fmt_f(s.sd_se),
            fmt_f(s.sharpe),
            fmt_f(s.sharpe_se),
            fmt_f(s.md),
            fmt_f(s.md_se),
            s.breaches
        )?;
    }
    Ok(())
}

/// Study table keyed by shuffle mode instead of (r, T).
pub fn write_hysteresis(out: &mut impl Write, rows: &[HysteresisRow]) -> Result<()> {
    writeln!(
        out,
        "mode,X0_ratio,mean,mean_se,sd,sd_se,sharpe,sharpe_se,md,md_se,breaches"
    )?;
    for row in rows {
        let s = &row.stats;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row.mode.as_str(),
            fmt_f(row.x0_ratio),
            fmt_f(s.mean),
            fmt_f(s.mean_se),
            fmt_f(s.sd),
            fmt_f(s.sd_se),
            fmt_f(s.sharpe),
            fmt_f(s.sharpe_se),
            fmt_f(s.md),
            fmt_f(s.md_se),
            s.breaches
        )?;
    }
    Ok(())
}

/// `quarter,q2.5,q25,q50,q75,q97.5` (rows must use [`QUANTILE_LEVELS`]).
pub fn write_quantiles(out: &mut impl Write, rows: &[QuantileRow]) -> Result<()> {
    let header: Vec<String> = QUANTILE_LEVELS.iter().map(|p| format!("q{p}")).collect();
    writeln!(out, "quarter,{}", header.join(","))?;
    for row in rows {
        let vals: Vec<String> = row.values.iter().map(|&v| fmt_f(v)).collect();
        writeln!(out, "{},{}", row.quarter, vals.join(","))?;
    }
    Ok(())
}
