//! Batch Monte-Carlo studies over the closed-form Heston policies:
//! performance grids across initial wealth / rate / horizon, the
//! high-vs-low-wealth policy-ratio correlations, year-block hysteresis
//! shuffles, and per-quarter quantiles of the scaled policy.
//!
//! All aggregation is per-path-then-average with cross-path standard errors;
//! path `i` always draws from RNG stream `i` of the master seed, so results
//! are bit-stable regardless of thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::market::{
    annual_log_returns, draw_increments, path_from_increments, realized_variance, simulate_heston_path,
    HestonParams,
};
use crate::policy::evolve_wealth;
use crate::stats::{mean_se, pearson, performance_stats, PerformanceStats};
use crate::utility::UtilitySpec;
use crate::{Error, Result};

pub const STEPS_PER_QUARTER: usize = 63;
pub const STEPS_PER_YEAR: usize = 252;
/// Trailing window (steps) for realized variance; RV is defined from step 21.
pub const RV_WINDOW: usize = 22;
/// Reported quantile levels, in percent.
pub const QUANTILE_LEVELS: [f64; 5] = [2.5, 25.0, 50.0, 75.0, 97.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShuffleMode {
    #[default]
    None,
    GoodAhead,
    BadAhead,
}

impl ShuffleMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ShuffleMode::None => "none",
            ShuffleMode::GoodAhead => "good_ahead",
            ShuffleMode::BadAhead => "bad_ahead",
        }
    }
}

impl std::str::FromStr for ShuffleMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ShuffleMode::None),
            "good_ahead" => Ok(ShuffleMode::GoodAhead),
            "bad_ahead" => Ok(ShuffleMode::BadAhead),
            other => Err(Error::InvalidArgument(format!(
                "unknown shuffle mode {other:?} (expected none, good_ahead or bad_ahead)"
            ))),
        }
    }
}

/// Everything a batch study needs.  `x0_ratios` are multiples of the
/// subsistence floor (used verbatim as initial wealth when the floor is 0).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub params: HestonParams,
    pub spec: UtilitySpec,
    pub x0_ratios: Vec<f64>,
    pub r_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub s0: f64,
    pub v0: f64,
    #[serde(default)]
    pub shuffle: ShuffleMode,
}

impl StudyConfig {
    /// The market/preference setup used throughout the calibrated studies:
    /// gamma = 4, unit floor, ten-year horizon, daily steps.
    pub fn paper_defaults(seed: u64) -> Self {
        let params = HestonParams::preset_paper();
        StudyConfig {
            params,
            spec: UtilitySpec::hara_terminal(4.0, 1.0),
            x0_ratios: vec![1.0, 2.0, 5.0, 10.0],
            r_grid: vec![params.r],
            t_grid: vec![10.0],
            n_paths: 10_000,
            dt: 1.0 / STEPS_PER_YEAR as f64,
            seed,
            s0: 1.0,
            v0: params.theta_bar,
            shuffle: ShuffleMode::None,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = self.params.validate();
        v.extend(self.spec.validate());
        if self.x0_ratios.is_empty() {
            v.push("x0_ratios must be nonempty".into());
        }
        if self.r_grid.is_empty() {
            v.push("r_grid must be nonempty".into());
        }
        if self.t_grid.is_empty() {
            v.push("t_grid must be nonempty".into());
        }
        if self.n_paths < 1 {
            v.push("n_paths must be >= 1".into());
        }
        if !(self.dt > 0.0) {
            v.push(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.s0 > 0.0) {
            v.push(format!("s0 must be > 0, got {}", self.s0));
        }
        if !(self.v0 >= 0.0) {
            v.push(format!("v0 must be >= 0, got {}", self.v0));
        }
        v
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let problems = self.validate();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(problems.join("; ")))
        }
    }

    fn x0_for_ratio(&self, ratio: f64) -> f64 {
        if self.spec.xbar > 0.0 {
            ratio * self.spec.xbar
        } else {
            ratio
        }
    }
}

/// Cross-path averages of the per-path performance statistics, with the
/// standard error of each average.  Breached paths are excluded and counted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregatedStats {
    pub mean: f64,
    pub mean_se: f64,
    pub sd: f64,
    pub sd_se: f64,
    pub sharpe: f64,
    pub sharpe_se: f64,
    pub md: f64,
    pub md_se: f64,
    pub n_used: usize,
    pub breaches: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyRow {
    /// Initial wealth as a multiple of the floor; infinite for the
    /// floor-free (CRRA) reference investor.
    pub x0_ratio: f64,
    pub r: f64,
    pub t: f64,
    pub stats: AggregatedStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HysteresisRow {
    pub mode: ShuffleMode,
    pub x0_ratio: f64,
    pub stats: AggregatedStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantileRow {
    /// 1-based quarter index; the policy is sampled at the quarter's first step.
    pub quarter: usize,
    /// One value per entry of [`QUANTILE_LEVELS`].
    pub values: Vec<f64>,
}

/// Average correlations between the high/low policy ratio and the stock
/// price, resp. realized variance.  Absent when the ratio is constant on
/// every path (e.g. no floor).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioStudy {
    pub corr_s: Option<f64>,
    pub corr_s_se: Option<f64>,
    pub corr_rv: Option<f64>,
    pub corr_rv_se: Option<f64>,
    pub n_used: usize,
    pub breaches: usize,
}

fn aggregate(per_path: &[PerformanceStats], breaches: usize) -> AggregatedStats {
    let take = |f: &dyn Fn(&PerformanceStats) -> f64| -> (f64, f64) {
        let vals: Vec<f64> = per_path.iter().map(f).collect();
        mean_se(&vals)
    };
    let (mean, mean_se_) = take(&|s| s.mean);
    let (sd, sd_se) = take(&|s| s.sd);
    let (md, md_se) = take(&|s| s.max_drawdown);
    let sharpes: Vec<f64> = per_path.iter().filter_map(|s| s.sharpe).collect();
    let (sharpe, sharpe_se) = mean_se(&sharpes);
    AggregatedStats {
        mean,
        mean_se: mean_se_,
        sd,
        sd_se,
        sharpe,
        sharpe_se,
        md,
        md_se,
        n_used: per_path.len(),
        breaches,
    }
}

/// Evolve one path's wealth under the given setup, honoring the shuffle
/// mode: annual stock returns are measured on the *unshuffled* path, the
/// increment year-blocks are reordered, and the market path rebuilt.
fn path_stats(
    cfg: &StudyConfig,
    params: &HestonParams,
    spec: &UtilitySpec,
    x0: f64,
    t_end: f64,
    mode: ShuffleMode,
    path_index: u64,
) -> Result<Option<PerformanceStats>> {
    let (dw1, dw2) = draw_increments(t_end, cfg.dt, cfg.seed, path_index)?;
    let path = if mode == ShuffleMode::None {
        path_from_increments(params, cfg.s0, cfg.v0, cfg.dt, &dw1, &dw2)?
    } else {
        let base = path_from_increments(params, cfg.s0, cfg.v0, cfg.dt, &dw1, &dw2)?;
        let steps_per_year = (1.0 / cfg.dt).round() as usize;
        let returns = annual_log_returns(&base, steps_per_year)?;
        let (sw1, sw2, _) = hysteresis_shuffle(&dw1, &dw2, &returns, steps_per_year, mode)?;
        path_from_increments(params, cfg.s0, cfg.v0, cfg.dt, &sw1, &sw2)?
    };
    let wp = evolve_wealth(&path, params, spec, x0, t_end)?;
    if wp.breached() {
        return Ok(None);
    }
    Ok(Some(performance_stats(&wp.x, cfg.dt, params.r)?))
}

fn grid_point(
    cfg: &StudyConfig,
    params: &HestonParams,
    spec: &UtilitySpec,
    x0: f64,
    t_end: f64,
    mode: ShuffleMode,
) -> Result<AggregatedStats> {
    let per_path: Vec<Option<PerformanceStats>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| path_stats(cfg, params, spec, x0, t_end, mode, i))
        .collect::<Result<_>>()?;
    let breaches = per_path.iter().filter(|s| s.is_none()).count();
    let kept: Vec<PerformanceStats> = per_path.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::InvalidArgument(
            "every simulated path breached the floor; nothing to aggregate".into(),
        ));
    }
    Ok(aggregate(&kept, breaches))
}

/// Performance statistics per (X0 multiple, rate, horizon) grid point, plus
/// one floor-free reference row (x0_ratio = inf) per (rate, horizon) pair.
pub fn run_study(cfg: &StudyConfig) -> Result<Vec<StudyRow>> {
    cfg.ensure_valid()?;
    let mut rows = Vec::new();
    for &r in &cfg.r_grid {
        let params = HestonParams { r, ..cfg.params };
        params.ensure_valid()?;
        for &t_end in &cfg.t_grid {
            for &ratio in &cfg.x0_ratios {
                let x0 = cfg.x0_for_ratio(ratio);
                let stats = grid_point(cfg, &params, &cfg.spec, x0, t_end, cfg.shuffle)?;
                rows.push(StudyRow {
                    x0_ratio: ratio,
                    r,
                    t: t_end,
                    stats,
                });
            }
            if cfg.spec.xbar > 0.0 {
                let crra = UtilitySpec::crra(cfg.spec.gamma);
                let stats = grid_point(cfg, &params, &crra, 1.0, t_end, cfg.shuffle)?;
                rows.push(StudyRow {
                    x0_ratio: f64::INFINITY,
                    r,
                    t: t_end,
                    stats,
                });
            }
        }
    }
    Ok(rows)
}

/// The {none, good_ahead, bad_ahead} hysteresis table over the X0 grid
/// (plus the floor-free reference), at the config's base rate and first
/// horizon, which must span an integer number of years.
pub fn hysteresis_study(cfg: &StudyConfig) -> Result<Vec<HysteresisRow>> {
    cfg.ensure_valid()?;
    let t_end = cfg.t_grid[0];
    let mut rows = Vec::new();
    for mode in [ShuffleMode::None, ShuffleMode::GoodAhead, ShuffleMode::BadAhead] {
        for &ratio in &cfg.x0_ratios {
            let x0 = cfg.x0_for_ratio(ratio);
            let stats = grid_point(cfg, &cfg.params, &cfg.spec, x0, t_end, mode)?;
            rows.push(HysteresisRow {
                mode,
                x0_ratio: ratio,
                stats,
            });
        }
        if cfg.spec.xbar > 0.0 {
            let crra = UtilitySpec::crra(cfg.spec.gamma);
            let stats = grid_point(cfg, &cfg.params, &crra, 1.0, t_end, mode)?;
            rows.push(HysteresisRow {
                mode,
                x0_ratio: f64::INFINITY,
                stats,
            });
        }
    }
    Ok(rows)
}

/// Reorder the year-blocks of both increment series.  `good_ahead` moves
/// the three highest-return years to the front (best first), `bad_ahead`
/// the three lowest (worst first); all other years keep their original
/// relative order.  Returns the shuffled series and the permutation
/// (entry k = original year placed at position k).
pub fn hysteresis_shuffle(
    dw1: &[f64],
    dw2: &[f64],
    annual_returns: &[f64],
    steps_per_year: usize,
    mode: ShuffleMode,
) -> Result<(Vec<f64>, Vec<f64>, Vec<usize>)> {
    if dw1.len() != dw2.len() {
        return Err(Error::InvalidArgument(format!(
            "increment length mismatch: {} vs {}",
            dw1.len(),
            dw2.len()
        )));
    }
    if steps_per_year == 0 || dw1.len() % steps_per_year != 0 {
        return Err(Error::InvalidArgument(format!(
            "series of {} steps is not an integer number of {steps_per_year}-step years",
            dw1.len()
        )));
    }
    let years = dw1.len() / steps_per_year;
    if years != annual_returns.len() {
        return Err(Error::InvalidArgument(format!(
            "{} annual returns supplied for {} year-blocks",
            annual_returns.len(),
            years
        )));
    }
    if years < 4 {
        return Err(Error::InvalidArgument(format!(
            "hysteresis shuffle needs at least 4 years, got {years}"
        )));
    }

    let perm: Vec<usize> = match mode {
        ShuffleMode::None => (0..years).collect(),
        ShuffleMode::GoodAhead | ShuffleMode::BadAhead => {
            let mut ranked: Vec<usize> = (0..years).collect();
            // stable sort: ties keep the earlier year first
            match mode {
                ShuffleMode::GoodAhead => {
                    ranked.sort_by(|&a, &b| annual_returns[b].total_cmp(&annual_returns[a]))
                }
                _ => ranked.sort_by(|&a, &b| annual_returns[a].total_cmp(&annual_returns[b])),
            }
            let front: Vec<usize> = ranked[..3].to_vec();
            let mut perm = front.clone();
            perm.extend((0..years).filter(|y| !front.contains(y)));
            perm
        }
    };

    let mut out1 = Vec::with_capacity(dw1.len());
    let mut out2 = Vec::with_capacity(dw2.len());
    for &y in &perm {
        let block = y * steps_per_year..(y + 1) * steps_per_year;
        out1.extend_from_slice(&dw1[block.clone()]);
        out2.extend_from_slice(&dw2[block]);
    }
    Ok((out1, out2, perm))
}

/// Per-path Pearson correlations between the high/low investors' policy
/// ratio and (a) the stock price, (b) trailing realized variance, averaged
/// across paths.  Both investors see identical market paths.
pub fn policy_ratio_study(
    cfg: &StudyConfig,
    x0_high: f64,
    x0_low: f64,
) -> Result<RatioStudy> {
    cfg.ensure_valid()?;
    let t_end = cfg.t_grid[0];
    let per_path: Vec<Option<(Option<f64>, Option<f64>)>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| -> Result<Option<(Option<f64>, Option<f64>)>> {
            let path =
                simulate_heston_path(&cfg.params, cfg.s0, cfg.v0, t_end, cfg.dt, cfg.seed, i)?;
            let high = evolve_wealth(&path, &cfg.params, &cfg.spec, x0_high, t_end)?;
            let low = evolve_wealth(&path, &cfg.params, &cfg.spec, x0_low, t_end)?;
            if high.breached() || low.breached() {
                return Ok(None);
            }
            let ratio: Vec<f64> = high
                .weight
                .iter()
                .zip(&low.weight)
                .map(|(h, l)| h / l)
                .collect();
            // a ratio that is constant up to rounding (identical policies)
            // carries no correlation signal
            let (lo, hi) = ratio
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
                    (a.min(x), b.max(x))
                });
            if hi - lo <= 1e-12 {
                return Ok(Some((None, None)));
            }
            let corr_s = pearson(&ratio, &path.s);
            let rv = realized_variance(&path, RV_WINDOW)?;
            let corr_rv = pearson(&ratio[RV_WINDOW - 1..], &rv);
            Ok(Some((corr_s, corr_rv)))
        })
        .collect::<Result<_>>()?;

    let breaches = per_path.iter().filter(|p| p.is_none()).count();
    let kept: Vec<(Option<f64>, Option<f64>)> = per_path.into_iter().flatten().collect();
    let n_used = kept.len();
    let s_vals: Vec<f64> = kept.iter().filter_map(|p| p.0).collect();
    let rv_vals: Vec<f64> = kept.iter().filter_map(|p| p.1).collect();
    let wrap = |vals: &[f64]| -> (Option<f64>, Option<f64>) {
        if vals.is_empty() {
            (None, None)
        } else {
            let (m, se) = mean_se(vals);
            (Some(m), Some(se))
        }
    };
    let (corr_s, corr_s_se) = wrap(&s_vals);
    let (corr_rv, corr_rv_se) = wrap(&rv_vals);
    Ok(RatioStudy {
        corr_s,
        corr_s_se,
        corr_rv,
        corr_rv_se,
        n_used,
        breaches,
    })
}

/// Linear-interpolation quantile of a sorted sample at level `p` percent.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * (p / 100.0).clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Cross-path quantiles of the scaled policy pi' = pi / mean(pi), sampled
/// at the first step of each 63-step quarter.
pub fn scaled_policy_quantiles(
    cfg: &StudyConfig,
    x0_ratio: f64,
    levels: &[f64],
) -> Result<Vec<QuantileRow>> {
    cfg.ensure_valid()?;
    if levels.is_empty() {
        return Err(Error::InvalidArgument("no quantile levels requested".into()));
    }
    let t_end = cfg.t_grid[0];
    let x0 = cfg.x0_for_ratio(x0_ratio);
    let per_path: Vec<Option<Vec<f64>>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| -> Result<Option<Vec<f64>>> {
            let path =
                simulate_heston_path(&cfg.params, cfg.s0, cfg.v0, t_end, cfg.dt, cfg.seed, i)?;
            let wp = evolve_wealth(&path, &cfg.params, &cfg.spec, x0, t_end)?;
            if wp.breached() {
                return Ok(None);
            }
            // mean over the N applied weights (the terminal entry is never applied)
            let n = wp.weight.len() - 1;
            let pi_bar = wp.weight[..n].iter().sum::<f64>() / n as f64;
            Ok(Some(
                (0..n)
                    .step_by(STEPS_PER_QUARTER)
                    .map(|k| wp.weight[k] / pi_bar)
                    .collect(),
            ))
        })
        .collect::<Result<_>>()?;

    let kept: Vec<Vec<f64>> = per_path.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::InvalidArgument(
            "every simulated path breached the floor; nothing to aggregate".into(),
        ));
    }
    let quarters = kept[0].len();
    let mut rows = Vec::with_capacity(quarters);
    for q in 0..quarters {
        let mut vals: Vec<f64> = kept.iter().map(|p| p[q]).collect();
        vals.sort_by(f64::total_cmp);
        rows.push(QuantileRow {
            quarter: q + 1,
            values: levels.iter().map(|&p| quantile_sorted(&vals, p)).collect(),
        });
    }
    Ok(rows)
}
