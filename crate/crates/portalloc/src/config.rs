//! Run configuration: JSON file + preset + flat key overrides, resolved
//! with flags > file > preset > built-in defaults.  Every default actually
//! applied is echoed into the run manifest so a run can be reproduced from
//! the manifest alone.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::experiments::{ShuffleMode, StudyConfig, STEPS_PER_YEAR};
use crate::malliavin::{McConfig, SolverConfig};
use crate::market::HestonParams;
use crate::utility::UtilitySpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!(
                "unknown format {other:?} (expected csv or json)"
            ))),
        }
    }
}

/// One configuration source, with every key optional.  Merging fills a key
/// from the highest-precedence source that sets it.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    // market
    pub kappa: Option<f64>,
    pub theta_bar: Option<f64>,
    pub sigma_v: Option<f64>,
    pub rho_lev: Option<f64>,
    pub lambda_mpr: Option<f64>,
    pub r: Option<f64>,
    // preferences
    pub gamma: Option<f64>,
    pub xbar: Option<f64>,
    pub cbar: Option<f64>,
    pub w: Option<f64>,
    pub discount: Option<f64>,
    // simulation
    pub s0: Option<f64>,
    pub v0: Option<f64>,
    pub dt: Option<f64>,
    pub n_paths: Option<usize>,
    pub seed: Option<u64>,
    // study grids
    pub x0_ratios: Option<Vec<f64>>,
    pub r_grid: Option<Vec<f64>>,
    pub t_grid: Option<Vec<f64>>,
    pub shuffle: Option<ShuffleMode>,
    // ratio study / quantiles
    pub x0_high: Option<f64>,
    pub x0_low: Option<f64>,
    pub x0_ratio: Option<f64>,
    // single-point evaluation (policy, mc-components)
    pub t: Option<f64>,
    pub t_end: Option<f64>,
    pub v: Option<f64>,
    pub x: Option<f64>,
    // Monte-Carlo engine
    pub mc_paths: Option<usize>,
    pub mc_dt: Option<f64>,
    // shadow-price solver grid
    pub solver_n_time: Option<usize>,
    pub solver_n_state: Option<usize>,
    pub solver_y_min: Option<f64>,
    pub solver_y_max: Option<f64>,
    pub solver_tol: Option<f64>,
    pub solver_max_iters: Option<usize>,
    pub solver_damping: Option<f64>,
    pub lambda: Option<f64>,
    // output
    pub out_dir: Option<String>,
    pub format: Option<OutputFormat>,
}

impl PartialConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// The calibrated market of the numerical studies plus the preferences
    /// those studies use (gamma 4, unit floor).
    pub fn preset_paper() -> Self {
        let p = HestonParams::preset_paper();
        PartialConfig {
            kappa: Some(p.kappa),
            theta_bar: Some(p.theta_bar),
            sigma_v: Some(p.sigma_v),
            rho_lev: Some(p.rho_lev),
            lambda_mpr: Some(p.lambda_mpr),
            r: Some(p.r),
            gamma: Some(4.0),
            xbar: Some(1.0),
            v0: Some(p.theta_bar),
            ..Default::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::preset_paper()),
            other => Err(Error::Config(format!(
                "unknown preset {other:?} (available: paper)"
            ))),
        }
    }
}

macro_rules! merge_fields {
    ($hi:expr, $lo:expr; $($f:ident),* $(,)?) => {
        PartialConfig {
            $($f: $hi.$f.clone().or($lo.$f.clone()),)*
        }
    };
}

/// Left argument wins on every key both sources set.
pub fn merge(hi: &PartialConfig, lo: &PartialConfig) -> PartialConfig {
    merge_fields!(hi, lo;
        kappa, theta_bar, sigma_v, rho_lev, lambda_mpr, r,
        gamma, xbar, cbar, w, discount,
        s0, v0, dt, n_paths, seed,
        x0_ratios, r_grid, t_grid, shuffle,
        x0_high, x0_low, x0_ratio,
        t, t_end, v, x,
        mc_paths, mc_dt,
        solver_n_time, solver_n_state, solver_y_min, solver_y_max,
        solver_tol, solver_max_iters, solver_damping, lambda,
        out_dir, format,
    )
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: HestonParams,
    pub spec: UtilitySpec,
    pub s0: f64,
    pub v0: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: Option<u64>,
    pub x0_ratios: Vec<f64>,
    pub r_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub shuffle: ShuffleMode,
    pub x0_high: f64,
    pub x0_low: f64,
    pub x0_ratio: f64,
    pub t: f64,
    pub t_end: f64,
    pub v: f64,
    pub x: f64,
    pub mc_paths: usize,
    pub mc_dt: f64,
    pub solver: SolverConfig,
    pub out_dir: String,
    pub format: OutputFormat,
}

impl RunConfig {
    pub fn study_config(&self) -> StudyConfig {
        StudyConfig {
            params: self.params,
            spec: self.spec,
            x0_ratios: self.x0_ratios.clone(),
            r_grid: self.r_grid.clone(),
            t_grid: self.t_grid.clone(),
            n_paths: self.n_paths,
            dt: self.dt,
            seed: self.seed.unwrap_or(0),
            s0: self.s0,
            v0: self.v0,
            shuffle: self.shuffle,
        }
    }

    pub fn mc_config(&self) -> McConfig {
        McConfig {
            n_paths: self.mc_paths,
            dt: self.mc_dt,
            seed: self.seed.unwrap_or(0),
        }
    }

    /// Validation errors shared by every subcommand.
    pub fn validate(&self) -> Vec<String> {
        let mut v = self.params.validate();
        v.extend(self.spec.validate());
        if !(self.dt > 0.0) {
            v.push(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.s0 > 0.0) {
            v.push(format!("s0 must be > 0, got {}", self.s0));
        }
        if !(self.v0 >= 0.0) {
            v.push(format!("v0 must be >= 0, got {}", self.v0));
        }
        if self.n_paths < 1 {
            v.push("n_paths must be >= 1".into());
        }
        v
    }
}

/// Resolution output: the config plus the bookkeeping the manifest records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Resolved {
    pub config: RunConfig,
    /// Keys filled from built-in defaults (none of preset/file/flags set them).
    pub defaults_applied: Vec<String>,
    /// Keys the flag layer overrode after a lower layer had set them.
    pub overridden: Vec<String>,
}

/// Required keys with no built-in default: the market and risk aversion.
const REQUIRED: &[&str] = &[
    "kappa",
    "theta_bar",
    "sigma_v",
    "rho_lev",
    "lambda_mpr",
    "r",
    "gamma",
];

/// Merge flag overrides, an optional config file, and an optional preset
/// (in that precedence order), apply documented defaults for the rest, and
/// record which keys defaulted.
pub fn resolve(
    flags: &PartialConfig,
    file: Option<&PartialConfig>,
    preset: Option<&PartialConfig>,
) -> Result<Resolved> {
    let empty = PartialConfig::default();
    let lower = merge(file.unwrap_or(&empty), preset.unwrap_or(&empty));
    let merged = merge(flags, &lower);

    let missing: Vec<&str> = REQUIRED
        .iter()
        .filter(|k| match **k {
            "kappa" => merged.kappa.is_none(),
            "theta_bar" => merged.theta_bar.is_none(),
            "sigma_v" => merged.sigma_v.is_none(),
            "rho_lev" => merged.rho_lev.is_none(),
            "lambda_mpr" => merged.lambda_mpr.is_none(),
            "r" => merged.r.is_none(),
            "gamma" => merged.gamma.is_none(),
            _ => unreachable!(),
        })
        .copied()
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "missing required keys: {} (set them explicitly or start from --preset paper)",
            missing.join(", ")
        )));
    }

    let mut defaults = BTreeSet::new();
    macro_rules! take {
        ($key:ident, $default:expr) => {
            match merged.$key.clone() {
                Some(v) => v,
                None => {
                    defaults.insert(stringify!($key).to_string());
                    $default
                }
            }
        };
    }

    let params = HestonParams {
        kappa: merged.kappa.unwrap(),
        theta_bar: merged.theta_bar.unwrap(),
        sigma_v: merged.sigma_v.unwrap(),
        rho_lev: merged.rho_lev.unwrap(),
        lambda_mpr: merged.lambda_mpr.unwrap(),
        r: merged.r.unwrap(),
    };
    let spec = UtilitySpec {
        gamma: merged.gamma.unwrap(),
        xbar: take!(xbar, 0.0),
        cbar: take!(cbar, 0.0),
        w: take!(w, 0.0),
        discount: take!(discount, 0.0),
    };
    let t_end = take!(t_end, 10.0);
    let default_solver = SolverConfig::for_heston(params.theta_bar);
    let config = RunConfig {
        params,
        spec,
        s0: take!(s0, 1.0),
        v0: take!(v0, params.theta_bar),
        dt: take!(dt, 1.0 / STEPS_PER_YEAR as f64),
        n_paths: take!(n_paths, 10_000),
        seed: merged.seed,
        x0_ratios: take!(x0_ratios, vec![1.0, 2.0, 5.0, 10.0]),
        r_grid: take!(r_grid, vec![params.r]),
        t_grid: take!(t_grid, vec![t_end]),
        shuffle: take!(shuffle, ShuffleMode::None),
        x0_high: take!(x0_high, 5.0),
        x0_low: take!(x0_low, 2.0),
        x0_ratio: take!(x0_ratio, 1.0),
        t: take!(t, 0.0),
        t_end,
        v: take!(v, params.theta_bar),
        x: take!(x, 2.0),
        mc_paths: take!(mc_paths, McConfig::default().n_paths),
        mc_dt: take!(mc_dt, McConfig::default().dt),
        solver: SolverConfig {
            n_time: take!(solver_n_time, default_solver.n_time),
            n_state: take!(solver_n_state, default_solver.n_state),
            y_min: take!(solver_y_min, default_solver.y_min),
            y_max: take!(solver_y_max, default_solver.y_max),
            tol: take!(solver_tol, default_solver.tol),
            max_iters: take!(solver_max_iters, default_solver.max_iters),
            damping: take!(solver_damping, default_solver.damping),
            lambda: take!(lambda, default_solver.lambda),
        },
        out_dir: take!(out_dir, "out".into()),
        format: take!(format, OutputFormat::Csv),
    };

    // flag keys that shadowed a file/preset value
    macro_rules! shadowed {
        ($($f:ident),* $(,)?) => {{
            let mut v = Vec::new();
            $(if flags.$f.is_some() && lower.$f.is_some() {
                v.push(stringify!($f).to_string());
            })*
            v
        }};
    }
    let overridden = shadowed!(
        kappa, theta_bar, sigma_v, rho_lev, lambda_mpr, r,
        gamma, xbar, cbar, w, discount,
        s0, v0, dt, n_paths, seed,
        x0_ratios, r_grid, t_grid, shuffle,
        x0_high, x0_low, x0_ratio,
        t, t_end, v, x,
        mc_paths, mc_dt,
        solver_n_time, solver_n_state, solver_y_min, solver_y_max,
        solver_tol, solver_max_iters, solver_damping, lambda,
        out_dir, format,
    );

    Ok(Resolved {
        config,
        defaults_applied: defaults.into_iter().collect(),
        overridden,
    })
}

/// `manifest.json` payload: everything needed to reproduce the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub subcommand: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: RunConfig,
    pub defaults_applied: Vec<String>,
    pub overridden: Vec<String>,
    pub wall_time_secs: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_sources_list_required_keys() {
        let err = resolve(&PartialConfig::default(), None, None).unwrap_err();
        let msg = err.to_string();
        for key in REQUIRED {
            assert!(msg.contains(key), "{msg} missing {key}");
        }
    }

    #[test]
    fn preset_matches_calibrated_market() {
        let preset = PartialConfig::preset("paper").unwrap();
        let res = resolve(&PartialConfig::default(), None, Some(&preset)).unwrap();
        let p = res.config.params;
        assert_eq!(p.kappa, 12.585);
        assert_eq!(p.theta_bar, 0.0193);
        assert_eq!(p.sigma_v, 0.5385);
        assert_eq!(p.rho_lev, -0.8141);
        assert_eq!(p.lambda_mpr, 6.6992);
        assert_eq!(p.r, 0.0051);
        assert_eq!(res.config.spec.gamma, 4.0);
        assert!(res.defaults_applied.contains(&"dt".to_string()));
        assert!(!res.defaults_applied.contains(&"xbar".to_string()));
    }

    #[test]
    fn flags_beat_file_beats_preset() {
        let preset = PartialConfig::preset("paper").unwrap();
        let file = PartialConfig {
            gamma: Some(2.0),
            n_paths: Some(5),
            ..Default::default()
        };
        let flags = PartialConfig {
            gamma: Some(3.0),
            ..Default::default()
        };
        let res = resolve(&flags, Some(&file), Some(&preset)).unwrap();
        assert_eq!(res.config.spec.gamma, 3.0);
        assert_eq!(res.config.n_paths, 5);
        assert_eq!(res.overridden, vec!["gamma".to_string()]);
    }

    #[test]
    fn unknown_json_key_is_rejected_with_its_name() {
        let err: std::result::Result<PartialConfig, _> =
            serde_json::from_str(r#"{"kappa": 1.0, "kapa": 2.0}"#);
        let msg = err.unwrap_err().to_string();
        assert!(msg.contains("kapa"), "{msg}");
    }

    #[test]
    fn manifest_round_trips_through_json() {
        let preset = PartialConfig::preset("paper").unwrap();
        let res = resolve(&PartialConfig::default(), None, Some(&preset)).unwrap();
        let manifest = Manifest {
            subcommand: "study".into(),
            version: "0.0.0".into(),
            seed: Some(42),
            config: res.config,
            defaults_applied: res.defaults_applied,
            overridden: res.overridden,
            wall_time_secs: 1.5,
        };
        let text = serde_json::to_string_pretty(&manifest).unwrap();
        let back: Manifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back.config.params.kappa, manifest.config.params.kappa);
        assert_eq!(back.seed, Some(42));
    }
}
