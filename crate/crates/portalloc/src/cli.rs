//! Batch front door: subcommand dispatch, configuration resolution, seed
//! management and artifact emission.  Exit codes: 0 success, 1 configuration
//! or validation error, 2 numerical failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{self, Manifest, OutputFormat, PartialConfig, Resolved, RunConfig};
use crate::csvio;
use crate::experiments::{
    hysteresis_study, policy_ratio_study, run_study, scaled_policy_quantiles, ShuffleMode,
    QUANTILE_LEVELS,
};
use crate::malliavin::{
    mc_policy_components, residual_diagnostics, solve_theta_u, ClosedFormHestonThetaU,
};
use crate::market::simulate_heston_path;
use crate::model::HestonModel;
use crate::policy::{crra_policy, evolve_wealth, hara_policy, theta_u_closed_form};
use crate::{Error, Result};

#[derive(Parser)]
#[command(
    name = "portalloc",
    version,
    about = "Optimal dynamic portfolio allocation under stochastic volatility"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a configuration and print the Feller margin
    Validate(Flags),
    /// Simulate one market path and the optimal investor's wealth along it
    Simulate(Flags),
    /// Print the closed-form policy decomposition at a point
    Policy(Flags),
    /// Solve the shadow-price fixed point on a (t, V) grid
    SolveThetaU(Flags),
    /// Monte-Carlo policy decomposition at a point
    McComponents(Flags),
    /// Performance statistics over the (X0, r, T) grid
    Study(Flags),
    /// Year-block shuffle study (none / good_ahead / bad_ahead)
    Hysteresis(Flags),
    /// Per-quarter quantiles of the scaled policy
    Quantiles(Flags),
    /// Correlation of the high/low policy ratio with price and realized variance
    RatioStudy(Flags),
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::Validate(_) => "validate",
            Cmd::Simulate(_) => "simulate",
            Cmd::Policy(_) => "policy",
            Cmd::SolveThetaU(_) => "solve-theta-u",
            Cmd::McComponents(_) => "mc-components",
            Cmd::Study(_) => "study",
            Cmd::Hysteresis(_) => "hysteresis",
            Cmd::Quantiles(_) => "quantiles",
            Cmd::RatioStudy(_) => "ratio-study",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Cmd::Validate(f)
            | Cmd::Simulate(f)
            | Cmd::Policy(f)
            | Cmd::SolveThetaU(f)
            | Cmd::McComponents(f)
            | Cmd::Study(f)
            | Cmd::Hysteresis(f)
            | Cmd::Quantiles(f)
            | Cmd::RatioStudy(f) => f,
        }
    }

    /// Commands that draw random numbers must be seeded explicitly.
    fn is_stochastic(&self) -> bool {
        !matches!(self, Cmd::Validate(_) | Cmd::Policy(_))
    }
}

/// Flat `--key value` overrides; flags win over `--config`, which wins over
/// `--preset`.
#[derive(Args, Clone)]
struct Flags {
    /// JSON config file with the same keys as the flags below
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named parameter profile (`paper`)
    #[arg(long)]
    preset: Option<String>,

    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    theta_bar: Option<f64>,
    #[arg(long)]
    sigma_v: Option<f64>,
    #[arg(long)]
    rho_lev: Option<f64>,
    #[arg(long)]
    lambda_mpr: Option<f64>,
    #[arg(long)]
    r: Option<f64>,

    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    xbar: Option<f64>,
    #[arg(long)]
    cbar: Option<f64>,
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    discount: Option<f64>,

    #[arg(long)]
    s0: Option<f64>,
    #[arg(long)]
    v0: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,

    #[arg(long, value_delimiter = ',')]
    x0_ratios: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    r_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    t_grid: Option<Vec<f64>>,
    #[arg(long)]
    shuffle: Option<ShuffleMode>,

    #[arg(long)]
    x0_high: Option<f64>,
    #[arg(long)]
    x0_low: Option<f64>,
    #[arg(long)]
    x0_ratio: Option<f64>,

    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    v: Option<f64>,
    #[arg(long)]
    x: Option<f64>,

    #[arg(long)]
    mc_paths: Option<usize>,
    #[arg(long)]
    mc_dt: Option<f64>,

    #[arg(long)]
    solver_n_time: Option<usize>,
    #[arg(long)]
    solver_n_state: Option<usize>,
    #[arg(long)]
    solver_y_min: Option<f64>,
    #[arg(long)]
    solver_y_max: Option<f64>,
    #[arg(long)]
    solver_tol: Option<f64>,
    #[arg(long)]
    solver_max_iters: Option<usize>,
    #[arg(long)]
    solver_damping: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,

    #[arg(long)]
    out_dir: Option<String>,
    #[arg(long)]
    format: Option<OutputFormat>,
}

impl Flags {
    fn to_partial(&self) -> PartialConfig {
        PartialConfig {
            kappa: self.kappa,
            theta_bar: self.theta_bar,
            sigma_v: self.sigma_v,
            rho_lev: self.rho_lev,
            lambda_mpr: self.lambda_mpr,
            r: self.r,
            gamma: self.gamma,
            xbar: self.xbar,
            cbar: self.cbar,
            w: self.w,
            discount: self.discount,
            s0: self.s0,
            v0: self.v0,
            dt: self.dt,
            n_paths: self.n_paths,
            seed: self.seed,
            x0_ratios: self.x0_ratios.clone(),
            r_grid: self.r_grid.clone(),
            t_grid: self.t_grid.clone(),
            shuffle: self.shuffle,
            x0_high: self.x0_high,
            x0_low: self.x0_low,
            x0_ratio: self.x0_ratio,
            t: self.t,
            t_end: self.t_end,
            v: self.v,
            x: self.x,
            mc_paths: self.mc_paths,
            mc_dt: self.mc_dt,
            solver_n_time: self.solver_n_time,
            solver_n_state: self.solver_n_state,
            solver_y_min: self.solver_y_min,
            solver_y_max: self.solver_y_max,
            solver_tol: self.solver_tol,
            solver_max_iters: self.solver_max_iters,
            solver_damping: self.solver_damping,
            lambda: self.lambda,
            out_dir: self.out_dir.clone(),
            format: self.format,
        }
    }
}

fn resolve_from_flags(flags: &Flags) -> Result<Resolved> {
    let file = match &flags.config {
        Some(path) => Some(PartialConfig::from_file(path)?),
        None => None,
    };
    let preset = match &flags.preset {
        Some(name) => Some(PartialConfig::preset(name)?),
        None => None,
    };
    config::resolve(&flags.to_partial(), file.as_ref(), preset.as_ref())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

struct Emitter {
    out_dir: PathBuf,
    json_mirror: bool,
}

impl Emitter {
    fn new(cfg: &RunConfig) -> Result<Self> {
        let out_dir = PathBuf::from(&cfg.out_dir);
        std::fs::create_dir_all(&out_dir)?;
        Ok(Emitter {
            out_dir,
            json_mirror: cfg.format == OutputFormat::Json,
        })
    }

    fn csv(
        &self,
        name: &str,
        write: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
    ) -> Result<()> {
        let path = self.out_dir.join(name);
        let mut out = BufWriter::new(File::create(&path)?);
        write(&mut out)?;
        out.flush()?;
        eprintln!("wrote {}", path.display());
        Ok(())
    }

    fn json_if_requested<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        if self.json_mirror {
            let path = self.out_dir.join(name);
            write_json(&path, value)?;
            eprintln!("wrote {}", path.display());
        }
        Ok(())
    }

    fn manifest(&self, subcommand: &str, res: &Resolved, started: Instant) -> Result<()> {
        let manifest = Manifest {
            subcommand: subcommand.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: res.config.seed,
            config: res.config.clone(),
            defaults_applied: res.defaults_applied.clone(),
            overridden: res.overridden.clone(),
            wall_time_secs: started.elapsed().as_secs_f64(),
        };
        write_json(&self.out_dir.join("manifest.json"), &manifest)
    }
}

fn ensure_config_valid(cfg: &RunConfig) -> Result<()> {
    let problems = cfg.validate();
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidParams(problems.join("; ")))
    }
}

fn run(cmd: &Cmd) -> Result<()> {
    let started = Instant::now();
    let res = resolve_from_flags(cmd.flags())?;
    let cfg = &res.config;

    if cmd.is_stochastic() && cfg.seed.is_none() {
        return Err(Error::Config(format!(
            "`{}` draws random numbers; pass an explicit --seed",
            cmd.name()
        )));
    }

    match cmd {
        Cmd::Validate(_) => {
            ensure_config_valid(cfg)?;
            println!("configuration ok");
            println!(
                "feller_margin = {} (2*kappa*theta_bar - sigma_v^2)",
                csvio::fmt_f(cfg.params.feller_margin())
            );
            Ok(())
        }
        Cmd::Policy(_) => {
            ensure_config_valid(cfg)?;
            let tau_point = cfg.t;
            let crra = crra_policy(tau_point, cfg.t_end, &cfg.params, cfg.spec.gamma)?;
            let theta_u = theta_u_closed_form(tau_point, cfg.v, cfg.t_end, &cfg.params, cfg.spec.gamma)?;
            #[derive(Serialize)]
            struct PolicyOut {
                t: f64,
                t_end: f64,
                x: f64,
                v: f64,
                crra: crate::policy::PolicyComponents,
                hara: Option<crate::policy::PolicyComponents>,
                theta_u: [f64; 2],
            }
            let hara = if cfg.spec.xbar > 0.0 {
                Some(hara_policy(tau_point, cfg.x, cfg.t_end, &cfg.params, &cfg.spec)?)
            } else {
                None
            };
            let out = PolicyOut {
                t: tau_point,
                t_end: cfg.t_end,
                x: cfg.x,
                v: cfg.v,
                crra,
                hara,
                theta_u,
            };
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(())
        }
        Cmd::Simulate(_) => {
            ensure_config_valid(cfg)?;
            let emit = Emitter::new(cfg)?;
            let seed = cfg.seed.unwrap();
            let path = simulate_heston_path(
                &cfg.params,
                cfg.s0,
                cfg.v0,
                cfg.t_end,
                cfg.dt,
                seed,
                0,
            )?;
            let x0 = if cfg.spec.xbar > 0.0 {
                cfg.x0_ratio * cfg.spec.xbar
            } else {
                cfg.x0_ratio
            };
            let wealth = evolve_wealth(&path, &cfg.params, &cfg.spec, x0, cfg.t_end)?;
            emit.csv("market_path.csv", |o| csvio::write_market_path(o, &path))?;
            emit.csv("wealth_path.csv", |o| csvio::write_wealth_path(o, &wealth))?;
            emit.manifest(cmd.name(), &res, started)
        }
        Cmd::Study(_) => {
            let emit = Emitter::new(cfg)?;
            let rows = run_study(&cfg.study_config())?;
            emit.csv("study.csv", |o| csvio::write_study(o, &rows))?;
            emit.json_if_requested("study.json", &rows)?;
            emit.manifest(cmd.name(), &res, started)
        }
        Cmd::Hysteresis(_) => {
            let emit = Emitter::new(cfg)?;
            let rows = hysteresis_study(&cfg.study_config())?;
            emit.csv("hysteresis.csv", |o| csvio::write_hysteresis(o, &rows))?;
            emit.json_if_requested("hysteresis.json", &rows)?;
            emit.manifest(cmd.name(), &res, started)
        }
        Cmd::Quantiles(_) => {
            let emit = Emitter::new(cfg)?;
            let rows = scaled_policy_quantiles(&cfg.study_config(), cfg.x0_ratio, &QUANTILE_LEVELS)?;
            emit.csv("quantiles.csv", |o| csvio::write_quantiles(o, &rows))?;
            emit.json_if_requested("quantiles.json", &rows)?;
            emit.manifest(cmd.name(), &res, started)
        }
        Cmd::RatioStudy(_) => {
            let emit = Emitter::new(cfg)?;
            let sc = cfg.study_config();
            let x0_high = if cfg.spec.xbar > 0.0 {
                cfg.x0_high * cfg.spec.xbar
            } else {
                cfg.x0_high
            };
            let x0_low = if cfg.spec.xbar > 0.0 {
                cfg.x0_low * cfg.spec.xbar
            } else {
                cfg.x0_low
            };
            let out = policy_ratio_study(&sc, x0_high, x0_low)?;
            emit.csv("ratio_study.csv", |o| {
                writeln!(o, "corr_S,corr_S_se,corr_RV,corr_RV_se,n_used,breaches")?;
                let f = |v: Option<f64>| v.map(csvio::fmt_f).unwrap_or_default();
                writeln!(
                    o,
                    "{},{},{},{},{},{}",
                    f(out.corr_s),
                    f(out.corr_s_se),
                    f(out.corr_rv),
                    f(out.corr_rv_se),
                    out.n_used,
                    out.breaches
                )?;
                Ok(())
            })?;
            emit.json_if_requested("ratio_study.json", &out)?;
            emit.manifest(cmd.name(), &res, started)
        }
        Cmd::McComponents(_) => {
            ensure_config_valid(cfg)?;
            let emit = Emitter::new(cfg)?;
            let model = HestonModel::new(cfg.params, cfg.v0);
            let src = ClosedFormHestonThetaU::new(cfg.params, cfg.spec.gamma, cfg.t_end)?;
            let out = mc_policy_components(
                &model,
                &src,
                &cfg.spec,
                cfg.t,
                cfg.v,
                cfg.x,
                cfg.t_end,
                &cfg.mc_config(),
            )?;
            let closed = if cfg.spec.xbar > 0.0 {
                hara_policy(cfg.t, cfg.x, cfg.t_end, &cfg.params, &cfg.spec)?
            } else {
                crra_policy(cfg.t, cfg.t_end, &cfg.params, cfg.spec.gamma)?
            };
            #[derive(Serialize)]
            struct McOut {
                mc: crate::malliavin::McComponents,
                closed_form: crate::policy::PolicyComponents,
            }
            let payload = McOut {
                mc: out,
                closed_form: closed,
            };
            println!("{}", serde_json::to_string_pretty(&payload)?);
            write_json(&emit.out_dir.join("mc_components.json"), &payload)?;
            emit.manifest(cmd.name(), &res, started)
        }
        Cmd::SolveThetaU(_) => {
            ensure_config_valid(cfg)?;
            let emit = Emitter::new(cfg)?;
            let model = HestonModel::new(cfg.params, cfg.v0);
            let solved = solve_theta_u(
                &model,
                &cfg.spec,
                cfg.t,
                cfg.t_end,
                &cfg.solver,
                &cfg.mc_config(),
            )?;
            emit.csv("theta_u.csv", |o| csvio::write_theta_u_field(o, &solved.field))?;

            // residual report; for terminal-wealth investors under the
            // constant rate the field coincides with the floor-free closed
            // form, so compare against it
            let mut max_err: Option<f64> = None;
            if cfg.spec.w == 0.0 {
                let mut worst: f64 = 0.0;
                for (k, &tk) in solved.field.t_grid.iter().enumerate() {
                    for (j, &yj) in solved.field.y_grid.iter().enumerate() {
                        let exact =
                            theta_u_closed_form(tk, yj, cfg.t_end, &cfg.params, cfg.spec.gamma)?;
                        for i in 0..2 {
                            worst = worst.max((solved.field.values[k][j][i] - exact[i]).abs());
                        }
                    }
                }
                max_err = Some(worst);
            }
            let src = ClosedFormHestonThetaU::new(cfg.params, cfg.spec.gamma, cfg.t_end)?;
            let mid = cfg.t + 0.5 * (cfg.t_end - cfg.t);
            let report = residual_diagnostics(
                &model,
                &src,
                &cfg.spec,
                cfg.solver.lambda,
                &[(cfg.t, cfg.v0), (mid, cfg.v0)],
                cfg.t,
                cfg.v0,
                cfg.t_end,
                &cfg.mc_config(),
            )?;
            #[derive(Serialize)]
            struct SolveOut<'a> {
                iters: &'a [usize],
                max_abs_error_vs_closed_form: Option<f64>,
                diagnostics: crate::malliavin::DiagnosticsReport,
            }
            let payload = SolveOut {
                iters: &solved.iters,
                max_abs_error_vs_closed_form: max_err,
                diagnostics: report,
            };
            write_json(&emit.out_dir.join("theta_u_report.json"), &payload)?;
            eprintln!("wrote {}", emit.out_dir.join("theta_u_report.json").display());
            emit.manifest(cmd.name(), &res, started)
        }
    }
}

/// Parse `argv`, dispatch, and map errors to the documented exit codes.
pub fn main_with_args<I, S>(argv: I) -> u8
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // help/version are successful exits
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    crate::init_threads();
    match run(&cli.cmd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NoConvergence { .. }
                | Error::Bracketing(_)
                | Error::NonFinite(_)
                | Error::WealthBelowFloor { .. } => 2,
                _ => 1,
            }
        }
    }
}
