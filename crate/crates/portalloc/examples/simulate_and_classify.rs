//! Simulate a market path, evolve the floored investor's wealth along it,
//! and label bull/bear regimes from the price series.
//!
//! Run: `cargo run --release --example simulate_and_classify`

use portalloc::market::{simulate_heston_path, HestonParams};
use portalloc::policy::evolve_wealth;
use portalloc::stats::{classify_regimes, performance_stats};
use portalloc::utility::UtilitySpec;

fn main() -> portalloc::Result<()> {
    let params = HestonParams::preset_paper();
    let t_end = 10.0;
    let dt = 1.0 / 252.0;

    let path = simulate_heston_path(&params, 1.0, params.theta_bar, t_end, dt, 42, 0)?;
    println!(
        "simulated {} steps; terminal S = {:.4}, terminal V = {:.6}",
        path.n_steps(),
        path.s.last().unwrap(),
        path.v.last().unwrap()
    );

    let spec = UtilitySpec::hara_terminal(4.0, 1.0);
    let wealth = evolve_wealth(&path, &params, &spec, 2.0, t_end)?;
    let stats = performance_stats(&wealth.x, dt, params.r)?;
    println!(
        "wealth path: mean excess {:.2}%, vol {:.2}%, max drawdown {:.2}%, breached = {}",
        100.0 * stats.mean,
        100.0 * stats.sd,
        100.0 * stats.max_drawdown,
        wealth.breached()
    );

    let segments = classify_regimes(&path.s)?;
    println!("\nregimes (-15% off the high flips to bear, +20% off the low to bull):");
    for seg in &segments {
        println!(
            "  {:?}  steps {:5} .. {:5}  ({:.1} years)",
            seg.label,
            seg.start,
            seg.end,
            (seg.end - seg.start) as f64 * dt
        );
    }
    Ok(())
}
