//! Closed-form optimal policies under the calibrated stochastic-volatility
//! market: the floor-free (CRRA) weight, the floored (HARA) weight across
//! wealth levels, and how the hedge demand decays with the horizon.
//!
//! Run: `cargo run --example closed_form_policy`

use portalloc::market::HestonParams;
use portalloc::policy::{crra_policy, hara_policy, theta_u_closed_form};
use portalloc::utility::UtilitySpec;

fn main() -> portalloc::Result<()> {
    let params = HestonParams::preset_paper();
    let gamma = 4.0;
    let t_end = 10.0;

    let crra = crra_policy(0.0, t_end, &params, gamma)?;
    println!("floor-free investor, T = {t_end}:");
    println!("  myopic demand     {:+.6}", crra.mv);
    println!("  volatility hedge  {:+.6}", crra.h_hedge);
    println!("  total weight      {:+.6}\n", crra.total);

    let spec = UtilitySpec::hara_terminal(gamma, 1.0);
    println!("floored investor (floor = 1), weight by initial wealth:");
    for x in [1.5, 2.0, 3.0, 5.0, 10.0, 100.0] {
        let pol = hara_policy(0.0, x, t_end, &params, &spec)?;
        println!(
            "  X/floor = {x:6.1}   pi = {:.6}   (myopic {:.6}, hedge {:.6})",
            pol.total, pol.mv, pol.h_hedge
        );
    }

    println!("\nshadow price of incompleteness at V = long-run variance:");
    for tau in [0.25, 1.0, 2.0, 5.0, 10.0] {
        let th = theta_u_closed_form(t_end - tau, params.theta_bar, t_end, &params, gamma)?;
        println!("  horizon {tau:5.2}y   theta_u = [{:.6}, {:.6}]", th[0], th[1]);
    }
    Ok(())
}
