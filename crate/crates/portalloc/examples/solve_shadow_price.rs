//! Solve the fixed-point equation for the shadow price of market
//! incompleteness on a small (t, V) grid and compare with the closed form.
//!
//! The solver sweeps backward from the horizon (where the field is zero),
//! estimating each node by Monte Carlo with the current field injected, and
//! damping the update until the grid stops moving.
//!
//! Run: `cargo run --release --example solve_shadow_price`

use portalloc::malliavin::{solve_theta_u, McConfig, SolverConfig};
use portalloc::market::HestonParams;
use portalloc::model::HestonModel;
use portalloc::policy::theta_u_closed_form;
use portalloc::utility::UtilitySpec;

fn main() -> portalloc::Result<()> {
    portalloc::init_threads();
    let params = HestonParams::preset_paper();
    let spec = UtilitySpec::crra(4.0);
    let t_end = 1.0;

    let cfg = SolverConfig {
        n_time: 10,
        n_state: 7,
        y_min: 0.0,
        y_max: 4.0 * params.theta_bar,
        ..SolverConfig::for_heston(params.theta_bar)
    };
    let mc = McConfig {
        n_paths: 1024,
        dt: 1.0 / 252.0,
        seed: 11,
    };

    let model = HestonModel::new(params, params.theta_bar);
    let solved = solve_theta_u(&model, &spec, 0.0, t_end, &cfg, &mc)?;
    println!("iterations per time slice (horizon first): {:?}\n", solved.iters);

    println!("{:>6} {:>9} {:>12} {:>12} {:>10}", "t", "V", "solved", "exact", "3*se");
    let mut worst: f64 = 0.0;
    for (k, &t) in solved.field.t_grid.iter().enumerate() {
        for (j, &v) in solved.field.y_grid.iter().enumerate() {
            let exact = theta_u_closed_form(t, v, t_end, &params, spec.gamma)?;
            let err = (solved.field.values[k][j][1] - exact[1]).abs();
            worst = worst.max(err);
            if j % 3 == 0 && k % 3 == 0 {
                println!(
                    "{t:>6.2} {v:>9.5} {:>12.6} {:>12.6} {:>10.6}",
                    solved.field.values[k][j][1],
                    exact[1],
                    3.0 * solved.se[k][j][1]
                );
            }
        }
    }
    println!("\nmax |error| over the grid: {worst:.6}");
    Ok(())
}
