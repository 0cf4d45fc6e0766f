//! Miniature version of the wealth-grid performance study: how the floored
//! investor's realized statistics vary with initial wealth, with the
//! floor-free investor as the X0 -> infinity reference.
//!
//! Uses fewer paths and a shorter horizon than the full batch run so it
//! finishes in seconds; drive `portalloc study` for the real thing.
//!
//! Run: `cargo run --release --example performance_study`

use portalloc::experiments::{run_study, StudyConfig};

fn main() -> portalloc::Result<()> {
    portalloc::init_threads();
    let mut cfg = StudyConfig::paper_defaults(1);
    cfg.n_paths = 500;
    cfg.t_grid = vec![5.0];

    let rows = run_study(&cfg)?;
    println!(
        "{:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "X0/floor", "mean%", "vol%", "sharpe", "md%", "breaches"
    );
    for row in &rows {
        let s = &row.stats;
        println!(
            "{:>9} {:>9.2} {:>9.2} {:>9.3} {:>9.2} {:>9}",
            if row.x0_ratio.is_infinite() {
                "inf".to_string()
            } else {
                format!("{:.1}", row.x0_ratio)
            },
            100.0 * s.mean,
            100.0 * s.sd,
            s.sharpe,
            100.0 * s.md,
            s.breaches
        );
    }
    println!("\n(every statistic is a per-path value averaged across paths)");
    Ok(())
}
