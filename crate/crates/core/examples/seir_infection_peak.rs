//! Expected infection-peak height and time of a stochastic SEIR epidemic
//! whose infection rate is uncertain, by Bayesian quadrature, checked
//! against plain Monte Carlo over the same simulator.

use std::time::Instant;

use outerloop::quadrature::{estimate_seir_peak, BqConfig};
use outerloop::tasks::seir::monte_carlo_peak;
use outerloop::tasks::SeirConfig;

fn main() -> outerloop::Result<()> {
    let cfg = SeirConfig::default();
    let start = Instant::now();
    let est = estimate_seir_peak(&cfg, &BqConfig::default(), 1)?;
    println!(
        "BQ ({} nodes, {:.1?}): height {:.2} ± {:.2}, time {:.3} ± {:.3}",
        est.height_state.len(),
        start.elapsed(),
        est.height.mean,
        est.height.std(),
        est.time.mean,
        est.time.std()
    );

    let mc = monte_carlo_peak(&cfg, 2000, 2)?;
    println!(
        "MC ({} draws): height {:.2} ± {:.2}, time {:.3} ± {:.3}",
        mc.draws, mc.height_mean, mc.height_stderr, mc.time_mean, mc.time_stderr
    );
    Ok(())
}
