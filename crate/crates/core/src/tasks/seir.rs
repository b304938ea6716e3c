//! Stochastic SEIR epidemic simulated exactly with the Gillespie algorithm.

use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::outer_loop::UserFunction;
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::stats::{mean, sample_variance};

/// Simulator settings. The infection rate itself is the uncertain input and
/// ranges over `[rate_lower, rate_upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeirConfig {
    pub population: u32,
    pub initial_exposed: u32,
    pub initial_infectious: u32,
    /// E → I rate per exposed individual.
    pub incubation_rate: f64,
    /// I → R rate per infectious individual.
    pub recovery_rate: f64,
    pub horizon: f64,
    pub rate_lower: f64,
    pub rate_upper: f64,
    /// Gillespie runs averaged per integrand evaluation.
    pub replications: usize,
}

impl Default for SeirConfig {
    fn default() -> Self {
        Self {
            population: 400,
            initial_exposed: 5,
            initial_infectious: 1,
            incubation_rate: 12.0,
            recovery_rate: 6.0,
            horizon: 10.0,
            rate_lower: 9.0,
            rate_upper: 21.0,
            replications: 300,
        }
    }
}

impl SeirConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("invalid SEIR config: {m}")));
        if self.initial_exposed as u64 + self.initial_infectious as u64 > self.population as u64 {
            return bad("initial exposed + infectious exceed the population");
        }
        for (name, v) in [("incubation_rate", self.incubation_rate), ("recovery_rate", self.recovery_rate), ("horizon", self.horizon)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if !(self.rate_lower > 0.0 && self.rate_lower < self.rate_upper && self.rate_upper.is_finite()) {
            return bad("need 0 < rate_lower < rate_upper");
        }
        if self.replications < 2 {
            return bad("replications must be at least 2");
        }
        Ok(())
    }

    pub fn rate_bounds(&self) -> (f64, f64) {
        (self.rate_lower, self.rate_upper)
    }
}

/// Compartment counts `[S, E, I, R]`.
pub type Compartments = [u32; 4];

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Starts at 0 with the initial state; one entry per event afterwards.
    pub times: Vec<f64>,
    pub states: Vec<Compartments>,
}

impl Trajectory {
    /// Peak infectious count and the earliest time it is reached.
    pub fn peak(&self) -> (u32, f64) {
        let mut best = (self.states[0][2], self.times[0]);
        for (t, s) in self.times.iter().zip(&self.states) {
            if s[2] > best.0 {
                best = (s[2], *t);
            }
        }
        best
    }
}

fn simulate(cfg: &SeirConfig, rate: f64, rng: &mut Rng, mut on_event: impl FnMut(f64, Compartments)) {
    let n = cfg.population as f64;
    let mut s = [
        cfg.population - cfg.initial_exposed - cfg.initial_infectious,
        cfg.initial_exposed,
        cfg.initial_infectious,
        0,
    ];
    let mut t = 0.0;
    on_event(t, s);
    loop {
        let a1 = if n > 0.0 { rate * s[0] as f64 * s[2] as f64 / n } else { 0.0 };
        let a2 = cfg.incubation_rate * s[1] as f64;
        let a3 = cfg.recovery_rate * s[2] as f64;
        let a0 = a1 + a2 + a3;
        if a0 <= 0.0 {
            break;
        }
        let mut u: f64 = rng.random();
        while u == 0.0 {
            u = rng.random();
        }
        t += -u.ln() / a0;
        if t > cfg.horizon {
            break;
        }
        let pick = rng.random::<f64>() * a0;
        let (from, to) = if pick < a1 {
            (0, 1)
        } else if pick < a1 + a2 {
            (1, 2)
        } else {
            (2, 3)
        };
        s[from] -= 1;
        s[to] += 1;
        on_event(t, s);
    }
}

/// One exact stochastic trajectory at infection rate `rate`.
pub fn gillespie_seir(cfg: &SeirConfig, rate: f64, seed: u64) -> Result<Trajectory> {
    cfg.validate()?;
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::Config(format!("infection rate must be positive, got {rate}")));
    }
    let mut traj = Trajectory { times: Vec::new(), states: Vec::new() };
    simulate(cfg, rate, &mut rng_from_seed(seed), |t, s| {
        traj.times.push(t);
        traj.states.push(s);
    });
    Ok(traj)
}

fn peak_of_run(cfg: &SeirConfig, rate: f64, seed: u64) -> (f64, f64) {
    let mut best = (0u32, 0.0);
    let mut first = true;
    simulate(cfg, rate, &mut rng_from_seed(seed), |t, s| {
        if first || s[2] > best.0 {
            best = (s[2], t);
            first = false;
        }
    });
    (best.0 as f64, best.1)
}

/// Peak height and time averaged over replications, with their sample
/// variances (the variance of the mean is `variance / replications`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakStatistics {
    pub height_mean: f64,
    pub height_variance: f64,
    pub time_mean: f64,
    pub time_variance: f64,
    pub replications: usize,
}

pub fn peak_statistics(cfg: &SeirConfig, rate: f64, replications: usize, seed: u64) -> Result<PeakStatistics> {
    cfg.validate()?;
    if replications < 2 {
        return Err(Error::Config("peak statistics need at least 2 replications".into()));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::Config(format!("infection rate must be positive, got {rate}")));
    }
    let runs: Vec<(f64, f64)> =
        (0..replications).into_par_iter().map(|r| peak_of_run(cfg, rate, derive_seed(seed, r as u64))).collect();
    let heights: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let times: Vec<f64> = runs.iter().map(|r| r.1).collect();
    Ok(PeakStatistics {
        height_mean: mean(&heights),
        height_variance: sample_variance(&heights),
        time_mean: mean(&times),
        time_variance: sample_variance(&times),
        replications,
    })
}

/// Plain Monte Carlo estimate of the expected peak under a uniform
/// infection rate: one trajectory per rate draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloPeak {
    pub height_mean: f64,
    pub height_stderr: f64,
    pub time_mean: f64,
    pub time_stderr: f64,
    pub draws: usize,
}

pub fn monte_carlo_peak(cfg: &SeirConfig, draws: usize, seed: u64) -> Result<MonteCarloPeak> {
    cfg.validate()?;
    if draws < 2 {
        return Err(Error::Config("Monte Carlo needs at least 2 draws".into()));
    }
    let runs: Vec<(f64, f64)> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let s = derive_seed(seed, i as u64);
            let u: f64 = rng_from_seed(derive_seed(s, 0)).random();
            let rate = cfg.rate_lower + u * (cfg.rate_upper - cfg.rate_lower);
            peak_of_run(cfg, rate, derive_seed(s, 1))
        })
        .collect();
    let heights: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let times: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let n = draws as f64;
    Ok(MonteCarloPeak {
        height_mean: mean(&heights),
        height_stderr: (sample_variance(&heights) / n).sqrt(),
        time_mean: mean(&times),
        time_stderr: (sample_variance(&times) / n).sqrt(),
        draws,
    })
}

/// The simulator as a loop user function of the infection rate. Outputs
/// `[height mean, height mean variance, time mean, time mean variance]`;
/// each evaluation is seeded from the rate itself, so results do not depend
/// on call order.
#[derive(Debug, Clone)]
pub struct SeirPeakFunction {
    config: SeirConfig,
    seed: u64,
}

impl SeirPeakFunction {
    pub fn new(config: SeirConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, seed })
    }

    pub fn config(&self) -> &SeirConfig {
        &self.config
    }
}

impl UserFunction for SeirPeakFunction {
    fn out_dim(&self) -> usize {
        4
    }

    fn evaluate(&mut self, x: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, String> {
        let r = self.config.replications as f64;
        let mut out = DMatrix::zeros(x.nrows(), 4);
        for i in 0..x.nrows() {
            let rate = x[(i, 0)];
            let st = peak_statistics(&self.config, rate, self.config.replications, derive_seed(self.seed, rate.to_bits()))
                .map_err(|e| e.to_string())?;
            out[(i, 0)] = st.height_mean;
            out[(i, 1)] = st.height_variance / r;
            out[(i, 2)] = st.time_mean;
            out[(i, 3)] = st.time_variance / r;
        }
        Ok(out)
    }
}
