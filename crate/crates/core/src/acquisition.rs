//! Acquisition functions as a trait, and the multi-start optimizer that
//! maximizes them over a [`ParameterSpace`].

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::optim::{minimize_bounded, LbfgsOptions};
use crate::rng::derive_seed;
use crate::space::ParameterSpace;

/// A scalar utility over the encoded input space; larger is better.
pub trait Acquisition: Sync {
    /// Values at each row of `x`.
    fn evaluate(&self, x: &DMatrix<f64>) -> Result<DVector<f64>>;

    fn has_gradients(&self) -> bool {
        false
    }

    fn evaluate_with_gradient(&self, _x: &[f64]) -> Result<(f64, DVector<f64>)> {
        Err(Error::Unsupported("acquisition gradients"))
    }
}

/// Wraps a plain closure evaluated row by row (no gradients).
pub struct FnAcquisition<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> Acquisition for FnAcquisition<F> {
    fn evaluate(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(DVector::from_iterator(
            x.nrows(),
            (0..x.nrows()).map(|i| (self.0)(&x.row(i).iter().copied().collect::<Vec<_>>())),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionOptimizerConfig {
    /// Best probes refined by gradient ascent.
    pub restarts: usize,
    /// Uniform random probes evaluated first.
    pub raw_samples: usize,
    /// Iteration budget of each gradient refinement.
    pub gradient_steps: usize,
}

impl Default for AcquisitionOptimizerConfig {
    fn default() -> Self {
        Self { restarts: 5, raw_samples: 1000, gradient_steps: 100 }
    }
}

impl AcquisitionOptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Config("acquisition optimizer needs at least one restart".into()));
        }
        if self.raw_samples < self.restarts {
            return Err(Error::Config(format!(
                "raw_samples ({}) must be at least restarts ({})",
                self.raw_samples, self.restarts
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionMaximum {
    pub x: DVector<f64>,
    pub value: f64,
}

const CHUNK: usize = 128;

/// Evaluates `acq` over the rows of `x` in parallel chunks; results keep row order.
pub fn evaluate_parallel(acq: &dyn Acquisition, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = x.nrows();
    let chunks: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let parts: Vec<Result<DVector<f64>>> = chunks
        .par_iter()
        .map(|&start| {
            let len = CHUNK.min(n - start);
            acq.evaluate(&x.rows(start, len).into_owned())
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?.iter().copied());
    }
    Ok(DVector::from_vec(out))
}

/// Maximizes `acq` over `space`: uniform probes, then gradient refinement
/// of the best `restarts` probes when gradients are available. The result
/// is always a member of the space and never worse than the best probe.
/// Ties resolve to the earliest candidate.
pub fn optimize_acquisition(
    acq: &dyn Acquisition,
    space: &ParameterSpace,
    cfg: &AcquisitionOptimizerConfig,
    seed: u64,
) -> Result<AcquisitionMaximum> {
    cfg.validate()?;
    let probes = space.sample_uniform(cfg.raw_samples, derive_seed(seed, 0));
    let values = evaluate_parallel(acq, &probes)?;

    let mut order: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_finite()).collect();
    if order.is_empty() {
        return Err(Error::OptimizationFailure("acquisition is non-finite at every probe".into()));
    }
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

    let mut best = AcquisitionMaximum { x: probes.row(order[0]).transpose(), value: values[order[0]] };
    if !acq.has_gradients() || cfg.gradient_steps == 0 {
        return Ok(best);
    }

    let bounds = space.encoded_bounds();
    let opts = LbfgsOptions { max_iters: cfg.gradient_steps, gradient_tolerance: 1e-9, ..Default::default() };
    let refined: Vec<Option<AcquisitionMaximum>> = order
        .iter()
        .take(cfg.restarts)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&&i| {
            let start = probes.row(i).transpose();
            let res = minimize_bounded(
                |x| match acq.evaluate_with_gradient(x.as_slice()) {
                    Ok((v, g)) if v.is_finite() && g.iter().all(|c| c.is_finite()) => (-v, -g),
                    _ => (f64::INFINITY, DVector::zeros(x.len())),
                },
                &start,
                &bounds,
                opts,
            );
            let x = space.round_to_space(res.x.as_slice()).ok()?;
            let value = acq.evaluate(&DMatrix::from_row_slice(1, x.len(), x.as_slice())).ok()?[0];
            value.is_finite().then_some(AcquisitionMaximum { x, value })
        })
        .collect();

    for cand in refined.into_iter().flatten() {
        if cand.value > best.value {
            best = cand;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{ContinuousParameter, DiscreteParameter, Parameter};

    struct Parabola;
    impl Acquisition for Parabola {
        fn evaluate(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
            Ok(x.column(0).map(|v| -(v - 0.3).powi(2)))
        }
        fn has_gradients(&self) -> bool {
            true
        }
        fn evaluate_with_gradient(&self, x: &[f64]) -> Result<(f64, DVector<f64>)> {
            Ok((-(x[0] - 0.3).powi(2), DVector::from_element(1, -2.0 * (x[0] - 0.3))))
        }
    }

    #[test]
    fn parabola_argmax() {
        let space = ParameterSpace::continuous_box(&[(0.0, 1.0)]).unwrap();
        let m = optimize_acquisition(&Parabola, &space, &Default::default(), 1).unwrap();
        assert!((m.x[0] - 0.3).abs() < 1e-3, "{}", m.x[0]);
    }

    #[test]
    fn never_below_best_probe() {
        let space = ParameterSpace::continuous_box(&[(0.0, 1.0)]).unwrap();
        let cfg = AcquisitionOptimizerConfig::default();
        let m = optimize_acquisition(&Parabola, &space, &cfg, 5).unwrap();
        let probes = space.sample_uniform(cfg.raw_samples, derive_seed(5, 0));
        let best_probe = Parabola.evaluate(&probes).unwrap().max();
        assert!(m.value >= best_probe);
    }

    #[test]
    fn constant_acquisition() {
        let space = ParameterSpace::continuous_box(&[(0.0, 1.0), (2.0, 3.0)]).unwrap();
        let m = optimize_acquisition(&FnAcquisition(|_: &[f64]| 4.0), &space, &Default::default(), 0).unwrap();
        assert_eq!(m.value, 4.0);
        assert!(space.contains(m.x.as_slice()));
    }

    #[test]
    fn discrete_coordinates_stay_discrete() {
        let space = ParameterSpace::new(vec![
            Parameter::Continuous(ContinuousParameter::new("a", 0.0, 1.0).unwrap()),
            Parameter::Discrete(DiscreteParameter::new("b", vec![0.0, 1.0, 5.0]).unwrap()),
        ])
        .unwrap();
        struct Smooth;
        impl Acquisition for Smooth {
            fn evaluate(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
                Ok(DVector::from_iterator(x.nrows(), x.row_iter().map(|r| -(r[0] - 0.5).powi(2) - (r[1] - 2.0).powi(2))))
            }
            fn has_gradients(&self) -> bool {
                true
            }
            fn evaluate_with_gradient(&self, x: &[f64]) -> Result<(f64, DVector<f64>)> {
                let v = -(x[0] - 0.5).powi(2) - (x[1] - 2.0).powi(2);
                Ok((v, DVector::from_vec(vec![-2.0 * (x[0] - 0.5), -2.0 * (x[1] - 2.0)])))
            }
        }
        let m = optimize_acquisition(&Smooth, &space, &Default::default(), 3).unwrap();
        assert!([0.0, 1.0, 5.0].contains(&m.x[1]));
        assert_eq!(m.x[1], 1.0);
    }

    #[test]
    fn all_non_finite_fails() {
        let space = ParameterSpace::continuous_box(&[(0.0, 1.0)]).unwrap();
        let r = optimize_acquisition(&FnAcquisition(|_: &[f64]| f64::NAN), &space, &Default::default(), 0);
        assert!(matches!(r, Err(Error::OptimizationFailure(_))));
    }

    #[test]
    fn config_validation() {
        assert!(AcquisitionOptimizerConfig { restarts: 0, ..Default::default() }.validate().is_err());
        assert!(AcquisitionOptimizerConfig { restarts: 10, raw_samples: 5, gradient_steps: 1 }.validate().is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let space = ParameterSpace::continuous_box(&[(0.0, 1.0)]).unwrap();
        let a = optimize_acquisition(&Parabola, &space, &Default::default(), 11).unwrap();
        let b = optimize_acquisition(&Parabola, &space, &Default::default(), 11).unwrap();
        assert_eq!(a, b);
    }
}
