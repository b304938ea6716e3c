//! Variance-based global sensitivity analysis (first-order and total Sobol
//! indices) from a Saltelli design, on a function or on an emulator's mean.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::rng::{derive_seed, rng_from_seed};
use crate::space::ParameterSpace;

pub const DEFAULT_BOOTSTRAP: usize = 50;

/// `A`, `B` and the `d` mixed matrices `AB_i` (`A` with column `i` from `B`).
#[derive(Debug, Clone)]
pub struct SaltelliSample {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub ab: Vec<DMatrix<f64>>,
}

impl SaltelliSample {
    pub fn n_base(&self) -> usize {
        self.a.nrows()
    }

    pub fn evaluation_count(&self) -> usize {
        self.n_base() * (self.ab.len() + 2)
    }

    /// All rows in evaluation order: `A`, `B`, `AB_1`, …, `AB_d`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (n, d) = self.a.shape();
        let mut out = DMatrix::zeros(self.evaluation_count(), d);
        for (k, m) in [&self.a, &self.b].into_iter().chain(&self.ab).enumerate() {
            out.rows_mut(k * n, n).copy_from(m);
        }
        out
    }

    /// Splits evaluations of [`SaltelliSample::stacked`] back into blocks.
    pub fn split(&self, values: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, Vec<DVector<f64>>)> {
        if values.len() != self.evaluation_count() {
            return Err(Error::DimensionMismatch { expected: self.evaluation_count(), got: values.len() });
        }
        let n = self.n_base();
        let block = |k: usize| values.rows(k * n, n).into_owned();
        Ok((block(0), block(1), (0..self.ab.len()).map(|i| block(i + 2)).collect()))
    }
}

pub fn saltelli_sample(space: &ParameterSpace, n_base: usize, seed: u64) -> Result<SaltelliSample> {
    if !space.is_continuous() {
        return Err(Error::UnsupportedDesign("Saltelli sampling needs an all-continuous space".into()));
    }
    if n_base < 2 {
        return Err(Error::Config(format!("n_base must be at least 2, got {n_base}")));
    }
    let a = space.sample_uniform(n_base, derive_seed(seed, 0));
    let b = space.sample_uniform(n_base, derive_seed(seed, 1));
    let ab = (0..space.encoded_dim())
        .map(|i| {
            let mut m = a.clone();
            m.set_column(i, &b.column(i));
            m
        })
        .collect();
    Ok(SaltelliSample { a, b, ab })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SobolResult {
    pub first_order: Vec<f64>,
    pub total: Vec<f64>,
    pub total_variance: f64,
    /// Function evaluations used.
    pub sample_count: usize,
    /// Bootstrap standard errors, when computed.
    pub first_order_std: Option<Vec<f64>>,
    pub total_std: Option<Vec<f64>>,
}

fn indices_at(fa: &[f64], fb: &[f64], fab: &[Vec<f64>], rows: &[usize]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let n = rows.len() as f64;
    // centering makes the estimators exactly invariant to output shifts
    let c = rows.iter().map(|&r| fa[r] + fb[r]).sum::<f64>() / (2.0 * n);
    let var = rows.iter().map(|&r| (fa[r] - c).powi(2) + (fb[r] - c).powi(2)).sum::<f64>() / (2.0 * n - 1.0);
    let spread = rows.iter().map(|&r| (fa[r] - c).abs().max((fb[r] - c).abs())).fold(0.0, f64::max);
    if !(var > 1e-24 * spread.max(c.abs()).max(1e-300).powi(2)) {
        return Err(Error::DegenerateVariance);
    }
    let mut first = Vec::with_capacity(fab.len());
    let mut total = Vec::with_capacity(fab.len());
    for f in fab {
        let vi = rows.iter().map(|&r| (fb[r] - c) * (f[r] - fa[r])).sum::<f64>() / n;
        let vti = 0.5 * rows.iter().map(|&r| (fa[r] - f[r]).powi(2)).sum::<f64>() / n;
        first.push(vi / var);
        total.push(vti / var);
    }
    Ok((first, total, var))
}

/// First-order (Saltelli) and total (Jansen) estimators. Negative
/// estimates are returned as they are.
pub fn sobol_indices(f_a: &DVector<f64>, f_b: &DVector<f64>, f_ab: &[DVector<f64>]) -> Result<SobolResult> {
    let n = f_a.len();
    if f_b.len() != n || f_ab.iter().any(|f| f.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: f_b.len() });
    }
    if n < 2 {
        return Err(Error::Config("Sobol estimation needs at least 2 base samples".into()));
    }
    let fab: Vec<Vec<f64>> = f_ab.iter().map(|f| f.iter().copied().collect()).collect();
    let rows: Vec<usize> = (0..n).collect();
    let (first, total, var) = indices_at(f_a.as_slice(), f_b.as_slice(), &fab, &rows)?;
    Ok(SobolResult {
        first_order: first,
        total,
        total_variance: var,
        sample_count: n * (f_ab.len() + 2),
        first_order_std: None,
        total_std: None,
    })
}

/// [`sobol_indices`] plus bootstrap standard errors over `resamples`
/// resamplings of the base rows.
pub fn sobol_with_bootstrap(
    f_a: &DVector<f64>,
    f_b: &DVector<f64>,
    f_ab: &[DVector<f64>],
    resamples: usize,
    seed: u64,
) -> Result<SobolResult> {
    let mut result = sobol_indices(f_a, f_b, f_ab)?;
    if resamples < 2 {
        return Ok(result);
    }
    let n = f_a.len();
    let fab: Vec<Vec<f64>> = f_ab.iter().map(|f| f.iter().copied().collect()).collect();
    let draws: Vec<(Vec<f64>, Vec<f64>)> = (0..resamples)
        .into_par_iter()
        .filter_map(|b| {
            let mut rng = rng_from_seed(derive_seed(seed, b as u64));
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            indices_at(f_a.as_slice(), f_b.as_slice(), &fab, &rows).ok().map(|(s, t, _)| (s, t))
        })
        .collect();
    let std_of = |pick: &dyn Fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>| -> Vec<f64> {
        (0..f_ab.len())
            .map(|i| {
                let v: Vec<f64> = draws.iter().map(|d| pick(d)[i]).collect();
                crate::stats::sample_variance(&v).sqrt()
            })
            .collect()
    };
    result.first_order_std = Some(std_of(&|d| &d.0));
    result.total_std = Some(std_of(&|d| &d.1));
    Ok(result)
}

/// Sobol indices of `f` over `space` from `n_base·(d+2)` evaluations.
pub fn function_sobol<F>(f: F, space: &ParameterSpace, n_base: usize, seed: u64) -> Result<SobolResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let sample = saltelli_sample(space, n_base, seed)?;
    let x = sample.stacked();
    let values: Vec<f64> = (0..x.nrows())
        .into_par_iter()
        .map(|i| f(&x.row(i).iter().copied().collect::<Vec<_>>()))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("function value in Sobol sample".into()));
    }
    let (fa, fb, fab) = sample.split(&DVector::from_vec(values))?;
    sobol_with_bootstrap(&fa, &fb, &fab, DEFAULT_BOOTSTRAP, derive_seed(seed, 2))
}

const PREDICT_CHUNK: usize = 2048;

/// Sobol indices of a trained model's posterior mean; the simulator is
/// never called.
pub fn emulator_sobol<M: Model + ?Sized>(model: &M, space: &ParameterSpace, n_base: usize, seed: u64) -> Result<SobolResult> {
    let sample = saltelli_sample(space, n_base, seed)?;
    let x = sample.stacked();
    let n = x.nrows();
    let starts: Vec<usize> = (0..n).step_by(PREDICT_CHUNK).collect();
    let parts: Vec<Result<DVector<f64>>> = starts
        .par_iter()
        .map(|&s| model.predict(&x.rows(s, PREDICT_CHUNK.min(n - s)).into_owned()).map(|p| p.mean))
        .collect();
    let mut values = Vec::with_capacity(n);
    for p in parts {
        values.extend(p?.iter().copied());
    }
    let (fa, fb, fab) = sample.split(&DVector::from_vec(values))?;
    sobol_with_bootstrap(&fa, &fb, &fab, DEFAULT_BOOTSTRAP, derive_seed(seed, 2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::GpModel;
    use crate::tasks::objectives::{additive, ishigami, ishigami_first_order, linear_x1};
    use std::f64::consts::PI;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn unit(d: usize) -> ParameterSpace {
        ParameterSpace::continuous_box(&vec![(0.0, 1.0); d]).unwrap()
    }

    fn ishigami_space() -> ParameterSpace {
        ParameterSpace::continuous_box(&[(-PI, PI); 3]).unwrap()
    }

    #[test]
    fn sample_layout() {
        let s = saltelli_sample(&unit(2), 4, 0).unwrap();
        assert_eq!(2 + s.ab.len(), 4);
        assert_eq!(s.evaluation_count(), 16);
        assert_eq!(s.stacked().nrows(), 16);
        assert_eq!(s.ab[0].column(1), s.a.column(1));
        assert_eq!(s.ab[0].column(0), s.b.column(0));
        assert!(s.stacked().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn ignored_input() {
        let r = function_sobol(linear_x1, &unit(2), 1 << 14, 1).unwrap();
        assert!((r.first_order[0] - 1.0).abs() < 0.05);
        assert!(r.first_order[1].abs() < 0.05);
        assert!(r.total[1].abs() < 0.05);
    }

    #[test]
    fn ishigami_indices() {
        let r = function_sobol(ishigami, &ishigami_space(), 1 << 14, 2).unwrap();
        let exact = ishigami_first_order(7.0, 0.1);
        for i in 0..3 {
            assert!((r.first_order[i] - exact[i]).abs() < 0.05, "S{}: {} vs {}", i + 1, r.first_order[i], exact[i]);
        }
        for i in 0..3 {
            assert!(r.total[i] >= r.first_order[i] - 3.0 * r.first_order_std.as_ref().unwrap()[i]);
        }
    }

    #[test]
    fn constant_is_degenerate() {
        assert!(matches!(function_sobol(|_: &[f64]| 3.0, &unit(2), 64, 0), Err(Error::DegenerateVariance)));
    }

    #[test]
    fn rejects_non_continuous() {
        let space = ParameterSpace::from_json(
            r#"{"parameters":[{"type":"categorical","name":"c","categories":["a","b"]}]}"#,
        )
        .unwrap();
        assert!(matches!(saltelli_sample(&space, 8, 0), Err(Error::UnsupportedDesign(_))));
    }

    #[test]
    fn additive_estimates_converge() {
        let err = |n: usize| -> f64 {
            (0..10)
                .map(|s| {
                    let r = function_sobol(additive, &unit(2), n, 100 + s).unwrap();
                    (r.first_order[0] - 0.2).abs() + (r.first_order[1] - 0.8).abs()
                })
                .sum::<f64>()
                / 10.0
        };
        let (coarse, fine) = (err(1 << 10), err(1 << 14));
        assert!(fine < 0.5 * coarse, "{coarse} -> {fine}");
    }

    #[test]
    fn affine_invariance() {
        let s = saltelli_sample(&ishigami_space(), 256, 4).unwrap();
        let eval = |f: &dyn Fn(&[f64]) -> f64| {
            let x = s.stacked();
            s.split(&DVector::from_iterator(x.nrows(), x.row_iter().map(|r| f(&r.iter().copied().collect::<Vec<_>>()))))
                .unwrap()
        };
        let (a, b, ab) = eval(&ishigami);
        let base = sobol_indices(&a, &b, &ab).unwrap();
        for (scale, shift) in [(2.0, 5.0), (-0.5, 1e3), (1e3, -7.0)] {
            let (a, b, ab) = eval(&|x| scale * ishigami(x) + shift);
            let r = sobol_indices(&a, &b, &ab).unwrap();
            for i in 0..3 {
                assert!((r.first_order[i] - base.first_order[i]).abs() < 1e-9);
                assert!((r.total[i] - base.total[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn emulator_on_ishigami() {
        let space = ishigami_space();
        let calls = AtomicUsize::new(0);
        let simulator = |p: &[f64]| {
            calls.fetch_add(1, Ordering::SeqCst);
            ishigami(p)
        };
        let x = space.sample_latin_hypercube(200, 9).unwrap();
        let y = DVector::from_iterator(200, x.row_iter().map(|r| simulator(&r.iter().copied().collect::<Vec<_>>())));
        let mut gp = GpModel::for_bounds(&[(-PI, PI); 3]).with_restarts(3);
        gp.set_data(&x, &y).unwrap();
        gp.optimize_hyperparameters(0).unwrap();
        let r = emulator_sobol(&gp, &space, 1 << 12, 1).unwrap();
        let exact = ishigami_first_order(7.0, 0.1);
        assert!((r.first_order[0] - exact[0]).abs() < 0.1, "{:?}", r.first_order);
        assert_eq!(calls.load(Ordering::SeqCst), 200);
    }

    #[test]
    fn emulator_of_ignored_input() {
        let space = unit(2);
        let x = space.sample_latin_hypercube(30, 2).unwrap();
        let y = x.column(0).into_owned();
        let mut gp = GpModel::for_bounds(&[(0.0, 1.0); 2]).with_restarts(3);
        gp.set_data(&x, &y).unwrap();
        gp.optimize_hyperparameters(0).unwrap();
        let r = emulator_sobol(&gp, &space, 1 << 12, 3).unwrap();
        assert!(r.first_order[1] <= 0.1);
    }

    #[test]
    fn bootstrap_errors_present() {
        let r = function_sobol(additive, &unit(2), 512, 0).unwrap();
        let e = r.first_order_std.unwrap();
        assert!(e.iter().all(|v| *v > 0.0 && *v < 0.2));
    }
}
