//! The backend-agnostic model interface.
//!
//! Every method module talks to its emulator through [`Model`] only. A
//! backend implements the required methods plus whichever optional
//! capabilities it supports, and advertises them via
//! [`ModelCapabilities`] so that loops can reject incompatible
//! configurations before any evaluation happens.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::quadrature::IntegrableModel;

/// Marginal predictive distribution at a batch of query points.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: DVector<f64>,
    pub variance: DVector<f64>,
}

impl Prediction {
    pub fn new(mean: DVector<f64>, variance: DVector<f64>) -> Self {
        debug_assert_eq!(mean.len(), variance.len());
        Self { mean, variance }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn std(&self) -> DVector<f64> {
        self.variance.map(|v| v.max(0.0).sqrt())
    }
}

/// Input gradients of the predictive mean and variance, one row per query point.
#[derive(Debug, Clone)]
pub struct PredictionGradients {
    pub mean: DMatrix<f64>,
    pub variance: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ModelCapabilities {
    pub has_gradients: bool,
    pub has_joint_covariance: bool,
    pub has_integrability: bool,
}

impl ModelCapabilities {
    pub const NONE: Self = Self { has_gradients: false, has_joint_covariance: false, has_integrability: false };

    /// Errors with the first capability in `required` that `self` lacks.
    pub fn require(&self, required: &ModelCapabilities) -> Result<()> {
        if required.has_gradients && !self.has_gradients {
            return Err(Error::CapabilityMismatch("gradients".into()));
        }
        if required.has_joint_covariance && !self.has_joint_covariance {
            return Err(Error::CapabilityMismatch("joint covariance".into()));
        }
        if required.has_integrability && !self.has_integrability {
            return Err(Error::CapabilityMismatch("integrability".into()));
        }
        Ok(())
    }
}

/// Outcome of a hyperparameter fit, in the backend's own objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub objective_before: f64,
    pub objective_after: f64,
    /// Set when the optimizer failed to make progress from every start.
    pub warning: bool,
}

/// A trained (or prior) emulator.
///
/// `set_data` replaces the training set; accumulation is the loop's job.
/// Between updates a model is immutable and may be shared across threads.
pub trait Model: Send + Sync {
    fn input_dim(&self) -> usize;

    fn n_data(&self) -> usize;

    fn capabilities(&self) -> ModelCapabilities;

    fn predict(&self, x: &DMatrix<f64>) -> Result<Prediction>;

    /// Variance a fresh observation would carry on top of the latent function.
    fn noise_variance(&self) -> f64;

    fn set_data(&mut self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()>;

    /// Like [`Model::set_data`] with a known per-observation noise variance.
    fn set_data_with_noise(&mut self, _x: &DMatrix<f64>, _y: &DVector<f64>, _noise: &DVector<f64>) -> Result<()> {
        Err(Error::Unsupported("per-observation noise"))
    }

    fn optimize_hyperparameters(&mut self, seed: u64) -> Result<FitReport>;

    fn predict_gradients(&self, _x: &DMatrix<f64>) -> Result<PredictionGradients> {
        Err(Error::Unsupported("prediction gradients"))
    }

    /// Latent posterior covariance between the rows of `a` and of `b`.
    fn posterior_covariance(&self, _a: &DMatrix<f64>, _b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Err(Error::Unsupported("joint covariance"))
    }

    fn as_integrable(&self) -> Option<&dyn IntegrableModel> {
        None
    }
}

pub(crate) fn check_training_data(dim: usize, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: x.ncols() });
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training inputs".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training outputs".into()));
    }
    Ok(())
}

pub(crate) fn check_query(dim: usize, x: &DMatrix<f64>) -> Result<()> {
    if x.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: x.ncols() });
    }
    Ok(())
}

/// True when every training row equals the first one.
pub(crate) fn inputs_degenerate(x: &DMatrix<f64>) -> bool {
    x.nrows() == 0 || x.row_iter().all(|r| r == x.row(0))
}

/// Behavioural checks that any [`Model`] implementation is expected to pass.
///
/// Each check returns `Err(description)` on failure so backend test suites
/// can report which part of the contract broke.
pub mod conformance {
    use super::*;

    /// How closely a backend must reproduce noise-free training outputs.
    #[derive(Debug, Clone, Copy)]
    pub enum Interpolation {
        /// `|mean - y| <= tol`.
        Exact(f64),
        /// `|mean - y| <= k · predictive std` (backends with a noise floor).
        WithinStd(f64),
    }

    /// One-dimensional synthetic training set on `[0, 1]`.
    pub fn synthetic_data() -> (DMatrix<f64>, DVector<f64>) {
        let xs: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
        let x = DMatrix::from_column_slice(5, 1, &xs);
        let y = DVector::from_iterator(5, xs.iter().map(|v| (6.0 * v).sin() + 0.5 * v));
        (x, y)
    }

    pub fn check_interpolation<M: Model>(model: &mut M, mode: Interpolation) -> Result<(), String> {
        let (x, y) = synthetic_data();
        model.set_data(&x, &y).map_err(|e| e.to_string())?;
        let p = model.predict(&x).map_err(|e| e.to_string())?;
        for i in 0..y.len() {
            let err = (p.mean[i] - y[i]).abs();
            let ok = match mode {
                Interpolation::Exact(tol) => err <= tol,
                Interpolation::WithinStd(k) => err <= k * p.variance[i].max(0.0).sqrt(),
            };
            if !ok {
                return Err(format!("training point {i}: mean {} vs observed {}", p.mean[i], y[i]));
            }
        }
        Ok(())
    }

    pub fn check_prediction_sanity<M: Model>(model: &mut M) -> Result<(), String> {
        let (x, y) = synthetic_data();
        model.set_data(&x, &y).map_err(|e| e.to_string())?;
        let q = DMatrix::from_fn(41, 1, |i, _| -1.0 + 0.075 * i as f64);
        let p = model.predict(&q).map_err(|e| e.to_string())?;
        if p.mean.len() != 41 || p.variance.len() != 41 {
            return Err("prediction length differs from query count".into());
        }
        if p.mean.iter().any(|v| !v.is_finite()) {
            return Err("non-finite predictive mean".into());
        }
        if p.variance.iter().any(|&v| !(v >= 0.0)) {
            return Err("negative or NaN predictive variance".into());
        }
        Ok(())
    }

    pub fn check_far_variance<M: Model>(model: &mut M) -> Result<(), String> {
        let (x, y) = synthetic_data();
        model.set_data(&x, &y).map_err(|e| e.to_string())?;
        let at_train = model.predict(&x.rows(2, 1).into_owned()).map_err(|e| e.to_string())?;
        let far = model
            .predict(&DMatrix::from_element(1, 1, 25.0))
            .map_err(|e| e.to_string())?;
        if far.variance[0] < at_train.variance[0] {
            return Err(format!(
                "variance far from data {} below variance at a training input {}",
                far.variance[0], at_train.variance[0]
            ));
        }
        Ok(())
    }

    pub fn check_errors<M: Model>(model: &mut M) -> Result<(), String> {
        let (x, y) = synthetic_data();
        let short = y.rows(0, 3).into_owned();
        if model.set_data(&x, &short).is_ok() {
            return Err("mismatched row counts accepted".into());
        }
        let mut bad = y.clone();
        bad[1] = f64::NAN;
        if model.set_data(&x, &bad).is_ok() {
            return Err("NaN output accepted".into());
        }
        model.set_data(&x, &y).map_err(|e| e.to_string())?;
        if model.predict(&DMatrix::zeros(2, 3)).is_ok() {
            return Err("query with wrong input dimension accepted".into());
        }
        Ok(())
    }

    /// `set_data` twice must behave like a fresh model given only the second set.
    pub fn check_replace<M: Model + Clone>(fresh: &M) -> Result<(), String> {
        let (x, y) = synthetic_data();
        let x2 = x.map(|v| v + 0.05);
        let y2 = y.map(|v| 2.0 - v);
        let mut twice = fresh.clone();
        twice.set_data(&x, &y).map_err(|e| e.to_string())?;
        twice.set_data(&x2, &y2).map_err(|e| e.to_string())?;
        let mut once = fresh.clone();
        once.set_data(&x2, &y2).map_err(|e| e.to_string())?;
        let q = DMatrix::from_fn(21, 1, |i, _| i as f64 * 0.05);
        let a = twice.predict(&q).map_err(|e| e.to_string())?;
        let b = once.predict(&q).map_err(|e| e.to_string())?;
        if a != b {
            return Err("second set_data did not fully replace the first".into());
        }
        Ok(())
    }

    pub fn check_gradients<M: Model>(model: &mut M, rtol: f64) -> Result<(), String> {
        if !model.capabilities().has_gradients {
            return if model.predict_gradients(&DMatrix::zeros(1, model.input_dim())).is_ok() {
                Err("gradients returned without the capability".into())
            } else {
                Ok(())
            };
        }
        let (x, y) = synthetic_data();
        model.set_data(&x, &y).map_err(|e| e.to_string())?;
        let q = DMatrix::from_column_slice(10, 1, &[0.02, 0.17, 0.22, 0.41, 0.46, 0.58, 0.63, 0.81, 0.88, 1.07]);
        let g = model.predict_gradients(&q).map_err(|e| e.to_string())?;
        let h = 1e-5;
        for i in 0..q.nrows() {
            let mut hi = q.rows(i, 1).into_owned();
            let mut lo = hi.clone();
            hi[(0, 0)] += h;
            lo[(0, 0)] -= h;
            let ph = model.predict(&hi).map_err(|e| e.to_string())?;
            let pl = model.predict(&lo).map_err(|e| e.to_string())?;
            let fd_mean = (ph.mean[0] - pl.mean[0]) / (2.0 * h);
            let fd_var = (ph.variance[0] - pl.variance[0]) / (2.0 * h);
            for (name, an, fd) in [("mean", g.mean[(i, 0)], fd_mean), ("variance", g.variance[(i, 0)], fd_var)] {
                if (an - fd).abs() > rtol * fd.abs().max(1e-3) {
                    return Err(format!("{name} gradient at query {i}: analytic {an} vs finite difference {fd}"));
                }
            }
        }
        Ok(())
    }

    pub fn check_fit_contract<M: Model + Clone>(fresh: &M, seed: u64) -> Result<(), String> {
        let (x, y) = synthetic_data();
        let mut a = fresh.clone();
        a.set_data(&x, &y).map_err(|e| e.to_string())?;
        let mut b = a.clone();
        let ra = a.optimize_hyperparameters(seed).map_err(|e| e.to_string())?;
        let rb = b.optimize_hyperparameters(seed).map_err(|e| e.to_string())?;
        if ra.objective_after < ra.objective_before - 1e-9 {
            return Err(format!(
                "fit decreased the objective: {} -> {}",
                ra.objective_before, ra.objective_after
            ));
        }
        let q = DMatrix::from_fn(11, 1, |i, _| i as f64 * 0.1);
        let pa = a.predict(&q).map_err(|e| e.to_string())?;
        let pb = b.predict(&q).map_err(|e| e.to_string())?;
        if ra != rb || pa != pb {
            return Err("fit is not deterministic for a fixed seed".into());
        }

        let mut degenerate = fresh.clone();
        let xd = DMatrix::from_element(4, 1, 0.5);
        let yd = DVector::from_vec(vec![1.0, 2.0, 0.5, 1.5]);
        degenerate.set_data(&xd, &yd).map_err(|e| e.to_string())?;
        match degenerate.optimize_hyperparameters(seed) {
            Err(Error::FitDegeneracy(_)) => Ok(()),
            other => Err(format!("identical inputs should fail the fit, got {other:?}")),
        }
    }

    pub fn check_joint_covariance<M: Model>(model: &mut M) -> Result<(), String> {
        if !model.capabilities().has_joint_covariance {
            return Ok(());
        }
        let (x, y) = synthetic_data();
        model.set_data(&x, &y).map_err(|e| e.to_string())?;
        let q = DMatrix::from_column_slice(4, 1, &[0.0, 0.25, 0.6, 1.4]);
        let c = model.posterior_covariance(&q, &q).map_err(|e| e.to_string())?;
        let p = model.predict(&q).map_err(|e| e.to_string())?;
        for i in 0..4 {
            for j in 0..4 {
                if (c[(i, j)] - c[(j, i)]).abs() > 1e-10 * c[(i, i)].abs().max(1.0) {
                    return Err("posterior covariance is not symmetric".into());
                }
            }
            if c[(i, i)] < -1e-10 || c[(i, i)] > p.variance[i] + 1e-10 {
                return Err(format!(
                    "latent variance {} inconsistent with predictive variance {}",
                    c[(i, i)],
                    p.variance[i]
                ));
            }
        }
        Ok(())
    }

    /// Runs every check and returns `(name, outcome)` pairs.
    pub fn run_all<M: Model + Clone>(fresh: &M, interpolation: Interpolation) -> Vec<(&'static str, Result<(), String>)> {
        vec![
            ("interpolation", check_interpolation(&mut fresh.clone(), interpolation)),
            ("prediction sanity", check_prediction_sanity(&mut fresh.clone())),
            ("far variance", check_far_variance(&mut fresh.clone())),
            ("error paths", check_errors(&mut fresh.clone())),
            ("set_data replaces", check_replace(fresh)),
            ("gradients", check_gradients(&mut fresh.clone(), 1e-4)),
            ("fit contract", check_fit_contract(fresh, 17)),
            ("joint covariance", check_joint_covariance(&mut fresh.clone())),
        ]
    }
}
