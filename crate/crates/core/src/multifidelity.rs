//! Two-fidelity autoregressive emulator `f_high(x) = ρ·f_low(x) + δ(x)`.
//!
//! Fitted in two stages: a GP on the low-fidelity data, then `ρ` jointly
//! with the hyperparameters of the discrepancy GP `δ`, whose targets are
//! `y_high − ρ·μ_low(X_high)` and whose per-point noise absorbs the
//! low-fidelity uncertainty `ρ²·σ²_low(X_high)`. The discrepancy has a
//! constant mean, estimated by generalized least squares and profiled out
//! of the likelihood. Predictions treat the two GPs as independent.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gp::{jittered_cholesky, lml_parts, GpModel, RbfKernel};
use crate::model::{
    check_training_data, inputs_degenerate, FitReport, Model, ModelCapabilities, Prediction, PredictionGradients,
};
use crate::optim::{minimize_bounded, LbfgsOptions};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone)]
pub struct TwoFidelityData {
    pub x_low: DMatrix<f64>,
    pub y_low: DVector<f64>,
    pub x_high: DMatrix<f64>,
    pub y_high: DVector<f64>,
}

impl TwoFidelityData {
    pub fn new(x_low: DMatrix<f64>, y_low: DVector<f64>, x_high: DMatrix<f64>, y_high: DVector<f64>) -> Result<Self> {
        check_training_data(x_low.ncols(), &x_low, &y_low)?;
        check_training_data(x_low.ncols(), &x_high, &y_high)?;
        if x_low.nrows() < 2 || x_high.nrows() < 2 {
            return Err(Error::FitDegeneracy("each fidelity needs at least two observations".into()));
        }
        Ok(Self { x_low, y_low, x_high, y_high })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fidelity {
    Low,
    High,
}

#[derive(Debug, Clone)]
pub struct Ar1Model {
    low: GpModel,
    rho: f64,
    delta_kernel: RbfKernel,
    delta_noise: f64,
    learn_noise: bool,
    restarts: usize,
    x_high: DMatrix<f64>,
    y_high: DVector<f64>,
    delta: GpModel,
    delta_mean: f64,
}

/// Shortest discrepancy lengthscale, as a fraction of the input range.
const LENGTHSCALE_FLOOR: f64 = 1e-2;

fn plain_gp(kernel: RbfKernel, noise: f64) -> GpModel {
    GpModel::new(kernel).with_normalization(false).with_fixed_noise(noise)
}

impl Ar1Model {
    /// Wraps an already trained low-fidelity GP. The discrepancy starts
    /// with unit variance, lengthscale 0.2 of the low data range, noise
    /// `1e-8` and `ρ = 1`.
    pub fn from_low(low: GpModel) -> Self {
        let d = low.input_dim();
        let x = low.training_inputs();
        let ls: Vec<f64> = (0..d)
            .map(|j| {
                let r = if x.nrows() > 0 { x.column(j).max() - x.column(j).min() } else { 0.0 };
                0.2 * if r > 0.0 { r } else { 1.0 }
            })
            .collect();
        let delta_kernel = RbfKernel::new(1.0, ls).expect("positive lengthscales");
        Self {
            delta: plain_gp(delta_kernel.clone(), 1e-8),
            low,
            rho: 1.0,
            delta_kernel,
            delta_noise: 1e-8,
            learn_noise: false,
            restarts: 5,
            x_high: DMatrix::zeros(0, d),
            y_high: DVector::zeros(0),
            delta_mean: 0.0,
        }
    }

    /// Learn the discrepancy noise instead of keeping it fixed.
    pub fn with_learned_noise(mut self, learn: bool) -> Self {
        self.learn_noise = learn;
        self
    }

    pub fn with_fixed_noise(mut self, noise: f64) -> Result<Self> {
        self.learn_noise = false;
        self.delta_noise = noise;
        self.refresh_delta()?;
        Ok(self)
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts.max(1);
        self
    }

    /// Both stages: low GP fit, then `ρ` and the discrepancy.
    pub fn fit(data: &TwoFidelityData, seed: u64) -> Result<Self> {
        let bounds: Vec<(f64, f64)> = (0..data.x_low.ncols())
            .map(|j| {
                let (lo, hi) = (data.x_low.column(j).min(), data.x_low.column(j).max());
                if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) }
            })
            .collect();
        let mut low = GpModel::for_bounds(&bounds).with_learned_noise(1e-6);
        low.set_data(&data.x_low, &data.y_low)?;
        low.fit(5, derive_seed(seed, 0))?;
        let mut model = Self::from_low(low);
        model.set_data(&data.x_high, &data.y_high)?;
        model.optimize_hyperparameters(derive_seed(seed, 1))?;
        Ok(model)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn low(&self) -> &GpModel {
        &self.low
    }

    pub fn delta(&self) -> &GpModel {
        &self.delta
    }

    /// Constant mean of the discrepancy, re-estimated whenever the data or
    /// parameters change.
    pub fn delta_mean(&self) -> f64 {
        self.delta_mean
    }

    pub fn set_parameters(&mut self, rho: f64, kernel: RbfKernel, noise: f64) -> Result<()> {
        if kernel.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: kernel.dim() });
        }
        self.rho = rho;
        self.delta_kernel = kernel;
        self.delta_noise = noise;
        self.refresh_delta()
    }

    /// Latent mean and variance of the low GP at the high inputs.
    fn low_at_high(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        let p = self.low.predict(&self.x_high)?;
        Ok((p.mean, p.variance))
    }

    /// Generalized least-squares constant mean of the residuals `r` under
    /// the discrepancy covariance, with that covariance's factor.
    fn gls_offset(
        &self,
        kernel: &RbfKernel,
        noise: f64,
        extra: &DVector<f64>,
        r: &DVector<f64>,
    ) -> Result<(f64, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
        let mut k = kernel.gram(&self.x_high, &self.x_high);
        for i in 0..k.nrows() {
            k[(i, i)] += noise + extra[i];
        }
        let (chol, _) = jittered_cholesky(k)?;
        let w = chol.solve(&DVector::from_element(r.len(), 1.0));
        Ok((w.dot(r) / w.sum(), chol))
    }

    fn refresh_delta(&mut self) -> Result<()> {
        let mut delta = plain_gp(self.delta_kernel.clone(), self.delta_noise);
        if self.x_high.nrows() > 0 {
            let (mu, var) = self.low_at_high()?;
            let extra = var * (self.rho * self.rho);
            let r = &self.y_high - &mu * self.rho;
            let (offset, _) = self.gls_offset(&self.delta_kernel, self.delta_noise, &extra, &r)?;
            delta.set_data_with_noise(&self.x_high, &r.add_scalar(-offset), &extra)?;
            self.delta_mean = offset;
        } else {
            self.delta_mean = 0.0;
        }
        self.delta = delta;
        Ok(())
    }

    pub fn predict_fidelity(&self, x: &DMatrix<f64>, fidelity: Fidelity) -> Result<Prediction> {
        let low = self.low.predict(x)?;
        if fidelity == Fidelity::Low {
            return Ok(low);
        }
        let d = self.delta.predict(x)?;
        let r2 = self.rho * self.rho;
        Ok(Prediction::new(low.mean * self.rho + d.mean.add_scalar(self.delta_mean), low.variance * r2 + d.variance))
    }

    fn stage_two_bounds(&self) -> Vec<(f64, f64)> {
        let n = self.y_high.len() as f64;
        let m = self.y_high.sum() / n;
        let mut v = self.y_high.iter().map(|y| (y - m).powi(2)).sum::<f64>() / n;
        if !(v > 0.0) {
            v = self.y_high.iter().map(|y| y * y).sum::<f64>() / n;
        }
        if !(v > 0.0) {
            v = 1.0;
        }
        let x = &self.x_high;
        let ranges: Vec<f64> = (0..x.ncols()).map(|j| x.column(j).max() - x.column(j).min()).collect();
        let fallback = ranges.iter().cloned().fold(0.0, f64::max);
        let rho_span = 1e3 * (1.0 + self.rho.abs());
        let mut b = vec![(-rho_span, rho_span), ((1e-6 * v).ln(), (1e2 * v).ln())];
        for r in ranges {
            let r = if r > 0.0 { r } else { fallback };
            b.push(((LENGTHSCALE_FLOOR * r).ln(), (10.0 * r).ln()));
        }
        if self.learn_noise {
            b.push(((1e-10 * v).ln(), v.ln()));
        }
        b
    }

    fn unpack(&self, theta: &DVector<f64>) -> (f64, RbfKernel, f64) {
        let d = self.input_dim();
        let kernel = RbfKernel::new(theta[1].exp(), (0..d).map(|i| theta[2 + i].exp()).collect())
            .expect("exp keeps hyperparameters positive");
        let noise = if self.learn_noise { theta[2 + d].exp() } else { self.delta_noise };
        (theta[0], kernel, noise)
    }

    fn pack(&self) -> DVector<f64> {
        let mut v = vec![self.rho, self.delta_kernel.variance().ln()];
        v.extend(self.delta_kernel.lengthscales().iter().map(|l| l.ln()));
        if self.learn_noise {
            v.push(self.delta_noise.ln());
        }
        DVector::from_vec(v)
    }

    /// Stage-two log likelihood and its gradient in the packed parameters
    /// `(ρ, log σ²_δ, log ℓ_δ…, [log noise])`.
    pub fn stage_two_objective(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let (mu, var) = self.low_at_high()?;
        self.objective_with(theta, &mu, &var)
    }

    fn objective_with(&self, theta: &DVector<f64>, mu: &DVector<f64>, var: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let (rho, kernel, noise) = self.unpack(theta);
        let extra = var * (rho * rho);
        let r = &self.y_high - mu * rho;
        let (offset, chol) = self.gls_offset(&kernel, noise, &extra, &r)?;
        let r = r.add_scalar(-offset);
        // the offset is profiled out, so its own derivative term vanishes
        let p = lml_parts(&kernel, noise, Some(&extra), &self.x_high, &r)?;
        // ∂L/∂r = −K⁻¹r and ∂r/∂ρ = −μ
        let alpha_dot_mu = chol.solve(&r).dot(mu);
        let d = self.input_dim();
        let mut g = DVector::zeros(theta.len());
        g[0] = alpha_dot_mu + 2.0 * rho * p.grad_diag.dot(var);
        g[1] = p.grad_log_variance;
        g.rows_mut(2, d).copy_from(&p.grad_log_lengthscales);
        if self.learn_noise {
            g[2 + d] = p.grad_log_noise;
        }
        Ok((p.value, g))
    }
}

impl Model for Ar1Model {
    fn input_dim(&self) -> usize {
        self.low.input_dim()
    }

    fn n_data(&self) -> usize {
        self.x_high.nrows()
    }

    fn capabilities(&self) -> ModelCapabilities {
        ModelCapabilities { has_gradients: true, has_joint_covariance: true, has_integrability: false }
    }

    fn predict(&self, x: &DMatrix<f64>) -> Result<Prediction> {
        self.predict_fidelity(x, Fidelity::High)
    }

    fn noise_variance(&self) -> f64 {
        self.delta_noise
    }

    /// Replaces the high-fidelity data; the low GP is left as it is.
    fn set_data(&mut self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
        check_training_data(self.input_dim(), x, y)?;
        self.x_high = x.clone();
        self.y_high = y.clone();
        self.refresh_delta()
    }

    /// Re-runs stage two (`ρ` and the discrepancy hyperparameters).
    fn optimize_hyperparameters(&mut self, seed: u64) -> Result<FitReport> {
        if self.x_high.nrows() < 2 {
            return Err(Error::FitDegeneracy("fitting needs at least two high-fidelity observations".into()));
        }
        if inputs_degenerate(&self.x_high) {
            return Err(Error::FitDegeneracy("all high-fidelity inputs are identical".into()));
        }
        let (mu, var) = self.low_at_high()?;
        let current = self.pack();
        let before = self.objective_with(&current, &mu, &var).map(|r| r.0).unwrap_or(f64::NEG_INFINITY);

        // a grid of ρ around the regression-with-intercept estimate, crossed
        // with short, medium and long lengthscales; then uniform draws
        let n = mu.len() as f64;
        let (mu_bar, y_bar) = (mu.sum() / n, self.y_high.sum() / n);
        let smu = mu.iter().map(|m| (m - mu_bar).powi(2)).sum::<f64>();
        let rho_ls = if smu > 0.0 {
            mu.iter().zip(self.y_high.iter()).map(|(m, y)| (m - mu_bar) * (y - y_bar)).sum::<f64>() / smu
        } else {
            0.0
        };
        let bounds = self.stage_two_bounds();
        let d = self.input_dim();
        let clamp = |v: f64, (lo, hi): (f64, f64)| v.clamp(lo, hi);
        let mut starts = vec![current.clone()];
        let span = 0.5 * (1.0 + rho_ls.abs());
        let rho_grid = (-4..=4).map(|k| rho_ls + k as f64 * span).chain(std::iter::once(0.0));
        for rho in rho_grid {
            let r = &self.y_high - &mu * rho;
            let rv = r.iter().map(|v| (v - r.sum() / n).powi(2)).sum::<f64>() / n;
            for ls_frac in [0.2, 1.0, 5.0] {
                let mut s = current.clone();
                s[0] = rho;
                s[1] = clamp(rv.max(1e-300).ln(), bounds[1]);
                for j in 0..d {
                    let (lo, hi) = bounds[2 + j];
                    s[2 + j] = clamp(((hi.exp() / 10.0) * ls_frac).ln(), (lo, hi));
                }
                starts.push(s);
            }
        }
        let mut rng = rng_from_seed(derive_seed(seed, 0xa71));
        for _ in 0..self.restarts {
            let mut s = DVector::from_iterator(
                bounds.len(),
                bounds.iter().map(|&(lo, hi)| lo + rng.random::<f64>() * (hi - lo)),
            );
            s[0] = rho_ls + (rng.random::<f64>() * 2.0 - 1.0) * (1.0 + rho_ls.abs());
            starts.push(s);
        }
        let objective = |theta: &DVector<f64>| match self.objective_with(theta, &mu, &var) {
            Ok((v, g)) if v.is_finite() => (-v, -g),
            _ => (f64::INFINITY, DVector::zeros(theta.len())),
        };
        let results: Vec<_> =
            starts.par_iter().map(|s| minimize_bounded(objective, s, &bounds, LbfgsOptions::default())).collect();
        let best = results
            .iter()
            .enumerate()
            .filter(|(_, r)| r.value.is_finite())
            .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i);
        match best {
            Some(b) if -results[b].value > before => {
                let (rho, kernel, noise) = self.unpack(&results[b].x);
                self.set_parameters(rho, kernel, noise)?;
                Ok(FitReport { objective_before: before, objective_after: -results[b].value, warning: false })
            }
            _ => Ok(FitReport { objective_before: before, objective_after: before, warning: best.is_none() }),
        }
    }

    fn predict_gradients(&self, x: &DMatrix<f64>) -> Result<PredictionGradients> {
        let gl = self.low.predict_gradients(x)?;
        let gd = self.delta.predict_gradients(x)?;
        Ok(PredictionGradients {
            mean: gl.mean * self.rho + gd.mean,
            variance: gl.variance * (self.rho * self.rho) + gd.variance,
        })
    }

    fn posterior_covariance(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.low.posterior_covariance(a, b)? * (self.rho * self.rho) + self.delta.posterior_covariance(a, b)?)
    }
}

/// Outcome of [`forrester_comparison`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ForresterComparison {
    pub rho: f64,
    pub rmse_ar1: f64,
    pub rmse_single: f64,
}

/// Fits the two-fidelity model to Forrester data on a nested design (a
/// Latin hypercube for the low fidelity, a random subset of it for the
/// high fidelity) and a plain GP to the high-fidelity points alone; both are scored by RMSE on
/// a 201-point grid over `[0, 1]`.
pub fn forrester_comparison(low_points: usize, high_points: usize, seed: u64) -> Result<ForresterComparison> {
    use crate::space::ParameterSpace;
    use crate::tasks::objectives::{forrester_high, forrester_low};

    let space = ParameterSpace::continuous_box(&[(0.0, 1.0)])?;
    let xl = space.sample_latin_hypercube(low_points, derive_seed(seed, 0))?;
    if high_points > low_points {
        return Err(Error::Config("the high-fidelity design must be a subset of the low-fidelity one".into()));
    }
    let mut rng = rng_from_seed(derive_seed(seed, 1));
    let mut picks = rand::seq::index::sample(&mut rng, low_points, high_points).into_vec();
    picks.sort_unstable();
    let xh = xl.select_rows(&picks);
    let eval = |x: &DMatrix<f64>, f: fn(&[f64]) -> f64| DVector::from_iterator(x.nrows(), (0..x.nrows()).map(|i| f(&[x[(i, 0)]])));
    let yh = eval(&xh, forrester_high);
    let data = TwoFidelityData::new(xl.clone(), eval(&xl, forrester_low), xh.clone(), yh.clone())?;
    let ar1 = Ar1Model::fit(&data, derive_seed(seed, 2))?;

    let mut single = GpModel::for_bounds(&[(0.0, 1.0)]).with_learned_noise(1e-6);
    single.set_data(&xh, &yh)?;
    single.fit(5, derive_seed(seed, 3))?;

    let grid = DMatrix::from_fn(201, 1, |i, _| i as f64 / 200.0);
    let truth = eval(&grid, forrester_high);
    let rmse = |m: &dyn Model| -> Result<f64> {
        let p = m.predict(&grid)?;
        Ok(((p.mean - &truth).norm_squared() / grid.nrows() as f64).sqrt())
    };
    Ok(ForresterComparison { rho: ar1.rho(), rmse_ar1: rmse(&ar1)?, rmse_single: rmse(&single)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::conformance::{self, Interpolation};
    use crate::tasks::objectives::{forrester_high, forrester_low};

    fn grid(n: usize) -> DMatrix<f64> {
        DMatrix::from_iterator(n, 1, (0..n).map(|i| i as f64 / (n - 1) as f64))
    }

    fn column(x: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DVector<f64> {
        DVector::from_iterator(x.nrows(), x.column(0).iter().map(|&v| f(v)))
    }

    fn low_gp(x: &DMatrix<f64>, y: &DVector<f64>) -> GpModel {
        let mut gp = GpModel::for_bounds(&[(0.0, 1.0)]).with_fixed_noise(1e-8);
        gp.set_data(x, y).unwrap();
        gp.fit(3, 0).unwrap();
        gp
    }

    #[test]
    fn recovers_exact_scaling() {
        let f = |v: f64| (8.0 * v).sin() + v;
        let xl = grid(30);
        let xh = DMatrix::from_row_slice(6, 1, &[0.05, 0.2, 0.4, 0.55, 0.7, 0.9]);
        let data = TwoFidelityData::new(xl.clone(), column(&xl, f), xh.clone(), column(&xh, |v| 2.0 * f(v))).unwrap();
        let m = Ar1Model::fit(&data, 1).unwrap();
        assert!((m.rho() - 2.0).abs() < 0.05, "rho {}", m.rho());
    }

    #[test]
    fn independent_fidelities_give_small_rho() {
        let mut small = 0;
        for seed in 0..10u64 {
            let phase = seed as f64 * 0.3;
            let xl = grid(25);
            let xh = DMatrix::from_iterator(8, 1, (0..8).map(|i| (i as f64 + 0.5) / 8.0));
            let yl = column(&xl, |v| (6.0 * v + phase).sin());
            let yh = column(&xh, |v| (6.0 * v + phase).cos() * (1.0 + 0.1 * seed as f64) + 0.3 * (17.0 * v).sin());
            let data = TwoFidelityData::new(xl, yl, xh, yh).unwrap();
            let m = Ar1Model::fit(&data, seed).unwrap();
            if m.rho().abs() <= 0.2 {
                small += 1;
            }
        }
        assert!(small > 5, "{small}/10");
    }

    #[test]
    fn stage_two_gradient_matches_fd() {
        let xl = grid(12);
        let low = low_gp(&xl, &column(&xl, |v| forrester_low(&[v])));
        let mut m = Ar1Model::from_low(low).with_learned_noise(true);
        let xh = DMatrix::from_row_slice(4, 1, &[0.0, 0.35, 0.62, 1.0]);
        m.set_data(&xh, &column(&xh, |v| forrester_high(&[v]))).unwrap();
        let theta = DVector::from_vec(vec![1.7, 0.4, -1.2, -3.0]);
        let (_, g) = m.stage_two_objective(&theta).unwrap();
        for i in 0..theta.len() {
            let h = 1e-5;
            let mut tp = theta.clone();
            tp[i] += h;
            let mut tm = theta.clone();
            tm[i] -= h;
            let fd = (m.stage_two_objective(&tp).unwrap().0 - m.stage_two_objective(&tm).unwrap().0) / (2.0 * h);
            assert!((g[i] - fd).abs() <= 1e-4 * fd.abs().max(1e-3), "param {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn low_prediction_is_the_stage_one_gp() {
        let xl = grid(10);
        let low = low_gp(&xl, &column(&xl, |v| v * v));
        let mut m = Ar1Model::from_low(low.clone());
        let xh = DMatrix::from_row_slice(3, 1, &[0.1, 0.5, 0.9]);
        m.set_data(&xh, &column(&xh, |v| 2.0 * v * v + 1.0)).unwrap();
        let q = grid(17);
        assert_eq!(m.predict_fidelity(&q, Fidelity::Low).unwrap(), low.predict(&q).unwrap());
    }

    #[test]
    fn zero_rho_collapses_to_delta() {
        let xl = grid(10);
        let mut m = Ar1Model::from_low(low_gp(&xl, &column(&xl, |v| v.sin())));
        let xh = DMatrix::from_row_slice(4, 1, &[0.1, 0.3, 0.6, 0.9]);
        let yh = column(&xh, |v| (5.0 * v).cos());
        m.set_data(&xh, &yh).unwrap();
        let kernel = RbfKernel::isotropic(0.8, 0.3, 1).unwrap();
        m.set_parameters(0.0, kernel.clone(), 1e-6).unwrap();
        let mut solo = plain_gp(kernel, 1e-6);
        solo.set_data(&xh, &yh.add_scalar(-m.delta_mean())).unwrap();
        let q = grid(21);
        let (a, mut b) = (m.predict(&q).unwrap(), solo.predict(&q).unwrap());
        b.mean.add_scalar_mut(m.delta_mean());
        assert!(((&a.mean - &b.mean).amax()) <= 1e-6 * b.mean.amax());
        assert!(((&a.variance - &b.variance).amax()) <= 1e-6 * b.variance.amax());
    }

    #[test]
    fn interpolates_high_points_and_grows_far_away() {
        let xl = grid(11);
        let xh = DMatrix::from_row_slice(4, 1, &[0.0, 0.4, 0.6, 1.0]);
        let yh = column(&xh, |v| forrester_high(&[v]));
        let data = TwoFidelityData::new(xl.clone(), column(&xl, |v| forrester_low(&[v])), xh.clone(), yh.clone()).unwrap();
        let m = Ar1Model::fit(&data, 0).unwrap();
        let p = m.predict(&xh).unwrap();
        assert!((&p.mean - &yh).amax() < 1e-3 * yh.amax(), "{:?}", &p.mean - &yh);
        let far = m.predict(&DMatrix::from_row_slice(1, 1, &[5.0])).unwrap();
        assert!(far.variance[0] >= p.variance.max());
    }

    #[test]
    fn conformance_at_high_fidelity() {
        let xl = grid(40);
        let low = low_gp(&xl, &column(&xl, |v| (6.0 * v).sin()));
        let fresh = Ar1Model::from_low(low);
        for (name, result) in conformance::run_all(&fresh, Interpolation::Exact(1e-3)) {
            assert!(result.is_ok(), "{name}: {result:?}");
        }
    }

    #[test]
    fn forrester_beats_single_fidelity() {
        let wins = (0..10u64)
            .filter(|&s| {
                let c = forrester_comparison(11, 4, s).unwrap();
                c.rmse_ar1 < c.rmse_single
            })
            .count();
        assert!(wins >= 8, "{wins}/10");
    }

    #[test]
    fn rejects_thin_data() {
        let x = DMatrix::from_row_slice(1, 1, &[0.5]);
        let y = DVector::from_element(1, 1.0);
        assert!(TwoFidelityData::new(grid(5), column(&grid(5), |v| v), x, y).is_err());
    }
}
