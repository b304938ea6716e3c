//! Exact Gaussian-process regression with an ARD RBF kernel.
//!
//! Outputs are standardized internally (zero mean, unit variance) when
//! `normalize` is on; kernel variance and noise variance then live in
//! standardized units and predictions are mapped back on return. With data
//! present the prior mean is therefore the training mean, not zero.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng as _;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{
    check_query, check_training_data, inputs_degenerate, FitReport, Model, ModelCapabilities, Prediction,
    PredictionGradients,
};
use crate::optim::{minimize_bounded, LbfgsOptions};
use crate::rng::{derive_seed, rng_from_seed};

/// `k(x, x') = σ² · exp(-½ Σ_d (x_d - x'_d)² / ℓ_d²)`
#[derive(Debug, Clone, PartialEq)]
pub struct RbfKernel {
    variance: f64,
    lengthscales: Vec<f64>,
}

impl RbfKernel {
    pub fn new(variance: f64, lengthscales: Vec<f64>) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(variance) || lengthscales.is_empty() || !lengthscales.iter().all(|&l| ok(l)) {
            return Err(Error::Config(format!(
                "RBF kernel needs positive finite hyperparameters, got variance {variance}, lengthscales {lengthscales:?}"
            )));
        }
        Ok(Self { variance, lengthscales })
    }

    pub fn isotropic(variance: f64, lengthscale: f64, dim: usize) -> Result<Self> {
        Self::new(variance, vec![lengthscale; dim])
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| ((x - y) / l).powi(2))
            .sum();
        self.variance * (-0.5 * r2).exp()
    }

    pub fn gram(&self, x1: &DMatrix<f64>, x2: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let s1 = DMatrix::from_fn(x1.nrows(), d, |i, j| x1[(i, j)] / self.lengthscales[j]);
        let s2 = DMatrix::from_fn(x2.nrows(), d, |i, j| x2[(i, j)] / self.lengthscales[j]);
        DMatrix::from_fn(x1.nrows(), x2.nrows(), |i, j| {
            let mut r2 = 0.0;
            for k in 0..d {
                let t = s1[(i, k)] - s2[(j, k)];
                r2 += t * t;
            }
            self.variance * (-0.5 * r2).exp()
        })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Posterior {
    pub(crate) chol: Cholesky<f64, Dyn>,
    /// `K⁻¹ y` in standardized units.
    pub(crate) alpha: DVector<f64>,
    pub(crate) jitter: f64,
}

/// Factorizes `k` with the jitter ladder `0, 1e-10·s, 2e-10·s, … ≤ 1e-4·s`,
/// `s` being the mean diagonal.
pub(crate) fn jittered_cholesky(k: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = k.nrows();
    let scale = (k.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    if let Some(c) = Cholesky::new(k.clone()) {
        return Ok((c, 0.0));
    }
    let mut jitter = 1e-10 * scale;
    while jitter <= 1e-4 * scale * (1.0 + 1e-12) {
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(kj) {
            return Ok((c, jitter));
        }
        jitter *= 2.0;
    }
    Err(Error::Conditioning { jitter: jitter / 2.0 })
}

/// Log marginal likelihood and its gradient for fixed inputs and targets.
pub(crate) struct LmlParts {
    pub value: f64,
    pub grad_log_variance: f64,
    pub grad_log_lengthscales: DVector<f64>,
    pub grad_log_noise: f64,
    /// `∂L/∂D_ii` for an additive diagonal term `D`.
    pub grad_diag: DVector<f64>,
}

pub(crate) fn lml_parts(
    kernel: &RbfKernel,
    noise_variance: f64,
    extra_diag: Option<&DVector<f64>>,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<LmlParts> {
    let n = x.nrows();
    let kf = kernel.gram(x, x);
    let mut k = kf.clone();
    for i in 0..n {
        k[(i, i)] += noise_variance + extra_diag.map_or(0.0, |e| e[i]);
    }
    let (chol, _) = jittered_cholesky(k)?;
    let alpha = chol.solve(y);
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let value = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * PI).ln();

    // W = ααᵀ - K⁻¹; ∂L/∂θ = ½ tr(W ∂K/∂θ)
    let kinv = chol.inverse();
    let w = &alpha * alpha.transpose() - kinv;
    let grad_log_variance = 0.5 * w.component_mul(&kf).sum();
    let d = kernel.dim();
    let mut grad_log_lengthscales = DVector::zeros(d);
    for dim in 0..d {
        let l2 = kernel.lengthscales[dim].powi(2);
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let diff = x[(i, dim)] - x[(j, dim)];
                acc += w[(i, j)] * kf[(i, j)] * diff * diff / l2;
            }
        }
        grad_log_lengthscales[dim] = 0.5 * acc;
    }
    let grad_diag = w.diagonal() * 0.5;
    let grad_log_noise = noise_variance * grad_diag.sum();
    Ok(LmlParts { value, grad_log_variance, grad_log_lengthscales, grad_log_noise, grad_diag })
}

/// Exact GP regression model.
#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: RbfKernel,
    noise_variance: f64,
    learn_noise: bool,
    normalize: bool,
    restarts: usize,
    x: DMatrix<f64>,
    y: DVector<f64>,
    point_noise: Option<DVector<f64>>,
    y_mean: f64,
    y_scale: f64,
    posterior: Option<Posterior>,
}

impl GpModel {
    /// Untrained model with learned noise (initial variance 1e-6),
    /// standardized outputs and 10 fit restarts.
    pub fn new(kernel: RbfKernel) -> Self {
        let d = kernel.dim();
        Self {
            kernel,
            noise_variance: 1e-6,
            learn_noise: true,
            normalize: true,
            restarts: 10,
            x: DMatrix::zeros(0, d),
            y: DVector::zeros(0),
            point_noise: None,
            y_mean: 0.0,
            y_scale: 1.0,
            posterior: None,
        }
    }

    /// Unit-variance kernel with lengthscale 0.2 of each range.
    pub fn for_bounds(bounds: &[(f64, f64)]) -> Self {
        let ls = bounds.iter().map(|(lo, hi)| 0.2 * (hi - lo)).collect();
        Self::new(RbfKernel::new(1.0, ls).expect("bounds have positive width"))
    }

    pub fn with_fixed_noise(mut self, noise_variance: f64) -> Self {
        assert!(noise_variance >= 0.0 && noise_variance.is_finite());
        self.noise_variance = noise_variance;
        self.learn_noise = false;
        self.refresh_quietly();
        self
    }

    pub fn with_learned_noise(mut self, initial: f64) -> Self {
        assert!(initial > 0.0 && initial.is_finite());
        self.noise_variance = initial;
        self.learn_noise = true;
        self.refresh_quietly();
        self
    }

    pub fn with_normalization(mut self, normalize: bool) -> Self {
        self.normalize = normalize;
        self.refresh_quietly();
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts.max(1);
        self
    }

    fn refresh_quietly(&mut self) {
        if self.x.nrows() > 0 {
            let _ = self.refresh();
        }
    }

    pub fn kernel(&self) -> &RbfKernel {
        &self.kernel
    }

    /// Noise hyperparameter in model (standardized) units.
    pub fn noise_hyperparameter(&self) -> f64 {
        self.noise_variance
    }

    pub fn output_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn output_scale(&self) -> f64 {
        self.y_scale
    }

    pub fn training_inputs(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn training_outputs(&self) -> &DVector<f64> {
        &self.y
    }

    pub(crate) fn posterior(&self) -> Option<&Posterior> {
        self.posterior.as_ref()
    }

    pub(crate) fn point_noise_standardized(&self) -> Option<DVector<f64>> {
        let s2 = self.y_scale * self.y_scale;
        self.point_noise.as_ref().map(|p| p / s2)
    }

    /// Noise that a new observation carries in standardized units: the
    /// homoscedastic term plus the mean known per-point noise.
    pub(crate) fn new_point_noise_standardized(&self) -> f64 {
        let extra = self
            .point_noise_standardized()
            .filter(|p| !p.is_empty())
            .map_or(0.0, |p| p.mean());
        self.noise_variance + extra
    }

    pub fn set_hyperparameters(&mut self, kernel: RbfKernel, noise_variance: f64) -> Result<()> {
        if kernel.dim() != self.kernel.dim() {
            return Err(Error::DimensionMismatch { expected: self.kernel.dim(), got: kernel.dim() });
        }
        self.kernel = kernel;
        self.noise_variance = noise_variance;
        self.refresh()
    }

    fn standardized_targets(&self) -> DVector<f64> {
        self.y.map(|v| (v - self.y_mean) / self.y_scale)
    }

    fn refresh(&mut self) -> Result<()> {
        self.posterior = None;
        let n = self.x.nrows();
        if n == 0 {
            self.y_mean = 0.0;
            self.y_scale = 1.0;
            return Ok(());
        }
        if self.normalize {
            self.y_mean = self.y.mean();
            let var = self.y.iter().map(|v| (v - self.y_mean).powi(2)).sum::<f64>() / n as f64;
            self.y_scale = if var > 0.0 && var.sqrt() > 1e-12 * (1.0 + self.y_mean.abs()) { var.sqrt() } else { 1.0 };
        } else {
            self.y_mean = 0.0;
            self.y_scale = 1.0;
        }
        let mut k = self.kernel.gram(&self.x, &self.x);
        let extra = self.point_noise_standardized();
        for i in 0..n {
            k[(i, i)] += self.noise_variance + extra.as_ref().map_or(0.0, |e| e[i]);
        }
        let (chol, jitter) = jittered_cholesky(k)?;
        let alpha = chol.solve(&self.standardized_targets());
        self.posterior = Some(Posterior { chol, alpha, jitter });
        Ok(())
    }

    fn store(&mut self, x: &DMatrix<f64>, y: &DVector<f64>, noise: Option<DVector<f64>>) -> Result<()> {
        check_training_data(self.kernel.dim(), x, y)?;
        self.x = x.clone();
        self.y = y.clone();
        self.point_noise = noise;
        self.refresh()
    }

    /// Predictive distribution including observation noise.
    pub fn predict_observed(&self, x: &DMatrix<f64>) -> Result<Prediction> {
        let mut p = self.predict(x)?;
        let extra = self.noise_variance();
        p.variance.add_scalar_mut(extra);
        Ok(p)
    }

    fn log_space_hypers(&self) -> DVector<f64> {
        let mut v = vec![self.kernel.variance.ln()];
        v.extend(self.kernel.lengthscales.iter().map(|l| l.ln()));
        if self.learn_noise {
            v.push(self.noise_variance.ln());
        }
        DVector::from_vec(v)
    }

    fn hypers_from_log(&self, theta: &DVector<f64>) -> (RbfKernel, f64) {
        let d = self.kernel.dim();
        let kernel = RbfKernel {
            variance: theta[0].exp(),
            lengthscales: (0..d).map(|i| theta[1 + i].exp()).collect(),
        };
        let noise = if self.learn_noise { theta[1 + d].exp() } else { self.noise_variance };
        (kernel, noise)
    }

    pub fn log_marginal_likelihood(&self) -> Result<f64> {
        Ok(self.lml_at(&self.kernel, self.noise_variance)?.value)
    }

    /// Gradient w.r.t. `(log σ², log ℓ_1..ℓ_d, log σ_n²)`.
    pub fn log_marginal_likelihood_gradient(&self) -> Result<DVector<f64>> {
        let p = self.lml_at(&self.kernel, self.noise_variance)?;
        let d = self.kernel.dim();
        let mut g = DVector::zeros(d + 2);
        g[0] = p.grad_log_variance;
        g.rows_mut(1, d).copy_from(&p.grad_log_lengthscales);
        g[d + 1] = p.grad_log_noise;
        Ok(g)
    }

    fn lml_at(&self, kernel: &RbfKernel, noise: f64) -> Result<LmlParts> {
        if self.x.nrows() == 0 {
            return Err(Error::FitDegeneracy("marginal likelihood needs data".into()));
        }
        let extra = self.point_noise_standardized();
        lml_parts(kernel, noise, extra.as_ref(), &self.x, &self.standardized_targets())
    }

    fn hyper_bounds(&self) -> Vec<(f64, f64)> {
        let v = if self.normalize {
            1.0
        } else {
            let ms = self.y.iter().map(|v| v * v).sum::<f64>() / self.y.len() as f64;
            if ms > 0.0 { ms } else { 1.0 }
        };
        let ranges: Vec<f64> = (0..self.x.ncols())
            .map(|j| {
                let c = self.x.column(j);
                c.max() - c.min()
            })
            .collect();
        let fallback = ranges.iter().cloned().fold(0.0, f64::max);
        let mut bounds = vec![((1e-2 * v).ln(), (1e2 * v).ln())];
        for r in ranges {
            let r = if r > 0.0 { r } else { fallback };
            bounds.push(((1e-3 * r).ln(), (10.0 * r).ln()));
        }
        if self.learn_noise {
            bounds.push(((1e-8 * v).ln(), v.ln()));
        }
        bounds
    }

    /// Maximizes the log marginal likelihood over log-hyperparameters with
    /// `restarts` L-BFGS runs: the first from the current values, the rest
    /// from uniform draws inside the bounds.
    pub fn fit(&mut self, restarts: usize, seed: u64) -> Result<FitReport> {
        if self.x.nrows() < 2 {
            return Err(Error::FitDegeneracy("fitting needs at least two observations".into()));
        }
        if inputs_degenerate(&self.x) {
            return Err(Error::FitDegeneracy("all training inputs are identical".into()));
        }
        let before = self.lml_at(&self.kernel, self.noise_variance).map(|p| p.value).unwrap_or(f64::NEG_INFINITY);
        let bounds = self.hyper_bounds();
        let mut starts = vec![self.log_space_hypers()];
        let mut rng = rng_from_seed(derive_seed(seed, 0x6770));
        for _ in 1..restarts.max(1) {
            starts.push(DVector::from_iterator(
                bounds.len(),
                bounds.iter().map(|&(lo, hi)| lo + rng.random::<f64>() * (hi - lo)),
            ));
        }
        let d = self.kernel.dim();
        let objective = |theta: &DVector<f64>| -> (f64, DVector<f64>) {
            let (kernel, noise) = self.hypers_from_log(theta);
            match self.lml_at(&kernel, noise) {
                Ok(p) if p.value.is_finite() => {
                    let mut g = DVector::zeros(theta.len());
                    g[0] = -p.grad_log_variance;
                    for i in 0..d {
                        g[1 + i] = -p.grad_log_lengthscales[i];
                    }
                    if self.learn_noise {
                        g[1 + d] = -p.grad_log_noise;
                    }
                    (-p.value, g)
                }
                _ => (f64::INFINITY, DVector::zeros(theta.len())),
            }
        };
        let results: Vec<_> = starts
            .par_iter()
            .map(|s| minimize_bounded(objective, s, &bounds, LbfgsOptions::default()))
            .collect();
        let mut best: Option<usize> = None;
        for (i, r) in results.iter().enumerate() {
            if r.value.is_finite() && best.is_none_or(|b| r.value < results[b].value) {
                best = Some(i);
            }
        }
        let warning = results.iter().all(|r| r.line_search_failed && r.iterations == 0);
        match best {
            Some(b) if -results[b].value > before => {
                let (kernel, noise) = self.hypers_from_log(&results[b].x);
                self.kernel = kernel;
                self.noise_variance = noise;
                self.refresh()?;
                Ok(FitReport { objective_before: before, objective_after: -results[b].value, warning })
            }
            Some(_) => Ok(FitReport { objective_before: before, objective_after: before, warning }),
            None => Ok(FitReport { objective_before: before, objective_after: before, warning: true }),
        }
    }

    fn kernel_column(&self, q: &DMatrix<f64>) -> DMatrix<f64> {
        self.kernel.gram(&self.x, q)
    }
}

impl Model for GpModel {
    fn input_dim(&self) -> usize {
        self.kernel.dim()
    }

    fn n_data(&self) -> usize {
        self.x.nrows()
    }

    fn capabilities(&self) -> ModelCapabilities {
        ModelCapabilities { has_gradients: true, has_joint_covariance: true, has_integrability: false }
    }

    fn predict(&self, q: &DMatrix<f64>) -> Result<Prediction> {
        check_query(self.kernel.dim(), q)?;
        let m = q.nrows();
        let s2 = self.y_scale * self.y_scale;
        let Some(post) = &self.posterior else {
            return Ok(Prediction::new(
                DVector::from_element(m, self.y_mean),
                DVector::from_element(m, self.kernel.variance * s2),
            ));
        };
        let ks = self.kernel_column(q);
        let mean_std = ks.transpose() * &post.alpha;
        let v = post.chol.l_dirty().solve_lower_triangular(&ks).ok_or(Error::Conditioning { jitter: post.jitter })?;
        let mean = mean_std.map(|v| self.y_mean + self.y_scale * v);
        let variance = DVector::from_iterator(
            m,
            v.column_iter().map(|c| (self.kernel.variance - c.norm_squared()).max(0.0) * s2),
        );
        Ok(Prediction::new(mean, variance))
    }

    fn noise_variance(&self) -> f64 {
        self.new_point_noise_standardized() * self.y_scale * self.y_scale
    }

    fn set_data(&mut self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
        self.store(x, y, None)
    }

    fn set_data_with_noise(&mut self, x: &DMatrix<f64>, y: &DVector<f64>, noise: &DVector<f64>) -> Result<()> {
        if noise.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: y.len(), got: noise.len() });
        }
        if noise.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite("per-observation noise".into()));
        }
        self.store(x, y, Some(noise.clone()))
    }

    fn optimize_hyperparameters(&mut self, seed: u64) -> Result<FitReport> {
        self.fit(self.restarts, seed)
    }

    fn predict_gradients(&self, q: &DMatrix<f64>) -> Result<PredictionGradients> {
        check_query(self.kernel.dim(), q)?;
        let (m, d) = (q.nrows(), q.ncols());
        let mut gm = DMatrix::zeros(m, d);
        let mut gv = DMatrix::zeros(m, d);
        let Some(post) = &self.posterior else {
            return Ok(PredictionGradients { mean: gm, variance: gv });
        };
        let n = self.x.nrows();
        let s2 = self.y_scale * self.y_scale;
        let ks = self.kernel_column(q);
        let w = post.chol.solve(&ks);
        for i in 0..m {
            for dim in 0..d {
                let l2 = self.kernel.lengthscales[dim].powi(2);
                let mut dm = 0.0;
                let mut dv = 0.0;
                for j in 0..n {
                    let dk = -ks[(j, i)] * (q[(i, dim)] - self.x[(j, dim)]) / l2;
                    dm += post.alpha[j] * dk;
                    dv += w[(j, i)] * dk;
                }
                gm[(i, dim)] = self.y_scale * dm;
                gv[(i, dim)] = -2.0 * dv * s2;
            }
        }
        Ok(PredictionGradients { mean: gm, variance: gv })
    }

    fn posterior_covariance(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_query(self.kernel.dim(), a)?;
        check_query(self.kernel.dim(), b)?;
        let s2 = self.y_scale * self.y_scale;
        let prior = self.kernel.gram(a, b);
        let Some(post) = &self.posterior else {
            return Ok(prior * s2);
        };
        let l = post.chol.l_dirty();
        let va = l.solve_lower_triangular(&self.kernel_column(a)).ok_or(Error::Conditioning { jitter: post.jitter })?;
        let vb = l.solve_lower_triangular(&self.kernel_column(b)).ok_or(Error::Conditioning { jitter: post.jitter })?;
        Ok((prior - va.transpose() * vb) * s2)
    }
}
