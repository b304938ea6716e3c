//! Bayesian linear regression over a fixed feature map.
//!
//! Weights have prior `N(0, α I)` and observations Gaussian noise with
//! precision `β`. The posterior is the conjugate one,
//! `S⁻¹ = α⁻¹ I + β ΦᵀΦ`, `m = β S Φᵀ y`. Hyperparameters are chosen by
//! maximizing the evidence over a fixed log grid.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{
    check_query, check_training_data, inputs_degenerate, FitReport, Model, ModelCapabilities, Prediction,
    PredictionGradients,
};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    /// `φ(x) = x`.
    Linear { dim: usize },
    /// `φ(x) = [1, x_d^k for every d and k = 1..=degree]` (no cross terms).
    Polynomial { dim: usize, degree: usize },
    /// `φ_j(x) = √(2/m) cos(ω_jᵀx + b_j)`, `ω_j ~ N(0, diag(ℓ⁻²))`,
    /// `b_j ~ U[0, 2π)`; approximates an RBF kernel with unit variance.
    RandomCosine { frequencies: DMatrix<f64>, phases: DVector<f64> },
}

impl FeatureMap {
    pub fn linear(dim: usize) -> Self {
        FeatureMap::Linear { dim }
    }

    pub fn polynomial(dim: usize, degree: usize) -> Self {
        FeatureMap::Polynomial { dim, degree }
    }

    pub fn random_cosine(count: usize, lengthscales: &[f64], seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let d = lengthscales.len();
        let mut frequencies = DMatrix::zeros(count, d);
        for j in 0..count {
            for k in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                frequencies[(j, k)] = z / lengthscales[k];
            }
        }
        let phases = DVector::from_fn(count, |_, _| rng.random::<f64>() * 2.0 * PI);
        FeatureMap::RandomCosine { frequencies, phases }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            FeatureMap::Linear { dim } | FeatureMap::Polynomial { dim, .. } => *dim,
            FeatureMap::RandomCosine { frequencies, .. } => frequencies.ncols(),
        }
    }

    pub fn feature_count(&self) -> usize {
        match self {
            FeatureMap::Linear { dim } => *dim,
            FeatureMap::Polynomial { dim, degree } => 1 + dim * degree,
            FeatureMap::RandomCosine { phases, .. } => phases.len(),
        }
    }

    /// Design matrix, one row per input row.
    pub fn features(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = x.nrows();
        match self {
            FeatureMap::Linear { .. } => x.clone(),
            FeatureMap::Polynomial { dim, degree } => DMatrix::from_fn(n, self.feature_count(), |i, j| {
                if j == 0 {
                    return 1.0;
                }
                let (d, k) = ((j - 1) / degree, (j - 1) % degree + 1);
                debug_assert!(d < *dim);
                x[(i, d)].powi(k as i32)
            }),
            FeatureMap::RandomCosine { frequencies, phases } => {
                let scale = (2.0 / phases.len() as f64).sqrt();
                let mut proj = x * frequencies.transpose();
                for i in 0..n {
                    for j in 0..phases.len() {
                        proj[(i, j)] = scale * (proj[(i, j)] + phases[j]).cos();
                    }
                }
                proj
            }
        }
    }

    /// `∂φ/∂x` at a single point, `feature_count × dim`.
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.input_dim();
        match self {
            FeatureMap::Linear { .. } => DMatrix::identity(d, d),
            FeatureMap::Polynomial { degree, .. } => DMatrix::from_fn(self.feature_count(), d, |j, c| {
                if j == 0 {
                    return 0.0;
                }
                let (dd, k) = ((j - 1) / degree, (j - 1) % degree + 1);
                if dd != c {
                    0.0
                } else {
                    k as f64 * x[c].powi(k as i32 - 1)
                }
            }),
            FeatureMap::RandomCosine { frequencies, phases } => {
                let scale = (2.0 / phases.len() as f64).sqrt();
                DMatrix::from_fn(phases.len(), d, |j, c| {
                    let arg: f64 = (0..d).map(|k| frequencies[(j, k)] * x[k]).sum::<f64>() + phases[j];
                    -scale * arg.sin() * frequencies[(j, c)]
                })
            }
        }
    }
}

/// Log evidence `log N(y | 0, β⁻¹ I + α Φ Φᵀ)` computed in feature space.
pub fn blr_log_evidence(phi: &DMatrix<f64>, y: &DVector<f64>, prior_variance: f64, noise_precision: f64) -> Result<f64> {
    let n = phi.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let p = phi.ncols();
    let chol = precision_factor(phi, prior_variance, noise_precision)?;
    let m = chol.solve(&(phi.transpose() * y)) * noise_precision;
    let resid = y - phi * &m;
    let log_det_a = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let quad = noise_precision * resid.norm_squared() + m.norm_squared() / prior_variance;
    let log_det_c = -(n as f64) * noise_precision.ln() + p as f64 * prior_variance.ln() + log_det_a;
    Ok(-0.5 * quad - 0.5 * log_det_c - 0.5 * n as f64 * (2.0 * PI).ln())
}

fn precision_factor(
    phi: &DMatrix<f64>,
    prior_variance: f64,
    noise_precision: f64,
) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let p = phi.ncols();
    let mut a = phi.transpose() * phi * noise_precision;
    for i in 0..p {
        a[(i, i)] += 1.0 / prior_variance;
    }
    Cholesky::new(a).ok_or(Error::Conditioning { jitter: 0.0 })
}

fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone)]
pub struct BlrModel {
    features: FeatureMap,
    prior_variance: f64,
    noise_precision: f64,
    normalize: bool,
    alpha_grid: Vec<f64>,
    beta_grid: Vec<f64>,
    x: DMatrix<f64>,
    y: DVector<f64>,
    y_mean: f64,
    y_scale: f64,
    weight_mean: DVector<f64>,
    weight_covariance: DMatrix<f64>,
}

impl BlrModel {
    pub fn new(features: FeatureMap, prior_variance: f64, noise_precision: f64) -> Result<Self> {
        if !(prior_variance > 0.0 && prior_variance.is_finite()) || !(noise_precision > 0.0 && noise_precision.is_finite()) {
            return Err(Error::Config(format!(
                "BLR needs positive prior variance and noise precision, got {prior_variance}, {noise_precision}"
            )));
        }
        let p = features.feature_count();
        let d = features.input_dim();
        Ok(Self {
            features,
            prior_variance,
            noise_precision,
            normalize: true,
            alpha_grid: geomspace(1e-2, 1e4, 7),
            beta_grid: geomspace(1.0, 1e6, 7),
            x: DMatrix::zeros(0, d),
            y: DVector::zeros(0),
            y_mean: 0.0,
            y_scale: 1.0,
            weight_mean: DVector::zeros(p),
            weight_covariance: DMatrix::identity(p, p) * prior_variance,
        })
    }

    pub fn with_normalization(mut self, normalize: bool) -> Self {
        self.normalize = normalize;
        let _ = self.refresh();
        self
    }

    /// Replaces the evidence grids (both must be non-empty and positive).
    pub fn with_grid(mut self, alphas: Vec<f64>, betas: Vec<f64>) -> Self {
        assert!(!alphas.is_empty() && !betas.is_empty());
        assert!(alphas.iter().chain(&betas).all(|v| *v > 0.0));
        self.alpha_grid = alphas;
        self.beta_grid = betas;
        self
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    pub fn prior_variance(&self) -> f64 {
        self.prior_variance
    }

    pub fn noise_precision(&self) -> f64 {
        self.noise_precision
    }

    pub fn weight_mean(&self) -> &DVector<f64> {
        &self.weight_mean
    }

    pub fn weight_covariance(&self) -> &DMatrix<f64> {
        &self.weight_covariance
    }

    pub fn set_hyperparameters(&mut self, prior_variance: f64, noise_precision: f64) -> Result<()> {
        self.prior_variance = prior_variance;
        self.noise_precision = noise_precision;
        self.refresh()
    }

    fn standardized_targets(&self) -> DVector<f64> {
        self.y.map(|v| (v - self.y_mean) / self.y_scale)
    }

    fn refresh(&mut self) -> Result<()> {
        let n = self.y.len();
        (self.y_mean, self.y_scale) = (0.0, 1.0);
        if self.normalize && n > 0 {
            let mean = self.y.mean();
            let var = self.y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            self.y_mean = mean;
            if var > 0.0 && var.sqrt() > 1e-12 * (1.0 + mean.abs()) {
                self.y_scale = var.sqrt();
            }
        }
        let phi = self.features.features(&self.x);
        let chol = precision_factor(&phi, self.prior_variance, self.noise_precision)?;
        self.weight_mean = chol.solve(&(phi.transpose() * self.standardized_targets())) * self.noise_precision;
        let mut s = chol.inverse();
        // symmetrize against round-off
        s = (&s + s.transpose()) * 0.5;
        self.weight_covariance = s;
        Ok(())
    }

    /// Evidence of the current training data under the current hyperparameters
    /// (standardized targets when normalization is on).
    pub fn log_evidence(&self) -> Result<f64> {
        let phi = self.features.features(&self.x);
        blr_log_evidence(&phi, &self.standardized_targets(), self.prior_variance, self.noise_precision)
    }
}

impl Model for BlrModel {
    fn input_dim(&self) -> usize {
        self.features.input_dim()
    }

    fn n_data(&self) -> usize {
        self.y.len()
    }

    fn capabilities(&self) -> ModelCapabilities {
        ModelCapabilities { has_gradients: true, has_joint_covariance: true, has_integrability: false }
    }

    fn predict(&self, x: &DMatrix<f64>) -> Result<Prediction> {
        check_query(self.input_dim(), x)?;
        let phi = self.features.features(x);
        let mean = (&phi * &self.weight_mean).map(|v| self.y_mean + self.y_scale * v);
        let ps = &phi * &self.weight_covariance;
        let s2 = self.y_scale * self.y_scale;
        let variance = DVector::from_fn(x.nrows(), |i, _| {
            (ps.row(i).dot(&phi.row(i)).max(0.0) + 1.0 / self.noise_precision) * s2
        });
        Ok(Prediction::new(mean, variance))
    }

    fn noise_variance(&self) -> f64 {
        self.y_scale * self.y_scale / self.noise_precision
    }

    fn set_data(&mut self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
        check_training_data(self.input_dim(), x, y)?;
        self.x = x.clone();
        self.y = y.clone();
        self.refresh()
    }

    fn optimize_hyperparameters(&mut self, _seed: u64) -> Result<FitReport> {
        if self.y.len() < 2 {
            return Err(Error::FitDegeneracy("fitting needs at least two observations".into()));
        }
        if inputs_degenerate(&self.x) {
            return Err(Error::FitDegeneracy("all training inputs are identical".into()));
        }
        let phi = self.features.features(&self.x);
        let y = self.standardized_targets();
        let before = blr_log_evidence(&phi, &y, self.prior_variance, self.noise_precision).unwrap_or(f64::NEG_INFINITY);
        let mut best = (before, self.prior_variance, self.noise_precision);
        for &a in &self.alpha_grid {
            for &b in &self.beta_grid {
                if let Ok(e) = blr_log_evidence(&phi, &y, a, b) {
                    if e > best.0 {
                        best = (e, a, b);
                    }
                }
            }
        }
        self.prior_variance = best.1;
        self.noise_precision = best.2;
        self.refresh()?;
        Ok(FitReport { objective_before: before, objective_after: best.0, warning: !best.0.is_finite() })
    }

    fn predict_gradients(&self, x: &DMatrix<f64>) -> Result<PredictionGradients> {
        check_query(self.input_dim(), x)?;
        let (m, d) = (x.nrows(), x.ncols());
        let phi = self.features.features(x);
        let s2 = self.y_scale * self.y_scale;
        let mut gm = DMatrix::zeros(m, d);
        let mut gv = DMatrix::zeros(m, d);
        for i in 0..m {
            let xi: Vec<f64> = x.row(i).iter().copied().collect();
            let jac = self.features.jacobian(&xi);
            let sphi = &self.weight_covariance * phi.row(i).transpose();
            let dm = jac.transpose() * &self.weight_mean * self.y_scale;
            let dv = jac.transpose() * sphi * (2.0 * s2);
            gm.row_mut(i).copy_from(&dm.transpose());
            gv.row_mut(i).copy_from(&dv.transpose());
        }
        Ok(PredictionGradients { mean: gm, variance: gv })
    }

    fn posterior_covariance(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_query(self.input_dim(), a)?;
        check_query(self.input_dim(), b)?;
        let pa = self.features.features(a);
        let pb = self.features.features(b);
        Ok(pa * &self.weight_covariance * pb.transpose() * (self.y_scale * self.y_scale))
    }
}
