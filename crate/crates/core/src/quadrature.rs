//! Bayesian quadrature with an RBF Gaussian process over a box.
//!
//! A GP posterior over the integrand induces a Gaussian over its integral
//! under the uniform (Lebesgue) measure on the box. Both the mean and the
//! variance only need the kernel integrated once (`qK`) and twice (`qKq`),
//! which are closed form for the RBF kernel.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::f64::consts::{PI, SQRT_2};

use crate::acquisition::{optimize_acquisition, Acquisition, AcquisitionOptimizerConfig};
use crate::error::{Error, Result};
use crate::gp::{GpModel, RbfKernel};
use crate::model::{FitReport, Model, ModelCapabilities, Prediction, PredictionGradients};
use crate::outer_loop::{
    evaluate_design, fixed_iterations, Candidate, CandidatePointCalculator, LoopState, OuterLoop, RefitUpdater,
};
use crate::rng::derive_seed;
use crate::space::ParameterSpace;
use crate::tasks::seir::{SeirConfig, SeirPeakFunction};

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationBox {
    bounds: Vec<(f64, f64)>,
}

impl IntegrationBox {
    pub fn new(bounds: &[(f64, f64)]) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidSpace("integration box needs at least one dimension".into()));
        }
        for &(lo, hi) in bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidSpace(format!("invalid integration bounds [{lo}, {hi}]")));
            }
        }
        Ok(Self { bounds: bounds.to_vec() })
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|(lo, hi)| hi - lo).product()
    }

    pub fn to_space(&self) -> ParameterSpace {
        ParameterSpace::continuous_box(&self.bounds).expect("box bounds are valid")
    }
}

/// `erf(u) − erf(v)` for `u ≥ v` without cancellation in the tails.
fn erf_diff(u: f64, v: f64) -> f64 {
    if v > 0.0 {
        libm::erfc(v) - libm::erfc(u)
    } else if u < 0.0 {
        libm::erfc(-u) - libm::erfc(-v)
    } else {
        libm::erf(u) - libm::erf(v)
    }
}

fn kernel_mean_factor(a: f64, b: f64, x: f64, l: f64) -> f64 {
    let s = SQRT_2 * l;
    (PI / 2.0).sqrt() * l * erf_diff((b - x) / s, (a - x) / s)
}

/// `∫_box k(x, x') dx'`.
pub fn kernel_mean(kernel: &RbfKernel, domain: &IntegrationBox, x: &[f64]) -> f64 {
    let ls = kernel.lengthscales();
    kernel.variance()
        * domain.bounds.iter().enumerate().map(|(d, &(a, b))| kernel_mean_factor(a, b, x[d], ls[d])).product::<f64>()
}

/// Gradient of [`kernel_mean`] with respect to `x`.
pub fn kernel_mean_gradient(kernel: &RbfKernel, domain: &IntegrationBox, x: &[f64]) -> DVector<f64> {
    let ls = kernel.lengthscales();
    let factors: Vec<f64> =
        domain.bounds.iter().enumerate().map(|(d, &(a, b))| kernel_mean_factor(a, b, x[d], ls[d])).collect();
    DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|d| {
            let (a, b) = domain.bounds[d];
            let l2 = 2.0 * ls[d] * ls[d];
            let own = (-(a - x[d]).powi(2) / l2).exp() - (-(b - x[d]).powi(2) / l2).exp();
            let rest: f64 = factors.iter().enumerate().filter(|&(e, _)| e != d).map(|(_, f)| f).product();
            kernel.variance() * own * rest
        }),
    )
}

/// `∫_box ∫_box k(x, x') dx dx'`, the prior variance of the integral.
pub fn initial_error(kernel: &RbfKernel, domain: &IntegrationBox) -> f64 {
    let ls = kernel.lengthscales();
    kernel.variance()
        * domain
            .bounds
            .iter()
            .enumerate()
            .map(|(d, &(a, b))| {
                let (l, r) = (ls[d], b - a);
                2.0 * l * l * libm::expm1(-r * r / (2.0 * l * l)) + (2.0 * PI).sqrt() * l * r * libm::erf(r / (SQRT_2 * l))
            })
            .product::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegralEstimate {
    pub mean: f64,
    pub variance: f64,
}

impl IntegralEstimate {
    pub fn std(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }

    /// The same estimate divided by `volume`: an expectation under the
    /// uniform distribution on the box.
    pub fn normalized(&self, volume: f64) -> Self {
        Self { mean: self.mean / volume, variance: self.variance / (volume * volume) }
    }
}

/// Models whose posterior can be integrated over a box.
pub trait IntegrableModel: Sync {
    fn integration_box(&self) -> &IntegrationBox;

    fn integrate(&self) -> Result<IntegralEstimate>;

    /// Drop in integral variance from one more observation at each row of `x`.
    fn integral_variance_reduction(&self, x: &DMatrix<f64>) -> Result<DVector<f64>>;

    fn integral_variance_reduction_with_gradient(&self, x: &[f64]) -> Result<(f64, DVector<f64>)>;
}

/// A [`GpModel`] paired with the box it integrates over.
#[derive(Debug, Clone)]
pub struct QuadratureGp {
    gp: GpModel,
    domain: IntegrationBox,
}

/// Cached quantities shared by the variance-reduction evaluations.
struct Embedding {
    /// `K⁻¹ qK(X)`
    z: DVector<f64>,
}

impl QuadratureGp {
    pub fn new(gp: GpModel, domain: IntegrationBox) -> Result<Self> {
        if gp.input_dim() != domain.dim() {
            return Err(Error::DimensionMismatch { expected: domain.dim(), got: gp.input_dim() });
        }
        Ok(Self { gp, domain })
    }

    pub fn gp(&self) -> &GpModel {
        &self.gp
    }

    pub fn gp_mut(&mut self) -> &mut GpModel {
        &mut self.gp
    }

    pub fn into_inner(self) -> GpModel {
        self.gp
    }

    pub fn kernel_mean(&self, x: &[f64]) -> f64 {
        kernel_mean(self.gp.kernel(), &self.domain, x)
    }

    pub fn initial_error(&self) -> f64 {
        initial_error(self.gp.kernel(), &self.domain)
    }

    fn training_embedding(&self) -> DVector<f64> {
        let x = self.gp.training_inputs();
        DVector::from_iterator(
            x.nrows(),
            (0..x.nrows()).map(|i| self.kernel_mean(&x.row(i).iter().copied().collect::<Vec<_>>())),
        )
    }

    fn embedding(&self) -> Option<Embedding> {
        let post = self.gp.posterior()?;
        Some(Embedding { z: post.chol.solve(&self.training_embedding()) })
    }

    /// Reduction in standardized units, with its gradient when requested.
    fn reduction_at(&self, emb: Option<&Embedding>, x: &[f64], want_grad: bool) -> (f64, Option<DVector<f64>>) {
        let kernel = self.gp.kernel();
        let sigma2 = kernel.variance();
        let noise = self.gp.new_point_noise_standardized();
        let qk = self.kernel_mean(x);
        let d = x.len();
        let (Some(emb), Some(post)) = (emb, self.gp.posterior()) else {
            let den = sigma2 + noise;
            let grad = want_grad.then(|| kernel_mean_gradient(kernel, &self.domain, x) * (2.0 * qk / den));
            return (qk * qk / den, grad);
        };
        let xs = self.gp.training_inputs();
        let n = xs.nrows();
        let q = DMatrix::from_row_slice(1, d, x);
        let k = kernel.gram(xs, &q).column(0).into_owned();
        let u = post.chol.solve(&k);
        let c = emb.z.dot(&k) - qk;
        let den = sigma2 + noise - k.dot(&u);
        if den <= 1e-12 * sigma2 {
            return (0.0, want_grad.then(|| DVector::zeros(d)));
        }
        let value = c * c / den;
        if !want_grad {
            return (value, None);
        }
        let dqk = kernel_mean_gradient(kernel, &self.domain, x);
        let ls = kernel.lengthscales();
        let mut grad = DVector::zeros(d);
        for dim in 0..d {
            let l2 = ls[dim] * ls[dim];
            let (mut zdk, mut udk) = (0.0, 0.0);
            for j in 0..n {
                let dk = -k[j] * (x[dim] - xs[(j, dim)]) / l2;
                zdk += emb.z[j] * dk;
                udk += u[j] * dk;
            }
            let dnum = 2.0 * c * (zdk - dqk[dim]);
            let dden = -2.0 * udk;
            grad[dim] = (dnum * den - c * c * dden) / (den * den);
        }
        (value, Some(grad))
    }
}

impl IntegrableModel for QuadratureGp {
    fn integration_box(&self) -> &IntegrationBox {
        &self.domain
    }

    fn integrate(&self) -> Result<IntegralEstimate> {
        let vol = self.domain.volume();
        let (mean0, scale) = (self.gp.output_mean(), self.gp.output_scale());
        let qkq = self.initial_error();
        let Some(post) = self.gp.posterior() else {
            return Ok(IntegralEstimate { mean: mean0 * vol, variance: qkq * scale * scale });
        };
        let q = self.training_embedding();
        let w = post.chol.l_dirty().solve_lower_triangular(&q).ok_or(Error::Conditioning { jitter: post.jitter })?;
        Ok(IntegralEstimate {
            mean: mean0 * vol + scale * q.dot(&post.alpha),
            variance: ((qkq - w.norm_squared()) * scale * scale).max(0.0),
        })
    }

    fn integral_variance_reduction(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        crate::model::check_query(self.domain.dim(), x)?;
        let emb = self.embedding();
        let s2 = self.gp.output_scale().powi(2);
        Ok(DVector::from_iterator(
            x.nrows(),
            (0..x.nrows()).map(|i| {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                self.reduction_at(emb.as_ref(), &row, false).0 * s2
            }),
        ))
    }

    fn integral_variance_reduction_with_gradient(&self, x: &[f64]) -> Result<(f64, DVector<f64>)> {
        if x.len() != self.domain.dim() {
            return Err(Error::DimensionMismatch { expected: self.domain.dim(), got: x.len() });
        }
        let s2 = self.gp.output_scale().powi(2);
        let (v, g) = self.reduction_at(self.embedding().as_ref(), x, true);
        Ok((v * s2, g.expect("gradient requested") * s2))
    }
}

impl Model for QuadratureGp {
    fn input_dim(&self) -> usize {
        self.gp.input_dim()
    }

    fn n_data(&self) -> usize {
        self.gp.n_data()
    }

    fn capabilities(&self) -> ModelCapabilities {
        ModelCapabilities { has_integrability: true, ..self.gp.capabilities() }
    }

    fn predict(&self, x: &DMatrix<f64>) -> Result<Prediction> {
        self.gp.predict(x)
    }

    fn noise_variance(&self) -> f64 {
        self.gp.noise_variance()
    }

    fn set_data(&mut self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
        self.gp.set_data(x, y)
    }

    fn set_data_with_noise(&mut self, x: &DMatrix<f64>, y: &DVector<f64>, noise: &DVector<f64>) -> Result<()> {
        self.gp.set_data_with_noise(x, y, noise)
    }

    fn optimize_hyperparameters(&mut self, seed: u64) -> Result<FitReport> {
        self.gp.optimize_hyperparameters(seed)
    }

    fn predict_gradients(&self, x: &DMatrix<f64>) -> Result<PredictionGradients> {
        self.gp.predict_gradients(x)
    }

    fn posterior_covariance(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.gp.posterior_covariance(a, b)
    }

    fn as_integrable(&self) -> Option<&dyn IntegrableModel> {
        Some(self)
    }
}

/// Integral-variance reduction as an acquisition.
pub struct VarianceReductionAcquisition<'a>(pub &'a dyn IntegrableModel);

impl Acquisition for VarianceReductionAcquisition<'_> {
    fn evaluate(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.0.integral_variance_reduction(x)
    }

    fn has_gradients(&self) -> bool {
        true
    }

    fn evaluate_with_gradient(&self, x: &[f64]) -> Result<(f64, DVector<f64>)> {
        self.0.integral_variance_reduction_with_gradient(x)
    }
}

/// Picks the node that most reduces the integral variance.
#[derive(Debug, Clone, Default)]
pub struct UncertaintySampling {
    pub optimizer: AcquisitionOptimizerConfig,
}

impl<M: Model + ?Sized> CandidatePointCalculator<M> for UncertaintySampling {
    fn required_capabilities(&self) -> ModelCapabilities {
        ModelCapabilities { has_integrability: true, ..ModelCapabilities::NONE }
    }

    fn tolerates_untrained(&self) -> bool {
        true
    }

    fn next_point(&mut self, model: &M, _state: &LoopState, space: &ParameterSpace, seed: u64) -> Result<Candidate> {
        let q = model.as_integrable().ok_or_else(|| Error::CapabilityMismatch("model is not integrable".into()))?;
        let best = optimize_acquisition(&VarianceReductionAcquisition(q), space, &self.optimizer, seed)?;
        Ok(Candidate { x: best.x, acquisition: Some(best.value) })
    }
}

/// Settings of one Bayesian-quadrature run.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BqConfig {
    pub initial_nodes: usize,
    pub iterations: usize,
    pub fit_restarts: usize,
    pub optimizer: AcquisitionOptimizerConfig,
}

impl Default for BqConfig {
    fn default() -> Self {
        Self { initial_nodes: 5, iterations: 15, fit_restarts: 3, optimizer: AcquisitionOptimizerConfig::default() }
    }
}

/// Expected peak height and time under a uniform infection rate, plus the
/// node histories of both runs.
#[derive(Debug, Clone)]
pub struct SeirPeakEstimate {
    pub height: IntegralEstimate,
    pub time: IntegralEstimate,
    pub height_state: LoopState,
    pub time_state: LoopState,
}

/// One BQ run over the rate box: `column` holds the integrand and
/// `noise_column` its known observation variance.
fn seir_bq_run(
    function: &mut SeirPeakFunction,
    design: &LoopState,
    column: usize,
    bq: &BqConfig,
    seed: u64,
) -> Result<(IntegralEstimate, LoopState)> {
    let (lo, hi) = function.config().rate_bounds();
    let domain = IntegrationBox::new(&[(lo, hi)])?;
    let space = domain.to_space();
    let gp = GpModel::for_bounds(domain.bounds()).with_fixed_noise(1e-8).with_restarts(bq.fit_restarts);
    let model = QuadratureGp::new(gp, domain.clone())?;
    let updater = RefitUpdater { output_column: column, noise_column: Some(column + 1), hyper_interval: 1 };
    let mut outer = OuterLoop::new(space, model, UncertaintySampling { optimizer: bq.optimizer }, updater)?;
    let mut state = design.clone();
    outer.run(function, &fixed_iterations(bq.iterations), &mut state, seed)?;
    let estimate = outer.model().integrate()?.normalized(domain.volume());
    Ok((estimate, state))
}

/// Expected infection-peak height and time when the infection rate is
/// uniform over the configured interval. Each integrand value averages
/// `cfg.replications` Gillespie runs and enters the GP with its own noise.
pub fn estimate_seir_peak(cfg: &SeirConfig, bq: &BqConfig, seed: u64) -> Result<SeirPeakEstimate> {
    cfg.validate()?;
    let mut function = SeirPeakFunction::new(cfg.clone(), derive_seed(seed, 0))?;
    let domain = IntegrationBox::new(&[cfg.rate_bounds()])?;
    let design = domain.to_space().sample_latin_hypercube(bq.initial_nodes.max(1), derive_seed(seed, 1))?;
    let initial = evaluate_design(&mut function, &design)?;
    let (height, height_state) = seir_bq_run(&mut function, &initial, 0, bq, derive_seed(seed, 2))?;
    let (time, time_state) = seir_bq_run(&mut function, &initial, 2, bq, derive_seed(seed, 3))?;
    Ok(SeirPeakEstimate { height, time, height_state, time_state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::outer_loop::ScalarFunction;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    /// Composite Gauss–Legendre (5 nodes per panel).
    fn integrate_1d(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let nodes = [
            (0.0, 128.0 / 225.0),
            (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
            (0.906_179_845_938_664, 0.236_926_885_056_189_1),
        ];
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let mid = a + (p as f64 + 0.5) * h;
                nodes.iter().map(|(t, w)| w * f(mid + 0.5 * h * t)).sum::<f64>() * 0.5 * h
            })
            .sum()
    }

    fn unit_box() -> IntegrationBox {
        IntegrationBox::new(&[(0.0, 1.0)]).unwrap()
    }

    #[test]
    fn flat_kernel_limit() {
        let k = RbfKernel::isotropic(1.0, 1e3, 1).unwrap();
        assert!((kernel_mean(&k, &unit_box(), &[0.3]) - 1.0).abs() < 1e-4);
        assert!((initial_error(&k, &unit_box()) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn kernel_mean_matches_numeric() {
        let k = RbfKernel::isotropic(1.0, 1.0, 1).unwrap();
        let numeric = integrate_1d(|t| k.eval(&[0.5], &[t]), 0.0, 1.0, 50);
        let closed = kernel_mean(&k, &unit_box(), &[0.5]);
        assert!(((closed - numeric) / numeric).abs() < 1e-6);
        let (a, b) = (kernel_mean(&k, &unit_box(), &[0.25]), kernel_mean(&k, &unit_box(), &[0.75]));
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn initial_error_matches_numeric() {
        let k = RbfKernel::isotropic(1.0, 0.5, 1).unwrap();
        let numeric = integrate_1d(|s| integrate_1d(|t| k.eval(&[s], &[t]), 0.0, 1.0, 40), 0.0, 1.0, 40);
        let closed = initial_error(&k, &unit_box());
        assert!(((closed - numeric) / numeric).abs() < 1e-5);
        let k2 = RbfKernel::isotropic(2.0, 0.5, 1).unwrap();
        assert!((initial_error(&k2, &unit_box()) - 2.0 * closed).abs() < 1e-14);
    }

    #[test]
    fn embeddings_match_numeric_random_configs() {
        let mut rng = rng_from_seed(77);
        for _ in 0..50 {
            let d = rng.random_range(1..=2);
            let bounds: Vec<(f64, f64)> = (0..d)
                .map(|_| {
                    let lo = rng.random_range(-2.0..1.0);
                    (lo, lo + rng.random_range(0.2..3.0))
                })
                .collect();
            let ls: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..2.0)).collect();
            let k = RbfKernel::new(rng.random_range(0.5..2.0), ls.clone()).unwrap();
            let domain = IntegrationBox::new(&bounds).unwrap();
            let x: Vec<f64> = bounds.iter().map(|(lo, hi)| rng.random_range(lo - 0.5..hi + 0.5)).collect();
            // product structure lets each dimension be integrated separately
            let sv = k.variance();
            let per_dim = |dim: usize, f: &dyn Fn(f64) -> f64| integrate_1d(f, bounds[dim].0, bounds[dim].1, 60);
            let qk: f64 = sv * (0..d)
                .map(|dim| per_dim(dim, &|t| (-(x[dim] - t).powi(2) / (2.0 * ls[dim] * ls[dim])).exp()))
                .product::<f64>();
            let qkq: f64 = sv * (0..d)
                .map(|dim| {
                    per_dim(dim, &|s| per_dim(dim, &|t| (-(s - t).powi(2) / (2.0 * ls[dim] * ls[dim])).exp()))
                })
                .product::<f64>();
            assert!(((kernel_mean(&k, &domain, &x) - qk) / qk).abs() < 1e-5);
            assert!(((initial_error(&k, &domain) - qkq) / qkq).abs() < 1e-5);
        }
    }

    #[test]
    fn kernel_mean_gradient_matches_fd() {
        let k = RbfKernel::new(1.3, vec![0.4, 0.9]).unwrap();
        let domain = IntegrationBox::new(&[(0.0, 1.0), (-1.0, 2.0)]).unwrap();
        let x = [0.2, 1.7];
        let g = kernel_mean_gradient(&k, &domain, &x);
        for d in 0..2 {
            let h = 1e-6;
            let mut xp = x;
            xp[d] += h;
            let mut xm = x;
            xm[d] -= h;
            let fd = (kernel_mean(&k, &domain, &xp) - kernel_mean(&k, &domain, &xm)) / (2.0 * h);
            assert!((g[d] - fd).abs() < 1e-7 * (1.0 + fd.abs()));
        }
    }

    fn qgp(ls: f64) -> QuadratureGp {
        let gp = GpModel::new(RbfKernel::isotropic(1.0, ls, 1).unwrap()).with_fixed_noise(0.0);
        QuadratureGp::new(gp, unit_box()).unwrap()
    }

    #[test]
    fn constant_integrand() {
        let mut m = qgp(1.0);
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 0.5, 1.0]);
        m.set_data(&x, &DVector::from_element(3, 5.0)).unwrap();
        let est = m.integrate().unwrap();
        assert!((est.mean - 5.0).abs() < 5e-3);
        assert!(est.variance.sqrt() < 5e-3, "{est:?}");
    }

    #[test]
    fn x_squared_with_fitted_hypers() {
        let mut m = qgp(0.3);
        let x = DMatrix::from_iterator(12, 1, (0..12).map(|i| i as f64 / 11.0));
        let y = x.column(0).map(|v| v * v);
        m.set_data(&x, &y).unwrap();
        m.optimize_hyperparameters(0).unwrap();
        let est = m.integrate().unwrap();
        assert!((est.mean - 1.0 / 3.0).abs() < 1e-3, "{est:?}");
    }

    #[test]
    fn variance_shrinks_with_nodes() {
        let mut m = qgp(0.2);
        let mut last = m.integrate().unwrap().variance;
        let pts: Vec<f64> = (0..10).map(|i| ((i * 7) % 10) as f64 / 9.0).collect();
        for n in 1..=10 {
            let x = DMatrix::from_row_slice(n, 1, &pts[..n]);
            let y = x.column(0).map(|v| (3.0 * v).sin());
            m.set_data(&x, &y).unwrap();
            m.gp_mut().set_hyperparameters(RbfKernel::isotropic(1.0, 0.2, 1).unwrap(), 0.0).unwrap();
            let v = m.integrate().unwrap().variance;
            assert!(v <= last + 1e-8, "step {n}: {v} > {last}");
            last = v;
        }
    }

    #[test]
    fn reduction_equals_variance_drop() {
        let mut m = qgp(0.25);
        let x = DMatrix::from_row_slice(4, 1, &[0.1, 0.3, 0.45, 0.9]);
        let y = x.column(0).map(|v: f64| (4.0 * v).cos());
        m.set_data(&x, &y).unwrap();
        let before = m.integrate().unwrap().variance;
        for cand in [0.0, 0.2, 0.65, 0.77] {
            let red = m.integral_variance_reduction(&DMatrix::from_row_slice(1, 1, &[cand])).unwrap()[0];
            let mut xs: Vec<f64> = x.iter().copied().collect();
            xs.push(cand);
            let mut m2 = m.clone();
            let x2 = DMatrix::from_row_slice(5, 1, &xs);
            // targets do not affect the variance; keep the scale fixed
            m2.gp_mut().set_hyperparameters(m.gp().kernel().clone(), 0.0).unwrap();
            m2.set_data(&x2, &DVector::from_iterator(5, (0..5).map(|i| y[i.min(3)]))).unwrap();
            let s_ratio = (m.gp().output_scale() / m2.gp().output_scale()).powi(2);
            let after = m2.integrate().unwrap().variance * s_ratio;
            assert!((before - after - red).abs() < 1e-9 * before.max(1e-12) + 1e-12, "{cand}: {} vs {red}", before - after);
        }
    }

    #[test]
    fn reduction_gradient_matches_fd() {
        let mut m = qgp(0.3);
        let x = DMatrix::from_row_slice(3, 1, &[0.1, 0.5, 0.8]);
        m.set_data(&x, &x.column(0).map(|v| v * v)).unwrap();
        for c in [0.05, 0.3, 0.66, 0.97] {
            let (_, g) = m.integral_variance_reduction_with_gradient(&[c]).unwrap();
            let h = 1e-6;
            let f = |v: f64| m.integral_variance_reduction(&DMatrix::from_row_slice(1, 1, &[v])).unwrap()[0];
            let fd = (f(c + h) - f(c - h)) / (2.0 * h);
            assert!((g[0] - fd).abs() <= 1e-4 * fd.abs().max(1e-6), "{c}: {} vs {fd}", g[0]);
        }
    }

    #[test]
    fn prefers_empty_region() {
        let mut m = qgp(0.15);
        let x = DMatrix::from_row_slice(3, 1, &[0.05, 0.15, 0.25]);
        m.set_data(&x, &DVector::from_vec(vec![0.0, 0.1, 0.2])).unwrap();
        let space = unit_box().to_space();
        let state = LoopState::new(1, 1);
        let c = UncertaintySampling::default().next_point(&m, &state, &space, 1).unwrap();
        assert!(c.x[0] > 0.5);
        let grid = DMatrix::from_iterator(2001, 1, (0..2001).map(|i| i as f64 / 2000.0));
        let vals = m.integral_variance_reduction(&grid).unwrap();
        assert!(c.acquisition.unwrap() >= vals.max() - 1e-9);
        let probes = space.sample_uniform(1000, 99);
        assert!(c.acquisition.unwrap() >= m.integral_variance_reduction(&probes).unwrap().max());
    }

    #[test]
    fn sin10_loop_is_calibrated() {
        let space = unit_box().to_space();
        let gp = GpModel::for_bounds(&[(0.0, 1.0)]).with_fixed_noise(1e-10).with_restarts(3);
        let model = QuadratureGp::new(gp, unit_box()).unwrap();
        let mut f = ScalarFunction::new(|x: &[f64]| (10.0 * x[0]).sin() + 1.0);
        let design = space.sample_latin_hypercube(5, 1).unwrap();
        let mut state = evaluate_design(&mut f, &design).unwrap();
        let mut outer = OuterLoop::new(space, model, UncertaintySampling::default(), RefitUpdater::default()).unwrap();
        outer.run(&mut f, &fixed_iterations(10), &mut state, 2).unwrap();
        assert_eq!(state.len(), 15);
        let est = outer.model().integrate().unwrap();
        let exact = (1.0 - 10f64.cos()) / 10.0 + 1.0;
        assert!((est.mean - exact).abs() <= 3.0 * est.std().max(1e-6), "{est:?} vs {exact}");
    }

    #[test]
    fn linearity_in_targets() {
        let mut m = qgp(0.3);
        let x = DMatrix::from_row_slice(4, 1, &[0.1, 0.4, 0.6, 0.95]);
        let y = x.column(0).map(|v: f64| (5.0 * v).sin());
        m.set_data(&x, &y).unwrap();
        let a = m.integrate().unwrap().mean;
        m.set_data(&x, &(y * 2.0)).unwrap();
        let b = m.integrate().unwrap().mean;
        assert!((b - 2.0 * a).abs() < 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn degenerate_box_is_a_point_mass() {
        let domain = IntegrationBox::new(&[(0.4, 0.4 + 1e-6)]).unwrap();
        let gp = GpModel::new(RbfKernel::isotropic(1.0, 0.2, 1).unwrap()).with_fixed_noise(0.0);
        let mut m = QuadratureGp::new(gp, domain.clone()).unwrap();
        let x = DMatrix::from_row_slice(3, 1, &[0.2, 0.4, 0.7]);
        let f = |v: f64| v * v + 1.0;
        m.set_data(&x, &x.column(0).map(f)).unwrap();
        let est = m.integrate().unwrap();
        let expected = domain.volume() * f(0.4);
        assert!(((est.mean - expected) / expected).abs() < 1e-2);
    }

    #[test]
    fn blr_is_not_integrable() {
        use crate::blr::{BlrModel, FeatureMap};
        let blr = BlrModel::new(FeatureMap::polynomial(1, 3), 1.0, 100.0).unwrap();
        let r = OuterLoop::new(unit_box().to_space(), blr, UncertaintySampling::default(), RefitUpdater::default());
        assert!(matches!(r, Err(Error::CapabilityMismatch(_))));
    }
}
