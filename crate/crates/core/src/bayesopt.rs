//! Bayesian optimization: improvement-based and confidence-bound
//! acquisitions under the minimization convention, and the calculator that
//! plugs them into the outer loop.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::acquisition::{optimize_acquisition, Acquisition, AcquisitionOptimizerConfig};
use crate::error::{Error, Result};
use crate::model::{Model, Prediction};
use crate::outer_loop::{
    evaluate_design, fixed_iterations, Candidate, CandidatePointCalculator, LoopState, OuterLoop, RefitUpdater,
    UserFunction,
};
use crate::rng::derive_seed;
use crate::space::ParameterSpace;
use crate::stats::{normal_cdf, normal_pdf};

pub use crate::outer_loop::RandomCalculator as RandomSearch;

/// Standard deviations below this use the zero-variance closed forms.
pub const SIGMA_FLOOR: f64 = 1e-10;

/// `σ[uΦ(u) + φ(u)]` with `u = (y_best − μ − ξ)/σ`.
pub fn expected_improvement(pred: &Prediction, y_best: f64, xi: f64) -> DVector<f64> {
    DVector::from_iterator(
        pred.len(),
        (0..pred.len()).map(|i| ei_parts(pred.mean[i], pred.variance[i].max(0.0).sqrt(), y_best, xi).0),
    )
}

/// `−(μ − βσ)`, to be maximized.
pub fn lower_confidence_bound(pred: &Prediction, beta: f64) -> DVector<f64> {
    DVector::from_iterator(
        pred.len(),
        (0..pred.len()).map(|i| -(pred.mean[i] - beta * pred.variance[i].max(0.0).sqrt())),
    )
}

/// `Φ(u)` with `u` as in [`expected_improvement`].
pub fn probability_of_improvement(pred: &Prediction, y_best: f64, xi: f64) -> DVector<f64> {
    DVector::from_iterator(
        pred.len(),
        (0..pred.len()).map(|i| pi_parts(pred.mean[i], pred.variance[i].max(0.0).sqrt(), y_best, xi).0),
    )
}

/// Value, `∂/∂μ`, `∂/∂σ`.
fn ei_parts(mu: f64, sigma: f64, y_best: f64, xi: f64) -> (f64, f64, f64) {
    let gap = y_best - mu - xi;
    if sigma < SIGMA_FLOOR {
        return if gap > 0.0 { (gap, -1.0, 0.0) } else { (0.0, 0.0, 0.0) };
    }
    let u = gap / sigma;
    let (cdf, pdf) = (normal_cdf(u), normal_pdf(u));
    ((sigma * (u * cdf + pdf)).max(0.0), -cdf, pdf)
}

fn pi_parts(mu: f64, sigma: f64, y_best: f64, xi: f64) -> (f64, f64, f64) {
    let gap = y_best - mu - xi;
    if sigma < SIGMA_FLOOR {
        return (if gap > 0.0 { 1.0 } else { 0.0 }, 0.0, 0.0);
    }
    let u = gap / sigma;
    let pdf = normal_pdf(u);
    (normal_cdf(u), -pdf / sigma, -pdf * u / sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AcquisitionKind {
    /// `xi: None` uses 1% of the observed output standard deviation.
    Ei { xi: Option<f64> },
    Lcb { beta: f64 },
    Pi { xi: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Goal {
    #[default]
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionConfig {
    pub kind: AcquisitionKind,
    #[serde(default)]
    pub goal: Goal,
}

impl AcquisitionConfig {
    pub fn ei() -> Self {
        Self { kind: AcquisitionKind::Ei { xi: None }, goal: Goal::Minimize }
    }

    pub fn lcb() -> Self {
        Self { kind: AcquisitionKind::Lcb { beta: 2.0 }, goal: Goal::Minimize }
    }

    pub fn pi() -> Self {
        Self { kind: AcquisitionKind::Pi { xi: None }, goal: Goal::Minimize }
    }

    pub fn maximizing(mut self) -> Self {
        self.goal = Goal::Maximize;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            AcquisitionKind::Ei { xi: Some(xi) } | AcquisitionKind::Pi { xi: Some(xi) } if !(xi >= 0.0 && xi.is_finite()) => {
                Err(Error::Config(format!("jitter must be non-negative, got {xi}")))
            }
            AcquisitionKind::Lcb { beta } if !(beta > 0.0 && beta.is_finite()) => {
                Err(Error::Config(format!("exploration weight must be positive, got {beta}")))
            }
            _ => Ok(()),
        }
    }
}

/// An acquisition bound to a model and the current incumbent. Outputs are
/// sign-flipped for maximization so every formula stays in minimization form.
pub struct ModelAcquisition<'a, M: ?Sized> {
    model: &'a M,
    kind: AcquisitionKind,
    sign: f64,
    y_best: f64,
    xi: f64,
}

impl<'a, M: Model + ?Sized> ModelAcquisition<'a, M> {
    /// `observed` are the raw outputs seen so far (used for the incumbent
    /// and the default jitter).
    pub fn new(model: &'a M, config: &AcquisitionConfig, observed: &[f64]) -> Result<Self> {
        config.validate()?;
        let sign = match config.goal {
            Goal::Minimize => 1.0,
            Goal::Maximize => -1.0,
        };
        let y_best = observed.iter().map(|v| sign * v).fold(f64::INFINITY, f64::min);
        let default_xi = || {
            let n = observed.len().max(1) as f64;
            let m = observed.iter().sum::<f64>() / n;
            0.01 * (observed.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
        };
        let xi = match config.kind {
            AcquisitionKind::Ei { xi } | AcquisitionKind::Pi { xi } => xi.unwrap_or_else(default_xi),
            AcquisitionKind::Lcb { .. } => 0.0,
        };
        let needs_incumbent = !matches!(config.kind, AcquisitionKind::Lcb { .. });
        if needs_incumbent && !y_best.is_finite() {
            return Err(Error::Config("improvement acquisitions need at least one observation".into()));
        }
        Ok(Self { model, kind: config.kind, sign, y_best, xi })
    }

    pub fn incumbent(&self) -> f64 {
        self.sign * self.y_best
    }

    fn parts(&self, mu: f64, sigma: f64) -> (f64, f64, f64) {
        let mu = self.sign * mu;
        let (v, dmu, dsigma) = match self.kind {
            AcquisitionKind::Ei { .. } => ei_parts(mu, sigma, self.y_best, self.xi),
            AcquisitionKind::Pi { .. } => pi_parts(mu, sigma, self.y_best, self.xi),
            AcquisitionKind::Lcb { beta } => (-(mu - beta * sigma), -1.0, beta),
        };
        (v, self.sign * dmu, dsigma)
    }
}

impl<M: Model + ?Sized> Acquisition for ModelAcquisition<'_, M> {
    fn evaluate(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        let p = self.model.predict(x)?;
        Ok(DVector::from_iterator(p.len(), (0..p.len()).map(|i| self.parts(p.mean[i], p.variance[i].max(0.0).sqrt()).0)))
    }

    fn has_gradients(&self) -> bool {
        self.model.capabilities().has_gradients
    }

    fn evaluate_with_gradient(&self, x: &[f64]) -> Result<(f64, DVector<f64>)> {
        let q = DMatrix::from_row_slice(1, x.len(), x);
        let p = self.model.predict(&q)?;
        let g = self.model.predict_gradients(&q)?;
        let sigma = p.variance[0].max(0.0).sqrt();
        let (v, dmu, dsigma) = self.parts(p.mean[0], sigma);
        let grad = DVector::from_iterator(
            x.len(),
            (0..x.len()).map(|d| {
                let ds = if sigma < SIGMA_FLOOR { 0.0 } else { g.variance[(0, d)] / (2.0 * sigma) };
                dmu * g.mean[(0, d)] + dsigma * ds
            }),
        );
        Ok((v, grad))
    }
}

/// Next point = argmax of the configured acquisition under the current model.
#[derive(Debug, Clone)]
pub struct BayesOptCalculator {
    pub acquisition: AcquisitionConfig,
    pub optimizer: AcquisitionOptimizerConfig,
    pub output_column: usize,
}

impl BayesOptCalculator {
    pub fn new(acquisition: AcquisitionConfig) -> Self {
        Self { acquisition, optimizer: AcquisitionOptimizerConfig::default(), output_column: 0 }
    }

    pub fn with_optimizer(mut self, optimizer: AcquisitionOptimizerConfig) -> Self {
        self.optimizer = optimizer;
        self
    }
}

impl<M: Model + ?Sized> CandidatePointCalculator<M> for BayesOptCalculator {
    fn next_point(&mut self, model: &M, state: &LoopState, space: &ParameterSpace, seed: u64) -> Result<Candidate> {
        let observed: Vec<f64> = state.output_column(self.output_column).iter().copied().collect();
        let acq = ModelAcquisition::new(model, &self.acquisition, &observed)?;
        let best = optimize_acquisition(&acq, space, &self.optimizer, seed)?;
        Ok(Candidate { x: best.x, acquisition: Some(best.value) })
    }
}

/// Evaluates the default initial design of `space` and runs `iterations`
/// loop passes with `calculator`, refitting `model` every iteration.
pub fn run_optimization<M, C>(
    space: ParameterSpace,
    model: M,
    calculator: C,
    function: &mut dyn UserFunction,
    initial_points: usize,
    iterations: usize,
    seed: u64,
) -> Result<(LoopState, M)>
where
    M: Model,
    C: CandidatePointCalculator<M>,
{
    let design = if space.is_continuous() {
        space.sample_latin_hypercube(initial_points, derive_seed(seed, 0))?
    } else {
        space.sample_uniform(initial_points, derive_seed(seed, 0))
    };
    // built first so capability gating happens before any evaluation
    let mut outer = OuterLoop::new(space, model, calculator, RefitUpdater::default())?;
    let mut state = evaluate_design(function, &design)?;
    outer.run(function, &fixed_iterations(iterations), &mut state, derive_seed(seed, 1))?;
    Ok((state, outer.into_model()))
}
