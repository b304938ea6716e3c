//! Experimental design: place evaluations where they make the emulator
//! globally more accurate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::acquisition::{optimize_acquisition, Acquisition, AcquisitionOptimizerConfig};
use crate::error::{Error, Result};
use crate::model::{Model, ModelCapabilities, Prediction};
use crate::outer_loop::{Candidate, CandidatePointCalculator, LoopState};
use crate::rng::derive_seed;
use crate::space::ParameterSpace;

/// The predictive variance itself.
pub fn model_variance(pred: &Prediction) -> DVector<f64> {
    pred.variance.clone()
}

/// Mean drop in latent predictive variance over `probes` after observing
/// each row of `x`, from the rank-one posterior update (no refit):
/// `(1/M) Σ_j c(p_j, x)² / (c(x, x) + σ²_noise)`.
pub fn integrated_variance_reduction<M: Model + ?Sized>(
    model: &M,
    x: &DMatrix<f64>,
    probes: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    if probes.nrows() == 0 {
        return Err(Error::Config("integrated variance reduction needs probe points".into()));
    }
    let cross = model.posterior_covariance(probes, x)?;
    // latent variance at the candidates; backends differ in whether
    // `predict` includes observation noise
    let own = model.posterior_covariance(x, x)?.diagonal();
    let noise = model.noise_variance();
    let m = probes.nrows() as f64;
    Ok(DVector::from_iterator(
        x.nrows(),
        (0..x.nrows()).map(|i| {
            let den = own[i] + noise;
            if den <= 1e-300 {
                return 0.0;
            }
            cross.column(i).norm_squared() / (den * m)
        }),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DesignAcquisition {
    ModelVariance,
    /// Probe points are redrawn every iteration.
    IntegratedVarianceReduction { mc_points: usize },
}

impl DesignAcquisition {
    pub fn ivr() -> Self {
        Self::IntegratedVarianceReduction { mc_points: 1000 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::IntegratedVarianceReduction { mc_points } if mc_points < 100 => {
                Err(Error::Config(format!("IVR needs at least 100 probe points, got {mc_points}")))
            }
            _ => Ok(()),
        }
    }
}

pub struct VarianceAcquisition<'a, M: ?Sized>(pub &'a M);

impl<M: Model + ?Sized> Acquisition for VarianceAcquisition<'_, M> {
    fn evaluate(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(model_variance(&self.0.predict(x)?))
    }

    fn has_gradients(&self) -> bool {
        self.0.capabilities().has_gradients
    }

    fn evaluate_with_gradient(&self, x: &[f64]) -> Result<(f64, DVector<f64>)> {
        let q = DMatrix::from_row_slice(1, x.len(), x);
        let v = self.0.predict(&q)?.variance[0];
        Ok((v, self.0.predict_gradients(&q)?.variance.row(0).transpose()))
    }
}

pub struct IvrAcquisition<'a, M: ?Sized> {
    pub model: &'a M,
    pub probes: DMatrix<f64>,
}

impl<M: Model + ?Sized> Acquisition for IvrAcquisition<'_, M> {
    fn evaluate(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        integrated_variance_reduction(self.model, x, &self.probes)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentalDesignCalculator {
    pub acquisition: DesignAcquisition,
    pub optimizer: AcquisitionOptimizerConfig,
}

impl ExperimentalDesignCalculator {
    pub fn new(acquisition: DesignAcquisition) -> Result<Self> {
        acquisition.validate()?;
        Ok(Self { acquisition, optimizer: AcquisitionOptimizerConfig::default() })
    }

    pub fn with_optimizer(mut self, optimizer: AcquisitionOptimizerConfig) -> Self {
        self.optimizer = optimizer;
        self
    }
}

impl<M: Model + ?Sized> CandidatePointCalculator<M> for ExperimentalDesignCalculator {
    fn required_capabilities(&self) -> ModelCapabilities {
        match self.acquisition {
            DesignAcquisition::ModelVariance => ModelCapabilities::NONE,
            DesignAcquisition::IntegratedVarianceReduction { .. } => {
                ModelCapabilities { has_joint_covariance: true, ..ModelCapabilities::NONE }
            }
        }
    }

    fn tolerates_untrained(&self) -> bool {
        true
    }

    fn next_point(&mut self, model: &M, _state: &LoopState, space: &ParameterSpace, seed: u64) -> Result<Candidate> {
        let best = match self.acquisition {
            DesignAcquisition::ModelVariance => {
                optimize_acquisition(&VarianceAcquisition(model), space, &self.optimizer, seed)?
            }
            DesignAcquisition::IntegratedVarianceReduction { mc_points } => {
                let probes = space.sample_uniform(mc_points, derive_seed(seed, 7));
                optimize_acquisition(&IvrAcquisition { model, probes }, space, &self.optimizer, seed)?
            }
        };
        Ok(Candidate { x: best.x, acquisition: Some(best.value) })
    }
}
