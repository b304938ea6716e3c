//! Plugging a user-defined emulator into the loop. The model below is a
//! Shepard (inverse-distance) interpolator whose variance grows with the
//! distance to the nearest observation; it implements only the required
//! part of the model contract, so the acquisition optimizer falls back to
//! gradient-free search.

use nalgebra::{DMatrix, DVector};
use outerloop::bayesopt::{run_optimization, AcquisitionConfig, BayesOptCalculator};
use outerloop::model::{FitReport, Model, ModelCapabilities, Prediction};
use outerloop::outer_loop::ScalarFunction;
use outerloop::space::ParameterSpace;
use outerloop::Error;

#[derive(Clone)]
struct Shepard {
    x: DMatrix<f64>,
    y: DVector<f64>,
    scale: f64,
}

impl Model for Shepard {
    fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    fn n_data(&self) -> usize {
        self.x.nrows()
    }

    fn capabilities(&self) -> ModelCapabilities {
        ModelCapabilities::NONE
    }

    fn predict(&self, q: &DMatrix<f64>) -> outerloop::Result<Prediction> {
        if q.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: q.ncols() });
        }
        let mut mean = DVector::zeros(q.nrows());
        let mut var = DVector::from_element(q.nrows(), self.scale);
        for i in 0..q.nrows() {
            let (mut num, mut den, mut nearest) = (0.0, 0.0, f64::INFINITY);
            for j in 0..self.x.nrows() {
                let d2 = (q.row(i) - self.x.row(j)).norm_squared();
                if d2 == 0.0 {
                    (num, den, nearest) = (self.y[j], 1.0, 0.0);
                    break;
                }
                num += self.y[j] / d2;
                den += 1.0 / d2;
                nearest = nearest.min(d2.sqrt());
            }
            if den > 0.0 {
                mean[i] = num / den;
                var[i] = self.scale * (1.0 - (-nearest * nearest / 0.02).exp());
            }
        }
        Ok(Prediction { mean, variance: var })
    }

    fn noise_variance(&self) -> f64 {
        0.0
    }

    fn set_data(&mut self, x: &DMatrix<f64>, y: &DVector<f64>) -> outerloop::Result<()> {
        self.x = x.clone();
        self.y = y.clone();
        let m = y.mean();
        self.scale = y.iter().map(|v| (v - m).powi(2)).sum::<f64>().max(1e-12) / y.len() as f64;
        Ok(())
    }

    fn optimize_hyperparameters(&mut self, _seed: u64) -> outerloop::Result<FitReport> {
        Ok(FitReport { objective_before: 0.0, objective_after: 0.0, warning: false })
    }
}

fn main() -> outerloop::Result<()> {
    let space = ParameterSpace::continuous_box(&[(0.0, 1.0), (0.0, 1.0)])?;
    let model = Shepard { x: DMatrix::zeros(0, 2), y: DVector::zeros(0), scale: 1.0 };
    let mut f = ScalarFunction::new(|x: &[f64]| (x[0] - 0.3).powi(2) + (x[1] - 0.7).powi(2));
    let (state, _) = run_optimization(space, model, BayesOptCalculator::new(AcquisitionConfig::ei()), &mut f, 5, 25, 0)?;
    let (i, best) = state.best(0).unwrap();
    println!("best {best:.5} at {:?} (optimum 0 at [0.3, 0.7])", state.input_row(i));
    Ok(())
}
