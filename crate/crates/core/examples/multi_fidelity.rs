//! Two-fidelity emulation of the Forrester function from 11 cheap and 4
//! expensive evaluations.

use nalgebra::{DMatrix, DVector};
use outerloop::multifidelity::{forrester_comparison, Ar1Model, Fidelity, TwoFidelityData};
use outerloop::tasks::objectives::{forrester_high, forrester_low};

fn main() -> outerloop::Result<()> {
    let xl = DMatrix::from_fn(11, 1, |i, _| i as f64 / 10.0);
    let xh = DMatrix::from_column_slice(4, 1, &[0.0, 0.4, 0.6, 1.0]);
    let eval = |x: &DMatrix<f64>, f: fn(&[f64]) -> f64| DVector::from_fn(x.nrows(), |i, _| f(&[x[(i, 0)]]));
    let data = TwoFidelityData::new(xl.clone(), eval(&xl, forrester_low), xh.clone(), eval(&xh, forrester_high))?;
    let model = Ar1Model::fit(&data, 0)?;
    println!("rho = {:.3}", model.rho());

    let q = DMatrix::from_column_slice(5, 1, &[0.1, 0.3, 0.5, 0.75, 0.9]);
    let high = model.predict_fidelity(&q, Fidelity::High)?;
    for i in 0..q.nrows() {
        let x = q[(i, 0)];
        println!("x = {x:.2}: {:>8.3} ± {:.3}  (true {:>8.3})", high.mean[i], high.variance[i].sqrt(), forrester_high(&[x]));
    }

    for seed in 0..3 {
        let c = forrester_comparison(11, 4, seed)?;
        println!("seed {seed}: RMSE two-fidelity {:.3} vs high-only GP {:.3}", c.rmse_ar1, c.rmse_single);
    }
    Ok(())
}
