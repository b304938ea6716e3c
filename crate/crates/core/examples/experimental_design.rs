//! Builds an emulator of the Forrester function by integrated variance
//! reduction and compares its test error with a random design of the
//! same size.

use nalgebra::DMatrix;
use outerloop::bayesopt::{run_optimization, RandomSearch};
use outerloop::expdesign::{DesignAcquisition, ExperimentalDesignCalculator};
use outerloop::gp::GpModel;
use outerloop::model::Model;
use outerloop::outer_loop::ScalarFunction;
use outerloop::tasks::objectives::forrester_high;

fn rmse(model: &dyn Model) -> outerloop::Result<f64> {
    let grid = DMatrix::from_fn(201, 1, |i, _| i as f64 / 200.0);
    let p = model.predict(&grid)?;
    let sq: f64 = (0..201).map(|i| (p.mean[i] - forrester_high(&[grid[(i, 0)]])).powi(2)).sum();
    Ok((sq / 201.0).sqrt())
}

fn main() -> outerloop::Result<()> {
    let space = outerloop::space::ParameterSpace::continuous_box(&[(0.0, 1.0)])?;
    let gp = || GpModel::for_bounds(&[(0.0, 1.0)]);
    let mut f = ScalarFunction::new(forrester_high);

    let ivr = ExperimentalDesignCalculator::new(DesignAcquisition::ivr())?;
    let (_, designed) = run_optimization(space.clone(), gp(), ivr, &mut f, 3, 17, 4)?;
    let (_, random) = run_optimization(space, gp(), RandomSearch, &mut f, 3, 17, 4)?;
    println!("20-point IVR design   : RMSE {:.4}", rmse(&designed)?);
    println!("20-point random design: RMSE {:.4}", rmse(&random)?);
    Ok(())
}
