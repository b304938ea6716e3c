//! Minimizes the Branin function with a GP and expected improvement, then
//! repeats the run with a Bayesian linear regression backend.

use outerloop::bayesopt::{run_optimization, AcquisitionConfig, BayesOptCalculator};
use outerloop::blr::{BlrModel, FeatureMap};
use outerloop::gp::GpModel;
use outerloop::outer_loop::ScalarFunction;
use outerloop::tasks::objectives::{branin, BRANIN_MINIMUM};
use outerloop::tasks::objective;

fn main() -> outerloop::Result<()> {
    let task = objective("branin").expect("catalog task");
    let space = task.space();
    let bounds = space.encoded_bounds();

    let mut f = ScalarFunction::new(branin);
    let gp = GpModel::for_bounds(&bounds);
    let (state, _) = run_optimization(space.clone(), gp, BayesOptCalculator::new(AcquisitionConfig::ei()), &mut f, 5, 45, 0)?;
    let (i, best) = state.best(0).expect("non-empty");
    println!("gp  : best {best:.4} at {:?} after {} evaluations (optimum {BRANIN_MINIMUM:.4})", state.input_row(i), state.len());

    let ls: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.15 * (hi - lo)).collect();
    let blr = BlrModel::new(FeatureMap::random_cosine(200, &ls, 11), 1.0, 1e4)?;
    let (state, _) = run_optimization(space, blr, BayesOptCalculator::new(AcquisitionConfig::lcb()), &mut f, 5, 45, 0)?;
    println!("blr : best {:.4} after {} evaluations", state.best(0).unwrap().1, state.len());
    Ok(())
}
