//! Swapping one component at a time: the same Branin loop with four
//! acquisition strategies and two backends over five seeds, reporting the
//! median best value of each combination.

use outerloop::bayesopt::{run_optimization, AcquisitionConfig, BayesOptCalculator, RandomSearch};
use outerloop::blr::{BlrModel, FeatureMap};
use outerloop::gp::GpModel;
use outerloop::model::Model;
use outerloop::outer_loop::{CandidatePointCalculator, ScalarFunction};
use outerloop::tasks::objective;
use outerloop::tasks::objectives::branin;

fn best_of<M: Model, C: CandidatePointCalculator<M>>(model: M, calc: C, seed: u64) -> f64 {
    let space = objective("branin").unwrap().space();
    let mut f = ScalarFunction::new(branin);
    let (state, _) = run_optimization(space, model, calc, &mut f, 5, 25, seed).expect("loop runs");
    state.best(0).unwrap().1
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn main() {
    let bounds = objective("branin").unwrap().space().encoded_bounds();
    let ls: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.15 * (hi - lo)).collect();
    let gp = || GpModel::for_bounds(&bounds);
    let blr = |seed| BlrModel::new(FeatureMap::random_cosine(200, &ls, seed), 1.0, 1e4).unwrap();
    let seeds = 0..5u64;
    let acquisitions = [("ei", AcquisitionConfig::ei()), ("lcb", AcquisitionConfig::lcb()), ("pi", AcquisitionConfig::pi())];

    println!("{:<8}{:<8}{:>12}", "backend", "acq", "median best");
    for (name, acq) in &acquisitions {
        let g = seeds.clone().map(|s| best_of(gp(), BayesOptCalculator::new(acq.clone()), s)).collect();
        println!("{:<8}{:<8}{:>12.4}", "gp", name, median(g));
        let b = seeds.clone().map(|s| best_of(blr(s), BayesOptCalculator::new(acq.clone()), s)).collect();
        println!("{:<8}{:<8}{:>12.4}", "blr", name, median(b));
    }
    let r = seeds.map(|s| best_of(gp(), RandomSearch, s)).collect();
    println!("{:<8}{:<8}{:>12.4}", "-", "random", median(r));
}
