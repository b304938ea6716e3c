//! Every backend through the same contract checks and the same loops.

use nalgebra::{DMatrix, DVector};

use outerloop::bayesopt::{run_optimization, AcquisitionConfig, BayesOptCalculator, RandomSearch};
use outerloop::blr::{BlrModel, FeatureMap};
use outerloop::expdesign::{DesignAcquisition, ExperimentalDesignCalculator};
use outerloop::gp::{GpModel, RbfKernel};
use outerloop::model::conformance::{self, Interpolation};
use outerloop::model::Model;
use outerloop::multifidelity::Ar1Model;
use outerloop::outer_loop::{OuterLoop, RefitUpdater, ScalarFunction};
use outerloop::quadrature::UncertaintySampling;
use outerloop::space::ParameterSpace;
use outerloop::tasks::objectives::{forrester_high, forrester_low, quadratic};
use outerloop::Error;

fn gp() -> GpModel {
    GpModel::new(RbfKernel::isotropic(1.0, 0.2, 1).unwrap()).with_fixed_noise(0.0).with_restarts(3)
}

fn blr() -> BlrModel {
    BlrModel::new(FeatureMap::random_cosine(200, &[0.2], 11), 1.0, 1e4).unwrap()
}

fn ar1() -> Ar1Model {
    let xl = DMatrix::from_fn(21, 1, |i, _| i as f64 / 20.0);
    let yl = DVector::from_fn(21, |i, _| forrester_low(&[xl[(i, 0)]]));
    let mut low = GpModel::for_bounds(&[(0.0, 1.0)]).with_fixed_noise(1e-8);
    low.set_data(&xl, &yl).unwrap();
    low.fit(3, 0).unwrap();
    Ar1Model::from_low(low)
}

fn assert_conformant<M: Model + Clone>(name: &str, fresh: &M, mode: Interpolation) {
    for (check, outcome) in conformance::run_all(fresh, mode) {
        assert!(outcome.is_ok(), "{name} / {check}: {outcome:?}");
    }
}

#[test]
fn conformance_for_every_backend() {
    assert_conformant("gp", &gp(), Interpolation::Exact(1e-6));
    assert_conformant("blr", &blr(), Interpolation::WithinStd(3.0));
    let xl = DMatrix::from_fn(40, 1, |i, _| i as f64 / 39.0);
    let yl = xl.map(|v| (6.0 * v).sin()).column(0).into_owned();
    let mut low = GpModel::for_bounds(&[(0.0, 1.0)]).with_fixed_noise(1e-8);
    low.set_data(&xl, &yl).unwrap();
    low.fit(3, 0).unwrap();
    assert_conformant("ar1", &Ar1Model::from_low(low), Interpolation::Exact(1e-3));
}

/// One generic driver; nothing below branches on the backend.
fn bo_then_ed<M: Model + Clone>(model: M) -> (f64, usize) {
    let space = ParameterSpace::continuous_box(&[(0.0, 1.0)]).unwrap();
    let mut f = ScalarFunction::new(quadratic);
    let (state, _) =
        run_optimization(space.clone(), model.clone(), BayesOptCalculator::new(AcquisitionConfig::ei()), &mut f, 4, 8, 1).unwrap();
    let best = state.best(0).unwrap().1;
    let ed = ExperimentalDesignCalculator::new(DesignAcquisition::ModelVariance).unwrap();
    let (state, _) = run_optimization(space, model, ed, &mut f, 3, 5, 2).unwrap();
    (best, state.len())
}

#[test]
fn same_loops_run_on_gp_and_blr() {
    for (name, (best, n)) in [("gp", bo_then_ed(GpModel::for_bounds(&[(0.0, 1.0)]))), ("blr", bo_then_ed(blr()))] {
        assert!(best < 1e-3, "{name}: {best}");
        assert_eq!(n, 8, "{name}");
    }
}

#[test]
fn two_fidelity_model_drives_optimization_at_high_fidelity() {
    let space = ParameterSpace::continuous_box(&[(0.0, 1.0)]).unwrap();
    let mut f = ScalarFunction::new(forrester_high);
    let (state, model) = run_optimization(space, ar1(), BayesOptCalculator::new(AcquisitionConfig::ei()), &mut f, 3, 8, 5).unwrap();
    assert_eq!(model.n_data(), 11);
    // global minimum near x = 0.757
    assert!(state.best(0).unwrap().1 < -5.5, "{:?}", state.best(0));
}

#[test]
fn quadrature_gating_rejects_non_integrable_backends() {
    let space = ParameterSpace::continuous_box(&[(0.0, 1.0)]).unwrap();
    let calc = UncertaintySampling { optimizer: Default::default() };
    for result in [
        OuterLoop::new(space.clone(), blr(), calc.clone(), RefitUpdater::default()).map(|_| ()),
        OuterLoop::new(space.clone(), gp(), calc.clone(), RefitUpdater::default()).map(|_| ()),
    ] {
        assert!(matches!(result, Err(Error::CapabilityMismatch(_))), "{result:?}");
    }
    // the random baseline needs nothing from any backend
    assert!(OuterLoop::new(space, blr(), RandomSearch, RefitUpdater::default()).is_ok());
}
