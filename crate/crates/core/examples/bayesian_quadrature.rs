//! Integrates sin(10x) + x over [0, 1] with a GP, choosing nodes by
//! uncertainty sampling, and compares with the exact value.

use outerloop::gp::GpModel;
use outerloop::outer_loop::{evaluate_design, fixed_iterations, OuterLoop, RefitUpdater, ScalarFunction};
use outerloop::quadrature::{IntegrableModel, IntegrationBox, QuadratureGp, UncertaintySampling};

fn main() -> outerloop::Result<()> {
    let domain = IntegrationBox::new(&[(0.0, 1.0)])?;
    let space = domain.to_space();
    let mut f = ScalarFunction::new(|x: &[f64]| (10.0 * x[0]).sin() + x[0]);
    let exact = (1.0 - 10f64.cos()) / 10.0 + 0.5;

    let mut state = evaluate_design(&mut f, &space.sample_latin_hypercube(3, 0)?)?;
    let model = QuadratureGp::new(GpModel::for_bounds(domain.bounds()).with_fixed_noise(1e-10), domain)?;
    let calculator = UncertaintySampling { optimizer: Default::default() };
    let mut outer = OuterLoop::new(space, model, calculator, RefitUpdater::default())?;
    outer.on_iteration_end(|s| {
        if s.iteration() % 4 == 0 {
            println!("iteration {:>2}: {} nodes", s.iteration(), s.len());
        }
    });
    outer.run(&mut f, &fixed_iterations(12), &mut state, 1)?;

    let est = outer.model().integrate()?;
    println!("integral {:.6} ± {:.2e} (exact {exact:.6}, error {:.2e})", est.mean, est.std(), (est.mean - exact).abs());
    Ok(())
}
