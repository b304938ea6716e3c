//! Sobol indices of the Ishigami function, from the function itself and
//! from a GP emulator trained on 200 evaluations.

use outerloop::gp::GpModel;
use outerloop::model::Model;
use outerloop::sensitivity::{emulator_sobol, function_sobol};
use outerloop::tasks::objectives::{ishigami, ishigami_first_order};
use outerloop::tasks::objective;

fn main() -> outerloop::Result<()> {
    let space = objective("ishigami").expect("catalog task").space();
    let exact = ishigami_first_order(7.0, 0.1);

    let direct = function_sobol(ishigami, &space, 1 << 14, 0)?;
    println!("analytic  S1 {:.4?}", exact);
    println!("direct    S1 {:.4?} (± {:.4?}), ST {:.4?}", direct.first_order, direct.first_order_std.unwrap(), direct.total);

    let x = space.sample_latin_hypercube(200, 1)?;
    let y = nalgebra::DVector::from_iterator(200, (0..200).map(|i| ishigami(&[x[(i, 0)], x[(i, 1)], x[(i, 2)]])));
    let mut gp = GpModel::for_bounds(&space.encoded_bounds());
    gp.set_data(&x, &y)?;
    gp.fit(5, 2)?;
    let emulated = emulator_sobol(&gp, &space, 1 << 13, 3)?;
    println!("emulator  S1 {:.4?}, ST {:.4?}", emulated.first_order, emulated.total);
    Ok(())
}
