//! Closed-form benchmark functions with their domains.

use std::f64::consts::PI;

use crate::space::ParameterSpace;

pub fn branin(x: &[f64]) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0
}

pub const BRANIN_MINIMUM: f64 = 0.397_887_357_729_738;

pub fn forrester_high(x: &[f64]) -> f64 {
    (6.0 * x[0] - 2.0).powi(2) * (12.0 * x[0] - 4.0).sin()
}

pub fn forrester_low(x: &[f64]) -> f64 {
    0.5 * forrester_high(x) + 10.0 * (x[0] - 0.5) - 5.0
}

pub fn ishigami_with(x: &[f64], a: f64, b: f64) -> f64 {
    x[0].sin() + a * x[1].sin().powi(2) + b * x[2].powi(4) * x[0].sin()
}

/// Ishigami with the usual `a = 7`, `b = 0.1`.
pub fn ishigami(x: &[f64]) -> f64 {
    ishigami_with(x, 7.0, 0.1)
}

/// Analytic first-order Sobol indices of [`ishigami_with`] on `[-π, π]³`.
pub fn ishigami_first_order(a: f64, b: f64) -> [f64; 3] {
    let pi4 = PI.powi(4);
    let v = a * a / 8.0 + b * pi4 / 5.0 + b * b * PI.powi(8) / 18.0 + 0.5;
    let v1 = 0.5 * (1.0 + b * pi4 / 5.0).powi(2);
    let v2 = a * a / 8.0;
    [v1 / v, v2 / v, 0.0]
}

pub fn quadratic(x: &[f64]) -> f64 {
    (x[0] - 0.5).powi(2)
}

pub fn linear_x1(x: &[f64]) -> f64 {
    x[0]
}

pub fn additive(x: &[f64]) -> f64 {
    x[0] + 2.0 * x[1]
}

pub fn sin10(x: &[f64]) -> f64 {
    (10.0 * x[0]).sin() + 1.0
}

/// Two competing figures of merit on `[0, 1]²`.
pub fn two_objectives(x: &[f64]) -> [f64; 2] {
    [(x[0] - 0.2).powi(2) + (x[1] - 0.7).powi(2), (x[0] - 0.8).powi(2) + (x[1] - 0.1).powi(2)]
}

/// Scalarizes several figures of merit into a single objective.
pub fn weighted_sum(values: &[f64], weights: &[f64]) -> f64 {
    values.iter().zip(weights).map(|(v, w)| v * w).sum()
}

pub fn weighted_toy(x: &[f64]) -> f64 {
    weighted_sum(&two_objectives(x), &[0.5, 0.5])
}

/// A catalog entry.
#[derive(Debug, Clone, Copy)]
pub struct Objective {
    pub id: &'static str,
    pub bounds: &'static [(f64, f64)],
    pub function: fn(&[f64]) -> f64,
    /// Global minimum over the domain, when known.
    pub minimum: Option<f64>,
}

impl Objective {
    pub fn space(&self) -> ParameterSpace {
        ParameterSpace::continuous_box(self.bounds).expect("catalog bounds are valid")
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.function)(x)
    }
}

const ISHIGAMI_BOUNDS: &[(f64, f64)] = &[(-PI, PI), (-PI, PI), (-PI, PI)];

pub fn standard_objectives() -> Vec<Objective> {
    vec![
        Objective { id: "branin", bounds: &[(-5.0, 10.0), (0.0, 15.0)], function: branin, minimum: Some(BRANIN_MINIMUM) },
        Objective { id: "forrester", bounds: &[(0.0, 1.0)], function: forrester_high, minimum: Some(-6.020_740_055_767_08) },
        Objective { id: "forrester-low", bounds: &[(0.0, 1.0)], function: forrester_low, minimum: None },
        Objective { id: "ishigami", bounds: ISHIGAMI_BOUNDS, function: ishigami, minimum: None },
        Objective { id: "quadratic", bounds: &[(0.0, 1.0)], function: quadratic, minimum: Some(0.0) },
        Objective { id: "linear-x1", bounds: &[(0.0, 1.0), (0.0, 1.0)], function: linear_x1, minimum: Some(0.0) },
        Objective { id: "additive", bounds: &[(0.0, 1.0), (0.0, 1.0)], function: additive, minimum: Some(0.0) },
        Objective { id: "sin10", bounds: &[(0.0, 1.0)], function: sin10, minimum: None },
        Objective { id: "weighted-sum", bounds: &[(0.0, 1.0), (0.0, 1.0)], function: weighted_toy, minimum: None },
    ]
}

pub fn objective(id: &str) -> Option<Objective> {
    standard_objectives().into_iter().find(|o| o.id == id)
}
