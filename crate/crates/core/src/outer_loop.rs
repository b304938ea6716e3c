//! The decision loop shared by every method:
//!
//! ```text
//! while the stopping condition is not met:
//!     pick the next input with a candidate-point calculator
//!     evaluate the user function there
//!     update the model with the new observation
//! ```
//!
//! Method modules plug in by supplying a [`CandidatePointCalculator`] (and,
//! rarely, a custom [`ModelUpdater`]); nothing in here knows which method
//! is running.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{Model, ModelCapabilities};
use crate::rng::derive_seed;
use crate::space::ParameterSpace;

/// Append-only record of everything evaluated so far.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopState {
    input_dim: usize,
    output_dim: usize,
    inputs: Vec<f64>,
    outputs: Vec<f64>,
    row_iterations: Vec<usize>,
    costs: Option<Vec<f64>>,
    acquisitions: Vec<Option<f64>>,
    iteration: usize,
}

#[derive(Serialize)]
struct JsonRecord<'a> {
    iter: usize,
    x: &'a [f64],
    y: &'a [f64],
}

impl LoopState {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            output_dim,
            inputs: Vec::new(),
            outputs: Vec::new(),
            row_iterations: Vec::new(),
            costs: None,
            acquisitions: Vec::new(),
            iteration: 0,
        }
    }

    /// State seeded with an already evaluated initial design (iteration 0).
    pub fn from_design(inputs: &DMatrix<f64>, outputs: &DMatrix<f64>) -> Result<Self> {
        if inputs.nrows() != outputs.nrows() {
            return Err(Error::DimensionMismatch { expected: inputs.nrows(), got: outputs.nrows() });
        }
        let mut state = Self::new(inputs.ncols(), outputs.ncols());
        for i in 0..inputs.nrows() {
            let x: Vec<f64> = inputs.row(i).iter().copied().collect();
            let y: Vec<f64> = outputs.row(i).iter().copied().collect();
            state.append_observation(&x, &y)?;
        }
        Ok(state)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn len(&self) -> usize {
        self.row_iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_iterations.is_empty()
    }

    /// Number of completed loop passes.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn inputs(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.input_dim, &self.inputs)
    }

    pub fn outputs(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.output_dim, &self.outputs)
    }

    pub fn output_column(&self, column: usize) -> DVector<f64> {
        DVector::from_iterator(self.len(), (0..self.len()).map(|i| self.outputs[i * self.output_dim + column]))
    }

    pub fn input_row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn output_row(&self, i: usize) -> &[f64] {
        &self.outputs[i * self.output_dim..(i + 1) * self.output_dim]
    }

    /// Loop iteration that produced row `i` (0 for initial-design rows).
    pub fn row_iteration(&self, i: usize) -> usize {
        self.row_iterations[i]
    }

    pub fn costs(&self) -> Option<&[f64]> {
        self.costs.as_deref()
    }

    /// Maximal acquisition value recorded by the most recent iteration.
    pub fn last_acquisition(&self) -> Option<f64> {
        self.acquisitions.last().copied().flatten()
    }

    pub fn acquisition_history(&self) -> &[Option<f64>] {
        &self.acquisitions
    }

    /// Row index and value of the smallest entry of `column`.
    pub fn best(&self, column: usize) -> Option<(usize, f64)> {
        (0..self.len())
            .map(|i| (i, self.outputs[i * self.output_dim + column]))
            .fold(None, |acc, (i, v)| match acc {
                Some((_, b)) if b <= v => acc,
                _ => Some((i, v)),
            })
    }

    fn validate_row(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: x.len() });
        }
        if y.len() != self.output_dim {
            return Err(Error::DimensionMismatch { expected: self.output_dim, got: y.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation input".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation output".into()));
        }
        Ok(())
    }

    /// Appends one observation at the current iteration. On error the state
    /// is left untouched.
    pub fn append_observation(&mut self, x: &[f64], y: &[f64]) -> Result<()> {
        self.validate_row(x, y)?;
        if self.costs.is_some() {
            return Err(Error::Config("this state tracks costs; use append_observation_with_cost".into()));
        }
        self.push(x, y, self.iteration);
        Ok(())
    }

    pub fn append_observation_with_cost(&mut self, x: &[f64], y: &[f64], cost: f64) -> Result<()> {
        self.validate_row(x, y)?;
        if !cost.is_finite() {
            return Err(Error::NonFinite("observation cost".into()));
        }
        if self.costs.is_none() && !self.is_empty() {
            return Err(Error::Config("earlier observations carry no cost".into()));
        }
        self.push(x, y, self.iteration);
        self.costs.get_or_insert_with(Vec::new).push(cost);
        Ok(())
    }

    fn push(&mut self, x: &[f64], y: &[f64], iter: usize) {
        self.inputs.extend_from_slice(x);
        self.outputs.extend_from_slice(y);
        self.row_iterations.push(iter);
    }

    fn complete_iteration(&mut self, acquisition: Option<f64>) {
        self.iteration += 1;
        self.acquisitions.push(acquisition);
    }

    /// One `{"iter":..,"x":[..],"y":[..]}` line per evaluated point.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for i in 0..self.len() {
            let rec = JsonRecord { iter: self.row_iterations[i], x: self.input_row(i), y: self.output_row(i) };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

/// The system under study: maps a batch of input rows to output rows.
pub trait UserFunction {
    fn out_dim(&self) -> usize;

    fn evaluate(&mut self, x: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, String>;
}

/// Adapts a scalar closure `f(x) -> y`.
pub struct ScalarFunction<F> {
    f: F,
}

impl<F: FnMut(&[f64]) -> f64> ScalarFunction<F> {
    pub fn new(f: F) -> Self {
        Self { f }
    }
}

impl<F: FnMut(&[f64]) -> f64> UserFunction for ScalarFunction<F> {
    fn out_dim(&self) -> usize {
        1
    }

    fn evaluate(&mut self, x: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, String> {
        let mut out = DMatrix::zeros(x.nrows(), 1);
        for i in 0..x.nrows() {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            out[(i, 0)] = (self.f)(&row);
        }
        Ok(out)
    }
}

/// Adapts a closure returning a fixed-length output vector (or an error).
pub struct VectorFunction<F> {
    f: F,
    out_dim: usize,
}

impl<F: FnMut(&[f64]) -> std::result::Result<Vec<f64>, String>> VectorFunction<F> {
    pub fn new(out_dim: usize, f: F) -> Self {
        Self { f, out_dim }
    }
}

impl<F: FnMut(&[f64]) -> std::result::Result<Vec<f64>, String>> UserFunction for VectorFunction<F> {
    fn out_dim(&self) -> usize {
        self.out_dim
    }

    fn evaluate(&mut self, x: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, String> {
        let mut out = DMatrix::zeros(x.nrows(), self.out_dim);
        for i in 0..x.nrows() {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let y = (self.f)(&row)?;
            if y.len() != self.out_dim {
                return Err(format!("expected {} outputs, got {}", self.out_dim, y.len()));
            }
            for (j, v) in y.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }
}

/// Evaluates `function` and enforces its contract: one finite output row
/// per input row.
pub fn evaluate_checked(function: &mut dyn UserFunction, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let first_row = || x.row(0).iter().copied().collect::<Vec<_>>();
    let y = function.evaluate(x).map_err(|reason| Error::Evaluation {
        point: if x.nrows() > 0 { first_row() } else { vec![] },
        reason,
    })?;
    if y.nrows() != x.nrows() || y.ncols() != function.out_dim() {
        return Err(Error::Evaluation {
            point: if x.nrows() > 0 { first_row() } else { vec![] },
            reason: format!("returned {}×{} outputs for {} inputs", y.nrows(), y.ncols(), x.nrows()),
        });
    }
    for i in 0..y.nrows() {
        if y.row(i).iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation {
                point: x.row(i).iter().copied().collect(),
                reason: "non-finite output".into(),
            });
        }
    }
    Ok(y)
}

/// Evaluates an initial design and wraps it in a fresh [`LoopState`].
pub fn evaluate_design(function: &mut dyn UserFunction, design: &DMatrix<f64>) -> Result<LoopState> {
    let y = evaluate_checked(function, design)?;
    LoopState::from_design(design, &y)
}

pub trait StoppingCondition {
    fn should_stop(&self, state: &LoopState) -> bool;
}

impl<F: Fn(&LoopState) -> bool> StoppingCondition for F {
    fn should_stop(&self, state: &LoopState) -> bool {
        self(state)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixedIterations(pub usize);

impl StoppingCondition for FixedIterations {
    fn should_stop(&self, state: &LoopState) -> bool {
        state.iteration() >= self.0
    }
}

pub fn fixed_iterations(k: usize) -> FixedIterations {
    FixedIterations(k)
}

#[derive(Debug, Clone, Copy)]
pub struct AcquisitionBelow(f64);

impl StoppingCondition for AcquisitionBelow {
    fn should_stop(&self, state: &LoopState) -> bool {
        state.last_acquisition().is_some_and(|a| a < self.0)
    }
}

pub fn stop_when_acquisition_below(threshold: f64) -> Result<AcquisitionBelow> {
    if !(threshold > 0.0) {
        return Err(Error::Config(format!("acquisition threshold must be positive, got {threshold}")));
    }
    Ok(AcquisitionBelow(threshold))
}

/// A proposed input together with the acquisition value that selected it.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub x: DVector<f64>,
    pub acquisition: Option<f64>,
}

pub trait CandidatePointCalculator<M: ?Sized> {
    fn required_capabilities(&self) -> ModelCapabilities {
        ModelCapabilities::NONE
    }

    /// Whether the calculator can run before the model has seen any data.
    fn tolerates_untrained(&self) -> bool {
        false
    }

    fn next_point(&mut self, model: &M, state: &LoopState, space: &ParameterSpace, seed: u64) -> Result<Candidate>;
}

pub trait ModelUpdater<M: ?Sized> {
    fn update(&mut self, model: &mut M, state: &LoopState, seed: u64) -> Result<()>;
}

/// Refits the model on the full state after every observation and
/// re-optimizes hyperparameters every `hyper_interval` iterations
/// (0 disables re-optimization).
#[derive(Debug, Clone)]
pub struct RefitUpdater {
    pub output_column: usize,
    /// Output column holding a known noise variance for each observation.
    pub noise_column: Option<usize>,
    pub hyper_interval: usize,
}

impl Default for RefitUpdater {
    fn default() -> Self {
        Self { output_column: 0, noise_column: None, hyper_interval: 1 }
    }
}

impl RefitUpdater {
    fn set(&self, model: &mut (impl Model + ?Sized), state: &LoopState) -> Result<()> {
        let x = state.inputs();
        let y = state.output_column(self.output_column);
        match self.noise_column {
            Some(c) => model.set_data_with_noise(&x, &y, &state.output_column(c)),
            None => model.set_data(&x, &y),
        }
    }
}

impl<M: Model + ?Sized> ModelUpdater<M> for RefitUpdater {
    fn update(&mut self, model: &mut M, state: &LoopState, seed: u64) -> Result<()> {
        self.set(model, state)?;
        let due = self.hyper_interval > 0 && state.iteration() % self.hyper_interval == 0;
        if due && state.len() >= 2 {
            match model.optimize_hyperparameters(seed) {
                // keep the previous hyperparameters until the data allow a fit
                Ok(_) | Err(Error::FitDegeneracy(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }
}

/// A configured loop: space, model, point calculator and updater.
pub struct OuterLoop<'a, M: Model> {
    space: ParameterSpace,
    model: M,
    calculator: Box<dyn CandidatePointCalculator<M> + 'a>,
    updater: Box<dyn ModelUpdater<M> + 'a>,
    observers: Vec<Box<dyn FnMut(&LoopState) + 'a>>,
}

impl<'a, M: Model> OuterLoop<'a, M> {
    /// Validates the configuration: input dimensions agree and the model
    /// offers every capability the calculator needs.
    pub fn new(
        space: ParameterSpace,
        model: M,
        calculator: impl CandidatePointCalculator<M> + 'a,
        updater: impl ModelUpdater<M> + 'a,
    ) -> Result<Self> {
        if model.input_dim() != space.encoded_dim() {
            return Err(Error::DimensionMismatch { expected: space.encoded_dim(), got: model.input_dim() });
        }
        model.capabilities().require(&calculator.required_capabilities())?;
        Ok(Self {
            space,
            model,
            calculator: Box::new(calculator),
            updater: Box::new(updater),
            observers: Vec::new(),
        })
    }

    /// Registers an observer called with a read-only view after every iteration.
    pub fn on_iteration_end(&mut self, observer: impl FnMut(&LoopState) + 'a) {
        self.observers.push(Box::new(observer));
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn into_model(self) -> M {
        self.model
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    /// Runs until `stop` holds, extending `state` by one row per iteration.
    ///
    /// Fails fast: a failing evaluation or an out-of-space candidate aborts
    /// the run, leaving `state` with every row completed so far.
    pub fn run(
        &mut self,
        function: &mut dyn UserFunction,
        stop: &dyn StoppingCondition,
        state: &mut LoopState,
        seed: u64,
    ) -> Result<()> {
        if state.input_dim() != self.space.encoded_dim() {
            return Err(Error::DimensionMismatch { expected: self.space.encoded_dim(), got: state.input_dim() });
        }
        if state.output_dim() != function.out_dim() {
            return Err(Error::DimensionMismatch { expected: function.out_dim(), got: state.output_dim() });
        }
        if stop.should_stop(state) {
            return Ok(());
        }
        if !state.is_empty() {
            self.updater.update(&mut self.model, state, derive_seed(seed, u64::MAX))?;
        } else if !self.calculator.tolerates_untrained() {
            return Err(Error::Config("initial state is empty; evaluate an initial design first".into()));
        }

        while !stop.should_stop(state) {
            let iter_seed = derive_seed(seed, state.iteration() as u64);
            let candidate = self.calculator.next_point(&self.model, state, &self.space, derive_seed(iter_seed, 1))?;
            if !self.space.contains(candidate.x.as_slice()) {
                return Err(Error::ContractViolation { point: candidate.x.iter().copied().collect() });
            }
            let x = DMatrix::from_row_slice(1, candidate.x.len(), candidate.x.as_slice());
            let y = evaluate_checked(function, &x)?;
            let y_row: Vec<f64> = y.row(0).iter().copied().collect();
            state.validate_row(candidate.x.as_slice(), &y_row)?;
            state.push(candidate.x.as_slice(), &y_row, state.iteration() + 1);
            if let Some(c) = state.costs.as_mut() {
                c.push(0.0);
            }
            state.complete_iteration(candidate.acquisition);
            self.updater.update(&mut self.model, state, derive_seed(iter_seed, 2))?;
            for observer in &mut self.observers {
                observer(state);
            }
        }
        Ok(())
    }
}

/// Free-function form of [`OuterLoop::run`] for one-off runs.
pub fn run_loop<M: Model>(
    space: ParameterSpace,
    model: M,
    calculator: impl CandidatePointCalculator<M>,
    updater: impl ModelUpdater<M>,
    function: &mut dyn UserFunction,
    stop: &dyn StoppingCondition,
    mut state: LoopState,
    seed: u64,
) -> Result<(LoopState, M)> {
    let mut outer = OuterLoop::new(space, model, calculator, updater)?;
    outer.run(function, stop, &mut state, seed)?;
    Ok((state, outer.into_model()))
}

/// Uniform random proposals; ignores the model. Useful as a benchmark
/// baseline and for loops that start from an empty state.
#[derive(Debug, Clone, Default)]
pub struct RandomCalculator;

impl<M: Model + ?Sized> CandidatePointCalculator<M> for RandomCalculator {
    fn tolerates_untrained(&self) -> bool {
        true
    }

    fn next_point(&mut self, _model: &M, _state: &LoopState, space: &ParameterSpace, seed: u64) -> Result<Candidate> {
        let x = space.sample_uniform(1, seed);
        Ok(Candidate { x: x.row(0).transpose(), acquisition: None })
    }
}
