//! Input domains and the samplers defined over them.
//!
//! A [`ParameterSpace`] is an ordered list of parameters. Points are stored in
//! an *encoded* real vector: continuous and discrete parameters take one
//! coordinate each, categorical parameters take a one-hot block with one
//! coordinate per category.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousParameter {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

impl ContinuousParameter {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64) -> Result<Self> {
        let p = Self { name: name.into(), lower, upper };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !self.lower.is_finite() || !self.upper.is_finite() || self.lower >= self.upper {
            return Err(Error::InvalidSpace(format!(
                "parameter `{}` needs finite bounds with lower < upper, got [{}, {}]",
                self.name, self.lower, self.upper
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteParameter {
    pub name: String,
    pub values: Vec<f64>,
}

impl DiscreteParameter {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let p = Self { name: name.into(), values };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidSpace(format!("parameter `{}` has no values", self.name)));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpace(format!("parameter `{}` has non-finite values", self.name)));
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSpace(format!(
                "parameter `{}` values must be strictly increasing",
                self.name
            )));
        }
        Ok(())
    }

    /// Nearest allowed value; exact midpoints go to the smaller value.
    pub fn nearest(&self, v: f64) -> f64 {
        let mut best = self.values[0];
        let mut best_dist = (v - best).abs();
        for &candidate in &self.values[1..] {
            let d = (v - candidate).abs();
            if d < best_dist {
                best = candidate;
                best_dist = d;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalParameter {
    pub name: String,
    pub categories: Vec<String>,
}

impl CategoricalParameter {
    pub fn new(name: impl Into<String>, categories: Vec<String>) -> Result<Self> {
        let p = Self { name: name.into(), categories };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if self.categories.len() < 2 {
            return Err(Error::InvalidSpace(format!(
                "categorical `{}` needs at least two labels",
                self.name
            )));
        }
        for (i, c) in self.categories.iter().enumerate() {
            if self.categories[..i].contains(c) {
                return Err(Error::InvalidSpace(format!(
                    "categorical `{}` has duplicate label `{c}`",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Parameter {
    Continuous(ContinuousParameter),
    Discrete(DiscreteParameter),
    Categorical(CategoricalParameter),
}

impl Parameter {
    pub fn name(&self) -> &str {
        match self {
            Parameter::Continuous(p) => &p.name,
            Parameter::Discrete(p) => &p.name,
            Parameter::Categorical(p) => &p.name,
        }
    }

    pub fn encoded_width(&self) -> usize {
        match self {
            Parameter::Categorical(p) => p.categories.len(),
            _ => 1,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Parameter::Continuous(p) => p.validate(),
            Parameter::Discrete(p) => p.validate(),
            Parameter::Categorical(p) => p.validate(),
        }
    }
}

#[derive(Deserialize)]
struct RawSpace {
    parameters: Vec<Parameter>,
}

impl TryFrom<RawSpace> for ParameterSpace {
    type Error = Error;

    fn try_from(raw: RawSpace) -> Result<Self> {
        ParameterSpace::new(raw.parameters)
    }
}

/// Ordered collection of parameters. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace")]
pub struct ParameterSpace {
    parameters: Vec<Parameter>,
    #[serde(skip_serializing)]
    encoded_dim: usize,
}

impl ParameterSpace {
    pub fn new(parameters: Vec<Parameter>) -> Result<Self> {
        if parameters.is_empty() {
            return Err(Error::InvalidSpace("space has no parameters".into()));
        }
        for (i, p) in parameters.iter().enumerate() {
            p.validate()?;
            if parameters[..i].iter().any(|q| q.name() == p.name()) {
                return Err(Error::InvalidSpace(format!("duplicate parameter name `{}`", p.name())));
            }
        }
        let encoded_dim = parameters.iter().map(Parameter::encoded_width).sum();
        Ok(Self { parameters, encoded_dim })
    }

    /// Box of continuous parameters `x0, x1, ...`.
    pub fn continuous_box(bounds: &[(f64, f64)]) -> Result<Self> {
        let params = bounds
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| ContinuousParameter::new(format!("x{i}"), lo, hi).map(Parameter::Continuous))
            .collect::<Result<Vec<_>>>()?;
        Self::new(params)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.parameters
    }

    pub fn encoded_dim(&self) -> usize {
        self.encoded_dim
    }

    pub fn is_continuous(&self) -> bool {
        self.parameters.iter().all(|p| matches!(p, Parameter::Continuous(_)))
    }

    /// Relaxed box over the encoded coordinates: continuous bounds, discrete
    /// value range, `[0, 1]` for one-hot entries.
    pub fn encoded_bounds(&self) -> Vec<(f64, f64)> {
        let mut bounds = Vec::with_capacity(self.encoded_dim);
        for p in &self.parameters {
            match p {
                Parameter::Continuous(c) => bounds.push((c.lower, c.upper)),
                Parameter::Discrete(d) => bounds.push((d.values[0], *d.values.last().unwrap())),
                Parameter::Categorical(c) => bounds.extend(std::iter::repeat_n((0.0, 1.0), c.categories.len())),
            }
        }
        bounds
    }

    fn check_width(&self, len: usize) -> Result<()> {
        if len != self.encoded_dim {
            return Err(Error::DimensionMismatch { expected: self.encoded_dim, got: len });
        }
        Ok(())
    }

    pub fn sample_uniform(&self, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        let mut out = DMatrix::zeros(n, self.encoded_dim);
        for i in 0..n {
            let mut col = 0;
            for p in &self.parameters {
                match p {
                    Parameter::Continuous(c) => {
                        out[(i, col)] = c.lower + rng.random::<f64>() * c.width();
                        col += 1;
                    }
                    Parameter::Discrete(d) => {
                        out[(i, col)] = d.values[rng.random_range(0..d.values.len())];
                        col += 1;
                    }
                    Parameter::Categorical(c) => {
                        let k = rng.random_range(0..c.categories.len());
                        out[(i, col + k)] = 1.0;
                        col += c.categories.len();
                    }
                }
            }
        }
        out
    }

    /// Latin hypercube design: along every dimension each of the `n`
    /// equal-width strata holds exactly one point.
    pub fn sample_latin_hypercube(&self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        if !self.is_continuous() {
            return Err(Error::UnsupportedDesign(
                "latin hypercube sampling needs an all-continuous space".into(),
            ));
        }
        let mut rng = rng_from_seed(seed);
        let mut out = DMatrix::zeros(n, self.encoded_dim);
        for (j, p) in self.parameters.iter().enumerate() {
            let Parameter::Continuous(c) = p else { unreachable!() };
            let mut strata: Vec<usize> = (0..n).collect();
            strata.shuffle(&mut rng);
            for (i, &s) in strata.iter().enumerate() {
                let u: f64 = rng.random();
                let v = c.lower + (s as f64 + u) / n as f64 * c.width();
                out[(i, j)] = v.min(c.upper);
            }
        }
        Ok(out)
    }

    /// Initial design used ahead of a loop: Latin hypercube of size
    /// `max(5, 2·dim)` on continuous spaces, uniform otherwise.
    pub fn initial_design(&self, seed: u64) -> DMatrix<f64> {
        let n = (2 * self.encoded_dim).max(5);
        self.sample_latin_hypercube(n, seed)
            .unwrap_or_else(|_| self.sample_uniform(n, seed))
    }

    /// Projects an encoded point onto the space: clip continuous, snap
    /// discrete to the nearest value, snap one-hot blocks to their argmax
    /// (ties to the lowest index).
    pub fn round_to_space(&self, point: &[f64]) -> Result<DVector<f64>> {
        self.check_width(point.len())?;
        let mut out = DVector::zeros(self.encoded_dim);
        let mut col = 0;
        for p in &self.parameters {
            match p {
                Parameter::Continuous(c) => {
                    out[col] = point[col].clamp(c.lower, c.upper);
                    col += 1;
                }
                Parameter::Discrete(d) => {
                    out[col] = d.nearest(point[col]);
                    col += 1;
                }
                Parameter::Categorical(c) => {
                    let k = c.categories.len();
                    let block = &point[col..col + k];
                    let mut arg = 0;
                    for (i, &v) in block.iter().enumerate() {
                        if v > block[arg] {
                            arg = i;
                        }
                    }
                    out[col + arg] = 1.0;
                    col += k;
                }
            }
        }
        Ok(out)
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        if point.len() != self.encoded_dim || point.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self.round_to_space(point) {
            Ok(r) => r.iter().zip(point).all(|(a, b)| a == b),
            Err(_) => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(dim: usize) -> ParameterSpace {
        ParameterSpace::continuous_box(&vec![(0.0, 1.0); dim]).unwrap()
    }

    fn mixed() -> ParameterSpace {
        ParameterSpace::new(vec![
            Parameter::Continuous(ContinuousParameter::new("x", -1.0, 2.0).unwrap()),
            Parameter::Discrete(DiscreteParameter::new("k", vec![1.0, 2.0, 5.0]).unwrap()),
            Parameter::Categorical(
                CategoricalParameter::new("c", vec!["a".into(), "b".into(), "c".into()]).unwrap(),
            ),
        ])
        .unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ContinuousParameter::new("x", 1.0, 1.0).is_err());
        assert!(ContinuousParameter::new("x", 0.0, f64::INFINITY).is_err());
        assert!(DiscreteParameter::new("k", vec![]).is_err());
        assert!(DiscreteParameter::new("k", vec![1.0, 1.0]).is_err());
        assert!(CategoricalParameter::new("c", vec!["a".into()]).is_err());
        assert!(CategoricalParameter::new("c", vec!["a".into(), "a".into()]).is_err());
        let x = Parameter::Continuous(ContinuousParameter::new("x", 0.0, 1.0).unwrap());
        assert!(ParameterSpace::new(vec![x.clone(), x]).is_err());
        assert!(ParameterSpace::new(vec![]).is_err());
    }

    #[test]
    fn encoded_dim_sums_widths() {
        assert_eq!(mixed().encoded_dim(), 5);
    }

    #[test]
    fn uniform_rows_within_bounds() {
        let s = unit(1);
        let x = s.sample_uniform(3, 11);
        assert_eq!(x.nrows(), 3);
        assert!(x.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn uniform_categorical_is_one_hot() {
        let s = ParameterSpace::new(vec![Parameter::Categorical(
            CategoricalParameter::new("c", vec!["a".into(), "b".into(), "c".into()]).unwrap(),
        )])
        .unwrap();
        let x = s.sample_uniform(1, 3);
        assert_eq!(x.row(0).iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(x.row(0).iter().filter(|&&v| v == 0.0).count(), 2);
    }

    #[test]
    fn uniform_mean_matches_half() {
        let x = unit(2).sample_uniform(10_000, 5);
        for j in 0..2 {
            let m = x.column(j).mean();
            assert!((m - 0.5).abs() < 0.02, "column {j} mean {m}");
        }
    }

    fn strata_of(col: &[f64], lo: f64, hi: f64, n: usize) -> Vec<usize> {
        let mut s: Vec<usize> = col
            .iter()
            .map(|&v| (((v - lo) / (hi - lo) * n as f64).floor() as usize).min(n - 1))
            .collect();
        s.sort_unstable();
        s
    }

    #[test]
    fn lhs_quartiles() {
        let x = unit(1).sample_latin_hypercube(4, 9).unwrap();
        let col: Vec<f64> = x.column(0).iter().copied().collect();
        assert_eq!(strata_of(&col, 0.0, 1.0, 4), vec![0, 1, 2, 3]);
    }

    #[test]
    fn lhs_two_dims_width_two() {
        let s = ParameterSpace::continuous_box(&[(0.0, 10.0), (0.0, 10.0)]).unwrap();
        let x = s.sample_latin_hypercube(5, 2).unwrap();
        for j in 0..2 {
            let col: Vec<f64> = x.column(j).iter().copied().collect();
            assert_eq!(strata_of(&col, 0.0, 10.0, 5), vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn lhs_single_point() {
        let x = unit(3).sample_latin_hypercube(1, 0).unwrap();
        assert!(x.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn lhs_rejects_discrete() {
        assert!(matches!(
            mixed().sample_latin_hypercube(3, 0),
            Err(Error::UnsupportedDesign(_))
        ));
    }

    #[test]
    fn lhs_stratified_for_many_seeds() {
        let s = ParameterSpace::continuous_box(&[(-2.0, 3.0), (0.0, 1.0), (5.0, 6.0)]).unwrap();
        let n = 7;
        for seed in 0..100 {
            let x = s.sample_latin_hypercube(n, seed).unwrap();
            for (j, (lo, hi)) in s.encoded_bounds().into_iter().enumerate() {
                let col: Vec<f64> = x.column(j).iter().copied().collect();
                assert_eq!(strata_of(&col, lo, hi, n), (0..n).collect::<Vec<_>>(), "seed {seed}");
            }
        }
    }

    #[test]
    fn rounding_examples() {
        let s = unit(1);
        assert_eq!(s.round_to_space(&[1.3]).unwrap()[0], 1.0);

        let d = ParameterSpace::new(vec![Parameter::Discrete(
            DiscreteParameter::new("k", vec![1.0, 2.0, 5.0]).unwrap(),
        )])
        .unwrap();
        // brute force nearest by distance
        let allowed = [1.0, 2.0, 5.0];
        let oracle = allowed
            .iter()
            .copied()
            .min_by(|a: &f64, b: &f64| (a - 3.9).abs().partial_cmp(&(b - 3.9).abs()).unwrap())
            .unwrap();
        assert_eq!(d.round_to_space(&[3.9]).unwrap()[0], oracle);
        assert_eq!(oracle, 5.0);

        let c = ParameterSpace::new(vec![Parameter::Categorical(
            CategoricalParameter::new("c", vec!["a".into(), "b".into(), "c".into()]).unwrap(),
        )])
        .unwrap();
        let r = c.round_to_space(&[0.2, 0.9, 0.1]).unwrap();
        assert_eq!(r.as_slice(), &[0.0, 1.0, 0.0]);
        let tie = c.round_to_space(&[0.5, 0.5, 0.1]).unwrap();
        assert_eq!(tie.as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn rounding_checks_width() {
        assert!(unit(2).round_to_space(&[0.1]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"parameters":[
            {"type":"continuous","name":"x","lower":0.0,"upper":1.0},
            {"type":"discrete","name":"k","values":[1.0,2.0,5.0]},
            {"type":"categorical","name":"c","categories":["a","b"]}
        ]}"#;
        let s = ParameterSpace::from_json(text).unwrap();
        assert_eq!(s.encoded_dim(), 4);
        let back = ParameterSpace::from_json(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        let bad = r#"{"parameters":[{"type":"continuous","name":"x","lower":1.0,"upper":0.0}]}"#;
        assert!(ParameterSpace::from_json(bad).is_err());
    }

    proptest! {
        #[test]
        fn rounding_is_idempotent(v in proptest::collection::vec(-10.0f64..10.0, 5)) {
            let s = mixed();
            let once = s.round_to_space(&v).unwrap();
            let twice = s.round_to_space(once.as_slice()).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn samplers_produce_fixed_points(seed in any::<u64>()) {
            let s = mixed();
            let x = s.sample_uniform(8, seed);
            for row in x.row_iter() {
                let p: Vec<f64> = row.iter().copied().collect();
                prop_assert!(s.contains(&p));
            }
            let c = ParameterSpace::continuous_box(&[(0.0, 1.0), (-3.0, 3.0)]).unwrap();
            let l = c.sample_latin_hypercube(6, seed).unwrap();
            for row in l.row_iter() {
                let p: Vec<f64> = row.iter().copied().collect();
                prop_assert!(c.contains(&p));
            }
        }
    }
}
