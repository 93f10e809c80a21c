use std::ops::Index;

use crate::error::{Error, Result};

/// Tolerance on `|Σ ρ − 1|` for a valid density.
pub const MASS_TOL: f64 = 1e-12;

/// A probability vector over joint profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct Density(Vec<f64>);

impl Density {
    /// Validates finiteness, nonnegativity and unit mass.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDensity("empty vector".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidDensity(format!(
                "entry {i} = {} is negative or not finite",
                values[i]
            )));
        }
        let mass: f64 = values.iter().sum();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDensity(format!("total mass {mass} differs from 1")));
        }
        Ok(Self(values))
    }

    /// Rescales a nonnegative vector with positive total to unit mass.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self> {
        let mass: f64 = values.iter().sum();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidDensity(format!("cannot normalize total mass {mass}")));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Self::new(values)
    }

    pub fn uniform(size: usize) -> Self {
        Self(vec![1.0 / size as f64; size])
    }

    pub fn point_mass(size: usize, at: usize) -> Self {
        let mut v = vec![0.0; size];
        v[at] = 1.0;
        Self(v)
    }

    /// Uniform over `support`, zero elsewhere.
    pub fn uniform_on(size: usize, support: &[usize]) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidDensity("empty support".into()));
        }
        let mut v = vec![0.0; size];
        for &x in support {
            v[x] = 1.0 / support.len() as f64;
        }
        Ok(Self(v))
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    /// Strictly positive everywhere.
    pub fn is_interior(&self) -> bool {
        self.0.iter().all(|&v| v > 0.0)
    }

    pub fn max_abs_diff(&self, other: &Density) -> f64 {
        max_abs_diff(&self.0, &other.0)
    }
}

impl Index<usize> for Density {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl AsRef<[f64]> for Density {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub(crate) fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).fold(0.0, f64::max)
}
