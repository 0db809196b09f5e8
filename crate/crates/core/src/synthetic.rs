//! Seeded synthetic series for tests, demos and the desk-scale benchmark.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    Ar1,
    Seasonal,
    RegimeSwitch,
}

impl SyntheticKind {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::Ar1 => "ar1",
            SyntheticKind::Seasonal => "seasonal",
            SyntheticKind::RegimeSwitch => "regime_switch",
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ar1" => Ok(SyntheticKind::Ar1),
            "seasonal" => Ok(SyntheticKind::Seasonal),
            "regime_switch" => Ok(SyntheticKind::RegimeSwitch),
            other => Err(Error::Config(format!(
                "unknown synthetic spec `{other}` (ar1, seasonal, regime_switch)"
            ))),
        }
    }
}

fn noise(n: usize, sd: f64, seed: u64) -> Vec<f64> {
    if sd == 0.0 {
        return vec![0.0; n];
    }
    let dist = Normal::new(0.0, sd).expect("finite positive sd");
    let mut rng = rng_from(seed);
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

/// `y_0 = 0`, `y_t = phi y_{t-1} + e_t`, `e_t ~ N(0, sd^2)`.
pub fn ar1(n: usize, phi: f64, sd: f64, seed: u64) -> Vec<f64> {
    let e = noise(n, sd, seed);
    let mut y = vec![0.0; n];
    for t in 1..n {
        y[t] = phi * y[t - 1] + e[t];
    }
    y
}

/// `amplitude sin(2 pi t / period) + e_t`.
pub fn seasonal(n: usize, period: f64, amplitude: f64, sd: f64, seed: u64) -> Vec<f64> {
    let e = noise(n, sd, seed);
    (0..n)
        .map(|t| amplitude * (2.0 * PI * t as f64 / period).sin() + e[t])
        .collect()
}

/// Index at which a regime-switching series changes its parameters.
pub fn regime_switch_point(n: usize) -> usize {
    n / 2
}

/// Levels whose increments follow AR(1) with coefficient `phi_before`
/// up to the midpoint and `phi_after` from it on.
pub fn regime_switch(n: usize, phi_before: f64, phi_after: f64, sd: f64, seed: u64) -> Vec<f64> {
    let e = noise(n, sd, seed);
    let switch = regime_switch_point(n);
    let mut level = vec![0.0; n];
    let mut inc = 0.0;
    for t in 1..n {
        let phi = if t < switch { phi_before } else { phi_after };
        inc = phi * inc + e[t];
        level[t] = level[t - 1] + inc;
    }
    level
}

/// A series of the given kind with default parameters.
pub fn generate_synthetic(kind: SyntheticKind, id: impl Into<String>, n: usize, seed: u64) -> Result<TimeSeries> {
    if n == 0 {
        return Err(Error::Config("synthetic series length must be at least 1".into()));
    }
    let values = match kind {
        SyntheticKind::Ar1 => ar1(n, 0.7, 1.0, seed),
        SyntheticKind::Seasonal => seasonal(n, 12.0, 5.0, 1.0, seed),
        SyntheticKind::RegimeSwitch => regime_switch(n, 0.8, -0.7, 1.0, seed),
    };
    TimeSeries::new(id, values)
}
