use crate::error::{Error, Result};

/// Uniform time grid t_k = k * T / n_steps on [0, T].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "time horizon must be a positive real, got {horizon}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidParameter(
                "n_steps must be a positive integer".into(),
            ));
        }
        Ok(TimeGrid { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of grid points, n_steps + 1.
    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.horizon / self.n_steps as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(|k| self.time(k))
    }
}

/// Hurst exponent of the fractional driver. H = 1/2 is admitted only so the
/// Brownian reduction can be exercised; `paper_regime` is true iff H > 1/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurstParameter {
    h: f64,
}

impl HurstParameter {
    pub fn new(h: f64) -> Result<Self> {
        if !(0.5..1.0).contains(&h) {
            return Err(Error::InvalidParameter(format!(
                "Hurst parameter must satisfy 0.5 <= H < 1, got {h}"
            )));
        }
        Ok(HurstParameter { h })
    }

    pub fn value(&self) -> f64 {
        self.h
    }

    pub fn paper_regime(&self) -> bool {
        self.h > 0.5
    }

    pub fn is_brownian(&self) -> bool {
        self.h == 0.5
    }
}
