//! Empirical measures, moment functionals, and Wasserstein-2 distances.
//!
//! All laws are uniform empirical measures. Exact transport comes from sorted
//! pairing in one dimension and from optimal assignment in higher dimension
//! (capped at [`EXACT_ASSIGNMENT_BOUND`] points); beyond the cap only the
//! synchronous-coupling upper bound is available, which is all the averaging
//! estimates ever use.

use crate::assignment::min_cost_assignment;
use crate::error::{Error, Result};

/// Largest support size for exact d > 1 transport.
pub const EXACT_ASSIGNMENT_BOUND: usize = 64;

/// A uniform empirical measure: n points in d dimensions, weights 1/n.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    points: Vec<f64>,
    dim: usize,
}

impl EmpiricalMeasure {
    pub fn new(points: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if points.is_empty() || points.len() % dim != 0 {
            return Err(Error::InvalidParameter(format!(
                "point buffer of length {} is not a nonempty multiple of dim {}",
                points.len(),
                dim
            )));
        }
        if let Some(bad) = points.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite coordinate {bad} in empirical measure"
            )));
        }
        Ok(EmpiricalMeasure { points, dim })
    }

    /// Dirac mass at a single point.
    pub fn dirac(point: &[f64]) -> Self {
        EmpiricalMeasure {
            points: point.to_vec(),
            dim: point.len(),
        }
    }

    /// Dirac mass at the origin of R^d.
    pub fn dirac_origin(dim: usize) -> Self {
        EmpiricalMeasure {
            points: vec![0.0; dim],
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut out = vec![0.0; self.dim];
        for i in 0..self.len() {
            for (o, x) in out.iter_mut().zip(self.point(i)) {
                *o += x;
            }
        }
        for o in &mut out {
            *o /= n;
        }
        out
    }

    /// Mean of |x|^2 over the support.
    pub fn second_moment(&self) -> f64 {
        let n = self.len() as f64;
        self.points.iter().map(|x| x * x).sum::<f64>() / n
    }
}

/// Moment functional: the theta-th root of the theta-th absolute moment.
/// For theta = 2 this equals the W_2 distance to the Dirac at the origin.
pub fn moment_w_theta(mu: &EmpiricalMeasure, theta: f64) -> Result<f64> {
    if !(theta >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "moment order must satisfy theta >= 1, got {theta}"
        )));
    }
    let n = mu.len() as f64;
    let sum: f64 = (0..mu.len())
        .map(|i| {
            let norm_sq: f64 = mu.point(i).iter().map(|x| x * x).sum();
            norm_sq.sqrt().powf(theta)
        })
        .sum();
    Ok((sum / n).powf(1.0 / theta))
}

fn check_same_shape(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch(format!(
            "measure dimensions differ: {} vs {}",
            mu.dim(),
            nu.dim()
        )));
    }
    if mu.len() != nu.len() {
        return Err(Error::UnequalSupport {
            left: mu.len(),
            right: nu.len(),
        });
    }
    Ok(())
}

/// Exact W_2 between equal-size 1D empirical measures via sorted pairing.
pub fn wasserstein2_1d(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    check_same_shape(mu, nu)?;
    if mu.dim() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "sorted pairing needs 1-dimensional measures, got d = {}",
            mu.dim()
        )));
    }
    let mut a = mu.points().to_vec();
    let mut b = nu.points().to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let n = a.len() as f64;
    let cost: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((cost / n).sqrt())
}

/// Exact W_2 between equal-size empirical measures in any dimension via
/// minimum-cost assignment. Instances beyond [`EXACT_ASSIGNMENT_BOUND`]
/// points are rejected.
pub fn wasserstein2_assignment(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    check_same_shape(mu, nu)?;
    let n = mu.len();
    if n > EXACT_ASSIGNMENT_BOUND {
        return Err(Error::InstanceTooLarge {
            n,
            bound: EXACT_ASSIGNMENT_BOUND,
        });
    }
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        let xi = mu.point(i);
        for j in 0..n {
            let yj = nu.point(j);
            let d2: f64 = xi.iter().zip(yj).map(|(a, b)| (a - b) * (a - b)).sum();
            cost[i * n + j] = d2;
        }
    }
    let (_, total) = min_cost_assignment(&cost, n);
    Ok((total / n as f64).sqrt())
}

/// Synchronous-coupling upper bound on W_2: root-mean-square distance between
/// index-aligned particles (same idiosyncratic noise).
pub fn coupled_w2_bound(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    check_same_shape(mu, nu)?;
    let n = mu.len();
    let cost: f64 = (0..n)
        .map(|i| {
            mu.point(i)
                .iter()
                .zip(nu.point(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum();
    Ok((cost / n as f64).sqrt())
}

/// Exact squared W_2 when affordable, otherwise the coupled upper bound.
fn w2_sq_best(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<(f64, W2Estimator)> {
    if mu.dim() == 1 {
        let w = wasserstein2_1d(mu, nu)?;
        Ok((w * w, W2Estimator::Sorted1d))
    } else if mu.len() <= EXACT_ASSIGNMENT_BOUND {
        let w = wasserstein2_assignment(mu, nu)?;
        Ok((w * w, W2Estimator::ExactAssignment))
    } else {
        let w = coupled_w2_bound(mu, nu)?;
        Ok((w * w, W2Estimator::CoupledBound))
    }
}

/// Per-common-scenario empirical laws at one time index.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalLawEnsemble {
    scenarios: Vec<EmpiricalMeasure>,
    time_index: usize,
}

impl ConditionalLawEnsemble {
    pub fn new(scenarios: Vec<EmpiricalMeasure>, time_index: usize) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(Error::InvalidParameter(
                "ensemble needs at least one scenario".into(),
            ));
        }
        let n = scenarios[0].len();
        let d = scenarios[0].dim();
        for s in &scenarios {
            if s.len() != n || s.dim() != d {
                return Err(Error::DimensionMismatch(
                    "scenarios must share particle count and dimension".into(),
                ));
            }
        }
        Ok(ConditionalLawEnsemble {
            scenarios,
            time_index,
        })
    }

    pub fn n_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    pub fn n_particles(&self) -> usize {
        self.scenarios[0].len()
    }

    pub fn dim(&self) -> usize {
        self.scenarios[0].dim()
    }

    pub fn time_index(&self) -> usize {
        self.time_index
    }

    pub fn scenario(&self, s: usize) -> &EmpiricalMeasure {
        &self.scenarios[s]
    }

    pub fn scenarios(&self) -> &[EmpiricalMeasure] {
        &self.scenarios
    }

    /// Mean over scenarios of the squared conditional moment functional.
    /// Equals the global mean of |x|^2 for uniform empirical ensembles.
    pub fn mean_w2_moment_sq(&self) -> f64 {
        let total: f64 = self.scenarios.iter().map(|s| s.second_moment()).sum();
        total / self.scenarios.len() as f64
    }

    /// Global mean of |x|^2 over all scenario-particles.
    pub fn global_second_moment(&self) -> f64 {
        let total: f64 = self
            .scenarios
            .iter()
            .flat_map(|s| s.points().iter())
            .map(|x| x * x)
            .sum();
        total / (self.scenarios.len() * self.n_particles()) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum W2Estimator {
    Sorted1d,
    ExactAssignment,
    CoupledBound,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCondW2Sq {
    pub value: f64,
    pub estimator: W2Estimator,
}

/// Mean over scenarios of squared W_2 between matching scenario laws.
pub fn mean_conditional_w2_sq(
    e: &ConditionalLawEnsemble,
    f: &ConditionalLawEnsemble,
) -> Result<MeanCondW2Sq> {
    if e.n_scenarios() != f.n_scenarios() {
        return Err(Error::DimensionMismatch(format!(
            "scenario counts differ: {} vs {}",
            e.n_scenarios(),
            f.n_scenarios()
        )));
    }
    let mut total = 0.0;
    let mut estimator = W2Estimator::Sorted1d;
    for s in 0..e.n_scenarios() {
        let (w2_sq, est) = w2_sq_best(e.scenario(s), f.scenario(s))?;
        total += w2_sq;
        estimator = est;
    }
    Ok(MeanCondW2Sq {
        value: total / e.n_scenarios() as f64,
        estimator,
    })
}
