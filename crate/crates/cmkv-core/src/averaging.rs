//! Epsilon-sweep experiment for the averaging principle: couple the fast
//! system (coefficients on the clock t/epsilon) with the averaged system on
//! identical initial conditions and driver paths, estimate
//! E sup_t |X^eps_t - Xbar_t|^2 per epsilon, and judge convergence.

use std::sync::Arc;

use crate::coeffs::{AveragedCoefficients, Coefficients, Law, StationaryCoefficients, TimeRescaled};
use crate::error::{Error, Result};
use crate::measures::{mean_conditional_w2_sq, EmpiricalMeasure};
use crate::solver::{draw_drivers, simulate_with_drivers, DriverSet, PathBundle, SimulationConfig};
use crate::stats::{loglog_slope, mean_and_se};

/// Fast systems must resolve the oscillation: dt <= epsilon / this factor.
pub const RESOLUTION_FACTOR: f64 = 10.0;

const SWEEP_REP_DOMAIN: u64 = 0x51EE7;

/// Configuration of an epsilon sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub base: SimulationConfig,
    /// Strictly decreasing, at least three values.
    pub epsilons: Vec<f64>,
    /// Independent replications, each with fresh shared drivers.
    pub replications: usize,
    /// Required decrease between consecutive errors, in pooled standard
    /// errors.
    pub min_decrease_se: f64,
    /// The smallest-epsilon error must fall below this fraction of the
    /// largest-epsilon error.
    pub decay_ratio_max: f64,
}

impl SweepConfig {
    pub fn new(base: SimulationConfig, epsilons: Vec<f64>, replications: usize) -> Result<Self> {
        if epsilons.len() < 3 {
            return Err(Error::InvalidParameter(
                "sweep needs at least three epsilon values".into(),
            ));
        }
        if epsilons.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::InvalidParameter(
                "epsilon values must be positive".into(),
            ));
        }
        if epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter(
                "epsilon values must be strictly decreasing".into(),
            ));
        }
        if replications == 0 {
            return Err(Error::InvalidParameter(
                "need at least one replication".into(),
            ));
        }
        Ok(SweepConfig {
            base,
            epsilons,
            replications,
            min_decrease_se: 1.0,
            decay_ratio_max: 0.25,
        })
    }
}

/// Simulate the fast system: identical to the direct scheme but with every
/// coefficient evaluated at t/epsilon, on the provided (shared) drivers.
pub fn simulate_fast(
    cfg: &SimulationConfig,
    coeffs: Arc<dyn Coefficients>,
    epsilon: f64,
    drivers: &DriverSet,
) -> Result<PathBundle> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let dt = cfg.grid.dt();
    let limit = epsilon / RESOLUTION_FACTOR;
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::UnderResolved { dt, limit });
    }
    let rescaled = TimeRescaled {
        inner: coeffs,
        epsilon,
    };
    simulate_with_drivers(cfg, &rescaled, drivers)
}

/// Estimate of E sup_k |X^eps - Xbar|^2 with its standard error across
/// (scenario, particle) units. The bundles must be coupled: same drivers,
/// same shapes.
pub fn coupled_sup_error(fast: &PathBundle, avg: &PathBundle) -> Result<(f64, f64)> {
    if fast.driver_fingerprint() != avg.driver_fingerprint() {
        return Err(Error::DriverMismatch {
            left: fast.driver_fingerprint(),
            right: avg.driver_fingerprint(),
        });
    }
    if fast.n_scenarios() != avg.n_scenarios()
        || fast.n_particles() != avg.n_particles()
        || fast.dims() != avg.dims()
        || fast.grid() != avg.grid()
    {
        return Err(Error::DimensionMismatch(
            "coupled bundles differ in shape".into(),
        ));
    }
    let sups = per_unit_sup_sq(fast, avg);
    Ok(mean_and_se(&sups))
}

fn per_unit_sup_sq(fast: &PathBundle, avg: &PathBundle) -> Vec<f64> {
    let n0 = fast.n_scenarios();
    let n1 = fast.n_particles();
    let n_steps = fast.grid().n_steps();
    let mut sups = Vec::with_capacity(n0 * n1);
    for s in 0..n0 {
        for p in 0..n1 {
            let mut sup = 0.0f64;
            for k in 0..=n_steps {
                let a = fast.state(k, s, p);
                let b = avg.state(k, s, p);
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                sup = sup.max(d2);
            }
            sups.push(sup);
        }
    }
    sups
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonResult {
    pub epsilon: f64,
    pub err: f64,
    pub std_err: f64,
    pub n_units: usize,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Convergent,
    NonConvergent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragingReport {
    pub per_epsilon: Vec<EpsilonResult>,
    pub verdict: Verdict,
    /// Slope of log err against log epsilon over the successful entries.
    pub loglog_slope: f64,
    pub master_seed: u64,
}

/// Run the sweep: for each replication, draw one shared driver set (common
/// random numbers across epsilon values), simulate the coupled fast and
/// averaged systems per epsilon, and aggregate.
pub fn run_sweep(
    cfg: &SweepConfig,
    fast_coeffs: Arc<dyn Coefficients>,
    averaged: Arc<dyn AveragedCoefficients>,
) -> Result<AveragingReport> {
    let dims = fast_coeffs.dims();
    let stationary = StationaryCoefficients(averaged);
    // cell results indexed [epsilon][replication]
    let mut cells: Vec<Vec<std::result::Result<(f64, f64, usize), String>>> =
        vec![Vec::new(); cfg.epsilons.len()];
    for rep in 0..cfg.replications {
        let rep_seed = cfg
            .base
            .master_stream()
            .child(SWEEP_REP_DOMAIN)
            .child(rep as u64)
            .key();
        let rep_cfg = cfg.base.with_master_seed(rep_seed);
        let drivers = draw_drivers(&rep_cfg, dims)?;
        let averaged_bundle = simulate_with_drivers(&rep_cfg, &stationary, &drivers)?;
        for (ei, &eps) in cfg.epsilons.iter().enumerate() {
            let outcome = simulate_fast(&rep_cfg, fast_coeffs.clone(), eps, &drivers)
                .and_then(|fast| coupled_sup_error(&fast, &averaged_bundle))
                .map(|(est, se)| (est, se, rep_cfg.n_scenarios * rep_cfg.n_particles));
            cells[ei].push(outcome.map_err(|e| e.to_string()));
        }
    }

    let mut per_epsilon = Vec::with_capacity(cfg.epsilons.len());
    for (ei, &eps) in cfg.epsilons.iter().enumerate() {
        let mut ests = Vec::new();
        let mut var_sum = 0.0;
        let mut n_units = 0usize;
        let mut failure = None;
        for outcome in &cells[ei] {
            match outcome {
                Ok((est, se, n)) => {
                    ests.push(*est);
                    var_sum += se * se;
                    n_units += n;
                }
                Err(msg) => {
                    if failure.is_none() {
                        failure = Some(msg.clone());
                    }
                }
            }
        }
        let (err, std_err) = if ests.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let r = ests.len() as f64;
            (ests.iter().sum::<f64>() / r, var_sum.sqrt() / r)
        };
        per_epsilon.push(EpsilonResult {
            epsilon: eps,
            err,
            std_err,
            n_units,
            failure,
        });
    }

    let ok: Vec<&EpsilonResult> = per_epsilon.iter().filter(|e| e.failure.is_none()).collect();
    let all_ok = ok.len() == per_epsilon.len();
    let mut convergent = all_ok && ok.len() >= 2;
    if convergent {
        for w in ok.windows(2) {
            let pooled = (w[0].std_err.powi(2) + w[1].std_err.powi(2)).sqrt();
            if !(w[1].err < w[0].err - cfg.min_decrease_se * pooled) {
                convergent = false;
                break;
            }
        }
        let first = ok.first().unwrap();
        let last = ok.last().unwrap();
        if !(last.err < cfg.decay_ratio_max * first.err) {
            convergent = false;
        }
    }
    let eps_ok: Vec<f64> = ok.iter().map(|e| e.epsilon).collect();
    let err_ok: Vec<f64> = ok.iter().map(|e| e.err).collect();
    Ok(AveragingReport {
        per_epsilon,
        verdict: if convergent {
            Verdict::Convergent
        } else {
            Verdict::NonConvergent
        },
        loglog_slope: loglog_slope(&eps_ok, &err_ok),
        master_seed: cfg.base.master_seed,
    })
}

/// Per-block deviation of one block of the sqrt(epsilon) partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockDeviation {
    pub t_start: f64,
    /// Mean over (scenario, particle) of the squared block integral of
    /// (b(r/eps, X, mu) - bbar(X, mu)) with state and law frozen at the
    /// block start.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionDiagnostic {
    pub delta: f64,
    pub blocks: Vec<BlockDeviation>,
    /// N * sum of block deviations.
    pub total: f64,
}

/// Partition [0, T] into blocks of length sqrt(epsilon), freeze states and
/// laws at each block start, and measure the squared block averages of the
/// drift deviation by left-point quadrature.
pub fn partition_diagnostic(
    fast: &PathBundle,
    coeffs: &dyn Coefficients,
    averaged: &dyn AveragedCoefficients,
    epsilon: f64,
) -> Result<PartitionDiagnostic> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let delta = epsilon.sqrt();
    let grid = fast.grid();
    let dt = grid.dt();
    if delta < 2.0 * dt {
        return Err(Error::BlockTooShort { block: delta, dt });
    }
    let horizon = grid.horizon();
    let n_blocks = (horizon / delta).ceil() as usize;
    let dims = fast.dims();
    let (n0, n1, d) = (fast.n_scenarios(), fast.n_particles(), dims.d);

    let mut blocks = Vec::with_capacity(n_blocks);
    let mut b = vec![0.0; d];
    let mut b_bar = vec![0.0; d];
    let mut acc = vec![0.0; d];
    for i in 0..n_blocks {
        let t_start = i as f64 * delta;
        let t_end = (t_start + delta).min(horizon);
        let k_start = (t_start / dt).ceil() as usize;
        // grid points with t_k in [t_start, t_end)
        let k_end = ((t_end / dt).ceil() as usize).min(grid.n_steps());
        let mut block_sum = 0.0;
        for s in 0..n0 {
            let law = Law::new(
                EmpiricalMeasure::new(fast.scenario_block(k_start, s).to_vec(), d)
                    .expect("bundle states are finite"),
            );
            let view = law.view();
            for p in 0..n1 {
                let x = fast.state(k_start, s, p);
                averaged.drift(x, &view, &mut b_bar);
                acc.fill(0.0);
                for k in k_start..k_end {
                    let r = grid.time(k);
                    coeffs.drift(r / epsilon, x, &view, &mut b);
                    for (a, (bi, bb)) in acc.iter_mut().zip(b.iter().zip(&b_bar)) {
                        *a += (bi - bb) * dt;
                    }
                }
                block_sum += acc.iter().map(|a| a * a).sum::<f64>();
            }
        }
        blocks.push(BlockDeviation {
            t_start,
            value: block_sum / (n0 * n1) as f64,
        });
    }
    let total = n_blocks as f64 * blocks.iter().map(|b| b.value).sum::<f64>();
    Ok(PartitionDiagnostic {
        delta,
        blocks,
        total,
    })
}

/// Lemma-style coupling inequality on sweep outputs: the mean conditional
/// squared W2 between scenario laws is bounded by the mean coupled squared
/// distance at the same grid index.
pub fn check_coupling_inequality(fast: &PathBundle, avg: &PathBundle, k: usize) -> Result<bool> {
    let e = fast.law_ensemble(k);
    let f = avg.law_ensemble(k);
    let lhs = mean_conditional_w2_sq(&e, &f)?.value;
    let n0 = fast.n_scenarios();
    let n1 = fast.n_particles();
    let mut coupled = 0.0;
    for s in 0..n0 {
        for p in 0..n1 {
            let a = fast.state(k, s, p);
            let b = avg.state(k, s, p);
            coupled += a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>();
        }
    }
    let rhs = coupled / (n0 * n1) as f64;
    Ok(lhs <= rhs + 1e-12 * (1.0 + rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{
        AveragedFromTimeIndependent, Dims, DriftOffset, LinearCondMean, OscLinear,
    };
    use crate::grid::{HurstParameter, TimeGrid};
    use crate::solver::InitialLaw;

    fn base_config(n0: usize, n1: usize, n_steps: usize, seed: u64) -> SimulationConfig {
        SimulationConfig::new(
            n0,
            n1,
            TimeGrid::new(1.0, n_steps).unwrap(),
            HurstParameter::new(0.7).unwrap(),
            seed,
            InitialLaw::Deterministic(vec![1.0]),
        )
    }

    #[test]
    fn fast_system_with_unit_epsilon_matches_direct_simulation() {
        let cfg = base_config(2, 16, 64, 3);
        let fam: Arc<dyn Coefficients> =
            Arc::new(OscLinear::new(0.5, 1.0, 0.3, 0.2, Dims::scalar()));
        let drivers = draw_drivers(&cfg, fam.dims()).unwrap();
        let fast = simulate_fast(&cfg, fam.clone(), 1.0, &drivers).unwrap();
        let direct = simulate_with_drivers(&cfg, fam.as_ref(), &drivers).unwrap();
        assert_eq!(fast.state(64, 1, 7), direct.state(64, 1, 7));
        let (err, _) = coupled_sup_error(&fast, &direct).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn time_independent_fast_system_ignores_epsilon() {
        let cfg = base_config(1, 8, 128, 5);
        let fam: Arc<dyn Coefficients> =
            Arc::new(LinearCondMean::new(0.5, 0.2, 0.1, Dims::scalar()));
        let drivers = draw_drivers(&cfg, fam.dims()).unwrap();
        let a = simulate_fast(&cfg, fam.clone(), 0.5, &drivers).unwrap();
        let b = simulate_fast(&cfg, fam.clone(), 0.1, &drivers).unwrap();
        let (err, _) = coupled_sup_error(&a, &b).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn under_resolved_epsilon_is_rejected() {
        let cfg = base_config(1, 4, 16, 1); // dt = 1/16
        let fam: Arc<dyn Coefficients> =
            Arc::new(LinearCondMean::new(0.5, 0.2, 0.1, Dims::scalar()));
        let drivers = draw_drivers(&cfg, fam.dims()).unwrap();
        match simulate_fast(&cfg, fam, 0.1, &drivers) {
            Err(Error::UnderResolved { dt, limit }) => {
                assert!(dt > limit);
            }
            other => panic!("expected under-resolution error, got {other:?}"),
        }
    }

    #[test]
    fn coupled_sup_error_requires_matching_drivers() {
        let cfg = base_config(1, 4, 16, 1);
        let fam: Arc<dyn Coefficients> =
            Arc::new(LinearCondMean::new(0.5, 0.2, 0.1, Dims::scalar()));
        let a = crate::solver::simulate(&cfg, fam.as_ref()).unwrap();
        let cfg2 = cfg.with_master_seed(99);
        let b = crate::solver::simulate(&cfg2, fam.as_ref()).unwrap();
        assert!(matches!(
            coupled_sup_error(&a, &b),
            Err(Error::DriverMismatch { .. })
        ));
    }

    #[test]
    fn sup_error_picks_the_largest_pointwise_gap() {
        // Construct two bundles differing by a constant at one step via a
        // drift that fires on a single time window of one path.
        let cfg = base_config(1, 2, 8, 7);
        let zero: Arc<dyn Coefficients> =
            Arc::new(LinearCondMean::new(0.0, 0.0, 0.0, Dims::scalar()));
        let drivers = draw_drivers(&cfg, zero.dims()).unwrap();
        let base = simulate_with_drivers(&cfg, zero.as_ref(), &drivers).unwrap();

        struct Pulse;
        impl Coefficients for Pulse {
            fn dims(&self) -> Dims {
                Dims::scalar()
            }
            fn drift(&self, t: f64, _x: &[f64], _law: &LawView, out: &mut [f64]) {
                out[0] = if (0.25..0.375).contains(&t) { 8.0 } else { 0.0 };
            }
            fn sigma_w(&self, _t: f64, _x: &[f64], _law: &LawView, out: &mut [f64]) {
                out.fill(0.0);
            }
            fn sigma_h(&self, _t: f64, _law: &LawView, out: &mut [f64]) {
                out.fill(0.0);
            }
            fn label(&self) -> String {
                "pulse".into()
            }
        }
        use crate::coeffs::LawView;
        let pulsed = simulate_with_drivers(&cfg, &Pulse, &drivers).unwrap();
        // the pulse adds 8 * dt = 1 over exactly one step, so sup diff^2 = 1
        let (err, se) = coupled_sup_error(&pulsed, &base).unwrap();
        assert!((err - 1.0).abs() < 1e-12, "err {err}");
        assert!(se.abs() < 1e-12);
    }

    #[test]
    fn sweep_on_time_independent_family_reports_zero_error() {
        let base = base_config(1, 8, 128, 11);
        let cfg = SweepConfig::new(base, vec![0.5, 0.25, 0.125], 2).unwrap();
        let fam: Arc<dyn Coefficients> =
            Arc::new(LinearCondMean::new(0.5, 0.2, 0.1, Dims::scalar()));
        let avg: Arc<dyn AveragedCoefficients> =
            Arc::new(AveragedFromTimeIndependent(fam.clone()));
        let report = run_sweep(&cfg, fam, avg).unwrap();
        for e in &report.per_epsilon {
            assert_eq!(e.err, 0.0, "epsilon {}", e.epsilon);
            assert!(e.failure.is_none());
        }
        // zero everywhere cannot satisfy the strict-decrease criterion
        assert_eq!(report.verdict, Verdict::NonConvergent);
    }

    #[test]
    fn sweep_report_is_reproducible() {
        let base = base_config(1, 8, 128, 13);
        let cfg = SweepConfig::new(base, vec![1.0, 0.5, 0.25], 2).unwrap();
        let fam: Arc<dyn Coefficients> =
            Arc::new(OscLinear::new(0.5, 1.0, 0.3, 0.2, Dims::scalar()));
        let avg: Arc<dyn AveragedCoefficients> =
            Arc::new(OscLinear::new(0.5, 1.0, 0.3, 0.2, Dims::scalar()).closed_form_average());
        let a = run_sweep(&cfg, fam.clone(), avg.clone()).unwrap();
        let b = run_sweep(&cfg, fam, avg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_errors_decrease_for_osc_linear() {
        // Desk-scale sweep; the acceptance suite runs the full-size version.
        let base = base_config(2, 200, 512, 17);
        let cfg = SweepConfig::new(base, vec![0.5, 0.1, 0.05], 2).unwrap();
        let osc = OscLinear::new(0.5, 1.0, 0.3, 0.2, Dims::scalar());
        let fam: Arc<dyn Coefficients> = Arc::new(osc);
        let avg: Arc<dyn AveragedCoefficients> = Arc::new(osc.closed_form_average());
        let report = run_sweep(&cfg, fam, avg).unwrap();
        let errs: Vec<f64> = report.per_epsilon.iter().map(|e| e.err).collect();
        assert!(
            errs[0] > errs[1] && errs[1] > errs[2],
            "errors not decreasing: {errs:?}"
        );
        assert!(report.loglog_slope > 0.0, "slope {}", report.loglog_slope);
    }

    #[test]
    fn partition_diagnostic_zero_for_time_independent() {
        let cfg = base_config(1, 4, 64, 19);
        let fam: Arc<dyn Coefficients> =
            Arc::new(LinearCondMean::new(0.5, 0.2, 0.1, Dims::scalar()));
        let drivers = draw_drivers(&cfg, fam.dims()).unwrap();
        let eps = 0.25;
        let fast = simulate_fast(&cfg, fam.clone(), eps, &drivers).unwrap();
        let avg = AveragedFromTimeIndependent(fam.clone());
        let diag = partition_diagnostic(&fast, fam.as_ref(), &avg, eps).unwrap();
        // block count = ceil(T / sqrt(eps)) = ceil(1 / 0.5) = 2
        assert_eq!(diag.blocks.len(), 2);
        for b in &diag.blocks {
            assert!(b.value.abs() < 1e-28);
        }
        assert!(diag.total.abs() < 1e-27);
    }

    #[test]
    fn partition_diagnostic_shrinks_with_epsilon() {
        let cfg = base_config(2, 64, 1024, 23);
        let osc = OscLinear::new(0.5, 1.0, 0.3, 0.2, Dims::scalar());
        let fam: Arc<dyn Coefficients> = Arc::new(osc);
        let avg = osc.closed_form_average();
        let drivers = draw_drivers(&cfg, fam.dims()).unwrap();
        let mut totals = Vec::new();
        for eps in [0.16, 0.04] {
            let fast = simulate_fast(&cfg, fam.clone(), eps, &drivers).unwrap();
            let diag = partition_diagnostic(&fast, fam.as_ref(), &avg, eps).unwrap();
            assert_eq!(diag.blocks.len(), (1.0 / eps.sqrt()).ceil() as usize);
            totals.push(diag.total);
        }
        assert!(
            totals[1] < totals[0],
            "diagnostic did not decrease: {totals:?}"
        );
    }

    #[test]
    fn partition_diagnostic_rejects_short_blocks() {
        let cfg = base_config(1, 4, 16, 1); // dt = 1/16
        let fam: Arc<dyn Coefficients> =
            Arc::new(LinearCondMean::new(0.5, 0.2, 0.1, Dims::scalar()));
        let bundle = crate::solver::simulate(&cfg, fam.as_ref()).unwrap();
        let avg = AveragedFromTimeIndependent(fam.clone());
        // sqrt(0.001) ~ 0.0316 < 2/16
        assert!(matches!(
            partition_diagnostic(&bundle, fam.as_ref(), &avg, 0.001),
            Err(Error::BlockTooShort { .. })
        ));
    }

    #[test]
    fn coupling_inequality_on_sweep_outputs() {
        let cfg = base_config(2, 32, 256, 29);
        let osc = OscLinear::new(0.5, 1.0, 0.3, 0.2, Dims::scalar());
        let fam: Arc<dyn Coefficients> = Arc::new(osc);
        let avg: Arc<dyn AveragedCoefficients> = Arc::new(osc.closed_form_average());
        let drivers = draw_drivers(&cfg, fam.dims()).unwrap();
        let fast = simulate_fast(&cfg, fam.clone(), 0.2, &drivers).unwrap();
        let stationary = StationaryCoefficients(avg);
        let avg_bundle = simulate_with_drivers(&cfg, &stationary, &drivers).unwrap();
        for k in [0, 64, 128, 256] {
            assert!(check_coupling_inequality(&fast, &avg_bundle, k).unwrap());
        }
    }

    #[test]
    fn wrong_average_fails_the_verdict() {
        let base = base_config(2, 100, 512, 31);
        let cfg = SweepConfig::new(base, vec![0.5, 0.1, 0.05], 2).unwrap();
        let osc = OscLinear::new(0.5, 1.0, 0.3, 0.2, Dims::scalar());
        let fam: Arc<dyn Coefficients> = Arc::new(osc);
        let wrong: Arc<dyn AveragedCoefficients> = Arc::new(DriftOffset {
            inner: Arc::new(osc.closed_form_average()),
            slope: 0.5,
        });
        let report = run_sweep(&cfg, fam, wrong).unwrap();
        assert_eq!(report.verdict, Verdict::NonConvergent);
        // the error plateaus at a positive level: CI excludes zero
        let last = report.per_epsilon.last().unwrap();
        assert!(last.err - 3.0 * last.std_err > 0.0);
    }

    #[test]
    fn sweep_config_validation() {
        let base = base_config(1, 4, 16, 1);
        assert!(SweepConfig::new(base.clone(), vec![0.5, 0.1], 1).is_err());
        assert!(SweepConfig::new(base.clone(), vec![0.5, 0.5, 0.1], 1).is_err());
        assert!(SweepConfig::new(base.clone(), vec![0.5, 0.1, 0.0], 1).is_err());
        assert!(SweepConfig::new(base.clone(), vec![0.5, 0.2, 0.1], 0).is_err());
        assert!(SweepConfig::new(base, vec![0.5, 0.2, 0.1], 1).is_ok());
    }
}
