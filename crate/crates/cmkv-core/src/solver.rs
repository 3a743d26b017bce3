//! Two-level particle Euler scheme for the conditional McKean-Vlasov state
//! equation, the Picard fixed-point construction over frozen law flows, and
//! moment/increment diagnostics.
//!
//! Common noise lives in the outer scenarios: each scenario draws one initial
//! condition, all its particles start there, and the conditional law at time
//! t is the within-scenario empirical measure. Both drivers are idiosyncratic
//! per (scenario, particle).

use rayon::prelude::*;

use crate::coeffs::{Coefficients, Dims, LawView};
use crate::error::{Error, Result};
use crate::fbm::{CirculantFbmSampler, SamplerProvenance};
use crate::grid::{HurstParameter, TimeGrid};
use crate::measures::{ConditionalLawEnsemble, EmpiricalMeasure};
use crate::rng::RandomStream;
use crate::stats::{mean_and_se, nnls3};

const XI_DOMAIN: u64 = 0;
const W_DOMAIN: u64 = 1;
const FBM_DOMAIN: u64 = 2;

/// Law of the initial condition xi, drawn once per scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    Deterministic(Vec<f64>),
    Gaussian { mean: Vec<f64>, sd: f64 },
    TwoPoint { lo: Vec<f64>, hi: Vec<f64>, p_hi: f64 },
}

impl InitialLaw {
    fn validate(&self, d: usize) -> Result<()> {
        let len = match self {
            InitialLaw::Deterministic(v) => v.len(),
            InitialLaw::Gaussian { mean, sd } => {
                if !(*sd >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "initial law sd must be nonnegative, got {sd}"
                    )));
                }
                mean.len()
            }
            InitialLaw::TwoPoint { lo, hi, p_hi } => {
                if !(0.0..=1.0).contains(p_hi) {
                    return Err(Error::InvalidParameter(format!(
                        "two-point probability must lie in [0, 1], got {p_hi}"
                    )));
                }
                if lo.len() != hi.len() {
                    return Err(Error::InvalidParameter(
                        "two-point initial law endpoints differ in length".into(),
                    ));
                }
                lo.len()
            }
        };
        if len != d {
            return Err(Error::DimensionMismatch(format!(
                "initial law has {len} components but the state dimension is {d}"
            )));
        }
        Ok(())
    }

    fn draw(&self, stream: &RandomStream, out: &mut [f64]) {
        match self {
            InitialLaw::Deterministic(v) => out.copy_from_slice(v),
            InitialLaw::Gaussian { mean, sd } => {
                for (c, (o, m)) in out.iter_mut().zip(mean).enumerate() {
                    *o = m + sd * stream.normal_at(c as u64);
                }
            }
            InitialLaw::TwoPoint { lo, hi, p_hi } => {
                let pick_hi = stream.uniform_at(0) < *p_hi;
                out.copy_from_slice(if pick_hi { hi } else { lo });
            }
        }
    }
}

/// Full specification of a two-level particle run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n_scenarios: usize,
    pub n_particles: usize,
    pub grid: TimeGrid,
    pub hurst: HurstParameter,
    pub master_seed: u64,
    pub initial_law: InitialLaw,
    pub snapshot_stride: usize,
    /// Refuse H = 1/2 in the fractional channel when set.
    pub enforce_paper_regime: bool,
}

impl SimulationConfig {
    pub fn new(
        n_scenarios: usize,
        n_particles: usize,
        grid: TimeGrid,
        hurst: HurstParameter,
        master_seed: u64,
        initial_law: InitialLaw,
    ) -> Self {
        SimulationConfig {
            n_scenarios,
            n_particles,
            grid,
            hurst,
            master_seed,
            initial_law,
            snapshot_stride: 1,
            enforce_paper_regime: false,
        }
    }

    pub fn with_master_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.master_seed = seed;
        c
    }

    fn validate(&self, dims: Dims) -> Result<()> {
        if self.n_scenarios == 0 {
            return Err(Error::InvalidParameter(
                "need at least one scenario".into(),
            ));
        }
        if self.n_particles < 2 {
            return Err(Error::InvalidParameter(
                "conditional laws need at least two particles per scenario".into(),
            ));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidParameter(
                "snapshot stride must be positive".into(),
            ));
        }
        if self.enforce_paper_regime && !self.hurst.paper_regime() {
            return Err(Error::PaperRegimeViolation {
                h: self.hurst.value(),
            });
        }
        self.initial_law.validate(dims.d)
    }

    pub(crate) fn master_stream(&self) -> RandomStream {
        RandomStream::from_seed(self.master_seed)
    }
}

fn mix_fingerprint(parts: &[u64]) -> u64 {
    let mut s = RandomStream::from_seed(0xF16E_7261);
    for &p in parts {
        s = s.child(p);
    }
    s.key()
}

/// The driver paths of one run: per (scenario, particle), an r-dimensional
/// Brownian increment stream and an m-dimensional fBm path. Brownian
/// increments are regenerated on demand from counter-based substreams;
/// fBm paths are materialized because their synthesis is global in time.
pub struct DriverSet {
    n_scenarios: usize,
    n_particles: usize,
    r: usize,
    m: usize,
    grid: TimeGrid,
    hurst: HurstParameter,
    sqrt_dt: f64,
    /// Flattened fBm levels: (((s*n1 + p)*(n_steps+1)) + k)*m + c.
    fbm_values: Vec<f64>,
    fbm_provenance: SamplerProvenance,
    w_stream: RandomStream,
    fingerprint: u64,
}

impl DriverSet {
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn fbm_provenance(&self) -> SamplerProvenance {
        self.fbm_provenance
    }

    fn unit(&self, scenario: usize, particle: usize) -> usize {
        scenario * self.n_particles + particle
    }

    /// Brownian increments over step k, Normal(0, dt) per component.
    pub fn w_increments_into(&self, scenario: usize, particle: usize, k: usize, out: &mut [f64]) {
        let unit = self.unit(scenario, particle) as u64;
        let stream = self.w_stream.child(unit);
        let base = k as u64 * self.r as u64;
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.sqrt_dt * stream.normal_at(base + c as u64);
        }
    }

    /// fBm increments over step k.
    pub fn fbm_increments_into(&self, scenario: usize, particle: usize, k: usize, out: &mut [f64]) {
        let lo = self.fbm_index(scenario, particle, k);
        let hi = self.fbm_index(scenario, particle, k + 1);
        for c in 0..self.m {
            out[c] = self.fbm_values[hi + c] - self.fbm_values[lo + c];
        }
    }

    /// fBm level at grid index k.
    pub fn fbm_value(&self, scenario: usize, particle: usize, k: usize) -> &[f64] {
        let lo = self.fbm_index(scenario, particle, k);
        &self.fbm_values[lo..lo + self.m]
    }

    fn fbm_index(&self, scenario: usize, particle: usize, k: usize) -> usize {
        (self.unit(scenario, particle) * self.grid.n_points() + k) * self.m
    }

    fn matches(&self, cfg: &SimulationConfig, dims: Dims) -> bool {
        self.n_scenarios == cfg.n_scenarios
            && self.n_particles == cfg.n_particles
            && self.r == dims.r
            && self.m == dims.m
            && self.grid == cfg.grid
            && self.hurst == cfg.hurst
    }
}

/// Draw the full driver set for a configuration. Deterministic in the master
/// seed and independent of thread count.
pub fn draw_drivers(cfg: &SimulationConfig, dims: Dims) -> Result<DriverSet> {
    cfg.validate(dims)?;
    let master = cfg.master_stream();
    let fbm_stream = master.child(FBM_DOMAIN);
    let sampler = CirculantFbmSampler::new(cfg.grid, cfg.hurst)?;
    let n_units = cfg.n_scenarios * cfg.n_particles;
    let path_len = cfg.grid.n_points() * dims.m;
    let mut fbm_values = vec![0.0; n_units * path_len];
    fbm_values
        .par_chunks_mut(path_len)
        .enumerate()
        .for_each(|(unit, chunk)| {
            let path = sampler.sample(dims.m, fbm_stream.child(unit as u64));
            chunk.copy_from_slice(path.values());
        });
    let provenance = if sampler.fell_back() {
        SamplerProvenance::CirculantFellBack
    } else {
        SamplerProvenance::Circulant
    };
    let fingerprint = mix_fingerprint(&[
        cfg.master_seed,
        cfg.n_scenarios as u64,
        cfg.n_particles as u64,
        dims.r as u64,
        dims.m as u64,
        cfg.grid.n_steps() as u64,
        cfg.grid.horizon().to_bits(),
        cfg.hurst.value().to_bits(),
    ]);
    Ok(DriverSet {
        n_scenarios: cfg.n_scenarios,
        n_particles: cfg.n_particles,
        r: dims.r,
        m: dims.m,
        grid: cfg.grid,
        hurst: cfg.hurst,
        sqrt_dt: cfg.grid.dt().sqrt(),
        fbm_values,
        fbm_provenance: provenance,
        w_stream: master.child(W_DOMAIN),
        fingerprint,
    })
}

/// Full trajectory bundle of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    n_scenarios: usize,
    n_particles: usize,
    dims: Dims,
    grid: TimeGrid,
    hurst: HurstParameter,
    snapshot_stride: usize,
    /// Flattened states: ((k*n0 + s)*n1 + p)*d + c.
    states: Vec<f64>,
    driver_fingerprint: u64,
    coeff_label: String,
    master_seed: u64,
}

impl PathBundle {
    pub fn n_scenarios(&self) -> usize {
        self.n_scenarios
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn hurst(&self) -> HurstParameter {
        self.hurst
    }

    pub fn driver_fingerprint(&self) -> u64 {
        self.driver_fingerprint
    }

    pub fn coeff_label(&self) -> &str {
        &self.coeff_label
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn state(&self, k: usize, scenario: usize, particle: usize) -> &[f64] {
        let base = self.state_index(k, scenario, particle);
        &self.states[base..base + self.dims.d]
    }

    fn state_index(&self, k: usize, scenario: usize, particle: usize) -> usize {
        (((k * self.n_scenarios) + scenario) * self.n_particles + particle) * self.dims.d
    }

    /// All particles of one scenario at grid index k (n_particles x d).
    pub fn scenario_block(&self, k: usize, scenario: usize) -> &[f64] {
        let lo = self.state_index(k, scenario, 0);
        &self.states[lo..lo + self.n_particles * self.dims.d]
    }

    /// Grid indices at which law snapshots are retained: every
    /// `snapshot_stride` steps plus the endpoint.
    pub fn snapshot_indices(&self) -> Vec<usize> {
        let n = self.grid.n_steps();
        let mut ks: Vec<usize> = (0..=n).step_by(self.snapshot_stride).collect();
        if *ks.last().unwrap() != n {
            ks.push(n);
        }
        ks
    }

    /// Conditional law ensemble at grid index k.
    pub fn law_ensemble(&self, k: usize) -> ConditionalLawEnsemble {
        let scenarios = (0..self.n_scenarios)
            .map(|s| {
                EmpiricalMeasure::new(self.scenario_block(k, s).to_vec(), self.dims.d)
                    .expect("states are finite by construction")
            })
            .collect();
        ConditionalLawEnsemble::new(scenarios, k).expect("bundle shape is consistent")
    }

    /// Summary row at grid index k: mean of the first component, global
    /// second moment, and the scenario-mean of the squared conditional
    /// moment functional (equal to the second moment by construction).
    pub fn moment_row(&self, k: usize) -> MomentRow {
        let n_units = (self.n_scenarios * self.n_particles) as f64;
        let block_len = self.n_scenarios * self.n_particles * self.dims.d;
        let lo = k * block_len;
        let states = &self.states[lo..lo + block_len];
        let mut mean = 0.0;
        let mut second = 0.0;
        for chunk in states.chunks_exact(self.dims.d) {
            mean += chunk[0];
            second += chunk.iter().map(|x| x * x).sum::<f64>();
        }
        let mut cond = 0.0;
        for s in 0..self.n_scenarios {
            let block = self.scenario_block(k, s);
            let sm: f64 = block.iter().map(|x| x * x).sum::<f64>() / self.n_particles as f64;
            cond += sm;
        }
        MomentRow {
            k,
            t: self.grid.time(k),
            mean: mean / n_units,
            second_moment: second / n_units,
            cond_w2_sq_mean: cond / self.n_scenarios as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentRow {
    pub k: usize,
    pub t: f64,
    pub mean: f64,
    pub second_moment: f64,
    pub cond_w2_sq_mean: f64,
}

/// One explicit Euler step of a single particle. Evaluates all three
/// coefficients at the left point; `law` is the scenario law at step k.
#[allow(clippy::too_many_arguments)]
pub fn euler_step(
    coeffs: &dyn Coefficients,
    t: f64,
    dt: f64,
    x: &[f64],
    law: &LawView,
    dw: &[f64],
    db: &[f64],
    out: &mut [f64],
) {
    let dims = coeffs.dims();
    let mut sigma_h = vec![0.0; dims.d * dims.m];
    coeffs.sigma_h(t, law, &mut sigma_h);
    let mut scratch = StepScratch::new(dims);
    step_particle(coeffs, t, dt, x, law, dw, db, &sigma_h, &mut scratch, out);
}

struct StepScratch {
    drift: Vec<f64>,
    sigma_w: Vec<f64>,
}

impl StepScratch {
    fn new(dims: Dims) -> Self {
        StepScratch {
            drift: vec![0.0; dims.d],
            sigma_w: vec![0.0; dims.d * dims.r],
        }
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn step_particle(
    coeffs: &dyn Coefficients,
    t: f64,
    dt: f64,
    x: &[f64],
    law: &LawView,
    dw: &[f64],
    db: &[f64],
    sigma_h: &[f64],
    scratch: &mut StepScratch,
    out: &mut [f64],
) {
    let dims = coeffs.dims();
    coeffs.drift(t, x, law, &mut scratch.drift);
    coeffs.sigma_w(t, x, law, &mut scratch.sigma_w);
    for i in 0..dims.d {
        let mut acc = x[i] + scratch.drift[i] * dt;
        let wrow = &scratch.sigma_w[i * dims.r..(i + 1) * dims.r];
        for (a, b) in wrow.iter().zip(dw) {
            acc += a * b;
        }
        let hrow = &sigma_h[i * dims.m..(i + 1) * dims.m];
        for (a, b) in hrow.iter().zip(db) {
            acc += a * b;
        }
        out[i] = acc;
    }
}

/// Per-scenario law statistics for one grid index.
struct ScenarioLaw {
    mean: Vec<f64>,
    w2_moment: f64,
}

fn scenario_law_stats(block: &[f64], d: usize, n_particles: usize) -> ScenarioLaw {
    let mut mean = vec![0.0; d];
    let mut second = 0.0;
    for chunk in block.chunks_exact(d) {
        for (m, x) in mean.iter_mut().zip(chunk) {
            *m += x;
        }
        second += chunk.iter().map(|x| x * x).sum::<f64>();
    }
    let n = n_particles as f64;
    for m in &mut mean {
        *m /= n;
    }
    ScenarioLaw {
        mean,
        w2_moment: (second / n).sqrt(),
    }
}

/// How the law flow fed to the Euler stepper is obtained.
enum LawFlow<'a> {
    /// Self-consistent: laws recomputed from the current states each step.
    Current,
    /// Frozen to the per-(k, scenario) laws of a previous iterate.
    Frozen(&'a [f64]),
    /// Frozen to the (constant-in-time) law of the initial states.
    FrozenInitial,
}

fn simulate_inner(
    cfg: &SimulationConfig,
    coeffs: &dyn Coefficients,
    drivers: &DriverSet,
    law_flow: LawFlow,
) -> Result<PathBundle> {
    let dims = coeffs.dims();
    cfg.validate(dims)?;
    if !drivers.matches(cfg, dims) {
        return Err(Error::DimensionMismatch(
            "driver set does not match the simulation configuration".into(),
        ));
    }
    let (n0, n1, d) = (cfg.n_scenarios, cfg.n_particles, dims.d);
    let n_steps = cfg.grid.n_steps();
    let block_len = n0 * n1 * d;
    let mut states = vec![0.0; (n_steps + 1) * block_len];

    // Initial condition: one xi draw per scenario, replicated over particles.
    let xi_stream = cfg.master_stream().child(XI_DOMAIN);
    for s in 0..n0 {
        let mut xi = vec![0.0; d];
        cfg.initial_law.draw(&xi_stream.child(s as u64), &mut xi);
        for p in 0..n1 {
            let lo = (s * n1 + p) * d;
            states[lo..lo + d].copy_from_slice(&xi);
        }
    }

    let dt = cfg.grid.dt();
    let mut sigma_h = vec![0.0; n0 * d * dims.m];
    for k in 0..n_steps {
        let t = cfg.grid.time(k);
        let (done, rest) = states.split_at_mut((k + 1) * block_len);
        let read = &done[k * block_len..];
        let write = &mut rest[..block_len];

        // Law inputs for this step, one per scenario.
        let law_block: &[f64] = match law_flow {
            LawFlow::Current => read,
            LawFlow::Frozen(prev) => &prev[k * block_len..(k + 1) * block_len],
            LawFlow::FrozenInitial => &done[..block_len],
        };
        let laws: Vec<ScenarioLaw> = (0..n0)
            .map(|s| scenario_law_stats(&law_block[s * n1 * d..(s + 1) * n1 * d], d, n1))
            .collect();
        let law_view = |s: usize| LawView {
            points: &law_block[s * n1 * d..(s + 1) * n1 * d],
            dim: d,
            mean: &laws[s].mean,
            w2_moment: laws[s].w2_moment,
        };
        // sigma_H never reads the state, so one evaluation per scenario.
        for s in 0..n0 {
            coeffs.sigma_h(t, &law_view(s), &mut sigma_h[s * d * dims.m..(s + 1) * d * dims.m]);
        }

        let explosion = write
            .par_chunks_mut(d)
            .enumerate()
            .with_min_len(256)
            .map_init(
                || {
                    (
                        StepScratch::new(dims),
                        vec![0.0; dims.r],
                        vec![0.0; dims.m],
                    )
                },
                |(scratch, dw, db), (unit, out)| {
                    let s = unit / n1;
                    let p = unit % n1;
                    drivers.w_increments_into(s, p, k, dw);
                    drivers.fbm_increments_into(s, p, k, db);
                    let x = &read[unit * d..(unit + 1) * d];
                    step_particle(
                        coeffs,
                        t,
                        dt,
                        x,
                        &law_view(s),
                        dw,
                        db,
                        &sigma_h[s * d * dims.m..(s + 1) * d * dims.m],
                        scratch,
                        out,
                    );
                    if out.iter().all(|v| v.is_finite()) {
                        None
                    } else {
                        Some(unit)
                    }
                },
            )
            .flatten()
            .min();
        if let Some(unit) = explosion {
            return Err(Error::Explosion {
                step: k + 1,
                t: cfg.grid.time(k + 1),
                scenario: unit / n1,
                particle: unit % n1,
            });
        }
    }

    Ok(PathBundle {
        n_scenarios: n0,
        n_particles: n1,
        dims,
        grid: cfg.grid,
        hurst: cfg.hurst,
        snapshot_stride: cfg.snapshot_stride,
        states,
        driver_fingerprint: drivers.fingerprint(),
        coeff_label: coeffs.label(),
        master_seed: cfg.master_seed,
    })
}

/// Simulate with laws recomputed from the current states at every step,
/// using the provided driver set (coupling reuse).
pub fn simulate_with_drivers(
    cfg: &SimulationConfig,
    coeffs: &dyn Coefficients,
    drivers: &DriverSet,
) -> Result<PathBundle> {
    simulate_inner(cfg, coeffs, drivers, LawFlow::Current)
}

/// Simulate with freshly drawn drivers.
pub fn simulate(cfg: &SimulationConfig, coeffs: &dyn Coefficients) -> Result<PathBundle> {
    let drivers = draw_drivers(cfg, coeffs.dims())?;
    simulate_with_drivers(cfg, coeffs, &drivers)
}

/// Convergence record of the Picard iteration: d_n is the maximum over
/// retained grid indices of the mean coupled squared distance between
/// successive iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardTrace {
    pub distances: Vec<f64>,
    pub converged: bool,
    pub tol: f64,
}

impl PicardTrace {
    pub fn iterations(&self) -> usize {
        self.distances.len()
    }
}

fn iterate_distance(curr: &PathBundle, prev: &PathBundle, retained: &[usize]) -> f64 {
    let block_len = curr.n_scenarios * curr.n_particles * curr.dims.d;
    let n_units = (curr.n_scenarios * curr.n_particles) as f64;
    retained
        .iter()
        .map(|&k| {
            let a = &curr.states[k * block_len..(k + 1) * block_len];
            let b = &prev.states[k * block_len..(k + 1) * block_len];
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                / n_units
        })
        .fold(0.0, f64::max)
}

/// Fixed-point construction: freeze the law flow, solve the frozen equation
/// with the same drivers, remap, and iterate until the coupled iterate
/// distance drops below `tol`. Iteration 0 uses the constant-in-time law
/// flow of the initial condition.
pub fn picard_solve(
    cfg: &SimulationConfig,
    coeffs: &dyn Coefficients,
    max_iter: usize,
    tol: f64,
) -> Result<(PathBundle, PicardTrace)> {
    if max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be >= 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let drivers = draw_drivers(cfg, coeffs.dims())?;
    let mut prev = simulate_inner(cfg, coeffs, &drivers, LawFlow::FrozenInitial)?;
    let retained = prev.snapshot_indices();
    let mut distances = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let curr = simulate_inner(cfg, coeffs, &drivers, LawFlow::Frozen(&prev.states))?;
        let d_n = iterate_distance(&curr, &prev, &retained);
        distances.push(d_n);
        prev = curr;
        if d_n <= tol {
            converged = true;
            break;
        }
    }
    Ok((
        prev,
        PicardTrace {
            distances,
            converged,
            tol,
        },
    ))
}

/// Monte Carlo estimate of E sup_k |X_k|^2 over all (scenario, particle).
pub fn sup_moment(bundle: &PathBundle) -> f64 {
    let n0 = bundle.n_scenarios;
    let n1 = bundle.n_particles;
    let mut total = 0.0;
    for s in 0..n0 {
        for p in 0..n1 {
            let mut sup = 0.0f64;
            for k in 0..=bundle.grid.n_steps() {
                let x = bundle.state(k, s, p);
                let norm_sq: f64 = x.iter().map(|v| v * v).sum();
                sup = sup.max(norm_sq);
            }
            total += sup;
        }
    }
    total / (n0 * n1) as f64
}

/// Mean-square increment at one gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapStat {
    pub gap_steps: usize,
    pub h: f64,
    pub mean_sq: f64,
    pub std_err: f64,
}

/// Nonnegative least-squares fit of c1 h + c2 h^2 + c3 h^{2H}.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementFit {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub rel_residual: f64,
    pub fitted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncrementProfile {
    pub gaps: Vec<GapStat>,
    pub fit: IncrementFit,
}

/// Mean-square increments E|X_{t+h} - X_t|^2 averaged over t, per gap, with
/// a three-term scaling fit.
pub fn increment_profile(bundle: &PathBundle, gaps: &[usize]) -> Result<IncrementProfile> {
    let n_steps = bundle.grid.n_steps();
    if gaps.is_empty() {
        return Err(Error::InvalidParameter("need at least one gap".into()));
    }
    for &g in gaps {
        if g == 0 {
            return Err(Error::InvalidParameter("gaps must be positive".into()));
        }
        if g > n_steps {
            return Err(Error::GapExceedsHorizon {
                gap: g,
                n_steps,
            });
        }
    }
    let (n0, n1) = (bundle.n_scenarios, bundle.n_particles);
    let dt = bundle.grid.dt();
    let mut stats = Vec::with_capacity(gaps.len());
    for &g in gaps {
        // Per-unit average over starting times, then mean/SE over units.
        let per_unit: Vec<f64> = (0..n0 * n1)
            .into_par_iter()
            .map(|unit| {
                let (s, p) = (unit / n1, unit % n1);
                let mut acc = 0.0;
                for k in 0..=(n_steps - g) {
                    let a = bundle.state(k, s, p);
                    let b = bundle.state(k + g, s, p);
                    acc += a
                        .iter()
                        .zip(b)
                        .map(|(x, y)| (y - x) * (y - x))
                        .sum::<f64>();
                }
                acc / (n_steps - g + 1) as f64
            })
            .collect();
        let (mean, se) = mean_and_se(&per_unit);
        stats.push(GapStat {
            gap_steps: g,
            h: g as f64 * dt,
            mean_sq: mean,
            std_err: se,
        });
    }
    let two_h = 2.0 * bundle.hurst.value();
    let design: Vec<[f64; 3]> = stats
        .iter()
        .map(|s| [s.h, s.h * s.h, s.h.powf(two_h)])
        .collect();
    let target: Vec<f64> = stats.iter().map(|s| s.mean_sq).collect();
    let ([c1, c2, c3], rel_residual) = nnls3(&design, &target);
    let fitted = design
        .iter()
        .map(|row| row[0] * c1 + row[1] * c2 + row[2] * c3)
        .collect();
    Ok(IncrementProfile {
        gaps: stats,
        fit: IncrementFit {
            c1,
            c2,
            c3,
            rel_residual,
            fitted,
        },
    })
}
