//! Coefficient contracts for the drift/diffusion triple (b, sigma_W, sigma_H),
//! built-in test families, numerical time averaging, and empirical checkers
//! for the Lipschitz/growth and averaging assumptions.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::measures::{wasserstein2_1d, wasserstein2_assignment, EmpiricalMeasure};
use crate::rng::RandomStream;
use crate::stats::loglog_slope;

/// State, Brownian, and fractional driver dimensions (d, r, m).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub d: usize,
    pub r: usize,
    pub m: usize,
}

impl Dims {
    pub fn new(d: usize, r: usize, m: usize) -> Result<Self> {
        if d == 0 || r == 0 || m == 0 {
            return Err(Error::InvalidParameter(format!(
                "dimensions must be positive, got d={d}, r={r}, m={m}"
            )));
        }
        Ok(Dims { d, r, m })
    }

    pub fn scalar() -> Self {
        Dims { d: 1, r: 1, m: 1 }
    }
}

/// A scenario law as coefficient evaluations see it: the empirical support
/// plus precomputed summary statistics, so evaluations that only need the
/// mean or the second moment stay O(d).
#[derive(Debug, Clone, Copy)]
pub struct LawView<'a> {
    /// Support points, n x dim row-major.
    pub points: &'a [f64],
    pub dim: usize,
    /// Mean vector (dim entries).
    pub mean: &'a [f64],
    /// Moment functional at theta = 2, i.e. sqrt of the mean of |x|^2.
    pub w2_moment: f64,
}

/// An owned empirical law with cached statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Law {
    measure: EmpiricalMeasure,
    mean: Vec<f64>,
    w2_moment: f64,
}

impl Law {
    pub fn new(measure: EmpiricalMeasure) -> Self {
        let mean = measure.mean();
        let w2_moment = measure.second_moment().sqrt();
        Law {
            measure,
            mean,
            w2_moment,
        }
    }

    pub fn dirac(point: &[f64]) -> Self {
        Law::new(EmpiricalMeasure::dirac(point))
    }

    pub fn dirac_origin(dim: usize) -> Self {
        Law::new(EmpiricalMeasure::dirac_origin(dim))
    }

    pub fn measure(&self) -> &EmpiricalMeasure {
        &self.measure
    }

    pub fn view(&self) -> LawView<'_> {
        LawView {
            points: self.measure.points(),
            dim: self.measure.dim(),
            mean: &self.mean,
            w2_moment: self.w2_moment,
        }
    }
}

/// The time-dependent coefficient triple of the state equation. Evaluations
/// must be pure, reentrant, and finite on finite inputs; `sigma_h` cannot
/// read the state by construction.
pub trait Coefficients: Send + Sync {
    fn dims(&self) -> Dims;

    /// b(t, x, mu), written into `out` (d entries).
    fn drift(&self, t: f64, x: &[f64], law: &LawView, out: &mut [f64]);

    /// sigma_W(t, x, mu), written into `out` (d x r row-major).
    fn sigma_w(&self, t: f64, x: &[f64], law: &LawView, out: &mut [f64]);

    /// sigma_H(t, mu), written into `out` (d x m row-major).
    fn sigma_h(&self, t: f64, law: &LawView, out: &mut [f64]);

    fn label(&self) -> String;

    /// Largest time the family is defined for; `None` means global.
    fn time_domain(&self) -> Option<f64> {
        None
    }
}

/// Where an averaged coefficient set came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AveragingProvenance {
    ClosedForm,
    NumericallyAveraged { t_avg: f64, steps: usize },
}

/// The time-free averaged triple (b-bar, sigma_W-bar, sigma_H-bar).
pub trait AveragedCoefficients: Send + Sync {
    fn dims(&self) -> Dims;
    fn drift(&self, x: &[f64], law: &LawView, out: &mut [f64]);
    fn sigma_w(&self, x: &[f64], law: &LawView, out: &mut [f64]);
    fn sigma_h(&self, law: &LawView, out: &mut [f64]);
    fn provenance(&self) -> AveragingProvenance;
    fn label(&self) -> String;
}

fn scaled_identity(scale: f64, rows: usize, cols: usize, out: &mut [f64]) {
    out.fill(0.0);
    for i in 0..rows.min(cols) {
        out[i * cols + i] = scale;
    }
}

// ---------------------------------------------------------------------------
// Built-in families
// ---------------------------------------------------------------------------

/// b = beta * mean(mu), sigma_W = s_w I, sigma_H = s_h I. Time-independent,
/// with a closed-form solution for the conditional mean.
#[derive(Debug, Clone, Copy)]
pub struct LinearCondMean {
    pub beta: f64,
    pub s_w: f64,
    pub s_h: f64,
    pub dims: Dims,
}

impl LinearCondMean {
    pub fn new(beta: f64, s_w: f64, s_h: f64, dims: Dims) -> Self {
        LinearCondMean { beta, s_w, s_h, dims }
    }
}

impl Coefficients for LinearCondMean {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn drift(&self, _t: f64, _x: &[f64], law: &LawView, out: &mut [f64]) {
        for (o, m) in out.iter_mut().zip(law.mean) {
            *o = self.beta * m;
        }
    }

    fn sigma_w(&self, _t: f64, _x: &[f64], _law: &LawView, out: &mut [f64]) {
        scaled_identity(self.s_w, self.dims.d, self.dims.r, out);
    }

    fn sigma_h(&self, _t: f64, _law: &LawView, out: &mut [f64]) {
        scaled_identity(self.s_h, self.dims.d, self.dims.m, out);
    }

    fn label(&self) -> String {
        format!(
            "linear_cond_mean(beta={}, s_w={}, s_h={})",
            self.beta, self.s_w, self.s_h
        )
    }
}

/// Default cap on the (1 + W2-moment) diffusion factor of `osc_linear`.
pub const DEFAULT_W2_CAP: f64 = 4.0;

/// The averaging test family: oscillating modulations around
/// `linear_cond_mean`-style coefficients.
///
///   b(t, x, mu)    = beta mean(mu) + a_osc sin(t) x
///   sigma_W(t)     = s_w (1 + cos(t)/2) I
///   sigma_H(t, mu) = s_h (1 + sin(t)/2) min(1 + W2(mu), cap) I
#[derive(Debug, Clone, Copy)]
pub struct OscLinear {
    pub beta: f64,
    pub a_osc: f64,
    pub s_w: f64,
    pub s_h: f64,
    pub cap: f64,
    pub dims: Dims,
}

impl OscLinear {
    pub fn new(beta: f64, a_osc: f64, s_w: f64, s_h: f64, dims: Dims) -> Self {
        OscLinear {
            beta,
            a_osc,
            s_w,
            s_h,
            cap: DEFAULT_W2_CAP,
            dims,
        }
    }

    /// Long-run averages in closed form: the oscillations integrate out to
    /// their mean level 1.
    pub fn closed_form_average(&self) -> OscLinearAveraged {
        OscLinearAveraged {
            beta: self.beta,
            s_w: self.s_w,
            s_h: self.s_h,
            cap: self.cap,
            dims: self.dims,
        }
    }

    fn capped_law_factor(&self, law: &LawView) -> f64 {
        (1.0 + law.w2_moment).min(self.cap)
    }
}

impl Coefficients for OscLinear {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn drift(&self, t: f64, x: &[f64], law: &LawView, out: &mut [f64]) {
        let osc = self.a_osc * t.sin();
        for ((o, m), xi) in out.iter_mut().zip(law.mean).zip(x) {
            *o = self.beta * m + osc * xi;
        }
    }

    fn sigma_w(&self, t: f64, _x: &[f64], _law: &LawView, out: &mut [f64]) {
        scaled_identity(
            self.s_w * (1.0 + 0.5 * t.cos()),
            self.dims.d,
            self.dims.r,
            out,
        );
    }

    fn sigma_h(&self, t: f64, law: &LawView, out: &mut [f64]) {
        scaled_identity(
            self.s_h * (1.0 + 0.5 * t.sin()) * self.capped_law_factor(law),
            self.dims.d,
            self.dims.m,
            out,
        );
    }

    fn label(&self) -> String {
        format!(
            "osc_linear(beta={}, a_osc={}, s_w={}, s_h={}, cap={})",
            self.beta, self.a_osc, self.s_w, self.s_h, self.cap
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OscLinearAveraged {
    pub beta: f64,
    pub s_w: f64,
    pub s_h: f64,
    pub cap: f64,
    pub dims: Dims,
}

impl AveragedCoefficients for OscLinearAveraged {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn drift(&self, _x: &[f64], law: &LawView, out: &mut [f64]) {
        for (o, m) in out.iter_mut().zip(law.mean) {
            *o = self.beta * m;
        }
    }

    fn sigma_w(&self, _x: &[f64], _law: &LawView, out: &mut [f64]) {
        scaled_identity(self.s_w, self.dims.d, self.dims.r, out);
    }

    fn sigma_h(&self, law: &LawView, out: &mut [f64]) {
        let factor = (1.0 + law.w2_moment).min(self.cap);
        scaled_identity(self.s_h * factor, self.dims.d, self.dims.m, out);
    }

    fn provenance(&self) -> AveragingProvenance {
        AveragingProvenance::ClosedForm
    }

    fn label(&self) -> String {
        format!(
            "osc_linear_avg(beta={}, s_w={}, s_h={}, cap={})",
            self.beta, self.s_w, self.s_h, self.cap
        )
    }
}

/// Fixed diffusion levels of the Picard diagnostic family.
pub const CONTRACTION_PROBE_S_W: f64 = 0.3;
pub const CONTRACTION_PROBE_S_H: f64 = 0.2;

/// b = -lambda x + mean(mu), constant diffusions. Picard diagnostics family.
#[derive(Debug, Clone, Copy)]
pub struct ContractionProbe {
    pub lambda: f64,
    pub dims: Dims,
}

impl ContractionProbe {
    pub fn new(lambda: f64, dims: Dims) -> Self {
        ContractionProbe { lambda, dims }
    }
}

impl Coefficients for ContractionProbe {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn drift(&self, _t: f64, x: &[f64], law: &LawView, out: &mut [f64]) {
        for ((o, xi), m) in out.iter_mut().zip(x).zip(law.mean) {
            *o = -self.lambda * xi + m;
        }
    }

    fn sigma_w(&self, _t: f64, _x: &[f64], _law: &LawView, out: &mut [f64]) {
        scaled_identity(CONTRACTION_PROBE_S_W, self.dims.d, self.dims.r, out);
    }

    fn sigma_h(&self, _t: f64, _law: &LawView, out: &mut [f64]) {
        scaled_identity(CONTRACTION_PROBE_S_H, self.dims.d, self.dims.m, out);
    }

    fn label(&self) -> String {
        format!("contraction_probe(lambda={})", self.lambda)
    }
}

// ---------------------------------------------------------------------------
// Adapters
// ---------------------------------------------------------------------------

/// Run an averaged set through interfaces that expect time-dependent
/// coefficients; the time argument is ignored.
pub struct StationaryCoefficients(pub Arc<dyn AveragedCoefficients>);

impl Coefficients for StationaryCoefficients {
    fn dims(&self) -> Dims {
        self.0.dims()
    }

    fn drift(&self, _t: f64, x: &[f64], law: &LawView, out: &mut [f64]) {
        self.0.drift(x, law, out);
    }

    fn sigma_w(&self, _t: f64, x: &[f64], law: &LawView, out: &mut [f64]) {
        self.0.sigma_w(x, law, out);
    }

    fn sigma_h(&self, t: f64, law: &LawView, out: &mut [f64]) {
        let _ = t;
        self.0.sigma_h(law, out);
    }

    fn label(&self) -> String {
        self.0.label()
    }
}

/// Exact average of a time-independent coefficient set: evaluate at t = 0.
pub struct AveragedFromTimeIndependent(pub Arc<dyn Coefficients>);

impl AveragedCoefficients for AveragedFromTimeIndependent {
    fn dims(&self) -> Dims {
        self.0.dims()
    }

    fn drift(&self, x: &[f64], law: &LawView, out: &mut [f64]) {
        self.0.drift(0.0, x, law, out);
    }

    fn sigma_w(&self, x: &[f64], law: &LawView, out: &mut [f64]) {
        self.0.sigma_w(0.0, x, law, out);
    }

    fn sigma_h(&self, law: &LawView, out: &mut [f64]) {
        self.0.sigma_h(0.0, law, out);
    }

    fn provenance(&self) -> AveragingProvenance {
        AveragingProvenance::ClosedForm
    }

    fn label(&self) -> String {
        self.0.label()
    }
}

/// Coefficients evaluated on the fast clock t/epsilon.
pub struct TimeRescaled {
    pub inner: Arc<dyn Coefficients>,
    pub epsilon: f64,
}

impl Coefficients for TimeRescaled {
    fn dims(&self) -> Dims {
        self.inner.dims()
    }

    fn drift(&self, t: f64, x: &[f64], law: &LawView, out: &mut [f64]) {
        self.inner.drift(t / self.epsilon, x, law, out);
    }

    fn sigma_w(&self, t: f64, x: &[f64], law: &LawView, out: &mut [f64]) {
        self.inner.sigma_w(t / self.epsilon, x, law, out);
    }

    fn sigma_h(&self, t: f64, law: &LawView, out: &mut [f64]) {
        self.inner.sigma_h(t / self.epsilon, law, out);
    }

    fn label(&self) -> String {
        format!("{} @ t/{}", self.inner.label(), self.epsilon)
    }

    fn time_domain(&self) -> Option<f64> {
        self.inner.time_domain().map(|d| d * self.epsilon)
    }
}

/// Pointwise sum of two coefficient sets with matching dimensions.
pub struct SumCoefficients(pub Arc<dyn Coefficients>, pub Arc<dyn Coefficients>);

impl Coefficients for SumCoefficients {
    fn dims(&self) -> Dims {
        self.0.dims()
    }

    fn drift(&self, t: f64, x: &[f64], law: &LawView, out: &mut [f64]) {
        let mut tmp = vec![0.0; out.len()];
        self.0.drift(t, x, law, out);
        self.1.drift(t, x, law, &mut tmp);
        for (o, v) in out.iter_mut().zip(&tmp) {
            *o += v;
        }
    }

    fn sigma_w(&self, t: f64, x: &[f64], law: &LawView, out: &mut [f64]) {
        let mut tmp = vec![0.0; out.len()];
        self.0.sigma_w(t, x, law, out);
        self.1.sigma_w(t, x, law, &mut tmp);
        for (o, v) in out.iter_mut().zip(&tmp) {
            *o += v;
        }
    }

    fn sigma_h(&self, t: f64, law: &LawView, out: &mut [f64]) {
        let mut tmp = vec![0.0; out.len()];
        self.0.sigma_h(t, law, out);
        self.1.sigma_h(t, law, &mut tmp);
        for (o, v) in out.iter_mut().zip(&tmp) {
            *o += v;
        }
    }

    fn label(&self) -> String {
        format!("{} + {}", self.0.label(), self.1.label())
    }

    fn time_domain(&self) -> Option<f64> {
        match (self.0.time_domain(), self.1.time_domain()) {
            (None, None) => None,
            (Some(a), None) | (None, Some(a)) => Some(a),
            (Some(a), Some(b)) => Some(a.min(b)),
        }
    }
}

/// Deliberately wrong average: adds `slope * x` to the drift. Negative
/// control for the averaging verdict.
pub struct DriftOffset {
    pub inner: Arc<dyn AveragedCoefficients>,
    pub slope: f64,
}

impl AveragedCoefficients for DriftOffset {
    fn dims(&self) -> Dims {
        self.inner.dims()
    }

    fn drift(&self, x: &[f64], law: &LawView, out: &mut [f64]) {
        self.inner.drift(x, law, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o += self.slope * xi;
        }
    }

    fn sigma_w(&self, x: &[f64], law: &LawView, out: &mut [f64]) {
        self.inner.sigma_w(x, law, out);
    }

    fn sigma_h(&self, law: &LawView, out: &mut [f64]) {
        self.inner.sigma_h(law, out);
    }

    fn provenance(&self) -> AveragingProvenance {
        self.inner.provenance()
    }

    fn label(&self) -> String {
        format!("{} + {}*x", self.inner.label(), self.slope)
    }
}

// ---------------------------------------------------------------------------
// Numerical time averaging
// ---------------------------------------------------------------------------

/// Long-window midpoint-rule average of a time-dependent coefficient set.
/// Entries of the diffusion matrices are averaged linearly.
pub struct NumericTimeAverage {
    inner: Arc<dyn Coefficients>,
    t_avg: f64,
    steps: usize,
}

impl NumericTimeAverage {
    fn quadrature(&self, mut eval: impl FnMut(f64, &mut [f64]), out: &mut [f64]) {
        let ds = self.t_avg / self.steps as f64;
        out.fill(0.0);
        let mut tmp = vec![0.0; out.len()];
        for j in 0..self.steps {
            let s = (j as f64 + 0.5) * ds;
            eval(s, &mut tmp);
            for (o, v) in out.iter_mut().zip(&tmp) {
                *o += v;
            }
        }
        let inv = 1.0 / self.steps as f64;
        for o in out.iter_mut() {
            *o *= inv;
        }
    }
}

impl AveragedCoefficients for NumericTimeAverage {
    fn dims(&self) -> Dims {
        self.inner.dims()
    }

    fn drift(&self, x: &[f64], law: &LawView, out: &mut [f64]) {
        self.quadrature(|s, buf| self.inner.drift(s, x, law, buf), out);
    }

    fn sigma_w(&self, x: &[f64], law: &LawView, out: &mut [f64]) {
        self.quadrature(|s, buf| self.inner.sigma_w(s, x, law, buf), out);
    }

    fn sigma_h(&self, law: &LawView, out: &mut [f64]) {
        self.quadrature(|s, buf| self.inner.sigma_h(s, law, buf), out);
    }

    fn provenance(&self) -> AveragingProvenance {
        AveragingProvenance::NumericallyAveraged {
            t_avg: self.t_avg,
            steps: self.steps,
        }
    }

    fn label(&self) -> String {
        format!("avg[0,{}]({})", self.t_avg, self.inner.label())
    }
}

/// Construct the numerically-averaged coefficient set over [0, t_avg].
pub fn time_average(
    inner: Arc<dyn Coefficients>,
    t_avg: f64,
    steps: usize,
) -> Result<NumericTimeAverage> {
    if !(t_avg > 0.0) || !t_avg.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "averaging window must be positive, got {t_avg}"
        )));
    }
    if steps < 2 {
        return Err(Error::InvalidParameter(format!(
            "averaging needs at least 2 quadrature steps, got {steps}"
        )));
    }
    if let Some(domain) = inner.time_domain() {
        if t_avg > domain {
            return Err(Error::WindowBeyondDomain {
                start: 0.0,
                end: t_avg,
                domain,
            });
        }
    }
    Ok(NumericTimeAverage {
        inner,
        t_avg,
        steps,
    })
}

// ---------------------------------------------------------------------------
// Family registry (used by the CLI)
// ---------------------------------------------------------------------------

fn take_param(params: &mut BTreeMap<String, f64>, key: &str) -> Result<f64> {
    params
        .remove(key)
        .ok_or_else(|| Error::InvalidParameter(format!("missing family parameter `{key}`")))
}

fn reject_leftovers(params: BTreeMap<String, f64>) -> Result<()> {
    if let Some(key) = params.keys().next() {
        return Err(Error::InvalidParameter(format!(
            "unknown family parameter `{key}`"
        )));
    }
    Ok(())
}

/// Build a built-in family by name.
pub fn builtin_family(
    name: &str,
    params: &BTreeMap<String, f64>,
    dims: Dims,
) -> Result<Arc<dyn Coefficients>> {
    let mut params = params.clone();
    let family: Arc<dyn Coefficients> = match name {
        "linear_cond_mean" => {
            let beta = take_param(&mut params, "beta")?;
            let s_w = take_param(&mut params, "s_w")?;
            let s_h = take_param(&mut params, "s_h")?;
            Arc::new(LinearCondMean::new(beta, s_w, s_h, dims))
        }
        "osc_linear" => {
            let beta = take_param(&mut params, "beta")?;
            let a_osc = take_param(&mut params, "a_osc")?;
            let s_w = take_param(&mut params, "s_w")?;
            let s_h = take_param(&mut params, "s_h")?;
            let cap = params.remove("cap").unwrap_or(DEFAULT_W2_CAP);
            let mut fam = OscLinear::new(beta, a_osc, s_w, s_h, dims);
            fam.cap = cap;
            Arc::new(fam)
        }
        "contraction_probe" => {
            let lambda = take_param(&mut params, "lambda")?;
            Arc::new(ContractionProbe::new(lambda, dims))
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown coefficient family `{other}`"
            )))
        }
    };
    reject_leftovers(params)?;
    Ok(family)
}

/// Closed-form average of a built-in family.
pub fn builtin_closed_form_average(
    name: &str,
    params: &BTreeMap<String, f64>,
    dims: Dims,
) -> Result<Arc<dyn AveragedCoefficients>> {
    match name {
        "osc_linear" => {
            let mut p = params.clone();
            let beta = take_param(&mut p, "beta")?;
            let _a_osc = take_param(&mut p, "a_osc")?;
            let s_w = take_param(&mut p, "s_w")?;
            let s_h = take_param(&mut p, "s_h")?;
            let cap = p.remove("cap").unwrap_or(DEFAULT_W2_CAP);
            reject_leftovers(p)?;
            Ok(Arc::new(OscLinearAveraged {
                beta,
                s_w,
                s_h,
                cap,
                dims,
            }))
        }
        // the remaining built-ins are time-independent
        _ => Ok(Arc::new(AveragedFromTimeIndependent(builtin_family(
            name, params, dims,
        )?))),
    }
}

// ---------------------------------------------------------------------------
// Probe clouds
// ---------------------------------------------------------------------------

/// Specification of the probe cloud the assumption checkers evaluate on.
#[derive(Debug, Clone, Copy)]
pub struct ProbeSpec {
    pub n_pairs: usize,
    pub box_half_width: f64,
    pub measure_atoms: usize,
    pub seed: u64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec {
            n_pairs: 48,
            box_half_width: 3.0,
            measure_atoms: 16,
            seed: 0x5EED,
        }
    }
}

struct ProbePair {
    x: Vec<f64>,
    y: Vec<f64>,
    mu: Law,
    nu: Law,
    /// Exact W2 between mu and nu, precomputed.
    w2: f64,
}

fn seeded_permutation(n: usize, stream: &RandomStream) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (stream.u64_at(i as u64) % (i as u64 + 1)) as usize;
        perm.swap(i, j);
    }
    perm
}

/// Stratified (Latin-hypercube style) cloud of n points in [-hw, hw]^d.
fn stratified_cloud(stream: &RandomStream, n: usize, d: usize, hw: f64) -> Vec<f64> {
    let mut out = vec![0.0; n * d];
    for j in 0..d {
        let perm = seeded_permutation(n, &stream.child(2 * j as u64));
        let jit = stream.child(2 * j as u64 + 1);
        for i in 0..n {
            let u = (perm[i] as f64 + jit.uniform_at(i as u64)) / n as f64;
            out[i * d + j] = (2.0 * u - 1.0) * hw;
        }
    }
    out
}

fn uniform_cloud(stream: &RandomStream, n: usize, d: usize, hw: f64) -> Vec<f64> {
    (0..n * d)
        .map(|k| (2.0 * stream.uniform_at(k as u64) - 1.0) * hw)
        .collect()
}

fn exact_w2(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    if mu.dim() == 1 {
        wasserstein2_1d(mu, nu)
    } else {
        wasserstein2_assignment(mu, nu)
    }
}

/// Pair kinds cycle so the cloud exercises state-only, measure-only
/// (translate), joint, and fully degenerate perturbations.
fn build_probe_pairs(spec: &ProbeSpec, d: usize) -> Result<Vec<ProbePair>> {
    let stream = RandomStream::from_seed(spec.seed);
    let n = spec.n_pairs.max(4);
    let xs = stratified_cloud(&stream.child(0), n, d, spec.box_half_width);
    let ys = stratified_cloud(&stream.child(1), n, d, spec.box_half_width);
    let mut pairs = Vec::with_capacity(n);
    for i in 0..n {
        let sub = stream.child(16 + i as u64);
        let x = xs[i * d..(i + 1) * d].to_vec();
        let atoms = uniform_cloud(&sub.child(0), spec.measure_atoms, d, spec.box_half_width);
        let mu = EmpiricalMeasure::new(atoms.clone(), d)?;
        let (y, nu) = match i % 4 {
            0 => (ys[i * d..(i + 1) * d].to_vec(), mu.clone()),
            1 => {
                let shift: Vec<f64> = (0..d)
                    .map(|j| {
                        (2.0 * sub.child(1).uniform_at(j as u64) - 1.0) * spec.box_half_width / 2.0
                    })
                    .collect();
                let translated: Vec<f64> = atoms
                    .chunks(d)
                    .flat_map(|p| p.iter().zip(&shift).map(|(a, s)| a + s).collect::<Vec<_>>())
                    .collect();
                (x.clone(), EmpiricalMeasure::new(translated, d)?)
            }
            2 => {
                let other =
                    uniform_cloud(&sub.child(2), spec.measure_atoms, d, spec.box_half_width);
                (
                    ys[i * d..(i + 1) * d].to_vec(),
                    EmpiricalMeasure::new(other, d)?,
                )
            }
            _ => (x.clone(), mu.clone()), // degenerate, checker must skip it
        };
        let w2 = exact_w2(&mu, &nu)?;
        pairs.push(ProbePair {
            x,
            y,
            mu: Law::new(mu),
            nu: Law::new(nu),
            w2,
        });
    }
    Ok(pairs)
}

// ---------------------------------------------------------------------------
// Assumption checkers
// ---------------------------------------------------------------------------

/// Empirical Lipschitz/growth envelope of a coefficient set.
#[derive(Debug, Clone)]
pub struct K1Report {
    /// (t, sup ratio at t) samples.
    pub samples: Vec<(f64, f64)>,
    /// Running maximum of the samples: the non-decreasing envelope.
    pub envelope: Vec<(f64, f64)>,
    /// Overall empirical constant.
    pub k1_hat: f64,
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn diff_norm_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn ensure_finite(t: f64, vals: &[f64], what: &str) -> Result<()> {
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidEvaluation {
            t,
            detail: format!("{what} produced a non-finite value"),
        });
    }
    Ok(())
}

/// Estimate the Lipschitz/growth constant K1 over a probe cloud, per time.
/// The estimate is a lower envelope of the true sup; treat it accordingly.
pub fn check_assumption1(
    coeffs: &dyn Coefficients,
    probes: &ProbeSpec,
    t_grid: &TimeGrid,
) -> Result<K1Report> {
    let dims = coeffs.dims();
    let pairs = build_probe_pairs(probes, dims.d)?;
    let origin = vec![0.0; dims.d];
    let delta0 = Law::dirac_origin(dims.d);

    let mut b_x = vec![0.0; dims.d];
    let mut b_y = vec![0.0; dims.d];
    let mut sw_x = vec![0.0; dims.d * dims.r];
    let mut sw_y = vec![0.0; dims.d * dims.r];
    let mut sh_x = vec![0.0; dims.d * dims.m];
    let mut sh_y = vec![0.0; dims.d * dims.m];

    let mut samples = Vec::with_capacity(t_grid.n_points());
    for t in t_grid.times() {
        // delta_0 growth term
        coeffs.drift(t, &origin, &delta0.view(), &mut b_x);
        coeffs.sigma_w(t, &origin, &delta0.view(), &mut sw_x);
        coeffs.sigma_h(t, &delta0.view(), &mut sh_x);
        ensure_finite(t, &b_x, "drift at delta_0")?;
        ensure_finite(t, &sw_x, "sigma_w at delta_0")?;
        ensure_finite(t, &sh_x, "sigma_h at delta_0")?;
        let mut sup = norm_sq(&b_x) + norm_sq(&sw_x) + norm_sq(&sh_x);

        for pair in &pairs {
            let dx_sq = diff_norm_sq(&pair.x, &pair.y);
            let w2_sq = pair.w2 * pair.w2;
            if dx_sq == 0.0 && w2_sq == 0.0 {
                continue; // degenerate pair
            }
            let mu = pair.mu.view();
            let nu = pair.nu.view();
            coeffs.drift(t, &pair.x, &mu, &mut b_x);
            coeffs.drift(t, &pair.y, &nu, &mut b_y);
            coeffs.sigma_w(t, &pair.x, &mu, &mut sw_x);
            coeffs.sigma_w(t, &pair.y, &nu, &mut sw_y);
            ensure_finite(t, &b_x, "drift")?;
            ensure_finite(t, &b_y, "drift")?;
            ensure_finite(t, &sw_x, "sigma_w")?;
            ensure_finite(t, &sw_y, "sigma_w")?;
            let num = diff_norm_sq(&b_x, &b_y) + diff_norm_sq(&sw_x, &sw_y);
            sup = sup.max(num / (dx_sq + w2_sq));
            if w2_sq > 0.0 {
                coeffs.sigma_h(t, &mu, &mut sh_x);
                coeffs.sigma_h(t, &nu, &mut sh_y);
                ensure_finite(t, &sh_x, "sigma_h")?;
                ensure_finite(t, &sh_y, "sigma_h")?;
                sup = sup.max(diff_norm_sq(&sh_x, &sh_y) / w2_sq);
            }
        }
        samples.push((t, sup));
    }
    let mut envelope = Vec::with_capacity(samples.len());
    let mut running = f64::NEG_INFINITY;
    for &(t, v) in &samples {
        running = running.max(v);
        envelope.push((t, running));
    }
    Ok(K1Report {
        k1_hat: running,
        samples,
        envelope,
    })
}

/// One sampled point of the K2 curve: normalized sup deviations of the three
/// coefficient channels over windows of length `t_window`.
#[derive(Debug, Clone, Copy)]
pub struct K2Point {
    pub t_window: f64,
    pub drift: f64,
    pub sig_w: f64,
    pub sig_h: f64,
}

impl K2Point {
    pub fn total(&self) -> f64 {
        self.drift + self.sig_w + self.sig_h
    }
}

/// Measured K2 curve with a decay verdict.
#[derive(Debug, Clone)]
pub struct K2Report {
    pub curve: Vec<K2Point>,
    /// Totals non-increasing (up to a relative tie tolerance) and the final
    /// total strictly below the first.
    pub decreasing: bool,
    /// Log-log slope of the totals; NaN when the curve is identically zero.
    pub loglog_slope: f64,
}

impl K2Report {
    pub fn verdict(&self) -> bool {
        self.decreasing && (self.loglog_slope.is_nan() || self.loglog_slope < 0.0)
    }
}

/// Relative tolerance for ties in the K2 decay check: periodic families give
/// exactly equal window averages at commensurate window lengths.
const K2_TIE_TOL: f64 = 1e-6;

/// Number of window starts sampled over one base period.
const K2_WINDOW_STARTS: usize = 8;

/// Quadrature points per unit time inside a window.
const K2_QUAD_PER_UNIT: f64 = 64.0;

/// Estimate the averaged-deviation constant K2 over the given window
/// lengths. The drift channel measures the squared norm of the window
/// average of (b - b_bar); the diffusion channels measure the window average
/// of squared deviation norms.
pub fn check_assumption2(
    coeffs: &dyn Coefficients,
    averaged: &dyn AveragedCoefficients,
    windows: &[f64],
    probes: &ProbeSpec,
) -> Result<K2Report> {
    if windows.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one window length".into(),
        ));
    }
    if windows.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidParameter(
            "window lengths must be positive".into(),
        ));
    }
    if windows.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "window lengths must be strictly increasing".into(),
        ));
    }
    let dims = coeffs.dims();
    let pairs = build_probe_pairs(probes, dims.d)?;
    // Probe set: one (x, mu) per pair, capped, plus the origin probe.
    let mut probe_set: Vec<(Vec<f64>, Law)> = pairs
        .into_iter()
        .take(8)
        .map(|p| (p.x, p.mu))
        .collect();
    probe_set.push((vec![0.0; dims.d], Law::dirac_origin(dims.d)));

    let starts: Vec<f64> = (0..K2_WINDOW_STARTS)
        .map(|i| i as f64 * (2.0 * std::f64::consts::PI / K2_WINDOW_STARTS as f64))
        .collect();

    let mut b_bar = vec![0.0; dims.d];
    let mut sw_bar = vec![0.0; dims.d * dims.r];
    let mut sh_bar = vec![0.0; dims.d * dims.m];
    let mut b = vec![0.0; dims.d];
    let mut sw = vec![0.0; dims.d * dims.r];
    let mut sh = vec![0.0; dims.d * dims.m];
    let mut acc = vec![0.0; dims.d];

    let mut curve = Vec::with_capacity(windows.len());
    for &t_window in windows {
        let steps = ((t_window * K2_QUAD_PER_UNIT).ceil() as usize).max(64);
        let ds = t_window / steps as f64;
        let mut sup_drift = 0.0f64;
        let mut sup_sw = 0.0f64;
        let mut sup_sh = 0.0f64;
        for (x, law) in &probe_set {
            let view = law.view();
            averaged.drift(x, &view, &mut b_bar);
            averaged.sigma_w(x, &view, &mut sw_bar);
            averaged.sigma_h(&view, &mut sh_bar);
            let denom = 1.0 + norm_sq(x) + view.w2_moment * view.w2_moment;
            let denom_h = 1.0 + view.w2_moment * view.w2_moment;
            for &t0 in &starts {
                if let Some(domain) = coeffs.time_domain() {
                    if t0 + t_window > domain {
                        return Err(Error::WindowBeyondDomain {
                            start: t0,
                            end: t0 + t_window,
                            domain,
                        });
                    }
                }
                acc.fill(0.0);
                let mut acc_sw = 0.0;
                let mut acc_sh = 0.0;
                for j in 0..steps {
                    let s = t0 + (j as f64 + 0.5) * ds;
                    coeffs.drift(s, x, &view, &mut b);
                    ensure_finite(s, &b, "drift")?;
                    for (a, (bi, bb)) in acc.iter_mut().zip(b.iter().zip(&b_bar)) {
                        *a += bi - bb;
                    }
                    coeffs.sigma_w(s, x, &view, &mut sw);
                    ensure_finite(s, &sw, "sigma_w")?;
                    acc_sw += diff_norm_sq(&sw, &sw_bar);
                    coeffs.sigma_h(s, &view, &mut sh);
                    ensure_finite(s, &sh, "sigma_h")?;
                    acc_sh += diff_norm_sq(&sh, &sh_bar);
                }
                let drift_avg_sq = norm_sq(&acc) * (ds / t_window) * (ds / t_window);
                sup_drift = sup_drift.max(drift_avg_sq / denom);
                sup_sw = sup_sw.max(acc_sw * ds / t_window / denom);
                sup_sh = sup_sh.max(acc_sh * ds / t_window / denom_h);
            }
        }
        curve.push(K2Point {
            t_window,
            drift: sup_drift,
            sig_w: sup_sw,
            sig_h: sup_sh,
        });
    }

    let totals: Vec<f64> = curve.iter().map(K2Point::total).collect();
    let all_zero = totals.iter().all(|&v| v <= 1e-14);
    let non_increasing = totals
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + K2_TIE_TOL) + 1e-14);
    let strict_overall = all_zero || totals.last().unwrap() < totals.first().unwrap();
    let ts: Vec<f64> = curve.iter().map(|p| p.t_window).collect();
    Ok(K2Report {
        decreasing: non_increasing && strict_overall,
        loglog_slope: if all_zero {
            f64::NAN
        } else {
            loglog_slope(&ts, &totals)
        },
        curve,
    })
}
