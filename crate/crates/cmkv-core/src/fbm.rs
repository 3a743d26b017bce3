//! Fractional Brownian motion synthesis with exact increment covariance.
//!
//! Two samplers share one distributional contract: a Davies-Harte circulant
//! embedding (O(n log n), production) and a dense Cholesky factorization of
//! the increment covariance (O(n^3) setup, the correctness oracle at small
//! grids). Components of a multi-dimensional path are independent substreams.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{HurstParameter, TimeGrid};
use crate::rng::RandomStream;

/// Largest grid the Cholesky oracle accepts.
pub const CHOLESKY_GRID_BOUND: usize = 1024;

/// Relative tolerance on negative circulant eigenvalues before the sampler
/// falls back to Cholesky.
pub const CIRCULANT_EIG_TOL: f64 = 1e-10;

/// fBm covariance kernel Cov(B_s, B_t) = (s^{2H} + t^{2H} - |t-s|^{2H}) / 2.
/// Reduces to min(s, t) at H = 1/2.
pub fn fbm_covariance(s: f64, t: f64, h: HurstParameter) -> f64 {
    debug_assert!(s >= 0.0 && t >= 0.0);
    let hh = 2.0 * h.value();
    0.5 * (s.powf(hh) + t.powf(hh) - (t - s).abs().powf(hh))
}

/// Autocovariance of unit-spacing fractional Gaussian noise at lag k.
fn fgn_autocovariance(k: usize, h: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let k = k as f64;
    let hh = 2.0 * h;
    0.5 * ((k + 1.0).powf(hh) - 2.0 * k.powf(hh) + (k - 1.0).powf(hh))
}

/// Which sampler actually produced a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerProvenance {
    Cholesky,
    Circulant,
    /// Circulant embedding was requested but its spectrum failed the
    /// positivity tolerance, so the Cholesky oracle produced the path.
    CirculantFellBack,
}

/// A sampled fBm path on a uniform grid: `values` holds n_points x dim,
/// row-major, starting at exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmPath {
    values: Vec<f64>,
    grid: TimeGrid,
    hurst: HurstParameter,
    dim: usize,
    seed_tag: u64,
    provenance: SamplerProvenance,
}

impl FbmPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn hurst(&self) -> HurstParameter {
        self.hurst
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed_tag(&self) -> u64 {
        self.seed_tag
    }

    pub fn provenance(&self) -> SamplerProvenance {
        self.provenance
    }

    /// Path values at grid index k, one entry per component.
    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// Increment B_{k+1} - B_k written into `out` (dim entries).
    pub fn increment_into(&self, k: usize, out: &mut [f64]) {
        let a = self.at(k);
        let b = &self.values[(k + 1) * self.dim..(k + 2) * self.dim];
        for ((o, lo), hi) in out.iter_mut().zip(a).zip(b) {
            *o = hi - lo;
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Exact-covariance oracle sampler: dense Cholesky factor of the fGn
/// covariance. Setup is O(n^3) and bounded by [`CHOLESKY_GRID_BOUND`].
pub struct CholeskyFbmSampler {
    grid: TimeGrid,
    hurst: HurstParameter,
    /// Lower-triangular factor, row-packed: L[i][j] at i(i+1)/2 + j.
    factor: Vec<f64>,
    scale: f64,
}

impl CholeskyFbmSampler {
    pub fn new(grid: TimeGrid, hurst: HurstParameter) -> Result<Self> {
        let n = grid.n_steps();
        if n > CHOLESKY_GRID_BOUND {
            return Err(Error::GridTooLarge {
                n_steps: n,
                bound: CHOLESKY_GRID_BOUND,
            });
        }
        let h = hurst.value();
        let mut factor = vec![0.0; n * (n + 1) / 2];
        for i in 0..n {
            let row_i = i * (i + 1) / 2;
            for j in 0..=i {
                let row_j = j * (j + 1) / 2;
                let mut s = fgn_autocovariance(i - j, h);
                for k in 0..j {
                    s -= factor[row_i + k] * factor[row_j + k];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::CovarianceNotPsd { pivot: i, value: s });
                    }
                    factor[row_i + j] = s.sqrt();
                } else {
                    factor[row_i + j] = s / factor[row_j + j];
                }
            }
        }
        Ok(CholeskyFbmSampler {
            grid,
            hurst,
            factor,
            scale: grid.dt().powf(h),
        })
    }

    pub fn sample(&self, dim: usize, stream: RandomStream) -> FbmPath {
        let n = self.grid.n_steps();
        let mut values = vec![0.0; (n + 1) * dim];
        let mut z = vec![0.0; n];
        for c in 0..dim {
            let sub = stream.child(c as u64);
            for (i, zi) in z.iter_mut().enumerate() {
                *zi = sub.normal_at(i as u64);
            }
            let mut level = 0.0;
            for i in 0..n {
                let row = i * (i + 1) / 2;
                let mut incr = 0.0;
                for (k, zk) in z[..=i].iter().enumerate() {
                    incr += self.factor[row + k] * zk;
                }
                level += incr * self.scale;
                values[(i + 1) * dim + c] = level;
            }
        }
        FbmPath {
            values,
            grid: self.grid,
            hurst: self.hurst,
            dim,
            seed_tag: stream.key(),
            provenance: SamplerProvenance::Cholesky,
        }
    }
}

enum CirculantMode {
    Spectral {
        fft: Arc<dyn Fft<f64>>,
        /// amp[0] = sqrt(l_0/M), amp[n] = sqrt(l_n/M), amp[k] = sqrt(l_k/(2M))
        /// for 0 < k < n; only the first n+1 amplitudes are stored.
        amp: Vec<f64>,
    },
    Fallback(CholeskyFbmSampler),
}

/// Davies-Harte circulant-embedding sampler, O(n log n) per path. Falls back
/// to the Cholesky oracle when the embedding spectrum has a negative
/// eigenvalue beyond tolerance, rather than truncating the spectrum.
pub struct CirculantFbmSampler {
    grid: TimeGrid,
    hurst: HurstParameter,
    mode: CirculantMode,
    scale: f64,
}

impl CirculantFbmSampler {
    pub fn new(grid: TimeGrid, hurst: HurstParameter) -> Result<Self> {
        let n = grid.n_steps();
        let h = hurst.value();
        let m = 2 * n;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);

        // First row of the circulant embedding of the fGn covariance.
        let mut row: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); m];
        for (j, slot) in row.iter_mut().enumerate() {
            let lag = if j <= n { j } else { m - j };
            slot.re = fgn_autocovariance(lag, h);
        }
        let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(&mut row, &mut scratch);

        let max_eig = row.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
        let min_eig = row.iter().map(|e| e.re).fold(f64::INFINITY, f64::min);
        let mode = if min_eig < -CIRCULANT_EIG_TOL * max_eig {
            CirculantMode::Fallback(CholeskyFbmSampler::new(grid, hurst)?)
        } else {
            let mf = m as f64;
            let amp = (0..=n)
                .map(|k| {
                    let lam = row[k].re.max(0.0);
                    if k == 0 || k == n {
                        (lam / mf).sqrt()
                    } else {
                        (lam / (2.0 * mf)).sqrt()
                    }
                })
                .collect();
            CirculantMode::Spectral { fft, amp }
        };
        Ok(CirculantFbmSampler {
            grid,
            hurst,
            mode,
            scale: grid.dt().powf(h),
        })
    }

    pub fn fell_back(&self) -> bool {
        matches!(self.mode, CirculantMode::Fallback(_))
    }

    pub fn sample(&self, dim: usize, stream: RandomStream) -> FbmPath {
        match &self.mode {
            CirculantMode::Fallback(oracle) => {
                let mut path = oracle.sample(dim, stream);
                path.provenance = SamplerProvenance::CirculantFellBack;
                path
            }
            CirculantMode::Spectral { fft, amp } => {
                let n = self.grid.n_steps();
                let m = 2 * n;
                let mut values = vec![0.0; (n + 1) * dim];
                let mut w: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); m];
                let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
                for c in 0..dim {
                    let sub = stream.child(c as u64);
                    // Draw layout: counter 0 -> k=0 term, 1 -> Nyquist term,
                    // (2k, 2k+1) -> real/imag pair of the k-th mode.
                    w[0] = Complex::new(amp[0] * sub.normal_at(0), 0.0);
                    if n > 0 {
                        w[n] = Complex::new(amp[n] * sub.normal_at(1), 0.0);
                    }
                    for k in 1..n {
                        let re = amp[k] * sub.normal_at(2 * k as u64);
                        let im = amp[k] * sub.normal_at(2 * k as u64 + 1);
                        w[k] = Complex::new(re, im);
                        w[m - k] = Complex::new(re, -im);
                    }
                    fft.process_with_scratch(&mut w, &mut scratch);
                    let mut level = 0.0;
                    for i in 0..n {
                        level += w[i].re * self.scale;
                        values[(i + 1) * dim + c] = level;
                    }
                }
                FbmPath {
                    values,
                    grid: self.grid,
                    hurst: self.hurst,
                    dim,
                    seed_tag: stream.key(),
                    provenance: SamplerProvenance::Circulant,
                }
            }
        }
    }
}

/// One-shot Cholesky-oracle sample. Prefer holding a [`CholeskyFbmSampler`]
/// when drawing many paths on the same grid.
pub fn sample_fbm_cholesky(
    grid: TimeGrid,
    hurst: HurstParameter,
    dim: usize,
    stream: RandomStream,
) -> Result<FbmPath> {
    Ok(CholeskyFbmSampler::new(grid, hurst)?.sample(dim, stream))
}

/// One-shot circulant-embedding sample.
pub fn sample_fbm_circulant(
    grid: TimeGrid,
    hurst: HurstParameter,
    dim: usize,
    stream: RandomStream,
) -> Result<FbmPath> {
    Ok(CirculantFbmSampler::new(grid, hurst)?.sample(dim, stream))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(t: f64, n: usize) -> TimeGrid {
        TimeGrid::new(t, n).unwrap()
    }

    fn hurst(h: f64) -> HurstParameter {
        HurstParameter::new(h).unwrap()
    }

    #[test]
    fn covariance_closed_forms() {
        assert!((fbm_covariance(1.0, 1.0, hurst(0.75)) - 1.0).abs() < 1e-15);
        for h in [0.5, 0.6, 0.75, 0.9] {
            assert!(
                (fbm_covariance(0.5, 1.0, hurst(h)) - 0.5).abs() < 1e-15,
                "H={h}"
            );
        }
        // (1 + 2^{1.5} - 1)/2 = sqrt(2)
        assert!((fbm_covariance(1.0, 2.0, hurst(0.75)) - 2f64.sqrt()).abs() < 1e-12);
        // symmetry and the Brownian reduction
        assert_eq!(
            fbm_covariance(0.3, 0.8, hurst(0.8)),
            fbm_covariance(0.8, 0.3, hurst(0.8))
        );
        assert!((fbm_covariance(0.3, 0.8, hurst(0.5)) - 0.3).abs() < 1e-15);
    }

    /// Sample covariance of (B_s, B_t) over `m` paths with its standard error.
    fn sample_cov<F: Fn(u64) -> FbmPath>(
        sample: F,
        m: usize,
        i: usize,
        j: usize,
    ) -> (f64, f64) {
        let mut prods = Vec::with_capacity(m);
        for path_id in 0..m {
            let p = sample(path_id as u64);
            prods.push(p.at(i)[0] * p.at(j)[0]);
        }
        mean_and_se(&prods)
    }

    fn mean_and_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    #[test]
    fn cholesky_matches_exact_covariance() {
        let g = grid(1.0, 64);
        let h = hurst(0.7);
        let sampler = CholeskyFbmSampler::new(g, h).unwrap();
        let root = RandomStream::from_seed(11);
        let m = 20_000;
        // Var(B_1) = 1
        let (var1, se1) = sample_cov(|id| sampler.sample(1, root.child(id)), m, 64, 64);
        assert!((var1 - 1.0).abs() < 3.0 * se1, "var {var1} se {se1}");
        // Cov(B_{1/2}, B_1) = 1/2 for every H
        let (cov, se) = sample_cov(|id| sampler.sample(1, root.child(id)), m, 32, 64);
        assert!((cov - 0.5).abs() < 3.0 * se, "cov {cov} se {se}");
    }

    #[test]
    fn circulant_matches_exact_covariance() {
        let g = grid(1.0, 64);
        let h = hurst(0.7);
        let sampler = CirculantFbmSampler::new(g, h).unwrap();
        assert!(!sampler.fell_back());
        let root = RandomStream::from_seed(12);
        let m = 20_000;
        let (var1, se1) = sample_cov(|id| sampler.sample(1, root.child(id)), m, 64, 64);
        assert!((var1 - 1.0).abs() < 3.0 * se1, "var {var1} se {se1}");
        let (cov, se) = sample_cov(|id| sampler.sample(1, root.child(id)), m, 32, 64);
        assert!((cov - 0.5).abs() < 3.0 * se, "cov {cov} se {se}");
    }

    #[test]
    fn circulant_agrees_with_cholesky_oracle() {
        // Two-sample comparison of Cov(B_{1/4}, B_{3/4}) at H = 0.8.
        let g = grid(1.0, 64);
        let h = hurst(0.8);
        let oracle = CholeskyFbmSampler::new(g, h).unwrap();
        let prod = CirculantFbmSampler::new(g, h).unwrap();
        let root = RandomStream::from_seed(13);
        let m = 20_000;
        let (c1, s1) = sample_cov(|id| oracle.sample(1, root.child(id)), m, 16, 48);
        let (c2, s2) = sample_cov(|id| prod.sample(1, root.child(1 << 32 | id)), m, 16, 48);
        let exact = fbm_covariance(0.25, 0.75, h);
        let combined = (s1 * s1 + s2 * s2).sqrt();
        assert!((c1 - c2).abs() < 3.0 * combined, "{c1} vs {c2}");
        assert!((c1 - exact).abs() < 3.0 * s1);
        assert!((c2 - exact).abs() < 3.0 * s2);
    }

    #[test]
    fn brownian_reduction_has_independent_increments() {
        let g = grid(1.0, 64);
        let sampler = CirculantFbmSampler::new(g, hurst(0.5)).unwrap();
        let root = RandomStream::from_seed(14);
        let m = 20_000;
        // Disjoint increments B_{1/4}-B_0 and B_{3/4}-B_{1/2}.
        let mut xs = Vec::with_capacity(m);
        let mut ys = Vec::with_capacity(m);
        for id in 0..m {
            let p = sampler.sample(1, root.child(id as u64));
            xs.push(p.at(16)[0]);
            ys.push(p.at(48)[0] - p.at(32)[0]);
        }
        let (mx, _) = mean_and_se(&xs);
        let (my, _) = mean_and_se(&ys);
        let prods: Vec<f64> = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - mx) * (y - my))
            .collect();
        let (cov, se) = mean_and_se(&prods);
        assert!(cov.abs() < 3.0 * se, "cov {cov} se {se}");
    }

    #[test]
    fn brownian_increments_have_normal_kurtosis() {
        let g = grid(1.0, 16);
        let sampler = CirculantFbmSampler::new(g, hurst(0.5)).unwrap();
        let root = RandomStream::from_seed(15);
        let mut incrs = Vec::new();
        let mut buf = [0.0];
        for id in 0..4000u64 {
            let p = sampler.sample(1, root.child(id));
            for k in 0..16 {
                p.increment_into(k, &mut buf);
                incrs.push(buf[0]);
            }
        }
        let n = incrs.len() as f64;
        let mean = incrs.iter().sum::<f64>() / n;
        let var = incrs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m4 = incrs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        let kurt = m4 / (var * var);
        let se = (96.0 / n).sqrt();
        assert!((kurt - 3.0).abs() < 3.0 * se, "kurt {kurt} se {se}");
        assert!((var - g.dt()).abs() < 3.0 * (2.0 / n).sqrt() * g.dt());
    }

    #[test]
    fn increments_are_stationary() {
        let g = grid(1.0, 32);
        let h = hurst(0.75);
        let sampler = CirculantFbmSampler::new(g, h).unwrap();
        let root = RandomStream::from_seed(16);
        let m = 20_000;
        let gap = 8usize;
        let expected = (gap as f64 * g.dt()).powf(2.0 * h.value());
        let mut early = Vec::with_capacity(m);
        let mut late = Vec::with_capacity(m);
        for id in 0..m {
            let p = sampler.sample(1, root.child(id as u64));
            early.push((p.at(gap)[0] - p.at(0)[0]).powi(2));
            late.push((p.at(24)[0] - p.at(24 - gap)[0]).powi(2));
        }
        let (v_early, se_e) = mean_and_se(&early);
        let (v_late, se_l) = mean_and_se(&late);
        assert!((v_early - expected).abs() < 3.0 * se_e);
        assert!((v_late - expected).abs() < 3.0 * se_l);
        assert!((v_early - v_late).abs() < 3.0 * (se_e * se_e + se_l * se_l).sqrt());
    }

    #[test]
    fn grid_rescaling_is_self_similar() {
        // Same step count on [0,1] and [0,2]: Var(B_T) scales by c^{2H}.
        let h = hurst(0.8);
        let root = RandomStream::from_seed(17);
        let m = 20_000;
        let s1 = CirculantFbmSampler::new(grid(1.0, 32), h).unwrap();
        let s2 = CirculantFbmSampler::new(grid(2.0, 32), h).unwrap();
        let (v1, se1) = sample_cov(|id| s1.sample(1, root.child(id)), m, 32, 32);
        let (v2, se2) = sample_cov(|id| s2.sample(1, root.child(1 << 33 | id)), m, 32, 32);
        let c = 2f64.powf(2.0 * h.value());
        assert!((v1 - 1.0).abs() < 3.0 * se1);
        assert!((v2 - c).abs() < 3.0 * se2, "v2 {v2} want {c}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = grid(1.0, 32);
        let h = hurst(0.7);
        let stream = RandomStream::from_seed(99).child(5);
        let a = sample_fbm_circulant(g, h, 3, stream).unwrap();
        let b = sample_fbm_circulant(g, h, 3, stream).unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(a.seed_tag(), b.seed_tag());
        let c = sample_fbm_cholesky(g, h, 3, stream).unwrap();
        let d = sample_fbm_cholesky(g, h, 3, stream).unwrap();
        assert_eq!(c.values(), d.values());
    }

    #[test]
    fn path_starts_at_zero_and_components_are_independent_streams() {
        let g = grid(1.0, 16);
        let p = sample_fbm_circulant(g, hurst(0.6), 2, RandomStream::from_seed(3)).unwrap();
        assert_eq!(p.at(0), &[0.0, 0.0]);
        let col0: Vec<f64> = (0..=16).map(|k| p.at(k)[0]).collect();
        let col1: Vec<f64> = (0..=16).map(|k| p.at(k)[1]).collect();
        assert_ne!(col0, col1);
    }

    #[test]
    fn cholesky_rejects_oversized_grids() {
        let g = grid(1.0, CHOLESKY_GRID_BOUND + 1);
        let err = CholeskyFbmSampler::new(g, hurst(0.7))
            .map(|_| ())
            .unwrap_err();
        match err {
            Error::GridTooLarge { n_steps, bound } => {
                assert_eq!(n_steps, CHOLESKY_GRID_BOUND + 1);
                assert_eq!(bound, CHOLESKY_GRID_BOUND);
            }
            other => panic!("expected GridTooLarge, got {other:?}"),
        }
    }

    #[test]
    fn circulant_spectrum_is_valid_across_regimes() {
        for h in [0.5, 0.55, 0.7, 0.9, 0.99] {
            for n in [2usize, 3, 8, 64, 256] {
                let s = CirculantFbmSampler::new(grid(1.0, n), hurst(h)).unwrap();
                assert!(!s.fell_back(), "unexpected fallback at H={h}, n={n}");
            }
        }
    }
}
