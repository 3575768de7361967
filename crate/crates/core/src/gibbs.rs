//! Gaussian free field samples, Gibbs weights and the norm observables.
//!
//! A sample of the free measure restricted to `E_N = span(h_0..h_N)` is
//! `φ_N = Σ_{n ≤ N} (√2/λ_n) g_n h_n` with independent standard complex
//! Gaussians `g_n`. Gibbs expectations are estimated by importance sampling:
//! samples are drawn from the free measure and carry the log of the density
//! `G_N` as a weight.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{lambda, lambda_sq, QuadratureGrid, SpectralState, C64};
use crate::mehler::apply_sn;
use crate::rng::ComplexGaussianStream;
use crate::stats;

/// `α_N = Σ_{n ≤ N} 2/(2n + 1)`, the mean of `‖φ_N‖²_{L²}`.
pub fn alpha_n(cutoff: usize) -> f64 {
    (0..=cutoff).map(|n| 2.0 / lambda_sq(n)).sum()
}

/// `Var F_N = Σ_{n ≤ N} 4/(2n + 1)²` under the free measure.
pub fn renormalized_mass_variance(cutoff: usize) -> f64 {
    (0..=cutoff).map(|n| 4.0 / (lambda_sq(n) * lambda_sq(n))).sum()
}

/// `F_N(u) = ‖Π_N u‖²_{L²} − α_N`.
pub fn renormalized_mass(state: &SpectralState, cutoff: usize) -> f64 {
    let mass: f64 = state.coeffs().iter().take(cutoff + 1).map(|c| c.norm_sqr()).sum();
    mass - alpha_n(cutoff)
}

/// One draw of `φ_N`; `n_modes = N + 1`, `E|c_n|² = 2/(2n+1)`.
pub fn sample_gaussian_field(cutoff: usize, stream: &mut ComplexGaussianStream) -> SpectralState {
    let coeffs = (0..=cutoff)
        .map(|n| stream.next_gaussian() * (std::f64::consts::SQRT_2 / lambda(n)))
        .collect();
    SpectralState::from_vec_unchecked(coeffs)
}

/// Trapezoidal cutoff: 1 on `|x| ≤ R`, 0 on `|x| ≥ 2R`, linear in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaCutoff {
    pub r: f64,
}

impl ZetaCutoff {
    pub fn new(r: f64) -> Result<Self> {
        if r > 0.0 && r.is_finite() {
            Ok(Self { r })
        } else {
            Err(Error::Domain(format!("zeta plateau radius must be positive, got {r}")))
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let a = x.abs();
        if a <= self.r {
            1.0
        } else if a >= 2.0 * self.r {
            0.0
        } else {
            2.0 - a / self.r
        }
    }
}

/// `‖S_N u‖^p_{L^p}` on the grid.
pub fn sn_lp_pow(state: &SpectralState, cutoff: usize, p: f64, grid: &QuadratureGrid) -> Result<f64> {
    let values = grid.synthesize(&apply_sn(state, cutoff))?;
    Ok(grid.lp_norm_pow(&values, p))
}

fn check_odd_order(k: u32) -> Result<()> {
    if k >= 3 && k % 2 == 1 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "nonlinearity order must be odd and at least 3, got {k}"
        )))
    }
}

/// `ln G_N = −‖S_N u‖^{k+1}_{L^{k+1}} / (k + 1)` (defocusing).
pub fn log_weight_defocusing(state: &SpectralState, cutoff: usize, k: u32, grid: &QuadratureGrid) -> Result<f64> {
    check_odd_order(k)?;
    let p = f64::from(k + 1);
    Ok(-sn_lp_pow(state, cutoff, p, grid)? / p)
}

/// `ln G_N = ln ζ(F_N(u)) + ‖S_N u‖⁴_{L⁴}/4` (focusing cubic); `−∞` when `ζ(F_N) = 0`.
pub fn log_weight_focusing(
    state: &SpectralState,
    cutoff: usize,
    zeta: ZetaCutoff,
    grid: &QuadratureGrid,
) -> Result<f64> {
    let z = zeta.eval(renormalized_mass(state, cutoff));
    if z == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(z.ln() + sn_lp_pow(state, cutoff, 4.0, grid)? / 4.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Defocusing,
    Focusing,
}

/// Default lower bound on the effective sample size of an ensemble.
pub const DEFAULT_ESS_FLOOR: f64 = 50.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub cutoff: usize,
    pub samples: usize,
    pub variant: Variant,
    pub k: u32,
    pub zeta_r: f64,
    pub seed: u64,
    pub ess_floor: f64,
    /// Stream index of the first sample; sample `i` uses `first_stream + i`.
    pub first_stream: u64,
}

impl EnsembleConfig {
    pub fn new(cutoff: usize, samples: usize, variant: Variant, k: u32, seed: u64) -> Self {
        Self {
            cutoff,
            samples,
            variant,
            k,
            zeta_r: 3.0,
            seed,
            ess_floor: DEFAULT_ESS_FLOOR,
            first_stream: 0,
        }
    }
}

/// Free-measure samples with their Gibbs log-weights.
#[derive(Debug, Clone)]
pub struct GibbsEnsemble {
    pub samples: Vec<SpectralState>,
    pub log_weights: Vec<f64>,
    pub stream_indices: Vec<u64>,
    pub cutoff: usize,
    pub variant: Variant,
    pub k: u32,
    pub zeta_r: f64,
}

impl GibbsEnsemble {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ess(&self) -> f64 {
        stats::effective_sample_size(&self.log_weights)
    }

    /// Fraction of samples with `ζ(F_N) = 0`.
    pub fn killed_fraction(&self) -> f64 {
        self.log_weights.iter().filter(|w| **w == f64::NEG_INFINITY).count() as f64 / self.len() as f64
    }

    /// Linear weights after the max-shift.
    pub fn weights(&self) -> Vec<f64> {
        stats::shifted_weights(&self.log_weights)
    }

    /// `E_{μ̃_N}[G_N]`, the total mass of the unnormalized Gibbs measure.
    pub fn mean_weight(&self) -> f64 {
        (stats::log_sum_exp(&self.log_weights) - (self.len() as f64).ln()).exp()
    }

    pub fn weighted_mean(&self, observable: impl Fn(&SpectralState) -> f64) -> f64 {
        let values: Vec<f64> = self.samples.iter().map(observable).collect();
        stats::weighted_mean(&values, &self.weights())
    }

    /// One JSON object per line: `{"stream_index", "coeffs": [re0, im0, re1, ...], "log_weight"}`,
    /// with `log_weight = null` for `−∞`.
    pub fn write_jsonl(&self, out: &mut impl std::io::Write) -> Result<()> {
        for i in 0..self.len() {
            let rec = EnsembleRecord {
                stream_index: self.stream_indices[i],
                coeffs: self.samples[i].coeffs().iter().flat_map(|c| [c.re, c.im]).collect(),
                log_weight: Some(self.log_weights[i]).filter(|w| w.is_finite()),
            };
            serde_json::to_writer(&mut *out, &rec)?;
            writeln!(out)?;
        }
        Ok(())
    }
}

/// One line of the ensemble JSON-lines format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub stream_index: u64,
    pub coeffs: Vec<f64>,
    pub log_weight: Option<f64>,
}

impl EnsembleRecord {
    pub fn state(&self) -> Result<SpectralState> {
        if !self.coeffs.len().is_multiple_of(2) {
            return Err(Error::Domain("interleaved coefficient array has odd length".into()));
        }
        SpectralState::new(self.coeffs.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect())
    }

    pub fn log_weight(&self) -> f64 {
        self.log_weight.unwrap_or(f64::NEG_INFINITY)
    }
}

/// Parses the output of [`GibbsEnsemble::write_jsonl`].
pub fn read_jsonl(input: impl std::io::BufRead) -> Result<Vec<EnsembleRecord>> {
    input
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

/// Draws `cfg.samples` free-measure samples and their Gibbs log-weights.
///
/// Fails when the effective sample size drops below `cfg.ess_floor`.
pub fn sample_ensemble(cfg: &EnsembleConfig, grid: &QuadratureGrid) -> Result<GibbsEnsemble> {
    if cfg.samples == 0 {
        return Err(Error::Domain("an ensemble needs at least one sample".into()));
    }
    if grid.n_modes_max() < cfg.cutoff + 1 {
        return Err(Error::GridTooSmall {
            needed: cfg.cutoff + 1,
            available: grid.n_modes_max(),
        });
    }
    let zeta = ZetaCutoff::new(cfg.zeta_r)?;
    if cfg.variant == Variant::Focusing && cfg.k != 3 {
        return Err(Error::Domain(format!(
            "focusing weights are defined for k = 3 only, got k = {}",
            cfg.k
        )));
    }
    let drawn: Vec<(u64, SpectralState, f64)> = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|i| {
            let idx = cfg.first_stream + i;
            let mut stream = ComplexGaussianStream::new(cfg.seed, idx);
            let state = sample_gaussian_field(cfg.cutoff, &mut stream);
            let lw = match cfg.variant {
                Variant::Defocusing => log_weight_defocusing(&state, cfg.cutoff, cfg.k, grid)?,
                Variant::Focusing => log_weight_focusing(&state, cfg.cutoff, zeta, grid)?,
            };
            Ok((idx, state, lw))
        })
        .collect::<Result<_>>()?;
    let mut ensemble = GibbsEnsemble {
        samples: Vec::with_capacity(cfg.samples),
        log_weights: Vec::with_capacity(cfg.samples),
        stream_indices: Vec::with_capacity(cfg.samples),
        cutoff: cfg.cutoff,
        variant: cfg.variant,
        k: cfg.k,
        zeta_r: cfg.zeta_r,
    };
    for (idx, state, lw) in drawn {
        ensemble.stream_indices.push(idx);
        ensemble.samples.push(state);
        ensemble.log_weights.push(lw);
    }
    let ess = ensemble.ess();
    if ess < cfg.ess_floor {
        return Err(Error::EssFloor {
            ess,
            floor: cfg.ess_floor,
        });
    }
    Ok(ensemble)
}

/// `‖u‖_{H^s} = (Σ λ_n^{2s} |c_n|²)^{1/2}`.
pub fn hs_norm(state: &SpectralState, s: f64) -> f64 {
    state
        .coeffs()
        .iter()
        .enumerate()
        .map(|(n, c)| lambda_sq(n).powf(s) * c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// `H^{s/2} u`, i.e. `c_n ← λ_n^s c_n`.
pub fn apply_h_power(state: &SpectralState, s: f64) -> SpectralState {
    let coeffs = state
        .coeffs()
        .iter()
        .enumerate()
        .map(|(n, c)| c * lambda(n).powf(s))
        .collect();
    SpectralState::from_vec_unchecked(coeffs)
}

/// `‖H^{s/2} u‖_{L^p}` on the grid.
pub fn wsp_norm(state: &SpectralState, s: f64, p: f64, grid: &QuadratureGrid) -> Result<f64> {
    let values = grid.synthesize(&apply_h_power(state, s))?;
    grid.lp_norm(&values, p)
}

/// `‖⟨x⟩^{−σ} H^{s/2} u‖_{L²}` on the grid.
pub fn weighted_smoothing_norm(state: &SpectralState, s: f64, sigma: f64, grid: &QuadratureGrid) -> Result<f64> {
    if !(0.0 < s && s < sigma && sigma < 0.5) {
        log::warn!("weighted smoothing norm evaluated outside 0 < s < sigma < 1/2 (s = {s}, sigma = {sigma})");
    }
    let values = grid.synthesize(&apply_h_power(state, s))?;
    let weighted: Vec<C64> = values
        .iter()
        .zip(grid.nodes())
        .map(|(v, x)| v * (1.0 + x * x).powf(-0.5 * sigma))
        .collect();
    grid.lp_norm(&weighted, 2.0)
}

/// One moment order of the Khinchin check.
#[derive(Debug, Clone, Serialize)]
pub struct KhinchinRow {
    pub j: u32,
    /// `j! · v^j`.
    pub exact: f64,
    pub estimate: f64,
    pub se: f64,
}

impl KhinchinRow {
    pub fn within(&self, n_se: f64) -> bool {
        (self.estimate - self.exact).abs() <= n_se * self.se
    }
}

/// Monte Carlo moments `E|Z|^{2j}` of `Z = Σ g_n c_n`, `|c_n|² = variances[n]`,
/// against the exact complex-Gaussian value `j! v^j`, `v = Σ variances`.
pub fn khinchin_moment_check(variances: &[f64], j_values: &[u32], samples: usize, seed: u64) -> Vec<KhinchinRow> {
    let v: f64 = variances.iter().sum();
    let amps: Vec<f64> = variances.iter().map(|x| x.sqrt()).collect();
    let abs_sq: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut stream = ComplexGaussianStream::new(seed, i);
            amps.iter()
                .fold(C64::new(0.0, 0.0), |acc, a| acc + stream.next_gaussian() * *a)
                .norm_sqr()
        })
        .collect();
    j_values
        .iter()
        .map(|&j| {
            let moments: Vec<f64> = abs_sq.iter().map(|z| z.powi(j as i32)).collect();
            let (estimate, se) = stats::mean_with_se(&moments, stats::DEFAULT_BOOTSTRAP, seed ^ u64::from(j));
            let factorial: f64 = (1..=j).map(f64::from).product();
            KhinchinRow {
                j,
                exact: factorial * v.powi(j as i32),
                estimate,
                se,
            }
        })
        .collect()
}

/// Empirical survival function and the fitted slope of `ln P(X > λ)` against `λ²`.
#[derive(Debug, Clone, Serialize)]
pub struct TailFit {
    /// `(λ², ln tail)` pairs inside the fit window.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
}

/// Fit window on the tail probability, relative to the sample count `M`: `[10/M, 0.1]`.
pub fn tail_window(samples: usize) -> (f64, f64) {
    (10.0 / samples as f64, 0.1)
}

pub fn tail_estimator(samples: &[f64], lambda_grid: &[f64]) -> Result<TailFit> {
    if samples.len() < 1000 {
        return Err(Error::InsufficientData(format!(
            "tail estimation needs at least 1000 samples, got {}",
            samples.len()
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let (lo, hi) = tail_window(sorted.len());
    let points: Vec<(f64, f64)> = lambda_grid
        .iter()
        .filter_map(|&l| {
            let above = sorted.len() - sorted.partition_point(|x| *x <= l);
            let tail = above as f64 / m;
            (tail >= lo && tail <= hi).then(|| (l * l, tail.ln()))
        })
        .collect();
    let distinct = points.windows(2).filter(|w| w[0].0 != w[1].0).count();
    if points.len() < 2 || distinct == 0 {
        return Err(Error::InsufficientData(
            "fewer than two lambda values fall inside the tail window".into(),
        ));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (slope, _) = stats::linear_fit(&xs, &ys);
    Ok(TailFit { points, slope })
}

/// Evenly spaced `λ` values between the empirical `q_lo` and `q_hi` quantiles.
pub fn quantile_lambda_grid(samples: &[f64], q_lo: f64, q_hi: f64, points: usize) -> Vec<f64> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let at = |q: f64| sorted[((q * (sorted.len() - 1) as f64).round() as usize).min(sorted.len() - 1)];
    let (a, b) = (at(q_lo), at(q_hi));
    (0..points)
        .map(|i| a + (b - a) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Analysis modes needed to resolve `h_n h_m` for `n < 2N`, `m < 2M`.
///
/// The product has energy up to about `(√n + √m)² ≤ 2(n + m)`; the extra
/// margin covers the Gaussian tail of the expansion.
pub fn bilinear_required_modes(n_block: usize, m_block: usize) -> usize {
    2 * (2 * n_block + 2 * m_block) + 48
}

/// `‖H^{θ/2}(h_n h_m)‖²_{L²}` by analyzing the grid product into Hermite coefficients.
pub fn product_hs_norm_sq(n: usize, m: usize, theta: f64, grid: &QuadratureGrid) -> Result<f64> {
    let needed = 2 * (n + m) + 48;
    if grid.n_modes_max() < needed {
        return Err(Error::GridTooSmall {
            needed,
            available: grid.n_modes_max(),
        });
    }
    let hn = grid.basis_row(n);
    let hm = grid.basis_row(m);
    let w = grid.weights();
    let prod: Vec<f64> = hn.iter().zip(hm).zip(w).map(|((a, b), w)| a * b * w).collect();
    let (lo, hi) = active_range(&prod, 1e-20);
    let parity = (n + m) % 2;
    let mut acc = 0.0;
    for l in (parity..grid.n_modes_max()).step_by(2) {
        let hl = &grid.basis_row(l)[lo..hi];
        let d: f64 = prod[lo..hi].iter().zip(hl).map(|(p, h)| p * h).sum();
        acc += lambda_sq(l).powf(theta) * d * d;
    }
    Ok(acc)
}

/// Index range outside of which `|v| < rel · max |v|`.
fn active_range(v: &[f64], rel: f64) -> (usize, usize) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let cut = rel * max;
    let lo = v.iter().position(|x| x.abs() >= cut).unwrap_or(0);
    let hi = v.iter().rposition(|x| x.abs() >= cut).map_or(v.len(), |i| i + 1);
    (lo, hi)
}

fn check_blocks(n_block: usize, m_block: usize, theta: f64, grid: &QuadratureGrid) -> Result<()> {
    if n_block == 0 || m_block == 0 {
        return Err(Error::Domain("dyadic blocks must start at 1 or above".into()));
    }
    if !(0.0..0.5).contains(&theta) {
        log::warn!("bilinear smoothing exponent {theta} outside [0, 1/2)");
    }
    let needed = bilinear_required_modes(n_block, m_block);
    if grid.n_modes_max() < needed {
        return Err(Error::GridTooSmall {
            needed,
            available: grid.n_modes_max(),
        });
    }
    Ok(())
}

/// `σ² = Σ_{n ∈ [N,2N), m ∈ [M,2M)} |a_n|² |a_m|² ‖H^{θ/2}(h_n h_m)‖²`, `|a_n|² = 2/(2n+1)`.
///
/// For disjoint blocks this is exactly `E‖H^{θ/2}(u_N u_M)‖²_{L²}`.
pub fn bilinear_sigma(n_block: usize, m_block: usize, theta: f64, grid: &QuadratureGrid) -> Result<f64> {
    check_blocks(n_block, m_block, theta, grid)?;
    let pairs: Vec<(usize, usize)> = (n_block..2 * n_block)
        .flat_map(|n| (m_block..2 * m_block).map(move |m| (n, m)))
        .collect();
    let terms: Vec<f64> = pairs
        .par_iter()
        .map(|&(n, m)| {
            let a2 = 2.0 / lambda_sq(n) * 2.0 / lambda_sq(m);
            Ok(a2 * product_hs_norm_sq(n, m, theta, grid)?)
        })
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum())
}

/// Brute-force Monte Carlo estimate of `E‖H^{θ/2}(u_N u_M)‖²_{L²}` with its standard error.
pub fn bilinear_monte_carlo(
    n_block: usize,
    m_block: usize,
    theta: f64,
    grid: &QuadratureGrid,
    draws: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_blocks(n_block, m_block, theta, grid)?;
    let block_field = |range: std::ops::Range<usize>, stream: &mut ComplexGaussianStream| {
        let mut coeffs = vec![C64::new(0.0, 0.0); range.end];
        for n in range {
            coeffs[n] = stream.next_gaussian() * (2.0 / lambda_sq(n)).sqrt();
        }
        SpectralState::from_vec_unchecked(coeffs)
    };
    let values: Vec<f64> = (0..draws as u64)
        .into_par_iter()
        .map(|i| {
            let mut stream = ComplexGaussianStream::new(seed, i);
            let un = grid.synthesize(&block_field(n_block..2 * n_block, &mut stream))?;
            let um = grid.synthesize(&block_field(m_block..2 * m_block, &mut stream))?;
            let prod: Vec<C64> = un.iter().zip(&um).map(|(a, b)| a * b).collect();
            let d = grid.analyze(&prod, grid.n_modes_max())?;
            Ok(d.coeffs()
                .iter()
                .enumerate()
                .map(|(l, c)| lambda_sq(l).powf(theta) * c.norm_sqr())
                .sum())
        })
        .collect::<Result<_>>()?;
    Ok(stats::mean_with_se(&values, stats::DEFAULT_BOOTSTRAP, seed))
}
