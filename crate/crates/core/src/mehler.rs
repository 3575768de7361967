//! Closed-form kernels of functions of `H`, the spectral cutoffs `S_N` and
//! `Π_N`, and exact product/covariance identities for Hermite functions.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hermite::{eval_hermite, lambda_sq, QuadratureGrid, SpectralState, C64};

fn check_unit_interval(name: &str, a: f64) -> Result<()> {
    if (0.0..1.0).contains(&a) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must lie in [0, 1), got {a}")))
    }
}

/// Closed form of `E(x, y, a) = Σ aⁿ h_n(x) h_n(y)` for `0 ≤ a < 1`.
pub fn mehler_kernel(x: f64, y: f64, a: f64) -> Result<f64> {
    check_unit_interval("a", a)?;
    let s = x + y;
    let d = x - y;
    let expo = -(1.0 - a) / (1.0 + a) * s * s / 4.0 - (1.0 + a) / (1.0 - a) * d * d / 4.0;
    Ok(expo.exp() / (PI * (1.0 - a * a)).sqrt())
}

/// The same closed form continued to complex `|α| ≤ 1`, `α ≠ ±1`.
pub fn mehler_kernel_complex(x: f64, y: f64, alpha: C64) -> C64 {
    let one = C64::new(1.0, 0.0);
    let s = x + y;
    let d = x - y;
    let expo = -(one - alpha) / (one + alpha) * (s * s / 4.0) - (one + alpha) / (one - alpha) * (d * d / 4.0);
    expo.exp() / (PI * (one - alpha * alpha)).sqrt()
}

/// Partial sum `Σ_{n < n_terms} aⁿ h_n(x) h_n(y)`.
pub fn mehler_series(x: f64, y: f64, a: f64, n_terms: usize) -> Result<f64> {
    check_unit_interval("a", a)?;
    if n_terms == 0 {
        return Ok(0.0);
    }
    let hx = eval_hermite(n_terms - 1, x);
    let hy = eval_hermite(n_terms - 1, y);
    Ok(series_from_tables(&hx, &hy, a))
}

/// Series evaluation against precomputed `h_n` tables (length = number of terms).
pub fn series_from_tables(hx: &[f64], hy: &[f64], a: f64) -> f64 {
    let mut power = 1.0;
    let mut acc = 0.0;
    for (u, v) in hx.iter().zip(hy) {
        acc += power * u * v;
        power *= a;
    }
    acc
}

/// `e^{−itH}` acting diagonally: `c_n ← e^{−i(2n+1)t} c_n`.
pub fn propagator_apply(state: &SpectralState, t: f64) -> SpectralState {
    let coeffs = state
        .coeffs()
        .iter()
        .enumerate()
        .map(|(n, c)| c * C64::from_polar(1.0, -lambda_sq(n) * t))
        .collect();
    SpectralState::from_vec_unchecked(coeffs)
}

/// Integral kernel of `e^{−itH}`, i.e. `e^{−it} E(x, y, e^{−2it})`.
///
/// Defined for `sin(2t) ≠ 0`.
pub fn propagator_kernel(x: f64, y: f64, t: f64) -> Result<C64> {
    if (2.0 * t).sin().abs() < 1e-12 {
        return Err(Error::Domain(format!("propagator kernel is singular at t = {t}")));
    }
    let alpha = C64::from_polar(1.0, -2.0 * t);
    Ok(C64::from_polar(1.0, -t) * mehler_kernel_complex(x, y, alpha))
}

fn bump(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Smooth even cutoff: 1 on `[−1/2, 1/2]`, 0 outside `(−1, 1)`.
///
/// `χ(x) = S(2(1 − |x|))` with the transition `S(t) = f(t) / (f(t) + f(1 − t))`,
/// `f(t) = e^{−1/t}` for `t > 0`.
pub fn chi_smooth(x: f64) -> f64 {
    let t = 2.0 * (1.0 - x.abs());
    let a = bump(t);
    let b = bump(1.0 - t);
    if a == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// Identifier written into experiment metadata.
pub const CHI_IDENTIFIER: &str = "chi(x)=S(2(1-|x|)), S(t)=f(t)/(f(t)+f(1-t)), f(t)=exp(-1/t)";

/// Multiplier of `S_N` on mode `n`: `χ((2n+1)/(2N+1))`.
#[inline]
pub fn cutoff_multiplier(n: usize, cutoff: usize) -> f64 {
    chi_smooth(lambda_sq(n) / lambda_sq(cutoff))
}

/// `S_N = χ(H/(2N+1))`.
pub fn apply_sn(state: &SpectralState, cutoff: usize) -> SpectralState {
    let coeffs = state
        .coeffs()
        .iter()
        .enumerate()
        .map(|(n, c)| c * cutoff_multiplier(n, cutoff))
        .collect();
    SpectralState::from_vec_unchecked(coeffs)
}

/// `Π_N`: zeroes every mode above `N`.
pub fn apply_pin(state: &SpectralState, cutoff: usize) -> SpectralState {
    let coeffs = state
        .coeffs()
        .iter()
        .enumerate()
        .map(|(n, c)| if n > cutoff { C64::new(0.0, 0.0) } else { *c })
        .collect();
    SpectralState::from_vec_unchecked(coeffs)
}

/// A spectral multiplier `φ(h² H)`.
pub struct MultiplierSpec {
    pub phi: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub h: f64,
}

impl MultiplierSpec {
    pub fn new(h: f64, phi: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { phi: Box::new(phi), h }
    }

    /// `φ(h² λ_n²)`.
    pub fn value(&self, n: usize) -> f64 {
        (self.phi)(self.h * self.h * lambda_sq(n))
    }
}

impl std::fmt::Debug for MultiplierSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MultiplierSpec")
            .field("h", &self.h)
            .finish_non_exhaustive()
    }
}

/// Kernel `K(x_i, y_j)` of a spectral multiplier sampled on grid nodes.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    n: usize,
    values: Vec<f64>,
    /// `max |φ|` over the last retained modes, used for the tail criterion.
    pub tail: f64,
}

/// Tail criterion for the truncated kernel sum.
pub const KERNEL_TAIL_TOL: f64 = 1e-14;

impl KernelMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// `(K f)(x_i) = Σ_j W_j K(x_i, x_j) f(x_j)`.
    pub fn apply(&self, grid: &QuadratureGrid, values: &[C64]) -> Result<Vec<C64>> {
        if values.len() != self.n || grid.n_nodes() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: values.len(),
            });
        }
        let weighted: Vec<C64> = values.iter().zip(grid.weights()).map(|(v, w)| v * w).collect();
        Ok((0..self.n)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(&weighted)
                    .fold(C64::new(0.0, 0.0), |acc, (k, v)| acc + v * k)
            })
            .collect())
    }
}

/// `K(x_i, y_j) = Σ_{n < n_modes} φ(h² λ_n²) h_n(x_i) h_n(y_j)`.
///
/// Logs a warning when the multiplier has not decayed below
/// [`KERNEL_TAIL_TOL`] over the last retained modes.
pub fn multiplier_kernel(spec: &MultiplierSpec, grid: &QuadratureGrid, n_modes: usize) -> Result<KernelMatrix> {
    if n_modes == 0 || n_modes > grid.n_modes_max() {
        return Err(Error::GridTooSmall {
            needed: n_modes,
            available: grid.n_modes_max(),
        });
    }
    let phi: Vec<f64> = (0..n_modes).map(|n| spec.value(n)).collect();
    let tail_start = n_modes.saturating_sub((n_modes / 16).max(1));
    let tail = phi[tail_start..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if tail >= KERNEL_TAIL_TOL {
        log::warn!("multiplier kernel truncated at {n_modes} modes with tail value {tail:.2e}");
    }
    let m = grid.n_nodes();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; m];
            for (n, p) in phi.iter().enumerate() {
                let b = grid.basis_row(n);
                let scale = p * b[i];
                if scale == 0.0 {
                    continue;
                }
                for (r, bj) in row.iter_mut().zip(b) {
                    *r += scale * bj;
                }
            }
            row
        })
        .collect();
    Ok(KernelMatrix {
        n: m,
        values: rows.concat(),
        tail,
    })
}

/// `sup |K(x,y)| · h · (1 + (|x| − |y|)²/h²)` over node pairs with `|x|, |y| ≤ window`.
pub fn kernel_bound_constant(kernel: &KernelMatrix, grid: &QuadratureGrid, h: f64, window: f64) -> f64 {
    let x = grid.nodes();
    let mut best = 0.0f64;
    for i in 0..kernel.size() {
        if x[i].abs() > window {
            continue;
        }
        for j in 0..kernel.size() {
            if x[j].abs() > window {
                continue;
            }
            let d = x[i].abs() - x[j].abs();
            best = best.max(kernel.get(i, j).abs() * h * (1.0 + d * d / (h * h)));
        }
    }
    best
}

/// Coefficients of `(1 − x)^{−1/2} = Σ c_p x^p`.
pub fn c_coeff(p: usize) -> f64 {
    c_coeff_table(p)[p]
}

/// `c_0 .. c_{p_max}` by the ratio recurrence `c_p = c_{p−1} (2p − 1) / (2p)`.
pub fn c_coeff_table(p_max: usize) -> Vec<f64> {
    let mut c = Vec::with_capacity(p_max + 1);
    c.push(1.0);
    for p in 1..=p_max {
        let prev = c[p - 1];
        c.push(prev * (2 * p - 1) as f64 / (2 * p) as f64);
    }
    c
}

/// `∫ h_n² h_m² dx = (2π)^{−1/2} Σ_{r ≤ min(n,m)} c_{n−r} c_{m−r} c_r`.
pub fn pair_product_l2(n: usize, m: usize) -> f64 {
    let c = c_coeff_table(n.max(m));
    pair_product_from_table(&c, n, m)
}

pub(crate) fn pair_product_from_table(c: &[f64], n: usize, m: usize) -> f64 {
    let s: f64 = (0..=n.min(m)).map(|r| c[n - r] * c[m - r] * c[r]).sum();
    s / (2.0 * PI).sqrt()
}

/// `I(a, b) = ∫ E(x,x,a) E(x,x,b) dx = (2π)^{−1/2} (1−a)^{−1/2} (1−b)^{−1/2} (1−ab)^{−1/2}`.
pub fn bilinear_i(a: f64, b: f64) -> Result<f64> {
    check_unit_interval("a", a)?;
    check_unit_interval("b", b)?;
    Ok(1.0 / ((2.0 * PI) * (1.0 - a) * (1.0 - b) * (1.0 - a * b)).sqrt())
}

/// Partial sum of the field covariance `Σ_{n < n_terms} (2/λ_n²) h_n(x) h_n(y)`.
pub fn covariance(x: f64, y: f64, n_terms: usize) -> f64 {
    if n_terms == 0 {
        return 0.0;
    }
    let hx = eval_hermite(n_terms - 1, x);
    let hy = eval_hermite(n_terms - 1, y);
    hx.iter()
        .zip(&hy)
        .enumerate()
        .map(|(n, (u, v))| 2.0 / lambda_sq(n) * u * v)
        .sum()
}

/// Full covariance `E[φ(x) conj φ(y)]` of the Gaussian field.
///
/// Uses `F(x,y,1) = ∫_0^1 2 E(x, y, β²) dβ`; the substitution `β = 1 − v²`
/// removes the `(1 − β)^{−1/2}` endpoint singularity and the smooth integrand
/// is integrated by composite Simpson on `v ∈ [0, 1]`.
pub fn covariance_limit(x: f64, y: f64) -> f64 {
    const PANELS: usize = 4000;
    let s2 = (x + y) * (x + y) / 4.0;
    let d2 = (x - y) * (x - y) / 4.0;
    let integrand = |v: f64| {
        let beta = 1.0 - v * v;
        let a = beta * beta;
        // 1 − β² = v²(2 − v²)
        let one_minus_a = v * v * (2.0 - v * v);
        let expo = if one_minus_a == 0.0 {
            if d2 == 0.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            -one_minus_a / (1.0 + a) * s2 - (1.0 + a) / one_minus_a * d2
        };
        4.0 / (PI * (1.0 + beta) * (1.0 + beta * beta)).sqrt() * expo.exp()
    };
    let h = 1.0 / PANELS as f64;
    let mut acc = integrand(0.0) + integrand(1.0);
    for i in 1..PANELS {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * integrand(i as f64 * h);
    }
    acc * h / 3.0
}

/// `sup |cov(x,y)| e^{(x−y)²/4}` over an `n_points × n_points` lattice on `[−extent, extent]²`.
pub fn decorrelation_constant(extent: f64, n_points: usize) -> f64 {
    let pts: Vec<f64> = (0..n_points)
        .map(|i| -extent + 2.0 * extent * i as f64 / (n_points - 1) as f64)
        .collect();
    pts.par_iter()
        .map(|&x| {
            pts.iter()
                .map(|&y| covariance_limit(x, y).abs() * ((x - y) * (x - y) / 4.0).exp())
                .fold(0.0f64, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn kernel_examples() {
        assert_abs_diff_eq!(mehler_kernel(0.0, 0.0, 0.0).unwrap(), 1.0 / PI.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(mehler_kernel(0.0, 0.0, 0.0).unwrap(), 0.564_189_58, epsilon = 1e-8);
        assert_abs_diff_eq!(mehler_kernel(0.0, 0.0, 0.5).unwrap(), 0.651_470_02, epsilon = 1e-8);
        let series = mehler_series(1.0, -1.0, 0.3, 400).unwrap();
        assert_abs_diff_eq!(mehler_kernel(1.0, -1.0, 0.3).unwrap(), series, epsilon = 1e-10);
        assert!(mehler_kernel(0.0, 0.0, 1.0).is_err());
        assert!(mehler_series(0.0, 0.0, -0.1, 3).is_err());
    }

    #[test]
    fn series_examples() {
        let x = 0.7;
        let y = -1.9;
        let h = |z: f64| eval_hermite(0, z)[0];
        assert_abs_diff_eq!(mehler_series(x, y, 0.0, 50).unwrap(), h(x) * h(y), epsilon = 1e-16);
        assert_abs_diff_eq!(
            mehler_series(0.0, 0.0, 0.9, 400).unwrap(),
            mehler_kernel(0.0, 0.0, 0.9).unwrap(),
            epsilon = 1e-8
        );
        assert_abs_diff_eq!(
            mehler_series(2.0, 2.0, 0.5, 200).unwrap(),
            mehler_kernel(2.0, 2.0, 0.5).unwrap(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn complex_kernel_agrees_on_real_axis() {
        for &(x, y, a) in &[(0.3, -1.2, 0.4), (2.0, 1.0, 0.8)] {
            let c = mehler_kernel_complex(x, y, C64::new(a, 0.0));
            assert_relative_eq!(c.re, mehler_kernel(x, y, a).unwrap(), max_relative = 1e-13);
            assert!(c.im.abs() < 1e-15);
        }
    }

    #[test]
    fn propagator_examples() {
        let s = SpectralState::new(vec![C64::new(0.3, -0.2), C64::new(1.0, 0.5)]).unwrap();
        assert_eq!(propagator_apply(&s, 0.0), s);
        let out = propagator_apply(&SpectralState::basis(3, 1), PI / 2.0);
        let expected = C64::from_polar(1.0, -3.0 * PI / 2.0);
        assert_abs_diff_eq!((out.coeffs()[1] - expected).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.coeffs()[1].norm(), 1.0, epsilon = 1e-15);
        assert!(propagator_kernel(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn chi_examples() {
        assert_eq!(chi_smooth(0.25), 1.0);
        assert_eq!(chi_smooth(-0.5), 1.0);
        assert_eq!(chi_smooth(1.2), 0.0);
        assert_eq!(chi_smooth(1.0), 0.0);
        assert_abs_diff_eq!(chi_smooth(0.75), 0.5, epsilon = 1e-15);
        let mut prev = 1.0;
        for i in 0..=200 {
            let x = i as f64 / 200.0;
            let v = chi_smooth(x);
            assert!(v <= prev && (0.0..=1.0).contains(&v));
            assert_eq!(v, chi_smooth(-x));
            prev = v;
        }
    }

    #[test]
    fn cutoff_plateau_and_support() {
        let n_cut = 10;
        let s = SpectralState::new((0..30).map(|n| C64::new(1.0 + n as f64, -0.5)).collect()).unwrap();
        let out = apply_sn(&s, n_cut);
        for n in 0..30 {
            let r = lambda_sq(n) / lambda_sq(n_cut);
            if r <= 0.5 {
                assert_eq!(out.coeffs()[n], s.coeffs()[n]);
            }
            if r >= 1.0 {
                assert_eq!(out.coeffs()[n], C64::new(0.0, 0.0));
            }
        }
        let pin = apply_pin(&SpectralState::basis(12, n_cut + 1), n_cut);
        assert_eq!(pin.norm_sq(), 0.0);
    }

    #[test]
    fn c_coeff_values() {
        assert_eq!(c_coeff(0), 1.0);
        assert_eq!(c_coeff(1), 0.5);
        assert_eq!(c_coeff(2), 0.375);
        // factorial form (2p−1)! / (2^{2p−1} p! (p−1)!) at p = 5: 9!/(2^9·5!·4!) = 63/256
        assert_abs_diff_eq!(c_coeff(5), 63.0 / 256.0, epsilon = 1e-16);
        assert!(c_coeff(2000).is_finite() && c_coeff(2000) > 0.0);
    }

    #[test]
    fn pair_product_spot_values() {
        let s = 1.0 / (2.0 * PI).sqrt();
        assert_abs_diff_eq!(pair_product_l2(0, 0), s, epsilon = 1e-15);
        assert_abs_diff_eq!(pair_product_l2(0, 0), 0.398_942_28, epsilon = 1e-8);
        assert_abs_diff_eq!(pair_product_l2(1, 0), 0.5 * s, epsilon = 1e-15);
        assert_abs_diff_eq!(pair_product_l2(1, 0), 0.199_471_14, epsilon = 1e-8);
        assert_eq!(pair_product_l2(3, 7), pair_product_l2(7, 3));
    }

    #[test]
    fn bilinear_i_examples() {
        assert_abs_diff_eq!(bilinear_i(0.0, 0.0).unwrap(), 1.0 / (2.0 * PI).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(bilinear_i(0.5, 0.0).unwrap(), 0.564_189_58, epsilon = 1e-8);
        assert_relative_eq!(
            bilinear_i(0.2, 0.7).unwrap(),
            bilinear_i(0.7, 0.2).unwrap(),
            max_relative = 1e-15
        );
        assert!(bilinear_i(1.0, 0.0).is_err());
    }

    #[test]
    fn covariance_limit_matches_long_partial_sum_off_diagonal() {
        // off the diagonal the terms oscillate and the partial sums settle fast
        let full = covariance_limit(0.5, 2.0);
        let partial = covariance(0.5, 2.0, 4000);
        assert_abs_diff_eq!(full, partial, epsilon = 2e-4);
        assert!(covariance(0.3, 0.3, 50) > 0.0);
    }
}
