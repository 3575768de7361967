//! Hermite functions, Gauss–Hermite quadrature and the coefficient/grid transforms.
//!
//! The `n`-th Hermite function `h_n` is the normalized eigenfunction of
//! `H = -d²/dx² + x²` with eigenvalue `2n + 1`. Values are produced by the
//! three-term recurrence of the normalized functions; the Gaussian factor is
//! carried as a separate log-scale so that nodes far out in the tail (|x| ≈ 100
//! for grids with several thousand nodes) still yield finite values.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// π^{-1/4}
pub const PI_POW_M14: f64 = 0.751_125_544_464_942_5;

/// Default oversampling factor (nodes per retained mode).
pub const DEFAULT_OVERSAMPLE: usize = 8;

/// Default bound on the discrete orthonormality residual.
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-10;

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_TOL: f64 = 1e-14;

// Mantissas are rescaled by an exact power of two to stay in range.
const RESCALE_EXP: i32 = 500;
const RESCALE_LIMIT: f64 = 3.273_390_607_896_142e150; // 2^500

/// `λ_n = sqrt(2n + 1)`.
#[inline]
pub fn lambda(n: usize) -> f64 {
    ((2 * n + 1) as f64).sqrt()
}

/// `λ_n² = 2n + 1`, the eigenvalue of `H` on `h_n`.
#[inline]
pub fn lambda_sq(n: usize) -> f64 {
    (2 * n + 1) as f64
}

/// Complex Hermite coefficients `c_0 .. c_{n-1}` of `u = Σ c_n h_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    coeffs: Vec<C64>,
}

impl SpectralState {
    pub fn new(coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Domain("a spectral state needs at least one mode".into()));
        }
        if let Some(i) = coeffs.iter().position(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::Domain(format!("coefficient {i} is not finite")));
        }
        Ok(Self { coeffs })
    }

    /// Internal constructor for coefficient vectors produced by our own arithmetic.
    pub(crate) fn from_vec_unchecked(coeffs: Vec<C64>) -> Self {
        debug_assert!(!coeffs.is_empty());
        Self { coeffs }
    }

    pub fn zeros(n_modes: usize) -> Self {
        assert!(n_modes >= 1, "n_modes must be at least 1");
        Self {
            coeffs: vec![C64::new(0.0, 0.0); n_modes],
        }
    }

    /// The state `h_index` embedded in `n_modes` modes.
    pub fn basis(n_modes: usize, index: usize) -> Self {
        assert!(index < n_modes, "basis index {index} out of range for {n_modes} modes");
        let mut s = Self::zeros(n_modes);
        s.coeffs[index] = C64::new(1.0, 0.0);
        s
    }

    pub fn n_modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<C64> {
        self.coeffs
    }

    /// `Σ |c_n|²`, which equals `‖u‖²_{L²}` by Parseval.
    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Pads with zeros or truncates to `n_modes`.
    pub fn resized(&self, n_modes: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(n_modes, C64::new(0.0, 0.0));
        Self::from_vec_unchecked(coeffs)
    }

    /// `‖self - other‖_{L²}` with the shorter state zero-padded.
    pub fn l2_distance(&self, other: &Self) -> f64 {
        let n = self.n_modes().max(other.n_modes());
        let zero = C64::new(0.0, 0.0);
        (0..n)
            .map(|i| {
                let a = self.coeffs.get(i).copied().unwrap_or(zero);
                let b = other.coeffs.get(i).copied().unwrap_or(zero);
                (a - b).norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_vec_unchecked(self.coeffs.iter().map(|c| c * factor).collect())
    }
}

/// Runs the normalized recurrence without the Gaussian factor. For each `n`
/// the visitor receives `(n, mantissa, log_scale)` where the polynomial part
/// equals `mantissa · exp(log_scale)`.
/// Returns the final `(mantissa_n_max, mantissa_{n_max−1}, log_scale)`.
fn scaled_recurrence(n_max: usize, x: f64, mut visit: impl FnMut(usize, f64, f64)) -> (f64, f64, f64) {
    let mut log_scale = 0.0;
    let mut prev = 0.0;
    let mut cur = PI_POW_M14;
    visit(0, cur, log_scale);
    for n in 0..n_max {
        let nf = n as f64;
        let next = x * (2.0 / (nf + 1.0)).sqrt() * cur - (nf / (nf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE_LIMIT {
            cur = ldexp(cur, -RESCALE_EXP);
            prev = ldexp(prev, -RESCALE_EXP);
            log_scale += RESCALE_EXP as f64 * std::f64::consts::LN_2;
        }
        visit(n + 1, cur, log_scale);
    }
    (cur, prev, log_scale)
}

#[inline]
fn ldexp(x: f64, e: i32) -> f64 {
    x * 2f64.powi(e)
}

/// `mantissa · exp(exponent)` without spurious underflow of either factor.
#[inline]
fn scaled_value(mantissa: f64, exponent: f64) -> f64 {
    if mantissa == 0.0 {
        0.0
    } else if exponent > -700.0 {
        mantissa * exponent.exp()
    } else {
        mantissa.signum() * (exponent + mantissa.abs().ln()).exp()
    }
}

/// `h_0(x) .. h_{n_max}(x)` via the stable normalized recurrence
/// `h_{n+1} = x·sqrt(2/(n+1))·h_n − sqrt(n/(n+1))·h_{n−1}`.
pub fn eval_hermite(n_max: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    let gauss = -0.5 * x * x;
    scaled_recurrence(n_max, x, |n, m, ls| out[n] = scaled_value(m, ls + gauss));
    out
}

/// `h_n(x)` alone.
pub fn eval_hermite_single(n: usize, x: f64) -> f64 {
    let (m, _, ls) = scaled_recurrence(n, x, |_, _, _| {});
    scaled_value(m, ls - 0.5 * x * x)
}

/// `‖h_n‖_{L^p}` by the trapezoidal rule on `|x| ≤ √(2n+1) + 12`, with
/// 16 points per local half-wavelength `π/√(2n+1)`.
///
/// `h_n` is entire and decays like a Gaussian past the turning point, so the
/// rule converges geometrically; it needs no quadrature grid of size `n`.
pub fn hermite_lp_norm(n: usize, p: f64) -> f64 {
    let turning = lambda(n);
    let extent = turning + 12.0;
    let step = std::f64::consts::PI / turning / 16.0;
    let half = (extent / step).ceil() as usize;
    let terms: Vec<f64> = (1..=half)
        .into_par_iter()
        .map(|i| eval_hermite_single(n, i as f64 * step).abs().powf(p))
        .collect();
    let tail: f64 = terms.iter().sum();
    let total = eval_hermite_single(n, 0.0).abs().powf(p) + 2.0 * tail;
    (total * step).powf(1.0 / p)
}

/// `h'_0(x) .. h'_{n_max}(x)` from `h'_n = sqrt(n/2)·h_{n−1} − sqrt((n+1)/2)·h_{n+1}`.
pub fn eval_hermite_deriv(n_max: usize, x: f64) -> Vec<f64> {
    let h = eval_hermite(n_max + 1, x);
    (0..=n_max)
        .map(|n| {
            let down = if n > 0 { (n as f64 / 2.0).sqrt() * h[n - 1] } else { 0.0 };
            down - ((n as f64 + 1.0) / 2.0).sqrt() * h[n + 1]
        })
        .collect()
}

/// Solves `θ − sin θ = r` on `[0, π]` by bisection.
fn solve_kepler_like(r: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, std::f64::consts::PI);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mid - mid.sin() < r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Gauss–Hermite rule with `order` nodes: returns the nodes in increasing order
/// and the modified weights `W_j = w_j·exp(x_j²)`.
///
/// Roots of `h_order` are located by Newton iteration from WKB (Tricomi-type)
/// starting points; the modified weight is `1 / (order · h_{order−1}(x_j)²)`,
/// evaluated in log form when the Gaussian factor leaves the f64 range.
pub fn gauss_hermite_rule(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order == 0 {
        return Err(Error::Domain("quadrature order must be at least 1".into()));
    }
    let nu = (2 * order + 1) as f64;
    let half = order / 2;
    let mut positive = Vec::with_capacity(half);
    let mut positive_w = Vec::with_capacity(half);

    let eval_pair = |x: f64| scaled_recurrence(order, x, |_, _, _| {});

    for j in 1..=half {
        let theta = solve_kepler_like((4.0 * j as f64 - 1.0) * std::f64::consts::PI / nu);
        let mut x = nu.sqrt() * (0.5 * theta).cos();
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITER {
            let (p, pm1, _) = eval_pair(x);
            let dx = p / ((2.0 * order as f64).sqrt() * pm1);
            x -= dx;
            if dx.abs() <= NEWTON_TOL * x.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged || !x.is_finite() || x <= 0.0 {
            return Err(Error::NodeSolver { index: j, order });
        }
        if let Some(&prev) = positive.last() {
            if x >= prev {
                return Err(Error::NodeSolver { index: j, order });
            }
        }
        let (_, pm1, ls) = eval_pair(x);
        positive.push(x);
        positive_w.push(modified_weight(order, x, pm1, ls));
    }

    let mut nodes = Vec::with_capacity(order);
    let mut weights = Vec::with_capacity(order);
    for (x, w) in positive.iter().zip(&positive_w) {
        nodes.push(-x);
        weights.push(*w);
    }
    if order % 2 == 1 {
        let (_, pm1, ls) = eval_pair(0.0);
        nodes.push(0.0);
        weights.push(modified_weight(order, 0.0, pm1, ls));
    }
    for (x, w) in positive.iter().zip(&positive_w).rev() {
        nodes.push(*x);
        weights.push(*w);
    }
    Ok((nodes, weights))
}

/// `1 / (order · h_{order−1}(x)²)` where `h_{order−1}(x) = pm1·exp(ls − x²/2)`.
fn modified_weight(order: usize, x: f64, pm1: f64, ls: f64) -> f64 {
    let e = 0.5 * x * x - ls;
    if e.abs() < 700.0 {
        let r = e.exp() / pm1.abs();
        r * r / order as f64
    } else {
        (2.0 * (e - pm1.abs().ln()) - (order as f64).ln()).exp()
    }
}

/// Gauss–Hermite nodes, modified weights and the basis table `h_n(x_j)`.
///
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    n_modes_max: usize,
    // row-major: basis[n * n_nodes + j] = h_n(x_j)
    basis: Vec<f64>,
    residual: f64,
}

impl QuadratureGrid {
    /// `oversample · n_modes_max` nodes, checked against the default residual tolerance.
    pub fn build(n_modes_max: usize, oversample: usize) -> Result<Self> {
        if oversample < 2 {
            return Err(Error::Domain(format!(
                "oversample must be at least 2, got {oversample}"
            )));
        }
        if n_modes_max == 0 {
            return Err(Error::Domain("n_modes_max must be at least 1".into()));
        }
        Self::with_nodes(n_modes_max, oversample * n_modes_max, DEFAULT_RESIDUAL_TOL)
    }

    /// Grid with an explicit node count.
    pub fn with_nodes(n_modes_max: usize, n_nodes: usize, tolerance: f64) -> Result<Self> {
        if n_modes_max == 0 {
            return Err(Error::Domain("n_modes_max must be at least 1".into()));
        }
        let (nodes, weights) = gauss_hermite_rule(n_nodes)?;
        let mut basis = vec![0.0; n_modes_max * n_nodes];
        let columns: Vec<Vec<f64>> = nodes.par_iter().map(|&x| eval_hermite(n_modes_max - 1, x)).collect();
        for (j, col) in columns.iter().enumerate() {
            for (n, v) in col.iter().enumerate() {
                basis[n * n_nodes + j] = *v;
            }
        }
        let mut grid = Self {
            nodes,
            weights,
            n_modes_max,
            basis,
            residual: f64::NAN,
        };
        grid.residual = grid.orthonormality_residual();
        if !(grid.residual <= tolerance) {
            return Err(Error::GridResidual {
                residual: grid.residual,
                tolerance,
            });
        }
        Ok(grid)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_modes_max(&self) -> usize {
        self.n_modes_max
    }

    /// Residual recorded at construction.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// `h_n` sampled at every node.
    pub fn basis_row(&self, n: usize) -> &[f64] {
        let m = self.n_nodes();
        &self.basis[n * m..(n + 1) * m]
    }

    /// `max_{n,m} |Σ_j W_j h_n(x_j) h_m(x_j) − δ_nm|` over all tabulated modes.
    pub fn orthonormality_residual(&self) -> f64 {
        let nm = self.n_modes_max;
        (0..nm)
            .into_par_iter()
            .map(|n| {
                let weighted: Vec<f64> = self
                    .basis_row(n)
                    .iter()
                    .zip(&self.weights)
                    .map(|(b, w)| b * w)
                    .collect();
                (n..nm)
                    .map(|m| {
                        let g: f64 = weighted.iter().zip(self.basis_row(m)).map(|(a, b)| a * b).sum();
                        let target = if n == m { 1.0 } else { 0.0 };
                        (g - target).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// `u(x_j) = Σ_n c_n h_n(x_j)`.
    pub fn synthesize(&self, state: &SpectralState) -> Result<Vec<C64>> {
        if state.n_modes() > self.n_modes_max {
            return Err(Error::DimensionMismatch {
                expected: self.n_modes_max,
                got: state.n_modes(),
            });
        }
        let m = self.n_nodes();
        let mut re = vec![0.0; m];
        let mut im = vec![0.0; m];
        for (n, c) in state.coeffs().iter().enumerate() {
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            for ((r, i), b) in re.iter_mut().zip(im.iter_mut()).zip(self.basis_row(n)) {
                *r += c.re * b;
                *i += c.im * b;
            }
        }
        Ok(re.into_iter().zip(im).map(|(r, i)| C64::new(r, i)).collect())
    }

    /// `c_n = Σ_j W_j f(x_j) h_n(x_j)` for `n < n_modes`.
    pub fn analyze(&self, values: &[C64], n_modes: usize) -> Result<SpectralState> {
        if values.len() != self.n_nodes() {
            return Err(Error::DimensionMismatch {
                expected: self.n_nodes(),
                got: values.len(),
            });
        }
        if n_modes == 0 || n_modes > self.n_modes_max {
            return Err(Error::DimensionMismatch {
                expected: self.n_modes_max,
                got: n_modes,
            });
        }
        let weighted: Vec<C64> = values.iter().zip(&self.weights).map(|(v, w)| v * w).collect();
        let coeffs = (0..n_modes)
            .map(|n| {
                let mut acc = C64::new(0.0, 0.0);
                for (v, b) in weighted.iter().zip(self.basis_row(n)) {
                    acc += v * b;
                }
                acc
            })
            .collect();
        SpectralState::new(coeffs)
    }

    /// `Σ_j W_j |u(x_j)|^p`.
    pub fn lp_norm_pow(&self, values: &[C64], p: f64) -> f64 {
        debug_assert_eq!(values.len(), self.n_nodes());
        values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| w * v.norm().powf(p))
            .sum()
    }

    /// `(Σ_j W_j |u(x_j)|^p)^{1/p}`.
    pub fn lp_norm(&self, values: &[C64], p: f64) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(Error::Domain(format!("L^p norm needs p >= 1, got {p}")));
        }
        if values.len() != self.n_nodes() {
            return Err(Error::DimensionMismatch {
                expected: self.n_nodes(),
                got: values.len(),
            });
        }
        Ok(self.lp_norm_pow(values, p).powf(1.0 / p))
    }

    /// Quadrature of a real function sampled on the nodes: `Σ_j W_j f(x_j)`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn trapezoid_norms() {
        for n in [0usize, 5, 64, 300] {
            assert_abs_diff_eq!(hermite_lp_norm(n, 2.0), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(eval_hermite_single(n, 0.7), eval_hermite(n, 0.7)[n], epsilon = 1e-15);
        }
        assert_abs_diff_eq!(hermite_lp_norm(0, 4.0), 0.794_744_473_2, epsilon = 1e-9);
    }

    #[test]
    fn h0_at_origin_is_pi_to_minus_quarter() {
        let h = eval_hermite(0, 0.0);
        assert_abs_diff_eq!(h[0], 0.751_125_544_464_942_5, epsilon = 1e-15);
        assert_abs_diff_eq!(h[0], std::f64::consts::PI.powf(-0.25), epsilon = 1e-15);
    }

    #[test]
    fn h1_values() {
        assert_eq!(eval_hermite(1, 0.0)[1], 0.0);
        let expected = 2f64.sqrt() * PI_POW_M14 * (-0.5f64).exp();
        assert_abs_diff_eq!(eval_hermite(1, 1.0)[1], expected, epsilon = 1e-15);
        assert_abs_diff_eq!(expected, 0.644_288_365_1, epsilon = 1e-10);
    }

    #[test]
    fn h2_matches_closed_form() {
        for &x in &[-2.3, -0.4, 0.0, 0.7, 3.1] {
            let h = eval_hermite(2, x);
            let closed = (2.0 * x * x - 1.0) / 2f64.sqrt() * PI_POW_M14 * (-0.5 * x * x).exp();
            assert_abs_diff_eq!(h[2], closed, epsilon = 1e-14);
        }
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(eval_hermite_deriv(0, 0.0)[0], 0.0);
        let d = eval_hermite_deriv(0, 1.0)[0];
        assert_abs_diff_eq!(d, -eval_hermite(0, 1.0)[0], epsilon = 1e-15);
        assert_abs_diff_eq!(d, -0.455_580_67, epsilon = 1e-8);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let step = 1e-5;
        for &x in &[-4.0, -1.3, 0.2, 2.5, 7.0] {
            let d = eval_hermite_deriv(40, x);
            let hp = eval_hermite(40, x + step);
            let hm = eval_hermite(40, x - step);
            for n in 0..=40 {
                let fd = (hp[n] - hm[n]) / (2.0 * step);
                assert!((fd - d[n]).abs() < 1e-6, "n={n} x={x}: fd={fd} analytic={}", d[n]);
            }
        }
    }

    #[test]
    fn far_tail_values_stay_finite() {
        let h = eval_hermite(5000, 98.0);
        assert!(h.iter().all(|v| v.is_finite()));
        assert_eq!(h[0], 0.0); // e^{-4802} underflows, correctly
        assert!(h[5000].abs() > 1e-10);
    }

    #[test]
    fn one_and_two_point_rules() {
        let g1 = QuadratureGrid::with_nodes(1, 1, 1e-12).unwrap();
        assert_eq!(g1.nodes(), &[0.0]);
        assert_abs_diff_eq!(g1.weights()[0], std::f64::consts::PI.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(g1.weights()[0], 1.772_453_9, epsilon = 1e-7);

        let g2 = QuadratureGrid::with_nodes(1, 2, 1e-12).unwrap();
        assert_abs_diff_eq!(g2.nodes()[0], -std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(g2.nodes()[1], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        // classical weight sqrt(pi)/2 times e^{1/2}
        let w = std::f64::consts::PI.sqrt() / 2.0 * 0.5f64.exp();
        assert_abs_diff_eq!(g2.weights()[0], w, epsilon = 1e-14);
    }

    #[test]
    fn nodes_sorted_and_symmetric() {
        let g = QuadratureGrid::build(40, 8).unwrap();
        let x = g.nodes();
        assert!(x.windows(2).all(|w| w[0] < w[1]));
        for j in 0..x.len() {
            assert_abs_diff_eq!(x[j], -x[x.len() - 1 - j], epsilon = 1e-13);
        }
        assert!(g.weights().iter().all(|w| *w > 0.0 && w.is_finite()));
    }

    #[test]
    fn grid_64_residual() {
        let g = QuadratureGrid::build(64, 8).unwrap();
        assert!(g.residual() <= 1e-10, "residual {}", g.residual());
    }

    #[test]
    fn rejects_small_oversample() {
        assert!(matches!(QuadratureGrid::build(4, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn residual_failure_is_reported() {
        // 3 nodes integrate polynomials up to degree 5 only, so h_3² is missed
        let err = QuadratureGrid::with_nodes(4, 3, 1e-10).unwrap_err();
        assert!(matches!(err, Error::GridResidual { .. }));
    }

    #[test]
    fn synthesize_basis_vectors() {
        let g = QuadratureGrid::build(8, 8).unwrap();
        let u = g.synthesize(&SpectralState::basis(8, 0)).unwrap();
        for (v, x) in u.iter().zip(g.nodes()) {
            assert_abs_diff_eq!(v.re, eval_hermite(0, *x)[0], epsilon = 1e-15);
            assert_eq!(v.im, 0.0);
        }
        let g_odd = QuadratureGrid::with_nodes(8, 65, 1e-10).unwrap();
        let u = g_odd.synthesize(&SpectralState::basis(8, 1)).unwrap();
        assert_eq!(u[32].norm(), 0.0);
        assert_eq!(g_odd.nodes()[32], 0.0);
    }

    #[test]
    fn synthesize_rejects_oversized_state() {
        let g = QuadratureGrid::build(4, 4).unwrap();
        assert!(matches!(
            g.synthesize(&SpectralState::zeros(5)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(g.analyze(&[C64::new(0.0, 0.0); 3], 2).is_err());
    }

    #[test]
    fn analyze_gaussian_cube() {
        let g = QuadratureGrid::build(16, 8).unwrap();
        let h0 = g.synthesize(&SpectralState::basis(16, 0)).unwrap();
        let c = g.analyze(&h0, 16).unwrap();
        assert_abs_diff_eq!(c.coeffs()[0].re, 1.0, epsilon = 1e-12);
        for cn in &c.coeffs()[1..] {
            assert!(cn.norm() < 1e-12);
        }
        let cube: Vec<C64> = h0.iter().map(|v| v * v.norm_sqr()).collect();
        let c = g.analyze(&cube, 16).unwrap();
        assert_abs_diff_eq!(
            c.coeffs()[0].re,
            1.0 / (2.0 * std::f64::consts::PI).sqrt(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(c.coeffs()[0].re, 0.398_942_28, epsilon = 1e-8);
        assert_abs_diff_eq!(
            c.coeffs()[2].re,
            -1.0 / (4.0 * std::f64::consts::PI.sqrt()),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(c.coeffs()[2].re, -0.141_047_40, epsilon = 1e-8);
    }

    #[test]
    fn lp_norms_of_h0() {
        let g = QuadratureGrid::build(8, 8).unwrap();
        let h0 = g.synthesize(&SpectralState::basis(8, 0)).unwrap();
        assert_abs_diff_eq!(g.lp_norm(&h0, 2.0).unwrap(), 1.0, epsilon = 1e-12);
        let l4 = g.lp_norm(&h0, 4.0).unwrap();
        assert_abs_diff_eq!(
            l4,
            (1.0 / (2.0 * std::f64::consts::PI).sqrt()).powf(0.25),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(l4, 0.794_744_473_2, epsilon = 1e-9);
        assert!(g.lp_norm(&h0, 0.5).is_err());
    }

    #[test]
    fn state_rejects_non_finite() {
        assert!(SpectralState::new(vec![C64::new(f64::NAN, 0.0)]).is_err());
        assert!(SpectralState::new(vec![]).is_err());
    }
}
