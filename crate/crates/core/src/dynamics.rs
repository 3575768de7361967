//! Truncated NLS flows on `E_N = span(h_0..h_N)` and the lens transform.
//!
//! The Galerkin system is
//!
//! ```text
//! i ∂_t c_n = λ_n² c_n + κ₀ g(t) [S_N(|S_N u|^{k−1} S_N u)]_n,   n ≤ N,
//! ```
//!
//! with `g ≡ 1` for the autonomous flow and `g(t) = cos^{(k−5)/2}(2t)` for the
//! lens-transformed flow. The nonlinear term is evaluated by quadrature on a
//! grid whose nodes outside the support of `h_0..h_N` are dropped; the
//! discrete Hamiltonian uses the same quadrature, so it is conserved exactly
//! by the exact discrete flow.

use std::f64::consts::FRAC_PI_4;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::hs_norm;
use crate::hermite::{eval_hermite, lambda_sq, QuadratureGrid, SpectralState, C64};
use crate::mehler::cutoff_multiplier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    LawsonRk4,
    ImplicitMidpoint,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lawson_rk4" => Ok(Scheme::LawsonRk4),
            "implicit_midpoint" => Ok(Scheme::ImplicitMidpoint),
            other => Err(Error::config("scheme", format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowParams {
    pub cutoff: usize,
    pub k: u32,
    pub kappa0: i32,
    pub time_dependent: bool,
    pub scheme: Scheme,
    pub dt: f64,
    /// Scales the nonlinear term; `0` leaves the linear flow (test hook).
    pub coupling: f64,
}

impl FlowParams {
    pub fn new(cutoff: usize, k: u32) -> Self {
        Self {
            cutoff,
            k,
            kappa0: 1,
            time_dependent: false,
            scheme: Scheme::LawsonRk4,
            dt: 1e-3,
            coupling: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 3 || self.k.is_multiple_of(2) {
            return Err(Error::config(
                "k",
                format!("must be odd and at least 3, got {}", self.k),
            ));
        }
        if self.kappa0 != 1 && self.kappa0 != -1 {
            return Err(Error::config(
                "kappa0",
                format!("must be +1 or -1, got {}", self.kappa0),
            ));
        }
        if self.kappa0 == -1 && self.k != 3 {
            return Err(Error::config(
                "kappa0",
                "the focusing case (kappa0 = -1) is restricted to k = 3",
            ));
        }
        if self.kappa0 == -1 && self.time_dependent {
            return Err(Error::config(
                "kappa0",
                "the lens-transformed flow is defocusing (kappa0 = +1)",
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", format!("must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    /// Analysis modes reserved for the nonlinear term: `(k + 1)(N + 1)`.
    pub fn required_modes(&self) -> usize {
        (self.k as usize + 1) * (self.cutoff + 1)
    }
}

/// The grid used for a flow with these parameters.
pub fn flow_grid(params: &FlowParams, oversample: usize) -> Result<QuadratureGrid> {
    QuadratureGrid::build(params.required_modes(), oversample)
}

/// Nodes where every `|h_n|`, `n ≤ N`, is below this are dropped.
const ACTIVE_NODE_TOL: f64 = 1e-18;
const MIDPOINT_TARGET: f64 = 1e-15;
const MIDPOINT_TOL: f64 = 1e-12;
const MIDPOINT_MAX_ITER: usize = 50;

/// `L²` norm of the coefficient vector.
pub fn mass(state: &SpectralState) -> f64 {
    state.norm_sq()
}

/// `g(t) = cos^{(k−5)/2}(2t)`.
pub fn lens_factor(t: f64, k: u32) -> Result<f64> {
    check_lens_time(t)?;
    Ok((2.0 * t).cos().powf((f64::from(k) - 5.0) / 2.0))
}

fn check_lens_time(t: f64) -> Result<()> {
    if t.abs() < FRAC_PI_4 {
        Ok(())
    } else {
        Err(Error::Domain(format!("lens time must satisfy |t| < pi/4, got {t}")))
    }
}

/// One Galerkin flow with its precomputed quadrature tables.
///
/// The tables are stored on the positive half of the active nodes; values at
/// `−x` follow from the parity of `h_n`.
#[derive(Debug, Clone)]
pub struct GalerkinFlow {
    params: FlowParams,
    lambda_sq: Vec<f64>,
    n_half: usize,
    // basis[n * n_half + p] = χ_n h_n(x_p), positive active nodes
    basis: Vec<f64>,
    // same with the quadrature weight folded in
    basis_w: Vec<f64>,
    weights: Vec<f64>,
    // the node at 0 for odd node counts: (χ_n h_n(0), W_0)
    center: Option<(Vec<f64>, f64)>,
}

impl GalerkinFlow {
    pub fn new(params: FlowParams, grid: &QuadratureGrid) -> Result<Self> {
        params.validate()?;
        let needed = params.required_modes();
        if grid.n_modes_max() < needed {
            return Err(Error::GridTooSmall {
                needed,
                available: grid.n_modes_max(),
            });
        }
        let n_modes = params.cutoff + 1;
        let m = grid.n_nodes();
        let nodes = grid.nodes();
        let chi: Vec<f64> = (0..n_modes).map(|n| cutoff_multiplier(n, params.cutoff)).collect();
        let first_pos = m / 2 + m % 2;
        let active: Vec<usize> = (first_pos..m)
            .filter(|&j| (0..n_modes).any(|n| grid.basis_row(n)[j].abs() >= ACTIVE_NODE_TOL))
            .collect();
        let last = active.last().map_or(first_pos, |j| j + 1);
        let n_half = last - first_pos;
        let mut basis = vec![0.0; n_modes * n_half];
        let mut basis_w = vec![0.0; n_modes * n_half];
        let weights: Vec<f64> = grid.weights()[first_pos..last].to_vec();
        for n in 0..n_modes {
            let row = grid.basis_row(n);
            for p in 0..n_half {
                let b = chi[n] * row[first_pos + p];
                basis[n * n_half + p] = b;
                basis_w[n * n_half + p] = b * weights[p];
            }
        }
        let center = (m % 2 == 1).then(|| {
            let j = m / 2;
            debug_assert!(nodes[j].abs() < 1e-12);
            (
                (0..n_modes).map(|n| chi[n] * grid.basis_row(n)[j]).collect(),
                grid.weights()[j],
            )
        });
        Ok(Self {
            lambda_sq: (0..n_modes).map(lambda_sq).collect(),
            params,
            n_half,
            basis,
            basis_w,
            weights,
            center,
        })
    }

    pub fn params(&self) -> &FlowParams {
        &self.params
    }

    pub fn n_modes(&self) -> usize {
        self.params.cutoff + 1
    }

    /// Number of quadrature nodes actually used by the nonlinear term.
    pub fn active_nodes(&self) -> usize {
        2 * self.n_half + usize::from(self.center.is_some())
    }

    fn check_state(&self, state: &SpectralState) -> Result<()> {
        if state.n_modes() != self.n_modes() {
            return Err(Error::DimensionMismatch {
                expected: self.n_modes(),
                got: state.n_modes(),
            });
        }
        Ok(())
    }

    /// `S_N u` at `+x_p` and `−x_p` (re/im split), plus the center value.
    fn field(&self, c: &[C64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, C64) {
        let h = self.n_half;
        let (mut er, mut ei, mut or, mut oi) = (vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]);
        for (n, cn) in c.iter().enumerate() {
            let row = &self.basis[n * h..(n + 1) * h];
            let (r, i) = if n % 2 == 0 {
                (&mut er, &mut ei)
            } else {
                (&mut or, &mut oi)
            };
            for p in 0..h {
                r[p] += cn.re * row[p];
                i[p] += cn.im * row[p];
            }
        }
        let mut center = C64::new(0.0, 0.0);
        if let Some((b, _)) = &self.center {
            for (n, cn) in c.iter().enumerate().step_by(2) {
                center += cn * b[n];
            }
        }
        let (mut pr, mut pi, mut mr, mut mi) = (er.clone(), ei.clone(), er, ei);
        for p in 0..h {
            pr[p] += or[p];
            pi[p] += oi[p];
            mr[p] -= or[p];
            mi[p] -= oi[p];
        }
        (pr, pi, mr, mi, center)
    }

    fn raw_nonlinearity(&self, c: &[C64]) -> Vec<C64> {
        let h = self.n_half;
        let half = (self.params.k - 1) as i32 / 2;
        let (mut pr, mut pi, mut mr, mut mi, center) = self.field(c);
        for p in 0..h {
            let a = (pr[p] * pr[p] + pi[p] * pi[p]).powi(half);
            pr[p] *= a;
            pi[p] *= a;
            let b = (mr[p] * mr[p] + mi[p] * mi[p]).powi(half);
            mr[p] *= b;
            mi[p] *= b;
        }
        // even modes see f(x) + f(−x), odd modes f(x) − f(−x)
        let (mut sr, mut si, mut dr, mut di) = (pr.clone(), pi.clone(), pr, pi);
        for p in 0..h {
            sr[p] += mr[p];
            si[p] += mi[p];
            dr[p] -= mr[p];
            di[p] -= mi[p];
        }
        let fc = center * center.norm_sqr().powi(half);
        c.iter()
            .enumerate()
            .map(|(n, _)| {
                let row = &self.basis_w[n * h..(n + 1) * h];
                let (r, i) = if n % 2 == 0 { (&sr, &si) } else { (&dr, &di) };
                let mut acc = C64::new(0.0, 0.0);
                for p in 0..h {
                    acc.re += row[p] * r[p];
                    acc.im += row[p] * i[p];
                }
                if n % 2 == 0 {
                    if let Some((b, w)) = &self.center {
                        acc += fc * (b[n] * w);
                    }
                }
                acc
            })
            .collect()
    }

    /// `κ₀ S_N(|S_N u|^{k−1} S_N u)` projected onto modes `≤ N`.
    pub fn nonlinear_term(&self, state: &SpectralState) -> Result<SpectralState> {
        self.check_state(state)?;
        let kappa = f64::from(self.params.kappa0);
        let out = self
            .raw_nonlinearity(state.coeffs())
            .into_iter()
            .map(|v| v * kappa)
            .collect();
        Ok(SpectralState::from_vec_unchecked(out))
    }

    fn potential_raw(&self, c: &[C64]) -> f64 {
        let p = f64::from(self.params.k + 1);
        let (pr, pi, mr, mi, center) = self.field(c);
        let mut acc = 0.0;
        for q in 0..self.n_half {
            let a = (pr[q] * pr[q] + pi[q] * pi[q]).powf(p / 2.0);
            let b = (mr[q] * mr[q] + mi[q] * mi[q]).powf(p / 2.0);
            acc += self.weights[q] * (a + b);
        }
        if let Some((_, w)) = &self.center {
            acc += w * center.norm().powf(p);
        }
        acc
    }

    /// `‖S_N u‖^{k+1}_{L^{k+1}}` with the flow's quadrature.
    pub fn potential(&self, state: &SpectralState) -> Result<f64> {
        self.check_state(state)?;
        Ok(self.potential_raw(state.coeffs()))
    }

    fn kinetic(&self, c: &[C64]) -> f64 {
        0.5 * c
            .iter()
            .zip(&self.lambda_sq)
            .map(|(c, l)| l * c.norm_sqr())
            .sum::<f64>()
    }

    /// `J = ½ Σ λ_n² |c_n|² + κ₀/(k+1) ‖S_N u‖^{k+1}_{L^{k+1}}`.
    pub fn hamiltonian_j(&self, state: &SpectralState) -> Result<f64> {
        self.check_state(state)?;
        let c = state.coeffs();
        let kp1 = f64::from(self.params.k + 1);
        Ok(self.kinetic(c) + f64::from(self.params.kappa0) / kp1 * self.potential_raw(c))
    }

    /// `ℰ_N(t) = ½ Σ λ_n² |c_n|² + cos^{(k−5)/2}(2t)/(k+1) ‖S_N u‖^{k+1}_{L^{k+1}}`.
    pub fn energy_en(&self, t: f64, state: &SpectralState) -> Result<f64> {
        self.check_state(state)?;
        let g = lens_factor(t, self.params.k)?;
        let c = state.coeffs();
        let kp1 = f64::from(self.params.k + 1);
        Ok(self.kinetic(c) + g / kp1 * self.potential_raw(c))
    }

    /// `ℰ_N` for time-dependent flows, `J` otherwise.
    pub fn energy(&self, t: f64, state: &SpectralState) -> Result<f64> {
        if self.params.time_dependent {
            self.energy_en(t, state)
        } else {
            self.hamiltonian_j(state)
        }
    }

    fn g(&self, t: f64) -> Result<f64> {
        if self.params.time_dependent {
            lens_factor(t, self.params.k)
        } else {
            Ok(1.0)
        }
    }

    /// `−i κ₀ g(τ) N(c)` times the coupling.
    fn forcing(&self, tau: f64, c: &[C64]) -> Result<Vec<C64>> {
        let scale = f64::from(self.params.kappa0) * self.g(tau)? * self.params.coupling;
        if scale == 0.0 {
            return Ok(vec![C64::new(0.0, 0.0); c.len()]);
        }
        let minus_i = C64::new(0.0, -scale);
        Ok(self.raw_nonlinearity(c).into_iter().map(|v| v * minus_i).collect())
    }

    fn phases(&self, h: f64) -> Vec<C64> {
        self.lambda_sq.iter().map(|l| C64::from_polar(1.0, -l * h)).collect()
    }

    fn lawson_rk4(&self, c: &[C64], t: f64, h: f64) -> Result<Vec<C64>> {
        let e1 = self.phases(h);
        let e2 = self.phases(h / 2.0);
        let n = c.len();
        let k1 = self.forcing(t, c)?;
        let a: Vec<C64> = (0..n).map(|i| e2[i] * (c[i] + k1[i] * (h / 2.0))).collect();
        let k2 = self.forcing(t + h / 2.0, &a)?;
        let b: Vec<C64> = (0..n).map(|i| e2[i] * c[i] + k2[i] * (h / 2.0)).collect();
        let k3 = self.forcing(t + h / 2.0, &b)?;
        let d: Vec<C64> = (0..n).map(|i| e1[i] * c[i] + e2[i] * k3[i] * h).collect();
        let k4 = self.forcing(t + h, &d)?;
        Ok((0..n)
            .map(|i| e1[i] * c[i] + (e1[i] * k1[i] + e2[i] * (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0))
            .collect())
    }

    fn implicit_midpoint(&self, c: &[C64], t: f64, h: f64) -> Result<Vec<C64>> {
        let tm = t + h / 2.0;
        let denom: Vec<C64> = self.lambda_sq.iter().map(|l| C64::new(1.0, l * h / 2.0)).collect();
        let mut m = c.to_vec();
        let mut residual = f64::INFINITY;
        for _ in 0..MIDPOINT_MAX_ITER {
            let f = self.forcing(tm, &m)?;
            let next: Vec<C64> = (0..c.len()).map(|i| (c[i] + f[i] * (h / 2.0)) / denom[i]).collect();
            let diff: f64 = next.iter().zip(&m).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            let size: f64 = next
                .iter()
                .map(|a| a.norm_sqr())
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            m = next;
            residual = diff / size;
            if residual <= MIDPOINT_TARGET {
                break;
            }
        }
        if residual > MIDPOINT_TOL {
            return Err(Error::MidpointDivergence { t, residual });
        }
        Ok(m.iter().zip(c).map(|(m, c)| m * 2.0 - c).collect())
    }

    fn step_raw(&self, c: &[C64], t: f64, h: f64) -> Result<Vec<C64>> {
        if self.params.time_dependent {
            check_lens_time(t)?;
            check_lens_time(t + h)?;
        }
        match self.params.scheme {
            Scheme::LawsonRk4 => self.lawson_rk4(c, t, h),
            Scheme::ImplicitMidpoint => self.implicit_midpoint(c, t, h),
        }
    }

    /// One step of signed length `h` from time `t`.
    pub fn step_by(&self, state: &SpectralState, t: f64, h: f64) -> Result<SpectralState> {
        self.check_state(state)?;
        let out = self
            .step_raw(state.coeffs(), t, h)
            .map_err(|e| Error::StepFailure { t, source: Box::new(e) })?;
        Ok(SpectralState::from_vec_unchecked(out))
    }

    /// One step of length `dt`.
    pub fn step(&self, state: &SpectralState, t: f64) -> Result<SpectralState> {
        self.step_by(state, t, self.params.dt)
    }

    /// Signed step sizes covering `[t0, t1]` with a final partial step.
    fn schedule(&self, t0: f64, t1: f64) -> Vec<(f64, f64)> {
        let span = t1 - t0;
        if span == 0.0 {
            return Vec::new();
        }
        let dt = self.params.dt;
        let full = ((span.abs() / dt) * (1.0 + 1e-12)).floor() as usize;
        let sign = span.signum();
        let mut out: Vec<(f64, f64)> = (0..full).map(|i| (t0 + sign * dt * i as f64, sign * dt)).collect();
        let covered = t0 + sign * dt * full as f64;
        let rest = t1 - covered;
        if rest.abs() > 1e-12 * dt {
            out.push((covered, rest));
        } else if let Some(last) = out.last_mut() {
            last.1 = t1 - last.0;
        }
        out
    }

    /// Final state at `t1` without recording diagnostics.
    pub fn advance(&self, state: &SpectralState, t0: f64, t1: f64) -> Result<SpectralState> {
        self.check_state(state)?;
        let mut c = state.coeffs().to_vec();
        for (t, h) in self.schedule(t0, t1) {
            c = self
                .step_raw(&c, t, h)
                .map_err(|e| Error::StepFailure { t, source: Box::new(e) })?;
        }
        Ok(SpectralState::from_vec_unchecked(c))
    }

    /// Fixed-step march from `t0` to `t1` (either direction) with diagnostics at every step.
    pub fn evolve(&self, state: &SpectralState, t0: f64, t1: f64) -> Result<Trajectory> {
        self.check_state(state)?;
        let mut traj = Trajectory {
            time_dependent: self.params.time_dependent,
            ..Trajectory::default()
        };
        traj.push(t0, state.clone(), self.energy(t0, state)?);
        let mut c = state.coeffs().to_vec();
        for (t, h) in self.schedule(t0, t1) {
            c = self
                .step_raw(&c, t, h)
                .map_err(|e| Error::StepFailure { t, source: Box::new(e) })?;
            let s = SpectralState::from_vec_unchecked(c.clone());
            let e = self.energy(t + h, &s)?;
            traj.push(t + h, s, e);
        }
        Ok(traj)
    }

    /// Step-doubling estimate of the energy error of one step from `t`:
    /// `|ℰ(one step of h) − ℰ(two steps of h/2)|`.
    pub fn energy_step_error(&self, state: &SpectralState, t: f64, h: f64) -> Result<f64> {
        let one = self.step_by(state, t, h)?;
        let half = self.step_by(state, t, h / 2.0)?;
        let two = self.step_by(&half, t + h / 2.0, h / 2.0)?;
        Ok((self.energy(t + h, &one)? - self.energy(t + h, &two)?).abs())
    }
}

/// Times, states and conserved/monotone diagnostics along a flow.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SpectralState>,
    pub mass: Vec<f64>,
    /// `J` for autonomous flows, `ℰ_N` for time-dependent ones.
    pub energy: Vec<f64>,
    pub time_dependent: bool,
}

impl Trajectory {
    fn push(&mut self, t: f64, state: SpectralState, energy: f64) {
        self.times.push(t);
        self.mass.push(mass(&state));
        self.states.push(state);
        self.energy.push(energy);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&SpectralState> {
        self.states.last()
    }

    pub fn max_mass_drift(&self) -> f64 {
        self.mass.iter().map(|m| (m - self.mass[0]).abs()).fold(0.0, f64::max)
    }

    pub fn max_energy_drift(&self) -> f64 {
        self.energy
            .iter()
            .map(|e| (e - self.energy[0]).abs())
            .fold(0.0, f64::max)
    }

    /// CSV with columns `t,mass,J_or_E,hs_norm_s,l4_norm`.
    pub fn write_csv(&self, out: &mut impl Write, grid: &QuadratureGrid, s: f64) -> Result<()> {
        writeln!(out, "t,mass,J_or_E,hs_norm_s,l4_norm")?;
        for i in 0..self.len() {
            let values = grid.synthesize(&self.states[i])?;
            let l4 = grid.lp_norm(&values, 4.0)?;
            writeln!(
                out,
                "{},{},{},{},{}",
                self.times[i],
                self.mass[i],
                self.energy[i],
                hs_norm(&self.states[i], s),
                l4
            )?;
        }
        Ok(())
    }
}

/// Internal free-equation time `s = tan(2t)/2`.
pub fn lens_time(t: f64) -> Result<f64> {
    check_lens_time(t)?;
    Ok((2.0 * t).tan() / 2.0)
}

/// `u(t, x) = cos^{−1/2}(2t) v(x / cos 2t) e^{−i x² tan(2t)/2}` at the given points,
/// where `v` is the free solution at time `lens_time(t)`.
pub fn lens_forward_fn(v: impl Fn(f64) -> C64, t: f64, points: &[f64]) -> Result<Vec<C64>> {
    check_lens_time(t)?;
    let c = (2.0 * t).cos();
    let tn = (2.0 * t).tan();
    let amp = c.powf(-0.5);
    Ok(points
        .iter()
        .map(|&x| v(x / c) * C64::from_polar(amp, -x * x * tn / 2.0))
        .collect())
}

/// `lens_forward_fn` for `v` given in the Hermite basis, on the grid nodes.
pub fn lens_forward(v: &SpectralState, t: f64, grid: &QuadratureGrid) -> Result<Vec<C64>> {
    let n_max = v.n_modes() - 1;
    lens_forward_fn(
        |y| {
            eval_hermite(n_max, y)
                .iter()
                .zip(v.coeffs())
                .fold(C64::new(0.0, 0.0), |acc, (h, c)| acc + c * h)
        },
        t,
        grid.nodes(),
    )
}

/// Inverse of the lens map: values of `v(lens_time(t), ·)` at `y_j = x_j / cos 2t`
/// from values of `u(t, ·)` at `x_j`.
pub fn lens_inverse(u: &[C64], t: f64, points: &[f64]) -> Result<Vec<C64>> {
    check_lens_time(t)?;
    if u.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: u.len(),
        });
    }
    let c = (2.0 * t).cos();
    let tn = (2.0 * t).tan();
    let amp = c.sqrt();
    Ok(u.iter()
        .zip(points)
        .map(|(u, &x)| u * C64::from_polar(amp, x * x * tn / 2.0))
        .collect())
}

/// Points `x_j / cos 2t` at which `lens_inverse` returns `v`.
pub fn lens_inverse_points(t: f64, points: &[f64]) -> Result<Vec<f64>> {
    check_lens_time(t)?;
    let c = (2.0 * t).cos();
    Ok(points.iter().map(|x| x / c).collect())
}

/// Free solution of `i v_s + v_yy = 0` with `v(0) = h_0`:
/// `π^{−1/4} (1 + 2is)^{−1/2} exp(−y² / (2(1 + 2is)))`.
pub fn free_gaussian(s: f64, y: f64) -> C64 {
    let z = C64::new(1.0, 2.0 * s);
    (-(y * y) / (z * 2.0)).exp() / z.sqrt() * crate::hermite::PI_POW_M14
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mehler::{apply_sn, propagator_apply};
    use crate::rng::ComplexGaussianStream;
    use approx::assert_abs_diff_eq;

    fn setup(cutoff: usize, k: u32) -> (FlowParams, QuadratureGrid) {
        let p = FlowParams::new(cutoff, k);
        let g = flow_grid(&p, 8).unwrap();
        (p, g)
    }

    fn random_state(cutoff: usize, seed: u64) -> SpectralState {
        crate::gibbs::sample_gaussian_field(cutoff, &mut ComplexGaussianStream::new(seed, 0))
    }

    #[test]
    fn nonlinear_term_on_h0() {
        let (p, g) = setup(8, 3);
        let flow = GalerkinFlow::new(p, &g).unwrap();
        let out = flow.nonlinear_term(&SpectralState::basis(9, 0)).unwrap();
        assert_abs_diff_eq!(out.coeffs()[0].re, 0.398_942_28, epsilon = 1e-8);
        assert_abs_diff_eq!(out.coeffs()[2].re, -0.141_047_40, epsilon = 1e-8);
        for n in (1..9).step_by(2) {
            assert_eq!(out.coeffs()[n], C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn fast_path_matches_full_grid() {
        let (p, g) = setup(10, 5);
        let flow = GalerkinFlow::new(p, &g).unwrap();
        assert!(flow.active_nodes() < g.n_nodes());
        let s = random_state(10, 4);
        let fast = flow.nonlinear_term(&s).unwrap();
        let v = g.synthesize(&apply_sn(&s, 10)).unwrap();
        let f: Vec<C64> = v.iter().map(|u| u * u.norm_sqr().powi(2)).collect();
        let slow = apply_sn(&g.analyze(&f, 11).unwrap(), 10);
        assert!(fast.l2_distance(&slow) < 1e-12 * slow.norm_sq().sqrt());
        let pot = g.lp_norm_pow(&v, 6.0);
        assert_abs_diff_eq!(flow.potential(&s).unwrap(), pot, epsilon = 1e-12 * pot);
    }

    #[test]
    fn odd_node_count_uses_center() {
        let p = FlowParams::new(6, 3);
        let g = QuadratureGrid::with_nodes(p.required_modes(), 8 * p.required_modes() + 1, 1e-10).unwrap();
        let flow = GalerkinFlow::new(p, &g).unwrap();
        let s = random_state(6, 2);
        let v = g.synthesize(&apply_sn(&s, 6)).unwrap();
        let f: Vec<C64> = v.iter().map(|u| u * u.norm_sqr()).collect();
        let slow = apply_sn(&g.analyze(&f, 7).unwrap(), 6);
        assert!(flow.nonlinear_term(&s).unwrap().l2_distance(&slow) < 1e-12);
    }

    #[test]
    fn hamiltonian_examples() {
        let (p, g) = setup(8, 3);
        let flow = GalerkinFlow::new(p, &g).unwrap();
        assert_eq!(flow.hamiltonian_j(&SpectralState::zeros(9)).unwrap(), 0.0);
        assert_abs_diff_eq!(
            flow.hamiltonian_j(&SpectralState::basis(9, 0)).unwrap(),
            0.599_735_57,
            epsilon = 1e-8
        );
    }

    #[test]
    fn energy_at_zero_is_j_and_domain_checked() {
        let (mut p, g) = setup(8, 7);
        p.time_dependent = true;
        let flow = GalerkinFlow::new(p, &g).unwrap();
        let s = random_state(8, 1);
        assert_abs_diff_eq!(
            flow.energy_en(0.0, &s).unwrap(),
            flow.hamiltonian_j(&s).unwrap(),
            epsilon = 1e-14
        );
        assert!(matches!(flow.energy_en(FRAC_PI_4, &s), Err(Error::Domain(_))));
    }

    #[test]
    fn linear_flow_is_exact_phase() {
        let (mut p, g) = setup(6, 3);
        p.coupling = 0.0;
        let flow = GalerkinFlow::new(p, &g).unwrap();
        let s = random_state(6, 3);
        let out = flow.step(&s, 0.0).unwrap();
        assert!(out.l2_distance(&propagator_apply(&s, 1e-3)) < 1e-15);
    }

    #[test]
    fn midpoint_conserves_mass_per_step() {
        let (mut p, g) = setup(8, 3);
        p.scheme = Scheme::ImplicitMidpoint;
        p.dt = 1e-2;
        let flow = GalerkinFlow::new(p, &g).unwrap();
        let mut s = random_state(8, 6);
        for i in 0..20 {
            let next = flow.step(&s, i as f64 * 1e-2).unwrap();
            assert!((mass(&next) - mass(&s)).abs() <= 1e-12 * mass(&s).max(1.0));
            s = next;
        }
    }

    #[test]
    fn schedule_handles_partial_and_backward() {
        let (mut p, g) = setup(4, 3);
        p.dt = 0.3;
        let flow = GalerkinFlow::new(p, &g).unwrap();
        let sch = flow.schedule(0.0, 1.0);
        assert_eq!(sch.len(), 4);
        assert_abs_diff_eq!(sch[3].1, 0.1, epsilon = 1e-12);
        let back = flow.schedule(1.0, 0.0);
        assert!(back.iter().all(|(_, h)| *h < 0.0));
        let total: f64 = back.iter().map(|(_, h)| h).sum();
        assert_abs_diff_eq!(total, -1.0, epsilon = 1e-12);
        assert!(flow.schedule(0.5, 0.5).is_empty());
        let s = random_state(4, 0);
        let tr = flow.evolve(&s, 0.5, 0.5).unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(tr.states[0], s);
    }

    #[test]
    fn parameter_validation() {
        let mut p = FlowParams::new(4, 5);
        p.kappa0 = -1;
        assert!(matches!(p.validate(), Err(Error::Config { .. })));
        let mut p = FlowParams::new(4, 3);
        p.dt = 0.0;
        assert!(p.validate().is_err());
        assert!(FlowParams::new(4, 4).validate().is_err());
        let (p, _) = setup(4, 3);
        let small = QuadratureGrid::build(10, 8).unwrap();
        assert!(matches!(GalerkinFlow::new(p, &small), Err(Error::GridTooSmall { .. })));
    }

    #[test]
    fn lens_basics() {
        assert_abs_diff_eq!(lens_time(std::f64::consts::PI / 8.0).unwrap(), 0.5, epsilon = 1e-15);
        assert!(lens_time(FRAC_PI_4).is_err());
        let g = QuadratureGrid::build(16, 8).unwrap();
        let v = random_state(10, 8);
        let direct = g.synthesize(&v).unwrap();
        let at_zero = lens_forward(&v, 0.0, &g).unwrap();
        for (a, b) in direct.iter().zip(&at_zero) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn lens_maps_free_gaussian_to_propagated_h0() {
        let g = QuadratureGrid::build(32, 8).unwrap();
        let t = 0.3;
        let s = lens_time(t).unwrap();
        let u = lens_forward_fn(|y| free_gaussian(s, y), t, g.nodes()).unwrap();
        let reference = g.synthesize(&propagator_apply(&SpectralState::basis(1, 0), t)).unwrap();
        let diff: Vec<C64> = u.iter().zip(&reference).map(|(a, b)| a - b).collect();
        assert!(g.lp_norm(&diff, 2.0).unwrap() < 1e-12);
    }
}
