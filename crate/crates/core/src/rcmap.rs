//! Reaction-coordinate route for the Lorentzian bath.
//!
//! The Lorentzian bath is replaced by a single mode `b` at `ω_c`, coupled to
//! the system with `|g|² = γ0η/2` and damped by a flat residual bath of rate
//! `2η`. The pair evolves under a Lindblad equation whose Gaussian moments
//! close:
//!
//! ```text
//! d⟨v⟩/dt = A⟨v⟩,  dN/dt = A*N + NAᵀ + diag(0, W₊),  dP/dt = AP + PAᵀ
//! ```
//!
//! with `v = (a, b)`, `A = −iH₁ − diag(0, η)`, `N_ij = ⟨v_i†v_j⟩`, `P_ij = ⟨v_iv_j⟩`.

use nalgebra::{Matrix2, Matrix4, Vector2};
use num_complex::Complex64;
use serde::Serialize;

use crate::coefficients::{moment_sources, EnvInitState, NoiseOptions};
use crate::dynamics::{propagate_closed_form, GaussianModeState, MomentSeries};
use crate::error::{invalid, Error, Result};
use crate::green::green_lorentzian_closed;
use crate::grid::TimeGrid;
use crate::spectral::{bose, FrequencyCutoff, SpectralDensity};

type C = Complex64;
const ZERO: C = C::new(0.0, 0.0);

/// Mapped reaction-coordinate constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RcModel {
    /// RC coupling, real and nonnegative.
    pub g: f64,
    pub omega_rc: f64,
    /// Residual flat-bath rate `γ̃0 = 2η`.
    pub gamma_residual: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    pub beta: f64,
}

/// Map a Lorentzian `(γ0, η, ω_c)` at inverse temperature β; the rate pair
/// obeys detailed balance at `ω_c`.
pub fn map_lorentzian(gamma0: f64, eta: f64, omega_c: f64, beta: f64) -> Result<RcModel> {
    if !(eta > 0.0) {
        return Err(invalid("eta", "must be positive"));
    }
    if !(gamma0 > 0.0) {
        return Err(invalid("gamma0", "must be positive"));
    }
    if !(beta > 0.0) {
        return Err(invalid("beta", "must be positive"));
    }
    let gamma_residual = 2.0 * eta;
    let nb = if beta.is_finite() {
        if !(omega_c > 0.0) {
            return Err(invalid("omega_c", "thermal residual bath needs a positive RC frequency"));
        }
        bose(omega_c, beta)
    } else {
        0.0
    };
    let m = RcModel {
        g: (0.5 * gamma0 * eta).sqrt(),
        omega_rc: omega_c,
        gamma_residual,
        w_plus: gamma_residual * nb,
        w_minus: gamma_residual * (nb + 1.0),
        beta,
    };
    debug_assert!((m.w_minus - m.w_plus - gamma_residual).abs() <= 1e-12 * m.w_minus.max(1.0));
    Ok(m)
}

/// Two-mode Gaussian moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoModeMoments {
    pub mean: Vector2<C>,
    /// `N_ij = ⟨v_i† v_j⟩`.
    pub n: Matrix2<C>,
    /// `P_ij = ⟨v_i v_j⟩`.
    pub p: Matrix2<C>,
}

impl TwoModeMoments {
    /// Product of a system state and an RC state.
    pub fn product(sys: &GaussianModeState, rc: &GaussianModeState) -> Self {
        let mean = Vector2::new(sys.mean, rc.mean);
        let mut n = Matrix2::from_fn(|i, j| mean[i].conj() * mean[j]);
        let mut p = Matrix2::from_fn(|i, j| mean[i] * mean[j]);
        n[(0, 0)] = C::new(sys.occupation, 0.0);
        n[(1, 1)] = C::new(rc.occupation, 0.0);
        p[(0, 0)] = sys.pair;
        p[(1, 1)] = rc.pair;
        Self { mean, n, p }
    }

    pub fn system(&self) -> GaussianModeState {
        GaussianModeState { mean: self.mean[0], pair: self.p[(0, 0)], occupation: self.n[(0, 0)].re }
    }

    fn axpy(&self, h: f64, d: &Self) -> Self {
        Self {
            mean: self.mean + d.mean * C::new(h, 0.0),
            n: self.n + d.n * C::new(h, 0.0),
            p: self.p + d.p * C::new(h, 0.0),
        }
    }

    fn finite(&self) -> bool {
        self.mean.iter().chain(self.n.iter()).chain(self.p.iter()).all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Symplectic eigenvalues of the 4×4 quadrature covariance.
    pub fn symplectic_eigenvalues(&self) -> (f64, f64) {
        let nc = self.n - Matrix2::from_fn(|i, j| self.mean[i].conj() * self.mean[j]);
        let pc = self.p - self.mean * self.mean.transpose();
        // Ordering (x1, p1, x2, p2).
        let xx = |i: usize, j: usize| (pc[(i, j)] + nc[(i, j)]).re + if i == j { 0.5 } else { 0.0 };
        let pp = |i: usize, j: usize| (nc[(i, j)] - pc[(i, j)]).re + if i == j { 0.5 } else { 0.0 };
        let xp = |i: usize, j: usize| pc[(i, j)].im + nc[(i, j)].im;
        let s = Matrix4::from_fn(|r, c| {
            let (i, qi) = (r / 2, r % 2);
            let (j, qj) = (c / 2, c % 2);
            match (qi, qj) {
                (0, 0) => xx(i, j),
                (1, 1) => pp(i, j),
                (0, 1) => xp(i, j),
                _ => xp(j, i),
            }
        });
        let a = s.fixed_view::<2, 2>(0, 0).determinant();
        let b = s.fixed_view::<2, 2>(2, 2).determinant();
        let c = s.fixed_view::<2, 2>(0, 2).determinant();
        let delta = a + b + 2.0 * c;
        let det = s.determinant();
        let root = (delta * delta - 4.0 * det).max(0.0).sqrt();
        (((delta - root) / 2.0).max(0.0).sqrt(), ((delta + root) / 2.0).sqrt())
    }
}

fn generator(model: &RcModel, omega0: f64) -> Matrix2<C> {
    let i = C::new(0.0, 1.0);
    let h = Matrix2::new(C::new(omega0, 0.0), C::new(model.g, 0.0), C::new(model.g, 0.0), C::new(model.omega_rc, 0.0));
    let damp = 0.5 * (model.w_minus - model.w_plus);
    -h * i - Matrix2::new(ZERO, ZERO, ZERO, C::new(damp, 0.0))
}

fn rhs(a: &Matrix2<C>, w_plus: f64, y: &TwoModeMoments) -> TwoModeMoments {
    let noise = Matrix2::new(ZERO, ZERO, ZERO, C::new(w_plus, 0.0));
    TwoModeMoments {
        mean: a * y.mean,
        n: a.map(|z| z.conj()) * y.n + y.n * a.transpose() + noise,
        p: a * y.p + y.p * a.transpose(),
    }
}

/// Joint trajectory of the system and the reaction coordinate.
#[derive(Debug, Clone)]
pub struct RcTrajectory {
    pub grid: TimeGrid,
    pub states: Vec<TwoModeMoments>,
}

impl RcTrajectory {
    /// Central-mode marginal; derivatives are not recorded and stay zero.
    pub fn system_series(&self) -> MomentSeries {
        let n = self.states.len();
        let s: Vec<GaussianModeState> = self.states.iter().map(|m| m.system()).collect();
        MomentSeries {
            grid: self.grid,
            mean: s.iter().map(|x| x.mean).collect(),
            pair: s.iter().map(|x| x.pair).collect(),
            occupation: s.iter().map(|x| x.occupation).collect(),
            mean_dot: vec![ZERO; n],
            pair_dot: vec![ZERO; n],
            occupation_dot: vec![0.0; n],
        }
    }

    pub fn min_symplectic_eigenvalue(&self) -> f64 {
        self.states.iter().map(|s| s.symplectic_eigenvalues().0).fold(f64::INFINITY, f64::min)
    }
}

/// Integrate the two-mode moments with RK4. The RC starts thermal at the
/// model temperature unless `rc_state0` is given.
pub fn simulate_rc(
    model: &RcModel,
    omega0: f64,
    state0: &GaussianModeState,
    rc_state0: Option<&GaussianModeState>,
    grid: &TimeGrid,
) -> Result<RcTrajectory> {
    state0.validate()?;
    let rc = match rc_state0 {
        Some(s) => *s,
        None if model.beta.is_finite() => GaussianModeState::thermal(bose(model.omega_rc, model.beta))?,
        None => GaussianModeState::vacuum(),
    };
    rc.validate()?;
    let a = generator(model, omega0);
    let mut y = TwoModeMoments::product(state0, &rc);
    let mut states = vec![y];
    for k in 0..grid.steps() {
        let mut next = None;
        for halving in 0..=8u32 {
            let sub = 1usize << halving;
            let h = grid.dt() / sub as f64;
            let mut z = y;
            for _ in 0..sub {
                let k1 = rhs(&a, model.w_plus, &z);
                let k2 = rhs(&a, model.w_plus, &z.axpy(0.5 * h, &k1));
                let k3 = rhs(&a, model.w_plus, &z.axpy(0.5 * h, &k2));
                let k4 = rhs(&a, model.w_plus, &z.axpy(h, &k3));
                z = z.axpy(h / 6.0, &k1).axpy(h / 3.0, &k2).axpy(h / 3.0, &k3).axpy(h / 6.0, &k4);
            }
            if z.finite() && z.symplectic_eigenvalues().0 >= 0.5 - 1e-9 {
                next = Some(z);
                break;
            }
        }
        y = next.ok_or(Error::Unstable { time: grid.t(k), retries: 8 })?;
        states.push(y);
    }
    Ok(RcTrajectory { grid: *grid, states })
}

/// Deviations between the exact and the reaction-coordinate routes.
#[derive(Debug, Clone, Serialize)]
pub struct RcComparison {
    pub eta: f64,
    pub gamma0: f64,
    pub max_abs: [f64; 3],
    pub l2: [f64; 3],
    /// Max deviation over the max magnitude of the exact series, per moment.
    pub relative: [f64; 3],
    pub min_symplectic: f64,
}

impl RcComparison {
    pub fn worst_relative(&self) -> f64 {
        self.relative.iter().copied().fold(0.0, f64::max)
    }
}

/// Exact central-mode moments for the Lorentzian thermal bath.
pub fn exact_lorentzian_moments(
    j: &SpectralDensity,
    omega0: f64,
    beta: f64,
    state0: &GaussianModeState,
    grid: &TimeGrid,
    cutoff: &FrequencyCutoff,
) -> Result<MomentSeries> {
    let SpectralDensity::Lorentzian { gamma0, eta, omega_c } = *j else {
        return Err(Error::UnsupportedVariant { op: "reaction coordinate", variant: j.variant_name() });
    };
    let g = green_lorentzian_closed(gamma0, eta, omega_c, omega0, *grid)?;
    let env = if beta.is_finite() { EnvInitState::thermal(beta)? } else { EnvInitState::zero_temperature() };
    let src = moment_sources(&g, &env, cutoff, NoiseOptions::default())?;
    propagate_closed_form(state0, &g, &src)
}

pub fn compare_exact_vs_rc(
    j: &SpectralDensity,
    omega0: f64,
    beta: f64,
    state0: &GaussianModeState,
    grid: &TimeGrid,
    cutoff: &FrequencyCutoff,
) -> Result<RcComparison> {
    let SpectralDensity::Lorentzian { gamma0, eta, omega_c } = *j else {
        return Err(Error::UnsupportedVariant { op: "reaction coordinate", variant: j.variant_name() });
    };
    let exact = exact_lorentzian_moments(j, omega0, beta, state0, grid, cutoff)?;
    let model = map_lorentzian(gamma0, eta, omega_c, beta)?;
    let traj = simulate_rc(&model, omega0, state0, None, grid)?;
    let rc = traj.system_series();
    let n = grid.len();
    let mut max_abs = [0.0f64; 3];
    let mut l2 = [0.0f64; 3];
    let mut scale = [0.0f64; 3];
    for k in 0..n {
        let d = [
            (exact.mean[k] - rc.mean[k]).norm(),
            (exact.pair[k] - rc.pair[k]).norm(),
            (exact.occupation[k] - rc.occupation[k]).abs(),
        ];
        let s = [exact.mean[k].norm(), exact.pair[k].norm(), exact.occupation[k].abs()];
        for i in 0..3 {
            max_abs[i] = max_abs[i].max(d[i]);
            l2[i] += d[i] * d[i] * grid.dt();
            scale[i] = scale[i].max(s[i]);
        }
    }
    let relative = [0, 1, 2].map(|i| if scale[i] > 0.0 { max_abs[i] / scale[i] } else { max_abs[i] });
    Ok(RcComparison {
        eta,
        gamma0,
        max_abs,
        l2: l2.map(f64::sqrt),
        relative,
        min_symplectic: traj.min_symplectic_eigenvalue(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mapped_constants() {
        let m = map_lorentzian(1.0, 0.1, 1.3, 2.0).unwrap();
        assert_abs_diff_eq!(m.g * m.g, 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(m.gamma_residual, 0.2, epsilon = 1e-15);
        assert_eq!(m.omega_rc, 1.3);
        assert_abs_diff_eq!(m.w_minus - m.w_plus, 0.2, epsilon = 1e-14);
        let z = map_lorentzian(1.0, 0.1, 1.3, f64::INFINITY).unwrap();
        assert_eq!(z.w_plus, 0.0);
        assert_abs_diff_eq!(z.w_minus, 0.2, epsilon = 1e-15);
    }

    #[test]
    fn uncoupled_system_evolves_freely() {
        let mut m = map_lorentzian(1.0, 0.1, 1.0, 1.0).unwrap();
        m.g = 0.0;
        let alpha = C::new(1.0, 0.5);
        let grid = TimeGrid::new(0.01, 500).unwrap();
        let t = simulate_rc(&m, 1.2, &GaussianModeState::coherent(alpha), None, &grid).unwrap();
        let s = t.system_series();
        for (k, tt) in grid.times().enumerate() {
            assert!((s.mean[k] - alpha * C::from_polar(1.0, -1.2 * tt)).norm() < 1e-8);
            assert_abs_diff_eq!(s.occupation[k], alpha.norm_sqr(), epsilon = 1e-10);
        }
    }

    #[test]
    fn closed_pair_conserves_excitations() {
        let mut m = map_lorentzian(1.0, 0.1, 1.0, f64::INFINITY).unwrap();
        m.w_minus = 0.0;
        m.w_plus = 0.0;
        let grid = TimeGrid::new(0.01, 2000).unwrap();
        let s0 = GaussianModeState::thermal(1.5).unwrap();
        let t = simulate_rc(&m, 1.0, &s0, Some(&GaussianModeState::thermal(0.2).unwrap()), &grid).unwrap();
        for s in &t.states {
            assert_abs_diff_eq!(s.n[(0, 0)].re + s.n[(1, 1)].re, 1.7, epsilon = 1e-9);
        }
        // Resonant exchange: the populations swap after π/(2g).
        let k = (std::f64::consts::PI / (2.0 * m.g) / grid.dt()).round() as usize;
        assert!((t.states[k].n[(0, 0)].re - 0.2).abs() < 1e-3);
    }

    #[test]
    fn symplectic_values_of_product_states() {
        let s = TwoModeMoments::product(
            &GaussianModeState::thermal(0.3).unwrap(),
            &GaussianModeState::coherent(C::new(1.0, 1.0)),
        );
        let (a, b) = s.symplectic_eigenvalues();
        assert_abs_diff_eq!(a, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(b, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn rejects_flat_density() {
        let j = SpectralDensity::flat(0.5).unwrap();
        let grid = TimeGrid::new(0.1, 10).unwrap();
        let cut = FrequencyCutoff::full_axis(0.02, 10.0).unwrap();
        let r = compare_exact_vs_rc(&j, 1.0, 1.0, &GaussianModeState::vacuum(), &grid, &cut);
        assert!(matches!(r, Err(Error::UnsupportedVariant { .. })));
    }

    #[test]
    fn narrow_lorentzian_agrees_with_exact_route() {
        let j = SpectralDensity::lorentzian(0.5, 0.02, 1.0).unwrap();
        let grid = TimeGrid::new(0.01, 2000).unwrap();
        let cut = FrequencyCutoff::full_axis(0.02, 20.0).unwrap();
        let r = compare_exact_vs_rc(&j, 1.0, 1.0, &GaussianModeState::coherent(C::new(1.0, 0.0)), &grid, &cut).unwrap();
        assert!(r.worst_relative() < 5e-2, "{r:?}");
        assert!(r.min_symplectic >= 0.5 - 1e-9);
    }
}
