//! Gaussian moments of the system mode: closed form and master-equation ODE.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientSeries, MomentSources};
use crate::error::{invalid, Error, Result};
use crate::green::GreenFunction;
use crate::grid::TimeGrid;
use crate::quad::interp_cubic;

/// Slack allowed below the physical bound `ν ≥ 1/2`.
pub const POSITIVITY_TOL: f64 = 1e-10;
const MAX_HALVINGS: u32 = 8;

/// First and second moments of a single-mode Gaussian state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianModeState {
    /// `⟨a⟩`.
    pub mean: Complex64,
    /// `⟨aa⟩`.
    pub pair: Complex64,
    /// `⟨a†a⟩`.
    pub occupation: f64,
}

impl GaussianModeState {
    pub fn vacuum() -> Self {
        Self { mean: Complex64::new(0.0, 0.0), pair: Complex64::new(0.0, 0.0), occupation: 0.0 }
    }

    pub fn coherent(alpha: Complex64) -> Self {
        Self { mean: alpha, pair: alpha * alpha, occupation: alpha.norm_sqr() }
    }

    pub fn thermal(n: f64) -> Result<Self> {
        Self::from_central(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), n)
    }

    /// Build from `⟨a⟩`, `⟨⟨aa⟩⟩` and `⟨⟨a†a⟩⟩`, rejecting unphysical moments.
    pub fn from_central(mean: Complex64, central_pair: Complex64, central_occupation: f64) -> Result<Self> {
        let s = Self { mean, pair: central_pair + mean * mean, occupation: central_occupation + mean.norm_sqr() };
        s.validate()?;
        Ok(s)
    }

    pub fn central_pair(&self) -> Complex64 {
        self.pair - self.mean * self.mean
    }

    pub fn central_occupation(&self) -> f64 {
        self.occupation - self.mean.norm_sqr()
    }

    /// Symplectic eigenvalue `ν = sqrt((⟨⟨a†a⟩⟩ + 1/2)² − |⟨⟨aa⟩⟩|²)`.
    pub fn symplectic_eigenvalue(&self) -> f64 {
        symplectic(self.central_occupation(), self.central_pair())
    }

    pub fn entropy(&self) -> f64 {
        von_neumann_entropy(self.symplectic_eigenvalue())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean.re.is_finite() && self.mean.im.is_finite() && self.pair.norm().is_finite())
            || !self.occupation.is_finite()
        {
            return Err(invalid("state", "non-finite moments"));
        }
        let nu = self.symplectic_eigenvalue();
        if !(nu >= 0.5 - POSITIVITY_TOL) {
            return Err(Error::Positivity { time: 0.0, nu });
        }
        Ok(())
    }
}

fn symplectic(nc: f64, mc: Complex64) -> f64 {
    let h = nc + 0.5;
    (h * h - mc.norm_sqr()).max(0.0).sqrt()
}

/// `S(ν) = (ν+½)ln(ν+½) − (ν−½)ln(ν−½)`, zero for pure states.
pub fn von_neumann_entropy(nu: f64) -> f64 {
    let p = nu + 0.5;
    let m = nu - 0.5;
    let head = if p > 0.0 { p * p.ln() } else { 0.0 };
    let tail = if m > 0.0 { m * m.ln() } else { 0.0 };
    head - tail
}

/// Moments and their time derivatives on a grid.
#[derive(Debug, Clone)]
pub struct MomentSeries {
    pub grid: TimeGrid,
    pub mean: Vec<Complex64>,
    pub pair: Vec<Complex64>,
    pub occupation: Vec<f64>,
    pub mean_dot: Vec<Complex64>,
    pub pair_dot: Vec<Complex64>,
    pub occupation_dot: Vec<f64>,
}

impl MomentSeries {
    pub fn state(&self, k: usize) -> GaussianModeState {
        GaussianModeState { mean: self.mean[k], pair: self.pair[k], occupation: self.occupation[k] }
    }

    pub fn central_occupation(&self) -> Vec<f64> {
        (0..self.mean.len()).map(|k| self.state(k).central_occupation()).collect()
    }

    pub fn symplectic_eigenvalues(&self) -> Vec<f64> {
        (0..self.mean.len()).map(|k| self.state(k).symplectic_eigenvalue()).collect()
    }

    pub fn entropy(&self) -> Vec<f64> {
        self.symplectic_eigenvalues().into_iter().map(von_neumann_entropy).collect()
    }

    /// `Ṡ = ln((ν+½)/(ν−½)) ν̇`, with `ν̇` from the moment derivatives.
    /// Pure instants, where the logarithm diverges while `ν̇` vanishes, give 0.
    pub fn entropy_rate(&self) -> Vec<f64> {
        (0..self.mean.len())
            .map(|k| {
                let a = self.mean[k];
                let ad = self.mean_dot[k];
                let nc = self.occupation[k] - a.norm_sqr();
                let mc = self.pair[k] - a * a;
                let ncd = self.occupation_dot[k] - 2.0 * (a.conj() * ad).re;
                let mcd = self.pair_dot[k] - 2.0 * a * ad;
                let nu = symplectic(nc, mc);
                if nu - 0.5 <= 1e-14 {
                    return 0.0;
                }
                let nud = ((nc + 0.5) * ncd - (mc.conj() * mcd).re) / nu;
                ((nu + 0.5) / (nu - 0.5)).ln() * nud
            })
            .collect()
    }

    fn check_positivity(&self) -> Result<()> {
        for (k, nu) in self.symplectic_eigenvalues().into_iter().enumerate() {
            if !(nu >= 0.5 - POSITIVITY_TOL) {
                return Err(Error::Positivity { time: self.grid.t(k), nu });
            }
        }
        Ok(())
    }
}

/// Exact moments from G and the convolution sources.
pub fn propagate_closed_form(
    state0: &GaussianModeState,
    g: &GreenFunction,
    sources: &MomentSources,
) -> Result<MomentSeries> {
    state0.validate()?;
    let grid = *g.grid();
    if sources.grid != grid {
        return Err(Error::GridMismatch("sources and Green function use different grids".into()));
    }
    let n = grid.len();
    let a0 = state0.mean;
    let m0 = state0.central_pair();
    let n0 = state0.central_occupation();
    let mut out = MomentSeries {
        grid,
        mean: Vec::with_capacity(n),
        pair: Vec::with_capacity(n),
        occupation: Vec::with_capacity(n),
        mean_dot: Vec::with_capacity(n),
        pair_dot: Vec::with_capacity(n),
        occupation_dot: Vec::with_capacity(n),
    };
    for k in 0..n {
        let (gk, gd) = (g.g()[k], g.gdot()[k]);
        let a = gk * a0 + sources.displacement[k];
        let ad = gd * a0 + sources.displacement_dot[k];
        let mc = gk * gk * m0 - sources.squeeze[k];
        let mcd = 2.0 * gk * gd * m0 - sources.squeeze_dot[k];
        let nc = gk.norm_sqr() * n0 + sources.noise[k];
        let ncd = 2.0 * (gd * gk.conj()).re * n0 + sources.noise_dot[k];
        out.mean.push(a);
        out.mean_dot.push(ad);
        out.pair.push(mc + a * a);
        out.pair_dot.push(mcd + 2.0 * a * ad);
        out.occupation.push(nc + a.norm_sqr());
        out.occupation_dot.push(ncd + 2.0 * (a.conj() * ad).re);
    }
    out.check_positivity()?;
    Ok(out)
}

#[derive(Clone, Copy)]
struct Moments {
    a: Complex64,
    m: Complex64,
    n: f64,
}

impl Moments {
    fn axpy(self, h: f64, d: Moments) -> Moments {
        Moments { a: self.a + d.a * h, m: self.m + d.m * h, n: self.n + d.n * h }
    }

    fn finite(&self) -> bool {
        self.a.re.is_finite()
            && self.a.im.is_finite()
            && self.m.re.is_finite()
            && self.m.im.is_finite()
            && self.n.is_finite()
    }
}

struct Coeffs<'a> {
    l: &'a [Complex64],
    gamma_n: &'a [f64],
    f: &'a [Complex64],
    delta: &'a [Complex64],
}

impl Coeffs<'_> {
    /// Right-hand side at fractional grid index `x`.
    fn rhs(&self, x: f64, y: Moments) -> Moments {
        let (l, gn, f, d) = if x.fract() == 0.0 {
            let k = x as usize;
            (self.l[k], self.gamma_n[k], self.f[k], self.delta[k])
        } else {
            (
                interp_cubic(self.l, x),
                interp_cubic(self.gamma_n, x),
                interp_cubic(self.f, x),
                interp_cubic(self.delta, x),
            )
        };
        Moments {
            a: l * y.a + f,
            m: 2.0 * l * y.m + 2.0 * f * y.a - d,
            n: 2.0 * l.re * y.n + gn + 2.0 * (f * y.a.conj()).re,
        }
    }
}

/// Integrate the master-equation moment ODEs with classical RK4.
///
/// Coefficients between grid points come from 4-point cubic interpolation.
/// A step that produces non-finite or unphysical moments is retried with
/// 2, 4, ... substeps, up to 8 halvings.
pub fn propagate_ode(state0: &GaussianModeState, c: &CoefficientSeries) -> Result<MomentSeries> {
    state0.validate()?;
    let grid = c.grid;
    let n = grid.len();
    let co = Coeffs { l: &c.log_deriv, gamma_n: &c.gamma_n, f: &c.force, delta: &c.delta };
    let mut y = Moments { a: state0.mean, m: state0.pair, n: state0.occupation };
    let mut out = MomentSeries {
        grid,
        mean: vec![y.a],
        pair: vec![y.m],
        occupation: vec![y.n],
        mean_dot: Vec::with_capacity(n),
        pair_dot: Vec::with_capacity(n),
        occupation_dot: Vec::with_capacity(n),
    };
    for k in 0..grid.steps() {
        let mut done = None;
        for halving in 0..=MAX_HALVINGS {
            let sub = 1usize << halving;
            let h = grid.dt() / sub as f64;
            let dx = 1.0 / sub as f64;
            let mut z = y;
            for s in 0..sub {
                let x = k as f64 + s as f64 * dx;
                let k1 = co.rhs(x, z);
                let k2 = co.rhs(x + 0.5 * dx, z.axpy(0.5 * h, k1));
                let k3 = co.rhs(x + 0.5 * dx, z.axpy(0.5 * h, k2));
                let k4 = co.rhs(x + dx, z.axpy(h, k3));
                z = Moments {
                    a: z.a + (k1.a + 2.0 * k2.a + 2.0 * k3.a + k4.a) * (h / 6.0),
                    m: z.m + (k1.m + 2.0 * k2.m + 2.0 * k3.m + k4.m) * (h / 6.0),
                    n: z.n + (k1.n + 2.0 * k2.n + 2.0 * k3.n + k4.n) * (h / 6.0),
                };
            }
            let st = GaussianModeState { mean: z.a, pair: z.m, occupation: z.n };
            if z.finite() && st.symplectic_eigenvalue() >= 0.5 - POSITIVITY_TOL {
                if halving > 0 {
                    log::warn!("moment step at t = {} needed {} substeps", grid.t(k), sub);
                }
                done = Some(z);
                break;
            }
        }
        y = done.ok_or(Error::Unstable { time: grid.t(k), retries: MAX_HALVINGS })?;
        out.mean.push(y.a);
        out.pair.push(y.m);
        out.occupation.push(y.n);
    }
    for k in 0..n {
        let d = co.rhs(k as f64, Moments { a: out.mean[k], m: out.pair[k], n: out.occupation[k] });
        out.mean_dot.push(d.a);
        out.pair_dot.push(d.m);
        out.occupation_dot.push(d.n);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{EnvInitState, ModeRef, NoiseOptions, SqueezedMode};
    use crate::green::{green_flat, green_lorentzian_closed, solve_volterra};
    use crate::spectral::{bose, BathMode, FrequencyCutoff, SpectralDensity};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cut() -> FrequencyCutoff {
        FrequencyCutoff::full_axis(0.02, 30.0).unwrap()
    }

    #[test]
    fn entropy_values() {
        assert_eq!(von_neumann_entropy(0.5), 0.0);
        // Thermal state: S = (n+1)ln(n+1) − n ln n with ν = n + 1/2.
        let n: f64 = 0.7;
        assert_abs_diff_eq!(von_neumann_entropy(n + 0.5), (n + 1.0) * (n + 1.0).ln() - n * n.ln(), epsilon = 1e-14);
        let s = GaussianModeState::coherent(Complex64::new(1.5, -0.2));
        assert_abs_diff_eq!(s.symplectic_eigenvalue(), 0.5, epsilon = 1e-14);
        assert!(GaussianModeState::from_central(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), 0.1).is_err());
    }

    #[test]
    fn flat_thermalizes() {
        let grid = TimeGrid::new(0.02, 2000).unwrap();
        let beta = 1.3;
        let g = green_flat(0.5, 1.0, grid).unwrap();
        let env = EnvInitState::thermal(beta).unwrap();
        let c = CoefficientSeries::build(
            &g,
            &env,
            &FrequencyCutoff::full_axis(0.01, 60.0).unwrap(),
            NoiseOptions::default(),
        )
        .unwrap();
        let s0 = GaussianModeState::coherent(Complex64::new(1.0, 0.5));
        let m = propagate_closed_form(&s0, &g, &c.sources).unwrap();
        let last = m.state(grid.steps());
        assert!(last.mean.norm() < 1e-4);
        let lorentz = |w: f64| 0.5 / (2.0 * std::f64::consts::PI) * bose(w, beta) / ((w - 1.0).powi(2) + 0.0625);
        let expect = crate::quad::integrate(lorentz, &[0.01, 1.0, 60.0], Default::default()).unwrap().value;
        assert!((last.occupation - expect).abs() < 1e-3, "{} vs {}", last.occupation, expect);
    }

    #[test]
    fn ode_matches_closed_form_lorentzian_squeezed_displaced() {
        let grid = TimeGrid::new(0.01, 1500).unwrap();
        let g = green_lorentzian_closed(0.3, 0.5, 1.2, 1.0, grid).unwrap();
        let sq = SqueezedMode::squeezed_thermal(
            ModeRef::Explicit { omega: 0.9, coupling: Complex64::new(0.1, 0.05) },
            0.5,
            0.4,
            0.2,
        )
        .unwrap();
        let env = EnvInitState::thermal(1.0)
            .unwrap()
            .with_displaced(
                ModeRef::Explicit { omega: 1.1, coupling: Complex64::new(0.2, 0.0) },
                Complex64::new(1.5, 0.3),
            )
            .with_squeezed(sq);
        let c = CoefficientSeries::build(&g, &env, &cut(), NoiseOptions::default()).unwrap();
        let s0 = GaussianModeState::from_central(Complex64::new(0.3, -0.4), Complex64::new(0.1, 0.2), 0.4).unwrap();
        let exact = propagate_closed_form(&s0, &g, &c.sources).unwrap();
        let ode = propagate_ode(&s0, &c).unwrap();
        for k in 0..grid.len() {
            assert!((exact.mean[k] - ode.mean[k]).norm() < 1e-7, "k={k} {}", (exact.mean[k] - ode.mean[k]).norm());
            assert!((exact.pair[k] - ode.pair[k]).norm() < 1e-7, "k={k}");
            assert!((exact.occupation[k] - ode.occupation[k]).abs() < 1e-7, "k={k}");
            assert!((exact.occupation_dot[k] - ode.occupation_dot[k]).abs() < 1e-7, "k={k}");
            assert!(
                (exact.pair_dot[k] - ode.pair_dot[k]).norm() < 1e-7,
                "k={k} {} {}",
                exact.pair_dot[k],
                ode.pair_dot[k]
            );
        }
        let sdot = exact.entropy_rate();
        let s = exact.entropy();
        for k in 100..1400 {
            let fd = (s[k + 1] - s[k - 1]) / (2.0 * grid.dt());
            assert!((fd - sdot[k]).abs() < 1e-4 * (1.0 + sdot[k].abs()), "k={k}");
        }
    }

    #[test]
    fn ode_matches_closed_form_discrete_volterra() {
        let modes: Vec<BathMode> =
            (0..8).map(|k| BathMode::new(0.7 + 0.1 * k as f64, Complex64::new(0.04, 0.01))).collect();
        let j = SpectralDensity::discrete(modes).unwrap();
        let grid = TimeGrid::new(0.005, 2000).unwrap();
        let cutoff = FrequencyCutoff::window(0.0, 3.0).unwrap();
        let g = solve_volterra(&j, 1.0, grid, &cutoff).unwrap();
        let env = EnvInitState::thermal(0.8).unwrap().with_displaced(ModeRef::Index(3), Complex64::new(0.0, 2.0));
        let c = CoefficientSeries::build(&g, &env, &cutoff, NoiseOptions::default()).unwrap();
        let s0 = GaussianModeState::thermal(0.2).unwrap();
        let exact = propagate_closed_form(&s0, &g, &c.sources).unwrap();
        let ode = propagate_ode(&s0, &c).unwrap();
        for k in 0..grid.len() {
            assert!((exact.mean[k] - ode.mean[k]).norm() < 1e-7);
            assert!((exact.occupation[k] - ode.occupation[k]).abs() < 1e-7);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn closed_form_preserves_positivity(
            gamma0 in 0.05f64..2.0,
            eta in 0.1f64..2.0,
            det in -1.0f64..1.0,
            beta in 0.3f64..5.0,
            re in -2.0f64..2.0,
            r in 0.0f64..1.0,
            n0 in 0.0f64..2.0,
        ) {
            let grid = TimeGrid::new(0.05, 200).unwrap();
            let g = green_lorentzian_closed(gamma0, eta, 1.0 - det, 1.0, grid).unwrap();
            let env = EnvInitState::thermal(beta).unwrap();
            let s = crate::coefficients::moment_sources(&g, &env, &cut(), NoiseOptions::default()).unwrap();
            let h = n0 + 0.5;
            let s0 = GaussianModeState::from_central(
                Complex64::new(re, 0.3),
                Complex64::new(-h * (2.0 * r).sinh(), 0.0),
                h * (2.0 * r).cosh() - 0.5,
            ).unwrap();
            let m = propagate_closed_form(&s0, &g, &s).unwrap();
            for nu in m.symplectic_eigenvalues() {
                prop_assert!(nu >= 0.5 - 1e-10);
            }
        }
    }
}
