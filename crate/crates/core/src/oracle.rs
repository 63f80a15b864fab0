//! Exact one-particle evolution of the full system + discrete bath model.
//!
//! The one-particle matrix `h = [[ω0, g], [g†, diag(ω)]]` is an arrowhead
//! matrix. Its eigenvalues are the roots of the secular function
//! `s(λ) = λ − ω0 − Σ_p w_p/(λ − p)`, one between each pair of distinct
//! coupled frequencies `p`. Every root is stored as the nearest pole plus an
//! offset, so `λ − p` is accurate even when the root hugs a pole.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::coefficients::EnvInitState;
use crate::dynamics::{GaussianModeState, MomentSeries};
use crate::error::{invalid, Error, Result};
use crate::grid::TimeGrid;
use crate::spectral::{bose, BathMode};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative gap below which two bath frequencies are merged.
const MERGE_TOL: f64 = 1e-13;

/// A finite bath with its initial state.
#[derive(Debug, Clone)]
pub struct DiscreteBathScenario {
    pub omega0: f64,
    pub modes: Vec<BathMode>,
    pub env: EnvInitState,
    spectrum: OnceLock<ArrowheadSpectrum>,
    dense: OnceLock<DenseSpectrum>,
}

impl DiscreteBathScenario {
    pub fn new(omega0: f64, modes: Vec<BathMode>, env: EnvInitState) -> Result<Self> {
        if modes.is_empty() {
            return Err(invalid("modes", "need at least one bath mode"));
        }
        if !omega0.is_finite() || modes.iter().any(|m| !m.omega.is_finite() || !m.coupling.norm().is_finite()) {
            return Err(invalid("modes", "frequencies and couplings must be finite"));
        }
        Ok(Self { omega0, modes, env, spectrum: OnceLock::new(), dense: OnceLock::new() })
    }

    /// `2π/Δω` for the smallest gap between sorted distinct frequencies.
    pub fn recurrence_time(&self) -> f64 {
        let mut w: Vec<f64> = self.modes.iter().map(|m| m.omega).collect();
        w.sort_by(f64::total_cmp);
        let gap = w.windows(2).map(|p| p[1] - p[0]).filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
        if gap.is_finite() {
            2.0 * std::f64::consts::PI / gap
        } else {
            f64::INFINITY
        }
    }

    pub fn spectrum(&self) -> &ArrowheadSpectrum {
        self.spectrum.get_or_init(|| ArrowheadSpectrum::new(self.omega0, &self.modes))
    }

    fn dense(&self) -> &DenseSpectrum {
        self.dense.get_or_init(|| DenseSpectrum::new(self.omega0, &self.modes))
    }

    /// `U(t) = exp(−i h t)` from a dense eigendecomposition, row/column 0 the system.
    pub fn one_particle_propagator(&self, t: f64) -> Result<DMatrix<Complex64>> {
        if !(t >= 0.0) {
            return Err(invalid("t", "must be nonnegative"));
        }
        Ok(self.dense().propagator(t))
    }
}

/// Eigen-data of the arrowhead matrix.
#[derive(Debug, Clone)]
pub struct ArrowheadSpectrum {
    /// Distinct coupled frequencies and their merged weights `Σ|g|²`.
    poles: Vec<f64>,
    weights: Vec<f64>,
    /// For each eigenvalue: anchor pole index and the offset from it.
    anchor: Vec<usize>,
    offset: Vec<f64>,
    /// `|V_0m|² = 1/s'(λ_m)`.
    overlap: Vec<f64>,
    /// Pole index of every bath mode, `None` when the mode is decoupled.
    mode_pole: Vec<Option<usize>>,
    omega0: f64,
}

impl ArrowheadSpectrum {
    pub fn new(omega0: f64, modes: &[BathMode]) -> Self {
        let mut order: Vec<usize> = (0..modes.len()).filter(|&k| modes[k].coupling.norm_sqr() > 0.0).collect();
        order.sort_by(|&a, &b| modes[a].omega.total_cmp(&modes[b].omega));
        let mut poles: Vec<f64> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let mut mode_pole = vec![None; modes.len()];
        for k in order {
            let w = modes[k].omega;
            let merge = poles.last().is_some_and(|p| (w - p).abs() <= MERGE_TOL * w.abs().max(1.0));
            if !merge {
                poles.push(w);
                weights.push(0.0);
            }
            *weights.last_mut().unwrap() += modes[k].coupling.norm_sqr();
            mode_pole[k] = Some(poles.len() - 1);
        }
        let mut s =
            Self { poles, weights, anchor: Vec::new(), offset: Vec::new(), overlap: Vec::new(), mode_pole, omega0 };
        if s.poles.is_empty() {
            return s;
        }
        let norm = s.weights.iter().sum::<f64>().sqrt();
        let lo = s.poles[0].min(omega0) - norm - 1.0;
        let hi = s.poles[s.poles.len() - 1].max(omega0) + norm + 1.0;
        let np = s.poles.len();
        let roots: Vec<(usize, f64)> = (0..=np)
            .into_par_iter()
            .map(|i| {
                if i == 0 {
                    s.solve(0, lo - s.poles[0], 0.0)
                } else if i == np {
                    s.solve(np - 1, 0.0, hi - s.poles[np - 1])
                } else {
                    let gap = s.poles[i] - s.poles[i - 1];
                    // Pick the anchor on the side where the root lies.
                    let mid = s.eval(i - 1, 0.5 * gap).0;
                    if mid > 0.0 {
                        s.solve(i - 1, 0.0, 0.5 * gap)
                    } else {
                        s.solve(i, -0.5 * gap, 0.0)
                    }
                }
            })
            .collect();
        for (a, t) in roots {
            let d = s.eval(a, t).1;
            s.anchor.push(a);
            s.offset.push(t);
            s.overlap.push(1.0 / d);
        }
        s
    }

    /// `(s, s')` at `λ = p_a + τ`.
    fn eval(&self, a: usize, tau: f64) -> (f64, f64) {
        let pa = self.poles[a];
        let mut val = pa + tau - self.omega0;
        let mut der = 1.0;
        for (j, (&p, &w)) in self.poles.iter().zip(&self.weights).enumerate() {
            let d = if j == a { tau } else { (pa - p) + tau };
            let r = w / d;
            val -= r;
            der += r / d;
        }
        (val, der)
    }

    /// Safeguarded Newton on the increasing function `s(p_a + τ)` within `(lo, hi)`.
    fn solve(&self, a: usize, mut lo: f64, mut hi: f64) -> (usize, f64) {
        let mut tau = 0.5 * (lo + hi);
        for _ in 0..200 {
            let (f, d) = self.eval(a, tau);
            if f == 0.0 {
                break;
            }
            if f > 0.0 {
                hi = tau;
            } else {
                lo = tau;
            }
            let newton = tau - f / d;
            let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if (next - tau).abs() <= 4.0 * f64::EPSILON * tau.abs().max(f64::MIN_POSITIVE) || hi - lo <= 0.0 {
                tau = next;
                break;
            }
            tau = next;
        }
        (a, tau)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.poles.is_empty() {
            return vec![self.omega0];
        }
        self.anchor.iter().zip(&self.offset).map(|(a, t)| self.poles[*a] + t).collect()
    }

    /// `|V_0m|²` for each eigenvalue in [`Self::eigenvalues`] order.
    pub fn overlaps(&self) -> Vec<f64> {
        if self.poles.is_empty() {
            return vec![1.0];
        }
        self.overlap.clone()
    }

    /// `U_00(t)` and `U_0k(t)` for every bath mode.
    pub fn system_row(&self, modes: &[BathMode], t: f64) -> (Complex64, Vec<Complex64>) {
        if self.poles.is_empty() {
            return (Complex64::from_polar(1.0, -self.omega0 * t), vec![ZERO; modes.len()]);
        }
        let c: Vec<Complex64> = self
            .anchor
            .iter()
            .zip(&self.offset)
            .zip(&self.overlap)
            .map(|((a, tau), v)| {
                // e^{−iλt} with λ = p + τ, phases split to keep p·t and τ·t separate.
                Complex64::from_polar(*v, -self.poles[*a] * t) * Complex64::from_polar(1.0, -tau * t)
            })
            .collect();
        let u00 = c.iter().sum();
        let per_pole: Vec<Complex64> = (0..self.poles.len())
            .map(|p| {
                let mut acc = ZERO;
                for (m, cm) in c.iter().enumerate() {
                    let a = self.anchor[m];
                    let d = if a == p { self.offset[m] } else { (self.poles[a] - self.poles[p]) + self.offset[m] };
                    acc += cm / d;
                }
                acc
            })
            .collect();
        let row = modes
            .iter()
            .zip(&self.mode_pole)
            .map(|(m, p)| match p {
                Some(p) => m.coupling * per_pole[*p],
                None => ZERO,
            })
            .collect();
        (u00, row)
    }
}

#[derive(Debug, Clone)]
struct DenseSpectrum {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    phases: Vec<Complex64>,
}

impl DenseSpectrum {
    /// Gauge the couplings real, `g_k = |g_k| e^{iφ_k}`, then diagonalize.
    fn new(omega0: f64, modes: &[BathMode]) -> Self {
        let n = modes.len() + 1;
        let mut h = DMatrix::<f64>::zeros(n, n);
        h[(0, 0)] = omega0;
        let mut phases = vec![Complex64::new(1.0, 0.0)];
        for (k, m) in modes.iter().enumerate() {
            let b = m.coupling.norm();
            h[(0, k + 1)] = b;
            h[(k + 1, 0)] = b;
            h[(k + 1, k + 1)] = m.omega;
            phases.push(if b > 0.0 { m.coupling / b } else { Complex64::new(1.0, 0.0) });
        }
        let e = SymmetricEigen::new(h);
        Self { values: e.eigenvalues.iter().copied().collect(), vectors: e.eigenvectors, phases }
    }

    fn propagator(&self, t: f64) -> DMatrix<Complex64> {
        let n = self.values.len();
        let ph: Vec<Complex64> = self.values.iter().map(|l| Complex64::from_polar(1.0, -l * t)).collect();
        DMatrix::from_fn(n, n, |i, j| {
            let mut acc = ZERO;
            for m in 0..n {
                acc += ph[m] * (self.vectors[(i, m)] * self.vectors[(j, m)]);
            }
            // Undo the gauge: h = D h' D†, D = diag(1, e^{−iφ_k}).
            acc * self.phases[i].conj() * self.phases[j]
        })
    }
}

/// `G(t) = U_00(t)` on a grid.
pub fn oracle_green(s: &DiscreteBathScenario, grid: &TimeGrid) -> Vec<Complex64> {
    let sp = s.spectrum();
    let lam = sp.eigenvalues();
    let v = sp.overlaps();
    grid.times()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|t| lam.iter().zip(&v).map(|(l, w)| Complex64::from_polar(*w, -l * t)).sum())
        .collect()
}

/// Exact central-mode moments for a product Gaussian initial state.
///
/// The oracle yields no time derivatives; those fields are left at zero.
pub fn oracle_moments(s: &DiscreteBathScenario, state0: &GaussianModeState, grid: &TimeGrid) -> Result<MomentSeries> {
    state0.validate()?;
    let env = s.env.discrete_moments(&s.modes)?;
    let sp = s.spectrum();
    let a0 = state0.mean;
    let m0 = state0.central_pair();
    let n0 = state0.central_occupation();
    let rows: Vec<(Complex64, Complex64, f64)> = grid
        .times()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&t| {
            let (u00, row) = sp.system_row(&s.modes, t);
            let mut a = u00 * a0;
            let mut mc = u00 * u00 * m0;
            let mut nc = u00.norm_sqr() * n0;
            for (u, (alpha, n, m)) in row.iter().zip(&env) {
                a += u * alpha;
                mc += u * u * m;
                nc += u.norm_sqr() * n;
            }
            (a, mc + a * a, nc + a.norm_sqr())
        })
        .collect();
    let n = grid.len();
    Ok(MomentSeries {
        grid: *grid,
        mean: rows.iter().map(|r| r.0).collect(),
        pair: rows.iter().map(|r| r.1).collect(),
        occupation: rows.iter().map(|r| r.2).collect(),
        mean_dot: vec![ZERO; n],
        pair_dot: vec![ZERO; n],
        occupation_dot: vec![0.0; n],
    })
}

/// Reduced occupation of the global Gibbs state, `Σ_m |V_0m|² n_B(λ_m)`.
pub fn oracle_global_gibbs_expectation(s: &DiscreteBathScenario, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(invalid("beta", "must be positive"));
    }
    let sp = s.spectrum();
    let lam = sp.eigenvalues();
    let min = lam.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        return Err(Error::UnstableHamiltonian { eigenvalue: min });
    }
    Ok(lam.iter().zip(sp.overlaps()).map(|(l, v)| v * bose(*l, beta)).sum())
}

/// Deviation summary between a reference and a candidate series.
#[derive(Debug, Clone, Serialize)]
pub struct Deviation {
    pub green: f64,
    pub mean: f64,
    pub pair: f64,
    pub occupation: f64,
}

/// Largest absolute moment deviations over samples with `t ≤ t_limit`.
pub fn moment_deviation(a: &MomentSeries, b: &MomentSeries, t_limit: f64) -> Deviation {
    let mut d = Deviation { green: 0.0, mean: 0.0, pair: 0.0, occupation: 0.0 };
    for k in 0..a.mean.len().min(b.mean.len()) {
        if a.grid.t(k) > t_limit {
            break;
        }
        d.mean = d.mean.max((a.mean[k] - b.mean[k]).norm());
        d.pair = d.pair.max((a.pair[k] - b.pair[k]).norm());
        d.occupation = d.occupation.max((a.occupation[k] - b.occupation[k]).abs());
    }
    d
}

/// Populations `⟨b_k†b_k⟩_t` of every mode (system first) when only one
/// excitation is present initially in the system.
pub fn single_excitation_populations(s: &DiscreteBathScenario, t: f64) -> Result<Vec<f64>> {
    let u = s.one_particle_propagator(t)?;
    Ok((0..u.nrows()).map(|k| u[(k, 0)].norm_sqr()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    const I: Complex64 = Complex64::new(0.0, 1.0);
    use crate::coefficients::{ModeRef, NoiseOptions, SqueezedMode};
    use crate::green::solve_volterra;
    use crate::spectral::{FrequencyCutoff, SpectralDensity};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn free_phase(omega: f64, t: f64) -> Complex64 {
        (-I * omega * t).exp()
    }

    fn scenario(modes: Vec<BathMode>) -> DiscreteBathScenario {
        DiscreteBathScenario::new(1.0, modes, EnvInitState::zero_temperature()).unwrap()
    }

    fn random_modes(n: usize, seed: u64) -> Vec<BathMode> {
        use rand::{Rng, SeedableRng};
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                BathMode::new(
                    r.gen_range(0.2..2.0),
                    Complex64::from_polar(r.gen_range(0.0..0.2), r.gen_range(0.0..6.0)),
                )
            })
            .collect()
    }

    #[test]
    fn resonant_single_mode() {
        let g = 0.3;
        let s = scenario(vec![BathMode::new(1.0, Complex64::new(0.0, g))]);
        let grid = TimeGrid::new(0.1, 100).unwrap();
        let gr = oracle_green(&s, &grid);
        for (k, t) in grid.times().enumerate() {
            assert!((gr[k] - (g * t).cos() * free_phase(1.0, t)).norm() < 1e-13);
        }
    }

    #[test]
    fn arrowhead_matches_dense() {
        let mut modes = random_modes(40, 7);
        modes.push(BathMode::new(modes[3].omega, Complex64::new(0.05, 0.0)));
        modes.push(BathMode::new(1.7, ZERO));
        let s = scenario(modes.clone());
        for t in [0.0, 0.7, 13.0] {
            let u = s.one_particle_propagator(t).unwrap();
            let (u00, row) = s.spectrum().system_row(&modes, t);
            assert!((u00 - u[(0, 0)]).norm() < 1e-12);
            for k in 0..modes.len() {
                assert!((row[k] - u[(0, k + 1)]).norm() < 1e-12, "t={t} k={k}");
            }
        }
        let u = s.one_particle_propagator(0.0).unwrap();
        let id = DMatrix::<Complex64>::identity(modes.len() + 1, modes.len() + 1);
        assert!((u - id).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn decoupled_bath_gives_free_phases() {
        let modes = vec![BathMode::new(0.5, ZERO), BathMode::new(1.5, ZERO)];
        let s = scenario(modes);
        let u = s.one_particle_propagator(2.0).unwrap();
        assert!((u[(0, 0)] - free_phase(1.0, 2.0)).norm() < 1e-14);
        assert!((u[(2, 2)] - free_phase(1.5, 2.0)).norm() < 1e-14);
        assert!(u[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn gibbs_oracle_limits() {
        let s = scenario(vec![BathMode::new(0.8, ZERO)]);
        assert_abs_diff_eq!(oracle_global_gibbs_expectation(&s, 2.0).unwrap(), bose(1.0, 2.0), epsilon = 1e-15);
        assert_eq!(oracle_global_gibbs_expectation(&s, f64::INFINITY).unwrap(), 0.0);
        let unstable = scenario(vec![BathMode::new(0.1, Complex64::new(1.0, 0.0))]);
        assert!(matches!(oracle_global_gibbs_expectation(&unstable, 1.0), Err(Error::UnstableHamiltonian { .. })));
    }

    #[test]
    fn oracle_green_matches_volterra_to_second_order() {
        let modes = random_modes(12, 3);
        let s = scenario(modes.clone());
        let j = SpectralDensity::discrete(modes).unwrap();
        let cut = FrequencyCutoff::window(0.0, 3.0).unwrap();
        let mut errs = Vec::new();
        for steps in [1000, 2000] {
            let grid = TimeGrid::new(10.0 / steps as f64, steps).unwrap();
            let v = solve_volterra(&j, 1.0, grid, &cut).unwrap();
            let o = oracle_green(&s, &grid);
            errs.push(v.g().iter().zip(&o).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
        }
        let order = (errs[0] / errs[1]).log2();
        assert!((order - 2.0).abs() < 0.2, "{errs:?}");
        assert!(errs[1] < 1e-5);
    }

    #[test]
    fn oracle_matches_closed_form_moments() {
        let modes = random_modes(10, 11);
        let sq = SqueezedMode::squeezed_thermal(ModeRef::Index(2), 0.3, 0.4, bose(modes[2].omega, 1.5)).unwrap();
        let env = EnvInitState::thermal(1.5)
            .unwrap()
            .with_displaced(ModeRef::Index(5), Complex64::new(1.0, -2.0))
            .with_squeezed(sq);
        let s = DiscreteBathScenario::new(1.0, modes.clone(), env.clone()).unwrap();
        let grid = TimeGrid::new(0.002, 5000).unwrap();
        let j = SpectralDensity::discrete(modes).unwrap();
        let cut = FrequencyCutoff::window(0.0, 3.0).unwrap();
        let g = solve_volterra(&j, 1.0, grid, &cut).unwrap();
        let src = crate::coefficients::moment_sources(&g, &env, &cut, NoiseOptions::default()).unwrap();
        let s0 = GaussianModeState::from_central(Complex64::new(0.2, 0.1), Complex64::new(0.1, 0.0), 0.3).unwrap();
        let exact = crate::dynamics::propagate_closed_form(&s0, &g, &src).unwrap();
        let o = oracle_moments(&s, &s0, &grid).unwrap();
        let d = moment_deviation(&exact, &o, f64::INFINITY);
        assert!(d.mean < 1e-5 && d.pair < 1e-5 && d.occupation < 1e-5, "{d:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn excitation_is_conserved(seed in 0u64..1000, t in 0.0f64..50.0) {
            let s = scenario(random_modes(15, seed));
            let p = single_excitation_populations(&s, t).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            let (u00, row) = s.spectrum().system_row(&s.modes, t);
            let total = u00.norm_sqr() + row.iter().map(|u| u.norm_sqr()).sum::<f64>();
            prop_assert!((total - 1.0).abs() < 1e-10);
        }
    }
}
