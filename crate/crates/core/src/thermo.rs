//! First-law bookkeeping, renormalized temperature and entropy production.

use num_complex::Complex64;
use serde::Serialize;

use crate::coefficients::CoefficientSeries;
use crate::dynamics::MomentSeries;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::quad::{cumulative, CumulativeRule};

/// Rule used for every cumulative time integral of the ledger.
pub const LEDGER_RULE: CumulativeRule = CumulativeRule::Cubic;

/// `U = ω_r n + i f ⟨a⟩* − i f* ⟨a⟩`.
pub fn internal_energy(c: &CoefficientSeries, m: &MomentSeries) -> Vec<f64> {
    (0..m.mean.len()).map(|k| c.omega_r[k] * m.occupation[k] - 2.0 * (c.force[k] * m.mean[k].conj()).im).collect()
}

/// `Ẇ = ω̇_r n + i ḟ ⟨a⟩* − i ḟ* ⟨a⟩`.
pub fn work_rate(c: &CoefficientSeries, m: &MomentSeries) -> Vec<f64> {
    (0..m.mean.len())
        .map(|k| c.omega_r_dot[k] * m.occupation[k] - 2.0 * (c.force_dot[k] * m.mean[k].conj()).im)
        .collect()
}

/// Heat rate from the dissipator, `ω_r γ (N − n) + γ Im(f ⟨a⟩*)`, written with
/// `γN = γI + İ` so it stays finite where γ vanishes.
pub fn dissipator_heat_rate(c: &CoefficientSeries, m: &MomentSeries) -> Vec<f64> {
    (0..m.mean.len())
        .map(|k| {
            let g = c.gamma[k];
            c.omega_r[k] * (c.gamma_n[k] - g * m.occupation[k]) + g * (c.force[k] * m.mean[k].conj()).im
        })
        .collect()
}

/// `β_r = ln((N+1)/N)/ω_r`, flagged where N is undefined or not positive.
pub fn renormalized_temperature(c: &CoefficientSeries) -> (Vec<f64>, Vec<bool>) {
    c.n_bath
        .iter()
        .zip(&c.n_defined)
        .zip(&c.omega_r)
        .map(|((n, d), w)| if *d && *n > 0.0 && *w != 0.0 { ((1.0 / n).ln_1p() / w, true) } else { (f64::NAN, false) })
        .unzip()
}

/// Moment right-hand sides evaluated at the renormalized Gibbs state
/// `(⟨a⟩, ⟨aa⟩, ⟨a†a⟩) = (0, 0, N(t))`.
pub fn gibbs_fixed_point_residual(c: &CoefficientSeries, k: usize) -> Result<(Complex64, Complex64, f64)> {
    if !c.n_defined[k] {
        return Err(Error::Unsupported(format!("N undefined at t = {}", c.grid.t(k))));
    }
    Ok((c.force[k], -c.delta[k], c.gamma_n[k] - c.gamma[k] * c.n_bath[k]))
}

/// `Σ = ΔS − ∫ β_r Q̇` accumulated over the intervals where β_r is defined
/// at both ends, with the flow by the trapezoid rule; also returns the
/// covered fraction of `[0, t_max]`.
pub fn entropy_production(
    grid: &TimeGrid,
    entropy: &[f64],
    entropy_rate: &[f64],
    heat_rate: &[f64],
    beta_r: &[f64],
    beta_defined: &[bool],
) -> (Vec<f64>, Vec<f64>, f64) {
    let n = entropy.len();
    let dt = grid.dt();
    let mut sigma_cum = vec![0.0; n];
    let mut covered = 0usize;
    for k in 1..n {
        let inc = if beta_defined[k - 1] && beta_defined[k] {
            covered += 1;
            let flow = 0.5 * dt * (beta_r[k - 1] * heat_rate[k - 1] + beta_r[k] * heat_rate[k]);
            entropy[k] - entropy[k - 1] - flow
        } else {
            0.0
        };
        sigma_cum[k] = sigma_cum[k - 1] + inc;
    }
    let rate =
        (0..n).map(|k| if beta_defined[k] { entropy_rate[k] - beta_r[k] * heat_rate[k] } else { f64::NAN }).collect();
    (sigma_cum, rate, covered as f64 / (n - 1) as f64)
}

/// Full thermodynamic ledger of one run.
#[derive(Debug, Clone, Serialize)]
pub struct ThermoRecord {
    pub grid: TimeGrid,
    pub internal_energy: Vec<f64>,
    pub work_rate: Vec<f64>,
    pub work: Vec<f64>,
    /// `Q = ΔU − W`.
    pub heat: Vec<f64>,
    /// Dissipator heat rate and its time integral.
    pub heat_rate: Vec<f64>,
    pub heat_from_rate: Vec<f64>,
    /// `ω_r γN` and `ω_r γ n`.
    pub heat_in: Vec<f64>,
    pub heat_out: Vec<f64>,
    pub beta_r: Vec<f64>,
    pub beta_r_defined: Vec<bool>,
    pub entropy: Vec<f64>,
    pub entropy_rate: Vec<f64>,
    pub entropy_production: Vec<f64>,
    pub entropy_production_rate: Vec<f64>,
    pub beta_coverage: f64,
}

impl ThermoRecord {
    pub fn build(c: &CoefficientSeries, m: &MomentSeries) -> Result<Self> {
        if c.grid != m.grid {
            return Err(Error::GridMismatch("coefficients and moments use different grids".into()));
        }
        let dt = c.grid.dt();
        let u = internal_energy(c, m);
        let wd = work_rate(c, m);
        let w = cumulative(&wd, dt, LEDGER_RULE);
        let heat: Vec<f64> = (0..u.len()).map(|k| u[k] - u[0] - w[k]).collect();
        let qd = dissipator_heat_rate(c, m);
        let heat_from_rate = cumulative(&qd, dt, LEDGER_RULE);
        let heat_in: Vec<f64> = c.gamma_n.iter().zip(&c.omega_r).map(|(g, w)| g * w).collect();
        let heat_out: Vec<f64> = (0..u.len()).map(|k| c.omega_r[k] * c.gamma[k] * m.occupation[k]).collect();
        let (beta_r, beta_r_defined) = renormalized_temperature(c);
        let entropy = m.entropy();
        let entropy_rate = m.entropy_rate();
        let (sigma, sigma_rate, coverage) =
            entropy_production(&c.grid, &entropy, &entropy_rate, &qd, &beta_r, &beta_r_defined);
        Ok(Self {
            grid: c.grid,
            internal_energy: u,
            work_rate: wd,
            work: w,
            heat,
            heat_rate: qd,
            heat_from_rate,
            heat_in,
            heat_out,
            beta_r,
            beta_r_defined,
            entropy,
            entropy_rate,
            entropy_production: sigma,
            entropy_production_rate: sigma_rate,
            beta_coverage: coverage,
        })
    }

    /// Largest `|ΔU − W − Q| / max(1, |ΔU|)` over the grid.
    pub fn first_law_residual(&self) -> f64 {
        self.relative_residual(&self.heat)
    }

    /// Largest `|ΔU − W − ∫Q̇_D| / max(1, |ΔU|)`: the heat from the
    /// dissipator trace against first-law closure.
    pub fn dissipator_residual(&self) -> f64 {
        self.relative_residual(&self.heat_from_rate)
    }

    fn relative_residual(&self, heat: &[f64]) -> f64 {
        let u0 = self.internal_energy[0];
        (0..self.internal_energy.len())
            .map(|k| {
                let du = self.internal_energy[k] - u0;
                (du - self.work[k] - heat[k]).abs() / du.abs().max(1.0)
            })
            .fold(0.0, f64::max)
    }

    /// Most negative entropy production rate with its time, if any sample is below `threshold`.
    pub fn negative_rate_witness(&self, threshold: f64) -> Option<(f64, f64)> {
        self.entropy_production_rate
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_finite() && **s < threshold)
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, s)| (self.grid.t(k), *s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{EnvInitState, ModeRef, NoiseOptions};
    use crate::dynamics::{propagate_closed_form, GaussianModeState};
    use crate::green::{green_flat, green_lorentzian_closed};
    use crate::spectral::{bose, FrequencyCutoff};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn run(
        g: &crate::green::GreenFunction,
        env: &EnvInitState,
        s0: GaussianModeState,
    ) -> (CoefficientSeries, ThermoRecord) {
        let cut = FrequencyCutoff::full_axis(0.02, 40.0).unwrap();
        let c = CoefficientSeries::build(g, env, &cut, NoiseOptions::default()).unwrap();
        let m = propagate_closed_form(&s0, g, &c.sources).unwrap();
        let t = ThermoRecord::build(&c, &m).unwrap();
        (c, t)
    }

    #[test]
    fn zero_coupling_coherent_energy() {
        let grid = TimeGrid::new(0.01, 200).unwrap();
        let g = green_flat(0.0, 1.3, grid).unwrap();
        let alpha = Complex64::new(0.8, -0.6);
        let (_, t) = run(&g, &EnvInitState::zero_temperature(), GaussianModeState::coherent(alpha));
        for k in 0..grid.len() {
            assert_abs_diff_eq!(t.internal_energy[k], 1.3, epsilon = 1e-12);
            assert_abs_diff_eq!(t.work[k], 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn flat_vacuum_heat_matches_constant_coefficient_solution() {
        // Constant γ0 and a Planck-like N give Q = ω0 ∫ γ0(N − n); with n from the
        // same moments this checks the ledger wiring rather than the physics.
        let grid = TimeGrid::new(0.01, 1000).unwrap();
        let g = green_flat(0.5, 1.0, grid).unwrap();
        let (c, t) = run(&g, &EnvInitState::thermal(1.0).unwrap(), GaussianModeState::vacuum());
        assert!(t.work.iter().all(|w| w.abs() < 1e-12));
        let direct = cumulative(
            &(0..grid.len())
                .map(|k| c.omega_r[k] * (c.gamma_n[k] - c.gamma[k] * t.internal_energy[k]))
                .collect::<Vec<_>>(),
            grid.dt(),
            CumulativeRule::Cubic,
        );
        for k in 0..grid.len() {
            assert_abs_diff_eq!(t.heat[k], direct[k], epsilon = 1e-9);
        }
        assert!(t.first_law_residual() < 1e-14);
        assert!(t.dissipator_residual() < 1e-9);
    }

    #[test]
    fn first_law_with_displacement() {
        let grid = TimeGrid::new(0.01, 2000).unwrap();
        let g = green_lorentzian_closed(0.4, 0.6, 1.2, 1.0, grid).unwrap();
        let env = EnvInitState::thermal(1.0).unwrap().with_displaced(
            ModeRef::Explicit { omega: 0.9, coupling: Complex64::new(0.2, 0.1) },
            Complex64::new(2.0, 0.0),
        );
        let (c, t) = run(&g, &env, GaussianModeState::coherent(Complex64::new(0.5, 0.5)));
        assert!(t.dissipator_residual() < 1e-8, "{}", t.dissipator_residual());
        let (a, m, n) = gibbs_fixed_point_residual(&c, 500).unwrap();
        assert_eq!(a, c.force[500]);
        assert!(m.norm() == 0.0 && n.abs() < 1e-14);
    }

    #[test]
    fn beta_r_inverts_planck() {
        let grid = TimeGrid::new(0.05, 100).unwrap();
        let g = green_flat(0.5, 1.4, grid).unwrap();
        let mut c = CoefficientSeries::build(
            &g,
            &EnvInitState::zero_temperature(),
            &FrequencyCutoff::full_axis(0.02, 40.0).unwrap(),
            NoiseOptions::default(),
        )
        .unwrap();
        c.n_bath = vec![bose(1.4, 0.7); grid.len()];
        c.n_defined = vec![true; grid.len()];
        let (b, d) = renormalized_temperature(&c);
        assert!(d.iter().all(|x| *x));
        for v in b {
            assert_abs_diff_eq!(v, 0.7, epsilon = 1e-13);
        }
        c.n_bath[3] = -0.1;
        assert!(!renormalized_temperature(&c).1[3]);
    }

    #[test]
    fn equilibrium_start_has_no_entropy_production() {
        // Constant rates with a thermal bath whose N equals the initial occupation.
        let grid = TimeGrid::new(0.01, 500).unwrap();
        let g = green_flat(0.3, 1.0, grid).unwrap();
        let (mut c, _) = run(&g, &EnvInitState::zero_temperature(), GaussianModeState::vacuum());
        let n = 0.4;
        c.n_bath = vec![n; grid.len()];
        c.n_defined = vec![true; grid.len()];
        c.gamma_n = vec![0.3 * n; grid.len()];
        let m = crate::dynamics::propagate_ode(&GaussianModeState::thermal(n).unwrap(), &c).unwrap();
        let t = ThermoRecord::build(&c, &m).unwrap();
        for s in &t.entropy_production_rate {
            assert!(s.abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn flat_entropy_production_nonnegative(
            re in -2.0f64..2.0, im in -2.0f64..2.0, r in 0.0f64..1.2, th in 0.0f64..std::f64::consts::TAU, n0 in 0.0f64..3.0, beta in 0.2f64..5.0,
        ) {
            let grid = TimeGrid::new(0.02, 500).unwrap();
            let g = green_flat(0.5, 1.0, grid).unwrap();
            let h = n0 + 0.5;
            let s0 = GaussianModeState::from_central(
                Complex64::new(re, im),
                -Complex64::from_polar(h * (2.0 * r).sinh(), th),
                h * (2.0 * r).cosh() - 0.5,
            ).unwrap();
            let (_, t) = run(&g, &EnvInitState::thermal(beta).unwrap(), s0);
            for s in t.entropy_production_rate.iter().filter(|s| s.is_finite()) {
                prop_assert!(*s >= -1e-9, "{}", s);
            }
        }
    }
}
