use fano_core::coefficients::{CoefficientSeries, EnvInitState, ModeRef, NoiseOptions};
use fano_core::dynamics::{propagate_closed_form, propagate_ode, GaussianModeState};
use fano_core::green::{green_lorentzian_closed, solve};
use fano_core::oracle::{moment_deviation, oracle_green, oracle_moments, DiscreteBathScenario};
use fano_core::spectral::{BathMode, FrequencyCutoff, SpectralDensity};
use fano_core::thermo::ThermoRecord;
use fano_core::{Complex64, TimeGrid};
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn few_modes() -> Vec<BathMode> {
    vec![
        BathMode::new(0.7, c(0.10, 0.0)),
        BathMode::new(0.95, c(0.05, 0.02)),
        BathMode::new(1.2, c(0.08, -0.03)),
        BathMode::new(1.6, c(0.12, 0.0)),
    ]
}

// Volterra route on a four-mode kernel against exact diagonalization.
#[test]
fn few_mode_bath_matches_diagonalization() {
    let modes = few_modes();
    let j = SpectralDensity::discrete(modes.clone()).unwrap();
    let cut = FrequencyCutoff::window(0.1, 3.0).unwrap();
    let grid = TimeGrid::new(0.005, 4000).unwrap();
    let g = solve(&j, 1.0, grid, &cut).unwrap();
    let env = EnvInitState::thermal(1.5).unwrap().with_displaced(ModeRef::Index(2), c(1.0, 0.5));
    let s0 = GaussianModeState::from_central(c(0.3, -0.1), c(0.05, 0.02), 0.1).unwrap();
    let co = CoefficientSeries::build(&g, &env, &cut, NoiseOptions::default()).unwrap();
    let m = propagate_closed_form(&s0, &g, &co.sources).unwrap();
    let sc = DiscreteBathScenario::new(1.0, modes, env).unwrap();
    let og = oracle_green(&sc, &grid);
    let dg = g.g().iter().zip(&og).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(dg < 1e-5, "green {dg}");
    let d = moment_deviation(&m, &oracle_moments(&sc, &s0, &grid).unwrap(), grid.t_max());
    assert!(d.mean < 1e-5 && d.pair < 1e-5 && d.occupation < 1e-5, "{d:?}");
}

fn state() -> impl Strategy<Value = GaussianModeState> {
    (-1.0..1.0f64, -1.0..1.0f64, 0.0..1.0f64, 0.0..std::f64::consts::TAU, 0.0..1.0f64).prop_map(|(x, y, r, th, nth)| {
        let (ch, sh) = (r.cosh(), r.sinh());
        let n = (nth + 0.5) * (ch * ch + sh * sh) - 0.5;
        let m = (nth + 0.5) * 2.0 * ch * sh * Complex64::from_polar(1.0, th);
        GaussianModeState::from_central(c(x, y), m, n).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // The closed-form moments solve the time-local equations of motion, and
    // the energetics close on them.
    #[test]
    fn closed_form_and_ode_agree(
        gamma0 in 0.05..0.8f64,
        eta in 0.3..2.0f64,
        omega_c in 0.6..1.4f64,
        beta in 0.3..3.0f64,
        s0 in state(),
    ) {
        let grid = TimeGrid::new(0.01, 600).unwrap();
        let g = green_lorentzian_closed(gamma0, eta, omega_c, 1.0, grid).unwrap();
        prop_assume!(g.first_zero_crossing().is_none());
        let cut = FrequencyCutoff::full_axis(0.02, 40.0).unwrap();
        let co = CoefficientSeries::build(&g, &EnvInitState::thermal(beta).unwrap(), &cut, NoiseOptions::default()).unwrap();
        let exact = propagate_closed_form(&s0, &g, &co.sources).unwrap();
        let ode = propagate_ode(&s0, &co).unwrap();
        for k in 0..grid.len() {
            prop_assert!((exact.mean[k] - ode.mean[k]).norm() < 1e-6);
            prop_assert!((exact.pair[k] - ode.pair[k]).norm() < 1e-6);
            prop_assert!((exact.occupation[k] - ode.occupation[k]).abs() < 1e-6);
        }
        let t = ThermoRecord::build(&co, &exact).unwrap();
        prop_assert!(t.first_law_residual() < 1e-12);
        prop_assert!(t.dissipator_residual() < 1e-8);
        // Uncertainty holds along the whole trajectory.
        prop_assert!(exact.symplectic_eigenvalues().iter().all(|nu| *nu >= 0.5 - 1e-9));
    }
}
