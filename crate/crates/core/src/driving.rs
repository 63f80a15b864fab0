//! External linear driving `l(t)` of the central mode.
//!
//! The drive adds `F_l(t) = ∫_0^t G(t−τ) l(τ) dτ` to `⟨a⟩`. In the master
//! equation it appears through the renormalized force
//! `f_r(t) = l(t) + ∫_0^t [L(t−τ) − L(t)] G(t−τ) l(τ) dτ`, `L = Ġ/G`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::MomentSources;
use crate::error::{invalid, Error, Result};
use crate::green::{self, GreenFunction};
use crate::grid::TimeGrid;
use crate::quad::{cumulative, derivative, interp_cubic, CumulativeRule};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Drive amplitude as a function of time. Only linear driving exists; there
/// is no variant acting on `a†a` or `a²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DrivingProtocol {
    Constant {
        amplitude: Complex64,
    },
    /// `l0 e^{−iω_L t}`.
    Monochromatic {
        amplitude: Complex64,
        omega: f64,
    },
    /// `l0 e^{−iω_L t} exp(−(t − t0)²/(2σ²))`.
    GaussianPulse {
        amplitude: Complex64,
        omega: f64,
        center: f64,
        width: f64,
    },
    /// Uniform samples starting at t = 0, cubic interpolation in between.
    Sampled {
        dt: f64,
        values: Vec<Complex64>,
    },
}

impl DrivingProtocol {
    pub fn validate(&self) -> Result<()> {
        let finite = |z: &Complex64| z.re.is_finite() && z.im.is_finite();
        match self {
            Self::Constant { amplitude } => {
                if !finite(amplitude) {
                    return Err(invalid("amplitude", "must be finite"));
                }
            }
            Self::Monochromatic { amplitude, omega } => {
                if !finite(amplitude) || !omega.is_finite() {
                    return Err(invalid("monochromatic", "parameters must be finite"));
                }
            }
            Self::GaussianPulse { amplitude, omega, center, width } => {
                if !finite(amplitude) || !omega.is_finite() || !center.is_finite() {
                    return Err(invalid("gaussian_pulse", "parameters must be finite"));
                }
                if !(*width > 0.0) {
                    return Err(invalid("width", "must be positive"));
                }
            }
            Self::Sampled { dt, values } => {
                if !(*dt > 0.0) || values.len() < 4 {
                    return Err(invalid("sampled", "need a positive step and at least 4 samples"));
                }
                if !values.iter().all(finite) {
                    return Err(invalid("sampled", "samples must be finite"));
                }
            }
        }
        Ok(())
    }

    /// `(l, l̇)` on the grid.
    pub fn sample(&self, grid: &TimeGrid) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        self.validate()?;
        let pts: Vec<(Complex64, Complex64)> = match self {
            Self::Constant { amplitude } => grid.times().map(|_| (*amplitude, Complex64::new(0.0, 0.0))).collect(),
            Self::Monochromatic { amplitude, omega } => grid
                .times()
                .map(|t| {
                    let v = amplitude * Complex64::from_polar(1.0, -omega * t);
                    (v, -I * omega * v)
                })
                .collect(),
            Self::GaussianPulse { amplitude, omega, center, width } => grid
                .times()
                .map(|t| {
                    let s = (t - center) / width;
                    let v = amplitude * Complex64::from_polar((-0.5 * s * s).exp(), -omega * t);
                    (v, v * (-I * omega - s / width))
                })
                .collect(),
            Self::Sampled { dt, values } => {
                let span = (values.len() - 1) as f64 * dt;
                if grid.t_max() > span * (1.0 + 1e-12) {
                    return Err(invalid("sampled", format!("samples cover t ≤ {span}, grid needs {}", grid.t_max())));
                }
                let d = derivative(values, *dt);
                grid.times().map(|t| (interp_cubic(values, t / dt), interp_cubic(&d, t / dt))).collect()
            }
        };
        Ok(pts.into_iter().unzip())
    }
}

/// `∫_0^{t_k} v_k(τ) dτ` where `v_k(τ_j) = term(k, j)` for `j = 0..=k`.
///
/// The fourth-order cumulative rule needs four samples; the first two steps
/// integrate the cubic interpolant of the first four grid values instead.
fn convolution_sum<F>(n: usize, dt: f64, term: F) -> Vec<Complex64>
where
    F: Fn(usize, usize) -> Complex64 + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|k| {
            if k == 0 {
                return Complex64::new(0.0, 0.0);
            }
            let v: Vec<Complex64> = (0..=k).map(|j| term(k, j)).collect();
            cumulative(&v, dt, CumulativeRule::Cubic)[k]
        })
        .collect()
}

/// `∫_0^{t_k} a(t_k − τ) b(τ) dτ` for every k.
fn convolve(a: &[Complex64], b: &[Complex64], dt: f64) -> Vec<Complex64> {
    let mut out = convolution_sum(a.len(), dt, |k, j| a[k - j] * b[j]);
    early_steps(&mut out, dt, |x, y| interp_cubic(&a[..4], x) * interp_cubic(&b[..4], y));
    out
}

/// Replace the k = 1, 2 values by 4-point Gauss-Legendre integrals of the
/// product of cubic interpolants, `h(t_k − τ, τ)` in index units.
fn early_steps<H: Fn(f64, f64) -> Complex64>(out: &mut [Complex64], dt: f64, h: H) {
    if out.len() < 4 {
        return;
    }
    let (x, w) = crate::quad::gauss_legendre(4);
    for k in 1..=2 {
        let kf = k as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for (xi, wi) in x.iter().zip(&w) {
            let s = 0.5 * kf * (xi + 1.0);
            acc += h(kf - s, s) * *wi;
        }
        out[k] = acc * (0.5 * kf * dt);
    }
}

/// Drive-induced displacement `F_l` with its first two derivatives.
#[derive(Debug, Clone)]
pub struct DrivenDisplacement {
    pub value: Vec<Complex64>,
    pub dot: Vec<Complex64>,
    pub ddot: Vec<Complex64>,
}

pub fn driven_displacement(g: &GreenFunction, l: &DrivingProtocol) -> Result<DrivenDisplacement> {
    let grid = g.grid();
    let (lv, ld) = l.sample(grid)?;
    let dt = grid.dt();
    let value = convolve(g.g(), &lv, dt);
    let cd = convolve(g.gdot(), &lv, dt);
    let cdd = convolve(g.gddot(), &lv, dt);
    let gd0 = g.gdot()[0];
    let dot = (0..lv.len()).map(|k| lv[k] + cd[k]).collect();
    let ddot = (0..lv.len()).map(|k| ld[k] + gd0 * lv[k] + cdd[k]).collect();
    Ok(DrivenDisplacement { value, dot, ddot })
}

/// Renormalized force in the log-derivative difference form.
pub fn renormalized_force(g: &GreenFunction, l: &DrivingProtocol) -> Result<Vec<Complex64>> {
    let lg = green::log_derivative(g)?;
    force_with_kernel(g, l, &lg)
}

/// Renormalized force written with `(ω_r, γ)` differences:
/// `L(t−τ) − L(t) = −i[ω_r(t−τ) − ω_r(t)] − [γ(t−τ) − γ(t)]/2`.
pub fn renormalized_force_rates(g: &GreenFunction, l: &DrivingProtocol) -> Result<Vec<Complex64>> {
    let (wr, ga) = crate::coefficients::omega_gamma(g)?;
    let n = wr.len();
    let (lv, _) = l.sample(g.grid())?;
    let dt = g.grid().dt();
    let gg = g.g();
    let mut conv = convolution_sum(n, dt, |k, j| {
        Complex64::new(-0.5 * (ga[k - j] - ga[k]), -(wr[k - j] - wr[k])) * gg[k - j] * lv[j]
    });
    for k in 1..=2.min(n - 1) {
        let (w0, g0) = (wr[k], ga[k]);
        let diff = |x: f64| Complex64::new(-0.5 * (interp_cubic(&ga[..4], x) - g0), -(interp_cubic(&wr[..4], x) - w0));
        let mut one = vec![Complex64::new(0.0, 0.0); 4];
        early_steps(&mut one, dt, |x, y| diff(x) * interp_cubic(&gg[..4], x) * interp_cubic(&lv[..4], y));
        conv[k] = one[k];
    }
    Ok((0..n).map(|k| lv[k] + conv[k]).collect())
}

fn force_with_kernel(g: &GreenFunction, l: &DrivingProtocol, lg: &[Complex64]) -> Result<Vec<Complex64>> {
    let (lv, _) = l.sample(g.grid())?;
    let dt = g.grid().dt();
    let n = lg.len();
    let gg = g.g();
    let mut conv = convolution_sum(n, dt, |k, j| (lg[k - j] - lg[k]) * gg[k - j] * lv[j]);
    for k in 1..=2.min(n - 1) {
        let l0 = lg[k];
        let mut one = vec![Complex64::new(0.0, 0.0); 4];
        early_steps(&mut one, dt, |x, y| {
            (interp_cubic(&lg[..4], x) - l0) * interp_cubic(&gg[..4], x) * interp_cubic(&lv[..4], y)
        });
        conv[k] = one[k];
    }
    Ok((0..n).map(|k| lv[k] + conv[k]).collect())
}

/// Moment sources with the drive added to the displacement.
pub fn driven_sources(g: &GreenFunction, sources: &MomentSources, l: &DrivingProtocol) -> Result<MomentSources> {
    if sources.grid != *g.grid() {
        return Err(Error::GridMismatch("sources and Green function use different grids".into()));
    }
    let d = driven_displacement(g, l)?;
    let mut s = sources.clone();
    for k in 0..d.value.len() {
        s.displacement[k] += d.value[k];
        s.displacement_dot[k] += d.dot[k];
        s.displacement_ddot[k] += d.ddot[k];
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{moment_sources, CoefficientSeries, EnvInitState, ModeRef, NoiseOptions};
    use crate::dynamics::{propagate_closed_form, propagate_ode, GaussianModeState};
    use crate::green::{green_flat, green_lorentzian_closed};
    use crate::spectral::FrequencyCutoff;

    fn cut() -> FrequencyCutoff {
        FrequencyCutoff::full_axis(0.02, 40.0).unwrap()
    }

    fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn flat_bath_leaves_drive_unrenormalized() {
        let grid = TimeGrid::new(0.01, 1000).unwrap();
        let g = green_flat(0.5, 1.0, grid).unwrap();
        let l =
            DrivingProtocol::GaussianPulse { amplitude: Complex64::new(0.3, 0.1), omega: 1.1, center: 4.0, width: 1.5 };
        let (lv, _) = l.sample(&grid).unwrap();
        assert!(max_diff(&renormalized_force(&g, &l).unwrap(), &lv) < 1e-10);
        let g0 = green_flat(0.0, 1.0, grid).unwrap();
        assert!(max_diff(&renormalized_force(&g0, &l).unwrap(), &lv) < 1e-12);
    }

    #[test]
    fn flat_resonant_drive_closed_form() {
        let (g0, w0) = (0.4, 1.0);
        let grid = TimeGrid::new(0.01, 2000).unwrap();
        let g = green_flat(g0, w0, grid).unwrap();
        let l0 = Complex64::new(0.2, -0.1);
        let d = driven_displacement(&g, &DrivingProtocol::Monochromatic { amplitude: l0, omega: w0 }).unwrap();
        for (k, t) in grid.times().enumerate() {
            let expect = l0 * Complex64::from_polar(1.0, -w0 * t) * (1.0 - (-0.5 * g0 * t).exp()) * (2.0 / g0);
            assert!((d.value[k] - expect).norm() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn both_force_forms_agree_and_ode_matches_closed_form() {
        let grid = TimeGrid::new(0.01, 1500).unwrap();
        let g = green_lorentzian_closed(0.6, 0.8, 1.1, 1.0, grid).unwrap();
        let l = DrivingProtocol::Monochromatic { amplitude: Complex64::new(0.3, 0.0), omega: 0.9 };
        let a = renormalized_force(&g, &l).unwrap();
        let b = renormalized_force_rates(&g, &l).unwrap();
        assert!(max_diff(&a, &b) < 1e-8);
        let env = EnvInitState::thermal(1.0).unwrap();
        let s = driven_sources(&g, &moment_sources(&g, &env, &cut(), NoiseOptions::default()).unwrap(), &l).unwrap();
        let c = CoefficientSeries::from_sources(&g, s.clone()).unwrap();
        // Thermal bath: the coefficient force is the renormalized drive.
        let d = max_diff(&c.force, &a);
        assert!(d < 1e-8, "{d}");
        let s0 = GaussianModeState::coherent(Complex64::new(0.5, 0.0));
        let exact = propagate_closed_form(&s0, &g, &s).unwrap();
        let ode = propagate_ode(&s0, &c).unwrap();
        assert!(max_diff(&exact.mean, &ode.mean) < 1e-6);
        assert!(exact.occupation.iter().zip(&ode.occupation).all(|(x, y)| (x - y).abs() < 1e-6));
    }

    #[test]
    fn drive_equals_displaced_bath_mode() {
        let grid = TimeGrid::new(0.01, 1000).unwrap();
        let g = green_lorentzian_closed(0.6, 0.8, 1.1, 1.0, grid).unwrap();
        let (wd, gd, alpha) = (1.2, Complex64::new(0.1, 0.05), Complex64::new(2.0, 1.0));
        let env_d =
            EnvInitState::zero_temperature().with_displaced(ModeRef::Explicit { omega: wd, coupling: gd }, alpha);
        let bath = moment_sources(&g, &env_d, &cut(), NoiseOptions::default()).unwrap();
        let l = DrivingProtocol::Monochromatic { amplitude: -I * gd * alpha, omega: wd };
        let base = moment_sources(&g, &EnvInitState::zero_temperature(), &cut(), NoiseOptions::default()).unwrap();
        let driven = driven_sources(&g, &base, &l).unwrap();
        let s0 = GaussianModeState::vacuum();
        let m1 = propagate_closed_form(&s0, &g, &bath).unwrap();
        let m2 = propagate_closed_form(&s0, &g, &driven).unwrap();
        assert!(max_diff(&m1.mean, &m2.mean) < 1e-9);
    }

    #[test]
    fn lorentzian_renormalization_scales_as_lambda_squared() {
        let grid = TimeGrid::new(0.02, 500).unwrap();
        let l = DrivingProtocol::Monochromatic { amplitude: Complex64::new(1.0, 0.0), omega: 1.3 };
        let (lv, _) = l.sample(&grid).unwrap();
        let dev: Vec<f64> = [0.2, 0.1]
            .iter()
            .map(|lam: &f64| {
                let g = green_lorentzian_closed(lam * lam, 1.0, 1.0, 1.0, grid).unwrap();
                max_diff(&renormalized_force(&g, &l).unwrap(), &lv)
            })
            .collect();
        let p = (dev[0] / dev[1]).log2();
        assert!(dev[0] > 0.0 && (p - 2.0).abs() < 0.1, "{dev:?}");
    }

    #[test]
    fn sampled_protocol_needs_coverage() {
        let grid = TimeGrid::new(0.1, 100).unwrap();
        let l = DrivingProtocol::Sampled { dt: 0.5, values: vec![Complex64::new(1.0, 0.0); 10] };
        assert!(l.sample(&grid).is_err());
        let l = DrivingProtocol::Sampled { dt: 0.5, values: vec![Complex64::new(1.0, 0.0); 30] };
        let (v, d) = l.sample(&grid).unwrap();
        assert!(v.iter().all(|x| (x - 1.0).norm() < 1e-14) && d.iter().all(|x| x.norm() < 1e-14));
    }
}
