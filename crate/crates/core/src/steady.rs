//! Equilibrium steady state and the nonequilibrium steady state of a
//! displaced bath, with their constant fluxes.

use num_complex::Complex64;
use serde::Serialize;

use crate::coefficients::CoefficientSeries;
use crate::error::{invalid, Error, Result};
use crate::green::{green_laplace, GreenFunction};
use crate::grid::TimeGrid;
use crate::quad::{self, QuadOptions};
use crate::spectral::{self, bose, FrequencyCutoff, SpectralDensity};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// `|G|` below which a run counts as having reached its asymptotic regime.
pub const DECAYED_G: f64 = 1e-6;

/// Frequency-domain steady occupation with its weight-normalization check.
#[derive(Debug, Clone, Serialize)]
pub struct SteadyExcitation {
    pub n_bar: f64,
    /// `∫ J/((ω0 + Δ − ω)² + π²J²)`; 1 when every pole of Ĝ decays.
    pub normalization: f64,
    pub resonance: f64,
    pub diagnostics: Vec<String>,
}

fn weight(j: &SpectralDensity, omega0: f64, w: f64, cutoff: &FrequencyCutoff) -> Result<f64> {
    let jw = spectral::density(j, w, cutoff)?;
    if jw == 0.0 {
        return Ok(0.0);
    }
    let d = omega0 + spectral::lamb_shift(j, w, cutoff)? - w;
    Ok(jw / (d * d + (std::f64::consts::PI * jw).powi(2)))
}

/// Root of `ω0 + Δ(ω) − ω` nearest to ω0 inside the support.
pub fn resonance_frequency(j: &SpectralDensity, omega0: f64, cutoff: &FrequencyCutoff) -> Result<f64> {
    let h = |w: f64| -> Result<f64> { Ok(omega0 + spectral::lamb_shift(j, w, cutoff)? - w) };
    let (a, b) = support(j, cutoff);
    let step = (j.feature_width() / 8.0).min(0.05 * omega0.abs().max(1.0));
    // Scan outward from ω0 for a sign change, then bisect.
    let h0 = h(omega0)?;
    if h0 == 0.0 {
        return Ok(omega0);
    }
    for k in 1..4000 {
        for dir in [1.0, -1.0] {
            let x1 = omega0 + dir * (k - 1) as f64 * step;
            let x2 = omega0 + dir * k as f64 * step;
            if x2 <= a || x2 >= b {
                continue;
            }
            let (h1, h2) = (h(x1)?, h(x2)?);
            if h1 * h2 <= 0.0 {
                let (mut lo, mut hi, mut flo) = (x1.min(x2), x1.max(x2), if x1 < x2 { h1 } else { h2 });
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    let fm = h(mid)?;
                    if fm * flo > 0.0 {
                        lo = mid;
                        flo = fm;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-14 * mid.abs().max(1.0) {
                        break;
                    }
                }
                return Ok(0.5 * (lo + hi));
            }
        }
    }
    Err(Error::Unsupported("no root of ω0 + Δ(ω) − ω near ω0".into()))
}

fn support(j: &SpectralDensity, cutoff: &FrequencyCutoff) -> (f64, f64) {
    if cutoff.full_axis {
        match j {
            SpectralDensity::Tabulated(t) => t.range(),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    } else {
        (cutoff.omega_min, cutoff.omega_max)
    }
}

/// `n̄ = ∫ J n_B / ((ω0 + Δ − ω)² + π²J²)` over the thermal window.
pub fn steady_excitation(
    j: &SpectralDensity,
    omega0: f64,
    beta: f64,
    cutoff: &FrequencyCutoff,
) -> Result<SteadyExcitation> {
    if !j.is_continuum() {
        return Err(Error::UnsupportedVariant { op: "steady_excitation", variant: "discrete" });
    }
    if !(beta > 0.0) {
        return Err(invalid("beta", "must be positive"));
    }
    let res = resonance_frequency(j, omega0, cutoff)?;
    let width = (std::f64::consts::PI * spectral::density(j, res, cutoff)?).max(1e-6);
    let mut pts: Vec<f64> = vec![omega0, res];
    pts.extend(j.features());
    for k in [-20.0, -5.0, -1.0, 1.0, 5.0, 20.0] {
        pts.push(res + k * width);
    }
    let opts = QuadOptions::with_tol(1e-12, 1e-10);
    let mut diagnostics = Vec::new();

    let (lo, hi) = support(j, cutoff);
    let normalization = if lo.is_finite() && hi.is_finite() {
        let mut p = pts.clone();
        p.extend([lo, hi]);
        p.retain(|x| *x >= lo && *x <= hi);
        sort_dedup(&mut p);
        quad::integrate(|w| weight(j, omega0, w, cutoff).unwrap_or(f64::NAN), &p, opts)?.value
    } else {
        let mut p = pts.clone();
        sort_dedup(&mut p);
        quad::integrate_real_line(|w| weight(j, omega0, w, cutoff).unwrap_or(f64::NAN), &p, opts)?.value
    };
    if (normalization - 1.0).abs() > 1e-3 {
        diagnostics
            .push(format!("normalization integral {normalization} differs from 1; a non-decaying pole of Ĝ is likely"));
    }

    let n_bar = if beta.is_infinite() {
        0.0
    } else {
        let (a, b) = cutoff.thermal_window(j);
        if !(a > 0.0) {
            return Err(invalid("omega_min", "finite temperature needs a thermal window starting above zero"));
        }
        let mut p = pts;
        let mut x = a;
        while x < b.min(20.0 / beta) {
            p.push(x);
            x *= 1.5;
        }
        p.extend([a, b]);
        p.retain(|x| *x >= a && *x <= b);
        sort_dedup(&mut p);
        quad::integrate(|w| weight(j, omega0, w, cutoff).unwrap_or(f64::NAN) * bose(w, beta), &p, opts)?.value
    };
    Ok(SteadyExcitation { n_bar, normalization, resonance: res, diagnostics })
}

fn sort_dedup(p: &mut Vec<f64>) {
    p.sort_by(f64::total_cmp);
    p.dedup();
}

/// Long-time equilibrium data.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SteadyState {
    pub n_bar: f64,
    /// Gibbs exponent `X = ln((1 + n̄)/n̄)`.
    pub x: f64,
    pub omega_r: f64,
    pub gamma: f64,
    pub beta_r: f64,
}

impl SteadyState {
    /// Pair the occupation with the last samples of the coefficient series.
    pub fn from_tail(n_bar: f64, c: &CoefficientSeries) -> Result<Self> {
        if !(n_bar > 0.0) {
            return Err(invalid("n_bar", "Gibbs exponent needs a positive occupation"));
        }
        let k = c.grid.steps();
        let x = (1.0 / n_bar).ln_1p();
        let omega_r = c.omega_r[k];
        Ok(Self { n_bar, x, omega_r, gamma: c.gamma[k], beta_r: x / omega_r })
    }
}

/// A displaced mode as seen by the asymptotic state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NessMode {
    pub omega: f64,
    pub coupling: Complex64,
    pub alpha: Complex64,
}

/// `φ_j = α_j g_j Ĝ(−iω_j)` and the asymptotic displacement `F̄(t) = −i Σ φ_j e^{−iω_j t}`.
#[derive(Debug, Clone, Serialize)]
pub struct NessDisplacement {
    pub phi: Vec<Complex64>,
    pub omegas: Vec<f64>,
    pub series: Vec<Complex64>,
}

pub fn ness_displacement(
    j: &SpectralDensity,
    omega0: f64,
    cutoff: &FrequencyCutoff,
    modes: &[NessMode],
    grid: &TimeGrid,
) -> Result<NessDisplacement> {
    let phi = modes
        .iter()
        .map(|m| Ok(m.alpha * m.coupling * green_laplace(j, omega0, m.omega, cutoff)?))
        .collect::<Result<Vec<_>>>()?;
    let omegas: Vec<f64> = modes.iter().map(|m| m.omega).collect();
    let series = grid.times().map(|t| -I * phasor_sum(&phi, &omegas, t)).collect();
    Ok(NessDisplacement { phi, omegas, series })
}

fn phasor_sum(phi: &[Complex64], omegas: &[f64], t: f64) -> Complex64 {
    phi.iter().zip(omegas).map(|(p, w)| p * Complex64::from_polar(1.0, -w * t)).sum()
}

/// `f̄(t) = Σ (ω̄_r − ω_j − iγ̄/2) φ_j e^{−iω_j t}`.
pub fn ness_force(d: &NessDisplacement, omega_r: f64, gamma: f64, grid: &TimeGrid) -> Vec<Complex64> {
    grid.times().map(|t| force_at(d, omega_r, gamma, t)).collect()
}

/// Constant single-mode fluxes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NessFluxes {
    pub u_bar: f64,
    pub heat_rate: f64,
    pub work_rate: f64,
    /// `σ̇ = −β̄_r Q̇`.
    pub sigma_dot: f64,
    /// `β̄_r γ̄ ω_d |α g|² |Ĝ(−iω_d)|²` with Ĝ from the sampled Green function.
    pub sigma_dot_direct: f64,
}

pub fn ness_fluxes_single_mode(
    d: &NessDisplacement,
    mode: &NessMode,
    g: &GreenFunction,
    steady: &SteadyState,
) -> Result<NessFluxes> {
    if d.phi.len() != 1 {
        return Err(Error::Unsupported(format!(
            "constant fluxes are defined for one displaced mode, got {}",
            d.phi.len()
        )));
    }
    let p2 = d.phi[0].norm_sqr();
    let wd = d.omegas[0];
    let heat_rate = -steady.gamma * wd * p2;
    let ghat = g.laplace_numeric(wd);
    Ok(NessFluxes {
        u_bar: steady.omega_r * (steady.n_bar - p2) + 2.0 * wd * p2,
        heat_rate,
        work_rate: -heat_rate,
        sigma_dot: -steady.beta_r * heat_rate,
        sigma_dot_direct: steady.beta_r
            * steady.gamma
            * wd
            * mode.alpha.norm_sqr()
            * mode.coupling.norm_sqr()
            * ghat.norm_sqr(),
    })
}

/// Largest residual of the moment equations at the asymptotic moments
/// `(F̄, F̄², n̄ + |F̄|²)`, using the coefficients of the samples `from..`.
pub fn verify_ness_unitarity(c: &CoefficientSeries, d: &NessDisplacement, n_bar: f64, from: usize) -> f64 {
    let mut worst = 0.0f64;
    for k in from..c.grid.len() {
        let t = c.grid.t(k);
        let a = -I * phasor_sum(&d.phi, &d.omegas, t);
        let ad: Complex64 = d.phi.iter().zip(&d.omegas).map(|(p, w)| -w * p * Complex64::from_polar(1.0, -w * t)).sum();
        let f = force_at(d, c.omega_r[k], c.gamma[k], t);
        let l = c.log_deriv[k];
        let n = n_bar + a.norm_sqr();
        let m = a * a;
        let r1 = (ad - (l * a + f)).norm();
        let r2 = (2.0 * a * ad - (2.0 * l * m + 2.0 * f * a - c.delta[k])).norm();
        let r3 = (2.0 * (a.conj() * ad).re - (-c.gamma[k] * n + c.gamma_n[k] + 2.0 * (f * a.conj()).re)).abs();
        worst = worst.max(r1).max(r2).max(r3);
    }
    worst
}

fn force_at(d: &NessDisplacement, omega_r: f64, gamma: f64, t: f64) -> Complex64 {
    d.phi
        .iter()
        .zip(&d.omegas)
        .map(|(p, w)| Complex64::new(omega_r - w, -0.5 * gamma) * p * Complex64::from_polar(1.0, -w * t))
        .sum()
}

/// σ̇ as a function of the driving frequency.
#[derive(Debug, Clone, Serialize)]
pub struct ResonanceSweep {
    pub omegas: Vec<f64>,
    pub sigma_dot: Vec<f64>,
    pub peak: f64,
    pub resonance: f64,
    pub step: f64,
}

/// Sweep `σ̇(ω_d) = β̄_r γ̄ ω_d |α g|² |Ĝ(−iω_d)|²` over `omegas`.
pub fn resonance_sweep(
    j: &SpectralDensity,
    omega0: f64,
    cutoff: &FrequencyCutoff,
    steady: &SteadyState,
    alpha_g: f64,
    omegas: &[f64],
) -> Result<ResonanceSweep> {
    if omegas.len() < 2 {
        return Err(invalid("omegas", "need at least two sweep points"));
    }
    let sigma_dot = omegas
        .iter()
        .map(|w| {
            let gh = green_laplace(j, omega0, *w, cutoff)?;
            Ok(steady.beta_r * steady.gamma * w * alpha_g * alpha_g * gh.norm_sqr())
        })
        .collect::<Result<Vec<f64>>>()?;
    let imax = (0..omegas.len()).max_by(|a, b| sigma_dot[*a].total_cmp(&sigma_dot[*b])).unwrap();
    Ok(ResonanceSweep {
        peak: omegas[imax],
        resonance: resonance_frequency(j, omega0, cutoff)?,
        step: omegas[1] - omegas[0],
        omegas: omegas.to_vec(),
        sigma_dot,
    })
}

/// First sample after which `|G|` stays below [`DECAYED_G`].
pub fn decayed_from(g: &GreenFunction) -> Option<usize> {
    let n = g.g().len();
    let last_big = g.g().iter().rposition(|v| v.norm() >= DECAYED_G);
    match last_big {
        None => Some(0),
        Some(k) if k + 1 < n => Some(k + 1),
        _ => None,
    }
}
