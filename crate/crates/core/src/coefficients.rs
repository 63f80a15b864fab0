//! Time-dependent coefficients of the exact time-local master equation.
//!
//! Everything here derives from G(t) and the initial environment through the
//! convolutions `A_ω(t) = ∫_0^t G(t−τ) e^{−iωτ} dτ`:
//!
//! * noise integral `I = Σ |g|² n |A|²` and `N = I + İ/γ`,
//! * displacement `F = −i Σ g α A` and force `f = Ḟ − (Ġ/G) F`,
//! * squeezing `J_sq = Σ g² m A²` and `δ = J̇_sq − 2 (Ġ/G) J_sq`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::green::{self, GreenFunction};
use crate::grid::TimeGrid;
use crate::quad;
use crate::spectral::{self, bose, FrequencyCutoff, SpectralDensity};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// |γ| below which `N = I + İ/γ` is flagged undefined.
pub const GAMMA_FLOOR: f64 = 1e-9;

/// Reference to a special bath mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeRef {
    /// Mode of a discrete bath, by position in its mode list.
    Index(usize),
    /// Extra mode riding on a continuum; it does not enter the kernel.
    Explicit { omega: f64, coupling: Complex64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplacedMode {
    pub mode: ModeRef,
    pub alpha: Complex64,
}

/// Squeezed mode with its own central moments `⟨⟨c†c⟩⟩₀` and `⟨⟨cc⟩⟩₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezedMode {
    pub mode: ModeRef,
    pub pair: Complex64,
    pub occupation: f64,
}

impl SqueezedMode {
    /// Gaussian positivity requires `|m|² ≤ n (n + 1)`.
    pub fn new(mode: ModeRef, pair: Complex64, occupation: f64) -> Result<Self> {
        if !(occupation >= 0.0) {
            return Err(invalid("occupation", "must be nonnegative"));
        }
        if pair.norm_sqr() > occupation * (occupation + 1.0) * (1.0 + 1e-12) + 1e-15 {
            return Err(invalid(
                "pair",
                format!("|m|² = {} exceeds n(n+1) = {}", pair.norm_sqr(), occupation * (occupation + 1.0)),
            ));
        }
        Ok(Self { mode, pair, occupation })
    }

    /// Squeezed thermal state `S(r e^{iθ}) ρ_th S†`.
    pub fn squeezed_thermal(mode: ModeRef, r: f64, theta: f64, n_thermal: f64) -> Result<Self> {
        let h = n_thermal + 0.5;
        let occupation = h * (2.0 * r).cosh() - 0.5;
        let pair = -Complex64::from_polar(h * (2.0 * r).sinh(), theta);
        Self::new(mode, pair, occupation)
    }
}

/// Initial product Gaussian state of the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvInitState {
    beta: f64,
    displaced: Vec<DisplacedMode>,
    squeezed: Vec<SqueezedMode>,
}

impl EnvInitState {
    /// Thermal state; `beta = f64::INFINITY` is zero temperature.
    pub fn thermal(beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(invalid("beta", format!("inverse temperature must be positive, got {beta}")));
        }
        Ok(Self { beta, displaced: Vec::new(), squeezed: Vec::new() })
    }

    pub fn zero_temperature() -> Self {
        Self { beta: f64::INFINITY, displaced: Vec::new(), squeezed: Vec::new() }
    }

    pub fn with_displaced(mut self, mode: ModeRef, alpha: Complex64) -> Self {
        self.displaced.push(DisplacedMode { mode, alpha });
        self
    }

    pub fn with_squeezed(mut self, s: SqueezedMode) -> Self {
        self.squeezed.push(s);
        self
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn displaced(&self) -> &[DisplacedMode] {
        &self.displaced
    }

    pub fn squeezed(&self) -> &[SqueezedMode] {
        &self.squeezed
    }

    pub fn is_thermal(&self) -> bool {
        self.displaced.is_empty() && self.squeezed.is_empty()
    }

    /// Special modes with resolved frequencies and couplings.
    pub fn special_modes(&self, j: &SpectralDensity) -> Result<Vec<SpecialMode>> {
        let mut out: Vec<(ModeRef, SpecialMode)> = Vec::new();
        let resolve = |m: ModeRef| -> Result<(f64, Complex64, Option<usize>)> {
            match (m, j) {
                (ModeRef::Index(i), SpectralDensity::DiscreteSum(modes)) => modes
                    .get(i)
                    .map(|b| (b.omega, b.coupling, Some(i)))
                    .ok_or_else(|| invalid("mode", format!("index {i} out of range ({} modes)", modes.len()))),
                (ModeRef::Index(_), _) => Err(invalid("mode", "continuum baths take explicit special modes")),
                (ModeRef::Explicit { .. }, SpectralDensity::DiscreteSum(_)) => {
                    Err(invalid("mode", "discrete baths take special modes by index"))
                }
                (ModeRef::Explicit { omega, coupling }, _) => Ok((omega, coupling, None)),
            }
        };
        let beta = self.beta;
        let slot = |out: &mut Vec<(ModeRef, SpecialMode)>, m: ModeRef| -> Result<usize> {
            if let Some(p) = out.iter().position(|(r, _)| *r == m) {
                return Ok(p);
            }
            let (omega, coupling, index) = resolve(m)?;
            let thermal = match index {
                Some(_) => thermal_occupation(omega, beta)?,
                None => 0.0,
            };
            out.push((
                m,
                SpecialMode { omega, coupling, index, alpha: ZERO, pair: ZERO, occupation: thermal, thermal },
            ));
            Ok(out.len() - 1)
        };
        for d in &self.displaced {
            let p = slot(&mut out, d.mode)?;
            out[p].1.alpha += d.alpha;
        }
        for s in &self.squeezed {
            let p = slot(&mut out, s.mode)?;
            out[p].1.pair = s.pair;
            out[p].1.occupation = s.occupation;
        }
        Ok(out.into_iter().map(|(_, s)| s).collect())
    }

    /// Per-mode initial moments `(⟨c⟩, ⟨⟨c†c⟩⟩, ⟨⟨cc⟩⟩)` of a discrete bath.
    pub fn discrete_moments(&self, modes: &[spectral::BathMode]) -> Result<Vec<(Complex64, f64, Complex64)>> {
        let mut out = modes
            .iter()
            .map(|m| Ok((ZERO, thermal_occupation(m.omega, self.beta)?, ZERO)))
            .collect::<Result<Vec<_>>>()?;
        for s in self.special_modes(&SpectralDensity::DiscreteSum(modes.to_vec()))? {
            let i = s.index.expect("discrete special modes carry an index");
            out[i] = (s.alpha, s.occupation, s.pair);
        }
        Ok(out)
    }
}

fn thermal_occupation(omega: f64, beta: f64) -> Result<f64> {
    if beta.is_infinite() {
        return Ok(0.0);
    }
    if !(omega > 0.0) {
        return Err(invalid("omega", format!("thermal occupation needs a positive mode frequency, got {omega}")));
    }
    Ok(bose(omega, beta))
}

/// A displaced and/or squeezed mode after resolution against the bath.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecialMode {
    pub omega: f64,
    pub coupling: Complex64,
    pub index: Option<usize>,
    pub alpha: Complex64,
    pub pair: Complex64,
    /// `⟨⟨c†c⟩⟩₀` of the mode.
    pub occupation: f64,
    /// The occupation the thermal background already assigns to it.
    pub thermal: f64,
}

/// Tuning of the thermal frequency quadrature.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseOptions {
    /// Largest Gauss-Legendre panel; default `π / t_max`.
    pub max_panel: Option<f64>,
}

/// Convolution-derived sources of the closed-form moments. They need G only,
/// not its log-derivative, so they exist even past zeros of G.
#[derive(Debug, Clone)]
pub struct MomentSources {
    pub grid: TimeGrid,
    /// `I(t)`.
    pub noise: Vec<f64>,
    /// `İ(t)`, analytic.
    pub noise_dot: Vec<f64>,
    /// `F(t)`, `Ḟ(t)`, `F̈(t)`.
    pub displacement: Vec<Complex64>,
    pub displacement_dot: Vec<Complex64>,
    pub displacement_ddot: Vec<Complex64>,
    /// `J_sq(t)` and `J̇_sq(t)`.
    pub squeeze: Vec<Complex64>,
    pub squeeze_dot: Vec<Complex64>,
    /// Number of thermal quadrature nodes used for `I`.
    pub noise_nodes: usize,
}

/// Frequency nodes `(ω, |g|² ⟨⟨c†c⟩⟩)` of the noise integral.
pub fn noise_nodes(
    j: &SpectralDensity,
    omega0: f64,
    env: &EnvInitState,
    cutoff: &FrequencyCutoff,
    t_max: f64,
    opts: NoiseOptions,
) -> Result<Vec<(f64, f64)>> {
    let specials = env.special_modes(j)?;
    let mut nodes = Vec::new();
    match j {
        SpectralDensity::DiscreteSum(modes) => {
            for (k, m) in modes.iter().enumerate() {
                let occ = match specials.iter().find(|s| s.index == Some(k)) {
                    Some(s) => s.occupation,
                    None => thermal_occupation(m.omega, env.beta)?,
                };
                let w = m.coupling.norm_sqr() * occ;
                if w > 0.0 {
                    nodes.push((m.omega, w));
                }
            }
            return Ok(nodes);
        }
        _ if env.beta.is_finite() => {
            let (a, b) = cutoff.thermal_window(j);
            if !(a > 0.0) {
                return Err(invalid("omega_min", "finite temperature needs a thermal window starting above zero"));
            }
            let panel = opts.max_panel.unwrap_or(PI / t_max.max(1e-12));
            // Geometric edges resolve the 1/ω growth of the Planck factor.
            let mut breaks = vec![omega0];
            let mut x = a;
            while x < b.min(20.0 / env.beta) {
                breaks.push(x);
                x *= 1.5;
            }
            for (w, q) in spectral::density_nodes(j, a, b, panel, &breaks)? {
                let v = q * bose(w, env.beta);
                if v > 0.0 {
                    nodes.push((w, v));
                }
            }
        }
        _ => {}
    }
    for s in specials.iter().filter(|s| s.occupation > 0.0) {
        nodes.push((s.omega, s.coupling.norm_sqr() * s.occupation));
    }
    Ok(nodes)
}

/// Build the convolution sources for a Green function and environment.
pub fn moment_sources(
    g: &GreenFunction,
    env: &EnvInitState,
    cutoff: &FrequencyCutoff,
    opts: NoiseOptions,
) -> Result<MomentSources> {
    let j = g.density().ok_or_else(|| invalid("green", "Green function carries no spectral density"))?;
    let grid = *g.grid();
    let n = grid.len();
    let nodes = noise_nodes(j, g.omega0(), env, cutoff, grid.t_max(), opts)?;
    let (noise, noise_dot) = noise_integral(g, &nodes);

    let mut disp = vec![ZERO; n];
    let mut disp_dot = vec![ZERO; n];
    let mut disp_ddot = vec![ZERO; n];
    let mut sq = vec![ZERO; n];
    let mut sq_dot = vec![ZERO; n];
    for s in env.special_modes(j)? {
        let has_disp = s.alpha != ZERO && s.coupling != ZERO;
        let has_sq = s.pair != ZERO && s.coupling != ZERO;
        if !has_disp && !has_sq {
            continue;
        }
        let a = g.exp_convolution(s.omega);
        let w = s.omega;
        if has_disp {
            let c = -I * s.coupling * s.alpha;
            for k in 0..n {
                let ad = g.g()[k] - I * w * a[k];
                let add = g.gdot()[k] - I * w * ad;
                disp[k] += c * a[k];
                disp_dot[k] += c * ad;
                disp_ddot[k] += c * add;
            }
        }
        if has_sq {
            let c = s.coupling * s.coupling * s.pair;
            for k in 0..n {
                let ad = g.g()[k] - I * w * a[k];
                sq[k] += c * a[k] * a[k];
                sq_dot[k] += 2.0 * c * a[k] * ad;
            }
        }
    }
    Ok(MomentSources {
        grid,
        noise,
        noise_dot,
        displacement: disp,
        displacement_dot: disp_dot,
        displacement_ddot: disp_ddot,
        squeeze: sq,
        squeeze_dot: sq_dot,
        noise_nodes: nodes.len(),
    })
}

/// `I(t) = Σ w |A_ω(t)|²` and `İ(t) = Σ 2w Re(A* G)` over weighted nodes.
///
/// Nodes are processed in fixed chunks and the partial sums combined in
/// order, so the result does not depend on thread scheduling.
pub fn noise_integral(g: &GreenFunction, nodes: &[(f64, f64)]) -> (Vec<f64>, Vec<f64>) {
    let n = g.grid().len();
    let partials: Vec<(Vec<f64>, Vec<f64>)> = nodes
        .par_chunks(32)
        .map(|chunk| {
            let mut i = vec![0.0; n];
            let mut id = vec![0.0; n];
            for &(w, wt) in chunk {
                let a = g.exp_convolution(w);
                for k in 0..n {
                    i[k] += wt * a[k].norm_sqr();
                    id[k] += 2.0 * wt * (a[k].conj() * g.g()[k]).re;
                }
            }
            (i, id)
        })
        .collect();
    let mut i = vec![0.0; n];
    let mut id = vec![0.0; n];
    for (pi, pd) in partials {
        for k in 0..n {
            i[k] += pi[k];
            id[k] += pd[k];
        }
    }
    (i, id)
}

/// Renormalized frequency and damping from `Ġ/G`.
pub fn omega_gamma(g: &GreenFunction) -> Result<(Vec<f64>, Vec<f64>)> {
    let l = green::log_derivative(g)?;
    Ok((l.iter().map(|v| -v.im).collect(), l.iter().map(|v| -2.0 * v.re).collect()))
}

/// `N = I + İ/γ`, flagged undefined where `|γ| < 1e−9`.
pub fn bath_excitation(noise: &[f64], noise_dot: &[f64], gamma: &[f64]) -> (Vec<f64>, Vec<bool>) {
    noise
        .iter()
        .zip(noise_dot)
        .zip(gamma)
        .map(|((i, d), g)| if g.abs() < GAMMA_FLOOR { (f64::NAN, false) } else { (i + d / g, true) })
        .unzip()
}

/// [`bath_excitation`] with `İ` from second-order finite differences.
pub fn bath_excitation_fd(noise: &[f64], gamma: &[f64], dt: f64) -> (Vec<f64>, Vec<bool>) {
    let d = quad::derivative(noise, dt);
    bath_excitation(noise, &d, gamma)
}

/// Everything entering the master equation, on one grid.
#[derive(Debug, Clone)]
pub struct CoefficientSeries {
    pub grid: TimeGrid,
    pub omega0: f64,
    pub sources: MomentSources,
    /// `Ġ/G` and its derivative.
    pub log_deriv: Vec<Complex64>,
    pub log_deriv_dot: Vec<Complex64>,
    pub omega_r: Vec<f64>,
    pub gamma: Vec<f64>,
    pub omega_r_dot: Vec<f64>,
    pub gamma_dot: Vec<f64>,
    /// `N(t)` with definedness flags.
    pub n_bath: Vec<f64>,
    pub n_defined: Vec<bool>,
    /// `γN = γI + İ`, finite everywhere.
    pub gamma_n: Vec<f64>,
    /// Force `f` and `ḟ`.
    pub force: Vec<Complex64>,
    pub force_dot: Vec<Complex64>,
    /// `δ = J̇_sq − 2(Ġ/G) J_sq`.
    pub delta: Vec<Complex64>,
}

impl CoefficientSeries {
    pub fn build(g: &GreenFunction, env: &EnvInitState, cutoff: &FrequencyCutoff, opts: NoiseOptions) -> Result<Self> {
        let sources = moment_sources(g, env, cutoff, opts)?;
        Self::from_sources(g, sources)
    }

    pub fn from_sources(g: &GreenFunction, s: MomentSources) -> Result<Self> {
        let l = green::log_derivative(g)?;
        let ld = green::log_derivative_dot(g)?;
        let omega_r: Vec<f64> = l.iter().map(|v| -v.im).collect();
        let gamma: Vec<f64> = l.iter().map(|v| -2.0 * v.re).collect();
        let (n_bath, n_defined) = bath_excitation(&s.noise, &s.noise_dot, &gamma);
        let n = l.len();
        let mut force = Vec::with_capacity(n);
        let mut force_dot = Vec::with_capacity(n);
        let mut delta = Vec::with_capacity(n);
        for k in 0..n {
            let (f0, f1, f2) = (s.displacement[k], s.displacement_dot[k], s.displacement_ddot[k]);
            force.push(f1 - l[k] * f0);
            force_dot.push(f2 - ld[k] * f0 - l[k] * f1);
            delta.push(s.squeeze_dot[k] - 2.0 * l[k] * s.squeeze[k]);
        }
        Ok(Self {
            grid: s.grid,
            omega0: g.omega0(),
            gamma_n: s.noise.iter().zip(&s.noise_dot).zip(&gamma).map(|((i, d), g)| g * i + d).collect(),
            omega_r_dot: ld.iter().map(|v| -v.im).collect(),
            gamma_dot: ld.iter().map(|v| -2.0 * v.re).collect(),
            log_deriv: l,
            log_deriv_dot: ld,
            omega_r,
            gamma,
            n_bath,
            n_defined,
            force,
            force_dot,
            delta,
            sources: s,
        })
    }

    /// Replace the force (external driving enters here).
    pub fn with_force(mut self, force: Vec<Complex64>, force_dot: Vec<Complex64>) -> Result<Self> {
        self.grid.check_len(force.len(), "force")?;
        self.grid.check_len(force_dot.len(), "force_dot")?;
        self.force = force;
        self.force_dot = force_dot;
        Ok(self)
    }
}

/// Weak-coupling, long-time constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovLimit {
    pub gamma: f64,
    pub omega_r: f64,
}

/// `γ^M = 2πλ² J(ω0)`, `ω_r^M = ω0 + λ² Δ(ω0)`.
pub fn markov_limit(j: &SpectralDensity, omega0: f64, lambda: f64, cutoff: &FrequencyCutoff) -> Result<MarkovLimit> {
    if !j.is_continuum() {
        return Err(Error::UnsupportedVariant { op: "markov_limit", variant: "discrete" });
    }
    let l2 = lambda * lambda;
    Ok(MarkovLimit {
        gamma: 2.0 * PI * l2 * spectral::density(j, omega0, cutoff)?,
        omega_r: omega0 + l2 * spectral::lamb_shift(j, omega0, cutoff)?,
    })
}

/// Second-order `(ω_r, γ)` of the Lorentzian at time t, λ absorbed into γ0.
pub fn second_order_lorentzian(gamma0: f64, eta: f64, detuning: f64, omega0: f64, t: f64) -> Result<(f64, f64)> {
    if !(eta > 0.0) {
        return Err(invalid("eta", "must be positive"));
    }
    let z = Complex64::new(-eta, detuning);
    let x = 0.5 * gamma0 * eta * quad::phi1(z, t);
    Ok((omega0 + x.im, 2.0 * x.re))
}

/// A maximally displaced mode of the semiclassical limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveMode {
    pub omega: f64,
    pub coupling: f64,
    pub theta: f64,
}

/// `F_cl` and `f_cl` at fixed `ε = λ|α_max|`.
pub fn semiclassical_limit(
    omega0: f64,
    modes: &[DriveMode],
    epsilon: f64,
    grid: &TimeGrid,
) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut f_big = vec![ZERO; grid.len()];
    let mut f_small = vec![ZERO; grid.len()];
    for m in modes {
        let c = Complex64::from_polar(epsilon * m.coupling, m.theta);
        let d = omega0 - m.omega;
        for (k, t) in grid.times().enumerate() {
            let carrier = Complex64::from_polar(1.0, -omega0 * t);
            f_big[k] += -I * c * carrier * quad::phi1(Complex64::new(0.0, d), t);
            f_small[k] += -I * c * Complex64::from_polar(1.0, -m.omega * t);
        }
    }
    (f_big, f_small)
}

/// Peak magnitudes of γ, γN and I at several coupling scales with fitted exponents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingReport {
    pub lambdas: Vec<f64>,
    pub max_gamma: Vec<f64>,
    pub max_gamma_n: Vec<f64>,
    pub max_noise: Vec<f64>,
    pub exponent_gamma: f64,
    pub exponent_gamma_n: f64,
    pub exponent_noise: f64,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn power_law_exponent(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

impl ScalingReport {
    pub fn from_series(lambdas: &[f64], series: &[CoefficientSeries]) -> Self {
        let peak = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let max_gamma: Vec<f64> = series.iter().map(|c| peak(&c.gamma)).collect();
        let max_gamma_n: Vec<f64> = series.iter().map(|c| peak(&c.gamma_n)).collect();
        let max_noise: Vec<f64> = series.iter().map(|c| peak(&c.sources.noise)).collect();
        Self {
            lambdas: lambdas.to_vec(),
            exponent_gamma: power_law_exponent(lambdas, &max_gamma),
            exponent_gamma_n: power_law_exponent(lambdas, &max_gamma_n),
            exponent_noise: power_law_exponent(lambdas, &max_noise),
            max_gamma,
            max_gamma_n,
            max_noise,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::{green_flat, green_lorentzian_closed, solve_volterra};
    use crate::spectral::BathMode;
    use approx::assert_abs_diff_eq;

    fn full() -> FrequencyCutoff {
        FrequencyCutoff::full_axis(0.02, 30.0).unwrap()
    }

    #[test]
    fn squeezing_bound_is_enforced() {
        let m = ModeRef::Index(0);
        assert!(SqueezedMode::new(m, Complex64::new(0.5, 0.0), 0.0).is_err());
        assert!(SqueezedMode::new(m, Complex64::new(0.0, 2.0f64.sqrt()), 1.0).is_ok());
        let s = SqueezedMode::squeezed_thermal(m, 0.4, 0.3, 0.2).unwrap();
        assert!(s.pair.norm_sqr() <= s.occupation * (s.occupation + 1.0) + 1e-12);
        // Pure squeezed vacuum saturates the bound.
        let v = SqueezedMode::squeezed_thermal(m, 0.7, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(v.pair.norm_sqr(), v.occupation * (v.occupation + 1.0), epsilon = 1e-12);
        assert!(EnvInitState::thermal(0.0).is_err());
    }

    #[test]
    fn flat_coefficients_are_constant() {
        let grid = TimeGrid::new(0.01, 300).unwrap();
        let g = green_flat(0.4, 1.0, grid).unwrap();
        let c = CoefficientSeries::build(&g, &EnvInitState::thermal(1.0).unwrap(), &full(), NoiseOptions::default())
            .unwrap();
        for k in 0..grid.len() {
            assert_eq!(c.omega_r[k], 1.0);
            assert_eq!(c.gamma[k], 0.4);
            assert_eq!(c.force[k], ZERO);
            assert_eq!(c.delta[k], ZERO);
        }
        assert_eq!(c.sources.noise[0], 0.0);
    }

    #[test]
    fn zero_temperature_has_no_noise() {
        let grid = TimeGrid::new(0.05, 100).unwrap();
        let g = green_lorentzian_closed(0.5, 0.3, 1.0, 1.0, grid).unwrap();
        let c =
            CoefficientSeries::build(&g, &EnvInitState::zero_temperature(), &full(), NoiseOptions::default()).unwrap();
        assert!(c.sources.noise.iter().all(|v| *v == 0.0));
        assert!(c.n_bath.iter().zip(&c.n_defined).all(|(n, d)| !d || *n == 0.0));
        assert!(!c.n_defined[0]);
    }

    #[test]
    fn lorentzian_exact_coefficients_vs_closed_forms() {
        // ω_r = ω0 − Im X, γ = −2 Re X with X the root-weighted ratio of the closed form.
        let (g0, eta, wc, w0) = (0.6, 0.4, 1.3, 1.0);
        let grid = TimeGrid::new(0.05, 400).unwrap();
        let g = green_lorentzian_closed(g0, eta, wc, w0, grid).unwrap();
        let (wr, ga) = omega_gamma(&g).unwrap();
        let (m1, m2, _) = green::lorentzian_roots(g0, eta, w0 - wc);
        for (k, t) in grid.times().enumerate() {
            let (e1, e2) = ((m1 * t).exp(), (m2 * t).exp());
            let x = m1 * m2 * (e1 - e2) / (m2 * e1 - m1 * e2);
            assert_abs_diff_eq!(wr[k], w0 - x.im, epsilon = 1e-8);
            assert_abs_diff_eq!(ga[k], -2.0 * x.re, epsilon = 1e-8);
        }
        assert_abs_diff_eq!(wr[0], w0);
        assert_abs_diff_eq!(ga[0], 0.0);
    }

    #[test]
    fn discrete_noise_matches_direct_sum() {
        let modes: Vec<BathMode> =
            (0..5).map(|k| BathMode::new(0.6 + 0.2 * k as f64, Complex64::new(0.05, 0.02 * k as f64))).collect();
        let j = SpectralDensity::discrete(modes.clone()).unwrap();
        let grid = TimeGrid::new(0.01, 500).unwrap();
        let cut = FrequencyCutoff::window(0.0, 3.0).unwrap();
        let g = solve_volterra(&j, 1.0, grid, &cut).unwrap();
        let env = EnvInitState::thermal(2.0).unwrap();
        let s = moment_sources(&g, &env, &cut, NoiseOptions::default()).unwrap();
        let k = 400;
        let mut direct = 0.0;
        for m in &modes {
            let a = g.exp_convolution(m.omega)[k];
            direct += m.coupling.norm_sqr() * bose(m.omega, 2.0) * a.norm_sqr();
        }
        assert_abs_diff_eq!(s.noise[k], direct, epsilon = 1e-15);
        // İ analytic vs finite differences.
        let fd = quad::derivative(&s.noise, grid.dt());
        for k in 10..490 {
            assert!((fd[k] - s.noise_dot[k]).abs() < 1e-5);
        }
    }

    #[test]
    fn displacement_matches_driving_convolution_and_laplace_limit() {
        let (g0, eta, wc, w0) = (0.5, 0.8, 1.0, 1.0);
        let grid = TimeGrid::new(0.02, 3000).unwrap();
        let g = green_lorentzian_closed(g0, eta, wc, w0, grid).unwrap();
        let (wd, gd, alpha) = (1.2, 0.1, Complex64::new(2.0, 0.5));
        let env = EnvInitState::thermal(1.0)
            .unwrap()
            .with_displaced(ModeRef::Explicit { omega: wd, coupling: Complex64::new(gd, 0.0) }, alpha);
        let s = moment_sources(&g, &env, &full(), NoiseOptions::default()).unwrap();
        let j = g.density().unwrap();
        let ghat = green::green_laplace(j, w0, wd, &full()).unwrap();
        let t = grid.t_max();
        let expect = -I * alpha * gd * ghat * Complex64::from_polar(1.0, -wd * t);
        assert!((s.displacement[grid.steps()] - expect).norm() < 1e-8);
        // Zero coupling to the displaced mode.
        let env0 =
            EnvInitState::thermal(1.0).unwrap().with_displaced(ModeRef::Explicit { omega: wd, coupling: ZERO }, alpha);
        let s0 = moment_sources(&g, &env0, &full(), NoiseOptions::default()).unwrap();
        assert!(s0.displacement.iter().all(|v| *v == ZERO));
    }

    #[test]
    fn gamma_n_equals_gamma_times_n() {
        let grid = TimeGrid::new(0.02, 500).unwrap();
        let g = green_lorentzian_closed(0.5, 0.8, 1.0, 1.1, grid).unwrap();
        let c = CoefficientSeries::build(&g, &EnvInitState::thermal(1.0).unwrap(), &full(), NoiseOptions::default())
            .unwrap();
        for k in 0..grid.len() {
            if c.n_defined[k] {
                let r = c.gamma_n[k] - c.gamma[k] * c.n_bath[k];
                assert!(r.abs() < 1e-12 * (1.0 + c.gamma_n[k].abs()));
            }
        }
        assert!(c.n_defined[1..].iter().all(|d| *d));
    }

    #[test]
    fn markov_limits() {
        let f = SpectralDensity::flat(0.3).unwrap();
        let m = markov_limit(&f, 1.0, 0.5, &full()).unwrap();
        assert_abs_diff_eq!(m.gamma, 0.25 * 0.3, epsilon = 1e-15);
        assert_eq!(m.omega_r, 1.0);
        let (g0, eta, wc, w0) = (1.0, 0.4, 0.7, 1.0);
        let l = SpectralDensity::lorentzian(g0, eta, wc).unwrap();
        let m = markov_limit(&l, w0, 1.0, &full()).unwrap();
        let d = w0 - wc;
        assert_abs_diff_eq!(m.gamma, g0 * eta * eta / (d * d + eta * eta), epsilon = 1e-14);
        let (wr, ga) = second_order_lorentzian(g0, eta, d, w0, 2000.0 / eta).unwrap();
        assert_abs_diff_eq!(m.omega_r, wr, epsilon = 1e-10);
        assert_abs_diff_eq!(m.gamma, ga, epsilon = 1e-10);
        let r = SpectralDensity::lorentzian(g0, eta, w0).unwrap();
        assert_abs_diff_eq!(markov_limit(&r, w0, 1.0, &full()).unwrap().gamma, g0, epsilon = 1e-14);
    }

    #[test]
    fn second_order_small_width_limit() {
        // η → 0 at fixed γ0 η: two coupled modes.
        let (c, d, w0, t) = (0.02, 0.3, 1.0, 7.0);
        let eta = 1e-7;
        let (wr, ga) = second_order_lorentzian(c / eta, eta, d, w0, t).unwrap();
        assert_abs_diff_eq!(wr, w0 + c / (2.0 * d) * (1.0 - (d * t).cos()), epsilon = 1e-7);
        assert_abs_diff_eq!(ga, c / d * (d * t).sin(), epsilon = 1e-7);
        let (wr0, ga0) = second_order_lorentzian(0.5, 0.3, d, w0, 0.0).unwrap();
        assert_eq!((wr0, ga0), (w0, 0.0));
    }

    #[test]
    fn semiclassical_forms() {
        let grid = TimeGrid::new(0.1, 100).unwrap();
        let m = DriveMode { omega: 1.0, coupling: 0.3, theta: 0.0 };
        let (f_big, f_small) = semiclassical_limit(1.0, &[m], 0.5, &grid);
        for (k, t) in grid.times().enumerate() {
            let expect = -I * 0.5 * 0.3 * t * Complex64::from_polar(1.0, -t);
            assert!((f_big[k] - expect).norm() < 1e-13);
            assert!((f_small[k] + I * 0.15 * Complex64::from_polar(1.0, -t)).norm() < 1e-14);
        }
        let m = DriveMode { omega: 1.4, coupling: 0.3, theta: 0.7 };
        let (f_big, _) = semiclassical_limit(1.0, &[m], 0.5, &grid);
        for (k, t) in grid.times().enumerate() {
            let e = Complex64::from_polar(0.15, 0.7);
            let expect = -e * (Complex64::from_polar(1.0, -1.4 * t) - Complex64::from_polar(1.0, -t)) / (1.0 - 1.4);
            assert!((f_big[k] - expect).norm() < 1e-13);
        }
        let (a, b) = semiclassical_limit(1.0, &[m], 0.0, &grid);
        assert!(a.iter().chain(&b).all(|v| v.norm() == 0.0));
    }
}
