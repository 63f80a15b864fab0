//! The amplitude propagator G(t) of the central mode.
//!
//! `Ġ + iω0 G + ∫_0^t K(t−τ) G(τ) dτ = 0`, `G(0) = 1`.
//!
//! Everything is stored in the frame rotating at ω0 internally; the public
//! samples are in the lab frame.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::TimeGrid;
use crate::quad::{self, filon_linear_weights, phi1, phi2, CumulativeRule};
use crate::spectral::{self, FrequencyCutoff, SpectralDensity};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Threshold on |G| below which the log-derivative is declared singular.
pub const ZERO_CROSSING_THRESHOLD: f64 = 1e-10;
/// Confluence threshold on the Lorentzian root discriminant.
pub const DEGENERATE_ROOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreenMethod {
    Volterra,
    ClosedFlat,
    ClosedLorentzian,
    SecondOrder,
}

/// One term `c t^p e^{μt}` of an envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpTerm {
    pub coef: Complex64,
    pub rate: Complex64,
    pub power: u8,
}

/// `G(t) = e^{−iω0 t} Σ_k c_k t^{p_k} e^{μ_k t}` with `p_k ∈ {0, 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpSum {
    pub omega0: f64,
    pub terms: Vec<ExpTerm>,
}

impl ExpSum {
    /// Envelope and its first two derivatives.
    fn envelope(&self, t: f64) -> [Complex64; 3] {
        let mut h = [ZERO; 3];
        for term in &self.terms {
            let e = term.coef * (term.rate * t).exp();
            let m = term.rate;
            if term.power == 0 {
                h[0] += e;
                h[1] += e * m;
                h[2] += e * m * m;
            } else {
                h[0] += e * t;
                h[1] += e * (1.0 + m * t);
                h[2] += e * (2.0 * m + m * m * t);
            }
        }
        h
    }

    /// `(G, Ġ, G̈)` at time t.
    pub fn eval(&self, t: f64) -> [Complex64; 3] {
        let [h, hd, hdd] = self.envelope(t);
        let w = self.omega0;
        let rot = Complex64::from_polar(1.0, -w * t);
        [rot * h, rot * (hd - I * w * h), rot * (hdd - 2.0 * I * w * hd - w * w * h)]
    }

    /// `∫_0^t G(t−τ) e^{−iωτ} dτ` in closed form.
    pub fn exp_convolution(&self, omega: f64, t: f64) -> Complex64 {
        let mut b = ZERO;
        for term in &self.terms {
            let z = term.rate + I * (omega - self.omega0);
            b += term.coef * if term.power == 0 { phi1(z, t) } else { phi2(z, t) };
        }
        Complex64::from_polar(1.0, -omega * t) * b
    }
}

/// Sampled Green function with its first two derivatives.
#[derive(Debug, Clone)]
pub struct GreenFunction {
    grid: TimeGrid,
    omega0: f64,
    method: GreenMethod,
    density: Option<SpectralDensity>,
    cutoff: Option<FrequencyCutoff>,
    g: Vec<Complex64>,
    gdot: Vec<Complex64>,
    gddot: Vec<Complex64>,
    closed: Option<ExpSum>,
    diagnostics: Vec<String>,
}

impl GreenFunction {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    pub fn omega0(&self) -> f64 {
        self.omega0
    }
    pub fn method(&self) -> GreenMethod {
        self.method
    }
    pub fn density(&self) -> Option<&SpectralDensity> {
        self.density.as_ref()
    }
    pub fn cutoff(&self) -> Option<&FrequencyCutoff> {
        self.cutoff.as_ref()
    }
    pub fn g(&self) -> &[Complex64] {
        &self.g
    }
    pub fn gdot(&self) -> &[Complex64] {
        &self.gdot
    }
    pub fn gddot(&self) -> &[Complex64] {
        &self.gddot
    }
    pub fn closed_form(&self) -> Option<&ExpSum> {
        self.closed.as_ref()
    }
    pub fn diagnostics(&self) -> &[String] {
        &self.diagnostics
    }

    fn rotation(&self) -> Vec<Complex64> {
        self.grid.times().map(|t| Complex64::from_polar(1.0, -self.omega0 * t)).collect()
    }

    fn from_closed(grid: TimeGrid, sum: ExpSum, method: GreenMethod, density: Option<SpectralDensity>) -> Self {
        let n = grid.len();
        let (mut g, mut gd, mut gdd) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for t in grid.times() {
            let [a, b, c] = sum.eval(t);
            g.push(a);
            gd.push(b);
            gdd.push(c);
        }
        g[0] = Complex64::new(1.0, 0.0);
        let mut out = Self {
            grid,
            omega0: sum.omega0,
            method,
            density,
            cutoff: None,
            g,
            gdot: gd,
            gddot: gdd,
            closed: Some(sum),
            diagnostics: Vec::new(),
        };
        out.check_contractive();
        out
    }

    fn check_contractive(&mut self) {
        if let Some((k, v)) = self.g.iter().enumerate().map(|(k, v)| (k, v.norm())).find(|(_, v)| *v > 1.0 + 1e-8) {
            let msg = format!("|G| = {v} exceeds 1 at t = {}", self.grid.t(k));
            log::warn!("{msg}");
            self.diagnostics.push(msg);
        }
    }

    /// `A_ω(t_k) = ∫_0^{t_k} G(t_k − τ) e^{−iωτ} dτ` on the grid.
    ///
    /// Closed forms are used when available; sampled G uses Filon weights for
    /// the linear interpolant of the rotating-frame envelope.
    pub fn exp_convolution(&self, omega: f64) -> Vec<Complex64> {
        if let Some(sum) = &self.closed {
            return self.grid.times().map(|t| sum.exp_convolution(omega, t)).collect();
        }
        let dt = self.grid.dt();
        let delta = omega - self.omega0;
        let (w0, w1) = filon_linear_weights(delta * dt);
        let step = Complex64::from_polar(1.0, -delta * dt);
        let rot = self.rotation();
        let env: Vec<Complex64> = self.g.iter().zip(&rot).map(|(g, r)| g * r.conj()).collect();
        let mut out = Vec::with_capacity(self.g.len());
        let mut acc = ZERO;
        out.push(ZERO);
        for k in 0..env.len() - 1 {
            acc = step * (acc + dt * (w0 * env[k] + w1 * env[k + 1]));
            out.push(acc * rot[k + 1]);
        }
        out
    }

    /// Time-domain Laplace transform `∫_0^T G(t) e^{iωt} dt` of the samples
    /// (Filon on the envelope); approximates Ĝ(−iω) once G has decayed.
    pub fn laplace_numeric(&self, omega: f64) -> Complex64 {
        let dt = self.grid.dt();
        let delta = omega - self.omega0;
        let (w0, w1) = filon_linear_weights(delta * dt);
        let rot = self.rotation();
        let mut acc = ZERO;
        for k in 0..self.g.len() - 1 {
            let e0 = self.g[k] * rot[k].conj();
            let e1 = self.g[k + 1] * rot[k + 1].conj();
            acc += Complex64::from_polar(dt, delta * self.grid.t(k)) * (w0 * e0 + w1 * e1);
        }
        acc
    }

    /// First time where G passes through zero: a sample, or the closest point
    /// of the straight segment between rotating-frame samples, lies below the
    /// threshold relative to the neighbouring magnitudes. Plain exponential
    /// decay never triggers it.
    pub fn first_zero_crossing(&self) -> Option<f64> {
        let rot = self.rotation();
        let env: Vec<Complex64> = self.g.iter().zip(&rot).map(|(g, r)| g * r.conj()).collect();
        let n = env.len();
        for k in 0..n {
            let left = if k > 0 { env[k - 1].norm() } else { 1.0 };
            let right = if k + 1 < n { env[k + 1].norm() } else { left };
            let scale = left.max(right);
            if env[k].norm() < ZERO_CROSSING_THRESHOLD * scale || scale == 0.0 {
                return Some(self.grid.t(k));
            }
            if k + 1 < n {
                let (a, b) = (env[k], env[k + 1]);
                let d = b - a;
                let dn = d.norm_sqr();
                if dn > 0.0 {
                    let s = (-(a.conj() * d).re / dn).clamp(0.0, 1.0);
                    if (a + d * s).norm() < ZERO_CROSSING_THRESHOLD * a.norm().max(b.norm()) {
                        return Some(self.grid.t(k) + s * self.grid.dt());
                    }
                }
            }
        }
        None
    }

    /// Rebuild on a new grid with the same closed form; `None` for sampled methods.
    pub fn resampled(&self, grid: TimeGrid) -> Option<Self> {
        let sum = self.closed.clone()?;
        let mut g = Self::from_closed(grid, sum, self.method, self.density.clone());
        g.cutoff = self.cutoff;
        Some(g)
    }
}

/// `Ġ/G` on the grid; errors at the first (near-)zero of G.
pub fn log_derivative(g: &GreenFunction) -> Result<Vec<Complex64>> {
    if let Some(time) = g.first_zero_crossing() {
        return Err(Error::ZeroCrossing { time });
    }
    if let Some(rate) = single_exponent(g) {
        return Ok(vec![rate; g.g.len()]);
    }
    Ok(g.g.iter().zip(&g.gdot).map(|(a, b)| b / a).collect())
}

/// `Ġ/G` of a pure exponential, exact without sampling.
fn single_exponent(g: &GreenFunction) -> Option<Complex64> {
    match g.closed.as_ref()?.terms.as_slice() {
        [t] if t.power == 0 => Some(Complex64::new(0.0, -g.omega0) + t.rate),
        _ => None,
    }
}

/// Time derivative of `Ġ/G`: `G̈/G − (Ġ/G)²`.
pub fn log_derivative_dot(g: &GreenFunction) -> Result<Vec<Complex64>> {
    let l = log_derivative(g)?;
    if single_exponent(g).is_some() {
        return Ok(vec![Complex64::new(0.0, 0.0); l.len()]);
    }
    Ok(g.g.iter().zip(&g.gddot).zip(&l).map(|((a, c), l)| c / a - l * l).collect())
}

/// Product-trapezoidal solution of the Volterra equation.
pub fn solve_volterra(
    j: &SpectralDensity,
    omega0: f64,
    grid: TimeGrid,
    cutoff: &FrequencyCutoff,
) -> Result<GreenFunction> {
    if matches!(j, SpectralDensity::Flat { .. }) && cutoff.full_axis {
        return Err(Error::FlatKernel);
    }
    if !omega0.is_finite() {
        return Err(invalid("omega0", "must be finite"));
    }
    let k = spectral::rotated_kernel_series(j, omega0, &grid, cutoff)?;
    let mut diagnostics = Vec::new();
    let scale = k[0].norm().sqrt();
    if grid.dt() * omega0.abs().max(scale) > 0.5 {
        let msg = format!("time step {} is coarse for omega0 = {omega0}, kernel scale {scale}", grid.dt());
        log::warn!("{msg}");
        diagnostics.push(msg);
    }
    let (env, envd, envdd) = volterra_envelope(&k, grid.dt());
    let rot: Vec<Complex64> = grid.times().map(|t| Complex64::from_polar(1.0, -omega0 * t)).collect();
    let w = omega0;
    let g = env.iter().zip(&rot).map(|(h, r)| r * h).collect();
    let gdot = (0..env.len()).map(|n| rot[n] * (envd[n] - I * w * env[n])).collect();
    let gddot = (0..env.len()).map(|n| rot[n] * (envdd[n] - 2.0 * I * w * envd[n] - w * w * env[n])).collect();
    let mut out = GreenFunction {
        grid,
        omega0,
        method: GreenMethod::Volterra,
        density: Some(j.clone()),
        cutoff: Some(*cutoff),
        g,
        gdot,
        gddot,
        closed: None,
        diagnostics,
    };
    out.check_contractive();
    Ok(out)
}

/// Envelope `h`, `ḣ`, `ḧ` of `ḣ = −∫_0^t k(t−τ) h(τ) dτ`, `h(0) = 1`.
fn volterra_envelope(k: &[Complex64], dt: f64) -> (Vec<Complex64>, Vec<Complex64>, Vec<Complex64>) {
    let n = k.len();
    let mut h = vec![ZERO; n];
    let mut hd = vec![ZERO; n];
    h[0] = Complex64::new(1.0, 0.0);
    let denom = 1.0 + 0.25 * dt * dt * k[0];
    for m in 0..n - 1 {
        // Trapezoid of ∫_0^{t_{m+1}} k(t_{m+1} − τ) h(τ) dτ without the implicit end point.
        let mut s = 0.5 * k[m + 1] * h[0];
        for jj in 1..=m {
            s += k[m + 1 - jj] * h[jj];
        }
        s *= dt;
        h[m + 1] = (h[m] + 0.5 * dt * (hd[m] - s)) / denom;
        hd[m + 1] = -s - 0.5 * dt * k[0] * h[m + 1];
    }
    // ḧ = −k(t) h(0) − ∫_0^t k(s) ḣ(t − s) ds, with ḣ(0) = 0.
    let mut hdd = vec![ZERO; n];
    hdd[0] = -k[0];
    for m in 1..n {
        let mut s = 0.5 * k[0] * hd[m];
        for jj in 1..m {
            s += k[m - jj] * hd[jj];
        }
        hdd[m] = -k[m] - dt * s;
    }
    (h, hd, hdd)
}

/// `G = e^{−iω0 t − γ0 t/2}` (Dirac kernel with the half-weight convention).
pub fn green_flat(gamma0: f64, omega0: f64, grid: TimeGrid) -> Result<GreenFunction> {
    if !(gamma0 >= 0.0) {
        return Err(invalid("gamma0", "must be nonnegative"));
    }
    let sum = ExpSum {
        omega0,
        terms: vec![ExpTerm { coef: Complex64::new(1.0, 0.0), rate: Complex64::new(-0.5 * gamma0, 0.0), power: 0 }],
    };
    let density = SpectralDensity::flat(gamma0).ok();
    Ok(GreenFunction::from_closed(grid, sum, GreenMethod::ClosedFlat, density))
}

/// Roots of `μ² + (η − iΔ)μ + γ0η/2 = 0`, `Δ = ω0 − ω_c`, and whether they are confluent.
pub fn lorentzian_roots(gamma0: f64, eta: f64, detuning: f64) -> (Complex64, Complex64, bool) {
    let b = Complex64::new(eta, -detuning);
    let disc = b * b - 2.0 * gamma0 * eta;
    if disc.norm() < DEGENERATE_ROOT_TOL {
        let mu = -0.5 * b;
        return (mu, mu, true);
    }
    let s = disc.sqrt();
    // Avoid cancellation: the larger root first, the other from the product.
    let q = -0.5 * (b + if (b.conj() * s).re >= 0.0 { s } else { -s });
    let c = Complex64::new(0.5 * gamma0 * eta, 0.0);
    let (m1, m2) = (q, if q.norm() > 0.0 { c / q } else { ZERO });
    (m1, m2, false)
}

/// Closed-form Green function of the full-axis Lorentzian density.
pub fn green_lorentzian_closed(
    gamma0: f64,
    eta: f64,
    omega_c: f64,
    omega0: f64,
    grid: TimeGrid,
) -> Result<GreenFunction> {
    let density = SpectralDensity::lorentzian(gamma0, eta, omega_c)?;
    let (m1, m2, confluent) = lorentzian_roots(gamma0, eta, omega0 - omega_c);
    let terms = if confluent {
        vec![ExpTerm { coef: Complex64::new(1.0, 0.0), rate: m1, power: 0 }, ExpTerm { coef: -m1, rate: m1, power: 1 }]
    } else {
        let d = m2 - m1;
        vec![ExpTerm { coef: m2 / d, rate: m1, power: 0 }, ExpTerm { coef: -m1 / d, rate: m2, power: 0 }]
    };
    let mut g =
        GreenFunction::from_closed(grid, ExpSum { omega0, terms }, GreenMethod::ClosedLorentzian, Some(density));
    if confluent {
        g.diagnostics.push("degenerate Lorentzian roots: confluent formula used".into());
    }
    Ok(g)
}

/// Analytic `Ĝ(−iω) = 1/(i(ω0 + Δ(ω) − ω) + πJ(ω))`.
pub fn green_laplace(j: &SpectralDensity, omega0: f64, omega: f64, cutoff: &FrequencyCutoff) -> Result<Complex64> {
    let k = spectral::kernel_laplace(j, omega, cutoff)?;
    Ok(1.0 / (I * (omega0 - omega) + k))
}

/// Second-order (in λ) propagator data.
#[derive(Debug, Clone)]
pub struct SecondOrderGreen {
    pub grid: TimeGrid,
    pub omega0: f64,
    /// `e^{−iω0 t}(1 − λ² ∫_0^t (t − s) k(s) ds)`.
    pub g2: Vec<Complex64>,
    /// `−iω0 − λ² ∫_0^t k(s) ds`, k the rotating-frame kernel.
    pub log_deriv: Vec<Complex64>,
    /// `−λ² k(t)`, the time derivative of `log_deriv`.
    pub log_deriv_dot: Vec<Complex64>,
    /// `λ² ∫_0^t (t − s) k(s) ds`.
    exponent: Vec<Complex64>,
    density: SpectralDensity,
}

impl SecondOrderGreen {
    /// Green function whose log-derivative is exactly the second-order one,
    /// `G = exp(−iω0 t − λ² ∫_0^t (t − s) k(s) ds)`.
    pub fn resummed(&self) -> GreenFunction {
        let n = self.grid.len();
        let mut g = Vec::with_capacity(n);
        let mut gd = Vec::with_capacity(n);
        let mut gdd = Vec::with_capacity(n);
        for k in 0..n {
            let t = self.grid.t(k);
            let v = (Complex64::new(0.0, -self.omega0 * t) - self.exponent[k]).exp();
            let l = self.log_deriv[k];
            g.push(v);
            gd.push(l * v);
            gdd.push((self.log_deriv_dot[k] + l * l) * v);
        }
        GreenFunction {
            grid: self.grid,
            omega0: self.omega0,
            method: GreenMethod::SecondOrder,
            density: Some(self.density.clone()),
            cutoff: None,
            g,
            gdot: gd,
            gddot: gdd,
            closed: None,
            diagnostics: Vec::new(),
        }
    }
}

/// Weak-coupling expansion of G and `Ġ/G` to order λ².
pub fn green_second_order(
    j: &SpectralDensity,
    omega0: f64,
    lambda: f64,
    grid: TimeGrid,
    cutoff: &FrequencyCutoff,
) -> Result<SecondOrderGreen> {
    if !j.is_continuum() {
        return Err(Error::UnsupportedVariant { op: "green_second_order", variant: "discrete" });
    }
    let l2 = lambda * lambda;
    let n = grid.len();
    let (kt, int1, int2): (Vec<Complex64>, Vec<Complex64>, Vec<Complex64>) = match (j, cutoff.full_axis) {
        (SpectralDensity::Lorentzian { gamma0, eta, omega_c }, true) => {
            let z = Complex64::new(-eta, omega0 - omega_c);
            let a = 0.5 * gamma0 * eta;
            let mut k = Vec::with_capacity(n);
            let mut i1 = Vec::with_capacity(n);
            let mut i2 = Vec::with_capacity(n);
            for t in grid.times() {
                k.push(a * (z * t).exp());
                i1.push(a * phi1(z, t));
                // ∫_0^t (t − s) e^{zs} ds = t φ1 − φ2.
                i2.push(a * (t * phi1(z, t) - phi2(z, t)));
            }
            (k, i1, i2)
        }
        (SpectralDensity::Flat { gamma0 }, true) => {
            // Half of the Dirac weight sits inside [0, t]; no pointwise kernel for t > 0.
            let k = vec![ZERO; n];
            let i1 = vec![Complex64::new(0.5 * gamma0, 0.0); n];
            let i2 = grid.times().map(|t| Complex64::new(0.5 * gamma0 * t, 0.0)).collect();
            (k, i1, i2)
        }
        _ => {
            let k = spectral::rotated_kernel_series(j, omega0, &grid, cutoff)?;
            let i1 = quad::cumulative(&k, grid.dt(), CumulativeRule::Cubic);
            let i2 = quad::cumulative(&i1, grid.dt(), CumulativeRule::Cubic);
            (k, i1, i2)
        }
    };
    let mut g2 = Vec::with_capacity(n);
    let mut ld = Vec::with_capacity(n);
    for (k, t) in grid.times().enumerate() {
        g2.push(Complex64::from_polar(1.0, -omega0 * t) * (1.0 - l2 * int2[k]));
        ld.push(Complex64::new(0.0, -omega0) - l2 * int1[k]);
    }
    Ok(SecondOrderGreen {
        grid,
        omega0,
        g2,
        log_deriv: ld,
        log_deriv_dot: kt.iter().map(|k| -l2 * k).collect(),
        exponent: int2.iter().map(|v| l2 * v).collect(),
        density: j.scaled(lambda),
    })
}

/// Exact Green function for the density: closed form when one exists,
/// Volterra otherwise.
pub fn solve(j: &SpectralDensity, omega0: f64, grid: TimeGrid, cutoff: &FrequencyCutoff) -> Result<GreenFunction> {
    match (j, cutoff.full_axis) {
        (SpectralDensity::Flat { gamma0 }, true) => {
            let mut g = green_flat(*gamma0, omega0, grid)?;
            g.cutoff = Some(*cutoff);
            Ok(g)
        }
        (SpectralDensity::Lorentzian { gamma0, eta, omega_c }, true) => {
            let mut g = green_lorentzian_closed(*gamma0, *eta, *omega_c, omega0, grid)?;
            g.cutoff = Some(*cutoff);
            Ok(g)
        }
        _ => solve_volterra(j, omega0, grid, cutoff),
    }
}
