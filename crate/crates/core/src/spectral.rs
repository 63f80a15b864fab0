//! Spectral densities J(ω), memory kernels, Lamb shifts and bath discretization.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::TimeGrid;
use crate::quad::{self, filon_linear_weights, QuadOptions};

/// One discrete bath mode `g (a† c + h.c.)` at frequency `omega`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathMode {
    pub omega: f64,
    pub coupling: Complex64,
}

impl BathMode {
    pub fn new(omega: f64, coupling: Complex64) -> Self {
        Self { omega, coupling }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Linear,
    /// Fritsch-Carlson monotone piecewise cubic Hermite.
    MonotoneCubic,
}

/// Sampled density on a strictly increasing grid; zero outside the table.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    omegas: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    interpolation: Interpolation,
}

impl TabulatedDensity {
    pub fn new(omegas: Vec<f64>, values: Vec<f64>, interpolation: Interpolation) -> Result<Self> {
        if omegas.len() != values.len() || omegas.len() < 2 {
            return Err(invalid("tabulated", "need at least two (frequency, density) pairs"));
        }
        if omegas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("tabulated", "frequency grid must be strictly increasing"));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(invalid("tabulated", "density samples must be finite and nonnegative"));
        }
        let slopes = match interpolation {
            Interpolation::Linear => Vec::new(),
            Interpolation::MonotoneCubic => fritsch_carlson(&omegas, &values),
        };
        Ok(Self { omegas, values, slopes, interpolation })
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn range(&self) -> (f64, f64) {
        (self.omegas[0], *self.omegas.last().unwrap())
    }

    pub fn eval(&self, w: f64) -> f64 {
        let (lo, hi) = self.range();
        if !(w >= lo && w <= hi) {
            return 0.0;
        }
        let i = match self.omegas.binary_search_by(|x| x.total_cmp(&w)) {
            Ok(i) => return self.values[i],
            Err(i) => i - 1,
        };
        let (x0, x1) = (self.omegas[i], self.omegas[i + 1]);
        let h = x1 - x0;
        let s = (w - x0) / h;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        match self.interpolation {
            Interpolation::Linear => y0 + s * (y1 - y0),
            Interpolation::MonotoneCubic => {
                let (m0, m1) = (self.slopes[i], self.slopes[i + 1]);
                let s2 = s * s;
                let s3 = s2 * s;
                (2.0 * s3 - 3.0 * s2 + 1.0) * y0
                    + (s3 - 2.0 * s2 + s) * h * m0
                    + (-2.0 * s3 + 3.0 * s2) * y1
                    + (s3 - s2) * h * m1
            }
        }
        .max(0.0)
    }

    fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out.slopes.iter_mut().for_each(|v| *v *= c);
        out
    }
}

fn fritsch_carlson(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let d: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
    let mut m = vec![0.0; n];
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for i in 1..n - 1 {
        m[i] = if d[i - 1] * d[i] <= 0.0 { 0.0 } else { 0.5 * (d[i - 1] + d[i]) };
    }
    for i in 0..n - 1 {
        if d[i] == 0.0 {
            m[i] = 0.0;
            m[i + 1] = 0.0;
            continue;
        }
        let a = m[i] / d[i];
        let b = m[i + 1] / d[i];
        let r = a * a + b * b;
        if r > 9.0 {
            let tau = 3.0 / r.sqrt();
            m[i] = tau * a * d[i];
            m[i + 1] = tau * b * d[i];
        }
    }
    m
}

/// The coupling landscape of the bath.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralDensity {
    /// `J = γ0 / 2π` on the whole real axis.
    Flat {
        gamma0: f64,
    },
    /// `J = (γ0/2π) η² / ((ω_c − ω)² + η²)`.
    Lorentzian {
        gamma0: f64,
        eta: f64,
        omega_c: f64,
    },
    DiscreteSum(Vec<BathMode>),
    Tabulated(TabulatedDensity),
}

impl SpectralDensity {
    pub fn flat(gamma0: f64) -> Result<Self> {
        check_rate("gamma0", gamma0)?;
        Ok(Self::Flat { gamma0 })
    }

    pub fn lorentzian(gamma0: f64, eta: f64, omega_c: f64) -> Result<Self> {
        check_rate("gamma0", gamma0)?;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(invalid("eta", format!("width must be positive, got {eta}")));
        }
        if !omega_c.is_finite() {
            return Err(invalid("omega_c", "must be finite"));
        }
        Ok(Self::Lorentzian { gamma0, eta, omega_c })
    }

    /// Finite bath. Frequencies must be finite; thermal use additionally
    /// requires them positive, which is checked where occupations are formed.
    pub fn discrete(modes: Vec<BathMode>) -> Result<Self> {
        if modes.is_empty() {
            return Err(invalid("modes", "empty mode list"));
        }
        if modes.iter().any(|m| !m.omega.is_finite() || !m.coupling.norm().is_finite()) {
            return Err(invalid("modes", "non-finite frequency or coupling"));
        }
        Ok(Self::DiscreteSum(modes))
    }

    pub fn tabulated(omegas: Vec<f64>, values: Vec<f64>, interpolation: Interpolation) -> Result<Self> {
        Ok(Self::Tabulated(TabulatedDensity::new(omegas, values, interpolation)?))
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            Self::Flat { .. } => "flat",
            Self::Lorentzian { .. } => "lorentzian",
            Self::DiscreteSum(_) => "discrete",
            Self::Tabulated(_) => "tabulated",
        }
    }

    pub fn is_continuum(&self) -> bool {
        !matches!(self, Self::DiscreteSum(_))
    }

    /// `λ² J`: the density seen at coupling scale λ.
    pub fn scaled(&self, lambda: f64) -> Self {
        let c = lambda * lambda;
        match self {
            Self::Flat { gamma0 } => Self::Flat { gamma0: gamma0 * c },
            Self::Lorentzian { gamma0, eta, omega_c } => {
                Self::Lorentzian { gamma0: gamma0 * c, eta: *eta, omega_c: *omega_c }
            }
            Self::DiscreteSum(m) => Self::DiscreteSum(
                m.iter().map(|b| BathMode { omega: b.omega, coupling: b.coupling * lambda }).collect(),
            ),
            Self::Tabulated(t) => Self::Tabulated(t.scaled(c)),
        }
    }

    /// Frequencies where the density has structure (peak, table edges).
    pub fn features(&self) -> Vec<f64> {
        match self {
            Self::Lorentzian { omega_c, .. } => vec![*omega_c],
            Self::Tabulated(t) => vec![t.range().0, t.range().1],
            _ => Vec::new(),
        }
    }

    /// Smallest frequency scale over which the density changes appreciably.
    pub fn feature_width(&self) -> f64 {
        match self {
            Self::Lorentzian { eta, .. } => *eta,
            Self::Tabulated(t) => {
                let w = t.omegas();
                w.windows(2).map(|p| p[1] - p[0]).fold(f64::INFINITY, f64::min) * 4.0
            }
            _ => f64::INFINITY,
        }
    }
}

fn check_rate(name: &'static str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(invalid(name, format!("must be finite and nonnegative, got {v}")));
    }
    Ok(())
}

/// Frequency window conventions.
///
/// With `full_axis` the flat and Lorentzian kernels, Lamb shifts and Laplace
/// transforms use the whole real axis in closed form. Thermal integrals always
/// run over `[omega_min, omega_max]`: the Planck factor makes them diverge at
/// ω → 0 whenever J(0) ≠ 0, so finite temperature needs `omega_min > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyCutoff {
    pub omega_min: f64,
    pub omega_max: f64,
    pub full_axis: bool,
}

impl FrequencyCutoff {
    pub fn full_axis(omega_min: f64, omega_max: f64) -> Result<Self> {
        Self { omega_min, omega_max, full_axis: true }.validated()
    }

    pub fn window(omega_min: f64, omega_max: f64) -> Result<Self> {
        Self { omega_min, omega_max, full_axis: false }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.omega_max > 0.0 && self.omega_max.is_finite()) {
            return Err(invalid("omega_max", format!("must be positive, got {}", self.omega_max)));
        }
        if !(self.omega_min.is_finite() && self.omega_min < self.omega_max) {
            return Err(invalid("omega_min", "must be finite and below omega_max"));
        }
        if !self.full_axis && self.omega_min < 0.0 {
            return Err(invalid("omega_min", "windowed densities live on nonnegative frequencies"));
        }
        Ok(self)
    }

    /// Frequency range of the thermal integrals.
    pub fn thermal_window(&self, j: &SpectralDensity) -> (f64, f64) {
        let (mut a, mut b) = (self.omega_min.max(0.0), self.omega_max);
        if let SpectralDensity::Tabulated(t) = j {
            a = a.max(t.range().0);
            b = b.min(t.range().1);
        }
        (a, b)
    }
}

/// Support of the kernel integral: `None` means the whole real axis.
fn kernel_support(j: &SpectralDensity, c: &FrequencyCutoff) -> Option<(f64, f64)> {
    match j {
        SpectralDensity::Flat { .. } | SpectralDensity::Lorentzian { .. } if c.full_axis => None,
        SpectralDensity::Tabulated(t) => {
            let (lo, hi) = t.range();
            if c.full_axis {
                Some((lo, hi))
            } else {
                Some((lo.max(c.omega_min), hi.min(c.omega_max)))
            }
        }
        _ => Some((c.omega_min, c.omega_max)),
    }
}

/// Pointwise J(ω) of the model, ignoring any window.
pub fn evaluate(j: &SpectralDensity, w: f64) -> Result<f64> {
    match j {
        SpectralDensity::Flat { gamma0 } => Ok(gamma0 / (2.0 * PI)),
        SpectralDensity::Lorentzian { gamma0, eta, omega_c } => {
            Ok(gamma0 / (2.0 * PI) * eta * eta / ((omega_c - w).powi(2) + eta * eta))
        }
        SpectralDensity::Tabulated(t) => Ok(t.eval(w)),
        SpectralDensity::DiscreteSum(_) => Err(Error::NoPointwiseDensity),
    }
}

/// J(ω) restricted to the kernel support selected by `cutoff`.
pub fn density(j: &SpectralDensity, w: f64, cutoff: &FrequencyCutoff) -> Result<f64> {
    match kernel_support(j, cutoff) {
        Some((a, b)) if w < a || w > b => Ok(0.0),
        _ => evaluate(j, w),
    }
}

/// Memory kernel value: pointwise, or a Dirac delta at t = 0 for the flat density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelValue {
    Value(Complex64),
    /// `weight · δ(t)`.
    Dirac {
        weight: f64,
    },
}

/// `K(t) = ∫ J(ω) e^{−iωt} dω`.
pub fn memory_kernel(j: &SpectralDensity, t: f64, cutoff: &FrequencyCutoff) -> Result<KernelValue> {
    if !(t >= 0.0) {
        return Err(invalid("t", format!("kernel needs t >= 0, got {t}")));
    }
    match j {
        SpectralDensity::Flat { gamma0 } if cutoff.full_axis => Ok(KernelValue::Dirac { weight: *gamma0 }),
        _ => Ok(KernelValue::Value(kernel_value(j, t, cutoff, 0.0)?)),
    }
}

/// Kernel in the frame rotating at `omega0`: `K(t) e^{iω0 t}`.
fn kernel_value(j: &SpectralDensity, t: f64, cutoff: &FrequencyCutoff, omega0: f64) -> Result<Complex64> {
    let rot = Complex64::from_polar(1.0, omega0 * t);
    let support = kernel_support(j, cutoff);
    match (j, support) {
        (SpectralDensity::Flat { .. }, None) => Err(Error::FlatKernel),
        (SpectralDensity::Lorentzian { gamma0, eta, omega_c }, None) => {
            Ok(Complex64::from_polar(0.5 * gamma0 * eta * (-eta * t).exp(), -(omega_c - omega0) * t))
        }
        (SpectralDensity::Flat { gamma0 }, Some((a, b))) => {
            let c = gamma0 / (2.0 * PI);
            // ∫_a^b e^{-iωt} dω, written around the window centre for stability.
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            let sinc = if (half * t).abs() < 1e-8 { 1.0 } else { (half * t).sin() / (half * t) };
            Ok(Complex64::from_polar(c * 2.0 * half * sinc, -(mid - omega0) * t))
        }
        (SpectralDensity::DiscreteSum(modes), _) => {
            Ok(modes.iter().map(|m| Complex64::from_polar(m.coupling.norm_sqr(), -(m.omega - omega0) * t)).sum())
        }
        (SpectralDensity::Tabulated(tab), Some((a, b))) if tab.interpolation == Interpolation::Linear => {
            Ok(linear_table_kernel(tab, a, b, t) * rot)
        }
        (_, Some((a, b))) => {
            if b <= a {
                return Ok(Complex64::new(0.0, 0.0));
            }
            let pts = oscillatory_points(j, a, b, t);
            let r = quad::integrate_complex(
                |w| Complex64::from_polar(evaluate(j, w).unwrap_or(0.0), -(w - omega0) * t),
                &pts,
                QuadOptions::with_tol(1e-12, 1e-10),
            )?;
            Ok(r.value)
        }
        (_, None) => unreachable!("only flat and Lorentzian densities extend over the full axis"),
    }
}

/// Panel edges with roughly one oscillation of `e^{−iωt}` per panel plus the
/// density's own features.
fn oscillatory_points(j: &SpectralDensity, a: f64, b: f64, t: f64) -> Vec<f64> {
    let mut pts = vec![a, b];
    let width = j.feature_width();
    for f in j.features() {
        for k in [-5.0, -1.0, 0.0, 1.0, 5.0] {
            let x = f + k * width.min(b - a);
            if x > a && x < b {
                pts.push(x);
            }
        }
    }
    if let SpectralDensity::Tabulated(tab) = j {
        pts.extend(tab.omegas().iter().copied().filter(|x| *x > a && *x < b));
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let per_panel = 2.0 * PI / t.max(1e-300);
    let mut out = vec![pts[0]];
    for w in pts.windows(2) {
        let n = ((w[1] - w[0]) / per_panel).ceil().clamp(1.0, 1e6) as usize;
        for k in 1..=n {
            out.push(w[0] + (w[1] - w[0]) * k as f64 / n as f64);
        }
    }
    out
}

fn linear_table_kernel(tab: &TabulatedDensity, a: f64, b: f64, t: f64) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    for k in 0..tab.omegas.len() - 1 {
        let (x0, x1) = (tab.omegas[k].max(a), tab.omegas[k + 1].min(b));
        if x1 <= x0 {
            continue;
        }
        let (y0, y1) = (tab.eval(x0), tab.eval(x1));
        let h = x1 - x0;
        let (w0, w1) = filon_linear_weights(-t * h);
        sum += Complex64::from_polar(h, -x0 * t) * (w0 * y0 + w1 * y1);
    }
    sum
}

/// Kernel samples `K(t_k) e^{iω0 t_k}` on a grid (the rotating-frame kernel).
pub fn rotated_kernel_series(
    j: &SpectralDensity,
    omega0: f64,
    grid: &TimeGrid,
    cutoff: &FrequencyCutoff,
) -> Result<Vec<Complex64>> {
    if let SpectralDensity::DiscreteSum(modes) = j {
        // Phase recurrences; renormalised every step to stop drift.
        let mut acc = vec![Complex64::new(0.0, 0.0); grid.len()];
        for m in modes {
            let w = m.coupling.norm_sqr();
            let step = Complex64::from_polar(1.0, -(m.omega - omega0) * grid.dt());
            let mut ph = Complex64::new(1.0, 0.0);
            for (k, a) in acc.iter_mut().enumerate() {
                if k % 64 == 0 {
                    ph = Complex64::from_polar(1.0, -(m.omega - omega0) * grid.t(k));
                }
                *a += ph * w;
                ph *= step;
            }
        }
        return Ok(acc);
    }
    (0..grid.len()).into_par_iter().map(|k| kernel_value(j, grid.t(k), cutoff, omega0)).collect()
}

/// `Δ(ω) = P∫ J(ω′)/(ω − ω′) dω′`.
pub fn lamb_shift(j: &SpectralDensity, w: f64, cutoff: &FrequencyCutoff) -> Result<f64> {
    match (j, kernel_support(j, cutoff)) {
        (SpectralDensity::DiscreteSum(_), _) => {
            Err(Error::UnsupportedVariant { op: "lamb_shift", variant: "discrete" })
        }
        (SpectralDensity::Flat { .. }, None) => Ok(0.0),
        (SpectralDensity::Lorentzian { gamma0, eta, omega_c }, None) => {
            let x = w - omega_c;
            Ok(0.5 * gamma0 * eta * x / (x * x + eta * eta))
        }
        (SpectralDensity::Flat { gamma0 }, Some((a, b))) => {
            if w == a || w == b {
                return Err(Error::SingularEdge { omega: w });
            }
            Ok(gamma0 / (2.0 * PI) * ((w - a).abs() / (w - b).abs()).ln())
        }
        (_, Some((a, b))) => principal_value(j, w, a, b),
        (_, None) => unreachable!(),
    }
}

/// Subtraction scheme: `∫ (J(ω′) − J(ω))/(ω − ω′) + J(ω) ln((ω − a)/(b − ω))`.
fn principal_value(j: &SpectralDensity, w: f64, a: f64, b: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    if w == a || w == b {
        return Err(Error::SingularEdge { omega: w });
    }
    let opts = QuadOptions::with_tol(1e-13, 1e-11);
    let mut pts = vec![a, b];
    let width = j.feature_width().min(b - a);
    for f in j.features() {
        for k in [-5.0, -1.0, 0.0, 1.0, 5.0] {
            pts.push(f + k * width);
        }
    }
    if let SpectralDensity::Tabulated(tab) = j {
        pts.extend_from_slice(tab.omegas());
    }
    if w > a && w < b {
        pts.push(w);
    }
    pts.retain(|x| *x >= a && *x <= b);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let jw = evaluate(j, w)?;
    if w > a && w < b {
        let r = quad::integrate(
            |x| {
                let d = w - x;
                if d == 0.0 {
                    0.0
                } else {
                    (evaluate(j, x).unwrap_or(0.0) - jw) / d
                }
            },
            &pts,
            opts,
        )?;
        Ok(r.value + jw * ((w - a) / (b - w)).ln())
    } else {
        let r = quad::integrate(|x| evaluate(j, x).unwrap_or(0.0) / (w - x), &pts, opts)?;
        Ok(r.value)
    }
}

/// `K̂(−iω) = π J(ω) + i Δ(ω)`.
pub fn kernel_laplace(j: &SpectralDensity, w: f64, cutoff: &FrequencyCutoff) -> Result<Complex64> {
    if !j.is_continuum() {
        return Err(Error::UnsupportedVariant { op: "kernel_laplace", variant: "discrete" });
    }
    Ok(Complex64::new(PI * density(j, w, cutoff)?, lamb_shift(j, w, cutoff)?))
}

/// Result of a uniform midpoint discretization.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub modes: Vec<BathMode>,
    pub domega: f64,
    pub warnings: Vec<String>,
}

impl Discretization {
    pub fn density(&self) -> SpectralDensity {
        SpectralDensity::DiscreteSum(self.modes.clone())
    }

    /// Poincaré recurrence time `2π/Δω` of the finite bath.
    pub fn recurrence_time(&self) -> f64 {
        2.0 * PI / self.domega
    }
}

/// N modes at the midpoints of a uniform grid over the kernel support
/// (`[−ω_max, ω_max]` for full-axis densities), `g_j = sqrt(J(ω_j) Δω)`.
pub fn discretize(j: &SpectralDensity, n: usize, cutoff: &FrequencyCutoff) -> Result<Discretization> {
    if !j.is_continuum() {
        return Err(Error::UnsupportedVariant { op: "discretize", variant: "discrete" });
    }
    if n < 2 {
        return Err(invalid("n", format!("need at least two modes, got {n}")));
    }
    let (a, b) = kernel_support(j, cutoff).unwrap_or((-cutoff.omega_max, cutoff.omega_max));
    if b <= a {
        return Err(invalid("cutoff", "empty discretization window"));
    }
    let dw = (b - a) / n as f64;
    let mut warnings = Vec::new();
    if let SpectralDensity::Lorentzian { eta, .. } = j {
        if eta / dw < 8.0 {
            let msg = format!("only {:.1} modes across the Lorentzian width eta = {eta}", eta / dw);
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    let modes = (0..n)
        .map(|k| {
            let w = a + (k as f64 + 0.5) * dw;
            Ok(BathMode { omega: w, coupling: Complex64::new((evaluate(j, w)? * dw).sqrt(), 0.0) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Discretization { modes, domega: dw, warnings })
}

/// Planck occupation `1/(e^{βω} − 1)`; zero at β = ∞.
pub fn bose(omega: f64, beta: f64) -> f64 {
    if beta.is_infinite() {
        return 0.0;
    }
    1.0 / (beta * omega).exp_m1()
}

/// Composite Gauss-Legendre nodes over `[a, b]` as `(ω, weight · J(ω))`,
/// with panels no wider than `max_width` and edges at the density features.
pub fn density_nodes(
    j: &SpectralDensity,
    a: f64,
    b: f64,
    max_width: f64,
    extra_breaks: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let mut edges = vec![a, b];
    let width = j.feature_width();
    for f in j.features().into_iter().chain(extra_breaks.iter().copied()) {
        for k in [-3.0, 0.0, 3.0] {
            edges.push(f + k * width.min(b - a));
        }
    }
    if let SpectralDensity::Tabulated(tab) = j {
        edges.extend_from_slice(tab.omegas());
    }
    edges.retain(|x| *x >= a && *x <= b && x.is_finite());
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let panel = max_width.min(width / 2.0);
    quad::composite_nodes(&edges, panel, 10).into_iter().map(|(w, q)| Ok((w, q * evaluate(j, w)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn full() -> FrequencyCutoff {
        FrequencyCutoff::full_axis(0.01, 50.0).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let l = SpectralDensity::lorentzian(0.7, 0.3, 1.2).unwrap();
        assert_abs_diff_eq!(evaluate(&l, 1.2).unwrap(), 0.7 / (2.0 * PI), epsilon = 1e-15);
        let l = SpectralDensity::lorentzian(1.0, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(evaluate(&l, 1.0).unwrap(), 1.0 / (4.0 * PI), epsilon = 1e-15);
        assert_abs_diff_eq!(evaluate(&SpectralDensity::flat(0.5).unwrap(), -3.0).unwrap(), 0.25 / PI);
        let d = SpectralDensity::discrete(vec![BathMode::new(1.0, Complex64::new(0.1, 0.0))]).unwrap();
        assert_eq!(evaluate(&d, 1.0), Err(Error::NoPointwiseDensity));
    }

    #[test]
    fn constructors_reject_bad_input() {
        assert!(SpectralDensity::lorentzian(1.0, 0.0, 1.0).is_err());
        assert!(SpectralDensity::flat(-1.0).is_err());
        assert!(SpectralDensity::tabulated(vec![0.0, 0.0], vec![1.0, 1.0], Interpolation::Linear).is_err());
        assert!(SpectralDensity::tabulated(vec![0.0, 1.0], vec![1.0, -1.0], Interpolation::Linear).is_err());
        assert!(FrequencyCutoff::window(-1.0, 2.0).is_err());
    }

    #[test]
    fn lorentzian_kernel_closed_form() {
        let l = SpectralDensity::lorentzian(0.8, 0.4, 1.5).unwrap();
        match memory_kernel(&l, 0.0, &full()).unwrap() {
            KernelValue::Value(v) => assert_abs_diff_eq!(v.re, 0.5 * 0.8 * 0.4, epsilon = 1e-15),
            _ => panic!(),
        }
        assert_eq!(
            memory_kernel(&SpectralDensity::flat(0.3).unwrap(), 1.0, &full()).unwrap(),
            KernelValue::Dirac { weight: 0.3 }
        );
    }

    #[test]
    fn tabulated_lorentzian_kernel_matches_closed_form() {
        let (g0, eta, wc) = (1.0, 0.5, 2.0);
        let l = SpectralDensity::lorentzian(g0, eta, wc).unwrap();
        let w: Vec<f64> = (0..=40000).map(|k| wc - 200.0 + k as f64 * 0.01).collect();
        let v: Vec<f64> = w.iter().map(|x| evaluate(&l, *x).unwrap()).collect();
        let tab = SpectralDensity::tabulated(w, v, Interpolation::Linear).unwrap();
        let t = 1.0 / eta;
        let KernelValue::Value(num) = memory_kernel(&tab, t, &full()).unwrap() else { panic!() };
        let exact = Complex64::from_polar(0.5 * g0 * eta * (-eta * t).exp(), -wc * t);
        // Truncation at ±200 removes ~η/(100π) of the mass; the rest is interpolation error.
        assert!((num - exact).norm() < 2e-4, "{num} vs {exact}");
    }

    #[test]
    fn windowed_quadrature_matches_linear_table() {
        let l = SpectralDensity::lorentzian(1.0, 0.5, 2.0).unwrap();
        let cut = FrequencyCutoff::window(0.0, 6.0).unwrap();
        let w: Vec<f64> = (0..=6000).map(|k| k as f64 * 1e-3).collect();
        let v: Vec<f64> = w.iter().map(|x| evaluate(&l, *x).unwrap()).collect();
        let tab = SpectralDensity::tabulated(w, v, Interpolation::MonotoneCubic).unwrap();
        for t in [0.0, 0.7, 13.0] {
            let KernelValue::Value(a) = memory_kernel(&l, t, &cut).unwrap() else { panic!() };
            let KernelValue::Value(b) = memory_kernel(&tab, t, &cut).unwrap() else { panic!() };
            assert!((a - b).norm() < 1e-8, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn lamb_shift_closed_form_vs_brute_pv() {
        let (g0, eta, wc) = (1.0, 0.5, 2.0);
        let l = SpectralDensity::lorentzian(g0, eta, wc).unwrap();
        let big = FrequencyCutoff::window(0.0, 1.0e4).unwrap();
        for w in [0.3, 1.9, 2.0, 3.7] {
            let exact = lamb_shift(&l, w, &full()).unwrap();
            let brute = lamb_shift(&l, w, &big).unwrap()
                + lorentz_left_tail(g0, eta, wc, w)
                + lorentz_right_tail(g0, eta, wc, w, 1.0e4);
            assert_abs_diff_eq!(brute, exact, epsilon = 1e-8);
        }
        assert_abs_diff_eq!(lamb_shift(&l, wc, &full()).unwrap(), 0.0);
        assert_eq!(lamb_shift(&SpectralDensity::flat(1.0).unwrap(), 3.0, &full()).unwrap(), 0.0);
    }

    // Tail pieces of ∫J/(ω−ω′) outside [0, L], by quadrature on the mapped half lines.
    fn lorentz_left_tail(g0: f64, eta: f64, wc: f64, w: f64) -> f64 {
        let j = |x: f64| g0 / (2.0 * PI) * eta * eta / ((wc - x).powi(2) + eta * eta);
        quad::integrate_to_infinity(|s| j(-s) / (w + s), 0.0, QuadOptions::with_tol(1e-14, 1e-12)).unwrap().value
    }

    fn lorentz_right_tail(g0: f64, eta: f64, wc: f64, w: f64, l: f64) -> f64 {
        let j = |x: f64| g0 / (2.0 * PI) * eta * eta / ((wc - x).powi(2) + eta * eta);
        quad::integrate_to_infinity(|x| j(x) / (w - x), l, QuadOptions::with_tol(1e-14, 1e-12)).unwrap().value
    }

    #[test]
    fn windowed_flat_lamb_shift_and_edges() {
        let f = SpectralDensity::flat(1.0).unwrap();
        let c = FrequencyCutoff::window(0.0, 4.0).unwrap();
        assert_abs_diff_eq!(lamb_shift(&f, 1.0, &c).unwrap(), (1.0f64 / 3.0).ln() / (2.0 * PI), epsilon = 1e-15);
        assert!(matches!(lamb_shift(&f, 4.0, &c), Err(Error::SingularEdge { .. })));
        let l = SpectralDensity::lorentzian(1.0, 0.3, 2.0).unwrap();
        assert!(matches!(lamb_shift(&l, 0.0, &c), Err(Error::SingularEdge { .. })));
        // Subtraction scheme vs closed form of the windowed flat density.
        let tab = SpectralDensity::tabulated(vec![0.0, 4.0], vec![0.5 / PI, 0.5 / PI], Interpolation::Linear).unwrap();
        assert_abs_diff_eq!(lamb_shift(&tab, 1.0, &c).unwrap(), lamb_shift(&f, 1.0, &c).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn kernel_laplace_examples() {
        let l = SpectralDensity::lorentzian(0.6, 0.2, 1.0).unwrap();
        let k = kernel_laplace(&l, 1.0, &full()).unwrap();
        assert_abs_diff_eq!(k.re, 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(k.im, 0.0);
        for w in [0.2, 0.9, 3.0] {
            let k = kernel_laplace(&l, w, &full()).unwrap();
            assert_abs_diff_eq!(k.norm_sqr(), PI * 0.6 * evaluate(&l, w).unwrap() / 2.0, epsilon = 1e-14);
        }
        let k = kernel_laplace(&SpectralDensity::flat(0.4).unwrap(), -7.0, &full()).unwrap();
        assert_abs_diff_eq!(k.re, 0.2, epsilon = 1e-15);
    }

    #[test]
    fn discretize_examples() {
        let f = SpectralDensity::flat(0.5).unwrap();
        let d = discretize(&f, 10, &FrequencyCutoff::window(0.0, 3.0).unwrap()).unwrap();
        for m in &d.modes {
            assert_abs_diff_eq!(m.coupling.norm_sqr(), 0.5 * 3.0 / (2.0 * PI * 10.0), epsilon = 1e-15);
        }
        let l = SpectralDensity::lorentzian(1.0, 0.5, 1.0).unwrap();
        let d = discretize(&l, 2000, &FrequencyCutoff::full_axis(0.0, 400.0).unwrap()).unwrap();
        let s: f64 = d.modes.iter().map(|m| m.coupling.norm_sqr()).sum();
        assert!((s / 0.25 - 1.0).abs() < 1e-3);
        let d = discretize(&l, 2, &FrequencyCutoff::window(0.0, 2.0).unwrap()).unwrap();
        assert_eq!(d.modes.len(), 2);
        assert_abs_diff_eq!(d.modes[0].omega, 0.5);
        assert_abs_diff_eq!(d.modes[1].coupling.norm_sqr(), evaluate(&l, 1.5).unwrap(), epsilon = 1e-15);
        assert_eq!(d.warnings.len(), 1);
    }
}
