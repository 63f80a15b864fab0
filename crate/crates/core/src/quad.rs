//! Quadrature and grid-integration primitives.
//!
//! Adaptive Gauss-Kronrod (7/15) with breakpoints and tail maps, fixed
//! Gauss-Legendre rules for composite frequency grids, cumulative rules on
//! uniform time grids and a few closed-form oscillatory weights.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// Tolerances for adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-10, rel_tol: 1e-10, max_intervals: 20_000 }
    }
}

impl QuadOptions {
    pub fn with_tol(abs_tol: f64, rel_tol: f64) -> Self {
        Self { abs_tol, rel_tol, ..Self::default() }
    }
}

/// Value and error estimate of a converged quadrature.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: f64,
    pub evaluations: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: FnMut(f64) -> Complex64>(f: &mut F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut fv = [Complex64::new(0.0, 0.0); 15];
    fv[7] = fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv[j] = f1;
        fv[14 - j] = f2;
        kron += (f1 + f2) * WGK[j];
        if j % 2 == 1 {
            gauss += (f1 + f2) * WG[j / 2];
        }
    }
    // QUADPACK-style error scaling against the integral of |f - mean|.
    let mean = kron * 0.5;
    let mut resasc = WGK[7] * (fc - mean).norm();
    for j in 0..7 {
        resasc += WGK[j] * ((fv[j] - mean).norm() + (fv[14 - j] - mean).norm());
    }
    resasc *= h.abs();
    let diff = ((kron - gauss) * h).norm();
    let mut err = diff;
    if resasc > 0.0 && diff > 0.0 {
        err = resasc * (200.0 * diff / resasc).powf(1.5).min(1.0);
    }
    let value = kron * h;
    let floor = 50.0 * f64::EPSILON * value.norm();
    (value, err.max(floor))
}

/// Adaptive complex quadrature over `[points[0], points[last]]`, splitting
/// first at every listed breakpoint.
pub fn integrate_complex<F>(mut f: F, points: &[f64], opts: QuadOptions) -> Result<QuadResult<Complex64>>
where
    F: FnMut(f64) -> Complex64,
{
    let mut heap = BinaryHeap::new();
    let mut total = Complex64::new(0.0, 0.0);
    let mut total_err = 0.0;
    let mut evaluations = 0;
    for w in points.windows(2) {
        if w[1] == w[0] {
            continue;
        }
        let (v, e) = gk15(&mut f, w[0], w[1]);
        evaluations += 15;
        total += v;
        total_err += e;
        heap.push(Panel { a: w[0], b: w[1], value: v, error: e });
    }
    while total_err > opts.abs_tol.max(opts.rel_tol * total.norm()) {
        if heap.len() >= opts.max_intervals {
            return Err(Error::Quadrature { estimate: total.norm(), error: total_err, evaluations });
        }
        let Some(p) = heap.pop() else { break };
        let m = 0.5 * (p.a + p.b);
        if m <= p.a.min(p.b) || m >= p.a.max(p.b) {
            // Interval exhausted at machine resolution.
            return Err(Error::Quadrature { estimate: total.norm(), error: total_err, evaluations });
        }
        let (v1, e1) = gk15(&mut f, p.a, m);
        let (v2, e2) = gk15(&mut f, m, p.b);
        evaluations += 30;
        total += v1 + v2 - p.value;
        total_err += e1 + e2 - p.error;
        heap.push(Panel { a: p.a, b: m, value: v1, error: e1 });
        heap.push(Panel { a: m, b: p.b, value: v2, error: e2 });
    }
    // Resum to shed the drift of the running updates.
    let value: Complex64 = heap.iter().map(|p| p.value).sum();
    let error: f64 = heap.iter().map(|p| p.error).sum();
    Ok(QuadResult { value, error, evaluations })
}

/// Real-valued wrapper of [`integrate_complex`].
pub fn integrate<F>(mut f: F, points: &[f64], opts: QuadOptions) -> Result<QuadResult<f64>>
where
    F: FnMut(f64) -> f64,
{
    let r = integrate_complex(|x| Complex64::new(f(x), 0.0), points, opts)?;
    Ok(QuadResult { value: r.value.re, error: r.error, evaluations: r.evaluations })
}

/// Integral over the whole real line. Finite breakpoints delimit a central
/// region; the two tails are mapped onto `(0, 1]` by `x = x0 ∓ (1-u)/u`.
pub fn integrate_real_line<F>(mut f: F, points: &[f64], opts: QuadOptions) -> Result<QuadResult<f64>>
where
    F: FnMut(f64) -> f64,
{
    let lo = points.first().copied().unwrap_or(0.0);
    let hi = points.last().copied().unwrap_or(0.0);
    let mut core = if points.len() >= 2 {
        integrate(&mut f, points, opts)?
    } else {
        QuadResult { value: 0.0, error: 0.0, evaluations: 0 }
    };
    let tail_opts = QuadOptions { abs_tol: opts.abs_tol * 0.5, ..opts };
    let left = integrate(
        |u| {
            let s = (1.0 - u) / u;
            f(lo - s) / (u * u)
        },
        &[0.0, 0.5, 1.0],
        tail_opts,
    )?;
    let right = integrate(
        |u| {
            let s = (1.0 - u) / u;
            f(hi + s) / (u * u)
        },
        &[0.0, 0.5, 1.0],
        tail_opts,
    )?;
    core.value += left.value + right.value;
    core.error += left.error + right.error;
    core.evaluations += left.evaluations + right.evaluations;
    Ok(core)
}

/// Integral over `[a, ∞)` via `x = a + (1-u)/u`.
pub fn integrate_to_infinity<F>(mut f: F, a: f64, opts: QuadOptions) -> Result<QuadResult<f64>>
where
    F: FnMut(f64) -> f64,
{
    integrate(
        |u| {
            let s = (1.0 - u) / u;
            f(a + s) / (u * u)
        },
        &[0.0, 0.5, 1.0],
        opts,
    )
}

/// Nodes and weights of the n-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            } else {
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    (x, w)
}

/// Composite Gauss-Legendre nodes over consecutive `edges`, each segment cut
/// into panels no wider than `max_width`.
pub fn composite_nodes(edges: &[f64], max_width: f64, order: usize) -> Vec<(f64, f64)> {
    let (gx, gw) = gauss_legendre(order);
    let mut out = Vec::new();
    for e in edges.windows(2) {
        let len = e[1] - e[0];
        if len <= 0.0 {
            continue;
        }
        let panels = (len / max_width).ceil().max(1.0) as usize;
        let h = len / panels as f64;
        for p in 0..panels {
            let a = e[0] + p as f64 * h;
            for (x, w) in gx.iter().zip(&gw) {
                out.push((a + 0.5 * h * (x + 1.0), 0.5 * h * w));
            }
        }
    }
    out
}

/// Minimal arithmetic needed by the grid rules, satisfied by `f64` and `Complex64`.
pub trait GridValue: Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {}
impl<T> GridValue for T where T: Copy + Default + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T> {}

/// Rule used for running integrals on a uniform grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CumulativeRule {
    Trapezoid,
    /// Four-point cubic rule, fourth order; falls back to trapezoid below four samples.
    Cubic,
}

/// Running integral `∫_0^{t_k} f` for every sample.
pub fn cumulative<T: GridValue>(f: &[T], dt: f64, rule: CumulativeRule) -> Vec<T> {
    let n = f.len();
    let mut out = vec![T::default(); n];
    if n < 2 {
        return out;
    }
    let use_cubic = rule == CumulativeRule::Cubic && n >= 4;
    let c = dt / 24.0;
    for k in 0..n - 1 {
        let inc = if !use_cubic {
            (f[k] + f[k + 1]) * (0.5 * dt)
        } else if k == 0 {
            (f[0] * 9.0 + f[1] * 19.0 - f[2] * 5.0 + f[3]) * c
        } else if k == n - 2 {
            (f[n - 4] - f[n - 3] * 5.0 + f[n - 2] * 19.0 + f[n - 1] * 9.0) * c
        } else {
            ((f[k] + f[k + 1]) * 13.0 - f[k - 1] - f[k + 2]) * c
        };
        out[k + 1] = out[k] + inc;
    }
    out
}

/// Second-order finite-difference derivative: centered inside, one-sided at the ends.
pub fn derivative<T: GridValue>(f: &[T], dt: f64) -> Vec<T> {
    let n = f.len();
    let mut out = vec![T::default(); n];
    if n < 3 {
        if n == 2 {
            let d = (f[1] - f[0]) * (1.0 / dt);
            out[0] = d;
            out[1] = d;
        }
        return out;
    }
    let h2 = 0.5 / dt;
    out[0] = (f[1] * 4.0 - f[0] * 3.0 - f[2]) * h2;
    out[n - 1] = (f[n - 1] * 3.0 - f[n - 2] * 4.0 + f[n - 3]) * h2;
    for k in 1..n - 1 {
        out[k] = (f[k + 1] - f[k - 1]) * h2;
    }
    out
}

/// Four-point cubic Lagrange interpolation of uniformly sampled data at
/// fractional index `x` (clamped to the sample range).
pub fn interp_cubic<T: GridValue>(f: &[T], x: f64) -> T {
    let n = f.len();
    if n == 1 {
        return f[0];
    }
    let x = x.clamp(0.0, (n - 1) as f64);
    if n < 4 {
        let i = (x.floor() as usize).min(n - 2);
        let s = x - i as f64;
        return f[i] * (1.0 - s) + f[i + 1] * s;
    }
    let i = (x.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let s = x - i as f64;
    let l0 = -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0;
    let l1 = s * (s - 2.0) * (s - 3.0) / 2.0;
    let l2 = -s * (s - 1.0) * (s - 3.0) / 2.0;
    let l3 = s * (s - 1.0) * (s - 2.0) / 6.0;
    f[i] * l0 + f[i + 1] * l1 + f[i + 2] * l2 + f[i + 3] * l3
}

/// `∫_0^1 x^k e^{iθx} dx` for k = 0, 1, by power series near zero.
fn filon_series(theta: f64, k: i32) -> Complex64 {
    let z = Complex64::new(0.0, theta);
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = Complex64::new(0.0, 0.0);
    for n in 0..40 {
        let add = term / (n as f64 + k as f64 + 1.0);
        sum += add;
        if add.norm() < 1e-18 {
            break;
        }
        term = term * z / (n as f64 + 1.0);
    }
    sum
}

/// Weights `(w0, w1)` with `∫_0^1 [(1-x) a + x b] e^{iθx} dx = w0 a + w1 b`.
pub fn filon_linear_weights(theta: f64) -> (Complex64, Complex64) {
    if theta.abs() < 1.0 {
        let m0 = filon_series(theta, 0);
        let m1 = filon_series(theta, 1);
        return (m0 - m1, m1);
    }
    let iz = Complex64::new(0.0, theta);
    let e = iz.exp();
    let m0 = (e - 1.0) / iz;
    let m1 = e / iz - (e - 1.0) / (iz * iz);
    (m0 - m1, m1)
}

/// `∫_0^t e^{zs} ds`, stable for small `|zt|`.
pub fn phi1(z: Complex64, t: f64) -> Complex64 {
    let zt = z * t;
    if zt.norm() < 0.5 {
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for n in 1..30 {
            term = term * zt / (n as f64 + 1.0);
            sum += term;
            if term.norm() < 1e-18 {
                break;
            }
        }
        return sum * t;
    }
    (zt.exp() - 1.0) / z
}

/// `∫_0^t s e^{zs} ds`, stable for small `|zt|`.
pub fn phi2(z: Complex64, t: f64) -> Complex64 {
    let zt = z * t;
    if zt.norm() < 0.5 {
        let mut pow = Complex64::new(1.0, 0.0);
        let mut fact = 1.0;
        let mut sum = Complex64::new(0.0, 0.0);
        for n in 0..30 {
            if n > 0 {
                pow *= zt;
                fact *= n as f64;
            }
            let term = pow / (fact * (n as f64 + 2.0));
            sum += term;
            if term.norm() < 1e-18 {
                break;
            }
        }
        return sum * t * t;
    }
    (zt.exp() * (zt - 1.0) + 1.0) / (z * z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gk_polynomial_and_oscillatory() {
        let r = integrate(|x| x.powi(5) - 2.0 * x, &[0.0, 2.0], QuadOptions::default()).unwrap();
        assert_abs_diff_eq!(r.value, 64.0 / 6.0 - 4.0, epsilon = 1e-12);
        let r =
            integrate_complex(|x| Complex64::new(0.0, -40.0 * x).exp(), &[0.0, 1.0], QuadOptions::default()).unwrap();
        let exact = (Complex64::new(0.0, -40.0).exp() - 1.0) / Complex64::new(0.0, -40.0);
        assert!((r.value - exact).norm() < 1e-11);
    }

    #[test]
    fn real_line_lorentzian_mass() {
        let eta = 0.3;
        let r = integrate_real_line(
            |x| eta / std::f64::consts::PI / ((x - 1.0).powi(2) + eta * eta),
            &[0.0, 1.0, 2.0],
            QuadOptions::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(r.value, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn gauss_legendre_exactness() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert_abs_diff_eq!(s, 2.0 / 19.0, epsilon = 1e-14);
        let (_, w) = gauss_legendre(1);
        assert_abs_diff_eq!(w[0], 2.0);
    }

    #[test]
    fn cubic_rule_is_exact_on_cubics() {
        let dt = 0.1;
        let f: Vec<f64> = (0..20).map(|k| (k as f64 * dt).powi(3)).collect();
        let c = cumulative(&f, dt, CumulativeRule::Cubic);
        for (k, v) in c.iter().enumerate() {
            assert_abs_diff_eq!(*v, (k as f64 * dt).powi(4) / 4.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn filon_weights_match_direct() {
        for theta in [0.0, 0.3, 0.99, 1.01, 7.0, -3.0] {
            let (w0, w1) = filon_linear_weights(theta);
            let d0 = integrate_complex(
                |x| Complex64::new(0.0, theta * x).exp() * (1.0 - x),
                &[0.0, 1.0],
                QuadOptions::default(),
            )
            .unwrap()
            .value;
            let d1 =
                integrate_complex(|x| Complex64::new(0.0, theta * x).exp() * x, &[0.0, 1.0], QuadOptions::default())
                    .unwrap()
                    .value;
            assert!((w0 - d0).norm() < 1e-13 && (w1 - d1).norm() < 1e-13, "theta={theta}");
        }
    }

    #[test]
    fn phi_functions() {
        for z in [Complex64::new(-0.3, 2.0), Complex64::new(1e-4, -1e-3), Complex64::new(0.0, 0.0)] {
            for t in [0.01, 1.0, 5.0] {
                let d1 = integrate_complex(|s| (z * s).exp(), &[0.0, t], QuadOptions::default()).unwrap().value;
                let d2 = integrate_complex(|s| (z * s).exp() * s, &[0.0, t], QuadOptions::default()).unwrap().value;
                assert!((phi1(z, t) - d1).norm() < 1e-12 * (1.0 + d1.norm()));
                assert!((phi2(z, t) - d2).norm() < 1e-12 * (1.0 + d2.norm()));
            }
        }
    }

    #[test]
    fn interpolation_reproduces_cubics() {
        let f: Vec<f64> = (0..8).map(|k| (k as f64).powi(3) - k as f64).collect();
        for x in [0.25, 3.5, 6.75] {
            assert_abs_diff_eq!(interp_cubic(&f, x), x.powi(3) - x, epsilon = 1e-12);
        }
    }
}
