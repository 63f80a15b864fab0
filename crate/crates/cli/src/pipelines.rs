//! Scenario pipelines. Each writes its artifacts into `Run::dir` as it goes,
//! so a failure part way through leaves the finished files in place.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Result};
use fano_core::coefficients::{power_law_exponent, CoefficientSeries, ModeRef, NoiseOptions};
use fano_core::driving::driven_sources;
use fano_core::dynamics::{propagate_closed_form, MomentSeries};
use fano_core::green::{self, GreenFunction};
use fano_core::oracle::{moment_deviation, oracle_green, oracle_moments, DiscreteBathScenario};
use fano_core::rcmap::{compare_exact_vs_rc, exact_lorentzian_moments, map_lorentzian, simulate_rc};
use fano_core::spectral::{discretize, FrequencyCutoff, SpectralDensity};
use fano_core::steady::{
    decayed_from, ness_displacement, ness_fluxes_single_mode, ness_force, resonance_sweep, steady_excitation,
    verify_ness_unitarity, SteadyState,
};
use fano_core::thermo::{gibbs_fixed_point_residual, ThermoRecord};
use fano_core::{Complex64, TimeGrid};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{LoadedConfig, Pipeline};
use crate::output::{self, Manifest, Run, Status};

/// What a finished pipeline reports back.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub status: Status,
    pub error: Option<String>,
    pub quantities: BTreeMap<String, f64>,
    pub failed_checks: Vec<String>,
}

/// Run `pipeline` into `dir` and write `manifest.json`. A pipeline error is
/// recorded in the manifest and an `ERROR` marker, not returned.
pub fn execute(l: &LoadedConfig, pipeline: Pipeline, dir: &Path) -> Result<Summary> {
    if let Some(p) = l.config.pipeline {
        if p != pipeline {
            bail!("config declares pipeline `{}` but `{}` was requested", p.name(), pipeline.name());
        }
    }
    let mut run = Run::new(dir)?;
    let result = match pipeline {
        Pipeline::Simulate => simulate(l, &mut run).map(|_| ()),
        Pipeline::Steady => steady(l, &mut run),
        Pipeline::Ness => ness(l, &mut run),
        Pipeline::Rcmap => rcmap(l, &mut run),
        Pipeline::OracleCheck => oracle_check(l, &mut run),
        Pipeline::Sweep => sweep(l, &mut run),
    };
    let (status, error) = match result {
        Ok(()) => (run.status(), None),
        Err(e) => (Status::Error, Some(format!("{e:#}"))),
    };
    if let Some(e) = &error {
        log::debug!("{}: {e}", pipeline.name());
        fs::write(dir.join("ERROR"), format!("{e}\n"))?;
    }
    let manifest = Manifest {
        pipeline: pipeline.name(),
        status,
        error: error.clone(),
        config: Some(&l.config),
        quantities: &run.quantities,
        checks: &run.checks,
        diagnostics: &run.diagnostics,
        artifacts: &run.artifacts,
    };
    output::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(Summary {
        status,
        error,
        failed_checks: run.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect(),
        quantities: run.quantities,
    })
}

struct Simulation {
    density: SpectralDensity,
    green: GreenFunction,
    coefficients: CoefficientSeries,
    thermo: ThermoRecord,
}

/// Green function, coefficients, moments and energetics on the config grid.
fn simulate(l: &LoadedConfig, run: &mut Run) -> Result<Simulation> {
    let density = l.density()?;
    let cut = l.cutoff()?;
    let s0 = l.initial_state()?;
    let env = l.environment()?;
    let driving = l.driving()?;
    let g = green::solve(&density, l.config.omega0, l.grid()?, &cut)?;
    run.diagnostics.extend(g.diagnostics().iter().cloned());
    output::write_green(run, &g)?;
    if let Some(t) = g.first_zero_crossing() {
        run.quantity("first_zero_crossing", t);
    }
    let mut c = CoefficientSeries::build(&g, &env, &cut, NoiseOptions::default())?;
    if let Some(p) = &driving {
        let s = driven_sources(&g, &c.sources, p)?;
        c = CoefficientSeries::from_sources(&g, s)?;
    }
    output::write_coefficients(run, &c)?;
    let m = propagate_closed_form(&s0, &g, &c.sources)?;
    output::write_moments(run, &m)?;
    let t = ThermoRecord::build(&c, &m)?;
    output::write_thermo(run, &t)?;

    let tol = l.config.tolerances;
    let last = c.grid.steps();
    run.le("first_law_closure", t.first_law_residual(), tol.first_law);
    let dissipator = t.dissipator_residual();
    // Volterra derivatives agree with the samples only to O(dt²).
    if g.closed_form().is_some() {
        run.le("dissipator_heat", dissipator, tol.first_law);
    } else {
        run.quantity("dissipator_heat_residual", dissipator);
    }
    let nu = m.symplectic_eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
    run.ge("min_symplectic_eigenvalue", nu, 0.5 - tol.positivity);
    run.quantity("t_max", c.grid.t_max());
    run.quantity("final_occupation", m.occupation[last]);
    run.quantity("final_internal_energy", t.internal_energy[last]);
    run.quantity("final_work", t.work[last]);
    run.quantity("final_heat", t.heat[last]);
    run.quantity("final_entropy_production", t.entropy_production[last]);
    run.quantity("beta_coverage", t.beta_coverage);
    let min_rate = t.entropy_production_rate.iter().copied().filter(|s| s.is_finite()).fold(f64::INFINITY, f64::min);
    run.quantity("min_entropy_production_rate", min_rate);
    run.quantity("max_abs_work", t.work.iter().fold(0.0f64, |a, w| a.max(w.abs())));
    run.quantity("max_abs_heat", t.heat.iter().fold(0.0f64, |a, q| a.max(q.abs())));
    run.quantity("final_gamma", c.gamma[last]);
    run.quantity("final_omega_r", c.omega_r[last]);
    run.quantity("n_bar_tail", c.sources.noise[last]);
    if let Some((time, rate)) = t.negative_rate_witness(-1e-6) {
        run.quantity("negative_rate_witness_time", time);
        run.quantity("negative_rate_witness_value", rate);
    }
    Ok(Simulation { density, green: g, coefficients: c, thermo: t })
}

fn steady(l: &LoadedConfig, run: &mut Run) -> Result<()> {
    let beta = l.beta();
    if !beta.is_finite() {
        bail!("steady pipeline needs a finite environment.beta");
    }
    let sim = simulate(l, run)?;
    let c = &sim.coefficients;
    let tol = l.config.tolerances;
    let last = c.grid.steps();
    let st = steady_excitation(&sim.density, l.config.omega0, beta, &l.cutoff()?)?;
    run.diagnostics.extend(st.diagnostics.iter().cloned());
    let tail = c.sources.noise[last];
    run.quantity("n_bar_frequency", st.n_bar);
    run.quantity("normalization", st.normalization);
    run.quantity("resonance", st.resonance);
    run.le("tail_vs_frequency", (tail - st.n_bar).abs(), tol.equilibrium);
    run.le("normalization", (st.normalization - 1.0).abs(), tol.equilibrium);
    let mut fixed_point = 0.0f64;
    for k in (0..c.grid.len()).filter(|k| c.n_defined[*k]) {
        let (f, d, r) = gibbs_fixed_point_residual(c, k)?;
        fixed_point = fixed_point.max(f.norm()).max(d.norm()).max(r.abs() / c.gamma_n[k].abs().max(1.0));
    }
    run.quantity("fixed_point_residual", fixed_point);
    let ss = SteadyState::from_tail(c.n_bath[last], c)?;
    let n_final = *run.quantities.get("final_occupation").unwrap_or(&f64::NAN);
    let planck = 1.0 / (ss.beta_r * ss.omega_r).exp_m1();
    run.le("occupation_vs_planck", (n_final - planck).abs(), tol.equilibrium);
    run.quantity("beta_r", ss.beta_r);
    run.json("steady.json", &serde_json::json!({ "excitation": st, "steady_state": ss }))
}

#[derive(Serialize)]
struct NessReport {
    n_bar: f64,
    decay_time: f64,
    phi: Vec<Complex64>,
    omegas: Vec<f64>,
    steady_state: SteadyState,
    fluxes: Option<fano_core::steady::NessFluxes>,
    resonance_sweep: Option<fano_core::steady::ResonanceSweep>,
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn ness(l: &LoadedConfig, run: &mut Run) -> Result<()> {
    let modes = l.ness_modes();
    if modes.is_empty() {
        bail!("ness pipeline needs at least one [[ness.modes]] entry");
    }
    let sim = simulate(l, run)?;
    let (c, g, t) = (&sim.coefficients, &sim.green, &sim.thermo);
    let grid = c.grid;
    let cut = l.cutoff()?;
    let tol = l.config.tolerances;
    let d = ness_displacement(&sim.density, l.config.omega0, &cut, &modes, &grid)?;
    let k0 = decayed_from(g).ok_or_else(|| anyhow!("|G| does not decay on the grid; extend grid.steps"))?;
    run.quantity("decay_time", grid.t(k0));
    run.le("displacement_convergence", max_diff(&c.sources.displacement[k0..], &d.series[k0..]), tol.ness_convergence);
    let n_bar = c.sources.noise[grid.steps()];
    let st = SteadyState::from_tail(n_bar, c)?;
    let fbar = ness_force(&d, st.omega_r, st.gamma, &grid);
    run.le("force_convergence", max_diff(&c.force[k0..], &fbar[k0..]), tol.ness_convergence);
    run.le("ness_unitarity", verify_ness_unitarity(c, &d, n_bar, k0), tol.ness);
    let transient = (k0..grid.len()).map(|k| (t.heat_rate[k] + t.work_rate[k]).abs()).fold(0.0, f64::max);
    run.le("transient_heat_plus_work", transient, tol.ness);
    let mut report = NessReport {
        n_bar,
        decay_time: grid.t(k0),
        phi: d.phi.clone(),
        omegas: d.omegas.clone(),
        steady_state: st,
        fluxes: None,
        resonance_sweep: None,
    };
    if let [mode] = modes.as_slice() {
        let fl = ness_fluxes_single_mode(&d, mode, g, &st)?;
        run.le("ness_heat_plus_work", (fl.heat_rate + fl.work_rate).abs(), tol.ness);
        run.ge("sigma_dot", fl.sigma_dot, 0.0);
        run.le("sigma_dot_vs_direct", (fl.sigma_dot - fl.sigma_dot_direct).abs(), tol.ness);
        run.quantity("u_bar", fl.u_bar);
        run.quantity("heat_rate", fl.heat_rate);
        run.quantity("work_rate", fl.work_rate);
        run.quantity("sigma_dot", fl.sigma_dot);
        report.fluxes = Some(fl);
        if let Some(r) = l.config.ness.as_ref().and_then(|n| n.resonance_sweep) {
            let alpha_g = (mode.alpha * mode.coupling).norm();
            let sw = resonance_sweep(&sim.density, l.config.omega0, &cut, &st, alpha_g, &r.values()?)?;
            run.quantity("resonance", sw.resonance);
            run.quantity("sweep_peak", sw.peak);
            report.resonance_sweep = Some(sw);
        }
    } else {
        run.diagnostics.push(format!("constant fluxes skipped: {} displaced modes", modes.len()));
    }
    run.json("ness.json", &report)
}

#[derive(Serialize)]
struct RcReport {
    model: fano_core::rcmap::RcModel,
    comparisons: Vec<fano_core::rcmap::RcComparison>,
}

#[derive(Serialize)]
struct RcRow {
    t: f64,
    re_mean_exact: f64,
    im_mean_exact: f64,
    re_mean_rc: f64,
    im_mean_rc: f64,
    occupation_exact: f64,
    occupation_rc: f64,
}

fn rcmap(l: &LoadedConfig, run: &mut Run) -> Result<()> {
    let env = &l.config.environment;
    if !env.displaced.is_empty() || !env.squeezed.is_empty() || l.config.ness.is_some() {
        bail!("rcmap compares thermal baths only; remove displaced, squeezed and ness modes");
    }
    let j = l.density()?;
    let SpectralDensity::Lorentzian { gamma0, eta, omega_c } = j else {
        bail!("rcmap needs a Lorentzian density, got {}", j.variant_name());
    };
    let (beta, omega0) = (l.beta(), l.config.omega0);
    let (grid, cut, s0) = (l.grid()?, l.cutoff()?, l.initial_state()?);
    let tol = l.config.tolerances;
    let model = map_lorentzian(gamma0, eta, omega_c, beta)?;
    let exact = exact_lorentzian_moments(&j, omega0, beta, &s0, &grid, &cut)?;
    let rc = simulate_rc(&model, omega0, &s0, None, &grid)?.system_series();
    run.csv(
        "rcmap.csv",
        (0..grid.len()).map(|k| RcRow {
            t: grid.t(k),
            re_mean_exact: exact.mean[k].re,
            im_mean_exact: exact.mean[k].im,
            re_mean_rc: rc.mean[k].re,
            im_mean_rc: rc.mean[k].im,
            occupation_exact: exact.occupation[k],
            occupation_rc: rc.occupation[k],
        }),
    )?;
    let extra = l.config.rcmap.as_ref().map(|r| r.etas.clone()).unwrap_or_default();
    let product = gamma0 * eta;
    let mut densities = vec![j];
    for e in extra {
        densities.push(SpectralDensity::lorentzian(product / e, e, omega_c)?);
    }
    let comparisons = densities
        .par_iter()
        .map(|d| compare_exact_vs_rc(d, omega0, beta, &s0, &grid, &cut))
        .collect::<fano_core::Result<Vec<_>>>()?;
    let base = &comparisons[0];
    run.le("relative_deviation", base.worst_relative(), tol.rc_relative);
    let nu = comparisons.iter().map(|c| c.min_symplectic).fold(f64::INFINITY, f64::min);
    run.ge("min_symplectic_eigenvalue", nu, 0.5 - tol.positivity);
    for c in &comparisons {
        run.quantity(&format!("relative_deviation_eta_{}", c.eta), c.worst_relative());
    }
    run.quantity("coupling", model.g);
    run.json("rcmap.json", &RcReport { model, comparisons })
}

#[derive(Serialize)]
struct OracleRow {
    t: f64,
    re_g: f64,
    im_g: f64,
    re_g_oracle: f64,
    im_g_oracle: f64,
    re_mean: f64,
    im_mean: f64,
    re_mean_oracle: f64,
    im_mean_oracle: f64,
    occupation: f64,
    occupation_oracle: f64,
}

fn every(v: &[Complex64], stride: usize) -> Vec<Complex64> {
    v.iter().step_by(stride).copied().collect()
}

fn subsample(m: &MomentSeries, stride: usize, coarse: TimeGrid) -> MomentSeries {
    MomentSeries {
        grid: coarse,
        mean: every(&m.mean, stride),
        pair: every(&m.pair, stride),
        occupation: m.occupation.iter().step_by(stride).copied().collect(),
        mean_dot: every(&m.mean_dot, stride),
        pair_dot: every(&m.pair_dot, stride),
        occupation_dot: m.occupation_dot.iter().step_by(stride).copied().collect(),
    }
}

fn oracle_check(l: &LoadedConfig, run: &mut Run) -> Result<()> {
    if l.config.ness.is_some() || l.config.driving.is_some() {
        bail!("oracle-check supports thermal, displaced and squeezed baths without driving");
    }
    let o = l.config.oracle.clone().unwrap_or(crate::config::OracleConfig {
        modes: 2000,
        compare_stride: 1,
        omega_max: None,
    });
    if o.compare_stride == 0 {
        bail!("oracle.compare_stride must be positive");
    }
    let j = l.density()?;
    // Both routes see the same window, so the oracle cutoff applies to each.
    let mut cut = l.cutoff()?;
    if let Some(w) = o.omega_max {
        cut = FrequencyCutoff { omega_max: w, ..cut }.validated()?;
    }
    let fine = l.grid()?;
    let omega0 = l.config.omega0;
    let tol = l.config.tolerances;
    let no_explicit = |m: ModeRef| match m {
        ModeRef::Index(_) => Ok(m),
        ModeRef::Explicit { .. } => Err(anyhow!("oracle-check needs mode references given by index")),
    };
    // A continuum is compared against its discretization; index refs then
    // point into the discretized mode list.
    let (modes, continuum_env) = match &j {
        SpectralDensity::DiscreteSum(m) => (m.clone(), l.environment_mapped(&no_explicit)?),
        _ => {
            let disc = discretize(&j, o.modes, &cut)?;
            run.diagnostics.extend(disc.warnings.iter().cloned());
            let m = disc.modes;
            let to_explicit = |r: ModeRef| match r {
                ModeRef::Index(k) => {
                    let b = m.get(k).ok_or_else(|| anyhow!("mode index {k} out of range for {} modes", m.len()))?;
                    Ok(ModeRef::Explicit { omega: b.omega, coupling: b.coupling })
                }
                ModeRef::Explicit { .. } => no_explicit(r),
            };
            let env = l.environment_mapped(&to_explicit)?;
            (m, env)
        }
    };
    let discrete_env = l.environment_mapped(&no_explicit)?;
    let stride = o.compare_stride;
    let coarse = TimeGrid::new(fine.dt() * stride as f64, fine.steps() / stride)?;
    let g = green::solve(&j, omega0, fine, &cut)?;
    run.diagnostics.extend(g.diagnostics().iter().cloned());
    let c = CoefficientSeries::build(&g, &continuum_env, &cut, NoiseOptions::default())?;
    let s0 = l.initial_state()?;
    let m = subsample(&propagate_closed_form(&s0, &g, &c.sources)?, stride, coarse);
    let scenario = DiscreteBathScenario::new(omega0, modes, discrete_env)?;
    let t_rec = scenario.recurrence_time();
    let t_limit = t_rec / 2.0;
    let og = oracle_green(&scenario, &coarse);
    let om = oracle_moments(&scenario, &s0, &coarse)?;
    let gs = every(g.g(), stride);
    run.csv(
        "oracle.csv",
        (0..coarse.len()).map(|k| OracleRow {
            t: coarse.t(k),
            re_g: gs[k].re,
            im_g: gs[k].im,
            re_g_oracle: og[k].re,
            im_g_oracle: og[k].im,
            re_mean: m.mean[k].re,
            im_mean: m.mean[k].im,
            re_mean_oracle: om.mean[k].re,
            im_mean_oracle: om.mean[k].im,
            occupation: m.occupation[k],
            occupation_oracle: om.occupation[k],
        }),
    )?;
    let kmax = (0..coarse.len()).take_while(|k| coarse.t(*k) <= t_limit).count();
    let d = moment_deviation(&m, &om, t_limit);
    run.le("green", max_diff(&gs[..kmax], &og[..kmax]), tol.oracle);
    run.le("mean", d.mean, tol.oracle);
    run.le("pair", d.pair, tol.oracle);
    run.le("occupation", d.occupation, tol.oracle);
    run.quantity("recurrence_time", t_rec);
    run.quantity("compared_until", coarse.t(kmax.saturating_sub(1)));
    if coarse.t_max() > t_limit {
        run.diagnostics.push(format!("samples after t = {t_limit} are past half the recurrence time and not compared"));
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepPoint {
    value: f64,
    status: Status,
    error: Option<String>,
    failed_checks: Vec<String>,
    quantities: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct QuantitySummary {
    argmax: f64,
    max: f64,
    /// Slope of log|q| against log(value); absent unless every point has
    /// positive value and nonzero q.
    power_law_exponent: Option<f64>,
}

#[derive(Serialize)]
struct SweepReport {
    parameter: crate::config::SweepParameter,
    target: &'static str,
    points: Vec<SweepPoint>,
    summary: BTreeMap<String, QuantitySummary>,
}

fn sweep(l: &LoadedConfig, run: &mut Run) -> Result<()> {
    let s = l.config.sweep.clone().ok_or_else(|| anyhow!("sweep pipeline needs a [sweep] section"))?;
    if s.target == Pipeline::Sweep {
        bail!("sweep.target cannot be sweep");
    }
    if s.values.is_empty() {
        bail!("sweep.values is empty");
    }
    let points = s
        .values
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let dir = run.dir.join(format!("point_{i:03}"));
            let summary = l.with_parameter(s.parameter, *v, s.hold_coupling_product).and_then(|mut p| {
                p.config.pipeline = None;
                p.config.sweep = None;
                execute(&p, s.target, &dir)
            });
            match summary {
                Ok(r) => SweepPoint {
                    value: *v,
                    status: r.status,
                    error: r.error,
                    failed_checks: r.failed_checks,
                    quantities: r.quantities,
                },
                Err(e) => SweepPoint {
                    value: *v,
                    status: Status::Error,
                    error: Some(format!("{e:#}")),
                    failed_checks: Vec::new(),
                    quantities: BTreeMap::new(),
                },
            }
        })
        .collect::<Vec<_>>();
    let names: BTreeSet<&String> = points.iter().flat_map(|p| p.quantities.keys()).collect();
    let mut summary = BTreeMap::new();
    for name in names {
        let xy: Vec<(f64, f64)> = points.iter().filter_map(|p| p.quantities.get(name).map(|q| (p.value, *q))).collect();
        let Some(&(argmax, max)) = xy.iter().filter(|p| p.1.is_finite()).max_by(|a, b| a.1.total_cmp(&b.1)) else {
            continue;
        };
        let fit = xy.len() >= 2 && xy.iter().all(|(x, y)| *x > 0.0 && y.is_finite() && *y != 0.0);
        let power_law_exponent = fit.then(|| {
            let (x, y): (Vec<f64>, Vec<f64>) = xy.iter().map(|(x, y)| (*x, y.abs())).unzip();
            power_law_exponent(&x, &y)
        });
        summary.insert(name.clone(), QuantitySummary { argmax, max, power_law_exponent });
    }
    let failed = points.iter().filter(|p| p.status == Status::Error).count();
    run.le("failed_points", failed as f64, 0.0);
    run.quantity("points", points.len() as f64);
    let columns: Vec<String> = summary.keys().cloned().collect();
    let mut rows = Vec::with_capacity(points.len());
    for p in &points {
        let mut r = vec![p.value.to_string(), status_name(p.status).to_string()];
        r.extend(columns.iter().map(|c| p.quantities.get(c).map(f64::to_string).unwrap_or_default()));
        rows.push(r);
    }
    let mut header = vec!["value".to_string(), "status".to_string()];
    header.extend(columns);
    run.csv("sweep.csv", std::iter::once(header).chain(rows))?;
    run.json("sweep.json", &SweepReport { parameter: s.parameter, target: s.target.name(), points, summary })
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Ok => "ok",
        Status::ChecksFailed => "checks_failed",
        Status::Error => "error",
    }
}
