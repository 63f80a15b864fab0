//! Artifact writers. Every file is a pure function of the config, so reruns
//! are byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fano_core::acceptance::Check;
use fano_core::coefficients::CoefficientSeries;
use fano_core::dynamics::MomentSeries;
use fano_core::green::GreenFunction;
use fano_core::thermo::ThermoRecord;
use serde::Serialize;

use crate::config::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    ChecksFailed,
    Error,
}

/// Checks, quantities and artifacts collected while a pipeline runs.
#[derive(Debug, Default)]
pub struct Run {
    pub dir: PathBuf,
    pub quantities: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub diagnostics: Vec<String>,
    pub artifacts: Vec<String>,
}

impl Run {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let marker = dir.join("ERROR");
        if marker.exists() {
            fs::remove_file(&marker)?;
        }
        Ok(Self { dir: dir.to_path_buf(), ..Self::default() })
    }

    pub fn le(&mut self, name: &str, value: f64, bound: f64) {
        self.checks.push(Check { name: name.into(), value, bound: format!("<= {bound:e}"), passed: value <= bound });
    }

    pub fn ge(&mut self, name: &str, value: f64, bound: f64) {
        self.checks.push(Check { name: name.into(), value, bound: format!(">= {bound:e}"), passed: value >= bound });
    }

    pub fn holds(&mut self, name: &str, ok: bool) {
        self.checks.push(Check { name: name.into(), value: f64::from(u8::from(ok)), bound: "true".into(), passed: ok });
    }

    pub fn quantity(&mut self, name: &str, value: f64) {
        self.quantities.insert(name.into(), value);
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = T>) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.artifacts.push(name.into());
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        write_json(&self.dir.join(name), value)?;
        self.artifacts.push(name.into());
        Ok(())
    }

    pub fn status(&self) -> Status {
        if self.checks.iter().all(|c| c.passed) {
            Status::Ok
        } else {
            Status::ChecksFailed
        }
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub pipeline: &'static str,
    pub status: Status,
    pub error: Option<String>,
    pub config: Option<&'a ScenarioConfig>,
    pub quantities: &'a BTreeMap<String, f64>,
    pub checks: &'a [Check],
    pub diagnostics: &'a [String],
    pub artifacts: &'a [String],
}

#[derive(Serialize)]
struct GreenRow {
    t: f64,
    re_g: f64,
    im_g: f64,
    re_gdot: f64,
    im_gdot: f64,
}

pub fn write_green(run: &mut Run, g: &GreenFunction) -> Result<()> {
    let rows = g.grid().times().zip(g.g().iter().zip(g.gdot())).map(|(t, (v, d))| GreenRow {
        t,
        re_g: v.re,
        im_g: v.im,
        re_gdot: d.re,
        im_gdot: d.im,
    });
    run.csv("green.csv", rows)
}

#[derive(Serialize)]
struct CoefficientRow {
    t: f64,
    omega_r: f64,
    gamma: f64,
    noise: f64,
    n_bath: f64,
    n_defined: bool,
    re_displacement: f64,
    im_displacement: f64,
    re_force: f64,
    im_force: f64,
    re_delta: f64,
    im_delta: f64,
}

pub fn write_coefficients(run: &mut Run, c: &CoefficientSeries) -> Result<()> {
    let rows = (0..c.grid.len()).map(|k| CoefficientRow {
        t: c.grid.t(k),
        omega_r: c.omega_r[k],
        gamma: c.gamma[k],
        noise: c.sources.noise[k],
        n_bath: c.n_bath[k],
        n_defined: c.n_defined[k],
        re_displacement: c.sources.displacement[k].re,
        im_displacement: c.sources.displacement[k].im,
        re_force: c.force[k].re,
        im_force: c.force[k].im,
        re_delta: c.delta[k].re,
        im_delta: c.delta[k].im,
    });
    run.csv("coefficients.csv", rows)
}

#[derive(Serialize)]
struct MomentRow {
    t: f64,
    re_mean: f64,
    im_mean: f64,
    re_pair: f64,
    im_pair: f64,
    occupation: f64,
    entropy: f64,
}

pub fn write_moments(run: &mut Run, m: &MomentSeries) -> Result<()> {
    let s = m.entropy();
    let rows = (0..m.grid.len()).map(|k| MomentRow {
        t: m.grid.t(k),
        re_mean: m.mean[k].re,
        im_mean: m.mean[k].im,
        re_pair: m.pair[k].re,
        im_pair: m.pair[k].im,
        occupation: m.occupation[k],
        entropy: s[k],
    });
    run.csv("moments.csv", rows)
}

#[derive(Serialize)]
struct ThermoRow {
    t: f64,
    internal_energy: f64,
    work: f64,
    work_rate: f64,
    heat: f64,
    heat_rate: f64,
    heat_rate_in: f64,
    heat_rate_out: f64,
    beta_r: f64,
    beta_r_defined: bool,
    entropy: f64,
    entropy_production: f64,
    entropy_production_rate: f64,
}

pub fn write_thermo(run: &mut Run, t: &ThermoRecord) -> Result<()> {
    let rows = (0..t.grid.len()).map(|k| ThermoRow {
        t: t.grid.t(k),
        internal_energy: t.internal_energy[k],
        work: t.work[k],
        work_rate: t.work_rate[k],
        heat: t.heat[k],
        heat_rate: t.heat_rate[k],
        heat_rate_in: t.heat_in[k],
        heat_rate_out: t.heat_out[k],
        beta_r: t.beta_r[k],
        beta_r_defined: t.beta_r_defined[k],
        entropy: t.entropy[k],
        entropy_production: t.entropy_production[k],
        entropy_production_rate: t.entropy_production_rate[k],
    });
    run.csv("thermo.csv", rows)
}
