//! Scenario configuration: a TOML file with unknown keys rejected.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use fano_core::coefficients::{EnvInitState, ModeRef, SqueezedMode};
use fano_core::driving::DrivingProtocol;
use fano_core::dynamics::GaussianModeState;
use fano_core::spectral::{BathMode, FrequencyCutoff, Interpolation, SpectralDensity};
use fano_core::steady::NessMode;
use fano_core::{Complex64, TimeGrid};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Simulate,
    Steady,
    Ness,
    Rcmap,
    OracleCheck,
    Sweep,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Steady => "steady",
            Self::Ness => "ness",
            Self::Rcmap => "rcmap",
            Self::OracleCheck => "oracle-check",
            Self::Sweep => "sweep",
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Pipeline run by `fano run`; other subcommands check it if present.
    pub pipeline: Option<Pipeline>,
    #[serde(default = "one")]
    pub omega0: f64,
    /// Coupling scale λ: the density used is λ² J and explicit mode
    /// couplings are multiplied by λ.
    #[serde(default = "one")]
    pub lambda: f64,
    pub density: DensityConfig,
    #[serde(default)]
    pub cutoff: CutoffConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub environment: EnvironmentConfig,
    #[serde(default)]
    pub initial_state: InitialStateConfig,
    pub driving: Option<DrivingConfig>,
    pub oracle: Option<OracleConfig>,
    pub ness: Option<NessConfig>,
    pub rcmap: Option<RcConfig>,
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Output directory, relative to the config file; `--out` overrides.
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityConfig {
    Flat {
        gamma0: f64,
    },
    Lorentzian {
        gamma0: f64,
        eta: f64,
        /// Peak frequency; defaults to `omega0 − detuning`.
        omega_c: Option<f64>,
        detuning: Option<f64>,
    },
    Discrete {
        modes: Vec<BathMode>,
    },
    /// Table given inline or as a two-column CSV (frequency, density).
    Tabulated {
        omegas: Option<Vec<f64>>,
        values: Option<Vec<f64>>,
        csv: Option<PathBuf>,
        #[serde(default = "linear")]
        interpolation: Interpolation,
    },
}

fn linear() -> Interpolation {
    Interpolation::Linear
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffConfig {
    #[serde(default = "default_omega_min")]
    pub omega_min: f64,
    #[serde(default = "default_omega_max")]
    pub omega_max: f64,
    #[serde(default = "default_true")]
    pub full_axis: bool,
}

fn default_omega_min() -> f64 {
    0.02
}

fn default_omega_max() -> f64 {
    40.0
}

fn default_true() -> bool {
    true
}

impl Default for CutoffConfig {
    fn default() -> Self {
        Self { omega_min: default_omega_min(), omega_max: default_omega_max(), full_axis: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dt: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    /// Inverse temperature; omitted or `inf` means zero temperature.
    pub beta: Option<f64>,
    #[serde(default)]
    pub displaced: Vec<DisplacedConfig>,
    #[serde(default)]
    pub squeezed: Vec<SqueezedConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisplacedConfig {
    pub mode: ModeRef,
    pub alpha: Complex64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqueezedConfig {
    pub mode: ModeRef,
    pub r: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub n_thermal: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialStateConfig {
    #[default]
    Vacuum,
    Coherent {
        alpha: Complex64,
    },
    Thermal {
        n: f64,
    },
    /// Mean with central pair and occupation moments.
    Moments {
        mean: Complex64,
        central_pair: Complex64,
        central_occupation: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DrivingConfig {
    Constant {
        amplitude: Complex64,
    },
    Monochromatic {
        amplitude: Complex64,
        omega: f64,
    },
    GaussianPulse {
        amplitude: Complex64,
        omega: f64,
        center: f64,
        width: f64,
    },
    Sampled {
        dt: f64,
        values: Vec<Complex64>,
    },
    /// Two-column CSV (Re l, Im l) sampled at spacing `dt` from t = 0.
    SampledCsv {
        dt: f64,
        csv: PathBuf,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "default_oracle_modes")]
    pub modes: usize,
    /// Compare every n-th sample; the oracle costs O(N²) per sample.
    #[serde(default = "default_stride")]
    pub compare_stride: usize,
    /// Upper edge of the discretization window; defaults to `cutoff.omega_max`.
    pub omega_max: Option<f64>,
}

fn default_oracle_modes() -> usize {
    2000
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NessConfig {
    pub modes: Vec<NessModeConfig>,
    pub resonance_sweep: Option<RangeConfig>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NessModeConfig {
    pub omega: f64,
    pub coupling: Complex64,
    pub alpha: Complex64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeConfig {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl RangeConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.stop > self.start) {
            bail!("range needs start < stop and a positive step");
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| self.start + self.step * i as f64).collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RcConfig {
    /// Extra widths compared at fixed `γ0 η`.
    #[serde(default)]
    pub etas: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Eta,
    Gamma0,
    DeltaDet,
    Beta,
    Lambda,
    OmegaD,
    AlphaD,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    #[serde(default = "default_target")]
    pub target: Pipeline,
    /// η sweeps keep `γ0 η` fixed; λ sweeps keep `λ|α|` fixed.
    #[serde(default)]
    pub hold_coupling_product: bool,
}

fn default_target() -> Pipeline {
    Pipeline::Simulate
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "t_first_law")]
    pub first_law: f64,
    #[serde(default = "t_positivity")]
    pub positivity: f64,
    #[serde(default = "t_oracle")]
    pub oracle: f64,
    #[serde(default = "t_equilibrium")]
    pub equilibrium: f64,
    #[serde(default = "t_ness")]
    pub ness: f64,
    #[serde(default = "t_ness_convergence")]
    pub ness_convergence: f64,
    #[serde(default = "t_rc")]
    pub rc_relative: f64,
}

fn t_first_law() -> f64 {
    1e-8
}
fn t_positivity() -> f64 {
    1e-9
}
fn t_oracle() -> f64 {
    1e-4
}
fn t_equilibrium() -> f64 {
    1e-3
}
fn t_ness() -> f64 {
    1e-6
}
fn t_ness_convergence() -> f64 {
    1e-3
}
fn t_rc() -> f64 {
    5e-2
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            first_law: t_first_law(),
            positivity: t_positivity(),
            oracle: t_oracle(),
            equilibrium: t_equilibrium(),
            ness: t_ness(),
            ness_convergence: t_ness_convergence(),
            rc_relative: t_rc(),
        }
    }
}

/// A parsed config together with the directory relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ScenarioConfig,
    pub base_dir: PathBuf,
}

/// Read and parse a config file. Parse errors carry line and column.
pub fn load(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let config = parse(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig { config, base_dir })
}

pub fn parse(text: &str) -> std::result::Result<ScenarioConfig, toml::de::Error> {
    toml::from_str(text)
}

impl LoadedConfig {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> Option<PathBuf> {
        self.config.output.as_deref().map(|p| self.resolve(p))
    }

    /// The density at coupling scale λ.
    pub fn density(&self) -> Result<SpectralDensity> {
        let c = &self.config;
        let j = match &c.density {
            DensityConfig::Flat { gamma0 } => SpectralDensity::flat(*gamma0)?,
            DensityConfig::Lorentzian { gamma0, eta, omega_c, detuning } => {
                let wc = match (omega_c, detuning) {
                    (Some(_), Some(_)) => bail!("density: give omega_c or detuning, not both"),
                    (Some(w), None) => *w,
                    (None, Some(d)) => c.omega0 - d,
                    (None, None) => c.omega0,
                };
                SpectralDensity::lorentzian(*gamma0, *eta, wc)?
            }
            DensityConfig::Discrete { modes } => SpectralDensity::discrete(modes.clone())?,
            DensityConfig::Tabulated { omegas, values, csv, interpolation } => {
                let (w, v) = match (omegas, values, csv) {
                    (Some(w), Some(v), None) => (w.clone(), v.clone()),
                    (None, None, Some(p)) => read_table(&self.resolve(p))?,
                    _ => bail!("density: tabulated needs either omegas and values or csv"),
                };
                SpectralDensity::tabulated(w, v, *interpolation)?
            }
        };
        if !(c.lambda > 0.0 && c.lambda.is_finite()) {
            bail!("lambda must be positive");
        }
        Ok(if c.lambda == 1.0 { j } else { j.scaled(c.lambda) })
    }

    pub fn cutoff(&self) -> Result<FrequencyCutoff> {
        let c = &self.config.cutoff;
        Ok(FrequencyCutoff { omega_min: c.omega_min, omega_max: c.omega_max, full_axis: c.full_axis }.validated()?)
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        Ok(TimeGrid::new(self.config.grid.dt, self.config.grid.steps)?)
    }

    pub fn beta(&self) -> f64 {
        self.config.environment.beta.unwrap_or(f64::INFINITY)
    }

    /// Environment state; displaced modes from the `ness` section are added
    /// as explicit coherent modes. Explicit couplings carry the factor λ.
    pub fn environment(&self) -> Result<EnvInitState> {
        self.environment_mapped(&|m| Ok(m))
    }

    /// Environment with every mode reference passed through `map`.
    pub fn environment_mapped(&self, map: &dyn Fn(ModeRef) -> Result<ModeRef>) -> Result<EnvInitState> {
        let e = &self.config.environment;
        let mut env = match e.beta {
            Some(b) if b.is_finite() => EnvInitState::thermal(b)?,
            Some(b) if b == f64::INFINITY => EnvInitState::zero_temperature(),
            Some(b) => bail!("environment: beta must be positive, got {b}"),
            None => EnvInitState::zero_temperature(),
        };
        let lambda = self.config.lambda;
        let scaled = |m: ModeRef| match m {
            ModeRef::Explicit { omega, coupling } => ModeRef::Explicit { omega, coupling: coupling * lambda },
            ModeRef::Index(_) => m,
        };
        for d in &e.displaced {
            env = env.with_displaced(map(scaled(d.mode))?, d.alpha);
        }
        for s in &e.squeezed {
            env = env.with_squeezed(SqueezedMode::squeezed_thermal(map(scaled(s.mode))?, s.r, s.theta, s.n_thermal)?);
        }
        for m in self.ness_modes() {
            env = env.with_displaced(map(ModeRef::Explicit { omega: m.omega, coupling: m.coupling })?, m.alpha);
        }
        Ok(env)
    }

    pub fn ness_modes(&self) -> Vec<NessMode> {
        self.config
            .ness
            .iter()
            .flat_map(|n| n.modes.iter())
            .map(|m| NessMode { omega: m.omega, coupling: m.coupling * self.config.lambda, alpha: m.alpha })
            .collect()
    }

    pub fn initial_state(&self) -> Result<GaussianModeState> {
        let s = match &self.config.initial_state {
            InitialStateConfig::Vacuum => GaussianModeState::vacuum(),
            InitialStateConfig::Coherent { alpha } => GaussianModeState::coherent(*alpha),
            InitialStateConfig::Thermal { n } => GaussianModeState::thermal(*n)?,
            InitialStateConfig::Moments { mean, central_pair, central_occupation } => {
                GaussianModeState::from_central(*mean, *central_pair, *central_occupation)?
            }
        };
        s.validate()?;
        Ok(s)
    }

    pub fn driving(&self) -> Result<Option<DrivingProtocol>> {
        let Some(d) = &self.config.driving else { return Ok(None) };
        let p = match d {
            DrivingConfig::Constant { amplitude } => DrivingProtocol::Constant { amplitude: *amplitude },
            DrivingConfig::Monochromatic { amplitude, omega } => {
                DrivingProtocol::Monochromatic { amplitude: *amplitude, omega: *omega }
            }
            DrivingConfig::GaussianPulse { amplitude, omega, center, width } => {
                DrivingProtocol::GaussianPulse { amplitude: *amplitude, omega: *omega, center: *center, width: *width }
            }
            DrivingConfig::Sampled { dt, values } => DrivingProtocol::Sampled { dt: *dt, values: values.clone() },
            DrivingConfig::SampledCsv { dt, csv } => {
                let (re, im) = read_table(&self.resolve(csv))?;
                DrivingProtocol::Sampled {
                    dt: *dt,
                    values: re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect(),
                }
            }
        };
        p.validate()?;
        Ok(Some(p))
    }

    /// Apply one sweep value. With `hold_product`, an η sweep keeps `γ0 η`
    /// fixed and a λ sweep keeps `λ|α|` fixed for every displaced mode.
    pub fn with_parameter(&self, p: SweepParameter, value: f64, hold_product: bool) -> Result<Self> {
        let mut out = self.clone();
        let c = &mut out.config;
        match p {
            SweepParameter::Lambda => {
                if hold_product {
                    let r = c.lambda / value;
                    c.environment.displaced.iter_mut().for_each(|d| d.alpha *= r);
                    c.ness.iter_mut().flat_map(|n| n.modes.iter_mut()).for_each(|m| m.alpha *= r);
                }
                c.lambda = value;
            }
            SweepParameter::Beta => c.environment.beta = Some(value),
            SweepParameter::Eta | SweepParameter::Gamma0 | SweepParameter::DeltaDet => {
                let DensityConfig::Lorentzian { gamma0, eta, omega_c, detuning } = &mut c.density else {
                    bail!("sweeping {p:?} needs a Lorentzian density");
                };
                match p {
                    SweepParameter::Eta => {
                        if hold_product {
                            *gamma0 *= *eta / value;
                        }
                        *eta = value;
                    }
                    SweepParameter::Gamma0 => *gamma0 = value,
                    _ => {
                        *omega_c = None;
                        *detuning = Some(value);
                    }
                }
            }
            SweepParameter::OmegaD | SweepParameter::AlphaD => {
                let m = c
                    .ness
                    .as_mut()
                    .and_then(|n| n.modes.first_mut())
                    .ok_or_else(|| anyhow!("sweeping {p:?} needs a [ness] mode"))?;
                if p == SweepParameter::OmegaD {
                    m.omega = value;
                } else {
                    m.alpha = Complex64::new(value, 0.0);
                }
            }
        }
        Ok(out)
    }
}

fn read_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| anyhow!("{}: row {} needs two columns", path.display(), line + 1))?
                .parse::<f64>()
                .with_context(|| format!("{}: row {}", path.display(), line + 1))
        };
        match (parse(0), parse(1)) {
            (Ok(x), Ok(y)) => {
                a.push(x);
                b.push(y);
            }
            // A header row is allowed.
            (Err(e), _) | (_, Err(e)) if line > 0 => return Err(e),
            _ => {}
        }
    }
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loaded(text: &str) -> LoadedConfig {
        LoadedConfig { config: parse(text).unwrap(), base_dir: PathBuf::new() }
    }

    const LORENTZIAN: &str =
        "[density]\nkind = \"lorentzian\"\ngamma0 = 0.5\neta = 0.4\n[grid]\ndt = 0.01\nsteps = 10\n";

    #[test]
    fn sample_configs_parse() {
        for text in [
            include_str!("../configs/flat.toml"),
            include_str!("../configs/lorentzian_driven.toml"),
            include_str!("../configs/steady.toml"),
            include_str!("../configs/ness.toml"),
            include_str!("../configs/rcmap.toml"),
            include_str!("../configs/oracle.toml"),
            include_str!("../configs/sweep_lambda.toml"),
        ] {
            let l = loaded(text);
            l.density().unwrap();
            l.grid().unwrap();
            l.environment().unwrap();
            l.initial_state().unwrap();
            l.driving().unwrap();
        }
    }

    #[test]
    fn unknown_keys_are_rejected_in_every_section() {
        assert!(parse(&format!("extra = 1\n{LORENTZIAN}")).is_err());
        assert!(parse(&LORENTZIAN.replace("eta = 0.4", "eta = 0.4\nwidth = 2")).is_err());
        assert!(parse(&format!("{LORENTZIAN}[environment]\ntemperature = 1\n")).is_err());
        let e = parse(&LORENTZIAN.replace("steps", "n_steps")).unwrap_err();
        assert!(e.span().is_some());
    }

    #[test]
    fn lorentzian_peak_defaults_to_omega0() {
        let l = loaded(&format!("omega0 = 1.7\n{LORENTZIAN}"));
        assert_eq!(l.density().unwrap(), SpectralDensity::lorentzian(0.5, 0.4, 1.7).unwrap());
        let l = loaded(&format!("omega0 = 1.7\n{}", LORENTZIAN.replace("eta = 0.4", "eta = 0.4\ndetuning = 0.2")));
        let SpectralDensity::Lorentzian { omega_c, .. } = l.density().unwrap() else { panic!() };
        assert!((omega_c - 1.5).abs() < 1e-15);
        let both = LORENTZIAN.replace("eta = 0.4", "eta = 0.4\ndetuning = 0.2\nomega_c = 1.0");
        assert!(loaded(&both).density().is_err());
    }

    #[test]
    fn lambda_scales_the_density() {
        let l = loaded(&format!("lambda = 0.5\n{LORENTZIAN}"));
        let SpectralDensity::Lorentzian { gamma0, .. } = l.density().unwrap() else { panic!() };
        assert!((gamma0 - 0.125).abs() < 1e-15);
    }

    #[test]
    fn eta_sweep_can_hold_the_coupling_product() {
        let l = loaded(LORENTZIAN);
        let p = l.with_parameter(SweepParameter::Eta, 0.1, true).unwrap();
        let SpectralDensity::Lorentzian { gamma0, eta, .. } = p.density().unwrap() else { panic!() };
        assert!((gamma0 * eta - 0.2).abs() < 1e-15);
        let p = l.with_parameter(SweepParameter::Eta, 0.1, false).unwrap();
        let SpectralDensity::Lorentzian { gamma0, .. } = p.density().unwrap() else { panic!() };
        assert_eq!(gamma0, 0.5);
        assert!(l.with_parameter(SweepParameter::OmegaD, 1.0, false).is_err());
    }

    #[test]
    fn mode_references_and_temperature() {
        let text = format!(
            "{LORENTZIAN}[environment]\nbeta = 2.0\n[[environment.displaced]]\nmode = {{ index = 3 }}\nalpha = [1.0, 0.0]\n\
             [[environment.squeezed]]\nmode = {{ explicit = {{ omega = 1.2, coupling = [0.1, 0.0] }} }}\nr = 0.5\n"
        );
        let env = loaded(&text).environment().unwrap();
        assert_eq!(env.beta(), 2.0);
        assert_eq!(env.displaced()[0].mode, ModeRef::Index(3));
        assert!(matches!(env.squeezed()[0].mode, ModeRef::Explicit { omega, .. } if omega == 1.2));
        assert_eq!(loaded(LORENTZIAN).beta(), f64::INFINITY);
        assert!(loaded(&format!("{LORENTZIAN}[environment]\nbeta = -1.0\n")).environment().is_err());
    }

    #[test]
    fn lambda_scales_explicit_couplings_and_can_hold_epsilon() {
        let text = format!(
            "lambda = 0.5\n{LORENTZIAN}[[ness.modes]]\nomega = 1.1\ncoupling = [1.0, 0.0]\nalpha = [2.0, 0.0]\n"
        );
        let l = loaded(&text);
        assert_eq!(l.ness_modes()[0].coupling, Complex64::new(0.5, 0.0));
        let p = l.with_parameter(SweepParameter::Lambda, 0.1, true).unwrap();
        let m = p.ness_modes()[0];
        assert!((m.coupling.re - 0.1).abs() < 1e-15);
        assert!((m.alpha.re * m.coupling.re - 1.0).abs() < 1e-12);
        let m = l.with_parameter(SweepParameter::Lambda, 0.1, false).unwrap().ness_modes()[0];
        assert_eq!(m.alpha.re, 2.0);
    }

    #[test]
    fn range_values_include_both_ends() {
        let r = RangeConfig { start: 0.5, stop: 1.5, step: 0.005 };
        let v = r.values().unwrap();
        assert_eq!(v.len(), 201);
        assert!((v[200] - 1.5).abs() < 1e-12);
        assert!(RangeConfig { start: 1.0, stop: 0.0, step: 0.1 }.values().is_err());
    }

    #[test]
    fn tables_accept_a_header_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("j.csv");
        std::fs::write(&p, "omega,j\n0.0,0.0\n1.0,0.5\n2.0,0.0\n").unwrap();
        let (w, v) = read_table(&p).unwrap();
        assert_eq!(w, vec![0.0, 1.0, 2.0]);
        assert_eq!(v, vec![0.0, 0.5, 0.0]);
        std::fs::write(&p, "0.0,0.0\n1.0,x\n").unwrap();
        assert!(read_table(&p).is_err());
    }
}
