//! Run configuration: a TOML file with one section per module block.
//!
//! Unknown keys are rejected. Missing keys take the desk defaults below, and
//! the resolved configuration is written back into every manifest, so no
//! default is silent.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cascade::CascadeParams;
use crate::decomposition::NormMode;
use crate::error::{Error, Result};
use crate::initial::{normalized, random_solenoidal, shear, taylor_green, Spectrum};
use crate::integrator::{Scheme, TimeGrid};
use crate::noise::{FilterRule, NoiseModel, NoiseParams};
use crate::spectral::format::read_field;
use crate::spectral::{sobolev_norm_plancherel, Grid, GridSpec, SpectralField};
use crate::verifier::WeakFormParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub time: TimeConfig,
    pub initial: InitialConfig,
    pub noise: NoiseParams,
    pub decomposition: DecompositionConfig,
    pub cascade: CascadeParams,
    pub ensemble: EnsembleConfig,
    pub verify: VerifyConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec {
                dim: 2,
                n_per_axis: 32,
            },
            time: TimeConfig::default(),
            initial: InitialConfig::Random {
                spectrum: Spectrum::Exponential {
                    length: 0.5,
                    max_radius: 10.0,
                },
                norm: 1.0,
                seed: 1,
            },
            noise: NoiseParams {
                amplitude: 10.0,
                filter: FilterRule::Identity,
                ..NoiseParams::default()
            },
            decomposition: DecompositionConfig::default(),
            cascade: CascadeParams {
                epsilon1: 0.11,
                ..CascadeParams::default()
            },
            ensemble: EnsembleConfig::default(),
            verify: VerifyConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub horizon: f64,
    pub dt: f64,
    pub scheme: Scheme,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            horizon: 0.25,
            dt: 2e-3,
            scheme: Scheme::ExponentialEm,
        }
    }
}

impl TimeConfig {
    pub fn build(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.dt, self.scheme)
    }
}

/// Initial datum. Random data are normalized in the critical norm of the
/// cascade mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialConfig {
    Zero,
    TaylorGreen { amplitude: f64 },
    Shear { amplitude: f64 },
    Random { spectrum: Spectrum, norm: f64, seed: u64 },
    File { path: PathBuf },
}

impl InitialConfig {
    pub fn build(&self, grid: &Grid, mode: NormMode) -> Result<SpectralField> {
        match self {
            InitialConfig::Zero => Ok(SpectralField::zero_vector(grid)),
            InitialConfig::TaylorGreen { amplitude } => Ok(taylor_green(grid, *amplitude)),
            InitialConfig::Shear { amplitude } => Ok(shear(grid, *amplitude)),
            InitialConfig::Random { spectrum, norm, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let u = random_solenoidal(grid, spectrum, &mut rng);
                if u.is_zero() {
                    return Ok(u);
                }
                match mode {
                    NormMode::L3 => normalized(&u, 3.0, *norm),
                    NormMode::H12 => Ok(u.scaled(norm / sobolev_norm_plancherel(&u, 0.5))),
                }
            }
            InitialConfig::File { path } => {
                let u = read_field(path)?;
                if u.grid().dim() != grid.dim() || u.grid().n() != grid.n() {
                    return Err(Error::Config(format!(
                        "initial.path: field is {}D at n = {}, config grid is {}D at n = {}",
                        u.grid().dim(),
                        u.grid().n(),
                        grid.dim(),
                        grid.n()
                    )));
                }
                Ok(u)
            }
        }
    }

    fn validate(&self, at: &str) -> Result<()> {
        match self {
            InitialConfig::TaylorGreen { amplitude } | InitialConfig::Shear { amplitude } => {
                finite(&format!("{at}.amplitude"), *amplitude)
            }
            InitialConfig::Random { spectrum, norm, seed } => {
                seed_fits(&format!("{at}.seed"), *seed)?;
                positive(&format!("{at}.norm"), *norm)?;
                let (radius, extra) = match *spectrum {
                    Spectrum::Flat { max_radius } => (max_radius, 1.0),
                    Spectrum::PowerLaw { exponent, max_radius } => (max_radius, exponent.abs() + 1.0),
                    Spectrum::Exponential { length, max_radius } => (max_radius, length),
                };
                positive(&format!("{at}.spectrum.max_radius"), radius)?;
                positive(&format!("{at}.spectrum"), extra)
            }
            InitialConfig::Zero | InitialConfig::File { .. } => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecompositionConfig {
    pub epsilon0: f64,
    pub k_max: usize,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        Self {
            epsilon0: 0.05,
            k_max: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Cascade,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_paths: usize,
    pub base_seed: u64,
    pub method: Method,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_paths: 128,
            base_seed: 7,
            method: Method::Cascade,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write the field at every step.
    pub dense: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("snse-out"),
            dense: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Number of `δ` values `T/m, …, T` in the stopping-time survey.
    pub survival_points: usize,
    pub heat: HeatConfig,
    pub poincare: PoincareConfig,
    pub uniqueness: UniquenessConfig,
    pub weak_form: WeakFormConfig,
    pub consistency: ConsistencyConfig,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            survival_points: 16,
            heat: HeatConfig::default(),
            poincare: PoincareConfig::default(),
            uniqueness: UniquenessConfig::default(),
            weak_form: WeakFormConfig::default(),
            consistency: ConsistencyConfig::default(),
        }
    }
}

/// Heat-estimate cases run on the main grid and time grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatConfig {
    pub n_paths: usize,
    pub base_seed: u64,
    /// Amplitude of the single shear noise column of the `p = 2` case.
    pub shear_amplitude: f64,
    /// `L²` size of the random forcing rows and noise columns.
    pub data_scale: f64,
    pub data_columns: usize,
}

impl Default for HeatConfig {
    fn default() -> Self {
        Self {
            n_paths: 64,
            base_seed: 11,
            shear_amplitude: 1.0,
            data_scale: 0.5,
            data_columns: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoincareConfig {
    pub n_fields: usize,
    pub exponents: Vec<f64>,
    pub max_radius: f64,
    pub seed: u64,
}

impl Default for PoincareConfig {
    fn default() -> Self {
        Self {
            n_fields: 128,
            exponents: vec![3.0, 6.0],
            max_radius: 6.0,
            seed: 13,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniquenessConfig {
    /// Noise of the two solves. The ensemble noise is usually strong enough
    /// that its Lipschitz constant alone amplifies differences well past the
    /// bound, so this defaults to the mild low-pass family.
    pub noise: NoiseParams,
    pub horizon: f64,
    pub perturbation: f64,
    pub n_paths: usize,
    pub base_seed: u64,
    pub bound: f64,
}

impl Default for UniquenessConfig {
    fn default() -> Self {
        Self {
            noise: NoiseParams::default(),
            horizon: 0.1,
            perturbation: 1e-6,
            n_paths: 32,
            base_seed: 17,
            bound: 10.0,
        }
    }
}

/// The weak-form residual and the consistency check need fine time steps, so
/// they run on their own small grid, datum and noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeakFormConfig {
    pub n_per_axis: usize,
    pub initial: InitialConfig,
    pub noise: NoiseParams,
    pub horizon: f64,
    pub fine_dt: f64,
    pub strides: [usize; 3],
    pub n_paths: usize,
    pub base_seed: u64,
    pub test_radius2: f64,
    pub windows: usize,
}

impl Default for WeakFormConfig {
    fn default() -> Self {
        Self {
            n_per_axis: 16,
            initial: InitialConfig::Random {
                spectrum: Spectrum::Exponential {
                    length: 1.0,
                    max_radius: 5.0,
                },
                norm: 1.0,
                seed: 1,
            },
            noise: NoiseParams::default(),
            horizon: 0.1,
            fine_dt: 3.125e-5,
            strides: [64, 32, 16],
            n_paths: 32,
            base_seed: 3,
            test_radius2: 4.0,
            windows: 25,
        }
    }
}

impl WeakFormConfig {
    pub fn params(&self) -> WeakFormParams {
        WeakFormParams {
            horizon: self.horizon,
            fine_dt: self.fine_dt,
            strides: self.strides,
            n_paths: self.n_paths,
            base_seed: self.base_seed,
            test_radius2: self.test_radius2,
            windows: self.windows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsistencyConfig {
    pub n_per_axis: usize,
    pub initial: InitialConfig,
    pub noise: NoiseParams,
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub base_seed: u64,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            n_per_axis: 16,
            initial: InitialConfig::Random {
                spectrum: Spectrum::Exponential {
                    length: 0.5,
                    max_radius: 5.0,
                },
                norm: 1.0,
                seed: 1,
            },
            noise: NoiseParams::default(),
            horizon: 0.1,
            dt: 4e-3,
            n_paths: 16,
            base_seed: 5,
        }
    }
}

fn positive(at: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{at}: must be positive and finite, got {x}")))
    }
}

fn finite(at: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{at}: must be finite, got {x}")))
    }
}

fn at_least(at: &str, x: usize, min: usize) -> Result<()> {
    if x >= min {
        Ok(())
    } else {
        Err(Error::Config(format!("{at}: must be at least {min}, got {x}")))
    }
}

/// TOML integers are signed 64-bit.
fn seed_fits(at: &str, seed: u64) -> Result<()> {
    if seed <= i64::MAX as u64 {
        Ok(())
    } else {
        Err(Error::Config(format!("{at}: seeds must be below 2^63, got {seed}")))
    }
}

/// Prefixes parameter errors from constructors with the config path.
fn located<T>(at: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Config(format!("{at}: {e}")))
}

impl RunConfig {
    /// Parses TOML, or a JSON manifest carrying a `config` object.
    pub fn from_str(text: &str, is_json: bool) -> Result<Self> {
        let cfg: RunConfig = if is_json {
            let value: serde_json::Value =
                serde_json::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))?;
            let inner = value
                .get("config")
                .cloned()
                .ok_or_else(|| Error::Config("manifest: missing `config` object".into()))?;
            serde_json::from_value(inner).map_err(|e| Error::Config(format!("manifest.config: {e}")))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        Self::from_str(&text, is_json)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every block before any compute.
    pub fn validate(&self) -> Result<()> {
        located("grid", self.grid.build())?;
        located("time", self.time.build())?;
        self.initial.validate("initial")?;
        located("noise", NoiseModel::from_params(&self.noise))?;
        positive("decomposition.epsilon0", self.decomposition.epsilon0)?;
        if self.decomposition.k_max > 30 {
            return Err(Error::Config(format!(
                "decomposition.k_max: at most 30 levels, got {}",
                self.decomposition.k_max
            )));
        }
        let c = &self.cascade;
        if !(c.epsilon1 > 2.0 * self.decomposition.epsilon0 && c.epsilon1 < 1.0) {
            return Err(Error::Config(format!(
                "cascade.epsilon1: must lie in (2·epsilon0, 1) = ({}, 1), got {}",
                2.0 * self.decomposition.epsilon0,
                c.epsilon1
            )));
        }
        if !(c.k1_factor >= 2.0 && c.k1_factor.is_finite()) {
            return Err(Error::Config(format!("cascade.k1_factor: must be >= 2, got {}", c.k1_factor)));
        }
        positive("cascade.k1_offset", c.k1_offset)?;
        if !(c.m_growth >= 1.0 && c.m_growth.is_finite()) {
            return Err(Error::Config(format!("cascade.m_growth: must be >= 1, got {}", c.m_growth)));
        }
        positive("cascade.m_floor", c.m_floor)?;
        if !(c.m_margin > 1.0 && c.m_margin.is_finite()) {
            return Err(Error::Config(format!("cascade.m_margin: must exceed 1, got {}", c.m_margin)));
        }
        at_least("ensemble.n_paths", self.ensemble.n_paths, 1)?;
        let v = &self.verify;
        for (at, seed) in [
            ("ensemble.base_seed", self.ensemble.base_seed),
            ("verify.heat.base_seed", v.heat.base_seed),
            ("verify.poincare.seed", v.poincare.seed),
            ("verify.uniqueness.base_seed", v.uniqueness.base_seed),
            ("verify.weak_form.base_seed", v.weak_form.base_seed),
            ("verify.consistency.base_seed", v.consistency.base_seed),
        ] {
            seed_fits(at, seed)?;
        }
        if let InitialConfig::File { path } = &self.initial {
            if !path.exists() {
                return Err(Error::Config(format!("initial.path: {} does not exist", path.display())));
            }
        }

        at_least("verify.survival_points", v.survival_points, 1)?;
        at_least("verify.heat.n_paths", v.heat.n_paths, 2)?;
        positive("verify.heat.shear_amplitude", v.heat.shear_amplitude)?;
        positive("verify.heat.data_scale", v.heat.data_scale)?;
        at_least("verify.heat.data_columns", v.heat.data_columns, 1)?;
        at_least("verify.poincare.n_fields", v.poincare.n_fields, 100)?;
        for (i, p) in v.poincare.exponents.iter().enumerate() {
            if !(*p >= 2.0 && p.is_finite()) {
                return Err(Error::Config(format!("verify.poincare.exponents[{i}]: must be >= 2, got {p}")));
            }
        }
        positive("verify.poincare.max_radius", v.poincare.max_radius)?;
        let u = &v.uniqueness;
        located(
            "verify.uniqueness",
            TimeGrid::new(u.horizon, self.time.dt, self.time.scheme),
        )?;
        located("verify.uniqueness.noise", NoiseModel::from_params(&u.noise))?;
        positive("verify.uniqueness.perturbation", u.perturbation)?;
        positive("verify.uniqueness.bound", u.bound)?;
        at_least("verify.uniqueness.n_paths", u.n_paths, 2)?;

        let w = &v.weak_form;
        located("verify.weak_form.n_per_axis", Grid::new(self.grid.dim, w.n_per_axis))?;
        w.initial.validate("verify.weak_form.initial")?;
        located("verify.weak_form.noise", NoiseModel::from_params(&w.noise))?;
        let fine = located(
            "verify.weak_form",
            TimeGrid::new(w.horizon, w.fine_dt, Scheme::ExponentialEm),
        )?;
        at_least("verify.weak_form.windows", w.windows, 1)?;
        at_least("verify.weak_form.n_paths", w.n_paths, 2)?;
        positive("verify.weak_form.test_radius2", w.test_radius2)?;
        let window = fine.steps() / w.windows;
        if fine.steps() % w.windows != 0 || w.strides.iter().any(|&s| s == 0 || window % s != 0) {
            return Err(Error::Config(
                "verify.weak_form.strides: each stride must divide the window length in fine steps".into(),
            ));
        }
        let cs = &v.consistency;
        located("verify.consistency.n_per_axis", Grid::new(self.grid.dim, cs.n_per_axis))?;
        cs.initial.validate("verify.consistency.initial")?;
        located("verify.consistency.noise", NoiseModel::from_params(&cs.noise))?;
        located(
            "verify.consistency",
            TimeGrid::new(cs.horizon, cs.dt / 4.0, self.time.scheme).and(TimeGrid::new(cs.horizon, cs.dt, self.time.scheme)),
        )?;
        at_least("verify.consistency.n_paths", cs.n_paths, 1)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_desk_defaults() {
        let c = RunConfig::from_str("", false).unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = RunConfig::default();
        let back = RunConfig::from_str(&c.to_toml(), false).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_key_is_located() {
        let err = RunConfig::from_str("[time]\nhorizn = 1.0\n", false).unwrap_err().to_string();
        assert!(err.contains("horizn"), "{err}");
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn invalid_values_name_the_field() {
        let err = RunConfig::from_str("[time]\ndt = -1.0\n", false).unwrap_err().to_string();
        assert!(err.starts_with("configuration error: time"), "{err}");
        let err = RunConfig::from_str("[cascade]\nepsilon1 = 0.05\n", false).unwrap_err().to_string();
        assert!(err.contains("cascade.epsilon1"), "{err}");
        let err = RunConfig::from_str("[grid]\ndim = 2\nn_per_axis = 7\n", false).unwrap_err().to_string();
        assert!(err.contains("grid"), "{err}");
    }

    #[test]
    fn manifest_json_is_accepted() {
        let c = RunConfig::default();
        let manifest = serde_json::json!({ "schema": "x", "config": c });
        let back = RunConfig::from_str(&manifest.to_string(), true).unwrap();
        assert_eq!(back, c);
        assert!(RunConfig::from_str("{}", true).is_err());
    }

    #[test]
    fn random_datum_is_normalized_in_the_mode_norm() {
        let c = RunConfig::default();
        let g = c.grid.build().unwrap();
        let u = c.initial.build(&g, NormMode::L3).unwrap();
        assert!((crate::spectral::lebesgue_norm(&u, 3.0).unwrap() - 1.0).abs() < 1e-12);
        let u = c.initial.build(&g, NormMode::H12).unwrap();
        assert!((sobolev_norm_plancherel(&u, 0.5) - 1.0).abs() < 1e-12);
    }
}
