use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_mollifier_eps, Grid};
use crate::model::{make_scenario_seeded, InitialData, ModelParams, Potential, Preset, SensitivitySpec};

/// Environment variable that relocates relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "CHEMOFLOW_OUTPUT_ROOT";

/// One scenario, read from a flat TOML file. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    /// `uniform`, `gaussian-bump`, `perturbed` or `vortex`.
    pub preset: String,
    /// Total cell mass m = ∫n₀.
    pub mass: f64,
    /// Upper bound K on ‖v₀‖∞.
    pub k_bound: f64,
    /// `logarithmic`, `sub-logarithmic`, `rotated-logarithmic` or
    /// `scaled-logarithmic`.
    pub sensitivity: String,
    /// θ, α or c of the chosen sensitivity; ignored for `logarithmic`.
    pub sensitivity_param: f64,
    pub mollifier_eps: f64,
    /// Slope of the linear potential Φ = g·y; unused when `phi_file` is set.
    pub gravity: f64,
    pub phi_file: Option<PathBuf>,
    pub t_end: f64,
    pub sample_interval: f64,
    pub dt_safety: f64,
    pub fixed_dt: Option<f64>,
    /// Entry threshold δ of the conditional decay check.
    pub lyapunov_delta: f64,
    pub fluid_advection: bool,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub v_floor: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            nx: 64,
            ny: 64,
            lx: 1.0,
            ly: 1.0,
            preset: "gaussian-bump".into(),
            mass: 0.1,
            k_bound: 1.0,
            sensitivity: "logarithmic".into(),
            sensitivity_param: 0.0,
            mollifier_eps: 0.05,
            gravity: 1.0,
            phi_file: None,
            t_end: 20.0,
            sample_interval: 0.1,
            dt_safety: 0.5,
            fixed_dt: None,
            lyapunov_delta: 1e-3,
            fluid_advection: true,
            output_dir: PathBuf::from("output"),
            seed: 0,
            v_floor: 1e-14,
        }
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {x}")))
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut c = Self::from_toml_str(&text)?;
        if let (Some(f), Some(dir)) = (&c.phi_file, path.parent()) {
            if f.is_relative() {
                c.phi_file = Some(dir.join(f));
            }
        }
        Ok(c)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 4 || self.ny < 4 {
            return Err(Error::Config(format!("grid must be at least 4×4, got {}×{}", self.nx, self.ny)));
        }
        positive("lx", self.lx)?;
        positive("ly", self.ly)?;
        positive("mass", self.mass)?;
        positive("k_bound", self.k_bound)?;
        positive("sample_interval", self.sample_interval)?;
        positive("lyapunov_delta", self.lyapunov_delta)?;
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be nonnegative, got {}", self.t_end)));
        }
        if !(self.dt_safety > 0.0 && self.dt_safety < 1.0) {
            return Err(Error::Config(format!("dt_safety must lie in (0, 1), got {}", self.dt_safety)));
        }
        if let Some(dt) = self.fixed_dt {
            positive("fixed_dt", dt)?;
        }
        if !self.gravity.is_finite() {
            return Err(Error::Config("gravity must be finite".into()));
        }
        if !(self.v_floor > 0.0 && self.v_floor < 1e-6) {
            return Err(Error::Config(format!("v_floor must lie in (0, 1e-6), got {}", self.v_floor)));
        }
        Preset::parse(&self.preset)?;
        self.sensitivity_spec()?;
        check_mollifier_eps(&self.grid()?, self.mollifier_eps)?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.nx, self.ny, self.lx, self.ly).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn preset(&self) -> Result<Preset> {
        Preset::parse(&self.preset)
    }

    pub fn sensitivity_spec(&self) -> Result<SensitivitySpec> {
        SensitivitySpec::from_name(&self.sensitivity, self.sensitivity_param)
    }

    pub fn potential(&self, grid: &Grid) -> Result<Potential> {
        match &self.phi_file {
            Some(p) => Potential::from_file(p, grid).map_err(|e| match e {
                Error::Config(_) => e,
                other => Error::Config(other.to_string()),
            }),
            None => Ok(Potential::Linear { g: self.gravity }),
        }
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        let grid = self.grid()?;
        let mut p = ModelParams::new(&grid, &self.potential(&grid)?, self.mollifier_eps, self.sensitivity_spec()?)?;
        p.dt_safety = self.dt_safety;
        p.v_floor = self.v_floor;
        p.fluid_advection = self.fluid_advection;
        p.fixed_dt = self.fixed_dt;
        p.validate()?;
        Ok(p)
    }

    pub fn initial_data(&self) -> Result<InitialData> {
        make_scenario_seeded(self.preset()?, &self.grid()?, self.mass, self.k_bound, self.seed)
    }

    /// `output_dir`, placed under `$CHEMOFLOW_OUTPUT_ROOT` when that is set
    /// and the directory is relative.
    pub fn output_path(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_roundtrip() {
        let c = ScenarioConfig::default();
        c.validate().unwrap();
        let s = c.to_toml_string().unwrap();
        assert_eq!(ScenarioConfig::from_toml_str(&s).unwrap(), c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = ScenarioConfig::from_toml_str("# small run\nnx = 16\nny = 16\npreset = \"uniform\"\nfixed_dt = 1e-3\n").unwrap();
        assert_eq!((c.nx, c.mass, c.fixed_dt), (16, 0.1, Some(1e-3)));
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        for bad in [
            "nx = 16\nbogus = 1\n",
            "mass = -1.0\n",
            "preset = \"spiral\"\n",
            "sensitivity = \"sub-logarithmic\"\nsensitivity_param = 1.5\n",
            "dt_safety = 1.0\n",
            "mollifier_eps = 0.6\n",
            "nx = \"many\"\n",
        ] {
            assert!(matches!(ScenarioConfig::from_toml_str(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn builds_model_objects() {
        let c = ScenarioConfig::from_toml_str("nx = 12\nny = 10\nlx = 2.0\nfixed_dt = 1e-4\nfluid_advection = false\n").unwrap();
        let p = c.model_params().unwrap();
        assert_eq!(p.fixed_dt, Some(1e-4));
        assert!(!p.fluid_advection);
        let d = c.initial_data().unwrap();
        assert!((d.n0.integral() - 0.1).abs() < 1e-15);
    }
}
