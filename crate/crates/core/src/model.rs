//! Model parameters, the chemotactic sensitivity menu and initial data.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{boundary_mollifier, check_mollifier_eps, Grid, MacField, ScalarField};

/// 2×2 matrix, row-major.
pub type Mat2 = [[f64; 2]; 2];

/// Closed menu of admissible sensitivity tensors `S(x, n, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SensitivitySpec {
    /// `S = I / v`.
    Logarithmic,
    /// `S = v^{−θ} I`, `0 < θ < 1`.
    SubLogarithmic { theta: f64 },
    /// `S = R(α) / v` with `R` the rotation by `α`.
    RotatedLogarithmic { alpha: f64 },
    /// `S = c I / v`, `c > 0`.
    ScaledLogarithmic { c: f64 },
}

impl SensitivitySpec {
    /// Builds a variant from its configuration name and scalar parameter.
    pub fn from_name(name: &str, param: f64) -> Result<Self> {
        let s = match name {
            "logarithmic" => Self::Logarithmic,
            "sub-logarithmic" => Self::SubLogarithmic { theta: param },
            "rotated-logarithmic" => Self::RotatedLogarithmic { alpha: param },
            "scaled-logarithmic" => Self::ScaledLogarithmic { c: param },
            other => return Err(Error::Config(format!("unknown sensitivity variant '{other}'"))),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Logarithmic => "logarithmic",
            Self::SubLogarithmic { .. } => "sub-logarithmic",
            Self::RotatedLogarithmic { .. } => "rotated-logarithmic",
            Self::ScaledLogarithmic { .. } => "scaled-logarithmic",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::SubLogarithmic { theta } if !(theta > 0.0 && theta < 1.0) => {
                Err(Error::Config(format!("sub-logarithmic exponent must lie in (0,1), got {theta}")))
            }
            Self::RotatedLogarithmic { alpha } if !alpha.is_finite() => {
                Err(Error::Config("rotation angle must be finite".into()))
            }
            Self::ScaledLogarithmic { c } if !(c > 0.0 && c.is_finite()) => {
                Err(Error::Config(format!("sensitivity scale must be positive, got {c}")))
            }
            _ => Ok(()),
        }
    }

    /// The nondecreasing bound `S₀` with `|S(x, n, v)| ≤ S₀(v)/v`.
    pub fn s0(&self, v: f64) -> f64 {
        match *self {
            Self::Logarithmic | Self::RotatedLogarithmic { .. } => 1.0,
            Self::SubLogarithmic { theta } => v.powf(1.0 - theta),
            Self::ScaledLogarithmic { c } => c,
        }
    }

    /// `v·S(v)`, the matrix acting on `∇z = −∇v/v`. Bounded by `S₀(v)`.
    pub fn scaled_matrix(&self, v: f64) -> Mat2 {
        match *self {
            Self::Logarithmic => [[1.0, 0.0], [0.0, 1.0]],
            Self::SubLogarithmic { theta } => {
                let s = v.powf(1.0 - theta);
                [[s, 0.0], [0.0, s]]
            }
            Self::RotatedLogarithmic { alpha } => {
                let (s, c) = alpha.sin_cos();
                [[c, -s], [s, c]]
            }
            Self::ScaledLogarithmic { c } => [[c, 0.0], [0.0, c]],
        }
    }
}

/// `S(n, v)` for `v > 0`.
pub fn eval_sensitivity(spec: &SensitivitySpec, n: f64, v: f64) -> Result<Mat2> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Domain(format!("sensitivity evaluated at v = {v:e}")));
    }
    if !(n >= 0.0) {
        return Err(Error::Domain(format!("sensitivity evaluated at n = {n:e}")));
    }
    let m = spec.scaled_matrix(v);
    Ok([[m[0][0] / v, m[0][1] / v], [m[1][0] / v, m[1][1] / v]])
}

/// Spectral norm of a 2×2 matrix.
pub fn operator_norm(m: &Mat2) -> f64 {
    let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
    0.5 * ((a + d).hypot(c - b) + (a - d).hypot(b + c))
}

/// Gravitational potential `Φ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    /// `Φ(x, y) = g·y`.
    Linear { g: f64 },
    /// Cell values loaded from a file.
    Field(ScalarField),
}

impl Potential {
    pub fn sample(&self, grid: &Grid) -> Result<ScalarField> {
        match self {
            Potential::Linear { g } => Ok(ScalarField::from_fn(*grid, |_, y| g * y)),
            Potential::Field(f) => {
                if f.grid() != grid {
                    return Err(Error::Config("potential grid does not match the run grid".into()));
                }
                Ok(f.clone())
            }
        }
    }

    /// Reads `ny` lines of `nx` whitespace-separated cell values, first line
    /// at `y = hy/2`. Lines starting with `#` are skipped.
    pub fn from_file(path: &Path, grid: &Grid) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut data = Vec::with_capacity(grid.cells());
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
            let row = row.map_err(|e| Error::Config(format!("potential file: {e}")))?;
            if row.len() != grid.nx() {
                return Err(Error::Config(format!(
                    "potential file row has {} values, expected {}",
                    row.len(),
                    grid.nx()
                )));
            }
            data.extend(row);
        }
        if data.len() != grid.cells() {
            return Err(Error::Config(format!(
                "potential file has {} rows, expected {}",
                data.len() / grid.nx(),
                grid.ny()
            )));
        }
        let f = ScalarField::from_vec(*grid, data)?;
        if !f.is_finite() {
            return Err(Error::Config("potential file contains non-finite values".into()));
        }
        Ok(Potential::Field(f))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub phi: ScalarField,
    /// Mollifier width ε.
    pub eps: f64,
    /// ρ_ε at cell centres.
    pub rho: ScalarField,
    pub sensitivity: SensitivitySpec,
    pub dt_safety: f64,
    pub v_floor: f64,
    /// Keep `(u·∇)u`; off gives the Stokes limit.
    pub fluid_advection: bool,
    /// Use this step instead of the adaptive rule (still capped by the
    /// positivity limit of the explicit cell-density update).
    pub fixed_dt: Option<f64>,
}

impl ModelParams {
    pub fn new(grid: &Grid, phi: &Potential, eps: f64, sensitivity: SensitivitySpec) -> Result<Self> {
        check_mollifier_eps(grid, eps)?;
        sensitivity.validate()?;
        Ok(Self {
            phi: phi.sample(grid)?,
            eps,
            rho: boundary_mollifier(grid, eps)?,
            sensitivity,
            dt_safety: 0.5,
            v_floor: 1e-14,
            fluid_advection: true,
            fixed_dt: None,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.phi.grid()
    }

    pub fn validate(&self) -> Result<()> {
        check_mollifier_eps(self.grid(), self.eps)?;
        self.sensitivity.validate()?;
        if !(self.dt_safety > 0.0 && self.dt_safety < 1.0) {
            return Err(Error::Config(format!("dt_safety must lie in (0,1), got {}", self.dt_safety)));
        }
        if !(self.v_floor > 0.0 && self.v_floor < 1e-6) {
            return Err(Error::Config(format!("v_floor must lie in (0,1e-6), got {}", self.v_floor)));
        }
        if let Some(dt) = self.fixed_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::Config(format!("fixed_dt must be positive, got {dt}")));
            }
        }
        if !self.phi.is_finite() {
            return Err(Error::Config("non-finite gravitational potential".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub n0: ScalarField,
    pub v0: ScalarField,
    pub w0: ScalarField,
    pub u0: MacField,
}

/// One failed admissibility condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub condition: String,
    pub extremum: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub const DIVERGENCE_TOL: f64 = 1e-10;

pub fn validate_initial_data(data: &InitialData) -> ValidationReport {
    let mut v = Vec::new();
    let mut fail = |c: &str, x: f64| {
        v.push(Violation {
            condition: c.to_string(),
            extremum: x,
        })
    };
    let g = data.n0.grid();
    if data.v0.grid() != g || data.w0.grid() != g || data.u0.grid() != g {
        fail("fields not on a common grid", f64::NAN);
        return ValidationReport { violations: v };
    }
    for (name, f) in [("n0", &data.n0), ("v0", &data.v0), ("w0", &data.w0)] {
        if !f.is_finite() {
            fail(&format!("{name} not finite"), f64::NAN);
        }
    }
    if !data.u0.is_finite() {
        fail("u0 not finite", f64::NAN);
    }
    let nmin = data.n0.min();
    if nmin < 0.0 {
        fail("n0 negative", nmin);
    }
    if data.n0.max() <= 0.0 {
        fail("n0 identically zero", data.n0.max());
    }
    let vmin = data.v0.min();
    if !(vmin > 0.0) {
        fail("v0 not strictly positive", vmin);
    }
    let wmin = data.w0.min();
    if !(wmin > 0.0) {
        fail("w0 not strictly positive", wmin);
    }
    let div = data.u0.divergence().sup_abs();
    if !(div <= DIVERGENCE_TOL) {
        fail("u0 not divergence free", div);
    }
    let wall = data.u0.wall_normal_max();
    if !(wall <= DIVERGENCE_TOL) {
        fail("u0 nonzero on the boundary", wall);
    }
    ValidationReport { violations: v }
}

/// Named initial-data presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Uniform,
    GaussianBump,
    Perturbed,
    Vortex,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Uniform, Preset::GaussianBump, Preset::Perturbed, Preset::Vortex];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "uniform" => Ok(Self::Uniform),
            "gaussian-bump" => Ok(Self::GaussianBump),
            "perturbed" => Ok(Self::Perturbed),
            "vortex" => Ok(Self::Vortex),
            other => Err(Error::Config(format!("unknown preset '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::GaussianBump => "gaussian-bump",
            Self::Perturbed => "perturbed",
            Self::Vortex => "vortex",
        }
    }
}

/// Rescales `f ≥ 0` to integrate to `mass`.
fn normalize_mass(f: ScalarField, mass: f64) -> Result<ScalarField> {
    let total = f.integral();
    if !(total > 0.0) {
        return Err(Error::Config("cannot normalize a vanishing density".into()));
    }
    let mut g = f.map(|x| x * (mass / total));
    // one correction pass absorbs the rounding of the product
    let r = mass / g.integral();
    g.scale(r);
    Ok(g)
}

/// [`make_scenario_seeded`] with seed 0.
pub fn make_scenario(kind: &str, grid: &Grid, mass: f64, k: f64) -> Result<InitialData> {
    make_scenario_seeded(Preset::parse(kind)?, grid, mass, k, 0)
}

pub fn make_scenario_seeded(preset: Preset, grid: &Grid, mass: f64, k: f64, seed: u64) -> Result<InitialData> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::Config(format!("mass must be positive, got {mass}")));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Config(format!("K must be positive, got {k}")));
    }
    let (lx, ly) = (grid.lx(), grid.ly());
    let nbar = mass / grid.area();
    let zero_u = MacField::zeros(*grid);
    let data = match preset {
        Preset::Uniform => InitialData {
            n0: normalize_mass(ScalarField::constant(*grid, nbar), mass)?,
            v0: ScalarField::constant(*grid, k),
            w0: ScalarField::constant(*grid, nbar),
            u0: zero_u,
        },
        Preset::GaussianBump => {
            let (cx, cy) = (0.35 * lx, 0.6 * ly);
            let s2 = (0.1 * lx.min(ly)).powi(2);
            let bump = ScalarField::from_fn(*grid, |x, y| {
                (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s2)).exp()
            });
            InitialData {
                n0: normalize_mass(bump, mass)?,
                v0: ScalarField::constant(*grid, k),
                w0: ScalarField::from_fn(*grid, |x, _| nbar * (1.5 + 0.5 * (PI * x / lx).cos())),
                u0: zero_u,
            }
        }
        Preset::Perturbed => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut wave = || {
                let (p, q) = (rng.gen_range(1..=3) as f64, rng.gen_range(1..=3) as f64);
                let (a, b) = (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI));
                move |x: f64, y: f64| (p * PI * x / lx + a).sin() * (q * PI * y / ly + b).sin()
            };
            let (fn_, fv, fw) = (wave(), wave(), wave());
            InitialData {
                n0: normalize_mass(ScalarField::from_fn(*grid, |x, y| nbar * (1.0 + 0.05 * fn_(x, y))), mass)?,
                v0: ScalarField::from_fn(*grid, |x, y| k * (1.0 - 0.025 * (1.0 + fv(x, y)))),
                w0: ScalarField::from_fn(*grid, |x, y| nbar * (1.0 + 0.05 * fw(x, y))),
                u0: zero_u,
            }
        }
        Preset::Vortex => {
            // vanishes with its normal derivative on the walls; peak speed about 0.05
            let amp = 0.05 * lx.min(ly) / PI;
            InitialData {
                n0: normalize_mass(ScalarField::constant(*grid, nbar), mass)?,
                v0: ScalarField::constant(*grid, k),
                w0: ScalarField::constant(*grid, nbar),
                u0: MacField::from_stream_function(*grid, |x, y| {
                    amp * (PI * x / lx).sin().powi(2) * (PI * y / ly).sin().powi(2)
                }),
            }
        }
    };
    Ok(data)
}
