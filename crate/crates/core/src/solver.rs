//! Time stepping for the regularised system.
//!
//! One step advances `v → w → n → u`, every substep advecting with the
//! velocity from the beginning of the step:
//!
//! * `v`: upwind advection, implicit diffusion, exact reaction factor;
//! * `w`: conservative upwind advection, implicit diffusion, exact affine
//!   reaction;
//! * `n`: explicit conservative finite volumes with upwinded chemotactic and
//!   advective fluxes, zero flux through the walls;
//! * `u`: explicit advection, implicit viscosity, buoyancy, projection.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{mollifier_value, Grid, MacField, ScalarField};
use crate::linsolve::{pcg, CgOptions, Preconditioner, SolveReport, Spectral, StencilOp};
use crate::model::{validate_initial_data, InitialData, ModelParams};
use crate::spectral::{AxisBc, DiagonalSolver};

/// Largest admissible `‖∇·u‖∞` after a step.
pub const DIVERGENCE_TOL: f64 = 1e-8;
/// Smallest admissible time step.
pub const DT_MIN: f64 = 1e-12;
const CFL_EPS: f64 = 1e-12;

/// Running extrema over a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extrema {
    pub max_sup_v: f64,
    pub min_n: f64,
    pub min_v: f64,
    pub min_w: f64,
    pub max_div: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub t: f64,
    pub n: ScalarField,
    pub v: ScalarField,
    pub w: ScalarField,
    pub u: MacField,
    pub p: ScalarField,
    /// ‖v₀‖∞, the reference level of `z = −ln(v/‖v₀‖∞)`.
    pub v0_sup: f64,
    pub steps: u64,
    pub clamps: u64,
    pub extrema: Extrema,
}

impl SystemState {
    /// State rebuilt from stored fields, as after loading a checkpoint.
    pub fn new_restored(
        t: f64,
        n: ScalarField,
        v: ScalarField,
        w: ScalarField,
        u: MacField,
        p: ScalarField,
        v0_sup: f64,
    ) -> Self {
        let mut s = Self {
            t,
            n,
            v,
            w,
            u,
            p,
            v0_sup,
            steps: 0,
            clamps: 0,
            extrema: Extrema {
                max_sup_v: 0.0,
                min_n: f64::INFINITY,
                min_v: f64::INFINITY,
                min_w: f64::INFINITY,
                max_div: 0.0,
            },
        };
        s.update_extrema();
        s
    }

    /// Initial state at `t = 0`. Fails on inadmissible data.
    pub fn new(data: &InitialData) -> Result<Self> {
        let report = validate_initial_data(data);
        if !report.passed() {
            let msg: Vec<String> = report
                .violations
                .iter()
                .map(|v| format!("{} ({:e})", v.condition, v.extremum))
                .collect();
            return Err(Error::Config(format!("inadmissible initial data: {}", msg.join("; "))));
        }
        let g = *data.n0.grid();
        let mut s = Self {
            t: 0.0,
            n: data.n0.clone(),
            v: data.v0.clone(),
            w: data.w0.clone(),
            u: data.u0.clone(),
            p: ScalarField::zeros(g),
            v0_sup: data.v0.max(),
            steps: 0,
            clamps: 0,
            extrema: Extrema {
                max_sup_v: 0.0,
                min_n: f64::INFINITY,
                min_v: f64::INFINITY,
                min_w: f64::INFINITY,
                max_div: 0.0,
            },
        };
        s.update_extrema();
        Ok(s)
    }

    pub fn grid(&self) -> &Grid {
        self.n.grid()
    }

    fn update_extrema(&mut self) {
        let e = &mut self.extrema;
        e.max_sup_v = e.max_sup_v.max(self.v.max());
        e.min_n = e.min_n.min(self.n.min());
        e.min_v = e.min_v.min(self.v.min());
        e.min_w = e.min_w.min(self.w.min());
        e.max_div = e.max_div.max(self.u.divergence().sup_abs());
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StepReport {
    pub dt: f64,
    /// Cells of `v` raised to the floor in this step.
    pub clamps: u64,
    /// Cells of `n` whose round-off negatives were zeroed.
    pub n_zeroed: u64,
    pub pressure_iterations: usize,
    pub pressure_residual: f64,
    pub diffusion_iterations: usize,
    /// `dt·‖u‖∞/h`.
    pub cfl_advective: f64,
    /// `dt·‖S_ε∇v‖∞/h`.
    pub cfl_chemotactic: f64,
    /// `dt·4/h²`.
    pub cfl_diffusive: f64,
    pub div_sup: f64,
}

/// Stepper with preplanned transforms for one grid and parameter set.
pub struct Solver {
    grid: Grid,
    params: ModelParams,
    scalar: DiagonalSolver,
    visc_x: DiagonalSolver,
    visc_y: DiagonalSolver,
    rho_x: Vec<f64>,
    rho_y: Vec<f64>,
    cg: CgOptions,
}

impl std::fmt::Debug for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Solver").field("grid", &self.grid).finish_non_exhaustive()
    }
}

/// Chemotactic plus advective face velocities.
struct FaceDrift {
    /// `u + ρ_ε S∇v` on the x-faces, `(nx+1) × ny`.
    ax: Vec<f64>,
    /// Same on the y-faces, `nx × (ny+1)`.
    ay: Vec<f64>,
    /// ‖ρ_ε S∇v‖∞ over all faces.
    chem_sup: f64,
}

impl Solver {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let g = *params.grid();
        let (nx, ny, hx, hy) = (g.nx(), g.ny(), g.hx(), g.hy());
        let mut rho_x = vec![0.0; (nx + 1) * ny];
        for j in 0..ny {
            for i in 0..=nx {
                rho_x[j * (nx + 1) + i] = mollifier_value(&g, params.eps, i as f64 * hx, g.yc(j));
            }
        }
        let mut rho_y = vec![0.0; nx * (ny + 1)];
        for j in 0..=ny {
            for i in 0..nx {
                rho_y[j * nx + i] = mollifier_value(&g, params.eps, g.xc(i), j as f64 * hy);
            }
        }
        Ok(Self {
            grid: g,
            params: params.clone(),
            scalar: DiagonalSolver::new(nx, ny, hx, hy, AxisBc::NeumannCell, AxisBc::NeumannCell),
            visc_x: DiagonalSolver::new(nx - 1, ny, hx, hy, AxisBc::DirichletNode, AxisBc::DirichletCell),
            visc_y: DiagonalSolver::new(nx, ny - 1, hx, hy, AxisBc::DirichletCell, AxisBc::DirichletNode),
            rho_x,
            rho_y,
            cg: CgOptions { rtol: 1e-12, max_iter: 200 },
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    fn face_drift(&self, state: &SystemState) -> FaceDrift {
        let g = self.grid;
        let (nx, ny, hx, hy) = (g.nx(), g.ny(), g.hx(), g.hy());
        let v = state.v.values();
        let lnv: Vec<f64> = v.iter().map(|v| v.ln()).collect();
        let spec = self.params.sensitivity;
        let at = |i: usize, j: usize| lnv[j * nx + i];
        // central derivatives of ln v with even ghosts
        let dy_c = |i: usize, j: usize| (at(i, (j + 1).min(ny - 1)) - at(i, j.saturating_sub(1))) / (2.0 * hy);
        let dx_c = |i: usize, j: usize| (at((i + 1).min(nx - 1), j) - at(i.saturating_sub(1), j)) / (2.0 * hx);
        let mut ax = vec![0.0; (nx + 1) * ny];
        let mut ay = vec![0.0; nx * (ny + 1)];
        exec::rows_mut(&mut ax, nx + 1, |j, row| {
            for i in 1..nx {
                let gx = (at(i, j) - at(i - 1, j)) / hx;
                let gy = 0.5 * (dy_c(i - 1, j) + dy_c(i, j));
                let m = spec.scaled_matrix((v[j * nx + i] * v[j * nx + i - 1]).sqrt());
                row[i] = self.rho_x[j * (nx + 1) + i] * (m[0][0] * gx + m[0][1] * gy);
            }
        });
        exec::rows_mut(&mut ay, nx, |j, row| {
            if j == 0 || j == ny {
                return;
            }
            for i in 0..nx {
                let gy = (at(i, j) - at(i, j - 1)) / hy;
                let gx = 0.5 * (dx_c(i, j - 1) + dx_c(i, j));
                let m = spec.scaled_matrix((v[j * nx + i] * v[(j - 1) * nx + i]).sqrt());
                row[i] = self.rho_y[j * nx + i] * (m[1][0] * gx + m[1][1] * gy);
            }
        });
        let chem_sup = ax.iter().chain(ay.iter()).fold(0.0f64, |m, a| m.max(a.abs()));
        ax.iter_mut().zip(&state.u.ux).for_each(|(a, u)| *a += u);
        ay.iter_mut().zip(&state.u.uy).for_each(|(a, u)| *a += u);
        FaceDrift { ax, ay, chem_sup }
    }

    /// Largest `dt` keeping the explicit `n` update a convex combination.
    fn positivity_limit(&self, d: &FaceDrift) -> f64 {
        let g = self.grid;
        let (nx, ny, hx, hy) = (g.nx(), g.ny(), g.hx(), g.hy());
        let diff = 2.0 / (hx * hx) + 2.0 / (hy * hy);
        let mut rate: f64 = diff;
        for j in 0..ny {
            for i in 0..nx {
                let out = (d.ax[j * (nx + 1) + i + 1].max(0.0) + (-d.ax[j * (nx + 1) + i]).max(0.0)) / hx
                    + (d.ay[(j + 1) * nx + i].max(0.0) + (-d.ay[j * nx + i]).max(0.0)) / hy;
                rate = rate.max(diff + out);
            }
        }
        1.0 / rate
    }

    /// Adaptive step `dt_safety·min(h²/4, h/(‖u‖∞ + ‖S_ε∇v‖∞ + ε), 1/r)`,
    /// with `r` the largest outflow rate of the explicit `n` update.
    pub fn stable_dt(&self, state: &SystemState) -> Result<f64> {
        let d = self.face_drift(state);
        Ok(self.stable_dt_with(state, &d))
    }

    fn stable_dt_with(&self, state: &SystemState, d: &FaceDrift) -> f64 {
        let h = self.grid.h_min();
        let speed = state.u.sup_abs() + d.chem_sup + CFL_EPS;
        let adaptive = self.params.dt_safety * (h * h / 4.0).min(h / speed).min(self.positivity_limit(d));
        match self.params.fixed_dt {
            Some(fixed) => fixed.min(self.positivity_limit(d)),
            None => adaptive,
        }
    }

    fn helmholtz(&self, solver: &DiagonalSolver, nx: usize, ny: usize, bc: (AxisBc, AxisBc), dt: f64, b: &[f64]) -> Result<(Vec<f64>, SolveReport)> {
        let op = StencilOp {
            nx,
            ny,
            hx: self.grid.hx(),
            hy: self.grid.hy(),
            bc_x: bc.0,
            bc_y: bc.1,
            alpha: 1.0,
            beta: dt,
        };
        let mut x = vec![0.0; b.len()];
        let pre = Spectral { solver, alpha: 1.0, beta: dt };
        pre.apply(b, &mut x);
        let rep = pcg(&op, &pre, b, &mut x, self.cg)?;
        Ok((x, rep))
    }

    fn diffuse_scalar(&self, f: &[f64], dt: f64) -> Result<(Vec<f64>, SolveReport)> {
        let g = self.grid;
        self.helmholtz(&self.scalar, g.nx(), g.ny(), (AxisBc::NeumannCell, AxisBc::NeumannCell), dt, f)
    }

    /// Non-conservative first-order upwind transport `f − dt·u·∇f` with
    /// cell-averaged velocities; a convex combination under the CFL limit.
    fn advect_upwind(&self, f: &ScalarField, u: &MacField, dt: f64) -> Vec<f64> {
        let g = self.grid;
        let (nx, ny, hx, hy) = (g.nx(), g.ny(), g.hx(), g.hy());
        let src = f.values();
        let mut out = src.to_vec();
        if u.sup_abs() == 0.0 {
            return out;
        }
        exec::rows_mut(&mut out, nx, |j, row| {
            for i in 0..nx {
                let c = src[j * nx + i];
                let ucx = 0.5 * (u.ux_at(i, j) + u.ux_at(i + 1, j));
                let ucy = 0.5 * (u.uy_at(i, j) + u.uy_at(i, j + 1));
                let dx = if ucx > 0.0 {
                    if i > 0 { c - src[j * nx + i - 1] } else { 0.0 }
                } else if i + 1 < nx {
                    src[j * nx + i + 1] - c
                } else {
                    0.0
                };
                let dy = if ucy > 0.0 {
                    if j > 0 { c - src[(j - 1) * nx + i] } else { 0.0 }
                } else if j + 1 < ny {
                    src[(j + 1) * nx + i] - c
                } else {
                    0.0
                };
                row[i] = c - dt * (ucx * dx / hx + ucy * dy / hy);
            }
        });
        out
    }

    /// Conservative upwind transport `f − dt·∇·(f u)`.
    fn advect_conservative(&self, f: &ScalarField, ax: &[f64], ay: &[f64], dt: f64) -> Vec<f64> {
        let g = self.grid;
        let (nx, ny, hx, hy) = (g.nx(), g.ny(), g.hx(), g.hy());
        let src = f.values();
        let fx = upwind_flux_x(src, ax, nx, ny);
        let fy = upwind_flux_y(src, ay, nx, ny);
        let mut out = src.to_vec();
        if ax.iter().chain(ay).all(|a| *a == 0.0) {
            return out;
        }
        exec::rows_mut(&mut out, nx, |j, row| {
            for (i, o) in row.iter_mut().enumerate() {
                *o -= dt * ((fx[j * (nx + 1) + i + 1] - fx[j * (nx + 1) + i]) / hx + (fy[(j + 1) * nx + i] - fy[j * nx + i]) / hy);
            }
        });
        out
    }

    /// Nutrient substep; also returns the number of floor clamps.
    pub fn advance_v(&self, state: &SystemState, dt: f64) -> Result<(ScalarField, u64, usize)> {
        let g = self.grid;
        let adv = self.advect_upwind(&state.v, &state.u, dt);
        let (mut v, rep) = self.diffuse_scalar(&adv, dt)?;
        let decay = 1.0 - (-dt).exp();
        let floor = self.params.v_floor;
        let mut clamps = 0u64;
        for ((v, &w), &n) in v.iter_mut().zip(state.w.values()).zip(state.n.values()) {
            // exact ∫w over the step with n frozen
            let integral = n * dt + (w - n) * decay;
            *v *= (-integral).exp();
            if !(*v >= floor) {
                if !v.is_finite() {
                    return Err(Error::Positivity { field: "v", min: *v });
                }
                log::warn!("v clamped to floor from {:e}", *v);
                *v = floor;
                clamps += 1;
            }
        }
        Ok((ScalarField::from_vec(g, v)?, clamps, rep.iterations))
    }

    /// Signal substep.
    pub fn advance_w(&self, state: &SystemState, dt: f64) -> Result<(ScalarField, usize)> {
        let g = self.grid;
        let adv = self.advect_conservative(&state.w, &state.u.ux, &state.u.uy, dt);
        let (mut w, rep) = self.diffuse_scalar(&adv, dt)?;
        let (keep, gain) = ((-dt).exp(), 1.0 - (-dt).exp());
        w.iter_mut().zip(state.n.values()).for_each(|(w, n)| *w = *w * keep + n * gain);
        let min = w.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(Error::Positivity { field: "w", min });
        }
        Ok((ScalarField::from_vec(g, w)?, rep.iterations))
    }

    /// Cell-density substep using the nutrient `v` (the freshest available).
    pub fn advance_n(&self, state: &SystemState, dt: f64) -> Result<(ScalarField, u64)> {
        let d = self.face_drift(state);
        self.advance_n_with(state, &d, dt)
    }

    fn advance_n_with(&self, state: &SystemState, d: &FaceDrift, dt: f64) -> Result<(ScalarField, u64)> {
        let g = self.grid;
        let (nx, ny, hx, hy) = (g.nx(), g.ny(), g.hx(), g.hy());
        let src = state.n.values();
        let mut fx = upwind_flux_x(src, &d.ax, nx, ny);
        let mut fy = upwind_flux_y(src, &d.ay, nx, ny);
        exec::rows_mut(&mut fx, nx + 1, |j, row| {
            for i in 1..nx {
                row[i] -= (src[j * nx + i] - src[j * nx + i - 1]) / hx;
            }
        });
        exec::rows_mut(&mut fy, nx, |j, row| {
            if j == 0 || j == ny {
                return;
            }
            for (i, f) in row.iter_mut().enumerate() {
                *f -= (src[j * nx + i] - src[(j - 1) * nx + i]) / hy;
            }
        });
        let mut out = src.to_vec();
        exec::rows_mut(&mut out, nx, |j, row| {
            for (i, o) in row.iter_mut().enumerate() {
                *o -= dt * ((fx[j * (nx + 1) + i + 1] - fx[j * (nx + 1) + i]) / hx + (fy[(j + 1) * nx + i] - fy[j * nx + i]) / hy);
            }
        });
        let sup = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut zeroed = 0;
        for v in out.iter_mut() {
            if *v < 0.0 {
                if *v < -1e-14 * sup {
                    return Err(Error::Positivity { field: "n", min: *v });
                }
                *v = 0.0;
                zeroed += 1;
            }
        }
        Ok((ScalarField::from_vec(g, out)?, zeroed))
    }

    /// Fluid substep: returns the projected velocity, the pressure and the
    /// pressure-solve report.
    pub fn advance_u(&self, state: &SystemState, dt: f64) -> Result<(MacField, ScalarField, SolveReport)> {
        let g = self.grid;
        let (nx, ny, hx, hy) = (g.nx(), g.ny(), g.hx(), g.hy());
        let u = &state.u;
        let mut ux = u.ux.clone();
        let mut uy = u.uy.clone();
        if self.params.fluid_advection && u.sup_abs() > 0.0 {
            let (cx, cy) = convection(u);
            ux.iter_mut().zip(&cx).for_each(|(a, c)| *a -= dt * c);
            uy.iter_mut().zip(&cy).for_each(|(a, c)| *a -= dt * c);
        }
        // implicit viscosity on the interior faces
        let mut bx = Vec::with_capacity((nx - 1) * ny);
        for j in 0..ny {
            bx.extend_from_slice(&ux[j * (nx + 1) + 1..j * (nx + 1) + nx]);
        }
        let by = uy[nx..nx * ny].to_vec();
        let (sx, _) = self.helmholtz(&self.visc_x, nx - 1, ny, (AxisBc::DirichletNode, AxisBc::DirichletCell), dt, &bx)?;
        let (sy, _) = self.helmholtz(&self.visc_y, nx, ny - 1, (AxisBc::DirichletCell, AxisBc::DirichletNode), dt, &by)?;
        for j in 0..ny {
            ux[j * (nx + 1) + 1..j * (nx + 1) + nx].copy_from_slice(&sx[j * (nx - 1)..(j + 1) * (nx - 1)]);
        }
        uy[nx..nx * ny].copy_from_slice(&sy);
        // buoyancy n∇Φ on the faces
        let (n, phi) = (state.n.values(), self.params.phi.values());
        for j in 0..ny {
            for i in 1..nx {
                let (a, b) = (j * nx + i - 1, j * nx + i);
                ux[j * (nx + 1) + i] += dt * 0.5 * (n[a] + n[b]) * (phi[b] - phi[a]) / hx;
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                let (a, b) = ((j - 1) * nx + i, j * nx + i);
                uy[j * nx + i] += dt * 0.5 * (n[a] + n[b]) * (phi[b] - phi[a]) / hy;
            }
        }
        let star = MacField::from_parts(g, ux, uy)?;
        let (u_new, p, rep) = self.project(star, dt)?;
        Ok((u_new, p, rep))
    }

    /// Removes the gradient part: solves `Δp = ∇·u*/dt` with Neumann walls
    /// and returns `u* − dt∇p` and the mean-zero `p`.
    pub fn project(&self, mut star: MacField, dt: f64) -> Result<(MacField, ScalarField, SolveReport)> {
        let g = self.grid;
        let (nx, ny, hx, hy) = (g.nx(), g.ny(), g.hx(), g.hy());
        let mut rhs = star.divergence();
        rhs.scale(1.0 / dt);
        if rhs.sup_abs() == 0.0 {
            return Ok((star, ScalarField::zeros(g), SolveReport::default()));
        }
        let (p, rep) = crate::linsolve::poisson_solve_with(&self.scalar, &rhs, self.cg)?;
        let pv = p.values();
        for j in 0..ny {
            for i in 1..nx {
                star.ux[j * (nx + 1) + i] -= dt * (pv[j * nx + i] - pv[j * nx + i - 1]) / hx;
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                star.uy[j * nx + i] -= dt * (pv[j * nx + i] - pv[(j - 1) * nx + i]) / hy;
            }
        }
        Ok((star, p, rep))
    }

    /// One step with the adaptive time step.
    pub fn step(&self, state: &SystemState) -> Result<(SystemState, StepReport)> {
        let dt = self.stable_dt(state)?;
        self.step_with_dt(state, dt)
    }

    /// One step of length at most `dt_max` (used to land on sample times).
    pub fn step_capped(&self, state: &SystemState, dt_max: f64) -> Result<(SystemState, StepReport)> {
        let dt = self.stable_dt(state)?.min(dt_max);
        self.step_with_dt(state, dt)
    }

    pub fn step_with_dt(&self, state: &SystemState, dt: f64) -> Result<(SystemState, StepReport)> {
        if !(dt >= DT_MIN) {
            return Err(Error::Stiffness { dt });
        }
        let h = self.grid.h_min();
        let mut report = StepReport {
            dt,
            cfl_advective: dt * state.u.sup_abs() / h,
            cfl_diffusive: dt * 4.0 / (h * h),
            ..Default::default()
        };

        let (v, clamps, it_v) = self.advance_v(state, dt)?;
        let (w, it_w) = self.advance_w(state, dt)?;
        let mid = SystemState { v, ..state.clone() };
        let drift = self.face_drift(&mid);
        report.cfl_chemotactic = dt * drift.chem_sup / h;
        let (n, zeroed) = self.advance_n_with(&mid, &drift, dt)?;
        let (u, p, prep) = self.advance_u(state, dt)?;

        let div_sup = u.divergence().sup_abs();
        if !(div_sup <= DIVERGENCE_TOL) {
            return Err(Error::Invariant(format!("‖∇·u‖∞ = {div_sup:e} after projection")));
        }
        if !u.is_finite() {
            return Err(Error::Invariant("non-finite velocity".into()));
        }
        report.clamps = clamps;
        report.n_zeroed = zeroed;
        report.pressure_iterations = prep.iterations;
        report.pressure_residual = prep.residual;
        report.diffusion_iterations = it_v + it_w;
        report.div_sup = div_sup;

        let mut next = SystemState {
            t: state.t + dt,
            n,
            v: mid.v,
            w,
            u,
            p,
            v0_sup: state.v0_sup,
            steps: state.steps + 1,
            clamps: state.clamps + clamps,
            extrema: state.extrema,
        };
        next.update_extrema();
        Ok((next, report))
    }
}

/// Free-function form of [`Solver::step`]; plans the transforms on every
/// call, so loops should hold a [`Solver`] instead.
pub fn step(state: &SystemState, params: &ModelParams) -> Result<(SystemState, StepReport)> {
    Solver::new(params)?.step(state)
}

fn upwind_flux_x(f: &[f64], a: &[f64], nx: usize, ny: usize) -> Vec<f64> {
    let mut out = vec![0.0; (nx + 1) * ny];
    exec::rows_mut(&mut out, nx + 1, |j, row| {
        for i in 1..nx {
            let s = a[j * (nx + 1) + i];
            row[i] = s * if s > 0.0 { f[j * nx + i - 1] } else { f[j * nx + i] };
        }
    });
    out
}

fn upwind_flux_y(f: &[f64], a: &[f64], nx: usize, ny: usize) -> Vec<f64> {
    let mut out = vec![0.0; nx * (ny + 1)];
    exec::rows_mut(&mut out, nx, |j, row| {
        if j == 0 || j == ny {
            return;
        }
        for (i, o) in row.iter_mut().enumerate() {
            let s = a[j * nx + i];
            *o = s * if s > 0.0 { f[(j - 1) * nx + i] } else { f[j * nx + i] };
        }
    });
    out
}

/// Central `(u·∇)u` on the interior faces of a MAC field. Wall-tangential
/// neighbours use the odd (no-slip) ghost values.
pub fn convection(u: &MacField) -> (Vec<f64>, Vec<f64>) {
    let g = *u.grid();
    let (nx, ny, hx, hy) = (g.nx(), g.ny(), g.hx(), g.hy());
    let mut cx = vec![0.0; (nx + 1) * ny];
    let mut cy = vec![0.0; nx * (ny + 1)];
    exec::rows_mut(&mut cx, nx + 1, |j, row| {
        for i in 1..nx {
            let c = u.ux_at(i, j);
            let dudx = (u.ux_at(i + 1, j) - u.ux_at(i - 1, j)) / (2.0 * hx);
            let up = if j + 1 < ny { u.ux_at(i, j + 1) } else { -c };
            let dn = if j > 0 { u.ux_at(i, j - 1) } else { -c };
            let dudy = (up - dn) / (2.0 * hy);
            let vbar = 0.25 * (u.uy_at(i - 1, j) + u.uy_at(i, j) + u.uy_at(i - 1, j + 1) + u.uy_at(i, j + 1));
            row[i] = c * dudx + vbar * dudy;
        }
    });
    exec::rows_mut(&mut cy, nx, |j, row| {
        if j == 0 || j == ny {
            return;
        }
        for (i, o) in row.iter_mut().enumerate() {
            let c = u.uy_at(i, j);
            let dvdy = (u.uy_at(i, j + 1) - u.uy_at(i, j - 1)) / (2.0 * hy);
            let e = if i + 1 < nx { u.uy_at(i + 1, j) } else { -c };
            let w = if i > 0 { u.uy_at(i - 1, j) } else { -c };
            let dvdx = (e - w) / (2.0 * hx);
            let ubar = 0.25 * (u.ux_at(i, j - 1) + u.ux_at(i + 1, j - 1) + u.ux_at(i, j) + u.ux_at(i + 1, j));
            *o = ubar * dvdx + c * dvdy;
        }
    });
    (cx, cy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_scenario, make_scenario_seeded, Potential, Preset, SensitivitySpec};
    use approx::assert_relative_eq;

    fn params(g: &Grid, gravity: f64) -> ModelParams {
        ModelParams::new(g, &Potential::Linear { g: gravity }, 0.1 * g.lx().min(g.ly()), SensitivitySpec::Logarithmic).unwrap()
    }

    fn flat(g: Grid, n: f64, v: f64, w: f64) -> SystemState {
        SystemState::new(&InitialData {
            n0: ScalarField::constant(g, n),
            v0: ScalarField::constant(g, v),
            w0: ScalarField::constant(g, w),
            u0: MacField::zeros(g),
        })
        .unwrap()
    }

    #[test]
    fn homogeneous_n_is_fixed() {
        let g = Grid::unit_square(12).unwrap();
        let s = Solver::new(&params(&g, 1.0)).unwrap();
        let st = flat(g, 0.3, 0.7, 0.2);
        let (n, z) = s.advance_n(&st, 1e-3).unwrap();
        assert_eq!(z, 0);
        assert!(n.sup_dev(0.3) < 1e-15);
    }

    #[test]
    fn v_reaction_example() {
        let g = Grid::unit_square(8).unwrap();
        let s = Solver::new(&params(&g, 0.0)).unwrap();
        // n ≡ w keeps w frozen over the step, so the factor is e^{−w·dt}
        let st = flat(g, 2.0, 1.0, 2.0);
        let (v, clamps, _) = s.advance_v(&st, 0.5).unwrap();
        assert_eq!(clamps, 0);
        assert!(v.sup_dev((-1.0f64).exp()) < 1e-15);
    }

    #[test]
    fn w_equilibrium_and_closed_form() {
        let g = Grid::unit_square(8).unwrap();
        let s = Solver::new(&params(&g, 0.0)).unwrap();
        let st = flat(g, 1.0, 1.0, 1.0);
        let (w, _) = s.advance_w(&st, 0.37).unwrap();
        assert!(w.sup_dev(1.0) < 1e-15);
        let mut st = flat(g, 0.1, 1.0, 0.5);
        let dt = 0.01;
        for _ in 0..100 {
            st.w = s.advance_w(&st, dt).unwrap().0;
        }
        assert!(st.w.sup_dev(0.1 + 0.4 * (-1.0f64).exp()) < 1e-13);
    }

    #[test]
    fn step_on_homogeneous_state() {
        let g = Grid::unit_square(16).unwrap();
        let s = Solver::new(&params(&g, 1.0)).unwrap();
        let st = flat(g, 0.1, 0.8, 0.1);
        let (next, rep) = s.step(&st).unwrap();
        assert!(next.n.sup_dev(0.1) < 1e-15);
        assert!(next.w.sup_dev(0.1) < 1e-15);
        assert!(next.u.sup_abs() < 1e-10);
        assert!(next.v.sup_dev(0.8 * (-0.1 * rep.dt).exp()) < 1e-15);
        assert_eq!(rep.clamps, 0);
    }

    #[test]
    fn constant_force_projects_to_rest() {
        let g = Grid::new(20, 16, 1.0, 0.8).unwrap();
        let s = Solver::new(&params(&g, 3.0)).unwrap();
        let st = flat(g, 0.5, 1.0, 0.5);
        let (u, p, _) = s.advance_u(&st, 1e-3).unwrap();
        assert!(u.sup_abs() <= 1e-10, "{}", u.sup_abs());
        assert!(p.mean().abs() < 1e-12);
        // p absorbs the force: ∂p/∂y = n·g
        assert_relative_eq!((p.get(5, 9) - p.get(5, 8)) / g.hy(), 1.5, max_relative = 1e-8);
    }

    #[test]
    fn rest_state_stays_at_rest() {
        let g = Grid::unit_square(8).unwrap();
        let s = Solver::new(&params(&g, 1.0)).unwrap();
        let st = flat(g, 1e-300, 1.0, 1.0);
        let mut st = st;
        st.n = ScalarField::zeros(g);
        let (u, p, _) = s.advance_u(&st, 1e-3).unwrap();
        assert_eq!(u.sup_abs(), 0.0);
        assert_eq!(p.sup_abs(), 0.0);
    }

    #[test]
    fn mass_positivity_and_max_principle_on_bump() {
        let g = Grid::new(24, 24, 2.0, 2.0).unwrap();
        let s = Solver::new(&params(&g, 1.0)).unwrap();
        let data = make_scenario("gaussian-bump", &g, 1.0, 1.0).unwrap();
        let mut st = SystemState::new(&data).unwrap();
        let m0 = st.n.integral();
        let mut sup = st.v.max();
        for _ in 0..300 {
            let (next, rep) = s.step(&st).unwrap();
            assert_eq!(rep.clamps, 0);
            assert!(rep.div_sup <= DIVERGENCE_TOL);
            assert!(next.v.max() <= sup + 1e-14);
            sup = next.v.max();
            assert!(next.n.min() >= 0.0 && next.w.min() > 0.0);
            st = next;
        }
        assert!((st.n.integral() - m0).abs() <= 1e-12 * m0);
        assert!(st.u.sup_abs() > 0.0);
    }

    #[test]
    fn w_mean_identity_each_step() {
        let g = Grid::new(20, 20, 1.0, 1.0).unwrap();
        let s = Solver::new(&params(&g, 2.0)).unwrap();
        let data = make_scenario_seeded(Preset::Vortex, &g, 0.5, 1.0, 0).unwrap();
        let mut st = SystemState::new(&data).unwrap();
        st.w = ScalarField::from_fn(g, |x, y| 0.3 + 0.1 * (3.0 * x).sin() * y);
        st.n = ScalarField::from_fn(g, |x, y| 0.5 + 0.2 * (x * y * 5.0).cos());
        for _ in 0..5 {
            let dt = s.stable_dt(&st).unwrap();
            let (w, _) = s.advance_w(&st, dt).unwrap();
            let expect = st.w.mean() * (-dt).exp() + st.n.mean() * (1.0 - (-dt).exp());
            assert!((w.mean() - expect).abs() <= 1e-13, "{}", w.mean() - expect);
            st = s.step_with_dt(&st, dt).unwrap().0;
        }
    }

    #[test]
    fn underflowing_dt_is_stiffness() {
        let g = Grid::unit_square(8).unwrap();
        let s = Solver::new(&params(&g, 1.0)).unwrap();
        let st = flat(g, 0.1, 1.0, 0.1);
        assert!(matches!(s.step_with_dt(&st, 1e-13), Err(Error::Stiffness { .. })));
    }

    #[test]
    fn stable_dt_formula_without_flow() {
        let g = Grid::unit_square(16).unwrap();
        let s = Solver::new(&params(&g, 1.0)).unwrap();
        let st = flat(g, 0.1, 1.0, 0.1);
        let h = 1.0 / 16.0;
        assert_relative_eq!(s.stable_dt(&st).unwrap(), 0.5 * h * h / 4.0, max_relative = 1e-14);
    }

    #[test]
    fn convection_vanishes_for_rest_and_is_finite_for_vortex() {
        let g = Grid::unit_square(12).unwrap();
        let (cx, cy) = convection(&MacField::zeros(g));
        assert!(cx.iter().chain(cy.iter()).all(|c| *c == 0.0));
        let u = make_scenario("vortex", &g, 0.1, 1.0).unwrap().u0;
        let (cx, cy) = convection(&u);
        assert!(cx.iter().chain(cy.iter()).all(|c| c.is_finite()));
    }

    #[test]
    fn parallel_and_sequential_steps_agree() {
        let g = Grid::new(200, 180, 1.0, 0.9).unwrap();
        let s = Solver::new(&params(&g, 1.0)).unwrap();
        let st = SystemState::new(&make_scenario("gaussian-bump", &g, 1.0, 1.0).unwrap()).unwrap();
        exec::set_parallel(false);
        let (a, _) = s.step(&st).unwrap();
        exec::set_parallel(true);
        let (b, _) = s.step(&st).unwrap();
        assert_eq!(a, b);
    }
}
