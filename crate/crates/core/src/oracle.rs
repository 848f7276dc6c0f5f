//! Reference implementations used for cross-validation.
//!
//! The explicit stepper below integrates the same semi-discrete system as
//! [`crate::solver`] with forward Euler and no operator splitting. It is
//! written from scratch on plain index loops, with its own stencils and its
//! own unpreconditioned conjugate-gradient pressure solve, so agreement with
//! the production solver is evidence rather than a tautology.

use crate::error::{Error, Result};
use crate::grid::{mollifier_value, Grid, MacField, ScalarField};
use crate::model::ModelParams;
use crate::solver::SystemState;

/// Spatially flat solution of the reaction system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousSolution {
    pub n_bar: f64,
    pub w0: f64,
    pub v0: f64,
}

impl HomogeneousSolution {
    pub fn w(&self, t: f64) -> f64 {
        self.n_bar + (self.w0 - self.n_bar) * (-t).exp()
    }

    pub fn v(&self, t: f64) -> f64 {
        self.v0 * (-self.n_bar * t - (self.w0 - self.n_bar) * (-(-t).exp_m1())).exp()
    }
}

/// `(w(t), v(t))` of the flat reduction with `n ≡ n̄`.
pub fn homogeneous_closed_form(n_bar: f64, w0: f64, v0: f64, t: f64) -> Result<(f64, f64)> {
    if !(n_bar >= 0.0 && w0 > 0.0 && v0 > 0.0 && t >= 0.0) {
        return Err(Error::Oracle(format!(
            "closed form needs n̄ ≥ 0, w₀ > 0, v₀ > 0, t ≥ 0 (got {n_bar}, {w0}, {v0}, {t})"
        )));
    }
    let s = HomogeneousSolution { n_bar, w0, v0 };
    Ok((s.w(t), s.v(t)))
}

/// `e^{−(π/Lx)² t} cos(πx/Lx)`, an exact Neumann heat solution.
pub fn manufactured_heat_solution(grid: &Grid, t: f64) -> ScalarField {
    let k = std::f64::consts::PI / grid.lx();
    let decay = (-k * k * t).exp();
    ScalarField::from_fn(*grid, |x, _| decay * (k * x).cos())
}

/// Explicit stability limit `h²/8` of the reference stepper.
pub fn explicit_dt_limit(grid: &Grid) -> f64 {
    grid.h_min().powi(2) / 8.0
}

struct Layout {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
}

impl Layout {
    fn c(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
    fn fx(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }
    fn fy(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
    /// Cell value with mirrored ghosts.
    fn mirror(&self, f: &[f64], i: isize, j: isize) -> f64 {
        let i = i.clamp(0, self.nx as isize - 1) as usize;
        let j = j.clamp(0, self.ny as isize - 1) as usize;
        f[self.c(i, j)]
    }
    fn lap(&self, f: &[f64], i: usize, j: usize) -> f64 {
        let (ii, jj) = (i as isize, j as isize);
        let c = f[self.c(i, j)];
        (self.mirror(f, ii - 1, jj) - 2.0 * c + self.mirror(f, ii + 1, jj)) / (self.hx * self.hx)
            + (self.mirror(f, ii, jj - 1) - 2.0 * c + self.mirror(f, ii, jj + 1)) / (self.hy * self.hy)
    }
}

/// One forward-Euler step of the full coupled system, projected at the end.
pub fn explicit_reference_step(state: &SystemState, params: &ModelParams, dt: f64) -> Result<SystemState> {
    let grid = *state.grid();
    if !(dt > 0.0 && dt <= explicit_dt_limit(&grid) * (1.0 + 1e-12)) {
        return Err(Error::Oracle(format!(
            "dt = {dt:e} violates the explicit limit h²/8 = {:e}",
            explicit_dt_limit(&grid)
        )));
    }
    let l = Layout {
        nx: grid.nx(),
        ny: grid.ny(),
        hx: grid.hx(),
        hy: grid.hy(),
    };
    let (nx, ny, hx, hy) = (l.nx, l.ny, l.hx, l.hy);
    let n = state.n.values();
    let v = state.v.values();
    let w = state.w.values();
    let ux = &state.u.ux;
    let uy = &state.u.uy;

    // v: advective form with cell-averaged velocity and upwind differences
    let mut v_new = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let (ii, jj) = (i as isize, j as isize);
            let c = v[l.c(i, j)];
            let a = 0.5 * (ux[l.fx(i, j)] + ux[l.fx(i + 1, j)]);
            let b = 0.5 * (uy[l.fy(i, j)] + uy[l.fy(i, j + 1)]);
            let dvx = if a > 0.0 { c - l.mirror(v, ii - 1, jj) } else { l.mirror(v, ii + 1, jj) - c } / hx;
            let dvy = if b > 0.0 { c - l.mirror(v, ii, jj - 1) } else { l.mirror(v, ii, jj + 1) - c } / hy;
            let rhs = -(a * dvx + b * dvy) + l.lap(v, i, j) - c * w[l.c(i, j)];
            v_new[l.c(i, j)] = c + dt * rhs;
        }
    }

    // w: flux form with upwind face values
    let up = |f: &[f64], s: f64, lo: usize, hi: usize| s * if s > 0.0 { f[lo] } else { f[hi] };
    let mut w_new = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let east = if i + 1 < nx { up(w, ux[l.fx(i + 1, j)], l.c(i, j), l.c(i + 1, j)) } else { 0.0 };
            let west = if i > 0 { up(w, ux[l.fx(i, j)], l.c(i - 1, j), l.c(i, j)) } else { 0.0 };
            let north = if j + 1 < ny { up(w, uy[l.fy(i, j + 1)], l.c(i, j), l.c(i, j + 1)) } else { 0.0 };
            let south = if j > 0 { up(w, uy[l.fy(i, j)], l.c(i, j - 1), l.c(i, j)) } else { 0.0 };
            let div = (east - west) / hx + (north - south) / hy;
            let c = w[l.c(i, j)];
            w_new[l.c(i, j)] = c + dt * (-div + l.lap(w, i, j) - c + n[l.c(i, j)]);
        }
    }

    // n: face fluxes −∇n + n_up·(u + ρ_ε v S ∇ln v)
    let lv: Vec<f64> = v.iter().map(|x| x.ln()).collect();
    let spec = params.sensitivity;
    let dlv_dy = |i: usize, j: usize| {
        (l.mirror(&lv, i as isize, j as isize + 1) - l.mirror(&lv, i as isize, j as isize - 1)) / (2.0 * hy)
    };
    let dlv_dx = |i: usize, j: usize| {
        (l.mirror(&lv, i as isize + 1, j as isize) - l.mirror(&lv, i as isize - 1, j as isize)) / (2.0 * hx)
    };
    let mut flux_x = vec![0.0; (nx + 1) * ny];
    for j in 0..ny {
        for i in 1..nx {
            let (a, b) = (l.c(i - 1, j), l.c(i, j));
            let m = spec.scaled_matrix((0.5 * (lv[a] + lv[b])).exp());
            let rho = mollifier_value(&grid, params.eps, i as f64 * hx, grid.yc(j));
            let gn = (lv[b] - lv[a]) / hx;
            let gt = 0.5 * (dlv_dy(i - 1, j) + dlv_dy(i, j));
            let speed = ux[l.fx(i, j)] + rho * (m[0][0] * gn + m[0][1] * gt);
            flux_x[l.fx(i, j)] = -(n[b] - n[a]) / hx + up(n, speed, a, b);
        }
    }
    let mut flux_y = vec![0.0; nx * (ny + 1)];
    for j in 1..ny {
        for i in 0..nx {
            let (a, b) = (l.c(i, j - 1), l.c(i, j));
            let m = spec.scaled_matrix((0.5 * (lv[a] + lv[b])).exp());
            let rho = mollifier_value(&grid, params.eps, grid.xc(i), j as f64 * hy);
            let gn = (lv[b] - lv[a]) / hy;
            let gt = 0.5 * (dlv_dx(i, j - 1) + dlv_dx(i, j));
            let speed = uy[l.fy(i, j)] + rho * (m[1][0] * gt + m[1][1] * gn);
            flux_y[l.fy(i, j)] = -(n[b] - n[a]) / hy + up(n, speed, a, b);
        }
    }
    let mut n_new = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let div = (flux_x[l.fx(i + 1, j)] - flux_x[l.fx(i, j)]) / hx + (flux_y[l.fy(i, j + 1)] - flux_y[l.fy(i, j)]) / hy;
            n_new[l.c(i, j)] = n[l.c(i, j)] - dt * div;
        }
    }

    // u: forward Euler on the interior faces, then projection
    let phi = params.phi.values();
    let ux_g = |i: usize, j: isize| -> f64 {
        if j < 0 {
            -ux[l.fx(i, 0)]
        } else if j >= ny as isize {
            -ux[l.fx(i, ny - 1)]
        } else {
            ux[l.fx(i, j as usize)]
        }
    };
    let uy_g = |i: isize, j: usize| -> f64 {
        if i < 0 {
            -uy[l.fy(0, j)]
        } else if i >= nx as isize {
            -uy[l.fy(nx - 1, j)]
        } else {
            uy[l.fy(i as usize, j)]
        }
    };
    let mut ux_new = vec![0.0; (nx + 1) * ny];
    for j in 0..ny {
        for i in 1..nx {
            let jj = j as isize;
            let c = ux[l.fx(i, j)];
            let lap = (ux[l.fx(i - 1, j)] - 2.0 * c + ux[l.fx(i + 1, j)]) / (hx * hx)
                + (ux_g(i, jj - 1) - 2.0 * c + ux_g(i, jj + 1)) / (hy * hy);
            let mut rhs = lap + 0.5 * (n[l.c(i - 1, j)] + n[l.c(i, j)]) * (phi[l.c(i, j)] - phi[l.c(i - 1, j)]) / hx;
            if params.fluid_advection {
                let vbar = 0.25 * (uy[l.fy(i - 1, j)] + uy[l.fy(i, j)] + uy[l.fy(i - 1, j + 1)] + uy[l.fy(i, j + 1)]);
                rhs -= c * (ux[l.fx(i + 1, j)] - ux[l.fx(i - 1, j)]) / (2.0 * hx)
                    + vbar * (ux_g(i, jj + 1) - ux_g(i, jj - 1)) / (2.0 * hy);
            }
            ux_new[l.fx(i, j)] = c + dt * rhs;
        }
    }
    let mut uy_new = vec![0.0; nx * (ny + 1)];
    for j in 1..ny {
        for i in 0..nx {
            let ii = i as isize;
            let c = uy[l.fy(i, j)];
            let lap = (uy_g(ii - 1, j) - 2.0 * c + uy_g(ii + 1, j)) / (hx * hx)
                + (uy[l.fy(i, j - 1)] - 2.0 * c + uy[l.fy(i, j + 1)]) / (hy * hy);
            let mut rhs = lap + 0.5 * (n[l.c(i, j - 1)] + n[l.c(i, j)]) * (phi[l.c(i, j)] - phi[l.c(i, j - 1)]) / hy;
            if params.fluid_advection {
                let ubar = 0.25 * (ux[l.fx(i, j - 1)] + ux[l.fx(i + 1, j - 1)] + ux[l.fx(i, j)] + ux[l.fx(i + 1, j)]);
                rhs -= ubar * (uy_g(ii + 1, j) - uy_g(ii - 1, j)) / (2.0 * hx)
                    + c * (uy[l.fy(i, j + 1)] - uy[l.fy(i, j - 1)]) / (2.0 * hy);
            }
            uy_new[l.fy(i, j)] = c + dt * rhs;
        }
    }
    let mut div = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            div[l.c(i, j)] = ((ux_new[l.fx(i + 1, j)] - ux_new[l.fx(i, j)]) / hx
                + (uy_new[l.fy(i, j + 1)] - uy_new[l.fy(i, j)]) / hy)
                / dt;
        }
    }
    let p = cg_neumann(&l, &div)?;
    for j in 0..ny {
        for i in 1..nx {
            ux_new[l.fx(i, j)] -= dt * (p[l.c(i, j)] - p[l.c(i - 1, j)]) / hx;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            uy_new[l.fy(i, j)] -= dt * (p[l.c(i, j)] - p[l.c(i, j - 1)]) / hy;
        }
    }

    for (name, f) in [("n", &n_new), ("v", &v_new), ("w", &w_new)] {
        if f.iter().any(|x| !x.is_finite()) {
            return Err(Error::Oracle(format!("non-finite {name} in reference step")));
        }
    }
    Ok(SystemState {
        t: state.t + dt,
        n: ScalarField::from_vec(grid, n_new)?,
        v: ScalarField::from_vec(grid, v_new)?,
        w: ScalarField::from_vec(grid, w_new)?,
        u: MacField::from_parts(grid, ux_new, uy_new)?,
        p: ScalarField::from_vec(grid, p)?,
        v0_sup: state.v0_sup,
        steps: state.steps + 1,
        clamps: state.clamps,
        extrema: state.extrema,
    })
}

/// Mean-zero solution of `Δp = b` with Neumann walls by plain CG.
fn cg_neumann(l: &Layout, b: &[f64]) -> Result<Vec<f64>> {
    let len = b.len();
    let mean = b.iter().sum::<f64>() / len as f64;
    // work with −Δ, which is positive semidefinite
    let rhs: Vec<f64> = b.iter().map(|x| -(x - mean)).collect();
    let bnorm = rhs.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut x = vec![0.0; len];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let apply = |f: &[f64], out: &mut [f64]| {
        for j in 0..l.ny {
            for i in 0..l.nx {
                out[l.c(i, j)] = -l.lap(f, i, j);
            }
        }
    };
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; len];
    let mut rr: f64 = r.iter().map(|x| x * x).sum();
    for _ in 0..20 * len {
        apply(&p, &mut ap);
        let a = rr / p.iter().zip(&ap).map(|(x, y)| x * y).sum::<f64>();
        for k in 0..len {
            x[k] += a * p[k];
            r[k] -= a * ap[k];
        }
        let rr_new: f64 = r.iter().map(|x| x * x).sum();
        if rr_new.sqrt() <= 1e-13 * bnorm {
            let m = x.iter().sum::<f64>() / len as f64;
            x.iter_mut().for_each(|v| *v -= m);
            return Ok(x);
        }
        for k in 0..len {
            p[k] = r[k] + rr_new / rr * p[k];
        }
        rr = rr_new;
    }
    Err(Error::Oracle("reference pressure solve did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_scenario, InitialData, Potential, SensitivitySpec};
    use approx::assert_relative_eq;

    fn params(g: &Grid) -> ModelParams {
        ModelParams::new(g, &Potential::Linear { g: 1.0 }, 0.1, SensitivitySpec::Logarithmic).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        let (w, v) = homogeneous_closed_form(0.3, 0.3, 2.0, 1.7).unwrap();
        assert_relative_eq!(w, 0.3);
        assert_relative_eq!(v, 2.0 * (-0.3f64 * 1.7).exp(), max_relative = 1e-15);
        assert_eq!(homogeneous_closed_form(0.1, 0.2, 1.0, 0.0).unwrap(), (0.2, 1.0));
        let (w, v) = homogeneous_closed_form(0.1, 0.2, 1.0, 5.0).unwrap();
        let e5 = (-5.0f64).exp();
        assert_relative_eq!(w, 0.1 + 0.1 * e5, max_relative = 1e-15);
        assert_relative_eq!(v, (-0.5 - 0.1 * (1.0 - e5)).exp(), max_relative = 1e-15);
        assert!(homogeneous_closed_form(0.1, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn closed_form_v_matches_quadrature_of_w() {
        let s = HomogeneousSolution { n_bar: 0.37, w0: 1.3, v0: 0.8 };
        for &t in &[0.1, 1.0, 4.0, 9.0] {
            // composite Simpson on ∫₀ᵗ w
            let k = 2000;
            let h = t / k as f64;
            let mut acc = s.w(0.0) + s.w(t);
            for i in 1..k {
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * s.w(i as f64 * h);
            }
            let integral = acc * h / 3.0;
            assert_relative_eq!(s.v(t), s.v0 * (-integral).exp(), max_relative = 1e-10);
        }
    }

    #[test]
    fn manufactured_solution_profile() {
        let g = Grid::new(16, 8, 2.0, 1.0).unwrap();
        let f0 = manufactured_heat_solution(&g, 0.0);
        assert_relative_eq!(f0.get(3, 2), (std::f64::consts::PI * g.xc(3) / 2.0).cos());
        let t = 0.7;
        let ft = manufactured_heat_solution(&g, t);
        let k2 = (std::f64::consts::PI / 2.0).powi(2);
        let ratio = ft.get(1, 1) / f0.get(1, 1);
        assert_relative_eq!(ratio, (-k2 * t).exp(), max_relative = 1e-14);
    }

    #[test]
    fn rejects_unstable_dt() {
        let g = Grid::unit_square(16).unwrap();
        let st = SystemState::new(&make_scenario("uniform", &g, 0.1, 1.0).unwrap()).unwrap();
        let dt = explicit_dt_limit(&g) * 1.5;
        assert!(matches!(explicit_reference_step(&st, &params(&g), dt), Err(Error::Oracle(_))));
    }

    #[test]
    fn homogeneous_state_follows_ode_to_second_order() {
        let g = Grid::unit_square(8).unwrap();
        let data = InitialData {
            n0: ScalarField::constant(g, 0.1),
            v0: ScalarField::constant(g, 1.0),
            w0: ScalarField::constant(g, 0.2),
            u0: MacField::zeros(g),
        };
        let st = SystemState::new(&data).unwrap();
        let mut prm = params(&g);
        prm.phi = ScalarField::zeros(g);
        for dt in [1e-3, 5e-4] {
            let next = explicit_reference_step(&st, &prm, dt).unwrap();
            let (w, v) = homogeneous_closed_form(0.1, 0.2, 1.0, dt).unwrap();
            assert!(next.w.sup_dev(w) < 0.6 * dt * dt);
            assert!(next.v.sup_dev(v) < 0.6 * dt * dt);
            assert!(next.n.sup_dev(0.1) < 1e-16);
        }
    }

    #[test]
    fn reference_step_conserves_mass_and_divergence() {
        let g = Grid::unit_square(16).unwrap();
        let prm = params(&g);
        let mut st = SystemState::new(&make_scenario("gaussian-bump", &g, 0.5, 1.0).unwrap()).unwrap();
        st.u = make_scenario("vortex", &g, 0.5, 1.0).unwrap().u0;
        st.v = ScalarField::from_fn(g, |x, y| 0.5 + 0.4 * x * y);
        let dt = explicit_dt_limit(&g);
        for _ in 0..20 {
            let m0 = st.n.integral();
            st = explicit_reference_step(&st, &prm, dt).unwrap();
            assert!((st.n.integral() - m0).abs() <= 1e-12 * m0);
            assert!(st.u.divergence().sup_abs() < 1e-9);
        }
    }
}
