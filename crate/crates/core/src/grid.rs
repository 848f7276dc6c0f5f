//! Rectangular cell-centered grid, field containers and the discrete
//! differential operators shared by the solver and the diagnostics.
//!
//! Scalars live at cell centres and are stored row-major: the value of cell
//! `(i, j)` (x index `i`, y index `j`) sits at `j * nx + i`. Homogeneous
//! Neumann conditions are realised with even ghost cells (ghost = mirrored
//! interior value). The fluid velocity lives on a MAC staggered layout, see
//! [`MacField`].

use crate::error::{Error, Result};
use crate::exec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    hx: f64,
    hy: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::Config(format!(
                "grid needs at least 4x4 cells, got {nx}x{ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::Config(format!(
                "domain lengths must be positive, got {lx} x {ly}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
        })
    }

    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hy(&self) -> f64 {
        self.hy
    }
    pub fn h_min(&self) -> f64 {
        self.hx.min(self.hy)
    }
    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }
    /// |Ω| = Lx·Ly.
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }
    /// x coordinate of the centre of column `i`.
    #[inline]
    pub fn xc(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx
    }
    #[inline]
    pub fn yc(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy
    }
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
    /// First nonzero Neumann eigenvalue of −Δ on the rectangle.
    pub fn lambda1(&self) -> f64 {
        let l = self.lx.max(self.ly);
        std::f64::consts::PI * std::f64::consts::PI / (l * l)
    }
}

/// Cell-centred scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            data: vec![c; grid.cells()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.cells());
        for j in 0..grid.ny {
            let y = grid.yc(j);
            for i in 0..grid.nx {
                data.push(f(grid.xc(i), y));
            }
        }
        Self { grid, data }
    }

    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.cells() {
            return Err(Error::Config(format!(
                "field has {} values, grid has {} cells",
                data.len(),
                grid.cells()
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.data
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.grid.nx + i]
    }
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let nx = self.grid.nx;
        self.data[j * nx + i] = v;
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
    pub fn sup_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
    /// ‖f − c‖∞
    pub fn sup_dev(&self, c: f64) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max((v - c).abs()))
    }
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Midpoint-rule integral, folded in row order.
    pub fn integral(&self) -> f64 {
        exec::row_sum(&self.data, self.grid.nx, |_, r| r.iter().sum()) * self.grid.cell_area()
    }
    pub fn mean(&self) -> f64 {
        self.integral() / self.grid.area()
    }
    /// ∫ g(f) over Ω.
    pub fn integral_of(&self, g: impl Fn(f64) -> f64 + Sync + Send) -> f64 {
        exec::row_sum(&self.data, self.grid.nx, |_, r| r.iter().map(|&v| g(v)).sum())
            * self.grid.cell_area()
    }

    pub fn map(&self, g: impl Fn(f64) -> f64 + Sync + Send) -> Self {
        let mut out = self.clone();
        exec::rows_mut(&mut out.data, self.grid.nx, |_, row| {
            row.iter_mut().for_each(|v| *v = g(*v))
        });
        out
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }
}

/// Collocated (cell-centred) vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub x: ScalarField,
    pub y: ScalarField,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            x: ScalarField::zeros(grid),
            y: ScalarField::zeros(grid),
        }
    }
    pub fn constant(grid: Grid, cx: f64, cy: f64) -> Self {
        Self {
            x: ScalarField::constant(grid, cx),
            y: ScalarField::constant(grid, cy),
        }
    }
    /// Pointwise Euclidean norm.
    pub fn magnitude(&self) -> ScalarField {
        let mut out = self.x.clone();
        for (o, b) in out.values_mut().iter_mut().zip(self.y.values()) {
            *o = o.hypot(*b);
        }
        out
    }
}

/// MAC-staggered velocity. `ux` holds normal components on the vertical
/// faces, `(nx+1) × ny` values with face `(i, j)` at `x = i·hx`; `uy` holds
/// normal components on the horizontal faces, `nx × (ny+1)` values with
/// face `(i, j)` at `y = j·hy`. Wall faces carry the no-penetration value 0;
/// the tangential no-slip condition is imposed through odd ghost values.
#[derive(Debug, Clone, PartialEq)]
pub struct MacField {
    grid: Grid,
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
}

impl MacField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            ux: vec![0.0; (grid.nx + 1) * grid.ny],
            uy: vec![0.0; grid.nx * (grid.ny + 1)],
        }
    }

    pub fn from_parts(grid: Grid, ux: Vec<f64>, uy: Vec<f64>) -> Result<Self> {
        if ux.len() != (grid.nx + 1) * grid.ny || uy.len() != grid.nx * (grid.ny + 1) {
            return Err(Error::Config("MAC component sizes do not match grid".into()));
        }
        Ok(Self { grid, ux, uy })
    }

    /// Discrete curl of a stream function sampled at the cell corners
    /// `(i·hx, j·hy)`: `ux = ∂ψ/∂y`, `uy = −∂ψ/∂x`. The result is divergence
    /// free to round-off by telescoping.
    pub fn from_stream_function(grid: Grid, psi: impl Fn(f64, f64) -> f64) -> Self {
        let (nx, ny, hx, hy) = (grid.nx, grid.ny, grid.hx, grid.hy);
        let node = |i: usize, j: usize| psi(i as f64 * hx, j as f64 * hy);
        let mut u = Self::zeros(grid);
        for j in 0..ny {
            for i in 0..=nx {
                u.ux[j * (nx + 1) + i] = (node(i, j + 1) - node(i, j)) / hy;
            }
        }
        for j in 0..=ny {
            for i in 0..nx {
                u.uy[j * nx + i] = -(node(i + 1, j) - node(i, j)) / hx;
            }
        }
        u
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    #[inline]
    pub fn ux_at(&self, i: usize, j: usize) -> f64 {
        self.ux[j * (self.grid.nx + 1) + i]
    }
    #[inline]
    pub fn uy_at(&self, i: usize, j: usize) -> f64 {
        self.uy[j * self.grid.nx + i]
    }

    pub fn sup_abs(&self) -> f64 {
        self.ux
            .iter()
            .chain(self.uy.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.ux.iter().chain(self.uy.iter()).all(|v| v.is_finite())
    }

    /// Largest normal velocity on the wall faces.
    pub fn wall_normal_max(&self) -> f64 {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut m: f64 = 0.0;
        for j in 0..ny {
            m = m.max(self.ux_at(0, j).abs()).max(self.ux_at(nx, j).abs());
        }
        for i in 0..nx {
            m = m.max(self.uy_at(i, 0).abs()).max(self.uy_at(i, ny).abs());
        }
        m
    }

    /// Cell divergence `(ux[i+1]−ux[i])/hx + (uy[j+1]−uy[j])/hy`.
    pub fn divergence(&self) -> ScalarField {
        let g = self.grid;
        let mut out = ScalarField::zeros(g);
        exec::rows_mut(&mut out.data, g.nx, |j, row| {
            for (i, o) in row.iter_mut().enumerate() {
                *o = (self.ux_at(i + 1, j) - self.ux_at(i, j)) / g.hx
                    + (self.uy_at(i, j + 1) - self.uy_at(i, j)) / g.hy;
            }
        });
        out
    }

    /// ∫|u|² with each face value weighted by one cell area.
    pub fn l2_sq(&self) -> f64 {
        let s: f64 = self.ux.iter().chain(self.uy.iter()).map(|v| v * v).sum();
        s * self.grid.cell_area()
    }

    /// ∫|∇u|² consistent with the no-slip viscous operator: normal
    /// derivatives at cell centres, tangential derivatives at cell corners
    /// with the wall value of the tangential component equal to zero.
    pub fn grad_l2_sq(&self) -> f64 {
        let g = self.grid;
        let (nx, ny, hx, hy) = (g.nx, g.ny, g.hx, g.hy);
        let mut s = 0.0;
        // ∂ux/∂x and ∂uy/∂y at cell centres
        for j in 0..ny {
            for i in 0..nx {
                let a = (self.ux_at(i + 1, j) - self.ux_at(i, j)) / hx;
                let b = (self.uy_at(i, j + 1) - self.uy_at(i, j)) / hy;
                s += a * a + b * b;
            }
        }
        // ∂ux/∂y between rows, including the half-cell distance to the walls
        for i in 1..nx {
            for j in 0..=ny {
                let d = match j {
                    0 => 2.0 * self.ux_at(i, 0) / hy,
                    _ if j == ny => -2.0 * self.ux_at(i, ny - 1) / hy,
                    _ => (self.ux_at(i, j) - self.ux_at(i, j - 1)) / hy,
                };
                s += d * d;
            }
        }
        for j in 1..ny {
            for i in 0..=nx {
                let d = match i {
                    0 => 2.0 * self.uy_at(0, j) / hx,
                    _ if i == nx => -2.0 * self.uy_at(nx - 1, j) / hx,
                    _ => (self.uy_at(i, j) - self.uy_at(i - 1, j)) / hx,
                };
                s += d * d;
            }
        }
        s * g.cell_area()
    }

    /// Velocity interpolated to cell centres.
    pub fn to_cell_centres(&self) -> VectorField {
        let g = self.grid;
        let mut out = VectorField::zeros(g);
        for j in 0..g.ny {
            for i in 0..g.nx {
                out.x.set(i, j, 0.5 * (self.ux_at(i, j) + self.ux_at(i + 1, j)));
                out.y.set(i, j, 0.5 * (self.uy_at(i, j) + self.uy_at(i, j + 1)));
            }
        }
        out
    }
}

/// ∫f over Ω by the midpoint rule.
pub fn integrate(f: &ScalarField) -> Result<f64> {
    if !f.is_finite() {
        return Err(Error::Diagnostic("non-finite value in integrand".into()));
    }
    Ok(f.integral())
}

#[inline]
fn clampi(k: isize, n: usize) -> usize {
    k.clamp(0, n as isize - 1) as usize
}

/// Five-point Laplacian with homogeneous Neumann (even ghost) boundaries.
pub fn laplacian_neumann(f: &ScalarField) -> ScalarField {
    let g = *f.grid();
    let (nx, ny) = (g.nx, g.ny);
    let (cx, cy) = (1.0 / (g.hx * g.hx), 1.0 / (g.hy * g.hy));
    let src = f.values();
    let mut out = ScalarField::zeros(g);
    exec::rows_mut(&mut out.data, nx, |j, row| {
        let c = &src[j * nx..(j + 1) * nx];
        let s = &src[clampi(j as isize - 1, ny) * nx..][..nx];
        let n = &src[clampi(j as isize + 1, ny) * nx..][..nx];
        for i in 0..nx {
            let w = c[clampi(i as isize - 1, nx)];
            let e = c[clampi(i as isize + 1, nx)];
            row[i] = cx * (w - 2.0 * c[i] + e) + cy * (s[i] - 2.0 * c[i] + n[i]);
        }
    });
    out
}

/// Central-difference gradient with even (Neumann) ghost cells.
pub fn gradient(f: &ScalarField) -> VectorField {
    let g = *f.grid();
    let (nx, ny) = (g.nx, g.ny);
    let src = f.values();
    let mut gx = ScalarField::zeros(g);
    let mut gy = ScalarField::zeros(g);
    exec::rows_mut(&mut gx.data, nx, |j, row| {
        let c = &src[j * nx..(j + 1) * nx];
        for i in 0..nx {
            row[i] = (c[clampi(i as isize + 1, nx)] - c[clampi(i as isize - 1, nx)]) / (2.0 * g.hx);
        }
    });
    exec::rows_mut(&mut gy.data, nx, |j, row| {
        let s = &src[clampi(j as isize - 1, ny) * nx..][..nx];
        let n = &src[clampi(j as isize + 1, ny) * nx..][..nx];
        for i in 0..nx {
            row[i] = (n[i] - s[i]) / (2.0 * g.hy);
        }
    });
    VectorField { x: gx, y: gy }
}

/// Central-difference divergence with odd ghost cells (zero normal
/// component on the walls). Together with [`gradient`] this satisfies
/// ⟨∇f, F⟩ = −⟨f, ∇·F⟩ exactly.
pub fn divergence(v: &VectorField) -> ScalarField {
    let g = *v.x.grid();
    let (nx, ny) = (g.nx, g.ny);
    let fx = v.x.values();
    let fy = v.y.values();
    let mut out = ScalarField::zeros(g);
    exec::rows_mut(&mut out.data, nx, |j, row| {
        for i in 0..nx {
            let e = if i + 1 < nx { fx[j * nx + i + 1] } else { -fx[j * nx + i] };
            let w = if i > 0 { fx[j * nx + i - 1] } else { -fx[j * nx + i] };
            let n = if j + 1 < ny { fy[(j + 1) * nx + i] } else { -fy[j * nx + i] };
            let s = if j > 0 { fy[(j - 1) * nx + i] } else { -fy[j * nx + i] };
            row[i] = (e - w) / (2.0 * g.hx) + (n - s) / (2.0 * g.hy);
        }
    });
    out
}

/// ∫|∇f|² from face differences, the quadratic form of
/// [`laplacian_neumann`]: `dirichlet_energy(f) = −∫ f·Δf`.
pub fn dirichlet_energy(f: &ScalarField) -> f64 {
    let g = *f.grid();
    let (nx, ny) = (g.nx, g.ny);
    let src = f.values();
    let s = exec::row_sum(src, nx, |j, row| {
        let mut acc = 0.0;
        for i in 1..nx {
            let d = (row[i] - row[i - 1]) / g.hx;
            acc += d * d;
        }
        if j + 1 < ny {
            let up = &src[(j + 1) * nx..(j + 2) * nx];
            for i in 0..nx {
                let d = (up[i] - row[i]) / g.hy;
                acc += d * d;
            }
        }
        acc
    });
    s * g.cell_area()
}

/// Value of the boundary mollifier ρ_ε at `(x, y)`: zero within `eps/2` of
/// the wall, one beyond `eps`, cubic smoothstep in between.
pub fn mollifier_value(grid: &Grid, eps: f64, x: f64, y: f64) -> f64 {
    let d = x.min(grid.lx - x).min(y).min(grid.ly - y);
    let half = 0.5 * eps;
    if d <= half {
        0.0
    } else if d >= eps {
        1.0
    } else {
        let s = (d - half) / half;
        s * s * (3.0 - 2.0 * s)
    }
}

pub fn check_mollifier_eps(grid: &Grid, eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 0.5 * grid.lx.min(grid.ly)) {
        return Err(Error::Config(format!(
            "mollifier width must lie in (0, min(Lx,Ly)/2), got {eps}"
        )));
    }
    Ok(())
}

/// ρ_ε sampled at the cell centres.
pub fn boundary_mollifier(grid: &Grid, eps: f64) -> Result<ScalarField> {
    check_mollifier_eps(grid, eps)?;
    Ok(ScalarField::from_fn(*grid, |x, y| mollifier_value(grid, eps, x, y)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_rejects_degenerate_input() {
        assert!(Grid::new(3, 8, 1.0, 1.0).is_err());
        assert!(Grid::new(8, 8, 0.0, 1.0).is_err());
        assert!(Grid::new(8, 8, 1.0, -2.0).is_err());
    }

    #[test]
    fn integrate_unit_and_constant_fields() {
        let g = Grid::unit_square(8).unwrap();
        assert_eq!(integrate(&ScalarField::constant(g, 1.0)).unwrap(), 1.0);
        let g2 = Grid::new(10, 6, 2.5, 0.75).unwrap();
        assert_relative_eq!(
            integrate(&ScalarField::constant(g2, 3.0)).unwrap(),
            3.0 * 2.5 * 0.75,
            max_relative = 1e-14
        );
    }

    #[test]
    fn integrate_linear_is_exact() {
        let g = Grid::unit_square(64).unwrap();
        let f = ScalarField::from_fn(g, |x, _| x);
        // direct summation: Σ (i+½)/64 · 64 rows · (1/64)² = ½
        let direct: f64 = (0..64).map(|i| (i as f64 + 0.5) / 64.0).sum::<f64>() * 64.0 / 4096.0;
        assert_relative_eq!(direct, 0.5, max_relative = 1e-15);
        assert_relative_eq!(integrate(&f).unwrap(), 0.5, max_relative = 1e-14);
    }

    #[test]
    fn integrate_flags_non_finite() {
        let g = Grid::unit_square(8).unwrap();
        let mut f = ScalarField::zeros(g);
        f.set(3, 3, f64::NAN);
        assert!(matches!(integrate(&f), Err(Error::Diagnostic(_))));
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let g = Grid::new(12, 9, 1.3, 0.7).unwrap();
        let l = laplacian_neumann(&ScalarField::constant(g, 3.0));
        assert!(l.sup_abs() < 1e-12);
    }

    #[test]
    fn laplacian_stencil_on_indicator() {
        let g = Grid::new(5, 5, 5.0, 5.0).unwrap();
        let mut f = ScalarField::zeros(g);
        f.set(2, 2, 1.0);
        let l = laplacian_neumann(&f);
        for j in 0..5 {
            for i in 0..5 {
                let expected = match (i, j) {
                    (2, 2) => -4.0,
                    (1, 2) | (3, 2) | (2, 1) | (2, 3) => 1.0,
                    _ => 0.0,
                };
                assert_eq!(l.get(i, j), expected, "cell ({i},{j})");
            }
        }
    }

    #[test]
    fn laplacian_of_cosine_conserves_and_converges() {
        let mut errs = vec![];
        for n in [16, 32, 64] {
            let g = Grid::new(n, n, 2.0, 1.0).unwrap();
            let k = PI / 2.0;
            let f = ScalarField::from_fn(g, |x, _| (k * x).cos());
            let l = laplacian_neumann(&f);
            assert!(l.integral().abs() < 1e-12);
            let err = l
                .values()
                .iter()
                .zip(f.values())
                .fold(0.0f64, |m, (a, b)| m.max((a + k * k * b).abs()));
            errs.push(err);
        }
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.8, "orders from {errs:?}");
        }
    }

    #[test]
    fn gradient_exact_on_linear_data() {
        let g = Grid::unit_square(16).unwrap();
        let f = ScalarField::from_fn(g, |x, _| x);
        let gr = gradient(&f);
        for j in 0..16 {
            for i in 1..15 {
                assert_relative_eq!(gr.x.get(i, j), 1.0, max_relative = 1e-12);
                assert_eq!(gr.y.get(i, j), 0.0);
            }
        }
        assert!(gradient(&ScalarField::constant(g, 2.0)).x.sup_abs() == 0.0);
    }

    #[test]
    fn divergence_of_constant_vanishes_inside() {
        let g = Grid::unit_square(10).unwrap();
        let d = divergence(&VectorField::constant(g, 1.5, -0.5));
        for j in 1..9 {
            for i in 1..9 {
                assert!(d.get(i, j).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn dirichlet_energy_matches_laplacian_form() {
        let g = Grid::new(20, 14, 1.0, 0.8).unwrap();
        let f = ScalarField::from_fn(g, |x, y| (3.0 * x).sin() + x * y * y);
        let lap = laplacian_neumann(&f);
        let mut prod = f.clone();
        for (p, l) in prod.values_mut().iter_mut().zip(lap.values()) {
            *p *= l;
        }
        assert_relative_eq!(dirichlet_energy(&f), -prod.integral(), max_relative = 1e-12);
    }

    #[test]
    fn mollifier_examples() {
        let g = Grid::unit_square(64).unwrap();
        let r = boundary_mollifier(&g, 0.1).unwrap();
        assert_eq!(r.get(32, 32), 1.0);
        let r = boundary_mollifier(&g, 0.25).unwrap();
        assert_eq!(r.get(0, 30), 0.0);
        assert_eq!(r.get(5, 0), 0.0);
        // ramp midpoint at distance 3·eps/4
        let eps = 0.2;
        assert_relative_eq!(mollifier_value(&g, eps, 0.15, 0.5), 0.5, epsilon = 1e-15);
        assert!(boundary_mollifier(&g, 0.0).is_err());
        assert!(boundary_mollifier(&g, 0.5).is_err());
    }

    #[test]
    fn mac_curl_is_divergence_free() {
        let g = Grid::new(24, 18, 1.5, 1.0).unwrap();
        let u = MacField::from_stream_function(g, |x, y| (PI * x / 1.5).sin() * (PI * y).sin());
        assert!(u.divergence().sup_abs() <= 1e-10);
        assert!(u.wall_normal_max() < 1e-12);
    }

    fn field_strategy(nx: usize, ny: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, nx * ny)
    }

    proptest! {
        #[test]
        fn laplacian_flux_cancellation(vals in field_strategy(9, 7)) {
            let g = Grid::new(9, 7, 1.7, 0.9).unwrap();
            let f = ScalarField::from_vec(g, vals).unwrap();
            let total = laplacian_neumann(&f).integral();
            let scale = f.sup_abs().max(1e-300) * g.area() / (g.h_min() * g.h_min());
            prop_assert!(total.abs() <= 1e-12 * scale);
        }

        #[test]
        fn gradient_divergence_adjoint(fv in field_strategy(8, 11), ax in field_strategy(8, 11), ay in field_strategy(8, 11)) {
            let g = Grid::new(8, 11, 1.0, 1.3).unwrap();
            let f = ScalarField::from_vec(g, fv).unwrap();
            let v = VectorField {
                x: ScalarField::from_vec(g, ax).unwrap(),
                y: ScalarField::from_vec(g, ay).unwrap(),
            };
            let gr = gradient(&f);
            let dv = divergence(&v);
            let lhs: f64 = gr.x.values().iter().zip(v.x.values()).map(|(a, b)| a * b).sum::<f64>()
                + gr.y.values().iter().zip(v.y.values()).map(|(a, b)| a * b).sum::<f64>();
            let rhs: f64 = -f.values().iter().zip(dv.values()).map(|(a, b)| a * b).sum::<f64>();
            let scale: f64 = f.values().iter().map(|a| a.abs()).sum::<f64>()
                * (v.x.sup_abs() + v.y.sup_abs()) / g.h_min();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1e-300));
        }

        #[test]
        fn mollifier_bounded_and_monotone(e1 in 0.01f64..0.49, e2 in 0.01f64..0.49) {
            let g = Grid::new(40, 30, 1.0, 1.0).unwrap();
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            let a = boundary_mollifier(&g, lo).unwrap();
            let b = boundary_mollifier(&g, hi).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((0.0..=1.0).contains(x));
                prop_assert!(x >= y);
            }
        }
    }
}
