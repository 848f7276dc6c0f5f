//! Fast diagonalisation of the constant-coefficient operator
//! `α·I − β·Δ_h` on the rectangle.
//!
//! Along each axis the 3-point second difference with the ghost rule of an
//! [`AxisBc`] is diagonalised by a real trigonometric transform, so the 2D
//! operator is inverted exactly (up to round-off) by a forward transform, a
//! pointwise division by the eigenvalues, and an inverse transform. The
//! linear solvers use this as a preconditioner, which makes them converge in
//! one or two iterations.

use std::f64::consts::PI;
use std::sync::Arc;

use rustdct::{Dst1, DctPlanner, TransformType2And3};

use crate::exec;

/// Boundary treatment of one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisBc {
    /// Cell-centred unknowns, ghost = mirrored value (homogeneous Neumann).
    NeumannCell,
    /// Cell-centred unknowns, ghost = negated value (zero on the wall face).
    DirichletCell,
    /// Node unknowns strictly inside the interval, zero boundary nodes.
    DirichletNode,
}

impl AxisBc {
    /// Ghost value below index 0 / above index n−1 for an edge value `edge`.
    #[inline]
    pub fn ghost(self, edge: f64) -> f64 {
        match self {
            AxisBc::NeumannCell => edge,
            AxisBc::DirichletCell => -edge,
            AxisBc::DirichletNode => 0.0,
        }
    }

    /// Eigenvalues of −D² (with spacing `h`) in transform order.
    pub fn eigenvalues(self, n: usize, h: f64) -> Vec<f64> {
        let c = 4.0 / (h * h);
        (0..n)
            .map(|k| {
                let theta = match self {
                    AxisBc::NeumannCell => PI * k as f64 / (2 * n) as f64,
                    AxisBc::DirichletCell => PI * (k + 1) as f64 / (2 * n) as f64,
                    AxisBc::DirichletNode => PI * (k + 1) as f64 / (2 * (n + 1)) as f64,
                };
                c * theta.sin().powi(2)
            })
            .collect()
    }
}

enum Transform {
    Type23(Arc<dyn TransformType2And3<f64>>),
    Type1(Arc<dyn Dst1<f64>>),
}

struct Axis {
    bc: AxisBc,
    eig: Vec<f64>,
    transform: Transform,
    /// Factor turning inverse∘forward into the identity.
    norm: f64,
}

impl Axis {
    fn new(planner: &mut DctPlanner<f64>, bc: AxisBc, n: usize, h: f64) -> Self {
        let (transform, norm) = match bc {
            AxisBc::NeumannCell | AxisBc::DirichletCell => {
                (Transform::Type23(planner.plan_dct2(n)), 2.0 / n as f64)
            }
            AxisBc::DirichletNode => (Transform::Type1(planner.plan_dst1(n)), 2.0 / (n + 1) as f64),
        };
        Self {
            bc,
            eig: bc.eigenvalues(n, h),
            transform,
            norm,
        }
    }

    fn scratch_len(&self) -> usize {
        match &self.transform {
            Transform::Type23(t) => rustdct::RequiredScratch::get_scratch_len(t.as_ref()),
            Transform::Type1(t) => rustdct::RequiredScratch::get_scratch_len(t.as_ref()),
        }
    }

    fn forward(&self, buf: &mut [f64], scratch: &mut [f64]) {
        match (&self.transform, self.bc) {
            (Transform::Type23(t), AxisBc::NeumannCell) => t.process_dct2_with_scratch(buf, scratch),
            (Transform::Type23(t), _) => t.process_dst2_with_scratch(buf, scratch),
            (Transform::Type1(t), _) => t.process_dst1_with_scratch(buf, scratch),
        }
    }

    fn inverse(&self, buf: &mut [f64], scratch: &mut [f64]) {
        match (&self.transform, self.bc) {
            (Transform::Type23(t), AxisBc::NeumannCell) => t.process_dct3_with_scratch(buf, scratch),
            (Transform::Type23(t), _) => t.process_dst3_with_scratch(buf, scratch),
            (Transform::Type1(t), _) => t.process_dst1_with_scratch(buf, scratch),
        }
    }
}

/// Exact solver for `(α·I − β·Δ_h) x = b` on an `nx × ny` block with the
/// given per-axis boundary treatment. Data is row-major with rows along x.
pub struct DiagonalSolver {
    nx: usize,
    ny: usize,
    ax: Axis,
    ay: Axis,
}

impl std::fmt::Debug for DiagonalSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiagonalSolver")
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .field("bc_x", &self.ax.bc)
            .field("bc_y", &self.ay.bc)
            .finish()
    }
}

impl DiagonalSolver {
    pub fn new(nx: usize, ny: usize, hx: f64, hy: f64, bc_x: AxisBc, bc_y: AxisBc) -> Self {
        let mut planner = DctPlanner::new();
        Self {
            nx,
            ny,
            ax: Axis::new(&mut planner, bc_x, nx, hx),
            ay: Axis::new(&mut planner, bc_y, ny, hy),
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bcs(&self) -> (AxisBc, AxisBc) {
        (self.ax.bc, self.ay.bc)
    }

    /// Overwrites `data` with `(α − βΔ_h)⁻¹ data`. A zero eigenvalue (the
    /// constant mode of the pure Neumann Laplacian) is projected out.
    pub fn solve_in_place(&self, alpha: f64, beta: f64, data: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        debug_assert_eq!(data.len(), nx * ny);
        let sx = self.ax.scratch_len();
        let sy = self.ay.scratch_len();

        exec::rows_mut_with(data, nx, || vec![0.0; sx], |s, _, row| self.ax.forward(row, s));
        let mut t = transpose(data, nx, ny);
        let (ex, ey) = (&self.ax.eig, &self.ay.eig);
        exec::rows_mut_with(&mut t, ny, || vec![0.0; sy], |s, i, col| {
            self.ay.forward(col, s);
            for (k, c) in col.iter_mut().enumerate() {
                let d = alpha + beta * (ex[i] + ey[k]);
                *c = if d.abs() > 1e-300 { *c / d } else { 0.0 };
            }
            self.ay.inverse(col, s);
        });
        let back = transpose(&t, ny, nx);
        data.copy_from_slice(&back);
        let norm = self.ax.norm * self.ay.norm;
        exec::rows_mut_with(data, nx, || vec![0.0; sx], |s, _, row| {
            self.ax.inverse(row, s);
            row.iter_mut().for_each(|v| *v *= norm);
        });
    }
}

/// Transpose of a row-major `rows × cols` array (rows of length `cols`).
fn transpose(src: &[f64], cols: usize, rows: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for j in 0..rows {
        for i in 0..cols {
            out[i * rows + j] = src[j * cols + i];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn apply(nx: usize, ny: usize, hx: f64, hy: f64, bx: AxisBc, by: AxisBc, a: f64, b: f64, x: &[f64]) -> Vec<f64> {
        let at = |i: isize, j: isize| -> f64 {
            if i < 0 {
                return bx.ghost(x[j as usize * nx]);
            }
            if i >= nx as isize {
                return bx.ghost(x[j as usize * nx + nx - 1]);
            }
            if j < 0 {
                return by.ghost(x[i as usize]);
            }
            if j >= ny as isize {
                return by.ghost(x[(ny - 1) * nx + i as usize]);
            }
            x[j as usize * nx + i as usize]
        };
        let mut y = vec![0.0; nx * ny];
        for j in 0..ny as isize {
            for i in 0..nx as isize {
                let c = at(i, j);
                let lap = (at(i - 1, j) - 2.0 * c + at(i + 1, j)) / (hx * hx)
                    + (at(i, j - 1) - 2.0 * c + at(i, j + 1)) / (hy * hy);
                y[j as usize * nx + i as usize] = a * c - b * lap;
            }
        }
        y
    }

    #[test]
    fn inverts_every_boundary_combination() {
        let kinds = [AxisBc::NeumannCell, AxisBc::DirichletCell, AxisBc::DirichletNode];
        let (nx, ny, hx, hy) = (13, 10, 0.3, 0.2);
        for &bx in &kinds {
            for &by in &kinds {
                let s = DiagonalSolver::new(nx, ny, hx, hy, bx, by);
                let x: Vec<f64> = (0..nx * ny).map(|k| ((k * 7 % 11) as f64 - 5.0) * 0.1).collect();
                let b = apply(nx, ny, hx, hy, bx, by, 1.0, 0.37, &x);
                let mut sol = b.clone();
                s.solve_in_place(1.0, 0.37, &mut sol);
                let err = sol.iter().zip(&x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                assert!(err < 1e-12, "{bx:?}/{by:?}: {err}");
            }
        }
    }

    #[test]
    fn neumann_poisson_returns_mean_zero_solution() {
        let (nx, ny, h) = (16, 12, 1.0 / 16.0);
        let s = DiagonalSolver::new(nx, ny, h, h, AxisBc::NeumannCell, AxisBc::NeumannCell);
        let mut x: Vec<f64> = (0..nx * ny).map(|k| (k as f64 * 0.37).sin()).collect();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        x.iter_mut().for_each(|v| *v -= mean);
        let b = apply(nx, ny, h, h, AxisBc::NeumannCell, AxisBc::NeumannCell, 0.0, 1.0, &x);
        let mut sol = b;
        s.solve_in_place(0.0, 1.0, &mut sol);
        let err = sol.iter().zip(&x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-11, "{err}");
    }
}
