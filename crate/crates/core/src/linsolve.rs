//! Preconditioned conjugate gradients for the symmetric positive
//! (semi-)definite stencil systems of the solver: pressure Poisson problems
//! and the shifted Helmholtz systems of the implicit diffusion substeps.

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::ScalarField;
use crate::spectral::{AxisBc, DiagonalSolver};

/// `y = α·x − β·Δ_h x` on an `nx × ny` block with ghost rules per axis.
#[derive(Debug, Clone, Copy)]
pub struct StencilOp {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub bc_x: AxisBc,
    pub bc_y: AxisBc,
    pub alpha: f64,
    pub beta: f64,
}

impl StencilOp {
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when the operator has the constants in its kernel.
    pub fn is_singular(&self) -> bool {
        self.alpha == 0.0 && self.bc_x == AxisBc::NeumannCell && self.bc_y == AxisBc::NeumannCell
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        let (cx, cy) = (self.beta / (self.hx * self.hx), self.beta / (self.hy * self.hy));
        let (bx, by, alpha) = (self.bc_x, self.bc_y, self.alpha);
        exec::rows_mut(y, nx, |j, row| {
            let c = &x[j * nx..(j + 1) * nx];
            let s = if j > 0 { Some(&x[(j - 1) * nx..j * nx]) } else { None };
            let n = if j + 1 < ny { Some(&x[(j + 1) * nx..(j + 2) * nx]) } else { None };
            for i in 0..nx {
                let v = c[i];
                let w = if i > 0 { c[i - 1] } else { bx.ghost(v) };
                let e = if i + 1 < nx { c[i + 1] } else { bx.ghost(v) };
                let sv = s.map_or_else(|| by.ghost(v), |r| r[i]);
                let nv = n.map_or_else(|| by.ghost(v), |r| r[i]);
                row[i] = alpha * v - cx * (w - 2.0 * v + e) - cy * (sv - 2.0 * v + nv);
            }
        });
    }
}

/// Approximate inverse used inside [`pcg`].
pub trait Preconditioner: Sync {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

/// Diagonal (Jacobi) scaling.
pub struct Jacobi(pub f64);

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.iter_mut().zip(r).for_each(|(z, r)| *z = r / self.0);
    }
}

impl Jacobi {
    pub fn for_op(op: &StencilOp) -> Self {
        Jacobi(op.alpha + 2.0 * op.beta * (1.0 / (op.hx * op.hx) + 1.0 / (op.hy * op.hy)))
    }
}

/// Exact fast-transform inverse of a [`StencilOp`] with matching `α, β`.
pub struct Spectral<'a> {
    pub solver: &'a DiagonalSolver,
    pub alpha: f64,
    pub beta: f64,
}

impl Preconditioner for Spectral<'_> {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        self.solver.solve_in_place(self.alpha, self.beta, z);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    /// Stop once ‖r‖₂ ≤ rtol·‖b‖₂.
    pub rtol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Final relative residual ‖b − Ax‖₂ / ‖b‖₂.
    pub residual: f64,
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(x: &mut [f64]) {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= m);
}

/// Preconditioned CG. `x` holds the initial guess on entry. For singular
/// (pure Neumann) operators the iterates are kept mean-zero.
pub fn pcg(
    op: &StencilOp,
    pre: &dyn Preconditioner,
    b: &[f64],
    x: &mut [f64],
    opts: CgOptions,
) -> Result<SolveReport> {
    let n = op.len();
    let singular = op.is_singular();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveReport::default());
    }
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    op.apply(x, &mut ap);
    r.iter_mut()
        .zip(b.iter().zip(&ap))
        .for_each(|(r, (b, a))| *r = b - a);
    let mut z = vec![0.0; n];
    let mut history = Vec::new();
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    history.push(rel);
    if rel <= opts.rtol {
        return Ok(SolveReport { iterations: 0, residual: rel, history });
    }
    pre.apply(&r, &mut z);
    if singular {
        remove_mean(&mut z);
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=opts.max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::Solver { iterations: it, residual: rel, history });
        }
        let a = rz / pap;
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += a * p);
        r.iter_mut().zip(&ap).for_each(|(r, q)| *r -= a * q);
        rel = dot(&r, &r).sqrt() / bnorm;
        history.push(rel);
        if rel <= opts.rtol {
            if singular {
                remove_mean(x);
            }
            return Ok(SolveReport { iterations: it, residual: rel, history });
        }
        pre.apply(&r, &mut z);
        if singular {
            remove_mean(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    Err(Error::Solver {
        iterations: opts.max_iter,
        residual: rel,
        history,
    })
}

/// Boundary condition of a cell-centred Poisson problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bc {
    Neumann,
    Dirichlet,
}

/// Solves `Δ_h p = rhs`. Neumann problems need a compatible right-hand
/// side and return the mean-zero solution; Dirichlet problems vanish on the
/// wall faces.
pub fn poisson_solve(rhs: &ScalarField, bc: Bc) -> Result<(ScalarField, SolveReport)> {
    let g = *rhs.grid();
    let axis = match bc {
        Bc::Neumann => AxisBc::NeumannCell,
        Bc::Dirichlet => AxisBc::DirichletCell,
    };
    let solver = DiagonalSolver::new(g.nx(), g.ny(), g.hx(), g.hy(), axis, axis);
    poisson_solve_with(&solver, rhs, CgOptions::default())
}

/// [`poisson_solve`] reusing a prepared transform plan.
pub fn poisson_solve_with(
    solver: &DiagonalSolver,
    rhs: &ScalarField,
    opts: CgOptions,
) -> Result<(ScalarField, SolveReport)> {
    let g = *rhs.grid();
    if !rhs.is_finite() {
        return Err(Error::Diagnostic("non-finite Poisson right-hand side".into()));
    }
    let (bx, by) = solver.bcs();
    let op = StencilOp {
        nx: g.nx(),
        ny: g.ny(),
        hx: g.hx(),
        hy: g.hy(),
        bc_x: bx,
        bc_y: by,
        alpha: 0.0,
        beta: 1.0,
    };
    // solve (−Δ_h) p = −rhs
    let mut b: Vec<f64> = rhs.values().iter().map(|v| -v).collect();
    if op.is_singular() {
        let total: f64 = b.iter().sum::<f64>() * g.cell_area();
        let scale: f64 = b.iter().map(|v| v.abs()).sum::<f64>() * g.cell_area();
        if total.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) && total.abs() > 1e-300 {
            return Err(Error::Gauge { integral: total });
        }
        remove_mean(&mut b);
    }
    let mut x = vec![0.0; b.len()];
    let pre = Spectral { solver, alpha: 0.0, beta: 1.0 };
    // the spectral inverse is exact up to rounding, so CG usually stops at
    // the initial residual check
    pre.apply(&b, &mut x);
    if op.is_singular() {
        remove_mean(&mut x);
    }
    let report = pcg(&op, &pre, &b, &mut x, opts)?;
    Ok((ScalarField::from_vec(g, x)?, report))
}
