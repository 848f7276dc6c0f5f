//! Quantities tracked along a run: the `z` transform, the conditional
//! Lyapunov functional, norms, invariant checks, temporal averages, decay
//! fits and empirical probes of the functional inequalities.

mod fit;
mod invariants;
mod probe;
mod quadrature;

pub use fit::{fit_decay_rate, fit_last_fraction, RateFit};
pub use invariants::{
    check_invariants, f_monotone_after_entry, temporal_average_report, FMonotone, InvariantCheck,
    InvariantReport, TemporalAverages, Tolerances,
};
pub use probe::{
    calibrate_m, calibrate_m_on, m_search_grid, moser_trudinger_probe, required_m, FieldFamily, ProbeTriple,
};
pub use quadrature::{convolution_bound_check, convolution_lhs, gauss_kronrod, ConvolutionCheck};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dirichlet_energy, gradient, ScalarField};
use crate::model::InitialData;
use crate::solver::SystemState;

/// Entropy integrands below this are set to zero.
const ENTROPY_CUTOFF: f64 = 1e-300;
pub const V_FLOOR: f64 = 1e-14;

/// Run constants derived from the initial data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    /// m = ∫n₀.
    pub mass: f64,
    pub area: f64,
    /// n̄₀ = m/|Ω|.
    pub n_bar: f64,
    pub v0_sup: f64,
    /// ∫w₀.
    pub w0_integral: f64,
    /// ∫ln(‖v₀‖∞/v₀).
    pub z0_integral: f64,
}

impl RunMeta {
    pub fn from_initial(data: &InitialData) -> Self {
        let g = data.n0.grid();
        let mass = data.n0.integral();
        let v0_sup = data.v0.max();
        Self {
            mass,
            area: g.area(),
            n_bar: mass / g.area(),
            v0_sup,
            w0_integral: data.w0.integral(),
            z0_integral: data.v0.integral_of(|v| (v0_sup / v).ln()),
        }
    }

    pub fn w0_mean(&self) -> f64 {
        self.w0_integral / self.area
    }

    /// C₀ = ∫ln(‖v₀‖∞/v₀) + m + ∫w₀.
    pub fn c0(&self) -> f64 {
        self.z0_integral + self.mass + self.w0_integral
    }

    /// C₁ = 2m + S₀(K)²·C₀.
    pub fn c1(&self, s0_k: f64) -> f64 {
        2.0 * self.mass + s0_k * s0_k * self.c0()
    }
}

/// `z = −ln(v/v0_sup)` with the default floor.
pub fn z_field(v: &ScalarField, v0_sup: f64) -> Result<ScalarField> {
    z_field_with_floor(v, v0_sup, V_FLOOR)
}

pub fn z_field_with_floor(v: &ScalarField, v0_sup: f64, floor: f64) -> Result<ScalarField> {
    if !(v0_sup > 0.0) {
        return Err(Error::Diagnostic(format!("reference level must be positive, got {v0_sup:e}")));
    }
    let min = v.min();
    if !(min >= floor) {
        return Err(Error::Diagnostic(format!("v below floor: {min:e}")));
    }
    Ok(v.map(|x| -(x / v0_sup).ln()))
}

/// Components of the conditional Lyapunov functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FComponents {
    /// ∫n ln(n/n̄₀).
    pub entropy: f64,
    /// ½∫|∇z|².
    pub grad_z: f64,
    /// ∫(w − w̄)².
    pub w_variance: f64,
    /// ∫|u|².
    pub kinetic: f64,
}

impl FComponents {
    pub fn total(&self) -> f64 {
        self.entropy + self.grad_z + self.w_variance + self.kinetic
    }
}

/// ∫n ln(n/n̄₀) with `x ln x → 0` at zero.
pub fn entropy(n: &ScalarField, n_bar: f64) -> f64 {
    n.integral_of(|x| if x < ENTROPY_CUTOFF { 0.0 } else { x * (x / n_bar).ln() })
}

/// `F` and its components.
pub fn lyapunov_f(state: &SystemState, n_bar: f64) -> Result<(f64, FComponents)> {
    let z = z_field(&state.v, state.v0_sup)?;
    let wbar = state.w.mean();
    let c = FComponents {
        entropy: entropy(&state.n, n_bar),
        grad_z: 0.5 * dirichlet_energy(&z),
        w_variance: state.w.integral_of(|w| (w - wbar).powi(2)),
        kinetic: state.u.l2_sq(),
    };
    Ok((c.total(), c))
}

/// ∫|∇n|²/(n+1)² over the interior faces.
pub fn log_gradient_energy(n: &ScalarField) -> f64 {
    let g = *n.grid();
    let (nx, ny, hx, hy) = (g.nx(), g.ny(), g.hx(), g.hy());
    let f = n.values();
    let mut s = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let c = f[j * nx + i];
            if i + 1 < nx {
                let e = f[j * nx + i + 1];
                let d = (e - c) / hx / (0.5 * (c + e) + 1.0);
                s += d * d;
            }
            if j + 1 < ny {
                let u = f[(j + 1) * nx + i];
                let d = (u - c) / hy / (0.5 * (c + u) + 1.0);
                s += d * d;
            }
        }
    }
    s * g.cell_area()
}

/// One sample of the tracked quantities. Field order is the CSV column
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass_n: f64,
    pub sup_v: f64,
    pub l1_w: f64,
    pub mean_w: f64,
    pub f_value: f64,
    pub f_entropy: f64,
    pub f_grad_z: f64,
    pub f_w_variance: f64,
    pub f_kinetic: f64,
    /// ‖n − n̄₀‖∞.
    pub sup_dev_n: f64,
    /// ‖v‖∞/‖v₀‖∞.
    pub sup_v_norm: f64,
    /// ‖w − n̄₀‖∞.
    pub sup_dev_w: f64,
    pub grad_z_l2: f64,
    pub grad_z_l4: f64,
    pub grad_z_sup: f64,
    pub u_l2: f64,
    pub grad_u_l2: f64,
    pub div_u_sup: f64,
    pub clamp_count: u64,
    /// ∫|∇n|²/(n+1)².
    pub grad_n_log_sq: f64,
}

impl DiagnosticsRecord {
    pub const COLUMNS: [&'static str; 21] = [
        "t",
        "mass_n",
        "sup_v",
        "l1_w",
        "mean_w",
        "f_value",
        "f_entropy",
        "f_grad_z",
        "f_w_variance",
        "f_kinetic",
        "sup_dev_n",
        "sup_v_norm",
        "sup_dev_w",
        "grad_z_l2",
        "grad_z_l4",
        "grad_z_sup",
        "u_l2",
        "grad_u_l2",
        "div_u_sup",
        "clamp_count",
        "grad_n_log_sq",
    ];

    /// Looks up a real-valued column by name.
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "t" => self.t,
            "mass_n" => self.mass_n,
            "sup_v" => self.sup_v,
            "l1_w" => self.l1_w,
            "mean_w" => self.mean_w,
            "f_value" => self.f_value,
            "f_entropy" => self.f_entropy,
            "f_grad_z" => self.f_grad_z,
            "f_w_variance" => self.f_w_variance,
            "f_kinetic" => self.f_kinetic,
            "sup_dev_n" => self.sup_dev_n,
            "sup_v_norm" => self.sup_v_norm,
            "sup_dev_w" => self.sup_dev_w,
            "grad_z_l2" => self.grad_z_l2,
            "grad_z_l4" => self.grad_z_l4,
            "grad_z_sup" => self.grad_z_sup,
            "u_l2" => self.u_l2,
            "grad_u_l2" => self.grad_u_l2,
            "div_u_sup" => self.div_u_sup,
            "clamp_count" => self.clamp_count as f64,
            "grad_n_log_sq" => self.grad_n_log_sq,
            _ => return None,
        })
    }

    pub fn components(&self) -> FComponents {
        FComponents {
            entropy: self.f_entropy,
            grad_z: self.f_grad_z,
            w_variance: self.f_w_variance,
            kinetic: self.f_kinetic,
        }
    }
}

/// Samples every tracked quantity of `state`.
pub fn record(state: &SystemState, meta: &RunMeta) -> Result<DiagnosticsRecord> {
    let z = z_field(&state.v, state.v0_sup)?;
    let (f, c) = lyapunov_f(state, meta.n_bar)?;
    let gz = gradient(&z);
    let mut l4 = 0.0;
    let mut sup: f64 = 0.0;
    for (x, y) in gz.x.values().iter().zip(gz.y.values()) {
        let q = x * x + y * y;
        l4 += q * q;
        sup = sup.max(q.sqrt());
    }
    let cell = state.grid().cell_area();
    let sup_v = state.v.max();
    Ok(DiagnosticsRecord {
        t: state.t,
        mass_n: state.n.integral(),
        sup_v,
        l1_w: state.w.integral(),
        mean_w: state.w.mean(),
        f_value: f,
        f_entropy: c.entropy,
        f_grad_z: c.grad_z,
        f_w_variance: c.w_variance,
        f_kinetic: c.kinetic,
        sup_dev_n: state.n.sup_dev(meta.n_bar),
        sup_v_norm: sup_v / state.v0_sup,
        sup_dev_w: state.w.sup_dev(meta.n_bar),
        grad_z_l2: (2.0 * c.grad_z).sqrt(),
        grad_z_l4: (l4 * cell).powf(0.25),
        grad_z_sup: sup,
        u_l2: c.kinetic.sqrt(),
        grad_u_l2: state.u.grad_l2_sq().sqrt(),
        div_u_sup: state.u.divergence().sup_abs(),
        clamp_count: state.clamps,
        grad_n_log_sq: log_gradient_energy(&state.n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, MacField};
    use crate::model::make_scenario;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn state(n: ScalarField, v: ScalarField, w: ScalarField) -> SystemState {
        let g = *n.grid();
        SystemState::new(&InitialData { n0: n, v0: v, w0: w, u0: MacField::zeros(g) }).unwrap()
    }

    #[test]
    fn z_examples_and_roundtrip() {
        let g = Grid::unit_square(8).unwrap();
        let z = z_field(&ScalarField::constant(g, 2.5), 2.5).unwrap();
        assert_eq!(z.sup_abs(), 0.0);
        let z = z_field(&ScalarField::constant(g, 2.5 * (-3.0f64).exp()), 2.5).unwrap();
        assert!(z.sup_dev(3.0) < 1e-15);
        let v = ScalarField::from_fn(g, |x, y| 0.1 + x * y + 1e-9 * x);
        let z = z_field(&v, 1.2).unwrap();
        for (a, b) in z.values().iter().zip(v.values()) {
            assert!(((1.2 * (-a).exp()) - b).abs() <= 1e-14 * b);
            assert!(*a >= 0.0);
        }
    }

    #[test]
    fn z_rejects_values_below_floor() {
        let g = Grid::unit_square(8).unwrap();
        let mut v = ScalarField::constant(g, 1.0);
        v.set(1, 1, 1e-20);
        assert!(matches!(z_field(&v, 1.0), Err(Error::Diagnostic(_))));
    }

    #[test]
    fn grad_z_chain_rule_converges() {
        let mut errs = vec![];
        for n in [16, 32, 64] {
            let g = Grid::unit_square(n).unwrap();
            let v = ScalarField::from_fn(g, |x, y| 1.0 + 0.3 * (PI * x).cos() * (PI * y).cos());
            let gz = gradient(&z_field(&v, 1.3).unwrap());
            let gv = gradient(&v);
            let mut err: f64 = 0.0;
            // interior cells, where both stencils are second order
            for j in 1..n - 1 {
                for i in 1..n - 1 {
                    let k = g.idx(i, j);
                    let vv = v.values()[k];
                    err = err.max((gz.x.values()[k] + gv.x.values()[k] / vv).abs());
                    err = err.max((gz.y.values()[k] + gv.y.values()[k] / vv).abs());
                }
            }
            errs.push(err);
        }
        assert!((errs[0] / errs[1]).log2() > 1.8 && (errs[1] / errs[2]).log2() > 1.8, "{errs:?}");
    }

    #[test]
    fn homogeneous_state_has_zero_f() {
        let g = Grid::unit_square(16).unwrap();
        let st = state(ScalarField::constant(g, 0.1), ScalarField::constant(g, 0.7), ScalarField::constant(g, 0.3));
        let (f, c) = lyapunov_f(&st, 0.1).unwrap();
        assert!(f.abs() < 1e-16);
        assert!(c.entropy.abs() < 1e-16 && c.grad_z == 0.0 && c.w_variance < 1e-30 && c.kinetic == 0.0);
    }

    #[test]
    fn cosine_signal_variance() {
        let a = 0.05;
        for n in [16, 32, 64] {
            let g = Grid::new(n, n, 2.0, 1.0).unwrap();
            let st = state(
                ScalarField::constant(g, 0.1),
                ScalarField::constant(g, 1.0),
                ScalarField::from_fn(g, |x, _| 0.4 + a * (PI * x / 2.0).cos()),
            );
            let (f, _) = lyapunov_f(&st, 0.1).unwrap();
            let err = (f - a * a * 2.0 / 2.0).abs();
            assert!(err < 1e-12, "{err}");
        }
    }

    #[test]
    fn entropy_nonnegative_for_random_densities() {
        let g = Grid::unit_square(12).unwrap();
        for seed in 0..50u64 {
            let n = ScalarField::from_fn(g, |x, y| ((seed as f64 + 1.0) * (3.0 * x + 7.0 * y)).sin().powi(2) + 1e-3);
            let m = n.integral();
            let n = n.map(|v| v * 0.37 / m);
            assert!(entropy(&n, 0.37) >= -1e-12);
        }
        let mut n = ScalarField::constant(g, 0.0);
        n.set(0, 0, 1.0);
        assert!(entropy(&n, 1.0 / 144.0).is_finite());
    }

    #[test]
    fn record_f_is_sum_of_components() {
        let g = Grid::new(24, 24, 2.0, 2.0).unwrap();
        let d = make_scenario("gaussian-bump", &g, 0.3, 1.0).unwrap();
        let meta = RunMeta::from_initial(&d);
        let mut st = SystemState::new(&d).unwrap();
        st.v = ScalarField::from_fn(g, |x, y| 0.5 + 0.1 * (x * y).sin());
        st.u = make_scenario("vortex", &g, 0.3, 1.0).unwrap().u0;
        let r = record(&st, &meta).unwrap();
        assert_relative_eq!(r.f_value, r.components().total(), max_relative = 1e-12);
        assert!(r.f_entropy >= 0.0 && r.f_grad_z > 0.0 && r.f_kinetic > 0.0);
        assert_relative_eq!(r.mass_n, 0.3, max_relative = 1e-12);
        assert_eq!(DiagnosticsRecord::COLUMNS.len(), 21);
        for c in DiagnosticsRecord::COLUMNS {
            assert!(r.get(c).is_some(), "{c}");
        }
    }

    #[test]
    fn c0_for_flat_nutrient() {
        let g = Grid::unit_square(8).unwrap();
        let d = make_scenario("uniform", &g, 0.2, 1.0).unwrap();
        let meta = RunMeta::from_initial(&d);
        assert_eq!(meta.z0_integral, 0.0);
        assert_relative_eq!(meta.c0(), 0.2 + 0.2, max_relative = 1e-14);
    }

    #[test]
    fn log_gradient_energy_of_constant_is_zero() {
        let g = Grid::unit_square(8).unwrap();
        assert_eq!(log_gradient_energy(&ScalarField::constant(g, 4.0)), 0.0);
        let n = ScalarField::from_fn(g, |x, _| x);
        assert!(log_gradient_energy(&n) > 0.0);
    }
}
