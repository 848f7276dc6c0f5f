use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::run::execute;
use crate::checkpoint::{self, Checkpoint, MAGIC};
use crate::error::Result;
use crate::grid::{Grid, MacField, ScalarField};
use crate::model::{validate_initial_data, InitialData};
use crate::oracle::{explicit_dt_limit, explicit_reference_step, homogeneous_closed_form};
use crate::solver::{Solver, SystemState, DIVERGENCE_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckItem {
    fn at_most(name: &str, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: value <= tolerance,
            value,
            tolerance,
            detail: detail.into(),
        }
    }

    fn at_least(name: &str, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            passed: value >= tolerance,
            ..Self::at_most(name, value, tolerance, detail)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub input: String,
    pub checks: Vec<CheckItem>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = format!("check {}\n", self.input);
        for c in &self.checks {
            s += &format!(
                "  [{}] {:<24} {:>12.4e} (limit {:.1e}) {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.tolerance,
                c.detail
            );
        }
        s
    }
}

fn is_checkpoint(path: &Path) -> Result<bool> {
    let mut head = [0u8; 8];
    let mut f = File::open(path)?;
    let n = f.read(&mut head)?;
    Ok(n == 8 && &head == MAGIC)
}

/// Runs the checks appropriate for `path`: state invariants for a
/// checkpoint, oracle cross-validation plus a short run for a config.
pub fn check_path(path: &Path) -> Result<CheckReport> {
    let mut report = if is_checkpoint(path)? {
        check_checkpoint(&checkpoint::load(path)?)
    } else {
        check_config(&ScenarioConfig::load(path)?)?
    };
    report.input = path.display().to_string();
    Ok(report)
}

/// Invariants a stored state must satisfy given its run constants.
pub fn check_checkpoint(ck: &Checkpoint) -> CheckReport {
    let (s, m) = (&ck.state, &ck.meta);
    let mass = s.n.integral();
    let w_bound = m.mass + (-s.t).exp() * m.w0_integral;
    let mean_w = m.n_bar + (m.w0_mean() - m.n_bar) * (-s.t).exp();
    let finite = s.n.is_finite() && s.v.is_finite() && s.w.is_finite() && s.u.is_finite() && s.p.is_finite();
    let checks = vec![
        CheckItem::at_most("finite", if finite { 0.0 } else { 1.0 }, 0.0, "all fields finite"),
        CheckItem::at_most("mass", (mass - m.mass).abs() / m.mass, 1e-10, format!("∫n = {mass:e}, m = {:e}", m.mass)),
        CheckItem::at_most("n_nonnegative", (-s.n.min()).max(0.0), 0.0, "min n ≥ 0"),
        CheckItem::at_least("v_positive", s.v.min(), f64::MIN_POSITIVE, "min v > 0"),
        CheckItem::at_least("w_positive", s.w.min(), f64::MIN_POSITIVE, "min w > 0"),
        CheckItem::at_most("sup_v_bound", s.v.max() - s.v0_sup, 1e-12, "sup v ≤ ‖v₀‖∞"),
        CheckItem::at_most("w_l1_bound", s.w.integral() - w_bound, 1e-8, "∫w ≤ m + e^{−t}∫w₀"),
        CheckItem::at_most("mean_w_law", (s.w.mean() - mean_w).abs(), 1e-6, "mean w = n̄ + (w̄₀ − n̄)e^{−t}"),
        CheckItem::at_most("divergence", s.u.divergence().sup_abs(), DIVERGENCE_TOL, "‖∇·u‖∞"),
    ];
    CheckReport { input: String::new(), checks }
}

fn flat(grid: Grid, n: f64, v: f64, w: f64) -> InitialData {
    InitialData {
        n0: ScalarField::constant(grid, n),
        v0: ScalarField::constant(grid, v),
        w0: ScalarField::constant(grid, w),
        u0: MacField::zeros(grid),
    }
}

fn sup_rel(a: &ScalarField, b: &ScalarField) -> f64 {
    let d = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    d / b.sup_abs().max(f64::MIN_POSITIVE)
}

fn coupled_discrepancy(solver: &Solver, start: &SystemState, dt: f64, steps: usize) -> Result<f64> {
    let (mut a, mut b) = (start.clone(), start.clone());
    for _ in 0..steps {
        a = solver.step_with_dt(&a, dt)?.0;
        b = explicit_reference_step(&b, solver.params(), dt)?;
    }
    Ok(sup_rel(&a.n, &b.n).max(sup_rel(&a.v, &b.v)).max(sup_rel(&a.w, &b.w)))
}

/// Oracle comparisons and a short invariant run for `config`, on reduced
/// grids over the configured domain.
pub fn check_config(config: &ScenarioConfig) -> Result<CheckReport> {
    let mut checks = Vec::new();
    let data = config.initial_data()?;
    let v = validate_initial_data(&data);
    checks.push(CheckItem::at_most(
        "initial_data",
        v.violations.len() as f64,
        0.0,
        v.violations.iter().map(|x| x.condition.clone()).collect::<Vec<_>>().join("; "),
    ));

    let reduced = |n: usize| ScenarioConfig { nx: n, ny: n, fixed_dt: None, ..config.clone() };

    // flat data against the closed form
    let c8 = reduced(8);
    let g8 = c8.grid()?;
    let n_bar = config.mass / g8.area();
    let (w0, v0) = (2.0 * n_bar, config.k_bound);
    let solver = Solver::new(&c8.model_params()?)?;
    let mut s = SystemState::new(&flat(g8, n_bar, v0, w0))?;
    let mut err: f64 = 0.0;
    for k in 1..=1000 {
        s = solver.step_with_dt(&s, 1e-3)?.0;
        let (w, v) = homogeneous_closed_form(n_bar, w0, v0, k as f64 * 1e-3)?;
        err = err.max((s.w.max() - w).abs()).max((s.w.min() - w).abs());
        err = err.max((s.v.max() - v).abs()).max((s.v.min() - v).abs());
    }
    checks.push(CheckItem::at_most("homogeneous_ode", err, 1e-6, "flat data, dt = 1e-3, T = 1"));

    // cell-density transport with a flat signal is pure diffusion
    let c16 = reduced(16);
    let g16 = c16.grid()?;
    let p16 = c16.model_params()?;
    let solver = Solver::new(&p16)?;
    let dt = explicit_dt_limit(&g16);
    let base = SystemState::new(&InitialData {
        n0: c16.initial_data()?.n0,
        ..flat(g16, n_bar, 1.0, n_bar)
    })?;
    let (mut a, mut b) = (base.clone(), base.clone());
    for _ in 0..200 {
        a.n = solver.advance_n(&a, dt)?.0;
        let next = explicit_reference_step(&b, &p16, dt)?;
        b = SystemState { n: next.n, ..base.clone() };
    }
    checks.push(CheckItem::at_most("pure_diffusion_oracle", sup_rel(&a.n, &b.n), 1e-8, "16×16, 200 steps at h²/8"));

    // coupled system: discrepancy shrinks at first order in dt
    let start = SystemState::new(&c16.initial_data()?)?;
    let e1 = coupled_discrepancy(&solver, &start, dt, 50)?;
    let e2 = coupled_discrepancy(&solver, &start, dt / 2.0, 100)?;
    let order = (e1 / e2).log2();
    checks.push(CheckItem::at_least(
        "coupled_oracle_order",
        order,
        0.9,
        format!("16×16, T = 50·h²/8, discrepancies {e1:.3e} → {e2:.3e}"),
    ));

    let short = ScenarioConfig {
        t_end: config.t_end.min(0.5),
        sample_interval: config.sample_interval.min(0.05),
        ..c16
    };
    let r = execute(&short, None)?;
    checks.push(CheckItem::at_most(
        "short_run",
        if r.completed() { 0.0 } else { 1.0 },
        0.0,
        r.summary.failure.clone().unwrap_or_else(|| "16×16 run completed".into()),
    ));
    for c in r.summary.invariants.checks {
        checks.push(CheckItem {
            name: format!("run_{}", c.name),
            passed: c.passed,
            value: c.worst,
            tolerance: c.tolerance,
            detail: format!("worst at t = {}", c.at_t),
        });
    }
    Ok(CheckReport { input: String::new(), checks })
}
