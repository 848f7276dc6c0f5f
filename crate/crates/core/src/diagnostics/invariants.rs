use serde::{Deserialize, Serialize};

use super::{DiagnosticsRecord, RunMeta};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative drift of ∫n.
    pub mass_rel: f64,
    /// Slack on `sup v ≤ ‖v₀‖∞` and on its monotonicity.
    pub sup_v: f64,
    pub w_l1: f64,
    pub mean_w: f64,
    /// Relative mismatch between `F` and the sum of its parts.
    pub f_additivity: f64,
    pub divergence: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            mass_rel: 1e-10,
            sup_v: 1e-12,
            w_l1: 1e-8,
            mean_w: 1e-6,
            f_additivity: 1e-12,
            divergence: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    /// Sample time of the worst value.
    pub at_t: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub checks: Vec<InvariantCheck>,
}

impl InvariantReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&InvariantCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn worst_of(records: &[DiagnosticsRecord], f: impl Fn(usize, &DiagnosticsRecord) -> f64) -> (f64, f64) {
    let (worst, at) = records
        .iter()
        .enumerate()
        .map(|(k, r)| (f(k, r), r.t))
        .fold((f64::NEG_INFINITY, f64::NAN), |a, b| if b.0 > a.0 || b.0.is_nan() { b } else { a });
    if worst == f64::NEG_INFINITY {
        (0.0, records.first().map_or(0.0, |r| r.t))
    } else {
        (worst, at)
    }
}

/// Evaluates the conservation laws and a-priori bounds on a sampled run.
pub fn check_invariants(records: &[DiagnosticsRecord], meta: &RunMeta, tol: &Tolerances) -> InvariantReport {
    let mut checks = Vec::new();
    if records.is_empty() {
        return InvariantReport { checks };
    }
    let mut push = |name: &str, (worst, at_t): (f64, f64), tolerance: f64| {
        checks.push(InvariantCheck {
            name: name.into(),
            passed: worst <= tolerance,
            worst,
            at_t,
            tolerance,
        })
    };
    let m = meta.mass;
    push("mass", worst_of(records, |_, r| (r.mass_n - m).abs() / m), tol.mass_rel);
    push("sup_v_bound", worst_of(records, |_, r| r.sup_v - meta.v0_sup), tol.sup_v);
    push(
        "sup_v_monotone",
        worst_of(records, |k, r| if k == 0 { f64::NEG_INFINITY } else { r.sup_v - records[k - 1].sup_v }),
        tol.sup_v,
    );
    push(
        "w_l1_bound",
        worst_of(records, |_, r| r.l1_w - (m + (-r.t).exp() * meta.w0_integral)),
        tol.w_l1,
    );
    let (nb, w0) = (meta.n_bar, meta.w0_mean());
    push(
        "mean_w_law",
        worst_of(records, |_, r| (r.mean_w - (nb + (w0 - nb) * (-r.t).exp())).abs()),
        tol.mean_w,
    );
    push(
        "f_additivity",
        worst_of(records, |_, r| {
            let s = r.components().total();
            (r.f_value - s).abs() / r.f_value.abs().max(f64::MIN_POSITIVE)
        }),
        tol.f_additivity,
    );
    push("divergence", worst_of(records, |_, r| r.div_u_sup), tol.divergence);
    push("clamps", worst_of(records, |_, r| r.clamp_count as f64), 0.0);
    InvariantReport { checks }
}

/// Outcome of the conditional-decay check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FMonotone {
    pub delta: f64,
    /// First sample time with `F ≤ δ`.
    pub entry_t: Option<f64>,
    pub monotone: bool,
    /// Largest `F_{k+1} − F_k` after entry.
    pub worst_increase: f64,
    pub violations: usize,
}

/// After the first sample with `F ≤ δ`, requires `F_{k+1} ≤ F_k + slack`.
/// A run that never enters reports `monotone = true` with no entry time.
pub fn f_monotone_after_entry(records: &[DiagnosticsRecord], delta: f64, slack: f64) -> FMonotone {
    let entry = records.iter().position(|r| r.f_value <= delta);
    let mut out = FMonotone {
        delta,
        entry_t: entry.map(|k| records[k].t),
        monotone: true,
        worst_increase: f64::NEG_INFINITY,
        violations: 0,
    };
    if let Some(k0) = entry {
        for w in records[k0..].windows(2) {
            let inc = w[1].f_value - w[0].f_value;
            out.worst_increase = out.worst_increase.max(inc);
            if inc > slack {
                out.violations += 1;
                out.monotone = false;
            }
        }
    }
    if out.worst_increase == f64::NEG_INFINITY {
        out.worst_increase = 0.0;
    }
    out
}

/// Time averages over `[t1, t2]` and their a-priori bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalAverages {
    pub t1: f64,
    pub t2: f64,
    pub c0: f64,
    pub c1: f64,
    /// Average of ∫|∇z|².
    pub grad_z_sq: f64,
    pub grad_z_sq_bound: f64,
    /// Average of ∫|∇n|²/(n+1)².
    pub grad_n_log_sq: f64,
    pub grad_n_log_sq_bound: f64,
    /// Average of ∫n ln(n/n̄₀).
    pub entropy: f64,
    /// Present when the inequality constant `M` is supplied.
    pub entropy_bound: Option<f64>,
    pub warnings: Vec<String>,
}

impl TemporalAverages {
    pub fn violations(&self) -> usize {
        let mut k = 0;
        if self.grad_z_sq > self.grad_z_sq_bound {
            k += 1;
        }
        if self.grad_n_log_sq > self.grad_n_log_sq_bound {
            k += 1;
        }
        if let Some(b) = self.entropy_bound {
            if self.entropy > b {
                k += 1;
            }
        }
        k
    }
}

/// Trapezoidal average of `f` over `[t1, t2]` with linear interpolation at
/// the window ends.
fn window_average(records: &[DiagnosticsRecord], t1: f64, t2: f64, f: impl Fn(&DiagnosticsRecord) -> f64) -> f64 {
    let interp = |t: f64| -> f64 {
        let k = records.partition_point(|r| r.t < t);
        if k == 0 {
            return f(&records[0]);
        }
        if k >= records.len() {
            return f(&records[records.len() - 1]);
        }
        let (a, b) = (&records[k - 1], &records[k]);
        let s = (t - a.t) / (b.t - a.t);
        f(a) + s * (f(b) - f(a))
    };
    let mut pts = vec![(t1, interp(t1))];
    pts.extend(records.iter().filter(|r| r.t > t1 && r.t < t2).map(|r| (r.t, f(r))));
    pts.push((t2, interp(t2)));
    let integral: f64 = pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
    integral / (t2 - t1)
}

/// Averages of the dissipated quantities over `[t1, t2]` against their
/// bounds. `s0_k` is `S₀(K)`; `m_const`, if given, is the inequality
/// constant used by the entropy bound.
pub fn temporal_average_report(
    records: &[DiagnosticsRecord],
    meta: &RunMeta,
    t1: f64,
    t2: f64,
    s0_k: f64,
    m_const: Option<f64>,
) -> Result<TemporalAverages> {
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return Err(Error::Diagnostic("empty record series".into()));
    };
    if !(t1 >= 0.0 && t1 < t2 && t1 >= first.t && t2 <= last.t + 1e-12) {
        return Err(Error::Diagnostic(format!(
            "averaging window [{t1}, {t2}] outside the series [{}, {}]",
            first.t, last.t
        )));
    }
    let mut warnings = Vec::new();
    let inside: Vec<f64> = records.iter().map(|r| r.t).filter(|t| *t >= t1 && *t <= t2).collect();
    let gap = inside.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if inside.len() < 10 || gap > 0.1 * (t2 - t1) {
        warnings.push(format!(
            "sparse sampling: {} samples in window, largest gap {gap}",
            inside.len()
        ));
    }
    let (m, span, w0) = (meta.mass, t2 - t1, meta.w0_integral);
    let (c0, c1) = (meta.c0(), meta.c1(s0_k));
    let s2 = s0_k * s0_k;
    let decay = (-t1).exp();
    let pi = std::f64::consts::PI;
    let entropy_bound = m_const.map(|mm| {
        let ln_plus = (meta.area / m).ln().max(0.0);
        m / pi * c1 * (1.0 + t1) / span
            + (4.0 * mm * m * m + mm) * m
            + (m * m / pi + m * w0 / pi * decay) * s2
            + 2.0 * m * ln_plus
    });
    Ok(TemporalAverages {
        t1,
        t2,
        c0,
        c1,
        grad_z_sq: window_average(records, t1, t2, |r| 2.0 * r.f_grad_z),
        grad_z_sq_bound: c0 * (t1 + 1.0) / span + m + decay * w0,
        grad_n_log_sq: window_average(records, t1, t2, |r| r.grad_n_log_sq),
        grad_n_log_sq_bound: c1 * (t1 + 1.0) / span + m * s2 + s2 * decay * w0,
        entropy: window_average(records, t1, t2, |r| r.f_entropy),
        entropy_bound,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn meta() -> RunMeta {
        RunMeta {
            mass: 0.1,
            area: 1.0,
            n_bar: 0.1,
            v0_sup: 1.0,
            w0_integral: 0.1,
            z0_integral: 0.0,
        }
    }

    fn homogeneous(t: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t,
            mass_n: 0.1,
            sup_v: (-0.1 * t).exp(),
            l1_w: 0.1,
            mean_w: 0.1,
            f_value: 0.0,
            f_entropy: 0.0,
            f_grad_z: 0.0,
            f_w_variance: 0.0,
            f_kinetic: 0.0,
            sup_dev_n: 0.0,
            sup_v_norm: (-0.1 * t).exp(),
            sup_dev_w: 0.0,
            grad_z_l2: 0.0,
            grad_z_l4: 0.0,
            grad_z_sup: 0.0,
            u_l2: 0.0,
            grad_u_l2: 0.0,
            div_u_sup: 0.0,
            clamp_count: 0,
            grad_n_log_sq: 0.0,
        }
    }

    fn series() -> Vec<DiagnosticsRecord> {
        (0..=100).map(|k| homogeneous(k as f64 * 0.1)).collect()
    }

    #[test]
    fn homogeneous_series_passes() {
        let r = check_invariants(&series(), &meta(), &Tolerances::default());
        assert!(r.all_passed(), "{r:?}");
        assert_eq!(r.checks.len(), 8);
    }

    #[test]
    fn injected_mass_drift_is_reported() {
        let mut s = series();
        s[40].mass_n = 0.1 * (1.0 + 1e-3);
        let r = check_invariants(&s, &meta(), &Tolerances::default());
        let c = r.get("mass").unwrap();
        assert!(!c.passed);
        assert_relative_eq!(c.worst, 1e-3, max_relative = 1e-9);
        assert_relative_eq!(c.at_t, 4.0);
        assert!(r.get("sup_v_bound").unwrap().passed);
    }

    #[test]
    fn increasing_sup_v_is_reported() {
        let mut s = series();
        s[10].sup_v = s[9].sup_v + 1e-9;
        let r = check_invariants(&s, &meta(), &Tolerances::default());
        assert!(!r.get("sup_v_monotone").unwrap().passed);
    }

    #[test]
    fn monotone_after_entry() {
        let mut s = series();
        let f = [0.5, 0.7, 0.3, 0.009, 0.008, 0.0081, 0.007];
        for (k, v) in f.iter().enumerate() {
            s[k].f_value = *v;
        }
        s.truncate(f.len());
        let m = f_monotone_after_entry(&s, 0.01, 1e-8);
        assert_eq!(m.entry_t, Some(0.30000000000000004));
        assert!(!m.monotone);
        assert_eq!(m.violations, 1);
        let m = f_monotone_after_entry(&s, 0.01, 2e-4);
        assert!(m.monotone);
        let m = f_monotone_after_entry(&s, 1e-6, 1e-8);
        assert!(m.entry_t.is_none() && m.monotone);
    }

    #[test]
    fn homogeneous_averages_vanish() {
        let a = temporal_average_report(&series(), &meta(), 2.0, 9.0, 1.0, Some(1.0)).unwrap();
        assert_eq!(a.grad_z_sq, 0.0);
        assert_eq!(a.grad_n_log_sq, 0.0);
        assert_eq!(a.entropy, 0.0);
        assert_eq!(a.violations(), 0);
        assert_relative_eq!(a.c0, 0.2);
        assert_relative_eq!(a.grad_z_sq_bound, 0.2 * 3.0 / 7.0 + 0.1 + (-2.0f64).exp() * 0.1);
        assert!(a.warnings.is_empty());
    }

    #[test]
    fn average_of_linear_quantity_is_exact() {
        let mut s = series();
        for r in s.iter_mut() {
            r.f_grad_z = 0.5 * r.t;
        }
        let a = temporal_average_report(&s, &meta(), 1.05, 3.0, 1.0, None).unwrap();
        assert_relative_eq!(a.grad_z_sq, 0.5 * (1.05 + 3.0), max_relative = 1e-12);
    }

    #[test]
    fn window_checks() {
        assert!(temporal_average_report(&series(), &meta(), 3.0, 2.0, 1.0, None).is_err());
        assert!(temporal_average_report(&series(), &meta(), 0.0, 50.0, 1.0, None).is_err());
        let sparse: Vec<_> = series().into_iter().step_by(25).collect();
        let a = temporal_average_report(&sparse, &meta(), 0.0, 10.0, 1.0, None).unwrap();
        assert!(!a.warnings.is_empty());
    }
}
