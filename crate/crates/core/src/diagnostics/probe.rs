use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::entropy;
use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{dirichlet_energy, Grid, ScalarField};

/// One sample `(φ, ψ, a)` of the inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTriple {
    pub phi: ScalarField,
    pub psi: ScalarField,
    pub a: f64,
}

/// Terms of the inequality that do not involve `M`, and the coefficient
/// multiplying `M`.
struct Terms {
    lhs: f64,
    free_rhs: f64,
    m_coeff: f64,
}

fn terms(phi: &ScalarField, psi: &ScalarField, a: f64, eps: f64) -> Result<Terms> {
    if phi.grid() != psi.grid() {
        return Err(Error::Domain("probe fields on different grids".into()));
    }
    if !(phi.min() >= 0.0) || !(phi.max() > 0.0) {
        return Err(Error::Domain("probe weight must be nonnegative and not identically zero".into()));
    }
    if !(a > 0.0 && eps > 0.0) {
        return Err(Error::Domain(format!("probe needs a > 0 and ε > 0, got a = {a}, ε = {eps}")));
    }
    let cell = phi.grid().cell_area();
    let mass = phi.integral();
    let lhs: f64 = phi.values().iter().zip(psi.values()).map(|(p, q)| p * q.abs()).sum::<f64>() * cell;
    let psi_l1 = psi.integral_of(f64::abs);
    let free_rhs = entropy(phi, mass / phi.grid().area()) / a + (1.0 + eps) * a / (8.0 * PI) * mass * dirichlet_energy(psi);
    Ok(Terms {
        lhs,
        free_rhs,
        m_coeff: a * mass * psi_l1 * psi_l1 + mass / a,
    })
}

/// Right-hand side minus left-hand side of the inequality
/// `∫φ|ψ| ≤ (1/a)∫φ ln(φ/φ̄) + (1+ε)a/(8π)·∫φ·∫|∇ψ|² + M a∫φ(∫|ψ|)² + (M/a)∫φ`.
pub fn moser_trudinger_probe(phi: &ScalarField, psi: &ScalarField, a: f64, eps: f64, m: f64) -> Result<f64> {
    let t = terms(phi, psi, a, eps)?;
    Ok(t.free_rhs + m * t.m_coeff - t.lhs)
}

/// Smallest `M ≥ 0` for which the residual of `triple` is nonnegative.
pub fn required_m(triple: &ProbeTriple, eps: f64) -> Result<f64> {
    let t = terms(&triple.phi, &triple.psi, triple.a, eps)?;
    Ok(((t.lhs - t.free_rhs) / t.m_coeff).max(0.0))
}

/// Candidate values `{0} ∪ {10^{k/10} : k = −80, …, 60}`.
pub fn m_search_grid() -> Vec<f64> {
    std::iter::once(0.0).chain((-80..=60).map(|k| 10f64.powf(k as f64 / 10.0))).collect()
}

/// Random field families for calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldFamily {
    /// Smooth random trigonometric fields; `φ` is either a positive
    /// exponential or a clipped field with zero regions.
    Smooth,
    /// Spatially constant `φ` and `ψ`.
    Constants,
}

fn random_smooth(grid: &Grid, rng: &mut ChaCha8Rng, modes: usize) -> impl Fn(f64, f64) -> f64 {
    let (lx, ly) = (grid.lx(), grid.ly());
    let terms: Vec<(f64, f64, f64, f64, f64)> = (0..modes)
        .map(|_| {
            let p = rng.gen_range(0..=4) as f64;
            let q = rng.gen_range(0..=4) as f64;
            let c = rng.gen_range(-1.0..1.0) / (1.0 + p * p + q * q).sqrt();
            (p, q, c, rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI))
        })
        .collect();
    move |x, y| {
        terms
            .iter()
            .map(|(p, q, c, a, b)| c * (p * PI * x / lx + a).cos() * (q * PI * y / ly + b).cos())
            .sum()
    }
}

impl FieldFamily {
    /// Trial `index` of the stream seeded by `seed`. Trials are independent
    /// of how many are drawn, so a larger trial set extends a smaller one.
    pub fn sample(&self, grid: &Grid, seed: u64, index: u64) -> ProbeTriple {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let a = 10f64.powf(rng.gen_range(-3.0..3.0));
        match self {
            FieldFamily::Constants => {
                let c1 = 10f64.powf(rng.gen_range(-2.0..2.0));
                let c2 = rng.gen_range(-10.0..10.0);
                ProbeTriple {
                    phi: ScalarField::constant(*grid, c1),
                    psi: ScalarField::constant(*grid, c2),
                    a,
                }
            }
            FieldFamily::Smooth => {
                let g1 = random_smooth(grid, &mut rng, 6);
                let g2 = random_smooth(grid, &mut rng, 6);
                let scale = rng.gen_range(0.0..4.0);
                let clipped = rng.gen_bool(0.3);
                let amp = 10f64.powf(rng.gen_range(-2.0..2.0));
                let offset = rng.gen_range(-1.0..1.0) * amp;
                let mut phi = if clipped {
                    ScalarField::from_fn(*grid, |x, y| g1(x, y).max(0.0))
                } else {
                    ScalarField::from_fn(*grid, |x, y| (scale * g1(x, y)).exp())
                };
                if !(phi.max() > 0.0) {
                    phi = ScalarField::from_fn(*grid, |x, y| (-g1(x, y)).max(0.0) + 1e-3);
                }
                ProbeTriple {
                    phi,
                    psi: ScalarField::from_fn(*grid, |x, y| amp * g2(x, y) + offset),
                    a,
                }
            }
        }
    }
}

/// Smallest search-grid value of `M` that makes every residual of `triples`
/// nonnegative.
pub fn calibrate_m_on(triples: &[ProbeTriple], eps: f64) -> Result<f64> {
    let reqs = exec::map_tasks(triples, |_, t| required_m(t, eps));
    let mut sup: f64 = 0.0;
    for r in reqs {
        sup = sup.max(r?);
    }
    m_search_grid()
        .into_iter()
        .find(|m| *m >= sup)
        .ok_or_else(|| Error::Calibration(format!("required M = {sup:e} exceeds the search range")))
}

/// Empirical lower estimate of the inequality constant from `trials` random
/// triples of `family`.
pub fn calibrate_m(grid: &Grid, eps: f64, family: FieldFamily, trials: usize, seed: u64) -> Result<f64> {
    if trials < 100 {
        return Err(Error::Calibration(format!("need at least 100 trials, got {trials}")));
    }
    let idx: Vec<u64> = (0..trials as u64).collect();
    let triples = exec::map_tasks(&idx, |_, &k| family.sample(grid, seed, k));
    calibrate_m_on(&triples, eps)
}
