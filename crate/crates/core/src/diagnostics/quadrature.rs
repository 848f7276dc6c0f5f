use serde::{Deserialize, Serialize};

use super::fit::{fit_decay_rate, RateFit};
use crate::error::{Error, Result};
use crate::exec;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let s = f(c - h * XGK[i]) + f(c + h * XGK[i]);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive 7/15-point Gauss–Kronrod quadrature of `f` over `[a, b]` to
/// `max(abs_tol, rel_tol·|I|)`. Returns the value and the error estimate.
pub fn gauss_kronrod(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    let mut parts = vec![(a, b, gk15(&f, a, b))];
    for _ in 0..5000 {
        let (total, err): (f64, f64) = parts.iter().fold((0.0, 0.0), |s, p| (s.0 + p.2 .0, s.1 + p.2 .1));
        if !total.is_finite() {
            return Err(Error::Quadrature("non-finite integrand".into()));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok((total, err));
        }
        let (k, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .expect("nonempty");
        let (lo, hi, _) = parts.swap_remove(k);
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            return Err(Error::Quadrature(format!("interval [{lo:e}, {hi:e}] cannot be refined further")));
        }
        parts.push((lo, mid, gk15(&f, lo, mid)));
        parts.push((mid, hi, gk15(&f, mid, hi)));
    }
    Err(Error::Quadrature("subdivision limit reached".into()))
}

/// `∫_0^{T} (1 + r^{−κ}) g(r) dr` with the singular weight removed by
/// `r = ρ^p`, `p = 1/(1−κ)`, when `κ > 0`.
fn singular_part(kappa: f64, t_end: f64, g: impl Fn(f64) -> f64) -> Result<f64> {
    if kappa > 0.0 {
        let p = 1.0 / (1.0 - kappa);
        let top = t_end.powf(1.0 / p);
        // (1 + r^{−κ})·p ρ^{p−1} = p(ρ^{p−1} + 1)
        let f = |rho: f64| p * (rho.powf(p - 1.0) + 1.0) * g(rho.powf(p));
        Ok(gauss_kronrod(f, 0.0, top, 1e-300, 1e-12)?.0)
    } else {
        let f = |r: f64| (1.0 + r.powf(-kappa)) * g(r);
        Ok(gauss_kronrod(f, 0.0, t_end, 1e-300, 1e-12)?.0)
    }
}

fn check_exponents(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<()> {
    if !(alpha < 1.0 && beta < 1.0 && gamma > 0.0 && delta > 0.0) || gamma == delta {
        return Err(Error::Quadrature(format!(
            "need α < 1, β < 1, γ, δ > 0 and γ ≠ δ (got {alpha}, {beta}, {gamma}, {delta})"
        )));
    }
    Ok(())
}

/// `∫₀ᵗ (1+(t−s)^{−α})e^{−γ(t−s)}(1+s^{−β})e^{−δs} ds`.
pub fn convolution_lhs(alpha: f64, beta: f64, gamma: f64, delta: f64, t: f64) -> Result<f64> {
    check_exponents(alpha, beta, gamma, delta)?;
    if !(t > 0.0) {
        return Err(Error::Quadrature(format!("t must be positive, got {t}")));
    }
    let half = 0.5 * t;
    let kernel = |tau: f64| (1.0 + tau.powf(-alpha)) * (-gamma * tau).exp();
    let source = |s: f64| (1.0 + s.powf(-beta)) * (-delta * s).exp();
    // s ∈ [0, t/2]: singular in s
    let near_zero = singular_part(beta, half, |s| kernel(t - s) * (-delta * s).exp())?;
    // s ∈ [t/2, t]: singular in τ = t − s
    let near_t = singular_part(alpha, half, |tau| (-gamma * tau).exp() * source(t - tau))?;
    Ok(near_zero + near_t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionCheck {
    pub ts: Vec<f64>,
    pub lhs: Vec<f64>,
    /// `C_hat·(1+t^{min(0,1−α−β)})e^{−min(γ,δ)t}`.
    pub bound: Vec<f64>,
    pub c_hat: f64,
    /// Log-linear fit of `lhs` on `[10, 20]`.
    pub rate: RateFit,
    pub expected_rate: f64,
}

/// Integrates the convolution at `t = 0.05, 0.10, …, 20` and reports the
/// smallest constant that makes the bound hold at every sample.
pub fn convolution_bound_check(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<ConvolutionCheck> {
    check_exponents(alpha, beta, gamma, delta)?;
    let ts: Vec<f64> = (1..=400).map(|k| k as f64 * 0.05).collect();
    let lhs: Result<Vec<f64>> = exec::map_tasks(&ts, |_, &t| convolution_lhs(alpha, beta, gamma, delta, t))
        .into_iter()
        .collect();
    let lhs = lhs?;
    let expo = (1.0 - alpha - beta).min(0.0);
    let rate = gamma.min(delta);
    let shape: Vec<f64> = ts.iter().map(|t| (1.0 + t.powf(expo)) * (-rate * t).exp()).collect();
    let c_hat = lhs.iter().zip(&shape).map(|(l, s)| l / s).fold(0.0, f64::max);
    if !c_hat.is_finite() {
        return Err(Error::Quadrature("no finite bounding constant".into()));
    }
    let series: Vec<(f64, f64)> = ts.iter().copied().zip(lhs.iter().copied()).collect();
    Ok(ConvolutionCheck {
        bound: shape.iter().map(|s| c_hat * s).collect(),
        rate: fit_decay_rate(&series, (10.0, 20.0))?,
        ts,
        lhs,
        c_hat,
        expected_rate: rate,
    })
}
