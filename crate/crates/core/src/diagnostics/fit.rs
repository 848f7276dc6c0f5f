use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares fit of `ln y = intercept − κ̂·t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub kappa_hat: f64,
    pub intercept: f64,
    pub t_a: f64,
    pub t_b: f64,
    pub r_squared: f64,
    pub samples: usize,
}

impl RateFit {
    pub const MIN_SAMPLES: usize = 10;
    pub const RELIABLE_R2: f64 = 0.99;

    pub fn reliable(&self) -> bool {
        self.r_squared >= Self::RELIABLE_R2
    }
}

/// Fits the samples with `t ∈ [t_a, t_b]`.
pub fn fit_decay_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    let (t_a, t_b) = window;
    if !(t_a < t_b) {
        return Err(Error::Fit(format!("empty window [{t_a}, {t_b}]")));
    }
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|(t, _)| *t >= t_a && *t <= t_b).collect();
    if pts.len() < RateFit::MIN_SAMPLES {
        return Err(Error::Fit(format!(
            "{} samples in [{t_a}, {t_b}], need {}",
            pts.len(),
            RateFit::MIN_SAMPLES
        )));
    }
    if let Some((t, y)) = pts.iter().find(|(_, y)| !(*y > 0.0) || !y.is_finite()) {
        return Err(Error::Fit(format!("nonpositive value {y:e} at t = {t}")));
    }
    let k = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let lm = pts.iter().map(|p| p.1.ln()).sum::<f64>() / k;
    let (mut stt, mut stl, mut sll) = (0.0, 0.0, 0.0);
    for (t, y) in &pts {
        let (dt, dl) = (t - tm, y.ln() - lm);
        stt += dt * dt;
        stl += dt * dl;
        sll += dl * dl;
    }
    if stt == 0.0 {
        return Err(Error::Fit("all samples share one time".into()));
    }
    let slope = stl / stt;
    let intercept = lm - slope * tm;
    let ss_res: f64 = pts.iter().map(|(t, y)| (y.ln() - intercept - slope * t).powi(2)).sum();
    let r_squared = if sll <= 1e-28 * k * (1.0 + lm * lm) { 1.0 } else { (1.0 - ss_res / sll).clamp(0.0, 1.0) };
    Ok(RateFit {
        kappa_hat: -slope,
        intercept,
        t_a,
        t_b,
        r_squared,
        samples: pts.len(),
    })
}

/// Fit over the final `fraction` of the sampled time span.
pub fn fit_last_fraction(series: &[(f64, f64)], fraction: f64) -> Result<RateFit> {
    let (Some(first), Some(last)) = (series.first(), series.last()) else {
        return Err(Error::Fit("empty series".into()));
    };
    let t_b = last.0;
    let t_a = t_b - fraction * (t_b - first.0);
    fit_decay_rate(series, (t_a, t_b))
}
