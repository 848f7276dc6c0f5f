use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use crate::checkpoint;
use crate::diagnostics::{
    check_invariants, f_monotone_after_entry, fit_last_fraction, record, DiagnosticsRecord, FMonotone, InvariantReport,
    RateFit, RunMeta, Tolerances,
};
use crate::error::{Error, Result};
use crate::solver::{Solver, SystemState};

/// Quantities whose exponential decay is fitted at the end of a run.
pub const FITTED: [&str; 6] = ["sup_dev_n", "sup_v_norm", "sup_dev_w", "grad_z_l2", "grad_z_sup", "u_l2"];

/// Fraction of the run used by the rate fits.
pub const FIT_FRACTION: f64 = 0.5;

/// Per-sample slack of the conditional decay check.
pub const F_MONOTONE_SLACK: f64 = 1e-8;

pub const SERIES_FILE: &str = "series.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "final.ckpt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitEntry {
    pub quantity: String,
    pub fit: Option<RateFit>,
    pub error: Option<String>,
}

/// Everything a run produces apart from the CSV series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ScenarioConfig,
    pub meta: RunMeta,
    pub final_t: f64,
    pub steps: u64,
    pub samples: usize,
    pub clamps: u64,
    /// Largest ‖∇·u‖∞ after any step.
    pub max_step_divergence: f64,
    pub fits: Vec<FitEntry>,
    pub invariants: InvariantReport,
    pub f_monotone: FMonotone,
    /// Set when the run stopped on a solver error.
    pub failure: Option<String>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub summary: RunSummary,
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: SystemState,
}

impl RunResult {
    pub fn fit(&self, quantity: &str) -> Option<&RateFit> {
        self.summary
            .fits
            .iter()
            .find(|f| f.quantity == quantity)
            .and_then(|f| f.fit.as_ref())
    }

    pub fn completed(&self) -> bool {
        self.summary.failure.is_none()
    }

    pub fn passed(&self) -> bool {
        self.completed() && self.summary.invariants.all_passed()
    }
}

/// Rate fits on the final part of the series, restricted to positive values.
pub fn fit_series(records: &[DiagnosticsRecord]) -> Vec<FitEntry> {
    FITTED
        .iter()
        .map(|q| {
            let series: Vec<(f64, f64)> = records
                .iter()
                .filter_map(|r| r.get(q).map(|y| (r.t, y)))
                .filter(|(_, y)| *y > 0.0)
                .collect();
            match fit_last_fraction(&series, FIT_FRACTION) {
                Ok(f) => FitEntry { quantity: q.to_string(), fit: Some(f), error: None },
                Err(e) => FitEntry { quantity: q.to_string(), fit: None, error: Some(e.to_string()) },
            }
        })
        .collect()
}

fn as_config_error(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

/// Integrates `config` from its initial data to `t_end`, sampling every
/// `sample_interval`. When `out_dir` is given, writes the series, the
/// summary and the final checkpoint there. Configuration problems are
/// returned as errors; a solver failure ends the run early and is recorded
/// in the summary.
pub fn execute(config: &ScenarioConfig, out_dir: Option<&Path>) -> Result<RunResult> {
    config.validate()?;
    let params = config.model_params().map_err(as_config_error)?;
    let data = config.initial_data().map_err(as_config_error)?;
    let meta = RunMeta::from_initial(&data);
    let mut state = SystemState::new(&data).map_err(as_config_error)?;
    let solver = Solver::new(&params)?;

    let mut records = vec![record(&state, &meta)?];
    let mut failure = None;
    let mut max_div: f64 = 0.0;
    let mut k = 0u64;
    'outer: while state.t < config.t_end {
        k += 1;
        let next = (k as f64 * config.sample_interval).min(config.t_end);
        let snap = 1e-12 * next.max(1.0);
        while next - state.t > snap {
            match solver.step_capped(&state, next - state.t) {
                Ok((s, rep)) => {
                    max_div = max_div.max(rep.div_sup);
                    if rep.clamps > 0 {
                        warn!("t = {:.6}: {} values of v clamped to the floor", s.t, rep.clamps);
                    }
                    state = s;
                }
                Err(e) => {
                    warn!("run stopped at t = {}: {e}", state.t);
                    failure = Some(e.to_string());
                    break 'outer;
                }
            }
        }
        state.t = next;
        match record(&state, &meta) {
            Ok(r) => records.push(r),
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        }
        debug!("t = {next:.4}, steps = {}", state.steps);
    }
    info!("finished at t = {} after {} steps", state.t, state.steps);

    let invariants = check_invariants(&records, &meta, &Tolerances::default());
    let summary = RunSummary {
        config: config.clone(),
        meta,
        final_t: state.t,
        steps: state.steps,
        samples: records.len(),
        clamps: state.clamps,
        max_step_divergence: max_div,
        fits: fit_series(&records),
        invariants,
        f_monotone: f_monotone_after_entry(&records, config.lyapunov_delta, F_MONOTONE_SLACK),
        failure,
        checkpoint: out_dir.map(|d| d.join(CHECKPOINT_FILE)),
    };
    let result = RunResult { summary, records, final_state: state };
    if let Some(dir) = out_dir {
        write_outputs(dir, &result)?;
    }
    Ok(result)
}

/// [`execute`] writing into the configured output directory.
pub fn run(config: &ScenarioConfig) -> Result<RunResult> {
    execute(config, Some(&config.output_path()))
}

pub fn write_series(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != DiagnosticsRecord::COLUMNS {
        return Err(Error::Diagnostic(format!("unexpected columns in {}", path.display())));
    }
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}

fn write_outputs(dir: &Path, result: &RunResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_series(&dir.join(SERIES_FILE), &result.records)?;
    let json = serde_json::to_string_pretty(&result.summary)?;
    fs::write(dir.join(SUMMARY_FILE), json + "\n")?;
    checkpoint::save(&dir.join(CHECKPOINT_FILE), &result.final_state, &result.summary.meta)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(t_end: f64) -> ScenarioConfig {
        ScenarioConfig {
            nx: 12,
            ny: 12,
            t_end,
            sample_interval: 0.05,
            ..Default::default()
        }
    }

    #[test]
    fn zero_horizon_gives_initial_record_only() {
        let r = execute(&small(0.0), None).unwrap();
        assert_eq!(r.records.len(), 1);
        assert_eq!(r.summary.steps, 0);
        assert_eq!(r.records[0].t, 0.0);
    }

    #[test]
    fn samples_land_on_the_interval_grid() {
        let r = execute(&small(0.3), None).unwrap();
        let ts: Vec<f64> = r.records.iter().map(|x| x.t).collect();
        assert_eq!(ts.len(), 7);
        for (k, t) in ts.iter().enumerate() {
            assert!((t - 0.05 * k as f64).abs() < 1e-12);
        }
        assert!(r.passed(), "{:?}", r.summary.invariants);
    }

    #[test]
    fn outputs_are_written_and_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        let c = small(0.2);
        execute(&c, Some(&a)).unwrap();
        execute(&c, Some(&b)).unwrap();
        let sa = fs::read(a.join(SERIES_FILE)).unwrap();
        assert_eq!(sa, fs::read(b.join(SERIES_FILE)).unwrap());
        let recs = read_series(&a.join(SERIES_FILE)).unwrap();
        assert_eq!(recs.len(), 5);
        let ck = checkpoint::load(&a.join(CHECKPOINT_FILE)).unwrap();
        assert!((ck.state.t - 0.2).abs() < 1e-12);
        let s: RunSummary = serde_json::from_slice(&fs::read(a.join(SUMMARY_FILE)).unwrap()).unwrap();
        assert_eq!(s.samples, 5);
    }

    #[test]
    fn invalid_config_is_a_config_error() {
        let c = ScenarioConfig { mass: 0.0, ..small(0.1) };
        assert!(matches!(execute(&c, None), Err(Error::Config(_))));
    }
}
