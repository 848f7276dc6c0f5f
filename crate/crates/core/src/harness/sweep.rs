use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::run::{execute, FitEntry, FITTED};
use crate::diagnostics::FMonotone;
use crate::error::{Error, Result};
use crate::exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub mass: f64,
    pub output_dir: Option<PathBuf>,
    pub completed: bool,
    pub invariants_passed: bool,
    pub f_monotone: Option<FMonotone>,
    pub fits: Vec<FitEntry>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub warnings: Vec<String>,
    pub entries: Vec<SweepEntry>,
}

impl SweepReport {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.completed && e.invariants_passed)
    }
}

/// Sorted, deduplicated copy of `masses`; duplicates produce a warning.
pub fn normalize_masses(masses: &[f64]) -> Result<(Vec<f64>, Vec<String>)> {
    if let Some(m) = masses.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
        return Err(Error::Config(format!("sweep masses must be positive, got {m}")));
    }
    let mut out = masses.to_vec();
    out.sort_by(f64::total_cmp);
    let before = out.len();
    out.dedup();
    let mut warnings = Vec::new();
    if out.len() < before {
        let msg = format!("removed {} duplicated mass values", before - out.len());
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok((out, warnings))
}

pub fn mass_dir_name(mass: f64) -> String {
    format!("mass_{mass}")
}

/// Runs `base` once per mass, in parallel across scenarios. Individual
/// failures are recorded and do not stop the sweep. With `out_root` set,
/// each run writes into its own subdirectory and a summary table is added.
pub fn sweep(base: &ScenarioConfig, masses: &[f64], out_root: Option<&Path>) -> Result<SweepReport> {
    base.validate()?;
    let (masses, warnings) = normalize_masses(masses)?;
    let entries = exec::map_tasks(&masses, |_, &mass| {
        let config = ScenarioConfig { mass, ..base.clone() };
        let dir = out_root.map(|r| r.join(mass_dir_name(mass)));
        match execute(&config, dir.as_deref()) {
            Ok(r) => SweepEntry {
                mass,
                output_dir: dir,
                completed: r.completed(),
                invariants_passed: r.summary.invariants.all_passed(),
                f_monotone: Some(r.summary.f_monotone),
                error: r.summary.failure.clone(),
                fits: r.summary.fits,
            },
            Err(e) => SweepEntry {
                mass,
                output_dir: dir,
                completed: false,
                invariants_passed: false,
                f_monotone: None,
                fits: Vec::new(),
                error: Some(e.to_string()),
            },
        }
    });
    let report = SweepReport { warnings, entries };
    if let Some(root) = out_root {
        write_report(root, &report)?;
    }
    Ok(report)
}

fn write_report(root: &Path, report: &SweepReport) -> Result<()> {
    fs::create_dir_all(root)?;
    fs::write(root.join("sweep.json"), serde_json::to_string_pretty(report)? + "\n")?;
    let mut w = csv::Writer::from_path(root.join("sweep.csv"))?;
    let mut header = vec!["mass".to_string(), "completed".into(), "invariants_passed".into(), "f_monotone".into()];
    header.extend(FITTED.iter().map(|q| format!("kappa_{q}")));
    w.write_record(&header)?;
    for e in &report.entries {
        let mut row = vec![
            e.mass.to_string(),
            e.completed.to_string(),
            e.invariants_passed.to_string(),
            e.f_monotone.map(|f| f.monotone.to_string()).unwrap_or_default(),
        ];
        for q in FITTED {
            let k = e.fits.iter().find(|f| f.quantity == q).and_then(|f| f.fit);
            row.push(k.map(|f| f.kappa_hat.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
