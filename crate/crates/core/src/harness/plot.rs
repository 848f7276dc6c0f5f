use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::run::{read_series, SERIES_FILE};
use crate::diagnostics::DiagnosticsRecord;
use crate::error::Result;

/// Writes one two-column `<quantity>.dat` file per tracked quantity from a
/// run directory (or its `series.csv`). Files go to `out_dir`, or to
/// `plot/` next to the series. Returns the written paths.
pub fn plot_data(input: &Path, out_dir: Option<&Path>) -> Result<Vec<PathBuf>> {
    let series = if input.is_dir() { input.join(SERIES_FILE) } else { input.to_path_buf() };
    let records = read_series(&series)?;
    let out = match out_dir {
        Some(d) => d.to_path_buf(),
        None => series.parent().unwrap_or(Path::new(".")).join("plot"),
    };
    fs::create_dir_all(&out)?;
    let mut written = Vec::new();
    for col in &DiagnosticsRecord::COLUMNS[1..] {
        let mut text = format!("# t {col}\n");
        for r in &records {
            writeln!(text, "{:e} {:e}", r.t, r.get(col).unwrap_or(f64::NAN)).expect("write to string");
        }
        let path = out.join(format!("{col}.dat"));
        fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}
