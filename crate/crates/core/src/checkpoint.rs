//! Binary snapshot of a run.
//!
//! Little-endian layout:
//!
//! ```text
//! magic     8 bytes  "CHEMOCKP"
//! version   u32      1
//! fields    u32      number of field blocks
//! nx, ny    u64
//! lx, ly, t, v0_sup, mass, w0_integral, z0_integral   f64
//! steps, clamps                                       u64
//! per field: name (8 bytes, NUL padded), rows u64, cols u64, rows·cols f64 row-major
//! ```
//!
//! Fields are `n`, `v`, `w`, `p` (ny × nx), `ux` (ny × (nx+1)) and `uy`
//! ((ny+1) × nx).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::diagnostics::RunMeta;
use crate::error::{Error, Result};
use crate::grid::{Grid, MacField, ScalarField};
use crate::solver::SystemState;

pub const MAGIC: &[u8; 8] = b"CHEMOCKP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: SystemState,
    pub meta: RunMeta,
}

fn put_u32(out: &mut impl Write, x: u32) -> Result<()> {
    Ok(out.write_all(&x.to_le_bytes())?)
}
fn put_u64(out: &mut impl Write, x: u64) -> Result<()> {
    Ok(out.write_all(&x.to_le_bytes())?)
}
fn put_f64(out: &mut impl Write, x: f64) -> Result<()> {
    Ok(out.write_all(&x.to_le_bytes())?)
}

fn get<const N: usize>(inp: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    inp.read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
    Ok(b)
}
fn get_u32(inp: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(get(inp)?))
}
fn get_u64(inp: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(get(inp)?))
}
fn get_f64(inp: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(get(inp)?))
}

fn put_field(out: &mut impl Write, name: &str, rows: usize, cols: usize, data: &[f64]) -> Result<()> {
    let mut tag = [0u8; 8];
    tag[..name.len()].copy_from_slice(name.as_bytes());
    out.write_all(&tag)?;
    put_u64(out, rows as u64)?;
    put_u64(out, cols as u64)?;
    for x in data {
        put_f64(out, *x)?;
    }
    Ok(())
}

/// Serializes `state` and the run constants to `out`.
pub fn write_to(out: &mut impl Write, state: &SystemState, meta: &RunMeta) -> Result<()> {
    let g = state.grid();
    let (nx, ny) = (g.nx(), g.ny());
    out.write_all(MAGIC)?;
    put_u32(out, VERSION)?;
    put_u32(out, 6)?;
    put_u64(out, nx as u64)?;
    put_u64(out, ny as u64)?;
    for x in [g.lx(), g.ly(), state.t, state.v0_sup, meta.mass, meta.w0_integral, meta.z0_integral] {
        put_f64(out, x)?;
    }
    put_u64(out, state.steps)?;
    put_u64(out, state.clamps)?;
    put_field(out, "n", ny, nx, state.n.values())?;
    put_field(out, "v", ny, nx, state.v.values())?;
    put_field(out, "w", ny, nx, state.w.values())?;
    put_field(out, "ux", ny, nx + 1, &state.u.ux)?;
    put_field(out, "uy", ny + 1, nx, &state.u.uy)?;
    put_field(out, "p", ny, nx, state.p.values())?;
    Ok(())
}

/// Reads a checkpoint written by [`write_to`].
pub fn read_from(inp: &mut impl Read) -> Result<Checkpoint> {
    if &get::<8>(inp)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = get_u32(inp)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = get_u32(inp)?;
    let nx = get_u64(inp)? as usize;
    let ny = get_u64(inp)? as usize;
    let mut h = [0.0; 7];
    for x in h.iter_mut() {
        *x = get_f64(inp)?;
    }
    let [lx, ly, t, v0_sup, mass, w0_integral, z0_integral] = h;
    let steps = get_u64(inp)?;
    let clamps = get_u64(inp)?;
    let grid = Grid::new(nx, ny, lx, ly).map_err(|e| Error::Checkpoint(format!("bad grid: {e}")))?;

    let mut fields: Vec<(String, Vec<f64>)> = Vec::new();
    for _ in 0..count {
        let tag = get::<8>(inp)?;
        let name = String::from_utf8_lossy(&tag).trim_end_matches('\0').to_string();
        let rows = get_u64(inp)? as usize;
        let cols = get_u64(inp)? as usize;
        let expect = match name.as_str() {
            "n" | "v" | "w" | "p" => (ny, nx),
            "ux" => (ny, nx + 1),
            "uy" => (ny + 1, nx),
            _ => return Err(Error::Checkpoint(format!("unknown field {name:?}"))),
        };
        if (rows, cols) != expect {
            return Err(Error::Checkpoint(format!("field {name} has shape {rows}×{cols}, expected {expect:?}")));
        }
        let mut data = vec![0.0; rows * cols];
        for x in data.iter_mut() {
            *x = get_f64(inp)?;
        }
        fields.push((name, data));
    }
    let mut take = |name: &str| -> Result<Vec<f64>> {
        let k = fields
            .iter()
            .position(|f| f.0 == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing field {name}")))?;
        Ok(fields.swap_remove(k).1)
    };
    let scalar = |d: Vec<f64>| ScalarField::from_vec(grid, d);
    let n = scalar(take("n")?)?;
    let v = scalar(take("v")?)?;
    let w = scalar(take("w")?)?;
    let p = scalar(take("p")?)?;
    let u = MacField::from_parts(grid, take("ux")?, take("uy")?)?;

    let mut state = SystemState::new_restored(t, n, v, w, u, p, v0_sup);
    state.steps = steps;
    state.clamps = clamps;
    let meta = RunMeta {
        mass,
        area: grid.area(),
        n_bar: mass / grid.area(),
        v0_sup,
        w0_integral,
        z0_integral,
    };
    Ok(Checkpoint { state, meta })
}

pub fn save(path: &Path, state: &SystemState, meta: &RunMeta) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_to(&mut out, state, meta)?;
    out.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    read_from(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_scenario;

    fn sample() -> (SystemState, RunMeta) {
        let g = Grid::new(7, 5, 1.5, 1.0).unwrap();
        let data = make_scenario("vortex", &g, 0.3, 1.0).unwrap();
        let mut s = SystemState::new(&data).unwrap();
        s.t = 2.5;
        s.steps = 17;
        s.p = ScalarField::from_fn(g, |x, y| x - y);
        (s, RunMeta::from_initial(&data))
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let (s, m) = sample();
        let mut buf = Vec::new();
        write_to(&mut buf, &s, &m).unwrap();
        let c = read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(c.meta, m);
        assert_eq!(c.state.n, s.n);
        assert_eq!(c.state.u, s.u);
        assert_eq!(c.state.p, s.p);
        assert_eq!((c.state.t, c.state.steps, c.state.v0_sup), (2.5, 17, s.v0_sup));
    }

    #[test]
    fn file_roundtrip() {
        let (s, m) = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ckpt");
        save(&path, &s, &m).unwrap();
        assert_eq!(load(&path).unwrap().state.w, s.w);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let (s, m) = sample();
        let mut buf = Vec::new();
        write_to(&mut buf, &s, &m).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_from(&mut bad.as_slice()), Err(Error::Checkpoint(_))));
        let short = &buf[..buf.len() - 3];
        assert!(matches!(read_from(&mut &short[..]), Err(Error::Checkpoint(_))));
        let mut wrong_version = buf.clone();
        wrong_version[8] = 9;
        assert!(read_from(&mut wrong_version.as_slice()).is_err());
    }
}
