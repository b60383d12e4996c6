//! Binary state snapshots.
//!
//! Layout: magic `CVEF1\n`, little-endian `u32` `Nx, Ny, Nz`, `f64`
//! `Lx, Ly, Lz, t`, then `f64` payload `rho` (N3), `u` (3 x N3,
//! component-major) and `E` (9 x N3, row-major components), every array in
//! sample order `(iz*Ny + iy)*Nx + ix`. Round-trips are bitwise exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{CvefError, Result};
use crate::field::{ScalarField, TensorField, VectorField};
use crate::grid::Grid;
use crate::state::FlowState;

pub const MAGIC: &[u8; 6] = b"CVEF1\n";

fn io_err(path: &Path, source: std::io::Error) -> CvefError {
    CvefError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_f64s(w: &mut impl Write, data: &[f64]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 8);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn write_snapshot(path: &Path, state: &FlowState) -> Result<()> {
    let g = state.grid();
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    (|| -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        for n in [g.nx, g.ny, g.nz] {
            w.write_all(&(n as u32).to_le_bytes())?;
        }
        for l in [g.lx, g.ly, g.lz, state.t] {
            w.write_all(&l.to_le_bytes())?;
        }
        write_f64s(&mut w, &state.rho.data)?;
        for c in 0..3 {
            write_f64s(&mut w, &state.u.comps[c])?;
        }
        for c in 0..9 {
            write_f64s(&mut w, &state.e.comps[c])?;
        }
        w.flush()
    })()
    .map_err(|e| io_err(path, e))
}

fn read_exact_or(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| CvefError::MalformedSnapshot(format!("truncated while reading {what}")))
}

fn read_f64s(r: &mut impl Read, n: usize, what: &str) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    read_exact_or(r, &mut bytes, what)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn read_snapshot(path: &Path) -> Result<FlowState> {
    let mut r = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let mut magic = [0u8; 6];
    read_exact_or(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(CvefError::MalformedSnapshot(format!(
            "bad magic {:?}",
            magic
        )));
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        let mut b = [0u8; 4];
        read_exact_or(&mut r, &mut b, "dimensions")?;
        *d = u32::from_le_bytes(b) as usize;
    }
    let mut header = [0f64; 4];
    for h in header.iter_mut() {
        let mut b = [0u8; 8];
        read_exact_or(&mut r, &mut b, "box header")?;
        *h = f64::from_le_bytes(b);
    }
    let grid = Grid::new(dims, [header[0], header[1], header[2]])
        .map_err(|e| CvefError::MalformedSnapshot(format!("invalid grid header: {e}")))?;
    let n = grid.len();
    let rho = ScalarField {
        grid,
        data: read_f64s(&mut r, n, "rho")?,
    };
    let mut u = VectorField::zeros(grid);
    for c in 0..3 {
        u.comps[c] = read_f64s(&mut r, n, "u")?;
    }
    let mut e = TensorField::zeros(grid);
    for c in 0..9 {
        e.comps[c] = read_f64s(&mut r, n, "E")?;
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|x| io_err(path, x))? != 0 {
        return Err(CvefError::MalformedSnapshot(
            "trailing bytes after payload".into(),
        ));
    }
    Ok(FlowState {
        rho,
        u,
        e,
        t: header[3],
    })
}
