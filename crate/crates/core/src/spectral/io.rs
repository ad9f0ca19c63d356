//! Field serialization.
//!
//! Binary layout (little endian):
//!
//! | bytes | content                                  |
//! |-------|------------------------------------------|
//! | 8     | magic `DAFIELD1`                         |
//! | 8     | n (u64)                                  |
//! | 8     | K_max (u64)                              |
//! | 8     | L (f64)                                  |
//! | 8     | component count (u64, always 2)          |
//! | ...   | per component, for ky = −K..K, kx = −K..K: re, im (f64) |

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{SpectralField, SpectralGrid};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DAFIELD1";

pub fn write_field<W: Write>(mut w: W, field: &SpectralField) -> Result<()> {
    let g = field.grid();
    w.write_all(MAGIC)?;
    w.write_all(&(g.n() as u64).to_le_bytes())?;
    w.write_all(&(g.k_max() as u64).to_le_bytes())?;
    w.write_all(&g.length().to_le_bytes())?;
    w.write_all(&2u64.to_le_bytes())?;
    let k = g.k_max();
    for comp in field.components() {
        for ky in -k..=k {
            for kx in -k..=k {
                let z = comp[g.index(kx, ky)];
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_field<R: Read>(mut r: R) -> Result<SpectralField> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Serde("not a field file (bad magic)".into()));
    }
    let n = read_u64(&mut r)? as usize;
    let k_max = read_u64(&mut r)? as i64;
    let length = read_f64(&mut r)?;
    let ncomp = read_u64(&mut r)?;
    if ncomp != 2 {
        return Err(Error::Serde(format!("expected 2 components, found {ncomp}")));
    }
    let grid = SpectralGrid::new(n, length)?;
    if grid.k_max() != k_max {
        return Err(Error::Serde(format!("K_max {k_max} inconsistent with n = {n}")));
    }
    let side = (2 * k_max + 1) as usize;
    let mut data = [Vec::with_capacity(side * side), Vec::with_capacity(side * side)];
    for comp in data.iter_mut() {
        for _ in 0..side * side {
            let re = read_f64(&mut r)?;
            let im = read_f64(&mut r)?;
            comp.push(Complex64::new(re, im));
        }
    }
    Ok(from_truncated(&grid, &data))
}

fn from_truncated(grid: &Arc<SpectralGrid>, data: &[Vec<Complex64>; 2]) -> SpectralField {
    let k = grid.k_max();
    let side = 2 * k + 1;
    SpectralField::from_fn(grid, |kx, ky| {
        let j = ((ky + k) * side + (kx + k)) as usize;
        (data[0][j], data[1][j])
    })
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Lossless JSON form for small fields: coefficients as `[re, im]` pairs in
/// the same order as the binary layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldJson {
    pub n: usize,
    pub k_max: i64,
    pub length: f64,
    pub components: Vec<Vec<[f64; 2]>>,
}

impl FieldJson {
    pub fn from_field(field: &SpectralField) -> Self {
        let g = field.grid();
        let k = g.k_max();
        let components = field
            .components()
            .iter()
            .map(|comp| {
                let mut v = Vec::new();
                for ky in -k..=k {
                    for kx in -k..=k {
                        let z = comp[g.index(kx, ky)];
                        v.push([z.re, z.im]);
                    }
                }
                v
            })
            .collect();
        Self { n: g.n(), k_max: k, length: g.length(), components }
    }

    pub fn to_field(&self) -> Result<SpectralField> {
        let grid = SpectralGrid::new(self.n, self.length)?;
        let side = (2 * grid.k_max() + 1) as usize;
        if self.k_max != grid.k_max() || self.components.len() != 2 || self.components.iter().any(|c| c.len() != side * side) {
            return Err(Error::Serde("field JSON has inconsistent shape".into()));
        }
        let data = [0, 1].map(|c| self.components[c].iter().map(|p| Complex64::new(p[0], p[1])).collect());
        Ok(from_truncated(&grid, &data))
    }
}
