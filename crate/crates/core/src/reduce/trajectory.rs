//! Uniformly sampled multivariate series and their on-disk formats.
//!
//! CSV: header `t,x0,x1,...` then one row per sample.
//! Binary: `u64` dimension, `u64` row count, `f64` dt, `f64` t0, then the
//! samples row-major; everything little-endian.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{OpmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coordinates {
    Physical,
    /// Real and imaginary parts of eigen amplitudes, interleaved.
    EigenSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dim: usize,
    pub t0: f64,
    pub dt: f64,
    pub coords: Coordinates,
    /// Row-major samples, `len() / dim` rows.
    pub data: Vec<f64>,
    pub increments: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn new(dim: usize, t0: f64, dt: f64, coords: Coordinates) -> Self {
        Self { dim, t0, dt, coords, data: Vec::new(), increments: None }
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.data.extend_from_slice(x);
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn component(&self, i: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.data[k * self.dim + i]).collect()
    }

    pub fn last(&self) -> Option<&[f64]> {
        if self.is_empty() {
            None
        } else {
            Some(self.row(self.len() - 1))
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("t");
        for i in 0..self.dim {
            header.push_str(&format!(",x{i}"));
        }
        writeln!(w, "{header}")?;
        for k in 0..self.len() {
            let mut line = format!("{}", self.time(k));
            for v in self.row(k) {
                line.push(',');
                line.push_str(&format!("{v}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&self.t0.to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut b8 = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut b8)?;
            Ok(b8)
        };
        let dim = u64::from_le_bytes(next(&mut r)?) as usize;
        let rows = u64::from_le_bytes(next(&mut r)?) as usize;
        let dt = f64::from_le_bytes(next(&mut r)?);
        let t0 = f64::from_le_bytes(next(&mut r)?);
        let total = dim
            .checked_mul(rows)
            .ok_or_else(|| OpmError::Io("corrupt header".into()))?;
        let mut data = Vec::with_capacity(total);
        for _ in 0..total {
            data.push(f64::from_le_bytes(next(&mut r)?));
        }
        Ok(Self { dim, t0, dt, coords: Coordinates::Physical, data, increments: None })
    }

    pub fn save(&self, path: &Path, binary: bool) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        if binary {
            self.write_binary(f)
        } else {
            self.write_csv(f)
        }
    }
}
