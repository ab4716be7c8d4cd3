//! Values on a square lattice covering a ball, with multilinear lookup.
//!
//! The lattice is `{h·(i - m)}` per axis for `i in 0..=2m` and
//! `m = ceil(radius / h) + 1`, so every query in the closed ball sits inside
//! a full cell. Nodes outside the ball form a halo holding an extension of
//! the boundary values.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::norm;

pub const BINARY_VERSION: u8 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub label: String,
    pub boundary: String,
    pub p: f64,
    pub eps: Option<f64>,
    pub iterations: u64,
    pub residual: f64,
    pub converged: bool,
    /// Gradient regularization of the finite-difference solver.
    pub regularization: Option<f64>,
    #[serde(skip)]
    pub residual_history: Vec<f64>,
    #[serde(skip)]
    pub energy_history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub dim: usize,
    pub spacing: f64,
    pub radius: f64,
    pub half: usize,
    pub values: Vec<f64>,
    pub meta: FieldMeta,
}

impl GridField {
    pub fn new(dim: usize, spacing: f64, radius: f64) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension(
                dim,
                "lattice fields support d = 2 or 3",
            ));
        }
        if !(spacing > 0.0) || !(radius > 0.0) {
            return Err(Error::InvalidConfig(
                "spacing and radius must be positive".into(),
            ));
        }
        let half = (radius / spacing - 1e-9).ceil() as usize + 1;
        let len = (2 * half + 1).pow(dim as u32);
        if len > 200_000_000 {
            return Err(Error::InvalidConfig(format!(
                "lattice with {len} nodes is too large"
            )));
        }
        Ok(Self {
            dim,
            spacing,
            radius,
            half,
            values: vec![0.0; len],
            meta: FieldMeta::default(),
        })
    }

    /// Nodes per axis.
    pub fn side(&self) -> usize {
        2 * self.half + 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Flat-index strides, last axis fastest.
    pub fn strides(&self) -> Vec<usize> {
        let s = self.side();
        (0..self.dim)
            .map(|k| s.pow((self.dim - 1 - k) as u32))
            .collect()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let s = self.side();
        let mut idx = vec![0; self.dim];
        for k in (0..self.dim).rev() {
            idx[k] = flat % s;
            flat /= s;
        }
        idx
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .into_iter()
            .map(|i| (i as f64 - self.half as f64) * self.spacing)
            .collect()
    }

    /// Flat index of the node at lattice offsets `idx` (centered at 0).
    pub fn node(&self, idx: &[i64]) -> Option<usize> {
        let strides = self.strides();
        let mut flat = 0usize;
        for (k, &i) in idx.iter().enumerate() {
            let j = i + self.half as i64;
            if j < 0 || j as usize >= self.side() {
                return None;
            }
            flat += j as usize * strides[k];
        }
        Some(flat)
    }

    pub fn in_ball(&self, flat: usize) -> bool {
        norm(&self.coords(flat)) <= self.radius * (1.0 + 1e-12)
    }

    /// Multilinear interpolation; errors outside the closed ball.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::InvalidConfig(format!(
                "query of dimension {} on a {}-d field",
                x.len(),
                self.dim
            )));
        }
        if !(norm(x) <= self.radius * (1.0 + 1e-12)) {
            return Err(Error::OutsideDomain);
        }
        Ok(self.interpolate(x))
    }

    /// Multilinear interpolation anywhere inside the lattice box.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let strides = self.strides();
        let s = self.side();
        let mut base = 0usize;
        let mut frac = [0.0f64; 3];
        for k in 0..self.dim {
            let mut t = x[k] / self.spacing + self.half as f64;
            if (t - t.round()).abs() < 1e-9 {
                t = t.round();
            }
            let i = (t.floor().max(0.0) as usize).min(s - 2);
            frac[k] = t - i as f64;
            base += i * strides[k];
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << self.dim) {
            let mut w = 1.0;
            let mut off = 0;
            for k in 0..self.dim {
                if corner >> k & 1 == 1 {
                    w *= frac[k];
                    off += strides[k];
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            if w != 0.0 {
                acc += w * self.values[base + off];
            }
        }
        acc
    }

    /// Largest `|self - other|` over lattice nodes of `self` with `|x| <= r`.
    pub fn sup_diff(&self, other: &GridField, r: f64) -> Result<f64> {
        let mut worst = 0.0f64;
        for i in 0..self.len() {
            let x = self.coords(i);
            if norm(&x) <= r {
                worst = worst.max((self.values[i] - other.evaluate(&x)?).abs());
            }
        }
        Ok(worst)
    }

    /// Nodes inside the closed ball as `x_1..x_d,value` rows.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let mut header: Vec<String> = (1..=self.dim).map(|k| format!("x_{k}")).collect();
        header.push("value".into());
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            if !self.in_ball(i) {
                continue;
            }
            let mut row: Vec<String> = self.coords(i).iter().map(|c| format!("{c:.10}")).collect();
            row.push(format!("{:.17e}", self.values[i]));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Version byte, dimension, spacing, radius, half width, bounding box,
    /// value count, then all lattice values row-major, little endian.
    pub fn write_binary(&self, mut out: impl Write) -> Result<()> {
        out.write_all(&[BINARY_VERSION, self.dim as u8])?;
        out.write_all(&self.spacing.to_le_bytes())?;
        out.write_all(&self.radius.to_le_bytes())?;
        out.write_all(&(self.half as u32).to_le_bytes())?;
        let ext = self.half as f64 * self.spacing;
        for _ in 0..self.dim {
            out.write_all(&(-ext).to_le_bytes())?;
            out.write_all(&ext.to_le_bytes())?;
        }
        out.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(mut input: impl Read) -> Result<Self> {
        let mut head = [0u8; 2];
        input.read_exact(&mut head)?;
        if head[0] != BINARY_VERSION {
            return Err(Error::Format(format!("unknown field version {}", head[0])));
        }
        let dim = head[1] as usize;
        let spacing = read_f64(&mut input)?;
        let radius = read_f64(&mut input)?;
        let mut b4 = [0u8; 4];
        input.read_exact(&mut b4)?;
        let half = u32::from_le_bytes(b4) as usize;
        for _ in 0..2 * dim {
            read_f64(&mut input)?;
        }
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        let mut field = GridField::new(dim, spacing, radius)?;
        if field.half != half || field.len() != count {
            return Err(Error::Format("lattice header is inconsistent".into()));
        }
        for v in field.values.iter_mut() {
            *v = read_f64(&mut input)?;
        }
        Ok(field)
    }
}

fn read_f64(input: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn affine_field() -> GridField {
        let mut f = GridField::new(2, 0.1, 1.0).unwrap();
        for i in 0..f.len() {
            let x = f.coords(i);
            f.values[i] = 2.0 * x[0] - x[1] + 0.5;
        }
        f
    }

    #[test]
    fn lattice_layout() {
        let f = GridField::new(2, 0.1, 1.0).unwrap();
        assert_eq!(f.half, 11);
        assert_eq!(f.side(), 23);
        let i = f.node(&[3, -2]).unwrap();
        let x = f.coords(i);
        assert!((x[0] - 0.3).abs() < 1e-12 && (x[1] + 0.2).abs() < 1e-12);
        assert!(f.node(&[12, 0]).is_none());
    }

    #[test]
    fn interpolation_examples() {
        let f = affine_field();
        let i = f.node(&[4, 1]).unwrap();
        assert_eq!(f.evaluate(&f.coords(i)).unwrap(), f.values[i]);
        let a = f.values[f.node(&[2, 3]).unwrap()];
        let b = f.values[f.node(&[3, 3]).unwrap()];
        assert!((f.evaluate(&[0.25, 0.3]).unwrap() - 0.5 * (a + b)).abs() < 1e-12);
        // affine data is reproduced exactly, including on the unit circle
        let t = 0.7f64;
        let x = [t.cos(), t.sin()];
        assert!((f.evaluate(&x).unwrap() - (2.0 * x[0] - x[1] + 0.5)).abs() < 1e-12);
        assert_eq!(f.evaluate(&[1.0, 0.1]), Err(Error::OutsideDomain));
    }

    #[test]
    fn binary_round_trip() {
        let mut f = GridField::new(3, 0.25, 1.0).unwrap();
        for (i, v) in f.values.iter_mut().enumerate() {
            *v = (i as f64).sin();
        }
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(buf[0], BINARY_VERSION);
        let g = GridField::read_binary(buf.as_slice()).unwrap();
        assert_eq!(g.values, f.values);
        buf[0] = 9;
        assert!(matches!(
            GridField::read_binary(buf.as_slice()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn csv_lists_ball_nodes_only() {
        let f = GridField::new(2, 0.5, 1.0).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        // lattice points of spacing 0.5 in the closed unit disc: 13
        assert_eq!(s.lines().count(), 1 + 13);
    }
}
