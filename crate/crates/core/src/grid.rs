//! Tensor grids on the cylinder `[0, A] x T^2` and scalar fields on them.
//!
//! Nodes are `(i, j, k)` with `i = 0..=n1` (Dirichlet ends at `i = 0` and
//! `i = n1`) and periodic `j = 0..n2`, `k = 0..n3`. Fields serialize to a
//! flat little-endian f64 binary in row-major `(i, j, k)` order with a JSON
//! sidecar, or to `i,j,k,value` CSV.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curve::TWO_PI;
use crate::error::GeometryError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid3 {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub a_length: f64,
}

impl Grid3 {
    pub fn new(n1: usize, n2: usize, n3: usize, a_length: f64) -> Self {
        assert!(n1 >= 8 && n2 >= 8 && n3 >= 8, "grid must be at least 8 per axis");
        Grid3 { n1, n2, n3, a_length }
    }

    pub fn cubic(n: usize, a_length: f64) -> Self {
        Self::new(n, n, n, a_length)
    }

    pub fn spacing(&self) -> [f64; 3] {
        [
            self.a_length / self.n1 as f64,
            TWO_PI / self.n2 as f64,
            TWO_PI / self.n3 as f64,
        ]
    }

    pub fn len(&self) -> usize {
        (self.n1 + 1) * self.n2 * self.n3
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n2 + j) * self.n3 + k
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let h = self.spacing();
        [i as f64 * h[0], j as f64 * h[1], k as f64 * h[2]]
    }

    /// number of nodes on one boundary torus
    pub fn boundary_len(&self) -> usize {
        self.n2 * self.n3
    }

    pub fn bidx(&self, j: usize, k: usize) -> usize {
        j * self.n3 + k
    }
}

#[derive(Debug, Clone)]
pub struct ScalarField3 {
    pub grid: Grid3,
    pub values: Vec<f64>,
}

impl ScalarField3 {
    pub fn zeros(grid: Grid3) -> Self {
        ScalarField3 { values: vec![0.0; grid.len()], grid }
    }

    pub fn from_fn<F: Fn([f64; 3]) -> f64>(grid: Grid3, f: F) -> Self {
        let mut values = vec![0.0; grid.len()];
        for i in 0..=grid.n1 {
            for j in 0..grid.n2 {
                for k in 0..grid.n3 {
                    values[grid.idx(i, j, k)] = f(grid.node(i, j, k));
                }
            }
        }
        ScalarField3 { grid, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.idx(i, j, k)]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize, k: usize) -> &mut f64 {
        &mut self.values[self.grid.idx(i, j, k)]
    }

    /// boundary slice at i = 0 or i = n1
    pub fn boundary(&self, end: usize) -> Vec<f64> {
        let i = if end == 0 { 0 } else { self.grid.n1 };
        let mut out = vec![0.0; self.grid.boundary_len()];
        for j in 0..self.grid.n2 {
            for k in 0..self.grid.n3 {
                out[self.grid.bidx(j, k)] = self.at(i, j, k);
            }
        }
        out
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_binary(&self, stem: &Path) -> Result<(), GeometryError> {
        let sidecar = Sidecar {
            dims: [self.grid.n1 + 1, self.grid.n2, self.grid.n3],
            spacing: self.grid.spacing(),
            a_length: self.grid.a_length,
            order: "row-major (i,j,k)".into(),
            dtype: "f64-le".into(),
        };
        let json = serde_json::to_string_pretty(&sidecar)?;
        std::fs::write(stem.with_extension("json"), json)?;
        let mut f = std::fs::File::create(stem.with_extension("bin"))?;
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary(stem: &Path) -> Result<Self, GeometryError> {
        let json = std::fs::read_to_string(stem.with_extension("json"))?;
        let sidecar: Sidecar = serde_json::from_str(&json)?;
        let grid = Grid3::new(
            sidecar.dims[0] - 1,
            sidecar.dims[1],
            sidecar.dims[2],
            sidecar.a_length,
        );
        let bytes = std::fs::read(stem.with_extension("bin"))?;
        if bytes.len() != grid.len() * 8 {
            return Err(GeometryError::InvalidFixture(format!(
                "field size mismatch: {} bytes for {} nodes",
                bytes.len(),
                grid.len()
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(ScalarField3 { grid, values })
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), GeometryError> {
        let mut out = String::from("i,j,k,value\n");
        for i in 0..=self.grid.n1 {
            for j in 0..self.grid.n2 {
                for k in 0..self.grid.n3 {
                    out.push_str(&format!("{i},{j},{k},{:.17e}\n", self.at(i, j, k)));
                }
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    dims: [usize; 3],
    spacing: [f64; 3],
    a_length: f64,
    order: String,
    dtype: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let grid = Grid3::cubic(8, 1.0);
        let f = ScalarField3::from_fn(grid, |x| x[0] + (x[1]).sin() * (2.0 * x[2]).cos());
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("field");
        f.write_binary(&stem).unwrap();
        let g = ScalarField3::read_binary(&stem).unwrap();
        assert_eq!(f.grid, g.grid);
        assert_eq!(f.values, g.values);
    }
}
