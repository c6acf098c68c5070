use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::ChannelVector;
use crate::error::{shape_mismatch, Error, Result};

/// Row-major dense matrix applied to row vectors: `out = v * M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDimensions(format!("{rows}x{cols} matrix")));
        }
        if data.len() != rows * cols {
            return Err(shape_mismatch("matrix", rows * cols, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter { name: "matrix", reason: "non-finite entry".into() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn apply(&self, v: &ChannelVector) -> Result<ChannelVector> {
        if v.channels() != self.rows {
            return Err(shape_mismatch("matrix apply", self.rows, v.channels()));
        }
        let mut out = vec![0.0; self.cols];
        for (row, &x) in self.data.chunks_exact(self.cols).zip(v.data()) {
            for (o, &m) in out.iter_mut().zip(row) {
                *o += x * m;
            }
        }
        Ok(ChannelVector { data: out })
    }

    /// Returns the gradients for the input vector and for the matrix.
    pub fn apply_backward(&self, v: &ChannelVector, grad_out: &ChannelVector) -> Result<(ChannelVector, Matrix)> {
        if v.channels() != self.rows || grad_out.channels() != self.cols {
            return Err(shape_mismatch(
                "matrix apply_backward",
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", v.channels(), grad_out.channels()),
            ));
        }
        let g = grad_out.data();
        let grad_v = self.data.chunks_exact(self.cols).map(|row| row.iter().zip(g).map(|(m, g)| m * g).sum()).collect();
        let grad_m = v.data().iter().flat_map(|&x| g.iter().map(move |&gv| x * gv)).collect();
        Ok((ChannelVector { data: grad_v }, Matrix { rows: self.rows, cols: self.cols, data: grad_m }))
    }
}
