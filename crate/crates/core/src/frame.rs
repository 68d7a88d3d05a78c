//! Dense `F x D` frame matrices, the toy analog of a mel-spectrogram.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major matrix of `frames x dims` finite reals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFrameMatrix", into = "RawFrameMatrix")]
pub struct FrameMatrix {
    frames: usize,
    dims: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawFrameMatrix {
    frames: usize,
    dims: usize,
    data: Vec<f64>,
}

impl TryFrom<RawFrameMatrix> for FrameMatrix {
    type Error = Error;

    fn try_from(raw: RawFrameMatrix) -> Result<Self> {
        FrameMatrix::new(raw.frames, raw.dims, raw.data)
    }
}

impl From<FrameMatrix> for RawFrameMatrix {
    fn from(m: FrameMatrix) -> Self {
        RawFrameMatrix {
            frames: m.frames,
            dims: m.dims,
            data: m.data,
        }
    }
}

impl FrameMatrix {
    pub fn new(frames: usize, dims: usize, data: Vec<f64>) -> Result<Self> {
        if frames == 0 || dims == 0 {
            return Err(Error::Domain(format!(
                "frame matrix must be at least 1x1, got {frames}x{dims}"
            )));
        }
        if data.len() != frames * dims {
            return Err(Error::Domain(format!(
                "frame matrix {frames}x{dims} needs {} entries, got {}",
                frames * dims,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "frame matrix entry ({}, {})",
                pos / dims,
                pos % dims
            )));
        }
        Ok(Self { frames, dims, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let frames = rows.len();
        let dims = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dims) {
            return Err(Error::Domain("ragged rows".into()));
        }
        Self::new(frames, dims, rows.concat())
    }

    /// Builds a matrix without checking finiteness. Shape must still agree.
    pub(crate) fn from_vec_unchecked(frames: usize, dims: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), frames * dims);
        Self { frames, dims, data }
    }

    pub fn zeros(frames: usize, dims: usize) -> Self {
        assert!(frames > 0 && dims > 0, "frame matrix must be at least 1x1");
        Self::from_vec_unchecked(frames, dims, vec![0.0; frames * dims])
    }

    pub fn filled(frames: usize, dims: usize, value: f64) -> Self {
        assert!(frames > 0 && dims > 0, "frame matrix must be at least 1x1");
        Self::from_vec_unchecked(frames, dims, vec![value; frames * dims])
    }

    /// Draws every entry from `N(0, std^2)` in row-major order.
    pub fn gaussian<R: Rng + ?Sized>(frames: usize, dims: usize, std: f64, rng: &mut R) -> Self {
        assert!(frames > 0 && dims > 0, "frame matrix must be at least 1x1");
        let data = (0..frames * dims)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self::from_vec_unchecked(frames, dims, data)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.frames, self.dims)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, f: usize) -> &[f64] {
        &self.data[f * self.dims..(f + 1) * self.dims]
    }

    pub(crate) fn row_mut(&mut self, f: usize) -> &mut [f64] {
        &mut self.data[f * self.dims..(f + 1) * self.dims]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dims)
    }

    pub fn get(&self, f: usize, d: usize) -> f64 {
        self.data[f * self.dims + d]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &FrameMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn ensure_shape(&self, expected: (usize, usize)) -> Result<()> {
        if self.shape() == expected {
            Ok(())
        } else {
            Err(Error::Shape {
                expected,
                got: self.shape(),
            })
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> FrameMatrix {
        Self::from_vec_unchecked(self.frames, self.dims, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Elementwise combination of two equally shaped matrices.
    pub fn zip_map(&self, other: &FrameMatrix, f: impl Fn(f64, f64) -> f64) -> Result<FrameMatrix> {
        other.ensure_shape(self.shape())?;
        Ok(Self::from_vec_unchecked(
            self.frames,
            self.dims,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub fn scale(&self, k: f64) -> FrameMatrix {
        self.map(|v| k * v)
    }
}
