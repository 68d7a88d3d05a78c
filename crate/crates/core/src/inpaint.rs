//! Masked regeneration with the unconditional score.
//!
//! Each reverse step first re-corrupts the original to the current time, clamps
//! the kept entries of the state to that corruption, then takes an ordinary
//! reverse step. Per step the RNG is consumed in a fixed order: the
//! re-corruption draw, then the step noise.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::frame::FrameMatrix;
use crate::model::ScoreFn;
use crate::sampler::{reverse_step, NoiseSource};
use crate::schedule::NoiseSchedule;

/// Binary `F x D` mask; `true` marks an entry to regenerate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    frames: usize,
    dims: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(frames: usize, dims: usize, bits: Vec<bool>) -> Result<Self> {
        if frames == 0 || dims == 0 || bits.len() != frames * dims {
            return Err(domain(format!(
                "mask {frames}x{dims} needs {} entries, got {}",
                frames * dims,
                bits.len()
            )));
        }
        Ok(Self { frames, dims, bits })
    }

    pub fn filled(frames: usize, dims: usize, value: bool) -> Self {
        assert!(frames > 0 && dims > 0, "mask must be at least 1x1");
        Self {
            frames,
            dims,
            bits: vec![value; frames * dims],
        }
    }

    /// Ones on `frames_range x dims_range`, zeros elsewhere.
    pub fn rectangle(
        frames: usize,
        dims: usize,
        frame_range: std::ops::Range<usize>,
        dim_range: std::ops::Range<usize>,
    ) -> Result<Self> {
        if frame_range.end > frames || dim_range.end > dims {
            return Err(domain("rectangle exceeds mask bounds"));
        }
        let mut m = Self::filled(frames, dims, false);
        for f in frame_range {
            for d in dim_range.clone() {
                m.bits[f * dims + d] = true;
            }
        }
        Ok(m)
    }

    /// A centred plus sign: a horizontal band of `width` frames and a vertical
    /// band of `width` channels.
    pub fn cross(frames: usize, dims: usize, width: usize) -> Result<Self> {
        if width == 0 || width > frames.min(dims) {
            return Err(domain(format!("cross width {width} does not fit a {frames}x{dims} mask")));
        }
        let f0 = (frames - width) / 2;
        let d0 = (dims - width) / 2;
        let mut m = Self::filled(frames, dims, false);
        for f in 0..frames {
            for d in 0..dims {
                m.bits[f * dims + d] = (f0..f0 + width).contains(&f) || (d0..d0 + width).contains(&d);
            }
        }
        Ok(m)
    }

    /// Each entry independently one with probability `p`.
    pub fn bernoulli<R: Rng + ?Sized>(frames: usize, dims: usize, p: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(domain(format!("mask probability must lie in [0, 1], got {p}")));
        }
        let bits = (0..frames * dims).map(|_| rng.random::<f64>() < p).collect();
        Self::new(frames, dims, bits)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn get(&self, frame: usize, dim: usize) -> bool {
        self.bits[frame * self.dims + dim]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Frames with at least one masked entry.
    pub fn touched_frames(&self) -> Vec<usize> {
        (0..self.frames)
            .filter(|f| self.bits[f * self.dims..(f + 1) * self.dims].iter().any(|&b| b))
            .collect()
    }

    /// `where mask { a } else { b }`, entrywise.
    pub fn select(&self, a: &FrameMatrix, b: &FrameMatrix) -> Result<FrameMatrix> {
        a.ensure_shape((self.frames, self.dims))?;
        b.ensure_shape((self.frames, self.dims))?;
        let data = self
            .bits
            .iter()
            .zip(a.as_slice().iter().zip(b.as_slice()))
            .map(|(&m, (&x, &y))| if m { x } else { y })
            .collect();
        Ok(FrameMatrix::from_vec_unchecked(self.frames, self.dims, data))
    }
}

/// Text format: a `frames dims` header line, then one row of `0`/`1` tokens per
/// frame. Blank lines and `#` comments are skipped.
impl fmt::Display for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}", self.frames, self.dims)?;
        for row in self.bits.chunks(self.dims) {
            let line: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

impl FromStr for Mask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::Format("empty mask file".into()))?;
        let dims_of: Vec<usize> = header
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| Error::Format(format!("bad mask header {header:?}"))))
            .collect::<Result<_>>()?;
        let [frames, dims] = dims_of[..] else {
            return Err(Error::Format(format!("mask header needs `frames dims`, got {header:?}")));
        };
        let mut bits = Vec::with_capacity(frames * dims);
        let mut rows = 0;
        for line in lines {
            let row: Vec<bool> = line
                .split_whitespace()
                .map(|tok| match tok {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(Error::Format(format!("mask entry {other:?} is not 0 or 1"))),
                })
                .collect::<Result<_>>()?;
            if row.len() != dims {
                return Err(Error::Format(format!("mask row {rows} has {} entries, expected {dims}", row.len())));
            }
            bits.extend(row);
            rows += 1;
        }
        if rows != frames {
            return Err(Error::Format(format!("mask has {rows} rows, header says {frames}")));
        }
        Mask::new(frames, dims, bits)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InpaintConfig {
    pub steps: usize,
    pub tau: f64,
}

impl Default for InpaintConfig {
    fn default() -> Self {
        Self { steps: 1000, tau: 1.5 }
    }
}

impl InpaintConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("inpaint.steps must be >= 1".into()));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Config(format!("inpaint.tau must be > 0, got {}", self.tau)));
        }
        Ok(())
    }
}

/// Regenerates the masked entries of `original`; unmasked entries of the
/// result are copied from `original` exactly.
pub fn inpaint<S, R>(
    score: &S,
    sched: &NoiseSchedule,
    original: &FrameMatrix,
    mask: &Mask,
    config: &InpaintConfig,
    rng: &mut R,
) -> Result<FrameMatrix>
where
    S: ScoreFn + ?Sized,
    R: Rng + ?Sized,
{
    config.validate()?;
    original.ensure_shape((mask.frames, mask.dims))?;
    if score.dims() != original.dims() {
        return Err(domain(format!(
            "score model has {} channels, input has {}",
            score.dims(),
            original.dims()
        )));
    }
    let (frames, dims) = original.shape();
    let n = config.steps;
    let std = 1.0 / config.tau.sqrt();
    let mut x = FrameMatrix::gaussian(frames, dims, std, rng);
    for i in (1..=n).rev() {
        let t = i as f64 / n as f64;
        let (known, _) = sched.forward_sample(original, t, rng)?;
        x = mask.select(&x, &known)?;
        let sc = score.score(&x, t)?;
        let z = FrameMatrix::gaussian(frames, dims, std, rng);
        x = reverse_step(sched, &x, t, &sc, &z, n)?;
    }
    mask.select(&x, original)
}

/// Noise source that consumes the RNG in the same pattern as [`inpaint`]:
/// per step one discarded re-corruption draw, then the step noise. With it,
/// unconditional sampling reproduces an all-ones-mask inpainting run.
pub struct InpaintDrawOrder<'a, R: ?Sized> {
    rng: &'a mut R,
    std: f64,
}

impl<'a, R: Rng + ?Sized> InpaintDrawOrder<'a, R> {
    pub fn new(rng: &'a mut R, tau: f64) -> Self {
        Self {
            rng,
            std: 1.0 / tau.sqrt(),
        }
    }
}

impl<R: Rng + ?Sized> NoiseSource for InpaintDrawOrder<'_, R> {
    fn initial(&mut self, frames: usize, dims: usize) -> FrameMatrix {
        FrameMatrix::gaussian(frames, dims, self.std, self.rng)
    }

    fn step(&mut self, _i: usize, frames: usize, dims: usize) -> FrameMatrix {
        let _ = FrameMatrix::gaussian(frames, dims, 1.0, self.rng);
        FrameMatrix::gaussian(frames, dims, self.std, self.rng)
    }
}
