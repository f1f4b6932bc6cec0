//! Dense spatio-temporal position encoding.
//!
//! Every pixel of a `W×H` image gets a `C`-channel sinusoidal code. Odd
//! channels follow the horizontal coordinate, even channels the vertical one,
//! and the channel index shifts the phase by `2πi/C` so that a full period is
//! spread over the channel axis:
//!
//! ```text
//! odd  i: −cos[(x/W + y/(W·H))·π + 2πi/C]
//! even i:  cos[(y/H + x/(W·H))·π + 2πi/C]
//! ```
//!
//! For a bounding box the same function is evaluated on a fixed `W_R×H_R`
//! RoI grid stretched over the box, so the phase carries the box position
//! and the spatial frequency carries its size. A trajectory is the weighted
//! sum of its per-frame RoI codes, which keeps it in the same space as a
//! single detection.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// Image plane the encoding spans.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageGeometry {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl ImageGeometry {
    pub fn new(width: usize, height: usize, channels: usize) -> Result<Self> {
        let g = ImageGeometry {
            width,
            height,
            channels,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(Error::config("width", "must be at least 1"));
        }
        if self.height == 0 {
            return Err(Error::config("height", "must be at least 1"));
        }
        if self.channels < 2 || self.channels % 2 != 0 {
            return Err(Error::config(
                "channels",
                format!("must be even and at least 2, got {}", self.channels),
            ));
        }
        Ok(())
    }
}

/// Axis-aligned box: top-left corner `(u, v)`, size `w×h`, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(u: f64, v: f64, w: f64, h: f64) -> Result<Self> {
        let b = BBox { u, v, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.u, self.v, self.w, self.h].iter().all(|x| x.is_finite()) {
            return Err(Error::Invalid(format!("non-finite box {self:?}")));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::Invalid(format!(
                "box size must be positive, got {}x{}",
                self.w, self.h
            )));
        }
        Ok(())
    }

    pub fn center(&self) -> (f64, f64) {
        (self.u + self.w / 2.0, self.v + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let x0 = self.u.max(other.u);
        let y0 = self.v.max(other.v);
        let x1 = (self.u + self.w).min(other.u + other.w);
        let y1 = (self.v + self.h).min(other.v + other.h);
        let inter = (x1 - x0).max(0.0) * (y1 - y0).max(0.0);
        let union = self.area() + other.area() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }

    /// Whether the box overlaps the `width×height` image with positive area.
    pub fn intersects_image(&self, width: f64, height: f64) -> bool {
        self.u < width && self.v < height && self.u + self.w > 0.0 && self.v + self.h > 0.0
    }
}

/// RoI grid resolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiSpec {
    pub width: usize,
    pub height: usize,
}

impl Default for RoiSpec {
    fn default() -> Self {
        RoiSpec {
            width: 7,
            height: 7,
        }
    }
}

impl RoiSpec {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        let r = RoiSpec { width, height };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("roi", "grid must be at least 1x1"));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }
}

/// `C×H×W` encoding of a whole image.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodingGrid(Tensor);

impl EncodingGrid {
    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    /// Channel vector at pixel `(x, y)`.
    pub fn pixel(&self, x: usize, y: usize) -> Vec<f64> {
        let s = self.0.shape();
        let (c, h, w) = (s[0], s[1], s[2]);
        (0..c).map(|i| self.0.data()[i * h * w + y * w + x]).collect()
    }
}

/// `C×H_R×W_R` feature block for one box: either an encoding or appearance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoiPatch(Tensor);

impl RoiPatch {
    pub fn new(t: Tensor) -> Result<Self> {
        if t.shape().len() != 3 {
            return Err(Error::shape(format!(
                "RoI patch must be C×H×W, got {:?}",
                t.shape()
            )));
        }
        Ok(RoiPatch(t))
    }

    pub fn zeros(channels: usize, roi: RoiSpec) -> Self {
        RoiPatch(Tensor::zeros(&[channels, roi.height, roi.width]))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn channels(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.0.shape()[2]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.0.data()[(c * self.height() + y) * self.width() + x]
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        self.0.data_mut()
    }
}

/// Evaluates the image encoding for every pixel.
pub fn encode_image(geom: &ImageGeometry) -> Result<EncodingGrid> {
    geom.validate()?;
    let (w, h, c) = (geom.width, geom.height, geom.channels);
    let (wf, hf, cf) = (w as f64, h as f64, c as f64);
    let mut data = vec![0.0; c * h * w];
    for i in 0..c {
        let shift = 2.0 * PI * i as f64 / cf;
        for y in 0..h {
            for x in 0..w {
                let (xf, yf) = (x as f64, y as f64);
                data[(i * h + y) * w + x] = if i % 2 == 1 {
                    -((xf / wf + yf / (wf * hf)) * PI + shift).cos()
                } else {
                    ((yf / hf + xf / (wf * hf)) * PI + shift).cos()
                };
            }
        }
    }
    Ok(EncodingGrid(Tensor::from_parts(vec![c, h, w], data)))
}

/// Evaluates the encoding on the RoI grid stretched over `bbox`.
///
/// Grid points are the integers `0..W_R` and `0..H_R`; there is no half-cell
/// offset, so a full-image box with an `W×H` grid reproduces
/// [`encode_image`].
pub fn encode_roi(bbox: &BBox, geom: &ImageGeometry, roi: &RoiSpec) -> Result<RoiPatch> {
    bbox.validate()?;
    geom.validate()?;
    roi.validate()?;
    let (wf, hf, cf) = (geom.width as f64, geom.height as f64, geom.channels as f64);
    let (wr, hr) = (roi.width as f64, roi.height as f64);
    let (c, rh, rw) = (geom.channels, roi.height, roi.width);

    let odd_offset = (bbox.u / wf + bbox.v / (wf * hf)) * PI;
    let even_offset = (bbox.v / hf + bbox.u / (wf * hf)) * PI;
    let mut data = vec![0.0; c * rh * rw];
    for i in 0..c {
        let shift = 2.0 * PI * i as f64 / cf;
        for y in 0..rh {
            for x in 0..rw {
                let (xf, yf) = (x as f64, y as f64);
                data[(i * rh + y) * rw + x] = if i % 2 == 1 {
                    let local = bbox.w / (wf * wr) * xf + bbox.h / (wf * hf * hr) * yf;
                    -(local * PI + odd_offset + shift).cos()
                } else {
                    let local = bbox.h / (hf * hr) * yf + bbox.w / (wf * hf * wr) * xf;
                    (local * PI + even_offset + shift).cos()
                };
            }
        }
    }
    Ok(RoiPatch(Tensor::from_parts(vec![c, rh, rw], data)))
}

/// Per-frame weights for a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaPolicy {
    /// Every frame weighs 1.
    #[default]
    Uniform,
    /// Frame `t` of `T` weighs `gamma^(T−t)`.
    Decay { gamma: f64 },
}

impl AlphaPolicy {
    /// Weights for a trajectory of `len` frames, oldest first.
    pub fn weights(&self, len: usize) -> Vec<f64> {
        match *self {
            AlphaPolicy::Uniform => vec![1.0; len],
            AlphaPolicy::Decay { gamma } => (0..len)
                .map(|t| gamma.powi((len - 1 - t) as i32))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AlphaPolicy::Uniform => Ok(()),
            AlphaPolicy::Decay { gamma } if gamma > 0.0 && gamma <= 1.0 => Ok(()),
            AlphaPolicy::Decay { .. } => Err(Error::config("alpha.gamma", "must lie in (0, 1]")),
        }
    }
}

/// Weighted sum of per-frame RoI encodings.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryEncoding {
    patch: RoiPatch,
    weights: Vec<f64>,
}

impl TrajectoryEncoding {
    pub fn patch(&self) -> &RoiPatch {
        &self.patch
    }

    pub fn frame_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Adds `alpha · new_patch` in place.
    pub fn extend(&mut self, new_patch: &RoiPatch, alpha: f64) -> Result<()> {
        if new_patch.tensor().shape() != self.patch.tensor().shape() {
            return Err(Error::shape(format!(
                "trajectory {:?} extended by patch {:?}",
                self.patch.tensor().shape(),
                new_patch.tensor().shape()
            )));
        }
        for (a, b) in self.patch.data_mut().iter_mut().zip(new_patch.data()) {
            *a += alpha * b;
        }
        self.weights.push(alpha);
        Ok(())
    }
}

/// `Σ_t alphas[t] · patches[t]`.
pub fn accumulate_trajectory(patches: &[RoiPatch], alphas: &[f64]) -> Result<TrajectoryEncoding> {
    if patches.is_empty() {
        return Err(Error::Invalid("trajectory needs at least one patch".into()));
    }
    if patches.len() != alphas.len() {
        return Err(Error::shape(format!(
            "{} patches with {} weights",
            patches.len(),
            alphas.len()
        )));
    }
    let mut traj = TrajectoryEncoding {
        patch: RoiPatch(patches[0].tensor().scaled(alphas[0])),
        weights: vec![alphas[0]],
    };
    for (p, &a) in patches[1..].iter().zip(&alphas[1..]) {
        traj.extend(p, a)?;
    }
    Ok(traj)
}

/// Returns `traj` grown by one frame.
pub fn extend_trajectory(
    traj: &TrajectoryEncoding,
    new_patch: &RoiPatch,
    alpha: f64,
) -> Result<TrajectoryEncoding> {
    let mut out = traj.clone();
    out.extend(new_patch, alpha)?;
    Ok(out)
}

/// Standard 1-D sinusoidal token encoding with frequency base 10000:
/// entry `2k` is `sin(p / 10000^(2k/dim))`, entry `2k+1` the matching cosine.
pub fn classic_encoding(position: usize, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::config("dim", format!("must be even and positive, got {dim}")));
    }
    let p = position as f64;
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim / 2 {
        let freq = 10000f64.powf(2.0 * k as f64 / dim as f64);
        out.push((p / freq).sin());
        out.push((p / freq).cos());
    }
    Ok(out)
}
