//! Quality→compression-ratio model, JPEG encoding at a chosen quality, the
//! size-only compression model, and fitting the ratio model to measurements.

use image::codecs::jpeg::JpegEncoder;
use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::normalize_cost;

/// `phi(d) = -a1 * log2(1 - a2 * d) + a3`, strictly increasing and convex on
/// `[0, 1]` for `a1 > 0`, `0 < a2 < 1`, `a3 >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompressionModel {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl Default for CompressionModel {
    fn default() -> Self {
        CompressionModel {
            a1: 0.94,
            a2: 0.94,
            a3: 0.06,
        }
    }
}

impl CompressionModel {
    pub fn new(a1: f64, a2: f64, a3: f64) -> Result<Self> {
        let m = CompressionModel { a1, a2, a3 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a1 > 0.0 && self.a2 > 0.0 && self.a2 < 1.0 && self.a3 >= 0.0) || !self.a1.is_finite() {
            return Err(Error::param(format!(
                "compression model needs a1 > 0, 0 < a2 < 1, a3 >= 0; got {self:?}"
            )));
        }
        Ok(())
    }

    /// Unchecked evaluation; callers guarantee `d` in `[0, 1]`.
    #[inline]
    pub(crate) fn eval(&self, d: f64) -> f64 {
        -self.a1 * (1.0 - self.a2 * d).log2() + self.a3
    }

    pub fn phi(&self, d: f64) -> Result<f64> {
        phi(d, self)
    }
}

pub fn phi(d: f64, model: &CompressionModel) -> Result<f64> {
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::param(format!("quality {d} outside [0,1]")));
    }
    Ok(model.eval(d))
}

/// Stored cost of a frame compressed at quality `d`: `c_raw * phi(d) / phi(1)`.
pub fn modeled_cost(c_raw: f64, d: f64, model: &CompressionModel) -> f64 {
    let d = d.clamp(0.0, 1.0);
    c_raw * model.eval(d) / model.eval(1.0)
}

/// Real-pixel encoder settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Codec quality used for `d = 0`.
    pub quality_min: u8,
    /// Drop pixels entirely when `d == 0`.
    pub discard_on_zero: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            quality_min: 1,
            discard_on_zero: false,
        }
    }
}

pub const QUALITY_MAX: u8 = 100;

/// Codec quality for decision `d`: affine between `quality_min` and 100.
pub fn codec_quality(d: f64, quality_min: u8) -> u8 {
    let q_min = quality_min.clamp(1, QUALITY_MAX) as f64;
    (q_min + d.clamp(0.0, 1.0) * (QUALITY_MAX as f64 - q_min)).round() as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedFrame {
    /// Empty when the frame was discarded.
    pub payload: Vec<u8>,
    pub quality: Option<u8>,
    pub cost: f64,
}

pub fn encode_jpeg(image: &RgbImage, quality: u8, frame_id: u64) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    JpegEncoder::new_with_quality(&mut out, quality)
        .encode_image(image)
        .map_err(|e| Error::Codec {
            frame_id,
            reason: e.to_string(),
        })?;
    Ok(out)
}

pub fn encode_frame(
    image: &RgbImage,
    d: f64,
    frame_id: u64,
    config: &EncoderConfig,
    reference_max_bytes: u64,
) -> Result<EncodedFrame> {
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::Codec {
            frame_id,
            reason: format!("quality decision {d} outside [0,1]"),
        });
    }
    if d == 0.0 && config.discard_on_zero {
        return Ok(EncodedFrame {
            payload: Vec::new(),
            quality: None,
            cost: 0.0,
        });
    }
    let quality = codec_quality(d, config.quality_min);
    let payload = encode_jpeg(image, quality, frame_id)?;
    let cost = normalize_cost(payload.len() as u64, reference_max_bytes)?;
    Ok(EncodedFrame {
        payload,
        quality: Some(quality),
        cost,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiFit {
    pub model: CompressionModel,
    pub rms: f64,
}

/// Least-squares fit of `(a1, a2, a3)` to `(quality, ratio)` samples.
///
/// For fixed `a2` the model is linear in `a1` and `a3`, so those are solved in
/// closed form (with `a3 >= 0` enforced) and only `a2` is searched: a coarse
/// scan followed by golden-section refinement.
pub fn fit_phi(samples: &[(f64, f64)]) -> Result<PhiFit> {
    if samples.len() < 4 {
        return Err(Error::Calibration(format!(
            "need at least 4 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|(d, r)| !(0.0..=1.0).contains(d) || !r.is_finite()) {
        return Err(Error::Calibration("samples need d in [0,1] and finite ratios".into()));
    }
    let lo = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    if lo > 0.1 || hi < 0.9 {
        return Err(Error::Calibration(format!(
            "samples span [{lo}, {hi}], need at least [0.1, 0.9]"
        )));
    }

    const A2_MAX: f64 = 1.0 - 1e-9;
    let sse = |a2: f64| linear_part(samples, a2).map_or(f64::INFINITY, |(_, _, e)| e);

    let steps = 400;
    let grid = |i: usize| A2_MAX * i as f64 / steps as f64;
    let mut best = 1;
    for i in 1..=steps {
        if sse(grid(i)) < sse(grid(best)) {
            best = i;
        }
    }
    let mut a = grid(best - 1).max(1e-12);
    let mut b = grid((best + 1).min(steps));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (sse(c), sse(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-14 {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = sse(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = sse(d);
        }
    }
    let mut a2 = if fc <= fd { c } else { d };
    if sse(grid(best)) < sse(a2) {
        a2 = grid(best);
    }
    let (a1, a3, err) = linear_part(samples, a2)
        .ok_or_else(|| Error::Calibration("ratios do not increase with quality".into()))?;
    let model = CompressionModel::new(a1, a2, a3)
        .map_err(|e| Error::Calibration(e.to_string()))?;
    Ok(PhiFit {
        model,
        rms: (err / samples.len() as f64).sqrt(),
    })
}

/// Best `(a1, a3, sse)` for a fixed `a2`, or `None` if no `a1 > 0` fits.
fn linear_part(samples: &[(f64, f64)], a2: f64) -> Option<(f64, f64, f64)> {
    let n = samples.len() as f64;
    let basis = |d: f64| -(1.0 - a2 * d).log2();
    let (mut sg, mut sgg, mut sr, mut sgr) = (0.0, 0.0, 0.0, 0.0);
    for &(d, r) in samples {
        let g = basis(d);
        sg += g;
        sgg += g * g;
        sr += r;
        sgr += g * r;
    }
    let det = n * sgg - sg * sg;
    let (mut a1, mut a3) = if det.abs() > 1e-300 {
        ((n * sgr - sg * sr) / det, (sgg * sr - sg * sgr) / det)
    } else {
        (f64::NAN, f64::NAN)
    };
    if !(a3 >= 0.0) || !a1.is_finite() {
        a3 = 0.0;
        a1 = if sgg > 0.0 { sgr / sgg } else { f64::NAN };
    }
    if !(a1 > 0.0) {
        return None;
    }
    let e = samples
        .iter()
        .map(|&(d, r)| {
            let res = a1 * basis(d) + a3 - r;
            res * res
        })
        .sum();
    Some((a1, a3, e))
}
