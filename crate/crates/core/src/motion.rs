//! Static / moving camera decision.
//!
//! With a static camera the polar regions of an ERP frame barely change, so
//! the north and south bands of consecutive frames are phase-correlated and
//! each pair gets a motion score. The video is labelled moving when the score
//! exceeds `t0` for more than `majority_fraction` of the pairs.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Fft2d;
use crate::image::{ErpFrame, Image};

pub const MIN_BAND_HEIGHT: usize = 8;

/// Peak displacements within this many pixels on both axes count as "in place".
pub const DISPLACEMENT_TOLERANCE: i64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PolarBands {
    pub north: Image,
    pub south: Image,
    pub band_fraction: f64,
}

/// Grayscale north (top) and south (bottom) bands of `round(band_fraction * height)` rows.
pub fn extract_polar_bands(frame: &ErpFrame, band_fraction: f64) -> Result<PolarBands> {
    if !(band_fraction > 0.0 && band_fraction < 0.5) {
        return Err(Error::invalid(format!(
            "band fraction must be in (0, 0.5), got {band_fraction}"
        )));
    }
    let band_h = (band_fraction * frame.height() as f64).round() as usize;
    if band_h < MIN_BAND_HEIGHT {
        return Err(Error::invalid(format!(
            "polar band of {band_h} rows is thinner than {MIN_BAND_HEIGHT}"
        )));
    }
    let gray = frame.to_gray();
    Ok(PolarBands {
        north: gray.rows(0, band_h)?,
        south: gray.rows(frame.height() - band_h, band_h)?,
        band_fraction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCorrelationResult {
    /// Circular displacement of the second image relative to the first.
    pub shift_x: i64,
    pub shift_y: i64,
    /// Correlation peak, scaled so that a self-match scores 1.
    pub peak_response: f64,
}

/// Phase correlation of two equally sized images.
///
/// Both inputs are converted to luma and mean-subtracted. A Hann window is
/// applied along y only: ERP bands are periodic in longitude, so horizontal
/// displacements are true circular shifts and need no taper.
pub fn phase_correlation(a: &Image, b: &Image) -> Result<PhaseCorrelationResult> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            context: "phase correlation".into(),
            expected: a.dims(),
            actual: b.dims(),
        });
    }
    let (w, h) = a.dims();
    if w < 8 || h < 8 {
        return Err(Error::invalid(format!(
            "phase correlation needs at least 8x8 inputs, got {w}x{h}"
        )));
    }

    let a_const = a.is_constant();
    let b_const = b.is_constant();
    if a_const || b_const {
        let equal = a_const && b_const && a.luma(0, 0) == b.luma(0, 0);
        return Ok(PhaseCorrelationResult {
            shift_x: 0,
            shift_y: 0,
            peak_response: if equal { 1.0 } else { 0.0 },
        });
    }

    let window: Vec<f64> = (0..h)
        .map(|y| 0.5 - 0.5 * (2.0 * PI * (y as f64 + 0.5) / h as f64).cos())
        .collect();
    let prepare = |img: &Image| -> Vec<Complex<f64>> {
        let luma = img.luma_f64();
        let mean = luma.iter().sum::<f64>() / luma.len() as f64;
        luma.iter()
            .enumerate()
            .map(|(i, &v)| Complex::new((v - mean) * window[i / w], 0.0))
            .collect()
    };

    let fft = Fft2d::new(w, h);
    let mut fa = prepare(a);
    let mut fb = prepare(b);
    fft.forward(&mut fa);
    fft.forward(&mut fb);

    let mut cross: Vec<Complex<f64>> = fa.iter().zip(&fb).map(|(x, y)| x.conj() * y).collect();
    let max_mag = cross.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let floor = max_mag * 1e-12;
    let mut support = 0usize;
    for c in cross.iter_mut() {
        let m = c.norm();
        if m > floor && m > 0.0 {
            *c /= m;
            support += 1;
        } else {
            *c = Complex::new(0.0, 0.0);
        }
    }
    if support == 0 {
        return Ok(PhaseCorrelationResult {
            shift_x: 0,
            shift_y: 0,
            peak_response: 0.0,
        });
    }
    fft.inverse(&mut cross);

    let (mut best, mut best_i) = (f64::NEG_INFINITY, 0usize);
    for (i, c) in cross.iter().enumerate() {
        if c.re > best {
            best = c.re;
            best_i = i;
        }
    }
    let wrap = |p: usize, n: usize| -> i64 {
        if p > n / 2 {
            p as i64 - n as i64
        } else {
            p as i64
        }
    };
    Ok(PhaseCorrelationResult {
        shift_x: wrap(best_i % w, w),
        shift_y: wrap(best_i / w, h),
        peak_response: (best / support as f64).clamp(0.0, 1.0),
    })
}

/// Inter-frame change score in `[0, 1]`.
///
/// An in-place peak scores `1 − peak_response`. A peak displaced by more than
/// [`DISPLACEMENT_TOLERANCE`] means the band content itself moved (e.g. the
/// camera yawed), which is full evidence of camera motion and scores 1.
pub fn motion_score(result: &PhaseCorrelationResult) -> f64 {
    let displaced = result.shift_x.abs() > DISPLACEMENT_TOLERANCE
        || result.shift_y.abs() > DISPLACEMENT_TOLERANCE;
    if displaced {
        1.0
    } else {
        (1.0 - result.peak_response).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CameraLabel {
    Static,
    Moving,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraMotionDecision {
    pub label: CameraLabel,
    pub pair_scores: Vec<f64>,
    pub exceed_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionParams {
    pub t0: f64,
    pub majority_fraction: f64,
    pub band_fraction: f64,
    /// Use every `stride`-th frame of the supplied sequence.
    pub stride: usize,
}

impl Default for DecisionParams {
    fn default() -> Self {
        DecisionParams {
            t0: 0.5,
            majority_fraction: 0.5,
            band_fraction: 0.15,
            stride: 1,
        }
    }
}

fn band_score(a: &Image, b: &Image) -> Result<f64> {
    // Featureless poles carry no evidence of motion.
    if a.is_constant() && b.is_constant() {
        return Ok(0.0);
    }
    Ok(motion_score(&phase_correlation(a, b)?))
}

pub fn classify_camera(frames: &[ErpFrame], params: &DecisionParams) -> Result<CameraMotionDecision> {
    if params.stride == 0 {
        return Err(Error::invalid("decision stride must be >= 1"));
    }
    if !(0.0..=1.0).contains(&params.t0) || !(0.0..1.0).contains(&params.majority_fraction) {
        return Err(Error::invalid("t0 must be in [0, 1] and majority fraction in [0, 1)"));
    }
    let sampled: Vec<&ErpFrame> = frames.iter().step_by(params.stride).collect();
    if sampled.len() < 2 {
        return Err(Error::invalid(format!(
            "camera decision needs at least 2 sampled frames, got {}",
            sampled.len()
        )));
    }
    let bands: Vec<PolarBands> = sampled
        .par_iter()
        .map(|f| extract_polar_bands(f, params.band_fraction))
        .collect::<Result<_>>()?;
    let pair_scores: Vec<f64> = bands
        .par_windows(2)
        .map(|pair| {
            let north = band_score(&pair[0].north, &pair[1].north)?;
            let south = band_score(&pair[0].south, &pair[1].south)?;
            Ok(north.max(south))
        })
        .collect::<Result<_>>()?;

    let exceeding = pair_scores.iter().filter(|&&s| s > params.t0).count();
    let exceed_fraction = exceeding as f64 / pair_scores.len() as f64;
    let label = if exceed_fraction > params.majority_fraction {
        CameraLabel::Moving
    } else {
        CameraLabel::Static
    };
    Ok(CameraMotionDecision {
        label,
        pair_scores,
        exceed_fraction,
    })
}
