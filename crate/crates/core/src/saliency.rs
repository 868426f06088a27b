//! Saliency maps: file contract, classical fallback detector, and CC / SIM.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Fft2d;
use crate::image::{Channels, ErpFrame, Image};

/// Per-pixel saliency, stored as 8-bit intensities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl SaliencyMap {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::invalid(format!(
                "saliency map {width}x{height} with {} values",
                data.len()
            )));
        }
        Ok(SaliencyMap { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Self {
        let img = Image::from_fn_gray(width, height, f);
        SaliencyMap {
            width,
            height,
            data: img.into_data(),
        }
    }

    /// Luma of an arbitrary image.
    pub fn from_image(img: &Image) -> Self {
        let gray = img.to_gray();
        SaliencyMap {
            width: gray.width(),
            height: gray.height(),
            data: gray.into_data(),
        }
    }

    pub fn to_image(&self) -> Image {
        Image::new(self.width, self.height, Channels::Gray, self.data.clone()).expect("valid map")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Intensity scaled to `[0, 1]`.
    #[inline]
    pub fn normalized(&self, x: usize, y: usize) -> f64 {
        self.get(x, y) as f64 / 255.0
    }

    /// Box-average downscale by an integer factor (edge blocks are partial).
    pub fn downscale(&self, factor: usize) -> Result<SaliencyMap> {
        if factor == 0 {
            return Err(Error::invalid("downscale factor must be >= 1"));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let w = self.width.div_ceil(factor);
        let h = self.height.div_ceil(factor);
        Ok(SaliencyMap::from_fn(w, h, |x, y| {
            let (mut sum, mut n) = (0u32, 0u32);
            for yy in y * factor..((y + 1) * factor).min(self.height) {
                for xx in x * factor..((x + 1) * factor).min(self.width) {
                    sum += self.get(xx, yy) as u32;
                    n += 1;
                }
            }
            ((sum + n / 2) / n) as u8
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SaliencySource {
    External,
    Fallback,
}

/// Saliency maps keyed by analyzed-frame index.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencySequence {
    maps: Vec<(usize, SaliencyMap)>,
    source: SaliencySource,
}

impl SaliencySequence {
    pub fn new(maps: Vec<(usize, SaliencyMap)>, source: SaliencySource) -> Result<Self> {
        if maps.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::invalid("saliency frame indices must be strictly increasing"));
        }
        Ok(SaliencySequence { maps, source })
    }

    pub fn source(&self) -> SaliencySource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn maps(&self) -> &[(usize, SaliencyMap)] {
        &self.maps
    }

    pub fn get(&self, frame_index: usize) -> Option<&SaliencyMap> {
        self.maps
            .binary_search_by_key(&frame_index, |(i, _)| *i)
            .ok()
            .map(|i| &self.maps[i].1)
    }
}

/// Numbered images (`000042.png` → 42) in a directory.
pub(crate) fn numbered_files(dir: &Path, extensions: &[&str]) -> Result<BTreeMap<usize, std::path::PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if !ext.is_some_and(|e| extensions.contains(&e.as_str())) {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if stem.is_empty() || !stem.bytes().all(|b| b.is_ascii_digit()) {
            continue;
        }
        let index: usize = stem
            .parse()
            .map_err(|_| Error::invalid(format!("bad frame number in {}", path.display())))?;
        if let Some(prev) = out.insert(index, path.clone()) {
            return Err(Error::invalid(format!(
                "duplicate frame number {index}: {} and {}",
                prev.display(),
                path.display()
            )));
        }
    }
    Ok(out)
}

/// Loads `%06d.png` grayscale maps numbered `0..count`.
///
/// Without `expected_count` the count is inferred from the largest index.
/// Any missing index is reported as a gap.
pub fn load_saliency_sequence(
    dir: &Path,
    expected_count: Option<usize>,
    expected_dims: Option<(usize, usize)>,
) -> Result<SaliencySequence> {
    let files = numbered_files(dir, &["png"])?;
    let count = match expected_count {
        Some(n) => n,
        None => files.keys().next_back().map_or(0, |&m| m + 1),
    };
    for index in 0..count {
        if !files.contains_key(&index) {
            return Err(Error::SequenceGap {
                dir: dir.to_path_buf(),
                index,
            });
        }
    }
    if let Some((&extra, _)) = files.range(count..).next() {
        return Err(Error::invalid(format!(
            "{}: saliency map {extra} beyond the expected {count} frames",
            dir.display()
        )));
    }
    let maps = files
        .into_par_iter()
        .map(|(index, path)| {
            let map = SaliencyMap::from_image(&Image::load(&path)?);
            if let Some(dims) = expected_dims {
                if map.dims() != dims {
                    return Err(Error::DimensionMismatch {
                        context: path.display().to_string(),
                        expected: dims,
                        actual: map.dims(),
                    });
                }
            }
            Ok((index, map))
        })
        .collect::<Result<Vec<_>>>()?;
    SaliencySequence::new(maps, SaliencySource::External)
}

pub fn write_saliency_sequence(seq: &SaliencySequence, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    seq.maps()
        .par_iter()
        .try_for_each(|(i, map)| map.to_image().save_png(&dir.join(format!("{i:06}.png"))))
}

/// Longest side of the working image used by [`spectral_residual_saliency`].
pub const SPECTRAL_RESIDUAL_WORKING_SIZE: usize = 256;

/// Classical spectral-residual saliency.
///
/// Large frames are area-averaged down to [`SPECTRAL_RESIDUAL_WORKING_SIZE`]
/// before analysis and the result is bilinearly resampled back. The output is
/// Gaussian-smoothed and min-max stretched to `[0, 255]`; a frame without any
/// dynamic range yields an all-zero map.
pub fn spectral_residual_saliency(frame: &ErpFrame) -> Result<SaliencyMap> {
    let (w, h) = frame.dims();
    if w < 16 || h < 16 {
        return Err(Error::invalid(format!(
            "spectral residual needs at least 16x16, got {w}x{h}"
        )));
    }
    let luma = frame.luma_f64();
    let (lo, hi) = luma
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi - lo < 1e-9 {
        return SaliencyMap::new(w, h, vec![0; w * h]);
    }

    let factor = w.max(h).div_ceil(SPECTRAL_RESIDUAL_WORKING_SIZE).max(1);
    let (sw, sh) = (w.div_ceil(factor), h.div_ceil(factor));
    let small = area_downscale(&luma, w, h, factor);

    let fft = Fft2d::new(sw, sh);
    let mut spectrum: Vec<Complex<f64>> = small.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.forward(&mut spectrum);
    let log_amp: Vec<f64> = spectrum.iter().map(|c| c.norm().max(1e-9).ln()).collect();
    let smoothed = box3_periodic(&log_amp, sw, sh);
    for (i, c) in spectrum.iter_mut().enumerate() {
        let residual = log_amp[i] - smoothed[i];
        let phase = c.arg();
        *c = Complex::from_polar(residual.exp(), phase);
    }
    fft.inverse(&mut spectrum);
    let energy: Vec<f64> = spectrum.iter().map(|c| c.norm_sqr()).collect();

    let sigma = (0.02 * sw.max(sh) as f64).max(1.0);
    let blurred = gaussian_blur(&energy, sw, sh, sigma);

    let full = if factor == 1 {
        blurred
    } else {
        bilinear_upsample(&blurred, sw, sh, w, h, factor)
    };
    let (lo, hi) = full
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let data = if span <= hi.abs() * 1e-12 || span == 0.0 {
        vec![0; w * h]
    } else {
        full.iter()
            .map(|&v| ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    };
    SaliencyMap::new(w, h, data)
}

fn area_downscale(src: &[f64], w: usize, h: usize, factor: usize) -> Vec<f64> {
    if factor == 1 {
        return src.to_vec();
    }
    let (sw, sh) = (w.div_ceil(factor), h.div_ceil(factor));
    let mut out = vec![0.0; sw * sh];
    for y in 0..sh {
        for x in 0..sw {
            let (mut sum, mut n) = (0.0, 0usize);
            for yy in y * factor..((y + 1) * factor).min(h) {
                for xx in x * factor..((x + 1) * factor).min(w) {
                    sum += src[yy * w + xx];
                    n += 1;
                }
            }
            out[y * sw + x] = sum / n as f64;
        }
    }
    out
}

fn bilinear_upsample(src: &[f64], sw: usize, sh: usize, w: usize, h: usize, factor: usize) -> Vec<f64> {
    let f = factor as f64;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let sy = ((y as f64 + 0.5) / f - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let fy = sy - y0 as f64;
        for x in 0..w {
            // Horizontal axis is longitude: wrap.
            let sx = (x as f64 + 0.5) / f - 0.5;
            let xf = sx.floor();
            let fx = sx - xf;
            let x0 = (xf as isize).rem_euclid(sw as isize) as usize;
            let x1 = (x0 + 1) % sw;
            let top = src[y0 * sw + x0] * (1.0 - fx) + src[y0 * sw + x1] * fx;
            let bot = src[y1 * sw + x0] * (1.0 - fx) + src[y1 * sw + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

fn box3_periodic(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for dy in [h - 1, 0, 1] {
                for dx in [w - 1, 0, 1] {
                    s += src[((y + dy) % h) * w + (x + dx) % w];
                }
            }
            out[y * w + x] = s / 9.0;
        }
    }
    out
}

/// Separable Gaussian, wrapping horizontally and clamping vertically.
fn gaussian_blur(src: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let xx = (x as isize + k as isize - radius).rem_euclid(w as isize) as usize;
                s += kv * src[y * w + xx];
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let yy = (y as isize + k as isize - radius).clamp(0, h as isize - 1) as usize;
                s += kv * tmp[yy * w + x];
            }
            out[y * w + x] = s;
        }
    }
    out
}

fn check_same_dims(pred: &SaliencyMap, gt: &SaliencyMap, what: &str) -> Result<()> {
    if pred.dims() != gt.dims() {
        return Err(Error::DimensionMismatch {
            context: what.into(),
            expected: gt.dims(),
            actual: pred.dims(),
        });
    }
    Ok(())
}

/// Pearson correlation coefficient (CC) of two maps viewed as flat vectors.
///
/// Moments are accumulated exactly in integers, so the only rounding happens
/// in the final division. A constant map correlates at 0 with anything
/// non-constant; two constant maps have no defined correlation.
pub fn pearson_cc(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    check_same_dims(pred, gt, "CC")?;
    let n = pred.data.len() as i128;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0i128, 0i128, 0i128, 0i128, 0i128);
    for (&a, &b) in pred.data.iter().zip(&gt.data) {
        let (a, b) = (a as i128, b as i128);
        sx += a;
        sy += b;
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    let var_x = n * sxx - sx * sx;
    let var_y = n * syy - sy * sy;
    let cov = n * sxy - sx * sy;
    match (var_x == 0, var_y == 0) {
        (true, true) => Err(Error::UndefinedMetric(
            "CC of two constant maps is undefined".into(),
        )),
        (true, false) | (false, true) => Ok(0.0),
        (false, false) => {
            let cc = cov as f64 / ((var_x as f64).sqrt() * (var_y as f64).sqrt());
            Ok(cc.clamp(-1.0, 1.0))
        }
    }
}

/// Similarity (SIM): histogram intersection of the two maps normalized to
/// unit mass, `Σ min(P_i, Q_i)`.
pub fn sim_metric(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    check_same_dims(pred, gt, "SIM")?;
    let sp: u64 = pred.data.iter().map(|&v| v as u64).sum();
    let sq: u64 = gt.data.iter().map(|&v| v as u64).sum();
    if sp == 0 || sq == 0 {
        return Err(Error::UndefinedMetric("SIM needs maps with positive mass".into()));
    }
    // min(p/P, q/Q) = min(p*Q, q*P) / (P*Q), summed exactly.
    let inter: u128 = pred
        .data
        .iter()
        .zip(&gt.data)
        .map(|(&p, &q)| (p as u128 * sq as u128).min(q as u128 * sp as u128))
        .sum();
    Ok((inter as f64 / (sp as f64 * sq as f64)).min(1.0))
}
