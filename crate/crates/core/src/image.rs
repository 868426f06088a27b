//! 8-bit raster images shared by every stage.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channels {
    Gray,
    Rgb,
}

impl Channels {
    pub fn count(self) -> usize {
        match self {
            Channels::Gray => 1,
            Channels::Rgb => 3,
        }
    }
}

/// Row-major 8-bit image with one (gray) or three (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: Channels,
    data: Vec<u8>,
}

/// One equirectangular video frame. Longitude runs along x, latitude along y.
pub type ErpFrame = Image;

impl Image {
    pub fn new(width: usize, height: usize, channels: Channels, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width * height * channels.count();
        if data.len() != expected {
            return Err(Error::invalid(format!(
                "image buffer holds {} samples, {width}x{height}x{} needs {expected}",
                data.len(),
                channels.count()
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    /// Image with every pixel set to `value` (one sample per channel).
    pub fn filled(width: usize, height: usize, value: &[u8]) -> Result<Self> {
        let channels = match value.len() {
            1 => Channels::Gray,
            3 => Channels::Rgb,
            n => return Err(Error::invalid(format!("fill value has {n} channels"))),
        };
        let data = value
            .iter()
            .copied()
            .cycle()
            .take(width * height * value.len())
            .collect();
        Image::new(width, height, channels, data)
    }

    pub fn from_fn_gray(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Image {
            width,
            height,
            channels: Channels::Gray,
            data,
        }
    }

    pub fn from_fn_rgb(width: usize, height: usize, f: impl Fn(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Image {
            width,
            height,
            channels: Channels::Rgb,
            data,
        }
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

    pub fn channels(&self) -> Channels {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let c = self.channels.count();
        let i = (y * self.width + x) * c;
        &self.data[i..i + c]
    }

    /// Luma of one pixel (Rec. 601 weights for RGB).
    #[inline]
    pub fn luma(&self, x: usize, y: usize) -> f64 {
        let p = self.pixel(x, y);
        match self.channels {
            Channels::Gray => p[0] as f64,
            Channels::Rgb => 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64,
        }
    }

    pub fn luma_f64(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(self.luma(x, y));
            }
        }
        out
    }

    pub fn to_gray(&self) -> Image {
        match self.channels {
            Channels::Gray => self.clone(),
            Channels::Rgb => Image::from_fn_gray(self.width, self.height, |x, y| {
                self.luma(x, y).round().clamp(0.0, 255.0) as u8
            }),
        }
    }

    /// Rows `[y0, y0 + rows)` as a new image.
    pub fn rows(&self, y0: usize, rows: usize) -> Result<Image> {
        if rows == 0 || y0 + rows > self.height {
            return Err(Error::invalid(format!(
                "row range {y0}..{} outside image of height {}",
                y0 + rows,
                self.height
            )));
        }
        let stride = self.width * self.channels.count();
        Image::new(
            self.width,
            rows,
            self.channels,
            self.data[y0 * stride..(y0 + rows) * stride].to_vec(),
        )
    }

    pub fn is_constant(&self) -> bool {
        let c = self.channels.count();
        let first = &self.data[..c];
        self.data.chunks_exact(c).all(|p| p == first)
    }

    /// Bilinear sample at fractional pixel coordinates, pixel centers at
    /// integer positions. `wrap_x` makes the horizontal axis periodic (ERP
    /// longitude); otherwise both axes clamp to the border.
    pub fn sample_bilinear(&self, x: f64, y: f64, wrap_x: bool, out: &mut [f64]) {
        let c = self.channels.count();
        debug_assert!(out.len() >= c);
        let w = self.width as isize;
        let h = self.height as isize;

        let y = y.clamp(0.0, (h - 1) as f64);
        let y0 = y.floor() as isize;
        let fy = y - y0 as f64;
        let y1 = (y0 + 1).min(h - 1);

        let (x0, x1, fx) = if wrap_x {
            let xf = x.floor();
            let fx = x - xf;
            let x0 = (xf as isize).rem_euclid(w);
            (x0, (x0 + 1).rem_euclid(w), fx)
        } else {
            let x = x.clamp(0.0, (w - 1) as f64);
            let x0 = x.floor() as isize;
            (x0, (x0 + 1).min(w - 1), x - x0 as f64)
        };

        let at = |xx: isize, yy: isize, k: usize| -> f64 {
            self.data[(yy as usize * self.width + xx as usize) * c + k] as f64
        };
        for (k, o) in out.iter_mut().enumerate().take(c) {
            let top = at(x0, y0, k) * (1.0 - fx) + at(x1, y0, k) * fx;
            let bottom = at(x0, y1, k) * (1.0 - fx) + at(x1, y1, k) * fx;
            *o = top * (1.0 - fy) + bottom * fy;
        }
    }

    /// Loads a PNG or JPEG. Gray sources stay gray; everything else becomes RGB.
    pub fn load(path: &Path) -> Result<Image> {
        let img = ::image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let (width, height) = (img.width() as usize, img.height() as usize);
        match img {
            ::image::DynamicImage::ImageLuma8(buf) => {
                Image::new(width, height, Channels::Gray, buf.into_raw())
            }
            other => Image::new(width, height, Channels::Rgb, other.to_rgb8().into_raw()),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let color = match self.channels {
            Channels::Gray => ::image::ExtendedColorType::L8,
            Channels::Rgb => ::image::ExtendedColorType::Rgb8,
        };
        ::image::save_buffer_with_format(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            color,
            ::image::ImageFormat::Png,
        )
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}
