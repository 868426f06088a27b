//! Separable 2D FFT over row-major complex buffers.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft2d {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2d {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2d {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn forward(&self, data: &mut [Complex<f64>]) {
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    /// Unnormalized inverse transform (scale by `1 / (w*h)` to invert `forward`).
    pub fn inverse(&self, data: &mut [Complex<f64>]) {
        self.run(data, &self.row_inv, &self.col_inv);
    }

    fn run(&self, data: &mut [Complex<f64>], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        let (w, h) = (self.width, self.height);
        debug_assert_eq!(data.len(), w * h);
        rows.process(data);
        let mut t = transpose(data, w, h);
        cols.process(&mut t);
        data.copy_from_slice(&transpose(&t, h, w));
    }
}

fn transpose(data: &[Complex<f64>], w: usize, h: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); w * h];
    for y in 0..h {
        for x in 0..w {
            out[x * h + y] = data[y * w + x];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_then_inverse_is_identity_up_to_scale() {
        let (w, h) = (12, 5);
        let orig: Vec<Complex<f64>> = (0..w * h)
            .map(|i| Complex::new((i * 7 % 11) as f64, 0.0))
            .collect();
        let mut buf = orig.clone();
        let fft = Fft2d::new(w, h);
        fft.forward(&mut buf);
        // DC term is the plain sum.
        let sum: f64 = orig.iter().map(|c| c.re).sum();
        assert!((buf[0].re - sum).abs() < 1e-9);
        fft.inverse(&mut buf);
        for (a, b) in orig.iter().zip(&buf) {
            assert!((a.re - b.re / (w * h) as f64).abs() < 1e-9);
        }
    }
}
