//! Forward/inverse 2D DFT and spectrum views.
//!
//! The forward transform carries the 1/(M*N) normalization:
//!
//! ```text
//! F(u,v) = 1/(M*N) * sum_x sum_y f(x,y) * exp(-2*pi*i*(u*x/M + v*y/N))
//! ```
//!
//! so the inverse is the plain unnormalized sum and a forward/inverse pair
//! round-trips exactly. Under this convention Parseval reads
//! `sum |f|^2 = M*N * sum |F|^2`. Arbitrary (non-power-of-two) sizes are
//! supported through rustfft's mixed-radix/Bluestein planner.

use num_complex::Complex;
use rustfft::{FftDirection, FftPlanner};

use crate::image::Image2D;

/// 2D complex spectrum, row-major, DC at index (0, 0).
#[derive(Debug, Clone)]
pub struct ComplexField {
    width: usize,
    height: usize,
    data: Vec<Complex<f64>>,
}

impl ComplexField {
    pub fn from_data(width: usize, height: usize, data: Vec<Complex<f64>>) -> Self {
        assert_eq!(data.len(), width * height, "field buffer size mismatch");
        ComplexField {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Complex<f64> {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, c: Complex<f64>) {
        self.data[v * self.width + u] = c;
    }

    #[inline]
    pub fn data(&self) -> &[Complex<f64>] {
        &self.data
    }

    /// Linear magnitude |F| with the DC bin shifted to the center.
    pub fn magnitude_shifted(&self) -> Image2D {
        let (w, h) = (self.width, self.height);
        Image2D::from_fn(w, h, |sx, sy| {
            let (u, v) = shifted_to_unshifted(w, h, sx, sy);
            self.get(u, v).norm()
        })
    }

    /// Sum of |F|^2 over all coefficients.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Maps a shifted-view index to the unshifted spectrum index.
/// The DC bin (0,0) appears at (W/2, H/2) in the shifted view.
#[inline]
pub fn shifted_to_unshifted(w: usize, h: usize, sx: usize, sy: usize) -> (usize, usize) {
    ((sx + w.div_ceil(2)) % w, (sy + h.div_ceil(2)) % h)
}

/// Maps an unshifted spectrum index to its shifted-view position.
#[inline]
pub fn unshifted_to_shifted(w: usize, h: usize, u: usize, v: usize) -> (usize, usize) {
    ((u + w / 2) % w, (v + h / 2) % h)
}

fn fft_2d(width: usize, height: usize, data: &mut [Complex<f64>], direction: FftDirection) {
    let mut planner = FftPlanner::new();

    let row_fft = planner.plan_fft(width, direction);
    let mut scratch = vec![Complex::default(); row_fft.get_inplace_scratch_len()];
    for row in data.chunks_exact_mut(width) {
        row_fft.process_with_scratch(row, &mut scratch);
    }

    let col_fft = planner.plan_fft(height, direction);
    scratch.resize(col_fft.get_inplace_scratch_len(), Complex::default());
    let mut transposed = transpose(width, height, data);
    for col in transposed.chunks_exact_mut(height) {
        col_fft.process_with_scratch(col, &mut scratch);
    }
    // Transpose back so (u,v) addressing matches the input layout.
    let restored = transpose(height, width, &transposed);
    data.copy_from_slice(&restored);
}

fn transpose(width: usize, height: usize, src: &[Complex<f64>]) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::default(); src.len()];
    for y in 0..height {
        for x in 0..width {
            out[x * height + y] = src[y * width + x];
        }
    }
    out
}

/// Forward 2D DFT with the 1/(M*N) normalization.
pub fn forward_fft(img: &Image2D) -> ComplexField {
    let (w, h) = (img.width(), img.height());
    let mut data: Vec<Complex<f64>> = img.pixels().iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft_2d(w, h, &mut data, FftDirection::Forward);
    let scale = 1.0 / (w as f64 * h as f64);
    for c in &mut data {
        *c *= scale;
    }
    ComplexField::from_data(w, h, data)
}

/// Unnormalized inverse 2D DFT; returns the real part.
pub fn inverse_fft(field: &ComplexField) -> Image2D {
    inverse_fft_with_residue(field).0
}

/// Inverse transform plus the imaginary residue ratio
/// max|imag| / max|real|, which should be negligible for Hermitian input.
pub fn inverse_fft_with_residue(field: &ComplexField) -> (Image2D, f64) {
    let data = inverse_fft_complex(field);
    let mut max_re: f64 = 0.0;
    let mut max_im: f64 = 0.0;
    for c in &data {
        max_re = max_re.max(c.re.abs());
        max_im = max_im.max(c.im.abs());
    }
    let residue = if max_re > 0.0 { max_im / max_re } else { 0.0 };
    let img = Image2D::new(
        field.width(),
        field.height(),
        data.iter().map(|c| c.re).collect(),
    )
    .expect("inverse transform produced non-finite values");
    (img, residue)
}

/// Raw complex inverse transform, for masked-spectrum work where the input
/// may not be Hermitian and the magnitude is wanted instead of the real part.
pub fn inverse_fft_complex(field: &ComplexField) -> Vec<Complex<f64>> {
    let (w, h) = (field.width(), field.height());
    let mut data = field.data().to_vec();
    fft_2d(w, h, &mut data, FftDirection::Inverse);
    data
}

/// Shifted log-magnitude view: log(1 + |F|) min-max normalized to [0, 1].
/// An all-zero field yields an all-zero image.
pub fn log_magnitude(field: &ComplexField) -> Image2D {
    let mut img = field.magnitude_shifted();
    for v in img.pixels_mut() {
        *v = v.ln_1p();
    }
    img.normalized()
}
