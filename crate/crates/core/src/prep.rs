//! FFT-image preparation: crop, resize, denoise, and contrast enhancement.

use crate::error::{Error, Result};
use crate::geom;
use crate::image::Image2D;

/// Radial enhancement parameters for the factor map applied to log-magnitude
/// FFT images. The factor map is exp(gamma * (r/R - 1)): 1 at the corners,
/// exp(-gamma) at the center, suppressing the DC glow; the gain compensates
/// the brightness lost to the map.
#[derive(Debug, Clone, Copy)]
pub struct EnhanceParams {
    pub gamma: f64,
    pub gain: f64,
}

impl Default for EnhanceParams {
    fn default() -> Self {
        EnhanceParams {
            gamma: 2.0,
            gain: 1.8,
        }
    }
}

impl EnhanceParams {
    pub fn validate(&self) -> Result<()> {
        if self.gamma < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "enhance gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if !(self.gain > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "enhance gain must be > 0, got {}",
                self.gain
            )));
        }
        Ok(())
    }
}

/// Extracts a centered window of the given size.
pub fn center_crop(img: &Image2D, target_w: usize, target_h: usize) -> Result<Image2D> {
    if target_w > img.width() || target_h > img.height() {
        return Err(Error::InvalidArgument(format!(
            "crop {target_w}x{target_h} exceeds source {}",
            img.dims_label()
        )));
    }
    let x0 = (img.width() - target_w) / 2;
    let y0 = (img.height() - target_h) / 2;
    let mut out = Image2D::from_fn(target_w, target_h, |x, y| img.get(x0 + x, y0 + y));
    out.pixel_size = img.pixel_size;
    Ok(out)
}

/// Bilinear resize with the pixel-center coordinate convention.
pub fn resize(img: &Image2D, target_w: usize, target_h: usize) -> Result<Image2D> {
    if target_w < 2 || target_h < 2 {
        return Err(Error::InvalidArgument(format!(
            "resize target must be at least 2x2, got {target_w}x{target_h}"
        )));
    }
    if target_w == img.width() && target_h == img.height() {
        return Ok(img.clone());
    }
    let sx = img.width() as f64 / target_w as f64;
    let sy = img.height() as f64 / target_h as f64;
    let mut out = Image2D::from_fn(target_w, target_h, |x, y| {
        let src_x = (x as f64 + 0.5) * sx - 0.5;
        let src_y = (y as f64 + 0.5) * sy - 0.5;
        sample_bilinear(img, src_x, src_y)
    });
    out.pixel_size = img.pixel_size;
    Ok(out)
}

/// Bilinear sample with edge clamping.
pub(crate) fn sample_bilinear(img: &Image2D, x: f64, y: f64) -> f64 {
    let wmax = img.width() as isize - 1;
    let hmax = img.height() as isize - 1;
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let clamp = |i: isize, max: isize| i.clamp(0, max) as usize;
    let x0i = clamp(x0 as isize, wmax);
    let x1i = clamp(x0 as isize + 1, wmax);
    let y0i = clamp(y0 as isize, hmax);
    let y1i = clamp(y0 as isize + 1, hmax);
    let top = img.get(x0i, y0i) * (1.0 - fx) + img.get(x1i, y0i) * fx;
    let bot = img.get(x0i, y1i) * (1.0 - fx) + img.get(x1i, y1i) * fx;
    top * (1.0 - fy) + bot * fy
}

/// Separable Gaussian blur, kernel radius ceil(3*sigma), reflected edges.
/// `sigma = 0` is the identity.
pub fn gaussian_blur(img: &Image2D, sigma: f64) -> Image2D {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for i in -radius..=radius {
        kernel.push((-(i as f64 * i as f64) / (2.0 * sigma * sigma)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= norm;
    }

    let (w, h) = (img.width(), img.height());
    // Horizontal pass.
    let mut tmp = Image2D::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, &k) in kernel.iter().enumerate() {
                let sx = geom::reflect_index(x as isize + ki as isize - radius, w);
                acc += k * img.get(sx, y);
            }
            tmp.set(x, y, acc);
        }
    }
    // Vertical pass.
    let mut out = Image2D::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, &k) in kernel.iter().enumerate() {
                let sy = geom::reflect_index(y as isize + ki as isize - radius, h);
                acc += k * tmp.get(x, sy);
            }
            out.set(x, y, acc);
        }
    }
    out.pixel_size = img.pixel_size;
    out
}

/// Applies the radial factor map and gain to a [0,1] image, clamping back
/// to [0,1].
pub fn enhance(img: &Image2D, params: &EnhanceParams) -> Image2D {
    let (w, h) = (img.width(), img.height());
    let cx = geom::center(w);
    let cy = geom::center(h);
    // Max center-to-corner distance; corners receive factor 1.
    let r_max = (cx * cx + cy * cy).sqrt();
    let mut out = Image2D::from_fn(w, h, |x, y| {
        let r = geom::radius(w, h, x as f64, y as f64);
        let factor = (params.gamma * (r / r_max - 1.0)).exp();
        (params.gain * img.get(x, y) * factor).clamp(0.0, 1.0)
    });
    out.pixel_size = img.pixel_size;
    out
}
