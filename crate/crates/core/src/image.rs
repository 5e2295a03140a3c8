//! Raster types: single images and frame stacks.

use crate::error::{Error, Result};

/// Seconds of beam exposure per stack slice when the file does not say.
pub const DEFAULT_FRAME_PERIOD_S: f64 = 2.46;

/// Single-channel floating-point raster, row-major, with an optional
/// physical pixel size in nm/px.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    pub pixel_size: Option<f64>,
}

impl Image2D {
    /// Builds an image from row-major pixel data, validating the invariants
    /// (dimensions at least 2x2, pixel count matches, all values finite).
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be at least 2x2, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "pixel buffer length {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "image contains a non-finite value {bad}"
            )));
        }
        Ok(Image2D {
            width,
            height,
            pixels,
            pixel_size: None,
        })
    }

    /// All-zero image.
    pub fn zeros(width: usize, height: usize) -> Self {
        Image2D::new(width, height, vec![0.0; width * height]).expect("valid dims")
    }

    /// Fills each pixel from a function of (x, y).
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Image2D::new(width, height, pixels).expect("generator produced non-finite value")
    }

    pub fn with_pixel_size(mut self, nm_per_px: f64) -> Self {
        self.pixel_size = Some(nm_per_px);
        self
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
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.pixels[y * self.width + x] = v;
    }

    #[inline]
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.pixels {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Min-max normalizes into [0, 1]. A constant image maps to all zeros.
    pub fn normalized(&self) -> Image2D {
        let (lo, hi) = self.min_max();
        let span = hi - lo;
        let mut out = self.clone();
        if span <= 0.0 {
            out.pixels.iter_mut().for_each(|v| *v = 0.0);
        } else {
            out.pixels.iter_mut().for_each(|v| *v = (*v - lo) / span);
        }
        out
    }

    pub fn same_dims(&self, other: &Image2D) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn dims_label(&self) -> String {
        format!("{}x{}", self.width, self.height)
    }
}

/// Ordered stack of same-sized frames with a fixed exposure period.
#[derive(Debug, Clone)]
pub struct ImageStack {
    frames: Vec<Image2D>,
    pub frame_period_s: f64,
    pub pixel_size: Option<f64>,
}

impl ImageStack {
    pub fn new(frames: Vec<Image2D>, frame_period_s: f64) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptyStack);
        }
        if !(frame_period_s > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "frame period must be positive, got {frame_period_s}"
            )));
        }
        let (w, h) = (frames[0].width(), frames[0].height());
        for (k, f) in frames.iter().enumerate() {
            if f.width() != w || f.height() != h {
                return Err(Error::dims(
                    format!("frame 0 is {w}x{h}"),
                    format!("frame {k} is {}", f.dims_label()),
                ));
            }
        }
        Ok(ImageStack {
            frames,
            frame_period_s,
            pixel_size: None,
        })
    }

    #[inline]
    pub fn frames(&self) -> &[Image2D] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }
}
