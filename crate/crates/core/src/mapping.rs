//! Spatial phase maps: per-component spectrum masks, masked-IFFT maps,
//! and color overlays.

use num_complex::Complex;

use crate::detect::BinaryMask;
use crate::error::{Error, Result};
use crate::fft::{inverse_fft_complex, shifted_to_unshifted, ComplexField};
use crate::geom;
use crate::image::Image2D;
use crate::instances::Feature;
use crate::prep::gaussian_blur;

/// Mapping parameters.
#[derive(Debug, Clone, Copy)]
pub struct MapParams {
    /// Disk radius as a multiple of the feature's equivalent radius.
    pub radius_scale: f64,
    /// Binary cut as a fraction of the map maximum.
    pub threshold_fraction: f64,
    /// Gaussian sigma applied to the IFFT magnitude before thresholding,
    /// turning the oscillating fringe into its envelope. 0 disables.
    pub smooth_sigma: f64,
}

impl Default for MapParams {
    fn default() -> Self {
        MapParams {
            radius_scale: 1.0,
            threshold_fraction: 0.35,
            smooth_sigma: 3.0,
        }
    }
}

/// Binary spatial map of one component at TEM-image resolution.
#[derive(Debug, Clone)]
pub struct ComponentMap {
    pub name: String,
    pub hkl: String,
    pub map: BinaryMask,
    pub threshold: f64,
    pub color_index: usize,
    /// Set when the spectrum mask was empty and the map is trivially blank.
    pub empty_mask: bool,
}

/// Disk mask over the shifted spectrum: one disk per feature at its
/// centroid plus the point-symmetric partner disk, radius
/// `radius_scale * equivalent_diameter / 2`. Keeping both partners keeps
/// the masked spectrum Hermitian so the IFFT stays real.
pub fn build_feature_mask(
    features: &[&Feature],
    width: usize,
    height: usize,
    radius_scale: f64,
) -> BinaryMask {
    let mut disks: Vec<(f64, f64, f64)> = Vec::new();
    for f in features {
        let r = radius_scale * f.equivalent_diameter / 2.0;
        if r <= 0.0 {
            continue;
        }
        let (rx, ry) = geom::point_reflect_f(width, height, f.centroid_x, f.centroid_y);
        disks.push((f.centroid_x, f.centroid_y, r));
        disks.push((rx, ry, r));
    }
    BinaryMask::from_fn(width, height, |x, y| {
        disks.iter().any(|&(cx, cy, r)| {
            (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r
        })
    })
}

/// Same mask built from explicit (x, y, radius) disks in shifted
/// coordinates, partners included.
pub fn disk_mask_with_partners(
    disks: &[(f64, f64, f64)],
    width: usize,
    height: usize,
) -> BinaryMask {
    let mut all = Vec::with_capacity(disks.len() * 2);
    for &(x, y, r) in disks {
        let (rx, ry) = geom::point_reflect_f(width, height, x, y);
        all.push((x, y, r));
        all.push((rx, ry, r));
    }
    BinaryMask::from_fn(width, height, |x, y| {
        all.iter()
            .any(|&(cx, cy, r)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r)
    })
}

/// Inverse transform of the spectrum restricted to a mask given in shifted
/// coordinates. Returns the raw complex image.
pub fn masked_ifft(field: &ComplexField, mask: &BinaryMask) -> Result<Vec<Complex<f64>>> {
    let (w, h) = (field.width(), field.height());
    if mask.width() != w || mask.height() != h {
        return Err(Error::dims(
            format!("field {w}x{h}"),
            format!("mask {}", mask.dims_label()),
        ));
    }
    let mut kept = ComplexField::from_data(w, h, vec![Complex::new(0.0, 0.0); w * h]);
    for sy in 0..h {
        for sx in 0..w {
            if mask.get(sx, sy) {
                let (u, v) = shifted_to_unshifted(w, h, sx, sy);
                kept.set(u, v, field.get(u, v));
            }
        }
    }
    Ok(inverse_fft_complex(&kept))
}

/// Smoothed magnitude of the masked IFFT, scaled so the maximum is 1.
/// Scaling by the max (rather than min-max) keeps a flat envelope flat
/// instead of stretching numerical ripple across [0, 1].
pub fn component_intensity_map(
    field: &ComplexField,
    mask: &BinaryMask,
    smooth_sigma: f64,
) -> Result<Image2D> {
    let data = masked_ifft(field, mask)?;
    let mag = Image2D::new(
        field.width(),
        field.height(),
        data.iter().map(|c| c.norm()).collect(),
    )
    .expect("field dims are valid image dims");
    let mut smoothed = gaussian_blur(&mag, smooth_sigma);
    let (_, hi) = smoothed.min_max();
    if hi > 0.0 {
        smoothed.pixels_mut().iter_mut().for_each(|v| *v /= hi);
    }
    Ok(smoothed)
}

/// Thresholded spatial map of one component: the spectrum is masked, the
/// IFFT magnitude smoothed to its envelope and normalized, and pixels at or
/// above `threshold_fraction` of the maximum become foreground.
///
/// An empty mask yields an all-zero map flagged as such, not an error.
pub fn component_map(
    field: &ComplexField,
    mask: &BinaryMask,
    name: &str,
    hkl: &str,
    color_index: usize,
    params: &MapParams,
) -> Result<ComponentMap> {
    let (w, h) = (field.width(), field.height());
    if mask.is_empty() {
        return Ok(ComponentMap {
            name: name.to_string(),
            hkl: hkl.to_string(),
            map: BinaryMask::new(w, h),
            threshold: params.threshold_fraction,
            color_index,
            empty_mask: true,
        });
    }
    let intensity = component_intensity_map(field, mask, params.smooth_sigma)?;
    let map = BinaryMask::from_fn(w, h, |x, y| intensity.get(x, y) >= params.threshold_fraction);
    Ok(ComponentMap {
        name: name.to_string(),
        hkl: hkl.to_string(),
        map,
        threshold: params.threshold_fraction,
        color_index,
        empty_mask: false,
    })
}

/// Fixed overlay palette; map colors cycle through it in component order.
pub const PALETTE: [[u8; 3]; 8] = [
    [255, 0, 0],     // red
    [0, 255, 0],     // green
    [0, 96, 255],    // blue
    [255, 255, 0],   // yellow
    [255, 0, 255],   // magenta
    [0, 255, 255],   // cyan
    [255, 160, 0],   // orange
    [160, 255, 120], // light green
];

/// Renders the base image in grayscale with each component map blended at
/// 50% opacity in its palette color. Deterministic for identical inputs.
pub fn overlay(base: &Image2D, maps: &[ComponentMap]) -> Result<Vec<u8>> {
    let (w, h) = (base.width(), base.height());
    for m in maps {
        if m.map.width() != w || m.map.height() != h {
            return Err(Error::dims(base.dims_label(), m.map.dims_label()));
        }
    }
    // Min-max normalize the base, but render a constant image at its
    // clamped value instead of collapsing it to black.
    let (lo, hi) = base.min_max();
    let normalized = if hi > lo { base.normalized() } else { base.clone() };
    let mut rgb = vec![0u8; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            let gray = normalized.get(x, y).clamp(0.0, 1.0) * 255.0;
            let mut channels = [gray, gray, gray];
            for m in maps {
                if m.map.get(x, y) {
                    let color = PALETTE[m.color_index % PALETTE.len()];
                    for (c, &pc) in channels.iter_mut().zip(&color) {
                        *c = 0.5 * *c + 0.5 * pc as f64;
                    }
                }
            }
            let idx = (y * w + x) * 3;
            for (k, &c) in channels.iter().enumerate() {
                rgb[idx + k] = c.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(rgb)
}
