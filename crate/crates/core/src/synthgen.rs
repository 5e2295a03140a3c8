//! Synthetic lattice-fringe images, FFT-domain spot fixtures with ground
//! truth, and affine augmentation — the oracle side of the pipeline tests
//! and an exporter for labeled training corpora.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::detect::BinaryMask;
use crate::error::{Error, Result};
use crate::geom;
use crate::image::Image2D;
use crate::io::pgm;
use crate::phase::ScaleChain;
use crate::prep::{resize, sample_bilinear};

/// One lattice fringe to synthesize.
#[derive(Debug, Clone, Copy)]
pub struct FringeSpec {
    pub d_angstrom: f64,
    /// Fringe normal direction in radians (0 = along +x).
    pub orientation: f64,
    pub amplitude: f64,
    pub phase: f64,
    /// None = full field; Some(cx, cy, r) restricts the fringe to a disk.
    pub region: Option<(f64, f64, f64)>,
}

impl FringeSpec {
    pub fn new(d_angstrom: f64, orientation: f64, amplitude: f64) -> Self {
        FringeSpec {
            d_angstrom,
            orientation,
            amplitude,
            phase: 0.0,
            region: None,
        }
    }
}

/// Expected FFT-image location of one fringe's spot pair.
#[derive(Debug, Clone, Copy)]
pub struct SpotTruth {
    pub x: f64,
    pub y: f64,
    pub partner_x: f64,
    pub partner_y: f64,
    pub radius_px: f64,
    pub d_angstrom: f64,
}

/// Synthesizes a lattice image as a sum of cosine fringes plus Gaussian
/// noise, returning the expected FFT spot pair per fringe (native scale
/// chain, DC bin at size/2).
pub fn synth_lattice(
    specs: &[FringeSpec],
    size: usize,
    pixel_size: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<(Image2D, Vec<SpotTruth>)> {
    let chain = ScaleChain::native(size, pixel_size)?;
    let mut truths = Vec::with_capacity(specs.len());
    for spec in specs {
        if !(spec.d_angstrom > 0.0) || !(spec.amplitude > 0.0) {
            return Err(Error::InvalidArgument(
                "fringe d-spacing and amplitude must be positive".into(),
            ));
        }
        let period_px = spec.d_angstrom / 10.0 / pixel_size;
        if period_px <= 2.0 || period_px >= size as f64 / 2.0 {
            return Err(Error::InvalidArgument(format!(
                "fringe of d = {} A maps to a period of {period_px:.2} px, outside (2, {}/2)",
                spec.d_angstrom, size
            )));
        }
        let radius = chain.radius_for_d(spec.d_angstrom);
        let dc = size as f64 / 2.0;
        let (dx, dy) = (radius * spec.orientation.cos(), radius * spec.orientation.sin());
        truths.push(SpotTruth {
            x: dc + dx,
            y: dc + dy,
            partner_x: dc - dx,
            partner_y: dc - dy,
            radius_px: radius,
            d_angstrom: spec.d_angstrom,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma.max(0.0)).expect("valid sigma");
    let img = Image2D::from_fn(size, size, |x, y| {
        let mut v = 0.0;
        for spec in specs {
            if let Some((cx, cy, r)) = spec.region {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                if d2 > r * r {
                    continue;
                }
            }
            let period_px = spec.d_angstrom / 10.0 / pixel_size;
            let u = x as f64 * spec.orientation.cos() + y as f64 * spec.orientation.sin();
            v += spec.amplitude * (2.0 * PI * u / period_px + spec.phase).cos();
        }
        if noise_sigma > 0.0 {
            v += noise.sample(&mut rng);
        }
        v
    });
    Ok((img, truths))
}

/// One synthetic FFT spot (position in shifted FFT coordinates).
#[derive(Debug, Clone, Copy)]
pub struct SpotSpec {
    pub x: f64,
    pub y: f64,
    /// Peak amplitude in units of the background noise sigma.
    pub snr: f64,
    /// Gaussian width of the bump in pixels.
    pub sigma: f64,
}

/// Builds a synthetic FFT-magnitude image: Gaussian bumps at the given
/// positions and their point reflections over a radially decaying noisy
/// background, along with the ground-truth disk mask.
pub fn synth_fft_spots(
    spots: &[SpotSpec],
    size: usize,
    noise_sigma: f64,
    seed: u64,
) -> (Image2D, BinaryMask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma).expect("valid sigma");
    let decay = size as f64 / 6.0;

    let mut bumps: Vec<(f64, f64, f64, f64)> = Vec::new();
    for s in spots {
        let (rx, ry) = geom::point_reflect_f(size, size, s.x, s.y);
        bumps.push((s.x, s.y, s.snr * noise_sigma, s.sigma));
        bumps.push((rx, ry, s.snr * noise_sigma, s.sigma));
    }

    let img = Image2D::from_fn(size, size, |x, y| {
        let r = geom::radius(size, size, x as f64, y as f64);
        let mut v = 0.6 * (-r / decay).exp() + noise.sample(&mut rng);
        for &(cx, cy, amp, sigma) in &bumps {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            v += amp * (-d2 / (2.0 * sigma * sigma)).exp();
        }
        v.max(0.0)
    });

    let mask = BinaryMask::from_fn(size, size, |x, y| {
        bumps.iter().any(|&(cx, cy, _, sigma)| {
            let rr = 2.0 * sigma;
            (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= rr * rr
        })
    });
    (img, mask)
}

/// Augmentation ranges; each draw samples one affine transform.
#[derive(Debug, Clone, Copy)]
pub struct AugmentParams {
    /// Rotation range in degrees (draw is uniform in +/- range).
    pub rotation_deg: f64,
    /// Horizontal shift range as a fraction of the width.
    pub shift_fraction: f64,
    /// Shear range in degrees.
    pub shear_deg: f64,
    /// Zoom range as a fraction (scale drawn in 1 +/- range).
    pub zoom_fraction: f64,
    pub seed: u64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            rotation_deg: 0.2,
            shift_fraction: 0.05,
            shear_deg: 0.05,
            zoom_fraction: 0.05,
            seed: 0,
        }
    }
}

/// One concrete affine draw.
#[derive(Debug, Clone, Copy)]
pub struct AffineTransform {
    pub rotation_deg: f64,
    pub shift_px: f64,
    pub shear_deg: f64,
    pub zoom: f64,
}

impl AffineTransform {
    pub fn identity() -> Self {
        AffineTransform {
            rotation_deg: 0.0,
            shift_px: 0.0,
            shear_deg: 0.0,
            zoom: 1.0,
        }
    }

    /// Samples a transform uniformly from the parameter ranges.
    pub fn sample(params: &AugmentParams, width: usize, rng: &mut impl Rng) -> Self {
        let draw = |range: f64, rng: &mut dyn rand::RngCore| {
            if range > 0.0 {
                rng.gen_range(-range..=range)
            } else {
                0.0
            }
        };
        AffineTransform {
            rotation_deg: draw(params.rotation_deg, rng),
            shift_px: draw(params.shift_fraction * width as f64, rng),
            shear_deg: draw(params.shear_deg, rng),
            zoom: 1.0 + draw(params.zoom_fraction, rng),
        }
    }
}

/// Applies an affine transform about the image center with bilinear
/// sampling and reflection padding.
pub fn apply_affine(img: &Image2D, t: &AffineTransform) -> Image2D {
    let (w, h) = (img.width(), img.height());
    let cx = geom::center(w);
    let cy = geom::center(h);
    let theta = t.rotation_deg.to_radians();
    let shear = t.shear_deg.to_radians().tan();
    // Forward map: zoom * rotation * shear, then horizontal shift.
    // Sampling inverts it per output pixel.
    let (cos_t, sin_t) = (theta.cos(), theta.sin());
    // forward = Z * R * S with S = [[1, shear], [0, 1]]
    let a = t.zoom * cos_t;
    let b = t.zoom * (cos_t * shear - sin_t);
    let c = t.zoom * sin_t;
    let d = t.zoom * (sin_t * shear + cos_t);
    let det = a * d - b * c;
    let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);

    Image2D::from_fn(w, h, |x, y| {
        let ox = x as f64 - cx - t.shift_px;
        let oy = y as f64 - cy;
        let sx = ia * ox + ib * oy + cx;
        let sy = ic * ox + id * oy + cy;
        let rx = reflect_coord(sx, w);
        let ry = reflect_coord(sy, h);
        sample_bilinear(img, rx, ry)
    })
}

/// Reflects a fractional coordinate into [0, n-1].
fn reflect_coord(v: f64, n: usize) -> f64 {
    let max = n as f64 - 1.0;
    if max <= 0.0 {
        return 0.0;
    }
    let period = 2.0 * max;
    let mut m = (v - 0.0).rem_euclid(period);
    if m > max {
        m = period - m;
    }
    m
}

/// One random affine draw applied to the image; deterministic per seed.
pub fn augment(img: &Image2D, params: &AugmentParams) -> Image2D {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let t = AffineTransform::sample(params, img.width(), &mut rng);
    apply_affine(img, &t)
}

/// Emits `count` augmented image/mask pairs: each pair gets one transform
/// draw (derived from the base seed and the pair index), is resized to
/// `target_size` square, cropped to the top half, and written as 8-bit PGM
/// together with a manifest row.
pub fn export_training_set(
    sources: &[(Image2D, BinaryMask)],
    count: usize,
    out_dir: &Path,
    params: &AugmentParams,
    target_size: usize,
) -> Result<()> {
    if sources.is_empty() {
        return Err(Error::InvalidArgument(
            "training export needs at least one source image".into(),
        ));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut manifest =
        String::from("file,source,seed,rotation_deg,shift_px,shear_deg,zoom\n");
    for i in 0..count {
        let (src_img, src_mask) = &sources[i % sources.len()];
        let pair_seed = params.seed.wrapping_add(i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mut rng = ChaCha8Rng::seed_from_u64(pair_seed);
        let t = AffineTransform::sample(params, src_img.width(), &mut rng);

        let img = apply_affine(src_img, &t);
        let mask_img = apply_affine(&src_mask.to_image(), &t);

        let img = resize(&img, target_size, target_size)?;
        let mask_img = resize(&mask_img, target_size, target_size)?;
        let img = crate::detect::crop_half_image(&img)?;
        let mask_img = crate::detect::crop_half_image(&mask_img)?;
        // Re-binarize the interpolated mask.
        let mask_img = Image2D::from_fn(mask_img.width(), mask_img.height(), |x, y| {
            if mask_img.get(x, y) >= 0.5 {
                1.0
            } else {
                0.0
            }
        });

        let img_name = format!("img_{i:04}.pgm");
        let mask_name = format!("mask_{i:04}.pgm");
        pgm::write_pgm(&img, &out_dir.join(&img_name))?;
        pgm::write_pgm(&mask_img, &out_dir.join(&mask_name))?;
        manifest.push_str(&format!(
            "{img_name},{src},{seed},{rot:.6},{shift:.6},{shear:.6},{zoom:.6}\n",
            src = i % sources.len(),
            seed = pair_seed,
            rot = t.rotation_deg,
            shift = t.shift_px,
            shear = t.shear_deg,
            zoom = t.zoom,
        ));
    }
    let manifest_path = out_dir.join("manifest.csv");
    fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{crop_half, reconstruct_full};
    use approx::assert_relative_eq;
    use tempfile::tempdir;

    #[test]
    fn fringe_spot_radius_bookkeeping() {
        // d = 1.6 A at 0.02 nm/px native 1024: radius 128 px.
        let (_, truth) =
            synth_lattice(&[FringeSpec::new(1.6, 0.0, 1.0)], 1024, 0.02, 0.0, 0).unwrap();
        assert_eq!(truth.len(), 1);
        assert_relative_eq!(truth[0].radius_px, 128.0, max_relative = 1e-12);
        assert_relative_eq!(truth[0].x, 512.0 + 128.0, max_relative = 1e-12);
        assert_relative_eq!(truth[0].partner_x, 512.0 - 128.0, max_relative = 1e-12);
    }

    #[test]
    fn no_fringes_no_noise_is_black() {
        let (img, truth) = synth_lattice(&[], 64, 0.02, 0.0, 0).unwrap();
        assert!(truth.is_empty());
        assert!(img.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn orthogonal_fringes_land_at_equal_radius() {
        let specs = [
            FringeSpec::new(2.0, 0.0, 1.0),
            FringeSpec::new(2.0, PI / 2.0, 1.0),
        ];
        let (_, truth) = synth_lattice(&specs, 512, 0.02, 0.0, 0).unwrap();
        assert_relative_eq!(truth[0].radius_px, truth[1].radius_px, max_relative = 1e-12);
        // 90 degrees apart.
        let a = (truth[0].x - 256.0, truth[0].y - 256.0);
        let b = (truth[1].x - 256.0, truth[1].y - 256.0);
        assert_relative_eq!(a.0 * b.0 + a.1 * b.1, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn unrepresentable_spacing_is_rejected() {
        // Period would be 1 px.
        assert!(synth_lattice(&[FringeSpec::new(0.2, 0.0, 1.0)], 64, 0.02, 0.0, 0).is_err());
        // Period would exceed half the field.
        assert!(synth_lattice(&[FringeSpec::new(40.0, 0.0, 1.0)], 64, 0.02, 0.0, 0).is_err());
    }

    #[test]
    fn spot_fixture_mask_counts_disks() {
        let spots = [
            SpotSpec { x: 80.0, y: 64.0, snr: 8.0, sigma: 3.0 },
            SpotSpec { x: 50.0, y: 90.0, snr: 8.0, sigma: 3.0 },
            SpotSpec { x: 100.0, y: 100.0, snr: 8.0, sigma: 3.0 },
        ];
        let (_, mask) = synth_fft_spots(&spots, 160, 0.05, 1);
        let (_, blobs) = crate::detect::connected_components(&mask);
        assert_eq!(blobs, 6);
    }

    #[test]
    fn zero_spots_gives_empty_mask() {
        let (img, mask) = synth_fft_spots(&[], 64, 0.05, 1);
        assert!(mask.is_empty());
        assert!(img.pixels().iter().any(|&v| v > 0.0));
    }

    #[test]
    fn spot_fixture_masks_are_point_symmetric() {
        let spots = [SpotSpec { x: 40.0, y: 20.0, snr: 8.0, sigma: 3.0 }];
        let (_, mask) = synth_fft_spots(&spots, 64, 0.05, 3);
        let full = reconstruct_full(&crop_half(&mask).unwrap());
        assert_eq!(full, mask);
    }

    #[test]
    fn zero_ranges_are_identity() {
        let img = Image2D::from_fn(32, 32, |x, y| ((x * 7 + y * 3) % 13) as f64);
        let params = AugmentParams {
            rotation_deg: 0.0,
            shift_fraction: 0.0,
            shear_deg: 0.0,
            zoom_fraction: 0.0,
            seed: 5,
        };
        let out = augment(&img, &params);
        for (a, b) in img.pixels().iter().zip(out.pixels()) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn augment_is_deterministic_per_seed() {
        let img = Image2D::from_fn(32, 32, |x, y| ((x * 5 + y) % 17) as f64);
        let params = AugmentParams { seed: 42, ..AugmentParams::default() };
        assert_eq!(augment(&img, &params), augment(&img, &params));
        let other = AugmentParams { seed: 43, ..AugmentParams::default() };
        assert_ne!(augment(&img, &params), augment(&img, &other));
    }

    #[test]
    fn exact_rotation_moves_impulse_along_the_arc() {
        // Impulse at (100, 0) from the center, rotated by +0.2 degrees:
        // the closed-form target is (100 cos a, 100 sin a) from the center.
        let n = 257;
        let c = geom::center(n) as usize as f64;
        let mut img = Image2D::zeros(n, n);
        img.set((c + 100.0) as usize, c as usize, 1.0);
        let t = AffineTransform {
            rotation_deg: 0.2,
            ..AffineTransform::identity()
        };
        let out = apply_affine(&img, &t);
        let mut best = (0usize, 0usize, 0.0);
        for y in 0..n {
            for x in 0..n {
                if out.get(x, y) > best.2 {
                    best = (x, y, out.get(x, y));
                }
            }
        }
        let a = 0.2f64.to_radians();
        let ex = c + 100.0 * a.cos();
        let ey = c + 100.0 * a.sin();
        let dist = ((best.0 as f64 - ex).powi(2) + (best.1 as f64 - ey).powi(2)).sqrt();
        assert!(dist <= 1.0, "impulse at ({}, {}), expected ({ex:.2}, {ey:.2})", best.0, best.1);
    }

    #[test]
    fn export_writes_pairs_and_manifest() {
        let dir = tempdir().unwrap();
        let img = Image2D::from_fn(64, 64, |x, y| ((x + y) % 9) as f64 / 8.0);
        let mask = BinaryMask::from_fn(64, 64, |x, y| (x / 8 + y / 8) % 2 == 0);
        let params = AugmentParams::default();
        export_training_set(&[(img, mask)], 10, dir.path(), &params, 64).unwrap();
        let manifest = fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
        assert_eq!(manifest.lines().count(), 11); // header + 10 rows
        for i in 0..10 {
            let img = pgm::read_pgm(&dir.path().join(format!("img_{i:04}.pgm"))).unwrap();
            assert_eq!((img.width(), img.height()), (64, 32));
            let mask = pgm::read_pgm(&dir.path().join(format!("mask_{i:04}.pgm"))).unwrap();
            assert_eq!((mask.width(), mask.height()), (64, 32));
        }
    }

    #[test]
    fn export_count_zero_writes_manifest_only() {
        let dir = tempdir().unwrap();
        let img = Image2D::zeros(32, 32);
        let mask = BinaryMask::new(32, 32);
        export_training_set(&[(img, mask)], 0, dir.path(), &AugmentParams::default(), 32).unwrap();
        let manifest = fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
        assert_eq!(manifest.lines().count(), 1);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn export_requires_a_source() {
        let dir = tempdir().unwrap();
        assert!(
            export_training_set(&[], 1, dir.path(), &AugmentParams::default(), 32).is_err()
        );
    }
}
