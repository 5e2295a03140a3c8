//! FFT feature masks: thresholding, external mask ingestion, the classical
//! symmetric spot detector, half-image reconstruction, and mask metrics.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geom;
use crate::image::Image2D;
use crate::io::pgm;
use crate::prep::gaussian_blur;

/// Per-pixel foreground/background mask over an FFT image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = BinaryMask::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
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
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn same_dims(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn dims_label(&self) -> String {
        format!("{}x{}", self.width, self.height)
    }

    /// Grayscale view (foreground = 1.0) for writing as PGM.
    pub fn to_image(&self) -> Image2D {
        Image2D::from_fn(self.width, self.height, |x, y| {
            if self.get(x, y) {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// Classical spot detector parameters.
#[derive(Debug, Clone, Copy)]
pub struct DetectParams {
    /// Gaussian pre-blur sigma in pixels.
    pub blur_sigma: f64,
    /// Radius of the central disk excluded from statistics and detection.
    pub dc_exclusion_radius: f64,
    /// Threshold in standard deviations above the residual mean.
    pub k_sigma: f64,
    /// Max centroid distance for the 180-degree partner-blob check.
    pub symmetry_tolerance: f64,
    /// Blobs below this pixel area are discarded.
    pub min_blob_area: usize,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams {
            blur_sigma: 3.0,
            dc_exclusion_radius: 20.0,
            k_sigma: 4.0,
            symmetry_tolerance: 5.0,
            min_blob_area: 4,
        }
    }
}

impl DetectParams {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.blur_sigma < 0.0
            || self.dc_exclusion_radius < 0.0
            || self.k_sigma < 0.0
            || self.symmetry_tolerance < 0.0
        {
            return Err(Error::InvalidArgument(
                "detector parameters must be nonnegative".into(),
            ));
        }
        let min_dim = width.min(height) as f64;
        if self.symmetry_tolerance >= min_dim / 4.0 {
            return Err(Error::InvalidArgument(format!(
                "symmetry tolerance {} too large for a {width}x{height} image",
                self.symmetry_tolerance
            )));
        }
        if min_dim < 2.0 * self.dc_exclusion_radius {
            return Err(Error::InvalidArgument(format!(
                "image {width}x{height} smaller than twice the DC exclusion radius {}",
                self.dc_exclusion_radius
            )));
        }
        Ok(())
    }
}

/// Thresholds a probability map: foreground where prob >= t.
pub fn threshold_mask(prob_map: &Image2D, t: f64) -> Result<BinaryMask> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must lie strictly between 0 and 1, got {t}"
        )));
    }
    Ok(BinaryMask::from_fn(
        prob_map.width(),
        prob_map.height(),
        |x, y| prob_map.get(x, y) >= t,
    ))
}

/// Reads an 8-bit P5 mask: foreground where the stored value is >= 128.
pub fn import_mask(path: &Path, expected_w: usize, expected_h: usize) -> Result<BinaryMask> {
    let img = pgm::read_pgm(path)?;
    if img.width() != expected_w || img.height() != expected_h {
        return Err(Error::dims(
            format!("mask file {} is {}", path.display(), img.dims_label()),
            format!("expected {expected_w}x{expected_h}"),
        ));
    }
    // 128/255 on the [0,1] scale; also sensible for 16-bit inputs.
    let cut = 128.0 / 255.0;
    Ok(BinaryMask::from_fn(expected_w, expected_h, |x, y| {
        img.get(x, y) >= cut
    }))
}

/// 8-connected component labeling. Returns per-pixel component ids
/// (usize::MAX = background) and the component count.
pub(crate) fn connected_components(mask: &BinaryMask) -> (Vec<usize>, usize) {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![usize::MAX; w * h];
    let mut next = 0usize;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.bits[start] || labels[start] != usize::MAX {
            continue;
        }
        labels[start] = next;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            let (x, y) = (idx % w, idx / w);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let nidx = ny as usize * w + nx as usize;
                    if mask.bits[nidx] && labels[nidx] == usize::MAX {
                        labels[nidx] = next;
                        stack.push(nidx);
                    }
                }
            }
        }
        next += 1;
    }
    (labels, next)
}

/// Classical symmetric spot detector for enhanced log-magnitude FFT images.
///
/// Blur, subtract the per-radius median background (FFT magnitude decays
/// radially, so a global threshold would either drown the rim or flood the
/// center), threshold the residual at mean + k*sigma computed outside the
/// DC exclusion disk, drop small blobs, then drop blobs without a
/// 180-degree point-symmetric partner.
pub fn detect_spots(fft_img: &Image2D, params: &DetectParams) -> Result<BinaryMask> {
    let (w, h) = (fft_img.width(), fft_img.height());
    params.validate(w, h)?;

    let blurred = gaussian_blur(fft_img, params.blur_sigma);

    // Median per 1-px annulus.
    let max_band = geom::radius(w, h, 0.0, 0.0).floor() as usize + 1;
    let mut bands: Vec<Vec<f64>> = vec![Vec::new(); max_band + 1];
    for y in 0..h {
        for x in 0..w {
            bands[geom::annulus_index(w, h, x, y)].push(blurred.get(x, y));
        }
    }
    let medians: Vec<f64> = bands
        .into_iter()
        .map(|mut b| {
            if b.is_empty() {
                return 0.0;
            }
            b.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = b.len();
            if n % 2 == 1 {
                b[n / 2]
            } else {
                (b[n / 2 - 1] + b[n / 2]) / 2.0
            }
        })
        .collect();

    let residual = Image2D::from_fn(w, h, |x, y| {
        blurred.get(x, y) - medians[geom::annulus_index(w, h, x, y)]
    });

    // Residual statistics outside the DC exclusion disk.
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut n = 0usize;
    for y in 0..h {
        for x in 0..w {
            if geom::radius(w, h, x as f64, y as f64) >= params.dc_exclusion_radius {
                let v = residual.get(x, y);
                sum += v;
                sum_sq += v * v;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Ok(BinaryMask::new(w, h));
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean).max(0.0);
    let cut = mean + params.k_sigma * var.sqrt();

    let thresholded = BinaryMask::from_fn(w, h, |x, y| {
        geom::radius(w, h, x as f64, y as f64) >= params.dc_exclusion_radius
            && residual.get(x, y) >= cut
    });

    // Blob filtering: area, then point-symmetric partner.
    let (labels, count) = connected_components(&thresholded);
    let mut area = vec![0usize; count];
    let mut cx = vec![0.0f64; count];
    let mut cy = vec![0.0f64; count];
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l != usize::MAX {
                area[l] += 1;
                cx[l] += x as f64;
                cy[l] += y as f64;
            }
        }
    }
    for l in 0..count {
        cx[l] /= area[l] as f64;
        cy[l] /= area[l] as f64;
    }

    let big: Vec<bool> = area.iter().map(|&a| a >= params.min_blob_area).collect();
    let mut keep = vec![false; count];
    for i in 0..count {
        if !big[i] {
            continue;
        }
        let (rx, ry) = geom::point_reflect_f(w, h, cx[i], cy[i]);
        // A blob may be its own partner when it straddles the center.
        for j in 0..count {
            if !big[j] {
                continue;
            }
            let d = ((cx[j] - rx).powi(2) + (cy[j] - ry).powi(2)).sqrt();
            if d <= params.symmetry_tolerance {
                keep[i] = true;
                break;
            }
        }
    }

    Ok(BinaryMask::from_fn(w, h, |x, y| {
        let l = labels[y * w + x];
        l != usize::MAX && keep[l]
    }))
}

/// Top half (rows 0 .. H/2 - 1) of a mask. Height must be even.
pub fn crop_half(mask: &BinaryMask) -> Result<BinaryMask> {
    if mask.height() % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "half-crop requires an even height, got {}",
            mask.height()
        )));
    }
    let half = mask.height() / 2;
    Ok(BinaryMask::from_fn(mask.width(), half, |x, y| {
        mask.get(x, y)
    }))
}

/// Top half of an image. Height must be even.
pub fn crop_half_image(img: &Image2D) -> Result<Image2D> {
    if img.height() % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "half-crop requires an even height, got {}",
            img.height()
        )));
    }
    let half = img.height() / 2;
    let mut out = Image2D::from_fn(img.width(), half, |x, y| img.get(x, y));
    out.pixel_size = img.pixel_size;
    Ok(out)
}

/// Completes a half mask to the full FFT frame using the point symmetry of
/// a real image's magnitude spectrum: the top half is copied verbatim and
/// the bottom half is its 180-degree point reflection about the center.
pub fn reconstruct_full(half: &BinaryMask) -> BinaryMask {
    let w = half.width();
    let full_h = half.height() * 2;
    BinaryMask::from_fn(w, full_h, |x, y| {
        if y < half.height() {
            half.get(x, y)
        } else {
            let (rx, ry) = geom::point_reflect(w, full_h, x, y);
            half.get(rx, ry)
        }
    })
}

/// Dice overlap 2|A intersect B| / (|A| + |B|); 1.0 when both masks are empty.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(Error::dims(a.dims_label(), b.dims_label()));
    }
    let mut inter = 0usize;
    let mut total = 0usize;
    for (pa, pb) in a.bits.iter().zip(&b.bits) {
        inter += (*pa && *pb) as usize;
        total += *pa as usize + *pb as usize;
    }
    if total == 0 {
        Ok(1.0)
    } else {
        Ok(2.0 * inter as f64 / total as f64)
    }
}

/// Per-pixel confusion counts (tp, fp, fn, tn) of a prediction vs truth.
pub fn confusion(pred: &BinaryMask, truth: &BinaryMask) -> Result<(usize, usize, usize, usize)> {
    if !pred.same_dims(truth) {
        return Err(Error::dims(pred.dims_label(), truth.dims_label()));
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut fneg = 0;
    let mut tn = 0;
    for (p, t) in pred.bits.iter().zip(&truth.bits) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => tn += 1,
        }
    }
    Ok((tp, fp, fneg, tn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn threshold_is_inclusive_at_the_cut() {
        let hi = Image2D::from_fn(4, 4, |_, _| 0.9);
        assert_eq!(threshold_mask(&hi, 0.5).unwrap().count(), 16);
        let lo = Image2D::from_fn(4, 4, |_, _| 0.4999);
        assert!(threshold_mask(&lo, 0.5).unwrap().is_empty());
        let eq = Image2D::from_fn(4, 4, |_, _| 0.5);
        assert_eq!(threshold_mask(&eq, 0.5).unwrap().count(), 16);
        assert!(threshold_mask(&hi, 0.0).is_err());
        assert!(threshold_mask(&hi, 1.0).is_err());
    }

    #[test]
    fn threshold_checkerboard() {
        let img = Image2D::from_fn(6, 6, |x, y| ((x + y) % 2) as f64);
        let m = threshold_mask(&img, 0.5).unwrap();
        for y in 0..6 {
            for x in 0..6 {
                assert_eq!(m.get(x, y), (x + y) % 2 == 1);
            }
        }
    }

    #[test]
    fn crop_half_and_reconstruct() {
        let m = BinaryMask::from_fn(1024, 1024, |x, y| (x, y) == (100, 50) || (x, y) == (923, 973));
        let half = crop_half(&m).unwrap();
        assert_eq!(half.height(), 512);
        assert!(half.get(100, 50));
        let full = reconstruct_full(&half);
        assert!(full.get(100, 50));
        assert!(full.get(923, 973));
        assert_eq!(full.count(), 2);
    }

    #[test]
    fn crop_half_rejects_odd_height() {
        let m = BinaryMask::new(4, 3);
        assert!(crop_half(&m).is_err());
        let img = Image2D::zeros(4, 3);
        assert!(crop_half_image(&img).is_err());
    }

    #[test]
    fn reconstruct_empty_half_is_empty() {
        let full = reconstruct_full(&BinaryMask::new(16, 8));
        assert!(full.is_empty());
        assert_eq!(full.height(), 16);
    }

    #[test]
    fn dice_basics() {
        let a = BinaryMask::from_fn(10, 10, |x, _| x < 5);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        let b = BinaryMask::from_fn(10, 10, |x, _| x >= 5);
        assert_eq!(dice(&a, &b).unwrap(), 0.0);
        let empty = BinaryMask::new(10, 10);
        assert_eq!(dice(&empty, &empty).unwrap(), 1.0);
        let other = BinaryMask::new(10, 11);
        assert!(dice(&a, &other).is_err());
    }

    #[test]
    fn dice_half_overlap() {
        // |a| = |b| = 100, overlap 50 -> 0.5.
        let a = BinaryMask::from_fn(20, 10, |x, _| x < 10);
        let b = BinaryMask::from_fn(20, 10, |x, _| (5..15).contains(&x));
        assert_eq!(dice(&a, &b).unwrap(), 0.5);
    }

    #[test]
    fn confusion_counts() {
        let truth = BinaryMask::from_fn(8, 8, |x, y| x < 2 && y < 2);
        let (tp, fp, fneg, tn) = confusion(&truth, &truth).unwrap();
        assert_eq!((tp, fp, fneg, tn), (4, 0, 0, 60));
        let empty = BinaryMask::new(8, 8);
        assert_eq!(confusion(&empty, &truth).unwrap(), (0, 0, 4, 60));
        let comp = BinaryMask::from_fn(8, 8, |x, y| !(x < 2 && y < 2));
        let (tp, _, _, tn) = confusion(&comp, &truth).unwrap();
        assert_eq!((tp, tn), (0, 0));
    }

    #[test]
    fn detector_rejects_undersized_images() {
        let img = Image2D::zeros(16, 16);
        assert!(detect_spots(&img, &DetectParams::default()).is_err());
    }

    fn spot_image(spots: &[(f64, f64)], w: usize, h: usize, amp: f64) -> Image2D {
        Image2D::from_fn(w, h, |x, y| {
            let mut v = 0.0;
            for &(sx, sy) in spots {
                let d2 = (x as f64 - sx).powi(2) + (y as f64 - sy).powi(2);
                v += amp * (-d2 / (2.0 * 4.0)).exp();
            }
            v
        })
    }

    #[test]
    fn unpaired_spot_is_removed_by_symmetry_filter() {
        let params = DetectParams {
            dc_exclusion_radius: 10.0,
            ..DetectParams::default()
        };
        let img = spot_image(&[(90.0, 60.0)], 128, 128, 1.0);
        let mask = detect_spots(&img, &params).unwrap();
        assert!(mask.is_empty());
    }

    #[test]
    fn paired_spots_survive() {
        let params = DetectParams {
            dc_exclusion_radius: 10.0,
            ..DetectParams::default()
        };
        let img = spot_image(&[(90.0, 60.0), (127.0 - 90.0, 127.0 - 60.0)], 128, 128, 1.0);
        let mask = detect_spots(&img, &params).unwrap();
        assert!(!mask.is_empty());
        let (_, blobs) = connected_components(&mask);
        assert_eq!(blobs, 2);
    }

    #[test]
    fn detection_is_invariant_under_constant_offset() {
        let params = DetectParams {
            dc_exclusion_radius: 10.0,
            ..DetectParams::default()
        };
        let base = spot_image(&[(90.0, 60.0), (127.0 - 90.0, 127.0 - 60.0)], 128, 128, 1.0);
        let mask0 = detect_spots(&base, &params).unwrap();
        for offset in [0.5, 1.0, 2.0] {
            let mut shifted = base.clone();
            shifted.pixels_mut().iter_mut().for_each(|v| *v += offset);
            let mask = detect_spots(&shifted, &params).unwrap();
            assert_eq!(mask, mask0, "offset {offset} changed the detection");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn reconstruction_is_point_symmetric(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let w = rng.gen_range(2..40usize);
            let hh = rng.gen_range(1..20usize);
            let half = BinaryMask::from_fn(w, hh, |_, _| rng.gen_bool(0.3));
            let full = reconstruct_full(&half);
            for y in 0..full.height() {
                for x in 0..w {
                    let (rx, ry) = geom::point_reflect(w, full.height(), x, y);
                    prop_assert_eq!(full.get(x, y), full.get(rx, ry));
                }
            }
        }

        #[test]
        fn dice_is_symmetric_and_matches_confusion(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let w = rng.gen_range(2..30usize);
            let h = rng.gen_range(2..30usize);
            let a = BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(0.4));
            let b = BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(0.4));
            let d_ab = dice(&a, &b).unwrap();
            let d_ba = dice(&b, &a).unwrap();
            prop_assert_eq!(d_ab, d_ba);
            let (tp, fp, fneg, _) = confusion(&a, &b).unwrap();
            let from_confusion = if 2 * tp + fp + fneg == 0 {
                1.0
            } else {
                2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
            };
            prop_assert!((d_ab - from_confusion).abs() < 1e-12);
        }
    }
}
