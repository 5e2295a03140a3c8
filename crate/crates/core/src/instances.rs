//! Instance segmentation of the feature mask: exact Euclidean distance
//! transform, marker-based watershed, and per-feature statistics.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::detect::BinaryMask;
use crate::error::{Error, Result};
use crate::image::Image2D;

/// Per-pixel instance labels; 0 is background, instances are 1..=count.
#[derive(Debug, Clone)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    count: u32,
}

impl LabelMap {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Number of instances.
    pub fn count(&self) -> u32 {
        self.count
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Debug view with labels folded into the 8-bit range.
    pub fn to_debug_image(&self) -> Image2D {
        Image2D::from_fn(self.width, self.height, |x, y| {
            let l = self.get(x, y);
            if l == 0 {
                0.0
            } else {
                (1 + (l - 1) % 255) as f64 / 255.0
            }
        })
    }
}

/// Watershed configuration.
#[derive(Debug, Clone, Copy)]
pub struct WatershedParams {
    /// Sure-foreground cut as a fraction of the per-component max distance.
    pub fg_fraction: f64,
    /// Morphological opening iterations (3x3 cross) used for denoising.
    pub open_iters: usize,
    /// Dilation iterations delineating sure background.
    pub dilate_iters: usize,
}

impl Default for WatershedParams {
    fn default() -> Self {
        WatershedParams {
            fg_fraction: 0.5,
            open_iters: 2,
            dilate_iters: 3,
        }
    }
}

/// Squared Euclidean distance to the nearest background pixel, treating
/// everything outside the image bounds as background. Exact integers.
pub fn distance_transform_sq(mask: &BinaryMask) -> Vec<i64> {
    let (w, h) = (mask.width(), mask.height());
    // Pad with a one-pixel background ring so the outside participates;
    // the nearest outside point is always in the adjacent ring.
    let (pw, ph) = (w + 2, h + 2);
    const INF: i64 = i64::MAX / 4;

    // Row pass: squared distance to the nearest background in the same row.
    let mut g = vec![INF; pw * ph];
    for y in 0..ph {
        let row = &mut g[y * pw..(y + 1) * pw];
        let is_bg = |x: usize| {
            x == 0 || x == pw - 1 || y == 0 || y == ph - 1 || !mask.get(x - 1, y - 1)
        };
        let mut last_bg: Option<usize> = None;
        for x in 0..pw {
            if is_bg(x) {
                row[x] = 0;
                last_bg = Some(x);
            } else if let Some(b) = last_bg {
                row[x] = ((x - b) * (x - b)) as i64;
            }
        }
        let mut last_bg: Option<usize> = None;
        for x in (0..pw).rev() {
            if row[x] == 0 {
                last_bg = Some(x);
            } else if let Some(b) = last_bg {
                row[x] = row[x].min(((b - x) * (b - x)) as i64);
            }
        }
    }

    // Column pass: 1D lower envelope of parabolas over the row distances.
    let mut out = vec![0i64; pw * ph];
    let mut f = vec![0i64; ph];
    let mut v = vec![0usize; ph];
    let mut z = vec![0.0f64; ph + 1];
    let mut d = vec![0i64; ph];
    for x in 0..pw {
        for y in 0..ph {
            f[y] = g[y * pw + x];
        }
        let mut k = 0usize;
        v[0] = 0;
        z[0] = f64::NEG_INFINITY;
        z[1] = f64::INFINITY;
        for q in 1..ph {
            loop {
                let p = v[k];
                let s = ((f[q] + (q * q) as i64) as f64 - (f[p] + (p * p) as i64) as f64)
                    / (2.0 * q as f64 - 2.0 * p as f64);
                if s <= z[k] {
                    if k == 0 {
                        break;
                    }
                    k -= 1;
                } else {
                    k += 1;
                    v[k] = q;
                    z[k] = s;
                    z[k + 1] = f64::INFINITY;
                    break;
                }
            }
        }
        let mut k = 0usize;
        for q in 0..ph {
            while z[k + 1] < q as f64 {
                k += 1;
            }
            let p = v[k] as i64;
            d[q] = (q as i64 - p) * (q as i64 - p) + f[v[k]];
        }
        for y in 0..ph {
            out[y * pw + x] = d[y];
        }
    }

    // Crop the padding off.
    let mut result = vec![0i64; w * h];
    for y in 0..h {
        for x in 0..w {
            result[y * w + x] = out[(y + 1) * pw + (x + 1)];
        }
    }
    result
}

/// Exact Euclidean distance from each foreground pixel to the nearest
/// background pixel (background itself is 0).
pub fn distance_transform(mask: &BinaryMask) -> Image2D {
    let sq = distance_transform_sq(mask);
    Image2D::new(
        mask.width(),
        mask.height(),
        sq.iter().map(|&d| (d as f64).sqrt()).collect(),
    )
    .expect("mask dims are valid image dims")
}

fn erode_cross(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    BinaryMask::from_fn(w, h, |x, y| {
        mask.get(x, y)
            && x > 0
            && mask.get(x - 1, y)
            && x + 1 < w
            && mask.get(x + 1, y)
            && y > 0
            && mask.get(x, y - 1)
            && y + 1 < h
            && mask.get(x, y + 1)
    })
}

fn dilate_cross(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    BinaryMask::from_fn(w, h, |x, y| {
        mask.get(x, y)
            || (x > 0 && mask.get(x - 1, y))
            || (x + 1 < w && mask.get(x + 1, y))
            || (y > 0 && mask.get(x, y - 1))
            || (y + 1 < h && mask.get(x, y + 1))
    })
}

/// Morphological opening with a 3x3 cross: `iters` erosions then `iters`
/// dilations.
pub fn open(mask: &BinaryMask, iters: usize) -> BinaryMask {
    let mut m = mask.clone();
    for _ in 0..iters {
        m = erode_cross(&m);
    }
    for _ in 0..iters {
        m = dilate_cross(&m);
    }
    m
}

/// Sure-background delineation: the complement of the dilated mask.
pub fn sure_background(mask: &BinaryMask, iters: usize) -> BinaryMask {
    let mut m = mask.clone();
    for _ in 0..iters {
        m = dilate_cross(&m);
    }
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| !m.get(x, y))
}

/// 8-connected components of the original mask, labeled in scan order.
fn mask_components(mask: &BinaryMask) -> (Vec<u32>, u32) {
    let (labels, count) = crate::detect::connected_components(mask);
    let out = labels
        .iter()
        .map(|&l| if l == usize::MAX { 0 } else { l as u32 + 1 })
        .collect();
    (out, count as u32)
}

/// Sure-foreground markers: per component of the input mask, the pixels of
/// the opened mask whose distance is at least `fg_fraction` of that
/// component's maximum. A component erased entirely by the opening keeps
/// itself as its own marker, so every component is represented.
pub fn watershed_markers(mask: &BinaryMask, params: &WatershedParams) -> LabelMap {
    let (w, h) = (mask.width(), mask.height());
    let opened = open(mask, params.open_iters);
    let dist_open = distance_transform_sq(&opened);
    let (comp, comp_count) = mask_components(mask);

    let mut comp_max = vec![0i64; comp_count as usize + 1];
    for i in 0..w * h {
        let c = comp[i] as usize;
        if c != 0 {
            comp_max[c] = comp_max[c].max(dist_open[i]);
        }
    }

    let frac_sq = params.fg_fraction * params.fg_fraction;
    let sure_fg = BinaryMask::from_fn(w, h, |x, y| {
        let i = y * w + x;
        let c = comp[i] as usize;
        if c == 0 {
            return false;
        }
        // d >= frac * max compared on squared distances.
        dist_open[i] as f64 >= frac_sq * comp_max[c] as f64
    });

    let (labels, count) = mask_components(&sure_fg);
    LabelMap {
        width: w,
        height: h,
        labels,
        count,
    }
}

/// Marker-based watershed over the binary mask.
///
/// Markers are flooded outward over the negated distance transform of the
/// mask (deepest pixels claimed first), so every foreground pixel ends up
/// with exactly one label and the label count equals the marker count.
/// An empty mask yields an empty label map, not an error.
pub fn watershed_instances(mask: &BinaryMask, params: &WatershedParams) -> LabelMap {
    let (w, h) = (mask.width(), mask.height());
    let markers = watershed_markers(mask, params);
    if markers.count == 0 {
        return markers;
    }
    let dist = distance_transform_sq(mask);

    let mut labels = markers.labels.clone();
    // Max-heap on distance; ties resolved by scan order for determinism.
    let mut heap: BinaryHeap<(i64, Reverse<usize>)> = BinaryHeap::new();
    for i in 0..w * h {
        if labels[i] != 0 {
            heap.push((dist[i], Reverse(i)));
        }
    }
    while let Some((_, Reverse(i))) = heap.pop() {
        let (x, y) = (i % w, i / w);
        let label = labels[i];
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
                let ni = ny as usize * w + nx as usize;
                if labels[ni] == 0 && mask.get(nx as usize, ny as usize) {
                    labels[ni] = label;
                    heap.push((dist[ni], Reverse(ni)));
                }
            }
        }
    }

    LabelMap {
        width: w,
        height: h,
        labels,
        count: markers.count,
    }
}

/// One instance-segmented diffraction spot.
#[derive(Debug, Clone)]
pub struct Feature {
    pub label: u32,
    pub centroid_x: f64,
    pub centroid_y: f64,
    pub area: usize,
    /// 2 * sqrt(area / pi).
    pub equivalent_diameter: f64,
    /// Sum of 8-bit-quantized enhanced-FFT values over the instance.
    pub pixel_value_count: u64,
    /// Mean linear FFT magnitude over the instance.
    pub mean_intensity: f64,
}

pub type FeatureSet = Vec<Feature>;

/// Per-instance statistics, ordered by descending area.
pub fn feature_stats(
    labels: &LabelMap,
    enhanced_fft: &Image2D,
    linear_magnitude: &Image2D,
) -> Result<FeatureSet> {
    if labels.width() != enhanced_fft.width()
        || labels.height() != enhanced_fft.height()
        || !enhanced_fft.same_dims(linear_magnitude)
    {
        return Err(Error::dims(
            format!("label map {}x{}", labels.width(), labels.height()),
            format!(
                "images {} and {}",
                enhanced_fft.dims_label(),
                linear_magnitude.dims_label()
            ),
        ));
    }
    let k = labels.count() as usize;
    let mut area = vec![0usize; k + 1];
    let mut cx = vec![0.0f64; k + 1];
    let mut cy = vec![0.0f64; k + 1];
    let mut pvc = vec![0u64; k + 1];
    let mut intensity = vec![0.0f64; k + 1];
    for y in 0..labels.height() {
        for x in 0..labels.width() {
            let l = labels.get(x, y) as usize;
            if l == 0 {
                continue;
            }
            area[l] += 1;
            cx[l] += x as f64;
            cy[l] += y as f64;
            pvc[l] += crate::io::pgm::quantize_u8(enhanced_fft.get(x, y)) as u64;
            intensity[l] += linear_magnitude.get(x, y);
        }
    }
    let mut features: FeatureSet = (1..=k)
        .filter(|&l| area[l] > 0)
        .map(|l| Feature {
            label: l as u32,
            centroid_x: cx[l] / area[l] as f64,
            centroid_y: cy[l] / area[l] as f64,
            area: area[l],
            equivalent_diameter: 2.0 * (area[l] as f64 / std::f64::consts::PI).sqrt(),
            pixel_value_count: pvc[l],
            mean_intensity: intensity[l] / area[l] as f64,
        })
        .collect();
    features.sort_by(|a, b| b.area.cmp(&a.area).then(a.label.cmp(&b.label)));
    Ok(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn disk_mask(w: usize, h: usize, disks: &[(f64, f64, f64)]) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            disks.iter().any(|&(cx, cy, r)| {
                (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r
            })
        })
    }

    /// All-pairs scan including the virtual background outside the image.
    fn brute_force_dt_sq(mask: &BinaryMask) -> Vec<i64> {
        let (w, h) = (mask.width(), mask.height());
        let mut out = vec![0i64; w * h];
        for y in 0..h {
            for x in 0..w {
                if !mask.get(x, y) {
                    continue;
                }
                let border = (x + 1).min(y + 1).min(w - x).min(h - y) as i64;
                let mut best = border * border;
                for by in 0..h {
                    for bx in 0..w {
                        if !mask.get(bx, by) {
                            let dx = x as i64 - bx as i64;
                            let dy = y as i64 - by as i64;
                            best = best.min(dx * dx + dy * dy);
                        }
                    }
                }
                out[y * w + x] = best;
            }
        }
        out
    }

    #[test]
    fn dt_of_empty_mask_is_zero() {
        let dt = distance_transform(&BinaryMask::new(8, 8));
        assert!(dt.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dt_single_pixel_is_one() {
        let mut m = BinaryMask::new(8, 8);
        m.set(3, 4, true);
        let dt = distance_transform(&m);
        assert_eq!(dt.get(3, 4), 1.0);
    }

    #[test]
    fn dt_solid_9x9_center_is_five() {
        let m = BinaryMask::from_fn(9, 9, |_, _| true);
        let dt = distance_transform(&m);
        assert_eq!(dt.get(4, 4), 5.0);
        assert_eq!(dt.get(0, 0), 1.0);
    }

    #[test]
    fn dt_matches_brute_force_on_random_masks() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(42);
        for _ in 0..25 {
            let w = rng.gen_range(2..32usize);
            let h = rng.gen_range(2..32usize);
            let m = BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(0.6));
            let fast = distance_transform_sq(&m);
            let slow = brute_force_dt_sq(&m);
            assert_eq!(fast, slow, "mismatch on a {w}x{h} mask");
        }
    }

    #[test]
    fn two_disjoint_disks_get_two_labels_partitioning_the_mask() {
        let m = disk_mask(64, 64, &[(16.0, 32.0, 8.0), (48.0, 32.0, 8.0)]);
        let lm = watershed_instances(&m, &WatershedParams::default());
        assert_eq!(lm.count(), 2);
        for y in 0..64 {
            for x in 0..64 {
                assert_eq!(lm.get(x, y) != 0, m.get(x, y));
            }
        }
        // Each disk is uniformly one label.
        assert_ne!(lm.get(16, 32), lm.get(48, 32));
    }

    #[test]
    fn single_disk_is_one_label() {
        let m = disk_mask(32, 32, &[(16.0, 16.0, 9.0)]);
        let lm = watershed_instances(&m, &WatershedParams::default());
        assert_eq!(lm.count(), 1);
        assert_eq!(
            lm.labels().iter().filter(|&&l| l == 1).count(),
            m.count()
        );
    }

    #[test]
    fn empty_mask_yields_empty_labels() {
        let lm = watershed_instances(&BinaryMask::new(16, 16), &WatershedParams::default());
        assert_eq!(lm.count(), 0);
        assert!(lm.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn overlapping_disks_split_near_the_bisector() {
        // Centers 1.5 radii apart; the split should be the vertical line
        // equidistant from the two centers, within a pixel. The discrete
        // waist of this union sits at ~0.8 of the max distance (the notch
        // rounds to the nearest pixel), so separating the cores needs a
        // sure-foreground cut above that.
        let r = 10.0;
        let m = disk_mask(64, 48, &[(24.0, 24.0, r), (39.0, 24.0, r)]);
        let params = WatershedParams {
            fg_fraction: 0.85,
            ..WatershedParams::default()
        };
        let lm = watershed_instances(&m, &params);
        assert_eq!(lm.count(), 2);
        let left = lm.get(24, 24);
        let right = lm.get(39, 24);
        assert_ne!(left, right);
        let mid = 31.5;
        for y in 0..48 {
            for x in 0..64 {
                let l = lm.get(x, y);
                if l == left {
                    assert!(x as f64 <= mid + 1.0, "left label crossed at ({x},{y})");
                } else if l == right {
                    assert!(x as f64 >= mid - 1.0, "right label crossed at ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn speck_erased_by_opening_still_gets_a_label() {
        let mut m = disk_mask(48, 48, &[(24.0, 24.0, 8.0)]);
        m.set(4, 4, true); // single-pixel speck, gone after one erosion
        let lm = watershed_instances(&m, &WatershedParams::default());
        assert_eq!(lm.count(), 2);
        assert_ne!(lm.get(4, 4), 0);
        let markers = watershed_markers(&m, &WatershedParams::default());
        assert_eq!(markers.count(), lm.count());
    }

    #[test]
    fn stats_of_known_instances() {
        let m = disk_mask(32, 32, &[(16.0, 16.0, 10.0)]);
        let area = m.count();
        let lm = watershed_instances(&m, &WatershedParams::default());
        assert_eq!(lm.count(), 1);
        let enhanced = Image2D::from_fn(32, 32, |_, _| 1.0);
        let linmag = Image2D::from_fn(32, 32, |_, _| 2.0);
        let feats = feature_stats(&lm, &enhanced, &linmag).unwrap();
        assert_eq!(feats.len(), 1);
        let f = &feats[0];
        assert_eq!(f.area, area);
        assert_relative_eq!(
            f.equivalent_diameter,
            2.0 * (area as f64 / std::f64::consts::PI).sqrt(),
            max_relative = 1e-12
        );
        assert_eq!(f.pixel_value_count, 255 * area as u64);
        assert_relative_eq!(f.mean_intensity, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn equivalent_diameter_of_315_px() {
        let d = 2.0 * (315.0 / std::f64::consts::PI).sqrt();
        assert!((d - 20.03).abs() < 0.005, "got {d}");
    }

    #[test]
    fn pixel_value_count_arithmetic() {
        // 110 px at enhanced value 1.0 -> 110 * 255 = 28050.
        let m = BinaryMask::from_fn(16, 16, |x, y| y < 7 && x < 16 && y * 16 + x < 110);
        assert_eq!(m.count(), 110);
        let lm = watershed_instances(&m, &WatershedParams::default());
        let enhanced = Image2D::from_fn(16, 16, |_, _| 1.0);
        let linmag = Image2D::zeros(16, 16);
        let feats = feature_stats(&lm, &enhanced, &linmag).unwrap();
        let total: u64 = feats.iter().map(|f| f.pixel_value_count).sum();
        assert_eq!(total, 28050);
    }

    #[test]
    fn empty_labels_give_empty_features() {
        let lm = watershed_instances(&BinaryMask::new(8, 8), &WatershedParams::default());
        let img = Image2D::zeros(8, 8);
        assert!(feature_stats(&lm, &img, &img).unwrap().is_empty());
    }

    #[test]
    fn stats_dim_mismatch_is_an_error() {
        let lm = watershed_instances(&BinaryMask::new(8, 8), &WatershedParams::default());
        let img = Image2D::zeros(8, 8);
        let other = Image2D::zeros(9, 8);
        assert!(feature_stats(&lm, &img, &other).is_err());
    }

    #[test]
    fn feature_areas_sum_to_mask_count() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..10 {
            let m = disk_mask(
                48,
                48,
                &[
                    (rng.gen_range(8.0..40.0), rng.gen_range(8.0..40.0), rng.gen_range(2.0..7.0)),
                    (rng.gen_range(8.0..40.0), rng.gen_range(8.0..40.0), rng.gen_range(2.0..7.0)),
                ],
            );
            let lm = watershed_instances(&m, &WatershedParams::default());
            let img = Image2D::zeros(48, 48);
            let feats = feature_stats(&lm, &img, &img).unwrap();
            let total: usize = feats.iter().map(|f| f.area).sum();
            assert_eq!(total, m.count());
        }
    }
}

