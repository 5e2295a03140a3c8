//! FFT geometry to d-spacings, the circular-integration diffraction-like
//! profile, peak detection, and database matching.

use serde::Serialize;

use crate::detect::BinaryMask;
use crate::error::{Error, Result};
use crate::geom;
use crate::image::Image2D;
use crate::instances::FeatureSet;
use crate::io::db::DSpacingDB;

/// Scale bookkeeping that converts a radius in the analyzed FFT image back
/// to a d-spacing in angstroms.
///
/// `original_size` is the source image width in pixels, `pixel_size` its
/// calibration in nm/px; `crop_size` and `final_size` describe the
/// center-crop and resize applied to the FFT image before analysis.
///
/// Two modes are provided. The generalized mode does the full
/// frequency-pitch bookkeeping and is self-consistent for any chain:
///
/// ```text
/// d[A] = 10 * original_size * pixel_size * (final_size / crop_size) / r
/// ```
///
/// The compatibility mode drops the final/crop ratio, i.e.
/// `d = 10 * original_size * pixel_size / r`, matching published tooling
/// that calibrated radii this way on a 4096 -> 2048 -> 1024 chain. For an
/// uncropped, unresized chain the two modes agree.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScaleChain {
    pub original_size: usize,
    pub pixel_size: f64,
    pub crop_size: usize,
    pub final_size: usize,
    pub paper_compat: bool,
}

impl ScaleChain {
    pub fn new(
        original_size: usize,
        pixel_size: f64,
        crop_size: usize,
        final_size: usize,
        paper_compat: bool,
    ) -> Result<Self> {
        if original_size == 0 || crop_size == 0 || final_size == 0 {
            return Err(Error::InvalidArgument("scale chain sizes must be positive".into()));
        }
        if !(pixel_size > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "pixel size must be positive, got {pixel_size}"
            )));
        }
        if final_size > crop_size || crop_size > original_size {
            return Err(Error::InvalidArgument(format!(
                "expected final <= crop <= original, got {final_size} / {crop_size} / {original_size}"
            )));
        }
        Ok(ScaleChain {
            original_size,
            pixel_size,
            crop_size,
            final_size,
            paper_compat,
        })
    }

    /// Chain for an image analyzed at native resolution (no crop, no resize).
    pub fn native(size: usize, pixel_size: f64) -> Result<Self> {
        ScaleChain::new(size, pixel_size, size, size, false)
    }

    /// Angstroms per unit radius: d = numerator / r.
    fn numerator(&self) -> f64 {
        let base = 10.0 * self.original_size as f64 * self.pixel_size;
        if self.paper_compat {
            base
        } else {
            base * self.final_size as f64 / self.crop_size as f64
        }
    }

    /// d-spacing for a radius (in final-image pixels) from the center.
    pub fn d_at_radius(&self, r: f64) -> Result<f64> {
        if r <= 0.0 {
            return Err(Error::DcUndefined);
        }
        Ok(self.numerator() / r)
    }

    /// Radius at which a given d-spacing lands.
    pub fn radius_for_d(&self, d: f64) -> f64 {
        self.numerator() / d
    }

    /// Center coordinate of the final image, (final_size - 1) / 2.
    pub fn center(&self) -> f64 {
        geom::center(self.final_size)
    }

    /// Maps a position in the final FFT image back to the original
    /// (uncropped, unresized) spectrum coordinates.
    pub fn map_to_original(&self, x: f64, y: f64) -> (f64, f64) {
        let s = self.crop_size as f64 / self.final_size as f64;
        let offset = (self.original_size - self.crop_size) as f64 / 2.0;
        (
            (x + 0.5) * s - 0.5 + offset,
            (y + 0.5) * s - 0.5 + offset,
        )
    }

    /// Scales a radius measured in final-image pixels to original-spectrum
    /// pixels.
    pub fn radius_to_original(&self, r: f64) -> f64 {
        r * self.crop_size as f64 / self.final_size as f64
    }
}

/// d-spacing of the feature or band at position (x, y) of the final FFT
/// image.
pub fn d_spacing(x: f64, y: f64, chain: &ScaleChain) -> Result<f64> {
    let c = chain.center();
    let r = ((x - c).powi(2) + (y - c).powi(2)).sqrt();
    chain.d_at_radius(r)
}

/// One circular band of the diffraction-like profile.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProfileBand {
    /// Representative radius of the band (band start + 0.5 px).
    pub radius: f64,
    pub d_angstrom: f64,
    pub intensity: f64,
}

/// Circular-integration profile: intensity against d-spacing, radii
/// strictly increasing and d strictly decreasing.
#[derive(Debug, Clone)]
pub struct DiffractionProfile {
    pub bands: Vec<ProfileBand>,
}

/// Integrates pixel values over 1-px annuli about the center convention.
/// With a mask, only foreground pixels contribute (circular integration on
/// the segmented image).
pub fn radial_profile(
    fft_img: &Image2D,
    chain: &ScaleChain,
    mask: Option<&BinaryMask>,
) -> Result<DiffractionProfile> {
    let (w, h) = (fft_img.width(), fft_img.height());
    if w != h {
        return Err(Error::InvalidArgument(format!(
            "radial profile requires a square image, got {}",
            fft_img.dims_label()
        )));
    }
    if let Some(m) = mask {
        if m.width() != w || m.height() != h {
            return Err(Error::dims(fft_img.dims_label(), m.dims_label()));
        }
    }
    let n_bands = geom::radius(w, h, 0.0, 0.0).floor() as usize + 1;
    let mut intensity = vec![0.0f64; n_bands];
    for y in 0..h {
        for x in 0..w {
            if let Some(m) = mask {
                if !m.get(x, y) {
                    continue;
                }
            }
            intensity[geom::annulus_index(w, h, x, y)] += fft_img.get(x, y);
        }
    }
    let bands = intensity
        .iter()
        .enumerate()
        .map(|(b, &i)| {
            let radius = b as f64 + 0.5;
            Ok(ProfileBand {
                radius,
                d_angstrom: chain.d_at_radius(radius)?,
                intensity: i,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiffractionProfile { bands })
}

/// Pixel population of each 1-px annulus, for geometry checks.
pub fn annulus_populations(w: usize, h: usize) -> Vec<usize> {
    let n_bands = geom::radius(w, h, 0.0, 0.0).floor() as usize + 1;
    let mut pop = vec![0usize; n_bands];
    for y in 0..h {
        for x in 0..w {
            pop[geom::annulus_index(w, h, x, y)] += 1;
        }
    }
    pop
}

/// Local maxima of the profile with prominence at least
/// `min_prominence_fraction` of the global intensity range, skipping the
/// first `dc_exclusion_bands` bands. Sorted by intensity descending.
pub fn find_peaks(
    profile: &DiffractionProfile,
    min_prominence_fraction: f64,
    dc_exclusion_bands: usize,
) -> Vec<(f64, f64)> {
    let values: Vec<f64> = profile.bands.iter().map(|b| b.intensity).collect();
    let n = values.len();
    if n < 3 {
        return Vec::new();
    }
    let global_max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let global_min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let min_prominence = min_prominence_fraction * (global_max - global_min);

    let mut peaks: Vec<(f64, f64)> = Vec::new();
    for i in dc_exclusion_bands.max(1)..n - 1 {
        if !(values[i] > values[i - 1] && values[i] > values[i + 1]) {
            continue;
        }
        // Prominence: drop to the highest of the minima separating this
        // peak from higher terrain on each side.
        let peak = values[i];
        let mut left_min = peak;
        for j in (0..i).rev() {
            if values[j] > peak {
                break;
            }
            left_min = left_min.min(values[j]);
        }
        let mut right_min = peak;
        for &v in &values[i + 1..] {
            if v > peak {
                break;
            }
            right_min = right_min.min(v);
        }
        let prominence = peak - left_min.max(right_min);
        if prominence >= min_prominence && prominence > 0.0 {
            peaks.push((profile.bands[i].d_angstrom, peak));
        }
    }
    peaks.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    peaks
}

/// A database component assigned to one or more detected features.
#[derive(Debug, Clone, Serialize)]
pub struct ComponentMatch {
    pub name: String,
    pub hkl: String,
    /// Mean d over the assigned features.
    pub d_calc: f64,
    pub d_ref: f64,
    /// (1 - |d_calc - d_ref| / d_ref) * 100.
    pub match_pct: f64,
    /// Labels of the assigned features.
    pub feature_ids: Vec<u32>,
    /// Mean equivalent diameter of the assigned features.
    pub feature_size_px: f64,
    /// Total 8-bit pixel value count over the assigned features.
    pub pixel_value_count: u64,
}

/// Match percentage of a calculated d against a reference d.
pub fn match_percent(d_calc: f64, d_ref: f64) -> f64 {
    (1.0 - (d_calc - d_ref).abs() / d_ref) * 100.0
}

/// A feature that no database entry accepts at the given tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct UnassignedFeature {
    pub feature_id: u32,
    pub d_calc: f64,
}

/// Result of matching a feature set against the database.
#[derive(Debug, Clone, Default, Serialize)]
pub struct MatchOutcome {
    pub components: Vec<ComponentMatch>,
    pub unassigned: Vec<UnassignedFeature>,
}

/// Assigns each feature to the nearest database entry by relative d
/// deviation, accepting it when the deviation is within `rel_tolerance`.
/// Features assigned to the same (name, hkl) merge into one component with
/// the group-averaged d. Components are ordered by d_calc descending.
pub fn match_components(
    features: &FeatureSet,
    chain: &ScaleChain,
    db: &DSpacingDB,
    rel_tolerance: f64,
) -> Result<MatchOutcome> {
    if db.is_empty() {
        return Err(Error::InvalidArgument("d-spacing database is empty".into()));
    }
    let mut outcome = MatchOutcome::default();
    // (db index, feature d values, member features)
    let mut groups: Vec<(usize, Vec<f64>, Vec<&crate::instances::Feature>)> = Vec::new();
    for feature in features {
        let d_calc = match d_spacing(feature.centroid_x, feature.centroid_y, chain) {
            Ok(d) => d,
            Err(_) => {
                outcome.unassigned.push(UnassignedFeature {
                    feature_id: feature.label,
                    d_calc: f64::NAN,
                });
                continue;
            }
        };
        let (entry_idx, deviation) = db
            .entries()
            .iter()
            .enumerate()
            .map(|(i, e)| (i, (d_calc - e.d_angstrom).abs() / e.d_angstrom))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .expect("db is nonempty");
        if deviation > rel_tolerance {
            outcome.unassigned.push(UnassignedFeature {
                feature_id: feature.label,
                d_calc,
            });
            continue;
        }
        match groups.iter_mut().find(|(i, _, _)| *i == entry_idx) {
            Some((_, ds, members)) => {
                ds.push(d_calc);
                members.push(feature);
            }
            None => groups.push((entry_idx, vec![d_calc], vec![feature])),
        }
    }

    for (entry_idx, ds, members) in groups {
        let entry = &db.entries()[entry_idx];
        let d_calc = ds.iter().sum::<f64>() / ds.len() as f64;
        outcome.components.push(ComponentMatch {
            name: entry.name.clone(),
            hkl: entry.hkl.clone(),
            d_calc,
            d_ref: entry.d_angstrom,
            match_pct: match_percent(d_calc, entry.d_angstrom),
            feature_ids: members.iter().map(|f| f.label).collect(),
            feature_size_px: members.iter().map(|f| f.equivalent_diameter).sum::<f64>()
                / members.len() as f64,
            pixel_value_count: members.iter().map(|f| f.pixel_value_count).sum(),
        });
    }
    outcome.components.sort_by(|a, b| {
        b.d_calc
            .partial_cmp(&a.d_calc)
            .unwrap()
            .then_with(|| a.name.cmp(&b.name))
            .then_with(|| a.hkl.cmp(&b.hkl))
    });
    Ok(outcome)
}
