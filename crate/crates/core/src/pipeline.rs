//! The single-image analysis pipeline: FFT, view preparation, detection,
//! instancing, matching, and component mapping.

use crate::detect::{detect_spots, reconstruct_full, BinaryMask, DetectParams};
use crate::error::{Error, Result};
use crate::fft::{forward_fft, log_magnitude, ComplexField};
use crate::image::Image2D;
use crate::instances::{feature_stats, watershed_instances, FeatureSet, LabelMap, WatershedParams};
use crate::mapping::{component_map, disk_mask_with_partners, ComponentMap, MapParams};
use crate::phase::{match_components, radial_profile, DiffractionProfile, MatchOutcome, ScaleChain};
use crate::prep::{center_crop, enhance, resize, EnhanceParams};

/// How per-component intensity is measured for time profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IntensityMetric {
    /// Sum of linear FFT magnitude within the feature mask disks.
    #[default]
    LinearMagnitudeSum,
    /// Sum of 8-bit-quantized enhanced-FFT values over the instance pixels.
    PixelValueCount,
}

/// Everything the per-image pipeline needs to know.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// TEM-image calibration in nm/px.
    pub pixel_size: f64,
    /// Center-crop applied to the FFT view; None keeps the full size.
    pub crop_size: Option<usize>,
    /// Resize applied after the crop; None keeps the crop size.
    pub final_size: Option<usize>,
    /// Use the published radius calibration instead of the full
    /// frequency-pitch bookkeeping.
    pub paper_compat: bool,
    pub enhance: EnhanceParams,
    pub detect: DetectParams,
    pub watershed: WatershedParams,
    pub map: MapParams,
    /// Max relative d deviation accepted when assigning database entries.
    pub match_tolerance: f64,
    pub intensity_metric: IntensityMetric,
}

impl PipelineConfig {
    pub fn new(pixel_size: f64) -> Self {
        PipelineConfig {
            pixel_size,
            crop_size: None,
            final_size: None,
            paper_compat: false,
            enhance: EnhanceParams::default(),
            detect: DetectParams::default(),
            watershed: WatershedParams::default(),
            map: MapParams::default(),
            match_tolerance: 0.02,
            intensity_metric: IntensityMetric::default(),
        }
    }

    /// Scale chain for a square source image of the given size.
    pub fn scale_chain(&self, original_size: usize) -> Result<ScaleChain> {
        let crop = self.crop_size.unwrap_or(original_size);
        let final_size = self.final_size.unwrap_or(crop);
        ScaleChain::new(
            original_size,
            self.pixel_size,
            crop,
            final_size,
            self.paper_compat,
        )
    }
}

/// Where the feature mask comes from.
#[derive(Debug, Clone)]
pub enum MaskSource {
    /// Classical detector on the enhanced FFT image.
    Detect,
    /// Externally produced mask (e.g. a segmentation model output),
    /// already at the analyzed FFT view size.
    External(BinaryMask),
    /// External mask covering the top half of the FFT view; completed to
    /// the full frame by point symmetry before instancing.
    ExternalHalf(BinaryMask),
}

/// Output of the single-image pipeline.
#[derive(Debug, Clone)]
pub struct AnalysisResult {
    pub chain: ScaleChain,
    /// Enhanced log-magnitude FFT view (analysis resolution).
    pub enhanced: Image2D,
    /// Linear FFT magnitude at the same resolution.
    pub linear_magnitude: Image2D,
    pub mask: BinaryMask,
    pub labels: LabelMap,
    pub features: FeatureSet,
    pub matches: MatchOutcome,
    /// Circular integration over the detected mask.
    pub profile: DiffractionProfile,
    /// Spatial maps at the source image resolution, one per component.
    pub maps: Vec<ComponentMap>,
    /// Per-component intensity, aligned with `matches.components`.
    pub component_intensity: Vec<f64>,
}

impl AnalysisResult {
    pub fn has_features(&self) -> bool {
        !self.features.is_empty()
    }
}

/// Runs the full single-image pipeline on a square TEM image.
pub fn analyze_image(
    img: &Image2D,
    db: &crate::io::db::DSpacingDB,
    config: &PipelineConfig,
    mask_source: &MaskSource,
) -> Result<AnalysisResult> {
    if img.width() != img.height() {
        return Err(Error::InvalidArgument(format!(
            "analysis expects a square image, got {}",
            img.dims_label()
        )));
    }
    let size = img.width();
    let chain = config.scale_chain(size)?;

    let field = forward_fft(img);
    let log_view = prepare_view(&log_magnitude(&field), &chain)?;
    let lin_view = prepare_view(&field.magnitude_shifted(), &chain)?;
    let enhanced = enhance(&log_view, &config.enhance);

    let mask = resolve_mask(&enhanced, config, mask_source)?;
    let labels = watershed_instances(&mask, &config.watershed);
    let features = feature_stats(&labels, &enhanced, &lin_view)?;
    let matches = match_components(&features, &chain, db, config.match_tolerance)?;
    let profile = radial_profile(&enhanced, &chain, Some(&mask))?;

    let maps = build_maps(&field, &chain, &matches, &features, &config.map)?;
    let component_intensity =
        component_intensities(&matches, &features, &lin_view, config);

    Ok(AnalysisResult {
        chain,
        enhanced,
        linear_magnitude: lin_view,
        mask,
        labels,
        features,
        matches,
        profile,
        maps,
        component_intensity,
    })
}

fn prepare_view(img: &Image2D, chain: &ScaleChain) -> Result<Image2D> {
    let cropped = if chain.crop_size < chain.original_size {
        center_crop(img, chain.crop_size, chain.crop_size)?
    } else {
        img.clone()
    };
    if chain.final_size < chain.crop_size {
        resize(&cropped, chain.final_size, chain.final_size)
    } else {
        Ok(cropped)
    }
}

fn resolve_mask(
    enhanced: &Image2D,
    config: &PipelineConfig,
    source: &MaskSource,
) -> Result<BinaryMask> {
    let full = match source {
        MaskSource::Detect => return detect_spots(enhanced, &config.detect),
        MaskSource::External(mask) => mask.clone(),
        MaskSource::ExternalHalf(half) => reconstruct_full(half),
    };
    if full.width() != enhanced.width() || full.height() != enhanced.height() {
        return Err(Error::dims(
            format!("mask {}", full.dims_label()),
            format!("FFT view {}", enhanced.dims_label()),
        ));
    }
    Ok(full)
}

fn build_maps(
    field: &ComplexField,
    chain: &ScaleChain,
    matches: &MatchOutcome,
    features: &FeatureSet,
    params: &MapParams,
) -> Result<Vec<ComponentMap>> {
    let mut maps = Vec::with_capacity(matches.components.len());
    for (idx, comp) in matches.components.iter().enumerate() {
        // Feature disks mapped back to the original spectrum coordinates.
        let disks: Vec<(f64, f64, f64)> = features
            .iter()
            .filter(|f| comp.feature_ids.contains(&f.label))
            .map(|f| {
                let (x, y) = chain.map_to_original(f.centroid_x, f.centroid_y);
                let r = chain.radius_to_original(params.radius_scale * f.equivalent_diameter / 2.0);
                (x, y, r)
            })
            .collect();
        let mask = disk_mask_with_partners(&disks, field.width(), field.height());
        maps.push(component_map(
            field, &mask, &comp.name, &comp.hkl, idx, params,
        )?);
    }
    Ok(maps)
}

fn component_intensities(
    matches: &MatchOutcome,
    features: &FeatureSet,
    lin_view: &Image2D,
    config: &PipelineConfig,
) -> Vec<f64> {
    matches
        .components
        .iter()
        .map(|comp| {
            let members: Vec<&crate::instances::Feature> = features
                .iter()
                .filter(|f| comp.feature_ids.contains(&f.label))
                .collect();
            match config.intensity_metric {
                IntensityMetric::PixelValueCount => {
                    members.iter().map(|f| f.pixel_value_count as f64).sum()
                }
                IntensityMetric::LinearMagnitudeSum => {
                    let disks: Vec<(f64, f64, f64)> = members
                        .iter()
                        .map(|f| {
                            (
                                f.centroid_x,
                                f.centroid_y,
                                config.map.radius_scale * f.equivalent_diameter / 2.0,
                            )
                        })
                        .collect();
                    let mask =
                        disk_mask_with_partners(&disks, lin_view.width(), lin_view.height());
                    let mut sum = 0.0;
                    for y in 0..lin_view.height() {
                        for x in 0..lin_view.width() {
                            if mask.get(x, y) {
                                sum += lin_view.get(x, y);
                            }
                        }
                    }
                    sum
                }
            }
        })
        .collect()
}
