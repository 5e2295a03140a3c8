//! Batch processing of image stacks: per-frame pipeline runs, component
//! intensity tracking over time, and first-detection frames.

use std::path::PathBuf;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::ImageStack;
use crate::io::db::DSpacingDB;
use crate::io::pgm::write_ppm;
use crate::mapping::overlay;
use crate::phase::{match_percent, ComponentMatch};
use crate::pipeline::{analyze_image, AnalysisResult, MaskSource, PipelineConfig};

/// Per-frame, per-component intensity record for a processed stack.
#[derive(Debug, Clone)]
pub struct IntensityProfile {
    /// Component identities (name, hkl), sorted for stable column order.
    pub components: Vec<(String, String)>,
    /// intensity[frame][component]; unmatched entries are exactly 0.
    pub intensity: Vec<Vec<f64>>,
    /// match_pct[frame][component]; None where the component was not
    /// matched in that frame.
    pub match_pct: Vec<Vec<Option<f64>>>,
    pub frame_period_s: f64,
    /// Per-component first detection (1-based frame index) under the
    /// default thresholds.
    pub first_detection_frame: Vec<Option<usize>>,
}

impl IntensityProfile {
    pub fn component_index(&self, name: &str, hkl: &str) -> Option<usize> {
        self.components
            .iter()
            .position(|(n, h)| n == name && h == hkl)
    }

    pub fn frame_count(&self) -> usize {
        self.intensity.len()
    }
}

/// Stack processing configuration.
#[derive(Debug, Clone)]
pub struct StackConfig {
    pub pipeline: PipelineConfig,
    /// Worker threads for per-frame parallelism. Results are merged in
    /// frame order, so the output does not depend on this.
    pub workers: usize,
    /// When set, per-frame overlay PPMs are written here.
    pub frame_artifact_dir: Option<PathBuf>,
}

/// Everything produced by a stack run.
#[derive(Debug, Clone)]
pub struct StackResult {
    pub profile: IntensityProfile,
    /// Component rows aggregated over frames (mean d over matched frames).
    pub aggregate_components: Vec<ComponentMatch>,
    /// Mean radial profile across frames.
    pub mean_profile: crate::phase::DiffractionProfile,
    /// (frame index 1-based, message) for frames that failed and were
    /// recorded as zero rows.
    pub warnings: Vec<(usize, String)>,
}

/// Beam exposure time of 1-based frame k.
pub fn frame_time(k: usize, frame_period_s: f64) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidArgument(
            "frame indices are 1-based; got 0".into(),
        ));
    }
    Ok(k as f64 * frame_period_s)
}

/// Smallest 1-based frame where the component is matched at
/// `min_match_pct` or better with intensity at least
/// `min_intensity_fraction` of its maximum over the run.
pub fn first_detection(
    profile: &IntensityProfile,
    component: usize,
    min_match_pct: f64,
    min_intensity_fraction: f64,
) -> Option<usize> {
    let max_intensity = profile
        .intensity
        .iter()
        .map(|row| row[component])
        .fold(0.0f64, f64::max);
    if max_intensity <= 0.0 {
        return None;
    }
    let floor = min_intensity_fraction * max_intensity;
    for (frame0, (row, pct_row)) in profile
        .intensity
        .iter()
        .zip(&profile.match_pct)
        .enumerate()
    {
        if let Some(pct) = pct_row[component] {
            if pct >= min_match_pct && row[component] >= floor {
                return Some(frame0 + 1);
            }
        }
    }
    None
}

pub const DEFAULT_FIRST_DETECTION_MATCH_PCT: f64 = 98.0;
pub const DEFAULT_FIRST_DETECTION_INTENSITY_FRACTION: f64 = 0.02;

/// Runs the pipeline on every frame (in parallel when workers > 1) and
/// merges the results in frame order. A frame that fails contributes a
/// zero intensity row and a warning instead of aborting the run.
pub fn process_stack(
    stack: &ImageStack,
    db: &DSpacingDB,
    config: &StackConfig,
) -> Result<StackResult> {
    if config.workers < 1 {
        return Err(Error::InvalidArgument(
            "worker count must be at least 1".into(),
        ));
    }
    if let Some(dir) = &config.frame_artifact_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;

    let frame_results: Vec<std::result::Result<AnalysisResult, String>> = pool.install(|| {
        stack
            .frames()
            .par_iter()
            .enumerate()
            .map(|(idx, frame)| {
                let result = analyze_image(frame, db, &config.pipeline, &MaskSource::Detect)
                    .map_err(|e| e.to_string())?;
                if let Some(dir) = &config.frame_artifact_dir {
                    let rgb = overlay(frame, &result.maps).map_err(|e| e.to_string())?;
                    let path = dir.join(format!("overlay_frame{:04}.ppm", idx + 1));
                    write_ppm(frame.width(), frame.height(), &rgb, &path)
                        .map_err(|e| e.to_string())?;
                }
                Ok(result)
            })
            .collect()
    });

    // Stable component column order.
    let mut components: Vec<(String, String)> = Vec::new();
    for r in frame_results.iter().flatten() {
        for c in &r.matches.components {
            let key = (c.name.clone(), c.hkl.clone());
            if !components.contains(&key) {
                components.push(key);
            }
        }
    }
    components.sort();

    let n_frames = stack.len();
    let n_comp = components.len();
    let mut intensity = vec![vec![0.0; n_comp]; n_frames];
    let mut match_pct = vec![vec![None; n_comp]; n_frames];
    let mut warnings = Vec::new();

    for (frame_idx, frame_result) in frame_results.iter().enumerate() {
        match frame_result {
            Ok(result) => {
                for (ci, comp) in result.matches.components.iter().enumerate() {
                    let col = components
                        .iter()
                        .position(|(n, h)| *n == comp.name && *h == comp.hkl)
                        .expect("component registered above");
                    intensity[frame_idx][col] = result.component_intensity[ci];
                    match_pct[frame_idx][col] = Some(comp.match_pct);
                }
            }
            Err(msg) => warnings.push((frame_idx + 1, msg.clone())),
        }
    }

    let mut profile = IntensityProfile {
        components,
        intensity,
        match_pct,
        frame_period_s: stack.frame_period_s,
        first_detection_frame: Vec::new(),
    };
    profile.first_detection_frame = (0..n_comp)
        .map(|c| {
            first_detection(
                &profile,
                c,
                DEFAULT_FIRST_DETECTION_MATCH_PCT,
                DEFAULT_FIRST_DETECTION_INTENSITY_FRACTION,
            )
        })
        .collect();

    let aggregate_components = aggregate_components(&frame_results);
    let mean_profile = mean_radial_profile(&frame_results)?;

    Ok(StackResult {
        profile,
        aggregate_components,
        mean_profile,
        warnings,
    })
}

/// Merges per-frame component rows: d and sizes averaged over the frames
/// where the component was matched, pixel counts averaged per matched
/// frame.
fn aggregate_components(
    frame_results: &[std::result::Result<AnalysisResult, String>],
) -> Vec<ComponentMatch> {
    struct Acc {
        name: String,
        hkl: String,
        d_ref: f64,
        d_sum: f64,
        size_sum: f64,
        pvc_sum: u64,
        frames: usize,
    }
    let mut accs: Vec<Acc> = Vec::new();
    for result in frame_results.iter().flatten() {
        for c in &result.matches.components {
            match accs
                .iter_mut()
                .find(|a| a.name == c.name && a.hkl == c.hkl)
            {
                Some(a) => {
                    a.d_sum += c.d_calc;
                    a.size_sum += c.feature_size_px;
                    a.pvc_sum += c.pixel_value_count;
                    a.frames += 1;
                }
                None => accs.push(Acc {
                    name: c.name.clone(),
                    hkl: c.hkl.clone(),
                    d_ref: c.d_ref,
                    d_sum: c.d_calc,
                    size_sum: c.feature_size_px,
                    pvc_sum: c.pixel_value_count,
                    frames: 1,
                }),
            }
        }
    }
    let mut out: Vec<ComponentMatch> = accs
        .into_iter()
        .map(|a| {
            let d_calc = a.d_sum / a.frames as f64;
            ComponentMatch {
                name: a.name,
                hkl: a.hkl,
                d_calc,
                d_ref: a.d_ref,
                match_pct: match_percent(d_calc, a.d_ref),
                feature_ids: Vec::new(),
                feature_size_px: a.size_sum / a.frames as f64,
                pixel_value_count: a.pvc_sum / a.frames as u64,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.d_calc
            .partial_cmp(&a.d_calc)
            .unwrap()
            .then_with(|| a.name.cmp(&b.name))
    });
    out
}

fn mean_radial_profile(
    frame_results: &[std::result::Result<AnalysisResult, String>],
) -> Result<crate::phase::DiffractionProfile> {
    let ok: Vec<&AnalysisResult> = frame_results.iter().flatten().collect();
    let first = ok.first().ok_or_else(|| {
        Error::InvalidArgument("every frame of the stack failed to process".into())
    })?;
    let mut bands = first.profile.bands.clone();
    for b in &mut bands {
        b.intensity = 0.0;
    }
    for r in &ok {
        for (acc, band) in bands.iter_mut().zip(&r.profile.bands) {
            acc.intensity += band.intensity;
        }
    }
    for b in &mut bands {
        b.intensity /= ok.len() as f64;
    }
    Ok(crate::phase::DiffractionProfile { bands })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image2D;
    use crate::io::db::{DSpacingDB, DbEntry};
    use crate::synthgen::{synth_lattice, FringeSpec};
    use approx::assert_relative_eq;

    fn db() -> DSpacingDB {
        DSpacingDB::from_entries(vec![
            DbEntry {
                name: "Li".into(),
                hkl: "011".into(),
                d_angstrom: 2.416,
            },
            DbEntry {
                name: "Li2O".into(),
                hkl: "111".into(),
                d_angstrom: 2.6528,
            },
        ])
        .unwrap()
    }

    fn frame(amp_a: f64, amp_b: f64, size: usize) -> Image2D {
        let mut specs = vec![];
        if amp_a > 0.0 {
            specs.push(FringeSpec::new(2.416, 0.0, amp_a));
        }
        if amp_b > 0.0 {
            specs.push(FringeSpec::new(2.6528, std::f64::consts::FRAC_PI_2, amp_b));
        }
        synth_lattice(&specs, size, 0.037, 0.0, 0).unwrap().0
    }

    fn onset_stack(size: usize, frames: usize, onset: usize) -> ImageStack {
        let frames: Vec<Image2D> = (1..=frames)
            .map(|k| {
                let amp_b = if k >= onset { 1.0 } else { 0.0 };
                frame(1.0, amp_b, size)
            })
            .collect();
        ImageStack::new(frames, 2.46).unwrap()
    }

    #[test]
    fn frame_time_contract() {
        assert_relative_eq!(frame_time(6, 2.46).unwrap(), 14.76, max_relative = 1e-12);
        assert_relative_eq!(frame_time(22, 2.46).unwrap(), 54.12, max_relative = 1e-12);
        assert_relative_eq!(frame_time(1, 2.46).unwrap(), 2.46, max_relative = 1e-12);
        assert!(frame_time(0, 2.46).is_err());
    }

    #[test]
    fn onset_component_reports_first_detection_frame() {
        let stack = onset_stack(256, 8, 6);
        let config = StackConfig {
            pipeline: PipelineConfig::new(0.037),
            workers: 2,
            frame_artifact_dir: None,
        };
        let result = process_stack(&stack, &db(), &config).unwrap();
        assert!(result.warnings.is_empty());
        let p = &result.profile;
        let li = p.component_index("Li", "011").expect("Li present");
        let li2o = p.component_index("Li2O", "111").expect("Li2O present");
        assert_eq!(p.first_detection_frame[li], Some(1));
        assert_eq!(p.first_detection_frame[li2o], Some(6));
        assert_relative_eq!(
            frame_time(p.first_detection_frame[li2o].unwrap(), p.frame_period_s).unwrap(),
            14.76,
            max_relative = 1e-12
        );
        // Zero floor before the onset.
        for k in 0..5 {
            assert_eq!(p.intensity[k][li2o], 0.0);
        }
        assert!(p.intensity[5][li2o] > 0.0);
    }

    #[test]
    fn single_frame_stack_matches_standalone_analysis() {
        let img = frame(1.0, 1.0, 256);
        let stack = ImageStack::new(vec![img.clone()], 2.46).unwrap();
        let config = StackConfig {
            pipeline: PipelineConfig::new(0.037),
            workers: 1,
            frame_artifact_dir: None,
        };
        let stack_result = process_stack(&stack, &db(), &config).unwrap();
        let single = analyze_image(&img, &db(), &config.pipeline, &MaskSource::Detect).unwrap();
        assert_eq!(
            stack_result.profile.components.len(),
            single.matches.components.len()
        );
        for (ci, (name, hkl)) in stack_result.profile.components.iter().enumerate() {
            let si = single
                .matches
                .components
                .iter()
                .position(|c| c.name == *name && c.hkl == *hkl)
                .unwrap();
            assert_eq!(
                stack_result.profile.intensity[0][ci],
                single.component_intensity[si]
            );
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let stack = onset_stack(128, 6, 3);
        let mut pipeline = PipelineConfig::new(0.037);
        pipeline.detect.dc_exclusion_radius = 10.0;
        let run = |workers| {
            let config = StackConfig {
                pipeline: pipeline.clone(),
                workers,
                frame_artifact_dir: None,
            };
            process_stack(&stack, &db(), &config).unwrap()
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.profile.components, b.profile.components);
        assert_eq!(a.profile.intensity, b.profile.intensity);
        assert_eq!(a.profile.match_pct, b.profile.match_pct);
        assert_eq!(
            a.profile.first_detection_frame,
            b.profile.first_detection_frame
        );
    }

    #[test]
    fn growing_amplitude_gives_nondecreasing_intensity() {
        let frames: Vec<Image2D> = (1..=8)
            .map(|k| frame(0.25 * k as f64, 0.0, 128))
            .collect();
        let stack = ImageStack::new(frames, 2.46).unwrap();
        let mut pipeline = PipelineConfig::new(0.037);
        pipeline.detect.dc_exclusion_radius = 10.0;
        let config = StackConfig {
            pipeline,
            workers: 2,
            frame_artifact_dir: None,
        };
        let result = process_stack(&stack, &db(), &config).unwrap();
        let li = result.profile.component_index("Li", "011").unwrap();
        let column: Vec<f64> = result.profile.intensity.iter().map(|r| r[li]).collect();
        for pair in column.windows(2) {
            assert!(pair[1] >= pair[0], "intensity decreased: {column:?}");
        }
        assert!(column[7] > column[0]);
    }

    #[test]
    fn never_matched_component_has_no_first_detection() {
        let stack = onset_stack(128, 3, 100);
        let mut pipeline = PipelineConfig::new(0.037);
        pipeline.detect.dc_exclusion_radius = 10.0;
        let config = StackConfig {
            pipeline,
            workers: 1,
            frame_artifact_dir: None,
        };
        let result = process_stack(&stack, &db(), &config).unwrap();
        assert!(result.profile.component_index("Li2O", "111").is_none());
    }
}
