//! Report artifacts: components.csv, radial_profile.csv,
//! intensity_profile.csv, and report.json.
//!
//! Numeric formatting is fixed (5 decimals for d-spacings, 2 for
//! percentages and sizes) and component rows are ordered by d descending,
//! so identical inputs produce byte-identical files.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::phase::{ComponentMatch, DiffractionProfile};
use crate::timeline::{frame_time, IntensityProfile};

pub fn write_components_csv(components: &[ComponentMatch], path: &Path) -> Result<()> {
    let mut out =
        String::from("name,hkl,d_calc,d_ref,match_pct,feature_size_px,pixel_value_count\n");
    for c in components {
        out.push_str(&format!(
            "{},{},{:.5},{:.5},{:.2},{:.2},{}\n",
            c.name, c.hkl, c.d_calc, c.d_ref, c.match_pct, c.feature_size_px, c.pixel_value_count
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_radial_profile_csv(profile: &DiffractionProfile, path: &Path) -> Result<()> {
    let mut out = String::from("d_angstrom,intensity\n");
    for band in &profile.bands {
        out.push_str(&format!("{:.5},{:.6}\n", band.d_angstrom, band.intensity));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_intensity_profile_csv(profile: &IntensityProfile, path: &Path) -> Result<()> {
    let mut out = String::from("frame,time_s");
    for (name, hkl) in &profile.components {
        out.push_str(&format!(",{name}_{hkl}"));
    }
    out.push('\n');
    for (frame0, row) in profile.intensity.iter().enumerate() {
        let k = frame0 + 1;
        out.push_str(&format!(
            "{k},{:.2}",
            frame_time(k, profile.frame_period_s).expect("k >= 1")
        ));
        for v in row {
            out.push_str(&format!(",{v:.6}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_report_json(report: &serde_json::Value, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::InvalidArgument(format!("report serialization: {e}")))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::ProfileBand;
    use tempfile::tempdir;

    fn component(name: &str, hkl: &str, d_calc: f64, d_ref: f64) -> ComponentMatch {
        ComponentMatch {
            name: name.into(),
            hkl: hkl.into(),
            d_calc,
            d_ref,
            match_pct: crate::phase::match_percent(d_calc, d_ref),
            feature_ids: vec![1],
            feature_size_px: 20.027,
            pixel_value_count: 28078,
        }
    }

    #[test]
    fn component_rows_follow_the_fixed_format() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("components.csv");
        write_components_csv(&[component("Li", "011", 2.41641, 2.416)], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "name,hkl,d_calc,d_ref,match_pct,feature_size_px,pixel_value_count"
        );
        assert_eq!(
            lines.next().unwrap(),
            "Li,011,2.41641,2.41600,99.98,20.03,28078"
        );
    }

    #[test]
    fn empty_component_set_is_header_only() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("components.csv");
        write_components_csv(&[], &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 1);
    }

    #[test]
    fn reports_are_byte_deterministic() {
        let dir = tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let rows = vec![
            component("Li2O", "111", 2.62746, 2.6528),
            component("Li", "011", 2.41641, 2.416),
        ];
        write_components_csv(&rows, &a).unwrap();
        write_components_csv(&rows, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn intensity_profile_times_step_by_the_frame_period() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("intensity_profile.csv");
        let profile = IntensityProfile {
            components: vec![("Li".into(), "011".into())],
            intensity: (0..100).map(|k| vec![k as f64]).collect(),
            match_pct: (0..100).map(|_| vec![Some(99.9)]).collect(),
            frame_period_s: 2.46,
            first_detection_frame: vec![Some(1)],
        };
        write_intensity_profile_csv(&profile, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 101);
        assert_eq!(lines[0], "frame,time_s,Li_011");
        assert!(lines[1].starts_with("1,2.46,"));
        assert!(lines[2].starts_with("2,4.92,"));
        assert!(lines[100].starts_with("100,246.00,"));
    }

    #[test]
    fn radial_profile_columns() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("radial_profile.csv");
        let profile = DiffractionProfile {
            bands: vec![
                ProfileBand {
                    radius: 0.5,
                    d_angstrom: 100.0,
                    intensity: 1.0,
                },
                ProfileBand {
                    radius: 1.5,
                    d_angstrom: 33.333333,
                    intensity: 2.0,
                },
            ],
        };
        write_radial_profile_csv(&profile, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "d_angstrom,intensity\n100.00000,1.000000\n33.33333,2.000000\n");
    }
}
