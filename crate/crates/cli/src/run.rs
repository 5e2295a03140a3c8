//! Command implementations.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use temscan::detect::{confusion, dice, import_mask, threshold_mask};
use temscan::fft::{forward_fft, log_magnitude};
use temscan::image::Image2D;
use temscan::io::db::read_dspacing_db;
use temscan::io::mrc::read_mrc_with_header;
use temscan::io::pgm::{read_pgm, write_pgm, write_ppm};
use temscan::io::report::{
    write_components_csv, write_intensity_profile_csv, write_radial_profile_csv,
    write_report_json,
};
use temscan::mapping::{disk_mask_with_partners, overlay, MapParams};
use temscan::phase::radial_profile;
use temscan::pipeline::{
    analyze_image, AnalysisResult, IntensityMetric, MaskSource, PipelineConfig,
};
use temscan::prep::enhance;
use temscan::synthgen::{export_training_set, synth_lattice, AugmentParams, FringeSpec};
use temscan::timeline::{frame_time, process_stack, StackConfig};
use temscan::{DetectParams, WatershedParams};

use crate::args::{
    AnalyzeArgs, Cli, Command, EvalArgs, IntensityMetricArg, PipelineArgs, RadialArgs, ScaleMode,
    StackArgs, SynthArgs,
};

pub fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Stack(args) => cmd_stack(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Radial(args) => cmd_radial(args),
    }
}

fn build_pipeline_config(args: &PipelineArgs) -> Result<PipelineConfig> {
    if !(args.pixel_size > 0.0) {
        bail!("--pixel-size must be positive, got {}", args.pixel_size);
    }
    let mut config = PipelineConfig::new(args.pixel_size);
    config.crop_size = args.crop_size;
    config.final_size = args.final_size;
    config.paper_compat = args.scale_mode == ScaleMode::Paper;
    config.enhance.gamma = args.gamma;
    config.enhance.gain = args.gain;
    config.enhance.validate()?;
    config.detect = DetectParams {
        blur_sigma: args.blur_sigma,
        dc_exclusion_radius: args.dc_exclusion,
        k_sigma: args.k_sigma,
        symmetry_tolerance: args.symmetry_tolerance,
        min_blob_area: args.min_blob_area,
    };
    config.watershed = WatershedParams {
        fg_fraction: args.fg_fraction,
        open_iters: args.open_iters,
        dilate_iters: args.dilate_iters,
    };
    config.map = MapParams {
        radius_scale: args.radius_scale,
        threshold_fraction: args.map_threshold,
        smooth_sigma: args.map_smooth_sigma,
    };
    config.match_tolerance = args.match_tolerance;
    config.intensity_metric = match args.intensity_metric {
        IntensityMetricArg::LinearMagnitude => IntensityMetric::LinearMagnitudeSum,
        IntensityMetricArg::PixelValueCount => IntensityMetric::PixelValueCount,
    };
    Ok(config)
}

fn pipeline_params_json(args: &PipelineArgs) -> serde_json::Value {
    serde_json::json!({
        "pixel_size_nm": args.pixel_size,
        "scale_mode": match args.scale_mode {
            ScaleMode::Generalized => "generalized",
            ScaleMode::Paper => "paper",
        },
        "crop_size": args.crop_size,
        "final_size": args.final_size,
        "enhance": { "gamma": args.gamma, "gain": args.gain },
        "detector": {
            "blur_sigma": args.blur_sigma,
            "dc_exclusion_radius": args.dc_exclusion,
            "k_sigma": args.k_sigma,
            "symmetry_tolerance": args.symmetry_tolerance,
            "min_blob_area": args.min_blob_area,
        },
        "watershed": {
            "fg_fraction": args.fg_fraction,
            "open_iters": args.open_iters,
            "dilate_iters": args.dilate_iters,
        },
        "mapping": {
            "radius_scale": args.radius_scale,
            "threshold_fraction": args.map_threshold,
            "smooth_sigma": args.map_smooth_sigma,
        },
        "match_tolerance": args.match_tolerance,
        "intensity_metric": match args.intensity_metric {
            IntensityMetricArg::LinearMagnitude => "linear_magnitude_sum",
            IntensityMetricArg::PixelValueCount => "pixel_value_count",
        },
    })
}

fn components_json(result: &AnalysisResult) -> serde_json::Value {
    let components: Vec<serde_json::Value> = result
        .matches
        .components
        .iter()
        .zip(&result.component_intensity)
        .map(|(c, &intensity)| {
            serde_json::json!({
                "name": c.name,
                "hkl": c.hkl,
                "d_calc_angstrom": c.d_calc,
                "d_ref_angstrom": c.d_ref,
                "match_pct": c.match_pct,
                "feature_ids": c.feature_ids,
                "feature_size_px": c.feature_size_px,
                "pixel_value_count": c.pixel_value_count,
                "intensity": intensity,
            })
        })
        .collect();
    serde_json::Value::Array(components)
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn write_analysis_artifacts(
    result: &AnalysisResult,
    base: &Image2D,
    out: &Path,
) -> Result<()> {
    write_components_csv(&result.matches.components, &out.join("components.csv"))?;
    write_radial_profile_csv(&result.profile, &out.join("radial_profile.csv"))?;
    write_pgm(&result.enhanced, &out.join("fft_enhanced.pgm"))?;
    write_pgm(&result.mask.to_image(), &out.join("mask.pgm"))?;
    for map in &result.maps {
        let path = out.join(format!(
            "map_{}_{}.pgm",
            sanitize(&map.name),
            sanitize(&map.hkl)
        ));
        write_pgm(&map.map.to_image(), &path)?;
    }
    let rgb = overlay(base, &result.maps)?;
    write_ppm(base.width(), base.height(), &rgb, &out.join("overlay.ppm"))?;
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<u8> {
    let config = build_pipeline_config(&args.pipeline)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;

    let img = read_pgm(&args.image)?.with_pixel_size(args.pipeline.pixel_size);
    let db = read_dspacing_db(&args.db)?;

    let mask_source = match &args.mask {
        None => MaskSource::Detect,
        Some(path) => {
            let chain = config.scale_chain(img.width())?;
            let (w, full_h) = (chain.final_size, chain.final_size);
            let h = if args.half { full_h / 2 } else { full_h };
            let mask = match args.mask_threshold {
                Some(t) => threshold_mask(&read_pgm(path)?, t)?,
                None => import_mask(path, w, h)?,
            };
            if args.half {
                MaskSource::ExternalHalf(mask)
            } else {
                MaskSource::External(mask)
            }
        }
    };

    let result = analyze_image(&img, &db, &config, &mask_source)?;
    write_analysis_artifacts(&result, &img, &args.out)?;

    let report = serde_json::json!({
        "command": "analyze",
        "input": args.image.display().to_string(),
        "db": args.db.display().to_string(),
        "mask_source": match &mask_source {
            MaskSource::Detect => "detector",
            MaskSource::External(_) => "external",
            MaskSource::ExternalHalf(_) => "external_half",
        },
        "params": pipeline_params_json(&args.pipeline),
        "scale_chain": result.chain,
        "feature_count": result.features.len(),
        "components": components_json(&result),
        "unassigned_features": result.matches.unassigned,
        "empty_component_maps": result
            .maps
            .iter()
            .filter(|m| m.empty_mask)
            .map(|m| format!("{} {}", m.name, m.hkl))
            .collect::<Vec<_>>(),
    });
    write_report_json(&report, &args.out.join("report.json"))?;

    for c in &result.matches.components {
        println!(
            "{} ({}) d_calc {:.5} A, d_ref {:.5} A, match {:.2}%",
            c.name, c.hkl, c.d_calc, c.d_ref, c.match_pct
        );
    }
    if result.has_features() {
        Ok(0)
    } else {
        eprintln!("no features detected; reports written to {}", args.out.display());
        Ok(2)
    }
}

fn cmd_stack(args: StackArgs) -> Result<u8> {
    if args.workers < 1 {
        bail!("--workers must be at least 1");
    }
    if !(args.frame_time > 0.0) {
        bail!("--frame-time must be positive");
    }
    let config = build_pipeline_config(&args.pipeline)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;

    let (mut stack, header) = read_mrc_with_header(&args.mrc)?;
    stack.frame_period_s = args.frame_time;
    stack.pixel_size = Some(args.pipeline.pixel_size);
    let db = read_dspacing_db(&args.db)?;

    let stack_config = StackConfig {
        pipeline: config,
        workers: args.workers,
        frame_artifact_dir: if args.no_frame_overlays {
            None
        } else {
            Some(args.out.join("frames"))
        },
    };
    let result = process_stack(&stack, &db, &stack_config)?;

    write_intensity_profile_csv(&result.profile, &args.out.join("intensity_profile.csv"))?;
    write_components_csv(&result.aggregate_components, &args.out.join("components.csv"))?;
    write_radial_profile_csv(&result.mean_profile, &args.out.join("radial_profile.csv"))?;

    let first_detection: Vec<serde_json::Value> = result
        .profile
        .components
        .iter()
        .zip(&result.profile.first_detection_frame)
        .map(|((name, hkl), frame)| {
            serde_json::json!({
                "name": name,
                "hkl": hkl,
                "first_detection_frame": frame,
                "first_detection_time_s": frame
                    .map(|k| frame_time(k, result.profile.frame_period_s).expect("k >= 1")),
            })
        })
        .collect();
    let cell = header.cell_angstrom;
    let report = serde_json::json!({
        "command": "stack",
        "input": args.mrc.display().to_string(),
        "db": args.db.display().to_string(),
        "params": pipeline_params_json(&args.pipeline),
        "frame_count": stack.len(),
        "frame_period_s": stack.frame_period_s,
        "workers": args.workers,
        "mrc_mode": header.mode,
        // Header cell dimensions are informational; the pixel size used
        // for analysis always comes from --pixel-size.
        "mrc_cell_angstrom": if cell.iter().any(|&c| c != 0.0) {
            Some(cell.to_vec())
        } else {
            None
        },
        "components": result.profile.components.iter().map(|(n, h)| format!("{n} {h}")).collect::<Vec<_>>(),
        "first_detection": first_detection,
        "warnings": result
            .warnings
            .iter()
            .map(|(frame, msg)| serde_json::json!({ "frame": frame, "message": msg }))
            .collect::<Vec<_>>(),
    });
    write_report_json(&report, &args.out.join("report.json"))?;

    for ((name, hkl), frame) in result
        .profile
        .components
        .iter()
        .zip(&result.profile.first_detection_frame)
    {
        match frame {
            Some(k) => println!(
                "{name} ({hkl}) first detected at frame {k} ({:.2} s)",
                frame_time(*k, result.profile.frame_period_s)?
            ),
            None => println!("{name} ({hkl}) matched but below detection thresholds"),
        }
    }
    for (frame, msg) in &result.warnings {
        eprintln!("warning: frame {frame}: {msg}");
    }
    if result.profile.components.is_empty() {
        eprintln!("no components detected; reports written to {}", args.out.display());
        Ok(2)
    } else {
        Ok(0)
    }
}

fn parse_fringe(spec: &str) -> Result<FringeSpec> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() < 3 || parts.len() > 4 {
        bail!("fringe spec `{spec}` must be d_angstrom:orientation_deg:amplitude[:phase_deg]");
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("invalid number in fringe spec `{spec}`"))?;
    let mut fringe = FringeSpec::new(nums[0], nums[1].to_radians(), nums[2]);
    if let Some(&phase) = nums.get(3) {
        fringe.phase = phase.to_radians();
    }
    Ok(fringe)
}

fn cmd_synth(args: SynthArgs) -> Result<u8> {
    if !(args.pixel_size > 0.0) {
        bail!("--pixel-size must be positive");
    }
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    let specs: Vec<FringeSpec> = args
        .fringes
        .iter()
        .map(|s| parse_fringe(s))
        .collect::<Result<_>>()?;

    let (img, truth) = synth_lattice(&specs, args.size, args.pixel_size, args.noise, args.seed)?;
    write_pgm(&img.normalized(), &args.out.join("image.pgm"))?;

    let field = forward_fft(&img);
    let enhanced = enhance(&log_magnitude(&field), &Default::default());
    write_pgm(&enhanced, &args.out.join("fft_enhanced.pgm"))?;

    let disks: Vec<(f64, f64, f64)> = truth
        .iter()
        .map(|t| (t.x, t.y, args.spot_mask_radius))
        .collect();
    let gt_mask = disk_mask_with_partners(&disks, args.size, args.size);
    write_pgm(&gt_mask.to_image(), &args.out.join("mask.pgm"))?;

    let mut truth_csv =
        String::from("d_angstrom,orientation_deg,amplitude,spot_x,spot_y,partner_x,partner_y,radius_px\n");
    for (spec, t) in specs.iter().zip(&truth) {
        truth_csv.push_str(&format!(
            "{:.5},{:.3},{:.4},{:.2},{:.2},{:.2},{:.2},{:.3}\n",
            t.d_angstrom,
            spec.orientation.to_degrees(),
            spec.amplitude,
            t.x,
            t.y,
            t.partner_x,
            t.partner_y,
            t.radius_px
        ));
    }
    fs::write(args.out.join("truth.csv"), truth_csv)?;

    if let Some(count) = args.train_count {
        let params = AugmentParams {
            seed: args.seed,
            ..AugmentParams::default()
        };
        export_training_set(
            &[(enhanced, gt_mask)],
            count,
            &args.out.join("train"),
            &params,
            args.train_size,
        )?;
    }

    for t in &truth {
        println!(
            "fringe d {:.5} A -> spot pair at ({:.1}, {:.1}) / ({:.1}, {:.1}), radius {:.2} px",
            t.d_angstrom, t.x, t.y, t.partner_x, t.partner_y, t.radius_px
        );
    }
    Ok(0)
}

fn cmd_eval(args: EvalArgs) -> Result<u8> {
    let pred_img = read_pgm(&args.pred)?;
    let (w, h) = (pred_img.width(), pred_img.height());
    let pred = import_mask(&args.pred, w, h)?;
    let truth = import_mask(&args.truth, w, h)?;
    let score = dice(&pred, &truth)?;
    let (tp, fp, fneg, tn) = confusion(&pred, &truth)?;
    println!("dice {score:.6}");
    println!("tp {tp} fp {fp} fn {fneg} tn {tn}");
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        let report = serde_json::json!({
            "command": "eval",
            "pred": args.pred.display().to_string(),
            "truth": args.truth.display().to_string(),
            "dice": score,
            "confusion": { "tp": tp, "fp": fp, "fn": fneg, "tn": tn },
        });
        write_report_json(&report, &out.join("eval.json"))?;
    }
    Ok(0)
}

fn cmd_radial(args: RadialArgs) -> Result<u8> {
    let config = build_pipeline_config(&args.pipeline)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    let img = read_pgm(&args.image)?;
    if img.width() != img.height() {
        bail!("radial profiling expects a square image, got {}x{}", img.width(), img.height());
    }
    let chain = config.scale_chain(img.width())?;

    let field = forward_fft(&img);
    let log_view = prepare_view(&log_magnitude(&field), &chain)?;
    let enhanced = enhance(&log_view, &config.enhance);

    let mask = match &args.mask {
        Some(path) => Some(import_mask(path, enhanced.width(), enhanced.height())?),
        None => None,
    };
    let profile = radial_profile(&enhanced, &chain, mask.as_ref())?;
    write_radial_profile_csv(&profile, &args.out.join("radial_profile.csv"))?;
    println!(
        "radial profile with {} bands written to {}",
        profile.bands.len(),
        args.out.join("radial_profile.csv").display()
    );
    Ok(0)
}

// The crop/resize view preparation, mirrored here for the radial command
// which bypasses the full pipeline.
fn prepare_view(img: &Image2D, chain: &temscan::ScaleChain) -> Result<Image2D> {
    use temscan::prep::{center_crop, resize};
    let cropped = if chain.crop_size < chain.original_size {
        center_crop(img, chain.crop_size, chain.crop_size)?
    } else {
        img.clone()
    };
    let out = if chain.final_size < chain.crop_size {
        resize(&cropped, chain.final_size, chain.final_size)?
    } else {
        cropped
    };
    Ok(out)
}
