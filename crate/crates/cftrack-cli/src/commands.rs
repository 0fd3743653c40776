//! Command implementations: track, synth, selftest, bench.

use std::path::Path;
use std::time::Instant;

use cftrack_core::error::Error as CoreError;
use cftrack_core::eval::{
    generate_synthetic, load_sequence, run_ope, write_sequence, ExternalFeatures,
};
use cftrack_core::features::{FeatureBackend, FeatureStack, Frame};
use cftrack_core::rng::SplitMix64;
use cftrack_core::selftest;
use cftrack_core::solver::{
    make_desired_response, train_filter, IterationTrace, PenalizationMask, SolverConfig,
};
use cftrack_core::spectral::{Grid2, Plane};
use cftrack_core::tracker::{detect, initialize, DecisionRecord, Rect};

use crate::config::RunConfig;

/// Process failure with its exit code.
#[derive(Debug)]
pub enum CliError {
    /// Exit 1: configuration problems.
    Config(String),
    /// Exit 2: missing or malformed data.
    Data(String),
    /// Exit 3: solver divergence while tracking.
    Divergence(String),
    /// Exit 4: a self-test suite failed.
    Selftest(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Selftest(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::Data(m)
            | CliError::Divergence(m)
            | CliError::Selftest(m) => m,
        }
    }
}

fn data_or_divergence(e: CoreError) -> CliError {
    match e {
        CoreError::Diverged { .. } => CliError::Divergence(e.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", cfg.out.display())))
}

pub fn cmd_track(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let seq_dir = cfg
        .sequence
        .as_ref()
        .ok_or_else(|| CliError::Config("run.sequence is not set".into()))?;

    let mut tracker_cfg = cfg.tracker.clone();
    tracker_cfg.collect_traces = cfg.trace;

    let external = match tracker_cfg.features.backend {
        FeatureBackend::External => {
            let dir = cfg.external_features.as_ref().ok_or_else(|| {
                CliError::Config(
                    "features.backend = external requires run.external_features".into(),
                )
            })?;
            Some(ExternalFeatures::new(dir.clone()))
        }
        _ => None,
    };

    let seq = load_sequence(seq_dir).map_err(data_or_divergence)?;
    let (result, metrics) =
        run_ope(&seq, &tracker_cfg, external.as_ref()).map_err(data_or_divergence)?;

    ensure_out_dir(cfg)?;
    let mut boxes = String::from("frame,x,y,w,h\n");
    for (i, b) in result.boxes.iter().enumerate() {
        boxes.push_str(&format!("{},{},{},{},{}\n", i, b.x, b.y, b.w, b.h));
    }
    write_file(&cfg.out.join("boxes.csv"), &boxes)?;

    let mut decisions = String::from(DecisionRecord::CSV_HEADER);
    decisions.push('\n');
    for d in &result.decisions {
        decisions.push_str(&d.csv_row());
        decisions.push('\n');
    }
    write_file(&cfg.out.join("decisions.csv"), &decisions)?;

    write_file(&cfg.out.join("metrics.json"), &metrics.to_json())?;
    write_file(&cfg.out.join("curves.csv"), &metrics.curves_csv())?;
    write_file(&cfg.out.join("effective_config.cfg"), &cfg.dump())?;

    if cfg.trace {
        let mut trace = String::from(IterationTrace::CSV_HEADER);
        trace.push('\n');
        for t in &result.traces {
            trace.push_str(&t.csv_row());
            trace.push('\n');
        }
        write_file(&cfg.out.join("solver_trace.csv"), &trace)?;
    }

    println!(
        "tracked {} frames: precision@20 {:.4}, AUC {:.4}, mean CLE {:.3} px",
        result.boxes.len(),
        metrics.precision_at_20,
        metrics.auc,
        metrics.mean_cle
    );
    Ok(())
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.synth
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let seq =
        generate_synthetic(&cfg.synth, cfg.seed).map_err(|e| CliError::Config(e.to_string()))?;
    ensure_out_dir(cfg)?;
    write_sequence(&seq, &cfg.out).map_err(data_or_divergence)?;
    println!(
        "wrote {} frames and groundtruth.txt to {}",
        seq.len(),
        cfg.out.display()
    );
    Ok(())
}

pub fn cmd_selftest(cfg: &RunConfig) -> Result<(), CliError> {
    let reports = selftest::run_all(cfg.seed);
    let mut failed = Vec::new();
    for r in &reports {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("{status} {} ({} trials): {}", r.name, r.trials, r.detail);
        if !r.passed {
            failed.push(r.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Selftest(format!(
            "suites failed: {}",
            failed.join(", ")
        )))
    }
}

fn time_ms(repeats: usize, mut f: impl FnMut()) -> (f64, f64) {
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        f();
        samples.push(t.elapsed().as_secs_f64() * 1e3);
    }
    samples.sort_by(|a, b| a.total_cmp(b));
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let p95_idx = ((samples.len() as f64 * 0.95).ceil() as usize).clamp(1, samples.len()) - 1;
    (mean, samples[p95_idx])
}

fn bench_blob_frame(size: usize) -> Frame {
    let mut rng = SplitMix64::new(99);
    let mut data = vec![0.0; size * size];
    for v in data.iter_mut() {
        *v = 0.4 + 0.2 * rng.next_f64();
    }
    let c = size as f64 / 2.0;
    let radius = size as f64 / 8.0;
    for y in 0..size {
        for x in 0..size {
            let r = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
            if r < radius {
                data[y * size + x] = (0.3 + 0.7 * (radius - r) / radius).min(1.0);
            }
        }
    }
    Frame::new(size, size, data).expect("bench frame")
}

pub fn cmd_bench(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut csv = String::from("op,grid,channels,iterations,ms_mean,ms_p95\n");
    let mut rng = SplitMix64::new(cfg.seed);

    for &side in &cfg.bench.grids {
        for &d in &cfg.bench.channels {
            let outer = Grid2::new(side, side).map_err(|e| CliError::Config(e.to_string()))?;
            let inner = Grid2::new((side / 2).max(1), (side / 2).max(1))
                .map_err(|e| CliError::Config(e.to_string()))?;
            let stack = FeatureStack::new(
                1,
                (0..d)
                    .map(|_| Plane::from_fn(outer, |_, _| rng.range_f64(-1.0, 1.0)))
                    .collect(),
            )
            .map_err(|e| CliError::Config(e.to_string()))?;
            let y = make_desired_response(outer, (side as f64 / 16.0).max(0.5))
                .map_err(|e| CliError::Config(e.to_string()))?;
            let p = PenalizationMask::bowl(inner, 0.1, 3.0)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let solver_cfg = SolverConfig {
                admm_iterations: cfg.bench.admm_iterations,
                tolerance: 1e-12,
                ..cfg.tracker.solver.clone()
            };
            let (mean, p95) = time_ms(cfg.bench.repeats, || {
                train_filter(&stack, &y, &p, &solver_cfg, None).expect("bench train");
            });
            csv.push_str(&format!(
                "train_filter,{side}x{side},{d},{},{mean},{p95}\n",
                cfg.bench.admm_iterations
            ));
        }

        // Detection timing: a tracker whose feature grid matches the side.
        let cell = cfg.tracker.features.cell_size;
        let pad = cfg.tracker.scale.search_padding.sqrt();
        let target_px = (side * cell) as f64 / pad;
        let frame_px = (side * cell * 2).max(64);
        let frame = bench_blob_frame(frame_px);
        let fc = frame_px as f64 / 2.0;
        let init = Rect::from_center((fc, fc), (target_px, target_px));
        let state = initialize(&frame, init, &cfg.tracker, None)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let (mean, p95) = time_ms(cfg.bench.repeats, || {
            detect(&state, &frame, &cfg.tracker.scale, None).expect("bench detect");
        });
        csv.push_str(&format!(
            "detect,{side}x{side},{},{},{mean},{p95}\n",
            state.appearance.channels(),
            cfg.tracker.scale.num_scales
        ));
    }

    ensure_out_dir(cfg)?;
    write_file(&cfg.out.join("bench.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}
