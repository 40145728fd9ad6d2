//! Subcommand bodies. Orchestration only: all math lives in the core
//! crate, this file moves bytes and formats tables.

use crate::config::ExperimentConfig;
use crate::CliError;
use gate_racer_core::gate_sdf::{GateGeometry, GatePose, SampleClass};
use gate_racer_core::geometry::StreamFamily;
use gate_racer_core::neural_sdf::{
    load_weights, save_weights, train_stage1, train_stage2, write_history_csv, GateSdfModel,
    NetConfig, TrainConfig, TrainReport,
};
use gate_racer_core::perception::dataset::{
    generate_record, read_manifest, read_record, sample_camera_pose, write_manifest, write_record,
    DatasetManifest, DatasetRecord,
};
use gate_racer_core::perception::{CameraModel, NoiseModel};
use gate_racer_core::sim_harness::{
    config_fingerprint, run_batch, write_episode_csv, write_success_csv,
    ProviderKind, SuccessTable,
};
use gate_racer_core::Vec3;
use std::fs;
use std::path::Path;
use std::sync::Arc;

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

pub fn gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let dataset_dir = out.join("dataset");
    ensure_dir(&dataset_dir)?;

    let section = &cfg.dataset;
    let counts = section.counts();
    let geometry = GateGeometry::standard();
    let gate = GatePose::identity();
    let camera = CameraModel::low_res_default();
    let noise = NoiseModel::sensor_default();
    let region = cfg.sample_region();
    let sampling = cfg.pose_sampling();
    let family = StreamFamily::new(cfg.seed);

    if section.records == 0 {
        eprintln!("warning: dataset.records = 0, writing an empty manifest");
    }
    for i in 0..section.records {
        let mut rng = family.stream(i as u64);
        let cam_pose = sample_camera_pose(&gate, &sampling, &mut rng);
        let rec =
            generate_record(&geometry, &gate, &cam_pose, &camera, &noise, &counts, &region, &mut rng);
        write_record(&dataset_dir, i, &rec)
            .map_err(|e| CliError::Runtime(format!("record {i}: {e}")))?;
    }
    let manifest = DatasetManifest {
        records: section.records,
        points_per_record: counts.total(),
        seed: cfg.seed,
        config_fingerprint: cfg.fingerprint(),
        geometry,
    };
    write_manifest(&dataset_dir, &manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!(
        "wrote {} records x {} labeled points to {}",
        section.records,
        counts.total(),
        dataset_dir.display()
    );
    Ok(())
}

fn load_dataset(out: &Path) -> Result<(DatasetManifest, Vec<DatasetRecord>), CliError> {
    let dataset_dir = out.join("dataset");
    let manifest = read_manifest(&dataset_dir).map_err(|e| {
        CliError::Runtime(format!("no dataset at {} ({e}); run gen-data first", dataset_dir.display()))
    })?;
    let mut records = Vec::with_capacity(manifest.records);
    for i in 0..manifest.records {
        records.push(read_record(&dataset_dir, i).map_err(|e| CliError::Runtime(format!("record {i}: {e}")))?);
    }
    Ok((manifest, records))
}

fn train_config(cfg: &ExperimentConfig) -> TrainConfig {
    TrainConfig {
        lr: cfg.train.lr,
        batch_size: cfg.train.batch_size,
        epochs: cfg.train.epochs,
        points_per_image: cfg.train.points_per_image,
        val_fraction: cfg.train.val_fraction,
        seed: cfg.seed,
        ..TrainConfig::default()
    }
}

fn write_report(out: &Path, stage: u8, report: &TrainReport) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_history_csv(&report.history, &mut buf)?;
    fs::write(out.join(format!("train_stage{stage}.csv")), buf)?;
    if report.diverged {
        eprintln!("warning: stage {stage} diverged; weights restored from last stable epoch");
    }
    Ok(())
}

pub fn train(cfg: &ExperimentConfig, out: &Path, stage: u8) -> Result<(), CliError> {
    ensure_dir(out)?;
    let (_, records) = load_dataset(out)?;
    let tc = train_config(cfg);

    match stage {
        1 => {
            let mut rng = StreamFamily::new(cfg.seed).stream(9_000_000);
            let mut model = GateSdfModel::init(NetConfig::desk(cfg.train.latent_dim), &mut rng);
            let report = train_stage1(&mut model, &records, &tc);
            save_weights(&out.join("stage1.weights"), &model)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            write_report(out, 1, &report)?;
            if let Some(last) = report.history.last() {
                println!(
                    "stage 1 done: {} epochs, val sdf L1 {:.4} m, val recon L1 {:.4} m",
                    report.history.len(),
                    last.val_sdf,
                    last.val_recon
                );
            } else {
                println!("stage 1 done: 0 epochs (weights equal initialization)");
            }
        }
        2 => {
            let stage1 = out.join("stage1.weights");
            let mut model = load_weights(&stage1).map_err(|_| {
                CliError::Runtime(format!("stage 2 requires stage-1 weights at {}", stage1.display()))
            })?;
            let report = train_stage2(&mut model, &records, &tc);
            save_weights(&out.join("stage2.weights"), &model)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            write_report(out, 2, &report)?;
            println!("stage 2 done: {} epochs, decoders untouched", report.history.len());
        }
        _ => unreachable!("clap bounds the stage"),
    }
    Ok(())
}

pub fn eval_sdf(cfg: &ExperimentConfig, out: &Path, weights: &Path) -> Result<(), CliError> {
    let model = load_weights(weights)
        .map_err(|e| CliError::Runtime(format!("cannot load {}: {e}", weights.display())))?;
    let (manifest, records) = load_dataset(out)?;
    if model.cfg.latent_dim == 0 || manifest.records == 0 {
        return Err(CliError::Runtime("empty dataset".into()));
    }
    let eval_dir = out.join("eval");
    ensure_dir(&eval_dir)?;

    // per-class L1 and near-surface sign agreement over the whole dataset
    let classes = [
        SampleClass::NearSurface,
        SampleClass::Interior,
        SampleClass::CollisionProne,
        SampleClass::GlobalUniform,
    ];
    let mut abs_errors: Vec<Vec<f64>> = vec![Vec::new(); classes.len()];
    let mut sign_hits = 0usize;
    let mut sign_total = 0usize;
    for rec in &records {
        let z = model.encode(&rec.noisy);
        let points: Vec<Vec3> = rec.points.iter().map(|pt| pt.p).collect();
        let pred = model.decode_batch(&z, &points);
        for (pt, &s_hat) in rec.points.iter().zip(&pred) {
            let k = classes.iter().position(|&c| c == pt.class).unwrap();
            abs_errors[k].push((s_hat - pt.s).abs());
            if pt.class == SampleClass::NearSurface {
                sign_total += 1;
                if (s_hat >= 0.0) == (pt.s >= 0.0) {
                    sign_hits += 1;
                }
            }
        }
    }

    let mut lines = Vec::new();
    lines.push("class,mean_l1,median_l1,points".to_string());
    for (k, class) in classes.iter().enumerate() {
        let errs = &mut abs_errors[k];
        errs.sort_by(|a, b| a.total_cmp(b));
        let mean = errs.iter().sum::<f64>() / errs.len().max(1) as f64;
        let median = if errs.is_empty() { 0.0 } else { errs[errs.len() / 2] };
        lines.push(format!("{class:?},{mean},{median},{}", errs.len()));
    }
    let sign_rate = sign_hits as f64 / sign_total.max(1) as f64;
    lines.push(format!("sign_agreement,{sign_rate},{sign_rate},{sign_total}"));
    fs::write(eval_dir.join("metrics.csv"), lines.join("\n") + "\n")?;

    // horizontal slice maps through a frontal view of the canonical gate
    let geometry = manifest.geometry;
    let gate = GatePose::identity();
    let camera = CameraModel::low_res_default();
    let cam_pose = frontal_pose();
    let clean = gate_racer_core::perception::raycast_depth(&gate, &geometry, &cam_pose, &camera);
    let z = model.encode(&clean);
    let world_to_camera = cam_pose.inverse();
    let n = cfg.eval.grid;
    let half = cfg.eval.window / 2.0;
    for &height in &cfg.eval.slice_heights {
        let mut rows = Vec::with_capacity(n);
        for iy in 0..n {
            let y = -half + cfg.eval.window * (iy as f64 + 0.5) / n as f64;
            let points: Vec<Vec3> = (0..n)
                .map(|ix| {
                    let x = -half + cfg.eval.window * (ix as f64 + 0.5) / n as f64;
                    world_to_camera.transform_point(Vec3::new(x, y, height))
                })
                .collect();
            let vals = model.decode_batch(&z, &points);
            rows.push(vals.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
        }
        fs::write(eval_dir.join(format!("slice_z{height:+.2}.csv")), rows.join("\n") + "\n")?;
    }

    println!(
        "eval done: sign agreement {:.1}% over {} near-surface points; metrics + {} slice maps in {}",
        100.0 * sign_rate,
        sign_total,
        cfg.eval.slice_heights.len(),
        eval_dir.display()
    );
    Ok(())
}

/// Camera 3 m in front of the canonical gate, looking straight at it.
fn frontal_pose() -> gate_racer_core::RigidTransform {
    use gate_racer_core::perception::forward_camera_in_body;
    use gate_racer_core::UnitQuat;
    gate_racer_core::RigidTransform::new(
        UnitQuat::from_yaw(std::f64::consts::PI).mul(forward_camera_in_body().rotation),
        Vec3::new(3.0, 0.0, 0.0),
    )
}

pub fn race(cfg: &ExperimentConfig, out: &Path, dry_run: bool) -> Result<(), CliError> {
    let track = cfg.build_track();
    let scenario = cfg.build_scenario()?;
    let grid = &cfg.race;
    let cells = grid.speed_caps.len() * grid.magnitudes.len();

    if dry_run {
        println!("plan: {} scenario cells x {} trials", cells, scenario.trials);
        println!("  provider {:?}, perturbation {:?}", scenario.provider, scenario.perturbation);
        println!("  speed caps {:?}", grid.speed_caps);
        println!("  magnitudes {:?}", grid.magnitudes);
        println!("  fingerprint {}", config_fingerprint(&scenario, &track));
        return Ok(());
    }

    let model = match scenario.provider {
        ProviderKind::Neural => {
            let path = out.join("stage2.weights");
            let path = if path.exists() { path } else { out.join("stage1.weights") };
            let m = load_weights(&path).map_err(|_| {
                CliError::Runtime(format!(
                    "neural provider requires trained weights at {}",
                    path.display()
                ))
            })?;
            Some(Arc::new(m))
        }
        _ => None,
    };

    ensure_dir(out)?;
    let episodes_dir = out.join("episodes");
    ensure_dir(&episodes_dir)?;

    // per-cell episode logs first, then the aggregate grid
    let mut total_ok = 0usize;
    let mut total = 0usize;
    let mut max_speed = 0f64;
    let mut lap_times = Vec::new();
    let mut successes = Vec::with_capacity(grid.speed_caps.len());
    for &cap in &grid.speed_caps {
        let mut row = Vec::with_capacity(grid.magnitudes.len());
        for &mag in &grid.magnitudes {
            let mut s = scenario.clone();
            s.speed_cap = cap;
            s.magnitude = mag;
            let results = run_batch(&track, &s, model.as_ref());
            let mut cell_ok = 0usize;
            for (trial, r) in results.iter().enumerate() {
                total += 1;
                cell_ok += r.success as usize;
                max_speed = max_speed.max(r.max_speed);
                if r.success {
                    if let Some(&t) = r.gate_pass_times.last() {
                        lap_times.push(t / track.laps as f64);
                    }
                }
                if s.record_log {
                    let name = format!("ep_cap{cap}_mag{mag}_t{trial}.csv");
                    let mut buf = Vec::new();
                    write_episode_csv(r, &mut buf)?;
                    fs::write(episodes_dir.join(name), buf)?;
                }
            }
            total_ok += cell_ok;
            row.push(cell_ok);
        }
        successes.push(row);
    }
    let table = SuccessTable {
        speed_caps: grid.speed_caps.clone(),
        magnitudes: grid.magnitudes.clone(),
        successes,
        trials: scenario.trials,
        config_fingerprint: config_fingerprint(&scenario, &track),
    };

    let mut buf = Vec::new();
    write_success_csv(&table, &mut buf)?;
    fs::write(out.join("success_table.csv"), buf)?;
    let json = serde_json::json!({
        "seed": cfg.seed,
        "config_fingerprint": table.config_fingerprint,
        "speed_caps": table.speed_caps,
        "magnitudes": table.magnitudes,
        "successes": table.successes,
        "trials": table.trials,
    });
    fs::write(out.join("success_table.json"), serde_json::to_string_pretty(&json).unwrap())?;

    let rate = total_ok as f64 / total.max(1) as f64;
    let mean_lap = lap_times.iter().sum::<f64>() / lap_times.len().max(1) as f64;
    let summary = format!(
        "episodes: {total}\nsuccess rate: {:.1}%\nmax speed: {max_speed:.2} m/s\nmean lap time (successes): {mean_lap:.2} s\n",
        100.0 * rate
    );
    fs::write(out.join("summary.txt"), &summary)?;
    print!("{summary}");

    if let Some(min_rate) = grid.min_success_rate {
        if rate < min_rate {
            return Err(CliError::Threshold(format!(
                "success rate {rate:.3} below configured minimum {min_rate:.3}"
            )));
        }
    }
    Ok(())
}

pub fn report(dir: &Path, mixed: bool) -> Result<(), CliError> {
    let mut tables = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = fs::read_dir(&d)
            .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", d.display())))?;
        for entry in entries {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == "success_table.json") {
                let text = fs::read_to_string(&path)?;
                let v: serde_json::Value = serde_json::from_str(&text)
                    .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
                tables.push((path, v));
            }
        }
    }
    if tables.is_empty() {
        return Err(CliError::Runtime(format!(
            "no success_table.json found under {}",
            dir.display()
        )));
    }

    let fingerprint = tables[0].1["config_fingerprint"].as_str().unwrap_or("").to_string();
    if !mixed {
        for (path, v) in &tables {
            if v["config_fingerprint"].as_str().unwrap_or("") != fingerprint {
                return Err(CliError::Validation(format!(
                    "config fingerprint mismatch in {} (pass --mixed to pool anyway)",
                    path.display()
                )));
            }
        }
    }

    // pool runs: identical axes add trials, successes accumulate
    let first = &tables[0].1;
    let caps: Vec<f64> =
        first["speed_caps"].as_array().unwrap().iter().filter_map(|x| x.as_f64()).collect();
    let mags: Vec<f64> =
        first["magnitudes"].as_array().unwrap().iter().filter_map(|x| x.as_f64()).collect();
    let mut successes = vec![vec![0usize; mags.len()]; caps.len()];
    let mut trials = 0usize;
    for (path, v) in &tables {
        let s = v["successes"].as_array().ok_or_else(|| {
            CliError::Runtime(format!("{}: missing successes", path.display()))
        })?;
        if s.len() != caps.len() {
            return Err(CliError::Validation(format!("{}: grid shape mismatch", path.display())));
        }
        for (i, row) in s.iter().enumerate() {
            for (j, val) in row.as_array().unwrap().iter().enumerate() {
                successes[i][j] += val.as_u64().unwrap_or(0) as usize;
            }
        }
        trials += v["trials"].as_u64().unwrap_or(0) as usize;
    }

    println!("pooled {} runs, {} trials per cell", tables.len(), trials);
    let header = std::iter::once("speed_cap".to_string())
        .chain(mags.iter().map(|m| format!("mag_{m}")))
        .collect::<Vec<_>>()
        .join(" | ");
    println!("| {header} |");
    println!("|{}|", vec!["---"; mags.len() + 1].join("|"));
    let mut csv = vec![format!(
        "speed_cap,{}",
        mags.iter().map(|m| format!("mag_{m}")).collect::<Vec<_>>().join(",")
    )];
    for (i, cap) in caps.iter().enumerate() {
        let rates: Vec<String> = (0..mags.len())
            .map(|j| format!("{:.3}", successes[i][j] as f64 / trials.max(1) as f64))
            .collect();
        println!("| {cap} | {} |", rates.join(" | "));
        csv.push(format!("{cap},{}", rates.join(",")));
    }
    fs::write(dir.join("report.csv"), csv.join("\n") + "\n")?;
    Ok(())
}
