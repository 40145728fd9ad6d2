//! Two-stage training. Stage 1 jointly trains encoder, SDF head, and the
//! reconstruction decoder on clean/noisy pairs; stage 2 fine-tunes the
//! encoder alone on a harsher noise profile with every decoder parameter
//! frozen. Losses are smoothed L1; the optimizer is Adam over the flat
//! parameter vector.

use super::layers::{huber, huber_grad, Adam};
use super::model::{mlp_backward, GateSdfModel, ModelGrads};
use crate::geometry::{RngStream, StreamFamily};
use crate::perception::dataset::DatasetRecord;
use ndarray::{Array3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lambda_recon: f64,
    pub lambda_sdf: f64,
    /// Point-SDF pairs subsampled per image per step.
    pub points_per_image: usize,
    pub val_fraction: f64,
    pub huber_knee: f64,
    pub seed: u64,
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 16,
            epochs: 12,
            lambda_recon: 1.0,
            lambda_sdf: 1.0,
            points_per_image: 512,
            val_fraction: 0.15,
            huber_knee: 1e-3,
            seed: 0,
            parallel: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.lambda_recon < 0.0 || self.lambda_sdf < 0.0 {
            return Err("loss weights must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err("val_fraction must lie in [0, 1)".into());
        }
        if self.batch_size == 0 || self.points_per_image == 0 {
            return Err("batch size and point count must be positive".into());
        }
        Ok(())
    }
}

/// Per-epoch plain-L1 metrics (reconstruction in meters, SDF in meters).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_recon: f64,
    pub train_sdf: f64,
    pub val_recon: f64,
    pub val_sdf: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub history: Vec<EpochStats>,
    /// True when a non-finite loss aborted training; the model holds the
    /// last finite checkpoint.
    pub diverged: bool,
}

pub fn write_history_csv(history: &[EpochStats], w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "epoch,train_recon,train_sdf,val_recon,val_sdf")?;
    for s in history {
        writeln!(w, "{},{},{},{},{}", s.epoch, s.train_recon, s.train_sdf, s.val_recon, s.val_sdf)?;
    }
    Ok(())
}

struct RecordPass {
    recon_l1: f64,
    sdf_l1: f64,
    huber_total: f64,
    grads: Option<ModelGrads>,
}

/// Forward (and optionally backward) for one record with a fixed point
/// subsample. Gradients come back scaled by the loss weights, ready to be
/// averaged over the batch.
fn record_pass(
    model: &GateSdfModel,
    rec: &DatasetRecord,
    point_idx: &[usize],
    cfg: &TrainConfig,
    lambda_recon: f64,
    freeze_decoders: bool,
    with_grads: bool,
) -> RecordPass {
    let scale = model.cfg.depth_scale;
    let (z, etrace) = model.encode_trace(&rec.noisy);

    // reconstruction branch (skipped entirely when unweighted)
    let n_px = (model.cfg.width * model.cfg.height) as f64;
    let mut recon_l1 = 0.0;
    let mut recon_huber = 0.0;
    let mut recon_part = None;
    if lambda_recon > 0.0 {
        let (yhat, rtrace) = model.recon_forward(&z);
        let mut grad_img = Array3::zeros(yhat.dim());
        for v in 0..model.cfg.height {
            for u in 0..model.cfg.width {
                let err_m = yhat[[0, v, u]] / scale - rec.clean.at(u, v) as f64;
                recon_l1 += err_m.abs();
                recon_huber += huber(err_m, cfg.huber_knee);
                if with_grads {
                    grad_img[[0, v, u]] =
                        lambda_recon * huber_grad(err_m, cfg.huber_knee) / (scale * n_px);
                }
            }
        }
        recon_l1 /= n_px;
        recon_huber /= n_px;
        recon_part = with_grads.then(|| model.recon_backward(&rtrace, &grad_img));
    }

    // SDF branch on the subsampled points
    let points: Vec<_> = point_idx.iter().map(|&i| rec.points[i].p).collect();
    let targets: Vec<f64> = point_idx.iter().map(|&i| rec.points[i].s).collect();
    let inputs = model.sdf_inputs(z.as_slice().unwrap(), &points);
    let (preds, mtrace) = model.sdf_forward(&inputs);
    let n_pts = points.len() as f64;
    let mut sdf_l1 = 0.0;
    let mut sdf_huber = 0.0;
    let mut grad_pred = ndarray::Array1::zeros(points.len());
    for i in 0..points.len() {
        let err = preds[i] - targets[i];
        sdf_l1 += err.abs();
        sdf_huber += huber(err, cfg.huber_knee);
        if with_grads {
            grad_pred[i] = cfg.lambda_sdf * huber_grad(err, cfg.huber_knee) / n_pts;
        }
    }
    sdf_l1 /= n_pts;
    sdf_huber /= n_pts;

    let huber_total = lambda_recon * recon_huber + cfg.lambda_sdf * sdf_huber;
    if !with_grads {
        return RecordPass { recon_l1, sdf_l1, huber_total, grads: None };
    }

    let (sdf_grads, grad_inputs) = mlp_backward(&model.sdf, &mtrace, &grad_pred);
    // latent gradient: SDF branch contributes through the first L input
    // columns, reconstruction through its decoder
    let mut grad_z = grad_inputs
        .slice(ndarray::s![.., ..model.cfg.latent_dim])
        .sum_axis(Axis(0));
    let mut grads = ModelGrads::zeros(model);
    if let Some((recon_grads, gz_recon)) = recon_part {
        grad_z += &gz_recon;
        if !freeze_decoders {
            grads.add_recon(&recon_grads, 1.0);
        }
    }
    if !freeze_decoders {
        grads.add_sdf(&sdf_grads, 1.0);
    }
    let enc_grads = model.encoder_backward(&etrace, &grad_z);
    grads.add_encoder(&enc_grads, 1.0);
    RecordPass { recon_l1, sdf_l1, huber_total, grads: Some(grads) }
}

fn subsample_indices(rng: &mut RngStream, available: usize, want: usize) -> Vec<usize> {
    let k = want.min(available);
    rand::seq::index::sample(rng, available, k).into_vec()
}

/// Mean plain-L1 metrics over a record slice (no gradients).
pub fn evaluate(
    model: &GateSdfModel,
    records: &[&DatasetRecord],
    cfg: &TrainConfig,
    lambda_recon: f64,
    seed_stream: u64,
) -> (f64, f64) {
    if records.is_empty() {
        return (0.0, 0.0);
    }
    let family = StreamFamily::new(cfg.seed);
    let passes: Vec<(f64, f64)> = records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let mut rng = family.rollout_stream(seed_stream, i as u64);
            let idx = subsample_indices(&mut rng, rec.points.len(), cfg.points_per_image);
            let p = record_pass(model, rec, &idx, cfg, lambda_recon, true, false);
            (p.recon_l1, p.sdf_l1)
        })
        .collect();
    let n = passes.len() as f64;
    (passes.iter().map(|p| p.0).sum::<f64>() / n, passes.iter().map(|p| p.1).sum::<f64>() / n)
}

fn run_training(
    model: &mut GateSdfModel,
    dataset: &[DatasetRecord],
    cfg: &TrainConfig,
    lambda_recon: f64,
    freeze_decoders: bool,
) -> TrainReport {
    cfg.validate().expect("invalid train config");
    assert!(!dataset.is_empty(), "empty dataset");

    let n_val = ((dataset.len() as f64 * cfg.val_fraction).round() as usize).min(dataset.len() - 1);
    let n_train = dataset.len() - n_val;
    let train: Vec<&DatasetRecord> = dataset[..n_train].iter().collect();
    let val: Vec<&DatasetRecord> = dataset[n_train..].iter().collect();

    let family = StreamFamily::new(cfg.seed);
    let mut params = model.flatten();
    let mut opt = Adam::new(params.len(), cfg.lr, cfg.beta1, cfg.beta2);
    let mut history = Vec::new();
    let mut last_good = params.clone();

    for epoch in 1..=cfg.epochs {
        // deterministic epoch shuffle
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut shuffle_rng = family.stream(1_000_000 + epoch as u64);
        for i in (1..order.len()).rev() {
            let j = rand::Rng::gen_range(&mut shuffle_rng, 0..=i);
            order.swap(i, j);
        }

        let mut epoch_recon = 0.0;
        let mut epoch_sdf = 0.0;
        let mut diverged = false;
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let pass_one = |(slot, &rec_idx): (usize, &usize)| {
                let mut rng = family
                    .rollout_stream(epoch as u64 * 1_000_003 + batch_no as u64, slot as u64);
                let rec = train[rec_idx];
                let idx = subsample_indices(&mut rng, rec.points.len(), cfg.points_per_image);
                record_pass(model, rec, &idx, cfg, lambda_recon, freeze_decoders, true)
            };
            let passes: Vec<RecordPass> = if cfg.parallel {
                batch.par_iter().enumerate().map(pass_one).collect()
            } else {
                batch.iter().enumerate().map(pass_one).collect()
            };

            let mut grads = ModelGrads::zeros(model);
            let inv = 1.0 / batch.len() as f64;
            for p in &passes {
                epoch_recon += p.recon_l1;
                epoch_sdf += p.sdf_l1;
                if !p.huber_total.is_finite() {
                    diverged = true;
                }
                grads.add(p.grads.as_ref().unwrap());
            }
            if diverged {
                break;
            }
            let mut gflat = grads.flatten();
            gflat.iter_mut().for_each(|g| *g *= inv);
            opt.step(&mut params, &gflat);
            model.unflatten(&params);
        }

        if diverged {
            model.unflatten(&last_good);
            return TrainReport { history, diverged: true };
        }

        let (val_recon, val_sdf) = evaluate(model, &val, cfg, lambda_recon, 2_000_000 + epoch as u64);
        history.push(EpochStats {
            epoch,
            train_recon: epoch_recon / train.len() as f64,
            train_sdf: epoch_sdf / train.len() as f64,
            val_recon,
            val_sdf,
        });
        last_good = params.clone();
    }

    TrainReport { history, diverged: false }
}

/// Joint training of encoder, SDF head, and reconstruction decoder.
pub fn train_stage1(model: &mut GateSdfModel, dataset: &[DatasetRecord], cfg: &TrainConfig) -> TrainReport {
    run_training(model, dataset, cfg, cfg.lambda_recon, false)
}

/// Encoder-only fine-tune: the reconstruction branch is dropped and every
/// decoder parameter stays bitwise unchanged.
pub fn train_stage2(model: &mut GateSdfModel, dataset: &[DatasetRecord], cfg: &TrainConfig) -> TrainReport {
    run_training(model, dataset, cfg, 0.0, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gate_sdf::{LabeledPoint, SampleClass};
    use crate::geometry::{RigidTransform, Vec3};
    use crate::neural_sdf::model::NetConfig;
    use crate::perception::dataset::DatasetRecord;
    use crate::perception::{CameraModel, DepthImage};
    use rand::Rng;

    fn toy_cfg() -> NetConfig {
        NetConfig {
            width: 16,
            height: 16,
            latent_dim: 8,
            pe_bands: 1,
            depth_scale: 0.1,
            conv_channels: [2, 3, 4, 5],
            hidden: 16,
            hidden_layers: 3,
        }
    }

    fn toy_record(seed: u64, cfg: &NetConfig) -> DatasetRecord {
        let mut rng = RngStream::new(seed, 0);
        let base: f32 = rng.gen_range(2.0..4.0);
        let mut clean = DepthImage::zeros(cfg.width, cfg.height);
        for v in 0..cfg.height {
            for u in 0..cfg.width {
                clean.set(u, v, base + 0.01 * (u + v) as f32);
            }
        }
        let mut noisy = clean.clone();
        for d in noisy.data.iter_mut() {
            *d += rng.gen_range(-0.1f32..0.1);
        }
        let points: Vec<LabeledPoint> = (0..64)
            .map(|_| {
                let p = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(1.0..5.0));
                LabeledPoint { p, s: 0.3 * p.x - 0.1 * p.z, class: SampleClass::GlobalUniform }
            })
            .collect();
        DatasetRecord {
            clean,
            noisy,
            points,
            camera: CameraModel::low_res_default(),
            world_to_camera: RigidTransform::IDENTITY,
            gate_in_camera: RigidTransform::IDENTITY,
        }
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        // 100 random parameter probes on the toy network
        let cfg = toy_cfg();
        let model = GateSdfModel::init(cfg, &mut RngStream::new(100, 0));
        let rec = toy_record(101, &cfg);
        // a wide knee keeps the loss twice differentiable almost everywhere
        // so central differences converge; errors of a few meters still
        // exercise both Huber branches
        let tcfg =
            TrainConfig { points_per_image: 16, huber_knee: 0.5, ..TrainConfig::default() };
        let idx: Vec<usize> = (0..16).collect();

        let loss_of = |m: &GateSdfModel| {
            record_pass(m, &rec, &idx, &tcfg, tcfg.lambda_recon, false, false).huber_total
        };
        let pass = record_pass(&model, &rec, &idx, &tcfg, tcfg.lambda_recon, false, true);
        let analytic = pass.grads.unwrap().flatten();
        let mut params = model.flatten();
        let mut probe_rng = RngStream::new(102, 0);
        let eps = 1e-6;
        let mut checked = 0;
        while checked < 100 {
            let i = probe_rng.gen_range(0..params.len());
            let orig = params[i];
            params[i] = orig + eps;
            let mut m = model.clone();
            m.unflatten(&params);
            let hi = loss_of(&m);
            params[i] = orig - eps;
            m.unflatten(&params);
            let lo = loss_of(&m);
            params[i] = orig;
            let numeric = (hi - lo) / (2.0 * eps);
            let denom = analytic[i].abs().max(numeric.abs());
            if denom < 1e-6 {
                continue; // below finite-difference noise, nothing to compare
            }
            let rel = (analytic[i] - numeric).abs() / denom;
            assert!(rel < 1e-3, "param {i}: analytic {} vs numeric {numeric}", analytic[i]);
            checked += 1;
        }
    }

    #[test]
    fn zero_sdf_weight_leaves_sdf_head_untouched() {
        let cfg = toy_cfg();
        let mut model = GateSdfModel::init(cfg, &mut RngStream::new(110, 0));
        let head_before = model.sdf.layers.clone();
        let dataset: Vec<DatasetRecord> = (0..4).map(|i| toy_record(111 + i, &cfg)).collect();
        let tcfg = TrainConfig {
            lambda_sdf: 0.0,
            epochs: 2,
            batch_size: 2,
            points_per_image: 16,
            val_fraction: 0.25,
            parallel: false,
            ..TrainConfig::default()
        };
        train_stage1(&mut model, &dataset, &tcfg);
        assert_eq!(model.sdf.layers, head_before);
    }

    #[test]
    fn single_record_overfits() {
        let cfg = toy_cfg();
        let mut model = GateSdfModel::init(cfg, &mut RngStream::new(120, 0));
        let dataset = vec![toy_record(121, &cfg)];
        let tcfg = TrainConfig {
            epochs: 400,
            batch_size: 1,
            points_per_image: 64,
            val_fraction: 0.0,
            lr: 3e-3,
            parallel: false,
            ..TrainConfig::default()
        };
        let report = train_stage1(&mut model, &dataset, &tcfg);
        assert!(!report.diverged);
        let first = &report.history[0];
        let last = report.history.last().unwrap();
        let initial = first.train_recon + first.train_sdf;
        let final_loss = last.train_recon + last.train_sdf;
        assert!(
            final_loss < 0.1 * initial,
            "loss only fell from {initial} to {final_loss}"
        );
    }

    #[test]
    fn stage2_freezes_decoders_bitwise() {
        let cfg = toy_cfg();
        let mut model = GateSdfModel::init(cfg, &mut RngStream::new(130, 0));
        let dataset: Vec<DatasetRecord> = (0..4).map(|i| toy_record(131 + i, &cfg)).collect();
        let sdf_before = model.sdf.layers.clone();
        let recon_before = model.recon.clone();
        let encoder_before = model.encoder.clone();
        let tcfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            points_per_image: 16,
            val_fraction: 0.25,
            parallel: false,
            ..TrainConfig::default()
        };
        train_stage2(&mut model, &dataset, &tcfg);
        assert_eq!(model.sdf.layers, sdf_before);
        assert_eq!(model.recon, recon_before);
        assert_ne!(model.encoder, encoder_before, "encoder should actually move");
    }

    #[test]
    fn zero_epochs_changes_nothing() {
        let cfg = toy_cfg();
        let mut model = GateSdfModel::init(cfg, &mut RngStream::new(140, 0));
        let reference = model.clone();
        let dataset = vec![toy_record(141, &cfg), toy_record(142, &cfg)];
        let tcfg = TrainConfig { epochs: 0, parallel: false, ..TrainConfig::default() };
        let report = train_stage2(&mut model, &dataset, &tcfg);
        assert!(report.history.is_empty());
        assert_eq!(model, reference);
    }

    #[test]
    fn training_is_deterministic_for_a_fixed_seed() {
        let cfg = toy_cfg();
        let dataset: Vec<DatasetRecord> = (0..4).map(|i| toy_record(151 + i, &cfg)).collect();
        let tcfg = TrainConfig {
            epochs: 2,
            batch_size: 2,
            points_per_image: 16,
            val_fraction: 0.25,
            parallel: false,
            ..TrainConfig::default()
        };
        let mut a = GateSdfModel::init(cfg, &mut RngStream::new(150, 0));
        let mut b = GateSdfModel::init(cfg, &mut RngStream::new(150, 0));
        let ra = train_stage1(&mut a, &dataset, &tcfg);
        let rb = train_stage1(&mut b, &dataset, &tcfg);
        assert_eq!(a, b);
        assert_eq!(ra.history.len(), rb.history.len());
        for (x, y) in ra.history.iter().zip(&rb.history) {
            assert_eq!(x.train_recon, y.train_recon);
            assert_eq!(x.val_sdf, y.val_sdf);
        }
    }

    #[test]
    fn history_csv_has_header_and_rows() {
        let history = vec![EpochStats { epoch: 1, train_recon: 0.5, train_sdf: 0.4, val_recon: 0.6, val_sdf: 0.5 }];
        let mut buf = Vec::new();
        write_history_csv(&history, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epoch,train_recon,train_sdf,val_recon,val_sdf\n"));
        assert!(text.contains("1,0.5,0.4,0.6,0.5"));
    }
}
