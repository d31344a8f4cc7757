//! The two training stages.

use std::time::Instant;

use ndarray::Array2;

use super::config::{StageKind, TrainConfig};
use super::data::{balanced_batches, images_to_batch, ImageStore};
use super::log::{LogRecord, TrainLog};
use super::TrainError;
use crate::imgproc::{calibration_augment, pretrain_augment, CalibrationParams, PretrainParams};
use crate::manifest::{ImageRecord, Manifest, Source, Split};
use crate::model::{DetectorCheckpoint, DetectorNet, Mode, ModelError};
use crate::nn::{cross_entropy, AdamW, ParamSet, Sgd};
use crate::rng::epoch_record_rng;
use crate::selfcon::{cached_gradient_step, SelfConError, TrainBatch};

fn labels_of(records: &[&ImageRecord], idx: &[usize]) -> (Vec<bool>, Vec<Option<usize>>) {
    let det = idx.iter().map(|&i| records[i].source == Source::Synthetic).collect();
    let gen = idx
        .iter()
        .map(|&i| records[i].generator_group.class_index())
        .collect();
    (det, gen)
}

fn assemble_pretrain_batch(
    store: &ImageStore,
    records: &[&ImageRecord],
    idx: &[usize],
    params: &PretrainParams,
    seed: u64,
    epoch: u64,
) -> Result<TrainBatch, TrainError> {
    let augmented = crate::parallel::map(idx, |&i| {
        let r = records[i];
        let img = store.get(&r.id).expect("record loaded into store");
        let mut rng = epoch_record_rng(seed, epoch, &r.id);
        pretrain_augment(img, params, &mut rng)
    });
    let mut images = Vec::with_capacity(idx.len());
    for a in augmented {
        images.push(a?);
    }
    let (det_labels, gen_labels) = labels_of(records, idx);
    Ok(TrainBatch { images: images_to_batch(&images), det_labels, gen_labels })
}

/// Stage 1: contrastive pretraining. Every optimization step computes
/// its gradients through the chunked gradient cache; the learning rate
/// follows the warmup/cosine schedule pointwise.
pub fn pretrain(cfg: &TrainConfig, manifest: &Manifest) -> Result<(DetectorCheckpoint, TrainLog), TrainError> {
    cfg.validate()?;
    if cfg.stage != StageKind::Pretrain {
        return Err(TrainError::InvalidConfig(format!(
            "pretrain called with stage {:?}",
            cfg.stage
        )));
    }
    let records: Vec<&ImageRecord> = manifest.split_records(Split::Train).collect();
    if records.is_empty() {
        return Err(TrainError::DataExhausted("train split is empty".into()));
    }

    let (mut net, start_epoch) = match &cfg.resume_from {
        Some(path) => {
            let ckpt = DetectorCheckpoint::load(path)?;
            ckpt.verify_config(&cfg.model)?;
            if ckpt.mode() != Mode::Pretrain {
                return Err(TrainError::Model(ModelError::WrongMode {
                    expected: Mode::Pretrain,
                    got: ckpt.mode(),
                }));
            }
            (ckpt.instantiate()?, ckpt.next_epoch())
        }
        None => (DetectorNet::new_pretrain(&cfg.model)?, 0),
    };

    let store = ImageStore::load(records.iter().copied(), |p| cfg.resolve_path(p))?;
    let mut log = match &cfg.log_out {
        Some(path) => TrainLog::to_file(path)?,
        None => TrainLog::in_memory(),
    };
    log.append(LogRecord::Hyper {
        stage: "pretrain/sgd".into(),
        lr: cfg.base_lr,
        weight_decay: 0.0,
        beta1: cfg.optim.momentum,
        beta2: 0.0,
    })?;

    let aug = PretrainParams::default();
    let loss_cfg = cfg.loss.to_loss_config();
    let chunk = cfg.chunk_size.min(cfg.batch_size);
    let mut sgd = Sgd::new(cfg.base_lr, cfg.optim.momentum);

    let steps_per_epoch = balanced_batches(&records, cfg.batch_size, cfg.seed, 0).len() as u64;
    if steps_per_epoch == 0 {
        return Err(TrainError::DataExhausted("no batches of at least two records".into()));
    }
    let mut global_step = start_epoch * steps_per_epoch;

    // Fresh runs initialize normalization statistics from the first
    // batch; resumed runs carry them in the checkpoint.
    if start_epoch == 0 {
        let first = balanced_batches(&records, cfg.batch_size, cfg.seed, 0);
        let batch = assemble_pretrain_batch(&store, &records, &first[0], &aug, cfg.seed, 0)?;
        net.prime_norm_stats(&batch.images)?;
    }

    let end_epoch = cfg.stop_after_epoch.map_or(cfg.epochs, |s| s.min(cfg.epochs));
    for epoch in start_epoch..end_epoch {
        let epoch_start = Instant::now();
        let batches = balanced_batches(&records, cfg.batch_size, cfg.seed, epoch);
        let mut epoch_loss = 0.0;
        for (bi, batch_idx) in batches.iter().enumerate() {
            let step_start = Instant::now();
            let fraction = epoch as f64 + bi as f64 / batches.len() as f64;
            let lr = cfg.lr_at(fraction)?;
            sgd.lr = lr;

            let batch = assemble_pretrain_batch(&store, &records, batch_idx, &aug, cfg.seed, epoch)?;
            global_step += 1;
            let loss = cached_gradient_step(&mut net, &batch, &loss_cfg, chunk).map_err(|e| {
                match e {
                    SelfConError::NonFiniteLoss => {
                        TrainError::NonFiniteLoss { epoch, step: global_step }
                    }
                    other => other.into(),
                }
            })?;
            sgd.step(net.params_mut());
            epoch_loss += loss.total;

            log.append(LogRecord::Step {
                epoch,
                step: global_step,
                lr,
                loss_total: loss.total,
                loss_det: loss.detection,
                loss_gen: loss.generator,
                gen_skipped: loss.gen_skipped,
                ms: step_start.elapsed().as_secs_f64() * 1e3,
            })?;
        }
        log.append(LogRecord::Epoch {
            epoch,
            steps: batches.len() as u64,
            mean_loss: epoch_loss / batches.len() as f64,
            ms: epoch_start.elapsed().as_secs_f64() * 1e3,
        })?;
    }

    let ckpt = DetectorCheckpoint::from_net(&net, end_epoch, true);
    if !cfg.checkpoint_out.is_empty() {
        ckpt.save(&cfg.checkpoint_out)?;
    }
    Ok((ckpt, log))
}

/// Memory-bounded inference features: forward in fixed-size chunks.
fn features_chunked(net: &DetectorNet, images: &[crate::imgproc::Image]) -> Result<Array2<f64>, TrainError> {
    let mut rows: Vec<Array2<f64>> = Vec::new();
    for chunk in images.chunks(16) {
        let x = images_to_batch(chunk);
        rows.push(net.features_eval(&x)?);
    }
    let dim = rows[0].ncols();
    let mut out = Array2::<f64>::zeros((images.len(), dim));
    let mut offset = 0;
    for block in rows {
        let n = block.nrows();
        out.slice_mut(ndarray::s![offset..offset + n, ..]).assign(&block);
        offset += n;
    }
    Ok(out)
}

/// Stage 2: calibration. The pretrained backbone is frozen, its
/// normalization statistics are refreshed over the augmented calibration
/// stream, and a fresh classifier is trained with cross-entropy on both
/// tracks (model identification masked to synthetic examples).
pub fn calibrate(
    ckpt: &DetectorCheckpoint,
    cfg: &TrainConfig,
    calib: &Manifest,
) -> Result<(DetectorCheckpoint, TrainLog), TrainError> {
    if ckpt.mode() != Mode::Pretrain {
        return Err(TrainError::Model(ModelError::WrongMode {
            expected: Mode::Pretrain,
            got: ckpt.mode(),
        }));
    }
    ckpt.verify_config(&cfg.model)?;

    let report = crate::manifest::validate_manifest(calib);
    let unbalanced: Vec<String> = report
        .violations
        .iter()
        .filter(|v| {
            matches!(
                v,
                crate::manifest::Violation::CalibrationImbalance { .. }
                    | crate::manifest::Violation::CalibrationRealMismatch { .. }
            )
        })
        .map(|v| v.to_string())
        .collect();
    if !unbalanced.is_empty() {
        return Err(TrainError::UnbalancedCalibration(unbalanced.join("; ")));
    }
    let records: Vec<&ImageRecord> = calib.split_records(Split::Calibration).collect();
    if records.is_empty() {
        return Err(TrainError::DataExhausted("calibration split is empty".into()));
    }

    let net = ckpt.instantiate()?;
    let backbone_before = net.backbone_non_norm_checksum();
    let mut net = net.into_calibrated()?;

    let store = ImageStore::load(records.iter().copied(), |p| cfg.resolve_path(p))?;
    let aug = CalibrationParams::default();

    // Normalization refresh over the augmented calibration stream,
    // chunked to bound memory; the stream is rebuilt identically for
    // each layer's pass.
    {
        let chunks: Vec<Vec<usize>> =
            (0..records.len()).collect::<Vec<_>>().chunks(8).map(|c| c.to_vec()).collect();
        let store_ref = &store;
        let records_ref = &records;
        let aug_ref = &aug;
        let seed = cfg.seed;
        net.refresh_norm_stats(|| {
            chunks.clone().into_iter().map(move |chunk| {
                let images: Vec<crate::imgproc::Image> = chunk
                    .iter()
                    .map(|&i| {
                        let r = records_ref[i];
                        let img = store_ref.get(&r.id).expect("loaded");
                        let mut rng = epoch_record_rng(seed, u64::MAX, &r.id);
                        calibration_augment(img, aug_ref, &mut rng).expect("valid policy")
                    })
                    .collect();
                images_to_batch(&images)
            })
        })?;
    }

    let mut log = match &cfg.log_out {
        Some(path) => TrainLog::to_file(path)?,
        None => TrainLog::in_memory(),
    };
    log.append(LogRecord::Hyper {
        stage: "calibrate/adamw".into(),
        lr: cfg.optim.lr,
        weight_decay: cfg.optim.weight_decay,
        beta1: cfg.optim.beta1,
        beta2: cfg.optim.beta2,
    })?;

    let mut opt = AdamW::new(cfg.optim.lr, cfg.optim.beta1, cfg.optim.beta2, cfg.optim.weight_decay);
    let mut global_step = 0u64;
    for epoch in 0..cfg.epochs {
        let epoch_start = Instant::now();
        let batches = balanced_batches(&records, cfg.batch_size, cfg.seed, epoch);
        if batches.is_empty() {
            return Err(TrainError::DataExhausted("no calibration batches".into()));
        }
        let mut epoch_loss = 0.0;
        for batch_idx in &batches {
            let step_start = Instant::now();
            let augmented = crate::parallel::map(batch_idx, |&i| {
                let r = records[i];
                let img = store.get(&r.id).expect("loaded");
                let mut rng = epoch_record_rng(cfg.seed, epoch, &r.id);
                calibration_augment(img, &aug, &mut rng)
            });
            let mut images = Vec::with_capacity(batch_idx.len());
            for a in augmented {
                images.push(a?);
            }
            let feats = features_chunked(&net, &images)?;
            let (det_logits, gid_logits, cache) = net.classifier_forward(&feats)?;

            let det_targets: Vec<Option<usize>> = batch_idx
                .iter()
                .map(|&i| Some((records[i].source == Source::Synthetic) as usize))
                .collect();
            let gid_targets: Vec<Option<usize>> = batch_idx
                .iter()
                .map(|&i| records[i].generator_group.class_index())
                .collect();
            let (det_loss, d_det) = cross_entropy(&det_logits, &det_targets);
            let (gid_loss, d_gid) = cross_entropy(&gid_logits, &gid_targets);
            let total = det_loss + gid_loss;
            global_step += 1;
            if !total.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, step: global_step });
            }
            net.classifier_backward(&cache, &d_det, &d_gid);
            opt.step(net.classifier_params_mut());
            epoch_loss += total;

            log.append(LogRecord::Step {
                epoch,
                step: global_step,
                lr: cfg.optim.lr,
                loss_total: total,
                loss_det: det_loss,
                loss_gen: gid_loss,
                gen_skipped: gid_targets.iter().all(|t| t.is_none()),
                ms: step_start.elapsed().as_secs_f64() * 1e3,
            })?;
        }
        log.append(LogRecord::Epoch {
            epoch,
            steps: batches.len() as u64,
            mean_loss: epoch_loss / batches.len() as f64,
            ms: epoch_start.elapsed().as_secs_f64() * 1e3,
        })?;
    }

    debug_assert_eq!(net.backbone_non_norm_checksum(), backbone_before);
    let out = DetectorCheckpoint::from_net(&net, cfg.epochs, false);
    if !cfg.checkpoint_out.is_empty() {
        out.save(&cfg.checkpoint_out)?;
    }
    Ok((out, log))
}
