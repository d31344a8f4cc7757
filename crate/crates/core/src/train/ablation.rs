//! Leave-one-content-type-out ablation: one supervised detector is
//! trained from scratch per held-out content type on the remaining
//! types, then evaluated per type, exposing content bias as a drop on
//! the held-out type.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;

use super::config::{StageKind, TrainConfig};
use super::data::{balanced_batches, images_to_batch};
use super::log::{LogRecord, TrainLog};
use super::TrainError;
use crate::eval::{auc, best_threshold, GroupMetrics, MetricsReport, Track};
use crate::imgproc::{pretrain_augment, Image, PretrainParams};
use crate::manifest::{ContentType, ImageRecord, Manifest, Source, Split};
use crate::model::DetectorNet;
use crate::nn::{cross_entropy, softmax_rows, ParamSet, Sgd};
use crate::rng::{epoch_record_rng, stream_rng, stream_seed};

pub struct AblationOutcome {
    pub held_out: ContentType,
    pub report: MetricsReport,
    pub log: TrainLog,
}

fn fetch_images(
    records: &[&ImageRecord],
    idx: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<Image>, TrainError> {
    let loaded = crate::parallel::map(idx, |&i| Image::load(cfg.resolve_path(&records[i].path)));
    let mut out = Vec::with_capacity(idx.len());
    for img in loaded {
        out.push(img?);
    }
    Ok(out)
}

fn train_one_model(
    cfg: &TrainConfig,
    records: &[&ImageRecord],
    run_seed: u64,
) -> Result<(DetectorNet, TrainLog), TrainError> {
    let mut model_cfg = cfg.model.clone();
    model_cfg.seed = run_seed;
    let mut net = DetectorNet::new_calibrated(&model_cfg)?;
    let mut sgd = Sgd::new(cfg.base_lr, cfg.optim.momentum);
    let aug = PretrainParams::default();
    let mut log = TrainLog::in_memory();
    let mut global_step = 0u64;
    let mut primed = false;

    for epoch in 0..cfg.epochs {
        let epoch_start = Instant::now();
        let batches = balanced_batches(records, cfg.batch_size, run_seed, epoch);
        if batches.is_empty() {
            return Err(TrainError::DataExhausted("no ablation batches".into()));
        }
        let mut epoch_loss = 0.0;
        for (bi, batch_idx) in batches.iter().enumerate() {
            let fraction = epoch as f64 + bi as f64 / batches.len() as f64;
            sgd.lr = cfg.lr_at(fraction)?;

            let raw = fetch_images(records, batch_idx, cfg)?;
            let augmented = crate::parallel::map_indexed(&raw, |k, img| {
                let mut rng = epoch_record_rng(run_seed, epoch, &records[batch_idx[k]].id);
                pretrain_augment(img, &aug, &mut rng)
            });
            let mut images = Vec::with_capacity(raw.len());
            for a in augmented {
                images.push(a?);
            }
            let x = images_to_batch(&images);
            if !primed {
                net.prime_norm_stats(&x)?;
                primed = true;
            }
            let det_targets: Vec<Option<usize>> = batch_idx
                .iter()
                .map(|&i| Some((records[i].source == Source::Synthetic) as usize))
                .collect();
            let gid_targets: Vec<Option<usize>> = vec![None; batch_idx.len()];

            net.begin_stat_capture();
            let (det_logits, gid_logits, cache) = net.classify_train(&x)?;
            net.commit_stat_momentum();
            let (loss, d_det) = cross_entropy(&det_logits, &det_targets);
            let (_, d_gid) = cross_entropy(&gid_logits, &gid_targets);
            global_step += 1;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, step: global_step });
            }
            net.zero_grads();
            net.classify_train_backward(&cache, &d_det, &d_gid);
            sgd.step(net.params_mut());
            epoch_loss += loss;
        }
        log.append(LogRecord::Epoch {
            epoch,
            steps: batches.len() as u64,
            mean_loss: epoch_loss / batches.len() as f64,
            ms: epoch_start.elapsed().as_secs_f64() * 1e3,
        })?;
    }
    Ok((net, log))
}

fn detection_scores_clean(
    net: &DetectorNet,
    records: &[&ImageRecord],
    cfg: &TrainConfig,
) -> Result<Vec<f64>, TrainError> {
    let mut scores = Vec::with_capacity(records.len());
    for chunk in records.chunks(8) {
        let idx: Vec<usize> = (0..chunk.len()).collect();
        let images = fetch_images(chunk, &idx, cfg)?;
        let x = images_to_batch(&images);
        let (det, _) = net.classify_eval(&x)?;
        scores.extend(softmax_rows(&det).column(1).iter().cloned());
    }
    Ok(scores)
}

/// Run the ablation over the given content types. Training data comes
/// from the manifest's train split (held-out type removed), evaluation
/// from its test split, clean (unperturbed), capped per type by
/// `cfg.ablation.eval_per_type` records per source.
pub fn loocv_ablation(
    cfg: &TrainConfig,
    manifest: &Manifest,
    content_types: &[ContentType],
) -> Result<Vec<AblationOutcome>, TrainError> {
    cfg.validate()?;
    if cfg.stage != StageKind::Ablation {
        return Err(TrainError::InvalidConfig(format!(
            "ablation called with stage {:?}",
            cfg.stage
        )));
    }
    if content_types.len() < 2 {
        return Err(TrainError::InsufficientData(
            "need at least two content types".into(),
        ));
    }

    let train: Vec<&ImageRecord> = manifest.split_records(Split::Train).collect();
    let test: Vec<&ImageRecord> = manifest.split_records(Split::Test).collect();
    for &ct in content_types {
        let real = train
            .iter()
            .filter(|r| r.content_type == ct && r.source == Source::Real)
            .count();
        let synth = train
            .iter()
            .filter(|r| r.content_type == ct && r.source == Source::Synthetic)
            .count();
        if real == 0 || real != synth {
            return Err(TrainError::InsufficientData(format!(
                "content type {} has {real} real vs {synth} synthetic train records",
                ct.slug()
            )));
        }
    }

    // Deterministic per-type evaluation samples.
    let mut eval_sets: BTreeMap<ContentType, Vec<&ImageRecord>> = BTreeMap::new();
    for &ct in content_types {
        let mut pool: Vec<&ImageRecord> =
            test.iter().filter(|r| r.content_type == ct).copied().collect();
        if pool.is_empty() {
            return Err(TrainError::InsufficientData(format!(
                "content type {} has no test records",
                ct.slug()
            )));
        }
        pool.sort_by(|a, b| a.id.cmp(&b.id));
        pool.shuffle(&mut stream_rng(cfg.seed, &format!("ablation-eval/{}", ct.slug())));
        let mut take = Vec::new();
        let mut real_taken = 0;
        let mut synth_taken = 0;
        for r in pool {
            match r.source {
                Source::Real if real_taken < cfg.ablation.eval_per_type => {
                    take.push(r);
                    real_taken += 1;
                }
                Source::Synthetic if synth_taken < cfg.ablation.eval_per_type => {
                    take.push(r);
                    synth_taken += 1;
                }
                _ => {}
            }
        }
        eval_sets.insert(ct, take);
    }

    let mut outcomes = Vec::new();
    for &held_out in content_types {
        let kept: Vec<&ImageRecord> = train
            .iter()
            .filter(|r| r.content_type != held_out)
            .copied()
            .collect();
        debug_assert!(kept.iter().all(|r| r.content_type != held_out));
        let run_seed = stream_seed(cfg.seed, &format!("ablation/{}", held_out.slug()));
        let (net, log) = train_one_model(cfg, &kept, run_seed)?;

        let mut groups = BTreeMap::new();
        for (&ct, records) in &eval_sets {
            let scores = detection_scores_clean(&net, records, cfg)?;
            let labels: Vec<bool> =
                records.iter().map(|r| r.source == Source::Synthetic).collect();
            let type_auc = auc(&scores, &labels)?;
            let (_, accuracy) = best_threshold(&scores, &labels)?;
            groups.insert(
                ct.slug().to_string(),
                GroupMetrics { accuracy, auc: type_auc, count: records.len() },
            );
        }
        let report = MetricsReport::from_groups(
            Track::Ablation,
            groups,
            net.config.fingerprint(),
            format!("clean; held out: {}", held_out.slug()),
            cfg.seed,
        )?;
        outcomes.push(AblationOutcome { held_out, report, log });
    }
    Ok(outcomes)
}
