//! The two evaluation tracks. Scoring runs as a parallel map over
//! records; each record's perturbation draws from its own
//! `(seed, record id)` stream, so results are independent of scheduling
//! and identical to what the perturbation CLI materializes on disk.

use std::collections::BTreeMap;

use ndarray::{Array2, Array4};

use super::metrics::{auc, best_threshold};
use super::report::{GroupMetrics, MetricsReport, Track};
use super::EvalError;
use crate::imgproc::{test_perturb, Image, TestPerturbParams};
use crate::manifest::{GeneratorGroup, ImageRecord, Manifest, Source, Split};
use crate::model::DetectorNet;
use crate::nn::softmax_rows;
use crate::rng::record_rng;

/// Anything that can score perturbed test images. The network implements
/// it; tests substitute oracles and coin-flippers.
pub trait DetectorScorer: Sync {
    /// Probability-like synthetic score per image, higher = more likely
    /// synthetic.
    fn detection_scores(&self, images: &[Image], records: &[&ImageRecord]) -> Vec<f64>;
    /// Per-image generator-group probabilities, `(n, n_groups)` with the
    /// group order of [`GeneratorGroup::SYNTHETIC`].
    fn group_probabilities(&self, images: &[Image], records: &[&ImageRecord]) -> Array2<f64>;
    fn config_fingerprint(&self) -> String;
}

/// Detector-network scorer: images are forwarded in inference mode in
/// fixed-size chunks.
pub struct NetScorer<'a> {
    pub net: &'a DetectorNet,
    pub batch_size: usize,
}

impl<'a> NetScorer<'a> {
    pub fn new(net: &'a DetectorNet) -> Self {
        NetScorer { net, batch_size: 16 }
    }

    fn logits(&self, images: &[Image]) -> (Array2<f64>, Array2<f64>) {
        let n = images.len();
        let n_groups = self.net.config.n_groups;
        let mut det = Array2::<f64>::zeros((n, 2));
        let mut gid = Array2::<f64>::zeros((n, n_groups));
        let mut start = 0;
        while start < n {
            let end = (start + self.batch_size).min(n);
            let chunk = &images[start..end];
            let (h, w) = (chunk[0].height() as usize, chunk[0].width() as usize);
            let mut x = Array4::<f64>::zeros((chunk.len(), 3, h, w));
            for (b, img) in chunk.iter().enumerate() {
                debug_assert_eq!((img.height() as usize, img.width() as usize), (h, w));
                let data = img.data();
                for c in 0..3 {
                    for y in 0..h {
                        for xx in 0..w {
                            x[[b, c, y, xx]] = data[(y * w + xx) * 3 + c] as f64 / 255.0;
                        }
                    }
                }
            }
            let (d, g) = self.net.classify_eval(&x).expect("calibrated scorer");
            det.slice_mut(ndarray::s![start..end, ..]).assign(&d);
            gid.slice_mut(ndarray::s![start..end, ..]).assign(&g);
            start = end;
        }
        (det, gid)
    }
}

impl DetectorScorer for NetScorer<'_> {
    fn detection_scores(&self, images: &[Image], _records: &[&ImageRecord]) -> Vec<f64> {
        let (det, _) = self.logits(images);
        softmax_rows(&det).column(1).to_vec()
    }

    fn group_probabilities(&self, images: &[Image], _records: &[&ImageRecord]) -> Array2<f64> {
        let (_, gid) = self.logits(images);
        softmax_rows(&gid)
    }

    fn config_fingerprint(&self) -> String {
        self.net.config.fingerprint()
    }
}

pub(crate) fn perturbation_descriptor(params: &TestPerturbParams) -> String {
    format!(
        "square-crop[{},min]->resize {0}x{0}; compress p={} q=[{},{}] via {} | {}",
        params.out_size,
        params.compress_prob,
        params.quality.0,
        params.quality.1,
        crate::codecs::JPEG,
        crate::codecs::WEBP,
    )
}

/// Load and perturb every record's image, in parallel, deterministically
/// per `(seed, record id)`.
fn load_perturbed(
    records: &[&ImageRecord],
    params: &TestPerturbParams,
    seed: u64,
) -> Result<Vec<Image>, EvalError> {
    let results = crate::parallel::map(records, |r| -> Result<Image, EvalError> {
        let img = Image::load(&r.path)?;
        let mut rng = record_rng(seed, &r.id);
        Ok(test_perturb(&img, params, &mut rng)?)
    });
    results.into_iter().collect()
}

/// Detection track: every generator group's perturbed synthetic examples
/// are scored against the shared pool of perturbed real examples; per
/// group, accuracy at the best threshold plus AUC.
pub fn detection_track<S: DetectorScorer>(
    scorer: &S,
    test: &Manifest,
    params: &TestPerturbParams,
    seed: u64,
) -> Result<MetricsReport, EvalError> {
    let records: Vec<&ImageRecord> = test.split_records(Split::Test).collect();
    let real: Vec<usize> = (0..records.len())
        .filter(|&i| records[i].source == Source::Real)
        .collect();
    if real.is_empty() {
        return Err(EvalError::EmptyGroup("real".into()));
    }
    let mut by_group: BTreeMap<GeneratorGroup, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if r.source == Source::Synthetic {
            by_group.entry(r.generator_group).or_default().push(i);
        }
    }
    if by_group.is_empty() {
        return Err(EvalError::EmptyGroup("synthetic".into()));
    }

    let images = load_perturbed(&records, params, seed)?;
    let scores = scorer.detection_scores(&images, &records);

    let mut groups = BTreeMap::new();
    for (group, synth_idx) in &by_group {
        let mut s = Vec::with_capacity(synth_idx.len() + real.len());
        let mut labels = Vec::with_capacity(synth_idx.len() + real.len());
        for &i in synth_idx {
            s.push(scores[i]);
            labels.push(true);
        }
        for &i in &real {
            s.push(scores[i]);
            labels.push(false);
        }
        let (_, accuracy) = best_threshold(&s, &labels)?;
        let group_auc = auc(&s, &labels)?;
        groups.insert(
            group.display().to_string(),
            GroupMetrics { accuracy, auc: group_auc, count: synth_idx.len() },
        );
    }
    MetricsReport::from_groups(
        Track::Detection,
        groups,
        scorer.config_fingerprint(),
        perturbation_descriptor(params),
        seed,
    )
}

/// Model-identification track: synthetic records only, same perturbation
/// protocol; per-group accuracy from the group logits plus macro
/// one-vs-rest AUC.
pub fn model_id_track<S: DetectorScorer>(
    scorer: &S,
    test: &Manifest,
    params: &TestPerturbParams,
    seed: u64,
) -> Result<MetricsReport, EvalError> {
    let records: Vec<&ImageRecord> = test
        .split_records(Split::Test)
        .filter(|r| r.source == Source::Synthetic)
        .collect();
    if records.is_empty() {
        return Err(EvalError::EmptyGroup("synthetic".into()));
    }
    let images = load_perturbed(&records, params, seed)?;
    let probs = scorer.group_probabilities(&images, &records);

    let class_of = |r: &ImageRecord| -> usize {
        r.generator_group.class_index().expect("synthetic records only")
    };
    let mut groups = BTreeMap::new();
    for (class, group) in GeneratorGroup::SYNTHETIC.iter().enumerate() {
        let member: Vec<usize> =
            (0..records.len()).filter(|&i| class_of(records[i]) == class).collect();
        if member.is_empty() {
            continue;
        }
        let correct = member
            .iter()
            .filter(|&&i| {
                let row = probs.row(i);
                let argmax = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probs"))
                    .map(|(j, _)| j)
                    .expect("non-empty row");
                argmax == class
            })
            .count();
        // One-vs-rest AUC of this group's probability column.
        let scores: Vec<f64> = (0..records.len()).map(|i| probs[[i, class]]).collect();
        let labels: Vec<bool> = (0..records.len()).map(|i| class_of(records[i]) == class).collect();
        let group_auc = if labels.iter().all(|&l| l) { 1.0 } else { auc(&scores, &labels)? };
        groups.insert(
            group.display().to_string(),
            GroupMetrics {
                accuracy: correct as f64 / member.len() as f64,
                auc: group_auc,
                count: member.len(),
            },
        );
    }
    MetricsReport::from_groups(
        Track::ModelId,
        groups,
        scorer.config_fingerprint(),
        perturbation_descriptor(params),
        seed,
    )
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::manifest::ContentType;

    /// Manifest over tiny real PNG files so the loader works.
    pub(crate) fn disk_manifest(per_group: usize, dir: &std::path::Path) -> Manifest {
        let mut records = Vec::new();
        let img = Image::filled(260, 260, [100, 120, 140]);
        let real_path = dir.join("real.png");
        img.save_png(&real_path).unwrap();
        let synth_path = dir.join("synth.png");
        Image::filled(260, 260, [90, 110, 130]).save_png(&synth_path).unwrap();

        for (g, group) in GeneratorGroup::SYNTHETIC.iter().enumerate() {
            for i in 0..per_group {
                records.push(ImageRecord {
                    id: format!("synth-{g}-{i}"),
                    path: synth_path.to_string_lossy().into_owned(),
                    source: Source::Synthetic,
                    content_type: ContentType::Photo,
                    generator_group: *group,
                    generator: format!("gen-{g}"),
                    origin_dataset: "generated".into(),
                    split: Split::Test,
                });
            }
        }
        for i in 0..per_group * 2 {
            records.push(ImageRecord {
                id: format!("real-{i}"),
                path: real_path.to_string_lossy().into_owned(),
                source: Source::Real,
                content_type: ContentType::Photo,
                generator_group: GeneratorGroup::Real,
                generator: "none".into(),
                origin_dataset: "COCO".into(),
                split: Split::Test,
            });
        }
        Manifest::new(records, 0)
    }

    /// Reads ground truth straight off the record.
    pub struct OracleScorer;

    impl DetectorScorer for OracleScorer {
        fn detection_scores(&self, _images: &[Image], records: &[&ImageRecord]) -> Vec<f64> {
            records
                .iter()
                .map(|r| if r.source == Source::Synthetic { 1.0 } else { 0.0 })
                .collect()
        }

        fn group_probabilities(&self, _images: &[Image], records: &[&ImageRecord]) -> Array2<f64> {
            let mut probs = Array2::zeros((records.len(), GeneratorGroup::SYNTHETIC.len()));
            for (i, r) in records.iter().enumerate() {
                if let Some(class) = r.generator_group.class_index() {
                    probs[[i, class]] = 1.0;
                }
            }
            probs
        }

        fn config_fingerprint(&self) -> String {
            "oracle".into()
        }
    }

    /// Seeded uniform-random scorer.
    pub struct CoinFlipScorer {
        pub seed: u64,
        pub n_groups: usize,
    }

    impl DetectorScorer for CoinFlipScorer {
        fn detection_scores(&self, _images: &[Image], records: &[&ImageRecord]) -> Vec<f64> {
            records
                .iter()
                .map(|r| {
                    use rand::Rng;
                    record_rng(self.seed, &r.id).random::<f64>()
                })
                .collect()
        }

        fn group_probabilities(&self, _images: &[Image], records: &[&ImageRecord]) -> Array2<f64> {
            use rand::Rng;
            let mut probs = Array2::zeros((records.len(), self.n_groups));
            for (i, r) in records.iter().enumerate() {
                let mut rng = record_rng(self.seed, &r.id);
                let class = rng.random_range(0..self.n_groups);
                probs[[i, class]] = 1.0;
            }
            probs
        }

        fn config_fingerprint(&self) -> String {
            "coinflip".into()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::{disk_manifest, CoinFlipScorer, OracleScorer};
    use super::*;

    #[test]
    fn oracle_detector_scores_perfectly_on_all_groups() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = disk_manifest(6, dir.path());
        let params = TestPerturbParams::default();
        let report = detection_track(&OracleScorer, &manifest, &params, 3).unwrap();
        assert_eq!(report.groups.len(), 4);
        let names: Vec<&str> = report.groups.keys().map(|s| s.as_str()).collect();
        assert_eq!(names, vec!["DALL·E 3", "GAN", "Midjourney", "SD"]);
        for g in report.groups.values() {
            assert_eq!(g.accuracy, 1.0);
            assert_eq!(g.auc, 1.0);
        }
        assert_eq!(report.mean_accuracy, 1.0);
        assert!(report.consistent());
    }

    #[test]
    fn oracle_identifier_hits_mean_accuracy_one() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = disk_manifest(5, dir.path());
        let params = TestPerturbParams::default();
        let report = model_id_track(&OracleScorer, &manifest, &params, 3).unwrap();
        assert_eq!(report.groups.len(), 4);
        assert_eq!(report.mean_accuracy, 1.0);
        for g in report.groups.values() {
            assert_eq!(g.count, 5);
        }
    }

    #[test]
    fn coin_flip_detector_sits_near_half_auc() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = disk_manifest(60, dir.path());
        let params = TestPerturbParams { compress_prob: 0.0, ..Default::default() };
        let scorer = CoinFlipScorer { seed: 11, n_groups: 4 };
        let report = detection_track(&scorer, &manifest, &params, 3).unwrap();
        for (name, g) in &report.groups {
            assert!((g.auc - 0.5).abs() < 0.1, "{name}: auc {}", g.auc);
        }
    }

    #[test]
    fn reports_are_deterministic_given_seed() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = disk_manifest(4, dir.path());
        let params = TestPerturbParams::default();
        let a = detection_track(&OracleScorer, &manifest, &params, 9).unwrap();
        let b = detection_track(&OracleScorer, &manifest, &params, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_sides_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = disk_manifest(2, dir.path());
        manifest.records.retain(|r| r.source == Source::Real);
        let params = TestPerturbParams::default();
        assert!(matches!(
            detection_track(&OracleScorer, &manifest, &params, 1),
            Err(EvalError::EmptyGroup(_))
        ));
        assert!(matches!(
            model_id_track(&OracleScorer, &manifest, &params, 1),
            Err(EvalError::EmptyGroup(_))
        ));
    }
}
