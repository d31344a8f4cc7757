//! Robustness sweeps: score the test set under a grid of JPEG qualities
//! or crop-resize fractions and emit one accuracy point per grid value.

use serde::Serialize;

use super::metrics::best_threshold;
use super::tracks::DetectorScorer;
use super::EvalError;
use crate::imgproc::{center_crop, resize_bilinear, sweep_jpeg, sweep_resize, Image};
use crate::manifest::{ImageRecord, Manifest, Source, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Jpeg,
    Resize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub accuracy: f64,
    pub count: usize,
}

/// Standardize an image for the JPEG sweep: center crop to the smaller
/// dimension, resize to 256.
fn standardize(img: &Image) -> Result<Image, EvalError> {
    let cropped = center_crop(img, img.min_dim())?;
    Ok(resize_bilinear(&cropped, 256, 256))
}

/// For each grid value, apply the transform to every test record and
/// score detection balanced accuracy at the best threshold. Records are
/// processed as a parallel map; grid points are sequential.
pub fn robustness_sweep<S: DetectorScorer>(
    scorer: &S,
    test: &Manifest,
    kind: SweepKind,
    grid: &[f64],
) -> Result<Vec<SweepPoint>, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGroup("sweep grid".into()));
    }
    let records: Vec<&ImageRecord> = test.split_records(Split::Test).collect();
    if records.is_empty() {
        return Err(EvalError::EmptyGroup("test split".into()));
    }
    let originals: Vec<Image> = {
        let loaded = crate::parallel::map(&records, |r| Image::load(&r.path));
        loaded.into_iter().collect::<Result<Vec<_>, _>>()?
    };

    let mut curve = Vec::with_capacity(grid.len());
    for &value in grid {
        let transformed: Vec<Image> = {
            let out = crate::parallel::map(&originals, |img| match kind {
                SweepKind::Jpeg => {
                    let std = standardize(img)?;
                    Ok::<Image, EvalError>(sweep_jpeg(&std, value as u8)?)
                }
                SweepKind::Resize => Ok(sweep_resize(img, value)?),
            });
            out.into_iter().collect::<Result<Vec<_>, _>>()?
        };
        let scores = scorer.detection_scores(&transformed, &records);
        let labels: Vec<bool> = records.iter().map(|r| r.source == Source::Synthetic).collect();
        let (_, accuracy) = best_threshold(&scores, &labels)?;
        curve.push(SweepPoint { value, accuracy, count: records.len() });
    }
    Ok(curve)
}

/// Raw curve data, one line per grid point.
pub fn curve_to_text(curve: &[SweepPoint]) -> String {
    let mut out = String::from("value\taccuracy\tcount\n");
    for p in curve {
        out.push_str(&format!("{}\t{}\t{}\n", p.value, p.accuracy, p.count));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::tracks::test_support::{disk_manifest, OracleScorer};
    use super::*;

    #[test]
    fn oracle_detector_gives_flat_unit_curve() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = disk_manifest(3, dir.path());
        let grid = [95.0, 75.0, 55.0, 40.0];
        let curve = robustness_sweep(&OracleScorer, &manifest, SweepKind::Jpeg, &grid).unwrap();
        assert_eq!(curve.len(), grid.len());
        for (p, &v) in curve.iter().zip(&grid) {
            assert_eq!(p.value, v);
            assert_eq!(p.accuracy, 1.0);
            assert_eq!(p.count, manifest.len());
        }
    }

    #[test]
    fn resize_sweep_covers_grid_and_counts() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = disk_manifest(2, dir.path());
        let grid = [0.5, 0.75, 1.0];
        let curve = robustness_sweep(&OracleScorer, &manifest, SweepKind::Resize, &grid).unwrap();
        assert_eq!(curve.len(), 3);
        assert!(curve.iter().all(|p| p.count == manifest.len()));
        let text = curve_to_text(&curve);
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn empty_grid_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = disk_manifest(2, dir.path());
        assert!(robustness_sweep(&OracleScorer, &manifest, SweepKind::Jpeg, &[]).is_err());
    }
}
