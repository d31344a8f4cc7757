//! Manifest invariant checking. Violations are data, not errors: the
//! report lists every broken invariant with the cell or record that
//! broke it, and an empty violation list means the manifest is valid.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::structure::{content_reference_count, reference_structure};
use super::{ContentType, ImageRecord, Manifest, Source, Split};

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateId { id: String },
    /// source=real ⇔ generator_group=real ⇔ generator="none" broken.
    InconsistentLabels { id: String },
    /// Record's provider does not appear in the reference structure.
    UnknownProvider { id: String, provider: String },
    /// A content type's share of the base records is off its
    /// renormalized reference share.
    ContentProportion { content: ContentType, actual: u64, expected: u64 },
    /// Real and synthetic counts differ within a content type.
    SourceImbalance { content: ContentType, real: u64, synthetic: u64 },
    /// Providers within one (content, source) half are off their
    /// reference proportions.
    ProviderProportion { content: ContentType, provider: String, actual: u64, expected: u64 },
    /// A (content × provider) cell's train share strays more than one
    /// record from the global train share.
    SplitStratification { content: ContentType, provider: String, train: u64, total: u64 },
    /// Calibration cells are not all the same size.
    CalibrationImbalance { cell: String, count: u64, reference: u64 },
    /// Calibration real total differs from its synthetic total.
    CalibrationRealMismatch { real: u64, synthetic: u64 },
    /// Calibration record id missing from the train split.
    CalibrationNotInTrain { id: String },
    /// Calibration record disagrees with its train twin on a field.
    CalibrationFieldMismatch { id: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId { id } => write!(f, "duplicate id {id}"),
            Violation::InconsistentLabels { id } => {
                write!(f, "record {id}: source/generator_group/generator disagree")
            }
            Violation::UnknownProvider { id, provider } => {
                write!(f, "record {id}: provider {provider:?} not in reference structure")
            }
            Violation::ContentProportion { content, actual, expected } => write!(
                f,
                "content {}: {actual} records, expected {expected}",
                content.slug()
            ),
            Violation::SourceImbalance { content, real, synthetic } => write!(
                f,
                "content {}: {real} real vs {synthetic} synthetic",
                content.slug()
            ),
            Violation::ProviderProportion { content, provider, actual, expected } => write!(
                f,
                "cell {}/{provider}: {actual} records, expected {expected}",
                content.slug()
            ),
            Violation::SplitStratification { content, provider, train, total } => write!(
                f,
                "cell {}/{provider}: train share {train}/{total} off the global ratio",
                content.slug()
            ),
            Violation::CalibrationImbalance { cell, count, reference } => write!(
                f,
                "calibration cell {cell}: {count} records, other cells have {reference}"
            ),
            Violation::CalibrationRealMismatch { real, synthetic } => {
                write!(f, "calibration: {real} real vs {synthetic} synthetic")
            }
            Violation::CalibrationNotInTrain { id } => {
                write!(f, "calibration id {id} not present in train split")
            }
            Violation::CalibrationFieldMismatch { id } => {
                write!(f, "calibration id {id} disagrees with its train record")
            }
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Non-fatal notes, e.g. floor rounding on inexact split fractions.
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_clean() && self.warnings.is_empty() {
            return writeln!(f, "ok");
        }
        for v in &self.violations {
            writeln!(f, "violation: {v}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

fn check_record_consistency(r: &ImageRecord, report: &mut ValidationReport) {
    let real_marks = [
        r.source == Source::Real,
        r.generator_group == super::GeneratorGroup::Real,
        r.generator == "none",
    ];
    if real_marks.iter().any(|&m| m != real_marks[0]) {
        report.violations.push(Violation::InconsistentLabels { id: r.id.clone() });
    }
}

/// Check every manifest invariant. Base records are the train/test
/// population; calibration records are treated as re-tagged copies of
/// train records and checked for balance and subset membership.
pub fn validate_manifest(m: &Manifest) -> ValidationReport {
    let mut report = ValidationReport::default();

    let base: Vec<&ImageRecord> = m
        .records
        .iter()
        .filter(|r| r.split != Split::Calibration)
        .collect();
    let calib: Vec<&ImageRecord> = m
        .records
        .iter()
        .filter(|r| r.split == Split::Calibration)
        .collect();

    // Id uniqueness inside the base population and inside calibration.
    for group in [&base, &calib] {
        let mut seen = BTreeSet::new();
        for r in group {
            if !seen.insert(r.id.as_str()) {
                report.violations.push(Violation::DuplicateId { id: r.id.clone() });
            }
        }
    }

    for r in &m.records {
        check_record_consistency(r, &mut report);
    }

    // Provider recognition against the reference structure.
    let known: BTreeSet<(ContentType, Source, &str)> = reference_structure()
        .iter()
        .map(|c| (c.content, c.source, c.display))
        .collect();
    for r in &base {
        if !known.contains(&(r.content_type, r.source, r.provider())) {
            report.violations.push(Violation::UnknownProvider {
                id: r.id.clone(),
                provider: r.provider().to_string(),
            });
        }
    }

    let total = base.len() as u64;
    if total > 0 {
        let present: BTreeSet<ContentType> = base.iter().map(|r| r.content_type).collect();
        let denom: u64 = present.iter().map(|&c| content_reference_count(c)).sum();

        // Content-type proportions, renormalized over present types.
        for &content in &present {
            let actual = base.iter().filter(|r| r.content_type == content).count() as u64;
            let num = total * content_reference_count(content);
            let expected = num / denom;
            if actual * denom != num {
                report.violations.push(Violation::ContentProportion { content, actual, expected });
            }
        }

        // Real/synthetic parity per content type.
        for &content in &present {
            let real = base
                .iter()
                .filter(|r| r.content_type == content && r.source == Source::Real)
                .count() as u64;
            let synthetic = base
                .iter()
                .filter(|r| r.content_type == content && r.source == Source::Synthetic)
                .count() as u64;
            if real != synthetic {
                report.violations.push(Violation::SourceImbalance { content, real, synthetic });
            }
        }

        // Provider proportions within each (content, source) half.
        for &content in &present {
            for source in [Source::Real, Source::Synthetic] {
                let rows: Vec<_> = reference_structure()
                    .iter()
                    .filter(|c| c.content == content && c.source == source)
                    .collect();
                let ref_total: u64 = rows.iter().map(|c| c.reference_count).sum();
                let half: Vec<&&ImageRecord> = base
                    .iter()
                    .filter(|r| r.content_type == content && r.source == source)
                    .collect();
                let half_total = half.len() as u64;
                for row in rows {
                    let actual =
                        half.iter().filter(|r| r.provider() == row.display).count() as u64;
                    let num = half_total * row.reference_count;
                    if actual * ref_total != num {
                        report.violations.push(Violation::ProviderProportion {
                            content,
                            provider: row.display.to_string(),
                            actual,
                            expected: num / ref_total,
                        });
                    }
                }
            }
        }

        // Split stratification, checked only once both splits exist.
        let train_total = base.iter().filter(|r| r.split == Split::Train).count() as u64;
        if train_total > 0 && train_total < total {
            let mut cells: BTreeMap<(ContentType, &str), (u64, u64)> = BTreeMap::new();
            for r in &base {
                let e = cells.entry((r.content_type, r.provider())).or_insert((0, 0));
                e.1 += 1;
                if r.split == Split::Train {
                    e.0 += 1;
                }
            }
            for ((content, provider), (train, cell_total)) in cells {
                let lhs = train as i128 * total as i128;
                let rhs = cell_total as i128 * train_total as i128;
                let diff = (lhs - rhs).unsigned_abs();
                if diff >= total as u128 {
                    report.violations.push(Violation::SplitStratification {
                        content,
                        provider: provider.to_string(),
                        train,
                        total: cell_total,
                    });
                } else if diff > 0 {
                    report.warnings.push(format!(
                        "cell {}/{provider}: train share {train}/{cell_total} floored against \
                         the global ratio {train_total}/{total}",
                        content.slug()
                    ));
                }
            }
        }
    }

    // Calibration balance and subset membership.
    if !calib.is_empty() {
        let mut cells: BTreeMap<(ContentType, &str), u64> = BTreeMap::new();
        let mut real = 0u64;
        for r in &calib {
            match r.source {
                Source::Real => real += 1,
                Source::Synthetic => {
                    *cells.entry((r.content_type, r.generator.as_str())).or_default() += 1
                }
            }
        }
        let synthetic: u64 = cells.values().sum();
        if real != synthetic {
            report
                .violations
                .push(Violation::CalibrationRealMismatch { real, synthetic });
        }
        if let Some(&reference) = cells.values().next() {
            for ((content, generator), &count) in &cells {
                if count != reference {
                    report.violations.push(Violation::CalibrationImbalance {
                        cell: format!("{}-{generator}", content.slug()),
                        count,
                        reference,
                    });
                }
            }
        }

        let train_by_id: BTreeMap<&str, &ImageRecord> = base
            .iter()
            .filter(|r| r.split == Split::Train)
            .map(|r| (r.id.as_str(), *r))
            .collect();
        if !train_by_id.is_empty() {
            for r in &calib {
                match train_by_id.get(r.id.as_str()) {
                    None => report
                        .violations
                        .push(Violation::CalibrationNotInTrain { id: r.id.clone() }),
                    Some(t) => {
                        let same = t.path == r.path
                            && t.source == r.source
                            && t.content_type == r.content_type
                            && t.generator_group == r.generator_group
                            && t.generator == r.generator
                            && t.origin_dataset == r.origin_dataset;
                        if !same {
                            report
                                .violations
                                .push(Violation::CalibrationFieldMismatch { id: r.id.clone() });
                        }
                    }
                }
            }
        }
    }

    report
}
