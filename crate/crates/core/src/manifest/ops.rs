//! Manifest construction: quota-exact balanced builds, stratified
//! train/test splitting, and balanced calibration sampling. All three
//! are pure functions of their inputs and seed.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use super::structure::{reference_structure, StructureCell};
use super::{ContentType, ImageRecord, Manifest, ManifestError, Source, Split};
use crate::rng::stream_rng;

/// Key of one source listing: which structure cell the files belong to.
/// `provider` is the cell slug (origin dataset for real files, generator
/// for synthetic ones).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ListingKey {
    pub content: ContentType,
    pub source: Source,
    pub provider: String,
}

impl ListingKey {
    pub fn new(content: ContentType, source: Source, provider: impl Into<String>) -> Self {
        ListingKey {
            content,
            source,
            provider: provider.into(),
        }
    }

    fn slug(&self) -> String {
        format!(
            "{}-{}-{}",
            self.content.slug(),
            match self.source {
                Source::Real => "real",
                Source::Synthetic => "synthetic",
            },
            self.provider
        )
    }
}

pub type SourceListings = BTreeMap<ListingKey, Vec<String>>;

fn cell_for_key<'a>(key: &ListingKey) -> Option<&'a StructureCell> {
    reference_structure().iter().find(|c| {
        c.content == key.content && c.source == key.source && c.provider == key.provider
    })
}

/// Build a balanced manifest by sampling each structure cell's quota
/// from its listing, uniformly without replacement.
///
/// The reference structure is restricted to the content types present in
/// `listings` and quotas are renormalized over those types; every quota
/// must come out exactly integral. Sampling inside each cell draws from
/// its own seeded stream, so changing one listing never disturbs the
/// records drawn for another. All records start in the train split.
pub fn build_manifest(
    listings: &SourceListings,
    target_total: u64,
    seed: u64,
) -> Result<Manifest, ManifestError> {
    if listings.is_empty() {
        if target_total == 0 {
            return Ok(Manifest::new(Vec::new(), seed));
        }
        return Err(ManifestError::QuotaIndivisible {
            what: format!("target total {target_total} with no listings"),
        });
    }

    let present: BTreeSet<ContentType> = listings.keys().map(|k| k.content).collect();
    let cells: Vec<&StructureCell> = reference_structure()
        .iter()
        .filter(|c| present.contains(&c.content))
        .collect();

    for key in listings.keys() {
        if cell_for_key(key).is_none() {
            return Err(ManifestError::UnknownListing { key: key.slug() });
        }
    }

    let denom: u64 = cells.iter().map(|c| c.reference_count).sum();
    let mut records = Vec::new();
    for cell in &cells {
        let key = ListingKey::new(cell.content, cell.source, cell.provider);
        let listing = listings
            .get(&key)
            .ok_or_else(|| ManifestError::MissingListing { cell: cell.slug() })?;

        let numerator = target_total * cell.reference_count;
        if numerator % denom != 0 {
            return Err(ManifestError::NonIntegerQuota {
                cell: cell.slug(),
                total: target_total,
            });
        }
        let quota = numerator / denom;

        let mut paths: Vec<&String> = listing.iter().collect();
        paths.sort();
        paths.dedup();
        if (paths.len() as u64) < quota.max(1) {
            return Err(ManifestError::InsufficientSource {
                cell: cell.slug(),
                need: quota.max(1),
                have: paths.len() as u64,
            });
        }

        let mut rng = stream_rng(seed, &format!("build/{}", cell.slug()));
        paths.shuffle(&mut rng);
        let mut chosen: Vec<&String> = paths.into_iter().take(quota as usize).collect();
        chosen.sort();

        for (i, path) in chosen.into_iter().enumerate() {
            let (generator, origin) = match cell.source {
                Source::Real => ("none".to_string(), cell.display.to_string()),
                Source::Synthetic => (cell.display.to_string(), cell.origin.to_string()),
            };
            records.push(ImageRecord {
                id: format!("{}-{:06}", cell.slug(), i),
                path: path.clone(),
                source: cell.source,
                content_type: cell.content,
                generator_group: cell.group,
                generator,
                origin_dataset: origin,
                split: Split::Train,
            });
        }
    }

    Ok(Manifest::new(records, seed))
}

/// Assign every record to train or test, stratified per
/// (content type × provider) cell: each cell contributes
/// `floor(cell_size × train_fraction)` records to train and the
/// remainder to test. Any calibration tags in the input are discarded
/// before reassignment.
pub fn split_manifest(
    m: &Manifest,
    train_fraction: f64,
    seed: u64,
) -> Result<Manifest, ManifestError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(ManifestError::InvalidFraction {
            fraction: train_fraction,
        });
    }

    let mut out = m.clone();
    out.seed = seed;
    out.records.retain(|r| r.split != Split::Calibration);

    let mut cells: BTreeMap<(ContentType, String), Vec<usize>> = BTreeMap::new();
    for (i, r) in out.records.iter().enumerate() {
        cells
            .entry((r.content_type, r.provider().to_string()))
            .or_default()
            .push(i);
    }

    for ((content, provider), mut indices) in cells {
        let mut rng = stream_rng(seed, &format!("split/{}/{provider}", content.slug()));
        indices.shuffle(&mut rng);
        // The epsilon absorbs representation error in fractions like 0.7
        // so that an exactly-integral product never floors down a unit.
        let train_n = ((indices.len() as f64) * train_fraction + 1e-9).floor() as usize;
        for (k, &idx) in indices.iter().enumerate() {
            out.records[idx].split = if k < train_n { Split::Train } else { Split::Test };
        }
    }

    Ok(out)
}

/// Sample a balanced calibration set from the train split: an equal
/// record count for every (content type × generator) synthetic cell and
/// an equal total of real counterparts, all re-tagged `calibration`.
/// The result is a standalone manifest whose ids are a subset of the
/// source's train ids.
pub fn sample_calibration(
    train: &Manifest,
    total: u64,
    seed: u64,
) -> Result<Manifest, ManifestError> {
    if total == 0 {
        return Ok(Manifest::new(Vec::new(), seed));
    }
    if total % 2 != 0 {
        return Err(ManifestError::QuotaIndivisible {
            what: format!("calibration total {total} (must be even)"),
        });
    }
    let half = total / 2;

    let mut synth_cells: BTreeMap<(ContentType, String), Vec<&ImageRecord>> = BTreeMap::new();
    let mut real_pool: Vec<&ImageRecord> = Vec::new();
    for r in train.split_records(Split::Train) {
        match r.source {
            Source::Synthetic => synth_cells
                .entry((r.content_type, r.generator.clone()))
                .or_default()
                .push(r),
            Source::Real => real_pool.push(r),
        }
    }

    if synth_cells.is_empty() {
        return Err(ManifestError::InsufficientSource {
            cell: "synthetic".into(),
            need: half,
            have: 0,
        });
    }
    let cells = synth_cells.len() as u64;
    if half % cells != 0 {
        return Err(ManifestError::QuotaIndivisible {
            what: format!("{half} synthetic calibration records over {cells} generator cells"),
        });
    }
    let per_cell = half / cells;

    let mut picked: Vec<ImageRecord> = Vec::new();
    for ((content, generator), mut pool) in synth_cells {
        if (pool.len() as u64) < per_cell {
            return Err(ManifestError::InsufficientSource {
                cell: format!("{}-{generator}", content.slug()),
                need: per_cell,
                have: pool.len() as u64,
            });
        }
        let mut rng = stream_rng(seed, &format!("calib/{}/{generator}", content.slug()));
        pool.shuffle(&mut rng);
        let mut chosen: Vec<&ImageRecord> = pool.into_iter().take(per_cell as usize).collect();
        chosen.sort_by(|a, b| a.id.cmp(&b.id));
        picked.extend(chosen.into_iter().cloned());
    }

    if (real_pool.len() as u64) < half {
        return Err(ManifestError::InsufficientSource {
            cell: "real".into(),
            need: half,
            have: real_pool.len() as u64,
        });
    }
    let mut rng = stream_rng(seed, "calib/real");
    real_pool.shuffle(&mut rng);
    let mut chosen_real: Vec<&ImageRecord> = real_pool.into_iter().take(half as usize).collect();
    chosen_real.sort_by(|a, b| a.id.cmp(&b.id));
    picked.extend(chosen_real.into_iter().cloned());

    for r in &mut picked {
        r.split = Split::Calibration;
    }
    Ok(Manifest::new(picked, seed))
}

/// Scan a source directory laid out as
/// `<root>/<content>/<real|synthetic>/<provider>/<files>` into listings.
/// Unknown directory names are rejected so typos cannot silently drop a
/// cell. File order inside a listing is sorted, hence irrelevant.
pub fn scan_source_tree(root: &std::path::Path) -> Result<SourceListings, ManifestError> {
    let mut listings = SourceListings::new();
    for content_entry in std::fs::read_dir(root)? {
        let content_dir = content_entry?.path();
        if !content_dir.is_dir() {
            continue;
        }
        let content_name = content_dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let content = ContentType::from_slug(&content_name).ok_or_else(|| {
            ManifestError::UnknownListing { key: content_name.clone() }
        })?;
        for source_entry in std::fs::read_dir(&content_dir)? {
            let source_dir = source_entry?.path();
            if !source_dir.is_dir() {
                continue;
            }
            let source = match source_dir.file_name().unwrap_or_default().to_str() {
                Some("real") => Source::Real,
                Some("synthetic") => Source::Synthetic,
                other => {
                    return Err(ManifestError::UnknownListing {
                        key: format!("{content_name}/{}", other.unwrap_or("?")),
                    })
                }
            };
            for provider_entry in std::fs::read_dir(&source_dir)? {
                let provider_dir = provider_entry?.path();
                if !provider_dir.is_dir() {
                    continue;
                }
                let provider =
                    provider_dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
                let mut files = Vec::new();
                for file in std::fs::read_dir(&provider_dir)? {
                    let path = file?.path();
                    if path.is_file() {
                        files.push(path.to_string_lossy().into_owned());
                    }
                }
                files.sort();
                listings.insert(ListingKey::new(content, source, provider), files);
            }
        }
    }
    Ok(listings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::validate_manifest;

    pub(crate) fn stub_listings(contents: &[ContentType], per_cell: usize) -> SourceListings {
        let mut listings = SourceListings::new();
        for cell in reference_structure() {
            if !contents.contains(&cell.content) {
                continue;
            }
            let key = ListingKey::new(cell.content, cell.source, cell.provider);
            let files = (0..per_cell)
                .map(|i| format!("stub/{}/{:07}.png", cell.slug(), i))
                .collect();
            listings.insert(key, files);
        }
        listings
    }

    #[test]
    fn empty_build_is_vacuously_valid() {
        let m = build_manifest(&SourceListings::new(), 0, 1).unwrap();
        assert!(m.is_empty());
        assert!(validate_manifest(&m).is_clean());
    }

    #[test]
    fn full_structure_quotas_at_reference_total() {
        let listings = stub_listings(&ContentType::ALL, 26_000);
        let m = build_manifest(&listings, 200_000, 3).unwrap();
        assert_eq!(m.len(), 200_000);
        let photos_real_coco = m
            .records
            .iter()
            .filter(|r| r.origin_dataset == "COCO")
            .count();
        assert_eq!(photos_real_coco, 15_000);
        let imagenet = m
            .records
            .iter()
            .filter(|r| r.origin_dataset == "ImageNet")
            .count();
        assert_eq!(imagenet, 7_500);
        let lsun = m.records.iter().filter(|r| r.origin_dataset == "LSUN").count();
        assert_eq!(lsun, 7_500);
    }

    /// Independent spreadsheet-style quota oracle: renormalize reference
    /// cell counts over the present content types by plain arithmetic.
    #[test]
    fn three_content_type_quotas_match_proportion_oracle() {
        let contents = [ContentType::Photo, ContentType::Painting, ContentType::Face];
        let listings = stub_listings(&contents, 400);
        let m = build_manifest(&listings, 800, 9).unwrap();
        assert_eq!(m.len(), 800);

        let denom: u64 = reference_structure()
            .iter()
            .filter(|c| contents.contains(&c.content))
            .map(|c| c.reference_count)
            .sum();
        assert_eq!(denom, 150_000);
        for cell in reference_structure() {
            if !contents.contains(&cell.content) {
                continue;
            }
            let expected = 800 * cell.reference_count / denom;
            assert_eq!(800 * cell.reference_count % denom, 0);
            let actual = m
                .records
                .iter()
                .filter(|r| {
                    r.content_type == cell.content
                        && r.source == cell.source
                        && r.provider() == cell.display
                })
                .count() as u64;
            assert_eq!(actual, expected, "cell {}", cell.slug());
        }
    }

    #[test]
    fn non_integer_quota_detected() {
        // 800 across all four content types puts 22.5 records in the
        // painting SD cell.
        let listings = stub_listings(&ContentType::ALL, 400);
        let err = build_manifest(&listings, 800, 1).unwrap_err();
        assert!(matches!(err, ManifestError::NonIntegerQuota { .. }), "{err}");
    }

    #[test]
    fn insufficient_source_detected() {
        let listings = stub_listings(&ContentType::ALL, 100);
        let err = build_manifest(&listings, 8_000, 1).unwrap_err();
        assert!(matches!(err, ManifestError::InsufficientSource { .. }), "{err}");
    }

    #[test]
    fn split_exact_and_floor_rules() {
        // Exact division: 10-record cell at 0.8 -> 8 train / 2 test.
        let listings = stub_listings(&ContentType::ALL, 450);
        let m = build_manifest(&listings, 3_200, 5).unwrap();
        let s = split_manifest(&m, 0.8, 6).unwrap();
        let train = s.split_records(Split::Train).count();
        let test = s.split_records(Split::Test).count();
        assert_eq!((train, test), (2_560, 640));

        // Floor rule on a 7-record cell: floor(7*0.8)=5 train, 2 test.
        let recs: Vec<ImageRecord> = (0..7)
            .map(|i| ImageRecord {
                id: format!("r{i}"),
                path: format!("p{i}"),
                source: Source::Real,
                content_type: ContentType::Photo,
                generator_group: GeneratorGroup::Real,
                generator: "none".into(),
                origin_dataset: "COCO".into(),
                split: Split::Train,
            })
            .collect();
        let m = Manifest::new(recs, 0);
        let s = split_manifest(&m, 0.8, 1).unwrap();
        assert_eq!(s.split_records(Split::Train).count(), 5);
        assert_eq!(s.split_records(Split::Test).count(), 2);
    }

    use crate::manifest::GeneratorGroup;

    #[test]
    fn split_rejects_bad_fraction() {
        let m = Manifest::new(Vec::new(), 0);
        assert!(split_manifest(&m, 0.0, 1).is_err());
        assert!(split_manifest(&m, 1.0, 1).is_err());
    }

    #[test]
    fn calibration_equal_cells_and_real_total() {
        let listings = stub_listings(&ContentType::ALL, 2_100);
        let m = build_manifest(&listings, 16_000, 2).unwrap();
        let s = split_manifest(&m, 0.8, 2).unwrap();
        // 10 synthetic generator cells in the full structure.
        let calib = sample_calibration(&s, 400, 2).unwrap();
        assert_eq!(calib.len(), 400);
        let real = calib.records.iter().filter(|r| r.source == Source::Real).count();
        assert_eq!(real, 200);
        let mut cells: BTreeMap<(ContentType, &str), usize> = BTreeMap::new();
        for r in &calib.records {
            if r.source == Source::Synthetic {
                *cells.entry((r.content_type, r.generator.as_str())).or_default() += 1;
            }
        }
        assert_eq!(cells.len(), 10);
        assert!(cells.values().all(|&n| n == 20));
        // Subset of train ids.
        let train_ids: BTreeSet<&str> = s
            .split_records(Split::Train)
            .map(|r| r.id.as_str())
            .collect();
        assert!(calib.records.iter().all(|r| train_ids.contains(r.id.as_str())));
    }

    #[test]
    fn calibration_zero_is_empty() {
        let m = Manifest::new(Vec::new(), 0);
        assert!(sample_calibration(&m, 0, 1).unwrap().is_empty());
    }

    #[test]
    fn calibration_eight_cell_arithmetic() {
        // 80 total over 8 generator cells -> 5 per cell + 40 real.
        let contents = [ContentType::Photo, ContentType::Painting, ContentType::Face];
        let listings = stub_listings(&contents, 400);
        let m = build_manifest(&listings, 1_600, 4).unwrap();
        let s = split_manifest(&m, 0.8, 4).unwrap();
        let calib = sample_calibration(&s, 80, 4).unwrap();
        let mut cells: BTreeMap<(ContentType, &str), usize> = BTreeMap::new();
        for r in &calib.records {
            if r.source == Source::Synthetic {
                *cells.entry((r.content_type, r.generator.as_str())).or_default() += 1;
            }
        }
        assert_eq!(cells.len(), 8);
        assert!(cells.values().all(|&n| n == 5));
        assert_eq!(calib.records.iter().filter(|r| r.source == Source::Real).count(), 40);
    }

    #[test]
    fn deterministic_given_seed() {
        let listings = stub_listings(&ContentType::ALL, 450);
        let a = build_manifest(&listings, 3_200, 42).unwrap();
        let b = build_manifest(&listings, 3_200, 42).unwrap();
        let c = build_manifest(&listings, 3_200, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
