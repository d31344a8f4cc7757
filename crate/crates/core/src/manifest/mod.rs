//! Dataset manifest: a validated collection of image records encoding
//! the balanced corpus structure (content types, real/synthetic parity,
//! per-generator cells, splits) without storing any image data.
//!
//! The reference structure divides a corpus into four content types —
//! photos 30%, paintings 22.5%, faces 22.5%, uncategorized 25% — with
//! equal real and synthetic halves inside each, and fixed per-provider
//! proportions within each half. Builds may cover a subset of content
//! types; cell quotas are then renormalized over the types present and
//! must stay exactly integral.

mod io;
mod ops;
mod structure;
mod validate;

pub use ops::{build_manifest, sample_calibration, scan_source_tree, split_manifest, ListingKey, SourceListings};
pub use structure::{reference_structure, StructureCell, REFERENCE_TOTAL};
pub use validate::{validate_manifest, ValidationReport, Violation};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("insufficient source files for cell {cell}: need {need}, have {have}")]
    InsufficientSource { cell: String, need: u64, have: u64 },
    #[error("cell {cell} quota is not an integer at target total {total}")]
    NonIntegerQuota { cell: String, total: u64 },
    #[error("no listing supplied for cell {cell}")]
    MissingListing { cell: String },
    #[error("listing key {key} does not match any reference structure cell")]
    UnknownListing { key: String },
    #[error("train fraction {fraction} outside (0, 1)")]
    InvalidFraction { fraction: f64 },
    #[error("{what} is not divisible into equal integer quotas")]
    QuotaIndivisible { what: String },
    #[error("field {field:?} contains a tab or newline and cannot be serialized")]
    InvalidField { field: String },
    #[error("manifest parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Real,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContentType {
    Photo,
    Painting,
    Face,
    Uncategorized,
}

impl ContentType {
    pub const ALL: [ContentType; 4] = [
        ContentType::Photo,
        ContentType::Painting,
        ContentType::Face,
        ContentType::Uncategorized,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            ContentType::Photo => "photo",
            ContentType::Painting => "painting",
            ContentType::Face => "face",
            ContentType::Uncategorized => "uncategorized",
        }
    }

    pub fn from_slug(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.slug() == s)
    }
}

/// Generator family. `Real` marks authentic images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorGroup {
    Real,
    Gan,
    Sd,
    Midjourney,
    Dalle3,
}

impl GeneratorGroup {
    pub const SYNTHETIC: [GeneratorGroup; 4] = [
        GeneratorGroup::Gan,
        GeneratorGroup::Sd,
        GeneratorGroup::Midjourney,
        GeneratorGroup::Dalle3,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            GeneratorGroup::Real => "real",
            GeneratorGroup::Gan => "gan",
            GeneratorGroup::Sd => "sd",
            GeneratorGroup::Midjourney => "midjourney",
            GeneratorGroup::Dalle3 => "dalle3",
        }
    }

    pub fn from_slug(s: &str) -> Option<Self> {
        [Self::Real, Self::Gan, Self::Sd, Self::Midjourney, Self::Dalle3]
            .into_iter()
            .find(|g| g.slug() == s)
    }

    /// Row label used in reports.
    pub fn display(self) -> &'static str {
        match self {
            GeneratorGroup::Real => "Real",
            GeneratorGroup::Gan => "GAN",
            GeneratorGroup::Sd => "SD",
            GeneratorGroup::Midjourney => "Midjourney",
            GeneratorGroup::Dalle3 => "DALL·E 3",
        }
    }

    /// Stable index used for model-identification class labels.
    pub fn class_index(self) -> Option<usize> {
        Self::SYNTHETIC.iter().position(|&g| g == self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Calibration,
}

impl Split {
    pub fn slug(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Calibration => "calibration",
        }
    }

    pub fn from_slug(s: &str) -> Option<Self> {
        [Self::Train, Self::Test, Self::Calibration]
            .into_iter()
            .find(|v| v.slug() == s)
    }
}

/// One image with its four labels and split assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub path: String,
    pub source: Source,
    pub content_type: ContentType,
    pub generator_group: GeneratorGroup,
    /// Specific generator name, `"none"` for real images.
    pub generator: String,
    pub origin_dataset: String,
    pub split: Split,
}

impl ImageRecord {
    /// Provider key: the structure cell a record belongs to is identified
    /// by the origin dataset for real images and the generator for
    /// synthetic ones.
    pub fn provider(&self) -> &str {
        match self.source {
            Source::Real => &self.origin_dataset,
            Source::Synthetic => &self.generator,
        }
    }
}

/// Ordered collection of records plus the seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub records: Vec<ImageRecord>,
    pub seed: u64,
    pub schema_version: u32,
}

impl Manifest {
    pub fn new(records: Vec<ImageRecord>, seed: u64) -> Self {
        Manifest {
            records,
            seed,
            schema_version: SCHEMA_VERSION,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split_records(&self, split: Split) -> impl Iterator<Item = &ImageRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Append the records of another manifest (e.g. a calibration sample
    /// joined back onto its train/test source) keeping this seed.
    pub fn extend_from(&mut self, other: &Manifest) {
        self.records.extend(other.records.iter().cloned());
    }
}
