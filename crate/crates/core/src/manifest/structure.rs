//! Reference corpus structure: the per-cell layout a balanced corpus
//! follows at the reference total of 200000 records. Quotas for other
//! totals scale these counts proportionally (renormalized over whichever
//! content types are present) and must remain exactly integral.

use super::{ContentType, GeneratorGroup, Source};

pub const REFERENCE_TOTAL: u64 = 200_000;

/// One cell of the reference structure: a (content type, source,
/// provider) triple with its record count at the reference total.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructureCell {
    pub content: ContentType,
    pub source: Source,
    /// Directory / listing-key slug.
    pub provider: &'static str,
    /// Origin dataset (real rows) or generator name (synthetic rows).
    pub display: &'static str,
    pub group: GeneratorGroup,
    /// Source dataset recorded for synthetic rows collected from an
    /// existing corpus rather than generated in place.
    pub origin: &'static str,
    pub reference_count: u64,
}

impl StructureCell {
    pub fn slug(&self) -> String {
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

const fn real(
    content: ContentType,
    provider: &'static str,
    display: &'static str,
    count: u64,
) -> StructureCell {
    StructureCell {
        content,
        source: Source::Real,
        provider,
        display,
        group: GeneratorGroup::Real,
        origin: display,
        reference_count: count,
    }
}

const fn synth(
    content: ContentType,
    provider: &'static str,
    display: &'static str,
    group: GeneratorGroup,
    origin: &'static str,
    count: u64,
) -> StructureCell {
    StructureCell {
        content,
        source: Source::Synthetic,
        provider,
        display,
        group,
        origin,
        reference_count: count,
    }
}

const CELLS: [StructureCell; 17] = [
    real(ContentType::Photo, "imagenet", "ImageNet", 7_500),
    real(ContentType::Photo, "lsun", "LSUN", 7_500),
    real(ContentType::Photo, "coco", "COCO", 15_000),
    synth(ContentType::Photo, "stylegan-xl", "StyleGAN-XL", GeneratorGroup::Gan, "generated", 7_500),
    synth(ContentType::Photo, "progan", "ProGAN", GeneratorGroup::Gan, "cnn-generated", 7_500),
    synth(ContentType::Photo, "sd", "SD-v2.1/SDXL-1.0", GeneratorGroup::Sd, "generated", 15_000),
    real(ContentType::Painting, "wikiart", "WikiArt", 11_250),
    real(ContentType::Painting, "danbooru", "Danbooru", 11_250),
    synth(ContentType::Painting, "stylegan3", "StyleGAN3", GeneratorGroup::Gan, "generated", 11_250),
    synth(ContentType::Painting, "sd", "SD-v2.1/SDXL-1.0", GeneratorGroup::Sd, "generated", 5_625),
    synth(ContentType::Painting, "animagine-xl", "Animagine-XL", GeneratorGroup::Sd, "generated", 5_625),
    real(ContentType::Face, "ffhq", "FFHQ", 22_500),
    synth(ContentType::Face, "stylegan-xl", "StyleGAN-XL", GeneratorGroup::Gan, "generated", 11_250),
    synth(ContentType::Face, "sd", "SD-v2.1/SDXL-1.0", GeneratorGroup::Sd, "generated", 11_250),
    real(ContentType::Uncategorized, "photozilla", "Photozilla", 25_000),
    synth(ContentType::Uncategorized, "midjourney", "Midjourney", GeneratorGroup::Midjourney, "journeydb", 12_500),
    synth(ContentType::Uncategorized, "dalle3", "DALL·E 3", GeneratorGroup::Dalle3, "laion", 12_500),
];

pub fn reference_structure() -> &'static [StructureCell] {
    &CELLS
}

/// Reference count of a whole content type (both sources).
pub fn content_reference_count(content: ContentType) -> u64 {
    CELLS
        .iter()
        .filter(|c| c.content == content)
        .map(|c| c.reference_count)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_counts_close() {
        let total: u64 = CELLS.iter().map(|c| c.reference_count).sum();
        assert_eq!(total, REFERENCE_TOTAL);
        let real: u64 = CELLS
            .iter()
            .filter(|c| c.source == Source::Real)
            .map(|c| c.reference_count)
            .sum();
        assert_eq!(real, REFERENCE_TOTAL / 2);
    }

    #[test]
    fn content_shares_match_published_percentages() {
        // photos 30%, paintings 22.5%, faces 22.5%, uncategorized 25%
        assert_eq!(content_reference_count(ContentType::Photo), 60_000);
        assert_eq!(content_reference_count(ContentType::Painting), 45_000);
        assert_eq!(content_reference_count(ContentType::Face), 45_000);
        assert_eq!(content_reference_count(ContentType::Uncategorized), 50_000);
    }

    #[test]
    fn real_equals_synthetic_inside_each_content_type() {
        for content in ContentType::ALL {
            let count = |source| -> u64 {
                CELLS
                    .iter()
                    .filter(|c| c.content == content && c.source == source)
                    .map(|c| c.reference_count)
                    .sum()
            };
            assert_eq!(count(Source::Real), count(Source::Synthetic), "{content:?}");
        }
    }

    #[test]
    fn cell_slugs_unique() {
        let mut slugs: Vec<String> = CELLS.iter().map(|c| c.slug()).collect();
        slugs.sort();
        slugs.dedup();
        assert_eq!(slugs.len(), CELLS.len());
    }
}
