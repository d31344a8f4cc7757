//! Deterministic prompt generation for external text-to-image tooling.
//!
//! Painting prompts fill technique, style, and subject slots; face
//! prompts fill eight facial-characteristic slots, reduced to gender and
//! skin color for babies. Every slot value is drawn uniformly from its
//! list, the descriptive sentence ends with a positive suffix, and a
//! negative prompt rides along. Suffix and negative strings live in a
//! versioned data file shipped with the crate and can be overridden.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::stream_rng;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("affixes file: {0}")]
    Affixes(String),
}

pub const TECHNIQUES: [&str; 5] = ["oil", "watercolor", "acrylic", "digital art", "pen and ink"];

pub const STYLES: [&str; 40] = [
    "impressionism", "abstract", "realism", "cubism", "surrealism", "pop art", "expressionism",
    "minimalism", "post-impressionism", "art deco", "fauvism", "romanticism", "baroque",
    "neoclassicism", "surreal abstraction", "hyperrealism", "symbolism", "pointillism",
    "suprematism", "constructivism", "japan art", "ukiyo-e", "kinetic art", "street art",
    "digital art", "naïve art", "primitivism", "abstract expressionism", "conceptual art",
    "futurism", "precisionism", "social realism", "magical realism", "cubofuturism",
    "lyrical abstraction", "tenebrism", "synthetic cubism", "metaphysical art", "graffiti art",
    "videogame art",
];

pub const SUBJECTS: [&str; 29] = [
    "landscape", "portrait", "still life", "cityscape", "abstract composition", "wildlife",
    "fantasy", "architecture", "seascape", "flowers", "people", "animals", "food", "music",
    "dance", "sports", "mythology", "history", "technology", "science", "nature", "celebrity",
    "space", "transportation", "underwater", "emotion", "dreams", "folklore", "literature",
];

pub const AGES: [&str; 4] = ["baby", "young", "middle-aged", "elderly"];
pub const GENDERS: [&str; 2] = ["male", "female"];
pub const HAIR_TYPES: [&str; 3] = ["straight", "wavy", "curly"];
pub const EYES: [&str; 4] = ["small", "large", "almond-shaped", "round"];
pub const MOUTHS: [&str; 4] = ["thin lips", "full lips", "wide mouth", "narrow mouth"];
pub const EXPRESSIONS: [&str; 5] =
    ["neutral expression", "smiling", "serious", "surprised", "angry"];
pub const SKIN_COLORS: [&str; 5] = ["fair", "olive", "pale", "medium", "dark"];
pub const GLASSES: [&str; 2] = ["with glasses", "without glasses"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptCategory {
    Painting,
    Face,
}

impl PromptCategory {
    pub fn slug(self) -> &'static str {
        match self {
            PromptCategory::Painting => "painting",
            PromptCategory::Face => "face",
        }
    }
}

/// Positive suffix and negative prompt for one category.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffixPair {
    pub positive_suffix: String,
    pub negative_prompt: String,
}

/// Versioned suffix/negative-prompt table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Affixes {
    pub version: u32,
    pub painting: AffixPair,
    pub face: AffixPair,
}

impl Affixes {
    pub fn builtin() -> Self {
        toml::from_str(include_str!("../data/prompt_affixes.toml"))
            .expect("bundled affixes file is well-formed")
    }

    pub fn from_toml(text: &str) -> Result<Self, PromptError> {
        toml::from_str(text).map_err(|e| PromptError::Affixes(e.to_string()))
    }

    pub fn for_category(&self, category: PromptCategory) -> &AffixPair {
        match category {
            PromptCategory::Painting => &self.painting,
            PromptCategory::Face => &self.face,
        }
    }
}

/// One generated prompt: the filled slots, the rendered positive text
/// (ending in the positive suffix), and the negative prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub category: PromptCategory,
    pub filled_slots: BTreeMap<String, String>,
    pub positive_text: String,
    pub negative_text: String,
    pub seed: u64,
}

fn pick<R: Rng>(rng: &mut R, values: &[&'static str]) -> &'static str {
    values[rng.random_range(0..values.len())]
}

/// Build one painting prompt from the given seed.
pub fn build_painting_prompt(seed: u64, affixes: &Affixes) -> PromptSpec {
    let mut rng = stream_rng(seed, "prompt/painting");
    let technique = pick(&mut rng, &TECHNIQUES);
    let style = pick(&mut rng, &STYLES);
    let subject = pick(&mut rng, &SUBJECTS);

    let pair = affixes.for_category(PromptCategory::Painting);
    let positive_text = format!(
        "A {subject} painting created with {technique} in the {style} manner. {}",
        pair.positive_suffix
    );
    let mut filled_slots = BTreeMap::new();
    filled_slots.insert("technique".into(), technique.to_string());
    filled_slots.insert("style".into(), style.to_string());
    filled_slots.insert("subject".into(), subject.to_string());
    PromptSpec {
        category: PromptCategory::Painting,
        filled_slots,
        positive_text,
        negative_text: pair.negative_prompt.clone(),
        seed,
    }
}

/// Build one face prompt from the given seed. Babies keep only the
/// gender and skin-color characteristics.
pub fn build_face_prompt(seed: u64, affixes: &Affixes) -> PromptSpec {
    let mut rng = stream_rng(seed, "prompt/face");
    let age = pick(&mut rng, &AGES);
    let gender = pick(&mut rng, &GENDERS);
    let hair = pick(&mut rng, &HAIR_TYPES);
    let eyes = pick(&mut rng, &EYES);
    let mouth = pick(&mut rng, &MOUTHS);
    let expression = pick(&mut rng, &EXPRESSIONS);
    let skin = pick(&mut rng, &SKIN_COLORS);
    let glasses = pick(&mut rng, &GLASSES);

    let pair = affixes.for_category(PromptCategory::Face);
    let mut filled_slots = BTreeMap::new();
    filled_slots.insert("age".into(), age.to_string());
    filled_slots.insert("gender".into(), gender.to_string());
    filled_slots.insert("skin".into(), skin.to_string());

    let positive_text = if age == "baby" {
        format!(
            "A close-up photograph of the visage of a baby {gender} having {skin} skin. {}",
            pair.positive_suffix
        )
    } else {
        filled_slots.insert("hair".into(), hair.to_string());
        filled_slots.insert("eyes".into(), eyes.to_string());
        filled_slots.insert("mouth".into(), mouth.to_string());
        filled_slots.insert("expression".into(), expression.to_string());
        filled_slots.insert("glasses".into(), glasses.to_string());
        format!(
            "A close-up photograph of the visage of a {age} {gender} person having {hair} hair, \
             {eyes} eyes, {mouth}, a {expression}, {skin} skin, {glasses}. {}",
            pair.positive_suffix
        )
    };
    PromptSpec {
        category: PromptCategory::Face,
        filled_slots,
        positive_text,
        negative_text: pair.negative_prompt.clone(),
        seed,
    }
}

/// Generate `count` prompts; each index draws from its own stream so the
/// set is stable under count changes.
pub fn generate_prompts(
    category: PromptCategory,
    count: usize,
    seed: u64,
    affixes: &Affixes,
) -> Vec<PromptSpec> {
    (0..count)
        .map(|i| {
            let item_seed = crate::rng::stream_seed(seed, &format!("prompt-item/{i}"));
            match category {
                PromptCategory::Painting => build_painting_prompt(item_seed, affixes),
                PromptCategory::Face => build_face_prompt(item_seed, affixes),
            }
        })
        .collect()
}

/// Pass-through formatter for tag-prompted generators: a user-supplied
/// tag line is joined with the painting suffix and negative prompt.
pub fn tag_passthrough(tags: &str, affixes: &Affixes) -> (String, String) {
    let pair = affixes.for_category(PromptCategory::Painting);
    let tags = tags.trim().trim_end_matches(',');
    (
        format!("{tags}, {}", pair.positive_suffix),
        pair.negative_prompt.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slot_domain_sizes() {
        assert_eq!(TECHNIQUES.len(), 5);
        assert_eq!(STYLES.len(), 40);
        assert_eq!(SUBJECTS.len(), 29);
        assert_eq!(AGES.len(), 4);
    }

    #[test]
    fn painting_combination_space_matches_enumeration_oracle() {
        // Brute-force cartesian enumeration, then compare with the product.
        let mut combos = std::collections::BTreeSet::new();
        for t in TECHNIQUES {
            for s in STYLES {
                for sub in SUBJECTS {
                    combos.insert((t, s, sub));
                }
            }
        }
        assert_eq!(combos.len(), TECHNIQUES.len() * STYLES.len() * SUBJECTS.len());
        assert_eq!(combos.len(), 5800);
    }

    #[test]
    fn face_non_baby_combination_space() {
        let non_baby_ages = AGES.iter().filter(|&&a| a != "baby").count();
        let product = non_baby_ages
            * GENDERS.len()
            * HAIR_TYPES.len()
            * EYES.len()
            * MOUTHS.len()
            * EXPRESSIONS.len()
            * SKIN_COLORS.len()
            * GLASSES.len();
        assert_eq!(product, 3 * 2 * 3 * 4 * 4 * 5 * 5 * 2);
        assert_eq!(product, 14_400);
    }

    #[test]
    fn fixed_seed_reproduces_prompt() {
        let affixes = Affixes::builtin();
        assert_eq!(build_painting_prompt(7, &affixes), build_painting_prompt(7, &affixes));
        assert_eq!(build_face_prompt(7, &affixes), build_face_prompt(7, &affixes));
        assert_ne!(build_face_prompt(7, &affixes), build_face_prompt(8, &affixes));
    }

    #[test]
    fn baby_prompts_keep_only_gender_and_skin() {
        let affixes = Affixes::builtin();
        let mut seen_baby = false;
        for seed in 0..200 {
            let spec = build_face_prompt(seed, &affixes);
            if spec.filled_slots["age"] == "baby" {
                seen_baby = true;
                let keys: Vec<&str> = spec.filled_slots.keys().map(|k| k.as_str()).collect();
                assert_eq!(keys, vec!["age", "gender", "skin"]);
            } else {
                assert_eq!(spec.filled_slots.len(), 8);
            }
        }
        assert!(seen_baby, "no baby drawn in 200 seeds");
    }

    /// Occurrence count of `needle`, non-overlapping.
    fn occurrences(hay: &str, needle: &str) -> usize {
        hay.matches(needle).count()
    }

    #[test]
    fn rendered_text_contains_each_slot_value_and_ends_with_suffix() {
        let affixes = Affixes::builtin();
        for seed in 0..300u64 {
            for spec in [build_painting_prompt(seed, &affixes), build_face_prompt(seed, &affixes)]
            {
                let suffix = &affixes.for_category(spec.category).positive_suffix;
                assert!(spec.positive_text.ends_with(suffix.as_str()), "{}", spec.positive_text);
                let body = &spec.positive_text[..spec.positive_text.len() - suffix.len()];
                for value in spec.filled_slots.values() {
                    // A value may legitimately appear inside another
                    // filled value (e.g. style "abstract" inside subject
                    // "abstract composition"); count those nestings in.
                    let expected: usize = spec
                        .filled_slots
                        .values()
                        .map(|other| occurrences(other, value))
                        .sum();
                    assert_eq!(
                        occurrences(body, value),
                        expected,
                        "value {value:?} in {body:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn slot_frequencies_are_roughly_uniform() {
        let affixes = Affixes::builtin();
        let n = 20_000usize;
        let mut technique_counts = BTreeMap::new();
        for i in 0..n {
            let spec = build_painting_prompt(i as u64, &affixes);
            *technique_counts
                .entry(spec.filled_slots["technique"].clone())
                .or_insert(0usize) += 1;
        }
        let p = 1.0 / TECHNIQUES.len() as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for (value, count) in technique_counts {
            let dev = (count as f64 - n as f64 * p).abs();
            assert!(dev < 4.0 * sigma, "{value}: count {count} deviates {dev:.1} (sigma {sigma:.1})");
        }
    }

    #[test]
    fn tag_passthrough_appends_affixes() {
        let affixes = Affixes::builtin();
        let (pos, neg) = tag_passthrough("1girl, solo, night sky,", &affixes);
        assert!(pos.starts_with("1girl, solo, night sky, "));
        assert!(pos.ends_with(affixes.painting.positive_suffix.as_str()));
        assert_eq!(neg, affixes.painting.negative_prompt);
    }
}
