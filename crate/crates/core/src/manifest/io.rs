//! Line-delimited manifest serialization: a header line carrying the
//! schema version and seed, then one tab-separated record per line with
//! a fixed field order. Streamable, diffable, and byte-stable for a
//! given build.

use std::fs;
use std::path::Path;

use super::{ContentType, GeneratorGroup, ImageRecord, Manifest, ManifestError, Source, Split};

const HEADER_TAG: &str = "#synthdet-manifest";

fn check_field(s: &str) -> Result<&str, ManifestError> {
    if s.contains('\t') || s.contains('\n') || s.contains('\r') {
        return Err(ManifestError::InvalidField { field: s.to_string() });
    }
    Ok(s)
}

pub fn to_string(m: &Manifest) -> Result<String, ManifestError> {
    let mut out = String::new();
    out.push_str(&format!(
        "{HEADER_TAG}\tschema_version={}\tseed={}\n",
        m.schema_version, m.seed
    ));
    for r in &m.records {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            check_field(&r.id)?,
            check_field(&r.path)?,
            match r.source {
                Source::Real => "real",
                Source::Synthetic => "synthetic",
            },
            r.content_type.slug(),
            r.generator_group.slug(),
            check_field(&r.generator)?,
            check_field(&r.origin_dataset)?,
            r.split.slug(),
        ));
    }
    Ok(out)
}

pub fn from_str(text: &str) -> Result<Manifest, ManifestError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(ManifestError::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let mut fields = header.split('\t');
    if fields.next() != Some(HEADER_TAG) {
        return Err(ManifestError::Parse {
            line: 1,
            msg: format!("missing {HEADER_TAG} header"),
        });
    }
    let mut schema_version = None;
    let mut seed = None;
    for field in fields {
        if let Some(v) = field.strip_prefix("schema_version=") {
            schema_version = v.parse::<u32>().ok();
        } else if let Some(v) = field.strip_prefix("seed=") {
            seed = v.parse::<u64>().ok();
        }
    }
    let (Some(schema_version), Some(seed)) = (schema_version, seed) else {
        return Err(ManifestError::Parse {
            line: 1,
            msg: "header must carry schema_version and seed".into(),
        });
    };

    let mut records = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = i + 1;
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 8 {
            return Err(ManifestError::Parse {
                line: line_no,
                msg: format!("expected 8 tab-separated fields, got {}", parts.len()),
            });
        }
        let parse = |msg: &str| ManifestError::Parse {
            line: line_no,
            msg: msg.to_string(),
        };
        records.push(ImageRecord {
            id: parts[0].to_string(),
            path: parts[1].to_string(),
            source: match parts[2] {
                "real" => Source::Real,
                "synthetic" => Source::Synthetic,
                other => return Err(parse(&format!("bad source {other:?}"))),
            },
            content_type: ContentType::from_slug(parts[3])
                .ok_or_else(|| parse(&format!("bad content type {:?}", parts[3])))?,
            generator_group: GeneratorGroup::from_slug(parts[4])
                .ok_or_else(|| parse(&format!("bad generator group {:?}", parts[4])))?,
            generator: parts[5].to_string(),
            origin_dataset: parts[6].to_string(),
            split: Split::from_slug(parts[7])
                .ok_or_else(|| parse(&format!("bad split {:?}", parts[7])))?,
        });
    }
    Ok(Manifest {
        records,
        seed,
        schema_version,
    })
}

pub fn save(m: &Manifest, path: &Path) -> Result<(), ManifestError> {
    fs::write(path, to_string(m)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Manifest, ManifestError> {
    from_str(&fs::read_to_string(path)?)
}

impl Manifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ManifestError> {
        save(self, path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        load(path.as_ref())
    }

    pub fn to_tsv(&self) -> Result<String, ManifestError> {
        to_string(self)
    }

    pub fn from_tsv(text: &str) -> Result<Self, ManifestError> {
        from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Manifest {
        Manifest::new(
            vec![
                ImageRecord {
                    id: "photo-real-coco-000000".into(),
                    path: "data/coco/1.jpg".into(),
                    source: Source::Real,
                    content_type: ContentType::Photo,
                    generator_group: GeneratorGroup::Real,
                    generator: "none".into(),
                    origin_dataset: "COCO".into(),
                    split: Split::Train,
                },
                ImageRecord {
                    id: "photo-synthetic-sd-000000".into(),
                    path: "data/sd/1.png".into(),
                    source: Source::Synthetic,
                    content_type: ContentType::Photo,
                    generator_group: GeneratorGroup::Sd,
                    generator: "SD-v2.1/SDXL-1.0".into(),
                    origin_dataset: "generated".into(),
                    split: Split::Test,
                },
            ],
            99,
        )
    }

    #[test]
    fn round_trip_is_identity() {
        let m = sample();
        let text = to_string(&m).unwrap();
        let back = from_str(&text).unwrap();
        assert_eq!(m, back);
        assert_eq!(to_string(&back).unwrap(), text);
    }

    #[test]
    fn tab_in_field_rejected() {
        let mut m = sample();
        m.records[0].path = "bad\tpath".into();
        assert!(matches!(to_string(&m), Err(ManifestError::InvalidField { .. })));
    }

    #[test]
    fn corrupt_line_reports_position() {
        let text = format!("{}\nonly-three\tfields\there\n", "#synthdet-manifest\tschema_version=1\tseed=0");
        let err = from_str(&text).unwrap_err();
        assert!(matches!(err, ManifestError::Parse { line: 2, .. }), "{err}");
    }
}
