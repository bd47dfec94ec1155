//! Dataset manifests and per-subject race-label aggregation.
//!
//! A manifest is a comma-delimited UTF-8 table with the header
//! `path,subject_id,gender,age,race,partition,race_override`. Image paths are
//! resolved relative to the manifest's directory. `race_override`, when
//! present, wins over the (possibly aggregated) `race` column.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::labels::{Age, AttributeGroup, AttributeLabels, Gender, Partition, Race};

pub const MANIFEST_HEADER: &str = "path,subject_id,gender,age,race,partition,race_override";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub path: String,
    pub subject_id: String,
    pub gender: Gender,
    pub age: Age,
    pub race: Race,
    pub partition: Partition,
    pub race_override: Option<Race>,
}

impl Record {
    pub fn effective_race(&self) -> Race {
        self.race_override.unwrap_or(self.race)
    }

    pub fn labels(&self) -> AttributeLabels {
        AttributeLabels::new(self.gender, self.age, self.effective_race())
    }

    pub fn group(&self) -> AttributeGroup {
        self.labels().group()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    /// Directory that relative image paths resolve against.
    pub root: PathBuf,
    pub records: Vec<Record>,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, records: Vec<Record>) -> Result<Self> {
        let manifest = Self {
            root: root.into(),
            records,
        };
        manifest.check_partitions()?;
        Ok(manifest)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn subjects(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.subject_id.as_str()).collect()
    }

    pub fn partition(&self, partition: Partition) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.partition == partition)
    }

    pub fn resolve(&self, record: &Record) -> PathBuf {
        let p = Path::new(&record.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn check_partitions(&self) -> Result<()> {
        let mut seen: BTreeMap<&str, Partition> = BTreeMap::new();
        for r in &self.records {
            match seen.insert(&r.subject_id, r.partition) {
                Some(prev) if prev != r.partition => {
                    return Err(Error::PartitionOverlap {
                        subject: r.subject_id.clone(),
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn check_images_exist(&self) -> Result<()> {
        for r in &self.records {
            let p = self.resolve(r);
            if !p.is_file() {
                return Err(Error::MissingImage(p));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(MANIFEST_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.path,
                r.subject_id,
                r.gender,
                r.age,
                r.race,
                r.partition,
                r.race_override.map(Race::token).unwrap_or("")
            ));
        }
        out
    }

    /// SHA-256 of the serialized table, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv().as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Parses manifest text without touching the filesystem.
    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim_end() == MANIFEST_HEADER => {}
            Some((_, header)) => {
                return Err(Error::ManifestParse {
                    line: 1,
                    message: format!("expected header {MANIFEST_HEADER:?}, got {header:?}"),
                })
            }
            None => {
                return Err(Error::ManifestParse {
                    line: 1,
                    message: "empty file".into(),
                })
            }
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            records.push(parse_row(line).map_err(|e| match e {
                Error::ManifestParse { message, .. } => Error::ManifestParse {
                    line: i + 1,
                    message,
                },
                other => other,
            })?);
        }
        Self::new(root, records)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_manifest(path)
    }

    /// Assigns each subject's aggregated race label to all of its records.
    /// Fails if some subject in the manifest has no vote.
    pub fn apply_race_votes(&mut self, votes: &[RaceVote]) -> Result<()> {
        let by_subject: BTreeMap<&str, Race> =
            votes.iter().map(|v| (v.subject_id.as_str(), v.label)).collect();
        for r in &self.records {
            if !by_subject.contains_key(r.subject_id.as_str()) {
                return Err(Error::MissingRaceVote {
                    subject: r.subject_id.clone(),
                });
            }
        }
        for r in &mut self.records {
            r.race = by_subject[r.subject_id.as_str()];
        }
        Ok(())
    }
}

fn parse_row(line: &str) -> Result<Record> {
    let fields: Vec<&str> = line.split(',').collect();
    if !(fields.len() == 6 || fields.len() == 7) {
        return Err(Error::ManifestParse {
            line: 0,
            message: format!("expected 6 or 7 fields, got {}", fields.len()),
        });
    }
    if fields[0].is_empty() || fields[1].is_empty() {
        return Err(Error::ManifestParse {
            line: 0,
            message: "empty path or subject_id".into(),
        });
    }
    let race_override = match fields.get(6).copied().unwrap_or("") {
        "" => None,
        tok => Some(tok.parse()?),
    };
    Ok(Record {
        path: fields[0].to_string(),
        subject_id: fields[1].to_string(),
        gender: fields[2].parse()?,
        age: fields[3].parse()?,
        race: fields[4].parse()?,
        partition: fields[5].parse()?,
        race_override,
    })
}

/// Reads and validates a manifest, including that every image file exists.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = DatasetManifest::parse(&text, root)?;
    manifest.check_images_exist()?;
    Ok(manifest)
}

/// Per-subject majority vote over per-image race predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaceVote {
    pub subject_id: String,
    pub predictions: Vec<Race>,
    pub label: Race,
}

/// Majority vote per subject. Ties go to the lexicographically smaller token
/// (`black` before `white`). Output is sorted by subject id.
pub fn aggregate_race(per_image: &[(String, Race)]) -> Vec<RaceVote> {
    let mut by_subject: BTreeMap<&str, Vec<Race>> = BTreeMap::new();
    for (subject, race) in per_image {
        by_subject.entry(subject).or_default().push(*race);
    }
    by_subject
        .into_iter()
        .map(|(subject, predictions)| {
            let black = predictions.iter().filter(|&&r| r == Race::Black).count();
            let white = predictions.len() - black;
            let label = if white > black { Race::White } else { Race::Black };
            RaceVote {
                subject_id: subject.to_string(),
                predictions,
                label,
            }
        })
        .collect()
}
