//! Dataset data model: responses, splits, and split validation.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scale::GradeScale;
use crate::storage::{parse_manifest, read_features, FeatureMatrix};

pub const MIN_PART: u8 = 1;
pub const MAX_PART: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Dev, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "dev" => Ok(SplitName::Dev),
            "test" => Ok(SplitName::Test),
            other => Err(Error::Domain(format!("unknown split name {other:?}"))),
        }
    }
}

/// One spoken response. Each entry of `chunk_rows` is a row of the split's
/// feature file holding one chunk's features.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseRecord {
    pub submission_id: String,
    pub part: u8,
    pub response_id: String,
    pub chunk_rows: Vec<usize>,
    pub ref_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub records: Vec<ResponseRecord>,
    pub feature_file: PathBuf,
}

impl DatasetSplit {
    /// Records belonging to one test part.
    pub fn part_records(&self, part: u8) -> impl Iterator<Item = &ResponseRecord> {
        self.records.iter().filter(move |r| r.part == part)
    }

    /// Copy of the split holding only one part's records.
    pub fn with_part(&self, part: u8) -> DatasetSplit {
        DatasetSplit {
            name: self.name,
            records: self.part_records(part).cloned().collect(),
            feature_file: self.feature_file.clone(),
        }
    }

    /// Distinct parts present, ascending.
    pub fn parts(&self) -> Vec<u8> {
        let mut parts: Vec<u8> = self.records.iter().map(|r| r.part).collect();
        parts.sort_unstable();
        parts.dedup();
        parts
    }
}

/// A split together with its feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSplit {
    pub split: DatasetSplit,
    pub features: FeatureMatrix,
}

impl LoadedSplit {
    /// Parses a manifest, reads its feature file, and rejects the pair if
    /// [`validate_split`] reports any violation.
    pub fn load(manifest: &Path, scale: &GradeScale) -> Result<Self> {
        let split = parse_manifest(manifest, scale)?;
        let features = read_features(&split.feature_file)?;
        let violations = validate_split(&split, features.count(), scale);
        if let Some(first) = violations.first() {
            return Err(Error::Domain(format!(
                "{}: {} invalid record(s), first: {first}",
                manifest.display(),
                violations.len()
            )));
        }
        Ok(LoadedSplit { split, features })
    }

    /// Chunk feature vectors of one record, upcast to binary64.
    pub fn chunks(&self, record: &ResponseRecord) -> Result<Vec<Vec<f64>>> {
        record.chunk_rows.iter().map(|&r| self.features.row_f64(r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    EmptyChunks,
    DuplicateChunkRow(usize),
    ChunkOutOfBounds { row: usize, feature_count: usize },
    PartOutOfRange(u8),
    ReferenceOffGrid(String),
    DuplicateResponseId,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::EmptyChunks => write!(f, "no chunk rows"),
            Rule::DuplicateChunkRow(r) => write!(f, "chunk row {r} listed twice"),
            Rule::ChunkOutOfBounds { row, feature_count } => {
                write!(f, "chunk row {row} out of bounds (feature file has {feature_count} rows)")
            }
            Rule::PartOutOfRange(p) => write!(f, "part {p} outside {MIN_PART}..{MAX_PART}"),
            Rule::ReferenceOffGrid(s) => write!(f, "reference score {s} is off the grade grid"),
            Rule::DuplicateResponseId => write!(f, "duplicate response id"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub response_id: String,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.response_id, self.rule)
    }
}

/// Checks every record invariant. Returns an empty list when the split is
/// well formed.
pub fn validate_split(split: &DatasetSplit, feature_count: usize, scale: &GradeScale) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen_ids = HashSet::new();
    for rec in &split.records {
        let mut push = |rule| {
            out.push(Violation {
                response_id: rec.response_id.clone(),
                rule,
            })
        };
        if !seen_ids.insert(rec.response_id.as_str()) {
            push(Rule::DuplicateResponseId);
        }
        if !(MIN_PART..=MAX_PART).contains(&rec.part) {
            push(Rule::PartOutOfRange(rec.part));
        }
        if rec.chunk_rows.is_empty() {
            push(Rule::EmptyChunks);
        }
        let mut seen_rows = HashSet::new();
        for &row in &rec.chunk_rows {
            if !seen_rows.insert(row) {
                push(Rule::DuplicateChunkRow(row));
            }
            if row >= feature_count {
                push(Rule::ChunkOutOfBounds { row, feature_count });
            }
        }
        if let Some(s) = rec.ref_score {
            if !scale.on_grid(s) {
                push(Rule::ReferenceOffGrid(s.to_string()));
            }
        }
    }
    out
}
