//! Tab-separated response manifest.
//!
//! One record per line: `submission_id \t part \t response_id \t rows \t ref`
//! where `rows` is a comma-separated list of feature-file rows and `ref` is a
//! grid score or `-`. Lines starting with `#` are not records; two of them
//! are read as directives:
//!
//! ```text
//! # split=dev
//! # features=dev.slaf
//! ```
//!
//! Without a `features` directive the feature file is the manifest path with
//! its extension replaced by `.slaf`. Without a `split` directive the split
//! name is taken from the file stem.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{read_text, write_text};
use crate::data::{DatasetSplit, ResponseRecord, SplitName, MAX_PART, MIN_PART};
use crate::error::{Error, Result};
use crate::scale::GradeScale;

pub fn parse_manifest(path: &Path, scale: &GradeScale) -> Result<DatasetSplit> {
    let text = read_text(path)?;
    parse_manifest_str(&text, path, scale)
}

pub fn parse_manifest_str(text: &str, path: &Path, scale: &GradeScale) -> Result<DatasetSplit> {
    let mut name: Option<SplitName> = None;
    let mut features: Option<PathBuf> = None;
    let mut records = Vec::new();

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let err = |msg: String| Error::parse(path, lineno, msg);
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.trim().split_once('=') {
                match key.trim() {
                    "split" => name = Some(value.trim().parse().map_err(|e: Error| err(e.to_string()))?),
                    "features" => features = Some(PathBuf::from(value.trim())),
                    _ => {}
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(err(format!("expected 5 tab-separated fields, found {}", fields.len())));
        }
        let part: u8 = fields[1]
            .parse()
            .map_err(|_| err(format!("part {:?} is not an integer", fields[1])))?;
        if !(MIN_PART..=MAX_PART).contains(&part) {
            return Err(err(format!("part {part} out of {MIN_PART}..{MAX_PART}")));
        }
        let chunk_rows = fields[3]
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| err(format!("chunk row {s:?} is not a non-negative integer")))
            })
            .collect::<Result<Vec<_>>>()?;
        let ref_score = match fields[4] {
            "-" => None,
            s => {
                let v: f64 = s.parse().map_err(|_| err(format!("reference {s:?} is not a number")))?;
                if !scale.on_grid(v) {
                    return Err(err(format!("reference {s} is off the grade grid")));
                }
                Some(v)
            }
        };
        if fields[0].is_empty() || fields[2].is_empty() {
            return Err(err("empty submission or response id".into()));
        }
        records.push(ResponseRecord {
            submission_id: fields[0].to_string(),
            part,
            response_id: fields[2].to_string(),
            chunk_rows,
            ref_score,
        });
    }

    let name = match name {
        Some(n) => n,
        None => path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                Error::parse(path, 0, "cannot determine split name; add a '# split=train|dev|test' line")
            })?,
    };
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let feature_file = match features {
        Some(f) if f.is_absolute() => f,
        Some(f) => base.join(f),
        None => path.with_extension("slaf"),
    };
    Ok(DatasetSplit {
        name,
        records,
        feature_file,
    })
}

/// Renders a split. `features` is written verbatim into the directive.
pub fn format_manifest(split: &DatasetSplit, features: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# split={}", split.name);
    let _ = writeln!(out, "# features={features}");
    let _ = writeln!(out, "# submission_id\tpart\tresponse_id\tchunk_rows\tref_score");
    for r in &split.records {
        let rows: Vec<String> = r.chunk_rows.iter().map(|c| c.to_string()).collect();
        let reference = r.ref_score.map_or_else(|| "-".to_string(), |s| s.to_string());
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.submission_id,
            r.part,
            r.response_id,
            rows.join(","),
            reference
        );
    }
    out
}

/// Writes the manifest with a `features` directive relative to the
/// manifest's directory when possible.
pub fn write_manifest(split: &DatasetSplit, path: &Path) -> Result<()> {
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let features = split
        .feature_file
        .strip_prefix(base)
        .unwrap_or(&split.feature_file)
        .to_string_lossy()
        .into_owned();
    write_text(path, &format_manifest(split, &features))
}
