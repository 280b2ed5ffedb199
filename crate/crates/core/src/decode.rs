//! Decoding head outputs into scores and aggregating them:
//! chunk -> response -> part -> submission.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::data::{DatasetSplit, MAX_PART, MIN_PART};
use crate::error::{Error, Result};
use crate::model::{expected_score, softmax, ClassDistribution, GraderModel, HeadKind};
use crate::numeric::ordered_mean;
use crate::scale::GradeScale;
use crate::storage::{read_text, FeatureMatrix, PredictionRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecodeMode {
    /// Score of the argmax class.
    Hard,
    /// Fair average over the class distribution.
    Soft,
    /// Raw scalar of a regression head.
    Reg,
}

impl DecodeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DecodeMode::Hard => "hard",
            DecodeMode::Soft => "soft",
            DecodeMode::Reg => "reg",
        }
    }

    /// Whether this mode can decode outputs of `head`.
    pub fn compatible_with(self, head: HeadKind) -> bool {
        matches!(
            (self, head),
            (DecodeMode::Reg, HeadKind::Reg) | (DecodeMode::Hard | DecodeMode::Soft, HeadKind::Ce | HeadKind::Fa)
        )
    }

    /// The default decoding for a head: soft for classifiers.
    pub fn default_for(head: HeadKind) -> Self {
        match head {
            HeadKind::Reg => DecodeMode::Reg,
            HeadKind::Ce | HeadKind::Fa => DecodeMode::Soft,
        }
    }
}

impl fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(DecodeMode::Hard),
            "soft" => Ok(DecodeMode::Soft),
            "reg" => Ok(DecodeMode::Reg),
            other => Err(Error::Domain(format!("unknown decode mode {other:?} (hard|soft|reg)"))),
        }
    }
}

/// Score of the most probable class; ties go to the earlier label, which
/// carries the higher score.
pub fn decode_hard(dist: &ClassDistribution, scale: &GradeScale) -> f64 {
    scale.scores()[dist.argmax()]
}

pub fn decode_soft(dist: &ClassDistribution, scale: &GradeScale) -> f64 {
    expected_score(dist, scale)
}

/// Clamps a score into the scale range. Only used when exporting final
/// score files; metrics always see unclamped values.
pub fn clamp_for_export(score: f64, scale: &GradeScale) -> f64 {
    score.clamp(scale.min_score(), scale.max_score())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub response_id: String,
    pub part: u8,
    pub mode: DecodeMode,
    pub chunk_scores: Vec<f64>,
    /// Arithmetic mean of `chunk_scores`.
    pub response_score: f64,
    /// Per-chunk distributions; `None` for regression heads.
    pub dists: Option<Vec<ClassDistribution>>,
}

impl PredictionRecord {
    fn from_chunks(
        response_id: &str,
        part: u8,
        mode: DecodeMode,
        chunk_scores: Vec<f64>,
        dists: Option<Vec<ClassDistribution>>,
    ) -> Result<Self> {
        let response_score = ordered_mean(&chunk_scores)
            .ok_or_else(|| Error::Domain(format!("response {response_id} has no chunks")))?;
        Ok(PredictionRecord {
            response_id: response_id.to_string(),
            part,
            mode,
            chunk_scores,
            response_score,
            dists,
        })
    }

    /// File-level row. Chunk distributions are averaged; for soft decoding
    /// the fair average of that mean equals the response score.
    pub fn to_row(&self) -> Result<PredictionRow> {
        let probs = match &self.dists {
            Some(d) => Some(ClassDistribution::mean(d)?.probs().to_vec()),
            None => None,
        };
        Ok(PredictionRow {
            response_id: self.response_id.clone(),
            part: self.part,
            mode: self.mode,
            score: self.response_score,
            probs,
        })
    }
}

fn decode_dists(dists: &[ClassDistribution], mode: DecodeMode, scale: &GradeScale) -> Result<Vec<f64>> {
    let f = match mode {
        DecodeMode::Hard => decode_hard,
        DecodeMode::Soft => decode_soft,
        DecodeMode::Reg => {
            return Err(Error::Domain("reg decoding needs a regression head, not class distributions".into()))
        }
    };
    dists
        .iter()
        .map(|d| {
            if d.len() != scale.num_classes() {
                return Err(Error::Dimension {
                    what: "class distribution",
                    expected: scale.num_classes(),
                    actual: d.len(),
                });
            }
            Ok(f(d, scale))
        })
        .collect()
}

/// Decodes every chunk of one response and averages the chunk scores.
pub fn predict_response<X: AsRef<[f64]>>(
    model: &GraderModel,
    response_id: &str,
    part: u8,
    chunks: &[X],
    mode: DecodeMode,
) -> Result<PredictionRecord> {
    if !mode.compatible_with(model.head) {
        return Err(Error::Domain(format!(
            "decode mode {mode} is incompatible with a {} head",
            model.head
        )));
    }
    if chunks.is_empty() {
        return Err(Error::Domain(format!("response {response_id} has no chunks")));
    }
    match mode {
        DecodeMode::Reg => {
            let scores = chunks
                .iter()
                .map(|x| model.forward(x.as_ref()).map(|o| o[0]))
                .collect::<Result<Vec<_>>>()?;
            PredictionRecord::from_chunks(response_id, part, mode, scores, None)
        }
        DecodeMode::Hard | DecodeMode::Soft => {
            let dists = chunks
                .iter()
                .map(|x| model.forward(x.as_ref()).and_then(|z| softmax(&z)))
                .collect::<Result<Vec<_>>>()?;
            let scores = decode_dists(&dists, mode, &model.scale)?;
            PredictionRecord::from_chunks(response_id, part, mode, scores, Some(dists))
        }
    }
}

/// Runs [`predict_response`] over every record of a split, optionally
/// restricted to one part. Records keep manifest order.
pub fn predict_split(
    model: &GraderModel,
    split: &DatasetSplit,
    features: &FeatureMatrix,
    part: Option<u8>,
    mode: DecodeMode,
) -> Result<Vec<PredictionRecord>> {
    split
        .records
        .iter()
        .filter(|r| part.is_none_or(|p| r.part == p))
        .map(|r| {
            let chunks = r
                .chunk_rows
                .iter()
                .map(|&i| features.row_f64(i))
                .collect::<Result<Vec<_>>>()?;
            predict_response(model, &r.response_id, r.part, &chunks, mode)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubmissionScore {
    pub submission_id: String,
    pub part_scores: BTreeMap<u8, f64>,
    /// Mean of the present part scores.
    pub overall: f64,
}

/// Part score = mean of its response scores; overall = mean over the parts
/// present (so a four-part test averages four parts).
pub fn score_submission(submission_id: &str, parts: &BTreeMap<u8, Vec<f64>>) -> Result<SubmissionScore> {
    if parts.is_empty() {
        return Err(Error::Domain(format!("submission {submission_id} has no parts")));
    }
    let mut part_scores = BTreeMap::new();
    for (&part, scores) in parts {
        let mean = ordered_mean(scores).ok_or_else(|| {
            Error::Domain(format!("submission {submission_id} part {part} has no responses"))
        })?;
        part_scores.insert(part, mean);
    }
    let values: Vec<f64> = part_scores.values().copied().collect();
    let overall = ordered_mean(&values).expect("non-empty");
    Ok(SubmissionScore {
        submission_id: submission_id.to_string(),
        part_scores,
        overall,
    })
}

/// Externally produced class distributions for one response.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestedResponse {
    pub response_id: String,
    pub part: u8,
    /// One distribution per chunk, ordered by chunk index.
    pub dists: Vec<ClassDistribution>,
}

/// Reads raw logits (`response_id \t part \t chunk \t z1,...,zC`), softmaxes
/// each line, and groups chunks per response in order of first appearance.
pub fn ingest_logits(path: &Path, scale: &GradeScale) -> Result<Vec<IngestedResponse>> {
    ingest_logits_str(&read_text(path)?, path, scale)
}

pub fn ingest_logits_str(text: &str, path: &Path, scale: &GradeScale) -> Result<Vec<IngestedResponse>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, (u8, BTreeMap<usize, ClassDistribution>)> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let err = |m: String| Error::parse(path, lineno, m);
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 tab-separated fields, found {}", fields.len())));
        }
        let rid = fields[0];
        let part: u8 = fields[1]
            .parse()
            .ok()
            .filter(|p| (MIN_PART..=MAX_PART).contains(p))
            .ok_or_else(|| err(format!("invalid part {:?}", fields[1])))?;
        let chunk: usize = fields[2]
            .parse()
            .map_err(|_| err(format!("invalid chunk index {:?}", fields[2])))?;
        let logits = fields[3]
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| err(format!("invalid logit {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if logits.len() != scale.num_classes() {
            return Err(err(format!(
                "expected {} logits, found {}",
                scale.num_classes(),
                logits.len()
            )));
        }
        let dist = softmax(&logits).map_err(|e| err(e.to_string()))?;
        let entry = groups.entry(rid.to_string()).or_insert_with(|| {
            order.push(rid.to_string());
            (part, BTreeMap::new())
        });
        if entry.0 != part {
            return Err(err(format!("response {rid} listed under parts {} and {part}", entry.0)));
        }
        if entry.1.insert(chunk, dist).is_some() {
            return Err(err(format!("duplicate chunk {chunk} for response {rid}")));
        }
    }
    Ok(order
        .into_iter()
        .map(|rid| {
            let (part, chunks) = groups.remove(&rid).expect("grouped");
            IngestedResponse {
                response_id: rid,
                part,
                dists: chunks.into_values().collect(),
            }
        })
        .collect())
}

/// Decodes ingested distributions into prediction records.
pub fn predict_ingested(
    responses: &[IngestedResponse],
    mode: DecodeMode,
    scale: &GradeScale,
) -> Result<Vec<PredictionRecord>> {
    responses
        .iter()
        .map(|r| {
            let scores = decode_dists(&r.dists, mode, scale)?;
            PredictionRecord::from_chunks(&r.response_id, r.part, mode, scores, Some(r.dists.clone()))
        })
        .collect()
}
