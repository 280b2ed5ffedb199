use std::collections::{BTreeMap, HashMap};

use super::calibration::{fit_calibration, CalibrationSet};
use super::report::{format_fixed3, Granularity, MetricReport};
use crate::data::{DatasetSplit, LoadedSplit, SplitName};
use crate::decode::{predict_split, score_submission, DecodeMode};
use crate::error::{Error, Result};
use crate::model::{GraderModel, HeadKind};
use crate::scale::GradeScale;
use crate::storage::PredictionRow;
use crate::trainer::{train, TrainConfig};

/// A response prediction joined with its manifest record.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredResponse {
    pub submission_id: String,
    pub part: u8,
    pub response_id: String,
    pub pred: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinedPredictions {
    pub split: SplitName,
    pub rows: Vec<ScoredResponse>,
}

impl JoinedPredictions {
    pub fn parts(&self) -> Vec<u8> {
        let mut p: Vec<u8> = self.rows.iter().map(|r| r.part).collect();
        p.sort_unstable();
        p.dedup();
        p
    }
}

/// Matches prediction rows to manifest records by response id. Every
/// prediction must name a known response with a reference, and every
/// record of a predicted part must have a prediction. Output follows
/// manifest order.
pub fn join_predictions(rows: &[PredictionRow], split: &DatasetSplit) -> Result<JoinedPredictions> {
    let records: HashMap<&str, usize> = split
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.response_id.as_str(), i))
        .collect();
    let mut by_record: Vec<Option<f64>> = vec![None; split.records.len()];
    for row in rows {
        let &i = records.get(row.response_id.as_str()).ok_or_else(|| {
            Error::Domain(format!(
                "prediction for unknown response id {} (not in {} manifest)",
                row.response_id, split.name
            ))
        })?;
        let rec = &split.records[i];
        if rec.part != row.part {
            return Err(Error::Domain(format!(
                "response id {}: prediction says part {}, manifest says part {}",
                row.response_id, row.part, rec.part
            )));
        }
        if by_record[i].replace(row.score).is_some() {
            return Err(Error::Domain(format!("response id {} predicted twice", row.response_id)));
        }
    }
    let predicted_parts: Vec<u8> = {
        let mut p: Vec<u8> = rows.iter().map(|r| r.part).collect();
        p.sort_unstable();
        p.dedup();
        p
    };
    let mut out = Vec::with_capacity(rows.len());
    for (rec, pred) in split.records.iter().zip(by_record) {
        if predicted_parts.binary_search(&rec.part).is_err() {
            continue;
        }
        let pred = pred.ok_or_else(|| {
            Error::Domain(format!("response id {} has no prediction", rec.response_id))
        })?;
        let reference = rec.ref_score.ok_or_else(|| {
            Error::Domain(format!("response id {} has no reference score", rec.response_id))
        })?;
        out.push(ScoredResponse {
            submission_id: rec.submission_id.clone(),
            part: rec.part,
            response_id: rec.response_id.clone(),
            pred,
            reference,
        });
    }
    Ok(JoinedPredictions { split: split.name, rows: out })
}

/// Predicts one part (or all parts) of a loaded split and joins the
/// result with its references, skipping the file round trip.
pub fn predict_joined(
    model: &GraderModel,
    data: &LoadedSplit,
    part: Option<u8>,
    mode: DecodeMode,
) -> Result<JoinedPredictions> {
    let records = predict_split(model, &data.split, &data.features, part, mode)?;
    let rows = records.iter().map(|r| r.to_row()).collect::<Result<Vec<_>>>()?;
    join_predictions(&rows, &data.split)
}

/// Fits one affine map per part from that part's responses.
pub fn fit_part_calibration(joined: &JoinedPredictions) -> Result<CalibrationSet> {
    if joined.split == SplitName::Test {
        return Err(Error::Domain("calibration must not be fitted on the test split".into()));
    }
    let mut set = CalibrationSet::default();
    for part in joined.parts() {
        let (preds, refs): (Vec<f64>, Vec<f64>) = joined
            .rows
            .iter()
            .filter(|r| r.part == part)
            .map(|r| (r.pred, r.reference))
            .unzip();
        set.insert(part, fit_calibration(&preds, &refs, joined.split.as_str())?);
    }
    Ok(set)
}

/// Calibrated prediction and reference pairs at the requested level,
/// tagged with an id (response id, `submission/part`, or submission id).
/// Parts and submissions are means of their members.
pub fn aggregate(
    joined: &JoinedPredictions,
    calibration: Option<&CalibrationSet>,
    granularity: Granularity,
) -> Result<Vec<(String, f64, f64)>> {
    if let Some(cal) = calibration {
        if let Some((part, p)) = cal.iter().find(|(_, p)| p.fitted_on == SplitName::Test.as_str()) {
            return Err(Error::Domain(format!(
                "calibration for part {part} was fitted on {}; refusing to use it",
                p.fitted_on
            )));
        }
    }
    let mut calibrated = Vec::with_capacity(joined.rows.len());
    for r in &joined.rows {
        let p = match calibration {
            Some(cal) => cal.apply(r.part, r.pred)?,
            None => r.pred,
        };
        calibrated.push((r, p));
    }
    if granularity == Granularity::Response {
        return Ok(calibrated
            .into_iter()
            .map(|(r, p)| (r.response_id.clone(), p, r.reference))
            .collect());
    }

    // submission -> part -> (preds, refs), first-appearance order of submissions
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, BTreeMap<u8, (Vec<f64>, Vec<f64>)>> = HashMap::new();
    for (r, p) in &calibrated {
        let entry = groups.entry(r.submission_id.as_str()).or_insert_with(|| {
            order.push(r.submission_id.as_str());
            BTreeMap::new()
        });
        let slot = entry.entry(r.part).or_default();
        slot.0.push(*p);
        slot.1.push(r.reference);
    }
    let mut out = Vec::new();
    for sid in order {
        let parts = &groups[sid];
        let preds: BTreeMap<u8, Vec<f64>> = parts.iter().map(|(k, v)| (*k, v.0.clone())).collect();
        let refs: BTreeMap<u8, Vec<f64>> = parts.iter().map(|(k, v)| (*k, v.1.clone())).collect();
        let sp = score_submission(sid, &preds)?;
        let sr = score_submission(sid, &refs)?;
        match granularity {
            Granularity::Part => {
                for (part, p) in &sp.part_scores {
                    out.push((format!("{sid}/{part}"), *p, sr.part_scores[part]));
                }
            }
            Granularity::Submission => out.push((sid.to_string(), sp.overall, sr.overall)),
            Granularity::Response => unreachable!(),
        }
    }
    Ok(out)
}

/// Applies calibration (if any), aggregates, and computes RMSE, PCC and SRC.
pub fn evaluate(
    joined: &JoinedPredictions,
    calibration: Option<&CalibrationSet>,
    granularity: Granularity,
) -> Result<MetricReport> {
    let pairs = aggregate(joined, calibration, granularity)?;
    let (preds, refs): (Vec<f64>, Vec<f64>) = pairs.into_iter().map(|(_, p, r)| (p, r)).unzip();
    MetricReport::compute(&preds, &refs, granularity)
}

/// Dev and test data for one part.
#[derive(Debug, Clone, Copy)]
pub struct PartData<'a> {
    pub dev: Option<&'a LoadedSplit>,
    pub test: &'a LoadedSplit,
}

fn resolve_mode(model: &GraderModel, mode: Option<DecodeMode>) -> DecodeMode {
    mode.unwrap_or_else(|| DecodeMode::default_for(model.head))
}

/// Test predictions for one part, calibrated on the same part's dev split.
fn calibrated_part(
    model: &GraderModel,
    part: u8,
    data: &PartData<'_>,
    mode: Option<DecodeMode>,
) -> Result<(JoinedPredictions, CalibrationSet)> {
    let dev = data
        .dev
        .ok_or_else(|| Error::Domain(format!("part {part} has no dev split for calibration")))?;
    let mode = resolve_mode(model, mode);
    let dev_joined = predict_joined(model, dev, Some(part), mode)?;
    let cal = fit_part_calibration(&dev_joined)?;
    let test_joined = predict_joined(model, data.test, Some(part), mode)?;
    Ok((test_joined, cal))
}

/// Part-level PCC of every model on every part's test data.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossPartMatrix {
    /// Parts the models were trained on (rows).
    pub model_parts: Vec<u8>,
    /// Parts evaluated (columns).
    pub data_parts: Vec<u8>,
    pub pcc: Vec<Vec<f64>>,
}

impl CrossPartMatrix {
    pub fn get(&self, model_part: u8, data_part: u8) -> Option<f64> {
        let i = self.model_parts.iter().position(|&p| p == model_part)?;
        let j = self.data_parts.iter().position(|&p| p == data_part)?;
        Some(self.pcc[i][j])
    }

    fn split_entries(&self) -> (Vec<f64>, Vec<f64>) {
        let mut diag = Vec::new();
        let mut off = Vec::new();
        for (i, &mp) in self.model_parts.iter().enumerate() {
            for (j, &dp) in self.data_parts.iter().enumerate() {
                if mp == dp {
                    diag.push(self.pcc[i][j]);
                } else {
                    off.push(self.pcc[i][j]);
                }
            }
        }
        (diag, off)
    }

    /// Mean of matched entries, `None` if there are none.
    pub fn diagonal_mean(&self) -> Option<f64> {
        crate::numeric::ordered_mean(&self.split_entries().0)
    }

    /// Mean of transfer entries, `None` if there are none.
    pub fn off_diagonal_mean(&self) -> Option<f64> {
        crate::numeric::ordered_mean(&self.split_entries().1)
    }

    pub fn render(&self) -> String {
        let mut out = String::from("train\\test");
        for p in &self.data_parts {
            out.push_str(&format!("  {:>6}", format!("P{p}")));
        }
        out.push('\n');
        for (i, mp) in self.model_parts.iter().enumerate() {
            out.push_str(&format!("{:<10}", format!("P{mp}")));
            for v in &self.pcc[i] {
                out.push_str(&format!("  {:>6}", format_fixed3(*v)));
            }
            out.push('\n');
        }
        out
    }
}

/// Entry (i, j): model trained on part i, calibrated on part j's dev
/// predictions, scored by part-level PCC on part j's test data.
pub fn cross_part_matrix(
    models: &BTreeMap<u8, GraderModel>,
    datasets: &BTreeMap<u8, PartData<'_>>,
    mode: Option<DecodeMode>,
) -> Result<CrossPartMatrix> {
    if models.is_empty() || datasets.is_empty() {
        return Err(Error::Domain("cross-part evaluation needs at least one model and one part".into()));
    }
    let model_parts: Vec<u8> = models.keys().copied().collect();
    let data_parts: Vec<u8> = datasets.keys().copied().collect();
    let mut pcc = Vec::with_capacity(model_parts.len());
    for model in models.values() {
        let mut row = Vec::with_capacity(data_parts.len());
        for (&part, data) in datasets {
            let (joined, cal) = calibrated_part(model, part, data, mode)?;
            row.push(evaluate(&joined, Some(&cal), Granularity::Part)?.pcc);
        }
        pcc.push(row);
    }
    Ok(CrossPartMatrix { model_parts, data_parts, pcc })
}

/// Scores a subset of parts with one model per part, each calibrated on
/// its own part's dev data, and reports submission-level metrics over the
/// mean of the subset's part scores.
pub fn cross_task_eval(
    models: &BTreeMap<u8, GraderModel>,
    datasets: &BTreeMap<u8, PartData<'_>>,
    parts: &[u8],
    mode: Option<DecodeMode>,
) -> Result<MetricReport> {
    if parts.is_empty() {
        return Err(Error::Domain("empty part subset".into()));
    }
    let mut rows = Vec::new();
    let mut cal = CalibrationSet::default();
    for &part in parts {
        let model = models
            .get(&part)
            .ok_or_else(|| Error::Domain(format!("no model for part {part}")))?;
        let data = datasets
            .get(&part)
            .ok_or_else(|| Error::Domain(format!("no data for part {part}")))?;
        let (joined, part_cal) = calibrated_part(model, part, data, mode)?;
        rows.extend(joined.rows);
        for (p, params) in part_cal.iter() {
            cal.insert(p, params.clone());
        }
    }
    let joined = JoinedPredictions { split: SplitName::Test, rows };
    evaluate(&joined, Some(&cal), Granularity::Submission)
}

/// Trains one model per part with the same config.
pub fn train_per_part(
    train_data: &LoadedSplit,
    parts: &[u8],
    config: &TrainConfig,
    scale: &GradeScale,
) -> Result<BTreeMap<u8, GraderModel>> {
    let mut out = BTreeMap::new();
    for &part in parts {
        let split = train_data.split.with_part(part);
        let (model, _) = train(&split, &train_data.features, config, scale)?;
        out.insert(part, model);
    }
    Ok(out)
}

/// One line of a train/decode comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemRow {
    pub head: HeadKind,
    pub mode: DecodeMode,
    pub report: MetricReport,
}

impl SystemRow {
    pub fn label(&self) -> String {
        match self.head {
            HeadKind::Reg => "reg".to_string(),
            h => format!("{h}+{}", self.mode),
        }
    }
}

/// Trains CE, FA and REG heads on one part and reports every compatible
/// decoding on test data, each calibrated on dev. `config.head` is ignored.
pub fn train_decode_comparison(
    train_data: &LoadedSplit,
    dev: &LoadedSplit,
    test: &LoadedSplit,
    part: u8,
    config: &TrainConfig,
    scale: &GradeScale,
) -> Result<Vec<SystemRow>> {
    let data = PartData { dev: Some(dev), test };
    let mut out = Vec::new();
    for head in [HeadKind::Ce, HeadKind::Fa, HeadKind::Reg] {
        let cfg = TrainConfig { head, ..config.clone() };
        let models = train_per_part(train_data, &[part], &cfg, scale)?;
        let model = &models[&part];
        let modes: &[DecodeMode] = match head {
            HeadKind::Reg => &[DecodeMode::Reg],
            _ => &[DecodeMode::Hard, DecodeMode::Soft],
        };
        for &mode in modes {
            let (joined, cal) = calibrated_part(model, part, &data, Some(mode))?;
            let report = evaluate(&joined, Some(&cal), Granularity::Part)?;
            out.push(SystemRow { head, mode, report });
        }
    }
    Ok(out)
}
