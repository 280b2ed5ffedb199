//! Deterministic mini-batch training: AdamW, warmup + cosine schedule, and
//! per-epoch seeded shuffles.
//!
//! Every chunk is an independent example carrying its response's reference
//! score. The loop is single-threaded and sums in a fixed order, so equal
//! (data, config, seed) always yield a bit-identical model.

mod schedule;

pub use schedule::{lr_at, warmup_steps};

use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::data::{DatasetSplit, SplitName};
use crate::error::{Error, Result};
use crate::model::{backward, BatchGradient, Example, GraderModel, HeadKind};
use crate::rng;
use crate::scale::GradeScale;
use crate::storage::FeatureMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub head: HeadKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub warmup_fraction: f64,
    pub hidden_dim: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            head: HeadKind::Fa,
            epochs: 2,
            batch_size: 64,
            base_lr: 1e-4,
            weight_decay: 0.01,
            warmup_fraction: 0.1,
            hidden_dim: 32,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return bad(format!("base_lr must be positive, got {}", self.base_lr));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad(format!("warmup_fraction must lie in [0, 1), got {}", self.warmup_fraction));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps must be positive".into());
        }
        Ok(())
    }

    /// Key/value echo stored in model files and run manifests.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        [
            ("head", self.head.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", format!("{:?}", self.base_lr)),
            ("weight_decay", format!("{:?}", self.weight_decay)),
            ("warmup_fraction", format!("{:?}", self.warmup_fraction)),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("seed", self.seed.to_string()),
            ("adam_beta1", format!("{:?}", self.beta1)),
            ("adam_beta2", format!("{:?}", self.beta2)),
            ("adam_eps", format!("{:?}", self.eps)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Seeded Fisher-Yates permutation of `0..n` for one epoch.
pub fn shuffle_epoch(n: usize, epoch: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut r = rng::stream(seed, rng::STREAM_SHUFFLE + epoch as u64);
    perm.shuffle(&mut r);
    perm
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<StepLog>,
    /// Example-weighted mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainLog {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# kind\tindex\tepoch\tlr\tloss\n");
        for s in &self.steps {
            let _ = writeln!(out, "step\t{}\t{}\t{:?}\t{:?}", s.step, s.epoch, s.lr, s.loss);
        }
        for (e, l) in self.epoch_losses.iter().enumerate() {
            let _ = writeln!(out, "epoch\t{e}\t{e}\t-\t{l:?}");
        }
        out
    }
}

/// Adam with decoupled weight decay.
struct AdamW {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    t: i32,
}

impl AdamW {
    fn new(model: &GraderModel) -> Self {
        let zeros: Vec<Vec<f64>> = model.params().iter().map(|p| vec![0.0; p.len()]).collect();
        AdamW {
            first: zeros.clone(),
            second: zeros,
            t: 0,
        }
    }

    fn step(&mut self, model: &mut GraderModel, grad: &BatchGradient, lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (((p, g), m), v) in model
            .params_mut()
            .into_iter()
            .zip(grad.params())
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * p[i]);
            }
        }
    }
}

/// Collects (features, reference) pairs at chunk level.
fn chunk_examples(split: &DatasetSplit, features: &FeatureMatrix) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut xs = Vec::new();
    let mut refs = Vec::new();
    for rec in &split.records {
        let r = rec.ref_score.ok_or_else(|| {
            Error::Domain(format!("training record {} has no reference score", rec.response_id))
        })?;
        if rec.chunk_rows.is_empty() {
            return Err(Error::Domain(format!("training record {} has no chunks", rec.response_id)));
        }
        for &row in &rec.chunk_rows {
            xs.push(features.row_f64(row)?);
            refs.push(r);
        }
    }
    Ok((xs, refs))
}

/// Fits a fresh model on every chunk of `split`.
pub fn train(
    split: &DatasetSplit,
    features: &FeatureMatrix,
    config: &TrainConfig,
    scale: &GradeScale,
) -> Result<(GraderModel, TrainLog)> {
    config.validate()?;
    if split.name == SplitName::Test {
        return Err(Error::Domain("refusing to train on the test split".into()));
    }
    let (xs, refs) = chunk_examples(split, features)?;
    if xs.is_empty() {
        return Err(Error::Domain(format!("split {} has no training records", split.name)));
    }
    if let Some(r) = refs.iter().find(|r| !scale.on_grid(**r)) {
        return Err(Error::Domain(format!("reference {r} is off the grade grid")));
    }

    let mut init_rng = rng::stream(config.seed, rng::STREAM_INIT);
    let mut model = GraderModel::init(
        config.head,
        features.dim(),
        config.hidden_dim,
        scale.clone(),
        &mut init_rng,
    )?;
    let mut opt = AdamW::new(&model);

    let n = xs.len();
    let per_epoch = n.div_ceil(config.batch_size);
    let total = per_epoch * config.epochs;
    let mut log = TrainLog::default();
    let mut step = 0;
    for epoch in 0..config.epochs {
        let perm = shuffle_epoch(n, epoch, config.seed);
        let mut weighted = 0.0;
        for idx in perm.chunks(config.batch_size) {
            let batch: Vec<Example<'_>> = idx
                .iter()
                .map(|&i| Example {
                    features: &xs[i],
                    reference: refs[i],
                })
                .collect();
            let lr = lr_at(step, total, config)?;
            let grad = backward(&model, &batch)?;
            if !grad.loss.is_finite() {
                return Err(Error::Domain(format!("non-finite loss at step {step}")));
            }
            opt.step(&mut model, &grad, lr, config);
            log.steps.push(StepLog {
                step,
                epoch,
                lr,
                loss: grad.loss,
            });
            weighted += grad.loss * batch.len() as f64;
            step += 1;
        }
        log.epoch_losses.push(weighted / n as f64);
    }
    model.validate()?;
    model.provenance = config.to_pairs();
    model.provenance.push(("train_examples".into(), n.to_string()));
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ResponseRecord;

    #[test]
    fn shuffle_examples() {
        assert_eq!(shuffle_epoch(1, 0, 5), vec![0]);
        assert_eq!(shuffle_epoch(50, 3, 9), shuffle_epoch(50, 3, 9));
        assert_ne!(shuffle_epoch(50, 3, 9), shuffle_epoch(50, 4, 9));
        let mut p = shuffle_epoch(1000, 0, 1);
        p.sort_unstable();
        assert_eq!(p, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { base_lr: 0.0, ..Default::default() },
            TrainConfig { warmup_fraction: 1.0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    fn tiny_split(name: SplitName, with_refs: bool) -> (DatasetSplit, FeatureMatrix) {
        let rows: Vec<Vec<f32>> = (0..20).map(|i| vec![(i % 11) as f32 / 5.0 - 1.0, 0.5]).collect();
        let feats = FeatureMatrix::from_rows(2, &rows).unwrap();
        let records = (0..20)
            .map(|i| ResponseRecord {
                submission_id: format!("s{i}"),
                part: 5,
                response_id: format!("s{i}-p5"),
                chunk_rows: vec![i],
                ref_score: with_refs.then_some(1.0 + 0.5 * (i % 11) as f64),
            })
            .collect();
        (DatasetSplit { name, records, feature_file: "x.slaf".into() }, feats)
    }

    #[test]
    fn train_errors() {
        let scale = GradeScale::default();
        let cfg = TrainConfig::default();
        let (s, f) = tiny_split(SplitName::Test, true);
        assert!(train(&s, &f, &cfg, &scale).is_err());
        let (s, f) = tiny_split(SplitName::Train, false);
        assert!(train(&s, &f, &cfg, &scale).unwrap_err().to_string().contains("no reference"));
        let (mut s, f) = tiny_split(SplitName::Train, true);
        s.records.clear();
        assert!(train(&s, &f, &cfg, &scale).is_err());
    }

    #[test]
    fn loss_descends_and_log_has_one_entry_per_step() {
        let scale = GradeScale::default();
        let (s, f) = tiny_split(SplitName::Train, true);
        let cfg = TrainConfig { epochs: 30, batch_size: 4, base_lr: 0.05, hidden_dim: 4, ..Default::default() };
        let (_, log) = train(&s, &f, &cfg, &scale).unwrap();
        assert_eq!(log.steps.len(), 30 * 5);
        assert_eq!(log.epoch_losses.len(), 30);
        assert!(log.epoch_losses.last().unwrap() < &log.epoch_losses[0]);
        assert!(log.to_tsv().lines().count() == 1 + 150 + 30);
    }

    #[test]
    fn same_seed_same_model() {
        let scale = GradeScale::default();
        let (s, f) = tiny_split(SplitName::Train, true);
        let cfg = TrainConfig { head: HeadKind::Ce, batch_size: 3, hidden_dim: 3, seed: 4, ..Default::default() };
        let a = train(&s, &f, &cfg, &scale).unwrap();
        let b = train(&s, &f, &cfg, &scale).unwrap();
        assert_eq!(a, b);
        let c = train(&s, &f, &TrainConfig { seed: 5, ..cfg }, &scale).unwrap();
        assert_ne!(a.0, c.0);
    }
}
