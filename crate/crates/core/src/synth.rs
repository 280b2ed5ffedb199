//! Seeded synthetic corpus with controllable signal-to-noise.
//!
//! Each submission has a latent proficiency drawn uniformly from the grade
//! grid. Every part `p` carries it along its own signal direction
//! `v_p = normalize(shared_weight * u_shared + part_weight * u_p)`, so a
//! grader trained on one part transfers to another, imperfectly. Chunk
//! features are `t * v_p + feature_noise * N(0, I)` with `t` the latent
//! rescaled to `[-1, 1]`; references are the latent plus annotator noise,
//! snapped to the grid.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{DatasetSplit, LoadedSplit, ResponseRecord, SplitName, MAX_PART, MIN_PART};
use crate::error::{Error, Result};
use crate::rng;
use crate::scale::GradeScale;
use crate::storage::{write_features, write_manifest, FeatureMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub train_submissions: usize,
    pub dev_submissions: usize,
    pub test_submissions: usize,
    pub parts: Vec<u8>,
    /// Chunks per response for parts listed here; every other part has one.
    pub chunks_per_part: BTreeMap<u8, usize>,
    pub dim: usize,
    pub shared_weight: f64,
    pub part_weight: f64,
    pub feature_noise: f64,
    pub annotator_noise: f64,
    pub seed: u64,
    /// Seed for the signal directions; defaults to `seed`. Two corpora with
    /// equal direction seeds but different data seeds behave like two tasks
    /// that share their signal.
    pub direction_seed: Option<u64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            train_submissions: 2000,
            dev_submissions: 400,
            test_submissions: 400,
            parts: vec![1, 2, 3, 4, 5],
            chunks_per_part: [(3, 2), (4, 2)].into(),
            dim: 16,
            shared_weight: 0.8,
            part_weight: 0.2,
            feature_noise: 0.1,
            annotator_noise: 0.25,
            seed: 0,
            direction_seed: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.dim < 2 {
            return bad(format!("dim must be at least 2, got {}", self.dim));
        }
        if !(self.shared_weight.is_finite() && self.part_weight.is_finite())
            || self.shared_weight.powi(2) + self.part_weight.powi(2) <= 0.0
        {
            return bad("shared_weight and part_weight cannot both be zero".into());
        }
        if !(self.feature_noise >= 0.0 && self.annotator_noise >= 0.0)
            || !self.feature_noise.is_finite()
            || !self.annotator_noise.is_finite()
        {
            return bad("noise levels must be finite and non-negative".into());
        }
        if self.parts.is_empty() {
            return bad("at least one part is required".into());
        }
        for (i, p) in self.parts.iter().enumerate() {
            if !(MIN_PART..=MAX_PART).contains(p) || self.parts[..i].contains(p) {
                return bad(format!("invalid or repeated part {p}"));
            }
        }
        if self.chunks_per_part.values().any(|c| *c == 0) {
            return bad("chunks per part must be at least 1".into());
        }
        Ok(())
    }

    pub fn chunks_for(&self, part: u8) -> usize {
        self.chunks_per_part.get(&part).copied().unwrap_or(1)
    }

    pub fn submissions(&self, split: SplitName) -> usize {
        match split {
            SplitName::Train => self.train_submissions,
            SplitName::Dev => self.dev_submissions,
            SplitName::Test => self.test_submissions,
        }
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let parts: Vec<String> = self.parts.iter().map(|p| p.to_string()).collect();
        let chunks: Vec<String> = self.chunks_per_part.iter().map(|(p, c)| format!("{p}:{c}")).collect();
        let mut pairs = vec![
            ("train_submissions", self.train_submissions.to_string()),
            ("dev_submissions", self.dev_submissions.to_string()),
            ("test_submissions", self.test_submissions.to_string()),
            ("parts", parts.join(",")),
            ("chunks_per_part", chunks.join(",")),
            ("dim", self.dim.to_string()),
            ("shared_weight", format!("{:?}", self.shared_weight)),
            ("part_weight", format!("{:?}", self.part_weight)),
            ("feature_noise", format!("{:?}", self.feature_noise)),
            ("annotator_noise", format!("{:?}", self.annotator_noise)),
            ("seed", self.seed.to_string()),
        ];
        if let Some(d) = self.direction_seed {
            pairs.push(("direction_seed", d.to_string()));
        }
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

/// A generated corpus: one loaded split per split name.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub config: SynthConfig,
    pub train: LoadedSplit,
    pub dev: LoadedSplit,
    pub test: LoadedSplit,
    /// Signal direction per part, indexed by part.
    pub directions: BTreeMap<u8, Vec<f64>>,
}

impl Corpus {
    pub fn split(&self, name: SplitName) -> &LoadedSplit {
        match name {
            SplitName::Train => &self.train,
            SplitName::Dev => &self.dev,
            SplitName::Test => &self.test,
        }
    }

    /// Writes `<split>.tsv` and `<split>.slaf` for every split plus a
    /// `corpus.txt` summary into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for name in SplitName::ALL {
            let loaded = self.split(name);
            let mut split = loaded.split.clone();
            split.feature_file = dir.join(format!("{name}.slaf"));
            write_features(&loaded.features, &split.feature_file)?;
            write_manifest(&split, &dir.join(format!("{name}.tsv")))?;
        }
        crate::storage::write_text(&dir.join("corpus.txt"), &describe(&self.config))
    }
}

fn unit_gaussian<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Part signal directions. All five parts are always drawn, in order, so a
/// part's direction does not depend on which parts are generated.
pub fn signal_directions(config: &SynthConfig) -> BTreeMap<u8, Vec<f64>> {
    let mut r = rng::stream(config.direction_seed.unwrap_or(config.seed), rng::STREAM_SYNTH_DIRECTIONS);
    let shared = unit_gaussian(&mut r, config.dim);
    (MIN_PART..=MAX_PART)
        .map(|p| {
            let own = unit_gaussian(&mut r, config.dim);
            let mixed: Vec<f64> = shared
                .iter()
                .zip(&own)
                .map(|(s, o)| config.shared_weight * s + config.part_weight * o)
                .collect();
            let norm = mixed.iter().map(|x| x * x).sum::<f64>().sqrt();
            // shared and own are independent draws, so a zero norm needs
            // them exactly opposite with equal weights
            let dir = if norm > 1e-12 {
                mixed.into_iter().map(|x| x / norm).collect()
            } else {
                shared.clone()
            };
            (p, dir)
        })
        .collect()
}

fn generate_split(
    config: &SynthConfig,
    name: SplitName,
    index: u64,
    directions: &BTreeMap<u8, Vec<f64>>,
    scale: &GradeScale,
) -> Result<LoadedSplit> {
    let mut r = rng::stream(config.seed, rng::STREAM_SYNTH_SPLIT + index);
    let grid_points = ((scale.max_score() - scale.min_score()) / scale.grid_step()).round() as u32;
    let mid = 0.5 * (scale.max_score() + scale.min_score());
    let half_range = 0.5 * (scale.max_score() - scale.min_score());

    let mut records = Vec::new();
    let mut rows: Vec<f32> = Vec::new();
    let mut row_count = 0usize;
    for s in 0..config.submissions(name) {
        let theta = scale.min_score() + scale.grid_step() * r.random_range(0..=grid_points) as f64;
        let t = (theta - mid) / half_range;
        let submission_id = format!("{name}-{s:05}");
        for &part in &config.parts {
            let noise: f64 = r.sample(StandardNormal);
            let reference = scale.snap_to_grid(theta + config.annotator_noise * noise);
            let dir = &directions[&part];
            let mut chunk_rows = Vec::new();
            for _ in 0..config.chunks_for(part) {
                for d in dir {
                    let eps: f64 = r.sample(StandardNormal);
                    rows.push((t * d + config.feature_noise * eps) as f32);
                }
                chunk_rows.push(row_count);
                row_count += 1;
            }
            records.push(ResponseRecord {
                submission_id: submission_id.clone(),
                part,
                response_id: format!("{submission_id}-p{part}"),
                chunk_rows,
                ref_score: Some(reference),
            });
        }
    }
    Ok(LoadedSplit {
        split: DatasetSplit {
            name,
            records,
            feature_file: format!("{name}.slaf").into(),
        },
        features: FeatureMatrix::new(row_count, config.dim, rows)?,
    })
}

/// Generates all three splits on the default grade scale.
pub fn generate(config: &SynthConfig) -> Result<Corpus> {
    config.validate()?;
    let scale = GradeScale::default();
    let directions = signal_directions(config);
    let mut splits = SplitName::ALL
        .iter()
        .enumerate()
        .map(|(i, &name)| generate_split(config, name, i as u64, &directions, &scale))
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    Ok(Corpus {
        config: config.clone(),
        train: splits.next().expect("train"),
        dev: splits.next().expect("dev"),
        test: splits.next().expect("test"),
        directions,
    })
}

/// Human-readable summary of what [`generate`] will produce.
pub fn describe(config: &SynthConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "synthetic corpus (seed {})", config.seed);
    let _ = writeln!(out, "feature dim: {}", config.dim);
    let _ = writeln!(
        out,
        "signal: shared weight {}, part weight {}; noise: feature {}, annotator {}",
        config.shared_weight, config.part_weight, config.feature_noise, config.annotator_noise
    );
    let _ = writeln!(out, "parts: {}", config.parts.len());
    for &p in &config.parts {
        let _ = writeln!(out, "  part {p}: {} chunk(s) per response", config.chunks_for(p));
    }
    let chunks_per_sub: usize = config.parts.iter().map(|p| config.chunks_for(*p)).sum();
    for name in SplitName::ALL {
        let n = config.submissions(name);
        if n == 0 {
            let _ = writeln!(out, "{name}: 0 submissions (warning: empty split)");
        } else {
            let _ = writeln!(
                out,
                "{name}: {n} submissions, {} responses, {} chunks",
                n * config.parts.len(),
                n * chunks_per_sub
            );
        }
    }
    out
}
