use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Parser;

use super::run_manifest::{sha256_file, RunManifest, Settings};
use super::{
    CalibrateArgs, Cli, Command, EvalArgs, GradcheckArgs, IngestArgs, ModelSpecs, PartList, PredictArgs, SynthArgs,
    TrainArgs, XevalArgs, XtaskArgs,
};
use crate::data::LoadedSplit;
use crate::decode::{clamp_for_export, ingest_logits, predict_ingested, predict_split, DecodeMode};
use crate::error::{Error, Result};
use crate::eval::{
    aggregate, cross_part_matrix, cross_task_eval, evaluate, fit_part_calibration, format_fixed3, join_predictions,
    render_report, render_report_tsv, Granularity, PartData,
};
use crate::model::{random_audit, AuditConfig, GraderModel, HeadKind};
use crate::scale::GradeScale;
use crate::storage::{
    load_model, parse_manifest, read_calibration, read_predictions, save_model, write_calibration, write_predictions,
    write_text,
};
use crate::synth::{describe, generate, SynthConfig};
use crate::trainer::{train, TrainConfig};

const AUDIT_TOLERANCE: f64 = 1e-6;

struct Ctx<'a> {
    settings: Settings,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn input(&mut self, p: &Path) {
        if !self.inputs.iter().any(|q| q == p) {
            self.inputs.push(p.to_path_buf());
        }
    }

    fn output(&mut self, p: &Path) {
        self.outputs.push(p.to_path_buf());
    }

    fn progress(&mut self, msg: &str) {
        let _ = writeln!(self.stderr, "{msg}");
    }
}

/// `path` with `suffix` appended to its file name.
fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

pub(super) fn dispatch(cli: Cli, argv: Vec<String>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    if let Command::Replay(a) = &cli.command {
        return replay(&a.manifest, stdout, stderr);
    }
    let settings = match &cli.config {
        Some(p) => Settings::from_config_file(p)?,
        None => Settings::default(),
    };
    let mut ctx = Ctx {
        settings,
        seed: None,
        inputs: Vec::new(),
        outputs: Vec::new(),
        stdout,
        stderr,
    };
    if let Some(p) = &cli.config {
        ctx.input(p);
    }
    let (name, default_manifest) = match cli.command {
        Command::Synth(a) => ("synth", Some(synth(&mut ctx, a)?)),
        Command::Train(a) => ("train", Some(train_cmd(&mut ctx, a)?)),
        Command::Predict(a) => ("predict", Some(predict(&mut ctx, a)?)),
        Command::Calibrate(a) => ("calibrate", Some(calibrate(&mut ctx, a)?)),
        Command::Eval(a) => ("eval", Some(eval_cmd(&mut ctx, a)?)),
        Command::Xeval(a) => ("xeval", Some(xeval(&mut ctx, a)?)),
        Command::Xtask(a) => ("xtask", Some(xtask(&mut ctx, a)?)),
        Command::Gradcheck(a) => ("gradcheck", gradcheck(&mut ctx, a)?),
        Command::IngestLogits(a) => ("ingest-logits", Some(ingest(&mut ctx, a)?)),
        Command::Replay(_) => unreachable!("handled above"),
    };
    let Some(manifest_path) = cli.run_manifest.or(default_manifest) else {
        return Ok(());
    };
    let hash_all = |paths: &[PathBuf]| -> Result<Vec<(PathBuf, String)>> {
        paths.iter().map(|p| Ok((p.clone(), sha256_file(p)?))).collect()
    };
    let manifest = RunManifest {
        subcommand: name.to_string(),
        seed: ctx.seed,
        argv,
        config: ctx.settings.finish()?,
        inputs: hash_all(&ctx.inputs)?,
        outputs: hash_all(&ctx.outputs)?,
    };
    manifest.write(&manifest_path)?;
    ctx.progress(&format!("run manifest: {}", manifest_path.display()));
    Ok(())
}

fn replay(path: &Path, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let recorded = RunManifest::read(path)?;
    for (p, h) in &recorded.inputs {
        let now = sha256_file(p)?;
        if &now != h {
            return Err(Error::Domain(format!(
                "input {} changed since the recorded run (sha256 {now}, recorded {h})",
                p.display()
            )));
        }
    }
    let args = std::iter::once(OsString::from("sla-grader")).chain(recorded.argv.iter().map(OsString::from));
    let cli = Cli::try_parse_from(args)
        .map_err(|e| Error::Domain(format!("recorded arguments no longer parse: {}", e.render())))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(Error::Domain("a run manifest cannot record a replay".into()));
    }
    dispatch(cli, recorded.argv.clone(), stdout, stderr)?;
    for (p, h) in &recorded.outputs {
        let now = sha256_file(p)?;
        if &now != h {
            return Err(Error::Domain(format!(
                "output {} differs from the recorded run (sha256 {now}, recorded {h})",
                p.display()
            )));
        }
    }
    let _ = writeln!(stdout, "replay ok: {} output(s) identical", recorded.outputs.len());
    Ok(())
}

fn synth(ctx: &mut Ctx<'_>, a: SynthArgs) -> Result<PathBuf> {
    let d = SynthConfig::default();
    let s = &mut ctx.settings;
    let out = s.path("out", a.out)?;
    let config = SynthConfig {
        seed: s.get("seed", a.seed, d.seed)?,
        train_submissions: s.get("train-submissions", a.train_submissions, d.train_submissions)?,
        dev_submissions: s.get("dev-submissions", a.dev_submissions, d.dev_submissions)?,
        test_submissions: s.get("test-submissions", a.test_submissions, d.test_submissions)?,
        parts: s.get("parts", a.parts, PartList(d.parts.clone()))?.0,
        dim: s.get("dim", a.dim, d.dim)?,
        shared_weight: s.get("shared-weight", a.shared_weight, d.shared_weight)?,
        part_weight: s.get("part-weight", a.part_weight, d.part_weight)?,
        feature_noise: s.get("feature-noise", a.feature_noise, d.feature_noise)?,
        annotator_noise: s.get("annotator-noise", a.annotator_noise, d.annotator_noise)?,
        direction_seed: s.optional("direction-seed", a.direction_seed)?,
        chunks_per_part: d.chunks_per_part,
    };
    s.finish()?;
    ctx.seed = Some(config.seed);
    let corpus = generate(&config)?;
    corpus.write(&out)?;
    for name in ["train", "dev", "test"] {
        ctx.output(&out.join(format!("{name}.tsv")));
        ctx.output(&out.join(format!("{name}.slaf")));
    }
    ctx.output(&out.join("corpus.txt"));
    ctx.progress(describe(&config).trim_end());
    Ok(out.join("run.txt"))
}

fn train_cmd(ctx: &mut Ctx<'_>, a: TrainArgs) -> Result<PathBuf> {
    let d = TrainConfig::default();
    let s = &mut ctx.settings;
    let manifest = s.path("manifest", a.manifest)?;
    let part: u8 = s.required("part", a.part)?;
    let config = TrainConfig {
        head: s.get("head", a.head, d.head)?,
        epochs: s.get("epochs", a.epochs, d.epochs)?,
        batch_size: s.get("batch-size", a.batch_size, d.batch_size)?,
        base_lr: s.get("lr", a.lr, d.base_lr)?,
        weight_decay: s.get("weight-decay", a.weight_decay, d.weight_decay)?,
        warmup_fraction: s.get("warmup", a.warmup, d.warmup_fraction)?,
        hidden_dim: s.get("hidden", a.hidden, d.hidden_dim)?,
        seed: s.get("seed", a.seed, d.seed)?,
        ..d
    };
    let out = s.path("out", a.out)?;
    s.finish()?;
    ctx.seed = Some(config.seed);

    let scale = GradeScale::default();
    let data = LoadedSplit::load(&manifest, &scale)?;
    ctx.input(&manifest);
    ctx.input(&data.split.feature_file);
    let split = data.split.with_part(part);
    if split.records.is_empty() {
        return Err(Error::Domain(format!("{} has no records for part {part}", manifest.display())));
    }
    let (mut model, log) = train(&split, &data.features, &config, &scale)?;
    model.provenance.push(("part".into(), part.to_string()));
    for (epoch, loss) in log.epoch_losses.iter().enumerate() {
        ctx.progress(&format!("epoch {epoch}: mean loss {loss:.6}"));
    }
    save_model(&model, &out)?;
    let log_path = with_suffix(&out, ".log.tsv");
    write_text(&log_path, &log.to_tsv())?;
    ctx.output(&out);
    ctx.output(&log_path);
    Ok(with_suffix(&out, ".run"))
}

fn predict(ctx: &mut Ctx<'_>, a: PredictArgs) -> Result<PathBuf> {
    let s = &mut ctx.settings;
    let model_path = s.path("model", a.model)?;
    let manifest = s.path("manifest", a.manifest)?;
    let part_flag: Option<u8> = s.optional("part", a.part)?;
    let mode_flag: Option<DecodeMode> = s.optional("mode", a.mode)?;
    let out = s.path("out", a.out)?;
    s.finish()?;

    let model = load_model(&model_path)?;
    ctx.input(&model_path);
    let part = match part_flag {
        Some(p) => Some(p),
        None => model.provenance_value("part").and_then(|p| p.parse().ok()),
    };
    let mode = mode_flag.unwrap_or_else(|| DecodeMode::default_for(model.head));
    let data = LoadedSplit::load(&manifest, &model.scale)?;
    ctx.input(&manifest);
    ctx.input(&data.split.feature_file);
    let records = predict_split(&model, &data.split, &data.features, part, mode)?;
    if records.is_empty() {
        return Err(Error::Domain(format!("{} has no records to predict", manifest.display())));
    }
    let rows = records.iter().map(|r| r.to_row()).collect::<Result<Vec<_>>>()?;
    write_predictions(&rows, &out)?;
    ctx.output(&out);
    ctx.progress(&format!("predicted {} response(s) with {mode} decoding", rows.len()));
    Ok(with_suffix(&out, ".run"))
}

fn calibrate(ctx: &mut Ctx<'_>, a: CalibrateArgs) -> Result<PathBuf> {
    let s = &mut ctx.settings;
    let preds_path = s.path("predictions", a.predictions)?;
    let manifest = s.path("manifest", a.manifest)?;
    let out = s.path("out", a.out)?;
    s.finish()?;

    let rows = read_predictions(&preds_path)?;
    let split = parse_manifest(&manifest, &GradeScale::default())?;
    ctx.input(&preds_path);
    ctx.input(&manifest);
    let joined = join_predictions(&rows, &split)?;
    let set = fit_part_calibration(&joined)?;
    for (part, p) in set.iter() {
        let line = format!("part {part}: slope {:.6} intercept {:.6} (n={})", p.slope, p.intercept, p.n_fit);
        ctx.progress(&line);
    }
    write_calibration(&set, &out)?;
    ctx.output(&out);
    Ok(with_suffix(&out, ".run"))
}

fn eval_cmd(ctx: &mut Ctx<'_>, a: EvalArgs) -> Result<PathBuf> {
    let s = &mut ctx.settings;
    let preds_path = s.path("predictions", a.predictions)?;
    let manifest = s.path("manifest", a.manifest)?;
    let cal_path = s.optional_path("calibration", a.calibration)?;
    let granularity = s.get("granularity", a.granularity, Granularity::Response)?;
    let name = s.get("name", a.name, "system".to_string())?;
    let out = s.path("out", a.out)?;
    let scores_out = s.optional_path("scores-out", a.scores_out)?;
    s.finish()?;

    let scale = GradeScale::default();
    let rows = read_predictions(&preds_path)?;
    let split = parse_manifest(&manifest, &scale)?;
    ctx.input(&preds_path);
    ctx.input(&manifest);
    let joined = join_predictions(&rows, &split)?;
    let cal = match &cal_path {
        Some(p) => {
            ctx.input(p);
            Some(read_calibration(p)?)
        }
        None => None,
    };
    let report = evaluate(&joined, cal.as_ref(), granularity)?;
    let table = [(name, report)];
    write_text(&out, &render_report(&table))?;
    let tsv = with_suffix(&out, ".tsv");
    write_text(&tsv, &render_report_tsv(&table))?;
    ctx.output(&out);
    ctx.output(&tsv);
    if let Some(path) = scores_out {
        let mut text = format!("# id\t{granularity} score\n");
        for (id, pred, _) in aggregate(&joined, cal.as_ref(), granularity)? {
            let _ = writeln!(text, "{id}\t{:.6}", clamp_for_export(pred, &scale));
        }
        write_text(&path, &text)?;
        ctx.output(&path);
    }
    ctx.progress(render_report(&table).trim_end());
    Ok(with_suffix(&out, ".run"))
}

fn load_models(ctx: &mut Ctx<'_>, specs: &ModelSpecs) -> Result<BTreeMap<u8, GraderModel>> {
    let mut models = BTreeMap::new();
    for spec in &specs.0 {
        let model = load_model(&spec.path)?;
        ctx.input(&spec.path);
        if models.insert(spec.part, model).is_some() {
            return Err(Error::Usage(format!("part {} given more than one model", spec.part)));
        }
    }
    Ok(models)
}

fn model_specs(flags: Vec<super::ModelSpec>) -> Option<ModelSpecs> {
    (!flags.is_empty()).then_some(ModelSpecs(flags))
}

fn part_data<'a>(dev: &'a LoadedSplit, test: &'a LoadedSplit, parts: &[u8]) -> BTreeMap<u8, PartData<'a>> {
    let dev_parts = dev.split.parts();
    parts
        .iter()
        .map(|&p| {
            let data = PartData {
                dev: dev_parts.contains(&p).then_some(dev),
                test,
            };
            (p, data)
        })
        .collect()
}

fn load_pair(ctx: &mut Ctx<'_>, dev: &Path, test: &Path, scale: &GradeScale) -> Result<(LoadedSplit, LoadedSplit)> {
    let d = LoadedSplit::load(dev, scale)?;
    let t = LoadedSplit::load(test, scale)?;
    for p in [dev, d.split.feature_file.as_path(), test, t.split.feature_file.as_path()] {
        ctx.input(p);
    }
    Ok((d, t))
}

fn xeval(ctx: &mut Ctx<'_>, a: XevalArgs) -> Result<PathBuf> {
    let s = &mut ctx.settings;
    let specs: ModelSpecs = s.required("model", model_specs(a.models))?;
    let dev_path = s.path("dev", a.dev)?;
    let test_path = s.path("test", a.test)?;
    let mode: Option<DecodeMode> = s.optional("mode", a.mode)?;
    let out = s.path("out", a.out)?;
    s.finish()?;

    let models = load_models(ctx, &specs)?;
    let scale = models.values().next().expect("at least one model").scale.clone();
    let (dev, test) = load_pair(ctx, &dev_path, &test_path, &scale)?;
    let datasets = part_data(&dev, &test, &test.split.parts());
    let matrix = cross_part_matrix(&models, &datasets, mode)?;

    let mut text = matrix.render();
    if let Some(m) = matrix.diagonal_mean() {
        let _ = writeln!(text, "matched mean   {}", format_fixed3(m));
    }
    if let Some(m) = matrix.off_diagonal_mean() {
        let _ = writeln!(text, "transfer mean  {}", format_fixed3(m));
    }
    let mut tsv = String::from("model_part\tdata_part\tpcc\n");
    for (i, mp) in matrix.model_parts.iter().enumerate() {
        for (j, dp) in matrix.data_parts.iter().enumerate() {
            let _ = writeln!(tsv, "{mp}\t{dp}\t{:.6}", matrix.pcc[i][j]);
        }
    }
    write_text(&out, &text)?;
    let tsv_path = with_suffix(&out, ".tsv");
    write_text(&tsv_path, &tsv)?;
    ctx.output(&out);
    ctx.output(&tsv_path);
    ctx.progress(text.trim_end());
    Ok(with_suffix(&out, ".run"))
}

fn xtask(ctx: &mut Ctx<'_>, a: XtaskArgs) -> Result<PathBuf> {
    let s = &mut ctx.settings;
    let specs: ModelSpecs = s.required("model", model_specs(a.models))?;
    let dev_path = s.path("dev", a.dev)?;
    let test_path = s.path("test", a.test)?;
    let parts_flag: Option<PartList> = s.optional("parts", a.parts)?;
    let mode: Option<DecodeMode> = s.optional("mode", a.mode)?;
    let name = s.get("name", a.name, "system".to_string())?;
    let out = s.path("out", a.out)?;
    s.finish()?;

    let models = load_models(ctx, &specs)?;
    let parts = parts_flag.map_or_else(|| models.keys().copied().collect(), |p| p.0);
    let scale = models.values().next().expect("at least one model").scale.clone();
    let (dev, test) = load_pair(ctx, &dev_path, &test_path, &scale)?;
    let datasets = part_data(&dev, &test, &parts);
    let report = cross_task_eval(&models, &datasets, &parts, mode)?;
    let table = [(name, report)];
    write_text(&out, &render_report(&table))?;
    let tsv = with_suffix(&out, ".tsv");
    write_text(&tsv, &render_report_tsv(&table))?;
    ctx.output(&out);
    ctx.output(&tsv);
    ctx.progress(render_report(&table).trim_end());
    Ok(with_suffix(&out, ".run"))
}

/// Returns no default manifest path: an audit without `--out` has no
/// artifacts to record.
fn gradcheck(ctx: &mut Ctx<'_>, a: GradcheckArgs) -> Result<Option<PathBuf>> {
    let d = AuditConfig::default();
    let s = &mut ctx.settings;
    let head = s.get("head", a.head, HeadKind::Fa)?;
    let seed = s.get("seed", a.seed, 0u64)?;
    let models = s.get("models", a.models, 1u64)?;
    let config = AuditConfig {
        input_dim: s.get("dim", a.dim, d.input_dim)?,
        hidden_dim: s.get("hidden", a.hidden, d.hidden_dim)?,
        batch_size: s.get("batch-size", a.batch_size, d.batch_size)?,
        step: s.get("step", a.step, d.step)?,
    };
    let out = s.optional_path("out", a.out)?;
    s.finish()?;
    ctx.seed = Some(seed);
    if models == 0 {
        return Err(Error::Usage("--models must be at least 1".into()));
    }

    let scale = GradeScale::default();
    let mut worst = 0.0f64;
    for i in 0..models {
        worst = worst.max(random_audit(head, seed.wrapping_add(i), &scale, &config)?);
    }
    let line = format!("head {head}: max relative error {worst:e} over {models} model(s)\n");
    let _ = ctx.stdout.write_all(line.as_bytes());
    if let Some(p) = &out {
        write_text(p, &line)?;
        ctx.output(p);
    }
    if worst >= AUDIT_TOLERANCE {
        return Err(Error::Domain(format!(
            "gradient audit failed: {worst:e} is not below {AUDIT_TOLERANCE:e}"
        )));
    }
    Ok(out.map(|p| with_suffix(&p, ".run")))
}

fn ingest(ctx: &mut Ctx<'_>, a: IngestArgs) -> Result<PathBuf> {
    let s = &mut ctx.settings;
    let logits = s.path("logits", a.logits)?;
    let mode = s.get("mode", a.mode, DecodeMode::Soft)?;
    let out = s.path("out", a.out)?;
    s.finish()?;
    if mode == DecodeMode::Reg {
        return Err(Error::Usage("ingested logits decode with --mode hard or soft".into()));
    }
    let scale = GradeScale::default();
    let responses = ingest_logits(&logits, &scale)?;
    ctx.input(&logits);
    let records = predict_ingested(&responses, mode, &scale)?;
    let rows = records.iter().map(|r| r.to_row()).collect::<Result<Vec<_>>>()?;
    write_predictions(&rows, &out)?;
    ctx.output(&out);
    ctx.progress(&format!("decoded {} response(s) with {mode} decoding", rows.len()));
    Ok(with_suffix(&out, ".run"))
}
