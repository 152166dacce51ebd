use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use groundkit::adapter::{
    grad_check, lora_forward, lora_merge, merge_tokens, project, toy_train, CosineSchedule, Matrix,
    PlantedTask, TOKEN_GROUP,
};
use groundkit::codec::quantize;
use groundkit::dataset::{
    split_by_patient, synthesize_manifest, Category, DatasetError, GroundingSample, ManifestReader,
    SynthConfig,
};
use groundkit::eval::published::{self, Metric, RowGroup};
use groundkit::eval::{
    emit_report, emit_tables, load_predictions, predicted_box, render_overlay, score_sample,
    Accumulator, EvalError, ReportFormat, ReportRow,
};
use groundkit::grounder::{predict, GrounderProfile, ProfileKind};
use groundkit::prompt::{render_stage1, render_stage2, render_stage2_target, InstructionPool, PromptError, Task};
use groundkit::{api, seed};

#[derive(Debug)]
pub enum CliError {
    /// Bad input data or arguments: exit 1.
    Validation(String),
    /// Filesystem or stream failure: exit 2.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

fn io_err(what: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", what.display()))
}

#[derive(Parser, Debug)]
#[command(name = "groundkit", version, about = "Phrase-grounding data, templates and evaluation pipeline")]
pub struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Report format: csv or md.
    #[arg(long, global = true, default_value = "md")]
    format: ReportFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic, schema-valid manifest.
    Synth(SynthArgs),
    /// Assign samples to train/val/test by patient.
    Split(SplitArgs),
    /// Render stage-1 and stage-2 prompts for every sample.
    Render(RenderArgs),
    /// Produce predictions with the mock grounder.
    MockPredict(MockArgs),
    /// Parse one response (argument or stdin) and print the outcome as JSON.
    Parse(ParseArgs),
    /// Score predictions against a manifest and print the report.
    Eval(EvalArgs),
    /// Print the published comparison tables with recomputed means.
    Report,
    /// Write one SVG per sample with ground-truth and predicted boxes.
    Overlay(OverlayArgs),
    /// Run the token-merge / LoRA / gradient-check showcase.
    DemoAdapter,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    per_category: usize,
    #[arg(long, default_value_t = 32)]
    patients: usize,
    #[arg(long, default_value_t = 448)]
    width: u32,
    #[arg(long, default_value_t = 448)]
    height: u32,
    /// Do not snap boxes to the quantization grid.
    #[arg(long)]
    off_grid: bool,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Train:val:test patient ratio.
    #[arg(long, default_value = "7:1:2")]
    ratios: String,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Caption instruction pool (one per line); defaults to the shipped pool.
    #[arg(long)]
    caption_pool: Option<PathBuf>,
    /// Grounding instruction pool; defaults to the shipped pool.
    #[arg(long)]
    refer_pool: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MockArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// perfect, jitter:N or malformed:MODE (no-box, out-of-range, swapped-corners,
    /// truncated-braces, prose-wrapped).
    #[arg(long, default_value = "perfect")]
    profile: ProfileKind,
    /// Per-category override, e.g. "Edema=malformed:no-box". Repeatable.
    #[arg(long = "category-profile")]
    category_profiles: Vec<String>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ParseArgs {
    text: Option<String>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write per-sample scores as JSON-lines.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Add the published method rows to the tables.
    #[arg(long)]
    compare: bool,
}

#[derive(Args, Debug)]
struct OverlayArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    output_dir: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed;
    match cli.command {
        Command::Synth(a) => synth(a, seed),
        Command::Split(a) => split(a, seed),
        Command::Render(a) => render(a, seed),
        Command::MockPredict(a) => mock_predict(a, seed),
        Command::Parse(a) => parse(a),
        Command::Eval(a) => eval(a, cli.format),
        Command::Report => report(cli.format),
        Command::Overlay(a) => overlay(a),
        Command::DemoAdapter => demo_adapter(seed),
    }
}

struct Output {
    inner: BufWriter<Box<dyn Write>>,
    label: PathBuf,
}

impl Output {
    fn open(path: Option<&Path>) -> Result<Self, CliError> {
        let (inner, label): (Box<dyn Write>, PathBuf) = match path {
            Some(p) => (Box::new(File::create(p).map_err(io_err(p))?), p.to_path_buf()),
            None => (Box::new(io::stdout().lock()), PathBuf::from("<stdout>")),
        };
        Ok(Self {
            inner: BufWriter::new(inner),
            label,
        })
    }

    fn line(&mut self, s: &str) -> Result<(), CliError> {
        writeln!(self.inner, "{s}").map_err(io_err(&self.label))
    }

    fn write_str(&mut self, s: &str) -> Result<(), CliError> {
        self.inner.write_all(s.as_bytes()).map_err(io_err(&self.label))
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.inner.flush().map_err(io_err(&self.label))
    }
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("value serializes")
}

fn manifest(path: &Path) -> Result<ManifestReader<io::BufReader<File>>, CliError> {
    Ok(ManifestReader::open(path)?)
}

fn synth(a: SynthArgs, seed: u64) -> Result<(), CliError> {
    if a.width == 0 || a.height == 0 {
        return Err(CliError::Validation("image dimensions must be positive".into()));
    }
    let samples = synthesize_manifest(&SynthConfig {
        per_category: a.per_category,
        patients: a.patients,
        image_width: a.width,
        image_height: a.height,
        grid_aligned: !a.off_grid,
        seed,
    });
    let mut out = Output::open(a.output.as_deref())?;
    for s in &samples {
        out.line(&s.to_json_line())?;
    }
    out.finish()
}

fn parse_ratios(s: &str) -> Result<(u32, u32, u32), CliError> {
    let parts: Vec<u32> = s
        .split(':')
        .map(|p| p.trim().parse::<u32>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Validation(format!("bad ratios {s:?}, expected e.g. 7:1:2")))?;
    match parts.as_slice() {
        [a, b, c] => Ok((*a, *b, *c)),
        _ => Err(CliError::Validation(format!("bad ratios {s:?}, expected three parts"))),
    }
}

fn split(a: SplitArgs, seed: u64) -> Result<(), CliError> {
    let ratios = parse_ratios(&a.ratios)?;
    let samples: Vec<GroundingSample> = manifest(&a.manifest)?.collect::<Result<_, _>>()?;
    let assignment = split_by_patient(&samples, ratios, seed)?;
    for w in &assignment.warnings {
        warn!("{w}");
    }
    let (tr, va, te) = assignment.patient_counts;
    info!("patients: train {tr}, val {va}, test {te}");
    let mut out = Output::open(a.output.as_deref())?;
    let mut buf = Vec::new();
    assignment.write_jsonl(&mut buf).map_err(io_err(&out.label))?;
    out.write_str(std::str::from_utf8(&buf).expect("json is utf-8"))?;
    out.finish()
}

#[derive(Serialize)]
struct RenderRecord<'a> {
    sample_id: &'a str,
    stage1: String,
    stage2: String,
    target: String,
}

fn render(a: RenderArgs, seed: u64) -> Result<(), CliError> {
    let caption = match &a.caption_pool {
        Some(p) => InstructionPool::load(Task::Caption, p)?,
        None => InstructionPool::default_for(Task::Caption),
    };
    let refer = match &a.refer_pool {
        Some(p) => InstructionPool::load(Task::Refer, p)?,
        None => InstructionPool::default_for(Task::Refer),
    };
    let mut out = Output::open(a.output.as_deref())?;
    for s in manifest(&a.manifest)? {
        let s = s?;
        let nb = quantize(&s.gt_box, i64::from(s.image_width), i64::from(s.image_height))
            .map_err(|e| CliError::Validation(e.to_string()))?;
        let rec = RenderRecord {
            sample_id: &s.sample_id,
            stage1: render_stage1(&caption, seed::derive(seed, &format!("caption:{}", s.sample_id)))?.text,
            stage2: render_stage2(&refer, &s.phrase, seed::derive(seed, &format!("refer:{}", s.sample_id)))?
                .text,
            target: render_stage2_target(&nb),
        };
        out.line(&json(&rec))?;
    }
    out.finish()
}

fn parse_category_profiles(items: &[String]) -> Result<HashMap<Category, ProfileKind>, CliError> {
    let mut map = HashMap::new();
    for item in items {
        let (cat, prof) = item.split_once('=').ok_or_else(|| {
            CliError::Validation(format!("expected CATEGORY=PROFILE, got {item:?}"))
        })?;
        let cat: Category = cat.parse().map_err(|e: DatasetError| CliError::Validation(e.to_string()))?;
        let prof: ProfileKind = prof
            .parse()
            .map_err(|e: groundkit::grounder::ProfileError| CliError::Validation(e.to_string()))?;
        map.insert(cat, prof);
    }
    Ok(map)
}

fn mock_predict(a: MockArgs, seed: u64) -> Result<(), CliError> {
    let overrides = parse_category_profiles(&a.category_profiles)?;
    let mut out = Output::open(a.output.as_deref())?;
    for s in manifest(&a.manifest)? {
        let s = s?;
        let kind = overrides.get(&s.category).copied().unwrap_or(a.profile);
        out.line(&predict(&s, &GrounderProfile::new(kind, seed)).to_json_line())?;
    }
    out.finish()
}

fn parse(a: ParseArgs) -> Result<(), CliError> {
    let text = match a.text {
        Some(t) => t,
        None => {
            let mut buf = String::new();
            io::stdin()
                .read_to_string(&mut buf)
                .map_err(|e| CliError::Io(format!("<stdin>: {e}")))?;
            buf
        }
    };
    let mut out = Output::open(None)?;
    out.line(&json(&api::parse_box(&text)))?;
    out.finish()
}

fn eval(a: EvalArgs, format: ReportFormat) -> Result<(), CliError> {
    let mut preds = load_predictions(&a.predictions)?;
    let mut scores_out = a.scores.as_deref().map(|p| Output::open(Some(p))).transpose()?;
    let mut acc = Accumulator::new();
    for s in manifest(&a.manifest)? {
        let s = s?;
        let raw = preds.remove(&s.sample_id).ok_or_else(|| {
            CliError::Validation(format!("no prediction for sample {:?}", s.sample_id))
        })?;
        let score = score_sample(&s, &raw);
        if let Some(out) = scores_out.as_mut() {
            out.line(&json(&score))?;
        }
        acc.add(s.category, &score);
    }
    if !preds.is_empty() {
        let mut extra: Vec<_> = preds.into_keys().collect();
        extra.sort();
        return Err(CliError::Validation(format!(
            "{} predictions do not match any sample (first: {:?})",
            extra.len(),
            extra[0]
        )));
    }
    if let Some(out) = scores_out {
        out.finish()?;
    }
    let report = acc.finish();
    let text = if a.compare {
        let rows = |metric| -> Vec<ReportRow> {
            published::rows(RowGroup::Methods, metric)
                .map(ReportRow::from_published)
                .chain([ReportRow::from_report("this run", &report, metric)])
                .collect()
        };
        emit_tables(format, &rows(Metric::Iou), &rows(Metric::Dice), Some(&report))
    } else {
        emit_report(&report, format)
    };
    let mut out = Output::open(a.output.as_deref())?;
    out.write_str(&text)?;
    out.finish()
}

fn report(format: ReportFormat) -> Result<(), CliError> {
    let mut out = Output::open(None)?;
    for group in [RowGroup::Methods, RowGroup::StageAblation] {
        let rows = |metric| -> Vec<ReportRow> {
            published::rows(group, metric)
                .map(|r| {
                    let mut row = ReportRow::from_published(r);
                    if r.mean_from_cells {
                        row.mean = Some(r.recomputed_mean());
                    }
                    row
                })
                .collect()
        };
        out.write_str(&emit_tables(format, &rows(Metric::Iou), &rows(Metric::Dice), None))?;
    }
    out.finish()
}

fn overlay(a: OverlayArgs) -> Result<(), CliError> {
    fs::create_dir_all(&a.output_dir).map_err(io_err(&a.output_dir))?;
    let preds = match &a.predictions {
        Some(p) => load_predictions(p)?,
        None => HashMap::new(),
    };
    for s in manifest(&a.manifest)? {
        let s = s?;
        if s.sample_id.contains(['/', '\\']) || s.sample_id.starts_with('.') {
            return Err(CliError::Validation(format!(
                "sample_id {:?} is not usable as a file name",
                s.sample_id
            )));
        }
        let pred = preds.get(&s.sample_id).and_then(|raw| predicted_box(&s, raw).ok());
        let path = a.output_dir.join(format!("{}.svg", s.sample_id));
        fs::write(&path, render_overlay(&s, pred.as_ref())).map_err(io_err(&path))?;
    }
    Ok(())
}

fn demo_adapter(seed: u64) -> Result<(), CliError> {
    let mut failures = 0;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };
    let shape_err = |e: groundkit::adapter::AdapterError| CliError::Validation(e.to_string());
    let mut rng = seed::rng(seed);

    let tokens = Matrix::random_normal(16, 8, 1.0, &mut rng);
    let merged = merge_tokens(&tokens, TOKEN_GROUP).map_err(shape_err)?;
    check(
        "token merge",
        merged.shape() == (4, 32) && merged.row(1) == tokens.data()[32..64].as_ref(),
        format!("{:?} -> {:?}", tokens.shape(), merged.shape()),
    );

    let w_proj = Matrix::random_normal(16, 32, 0.1, &mut rng);
    let projected = project(&merged, &w_proj, &[0.0; 16]).map_err(shape_err)?;
    check("projection", projected.shape() == (4, 16), format!("{:?}", projected.shape()));

    let task = PlantedTask::generate(16, 16, 2, 4.0, 64, seed).map_err(shape_err)?;
    let mut student = task.student(seed.wrapping_add(1)).map_err(shape_err)?;
    let base = lora_forward(&projected, &student).map_err(shape_err)?;
    check(
        "zero-init LoRA equals base",
        base.bit_eq(&projected.matmul_t(student.base()).map_err(shape_err)?),
        "b = 0".into(),
    );

    let random = groundkit::adapter::LoraLinear::new(
        task.w0.clone(),
        Matrix::random_normal(2, 16, 1.0, &mut rng),
        Matrix::random_normal(16, 2, 1.0, &mut rng),
        4.0,
    )
    .map_err(shape_err)?;
    let unmerged = lora_forward(&projected, &random).map_err(shape_err)?;
    let merged_out = project(&projected, &lora_merge(&random), &[0.0; 16]).map_err(shape_err)?;
    let rel = unmerged.rel_error(&merged_out);
    check("merged == unmerged", rel <= 1e-12, format!("rel err {rel:.2e}"));

    let gc = grad_check(&random, &task.x, &task.y).map_err(shape_err)?;
    check("gradient check", gc <= 1e-4, format!("max rel err {gc:.2e}"));

    let schedule = CosineSchedule::new(DEMO_LR.0, DEMO_LR.1, DEMO_STEPS).map_err(shape_err)?;
    let before = student.base().clone();
    let trace = toy_train(&mut student, &task.x, &task.y, &schedule, DEMO_STEPS).map_err(shape_err)?;
    let (first, last) = (trace[0], *trace.last().expect("non-empty trace"));
    check(
        "planted LoRA fit",
        last < 0.01 * first && student.base().bit_eq(&before),
        format!("loss {first:.3e} -> {last:.3e} in {DEMO_STEPS} steps"),
    );

    let cos = CosineSchedule::new(1e-4, 8e-5, 1000).map_err(shape_err)?;
    let ends = (cos.lr(0), cos.lr(500), cos.lr(1000));
    check(
        "cosine schedule",
        ends == (Ok(1e-4), Ok(9e-5), Ok(8e-5)),
        "1e-4 -> 9e-5 -> 8e-5".into(),
    );

    if failures > 0 {
        return Err(CliError::Validation(format!("{failures} adapter checks failed")));
    }
    Ok(())
}

/// Learning-rate range and step count for the demo fit.
const DEMO_LR: (f64, f64) = (0.2, 0.02);
const DEMO_STEPS: usize = 200;
