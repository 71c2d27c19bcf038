//! Command-line entry point: train, generate, bench, costmodel and eval.
//!
//! Every run writes its outputs and a `manifest.json` under the run
//! directory. Exit codes: 0 success, 2 configuration error, 3 missing
//! precondition, 4 runtime failure.

pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bench::{self, Timing, WallClock};
use crate::error::{Error, Result};
use crate::eval::{self, EvalGrid, ExhaustiveRunner, FrameSweep, ModelRunner, OracleRunner, RandomRunner, Runner};
use crate::mllm::{VisionLanguageModel, VlmConfig};
use crate::model::{HybridModel, QuantizedModel};
use crate::protocol::DatasetRecord;
use crate::rng;
use crate::tensor::Scalar;
use crate::training::tasks::Relation;
use crate::training::{
    build_corpus, checkpoint_hash, stage_checkpoint_path, train_stage, Stage, StageConfig, SynthTaskSpec, TrainingReport,
};
use crate::vision::synth::{colored_shape, COLORS, SHAPES};
use crate::vision::Image;

pub use config::{Manifest, Origin, Settings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

/// Exit code of a failed run.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) => EXIT_CONFIG,
        Error::Precondition(_) | Error::InfeasibleBudget { .. } => EXIT_PRECONDITION,
        _ => EXIT_RUNTIME,
    }
}

#[derive(Debug, Parser)]
#[command(name = "hybrid-mllm", version, about = "Desk-scale hybrid multimodal decoder toolkit")]
pub struct Cli {
    /// Flat key-value config file (TOML, dotted keys).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory for outputs and the manifest.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub precision: Option<Precision>,
    /// Evaluate with int8 weights.
    #[arg(long, global = true)]
    pub quantize: bool,
    /// Override any config key: `--set eval.trials=100`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchMode {
    Prefill,
    Throughput,
    SweepTokens,
    Memory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Niah,
    Icl,
    Frames,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RunnerKind {
    Model,
    Oracle,
    Random,
    Exhaustive,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one stage (text, align, single-sft, multi-sft) or `all`.
    Train {
        #[arg(long)]
        stage: String,
        /// Checkpoint to resume from; defaults to the previous stage's
        /// checkpoint in the run directory.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        items: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Greedy decoding from a JSON input record.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Record with `task_type`, `texts` and `images` (raster paths or
        /// `synth:<color>:<shape>`).
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 16)]
        max_new_tokens: usize,
    },
    /// Efficiency measurements on toy models or a checkpoint's decoder.
    Bench {
        #[arg(long, value_enum)]
        mode: BenchMode,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Analytic token, cache, FLOPs and image-budget tables.
    Costmodel,
    /// Accuracy grids for the needle, in-context and frame-sweep suites.
    Eval {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Score the ground-truth runner; no checkpoint needed.
        #[arg(long)]
        oracle: bool,
        #[arg(long, value_enum)]
        runner: Option<RunnerKind>,
        #[arg(long)]
        trials: Option<usize>,
    },
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn settings(cli: &Cli) -> Result<Settings> {
    let file = match &cli.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|_| {
            Error::InvalidConfig(vec![format!("cannot read config file {}", p.display())])
        })?),
        None => None,
    };
    let mut flags = Vec::new();
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(vec![format!("--set expects KEY=VALUE, got {kv}")]))?;
        flags.push((k.trim().to_string(), v.trim().to_string()));
    }
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            flags.push((k.into(), v));
        }
    };
    push("seed", cli.seed.map(|s| s.to_string()));
    push("out", cli.out.as_ref().map(|p| p.display().to_string()));
    push(
        "precision",
        cli.precision.map(|p| match p {
            Precision::F32 => "f32".into(),
            Precision::F64 => "f64".into(),
        }),
    );
    push("quantize", cli.quantize.then(|| "true".into()));
    match &cli.command {
        Command::Train { items, lr, epochs, .. } => {
            push("train.items", items.map(|v| v.to_string()));
            push("train.peak_lr", lr.map(|v| v.to_string()));
            push("train.epochs", epochs.map(|v| v.to_string()));
        }
        Command::Eval { trials, .. } => push("eval.trials", trials.map(|v| v.to_string())),
        _ => {}
    }
    let s = Settings::resolve(file.as_deref(), &flags)?;
    if !matches!(s.str("precision"), Some("f32" | "f64")) {
        return Err(Error::InvalidConfig(vec!["precision must be f32 or f64".into()]));
    }
    Ok(s)
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("{what} {} does not exist", path.display())))
    }
}

fn write_text(dir: &Path, name: &str, text: &str, manifest: &mut Manifest) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    manifest.outputs.push(name.into());
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T, manifest: &mut Manifest) -> Result<()> {
    write_text(dir, name, &serde_json::to_string_pretty(value)?, manifest)
}

pub fn run(cli: Cli) -> Result<()> {
    let s = settings(&cli)?;
    let out = s.out();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let f64_mode = s.str("precision") == Some("f64");
    match cli.command {
        Command::Train {
            ref stage, ref resume, ..
        } => match f64_mode {
            true => cmd_train::<f64>(&s, &out, stage, resume.as_deref()),
            false => cmd_train::<f32>(&s, &out, stage, resume.as_deref()),
        },
        Command::Generate {
            ref checkpoint,
            ref input,
            max_new_tokens,
        } => match f64_mode {
            true => cmd_generate::<f64>(&s, &out, checkpoint, input, max_new_tokens),
            false => cmd_generate::<f32>(&s, &out, checkpoint, input, max_new_tokens),
        },
        Command::Bench { mode, ref checkpoint } => match f64_mode {
            true => cmd_bench::<f64>(&s, &out, mode, checkpoint.as_deref()),
            false => cmd_bench::<f32>(&s, &out, mode, checkpoint.as_deref()),
        },
        Command::Costmodel => cmd_costmodel(&s, &out),
        Command::Eval {
            suite,
            ref checkpoint,
            oracle,
            runner,
            ..
        } => {
            let kind = match (oracle, runner) {
                (true, _) => RunnerKind::Oracle,
                (false, Some(r)) => r,
                (false, None) => RunnerKind::Model,
            };
            match f64_mode {
                true => cmd_eval::<f64>(&s, &out, suite, kind, checkpoint.as_deref()),
                false => cmd_eval::<f32>(&s, &out, suite, kind, checkpoint.as_deref()),
            }
        }
    }
}

/// Desk stage configuration with the `train.*` overrides applied.
pub fn stage_config(s: &Settings, stage: Stage) -> StageConfig {
    let mut c = StageConfig::desk(stage);
    if let Some(v) = s.usize("train.items") {
        c.items = v;
    }
    if let Some(v) = s.usize("train.epochs") {
        c.epochs = v;
    }
    if let Some(v) = s.f64("train.peak_lr") {
        c.peak_lr = v;
    }
    if let Some(v) = s.usize("train.pack_len") {
        c.pack_len = v;
    }
    if let Some(v) = s.f64("train.warmup_fraction") {
        c.warmup_fraction = v;
    }
    if let Some(v) = s.f64("train.aux_loss_weight") {
        c.aux_loss_weight = v;
    }
    c
}

fn cmd_train<S: Scalar>(s: &Settings, out: &Path, stage: &str, resume: Option<&Path>) -> Result<()> {
    let stages: Vec<Stage> = match stage {
        "all" => Stage::ALL.to_vec(),
        name => vec![Stage::parse(name).ok_or_else(|| {
            Error::InvalidConfig(vec![format!(
                "unknown stage {name}; expected text, align, single-sft, multi-sft or all"
            )])
        })?],
    };
    let configs: Vec<StageConfig> = stages.iter().map(|&st| stage_config(s, st)).collect();
    for c in &configs {
        c.validate()?;
    }
    let seed = s.seed();
    let mut inputs: Vec<PathBuf> = Vec::new();
    let mut vlm = match (stages[0].previous(), resume) {
        (_, Some(path)) => {
            require_file(path, "resume checkpoint")?;
            inputs.push(path.to_path_buf());
            VisionLanguageModel::<S>::load(path)?
        }
        (None, None) => VisionLanguageModel::<S>::random(&VlmConfig::desk(), seed)?,
        (Some(prev), None) => {
            let path = stage_checkpoint_path(out, prev);
            if !path.is_file() {
                return Err(Error::Precondition(format!(
                    "stage {} needs the {} checkpoint; expected {} or --resume",
                    stages[0].name(),
                    prev.name(),
                    path.display()
                )));
            }
            inputs.push(path.clone());
            VisionLanguageModel::<S>::load(&path)?
        }
    };
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let mut manifest = Manifest::new("train", s, &input_refs)?;
    let spec = SynthTaskSpec::new(vlm.cfg.encoder.image_side, vlm.cfg.tokens_per_image());
    let mut parent = Some(checkpoint_hash(&vlm, None)?);
    let mut reports: Vec<TrainingReport> = Vec::new();
    for (cfg, st) in configs.iter().zip(&stages) {
        let index = Stage::ALL.iter().position(|x| x == st).unwrap_or(0) as u64;
        let corpus = build_corpus(&spec, cfg, rng::derive_seed(seed, 1000 + index))?;
        let mut report = train_stage(&mut vlm, cfg, &corpus, rng::derive_seed(seed, index))?;
        let path = stage_checkpoint_path(out, *st);
        let hash = checkpoint_hash(&vlm, Some(&path))?;
        manifest.outputs.push(path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default());
        report.parent_checkpoint = parent.replace(hash.clone());
        report.checkpoint = Some(hash.clone());
        let steps = format!("{}.steps.jsonl", st.name());
        report.write_jsonl(&out.join(&steps))?;
        manifest.outputs.push(steps);
        println!(
            "{:<10} steps {:>5}  loss {:.4} -> {:.4}  unchanged {:?}  checkpoint {}",
            st.name(),
            report.steps.len(),
            report.initial_loss(),
            report.final_loss(),
            report.unchanged(),
            &hash[..16]
        );
        reports.push(report);
    }
    let summary: Vec<_> = reports
        .iter()
        .map(|r| {
            serde_json::json!({
                "stage": r.stage.name(),
                "steps": r.steps.len(),
                "initial_loss": r.initial_loss(),
                "final_loss": r.final_loss(),
                "unchanged": r.unchanged(),
                "parent_checkpoint": r.parent_checkpoint,
                "checkpoint": r.checkpoint,
            })
        })
        .collect();
    write_json(out, "train_report.json", &summary, &mut manifest)?;
    manifest.write(out)?;
    Ok(())
}

/// Loads a raster image, or draws `synth:<color>:<shape>` procedurally.
pub fn load_image_ref(reference: &str, side: usize, seed: u64) -> Result<Image> {
    if let Some(spec) = reference.strip_prefix("synth:") {
        let (c, sh) = spec
            .split_once(':')
            .ok_or_else(|| Error::Protocol(format!("synthetic image {reference} needs <color>:<shape>")))?;
        let color = COLORS
            .iter()
            .find(|x| x.name() == c)
            .ok_or_else(|| Error::Protocol(format!("unknown color {c}")))?;
        let shape = SHAPES
            .iter()
            .find(|x| x.name() == sh)
            .ok_or_else(|| Error::Protocol(format!("unknown shape {sh}")))?;
        return Ok(colored_shape(side, *shape, *color, &mut rng::seeded(seed)));
    }
    let path = Path::new(reference);
    require_file(path, "image")?;
    Image::load(path)
}

fn maybe_quantize<S: Scalar>(vlm: VisionLanguageModel<S>, quantize: bool) -> Result<VisionLanguageModel<S>> {
    if !quantize {
        return Ok(vlm);
    }
    let model = QuantizedModel::quantize(&vlm.model).dequantize()?;
    Ok(VisionLanguageModel { model, ..vlm })
}

#[derive(Debug, Serialize)]
struct Generation {
    prompt_tokens: Vec<usize>,
    generated_tokens: Vec<usize>,
    text: String,
    trace: Vec<String>,
}

fn cmd_generate<S: Scalar>(s: &Settings, out: &Path, checkpoint: &Path, input: &Path, max_new: usize) -> Result<()> {
    require_file(checkpoint, "checkpoint")?;
    require_file(input, "input record")?;
    let text = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let record: DatasetRecord =
        serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("malformed input record: {e}")))?;
    let vlm = maybe_quantize(VisionLanguageModel::<S>::load(checkpoint)?, s.bool("quantize").unwrap_or(false))?;
    let spec = SynthTaskSpec::new(vlm.cfg.encoder.image_side, vlm.cfg.tokens_per_image());
    let prompt = record.prompt(&spec.proto)?;
    let features = record
        .images
        .iter()
        .enumerate()
        .map(|(i, r)| vlm.features(&load_image_ref(r, vlm.cfg.encoder.image_side, rng::derive_seed(s.seed(), i as u64))?))
        .collect::<Result<Vec<_>>>()?;
    let generated = vlm.generate(&prompt, &features, max_new, Some(crate::protocol::EOS))?;
    let prompt_tokens = prompt.render();
    let vocab = spec.vocab();
    let trace = prompt_tokens
        .iter()
        .chain(&generated)
        .map(|&t| vocab.symbol(t).unwrap_or("?").to_string())
        .collect();
    let g = Generation {
        text: vocab.decode(&generated),
        prompt_tokens,
        generated_tokens: generated,
        trace,
    };
    println!("{}", g.text);
    let mut manifest = Manifest::new("generate", s, &[checkpoint, input])?;
    write_json(out, "generation.json", &g, &mut manifest)?;
    manifest.write(out)?;
    Ok(())
}

fn timing(s: &Settings) -> Timing {
    Timing {
        warmups: s.usize("bench.warmups").unwrap_or(3),
        trials: s.usize("bench.trials").unwrap_or(5),
    }
}

fn cmd_bench<S: Scalar>(s: &Settings, out: &Path, mode: BenchMode, checkpoint: Option<&Path>) -> Result<()> {
    let mut inputs = Vec::new();
    let models: Vec<(String, HybridModel<S>)> = match checkpoint {
        Some(p) => {
            require_file(p, "checkpoint")?;
            inputs.push(p);
            vec![("checkpoint".into(), VisionLanguageModel::<S>::load(p)?.model)]
        }
        None => {
            let (h, a) = bench::toy_pair(s.usize("bench.d_model").unwrap_or(16));
            vec![
                ("hybrid".into(), HybridModel::random(&h, s.seed())?),
                ("attention".into(), HybridModel::random(&a, s.seed())?),
            ]
        }
    };
    let mut manifest = Manifest::new("bench", s, &inputs)?;
    let ladder = s.usizes("bench.ladder");
    let t = timing(s);
    let mut clock = WallClock::default();
    let xs: Vec<f64> = ladder.iter().map(|&v| v as f64).collect();
    match mode {
        BenchMode::Prefill | BenchMode::Throughput => {
            let decode = s.usize("bench.decode_tokens").unwrap_or(64);
            let mut all = Vec::new();
            for (label, model) in &models {
                let reports = bench::efficiency_ladder(label, model, &ladder, decode, t, &mut clock)?;
                let ys: Vec<f64> = reports
                    .iter()
                    .map(|r| match mode {
                        BenchMode::Prefill => r.prefill.median,
                        _ => r.throughput.median,
                    })
                    .collect();
                let (name, y) = match mode {
                    BenchMode::Prefill => ("prefill", "seconds"),
                    _ => ("throughput", "tokens_per_second"),
                };
                let series = format!("{name}_{label}.series.csv");
                bench::write_series(&out.join(&series), "context", y, &xs.iter().copied().zip(ys.iter().copied()).collect::<Vec<_>>())?;
                manifest.outputs.push(series);
                if mode == BenchMode::Prefill {
                    println!("{label}: prefill exponent {:.3}", bench::fit_exponent(&xs, &ys));
                } else {
                    println!("{label}: throughput {:?}", ys.iter().map(|v| format!("{v:.1}")).collect::<Vec<_>>());
                }
                all.extend(reports);
            }
            write_text(out, "ladder.csv", &bench::ladder_csv(&all), &mut manifest)?;
            write_json(out, "ladder.json", &all, &mut manifest)?;
        }
        BenchMode::Memory => {
            let mut rows = String::from("label,context,session_bytes,kv_bytes_analytic\n");
            for (label, model) in &models {
                let per_token = model.cfg.kv_scalars_per_token() * std::mem::size_of::<S>();
                let ys = ladder
                    .iter()
                    .map(|&c| bench::session_bytes(model, c).map(|b| b as f64))
                    .collect::<Result<Vec<_>>>()?;
                for (c, b) in ladder.iter().zip(&ys) {
                    rows.push_str(&format!("{label},{c},{b},{}\n", per_token * c));
                }
                let (slope, _) = bench::fit_line(&xs, &ys);
                println!("{label}: session bytes per token {slope:.2} (analytic KV {per_token})");
            }
            write_text(out, "memory.csv", &rows, &mut manifest)?;
        }
        BenchMode::SweepTokens => {
            let (label, model) = &models[0];
            let rows = bench::sweep_tokens_per_image(model, &s.usizes("bench.budgets"), s.usize("bench.images").unwrap_or(2), t, &mut clock)?;
            let mut csv = String::from("model,tokens_per_image,images,context,flops,prefill_s,prefill_samples\n");
            for r in &rows {
                let samples: Vec<String> = r.prefill.samples.iter().map(|x| format!("{x:e}")).collect();
                csv.push_str(&format!(
                    "{label},{},{},{},{:e},{:e},{}\n",
                    r.tokens_per_image,
                    r.n_images,
                    r.context,
                    r.flops,
                    r.prefill.median,
                    samples.join(" ")
                ));
                println!("{} tokens/image: prefill {:.4}s flops {:.3e}", r.tokens_per_image, r.prefill.median, r.flops);
            }
            write_text(out, "sweep_tokens.csv", &csv, &mut manifest)?;
            write_json(out, "sweep_tokens.json", &rows, &mut manifest)?;
        }
    }
    manifest.write(out)?;
    Ok(())
}

fn cmd_costmodel(s: &Settings, out: &Path) -> Result<()> {
    let cfg = s.cost_model()?;
    let rows = bench::cost_table(&cfg)?;
    for r in &rows {
        println!("{:<12} {:>16.6} {:<7} {}", r.quantity, r.value, r.unit, r.inputs);
    }
    let mut manifest = Manifest::new("costmodel", s, &[])?;
    write_text(out, "cost_table.csv", &bench::cost_table_csv(&rows), &mut manifest)?;
    let overhead = bench::calibrated_overhead(&cfg)?;
    let points: Vec<(f64, f64)> = (1..=16)
        .map(|i| {
            let gb = 10.0 * i as f64;
            let n = bench::max_images(gb * 1e9, &cfg, &overhead).images().unwrap_or(0);
            (gb, n as f64)
        })
        .collect();
    bench::write_series(&out.join("max_images.series.csv"), "budget_gb", "images", &points)?;
    manifest.outputs.push("max_images.series.csv".into());
    manifest.write(out)?;
    Ok(())
}

fn relation(s: &Settings) -> Result<Relation> {
    match s.str("eval.relation") {
        Some("same_shape") => Ok(Relation::SameShape),
        Some("same_color") => Ok(Relation::SameColor),
        other => Err(Error::InvalidConfig(vec![format!(
            "eval.relation {other:?} must be same_shape or same_color"
        )])),
    }
}

fn cmd_eval<S: Scalar>(s: &Settings, out: &Path, suite: Suite, kind: RunnerKind, checkpoint: Option<&Path>) -> Result<()> {
    let rel = relation(s)?;
    let budgets = s.usizes("eval.budgets");
    if suite == Suite::Frames && budgets.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidConfig(vec!["eval.budgets must be sorted ascending".into()]));
    }
    let mut inputs = Vec::new();
    let vlm = match (kind, checkpoint) {
        (RunnerKind::Model, None) => {
            return Err(Error::Precondition("model evaluation needs --checkpoint (or use --oracle)".into()))
        }
        (RunnerKind::Model, Some(p)) => {
            require_file(p, "checkpoint")?;
            inputs.push(p);
            Some(maybe_quantize(VisionLanguageModel::<S>::load(p)?, s.bool("quantize").unwrap_or(false))?)
        }
        _ => None,
    };
    let desk = VlmConfig::desk();
    let cfg = vlm.as_ref().map_or(&desk, |v| &v.cfg);
    let spec = SynthTaskSpec::new(cfg.encoder.image_side, cfg.tokens_per_image());
    let mut runner: Box<dyn Runner + '_> = match (&vlm, kind) {
        (Some(v), _) => Box::new(ModelRunner { vlm: v }),
        (None, RunnerKind::Random) => Box::new(RandomRunner),
        (None, RunnerKind::Exhaustive) => Box::new(ExhaustiveRunner),
        (None, _) => Box::new(OracleRunner),
    };
    let trials = s.usize("eval.trials").unwrap_or(40);
    let seed = s.seed();
    let grid: EvalGrid = match suite {
        Suite::Niah => eval::niah_grid(runner.as_mut(), &spec, &s.usizes("eval.frames"), &s.f64s("eval.depths"), trials, seed),
        Suite::Icl => eval::icl_grid(runner.as_mut(), &spec, rel, &s.usizes("eval.shots"), trials, seed),
        Suite::Frames => {
            let sweep = FrameSweep {
                video_len: s.usize("eval.video_len").unwrap_or(64),
                needle: None,
            };
            eval::sweep_frames(runner.as_mut(), &spec, sweep, &budgets, trials, seed)
        }
    };
    let name = match suite {
        Suite::Niah => "niah",
        Suite::Icl => "icl",
        Suite::Frames => "frames",
    };
    print!("{}", grid.to_csv());
    let mut manifest = Manifest::new("eval", s, &inputs)?;
    write_text(out, &format!("{name}.csv"), &grid.to_csv(), &mut manifest)?;
    write_json(out, &format!("{name}.json"), &grid, &mut manifest)?;
    manifest.write(out)?;
    Ok(())
}
