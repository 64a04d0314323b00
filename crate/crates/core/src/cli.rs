// SPDX-License-Identifier: MIT OR Apache-2.0

//! `layertracer` command line.
//!
//! Exit status: 0 on success, 1 on a fatal error, 2 on a usage error,
//! 3 when a vulnerability profile is degenerate, 4 when some corpus prompts
//! could not be analyzed. Parallelism is capped by `LAYERTRACER_THREADS`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;

use crate::analysis::{
    advise_hybrid, aggregate_indexed, task_particle, vulnerability_scan, AnalysisConfig,
    ParticleResult, PromptFailure, VulnerabilityProfile, DEFAULT_FREEZE_QUANTILE,
};
use crate::models::{
    byte_tokens, default_plant_strength, load_weights, plant_particle, save_weights, Arch,
    LayeredModel, ModelSpec, Perturbation,
};
use crate::report::{
    emit_csv, emit_heatmap_svg, emit_json, heatmap_from_reports, AggregateDocument, HeatmapMode,
    PlanDocument, PromptInfo, PromptReport,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DEGENERATE: u8 = 3;
pub const EXIT_PARTIAL: u8 = 4;

pub const THREADS_ENV: &str = "LAYERTRACER_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "layertracer",
    version,
    about = "Task-particle and vulnerable-layer analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a random (optionally planted) reference model to an LTRC file.
    InitModel(InitArgs),
    /// Run both phases: task particle, then vulnerable layer.
    Analyze(RunArgs),
    /// Run only the task-particle phase.
    Particle(RunArgs),
    /// Run only the vulnerable-layer phase.
    Vulnerable(RunArgs),
    /// Derive a hybrid layer plan from a per-prompt analyze report.
    Advise(AdviseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ArchArg {
    Decoder,
    Linear,
    Hybrid,
}

#[derive(Debug, Args)]
struct InitArgs {
    #[arg(long, value_enum, default_value = "decoder")]
    arch: ArchArg,
    /// Hybrid layer pattern, cycled to the layer count (A = attention, L = linear).
    #[arg(long)]
    pattern: Option<String>,
    #[arg(long, default_value_t = 12)]
    layers: usize,
    #[arg(long, default_value_t = 64)]
    d_model: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 128)]
    d_ff: usize,
    #[arg(long, default_value_t = 256)]
    vocab: usize,
    #[arg(long, default_value_t = 128)]
    max_seq: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Plant a task particle at this 1-based layer.
    #[arg(long)]
    plant_layer: Option<usize>,
    /// Token id boosted by the planted layer [default: 101, ASCII 'e'].
    #[arg(long, requires = "plant_layer")]
    plant_token: Option<u32>,
    /// Norm of the injected direction [default: 4·sqrt(d_model)].
    #[arg(long, requires = "plant_layer")]
    plant_strength: Option<f32>,
    #[arg(long, default_value = "model.ltrc")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    model: PathBuf,
    /// Prompt text; repeat for several prompts.
    #[arg(
        long,
        conflicts_with = "prompt_file",
        required_unless_present = "prompt_file"
    )]
    prompt: Vec<String>,
    /// Plain text (one prompt per line) or JSON lines with "text" and optional "category".
    #[arg(long)]
    prompt_file: Option<PathBuf>,
    #[arg(long, default_value_t = crate::analysis::DEFAULT_TOP_K)]
    top_k: usize,
    #[arg(long, default_value_t = 1.0)]
    mask_fraction: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Restrict both phases to these 1-based layers, e.g. `--layers 2,4,6`.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "json")]
    format: Vec<Format>,
}

#[derive(Debug, Args)]
struct AdviseArgs {
    /// A per-prompt JSON report written by `analyze`.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value_t = DEFAULT_FREEZE_QUANTILE)]
    freeze_quantile: f64,
    #[arg(long, default_value = "plan.json")]
    out: PathBuf,
}

/// One corpus entry.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct PromptEntry {
    pub text: String,
    #[serde(default)]
    pub category: Option<String>,
}

/// Prompts to analyze, in corpus order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptCorpus {
    pub entries: Vec<PromptEntry>,
}

impl PromptCorpus {
    pub fn new(entries: Vec<PromptEntry>) -> anyhow::Result<Self> {
        if entries.is_empty() {
            bail!("prompt corpus is empty");
        }
        if let Some(i) = entries.iter().position(|e| e.text.trim().is_empty()) {
            bail!("prompt {i} is empty");
        }
        Ok(Self { entries })
    }

    /// Parses JSON lines when the first non-blank line starts with `{`, plain
    /// text otherwise. Blank lines are skipped in both formats.
    pub fn parse(content: &str) -> anyhow::Result<Self> {
        let lines: Vec<(usize, &str)> = content
            .lines()
            .map(|l| l.strip_suffix('\r').unwrap_or(l))
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .collect();
        let jsonl = lines
            .first()
            .is_some_and(|(_, l)| l.trim_start().starts_with('{'));
        let entries = if jsonl {
            lines
                .iter()
                .map(|(n, l)| {
                    serde_json::from_str::<PromptEntry>(l)
                        .with_context(|| format!("line {}: invalid JSON prompt entry", n + 1))
                })
                .collect::<anyhow::Result<Vec<_>>>()?
        } else {
            lines
                .iter()
                .map(|(_, l)| PromptEntry {
                    text: l.to_string(),
                    category: None,
                })
                .collect()
        };
        Self::new(entries)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let content = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read prompt file {}", path.display()))?;
        Self::parse(&content).with_context(|| format!("in prompt file {}", path.display()))
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::InitModel(a) => cmd_init_model(&a),
        Command::Analyze(a) => cmd_run(&a, Phases::BOTH),
        Command::Particle(a) => cmd_run(&a, Phases::PARTICLE),
        Command::Vulnerable(a) => cmd_run(&a, Phases::VULNERABLE),
        Command::Advise(a) => cmd_advise(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                EXIT_USAGE
            } else {
                EXIT_ERROR
            }
        }
    }
}

pub fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}

#[derive(Debug, thiserror::Error)]
#[error("{0}\n\nFor more information, try '--help'.")]
struct UsageError(String);

fn cmd_init_model(a: &InitArgs) -> anyhow::Result<u8> {
    let arch = match (a.arch, &a.pattern) {
        (ArchArg::Hybrid, Some(p)) => Arch::hybrid_from_pattern(p, a.layers)?,
        (ArchArg::Hybrid, None) => {
            return Err(UsageError("--arch hybrid requires --pattern (e.g. AAAL)".into()).into())
        }
        (_, Some(_)) => {
            return Err(UsageError("--pattern is only valid with --arch hybrid".into()).into())
        }
        (ArchArg::Decoder, None) => Arch::DecoderAttention,
        (ArchArg::Linear, None) => Arch::LinearAttention,
    };
    let spec = ModelSpec {
        arch,
        n_layers: a.layers,
        d_model: a.d_model,
        n_heads: a.heads,
        d_ff: a.d_ff,
        vocab_size: a.vocab,
        max_seq: a.max_seq,
    };
    spec.validate().map_err(|e| UsageError(e.to_string()))?;
    let model = match a.plant_layer {
        Some(layer) => plant_particle(
            &spec,
            layer,
            a.plant_token.unwrap_or(101),
            a.plant_strength
                .unwrap_or_else(|| default_plant_strength(spec.d_model)),
            a.seed,
        )
        .map_err(|e| UsageError(e.to_string()))?,
        None => LayeredModel::init_random(&spec, a.seed)?,
    };
    save_weights(&model, &a.out).with_context(|| format!("cannot write {}", a.out.display()))?;
    println!(
        "wrote {}: {} ({}), {} layers, d_model {}, {} heads, d_ff {}, vocab {}, max_seq {}, seed {}",
        a.out.display(),
        spec.arch,
        spec.arch.pattern(spec.n_layers),
        spec.n_layers,
        spec.d_model,
        spec.n_heads,
        spec.d_ff,
        spec.vocab_size,
        spec.max_seq,
        a.seed
    );
    if let Some(layer) = a.plant_layer {
        println!(
            "planted particle at layer {layer}, token {}",
            a.plant_token.unwrap_or(101)
        );
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Copy)]
struct Phases {
    particle: bool,
    vulnerable: bool,
}

impl Phases {
    const BOTH: Phases = Phases {
        particle: true,
        vulnerable: true,
    };
    const PARTICLE: Phases = Phases {
        particle: true,
        vulnerable: false,
    };
    const VULNERABLE: Phases = Phases {
        particle: false,
        vulnerable: true,
    };
}

struct PromptOutcome {
    particle: Option<ParticleResult>,
    vulnerability: Option<VulnerabilityProfile>,
}

fn analyze_prompt(
    model: &LayeredModel,
    text: &str,
    config: &AnalysisConfig,
    phases: Phases,
) -> crate::Result<PromptOutcome> {
    let tokens = byte_tokens(text.as_bytes());
    let particle = phases
        .particle
        .then(|| task_particle(model, &tokens, config))
        .transpose()?;
    let vulnerability = phases
        .vulnerable
        .then(|| vulnerability_scan(model, &tokens, config))
        .transpose()?;
    Ok(PromptOutcome {
        particle,
        vulnerability,
    })
}

fn thread_pool() -> anyhow::Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| anyhow!("{THREADS_ENV} must be a non-negative integer, got `{v}`"))?,
        Err(_) => 0,
    };
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()?)
}

fn token_display(token: u32) -> String {
    match u8::try_from(token) {
        Ok(b) if b.is_ascii_graphic() || b == b' ' => format!("{token} {:?}", b as char),
        _ => token.to_string(),
    }
}

fn cmd_run(a: &RunArgs, phases: Phases) -> anyhow::Result<u8> {
    let model = load_weights(&a.model)
        .with_context(|| format!("cannot load model {}", a.model.display()))?;
    let corpus = match &a.prompt_file {
        Some(path) => PromptCorpus::load(path)?,
        None => PromptCorpus::new(
            a.prompt
                .iter()
                .map(|t| PromptEntry {
                    text: t.clone(),
                    category: None,
                })
                .collect(),
        )?,
    };
    let perturbation = Perturbation::new(1, a.mask_fraction, a.noise_std, a.seed)
        .map_err(|e| UsageError(e.to_string()))?;
    let config = AnalysisConfig {
        top_k: a.top_k,
        perturbation,
        layer_subset: a.layers.clone(),
        ..AnalysisConfig::default()
    };
    config
        .validate(&model)
        .map_err(|e| UsageError(e.to_string()))?;
    config
        .layers(&model)
        .map_err(|e| UsageError(e.to_string()))?;

    std::fs::create_dir_all(&a.out)
        .with_context(|| format!("cannot create output directory {}", a.out.display()))?;
    let want = |f: Format| a.format.contains(&f);

    let outcomes: Vec<crate::Result<PromptOutcome>> = thread_pool()?.install(|| {
        corpus
            .entries
            .par_iter()
            .map(|e| analyze_prompt(&model, &e.text, &config, phases))
            .collect()
    });

    let mut reports: Vec<(usize, PromptReport)> = Vec::new();
    let mut particles: Vec<(usize, ParticleResult, Option<String>)> = Vec::new();
    let mut failures: Vec<PromptFailure> = Vec::new();
    let mut degenerate = false;
    for (index, (entry, outcome)) in corpus.entries.iter().zip(outcomes).enumerate() {
        let outcome = match outcome {
            Ok(o) => o,
            Err(e) => {
                eprintln!("warning: prompt {index} skipped: {e}");
                failures.push(PromptFailure {
                    index,
                    error: e.to_string(),
                });
                continue;
            }
        };
        let report = PromptReport::new(
            model.spec(),
            &config,
            Some(PromptInfo {
                index,
                text: entry.text.clone(),
                category: entry.category.clone(),
            }),
            outcome.particle.as_ref(),
            outcome.vulnerability.as_ref(),
        );
        let mut line = format!("prompt {index}:");
        if let Some(p) = &outcome.particle {
            line += &format!(
                " target {} | particle layer {} (ratio {:.4}, depth {:.3})",
                token_display(p.target_token),
                p.particle_layer,
                p.particle_ratio,
                p.relative_depth
            );
        }
        if let Some(v) = &outcome.vulnerability {
            line += &format!(
                " | vulnerable layer {} (js {:.4})",
                v.vulnerable_layer,
                v.js_at(v.vulnerable_layer).unwrap_or(0.0)
            );
            if let Some(l) = v.lrs {
                line += &format!(" | lrs {l:.4}");
            }
            if v.degenerate {
                degenerate = true;
                eprintln!(
                    "warning: prompt {index}: degenerate vulnerability profile (no layer moved the output distribution)"
                );
            }
        }
        println!("{line}");

        let stem = a.out.join(format!("prompt_{index:03}"));
        if want(Format::Json) {
            emit_json(&report, stem.with_extension("json"))?;
        }
        if want(Format::Csv) {
            emit_csv(&report.layers, config.top_k, stem.with_extension("csv"))?;
        }
        if let Some(p) = outcome.particle {
            particles.push((index, p, entry.category.clone()));
        }
        reports.push((index, report));
    }

    if reports.is_empty() {
        bail!("no prompt could be analyzed");
    }

    if want(Format::Json) && corpus.entries.len() > 1 && phases.particle && !particles.is_empty() {
        let indexed: Vec<(usize, &ParticleResult, Option<String>)> = particles
            .iter()
            .map(|(i, p, c)| (*i, p, c.clone()))
            .collect();
        let mut aggregate = aggregate_indexed(&indexed)?;
        aggregate.failures = failures.clone();
        let o = &aggregate.overall;
        println!(
            "aggregate: {} prompts, mean relative depth {:.3}, median {:.3}, deep-half fraction {:.3}",
            o.count, o.mean_relative_depth, o.median_relative_depth, o.deep_half_fraction
        );
        emit_json(
            &AggregateDocument::new(model.spec(), &config, aggregate),
            a.out.join("aggregate.json"),
        )?;
    }

    if want(Format::Svg) {
        let labelled: Vec<(String, &PromptReport)> = reports
            .iter()
            .map(|(i, r)| {
                let label = match r.prompt.as_ref().and_then(|p| p.category.as_deref()) {
                    Some(c) => format!("p{i:03} {c}"),
                    None => format!("p{i:03}"),
                };
                (label, r)
            })
            .collect();
        if phases.particle {
            let spec = heatmap_from_reports(
                &labelled,
                HeatmapMode::Ratio,
                "Relative increase ratio by layer",
            )?;
            emit_heatmap_svg(&spec, a.out.join("ratio_heatmap.svg"))?;
        }
        if phases.vulnerable {
            let spec = heatmap_from_reports(
                &labelled,
                HeatmapMode::Js,
                "JS divergence under masking by layer",
            )?;
            emit_heatmap_svg(&spec, a.out.join("js_heatmap.svg"))?;
        }
    }

    Ok(if degenerate {
        EXIT_DEGENERATE
    } else if !failures.is_empty() {
        EXIT_PARTIAL
    } else {
        EXIT_OK
    })
}

fn cmd_advise(a: &AdviseArgs) -> anyhow::Result<u8> {
    let content = std::fs::read_to_string(&a.report)
        .with_context(|| format!("cannot read report {}", a.report.display()))?;
    let report: PromptReport = serde_json::from_str(&content)
        .with_context(|| format!("{} is not a per-prompt analyze report", a.report.display()))?;
    let particle = report
        .particle
        .as_ref()
        .ok_or_else(|| anyhow!("report has no particle section; run `analyze` first"))?;
    let profile = report
        .vulnerability_profile()
        .ok_or_else(|| anyhow!("report has no per-layer js values; run `analyze` first"))?;
    let plan = advise_hybrid(
        &profile,
        report.model.n_layers,
        particle.layer,
        a.freeze_quantile,
    )
    .context("cannot build a plan from this report")?;
    for w in &plan.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "plan: capacity {} (lightweight:full {}), frozen layers {:?}",
        plan.capacity_pattern, plan.capacity_ratio, plan.frozen_layers
    );
    emit_json(&PlanDocument::new(plan), &a.out)
        .with_context(|| format!("cannot write {}", a.out.display()))?;
    Ok(EXIT_OK)
}
