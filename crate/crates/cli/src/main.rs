use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use avinpaint::corruption::MaskAudit;
use avinpaint::metrics::pesq_tool_from_env;
use avinpaint::pipeline::diagnostics::GRADCHECK_TOLERANCE;
use avinpaint::pipeline::mask::{audit_cache_masks, audit_sampled_masks};
use avinpaint::pipeline::*;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "avinpaint", version, about = "Audio-visual speech in-painting")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-utterance stages.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Training and inference precision.
    #[arg(long, global = true)]
    precision: Option<Precision>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic audio-visual corpus with a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        n_train: usize,
        /// Defaults to a tenth of the training set.
        #[arg(long)]
        n_val: Option<usize>,
        #[arg(long, default_value_t = 50)]
        n_test: usize,
    },
    /// Extract and normalize features into the cache.
    Prepare {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Sample one gap mask per cached utterance.
    Mask {
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Train the configured model variant.
    Train {
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        run: Option<PathBuf>,
        /// Continue from the run directory's last checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Restore masked utterances with a checkpoint or emit a baseline.
    Inpaint {
        #[arg(long, required_unless_present = "baseline", conflicts_with = "baseline")]
        checkpoint: Option<PathBuf>,
        /// masked or clean
        #[arg(long)]
        baseline: Option<Baseline>,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test")]
        split: SplitArg,
        /// Also write input/restored/ground-truth PNG triptychs.
        #[arg(long)]
        png: bool,
    },
    /// Score in-painted outputs against the cache.
    Evaluate {
        #[arg(long)]
        inpainted: PathBuf,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: SplitArg,
    },
    /// Finite-difference gradient checks of every layer and the micro model.
    Gradcheck,
    /// Audit mask invariants over a cache or freshly sampled masks.
    Maskstats {
        #[arg(long, conflicts_with = "sample")]
        cache: Option<PathBuf>,
        /// Sample this many masks instead of reading a cache.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, default_value_t = 149)]
        frames: usize,
    },
}

#[derive(Clone, Copy)]
struct SplitArg(Split);

impl std::str::FromStr for SplitArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Split::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .map(SplitArg)
            .ok_or_else(|| format!("unknown split {s:?}, expected train, val or test"))
    }
}

fn load_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg = cfg.with_seed(s);
    }
    if let Some(w) = g.workers {
        cfg.workers = w;
    }
    if let Some(p) = g.precision {
        cfg.precision = p;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

#[derive(Serialize)]
struct AuditSummary<'a> {
    source: String,
    #[serde(flatten)]
    audit: &'a MaskAudit,
}

fn or_config(flag: Option<PathBuf>, configured: &Path) -> PathBuf {
    flag.unwrap_or_else(|| configured.to_path_buf())
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Synth { out, n_train, n_val, n_test } => {
            let sc = SynthConfig {
                n_train,
                n_val,
                n_test,
                seed: cfg.seed,
                ..SynthConfig::default()
            };
            let m = cmd_synth(&sc, &out)?;
            println!("wrote {} utterances to {}", m.entries.len(), out.display());
        }
        Command::Prepare { manifest, cache } => {
            let path = manifest
                .or(cfg.paths.manifest.clone())
                .context("no manifest: pass --manifest or set paths.manifest")?;
            let m = Manifest::load(&path)?;
            let s = cmd_prepare(&m, &cfg.dsp, &cfg.visual, &or_config(cache, &cfg.paths.cache), cfg.workers)?;
            print_json(&s);
        }
        Command::Mask { cache } => {
            let meta = cmd_mask(&or_config(cache, &cfg.paths.cache), cfg.seed, &cfg.mask)?;
            println!("wrote {} masks (seed {})", meta.count, meta.seed);
        }
        Command::Train { cache, run, resume } => {
            let mut cfg = cfg;
            cfg.paths.cache = or_config(cache, &cfg.paths.cache);
            cfg.paths.run = or_config(run, &cfg.paths.run);
            let s = cmd_train(&cfg, resume)?;
            print_json(&s);
        }
        Command::Inpaint { checkpoint, baseline, cache, out, split, png } => {
            let opts = InpaintOptions {
                split: split.0,
                png,
                workers: cfg.workers,
                ..InpaintOptions::default()
            };
            let source = match (&checkpoint, baseline) {
                (Some(p), _) => Source::Checkpoint(p),
                (None, Some(b)) => Source::Baseline(b),
                (None, None) => bail!("pass --checkpoint or --baseline"),
            };
            let meta = cmd_inpaint(source, &or_config(cache, &cfg.paths.cache), &out, &opts)?;
            println!("in-painted {} utterances into {}", meta.utterances.len(), out.display());
        }
        Command::Evaluate { inpainted, cache, split } => {
            let tool = pesq_tool_from_env();
            let r = cmd_evaluate(&inpainted, &or_config(cache, &cfg.paths.cache), split.0, tool.as_deref(), cfg.workers)?;
            print_json(&r.means);
        }
        Command::Gradcheck => {
            let cases = gradcheck_suite(cfg.seed)?;
            let mut ok = true;
            for c in &cases {
                let pass = c.report.passed(GRADCHECK_TOLERANCE);
                ok &= pass;
                println!("{:<28} max rel error {:.3e}  {}", c.name, c.report.max_rel_error, if pass { "ok" } else { "FAIL" });
            }
            return Ok(ok);
        }
        Command::Maskstats { cache, sample, frames } => {
            let (source, audit) = match sample {
                Some(n) => (format!("{n} sampled masks over {frames} frames"), audit_sampled_masks(cfg.seed, n, frames, &cfg.mask)?),
                None => {
                    let c = or_config(cache, &cfg.paths.cache);
                    (c.display().to_string(), audit_cache_masks(&c, &cfg.mask)?)
                }
            };
            let ok = audit.violations.is_empty();
            print_json(&AuditSummary { source, audit: &audit });
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(2)
        }
    }
}
