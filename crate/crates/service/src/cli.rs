use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use logoped_core::codec::{wav_read, wav_write, AdpcmLayout, WavFormat};
use logoped_core::datastore::{ChildDraft, Evaluation, Phase, Store};
use logoped_core::fcl::parse_fcl;
use logoped_core::segmentation::{detect_markers, segment_stream};
use logoped_core::therapy::{self, Override};
use logoped_core::FuzzySystem;
use serde::Serialize;
use serde_json::json;

use crate::api::{router, AppState};
use crate::config::{Config, CONFIG_ENV};

#[derive(Debug, Parser)]
#[command(name = "logoped", version, about = "Speech-therapy session toolkit")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Store directory; overrides `store_dir` from the config.
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode a WAV file (PCM16 or IMA-ADPCM) to PCM16.
    Decode { input: PathBuf, output: PathBuf },
    /// Encode a WAV file to IMA-ADPCM.
    Encode {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 256)]
        block_align: u16,
    },
    /// Print the tone markers found in a recording.
    Markers { input: PathBuf },
    /// Print the child utterances found between markers.
    Segment { input: PathBuf },
    /// Evaluate a knowledge base for explicit inputs.
    Infer {
        #[command(flatten)]
        kb: KbArg,
        /// `name=value`, repeatable.
        #[arg(long = "input", value_parser = parse_input, required = true)]
        inputs: Vec<(String, f64)>,
    },
    /// Suggest difficulty and dosage, for a stored child or explicit inputs.
    Suggest {
        /// Stores the suggestion for this child.
        #[arg(long, conflicts_with_all = ["severity", "progress", "kb"])]
        child: Option<String>,
        #[arg(long, requires = "progress", required_unless_present = "child", allow_negative_numbers = true)]
        severity: Option<f64>,
        #[arg(long, requires = "severity", allow_negative_numbers = true)]
        progress: Option<f64>,
        #[command(flatten)]
        kb: KbArg,
    },
    /// Register a child, or update one when `--id` exists.
    AddChild {
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        name: String,
        #[arg(long)]
        age_months: u16,
        #[arg(long)]
        disorder: String,
        #[arg(long)]
        group: String,
    },
    /// Store and segment a recording for a child.
    Ingest {
        #[arg(long)]
        child: String,
        #[arg(long)]
        phase: String,
        input: PathBuf,
    },
    /// Score one segment, replacing any earlier evaluation.
    Evaluate {
        #[arg(long)]
        segment: String,
        #[arg(long)]
        expected_sound: String,
        #[arg(long)]
        probe: String,
        #[arg(long)]
        score: u8,
    },
    /// Correct a stored suggestion and adapt the rule weights.
    Override {
        #[arg(long)]
        suggestion: String,
        #[arg(long)]
        difficulty: Option<f64>,
        #[arg(long)]
        dosage: Option<f64>,
    },
    /// Print an exercise with its assets inlined.
    Bundle { exercise: String },
    /// Print the store's knowledge base, or replace it.
    Kb {
        #[arg(long)]
        set: Option<PathBuf>,
    },
    /// Print the cohort report.
    Report {
        #[arg(long)]
        csv: bool,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        listen: Option<std::net::SocketAddr>,
    },
}

#[derive(Debug, Args)]
pub struct KbArg {
    /// FCL file to use instead of the store's knowledge base.
    #[arg(long)]
    pub kb: Option<PathBuf>,
}

fn parse_input(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let value: f64 = value.trim().parse().map_err(|_| format!("`{value}` is not a number"))?;
    Ok((name.trim().to_string(), value))
}

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn print_json(out: &mut dyn Write, value: &impl Serialize) -> anyhow::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

impl Cli {
    pub fn load_config(&self) -> anyhow::Result<Config> {
        let mut cfg = Config::load_or_default(self.config.as_deref())?;
        if let Some(dir) = &self.store {
            cfg.store_dir = dir.clone();
        }
        Ok(cfg)
    }
}

fn open_store(cfg: &Config) -> anyhow::Result<Store> {
    Store::open_dir(&cfg.store_dir).with_context(|| format!("opening store {}", cfg.store_dir.display()))
}

fn load_kb(arg: &KbArg, cfg: &Config) -> anyhow::Result<FuzzySystem> {
    match &arg.kb {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_fcl(&text).with_context(|| format!("in {}", path.display()))
        }
        None => Ok(open_store(cfg)?.kb().clone()),
    }
}

fn now_ms() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

/// Runs one command, writing its result to `out`. `serve` blocks until
/// Ctrl-C.
pub fn run(cli: Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    let cfg = cli.load_config()?;
    match cli.command {
        Command::Decode { input, output } => {
            let pcm = wav_read(&read(&input)?)?;
            write_file(&output, &wav_write(&pcm, WavFormat::Pcm16))
        }
        Command::Encode { input, output, block_align } => {
            let pcm = wav_read(&read(&input)?)?;
            let layout = AdpcmLayout::new(block_align)?;
            write_file(&output, &wav_write(&pcm, WavFormat::ImaAdpcm(layout)))
        }
        Command::Markers { input } => {
            let pcm = wav_read(&read(&input)?)?;
            print_json(out, &detect_markers(&pcm))
        }
        Command::Segment { input } => {
            let pcm = wav_read(&read(&input)?)?;
            let markers = detect_markers(&pcm);
            let segments = segment_stream(&pcm, &markers, &cfg.segmenter)?;
            let ms = |i: usize| i as f64 * 1000.0 / f64::from(pcm.sample_rate());
            let segments: Vec<_> = segments
                .iter()
                .map(|s| json!({"start": s.start, "end": s.end, "start_ms": ms(s.start), "end_ms": ms(s.end)}))
                .collect();
            print_json(out, &json!({"markers": markers, "segments": segments}))
        }
        Command::Infer { kb, inputs } => {
            let kb = load_kb(&kb, &cfg)?;
            let inputs: BTreeMap<String, f64> = inputs.into_iter().collect();
            let (outputs, trace) = kb.infer(&inputs)?;
            print_json(out, &json!({"outputs": outputs, "trace": trace}))
        }
        Command::Suggest { child: Some(child), .. } => {
            let mut store = open_store(&cfg)?;
            let sug = store.suggest_for_child(&child, now_ms())?;
            store.persist()?;
            print_json(out, &sug)
        }
        Command::Suggest { child: None, severity, progress, kb } => {
            let (Some(severity), Some(progress)) = (severity, progress) else {
                bail!("give --child, or both --severity and --progress");
            };
            let kb = load_kb(&kb, &cfg)?;
            print_json(out, &therapy::suggest(&kb, "", severity, progress, now_ms())?)
        }
        Command::AddChild { id, name, age_months, disorder, group } => {
            let mut store = open_store(&cfg)?;
            let draft = ChildDraft { id, name, age_months, disorder, therapy_group: group };
            let id = store.upsert_child(draft)?;
            store.persist()?;
            print_json(out, store.child(&id)?)
        }
        Command::Ingest { child, phase, input } => {
            let phase: Phase = phase.parse()?;
            let mut store = open_store(&cfg)?;
            let session = store.ingest_session(&child, &read(&input)?, phase, &cfg.segmenter, now_ms())?;
            store.persist()?;
            print_json(out, &session)
        }
        Command::Evaluate { segment, expected_sound, probe, score } => {
            let mut store = open_store(&cfg)?;
            let ev = store.record_evaluation(Evaluation { segment_id: segment, expected_sound, probe, score })?;
            store.persist()?;
            print_json(out, &ev)
        }
        Command::Override { suggestion, difficulty, dosage } => {
            let mut store = open_store(&cfg)?;
            let ov = Override { suggestion_id: suggestion, difficulty, dosage };
            let record = store.apply_override(&ov, &cfg.learning, now_ms())?;
            store.persist()?;
            print_json(out, &record)
        }
        Command::Bundle { exercise } => print_json(out, &open_store(&cfg)?.exercise_bundle(&exercise)?),
        Command::Kb { set: None } => {
            out.write_all(open_store(&cfg)?.kb_text().as_bytes())?;
            Ok(())
        }
        Command::Kb { set: Some(path) } => {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let mut store = open_store(&cfg)?;
            store.replace_kb(&text).with_context(|| format!("in {}", path.display()))?;
            store.persist()?;
            Ok(())
        }
        Command::Report { csv } => {
            let report = open_store(&cfg)?.cohort_report();
            if csv {
                out.write_all(report.to_csv().as_bytes())?;
                Ok(())
            } else {
                print_json(out, &report)
            }
        }
        Command::Serve { listen } => {
            let addr = listen.unwrap_or(cfg.listen);
            let store = open_store(&cfg)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(serve(Arc::new(AppState::new(store, &cfg)), addr))
        }
    }
}

pub async fn serve(state: Arc<AppState>, addr: std::net::SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
