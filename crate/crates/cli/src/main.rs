use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use actorlens_core::detect::{self, DetectorConfig};
use actorlens_core::metrics::{self, MetricVector, MetricsConfig};
use actorlens_core::store::Store;
use actorlens_core::synth;
use actorlens_core::telemetry::{self, MatchRecord};
use actorlens_server::{ServeConfig, DATA_DIR_ENV};

const DEFAULT_MIX: &str = "normal=0.8,afk=0.1,feeder=0.1";

/// Detect and label actor players in MOBA match telemetry.
#[derive(Parser)]
#[command(name = "actorlens", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus and its ground-truth sidecar.
    Synth(SynthArgs),
    /// Load a corpus into the persistent store.
    Ingest(IngestArgs),
    /// Flag low-level actors and write a JSON Lines report.
    Detect(DetectArgs),
    /// Write per player-match metric vectors as CSV.
    Metrics(MetricsArgs),
    /// Export stored labels as CSV.
    LabelExport(LabelExportArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Corpus destination; the sidecar is written next to it as <stem>.truth.jsonl.
    #[arg(long = "out")]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 60)]
    matches: usize,
    /// Archetype frequencies, e.g. normal=0.8,afk=0.1,feeder=0.1
    #[arg(long, default_value = DEFAULT_MIX)]
    mix: String,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Store root; defaults to $ACTORLENS_DATA_DIR.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "out")]
    out: Option<PathBuf>,
    /// Idle seconds at or above which a player is an AFK actor.
    #[arg(long, default_value_t = 120.0)]
    afk_threshold: f64,
    /// Disguise-resistance ratio at or below which a death is suspected.
    #[arg(long, default_value_t = 0.4)]
    ratio_threshold: f64,
    /// Suspected deaths at or above which a player is a feeder.
    #[arg(long, default_value_t = 3)]
    count_threshold: u32,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "out")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LabelExportArgs {
    #[arg(long = "out")]
    out: Option<PathBuf>,
    /// Store root; defaults to $ACTORLENS_DATA_DIR.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Store root; defaults to $ACTORLENS_DATA_DIR, else an in-memory store.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn finish(mut w: Box<dyn Write>, path: Option<&Path>) -> Result<()> {
    w.flush().with_context(|| match path {
        Some(p) => format!("cannot write {}", p.display()),
        None => "cannot write to stdout".to_string(),
    })
}

/// Parses every match of a JSON Lines corpus, reporting malformed lines on stderr.
fn read_corpus(path: &Path) -> Result<Vec<MatchRecord>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut matches = Vec::new();
    let mut bad = 0usize;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("cannot read {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        match telemetry::parse_match(&line) {
            Ok(m) => matches.push(m),
            Err(e) => {
                bad += 1;
                eprintln!("{}:{}: {e}", path.display(), i + 1);
            }
        }
    }
    if bad > 0 {
        bail!("{}: {bad} malformed line(s)", path.display());
    }
    Ok(matches)
}

fn data_dir(flag: Option<PathBuf>) -> Result<PathBuf> {
    flag.or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .with_context(|| format!("no store root: pass --data-dir or set {DATA_DIR_ENV}"))
}

fn open_store(flag: Option<PathBuf>) -> Result<Store> {
    let dir = data_dir(flag)?;
    Store::open_dir(&dir).with_context(|| format!("cannot open store at {}", dir.display()))
}

fn run_synth(a: SynthArgs) -> Result<()> {
    let mix = synth::parse_mix(&a.mix)?;
    let corpus = synth::generate_corpus(a.matches, &mix, a.seed)?;
    match a.out {
        Some(out) => {
            let truth = synth::truth_path_for(&out);
            corpus.write(&out, &truth)?;
            eprintln!(
                "wrote {} matches to {} and ground truth to {}",
                corpus.matches.len(),
                out.display(),
                truth.display()
            );
        }
        None => {
            let mut w = output(None)?;
            w.write_all(corpus.to_jsonl().as_bytes())?;
            finish(w, None)?;
        }
    }
    Ok(())
}

fn run_ingest(a: IngestArgs) -> Result<()> {
    let store = open_store(a.data_dir)?;
    let report = store
        .ingest_file(&a.input)
        .with_context(|| format!("cannot ingest {}", a.input.display()))?;
    for e in &report.errors {
        eprintln!("{}:{}: {}", a.input.display(), e.line, e.message);
    }
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn run_detect(a: DetectArgs) -> Result<()> {
    let cfg = DetectorConfig::new(a.afk_threshold, a.ratio_threshold, a.count_threshold)?;
    let matches = read_corpus(&a.input)?;
    let mut w = output(a.out.as_deref())?;
    let mut flagged = 0usize;
    for m in &matches {
        for row in detect::detect_match(m, &cfg) {
            flagged += usize::from(row.low_level);
            serde_json::to_writer(&mut w, &row)?;
            w.write_all(b"\n")?;
        }
    }
    finish(w, a.out.as_deref())?;
    eprintln!("{} matches, {flagged} low-level actors", matches.len());
    Ok(())
}

fn run_metrics(a: MetricsArgs) -> Result<()> {
    let matches = read_corpus(&a.input)?;
    let cfg = MetricsConfig::default();
    let mut csv = csv::Writer::from_writer(output(a.out.as_deref())?);
    let mut header = vec!["match_id", "player_id"];
    header.extend(MetricVector::NAMES);
    csv.write_record(&header)?;
    for m in &matches {
        for p in &m.players {
            let v = metrics::metric_vector(m, &p.player_id, &cfg)?;
            let mut row = vec![m.match_id.clone(), p.player_id.clone()];
            row.extend(v.as_array().iter().map(f64::to_string));
            csv.write_record(&row)?;
        }
    }
    let w = csv.into_inner().map_err(|e| e.into_error())?;
    finish(w, a.out.as_deref())
}

fn run_label_export(a: LabelExportArgs) -> Result<()> {
    let store = open_store(a.data_dir)?;
    let mut w = output(a.out.as_deref())?;
    w.write_all(store.export_csv().as_bytes())?;
    finish(w, a.out.as_deref())
}

fn run_serve(a: ServeArgs) -> Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let cfg = ServeConfig {
        port: a.port,
        data_dir: a.data_dir,
    };
    rt.block_on(actorlens_server::serve(cfg))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(io::stderr)
        .init();
    let result = match cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Ingest(a) => run_ingest(a),
        Command::Detect(a) => run_detect(a),
        Command::Metrics(a) => run_metrics(a),
        Command::LabelExport(a) => run_label_export(a),
        Command::Serve(a) => run_serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
