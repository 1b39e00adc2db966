use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use capt_core::inventory::PhoneInventory;
use capt_core::pipeline::{Outcome, PipelineConfig};
use capt_gateway::config::{ProviderConfig, ServiceConfig};
use capt_gateway::service::{run_analysis, Catalog, Provider};
use capt_gateway::Server;
use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

/// Exit status for a recording rejected by validation.
const EXIT_REJECTED: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "capt", version, about = "Pronunciation analysis service and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Analyze one recording and write the result JSON.
    Analyze {
        /// Exercise file: a catalog or a single exercise object.
        #[arg(long)]
        exercise: PathBuf,
        /// Exercise id; optional when the catalog holds exactly one exercise.
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        audio: PathBuf,
        /// Posteriorgram JSON. Without it the demo provider is used.
        #[arg(long)]
        ppg: Option<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Service config supplying thresholds and provider.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check an exercise catalog and list its exercises.
    ValidateCatalog { catalog: PathBuf },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve { config } => serve(&config).map(|()| ExitCode::SUCCESS),
        Command::Analyze { exercise, id, audio, ppg, out, config } => {
            analyze(&exercise, id.as_deref(), &audio, ppg.as_deref(), out.as_deref(), config.as_deref())
        }
        Command::ValidateCatalog { catalog } => validate_catalog(&catalog).map(|()| ExitCode::SUCCESS),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {}", describe(&e));
        ExitCode::FAILURE
    })
}

/// The error chain joined with `: `, skipping causes already quoted by
/// their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn serve(config: &Path) -> anyhow::Result<()> {
    let cfg = ServiceConfig::load(config)?;
    let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
    runtime.block_on(async {
        let server = Server::bind(&cfg).await?;
        println!("listening on http://{}", server.local_addr()?);
        server.run().await.context("server failed")
    })
}

fn analyze(
    catalog_path: &Path,
    id: Option<&str>,
    audio_path: &Path,
    ppg_path: Option<&Path>,
    out: Option<&Path>,
    config: Option<&Path>,
) -> anyhow::Result<ExitCode> {
    let inv = PhoneInventory::default_shared();
    let (provider_cfg, thresholds) = match config {
        Some(path) => {
            let cfg = ServiceConfig::load(path)?;
            (cfg.provider, cfg.thresholds)
        }
        None => (ProviderConfig::default(), PipelineConfig::default()),
    };
    let catalog = Catalog::load_exercise_file(catalog_path, &inv).with_context(|| format!("loading {}", catalog_path.display()))?;
    let script = match id {
        Some(id) => catalog.get(id).with_context(|| format!("no exercise '{id}' in {}", catalog_path.display()))?,
        None if catalog.len() == 1 => &catalog.exercises()[0],
        None => bail!("{} holds {} exercises; pass --id", catalog_path.display(), catalog.len()),
    };
    let audio = std::fs::read(audio_path).with_context(|| format!("reading {}", audio_path.display()))?;
    let ppg = ppg_path
        .map(|p| std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())))
        .transpose()?;
    let provider = Provider::from_config(&provider_cfg, inv.clone()).context("configuring provider")?;

    let analysis = run_analysis(&audio, ppg.as_deref(), script, &provider, &inv, &thresholds)?;
    let mut body = analysis.outcome.body_json();
    body.push('\n');
    match out {
        Some(path) => std::fs::write(path, &body).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{body}"),
    }
    Ok(match &analysis.outcome {
        Outcome::Analyzed(_) => ExitCode::SUCCESS,
        Outcome::Rejected(report) => {
            let failed = report.failed_code.map(|c| c.code()).unwrap_or("unknown");
            eprintln!("recording rejected: {failed} check failed");
            ExitCode::from(EXIT_REJECTED)
        }
    })
}

fn validate_catalog(path: &Path) -> anyhow::Result<()> {
    let inv = PhoneInventory::default_shared();
    let catalog = Catalog::load(path, &inv).with_context(|| format!("loading {}", path.display()))?;
    for s in catalog.summaries() {
        println!("{}\t{} words\t{}", s.id, s.word_count, s.text);
    }
    println!("{} exercises ok", catalog.len());
    Ok(())
}
