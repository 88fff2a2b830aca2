use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use mpcs_core::config::{Paths, Stack};
use mpcs_core::hub::{server, Hub};
use mpcs_core::sim::{self, SimConfig};

#[derive(Parser)]
#[command(name = "mpcs", version, about = "Multi-party chat server with a finance-advisory bot ensemble")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the chat hub behind a WebSocket endpoint.
    Serve(ServeArgs),
    /// Replay a dialogue suite against a running hub.
    Simulate(SimulateArgs),
    /// Check that the configuration files load and cross-reference.
    Check(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Domain file: bots, templates, lexicons and rates.
    #[arg(long)]
    domain: Option<PathBuf>,
    /// Norm file (JSON).
    #[arg(long)]
    norms: Option<PathBuf>,
    /// Intent registry and flow edges (JSON).
    #[arg(long)]
    flow: Option<PathBuf>,
    /// Intent to action bindings (JSON).
    #[arg(long)]
    bindings: Option<PathBuf>,
    /// Word vectors: a "<count> <dim>" header, then one word per line.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Intent training samples, one JSON record per line.
    #[arg(long)]
    trainset: Option<PathBuf>,
    /// Directory with definitions.jsonl and news.jsonl.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

impl ConfigArgs {
    fn stack(&self) -> anyhow::Result<Stack> {
        let paths = Paths {
            domain: self.domain.clone(),
            norms: self.norms.clone(),
            flow: self.flow.clone(),
            bindings: self.bindings.clone(),
            embeddings: self.embeddings.clone(),
            trainset: self.trainset.clone(),
            corpus: self.corpus.clone(),
        };
        Ok(Stack::from_paths(&paths)?)
    }
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8765)]
    port: u16,
    /// Directory for per-group context logs.
    #[arg(long)]
    context: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// Suite file; the bundled dialogue is used when omitted.
    #[arg(long)]
    suite: Option<PathBuf>,
    #[arg(long, default_value = "ws://127.0.0.1:8765")]
    endpoint: String,
    #[arg(long, default_value_t = 1)]
    users: usize,
    /// Seconds to wait for each expected response.
    #[arg(long, default_value_t = 240.0)]
    max_wait: f64,
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    /// Write the full JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Serve(a) => serve(a).await,
        Command::Simulate(a) => simulate(a).await,
        Command::Check(a) => {
            let stack = a.stack()?;
            println!("ok: {} bots, {} norms", stack.bots.len(), stack.norms.len());
            Ok(())
        }
    }
}

async fn serve(a: ServeArgs) -> anyhow::Result<()> {
    let stack = Arc::new(a.config.stack()?);
    let hub = match a.context {
        Some(dir) => {
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            Hub::with_context_dir(stack, dir)
        }
        None => Hub::new(stack),
    };
    let (addr, handle) = server::spawn(hub, &format!("{}:{}", a.host, a.port)).await?;
    eprintln!("listening on ws://{addr}");
    tokio::select! {
        r = handle => r?,
        _ = tokio::signal::ctrl_c() => {}
    }
    Ok(())
}

async fn simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let suite = match &a.suite {
        Some(p) => sim::load_suite_file(p)?,
        None => sim::load_suite(sim::BUILTIN_SUITE)?,
    };
    if !(a.max_wait.is_finite() && a.max_wait > 0.0) {
        bail!("--max-wait must be positive");
    }
    let config = SimConfig {
        endpoint: a.endpoint,
        users: a.users,
        max_wait: Duration::from_secs_f64(a.max_wait),
        repeat: a.repeat,
    };
    let report = sim::run_simulation(&suite, &config).await?;
    let stats = sim::summarize(&report);
    print!("{}", sim::render_summary(&stats));
    for f in &report.failures {
        println!(
            "FAIL run {} user {} {} step {} response {}: expected {}: {}",
            f.run, f.user, f.dialogue, f.step, f.response, f.expected, f.reason
        );
    }
    println!(
        "{} responses, {} failures, {} extras, {} foreign events, {:.0} ms",
        report.records.len(),
        report.failures.len(),
        report.extras,
        report.foreign_events,
        report.elapsed_ms
    );
    if let Some(out) = &a.out {
        let body = serde_json::json!({ "report": report, "stats": stats });
        std::fs::write(out, serde_json::to_string_pretty(&body)?)
            .with_context(|| format!("writing {}", out.display()))?;
    }
    if !report.passed() {
        std::process::exit(1);
    }
    Ok(())
}
