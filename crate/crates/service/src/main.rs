use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use invoice_core::model::{LlmMode, PipelineConfig};
use invoice_eval::{gen_corpus, score_run, Corpus, Degradation};
use invoice_service::settings::{self, parse_llm_mode};
use invoice_service::{run_batch, BatchError, COMPLETE, NO_DATA};

/// Invoice extraction: batch processing, REST service and evaluation.
///
/// The live LLM key is read from LLM_API_KEY only.
#[derive(Parser)]
#[command(name = "invoicer", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract every input file and write one table.
    Process {
        /// Files or directories (their direct children are read).
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        /// Output file; the extension picks xlsx, csv, json or sql.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// `live`, `refusal` or `replay:<dir>`.
        #[arg(long, value_parser = parse_llm_mode)]
        llm: Option<LlmMode>,
        /// Review threshold.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Run the REST service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = parse_llm_mode)]
        llm: Option<LlmMode>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Write a seeded synthetic corpus with replay fixtures.
    GenCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// none, skew:<deg>, noise:<p> or both:<deg>:<p>.
        #[arg(long, default_value = "none")]
        degradation: Degradation,
    },
    /// Score the pipeline on a corpus and write metrics.json / metrics.csv.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to the corpus's own replay fixtures.
        #[arg(long, value_parser = parse_llm_mode)]
        llm: Option<LlmMode>,
    },
}

fn config(path: Option<&PathBuf>, llm: Option<LlmMode>) -> Result<(PipelineConfig, settings::ServiceSettings), ExitCode> {
    match settings::load(path.map(PathBuf::as_path)) {
        Ok((mut cfg, svc)) => {
            if let Some(mode) = llm {
                cfg.llm.mode = mode;
            }
            Ok((cfg, svc))
        }
        Err(e) => {
            eprintln!("error: {e}");
            Err(ExitCode::from(1))
        }
    }
}

fn process(input: Vec<PathBuf>, out: PathBuf, cfg: PipelineConfig) -> ExitCode {
    match run_batch(cfg, &input, &out) {
        Ok(summary) if summary.exported.is_empty() => {
            println!("{NO_DATA}");
            ExitCode::from(2)
        }
        Ok(summary) => {
            tracing::info!(
                files = summary.outcomes.len(),
                exported = summary.exported.len(),
                failed = summary.failed(),
                out = %out.display(),
                "batch finished"
            );
            println!("{COMPLETE}");
            ExitCode::SUCCESS
        }
        Err(e @ (BatchError::NoInputs | BatchError::Input { .. })) => {
            eprintln!("error: {e}");
            println!("{NO_DATA}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    match Cli::parse().command {
        Command::Process {
            input,
            out,
            config: path,
            llm,
            threshold,
        } => {
            let mut cfg = match config(path.as_ref(), llm) {
                Ok((cfg, _)) => cfg,
                Err(code) => return code,
            };
            if let Some(t) = threshold {
                cfg.review_threshold = t;
                if let Err(e) = cfg.validate() {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            }
            process(input, out, cfg)
        }
        Command::Serve {
            port,
            host,
            store,
            config: path,
            llm,
            workers,
        } => {
            let (cfg, mut svc) = match config(path.as_ref(), llm) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(w) = workers {
                svc.workers = w.max(1);
            }
            let addr: SocketAddr = match format!("{host}:{port}").parse() {
                Ok(a) => a,
                Err(e) => {
                    eprintln!("error: bad address {host}:{port}: {e}");
                    return ExitCode::from(1);
                }
            };
            let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
            match rt.block_on(invoice_service::serve(addr, &store, cfg, svc)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(1)
                }
            }
        }
        Command::GenCorpus {
            out,
            seed,
            n,
            degradation,
        } => match gen_corpus(&out, seed, n, degradation) {
            Ok(c) => {
                println!("{} invoices written to {}", c.ids().len(), out.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Command::Eval {
            corpus,
            out,
            config: path,
            llm,
        } => {
            let corpus = match Corpus::open(&corpus) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            let llm = llm.or_else(|| Some(LlmMode::Replay { dir: corpus.replay_dir() }));
            let (cfg, _) = match config(path.as_ref(), llm) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let report = match score_run(&corpus, &cfg) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            if let Some(out) = out {
                if let Err(e) = report.write(&out) {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            }
            println!(
                "required-field accuracy {:.4}  invoice accuracy {:.4}  intervention {:.4}  p50 {:.1} ms",
                report.required_field_accuracy.rate,
                report.invoice_accuracy.rate,
                report.intervention_rate.rate,
                report.latency.p50_ms
            );
            ExitCode::SUCCESS
        }
    }
}
