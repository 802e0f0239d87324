use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use erd_mentor::cli::{self, FeedbackArgs};
use erd_mentor::{api, FeedbackService, Store};
use erd_mentor_core::eval::LabelerSelection;
use erd_mentor_llm::{
    Backend, Gateway, HttpBackend, JsonlSink, LlmConfig, MockBackend, MockScript,
};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(
    name = "erd-mentor",
    version,
    about = "Relationship-level feedback on ER diagrams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the feedback pipeline once and print feedback and FAQ.
    Feedback {
        #[arg(long)]
        requirements: PathBuf,
        #[arg(long)]
        erd: PathBuf,
        #[arg(long, required_unless_present = "whole_diagram")]
        relationship: Option<String>,
        /// Replay a mock script instead of calling a model.
        #[arg(long)]
        mock: Option<PathBuf>,
        #[arg(long)]
        json: bool,
        /// Maintenance: prompt with the whole diagram at once.
        #[arg(long, hide = true, conflicts_with = "relationship")]
        whole_diagram: bool,
    },
    /// Precision, recall and F1 per mistake category from a label CSV.
    Eval {
        #[arg(long)]
        labels: PathBuf,
        /// Use only this labeler's labels.
        #[arg(long, conflicts_with = "majority")]
        labeler: Option<String>,
        /// Majority vote across labelers.
        #[arg(long)]
        majority: bool,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Holds the database and the exchange log.
        #[arg(long, default_value = "erd-mentor-data")]
        data_dir: PathBuf,
        /// Replay a mock script instead of calling a model.
        #[arg(long)]
        mock: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("error")),
        )
        .with_writer(std::io::stderr)
        .init();
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    match Cli::parse().command {
        Command::Feedback {
            requirements,
            erd,
            relationship,
            mock,
            json,
            whole_diagram,
        } => {
            let args = FeedbackArgs {
                requirements: &requirements,
                erd: &erd,
                relationship: relationship.as_deref(),
                mock: mock.as_deref(),
                json,
                whole_diagram,
            };
            match runtime.block_on(cli::feedback(args)) {
                Ok(report) => {
                    print!("{}", cli::render_feedback(&report, json));
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code())
                }
            }
        }
        Command::Eval {
            labels,
            labeler,
            majority,
        } => {
            let selection = match (labeler, majority) {
                (Some(id), _) => LabelerSelection::Labeler(id),
                (None, true) => LabelerSelection::Majority,
                (None, false) => LabelerSelection::Single,
            };
            match cli::eval(&labels, &selection) {
                Ok(report) => {
                    print!("{report}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code())
                }
            }
        }
        Command::Serve {
            addr,
            data_dir,
            mock,
        } => match runtime.block_on(serve(addr, data_dir, mock)) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
    }
}

async fn serve(
    addr: SocketAddr,
    data_dir: PathBuf,
    mock: Option<PathBuf>,
) -> Result<(), Box<dyn std::error::Error>> {
    std::fs::create_dir_all(&data_dir)?;
    let (backend, config): (Arc<dyn Backend>, LlmConfig) = match mock {
        Some(path) => (
            Arc::new(MockBackend::new(MockScript::from_file(&path)?)),
            LlmConfig::default(),
        ),
        None => {
            let config = LlmConfig::from_env()?;
            (Arc::new(HttpBackend::new(&config)?), config)
        }
    };
    let gateway = Gateway::new(backend, config)?
        .with_sink(Arc::new(JsonlSink::new(data_dir.join("exchanges.jsonl"))));
    let store = Store::open(&data_dir.join("erd-mentor.redb"))?;
    let service = Arc::new(FeedbackService::new(store, Arc::new(gateway)));

    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    eprintln!("erd-mentor listening on http://{}", listener.local_addr()?);
    axum::serve(listener, api::router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
