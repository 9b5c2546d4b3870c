use std::io::Read;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};

use g4c_cli::commands::{self, CheckOptions, EXIT_USAGE};
use g4c_cli::server::{router, AppState};
use g4c_core::{DateWindow, Filter};

/// Evaluate and analyse formalised grant conditions.
#[derive(Parser)]
#[command(name = "g4c", version)]
struct Cli {
    /// Knowledge-base directory. The G4C_KB environment variable takes precedence.
    #[arg(long, global = true, default_value = "kb")]
    kb: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the knowledge base, check concepts for cycles and grants for consistency.
    Lint,
    /// Evaluate every grant against a company profile (JSON; `-` or omitted reads stdin).
    Check {
        profile: Option<PathBuf>,
        #[arg(long)]
        json: bool,
        /// Print the evaluation trace of one grant instead of the table.
        #[arg(long, value_name = "GRANT")]
        explain: Option<String>,
        #[arg(long)]
        category: Option<String>,
        /// Only grants valid on or after this date.
        #[arg(long, value_name = "YYYY-MM-DD")]
        from: Option<NaiveDate>,
        /// Only grants valid on or before this date.
        #[arg(long, value_name = "YYYY-MM-DD")]
        to: Option<NaiveDate>,
    },
    /// Try to derive that the conditions of one grant imply those of another.
    Prove {
        from: String,
        to: String,
        /// Also write the derivation as an HTML page.
        #[arg(long, value_name = "FILE")]
        html: Option<PathBuf>,
    },
    /// List all implications between grants.
    Implications {
        #[arg(long)]
        json: bool,
    },
    /// Run the JSON HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// Directory of static files served under `/`.
        #[arg(long = "static", value_name = "DIR")]
        static_dir: Option<PathBuf>,
    },
}

fn read_profile(path: Option<&PathBuf>) -> std::io::Result<String> {
    match path {
        Some(p) if p.as_os_str() != "-" => std::fs::read_to_string(p),
        _ => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            Ok(s)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let kb = g4c_cli::resolve_kb_path(cli.kb);
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    let code = match cli.command {
        Command::Lint => commands::lint(&kb, &mut out, &mut err),
        Command::Check { profile, json, explain, category, from, to } => match read_profile(profile.as_ref())
        {
            Ok(text) => {
                let opts = CheckOptions {
                    profile_text: &text,
                    filter: Filter { category, window: DateWindow { from, to } },
                    json,
                    explain: explain.as_deref(),
                };
                commands::check(&kb, &opts, &mut out, &mut err)
            }
            Err(e) => {
                eprintln!("error: cannot read profile: {e}");
                EXIT_USAGE
            }
        },
        Command::Prove { from, to, html } => {
            commands::prove(&kb, &from, &to, html.as_deref(), &mut out, &mut err)
        }
        Command::Implications { json } => commands::implications(&kb, json, &mut out, &mut err),
        Command::Serve { listen, static_dir } => {
            drop((out, err));
            return serve(kb, listen, static_dir);
        }
    };
    ExitCode::from(code)
}

fn serve(kb: PathBuf, listen: SocketAddr, static_dir: Option<PathBuf>) -> ExitCode {
    let state = match AppState::load(&kb) {
        Ok(s) => Arc::new(s),
        Err(e) => {
            eprintln!("error: cannot load {}: {e}", kb.display());
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let app = router(state, static_dir);
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    let result: std::io::Result<()> = runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
