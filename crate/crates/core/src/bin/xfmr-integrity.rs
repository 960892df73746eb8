use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use xfmr_integrity::app::{cmd_run, cmd_synth};
use xfmr_integrity::config::AppConfig;
use xfmr_integrity::pipeline::FlagPolicy;
use xfmr_integrity::{server, verify, Error};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_STREAM: u8 = 4;
const EXIT_ACCEPTANCE: u8 = 5;

/// Transformer current integrity verification.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize truth, measurement and state files for a scenario.
    Synth {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the pipeline over a measurement file.
    Run {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// High-rate reference waveform for the area comparison.
        #[arg(short, long)]
        reference: Option<PathBuf>,
        #[arg(long, value_enum)]
        flag_policy: Option<Policy>,
    },
    /// Serve line-delimited samples over TCP.
    Stream {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(short, long, default_value = "127.0.0.1:7878")]
        listen: String,
    },
    /// Run the acceptance checks.
    Verify {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Policy {
    HoldLastValid,
    Gap,
}

fn load(path: &Option<PathBuf>) -> Result<AppConfig, Error> {
    match path {
        Some(p) => AppConfig::load(p),
        None => AppConfig::parse_with("", &xfmr_integrity::config::env_overrides()),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Data { .. } | Error::Io(_) => EXIT_DATA,
        _ => EXIT_STREAM,
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Synth { config, out } => {
            let cfg = load(&config)?;
            let files = cmd_synth(&cfg, &out)?;
            for p in [files.truth, files.measurement, files.states] {
                println!("{}", p.display());
            }
        }
        Command::Run { config, input, out, reference, flag_policy } => {
            let mut cfg = load(&config)?;
            if let Some(p) = flag_policy {
                cfg.pipeline.flag_policy = match p {
                    Policy::HoldLastValid => FlagPolicy::HoldLastValid,
                    Policy::Gap => FlagPolicy::Gap,
                };
            }
            let manifest = cmd_run(&cfg, &input, &out, reference.as_deref())?;
            for s in &manifest.streams {
                println!(
                    "stream {:?}: {} samples, flag rate {:.5}, mse {}",
                    s.stream_id,
                    s.samples,
                    s.flag_rate,
                    s.mse.map(|m| format!("{m:.4}")).unwrap_or_else(|| "n/a".into())
                );
            }
        }
        Command::Stream { config, listen } => {
            let cfg = load(&config)?;
            let pcfg = cfg.pipeline_config()?;
            let listener = TcpListener::bind(&listen).map_err(|e| Error::Config(format!("cannot bind {listen}: {e}")))?;
            eprintln!("listening on {}", listener.local_addr()?);
            server::serve(listener, pcfg, cfg.pipeline.stream_buffer)?;
        }
        Command::Verify { json } => {
            let reports = verify::run_all();
            if json {
                println!("{}", serde_json::to_string_pretty(&reports).map_err(|e| Error::Io(e.to_string()))?);
            } else {
                for r in &reports {
                    println!("{}", r.line());
                }
            }
            if reports.iter().any(|r| !r.passed) {
                return Ok(EXIT_ACCEPTANCE);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
