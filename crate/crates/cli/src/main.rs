use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use statica::commands::{self, DEFAULT_THRESHOLD_DEG};
use statica::config::JobConfig;
use statica::server;
use statica::CliError;
use statica_core::mesher::MeshConfig;

/// Turn animations into printable sculptures: frames, PNG stack, voxels, STL.
#[derive(Parser)]
#[command(name = "statica", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the frames of a family to a PNG stack.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Override the number of frames.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Mesh a directory of PNG frames into a binary STL.
    Mesh {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long, default_value_t = 128)]
        level: u8,
        /// Keep every n-th layer (1, 2, 4, 8 or 16).
        #[arg(long, default_value_t = 1)]
        step: u32,
        /// Reject frames with an alpha channel instead of flattening them.
        #[arg(long)]
        strict_alpha: bool,
        /// Leave the first and last frame open.
        #[arg(long)]
        no_caps: bool,
        /// Keep only the largest piece of material.
        #[arg(long)]
        keep_largest: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report watertightness, overhangs and plate contact of an STL.
    Check {
        stl: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD_DEG)]
        threshold_deg: f64,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Generate, mesh and check in one go.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Serve the preview and job API.
    Serve {
        #[arg(long, default_value_t = server::DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "statica-work")]
        workdir: PathBuf,
    },
}

fn print_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn progress_bar(done: usize, total: usize) {
    if done == total || done.is_multiple_of(16) {
        log::info!("frame {done}/{total}");
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate { config, frames } => {
            let mut cfg = JobConfig::load(&config)?;
            if let Some(n) = frames {
                cfg.set_frame_count(n)?;
            }
            let summary = commands::cmd_generate(&cfg, &progress_bar)?;
            print_warnings(&summary.warnings);
            println!("{summary}");
        }
        Command::Mesh {
            frames,
            level,
            step,
            strict_alpha,
            no_caps,
            keep_largest,
            out,
        } => {
            let mesh = MeshConfig::new(level, step, !no_caps)
                .map_err(|e| CliError::Config(e.to_string()))?
                .with_keep_largest(keep_largest);
            let summary = commands::cmd_mesh(&frames, &mesh, strict_alpha, &out)?;
            println!("{summary}");
        }
        Command::Check {
            stl,
            threshold_deg,
            json,
        } => {
            let summary = commands::cmd_check(&stl, threshold_deg)?;
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&summary).expect("report serializes")
                );
            } else {
                println!("{summary}");
            }
            if !summary.watertight() {
                return Err(CliError::Validation(format!(
                    "{} is not watertight ({} boundary edges)",
                    stl.display(),
                    summary.statistics.boundary_edge_count
                )));
            }
        }
        Command::Run { config } => {
            let cfg = JobConfig::load(&config)?;
            let summary = commands::cmd_run(&cfg, &|_| {})?;
            print_warnings(&summary.generate.warnings);
            println!("{summary}");
        }
        Command::Serve { port, workdir } => {
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Config(e.to_string()))?;
            runtime
                .block_on(server::serve(port, workdir))
                .map_err(|e| CliError::Config(format!("serve: {e}")))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
