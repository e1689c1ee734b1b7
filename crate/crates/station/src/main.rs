use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use inspect_core::optics::OpticsSpec;
use inspect_core::orchestrator::ReviewStore;
use inspect_station::commands::{self, InspectArgs};
use inspect_station::demo::make_demo;
use inspect_station::server::{router, AppState};

#[derive(Parser)]
#[command(name = "inspect", version, about = "Robotic part inspection station")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect parts and write their CSV reports.
    Inspect {
        /// Part description JSON; repeat for several parts.
        #[arg(long = "part", required = true)]
        parts: Vec<PathBuf>,
        /// Replay fixture JSON for replay backends.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Inspection config JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads per part (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Serve the review API over a report directory.
    Serve {
        #[arg(long)]
        reports: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory of `{image_id}.png` captures for crops.
        #[arg(long)]
        images: Option<PathBuf>,
    },
    /// Print image counts and timing for a scan layout.
    PlanScan {
        /// JSON with `views` and optional `timing`.
        #[arg(long)]
        part: PathBuf,
    },
    /// Size the sensor and lens for a field of view.
    PlanOptics {
        #[arg(long)]
        fov_mm: f64,
        #[arg(long)]
        working_distance_mm: f64,
        #[arg(long, default_value_t = 0.5)]
        min_feature_mm: f64,
        #[arg(long, default_value_t = 10.0)]
        min_feature_px: f64,
        #[arg(long, default_value_t = 2448.0)]
        sensor_resolution_px: f64,
        #[arg(long, default_value_t = 3.45)]
        pixel_size_um: f64,
    },
    /// Score predictions against ground truth.
    Evaluate {
        /// Prediction JSON, report sidecar or report directory; repeat to
        /// compare runs.
        #[arg(long = "preds", required = true)]
        preds: Vec<PathBuf>,
        #[arg(long)]
        gt: PathBuf,
        /// Print full results as JSON instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Write the eight-part demonstration set.
    MakeDemo {
        #[arg(long)]
        out: PathBuf,
        /// Skip rendering capture images.
        #[arg(long)]
        no_images: bool,
    },
}

async fn serve(reports: PathBuf, host: String, port: u16, images: Option<PathBuf>) -> Result<()> {
    let store = ReviewStore::open(&reports).with_context(|| format!("opening reports in {}", reports.display()))?;
    let app = router(AppState {
        store: Arc::new(store),
        images,
    });
    let addr: SocketAddr = format!("{host}:{port}").parse().context("bad listen address")?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    println!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Inspect {
            parts,
            fixtures,
            config,
            out,
            threads,
        } => {
            let outcome = commands::inspect(&InspectArgs {
                parts,
                fixtures,
                config,
                out,
                threads,
            })?;
            print!("{}", outcome.summary);
            let incomplete = outcome.incomplete();
            if incomplete > 0 {
                eprintln!("{incomplete} part(s) incomplete");
                return Ok(ExitCode::from(2));
            }
        }
        Command::Serve {
            reports,
            port,
            host,
            images,
        } => {
            tokio::runtime::Runtime::new()?.block_on(serve(reports, host, port, images))?;
        }
        Command::PlanScan { part } => print!("{}", commands::plan_scan(&part)?),
        Command::PlanOptics {
            fov_mm,
            working_distance_mm,
            min_feature_mm,
            min_feature_px,
            sensor_resolution_px,
            pixel_size_um,
        } => {
            let spec = OpticsSpec {
                fov_mm,
                min_feature_mm,
                min_feature_px,
                working_distance_mm,
                sensor_resolution_px,
                pixel_size_mm: pixel_size_um / 1000.0,
            };
            print!("{}", commands::optics_table(&spec)?);
        }
        Command::Evaluate { preds, gt, json } => {
            let (table, results) = commands::evaluate(&preds, &gt)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&results)?);
            } else {
                print!("{table}");
            }
        }
        Command::MakeDemo { out, no_images } => {
            let files = make_demo(&out, !no_images)?;
            println!(
                "wrote {} parts, {} images, fixtures and ground truth to {}",
                files.parts.len(),
                files.images.len(),
                out.display()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
