use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use iraas_core::pipeline::{self, PipelineError, RunOptions, RunReport, EXIT_IO, EXIT_VALIDATION};
use log::info;

/// Routing-as-a-Service over a simulated hybrid SDN.
#[derive(Parser, Debug)]
#[command(name = "iraas", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario end to end with an intent and write the report.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        intent: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Split client, server, controllers and telemetry across sockets.
        #[arg(long)]
        distributed: bool,
        /// Report destination; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print the ranked routes of a pair from a report.
    Routes {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        src: String,
        #[arg(long)]
        dst: String,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
    },
    /// Summarize the KPI series collected from one source.
    Telemetry {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        source: String,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Human,
    Machine,
}

fn fmt_cost(c: f64) -> String {
    if c.is_finite() {
        format!("{c:.6}")
    } else {
        "inf".into()
    }
}

fn cmd_run(
    scenario: PathBuf,
    intent: PathBuf,
    seed: Option<u64>,
    distributed: bool,
    report: Option<PathBuf>,
) -> Result<String, PipelineError> {
    let opts = RunOptions {
        seed,
        distributed,
        ..RunOptions::default()
    };
    let r = pipeline::run_files(&scenario, &intent, &opts)?;
    let json = r.to_json();
    match report {
        Some(path) => {
            std::fs::write(&path, json + "\n").map_err(|e| PipelineError::Io {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
            info!("report written to {}", path.display());
            Ok(format!(
                "intent {}: {} pairs, {} convergence events, report {}\n",
                r.intent_id,
                r.final_pairs().len(),
                r.convergence.len(),
                path.display()
            ))
        }
        None => Ok(json + "\n"),
    }
}

fn cmd_routes(
    r: &RunReport,
    src: &str,
    dst: &str,
    k: Option<usize>,
    format: Format,
) -> Result<String, PipelineError> {
    let pair = r.routes(src, dst)?;
    let take = k.unwrap_or(usize::MAX);
    let mut out = String::new();
    if pair.unreachable && format == Format::Human {
        out.push_str(&format!("{src} -> {dst}: unreachable\n"));
    }
    for e in pair.routes.iter().take(take) {
        match format {
            Format::Human => {
                let path: Vec<&str> = e.path.iter().map(|n| n.as_str()).collect();
                let rel = e
                    .reliability
                    .map(|x| format!("  reliability {}", fmt_cost(x)))
                    .unwrap_or_default();
                out.push_str(&format!(
                    "{}  cost {}{}  {}\n",
                    e.rank,
                    fmt_cost(e.cost),
                    rel,
                    path.join(" > ")
                ));
            }
            Format::Machine => {
                let rec = serde_json::json!({
                    "src": src,
                    "dst": dst,
                    "rank": e.rank,
                    "cost": if e.cost.is_finite() { serde_json::json!(e.cost) } else { serde_json::json!("inf") },
                    "reliability": match e.reliability {
                        Some(x) if x.is_finite() => serde_json::json!(x),
                        Some(x) if x > 0.0 => serde_json::json!("inf"),
                        Some(_) => serde_json::json!("-inf"),
                        None => serde_json::Value::Null,
                    },
                    "path": e.path,
                });
                out.push_str(&rec.to_string());
                out.push('\n');
            }
        }
    }
    Ok(out)
}

fn cmd_telemetry(r: &RunReport, source: &str) -> Result<String, PipelineError> {
    let s = r.source(source)?;
    let mut out = format!("source {}\n", s.source_id);
    for l in &s.links {
        let rel = l.reliability.map(fmt_cost).unwrap_or_else(|| "n/a".into());
        out.push_str(&format!("link {}  reliability {rel}\n", l.link));
        for (attr, st) in &l.attributes {
            out.push_str(&format!(
                "  {attr:<12} count {:>5}  mean {:>14.6}  std {:>12.6}\n",
                st.count, st.mean, st.std
            ));
        }
    }
    Ok(out)
}

fn dispatch(cli: Cli) -> Result<String, PipelineError> {
    match cli.cmd {
        Command::Run {
            scenario,
            intent,
            seed,
            distributed,
            report,
        } => cmd_run(scenario, intent, seed, distributed, report),
        Command::Routes {
            report,
            src,
            dst,
            k,
            format,
        } => cmd_routes(&pipeline::load_report(&report)?, &src, &dst, k, format),
        Command::Telemetry { report, source } => {
            cmd_telemetry(&pipeline::load_report(&report)?, &source)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IRAAS_LOG_LEVEL", "warn"))
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(text) => {
            let mut stdout = std::io::stdout().lock();
            if stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .is_err()
            {
                return ExitCode::from(EXIT_IO as u8);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
