use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use tracewarden::cli::{self, GenOptions, VerifyContextSpec};
use tracewarden::config::RunConfig;
use tracewarden::io::{read_instances, read_logs, write_instances};
use tracewarden::runner::{run_experiment, sweep, SweepDimension};
use tracewarden_core::metrics::{aggregate, render_report, render_sweep};
use tracewarden_core::taskgen::{QuestionKind, TaskKind};

#[derive(Parser)]
#[command(name = "tracewarden", version, about = "Verify and steer reasoning traces as they stream")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate task instances as a JSON array.
    Gen {
        #[arg(long)]
        kind: TaskKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Fixed question kind (right_turns, total_turns, relative_position, q0, q1, q2).
        #[arg(long)]
        question: Option<String>,
        /// Maze size as HxW, both odd.
        #[arg(long, default_value = "9x9")]
        size: String,
        /// Objects per spatial map.
        #[arg(long, default_value_t = 5)]
        objects: usize,
        /// Game24: number of instances with no solution.
        #[arg(long, default_value_t = 0)]
        unsolvable: usize,
    },
    /// Run a method over an instance file, appending to a JSONL log.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        instances: Option<PathBuf>,
        #[arg(long)]
        log: PathBuf,
    },
    /// Check every state in a saved trace.
    Verify {
        #[arg(long)]
        kind: TaskKind,
        #[arg(long)]
        trace_file: PathBuf,
        /// Take the maze, map or numbers from this instance file.
        #[arg(long)]
        instance_file: Option<PathBuf>,
        /// Instance id within --instance-file; the first instance by default.
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        maze: Option<PathBuf>,
        #[arg(long)]
        numbers: Option<String>,
    },
    /// Accuracy, token share and soundness against a baseline log.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        log: Vec<PathBuf>,
        #[arg(long)]
        baseline_log: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run one method per value of a dimension and pick a value.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// k, eat_threshold or deer_threshold.
        #[arg(long)]
        dimension: SweepDimension,
        /// Comma-separated; the standard grid for the dimension by default.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long)]
        instances: Option<PathBuf>,
        #[arg(long, default_value = "sweep")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Gen { kind, n, seed, out, question, size, objects, unsolvable } => {
            let question = question
                .map(|q| serde_json::from_value::<QuestionKind>(serde_json::Value::String(q.clone())))
                .transpose()
                .context("unknown question kind")?;
            let opts = GenOptions { kind, n, seed, question, maze_size: cli::parse_size(&size)?, objects, unsolvable };
            let instances = cli::gen_instances(&opts)?;
            write_instances(&out, &instances)?;
            println!("wrote {} instances to {}", instances.len(), out.display());
        }
        Cmd::Run { config, instances, log } => {
            let cfg = RunConfig::load(&config)?;
            let path = instances.or(cfg.instances.clone()).context("no instance file: pass --instances")?;
            let s = run_experiment(&cfg, &read_instances(&path)?, &log)?;
            println!("{} instances: {} run, {} already logged, {} failed", s.total, s.ran, s.skipped, s.failed);
        }
        Cmd::Verify { kind, trace_file, instance_file, id, maze, numbers } => {
            let ctx = match (instance_file, maze, numbers) {
                (Some(f), _, _) => {
                    let all = read_instances(&f)?;
                    let inst = match &id {
                        Some(id) => all.into_iter().find(|i| &i.id == id).with_context(|| format!("no instance {id}"))?,
                        None => all.into_iter().next().context("instance file is empty")?,
                    };
                    VerifyContextSpec::Instance(inst)
                }
                (None, Some(m), _) => VerifyContextSpec::Maze(fs::read_to_string(&m)?),
                (None, None, Some(n)) => VerifyContextSpec::Numbers(cli::parse_numbers(&n)?),
                (None, None, None) => VerifyContextSpec::Unseeded,
            };
            let text = fs::read_to_string(&trace_file).with_context(|| format!("reading {}", trace_file.display()))?;
            let lines = cli::verify_trace(kind, &ctx, &text)?;
            print!("{}", cli::render_state_lines(&lines));
            if lines.iter().any(|l| !l.pass) {
                return Ok(ExitCode::FAILURE);
            }
        }
        Cmd::Report { log, baseline_log, json } => {
            let run = read_logs(&log)?;
            let base = read_logs(&[baseline_log])?;
            let report = aggregate(&run, &base)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", render_report(&report));
            }
        }
        Cmd::Sweep { config, dimension, values, instances, out_dir } => {
            let cfg = RunConfig::load(&config)?;
            let path = instances.or(cfg.instances.clone()).context("no instance file: pass --instances")?;
            let values = if values.is_empty() { dimension.default_values() } else { values };
            if values.iter().any(|v| !v.is_finite()) {
                bail!("sweep values must be finite");
            }
            let r = sweep(&cfg, &read_instances(&path)?, dimension, &values, &out_dir)?;
            print!("{}", render_sweep(dimension.as_str(), &r.baseline, &r.points, &r.selection));
        }
    }
    Ok(ExitCode::SUCCESS)
}
