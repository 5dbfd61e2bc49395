//! `solar-shaper` command-line interface.
//!
//! Exit codes: 0 success, 2 input or schema error, 3 config error.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{RunConfig, CONFIG_ENV};
use crate::datasets::{self, HEADER_KEY};
use crate::error::{Error, Result};
use crate::grouping::attach_advantages;
use crate::reconstruction::{reconstruct_with_discarded, ReconstructedTrajectory, ScoredStep};
use crate::scoring::score_action;
use crate::shaping::shape_batch;
use crate::synthenv::{self, derive_seed};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "solar-shaper", version, about = "Semi-online trajectory reconstruction and step reward shaping")]
pub struct Cli {
    /// Config file (TOML). Falls back to $SOLAR_SHAPER_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed, overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Omit the provenance header line from outputs.
    #[arg(long, global = true)]
    pub no_header: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Io {
    /// Input file; stdin when omitted.
    #[arg(short, long)]
    pub input: Option<PathBuf>,

    /// Output file; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every candidate against its ground-truth action.
    Score(Io),
    /// Chain, score and truncate candidate rollouts.
    Reconstruct {
        #[command(flatten)]
        io: Io,
        /// Also write the steps cut after each breakdown to this file.
        #[arg(long)]
        dump_discarded: Option<PathBuf>,
    },
    /// Reconstruct and shape the whole input batch.
    Shape {
        #[command(flatten)]
        io: Io,
        /// Attach group-relative per-step advantages.
        #[arg(long)]
        with_advantages: bool,
        #[arg(long)]
        dump_discarded: Option<PathBuf>,
    },
    /// Generate synthetic tasks with noisy candidates.
    Simulate {
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Sparse vs shaped training comparison, written as CSV.
    Experiment {
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Length statistics and bucket counts.
    Stats {
        #[arg(short, long)]
        input: Option<PathBuf>,
        /// Also write the summary as CSV.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Score(_) => "score",
            Command::Reconstruct { .. } => "reconstruct",
            Command::Shape { .. } => "shape",
            Command::Simulate { .. } => "simulate",
            Command::Experiment { .. } => "experiment",
            Command::Stats { .. } => "stats",
        }
    }
}

pub fn main() -> i32 {
    let cli = Cli::parse();
    run(cli)
}

pub fn run(cli: Cli) -> i32 {
    let env_path = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
    let cfg = match RunConfig::resolve(cli.config.as_deref(), env_path, cli.seed, cli.jobs) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let result = match cfg.jobs {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli, &cfg)),
            Err(e) => Err(Error::Config(e.to_string())),
        },
        None => dispatch(&cli, &cfg),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                EXIT_INPUT
            } else {
                EXIT_CONFIG
            }
        }
    }
}

fn open_input(path: Option<&Path>) -> Result<Box<dyn BufRead>> {
    match path {
        Some(p) => {
            let f = File::open(p).map_err(|source| Error::Io {
                path: p.to_path_buf(),
                source,
            })?;
            Ok(Box::new(BufReader::new(f)))
        }
        None => Ok(Box::new(BufReader::new(io::stdin()))),
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|source| Error::Io {
                path: p.to_path_buf(),
                source,
            })?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout()))),
    }
}

struct Out {
    w: Box<dyn Write>,
    path: PathBuf,
}

impl Out {
    fn open(path: Option<&Path>) -> Result<Self> {
        Ok(Self {
            w: open_output(path)?,
            path: path.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("<stdout>")),
        })
    }

    fn wrap(&self, e: io::Error) -> Error {
        Error::Io {
            path: self.path.clone(),
            source: e,
        }
    }

    fn line(&mut self, v: &Value) -> Result<()> {
        serde_json::to_writer(&mut self.w, v).map_err(|e| self.wrap(e.into()))?;
        writeln!(self.w).map_err(|e| self.wrap(e))
    }

    fn text(&mut self, s: &str) -> Result<()> {
        writeln!(self.w, "{s}").map_err(|e| self.wrap(e))
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| self.wrap(e))
    }
}

fn header(cli: &Cli, cfg: &RunConfig) -> Value {
    json!({ HEADER_KEY: { "command": cli.command.name(), "config": cfg.to_json() } })
}

fn write_header(out: &mut Out, cli: &Cli, cfg: &RunConfig) -> Result<()> {
    if cli.no_header {
        Ok(())
    } else {
        out.line(&header(cli, cfg))
    }
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    match &cli.command {
        Command::Score(io) => cmd_score(cli, cfg, io),
        Command::Reconstruct { io, dump_discarded } => {
            cmd_reconstruct(cli, cfg, io, dump_discarded.as_deref())
        }
        Command::Shape {
            io,
            with_advantages,
            dump_discarded,
        } => cmd_shape(cli, cfg, io, *with_advantages, dump_discarded.as_deref()),
        Command::Simulate { output } => cmd_simulate(cli, cfg, output.as_deref()),
        Command::Experiment { output } => cmd_experiment(cli, cfg, output.as_deref()),
        Command::Stats { input, output } => cmd_stats(cli, cfg, input.as_deref(), output.as_deref()),
    }
}

/// Streams tasks; each output line holds the per-step candidate scores.
pub fn cmd_score(cli: &Cli, cfg: &RunConfig, io: &Io) -> Result<()> {
    let input = open_input(io.input.as_deref())?;
    let mut out = Out::open(io.output.as_deref())?;
    write_header(&mut out, cli, cfg)?;
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::domain(e.to_string()).at_line(line_no))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line)
            .map_err(|e| Error::schema("", format!("invalid JSON: {e}")).at_line(line_no))?;
        if value.get(HEADER_KEY).is_some() {
            continue;
        }
        let task = datasets::parse_task(&value).map_err(|e| e.at_line(line_no))?;
        let steps: Vec<Value> = task
            .steps
            .iter()
            .map(|s| {
                Value::Array(
                    s.candidates
                        .iter()
                        .map(|c| {
                            let sc = score_action(c, &s.gt, &cfg.scoring);
                            json!({"s_raw": sc.s_raw, "valid": sc.valid})
                        })
                        .collect(),
                )
            })
            .collect();
        out.line(&json!({"task_id": task.task_id, "steps": steps}))?;
    }
    out.finish()
}

fn scored_steps_json(steps: &[ScoredStep]) -> Value {
    Value::Array(
        steps
            .iter()
            .map(|s| json!({"action": s.action.to_json(), "s_raw": s.score.s_raw, "valid": s.score.valid}))
            .collect(),
    )
}

type Reconstructed = Vec<(ReconstructedTrajectory, Vec<ScoredStep>)>;

fn reconstruct_all(cfg: &RunConfig, input: Option<&Path>) -> Result<Reconstructed> {
    let tasks = datasets::read_tasks_from(open_input(input)?)?;
    let per_task: Vec<Reconstructed> = tasks
        .par_iter()
        .map(|t| reconstruct_with_discarded(t, &cfg.scoring))
        .collect::<Result<_>>()?;
    Ok(per_task.into_iter().flatten().collect())
}

fn dump_discarded(cli: &Cli, cfg: &RunConfig, path: &Path, all: &Reconstructed) -> Result<()> {
    let mut out = Out::open(Some(path))?;
    write_header(&mut out, cli, cfg)?;
    for (traj, dropped) in all {
        out.line(&json!({
            "task_id": traj.task_id,
            "rollout_index": traj.rollout_index,
            "breakdown_step": traj.breakdown_step,
            "discarded": scored_steps_json(dropped),
        }))?;
    }
    out.finish()
}

pub fn cmd_reconstruct(cli: &Cli, cfg: &RunConfig, io: &Io, dump: Option<&Path>) -> Result<()> {
    let all = reconstruct_all(cfg, io.input.as_deref())?;
    let mut out = Out::open(io.output.as_deref())?;
    write_header(&mut out, cli, cfg)?;
    for (traj, _) in &all {
        out.line(&json!({
            "task_id": traj.task_id,
            "rollout_index": traj.rollout_index,
            "breakdown_step": traj.breakdown_step,
            "success": traj.success,
            "length": traj.len(),
            "n_ref": traj.n_ref,
            "steps": scored_steps_json(&traj.steps),
        }))?;
    }
    out.finish()?;
    if let Some(p) = dump {
        dump_discarded(cli, cfg, p, &all)?;
    }
    Ok(())
}

pub fn cmd_shape(
    cli: &Cli,
    cfg: &RunConfig,
    io: &Io,
    with_advantages: bool,
    dump: Option<&Path>,
) -> Result<()> {
    let all = reconstruct_all(cfg, io.input.as_deref())?;
    let mut out = Out::open(io.output.as_deref())?;
    write_header(&mut out, cli, cfg)?;
    if !all.is_empty() {
        let trajs: Vec<ReconstructedTrajectory> = all.iter().map(|(t, _)| t.clone()).collect();
        let mut shaped = shape_batch(&trajs, &cfg.shaping)?;
        if with_advantages {
            attach_advantages(&mut shaped, 1e-6);
        }
        for s in &shaped {
            out.line(&datasets::shaped_to_json(s))?;
        }
    }
    out.finish()?;
    if let Some(p) = dump {
        dump_discarded(cli, cfg, p, &all)?;
    }
    Ok(())
}

pub fn cmd_simulate(cli: &Cli, cfg: &RunConfig, output: Option<&Path>) -> Result<()> {
    let sim = &cfg.simulate;
    let tasks = (0..sim.tasks)
        .into_par_iter()
        .map(|k| {
            let task_seed = derive_seed(cfg.seed, &[3, k as u64]);
            let mut rng = ChaCha8Rng::seed_from_u64(task_seed);
            let len = rng.random_range(sim.min_len..=sim.max_len);
            synthenv::simulate_task(
                format!("sim-{k:05}"),
                len,
                sim.branching,
                &sim.noise,
                sim.n_rollouts,
                task_seed,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Out::open(output)?;
    write_header(&mut out, cli, cfg)?;
    for t in &tasks {
        out.line(&datasets::task_to_json(t))?;
    }
    out.finish()
}

pub fn cmd_experiment(cli: &Cli, cfg: &RunConfig, output: Option<&Path>) -> Result<()> {
    let report = synthenv::run_experiment(&cfg.experiment, &cfg.scoring, &cfg.shaping, cfg.seed)?;
    let mut out = Out::open(output)?;
    if !cli.no_header {
        out.text(&format!("# {}", header(cli, cfg)))?;
    }
    synthenv::write_report_csv(&mut out.w, &report.rows)?;
    out.finish()?;

    // summary goes to stderr when the CSV itself is on stdout
    let mut term: Box<dyn Write> = if output.is_some() {
        Box::new(io::stdout())
    } else {
        Box::new(io::stderr())
    };
    let _ = writeln!(
        term,
        "{:<10} {:<7} {:>5} {:>14} {:>12} {:>10} {:>9}",
        "bucket", "mode", "seed", "final_success", "final_reward", "min/peak", "collapsed"
    );
    for s in &report.summaries {
        let _ = writeln!(
            term,
            "{:<10} {:<7} {:>5} {:>14.4} {:>12.4} {:>10.4} {:>9}",
            s.bucket, s.mode, s.seed, s.final_success, s.final_mean_reward, s.min_peak_ratio, s.collapsed
        );
    }
    Ok(())
}

pub fn cmd_stats(cli: &Cli, cfg: &RunConfig, input: Option<&Path>, output: Option<&Path>) -> Result<()> {
    let tasks = datasets::read_tasks_from(open_input(input)?)?;
    let stats = datasets::dataset_stats(&tasks)?;
    println!("tasks       {}", stats.count);
    for b in datasets::LengthBucket::ALL {
        let n = stats.bucket_count(b);
        println!(
            "{:<11} {} ({:.1}%)",
            b.as_str(),
            n,
            100.0 * n as f64 / stats.count as f64
        );
    }
    println!(
        "lengths     min={} q1={} median={} q3={} max={}",
        stats.min, stats.q1, stats.median, stats.q3, stats.max
    );
    if let Some(p) = output {
        let mut out = Out::open(Some(p))?;
        if !cli.no_header {
            out.text(&format!("# {}", header(cli, cfg)))?;
        }
        let mut w = csv::Writer::from_writer(&mut out.w);
        w.serialize(&stats).map_err(|e| Error::domain(e.to_string()))?;
        w.flush().map_err(|e| Error::domain(e.to_string()))?;
        drop(w);
        out.finish()?;
    }
    Ok(())
}
