use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use ftrl::config::{parse_clock, ExperimentConfig};
use ftrl::experiment::{evaluate_checkpoint, pretrain, run_experiment};
use ftrl::output::{save_model, write_eval_report, StepLog};
use ftrl::track_io::format_track;
use ftrl::tracks::BuiltinTrack;
use ftrl::verify::{self, VerifyOptions};
use ftrl_core::federation::ClockMode;

#[derive(Parser)]
#[command(
    name = "ftrl",
    version,
    about = "Federated transfer reinforcement learning for LIDAR cars"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every agent of a config and write the run artifacts.
    Run(RunArgs),
    /// Train only the pretraining agent; writes pretrain.model.
    Pretrain(RunArgs),
    /// Evaluate a saved model on every agent's evaluation course.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        model: PathBuf,
    },
    /// Run the verification suite and print one line per criterion.
    Verify {
        /// Comma-separated criterion ids; all when omitted.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
        #[arg(long, default_value = "verify_runs")]
        workdir: PathBuf,
        /// Number of seeds for the federated smoke test.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Print a builtin track in the track file format.
    Track {
        #[arg(long)]
        builtin: BuiltinTrack,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Scale label written into the file.
        #[arg(long, default_value = "std")]
        scale: String,
    },
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `virtual` or `wall`.
    #[arg(long, value_parser = parse_clock)]
    clock: Option<ClockMode>,
}

impl RunArgs {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output = out.clone();
        }
        if let Some(clock) = self.clock {
            cfg.clock = clock;
        }
        cfg.validate()?;
        Ok(cfg)
    }
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

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.load()?;
            let summary = run_experiment(&cfg)?;
            println!("output: {}", summary.output.display());
            println!("federation rounds: {}", summary.rounds.len());
            for a in &summary.agents {
                let eval = a
                    .eval
                    .as_ref()
                    .map(|e| {
                        format!(
                            ", eval avg_dist {:.3} coll_no {}",
                            e.report.avg_dist, e.report.coll_no
                        )
                    })
                    .unwrap_or_default();
                println!(
                    "agent {}: {} steps, {} collisions, {} train steps, {} rounds adopted{eval}",
                    a.id, a.steps, a.collisions, a.train_steps, a.adopted_rounds
                );
                if let Some(note) = &a.rp_note {
                    println!("agent {}: no rp curve: {note}", a.id);
                }
            }
        }
        Command::Pretrain(args) => {
            let cfg = args.load()?;
            let Some(p) = pretrain(&cfg)? else {
                bail!("{} has no [pretrain] section", args.config.display());
            };
            std::fs::create_dir_all(&cfg.output)
                .with_context(|| cfg.output.display().to_string())?;
            save_model(&cfg.output.join("pretrain.model"), &p.networks)?;
            let mut log = StepLog::create(&cfg.output.join("pretrain_steps.csv"))?;
            for r in &p.log {
                log.write(r)?;
            }
            log.flush()?;
            let collisions = p.log.iter().filter(|r| r.collided).count();
            println!(
                "pretrained {} steps ({collisions} collisions) into {}",
                p.log.len(),
                cfg.output.display()
            );
        }
        Command::Eval { run, model } => {
            let cfg = run.load()?;
            let rows = evaluate_checkpoint(&cfg, &model)?;
            std::fs::create_dir_all(&cfg.output)
                .with_context(|| cfg.output.display().to_string())?;
            write_eval_report(&cfg.output.join("eval_report.csv"), &rows)?;
            for r in &rows {
                println!(
                    "agent {}: avg_dist {:.3} coll_no {}",
                    r.agent, r.report.avg_dist, r.report.coll_no
                );
            }
        }
        Command::Verify {
            criteria,
            workdir,
            seeds,
        } => {
            let mut opts = VerifyOptions::all(workdir);
            if !criteria.is_empty() {
                if let Some(bad) = criteria.iter().find(|c| !(1..=10).contains(*c)) {
                    bail!("no criterion {bad}; ids run from 1 to 10");
                }
                opts.criteria = criteria;
            }
            opts.smoke_seeds = (0..seeds).collect();
            opts.progress = true;
            let outcomes = verify::run(&opts)?;
            for o in &outcomes {
                println!("{o}");
            }
            if outcomes.iter().any(|o| !o.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Track {
            builtin,
            beta,
            scale,
        } => {
            print!("{}", format_track(&builtin.build(beta, &scale)?));
        }
    }
    Ok(ExitCode::SUCCESS)
}
