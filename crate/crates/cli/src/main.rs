use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use evnav_core::harness::eval::{run_eval, run_eval_dir, write_eval_csv, write_ri_dump};
use evnav_core::harness::report::write_report_csv;
use evnav_core::harness::{build_report, render_table, run_many, RunConfig, TrainedRun};
use evnav_core::method::Method;
use evnav_core::verify::{run_suite, Suite};

#[derive(Parser)]
#[command(name = "evnav", version, about = "Multi-agent EV charging navigation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Library defaults (1000 episodes).
    Default,
    /// Two EVs, 300 episodes, five seeds.
    Desk2,
    /// Twenty EVs, 300 episodes, three seeds.
    Desk20,
}

#[derive(Subcommand)]
enum Command {
    /// Train one method for one or more seeds.
    Train {
        /// JSON run config; fields left out take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "default")]
        preset: Preset,
        #[arg(long)]
        method: Option<Method>,
        /// Seed to train; all seeds of the config when omitted.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Evaluate the final policy on the config's evaluation seeds.
        #[arg(long)]
        eval: bool,
    },
    /// Evaluate a checkpoint greedily against the shortest-path baseline.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated evaluation seeds; the config's seeds when omitted.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Config to use instead of the run's snapshot.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write every recommendation to this CSV.
        #[arg(long)]
        dump_ri: Option<PathBuf>,
    },
    /// Train and evaluate several methods over all seeds of a preset.
    Experiment {
        #[arg(long, value_enum, default_value = "desk2")]
        preset: Preset,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated methods; all when omitted.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Summarize every evaluated run under a directory.
    Report {
        #[arg(long, default_value = "runs")]
        runs: PathBuf,
        /// CSV destination; `<runs>/report.csv` when omitted.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run a verification suite against its oracles.
    Selftest {
        #[arg(long)]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn base_config(preset: Preset, config: Option<&Path>, method: Option<Method>) -> Result<RunConfig> {
    let mut cfg = match (config, preset) {
        (Some(path), _) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        (None, Preset::Default) => RunConfig::default(),
        (None, Preset::Desk2) => RunConfig::desk_two_ev(Method::IqlCvaeMgda),
        (None, Preset::Desk20) => RunConfig::desk_twenty_ev(Method::IqlCvaeMgda),
    };
    if let Some(m) = method {
        cfg.method = m;
    }
    Ok(cfg)
}

fn evaluate_run(run: &TrainedRun) -> Result<f64> {
    let report = run_eval(&run.config, run.trainer.as_ref(), &run.config.eval_seeds, false)?;
    if let Some(dir) = &run.dir {
        write_eval_csv(&dir.join("eval.csv"), &report)?;
    }
    Ok(report.cost_ratio)
}

fn train_jobs(jobs: Vec<(RunConfig, u64)>, out: &Path, eval: bool) -> Result<()> {
    for result in run_many(&jobs, Some(out)) {
        let run = result?;
        let s = &run.summary;
        let mut line = format!(
            "{:<16} seed {:<3} episodes {:<5} updates {:<7} late cost {:.2}",
            s.method.name(),
            s.seed,
            s.episodes,
            s.updates,
            s.late_cost
        );
        if let Some(l) = s.final_cvae_loss {
            line.push_str(&format!(" cvae loss {l:.4}"));
        }
        if eval {
            line.push_str(&format!(" cost ratio {:.3}", evaluate_run(&run)?));
        }
        println!("{line}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train {
            config,
            preset,
            method,
            seed,
            episodes,
            out,
            eval,
        } => {
            let mut cfg = base_config(preset, config.as_deref(), method)?;
            if let Some(n) = episodes {
                cfg.episodes = n;
            }
            cfg.validate()?;
            let seeds = seed.map(|s| vec![s]).unwrap_or_else(|| cfg.seeds.clone());
            train_jobs(seeds.into_iter().map(|s| (cfg.clone(), s)).collect(), &out, eval)?;
            Ok(true)
        }
        Command::Eval {
            checkpoint,
            seeds,
            config,
            dump_ri,
        } => {
            let cfg = config
                .as_deref()
                .map(RunConfig::load)
                .transpose()
                .context("loading config")?;
            let seeds = if seeds.is_empty() {
                match &cfg {
                    Some(c) => c.eval_seeds.clone(),
                    None => {
                        let dir = evnav_core::harness::eval::run_dir_of(&checkpoint)
                            .context("checkpoint is not inside a run directory")?;
                        RunConfig::load(&dir.join("config.snapshot"))?.eval_seeds
                    }
                }
            } else {
                seeds
            };
            let report = run_eval_dir(&checkpoint, cfg, &seeds, dump_ri.is_some())?;
            for s in &report.seeds {
                println!(
                    "seed {:<8} cost {:>9.3} baseline {:>9.3} ratio {:.3}",
                    s.seed, s.cost, s.sp_cost, s.ratio
                );
            }
            println!(
                "{}: cost {:.3} ± {:.3}, cost ratio {:.4}",
                report.method, report.mean_cost, report.std_cost, report.cost_ratio
            );
            if let Some(path) = dump_ri {
                let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                write_ri_dump(BufWriter::new(file), &report.records)?;
            }
            Ok(true)
        }
        Command::Experiment {
            preset,
            config,
            methods,
            episodes,
            out,
        } => {
            let mut base = base_config(preset, config.as_deref(), None)?;
            if let Some(n) = episodes {
                base.episodes = n;
            }
            let methods = if methods.is_empty() { Method::ALL.to_vec() } else { methods };
            let mut jobs = Vec::new();
            for m in methods {
                for &s in &base.seeds {
                    jobs.push((RunConfig { method: m, ..base.clone() }, s));
                }
            }
            train_jobs(jobs, &out, true)?;
            let rows = build_report(&out)?;
            print!("{}", render_table(&rows));
            write_report_csv(&out.join("report.csv"), &rows)?;
            Ok(true)
        }
        Command::Report { runs, csv } => {
            let rows = build_report(&runs)?;
            if rows.is_empty() {
                bail!("no evaluated runs under {}", runs.display());
            }
            print!("{}", render_table(&rows));
            write_report_csv(&csv.unwrap_or_else(|| runs.join("report.csv")), &rows)?;
            Ok(true)
        }
        Command::Selftest { suite, seed } => {
            let results = run_suite(suite, seed);
            for r in &results {
                println!("{r}");
            }
            Ok(results.iter().all(|r| r.passed()))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
