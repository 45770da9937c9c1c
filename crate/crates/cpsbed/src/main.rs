use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use cpsbed::analysis::{builtin_matrix, classify_dir, matrix_from_dirs, render_matrix, write_verdicts, DEFAULT_WINDOW};
use cpsbed::config::parse_scenario;
use cpsbed::pipeline::run_scenario;
use cpsbed::validate::{read_manifest, render_balance, validate_dir};
use cpsbed_core::attack::{plan_attacks, AttackGrid, AttackSpec};
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "cpsbed", version, about = "Virtual CSTR testbed: labeled dataset generation and checks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate scenarios and write dataset directories.
    Run {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        /// Output directory; with several scenarios, one subdirectory each.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check a dataset directory; exits nonzero on any violation.
    Validate { dir: PathBuf },
    /// Print the manifest summary and class balance.
    Report { dir: PathBuf },
    /// Per-window trace verdicts as CSV.
    Classify {
        dir: PathBuf,
        #[arg(long)]
        tol_m: Option<f64>,
        #[arg(long)]
        tol_a: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Preview an attack plan from a grid file.
    Plan {
        grid: PathBuf,
        #[arg(long)]
        limit: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// IDS decision matrix over the operator-command trio.
    IdsMatrix {
        #[arg(long, requires_all = ["compromised", "spoofed"])]
        legit: Option<PathBuf>,
        #[arg(long)]
        compromised: Option<PathBuf>,
        #[arg(long)]
        spoofed: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run_one(path: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = parse_scenario(path).map_err(|e| anyhow!("{}: {}", path.display(), e))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let m = run_scenario(&cfg, out).with_context(|| format!("running {}", path.display()))?;
    println!(
        "{} -> {} ({} records, {} attacks, outcome {})",
        path.display(),
        out.display(),
        m.balance.all.records,
        m.attacks.len(),
        m.outcome.cell
    );
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{}", text);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<bool> {
    match Cli::parse().cmd {
        Cmd::Run { scenarios, out, seed, jobs } => {
            if scenarios.len() == 1 {
                run_one(&scenarios[0], &out, seed)?;
                return Ok(true);
            }
            let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
            let results: Vec<Result<()>> = pool.install(|| {
                scenarios
                    .par_iter()
                    .map(|p| {
                        let stem = p.file_stem().ok_or_else(|| anyhow!("{}: no file name", p.display()))?;
                        run_one(p, &out.join(stem), seed)
                    })
                    .collect()
            });
            let mut ok = true;
            for r in results {
                if let Err(e) = r {
                    eprintln!("error: {:#}", e);
                    ok = false;
                }
            }
            Ok(ok)
        }
        Cmd::Validate { dir } => {
            let rep = validate_dir(&dir)?;
            print!("{}", rep.render());
            Ok(rep.ok())
        }
        Cmd::Report { dir } => {
            let m = read_manifest(&dir)?;
            println!("seed {} config {}", m.seed, m.config_hash);
            println!("outcome {}", m.outcome.cell);
            println!("split boundary {} of {}", m.split.boundary, m.split.duration);
            println!("attacks {:?} zero-day {:?}", m.executed_ids, m.zero_day_ids);
            for a in &m.attacks {
                println!(
                    "  {} {} {} {:?} [{}, {}]{}",
                    a.id,
                    a.kind.as_str(),
                    a.injection_point.as_str(),
                    a.action,
                    a.window.start,
                    a.window.end,
                    if a.is_zero_day() { " zero-day" } else { "" }
                );
            }
            println!(
                "dedup {} records in {} runs ({} exceptions)",
                m.dedup.records, m.dedup.runs, m.dedup.exceptions
            );
            for (name, b) in [("all", &m.balance.all), ("train", &m.balance.train), ("test", &m.balance.test)] {
                print!("{}", render_balance(name, b));
            }
            Ok(true)
        }
        Cmd::Classify { dir, tol_m, tol_a, window, out } => {
            let c = classify_dir(&dir, tol_m, tol_a, window)?;
            let mut buf = Vec::new();
            write_verdicts(&mut buf, &c)?;
            emit(out.as_deref(), &String::from_utf8(buf)?)?;
            Ok(true)
        }
        Cmd::Plan { grid, limit, seed } => {
            let text = std::fs::read_to_string(&grid).with_context(|| format!("reading {}", grid.display()))?;
            let g: AttackGrid = toml::from_str(&text).with_context(|| format!("parsing {}", grid.display()))?;
            let attacks = plan_attacks(&g, limit, seed)?;
            #[derive(serde::Serialize)]
            struct Plan {
                attack: Vec<AttackSpec>,
            }
            print!("{}", toml::to_string(&Plan { attack: attacks })?);
            Ok(true)
        }
        Cmd::IdsMatrix { legit, compromised, spoofed, out } => {
            let m = match (legit, compromised, spoofed) {
                (Some(l), Some(c), Some(s)) => matrix_from_dirs(&l, &c, &s)?,
                (None, None, None) => builtin_matrix()?,
                _ => return Err(anyhow!("give all of --legit, --compromised and --spoofed, or none")),
            };
            emit(out.as_deref(), &render_matrix(&m))?;
            Ok(true)
        }
    }
}
