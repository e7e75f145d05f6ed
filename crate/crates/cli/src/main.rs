use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use envgen::pipeline::{
    self, render_archive, render_environment, render_usage, save_png, scale_generate, select_elite, tile_baseline,
    train, ExperimentConfig, Selection, Size, TrainOptions,
};
use envgen::qd::{OptimizerKind, ResultArchive};
use envgen::repair::{repair, RepairBudget};
use envgen::sim::{run_simulation, SimConfig, SimResult};
use envgen::validate::{validate, Constraints};
use envgen::{environment_entropy, Environment, NcaGenerator};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "envgen", version, about = "Train, scale and evaluate NCA environment generators")]
struct Cli {
    /// Directory for outputs given as bare file names.
    #[arg(long, global = true, env = "ENVGEN_OUT_DIR", default_value = "runs")]
    out_dir: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "ENVGEN_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train generators with quality-diversity search.
    Train(TrainArgs),
    /// Run a trained generator at a new size and repair the result.
    Generate(GenerateArgs),
    /// Simulate agents in an environment.
    Simulate(SimulateArgs),
    /// Repair an environment so it satisfies the domain constraints.
    Repair(RepairArgs),
    /// Render an environment, an archive or tile usage as PNG.
    Render(RenderArgs),
    /// Tile a small environment up to a larger size and repair it.
    TileBaseline(TileArgs),
    /// Pick a generator from a result archive.
    Select(SelectArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config file (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset name.
    #[arg(long)]
    preset: Option<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        match (&self.config, &self.preset) {
            (Some(p), _) => Ok(ExperimentConfig::load(p)?),
            (None, Some(name)) => Ok(ExperimentConfig::preset(name)?),
            (None, None) => bail!("pass --config FILE or --preset NAME ({})", pipeline::PRESETS.join(", ")),
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Run directory name inside the output directory.
    #[arg(long, default_value = "train")]
    run: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    evals: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Continue from the newest snapshot.
    #[arg(long)]
    resume: bool,
    /// Stop after this many generations.
    #[arg(long)]
    stop_after: Option<usize>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Generator JSON file.
    #[arg(long)]
    generator: PathBuf,
    /// Target size WIDTHxHEIGHT.
    #[arg(long)]
    size: Size,
    #[arg(long, default_value_t = 200)]
    iterations: usize,
    /// Shelf count for warehouses.
    #[arg(long)]
    shelves: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "generated.txt")]
    out: PathBuf,
    /// Also write the unrepaired NCA output here.
    #[arg(long)]
    unrepaired: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    env: PathBuf,
    #[arg(long, default_value_t = 200)]
    agents: usize,
    #[arg(long, default_value_t = 1000)]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "simulation.json")]
    out: PathBuf,
    /// Tile usage heatmap.
    #[arg(long)]
    usage_png: Option<PathBuf>,
    /// Tile usage as a CSV grid.
    #[arg(long)]
    usage_csv: Option<PathBuf>,
}

#[derive(Args)]
struct RepairArgs {
    #[arg(long)]
    env: PathBuf,
    #[arg(long)]
    shelves: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    work_limit: Option<u64>,
    #[arg(long, default_value = "repaired.txt")]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    /// Environment text file.
    #[arg(long, group = "input")]
    env: Option<PathBuf>,
    /// Result archive CSV; needs --config or --preset for the bins.
    #[arg(long, group = "input")]
    archive: Option<PathBuf>,
    /// Simulation result JSON from `simulate`; needs --grid-env.
    #[arg(long, group = "input")]
    usage: Option<PathBuf>,
    /// Environment the usage was recorded on.
    #[arg(long)]
    grid_env: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    /// Pixels per tile or bin.
    #[arg(long, default_value_t = 8)]
    px: u32,
    #[arg(long, default_value = "render.png")]
    out: PathBuf,
}

#[derive(Args)]
struct TileArgs {
    #[arg(long)]
    env: PathBuf,
    #[arg(long)]
    size: Size,
    #[arg(long)]
    shelves: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "tiled.txt")]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    archive: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// `best`, `cell:N` or `window:MEASURE:LO:HI`.
    #[arg(long, default_value = "best")]
    criterion: Selection,
    #[arg(long, default_value = "generator.json")]
    out: PathBuf,
}

fn resolve(out_dir: &Path, p: &Path) -> Result<PathBuf> {
    let path = if p.is_absolute() || p.parent().is_some_and(|d| !d.as_os_str().is_empty()) {
        p.to_path_buf()
    } else {
        out_dir.join(p)
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(path)
}

fn constraints_for(env: &Environment, shelves: Option<usize>) -> Result<Constraints> {
    if env.domain().is_warehouse() {
        let n = shelves.context("warehouses need --shelves")?;
        Ok(Constraints::with_shelves(n))
    } else {
        Ok(Constraints::default())
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let out_dir = cli.out_dir;
    match cli.cmd {
        Command::Train(a) => {
            let mut cfg = a.config.load()?;
            if let Some(v) = a.seed {
                cfg.seed = v;
            }
            if let Some(v) = a.evals {
                cfg.total_evals = v;
            }
            if let Some(v) = a.batch {
                cfg.optimizer.batch_size = v;
            }
            if let Some(v) = a.alpha {
                cfg.alpha = v;
            }
            if let Some(v) = a.optimizer {
                cfg.optimizer.kind = v;
            }
            if let Some(v) = a.hidden {
                cfg.hidden_channels = v;
            }
            if let Some(v) = cli.workers {
                cfg.workers = v;
            }
            cfg.check()?;
            let run_dir = resolve(&out_dir, &a.run)?;
            let opts = TrainOptions {
                resume: a.resume,
                stop_after: a.stop_after,
            };
            let out = train(&cfg, &run_dir, &opts, &mut |g| {
                eprintln!(
                    "gen {:>4}  evals {:>6}  mean {:.4}  best {:.4}  qd {:.3}  cov {:.4}  failed {}  {:.1}s",
                    g.generation, g.evaluations, g.batch_mean_f_res, g.best_f_res, g.qd_score, g.coverage, g.failed, g.wall_time_s
                );
            })?;
            if let Some((cell, e)) = out.result.best() {
                let gen = NcaGenerator::from_f64(cfg.domain, pipeline::architecture(&cfg), &e.solution)?;
                gen.save(&run_dir.join("best_generator.json"))?;
                println!("best f_res {} in cell {cell}; run directory {}", e.objective, run_dir.display());
            }
        }
        Command::Generate(a) => {
            let gen = NcaGenerator::load(&a.generator)?;
            let c = if gen.domain().is_warehouse() {
                Constraints::with_shelves(a.shelves.context("warehouses need --shelves")?)
            } else {
                Constraints::default()
            };
            let report = scale_generate(
                &gen,
                a.size,
                a.iterations,
                &c,
                &RepairBudget::default(),
                &mut ChaCha8Rng::seed_from_u64(a.seed),
            )?;
            let path = resolve(&out_dir, &a.out)?;
            report.env().write(&path)?;
            if let Some(p) = &a.unrepaired {
                report.unrepaired.as_ref().expect("set by scale_generate").write(&resolve(&out_dir, p)?)?;
            }
            print_json(&report)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Simulate(a) => {
            let env = Environment::read(&a.env)?;
            let cfg = SimConfig {
                num_agents: a.agents,
                horizon: a.horizon,
                seed: a.seed,
                ..SimConfig::default()
            };
            let r = run_simulation(&env, &cfg)?;
            let path = resolve(&out_dir, &a.out)?;
            std::fs::write(&path, serde_json::to_string(&r)?).with_context(|| format!("writing {}", path.display()))?;
            if let Some(p) = &a.usage_png {
                save_png(&render_usage(&r.tile_usage, env.width(), env.height(), 8)?, &resolve(&out_dir, p)?)?;
            }
            if let Some(p) = &a.usage_csv {
                let rows: Vec<String> = r
                    .tile_usage
                    .chunks(env.width())
                    .map(|row| row.iter().map(u64::to_string).collect::<Vec<_>>().join(","))
                    .collect();
                std::fs::write(resolve(&out_dir, p)?, rows.join("\n") + "\n")?;
            }
            println!(
                "throughput {:.4}  tasks {}  elapsed {}  congested {}",
                r.throughput, r.tasks_finished, r.elapsed, r.congested
            );
        }
        Command::Repair(a) => {
            let env = Environment::read(&a.env)?;
            let c = constraints_for(&env, a.shelves)?;
            let mut budget = RepairBudget::default();
            if let Some(w) = a.work_limit {
                budget.work_limit = w;
            }
            let r = repair(&env, &c, &budget, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
            let path = resolve(&out_dir, &a.out)?;
            r.env.write(&path)?;
            print_json(&serde_json::json!({
                "similarity": r.similarity,
                "distance": r.distance,
                "work_used": r.work_used,
                "mode": r.mode,
                "entropy": environment_entropy(&r.env)?,
                "valid": validate(&r.env, &c).is_valid,
                "output": path,
            }))?;
        }
        Command::Render(a) => {
            let img = if let Some(p) = &a.env {
                render_environment(&Environment::read(p)?, a.px)
            } else if let Some(p) = &a.archive {
                let cfg = a.config.load()?;
                render_archive(&ResultArchive::read_csv(p, cfg.archive)?, a.px)?
            } else if let Some(p) = &a.usage {
                let grid = Environment::read(a.grid_env.as_deref().context("--usage needs --grid-env")?)?;
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                let r: SimResult = serde_json::from_str(&text)?;
                render_usage(&r.tile_usage, grid.width(), grid.height(), a.px)?
            } else {
                bail!("pass one of --env, --archive or --usage");
            };
            let path = resolve(&out_dir, &a.out)?;
            save_png(&img, &path)?;
            eprintln!("wrote {}", path.display());
        }
        Command::TileBaseline(a) => {
            let src = Environment::read(&a.env)?;
            let c = constraints_for(&src, a.shelves)?;
            let (_, out) = tile_baseline(
                &src,
                a.size,
                &c,
                &RepairBudget::default(),
                &mut ChaCha8Rng::seed_from_u64(a.seed),
            )?;
            let path = resolve(&out_dir, &a.out)?;
            out.write(&path)?;
            println!("entropy {:.4}; wrote {}", environment_entropy(&out)?, path.display());
        }
        Command::Select(a) => {
            let cfg = a.config.load()?;
            let archive = ResultArchive::read_csv(&a.archive, cfg.archive.clone())?;
            let (cell, e) = select_elite(&archive, &a.criterion)?;
            let gen = NcaGenerator::from_f64(cfg.domain, pipeline::architecture(&cfg), &e.solution)?;
            let path = resolve(&out_dir, &a.out)?;
            gen.save(&path)?;
            println!(
                "cell {cell}  objective {}  measures {:?}; wrote {}",
                e.objective,
                e.measures,
                path.display()
            );
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
