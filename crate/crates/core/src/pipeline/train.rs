use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{derive_seed, ExperimentConfig, Size};
use crate::env::{Domain, Environment};
use crate::error::{Error, Result};
use crate::nca::{make_seed, NcaArchitecture, NcaGenerator};
use crate::qd::{Candidate, EliteMeta, Optimizer, ResultArchive};
use crate::repair::{repair, RepairResult};
use crate::sim::{evaluate, Evaluation};

const STREAM_ASK: u64 = 1;

/// NCA output at `size` from the domain seed. Maze generators work on the
/// interior and get the wall ring appended.
pub fn generate_environment(gen: &NcaGenerator, size: Size, iterations: usize) -> Result<Environment> {
    if gen.domain() == Domain::Maze {
        if size.width < 3 || size.height < 3 {
            return Err(Error::DimensionTooSmall {
                width: size.width,
                height: size.height,
                reason: "maze sizes include the boundary ring",
            });
        }
        let seed = make_seed(Domain::Maze, size.width - 2, size.height - 2)?;
        return gen.generate(&seed, iterations)?.with_boundary_ring();
    }
    let seed = make_seed(gen.domain(), size.width, size.height)?;
    gen.generate(&seed, iterations)
}

/// Everything produced while scoring one generator.
#[derive(Clone, Debug)]
pub struct Scored {
    pub unrepaired: Environment,
    pub repaired: RepairResult,
    pub eval: Evaluation,
    /// `f_res + alpha * similarity`.
    pub f_opt: f64,
}

/// Generate, repair and evaluate at train size (`eval = false`) or eval size.
pub fn score_generator(cfg: &ExperimentConfig, gen: &NcaGenerator, eval: bool) -> Result<Scored> {
    let (size, iters) = if eval {
        (cfg.eval_size, cfg.iterations_eval)
    } else {
        (cfg.train_size, cfg.iterations)
    };
    let unrepaired = generate_environment(gen, size, iters)?;
    let repaired = repair(
        &unrepaired,
        &cfg.constraints(eval),
        &cfg.repair,
        &mut ChaCha8Rng::seed_from_u64(cfg.repair_seed),
    )?;
    let eval = evaluate_environment(cfg, &repaired.env, eval)?;
    Ok(Scored {
        f_opt: eval.f_res + cfg.alpha * repaired.similarity,
        unrepaired,
        repaired,
        eval,
    })
}

/// Objective and measures of an already valid environment.
pub fn evaluate_environment(cfg: &ExperimentConfig, env: &Environment, eval: bool) -> Result<Evaluation> {
    evaluate(env, &cfg.sim_config(eval), cfg.sims_per_eval, cfg.eval_seed)
}

pub fn architecture(cfg: &ExperimentConfig) -> NcaArchitecture {
    NcaArchitecture::for_domain(cfg.domain, cfg.hidden_channels)
}

fn candidate(cfg: &ExperimentConfig, solution: Vec<f64>, eval_index: u64) -> Candidate {
    let scored = NcaGenerator::from_f64(cfg.domain, architecture(cfg), &solution)
        .and_then(|gen| score_generator(cfg, &gen, false));
    match scored {
        Ok(s) => Candidate {
            solution,
            f_opt: s.f_opt,
            f_res: s.eval.f_res,
            measures: s.eval.measures,
            meta: EliteMeta {
                env_hash: s.repaired.env.content_hash(),
                similarity: s.repaired.similarity,
                f_opt: s.f_opt,
                success_rate: s.eval.success_rate,
                eval_index,
            },
            failed: false,
        },
        Err(_) => Candidate {
            solution,
            f_opt: 0.0,
            f_res: 0.0,
            measures: vec![0.0; cfg.archive.measure_dims()],
            meta: EliteMeta {
                eval_index,
                ..EliteMeta::default()
            },
            failed: true,
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    /// Evaluations recorded so far, including this generation.
    pub evaluations: usize,
    pub failed: usize,
    pub accepted: usize,
    pub restarted: bool,
    /// Mean `f_res` of this generation's candidates (failures count as 0).
    pub batch_mean_f_res: f64,
    pub best_f_res: f64,
    pub qd_score: f64,
    pub coverage: f64,
    pub wall_time_s: f64,
    /// Snapshot directory relative to the run directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<String>,
}

/// Append-only log of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub config: ExperimentConfig,
    pub generations: Vec<GenerationRecord>,
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        Ok(RunManifest {
            config_hash: config.hash()?,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            generations: Vec::new(),
        })
    }

    pub fn evaluations(&self) -> usize {
        self.generations.last().map_or(0, |g| g.evaluations)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Continue from the newest snapshot in the run directory.
    pub resume: bool,
    /// Stop after this many generations in total (simulates an interruption).
    pub stop_after: Option<usize>,
}

pub struct TrainOutput {
    pub manifest: RunManifest,
    pub result: ResultArchive,
    pub optimizer: Optimizer,
}

pub const RESULT_CSV: &str = "result_archive.csv";
pub const OPTIMIZER_JSON: &str = "optimizer.json";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const CONFIG_TOML: &str = "config.toml";
pub const SNAPSHOT_DIR: &str = "snapshots";

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn snapshot_name(generations_done: usize) -> String {
    format!("gen-{generations_done:05}")
}

/// Snapshot directories in generation order.
pub fn list_snapshots(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let dir = run_dir.join(SNAPSHOT_DIR);
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut out: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_JSON).exists())
        .collect();
    out.sort();
    Ok(out)
}

fn write_state(dir: &Path, result: &ResultArchive, opt: &Optimizer, manifest: &RunManifest) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut csv = Vec::new();
    result.write_csv_to(&mut csv)?;
    write_atomic(&dir.join(RESULT_CSV), &csv)?;
    write_atomic(&dir.join(OPTIMIZER_JSON), serde_json::to_string(opt)?.as_bytes())?;
    // Manifest last: its presence marks a complete snapshot.
    manifest.save(&dir.join(MANIFEST_JSON))
}

/// Loads the result archive, optimizer and manifest stored in `dir`.
pub fn load_state(dir: &Path, cfg: &ExperimentConfig) -> Result<(ResultArchive, Optimizer, RunManifest)> {
    let result = ResultArchive::read_csv(&dir.join(RESULT_CSV), cfg.archive.clone())?;
    let p = dir.join(OPTIMIZER_JSON);
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let opt: Optimizer = serde_json::from_str(&text)?;
    let manifest = RunManifest::load(&dir.join(MANIFEST_JSON))?;
    Ok((result, opt, manifest))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Runs (or resumes) the training loop in `run_dir`, calling `progress` after
/// every generation.
pub fn train(
    cfg: &ExperimentConfig,
    run_dir: &Path,
    opts: &TrainOptions,
    progress: &mut dyn FnMut(&GenerationRecord),
) -> Result<TrainOutput> {
    cfg.check()?;
    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let dim = architecture(cfg).param_count();
    let b = cfg.optimizer.batch_size;
    let generations = cfg.total_evals.div_ceil(b);

    let latest = if opts.resume { list_snapshots(run_dir)?.pop() } else { None };
    let (mut result, mut opt, mut manifest) = match latest {
        Some(dir) => {
            let state = load_state(&dir, cfg)?;
            if state.2.config_hash != cfg.hash()? {
                return Err(Error::Config(format!(
                    "snapshot {} was written with a different configuration",
                    dir.display()
                )));
            }
            state
        }
        None => {
            if run_dir.join(SNAPSHOT_DIR).exists() {
                fs::remove_dir_all(run_dir.join(SNAPSHOT_DIR)).map_err(|e| Error::io(run_dir, e))?;
            }
            (
                ResultArchive::new(cfg.archive.clone()),
                Optimizer::new(cfg.optimizer.clone(), dim, cfg.archive.clone())?,
                RunManifest::new(cfg)?,
            )
        }
    };
    cfg.save(&run_dir.join(CONFIG_TOML))?;
    let workers = pool(cfg.workers)?;

    let start_gen = manifest.generations.len();
    let stop = opts.stop_after.unwrap_or(generations).min(generations);
    for gen in start_gen..stop {
        let clock = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_ASK, gen as u64));
        let batch = opt.ask(&mut rng)?;
        let first = (gen * b) as u64;
        let candidates: Vec<Candidate> = workers.install(|| {
            batch
                .into_par_iter()
                .enumerate()
                .map(|(i, theta)| candidate(cfg, theta, first + i as u64))
                .collect()
        });
        let report = opt.tell(&candidates, &mut result, &mut rng)?;
        let done = gen + 1;
        let snapshot = (done % cfg.snapshot_every == 0 || done == generations).then(|| snapshot_name(done));
        let record = GenerationRecord {
            generation: gen,
            evaluations: done * b,
            failed: candidates.iter().filter(|c| c.failed).count(),
            accepted: report.accepted,
            restarted: report.restarted,
            batch_mean_f_res: candidates.iter().map(|c| c.f_res).sum::<f64>() / b as f64,
            best_f_res: result.best().map_or(0.0, |(_, e)| e.objective),
            qd_score: result.qd_score(),
            coverage: result.coverage(),
            wall_time_s: clock.elapsed().as_secs_f64(),
            snapshot: snapshot.as_ref().map(|s| format!("{SNAPSHOT_DIR}/{s}")),
        };
        manifest.generations.push(record.clone());
        if let Some(name) = &snapshot {
            write_state(&run_dir.join(SNAPSHOT_DIR).join(name), &result, &opt, &manifest)?;
        }
        manifest.save(&run_dir.join(MANIFEST_JSON))?;
        progress(&record);
    }

    let mut csv = Vec::new();
    result.write_csv_to(&mut csv)?;
    write_atomic(&run_dir.join(RESULT_CSV), &csv)?;
    write_atomic(&run_dir.join(OPTIMIZER_JSON), serde_json::to_string(&opt)?.as_bytes())?;
    manifest.save(&run_dir.join(MANIFEST_JSON))?;
    Ok(TrainOutput {
        manifest,
        result,
        optimizer: opt,
    })
}
