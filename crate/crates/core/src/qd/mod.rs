//! Quality-diversity search over generator parameters.
//!
//! [`Optimizer`] wraps three search strategies behind one ask/tell loop:
//! CMA-MAE (annealed thresholds, improvement ranking), plain CMA-ES (raw
//! objective ranking), and MAP-Elites with Iso+LineDD variation. Every
//! strategy also feeds a [`ResultArchive`] keyed on the result objective.

mod archive;
mod ext_float;
mod gaussian;

pub use archive::{
    archive_index, AddStatus, ArchiveSpec, Elite, EliteMeta, OptimizationArchive, ResultArchive,
};
pub use gaussian::{GaussianSearchState, DEFAULT_FULL_COVARIANCE_MAX_DIM};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `x1 + sigma_iso * N(0, I) + sigma_line * N(0, 1) * (x2 - x1)`.
pub fn iso_line_variation<R: Rng + ?Sized>(
    x1: &[f64],
    x2: &[f64],
    sigma_iso: f64,
    sigma_line: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if x1.len() != x2.len() {
        return Err(Error::LengthMismatch(format!(
            "parents of length {} and {}",
            x1.len(),
            x2.len()
        )));
    }
    let line: f64 = rng.sample(StandardNormal);
    Ok(x1
        .iter()
        .zip(x2)
        .map(|(a, b)| {
            let iso: f64 = rng.sample(StandardNormal);
            a + sigma_iso * iso + sigma_line * line * (b - a)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    #[default]
    CmaMae,
    CmaEs,
    MapElites,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cma-mae" => Ok(OptimizerKind::CmaMae),
            "cma-es" => Ok(OptimizerKind::CmaEs),
            "map-elites" => Ok(OptimizerKind::MapElites),
            _ => Err(Error::Config(format!("unknown optimizer `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub batch_size: usize,
    /// Initial standard deviation around the zero mean.
    pub sigma0: f64,
    pub learning_rate: f64,
    #[serde(with = "ext_float")]
    pub threshold_floor: f64,
    /// Generations without an accepted candidate before a restart.
    pub restart_patience: u32,
    pub full_covariance_max_dim: usize,
    pub sigma_iso: f64,
    pub sigma_line: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::CmaMae,
            batch_size: 50,
            sigma0: 0.2,
            learning_rate: 0.01,
            threshold_floor: 0.0,
            restart_patience: 5,
            full_covariance_max_dim: DEFAULT_FULL_COVARIANCE_MAX_DIM,
            sigma_iso: 0.01,
            sigma_line: 0.2,
        }
    }
}

/// One evaluated sample handed back to [`Optimizer::tell`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub solution: Vec<f64>,
    pub f_opt: f64,
    pub f_res: f64,
    pub measures: Vec<f64>,
    pub meta: EliteMeta,
    /// Failed evaluations are ranked last and archived nowhere.
    pub failed: bool,
}

impl Candidate {
    fn elite(&self, objective: f64) -> Elite {
        let mut meta = self.meta.clone();
        meta.f_opt = self.f_opt;
        Elite {
            solution: self.solution.clone(),
            objective,
            measures: self.measures.clone(),
            meta,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TellReport {
    pub accepted: usize,
    pub result_inserted: usize,
    pub result_replaced: usize,
    pub restarted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    config: OptimizerConfig,
    dim: usize,
    search: Option<GaussianSearchState>,
    archive: Option<OptimizationArchive>,
    stale_generations: u32,
    restarts: u32,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, dim: usize, spec: ArchiveSpec) -> Result<Self> {
        spec.check()?;
        let archive = match config.kind {
            OptimizerKind::CmaMae => Some(OptimizationArchive::new(
                spec,
                config.learning_rate,
                config.threshold_floor,
            )?),
            OptimizerKind::MapElites => Some(OptimizationArchive::new(spec, 1.0, f64::NEG_INFINITY)?),
            OptimizerKind::CmaEs => None,
        };
        let search = match config.kind {
            OptimizerKind::MapElites => None,
            _ => Some(Self::initial_search(&config, vec![0.0; dim])?),
        };
        if config.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(Optimizer {
            config,
            dim,
            search,
            archive,
            stale_generations: 0,
            restarts: 0,
        })
    }

    fn initial_search(config: &OptimizerConfig, mean: Vec<f64>) -> Result<GaussianSearchState> {
        GaussianSearchState::new(
            mean,
            config.sigma0,
            config.batch_size,
            config.full_covariance_max_dim,
        )
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn restarts(&self) -> u32 {
        self.restarts
    }

    pub fn search(&self) -> Option<&GaussianSearchState> {
        self.search.as_ref()
    }

    pub fn optimization_archive(&self) -> Option<&OptimizationArchive> {
        self.archive.as_ref()
    }

    pub fn ask<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        if let Some(search) = &self.search {
            return Ok(search.ask(rng));
        }
        let archive = self.archive.as_ref().expect("MAP-Elites keeps an archive");
        let b = self.config.batch_size;
        if archive.is_empty() {
            return Ok((0..b)
                .map(|_| {
                    (0..self.dim)
                        .map(|_| self.config.sigma0 * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect());
        }
        (0..b)
            .map(|_| {
                let i = rng.random_range(0..archive.len());
                let j = rng.random_range(0..archive.len());
                let x1 = &archive.nth_elite(i).unwrap().solution;
                let x2 = &archive.nth_elite(j).unwrap().solution;
                iso_line_variation(x1, x2, self.config.sigma_iso, self.config.sigma_line, rng)
            })
            .collect()
    }

    pub fn tell<R: Rng + ?Sized>(
        &mut self,
        batch: &[Candidate],
        result: &mut ResultArchive,
        rng: &mut R,
    ) -> Result<TellReport> {
        let mut report = TellReport::default();
        // (primary key, objective) per sample; larger is better.
        let mut keys = Vec::with_capacity(batch.len());
        for c in batch {
            if c.solution.len() != self.dim {
                return Err(Error::LengthMismatch(format!(
                    "solution of length {} for a {}-d search",
                    c.solution.len(),
                    self.dim
                )));
            }
            if c.failed {
                keys.push((f64::NEG_INFINITY, f64::NEG_INFINITY));
                continue;
            }
            if !c.f_opt.is_finite() || !c.f_res.is_finite() || c.measures.iter().any(|m| !m.is_finite()) {
                return Err(Error::Numerical("non-finite objective or measure".into()));
            }
            let primary = match &mut self.archive {
                Some(archive) => {
                    let (accepted, improvement) = archive.add(c.elite(c.f_opt))?;
                    report.accepted += accepted as usize;
                    improvement
                }
                None => c.f_opt,
            };
            match result.add(c.elite(c.f_res))? {
                AddStatus::Inserted => report.result_inserted += 1,
                AddStatus::Replaced => report.result_replaced += 1,
                AddStatus::Rejected => {}
            }
            keys.push((primary, c.f_opt));
        }

        if self.config.kind == OptimizerKind::CmaEs {
            report.accepted = report.result_inserted + report.result_replaced;
        }
        let Some(search) = &mut self.search else {
            return Ok(report);
        };
        let mut order: Vec<usize> = (0..batch.len()).collect();
        order.sort_by(|&a, &b| {
            keys[b]
                .0
                .total_cmp(&keys[a].0)
                .then(keys[b].1.total_cmp(&keys[a].1))
                .then(a.cmp(&b))
        });
        let informative = keys.iter().any(|k| k != &keys[0]);
        let solutions: Vec<Vec<f64>> = batch.iter().map(|c| c.solution.clone()).collect();
        let mut broken = false;
        if informative {
            match search.tell(&solutions, &order) {
                Ok(()) => {}
                Err(Error::Numerical(_)) => broken = true,
                Err(e) => return Err(e),
            }
        }
        if report.accepted == 0 {
            self.stale_generations += 1;
        } else {
            self.stale_generations = 0;
        }
        let patience_hit = self.config.kind == OptimizerKind::CmaMae
            && self.stale_generations >= self.config.restart_patience;
        if broken || patience_hit || search.is_degenerate() {
            let mean = match &self.archive {
                Some(a) if !a.is_empty() => {
                    a.nth_elite(rng.random_range(0..a.len())).unwrap().solution.clone()
                }
                _ => vec![0.0; self.dim],
            };
            self.search = Some(Self::initial_search(&self.config, mean)?);
            self.stale_generations = 0;
            self.restarts += 1;
            report.restarted = true;
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn candidate(x: Vec<f64>, f: f64, m: Vec<f64>) -> Candidate {
        Candidate {
            solution: x,
            f_opt: f,
            f_res: f,
            measures: m,
            meta: EliteMeta::default(),
            failed: false,
        }
    }

    fn spec() -> ArchiveSpec {
        ArchiveSpec::new(vec![10, 10], vec![[-1.0, 1.0], [-1.0, 1.0]]).unwrap()
    }

    #[test]
    fn equal_rankings_leave_mean_unchanged() {
        let cfg = OptimizerConfig {
            batch_size: 6,
            ..OptimizerConfig::default()
        };
        let mut opt = Optimizer::new(
            OptimizerConfig {
                kind: OptimizerKind::CmaEs,
                ..cfg
            },
            3,
            spec(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs = opt.ask(&mut rng).unwrap();
        let batch: Vec<Candidate> = xs.into_iter().map(|x| candidate(x, 1.0, vec![0.0, 0.0])).collect();
        let mut result = ResultArchive::new(spec());
        opt.tell(&batch, &mut result, &mut rng).unwrap();
        assert_eq!(opt.search().unwrap().mean(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn failed_candidates_are_not_archived() {
        let mut opt = Optimizer::new(OptimizerConfig { batch_size: 2, ..Default::default() }, 2, spec()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let xs = opt.ask(&mut rng).unwrap();
        let mut batch: Vec<Candidate> = xs.into_iter().map(|x| candidate(x, 1.0, vec![0.5, 0.5])).collect();
        batch[0].failed = true;
        batch[0].measures = vec![-0.9, -0.9];
        let mut result = ResultArchive::new(spec());
        let r = opt.tell(&batch, &mut result, &mut rng).unwrap();
        assert_eq!(result.len(), 1);
        assert_eq!(r.accepted, 1);
    }

    #[test]
    fn map_elites_fills_archive() {
        let cfg = OptimizerConfig {
            kind: OptimizerKind::MapElites,
            batch_size: 20,
            ..Default::default()
        };
        let mut opt = Optimizer::new(cfg, 2, spec()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut result = ResultArchive::new(spec());
        for _ in 0..20 {
            let xs = opt.ask(&mut rng).unwrap();
            let batch: Vec<Candidate> = xs
                .into_iter()
                .map(|x| {
                    let f = 10.0 - x.iter().map(|v| v * v).sum::<f64>();
                    let m = x.clone();
                    candidate(x, f, m)
                })
                .collect();
            opt.tell(&batch, &mut result, &mut rng).unwrap();
        }
        assert!(result.len() > 10, "{}", result.len());
    }

    #[test]
    fn iso_line_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x1 = vec![1.0, 2.0];
        assert_eq!(iso_line_variation(&x1, &[5.0, 5.0], 0.0, 0.0, &mut rng).unwrap(), x1);
        let y = iso_line_variation(&x1, &x1, 0.0, 0.7, &mut rng).unwrap();
        assert_eq!(y, x1);
        assert!(iso_line_variation(&x1, &[1.0], 0.1, 0.1, &mut rng).is_err());
    }
}
