use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::Domain;
use crate::error::{Error, Result};
use crate::qd::{ArchiveSpec, OptimizerConfig, OptimizerKind};
use crate::repair::RepairBudget;
use crate::sim::SimConfig;
use crate::validate::Constraints;

/// Width and height of an environment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Size {
    pub width: usize,
    pub height: usize,
}

impl Size {
    pub const fn new(width: usize, height: usize) -> Self {
        Size { width, height }
    }
}

impl std::fmt::Display for Size {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl std::str::FromStr for Size {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::Config(format!("size `{s}` is not WIDTHxHEIGHT")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad size component `{v}`")))
        };
        Ok(Size::new(parse(w)?, parse(h)?))
    }
}

/// Simulator knobs shared by training and evaluation runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub window: usize,
    pub replan_period: usize,
    pub uneven_left_weight: f64,
    pub dwell: [u32; 3],
    pub dwell_counts_as_wait: bool,
}

impl Default for SimSettings {
    fn default() -> Self {
        let d = SimConfig::default();
        SimSettings {
            window: d.window,
            replan_period: d.replan_period,
            uneven_left_weight: d.uneven_left_weight,
            dwell: d.dwell,
            dwell_counts_as_wait: d.dwell_counts_as_wait,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub domain: Domain,
    /// Training size `S`. Maze sizes include the boundary ring.
    pub train_size: Size,
    pub eval_size: Size,
    /// NCA iterations `C` at train size.
    pub iterations: usize,
    pub iterations_eval: usize,
    /// Shelf counts `N_s`, warehouse only.
    pub shelves: Option<usize>,
    pub shelves_eval: Option<usize>,
    pub agents: usize,
    pub agents_eval: usize,
    pub horizon: usize,
    pub horizon_eval: usize,
    /// Simulations per evaluation `N_e`.
    pub sims_per_eval: usize,
    /// Total evaluation budget `N_eval`.
    pub total_evals: usize,
    /// Weight of the similarity score in `f_opt`.
    pub alpha: f64,
    pub hidden_channels: usize,
    pub archive: ArchiveSpec,
    pub optimizer: OptimizerConfig,
    pub repair: RepairBudget,
    pub sim: SimSettings,
    /// Master seed for sampling.
    pub seed: u64,
    /// Base seed of the `N_e` simulations; shared by every candidate.
    pub eval_seed: u64,
    /// Seed of the repair tie-break stream; shared by every candidate.
    pub repair_seed: u64,
    /// Worker threads, 0 for all cores.
    pub workers: usize,
    /// Snapshot every this many generations (the last one is always kept).
    pub snapshot_every: usize,
}

pub const PRESETS: [&str; 7] = [
    "warehouse-even",
    "warehouse-uneven",
    "manufacturing",
    "maze",
    "small-nca",
    "mini",
    "mini-maze",
];

impl ExperimentConfig {
    /// Full-scale presets, `small-nca` (warehouse-even with 8 hidden channels),
    /// `mini` (a 16x12 even warehouse with 12x12 storage) and `mini-maze`
    /// (18x18 maze, small budget).
    pub fn preset(name: &str) -> Result<Self> {
        let multi = |domain: Domain, agents_eval: usize| {
            let warehouse = domain.is_warehouse();
            ExperimentConfig {
                domain,
                train_size: Size::new(36, 33),
                eval_size: Size::new(101, 102),
                iterations: 50,
                iterations_eval: 200,
                shelves: warehouse.then_some(240),
                shelves_eval: warehouse.then_some(2_250),
                agents: 200,
                agents_eval,
                horizon: 1_000,
                horizon_eval: 5_000,
                sims_per_eval: 5,
                total_evals: 10_000,
                alpha: 5.0,
                hidden_channels: 32,
                archive: ArchiveSpec::for_domain(domain),
                optimizer: OptimizerConfig::default(),
                repair: RepairBudget::default(),
                sim: SimSettings::default(),
                seed: 0,
                eval_seed: 0,
                repair_seed: 0,
                workers: 0,
                snapshot_every: 10,
            }
        };
        let cfg = match name {
            "warehouse-even" => multi(Domain::WarehouseEven, 1_400),
            "warehouse-uneven" => multi(Domain::WarehouseUneven, 1_000),
            "manufacturing" => multi(Domain::Manufacturing, 1_800),
            "maze" => {
                let mut c = multi(Domain::Maze, 1);
                c.train_size = Size::new(18, 18);
                c.eval_size = Size::new(66, 66);
                c.agents = 1;
                c.sims_per_eval = 50;
                c.total_evals = 100_000;
                c.optimizer.batch_size = 150;
                c.optimizer.learning_rate = 0.5;
                c
            }
            "small-nca" => {
                let mut c = multi(Domain::WarehouseEven, 1_400);
                c.hidden_channels = 8;
                c
            }
            "mini" => {
                let mut c = multi(Domain::WarehouseEven, 20);
                c.train_size = Size::new(16, 12);
                c.eval_size = Size::new(28, 24);
                c.shelves = Some(24);
                c.shelves_eval = Some(96);
                c.agents = 20;
                c.agents_eval = 80;
                c.horizon = 500;
                c.horizon_eval = 500;
                c.sims_per_eval = 2;
                c.total_evals = 200;
                c.hidden_channels = 3;
                c.alpha = 0.05;
                c.archive = ArchiveSpec::new(vec![25, 20], vec![[0.0, 24.0], [0.0, 1.0]])?;
                c.optimizer.batch_size = 10;
                c.snapshot_every = 1;
                c
            }
            "mini-maze" => {
                let mut c = Self::preset("maze")?;
                c.hidden_channels = 8;
                c.sims_per_eval = 1;
                c.total_evals = 400;
                c.optimizer.batch_size = 20;
                c.snapshot_every = 5;
                c
            }
            _ => {
                return Err(Error::Config(format!(
                    "unknown preset `{name}` (known: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        let positive = [
            ("train width", self.train_size.width),
            ("train height", self.train_size.height),
            ("eval width", self.eval_size.width),
            ("eval height", self.eval_size.height),
            ("iterations", self.iterations),
            ("iterations_eval", self.iterations_eval),
            ("agents", self.agents),
            ("agents_eval", self.agents_eval),
            ("horizon", self.horizon),
            ("horizon_eval", self.horizon_eval),
            ("sims_per_eval", self.sims_per_eval),
            ("total_evals", self.total_evals),
            ("hidden_channels", self.hidden_channels),
            ("batch_size", self.optimizer.batch_size),
            ("snapshot_every", self.snapshot_every),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.domain.is_warehouse() != self.shelves.is_some()
            || self.domain.is_warehouse() != self.shelves_eval.is_some()
        {
            return Err(Error::Config(
                "shelf counts are required for warehouses and only for warehouses".into(),
            ));
        }
        if self.shelves == Some(0) || self.shelves_eval == Some(0) {
            return Err(Error::Config("shelf counts must be positive".into()));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::Config(format!("alpha {} must be finite and >= 0", self.alpha)));
        }
        self.archive.check()?;
        if self.archive.measure_dims() != 2 {
            return Err(Error::Config("archives have two measures".into()));
        }
        self.sim_config(false).check()?;
        if self.domain == Domain::Maze && (self.train_size.width < 4 || self.train_size.height < 4) {
            return Err(Error::Config("maze sizes include the ring and need at least 4x4".into()));
        }
        Ok(())
    }

    pub fn constraints(&self, eval: bool) -> Constraints {
        Constraints {
            shelf_count: if eval { self.shelves_eval } else { self.shelves },
        }
    }

    pub fn sim_config(&self, eval: bool) -> SimConfig {
        SimConfig {
            num_agents: if eval { self.agents_eval } else { self.agents },
            horizon: if eval { self.horizon_eval } else { self.horizon },
            window: self.sim.window,
            replan_period: self.sim.replan_period,
            seed: self.eval_seed,
            uneven_left_weight: self.sim.uneven_left_weight,
            dwell: self.sim.dwell,
            dwell_counts_as_wait: self.sim.dwell_counts_as_wait,
            start_positions: None,
            record_trajectories: false,
        }
    }

    pub fn optimizer_kind(&self) -> OptimizerKind {
        self.optimizer.kind
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("serializing config: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("parsing config: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    /// SHA-256 of the TOML form.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }
}

/// Independent seed for `(stream, index)` under `master` (SplitMix64 mixing).
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    for _ in 0..2 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_presets() {
        let even = ExperimentConfig::preset("warehouse-even").unwrap();
        assert_eq!(even.train_size, Size::new(36, 33));
        assert_eq!(even.eval_size, Size::new(101, 102));
        assert_eq!((even.shelves, even.shelves_eval), (Some(240), Some(2_250)));
        assert_eq!((even.agents, even.agents_eval), (200, 1_400));
        assert_eq!((even.sims_per_eval, even.optimizer.batch_size, even.total_evals), (5, 50, 10_000));
        assert_eq!(ExperimentConfig::preset("warehouse-uneven").unwrap().agents_eval, 1_000);
        let m = ExperimentConfig::preset("manufacturing").unwrap();
        assert_eq!((m.shelves, m.agents_eval), (None, 1_800));
        let maze = ExperimentConfig::preset("maze").unwrap();
        assert_eq!((maze.train_size, maze.eval_size), (Size::new(18, 18), Size::new(66, 66)));
        assert_eq!((maze.agents, maze.sims_per_eval, maze.optimizer.batch_size, maze.total_evals), (1, 50, 150, 100_000));
        assert_eq!((even.iterations, even.iterations_eval), (50, 200));
        let small = ExperimentConfig::preset("small-nca").unwrap();
        let arch = crate::nca::NcaArchitecture::for_domain(small.domain, small.hidden_channels);
        assert_eq!(arch.param_count(), 1027);
    }

    #[test]
    fn mini_preset() {
        let c = ExperimentConfig::preset("mini").unwrap();
        assert_eq!(c.train_size, Size::new(16, 12));
        assert_eq!((c.shelves, c.agents, c.horizon, c.sims_per_eval), (Some(24), 20, 500, 2));
        assert_eq!((c.optimizer.batch_size, c.total_evals), (10, 200));
    }

    #[test]
    fn toml_round_trip() {
        for name in PRESETS {
            let c = ExperimentConfig::preset(name).unwrap();
            assert_eq!(ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        }
        let mut me = ExperimentConfig::preset("mini").unwrap();
        me.optimizer.threshold_floor = f64::NEG_INFINITY;
        let back = ExperimentConfig::from_toml(&me.to_toml().unwrap()).unwrap();
        assert_eq!(back.optimizer.threshold_floor, f64::NEG_INFINITY);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::preset("nope").is_err());
        let mut c = ExperimentConfig::preset("mini").unwrap();
        c.optimizer.batch_size = 0;
        assert!(c.check().is_err());
        let mut c = ExperimentConfig::preset("manufacturing").unwrap();
        c.shelves = Some(3);
        assert!(c.check().is_err());
    }

    #[test]
    fn sizes_parse() {
        assert_eq!("36x33".parse::<Size>().unwrap(), Size::new(36, 33));
        assert!("36".parse::<Size>().is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, 0, 0);
        assert_ne!(a, derive_seed(1, 0, 1));
        assert_ne!(a, derive_seed(1, 1, 0));
        assert_ne!(a, derive_seed(2, 0, 0));
        assert_eq!(a, derive_seed(1, 0, 0));
    }
}
