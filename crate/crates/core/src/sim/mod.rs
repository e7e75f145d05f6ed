//! Lifelong multi-agent simulation and maze graph metrics.
//!
//! Agents follow a rolling horizon: every `replan_period` steps all paths are
//! replanned for the next `window` steps; an agent that finishes a task mid
//! window gets a fresh path against the other agents' existing plans.

mod maze;
mod planner;

pub use maze::{maze_metrics, maze_metrics_between, MazeMetrics};
pub use planner::{plan_window, PlanRequest, PrioritizedPlanner, WindowPlanner, MAX_PRIORITY_ATTEMPTS};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Coord, Domain, Environment, TileType};
use crate::error::{Error, Result};
use crate::metrics::{connected_shelf_components, environment_entropy, workstation_count};
use crate::validate::{validate, Constraints};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub num_agents: usize,
    /// Timesteps `T`.
    pub horizon: usize,
    pub window: usize,
    pub replan_period: usize,
    pub seed: u64,
    /// Draw weight of left-border workstations in the uneven warehouse.
    pub uneven_left_weight: f64,
    /// Dwell times at red, green and yellow stations.
    pub dwell: [u32; 3],
    /// Whether dwelling agents count as waiting for the congestion rule.
    pub dwell_counts_as_wait: bool,
    /// Fixed start cells instead of random ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_positions: Option<Vec<Coord>>,
    /// Keep every agent's executed trajectory in the result.
    #[serde(default)]
    pub record_trajectories: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            num_agents: 200,
            horizon: 1000,
            window: 10,
            replan_period: 5,
            seed: 0,
            uneven_left_weight: 5.0,
            dwell: [2, 5, 10],
            dwell_counts_as_wait: true,
            start_positions: None,
            record_trajectories: false,
        }
    }
}

impl SimConfig {
    pub fn check(&self) -> Result<()> {
        if self.replan_period == 0 || self.window < self.replan_period {
            return Err(Error::Config(format!(
                "need window ({}) >= replan period ({}) >= 1",
                self.window, self.replan_period
            )));
        }
        if self.num_agents == 0 {
            return Err(Error::Config("at least one agent is required".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskPhase {
    ToWorkstation,
    ToEndpoint,
    ToR,
    ToG,
    ToY,
}

impl TaskPhase {
    pub fn initial(domain: Domain) -> Self {
        if domain == Domain::Manufacturing {
            TaskPhase::ToR
        } else {
            TaskPhase::ToEndpoint
        }
    }

    pub fn next(self) -> Self {
        match self {
            TaskPhase::ToWorkstation => TaskPhase::ToEndpoint,
            TaskPhase::ToEndpoint => TaskPhase::ToWorkstation,
            TaskPhase::ToR => TaskPhase::ToG,
            TaskPhase::ToG => TaskPhase::ToY,
            TaskPhase::ToY => TaskPhase::ToR,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentState {
    pub pos: usize,
    pub goal: usize,
    pub phase: TaskPhase,
    /// Remaining dwell steps while parked at the goal.
    pub dwell: u32,
    pub finished: u64,
}

/// Candidate goal cells of an environment, per task phase.
#[derive(Clone, Debug)]
pub struct GoalSets {
    endpoints: Vec<usize>,
    workstations: Vec<usize>,
    workstation_draw: Option<WeightedIndex<f64>>,
    /// Endpoints next to a red, green and yellow station.
    by_colour: [Vec<usize>; 3],
}

impl GoalSets {
    pub fn new(env: &Environment, uneven_left_weight: f64) -> Result<Self> {
        let endpoints: Vec<usize> = (0..env.len())
            .filter(|&i| env.tile(i) == TileType::Endpoint)
            .collect();
        let workstations: Vec<usize> = (0..env.len())
            .filter(|&i| env.tile(i) == TileType::Workstation)
            .collect();
        let workstation_draw = if env.domain() == Domain::WarehouseUneven && !workstations.is_empty() {
            let weights: Vec<f64> = workstations
                .iter()
                .map(|&i| {
                    if env.coord(i).x < env.width() / 2 {
                        uneven_left_weight
                    } else {
                        1.0
                    }
                })
                .collect();
            Some(WeightedIndex::new(weights).map_err(|e| Error::Config(format!("workstation weights: {e}")))?)
        } else {
            None
        };
        let colours = [TileType::StationR, TileType::StationG, TileType::StationY];
        let by_colour = colours.map(|c| {
            endpoints
                .iter()
                .copied()
                .filter(|&e| env.neighbors(e).any(|k| env.tile(k) == c))
                .collect()
        });
        Ok(GoalSets {
            endpoints,
            workstations,
            workstation_draw,
            by_colour,
        })
    }

    fn candidates(&self, phase: TaskPhase) -> &[usize] {
        match phase {
            TaskPhase::ToWorkstation => &self.workstations,
            TaskPhase::ToEndpoint => &self.endpoints,
            TaskPhase::ToR => &self.by_colour[0],
            TaskPhase::ToG => &self.by_colour[1],
            TaskPhase::ToY => &self.by_colour[2],
        }
    }
}

/// Next goal for `agent`'s current phase. Warehouse goals alternate between
/// workstations and endpoints; manufacturing goals are endpoints next to the
/// phase's station colour. The agent's own cell is avoided when possible.
pub fn assign_task<R: Rng + ?Sized>(agent: &AgentState, goals: &GoalSets, rng: &mut R) -> Result<usize> {
    let cands = goals.candidates(agent.phase);
    if cands.is_empty() {
        return Err(Error::NoCandidateGoal(format!("{:?}", agent.phase)));
    }
    if agent.phase == TaskPhase::ToWorkstation {
        if let Some(draw) = &goals.workstation_draw {
            loop {
                let g = cands[draw.sample(rng)];
                if g != agent.pos || cands.len() == 1 {
                    return Ok(g);
                }
            }
        }
    }
    loop {
        let g = *cands.choose(rng).expect("non-empty");
        if g != agent.pos || cands.len() == 1 {
            return Ok(g);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub throughput: f64,
    pub congested: bool,
    pub finished_per_timestep: Vec<u32>,
    pub tile_usage: Vec<u64>,
    pub elapsed: usize,
    pub tasks_finished: u64,
    pub agent_tasks: Vec<u64>,
    /// Windows in which the planner used its safe fallback.
    pub safe_mode_windows: u64,
    /// Cells per agent per timestep, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<Vec<Vec<usize>>>,
}

fn dwell_for(cfg: &SimConfig, phase: TaskPhase) -> u32 {
    match phase {
        TaskPhase::ToR => cfg.dwell[0],
        TaskPhase::ToG => cfg.dwell[1],
        TaskPhase::ToY => cfg.dwell[2],
        _ => 0,
    }
}

pub fn run_simulation(env: &Environment, cfg: &SimConfig) -> Result<SimResult> {
    cfg.check()?;
    if env.domain() == Domain::Maze {
        return Err(Error::WrongDomain {
            op: "run_simulation",
            domain: env.domain(),
        });
    }
    let report = validate(env, &Constraints::default());
    if !report.is_valid {
        return Err(Error::InvalidEnvironment(format!(
            "{:?}",
            report.violations.iter().map(|v| v.constraint).collect::<Vec<_>>()
        )));
    }
    let open: Vec<usize> = (0..env.len()).filter(|&i| env.is_traversable(i)).collect();
    if cfg.num_agents > open.len() {
        return Err(Error::TooManyAgents {
            agents: cfg.num_agents,
            tiles: open.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let goals = GoalSets::new(env, cfg.uneven_left_weight)?;

    let starts: Vec<usize> = match &cfg.start_positions {
        Some(cs) => {
            if cs.len() != cfg.num_agents {
                return Err(Error::Config(format!(
                    "{} start positions for {} agents",
                    cs.len(),
                    cfg.num_agents
                )));
            }
            let idx: Vec<usize> = cs.iter().map(|c| env.index(c.x, c.y)).collect();
            let mut seen = std::collections::HashSet::new();
            if idx.iter().any(|&i| !env.is_traversable(i) || !seen.insert(i)) {
                return Err(Error::Config("start positions must be distinct traversable tiles".into()));
            }
            idx
        }
        None => {
            let mut cells = open.clone();
            let (picked, _) = cells.partial_shuffle(&mut rng, cfg.num_agents);
            picked.to_vec()
        }
    };
    let phase0 = TaskPhase::initial(env.domain());
    let mut agents = Vec::with_capacity(cfg.num_agents);
    for &pos in &starts {
        let mut a = AgentState {
            pos,
            goal: pos,
            phase: phase0,
            dwell: 0,
            finished: 0,
        };
        a.goal = assign_task(&a, &goals, &mut rng)?;
        agents.push(a);
    }

    let mut planner = PrioritizedPlanner::new(env, cfg.window);
    let mut usage = vec![0u64; env.len()];
    let mut per_step = Vec::with_capacity(cfg.horizon);
    let mut trajectories = cfg
        .record_trajectories
        .then(|| agents.iter().map(|a| vec![a.pos]).collect::<Vec<_>>());
    let mut paths: Vec<Vec<usize>> = Vec::new();
    let mut plan_start = 0usize;
    let mut congested = false;
    let mut elapsed = 0usize;
    let requests = |agents: &[AgentState]| -> Vec<PlanRequest> {
        agents
            .iter()
            .map(|a| PlanRequest {
                pos: a.pos,
                goal: a.goal,
                hold: a.dwell as usize,
            })
            .collect()
    };

    for t in 0..cfg.horizon {
        if t % cfg.replan_period == 0 {
            paths = planner.plan_window(&requests(&agents), &mut rng);
            plan_start = t;
        }
        let k = t + 1 - plan_start;
        let waits = agents
            .iter()
            .enumerate()
            .filter(|(i, a)| paths[*i][k] == a.pos && (cfg.dwell_counts_as_wait || a.dwell == 0))
            .count();
        if 2 * waits > cfg.num_agents {
            congested = true;
            break;
        }
        let mut finished_now = 0u32;
        let mut refresh = Vec::new();
        for (i, a) in agents.iter_mut().enumerate() {
            let next = paths[i][k];
            let moved = next != a.pos;
            a.pos = next;
            usage[next] += 1;
            if let Some(tr) = trajectories.as_mut() {
                tr[i].push(next);
            }
            let mut done = false;
            if a.dwell > 0 {
                if moved {
                    a.dwell = 0;
                } else {
                    a.dwell -= 1;
                    done = a.dwell == 0;
                }
            } else if a.pos == a.goal {
                a.dwell = dwell_for(cfg, a.phase);
                done = a.dwell == 0;
                if !done {
                    refresh.push(i);
                }
            }
            if done {
                a.finished += 1;
                finished_now += 1;
                a.phase = a.phase.next();
                refresh.push(i);
            }
        }
        for &i in &refresh {
            if agents[i].dwell == 0 {
                agents[i].goal = assign_task(&agents[i], &goals, &mut rng)?;
            }
        }
        // Refresh paths unless a full replan is about to happen anyway.
        if (t + 1) % cfg.replan_period != 0 {
            for &i in &refresh {
                let a = &agents[i];
                let req = PlanRequest {
                    pos: a.pos,
                    goal: a.goal,
                    hold: a.dwell as usize,
                };
                planner.refresh(i, req, k, &mut paths);
            }
        }
        per_step.push(finished_now);
        elapsed = t + 1;
    }

    let tasks: u64 = agents.iter().map(|a| a.finished).sum();
    Ok(SimResult {
        throughput: if elapsed == 0 { 0.0 } else { tasks as f64 / elapsed as f64 },
        congested,
        finished_per_timestep: per_step,
        tile_usage: usage,
        elapsed,
        tasks_finished: tasks,
        agent_tasks: agents.iter().map(|a| a.finished).collect(),
        safe_mode_windows: planner.safe_mode_windows,
        trajectories,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub f_res: f64,
    pub measures: Vec<f64>,
    pub success_rate: f64,
    pub throughputs: Vec<f64>,
}

/// Objective and measures of an environment. Warehouse / manufacturing:
/// mean throughput over `n_e` runs seeded `base_seed..base_seed + n_e`,
/// measures `(shelf components | workstations, entropy)`. Maze: solvability
/// of the diameter pair, measures `(walls, path length)`.
pub fn evaluate(env: &Environment, cfg: &SimConfig, n_e: usize, base_seed: u64) -> Result<Evaluation> {
    if env.domain() == Domain::Maze {
        let m = maze_metrics(env)?;
        return Ok(Evaluation {
            f_res: if m.solvable { 1.0 } else { 0.0 },
            measures: vec![m.wall_count as f64, m.path_length as f64],
            success_rate: if m.solvable { 1.0 } else { 0.0 },
            throughputs: Vec::new(),
        });
    }
    if n_e == 0 {
        return Err(Error::Config("at least one simulation per evaluation".into()));
    }
    let entropy = environment_entropy(env)?;
    let first = match env.domain() {
        Domain::Manufacturing => workstation_count(env)? as f64,
        _ => connected_shelf_components(env)? as f64,
    };
    let mut throughputs = Vec::with_capacity(n_e);
    let mut ok = 0usize;
    for k in 0..n_e {
        let run_cfg = SimConfig {
            seed: base_seed + k as u64,
            record_trajectories: false,
            ..cfg.clone()
        };
        let r = run_simulation(env, &run_cfg)?;
        ok += usize::from(!r.congested);
        throughputs.push(r.throughput);
    }
    Ok(Evaluation {
        f_res: throughputs.iter().sum::<f64>() / n_e as f64,
        measures: vec![first, entropy],
        success_rate: ok as f64 / n_e as f64,
        throughputs,
    })
}
