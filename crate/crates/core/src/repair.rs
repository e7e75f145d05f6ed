//! Constraint repair: the closest valid environment under weighted hamming
//! distance.
//!
//! Small instances (few free cells) are solved exactly by depth-first
//! branch-and-bound in lexicographic tile order, so the first optimum found is
//! the lexicographically smallest one. Larger instances go through a phased
//! heuristic:
//!
//! 1. un-strand obstacles that have no neighbour able to host an endpoint;
//! 2. connect the traversable region by carving cheapest corridors;
//! 3. fix the shelf count (warehouse) or add missing station colours
//!    (manufacturing) on cells that keep the region connected;
//! 4. keep the input endpoints that still touch an obstacle and cover the
//!    remaining obstacles by greedy set cover;
//! 5. hill-climb reverts and shelf relocations while work budget remains.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{neighbors4, Domain, Environment, TileType};
use crate::error::{Error, Result};
use crate::grid::{articulation_points, cheapest_path, label_components};
use crate::metrics::{similarity, weighted_distance, SimilarityWeights};
use crate::validate::{is_obstacle, validate, Constraints};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepairBudget {
    /// Abstract work units: one per candidate flip evaluated.
    pub work_limit: u64,
    #[serde(default, with = "opt_secs")]
    pub wall_clock: Option<Duration>,
    /// Instances with at most this many free cells are solved exactly.
    pub exact_max_free_cells: usize,
}

impl Default for RepairBudget {
    fn default() -> Self {
        RepairBudget {
            work_limit: 20_000_000,
            wall_clock: None,
            exact_max_free_cells: 12,
        }
    }
}

mod opt_secs {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(v: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        v.map(|d| d.as_secs_f64()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.map(Duration::from_secs_f64))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepairMode {
    Exact,
    Heuristic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepairResult {
    pub env: Environment,
    pub similarity: f64,
    /// Weighted hamming distance to the input.
    pub distance: f64,
    pub work_used: u64,
    pub mode: RepairMode,
}

/// Pluggable backend, e.g. an external MILP solver. Outputs are validated
/// by [`repair_with`].
pub trait RepairSolver {
    fn solve(
        &self,
        x_in: &Environment,
        weights: &SimilarityWeights,
        constraints: &Constraints,
        budget: &RepairBudget,
    ) -> Result<(Environment, u64)>;
}

pub fn repair_with(
    solver: &dyn RepairSolver,
    x_in: &Environment,
    constraints: &Constraints,
    budget: &RepairBudget,
) -> Result<RepairResult> {
    let weights = SimilarityWeights::for_input(x_in);
    let (env, work) = solver.solve(x_in, &weights, constraints, budget)?;
    let report = validate(&env, constraints);
    if !report.is_valid {
        return Err(Error::InvalidEnvironment(format!(
            "external solver returned an invalid environment: {:?}",
            report.violations.iter().map(|v| v.constraint).collect::<Vec<_>>()
        )));
    }
    finish(x_in, env, &weights, work, RepairMode::Heuristic)
}

fn finish(
    x_in: &Environment,
    env: Environment,
    weights: &SimilarityWeights,
    work_used: u64,
    mode: RepairMode,
) -> Result<RepairResult> {
    Ok(RepairResult {
        similarity: similarity(x_in, &env, weights)?,
        distance: weighted_distance(x_in, &env, weights),
        env,
        work_used,
        mode,
    })
}

pub fn repair<R: Rng + ?Sized>(
    x_in: &Environment,
    constraints: &Constraints,
    budget: &RepairBudget,
    rng: &mut R,
) -> Result<RepairResult> {
    let weights = SimilarityWeights::for_input(x_in);
    if x_in.domain() == Domain::Maze || validate(x_in, constraints).is_valid {
        return finish(x_in, x_in.clone(), &weights, 0, RepairMode::Exact);
    }
    check_feasible(x_in, constraints)?;
    let mut work = Work::new(budget);
    let heuristic = heuristic_core(x_in, constraints, &weights, &mut work, rng);
    if x_in.free_cells() <= budget.exact_max_free_cells {
        let ub = heuristic
            .as_ref()
            .ok()
            .map(|e| weighted_distance(x_in, e, &weights));
        match exact_search(x_in, constraints, &weights, ub, &mut work) {
            Ok(Some(env)) => return finish(x_in, env, &weights, work.used, RepairMode::Exact),
            Ok(None) => {
                return Err(Error::Infeasible(
                    "no assignment satisfies the constraints".into(),
                ))
            }
            Err(Error::BudgetExhausted { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let env = heuristic?;
    finish(x_in, env, &weights, work.used, RepairMode::Heuristic)
}

/// Heuristic repair of a warehouse towards `n_shelves` shelves.
pub fn heuristic_repair_warehouse<R: Rng + ?Sized>(
    x_in: &Environment,
    n_shelves: usize,
    budget: &RepairBudget,
    rng: &mut R,
) -> Result<Environment> {
    if !x_in.domain().is_warehouse() {
        return Err(Error::WrongDomain {
            op: "heuristic_repair_warehouse",
            domain: x_in.domain(),
        });
    }
    let constraints = Constraints::with_shelves(n_shelves);
    check_feasible(x_in, &constraints)?;
    let weights = SimilarityWeights::for_input(x_in);
    heuristic_core(x_in, &constraints, &weights, &mut Work::new(budget), rng)
}

pub fn heuristic_repair_manufacturing<R: Rng + ?Sized>(
    x_in: &Environment,
    budget: &RepairBudget,
    rng: &mut R,
) -> Result<Environment> {
    if x_in.domain() != Domain::Manufacturing {
        return Err(Error::WrongDomain {
            op: "heuristic_repair_manufacturing",
            domain: x_in.domain(),
        });
    }
    let constraints = Constraints::default();
    check_feasible(x_in, &constraints)?;
    let weights = SimilarityWeights::for_input(x_in);
    heuristic_core(x_in, &constraints, &weights, &mut Work::new(budget), rng)
}

fn check_feasible(x_in: &Environment, constraints: &Constraints) -> Result<()> {
    match x_in.domain() {
        Domain::WarehouseEven | Domain::WarehouseUneven => {
            let storage = x_in.free_cells();
            if let Some(n) = constraints.shelf_count {
                if n > 0 && n >= storage {
                    return Err(Error::Infeasible(format!(
                        "{n} shelves do not fit in {storage} storage cells"
                    )));
                }
            }
        }
        Domain::Manufacturing => {
            let (w, h) = (x_in.width(), x_in.height());
            if w.min(h) < 2 || w * h < 6 {
                return Err(Error::Infeasible(format!(
                    "{w}x{h} grid cannot hold one station of each colour"
                )));
            }
        }
        Domain::Maze => {}
    }
    Ok(())
}

struct Work {
    used: u64,
    limit: u64,
    deadline: Option<Instant>,
    next_clock_check: u64,
    timed_out: bool,
}

impl Work {
    fn new(budget: &RepairBudget) -> Self {
        Work {
            used: 0,
            limit: budget.work_limit,
            deadline: budget.wall_clock.map(|d| Instant::now() + d),
            next_clock_check: 0,
            timed_out: false,
        }
    }

    fn exhausted(&mut self) -> bool {
        if self.used > self.limit || self.timed_out {
            return true;
        }
        if let Some(deadline) = self.deadline {
            if self.used >= self.next_clock_check {
                self.next_clock_check = self.used + 4096;
                self.timed_out = Instant::now() >= deadline;
            }
        }
        self.timed_out
    }

    fn spend(&mut self, n: u64) -> Result<()> {
        self.used += n;
        if self.exhausted() {
            Err(Error::BudgetExhausted { work: self.used })
        } else {
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// Exact branch-and-bound

struct Exact<'a> {
    x_in: &'a Environment,
    domain: Domain,
    weights: &'a [f64],
    values: Vec<Vec<TileType>>,
    complete_at: Vec<Vec<usize>>,
    free_after: Vec<usize>,
    n_shelves: Option<usize>,
    tiles: Vec<TileType>,
    bound: f64,
    found: Option<Vec<TileType>>,
}

fn exact_search(
    x_in: &Environment,
    constraints: &Constraints,
    weights: &SimilarityWeights,
    ub: Option<f64>,
    work: &mut Work,
) -> Result<Option<Environment>> {
    let (w, h, n) = (x_in.width(), x_in.height(), x_in.len());
    let domain = x_in.domain();
    let mut gen: Vec<TileType> = domain.generatable().to_vec();
    gen.sort();
    let values = (0..n)
        .map(|i| match x_in.template_tile(i) {
            Some(t) => vec![t],
            None => gen.clone(),
        })
        .collect();
    let mut complete_at = vec![Vec::new(); n];
    for j in 0..n {
        let last = neighbors4(j, w, h).fold(j, usize::max);
        complete_at[last].push(j);
    }
    let mut free_after = vec![0; n + 1];
    for i in (0..n).rev() {
        free_after[i] = free_after[i + 1] + usize::from(!x_in.is_frozen(i));
    }
    let mut ex = Exact {
        x_in,
        domain,
        weights: weights.as_slice(),
        values,
        complete_at,
        free_after,
        n_shelves: if domain.is_warehouse() {
            constraints.shelf_count
        } else {
            None
        },
        tiles: vec![TileType::Empty; n],
        bound: ub.unwrap_or(f64::INFINITY),
        found: None,
    };
    ex.dfs(0, 0.0, 0, work)?;
    Ok(ex
        .found
        .map(|tiles| Environment::new(domain, w, h, tiles).expect("same shape")))
}

impl Exact<'_> {
    fn dfs(&mut self, i: usize, dist: f64, shelves: usize, work: &mut Work) -> Result<()> {
        work.spend(1)?;
        let n = self.tiles.len();
        if i == n {
            if self.leaf_ok() {
                self.bound = dist;
                self.found = Some(self.tiles.clone());
            }
            return Ok(());
        }
        for k in 0..self.values[i].len() {
            let v = self.values[i][k];
            let d = dist
                + if v == self.x_in.tile(i) {
                    0.0
                } else {
                    self.weights[i]
                };
            // Before the first solution, solutions tying the bound are allowed.
            let beyond = if self.found.is_some() {
                d >= self.bound
            } else {
                d > self.bound
            };
            if beyond {
                continue;
            }
            let s = shelves + usize::from(v == TileType::Shelf);
            if let Some(target) = self.n_shelves {
                if s > target || s + self.free_after[i + 1] < target {
                    continue;
                }
            }
            self.tiles[i] = v;
            if !self.complete_at[i].iter().all(|&j| self.adjacency_ok(j)) {
                continue;
            }
            self.dfs(i + 1, d, s, work)?;
        }
        Ok(())
    }

    fn adjacency_ok(&self, j: usize) -> bool {
        let (w, h) = (self.x_in.width(), self.x_in.height());
        let t = self.tiles[j];
        if is_obstacle(self.domain, t) {
            neighbors4(j, w, h).any(|nb| self.tiles[nb] == TileType::Endpoint)
        } else if t == TileType::Endpoint {
            neighbors4(j, w, h).any(|nb| is_obstacle(self.domain, self.tiles[nb]))
        } else {
            true
        }
    }

    fn leaf_ok(&self) -> bool {
        let (w, h) = (self.x_in.width(), self.x_in.height());
        if self.domain == Domain::Manufacturing
            && [TileType::StationR, TileType::StationG, TileType::StationY]
                .iter()
                .any(|s| !self.tiles.contains(s))
        {
            return false;
        }
        let (_, k) = label_components(w, h, |i| self.domain.is_traversable(self.tiles[i]));
        k <= 1
    }
}

// ---------------------------------------------------------------------------
// Heuristic phases

struct State<'a> {
    x_in: &'a Environment,
    env: Environment,
    weights: &'a [f64],
    domain: Domain,
    n_shelves: Option<usize>,
}

fn heuristic_core<R: Rng + ?Sized>(
    x_in: &Environment,
    constraints: &Constraints,
    weights: &SimilarityWeights,
    work: &mut Work,
    rng: &mut R,
) -> Result<Environment> {
    let domain = x_in.domain();
    if domain == Domain::Maze {
        return Ok(x_in.clone());
    }
    let mut st = State {
        x_in,
        env: x_in.clone(),
        weights: weights.as_slice(),
        domain,
        n_shelves: if domain.is_warehouse() {
            constraints.shelf_count
        } else {
            None
        },
    };
    st.sanitize();
    st.unstrand(work)?;
    st.connect(work)?;
    if let Some(n) = st.n_shelves {
        st.fix_shelf_count(n, work)?;
    }
    if domain == Domain::Manufacturing {
        st.fix_stations(work)?;
    }
    st.assign_endpoints(work)?;
    let report = validate(&st.env, constraints);
    if !report.is_valid {
        return Err(Error::BudgetExhausted { work: work.used });
    }
    st.hill_climb(work, rng);
    debug_assert!(validate(&st.env, constraints).is_valid);
    Ok(st.env)
}

impl State<'_> {
    fn w(&self) -> usize {
        self.env.width()
    }

    fn h(&self) -> usize {
        self.env.height()
    }

    fn obstacle(&self, i: usize) -> bool {
        is_obstacle(self.domain, self.env.tile(i))
    }

    fn traversable(&self, i: usize) -> bool {
        self.env.is_traversable(i)
    }

    /// A cell that could hold an endpoint.
    fn host(&self, i: usize) -> bool {
        !self.env.is_frozen(i) && !self.obstacle(i)
    }

    /// Change in weighted distance when cell `i` becomes `t`.
    fn delta(&self, i: usize, t: TileType) -> f64 {
        let orig = self.x_in.tile(i);
        let cost = |v: TileType| if v == orig { 0.0 } else { self.weights[i] };
        cost(t) - cost(self.env.tile(i))
    }

    fn sanitize(&mut self) {
        self.env.restore_frozen();
        for i in 0..self.env.len() {
            if !self.env.is_frozen(i) && !self.domain.generatable().contains(&self.env.tile(i)) {
                self.env.set(i, TileType::Empty);
            }
        }
    }

    fn unstrand(&mut self, work: &mut Work) -> Result<()> {
        for i in 0..self.env.len() {
            if !self.obstacle(i) || self.env.neighbors(i).any(|nb| self.host(nb)) {
                continue;
            }
            work.spend(4)?;
            let best = self
                .env
                .neighbors(i)
                .filter(|&j| {
                    !self.env.is_frozen(j)
                        && self.obstacle(j)
                        && self.env.neighbors(j).any(|k| self.traversable(k))
                })
                .min_by(|&a, &b| {
                    self.delta(a, TileType::Endpoint)
                        .total_cmp(&self.delta(b, TileType::Endpoint))
                        .then(a.cmp(&b))
                });
            match best {
                Some(j) => self.env.set(j, TileType::Endpoint),
                None => self.env.set(i, TileType::Empty),
            }
        }
        Ok(())
    }

    fn connect(&mut self, work: &mut Work) -> Result<()> {
        let (w, h) = (self.w(), self.h());
        loop {
            work.spend(self.env.len() as u64)?;
            let (label, k) = label_components(w, h, |i| self.traversable(i));
            if k <= 1 {
                return Ok(());
            }
            let mut sizes = vec![0usize; k];
            for &l in label.iter().filter(|l| **l != usize::MAX) {
                sizes[l] += 1;
            }
            let main = (0..k)
                .max_by_key(|&c| (sizes[c], std::cmp::Reverse(c)))
                .unwrap();
            let other = (0..k).find(|&c| c != main).unwrap();
            let sources: Vec<usize> = (0..label.len()).filter(|&i| label[i] == other).collect();
            let path = cheapest_path(
                w,
                h,
                &sources,
                |i| label[i] == main,
                |i| {
                    if self.traversable(i) {
                        Some(0)
                    } else if self.env.is_frozen(i) {
                        None
                    } else {
                        let orphaned: f64 = self
                            .env
                            .neighbors(i)
                            .filter(|&e| {
                                self.env.tile(e) == TileType::Endpoint
                                    && !self.env.neighbors(e).any(|k| k != i && self.obstacle(k))
                            })
                            .map(|e| self.weights[e])
                            .sum();
                        Some((self.weights[i] + orphaned).round().max(1.0) as u32)
                    }
                },
            )
            .ok_or_else(|| Error::Infeasible("traversable region cannot be connected".into()))?;
            for i in path {
                if !self.traversable(i) {
                    self.env.set(i, TileType::Empty);
                }
            }
        }
    }

    /// Shelves (or stations) adjacent to `i` that rely on `i` as their only host.
    fn dependents(&self, i: usize) -> usize {
        self.env
            .neighbors(i)
            .filter(|&o| {
                self.obstacle(o) && !self.env.neighbors(o).any(|k| k != i && self.host(k))
            })
            .count()
    }

    /// Endpoints adjacent to `o` whose only obstacle neighbour is `o`.
    fn orphans(&self, o: usize) -> usize {
        self.env
            .neighbors(o)
            .filter(|&e| {
                self.env.tile(e) == TileType::Endpoint
                    && !self.env.neighbors(e).any(|k| k != o && self.obstacle(k))
            })
            .count()
    }

    fn has_endpoint_neighbor(&self, i: usize) -> bool {
        self.env.neighbors(i).any(|k| self.env.tile(k) == TileType::Endpoint)
    }

    /// Best traversable storage cell to turn into obstacle `t`, keeping the
    /// region connected and every obstacle hostable.
    fn best_obstacle_site(&self, t: TileType, cut: &[bool], work: &mut Work) -> Result<Option<usize>> {
        work.spend(self.env.len() as u64)?;
        let mut best: Option<(f64, usize)> = None;
        for c in 0..self.env.len() {
            if self.env.is_frozen(c) || self.obstacle(c) || cut[c] {
                continue;
            }
            if !self.env.neighbors(c).any(|k| self.host(k)) || self.dependents(c) > 0 {
                continue;
            }
            let mut score = self.delta(c, t);
            if !self.has_endpoint_neighbor(c) {
                score += 1.0;
            }
            if self.env.tile(c) == TileType::Endpoint && self.x_in.tile(c) == TileType::Endpoint {
                score += 0.5;
            }
            if best.is_none_or(|(s, _)| score < s) {
                best = Some((score, c));
            }
        }
        Ok(best.map(|(_, c)| c))
    }

    fn cut_vertices(&self) -> Vec<bool> {
        articulation_points(self.w(), self.h(), |i| self.traversable(i))
    }

    fn fix_shelf_count(&mut self, target: usize, work: &mut Work) -> Result<()> {
        loop {
            let count = self.env.count(TileType::Shelf);
            if count == target {
                return Ok(());
            }
            if count > target {
                work.spend(self.env.len() as u64)?;
                let s = (0..self.env.len())
                    .filter(|&s| self.env.tile(s) == TileType::Shelf)
                    .map(|s| {
                        let mut score = self.delta(s, TileType::Empty) + self.orphans(s) as f64;
                        if !self.has_endpoint_neighbor(s) {
                            score -= 1.0;
                        }
                        (score, s)
                    })
                    .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                    .map(|(_, s)| s)
                    .expect("count > target >= 0");
                self.env.set(s, TileType::Empty);
            } else {
                let cut = self.cut_vertices();
                let c = self
                    .best_obstacle_site(TileType::Shelf, &cut, work)?
                    .ok_or_else(|| {
                        Error::Infeasible(format!("no room for {target} shelves"))
                    })?;
                self.env.set(c, TileType::Shelf);
            }
        }
    }

    fn fix_stations(&mut self, work: &mut Work) -> Result<()> {
        let colours = [TileType::StationR, TileType::StationG, TileType::StationY];
        for t in colours {
            if self.env.count(t) > 0 {
                continue;
            }
            // Recolouring a surplus station keeps the layout intact.
            let recolour = (0..self.env.len())
                .filter(|&j| {
                    let cur = self.env.tile(j);
                    cur.is_station() && cur != t && self.env.count(cur) > 1
                })
                .map(|j| (self.delta(j, t), j))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let cut = self.cut_vertices();
            let fresh = self.best_obstacle_site(t, &cut, work)?.map(|c| {
                let extra = if self.has_endpoint_neighbor(c) { 0.0 } else { 1.0 };
                (self.delta(c, t) + extra, c)
            });
            let pick = match (recolour, fresh) {
                (Some(a), Some(b)) => Some(if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a }),
                (a, b) => a.or(b),
            };
            let (_, c) = pick.ok_or_else(|| Error::Infeasible(format!("no room for a {t:?} station")))?;
            self.env.set(c, t);
        }
        Ok(())
    }

    fn assign_endpoints(&mut self, work: &mut Work) -> Result<()> {
        let n = self.env.len();
        let cand: Vec<bool> = (0..n)
            .map(|i| self.host(i) && self.env.neighbors(i).any(|k| self.obstacle(k)))
            .collect();
        for (i, &ok) in cand.iter().enumerate() {
            if !ok && self.env.tile(i) == TileType::Endpoint && !self.env.is_frozen(i) {
                self.env.set(i, TileType::Empty);
            }
        }
        let mut uncovered: Vec<bool> = (0..n)
            .map(|o| self.obstacle(o) && !self.has_endpoint_neighbor(o))
            .collect();
        let mut remaining = uncovered.iter().filter(|u| **u).count();
        while remaining > 0 {
            work.spend(n as u64)?;
            let mut best: Option<(f64, usize, usize)> = None;
            for c in 0..n {
                if !cand[c] || self.env.tile(c) == TileType::Endpoint {
                    continue;
                }
                let gain = self.env.neighbors(c).filter(|&o| uncovered[o]).count();
                if gain == 0 {
                    continue;
                }
                let ratio = self.delta(c, TileType::Endpoint) / gain as f64;
                let better = match best {
                    None => true,
                    Some((r, g, _)) => ratio < r || (ratio == r && gain > g),
                };
                if better {
                    best = Some((ratio, gain, c));
                }
            }
            let (_, _, c) = best.ok_or_else(|| {
                Error::Infeasible("an obstacle has no cell that can host its endpoint".into())
            })?;
            self.env.set(c, TileType::Endpoint);
            for o in self.env.neighbors(c) {
                if uncovered[o] {
                    uncovered[o] = false;
                    remaining -= 1;
                }
            }
        }
        Ok(())
    }

    // -- hill climbing -------------------------------------------------------

    fn local_ok(&self, i: usize) -> bool {
        let t = self.env.tile(i);
        if is_obstacle(self.domain, t) {
            self.has_endpoint_neighbor(i)
        } else if t == TileType::Endpoint {
            self.env.neighbors(i).any(|k| self.obstacle(k))
        } else {
            true
        }
    }

    fn neighbourhood_ok(&self, i: usize) -> bool {
        self.local_ok(i) && self.env.neighbors(i).all(|k| self.local_ok(k))
    }

    fn counts_ok(&self) -> bool {
        if let Some(n) = self.n_shelves {
            if self.env.count(TileType::Shelf) != n {
                return false;
            }
        }
        if self.domain == Domain::Manufacturing {
            return [TileType::StationR, TileType::StationG, TileType::StationY]
                .iter()
                .all(|t| self.env.count(*t) > 0);
        }
        true
    }

    fn connected(&self) -> bool {
        label_components(self.w(), self.h(), |i| self.traversable(i)).1 <= 1
    }

    /// Applies `moves`; keeps them if the result is valid, else rolls back.
    fn try_moves(&mut self, moves: &[(usize, TileType)]) -> bool {
        let old: Vec<(usize, TileType)> = moves.iter().map(|&(i, _)| (i, self.env.tile(i))).collect();
        let mut blocks = false;
        for &(i, t) in moves {
            blocks |= self.traversable(i) && !self.domain.is_traversable(t);
            self.env.set(i, t);
        }
        let mut ok = moves.iter().all(|&(i, _)| self.neighbourhood_ok(i)) && self.counts_ok();
        if ok {
            ok = if blocks {
                self.connected()
            } else {
                // Newly opened cells must touch the existing region.
                moves.iter().all(|&(i, _)| {
                    !self.traversable(i)
                        || self.env.neighbors(i).any(|k| self.traversable(k))
                        || self.env.traversable_count() == 1
                })
            };
        }
        if !ok {
            for (i, t) in old {
                self.env.set(i, t);
            }
        }
        ok
    }

    fn hill_climb<R: Rng + ?Sized>(&mut self, work: &mut Work, rng: &mut R) {
        let n = self.env.len();
        let mut order: Vec<usize> = (0..n).filter(|&i| !self.env.is_frozen(i)).collect();
        order.shuffle(rng);
        loop {
            let mut improved = false;
            for &c in &order {
                let orig = self.x_in.tile(c);
                if self.env.tile(c) == orig {
                    continue;
                }
                if work.spend(1).is_err() {
                    return;
                }
                improved |= self.try_moves(&[(c, orig)]);
            }
            if self.n_shelves.is_some() {
                improved |= match self.relocate_shelves(work) {
                    Some(v) => v,
                    None => return,
                };
            }
            if !improved {
                return;
            }
        }
    }

    /// Moves misplaced shelves back onto input shelf cells. `None` when the
    /// budget ran out.
    fn relocate_shelves(&mut self, work: &mut Work) -> Option<bool> {
        const NEAREST: usize = 16;
        let (n, w) = (self.env.len(), self.w());
        let wanted: Vec<usize> = (0..n)
            .filter(|&a| self.x_in.tile(a) == TileType::Shelf && self.env.tile(a) != TileType::Shelf)
            .collect();
        let mut improved = false;
        for a in wanted {
            if self.env.tile(a) == TileType::Shelf {
                continue;
            }
            let mut spare: Vec<usize> = (0..n)
                .filter(|&b| self.env.tile(b) == TileType::Shelf && self.x_in.tile(b) != TileType::Shelf)
                .collect();
            let dist = |b: usize| (a % w).abs_diff(b % w) + (a / w).abs_diff(b / w);
            spare.sort_by_key(|&b| (dist(b), b));
            for &b in spare.iter().take(NEAREST) {
                if work.spend(1).is_err() {
                    return None;
                }
                if self.try_moves(&[(a, TileType::Shelf), (b, self.x_in.tile(b))]) {
                    improved = true;
                    break;
                }
            }
        }
        Some(improved)
    }
}
