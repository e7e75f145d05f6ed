//! Windowed prioritized planning with space-time A*.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::env::{neighbors4, Environment};
use crate::grid::{bfs_distances, UNREACHABLE};

/// Retries with the failed agent promoted before falling back to safe mode.
pub const MAX_PRIORITY_ATTEMPTS: usize = 5;

/// What the planner needs to know about one agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlanRequest {
    pub pos: usize,
    pub goal: usize,
    /// Steps the agent must keep waiting in place (dwell).
    pub hold: usize,
}

/// A windowed multi-agent planner. Paths hold `window + 1` cells, the first
/// being the current position; only a prefix is executed before replanning.
pub trait WindowPlanner {
    fn window(&self) -> usize;

    /// Plans all agents from scratch for a fresh window.
    fn plan_window(&mut self, agents: &[PlanRequest], rng: &mut dyn rand::RngCore) -> Vec<Vec<usize>>;

    /// Replans agent `id` from window offset `offset`, keeping every other
    /// agent's path. Returns false (and keeps the old path) on failure.
    fn refresh(&mut self, id: usize, req: PlanRequest, offset: usize, paths: &mut [Vec<usize>]) -> bool;
}

pub struct PrioritizedPlanner<'a> {
    env: &'a Environment,
    n: usize,
    window: usize,
    passable: Vec<bool>,
    dist: HashMap<usize, Rc<Vec<u32>>>,
    /// `(window + 1) x n`; 0 = free, otherwise agent id + 1.
    res: Vec<u32>,
    stamp: Vec<u32>,
    cur_stamp: u32,
    g: Vec<u32>,
    parent: Vec<u32>,
    /// Number of windows that needed the safe fallback.
    pub safe_mode_windows: u64,
}

impl<'a> PrioritizedPlanner<'a> {
    pub fn new(env: &'a Environment, window: usize) -> Self {
        let n = env.len();
        let states = (window + 1) * n;
        PrioritizedPlanner {
            env,
            n,
            window,
            passable: (0..n).map(|i| env.is_traversable(i)).collect(),
            dist: HashMap::new(),
            res: vec![0; states],
            stamp: vec![0; states],
            cur_stamp: 0,
            g: vec![0; states],
            parent: vec![0; states],
            safe_mode_windows: 0,
        }
    }

    fn heuristic(&mut self, goal: usize) -> Rc<Vec<u32>> {
        let (w, h) = (self.env.width(), self.env.height());
        let passable = &self.passable;
        self.dist
            .entry(goal)
            .or_insert_with(|| Rc::new(bfs_distances(w, h, goal, |i| passable[i])))
            .clone()
    }

    fn reserve(&mut self, id: usize, path: &[usize], from: usize) {
        for (tau, &c) in path.iter().enumerate().skip(from) {
            self.res[tau * self.n + c] = id as u32 + 1;
        }
    }

    fn release(&mut self, id: usize, path: &[usize], from: usize) {
        for (tau, &c) in path.iter().enumerate().skip(from) {
            let slot = &mut self.res[tau * self.n + c];
            if *slot == id as u32 + 1 {
                *slot = 0;
            }
        }
    }

    fn reserve_static(&mut self, id: usize, cell: usize) {
        for tau in 0..=self.window {
            self.res[tau * self.n + cell] = id as u32 + 1;
        }
    }

    fn free(&self, id: usize, tau: usize, cell: usize) -> bool {
        let r = self.res[tau * self.n + cell];
        r == 0 || r == id as u32 + 1
    }

    /// Space-time A* from `(req.pos, start)` to the window end. Waiting at
    /// the goal is free; every other action costs 1; the cost to go at the
    /// window end is the grid distance to the goal.
    fn astar(&mut self, id: usize, req: PlanRequest, start: usize) -> Option<Vec<usize>> {
        let n = self.n;
        let window = self.window;
        let h = self.heuristic(req.goal);
        let hv = |c: usize| -> u32 {
            let d = h[c];
            if d == UNREACHABLE {
                n as u32
            } else {
                d
            }
        };
        self.cur_stamp = self.cur_stamp.wrapping_add(1);
        if self.cur_stamp == 0 {
            self.stamp.fill(0);
            self.cur_stamp = 1;
        }
        let (w, hgt) = (self.env.width(), self.env.height());
        let mut open = BinaryHeap::new();
        let s0 = start * n + req.pos;
        self.stamp[s0] = self.cur_stamp;
        self.g[s0] = 0;
        self.parent[s0] = u32::MAX;
        open.push(Reverse((hv(req.pos), Reverse(start), req.pos)));
        // Closed states are marked by setting g's high bit.
        const CLOSED: u32 = 1 << 31;
        while let Some(Reverse((_, Reverse(tau), c))) = open.pop() {
            let s = tau * n + c;
            if self.g[s] & CLOSED != 0 {
                continue;
            }
            let g = self.g[s];
            self.g[s] |= CLOSED;
            if tau == window {
                let mut path = vec![0; window + 1 - start];
                let mut cur = s;
                loop {
                    let (t, cell) = (cur / n, cur % n);
                    path[t - start] = cell;
                    let p = self.parent[cur];
                    if p == u32::MAX {
                        break;
                    }
                    cur = p as usize;
                }
                return Some(path);
            }
            let nt = tau + 1;
            let holding = tau - start < req.hold;
            let stay = std::iter::once(c);
            let moves = neighbors4(c, w, hgt).filter(|_| !holding);
            for nc in stay.chain(moves) {
                if !self.passable[nc] || !self.free(id, nt, nc) {
                    continue;
                }
                if nc != c {
                    let o = self.res[tau * n + nc];
                    if o != 0 && o != id as u32 + 1 && self.res[nt * n + c] == o {
                        continue;
                    }
                }
                let cost = u32::from(!(nc == c && c == req.goal));
                let ng = g + cost;
                let ns = nt * n + nc;
                if self.stamp[ns] == self.cur_stamp {
                    if self.g[ns] & CLOSED != 0 || self.g[ns] <= ng {
                        continue;
                    }
                } else {
                    self.stamp[ns] = self.cur_stamp;
                }
                self.g[ns] = ng;
                self.parent[ns] = s as u32;
                open.push(Reverse((ng + hv(nc), Reverse(nt), nc)));
            }
        }
        None
    }

    fn wait_path(&self, pos: usize, len: usize) -> Vec<usize> {
        vec![pos; len]
    }
}

impl WindowPlanner for PrioritizedPlanner<'_> {
    fn window(&self) -> usize {
        self.window
    }

    fn plan_window(&mut self, agents: &[PlanRequest], rng: &mut dyn rand::RngCore) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..agents.len()).collect();
        order.shuffle(rng);
        for _ in 0..MAX_PRIORITY_ATTEMPTS {
            self.res.fill(0);
            let mut paths = vec![Vec::new(); agents.len()];
            let mut failed = None;
            for (k, &a) in order.iter().enumerate() {
                match self.astar(a, agents[a], 0) {
                    Some(p) => {
                        self.reserve(a, &p, 0);
                        paths[a] = p;
                    }
                    None => {
                        failed = Some(k);
                        break;
                    }
                }
            }
            match failed {
                None => return paths,
                Some(k) => {
                    let a = order.remove(k);
                    order.insert(0, a);
                }
            }
        }
        // Safe mode: agents not yet planned are static obstacles, so waiting
        // in place is always available.
        self.safe_mode_windows += 1;
        self.res.fill(0);
        for (a, req) in agents.iter().enumerate() {
            self.reserve_static(a, req.pos);
        }
        let mut paths = vec![Vec::new(); agents.len()];
        for &a in &order {
            let p = self
                .astar(a, agents[a], 0)
                .unwrap_or_else(|| self.wait_path(agents[a].pos, self.window + 1));
            self.reserve(a, &p, 0);
            paths[a] = p;
        }
        paths
    }

    fn refresh(&mut self, id: usize, req: PlanRequest, offset: usize, paths: &mut [Vec<usize>]) -> bool {
        let old = std::mem::take(&mut paths[id]);
        self.release(id, &old, offset);
        match self.astar(id, req, offset) {
            Some(tail) => {
                let mut p = old[..offset].to_vec();
                p.extend_from_slice(&tail);
                self.reserve(id, &p, offset);
                paths[id] = p;
                true
            }
            None => {
                self.reserve(id, &old, offset);
                paths[id] = old;
                false
            }
        }
    }
}

/// Convenience wrapper: one planning round for `agents` on `env`.
pub fn plan_window<R: Rng>(
    env: &Environment,
    agents: &[PlanRequest],
    window: usize,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    PrioritizedPlanner::new(env, window).plan_window(agents, rng)
}
