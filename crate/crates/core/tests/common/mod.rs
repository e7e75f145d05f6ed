//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use envgen::env::{Domain, Environment, TileType};
use envgen::repair::{repair, RepairBudget};
use envgen::validate::Constraints;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const STORAGE: [TileType; 3] = [TileType::Empty, TileType::Shelf, TileType::Endpoint];

/// 7x3 warehouse: frozen columns 0,1 and 5,6 with workstations on row 1.
pub fn frame(storage: &[TileType]) -> Vec<TileType> {
    let mut tiles = vec![TileType::Empty; 21];
    tiles[7] = TileType::Workstation;
    tiles[13] = TileType::Workstation;
    for y in 0..3 {
        for x in 0..3 {
            tiles[y * 7 + x + 2] = storage[y * 3 + x];
        }
    }
    tiles
}

/// Constraint check written from the rules, independent of the library.
pub fn oracle_valid(tiles: &[TileType], shelves: usize) -> bool {
    let (w, h) = (7usize, 3usize);
    let nbrs = |i: usize| {
        let (x, y) = (i % w, i / w);
        let mut v = Vec::new();
        if y > 0 {
            v.push(i - w);
        }
        if x > 0 {
            v.push(i - 1);
        }
        if x + 1 < w {
            v.push(i + 1);
        }
        if y + 1 < h {
            v.push(i + w);
        }
        v
    };
    if tiles.iter().filter(|t| **t == TileType::Shelf).count() != shelves {
        return false;
    }
    for i in 0..tiles.len() {
        match tiles[i] {
            TileType::Shelf if !nbrs(i).iter().any(|&j| tiles[j] == TileType::Endpoint) => return false,
            TileType::Endpoint if !nbrs(i).iter().any(|&j| tiles[j] == TileType::Shelf) => return false,
            _ => {}
        }
    }
    let open: Vec<usize> = (0..tiles.len()).filter(|&i| tiles[i] != TileType::Shelf).collect();
    let mut seen = vec![false; tiles.len()];
    let mut stack = vec![open[0]];
    seen[open[0]] = true;
    while let Some(c) = stack.pop() {
        for j in nbrs(c) {
            if !seen[j] && tiles[j] != TileType::Shelf {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    open.iter().all(|&i| seen[i])
}

pub fn all_storage() -> Vec<Vec<TileType>> {
    (0..3usize.pow(9))
        .map(|mut code| {
            (0..9)
                .map(|_| {
                    let t = STORAGE[code % 3];
                    code /= 3;
                    t
                })
                .collect()
        })
        .collect()
}
pub fn random_warehouse(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Environment {
    let p_shelf = rng.random_range(0.05..0.6);
    let p_end = rng.random_range(0.0..0.4);
    let mut e = Environment::filled(Domain::WarehouseEven, w, h, TileType::Empty).unwrap();
    for i in 0..e.len() {
        if e.is_frozen(i) {
            continue;
        }
        let u: f64 = rng.random();
        let t = if u < p_shelf {
            TileType::Shelf
        } else if u < p_shelf + p_end {
            TileType::Endpoint
        } else {
            TileType::Empty
        };
        e.set(i, t);
    }
    e
}

/// Counts vertex conflicts, swaps, non-adjacent jumps and blocked occupancies.
pub fn scan(env: &Environment, traj: &[Vec<usize>]) -> usize {
    let w = env.width();
    let blocked = |i: usize| match env.domain() {
        Domain::Manufacturing => !matches!(env.tile(i), TileType::Empty | TileType::Endpoint),
        Domain::Maze => env.tile(i) == TileType::Wall,
        _ => env.tile(i) == TileType::Shelf,
    };
    let steps = traj[0].len();
    let mut bad = 0;
    for t in 0..steps {
        let mut cells: Vec<usize> = traj.iter().map(|p| p[t]).collect();
        bad += cells.iter().filter(|&&c| blocked(c)).count();
        cells.sort_unstable();
        bad += cells.windows(2).filter(|p| p[0] == p[1]).count();
        if t == 0 {
            continue;
        }
        for (i, a) in traj.iter().enumerate() {
            let (from, to) = (a[t - 1], a[t]);
            let (dx, dy) = ((from % w).abs_diff(to % w), (from / w).abs_diff(to / w));
            if dx + dy > 1 {
                bad += 1;
            }
            for b in &traj[i + 1..] {
                if from != to && b[t - 1] == to && b[t] == from {
                    bad += 1;
                }
            }
        }
    }
    bad
}

pub fn random_valid(domain: Domain, rng: &mut ChaCha8Rng) -> Environment {
    let gen = domain.generatable();
    let mut e = Environment::filled(domain, 16, 12, TileType::Empty).unwrap();
    let bias = rng.random_range(0..gen.len());
    for i in 0..e.len() {
        if e.is_frozen(i) {
            continue;
        }
        let t = if rng.random_bool(0.4) { gen[bias] } else { gen[rng.random_range(0..gen.len())] };
        e.set(i, t);
    }
    let c = if domain.is_warehouse() { Constraints::with_shelves(24) } else { Constraints::default() };
    repair(&e, &c, &RepairBudget::default(), rng).unwrap().env
}
