//! Maze solvability and path length from grid search.

use serde::{Deserialize, Serialize};

use crate::env::{Coord, Domain, Environment};
use crate::error::{Error, Result};
use crate::grid::{bfs_distances, UNREACHABLE};
use crate::metrics::maze_wall_count;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MazeMetrics {
    pub start: Coord,
    pub goal: Coord,
    pub solvable: bool,
    /// Shortest start-goal path in steps, 0 when unsolvable.
    pub path_length: usize,
    pub wall_count: usize,
}

fn check(env: &Environment) -> Result<Vec<usize>> {
    if env.domain() != Domain::Maze {
        return Err(Error::WrongDomain {
            op: "maze_metrics",
            domain: env.domain(),
        });
    }
    let open: Vec<usize> = (0..env.len()).filter(|&i| env.is_traversable(i)).collect();
    if open.len() < 2 {
        return Err(Error::DegenerateMaze(format!("{} traversable tiles", open.len())));
    }
    Ok(open)
}

/// Start and goal are the farthest-apart connected pair (ties to the
/// row-major smallest `(start, goal)`), so a maze is solvable whenever any
/// two traversable tiles are connected.
pub fn maze_metrics(env: &Environment) -> Result<MazeMetrics> {
    let open = check(env)?;
    let (w, h) = (env.width(), env.height());
    let mut best: Option<(u32, usize, usize)> = None;
    for &s in &open {
        let d = bfs_distances(w, h, s, |i| env.is_traversable(i));
        for &g in &open {
            if g <= s || d[g] == UNREACHABLE {
                continue;
            }
            if best.is_none_or(|(bd, _, _)| d[g] > bd) {
                best = Some((d[g], s, g));
            }
        }
    }
    let wall_count = maze_wall_count(env)?;
    Ok(match best {
        Some((d, s, g)) => MazeMetrics {
            start: env.coord(s),
            goal: env.coord(g),
            solvable: true,
            path_length: d as usize,
            wall_count,
        },
        None => MazeMetrics {
            start: env.coord(open[0]),
            goal: env.coord(open[1]),
            solvable: false,
            path_length: 0,
            wall_count,
        },
    })
}

/// Metrics for a fixed start and goal.
pub fn maze_metrics_between(env: &Environment, start: Coord, goal: Coord) -> Result<MazeMetrics> {
    check(env)?;
    let (s, g) = (env.index(start.x, start.y), env.index(goal.x, goal.y));
    if !env.is_traversable(s) || !env.is_traversable(g) {
        return Err(Error::DegenerateMaze("start or goal is a wall".into()));
    }
    let d = bfs_distances(env.width(), env.height(), s, |i| env.is_traversable(i))[g];
    let solvable = d != UNREACHABLE;
    Ok(MazeMetrics {
        start,
        goal,
        solvable,
        path_length: if solvable { d as usize } else { 0 },
        wall_count: maze_wall_count(env)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::TileType;

    #[test]
    fn open_maze_diameter_is_corner_to_corner() {
        let e = Environment::filled(Domain::Maze, 4, 4, TileType::Empty).unwrap();
        let m = maze_metrics(&e.with_boundary_ring().unwrap()).unwrap();
        assert!(m.solvable);
        assert_eq!(m.path_length, 6);
        assert_eq!(m.wall_count, 0);
        assert_eq!((m.start, m.goal), (Coord::new(1, 1), Coord::new(4, 4)));
    }

    #[test]
    fn split_maze_pair_is_unsolvable() {
        let e = Environment::from_text("maze 5 5\n#####\n#.#.#\n#.#.#\n#.#.#\n#####\n").unwrap();
        let m = maze_metrics_between(&e, Coord::new(1, 1), Coord::new(3, 3)).unwrap();
        assert!(!m.solvable);
        assert_eq!(m.path_length, 0);
        let d = maze_metrics(&e).unwrap();
        assert!(d.solvable);
        assert_eq!(d.path_length, 2);
        assert_eq!(d.wall_count, 3);
    }

    #[test]
    fn single_cell_is_degenerate() {
        let e = Environment::from_text("maze 3 3\n###\n#.#\n###\n").unwrap();
        assert!(matches!(maze_metrics(&e), Err(Error::DegenerateMaze(_))));
    }
}
