//! Environment entropy, weighted similarity, and the count-style measures.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::env::{Domain, Environment, TileType};
use crate::error::{Error, Result};

/// Which cells take part in the entropy window scan.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyScope {
    #[default]
    Full,
    /// Warehouse only: ignore the frozen border columns.
    StorageOnly,
}

/// Normalized Shannon entropy of the 2x2 tile-pattern distribution.
///
/// Windows are all stride-1 overlapping 2x2 blocks fully inside the grid.
/// The entropy is divided by `ln(N_type^4)` and clamped to `[0, 1]`.
pub fn environment_entropy(env: &Environment) -> Result<f64> {
    environment_entropy_scoped(env, EntropyScope::Full)
}

pub fn environment_entropy_scoped(env: &Environment, scope: EntropyScope) -> Result<f64> {
    let (x0, x1) = match scope {
        EntropyScope::StorageOnly if env.domain().is_warehouse() => {
            let b = crate::env::WAREHOUSE_BORDER_COLS;
            (b, env.width() - b)
        }
        _ => (0, env.width()),
    };
    let (w, h) = (x1 - x0, env.height());
    if w < 2 || h < 2 {
        return Err(Error::DimensionTooSmall {
            width: w,
            height: h,
            reason: "entropy needs at least a 2x2 grid",
        });
    }
    let mut counts: HashMap<[TileType; 4], u64> = HashMap::new();
    for y in 0..h - 1 {
        for x in x0..x1 - 1 {
            let key = [
                env.get(x, y),
                env.get(x + 1, y),
                env.get(x, y + 1),
                env.get(x + 1, y + 1),
            ];
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    let total = ((w - 1) * (h - 1)) as f64;
    // Sum in a fixed order so the result does not depend on hash iteration.
    let mut freqs: Vec<u64> = counts.into_values().collect();
    freqs.sort_unstable();
    let entropy: f64 = freqs
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum();
    let max = 4.0 * (env.domain().n_types() as f64).ln();
    Ok((entropy / max).clamp(0.0, 1.0))
}

/// Per-tile similarity weights derived from an unrepaired environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityWeights {
    weights: Vec<f64>,
}

/// Weight given to manufacturing workstation tiles.
pub const STATION_WEIGHT: f64 = 5.0;

impl SimilarityWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::LengthMismatch("no weights".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::Config(format!("similarity weight {w} is not positive")));
        }
        Ok(SimilarityWeights { weights })
    }

    pub fn uniform(n: usize) -> Self {
        SimilarityWeights {
            weights: vec![1.0; n],
        }
    }

    /// Warehouse and maze: all 1. Manufacturing: 5 on tiles that are a
    /// workstation in the unrepaired input, 1 elsewhere.
    pub fn for_input(x_in: &Environment) -> Self {
        let weights = match x_in.domain() {
            Domain::Manufacturing => x_in
                .tiles()
                .iter()
                .map(|t| if t.is_station() { STATION_WEIGHT } else { 1.0 })
                .collect(),
            _ => vec![1.0; x_in.len()],
        };
        SimilarityWeights { weights }
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `P = n * max_i p_i`.
    pub fn normalizer(&self) -> f64 {
        let max = self.weights.iter().cloned().fold(f64::MIN, f64::max);
        self.weights.len() as f64 * max
    }
}

fn check_same_shape(a: &Environment, b: &Environment) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    if a.domain() != b.domain() {
        return Err(Error::DimensionMismatch(format!(
            "domain {} vs {}",
            a.domain(),
            b.domain()
        )));
    }
    Ok(())
}

/// Weighted fraction of unchanged tiles, normalized by `n * max p`.
pub fn similarity(x_in: &Environment, x_out: &Environment, w: &SimilarityWeights) -> Result<f64> {
    check_same_shape(x_in, x_out)?;
    if w.len() != x_in.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} tiles",
            w.len(),
            x_in.len()
        )));
    }
    let kept: f64 = x_in
        .tiles()
        .iter()
        .zip(x_out.tiles())
        .zip(w.as_slice())
        .filter(|((a, b), _)| a == b)
        .map(|(_, p)| *p)
        .sum();
    Ok((kept / w.normalizer()).clamp(0.0, 1.0))
}

/// Weighted hamming distance `sum_i (1 - e_i) p_i`.
pub fn weighted_distance(x_in: &Environment, x_out: &Environment, w: &SimilarityWeights) -> f64 {
    x_in.tiles()
        .iter()
        .zip(x_out.tiles())
        .zip(w.as_slice())
        .filter(|((a, b), _)| a != b)
        .map(|(_, p)| *p)
        .sum()
}

/// Number of 4-connected components of shelf tiles.
pub fn connected_shelf_components(env: &Environment) -> Result<usize> {
    if !env.domain().is_warehouse() {
        return Err(Error::WrongDomain {
            op: "connected_shelf_components",
            domain: env.domain(),
        });
    }
    Ok(crate::grid::count_components(env, |t| t == TileType::Shelf))
}

/// Number of manufacturing workstation tiles (any colour).
pub fn workstation_count(env: &Environment) -> Result<usize> {
    if env.domain() != Domain::Manufacturing {
        return Err(Error::WrongDomain {
            op: "workstation_count",
            domain: env.domain(),
        });
    }
    Ok(env.tiles().iter().filter(|t| t.is_station()).count())
}

/// Interior wall count of a ringed maze.
pub fn maze_wall_count(env: &Environment) -> Result<usize> {
    if env.domain() != Domain::Maze {
        return Err(Error::WrongDomain {
            op: "maze_wall_count",
            domain: env.domain(),
        });
    }
    Ok(env.interior()?.count(TileType::Wall))
}
