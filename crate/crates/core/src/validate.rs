//! Domain constraint checking.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::env::{Coord, Domain, Environment, TileType};
use crate::grid::label_components;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintId {
    /// Traversable tiles form a single 4-connected component.
    Connectivity,
    /// Every obstacle (shelf / workstation) touches an endpoint.
    ObstacleNeedsEndpoint,
    /// Every endpoint touches an obstacle.
    EndpointNeedsObstacle,
    /// Shelf count equals the configured target.
    ShelfCount,
    /// Frozen region matches the domain template.
    FrozenRegion,
    /// Storage area only holds empty, shelf and endpoint tiles.
    StorageTiles,
    /// At least one workstation of each colour.
    StationPresence,
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConstraintId::Connectivity => "connectivity",
            ConstraintId::ObstacleNeedsEndpoint => "obstacle-needs-endpoint",
            ConstraintId::EndpointNeedsObstacle => "endpoint-needs-obstacle",
            ConstraintId::ShelfCount => "shelf-count",
            ConstraintId::FrozenRegion => "frozen-region",
            ConstraintId::StorageTiles => "storage-tiles",
            ConstraintId::StationPresence => "station-presence",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: ConstraintId,
    pub detail: String,
    pub tiles: Vec<Coord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub is_valid: bool,
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        ValidityReport {
            is_valid: violations.is_empty(),
            violations,
        }
    }

    pub fn has(&self, id: ConstraintId) -> bool {
        self.violations.iter().any(|v| v.constraint == id)
    }
}

/// Per-run constraint parameters not carried by the grid itself.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraints {
    /// Required shelf count `N_s` for warehouses; `None` skips the check.
    pub shelf_count: Option<usize>,
}

impl Constraints {
    pub fn with_shelves(n: usize) -> Self {
        Constraints {
            shelf_count: Some(n),
        }
    }
}

pub(crate) fn is_obstacle(domain: Domain, t: TileType) -> bool {
    match domain {
        Domain::WarehouseEven | Domain::WarehouseUneven => t == TileType::Shelf,
        Domain::Manufacturing => t.is_station(),
        Domain::Maze => false,
    }
}

pub fn validate(env: &Environment, constraints: &Constraints) -> ValidityReport {
    let domain = env.domain();
    if domain == Domain::Maze {
        return ValidityReport::from_violations(Vec::new());
    }
    let mut violations = Vec::new();

    if domain.is_warehouse() {
        let frozen_bad: Vec<Coord> = (0..env.len())
            .filter(|&i| matches!(env.template_tile(i), Some(t) if t != env.tile(i)))
            .map(|i| env.coord(i))
            .collect();
        if !frozen_bad.is_empty() {
            violations.push(Violation {
                constraint: ConstraintId::FrozenRegion,
                detail: format!("{} frozen tiles differ from the template", frozen_bad.len()),
                tiles: frozen_bad,
            });
        }
        let storage_bad: Vec<Coord> = (0..env.len())
            .filter(|&i| !env.is_frozen(i) && env.tile(i) == TileType::Workstation)
            .map(|i| env.coord(i))
            .collect();
        if !storage_bad.is_empty() {
            violations.push(Violation {
                constraint: ConstraintId::StorageTiles,
                detail: "workstations inside the storage area".into(),
                tiles: storage_bad,
            });
        }
        if let Some(target) = constraints.shelf_count {
            let shelves = env.count(TileType::Shelf);
            if shelves != target {
                violations.push(Violation {
                    constraint: ConstraintId::ShelfCount,
                    detail: format!("{shelves} shelves, expected {target}"),
                    tiles: Vec::new(),
                });
            }
        }
    }

    let (label, n) = label_components(env.width(), env.height(), |i| env.is_traversable(i));
    if n > 1 {
        // Report every tile outside the largest component.
        let mut sizes = vec![0usize; n];
        for &l in label.iter().filter(|l| **l != usize::MAX) {
            sizes[l] += 1;
        }
        let main = (0..n).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).unwrap();
        let stray: Vec<Coord> = (0..env.len())
            .filter(|&i| label[i] != usize::MAX && label[i] != main)
            .map(|i| env.coord(i))
            .collect();
        violations.push(Violation {
            constraint: ConstraintId::Connectivity,
            detail: format!("traversable tiles split into {n} components"),
            tiles: stray,
        });
    }

    let mut lonely_obstacles = Vec::new();
    let mut lonely_endpoints = Vec::new();
    for i in 0..env.len() {
        let t = env.tile(i);
        if is_obstacle(domain, t) {
            if !env.neighbors(i).any(|nb| env.tile(nb) == TileType::Endpoint) {
                lonely_obstacles.push(env.coord(i));
            }
        } else if t == TileType::Endpoint
            && !env.neighbors(i).any(|nb| is_obstacle(domain, env.tile(nb)))
        {
            lonely_endpoints.push(env.coord(i));
        }
    }
    if !lonely_obstacles.is_empty() {
        violations.push(Violation {
            constraint: ConstraintId::ObstacleNeedsEndpoint,
            detail: format!("{} obstacles without an adjacent endpoint", lonely_obstacles.len()),
            tiles: lonely_obstacles,
        });
    }
    if !lonely_endpoints.is_empty() {
        violations.push(Violation {
            constraint: ConstraintId::EndpointNeedsObstacle,
            detail: format!("{} endpoints without an adjacent obstacle", lonely_endpoints.len()),
            tiles: lonely_endpoints,
        });
    }

    if domain == Domain::Manufacturing {
        let missing: Vec<&str> = [
            (TileType::StationR, "red"),
            (TileType::StationG, "green"),
            (TileType::StationY, "yellow"),
        ]
        .iter()
        .filter(|(t, _)| env.count(*t) == 0)
        .map(|(_, name)| *name)
        .collect();
        if !missing.is_empty() {
            violations.push(Violation {
                constraint: ConstraintId::StationPresence,
                detail: format!("missing {} workstation", missing.join(", ")),
                tiles: Vec::new(),
            });
        }
    }

    ValidityReport::from_violations(violations)
}

pub fn is_valid(env: &Environment, constraints: &Constraints) -> bool {
    validate(env, constraints).is_valid
}
