use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::Size;
use super::train::generate_environment;
use crate::env::{Domain, Environment, TileType, WAREHOUSE_BORDER_COLS};
use crate::error::{Error, Result};
use crate::metrics::environment_entropy;
use crate::nca::NcaGenerator;
use crate::repair::{repair, RepairBudget, RepairMode};
use crate::validate::{validate, Constraints, ValidityReport};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScaleReport {
    pub size: Size,
    pub iterations: usize,
    pub similarity: f64,
    pub entropy: f64,
    pub work_used: u64,
    pub mode: RepairMode,
    pub validity: ValidityReport,
    #[serde(skip)]
    pub unrepaired: Option<Environment>,
    #[serde(skip)]
    pub env: Option<Environment>,
}

impl ScaleReport {
    pub fn env(&self) -> &Environment {
        self.env.as_ref().expect("report carries its environment")
    }
}

/// Runs a trained generator at `size` for `iterations` steps and repairs the
/// result once.
pub fn scale_generate<R: Rng + ?Sized>(
    gen: &NcaGenerator,
    size: Size,
    iterations: usize,
    constraints: &Constraints,
    budget: &RepairBudget,
    rng: &mut R,
) -> Result<ScaleReport> {
    let unrepaired = generate_environment(gen, size, iterations)?;
    let r = repair(&unrepaired, constraints, budget, rng)?;
    Ok(ScaleReport {
        size,
        iterations,
        similarity: r.similarity,
        entropy: environment_entropy(&r.env)?,
        work_used: r.work_used,
        mode: r.mode,
        validity: validate(&r.env, constraints),
        unrepaired: Some(unrepaired),
        env: Some(r.env),
    })
}

/// Column and row ranges of the region a generator controls.
fn region(env_domain: Domain, width: usize, height: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    match env_domain {
        Domain::WarehouseEven | Domain::WarehouseUneven => {
            (WAREHOUSE_BORDER_COLS..width - WAREHOUSE_BORDER_COLS, 0..height)
        }
        Domain::Maze => (1..width - 1, 1..height - 1),
        Domain::Manufacturing => (0..width, 0..height),
    }
}

/// Tessellates the generatable region of `src` over a `size` grid, truncating
/// partial tiles at the far edges. Frozen cells take their template values.
pub fn tile_pattern(src: &Environment, size: Size) -> Result<Environment> {
    if size.width < src.width() || size.height < src.height() {
        return Err(Error::Config(format!(
            "target {size} is smaller than the source {}x{}",
            src.width(),
            src.height()
        )));
    }
    let fill = if src.domain() == Domain::Maze { TileType::Wall } else { TileType::Empty };
    let mut out = Environment::filled(src.domain(), size.width, size.height, fill)?;
    let (sx, sy) = region(src.domain(), src.width(), src.height());
    let (tx, ty) = region(src.domain(), size.width, size.height);
    for (j, y) in ty.clone().enumerate() {
        for (i, x) in tx.clone().enumerate() {
            let t = src.get(sx.start + i % sx.len(), sy.start + j % sy.len());
            out.set_xy(x, y, t);
        }
    }
    out.restore_frozen();
    Ok(out)
}

/// Tiling baseline: tessellate `src` to `size`, then repair once.
pub fn tile_baseline<R: Rng + ?Sized>(
    src: &Environment,
    size: Size,
    constraints: &Constraints,
    budget: &RepairBudget,
    rng: &mut R,
) -> Result<(Environment, Environment)> {
    let tiled = tile_pattern(src, size)?;
    let repaired = repair(&tiled, constraints, budget, rng)?.env;
    Ok((tiled, repaired))
}

/// Hand-built warehouse: one-row shelf blocks of length 4 separated by
/// one-column aisles, every third row, with an endpoint above and below each
/// shelf. Rows are filled top-down until `shelves` are placed.
pub fn human_warehouse(domain: Domain, size: Size, shelves: usize) -> Result<Environment> {
    if !domain.is_warehouse() {
        return Err(Error::WrongDomain {
            op: "human_warehouse",
            domain,
        });
    }
    const BLOCK: usize = 4;
    let mut env = Environment::filled(domain, size.width, size.height, TileType::Empty)?;
    let (xs, _) = region(domain, size.width, size.height);
    let mut placed = 0;
    let mut y = 2;
    while placed < shelves && y + 1 < size.height {
        let mut x = xs.start + 1;
        while placed < shelves && x + 1 < xs.end {
            if (x - xs.start - 1) % (BLOCK + 1) != BLOCK {
                env.set_xy(x, y, TileType::Shelf);
                env.set_xy(x, y - 1, TileType::Endpoint);
                env.set_xy(x, y + 1, TileType::Endpoint);
                placed += 1;
            }
            x += 1;
        }
        y += 3;
    }
    if placed < shelves {
        return Err(Error::Infeasible(format!(
            "only {placed} of {shelves} shelves fit the {size} block layout"
        )));
    }
    Ok(env)
}
