//! Grid environments, domains, and the plain-text environment format.
//!
//! An [`Environment`] is a row-major grid of [`TileType`]s tagged with the
//! [`Domain`] it belongs to. Warehouse environments carry a frozen border
//! region (two columns on each side, workstations on the outermost column)
//! which generators and repair must leave untouched.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Width of the frozen non-storage band on each side of a warehouse.
pub const WAREHOUSE_BORDER_COLS: usize = 2;

/// Workstations sit on the outer border column at every row `y` with
/// `y % WORKSTATION_ROW_PERIOD == 1`.
pub const WORKSTATION_ROW_PERIOD: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TileType {
    Empty,
    Shelf,
    Endpoint,
    Workstation,
    StationR,
    StationG,
    StationY,
    Wall,
}

impl TileType {
    pub fn is_station(self) -> bool {
        matches!(self, TileType::StationR | TileType::StationG | TileType::StationY)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    WarehouseEven,
    WarehouseUneven,
    Manufacturing,
    Maze,
}

const WAREHOUSE_TILES: [TileType; 4] = [
    TileType::Empty,
    TileType::Shelf,
    TileType::Endpoint,
    TileType::Workstation,
];
const WAREHOUSE_GEN: [TileType; 3] = [TileType::Empty, TileType::Shelf, TileType::Endpoint];
const MANUFACTURING_TILES: [TileType; 5] = [
    TileType::Empty,
    TileType::Endpoint,
    TileType::StationR,
    TileType::StationG,
    TileType::StationY,
];
const MAZE_TILES: [TileType; 2] = [TileType::Empty, TileType::Wall];

impl Domain {
    pub const ALL: [Domain; 4] = [
        Domain::WarehouseEven,
        Domain::WarehouseUneven,
        Domain::Manufacturing,
        Domain::Maze,
    ];

    /// Every tile type that may appear in this domain (`N_type` of them).
    pub fn tiles(self) -> &'static [TileType] {
        match self {
            Domain::WarehouseEven | Domain::WarehouseUneven => &WAREHOUSE_TILES,
            Domain::Manufacturing => &MANUFACTURING_TILES,
            Domain::Maze => &MAZE_TILES,
        }
    }

    /// Tile types a generator (and repair) may place. Ordered; this order is
    /// both the one-hot channel order and the lexicographic tie-break order.
    pub fn generatable(self) -> &'static [TileType] {
        match self {
            Domain::WarehouseEven | Domain::WarehouseUneven => &WAREHOUSE_GEN,
            Domain::Manufacturing => &MANUFACTURING_TILES,
            Domain::Maze => &MAZE_TILES,
        }
    }

    pub fn n_types(self) -> usize {
        self.tiles().len()
    }

    pub fn is_warehouse(self) -> bool {
        matches!(self, Domain::WarehouseEven | Domain::WarehouseUneven)
    }

    pub fn contains(self, tile: TileType) -> bool {
        self.tiles().contains(&tile)
    }

    /// Tiles agents may stand on.
    pub fn is_traversable(self, tile: TileType) -> bool {
        match self {
            Domain::WarehouseEven | Domain::WarehouseUneven => tile != TileType::Shelf,
            Domain::Manufacturing => matches!(tile, TileType::Empty | TileType::Endpoint),
            Domain::Maze => tile != TileType::Wall,
        }
    }

    /// The canonical non-empty tile of the 2x2 seed block.
    pub fn seed_tile(self) -> TileType {
        match self {
            Domain::WarehouseEven | Domain::WarehouseUneven => TileType::Shelf,
            Domain::Manufacturing => TileType::Endpoint,
            Domain::Maze => TileType::Wall,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Domain::WarehouseEven => "warehouse-even",
            Domain::WarehouseUneven => "warehouse-uneven",
            Domain::Manufacturing => "manufacturing",
            Domain::Maze => "maze",
        }
    }

    pub fn tile_char(self, tile: TileType) -> Option<char> {
        if !self.contains(tile) {
            return None;
        }
        Some(match tile {
            TileType::Empty => '.',
            TileType::Shelf => '@',
            TileType::Endpoint => 'e',
            TileType::Workstation => 'w',
            TileType::StationR => 'r',
            TileType::StationG => 'g',
            TileType::StationY => 'y',
            TileType::Wall => '#',
        })
    }

    pub fn tile_from_char(self, c: char) -> Option<TileType> {
        let tile = match c {
            '.' => TileType::Empty,
            '@' => TileType::Shelf,
            'e' => TileType::Endpoint,
            'w' => TileType::Workstation,
            'r' => TileType::StationR,
            'g' => TileType::StationG,
            'y' => TileType::StationY,
            '#' => TileType::Wall,
            _ => return None,
        };
        self.contains(tile).then_some(tile)
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Domain::ALL
            .into_iter()
            .find(|d| d.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown domain `{s}`")))
    }
}

/// Template tile for a frozen cell of a warehouse, `None` for storage cells.
pub fn warehouse_template(x: usize, y: usize, width: usize) -> Option<TileType> {
    let border = WAREHOUSE_BORDER_COLS;
    if x >= border && x + border < width {
        return None;
    }
    let outer = x == 0 || x + 1 == width;
    if outer && y % WORKSTATION_ROW_PERIOD == 1 {
        Some(TileType::Workstation)
    } else {
        Some(TileType::Empty)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coord {
    pub x: usize,
    pub y: usize,
}

impl Coord {
    pub fn new(x: usize, y: usize) -> Self {
        Coord { x, y }
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Environment {
    domain: Domain,
    width: usize,
    height: usize,
    tiles: Vec<TileType>,
    frozen: Vec<bool>,
}

impl Environment {
    /// Builds an environment from row-major tiles. Every tile must belong to
    /// the domain.
    pub fn new(domain: Domain, width: usize, height: usize, tiles: Vec<TileType>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DimensionTooSmall {
                width,
                height,
                reason: "dimensions must be positive",
            });
        }
        if domain.is_warehouse() && width < 2 * WAREHOUSE_BORDER_COLS + 1 {
            return Err(Error::DimensionTooSmall {
                width,
                height,
                reason: "warehouse needs at least one storage column",
            });
        }
        if tiles.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} tiles for a {width}x{height} grid",
                tiles.len()
            )));
        }
        if let Some(bad) = tiles.iter().find(|t| !domain.contains(**t)) {
            return Err(Error::InvalidEnvironment(format!(
                "tile {bad:?} is not part of domain {domain}"
            )));
        }
        let frozen = frozen_mask(domain, width, height);
        Ok(Environment {
            domain,
            width,
            height,
            tiles,
            frozen,
        })
    }

    /// A grid of `fill` with the domain template stamped over frozen cells.
    pub fn filled(domain: Domain, width: usize, height: usize, fill: TileType) -> Result<Self> {
        let mut env = Environment::new(domain, width, height, vec![fill; width * height])?;
        env.restore_frozen();
        Ok(env)
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    pub fn tiles(&self) -> &[TileType] {
        &self.tiles
    }

    pub fn frozen_mask(&self) -> &[bool] {
        &self.frozen
    }

    pub fn is_frozen(&self, idx: usize) -> bool {
        self.frozen[idx]
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn coord(&self, idx: usize) -> Coord {
        Coord::new(idx % self.width, idx / self.width)
    }

    pub fn get(&self, x: usize, y: usize) -> TileType {
        self.tiles[self.index(x, y)]
    }

    pub fn tile(&self, idx: usize) -> TileType {
        self.tiles[idx]
    }

    /// Sets a tile. Panics if the tile is not part of the domain.
    pub fn set(&mut self, idx: usize, tile: TileType) {
        assert!(
            self.domain.contains(tile),
            "{tile:?} is not a {} tile",
            self.domain
        );
        self.tiles[idx] = tile;
    }

    pub fn set_xy(&mut self, x: usize, y: usize, tile: TileType) {
        let idx = self.index(x, y);
        self.set(idx, tile);
    }

    /// Template value of a frozen cell.
    pub fn template_tile(&self, idx: usize) -> Option<TileType> {
        if !self.frozen[idx] {
            return None;
        }
        let c = self.coord(idx);
        warehouse_template(c.x, c.y, self.width)
    }

    /// Overwrites every frozen cell with its template value.
    pub fn restore_frozen(&mut self) {
        for idx in 0..self.tiles.len() {
            if let Some(t) = self.template_tile(idx) {
                self.tiles[idx] = t;
            }
        }
    }

    /// 4-neighbors of a cell, in up/left/right/down order.
    pub fn neighbors(&self, idx: usize) -> Neighbors {
        neighbors4(idx, self.width, self.height)
    }

    pub fn count(&self, tile: TileType) -> usize {
        self.tiles.iter().filter(|t| **t == tile).count()
    }

    pub fn is_traversable(&self, idx: usize) -> bool {
        self.domain.is_traversable(self.tiles[idx])
    }

    pub fn traversable_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_traversable(i)).count()
    }

    /// Number of cells a generator may change.
    pub fn free_cells(&self) -> usize {
        self.frozen.iter().filter(|f| !**f).count()
    }

    /// Surrounds a maze with a one-tile ring of walls.
    pub fn with_boundary_ring(&self) -> Result<Environment> {
        if self.domain != Domain::Maze {
            return Err(Error::WrongDomain {
                op: "with_boundary_ring",
                domain: self.domain,
            });
        }
        let (w, h) = (self.width + 2, self.height + 2);
        let mut tiles = vec![TileType::Wall; w * h];
        for y in 0..self.height {
            for x in 0..self.width {
                tiles[(y + 1) * w + x + 1] = self.get(x, y);
            }
        }
        Environment::new(Domain::Maze, w, h, tiles)
    }

    /// Strips the outer ring of a maze.
    pub fn interior(&self) -> Result<Environment> {
        if self.width < 3 || self.height < 3 {
            return Err(Error::DimensionTooSmall {
                width: self.width,
                height: self.height,
                reason: "no interior inside the boundary ring",
            });
        }
        let (w, h) = (self.width - 2, self.height - 2);
        let mut tiles = Vec::with_capacity(w * h);
        for y in 1..=h {
            for x in 1..=w {
                tiles.push(self.get(x, y));
            }
        }
        Environment::new(self.domain, w, h, tiles)
    }

    /// Same grid reinterpreted under a sibling domain (warehouse even/uneven).
    pub fn with_domain(&self, domain: Domain) -> Result<Environment> {
        Environment::new(domain, self.width, self.height, self.tiles.clone())
    }

    /// Hex SHA-256 of the text encoding.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        hex::encode(digest)
    }

    /// Text encoding: a header line `<domain> <width> <height>` then one row
    /// per line.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * (self.height + 1) + 32);
        out.push_str(&format!("{} {} {}\n", self.domain, self.width, self.height));
        for row in self.tiles.chunks(self.width) {
            for t in row {
                // Constructor guarantees domain membership.
                out.push(self.domain.tile_char(*t).unwrap());
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Environment> {
        let mut lines = text.lines().map(|l| l.trim_end_matches('\r'));
        let header = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected `<domain> <width> <height>`, got `{header}`"),
            });
        }
        let domain: Domain = parts[0].parse().map_err(|_| Error::Parse {
            line: 1,
            msg: format!("unknown domain `{}`", parts[0]),
        })?;
        let parse_dim = |s: &str| {
            s.parse::<usize>().map_err(|_| Error::Parse {
                line: 1,
                msg: format!("bad dimension `{s}`"),
            })
        };
        let width = parse_dim(parts[1])?;
        let height = parse_dim(parts[2])?;
        let mut tiles = Vec::with_capacity(width * height);
        for row in 0..height {
            let line_no = row + 2;
            let line = lines.next().ok_or(Error::Parse {
                line: line_no,
                msg: format!("expected {height} rows"),
            })?;
            let chars: Vec<char> = line.chars().collect();
            if chars.len() != width {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("row has {} tiles, expected {width}", chars.len()),
                });
            }
            for c in chars {
                let tile = domain.tile_from_char(c).ok_or(Error::Parse {
                    line: line_no,
                    msg: format!("`{c}` is not a {domain} tile"),
                })?;
                tiles.push(tile);
            }
        }
        if let Some((i, extra)) = lines.enumerate().find(|(_, l)| !l.trim().is_empty()) {
            return Err(Error::Parse {
                line: height + 2 + i,
                msg: format!("unexpected trailing content `{extra}`"),
            });
        }
        Environment::new(domain, width, height, tiles)
    }

    pub fn read(path: &std::path::Path) -> Result<Environment> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Environment::from_text(&text)
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

impl fmt::Display for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn frozen_mask(domain: Domain, width: usize, height: usize) -> Vec<bool> {
    let mut mask = vec![false; width * height];
    if domain.is_warehouse() {
        for y in 0..height {
            for x in 0..width {
                mask[y * width + x] = warehouse_template(x, y, width).is_some();
            }
        }
    }
    mask
}

/// Up to four in-bounds neighbors of a cell.
#[derive(Clone, Copy, Debug)]
pub struct Neighbors {
    cells: [usize; 4],
    len: u8,
    pos: u8,
}

impl Iterator for Neighbors {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.pos < self.len {
            let c = self.cells[self.pos as usize];
            self.pos += 1;
            Some(c)
        } else {
            None
        }
    }
}

pub fn neighbors4(idx: usize, width: usize, height: usize) -> Neighbors {
    let (x, y) = (idx % width, idx / width);
    let mut n = Neighbors {
        cells: [0; 4],
        len: 0,
        pos: 0,
    };
    let mut push = |c: usize| {
        n.cells[n.len as usize] = c;
        n.len += 1;
    };
    if y > 0 {
        push(idx - width);
    }
    if x > 0 {
        push(idx - 1);
    }
    if x + 1 < width {
        push(idx + 1);
    }
    if y + 1 < height {
        push(idx + width);
    }
    n
}
