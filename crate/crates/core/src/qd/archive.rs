//! Grid archives over a discretized measure space.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::Domain;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveSpec {
    pub dims: Vec<usize>,
    pub ranges: Vec<[f64; 2]>,
}

impl ArchiveSpec {
    pub fn new(dims: Vec<usize>, ranges: Vec<[f64; 2]>) -> Result<Self> {
        let spec = ArchiveSpec { dims, ranges };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.len() != self.ranges.len() {
            return Err(Error::Config(format!(
                "archive has {} dims and {} ranges",
                self.dims.len(),
                self.ranges.len()
            )));
        }
        if self.dims.contains(&0) {
            return Err(Error::Config("archive dimensions must be positive".into()));
        }
        if let Some(r) = self.ranges.iter().find(|r| !(r[0] < r[1])) {
            return Err(Error::Config(format!("empty measure range {r:?}")));
        }
        Ok(())
    }

    /// Default archive layout for a domain.
    pub fn for_domain(domain: Domain) -> Self {
        match domain {
            Domain::WarehouseEven | Domain::WarehouseUneven => ArchiveSpec {
                dims: vec![100, 100],
                ranges: vec![[140.0, 240.0], [0.0, 1.0]],
            },
            Domain::Manufacturing => ArchiveSpec {
                dims: vec![100, 100],
                ranges: vec![[0.0, 600.0], [0.0, 1.0]],
            },
            Domain::Maze => ArchiveSpec {
                dims: vec![256, 162],
                ranges: vec![[0.0, 256.0], [0.0, 648.0]],
            },
        }
    }

    pub fn measure_dims(&self) -> usize {
        self.dims.len()
    }

    pub fn cells(&self) -> usize {
        self.dims.iter().product()
    }

    /// Per-dimension bins; out-of-range values clamp to the boundary bins.
    pub fn bins(&self, measures: &[f64]) -> Result<Vec<usize>> {
        if measures.len() != self.dims.len() {
            return Err(Error::LengthMismatch(format!(
                "{} measures for a {}-d archive",
                measures.len(),
                self.dims.len()
            )));
        }
        Ok(measures
            .iter()
            .zip(&self.dims)
            .zip(&self.ranges)
            .map(|((&m, &d), r)| {
                let u = (m - r[0]) / (r[1] - r[0]) * d as f64;
                // NaN casts to 0; the float-to-int cast saturates.
                (u.floor().max(0.0) as usize).min(d - 1)
            })
            .collect())
    }

    /// Row-major flattening of [`bins`](Self::bins).
    pub fn index(&self, measures: &[f64]) -> Result<usize> {
        Ok(self.ravel(&self.bins(measures)?))
    }

    pub fn ravel(&self, bins: &[usize]) -> usize {
        bins.iter().zip(&self.dims).fold(0, |acc, (&b, &d)| acc * d + b)
    }

    pub fn unravel(&self, mut index: usize) -> Vec<usize> {
        let mut bins = vec![0; self.dims.len()];
        for (b, &d) in bins.iter_mut().zip(&self.dims).rev() {
            *b = index % d;
            index /= d;
        }
        bins
    }
}

pub fn archive_index(measures: &[f64], spec: &ArchiveSpec) -> Result<usize> {
    spec.index(measures)
}

/// Bookkeeping carried alongside each archived solution.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EliteMeta {
    pub env_hash: String,
    pub similarity: f64,
    /// Optimization objective (`f_res + alpha * similarity`).
    pub f_opt: f64,
    pub success_rate: f64,
    /// Global evaluation counter when the solution was produced.
    pub eval_index: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Elite {
    pub solution: Vec<f64>,
    pub objective: f64,
    pub measures: Vec<f64>,
    pub meta: EliteMeta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AddStatus {
    Inserted,
    Replaced,
    Rejected,
}

impl AddStatus {
    pub fn is_added(self) -> bool {
        self != AddStatus::Rejected
    }
}

/// Keeps the best solution ever submitted to each cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultArchive {
    spec: ArchiveSpec,
    cells: BTreeMap<usize, Elite>,
}

impl ResultArchive {
    pub fn new(spec: ArchiveSpec) -> Self {
        ResultArchive {
            spec,
            cells: BTreeMap::new(),
        }
    }

    pub fn spec(&self) -> &ArchiveSpec {
        &self.spec
    }

    pub fn add(&mut self, elite: Elite) -> Result<AddStatus> {
        let idx = self.spec.index(&elite.measures)?;
        Ok(match self.cells.get(&idx) {
            None => {
                self.cells.insert(idx, elite);
                AddStatus::Inserted
            }
            Some(cur) if elite.objective > cur.objective => {
                self.cells.insert(idx, elite);
                AddStatus::Replaced
            }
            Some(_) => AddStatus::Rejected,
        })
    }

    pub fn get(&self, cell: usize) -> Option<&Elite> {
        self.cells.get(&cell)
    }

    /// Occupied cells in ascending index order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &Elite)> {
        self.cells.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn qd_score(&self) -> f64 {
        self.cells.values().map(|e| e.objective).sum()
    }

    pub fn coverage(&self) -> f64 {
        self.cells.len() as f64 / self.spec.cells() as f64
    }

    /// Highest objective; ties go to the lowest cell index.
    pub fn best(&self) -> Option<(usize, &Elite)> {
        self.iter().fold(None, |best, (i, e)| match best {
            Some((_, b)) if b.objective >= e.objective => best,
            _ => Some((i, e)),
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file)
    }

    pub fn write_csv_to<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let k = self.spec.measure_dims();
        let mut header = vec!["cell".to_string()];
        header.extend((0..k).map(|d| format!("bin_{d}")));
        header.extend((0..k).map(|d| format!("measure_{d}")));
        header.extend(
            ["objective", "f_opt", "similarity", "success_rate", "env_hash", "eval_index", "theta"]
                .map(String::from),
        );
        wr.write_record(&header)?;
        for (cell, e) in self.iter() {
            let mut row = vec![cell.to_string()];
            row.extend(self.spec.unravel(cell).iter().map(|b| b.to_string()));
            row.extend(e.measures.iter().map(|m| m.to_string()));
            row.push(e.objective.to_string());
            row.push(e.meta.f_opt.to_string());
            row.push(e.meta.similarity.to_string());
            row.push(e.meta.success_rate.to_string());
            row.push(e.meta.env_hash.clone());
            row.push(e.meta.eval_index.to_string());
            let theta: Vec<String> = e.solution.iter().map(|v| v.to_string()).collect();
            row.push(theta.join(" "));
            wr.write_record(&row)?;
        }
        wr.flush().map_err(|e| Error::io(Path::new("<archive csv>"), e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path, spec: ArchiveSpec) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_from(file, spec)
    }

    pub fn read_csv_from<R: std::io::Read>(r: R, spec: ArchiveSpec) -> Result<Self> {
        let k = spec.measure_dims();
        let mut rd = csv::Reader::from_reader(r);
        let mut archive = ResultArchive::new(spec);
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            let line = line + 2;
            let field = |i: usize| -> Result<&str> {
                rec.get(i).ok_or(Error::Parse {
                    line,
                    msg: format!("missing column {i}"),
                })
            };
            let num = |i: usize| -> Result<f64> {
                field(i)?.parse().map_err(|e| Error::Parse {
                    line,
                    msg: format!("column {i}: {e}"),
                })
            };
            let cell: usize = field(0)?.parse().map_err(|e| Error::Parse {
                line,
                msg: format!("cell: {e}"),
            })?;
            let measures = (0..k).map(|d| num(1 + k + d)).collect::<Result<Vec<_>>>()?;
            let base = 1 + 2 * k;
            let theta = field(base + 6)?
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>().map_err(|e| Error::Parse {
                        line,
                        msg: format!("theta: {e}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let elite = Elite {
                solution: theta,
                objective: num(base)?,
                measures,
                meta: EliteMeta {
                    f_opt: num(base + 1)?,
                    similarity: num(base + 2)?,
                    success_rate: num(base + 3)?,
                    env_hash: field(base + 4)?.to_string(),
                    eval_index: field(base + 5)?.parse().map_err(|e| Error::Parse {
                        line,
                        msg: format!("eval_index: {e}"),
                    })?,
                },
            };
            if archive.spec.index(&elite.measures)? != cell {
                return Err(Error::Parse {
                    line,
                    msg: format!("measures do not map to cell {cell}"),
                });
            }
            archive.cells.insert(cell, elite);
        }
        Ok(archive)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct OptCell {
    #[serde(with = "super::ext_float")]
    threshold: f64,
    elite: Elite,
}

/// Archive whose acceptance thresholds anneal towards accepted objectives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationArchive {
    spec: ArchiveSpec,
    learning_rate: f64,
    #[serde(with = "super::ext_float")]
    threshold_floor: f64,
    cells: BTreeMap<usize, OptCell>,
}

impl OptimizationArchive {
    pub fn new(spec: ArchiveSpec, learning_rate: f64, threshold_floor: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate <= 1.0) {
            return Err(Error::Config(format!(
                "archive learning rate {learning_rate} outside (0, 1]"
            )));
        }
        Ok(OptimizationArchive {
            spec,
            learning_rate,
            threshold_floor,
            cells: BTreeMap::new(),
        })
    }

    pub fn spec(&self) -> &ArchiveSpec {
        &self.spec
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn threshold(&self, cell: usize) -> f64 {
        self.cells
            .get(&cell)
            .map_or(self.threshold_floor, |c| c.threshold)
    }

    /// Returns `(accepted, improvement)` where `improvement = f - t_before`.
    /// With an infinite floor the first submission to a cell sets the
    /// threshold to its objective and reports the objective as improvement.
    pub fn add(&mut self, elite: Elite) -> Result<(bool, f64)> {
        let idx = self.spec.index(&elite.measures)?;
        let f = elite.objective;
        let t = self.threshold(idx);
        let improvement = if t.is_finite() { f - t } else { f };
        if !(f > t) {
            return Ok((false, improvement));
        }
        let next = if t.is_finite() {
            (1.0 - self.learning_rate) * t + self.learning_rate * f
        } else {
            f
        };
        self.cells.insert(
            idx,
            OptCell {
                threshold: next,
                elite,
            },
        );
        Ok((true, improvement))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Stored solutions in ascending cell order.
    pub fn elites(&self) -> impl Iterator<Item = (usize, &Elite)> {
        self.cells.iter().map(|(k, c)| (*k, &c.elite))
    }

    pub fn nth_elite(&self, n: usize) -> Option<&Elite> {
        self.cells.values().nth(n).map(|c| &c.elite)
    }
}
