use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qd::{Elite, ResultArchive};

/// Which elite to take from a result archive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Selection {
    GlobalBest,
    /// Best elite whose measure `measure` lies in `[lo, hi]`.
    MeasureWindow { measure: usize, lo: f64, hi: f64 },
    Cell(usize),
}

impl std::str::FromStr for Selection {
    type Err = Error;

    /// `best`, `cell:<index>` or `window:<measure>:<lo>:<hi>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad selection `{s}` (best | cell:N | window:M:LO:HI)"));
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["best"] => Ok(Selection::GlobalBest),
            ["cell", n] => Ok(Selection::Cell(n.parse().map_err(|_| bad())?)),
            ["window", m, lo, hi] => Ok(Selection::MeasureWindow {
                measure: m.parse().map_err(|_| bad())?,
                lo: lo.parse().map_err(|_| bad())?,
                hi: hi.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

/// Highest-objective elite matching `sel`, ties to the lowest cell index.
pub fn select_elite<'a>(archive: &'a ResultArchive, sel: &Selection) -> Result<(usize, &'a Elite)> {
    let keep = |cell: usize, e: &Elite| match sel {
        Selection::GlobalBest => true,
        Selection::Cell(c) => cell == *c,
        Selection::MeasureWindow { measure, lo, hi } => {
            e.measures.get(*measure).is_some_and(|m| *lo <= *m && *m <= *hi)
        }
    };
    let mut best: Option<(usize, &Elite)> = None;
    for (cell, e) in archive.iter() {
        if keep(cell, e) && best.is_none_or(|(_, b)| e.objective > b.objective) {
            best = Some((cell, e));
        }
    }
    best.ok_or_else(|| Error::EmptySelection(format!("{sel:?} matched no elite")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qd::{ArchiveSpec, EliteMeta};

    fn archive(items: &[(f64, f64, f64)]) -> ResultArchive {
        let spec = ArchiveSpec::new(vec![10, 10], vec![[0.0, 10.0], [0.0, 1.0]]).unwrap();
        let mut a = ResultArchive::new(spec);
        for &(m0, m1, f) in items {
            a.add(Elite {
                solution: vec![f],
                objective: f,
                measures: vec![m0, m1],
                meta: EliteMeta::default(),
            })
            .unwrap();
        }
        a
    }

    #[test]
    fn single_elite_is_selected() {
        let a = archive(&[(3.5, 0.5, 1.0)]);
        let (cell, e) = select_elite(&a, &Selection::GlobalBest).unwrap();
        assert_eq!((cell, e.objective), (35, 1.0));
    }

    #[test]
    fn ties_go_to_the_lowest_cell() {
        let a = archive(&[(9.5, 0.5, 2.0), (1.5, 0.5, 2.0), (5.5, 0.5, 1.0)]);
        assert_eq!(select_elite(&a, &Selection::GlobalBest).unwrap().0, 15);
    }

    #[test]
    fn window_and_cell() {
        let a = archive(&[(9.5, 0.5, 3.0), (1.5, 0.5, 2.0), (5.5, 0.5, 1.0)]);
        let w = Selection::MeasureWindow { measure: 0, lo: 1.0, hi: 6.0 };
        assert_eq!(select_elite(&a, &w).unwrap().1.objective, 2.0);
        let none = Selection::MeasureWindow { measure: 0, lo: 7.0, hi: 8.0 };
        assert!(matches!(select_elite(&a, &none), Err(Error::EmptySelection(_))));
        assert_eq!(select_elite(&a, &Selection::Cell(55)).unwrap().1.objective, 1.0);
        assert!(select_elite(&a, &Selection::Cell(0)).is_err());
        assert!(select_elite(&archive(&[]), &Selection::GlobalBest).is_err());
    }

    #[test]
    fn parses() {
        assert_eq!("best".parse::<Selection>().unwrap(), Selection::GlobalBest);
        assert_eq!("cell:7".parse::<Selection>().unwrap(), Selection::Cell(7));
        assert_eq!(
            "window:1:0.2:0.4".parse::<Selection>().unwrap(),
            Selection::MeasureWindow { measure: 1, lo: 0.2, hi: 0.4 }
        );
        assert!("window:1".parse::<Selection>().is_err());
    }
}
