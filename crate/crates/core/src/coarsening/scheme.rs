use std::collections::{BTreeMap, HashMap};
use std::fmt::Display;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Full-data point or fragment, as integer coordinates.
pub type Point = Vec<i64>;

/// Coarsening level. `Full` is the distinguished level at which the full data
/// are observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "LevelRepr", into = "LevelRepr")]
pub enum Level {
    Finite(u32),
    Full,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LevelRepr {
    Number(u32),
    Text(String),
}

impl TryFrom<LevelRepr> for Level {
    type Error = String;

    fn try_from(r: LevelRepr) -> std::result::Result<Self, String> {
        match r {
            LevelRepr::Number(k) => Ok(Level::Finite(k)),
            LevelRepr::Text(s) if s == "inf" => Ok(Level::Full),
            LevelRepr::Text(s) => s
                .parse()
                .map(Level::Finite)
                .map_err(|_| format!("level must be a non-negative integer or \"inf\", got {s:?}")),
        }
    }
}

impl From<Level> for LevelRepr {
    fn from(l: Level) -> Self {
        match l {
            Level::Finite(k) => LevelRepr::Number(k),
            Level::Full => LevelRepr::Text("inf".into()),
        }
    }
}

impl Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Level::Finite(k) => write!(f, "{k}"),
            Level::Full => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LevelMap {
    sigma: Vec<Point>,
    sigma_bar: Vec<Point>,
    /// `(sigma, sigma_bar) -> point index`, i.e. the reconstruction map.
    reconstruct: HashMap<(Point, Point), usize>,
    /// `sigma -> indices of support points with that fragment`.
    strata: BTreeMap<Point, Vec<usize>>,
}

/// Coarsening maps given extensionally over a finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseningScheme {
    coordinates: Vec<String>,
    support: Vec<Point>,
    index: HashMap<Point, usize>,
    levels: BTreeMap<u32, LevelMap>,
}

/// Tables for one finite level, aligned with the support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTable {
    pub level: u32,
    pub sigma: Vec<Point>,
    pub sigma_bar: Vec<Point>,
}

impl CoarseningScheme {
    pub fn new(coordinates: Vec<String>, support: Vec<Point>, tables: Vec<LevelTable>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::invalid("coarsening scheme has an empty support"));
        }
        let width = coordinates.len();
        let mut index = HashMap::with_capacity(support.len());
        for (i, x) in support.iter().enumerate() {
            if x.len() != width {
                return Err(Error::invalid(format!("support point {i} has {} coordinates, expected {width}", x.len())));
            }
            if index.insert(x.clone(), i).is_some() {
                return Err(Error::invalid(format!("support point {x:?} listed twice")));
            }
        }
        let mut levels = BTreeMap::new();
        for t in tables {
            if t.sigma.len() != support.len() || t.sigma_bar.len() != support.len() {
                return Err(Error::invalid(format!("level {} tables do not match the support size", t.level)));
            }
            let mut reconstruct = HashMap::with_capacity(support.len());
            let mut strata: BTreeMap<Point, Vec<usize>> = BTreeMap::new();
            for i in 0..support.len() {
                let key = (t.sigma[i].clone(), t.sigma_bar[i].clone());
                if let Some(j) = reconstruct.insert(key, i) {
                    return Err(Error::invalid(format!(
                        "level {}: points {:?} and {:?} share both fragments, so X cannot be reconstructed",
                        t.level, support[j], support[i]
                    )));
                }
                strata.entry(t.sigma[i].clone()).or_default().push(i);
            }
            let map = LevelMap {
                sigma: t.sigma,
                sigma_bar: t.sigma_bar,
                reconstruct,
                strata,
            };
            if levels.insert(t.level, map).is_some() {
                return Err(Error::invalid(format!("level {} defined twice", t.level)));
            }
        }
        Ok(CoarseningScheme {
            coordinates,
            support,
            index,
            levels,
        })
    }

    /// Level `k` observes the coordinates listed in `observed[k]`; the
    /// remaining coordinates form the complement fragment.
    pub fn from_projections(coordinates: Vec<String>, support: Vec<Point>, observed: &[(u32, Vec<usize>)]) -> Result<Self> {
        let width = coordinates.len();
        let tables = observed
            .iter()
            .map(|(k, keep)| {
                if keep.iter().any(|&j| j >= width) {
                    return Err(Error::invalid(format!("level {k} observes a coordinate out of range")));
                }
                let hidden: Vec<usize> = (0..width).filter(|j| !keep.contains(j)).collect();
                Ok(LevelTable {
                    level: *k,
                    sigma: support.iter().map(|x| keep.iter().map(|&j| x[j]).collect()).collect(),
                    sigma_bar: support.iter().map(|x| hidden.iter().map(|&j| x[j]).collect()).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        CoarseningScheme::new(coordinates, support, tables)
    }

    pub fn coordinates(&self) -> &[String] {
        &self.coordinates
    }

    pub fn support(&self) -> &[Point] {
        &self.support
    }

    pub fn point(&self, i: usize) -> &[i64] {
        &self.support[i]
    }

    pub fn position(&self, x: &[i64]) -> Option<usize> {
        self.index.get(x).copied()
    }

    pub fn finite_levels(&self) -> impl Iterator<Item = u32> + '_ {
        self.levels.keys().copied()
    }

    pub fn tables(&self) -> Vec<LevelTable> {
        self.levels
            .iter()
            .map(|(&level, m)| LevelTable {
                level,
                sigma: m.sigma.clone(),
                sigma_bar: m.sigma_bar.clone(),
            })
            .collect()
    }

    pub fn has_level(&self, level: Level) -> bool {
        match level {
            Level::Full => true,
            Level::Finite(k) => self.levels.contains_key(&k),
        }
    }

    fn map(&self, k: u32) -> Result<&LevelMap> {
        self.levels
            .get(&k)
            .ok_or_else(|| Error::invalid(format!("coarsening level {k} is not defined")))
    }

    /// `sigma_k(X)` for the support point with index `i`.
    pub fn sigma(&self, level: Level, i: usize) -> Result<&[i64]> {
        match level {
            Level::Full => Ok(&self.support[i]),
            Level::Finite(k) => Ok(&self.map(k)?.sigma[i]),
        }
    }

    /// `sigma_bar_k(X)`; empty at the full level.
    pub fn sigma_bar(&self, level: Level, i: usize) -> Result<&[i64]> {
        match level {
            Level::Full => Ok(&[]),
            Level::Finite(k) => Ok(&self.map(k)?.sigma_bar[i]),
        }
    }

    /// `h_k(sigma, sigma_bar)` as a support index.
    pub fn reconstruct(&self, level: Level, sigma: &[i64], sigma_bar: &[i64]) -> Option<usize> {
        match level {
            Level::Full => sigma_bar.is_empty().then(|| self.position(sigma)).flatten(),
            Level::Finite(k) => self
                .levels
                .get(&k)?
                .reconstruct
                .get(&(sigma.to_vec(), sigma_bar.to_vec()))
                .copied(),
        }
    }

    /// Support points whose level-`k` fragment equals `sigma`.
    pub fn stratum(&self, k: u32, sigma: &[i64]) -> &[usize] {
        self.levels
            .get(&k)
            .and_then(|m| m.strata.get(sigma))
            .map(|v| &v[..])
            .unwrap_or(&[])
    }

    /// Checks `h_k(sigma_k(X), sigma_bar_k(X)) = X` at every level and point.
    pub fn reconstruction_holds(&self) -> bool {
        let levels = self
            .finite_levels()
            .map(Level::Finite)
            .chain([Level::Full])
            .collect::<Vec<_>>();
        levels.iter().all(|&level| {
            (0..self.support.len()).all(|i| {
                let s = self.sigma(level, i).expect("level exists");
                let b = self.sigma_bar(level, i).expect("level exists");
                self.reconstruct(level, s, b) == Some(i)
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_pairs() -> Vec<Point> {
        vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]
    }

    fn names() -> Vec<String> {
        vec!["X1".into(), "X2".into()]
    }

    #[test]
    fn projections_reconstruct() {
        let s = CoarseningScheme::from_projections(names(), binary_pairs(), &[(0, vec![0]), (1, vec![])]).unwrap();
        assert!(s.reconstruction_holds());
        assert_eq!(s.sigma(Level::Finite(0), 3).unwrap(), &[1]);
        assert_eq!(s.sigma_bar(Level::Finite(0), 3).unwrap(), &[1]);
        assert_eq!(s.stratum(0, &[0]), &[0, 1]);
        assert_eq!(s.stratum(1, &[]).len(), 4);
        assert_eq!(s.sigma(Level::Full, 2).unwrap(), &[1, 0]);
        assert!(s.sigma_bar(Level::Full, 2).unwrap().is_empty());
    }

    #[test]
    fn non_injective_tables_rejected() {
        let t = LevelTable {
            level: 0,
            sigma: vec![vec![0], vec![0], vec![1], vec![1]],
            sigma_bar: vec![vec![], vec![], vec![], vec![]],
        };
        assert!(CoarseningScheme::new(names(), binary_pairs(), vec![t]).is_err());
    }

    #[test]
    fn level_serialises_infinity_as_text() {
        assert_eq!(serde_json::to_string(&Level::Full).unwrap(), "\"inf\"");
        assert_eq!(serde_json::from_str::<Level>("3").unwrap(), Level::Finite(3));
        assert_eq!(serde_json::from_str::<Level>("\"inf\"").unwrap(), Level::Full);
        assert!(serde_json::from_str::<Level>("\"infinity\"").is_err());
        assert!(Level::Finite(u32::MAX) < Level::Full);
    }

    #[test]
    fn duplicate_support_rejected() {
        assert!(CoarseningScheme::from_projections(names(), vec![vec![0, 0], vec![0, 0]], &[]).is_err());
    }
}
