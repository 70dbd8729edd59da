use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Field;

use super::distribution::{CompleteAtom, DiscreteCompleteDistribution};
use super::scheme::{CoarseningScheme, Level, LevelTable, Point};

/// A number written either as JSON number or as an exact string such as
/// `"3/20"`, `"-2"` or `"0.15"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExactValue {
    Number(f64),
    Text(String),
}

impl ExactValue {
    pub fn to_field<P: Field>(&self) -> Result<P> {
        match self {
            ExactValue::Number(x) => P::from_f64(*x).ok_or_else(|| Error::invalid(format!("{x} is not representable"))),
            ExactValue::Text(s) => parse_exact(s),
        }
    }
}

fn parse_exact<P: Field>(s: &str) -> Result<P> {
    let bad = || Error::invalid(format!("cannot parse {s:?} as an exact number"));
    let t = s.trim();
    let (negative, t) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t),
    };
    let int = |x: &str| -> Result<P> {
        if x.is_empty() || !x.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        x.parse::<u64>().ok().and_then(P::from_u64).ok_or_else(bad)
    };
    let magnitude = if let Some((num, den)) = t.split_once('/') {
        let d = int(den)?;
        if d == P::zero() {
            return Err(Error::DivisionByZero(format!("denominator in {s:?}")));
        }
        int(num)? / d
    } else if let Some((whole, frac)) = t.split_once('.') {
        let scale = 10u64.checked_pow(frac.len() as u32).ok_or_else(bad)?;
        let whole = if whole.is_empty() { P::zero() } else { int(whole)? };
        whole + int(frac)? / P::from_u64(scale).ok_or_else(bad)?
    } else {
        int(t)?
    };
    Ok(if negative { P::zero() - magnitude } else { magnitude })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomEntry {
    pub level: Level,
    pub point: Point,
    /// Follow-up indicator, 0 or 1. Ignored at the full level.
    #[serde(default)]
    pub s: u8,
    pub p: ExactValue,
}

/// Names of the treatment and outcome coordinates when the law is a
/// missing-outcome study; every other coordinate is a covariate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingOutcomeLayout {
    pub treatment: String,
    pub outcome: String,
}

/// Scheme, complete-data law and functional as a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarsenedLawFile {
    pub coordinates: Vec<String>,
    pub support: Vec<Point>,
    #[serde(default)]
    pub levels: Vec<LevelTable>,
    pub atoms: Vec<AtomEntry>,
    /// `g(X)` per support point.
    #[serde(default)]
    pub g: Option<Vec<ExactValue>>,
    #[serde(default)]
    pub missing_outcome: Option<MissingOutcomeLayout>,
}

impl CoarsenedLawFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        CoarsenedLawFile::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn scheme(&self) -> Result<CoarseningScheme> {
        CoarseningScheme::new(self.coordinates.clone(), self.support.clone(), self.levels.clone())
    }

    pub fn complete<P: Field>(&self) -> Result<DiscreteCompleteDistribution<P>> {
        let scheme = Arc::new(self.scheme()?);
        let atoms = self
            .atoms
            .iter()
            .map(|e| {
                let point = scheme
                    .position(&e.point)
                    .ok_or_else(|| Error::invalid(format!("atom point {:?} is not in the support", e.point)))?;
                if e.s > 1 {
                    return Err(Error::invalid(format!("atom s must be 0 or 1, got {}", e.s)));
                }
                let atom = CompleteAtom {
                    level: e.level,
                    point,
                    follow_up: e.s == 1,
                };
                Ok((atom, e.p.to_field::<P>()?))
            })
            .collect::<Result<Vec<_>>>()?;
        DiscreteCompleteDistribution::new(scheme, atoms)
    }

    pub fn g_values<P: Field>(&self) -> Result<Option<Vec<P>>> {
        let Some(g) = &self.g else { return Ok(None) };
        if g.len() != self.support.len() {
            return Err(Error::invalid(format!("g has {} values for {} support points", g.len(), self.support.len())));
        }
        g.iter().map(|v| v.to_field()).collect::<Result<Vec<P>>>().map(Some)
    }

    /// Serialises a law, writing each probability through `show`.
    pub fn from_complete<P: Field>(
        complete: &DiscreteCompleteDistribution<P>,
        g: Option<Vec<ExactValue>>,
        missing_outcome: Option<MissingOutcomeLayout>,
        show: impl Fn(&P) -> ExactValue,
    ) -> Self {
        let scheme = complete.scheme();
        CoarsenedLawFile {
            coordinates: scheme.coordinates().to_vec(),
            support: scheme.support().to_vec(),
            levels: scheme.tables(),
            atoms: complete
                .atoms()
                .iter()
                .map(|(a, p)| AtomEntry {
                    level: a.level,
                    point: scheme.point(a.point).to_vec(),
                    s: a.follow_up as u8,
                    p: show(p),
                })
                .collect(),
            g,
            missing_outcome,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    #[test]
    fn exact_strings_parse() {
        let q = |s: &str| parse_exact::<BigRational>(s).unwrap();
        assert_eq!(q("3/20"), BigRational::from_ratio(3, 20));
        assert_eq!(q("0.15"), BigRational::from_ratio(3, 20));
        assert_eq!(q("-2"), BigRational::from_ratio(0, 1) - BigRational::from_ratio(2, 1));
        assert_eq!(q(".5"), BigRational::from_ratio(1, 2));
        assert!(parse_exact::<BigRational>("1/0").is_err());
        assert!(parse_exact::<BigRational>("a/2").is_err());
        assert!(parse_exact::<f64>("1e3").is_err());
    }

    #[test]
    fn round_trip_through_json() {
        let text = r#"{
            "coordinates": ["X"],
            "support": [[0], [1]],
            "levels": [{"level": 0, "sigma": [[], []], "sigma_bar": [[0], [1]]}],
            "atoms": [
                {"level": "inf", "point": [0], "p": "1/4"},
                {"level": 0, "point": [1], "s": 1, "p": 0.5},
                {"level": 0, "point": [1], "s": 0, "p": "0.25"}
            ],
            "g": [0, "1"]
        }"#;
        let file = CoarsenedLawFile::from_json(text).unwrap();
        let law = file.complete::<BigRational>().unwrap();
        assert_eq!(law.atoms().len(), 3);
        let again = CoarsenedLawFile::from_complete(&law, file.g.clone(), None, |p| ExactValue::Text(p.to_string()));
        let reread = CoarsenedLawFile::from_json(&again.to_json().unwrap()).unwrap();
        assert_eq!(reread.complete::<BigRational>().unwrap(), law);
        assert_eq!(reread.g_values::<f64>().unwrap().unwrap(), vec![0.0, 1.0]);
    }
}
