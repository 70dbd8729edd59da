//! Observed and complete records, datasets, fold assignment and the dataset
//! CSV format.
//!
//! An observed record carries `(L, A, R, S, (R + S) Y)`: covariates, a binary
//! treatment, the initial-observation indicator, the follow-up indicator and
//! the outcome, which is present exactly when `R + S >= 1`. Follow-up is only
//! possible for records that were initially missing, so `S <= 1 - R`.

use std::fmt::Display;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Treatment level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    #[serde(rename = "0")]
    Control,
    #[serde(rename = "1")]
    Treated,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treated];

    pub fn index(self) -> usize {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }

    pub fn from_bit(bit: bool) -> Arm {
        if bit {
            Arm::Treated
        } else {
            Arm::Control
        }
    }

    pub fn other(self) -> Arm {
        match self {
            Arm::Control => Arm::Treated,
            Arm::Treated => Arm::Control,
        }
    }

    pub fn indicator<T: Real>(self) -> T {
        match self {
            Arm::Control => T::zero(),
            Arm::Treated => T::one(),
        }
    }
}

impl Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.index())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedRecord<T> {
    pub covariates: Vec<T>,
    pub treatment: Arm,
    /// `R`: outcome observed in the initial data.
    pub initial: bool,
    /// `S`: outcome recovered by follow-up.
    pub follow_up: bool,
    pub outcome: Option<T>,
}

impl<T: Real> ObservedRecord<T> {
    /// Builds a record, enforcing the observation invariants.
    pub fn new(
        covariates: Vec<T>,
        treatment: Arm,
        initial: bool,
        follow_up: bool,
        outcome: Option<T>,
    ) -> Result<Self> {
        let record = ObservedRecord {
            covariates,
            treatment,
            initial,
            follow_up,
            outcome,
        };
        match record.violation() {
            None => Ok(record),
            Some(v) => Err(Error::invalid(v.message())),
        }
    }

    /// `R + S >= 1`.
    pub fn outcome_expected(&self) -> bool {
        self.initial || self.follow_up
    }

    pub fn violation(&self) -> Option<ViolationKind> {
        if self.initial && self.follow_up {
            Some(ViolationKind::FollowUpOfObserved)
        } else if self.outcome.is_some() && !self.outcome_expected() {
            Some(ViolationKind::UnexpectedOutcome)
        } else if self.outcome.is_none() && self.outcome_expected() {
            Some(ViolationKind::MissingOutcome)
        } else {
            None
        }
    }
}

/// `(L, A, Y, R, S)` with the outcome always known. Only produced by the
/// simulation harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompleteRecord<T> {
    pub covariates: Vec<T>,
    pub treatment: Arm,
    pub outcome: T,
    pub initial: bool,
    pub follow_up: bool,
}

impl<T: Real> CompleteRecord<T> {
    /// Hides the outcome when neither stage observed it.
    pub fn observe(&self) -> ObservedRecord<T> {
        ObservedRecord {
            covariates: self.covariates.clone(),
            treatment: self.treatment,
            initial: self.initial,
            follow_up: self.follow_up,
            outcome: (self.initial || self.follow_up).then_some(self.outcome),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<T> {
    covariate_names: Vec<String>,
    records: Vec<ObservedRecord<T>>,
}

impl<T: Real> Dataset<T> {
    pub fn new(covariate_names: Vec<String>, records: Vec<ObservedRecord<T>>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::invalid("dataset must contain at least one record"));
        }
        let width = covariate_names.len();
        if let Some(i) = records.iter().position(|r| r.covariates.len() != width) {
            return Err(Error::invalid(format!(
                "record {i} has {} covariates, expected {width}",
                records[i].covariates.len()
            )));
        }
        Ok(Dataset {
            covariate_names,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ObservedRecord<T>] {
        &self.records
    }

    pub fn record(&self, i: usize) -> &ObservedRecord<T> {
        &self.records[i]
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Reorders records; `order[j]` is the old index of the new record `j`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.len() {
            return Err(Error::invalid("permutation length differs from dataset size"));
        }
        let records = order.iter().map(|&i| self.records[i].clone()).collect();
        Dataset::new(self.covariate_names.clone(), records)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    FollowUpOfObserved,
    UnexpectedOutcome,
    MissingOutcome,
}

impl ViolationKind {
    pub fn message(self) -> &'static str {
        match self {
            ViolationKind::FollowUpOfObserved => "S=1 requires R=0",
            ViolationKind::UnexpectedOutcome => "Y must be absent when R+S=0",
            ViolationKind::MissingOutcome => "Y must be present when R+S=1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for v in &self.violations {
            writeln!(f, "row {}: {}", v.index, v.kind.message())?;
        }
        Ok(())
    }
}

pub fn validate_dataset<T: Real>(d: &Dataset<T>) -> ValidationReport {
    let violations = d
        .records
        .iter()
        .enumerate()
        .filter_map(|(index, r)| r.violation().map(|kind| Violation { index, kind }))
        .collect();
    ValidationReport { violations }
}

/// Random partition of `0..n` into `k` folds for cross-fitting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    k: usize,
    /// Zero-based fold label per record.
    labels: Vec<usize>,
    seed: u64,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Indices of fold `fold`, in increasing order.
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == fold)
            .collect()
    }

    /// Training indices for fold `fold`. With a single fold this is the whole
    /// sample, so nuisances are fitted and evaluated on the same records.
    pub fn training(&self, fold: usize) -> Vec<usize> {
        if self.k == 1 {
            return (0..self.labels.len()).collect();
        }
        (0..self.labels.len())
            .filter(|&i| self.labels[i] != fold)
            .collect()
    }

    /// Assignment for a reordered dataset, `order[j]` being the old index of record `j`.
    pub fn permuted(&self, order: &[usize]) -> FoldAssignment {
        FoldAssignment {
            k: self.k,
            labels: order.iter().map(|&i| self.labels[i]).collect(),
            seed: self.seed,
        }
    }

    pub fn from_labels(k: usize, labels: Vec<usize>, seed: u64) -> Result<Self> {
        if k == 0 || labels.iter().any(|&l| l >= k) {
            return Err(Error::invalid("fold labels must lie in 0..k"));
        }
        Ok(FoldAssignment { k, labels, seed })
    }
}

pub fn assign_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 1 {
        return Err(Error::invalid("number of folds must be at least 1"));
    }
    if k > n {
        return Err(Error::invalid(format!("cannot split {n} records into {k} folds")));
    }
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    labels.shuffle(&mut rng);
    Ok(FoldAssignment { k, labels, seed })
}

const TREATMENT_COL: &str = "A";
const INITIAL_COL: &str = "R";
const FOLLOW_UP_COL: &str = "S";
const OUTCOME_COL: &str = "Y";

fn parse_cell<T: FromStr>(cell: &str, row: usize, col: &str) -> Result<T> {
    cell.trim().parse().map_err(|_| Error::DataIntegrity {
        index: row,
        reason: format!("cannot parse {col}={cell:?}"),
    })
}

fn parse_bit(cell: &str, row: usize, col: &str) -> Result<bool> {
    match cell.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::DataIntegrity {
            index: row,
            reason: format!("{col} must be 0 or 1, got {other:?}"),
        }),
    }
}

/// Reads the dataset CSV format: covariate columns, then `A`, `R`, `S`, `Y`,
/// with an empty `Y` cell for missing outcomes. Records violating the
/// observation invariants are kept so [`validate_dataset`] can report them.
pub fn read_csv<T, R>(reader: R) -> Result<Dataset<T>>
where
    T: Real + FromStr,
    R: Read,
{
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::invalid(format!("missing column {name}")))
    };
    let (a_col, r_col, s_col, y_col) = (
        find(TREATMENT_COL)?,
        find(INITIAL_COL)?,
        find(FOLLOW_UP_COL)?,
        find(OUTCOME_COL)?,
    );
    let covariate_cols: Vec<usize> = (0..headers.len())
        .filter(|c| ![a_col, r_col, s_col, y_col].contains(c))
        .collect();
    let names = covariate_cols
        .iter()
        .map(|&c| headers[c].trim().to_string())
        .collect();

    let mut records = Vec::new();
    for (row, result) in rdr.records().enumerate() {
        let rec = result?;
        let covariates = covariate_cols
            .iter()
            .map(|&c| parse_cell(&rec[c], row, &headers[c]))
            .collect::<Result<Vec<T>>>()?;
        let y = rec[y_col].trim();
        records.push(ObservedRecord {
            covariates,
            treatment: Arm::from_bit(parse_bit(&rec[a_col], row, TREATMENT_COL)?),
            initial: parse_bit(&rec[r_col], row, INITIAL_COL)?,
            follow_up: parse_bit(&rec[s_col], row, FOLLOW_UP_COL)?,
            outcome: if y.is_empty() {
                None
            } else {
                Some(parse_cell(y, row, OUTCOME_COL)?)
            },
        });
    }
    Dataset::new(names, records)
}

/// Writes the dataset CSV format. Values use the shortest representation that
/// parses back to the same number.
pub fn write_csv<T, W>(d: &Dataset<T>, writer: W) -> Result<()>
where
    T: Real,
    W: Write,
{
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = d.covariate_names.iter().map(String::as_str).collect();
    header.extend([TREATMENT_COL, INITIAL_COL, FOLLOW_UP_COL, OUTCOME_COL]);
    wtr.write_record(&header)?;
    let bit = |b: bool| if b { "1".to_string() } else { "0".to_string() };
    for r in &d.records {
        let mut row: Vec<String> = r.covariates.iter().map(|x| x.to_string()).collect();
        row.push(r.treatment.to_string());
        row.push(bit(r.initial));
        row.push(bit(r.follow_up));
        row.push(r.outcome.map(|y| y.to_string()).unwrap_or_default());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_csv_path<T: Real + FromStr>(path: impl AsRef<Path>) -> Result<Dataset<T>> {
    read_csv(std::fs::File::open(path)?)
}

pub fn write_csv_path<T: Real>(d: &Dataset<T>, path: impl AsRef<Path>) -> Result<()> {
    write_csv(d, std::fs::File::create(path)?)
}
