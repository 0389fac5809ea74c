//! Coverage matrices: which tests execute which units, and which tests fail.
//!
//! A matrix stores the unit columns and the error vector separately, so unit
//! indices stay dense over the candidate units. Column order is significant:
//! it stands in for code position when rankings break ties.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name of the mandatory last CSV column.
pub const ERROR_COLUMN: &str = "error";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatrixError {
    #[error("line {line}: malformed header: {reason}")]
    Header { line: u64, reason: String },
    #[error("line {line}, column {column}: expected 0 or 1, found {value:?}")]
    NotABit {
        line: u64,
        column: usize,
        value: String,
    },
    #[error("line {line}: row has {found} cells, header has {expected}")]
    Ragged {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("duplicate {kind} name {name:?}")]
    DuplicateName { kind: &'static str, name: String },
    #[error("empty {kind} name at position {position}")]
    EmptyName { kind: &'static str, position: usize },
    #[error("no tests")]
    NoTests,
    #[error("no units")]
    NoUnits,
    #[error("test {test:?} has {found} coverage bits, expected {expected}")]
    Width {
        test: String,
        expected: usize,
        found: usize,
    },
    #[error("failing test {test:?} covers no unit")]
    UncoveredFailingTest { test: String },
    #[error("unit index {index} out of range ({len} units)")]
    UnitOutOfRange { index: usize, len: usize },
    #[error("test index {index} out of range ({len} tests)")]
    TestOutOfRange { index: usize, len: usize },
    #[error("invalid csv: {0}")]
    Csv(String),
    #[error("invalid json: {0}")]
    Json(String),
}

/// Per-unit counts of failing/passing tests that do/do not execute it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Spectrum {
    pub ef: u64,
    pub nf: u64,
    pub ep: u64,
    pub np: u64,
}

impl Spectrum {
    pub fn new(ef: u64, nf: u64, ep: u64, np: u64) -> Self {
        Spectrum { ef, nf, ep, np }
    }

    pub fn total(&self) -> u64 {
        self.ef + self.nf + self.ep + self.np
    }
}

/// Boolean test-by-unit coverage plus one error bit per test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageMatrix {
    unit_names: Vec<String>,
    test_names: Vec<String>,
    /// Row-major, `tests * units` bits.
    cover: Vec<bool>,
    error: Vec<bool>,
}

impl CoverageMatrix {
    /// Builds a validated matrix. `cover[k][i]` is whether test `k` executes unit `i`.
    pub fn new(
        unit_names: Vec<String>,
        test_names: Vec<String>,
        cover: Vec<Vec<bool>>,
        error: Vec<bool>,
    ) -> Result<Self, MatrixError> {
        if test_names.is_empty() {
            return Err(MatrixError::NoTests);
        }
        if unit_names.is_empty() {
            return Err(MatrixError::NoUnits);
        }
        check_names("unit", &unit_names)?;
        check_names("test", &test_names)?;
        if cover.len() != test_names.len() || error.len() != test_names.len() {
            return Err(MatrixError::Width {
                test: "<all>".into(),
                expected: test_names.len(),
                found: cover.len().min(error.len()),
            });
        }
        let width = unit_names.len();
        let mut flat = Vec::with_capacity(width * test_names.len());
        for (name, row) in test_names.iter().zip(&cover) {
            if row.len() != width {
                return Err(MatrixError::Width {
                    test: name.clone(),
                    expected: width,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        let m = CoverageMatrix {
            unit_names,
            test_names,
            cover: flat,
            error,
        };
        for k in 0..m.num_tests() {
            if m.error[k] && m.rho(k, &BTreeSet::new()) == 0 {
                return Err(MatrixError::UncoveredFailingTest {
                    test: m.test_names[k].clone(),
                });
            }
        }
        Ok(m)
    }

    pub fn num_units(&self) -> usize {
        self.unit_names.len()
    }

    pub fn num_tests(&self) -> usize {
        self.test_names.len()
    }

    pub fn unit_names(&self) -> &[String] {
        &self.unit_names
    }

    pub fn test_names(&self) -> &[String] {
        &self.test_names
    }

    pub fn unit_name(&self, unit: usize) -> &str {
        &self.unit_names[unit]
    }

    /// Whether test `test` executes unit `unit`. Panics on out-of-range indices.
    #[inline]
    pub fn covers(&self, test: usize, unit: usize) -> bool {
        assert!(unit < self.num_units(), "unit index out of range");
        self.cover[test * self.num_units() + unit]
    }

    #[inline]
    pub fn fails(&self, test: usize) -> bool {
        self.error[test]
    }

    pub fn row(&self, test: usize) -> &[bool] {
        let w = self.num_units();
        &self.cover[test * w..(test + 1) * w]
    }

    pub fn error_vector(&self) -> &[bool] {
        &self.error
    }

    pub fn failing_tests(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_tests()).filter(move |&k| self.error[k])
    }

    pub fn num_failing(&self) -> usize {
        self.error.iter().filter(|&&e| e).count()
    }

    pub fn check_unit(&self, unit: usize) -> Result<(), MatrixError> {
        if unit < self.num_units() {
            Ok(())
        } else {
            Err(MatrixError::UnitOutOfRange {
                index: unit,
                len: self.num_units(),
            })
        }
    }

    pub fn check_test(&self, test: usize) -> Result<(), MatrixError> {
        if test < self.num_tests() {
            Ok(())
        } else {
            Err(MatrixError::TestOutOfRange {
                index: test,
                len: self.num_tests(),
            })
        }
    }

    pub fn spectrum(&self, unit: usize) -> Result<Spectrum, MatrixError> {
        self.check_unit(unit)?;
        let mut s = Spectrum::default();
        for k in 0..self.num_tests() {
            match (self.covers(k, unit), self.error[k]) {
                (true, true) => s.ef += 1,
                (false, true) => s.nf += 1,
                (true, false) => s.ep += 1,
                (false, false) => s.np += 1,
            }
        }
        Ok(s)
    }

    pub fn spectra(&self) -> Vec<Spectrum> {
        (0..self.num_units())
            .map(|i| self.spectrum(i).expect("index in range"))
            .collect()
    }

    /// Number of units executed by `test`, not counting those in `excluded`.
    pub fn rho(&self, test: usize, excluded: &BTreeSet<usize>) -> usize {
        self.row(test)
            .iter()
            .enumerate()
            .filter(|&(j, &c)| c && !excluded.contains(&j))
            .count()
    }

    /// Number of tests executing `unit`.
    pub fn coverage_count(&self, unit: usize) -> usize {
        (0..self.num_tests())
            .filter(|&k| self.covers(k, unit))
            .count()
    }

    /// Drops every unit column no failing test executes. The returned map has
    /// one entry per original unit: its new index, or `None` if dropped.
    pub fn restrict_to_failing_covered(&self) -> (CoverageMatrix, Vec<Option<usize>>) {
        let keep: Vec<usize> = (0..self.num_units())
            .filter(|&i| self.failing_tests().any(|k| self.covers(k, i)))
            .collect();
        let mut map = vec![None; self.num_units()];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = Some(new);
        }
        let mut cover = Vec::with_capacity(keep.len() * self.num_tests());
        for k in 0..self.num_tests() {
            cover.extend(keep.iter().map(|&i| self.covers(k, i)));
        }
        let restricted = CoverageMatrix {
            unit_names: keep.iter().map(|&i| self.unit_names[i].clone()).collect(),
            test_names: self.test_names.clone(),
            cover,
            error: self.error.clone(),
        };
        (restricted, map)
    }

    /// Looks a unit up by exact name, falling back to a 1-based `u<i>` index.
    pub fn resolve_unit(&self, name: &str) -> Option<usize> {
        let name = name.trim();
        if let Some(i) = self.unit_names.iter().position(|n| n == name) {
            return Some(i);
        }
        let idx: usize = name.strip_prefix('u')?.parse().ok()?;
        (1..=self.num_units()).contains(&idx).then(|| idx - 1)
    }

    /// Parses the CSV form: `test,<unit>...,error`, one row per test, `#` comments.
    pub fn from_csv(text: &str) -> Result<Self, MatrixError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());

        let mut records = reader.records();
        let header = loop {
            match records.next() {
                None => {
                    return Err(MatrixError::Header {
                        line: 1,
                        reason: "missing header".into(),
                    })
                }
                Some(rec) => {
                    let rec = rec.map_err(|e| MatrixError::Csv(e.to_string()))?;
                    if rec.len() == 1 && rec[0].is_empty() {
                        continue;
                    }
                    break rec;
                }
            }
        };
        let header_line = header.position().map_or(1, |p| p.line());
        if header.len() < 3 {
            return Err(MatrixError::Header {
                line: header_line,
                reason: "expected `test`, at least one unit, and `error`".into(),
            });
        }
        if &header[0] != "test" {
            return Err(MatrixError::Header {
                line: header_line,
                reason: format!("first column must be `test`, found {:?}", &header[0]),
            });
        }
        if &header[header.len() - 1] != ERROR_COLUMN {
            return Err(MatrixError::Header {
                line: header_line,
                reason: format!(
                    "last column must be `{ERROR_COLUMN}`, found {:?}",
                    &header[header.len() - 1]
                ),
            });
        }
        let unit_names: Vec<String> = header
            .iter()
            .skip(1)
            .take(header.len() - 2)
            .map(str::to_owned)
            .collect();
        check_names("unit", &unit_names)?;

        let mut test_names = Vec::new();
        let mut cover = Vec::new();
        let mut error = Vec::new();
        for rec in records {
            let rec = rec.map_err(|e| MatrixError::Csv(e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() == 1 && rec[0].is_empty() {
                continue;
            }
            if rec.len() != header.len() {
                return Err(MatrixError::Ragged {
                    line,
                    expected: header.len(),
                    found: rec.len(),
                });
            }
            let mut bits = Vec::with_capacity(rec.len() - 1);
            for (column, cell) in rec.iter().enumerate().skip(1) {
                bits.push(match cell {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(MatrixError::NotABit {
                            line,
                            column: column + 1,
                            value: other.to_owned(),
                        })
                    }
                });
            }
            error.push(bits.pop().expect("at least one bit"));
            cover.push(bits);
            test_names.push(rec[0].to_owned());
        }
        CoverageMatrix::new(unit_names, test_names, cover, error)
    }

    /// Renders the CSV form accepted by [`CoverageMatrix::from_csv`].
    pub fn to_csv(&self) -> String {
        let mut out = String::from("test");
        for u in &self.unit_names {
            out.push(',');
            out.push_str(u);
        }
        out.push(',');
        out.push_str(ERROR_COLUMN);
        out.push('\n');
        for k in 0..self.num_tests() {
            out.push_str(&self.test_names[k]);
            for &c in self.row(k) {
                let _ = write!(out, ",{}", c as u8);
            }
            let _ = writeln!(out, ",{}", self.error[k] as u8);
        }
        out
    }

    pub fn from_json_str(text: &str) -> Result<Self, MatrixError> {
        let doc: MatrixDocument =
            serde_json::from_str(text).map_err(|e| MatrixError::Json(e.to_string()))?;
        doc.try_into()
    }

    pub fn to_document(&self) -> MatrixDocument {
        MatrixDocument {
            units: self.unit_names.clone(),
            tests: (0..self.num_tests())
                .map(|k| TestRow {
                    name: self.test_names[k].clone(),
                    cover: self.row(k).iter().map(|&c| c as u8).collect(),
                    error: self.error[k] as u8,
                })
                .collect(),
        }
    }
}

fn check_names(kind: &'static str, names: &[String]) -> Result<(), MatrixError> {
    let mut seen = HashSet::with_capacity(names.len());
    for (position, name) in names.iter().enumerate() {
        if name.is_empty() {
            return Err(MatrixError::EmptyName { kind, position });
        }
        if !seen.insert(name.as_str()) {
            return Err(MatrixError::DuplicateName {
                kind,
                name: name.clone(),
            });
        }
    }
    Ok(())
}

/// JSON form of a matrix: `{units: [...], tests: [{name, cover: [bits], error: bit}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixDocument {
    pub units: Vec<String>,
    pub tests: Vec<TestRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestRow {
    pub name: String,
    pub cover: Vec<u8>,
    pub error: u8,
}

impl TryFrom<MatrixDocument> for CoverageMatrix {
    type Error = MatrixError;

    fn try_from(doc: MatrixDocument) -> Result<Self, MatrixError> {
        let bit = |line: usize, column: usize, v: u8| match v {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(MatrixError::NotABit {
                line: line as u64,
                column,
                value: other.to_string(),
            }),
        };
        let mut test_names = Vec::with_capacity(doc.tests.len());
        let mut cover = Vec::with_capacity(doc.tests.len());
        let mut error = Vec::with_capacity(doc.tests.len());
        for (k, row) in doc.tests.into_iter().enumerate() {
            let bits = row
                .cover
                .iter()
                .enumerate()
                .map(|(i, &v)| bit(k + 1, i + 1, v))
                .collect::<Result<Vec<_>, _>>()?;
            error.push(bit(k + 1, row.cover.len() + 1, row.error)?);
            cover.push(bits);
            test_names.push(row.name);
        }
        CoverageMatrix::new(doc.units, test_names, cover, error)
    }
}

impl Serialize for CoverageMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_document().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CoverageMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = MatrixDocument::deserialize(deserializer)?;
        CoverageMatrix::try_from(doc).map_err(serde::de::Error::custom)
    }
}
