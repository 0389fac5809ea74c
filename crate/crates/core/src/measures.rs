//! Spectrum-based suspiciousness measures and the rankings they induce.
//!
//! Measures live in an open registry keyed by name. A measure maps a
//! (possibly smoothed) spectrum to a real score; a division by zero makes the
//! score degenerate, which is reported as `0` with a flag so rankings stay
//! total and deterministic.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{CoverageMatrix, Spectrum};
use crate::ranking::Ranking;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("unknown measure {0:?}")]
    Unknown(String),
    #[error("smoothing must be a non-negative number, got {0}")]
    Smoothing(String),
    #[error("single-fault optimality needs at least one failing test")]
    NoFailingTests,
}

/// Spectrum counts after smoothing, as reals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Counts {
    pub ef: f64,
    pub nf: f64,
    pub ep: f64,
    pub np: f64,
}

impl Counts {
    pub fn smoothed(s: &Spectrum, smoothing: f64) -> Self {
        Counts {
            ef: s.ef as f64 + smoothing,
            nf: s.nf as f64 + smoothing,
            ep: s.ep as f64 + smoothing,
            np: s.np as f64 + smoothing,
        }
    }
}

/// A suspiciousness function. `None` signals a degenerate evaluation.
pub trait Measure: Send + Sync {
    fn name(&self) -> &str;
    fn evaluate(&self, c: &Counts) -> Option<f64>;
}

struct Formula {
    name: &'static str,
    f: fn(&Counts) -> Option<f64>,
}

impl Measure for Formula {
    fn name(&self) -> &str {
        self.name
    }

    fn evaluate(&self, c: &Counts) -> Option<f64> {
        (self.f)(c).filter(|v| v.is_finite())
    }
}

fn div(n: f64, d: f64) -> Option<f64> {
    (d != 0.0).then(|| n / d)
}

fn ochiai(c: &Counts) -> Option<f64> {
    div(c.ef * c.ef, (c.ef + c.nf) * (c.ef + c.ep))
}

fn d3(c: &Counts) -> Option<f64> {
    div(c.ef.powi(3), c.ep + c.nf)
}

fn zoltar(c: &Counts) -> Option<f64> {
    let penalty = div(10000.0 * c.nf * c.ep, c.ef)?;
    div(c.ef, c.ef + c.nf + c.ep + penalty)
}

fn gp05(c: &Counts) -> Option<f64> {
    let num = (c.ef + c.np) * c.ef.sqrt();
    let den =
        (c.ef + c.ep) * (c.np * c.nf + c.ep.sqrt()) * (c.ep + c.np) * (c.ep - c.np).abs().sqrt();
    div(num, den)
}

fn naish(c: &Counts) -> Option<f64> {
    Some(c.ef - div(c.ep, c.ep + c.np + 1.0)?)
}

fn wong2(c: &Counts) -> Option<f64> {
    Some(c.ef - c.ep)
}

fn tarantula(c: &Counts) -> Option<f64> {
    let fail = div(c.ef, c.ef + c.nf)?;
    let pass = div(c.ep, c.ep + c.np)?;
    div(fail, fail + pass)
}

fn constant(_: &Counts) -> Option<f64> {
    Some(0.0)
}

type ScoreFn = fn(&Counts) -> Option<f64>;

const BUILTIN: &[(&str, ScoreFn)] = &[
    ("ochiai", ochiai),
    ("d3", d3),
    ("zoltar", zoltar),
    ("gp05", gp05),
    ("naish", naish),
    ("wong2", wong2),
    ("tarantula", tarantula),
    ("constant", constant),
];

/// A measure name plus the amount added to each spectrum element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureId {
    pub name: String,
    #[serde(default)]
    pub smoothing: f64,
}

impl MeasureId {
    pub fn new(name: impl Into<String>) -> Self {
        MeasureId {
            name: name.into(),
            smoothing: 0.0,
        }
    }

    pub fn with_smoothing(mut self, smoothing: f64) -> Self {
        self.smoothing = smoothing;
        self
    }
}

impl fmt::Display for MeasureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.smoothing == 0.0 {
            f.write_str(&self.name)
        } else {
            write!(f, "{}+{}", self.name, self.smoothing)
        }
    }
}

/// Parses a non-negative smoothing amount written as a decimal or `a/b`.
pub fn parse_smoothing(text: &str) -> Result<f64, MeasureError> {
    let bad = || MeasureError::Smoothing(text.to_owned());
    let value = match text.trim().split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| bad())?;
            let d: f64 = d.trim().parse().map_err(|_| bad())?;
            div(n, d).ok_or_else(bad)?
        }
        None => text.trim().parse().map_err(|_| bad())?,
    };
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(bad())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Optimality {
    Pass,
    /// `executed_by_all` is run by every failing test yet does not strictly
    /// outscore `other`, which misses some failing test.
    Violation {
        executed_by_all: usize,
        other: usize,
        executed_by_all_score: f64,
        other_score: f64,
    },
}

#[derive(Clone)]
pub struct MeasureRegistry {
    measures: BTreeMap<String, Arc<dyn Measure>>,
}

impl Default for MeasureRegistry {
    fn default() -> Self {
        let mut r = MeasureRegistry {
            measures: BTreeMap::new(),
        };
        for &(name, f) in BUILTIN {
            r.register(Arc::new(Formula { name, f }));
        }
        r
    }
}

impl fmt::Debug for MeasureRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.measures.keys()).finish()
    }
}

impl MeasureRegistry {
    /// The shared registry of built-in measures.
    pub fn standard() -> &'static MeasureRegistry {
        static STANDARD: OnceLock<MeasureRegistry> = OnceLock::new();
        STANDARD.get_or_init(MeasureRegistry::default)
    }

    /// Adds or replaces a measure under its own name.
    pub fn register(&mut self, measure: Arc<dyn Measure>) {
        self.measures.insert(measure.name().to_owned(), measure);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.measures.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.measures.contains_key(name)
    }

    fn get(&self, id: &MeasureId) -> Result<&dyn Measure, MeasureError> {
        if !(id.smoothing.is_finite() && id.smoothing >= 0.0) {
            return Err(MeasureError::Smoothing(id.smoothing.to_string()));
        }
        self.measures
            .get(&id.name)
            .map(|m| m.as_ref())
            .ok_or_else(|| MeasureError::Unknown(id.name.clone()))
    }

    pub fn score(&self, id: &MeasureId, s: &Spectrum) -> Result<Score, MeasureError> {
        let measure = self.get(id)?;
        Ok(evaluate(measure, s, id.smoothing))
    }

    /// Scores every unit column of `m`, indexed by unit.
    pub fn score_all(
        &self,
        m: &CoverageMatrix,
        id: &MeasureId,
    ) -> Result<Vec<Score>, MeasureError> {
        let measure = self.get(id)?;
        Ok(m.spectra()
            .iter()
            .map(|s| evaluate(measure, s, id.smoothing))
            .collect())
    }

    pub fn rank(&self, m: &CoverageMatrix, id: &MeasureId) -> Result<Ranking<f64>, MeasureError> {
        let scores = self.score_all(m, id)?;
        Ok(Ranking::from_scores(
            scores.into_iter().map(|s| s.value).collect(),
        ))
    }

    pub fn check_single_fault_optimality(
        &self,
        id: &MeasureId,
        m: &CoverageMatrix,
    ) -> Result<Optimality, MeasureError> {
        if m.num_failing() == 0 {
            return Err(MeasureError::NoFailingTests);
        }
        let spectra = m.spectra();
        let scores = self.score_all(m, id)?;
        for (a, sa) in spectra.iter().enumerate() {
            if !(sa.nf == 0 && sa.ef >= 1) {
                continue;
            }
            for (b, sb) in spectra.iter().enumerate() {
                if sb.nf > 0 && scores[a].value <= scores[b].value {
                    return Ok(Optimality::Violation {
                        executed_by_all: a,
                        other: b,
                        executed_by_all_score: scores[a].value,
                        other_score: scores[b].value,
                    });
                }
            }
        }
        Ok(Optimality::Pass)
    }
}

fn evaluate(measure: &dyn Measure, s: &Spectrum, smoothing: f64) -> Score {
    match measure.evaluate(&Counts::smoothed(s, smoothing)) {
        Some(value) => Score {
            value,
            degenerate: false,
        },
        None => Score {
            value: 0.0,
            degenerate: true,
        },
    }
}

pub fn score(id: &MeasureId, s: &Spectrum) -> Result<Score, MeasureError> {
    MeasureRegistry::standard().score(id, s)
}

pub fn rank(m: &CoverageMatrix, id: &MeasureId) -> Result<Ranking<f64>, MeasureError> {
    MeasureRegistry::standard().rank(m, id)
}

pub fn check_single_fault_optimality(
    id: &MeasureId,
    m: &CoverageMatrix,
) -> Result<Optimality, MeasureError> {
    MeasureRegistry::standard().check_single_fault_optimality(id, m)
}
