//! JSON shapes exchanged with clients. Probabilities never travel as
//! binary floats: each carries a decimal rendering and the exact fraction.

use chrono::{DateTime, Utc};
use doric_core::engine::{Session, SessionStatus, Verdict};
use doric_core::matrix::MatrixDocument;
use doric_core::probability::Probability;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireProbability {
    pub decimal: String,
    pub numerator: String,
    pub denominator: String,
}

impl From<&Probability> for WireProbability {
    fn from(p: &Probability) -> Self {
        WireProbability {
            decimal: p.to_decimal(),
            numerator: p.numer().to_string(),
            denominator: p.denom().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitRef {
    pub unit: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedUnit {
    /// 1-based position in the ranking.
    pub rank: usize,
    pub unit: usize,
    pub name: String,
    pub cl: WireProbability,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub unit: usize,
    pub name: String,
    pub verdict: Verdict,
    /// Causal likelihood when the verdict was given.
    pub cl: Option<WireProbability>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionResource {
    pub id: String,
    pub revision: u64,
    pub status: SessionStatus,
    pub created: DateTime<Utc>,
    pub updated: DateTime<Utc>,
    pub update_bound: Option<usize>,
    pub units: Vec<String>,
    pub tests: usize,
    pub known_clean: Vec<UnitRef>,
    /// Unjudged units by descending causal likelihood, freshly computed.
    pub ranking: Vec<RankedUnit>,
    pub next_suspect: Option<UnitRef>,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub revision: u64,
    pub status: SessionStatus,
    pub created: DateTime<Utc>,
    pub updated: DateTime<Utc>,
    pub units: usize,
    pub tests: usize,
    pub inspected: usize,
}

/// Stored state of one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub revision: u64,
    pub created: DateTime<Utc>,
    pub updated: DateTime<Utc>,
    pub session: Session,
}

impl Record {
    pub fn resource(&self) -> SessionResource {
        let s = &self.session;
        let m = s.matrix();
        let unit_ref = |unit: usize| UnitRef {
            unit,
            name: m.unit_name(unit).to_owned(),
        };
        // an inconsistent session has no likelihoods left to show
        let ranking = s
            .ranking()
            .map(|r| {
                r.entries()
                    .iter()
                    .enumerate()
                    .map(|(pos, e)| RankedUnit {
                        rank: pos + 1,
                        unit: e.unit,
                        name: m.unit_name(e.unit).to_owned(),
                        cl: (&e.score).into(),
                    })
                    .collect()
            })
            .unwrap_or_default();
        SessionResource {
            id: self.id.clone(),
            revision: self.revision,
            status: s.status(),
            created: self.created,
            updated: self.updated,
            update_bound: s.knowledge().bound(),
            units: m.unit_names().to_vec(),
            tests: m.num_tests(),
            known_clean: s.knowledge().units().iter().map(|&u| unit_ref(u)).collect(),
            ranking,
            next_suspect: s.next_suspect().ok().map(unit_ref),
            history: s
                .history()
                .iter()
                .map(|j| HistoryEntry {
                    unit: j.unit,
                    name: m.unit_name(j.unit).to_owned(),
                    verdict: j.verdict,
                    cl: j.likelihood.as_ref().map(Into::into),
                })
                .collect(),
        }
    }

    pub fn summary(&self) -> SessionSummary {
        let m = self.session.matrix();
        SessionSummary {
            id: self.id.clone(),
            revision: self.revision,
            status: self.session.status(),
            created: self.created,
            updated: self.updated,
            units: m.num_units(),
            tests: m.num_tests(),
            inspected: self.session.history().len(),
        }
    }
}

fn default_bound() -> Option<usize> {
    Some(doric_core::eval::DEFAULT_UPDATE_BOUND)
}

/// Body of `POST /api/v1/sessions` when sent as JSON. Exactly one of
/// `matrix` and `csv` must be present. An absent `update_bound` means the
/// default; `null` means unbounded.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub matrix: Option<MatrixDocument>,
    pub csv: Option<String>,
    #[serde(default = "default_bound")]
    pub update_bound: Option<usize>,
}

/// A unit given by 0-based index or by name.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum UnitSpec {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictRequest {
    pub unit: UnitSpec,
    pub verdict: Verdict,
    /// When present, must equal the session's current revision.
    pub revision: Option<u64>,
}
