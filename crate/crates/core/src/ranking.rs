use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

/// One ranked unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked<S> {
    pub unit: usize,
    pub score: S,
}

/// Units in inspection order: descending score, ties broken by ascending
/// unit index (earlier columns stand for earlier code).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking<S> {
    entries: Vec<Ranked<S>>,
}

impl<S: PartialOrd> Ranking<S> {
    /// Ranks `(unit, score)` pairs. Incomparable scores are treated as ties.
    pub fn from_scored(scored: impl IntoIterator<Item = (usize, S)>) -> Self {
        let mut entries: Vec<Ranked<S>> = scored
            .into_iter()
            .map(|(unit, score)| Ranked { unit, score })
            .collect();
        entries.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then(a.unit.cmp(&b.unit))
        });
        Ranking { entries }
    }

    /// Ranks scores indexed by unit.
    pub fn from_scores(scores: Vec<S>) -> Self {
        Self::from_scored(scores.into_iter().enumerate())
    }
}

impl<S> Ranking<S> {
    pub fn entries(&self) -> &[Ranked<S>] {
        &self.entries
    }

    pub fn order(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.unit).collect()
    }

    pub fn first(&self) -> Option<&Ranked<S>> {
        self.entries.first()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, unit: usize) -> Option<usize> {
        self.entries.iter().position(|e| e.unit == unit)
    }

    pub fn score_of(&self, unit: usize) -> Option<&S> {
        self.entries
            .iter()
            .find(|e| e.unit == unit)
            .map(|e| &e.score)
    }

    pub fn into_entries(self) -> Vec<Ranked<S>> {
        self.entries
    }
}
