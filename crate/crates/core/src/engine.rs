//! Closed-form causal and fault likelihoods, and the CL_n / CL_u procedures.
//!
//! Under a uniform weight over causal models, a failing test executing `ρ`
//! candidate units admits `2^ρ - 1` cause sets. Unit `i` is the sole cause in
//! exactly one of them and a cause in `2^(ρ-1)` of them. Knowing a unit is not
//! faulty removes it from every test's candidate pool, shrinking `ρ`.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::One;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{CoverageMatrix, MatrixError};
use crate::probability::Probability;
use crate::ranking::Ranking;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("inconsistent knowledge: failing test {test:?} has no remaining candidate cause")]
    InconsistentKnowledge { test: String },
    #[error("unit {0} is already known not to be faulty")]
    KnownClean(usize),
    #[error("no candidate units remain")]
    Exhausted,
    #[error("session is closed ({0})")]
    Closed(SessionStatus),
    #[error("unit {0} already has a verdict")]
    DuplicateVerdict(usize),
}

fn mersenne(rho: usize) -> BigUint {
    (BigUint::one() << rho) - 1u32
}

/// Candidate-cause counts per test with the units in `known_clean` removed.
fn reduced_rho(
    m: &CoverageMatrix,
    known_clean: &BTreeSet<usize>,
) -> Result<Vec<usize>, EngineError> {
    for &j in known_clean {
        m.check_unit(j)?;
    }
    (0..m.num_tests())
        .map(|k| {
            let rho = m.rho(k, known_clean);
            if m.fails(k) && rho == 0 {
                Err(EngineError::InconsistentKnowledge {
                    test: m.test_names()[k].clone(),
                })
            } else {
                Ok(rho)
            }
        })
        .collect()
}

/// Fails if some failing test has every covered unit in `known_clean`.
pub fn check_consistent(
    m: &CoverageMatrix,
    known_clean: &BTreeSet<usize>,
) -> Result<(), EngineError> {
    reduced_rho(m, known_clean).map(|_| ())
}

/// Probability that `unit` is the sole cause of the error in `test`.
pub fn per_test_total_cause_prob(
    m: &CoverageMatrix,
    test: usize,
    unit: usize,
    known_clean: &BTreeSet<usize>,
) -> Result<Probability, EngineError> {
    m.check_test(test)?;
    m.check_unit(unit)?;
    if known_clean.contains(&unit) {
        return Err(EngineError::KnownClean(unit));
    }
    let rho = reduced_rho(m, known_clean)?;
    Ok(if m.covers(test, unit) && m.fails(test) {
        Probability::from_ratio(BigUint::one(), mersenne(rho[test]))
    } else {
        Probability::zero()
    })
}

fn likelihood_from(m: &CoverageMatrix, unit: usize, rho: &[usize]) -> Probability {
    let covering = m.coverage_count(unit);
    if covering == 0 {
        return Probability::zero();
    }
    // tests sharing a reduced rho contribute identical terms
    let mut by_rho: BTreeMap<usize, u64> = BTreeMap::new();
    for k in m.failing_tests().filter(|&k| m.covers(k, unit)) {
        *by_rho.entry(rho[k]).or_default() += 1;
    }
    let sum: Probability = by_rho
        .into_iter()
        .map(|(r, n)| Probability::from_ratio(BigUint::from(n), mersenne(r)))
        .sum();
    sum / Probability::new(covering as u64, 1u32)
}

/// Probability that `unit` was the sole cause of an error given that it ran,
/// conditioned on the units in `known_clean` never causing an error.
pub fn causal_likelihood(
    m: &CoverageMatrix,
    unit: usize,
    known_clean: &BTreeSet<usize>,
) -> Result<Probability, EngineError> {
    m.check_unit(unit)?;
    if known_clean.contains(&unit) {
        return Err(EngineError::KnownClean(unit));
    }
    let rho = reduced_rho(m, known_clean)?;
    Ok(likelihood_from(m, unit, &rho))
}

/// Causal likelihood of every unit outside `known_clean`, indexed by unit.
pub fn causal_likelihoods(
    m: &CoverageMatrix,
    known_clean: &BTreeSet<usize>,
) -> Result<Vec<Option<Probability>>, EngineError> {
    let rho = reduced_rho(m, known_clean)?;
    Ok((0..m.num_units())
        .map(|i| (!known_clean.contains(&i)).then(|| likelihood_from(m, i, &rho)))
        .collect())
}

/// Probability that `unit` caused the error in at least one failing test.
pub fn fault_likelihood(m: &CoverageMatrix, unit: usize) -> Result<Probability, EngineError> {
    m.check_unit(unit)?;
    let none = BTreeSet::new();
    let not_cause: Probability = m
        .failing_tests()
        .filter(|&k| m.covers(k, unit))
        .map(|k| {
            let rho = m.rho(k, &none);
            // 1 - 2^(ρ-1) / (2^ρ - 1)
            Probability::from_ratio(mersenne(rho - 1), mersenne(rho))
        })
        .product();
    Ok(not_cause.complement())
}

/// CL_n: every unit ranked by causal likelihood with no knowledge.
pub fn localize_cln(m: &CoverageMatrix) -> Ranking<Probability> {
    let scores = causal_likelihoods(m, &BTreeSet::new())
        .expect("a valid matrix is consistent with empty knowledge");
    Ranking::from_scores(
        scores
            .into_iter()
            .map(|s| s.expect("no known units"))
            .collect(),
    )
}

/// Units known not to be faulty, with an optional cap on how many are kept.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeSet {
    not_faulty: BTreeSet<usize>,
    bound: Option<usize>,
}

impl KnowledgeSet {
    pub fn new(bound: Option<usize>) -> Self {
        KnowledgeSet {
            not_faulty: BTreeSet::new(),
            bound,
        }
    }

    pub fn from_units(units: impl IntoIterator<Item = usize>) -> Self {
        KnowledgeSet {
            not_faulty: units.into_iter().collect(),
            bound: None,
        }
    }

    pub fn units(&self) -> &BTreeSet<usize> {
        &self.not_faulty
    }

    pub fn bound(&self) -> Option<usize> {
        self.bound
    }

    pub fn is_full(&self) -> bool {
        self.bound.is_some_and(|b| self.not_faulty.len() >= b)
    }

    /// Records `unit` as not faulty unless the bound is reached. Returns
    /// whether the set changed.
    pub fn insert(&mut self, unit: usize) -> bool {
        !self.is_full() && self.not_faulty.insert(unit)
    }

    pub fn contains(&self, unit: usize) -> bool {
        self.not_faulty.contains(&unit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Clean,
    Faulty,
}

impl std::str::FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "clean" => Ok(Verdict::Clean),
            "faulty" => Ok(Verdict::Faulty),
            other => Err(format!(
                "unknown verdict {other:?} (expected clean or faulty)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionStatus {
    Open,
    ClosedFound,
    ClosedExhausted,
    ClosedInconsistent,
}

impl std::fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SessionStatus::Open => "open",
            SessionStatus::ClosedFound => "closed-found",
            SessionStatus::ClosedExhausted => "closed-exhausted",
            SessionStatus::ClosedInconsistent => "closed-inconsistent",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgement {
    pub unit: usize,
    pub verdict: Verdict,
    /// Causal likelihood the unit had when it was judged.
    pub likelihood: Option<Probability>,
}

/// A CL_u investigation: inspect the most likely sole cause, record the
/// verdict, and condition on clean units until a fault turns up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    matrix: Arc<CoverageMatrix>,
    knowledge: KnowledgeSet,
    history: Vec<Judgement>,
    status: SessionStatus,
}

impl Session {
    pub fn new(matrix: impl Into<Arc<CoverageMatrix>>, update_bound: Option<usize>) -> Self {
        Session {
            matrix: matrix.into(),
            knowledge: KnowledgeSet::new(update_bound),
            history: Vec::new(),
            status: SessionStatus::Open,
        }
    }

    pub fn matrix(&self) -> &CoverageMatrix {
        &self.matrix
    }

    pub fn knowledge(&self) -> &KnowledgeSet {
        &self.knowledge
    }

    pub fn history(&self) -> &[Judgement] {
        &self.history
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn is_judged(&self, unit: usize) -> bool {
        self.history.iter().any(|j| j.unit == unit)
    }

    /// Unjudged units ranked by causal likelihood under the current knowledge.
    pub fn ranking(&self) -> Result<Ranking<Probability>, EngineError> {
        let scores = causal_likelihoods(&self.matrix, self.knowledge.units())?;
        Ok(Ranking::from_scored(
            scores
                .into_iter()
                .enumerate()
                .filter(|&(i, _)| !self.is_judged(i))
                .filter_map(|(i, s)| s.map(|s| (i, s))),
        ))
    }

    /// The unjudged unit with the highest causal likelihood, lowest index on ties.
    pub fn next_suspect(&self) -> Result<usize, EngineError> {
        if self.status != SessionStatus::Open {
            return Err(EngineError::Closed(self.status));
        }
        self.ranking()?
            .first()
            .map(|e| e.unit)
            .ok_or(EngineError::Exhausted)
    }

    /// Records a verdict and returns the resulting status. A clean verdict
    /// that leaves some failing test without a possible cause closes the
    /// session as inconsistent.
    pub fn apply_verdict(
        &mut self,
        unit: usize,
        verdict: Verdict,
    ) -> Result<SessionStatus, EngineError> {
        self.matrix.check_unit(unit)?;
        if self.status != SessionStatus::Open {
            return Err(EngineError::Closed(self.status));
        }
        if self.is_judged(unit) {
            return Err(EngineError::DuplicateVerdict(unit));
        }
        let likelihood = causal_likelihood(&self.matrix, unit, self.knowledge.units()).ok();
        self.history.push(Judgement {
            unit,
            verdict,
            likelihood,
        });
        self.status = match verdict {
            Verdict::Faulty => SessionStatus::ClosedFound,
            Verdict::Clean => {
                self.knowledge.insert(unit);
                if check_consistent(&self.matrix, self.knowledge.units()).is_err() {
                    SessionStatus::ClosedInconsistent
                } else if self.history.len() == self.matrix.num_units() {
                    SessionStatus::ClosedExhausted
                } else {
                    SessionStatus::Open
                }
            }
        };
        Ok(self.status)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::fixtures::{arb_matrix, from_rows, minmax};
    use proptest::prelude::*;

    fn p(n: i64, d: i64) -> Probability {
        Probability::new(n, d)
    }

    fn set(units: &[usize]) -> BTreeSet<usize> {
        units.iter().copied().collect()
    }

    fn scenario1() -> CoverageMatrix {
        from_rows(&[(&[1, 1, 0], 1), (&[0, 0, 1], 1)])
    }

    fn scenario2() -> CoverageMatrix {
        from_rows(&[(&[0, 0, 1, 1], 1), (&[1, 1, 0, 0], 1)])
    }

    #[test]
    fn per_test_terms() {
        let m = minmax();
        let none = set(&[]);
        assert_eq!(per_test_total_cause_prob(&m, 0, 1, &none).unwrap(), p(1, 3));
        assert_eq!(per_test_total_cause_prob(&m, 2, 2, &none).unwrap(), p(1, 1));
        for i in 0..4 {
            assert!(per_test_total_cause_prob(&m, 3, i, &none)
                .unwrap()
                .is_zero());
        }
        // t3 runs only u3
        assert_eq!(
            per_test_total_cause_prob(&m, 0, 1, &set(&[2])),
            Err(EngineError::InconsistentKnowledge { test: "t3".into() })
        );
        assert_eq!(
            per_test_total_cause_prob(&m, 0, 1, &set(&[1])),
            Err(EngineError::KnownClean(1))
        );
    }

    #[test]
    fn running_example_likelihoods() {
        let m = minmax();
        let none = set(&[]);
        let cl: Vec<_> = (0..4)
            .map(|i| causal_likelihood(&m, i, &none).unwrap())
            .collect();
        assert_eq!(cl, vec![p(0, 1), p(1, 6), p(5, 9), p(1, 6)]);
        let fl: Vec<_> = (0..4).map(|i| fault_likelihood(&m, i).unwrap()).collect();
        assert_eq!(fl, vec![p(0, 1), p(2, 3), p(1, 1), p(2, 3)]);
        // u1 is never a candidate cause, so knowing it is clean changes nothing
        assert_eq!(causal_likelihood(&m, 2, &set(&[0])).unwrap(), p(5, 9));
    }

    #[test]
    fn cln_orders_running_example() {
        let r = localize_cln(&minmax());
        assert_eq!(r.order(), vec![2, 1, 3, 0]);
        assert_eq!(r.first().unwrap().score, p(5, 9));
        let r = localize_cln(&scenario1());
        assert_eq!(r.order()[..2], [2, 0]);
        assert_eq!(r.score_of(2), Some(&p(1, 1)));
        assert_eq!(r.score_of(1), Some(&p(1, 3)));
        let one = from_rows(&[(&[1], 1)]);
        assert_eq!(localize_cln(&one).first().unwrap().score, p(1, 1));
    }

    #[test]
    fn uncovered_unit_has_zero_likelihood() {
        let m = from_rows(&[(&[1, 0], 1)]);
        assert!(causal_likelihood(&m, 1, &set(&[])).unwrap().is_zero());
    }

    #[test]
    fn scenario2_walkthrough() {
        let m = scenario2();
        let mut s = Session::new(m.clone(), None);
        for i in 0..4 {
            assert_eq!(causal_likelihood(&m, i, &set(&[])).unwrap(), p(1, 3));
        }
        assert_eq!(s.next_suspect().unwrap(), 0);
        assert_eq!(
            s.apply_verdict(0, Verdict::Clean).unwrap(),
            SessionStatus::Open
        );
        assert_eq!(s.knowledge().units(), &set(&[0]));
        assert_eq!(causal_likelihood(&m, 1, &set(&[0])).unwrap(), p(1, 1));
        assert_eq!(causal_likelihood(&m, 2, &set(&[0])).unwrap(), p(1, 3));
        assert_eq!(s.next_suspect().unwrap(), 1);
        assert_eq!(
            s.apply_verdict(1, Verdict::Faulty).unwrap(),
            SessionStatus::ClosedFound
        );
        assert_eq!(s.history().len(), 2);
        assert_eq!(s.history()[1].likelihood, Some(p(1, 1)));
        assert_eq!(
            s.next_suspect(),
            Err(EngineError::Closed(SessionStatus::ClosedFound))
        );
        assert_eq!(
            s.apply_verdict(2, Verdict::Clean),
            Err(EngineError::Closed(SessionStatus::ClosedFound))
        );
    }

    #[test]
    fn verdict_errors_and_inconsistency() {
        let m = from_rows(&[(&[1, 0], 1), (&[0, 1], 0)]);
        let mut s = Session::new(m, None);
        assert_eq!(s.next_suspect().unwrap(), 0);
        assert_eq!(
            s.apply_verdict(1, Verdict::Clean).unwrap(),
            SessionStatus::Open
        );
        assert_eq!(
            s.apply_verdict(1, Verdict::Clean),
            Err(EngineError::DuplicateVerdict(1))
        );
        assert!(matches!(
            s.apply_verdict(7, Verdict::Clean),
            Err(EngineError::Matrix(_))
        ));
        assert_eq!(s.next_suspect().unwrap(), 0);
        assert_eq!(
            s.apply_verdict(0, Verdict::Clean).unwrap(),
            SessionStatus::ClosedInconsistent
        );

        let single = from_rows(&[(&[1], 1)]);
        let mut s = Session::new(single, None);
        assert_eq!(s.next_suspect().unwrap(), 0);
        assert_eq!(
            s.apply_verdict(0, Verdict::Faulty).unwrap(),
            SessionStatus::ClosedFound
        );
    }

    #[test]
    fn update_bound_freezes_knowledge() {
        let m = scenario2();
        let mut s = Session::new(m, Some(0));
        assert_eq!(s.next_suspect().unwrap(), 0);
        s.apply_verdict(0, Verdict::Clean).unwrap();
        assert!(s.knowledge().units().is_empty());
        // without the update u2 stays at 1/3 and the index tie-break wins
        assert_eq!(s.next_suspect().unwrap(), 1);
        assert_eq!(s.ranking().unwrap().score_of(1), Some(&p(1, 3)));

        let mut k = KnowledgeSet::new(Some(1));
        assert!(k.insert(3));
        assert!(!k.insert(4));
        assert!(k.is_full());
    }

    #[test]
    fn passing_only_session_exhausts() {
        let m = from_rows(&[(&[1, 1], 0)]);
        let mut s = Session::new(m, None);
        s.apply_verdict(0, Verdict::Clean).unwrap();
        assert_eq!(
            s.apply_verdict(1, Verdict::Clean).unwrap(),
            SessionStatus::ClosedExhausted
        );
    }

    #[test]
    fn session_round_trips_through_json() {
        let mut s = Session::new(scenario2(), Some(20));
        s.apply_verdict(0, Verdict::Clean).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: Session = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    proptest! {
        #[test]
        fn likelihoods_are_probabilities(m in arb_matrix(6, 6)) {
            let none = BTreeSet::new();
            for i in 0..m.num_units() {
                let cl = causal_likelihood(&m, i, &none).unwrap();
                let fl = fault_likelihood(&m, i).unwrap();
                prop_assert!(cl >= Probability::zero() && cl <= Probability::one());
                prop_assert!(fl >= Probability::zero() && fl <= Probability::one());
                let in_failing = m.failing_tests().any(|k| m.covers(k, i));
                prop_assert_eq!(cl.is_zero(), !in_failing);
                if cl.is_one() {
                    prop_assert!(fl.is_one());
                }
            }
        }

        #[test]
        fn per_test_mass_sums_to_rho_over_mersenne(m in arb_matrix(6, 6)) {
            let none = BTreeSet::new();
            for k in m.failing_tests() {
                let rho = m.rho(k, &none);
                let total: Probability = (0..m.num_units())
                    .map(|i| per_test_total_cause_prob(&m, k, i, &none).unwrap())
                    .sum();
                let expected = Probability::new(rho as u64, (1u64 << rho) - 1);
                prop_assert_eq!(&total, &expected);
                prop_assert_eq!(total.is_one(), rho == 1);
            }
        }

        #[test]
        fn hide_and_seek(m in arb_matrix(6, 6)) {
            let none = BTreeSet::new();
            for k in m.failing_tests() {
                for i in 0..m.num_units() {
                    for j in 0..m.num_units() {
                        if i == j || !m.covers(k, i) || !m.covers(k, j) {
                            continue;
                        }
                        let f = BTreeSet::from([j]);
                        if check_consistent(&m, &f).is_err() {
                            continue;
                        }
                        let before = causal_likelihood(&m, i, &none).unwrap();
                        let after = causal_likelihood(&m, i, &f).unwrap();
                        prop_assert!(after > before);
                    }
                }
            }
        }

        #[test]
        fn clu_without_updates_follows_cln(m in arb_matrix(6, 6)) {
            let mut s = Session::new(m.clone(), Some(0));
            let mut order = Vec::new();
            while s.status() == SessionStatus::Open {
                let u = s.next_suspect().unwrap();
                order.push(u);
                s.apply_verdict(u, Verdict::Clean).unwrap();
            }
            prop_assert_eq!(order, localize_cln(&m).order());
        }
    }
}
