use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::formula::{Formula, Query};
use super::OracleError;
use crate::matrix::CoverageMatrix;
use crate::probability::Probability;

/// Largest model space [`ModelSpace::evaluator`] will materialize.
pub const MATERIALIZE_CAP: u64 = 1 << 20;

/// Relative likelihood of a model, as a product of per-test factors.
pub trait ModelWeight: Send + Sync {
    /// Factor for test `test` choosing `causes` (empty for passing tests).
    /// Must be positive.
    fn row_weight(&self, test: usize, causes: &[usize]) -> BigRational;

    fn is_uniform(&self) -> bool {
        false
    }
}

/// Every model equally likely.
#[derive(Debug, Clone, Copy, Default)]
pub struct Uniform;

impl ModelWeight for Uniform {
    fn row_weight(&self, _: usize, _: &[usize]) -> BigRational {
        BigRational::one()
    }

    fn is_uniform(&self) -> bool {
        true
    }
}

/// The admissible rows of one test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowDomain {
    /// A passing test: the coverage row itself, with no causes.
    Fixed,
    /// A failing test: any non-empty subset of these executed units.
    Causes(Vec<usize>),
}

impl RowDomain {
    pub fn size(&self) -> BigUint {
        match self {
            RowDomain::Fixed => BigUint::one(),
            RowDomain::Causes(c) => (BigUint::one() << c.len()) - 1u32,
        }
    }
}

/// One causal model: the causes chosen for every test.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Model {
    causes: Vec<Vec<usize>>,
}

impl Model {
    pub fn causes(&self, test: usize) -> &[usize] {
        &self.causes[test]
    }

    pub fn is_cause(&self, test: usize, unit: usize) -> bool {
        self.causes[test].contains(&unit)
    }
}

/// The causal models of a coverage matrix, as a product of per-test domains.
#[derive(Clone)]
pub struct ModelSpace {
    matrix: Arc<CoverageMatrix>,
    rows: Vec<RowDomain>,
    count: BigUint,
    weight: Arc<dyn ModelWeight>,
}

impl fmt::Debug for ModelSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpace")
            .field("rows", &self.rows)
            .field("count", &self.count)
            .field("uniform", &self.weight.is_uniform())
            .finish()
    }
}

/// Builds the model space of `m` under the uniform weight.
pub fn enumerate_models(m: impl Into<Arc<CoverageMatrix>>) -> Result<ModelSpace, OracleError> {
    let matrix = m.into();
    let mut rows = Vec::with_capacity(matrix.num_tests());
    for k in 0..matrix.num_tests() {
        if !matrix.fails(k) {
            rows.push(RowDomain::Fixed);
            continue;
        }
        let candidates: Vec<usize> = (0..matrix.num_units())
            .filter(|&i| matrix.covers(k, i))
            .collect();
        if candidates.is_empty() {
            return Err(OracleError::NoModels {
                test: matrix.test_names()[k].clone(),
            });
        }
        rows.push(RowDomain::Causes(candidates));
    }
    let count = rows.iter().map(RowDomain::size).product();
    Ok(ModelSpace {
        matrix,
        rows,
        count,
        weight: Arc::new(Uniform),
    })
}

impl ModelSpace {
    pub fn matrix(&self) -> &CoverageMatrix {
        &self.matrix
    }

    pub fn count(&self) -> &BigUint {
        &self.count
    }

    pub fn rows(&self) -> &[RowDomain] {
        &self.rows
    }

    pub fn with_weight(mut self, weight: Arc<dyn ModelWeight>) -> Self {
        self.weight = weight;
        self
    }

    /// Lazily iterates every model. Fails only if some row is too wide to index.
    pub fn models(&self) -> Result<impl Iterator<Item = Model> + '_, OracleError> {
        if self
            .rows
            .iter()
            .any(|r| matches!(r, RowDomain::Causes(c) if c.len() > 63))
        {
            return Err(self.cap_exceeded());
        }
        let mut masks: Vec<u64> = self
            .rows
            .iter()
            .map(|r| match r {
                RowDomain::Fixed => 0,
                RowDomain::Causes(_) => 1,
            })
            .collect();
        let mut done = false;
        Ok(std::iter::from_fn(move || {
            if done {
                return None;
            }
            let model = Model {
                causes: self
                    .rows
                    .iter()
                    .zip(&masks)
                    .map(|(r, &mask)| decode(r, mask))
                    .collect(),
            };
            // odometer over the failing rows, last test fastest
            done = true;
            for (r, mask) in self.rows.iter().zip(masks.iter_mut()).rev() {
                if let RowDomain::Causes(c) = r {
                    if *mask + 1 < (1u64 << c.len()) {
                        *mask += 1;
                        done = false;
                        break;
                    }
                    *mask = 1;
                }
            }
            Some(model)
        }))
    }

    fn cap_exceeded(&self) -> OracleError {
        OracleError::CapExceeded {
            count: self.count.to_string(),
            cap: MATERIALIZE_CAP,
        }
    }

    /// Materializes the space for set-based valuation.
    pub fn evaluator(&self) -> Result<Evaluator<'_>, OracleError> {
        let n = self
            .count
            .to_u64()
            .filter(|&n| n <= MATERIALIZE_CAP)
            .ok_or_else(|| self.cap_exceeded())? as usize;

        // mixed-radix layout: a model index encodes (mask - 1) per failing row,
        // last test least significant, matching `models()` order
        let mut strides = vec![0usize; self.rows.len()];
        let mut stride = 1usize;
        for (k, r) in self.rows.iter().enumerate().rev() {
            if let RowDomain::Causes(c) = r {
                strides[k] = stride;
                stride *= (1usize << c.len()) - 1;
            }
        }

        let mut cause_sets = vec![HashMap::new(); self.rows.len()];
        for (k, r) in self.rows.iter().enumerate() {
            let RowDomain::Causes(c) = r else { continue };
            let radix = (1usize << c.len()) - 1;
            for (bit, &unit) in c.iter().enumerate() {
                let mut set = FixedBitSet::with_capacity(n);
                for idx in 0..n {
                    let mask = (idx / strides[k]) % radix + 1;
                    if mask >> bit & 1 == 1 {
                        set.insert(idx);
                    }
                }
                cause_sets[k].insert(unit, set);
            }
        }

        let weights = if self.weight.is_uniform() {
            None
        } else {
            Some(self.model_weights(n, &strides)?)
        };
        let total = match &weights {
            None => BigRational::from_integer(n.into()),
            Some(w) => w.iter().sum(),
        };
        Ok(Evaluator {
            space: self,
            n,
            strides,
            cause_sets,
            weights,
            total,
        })
    }

    fn model_weights(&self, n: usize, strides: &[usize]) -> Result<Vec<BigRational>, OracleError> {
        let mut row_weights = Vec::with_capacity(self.rows.len());
        for (k, r) in self.rows.iter().enumerate() {
            let choices: Vec<u64> = match r {
                RowDomain::Fixed => vec![0],
                RowDomain::Causes(c) => (1..(1u64 << c.len())).collect(),
            };
            let ws = choices
                .into_iter()
                .map(|mask| {
                    let w = self.weight.row_weight(k, &decode(r, mask));
                    if w.is_positive() {
                        Ok(w)
                    } else {
                        Err(OracleError::NonPositiveWeight)
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            row_weights.push(ws);
        }
        Ok((0..n)
            .map(|idx| {
                self.rows
                    .iter()
                    .enumerate()
                    .map(|(k, r)| match r {
                        RowDomain::Fixed => row_weights[k][0].clone(),
                        RowDomain::Causes(c) => {
                            let radix = (1usize << c.len()) - 1;
                            row_weights[k][(idx / strides[k]) % radix].clone()
                        }
                    })
                    .product()
            })
            .collect())
    }
}

fn decode(row: &RowDomain, mask: u64) -> Vec<usize> {
    match row {
        RowDomain::Fixed => Vec::new(),
        RowDomain::Causes(c) => c
            .iter()
            .enumerate()
            .filter(|&(bit, _)| mask >> bit & 1 == 1)
            .map(|(_, &u)| u)
            .collect(),
    }
}

/// The models where a formula holds at some test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Valuation {
    set: FixedBitSet,
}

impl Valuation {
    pub fn count(&self) -> usize {
        self.set.count_ones(..)
    }

    /// Whether the model with this index belongs to the set.
    pub fn contains(&self, model: usize) -> bool {
        self.set.contains(model)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.set.ones()
    }

    pub fn is_disjoint(&self, other: &Valuation) -> bool {
        self.set.is_disjoint(&other.set)
    }

    pub fn union(&self, other: &Valuation) -> Valuation {
        let mut set = self.set.clone();
        set.union_with(&other.set);
        Valuation { set }
    }
}

/// A materialized model space valuing formulas as model sets.
pub struct Evaluator<'a> {
    space: &'a ModelSpace,
    n: usize,
    strides: Vec<usize>,
    cause_sets: Vec<HashMap<usize, FixedBitSet>>,
    weights: Option<Vec<BigRational>>,
    total: BigRational,
}

impl Evaluator<'_> {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn model(&self, idx: usize) -> Model {
        Model {
            causes: self
                .space
                .rows
                .iter()
                .enumerate()
                .map(|(k, r)| match r {
                    RowDomain::Fixed => Vec::new(),
                    RowDomain::Causes(c) => {
                        let radix = (1usize << c.len()) - 1;
                        decode(r, ((idx / self.strides[k]) % radix + 1) as u64)
                    }
                })
                .collect(),
        }
    }

    fn full(&self) -> FixedBitSet {
        let mut s = FixedBitSet::with_capacity(self.n);
        s.insert_range(..);
        s
    }

    fn set(&self, k: usize, phi: &Formula) -> FixedBitSet {
        let m = self.space.matrix();
        let all_if = |b: bool| {
            if b {
                self.full()
            } else {
                FixedBitSet::with_capacity(self.n)
            }
        };
        match phi {
            Formula::True => self.full(),
            Formula::False => FixedBitSet::with_capacity(self.n),
            Formula::Executed(i) => all_if(m.covers(k, *i)),
            Formula::Error => all_if(m.fails(k)),
            Formula::Cause(i) => self.cause_sets[k]
                .get(i)
                .cloned()
                .unwrap_or_else(|| FixedBitSet::with_capacity(self.n)),
            Formula::Not(f) => {
                let mut s = self.set(k, f);
                s.toggle_range(..);
                s
            }
            Formula::And(a, b) => {
                let mut s = self.set(k, a);
                s.intersect_with(&self.set(k, b));
                s
            }
            Formula::At(n, f) => self.set(*n, f),
        }
    }

    fn check(&self, k: usize, phi: &Formula) -> Result<(), OracleError> {
        let m = self.space.matrix();
        m.check_test(k).map_err(|_| OracleError::IndexOutOfRange {
            what: format!("test {}", k + 1),
            position: None,
        })?;
        phi.check(m.num_units(), m.num_tests())
    }

    /// The models where `phi` holds at test `k`.
    pub fn valuate(&self, k: usize, phi: &Formula) -> Result<Valuation, OracleError> {
        self.check(k, phi)?;
        Ok(Valuation {
            set: self.set(k, phi),
        })
    }

    /// Total weight of a model set.
    pub fn weight(&self, v: &Valuation) -> BigRational {
        match &self.weights {
            None => BigRational::from_integer(v.count().into()),
            Some(w) => v.indices().map(|i| &w[i]).sum(),
        }
    }

    pub fn total_weight(&self) -> &BigRational {
        &self.total
    }

    /// Probability that `phi` holds at test `k`.
    pub fn probability_at(&self, k: usize, phi: &Formula) -> Result<Probability, OracleError> {
        let v = self.valuate(k, phi)?;
        Ok(Probability::from_rational(self.weight(&v) / &self.total))
    }

    /// Probability of `phi` averaged over all tests.
    pub fn probability(&self, phi: &Formula) -> Result<Probability, OracleError> {
        let tests = self.space.matrix().num_tests();
        let mut sum = BigRational::zero();
        for k in 0..tests {
            sum += self.probability_at(k, phi)?.into_rational();
        }
        Ok(Probability::from_rational(
            sum / BigRational::from_integer(tests.into()),
        ))
    }

    /// `P(phi & psi) / P(psi)`.
    pub fn conditional(&self, phi: &Formula, psi: &Formula) -> Result<Probability, OracleError> {
        let given = self.probability(psi)?;
        if given.is_zero() {
            return Err(OracleError::ConditionOnNull);
        }
        let joint = self.probability(&phi.clone().and(psi.clone()))?;
        Ok(joint / given)
    }

    pub fn query(&self, q: &Query) -> Result<Probability, OracleError> {
        match q {
            Query::Expected(f) => self.probability(f),
            Query::AtTest(k, f) => self.probability_at(*k, f),
            Query::Conditional(f, g) => self.conditional(f, g),
        }
    }
}
