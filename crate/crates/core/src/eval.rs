//! Benchmarking localisation methods on corpora of faulty programs.
//!
//! An instance is a coverage matrix plus the units known to be faulty. A
//! method produces an inspection order; its accuracy on an instance is the
//! number of non-faulty units inspected before the first fault.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{localize_cln, EngineError, Session, SessionStatus, Verdict};
use crate::matrix::{CoverageMatrix, MatrixDocument, MatrixError};
use crate::measures::{MeasureError, MeasureId, MeasureRegistry};

pub const REPORT_SCHEMA: &str = "doric-report/1";
pub const DEFAULT_UPDATE_BOUND: usize = 20;
pub const DEFAULT_N_MAX: usize = 10;
/// Matrices drawn before the generator gives up.
pub const GENERATOR_ATTEMPTS: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("an instance needs at least one fault")]
    NoFaults,
    #[error("fault {0:?} does not name a unit")]
    UnknownFault(String),
    #[error("failing test {test:?} covers none of the faults")]
    UnexplainedFailure { test: String },
    #[error("no fault appears in the inspection order")]
    NoFaultRanked,
    #[error("knowledge became inconsistent before a fault was found")]
    Inconsistent,
    #[error("the corpus is empty")]
    EmptyCorpus,
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("no valid instance after {0} attempts")]
    GeneratorExhausted(u64),
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Load { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Config(String),
}

/// A coverage matrix with the units known to be faulty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Instance {
    pub name: String,
    pub matrix: Arc<CoverageMatrix>,
    pub faults: BTreeSet<usize>,
}

impl Instance {
    /// Builds an instance whose failing tests each cover some fault.
    pub fn new(
        name: impl Into<String>,
        matrix: impl Into<Arc<CoverageMatrix>>,
        faults: impl IntoIterator<Item = usize>,
    ) -> Result<Self, EvalError> {
        let inst = Self::lenient(name, matrix, faults)?;
        if let Some(k) = inst
            .matrix
            .failing_tests()
            .find(|&k| !inst.faults.iter().any(|&f| inst.matrix.covers(k, f)))
        {
            return Err(EvalError::UnexplainedFailure {
                test: inst.matrix.test_names()[k].clone(),
            });
        }
        Ok(inst)
    }

    /// Checks only that the faults are valid unit indices.
    pub fn lenient(
        name: impl Into<String>,
        matrix: impl Into<Arc<CoverageMatrix>>,
        faults: impl IntoIterator<Item = usize>,
    ) -> Result<Self, EvalError> {
        let matrix = matrix.into();
        let faults: BTreeSet<usize> = faults.into_iter().collect();
        if faults.is_empty() {
            return Err(EvalError::NoFaults);
        }
        for &f in &faults {
            matrix.check_unit(f)?;
        }
        Ok(Instance {
            name: name.into(),
            matrix,
            faults,
        })
    }
}

/// Non-faulty units inspected before the first fault in `order`.
pub fn accuracy(order: &[usize], faults: &BTreeSet<usize>) -> Result<usize, EvalError> {
    order
        .iter()
        .position(|u| faults.contains(u))
        .ok_or(EvalError::NoFaultRanked)
}

/// Percentage of `counts` that are at most `n`.
pub fn n_score(counts: &[usize], n: usize) -> Result<f64, EvalError> {
    if counts.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let hits = counts.iter().filter(|&&c| c <= n).count();
    Ok(100.0 * hits as f64 / counts.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub units: usize,
    pub tests: usize,
    pub coverage_density: f64,
    pub fault_count: usize,
    pub fail_prob: f64,
}

impl SyntheticParams {
    fn validate(&self) -> Result<(), EvalError> {
        if self.units == 0 || self.tests == 0 {
            return Err(EvalError::Param("units and tests must be positive".into()));
        }
        if self.fault_count == 0 || self.fault_count > self.units {
            return Err(EvalError::Param(format!(
                "fault_count must be in 1..={}, got {}",
                self.units, self.fault_count
            )));
        }
        for (name, p) in [
            ("coverage_density", self.coverage_density),
            ("fail_prob", self.fail_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(EvalError::Param(format!(
                    "{name} must lie in [0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Draws a random instance. Tests that cover a fault fail with probability
/// `fail_prob`; the rest pass. Matrices without a failing test are redrawn.
pub fn generate_synthetic(params: &SyntheticParams, seed: u64) -> Result<Instance, EvalError> {
    params.validate()?;
    // no draw can ever produce a failing test
    if params.coverage_density == 0.0 || params.fail_prob == 0.0 {
        return Err(EvalError::GeneratorExhausted(GENERATOR_ATTEMPTS));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let faults: BTreeSet<usize> = sample(&mut rng, params.units, params.fault_count)
        .into_iter()
        .collect();
    for _ in 0..GENERATOR_ATTEMPTS {
        let mut cover = Vec::with_capacity(params.tests);
        let mut error = Vec::with_capacity(params.tests);
        for _ in 0..params.tests {
            let row: Vec<bool> = (0..params.units)
                .map(|_| rng.random_bool(params.coverage_density))
                .collect();
            let hits_fault = faults.iter().any(|&f| row[f]);
            error.push(hits_fault && rng.random_bool(params.fail_prob));
            cover.push(row);
        }
        if !error.iter().any(|&e| e) {
            continue;
        }
        let matrix = CoverageMatrix::new(
            (1..=params.units).map(|i| format!("u{i}")).collect(),
            (1..=params.tests).map(|k| format!("t{k}")).collect(),
            cover,
            error,
        )?;
        return Instance::new(format!("synthetic-{seed}"), matrix, faults);
    }
    Err(EvalError::GeneratorExhausted(GENERATOR_ATTEMPTS))
}

/// A localisation method under evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Method {
    /// Causal likelihood without knowledge updates.
    Cln,
    /// Causal likelihood with clean verdicts fed back.
    Clu,
    /// A registered spectrum measure.
    Measure(String),
}

impl FromStr for Method {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "cln" | "cl" => Ok(Method::Cln),
            "clu" => Ok(Method::Clu),
            name if MeasureRegistry::standard().contains(name) => Ok(Method::Measure(name.into())),
            other => Err(EvalError::UnknownMethod(other.into())),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Cln => f.write_str("cln"),
            Method::Clu => f.write_str("clu"),
            Method::Measure(name) => f.write_str(name),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    /// Cap on the knowledge set in CL_u; `None` is unbounded.
    pub update_bound: Option<usize>,
    /// Added to every spectrum element before scoring with a measure.
    pub smoothing: f64,
    /// Largest n reported for n-scores.
    pub n_max: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            update_bound: Some(DEFAULT_UPDATE_BOUND),
            smoothing: 0.0,
            n_max: DEFAULT_N_MAX,
        }
    }
}

/// Simulates CL_u with an oracle that knows the faults, returning the units
/// inspected up to and including the first fault.
pub fn simulate_clu(
    matrix: Arc<CoverageMatrix>,
    faults: &BTreeSet<usize>,
    update_bound: Option<usize>,
) -> Result<Vec<usize>, EvalError> {
    let mut session = Session::new(matrix, update_bound);
    let mut inspected = Vec::new();
    loop {
        let unit = match session.next_suspect() {
            Ok(u) => u,
            Err(EngineError::Exhausted) => return Err(EvalError::NoFaultRanked),
            Err(e) => return Err(e.into()),
        };
        inspected.push(unit);
        let verdict = if faults.contains(&unit) {
            Verdict::Faulty
        } else {
            Verdict::Clean
        };
        match session.apply_verdict(unit, verdict)? {
            SessionStatus::Open => {}
            SessionStatus::ClosedFound => return Ok(inspected),
            SessionStatus::ClosedExhausted => return Err(EvalError::NoFaultRanked),
            SessionStatus::ClosedInconsistent => return Err(EvalError::Inconsistent),
        }
    }
}

/// The order in which `method` has units inspected on `inst`.
pub fn inspection_order(
    method: &Method,
    inst: &Instance,
    settings: &Settings,
) -> Result<Vec<usize>, EvalError> {
    match method {
        Method::Cln => Ok(localize_cln(&inst.matrix).order()),
        Method::Clu => simulate_clu(inst.matrix.clone(), &inst.faults, settings.update_bound),
        Method::Measure(name) => {
            let id = MeasureId::new(name.clone()).with_smoothing(settings.smoothing);
            Ok(MeasureRegistry::standard().rank(&inst.matrix, &id)?.order())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub method: String,
    pub instance: String,
    pub accuracy: Option<usize>,
    /// Why the instance was skipped, when it was.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NScore {
    pub n: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub evaluated: usize,
    pub skipped: usize,
    pub mean_accuracy: Option<f64>,
    pub n_scores: Vec<NScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusInfo {
    pub source: String,
    pub instances: usize,
    pub seed: Option<u64>,
    pub params: Option<SyntheticParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub corpus: CorpusInfo,
    pub settings: Settings,
    pub methods: Vec<MethodSummary>,
    pub results: Vec<InstanceResult>,
}

impl EvalReport {
    pub fn summary(&self, method: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    /// One row per (method, instance).
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "instance", "accuracy", "error"])
            .expect("in-memory write");
        for r in &self.results {
            let acc = r.accuracy.map(|a| a.to_string()).unwrap_or_default();
            w.write_record([
                r.method.as_str(),
                r.instance.as_str(),
                acc.as_str(),
                r.error.as_deref().unwrap_or(""),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }
}

/// Evaluates every method on every instance. Instances run in parallel; the
/// report does not depend on the number of workers.
pub fn run_benchmark(
    corpus: &[Instance],
    methods: &[Method],
    settings: &Settings,
    info: CorpusInfo,
) -> Result<EvalReport, EvalError> {
    if corpus.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let per_instance: Vec<Vec<InstanceResult>> = corpus
        .par_iter()
        .map(|inst| {
            methods
                .iter()
                .map(|method| {
                    let outcome = inspection_order(method, inst, settings)
                        .and_then(|order| accuracy(&order, &inst.faults));
                    InstanceResult {
                        method: method.to_string(),
                        instance: inst.name.clone(),
                        accuracy: outcome.as_ref().ok().copied(),
                        error: outcome.err().map(|e| e.to_string()),
                    }
                })
                .collect()
        })
        .collect();

    let results: Vec<InstanceResult> = methods
        .iter()
        .enumerate()
        .flat_map(|(j, _)| per_instance.iter().map(move |row| row[j].clone()))
        .collect();

    let summaries = methods
        .iter()
        .map(|method| {
            let name = method.to_string();
            let counts: Vec<usize> = results
                .iter()
                .filter(|r| r.method == name)
                .filter_map(|r| r.accuracy)
                .collect();
            let mean = (!counts.is_empty())
                .then(|| counts.iter().sum::<usize>() as f64 / counts.len() as f64);
            let n_scores = if counts.is_empty() {
                Vec::new()
            } else {
                (0..=settings.n_max)
                    .map(|n| NScore {
                        n,
                        percent: n_score(&counts, n).expect("counts are non-empty"),
                    })
                    .collect()
            };
            MethodSummary {
                method: name,
                evaluated: counts.len(),
                skipped: corpus.len() - counts.len(),
                mean_accuracy: mean,
                n_scores,
            }
        })
        .collect();

    Ok(EvalReport {
        schema: REPORT_SCHEMA.into(),
        corpus: info,
        settings: *settings,
        methods: summaries,
        results,
    })
}

/// A seeded synthetic corpus: instance `i` is drawn with seed `seed + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    #[serde(flatten)]
    pub params: SyntheticParams,
    pub count: usize,
    pub seed: u64,
}

impl SyntheticCorpus {
    pub fn generate(&self) -> Result<Vec<Instance>, EvalError> {
        (0..self.count)
            .map(|i| generate_synthetic(&self.params, self.seed.wrapping_add(i as u64)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusSpec {
    Dir(PathBuf),
    Synthetic(SyntheticCorpus),
}

fn default_update_bound() -> Option<usize> {
    Some(DEFAULT_UPDATE_BOUND)
}

fn default_n_max() -> usize {
    DEFAULT_N_MAX
}

/// Benchmark configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub corpus: CorpusSpec,
    pub methods: Vec<Method>,
    #[serde(default = "default_update_bound")]
    pub update_bound: Option<usize>,
    #[serde(default)]
    pub smoothing: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
}

impl BenchConfig {
    pub fn from_json_str(text: &str) -> Result<Self, EvalError> {
        let config: BenchConfig =
            serde_json::from_str(text).map_err(|e| EvalError::Config(e.to_string()))?;
        if config.methods.is_empty() {
            return Err(EvalError::Config("no methods given".into()));
        }
        if !(config.smoothing.is_finite() && config.smoothing >= 0.0) {
            return Err(EvalError::Config("smoothing must be non-negative".into()));
        }
        Ok(config)
    }

    pub fn settings(&self) -> Settings {
        Settings {
            update_bound: self.update_bound,
            smoothing: self.smoothing,
            n_max: self.n_max,
        }
    }

    /// Loads or generates the corpus. Relative directories resolve against `base`.
    pub fn corpus(&self, base: &Path) -> Result<(Vec<Instance>, CorpusInfo), EvalError> {
        match &self.corpus {
            CorpusSpec::Dir(dir) => {
                let dir = base.join(dir);
                let instances = load_corpus_dir(&dir)?;
                let info = CorpusInfo {
                    source: dir.display().to_string(),
                    instances: instances.len(),
                    seed: None,
                    params: None,
                };
                Ok((instances, info))
            }
            CorpusSpec::Synthetic(s) => {
                let instances = s.generate()?;
                let info = CorpusInfo {
                    source: "synthetic".into(),
                    instances: instances.len(),
                    seed: Some(s.seed),
                    params: Some(s.params),
                };
                Ok((instances, info))
            }
        }
    }

    pub fn run(&self, base: &Path) -> Result<EvalReport, EvalError> {
        let (instances, info) = self.corpus(base)?;
        run_benchmark(&instances, &self.methods, &self.settings(), info)
    }
}

#[derive(Deserialize)]
struct InstanceFile {
    name: Option<String>,
    matrix: MatrixDocument,
    faults: Vec<String>,
}

fn resolve_faults<'a>(
    m: &CoverageMatrix,
    names: impl IntoIterator<Item = &'a str>,
) -> Result<Vec<usize>, EvalError> {
    names
        .into_iter()
        .map(|n| {
            m.resolve_unit(n)
                .ok_or_else(|| EvalError::UnknownFault(n.into()))
        })
        .collect()
}

/// Parses a comma-, space- or newline-separated list of unit names.
pub fn parse_fault_list(m: &CoverageMatrix, text: &str) -> Result<BTreeSet<usize>, EvalError> {
    let names = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty());
    Ok(resolve_faults(m, names)?.into_iter().collect())
}

/// Reads a corpus directory. Each instance is either `NAME.json` holding
/// `{"matrix": ..., "faults": [...]}`, or `NAME.csv` with the faults listed
/// in `NAME.faults`. Instances are sorted by file name.
pub fn load_corpus_dir(dir: &Path) -> Result<Vec<Instance>, EvalError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| EvalError::Io { path, source }
    };
    let load = |path: &Path, e: &dyn fmt::Display| EvalError::Load {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io(dir))?
        .map(|e| e.map(|e| e.path()).map_err(io(dir)))
        .collect::<Result<_, _>>()?;
    paths.sort();

    let mut out = Vec::new();
    for path in paths {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => {
                let text = std::fs::read_to_string(&path).map_err(io(&path))?;
                let file: InstanceFile =
                    serde_json::from_str(&text).map_err(|e| load(&path, &e))?;
                let matrix = CoverageMatrix::try_from(file.matrix).map_err(|e| load(&path, &e))?;
                let faults = resolve_faults(&matrix, file.faults.iter().map(String::as_str))
                    .map_err(|e| load(&path, &e))?;
                let inst = Instance::lenient(file.name.unwrap_or(stem), matrix, faults)
                    .map_err(|e| load(&path, &e))?;
                out.push(inst);
            }
            Some("csv") => {
                let text = std::fs::read_to_string(&path).map_err(io(&path))?;
                let matrix = CoverageMatrix::from_csv(&text).map_err(|e| load(&path, &e))?;
                let fpath = path.with_extension("faults");
                let ftext = std::fs::read_to_string(&fpath).map_err(io(&fpath))?;
                let faults = parse_fault_list(&matrix, &ftext).map_err(|e| load(&fpath, &e))?;
                out.push(Instance::lenient(stem, matrix, faults).map_err(|e| load(&path, &e))?);
            }
            _ => {}
        }
    }
    if out.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::fixtures::{from_rows, minmax};
    use proptest::prelude::*;

    fn set(units: &[usize]) -> BTreeSet<usize> {
        units.iter().copied().collect()
    }

    fn params() -> SyntheticParams {
        SyntheticParams {
            units: 30,
            tests: 40,
            coverage_density: 0.3,
            fault_count: 4,
            fail_prob: 0.8,
        }
    }

    #[test]
    fn accuracy_on_running_example() {
        let inst = Instance::new("minmax", minmax(), [2]).unwrap();
        let s = Settings::default();
        let acc =
            |m: Method| accuracy(&inspection_order(&m, &inst, &s).unwrap(), &inst.faults).unwrap();
        assert_eq!(acc(Method::Cln), 0);
        assert_eq!(acc(Method::Clu), 0);
        assert_eq!(acc(Method::Measure("wong2".into())), 0);
        assert_eq!(acc(Method::Measure("constant".into())), 2);

        let all = Instance::new("all", minmax(), 0..4).unwrap();
        for m in [Method::Cln, Method::Clu, Method::Measure("ochiai".into())] {
            assert_eq!(
                accuracy(&inspection_order(&m, &all, &s).unwrap(), &all.faults).unwrap(),
                0
            );
        }
        assert!(matches!(
            accuracy(&[0, 1], &set(&[3])),
            Err(EvalError::NoFaultRanked)
        ));
    }

    #[test]
    fn n_score_values() {
        let v = n_score(&[0, 2, 7], 6).unwrap();
        assert!((v - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(n_score(&[0, 2, 7], 7).unwrap(), 100.0);
        assert_eq!(n_score(&[1], 0).unwrap(), 0.0);
        assert!(matches!(n_score(&[], 3), Err(EvalError::EmptyCorpus)));
    }

    #[test]
    fn instance_validation() {
        assert!(matches!(
            Instance::new("x", minmax(), []),
            Err(EvalError::NoFaults)
        ));
        assert!(matches!(
            Instance::new("x", minmax(), [7]),
            Err(EvalError::Matrix(_))
        ));
        // u1 runs in no failing test
        assert!(matches!(
            Instance::new("x", minmax(), [0]),
            Err(EvalError::UnexplainedFailure { .. })
        ));
        assert!(Instance::lenient("x", minmax(), [0]).is_ok());
    }

    #[test]
    fn generator_postconditions() {
        let inst = generate_synthetic(&params(), 7).unwrap();
        assert_eq!(inst.faults.len(), 4);
        assert!(inst.matrix.num_failing() > 0);
        for k in inst.matrix.failing_tests() {
            assert!(inst.faults.iter().any(|&f| inst.matrix.covers(k, f)));
        }
        assert_eq!(generate_synthetic(&params(), 7).unwrap(), inst);
        assert_ne!(generate_synthetic(&params(), 8).unwrap(), inst);

        let small = SyntheticParams {
            units: 4,
            tests: 5,
            coverage_density: 0.5,
            fault_count: 4,
            fail_prob: 1.0,
        };
        let inst = generate_synthetic(&small, 3).unwrap();
        for k in 0..5 {
            let covers_fault = inst.matrix.row(k).iter().any(|&c| c);
            assert_eq!(inst.matrix.fails(k), covers_fault);
        }
    }

    #[test]
    fn generator_rejects_bad_parameters() {
        let bad = [
            SyntheticParams {
                fault_count: 0,
                ..params()
            },
            SyntheticParams {
                fault_count: 31,
                ..params()
            },
            SyntheticParams {
                fail_prob: 1.5,
                ..params()
            },
            SyntheticParams {
                coverage_density: -0.1,
                ..params()
            },
            SyntheticParams {
                units: 0,
                ..params()
            },
        ];
        for p in bad {
            assert!(
                matches!(generate_synthetic(&p, 1), Err(EvalError::Param(_))),
                "{p:?}"
            );
        }
        let never = SyntheticParams {
            fail_prob: 0.0,
            ..params()
        };
        assert!(matches!(
            generate_synthetic(&never, 1),
            Err(EvalError::GeneratorExhausted(_))
        ));
    }

    #[test]
    fn benchmark_on_running_example() {
        let corpus = vec![Instance::new("minmax", minmax(), [2]).unwrap()];
        let methods = [Method::Cln, Method::Measure("wong2".into())];
        let info = CorpusInfo {
            source: "test".into(),
            instances: 1,
            seed: None,
            params: None,
        };
        let report = run_benchmark(&corpus, &methods, &Settings::default(), info).unwrap();
        assert_eq!(report.schema, REPORT_SCHEMA);
        for m in &report.methods {
            assert_eq!(m.mean_accuracy, Some(0.0));
            assert_eq!(m.n_scores.len(), DEFAULT_N_MAX + 1);
            assert!(m.n_scores.iter().all(|s| s.percent == 100.0));
        }
        let csv = report.to_csv();
        assert_eq!(
            csv,
            "method,instance,accuracy,error\ncln,minmax,0,\nwong2,minmax,0,\n"
        );
        let back: EvalReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn inconsistent_instances_are_skipped() {
        // the only fault never runs, so clearing u1 leaves t1 without a cause
        let m = from_rows(&[(&[1, 0], 1), (&[0, 1], 0)]);
        let corpus = vec![Instance::lenient("odd", m, [1]).unwrap()];
        let info = CorpusInfo {
            source: "test".into(),
            instances: 1,
            seed: None,
            params: None,
        };
        let report = run_benchmark(&corpus, &[Method::Clu], &Settings::default(), info).unwrap();
        let s = report.summary("clu").unwrap();
        assert_eq!((s.evaluated, s.skipped, s.mean_accuracy), (0, 1, None));
        assert!(report.results[0]
            .error
            .as_deref()
            .unwrap()
            .contains("inconsistent"));
        assert!(s.n_scores.is_empty());
    }

    #[test]
    fn constant_measure_finds_lowest_fault_index() {
        let corpus: Vec<Instance> = (0..10)
            .map(|s| generate_synthetic(&params(), s).unwrap())
            .collect();
        let info = CorpusInfo {
            source: "test".into(),
            instances: 10,
            seed: Some(0),
            params: Some(params()),
        };
        let report = run_benchmark(
            &corpus,
            &[Method::Measure("constant".into())],
            &Settings::default(),
            info,
        )
        .unwrap();
        for (r, inst) in report.results.iter().zip(&corpus) {
            assert_eq!(r.accuracy, inst.faults.first().copied());
        }
    }

    #[test]
    fn benchmark_is_deterministic_across_thread_counts() {
        let corpus = SyntheticCorpus {
            params: params(),
            count: 12,
            seed: 5,
        }
        .generate()
        .unwrap();
        let methods: Vec<Method> = ["cln", "clu", "ochiai", "gp05"]
            .iter()
            .map(|m| m.parse().unwrap())
            .collect();
        let info = CorpusInfo {
            source: "synthetic".into(),
            instances: 12,
            seed: Some(5),
            params: Some(params()),
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    run_benchmark(&corpus, &methods, &Settings::default(), info.clone()).unwrap()
                })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn config_parsing() {
        let c = BenchConfig::from_json_str(
            r#"{"corpus": {"synthetic": {"units": 5, "tests": 6, "coverage_density": 0.5,
                "fault_count": 1, "fail_prob": 1.0, "count": 3, "seed": 9}},
                "methods": ["cln", "clu", "ochiai"]}"#,
        )
        .unwrap();
        assert_eq!(c.settings(), Settings::default());
        assert_eq!(
            c.methods,
            vec![Method::Cln, Method::Clu, Method::Measure("ochiai".into())]
        );
        let report = c.run(Path::new(".")).unwrap();
        assert_eq!(report.corpus.instances, 3);
        assert_eq!(report.results.len(), 9);

        let c = BenchConfig::from_json_str(
            r#"{"corpus": {"dir": "x"}, "methods": ["clu"], "update_bound": null, "n_max": 3}"#,
        )
        .unwrap();
        assert_eq!(c.update_bound, None);
        assert_eq!(c.corpus, CorpusSpec::Dir("x".into()));
        assert!(
            BenchConfig::from_json_str(r#"{"corpus": {"dir": "x"}, "methods": ["nope"]}"#).is_err()
        );
        assert!(BenchConfig::from_json_str(r#"{"corpus": {"dir": "x"}, "methods": []}"#).is_err());
    }

    #[test]
    fn corpus_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), minmax().to_csv()).unwrap();
        std::fs::write(dir.path().join("a.faults"), "u3\n").unwrap();
        let doc = serde_json::json!({"matrix": minmax().to_document(), "faults": ["u2", "u4"]});
        std::fs::write(dir.path().join("b.json"), doc.to_string()).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let corpus = load_corpus_dir(dir.path()).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(
            (corpus[0].name.as_str(), &corpus[0].faults),
            ("a", &set(&[2]))
        );
        assert_eq!(
            (corpus[1].name.as_str(), &corpus[1].faults),
            ("b", &set(&[1, 3]))
        );

        std::fs::write(dir.path().join("c.json"), r#"{"matrix": {}, "faults": []}"#).unwrap();
        assert!(matches!(
            load_corpus_dir(dir.path()),
            Err(EvalError::Load { .. })
        ));
        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_corpus_dir(empty.path()),
            Err(EvalError::EmptyCorpus)
        ));
    }

    proptest! {
        #[test]
        fn n_score_is_monotone(counts in proptest::collection::vec(0usize..20, 1..30)) {
            let mut last = 0.0;
            for n in 0..25 {
                let s = n_score(&counts, n).unwrap();
                prop_assert!((0.0..=100.0).contains(&s));
                prop_assert!(s >= last);
                last = s;
            }
            prop_assert_eq!(n_score(&counts, *counts.iter().max().unwrap()).unwrap(), 100.0);
        }

        #[test]
        fn clu_never_revisits(seed in 0u64..200, bound in proptest::option::of(0usize..5)) {
            let p = SyntheticParams { units: 8, tests: 10, coverage_density: 0.4, fault_count: 2, fail_prob: 0.7 };
            let inst = generate_synthetic(&p, seed).unwrap();
            let seq = simulate_clu(inst.matrix.clone(), &inst.faults, bound).unwrap();
            let unique: BTreeSet<usize> = seq.iter().copied().collect();
            prop_assert_eq!(unique.len(), seq.len());
            prop_assert!(accuracy(&seq, &inst.faults).unwrap() < inst.matrix.num_units());
        }
    }
}
