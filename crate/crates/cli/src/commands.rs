use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use doric_core::engine::{causal_likelihoods, EngineError, Session, SessionStatus, Verdict};
use doric_core::eval::{BenchConfig, EvalReport, Method};
use doric_core::matrix::CoverageMatrix;
use doric_core::measures::{parse_smoothing, MeasureId, MeasureRegistry};
use doric_core::oracle::{enumerate_models, parse_query, OracleError};
use doric_core::probability::Probability;
use doric_core::ranking::Ranking;
use serde_json::{json, Value};

pub const EXIT_IO: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_CAP: u8 = 4;
pub const EXIT_INCONSISTENT: u8 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        CliError::new(EXIT_USAGE, message)
    }

    fn input(message: impl ToString) -> Self {
        CliError::new(EXIT_INPUT, message.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(EXIT_IO, e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::InconsistentKnowledge { .. } => {
                CliError::new(EXIT_INCONSISTENT, e.to_string())
            }
            other => CliError::input(other),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn load_matrix(path: &Path) -> Result<CoverageMatrix> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().and_then(|e| e.to_str()) == Some("json") {
        CoverageMatrix::from_json_str(&text)
    } else {
        CoverageMatrix::from_csv(&text)
    };
    parsed.map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn resolve_units(m: &CoverageMatrix, names: &[String]) -> Result<BTreeSet<usize>> {
    names
        .iter()
        .map(|n| {
            m.resolve_unit(n.trim())
                .ok_or_else(|| CliError::input(format!("unknown unit {n:?}")))
        })
        .collect()
}

fn smoothing_arg(smoothing: Option<&str>) -> Result<f64> {
    smoothing
        .map(|s| parse_smoothing(s).map_err(|e| CliError::usage(e.to_string())))
        .transpose()
        .map(|s| s.unwrap_or(0.0))
}

fn parse_method(name: &str) -> Result<Method> {
    name.parse()
        .map_err(|e: doric_core::eval::EvalError| CliError::usage(e.to_string()))
}

fn name_width(m: &CoverageMatrix) -> usize {
    m.unit_names()
        .iter()
        .map(|n| n.len())
        .max()
        .unwrap_or(4)
        .max(4)
}

fn format_f64(v: f64) -> String {
    if v == 0.0 {
        // avoid printing -0
        "0".into()
    } else {
        v.to_string()
    }
}

/// A unit's score in a ranking: exact for causal likelihoods, real for measures.
#[derive(Debug, Clone)]
enum Shown {
    Exact(Probability),
    Real { value: f64, degenerate: bool },
}

impl Shown {
    fn text(&self) -> String {
        match self {
            Shown::Exact(p) => p.to_decimal(),
            Shown::Real { value, degenerate } => {
                let v = format_f64(*value);
                if *degenerate {
                    format!("{v} (degenerate)")
                } else {
                    v
                }
            }
        }
    }

    fn json(&self) -> Value {
        match self {
            Shown::Exact(p) => json!({
                "decimal": p.to_decimal(),
                "numerator": p.numer().to_string(),
                "denominator": p.denom().to_string(),
            }),
            Shown::Real { value, degenerate } => json!({"value": value, "degenerate": degenerate}),
        }
    }
}

fn write_json(out: &mut impl Write, v: &Value) -> Result<()> {
    writeln!(
        out,
        "{}",
        serde_json::to_string_pretty(v).expect("values serialize")
    )?;
    Ok(())
}

/// Scores for every unit outside `known`, ranked.
fn scored_ranking(
    m: &CoverageMatrix,
    measure: &str,
    smoothing: Option<&str>,
    known: &BTreeSet<usize>,
) -> Result<Vec<(usize, Shown)>> {
    if measure == "cl" || measure == "cln" {
        if smoothing.is_some() {
            return Err(CliError::usage(
                "--smoothing applies to spectrum measures only",
            ));
        }
        let scores = causal_likelihoods(m, known)?;
        let ranking = Ranking::from_scored(
            scores
                .into_iter()
                .enumerate()
                .filter_map(|(i, s)| s.map(|s| (i, s))),
        );
        return Ok(ranking
            .into_entries()
            .into_iter()
            .map(|e| (e.unit, Shown::Exact(e.score)))
            .collect());
    }
    let reg = MeasureRegistry::standard();
    if !reg.contains(measure) {
        let names: Vec<&str> = reg.names().collect();
        return Err(CliError::usage(format!(
            "unknown measure {measure:?}; expected cl or one of {}",
            names.join(", ")
        )));
    }
    let id = MeasureId::new(measure).with_smoothing(smoothing_arg(smoothing)?);
    let scores = reg
        .score_all(m, &id)
        .map_err(|e| CliError::usage(e.to_string()))?;
    let ranking = Ranking::from_scored(
        scores
            .iter()
            .enumerate()
            .filter(|(i, _)| !known.contains(i))
            .map(|(i, s)| (i, s.value)),
    );
    Ok(ranking
        .entries()
        .iter()
        .map(|e| {
            let s = scores[e.unit];
            (
                e.unit,
                Shown::Real {
                    value: s.value,
                    degenerate: s.degenerate,
                },
            )
        })
        .collect())
}

pub fn rank(
    out: &mut impl Write,
    path: &Path,
    measure: &str,
    smoothing: Option<&str>,
    not_faulty: &[String],
    json: bool,
) -> Result<()> {
    let m = load_matrix(path)?;
    let known = resolve_units(&m, not_faulty)?;
    let rows = scored_ranking(&m, measure, smoothing, &known)?;
    if json {
        let ranking: Vec<Value> = rows
            .iter()
            .enumerate()
            .map(|(pos, (u, s))| json!({"rank": pos + 1, "unit": m.unit_name(*u), "score": s.json()}))
            .collect();
        let known: Vec<&str> = known.iter().map(|&u| m.unit_name(u)).collect();
        return write_json(
            out,
            &json!({"measure": measure, "not_faulty": known, "ranking": ranking}),
        );
    }
    let w = name_width(&m);
    writeln!(out, "rank  {:<w$}  score", "unit")?;
    for (pos, (u, s)) in rows.iter().enumerate() {
        writeln!(out, "{:>4}  {:<w$}  {}", pos + 1, m.unit_name(*u), s.text())?;
    }
    Ok(())
}

pub struct LocalizeOpts {
    pub method: String,
    pub update_bound: usize,
    pub smoothing: Option<String>,
    pub json: bool,
}

struct Step {
    unit: usize,
    score: Shown,
    verdict: Verdict,
}

fn transcript(
    out: &mut impl Write,
    m: &CoverageMatrix,
    method: &Method,
    steps: &[Step],
    status: &str,
    json: bool,
) -> Result<()> {
    let accuracy = steps.iter().filter(|s| s.verdict == Verdict::Clean).count();
    let found = steps.last().is_some_and(|s| s.verdict == Verdict::Faulty);
    if json {
        let inspections: Vec<Value> = steps
            .iter()
            .enumerate()
            .map(|(i, s)| {
                json!({
                    "step": i + 1,
                    "unit": m.unit_name(s.unit),
                    "score": s.score.json(),
                    "verdict": s.verdict,
                })
            })
            .collect();
        return write_json(
            out,
            &json!({
                "method": method.to_string(),
                "status": status,
                "inspections": inspections,
                "accuracy": found.then_some(accuracy),
            }),
        );
    }
    let w = name_width(m);
    let label = match method {
        Method::Cln | Method::Clu => "cl",
        Method::Measure(_) => "score",
    };
    writeln!(out, "step  {:<w$}  {label}  verdict", "unit")?;
    for (i, s) in steps.iter().enumerate() {
        let verdict = match s.verdict {
            Verdict::Clean => "clean",
            Verdict::Faulty => "faulty",
        };
        writeln!(
            out,
            "{:>4}  {:<w$}  {}  {verdict}",
            i + 1,
            m.unit_name(s.unit),
            s.score.text()
        )?;
    }
    if found {
        writeln!(out, "accuracy: {accuracy}")?;
    } else {
        writeln!(out, "status: {status}")?;
    }
    Ok(())
}

/// Fixed ranking for `cln` and the spectrum measures.
fn fixed_order(
    m: &CoverageMatrix,
    method: &Method,
    smoothing: Option<&str>,
) -> Result<Vec<(usize, Shown)>> {
    let none = BTreeSet::new();
    match method {
        Method::Cln => scored_ranking(m, "cl", smoothing, &none),
        Method::Measure(name) => scored_ranking(m, name, smoothing, &none),
        Method::Clu => unreachable!("clu has no fixed order"),
    }
}

fn clu_settings(opts: &LocalizeOpts) -> Result<()> {
    if opts.smoothing.is_some() {
        return Err(CliError::usage(
            "--smoothing applies to spectrum measures only",
        ));
    }
    Ok(())
}

pub fn localize(
    out: &mut impl Write,
    path: &Path,
    faults: &[String],
    opts: &LocalizeOpts,
) -> Result<()> {
    let method = parse_method(&opts.method)?;
    let m = load_matrix(path)?;
    let faults = resolve_units(&m, faults)?;
    if faults.is_empty() {
        return Err(CliError::usage("--faults needs at least one unit"));
    }
    let verdict = |u: usize| {
        if faults.contains(&u) {
            Verdict::Faulty
        } else {
            Verdict::Clean
        }
    };
    let mut steps = Vec::new();
    let status = if method == Method::Clu {
        clu_settings(opts)?;
        let mut session = Session::new(m.clone(), Some(opts.update_bound));
        while let Ok(unit) = session.next_suspect() {
            let score = session
                .ranking()?
                .score_of(unit)
                .cloned()
                .expect("the suspect is ranked");
            let v = verdict(unit);
            steps.push(Step {
                unit,
                score: Shown::Exact(score),
                verdict: v,
            });
            if session.apply_verdict(unit, v)? != SessionStatus::Open {
                break;
            }
        }
        session.status()
    } else {
        for (unit, score) in fixed_order(&m, &method, opts.smoothing.as_deref())? {
            let v = verdict(unit);
            steps.push(Step {
                unit,
                score,
                verdict: v,
            });
            if v == Verdict::Faulty {
                break;
            }
        }
        if steps.last().is_some_and(|s| s.verdict == Verdict::Faulty) {
            SessionStatus::ClosedFound
        } else {
            SessionStatus::ClosedExhausted
        }
    };
    transcript(out, &m, &method, &steps, &status.to_string(), opts.json)?;
    match status {
        SessionStatus::ClosedFound => Ok(()),
        SessionStatus::ClosedInconsistent => Err(CliError::new(
            EXIT_INCONSISTENT,
            "inconsistent knowledge: a failing test has no remaining candidate cause",
        )),
        _ => Err(CliError::input("no fault was inspected")),
    }
}

/// Reads verdicts from `input` until a fault is confirmed or input ends.
pub fn localize_interactive(
    input: &mut impl BufRead,
    out: &mut impl Write,
    path: &Path,
    opts: &LocalizeOpts,
) -> Result<()> {
    let method = parse_method(&opts.method)?;
    let m = load_matrix(path)?;
    let w = name_width(&m);
    let mut session = Session::new(m.clone(), Some(opts.update_bound));
    let fixed = if method == Method::Clu {
        clu_settings(opts)?;
        None
    } else {
        Some(fixed_order(&m, &method, opts.smoothing.as_deref())?)
    };
    let mut steps = Vec::new();
    let mut line = String::new();
    loop {
        let next = match &fixed {
            None => match session.next_suspect() {
                Ok(u) => {
                    let score = session
                        .ranking()?
                        .score_of(u)
                        .cloned()
                        .expect("the suspect is ranked");
                    Some((u, Shown::Exact(score)))
                }
                Err(_) => None,
            },
            Some(order) => order.get(steps.len()).cloned(),
        };
        let Some((unit, score)) = next else { break };
        let verdict = loop {
            if !opts.json {
                write!(
                    out,
                    "inspect {:<w$}  {}  [clean/faulty]? ",
                    m.unit_name(unit),
                    score.text()
                )?;
                out.flush()?;
            }
            line.clear();
            if input.read_line(&mut line)? == 0 {
                if !opts.json {
                    writeln!(out)?;
                }
                return transcript(out, &m, &method, &steps, "stopped", opts.json);
            }
            match line.trim().parse::<Verdict>() {
                Ok(v) => break v,
                Err(e) => eprintln!("{e}"),
            }
        };
        steps.push(Step {
            unit,
            score,
            verdict,
        });
        if fixed.is_some() {
            if verdict == Verdict::Faulty {
                break;
            }
            continue;
        }
        if session.apply_verdict(unit, verdict)? != SessionStatus::Open {
            break;
        }
    }
    let status = match (&fixed, steps.last()) {
        (_, Some(s)) if s.verdict == Verdict::Faulty => SessionStatus::ClosedFound,
        (None, _) => session.status(),
        (Some(_), _) => SessionStatus::ClosedExhausted,
    };
    transcript(out, &m, &method, &steps, &status.to_string(), opts.json)?;
    if status == SessionStatus::ClosedInconsistent {
        return Err(CliError::new(
            EXIT_INCONSISTENT,
            "inconsistent knowledge: a failing test has no remaining candidate cause",
        ));
    }
    Ok(())
}

pub fn oracle(out: &mut impl Write, path: &Path, query: &str, json: bool) -> Result<()> {
    let m = load_matrix(path)?;
    let q = parse_query(query, m.num_units(), m.num_tests()).map_err(CliError::input)?;
    let space = enumerate_models(m).map_err(CliError::input)?;
    let ev = space.evaluator().map_err(|e| match e {
        OracleError::CapExceeded { .. } => CliError::new(EXIT_CAP, e.to_string()),
        other => CliError::input(other),
    })?;
    let p = ev.query(&q).map_err(CliError::input)?;
    if json {
        return write_json(
            out,
            &json!({
                "query": query,
                "models": space.count().to_string(),
                "exact": p.to_string(),
                "decimal": p.to_decimal(),
                "numerator": p.numer().to_string(),
                "denominator": p.denom().to_string(),
            }),
        );
    }
    writeln!(out, "{p}  {}", p.to_decimal())?;
    Ok(())
}

fn summary_table(out: &mut impl Write, report: &EvalReport) -> Result<()> {
    let w = report
        .methods
        .iter()
        .map(|m| m.method.len())
        .max()
        .unwrap_or(6)
        .max(6);
    writeln!(
        out,
        "{:<w$}  evaluated  skipped  mean_accuracy  n-scores (n = 0..{})",
        "method", report.settings.n_max
    )?;
    for m in &report.methods {
        let mean = m
            .mean_accuracy
            .map(|a| format!("{a:.3}"))
            .unwrap_or_else(|| "-".into());
        let scores: Vec<String> = m
            .n_scores
            .iter()
            .map(|s| format!("{:.1}", s.percent))
            .collect();
        writeln!(
            out,
            "{:<w$}  {:>9}  {:>7}  {:>13}  {}",
            m.method,
            m.evaluated,
            m.skipped,
            mean,
            scores.join(" ")
        )?;
    }
    Ok(())
}

pub fn eval(out: &mut impl Write, config: &Path, dest: Option<&Path>, json: bool) -> Result<()> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| CliError::input(format!("{}: {e}", config.display())))?;
    let cfg = BenchConfig::from_json_str(&text).map_err(CliError::input)?;
    let base = config.parent().unwrap_or(Path::new("."));
    let report = cfg.run(base).map_err(CliError::input)?;
    if let Some(dest) = dest {
        std::fs::write(dest, report.to_json())?;
        std::fs::write(dest.with_extension("csv"), report.to_csv())?;
    }
    if json {
        writeln!(out, "{}", report.to_json())?;
    } else {
        summary_table(out, &report)?;
    }
    Ok(())
}

pub fn serve(bind: &str, port: u16, cors: Option<&str>, persist: Option<PathBuf>) -> Result<()> {
    use doric_service::store::Store;
    use doric_service::{router, AppState, Limits};

    let store = match persist {
        Some(dir) => Store::persistent(dir).map_err(CliError::input)?,
        None => Store::in_memory(),
    };
    let app = router(AppState::new(store, Limits::default()), cors).map_err(CliError::usage)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((bind, port))
            .await
            .map_err(|e| CliError::input(format!("cannot bind {bind}:{port}: {e}")))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        doric_service::serve_app(listener, app)
            .await
            .map_err(CliError::from)
    })
}
