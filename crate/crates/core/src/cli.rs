//! Command-line harness. Every subcommand writes JSON (or CSV) to stdout, or
//! to `<out>/<name>` when `--out` is given, and exits 0 iff its checks pass.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::algebra::{Algebra, EPS_NUM};
use crate::envelope::{
    loglog_slope, solve_envelope, verify_counterexample_growth, EnvelopeKind, EnvelopeProblem, GrowthFamily,
    SolverOptions,
};
use crate::error::{NcError, Result};
use crate::families;
use crate::io::{self, SCHEMA};
use crate::lambda::{lambda_norm, Method, Mode};
use crate::marcin::{marcinkiewicz_majorant, InterpolationParams, WeightKind};
use crate::oracle::{MapFamily, WeakTypeOracle};
use crate::suite::{self, SuiteConfig};

const CSV_HELP: &str = "\
CSV columns:
  envelope --family: N,p,value,slope   (slope is the log-log fit of value against N)
  report --format csv: source,family,p,points,n_min,n_max,slope

Exit status: 0 when every asserted inequality holds, 1 when a check fails,
2 on malformed input or usage errors.";

#[derive(Parser, Debug)]
#[command(name = "ncmax", version, about = "Finite-dimensional lab for noncommutative maximal inequalities", after_help = CSV_HELP)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Output directory; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 2024)]
    pub seed: u64,
    /// Relative gap for the envelope solver.
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub tol: f64,
    /// Dyadic truncation threshold.
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub trunc: f64,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Schatten-type norms ‖x‖_p of an operator.
    Norm {
        #[arg(long = "in")]
        input: PathBuf,
        /// Comma-separated exponents; `inf` is the operator norm.
        #[arg(long, default_value = "1,2,inf")]
        p: String,
    },
    /// Marcinkiewicz majorant certificate for x under a family of maps.
    Majorant {
        #[arg(long = "in")]
        input: PathBuf,
        /// `doob:<filtration.json>` or `asym:<N>`.
        #[arg(long)]
        family: String,
        /// JSON file or inline object with p0, p1, p (p1 may be "inf").
        #[arg(long)]
        params: Option<String>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long, default_value = "geometric")]
        weights: WeightKind,
    },
    /// Λ_{p,q} quasi-norm of an operator sequence.
    Lambda {
        #[arg(long = "in")]
        input: PathBuf,
        /// c, r or plain.
        #[arg(long, default_value = "c")]
        mode: Mode,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, default_value = "spectral")]
        method: Method,
    },
    /// Envelope value of a sequence (--in) or a growth sweep (--family).
    Envelope {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// pos, sa or col.
        #[arg(long, default_value = "pos")]
        kind: EnvelopeKind,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// nonpos, llcol or lllambda.
        #[arg(long)]
        family: Option<String>,
        /// Comma-separated sizes for --family.
        #[arg(long = "N", default_value = "4,8,16")]
        n: String,
    },
    /// Generate a counterexample sequence as seq.json.
    Counterexample {
        /// asym, nonpos, opti or ll.
        #[arg(long)]
        family: String,
        #[arg(long = "N")]
        n: usize,
        /// Exponent for ll (default 4) and opti (default 2).
        #[arg(long)]
        p: Option<f64>,
        /// Number of sampled terms for opti and ll.
        #[arg(long, default_value_t = 8)]
        samples: usize,
    },
    /// Run acceptance checks and write a machine-readable report.
    Verify {
        /// core, all, or a comma list of criterion numbers.
        #[arg(long, default_value = "core")]
        suite: String,
    },
    /// Aggregate growth CSV files into a table of fitted slopes.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// csv or json.
        #[arg(long, default_value = "csv")]
        format: String,
    },
}

/// Parses `argv` and runs; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("ncmax: {e}");
            2
        }
    }
}

enum Artifact {
    Json(Value),
    Csv(String),
}

fn emit(common: &Common, name: &str, art: Artifact) -> Result<()> {
    match (&common.out, art) {
        (Some(dir), Artifact::Json(v)) => io::write_json(&dir.join(format!("{name}.json")), &v),
        (Some(dir), Artifact::Csv(s)) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(format!("{name}.csv")), s)?;
            Ok(())
        }
        (None, Artifact::Json(v)) => stdout(&format!("{}\n", serde_json::to_string_pretty(&v)?)),
        (None, Artifact::Csv(s)) => stdout(&s),
    }
}

/// A closed pipe (`ncmax … | head`) is not an error.
fn stdout(s: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(s.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn to_value(v: &impl Serialize) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn parse_list<T: std::str::FromStr>(s: &str, field: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| NcError::invalid(field, format!("cannot parse {t:?}"))))
        .collect()
}

pub fn execute(cli: &Cli) -> Result<bool> {
    let c = &cli.common;
    match &cli.command {
        Command::Norm { input, p } => {
            let x = io::operator_from_json(&io::read_json(input)?)?;
            let ps: Vec<f64> = parse_list(p, "p")?;
            if let Some(bad) = ps.iter().find(|&&q| !(q > 0.0)) {
                return Err(NcError::invalid("p", format!("exponent {bad} must be > 0")));
            }
            let norms: Vec<Value> =
                ps.iter().map(|&q| json!({"p": fmt_exp(q), "norm": x.lp_norm(q)})).collect();
            let tr = x.trace();
            emit(c, "norm", Artifact::Json(json!({"schema": SCHEMA, "norms": norms, "trace": [tr.re, tr.im]})))?;
            Ok(true)
        }
        Command::Majorant { input, family, params, p, weights } => {
            let x = io::operator_from_json(&io::read_json(input)?)?;
            let params = match (params, p) {
                (Some(s), _) => read_params(s)?,
                (None, Some(p)) => InterpolationParams::new(1.0, f64::INFINITY, *p)?,
                (None, None) => InterpolationParams::new(1.0, f64::INFINITY, 2.0)?,
            };
            let (s, o0, o1) = map_family(family, x.algebra())?;
            let cert = marcinkiewicz_majorant(&s, &o0, &o1, &x, &params, *weights, c.trunc)?;
            let zn = cert.z.norm().max(f64::MIN_POSITIVE);
            let min_res = cert.residuals.iter().copied().fold(f64::INFINITY, f64::min);
            let ok = cert.dominates && cert.majorized && cert.within_bound;
            let parts: Vec<Value> = cert.parts.iter().map(|p| json!({"m": p.m, "coef": [p.coef.re, p.coef.im], "ladder": p.summary})).collect();
            emit(
                c,
                "majorant",
                Artifact::Json(json!({
                    "schema": SCHEMA,
                    "params": cert.params,
                    "weights": cert.weights.kind,
                    "z": io::operator_to_json(&cert.z),
                    "residuals": cert.residuals,
                    "min_relative_residual": if cert.residuals.is_empty() { Value::Null } else { json!(min_res / zn) },
                    "dominates": cert.dominates,
                    "majorized": cert.majorized,
                    "norm_ratio": cert.norm_ratio,
                    "proof_bound": cert.proof_bound,
                    "geometric_bound": cert.geometric_bound,
                    "within_bound": cert.within_bound,
                    "dyadic_residual": cert.dyadic_residual,
                    "parts": parts,
                    "pass": ok,
                })),
            )?;
            Ok(ok)
        }
        Command::Lambda { input, mode, p, q, method } => {
            let x = io::sequence_from_json(&io::read_json(input)?)?;
            let q = q.unwrap_or(*p);
            let l = lambda_norm(&x, *p, q, *mode, *method)?;
            let ok = l.lower <= l.value * (1.0 + 1e-12);
            let mut v = to_value(&l)?;
            v["schema"] = json!(SCHEMA);
            v["mode"] = to_value(mode)?;
            v["p"] = json!(p);
            v["q"] = json!(q);
            emit(c, "lambda", Artifact::Json(v))?;
            Ok(ok)
        }
        Command::Envelope { input, kind, p, family, n } => {
            let opts = SolverOptions { tol: c.tol, ..SolverOptions::default() };
            match (input, family) {
                (Some(path), None) => {
                    let seq = io::sequence_from_json(&io::read_json(path)?)?;
                    let prob = EnvelopeProblem::new(*kind, seq, *p)?;
                    let sol = solve_envelope(&prob, &opts)?;
                    let ok = sol.converged && sol.feasibility >= -EPS_NUM * sol.value.max(1.0);
                    let mut v = to_value(&sol.summary(&prob))?;
                    v["schema"] = json!(SCHEMA);
                    v["optimum"] = io::operator_to_json(&sol.optimum);
                    emit(c, "envelope", Artifact::Json(v))?;
                    Ok(ok)
                }
                (None, Some(fam)) => {
                    let grid: Vec<usize> = parse_list(n, "N")?;
                    let family = match fam.as_str() {
                        "nonpos" => GrowthFamily::Nonpos { p: *p },
                        "llcol" => GrowthFamily::LlColumn { p: *p },
                        "lllambda" => GrowthFamily::LlLambda { p: *p },
                        other => return Err(NcError::invalid("family", format!("unknown growth family {other:?}"))),
                    };
                    let report = verify_counterexample_growth(family, &grid, 0.1, &opts)?;
                    emit(c, &format!("growth_{fam}"), Artifact::Csv(report.to_csv()))?;
                    Ok(report.pass)
                }
                _ => Err(NcError::invalid("in/family", "give exactly one of --in and --family")),
            }
        }
        Command::Counterexample { family, n, p, samples } => {
            let seq = match family.as_str() {
                "asym" => crate::lambda::OperatorSequence::new(families::asym_operators(*n)?)?,
                "nonpos" => families::gen_nonpositive_sequence(*n)?,
                "opti" => families::gen_opti(*n, *samples, c.seed, p.unwrap_or(2.0))?.sequence,
                "ll" => families::gen_ll(*n, p.unwrap_or(4.0), *samples, c.seed)?.sequence,
                other => return Err(NcError::invalid("family", format!("unknown family {other:?}"))),
            };
            emit(c, "seq", Artifact::Json(io::sequence_to_json(&seq)))?;
            Ok(true)
        }
        Command::Verify { suite: name } => {
            let ids = suite::suite_ids(name)?;
            let cfg = SuiteConfig { seed: c.seed, tol: c.tol, trunc: c.trunc };
            let mut outcomes = Vec::new();
            for id in ids {
                let o = suite::run(id, &cfg);
                eprintln!("[{}] {:>2} {}: {} ({:.2?})", if o.pass { "PASS" } else { "FAIL" }, o.id, o.name, o.summary, o.elapsed);
                outcomes.push(o);
            }
            let pass = outcomes.iter().all(|o| o.pass);
            emit(c, "verify", Artifact::Json(json!({"schema": SCHEMA, "suite": name, "config": cfg, "criteria": outcomes, "pass": pass})))?;
            Ok(pass)
        }
        Command::Report { input, format } => {
            let rows = collect_growth(input)?;
            match format.as_str() {
                "csv" => {
                    let mut s = String::from("source,family,p,points,n_min,n_max,slope\n");
                    for r in &rows {
                        s.push_str(&format!("{},{},{},{},{},{},{:.6}\n", r.source, r.family, r.p, r.points, r.n_min, r.n_max, r.slope));
                    }
                    emit(c, "report", Artifact::Csv(s))?;
                }
                "json" => emit(c, "report", Artifact::Json(json!({"schema": SCHEMA, "rows": rows})))?,
                other => return Err(NcError::invalid("format", format!("expected csv or json, got {other:?}"))),
            }
            Ok(true)
        }
    }
}

fn fmt_exp(p: f64) -> Value {
    if p.is_infinite() {
        json!("inf")
    } else {
        json!(p)
    }
}

fn read_params(s: &str) -> Result<InterpolationParams> {
    let text = if s.trim_start().starts_with('{') { s.to_string() } else { std::fs::read_to_string(s)? };
    let p: InterpolationParams = serde_json::from_str(&text).map_err(|e| NcError::invalid("params", e.to_string()))?;
    p.validated()
}

fn map_family(spec: &str, source: &Algebra) -> Result<(MapFamily, WeakTypeOracle, WeakTypeOracle)> {
    let (kind, arg) = spec.split_once(':').ok_or_else(|| NcError::invalid("family", "expected doob:<file> or asym:<N>"))?;
    match kind {
        "doob" => {
            let f = io::filtration_from_json(&io::read_json(Path::new(arg))?)?;
            if f.algebra() != source {
                return Err(NcError::DimensionMismatch("x is not in the filtered algebra".into()));
            }
            Ok((MapFamily::doob(&f), WeakTypeOracle::cuculescu(&f), WeakTypeOracle::uniform(f.algebra(), 1.0)))
        }
        "asym" => {
            let n: usize = arg.parse().map_err(|_| NcError::invalid("family", format!("bad size {arg:?}")))?;
            let s = families::gen_asym(n)?;
            let (o0, o1) = families::scalar_family_oracles(n);
            Ok((s, o0, o1))
        }
        other => Err(NcError::invalid("family", format!("unknown map family {other:?}"))),
    }
}

#[derive(Debug, Serialize)]
pub struct ReportRow {
    pub source: String,
    pub family: String,
    pub p: f64,
    pub points: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub slope: f64,
}

/// Reads every `*.csv` with header `N,p,value,slope` in `dir`, sorted by
/// file name, and refits the slope of each (file, p) group.
fn collect_growth(dir: &Path) -> Result<Vec<ReportRow>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let mut rows = Vec::new();
    for path in files {
        let text = std::fs::read_to_string(&path)?;
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("N,p,value,slope") {
            continue;
        }
        let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let mut groups: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            let field = format!("{name}:{}", i + 2);
            if cols.len() != 4 {
                return Err(NcError::invalid(field, "expected 4 columns"));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| NcError::invalid(field.clone(), format!("bad number {s:?}")));
            let (n, p, v) = (num(cols[0])?, num(cols[1])?, num(cols[2])?);
            match groups.iter_mut().find(|g| g.0 == p) {
                Some(g) => g.1.push((n, v)),
                None => groups.push((p, vec![(n, v)])),
            }
        }
        let family = name.trim_end_matches(".csv").trim_start_matches("growth_").to_string();
        for (p, pts) in groups {
            let xs: Vec<f64> = pts.iter().map(|q| q.0).collect();
            let ys: Vec<f64> = pts.iter().map(|q| q.1).collect();
            let slope = if pts.len() >= 2 { loglog_slope(&xs, &ys) } else { f64::NAN };
            rows.push(ReportRow {
                source: name.clone(),
                family: family.clone(),
                p,
                points: pts.len(),
                n_min: xs.iter().copied().fold(f64::INFINITY, f64::min) as usize,
                n_max: xs.iter().copied().fold(0.0, f64::max) as usize,
                slope,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("ncmax").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_are_threaded() {
        let cli = parse(&["verify", "--suite", "core", "--seed", "7", "--tol", "1e-4", "--trunc", "1e-9"]);
        assert_eq!(cli.common.seed, 7);
        assert_eq!(cli.common.tol, 1e-4);
        assert_eq!(cli.common.trunc, 1e-9);
        let cli = parse(&["lambda", "--in", "s.json", "--mode", "r", "--method", "exhaustive", "--p", "3"]);
        match cli.command {
            Command::Lambda { mode, method, p, q, .. } => {
                assert_eq!((mode, method, p, q), (Mode::Row, Method::Exhaustive, 3.0, None));
            }
            _ => panic!("wrong subcommand"),
        }
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        assert_eq!(run(["ncmax", "frobnicate"]), 2);
        assert_eq!(run(["ncmax", "envelope", "--kind", "bogus", "--in", "x"]), 2);
    }

    #[test]
    fn params_accept_inline_json() {
        let p = read_params(r#"{"p0": 1, "p1": "inf", "p": 2}"#).unwrap();
        assert!(p.p1.is_infinite() && (p.theta - 0.5).abs() < 1e-15);
        assert!(read_params(r#"{"p0": 1, "p1": 2, "p": 3}"#).is_err());
    }
}
