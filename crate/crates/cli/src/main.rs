//! Command-line front end for the stability library: analyze problem
//! files, emit the tolerance-function invariant, exercise single
//! subtractions, run the randomized verification suite, and generate
//! problem files from small graphs.
//!
//! Exit codes: 0 success, 1 verification failure, 2 input error,
//! 3 applicability error (an analysis the operation does not support).

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use opstab::algebra::{AOperation, OperationSpec};
use opstab::graphs::{generate_paths, generate_spanning_trees, GraphSpec};
use opstab::invariant::{min_inequalities, nonembedded, InvariantError, MinInequalities};
use opstab::problem::Problem;
use opstab::stability::{analyze_all, AnalysisReport, Membership, StabilityResult};
use opstab::subtraction::{lower_sub, upper_sub, Method, SubtractionResult};
use opstab::tolerance_function;
use opstab::verify::{module_names, run_suite};

#[derive(Parser)]
#[command(name = "opstab", version, about = "Stability intervals and tolerances for fold-objective optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-element stability analysis of a problem file
    Analyze(AnalyzeArgs),
    /// Tolerance-function invariant of a problem file, as JSON
    Invariant(InvariantArgs),
    /// A single generalized subtraction, for debugging operations
    Subtract(SubtractArgs),
    /// Randomized self-verification across every module
    Verify(VerifyArgs),
    /// Problem file from a small graph (s-t paths or spanning trees)
    Generate(GenerateArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Problem JSON file
    input: String,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Operation JSON, e.g. '{"kind": "p_sum", "p": 2}', replacing the file's operation
    #[arg(long)]
    op: Option<String>,
    /// Endpoints only; required for nonstrict operations, where tolerances are undefined
    #[arg(long)]
    intervals_only: bool,
    /// Recompute the tolerance function from every optimal trajectory and compare
    #[arg(long)]
    verify_invariance: bool,
}

#[derive(Args)]
struct InvariantArgs {
    /// Problem JSON file
    input: String,
    /// Operation JSON, e.g. '{"kind": "p_sum", "p": 2}', replacing the file's operation
    #[arg(long)]
    op: Option<String>,
    /// Recompute the tolerance function from every optimal trajectory and compare
    #[arg(long)]
    verify_invariance: bool,
}

#[derive(Args)]
struct SubtractArgs {
    /// Operation JSON, e.g. '{"kind": "plus"}'
    #[arg(long)]
    op: String,
    /// Left operand (the value to subtract from)
    #[arg(long)]
    w: f64,
    /// Right operand (the value to subtract)
    #[arg(long)]
    v: f64,
    #[arg(long, value_enum)]
    side: SubtractSide,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random instances per operation family and check
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    instances: u64,
    /// Restrict to one module's checks
    #[arg(long)]
    only: Option<String>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Graph JSON file
    input: String,
    #[arg(long, value_enum, default_value_t = Mode::Paths)]
    mode: Mode,
    /// Operation JSON for the generated problem; defaults to '{"kind": "plus"}'
    #[arg(long)]
    op: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum SubtractSide {
    Upper,
    Lower,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Paths,
    Trees,
}

/// A failed command: the process exit code plus a diagnostic for stderr.
struct Failure {
    code: u8,
    message: String,
}

fn input_error(e: impl Display) -> Failure {
    Failure { code: 2, message: e.to_string() }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Invariant(a) => cmd_invariant(a),
        Command::Subtract(a) => cmd_subtract(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Generate(a) => cmd_generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn parse_operation(json: &str) -> Result<AOperation, Failure> {
    let spec: OperationSpec =
        serde_json::from_str(json).map_err(|e| input_error(format!("invalid operation JSON: {e}")))?;
    spec.build().map_err(input_error)
}

fn load_problem(path: &str, op_override: Option<&str>) -> Result<Problem, Failure> {
    let text = fs::read_to_string(path).map_err(|e| input_error(format!("cannot read {path}: {e}")))?;
    let p = Problem::from_json(&text).map_err(input_error)?;
    match op_override {
        None => Ok(p),
        Some(json) => {
            // rebuild under the new operation so its cost axioms are
            // re-validated against the file's costs
            let op = parse_operation(json)?;
            let costs: BTreeMap<String, f64> =
                p.ids().iter().cloned().zip(p.costs().iter().copied()).collect();
            let trajectories: Vec<Vec<String>> =
                p.trajectories().iter().map(|&mask| p.mask_ids(mask)).collect();
            Problem::new(op, p.ids().to_vec(), &costs, &trajectories).map_err(input_error)
        }
    }
}

fn require_strict_or_intervals_only(p: &Problem, intervals_only: bool) -> Result<(), Failure> {
    if !p.operation().strict() && !intervals_only {
        return Err(Failure {
            code: 3,
            message: format!(
                "operation `{}` is not strict, so tolerances are undefined; rerun with --intervals-only for endpoint analysis",
                p.operation().name()
            ),
        });
    }
    Ok(())
}

fn method_str(m: Method) -> &'static str {
    match m {
        Method::ClosedForm => "closed_form",
        Method::Bisection => "bisection",
    }
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<(), Failure> {
    let p = load_problem(&a.input, a.op.as_deref())?;
    require_strict_or_intervals_only(&p, a.intervals_only)?;
    let report = analyze_all(&p).map_err(input_error)?;
    match a.format {
        Format::Table => emit(&analysis_table(&p, &report, a.intervals_only)),
        Format::Json => {
            let doc = analysis_json(&p, &report, a.intervals_only, a.verify_invariance)?;
            emit(&(to_pretty(&doc)? + "\n"));
        }
    }
    Ok(())
}

fn analysis_table(p: &Problem, report: &AnalysisReport, intervals_only: bool) -> String {
    let mut out = String::new();
    out.push_str(&format!("operation: {}\n", p.operation().name()));
    out.push_str(&format!("optimal value: {}\n", report.optimal.value));
    let sets: Vec<String> =
        report.optimal.trajectories.iter().map(|&s| format!("{{{}}}", p.mask_ids(p.trajectories()[s]).join(", "))).collect();
    out.push_str(&format!(
        "optimal trajectories: {}{}\n\n",
        sets.join("; "),
        if report.optimal.is_unique() { " (unique)" } else { "" }
    ));

    const HEADERS: [&str; 9] =
        ["element", "cost", "in_optimal", "c_minus", "c_plus", "lower_tol", "upper_tol", "ext_lower_tol", "method"];
    let cells: Vec<[String; 9]> = report.rows.iter().map(|row| row_cells(row, intervals_only)).collect();
    let widths: Vec<usize> = (0..HEADERS.len())
        .map(|i| cells.iter().map(|r| r[i].len()).chain([HEADERS[i].len()]).max().unwrap())
        .collect();
    let render = |cols: &[String]| {
        cols.iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    out.push_str(&format!("{}\n", render(&HEADERS.map(String::from))));
    for row in &cells {
        out.push_str(&format!("{}\n", render(row.as_slice())));
    }
    out
}

fn row_cells(row: &StabilityResult, intervals_only: bool) -> [String; 9] {
    let num = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| x.to_string());
    let tol = |v: Option<f64>| if intervals_only { "-".to_string() } else { num(v) };
    [
        row.element.clone(),
        row.cost.to_string(),
        match row.membership {
            Membership::InOptimal => "yes".to_string(),
            Membership::OutsideOptimal => "no".to_string(),
        },
        num(row.c_minus),
        num(row.c_plus),
        tol(row.lower_tolerance),
        tol(row.upper_tolerance),
        tol(row.extended_lower_tolerance),
        method_str(row.method).to_string(),
    ]
}

#[derive(Serialize)]
struct RowOut {
    element: String,
    cost: f64,
    in_optimal: bool,
    c_minus: Option<f64>,
    c_plus: Option<f64>,
    lower_tol: Option<f64>,
    upper_tol: Option<f64>,
    ext_lower_tol: Option<f64>,
    method: &'static str,
}

#[derive(Serialize)]
struct AnalysisOut {
    operation: OperationSpec,
    optimal_value: f64,
    optimal_trajectories: Vec<Vec<String>>,
    unique: bool,
    rows: Vec<RowOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    invariant: Option<InvariantOut>,
}

#[derive(Serialize)]
struct InvariantOut {
    tolerance_function: BTreeMap<String, f64>,
    extended: BTreeMap<String, f64>,
    unique: bool,
    union_opt: Vec<String>,
    intersection_opt: Vec<String>,
    nonembedded: bool,
    min_inequalities: Option<MinOut>,
}

#[derive(Serialize)]
struct MinOut {
    min_lower: f64,
    min_extended: f64,
    min_upper: f64,
    restricted_min_extended: Option<f64>,
    nonembedded: bool,
    corollary_equality: bool,
    full_chain_equality: bool,
}

impl From<MinInequalities> for MinOut {
    fn from(m: MinInequalities) -> Self {
        MinOut {
            min_lower: m.min_lower,
            min_extended: m.min_extended,
            min_upper: m.min_upper,
            restricted_min_extended: m.restricted_min_extended,
            nonembedded: m.nonembedded,
            corollary_equality: m.corollary_equality,
            full_chain_equality: m.full_chain_equality,
        }
    }
}

fn operation_spec(p: &Problem) -> OperationSpec {
    p.operation()
        .spec()
        .cloned()
        .unwrap_or_else(|| OperationSpec::new(p.operation().name(), None))
}

fn analysis_json(
    p: &Problem,
    report: &AnalysisReport,
    intervals_only: bool,
    verify_invariance: bool,
) -> Result<AnalysisOut, Failure> {
    let rows = report
        .rows
        .iter()
        .map(|row| RowOut {
            element: row.element.clone(),
            cost: row.cost,
            in_optimal: row.membership == Membership::InOptimal,
            c_minus: row.c_minus,
            c_plus: row.c_plus,
            lower_tol: if intervals_only { None } else { row.lower_tolerance },
            upper_tol: if intervals_only { None } else { row.upper_tolerance },
            ext_lower_tol: if intervals_only { None } else { row.extended_lower_tolerance },
            method: method_str(row.method),
        })
        .collect();
    let invariant = if p.operation().strict() && !intervals_only {
        Some(invariant_block(p, verify_invariance)?)
    } else {
        None
    };
    Ok(AnalysisOut {
        operation: operation_spec(p),
        optimal_value: report.optimal.value,
        optimal_trajectories: report
            .optimal
            .trajectories
            .iter()
            .map(|&s| p.mask_ids(p.trajectories()[s]))
            .collect(),
        unique: report.optimal.is_unique(),
        rows,
        invariant,
    })
}

fn invariant_block(p: &Problem, verify_invariance: bool) -> Result<InvariantOut, Failure> {
    let report = tolerance_function(p, verify_invariance).map_err(invariant_failure)?;
    let by_id = |values: &[f64]| -> BTreeMap<String, f64> {
        report.ids.iter().cloned().zip(values.iter().copied()).collect()
    };
    let min_block = match min_inequalities(p, &report) {
        Ok(m) => Some(MinOut::from(m)),
        Err(InvariantError::NotUnique(_)) | Err(InvariantError::CostBelowNeutral { .. }) => None,
        Err(e) => return Err(invariant_failure(e)),
    };
    Ok(InvariantOut {
        tolerance_function: by_id(&report.values),
        extended: by_id(&report.extended),
        unique: report.unique,
        union_opt: p.mask_ids(report.union_mask),
        intersection_opt: p.mask_ids(report.intersection_mask),
        nonembedded: nonembedded(p),
        min_inequalities: min_block,
    })
}

/// Maps invariant-module errors onto exit codes: hypotheses the
/// instance fails to meet are applicability errors (3), disproved
/// theory claims are verification failures (1), and anything else is
/// an input problem (2).
fn invariant_failure(e: InvariantError) -> Failure {
    let code = match &e {
        InvariantError::NotStrict(_) | InvariantError::NonPositiveCost { .. } => 3,
        InvariantError::InvarianceMismatch { .. }
        | InvariantError::CharacterizationMismatch { .. }
        | InvariantError::InequalityViolated(_) => 1,
        _ => 2,
    };
    let mut message = e.to_string();
    if matches!(e, InvariantError::NotStrict(_)) {
        message.push_str("; stability intervals are still available via `analyze --intervals-only`");
    }
    Failure { code, message }
}

fn cmd_invariant(a: InvariantArgs) -> Result<(), Failure> {
    let p = load_problem(&a.input, a.op.as_deref())?;
    let block = invariant_block(&p, a.verify_invariance)?;
    emit(&(to_pretty(&block)? + "\n"));
    Ok(())
}

#[derive(Serialize)]
struct SubtractOut {
    operation: OperationSpec,
    w: f64,
    v: f64,
    side: &'static str,
    value: f64,
    method: &'static str,
}

fn cmd_subtract(a: SubtractArgs) -> Result<(), Failure> {
    let op = parse_operation(&a.op)?;
    let (side, result): (&'static str, SubtractionResult) = match a.side {
        SubtractSide::Upper => ("upper", upper_sub(&op, a.w, a.v).map_err(input_error)?),
        SubtractSide::Lower => ("lower", lower_sub(&op, a.w, a.v).map_err(input_error)?),
    };
    match a.format {
        Format::Table => {
            emit(&format!(
                "{}: {} subtraction of {} from {} = {} ({})\n",
                op.name(), side, a.v, a.w, result.value, method_str(result.method)
            ));
        }
        Format::Json => {
            let doc = SubtractOut {
                operation: op.spec().cloned().unwrap_or_else(|| OperationSpec::new(op.name(), None)),
                w: a.w,
                v: a.v,
                side,
                value: result.value,
                method: method_str(result.method),
            };
            emit(&(to_pretty(&doc)? + "\n"));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Reproducer {
    module: String,
    check: String,
    cases: usize,
    failures: usize,
    first_failure: Option<String>,
    witness: Option<serde_json::Value>,
}

const REPRODUCER_PATH: &str = "opstab-reproducer.json";

fn cmd_verify(a: VerifyArgs) -> Result<(), Failure> {
    let results = run_suite(a.seed, a.instances as usize, a.only.as_deref());
    if results.is_empty() {
        return Err(input_error(format!(
            "unknown module `{}`; modules: {}",
            a.only.as_deref().unwrap_or(""),
            module_names().join(", ")
        )));
    }
    let mut out = String::new();
    let mut failed = Vec::new();
    for r in &results {
        if r.passed() {
            out.push_str(&format!("ok   {}/{} ({} cases)\n", r.module, r.name, r.cases));
        } else {
            out.push_str(&format!(
                "FAIL {}/{} ({} of {} cases): {}\n",
                r.module, r.name, r.failures, r.cases,
                r.first_failure.as_deref().unwrap_or("?")
            ));
            failed.push(r);
        }
    }
    let passed = results.len() - failed.len();
    out.push_str(&format!("checks: {passed}/{} passed (seed {}, {} instances)\n", results.len(), a.seed, a.instances));
    emit(&out);
    match failed.first() {
        None => Ok(()),
        Some(first) => {
            let reproducer = Reproducer {
                module: first.module.to_string(),
                check: first.name.to_string(),
                cases: first.cases,
                failures: first.failures,
                first_failure: first.first_failure.clone(),
                witness: first.witness.as_deref().and_then(|w| serde_json::from_str(w).ok()),
            };
            fs::write(REPRODUCER_PATH, to_pretty(&reproducer)? + "\n")
                .map_err(|e| input_error(format!("cannot write {REPRODUCER_PATH}: {e}")))?;
            Err(Failure {
                code: 1,
                message: format!(
                    "{} of {} checks failed; first failing case written to {REPRODUCER_PATH}",
                    failed.len(),
                    results.len()
                ),
            })
        }
    }
}

fn cmd_generate(a: GenerateArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&a.input).map_err(|e| input_error(format!("cannot read {}: {e}", a.input)))?;
    let graph = GraphSpec::from_json(&text).map_err(input_error)?;
    let op = match a.op.as_deref() {
        Some(json) => parse_operation(json)?,
        None => OperationSpec::new("plus", None).build().expect("plus is a builtin"),
    };
    let problem = match a.mode {
        Mode::Paths => generate_paths(&graph, op),
        Mode::Trees => generate_spanning_trees(&graph, op),
    }
    .map_err(input_error)?;
    emit(&(problem.to_json().map_err(input_error)? + "\n"));
    Ok(())
}

fn to_pretty<T: Serialize>(doc: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(doc).map_err(|e| input_error(format!("cannot serialize output: {e}")))
}

/// Writes to stdout, treating a closed pipe as the reader's choice
/// rather than an error.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(text.as_bytes());
}
