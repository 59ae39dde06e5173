use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fodelay::error::Error;
use fodelay::interval::{build_factors, delta_patterns, sample_member, IntervalMatrix};
use fodelay::lmi::{maximize_margin, verify, Certificate, LmiProblem};
use fodelay::sim::{simulate, simulate_closed_loop, History, SimConfig};
use fodelay::stability::{
    analyze_problem, assemble_certain, assemble_interval, sector_csv, sector_scan, AnalysisOptions,
    DelayedPair, StabilityReport, Verdict,
};
use fodelay::synthesis::{synthesize, SynthesisOptions, SynthesisResult, UncertaintyMode};
use fodelay::Mat;
use serde_json::json;

use crate::doc::{self, controller_doc, Placement, System};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NOT_CERTIFIED: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "fodelay", version, about = "Robust stability analysis and controller synthesis for fractional-order delay systems")]
pub struct Cli {
    /// Suppress the summary printed on standard output.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Certify stability of the loop a document describes.
    Analyze(AnalyzeArgs),
    /// Design a controller of given order and post-validate it.
    Synthesize(SynthesizeArgs),
    /// Simulate a sampled member of the loop.
    Simulate(SimulateArgs),
    /// Eigenvalue sector scan of sampled non-delayed matrices.
    Spectrum(SpectrumArgs),
    /// Check a certificate against the problem a document induces.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    pub input: PathBuf,
    /// Use the delay-only condition on fixed matrices; requires lower = upper.
    #[arg(long)]
    pub certain: bool,
    /// Also report the largest achievable strictness margin.
    #[arg(long)]
    pub margin: bool,
    /// Certificate output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Auto,
    Robust,
    Nominal,
}

#[derive(Args, Debug)]
pub struct SynthesizeArgs {
    pub input: PathBuf,
    /// Controller order n_c.
    #[arg(long, default_value_t = 0)]
    pub order: usize,
    /// Output directory for controller.json, certificate.json, report.json
    /// and system.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
    pub mode: ModeArg,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    pub input: PathBuf,
    /// center, upper, lower or seed:N.
    #[arg(long, default_value = "center")]
    pub sample: String,
    #[arg(long, default_value_t = 0.01)]
    pub h: f64,
    #[arg(long, default_value_t = 50.0)]
    pub horizon: f64,
    /// Comma-separated initial plant state; ones by default.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Number of past terms kept in the fractional sum; full by default.
    #[arg(long)]
    pub memory: Option<usize>,
    /// Trace CSV output; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SpectrumArgs {
    pub input: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scatter CSV output; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    pub certificate: PathBuf,
    pub input: PathBuf,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

/// Failure that ends a command with a specific exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure { code: EXIT_USAGE, message: msg.to_string() }
}

type CmdResult = Result<i32, Failure>;

struct Out {
    quiet: bool,
}

impl Out {
    fn line(&self, s: impl std::fmt::Display) {
        if !self.quiet {
            println!("{s}");
        }
    }
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), Failure> {
    fs::write(path, content).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<System, Failure> {
    doc::load(path).map_err(usage)
}

fn lib(e: Error) -> Failure {
    usage(e)
}

pub fn run(cli: Cli) -> i32 {
    let out = Out { quiet: cli.quiet };
    let result = match cli.command {
        Command::Analyze(a) => analyze(&a, &out),
        Command::Synthesize(a) => synthesize_cmd(&a, &out),
        Command::Simulate(a) => simulate_cmd(&a, &out),
        Command::Spectrum(a) => spectrum(&a, &out),
        Command::Verify(a) => verify_cmd(&a, &out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// The problem `analyze` and `verify` solve for a document.
fn build_problem(sys: &System, certain: bool) -> Result<LmiProblem, Failure> {
    let lp = sys.closed_loop().map_err(usage)?;
    let (tau, mu) = (sys.delay.tau, sys.delay.mu);
    if certain {
        if !(lp.a.is_certain() && lp.b.is_certain()) {
            return Err(usage("--certain requires lower = upper for A and B"));
        }
        let pair = DelayedPair::new(lp.a.center, lp.b.center).map_err(lib)?;
        assemble_certain(&pair, tau, mu).map_err(lib)
    } else {
        assemble_interval(&lp.a, &lp.b, tau, mu).map_err(lib)
    }
}

fn print_report(out: &Out, r: &StabilityReport) {
    out.line(format!("verdict: {}", r.verdict.as_str()));
    if let Some(v) = &r.verification {
        out.line(format!("min strict margin: {:.6e}", v.min_strict_margin()));
    }
    if r.verdict != Verdict::CertifiedStable {
        out.line(format!("reason: {}", r.reason));
    }
    eprintln!(
        "problem: constraint sizes {:?}, {} scalar unknowns, {} iterations, {:.3} s",
        r.stats.constraint_dims, r.stats.scalar_vars, r.stats.iterations, r.stats.seconds
    );
}

fn analyze(a: &AnalyzeArgs, out: &Out) -> CmdResult {
    let sys = load(&a.input)?;
    let opts = AnalysisOptions::default();
    let prob = build_problem(&sys, a.certain)?;
    let mut report = analyze_problem(&prob, &opts).map_err(lib)?;
    report.warnings.extend(sys.delay.validate());
    warn_all(&report.warnings);
    print_report(out, &report);
    if a.margin {
        let m = maximize_margin(&prob, &opts.solve).map_err(lib)?;
        out.line(format!("best margin: {:.6e}", m.margin));
    }
    match (&report.verdict, &report.certificate) {
        (Verdict::CertifiedStable, Some(c)) => {
            if let Some(p) = &a.out {
                write_file(p, &c.to_json_string())?;
            }
            Ok(EXIT_OK)
        }
        _ => Ok(EXIT_NOT_CERTIFIED),
    }
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn synthesis_report(r: &SynthesisResult) -> serde_json::Value {
    let res = &r.recovery_residuals;
    json!({
        "n_c": r.controller.n_c,
        "iterations": r.iterations,
        "verdict": r.post_validation.verdict.as_str(),
        "min_strict_margin": r.post_validation.verification.as_ref().map(|v| v.min_strict_margin()),
        "recovery_residuals": { "W1": res.w1, "W2": res.w2, "W3": res.w3, "W4": res.w4 },
        "history": r.history.iter().map(|h| json!({
            "analysis_margin": h.analysis_margin,
            "synthesis_margin": h.synthesis_margin,
            "certified": h.certified,
        })).collect::<Vec<_>>(),
        "warnings": r.post_validation.warnings,
    })
}

fn synthesize_cmd(a: &SynthesizeArgs, out: &Out) -> CmdResult {
    let sys = load(&a.input)?;
    let fo = sys.fo_system().map_err(usage)?;
    let opts = SynthesisOptions {
        max_outer_iter: a.max_iter,
        mode: match a.mode {
            ModeArg::Auto => UncertaintyMode::Auto,
            ModeArg::Robust => UncertaintyMode::Robust,
            ModeArg::Nominal => UncertaintyMode::Nominal,
        },
        ..SynthesisOptions::default()
    };
    let r = match synthesize(&fo, a.order, &opts) {
        Ok(r) => r,
        Err(e @ Error::Synthesis { .. }) => {
            out.line("verdict: not certified");
            out.line(format!("reason: {e}"));
            return Ok(EXIT_NOT_CERTIFIED);
        }
        Err(e) => return Err(lib(e)),
    };
    warn_all(&r.post_validation.warnings);
    let kdoc = serde_json::to_value(controller_doc(&r.controller)).expect("serializable");
    out.line(format!("verdict: {}", r.post_validation.verdict.as_str()));
    out.line(format!("iterations: {}", r.iterations));
    out.line(format!("controller: {}", serde_json::to_string(&kdoc).expect("serializable")));
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
        write_file(&dir.join("controller.json"), &pretty(&kdoc))?;
        write_file(&dir.join("certificate.json"), &r.certificate.to_json_string())?;
        write_file(&dir.join("report.json"), &pretty(&synthesis_report(&r)))?;
        let mut with = sys.doc.clone();
        with.controller = Some(controller_doc(&r.controller));
        write_file(&dir.join("system.json"), &doc::to_string(&with))?;
    }
    Ok(EXIT_OK)
}

fn sample(im: &IntervalMatrix, which: &str, seed_offset: u64) -> Result<Mat, Failure> {
    match which {
        "center" => Ok(build_factors(im).center),
        "upper" => Ok(im.upper().clone()),
        "lower" => Ok(im.lower().clone()),
        s => {
            let seed: u64 = s
                .strip_prefix("seed:")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| usage(format!("--sample must be center, upper, lower or seed:N, got `{s}`")))?;
            let uf = build_factors(im);
            // Pattern 3 is the first uniform interior draw.
            let d = &delta_patterns(uf.slots(), 4, seed.wrapping_add(seed_offset))[3];
            sample_member(&uf, d).map_err(lib)
        }
    }
}

fn parse_x0(s: Option<&str>, n: usize) -> Result<Vec<f64>, Failure> {
    let Some(s) = s else { return Ok(vec![1.0; n]) };
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("--x0: {e}")))?;
    if v.len() != n || v.iter().any(|x| !x.is_finite()) {
        return Err(usage(format!("--x0 needs {n} finite values, got `{s}`")));
    }
    Ok(v)
}

fn simulate_cmd(a: &SimulateArgs, out: &Out) -> CmdResult {
    let sys = load(&a.input)?;
    let am = sample(&sys.a, &a.sample, 0)?;
    let bm = sample(&sys.b, &a.sample, 1)?;
    let x0 = parse_x0(a.x0.as_deref(), sys.n())?;
    let mut cfg = SimConfig::new(a.h, a.horizon, History::Constant(x0));
    cfg.memory_len = a.memory;
    let n = sys.n();
    let trace = match (sys.placement(), &sys.controller) {
        (Placement::State, _) => simulate(&am, &bm, &sys.delay, sys.alpha, &cfg),
        (Placement::Input, Some(k)) => {
            let c = sys.c.as_ref().expect("validated with controller");
            simulate_closed_loop(&am, &bm, c, k, &sys.delay, sys.alpha, &cfg)
        }
        (Placement::Input, None) => simulate(&am, &Mat::zeros(n, n), &sys.delay, sys.alpha, &cfg),
    }
    .map_err(lib)?;
    let csv = trace.to_csv();
    match &a.out {
        Some(p) => write_file(p, &csv)?,
        None => print!("{csv}"),
    }
    let last = *trace.norm_series.last().expect("trace has t = 0");
    let summary = format!("initial norm {:.6e}, final norm {:.6e}, steps {}", trace.norm_series[0], last, trace.times.len() - 1);
    if a.out.is_some() {
        out.line(&summary);
    } else {
        eprintln!("{summary}");
    }
    if let Some(k) = trace.diverged_at {
        eprintln!("diverged at step {k}");
        return Ok(EXIT_DIVERGED);
    }
    Ok(EXIT_OK)
}

fn spectrum(a: &SpectrumArgs, out: &Out) -> CmdResult {
    let sys = load(&a.input)?;
    if a.count == 0 {
        return Err(usage("--count must be >= 1"));
    }
    let lp = sys.closed_loop().map_err(usage)?;
    let samples = sector_scan(&lp.a, sys.alpha, a.count, a.seed).map_err(lib)?;
    let boundary = sys.alpha * PI / 2.0;
    let csv = format!("# alpha={},boundary=±{:.12e}\n{}", sys.alpha, boundary, sector_csv(&samples, sys.alpha));
    match &a.out {
        Some(p) => write_file(p, &csv)?,
        None => print!("{csv}"),
    }
    let worst = samples.iter().map(|s| s.worst_margin).fold(f64::INFINITY, f64::min);
    let summary = format!("samples {}, worst sector margin {:.6e} rad", samples.len(), worst);
    if a.out.is_some() {
        out.line(&summary);
    } else {
        eprintln!("{summary}");
    }
    Ok(if worst > 0.0 { EXIT_OK } else { EXIT_NOT_CERTIFIED })
}

fn verify_cmd(a: &VerifyArgs, out: &Out) -> CmdResult {
    let text = fs::read_to_string(&a.certificate).map_err(|e| usage(format!("{}: {e}", a.certificate.display())))?;
    let cert = Certificate::from_json_str(&text).map_err(|e| usage(format!("{}: {e}", a.certificate.display())))?;
    let sys = load(&a.input)?;
    // A certificate with `eta` belongs to the interval condition.
    let prob = build_problem(&sys, cert.get("eta").is_none())?;
    let report = verify(&prob, &cert, a.tol).map_err(lib)?;
    for c in &report.checks {
        out.line(format!(
            "{:<10} {:<2} extreme eigenvalue {:>14.6e}  margin {:>14.6e}  {}",
            c.name,
            c.sense.symbol(),
            c.extreme_eig,
            c.signed_margin,
            if c.passed { "PASS" } else { "FAIL" }
        ));
    }
    out.line(format!("result: {} (tol {:e})", if report.passed { "pass" } else { "fail" }, a.tol));
    if !report.passed {
        let failing: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        eprintln!("failing constraints: {}", failing.join(", "));
        return Ok(EXIT_NOT_CERTIFIED);
    }
    Ok(EXIT_OK)
}
