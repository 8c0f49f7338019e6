use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use eqstop::config::{McCheck, ProblemConfig};
use eqstop::equilibrium::{self, EquilibriumReport, StrongVerdict, ThresholdResult};
use eqstop::mc::{self, McEstimate};
use eqstop::repro::{self, ExampleId, RunConfig};
use eqstop::valuation::ValueEvaluator;
use eqstop::Error;

#[derive(Parser, Debug)]
#[command(name = "eqstop", version, about = "Classify stopping regions as mild, weak or strong equilibria")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Problem configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set payoff.params.K=2`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = ".", global = true)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Both, global = true)]
    format: Format,
    /// Simulation seed; replaces `mc.seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Omit the `meta` block (timestamp, version) so reruns are byte-identical.
    #[arg(long, global = true)]
    no_meta: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    fn json(self) -> bool {
        self != Format::Csv
    }
    fn csv(self) -> bool {
        self != Format::Json
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify the configured region; writes report.json and profile.csv.
    Classify,
    /// Solve for the smallest mild equilibrium in the configured threshold family.
    SolveThreshold,
    /// Run the configured simulation checks; writes mc.json.
    McCheck,
    /// Rebuild the worked examples and compare every verdict with the expected one.
    Reproduce {
        /// ex61, ex62, ex63 or all.
        #[arg(long, default_value = "all")]
        example: String,
        /// Skip simulation cross-checks.
        #[arg(long)]
        no_mc: bool,
        /// Paths per simulation check.
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Print a summary of the configured instance and region.
    Info,
}

enum Failure {
    Lib(Error),
    Io(String),
    Mismatch(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Lib(Error::OpenPiece(_) | Error::InadmissibleRegion(_)) => 2,
            Failure::Lib(Error::Solver { .. } | Error::NoBracket { .. }) => 3,
            Failure::Lib(_) | Failure::Io(_) => 1,
            Failure::Mismatch(_) => 4,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Lib(e) => e.to_string(),
            Failure::Io(m) | Failure::Mismatch(m) => m.clone(),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Classify => classify(&cli.common),
        Command::SolveThreshold => solve_threshold(&cli.common),
        Command::McCheck => mc_check(&cli.common),
        Command::Reproduce { example, no_mc, paths } => reproduce(&cli.common, example, *no_mc, *paths),
        Command::Info => info(&cli.common),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn load(c: &Common) -> Result<ProblemConfig, Failure> {
    let path = c.config.as_ref().ok_or_else(|| Failure::Lib(Error::Config("--config is required".into())))?;
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let mut cfg = ProblemConfig::load(&text, &c.overrides)?;
    if let Some(seed) = c.seed {
        cfg.mc.seed = seed;
    }
    cfg.mc.validate()?;
    Ok(cfg)
}

fn meta(c: &Common, command: &str) -> Option<Value> {
    if c.no_meta {
        return None;
    }
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Some(json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "generated_unix": secs,
        "config": c.config.as_ref().map(|p| p.display().to_string()),
        "overrides": c.overrides,
    }))
}

fn write(dir: &Path, name: &str, content: &str) -> Outcome {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    let p = dir.join(name);
    std::fs::write(&p, content).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
    eprintln!("wrote {}", p.display());
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, doc: &T) -> Outcome {
    let mut s = serde_json::to_string_pretty(doc).map_err(|e| Failure::Io(e.to_string()))?;
    s.push('\n');
    write(dir, name, &s)
}

/// Report plus flat verdict flags, as written to `report.json`.
#[derive(Serialize)]
struct ReportDoc<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    meta: Option<Value>,
    is_mild: bool,
    is_weak: bool,
    is_strong: bool,
    #[serde(flatten)]
    report: &'a EquilibriumReport,
}

impl<'a> ReportDoc<'a> {
    fn new(report: &'a EquilibriumReport, meta: Option<Value>) -> Self {
        Self {
            meta,
            is_mild: report.verdicts.mild,
            is_weak: report.verdicts.weak,
            is_strong: report.verdicts.strong.is_strong(),
            report,
        }
    }
}

fn emit_classification(c: &Common, e: &ValueEvaluator, report: &EquilibriumReport, command: &str) -> Outcome {
    if c.format.json() {
        write_json(&c.out, "report.json", &ReportDoc::new(report, meta(c, command)))?;
    }
    if c.format.csv() {
        let rows = equilibrium::profile(e, &equilibrium::profile_grid(e, 64))?;
        write(&c.out, "profile.csv", &equilibrium::profile_csv(&rows)?)?;
    }
    Ok(())
}

fn verdict_line(r: &EquilibriumReport) -> String {
    let strong = match r.verdicts.strong {
        StrongVerdict::CertifiedStrong => "strong (certified)",
        StrongVerdict::NotCertified => "strong not certified",
        StrongVerdict::NotStrongWitnessed => "not strong (witnessed)",
    };
    format!("{}: mild={} weak={} {}", r.region.join(" ∪ "), r.verdicts.mild, r.verdicts.weak, strong)
}

fn classify(c: &Common) -> Outcome {
    let cfg = load(c)?;
    let inst = cfg.instance()?;
    let region = cfg.region(&inst)?;
    let e = ValueEvaluator::new(&inst, &region, cfg.resolvent)?;
    let report = equilibrium::classify(&e, &cfg.valuation)?;
    println!("{}", verdict_line(&report));
    emit_classification(c, &e, &report, "classify")
}

#[derive(Serialize)]
struct ThresholdDoc<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    meta: Option<Value>,
    threshold: &'a ThresholdResult,
}

fn solve_threshold(c: &Common) -> Outcome {
    let cfg = load(c)?;
    let t = cfg
        .threshold
        .ok_or_else(|| Failure::Lib(Error::Config("missing `threshold` section".into())))?;
    let inst = cfg.instance()?;
    let bracket = t.bracket.map(|[a, b]| (a, b));
    let res = equilibrium::find_threshold_equilibrium(&inst, t.family, bracket, cfg.resolvent, cfg.valuation)?;
    let e = ValueEvaluator::new(&inst, &res.stopping_region, cfg.resolvent)?;
    let report = equilibrium::classify(&e, &cfg.valuation)?;
    println!("threshold {:?} -> {}", res.parameters, verdict_line(&report));
    if c.format.json() {
        write_json(&c.out, "threshold.json", &ThresholdDoc { meta: meta(c, "solve-threshold"), threshold: &res })?;
    }
    emit_classification(c, &e, &report, "solve-threshold")
}

#[derive(Serialize)]
struct CheckResult {
    check: McCheck,
    /// Reference value the estimate is compared with, when one exists.
    analytic: Option<f64>,
    estimate: McEstimate,
    /// `(mean - analytic)/SE`, or `mean/SE` for sign checks.
    z: f64,
    passed: Option<bool>,
    note: String,
}

fn zscore(est: &McEstimate, reference: f64) -> f64 {
    if est.std_error > 0.0 {
        (est.mean - reference) / est.std_error
    } else if est.mean == reference {
        0.0
    } else {
        f64::INFINITY
    }
}

fn compared(check: McCheck, analytic: f64, estimate: McEstimate, allowance: f64, note: &str) -> CheckResult {
    let z = zscore(&estimate, analytic);
    let passed = Some(estimate.agrees_with(analytic, 3.0, allowance) && estimate.valid());
    CheckResult { check, analytic: Some(analytic), estimate, z, passed, note: note.into() }
}

fn run_check(cfg: &ProblemConfig, check: &McCheck) -> Result<Vec<CheckResult>, Failure> {
    let inst = cfg.instance()?;
    let sim = &cfg.mc;
    let d = inst.diffusion();
    let out = match *check {
        McCheck::Value { x } => {
            let region = cfg.region(&inst)?;
            let e = ValueEvaluator::new(&inst, &region, cfg.resolvent)?;
            let est = mc::estimate_j(&inst, &region, x, sim)?;
            vec![compared(check.clone(), e.value_j(x)?, est, 0.0, "J(x,S) against the analytic value")]
        }
        McCheck::Deviation { x, ref eps } => {
            let region = cfg.region(&inst)?;
            mc::deviation_sweep(&inst, &region, x, eps, sim)?
                .into_iter()
                .map(|p| {
                    let z = p.estimate.z();
                    let note = if z >= 3.0 {
                        "profitable deviation: D(eps) > 0 with z >= 3"
                    } else if p.estimate.mean <= 3.0 * p.estimate.std_error {
                        "no profitable deviation detected"
                    } else {
                        "inconclusive"
                    };
                    CheckResult {
                        check: McCheck::Deviation { x, eps: vec![p.epsilon] },
                        analytic: None,
                        estimate: p.estimate,
                        z,
                        passed: None,
                        note: note.into(),
                    }
                })
                .collect()
        }
        McCheck::LocalTime { x0, h, eps } => {
            let est = mc::estimate_local_time(&inst, x0, h, eps, sim)?;
            let reference = (2.0 / std::f64::consts::PI).sqrt() * d.sigma(x0).abs();
            vec![compared(check.clone(), reference, est, 0.0, "E[L]/sqrt(eps) against sqrt(2/pi)|sigma(x0)|")]
        }
        McCheck::SmallTimeExit { x0, h, eps } => {
            let est = mc::small_time_exit_prob(&inst, x0, h, eps, sim)?;
            let z = est.z();
            vec![CheckResult {
                check: check.clone(),
                analytic: None,
                estimate: est,
                z,
                passed: None,
                note: format!("P(exit of B({x0},{h}) before {eps}); vanishes faster than any power of eps"),
            }]
        }
        McCheck::HalfProbability { x0, t } => {
            let est = mc::half_probability(&inst, x0, t, sim)?;
            vec![compared(check.clone(), 0.5, est, 0.0, "P(X_t > x0) against 1/2")]
        }
        McCheck::ExitRatios { x0, h, r } => {
            let res = mc::exit_time_and_localtime_ratio(&inst, x0, h, r, sim)?;
            let s2 = d.sigma2(x0);
            vec![
                compared(check.clone(), 1.0 / s2, res.exit_time, 0.05, "exit-time ratio against 1/sigma^2"),
                compared(check.clone(), s2 / (1.0 + r.abs()), res.local_time, 0.05, "local-time ratio against sigma^2/(1+|r|)"),
            ]
        }
        McCheck::DriftRemainder { x0, eps } => {
            let est = mc::drift_remainder_check(&inst, x0, eps, sim)?;
            let z = est.z();
            vec![CheckResult {
                check: check.clone(),
                analytic: None,
                estimate: est,
                z,
                passed: None,
                note: "E|X_eps - x0 - mu eps - sigma W_eps|; o(eps) as eps -> 0".into(),
            }]
        }
    };
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn mc_check(c: &Common) -> Outcome {
    let cfg = load(c)?;
    if cfg.mc_checks.is_empty() {
        return Err(Failure::Lib(Error::Config("`mc_checks` is empty".into())));
    }
    let mut results = Vec::new();
    for check in &cfg.mc_checks {
        results.extend(run_check(&cfg, check)?);
    }
    for r in &results {
        let status = match r.passed {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "info",
        };
        println!("[{status}] {}: mean={:.6e} se={:.2e} z={:.2}  {}", r.estimate.target, r.estimate.mean, r.estimate.std_error, r.z, r.note);
    }
    if c.format.json() {
        let mut doc = json!({ "seed": cfg.mc.seed, "paths": cfg.mc.paths, "checks": results });
        if let Some(m) = meta(c, "mc-check") {
            doc["meta"] = m;
        }
        write_json(&c.out, "mc.json", &doc)?;
    }
    if c.format.csv() {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let io = |e: csv::Error| Failure::Io(e.to_string());
        w.write_record(["target", "analytic", "mean", "std_error", "z", "passed", "censored_mass"]).map_err(io)?;
        for r in &results {
            w.write_record([
                r.estimate.target.clone(),
                opt(r.analytic),
                r.estimate.mean.to_string(),
                r.estimate.std_error.to_string(),
                r.z.to_string(),
                r.passed.map(|p| p.to_string()).unwrap_or_default(),
                r.estimate.censored_mass.to_string(),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Failure::Io(e.to_string()))?;
        write(&c.out, "mc.csv", &String::from_utf8_lossy(&bytes))?;
    }
    Ok(())
}

fn reproduce(c: &Common, example: &str, no_mc: bool, paths: Option<usize>) -> Outcome {
    let ids: Vec<ExampleId> = if example.eq_ignore_ascii_case("all") {
        ExampleId::all().to_vec()
    } else {
        vec![ExampleId::parse(example)?]
    };
    let mut run = RunConfig { mc_enabled: !no_mc, ..RunConfig::default() };
    if let Some(seed) = c.seed {
        run.mc.seed = seed;
    }
    if let Some(n) = paths {
        run.mc.paths = n;
    }
    run.mc.validate()?;
    let mut reports = Vec::new();
    for id in ids {
        let case = repro::build_default(id)?;
        let rep = repro::run_example(&case, &run)?;
        for cand in &rep.candidates {
            let status = if cand.matches { "match" } else { "MISMATCH" };
            println!("[{status}] {} {}: {}", id.name(), cand.label, verdict_line(&cand.report));
            for m in &cand.mismatches {
                println!("    {m}");
            }
        }
        if let Some(t) = &rep.threshold {
            println!("[{}] {} threshold: solved {} expected {}", if t.passed { "match" } else { "MISMATCH" }, id.name(), t.solved, t.expected);
        }
        if c.format.csv() {
            for (i, cand) in rep.candidates.iter().enumerate() {
                write(&c.out, &format!("{}_candidate{:02}.csv", id.name(), i), &equilibrium::profile_csv(&cand.profile)?)?;
            }
        }
        reports.push(rep);
    }
    let all_match = reports.iter().all(|r| r.all_match);
    if c.format.json() {
        let mut doc = json!({ "all_match": all_match, "mc_enabled": run.mc_enabled, "examples": reports });
        if let Some(m) = meta(c, "reproduce") {
            doc["meta"] = m;
        }
        write_json(&c.out, "reproduce.json", &doc)?;
    }
    if all_match {
        Ok(())
    } else {
        Err(Failure::Mismatch("some verdicts differ from the expected ones".into()))
    }
}

fn info(c: &Common) -> Outcome {
    let cfg = load(c)?;
    let inst = cfg.instance()?;
    let mut doc = json!({ "instance": inst.summary() });
    if cfg.region.is_some() {
        let region = cfg.region(&inst)?;
        doc["region"] = json!(region.describe());
    }
    if let Some(t) = cfg.threshold {
        doc["threshold"] = json!(t);
    }
    doc["mc_checks"] = json!(cfg.mc_checks.len());
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::Io(e.to_string()))?;
    // a closed pipe (e.g. `| head`) is not an error
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}
