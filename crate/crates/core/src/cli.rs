//! Command-line front end.
//!
//! Every command writes one canonical JSON report (to stdout, or to `--out`
//! where that names the report). Timing goes to stderr so that reports are
//! byte-identical across runs with the same inputs and seeds.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::digraph::{build_digraph, evaluate_actions, exact_expected_payoff, EvalConfig, EvalError, DEFAULT_STEP_CAP};
use crate::envsim::{cycled_actions, generate_population, make_random_pomdp};
use crate::io::{self, IoError, PopulationFile};
use crate::model::Schema;
use crate::rational;
use crate::recomb::{
    enumerate_orbit, enumerate_quotient_orbit, run_chain, TransformDistribution, DEFAULT_IDENTITY_PROB,
    DEFAULT_ORBIT_CAP,
};
use crate::stats::down_report;
use crate::syntax::parse_schema;
use crate::verify::{run_all, VerifyOptions};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_CAP: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "geiringer", version, about = "Rollout recombination, limiting frequencies and digraph action evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Generate a population from a random environment config.
    Gen {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Population file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the recombination chain and report running frequencies.
    Mix {
        #[command(flatten)]
        input: SchemaInput,
        #[arg(long, default_value_t = 100_000)]
        steps: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_IDENTITY_PROB)]
        identity_prob: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form limiting frequencies.
    Limit {
        #[command(flatten)]
        input: SchemaInput,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact orbit-average frequencies.
    Orbit {
        #[command(flatten)]
        input: SchemaInput,
        /// Largest number of orbit members (or shapes with --quotient).
        #[arg(long, default_value_t = DEFAULT_ORBIT_CAP)]
        cap: usize,
        /// Enumerate class shapes instead of labelled populations.
        #[arg(long)]
        quotient: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate actions with random walks on the class digraph.
    Eval {
        #[arg(long)]
        pop: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        walks: u64,
        #[arg(long)]
        seed: u64,
        /// Step cap per walk.
        #[arg(long, default_value_t = DEFAULT_STEP_CAP)]
        cap: u64,
        /// Worker threads (0 = all cores); results do not depend on it.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance suite.
    Verify {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SchemaInput {
    #[arg(long)]
    pop: PathBuf,
    #[arg(long = "schema")]
    schemata: Vec<String>,
    /// File with one schema per line.
    #[arg(long)]
    schemata_file: Option<PathBuf>,
}

/// A failed command: exit code and message for stderr.
#[derive(Debug)]
struct Failure(i32, String);

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        let code = match e {
            IoError::Read { .. } | IoError::Write { .. } => EXIT_USAGE,
            IoError::Parse { .. } | IoError::Invalid(_) => EXIT_VALIDATION,
        };
        let msg = match &e {
            IoError::Invalid(v) => {
                let lines: Vec<String> = v.violations.iter().map(|x| format!("  {x}")).collect();
                format!("invalid population:\n{}", lines.join("\n"))
            }
            other => other.to_string(),
        };
        Failure(code, msg)
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure(EXIT_USAGE, msg.into())
}

fn schemata(input: &SchemaInput) -> Result<Vec<Schema>, Failure> {
    let mut out = Vec::new();
    for s in &input.schemata {
        out.push(parse_schema(s).map_err(|e| usage(format!("schema {s:?}: {e}")))?);
    }
    if let Some(path) = &input.schemata_file {
        out.extend(io::read_schemata(path).map_err(|e| usage(e.to_string()))?);
    }
    if out.is_empty() {
        return Err(usage("no schemata given (use --schema or --schemata-file)"));
    }
    Ok(out)
}

fn report(command: &str, inputs: Value, outputs: Value) -> Value {
    json!({
        "command": command,
        "inputs": inputs,
        "outputs": outputs,
        "version": env!("CARGO_PKG_VERSION"),
    })
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn emit(out: &Option<PathBuf>, value: &Value, stdout: &mut dyn Write) -> Result<(), Failure> {
    let text = io::canonical_string(value);
    match out {
        Some(path) => io::write_text(path, &text)?,
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| usage(format!("cannot write report: {e}")))?,
    }
    Ok(())
}

fn schema_strings(hs: &[Schema]) -> Vec<String> {
    hs.iter().map(|h| h.to_string()).collect()
}

fn cmd_gen(env: &Path, seed: u64, out: &Path, stdout: &mut dyn Write) -> Result<(), Failure> {
    let cfg = io::read_sim_config(env)?;
    let model = make_random_pomdp(&cfg).map_err(|e| Failure(EXIT_VALIDATION, e.to_string()))?;
    let actions = cycled_actions(&model, cfg.rollouts);
    let g = generate_population(&model, &actions, seed).map_err(|e| Failure(EXIT_VALIDATION, e.to_string()))?;
    let file = PopulationFile {
        population: g.population,
        payoffs: g.payoffs,
    };
    io::write_population(out, &file)?;
    let r = report(
        "gen",
        json!({ "env": path_str(env), "config": cfg, "seed": seed }),
        json!({
            "population": path_str(out),
            "b": file.population.size(),
            "capped": g.traces.iter().filter(|t| t.capped).count(),
            "model": model,
        }),
    );
    emit(&None, &r, stdout)
}

fn cmd_mix(
    input: &SchemaInput,
    steps: u64,
    seed: u64,
    identity_prob: f64,
    out: &Option<PathBuf>,
    stdout: &mut dyn Write,
) -> Result<(), Failure> {
    let file = io::read_population(&input.pop)?;
    let hs = schemata(input)?;
    let mu = TransformDistribution::new(&file.population, identity_prob).map_err(|e| usage(e.to_string()))?;
    let trace = run_chain(&file.population, steps, &mu, &hs, seed);
    let d = down_report(&file.population);
    let denom = trace.b() as u64 * (steps + 1);
    let rows: Vec<Value> = hs
        .iter()
        .enumerate()
        .map(|(k, h)| {
            json!({
                "schema": h.to_string(),
                "count": trace.counts[k],
                "denominator": denom,
                "phi": trace.phi(k),
                "limit": d.limiting_frequency(h).to_string(),
            })
        })
        .collect();
    let r = report(
        "mix",
        json!({
            "pop": path_str(&input.pop),
            "schemata": schema_strings(&hs),
            "steps": steps,
            "seed": seed,
            "identity_prob": identity_prob,
        }),
        json!({ "b": trace.b(), "frequencies": rows }),
    );
    emit(out, &r, stdout)
}

fn cmd_limit(input: &SchemaInput, out: &Option<PathBuf>, stdout: &mut dyn Write) -> Result<(), Failure> {
    let file = io::read_population(&input.pop)?;
    let hs = schemata(input)?;
    let d = down_report(&file.population);
    let rows: Vec<Value> = hs
        .iter()
        .map(|h| json!({ "schema": h.to_string(), "frequency": d.limiting_frequency(h).to_string() }))
        .collect();
    let r = report(
        "limit",
        json!({ "pop": path_str(&input.pop), "schemata": schema_strings(&hs) }),
        json!({ "frequencies": rows, "down": d.to_json() }),
    );
    emit(out, &r, stdout)
}

fn cmd_orbit(
    input: &SchemaInput,
    cap: usize,
    quotient: bool,
    out: &Option<PathBuf>,
    stdout: &mut dyn Write,
) -> Result<(), Failure> {
    let file = io::read_population(&input.pop)?;
    let hs = schemata(input)?;
    let cap_failure = |e: crate::recomb::OrbitError| Failure(EXIT_CAP, e.to_string());
    let (size, shapes, freqs): (String, usize, Vec<String>) = if quotient {
        let q = enumerate_quotient_orbit(&file.population, cap).map_err(cap_failure)?;
        let f = hs.iter().map(|h| q.frequency(h).to_string()).collect();
        (q.size().to_string(), q.shape_count(), f)
    } else {
        let o = enumerate_orbit(&file.population, cap).map_err(cap_failure)?;
        let f = hs.iter().map(|h| o.frequency(h).to_string()).collect();
        (o.size().to_string(), o.shape_count(), f)
    };
    let rows: Vec<Value> = hs
        .iter()
        .zip(freqs)
        .map(|(h, f)| json!({ "schema": h.to_string(), "frequency": f }))
        .collect();
    let r = report(
        "orbit",
        json!({
            "pop": path_str(&input.pop),
            "schemata": schema_strings(&hs),
            "cap": cap,
            "quotient": quotient,
        }),
        json!({ "size": size, "shapes": shapes, "frequencies": rows }),
    );
    emit(out, &r, stdout)
}

fn cmd_eval(
    pop: &Path,
    walks: u64,
    seed: u64,
    cap: u64,
    workers: usize,
    out: &Option<PathBuf>,
    stdout: &mut dyn Write,
) -> Result<(), Failure> {
    let file = io::read_population(pop)?;
    let missing = file.payoffs.missing(file.population.terminals());
    if !missing.is_empty() {
        let names: Vec<String> = missing.into_iter().collect();
        return Err(Failure(EXIT_VALIDATION, format!("no payoff for terminals: {}", names.join(", "))));
    }
    let g = build_digraph(&file.population);
    let actions = file.population.actions();
    let cfg = EvalConfig { walks, cap, seed, workers };
    let ev = evaluate_actions(&g, &actions, &file.payoffs, cfg).map_err(|e| match e {
        EvalError::MissingPayoff(_) => Failure(EXIT_VALIDATION, e.to_string()),
        EvalError::Walk(w) => Failure(EXIT_VALIDATION, w.to_string()),
    })?;
    let mut rows = Map::new();
    for a in &actions {
        let entry = ev.q.get(a).copied().unwrap_or_default();
        let tally = ev.tallies.get(a).cloned().unwrap_or_default();
        let hits: Map<String, Value> = tally.hits.iter().map(|(t, n)| (t.to_string(), json!(n))).collect();
        let exact = match exact_expected_payoff(&g, a, &file.payoffs) {
            Ok(v) => json!(rational::format(&v)),
            Err(e) => json!({ "error": e.to_string() }),
        };
        rows.insert(
            a.to_string(),
            json!({
                "q": if entry.n > 0 { json!(entry.q) } else { Value::Null },
                "n": entry.n,
                "stddev": entry.stddev(),
                "cap_exceeded": tally.cap_exceeded,
                "hits": hits,
                "exact": exact,
            }),
        );
    }
    let capped: u64 = ev.tallies.values().map(|t| t.cap_exceeded).sum();
    let r = report(
        "eval",
        json!({ "pop": path_str(pop), "walks": walks, "seed": seed, "cap": cap }),
        json!({ "actions": rows, "digraph": g.to_json() }),
    );
    emit(out, &r, stdout)?;
    if capped > 0 {
        return Err(Failure(EXIT_CAP, format!("{capped} walks exceeded the step cap of {cap}")));
    }
    Ok(())
}

fn cmd_verify(
    seed: Option<u64>,
    workers: usize,
    out: &Option<PathBuf>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), Failure> {
    let mut opts = VerifyOptions {
        exe: std::env::current_exe().ok(),
        workers,
        ..Default::default()
    };
    if let Some(s) = seed {
        opts.seed = s;
    }
    let results = run_all(&opts);
    for r in &results {
        let _ = writeln!(stderr, "{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    let r = report(
        "verify",
        json!({ "seed": opts.seed }),
        json!({ "criteria": results, "failed": failed }),
    );
    emit(out, &r, stdout)?;
    if failed > 0 {
        return Err(Failure(EXIT_VERIFY, format!("{failed} criteria failed")));
    }
    Ok(())
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn dispatch<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = write!(stderr, "{e}");
            return EXIT_USAGE;
        }
        Err(e) => {
            // --help and --version
            let _ = write!(stdout, "{e}");
            return 0;
        }
    };
    let start = Instant::now();
    let name = match &cli.command {
        Cmd::Gen { .. } => "gen",
        Cmd::Mix { .. } => "mix",
        Cmd::Limit { .. } => "limit",
        Cmd::Orbit { .. } => "orbit",
        Cmd::Eval { .. } => "eval",
        Cmd::Verify { .. } => "verify",
    };
    let result = match &cli.command {
        Cmd::Gen { env, seed, out } => cmd_gen(env, *seed, out, stdout),
        Cmd::Mix { input, steps, seed, identity_prob, out } => {
            cmd_mix(input, *steps, *seed, *identity_prob, out, stdout)
        }
        Cmd::Limit { input, out } => cmd_limit(input, out, stdout),
        Cmd::Orbit { input, cap, quotient, out } => cmd_orbit(input, *cap, *quotient, out, stdout),
        Cmd::Eval { pop, walks, seed, cap, workers, out } => {
            cmd_eval(pop, *walks, *seed, *cap, *workers, out, stdout)
        }
        Cmd::Verify { seed, workers, out } => cmd_verify(*seed, *workers, out, stdout, stderr),
    };
    let _ = writeln!(stderr, "{name}: {:.3}s", start.elapsed().as_secs_f64());
    match result {
        Ok(()) => 0,
        Err(Failure(code, msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            code
        }
    }
}
