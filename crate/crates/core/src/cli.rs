//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 input error, 3 detection (from
//! `run --fail-on-detect`) or semantic mismatch (from `fuzz`).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::campaign::{run_campaign, serialize_report, CampaignFile, CampaignReport, ReportFormat};
use crate::ir::{gen_random_program, parse_module, print_module, step_bound, validate_module, IrModule, ProgramInput};
use crate::seed;
use crate::sim::{FaultSpec, Program, RunOptions, RunStatus, DEFAULT_BUDGET};
use crate::transforms::{instrument_combined, BlockSize, Interleaving, PassConfig, STANDARD_PASS_SETS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DETECTED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ithaca-kit", version, about = "Instruction-level error checking: instrument, simulate, and measure")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Instrument a program. Writes <stem>-<Passes>.sir, .map.json and
    /// .stats.json.
    Instrument(InstrumentArgs),
    /// Execute a program under optional faults. Prints one JSON line per
    /// detection, then an outcome line.
    Run(RunArgs),
    /// Run a campaign described by a JSON config and write its report.
    Campaign(CampaignArgs),
    /// Check that instrumentation preserves fault-free behaviour on
    /// generated programs.
    Fuzz(FuzzArgs),
    /// Re-render a JSON campaign report.
    Report(ReportArgs),
    /// Parse and validate a program.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct InstrumentArgs {
    /// Program in textual IR.
    input: PathBuf,
    /// Comma-separated passes: arith, mem, memdiv, br.
    #[arg(long = "pass", alias = "passes", default_value = "arith")]
    passes: String,
    /// Positive integer or `max`.
    #[arg(long, default_value = "1")]
    interleaving: Interleaving,
    /// Positive integer or `dep`.
    #[arg(long, default_value = "1")]
    block_size: BlockSize,
    /// Output directory; defaults to the input's directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    program: PathBuf,
    /// JSON file holding one fault or an array of faults.
    #[arg(long)]
    faults: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    /// Seed of the probabilistic fault draws; overrides the input file's.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated entry arguments.
    #[arg(long, value_delimiter = ',')]
    args: Vec<u64>,
    /// JSON input file with `args`, `memory` and `seed`.
    #[arg(long, conflicts_with = "args")]
    input: Option<PathBuf>,
    /// Write a JSON-lines step trace to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Stop at the first reported error.
    #[arg(long)]
    halt_on_error: bool,
    /// Exit with status 3 when any error is reported.
    #[arg(long)]
    fail_on_detect: bool,
}

#[derive(Debug, Args)]
struct CampaignArgs {
    #[arg(long)]
    config: PathBuf,
    /// Report destination; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Worker threads; 0 uses every core. The report does not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct FuzzArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of generated programs.
    #[arg(long, default_value_t = 100)]
    count: u64,
    /// Size budget of each program.
    #[arg(long, default_value_t = 40)]
    size: usize,
    /// Random inputs per program and pass set.
    #[arg(long, default_value_t = 3)]
    inputs: u64,
}

#[derive(Debug, Args)]
struct ReportArgs {
    report: PathBuf,
    #[arg(long, value_enum, default_value = "summary")]
    format: ReportArg,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    program: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportArg {
    Summary,
    Json,
    Csv,
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure(i32, String);

fn input_error(e: impl std::fmt::Display) -> Failure {
    Failure(EXIT_INPUT, e.to_string())
}

/// Parse `argv` (including the program name), run, and return the exit
/// code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Instrument(a) => instrument(a),
        Command::Run(a) => run(a),
        Command::Campaign(a) => campaign(a),
        Command::Fuzz(a) => fuzz(a),
        Command::Report(a) => report(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn load_module(path: &Path) -> Result<IrModule, Failure> {
    parse_module(&read_text(path)?).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

/// Write through a temporary file in the destination directory so readers
/// never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let fail = |e: std::io::Error| input_error(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

fn instrument(a: InstrumentArgs) -> Result<i32, Failure> {
    let passes = PassConfig::parse_passes(&a.passes).map_err(|e| Failure(EXIT_USAGE, e))?;
    let cfg = PassConfig::new(passes)
        .with_interleaving(a.interleaving)
        .with_block_size(a.block_size);
    cfg.validate().map_err(|e| Failure(EXIT_USAGE, e.to_string()))?;
    let m = load_module(&a.input)?;
    let out = instrument_combined(&m, &cfg).map_err(input_error)?;
    let stem = a
        .input
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| input_error("input path has no file name"))?;
    let dir = a
        .out_dir
        .or_else(|| a.input.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    let base = format!("{stem}-{}", cfg.name());
    let files = [
        (format!("{base}.sir"), print_module(&out.module)),
        (format!("{base}.map.json"), out.sites.to_json() + "\n"),
        (
            format!("{base}.stats.json"),
            serde_json::to_string_pretty(&out.stats).expect("stats serialize") + "\n",
        ),
    ];
    for (name, text) in &files {
        write_atomic(&dir.join(name), text.as_bytes())?;
    }
    log::info!("{} check sites, size ratio {:.3}", out.sites.sites.len(), out.stats.size_ratio);
    println!("{}", dir.join(&files[0].0).display());
    Ok(EXIT_OK)
}

fn load_faults(path: &Path) -> Result<Vec<FaultSpec>, Failure> {
    let text = read_text(path)?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    let faults = if v.is_array() {
        serde_json::from_value(v)
    } else {
        serde_json::from_value(v).map(|f| vec![f])
    };
    faults.map_err(|e| input_error(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct OutcomeLine<'a> {
    outcome: &'a RunStatus,
    steps: u64,
    detections: usize,
    fault_activations: u64,
}

fn run(a: RunArgs) -> Result<i32, Failure> {
    let m = load_module(&a.program)?;
    let program = Program::compile(&m).map_err(input_error)?;
    let faults = match &a.faults {
        Some(p) => load_faults(p)?,
        None => Vec::new(),
    };
    let mut input = match &a.input {
        Some(p) => serde_json::from_str::<ProgramInput>(&read_text(p)?)
            .map_err(|e| input_error(format!("{}: {e}", p.display())))?,
        None => ProgramInput {
            args: a.args.clone(),
            ..ProgramInput::default()
        },
    };
    if let Some(s) = a.seed {
        input.seed = s;
    }
    program.check(&input, &faults).map_err(input_error)?;
    let opts = RunOptions {
        budget: a.budget,
        trace: a.trace.is_some(),
        halt_on_error: a.halt_on_error,
        ..RunOptions::default()
    };
    let out = program.run(&input, &faults, &opts);
    if let (Some(path), Some(trace)) = (&a.trace, &out.trace) {
        let mut text = String::new();
        for r in trace {
            text.push_str(&serde_json::to_string(r).expect("trace serializes"));
            text.push('\n');
        }
        write_atomic(path, text.as_bytes())?;
    }
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    for d in &out.detections {
        let _ = writeln!(w, "{}", serde_json::to_string(d).expect("event serializes"));
    }
    let line = OutcomeLine {
        outcome: &out.status,
        steps: out.steps,
        detections: out.detections.len(),
        fault_activations: out.fault_activations,
    };
    let _ = writeln!(w, "{}", serde_json::to_string(&line).expect("outcome serializes"));
    Ok(if a.fail_on_detect && !out.detections.is_empty() {
        EXIT_DETECTED
    } else {
        EXIT_OK
    })
}

fn campaign(a: CampaignArgs) -> Result<i32, Failure> {
    let file = CampaignFile::load(&a.config).map_err(input_error)?;
    let base = a.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let cfg = file.resolve(&base, a.seed).map_err(input_error)?;
    let report = run_campaign(&cfg, a.jobs).map_err(input_error)?;
    let bytes = serialize_report(&report, a.format.into());
    match &a.output {
        Some(p) => write_atomic(p, &bytes)?,
        None => {
            let _ = std::io::stdout().write_all(&bytes);
        }
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct Mismatch {
    program_seed: u64,
    passes: String,
    args: Vec<u64>,
    reason: String,
}

fn fuzz(a: FuzzArgs) -> Result<i32, Failure> {
    let mut mismatches = 0u64;
    let mut checked = 0u64;
    for i in 0..a.count {
        let program_seed = seed::derive(a.seed, "program", i);
        let m = gen_random_program(program_seed, a.size);
        let budget = step_bound(&m);
        let plain = Program::compile(&m).map_err(|e| input_error(format!("generated program {program_seed}: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(a.seed, "fuzz-input", i));
        let inputs: Vec<ProgramInput> = (0..a.inputs)
            .map(|_| ProgramInput {
                args: plain.param_types().iter().map(|t| rng.random::<u64>() & t.mask()).collect(),
                ..ProgramInput::default()
            })
            .collect();
        let opts = RunOptions {
            budget,
            ..RunOptions::default()
        };
        let reference: Vec<_> = inputs.iter().map(|x| plain.run(x, &[], &opts)).collect();
        for set in STANDARD_PASS_SETS {
            let cfg = PassConfig::new(set.iter().copied());
            let report = |args: &[u64], reason: String| Mismatch {
                program_seed,
                passes: cfg.name(),
                args: args.to_vec(),
                reason,
            };
            let mut found = Vec::new();
            match instrument_combined(&m, &cfg).and_then(|o| {
                Program::compile(&o.module).map_err(|e| crate::transforms::TransformError::InvalidConfig(e.to_string()))
            }) {
                Err(e) => found.push(report(&[], e.to_string())),
                Ok(p) => {
                    // Instrumented code runs longer; scale the budget.
                    let opts = RunOptions {
                        budget: budget.saturating_mul(16),
                        ..RunOptions::default()
                    };
                    for (x, want) in inputs.iter().zip(&reference) {
                        checked += 1;
                        let got = p.run(x, &[], &opts);
                        if got.status != want.status {
                            found.push(report(&x.args, format!("status {:?} != {:?}", got.status, want.status)));
                        } else if got.final_memory != want.final_memory {
                            found.push(report(&x.args, "final memory differs".into()));
                        } else if !got.detections.is_empty() {
                            found.push(report(&x.args, format!("{} detections", got.detections.len())));
                        }
                    }
                }
            }
            for f in found {
                mismatches += 1;
                println!("{}", serde_json::to_string(&f).expect("mismatch serializes"));
            }
        }
    }
    println!(
        "{}",
        serde_json::json!({"programs": a.count, "executions": checked, "mismatches": mismatches})
    );
    Ok(if mismatches > 0 { EXIT_DETECTED } else { EXIT_OK })
}

fn summary(r: &CampaignReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "schema {} tool {} seed {} runs {} budget {}", r.schema_version, r.tool_version, r.seed, r.runs, r.budget);
    for v in &r.variants {
        let ttd = v.ttd.map(|t| format!("{:.1}", t.median.to_f64())).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "{}: EDR {:.2}% EF {:.3} TTD(median) {} native EDR {:.2}% crashes {} hangs {} sites {}",
            v.name,
            v.edr.to_f64(),
            v.ef.to_f64(),
            ttd,
            v.native_edr.to_f64(),
            v.crashes,
            v.hangs,
            v.check_sites
        );
        for (op, o) in &v.opcodes {
            let pct = |r: Option<crate::campaign::Rational>| r.map(|r| format!("{:.2}%", r.to_f64())).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "  {op:<8} PCs {}/{} ({}) BBs {}/{} ({}) inputs {}/{} ({})",
                o.failing_pcs,
                o.total_pcs,
                pct(o.pc_sensitivity),
                o.failing_bbs,
                o.total_bbs,
                pct(o.bb_sensitivity),
                o.unique_failing_inputs,
                o.failing_inputs,
                pct(o.input_breadth)
            );
        }
    }
    s
}

fn report(a: ReportArgs) -> Result<i32, Failure> {
    let text = read_text(&a.report)?;
    let r: CampaignReport = serde_json::from_str(&text).map_err(|e| input_error(format!("{}: {e}", a.report.display())))?;
    let bytes = match a.format {
        ReportArg::Summary => summary(&r).into_bytes(),
        ReportArg::Json => serialize_report(&r, ReportFormat::Json),
        ReportArg::Csv => serialize_report(&r, ReportFormat::Csv),
    };
    match &a.output {
        Some(p) => write_atomic(p, &bytes)?,
        None => {
            let _ = std::io::stdout().write_all(&bytes);
        }
    }
    Ok(EXIT_OK)
}

fn validate(a: ValidateArgs) -> Result<i32, Failure> {
    let m = load_module(&a.program)?;
    let violations = validate_module(&m);
    if violations.is_empty() {
        println!("ok: {} instructions", m.instruction_count());
        Ok(EXIT_OK)
    } else {
        for v in &violations {
            eprintln!("{v}");
        }
        Err(input_error(format!("{} violations", violations.len())))
    }
}
