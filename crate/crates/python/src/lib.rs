//! Python bindings. Programs travel as IR text; structured results come
//! back as Python objects decoded from JSON.

use std::path::Path;

use ithaca_kit::campaign::{run_campaign as run_campaign_rs, serialize_report, CampaignFile, ReportFormat};
use ithaca_kit::ir::{gen_random_program, parse_module, print_module, validate_module, IrModule, ProgramInput};
use ithaca_kit::sim::{FaultSpec, Program, RunOptions};
use ithaca_kit::transforms::{instrument_combined, BlockSize, Interleaving, PassConfig};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn loads<'py>(py: Python<'py>, json: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (json,))
}

fn module(text: &str) -> PyResult<IrModule> {
    parse_module(text).map_err(value_error)
}

/// Parse and print in canonical form.
#[pyfunction]
fn canonicalize(text: &str) -> PyResult<String> {
    Ok(print_module(&module(text)?))
}

/// Violations of a program that parses but does not validate; empty when
/// the program is well formed. Syntax errors raise ValueError.
#[pyfunction]
fn validate(text: &str) -> PyResult<Vec<String>> {
    match parse_module(text) {
        Ok(m) => Ok(validate_module(&m).iter().map(ToString::to_string).collect()),
        Err(e) => match e.kind {
            ithaca_kit::ir::ParseErrorKind::Invalid(v) => Ok(v.iter().map(ToString::to_string).collect()),
            _ => Err(value_error(e)),
        },
    }
}

/// Returns `(program_text, site_map, stats)`.
#[pyfunction]
#[pyo3(signature = (text, passes = "arith", interleaving = "1", block_size = "1"))]
fn instrument<'py>(
    py: Python<'py>,
    text: &str,
    passes: &str,
    interleaving: &str,
    block_size: &str,
) -> PyResult<(String, Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    let il: Interleaving = interleaving.parse().map_err(value_error)?;
    let bs: BlockSize = block_size.parse().map_err(value_error)?;
    let cfg = PassConfig::new(PassConfig::parse_passes(passes).map_err(value_error)?)
        .with_interleaving(il)
        .with_block_size(bs);
    let out = instrument_combined(&module(text)?, &cfg).map_err(value_error)?;
    let stats = serde_json::to_string(&out.stats).map_err(value_error)?;
    Ok((print_module(&out.module), loads(py, &out.sites.to_json())?, loads(py, &stats)?))
}

/// Execute a program. `faults` is a JSON list of fault specifications.
#[pyfunction]
#[pyo3(signature = (text, args = Vec::new(), faults = "[]", budget = 1_000_000, seed = 0, trace = false))]
fn run<'py>(
    py: Python<'py>,
    text: &str,
    args: Vec<u64>,
    faults: &str,
    budget: u64,
    seed: u64,
    trace: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let faults: Vec<FaultSpec> = serde_json::from_str(faults).map_err(value_error)?;
    let program = Program::compile(&module(text)?).map_err(value_error)?;
    let input = ProgramInput {
        seed,
        args,
        ..ProgramInput::default()
    };
    program.check(&input, &faults).map_err(value_error)?;
    let opts = RunOptions {
        budget,
        trace,
        ..RunOptions::default()
    };
    let out = program.run(&input, &faults, &opts);
    loads(py, &serde_json::to_string(&out).map_err(value_error)?)
}

/// Run a campaign from its JSON description; program paths resolve against
/// `base_dir`. Returns the report as JSON or CSV text.
#[pyfunction]
#[pyo3(signature = (config, base_dir = ".", jobs = 1, format = "json"))]
fn run_campaign(config: &str, base_dir: &str, jobs: usize, format: &str) -> PyResult<String> {
    let file: CampaignFile = serde_json::from_str(config).map_err(value_error)?;
    let cfg = file.resolve(Path::new(base_dir), None).map_err(value_error)?;
    let report = run_campaign_rs(&cfg, jobs).map_err(value_error)?;
    let format: ReportFormat = format.parse().map_err(value_error)?;
    String::from_utf8(serialize_report(&report, format)).map_err(value_error)
}

/// A random terminating program.
#[pyfunction]
#[pyo3(signature = (seed, size = 40))]
fn generate(seed: u64, size: usize) -> String {
    print_module(&gen_random_program(seed, size))
}

#[pymodule]
#[pyo3(name = "ithaca_kit")]
pub fn ithaca_kit_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(canonicalize, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(instrument, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_campaign, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    Ok(())
}
