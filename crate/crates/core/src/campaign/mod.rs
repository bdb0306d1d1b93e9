//! Repeated fault-injection runs over program variants, with per-variant
//! and per-opcode detection metrics.
//!
//! Run `i` of every variant uses the same derived input and fault seed, so
//! variants are compared on paired runs. Results never depend on the
//! number of worker threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{parse_module, IrModule, ProgramInput, RESERVED_PREFIX};
use crate::seed;
use crate::sim::{
    DetectionEvent, FaultSpec, Program, RunOptions, RunStatus, SimError, Wrongness, DEFAULT_BUDGET,
};
use crate::transforms::{
    instrument_combined, BlockSize, CheckSiteMap, Interleaving, PassConfig, TransformError,
};

mod metrics;
mod report;

pub use metrics::{
    compute_bb_sensitivity, compute_edr, compute_ef, compute_input_breadth, compute_pc_sensitivity,
    compute_ttd, MetricError, Rational, TtdSummary,
};
pub use report::{serialize_report, MetricName, MetricValue, ReportFormat, Scope, Unit};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Variant {
    pub name: String,
    pub module: IrModule,
    pub sites: CheckSiteMap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputPolicy {
    /// Fresh random arguments each run, and random contents for every
    /// non-reserved global when `globals` is set.
    Random {
        #[serde(default)]
        globals: bool,
    },
    Fixed(ProgramInput),
}

impl Default for InputPolicy {
    fn default() -> Self {
        InputPolicy::Random { globals: false }
    }
}

#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub variants: Vec<Variant>,
    pub faults: Vec<FaultSpec>,
    pub runs: u64,
    pub seed: u64,
    pub budget: u64,
    pub inputs: InputPolicy,
}

impl CampaignConfig {
    pub fn new(variants: Vec<Variant>, faults: Vec<FaultSpec>, runs: u64, seed: u64) -> Self {
        CampaignConfig {
            variants,
            faults,
            runs,
            seed,
            budget: DEFAULT_BUDGET,
            inputs: InputPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        if self.runs == 0 {
            return Err(CampaignError::NoRuns);
        }
        let mut names = BTreeSet::new();
        for v in &self.variants {
            if !names.insert(v.name.as_str()) {
                return Err(CampaignError::DuplicateVariant(v.name.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("a campaign needs at least one run")]
    NoRuns,
    #[error("variant name {0:?} used twice")]
    DuplicateVariant(String),
    #[error("variant {name:?}: {source}")]
    Variant { name: String, source: SimError },
    #[error("variant {name:?}: {source}")]
    Instrument { name: String, source: TransformError },
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("thread pool: {0}")]
    Pool(String),
}

/// One budget-bounded execution of one variant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: u64,
    pub seed: u64,
    #[serde(flatten)]
    pub status: RunStatus,
    pub steps: u64,
    pub fault_activations: u64,
    pub detections: Vec<DetectionEvent>,
}

impl RunRecord {
    /// First detection by an inserted check.
    pub fn first_detection(&self) -> Option<u64> {
        self.detections.iter().find(|e| !e.native).map(|e| e.step)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpcodeReport {
    pub total_pcs: u64,
    pub failing_pcs: u64,
    pub total_bbs: u64,
    pub failing_bbs: u64,
    pub failing_inputs: u64,
    pub unique_failing_inputs: u64,
    /// Digest (hex) to number of failing executions with that input.
    pub failing_input_digests: BTreeMap<String, u64>,
    pub pc_sensitivity: Option<Rational>,
    pub bb_sensitivity: Option<Rational>,
    pub input_breadth: Option<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantReport {
    pub name: String,
    pub check_sites: u64,
    pub runs_total: u64,
    pub runs_with_detection: u64,
    pub runs_with_native_detection: u64,
    pub total_detections: u64,
    pub native_detections: u64,
    pub crashes: u64,
    pub crashes_after_detection: u64,
    pub hangs: u64,
    pub first_detection_step: Vec<Option<u64>>,
    pub edr: Rational,
    pub native_edr: Rational,
    pub ef: Rational,
    pub ttd: Option<TtdSummary>,
    pub wrongness: BTreeMap<Wrongness, u64>,
    pub opcodes: BTreeMap<String, OpcodeReport>,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub runs: u64,
    pub budget: u64,
    pub faults: Vec<FaultSpec>,
    pub variants: Vec<VariantReport>,
}

impl CampaignReport {
    pub fn variant(&self, name: &str) -> Option<&VariantReport> {
        self.variants.iter().find(|v| v.name == name)
    }
}

/// Input of run `index`. The fault seed varies per run even for fixed
/// inputs.
pub fn run_input(policy: &InputPolicy, program: &Program, globals: &[(String, u64)], campaign_seed: u64, index: u64) -> ProgramInput {
    let run_seed = seed::derive(campaign_seed, "run", index);
    match policy {
        InputPolicy::Fixed(input) => ProgramInput {
            seed: run_seed,
            ..input.clone()
        },
        InputPolicy::Random { globals: with_globals } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(campaign_seed, "input", index));
            let args = program.param_types().iter().map(|t| rng.random::<u64>() & t.mask()).collect();
            let memory = if *with_globals {
                globals
                    .iter()
                    .map(|(n, size)| {
                        let mut bytes = vec![0u8; *size as usize];
                        rng.fill(bytes.as_mut_slice());
                        (n.clone(), bytes)
                    })
                    .collect()
            } else {
                BTreeMap::new()
            };
            ProgramInput {
                seed: run_seed,
                args,
                memory,
            }
        }
    }
}

/// Execute every run of every variant on `jobs` worker threads (0 picks
/// the machine's parallelism).
pub fn run_campaign(cfg: &CampaignConfig, jobs: usize) -> Result<CampaignReport, CampaignError> {
    cfg.validate()?;
    let programs = cfg
        .variants
        .iter()
        .map(|v| {
            Program::compile(&v.module).map_err(|source| CampaignError::Variant {
                name: v.name.clone(),
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let globals: Vec<Vec<(String, u64)>> = cfg
        .variants
        .iter()
        .map(|v| {
            v.module
                .globals
                .iter()
                .filter(|g| !g.name.starts_with(RESERVED_PREFIX))
                .map(|g| (g.name.clone(), g.size as u64))
                .collect()
        })
        .collect();
    for (v, p) in cfg.variants.iter().zip(&programs) {
        let probe = run_input(&cfg.inputs, p, &[], cfg.seed, 0);
        p.check(&probe, &cfg.faults).map_err(|source| CampaignError::Variant {
            name: v.name.clone(),
            source,
        })?;
    }
    let opts = RunOptions {
        budget: cfg.budget,
        ..RunOptions::default()
    };
    let tasks: Vec<(usize, u64)> = (0..cfg.variants.len())
        .flat_map(|v| (0..cfg.runs).map(move |i| (v, i)))
        .collect();
    let exec = |&(v, i): &(usize, u64)| {
        let input = run_input(&cfg.inputs, &programs[v], &globals[v], cfg.seed, i);
        let out = programs[v].run(&input, &cfg.faults, &opts);
        RunRecord {
            index: i,
            seed: input.seed,
            status: out.status,
            steps: out.steps,
            fault_activations: out.fault_activations,
            detections: out.detections,
        }
    };
    log::info!(
        "campaign: {} variants x {} runs on {} threads",
        cfg.variants.len(),
        cfg.runs,
        if jobs == 0 { rayon::current_num_threads() } else { jobs }
    );
    let records: Vec<RunRecord> = if jobs == 1 {
        tasks.iter().map(exec).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CampaignError::Pool(e.to_string()))?
            .install(|| tasks.par_iter().map(exec).collect())
    };
    let mut records = records.into_iter();
    let variants = cfg
        .variants
        .iter()
        .map(|v| {
            let runs: Vec<RunRecord> = records.by_ref().take(cfg.runs as usize).collect();
            aggregate(v, runs)
        })
        .collect();
    Ok(CampaignReport {
        schema_version: REPORT_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        runs: cfg.runs,
        budget: cfg.budget,
        faults: cfg.faults.clone(),
        variants,
    })
}

#[derive(Default)]
struct OpcodeTally {
    total_pcs: BTreeSet<(String, u32)>,
    total_bbs: BTreeSet<(String, String)>,
    failing_pcs: BTreeSet<(String, u32)>,
    failing_bbs: BTreeSet<(String, String)>,
    inputs: Vec<u64>,
}

fn aggregate(v: &Variant, runs: Vec<RunRecord>) -> VariantReport {
    let entry = v.module.entry.clone();
    let mut tally: BTreeMap<String, OpcodeTally> = BTreeMap::new();
    for s in &v.sites.sites {
        let t = tally.entry(s.opcode.clone()).or_default();
        t.total_pcs.insert((s.function.clone(), s.original_pc));
        t.total_bbs.insert((s.function.clone(), s.block.clone()));
    }
    let mut wrongness = BTreeMap::new();
    let (mut total, mut native, mut rwd, mut rwn) = (0, 0, 0, 0);
    let (mut crashes, mut after, mut hangs) = (0, 0, 0);
    for r in &runs {
        let ithaca = r.detections.iter().filter(|e| !e.native).count() as u64;
        let nat = r.detections.len() as u64 - ithaca;
        total += ithaca;
        native += nat;
        rwd += u64::from(ithaca > 0);
        rwn += u64::from(nat > 0);
        match r.status {
            RunStatus::Trapped { .. } => {
                crashes += 1;
                after += u64::from(!r.detections.is_empty());
            }
            RunStatus::HungAtBudget => hangs += 1,
            RunStatus::Completed { .. } => {}
        }
        for e in r.detections.iter().filter(|e| !e.native) {
            *wrongness.entry(e.wrongness).or_insert(0) += 1;
            let (function, pc, block, opcode) = match v.sites.get(e.site) {
                Some(s) => (s.function.clone(), s.original_pc, s.block.clone(), s.opcode.clone()),
                None => (entry.clone(), e.original_pc.unwrap_or(u32::MAX), e.block.clone(), e.opcode.clone()),
            };
            let t = tally.entry(opcode).or_default();
            t.failing_pcs.insert((function.clone(), pc));
            t.failing_bbs.insert((function, block));
            t.inputs.push(e.input_digest);
        }
    }
    let first: Vec<Option<u64>> = runs.iter().map(RunRecord::first_detection).collect();
    let firsts: Vec<u64> = first.iter().flatten().copied().collect();
    let n = runs.len() as u64;
    let opcodes = tally
        .into_iter()
        .map(|(op, t)| {
            let mut digests = BTreeMap::new();
            for d in &t.inputs {
                *digests.entry(format!("{d:016x}")).or_insert(0) += 1;
            }
            let (fp, tp) = (t.failing_pcs.len() as u64, t.total_pcs.union(&t.failing_pcs).count() as u64);
            let (fb, tb) = (t.failing_bbs.len() as u64, t.total_bbs.union(&t.failing_bbs).count() as u64);
            let r = OpcodeReport {
                total_pcs: tp,
                failing_pcs: fp,
                total_bbs: tb,
                failing_bbs: fb,
                failing_inputs: t.inputs.len() as u64,
                unique_failing_inputs: digests.len() as u64,
                failing_input_digests: digests,
                pc_sensitivity: compute_pc_sensitivity(fp, tp),
                bb_sensitivity: compute_bb_sensitivity(fb, tb),
                input_breadth: compute_input_breadth(&t.inputs),
            };
            (op, r)
        })
        .collect();
    VariantReport {
        name: v.name.clone(),
        check_sites: v.sites.sites.len() as u64,
        runs_total: n,
        runs_with_detection: rwd,
        runs_with_native_detection: rwn,
        total_detections: total,
        native_detections: native,
        crashes,
        crashes_after_detection: after,
        hangs,
        first_detection_step: first,
        edr: compute_edr(rwd, n).expect("runs >= 1"),
        native_edr: compute_edr(rwn, n).expect("runs >= 1"),
        ef: compute_ef(total, n).expect("runs >= 1"),
        ttd: compute_ttd(&firsts),
        wrongness,
        opcodes,
        runs,
    }
}

/// Instrumentation applied to a variant loaded from a campaign file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrumentSpec {
    pub passes: Vec<String>,
    #[serde(default = "default_interleaving")]
    pub interleaving: Interleaving,
    #[serde(default = "default_block_size")]
    pub block_size: BlockSize,
}

fn default_interleaving() -> Interleaving {
    Interleaving::N(1)
}

fn default_block_size() -> BlockSize {
    BlockSize::N(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantFile {
    pub name: String,
    /// Path of a `.sir` program, relative to the campaign file.
    pub program: PathBuf,
    /// Instrument the program before running it.
    #[serde(default)]
    pub instrument: Option<InstrumentSpec>,
    /// Check-site map of an already instrumented program.
    #[serde(default)]
    pub sites: Option<PathBuf>,
}

/// On-disk campaign description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignFile {
    pub variants: Vec<VariantFile>,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    pub runs: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub budget: u64,
    #[serde(default)]
    pub inputs: InputPolicy,
}

fn default_budget() -> u64 {
    DEFAULT_BUDGET
}

impl CampaignFile {
    pub fn load(path: &Path) -> Result<CampaignFile, CampaignError> {
        let text = read(path)?;
        serde_json::from_str(&text).map_err(|e| CampaignError::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Resolve program paths against `base` and build the config. A `seed`
    /// overrides the file's.
    pub fn resolve(&self, base: &Path, seed: Option<u64>) -> Result<CampaignConfig, CampaignError> {
        let mut variants = Vec::with_capacity(self.variants.len());
        for vf in &self.variants {
            let path = base.join(&vf.program);
            let module = parse_module(&read(&path)?).map_err(|e| CampaignError::File {
                path: path.clone(),
                message: e.to_string(),
            })?;
            let (module, sites) = match &vf.instrument {
                Some(spec) => {
                    let cfg = PassConfig::parse_passes(&spec.passes.join(","))
                        .map(|p| {
                            PassConfig::new(p)
                                .with_interleaving(spec.interleaving)
                                .with_block_size(spec.block_size)
                        })
                        .map_err(|m| CampaignError::Instrument {
                            name: vf.name.clone(),
                            source: TransformError::InvalidConfig(m),
                        })?;
                    let out = instrument_combined(&module, &cfg).map_err(|source| CampaignError::Instrument {
                        name: vf.name.clone(),
                        source,
                    })?;
                    (out.module, out.sites)
                }
                None => {
                    let sites = match &vf.sites {
                        Some(p) => {
                            let p = base.join(p);
                            CheckSiteMap::from_json(&read(&p)?).map_err(|e| CampaignError::File {
                                path: p.clone(),
                                message: e.to_string(),
                            })?
                        }
                        None => CheckSiteMap::default(),
                    };
                    (module, sites)
                }
            };
            variants.push(Variant {
                name: vf.name.clone(),
                module,
                sites,
            });
        }
        Ok(CampaignConfig {
            variants,
            faults: self.faults.clone(),
            runs: self.runs,
            seed: seed.unwrap_or(self.seed),
            budget: self.budget,
            inputs: self.inputs.clone(),
        })
    }
}

fn read(path: &Path) -> Result<String, CampaignError> {
    fs::read_to_string(path).map_err(|e| CampaignError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
