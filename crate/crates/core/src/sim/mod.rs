//! Deterministic fault-injecting interpreter.
//!
//! Programs run on a model of a core with round-robin functional-unit
//! ports, a short opcode history, a producer in-flight window, and a store
//! buffer / L1 / main memory hierarchy. Alongside the hierarchy the
//! interpreter keeps a flat shadow memory of intended values and, for
//! every value, the fault-free result of its instruction on the operands it
//! actually received. `report_error` uses both to classify which side of a
//! failed check was wrong.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::semantics::{eval_pure, EvalError};
use crate::ir::{
    base_label, validate::successors, validate_module, IrModule, Opcode, Operand, OriginTag,
    ProgramInput, ReportKind, Ty, Violation, RESERVED_PREFIX,
};
use crate::seed;

pub mod context;
pub mod fault;
pub mod memory;

pub use context::{ContextConfig, ExecutionContext, PortClass};
pub use fault::{
    apply_fault, corrupt, Corruption, FaultEffect, FaultError, FaultKind, FaultSpec, FaultTarget,
    Trigger,
};
pub use memory::{memory_read, Layout, MemLevel, MemoryConfig, MemoryHierarchy, OutOfBounds};

pub const DEFAULT_BUDGET: u64 = 1_000_000;

/// Which side of a failed check disagreed with the fault-free value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wrongness {
    OriginalWrong,
    ValidationWrong,
    BothWrong,
}

pub fn classify_wrongness(golden: u64, original: u64, validations: &[u64]) -> Wrongness {
    if original == golden {
        Wrongness::ValidationWrong
    } else if validations.iter().all(|v| *v == golden) {
        Wrongness::OriginalWrong
    } else {
        Wrongness::BothWrong
    }
}

/// Hash of an instruction's operand values, used to count distinct failing
/// inputs.
pub fn input_digest(mnemonic: &str, operands: &[u64]) -> u64 {
    seed::fnv1a(
        mnemonic
            .bytes()
            .chain(operands.iter().flat_map(|v| v.to_le_bytes())),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub site: u32,
    pub step: u64,
    /// Reported by a check that was part of the program before
    /// instrumentation.
    pub native: bool,
    pub kind: ReportKind,
    /// The checked instruction.
    pub original_pc: Option<u32>,
    pub opcode: String,
    pub block: String,
    pub original_value: u64,
    pub validation_values: Vec<u64>,
    pub golden: u64,
    pub wrongness: Wrongness,
    pub input_digest: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "trap", rename_all = "snake_case")]
pub enum TrapReason {
    DivideByZero,
    OutOfBounds { address: u64, width: u64 },
    /// Halt-on-error mode stopped at the first report.
    ErrorReported,
    Malformed { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed { value: u64 },
    Trapped { reason: TrapReason },
    HungAtBudget,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    pub block: String,
    pub index: usize,
    pub pc: Option<u32>,
    pub opcode: String,
    pub tag: OriginTag,
    pub result: Option<u64>,
    pub port: Option<u32>,
    pub level: Option<MemLevel>,
    pub faults_fired: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutcome {
    #[serde(flatten)]
    pub status: RunStatus,
    pub steps: u64,
    pub detections: Vec<DetectionEvent>,
    /// Number of times any fault fired.
    pub fault_activations: u64,
    /// Architectural contents of every non-reserved global at the end.
    pub final_memory: BTreeMap<String, Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRecord>>,
}

impl RunOutcome {
    fn failed(status: RunStatus) -> Self {
        RunOutcome {
            status,
            steps: 0,
            detections: Vec::new(),
            fault_activations: 0,
            final_memory: BTreeMap::new(),
            trace: None,
        }
    }

    /// Step of the first detection, optionally counting native checks.
    pub fn first_detection(&self, include_native: bool) -> Option<u64> {
        self.detections
            .iter()
            .find(|e| include_native || !e.native)
            .map(|e| e.step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    pub budget: u64,
    pub trace: bool,
    pub halt_on_error: bool,
    pub context: ContextConfig,
    pub memory: MemoryConfig,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            budget: DEFAULT_BUDGET,
            trace: false,
            halt_on_error: false,
            context: ContextConfig::default(),
            memory: MemoryConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("module does not validate: {}", .0.first().map(ToString::to_string).unwrap_or_default())]
    Invalid(Vec<Violation>),
    #[error("entry function @{0} not found")]
    NoEntry(String),
    #[error("expected {expected} arguments, found {found}")]
    Arity { expected: usize, found: usize },
    #[error("input names unknown global @{0}")]
    UnknownGlobal(String),
    #[error("fault {index}: {error}")]
    Fault { index: usize, error: FaultError },
}

/// Execute the entry function of `m`.
pub fn run(m: &IrModule, input: &ProgramInput, faults: &[FaultSpec], budget: u64, trace: bool) -> RunOutcome {
    let opts = RunOptions {
        budget,
        trace,
        ..RunOptions::default()
    };
    match Program::compile(m) {
        Ok(p) => p.run(input, faults, &opts),
        Err(e) => RunOutcome::failed(RunStatus::Trapped {
            reason: TrapReason::Malformed { message: e.to_string() },
        }),
    }
}

#[derive(Debug, Clone, Copy)]
enum Arg {
    Slot(u32),
    Imm(u64),
}

#[derive(Debug, Clone)]
struct Report {
    site: u32,
    kind: ReportKind,
    native: bool,
    /// Index of the checked instruction in `Program::code`.
    checked: usize,
}

#[derive(Debug, Clone)]
struct Ins {
    op: Opcode,
    ty: Ty,
    args: Vec<Arg>,
    dst: Option<u32>,
    targets: [u32; 2],
    tag: OriginTag,
    pc: Option<u32>,
    block: u32,
    index: u32,
    report: Option<Report>,
    wants_digest: bool,
}

/// An entry function compiled for repeated execution.
#[derive(Debug, Clone)]
pub struct Program {
    code: Vec<Ins>,
    block_start: Vec<usize>,
    block_labels: Vec<String>,
    params: Vec<Ty>,
    slots: usize,
    layout: Layout,
    image: Vec<u8>,
    visible: Vec<(String, u64, u64)>,
}

enum Stop {
    Trap(TrapReason),
    Hang,
}

impl Program {
    pub fn compile(m: &IrModule) -> Result<Program, SimError> {
        let v = validate_module(m);
        if !v.is_empty() {
            return Err(SimError::Invalid(v));
        }
        let f = m
            .entry_function()
            .ok_or_else(|| SimError::NoEntry(m.entry.clone()))?;
        let layout = Layout::new(&m.globals);
        let image = layout.image(&m.globals);
        let mut slot_of: HashMap<&str, u32> = HashMap::new();
        for p in &f.params {
            let n = slot_of.len() as u32;
            slot_of.insert(&p.name, n);
        }
        for b in &f.blocks {
            for i in &b.instrs {
                if let Some(r) = &i.result {
                    let n = slot_of.len() as u32;
                    slot_of.insert(r, n);
                }
            }
        }
        let label_index: HashMap<&str, u32> = f
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (b.label.as_str(), i as u32))
            .collect();
        let pcs: HashMap<(usize, usize), u32> =
            f.original_pcs().map(|(pc, bi, ii)| ((bi, ii), pc)).collect();
        let mut flat_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut block_start = Vec::with_capacity(f.blocks.len());
        let mut code = Vec::with_capacity(f.instruction_count());
        for (bi, b) in f.blocks.iter().enumerate() {
            block_start.push(code.len());
            for (ii, i) in b.instrs.iter().enumerate() {
                flat_index.insert((bi, ii), code.len());
                let mut args = Vec::with_capacity(i.operands.len());
                let mut targets = [0u32; 2];
                let mut t = 0;
                for op in &i.operands {
                    match op {
                        Operand::Value(v) => args.push(Arg::Slot(slot_of[v.as_str()])),
                        Operand::Const(c) => args.push(Arg::Imm(*c)),
                        Operand::Global(g) => args.push(Arg::Imm(layout.address_of(g).unwrap())),
                        Operand::Label(l) => {
                            targets[t] = label_index[l.as_str()];
                            t += 1;
                        }
                    }
                }
                code.push(Ins {
                    op: i.opcode,
                    ty: i.ty,
                    args,
                    dst: i.result.as_deref().map(|r| slot_of[r]),
                    targets,
                    tag: i.tag,
                    pc: pcs.get(&(bi, ii)).copied(),
                    block: bi as u32,
                    index: ii as u32,
                    report: None,
                    wants_digest: false,
                });
            }
        }
        let checked = resolve_checked(f);
        for ((bi, ii), (cb, ci)) in checked {
            let at = flat_index[&(bi, ii)];
            let target = flat_index[&(cb, ci)];
            let i = &f.blocks[bi].instrs[ii];
            let Opcode::ReportError(kind) = i.opcode else { unreachable!() };
            let Operand::Const(site) = i.operands[0] else { unreachable!() };
            code[at].report = Some(Report {
                site: site as u32,
                kind,
                native: i.is_original(),
                checked: target,
            });
            code[target].wants_digest = true;
        }
        let visible = layout
            .regions()
            .filter(|(n, _, _)| !n.starts_with(RESERVED_PREFIX))
            .map(|(n, a, s)| (n.to_string(), a, s))
            .collect();
        Ok(Program {
            code,
            block_start,
            block_labels: f.blocks.iter().map(|b| b.label.clone()).collect(),
            params: f.params.iter().map(|p| p.ty).collect(),
            slots: slot_of.len(),
            layout,
            image,
            visible,
        })
    }

    fn initial_memory(&self, input: &ProgramInput) -> Result<Vec<u8>, SimError> {
        let mut img = self.image.clone();
        for (name, bytes) in &input.memory {
            let (_, at, size) = self
                .layout
                .regions()
                .find(|(n, _, _)| n == name)
                .ok_or_else(|| SimError::UnknownGlobal(name.clone()))?;
            let off = (at - memory::BASE_ADDRESS) as usize;
            let n = bytes.len().min(size as usize);
            img[off..off + n].copy_from_slice(&bytes[..n]);
        }
        Ok(img)
    }

    /// Check that `input` and `faults` fit this program.
    pub fn check(&self, input: &ProgramInput, faults: &[FaultSpec]) -> Result<(), SimError> {
        if input.args.len() != self.params.len() {
            return Err(SimError::Arity {
                expected: self.params.len(),
                found: input.args.len(),
            });
        }
        self.initial_memory(input)?;
        for (index, f) in faults.iter().enumerate() {
            f.validate().map_err(|error| SimError::Fault { index, error })?;
        }
        Ok(())
    }

    pub fn param_types(&self) -> &[Ty] {
        &self.params
    }

    pub fn run(&self, input: &ProgramInput, faults: &[FaultSpec], opts: &RunOptions) -> RunOutcome {
        if let Err(e) = self.check(input, faults) {
            return RunOutcome::failed(RunStatus::Trapped {
                reason: TrapReason::Malformed { message: e.to_string() },
            });
        }
        let image = self.initial_memory(input).expect("checked");
        let mut m = Machine {
            prog: self,
            faults,
            opts,
            values: vec![0; self.slots],
            golden: vec![0; self.slots],
            born: vec![u64::MAX; self.slots],
            digests: vec![0; self.code.len()],
            shadow: image.clone(),
            mem: MemoryHierarchy::new(self.layout.clone(), image, opts.memory),
            ctx: ExecutionContext::new(opts.context),
            rngs: (0..faults.len())
                .map(|k| ChaCha8Rng::seed_from_u64(seed::derive(input.seed, "fault", k as u64)))
                .collect(),
            gap_targets: faults
                .iter()
                .filter(|f| f.trigger.uses_min_gap())
                .filter_map(|f| match &f.target {
                    FaultTarget::Opcode(o) => Some(o.clone()),
                    FaultTarget::MemoryLevel(_) => None,
                })
                .collect(),
            last_seen: HashMap::new(),
            detections: Vec::new(),
            activations: 0,
            trace: opts.trace.then(Vec::new),
            ops: Vec::with_capacity(8),
            fired: Vec::new(),
        };
        for (i, (a, ty)) in input.args.iter().zip(&self.params).enumerate() {
            m.values[i] = a & ty.mask();
            m.golden[i] = a & ty.mask();
        }
        let (status, steps) = m.execute();
        let final_memory = self
            .visible
            .iter()
            .map(|(n, a, s)| (n.clone(), m.mem.snapshot(*a, *s)))
            .collect();
        RunOutcome {
            status,
            steps,
            detections: m.detections,
            fault_activations: m.activations,
            final_memory,
            trace: m.trace,
        }
    }
}

/// For every `report_error`, the instruction it reports on: the producer
/// of a checked value, the checked original store, or the checked
/// original conditional branch.
fn resolve_checked(f: &crate::ir::Function) -> Vec<((usize, usize), (usize, usize))> {
    let mut def: HashMap<&str, (usize, usize)> = HashMap::new();
    for (bi, b) in f.blocks.iter().enumerate() {
        for (ii, i) in b.instrs.iter().enumerate() {
            if let Some(r) = &i.result {
                def.insert(r, (bi, ii));
            }
        }
    }
    let succs = successors(f);
    let mut preds = vec![Vec::new(); f.blocks.len()];
    for (b, ss) in succs.iter().enumerate() {
        for &s in ss {
            preds[s].push(b);
        }
    }
    let mut out = Vec::new();
    for (bi, b) in f.blocks.iter().enumerate() {
        for (ii, i) in b.instrs.iter().enumerate() {
            let Opcode::ReportError(kind) = i.opcode else { continue };
            let value_def = |k: usize| i.operands.get(k).and_then(Operand::as_value).and_then(|v| def.get(v).copied());
            let checked = match kind {
                ReportKind::Value => value_def(2),
                ReportKind::Store => value_def(3).and_then(|(vb, vi)| {
                    let addr = &f.blocks[vb].instrs[vi].operands[0];
                    f.blocks[vb].instrs[..vi].iter().rposition(|s| {
                        s.is_original()
                            && s.opcode == Opcode::Store
                            && &s.operands[1] == addr
                            && s.operands[0] == i.operands[2]
                    })
                    .map(|si| (vb, si))
                }),
                ReportKind::Branch => preds[bi]
                    .first()
                    .and_then(|&tr| preds[tr].first())
                    .map(|&src| (src, f.blocks[src].instrs.len() - 1))
                    .filter(|&(src, t)| f.blocks[src].instrs[t].opcode == Opcode::CondBr),
            };
            out.push(((bi, ii), checked.unwrap_or((bi, ii))));
        }
    }
    out
}

struct Machine<'a> {
    prog: &'a Program,
    faults: &'a [FaultSpec],
    opts: &'a RunOptions,
    values: Vec<u64>,
    golden: Vec<u64>,
    born: Vec<u64>,
    digests: Vec<u64>,
    shadow: Vec<u8>,
    mem: MemoryHierarchy,
    ctx: ExecutionContext,
    rngs: Vec<ChaCha8Rng>,
    gap_targets: Vec<String>,
    last_seen: HashMap<u64, u64>,
    detections: Vec<DetectionEvent>,
    activations: u64,
    trace: Option<Vec<TraceRecord>>,
    ops: Vec<u64>,
    fired: Vec<usize>,
}

impl Machine<'_> {
    fn arg(&self, a: Arg) -> u64 {
        match a {
            Arg::Slot(s) => self.values[s as usize],
            Arg::Imm(v) => v,
        }
    }

    fn arg_golden(&self, a: Arg) -> u64 {
        match a {
            Arg::Slot(s) => self.golden[s as usize],
            Arg::Imm(v) => v,
        }
    }

    fn shadow_read(&self, address: u64, width: u64) -> u64 {
        let at = (address - memory::BASE_ADDRESS) as usize;
        let mut v = 0u64;
        for k in 0..width as usize {
            v |= (self.shadow[at + k] as u64) << (8 * k);
        }
        v
    }

    fn shadow_write(&mut self, address: u64, width: u64, value: u64) {
        let at = (address - memory::BASE_ADDRESS) as usize;
        for k in 0..width as usize {
            self.shadow[at + k] = (value >> (8 * k)) as u8;
        }
    }

    /// Apply every fault selected by `level_faults` that fires on the
    /// current instruction to `value`.
    fn faults_on(&mut self, op: Opcode, ty: Ty, mut value: u64, level_faults: bool) -> Result<u64, Stop> {
        for (k, f) in self.faults.iter().enumerate() {
            if matches!(f.target, FaultTarget::MemoryLevel(_)) != level_faults {
                continue;
            }
            if !f.triggers(op, &self.ops, &self.ctx) {
                continue;
            }
            if let Some(p) = f.probability {
                if self.rngs[k].random::<f64>() >= p {
                    continue;
                }
            }
            self.activations += 1;
            self.fired.push(k);
            match (f.kind, f.corruption) {
                (FaultKind::Unresponsive, _) => return Err(Stop::Hang),
                (_, Some(c)) => {
                    value = corrupt(c, op, ty, &self.ops, value).map_err(|_| Stop::Trap(TrapReason::DivideByZero))?;
                }
                (_, None) => {}
            }
        }
        Ok(value)
    }

    fn execute(&mut self) -> (RunStatus, u64) {
        let budget = self.opts.budget;
        let prog = self.prog;
        let faulty = !self.faults.is_empty();
        let track = faulty || self.opts.trace;
        let mut ip = 0usize;
        let mut steps = 0u64;
        loop {
            if steps >= budget {
                return (RunStatus::HungAtBudget, budget);
            }
            let ins = &prog.code[ip];
            let step = steps;
            steps += 1;
            self.ops.clear();
            for &a in &ins.args {
                let v = self.arg(a);
                self.ops.push(v);
            }
            if track {
                self.ctx.begin(step, ins.op);
                self.fired.clear();
                for &a in &ins.args {
                    let age = match a {
                        Arg::Slot(s) if self.born[s as usize] != u64::MAX => Some(step - self.born[s as usize]),
                        _ => None,
                    };
                    self.ctx.operand_age.push(age);
                }
                if !self.gap_targets.is_empty() && self.gap_targets.iter().any(|t| t == ins.op.mnemonic()) {
                    let key = input_digest(ins.op.mnemonic(), &self.ops) ^ (ins.ty.bits() as u64) << 56;
                    self.ctx.repeat_gap = self.last_seen.insert(key, step).map(|prev| step - prev);
                }
            }
            if ins.wants_digest {
                self.digests[ip] = input_digest(ins.op.mnemonic(), &self.ops);
            }
            let mut next = ip + 1;
            let mut result = None;
            let outcome: Result<Option<RunStatus>, Stop> = (|| {
                match ins.op {
                    Opcode::Load => {
                        let (address, width) = (self.ops[0], ins.ty.bytes() as u64);
                        let acc = self.mem.read(address, width).map_err(|e| {
                            Stop::Trap(TrapReason::OutOfBounds { address: e.address, width: e.width })
                        })?;
                        let golden = self.shadow_read(address, width);
                        let mut v = acc.value;
                        if faulty {
                            self.ctx.level = Some(acc.level);
                            let before = v;
                            v = self.faults_on(ins.op, ins.ty, v, true)?;
                            if v != before {
                                self.mem.overwrite(address, width, v, &acc.sources);
                            }
                            v = self.faults_on(ins.op, ins.ty, v, false)?;
                        } else if track {
                            self.ctx.level = Some(acc.level);
                        }
                        self.write(ins, v, golden, step);
                        result = Some(v);
                    }
                    Opcode::Store => {
                        let (value, address, width) = (self.ops[0], self.ops[1], ins.ty.bytes() as u64);
                        let mut v = value;
                        if faulty {
                            self.ctx.level = Some(MemLevel::StoreBuffer);
                            v = self.faults_on(ins.op, ins.ty, v, true)?;
                            v = self.faults_on(ins.op, ins.ty, v, false)?;
                        } else if track {
                            self.ctx.level = Some(MemLevel::StoreBuffer);
                        }
                        self.mem.write(address, width, v).map_err(|e| {
                            Stop::Trap(TrapReason::OutOfBounds { address: e.address, width: e.width })
                        })?;
                        self.shadow_write(address, width, value);
                    }
                    Opcode::Br => next = prog.block_start[ins.targets[0] as usize],
                    Opcode::CondBr => {
                        let mut c = self.ops[0] & 1;
                        if faulty {
                            c = self.faults_on(ins.op, ins.ty, c, false)? & 1;
                        }
                        result = Some(c);
                        let t = if c == 1 { ins.targets[0] } else { ins.targets[1] };
                        next = prog.block_start[t as usize];
                    }
                    Opcode::Ret => {
                        let mut v = self.ops[0];
                        if faulty {
                            v = self.faults_on(ins.op, ins.ty, v, false)?;
                        }
                        result = Some(v);
                        return Ok(Some(RunStatus::Completed { value: v }));
                    }
                    Opcode::MFence => {
                        if faulty {
                            self.faults_on(ins.op, ins.ty, 0, false)?;
                        }
                        self.mem.fence();
                    }
                    Opcode::ClFlush => {
                        if faulty {
                            self.faults_on(ins.op, ins.ty, 0, false)?;
                        }
                        self.mem.flush_line(self.ops[0]).map_err(|e| {
                            Stop::Trap(TrapReason::OutOfBounds { address: e.address, width: e.width })
                        })?;
                    }
                    Opcode::ReportError(_) => {
                        if faulty {
                            self.faults_on(ins.op, ins.ty, 0, false)?;
                        }
                        if self.ops[1] & 1 == 0 {
                            self.report(ins, step);
                            if self.opts.halt_on_error {
                                return Err(Stop::Trap(TrapReason::ErrorReported));
                            }
                        }
                    }
                    op => {
                        let golden = match eval_pure(op, ins.ty, &self.ops).expect("pure opcode") {
                            Ok(g) => g,
                            Err(EvalError::DivideByZero) => return Err(Stop::Trap(TrapReason::DivideByZero)),
                        };
                        let v = if faulty { self.faults_on(op, ins.ty, golden, false)? } else { golden };
                        self.write(ins, v, golden, step);
                        result = Some(v);
                    }
                }
                Ok(None)
            })();
            if let Some(t) = &mut self.trace {
                t.push(TraceRecord {
                    step,
                    block: prog.block_labels[ins.block as usize].clone(),
                    index: ins.index as usize,
                    pc: ins.pc,
                    opcode: ins.op.mnemonic().to_string(),
                    tag: ins.tag,
                    result,
                    port: self.ctx.port,
                    level: self.ctx.level,
                    faults_fired: self.fired.clone(),
                });
            }
            if track {
                self.ctx.retire(ins.op.mnemonic());
            }
            match outcome {
                Ok(Some(status)) => return (status, steps),
                Ok(None) => ip = next,
                Err(Stop::Trap(reason)) => return (RunStatus::Trapped { reason }, steps),
                Err(Stop::Hang) => return (RunStatus::HungAtBudget, budget),
            }
        }
    }

    fn write(&mut self, ins: &Ins, value: u64, golden: u64, step: u64) {
        if let Some(d) = ins.dst {
            let d = d as usize;
            self.values[d] = value;
            self.golden[d] = golden;
            self.born[d] = step;
        }
    }

    fn report(&mut self, ins: &Ins, step: u64) {
        let r = ins.report.as_ref().expect("report resolved at compile time");
        let checked = &self.prog.code[r.checked];
        let original = self.ops[2];
        let validations = self.ops[3..].to_vec();
        let golden = match r.kind {
            ReportKind::Value => self.arg_golden(ins.args[2]),
            ReportKind::Store => original,
            ReportKind::Branch => ins.args.get(3).map_or(original, |a| self.arg_golden(*a)),
        };
        self.detections.push(DetectionEvent {
            site: r.site,
            step,
            native: r.native,
            kind: r.kind,
            original_pc: checked.pc,
            opcode: checked.op.mnemonic().to_string(),
            block: base_label(&self.prog.block_labels[checked.block as usize]).to_string(),
            original_value: original,
            wrongness: classify_wrongness(golden, original, &validations),
            validation_values: validations,
            golden,
            input_digest: self.digests[r.checked],
        });
    }
}

#[cfg(test)]
mod tests;
