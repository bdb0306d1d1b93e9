//! Permanent-fault descriptions and their firing rules.
//!
//! A fault names a target (an opcode, or a memory level for loads), a
//! trigger predicate over the instruction's operand values and execution
//! context, and a corruption of the produced value. Consistent faults may
//! only look at the instruction and its operand values; inconsistent ones
//! must depend on the context; unresponsive ones stall the machine.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::context::ExecutionContext;
use super::memory::MemLevel;
use crate::ir::semantics::{eval_pure, EvalError};
use crate::ir::{Opcode, Ty};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    Consistent,
    Inconsistent,
    Unresponsive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultTarget {
    /// Every dynamic instance of the opcode with this mnemonic.
    Opcode(String),
    /// Loads whose bytes resolve at this level; the corruption is written
    /// back in place. A store-buffer target also covers stores.
    MemoryLevel(MemLevel),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Always,
    /// Operand values, in operand order, equal this list.
    InputEquals(Vec<u64>),
    PortEquals(u32),
    /// The opcode occurs among the last `window` executed instructions.
    HistoryContains { opcode: String, window: usize },
    /// The producer of the operand executed at most `window` steps ago.
    ProducerInFlight { operand: usize, window: u64 },
    LevelEquals(MemLevel),
    /// An identical (opcode, type, operand values) instance executed at
    /// least this many steps earlier, and none more recently.
    MinGap(u64),
    All(Vec<Trigger>),
}

impl Trigger {
    pub fn references_context(&self) -> bool {
        match self {
            Trigger::Always | Trigger::InputEquals(_) => false,
            Trigger::All(ts) => ts.iter().any(Trigger::references_context),
            _ => true,
        }
    }

    pub fn uses_min_gap(&self) -> bool {
        match self {
            Trigger::MinGap(_) => true,
            Trigger::All(ts) => ts.iter().any(Trigger::uses_min_gap),
            _ => false,
        }
    }

    pub fn holds(&self, operands: &[u64], ctx: &ExecutionContext) -> bool {
        match self {
            Trigger::Always => true,
            Trigger::InputEquals(want) => want.as_slice() == operands,
            Trigger::PortEquals(p) => ctx.port == Some(*p),
            Trigger::HistoryContains { opcode, window } => ctx.history_contains(opcode, *window),
            Trigger::ProducerInFlight { operand, window } => ctx.producer_in_flight(*operand, *window),
            Trigger::LevelEquals(l) => ctx.level == Some(*l),
            Trigger::MinGap(g) => ctx.repeat_gap.is_some_and(|gap| gap >= *g),
            Trigger::All(ts) => ts.iter().all(|t| t.holds(operands, ctx)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    Bitflip(u64),
    /// Recompute with this operand read as zero. Loads yield zero and
    /// stores, branches and returns use zero as their value.
    StuckOperandZero(usize),
    FixedOutput(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub kind: FaultKind,
    pub target: FaultTarget,
    #[serde(default = "always")]
    pub trigger: Trigger,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption: Option<Corruption>,
    /// Chance that a holding trigger actually fires, drawn per evaluation
    /// from the run's seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
}

fn always() -> Trigger {
    Trigger::Always
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FaultError {
    #[error("consistent faults may only use always/input-equals triggers on opcode targets")]
    ConsistentUsesContext,
    #[error("inconsistent faults must depend on the execution context")]
    InconsistentWithoutContext,
    #[error("unresponsive faults take no corruption")]
    UnresponsiveWithCorruption,
    #[error("{0:?} faults need a corruption")]
    MissingCorruption(FaultKind),
    #[error("unknown opcode `{0}`")]
    UnknownOpcode(String),
    #[error("probability must lie in [0, 1]")]
    BadProbability,
}

const MNEMONICS: [&str; 22] = [
    "add", "sub", "mul", "udiv", "and", "or", "xor", "shl", "lshr", "trunc", "zext", "icmp",
    "select", "ptradd", "load", "store", "br", "condbr", "ret", "mfence", "clflush", "report_error",
];

/// What a fault does to one dynamic instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultEffect {
    NoEffect,
    Corrupt(u64),
    Hang,
    Trap(EvalError),
}

impl FaultSpec {
    pub fn new(kind: FaultKind, target: FaultTarget, trigger: Trigger, corruption: Option<Corruption>) -> Self {
        FaultSpec {
            name: None,
            kind,
            target,
            trigger,
            corruption,
            probability: None,
        }
    }

    pub fn with_probability(mut self, p: f64) -> Self {
        self.probability = Some(p);
        self
    }

    pub fn validate(&self) -> Result<(), FaultError> {
        if let FaultTarget::Opcode(op) = &self.target {
            if !MNEMONICS.contains(&op.as_str()) {
                return Err(FaultError::UnknownOpcode(op.clone()));
            }
        }
        if let Some(p) = self.probability {
            if !(0.0..=1.0).contains(&p) {
                return Err(FaultError::BadProbability);
            }
        }
        let level_target = matches!(self.target, FaultTarget::MemoryLevel(_));
        match self.kind {
            FaultKind::Consistent => {
                if self.trigger.references_context() || level_target || self.probability.is_some() {
                    return Err(FaultError::ConsistentUsesContext);
                }
            }
            FaultKind::Inconsistent => {
                if !(self.trigger.references_context() || level_target || self.probability.is_some()) {
                    return Err(FaultError::InconsistentWithoutContext);
                }
            }
            FaultKind::Unresponsive => {
                if self.corruption.is_some() {
                    return Err(FaultError::UnresponsiveWithCorruption);
                }
            }
        }
        if self.kind != FaultKind::Unresponsive && self.corruption.is_none() {
            return Err(FaultError::MissingCorruption(self.kind));
        }
        Ok(())
    }

    pub fn matches_target(&self, opcode: Opcode, ctx: &ExecutionContext) -> bool {
        match &self.target {
            FaultTarget::Opcode(m) => m == opcode.mnemonic(),
            FaultTarget::MemoryLevel(l) => match opcode {
                Opcode::Load => ctx.level == Some(*l),
                Opcode::Store => *l == MemLevel::StoreBuffer,
                _ => false,
            },
        }
    }

    /// Target and trigger both hold. Ignores `probability`.
    pub fn triggers(&self, opcode: Opcode, operands: &[u64], ctx: &ExecutionContext) -> bool {
        self.matches_target(opcode, ctx) && self.trigger.holds(operands, ctx)
    }
}

fn result_mask(opcode: Opcode, ty: Ty) -> u64 {
    match opcode {
        Opcode::Icmp(_) | Opcode::CondBr => Ty::I1.mask(),
        _ => ty.mask(),
    }
}

/// The corrupted value of an instruction whose fault-free value is `golden`.
pub fn corrupt(
    c: Corruption,
    opcode: Opcode,
    ty: Ty,
    operands: &[u64],
    golden: u64,
) -> Result<u64, EvalError> {
    let mask = result_mask(opcode, ty);
    Ok(match c {
        Corruption::Bitflip(m) => (golden ^ m) & mask,
        Corruption::FixedOutput(v) => v & mask,
        Corruption::StuckOperandZero(i) => {
            if i >= operands.len() {
                return Ok(golden);
            }
            let mut ops = operands.to_vec();
            ops[i] = 0;
            match eval_pure(opcode, ty, &ops) {
                Some(r) => r? & mask,
                None => 0,
            }
        }
    })
}

/// Deterministic effect of `f` on one dynamic instruction. The seeded
/// probability draw is applied by the caller.
pub fn apply_fault(
    f: &FaultSpec,
    opcode: Opcode,
    ty: Ty,
    operands: &[u64],
    ctx: &ExecutionContext,
    golden: u64,
) -> FaultEffect {
    if !f.triggers(opcode, operands, ctx) {
        return FaultEffect::NoEffect;
    }
    match (f.kind, f.corruption) {
        (FaultKind::Unresponsive, _) => FaultEffect::Hang,
        (_, None) => FaultEffect::NoEffect,
        (_, Some(c)) => match corrupt(c, opcode, ty, operands, golden) {
            Ok(v) => FaultEffect::Corrupt(v),
            Err(e) => FaultEffect::Trap(e),
        },
    }
}
