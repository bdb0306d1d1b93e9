use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::memory::MemLevel;
use crate::ir::{BinOp, Opcode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextConfig {
    /// Length of the opcode history.
    pub history: usize,
    /// Functional units per port class.
    pub ports: u32,
    /// Producers executed at most this many steps ago are still in flight.
    pub inflight_window: u64,
}

impl Default for ContextConfig {
    fn default() -> Self {
        ContextConfig {
            history: 16,
            ports: 2,
            inflight_window: 2,
        }
    }
}

/// Opcode classes served by replicated functional units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortClass {
    Alu,
    Mul,
    Div,
    Load,
    Store,
    Branch,
}

impl PortClass {
    pub fn of(op: Opcode) -> Option<PortClass> {
        Some(match op {
            Opcode::Bin(BinOp::Mul) => PortClass::Mul,
            Opcode::Bin(BinOp::Udiv) => PortClass::Div,
            op if op.is_arith() => PortClass::Alu,
            Opcode::Load => PortClass::Load,
            Opcode::Store => PortClass::Store,
            Opcode::Br | Opcode::CondBr => PortClass::Branch,
            _ => return None,
        })
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Microarchitectural state seen by the instruction being executed.
#[derive(Debug, Clone)]
pub struct ExecutionContext {
    pub step: u64,
    /// Mnemonics of the most recently executed instructions, newest last.
    pub history: VecDeque<&'static str>,
    /// Unit chosen for the current instruction, if its class has ports.
    pub port: Option<u32>,
    /// For each operand of the current instruction, how many steps ago its
    /// producer executed (`None` for constants and parameters).
    pub operand_age: Vec<Option<u64>>,
    /// Where a load or store resolved; `None` for other instructions.
    pub level: Option<MemLevel>,
    /// Steps since an identical (opcode, type, operand values) instance last
    /// executed, when tracked.
    pub repeat_gap: Option<u64>,
    pub inflight_window: u64,
    config: ContextConfig,
    next_port: [u32; 6],
}

impl ExecutionContext {
    pub fn new(config: ContextConfig) -> Self {
        ExecutionContext {
            step: 0,
            history: VecDeque::with_capacity(config.history + 1),
            port: None,
            operand_age: Vec::new(),
            level: None,
            repeat_gap: None,
            inflight_window: config.inflight_window,
            config,
            next_port: [0; 6],
        }
    }

    /// Start a new dynamic instruction: assign its port round-robin within
    /// its class.
    pub fn begin(&mut self, step: u64, op: Opcode) {
        self.step = step;
        self.level = None;
        self.repeat_gap = None;
        self.operand_age.clear();
        self.port = PortClass::of(op).map(|c| {
            let slot = &mut self.next_port[c.index()];
            let p = *slot;
            *slot = (p + 1) % self.config.ports.max(1);
            p
        });
    }

    /// Record the finished instruction in the history.
    pub fn retire(&mut self, mnemonic: &'static str) {
        if self.config.history == 0 {
            return;
        }
        if self.history.len() == self.config.history {
            self.history.pop_front();
        }
        self.history.push_back(mnemonic);
    }

    pub fn history_contains(&self, mnemonic: &str, window: usize) -> bool {
        self.history.iter().rev().take(window).any(|m| *m == mnemonic)
    }

    /// Whether the producer of operand `i` is still within `window` steps.
    pub fn producer_in_flight(&self, i: usize, window: u64) -> bool {
        matches!(self.operand_age.get(i), Some(Some(age)) if *age <= window)
    }
}
