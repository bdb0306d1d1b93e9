//! A small single-threaded SSA intermediate representation.
//!
//! Programs are integer-only with a flat byte-addressed memory. There are no
//! phi nodes: values that flow around loops or across diamond arms go through
//! memory. Every instruction carries an [`OriginTag`] so that instrumentation
//! passes can tell program instructions apart from the ones they inserted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

mod gen;
mod parse;
pub(crate) mod print;
pub(crate) mod validate;

pub mod semantics;

pub use gen::{gen_random_program, step_bound};
pub use parse::{parse_module, ParseError, ParseErrorKind};
pub use print::print_module;
pub use validate::{result_ty, validate_module, Violation};

/// Prefix reserved for globals owned by instrumentation (for example the
/// expected-target slot of the branch pass).
pub const RESERVED_PREFIX: &str = "__";

/// Value types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ty {
    I1,
    I8,
    I32,
    I64,
    Ptr,
}

impl Ty {
    pub fn bits(self) -> u32 {
        match self {
            Ty::I1 => 1,
            Ty::I8 => 8,
            Ty::I32 => 32,
            Ty::I64 | Ty::Ptr => 64,
        }
    }

    /// Width in memory. `i1` occupies one byte.
    pub fn bytes(self) -> usize {
        match self {
            Ty::I1 | Ty::I8 => 1,
            Ty::I32 => 4,
            Ty::I64 | Ty::Ptr => 8,
        }
    }

    pub fn mask(self) -> u64 {
        match self.bits() {
            64 => u64::MAX,
            b => (1u64 << b) - 1,
        }
    }

    pub fn is_int(self) -> bool {
        !matches!(self, Ty::Ptr)
    }

    pub fn name(self) -> &'static str {
        match self {
            Ty::I1 => "i1",
            Ty::I8 => "i8",
            Ty::I32 => "i32",
            Ty::I64 => "i64",
            Ty::Ptr => "ptr",
        }
    }

    pub fn from_name(s: &str) -> Option<Ty> {
        Some(match s {
            "i1" => Ty::I1,
            "i8" => Ty::I8,
            "i32" => Ty::I32,
            "i64" => Ty::I64,
            "ptr" => Ty::Ptr,
            _ => return None,
        })
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Udiv,
    And,
    Or,
    Xor,
    Shl,
    Lshr,
}

impl BinOp {
    pub const ALL: [BinOp; 9] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Udiv,
        BinOp::And,
        BinOp::Or,
        BinOp::Xor,
        BinOp::Shl,
        BinOp::Lshr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Udiv => "udiv",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Xor => "xor",
            BinOp::Shl => "shl",
            BinOp::Lshr => "lshr",
        }
    }
}

/// Integer comparison predicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pred {
    Eq,
    Ne,
    Ult,
    Ule,
    Ugt,
    Uge,
    Slt,
    Sle,
    Sgt,
    Sge,
}

impl Pred {
    pub const ALL: [Pred; 10] = [
        Pred::Eq,
        Pred::Ne,
        Pred::Ult,
        Pred::Ule,
        Pred::Ugt,
        Pred::Uge,
        Pred::Slt,
        Pred::Sle,
        Pred::Sgt,
        Pred::Sge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pred::Eq => "eq",
            Pred::Ne => "ne",
            Pred::Ult => "ult",
            Pred::Ule => "ule",
            Pred::Ugt => "ugt",
            Pred::Uge => "uge",
            Pred::Slt => "slt",
            Pred::Sle => "sle",
            Pred::Sgt => "sgt",
            Pred::Sge => "sge",
        }
    }

    pub fn from_name(s: &str) -> Option<Pred> {
        Pred::ALL.into_iter().find(|p| p.name() == s)
    }
}

/// What a `report_error` call is reporting on, which decides how the
/// simulator reconstructs the fault-free value of the checked instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    /// `orig` is the result of the checked instruction.
    Value,
    /// `orig` is the value operand of a checked store.
    Store,
    /// `orig` is the token of the branch target actually taken; the
    /// validation value is the expected token loaded from the slot.
    Branch,
}

impl ReportKind {
    pub fn name(self) -> &'static str {
        match self {
            ReportKind::Value => "value",
            ReportKind::Store => "store",
            ReportKind::Branch => "branch",
        }
    }

    pub fn from_name(s: &str) -> Option<ReportKind> {
        Some(match s {
            "value" => ReportKind::Value,
            "store" => ReportKind::Store,
            "branch" => ReportKind::Branch,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Opcode {
    Bin(BinOp),
    Icmp(Pred),
    Select,
    Trunc { from: Ty },
    Zext { from: Ty },
    PtrAdd,
    Load,
    Store,
    Br,
    CondBr,
    Ret,
    MFence,
    ClFlush,
    ReportError(ReportKind),
}

impl Opcode {
    /// Mnemonic without type or predicate decoration.
    pub fn mnemonic(&self) -> &'static str {
        match self {
            Opcode::Bin(op) => op.name(),
            Opcode::Icmp(_) => "icmp",
            Opcode::Select => "select",
            Opcode::Trunc { .. } => "trunc",
            Opcode::Zext { .. } => "zext",
            Opcode::PtrAdd => "ptradd",
            Opcode::Load => "load",
            Opcode::Store => "store",
            Opcode::Br => "br",
            Opcode::CondBr => "condbr",
            Opcode::Ret => "ret",
            Opcode::MFence => "mfence",
            Opcode::ClFlush => "clflush",
            Opcode::ReportError(_) => "report_error",
        }
    }

    pub fn is_terminator(&self) -> bool {
        matches!(self, Opcode::Br | Opcode::CondBr | Opcode::Ret)
    }

    /// Targets of the arithmetic pass: computational instructions including
    /// comparisons, selects, casts and address arithmetic.
    pub fn is_arith(&self) -> bool {
        matches!(
            self,
            Opcode::Bin(_)
                | Opcode::Icmp(_)
                | Opcode::Select
                | Opcode::Trunc { .. }
                | Opcode::Zext { .. }
                | Opcode::PtrAdd
        )
    }

    pub fn is_memory(&self) -> bool {
        matches!(self, Opcode::Load | Opcode::Store)
    }

    pub fn has_result(&self) -> bool {
        self.is_arith() || matches!(self, Opcode::Load)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    /// An SSA value (`%name`).
    Value(String),
    /// An integer constant, already masked to the operand type.
    Const(u64),
    /// The address of a global (`@name`), of type `ptr`.
    Global(String),
    /// A basic block label (branch targets only).
    Label(String),
}

impl Operand {
    pub fn value(name: impl Into<String>) -> Operand {
        Operand::Value(name.into())
    }

    pub fn as_value(&self) -> Option<&str> {
        match self {
            Operand::Value(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_label(&self) -> Option<&str> {
        match self {
            Operand::Label(l) => Some(l),
            _ => None,
        }
    }
}

/// Where an instruction came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OriginTag {
    Original,
    Validation,
    Check,
    Diversity,
    Reporting,
}

impl OriginTag {
    /// Suffix used in the textual form; `None` for original instructions.
    pub fn suffix(self) -> Option<&'static str> {
        match self {
            OriginTag::Original => None,
            OriginTag::Validation => Some("val"),
            OriginTag::Check => Some("chk"),
            OriginTag::Diversity => Some("div"),
            OriginTag::Reporting => Some("rep"),
        }
    }

    pub fn from_suffix(s: &str) -> Option<OriginTag> {
        Some(match s {
            "val" => OriginTag::Validation,
            "chk" => OriginTag::Check,
            "div" => OriginTag::Diversity,
            "rep" => OriginTag::Reporting,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub result: Option<String>,
    pub opcode: Opcode,
    /// Result type, or the operated-on type for instructions without a
    /// result (stored type for `store`, compared type for `report_error`,
    /// return type for `ret`). Unused by `br`, `condbr`, `mfence` and
    /// `clflush`, where it is `i1`, `i1`, `i1` and `ptr` respectively.
    pub ty: Ty,
    pub operands: Vec<Operand>,
    pub tag: OriginTag,
}

impl Instruction {
    pub fn new(result: Option<String>, opcode: Opcode, ty: Ty, operands: Vec<Operand>) -> Self {
        Instruction {
            result,
            opcode,
            ty,
            operands,
            tag: OriginTag::Original,
        }
    }

    pub fn tagged(mut self, tag: OriginTag) -> Self {
        self.tag = tag;
        self
    }

    pub fn is_original(&self) -> bool {
        self.tag == OriginTag::Original
    }

    /// Value names read by this instruction.
    pub fn uses(&self) -> impl Iterator<Item = &str> {
        self.operands.iter().filter_map(Operand::as_value)
    }

    /// Branch targets named by this instruction.
    pub fn targets(&self) -> impl Iterator<Item = &str> {
        self.operands.iter().filter_map(Operand::as_label)
    }

    pub fn br(target: &str) -> Self {
        Instruction::new(None, Opcode::Br, Ty::I1, vec![Operand::Label(target.into())])
    }

    pub fn condbr(cond: Operand, then: &str, otherwise: &str) -> Self {
        Instruction::new(
            None,
            Opcode::CondBr,
            Ty::I1,
            vec![
                cond,
                Operand::Label(then.into()),
                Operand::Label(otherwise.into()),
            ],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub label: String,
    pub instrs: Vec<Instruction>,
}

impl BasicBlock {
    pub fn new(label: impl Into<String>) -> Self {
        BasicBlock {
            label: label.into(),
            instrs: Vec::new(),
        }
    }

    pub fn terminator(&self) -> Option<&Instruction> {
        self.instrs.last().filter(|i| i.opcode.is_terminator())
    }

    /// Label of the program block this block was derived from. Blocks
    /// created by instrumentation are named `<base>.<suffix>`.
    pub fn base_label(&self) -> &str {
        base_label(&self.label)
    }
}

pub fn base_label(label: &str) -> &str {
    label.split('.').next().unwrap_or(label)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: Ty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub params: Vec<Param>,
    pub ret_ty: Ty,
    pub blocks: Vec<BasicBlock>,
}

impl Function {
    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label == label)
    }

    pub fn instruction_count(&self) -> usize {
        self.blocks.iter().map(|b| b.instrs.len()).sum()
    }

    /// Original instructions in block order, numbered from zero. The
    /// numbering survives instrumentation because passes never reorder
    /// original instructions and keep split-off blocks adjacent.
    pub fn original_pcs(&self) -> impl Iterator<Item = (u32, usize, usize)> + '_ {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(bi, b)| {
                b.instrs
                    .iter()
                    .enumerate()
                    .filter(|(_, i)| i.is_original())
                    .map(move |(ii, _)| (bi, ii))
            })
            .enumerate()
            .map(|(pc, (bi, ii))| (pc as u32, bi, ii))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Global {
    pub name: String,
    pub size: usize,
    pub init: Vec<u8>,
}

/// Transformation pass names, as recorded on instrumented modules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pass {
    Arith,
    Mem,
    MemDiv,
    Br,
}

impl Pass {
    pub const ALL: [Pass; 4] = [Pass::Arith, Pass::Mem, Pass::MemDiv, Pass::Br];

    pub fn name(self) -> &'static str {
        match self {
            Pass::Arith => "Arith",
            Pass::Mem => "Mem",
            Pass::MemDiv => "MemDiv",
            Pass::Br => "Br",
        }
    }

    pub fn from_name(s: &str) -> Option<Pass> {
        Pass::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrModule {
    pub globals: Vec<Global>,
    pub functions: Vec<Function>,
    pub entry: String,
    /// Passes already applied to this module.
    pub instrumented: BTreeSet<Pass>,
}

impl IrModule {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn entry_function(&self) -> Option<&Function> {
        self.function(&self.entry)
    }

    pub fn global(&self, name: &str) -> Option<&Global> {
        self.globals.iter().find(|g| g.name == name)
    }

    pub fn instruction_count(&self) -> usize {
        self.functions.iter().map(Function::instruction_count).sum()
    }

    /// Highest site id used by any `report_error` in the module.
    pub fn max_site_id(&self) -> Option<u32> {
        self.functions
            .iter()
            .flat_map(|f| f.blocks.iter())
            .flat_map(|b| b.instrs.iter())
            .filter(|i| matches!(i.opcode, Opcode::ReportError(_)))
            .filter_map(|i| match i.operands.first() {
                Some(Operand::Const(c)) => Some(*c as u32),
                _ => None,
            })
            .max()
    }
}

/// Arguments and initial memory for one execution of the entry function.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramInput {
    /// Seed for any randomness during the run (stochastic faults).
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub args: Vec<u64>,
    /// Initial bytes per global, overriding its initializer from offset 0.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub memory: BTreeMap<String, Vec<u8>>,
}
