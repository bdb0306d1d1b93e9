//! Test-only helpers: a direct big-step evaluator over the IR, written
//! without the simulator's memory model, used as an oracle.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use ithaca_kit::ir::{BinOp, IrModule, Opcode, Operand, Pred, ProgramInput, Ty};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RefOutcome {
    Returned(u64),
    Trapped,
    OutOfSteps,
}

#[derive(Debug, Clone)]
pub struct RefRun {
    pub outcome: RefOutcome,
    /// Globals not prefixed with `__`.
    pub memory: BTreeMap<String, Vec<u8>>,
    /// `report_error` executions whose condition was false.
    pub reports: usize,
    pub steps: u64,
}

fn mask(ty: Ty) -> u64 {
    match ty.bits() {
        64 => u64::MAX,
        b => (1u64 << b) - 1,
    }
}

fn signed(v: u64, ty: Ty) -> i64 {
    let s = 64 - ty.bits();
    ((v << s) as i64) >> s
}

fn bin(op: BinOp, ty: Ty, a: u64, b: u64) -> Option<u64> {
    let (a, b, m) = (a & mask(ty), b & mask(ty), mask(ty));
    let w = ty.bits() as u64;
    Some(
        match op {
            BinOp::Add => a.wrapping_add(b),
            BinOp::Sub => a.wrapping_sub(b),
            BinOp::Mul => a.wrapping_mul(b),
            BinOp::Udiv => a.checked_div(b)?,
            BinOp::And => a & b,
            BinOp::Or => a | b,
            BinOp::Xor => a ^ b,
            BinOp::Shl => a << (b % w),
            BinOp::Lshr => a >> (b % w),
        } & m,
    )
}

fn cmp(p: Pred, ty: Ty, a: u64, b: u64) -> u64 {
    let (a, b) = (a & mask(ty), b & mask(ty));
    let (sa, sb) = (signed(a, ty), signed(b, ty));
    (match p {
        Pred::Eq => a == b,
        Pred::Ne => a != b,
        Pred::Ult => a < b,
        Pred::Ule => a <= b,
        Pred::Ugt => a > b,
        Pred::Uge => a >= b,
        Pred::Slt => sa < sb,
        Pred::Sle => sa <= sb,
        Pred::Sgt => sa > sb,
        Pred::Sge => sa >= sb,
    }) as u64
}

/// Evaluate the entry function directly over a flat address space laid out
/// like the simulator's (globals from 0x1000, 8-byte aligned).
pub fn reference_run(m: &IrModule, input: &ProgramInput, max_steps: u64) -> RefRun {
    let mut base = HashMap::new();
    let mut at = 0x1000u64;
    let mut mem: BTreeMap<u64, u8> = BTreeMap::new();
    let mut bounds = Vec::new();
    for g in &m.globals {
        base.insert(g.name.clone(), at);
        bounds.push((at, g.size as u64));
        let init = input.memory.get(&g.name);
        for k in 0..g.size {
            let b = init
                .and_then(|v| v.get(k))
                .or_else(|| g.init.get(k))
                .copied()
                .unwrap_or(0);
            mem.insert(at + k as u64, b);
        }
        at = (at + g.size as u64).div_ceil(8) * 8;
    }
    let in_bounds = |a: u64, w: u64| bounds.iter().any(|&(s, n)| a >= s && a.checked_add(w).is_some_and(|e| e <= s + n));
    let f = m.entry_function().expect("entry");
    let mut env: HashMap<&str, u64> = HashMap::new();
    for (p, a) in f.params.iter().zip(&input.args) {
        env.insert(&p.name, a & mask(p.ty));
    }
    let labels: HashMap<&str, usize> = f.blocks.iter().enumerate().map(|(i, b)| (b.label.as_str(), i)).collect();
    let (mut block, mut steps, mut reports) = (0usize, 0u64, 0usize);
    let finish = |outcome, mem: &BTreeMap<u64, u8>, reports, steps| RefRun {
        outcome,
        memory: m
            .globals
            .iter()
            .filter(|g| !g.name.starts_with("__"))
            .map(|g| {
                let s = base[&g.name];
                (g.name.clone(), (0..g.size as u64).map(|k| mem[&(s + k)]).collect())
            })
            .collect(),
        reports,
        steps,
    };
    'blocks: loop {
        for ins in &f.blocks[block].instrs {
            if steps == max_steps {
                return finish(RefOutcome::OutOfSteps, &mem, reports, steps);
            }
            steps += 1;
            let val = |o: &Operand| match o {
                Operand::Value(v) => env[v.as_str()],
                Operand::Const(c) => *c,
                Operand::Global(g) => base[g.as_str()],
                Operand::Label(_) => unreachable!(),
            };
            let ops: Vec<u64> = ins.operands.iter().filter(|o| o.as_label().is_none()).map(val).collect();
            let bytes = |t: Ty| t.bytes() as u64;
            let result = match ins.opcode {
                Opcode::Bin(op) => match bin(op, ins.ty, ops[0], ops[1]) {
                    Some(v) => Some(v),
                    None => return finish(RefOutcome::Trapped, &mem, reports, steps),
                },
                Opcode::Icmp(p) => Some(cmp(p, ins.ty, ops[0], ops[1])),
                Opcode::Select => Some(if ops[0] & 1 == 1 { ops[1] } else { ops[2] } & mask(ins.ty)),
                Opcode::Trunc { .. } => Some(ops[0] & mask(ins.ty)),
                Opcode::Zext { from } => Some(ops[0] & mask(from)),
                Opcode::PtrAdd => Some(ops[0].wrapping_add(ops[1])),
                Opcode::Load => {
                    let w = bytes(ins.ty);
                    if !in_bounds(ops[0], w) {
                        return finish(RefOutcome::Trapped, &mem, reports, steps);
                    }
                    Some((0..w).fold(0u64, |acc, k| acc | (mem[&(ops[0] + k)] as u64) << (8 * k)))
                }
                Opcode::Store => {
                    let w = bytes(ins.ty);
                    if !in_bounds(ops[1], w) {
                        return finish(RefOutcome::Trapped, &mem, reports, steps);
                    }
                    for k in 0..w {
                        mem.insert(ops[1] + k, (ops[0] >> (8 * k)) as u8);
                    }
                    None
                }
                Opcode::ClFlush => {
                    if !in_bounds(ops[0], 1) {
                        return finish(RefOutcome::Trapped, &mem, reports, steps);
                    }
                    None
                }
                Opcode::MFence => None,
                Opcode::ReportError(_) => {
                    if ops[1] & 1 == 0 {
                        reports += 1;
                    }
                    None
                }
                Opcode::Ret => return finish(RefOutcome::Returned(ops[0]), &mem, reports, steps),
                Opcode::Br | Opcode::CondBr => {
                    let targets: Vec<&str> = ins.targets().collect();
                    let t = if ins.opcode == Opcode::Br || ops[0] & 1 == 1 { targets[0] } else { targets[1] };
                    block = labels[t];
                    continue 'blocks;
                }
            };
            if let (Some(r), Some(v)) = (&ins.result, result) {
                env.insert(r, v);
            }
        }
        unreachable!("block without terminator");
    }
}
