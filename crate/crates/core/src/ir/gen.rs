//! Seeded random program generator.
//!
//! Generated programs take two `i64` arguments, compute over a 64-byte data
//! global, branch on comparisons (diamonds) and run counted loops whose trip
//! counts are compile-time constants. Loop counters live in memory. Every
//! generated program validates and terminates.

use std::collections::{BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::validate::{immediate_dominators, successors};
use super::{
    BasicBlock, BinOp, Function, Global, Instruction, IrModule, Opcode, Operand, Param, Pred, Ty,
};

/// Largest loop trip count the generator emits.
pub const MAX_TRIP_COUNT: u64 = 64;

const DATA: &str = "data";
const DATA_SIZE: usize = 64;
const MAX_LOOP_DEPTH: usize = 2;

struct Gen {
    rng: ChaCha8Rng,
    budget: usize,
    blocks: Vec<BasicBlock>,
    cur: usize,
    pool: Vec<(String, Ty)>,
    globals: Vec<Global>,
    names: usize,
    labels: usize,
}

impl Gen {
    fn fresh(&mut self, prefix: &str) -> String {
        self.names += 1;
        format!("{prefix}{}", self.names)
    }

    fn fresh_label(&mut self, prefix: &str) -> String {
        self.labels += 1;
        format!("{prefix}{}", self.labels)
    }

    fn emit(&mut self, ins: Instruction) {
        self.budget = self.budget.saturating_sub(1);
        self.blocks[self.cur].instrs.push(ins);
    }

    fn def(&mut self, opcode: Opcode, ty: Ty, operands: Vec<Operand>, result_ty: Ty) -> String {
        let name = self.fresh("v");
        self.emit(Instruction::new(Some(name.clone()), opcode, ty, operands));
        self.pool.push((name.clone(), result_ty));
        name
    }

    fn new_block(&mut self, label: String) -> usize {
        self.blocks.push(BasicBlock::new(label));
        self.blocks.len() - 1
    }

    fn constant(&mut self, ty: Ty) -> Operand {
        let v: u64 = match self.rng.random_range(0..4) {
            0 => self.rng.random_range(0..4),
            1 => self.rng.random_range(0..256),
            _ => self.rng.random(),
        };
        Operand::Const(v & ty.mask())
    }

    fn pick(&mut self, ty: Ty) -> Operand {
        let candidates: Vec<usize> = (0..self.pool.len()).filter(|&i| self.pool[i].1 == ty).collect();
        if candidates.is_empty() || self.rng.random_bool(0.15) {
            return self.constant(ty);
        }
        let i = candidates[self.rng.random_range(0..candidates.len())];
        Operand::Value(self.pool[i].0.clone())
    }

    fn pick_int_ty(&mut self) -> Ty {
        match self.rng.random_range(0..10) {
            0..=5 => Ty::I64,
            6..=7 => Ty::I32,
            8 => Ty::I8,
            _ => Ty::I1,
        }
    }

    /// Address into the data global aligned for `ty`.
    fn address(&mut self, ty: Ty) -> Operand {
        let align_mask = (DATA_SIZE - ty.bytes()) as u64 & !(ty.bytes() as u64 - 1);
        let base = self.pick(Ty::I64);
        let off = self.def(
            Opcode::Bin(BinOp::And),
            Ty::I64,
            vec![base, Operand::Const(align_mask)],
            Ty::I64,
        );
        let p = self.def(
            Opcode::PtrAdd,
            Ty::Ptr,
            vec![Operand::Global(DATA.into()), Operand::value(off)],
            Ty::Ptr,
        );
        Operand::value(p)
    }

    fn one_instruction(&mut self) {
        match self.rng.random_range(0..20) {
            0..=8 => {
                let ty = self.pick_int_ty();
                let ops = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::And, BinOp::Or, BinOp::Xor, BinOp::Shl, BinOp::Lshr];
                let op = ops[self.rng.random_range(0..ops.len())];
                let a = self.pick(ty);
                let b = self.pick(ty);
                self.def(Opcode::Bin(op), ty, vec![a, b], ty);
            }
            9 => {
                let ty = self.pick_int_ty();
                let a = self.pick(ty);
                let d = self.pick(ty);
                let nz = self.def(Opcode::Bin(BinOp::Or), ty, vec![d, Operand::Const(1)], ty);
                self.def(Opcode::Bin(BinOp::Udiv), ty, vec![a, Operand::value(nz)], ty);
            }
            10..=11 => {
                let ty = self.pick_int_ty();
                let pred = Pred::ALL[self.rng.random_range(0..Pred::ALL.len())];
                let a = self.pick(ty);
                let b = self.pick(ty);
                let c = self.def(Opcode::Icmp(pred), ty, vec![a, b], Ty::I1);
                if self.rng.random_bool(0.5) {
                    let sty = self.pick_int_ty();
                    let x = self.pick(sty);
                    let y = self.pick(sty);
                    self.def(Opcode::Select, sty, vec![Operand::value(c), x, y], sty);
                }
            }
            12 => {
                let (from, to) = [(Ty::I64, Ty::I32), (Ty::I64, Ty::I8), (Ty::I32, Ty::I8), (Ty::I8, Ty::I1)]
                    [self.rng.random_range(0..4)];
                let a = self.pick(from);
                self.def(Opcode::Trunc { from }, to, vec![a], to);
            }
            13 => {
                let (from, to) = [(Ty::I32, Ty::I64), (Ty::I8, Ty::I64), (Ty::I8, Ty::I32), (Ty::I1, Ty::I64)]
                    [self.rng.random_range(0..4)];
                let a = self.pick(from);
                self.def(Opcode::Zext { from }, to, vec![a], to);
            }
            14..=16 => {
                let ty = [Ty::I64, Ty::I64, Ty::I32, Ty::I8][self.rng.random_range(0..4)];
                let p = self.address(ty);
                self.def(Opcode::Load, ty, vec![p], ty);
            }
            _ => {
                let ty = [Ty::I64, Ty::I64, Ty::I32, Ty::I8][self.rng.random_range(0..4)];
                let p = self.address(ty);
                let v = self.pick(ty);
                self.emit(Instruction::new(None, Opcode::Store, ty, vec![v, p]));
            }
        }
    }

    fn straight(&mut self, n: usize) {
        for _ in 0..n {
            if self.budget <= 1 {
                return;
            }
            self.one_instruction();
        }
    }

    fn diamond(&mut self, depth: usize) {
        let a = self.pick(Ty::I64);
        let b = self.pick(Ty::I64);
        let pred = Pred::ALL[self.rng.random_range(0..Pred::ALL.len())];
        let c = self.def(Opcode::Icmp(pred), Ty::I64, vec![a, b], Ty::I1);
        let (then_l, else_l, join_l) = (
            self.fresh_label("then"),
            self.fresh_label("else"),
            self.fresh_label("join"),
        );
        self.emit(Instruction::condbr(Operand::value(c), &then_l, &else_l));
        let saved = self.pool.clone();
        let arm_budget = self.budget.saturating_sub(3) / 3;
        for label in [then_l, else_l] {
            self.cur = self.new_block(label);
            self.region(arm_budget, depth);
            self.emit(Instruction::br(&join_l));
            self.pool = saved.clone();
        }
        self.cur = self.new_block(join_l);
    }

    fn counted_loop(&mut self, depth: usize) {
        let counter = format!("lc{}", self.globals.len());
        self.globals.push(Global {
            name: counter.clone(),
            size: 8,
            init: vec![0; 8],
        });
        let trip = if self.rng.random_bool(0.1) {
            self.rng.random_range(1..=MAX_TRIP_COUNT)
        } else {
            self.rng.random_range(1..=8)
        };
        let (hdr, body, exit) = (
            self.fresh_label("loop"),
            self.fresh_label("body"),
            self.fresh_label("exit"),
        );
        self.emit(Instruction::new(
            None,
            Opcode::Store,
            Ty::I64,
            vec![Operand::Const(0), Operand::Global(counter.clone())],
        ));
        self.emit(Instruction::br(&hdr));
        self.cur = self.new_block(hdr.clone());
        let i = self.def(Opcode::Load, Ty::I64, vec![Operand::Global(counter.clone())], Ty::I64);
        let c = self.def(
            Opcode::Icmp(Pred::Ult),
            Ty::I64,
            vec![Operand::value(&i), Operand::Const(trip)],
            Ty::I1,
        );
        self.emit(Instruction::condbr(Operand::value(c), &body, &exit));
        let saved = self.pool.clone();
        self.cur = self.new_block(body);
        let body_budget = self.budget.saturating_sub(5) / 2;
        self.region(body_budget, depth + 1);
        let i2 = self.def(Opcode::Load, Ty::I64, vec![Operand::Global(counter.clone())], Ty::I64);
        let n = self.def(
            Opcode::Bin(BinOp::Add),
            Ty::I64,
            vec![Operand::value(i2), Operand::Const(1)],
            Ty::I64,
        );
        self.emit(Instruction::new(
            None,
            Opcode::Store,
            Ty::I64,
            vec![Operand::value(n), Operand::Global(counter)],
        ));
        self.emit(Instruction::br(&hdr));
        self.pool = saved;
        self.cur = self.new_block(exit);
    }

    /// Emit roughly `budget` instructions into the current position.
    fn region(&mut self, budget: usize, depth: usize) {
        let stop_at = self.budget.saturating_sub(budget);
        while self.budget > stop_at.max(2) {
            let left = self.budget - stop_at;
            match self.rng.random_range(0..10) {
                6..=7 if left >= 10 => self.diamond(depth),
                8..=9 if left >= 14 && depth < MAX_LOOP_DEPTH => self.counted_loop(depth),
                _ => {
                    let n = self.rng.random_range(1..=6).min(left);
                    self.straight(n);
                }
            }
        }
    }
}

/// Generate a valid, terminating program of about `size_budget`
/// instructions. Deterministic in `seed`.
pub fn gen_random_program(seed: u64, size_budget: usize) -> IrModule {
    let mut data = vec![0u8; DATA_SIZE];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.fill(&mut data[..]);
    let mut g = Gen {
        rng,
        budget: size_budget.max(1),
        blocks: vec![BasicBlock::new("entry")],
        cur: 0,
        pool: vec![("p0".into(), Ty::I64), ("p1".into(), Ty::I64)],
        globals: vec![Global {
            name: DATA.into(),
            size: DATA_SIZE,
            init: data,
        }],
        names: 0,
        labels: 0,
    };
    if g.budget > 1 {
        let total = g.budget;
        g.region(total.saturating_sub(3), 0);
        if g.budget >= 3 {
            let last = g.pick(Ty::I64);
            let r = g.def(Opcode::Load, Ty::I64, vec![Operand::Global(DATA.into())], Ty::I64);
            let folded = g.def(
                Opcode::Bin(BinOp::Xor),
                Ty::I64,
                vec![Operand::value(r), last],
                Ty::I64,
            );
            g.emit(Instruction::new(None, Opcode::Ret, Ty::I64, vec![Operand::value(folded)]));
        } else {
            let last = g.pick(Ty::I64);
            g.emit(Instruction::new(None, Opcode::Ret, Ty::I64, vec![last]));
        }
    } else {
        g.emit(Instruction::new(None, Opcode::Ret, Ty::I64, vec![Operand::Const(0)]));
    }
    IrModule {
        globals: g.globals,
        functions: vec![Function {
            name: "main".into(),
            params: vec![
                Param { name: "p0".into(), ty: Ty::I64 },
                Param { name: "p1".into(), ty: Ty::I64 },
            ],
            ret_ty: Ty::I64,
            blocks: g.blocks,
        }],
        entry: "main".into(),
        instrumented: BTreeSet::new(),
    }
}

/// Upper bound on the dynamic instruction count of the entry function of a
/// program with counted loops: each block contributes its size times the
/// product of the trip counts (plus one header test) of the loops around
/// it, and the sum is scaled by 4. Loop trip counts are read from the
/// header's `icmp ult %i, K`; headers without that shape are assumed to run
/// at most [`MAX_TRIP_COUNT`] times.
pub fn step_bound(m: &IrModule) -> u64 {
    let Some(f) = m.entry_function() else { return 0 };
    let succs = successors(f);
    let idom = immediate_dominators(&succs);
    let dominates = |a: usize, mut b: usize| loop {
        if a == b {
            return true;
        }
        match idom[b] {
            Some(p) if p != b => b = p,
            _ => return false,
        }
    };
    let n = f.blocks.len();
    let mut preds = vec![Vec::new(); n];
    for (b, ss) in succs.iter().enumerate() {
        for &s in ss {
            preds[s].push(b);
        }
    }
    let mut multiplier = vec![1u64; n];
    for (latch, ss) in succs.iter().enumerate() {
        for &header in ss {
            if idom[latch].is_none() || !dominates(header, latch) {
                continue;
            }
            // Natural loop of the back edge latch -> header.
            let mut body: HashSet<usize> = HashSet::from([header]);
            let mut work = vec![latch];
            while let Some(b) = work.pop() {
                if body.insert(b) {
                    work.extend(preds[b].iter().copied());
                }
            }
            let trip = header_trip_count(&f.blocks[header]).unwrap_or(MAX_TRIP_COUNT);
            for b in body {
                multiplier[b] = multiplier[b].saturating_mul(trip + 1);
            }
        }
    }
    let total = f
        .blocks
        .iter()
        .zip(&multiplier)
        .fold(0u64, |acc, (b, k)| acc.saturating_add((b.instrs.len() as u64).saturating_mul(*k)));
    total.saturating_mul(4)
}

fn header_trip_count(b: &BasicBlock) -> Option<u64> {
    b.instrs.iter().find_map(|i| match (i.opcode, &i.operands[..]) {
        (Opcode::Icmp(Pred::Ult), [_, Operand::Const(k)]) => Some(*k),
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{print_module, validate_module};
    use super::*;

    #[test]
    fn budget_one_is_a_single_ret() {
        let m = gen_random_program(1, 1);
        let f = &m.functions[0];
        assert_eq!(f.blocks.len(), 1);
        assert_eq!(f.blocks[0].instrs.len(), 1);
        assert_eq!(f.blocks[0].instrs[0].opcode, Opcode::Ret);
    }

    #[test]
    fn deterministic_in_seed() {
        for seed in 0..20 {
            assert_eq!(
                print_module(&gen_random_program(seed, 200)),
                print_module(&gen_random_program(seed, 200))
            );
        }
        assert_ne!(
            print_module(&gen_random_program(1, 200)),
            print_module(&gen_random_program(2, 200))
        );
    }

    #[test]
    fn generated_programs_validate() {
        for seed in 0..200 {
            for budget in [1, 2, 3, 5, 17, 60, 200] {
                let m = gen_random_program(seed, budget);
                let v = validate_module(&m);
                assert!(v.is_empty(), "seed {seed} budget {budget}: {v:?}\n{}", print_module(&m));
            }
        }
    }

    #[test]
    fn instruction_mix() {
        let mut seen = HashSet::new();
        for seed in 0..10 {
            let m = gen_random_program(seed, 200);
            for b in &m.functions[0].blocks {
                for i in &b.instrs {
                    seen.insert(i.opcode.mnemonic());
                }
            }
        }
        for op in ["add", "mul", "load", "store", "condbr", "icmp", "br", "ret"] {
            assert!(seen.contains(op), "{op} never generated");
        }
    }

    #[test]
    fn step_bound_counts_loops() {
        let m = super::super::parse_module(
            "global @c[8] = zero
             fn @main() -> i64 {
             entry: store i64 0, @c br hdr
             hdr: %i = load i64 @c %k = icmp ult i64 %i, 10 condbr %k, body, exit
             body: %j = add i64 %i, 1 store i64 %j, @c br hdr
             exit: ret 0 }",
        )
        .unwrap();
        // (2 + 3*11 + 3*11 + 1) * 4
        assert_eq!(step_bound(&m), 276);
    }
}
