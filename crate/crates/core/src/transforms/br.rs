//! Branch-target checking.
//!
//! Before an original two-way `condbr` the expected target token is
//! selected by the branch condition and stored to a per-function slot.
//! Each edge is split by a trampoline that reloads the slot and compares it
//! with the token of the target the branch actually reached. Tokens are
//! `1 + index` of the target block in the input function.

use std::collections::{HashMap, HashSet};

use super::{fresh_in, CheckSite, InstrumentationStats, Names};
use crate::ir::{
    base_label, BasicBlock, Global, Instruction, IrModule, Opcode, Operand, OriginTag, Pass, Pred,
    ReportKind, Ty, RESERVED_PREFIX,
};

pub(super) fn apply(
    m: &mut IrModule,
    next_site: &mut u32,
    sites: &mut Vec<CheckSite>,
    stats: &mut InstrumentationStats,
) {
    let mut global_names: HashSet<String> = m.globals.iter().map(|g| g.name.clone()).collect();
    let mut new_globals = Vec::new();
    for f in &mut m.functions {
        let candidates: Vec<usize> = (0..f.blocks.len())
            .filter(|&bi| {
                f.blocks[bi].terminator().is_some_and(|t| {
                    t.is_original()
                        && t.opcode == Opcode::CondBr
                        && t.operands[1] != t.operands[2]
                })
            })
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let slot = fresh_in(&mut global_names, &format!("{RESERVED_PREFIX}br_slot_{}", f.name));
        new_globals.push(Global {
            name: slot.clone(),
            size: 8,
            init: vec![0; 8],
        });
        let token: HashMap<String, u64> = f
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (b.label.clone(), i as u64 + 1))
            .collect();
        let pcs: HashMap<usize, u32> = f
            .original_pcs()
            .filter(|&(_, bi, ii)| ii + 1 == f.blocks[bi].instrs.len())
            .map(|(pc, bi, _)| (bi, pc))
            .collect();
        let mut names = Names::of(f);
        let mut labels: HashSet<String> = f.blocks.iter().map(|b| b.label.clone()).collect();
        let mut appended = Vec::new();
        *stats.originals_targeted.entry(Pass::Br).or_default() += candidates.len();
        for bi in candidates {
            let b = &mut f.blocks[bi];
            let term = b.instrs.pop().expect("terminator");
            let cond = term.operands[0].clone();
            let targets = [
                term.operands[1].as_label().unwrap().to_string(),
                term.operands[2].as_label().unwrap().to_string(),
            ];
            let base = base_label(&b.label).to_string();
            let expected = names.fresh(&format!("{base}.exp"));
            b.instrs.push(
                Instruction::new(
                    Some(expected.clone()),
                    Opcode::Select,
                    Ty::I64,
                    vec![
                        cond.clone(),
                        Operand::Const(token[&targets[0]]),
                        Operand::Const(token[&targets[1]]),
                    ],
                )
                .tagged(OriginTag::Validation),
            );
            b.instrs.push(
                Instruction::new(
                    None,
                    Opcode::Store,
                    Ty::I64,
                    vec![Operand::Value(expected), Operand::Global(slot.clone())],
                )
                .tagged(OriginTag::Validation),
            );
            stats.validations_inserted += 2;
            let mut tramps = Vec::new();
            for (edge, target) in targets.iter().enumerate() {
                let tr = fresh_in(&mut labels, &format!("{base}.tr"));
                let err = fresh_in(&mut labels, &format!("{tr}.err"));
                let v = names.fresh(&format!("{tr}.v"));
                let ok = names.fresh(&format!("{tr}.c"));
                let tok = Operand::Const(token[target]);
                let site = *next_site;
                *next_site += 1;
                appended.push(BasicBlock {
                    label: tr.clone(),
                    instrs: vec![
                        Instruction::new(
                            Some(v.clone()),
                            Opcode::Load,
                            Ty::I64,
                            vec![Operand::Global(slot.clone())],
                        )
                        .tagged(OriginTag::Validation),
                        Instruction::new(
                            Some(ok.clone()),
                            Opcode::Icmp(Pred::Eq),
                            Ty::I64,
                            vec![Operand::value(&v), tok.clone()],
                        )
                        .tagged(OriginTag::Check),
                        Instruction::condbr(Operand::value(&ok), target, &err)
                            .tagged(OriginTag::Check),
                    ],
                });
                appended.push(BasicBlock {
                    label: err,
                    instrs: vec![
                        Instruction::new(
                            None,
                            Opcode::ReportError(ReportKind::Branch),
                            Ty::I64,
                            vec![
                                Operand::Const(site as u64),
                                Operand::value(&ok),
                                tok,
                                Operand::value(&v),
                            ],
                        )
                        .tagged(OriginTag::Reporting),
                        Instruction::br(target).tagged(OriginTag::Reporting),
                    ],
                });
                stats.validations_inserted += 1;
                stats.checks_inserted += 1;
                stats.reporting_blocks_added += 1;
                sites.push(CheckSite {
                    site,
                    function: f.name.clone(),
                    original_pc: pcs[&bi],
                    opcode: "condbr".into(),
                    block: base.clone(),
                    pass: Pass::Br,
                    ordinal: edge as u8 + 1,
                    kind: ReportKind::Branch,
                });
                tramps.push(tr);
            }
            b.instrs.push(Instruction::condbr(cond, &tramps[0], &tramps[1]).tagged(term.tag));
        }
        f.blocks.extend(appended);
    }
    m.globals.extend(new_globals);
}
