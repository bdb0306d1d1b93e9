use std::collections::{BTreeSet, HashMap};

use crate::ir::{BasicBlock, Instruction, Pass};

/// Whether `ins` is a target of `pass`. Only original instructions are
/// ever targeted.
pub(crate) fn is_target(pass: Pass, ins: &Instruction) -> bool {
    ins.is_original()
        && match pass {
            Pass::Arith => ins.opcode.is_arith(),
            Pass::Mem | Pass::MemDiv => ins.opcode.is_memory(),
            Pass::Br => false,
        }
}

/// Indices of the arithmetic targets in `b` that end a dependency chain:
/// their result is not used by another arithmetic target of the block.
pub fn dep_chain_ends(b: &BasicBlock) -> BTreeSet<usize> {
    dep_chain_ends_for(b, Pass::Arith)
}

/// [`dep_chain_ends`] with the target set of `pass`.
pub fn dep_chain_ends_for(b: &BasicBlock, pass: Pass) -> BTreeSet<usize> {
    let targets: Vec<usize> = (0..b.instrs.len())
        .filter(|&i| is_target(pass, &b.instrs[i]))
        .collect();
    let defined: HashMap<&str, usize> = targets
        .iter()
        .filter_map(|&i| b.instrs[i].result.as_deref().map(|r| (r, i)))
        .collect();
    let mut used = BTreeSet::new();
    for &i in &targets {
        for u in b.instrs[i].uses() {
            if let Some(&p) = defined.get(u) {
                used.insert(p);
            }
        }
    }
    targets.into_iter().filter(|i| !used.contains(i)).collect()
}
