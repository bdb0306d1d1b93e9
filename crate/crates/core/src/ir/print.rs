use std::fmt::Write;

use super::{Instruction, IrModule, Opcode, Operand};

fn operand(out: &mut String, op: &Operand) {
    match op {
        Operand::Value(v) => write!(out, "%{v}"),
        Operand::Const(c) => write!(out, "{c}"),
        Operand::Global(g) => write!(out, "@{g}"),
        Operand::Label(l) => write!(out, "{l}"),
    }
    .unwrap();
}

fn operand_list(out: &mut String, ops: &[Operand]) {
    for (i, op) in ops.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        operand(out, op);
    }
}

pub(crate) fn instruction(out: &mut String, ins: &Instruction) {
    if let Some(r) = &ins.result {
        write!(out, "%{r} = ").unwrap();
    }
    out.push_str(ins.opcode.mnemonic());
    match ins.opcode {
        Opcode::Bin(_) | Opcode::Select | Opcode::Load | Opcode::Store => {
            write!(out, " {} ", ins.ty).unwrap();
            operand_list(out, &ins.operands);
        }
        Opcode::Icmp(p) => {
            write!(out, " {} {} ", p.name(), ins.ty).unwrap();
            operand_list(out, &ins.operands);
        }
        Opcode::Trunc { from } | Opcode::Zext { from } => {
            write!(out, " {from} ").unwrap();
            operand(out, &ins.operands[0]);
            write!(out, " to {}", ins.ty).unwrap();
        }
        Opcode::PtrAdd | Opcode::Br | Opcode::CondBr | Opcode::Ret | Opcode::ClFlush => {
            out.push(' ');
            operand_list(out, &ins.operands);
        }
        Opcode::MFence => {}
        Opcode::ReportError(kind) => {
            write!(out, " {} {} ", kind.name(), ins.ty).unwrap();
            operand_list(out, &ins.operands);
        }
    }
    if let Some(s) = ins.tag.suffix() {
        write!(out, " #{s}").unwrap();
    }
}

/// Canonical text form; `parse_module` inverts it.
pub fn print_module(m: &IrModule) -> String {
    let mut out = String::new();
    if !m.instrumented.is_empty() {
        let names: Vec<_> = m.instrumented.iter().map(|p| p.name()).collect();
        writeln!(out, "instrumented {}", names.join(", ")).unwrap();
    }
    if m.entry != "main" {
        writeln!(out, "entry @{}", m.entry).unwrap();
    }
    for g in &m.globals {
        write!(out, "global @{}[{}]", g.name, g.size).unwrap();
        if g.init.iter().all(|b| *b == 0) {
            out.push_str(" = zero\n");
        } else {
            out.push_str(" = \"");
            for b in &g.init {
                write!(out, "{b:02x}").unwrap();
            }
            out.push_str("\"\n");
        }
    }
    for f in &m.functions {
        if !out.is_empty() {
            out.push('\n');
        }
        write!(out, "fn @{}(", f.name).unwrap();
        for (i, p) in f.params.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            write!(out, "%{}: {}", p.name, p.ty).unwrap();
        }
        writeln!(out, ") -> {} {{", f.ret_ty).unwrap();
        for b in &f.blocks {
            writeln!(out, "{}:", b.label).unwrap();
            for ins in &b.instrs {
                out.push_str("  ");
                instruction(&mut out, ins);
                out.push('\n');
            }
        }
        out.push_str("}\n");
    }
    out
}
