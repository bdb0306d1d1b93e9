use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use super::{Function, Instruction, IrModule, Opcode, Operand, Ty};

/// One broken rule. `rule` is a stable kebab-case id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub function: Option<String>,
    pub block: Option<String>,
    pub index: Option<usize>,
    pub rule: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.rule)?;
        if let Some(func) = &self.function {
            write!(f, " @{func}")?;
        }
        if let Some(b) = &self.block {
            write!(f, " {b}")?;
        }
        if let Some(i) = self.index {
            write!(f, "#{i}")?;
        }
        write!(f, ": {}", self.message)
    }
}

/// Type of the value an instruction defines.
pub fn result_ty(ins: &Instruction) -> Ty {
    match ins.opcode {
        Opcode::Icmp(_) => Ty::I1,
        _ => ins.ty,
    }
}

/// Successor block indices of every block, in block order. Unknown labels
/// are skipped.
pub(crate) fn successors(f: &Function) -> Vec<Vec<usize>> {
    let index: HashMap<&str, usize> = f
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| (b.label.as_str(), i))
        .collect();
    f.blocks
        .iter()
        .map(|b| {
            b.terminator()
                .map(|t| t.targets().filter_map(|l| index.get(l).copied()).collect())
                .unwrap_or_default()
        })
        .collect()
}

/// Immediate dominators (entry maps to itself; unreachable blocks to `None`).
pub(crate) fn immediate_dominators(succs: &[Vec<usize>]) -> Vec<Option<usize>> {
    let n = succs.len();
    if n == 0 {
        return Vec::new();
    }
    // Reverse postorder from the entry.
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut stack = vec![(0usize, 0usize)];
    seen[0] = true;
    while let Some((b, next)) = stack.pop() {
        if next < succs[b].len() {
            stack.push((b, next + 1));
            let s = succs[b][next];
            if !seen[s] {
                seen[s] = true;
                stack.push((s, 0));
            }
        } else {
            order.push(b);
        }
    }
    order.reverse();
    let mut rpo = vec![usize::MAX; n];
    for (i, b) in order.iter().enumerate() {
        rpo[*b] = i;
    }
    let mut preds = vec![Vec::new(); n];
    for (b, ss) in succs.iter().enumerate() {
        if rpo[b] != usize::MAX {
            for &s in ss {
                preds[s].push(b);
            }
        }
    }
    let mut idom: Vec<Option<usize>> = vec![None; n];
    idom[0] = Some(0);
    let intersect = |idom: &[Option<usize>], mut a: usize, mut b: usize| {
        while a != b {
            while rpo[a] > rpo[b] {
                a = idom[a].unwrap();
            }
            while rpo[b] > rpo[a] {
                b = idom[b].unwrap();
            }
        }
        a
    };
    let mut changed = true;
    while changed {
        changed = false;
        for &b in order.iter().skip(1) {
            let mut new = None;
            for &p in &preds[b] {
                if idom[p].is_some() {
                    new = Some(match new {
                        None => p,
                        Some(cur) => intersect(&idom, p, cur),
                    });
                }
            }
            if new.is_some() && idom[b] != new {
                idom[b] = new;
                changed = true;
            }
        }
    }
    idom
}

fn dominates(idom: &[Option<usize>], a: usize, mut b: usize) -> bool {
    loop {
        if a == b {
            return true;
        }
        match idom[b] {
            Some(p) if p != b => b = p,
            _ => return false,
        }
    }
}

struct Ctx<'a> {
    out: Vec<Violation>,
    func: &'a str,
}

impl Ctx<'_> {
    fn push(&mut self, block: Option<&str>, index: Option<usize>, rule: &'static str, message: String) {
        self.out.push(Violation {
            function: Some(self.func.to_string()),
            block: block.map(str::to_string),
            index,
            rule,
            message,
        });
    }
}

/// Check every type, SSA and CFG rule. An empty result means the module is
/// well formed and executable by the simulator.
pub fn validate_module(m: &IrModule) -> Vec<Violation> {
    let mut out = Vec::new();
    let module_violation = |rule, message| Violation {
        function: None,
        block: None,
        index: None,
        rule,
        message,
    };
    let mut gnames = HashSet::new();
    for g in &m.globals {
        if !gnames.insert(g.name.as_str()) {
            out.push(module_violation("duplicate-global", format!("global @{} defined twice", g.name)));
        }
        if g.init.len() != g.size || g.size == 0 {
            out.push(module_violation(
                "invalid-global",
                format!("global @{} has size {} but {} initializer bytes", g.name, g.size, g.init.len()),
            ));
        }
    }
    let mut fnames = HashSet::new();
    for f in &m.functions {
        if !fnames.insert(f.name.as_str()) {
            out.push(module_violation("duplicate-function", format!("function @{} defined twice", f.name)));
        }
    }
    let entries = m.functions.iter().filter(|f| f.name == m.entry).count();
    if entries == 0 {
        out.push(module_violation("missing-entry", format!("entry function @{} not found", m.entry)));
    }
    for f in &m.functions {
        out.extend(validate_function(f, &gnames));
    }
    out
}

fn validate_function(f: &Function, globals: &HashSet<&str>) -> Vec<Violation> {
    let mut cx = Ctx {
        out: Vec::new(),
        func: &f.name,
    };
    if f.blocks.is_empty() {
        cx.push(None, None, "empty-function", "function has no blocks".into());
        return cx.out;
    }
    let mut labels = HashSet::new();
    for b in &f.blocks {
        if !labels.insert(b.label.as_str()) {
            cx.push(Some(&b.label), None, "duplicate-block", format!("block `{}` defined twice", b.label));
        }
    }

    // Definitions: name -> (block, index, type); params use index None.
    let mut defs: HashMap<&str, (Option<(usize, usize)>, Ty)> = HashMap::new();
    for p in &f.params {
        if defs.insert(&p.name, (None, p.ty)).is_some() {
            cx.push(None, None, "duplicate-definition", format!("parameter %{} defined twice", p.name));
        }
    }
    for (bi, b) in f.blocks.iter().enumerate() {
        for (ii, ins) in b.instrs.iter().enumerate() {
            if let Some(r) = &ins.result {
                if defs.insert(r, (Some((bi, ii)), result_ty(ins))).is_some() {
                    cx.push(Some(&b.label), Some(ii), "duplicate-definition", format!("%{r} defined more than once"));
                }
            }
        }
    }

    let succs = successors(f);
    let idom = immediate_dominators(&succs);

    for (bi, b) in f.blocks.iter().enumerate() {
        let label = Some(b.label.as_str());
        match b.instrs.last() {
            Some(t) if t.opcode.is_terminator() => {}
            _ => cx.push(label, None, "missing-terminator", format!("block `{}` does not end in br, condbr or ret", b.label)),
        }
        for (ii, ins) in b.instrs.iter().enumerate() {
            let at = Some(ii);
            if ins.opcode.is_terminator() && ii + 1 != b.instrs.len() {
                cx.push(label, at, "misplaced-terminator", format!("{} in the middle of a block", ins.opcode));
            }
            match (&ins.result, ins.opcode.has_result()) {
                (None, true) => cx.push(label, at, "missing-result", format!("{} must define a value", ins.opcode)),
                (Some(r), false) => cx.push(label, at, "unexpected-result", format!("{} cannot define %{r}", ins.opcode)),
                _ => {}
            }
            check_types(&mut cx, f, label, ii, ins, &defs, globals);

            for t in ins.targets() {
                if !labels.contains(t) {
                    cx.push(label, at, "unknown-target", format!("branch to unknown block `{t}`"));
                }
            }
            // Uses in unreachable blocks are vacuously dominated.
            if idom[bi].is_none() {
                continue;
            }
            for u in ins.uses() {
                match defs.get(u) {
                    None => cx.push(label, at, "undefined-value", format!("use of undefined value %{u}")),
                    Some((None, _)) => {}
                    Some((Some((db, di)), _)) => {
                        let ok = if *db == bi { di < &ii } else { dominates(&idom, *db, bi) };
                        if !ok {
                            cx.push(label, at, "use-not-dominated", format!("%{u} does not dominate its use"));
                        }
                    }
                }
            }
        }
    }
    cx.out
}

fn check_types(
    cx: &mut Ctx<'_>,
    f: &Function,
    label: Option<&str>,
    ii: usize,
    ins: &Instruction,
    defs: &HashMap<&str, (Option<(usize, usize)>, Ty)>,
    globals: &HashSet<&str>,
) {
    let at = Some(ii);
    let ty = ins.ty;
    let expected: Vec<Option<Ty>> = match ins.opcode {
        Opcode::Bin(_) => vec![Some(ty), Some(ty)],
        Opcode::Icmp(_) => vec![Some(ty), Some(ty)],
        Opcode::Select => vec![Some(Ty::I1), Some(ty), Some(ty)],
        Opcode::Trunc { from } | Opcode::Zext { from } => vec![Some(from)],
        Opcode::PtrAdd => vec![Some(Ty::Ptr), Some(Ty::I64)],
        Opcode::Load | Opcode::ClFlush => vec![Some(Ty::Ptr)],
        Opcode::Store => vec![Some(ty), Some(Ty::Ptr)],
        Opcode::Br => vec![None],
        Opcode::CondBr => vec![Some(Ty::I1), None, None],
        Opcode::Ret => vec![Some(f.ret_ty)],
        Opcode::MFence => vec![],
        Opcode::ReportError(_) => {
            let n = ins.operands.len().max(4);
            let mut v = vec![Some(Ty::I64), Some(Ty::I1)];
            v.resize(n, Some(ty));
            v
        }
    };
    if expected.len() != ins.operands.len() {
        cx.push(
            label,
            at,
            "operand-count",
            format!("{} takes {} operands, found {}", ins.opcode, expected.len(), ins.operands.len()),
        );
        return;
    }
    match ins.opcode {
        Opcode::Bin(_) if !ty.is_int() => {
            cx.push(label, at, "type-mismatch", format!("{} needs an integer type, found {ty}", ins.opcode))
        }
        Opcode::Trunc { from } if !(from.is_int() && ty.is_int() && from.bits() > ty.bits()) => cx.push(
            label,
            at,
            "invalid-cast",
            format!("trunc must narrow an integer, found {from} to {ty}"),
        ),
        Opcode::Zext { from } if !(from.is_int() && ty.is_int() && from.bits() < ty.bits()) => cx.push(
            label,
            at,
            "invalid-cast",
            format!("zext must widen an integer, found {from} to {ty}"),
        ),
        Opcode::PtrAdd if ty != Ty::Ptr => {
            cx.push(label, at, "type-mismatch", "ptradd yields ptr".into())
        }
        Opcode::Ret if ty != f.ret_ty => cx.push(
            label,
            at,
            "type-mismatch",
            format!("ret of {ty} in a function returning {}", f.ret_ty),
        ),
        Opcode::Bin(super::BinOp::Udiv) if ins.operands[1] == Operand::Const(0) => {
            cx.push(label, at, "division-by-zero", "udiv by constant zero".into())
        }
        Opcode::ReportError(_) if !matches!(ins.operands[0], Operand::Const(_)) => {
            cx.push(label, at, "bad-operand", "report_error site id must be a constant".into())
        }
        _ => {}
    }
    for (k, (op, want)) in ins.operands.iter().zip(&expected).enumerate() {
        let found = match (op, want) {
            (Operand::Label(_), None) => continue,
            (Operand::Label(l), Some(_)) => {
                cx.push(label, at, "bad-operand", format!("operand {k}: label `{l}` used as a value"));
                continue;
            }
            (_, None) => {
                cx.push(label, at, "bad-operand", format!("operand {k}: expected a block label"));
                continue;
            }
            (Operand::Const(_), Some(_)) => continue,
            (Operand::Global(g), Some(_)) => {
                if !globals.contains(g.as_str()) {
                    cx.push(label, at, "unknown-global", format!("@{g} is not defined"));
                    continue;
                }
                Ty::Ptr
            }
            (Operand::Value(v), Some(_)) => match defs.get(v.as_str()) {
                Some((_, t)) => *t,
                None => continue,
            },
        };
        let want = want.unwrap();
        if found != want {
            cx.push(
                label,
                at,
                "type-mismatch",
                format!("{} operand {k} has type {found}, expected {want}", ins.opcode),
            );
        }
    }
}
