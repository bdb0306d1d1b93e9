//! Instruction-checking transformations.
//!
//! Each pass inserts validation instructions next to the original program
//! instructions it targets, compares originals and validations with check
//! instructions, AND-accumulates the check results of a basic block and
//! routes a failure to a per-block reporting block that calls
//! `report_error` once per failed check and then resumes at the block's
//! original successor.
//!
//! Blocks created by a pass are named after the block they were split from:
//! `B.cont` holds the original terminator of `B`, `B.err` is its reporting
//! block, and `B.trN` / `B.trN.err` are the branch-checking trampolines.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::ir::{
    base_label, result_ty, validate_module, BasicBlock, Function, Instruction, IrModule, Opcode,
    Operand, OriginTag, Pass, ReportKind, Ty, Violation,
};

mod br;
mod dep;

pub use dep::{dep_chain_ends, dep_chain_ends_for};
use dep::is_target;

/// How many consecutive originals precede their validations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Interleaving {
    N(u32),
    /// One group per basic block.
    Max,
}

/// Check insertion period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockSize {
    /// A check on every n-th targeted original of a block.
    N(u32),
    /// A check at the end of every intra-block dependency chain.
    Dep,
}

impl fmt::Display for Interleaving {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Interleaving::N(n) => write!(f, "{n}"),
            Interleaving::Max => f.write_str("max"),
        }
    }
}

impl fmt::Display for BlockSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockSize::N(n) => write!(f, "{n}"),
            BlockSize::Dep => f.write_str("dep"),
        }
    }
}

fn parse_positive(s: &str) -> Result<u32, String> {
    match s.parse::<u32>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(_) => Err(format!("expected a positive integer, found `{s}`")),
    }
}

impl FromStr for Interleaving {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("max") {
            Ok(Interleaving::Max)
        } else {
            parse_positive(s).map(Interleaving::N)
        }
    }
}

impl FromStr for BlockSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("dep") {
            Ok(BlockSize::Dep)
        } else {
            parse_positive(s).map(BlockSize::N)
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumOrStr {
    Num(u32),
    Str(String),
}

macro_rules! serde_via_str {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let text = match NumOrStr::deserialize(d)? {
                    NumOrStr::Num(n) => n.to_string(),
                    NumOrStr::Str(s) => s,
                };
                text.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

serde_via_str!(Interleaving);
serde_via_str!(BlockSize);

/// The four single passes and the three combinations used in campaigns.
pub const STANDARD_PASS_SETS: [&[Pass]; 7] = [
    &[Pass::Arith],
    &[Pass::Mem],
    &[Pass::MemDiv],
    &[Pass::Br],
    &[Pass::Arith, Pass::Mem],
    &[Pass::Arith, Pass::MemDiv],
    &[Pass::Arith, Pass::MemDiv, Pass::Br],
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassConfig {
    pub passes: BTreeSet<Pass>,
    pub interleaving: Interleaving,
    pub block_size: BlockSize,
}

impl PassConfig {
    /// `passes` with interleaving 1 and block size 1.
    pub fn new(passes: impl IntoIterator<Item = Pass>) -> Self {
        PassConfig {
            passes: passes.into_iter().collect(),
            interleaving: Interleaving::N(1),
            block_size: BlockSize::N(1),
        }
    }

    pub fn with_interleaving(mut self, il: Interleaving) -> Self {
        self.interleaving = il;
        self
    }

    pub fn with_block_size(mut self, bs: BlockSize) -> Self {
        self.block_size = bs;
        self
    }

    pub fn validate(&self) -> Result<(), TransformError> {
        if self.passes.is_empty() {
            return Err(TransformError::InvalidConfig("no pass selected".into()));
        }
        if self.passes.contains(&Pass::Mem) && self.passes.contains(&Pass::MemDiv) {
            return Err(TransformError::InvalidConfig(
                "Mem and MemDiv are mutually exclusive".into(),
            ));
        }
        if matches!(self.interleaving, Interleaving::N(0)) || matches!(self.block_size, BlockSize::N(0)) {
            return Err(TransformError::InvalidConfig(
                "interleaving and block size must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Pass names joined in application order, e.g. `Arith+MemDiv+Br`.
    pub fn name(&self) -> String {
        self.passes.iter().map(|p| p.name()).collect::<Vec<_>>().join("+")
    }

    /// Parse a comma-separated pass list such as `arith,memdiv,br`.
    pub fn parse_passes(s: &str) -> Result<BTreeSet<Pass>, String> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| Pass::from_name(p).ok_or_else(|| format!("unknown pass `{p}`")))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("invalid pass configuration: {0}")]
    InvalidConfig(String),
    #[error("input module does not validate: {}", .0.first().map(ToString::to_string).unwrap_or_default())]
    InvalidInput(Vec<Violation>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentationStats {
    pub originals_targeted: BTreeMap<Pass, usize>,
    pub validations_inserted: usize,
    pub checks_inserted: usize,
    pub diversity_inserted: usize,
    pub reporting_blocks_added: usize,
    pub instructions_before: usize,
    pub instructions_after: usize,
    pub size_ratio: f64,
}

impl InstrumentationStats {
    fn empty(m: &IrModule) -> Self {
        let n = m.instruction_count();
        InstrumentationStats {
            originals_targeted: BTreeMap::new(),
            validations_inserted: 0,
            checks_inserted: 0,
            diversity_inserted: 0,
            reporting_blocks_added: 0,
            instructions_before: n,
            instructions_after: n,
            size_ratio: 1.0,
        }
    }

    fn finish(&mut self, out: &IrModule) {
        self.instructions_after = out.instruction_count();
        self.size_ratio = if self.instructions_before == 0 {
            1.0
        } else {
            self.instructions_after as f64 / self.instructions_before as f64
        };
    }

    fn absorb(&mut self, other: &InstrumentationStats) {
        for (p, n) in &other.originals_targeted {
            *self.originals_targeted.entry(*p).or_default() += n;
        }
        self.validations_inserted += other.validations_inserted;
        self.checks_inserted += other.checks_inserted;
        self.diversity_inserted += other.diversity_inserted;
        self.reporting_blocks_added += other.reporting_blocks_added;
    }
}

/// One check instruction and the original instruction it checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckSite {
    pub site: u32,
    pub function: String,
    pub original_pc: u32,
    pub opcode: String,
    pub block: String,
    pub pass: Pass,
    /// Which validation of the original is compared: the n-th validation
    /// load for MemDiv, the branch edge (1 = taken-if-true) for Br, else 1.
    pub ordinal: u8,
    pub kind: ReportKind,
}

pub const SITE_MAP_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckSiteMap {
    pub schema_version: u32,
    pub sites: Vec<CheckSite>,
}

impl Default for CheckSiteMap {
    fn default() -> Self {
        CheckSiteMap {
            schema_version: SITE_MAP_SCHEMA_VERSION,
            sites: Vec::new(),
        }
    }
}

impl CheckSiteMap {
    pub fn get(&self, site: u32) -> Option<&CheckSite> {
        self.sites.iter().find(|s| s.site == site)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("site map serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// An instrumented module with its check-site map and statistics.
#[derive(Debug, Clone)]
pub struct Instrumented {
    pub module: IrModule,
    pub sites: CheckSiteMap,
    pub stats: InstrumentationStats,
}

pub fn instrument_arith(m: &IrModule, cfg: &PassConfig) -> Result<Instrumented, TransformError> {
    single(m, cfg, Pass::Arith)
}

pub fn instrument_mem(m: &IrModule, cfg: &PassConfig) -> Result<Instrumented, TransformError> {
    single(m, cfg, Pass::Mem)
}

pub fn instrument_memdiv(m: &IrModule, cfg: &PassConfig) -> Result<Instrumented, TransformError> {
    single(m, cfg, Pass::MemDiv)
}

/// The branch pass has no interleaving or block-size settings.
pub fn instrument_br(m: &IrModule) -> Result<Instrumented, TransformError> {
    single(m, &PassConfig::new([Pass::Br]), Pass::Br)
}

/// Apply every pass of `cfg` in the order Arith, Mem or MemDiv, Br.
pub fn instrument_combined(m: &IrModule, cfg: &PassConfig) -> Result<Instrumented, TransformError> {
    cfg.validate()?;
    check_input(m)?;
    let mut acc = Instrumented {
        module: m.clone(),
        sites: CheckSiteMap::default(),
        stats: InstrumentationStats::empty(m),
    };
    for pass in Pass::ALL {
        if cfg.passes.contains(&pass) {
            let step = apply(&acc.module, cfg, pass);
            acc.sites.sites.extend(step.sites.sites);
            acc.stats.absorb(&step.stats);
            acc.module = step.module;
        }
    }
    acc.stats.finish(&acc.module);
    debug_assert_eq!(validate_module(&acc.module), vec![]);
    Ok(acc)
}

fn check_input(m: &IrModule) -> Result<(), TransformError> {
    let v = validate_module(m);
    if v.is_empty() {
        Ok(())
    } else {
        Err(TransformError::InvalidInput(v))
    }
}

fn single(m: &IrModule, cfg: &PassConfig, pass: Pass) -> Result<Instrumented, TransformError> {
    cfg.validate()?;
    if !cfg.passes.contains(&pass) {
        return Err(TransformError::InvalidConfig(format!(
            "configuration does not select {pass}"
        )));
    }
    check_input(m)?;
    let out = apply(m, cfg, pass);
    debug_assert_eq!(validate_module(&out.module), vec![]);
    Ok(out)
}

fn already_applied(m: &IrModule, pass: Pass) -> bool {
    match pass {
        Pass::Mem | Pass::MemDiv => {
            m.instrumented.contains(&Pass::Mem) || m.instrumented.contains(&Pass::MemDiv)
        }
        _ => m.instrumented.contains(&pass),
    }
}

fn apply(m: &IrModule, cfg: &PassConfig, pass: Pass) -> Instrumented {
    let mut stats = InstrumentationStats::empty(m);
    if already_applied(m, pass) {
        return Instrumented {
            module: m.clone(),
            sites: CheckSiteMap::default(),
            stats,
        };
    }
    let mut out = m.clone();
    let mut sites = Vec::new();
    let mut next_site = m.max_site_id().map_or(0, |s| s + 1);
    if pass == Pass::Br {
        br::apply(&mut out, &mut next_site, &mut sites, &mut stats);
    } else {
        for f in &mut out.functions {
            let mut rw = Rewriter {
                pass,
                cfg,
                next_site: &mut next_site,
                sites: &mut sites,
                stats: &mut stats,
                names: Names::of(f),
                labels: f.blocks.iter().map(|b| b.label.clone()).collect(),
            };
            *f = rw.function(f);
        }
    }
    out.instrumented.insert(pass);
    stats.finish(&out);
    Instrumented {
        module: out,
        sites: CheckSiteMap {
            schema_version: SITE_MAP_SCHEMA_VERSION,
            sites,
        },
        stats,
    }
}

/// Fresh value names within one function.
pub(crate) struct Names(HashSet<String>);

impl Names {
    pub(crate) fn of(f: &Function) -> Self {
        let mut set: HashSet<String> = f.params.iter().map(|p| p.name.clone()).collect();
        for b in &f.blocks {
            set.extend(b.instrs.iter().filter_map(|i| i.result.clone()));
        }
        Names(set)
    }

    pub(crate) fn fresh(&mut self, base: &str) -> String {
        fresh_in(&mut self.0, base)
    }
}

pub(crate) fn fresh_in(taken: &mut HashSet<String>, base: &str) -> String {
    let mut name = base.to_string();
    let mut k = 1;
    while taken.contains(&name) {
        k += 1;
        name = format!("{base}{k}");
    }
    taken.insert(name.clone());
    name
}

/// Conservative location of a memory access: global plus known offset.
fn address_root(defs: &HashMap<&str, &Instruction>, op: &Operand) -> Option<(String, Option<u64>)> {
    match op {
        Operand::Global(g) => Some((g.clone(), Some(0))),
        Operand::Value(v) => {
            let def = defs.get(v.as_str())?;
            if def.opcode != Opcode::PtrAdd {
                return None;
            }
            let (g, off) = address_root(defs, &def.operands[0])?;
            let off = match (&def.operands[1], off) {
                (Operand::Const(c), Some(o)) => Some(o.wrapping_add(*c)),
                _ => None,
            };
            Some((g, off))
        }
        _ => None,
    }
}

fn access(ins: &Instruction) -> (&Operand, u64) {
    let addr = match ins.opcode {
        Opcode::Store => &ins.operands[1],
        _ => &ins.operands[0],
    };
    (addr, ins.ty.bytes() as u64)
}

/// False only if the two accesses provably touch disjoint bytes.
fn may_alias(defs: &HashMap<&str, &Instruction>, a: &Instruction, b: &Instruction) -> bool {
    let ((pa, wa), (pb, wb)) = (access(a), access(b));
    match (address_root(defs, pa), address_root(defs, pb)) {
        (Some((ga, oa)), Some((gb, ob))) => {
            if ga != gb {
                return false;
            }
            match (oa, ob) {
                (Some(x), Some(y)) => x < y.wrapping_add(wb) && y < x.wrapping_add(wa),
                _ => true,
            }
        }
        _ => true,
    }
}

struct Check {
    site: u32,
    ok: String,
    orig: Operand,
    val: String,
    ty: Ty,
    kind: ReportKind,
}

struct Rewriter<'a> {
    pass: Pass,
    cfg: &'a PassConfig,
    next_site: &'a mut u32,
    sites: &'a mut Vec<CheckSite>,
    stats: &'a mut InstrumentationStats,
    names: Names,
    labels: HashSet<String>,
}

/// Per-block state while rewriting.
struct BlockState<'b> {
    out: Vec<Instruction>,
    rename: HashMap<String, String>,
    checks: Vec<Check>,
    checked: BTreeSet<usize>,
    body: &'b [Instruction],
    label: &'b str,
}

impl Rewriter<'_> {
    fn function(&mut self, f: &Function) -> Function {
        let pcs: HashMap<(usize, usize), u32> =
            f.original_pcs().map(|(pc, bi, ii)| ((bi, ii), pc)).collect();
        let defs: HashMap<&str, &Instruction> = f
            .blocks
            .iter()
            .flat_map(|b| &b.instrs)
            .filter_map(|i| i.result.as_deref().map(|r| (r, i)))
            .collect();
        let mut blocks = Vec::new();
        let mut new_err_blocks = Vec::new();
        let mut err_additions: HashMap<String, Vec<Instruction>> = HashMap::new();
        for (bi, b) in f.blocks.iter().enumerate() {
            let Some(rw) = self.block(f, bi, b, &pcs, &defs) else {
                blocks.push(b.clone());
                continue;
            };
            blocks.push(rw.block);
            if let Some(cont) = rw.cont {
                blocks.push(cont);
            }
            match rw.reports {
                Reports::New(err) => new_err_blocks.push(err),
                Reports::Merge(label, instrs) => err_additions.entry(label).or_default().extend(instrs),
                Reports::None => {}
            }
        }
        for b in &mut blocks {
            if let Some(extra) = err_additions.remove(&b.label) {
                let at = b.instrs.len() - 1;
                b.instrs.splice(at..at, extra);
            }
        }
        blocks.extend(new_err_blocks);
        Function {
            blocks,
            ..f.clone()
        }
    }

    fn block(
        &mut self,
        f: &Function,
        bi: usize,
        b: &BasicBlock,
        pcs: &HashMap<(usize, usize), u32>,
        defs: &HashMap<&str, &Instruction>,
    ) -> Option<BlockRewrite> {
        let (term, body) = b.instrs.split_last()?;
        let targets: Vec<usize> = (0..body.len())
            .filter(|&i| is_target(self.pass, &body[i]))
            .collect();
        let &last_target = targets.last()?;
        *self.stats.originals_targeted.entry(self.pass).or_default() += targets.len();
        let checked = match self.cfg.block_size {
            BlockSize::N(n) => targets
                .iter()
                .enumerate()
                .filter(|(k, _)| (k + 1) % n as usize == 0)
                .map(|(_, &i)| i)
                .collect(),
            BlockSize::Dep => dep_chain_ends_for(b, self.pass),
        };
        let mut st = BlockState {
            out: Vec::with_capacity(body.len() * 3),
            rename: HashMap::new(),
            checks: Vec::new(),
            checked,
            body,
            label: &b.label,
        };
        let memory = matches!(self.pass, Pass::Mem | Pass::MemDiv);
        let mut pending: Vec<usize> = Vec::new();
        for (i, ins) in body.iter().enumerate() {
            if memory
                && ins.opcode == Opcode::Store
                && pending.iter().any(|&p| may_alias(defs, &body[p], ins))
            {
                self.flush(&mut st, &mut pending, f, bi, pcs);
            }
            st.out.push(ins.clone());
            if targets.binary_search(&i).is_ok() {
                pending.push(i);
                let full = matches!(self.cfg.interleaving, Interleaving::N(n) if pending.len() == n as usize);
                if full || i == last_target {
                    self.flush(&mut st, &mut pending, f, bi, pcs);
                }
            }
        }
        let checks = std::mem::take(&mut st.checks);
        if checks.is_empty() {
            st.out.push(term.clone());
            return Some(BlockRewrite {
                block: BasicBlock { label: b.label.clone(), instrs: st.out },
                cont: None,
                reports: Reports::None,
            });
        }

        let existing = (term.tag == OriginTag::Check && term.opcode == Opcode::CondBr).then(|| {
            let cond = term.operands[0].clone();
            let cont = term.operands[1].as_label().unwrap().to_string();
            let err = term.operands[2].as_label().unwrap().to_string();
            (cond, cont, err)
        });
        let mut acc = existing.as_ref().map(|(c, _, _)| c.clone());
        for c in &checks {
            acc = Some(match acc {
                None => Operand::value(&c.ok),
                Some(a) => {
                    let name = self.names.fresh(&format!("{}.acc", base_label(&b.label)));
                    st.out.push(
                        Instruction::new(
                            Some(name.clone()),
                            Opcode::Bin(crate::ir::BinOp::And),
                            Ty::I1,
                            vec![a, Operand::value(&c.ok)],
                        )
                        .tagged(OriginTag::Check),
                    );
                    Operand::Value(name)
                }
            });
        }
        let acc = acc.expect("at least one check");
        let reports: Vec<Instruction> = checks
            .iter()
            .map(|c| {
                Instruction::new(
                    None,
                    Opcode::ReportError(c.kind),
                    c.ty,
                    vec![
                        Operand::Const(c.site as u64),
                        Operand::value(&c.ok),
                        c.orig.clone(),
                        Operand::value(&c.val),
                    ],
                )
                .tagged(OriginTag::Reporting)
            })
            .collect();
        let (cont, err, new_blocks) = match existing {
            Some((_, cont, err)) => (cont, err, None),
            None => {
                let cont = fresh_in(&mut self.labels, &format!("{}.cont", b.label));
                let err = fresh_in(&mut self.labels, &format!("{}.err", b.label));
                (cont.clone(), err.clone(), Some((cont, err)))
            }
        };
        st.out.push(Instruction::condbr(acc, &cont, &err).tagged(OriginTag::Check));
        let block = BasicBlock { label: b.label.clone(), instrs: st.out };
        Some(match new_blocks {
            Some((cont, err)) => {
                self.stats.reporting_blocks_added += 1;
                let mut err_instrs = reports;
                err_instrs.push(Instruction::br(&cont).tagged(OriginTag::Reporting));
                BlockRewrite {
                    block,
                    cont: Some(BasicBlock { label: cont, instrs: vec![term.clone()] }),
                    reports: Reports::New(BasicBlock { label: err, instrs: err_instrs }),
                }
            }
            None => BlockRewrite {
                block,
                cont: None,
                reports: Reports::Merge(err, reports),
            },
        })
    }

    /// Emit validations for every pending original, then checks for the
    /// checked ones.
    fn flush(
        &mut self,
        st: &mut BlockState<'_>,
        pending: &mut Vec<usize>,
        f: &Function,
        bi: usize,
        pcs: &HashMap<(usize, usize), u32>,
    ) {
        let group = std::mem::take(pending);
        let mut vals: Vec<Vec<String>> = Vec::with_capacity(group.len());
        for &t in &group {
            vals.push(self.validations(st, t));
        }
        for (&t, vals) in group.iter().zip(vals) {
            if !st.checked.contains(&t) {
                continue;
            }
            let ins = &st.body[t];
            let (orig, ty, kind) = match ins.opcode {
                Opcode::Store => (ins.operands[0].clone(), ins.ty, ReportKind::Store),
                _ => (
                    Operand::value(ins.result.as_deref().unwrap()),
                    result_ty(ins),
                    ReportKind::Value,
                ),
            };
            let stem = check_stem(ins, st.label, t);
            for (k, v) in vals.into_iter().enumerate() {
                let ok = self.names.fresh(&format!("{stem}.c{}", k + 1));
                st.out.push(
                    Instruction::new(
                        Some(ok.clone()),
                        Opcode::Icmp(crate::ir::Pred::Eq),
                        ty,
                        vec![orig.clone(), Operand::value(&v)],
                    )
                    .tagged(OriginTag::Check),
                );
                let site = *self.next_site;
                *self.next_site += 1;
                self.stats.checks_inserted += 1;
                self.sites.push(CheckSite {
                    site,
                    function: f.name.clone(),
                    original_pc: pcs[&(bi, t)],
                    opcode: ins.opcode.mnemonic().to_string(),
                    block: base_label(st.label).to_string(),
                    pass: self.pass,
                    ordinal: k as u8 + 1,
                    kind,
                });
                st.checks.push(Check {
                    site,
                    ok,
                    orig: orig.clone(),
                    val: v,
                    ty,
                    kind,
                });
            }
        }
    }

    /// Emit the validation instructions of `body[t]`; returns the names of
    /// the validation values in comparison order.
    fn validations(&mut self, st: &mut BlockState<'_>, t: usize) -> Vec<String> {
        let ins = &st.body[t];
        let stem = check_stem(ins, st.label, t);
        match self.pass {
            Pass::Arith => {
                let name = self.names.fresh(&format!("{stem}.d"));
                let mut dup = ins.clone().tagged(OriginTag::Validation);
                for op in &mut dup.operands {
                    if let Operand::Value(v) = op {
                        if let Some(r) = st.rename.get(v) {
                            *v = r.clone();
                        }
                    }
                }
                dup.result = Some(name.clone());
                st.rename.insert(ins.result.clone().unwrap(), name.clone());
                st.out.push(dup);
                self.stats.validations_inserted += 1;
                vec![name]
            }
            Pass::Mem | Pass::MemDiv => {
                let (addr, _) = access(ins);
                let addr = addr.clone();
                let ty = ins.ty;
                let load = |rw: &mut Self, out: &mut Vec<Instruction>, k: usize| {
                    let name = rw.names.fresh(&format!("{stem}.v{k}"));
                    out.push(
                        Instruction::new(Some(name.clone()), Opcode::Load, ty, vec![addr.clone()])
                            .tagged(OriginTag::Validation),
                    );
                    rw.stats.validations_inserted += 1;
                    name
                };
                let diversity = |rw: &mut Self, out: &mut Vec<Instruction>, op: Opcode| {
                    let operands = match op {
                        Opcode::ClFlush => vec![addr.clone()],
                        _ => vec![],
                    };
                    let ty = if op == Opcode::ClFlush { Ty::Ptr } else { Ty::I1 };
                    out.push(Instruction::new(None, op, ty, operands).tagged(OriginTag::Diversity));
                    rw.stats.diversity_inserted += 1;
                };
                let out = &mut st.out;
                let mut vals = vec![load(self, out, 1)];
                if self.pass == Pass::MemDiv {
                    if ins.opcode == Opcode::Store {
                        diversity(self, out, Opcode::MFence);
                        vals.push(load(self, out, 2));
                    }
                    diversity(self, out, Opcode::ClFlush);
                    vals.push(load(self, out, vals.len() + 1));
                }
                vals
            }
            Pass::Br => unreachable!("the branch pass has its own rewriter"),
        }
    }
}

fn check_stem(ins: &Instruction, label: &str, index: usize) -> String {
    match &ins.result {
        Some(r) => r.clone(),
        None => format!("{}.st{index}", base_label(label)),
    }
}

enum Reports {
    None,
    New(BasicBlock),
    Merge(String, Vec<Instruction>),
}

struct BlockRewrite {
    block: BasicBlock,
    cont: Option<BasicBlock>,
    reports: Reports,
}

#[cfg(test)]
mod tests;
