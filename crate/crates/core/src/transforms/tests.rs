use super::*;
use crate::ir::{parse_module, print_module};

fn module(text: &str) -> IrModule {
    parse_module(text).unwrap()
}

fn body(m: &IrModule, label: &str) -> Vec<String> {
    let f = &m.functions[0];
    let b = &f.blocks[f.block_index(label).unwrap()];
    b.instrs
        .iter()
        .map(|i| {
            let mut s = String::new();
            crate::ir::print::instruction(&mut s, i);
            s
        })
        .collect()
}

fn cfg(pass: Pass) -> PassConfig {
    PassConfig::new([pass])
}

#[test]
fn arith_single_add() {
    let m = module("fn @main(%s0: i64, %s1: i64) -> i64 { entry: %r0 = add i64 %s0, %s1 ret %r0 }");
    let out = instrument_arith(&m, &cfg(Pass::Arith)).unwrap();
    assert_eq!(
        body(&out.module, "entry"),
        [
            "%r0 = add i64 %s0, %s1",
            "%r0.d = add i64 %s0, %s1 #val",
            "%r0.c1 = icmp eq i64 %r0, %r0.d #chk",
            "condbr %r0.c1, entry.cont, entry.err #chk",
        ]
    );
    assert_eq!(body(&out.module, "entry.cont"), ["ret %r0"]);
    assert_eq!(
        body(&out.module, "entry.err"),
        ["report_error value i64 0, %r0.c1, %r0, %r0.d #rep", "br entry.cont #rep"]
    );
    assert_eq!(out.sites.sites.len(), 1);
    let s = &out.sites.sites[0];
    assert_eq!((s.original_pc, s.opcode.as_str(), s.block.as_str()), (0, "add", "entry"));
    assert_eq!(out.stats.reporting_blocks_added, 1);
}

#[test]
fn no_targets_no_change() {
    let m = module("global @g[8] = zero fn @main() -> i64 { entry: %v = load i64 @g ret %v }");
    let out = instrument_arith(&m, &cfg(Pass::Arith)).unwrap();
    assert_eq!(out.module.functions, m.functions);
    assert!(out.sites.sites.is_empty());
    let m = module("fn @main(%x: i64) -> i64 { entry: %y = add i64 %x, 1 ret %y }");
    let out = instrument_mem(&m, &cfg(Pass::Mem)).unwrap();
    assert_eq!(out.module.functions, m.functions);
    let out = instrument_memdiv(&m, &cfg(Pass::MemDiv)).unwrap();
    assert_eq!(out.module.functions, m.functions);
}

#[test]
fn block_size_two_checks_second_and_fourth() {
    let m = module(
        "fn @main(%x: i64) -> i64 { entry:
           %a = add i64 %x, 1 %b = mul i64 %a, 3 %c = sub i64 %b, %x
           %d = xor i64 %c, 7 %e = or i64 %d, %a ret %e }",
    );
    let c = cfg(Pass::Arith).with_block_size(BlockSize::N(2));
    let out = instrument_arith(&m, &c).unwrap();
    let f = &out.module.functions[0];
    let vals = f.blocks[0].instrs.iter().filter(|i| i.tag == OriginTag::Validation).count();
    assert_eq!(vals, 5);
    let pcs: Vec<u32> = out.sites.sites.iter().map(|s| s.original_pc).collect();
    assert_eq!(pcs, [1, 3]);
    let branches = f
        .blocks
        .iter()
        .flat_map(|b| &b.instrs)
        .filter(|i| i.opcode == Opcode::CondBr && i.tag == OriginTag::Check)
        .count();
    assert_eq!(branches, 1);
    // Duplicates follow the duplicated chain.
    assert!(body(&out.module, "entry").contains(&"%b.d = mul i64 %a.d, 3 #val".to_string()));
}

#[test]
fn interleaving_orders_groups() {
    let m = module(
        "fn @main(%x: i64) -> i64 { entry:
           %a = add i64 %x, 1 %b = add i64 %x, 2 %c = add i64 %x, 3 ret %c }",
    );
    let c = cfg(Pass::Arith).with_interleaving(Interleaving::N(2));
    let out = instrument_arith(&m, &c).unwrap();
    let names: Vec<String> = out.module.functions[0].blocks[0]
        .instrs
        .iter()
        .filter(|i| i.tag != OriginTag::Check)
        .filter_map(|i| i.result.clone())
        .collect();
    assert_eq!(names, ["a", "b", "a.d", "b.d", "c", "c.d"]);
    let c = cfg(Pass::Arith).with_interleaving(Interleaving::Max);
    let out = instrument_arith(&m, &c).unwrap();
    let names: Vec<String> = out.module.functions[0].blocks[0]
        .instrs
        .iter()
        .filter_map(|i| i.result.clone())
        .collect();
    assert_eq!(
        names,
        ["a", "b", "c", "a.d", "b.d", "c.d", "a.c1", "b.c1", "c.c1", "entry.acc", "entry.acc2"]
    );
}

#[test]
fn mem_store_and_load() {
    let m = module(
        "global @a[8] = zero global @b[8] = zero
         fn @main(%x: i64) -> i64 { entry: %v0 = load i64 @a store i64 %x, @b ret %v0 }",
    );
    let out = instrument_mem(&m, &cfg(Pass::Mem).with_interleaving(Interleaving::N(2))).unwrap();
    assert_eq!(
        body(&out.module, "entry"),
        [
            "%v0 = load i64 @a",
            "store i64 %x, @b",
            "%v0.v1 = load i64 @a #val",
            "%entry.st1.v1 = load i64 @b #val",
            "%v0.c1 = icmp eq i64 %v0, %v0.v1 #chk",
            "%entry.st1.c1 = icmp eq i64 %x, %entry.st1.v1 #chk",
            "%entry.acc = and i1 %v0.c1, %entry.st1.c1 #chk",
            "condbr %entry.acc, entry.cont, entry.err #chk",
        ]
    );
    assert_eq!(out.sites.sites[1].kind, ReportKind::Store);
}

#[test]
fn mem_group_closes_before_aliasing_store() {
    let m = module(
        "global @a[8] = zero
         fn @main(%x: i64) -> i64 { entry: %v0 = load i64 @a store i64 %x, @a ret %v0 }",
    );
    let out = instrument_mem(&m, &cfg(Pass::Mem).with_interleaving(Interleaving::Max)).unwrap();
    let b = body(&out.module, "entry");
    assert_eq!(b[0], "%v0 = load i64 @a");
    assert_eq!(b[1], "%v0.v1 = load i64 @a #val");
    assert_eq!(b[3], "store i64 %x, @a");
}

#[test]
fn memdiv_shapes() {
    let m = module(
        "global @a[8] = zero
         fn @main(%x: i64) -> i64 { entry: store i64 %x, @a %v0 = load i64 @a ret %v0 }",
    );
    let out = instrument_memdiv(&m, &cfg(Pass::MemDiv)).unwrap();
    let b = body(&out.module, "entry");
    assert_eq!(
        &b[..9],
        [
            "store i64 %x, @a",
            "%entry.st0.v1 = load i64 @a #val",
            "mfence #div",
            "%entry.st0.v2 = load i64 @a #val",
            "clflush @a #div",
            "%entry.st0.v3 = load i64 @a #val",
            "%entry.st0.c1 = icmp eq i64 %x, %entry.st0.v1 #chk",
            "%entry.st0.c2 = icmp eq i64 %x, %entry.st0.v2 #chk",
            "%entry.st0.c3 = icmp eq i64 %x, %entry.st0.v3 #chk",
        ]
    );
    assert_eq!(
        &b[9..14],
        [
            "%v0 = load i64 @a",
            "%v0.v1 = load i64 @a #val",
            "clflush @a #div",
            "%v0.v2 = load i64 @a #val",
            "%v0.c1 = icmp eq i64 %v0, %v0.v1 #chk",
        ]
    );
    let ordinals: Vec<u8> = out.sites.sites.iter().map(|s| s.ordinal).collect();
    assert_eq!(ordinals, [1, 2, 3, 1, 2]);
    assert_eq!(out.stats.diversity_inserted, 3);
}

#[test]
fn br_trampolines_on_diamond() {
    let m = module(
        "fn @main(%x: i64) -> i64 {
         entry: %c = icmp ult i64 %x, 5 condbr %c, l, r
         l: br join
         r: br join
         join: ret %x }",
    );
    let out = instrument_br(&m).unwrap();
    let f = &out.module.functions[0];
    assert_eq!(
        body(&out.module, "entry"),
        [
            "%c = icmp ult i64 %x, 5",
            "%entry.exp = select i64 %c, 2, 3 #val",
            "store i64 %entry.exp, @__br_slot_main #val",
            "condbr %c, entry.tr, entry.tr2",
        ]
    );
    assert_eq!(
        body(&out.module, "entry.tr"),
        [
            "%entry.tr.v = load i64 @__br_slot_main #val",
            "%entry.tr.c = icmp eq i64 %entry.tr.v, 2 #chk",
            "condbr %entry.tr.c, l, entry.tr.err #chk",
        ]
    );
    assert_eq!(
        body(&out.module, "entry.tr.err"),
        ["report_error branch i64 0, %entry.tr.c, 2, %entry.tr.v #rep", "br l #rep"]
    );
    assert_eq!(body(&out.module, "join"), ["ret %x"]);
    assert_eq!(f.blocks.len(), 8);
    assert_eq!(out.sites.sites.len(), 2);
}

#[test]
fn br_ignores_unconditional_and_same_target() {
    let m = module(
        "fn @main(%x: i64) -> i64 { entry: %c = icmp ult i64 %x, 5 condbr %c, a, a a: br b b: ret %x }",
    );
    let out = instrument_br(&m).unwrap();
    assert_eq!(out.module.functions, m.functions);
    assert!(out.module.globals.is_empty());
}

#[test]
fn combined_never_duplicates_instrumentation() {
    let m = module(
        "global @g[8] = \"0500000000000000\"
         fn @main(%x: i64) -> i64 { entry: %v = load i64 @g %s = add i64 %v, %x store i64 %s, @g ret %s }",
    );
    let c = PassConfig::new([Pass::Arith, Pass::MemDiv]);
    let out = instrument_combined(&m, &c).unwrap();
    let f = &out.module.functions[0];
    let mut per_pass: BTreeMap<Pass, Vec<&str>> = BTreeMap::new();
    for s in &out.sites.sites {
        per_pass.entry(s.pass).or_default().push(&s.opcode);
    }
    assert_eq!(per_pass[&Pass::Arith], ["add"]);
    assert_eq!(per_pass[&Pass::MemDiv], ["load", "load", "store", "store", "store"]);
    let reporting = f.blocks.iter().filter(|b| b.label.ends_with(".err")).count();
    assert_eq!(reporting, 1);
    assert_eq!(validate_module(&out.module), vec![]);
    assert_eq!(out.module.instrumented, BTreeSet::from([Pass::Arith, Pass::MemDiv]));
}

#[test]
fn combined_br_on_straight_line_is_a_no_op() {
    let m = module(
        "global @g[8] = zero fn @main(%x: i64) -> i64 { entry: %s = add i64 %x, 1 store i64 %s, @g ret %s }",
    );
    let with_br = instrument_combined(&m, &PassConfig::new([Pass::Arith, Pass::Mem, Pass::Br])).unwrap();
    let without = instrument_combined(&m, &PassConfig::new([Pass::Arith, Pass::Mem])).unwrap();
    assert_eq!(with_br.module.functions, without.module.functions);
    assert_eq!(with_br.sites, without.sites);
}

#[test]
fn second_application_changes_nothing() {
    let m = module("fn @main(%x: i64) -> i64 { entry: %y = mul i64 %x, %x ret %y }");
    let once = instrument_arith(&m, &cfg(Pass::Arith)).unwrap();
    let twice = instrument_arith(&once.module, &cfg(Pass::Arith)).unwrap();
    assert_eq!(twice.module, once.module);
    assert!(twice.sites.sites.is_empty());
    let text = print_module(&once.module);
    assert_eq!(parse_module(&text).unwrap(), once.module);
}

#[test]
fn site_ids_follow_native_checks() {
    let m = module(
        "fn @main(%x: i64) -> i64 { entry: %y = add i64 %x, 1 %ok = icmp eq i64 %y, %y
         report_error value i64 7, %ok, %y, %y ret %y }",
    );
    let out = instrument_arith(&m, &cfg(Pass::Arith)).unwrap();
    let ids: Vec<u32> = out.sites.sites.iter().map(|s| s.site).collect();
    assert_eq!(ids, [8, 9]);
}

#[test]
fn dep_mode_checks_chain_ends() {
    let m = module(
        "fn @main(%x: i64) -> i64 { entry: %a = add i64 %x, 1 %b = mul i64 %a, 3 %c = sub i64 %x, 2 ret %b }",
    );
    let out = instrument_arith(&m, &cfg(Pass::Arith).with_block_size(BlockSize::Dep)).unwrap();
    let pcs: Vec<u32> = out.sites.sites.iter().map(|s| s.original_pc).collect();
    assert_eq!(pcs, [1, 2]);
}

#[test]
fn invalid_configs() {
    let m = module("fn @main() -> i64 { entry: ret 0 }");
    assert!(matches!(
        instrument_combined(&m, &PassConfig::new([Pass::Mem, Pass::MemDiv])),
        Err(TransformError::InvalidConfig(_))
    ));
    assert!(matches!(
        instrument_arith(&m, &cfg(Pass::Mem)),
        Err(TransformError::InvalidConfig(_))
    ));
    assert!("0".parse::<Interleaving>().is_err());
    assert_eq!("max".parse::<Interleaving>(), Ok(Interleaving::Max));
    assert_eq!("dep".parse::<BlockSize>(), Ok(BlockSize::Dep));
    assert_eq!(PassConfig::parse_passes("arith,memdiv,br").unwrap().len(), 3);
}

#[test]
fn config_json() {
    let c = cfg(Pass::Arith).with_interleaving(Interleaving::Max).with_block_size(BlockSize::N(4));
    let text = serde_json::to_string(&c).unwrap();
    assert_eq!(text, r#"{"passes":["Arith"],"interleaving":"max","block_size":"4"}"#);
    let back: PassConfig = serde_json::from_str(r#"{"passes":["Arith"],"interleaving":"max","block_size":4}"#).unwrap();
    assert_eq!(back, c);
}
