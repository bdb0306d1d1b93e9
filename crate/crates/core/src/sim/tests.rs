use super::*;
use crate::ir::parse_module;
use crate::transforms::{instrument_arith, instrument_br, instrument_memdiv, PassConfig};
use crate::ir::Pass;

fn module(text: &str) -> IrModule {
    parse_module(text).unwrap()
}

fn input(args: &[u64]) -> ProgramInput {
    ProgramInput {
        seed: 1,
        args: args.to_vec(),
        ..ProgramInput::default()
    }
}

const MUL_PAIR: &str = "
global @g1[8] = \"0700000000000000\"
global @g2[8] = \"0500000000000000\"
fn @main() -> i64 {
entry:
  %a = load i64 @g1
  %b = load i64 @g2
  %r0 = mul i64 %a, %b
  %t = add i64 %a, 0
  ret %r0
}";

#[test]
fn in_flight_producer_corrupts_original_only() {
    let m = instrument_arith(&module(MUL_PAIR), &PassConfig::new([Pass::Arith])).unwrap().module;
    let fault = FaultSpec::new(
        FaultKind::Inconsistent,
        FaultTarget::Opcode("mul".into()),
        Trigger::ProducerInFlight { operand: 0, window: 2 },
        Some(Corruption::StuckOperandZero(0)),
    );
    let out = run(&m, &input(&[]), &[fault], DEFAULT_BUDGET, false);
    assert_eq!(out.status, RunStatus::Completed { value: 0 });
    assert_eq!(out.fault_activations, 1);
    let muls: Vec<_> = out.detections.iter().filter(|d| d.opcode == "mul").collect();
    assert_eq!(muls.len(), 1);
    let d = muls[0];
    assert_eq!((d.original_value, d.validation_values.as_slice(), d.golden), (0, &[35][..], 35));
    assert_eq!(d.wrongness, Wrongness::OriginalWrong);
    assert_eq!(d.original_pc, Some(2));
    assert!(!d.native);
}

#[test]
fn fault_free_run_has_no_detections() {
    let src = module(MUL_PAIR);
    let plain = run(&src, &input(&[]), &[], DEFAULT_BUDGET, false);
    assert_eq!(plain.status, RunStatus::Completed { value: 35 });
    let m = instrument_arith(&src, &PassConfig::new([Pass::Arith])).unwrap().module;
    let out = run(&m, &input(&[]), &[], DEFAULT_BUDGET, false);
    assert_eq!(out.status, plain.status);
    assert!(out.detections.is_empty());
    assert_eq!(out.final_memory, plain.final_memory);
}

#[test]
fn unresponsive_divider_hangs() {
    let m = module("fn @main(%x: i64) -> i64 { entry: %q = udiv i64 %x, 3 ret %q }");
    let f = FaultSpec::new(FaultKind::Unresponsive, FaultTarget::Opcode("udiv".into()), Trigger::Always, None);
    let out = run(&m, &input(&[9]), &[f], 500, false);
    assert_eq!(out.status, RunStatus::HungAtBudget);
    assert_eq!(out.steps, 500);
}

#[test]
fn divide_by_zero_traps() {
    let m = module("fn @main(%x: i64, %y: i64) -> i64 { entry: %q = udiv i64 %x, %y ret %q }");
    let out = run(&m, &input(&[9, 0]), &[], 100, false);
    assert_eq!(out.status, RunStatus::Trapped { reason: TrapReason::DivideByZero });
}

#[test]
fn out_of_bounds_traps() {
    let m = module("global @g[8] = zero fn @main() -> i64 { entry: %p = ptradd @g, 4 %v = load i64 %p ret %v }");
    let out = run(&m, &input(&[]), &[], 100, false);
    assert!(matches!(out.status, RunStatus::Trapped { reason: TrapReason::OutOfBounds { width: 8, .. } }));
}

#[test]
fn budget_stops_infinite_loop() {
    let m = module("fn @main() -> i64 { entry: br entry }");
    let out = run(&m, &input(&[]), &[], 1000, false);
    assert_eq!((out.status, out.steps), (RunStatus::HungAtBudget, 1000));
}

#[test]
fn stores_reach_final_memory() {
    let m = module(
        "global @g[8] = zero fn @main(%x: i64) -> i64 { entry: store i64 %x, @g mfence %v = load i64 @g ret %v }",
    );
    let out = run(&m, &input(&[0x1122]), &[], 100, false);
    assert_eq!(out.status, RunStatus::Completed { value: 0x1122 });
    assert_eq!(out.final_memory["g"], [0x22, 0x11, 0, 0, 0, 0, 0, 0]);
}

#[test]
fn main_memory_fault_caught_by_reload_from_memory() {
    let src = module("global @g[8] = zero fn @main(%x: i64) -> i64 { entry: store i64 %x, @g ret 0 }");
    let m = instrument_memdiv(&src, &PassConfig::new([Pass::MemDiv])).unwrap().module;
    let f = FaultSpec::new(
        FaultKind::Inconsistent,
        FaultTarget::MemoryLevel(MemLevel::Main),
        Trigger::Always,
        Some(Corruption::Bitflip(1)),
    );
    let out = run(&m, &input(&[6]), &[f], 1000, false);
    assert_eq!(out.status, RunStatus::Completed { value: 0 });
    assert_eq!(out.detections.len(), 1);
    let d = &out.detections[0];
    assert_eq!((d.kind, d.opcode.as_str(), d.original_pc), (ReportKind::Store, "store", Some(0)));
    assert_eq!(d.validation_values, [7]);
}

#[test]
fn branch_fault_is_reported_against_the_branch() {
    let src = module(
        "fn @main(%x: i64) -> i64 {
         entry: %c = icmp ult i64 %x, 10 condbr %c, lo, hi
         lo: ret 1
         hi: ret 2 }",
    );
    let m = instrument_br(&src).unwrap().module;
    let f = FaultSpec::new(
        FaultKind::Consistent,
        FaultTarget::Opcode("condbr".into()),
        Trigger::Always,
        Some(Corruption::Bitflip(1)),
    );
    let clean = run(&m, &input(&[3]), &[], 1000, false);
    assert_eq!(clean.status, RunStatus::Completed { value: 1 });
    assert!(clean.detections.is_empty());
    // Trampoline branches see a false condition on the error path, so only
    // the source branch is corrupted.
    let f = FaultSpec {
        trigger: Trigger::InputEquals(vec![1]),
        ..f
    };
    let out = run(&m, &input(&[3]), &[f], 1000, false);
    assert_eq!(out.status, RunStatus::Completed { value: 2 });
    let d = &out.detections[0];
    assert_eq!((d.kind, d.opcode.as_str(), d.original_pc), (ReportKind::Branch, "condbr", Some(1)));
    assert_eq!(d.wrongness, Wrongness::OriginalWrong);
}

#[test]
fn native_checks_are_marked() {
    let m = module(
        "fn @main(%x: i64) -> i64 { entry: %ok = icmp eq i64 %x, 1 report_error value i64 4, %ok, %x, 1 ret %x }",
    );
    let out = run(&m, &input(&[2]), &[], 100, false);
    assert_eq!(out.detections.len(), 1);
    assert!(out.detections[0].native);
    assert_eq!(out.detections[0].site, 4);
    let out = run(&m, &input(&[1]), &[], 100, false);
    assert!(out.detections.is_empty());
}

#[test]
fn halt_on_error_traps() {
    let m = module(
        "fn @main(%x: i64) -> i64 { entry: %ok = icmp eq i64 %x, 1 report_error value i64 4, %ok, %x, 1 ret %x }",
    );
    let p = Program::compile(&m).unwrap();
    let opts = RunOptions {
        halt_on_error: true,
        ..RunOptions::default()
    };
    let out = p.run(&input(&[2]), &[], &opts);
    assert_eq!(out.status, RunStatus::Trapped { reason: TrapReason::ErrorReported });
    assert_eq!(out.detections.len(), 1);
}

#[test]
fn probability_draws_are_seeded() {
    let m = module("fn @main(%x: i64) -> i64 { entry: %y = add i64 %x, 1 %z = add i64 %y, 1 %w = add i64 %z, 1 ret %w }");
    let f = FaultSpec::new(
        FaultKind::Inconsistent,
        FaultTarget::Opcode("add".into()),
        Trigger::Always,
        Some(Corruption::Bitflip(1 << 40)),
    )
    .with_probability(0.5);
    let a = run(&m, &input(&[0]), std::slice::from_ref(&f), 100, true);
    let b = run(&m, &input(&[0]), std::slice::from_ref(&f), 100, true);
    assert_eq!(a, b);
    let never = run(&m, &input(&[0]), &[f.with_probability(0.0)], 100, false);
    assert_eq!(never.fault_activations, 0);
}

#[test]
fn trace_records_every_step() {
    let m = module(MUL_PAIR);
    let out = run(&m, &input(&[]), &[], 100, true);
    let t = out.trace.unwrap();
    assert_eq!(t.len() as u64, out.steps);
    assert_eq!(t[2].opcode, "mul");
    assert_eq!(t[2].result, Some(35));
    assert_eq!(t[0].level, Some(MemLevel::Main));
}

#[test]
fn wrongness_classes() {
    assert_eq!(classify_wrongness(5, 5, &[4]), Wrongness::ValidationWrong);
    assert_eq!(classify_wrongness(5, 4, &[5, 5]), Wrongness::OriginalWrong);
    assert_eq!(classify_wrongness(5, 4, &[5, 3]), Wrongness::BothWrong);
}

#[test]
fn reserved_globals_hidden_from_final_memory() {
    let src = module("fn @main(%x: i64) -> i64 { entry: %c = icmp ult i64 %x, 1 condbr %c, a, b a: ret 1 b: ret 2 }");
    let m = instrument_br(&src).unwrap().module;
    let out = run(&m, &input(&[0]), &[], 100, false);
    assert!(out.final_memory.is_empty());
}
