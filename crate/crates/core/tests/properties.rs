mod common;

use common::{reference_run, RefOutcome};
use ithaca_kit::campaign::{run_campaign, serialize_report, CampaignConfig, InputPolicy, ReportFormat, Variant};
use ithaca_kit::ir::{gen_random_program, parse_module, print_module, step_bound, validate_module, Pass, ProgramInput};
use ithaca_kit::sim::{run, Corruption, FaultKind, FaultSpec, FaultTarget, Program, RunOptions, RunStatus, Trigger};
use ithaca_kit::transforms::{instrument_arith, instrument_combined, PassConfig, STANDARD_PASS_SETS};
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 48,
        ..ProptestConfig::default()
    }
}

fn input(args: [u64; 2], seed: u64) -> ProgramInput {
    ProgramInput {
        seed,
        args: args.to_vec(),
        ..ProgramInput::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn print_parse_round_trip(seed in any::<u64>(), size in 1usize..60) {
        let m = gen_random_program(seed, size);
        let text = print_module(&m);
        let back = parse_module(&text).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(print_module(&back), text);
    }

    #[test]
    fn instrumented_text_round_trips(seed in any::<u64>(), set in 0usize..7) {
        let m = gen_random_program(seed, 30);
        let out = instrument_combined(&m, &PassConfig::new(STANDARD_PASS_SETS[set].iter().copied())).unwrap();
        let back = parse_module(&print_module(&out.module)).unwrap();
        prop_assert_eq!(back, out.module);
    }

    #[test]
    fn generated_programs_validate_and_terminate(seed in any::<u64>(), size in 1usize..60, args in any::<[u64; 2]>()) {
        let m = gen_random_program(seed, size);
        prop_assert!(validate_module(&m).is_empty());
        let out = run(&m, &input(args, 0), &[], step_bound(&m), false);
        prop_assert!(matches!(out.status, RunStatus::Completed { .. }), "{:?}", out.status);
    }

    /// The store buffer and cache never change architectural results.
    #[test]
    fn simulator_matches_reference(seed in any::<u64>(), size in 1usize..60, args in any::<[u64; 2]>()) {
        let m = gen_random_program(seed, size);
        let x = input(args, 0);
        let sim = run(&m, &x, &[], step_bound(&m), false);
        let reference = reference_run(&m, &x, step_bound(&m));
        match (&sim.status, &reference.outcome) {
            (RunStatus::Completed { value }, RefOutcome::Returned(v)) => prop_assert_eq!(value, v),
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
        prop_assert_eq!(sim.steps, reference.steps);
        prop_assert_eq!(sim.final_memory, reference.memory);
    }

    #[test]
    fn instrumentation_preserves_semantics(seed in any::<u64>(), set in 0usize..7, args in any::<[u64; 2]>()) {
        let m = gen_random_program(seed, 40);
        let out = instrument_combined(&m, &PassConfig::new(STANDARD_PASS_SETS[set].iter().copied())).unwrap();
        let x = input(args, 0);
        let want = reference_run(&m, &x, step_bound(&m));
        let got = run(&out.module, &x, &[], 16 * step_bound(&m), false);
        let RefOutcome::Returned(v) = want.outcome else { panic!("reference did not finish") };
        prop_assert_eq!(got.status, RunStatus::Completed { value: v });
        prop_assert_eq!(got.final_memory, want.memory);
        prop_assert!(got.detections.is_empty());
    }

    /// A fault that corrupts every execution of the same inputs the same way
    /// hits original and duplicate alike.
    #[test]
    fn consistent_faults_are_invisible_to_duplication(
        seed in any::<u64>(),
        op in prop::sample::select(vec!["add", "sub", "mul", "xor", "and", "or", "shl", "lshr", "ptradd", "select"]),
        mask in 1u64..,
        args in any::<[u64; 2]>(),
    ) {
        let m = gen_random_program(seed, 40);
        let out = instrument_arith(&m, &PassConfig::new([Pass::Arith])).unwrap();
        let fault = FaultSpec::new(FaultKind::Consistent, FaultTarget::Opcode(op.into()), Trigger::Always, Some(Corruption::Bitflip(mask)));
        let got = run(&out.module, &input(args, 0), &[fault], 16 * step_bound(&m), false);
        prop_assert!(got.detections.is_empty(), "{:?}", got.detections.first());
    }

    #[test]
    fn runs_are_deterministic(seed in any::<u64>(), run_seed in any::<u64>(), args in any::<[u64; 2]>()) {
        let m = instrument_arith(&gen_random_program(seed, 30), &PassConfig::new([Pass::Arith])).unwrap().module;
        let fault = FaultSpec::new(FaultKind::Inconsistent, FaultTarget::Opcode("add".into()), Trigger::Always, Some(Corruption::Bitflip(1)))
            .with_probability(0.05);
        let p = Program::compile(&m).unwrap();
        let opts = RunOptions { budget: 100_000, trace: true, ..RunOptions::default() };
        let a = p.run(&input(args, run_seed), std::slice::from_ref(&fault), &opts);
        let b = p.run(&input(args, run_seed), std::slice::from_ref(&fault), &opts);
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn parallel_campaign_equals_serial(seed in any::<u64>(), jobs in 2usize..6) {
        let m = gen_random_program(seed, 30);
        let variants = [Pass::Arith, Pass::MemDiv]
            .into_iter()
            .map(|p| {
                let out = instrument_combined(&m, &PassConfig::new([p])).unwrap();
                Variant { name: p.name().into(), module: out.module, sites: out.sites }
            })
            .collect();
        let fault = FaultSpec::new(FaultKind::Inconsistent, FaultTarget::Opcode("add".into()), Trigger::Always, Some(Corruption::Bitflip(2)))
            .with_probability(0.01);
        let mut cfg = CampaignConfig::new(variants, vec![fault], 12, seed);
        cfg.budget = 16 * step_bound(&m);
        let serial = serialize_report(&run_campaign(&cfg, 1).unwrap(), ReportFormat::Json);
        let parallel = serialize_report(&run_campaign(&cfg, jobs).unwrap(), ReportFormat::Json);
        prop_assert_eq!(serial, parallel);
    }

    #[test]
    fn report_json_round_trip(seed in any::<u64>()) {
        let m = gen_random_program(seed, 20);
        let out = instrument_arith(&m, &PassConfig::new([Pass::Arith])).unwrap();
        let fault = FaultSpec::new(FaultKind::Inconsistent, FaultTarget::Opcode("add".into()), Trigger::PortEquals(1), Some(Corruption::Bitflip(1)));
        let mut cfg = CampaignConfig::new(vec![Variant { name: "a".into(), module: out.module, sites: out.sites }], vec![fault], 5, seed);
        cfg.budget = 16 * step_bound(&m);
        let json = serialize_report(&run_campaign(&cfg, 1).unwrap(), ReportFormat::Json);
        let parsed: ithaca_kit::campaign::CampaignReport = serde_json::from_slice(&json).unwrap();
        prop_assert_eq!(serialize_report(&parsed, ReportFormat::Json), json);
    }
}

/// Doubling a stochastic fault's probability, with the same per-run random
/// streams, never lowers the number of runs with a detection.
#[test]
fn edr_monotone_in_fault_probability() {
    let src = "
        global @acc[8] = zero
        fn @main(%x: i64) -> i64 {
        entry:
          br loop
        loop:
          %i = load i64 @acc
          %j = add i64 %i, 1
          store i64 %j, @acc
          %c = icmp ult i64 %j, 200
          condbr %c, loop, done
        done:
          ret %j
        }";
    let out = instrument_arith(&parse_module(src).unwrap(), &PassConfig::new([Pass::Arith])).unwrap();
    let variant = Variant { name: "Arith".into(), module: out.module, sites: out.sites };
    let at = |p: f64| {
        let fault = FaultSpec::new(FaultKind::Inconsistent, FaultTarget::Opcode("add".into()), Trigger::Always, Some(Corruption::Bitflip(1 << 20)))
            .with_probability(p);
        let mut cfg = CampaignConfig::new(vec![variant.clone()], vec![fault], 60, 77);
        cfg.inputs = InputPolicy::Fixed(ProgramInput { args: vec![0], ..ProgramInput::default() });
        run_campaign(&cfg, 0).unwrap().variants[0].runs_with_detection
    };
    let mut last = 0;
    for p in [0.0005, 0.001, 0.002, 0.004, 0.008] {
        let rwd = at(p);
        assert!(rwd >= last, "p={p}: {rwd} < {last}");
        last = rwd;
    }
    assert!(last > 0);
}
