use latchsim::cells::{build_cell, canonical_testbench, osc_truth_table, CellKind, OscLevel, Sizing};
use latchsim::fault::{osc_output_restoration, CampaignSpec, Classification, Phase, RunPlan, Schedule, ScheduleEntry};
use latchsim::metrics::functional_check;
use latchsim::netlist::Severity;
use latchsim::{parse_netlist, serialize, transient, validate, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn every_cell_dumps_and_reparses() {
    for kind in CellKind::ALL {
        let cell = build_cell(kind, &Sizing::default()).unwrap();
        let back = parse_netlist(&serialize(&cell.netlist)).unwrap();
        assert_eq!(back.devices, cell.netlist.devices, "{kind}");
        for port in &cell.ports {
            assert!(cell.netlist.has_node(port), "{kind} lacks port {port}");
        }
    }
}

#[test]
fn latch_testbenches_validate() {
    for kind in [CellKind::StandardLatch, CellKind::Loco] {
        let tb = canonical_testbench(kind, &[false, true], 4, 0.8).unwrap();
        let errors: Vec<_> = validate(&tb).into_iter().filter(|d| d.severity == Severity::Error).collect();
        assert!(errors.is_empty(), "{kind}: {errors:?}");
    }
    assert!(canonical_testbench(CellKind::Osc, &[true], 4, 0.8).is_err());
}

#[test]
fn osc_truth_table_all_cases() {
    let cases = osc_truth_table(&SimConfig::default()).unwrap();
    assert_eq!(cases.len(), 6);
    for c in &cases {
        assert!(c.pass, "{c:?}");
    }
    let retained = cases
        .iter()
        .filter(|c| matches!(c.expected.0, OscLevel::Retained(_)) || matches!(c.expected.1, OscLevel::Retained(_)))
        .count();
    assert_eq!(retained, 4);
}

#[test]
fn latches_follow_random_pattern() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let pattern: Vec<bool> = (0..16).map(|_| rng.random()).collect();
    let cfg = SimConfig::default();
    for kind in [CellKind::StandardLatch, CellKind::Loco] {
        for (t, bit, v) in functional_check(kind, &pattern, &cfg).unwrap() {
            assert_eq!(v > 0.4, bit, "{kind} at {t:e}: q = {v}");
            let rail = if bit { 0.8 } else { 0.0 };
            assert!((v - rail).abs() < 0.08, "{kind} at {t:e}: q = {v}");
        }
    }
}

#[test]
fn loco_internal_nodes_settle_to_complementary_levels() {
    let cfg = SimConfig {
        t_stop: 1e-9,
        ..SimConfig::default()
    };
    for stored in [false, true] {
        let tb = canonical_testbench(CellKind::Loco, &[stored], 2, 0.8).unwrap();
        let tr = transient(&tb, &cfg, &[]).unwrap();
        let at = |n: &str| tr.value_at(n, 0.74e-9).unwrap() > 0.4;
        // OSC0 sees (Q, N0) = (D, D): both outputs equal !D
        assert_eq!(at("q"), stored);
        assert_eq!(at("n0"), stored);
        assert_eq!(at("n1"), !stored);
        assert_eq!(at("n3"), !stored);
        assert_eq!(at("n2"), !stored);
        assert_eq!(at("n4"), !stored);
        assert_eq!(at("n5"), stored);
    }
}

#[test]
fn osc_outputs_restore_after_strike() {
    let cfg = SimConfig::default();
    for inputs in [false, true] {
        let o = osc_output_restoration(inputs, 2.5e-15, &cfg).unwrap();
        assert_eq!(o.classification, Classification::Recovered, "{o:?}");
        assert!(o.t_recover.unwrap() <= 150e-12);
    }
}

fn hold_strike(kind: CellKind, node: &str, stored: bool, q: f64) -> Classification {
    let cell = build_cell(kind, &Sizing::default()).unwrap();
    let entry = ScheduleEntry {
        node: node.into(),
        t_start: 1.0e-9,
        phase: Phase::Hold,
    };
    let cfg = SimConfig::default();
    RunPlan::new(&cell, &entry, stored, &cfg).unwrap().run(q, &cfg).unwrap().classification
}

#[test]
fn standard_keeper_flips_and_loco_node_recovers() {
    assert_eq!(hold_strike(CellKind::StandardLatch, "n_keep", true, 2.5e-15), Classification::Upset);
    assert_eq!(hold_strike(CellKind::Loco, "n3", false, 2.5e-15), Classification::Recovered);
}

#[test]
fn zero_charge_is_always_recovered() {
    assert_eq!(hold_strike(CellKind::StandardLatch, "n_keep", false, 0.0), Classification::Recovered);
}

#[test]
fn exhaustive_schedule_covers_state_nodes() {
    let cell = build_cell(CellKind::Loco, &Sizing::default()).unwrap();
    let Schedule::Custom(e) = Schedule::exhaustive(&cell, 1e-9) else {
        panic!("custom schedule expected")
    };
    assert_eq!(e.len(), 7);
    assert!(e.iter().all(|x| x.phase == Phase::Hold && x.t_start == 1e-9));
    let spec = CampaignSpec::new(CellKind::Loco, 2.5e-15);
    assert_eq!(spec.stored_values, vec![false, true]);
}

#[test]
fn unknown_strike_node_is_rejected() {
    let cell = build_cell(CellKind::Loco, &Sizing::default()).unwrap();
    let entry = ScheduleEntry {
        node: "nowhere".into(),
        t_start: 1e-9,
        phase: Phase::Hold,
    };
    assert!(RunPlan::new(&cell, &entry, true, &SimConfig::default()).is_err());
}
