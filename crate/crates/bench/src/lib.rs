//! Shared fixtures for the benchmarks.

use latchsim::cells::{build_cell, canonical_testbench, CellKind, Sizing};
use latchsim::fault::{Phase, RunPlan, ScheduleEntry};
use latchsim::{Netlist, SimConfig};

/// A latch on the canonical clock loading 0, 1 over `cycles` periods.
pub fn latch_bench(kind: CellKind, cycles: usize) -> Netlist {
    canonical_testbench(kind, &[false, true], cycles, 0.8).expect("canonical testbench builds")
}

pub fn config(t_stop: f64) -> SimConfig {
    SimConfig {
        t_stop,
        ..SimConfig::default()
    }
}

/// A hold-phase strike plan on `node`, ready for repeated runs.
pub fn strike_plan(kind: CellKind, node: &str, stored: bool) -> (RunPlan, SimConfig) {
    let cell = build_cell(kind, &Sizing::default()).expect("cell builds");
    let entry = ScheduleEntry {
        node: node.into(),
        t_start: 1e-9,
        phase: Phase::Hold,
    };
    let cfg = SimConfig::default();
    let plan = RunPlan::new(&cell, &entry, stored, &cfg).expect("plan builds");
    (plan, cfg)
}
