use latchsim::cells::{build_cell, logic_pwl, CellKind, ClockMode, Sizing, Testbench};
use latchsim::experiments::{
    draw_conditions, monte_carlo, pvt_sweep, short_circuit_protocol, short_circuit_trace, McConfig, PvtAxis,
    SC_D_EDGES,
};
use latchsim::metrics::{
    avg_current, find_hold_time_for, find_qcrit, find_setup_time_for, measure_delay, measure_delays,
    measure_power, measure_power_of, Bounded, LatchMetrics, MetricsReport,
};
use latchsim::{transient, EnvCondition, SimConfig, Trace, Waveform};

fn fast() -> SimConfig {
    SimConfig {
        dt_nominal: 100e-15,
        ..SimConfig::default()
    }
}

fn idle_bench(kind: CellKind) -> latchsim::Netlist {
    Testbench {
        vdd: 0.8,
        clock: ClockMode::Held(false),
        d: Waveform::Dc { v: 0.0 },
    }
    .build(&build_cell(kind, &Sizing::default()).unwrap())
    .unwrap()
}

#[test]
fn idle_power_is_static_floor() {
    let cfg = SimConfig::default();
    for kind in [CellKind::StandardLatch, CellKind::Loco] {
        let toggling = measure_power(kind, &cfg).unwrap();
        let idle = measure_power_of(&idle_bench(kind), &cfg).unwrap();
        assert!(toggling > 0.0 && toggling.is_finite());
        assert!(idle.abs() < 0.01 * toggling, "{kind}: idle {idle} vs {toggling}");
    }
}

#[test]
fn more_node_capacitance_costs_power() {
    let base = SimConfig::default();
    let doubled = SimConfig {
        node_cap_floor: 2.0 * base.node_cap_floor,
        ..base.clone()
    };
    for kind in [CellKind::StandardLatch, CellKind::Loco] {
        assert!(measure_power(kind, &doubled).unwrap() > measure_power(kind, &base).unwrap(), "{kind}");
    }
}

#[test]
fn delay_of_a_copy_is_zero() {
    let net = Testbench {
        vdd: 0.8,
        clock: ClockMode::canonical(),
        d: logic_pwl(0.8, false, &[(300e-12, true)]),
    }
    .build(&build_cell(CellKind::StandardLatch, &Sizing::default()).unwrap())
    .unwrap();
    let cfg = SimConfig {
        t_stop: 400e-12,
        ..SimConfig::default()
    };
    let tr = transient(&net, &cfg, &["d"]).unwrap();
    let mut copy = tr.clone();
    copy.node_names.push("d_copy".into());
    copy.voltages.push(tr.voltage("d").unwrap().to_vec());
    assert_eq!(measure_delay(&copy, "d", 300e-12, "d_copy", 0.8).unwrap(), 0.0);
}

#[test]
fn delays_are_positive_and_averaged() {
    for kind in [CellKind::StandardLatch, CellKind::Loco] {
        let d = measure_delays(kind, &SimConfig::default()).unwrap();
        for v in [d.t_dq_rise, d.t_dq_fall, d.t_cq_rise, d.t_cq_fall] {
            assert!(v > 0.0 && v < 100e-12, "{kind}: {d:?}");
        }
        assert_eq!(d.t_avg(), 0.5 * (d.t_dq() + d.t_cq()));
    }
}

#[test]
fn standard_latch_setup_and_hold_brackets_certified() {
    let cfg = SimConfig::default();
    for intended in [false, true] {
        let s = find_setup_time_for(CellKind::StandardLatch, &cfg, intended).unwrap();
        let Bounded::Value(v) = s.value else { panic!("{s:?}") };
        assert!(s.passing - s.failing.unwrap() <= 0.05e-12 + 1e-18);
        assert!(v > -50e-12 && v < 250e-12);
        let h = find_hold_time_for(CellKind::StandardLatch, &cfg, intended).unwrap();
        assert!(h.passing - h.failing.unwrap() <= 0.05e-12 + 1e-18);
    }
}

#[test]
fn qcrit_edge_cases() {
    let cfg = SimConfig::default();
    let empty = find_qcrit(CellKind::StandardLatch, "n_keep", true, &cfg, 0.0).unwrap();
    assert_eq!(empty.q_crit, Bounded::ExceedsBound(0.0));
    let q = find_qcrit(CellKind::StandardLatch, "n_keep", true, &cfg, 10e-15).unwrap();
    let Bounded::Value(v) = q.q_crit else { panic!("{q:?}") };
    let (lo, _) = q.lower;
    let (hi, _) = q.upper.unwrap();
    assert_eq!(hi, v);
    assert!(hi - lo <= 0.05e-15 + 1e-24);
}

#[test]
fn report_units() {
    let m = LatchMetrics {
        power: 0.18e-6,
        t_dq: 5.86e-12,
        t_cq: 4.62e-12,
        t_avg: 5.24e-12,
        t_setup: Bounded::Value(1e-12),
        t_hold: Bounded::Value(-1.11e-12),
        pdp: 0.18e-6 * 5.24e-12,
        q_crit: Bounded::ExceedsBound(100e-15),
        transistor_count: 23,
    };
    let json = serde_json::to_value(MetricsReport::new(CellKind::Loco, &m)).unwrap();
    assert_eq!(json["latch"], "loco");
    assert!((json["pdp_e18J"].as_f64().unwrap() - 0.9432).abs() < 1e-9);
    assert_eq!(json["q_crit_fC"], "> 100");
    assert_eq!(json["n_trans"], 23);
}

#[test]
fn short_circuit_edges_are_grid_points() {
    let tr = short_circuit_trace(CellKind::Loco, &SimConfig::default()).unwrap();
    for t in SC_D_EDGES {
        assert!(tr.times.contains(&t), "missing {t:e}");
    }
    let i = short_circuit_protocol(CellKind::Loco, &SimConfig::default()).unwrap();
    assert!(i > 0.0 && i.is_finite());
}

#[test]
fn quiet_d_draws_only_leakage() {
    let net = Testbench {
        vdd: 0.8,
        clock: ClockMode::Held(true),
        d: Waveform::Dc { v: 0.0 },
    }
    .build(&build_cell(CellKind::Loco, &Sizing::default()).unwrap())
    .unwrap();
    let cfg = SimConfig {
        t_stop: 250e-12,
        ..SimConfig::default()
    };
    let tr = transient(&net, &cfg, &[]).unwrap();
    let quiet = avg_current(&tr, 50e-12, 250e-12, "vdd").unwrap();
    let active = short_circuit_protocol(CellKind::Loco, &SimConfig::default()).unwrap();
    assert!(quiet < 1e-3 * active, "{quiet} vs {active}");
}

#[test]
fn alternating_current_averages_to_magnitude() {
    // ±1 µA square wave flipping every 10 ps, each flip 1 as wide
    let (mut t, mut i) = (Vec::new(), Vec::new());
    for k in 0..20 {
        let level = if k % 2 == 0 { 1e-6 } else { -1e-6 };
        t.extend([k as f64 * 10e-12, (k + 1) as f64 * 10e-12 - 1e-18]);
        i.extend([level, level]);
    }
    let tr = Trace::from_supply(t, "vdd", i).unwrap();
    let avg = avg_current(&tr, 50e-12, 150e-12, "vdd").unwrap();
    assert!((avg - 1e-6).abs() < 1e-12, "{avg}");
    assert!(tr.integrate(tr.supply_current("vdd").unwrap(), 50e-12, 150e-12).unwrap().abs() < 1e-20);
}

#[test]
fn pvt_grid_sizes_and_degenerate_axis() {
    for (axis, n) in [(PvtAxis::vth(), 8), (PvtAxis::temp(), 20), (PvtAxis::vdd(), 11)] {
        assert_eq!(axis.points().unwrap().len(), n);
    }
    let one = PvtAxis::Temp {
        from: 27.0,
        to: 27.0,
        step: 10.0,
    };
    let s = pvt_sweep(CellKind::StandardLatch, one, &fast()).unwrap();
    assert_eq!(s.points.len(), 1);
    assert_eq!(s.sigma_power, Some(0.0));
    assert_eq!(s.sigma_delay, Some(0.0));
    assert_eq!(s.to_csv().lines().count(), 2);
}

#[test]
fn single_sample_mc_has_no_spread() {
    let mc = McConfig {
        n_samples: 1,
        seed: 5,
        ..McConfig::default()
    };
    let r = monte_carlo(CellKind::StandardLatch, &mc, &fast()).unwrap();
    assert_eq!(r.summary.sigma_power, Some(0.0));
    assert_eq!(r.summary.ad_power, Some(0.0));
    assert_eq!(r.summary.n_excluded, 0);
}

#[test]
fn mc_draws_have_declared_spread() {
    let mc = McConfig::default();
    let env = EnvCondition::default();
    let draws: Vec<EnvCondition> = (0..4000).map(|i| draw_conditions(&mc, &env, i).unwrap()).collect();
    let sd = |f: fn(&EnvCondition) -> f64| {
        let x: Vec<f64> = draws.iter().map(f).collect();
        latchsim::metrics::stddev(&x).unwrap()
    };
    assert!((sd(|e| e.dvth_n) / 0.01 - 1.0).abs() < 0.05);
    assert!((sd(|e| e.dvth_p) / 0.01 - 1.0).abs() < 0.05);
    assert!((sd(|e| e.vdd) / (0.16 / 3.0) - 1.0).abs() < 0.05);
    assert!((sd(|e| e.temperature) / 20.0 - 1.0).abs() < 0.05);
}
