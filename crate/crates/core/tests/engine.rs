use std::collections::BTreeMap;

use latchsim::devices::mosfet_ids;
use latchsim::engine::{kcl_residual, trace_kcl_residuals};
use latchsim::netlist::{Capacitor, ISource, VSource};
use latchsim::{dc_operating_point, parse_netlist, transient, Device, MosfetParams, Netlist, SimConfig, StepKind, Waveform};

const C: f64 = 1e-15;
const G: f64 = 1e-4;

fn powered(name: &str) -> Netlist {
    let mut n = Netlist::new(name);
    n.add(Device::VSource(VSource {
        name: "vdd".into(),
        n_plus: "vdd".into(),
        n_minus: "0".into(),
        waveform: Waveform::Dc { v: 0.8 },
    }))
    .unwrap();
    n
}

/// 1 fF held at 0.8 V by a current source into a 10 kOhm conductance, released at t = 1e-18 s.
/// The conductance is the engine's node-to-ground GMIN term.
fn rc_discharge() -> (Netlist, f64) {
    let eps = 1e-18;
    let mut n = powered("rc");
    n.add(Device::Capacitor(Capacitor {
        name: "c1".into(),
        n1: "a".into(),
        n2: "0".into(),
        value: C,
    }))
    .unwrap();
    n.add(Device::ISource(ISource {
        name: "ihold".into(),
        n_plus: "0".into(),
        n_minus: "a".into(),
        waveform: Waveform::Pwl(vec![(0.0, 0.8 * G), (eps, 0.0)]),
    }))
    .unwrap();
    (n, eps)
}

fn rc_config(dt: f64) -> SimConfig {
    SimConfig {
        t_stop: 50e-12,
        dt_nominal: dt,
        dt_fine: dt,
        gmin: G,
        node_cap_floor: 0.0,
        ..SimConfig::default()
    }
}

fn rc_max_error(dt: f64) -> (f64, f64) {
    let (n, eps) = rc_discharge();
    let tr = transient(&n, &rc_config(dt), &["a"]).unwrap();
    let tau = C / G;
    let v = tr.voltage("a").unwrap();
    let mut worst_abs: f64 = 0.0;
    let mut worst_rel: f64 = 0.0;
    for (k, &t) in tr.times.iter().enumerate().skip(1) {
        let exact = 0.8 * (-(t - eps) / tau).exp();
        worst_abs = worst_abs.max((v[k] - exact).abs());
        if exact > 1e-3 {
            worst_rel = worst_rel.max((v[k] - exact).abs() / exact);
        }
    }
    (worst_abs, worst_rel)
}

#[test]
fn rc_discharge_matches_exponential() {
    let tau = C / G;
    let (_, rel) = rc_max_error(tau / 100.0);
    assert!(rel < 0.005, "relative error {rel}");
}

#[test]
fn trapezoidal_is_second_order() {
    let tau = C / G;
    let (e1, _) = rc_max_error(tau / 100.0);
    let (e2, _) = rc_max_error(tau / 200.0);
    assert!(e1 / e2 >= 3.5, "error ratio {}", e1 / e2);
}

#[test]
fn capacitor_charge_bookkeeping() {
    let mut n = powered("charge");
    n.add(Device::VSource(VSource {
        name: "vramp".into(),
        n_plus: "a".into(),
        n_minus: "0".into(),
        waveform: Waveform::Pwl(vec![(0.0, 0.0), (5e-12, 0.0), (15e-12, 0.8)]),
    }))
    .unwrap();
    n.add(Device::Capacitor(Capacitor {
        name: "c1".into(),
        n1: "a".into(),
        n2: "0".into(),
        value: C,
    }))
    .unwrap();
    let cfg = SimConfig {
        t_stop: 25e-12,
        ..SimConfig::default()
    };
    let tr = transient(&n, &cfg, &[]).unwrap();
    let i = tr.supply_current("vramp").unwrap().to_vec();
    let q = tr.integrate(&i, 0.0, 25e-12).unwrap();
    assert!((q - C * 0.8).abs() / (C * 0.8) < 1e-3, "charge {q}");
}

fn inverter(vin: &str) -> Netlist {
    parse_netlist(&format!(
        "* inverter\nvdd vdd 0 DC 0.8\nvin in 0 {vin}\nmp out in vdd pmos W/L=1\nmn out in 0 nmos W/L=1\n.end\n"
    ))
    .unwrap()
}

#[test]
fn inverter_dc_low_input() {
    let op = dc_operating_point(&inverter("DC 0"), &SimConfig::default()).unwrap();
    assert!((op.voltages["out"] - 0.8).abs() < 1e-3);
}

#[test]
fn inverter_dc_matches_bisection() {
    let cfg = SimConfig::default();
    let op = dc_operating_point(&inverter("DC 0.4"), &cfg).unwrap();
    let (pn, pp) = (MosfetParams::default_nmos(), MosfetParams::default_pmos());
    let leaving = |out: f64| {
        mosfet_ids(&pn, &cfg.env, 1.0, 0.4, out) + mosfet_ids(&pp, &cfg.env, 1.0, 0.4 - 0.8, out - 0.8) + cfg.gmin * out
    };
    let (mut lo, mut hi) = (0.0, 0.8);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if leaving(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let oracle = 0.5 * (lo + hi);
    // the stronger NMOS pulls the midpoint below vdd/2
    assert!(oracle < 0.4 && oracle > 0.0);
    assert!((op.voltages["out"] - oracle).abs() < 1e-5, "{} vs {oracle}", op.voltages["out"]);
}

#[test]
fn diode_connected_rails_only() {
    let n = parse_netlist("vdd vdd 0 DC 0.8\nm1 vdd vdd 0 nmos W/L=1\n.end\n").unwrap();
    let op = dc_operating_point(&n, &SimConfig::default()).unwrap();
    assert_eq!(op.voltages["vdd"], 0.8);
    assert_eq!(kcl_residual(&n, &SimConfig::default(), &BTreeMap::new(), 0.0).unwrap(), 0.0);
}

#[test]
fn kcl_residual_certifies_and_rejects() {
    let cfg = SimConfig::default();
    let n = inverter("DC 0.4");
    let op = dc_operating_point(&n, &cfg).unwrap();
    assert!(kcl_residual(&n, &cfg, &op.voltages, 0.0).unwrap() <= cfg.i_tol);
    let mut bumped = op.voltages.clone();
    *bumped.get_mut("out").unwrap() += 0.01;
    assert!(kcl_residual(&n, &cfg, &bumped, 0.0).unwrap() > cfg.i_tol);
}

fn pulsed_inverter() -> Netlist {
    let mut n = inverter("PULSE(0 0.8 100p 5p 5p 245p 500p)");
    n.add(Device::Capacitor(Capacitor {
        name: "cl".into(),
        n1: "out".into(),
        n2: "0".into(),
        value: 1e-15,
    }))
    .unwrap();
    n
}

fn inverter_delay(dt: f64) -> f64 {
    let cfg = SimConfig {
        t_stop: 1e-9,
        dt_nominal: dt,
        dt_fine: dt.min(1e-15),
        ..SimConfig::default()
    };
    let tr = transient(&pulsed_inverter(), &cfg, &["in", "out"]).unwrap();
    let t_in = tr.crossing("in", 0.4, 0.0).unwrap();
    let t_out = tr.crossing("out", 0.4, 0.0).unwrap();
    t_out - t_in
}

#[test]
fn inverter_delay_is_grid_converged() {
    let d1 = inverter_delay(50e-15);
    let d2 = inverter_delay(25e-15);
    assert!(d1 > 0.0);
    assert!((d1 - d2).abs() / d2 < 0.02, "{d1} vs {d2}");
}

#[test]
fn every_trace_point_passes_independent_kcl() {
    let cfg = SimConfig {
        t_stop: 1e-9,
        ..SimConfig::default()
    };
    let n = pulsed_inverter();
    let tr = transient(&n, &cfg, &[]).unwrap();
    let res = trace_kcl_residuals(&n, &cfg, &tr).unwrap();
    let worst = res.iter().cloned().fold(0.0, f64::max);
    assert!(worst <= cfg.i_tol, "worst residual {worst}");
    assert_eq!(tr.steps[0], StepKind::OperatingPoint);
}

#[test]
fn transient_is_deterministic() {
    let cfg = SimConfig {
        t_stop: 600e-12,
        ..SimConfig::default()
    };
    let a = transient(&pulsed_inverter(), &cfg, &[]).unwrap();
    let b = transient(&pulsed_inverter(), &cfg, &[]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unknown_report_node_is_an_error() {
    let cfg = SimConfig {
        t_stop: 10e-12,
        ..SimConfig::default()
    };
    assert!(transient(&pulsed_inverter(), &cfg, &["nope"]).is_err());
}
