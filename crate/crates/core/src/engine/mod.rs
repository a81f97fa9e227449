//! DC operating point and fixed-step transient analysis.

mod circuit;
mod residual;
mod trace;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::devices::EnvCondition;
use crate::error::{Error, Result};
use crate::netlist::{Netlist, Waveform};

use circuit::{Circuit, Mode, NewtonFailure};

pub use residual::{kcl_residual, trace_kcl_residuals};
pub use trace::{StepKind, Trace};

/// Solver and environment settings for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub env: EnvCondition,
    pub t_stop: f64,
    pub dt_nominal: f64,
    pub dt_fine: f64,
    pub fine_windows: Vec<(f64, f64)>,
    pub v_tol: f64,
    pub i_tol: f64,
    pub max_newton_iters: usize,
    pub gmin: f64,
    pub node_cap_floor: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            env: EnvCondition::default(),
            t_stop: 5e-9,
            dt_nominal: 50e-15,
            dt_fine: 1e-15,
            fine_windows: Vec::new(),
            v_tol: 1e-6,
            i_tol: 1e-9,
            max_newton_iters: 60,
            gmin: 1e-12,
            node_cap_floor: 1e-16,
        }
    }
}

impl SimConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        self.env.check().map_err(Error::Config)?;
        if !(self.t_stop > 0.0) {
            return bad("t_stop must be positive");
        }
        if !(self.dt_fine > 0.0 && self.dt_fine <= self.dt_nominal) {
            return bad("need 0 < dt_fine <= dt_nominal");
        }
        if !(self.v_tol > 0.0 && self.i_tol > 0.0 && self.gmin > 0.0) {
            return bad("v_tol, i_tol and gmin must be positive");
        }
        if !(self.node_cap_floor >= 0.0) {
            return bad("node_cap_floor must be non-negative");
        }
        if self.max_newton_iters == 0 {
            return bad("max_newton_iters must be at least 1");
        }
        for &(a, b) in &self.fine_windows {
            if !(0.0 <= a && a <= b && b <= self.t_stop) {
                return bad("fine windows must lie within [0, t_stop]");
            }
        }
        Ok(())
    }
}

/// Converged DC solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub voltages: BTreeMap<String, f64>,
    /// Per voltage source, positive when delivering current into the circuit.
    pub source_currents: BTreeMap<String, f64>,
}

fn non_convergence(circuit: &Circuit, time: f64, f: NewtonFailure) -> Error {
    Error::NonConvergence {
        time,
        node: circuit.row_name(f.row),
        residual: f.residual,
    }
}

/// DC solve at time `t` with the fallback ladder: plain Newton, gmin
/// stepping, source stepping.
fn solve_dc(
    circuit: &Circuit,
    config: &SimConfig,
    t: f64,
    ws: &mut circuit::Workspace,
) -> Result<Vec<f64>> {
    let n = circuit.n_unknowns;
    let mut x = vec![0.0; n];
    let first = match circuit.newton(&mut x, t, 1.0, config.gmin, Mode::Dc, None, config, ws) {
        Ok(_) => return Ok(x),
        Err(f) => f,
    };

    let mut x = vec![0.0; n];
    let mut g: f64 = 1e-3;
    let mut ok = true;
    loop {
        let g_now = g.max(config.gmin);
        if circuit
            .newton(&mut x, t, 1.0, g_now, Mode::Dc, None, config, ws)
            .is_err()
        {
            ok = false;
            break;
        }
        if g_now <= config.gmin {
            break;
        }
        g /= 10.0;
    }
    if ok {
        return Ok(x);
    }

    let mut x = vec![0.0; n];
    for k in 1..=10 {
        let scale = k as f64 / 10.0;
        if let Err(f) = circuit.newton(&mut x, t, scale, config.gmin, Mode::Dc, None, config, ws) {
            return Err(non_convergence(circuit, t, if k == 10 { f } else { first }));
        }
    }
    Ok(x)
}

pub fn dc_operating_point(netlist: &Netlist, config: &SimConfig) -> Result<OperatingPoint> {
    config.check()?;
    let circuit = Circuit::compile(netlist, config)?;
    let mut ws = circuit.workspace();
    let x = solve_dc(&circuit, config, 0.0, &mut ws)?;
    let mut currents = Vec::new();
    circuit.supply_currents(&ws, &x, &mut currents);
    Ok(OperatingPoint {
        voltages: circuit
            .node_names
            .iter()
            .cloned()
            .zip(ws.v.iter().copied())
            .collect(),
        source_currents: circuit
            .vsrcs
            .iter()
            .map(|v| v.name.clone())
            .zip(currents)
            .collect(),
    })
}

/// Refinement windows: configured ones plus one per strike pulse.
fn fine_windows(circuit: &Circuit, config: &SimConfig) -> Vec<(f64, f64)> {
    let mut out = config.fine_windows.clone();
    for w in circuit.sources() {
        if let Waveform::DoubleExp(d) = w {
            out.push((d.t_start, d.t_start + 20.0 * d.tau1.max(d.tau2)));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn breakpoints(circuit: &Circuit, t_stop: f64) -> Vec<f64> {
    let mut bps: Vec<f64> = circuit
        .sources()
        .flat_map(|w| w.breakpoints(t_stop))
        .filter(|&t| t > 0.0 && t < t_stop)
        .collect();
    bps.push(t_stop);
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    bps
}

/// Transient analysis from the DC state at t = 0.
///
/// `report_nodes` selects the recorded node voltages; empty records all.
pub fn transient(netlist: &Netlist, config: &SimConfig, report_nodes: &[&str]) -> Result<Trace> {
    config.check()?;
    let circuit = Circuit::compile(netlist, config)?;
    let mut reported = Vec::new();
    if report_nodes.is_empty() {
        reported.extend(1..circuit.node_names.len());
    } else {
        for name in report_nodes {
            let lower = name.to_ascii_lowercase();
            let lower = if lower == "gnd" { "0".to_string() } else { lower };
            let idx = circuit
                .node_names
                .iter()
                .position(|n| *n == lower)
                .ok_or_else(|| Error::UnknownNode(name.to_string()))?;
            reported.push(idx);
        }
    }
    let mut trace = Trace::new(
        reported.iter().map(|&i| circuit.node_names[i].clone()).collect(),
        circuit.vsrcs.iter().map(|v| v.name.clone()).collect(),
    );

    let mut ws = circuit.workspace();
    let mut x = solve_dc(&circuit, config, 0.0, &mut ws)?;
    let mut currents = Vec::new();
    let mut record = |trace: &mut Trace, t: f64, kind: StepKind, ws: &circuit::Workspace, x: &[f64]| {
        circuit.supply_currents(ws, x, &mut currents);
        trace.push(t, kind, reported.iter().map(|&i| ws.v[i]), currents.iter().copied());
    };
    record(&mut trace, 0.0, StepKind::OperatingPoint, &ws, &x);
    let mut caps = circuit.cap_state(&ws);

    let windows = fine_windows(&circuit, config);
    let bps = breakpoints(&circuit, config.t_stop);
    let mut next_bp = 0;
    // below floating-point resolution at the simulated time scale
    let snap = config.t_stop * 1e-12;
    let h_min = config.dt_fine / 64.0;

    let mut t = 0.0;
    let mut x_prev = x.clone();
    while t < config.t_stop {
        // breakpoints closer than `snap` to the current time count as reached
        while next_bp + 1 < bps.len() && bps[next_bp] <= t + snap {
            next_bp += 1;
        }
        let in_fine = windows.iter().any(|&(a, b)| a <= t && t < b);
        let h = if in_fine { config.dt_fine } else { config.dt_nominal };
        let mut t_next = t + h;
        if let Some(&(a, _)) = windows.iter().find(|&&(a, _)| a > t + snap) {
            t_next = t_next.min(a);
        }
        if t_next >= bps[next_bp] - snap {
            t_next = bps[next_bp];
        }

        x_prev.copy_from_slice(&x);
        let trap = Mode::Trapezoidal { h: t_next - t };
        match circuit.newton(&mut x, t_next, 1.0, config.gmin, trap, Some(&caps), config, &mut ws) {
            Ok(_) => {
                circuit.update_cap_state(&ws, &mut caps);
                record(&mut trace, t_next, StepKind::Trapezoidal, &ws, &x);
                t = t_next;
            }
            Err(_) => {
                // damped retry: backward Euler substeps, shrinking on failure
                x.copy_from_slice(&x_prev);
                let mut sub = (t_next - t) / 4.0;
                let floor = h_min.min(t_next - t);
                sub = sub.max(floor);
                let mut tc = t;
                while tc < t_next {
                    if sub < floor {
                        return Err(Error::StepUnderflow { time: tc, dt: sub });
                    }
                    let tn = if tc + sub >= t_next - snap { t_next } else { tc + sub };
                    x_prev.copy_from_slice(&x);
                    let be = Mode::BackwardEuler { h: tn - tc };
                    match circuit.newton(&mut x, tn, 1.0, config.gmin, be, Some(&caps), config, &mut ws) {
                        Ok(_) => {
                            circuit.update_cap_state(&ws, &mut caps);
                            record(&mut trace, tn, StepKind::BackwardEuler, &ws, &x);
                            tc = tn;
                        }
                        Err(f) => {
                            x.copy_from_slice(&x_prev);
                            sub /= 2.0;
                            if sub < floor {
                                return Err(non_convergence(&circuit, tn, f));
                            }
                        }
                    }
                }
                t = t_next;
            }
        }
    }
    Ok(trace)
}

pub(crate) fn rail_nodes(netlist: &Netlist) -> BTreeMap<String, Waveform> {
    let mut out = BTreeMap::new();
    for d in &netlist.devices {
        if let crate::netlist::Device::VSource(v) = d {
            if v.n_minus == crate::netlist::GROUND && v.n_plus != crate::netlist::GROUND {
                out.entry(v.n_plus.clone()).or_insert_with(|| v.waveform.clone());
            }
        }
    }
    out
}
