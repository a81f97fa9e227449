//! KCL recheck written against the netlist and device equations directly,
//! sharing nothing with the solver's stamping code.

use std::collections::BTreeMap;

use crate::devices::mosfet_ids;
use crate::error::{Error, Result};
use crate::netlist::{Device, Netlist, GROUND};

use super::{rail_nodes, SimConfig, StepKind, Trace};

struct Groups {
    parent: BTreeMap<String, String>,
}

impl Groups {
    fn find(&self, n: &str) -> String {
        let mut cur = n.to_string();
        while let Some(p) = self.parent.get(&cur) {
            if *p == cur {
                break;
            }
            cur = p.clone();
        }
        cur
    }

    fn union(&mut self, a: &str, b: &str) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent.insert(ra, rb);
        }
    }
}

/// Node groups whose KCL sum is checked: every node not tied to a rail,
/// with the two ends of each floating voltage source merged (their branch
/// current cancels in the sum).
fn checked_groups(netlist: &Netlist) -> (BTreeMap<String, String>, Vec<String>) {
    let rails = rail_nodes(netlist);
    let mut g = Groups {
        parent: netlist.nodes.iter().map(|n| (n.clone(), n.clone())).collect(),
    };
    for d in &netlist.devices {
        if let Device::VSource(v) = d {
            if v.n_minus != GROUND {
                g.union(&v.n_plus, &v.n_minus);
            }
        }
    }
    let mut owner = BTreeMap::new();
    let mut excluded = std::collections::BTreeSet::new();
    for n in &netlist.nodes {
        let root = g.find(n);
        if n == GROUND || rails.contains_key(n) {
            excluded.insert(root.clone());
        }
        owner.insert(n.clone(), root);
    }
    let roots: Vec<String> = owner
        .values()
        .filter(|r| !excluded.contains(*r))
        .cloned()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    (owner, roots)
}

/// Static currents leaving each node: transistors, GMIN and current sources.
fn static_currents(
    netlist: &Netlist,
    config: &SimConfig,
    v: &dyn Fn(&str) -> f64,
    t: f64,
    out: &mut BTreeMap<String, f64>,
) {
    for n in &netlist.nodes {
        if n != GROUND {
            *out.entry(n.clone()).or_default() += config.gmin * v(n);
        }
    }
    for d in &netlist.devices {
        match d {
            Device::Mosfet(m) => {
                let params = netlist.model_params(&m.model).expect("validated model");
                let ids = mosfet_ids(
                    &params,
                    &config.env,
                    m.w_over_l,
                    v(&m.gate) - v(&m.source),
                    v(&m.drain) - v(&m.source),
                );
                *out.entry(m.drain.clone()).or_default() += ids;
                *out.entry(m.source.clone()).or_default() -= ids;
            }
            Device::ISource(i) => {
                let val = i.waveform.value(t);
                *out.entry(i.n_plus.clone()).or_default() += val;
                *out.entry(i.n_minus.clone()).or_default() -= val;
            }
            _ => {}
        }
    }
}

fn max_group_residual(owner: &BTreeMap<String, String>, roots: &[String], currents: &BTreeMap<String, f64>) -> f64 {
    let mut sums: BTreeMap<&str, f64> = roots.iter().map(|r| (r.as_str(), 0.0)).collect();
    for (node, i) in currents {
        if let Some(s) = owner.get(node).and_then(|r| sums.get_mut(r.as_str())) {
            *s += i;
        }
    }
    sums.values().fold(0.0, |m, s| m.max(s.abs()))
}

/// Largest DC KCL imbalance over non-rail nodes for the candidate voltages.
/// Rail nodes missing from `voltages` take their source value at `t`.
pub fn kcl_residual(
    netlist: &Netlist,
    config: &SimConfig,
    voltages: &BTreeMap<String, f64>,
    t: f64,
) -> Result<f64> {
    let rails = rail_nodes(netlist);
    for n in &netlist.nodes {
        if n != GROUND && !rails.contains_key(n) && !voltages.contains_key(n) {
            return Err(Error::UnknownNode(n.clone()));
        }
    }
    let v = |n: &str| -> f64 {
        if n == GROUND {
            0.0
        } else if let Some(x) = voltages.get(n) {
            *x
        } else {
            rails[n].value(t)
        }
    };
    let (owner, roots) = checked_groups(netlist);
    let mut currents = BTreeMap::new();
    static_currents(netlist, config, &v, t, &mut currents);
    Ok(max_group_residual(&owner, &roots, &currents))
}

/// Per-point KCL imbalance of a transient trace that recorded every node.
///
/// Capacitor currents are rebuilt from the recorded voltages with the same
/// companion recursion the step kinds imply.
pub fn trace_kcl_residuals(netlist: &Netlist, config: &SimConfig, trace: &Trace) -> Result<Vec<f64>> {
    let rails = rail_nodes(netlist);
    let index: BTreeMap<&str, usize> = trace
        .node_names
        .iter()
        .enumerate()
        .map(|(k, n)| (n.as_str(), k))
        .collect();
    for n in &netlist.nodes {
        if n != GROUND && !index.contains_key(n.as_str()) {
            return Err(Error::UnknownNode(n.clone()));
        }
    }

    let mut caps: Vec<(String, String, f64)> = Vec::new();
    for d in &netlist.devices {
        match d {
            Device::Capacitor(c) => caps.push((c.n1.clone(), c.n2.clone(), c.value)),
            Device::Mosfet(m) => {
                let params = netlist.model_params(&m.model).expect("validated model");
                if m.gate != GROUND && params.cg0 > 0.0 {
                    caps.push((m.gate.clone(), GROUND.into(), params.cg0 * m.w_over_l));
                }
            }
            _ => {}
        }
    }
    if config.node_cap_floor > 0.0 {
        for n in &netlist.nodes {
            if n != GROUND && !rails.contains_key(n) {
                caps.push((n.clone(), GROUND.into(), config.node_cap_floor));
            }
        }
    }

    let (owner, roots) = checked_groups(netlist);
    let volt = |n: &str, k: usize| -> f64 {
        if n == GROUND {
            0.0
        } else {
            trace.voltages[index[n]][k]
        }
    };
    let mut i_prev = vec![0.0; caps.len()];
    let mut out = Vec::with_capacity(trace.len());
    for k in 0..trace.len() {
        let t = trace.times[k];
        let mut currents = BTreeMap::new();
        static_currents(netlist, config, &|n| volt(n, k), t, &mut currents);
        for (c, (a, b, value)) in caps.iter().enumerate() {
            let i = match trace.steps[k] {
                StepKind::OperatingPoint => 0.0,
                kind => {
                    let h = t - trace.times[k - 1];
                    let dv = (volt(a, k) - volt(b, k)) - (volt(a, k - 1) - volt(b, k - 1));
                    if kind == StepKind::Trapezoidal {
                        2.0 * value / h * dv - i_prev[c]
                    } else {
                        value / h * dv
                    }
                }
            };
            i_prev[c] = i;
            *currents.entry(a.clone()).or_default() += i;
            *currents.entry(b.clone()).or_default() -= i;
        }
        out.push(max_group_residual(&owner, &roots, &currents));
    }
    Ok(out)
}
