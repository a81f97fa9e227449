//! Elaborated circuit: node numbering, MNA stamping and the Newton loop.
//!
//! Nodes driven by a grounded voltage source are not unknowns; their value
//! comes straight from the source. Other voltage sources get a branch-current
//! unknown. Unknown layout: free node voltages, then branch currents.

use nalgebra::{DMatrix, DVector};

use crate::devices::{EnvCondition, ResolvedMosfet};
use crate::error::{Error, Result};
use crate::netlist::{validate, Device, Netlist, Severity, Waveform, GROUND};

use super::SimConfig;

/// Maximum per-iteration node voltage update.
pub(crate) const NEWTON_CLAMP: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Slot {
    Ground,
    Fixed(usize),
    Free(usize),
}

#[derive(Debug, Clone)]
struct CMos {
    d: usize,
    g: usize,
    s: usize,
    dev: ResolvedMosfet,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct CCap {
    pub a: usize,
    pub b: usize,
    pub c: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct CVsrc {
    pub name: String,
    pub plus: usize,
    pub minus: usize,
    pub waveform: Waveform,
    pub branch: Option<usize>,
}

#[derive(Debug, Clone)]
struct CIsrc {
    plus: usize,
    minus: usize,
    waveform: Waveform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Mode {
    Dc,
    Trapezoidal { h: f64 },
    BackwardEuler { h: f64 },
}

/// Capacitor history between accepted time points.
#[derive(Debug, Clone)]
pub(crate) struct CapState {
    pub v_prev: Vec<f64>,
    pub i_prev: Vec<f64>,
}

pub(crate) struct Workspace {
    pub v: Vec<f64>,
    pub node_i: Vec<f64>,
    pub cap_i: Vec<f64>,
    jac: DMatrix<f64>,
    rhs: DVector<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonFailure {
    pub row: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Circuit {
    pub node_names: Vec<String>,
    pub slots: Vec<Slot>,
    pub free_nodes: Vec<usize>,
    pub n_unknowns: usize,
    mosfets: Vec<CMos>,
    pub caps: Vec<CCap>,
    pub vsrcs: Vec<CVsrc>,
    isrcs: Vec<CIsrc>,
}

impl Circuit {
    pub fn compile(netlist: &Netlist, config: &SimConfig) -> Result<Circuit> {
        let errors: Vec<String> = validate(netlist)
            .into_iter()
            .filter(|d| d.severity == Severity::Error)
            .map(|d| match d.subject {
                Some(s) => format!("{} ({s})", d.message),
                None => d.message,
            })
            .collect();
        if !errors.is_empty() {
            return Err(Error::Invalid(errors.join("; ")));
        }
        let env: &EnvCondition = &config.env;

        let mut node_names = vec![GROUND.to_string()];
        node_names.extend(netlist.nodes.iter().filter(|n| *n != GROUND).cloned());
        let index = |name: &str| node_names.iter().position(|n| n == name).expect("validated node");

        let mut slots = vec![Slot::Free(usize::MAX); node_names.len()];
        slots[0] = Slot::Ground;
        let mut vsrcs = Vec::new();
        for d in &netlist.devices {
            if let Device::VSource(v) = d {
                let plus = index(&v.n_plus);
                let minus = index(&v.n_minus);
                let k = vsrcs.len();
                if minus == 0 && slots[plus] != Slot::Ground && !matches!(slots[plus], Slot::Fixed(_)) {
                    slots[plus] = Slot::Fixed(k);
                }
                vsrcs.push(CVsrc {
                    name: v.name.clone(),
                    plus,
                    minus,
                    waveform: v.waveform.clone(),
                    branch: None,
                });
            }
        }
        let mut free_nodes = Vec::new();
        for (i, slot) in slots.iter_mut().enumerate() {
            if let Slot::Free(_) = slot {
                *slot = Slot::Free(free_nodes.len());
                free_nodes.push(i);
            }
        }
        let mut n_unknowns = free_nodes.len();
        for (k, src) in vsrcs.iter_mut().enumerate() {
            if slots[src.plus] != Slot::Fixed(k) {
                src.branch = Some(n_unknowns);
                n_unknowns += 1;
            }
        }

        let mut mosfets = Vec::new();
        let mut caps = Vec::new();
        let mut isrcs = Vec::new();
        for d in &netlist.devices {
            match d {
                Device::Mosfet(m) => {
                    let params = netlist
                        .model_params(&m.model)
                        .ok_or_else(|| Error::UnknownModel(m.model.clone()))?;
                    let g = index(&m.gate);
                    mosfets.push(CMos {
                        d: index(&m.drain),
                        g,
                        s: index(&m.source),
                        dev: ResolvedMosfet::new(&params, env, m.w_over_l),
                    });
                    let cg = params.cg0 * m.w_over_l;
                    if cg > 0.0 && g != 0 {
                        caps.push(CCap { a: g, b: 0, c: cg });
                    }
                }
                Device::Capacitor(c) => caps.push(CCap {
                    a: index(&c.n1),
                    b: index(&c.n2),
                    c: c.value,
                }),
                Device::ISource(i) => isrcs.push(CIsrc {
                    plus: index(&i.n_plus),
                    minus: index(&i.n_minus),
                    waveform: i.waveform.clone(),
                }),
                Device::VSource(_) => {}
            }
        }
        if config.node_cap_floor > 0.0 {
            for &n in &free_nodes {
                caps.push(CCap {
                    a: n,
                    b: 0,
                    c: config.node_cap_floor,
                });
            }
        }

        Ok(Circuit {
            node_names,
            slots,
            free_nodes,
            n_unknowns,
            mosfets,
            caps,
            vsrcs,
            isrcs,
        })
    }

    pub fn workspace(&self) -> Workspace {
        Workspace {
            v: vec![0.0; self.node_names.len()],
            node_i: vec![0.0; self.node_names.len()],
            cap_i: vec![0.0; self.caps.len()],
            jac: DMatrix::zeros(self.n_unknowns, self.n_unknowns),
            rhs: DVector::zeros(self.n_unknowns),
        }
    }

    pub fn sources(&self) -> impl Iterator<Item = &Waveform> {
        self.vsrcs
            .iter()
            .map(|v| &v.waveform)
            .chain(self.isrcs.iter().map(|i| &i.waveform))
    }

    pub fn row_name(&self, row: usize) -> String {
        if row < self.free_nodes.len() {
            self.node_names[self.free_nodes[row]].clone()
        } else {
            self.vsrcs
                .iter()
                .find(|v| v.branch == Some(row))
                .map(|v| format!("branch of {}", v.name))
                .unwrap_or_default()
        }
    }

    /// Supply current of every voltage source, positive out of `n_plus`.
    pub fn supply_currents(&self, ws: &Workspace, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (k, src) in self.vsrcs.iter().enumerate() {
            let i = match src.branch {
                Some(b) => x[b],
                None => {
                    debug_assert_eq!(self.slots[src.plus], Slot::Fixed(k));
                    ws.node_i[src.plus]
                }
            };
            out.push(i);
        }
    }

    /// Fills node voltages, node currents, Jacobian and residual for `x`.
    #[allow(clippy::too_many_arguments)]
    fn load(
        &self,
        x: &[f64],
        t: f64,
        scale: f64,
        gmin: f64,
        mode: Mode,
        caps: Option<&CapState>,
        ws: &mut Workspace,
    ) {
        for (i, slot) in self.slots.iter().enumerate() {
            ws.v[i] = match *slot {
                Slot::Ground => 0.0,
                Slot::Fixed(k) => scale * self.vsrcs[k].waveform.value(t),
                Slot::Free(u) => x[u],
            };
        }
        ws.node_i.iter_mut().for_each(|c| *c = 0.0);
        ws.jac.fill(0.0);

        let slots = &self.slots;
        let jac = &mut ws.jac;
        let mut stamp = |row_node: usize, col_node: usize, val: f64| {
            if let (Slot::Free(r), Slot::Free(c)) = (slots[row_node], slots[col_node]) {
                jac[(r, c)] += val;
            }
        };

        for m in &self.mosfets {
            let v = &ws.v;
            let e = m.dev.eval(v[m.g] - v[m.s], v[m.d] - v[m.s]);
            ws.node_i[m.d] += e.ids;
            ws.node_i[m.s] -= e.ids;
            let gsum = -e.gm - e.gds;
            stamp(m.d, m.d, e.gds);
            stamp(m.d, m.g, e.gm);
            stamp(m.d, m.s, gsum);
            stamp(m.s, m.d, -e.gds);
            stamp(m.s, m.g, -e.gm);
            stamp(m.s, m.s, -gsum);
        }

        for i in 1..ws.v.len() {
            ws.node_i[i] += gmin * ws.v[i];
            stamp(i, i, gmin);
        }

        if let Some(state) = caps {
            for (k, cap) in self.caps.iter().enumerate() {
                let (geq, hist) = match mode {
                    Mode::Dc => (0.0, 0.0),
                    Mode::Trapezoidal { h } => {
                        let g = 2.0 * cap.c / h;
                        (g, g * state.v_prev[k] + state.i_prev[k])
                    }
                    Mode::BackwardEuler { h } => {
                        let g = cap.c / h;
                        (g, g * state.v_prev[k])
                    }
                };
                let i = geq * (ws.v[cap.a] - ws.v[cap.b]) - hist;
                ws.cap_i[k] = i;
                ws.node_i[cap.a] += i;
                ws.node_i[cap.b] -= i;
                stamp(cap.a, cap.a, geq);
                stamp(cap.a, cap.b, -geq);
                stamp(cap.b, cap.a, -geq);
                stamp(cap.b, cap.b, geq);
            }
        }

        for src in &self.isrcs {
            let val = scale * src.waveform.value(t);
            ws.node_i[src.plus] += val;
            ws.node_i[src.minus] -= val;
        }

        for src in &self.vsrcs {
            let Some(b) = src.branch else { continue };
            let j = x[b];
            ws.node_i[src.plus] -= j;
            ws.node_i[src.minus] += j;
            if let Slot::Free(r) = slots[src.plus] {
                jac[(r, b)] -= 1.0;
                jac[(b, r)] += 1.0;
            }
            if let Slot::Free(r) = slots[src.minus] {
                jac[(r, b)] += 1.0;
                jac[(b, r)] -= 1.0;
            }
            ws.rhs[b] = ws.v[src.plus] - ws.v[src.minus] - scale * src.waveform.value(t);
        }
        for (u, &n) in self.free_nodes.iter().enumerate() {
            ws.rhs[u] = ws.node_i[n];
        }
    }

    /// Damped Newton solve. On success `x` holds the accepted point and the
    /// workspace reflects it.
    #[allow(clippy::too_many_arguments)]
    pub fn newton(
        &self,
        x: &mut [f64],
        t: f64,
        scale: f64,
        gmin: f64,
        mode: Mode,
        caps: Option<&CapState>,
        config: &SimConfig,
        ws: &mut Workspace,
    ) -> std::result::Result<usize, NewtonFailure> {
        let n_free = self.free_nodes.len();
        let mut worst = NewtonFailure {
            row: 0,
            residual: f64::INFINITY,
        };
        for iter in 0..config.max_newton_iters {
            self.load(x, t, scale, gmin, mode, caps, ws);
            let (mut res_max, mut res_row) = (0.0f64, 0);
            for (u, r) in ws.rhs.iter().enumerate() {
                // branch rows are voltage constraints, judged against v_tol
                let r = if u < n_free { r.abs() } else { r.abs() * config.i_tol / config.v_tol };
                if !(r <= res_max) {
                    res_max = r;
                    res_row = u;
                }
            }
            worst = NewtonFailure {
                row: res_row,
                residual: res_max,
            };
            if !res_max.is_finite() {
                return Err(worst);
            }
            if self.n_unknowns == 0 {
                return Ok(iter + 1);
            }
            let lu = ws.jac.clone().lu();
            let mut dx = -ws.rhs.clone();
            if !lu.solve_mut(&mut dx) {
                return Err(worst);
            }
            let dv_max = dx.iter().take(n_free).fold(0.0f64, |m, d| m.max(d.abs()));
            if !dv_max.is_finite() {
                return Err(worst);
            }
            if dv_max <= config.v_tol && res_max <= config.i_tol {
                return Ok(iter + 1);
            }
            for (u, d) in dx.iter().enumerate() {
                let d = if u < n_free { d.clamp(-NEWTON_CLAMP, NEWTON_CLAMP) } else { *d };
                x[u] += d;
            }
        }
        Err(worst)
    }

    pub fn cap_state(&self, ws: &Workspace) -> CapState {
        CapState {
            v_prev: self.caps.iter().map(|c| ws.v[c.a] - ws.v[c.b]).collect(),
            i_prev: vec![0.0; self.caps.len()],
        }
    }

    pub fn update_cap_state(&self, ws: &Workspace, state: &mut CapState) {
        for (k, c) in self.caps.iter().enumerate() {
            state.v_prev[k] = ws.v[c.a] - ws.v[c.b];
            state.i_prev[k] = ws.cap_i[k];
        }
    }
}
