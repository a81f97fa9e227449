//! Single-node-upset injection, upset classification and injection campaigns.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cells::{build_cell, Cell, CellKind, ClockMode, Sizing, Testbench, CLOCK_PERIOD, EDGE};
use crate::engine::{transient, SimConfig, Trace};
use crate::error::{Error, Result};
use crate::netlist::{Device, DoubleExp, ISource, Netlist, VSource, Waveform, GROUND, VDD};

pub const DEFAULT_TAU1: f64 = 0.1e-12;
pub const DEFAULT_TAU2: f64 = 3e-12;
/// Half-width of the recovery band as a fraction of vdd.
pub const RECOVERY_BAND: f64 = 0.10;
/// |dV/dt| below which a node counts as settled (1 mV/ps).
pub const SETTLED_SLOPE: f64 = 1e9;
/// Falling clock edge to strike.
pub const HOLD_LEAD: f64 = 50e-12;
/// Strike to first readout.
pub const READOUT_DELAY: f64 = 150e-12;
/// Strike to end-of-hold readout; the next rising edge starts at +197.5 ps.
pub const END_OF_HOLD: f64 = 195e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InjectionPolarity {
    /// Opposes the node's pre-strike logic value.
    Auto,
    /// Pushes charge into the node.
    Positive,
    /// Pulls charge out of the node.
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub node: String,
    pub t_start: f64,
    pub q_inj: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub polarity: InjectionPolarity,
}

impl Injection {
    pub fn new(node: &str, t_start: f64, q_inj: f64) -> Injection {
        Injection {
            node: node.to_ascii_lowercase(),
            t_start,
            q_inj,
            tau1: DEFAULT_TAU1,
            tau2: DEFAULT_TAU2,
            polarity: InjectionPolarity::Auto,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.q_inj >= 0.0 && self.q_inj.is_finite()) {
            return Err(Error::Config("q_inj must be non-negative".into()));
        }
        if !(self.tau1 > 0.0 && self.tau2 > 0.0 && self.tau1 != self.tau2) {
            return Err(Error::Config("tau1 and tau2 must be positive and distinct".into()));
        }
        if !(self.t_start >= 0.0) {
            return Err(Error::Config("t_start must be non-negative".into()));
        }
        Ok(())
    }
}

/// Builds the strike current source. Automatic polarity is resolved against
/// the node voltage at `t_start` in the fault-free `reference` trace.
pub fn make_injection(injection: &Injection, reference: &Trace, vdd: f64) -> Result<Device> {
    injection.check()?;
    let sign = match injection.polarity {
        InjectionPolarity::Positive => 1.0,
        InjectionPolarity::Negative => -1.0,
        InjectionPolarity::Auto => {
            if reference.value_at(&injection.node, injection.t_start)? > vdd / 2.0 {
                -1.0
            } else {
                1.0
            }
        }
    };
    Ok(strike_source(injection, sign))
}

fn strike_source(injection: &Injection, sign: f64) -> Device {
    // current flows out of n_plus into n_minus, so positive sign charges the node
    Device::ISource(ISource {
        name: "isnu".into(),
        n_plus: GROUND.into(),
        n_minus: injection.node.clone(),
        waveform: Waveform::DoubleExp(DoubleExp {
            q_inj: injection.q_inj,
            tau1: injection.tau1,
            tau2: injection.tau2,
            t_start: injection.t_start,
            sign,
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Recovered,
    Upset,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionOutcome {
    pub injection: Injection,
    /// Sign of the applied pulse, +1 charges the node.
    pub sign: f64,
    pub classification: Classification,
    /// Peak |v - v(t_start)| of the struck node.
    pub v_excursion: f64,
    /// Time from the strike until the struck node last re-entered its band.
    pub t_recover: Option<f64>,
}

/// Expected logic value of every state node plus what "within band" means.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedState {
    pub levels: BTreeMap<String, bool>,
    pub vdd: f64,
    /// Node whose complement defines an upset.
    pub output: String,
    /// Expected high level for nodes restored only through an NMOS pass device.
    pub weak_high: BTreeMap<String, f64>,
}

impl ExpectedState {
    fn target(&self, node: &str, high: bool) -> f64 {
        if high {
            self.weak_high.get(node).copied().unwrap_or(self.vdd)
        } else {
            0.0
        }
    }

    fn in_band(&self, node: &str, high: bool, v: f64) -> bool {
        let band = RECOVERY_BAND * self.vdd;
        if high {
            // anything above the target is as good as the target
            v >= self.target(node, true) - band
        } else {
            v <= band
        }
    }
}

fn slope(trace: &Trace, node: &str, t: f64) -> Result<f64> {
    let h = 1e-12;
    let lo = (t - h).max(trace.times[0]);
    let hi = (t + h).min(trace.t_end());
    Ok((trace.value_at(node, hi)? - trace.value_at(node, lo)?) / (hi - lo))
}

fn classify_at(trace: &Trace, expected: &ExpectedState, t: f64) -> Result<Classification> {
    let mut recovered = true;
    for (node, &high) in &expected.levels {
        if !expected.in_band(node, high, trace.value_at(node, t)?) {
            recovered = false;
        }
    }
    if recovered {
        return Ok(Classification::Recovered);
    }
    let mut settled = true;
    for node in expected.levels.keys() {
        if slope(trace, node, t)?.abs() >= SETTLED_SLOPE {
            settled = false;
        }
    }
    let out_high = expected
        .levels
        .get(&expected.output)
        .copied()
        .ok_or_else(|| Error::UnknownNode(expected.output.clone()))?;
    let flipped = expected.in_band(&expected.output, !out_high, trace.value_at(&expected.output, t)?);
    Ok(if settled && flipped {
        Classification::Upset
    } else {
        Classification::Unresolved
    })
}

/// Classifies a post-strike trace at `readout_t`.
pub fn classify(
    trace: &Trace,
    injection: &Injection,
    sign: f64,
    expected: &ExpectedState,
    readout_t: f64,
) -> Result<InjectionOutcome> {
    if readout_t <= injection.t_start || readout_t > trace.t_end() || trace.is_empty() {
        return Err(Error::TraceWindow {
            from: injection.t_start,
            to: readout_t,
        });
    }
    let classification = classify_at(trace, expected, readout_t)?;
    let (v_excursion, t_recover) = struck_node_stats(trace, injection, expected, readout_t)?;
    Ok(InjectionOutcome {
        injection: injection.clone(),
        sign,
        classification,
        v_excursion,
        t_recover: if classification == Classification::Recovered {
            Some(t_recover)
        } else {
            None
        },
    })
}

fn struck_node_stats(
    trace: &Trace,
    injection: &Injection,
    expected: &ExpectedState,
    until: f64,
) -> Result<(f64, f64)> {
    let v = trace.voltage(&injection.node)?;
    let v0 = trace.value_at(&injection.node, injection.t_start)?;
    let high = expected.levels.get(&injection.node).copied();
    let mut excursion: f64 = 0.0;
    let mut last_out = injection.t_start;
    for (k, &t) in trace.times.iter().enumerate() {
        if t < injection.t_start || t > until {
            continue;
        }
        excursion = excursion.max((v[k] - v0).abs());
        if let Some(h) = high {
            if !expected.in_band(&injection.node, h, v[k]) {
                last_out = trace.times.get(k + 1).copied().unwrap_or(t).min(until);
            }
        }
    }
    Ok((excursion, last_out - injection.t_start))
}

/// Clock phase of a campaign run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Hold,
    Transparent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub node: String,
    pub t_start: f64,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Schedule {
    /// The reference LOCO strike sequence, `LOCO_SCHEDULE`.
    Default,
    Custom(Vec<ScheduleEntry>),
}

/// Reference injection times for LOCO, in schedule order.
pub const LOCO_SCHEDULE: [(&str, f64); 16] = [
    ("n0", 0.50e-9),
    ("n0", 0.60e-9),
    ("n0", 1.00e-9),
    ("n0", 1.10e-9),
    ("n1", 1.50e-9),
    ("n1", 1.60e-9),
    ("n4", 2.00e-9),
    ("n4", 2.10e-9),
    ("n3", 2.50e-9),
    ("n3", 2.60e-9),
    ("n5", 3.00e-9),
    ("n5", 3.10e-9),
    ("q", 3.53e-9),
    ("q", 3.65e-9),
    ("n2", 4.50e-9),
    ("n2", 4.60e-9),
];

impl Schedule {
    /// One hold-mode strike on every state node at `t_start`.
    pub fn exhaustive(cell: &Cell, t_start: f64) -> Schedule {
        Schedule::Custom(
            cell.state_nodes
                .iter()
                .map(|n| ScheduleEntry {
                    node: n.clone(),
                    t_start,
                    phase: Phase::Hold,
                })
                .collect(),
        )
    }

    /// Entries for `cell`. The default schedule keeps the reference times;
    /// latches other than LOCO get those time slots cycled over their own
    /// state nodes.
    pub fn entries(&self, cell: &Cell) -> Vec<ScheduleEntry> {
        match self {
            Schedule::Custom(e) => e.clone(),
            Schedule::Default => LOCO_SCHEDULE
                .iter()
                .enumerate()
                .map(|(k, &(node, t))| ScheduleEntry {
                    node: if cell.kind == CellKind::Loco {
                        node.to_string()
                    } else {
                        cell.state_nodes[(k / 2) % cell.state_nodes.len()].clone()
                    },
                    t_start: t,
                    phase: Phase::Hold,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub latch: CellKind,
    /// Restricts the schedule to these nodes; empty keeps all.
    pub nodes: Vec<String>,
    pub stored_values: Vec<bool>,
    pub q_inj: f64,
    pub schedule: Schedule,
}

impl CampaignSpec {
    pub fn new(latch: CellKind, q_inj: f64) -> CampaignSpec {
        CampaignSpec {
            latch,
            nodes: Vec::new(),
            stored_values: vec![false, true],
            q_inj,
            schedule: Schedule::Default,
        }
    }
}

/// Everything needed to simulate one strike in isolation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub entry: ScheduleEntry,
    pub stored: bool,
    pub clock: ClockMode,
    pub t_stop: f64,
    pub readouts: [f64; 2],
    netlist: Netlist,
    expected_template: ExpectedState,
}

/// First falling edge placing a falling edge `HOLD_LEAD` before `t_start`,
/// keeping at least half a period of transparent settling from t = 0.
pub fn aligned_first_fall(t_start: f64) -> Result<f64> {
    let fall = t_start - HOLD_LEAD;
    let min_fall = CLOCK_PERIOD / 2.0;
    if fall >= min_fall {
        let k = ((fall - min_fall) / CLOCK_PERIOD).floor();
        Ok(fall - k * CLOCK_PERIOD)
    } else if fall > 2.0 * EDGE {
        Ok(fall)
    } else {
        Err(Error::Config(format!(
            "hold-mode strike at {t_start:.3e} s leaves no room for a falling clock edge"
        )))
    }
}

impl RunPlan {
    pub fn new(cell: &Cell, entry: &ScheduleEntry, stored: bool, config: &SimConfig) -> Result<RunPlan> {
        if !cell.state_nodes.contains(&entry.node) && !cell.netlist.has_node(&entry.node) {
            return Err(Error::UnknownNode(entry.node.clone()));
        }
        let vdd = config.env.vdd;
        let clock = match entry.phase {
            Phase::Hold => ClockMode::Pulsed {
                first_fall: aligned_first_fall(entry.t_start)?,
            },
            Phase::Transparent => ClockMode::Held(true),
        };
        let tb = Testbench {
            vdd,
            clock,
            d: Waveform::Dc {
                v: if stored { vdd } else { 0.0 },
            },
        };
        let netlist = tb.build(cell)?;
        let output = if cell.netlist.has_node("q") { "q" } else { &cell.state_nodes[0] };
        let vth_n = netlist
            .model_params("nmos")
            .map(|p| crate::devices::effective_vth(&p, &config.env))
            .unwrap_or(0.0);
        let weak_high = cell
            .nmos_restored_high()
            .iter()
            .map(|n| (n.to_string(), vdd - vth_n))
            .collect();
        Ok(RunPlan {
            entry: entry.clone(),
            stored,
            clock,
            t_stop: entry.t_start + END_OF_HOLD + 5e-12,
            readouts: [entry.t_start + READOUT_DELAY, entry.t_start + END_OF_HOLD],
            netlist,
            expected_template: ExpectedState {
                levels: cell.state_nodes.iter().map(|n| (n.clone(), false)).collect(),
                vdd,
                output: output.to_string(),
                weak_high,
            },
        })
    }

    pub fn netlist(&self) -> &Netlist {
        &self.netlist
    }

    fn config(&self, config: &SimConfig) -> SimConfig {
        SimConfig {
            t_stop: self.t_stop,
            fine_windows: Vec::new(),
            ..config.clone()
        }
    }

    /// Fault-free run of the same testbench.
    pub fn reference(&self, config: &SimConfig) -> Result<Trace> {
        transient(&self.netlist, &self.config(config), &[])
    }

    /// State expected after the strike, read from the reference run.
    pub fn expected(&self, reference: &Trace) -> Result<ExpectedState> {
        let mut e = self.expected_template.clone();
        let t = self.readouts[1];
        for (node, level) in e.levels.iter_mut() {
            *level = reference.value_at(node, t)? > e.vdd / 2.0;
        }
        Ok(e)
    }

    /// Netlist with the strike source added.
    pub fn netlist_with(&self, strike: Device) -> Result<Netlist> {
        let mut n = self.netlist.clone();
        n.add(strike)?;
        Ok(n)
    }

    /// Simulates `q_inj` on the entry's node and classifies the result.
    pub fn run(&self, q_inj: f64, config: &SimConfig) -> Result<InjectionOutcome> {
        let wrap = |e: Error| Error::Injection {
            node: self.entry.node.clone(),
            t_start: self.entry.t_start,
            source: Box::new(e),
        };
        let reference = self.reference(config).map_err(wrap)?;
        self.run_against(&reference, q_inj, config).map_err(wrap)
    }

    pub fn run_against(&self, reference: &Trace, q_inj: f64, config: &SimConfig) -> Result<InjectionOutcome> {
        let injection = Injection::new(&self.entry.node, self.entry.t_start, q_inj);
        let strike = make_injection(&injection, reference, config.env.vdd)?;
        let sign = match &strike {
            Device::ISource(ISource {
                waveform: Waveform::DoubleExp(d),
                ..
            }) => d.sign,
            _ => unreachable!("strike is a double-exponential current source"),
        };
        let expected = self.expected(reference)?;
        let trace = transient(&self.netlist_with(strike)?, &self.config(config), &[])?;
        let first = classify(&trace, &injection, sign, &expected, self.readouts[0])?;
        let last = classify(&trace, &injection, sign, &expected, self.readouts[1])?;
        let classification = match (first.classification, last.classification) {
            (Classification::Recovered, Classification::Recovered) => Classification::Recovered,
            (_, Classification::Upset) => Classification::Upset,
            _ => Classification::Unresolved,
        };
        Ok(InjectionOutcome {
            classification,
            t_recover: if classification == Classification::Recovered {
                last.t_recover
            } else {
                None
            },
            ..last
        })
    }
}

/// One row of a campaign result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignOutcome {
    pub stored: bool,
    pub phase: Phase,
    /// 50 % time of the run's first falling clock edge; absent for a held clock.
    pub clock_first_fall: Option<f64>,
    pub outcome: InjectionOutcome,
}

pub fn campaign_plans(spec: &CampaignSpec, config: &SimConfig) -> Result<Vec<RunPlan>> {
    let cell = build_cell(spec.latch, &Sizing::default())?;
    let entries: Vec<ScheduleEntry> = spec
        .schedule
        .entries(&cell)
        .into_iter()
        .filter(|e| spec.nodes.is_empty() || spec.nodes.iter().any(|n| n.eq_ignore_ascii_case(&e.node)))
        .collect();
    for n in &spec.nodes {
        if !cell.state_nodes.iter().any(|s| s.eq_ignore_ascii_case(n)) {
            return Err(Error::UnknownNode(n.clone()));
        }
    }
    let mut plans = Vec::new();
    for &stored in &spec.stored_values {
        for e in &entries {
            plans.push(RunPlan::new(&cell, e, stored, config)?);
        }
    }
    Ok(plans)
}

/// Runs every (stored value, schedule entry) strike in its own simulation.
/// Results are in plan order regardless of worker count.
pub fn run_campaign(spec: &CampaignSpec, config: &SimConfig) -> Result<Vec<CampaignOutcome>> {
    config.check()?;
    let plans = campaign_plans(spec, config)?;
    plans
        .par_iter()
        .map(|p| {
            Ok(CampaignOutcome {
                stored: p.stored,
                phase: p.entry.phase,
                clock_first_fall: match p.clock {
                    ClockMode::Pulsed { first_fall } => Some(first_fall),
                    ClockMode::Held(_) => None,
                },
                outcome: p.run(spec.q_inj, config)?,
            })
        })
        .collect()
}

/// Strike on one output of a stand-alone OSC with both inputs tied to
/// `inputs`: O2 when the inputs are low (O2 = 1), O1 when high (O1 = 0).
pub fn osc_output_restoration(inputs: bool, q_inj: f64, config: &SimConfig) -> Result<InjectionOutcome> {
    let vdd = config.env.vdd;
    let cell = build_cell(CellKind::Osc, &Sizing::default())?;
    let mut net = Netlist::new("osc_restore");
    let level = if inputs { vdd } else { 0.0 };
    for (name, node, v) in [("vdd", VDD, vdd), ("vi1", "i1", level), ("vi2", "i2", level)] {
        net.add(Device::VSource(VSource {
            name: name.into(),
            n_plus: node.into(),
            n_minus: GROUND.into(),
            waveform: Waveform::Dc { v },
        }))?;
    }
    net.extend_from(&cell.netlist)?;
    let node = if inputs { "o1" } else { "o2" };
    let t_start = 100e-12;
    let injection = Injection::new(node, t_start, q_inj);
    let cfg = SimConfig {
        t_stop: t_start + READOUT_DELAY + 50e-12,
        ..config.clone()
    };
    let reference = transient(&net, &cfg, &[])?;
    let strike = make_injection(&injection, &reference, vdd)?;
    let sign = if inputs { 1.0 } else { -1.0 };
    net.add(strike)?;
    let trace = transient(&net, &cfg, &[])?;
    let expected = ExpectedState {
        levels: [("o1".to_string(), !inputs), ("o2".to_string(), !inputs)].into(),
        vdd,
        output: node.to_string(),
        weak_high: BTreeMap::new(),
    };
    classify(&trace, &injection, sign, &expected, t_start + READOUT_DELAY)
}

/// Campaign report with physical units spelled out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub latch: String,
    #[serde(rename = "q_inj_fC")]
    pub q_inj_fc: f64,
    pub recovered: usize,
    pub total: usize,
    pub outcomes: Vec<OutcomeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub node: String,
    pub t_start_ns: f64,
    pub stored: u8,
    pub phase: Phase,
    pub clock_first_fall_ns: Option<f64>,
    pub polarity: i8,
    pub classification: Classification,
    #[serde(rename = "v_excursion_mV")]
    pub v_excursion_mv: f64,
    pub t_recover_ps: Option<f64>,
}

impl CampaignReport {
    pub fn new(latch: CellKind, q_inj: f64, outcomes: &[CampaignOutcome]) -> CampaignReport {
        CampaignReport {
            latch: latch.to_string(),
            q_inj_fc: q_inj * 1e15,
            recovered: outcomes
                .iter()
                .filter(|o| o.outcome.classification == Classification::Recovered)
                .count(),
            total: outcomes.len(),
            outcomes: outcomes
                .iter()
                .map(|o| OutcomeRecord {
                    node: o.outcome.injection.node.clone(),
                    t_start_ns: o.outcome.injection.t_start * 1e9,
                    stored: o.stored as u8,
                    phase: o.phase,
                    clock_first_fall_ns: o.clock_first_fall.map(|t| t * 1e9),
                    polarity: o.outcome.sign as i8,
                    classification: o.outcome.classification,
                    v_excursion_mv: o.outcome.v_excursion * 1e3,
                    t_recover_ps: o.outcome.t_recover.map(|t| t * 1e12),
                })
                .collect(),
        }
    }
}
