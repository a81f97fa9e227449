//! Latch figures of merit: power, delays, setup/hold, PDP, relative
//! overhead, average current, critical charge and deviation statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cells::{build_cell, logic_pwl, pattern_transitions, CellKind, ClockMode, Sizing, Testbench, CLOCK_PERIOD};
use crate::engine::{transient, SimConfig, Trace};
use crate::error::{Error, Result};
use crate::fault::{Classification, Phase, RunPlan, ScheduleEntry};
use crate::netlist::Netlist;

/// A searched quantity, or the search limit when no transition was found.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bounded {
    Value(f64),
    ExceedsBound(f64),
}

impl Bounded {
    pub fn value(self) -> Option<f64> {
        match self {
            Bounded::Value(v) => Some(v),
            Bounded::ExceedsBound(_) => None,
        }
    }

    /// Orders an exceeded bound above every finite value.
    pub fn greater_than(self, other: Bounded) -> bool {
        match (self, other) {
            (Bounded::ExceedsBound(_), Bounded::Value(_)) => true,
            (Bounded::Value(a), Bounded::Value(b)) => a > b,
            (Bounded::Value(_), Bounded::ExceedsBound(_)) => false,
            (Bounded::ExceedsBound(a), Bounded::ExceedsBound(b)) => a > b,
        }
    }
}

/// Power-delay product.
pub fn pdp(power: f64, t_avg: f64) -> f64 {
    power * t_avg
}

/// `(proposed - compared) / compared`.
pub fn relative_delta(proposed: f64, compared: f64) -> Result<f64> {
    if compared == 0.0 {
        return Err(Error::DivisionByZero);
    }
    Ok((proposed - compared) / compared)
}

fn mean(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

/// Population standard deviation.
pub fn stddev(samples: &[f64]) -> Result<f64> {
    let m = mean(samples)?;
    let ss: f64 = samples.iter().map(|x| (x - m) * (x - m)).sum();
    Ok((ss / samples.len() as f64).sqrt())
}

/// Mean absolute deviation from the mean.
pub fn avg_dev(samples: &[f64]) -> Result<f64> {
    let m = mean(samples)?;
    Ok(samples.iter().map(|x| (x - m).abs()).sum::<f64>() / samples.len() as f64)
}

/// Time average of |I| of `source` over `[t0, t1]`.
pub fn avg_current(trace: &Trace, t0: f64, t1: f64, source: &str) -> Result<f64> {
    if !(t1 > t0) {
        return Err(Error::TraceWindow { from: t0, to: t1 });
    }
    let i = trace.supply_current(source)?;
    Ok(trace.integrate_with(i, t0, t1, f64::abs)? / (t1 - t0))
}

/// Average power drawn from `source` over `[t0, t1]`.
pub fn power_from_trace(trace: &Trace, source: &str, vdd: f64, t0: f64, t1: f64) -> Result<f64> {
    let q = trace.integrate(trace.supply_current(source)?, t0, t1)?;
    Ok(vdd * q / (t1 - t0))
}

/// Time between the 50 % crossings of `from_signal` (at or after
/// `from_edge_t` minus half an edge) and the next crossing of `to_signal`.
pub fn measure_delay(trace: &Trace, from_signal: &str, from_edge_t: f64, to_signal: &str, vdd: f64) -> Result<f64> {
    let half = vdd / 2.0;
    let t_from = trace.crossing(from_signal, half, from_edge_t - crate::cells::EDGE)?;
    let t_to = trace.crossing(to_signal, half, t_from)?;
    Ok(t_to - t_from)
}

pub const POWER_CYCLES: usize = 10;
pub const POWER_SKIP_CYCLES: usize = 2;

/// Canonical power stimulus: ten cycles, D toggling every second cycle.
pub fn power_testbench(kind: CellKind, vdd: f64) -> Result<Netlist> {
    crate::cells::canonical_testbench(kind, &[false, false, true, true], POWER_CYCLES, vdd)
}

/// Average supply power of `netlist` over cycles 3..=10.
pub fn measure_power_of(netlist: &Netlist, config: &SimConfig) -> Result<f64> {
    let t0 = POWER_SKIP_CYCLES as f64 * CLOCK_PERIOD;
    let t1 = POWER_CYCLES as f64 * CLOCK_PERIOD;
    let cfg = SimConfig {
        t_stop: t1,
        ..config.clone()
    };
    let trace = transient(netlist, &cfg, &["q"])?;
    power_from_trace(&trace, "vdd", config.env.vdd, t0, t1)
}

pub fn measure_power(kind: CellKind, config: &SimConfig) -> Result<f64> {
    measure_power_of(&power_testbench(kind, config.env.vdd)?, config)
}

/// Edge schedule of the delay testbench (50 % times).
pub const DQ_RISE: f64 = 600e-12;
pub const DQ_FALL: f64 = 1100e-12;
pub const HOLD_D_RISE: f64 = 1350e-12;
pub const HOLD_D_FALL: f64 = 1850e-12;
pub const CQ_RISE_CLK: f64 = 1500e-12;
pub const CQ_FALL_CLK: f64 = 2000e-12;
pub const DELAY_T_STOP: f64 = 2250e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delays {
    pub t_dq_rise: f64,
    pub t_dq_fall: f64,
    pub t_cq_rise: f64,
    pub t_cq_fall: f64,
}

impl Delays {
    pub fn t_dq(&self) -> f64 {
        0.5 * (self.t_dq_rise + self.t_dq_fall)
    }

    pub fn t_cq(&self) -> f64 {
        0.5 * (self.t_cq_rise + self.t_cq_fall)
    }

    pub fn t_avg(&self) -> f64 {
        0.5 * (self.t_dq() + self.t_cq())
    }
}

/// D toggles twice while transparent (D-to-Q) and twice while holding, so
/// the following rising clock edges produce clock-to-Q transitions.
pub fn delay_testbench(kind: CellKind, vdd: f64) -> Result<Netlist> {
    let d = logic_pwl(
        vdd,
        false,
        &[(DQ_RISE, true), (DQ_FALL, false), (HOLD_D_RISE, true), (HOLD_D_FALL, false)],
    );
    Testbench {
        vdd,
        clock: ClockMode::canonical(),
        d,
    }
    .build(&build_cell(kind, &Sizing::default())?)
}

pub fn measure_delays_of(netlist: &Netlist, config: &SimConfig) -> Result<Delays> {
    let cfg = SimConfig {
        t_stop: DELAY_T_STOP,
        ..config.clone()
    };
    let trace = transient(netlist, &cfg, &["d", "clk", "q"])?;
    let vdd = config.env.vdd;
    Ok(Delays {
        t_dq_rise: measure_delay(&trace, "d", DQ_RISE, "q", vdd)?,
        t_dq_fall: measure_delay(&trace, "d", DQ_FALL, "q", vdd)?,
        t_cq_rise: measure_delay(&trace, "clk", CQ_RISE_CLK, "q", vdd)?,
        t_cq_fall: measure_delay(&trace, "clk", CQ_FALL_CLK, "q", vdd)?,
    })
}

pub fn measure_delays(kind: CellKind, config: &SimConfig) -> Result<Delays> {
    measure_delays_of(&delay_testbench(kind, config.env.vdd)?, config)
}

/// Falling edge that latches during setup/hold searches.
pub const LATCH_EDGE: f64 = 750e-12;
/// Readout time at the end of the following hold phase.
pub const LATCH_READOUT: f64 = 990e-12;
pub const TIMING_RESOLUTION: f64 = 0.05e-12;
pub const SETUP_BRACKET: (f64, f64) = (-50e-12, 250e-12);
pub const HOLD_BRACKET: (f64, f64) = (-50e-12, 50e-12);
/// Time at which the hold search drives D to the value to be latched.
pub const HOLD_D_APPLY: f64 = 600e-12;

/// Result of a timing bisection with both bracket ends simulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingSearch {
    pub value: Bounded,
    /// Largest probed offset that failed, if any.
    pub failing: Option<f64>,
    /// Smallest probed offset that passed.
    pub passing: f64,
}

fn latches_value(kind: CellKind, config: &SimConfig, intended: bool, transitions: &[(f64, bool)]) -> Result<bool> {
    let vdd = config.env.vdd;
    let tb = Testbench {
        vdd,
        clock: ClockMode::canonical(),
        d: logic_pwl(vdd, !intended, transitions),
    };
    let net = tb.build(&build_cell(kind, &Sizing::default())?)?;
    let cfg = SimConfig {
        t_stop: LATCH_READOUT + 10e-12,
        ..config.clone()
    };
    let trace = transient(&net, &cfg, &["q"])?;
    Ok((trace.value_at("q", LATCH_READOUT)? > vdd / 2.0) == intended)
}

/// Smallest offset in `bracket` that still passes, assuming failures lie
/// below passes.
fn bisect_timing(bracket: (f64, f64), passes: impl Fn(f64) -> Result<bool>) -> Result<TimingSearch> {
    let (mut lo, mut hi) = bracket;
    if !passes(hi)? {
        return Err(Error::Invalid(format!(
            "latch fails even at the passing end of the search bracket ({hi:.3e} s)"
        )));
    }
    if passes(lo)? {
        return Ok(TimingSearch {
            value: Bounded::ExceedsBound(lo),
            failing: None,
            passing: lo,
        });
    }
    while hi - lo > TIMING_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        if passes(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // endpoints were each decided by their own simulation; re-run to certify
    if passes(lo)? || !passes(hi)? {
        return Err(Error::Invalid("timing bisection endpoints are not reproducible".into()));
    }
    Ok(TimingSearch {
        value: Bounded::Value(hi),
        failing: Some(lo),
        passing: hi,
    })
}

/// Setup time for one D transition direction: D reaches `intended`
/// `offset` before the latching edge.
pub fn find_setup_time_for(kind: CellKind, config: &SimConfig, intended: bool) -> Result<TimingSearch> {
    bisect_timing(SETUP_BRACKET, |s| {
        latches_value(kind, config, intended, &[(LATCH_EDGE - s, intended)])
    })
}

/// Hold time for one direction: D is `intended` well before the edge and
/// reverts `offset` after it.
pub fn find_hold_time_for(kind: CellKind, config: &SimConfig, intended: bool) -> Result<TimingSearch> {
    bisect_timing(HOLD_BRACKET, |h| {
        latches_value(
            kind,
            config,
            intended,
            &[(HOLD_D_APPLY, intended), (LATCH_EDGE + h, !intended)],
        )
    })
}

fn worst_of(a: TimingSearch, b: TimingSearch) -> Bounded {
    let v = |s: TimingSearch| match s.value {
        Bounded::Value(x) | Bounded::ExceedsBound(x) => x,
    };
    if v(a) >= v(b) {
        a.value
    } else {
        b.value
    }
}

/// Worst case over rising and falling D.
pub fn find_setup_time(kind: CellKind, config: &SimConfig) -> Result<Bounded> {
    let r = [true, false]
        .par_iter()
        .map(|&v| find_setup_time_for(kind, config, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(worst_of(r[0], r[1]))
}

pub fn find_hold_time(kind: CellKind, config: &SimConfig) -> Result<Bounded> {
    let r = [true, false]
        .par_iter()
        .map(|&v| find_hold_time_for(kind, config, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(worst_of(r[0], r[1]))
}

pub const DEFAULT_Q_MAX: f64 = 100e-15;
pub const QCRIT_RESOLUTION: f64 = 0.05e-15;
/// Strike time of Qcrit probes; hold phase starts at 750 ps.
pub const QCRIT_STRIKE: f64 = 800e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcritSearch {
    pub node: String,
    pub stored: bool,
    pub q_crit: Bounded,
    /// Largest charge simulated as Recovered, with its verdict.
    pub lower: (f64, Classification),
    /// Smallest charge simulated as not Recovered, with its verdict.
    pub upper: Option<(f64, Classification)>,
}

/// Bisection for the smallest charge that does not recover; Unresolved
/// counts as an upset.
pub fn find_qcrit(kind: CellKind, node: &str, stored: bool, config: &SimConfig, q_max: f64) -> Result<QcritSearch> {
    if !(q_max >= 0.0) {
        return Err(Error::Config("q_max must be non-negative".into()));
    }
    let cell = build_cell(kind, &Sizing::default())?;
    let entry = ScheduleEntry {
        node: node.to_ascii_lowercase(),
        t_start: QCRIT_STRIKE,
        phase: Phase::Hold,
    };
    let plan = RunPlan::new(&cell, &entry, stored, config)?;
    let reference = plan.reference(config)?;
    let probe = |q: f64| -> Result<Classification> {
        Ok(plan.run_against(&reference, q, config)?.classification)
    };
    let lower_zero = |c| QcritSearch {
        node: entry.node.clone(),
        stored,
        q_crit: Bounded::ExceedsBound(q_max),
        lower: (q_max, c),
        upper: None,
    };
    if q_max == 0.0 {
        return Ok(lower_zero(probe(0.0)?));
    }
    let top = probe(q_max)?;
    if top == Classification::Recovered {
        return Ok(lower_zero(top));
    }
    let (mut lo, mut hi) = (0.0, q_max);
    let mut hi_class = top;
    while hi - lo > QCRIT_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        match probe(mid)? {
            Classification::Recovered => lo = mid,
            c => {
                hi = mid;
                hi_class = c;
            }
        }
    }
    let lo_class = probe(lo)?;
    let hi_again = probe(hi)?;
    if lo_class != Classification::Recovered || hi_again != hi_class {
        return Err(Error::Invalid(format!(
            "Qcrit endpoints on `{node}` did not certify ({lo_class:?} at {lo:.3e} C, {hi_again:?} at {hi:.3e} C)"
        )));
    }
    Ok(QcritSearch {
        node: entry.node,
        stored,
        q_crit: Bounded::Value(hi),
        lower: (lo, lo_class),
        upper: Some((hi, hi_class)),
    })
}

/// Minimum over every state node and both stored values.
pub fn latch_qcrit(kind: CellKind, config: &SimConfig, q_max: f64) -> Result<(Bounded, Vec<QcritSearch>)> {
    let cell = build_cell(kind, &Sizing::default())?;
    let jobs: Vec<(String, bool)> = [false, true]
        .iter()
        .flat_map(|&s| cell.state_nodes.iter().map(move |n| (n.clone(), s)))
        .collect();
    let searches = jobs
        .par_iter()
        .map(|(n, s)| find_qcrit(kind, n, *s, config, q_max))
        .collect::<Result<Vec<_>>>()?;
    let mut best = Bounded::ExceedsBound(q_max);
    for s in &searches {
        if best.greater_than(s.q_crit) {
            best = s.q_crit;
        }
    }
    Ok((best, searches))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatchMetrics {
    pub power: f64,
    pub t_dq: f64,
    pub t_cq: f64,
    pub t_avg: f64,
    pub t_setup: Bounded,
    pub t_hold: Bounded,
    pub pdp: f64,
    pub q_crit: Bounded,
    pub transistor_count: usize,
}

pub fn measure_latch(kind: CellKind, config: &SimConfig, q_max: f64) -> Result<LatchMetrics> {
    Ok(measure_latch_detailed(kind, config, q_max)?.0)
}

/// Metrics plus the per-node Qcrit searches behind `q_crit`.
pub fn measure_latch_detailed(kind: CellKind, config: &SimConfig, q_max: f64) -> Result<(LatchMetrics, Vec<QcritSearch>)> {
    if !kind.is_latch() {
        return Err(Error::Config(format!("`{kind}` is not a latch")));
    }
    let power = measure_power(kind, config)?;
    let delays = measure_delays(kind, config)?;
    let t_setup = find_setup_time(kind, config)?;
    let t_hold = find_hold_time(kind, config)?;
    let (q_crit, searches) = latch_qcrit(kind, config, q_max)?;
    let t_avg = delays.t_avg();
    let m = LatchMetrics {
        power,
        t_dq: delays.t_dq(),
        t_cq: delays.t_cq(),
        t_avg,
        t_setup,
        t_hold,
        pdp: pdp(power, t_avg),
        q_crit,
        transistor_count: kind.transistor_count(),
    };
    Ok((m, searches))
}

/// A bounded value in report units: a number, or `"> bound"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReportValue {
    Value(f64),
    Bound(String),
}

impl ReportValue {
    pub fn scaled(b: Bounded, scale: f64) -> ReportValue {
        match b {
            Bounded::Value(v) => ReportValue::Value(v * scale),
            Bounded::ExceedsBound(v) => ReportValue::Bound(format!("> {}", v * scale)),
        }
    }
}

/// Table-style metrics record with units in the field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub latch: String,
    #[serde(rename = "power_uW")]
    pub power_uw: f64,
    pub t_setup_ps: ReportValue,
    pub t_hold_ps: ReportValue,
    pub t_dq_ps: f64,
    pub t_cq_ps: f64,
    pub t_avg_ps: f64,
    #[serde(rename = "pdp_e18J")]
    pub pdp_e18j: f64,
    #[serde(rename = "q_crit_fC")]
    pub q_crit_fc: ReportValue,
    pub n_trans: usize,
}

impl MetricsReport {
    pub fn new(kind: CellKind, m: &LatchMetrics) -> MetricsReport {
        MetricsReport {
            latch: kind.to_string(),
            power_uw: m.power * 1e6,
            t_setup_ps: ReportValue::scaled(m.t_setup, 1e12),
            t_hold_ps: ReportValue::scaled(m.t_hold, 1e12),
            t_dq_ps: m.t_dq * 1e12,
            t_cq_ps: m.t_cq * 1e12,
            t_avg_ps: m.t_avg * 1e12,
            pdp_e18j: m.pdp * 1e18,
            q_crit_fc: ReportValue::scaled(m.q_crit, 1e15),
            n_trans: m.transistor_count,
        }
    }
}

/// D pattern used by the functional check: bit `k` is latched at the `k`-th
/// falling edge and must appear on Q during the following hold phase.
pub fn functional_check(kind: CellKind, pattern: &[bool], config: &SimConfig) -> Result<Vec<(f64, bool, f64)>> {
    let vdd = config.env.vdd;
    let clock = ClockMode::canonical();
    let (initial, transitions) = pattern_transitions(pattern, pattern.len(), &clock);
    let net = Testbench {
        vdd,
        clock,
        d: logic_pwl(vdd, initial, &transitions),
    }
    .build(&build_cell(kind, &Sizing::default())?)?;
    let t_stop = pattern.len() as f64 * CLOCK_PERIOD;
    let trace = transient(
        &net,
        &SimConfig {
            t_stop,
            ..config.clone()
        },
        &["q"],
    )?;
    // sample late in each hold phase
    clock
        .falling_edges(t_stop)
        .iter()
        .zip(pattern)
        .map(|(&fall, &bit)| {
            let t = fall + CLOCK_PERIOD / 2.0 - 10e-12;
            Ok((t, bit, trace.value_at("q", t)?))
        })
        .collect()
}
