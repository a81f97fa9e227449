//! Variation studies and the short-circuit current protocol.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cells::{build_cell, CellKind, ClockMode, Sizing, Testbench, EDGE};
use crate::devices::{EnvCondition, MosfetParams};
use crate::engine::{transient, SimConfig, Trace};
use crate::error::{Error, Result};
use crate::metrics::{avg_current, avg_dev, measure_delays, measure_power, stddev};
use crate::netlist::{Netlist, Waveform};

/// One PVT sweep axis; each point moves a single condition off nominal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum PvtAxis {
    /// Threshold magnitude shift (V), applied to both polarities.
    Vth { from: f64, to: f64, step: f64 },
    /// Temperature (°C).
    Temp { from: f64, to: f64, step: f64 },
    /// Supply voltage (V).
    Vdd { from: f64, to: f64, step: f64 },
}

impl PvtAxis {
    pub fn vth() -> PvtAxis {
        PvtAxis::Vth {
            from: 0.01,
            to: 0.08,
            step: 0.01,
        }
    }

    pub fn temp() -> PvtAxis {
        PvtAxis::Temp {
            from: -40.0,
            to: 150.0,
            step: 10.0,
        }
    }

    pub fn vdd() -> PvtAxis {
        PvtAxis::Vdd {
            from: 0.5,
            to: 1.0,
            step: 0.05,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PvtAxis::Vth { .. } => "vth",
            PvtAxis::Temp { .. } => "temp",
            PvtAxis::Vdd { .. } => "vdd",
        }
    }

    /// CSV header of the condition column.
    pub fn column(&self) -> &'static str {
        match self {
            PvtAxis::Vth { .. } => "dvth_V",
            PvtAxis::Temp { .. } => "temp_C",
            PvtAxis::Vdd { .. } => "vdd_V",
        }
    }

    fn range(&self) -> (f64, f64, f64) {
        match *self {
            PvtAxis::Vth { from, to, step } | PvtAxis::Temp { from, to, step } | PvtAxis::Vdd { from, to, step } => {
                (from, to, step)
            }
        }
    }

    pub fn check(&self) -> Result<()> {
        let (from, to, step) = self.range();
        if !(step > 0.0) || !from.is_finite() || !to.is_finite() || from > to {
            return Err(Error::Config(format!(
                "bad {} axis: from {from}, to {to}, step {step}",
                self.name()
            )));
        }
        Ok(())
    }

    /// Grid points `from + i·step`, endpoints included, rounded to 1e-9 so
    /// that 0.85 prints as 0.85.
    pub fn points(&self) -> Result<Vec<f64>> {
        self.check()?;
        let (from, to, step) = self.range();
        let n = ((to - from) / step + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|i| ((from + i as f64 * step) * 1e9).round() / 1e9).collect())
    }

    /// Environment with this axis set to `value`.
    pub fn apply(&self, base: &EnvCondition, value: f64) -> EnvCondition {
        match self {
            PvtAxis::Vth { .. } => base.with_dvth(value),
            PvtAxis::Temp { .. } => EnvCondition {
                temperature: value,
                ..*base
            },
            PvtAxis::Vdd { .. } => EnvCondition {
                vdd: value,
                ..*base
            },
        }
    }
}

impl fmt::Display for PvtAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PvtAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vth" => Ok(PvtAxis::vth()),
            "temp" | "temperature" => Ok(PvtAxis::temp()),
            "vdd" => Ok(PvtAxis::vdd()),
            _ => Err(Error::Config(format!("unknown PVT axis `{s}` (vth|temp|vdd)"))),
        }
    }
}

/// Power and average delay at one operating condition; `error` is set when
/// the point failed to simulate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub power: Option<f64>,
    pub t_avg: Option<f64>,
    pub error: Option<String>,
}

impl Measurement {
    fn of(kind: CellKind, config: &SimConfig) -> Measurement {
        let r = measure_power(kind, config).and_then(|p| Ok((p, measure_delays(kind, config)?.t_avg())));
        match r {
            Ok((p, d)) => Measurement {
                power: Some(p),
                t_avg: Some(d),
                error: None,
            },
            Err(e) => Measurement {
                power: None,
                t_avg: None,
                error: Some(e.to_string()),
            },
        }
    }

    pub fn is_valid(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvtPoint {
    pub value: f64,
    #[serde(flatten)]
    pub measurement: Measurement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvtSweep {
    pub latch: CellKind,
    pub axis: PvtAxis,
    pub points: Vec<PvtPoint>,
    /// Population σ over valid points; `None` when no point is valid.
    pub sigma_power: Option<f64>,
    pub sigma_delay: Option<f64>,
    pub invalid_points: usize,
}

fn valid_stats<'a>(
    ms: impl Iterator<Item = &'a Measurement> + Clone,
    stat: fn(&[f64]) -> Result<f64>,
) -> (Option<f64>, Option<f64>) {
    let p: Vec<f64> = ms.clone().filter_map(|m| m.power).collect();
    let d: Vec<f64> = ms.filter_map(|m| m.t_avg).collect();
    (stat(&p).ok(), stat(&d).ok())
}

/// Power and average delay at every grid point of `axis`, other conditions
/// as in `config`.
pub fn pvt_sweep(kind: CellKind, axis: PvtAxis, config: &SimConfig) -> Result<PvtSweep> {
    config.check()?;
    let values = axis.points()?;
    let points: Vec<PvtPoint> = values
        .par_iter()
        .map(|&value| {
            let cfg = SimConfig {
                env: axis.apply(&config.env, value),
                ..config.clone()
            };
            PvtPoint {
                value,
                measurement: Measurement::of(kind, &cfg),
            }
        })
        .collect();
    let (sigma_power, sigma_delay) = valid_stats(points.iter().map(|p| &p.measurement), stddev);
    Ok(PvtSweep {
        latch: kind,
        axis,
        invalid_points: points.iter().filter(|p| !p.measurement.is_valid()).count(),
        points,
        sigma_power,
        sigma_delay,
    })
}

impl PvtSweep {
    /// `<condition>,power_uW,t_avg_ps,error`; failed points leave the
    /// numeric fields empty.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{},power_uW,t_avg_ps,error\n", self.axis.column());
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                p.value,
                opt(p.measurement.power.map(|v| v * 1e6)),
                opt(p.measurement.t_avg.map(|v| v * 1e12)),
                csv_text(p.measurement.error.as_deref().unwrap_or(""))
            );
        }
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// σ of the threshold shift relative to |vth0|.
    pub vth_rel_sigma: f64,
    /// σ of the supply relative to its nominal value.
    pub vdd_rel_sigma: f64,
    /// Mean and σ of the temperature (°C); not given by the source study.
    pub temp_mean: f64,
    pub temp_sigma: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_samples: 2000,
            seed: 0,
            vth_rel_sigma: 0.10 / 3.0,
            vdd_rel_sigma: 0.20 / 3.0,
            temp_mean: 27.0,
            temp_sigma: 20.0,
        }
    }
}

impl McConfig {
    pub fn check(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        for (name, v) in [
            ("vth_rel_sigma", self.vth_rel_sigma),
            ("vdd_rel_sigma", self.vdd_rel_sigma),
            ("temp_sigma", self.temp_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a non-negative number")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSample {
    pub index: usize,
    pub dvth_n: f64,
    pub dvth_p: f64,
    pub vdd: f64,
    pub temperature: f64,
    #[serde(flatten)]
    pub measurement: Measurement,
}

/// Conditions of sample `index`, drawn from its own ChaCha stream so the
/// result does not depend on evaluation order.
pub fn draw_conditions(mc: &McConfig, nominal: &EnvCondition, index: usize) -> Result<EnvCondition> {
    let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
    rng.set_stream(index as u64);
    let normal = |mean: f64, sd: f64| Normal::new(mean, sd).map_err(|e| Error::Config(e.to_string()));
    let sd_n = mc.vth_rel_sigma * MosfetParams::default_nmos().vth0.abs();
    let sd_p = mc.vth_rel_sigma * MosfetParams::default_pmos().vth0.abs();
    let dvth_n = normal(0.0, sd_n)?.sample(&mut rng);
    let dvth_p = normal(0.0, sd_p)?.sample(&mut rng);
    let vdd = normal(nominal.vdd, mc.vdd_rel_sigma * nominal.vdd)?.sample(&mut rng);
    let temperature = normal(mc.temp_mean, mc.temp_sigma)?.sample(&mut rng);
    Ok(EnvCondition {
        temperature,
        vdd,
        dvth_n,
        dvth_p,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub latch: CellKind,
    pub n_samples: usize,
    pub n_valid: usize,
    pub n_excluded: usize,
    pub sigma_power: Option<f64>,
    pub ad_power: Option<f64>,
    pub sigma_delay: Option<f64>,
    pub ad_delay: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub samples: Vec<McSample>,
    pub summary: McSummary,
}

pub fn monte_carlo(kind: CellKind, mc: &McConfig, config: &SimConfig) -> Result<McResult> {
    mc.check()?;
    config.check()?;
    let samples: Vec<McSample> = (0..mc.n_samples)
        .into_par_iter()
        .map(|index| {
            let env = draw_conditions(mc, &config.env, index)?;
            let cfg = SimConfig {
                env,
                ..config.clone()
            };
            Ok(McSample {
                index,
                dvth_n: env.dvth_n,
                dvth_p: env.dvth_p,
                vdd: env.vdd,
                temperature: env.temperature,
                measurement: Measurement::of(kind, &cfg),
            })
        })
        .collect::<Result<_>>()?;
    let ms = samples.iter().map(|s| &s.measurement);
    let (sigma_power, sigma_delay) = valid_stats(ms.clone(), stddev);
    let (ad_power, ad_delay) = valid_stats(ms, avg_dev);
    let n_valid = samples.iter().filter(|s| s.measurement.is_valid()).count();
    Ok(McResult {
        summary: McSummary {
            latch: kind,
            n_samples: mc.n_samples,
            n_valid,
            n_excluded: mc.n_samples - n_valid,
            sigma_power,
            ad_power,
            sigma_delay,
            ad_delay,
        },
        samples,
    })
}

impl McResult {
    /// `i,vth_n,vth_p,vdd,temp,power_uW,t_avg_ps`; thresholds are the
    /// nominal-temperature values including the drawn shift.
    pub fn samples_csv(&self) -> String {
        let vn = MosfetParams::default_nmos().vth0;
        let vp = MosfetParams::default_pmos().vth0;
        let mut s = String::from("i,vth_n,vth_p,vdd,temp,power_uW,t_avg_ps\n");
        for x in &self.samples {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                x.index,
                vn + x.dvth_n,
                vp - x.dvth_p,
                x.vdd,
                x.temperature,
                opt(x.measurement.power.map(|v| v * 1e6)),
                opt(x.measurement.t_avg.map(|v| v * 1e12)),
            );
        }
        s
    }
}

/// D switching times of the short-circuit protocol (ramp start).
pub const SC_D_EDGES: [f64; 2] = [80e-12, 170e-12];
pub const SC_WINDOW: (f64, f64) = (50e-12, 250e-12);

/// Transparent latch (CLK pinned high) with D rising at 80 ps and falling
/// at 170 ps.
pub fn short_circuit_testbench(kind: CellKind, vdd: f64) -> Result<Netlist> {
    let [up, down] = SC_D_EDGES;
    let d = Waveform::Pwl(vec![(0.0, 0.0), (up, 0.0), (up + EDGE, vdd), (down, vdd), (down + EDGE, 0.0)]);
    Testbench {
        vdd,
        clock: ClockMode::Held(true),
        d,
    }
    .build(&build_cell(kind, &Sizing::default())?)
}

pub fn short_circuit_trace(kind: CellKind, config: &SimConfig) -> Result<Trace> {
    let cfg = SimConfig {
        t_stop: SC_WINDOW.1,
        ..config.clone()
    };
    transient(&short_circuit_testbench(kind, config.env.vdd)?, &cfg, &["d", "q"])
}

/// Average |I(vdd)| over the protocol window.
pub fn short_circuit_protocol(kind: CellKind, config: &SimConfig) -> Result<f64> {
    let trace = short_circuit_trace(kind, config)?;
    avg_current(&trace, SC_WINDOW.0, SC_WINDOW.1, "vdd")
}
