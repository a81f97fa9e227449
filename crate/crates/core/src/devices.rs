//! Device constitutive equations: square-law MOSFET with temperature and
//! threshold-shift dependence, and independent source waveforms.

use serde::{Deserialize, Serialize};

use crate::netlist::{Polarity, PulseSpec, Waveform};

const KELVIN: f64 = 273.15;

/// Square-law model card. `vth0` is signed (negative for PMOS).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MosfetParams {
    pub polarity: Polarity,
    pub vth0: f64,
    pub kp0: f64,
    pub lambda: f64,
    /// Gate capacitance per unit W/L, lumped from gate to ground.
    pub cg0: f64,
    /// Threshold magnitude drop per degree above `t_ref`.
    pub tc_vth: f64,
    pub mu_exp: f64,
    pub t_ref: f64,
}

impl MosfetParams {
    pub fn default_nmos() -> Self {
        MosfetParams {
            polarity: Polarity::N,
            vth0: 0.30,
            kp0: 200e-6,
            lambda: 0.1,
            cg0: 0.05e-15,
            tc_vth: 0.7e-3,
            mu_exp: -1.5,
            t_ref: 27.0,
        }
    }

    pub fn default_pmos() -> Self {
        MosfetParams {
            polarity: Polarity::P,
            vth0: -0.30,
            kp0: 100e-6,
            ..Self::default_nmos()
        }
    }

    pub fn default_for(polarity: Polarity) -> Self {
        match polarity {
            Polarity::N => Self::default_nmos(),
            Polarity::P => Self::default_pmos(),
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if !(self.kp0 > 0.0) {
            return Err("KP must be positive".into());
        }
        if !(self.cg0 >= 0.0) {
            return Err("CG must be non-negative".into());
        }
        if self.lambda < 0.0 {
            return Err("LAMBDA must be non-negative".into());
        }
        let sign_ok = match self.polarity {
            Polarity::N => self.vth0 > 0.0,
            Polarity::P => self.vth0 < 0.0,
        };
        if !sign_ok {
            return Err("VTH sign must be positive for NMOS and negative for PMOS".into());
        }
        if self.t_ref != 27.0 {
            return Err("reference temperature is fixed at 27 C".into());
        }
        Ok(())
    }
}

/// Operating environment shared by every device of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvCondition {
    /// Degrees Celsius.
    pub temperature: f64,
    pub vdd: f64,
    /// Additive |Vth| shift for NMOS devices.
    pub dvth_n: f64,
    /// Additive |Vth| shift for PMOS devices.
    pub dvth_p: f64,
}

impl Default for EnvCondition {
    fn default() -> Self {
        EnvCondition {
            temperature: 27.0,
            vdd: 0.8,
            dvth_n: 0.0,
            dvth_p: 0.0,
        }
    }
}

impl EnvCondition {
    /// Same shift on both polarities.
    pub fn with_dvth(mut self, dvth: f64) -> Self {
        self.dvth_n = dvth;
        self.dvth_p = dvth;
        self
    }

    pub fn check(&self) -> Result<(), String> {
        if !(self.vdd > 0.0) {
            return Err("vdd must be positive".into());
        }
        if !(-55.0..=175.0).contains(&self.temperature) {
            return Err("temperature must lie in [-55, 175] C".into());
        }
        Ok(())
    }
}

/// Signed threshold voltage at the given environment.
pub fn effective_vth(params: &MosfetParams, env: &EnvCondition) -> f64 {
    let sign = params.vth0.signum();
    let dvth = match params.polarity {
        Polarity::N => env.dvth_n,
        Polarity::P => env.dvth_p,
    };
    params.vth0 + sign * dvth - sign * params.tc_vth * (env.temperature - params.t_ref)
}

pub fn effective_kp(params: &MosfetParams, env: &EnvCondition) -> f64 {
    params.kp0 * ((env.temperature + KELVIN) / (params.t_ref + KELVIN)).powf(params.mu_exp)
}

/// Drain current and its partial derivatives w.r.t. Vgs and Vds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MosfetEval {
    pub ids: f64,
    pub gm: f64,
    pub gds: f64,
}

/// Environment-resolved device, ready for repeated evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedMosfet {
    pub polarity: Polarity,
    /// Threshold magnitude.
    pub vth: f64,
    /// kp · W/L.
    pub beta: f64,
    pub lambda: f64,
}

impl ResolvedMosfet {
    pub fn new(params: &MosfetParams, env: &EnvCondition, w_over_l: f64) -> Self {
        ResolvedMosfet {
            polarity: params.polarity,
            vth: effective_vth(params, env).abs(),
            beta: effective_kp(params, env) * w_over_l,
            lambda: params.lambda,
        }
    }

    /// Evaluates with terminal voltages taken relative to the source pin.
    /// Conventional current is positive into the drain pin.
    #[inline]
    pub fn eval(&self, vgs: f64, vds: f64) -> MosfetEval {
        match self.polarity {
            Polarity::N => self.n_channel(vgs, vds),
            Polarity::P => {
                let e = self.n_channel(-vgs, -vds);
                MosfetEval {
                    ids: -e.ids,
                    gm: e.gm,
                    gds: e.gds,
                }
            }
        }
    }

    #[inline]
    fn n_channel(&self, vgs: f64, vds: f64) -> MosfetEval {
        if vds >= 0.0 {
            self.forward(vgs, vds)
        } else {
            // drain and source swap roles
            let e = self.forward(vgs - vds, -vds);
            MosfetEval {
                ids: -e.ids,
                gm: -e.gm,
                gds: e.gm + e.gds,
            }
        }
    }

    #[inline]
    fn forward(&self, vgs: f64, vds: f64) -> MosfetEval {
        let vov = vgs - self.vth;
        if vov <= 0.0 {
            return MosfetEval {
                ids: 0.0,
                gm: 0.0,
                gds: 0.0,
            };
        }
        let clm = 1.0 + self.lambda * vds;
        if vds < vov {
            let core = vov * vds - 0.5 * vds * vds;
            MosfetEval {
                ids: self.beta * core * clm,
                gm: self.beta * vds * clm,
                gds: self.beta * ((vov - vds) * clm + core * self.lambda),
            }
        } else {
            let core = 0.5 * vov * vov;
            MosfetEval {
                ids: self.beta * core * clm,
                gm: self.beta * vov * clm,
                gds: self.beta * core * self.lambda,
            }
        }
    }
}

/// Drain current (A) of a device of ratio `w_over_l`.
pub fn mosfet_ids(params: &MosfetParams, env: &EnvCondition, w_over_l: f64, vgs: f64, vds: f64) -> f64 {
    ResolvedMosfet::new(params, env, w_over_l).eval(vgs, vds).ids
}

/// Analytic (gm, gds) of [`mosfet_ids`].
pub fn mosfet_gm_gds(
    params: &MosfetParams,
    env: &EnvCondition,
    w_over_l: f64,
    vgs: f64,
    vds: f64,
) -> (f64, f64) {
    let e = ResolvedMosfet::new(params, env, w_over_l).eval(vgs, vds);
    (e.gm, e.gds)
}

fn pulse_value(p: &PulseSpec, t: f64) -> f64 {
    if t < p.t_delay {
        return p.v1;
    }
    let phase = (t - p.t_delay) % p.period;
    if phase < p.t_rise {
        p.v1 + (p.v2 - p.v1) * phase / p.t_rise
    } else if phase < p.t_rise + p.t_width {
        p.v2
    } else if phase < p.t_rise + p.t_width + p.t_fall {
        p.v2 + (p.v1 - p.v2) * (phase - p.t_rise - p.t_width) / p.t_fall
    } else {
        p.v1
    }
}

fn pwl_value(points: &[(f64, f64)], t: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if t <= first.0 {
        return first.1;
    }
    if t >= last.0 {
        return last.1;
    }
    let k = points.partition_point(|p| p.0 <= t);
    let (t0, v0) = points[k - 1];
    let (t1, v1) = points[k];
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

/// Source value at time `t`: volts for voltage sources, amperes for current sources.
pub fn waveform_value(w: &Waveform, t: f64) -> f64 {
    match w {
        Waveform::Dc { v } => *v,
        Waveform::Pulse(p) => pulse_value(p, t),
        Waveform::Pwl(points) => pwl_value(points, t),
        Waveform::DoubleExp(d) => {
            let dt = t - d.t_start;
            if dt < 0.0 {
                return 0.0;
            }
            d.sign * d.q_inj / (d.tau1 - d.tau2) * ((-dt / d.tau1).exp() - (-dt / d.tau2).exp())
        }
    }
}

impl Waveform {
    pub fn value(&self, t: f64) -> f64 {
        waveform_value(self, t)
    }

    /// Times in `[0, t_stop]` where the waveform's slope changes.
    pub fn breakpoints(&self, t_stop: f64) -> Vec<f64> {
        let mut out = Vec::new();
        match self {
            Waveform::Dc { .. } => {}
            Waveform::Pulse(p) => {
                let mut start = p.t_delay;
                while start <= t_stop {
                    for offset in [0.0, p.t_rise, p.t_rise + p.t_width, p.t_rise + p.t_width + p.t_fall] {
                        let t = start + offset;
                        if t <= t_stop {
                            out.push(t);
                        }
                    }
                    start += p.period;
                }
            }
            Waveform::Pwl(points) => out.extend(points.iter().map(|p| p.0).filter(|&t| t <= t_stop)),
            Waveform::DoubleExp(d) => {
                if d.t_start <= t_stop {
                    out.push(d.t_start);
                }
            }
        }
        out
    }
}
