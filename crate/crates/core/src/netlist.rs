//! Flat transistor-level circuit description and its SPICE-subset text form.
//!
//! Grammar (one card per line, `*` starts a comment, no continuation lines):
//!
//! ```text
//! Mname <drain> <gate> <source> <NMOS|PMOS|model> W/L=<ratio>
//! Cname <n1> <n2> <value>
//! Vname <n+> <n-> DC <v> | PULSE(<v1> <v2> <td> <tr> <tf> <pw> <per>) | PWL(t1 v1 t2 v2 ...)
//! Iname <n+> <n-> SNU(<q_inj> <tau1> <tau2> <t_start> <sign>)
//! .model <name> <NMOS|PMOS> VTH=<v> KP=<a_per_v2> LAMBDA=<per_v> CG=<farads> [TCV=<v_per_c>] [MUEXP=<x>]
//! .end
//! ```
//!
//! A leading `*` line is taken as the circuit title. Keywords, device names
//! and node names are case-insensitive and stored lower-case; `gnd` is an
//! alias of node `0`. Sources of either kind accept any of the waveform forms.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::devices::MosfetParams;
use crate::error::{Error, Result};
use crate::units::{format_value, parse_value};

pub const GROUND: &str = "0";
pub const VDD: &str = "vdd";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    N,
    P,
}

impl Polarity {
    pub fn default_model(self) -> &'static str {
        match self {
            Polarity::N => "nmos",
            Polarity::P => "pmos",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub v1: f64,
    pub v2: f64,
    pub t_delay: f64,
    pub t_rise: f64,
    pub t_fall: f64,
    pub t_width: f64,
    pub period: f64,
}

/// Double-exponential collected-charge pulse of a particle strike.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleExp {
    pub q_inj: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub t_start: f64,
    /// +1 or -1.
    pub sign: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Waveform {
    Dc { v: f64 },
    Pulse(PulseSpec),
    Pwl(Vec<(f64, f64)>),
    DoubleExp(DoubleExp),
}

impl Waveform {
    pub fn check(&self) -> Result<(), String> {
        match self {
            Waveform::Dc { .. } => Ok(()),
            Waveform::Pulse(p) => {
                if !(p.t_rise > 0.0 && p.t_fall > 0.0) {
                    return Err("pulse rise and fall times must be positive".into());
                }
                if p.t_delay < 0.0 || p.t_width < 0.0 {
                    return Err("pulse delay and width must be non-negative".into());
                }
                if p.period <= p.t_rise + p.t_width + p.t_fall {
                    return Err("pulse period must exceed rise + width + fall".into());
                }
                Ok(())
            }
            Waveform::Pwl(points) => {
                if points.is_empty() {
                    return Err("PWL needs at least one point".into());
                }
                if points[0].0 < 0.0 {
                    return Err("PWL times must be non-negative".into());
                }
                if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err("PWL times must be strictly increasing".into());
                }
                Ok(())
            }
            Waveform::DoubleExp(d) => {
                if d.q_inj < 0.0 {
                    return Err("q_inj must be non-negative".into());
                }
                if !(d.tau1 > 0.0 && d.tau2 > 0.0) || d.tau1 == d.tau2 {
                    return Err("tau1 and tau2 must be positive and distinct".into());
                }
                if d.sign != 1.0 && d.sign != -1.0 {
                    return Err("SNU sign must be +1 or -1".into());
                }
                if d.t_start < 0.0 {
                    return Err("SNU start time must be non-negative".into());
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mosfet {
    pub name: String,
    pub drain: String,
    pub gate: String,
    pub source: String,
    pub polarity: Polarity,
    pub w_over_l: f64,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capacitor {
    pub name: String,
    pub n1: String,
    pub n2: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VSource {
    pub name: String,
    pub n_plus: String,
    pub n_minus: String,
    pub waveform: Waveform,
}

/// Current source; positive current flows from `n_plus` through the source
/// into `n_minus`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ISource {
    pub name: String,
    pub n_plus: String,
    pub n_minus: String,
    pub waveform: Waveform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Device {
    Mosfet(Mosfet),
    Capacitor(Capacitor),
    VSource(VSource),
    ISource(ISource),
}

impl Device {
    pub fn name(&self) -> &str {
        match self {
            Device::Mosfet(m) => &m.name,
            Device::Capacitor(c) => &c.name,
            Device::VSource(v) => &v.name,
            Device::ISource(i) => &i.name,
        }
    }

    pub fn terminals(&self) -> Vec<&str> {
        match self {
            Device::Mosfet(m) => vec![&m.drain, &m.gate, &m.source],
            Device::Capacitor(c) => vec![&c.n1, &c.n2],
            Device::VSource(v) => vec![&v.n_plus, &v.n_minus],
            Device::ISource(i) => vec![&i.n_plus, &i.n_minus],
        }
    }

    fn prefix(&self) -> char {
        match self {
            Device::Mosfet(_) => 'm',
            Device::Capacitor(_) => 'c',
            Device::VSource(_) => 'v',
            Device::ISource(_) => 'i',
        }
    }

    /// Local invariants of a single device.
    pub fn check(&self) -> Result<(), String> {
        match self {
            Device::Mosfet(m) => {
                if !(m.w_over_l > 0.0) || !m.w_over_l.is_finite() {
                    return Err("w_over_l must be positive".into());
                }
                Ok(())
            }
            Device::Capacitor(c) => {
                if !(c.value > 0.0) || !c.value.is_finite() {
                    return Err("capacitance must be positive".into());
                }
                Ok(())
            }
            Device::VSource(v) => v.waveform.check(),
            Device::ISource(i) => i.waveform.check(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Netlist {
    pub name: String,
    pub nodes: BTreeSet<String>,
    pub devices: Vec<Device>,
    /// Explicitly declared models; `nmos`/`pmos` fall back to the built-in defaults.
    pub models: BTreeMap<String, MosfetParams>,
}

impl Default for Netlist {
    fn default() -> Self {
        Netlist::new("")
    }
}

fn normalize_node(name: &str) -> String {
    let lower = name.to_ascii_lowercase();
    if lower == "gnd" {
        GROUND.to_string()
    } else {
        lower
    }
}

fn check_identifier(name: &str) -> Result<(), String> {
    if name.is_empty()
        || name
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, '(' | ')' | '=' | ',' | '*'))
    {
        return Err(format!("invalid identifier `{name}`"));
    }
    Ok(())
}

impl Netlist {
    pub fn new(name: impl Into<String>) -> Self {
        let mut nodes = BTreeSet::new();
        nodes.insert(GROUND.to_string());
        Netlist {
            name: name.into(),
            nodes,
            devices: Vec::new(),
            models: BTreeMap::new(),
        }
    }

    /// Adds a device, lower-casing its names and creating its nodes.
    pub fn add(&mut self, device: Device) -> Result<()> {
        let mut device = device;
        let normalize = |s: &mut String| *s = normalize_node(s);
        match &mut device {
            Device::Mosfet(m) => {
                m.name.make_ascii_lowercase();
                m.model.make_ascii_lowercase();
                normalize(&mut m.drain);
                normalize(&mut m.gate);
                normalize(&mut m.source);
            }
            Device::Capacitor(c) => {
                c.name.make_ascii_lowercase();
                normalize(&mut c.n1);
                normalize(&mut c.n2);
            }
            Device::VSource(v) => {
                v.name.make_ascii_lowercase();
                normalize(&mut v.n_plus);
                normalize(&mut v.n_minus);
            }
            Device::ISource(i) => {
                i.name.make_ascii_lowercase();
                normalize(&mut i.n_plus);
                normalize(&mut i.n_minus);
            }
        }
        let name = device.name().to_string();
        let invalid = |message: String| Error::InvalidDevice {
            name: name.clone(),
            message,
        };
        check_identifier(&name).map_err(invalid)?;
        if !name.starts_with(device.prefix()) {
            return Err(invalid(format!(
                "name must start with `{}`",
                device.prefix().to_ascii_uppercase()
            )));
        }
        for t in device.terminals() {
            check_identifier(t).map_err(invalid)?;
        }
        device.check().map_err(invalid)?;
        if let Device::Mosfet(m) = &device {
            check_identifier(&m.model).map_err(invalid)?;
            if let Some(params) = self.model_params(&m.model) {
                if params.polarity != m.polarity {
                    return Err(invalid(format!("polarity does not match model `{}`", m.model)));
                }
            }
        }
        if self.device(&name).is_some() {
            return Err(Error::DuplicateDevice(name));
        }
        for t in device.terminals() {
            self.nodes.insert(t.to_string());
        }
        self.devices.push(device);
        Ok(())
    }

    pub fn add_model(&mut self, name: &str, params: MosfetParams) -> Result<()> {
        params.check().map_err(Error::Config)?;
        let name = name.to_ascii_lowercase();
        check_identifier(&name).map_err(Error::Config)?;
        self.models.insert(name, params);
        Ok(())
    }

    /// Resolved parameters for a model name: explicit declaration first, then
    /// the built-in `nmos`/`pmos` defaults.
    pub fn model_params(&self, model: &str) -> Option<MosfetParams> {
        let key = model.to_ascii_lowercase();
        if let Some(p) = self.models.get(&key) {
            return Some(*p);
        }
        match key.as_str() {
            "nmos" => Some(MosfetParams::default_nmos()),
            "pmos" => Some(MosfetParams::default_pmos()),
            _ => None,
        }
    }

    pub fn device(&self, name: &str) -> Option<&Device> {
        let key = name.to_ascii_lowercase();
        self.devices.iter().find(|d| d.name() == key)
    }

    pub fn has_node(&self, name: &str) -> bool {
        self.nodes.contains(&normalize_node(name))
    }

    pub fn mosfets(&self) -> impl Iterator<Item = &Mosfet> {
        self.devices.iter().filter_map(|d| match d {
            Device::Mosfet(m) => Some(m),
            _ => None,
        })
    }

    pub fn transistor_count(&self) -> usize {
        self.mosfets().count()
    }

    /// Appends every device and model of `other`.
    pub fn extend_from(&mut self, other: &Netlist) -> Result<()> {
        for (name, params) in &other.models {
            self.add_model(name, *params)?;
        }
        for d in &other.devices {
            self.add(d.clone())?;
        }
        Ok(())
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_waveform(rest: &str, line: usize) -> Result<Waveform> {
    let upper = rest.trim().to_ascii_uppercase();
    let value = |tok: &str| parse_value(tok).map_err(|m| parse_err(line, m));
    if let Some(args) = upper.strip_prefix("DC") {
        if !args.is_empty() && !args.starts_with(char::is_whitespace) {
            return Err(parse_err(line, format!("malformed source `{rest}`")));
        }
        let toks: Vec<&str> = args.split_whitespace().collect();
        if toks.len() != 1 {
            return Err(parse_err(line, "DC source takes exactly one value"));
        }
        return Ok(Waveform::Dc { v: value(toks[0])? });
    }
    let (keyword, args) = ["PULSE", "PWL", "SNU"]
        .iter()
        .find_map(|k| upper.strip_prefix(k).map(|a| (*k, a.trim())))
        .ok_or_else(|| parse_err(line, format!("unknown source specification `{rest}`")))?;
    let inner = args
        .strip_prefix('(')
        .and_then(|a| a.strip_suffix(')'))
        .ok_or_else(|| parse_err(line, format!("{keyword} arguments must be parenthesized")))?;
    let vals = inner
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(value)
        .collect::<Result<Vec<f64>>>()?;
    let waveform = match keyword {
        "PULSE" => {
            if vals.len() != 7 {
                return Err(parse_err(line, "PULSE takes 7 values"));
            }
            Waveform::Pulse(PulseSpec {
                v1: vals[0],
                v2: vals[1],
                t_delay: vals[2],
                t_rise: vals[3],
                t_fall: vals[4],
                t_width: vals[5],
                period: vals[6],
            })
        }
        "PWL" => {
            if vals.is_empty() || vals.len() % 2 != 0 {
                return Err(parse_err(line, "PWL takes (t, v) pairs"));
            }
            Waveform::Pwl(vals.chunks(2).map(|c| (c[0], c[1])).collect())
        }
        _ => {
            if vals.len() != 5 {
                return Err(parse_err(line, "SNU takes 5 values"));
            }
            Waveform::DoubleExp(DoubleExp {
                q_inj: vals[0],
                tau1: vals[1],
                tau2: vals[2],
                t_start: vals[3],
                sign: vals[4],
            })
        }
    };
    waveform.check().map_err(|m| parse_err(line, m))?;
    Ok(waveform)
}

fn parse_model_card(toks: &[&str], line: usize) -> Result<(String, MosfetParams)> {
    if toks.len() < 3 {
        return Err(parse_err(line, ".model needs a name and a type"));
    }
    let polarity = match toks[2].to_ascii_uppercase().as_str() {
        "NMOS" => Polarity::N,
        "PMOS" => Polarity::P,
        other => return Err(parse_err(line, format!("unknown model type `{other}`"))),
    };
    let mut params = MosfetParams::default_for(polarity);
    let mut seen = BTreeSet::new();
    for tok in &toks[3..] {
        let (key, val) = tok
            .split_once('=')
            .ok_or_else(|| parse_err(line, format!("malformed parameter `{tok}`")))?;
        let key = key.to_ascii_uppercase();
        if !seen.insert(key.clone()) {
            return Err(parse_err(line, format!("parameter {key} given twice")));
        }
        let v = parse_value(val).map_err(|m| parse_err(line, m))?;
        match key.as_str() {
            "VTH" => params.vth0 = v,
            "KP" => params.kp0 = v,
            "LAMBDA" => params.lambda = v,
            "CG" => params.cg0 = v,
            "TCV" => params.tc_vth = v,
            "MUEXP" => params.mu_exp = v,
            _ => return Err(parse_err(line, format!("unknown model parameter `{key}`"))),
        }
    }
    params.check().map_err(|m| parse_err(line, m))?;
    Ok((toks[1].to_ascii_lowercase(), params))
}

/// Parses netlist text. Device order is preserved.
pub fn parse_netlist(text: &str) -> Result<Netlist> {
    let mut netlist = Netlist::new("");
    // (line, mosfet index) pairs whose models are resolved once all cards are read
    let mut pending: Vec<(usize, usize)> = Vec::new();
    let mut seen_models: HashMap<String, usize> = HashMap::new();
    let mut ended = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(title) = line.strip_prefix('*') {
            if idx == 0 {
                netlist.name = title.trim().to_string();
            }
            continue;
        }
        if ended {
            return Err(parse_err(line_no, "content after .end"));
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let head = toks[0].to_ascii_lowercase();
        if head.starts_with('.') {
            match head.as_str() {
                ".end" if toks.len() == 1 => ended = true,
                ".model" => {
                    let (name, params) = parse_model_card(&toks, line_no)?;
                    if seen_models.insert(name.clone(), line_no).is_some() {
                        return Err(parse_err(line_no, format!("model `{name}` declared twice")));
                    }
                    netlist.models.insert(name, params);
                }
                _ => return Err(parse_err(line_no, format!("unknown card `{}`", toks[0]))),
            }
            continue;
        }
        let device = match head.chars().next() {
            Some('m') => {
                if toks.len() != 6 {
                    return Err(parse_err(line_no, "MOSFET card: M<name> d g s <model> W/L=<ratio>"));
                }
                let ratio = toks[5]
                    .to_ascii_lowercase()
                    .strip_prefix("w/l=")
                    .map(str::to_string)
                    .ok_or_else(|| parse_err(line_no, format!("malformed parameter `{}`", toks[5])))?;
                let w_over_l = parse_value(&ratio).map_err(|m| parse_err(line_no, m))?;
                pending.push((line_no, netlist.devices.len()));
                Device::Mosfet(Mosfet {
                    name: toks[0].into(),
                    drain: toks[1].into(),
                    gate: toks[2].into(),
                    source: toks[3].into(),
                    // provisional, fixed up once models are known
                    polarity: Polarity::N,
                    w_over_l,
                    model: toks[4].into(),
                })
            }
            Some('c') => {
                if toks.len() != 4 {
                    return Err(parse_err(line_no, "capacitor card: C<name> n1 n2 <value>"));
                }
                let value = parse_value(toks[3]).map_err(|m| parse_err(line_no, m))?;
                Device::Capacitor(Capacitor {
                    name: toks[0].into(),
                    n1: toks[1].into(),
                    n2: toks[2].into(),
                    value,
                })
            }
            Some(c @ ('v' | 'i')) => {
                if toks.len() < 4 {
                    return Err(parse_err(line_no, "source card needs two nodes and a value"));
                }
                let waveform = parse_waveform(&toks[3..].join(" "), line_no)?;
                if c == 'v' {
                    Device::VSource(VSource {
                        name: toks[0].into(),
                        n_plus: toks[1].into(),
                        n_minus: toks[2].into(),
                        waveform,
                    })
                } else {
                    Device::ISource(ISource {
                        name: toks[0].into(),
                        n_plus: toks[1].into(),
                        n_minus: toks[2].into(),
                        waveform,
                    })
                }
            }
            _ => return Err(parse_err(line_no, format!("unknown card `{}`", toks[0]))),
        };
        // models may be declared further down; polarity is finalized below
        let mut device = device;
        if let Device::Mosfet(m) = &mut device {
            if let Some(p) = netlist.model_params(&m.model) {
                m.polarity = p.polarity;
            }
        }
        netlist.add(device).map_err(|e| match e {
            Error::InvalidDevice { message, .. } => parse_err(line_no, message),
            Error::DuplicateDevice(name) => parse_err(line_no, format!("duplicate device name `{name}`")),
            other => parse_err(line_no, other.to_string()),
        })?;
    }

    for (line_no, idx) in pending {
        let model_params = {
            let Device::Mosfet(m) = &netlist.devices[idx] else { unreachable!() };
            netlist
                .model_params(&m.model)
                .ok_or_else(|| parse_err(line_no, format!("unknown model `{}`", m.model)))?
        };
        if let Device::Mosfet(m) = &mut netlist.devices[idx] {
            m.polarity = model_params.polarity;
        }
    }
    Ok(netlist)
}

fn format_waveform(w: &Waveform) -> String {
    let f = |v: f64| format_value(v);
    match w {
        Waveform::Dc { v } => format!("DC {}", f(*v)),
        Waveform::Pulse(p) => format!(
            "PULSE({} {} {} {} {} {} {})",
            f(p.v1),
            f(p.v2),
            f(p.t_delay),
            f(p.t_rise),
            f(p.t_fall),
            f(p.t_width),
            f(p.period)
        ),
        Waveform::Pwl(points) => {
            let body: Vec<String> = points
                .iter()
                .map(|(t, v)| format!("{} {}", f(*t), f(*v)))
                .collect();
            format!("PWL({})", body.join(" "))
        }
        Waveform::DoubleExp(d) => format!(
            "SNU({} {} {} {} {})",
            f(d.q_inj),
            f(d.tau1),
            f(d.tau2),
            f(d.t_start),
            if d.sign < 0.0 { "-1" } else { "+1" }
        ),
    }
}

/// Renders the netlist in the text grammar accepted by [`parse_netlist`].
pub fn serialize(netlist: &Netlist) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "* {}", netlist.name);
    for (name, p) in &netlist.models {
        let kind = match p.polarity {
            Polarity::N => "NMOS",
            Polarity::P => "PMOS",
        };
        let _ = writeln!(
            out,
            ".model {name} {kind} VTH={} KP={} LAMBDA={} CG={} TCV={} MUEXP={}",
            format_value(p.vth0),
            format_value(p.kp0),
            format_value(p.lambda),
            format_value(p.cg0),
            format_value(p.tc_vth),
            format_value(p.mu_exp)
        );
    }
    for d in &netlist.devices {
        let _ = match d {
            Device::Mosfet(m) => writeln!(
                out,
                "{} {} {} {} {} W/L={}",
                m.name,
                m.drain,
                m.gate,
                m.source,
                m.model,
                format_value(m.w_over_l)
            ),
            Device::Capacitor(c) => {
                writeln!(out, "{} {} {} {}", c.name, c.n1, c.n2, format_value(c.value))
            }
            Device::VSource(v) => writeln!(
                out,
                "{} {} {} {}",
                v.name,
                v.n_plus,
                v.n_minus,
                format_waveform(&v.waveform)
            ),
            Device::ISource(i) => writeln!(
                out,
                "{} {} {} {}",
                i.name,
                i.n_plus,
                i.n_minus,
                format_waveform(&i.waveform)
            ),
        };
    }
    out.push_str(".end\n");
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    pub subject: Option<String>,
}

impl Diagnostic {
    fn error(message: impl Into<String>, subject: Option<&str>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            message: message.into(),
            subject: subject.map(str::to_string),
        }
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, i: usize) -> usize {
        let mut root = i;
        while self.0[root] != root {
            root = self.0[root];
        }
        let mut i = i;
        while self.0[i] != root {
            let next = self.0[i];
            self.0[i] = root;
            i = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra] = rb;
        }
    }
}

/// Checks every netlist invariant and reports floating nodes.
///
/// Floating nodes (no channel or source path to a rail) are legal and come
/// back as warnings; everything else is an error.
pub fn validate(netlist: &Netlist) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    if !netlist.nodes.contains(GROUND) {
        diags.push(Diagnostic::error("ground node `0` missing", None));
    }
    let mut names = BTreeSet::new();
    let mut fixed: HashMap<&str, &str> = HashMap::new();
    for d in &netlist.devices {
        if !names.insert(d.name()) {
            diags.push(Diagnostic::error("duplicate device name", Some(d.name())));
        }
        if let Err(m) = d.check() {
            diags.push(Diagnostic::error(m, Some(d.name())));
        }
        for t in d.terminals() {
            if !netlist.nodes.contains(t) {
                diags.push(Diagnostic::error(format!("terminal node `{t}` not declared"), Some(d.name())));
            }
        }
        match d {
            Device::Mosfet(m) => match netlist.model_params(&m.model) {
                None => diags.push(Diagnostic::error(format!("unknown model `{}`", m.model), Some(&m.name))),
                Some(p) if p.polarity != m.polarity => diags.push(Diagnostic::error(
                    format!("polarity does not match model `{}`", m.model),
                    Some(&m.name),
                )),
                _ => {}
            },
            Device::VSource(v) => {
                if v.n_plus == v.n_minus {
                    diags.push(Diagnostic::error("voltage source shorted onto one node", Some(&v.name)));
                } else if v.n_minus == GROUND {
                    if let Some(other) = fixed.insert(&v.n_plus, &v.name) {
                        diags.push(Diagnostic::error(
                            format!("node `{}` driven by `{other}` and `{}`", v.n_plus, v.name),
                            Some(&v.name),
                        ));
                    }
                }
            }
            _ => {}
        }
    }
    for (name, p) in &netlist.models {
        if let Err(m) = p.check() {
            diags.push(Diagnostic::error(m, Some(name)));
        }
    }
    let powered = netlist.devices.iter().any(|d| match d {
        Device::VSource(v) => v.n_plus == VDD || v.n_minus == VDD,
        _ => false,
    });
    if !powered {
        diags.push(Diagnostic::error("unpowered: no voltage source on `vdd`", Some(VDD)));
    }

    let index: HashMap<&str, usize> = netlist
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut uf = UnionFind((0..netlist.nodes.len()).collect());
    for d in &netlist.devices {
        let (a, b) = match d {
            Device::Mosfet(m) => (&m.drain, &m.source),
            Device::VSource(v) => (&v.n_plus, &v.n_minus),
            _ => continue,
        };
        if let (Some(&ia), Some(&ib)) = (index.get(a.as_str()), index.get(b.as_str())) {
            uf.union(ia, ib);
        }
    }
    if let Some(&g) = index.get(GROUND) {
        let ground_root = uf.find(g);
        for (node, &i) in &index {
            if uf.find(i) != ground_root {
                diags.push(Diagnostic {
                    severity: Severity::Warning,
                    message: "floating node".into(),
                    subject: Some(node.to_string()),
                });
            }
        }
    }
    diags.sort_by(|a, b| a.subject.cmp(&b.subject).then(a.message.cmp(&b.message)));
    diags
}
