use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How an accepted time point was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKind {
    OperatingPoint,
    Trapezoidal,
    BackwardEuler,
}

/// Recorded transient waveforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub times: Vec<f64>,
    pub node_names: Vec<String>,
    /// `voltages[k]` is the series of `node_names[k]`.
    pub voltages: Vec<Vec<f64>>,
    pub source_names: Vec<String>,
    /// Positive when the source delivers current into the circuit.
    pub supply_currents: Vec<Vec<f64>>,
    pub steps: Vec<StepKind>,
}

impl Trace {
    pub(crate) fn new(node_names: Vec<String>, source_names: Vec<String>) -> Trace {
        Trace {
            times: Vec::new(),
            voltages: vec![Vec::new(); node_names.len()],
            supply_currents: vec![Vec::new(); source_names.len()],
            node_names,
            source_names,
            steps: Vec::new(),
        }
    }

    pub(crate) fn push(
        &mut self,
        t: f64,
        kind: StepKind,
        volts: impl Iterator<Item = f64>,
        currents: impl Iterator<Item = f64>,
    ) {
        self.times.push(t);
        self.steps.push(kind);
        for (series, v) in self.voltages.iter_mut().zip(volts) {
            series.push(v);
        }
        for (series, i) in self.supply_currents.iter_mut().zip(currents) {
            series.push(i);
        }
    }

    /// Trace holding only one supply-current series, for evaluating current
    /// metrics on given data.
    pub fn from_supply(times: Vec<f64>, source: &str, current: Vec<f64>) -> Result<Trace> {
        if times.len() != current.len() || times.is_empty() {
            return Err(Error::Invalid("times and currents must be non-empty and equally long".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("times must be strictly increasing".into()));
        }
        let mut tr = Trace::new(Vec::new(), vec![source.to_string()]);
        for (&t, &i) in times.iter().zip(&current) {
            tr.push(t, StepKind::Trapezoidal, std::iter::empty(), [i].into_iter());
        }
        Ok(tr)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn voltage(&self, node: &str) -> Result<&[f64]> {
        self.node_names
            .iter()
            .position(|n| n == node)
            .map(|k| self.voltages[k].as_slice())
            .ok_or_else(|| Error::UnknownNode(node.to_string()))
    }

    pub fn supply_current(&self, source: &str) -> Result<&[f64]> {
        self.source_names
            .iter()
            .position(|n| n == source)
            .map(|k| self.supply_currents[k].as_slice())
            .ok_or_else(|| Error::UnknownNode(source.to_string()))
    }

    /// Index `k` with `times[k] <= t < times[k + 1]`.
    fn bracket(&self, t: f64) -> Option<usize> {
        let (first, last) = (*self.times.first()?, *self.times.last()?);
        if t < first || t > last {
            return None;
        }
        let k = self.times.partition_point(|&x| x <= t);
        Some(k.saturating_sub(1).min(self.times.len().saturating_sub(2)))
    }

    /// Linearly interpolated value of `series` at `t`.
    pub fn interpolate(&self, series: &[f64], t: f64) -> Result<f64> {
        let k = self.bracket(t).ok_or(Error::TraceWindow { from: t, to: t })?;
        if self.times.len() == 1 {
            return Ok(series[0]);
        }
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let a = (t - t0) / (t1 - t0);
        Ok(series[k] + a * (series[k + 1] - series[k]))
    }

    pub fn value_at(&self, node: &str, t: f64) -> Result<f64> {
        self.interpolate(self.voltage(node)?, t)
    }

    /// First time at or after `after` where `node` crosses `level`, with
    /// linear interpolation between samples.
    pub fn crossing(&self, node: &str, level: f64, after: f64) -> Result<f64> {
        let v = self.voltage(node)?;
        let start = self.times.partition_point(|&x| x < after).max(1);
        for k in start..self.len() {
            let (a, b) = (v[k - 1] - level, v[k] - level);
            if a == 0.0 && self.times[k - 1] >= after {
                return Ok(self.times[k - 1]);
            }
            if (a < 0.0) != (b < 0.0) || b == 0.0 {
                let t0 = self.times[k - 1];
                let t1 = self.times[k];
                let t = if a == b { t1 } else { t0 + (t1 - t0) * a / (a - b) };
                if t >= after {
                    return Ok(t);
                }
            }
        }
        Err(Error::NoCrossing {
            signal: node.to_string(),
            level,
            after,
        })
    }

    /// Trapezoidal integral of `series` over `[t0, t1]`.
    pub fn integrate(&self, series: &[f64], t0: f64, t1: f64) -> Result<f64> {
        self.integrate_with(series, t0, t1, |x| x)
    }

    pub(crate) fn integrate_with(&self, series: &[f64], t0: f64, t1: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
        if self.is_empty() || t0 < self.times[0] || t1 > self.t_end() || t1 < t0 {
            return Err(Error::TraceWindow { from: t0, to: t1 });
        }
        let mut sum = 0.0;
        let mut prev_t = t0;
        let mut prev_v = f(self.interpolate(series, t0)?);
        for (k, &t) in self.times.iter().enumerate() {
            if t <= t0 {
                continue;
            }
            if t >= t1 {
                break;
            }
            let v = f(series[k]);
            sum += 0.5 * (prev_v + v) * (t - prev_t);
            prev_t = t;
            prev_v = v;
        }
        let v = f(self.interpolate(series, t1)?);
        sum += 0.5 * (prev_v + v) * (t1 - prev_t);
        Ok(sum)
    }

    /// CSV with a `t_s` column, one column per node and `i_<source>_a` per source.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s");
        for n in &self.node_names {
            out.push(',');
            out.push_str(n);
        }
        for s in &self.source_names {
            out.push_str(&format!(",i_{s}_a"));
        }
        out.push('\n');
        for k in 0..self.len() {
            out.push_str(&format!("{:.16e}", self.times[k]));
            for series in self.voltages.iter().chain(&self.supply_currents) {
                out.push_str(&format!(",{:.16e}", series[k]));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Trace {
        let mut tr = Trace::new(vec!["a".into()], vec!["vdd".into()]);
        for k in 0..=10 {
            let t = k as f64;
            tr.push(t, StepKind::Trapezoidal, [t * 0.1].into_iter(), [1.0].into_iter());
        }
        tr
    }

    #[test]
    fn interpolation_and_crossing() {
        let tr = ramp();
        assert!((tr.value_at("a", 2.5).unwrap() - 0.25).abs() < 1e-15);
        assert!((tr.crossing("a", 0.45, 0.0).unwrap() - 4.5).abs() < 1e-12);
        assert!(tr.crossing("a", 0.45, 6.0).is_err());
        assert!(tr.value_at("a", 11.0).is_err());
        assert!(tr.value_at("b", 1.0).is_err());
    }

    #[test]
    fn integral_of_constant() {
        let tr = ramp();
        let i = tr.supply_current("vdd").unwrap().to_vec();
        assert!((tr.integrate(&i, 1.5, 7.25).unwrap() - 5.75).abs() < 1e-12);
        let v = tr.voltage("a").unwrap().to_vec();
        // integral of 0.1 t from 0 to 10
        assert!((tr.integrate(&v, 0.0, 10.0).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn csv_header() {
        let csv = ramp().to_csv();
        assert!(csv.starts_with("t_s,a,i_vdd_a\n"));
        assert_eq!(csv.lines().count(), 12);
    }
}
