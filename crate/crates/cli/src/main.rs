//! `latchsim` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use latchsim::cells::{build_cell, osc_truth_table, CellKind, OscCase, OscLevel, Sizing};
use latchsim::experiments::{
    monte_carlo, pvt_sweep, short_circuit_protocol, McConfig, PvtAxis, SC_D_EDGES, SC_WINDOW,
};
use latchsim::fault::{run_campaign, CampaignReport, CampaignSpec, Classification, Schedule};
use latchsim::metrics::{measure_latch, measure_latch_detailed, relative_delta, Bounded, MetricsReport};
use latchsim::units::parse_value;
use latchsim::{parse_netlist, serialize, transient, SimConfig};

#[derive(Debug, Parser)]
#[command(name = "latchsim", version, about = "Transistor-level latch simulator and SEU harness")]
struct Cli {
    /// Seed for randomized experiments.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Nominal time step (engineering suffixes allowed, e.g. 50f).
    #[arg(long, global = true, value_parser = parse_value)]
    dt: Option<f64>,
    /// Directory for report files; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Full-size runs: 2000 MC samples at the default time step.
    #[arg(long, global = true)]
    long: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ScheduleArg {
    Default,
    Exhaustive,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cell netlists.
    Cells {
        #[command(subcommand)]
        action: CellsAction,
    },
    /// Simulate the OSC truth table.
    Truthtable {
        #[arg(long, default_value = "osc")]
        cell: CellKind,
    },
    /// Transient run of a netlist file, waveform CSV out.
    Simulate {
        #[arg(long)]
        netlist: PathBuf,
        #[arg(long, value_parser = parse_value)]
        tstop: f64,
        /// Comma-separated node list; all nodes when omitted.
        #[arg(long, value_delimiter = ',')]
        report: Vec<String>,
    },
    /// Single-node-upset injection campaign.
    Campaign {
        #[arg(long)]
        latch: CellKind,
        #[arg(long, value_parser = parse_value, default_value = "2.5f")]
        qinj: f64,
        #[arg(long, value_enum, default_value_t = ScheduleArg::Default)]
        schedule: ScheduleArg,
        /// Strike time of the exhaustive schedule.
        #[arg(long, value_parser = parse_value, default_value = "1n")]
        tstrike: f64,
    },
    /// Power, delays, setup/hold, PDP and Qcrit.
    Metrics {
        #[arg(long)]
        latch: CellKind,
        #[arg(long, value_parser = parse_value, default_value = "100f")]
        qmax: f64,
    },
    /// Relative difference of every metric against a baseline latch.
    Compare {
        #[arg(long)]
        latch: CellKind,
        #[arg(long)]
        baseline: CellKind,
        #[arg(long, value_parser = parse_value, default_value = "100f")]
        qmax: f64,
    },
    /// Average supply current with CLK held high and D switching twice.
    Shortcircuit {
        #[arg(long)]
        latch: CellKind,
    },
    /// One-axis PVT sweep.
    Pvt {
        #[arg(long)]
        latch: CellKind,
        #[arg(long)]
        axis: PvtAxis,
    },
    /// Monte Carlo over Vth, Vdd and temperature.
    Mc {
        #[arg(long)]
        latch: CellKind,
        /// Default 100, or 2000 with --long.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        temp_mean: Option<f64>,
        #[arg(long)]
        temp_sigma: Option<f64>,
    },
}

#[derive(Debug, Subcommand)]
enum CellsAction {
    /// Print a cell's netlist.
    Dump {
        #[arg(long)]
        kind: CellKind,
    },
}

/// Desk-scale MC step when neither --dt nor --long is given.
const MC_DESK_DT: f64 = 100e-15;

struct Output<'a> {
    out: Option<&'a Path>,
    format: Format,
}

impl Output<'_> {
    fn write(&self, file: &str, text: &str) -> Result<()> {
        let dir = self.out.expect("write only called with an output directory");
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(file);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {}", path.display());
        Ok(())
    }

    /// Writes the JSON report and optional CSV table; on stdout the
    /// `--format` choice picks one of them.
    fn emit(&self, stem: &str, report: &Value, csv: Option<(&str, String)>) -> Result<()> {
        let text = serde_json::to_string_pretty(report)? + "\n";
        match self.out {
            Some(_) => {
                self.write(&format!("{stem}.json"), &text)?;
                if let Some((name, c)) = csv {
                    self.write(name, &c)?;
                }
            }
            None => match (self.format, csv) {
                (Format::Csv, Some((_, c))) => print!("{c}"),
                _ => print!("{text}"),
            },
        }
        Ok(())
    }
}

fn envelope(command: &str, config: &SimConfig, cli: &Cli, args: Value, result: impl Serialize) -> Result<Value> {
    Ok(json!({
        "command": command,
        "args": args,
        "seed": cli.seed,
        "long": cli.long,
        "config": config,
        "result": serde_json::to_value(result)?,
    }))
}

fn sim_config(cli: &Cli) -> Result<SimConfig> {
    let mut c = SimConfig::default();
    if let Some(dt) = cli.dt {
        c.dt_nominal = dt;
        c.dt_fine = c.dt_fine.min(dt);
    }
    c.check()?;
    Ok(c)
}

fn level(l: OscLevel) -> String {
    match l {
        OscLevel::Driven(v) => format!("{}", v as u8),
        OscLevel::Retained(v) => format!("Z({})", v as u8),
    }
}

fn truth_table_text(cases: &[OscCase]) -> String {
    let mut rows: Vec<(bool, bool)> = Vec::new();
    for c in cases {
        if !rows.contains(&c.to) {
            rows.push(c.to);
        }
    }
    let mut s = String::from("I1 I2 | O1    O2    | prior    | O1 (V)  O2 (V)  drift (mV) | result\n");
    for row in rows {
        for c in cases.iter().filter(|c| c.to == row) {
            s += &format!(
                "{}  {}  | {:<5} {:<5} | from {}{} | {:>6.3}  {:>6.3}  {:>9.3}  | {}\n",
                row.0 as u8,
                row.1 as u8,
                level(c.expected.0),
                level(c.expected.1),
                c.from.0 as u8,
                c.from.1 as u8,
                c.o1,
                c.o2,
                c.drift * 1e3,
                if c.pass { "PASS" } else { "FAIL" }
            );
        }
    }
    s
}

fn bounded_delta(a: Bounded, b: Bounded) -> Option<f64> {
    relative_delta(a.value()?, b.value()?).ok()
}

fn pct(x: Option<f64>) -> Value {
    x.map_or(Value::Null, |v| json!(v * 100.0))
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring worker pool")?;
    }
    let config = sim_config(cli)?;
    let out = Output {
        out: cli.out.as_deref(),
        format: cli.format,
    };
    match &cli.command {
        Command::Cells {
            action: CellsAction::Dump { kind },
        } => {
            let text = serialize(&build_cell(*kind, &Sizing::default())?.netlist);
            match out.out {
                Some(_) => out.write(&format!("{kind}.sp"), &text)?,
                None => print!("{text}"),
            }
            Ok(true)
        }
        Command::Truthtable { cell } => {
            anyhow::ensure!(*cell == CellKind::Osc, "truth tables are available for `osc` only");
            let cases = osc_truth_table(&config)?;
            let ok = cases.iter().all(|c| c.pass);
            let report = envelope("truthtable", &config, cli, json!({"cell": cell}), &cases)?;
            match out.out {
                Some(_) => out.emit("truthtable", &report, None)?,
                None => print!("{}", truth_table_text(&cases)),
            }
            Ok(ok)
        }
        Command::Simulate {
            netlist,
            tstop,
            report,
        } => {
            let text = fs::read_to_string(netlist).with_context(|| format!("reading {}", netlist.display()))?;
            let net = parse_netlist(&text)?;
            let cfg = SimConfig {
                t_stop: *tstop,
                ..config.clone()
            };
            let nodes: Vec<&str> = report.iter().map(String::as_str).collect();
            let trace = transient(&net, &cfg, &nodes)?;
            let stem = netlist.file_stem().and_then(|s| s.to_str()).unwrap_or("waveform").to_string();
            match (out.out, cli.format) {
                (Some(_), _) => out.write(&format!("{stem}.csv"), &trace.to_csv())?,
                (None, Format::Csv) => print!("{}", trace.to_csv()),
                (None, Format::Json) => {
                    let report = envelope("simulate", &cfg, cli, json!({"netlist": netlist, "report": report}), &trace)?;
                    print!("{}", serde_json::to_string_pretty(&report)? + "\n");
                }
            }
            Ok(true)
        }
        Command::Campaign {
            latch,
            qinj,
            schedule,
            tstrike,
        } => {
            let mut spec = CampaignSpec::new(*latch, *qinj);
            if *schedule == ScheduleArg::Exhaustive {
                spec.schedule = Schedule::exhaustive(&build_cell(*latch, &Sizing::default())?, *tstrike);
            }
            let outcomes = run_campaign(&spec, &config)?;
            let rep = CampaignReport::new(*latch, *qinj, &outcomes);
            let ok = rep.recovered == rep.total;
            let mut csv = String::from(
                "node,t_start_ns,stored,phase,clock_first_fall_ns,polarity,classification,v_excursion_mV,t_recover_ps\n",
            );
            for o in &rep.outcomes {
                csv += &format!(
                    "{},{},{},{:?},{},{},{:?},{},{}\n",
                    o.node,
                    o.t_start_ns,
                    o.stored,
                    o.phase,
                    o.clock_first_fall_ns.map(|v| v.to_string()).unwrap_or_default(),
                    o.polarity,
                    o.classification,
                    o.v_excursion_mv,
                    o.t_recover_ps.map(|v| v.to_string()).unwrap_or_default()
                );
            }
            let args = json!({"latch": latch, "q_inj_C": qinj, "schedule": schedule, "t_strike_s": tstrike});
            out.emit("campaign", &envelope("campaign", &config, cli, args, &rep)?, Some(("campaign.csv", csv)))?;
            eprintln!(
                "{latch}: {}/{} recovered{}",
                rep.recovered,
                rep.total,
                if rep.outcomes.iter().any(|o| o.classification == Classification::Upset) {
                    " (upsets present)"
                } else {
                    ""
                }
            );
            Ok(ok)
        }
        Command::Metrics { latch, qmax } => {
            let (m, searches) = measure_latch_detailed(*latch, &config, *qmax)?;
            let result = json!({
                "metrics": MetricsReport::new(*latch, &m),
                "si": m,
                "qcrit_searches": searches,
            });
            let args = json!({"latch": latch, "q_max_C": qmax});
            out.emit("metrics", &envelope("metrics", &config, cli, args, result)?, None)?;
            Ok(true)
        }
        Command::Compare { latch, baseline, qmax } => {
            let (a, b) = rayon::join(
                || measure_latch(*latch, &config, *qmax),
                || measure_latch(*baseline, &config, *qmax),
            );
            let (a, b) = (a?, b?);
            let d = |x: f64, y: f64| relative_delta(x, y).ok();
            let deltas = json!({
                "power_pct": pct(d(a.power, b.power)),
                "t_setup_pct": pct(bounded_delta(a.t_setup, b.t_setup)),
                "t_hold_pct": pct(bounded_delta(a.t_hold, b.t_hold)),
                "t_dq_pct": pct(d(a.t_dq, b.t_dq)),
                "t_cq_pct": pct(d(a.t_cq, b.t_cq)),
                "t_avg_pct": pct(d(a.t_avg, b.t_avg)),
                "pdp_pct": pct(d(a.pdp, b.pdp)),
                "q_crit_pct": pct(bounded_delta(a.q_crit, b.q_crit)),
                "n_trans_pct": pct(d(a.transistor_count as f64, b.transistor_count as f64)),
            });
            let result = json!({
                "proposed": MetricsReport::new(*latch, &a),
                "compared": MetricsReport::new(*baseline, &b),
                "delta": deltas,
            });
            let args = json!({"latch": latch, "baseline": baseline, "q_max_C": qmax});
            out.emit("compare", &envelope("compare", &config, cli, args, result)?, None)?;
            Ok(true)
        }
        Command::Shortcircuit { latch } => {
            let i = short_circuit_protocol(*latch, &config)?;
            let result = json!({
                "latch": latch,
                "avg_current_uA": i * 1e6,
                "d_edges_ps": SC_D_EDGES.map(|t| t * 1e12),
                "window_ps": [SC_WINDOW.0 * 1e12, SC_WINDOW.1 * 1e12],
                "clk": "held high",
            });
            let csv = format!("latch,avg_current_uA\n{latch},{}\n", i * 1e6);
            let args = json!({"latch": latch});
            out.emit(
                "shortcircuit",
                &envelope("shortcircuit", &config, cli, args, result)?,
                Some(("shortcircuit.csv", csv)),
            )?;
            Ok(true)
        }
        Command::Pvt { latch, axis } => {
            let sweep = pvt_sweep(*latch, *axis, &config)?;
            let summary = json!({
                "latch": latch,
                "axis": axis,
                "points": sweep.points.len(),
                "invalid_points": sweep.invalid_points,
                "sigma_power_uW": sweep.sigma_power.map(|v| v * 1e6),
                "sigma_delay_ps": sweep.sigma_delay.map(|v| v * 1e12),
                "sweep": sweep,
            });
            if sweep.invalid_points > 0 {
                eprintln!("{} of {} points failed to simulate", sweep.invalid_points, sweep.points.len());
            }
            let args = json!({"latch": latch, "axis": axis});
            let csv_name = format!("pvt_{}.csv", axis.name());
            out.emit(
                &format!("pvt_{}", axis.name()),
                &envelope("pvt", &config, cli, args, summary)?,
                Some((&csv_name, sweep.to_csv())),
            )?;
            Ok(true)
        }
        Command::Mc {
            latch,
            samples,
            temp_mean,
            temp_sigma,
        } => {
            let defaults = McConfig::default();
            let mc = McConfig {
                n_samples: samples.unwrap_or(if cli.long { defaults.n_samples } else { 100 }),
                seed: cli.seed,
                temp_mean: temp_mean.unwrap_or(defaults.temp_mean),
                temp_sigma: temp_sigma.unwrap_or(defaults.temp_sigma),
                ..defaults
            };
            let mut cfg = config.clone();
            if cli.dt.is_none() && !cli.long {
                cfg.dt_nominal = MC_DESK_DT;
            }
            let r = monte_carlo(*latch, &mc, &cfg)?;
            if r.summary.n_excluded > 0 {
                eprintln!("{} of {} samples failed and were excluded", r.summary.n_excluded, mc.n_samples);
            }
            let s = &r.summary;
            let result = json!({
                "summary": s,
                "sigma_power_uW": s.sigma_power.map(|v| v * 1e6),
                "ad_power_uW": s.ad_power.map(|v| v * 1e6),
                "sigma_delay_ps": s.sigma_delay.map(|v| v * 1e12),
                "ad_delay_ps": s.ad_delay.map(|v| v * 1e12),
            });
            let args = json!({"latch": latch, "mc": mc});
            out.emit(
                "mc_summary",
                &envelope("mc", &cfg, cli, args, result)?,
                Some(("mc_samples.csv", r.samples_csv())),
            )?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
