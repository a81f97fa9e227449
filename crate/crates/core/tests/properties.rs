use latchsim::devices::{mosfet_gm_gds, mosfet_ids};
use latchsim::metrics::{avg_current, avg_dev, relative_delta, stddev};
use latchsim::netlist::{Capacitor, DoubleExp, ISource, Mosfet, PulseSpec, VSource};
use latchsim::{parse_netlist, serialize, Device, EnvCondition, MosfetParams, Netlist, Polarity, Trace, Waveform};
use proptest::prelude::*;

const NODES: [&str; 6] = ["0", "vdd", "a", "b", "q", "n_1"];

fn node() -> impl Strategy<Value = String> {
    prop::sample::select(&NODES[..]).prop_map(str::to_string)
}

fn waveform() -> impl Strategy<Value = Waveform> {
    prop_oneof![
        (-2.0..2.0f64).prop_map(|v| Waveform::Dc { v }),
        (0.0..1.0f64, 0.0..1e-9f64, 1e-12..1e-11f64, 1e-12..1e-11f64).prop_map(|(v2, td, tr, tf)| {
            Waveform::Pulse(PulseSpec {
                v1: 0.0,
                v2,
                t_delay: td,
                t_rise: tr,
                t_fall: tf,
                t_width: 2e-10,
                period: 5e-10,
            })
        }),
        prop::collection::vec((1e-13..1e-10f64, -1.0..1.0f64), 1..5).prop_map(|steps| {
            let mut t = 0.0;
            Waveform::Pwl(
                steps
                    .into_iter()
                    .map(|(dt, v)| {
                        let p = (t, v);
                        t += dt;
                        p
                    })
                    .collect(),
            )
        }),
        (1e-16..1e-13f64, 1e-14..1e-12f64, any::<bool>()).prop_map(|(q, t0, neg)| {
            Waveform::DoubleExp(DoubleExp {
                q_inj: q,
                tau1: 1e-13,
                tau2: 3e-12,
                t_start: t0,
                sign: if neg { -1.0 } else { 1.0 },
            })
        }),
    ]
}

#[derive(Debug, Clone)]
enum Spec {
    Mos(String, String, String, bool, f64),
    Cap(String, String, f64),
    V(String, Waveform),
    I(String, String, Waveform),
}

fn device() -> impl Strategy<Value = Spec> {
    prop_oneof![
        (node(), node(), node(), any::<bool>(), 0.25..16.0f64).prop_map(|(d, g, s, p, wl)| Spec::Mos(d, g, s, p, wl)),
        (node(), node(), 1e-18..1e-12f64).prop_map(|(a, b, c)| Spec::Cap(a, b, c)),
        (node(), waveform()).prop_map(|(n, w)| Spec::V(n, w)),
        (node(), node(), waveform()).prop_map(|(a, b, w)| Spec::I(a, b, w)),
    ]
}

fn build(specs: &[Spec]) -> Netlist {
    let mut n = Netlist::new("random");
    for (k, s) in specs.iter().enumerate() {
        let d = match s.clone() {
            Spec::Mos(drain, gate, source, p, w_over_l) => {
                let polarity = if p { Polarity::P } else { Polarity::N };
                Device::Mosfet(Mosfet {
                    name: format!("m{k}"),
                    drain,
                    gate,
                    source,
                    polarity,
                    w_over_l,
                    model: polarity.default_model().into(),
                })
            }
            Spec::Cap(n1, n2, value) => Device::Capacitor(Capacitor {
                name: format!("c{k}"),
                n1,
                n2,
                value,
            }),
            Spec::V(n_plus, waveform) => Device::VSource(VSource {
                name: format!("v{k}"),
                n_plus,
                n_minus: "0".into(),
                waveform,
            }),
            Spec::I(n_plus, n_minus, waveform) => Device::ISource(ISource {
                name: format!("i{k}"),
                n_plus,
                n_minus,
                waveform,
            }),
        };
        n.add(d).unwrap();
    }
    n
}

fn population_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn netlist_round_trips(specs in prop::collection::vec(device(), 0..12)) {
        let n = build(&specs);
        let text = serialize(&n);
        let back = parse_netlist(&text).unwrap();
        prop_assert_eq!(&back.devices, &n.devices);
        prop_assert_eq!(serialize(&back), text);
    }

    #[test]
    fn mosfet_derivatives_match_finite_differences(
        vgs in -1.0..1.0f64,
        vds in -1.0..1.0f64,
        wl in 0.5..8.0f64,
        temp in -40.0..150.0f64,
        pmos in any::<bool>(),
    ) {
        let p = if pmos { MosfetParams::default_pmos() } else { MosfetParams::default_nmos() };
        let env = EnvCondition { temperature: temp, ..EnvCondition::default() };
        // stay clear of the kinks at threshold and vds = 0 / vds = vov
        let vth = latchsim::devices::effective_vth(&p, &env);
        let vov = if pmos { vth - vgs } else { vgs - vth };
        prop_assume!(vov.abs() > 1e-3 && vds.abs() > 1e-3);
        prop_assume!((vds.abs() - vov.abs()).abs() > 1e-3);
        let h = 1e-7;
        let f = |g: f64, d: f64| mosfet_ids(&p, &env, wl, g, d);
        let gm_fd = (f(vgs + h, vds) - f(vgs - h, vds)) / (2.0 * h);
        let gds_fd = (f(vgs, vds + h) - f(vgs, vds - h)) / (2.0 * h);
        let (gm, gds) = mosfet_gm_gds(&p, &env, wl, vgs, vds);
        let scale = gm.abs().max(gds.abs()).max(1e-9);
        prop_assert!((gm - gm_fd).abs() <= 1e-5 * scale, "gm {} vs {}", gm, gm_fd);
        prop_assert!((gds - gds_fd).abs() <= 1e-5 * scale, "gds {} vs {}", gds, gds_fd);
    }

    #[test]
    fn deviation_statistics(xs in prop::collection::vec(-1e3..1e3f64, 1..60), shift in -1e3..1e3f64, k in -10.0..10.0f64) {
        let s = stddev(&xs).unwrap();
        let ad = avg_dev(&xs).unwrap();
        prop_assert!(ad >= 0.0);
        prop_assert!(ad <= s * (1.0 + 1e-12) + 1e-12);
        let oracle = population_sd(&xs);
        prop_assert!((s - oracle).abs() <= 1e-9 * oracle.max(1e-300) + 1e-12);
        let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        prop_assert!((stddev(&shifted).unwrap() - s).abs() <= 1e-9 * (1.0 + s));
        prop_assert!((avg_dev(&shifted).unwrap() - ad).abs() <= 1e-9 * (1.0 + ad));
        let scaled: Vec<f64> = xs.iter().map(|x| x * k).collect();
        prop_assert!((stddev(&scaled).unwrap() - k.abs() * s).abs() <= 1e-9 * (1.0 + k.abs() * s));
        prop_assert!((avg_dev(&scaled).unwrap() - k.abs() * ad).abs() <= 1e-9 * (1.0 + k.abs() * ad));
    }

    #[test]
    fn avg_current_ignores_sign(currents in prop::collection::vec(-1e-5..1e-5f64, 2..40)) {
        let times: Vec<f64> = (0..currents.len()).map(|k| k as f64 * 1e-12).collect();
        let t1 = *times.last().unwrap();
        let flipped: Vec<f64> = currents.iter().map(|i| -i).collect();
        let a = avg_current(&Trace::from_supply(times.clone(), "vdd", currents).unwrap(), 0.0, t1, "vdd").unwrap();
        let b = avg_current(&Trace::from_supply(times, "vdd", flipped).unwrap(), 0.0, t1, "vdd").unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn relative_delta_of_equal_values_is_zero(x in prop::num::f64::NORMAL) {
        prop_assert_eq!(relative_delta(x, x).unwrap(), 0.0);
    }
}
