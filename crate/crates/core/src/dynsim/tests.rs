use super::*;
use crate::grid::{BusKind, Exciter, Governor, Load, PowerNetwork};
use crate::mtdc::{dc_powerflow, DcOptions, MtdcSystem, SdcAttachment, SequentialOptions, VscConverter};
use crate::sdc::SdcParams;
use crate::timeseries::TimeSeriesSet;

fn area(name: &str, load_mw: f64) -> PowerNetwork {
    use crate::grid::fixtures::{bus, line, machine};
    let p = |s: &str| format!("{name}{s}");
    let mut net = PowerNetwork::new(
        name,
        1000.0,
        vec![bus(&p("1"), BusKind::Slack), bus(&p("2"), BusKind::Pv), bus(&p("3"), BusKind::Pq)],
    );
    net.branches.push(line(&p("12"), &p("1"), &p("2"), 0.005, 0.05));
    net.branches.push(line(&p("23"), &p("2"), &p("3"), 0.003, 0.03));
    net.branches.push(line(&p("13"), &p("1"), &p("3"), 0.004, 0.04));
    for (g, b, mva, disp, h) in [("G1", "1", 3000.0, 0.0, 5.0), ("G2", "2", 2000.0, 0.4 * load_mw, 4.0)] {
        let mut m = machine(&p(g), &p(b), mva, disp, h, 2.0);
        m.governor = Some(Governor { droop: 0.05, time_const: 0.5 });
        m.exciter = Some(Exciter { gain: 20.0, time_const: 0.5 });
        net.machines.push(m);
    }
    net.loads.push(Load { name: p("L3"), bus: p("3"), p_mw: load_mw, q_mvar: 0.2 * load_mw });
    net.finalize().unwrap()
}

fn system(with_sdc: Option<SdcParams>) -> (Vec<PowerNetwork>, MtdcSystem) {
    use crate::mtdc::fixtures::{line, node};
    let mut sys = MtdcSystem::new(640.0, 1000.0, vec![node("D1", 50.0), node("D2", 50.0), node("D3", 50.0)]);
    sys.lines.push(line("D12", "D1", "D2", 500.0));
    sys.lines.push(line("D23", "D2", "D3", 400.0));
    sys.lines.push(line("D13", "D1", "D3", 300.0));
    let mut ca = VscConverter::pq("Ca", "D2", "a", "a3", 2000.0, -500.0);
    if let Some(p) = with_sdc {
        ca.sdc = Some(SdcAttachment { params: p, feedback: "a.freq.a3".into(), enabled: true });
    }
    sys.converters = vec![
        VscConverter::slack("Cs", "D1", "b", "b3", 2000.0),
        ca,
        VscConverter::pq("Cb", "D3", "b", "b2", 2000.0, 200.0),
    ];
    for c in &mut sys.converters {
        c.loss_coeff = 0.005;
    }
    (vec![area("a", 1500.0), area("b", 1200.0)], sys.finalize().unwrap())
}

fn build(with_sdc: Option<SdcParams>) -> (Macrogrid, Vec<f64>) {
    let (areas, sys) = system(with_sdc);
    Macrogrid::build(&areas, &sys, &SequentialOptions::default()).unwrap()
}

fn brake(t_on: f64) -> Event {
    Event::BrakeInsertion { area: "a".into(), bus: "a3".into(), mw: 1200.0, t_on, duration: 0.5 }
}

/// Channels in pu: frequencies over nominal, powers over the system base.
fn per_unit(ts: &TimeSeriesSet) -> Vec<(String, Vec<f64>)> {
    ts.names
        .iter()
        .zip(&ts.data)
        .map(|(n, d)| {
            let scale = if n.contains(".freq.") {
                60.0
            } else if n.starts_with("mtdc.p") || n.starts_with("mtdc.q") || n.contains(".pe.") {
                1000.0
            } else {
                1.0
            };
            (n.clone(), d.iter().map(|v| v / scale).collect())
        })
        .collect()
}

#[test]
fn equilibrium_is_exact() {
    let (m, x) = build(None);
    let mut dx = vec![0.0; x.len()];
    m.rhs(&x, 0.0, None, &mut dx).unwrap();
    let worst = dx.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn flat_run_without_events() {
    let (m, x) = build(None);
    let r = run(&m, &x, &[], 5.0, &[], &SimOptions::default()).unwrap();
    for (name, d) in per_unit(&r.series) {
        let spread = d.iter().fold(0.0f64, |a, v| a.max((v - d[0]).abs()));
        assert!(spread < 1e-9, "{name} drifts by {spread}");
    }
}

#[test]
fn brake_returns_to_pre_event_state() {
    let (m, x) = build(None);
    let chans: Vec<String> = ["a.freq.*", "b.freq.*", "a.vm.*", "b.vm.*", "mtdc.p.*", "mtdc.vdc.*", "a.pe.*"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let r = run(&m, &x, &[brake(1.0)], 80.0, &chans, &SimOptions::default()).unwrap();
    let ts = per_unit(&r.series);
    let moved = ts.iter().any(|(_, d)| d.iter().any(|v| (v - d[0]).abs() > 1e-3));
    assert!(moved, "brake had no visible effect");
    for (name, d) in ts {
        let end = *d.last().unwrap();
        assert!((end - d[0]).abs() < 1e-4, "{name}: {} -> {end}", d[0]);
    }
}

#[test]
fn halving_the_step_changes_little() {
    let (m, x) = build(None);
    let ev = [brake(0.5)];
    let a = run(&m, &x, &ev, 6.0, &[], &SimOptions::default()).unwrap();
    let b = run(&m, &x, &ev, 6.0, &[], &SimOptions { dt: 5e-4, ..Default::default() }).unwrap();
    for ((name, u), (_, v)) in per_unit(&a.series).iter().zip(per_unit(&b.series)) {
        let (k, d) = u.iter().zip(&v).map(|(p, q)| (p - q).abs()).enumerate().fold((0, 0.0f64), |a, b| if b.1 > a.1 { b } else { a });
        assert!(d < 1e-5, "{name}: {d} at sample {k}: {:?} vs {:?}", &u[k.saturating_sub(2)..k + 3], &v[k.saturating_sub(2)..k + 3]);
    }
}

#[test]
fn rk4_converges_at_high_order() {
    let (m, mut x) = build(None);
    // Smooth free response from a perturbed rotor angle and speed.
    let off = m.area_offset(0);
    x[off] += 0.05;
    x[off + 1] += 1e-3;
    let end = |dt: f64| {
        let o = SimOptions { dt, output_rate_hz: 1.0 / dt, ..Default::default() };
        run(&m, &x, &[], 1.0, &["a.freq.a1".to_string()], &o).unwrap().final_state
    };
    let reference = end(1.25e-4);
    let err = |dt: f64| {
        end(dt).iter().zip(&reference).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()))
    };
    let (e1, e2) = (err(2e-3), err(1e-3));
    let order = (e1 / e2).log2();
    assert!(order >= 3.0, "observed order {order} ({e1:e}, {e2:e})");
}

#[test]
fn reruns_are_bit_identical() {
    let (m, x) = build(None);
    let a = run(&m, &x, &[brake(0.2)], 3.0, &[], &SimOptions::default()).unwrap();
    let b = run(&m, &x, &[brake(0.2)], 3.0, &[], &SimOptions::default()).unwrap();
    assert_eq!(a.series, b.series);
}

#[test]
fn simultaneous_events_commute() {
    let (m, x) = build(None);
    let e1 = brake(0.5);
    let e2 = Event::BrakeInsertion { area: "b".into(), bus: "b2".into(), mw: 800.0, t_on: 0.5, duration: 0.3 };
    let e3 = Event::Pulse { converter: "Cb".into(), delta_mw: 100.0, t_on: 0.2, duration: 1.0 };
    let a = run(&m, &x, &[e1.clone(), e2.clone(), e3.clone()], 3.0, &[], &SimOptions::default()).unwrap();
    let b = run(&m, &x, &[e3, e2, e1], 3.0, &[], &SimOptions::default()).unwrap();
    assert_eq!(a.series, b.series);
}

#[test]
fn zero_sdc_output_is_bit_identical_to_no_sdc() {
    let p = SdcParams { k: 0.0, t1: 0.2, t2: 0.1, tw: 10.0, m: 2, output_limit_mw: None };
    let (m0, x0) = build(None);
    let (m1, x1) = build(Some(p));
    let chans = m0.channel_names();
    let ev = [brake(0.5)];
    let a = run(&m0, &x0, &ev, 3.0, &chans, &SimOptions::default()).unwrap();
    let b = run(&m1, &x1, &ev, 3.0, &chans, &SimOptions::default()).unwrap();
    assert_eq!(a.series, b.series);

    let p = SdcParams { k: 200.0, ..SdcParams { k: 0.0, t1: 0.2, t2: 0.1, tw: 10.0, m: 2, output_limit_mw: None } };
    let (mut m2, x2) = build(Some(p));
    m2.set_sdc_enabled(false);
    let c = run(&m2, &x2, &ev, 3.0, &chans, &SimOptions::default()).unwrap();
    assert_eq!(a.series, c.series);
}

#[test]
fn sdc_acts_when_enabled() {
    let p = SdcParams { k: 200.0, t1: 0.2, t2: 0.1, tw: 10.0, m: 1, output_limit_mw: None };
    let (m, x) = build(Some(p));
    let r = run(&m, &x, &[brake(0.5)], 3.0, &["mtdc.sdc.Ca".to_string()], &SimOptions::default()).unwrap();
    let y = r.series.channel("mtdc.sdc.Ca").unwrap();
    assert_eq!(y[0], 0.0);
    assert!(y.iter().any(|v| v.abs() > 1.0));
    assert!(y.iter().all(|v| v.abs() <= 200.0 + 1e-9));
}

#[test]
fn dc_settles_to_powerflow_solution() {
    let (m, x) = build(None);
    let ev = [Event::Pulse { converter: "Ca".into(), delta_mw: -150.0, t_on: 0.5, duration: 100.0 }];
    let r = run(&m, &x, &ev, 40.0, &[], &SimOptions::default()).unwrap();
    let snap = m.snapshot(&r.final_state).unwrap();
    let p_dc: Vec<f64> = snap.converters.iter().map(|c| c.p_dc * 1000.0).collect();
    let dc = dc_powerflow(&m.sys, &p_dc, &DcOptions::default()).unwrap();
    let n = m.dc.n_nodes();
    let o = r.final_state.len() - m.dc.n_states();
    for i in 0..n {
        assert!((r.final_state[o + i] - dc.v[i]).abs() < 1e-6);
    }
    let pa = snap.converters[1].p_ac * 1000.0;
    assert!((pa - (-650.0)).abs() < 1.0, "{pa}");
}

#[test]
fn divergence_reports_time() {
    let (m, x) = build(None);
    let o = SimOptions { state_bound: 0.5, ..Default::default() };
    match run(&m, &x, &[], 1.0, &[], &o) {
        Err(crate::Error::Divergence { t, .. }) => assert!(t > 0.0 && t < 0.01),
        other => panic!("{other:?}"),
    }
}

#[test]
fn coarse_step_rejected() {
    let (m, x) = build(None);
    let o = SimOptions { dt: 0.01, output_rate_hz: 100.0, ..Default::default() };
    assert!(run(&m, &x, &[], 1.0, &[], &o).is_err());
}

#[test]
fn unknown_channel_rejected() {
    let (m, x) = build(None);
    let r = run(&m, &x, &[], 1.0, &["a.freq.nowhere".to_string()], &SimOptions::default());
    assert!(matches!(r, Err(crate::Error::UnknownChannel(_))));
}

#[test]
fn ringdown_windows() {
    let mut ts = TimeSeriesSet::new(0.0, 0.01);
    ts.push("x", vec![0.0; 3001]).unwrap();
    let w = ringdown_window(&ts, &brake(5.0), RINGDOWN_SECONDS).unwrap();
    assert!((w.t0 - 5.5).abs() < 1e-12 && (w.t_end() - 25.5).abs() < 1e-9);
    let trip = Event::GenTrip { area: "a".into(), unit: "aG2".into(), t: 10.0 };
    assert!((ringdown_window(&ts, &trip, RINGDOWN_SECONDS).unwrap().t0 - 10.0).abs() < 1e-12);
    assert!(ringdown_window(&ts, &trip, 25.0).is_err());
}

#[test]
fn generator_trip_and_branch_trip_run() {
    let (m, x) = build(None);
    let ev = [
        Event::GenTrip { area: "a".into(), unit: "aG2".into(), t: 0.5 },
        Event::BranchTrip { area: "b".into(), branch: "b13".into(), t: 1.0 },
    ];
    let r = run(&m, &x, &ev, 5.0, &["a.freq.a1".to_string()], &SimOptions::default()).unwrap();
    assert_eq!(r.log.len(), 2);
    let f = r.series.channel("a.freq.a1").unwrap();
    assert!(f.iter().cloned().fold(f64::INFINITY, f64::min) < 59.95);
}

/// Every eigenvalue is stable apart from the common angle reference of each
/// area, and the fastest one is resolved by the default step.
#[test]
fn linearization_is_stable_and_resolved() {
    let (m, x) = build(None);
    let ev = m.linearize(&x).unwrap();
    let near_zero = ev.iter().filter(|e| e.norm() < 1e-6).count();
    assert!(near_zero <= m.areas.len());
    assert!(ev.iter().filter(|e| e.norm() >= 1e-6).all(|e| e.re < 0.0));
    let fastest = ev.iter().map(|e| e.re.abs()).fold(0.0, f64::max);
    assert!(SimOptions::default().dt <= 1.0 / fastest / 5.0);
}
