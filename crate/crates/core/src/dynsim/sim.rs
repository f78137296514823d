use super::event::{schedule, Event};
use super::model::{Macrogrid, Signal, Snapshot};
use crate::error::{Error, Result};
use crate::grid::PowerNetwork;
use crate::mtdc::{MtdcSystem, SequentialOptions};
use crate::timeseries::TimeSeriesSet;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimOptions {
    /// Integration step, s.
    pub dt: f64,
    /// Recorder output rate, Hz.
    pub output_rate_hz: f64,
    /// Any state whose magnitude exceeds this is treated as divergence.
    pub state_bound: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { dt: 1e-3, output_rate_hz: 100.0, state_bound: 1e3 }
    }
}

impl SimOptions {
    /// Integration steps per recorded sample.
    pub fn decimation(&self) -> Result<usize> {
        let m = 1.0 / (self.output_rate_hz * self.dt);
        let r = m.round();
        if !(r >= 1.0) || (m - r).abs() > 1e-9 * r {
            return Err(Error::Validation(format!(
                "output rate {} Hz is not an integer divisor of the step rate {} Hz",
                self.output_rate_hz,
                1.0 / self.dt
            )));
        }
        Ok(r as usize)
    }
}

/// Entry of the applied-event log.
#[derive(Debug, Clone, Serialize)]
pub struct EventRecord {
    pub t: f64,
    pub step: usize,
    pub action: String,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub series: TimeSeriesSet,
    pub log: Vec<EventRecord>,
    pub final_state: Vec<f64>,
}

/// Solves the powerflow, initializes the dynamic model and runs `events`.
pub fn simulate(
    areas: &[PowerNetwork],
    sys: &MtdcSystem,
    events: &[Event],
    duration: f64,
    channels: &[String],
    opts: &SimOptions,
) -> Result<TimeSeriesSet> {
    let (model, x0) = Macrogrid::build(areas, sys, &SequentialOptions::default())?;
    Ok(run(&model, &x0, events, duration, channels, opts)?.series)
}

enum Action {
    BrakeOn { area: usize, bus: usize, mw: f64, id: usize },
    BrakeOff { area: usize, bus: usize, id: usize },
    GenTrip { area: usize, unit: usize },
    BranchTrip { area: usize, branch: usize },
    PulseOn { conv: usize, dp: f64 },
    PulseOff { conv: usize, dp: f64 },
}

struct Scheduled {
    step: usize,
    action: Action,
    label: String,
}

struct ActiveProbe {
    conv: usize,
    signal: crate::sysid::ProbeSignal,
    t_on: f64,
}

fn step_of(t: f64, dt: f64) -> usize {
    (t / dt).round() as usize
}

/// Integrates `model` from `x0` for `duration` seconds.
///
/// Events fire at the step nearest their scheduled time; simultaneous
/// events apply in declaration order. Brakes and pulses hold for an integer
/// number of steps. Probes are evaluated at every RK4 stage.
pub fn run(
    model: &Macrogrid,
    x0: &[f64],
    events: &[Event],
    duration: f64,
    channels: &[String],
    opts: &SimOptions,
) -> Result<SimResult> {
    let dt = opts.dt;
    if !(dt > 0.0) || !(duration > 0.0) {
        return Err(Error::Validation("step and duration must be positive".into()));
    }
    let tau = model.fastest_time_constant();
    if dt > tau / 5.0 + 1e-15 {
        return Err(Error::Validation(format!("step {dt} s does not resolve the fastest time constant {tau} s")));
    }
    let m = opts.decimation()?;
    let names = model.expand_channels(channels)?;
    let signals: Vec<Signal> = names.iter().map(|n| model.resolve(n)).collect::<Result<_>>()?;
    let mut model = model.clone();

    let mut plan: Vec<Scheduled> = Vec::new();
    let mut probes: Vec<ActiveProbe> = Vec::new();
    for (id, ev) in schedule(events).into_iter().enumerate() {
        ev.validate()?;
        let label = ev.label();
        match &ev {
            Event::BrakeInsertion { area, bus, mw, t_on, duration } => {
                let a = model.area_index(area)?;
                let b = model.areas[a].net.bus_index(bus)?;
                let on = step_of(*t_on, dt);
                let off = on + step_of(*duration, dt).max(1);
                plan.push(Scheduled { step: on, action: Action::BrakeOn { area: a, bus: b, mw: *mw, id }, label: label.clone() });
                plan.push(Scheduled { step: off, action: Action::BrakeOff { area: a, bus: b, id }, label: format!("remove {label}") });
            }
            Event::GenTrip { area, unit, t } => {
                let a = model.area_index(area)?;
                let u = model.areas[a].net.machine_index(unit)?;
                plan.push(Scheduled { step: step_of(*t, dt), action: Action::GenTrip { area: a, unit: u }, label });
            }
            Event::BranchTrip { area, branch, t } => {
                let a = model.area_index(area)?;
                let br = model.areas[a].net.branch_index(branch)?;
                plan.push(Scheduled { step: step_of(*t, dt), action: Action::BranchTrip { area: a, branch: br }, label });
            }
            Event::Pulse { converter, delta_mw, t_on, duration } => {
                let k = model.converter_index(converter)?;
                let dp = delta_mw / model.sys.system_mva;
                let on = step_of(*t_on, dt);
                let off = on + step_of(*duration, dt).max(1);
                plan.push(Scheduled { step: on, action: Action::PulseOn { conv: k, dp }, label: label.clone() });
                plan.push(Scheduled { step: off, action: Action::PulseOff { conv: k, dp }, label: format!("end {label}") });
            }
            Event::Probe { converter, signal, t_on } => {
                let k = model.converter_index(converter)?;
                probes.push(ActiveProbe { conv: k, signal: signal.clone(), t_on: *t_on });
            }
        }
    }
    // Stable: removals scheduled at the same step as later insertions keep
    // their relative order from the sorted event list.
    plan.sort_by_key(|s| s.step);
    if probes.len() > 1 {
        return Err(Error::Validation("only one probe event per run is supported".into()));
    }

    let h = m / 2;
    let n_out = (duration * opts.output_rate_hz + 1e-9).floor() as usize + 1;
    let n_steps = (n_out - 1) * m + h;
    let mut fine: Vec<Vec<f64>> = vec![Vec::with_capacity(n_steps + h + 1); signals.len()];
    let mut brakes: Vec<(usize, Complex64)> = Vec::new();
    let mut log = Vec::new();
    // Left-limit values at steps where events make signals jump.
    let mut jumps: std::collections::HashMap<usize, Vec<f64>> = std::collections::HashMap::new();

    let mut x = x0.to_vec();
    let n = x.len();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut next = 0;

    let probe_at = |probes: &[ActiveProbe], t: f64| -> Option<(usize, f64)> {
        probes.iter().find(|p| t >= p.t_on).map(|p| (p.conv, p.signal.value(t - p.t_on)))
    };

    let record = |fine: &mut Vec<Vec<f64>>, model: &Macrogrid, x: &[f64], snap: &Snapshot| {
        for (buf, s) in fine.iter_mut().zip(&signals) {
            buf.push(model.signal_value(x, snap, *s));
        }
    };

    for step in 0..=n_steps {
        let t = step as f64 * dt;
        // Brakes are sized from the voltages before any same-step event, so
        // simultaneous events commute.
        let pre = if next < plan.len() && plan[next].step == step { Some(model.snapshot(&x)?) } else { None };
        if let Some(snap) = &pre {
            let idx = step + h;
            jumps.insert(idx, signals.iter().map(|s| model.signal_value(&x, snap, *s)).collect::<Vec<f64>>());
        }
        while next < plan.len() && plan[next].step == step {
            let s = &plan[next];
            apply(&mut model, pre.as_ref().expect("snapshot taken"), &s.action, &mut brakes)?;
            log.push(EventRecord { t, step, action: s.label.clone() });
            next += 1;
        }
        let snap = model.rhs(&x, t, probe_at(&probes, t), &mut k1)?;
        if step == 0 {
            // Equilibrium before the run pads the first averaging windows.
            for _ in 0..h {
                record(&mut fine, &model, &x, &snap);
            }
        }
        record(&mut fine, &model, &x, &snap);
        if step == n_steps {
            break;
        }
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        model.rhs(&tmp, t + 0.5 * dt, probe_at(&probes, t + 0.5 * dt), &mut k2)?;
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        model.rhs(&tmp, t + 0.5 * dt, probe_at(&probes, t + 0.5 * dt), &mut k3)?;
        for i in 0..n {
            tmp[i] = x[i] + dt * k3[i];
        }
        model.rhs(&tmp, t + dt, probe_at(&probes, t + dt), &mut k4)?;
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite() || v.abs() > opts.state_bound) {
            return Err(Error::Divergence { t: t + dt, detail: format!("state {i} = {}", x[i]) });
        }
    }

    // Trapezoidal mean over one output period centred on each sample,
    // using one-sided values where a signal jumps.
    let mut series = TimeSeriesSet::new(0.0, 1.0 / opts.output_rate_hz);
    for (ch, (name, buf)) in names.iter().zip(&fine).enumerate() {
        let left = |i: usize| jumps.get(&i).map_or(buf[i], |v| v[ch]);
        let out: Vec<f64> = (0..n_out)
            .map(|j| {
                let c = j * m + h;
                if h == 0 {
                    return buf[c];
                }
                let mut s = 0.5 * (buf[c - h] + left(c + h));
                for i in c - h + 1..c + h {
                    s += 0.5 * (left(i) + buf[i]);
                }
                s / (2 * h) as f64
            })
            .collect();
        series.push(name.clone(), out)?;
    }
    Ok(SimResult { series, log, final_state: x })
}

fn apply(model: &mut Macrogrid, snap: &Snapshot, action: &Action, brakes: &mut Vec<(usize, Complex64)>) -> Result<()> {
    match *action {
        Action::BrakeOn { area, bus, mw, id } => {
            let v = snap.areas[area].v[bus].norm();
            let y = Complex64::new(mw / model.sys.system_mva / (v * v), 0.0);
            brakes.push((id, y));
            let mut topo = model.areas[area].topology().clone();
            topo.shunts[bus] += y;
            model.area_mut(area).set_topology(topo)
        }
        Action::BrakeOff { area, bus, id } => {
            let pos = brakes.iter().position(|b| b.0 == id).expect("brake inserted before removal");
            let (_, y) = brakes.remove(pos);
            let mut topo = model.areas[area].topology().clone();
            topo.shunts[bus] -= y;
            model.area_mut(area).set_topology(topo)
        }
        Action::GenTrip { area, unit } => {
            let mut topo = model.areas[area].topology().clone();
            if !topo.tripped_machines.contains(&unit) {
                topo.tripped_machines.push(unit);
            }
            model.area_mut(area).set_topology(topo)
        }
        Action::BranchTrip { area, branch } => {
            let mut topo = model.areas[area].topology().clone();
            if !topo.tripped_branches.contains(&branch) {
                topo.tripped_branches.push(branch);
            }
            model.area_mut(area).set_topology(topo)
        }
        Action::PulseOn { conv, dp } => {
            model.dp_ext[conv] += dp;
            Ok(())
        }
        Action::PulseOff { conv, dp } => {
            model.dp_ext[conv] -= dp;
            Ok(())
        }
    }
}

/// Default ringdown window length, s.
pub const RINGDOWN_SECONDS: f64 = 20.0;

/// Slice of `ts` that starts when `event` releases the system.
pub fn ringdown_window(ts: &TimeSeriesSet, event: &Event, length: f64) -> Result<TimeSeriesSet> {
    ts.slice(event.release(), length)
}
