//! End-to-end workflow steps: ringdown analysis of simulated or measured
//! channels, frequency scanning at a converter, controller design from the
//! fitted plant, and on/off validation of a designed controller.

use crate::dynsim::{run, Event, Macrogrid, SimOptions};
use crate::error::{Error, Result};
use crate::grid::PowerNetwork;
use crate::modal::{
    damping_report, decimate, default_prony_order, matrix_pencil, mode_shapes, preprocess, prony, DampingEntry,
    ModalEstimate, ModeShapeReport, PencilOptions, SHAPE_RESIDUAL_WARNING,
};
use crate::mode::Mode;
use crate::mtdc::{MtdcSystem, SdcAttachment, SequentialOptions};
use crate::scenario::{AnalysisConfig, DesignConfig, EstimatorChoice, FreqScanConfig};
use crate::sdc::{closed_loop_poles, design_sdc, required_sigma, ClosedLoop, DesignTarget, SdcParams};
use crate::sysid::{
    dominant_poles, estimate_frf, fit_tf, gen_multisine, FitOptions, FrequencyResponse, FrfEstimate, ProbeSignal,
    TransferFunctionModel,
};
use crate::timeseries::TimeSeriesSet;
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

/// Resolves channel patterns against `names`; a trailing `*` matches by
/// prefix and an empty pattern list selects everything.
pub fn match_channels(names: &[String], patterns: &[String]) -> Result<Vec<String>> {
    if patterns.is_empty() {
        return Ok(names.to_vec());
    }
    let mut out: Vec<String> = Vec::new();
    for p in patterns {
        let hits: Vec<&String> = match p.strip_suffix('*') {
            Some(prefix) => names.iter().filter(|n| n.starts_with(prefix)).collect(),
            None => names.iter().filter(|n| *n == p).collect(),
        };
        if hits.is_empty() {
            return Err(Error::UnknownChannel(p.clone()));
        }
        for h in hits {
            if !out.contains(h) {
                out.push(h.clone());
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct ChannelModes {
    pub channel: String,
    pub modes: Vec<Mode>,
    pub reconstruction_error: f64,
}

/// A mode seen in one or more channels; frequency and damping are medians
/// over the channels that contain it.
#[derive(Debug, Clone, Serialize)]
pub struct ConsensusMode {
    #[serde(flatten)]
    pub mode: Mode,
    pub channels: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RingdownReport {
    pub t_start: f64,
    pub window: f64,
    pub sample_rate_hz: f64,
    pub method: EstimatorChoice,
    pub modes: Vec<ConsensusMode>,
    pub damping: Vec<DampingEntry>,
    pub per_channel: Vec<ChannelModes>,
    #[serde(skip)]
    pub shapes: ModeShapeReport,
    pub warnings: Vec<String>,
}

impl RingdownReport {
    /// Consensus mode nearest `freq_hz`, if one lies within `tol_hz`.
    pub fn nearest(&self, freq_hz: f64, tol_hz: f64) -> Option<&ConsensusMode> {
        nearest_by(&self.modes, |m| m.mode.freq_hz, freq_hz, tol_hz)
    }

    pub fn channel(&self, name: &str) -> Option<&ChannelModes> {
        self.per_channel.iter().find(|c| c.channel == name)
    }
}

fn nearest_by<T, F: Fn(&T) -> f64>(items: &[T], f: F, target: f64, tol: f64) -> Option<&T> {
    items
        .iter()
        .filter(|m| (f(m) - target).abs() <= tol)
        .min_by(|a, b| (f(a) - target).abs().total_cmp(&(f(b) - target).abs()))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn estimate(x: &[f64], dt: f64, cfg: &AnalysisConfig) -> Result<ModalEstimate> {
    match cfg.method {
        EstimatorChoice::Prony => {
            prony(x, dt, cfg.prony_order.unwrap_or_else(|| default_prony_order(cfg.expected_modes)))
        }
        EstimatorChoice::MatrixPencil => matrix_pencil(
            x,
            dt,
            &PencilOptions { pencil: None, sv_cutoff: cfg.pencil_cutoff, order: cfg.pencil_order },
        ),
    }
}

/// Cuts the ringdown window, decimates, removes the mean and, when
/// `cfg.prefilter` is set, band-passes every channel.
pub fn ringdown_window(ts: &TimeSeriesSet, t_start: f64, cfg: &AnalysisConfig) -> Result<TimeSeriesSet> {
    let names = match_channels(&ts.names, &cfg.channels)?;
    let avail = ts.t_end() - t_start;
    if !(avail > 0.0) {
        return Err(Error::Window(format!("ringdown start {t_start} s is past the end of the record")));
    }
    let win = ts.select(&names)?.slice(t_start, cfg.window.min(avail))?;
    let factor = ((1.0 / (win.dt * cfg.sample_rate_hz)).round() as usize).max(1);
    let mut w = decimate(&win, factor)?;
    for d in &mut w.data {
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        d.iter_mut().for_each(|v| *v -= mean);
    }
    if cfg.prefilter {
        w = preprocess(&w, (cfg.band[0], cfg.band[1]))?;
    }
    Ok(w)
}

/// Estimates modes channel by channel, keeps those in the analysis band with
/// at least `min_energy` relative energy, and merges them across channels by
/// frequency. Mode shapes are fitted for the merged modes.
pub fn analyze_ringdown(ts: &TimeSeriesSet, t_start: f64, cfg: &AnalysisConfig) -> Result<RingdownReport> {
    let w = ringdown_window(ts, t_start, cfg)?;
    let (lo, hi) = (cfg.band[0], cfg.band[1]);
    let mut per_channel = Vec::new();
    let mut warnings = Vec::new();
    let mut pool: Vec<Mode> = Vec::new();
    for (name, x) in w.names.iter().zip(&w.data) {
        if x.iter().all(|v| v.abs() < 1e-12) {
            warnings.push(format!("{name}: no excursion, skipped"));
            continue;
        }
        match estimate(x, w.dt, cfg) {
            Ok(est) => {
                let modes: Vec<Mode> = est
                    .modes
                    .iter()
                    .filter(|m| m.is_oscillatory() && m.freq_hz >= lo && m.freq_hz <= hi && m.energy >= cfg.min_energy)
                    .copied()
                    .collect();
                let modes = strongest_per_cluster(modes, cfg.merge_tolerance_hz);
                pool.extend(&modes);
                per_channel.push(ChannelModes {
                    channel: name.clone(),
                    modes,
                    reconstruction_error: est.reconstruction_error,
                });
            }
            Err(e) => warnings.push(format!("{name}: {e}")),
        }
    }
    if per_channel.is_empty() {
        return Err(Error::NoModes);
    }
    let modes = merge(pool, cfg.merge_tolerance_hz);
    let plain: Vec<Mode> = modes.iter().map(|m| m.mode).collect();
    let damping = damping_report(&plain, cfg.zeta_min);
    let shapes = if plain.is_empty() {
        ModeShapeReport::default()
    } else {
        mode_shapes(&w, &plain, SHAPE_RESIDUAL_WARNING)?
    };
    Ok(RingdownReport {
        t_start,
        window: w.t_end() - w.t0,
        sample_rate_hz: 1.0 / w.dt,
        method: cfg.method,
        modes,
        damping,
        per_channel,
        shapes,
        warnings,
    })
}

/// Keeps, among modes of one channel closer than `tol` in frequency, only the
/// most energetic one.
fn strongest_per_cluster(mut modes: Vec<Mode>, tol: f64) -> Vec<Mode> {
    modes.sort_by(|a, b| b.energy.total_cmp(&a.energy));
    let mut kept: Vec<Mode> = Vec::new();
    for m in modes {
        if kept.iter().all(|k| (k.freq_hz - m.freq_hz).abs() > tol) {
            kept.push(m);
        }
    }
    kept
}

/// Groups modes whose frequencies chain within `tol` of the group's first.
fn merge(mut pool: Vec<Mode>, tol: f64) -> Vec<ConsensusMode> {
    pool.sort_by(|a, b| a.freq_hz.total_cmp(&b.freq_hz));
    let mut groups: Vec<Vec<Mode>> = Vec::new();
    for m in pool {
        match groups.last_mut() {
            Some(g) if m.freq_hz - g[0].freq_hz <= tol => g.push(m),
            _ => groups.push(vec![m]),
        }
    }
    groups
        .into_iter()
        .map(|g| {
            let f = median(g.iter().map(|m| m.freq_hz).collect());
            let z = median(g.iter().map(|m| m.damping_ratio).collect());
            let w = 2.0 * PI * f;
            let sigma = z * w / (1.0 - z * z).max(1e-12).sqrt();
            let energy = g.iter().map(|m| m.energy).fold(0.0, f64::max);
            ConsensusMode { mode: Mode::new(f, sigma).with_energy(energy), channels: g.len() }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FreqScanResult {
    pub converter: String,
    pub output: String,
    pub seed: u64,
    pub probe: ProbeSignal,
    pub frf: FrfEstimate,
    pub tf: TransferFunctionModel,
    /// Oscillatory poles of the fitted model, lowest damping first.
    pub poles: Vec<Mode>,
}

/// Builds the dynamic model with every supplementary controller disengaged.
pub fn build_open_loop(
    areas: &[PowerNetwork],
    sys: &MtdcSystem,
    pf: &SequentialOptions,
) -> Result<(Macrogrid, Vec<f64>)> {
    let (mut model, x0) = Macrogrid::build(areas, sys, pf)?;
    model.set_sdc_enabled(false);
    Ok((model, x0))
}

/// Injects a multisine into the converter's power reference, records the
/// output channel and fits a transfer function to the empirical response.
///
/// The first probe period is discarded as transient and the following
/// `periods` are averaged. Output is the deviation of the channel from its
/// nominal value.
pub fn freqscan(
    areas: &[PowerNetwork],
    sys: &MtdcSystem,
    pf: &SequentialOptions,
    cfg: &FreqScanConfig,
    sim: &SimOptions,
    seed: u64,
) -> Result<FreqScanResult> {
    let (model, x0) = build_open_loop(areas, sys, pf)?;
    freqscan_model(&model, &x0, cfg, sim, seed)
}

pub fn freqscan_model(
    model: &Macrogrid,
    x0: &[f64],
    cfg: &FreqScanConfig,
    sim: &SimOptions,
    seed: u64,
) -> Result<FreqScanResult> {
    let k = model.converter_index(&cfg.converter)?;
    let rating = model.sys.converters[k].rating_mw;
    let signal = model.resolve(&cfg.output)?;
    let probe = gen_multisine(
        (cfg.band[0], cfg.band[1]),
        cfg.step,
        (cfg.amplitude[0] * rating, cfg.amplitude[1] * rating),
        seed,
        Some(cfg.peak_clamp * rating),
    )?;
    let period = probe.period();
    let periods = cfg.periods.max(1);
    let duration = period * (periods + 1) as f64;
    let ev = Event::Probe { converter: cfg.converter.clone(), signal: probe.clone(), t_on: 0.0 };
    let res = run(model, x0, &[ev], duration, std::slice::from_ref(&cfg.output), sim)?;
    let ts = &res.series;
    let nominal = model.signal_nominal(signal);
    let n_per = (period / ts.dt).round() as usize;
    let start = ts.len() - periods * n_per;
    let y: Vec<f64> = ts.data[0][start..start + periods * n_per].iter().map(|v| v - nominal).collect();
    let u: Vec<f64> = (start..start + periods * n_per).map(|i| probe.value(ts.time(i))).collect();
    let frf = estimate_frf(&u, &y, ts.dt, &probe.freqs, periods)?;
    let fit_band = cfg.fit_band.unwrap_or(cfg.band);
    let (f, v): (Vec<f64>, Vec<Complex64>) = frf
        .frf
        .freqs
        .iter()
        .zip(&frf.frf.values)
        .filter(|(f, _)| **f >= fit_band[0] - 1e-9 && **f <= fit_band[1] + 1e-9)
        .map(|(f, v)| (*f, *v))
        .unzip();
    let sub = FrequencyResponse::new(f, v)?;
    let tf = fit_tf(&sub, cfg.order[0], cfg.order[1], &FitOptions::default())?;
    let poles = dominant_poles(&tf).into_iter().filter(|m| m.is_oscillatory()).collect();
    Ok(FreqScanResult { converter: cfg.converter.clone(), output: cfg.output.clone(), seed, probe, frf, tf, poles })
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignSummary {
    pub params: SdcParams,
    pub open_loop: Mode,
    pub lambda_cl: Complex64,
    pub sigma_required: f64,
    /// `|1 + G(λ_CL)·H(λ_CL)|`.
    pub placement_residual: f64,
    pub closed_loop: ClosedLoop,
}

/// Picks the open-loop pole to move: the oscillatory pole nearest
/// `target_freq_hz` when set, otherwise the least damped one inside `band`.
pub fn select_open_loop_mode(tf: &TransferFunctionModel, band: [f64; 2], target_freq_hz: Option<f64>) -> Result<Mode> {
    let cands: Vec<Mode> = dominant_poles(tf)
        .into_iter()
        .filter(|m| m.is_oscillatory() && m.freq_hz >= band[0] && m.freq_hz <= band[1])
        .collect();
    let pick = match target_freq_hz {
        Some(f) => cands.iter().min_by(|a, b| (a.freq_hz - f).abs().total_cmp(&(b.freq_hz - f).abs())),
        None => cands.first(),
    };
    pick.copied()
        .ok_or_else(|| Error::InfeasibleDesign(format!("no oscillatory plant pole in {:?} Hz", band)))
}

/// Designs the controller for the selected open-loop mode, placing the
/// closed-loop pole at `σ_factor × σ_required` on the same frequency.
pub fn design_from_tf(tf: &TransferFunctionModel, band: [f64; 2], cfg: &DesignConfig) -> Result<DesignSummary> {
    let ol = select_open_loop_mode(tf, band, cfg.target_freq_hz)?;
    let sigma_required = required_sigma(ol.omega(), cfg.zeta_target)?;
    let target = DesignTarget {
        lambda_ol: ol.eigenvalue(),
        zeta_target: cfg.zeta_target,
        sigma_cl: Some(cfg.sigma_factor * sigma_required),
    };
    let lambda_cl = target.lambda_cl()?;
    let params = design_sdc(tf, &target, &cfg.options())?;
    let placement_residual = (1.0 + tf.eval(lambda_cl) * crate::sdc::eval_sdc(&params, lambda_cl)).norm();
    let closed_loop = closed_loop_poles(tf, &params);
    Ok(DesignSummary { params, open_loop: ol, lambda_cl, sigma_required, placement_residual, closed_loop })
}

/// Damping of one mode with the controller off and on.
#[derive(Debug, Clone, Serialize)]
pub struct ModeComparison {
    pub freq_hz: f64,
    pub zeta_off: f64,
    pub zeta_on: Option<f64>,
    /// `(ζ_off − ζ_on)/ζ_off`; positive is a loss of damping.
    pub degradation: Option<f64>,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunComparison {
    pub disturbance: String,
    pub off: Option<Mode>,
    pub on: Option<Mode>,
    pub settling_off: Option<f64>,
    pub settling_on: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub converter: String,
    pub feedback: String,
    pub target_freq_hz: f64,
    pub zeta_target: f64,
    pub primary: RunComparison,
    pub improvement: Option<f64>,
    pub target_met: bool,
    pub others: Vec<ModeComparison>,
    pub others_ok: bool,
    pub max_degradation: f64,
    pub contingency: Option<RunComparison>,
    /// Targeted-mode damping required after the contingency.
    pub contingency_zeta_min: f64,
    pub contingency_met: Option<bool>,
    /// Electromechanical eigenvalues of the linearized model, off and on.
    pub linearized: Vec<ModeComparison>,
    #[serde(skip)]
    pub series_off: TimeSeriesSet,
    #[serde(skip)]
    pub series_on: TimeSeriesSet,
}

#[derive(Debug, Clone)]
pub struct ValidationSetup<'a> {
    pub areas: &'a [PowerNetwork],
    pub sys: &'a MtdcSystem,
    pub powerflow: SequentialOptions,
    pub converter: &'a str,
    pub feedback: &'a str,
    pub params: &'a SdcParams,
    pub disturbance: &'a Event,
    pub contingency: Option<&'a Event>,
    pub duration: f64,
    pub sim: SimOptions,
    pub analysis: &'a AnalysisConfig,
    /// Open-loop frequency of the targeted mode, Hz.
    pub target_freq_hz: f64,
    pub zeta_target: f64,
    pub match_tolerance_hz: f64,
    pub max_degradation: f64,
    pub contingency_zeta_min: f64,
}

/// Returns `sys` with the controller attached to `converter`.
pub fn attach_sdc(sys: &MtdcSystem, converter: &str, params: &SdcParams, feedback: &str) -> Result<MtdcSystem> {
    let mut out = sys.clone();
    let k = out.converter_index(converter)?;
    out.converters[k].sdc = Some(SdcAttachment { params: params.clone(), feedback: feedback.to_string(), enabled: true });
    out.finalize()
}

struct Outcome {
    series: TimeSeriesSet,
    report: RingdownReport,
    target: Option<Mode>,
    settling: Option<f64>,
}

/// Time after `t0` at which the channel last leaves a ±5 % band around its
/// final value, relative to its largest excursion.
fn settling_time(ts: &TimeSeriesSet, channel: &str, t0: f64) -> Option<f64> {
    let x = ts.channel(channel).ok()?;
    let k0 = ((t0 - ts.t0) / ts.dt).ceil().max(0.0) as usize;
    let tail = x.get(k0..)?;
    let fin = *tail.last()?;
    let peak = tail.iter().map(|v| (v - fin).abs()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Some(0.0);
    }
    let last = tail.iter().rposition(|v| (v - fin).abs() > 0.05 * peak)?;
    Some((last + 1) as f64 * ts.dt)
}

fn simulate_and_analyze(
    setup: &ValidationSetup,
    analysis: &AnalysisConfig,
    model: &Macrogrid,
    x0: &[f64],
    ev: &Event,
    channels: &[String],
) -> Result<Outcome> {
    let res = run(model, x0, std::slice::from_ref(ev), setup.duration, channels, &setup.sim)?;
    let report = analyze_ringdown(&res.series, ev.release(), analysis)?;
    let target = report
        .channel(setup.feedback)
        .and_then(|c| nearest_by(&c.modes, |m| m.freq_hz, setup.target_freq_hz, setup.match_tolerance_hz).copied());
    let settling = settling_time(&res.series, setup.feedback, ev.release());
    Ok(Outcome { series: res.series, report, target, settling })
}

fn compare(off: &[Mode], on: &[Mode], skip_hz: f64, tol: f64, max_deg: f64) -> Vec<ModeComparison> {
    off.iter()
        .filter(|m| (m.freq_hz - skip_hz).abs() > tol)
        .map(|m| {
            let hit = nearest_by(on, |x| x.freq_hz, m.freq_hz, tol);
            let zeta_on = hit.map(|h| h.damping_ratio);
            let degradation = zeta_on.map(|z| (m.damping_ratio - z) / m.damping_ratio);
            ModeComparison {
                freq_hz: m.freq_hz,
                zeta_off: m.damping_ratio,
                zeta_on,
                degradation,
                ok: degradation.map_or(true, |d| d <= max_deg),
            }
        })
        .collect()
}

fn electromechanical(model: &Macrogrid, x0: &[f64], band: [f64; 2]) -> Result<Vec<Mode>> {
    Ok(model
        .linearize(x0)?
        .into_iter()
        .filter(|z| z.im > 0.0)
        .map(Mode::from_eigenvalue)
        .filter(|m| m.freq_hz >= band[0] && m.freq_hz <= band[1])
        .collect())
}

/// Simulates the disturbance with the controller off and on, estimates the
/// targeted mode in the feedback channel both ways and checks the other
/// modes for lost damping. An optional contingency is rerun the same way.
pub fn validate_design(setup: &ValidationSetup) -> Result<ValidationReport> {
    let sys_sdc = attach_sdc(setup.sys, setup.converter, setup.params, setup.feedback)?;
    let (mut model_on, x0) = Macrogrid::build(setup.areas, &sys_sdc, &setup.powerflow)?;
    model_on.set_sdc_enabled(true);
    let mut model_off = model_on.clone();
    model_off.set_sdc_enabled(false);

    let mut analysis = setup.analysis.clone();
    if !analysis.channels.is_empty() && !analysis.channels.iter().any(|c| c == setup.feedback) {
        analysis.channels.push(setup.feedback.to_string());
    }
    let channels = model_on.expand_channels(&analysis.channels)?;

    let (off, on) = rayon::join(
        || simulate_and_analyze(setup, &analysis, &model_off, &x0, setup.disturbance, &channels),
        || simulate_and_analyze(setup, &analysis, &model_on, &x0, setup.disturbance, &channels),
    );
    let (off, on) = (off?, on?);
    let off_target = off.target.ok_or_else(|| Error::NotObservable {
        channel: setup.feedback.to_string(),
        freq_hz: setup.target_freq_hz,
    })?;

    let tol = setup.match_tolerance_hz;
    let plain = |r: &RingdownReport| r.modes.iter().map(|m| m.mode).collect::<Vec<_>>();
    let others = compare(&plain(&off.report), &plain(&on.report), off_target.freq_hz, tol, setup.max_degradation);
    let others_ok = others.iter().all(|c| c.ok);

    let lin_off = electromechanical(&model_off, &x0, setup.analysis.band)?;
    let lin_on = electromechanical(&model_on, &x0, setup.analysis.band)?;
    let linearized = compare(&lin_off, &lin_on, off_target.freq_hz, tol, setup.max_degradation);

    let contingency = match setup.contingency {
        Some(ev) => {
            let (c_off, c_on) = rayon::join(
                || simulate_and_analyze(setup, &analysis, &model_off, &x0, ev, &channels),
                || simulate_and_analyze(setup, &analysis, &model_on, &x0, ev, &channels),
            );
            let (c_off, c_on) = (c_off?, c_on?);
            Some(RunComparison {
                disturbance: ev.label(),
                off: c_off.target,
                on: c_on.target,
                settling_off: c_off.settling,
                settling_on: c_on.settling,
            })
        }
        None => None,
    };
    let contingency_met =
        contingency.as_ref().map(|c| c.on.is_some_and(|m| m.damping_ratio >= setup.contingency_zeta_min));

    let improvement = on.target.map(|m| m.damping_ratio - off_target.damping_ratio);
    let target_met = on.target.is_some_and(|m| m.damping_ratio >= setup.zeta_target);
    Ok(ValidationReport {
        converter: setup.converter.to_string(),
        feedback: setup.feedback.to_string(),
        target_freq_hz: setup.target_freq_hz,
        zeta_target: setup.zeta_target,
        primary: RunComparison {
            disturbance: setup.disturbance.label(),
            off: Some(off_target),
            on: on.target,
            settling_off: off.settling,
            settling_on: on.settling,
        },
        improvement,
        target_met,
        others,
        others_ok,
        max_degradation: setup.max_degradation,
        contingency,
        contingency_zeta_min: setup.contingency_zeta_min,
        contingency_met,
        linearized,
        series_off: off.series,
        series_on: on.series,
    })
}
