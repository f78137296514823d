use crate::output::{num, Staged};
use crate::{Cli, Command, Failure, Method};
use macrogrid::dynsim::{self, EventRecord, Macrogrid};
use macrogrid::modal::{match_modes, MatchedMode, ModeShapeReport};
use macrogrid::pipeline::{analyze_ringdown, design_from_tf, freqscan, validate_design, DesignSummary, RingdownReport, ValidationSetup};
use macrogrid::scenario::{AnalysisConfig, DesignConfig, EstimatorChoice, Scenario};
use macrogrid::sequential_acdc_powerflow;
use macrogrid::timeseries::TimeSeriesSet;
use macrogrid::{Mode, SdcParams, TransferFunctionModel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let staged = match &cli.command {
        Command::Powerflow => powerflow(&scenario(cli)?)?,
        Command::Simulate { duration } => simulate(&scenario(cli)?, cli.seed, *duration)?,
        Command::Analyze { inputs, t_start, method, window } => {
            let sc = optional_scenario(cli)?;
            analyze(cli, sc.as_ref(), inputs, *t_start, *method, *window)?
        }
        Command::Freqscan { converter, output } => freqscan_cmd(&scenario(cli)?, cli.seed, converter, output)?,
        Command::Design { tf, zeta, target_freq } => {
            let sc = optional_scenario(cli)?;
            design(cli, sc.as_ref(), tf.as_deref(), *zeta, *target_freq)?
        }
        Command::Validate { params, target_freq } => validate(cli, &scenario(cli)?, params.as_deref(), *target_freq)?,
    };
    for path in staged.commit(&cli.out_dir)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn scenario(cli: &Cli) -> Result<Scenario, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| Failure::Usage("this command needs --config".into()))?;
    Ok(Scenario::load(path)?)
}

fn optional_scenario(cli: &Cli) -> Result<Option<Scenario>, Failure> {
    cli.config.as_ref().map(Scenario::load).transpose().map_err(Failure::from)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct AreaSummary {
    area: String,
    iterations: usize,
    mismatch: f64,
    branch_loss_mw: f64,
}

#[derive(Serialize)]
struct PowerflowSummary {
    scenario: String,
    config_hash: String,
    outer_iterations: usize,
    areas: Vec<AreaSummary>,
    dc_iterations: usize,
    dc_mismatch: f64,
    scheduled_transfer_mw: f64,
    dc_line_loss_mw: f64,
    converter_loss_mw: f64,
    /// DC line loss over scheduled transfer.
    loss_fraction: f64,
    slack_power_mw: f64,
}

fn powerflow(sc: &Scenario) -> Result<Staged, Failure> {
    let sys = &sc.sys;
    let mva = sys.system_mva;
    let st = sequential_acdc_powerflow(&sc.areas, sys, &sc.config.powerflow.options())?;
    let mut out = Staged::default();

    let mut buses = Vec::new();
    let mut branches = Vec::new();
    for (net, sol) in sc.areas.iter().zip(&st.ac) {
        for i in 0..sol.bus_names.len() {
            buses.push(vec![
                net.name.clone(),
                sol.bus_names[i].clone(),
                num(sol.v[i]),
                num(sol.theta[i].to_degrees()),
                num(sol.p_gen[i] * mva),
                num(sol.q_gen[i] * mva),
                num(sol.p_load[i] * mva),
                num(sol.q_load[i] * mva),
                num(sol.p_net[i] * mva),
                num(sol.q_net[i] * mva),
            ]);
        }
        for b in &sol.branches {
            branches.push(vec![
                net.name.clone(),
                b.name.clone(),
                num(b.p_from * mva),
                num(b.q_from * mva),
                num(b.p_to * mva),
                num(b.q_to * mva),
                num(b.loss * mva),
            ]);
        }
    }
    out.table(
        "powerflow_buses.csv",
        &["area", "bus", "v_pu", "theta_deg", "p_gen_mw", "q_gen_mvar", "p_load_mw", "q_load_mvar", "p_net_mw", "q_net_mvar"],
        buses,
    );
    out.table(
        "powerflow_branches.csv",
        &["area", "branch", "p_from_mw", "q_from_mvar", "p_to_mw", "q_to_mvar", "loss_mw"],
        branches,
    );

    let dc = &st.dc;
    out.table(
        "powerflow_dc_nodes.csv",
        &["node", "v_pu", "v_kv", "injection_mw"],
        (0..dc.node_names.len()).map(|i| {
            vec![dc.node_names[i].clone(), num(dc.v[i]), num(dc.v[i] * sys.base_kv), num(dc.injection[i] * mva)]
        }),
    );
    out.table(
        "powerflow_dc_lines.csv",
        &["line", "from", "to", "current_pu", "loss_mw"],
        sys.lines.iter().enumerate().map(|(k, l)| {
            vec![l.name.clone(), l.from.clone(), l.to.clone(), num(dc.line_current[k]), num(dc.line_loss[k] * mva)]
        }),
    );
    let p_dc = st.converter_p_dc(sys);
    let conv_loss: Vec<f64> = (0..sys.converters.len()).map(|k| -p_dc[k] - st.converter_s[k].re).collect();
    out.table(
        "powerflow_converters.csv",
        &["converter", "area", "ac_bus", "mode", "p_ac_mw", "q_ac_mvar", "p_dc_mw", "loss_mw"],
        sys.converters.iter().enumerate().map(|(k, c)| {
            vec![
                c.name.clone(),
                c.area.clone(),
                c.ac_bus.clone(),
                format!("{:?}", c.mode).to_lowercase(),
                num(st.converter_s[k].re * mva),
                num(st.converter_s[k].im * mva),
                num(p_dc[k] * mva),
                num(conv_loss[k] * mva),
            ]
        }),
    );

    let transfer = sys.scheduled_transfer_mw();
    let line_loss = dc.total_loss * mva;
    let summary = PowerflowSummary {
        scenario: sc.config.name.clone(),
        config_hash: sc.hash.clone(),
        outer_iterations: st.outer_iterations,
        areas: sc
            .areas
            .iter()
            .zip(&st.ac)
            .map(|(n, s)| AreaSummary {
                area: n.name.clone(),
                iterations: s.iterations,
                mismatch: s.mismatch,
                branch_loss_mw: s.total_branch_loss() * mva,
            })
            .collect(),
        dc_iterations: dc.iterations,
        dc_mismatch: dc.mismatch,
        scheduled_transfer_mw: transfer,
        dc_line_loss_mw: line_loss,
        converter_loss_mw: conv_loss.iter().sum::<f64>() * mva,
        loss_fraction: if transfer > 0.0 { line_loss / transfer } else { 0.0 },
        slack_power_mw: dc.slack_power * mva,
    };
    println!(
        "converged in {} outer iterations; DC loss {:.1} MW ({:.2}% of {:.0} MW scheduled)",
        summary.outer_iterations,
        line_loss,
        100.0 * summary.loss_fraction,
        transfer
    );
    out.json("powerflow_summary.json", &summary)?;
    Ok(out)
}

#[derive(Serialize)]
struct SimManifest<'a> {
    scenario: &'a str,
    config: String,
    config_hash: &'a str,
    seed: u64,
    duration: f64,
    dt: f64,
    output_rate_hz: f64,
    samples: usize,
    channels: &'a [String],
    events: &'a [macrogrid::dynsim::Event],
    event_log: &'a [EventRecord],
}

fn simulate(sc: &Scenario, seed: Option<u64>, duration: Option<f64>) -> Result<Staged, Failure> {
    let cfg = &sc.config;
    let (model, x0) = Macrogrid::build(&sc.areas, &sc.sys, &cfg.powerflow.options())?;
    let duration = duration.unwrap_or(cfg.simulation.duration);
    let res = dynsim::run(&model, &x0, &cfg.events, duration, &cfg.channels, &cfg.simulation.options())?;
    let mut csv = Vec::new();
    res.series.write_csv(&mut csv)?;
    let mut out = Staged::default();
    out.bytes("simulation.csv", csv);
    out.json(
        "simulation_manifest.json",
        &SimManifest {
            scenario: &cfg.name,
            config: sc.source.display().to_string(),
            config_hash: &sc.hash,
            seed: sc.seed(seed),
            duration,
            dt: cfg.simulation.dt,
            output_rate_hz: cfg.simulation.output_rate_hz,
            samples: res.series.len(),
            channels: &res.series.names,
            events: &cfg.events,
            event_log: &res.log,
        },
    )?;
    println!("simulated {duration} s, {} channels, {} events applied", res.series.n_channels(), res.log.len());
    Ok(out)
}

#[derive(Serialize)]
struct AnalysisOutput<'a> {
    input: String,
    #[serde(flatten)]
    report: &'a RingdownReport,
    shapes: &'a ModeShapeReport,
}

fn analyze(
    cli: &Cli,
    sc: Option<&Scenario>,
    inputs: &[PathBuf],
    t_start: Option<f64>,
    method: Option<Method>,
    window: Option<f64>,
) -> Result<Staged, Failure> {
    let mut cfg = sc.map(|s| s.config.analysis.clone()).unwrap_or_default();
    if let Some(m) = method {
        cfg.method = match m {
            Method::Prony => EstimatorChoice::Prony,
            Method::MatrixPencil => EstimatorChoice::MatrixPencil,
        };
    }
    if let Some(w) = window {
        cfg.window = w;
    }
    let t_start = t_start
        .or_else(|| sc.and_then(|s| s.config.events.first()).map(|e| e.release()))
        .unwrap_or(0.0);
    let inputs: Vec<PathBuf> =
        if inputs.is_empty() { vec![cli.out_dir.join("simulation.csv")] } else { inputs.to_vec() };

    let reports: Vec<RingdownReport> = inputs
        .par_iter()
        .map(|p| analyze_file(p, t_start, &cfg))
        .collect::<Result<_, _>>()?;

    let mut out = Staged::default();
    let single = inputs.len() == 1;
    for (path, rep) in inputs.iter().zip(&reports) {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let (json, csv) =
            if single { ("modes.json".into(), "mode_shapes.csv".into()) } else { (format!("modes_{stem}.json"), format!("mode_shapes_{stem}.csv")) };
        out.json(&json, &AnalysisOutput { input: path.display().to_string(), report: rep, shapes: &rep.shapes })?;
        let mut buf = Vec::new();
        rep.shapes.write_csv(&mut buf)?;
        out.bytes(&csv, buf);
        for d in &rep.damping {
            let flag = if d.growing { "  GROWING" } else if d.critical { "  CRITICAL" } else { "" };
            println!("{stem}: {:.3} Hz  zeta {:.4}{flag}", d.mode.freq_hz, d.mode.damping_ratio);
        }
    }
    if !single {
        let per_event: Vec<Vec<Mode>> = reports.iter().map(|r| r.modes.iter().map(|m| m.mode).collect()).collect();
        let matched: Vec<MatchedMode> = match_modes(&per_event, cfg.merge_tolerance_hz);
        out.json("modes_matched.json", &matched)?;
    }
    Ok(out)
}

fn analyze_file(path: &Path, t_start: f64, cfg: &AnalysisConfig) -> Result<RingdownReport, Failure> {
    let file = std::fs::File::open(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let ts = TimeSeriesSet::read_csv(std::io::BufReader::new(file))?;
    Ok(analyze_ringdown(&ts, t_start, cfg)?)
}

#[derive(Serialize)]
struct ScanSummary<'a> {
    converter: &'a str,
    output: &'a str,
    config_hash: &'a str,
    seed: u64,
    tones: usize,
    probe_period_s: f64,
    fit_band: [f64; 2],
    order: [usize; 2],
    peak_freq_hz: Option<f64>,
    poles: &'a [Mode],
    quality: Option<&'a macrogrid::sysid::FitQuality>,
    dropped_bins_hz: &'a [f64],
    warnings: &'a [String],
}

fn freqscan_cmd(sc: &Scenario, seed: Option<u64>, converter: &Option<String>, output: &Option<String>) -> Result<Staged, Failure> {
    let cfg = &sc.config;
    let mut fs = cfg.freqscan.clone().ok_or_else(|| Failure::Usage("scenario has no [freqscan] section".into()))?;
    if let Some(c) = converter {
        fs.converter = c.clone();
    }
    if let Some(o) = output {
        fs.output = o.clone();
    }
    let seed = fs.seed.or(seed).unwrap_or(cfg.seed);
    let scan = freqscan(&sc.areas, &sc.sys, &cfg.powerflow.options(), &fs, &cfg.simulation.options(), seed)?;

    let mut out = Staged::default();
    let frf = &scan.frf.frf;
    out.table(
        "frf.csv",
        &["freq_hz", "re", "im", "mag_db", "phase_deg", "coherence"],
        frf.freqs.iter().zip(&frf.values).zip(&scan.frf.coherence).map(|((f, h), c)| {
            vec![num(*f), num(h.re), num(h.im), num(20.0 * h.norm().log10()), num(h.arg().to_degrees()), num(*c)]
        }),
    );
    out.json("tf.json", &scan.tf)?;
    out.json(
        "freqscan.json",
        &ScanSummary {
            converter: &fs.converter,
            output: &fs.output,
            config_hash: &sc.hash,
            seed,
            tones: scan.probe.freqs.len(),
            probe_period_s: scan.probe.period(),
            fit_band: fs.fit_band.unwrap_or(fs.band),
            order: fs.order,
            peak_freq_hz: frf.peak_freq(),
            poles: &scan.poles,
            quality: scan.tf.quality.as_ref(),
            dropped_bins_hz: &scan.frf.dropped,
            warnings: &scan.frf.warnings,
        },
    )?;
    if let Some(q) = &scan.tf.quality {
        println!(
            "fit: max magnitude error {:.2}%, max phase error {:.2} deg{}",
            100.0 * q.max_mag_error,
            q.max_phase_error_deg,
            if q.passed { "" } else { " (quality gate FAILED)" }
        );
    }
    for p in &scan.poles {
        println!("pole {:.3} Hz  zeta {:.4}", p.freq_hz, p.damping_ratio);
    }
    Ok(out)
}

fn design(
    cli: &Cli,
    sc: Option<&Scenario>,
    tf: Option<&Path>,
    zeta: Option<f64>,
    target_freq: Option<f64>,
) -> Result<Staged, Failure> {
    let tf_path = tf.map(Path::to_path_buf).unwrap_or_else(|| cli.out_dir.join("tf.json"));
    let model: TransferFunctionModel = read_json(&tf_path)?;
    let mut cfg: DesignConfig = sc.map(|s| s.config.design.clone()).unwrap_or_default();
    if let Some(z) = zeta {
        cfg.zeta_target = z;
    }
    if target_freq.is_some() {
        cfg.target_freq_hz = target_freq;
    }
    let band = sc.map(|s| s.config.analysis.band).unwrap_or(AnalysisConfig::default().band);
    if model.quality.as_ref().is_some_and(|q| !q.passed) {
        eprintln!("warning: the transfer function failed its fit-quality gate");
    }
    let d: DesignSummary = design_from_tf(&model, band, &cfg)?;
    println!(
        "K = {:.4} MW/Hz, T1 = {:.4} s, T2 = {:.4} s, m = {}; mode {:.3} Hz zeta {:.4} -> predicted {:.4}",
        d.params.k,
        d.params.t1,
        d.params.t2,
        d.params.m,
        d.open_loop.freq_hz,
        d.open_loop.damping_ratio,
        d.closed_loop.dominant.map_or(f64::NAN, |m| m.damping_ratio)
    );
    let mut out = Staged::default();
    out.json("sdc_params.json", &d.params)?;
    out.json("design.json", &d)?;
    Ok(out)
}

#[derive(Deserialize)]
struct DesignFile {
    open_loop: Mode,
}

fn validate(cli: &Cli, sc: &Scenario, params: Option<&Path>, target_freq: Option<f64>) -> Result<Staged, Failure> {
    let cfg = &sc.config;
    let v = cfg.validation.as_ref().ok_or_else(|| Failure::Usage("scenario has no [validation] section".into()))?;
    let params_path = params.map(Path::to_path_buf).unwrap_or_else(|| cli.out_dir.join("sdc_params.json"));
    let p: SdcParams = read_json(&params_path)?;
    p.validate()?;
    let design_file = params_path.with_file_name("design.json");
    let target_freq_hz = match target_freq.or(cfg.design.target_freq_hz) {
        Some(f) => f,
        None if design_file.exists() => read_json::<DesignFile>(&design_file)?.open_loop.freq_hz,
        None => return Err(Failure::Usage("targeted mode unknown: pass --target-freq or keep design.json next to the parameters".into())),
    };
    let setup = ValidationSetup {
        areas: &sc.areas,
        sys: &sc.sys,
        powerflow: cfg.powerflow.options(),
        converter: &v.converter,
        feedback: &v.feedback,
        params: &p,
        disturbance: &v.disturbance,
        contingency: v.contingency.as_ref(),
        duration: v.duration,
        sim: cfg.simulation.options(),
        analysis: &cfg.analysis,
        target_freq_hz,
        zeta_target: cfg.design.zeta_target,
        match_tolerance_hz: v.match_tolerance_hz,
        max_degradation: v.max_degradation,
        contingency_zeta_min: v.contingency_zeta_min,
    };
    let rep = validate_design(&setup)?;
    let z = |m: Option<Mode>| m.map_or("n/a".to_string(), |m| format!("{:.4}", m.damping_ratio));
    println!(
        "targeted {:.3} Hz: zeta {} -> {} (target {}, {})",
        target_freq_hz,
        z(rep.primary.off),
        z(rep.primary.on),
        rep.zeta_target,
        if rep.target_met { "met" } else { "NOT met" }
    );
    println!("other modes: {}", if rep.others_ok { "no excessive degradation" } else { "DEGRADED" });
    if let (Some(c), Some(ok)) = (&rep.contingency, rep.contingency_met) {
        println!("contingency ({}): zeta {} -> {} ({})", c.disturbance, z(c.off), z(c.on), if ok { "met" } else { "NOT met" });
    }
    let mut out = Staged::default();
    out.json("validation.json", &rep)?;
    let mut off = Vec::new();
    rep.series_off.write_csv(&mut off)?;
    out.bytes("validation_off.csv", off);
    let mut on = Vec::new();
    rep.series_on.write_csv(&mut on)?;
    out.bytes("validation_on.csv", on);
    Ok(out)
}
