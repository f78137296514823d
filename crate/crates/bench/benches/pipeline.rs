use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use macrogrid::modal::{matrix_pencil, prony, PencilOptions};
use macrogrid::mode::sigma_for;
use macrogrid::mtdc::DcOptions;
use macrogrid::scenario::Scenario;
use macrogrid::sdc::{design_sdc, DesignOptions, DesignTarget};
use macrogrid::sysid::{fit_tf, FitOptions, FrequencyResponse, TransferFunctionModel};
use macrogrid::{dc_powerflow, sequential_acdc_powerflow};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::path::Path;

fn ringdown() -> Vec<f64> {
    let modes = [(1.0, 0.84, 0.034), (0.6, 0.74, 0.056), (0.4, 0.3, 0.15)];
    (0..600)
        .map(|k| {
            let t = k as f64 * 0.05;
            modes.iter().map(|&(a, f, z)| a * (-sigma_for(2.0 * PI * f, z) * t).exp() * (2.0 * PI * f * t).cos()).sum()
        })
        .collect()
}

fn modal(c: &mut Criterion) {
    let x = ringdown();
    c.bench_function("prony_600_samples_order_10", |b| b.iter(|| prony(black_box(&x), 0.05, 10).unwrap()));
    c.bench_function("matrix_pencil_600_samples", |b| {
        b.iter(|| matrix_pencil(black_box(&x), 0.05, &PencilOptions::default()).unwrap())
    });
}

fn sysid(c: &mut Criterion) {
    let truth = TransferFunctionModel::new(vec![0.01, 0.0], vec![1.0, 0.532, 0.266 * 0.266 + 4.69 * 4.69]);
    let grid: Vec<f64> = (5..=300).map(|k| k as f64 * 0.01).collect();
    let frf = FrequencyResponse::from_fn(&grid, |s| truth.eval(s));
    c.bench_function("fit_tf_296_bins_order_1_2", |b| b.iter(|| fit_tf(black_box(&frf), 1, 2, &FitOptions::default()).unwrap()));
    let target = DesignTarget::new(Complex64::new(-0.266, 4.69), 0.15);
    c.bench_function("design_sdc", |b| b.iter(|| design_sdc(black_box(&truth), &target, &DesignOptions::default()).unwrap()));
}

fn powerflow(c: &mut Criterion) {
    let sc = Scenario::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/reference/scenario.toml")).unwrap();
    let setpoints: Vec<f64> = sc.sys.converters.iter().map(|k| -k.p_mw).collect();
    c.bench_function("dc_powerflow_13_nodes", |b| {
        b.iter(|| dc_powerflow(black_box(&sc.sys), &setpoints, &DcOptions::default()).unwrap())
    });
    let opts = sc.config.powerflow.options();
    c.bench_function("sequential_acdc_powerflow_reference", |b| {
        b.iter(|| sequential_acdc_powerflow(black_box(&sc.areas), &sc.sys, &opts).unwrap())
    });
}

criterion_group!(benches, modal, sysid, powerflow);
criterion_main!(benches);
