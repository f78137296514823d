use macrogrid::modal::{matrix_pencil, prony, PencilOptions};
use macrogrid::mode::{damping_ratio, sigma_for, Mode};
use macrogrid::mtdc::{dc_powerflow, DcLine, DcNode, DcOptions, DEFAULT_C_PER_KM, DEFAULT_L_PER_KM, DEFAULT_R_PER_KM};
use macrogrid::scenario::Scenario;
use macrogrid::sdc::{design_sdc, eval_sdc, DesignOptions, DesignTarget, SdcBlock, SdcParams};
use macrogrid::sysid::{fit_tf, gen_multisine, FitOptions, FrequencyResponse, TransferFunctionModel};
use macrogrid::timeseries::TimeSeriesSet;
use macrogrid::{poly, sequential_acdc_powerflow, MtdcSystem, VscConverter};
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;
use std::path::Path;

fn ringdown(modes: &[(f64, f64, f64)], dt: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let t = k as f64 * dt;
            modes.iter().map(|&(a, f, z)| a * (-sigma_for(2.0 * PI * f, z) * t).exp() * (2.0 * PI * f * t).cos()).sum()
        })
        .collect()
}

fn ring(n_nodes: usize, km: &[f64]) -> MtdcSystem {
    let nodes = (0..n_nodes)
        .map(|i| DcNode { name: format!("N{i}"), station_capacitance_uf: 50.0, lat: None, lon: None })
        .collect();
    let mut sys = MtdcSystem::new(640.0, 1000.0, nodes);
    for i in 0..n_nodes {
        sys.lines.push(DcLine {
            name: format!("L{i}"),
            from: format!("N{i}"),
            to: format!("N{}", (i + 1) % n_nodes),
            length_km: km[i],
            r_per_km: DEFAULT_R_PER_KM,
            l_per_km: DEFAULT_L_PER_KM,
            c_per_km: DEFAULT_C_PER_KM,
            in_service: true,
        });
    }
    sys.converters.push(VscConverter::slack("C0", "N0", "a", "A", 3000.0));
    for i in 1..n_nodes {
        sys.converters.push(VscConverter::pq(&format!("C{i}"), &format!("N{i}"), "a", "A", 3000.0, 0.0));
    }
    sys.finalize().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn zeta_and_sigma_are_inverse(w in 0.1f64..20.0, zeta in 0.001f64..0.95) {
        let s = sigma_for(w, zeta);
        prop_assert!((damping_ratio(s, w) - zeta).abs() < 1e-12);
        let m = Mode::from_eigenvalue(Complex64::new(-s, w));
        prop_assert!((m.damping_ratio - zeta).abs() < 1e-12);
        prop_assert!((m.omega() - w).abs() < 1e-12);
        prop_assert!(m.is_stable() && m.is_oscillatory());
    }

    #[test]
    fn estimators_recover_one_mode(f in 0.1f64..2.0, zeta in 0.01f64..0.3, amp in 0.01f64..10.0) {
        let dt = 0.05;
        let x = ringdown(&[(amp, f, zeta)], dt, 400);
        for est in [prony(&x, dt, 6).unwrap(), matrix_pencil(&x, dt, &PencilOptions::default()).unwrap()] {
            let m = est.modes[0];
            prop_assert!(((m.freq_hz - f) / f).abs() < 1e-6, "{} vs {}", m.freq_hz, f);
            prop_assert!(((m.damping_ratio - zeta) / zeta).abs() < 1e-6, "{} vs {}", m.damping_ratio, zeta);
            prop_assert!(est.reconstruction_error < 1e-6);
        }
    }

    #[test]
    fn estimators_agree_on_two_modes(f1 in 0.2f64..0.6, df in 0.15f64..0.8, z1 in 0.02f64..0.2, z2 in 0.02f64..0.2) {
        let dt = 0.05;
        let x = ringdown(&[(1.0, f1, z1), (0.5, f1 + df, z2)], dt, 500);
        let a = prony(&x, dt, 8).unwrap();
        let b = matrix_pencil(&x, dt, &PencilOptions::default()).unwrap();
        for f in [f1, f1 + df] {
            let near = |ms: &[Mode]| *ms.iter().min_by(|p, q| (p.freq_hz - f).abs().total_cmp(&(q.freq_hz - f).abs())).unwrap();
            let (ma, mb) = (near(&a.modes), near(&b.modes));
            prop_assert!((ma.freq_hz - mb.freq_hz).abs() < 1e-4 && (ma.sigma - mb.sigma).abs() < 1e-4);
        }
    }

    #[test]
    fn roots_round_trip(re in proptest::collection::vec(-3.0f64..-0.05, 1..3), im in proptest::collection::vec(0.1f64..10.0, 1..3)) {
        let mut r: Vec<Complex64> = Vec::new();
        for (a, b) in re.iter().zip(&im) {
            r.push(Complex64::new(*a, *b));
            r.push(Complex64::new(*a, -*b));
        }
        let c = poly::from_roots(&r);
        for z in poly::roots(&c) {
            let d = r.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(d < 1e-8 * z.norm().max(1.0), "{z}");
        }
    }

    #[test]
    fn exact_response_refits_second_order(f in 0.2f64..2.0, zeta in 0.02f64..0.3, gain in 0.001f64..1.0) {
        let w = 2.0 * PI * f;
        let s = sigma_for(w, zeta);
        let truth = TransferFunctionModel::new(vec![gain, 0.0], vec![1.0, 2.0 * s, s * s + w * w]);
        let grid: Vec<f64> = (5..=300).map(|k| k as f64 * 0.01).collect();
        let frf = FrequencyResponse::from_fn(&grid, |x| truth.eval(x));
        let fit = fit_tf(&frf, 1, 2, &FitOptions::default()).unwrap();
        prop_assert!(fit.quality.as_ref().unwrap().passed);
        let mut got = fit.poles();
        got.sort_by(|a, b| a.im.total_cmp(&b.im));
        prop_assert!((got[1] - Complex64::new(-s, w)).norm() / w < 1e-6, "{:?}", got);
    }

    #[test]
    fn placement_holds_for_random_plants(
        f in 0.2f64..1.5,
        zeta_ol in 0.005f64..0.08,
        zeta_t in 0.1f64..0.25,
        zero in -5.0f64..5.0,
        gain in prop_oneof![-1.0f64..-0.001, 0.001f64..1.0],
    ) {
        let w = 2.0 * PI * f;
        let s = sigma_for(w, zeta_ol);
        let g = TransferFunctionModel::new(vec![gain, -gain * zero], vec![1.0, 2.0 * s, s * s + w * w]);
        let t = DesignTarget::new(Complex64::new(-s, w), zeta_t);
        let lam = t.lambda_cl().unwrap();
        if let Ok(p) = design_sdc(&g, &t, &DesignOptions::default()) {
            prop_assert!((1.0 + g.eval(lam) * eval_sdc(&p, lam)).norm() < 1e-6);
            prop_assert!(p.t1 > 0.0 && p.t2 > 0.0);
            if p.m == 1 {
                prop_assert!((p.t1 * p.t2 * w * w - 1.0).abs() < 1e-9);
            }
            let (num, den) = p.polynomials();
            let z = Complex64::new(-0.3, 2.0);
            prop_assert!((poly::eval(&num, z) / poly::eval(&den, z) - eval_sdc(&p, z)).norm() < 1e-9 * eval_sdc(&p, z).norm().max(1.0));
        }
    }

    #[test]
    fn sdc_block_is_silent_at_any_constant_input(u0 in -1.0f64..1.0, k in 1.0f64..5000.0, m in 1usize..4) {
        let b = SdcBlock::new(SdcParams { k, t1: 0.3, t2: 0.2, tw: 10.0, m, output_limit_mw: None }, 1000.0);
        let x = b.initial_state(u0);
        let mut dx = vec![0.0; b.n_states()];
        let y = b.rhs(&x, u0, &mut dx);
        prop_assert_eq!(y, 0.0);
        prop_assert!(dx.iter().all(|d| *d == 0.0));
        prop_assert!(b.output(&x, u0 + 1e6).abs() <= 100.0 + 1e-9);
    }

    #[test]
    fn multisine_peak_respects_clamp(seed in 0u64..1000, clamp in 0.05f64..2.0) {
        let p = gen_multisine((0.05, 3.0), 0.01, (0.5, 1.0), seed, Some(clamp)).unwrap();
        prop_assert!(p.peak() <= clamp);
        prop_assert_eq!(p.freqs.len(), 296);
    }

    #[test]
    fn dc_network_conserves_power(km in proptest::collection::vec(50.0f64..900.0, 4), p in proptest::collection::vec(-1500.0f64..1500.0, 3)) {
        let sys = ring(4, &km);
        let mut set = vec![0.0];
        set.extend(&p);
        let sol = dc_powerflow(&sys, &set, &DcOptions::default()).unwrap();
        prop_assert!((sol.injection.iter().sum::<f64>() - sol.total_loss).abs() < 1e-9);
        prop_assert!(sol.total_loss >= 0.0);
        prop_assert!(sol.current_balance(&sys) < 1e-9);
        for k in 1..4 {
            prop_assert!((sol.injection[k] - sys.pu(p[k - 1])).abs() < 1e-9);
        }
        prop_assert!((sol.slack_power - sol.injection[0]).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trip_is_exact(v in proptest::collection::vec(-1e6f64..1e6, 2..50)) {
        let w: Vec<f64> = v.iter().map(|x| x * 1e-7).collect();
        let ts = TimeSeriesSet::with_channels(0.25, 0.01, vec![("a".into(), v.clone()), ("b.c".into(), w)]).unwrap();
        let mut buf = Vec::new();
        ts.write_csv(&mut buf).unwrap();
        let back = TimeSeriesSet::read_csv(&buf[..]).unwrap();
        prop_assert_eq!(back.names, ts.names);
        prop_assert_eq!(back.data, ts.data);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn acdc_powerflow_balances(load in 20.0f64..150.0, transfer in -60.0f64..60.0) {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../cli/tests/data/small.toml");
        let text = std::fs::read_to_string(&path).unwrap()
            .replace("p_mw = 80.0, q_mvar = 8.0 }]\n\n[areas.b]", &format!("p_mw = {load}, q_mvar = 8.0 }}]\n\n[areas.b]"))
            .replace("mode = \"pq\", rating_mw = 100.0, p_mw = 0.0", &format!("mode = \"pq\", rating_mw = 100.0, p_mw = {transfer}"));
        let sc = Scenario::from_str(&text, &path).unwrap();
        let st = sequential_acdc_powerflow(&sc.areas, &sc.sys, &sc.config.powerflow.options()).unwrap();
        for sol in &st.ac {
            let injected: f64 = sol.p_net.iter().sum();
            prop_assert!((injected - sol.total_branch_loss()).abs() < 1e-8);
        }
        let dc = &st.dc;
        prop_assert!((dc.injection.iter().sum::<f64>() - dc.total_loss).abs() < 1e-9);
        let p_dc = st.converter_p_dc(&sc.sys);
        prop_assert!((p_dc.iter().sum::<f64>() - dc.total_loss).abs() < 1e-8);
        prop_assert!((st.converter_s[1].re - sc.sys.pu(transfer)).abs() < 1e-9);
    }
}
