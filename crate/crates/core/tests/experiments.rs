use raman_core::config::{ControlMode, RunConfig, SweepConfig, SweepKind};
use raman_core::experiments::run_sweep;

fn sweep(kind: SweepKind, points: Vec<f64>, mode: ControlMode) -> Vec<(f64, f64, f64)> {
    let cfg = RunConfig {
        sweep: SweepConfig {
            kind,
            points,
            control_mode: Some(mode),
            tomography_samples: 0,
        },
        ..RunConfig::default()
    };
    run_sweep(&cfg)
        .unwrap()
        .rows
        .iter()
        .map(|r| {
            assert!(r.error.is_none(), "{:?}", r.error);
            (r.x, r.eta_w.unwrap_or(f64::NAN), r.eta_r.unwrap_or(f64::NAN))
        })
        .collect()
}

#[test]
fn optimal_write_efficiency_grows_with_energy() {
    let rows = sweep(
        SweepKind::WriteEnergy,
        vec![0.5, 1.0, 2.0, 4.0, 8.0],
        ControlMode::Optimal,
    );
    for w in rows.windows(2) {
        assert!(w[1].1 > w[0].1, "{rows:?}");
    }
    assert!(rows.last().unwrap().1 >= 0.98);
}

#[test]
fn read_efficiency_does_not_depend_on_read_shape() {
    let points = vec![30.0, 300.0, 900.0];
    let gauss = sweep(SweepKind::ReadEnergy, points.clone(), ControlMode::Gaussian);
    let square = sweep(SweepKind::ReadEnergy, points, ControlMode::Square);
    for (g, s) in gauss.iter().zip(&square) {
        assert!((g.2 - s.2).abs() <= 0.005, "{g:?} vs {s:?}");
    }
}

#[test]
fn delay_scan_degrades_monotonically() {
    let cfg = RunConfig {
        sweep: SweepConfig {
            kind: SweepKind::DelayScan,
            points: vec![0.0, 1.0, 2.5, 5.0],
            control_mode: Some(ControlMode::Optimal),
            tomography_samples: 0,
        },
        ..RunConfig::default()
    };
    let res = run_sweep(&cfg).unwrap();
    let ratios: Vec<f64> = res.rows.iter().map(|r| r.aux["leak_energy_ratio"]).collect();
    assert_eq!(ratios[0], 1.0);
    for w in ratios.windows(2) {
        assert!(w[1] > w[0], "{ratios:?}");
    }
    assert!(ratios[3] > 2.0);
}

#[test]
fn fidelity_sweep_with_tomography_tracks_the_exact_channel() {
    let mut cfg = RunConfig::default();
    cfg.channel.noise_photons = 0.0;
    cfg.channel.fwm_fraction = 0.0;
    cfg.sweep = SweepConfig {
        kind: SweepKind::FidelityVsNbar,
        points: vec![0.76, 4.2],
        control_mode: None,
        tomography_samples: 50_000,
    };
    let res = run_sweep(&cfg).unwrap();
    for r in &res.rows {
        let exact = r.aux["uhlmann"];
        let tomo = r.aux["tomography"];
        assert!((tomo - exact).abs() <= 0.015, "x={} exact={exact} tomo={tomo}", r.x);
    }
}
