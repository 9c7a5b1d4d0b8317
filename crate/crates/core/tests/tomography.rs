use std::f64::consts::{PI, SQRT_2};

use raman_core::grid_pulse::{ComplexEnvelope, Grid};
use raman_core::quantum_states::{coherent_state, uhlmann_fidelity, DensityMatrix};
use raman_core::tomography::*;
use raman_core::{Complex64, Error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn coherent(n_bar: f64, n_max: usize) -> DensityMatrix {
    coherent_state(Complex64::new(n_bar.sqrt(), 0.0), n_max).unwrap()
}

fn phase_bin_stats(rec: &QuadratureRecord, bins: usize) -> Vec<(f64, f64, f64)> {
    let mut acc = vec![(0.0, 0.0, 0.0); bins];
    for &(t, x) in &rec.samples {
        let b = ((t / (2.0 * PI) * bins as f64) as usize).min(bins - 1);
        acc[b].0 += 1.0;
        acc[b].1 += x;
        acc[b].2 += x * x;
    }
    acc.into_iter()
        .map(|(n, s, s2)| {
            let mean = s / n;
            (n, mean, s2 / n - mean * mean)
        })
        .collect()
}

#[test]
fn vacuum_variance_is_one_half_in_every_phase_bin() {
    let rec = simulate_homodyne(&DensityMatrix::fock(0, 10).unwrap(), 100_000, 5).unwrap();
    for (_, _, var) in phase_bin_stats(&rec, 30) {
        assert!((var - 0.5).abs() < 0.01 * 4.0, "variance {var}");
    }
    // pooled estimate is much tighter
    let all: f64 = rec.samples.iter().map(|s| s.1 * s.1).sum::<f64>() / rec.n_samples() as f64;
    assert!((all - 0.5).abs() < 0.01, "{all}");
}

#[test]
fn coherent_fringe_amplitude() {
    let n_bar: f64 = 7.9;
    let rec = simulate_homodyne(&coherent(n_bar, 40), 100_000, 9).unwrap();
    let bins = 30;
    let stats = phase_bin_stats(&rec, bins);
    // least-squares fit of a·cos θ + b·sin θ to the bin means
    let (mut a, mut b) = (0.0, 0.0);
    for (k, (_, mean, _)) in stats.iter().enumerate() {
        let theta = (k as f64 + 0.5) * 2.0 * PI / bins as f64;
        a += 2.0 / bins as f64 * mean * theta.cos();
        b += 2.0 / bins as f64 * mean * theta.sin();
    }
    // bin averaging of cos over width w scales the amplitude by sinc(w/2)
    let w: f64 = 2.0 * PI / bins as f64;
    let amp = a.hypot(b) / ((w / 2.0).sin() / (w / 2.0));
    let want = (2.0 * n_bar).sqrt();
    assert!((amp - want).abs() < 0.02 * want, "{amp} vs {want}");
    assert!(b.abs() < 0.05);
}

#[test]
fn white_noise_matched_filter_variance() {
    let grid = Grid::cell_centered(0.0, 10.0, 200).unwrap();
    let dt = grid.step();
    let sigma = 0.7;
    let modes = [
        ComplexEnvelope::from_fn(grid, |t| Complex64::new((-(t - 5.0).powi(2)).exp(), 0.0)),
        ComplexEnvelope::from_fn(grid, |_| Complex64::new(1.0, 0.0)),
    ];
    let normal = Normal::new(0.0, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for mode in modes {
        let mode = mode.normalized().unwrap();
        let draws = 10_000;
        let mut s2 = 0.0;
        for _ in 0..draws {
            let raw = ComplexEnvelope::new(
                grid,
                (0..grid.len())
                    .map(|_| Complex64::new(normal.sample(&mut rng), 0.0))
                    .collect(),
            )
            .unwrap();
            s2 += matched_filter_quadrature(&raw, &mode).unwrap().powi(2);
        }
        let var = s2 / draws as f64;
        let want = sigma * sigma * dt;
        // sample variance of 10⁴ Gaussian draws: relative std ≈ √(2/10⁴)
        assert!((var / want - 1.0).abs() < 0.05, "{var} vs {want}");
    }
}

#[test]
fn vacuum_round_trip() {
    let rec = simulate_homodyne(&DensityMatrix::fock(0, 12).unwrap(), 100_000, 21).unwrap();
    let cfg = MLConfig::for_mean_photons(0.0);
    let res = ml_reconstruct(&rec, &cfg).unwrap();
    let f = uhlmann_fidelity(&res.rho, &DensityMatrix::fock(0, cfg.n_max).unwrap()).unwrap();
    assert!(f >= 0.995, "{f}");
    assert!(res.converged);
}

#[test]
fn coherent_round_trip() {
    let rho = coherent(4.2, 40);
    let rec = simulate_homodyne(&rho, 100_000, 22).unwrap();
    let cfg = MLConfig::for_mean_photons(4.2);
    let res = ml_reconstruct(&rec, &cfg).unwrap();
    let f = uhlmann_fidelity(&res.rho, &rho.resized(cfg.n_max)).unwrap();
    assert!(f >= 0.99, "{f}");
}

#[test]
fn under_determined_record_is_flagged() {
    let cfg = MLConfig::for_mean_photons(1.0);
    // evenly spaced phases satisfy the coverage rule with very few samples
    let rec = QuadratureRecord::new((0..24).map(|k| (2.0 * PI * k as f64 / 24.0, 0.3)).collect());
    let res = ml_reconstruct(&rec, &cfg).unwrap();
    assert!(!res.converged);
    assert!(res.rho.min_eigenvalue() >= -1e-10);
    // ten random phases cannot cover the circle finely enough
    let ten = simulate_homodyne(&coherent(1.0, 12), 10, 3).unwrap();
    assert!(matches!(
        ml_reconstruct(&ten, &cfg),
        Err(Error::InsufficientPhaseCoverage { .. })
    ));
}

#[test]
fn samples_outside_range_are_dropped() {
    let cfg = MLConfig::for_mean_photons(0.0);
    let mut rec = simulate_homodyne(&DensityMatrix::fock(0, 8).unwrap(), 2000, 1).unwrap();
    rec.samples.push((1.0, 50.0));
    rec.samples.push((2.0, -50.0));
    let res = ml_reconstruct(&rec, &MLConfig { max_iter: 20, ..cfg }).unwrap();
    assert_eq!(res.dropped_samples, 2);
}

#[test]
fn every_iterate_is_a_valid_state_with_nondecreasing_likelihood() {
    for (k, n_bar) in [0.0, 0.76, 3.0].into_iter().enumerate() {
        let rho = coherent_state(Complex64::from_polar(f64::sqrt(n_bar), 0.4), 30).unwrap();
        let rec = simulate_homodyne(&rho, 5_000, 100 + k as u64).unwrap();
        let base = MLConfig::for_mean_photons(n_bar);
        let mut prev = f64::NEG_INFINITY;
        for iters in [1, 2, 5, 10, 40] {
            let res = ml_reconstruct(
                &rec,
                &MLConfig {
                    max_iter: iters,
                    ..base
                },
            )
            .unwrap();
            for w in res.loglik_history.windows(2) {
                assert!(w[1] >= w[0]);
            }
            let last = *res.loglik_history.last().unwrap();
            assert!(last >= prev);
            prev = last;
            assert!(res.rho.hermitian_deviation() < 1e-12);
            assert!((res.rho.trace() - 1.0).abs() < 1e-9);
            assert!(res.rho.min_eigenvalue() >= -1e-10);
        }
    }
}

#[test]
fn phase_rotation_covariance() {
    let rho = coherent_state(Complex64::from_polar(1.3, 0.2), 30).unwrap();
    let rec = simulate_homodyne(&rho, 50_000, 8).unwrap();
    let cfg = MLConfig::for_mean_photons(1.69);
    let base = ml_reconstruct(&rec, &cfg).unwrap().rho;
    for phi in [0.7, 2.0, -1.1] {
        let rotated = ml_reconstruct(&rec.phase_shifted(phi), &cfg).unwrap().rho;
        let f = uhlmann_fidelity(&rotated, &base.phase_rotated(phi)).unwrap();
        assert!(f >= 0.999, "phi {phi}: {f}");
    }
}

#[test]
fn fidelity_improves_with_sample_count() {
    let rho = coherent(1.0, 30);
    let cfg = MLConfig::for_mean_photons(1.0);
    let truth = rho.resized(cfg.n_max);
    let stats: Vec<(f64, f64)> = [1_000usize, 10_000, 100_000]
        .iter()
        .map(|&n| {
            let inf: Vec<f64> = (0..10u64)
                .map(|seed| {
                    let rec = simulate_homodyne(&rho, n, 1000 + seed).unwrap();
                    let fit = ml_reconstruct(&rec, &cfg).unwrap();
                    1.0 - uhlmann_fidelity(&fit.rho, &truth).unwrap()
                })
                .collect();
            let mean = inf.iter().sum::<f64>() / 10.0;
            let var = inf.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 9.0;
            (mean, (var / 10.0).sqrt())
        })
        .collect();
    for w in stats.windows(2) {
        let ((a, sa), (b, sb)) = (w[0], w[1]);
        assert!(b <= a + 2.0 * sa.hypot(sb), "{stats:?}");
    }
    assert!(stats[2].0 < stats[0].0, "{stats:?}");
}

#[test]
fn doubling_bins_changes_little() {
    let rho = coherent(2.0, 30);
    let rec = simulate_homodyne(&rho, 100_000, 77).unwrap();
    let cfg = MLConfig::for_mean_photons(2.0);
    let coarse = ml_reconstruct(&rec, &cfg).unwrap().rho;
    let fine = ml_reconstruct(
        &rec,
        &MLConfig {
            n_phase_bins: 2 * cfg.n_phase_bins,
            n_x_bins: 2 * cfg.n_x_bins,
            ..cfg
        },
    )
    .unwrap()
    .rho;
    let f = uhlmann_fidelity(&coarse, &fine).unwrap();
    assert!(f >= 0.998, "{f}");
}

#[test]
fn default_x_range_covers_signal() {
    let cfg = MLConfig::for_mean_photons(4.2);
    assert!((cfg.x_range - (5.0 / SQRT_2 + SQRT_2 * 4.2f64.sqrt())).abs() < 1e-12);
    assert!(MLConfig { x_range: 1.0, ..cfg }.validate().is_err());
    assert!(MLConfig { n_phase_bins: 4, ..cfg }.validate().is_err());
}
