use proptest::prelude::*;
use raman_core::grid_pulse::{make_pulse, ComplexEnvelope, PulseShapeSpec};
use raman_core::memory_dynamics::{propagate_retrieval, propagate_storage, MemoryParams, StorageOperator};
use raman_core::Complex64;

fn params(d: f64, delta: f64) -> MemoryParams {
    MemoryParams {
        d,
        delta_w: delta,
        delta_r: delta,
        t_write: 10.0,
        nz: 24,
        nt: 48,
        ..MemoryParams::default()
    }
}

fn control(p: &MemoryParams, fwhm: f64, amp: f64, phase: f64) -> ComplexEnvelope {
    let grid = p.time_grid().unwrap();
    make_pulse(&PulseShapeSpec::gaussian(fwhm, amp, 5.0 - 0.5 * fwhm), &grid)
        .unwrap()
        .scaled(Complex64::from_polar(1.0, phase))
}

fn wave(grid: raman_core::grid_pulse::Grid, a: f64, b: f64) -> ComplexEnvelope {
    ComplexEnvelope::from_fn(grid, |x| Complex64::new((a * x).sin() + 0.3, (b * x).cos()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adjoint_sweep_satisfies_inner_product_identity(
        d in 1.0f64..200.0,
        delta in 0.5f64..20.0,
        amp in 0.05f64..3.0,
        a in 0.1f64..3.0,
        b in 0.1f64..12.0,
    ) {
        let p = params(d, delta);
        let op = StorageOperator::new(&p, &control(&p, 3.0, amp, 0.4)).unwrap();
        let x = wave(*op.time_grid(), a, b);
        let y = wave(*op.space_grid(), b, a);
        let lhs = y.inner(&op.apply(&x).unwrap()).unwrap();
        let rhs = op.adjoint(&y).unwrap().inner(&x).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1e-12));
    }

    #[test]
    fn storage_efficiency_is_amplitude_independent(
        d in 1.0f64..500.0,
        delta in 0.5f64..20.0,
        amp in 0.05f64..3.0,
        photons in 0.4f64..1e4,
    ) {
        let p = params(d, delta);
        let write = control(&p, 3.0, amp, 0.0);
        let input = make_pulse(&PulseShapeSpec::square(4.0, 1.0, 3.0), write.grid()).unwrap();
        let base = propagate_storage(&p, &write, &input).unwrap().eta_w;
        let scaled = input.scaled(Complex64::new((photons / input.norm_sqr()).sqrt(), 0.0));
        let eta = propagate_storage(&p, &write, &scaled).unwrap().eta_w;
        prop_assert!((eta - base).abs() <= 1e-9);
    }

    #[test]
    fn storage_and_retrieval_conserve_excitations(
        d in 1.0f64..500.0,
        delta in 0.5f64..20.0,
        amp in 0.0f64..3.0,
        read_amp in 0.0f64..3.0,
    ) {
        let p = params(d, delta);
        let write = control(&p, 3.0, amp, 0.0);
        let input = make_pulse(&PulseShapeSpec::gaussian(3.0, 1.0, 3.5), write.grid()).unwrap();
        let st = propagate_storage(&p, &write, &input).unwrap();
        let balance = st.spin_wave.norm_sqr() + st.leak.norm_sqr() - input.norm_sqr();
        prop_assert!(balance.abs() <= 1e-9 * input.norm_sqr());
        prop_assert!((0.0..=1.0).contains(&st.eta_w));
        if !st.spin_wave.is_zero() {
            let rt = propagate_retrieval(&p, &control(&p, 3.0, read_amp, 0.0), &st.spin_wave).unwrap();
            let out = rt.output.norm_sqr() + rt.residual_spin.norm_sqr();
            prop_assert!((out - st.spin_wave.norm_sqr()).abs() <= 1e-9 * st.spin_wave.norm_sqr());
        }
    }
}
