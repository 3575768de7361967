use approx::assert_relative_eq;
use proptest::prelude::*;

use nls_gibbs::dynamics::{flow_grid, FlowParams, GalerkinFlow};
use nls_gibbs::hermite::{eval_hermite, QuadratureGrid, SpectralState, C64};
use nls_gibbs::mehler::{apply_pin, apply_sn, cutoff_multiplier, mehler_kernel, propagator_apply};

fn state(max_modes: usize) -> impl Strategy<Value = SpectralState> {
    prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..=max_modes)
        .prop_map(|v| SpectralState::new(v.into_iter().map(|(re, im)| C64::new(re, im)).collect()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn synthesis_round_trip(s in state(40)) {
        let grid = QuadratureGrid::build(40, 4).unwrap();
        let back = grid.analyze(&grid.synthesize(&s).unwrap(), s.n_modes()).unwrap();
        prop_assert!(back.l2_distance(&s) <= 1e-12 * (1.0 + s.norm_sq().sqrt()));
    }

    #[test]
    fn propagator_is_unitary_group(s in state(60), t1 in -3.0f64..3.0, t2 in -3.0f64..3.0) {
        let a = propagator_apply(&propagator_apply(&s, t1), t2);
        let b = propagator_apply(&s, t1 + t2);
        prop_assert!(a.l2_distance(&b) <= 1e-12 * (1.0 + s.norm_sq().sqrt()));
        prop_assert!((a.norm_sq() - s.norm_sq()).abs() <= 1e-13 * s.norm_sq().max(1.0));
    }

    #[test]
    fn cutoff_algebra(s in state(60), cutoff in 1usize..40) {
        let sn = apply_sn(&s, cutoff);
        prop_assert_eq!(apply_sn(&apply_pin(&s, cutoff), cutoff), sn.clone());
        prop_assert_eq!(apply_pin(&sn, cutoff), sn.clone());
        prop_assert!(sn.norm_sq() <= s.norm_sq() + 1e-15);
        for n in 0..s.n_modes() {
            let m = cutoff_multiplier(n, cutoff);
            prop_assert!((0.0..=1.0).contains(&m));
        }
    }

    #[test]
    fn hermite_parity(x in -20.0f64..20.0) {
        let plus = eval_hermite(80, x);
        let minus = eval_hermite(80, -x);
        for (n, (a, b)) in plus.iter().zip(&minus).enumerate() {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            prop_assert!((a - sign * b).abs() <= 1e-14 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn mehler_is_symmetric(x in -4.0f64..4.0, y in -4.0f64..4.0, a in 0.0f64..0.95) {
        let k1 = mehler_kernel(x, y, a).unwrap();
        let k2 = mehler_kernel(y, x, a).unwrap();
        prop_assert!((k1 - k2).abs() <= 1e-15 * k1.abs().max(1e-300));
        prop_assert!(k1 >= 0.0);
    }
}

#[test]
fn flow_commutes_with_parity() {
    let p = FlowParams::new(12, 3);
    let grid = flow_grid(&p, 8).unwrap();
    let flow = GalerkinFlow::new(p, &grid).unwrap();
    let coeffs: Vec<C64> = (0..13)
        .map(|n| C64::new(0.3 / (1.0 + n as f64), 0.1 * n as f64 / 13.0))
        .collect();
    let u = SpectralState::new(coeffs.clone()).unwrap();
    let reflected = SpectralState::new(
        coeffs
            .iter()
            .enumerate()
            .map(|(n, c)| if n % 2 == 0 { *c } else { -*c })
            .collect(),
    )
    .unwrap();
    let a = flow.advance(&u, 0.0, 0.5).unwrap();
    let b = flow.advance(&reflected, 0.0, 0.5).unwrap();
    for (n, (x, y)) in a.coeffs().iter().zip(b.coeffs()).enumerate() {
        let expected = if n % 2 == 0 { *x } else { -*x };
        assert!((expected - y).norm() <= 1e-13, "mode {n}");
    }
}

#[test]
fn even_data_stays_even() {
    let p = FlowParams::new(10, 5);
    let grid = flow_grid(&p, 8).unwrap();
    let flow = GalerkinFlow::new(p, &grid).unwrap();
    let coeffs: Vec<C64> = (0..11)
        .map(|n| {
            if n % 2 == 0 {
                C64::new(0.4, -0.1 * n as f64)
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    let out = flow.advance(&SpectralState::new(coeffs).unwrap(), 0.0, 0.3).unwrap();
    for (n, c) in out.coeffs().iter().enumerate().filter(|(n, _)| n % 2 == 1) {
        assert!(c.norm() <= 1e-14, "odd mode {n} = {c}");
    }
    assert_relative_eq!(
        out.norm_sq(),
        (0..11).step_by(2).map(|n| 0.16 + 0.01 * (n * n) as f64).sum::<f64>(),
        max_relative = 1e-10
    );
}
