use std::f64::consts::TAU;

use ait_core::dynamics::{evolve, steady_state, EvolveOptions};
use ait_core::hilbert::{
    dissipator, embed, liouvillian, unvectorize, vectorize, DensityState, HilbertLayout, OperatorMatrix,
};
use ait_core::meanfield::{integrate_meanfield, MeanFieldOptions, MeanFieldState};
use ait_core::model::{
    detunings, effective_hamiltonian, full_hamiltonian, full_liouvillian, fsr, piezo_fundamental, DriveParams,
    SystemParams,
};
use ait_core::spectroscopy::{find_ait_features, segmented_grid, two_tone_sweep, Engine};
use ait_core::spectrum::{FrequencyAxis, SpectrumTrace, TraceMeta};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn complex_matrix(n: usize) -> impl Strategy<Value = DMatrix<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n)
        .prop_map(move |v| DMatrix::from_iterator(n, n, v.into_iter().map(|(a, b)| Complex64::new(a, b))))
}

fn hermitian(n: usize) -> impl Strategy<Value = DMatrix<Complex64>> {
    complex_matrix(n).prop_map(|a| (&a + a.adjoint()).scale(0.5))
}

fn density(n: usize) -> impl Strategy<Value = DMatrix<Complex64>> {
    complex_matrix(n).prop_map(|a| {
        let rho = &a * a.adjoint();
        let tr = rho.trace();
        rho.map(|x| x / tr)
    })
}

fn small_params() -> impl Strategy<Value = (SystemParams, DriveParams)> {
    (
        -3e6f64..3e6,
        -3e6f64..3e6,
        1e3f64..500e3,
        0.0f64..200e3,
        1e3f64..50e3,
        0.0f64..50e3,
        0.0f64..500e3,
        0.0f64..1e6,
    )
        .prop_map(|(dq, db, gamma1, g, gamma, eps_d, eps_p, chi)| {
            let mut p = SystemParams::table_s1();
            p.cavity_dim = 2;
            p.phonon_dim = 3;
            p.gamma1 = gamma1;
            p.chi = chi;
            let wd = p.phonon_modes[0].omega_p;
            p.omega_eg = wd + dq;
            p.phonon_modes[0].omega_p = wd + db;
            p.phonon_modes[0].g_qh = g;
            p.phonon_modes[0].gamma = gamma;
            (p, DriveParams::new(wd, eps_d, eps_p).unwrap())
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn liouvillian_preserves_hermiticity_and_trace(
        h in hermitian(6),
        c1 in complex_matrix(6),
        c2 in complex_matrix(6),
        r1 in 0.0f64..2.0,
        r2 in 0.0f64..2.0,
        rho in density(6),
    ) {
        let layout = HilbertLayout::new(vec![2, 3]).unwrap();
        let h = OperatorMatrix::new(layout.clone(), h).unwrap();
        let c1 = OperatorMatrix::new(layout.clone(), c1).unwrap();
        let c2 = OperatorMatrix::new(layout.clone(), c2).unwrap();
        let l = liouvillian(&h, &[(r1, &c1), (r2, &c2)]).unwrap();
        let out = unvectorize(&l.matrix().mul_vec(&vectorize(&rho)), 6);
        prop_assert!((&out - out.adjoint()).camax() < 1e-12);
        prop_assert!(out.trace().norm() < 1e-12);
    }

    #[test]
    fn embedding_respects_products(a in complex_matrix(3), b in complex_matrix(3)) {
        let layout = HilbertLayout::new(vec![2, 3, 2]).unwrap();
        let fa = OperatorMatrix::factor(a.clone()).unwrap();
        let fb = OperatorMatrix::factor(b.clone()).unwrap();
        let fab = OperatorMatrix::factor(&a * &b).unwrap();
        let lhs = embed(&fab, &layout, 1).unwrap();
        let rhs = embed(&fa, &layout, 1).unwrap().try_mul(&embed(&fb, &layout, 1).unwrap()).unwrap();
        prop_assert!((lhs.matrix() - rhs.matrix()).camax() < 1e-12);
    }

    #[test]
    fn dissipator_is_linear(
        c in complex_matrix(4),
        r1 in density(4),
        r2 in density(4),
        alpha in -2.0f64..2.0,
        beta in -2.0f64..2.0,
    ) {
        let d = dissipator(&OperatorMatrix::factor(c).unwrap());
        let mix = r1.scale(alpha) + r2.scale(beta);
        let lhs = d.apply(&mix).unwrap();
        let rhs = d.apply(&r1).unwrap().scale(alpha) + d.apply(&r2).unwrap().scale(beta);
        prop_assert!((lhs - rhs).camax() < 1e-12);
    }

    #[test]
    fn hamiltonians_are_hermitian((p, d) in small_params()) {
        let h = full_hamiltonian(&p, &d, &p.layout().unwrap()).unwrap();
        prop_assert!(h.is_hermitian());
        let he = effective_hamiltonian(&p, &d, &p.effective_layout().unwrap(), 1e5).unwrap();
        prop_assert!(he.is_hermitian());
    }

    #[test]
    fn detunings_flip_under_exchange(wd in 1e9f64..10e9, wx in 1e9f64..10e9) {
        let mut p = SystemParams::table_s1();
        p.omega_eg = wx;
        p.phonon_modes[0].omega_p = wx;
        p.omega_r = wx;
        let forward = detunings(&p, &DriveParams::new(wd, 0.0, 0.0).unwrap());
        let mut q = p.clone();
        q.omega_eg = wd;
        q.phonon_modes[0].omega_p = wd;
        q.omega_r = wd;
        let back = detunings(&q, &DriveParams::new(wx, 0.0, 0.0).unwrap());
        prop_assert_eq!(forward.delta_q, -back.delta_q);
        prop_assert_eq!(forward.delta_b[0], -back.delta_b[0]);
        prop_assert_eq!(forward.delta_r, -back.delta_r);
    }

    #[test]
    fn design_formulas_are_homogeneous(v in 1e3f64..2e4, t in 1e-6f64..1e-3, k in 0.1f64..10.0) {
        let f = fsr(v, t).unwrap();
        prop_assert!((fsr(k * v, t).unwrap() / (k * f) - 1.0).abs() < 1e-12);
        prop_assert!((fsr(v, k * t).unwrap() * k / f - 1.0).abs() < 1e-12);
        let p = piezo_fundamental(v, t).unwrap();
        prop_assert!((piezo_fundamental(k * v, t).unwrap() / (k * p) - 1.0).abs() < 1e-12);
        prop_assert!((piezo_fundamental(v, k * t).unwrap() * k / p - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn evolved_and_steady_states_are_physical((p, d) in small_params(), rho in density(12)) {
        let layout = p.layout().unwrap();
        let l = full_liouvillian(&p, &d, &layout).unwrap();
        let init = DensityState::new(layout, rho).unwrap();
        let times = [0.0, 0.2e-6, 1e-6, 5e-6];
        let traj = evolve(&init, &l, &times, &EvolveOptions::default()).unwrap();
        for s in &traj.states {
            prop_assert!((s.trace().re - 1.0).abs() < 1e-8);
            prop_assert!((s.matrix() - s.matrix().adjoint()).camax() < 1e-9);
            prop_assert!(s.min_eigenvalue() >= -1e-8);
        }
        let ss = steady_state(&l).unwrap();
        prop_assert!((ss.trace().re - 1.0).abs() < 1e-8);
        prop_assert!(ss.min_eigenvalue() >= -1e-8);
    }

    #[test]
    fn mean_field_stays_in_the_bloch_ball(
        (p, d) in small_params(),
        theta in 0.0f64..std::f64::consts::PI,
        phi in 0.0f64..TAU,
        r in 0.0f64..1.0,
        b0 in (-1.0f64..1.0, -1.0f64..1.0),
    ) {
        let init = MeanFieldState {
            b: vec![Complex64::new(b0.0, b0.1)],
            s_minus: Complex64::from_polar(0.5 * r * theta.sin(), phi),
            s_z: r * theta.cos(),
        };
        prop_assert!(init.bloch_excess() <= 0.0);
        let times: Vec<f64> = (0..=200).map(|k| k as f64 * 0.05e-6).collect();
        let series = integrate_meanfield(&p, &d, &init, &times, &MeanFieldOptions::for_population()).unwrap();
        for s in &series.states {
            prop_assert!(s.bloch_excess() <= 1e-6, "excess {}", s.bloch_excess());
        }
    }

    #[test]
    fn segmented_grids_are_well_formed(
        center in 5e9f64..7e9,
        fine_span in 1e3f64..500e3,
        fine_step in 50.0f64..2e3,
        coarse_ratio in 20.0f64..200.0,
        coarse_steps in 4usize..200,
    ) {
        let coarse_step = fine_step * coarse_ratio;
        let coarse_span = coarse_step * coarse_steps as f64;
        prop_assume!(coarse_span > fine_span);
        let grid = segmented_grid(center, fine_span, fine_step, coarse_span, coarse_step).unwrap();
        let f = grid.points();
        prop_assert!(f.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(f[0] >= center - 0.5 * coarse_span - 1e-6 * fine_step);
        prop_assert!(*f.last().unwrap() <= center + 0.5 * coarse_span + 1e-6 * fine_step);
        // inside the fine window every gap is at most one fine step
        let inside: Vec<f64> = f.iter().copied().filter(|x| (x - center).abs() <= 0.5 * fine_span).collect();
        prop_assert!(inside.windows(2).all(|w| w[1] - w[0] <= fine_step + 1e-5));
        prop_assert!(f.windows(2).all(|w| w[1] - w[0] <= coarse_step + 1e-5));
    }

    #[test]
    fn mirrored_trace_gives_mirrored_features(
        c1 in -60e3f64..-10e3,
        c2 in 10e3f64..60e3,
        w1 in 3e3f64..15e3,
        w2 in 3e3f64..15e3,
        a in 0.2f64..0.8,
    ) {
        let f: Vec<f64> = (0..=800).map(|k| -100e3 + k as f64 * 250.0).collect();
        let lor = |x: f64, c: f64, w: f64| 1.0 / (1.0 + (2.0 * (x - c) / w).powi(2));
        let v: Vec<f64> = f.iter().map(|&x| 1.0 - a * lor(x, c1, w1) + 0.5 * a * lor(x, c2, w2)).collect();
        let meta = TraceMeta::new("synthetic", 0);
        let t = SpectrumTrace::new(f.clone(), v.clone(), FrequencyAxis::Detuning { reference_hz: 0.0 }, meta.clone()).unwrap();
        let fr: Vec<f64> = f.iter().rev().map(|x| -x).collect();
        let vr: Vec<f64> = v.iter().rev().copied().collect();
        let tr = SpectrumTrace::new(fr, vr, FrequencyAxis::Detuning { reference_hz: 0.0 }, meta).unwrap();
        let a_feats = find_ait_features(&t, 0.05).unwrap();
        let mut b_feats = find_ait_features(&tr, 0.05).unwrap();
        b_feats.reverse();
        prop_assert_eq!(a_feats.len(), b_feats.len());
        for (x, y) in a_feats.iter().zip(&b_feats) {
            prop_assert_eq!(x.polarity, y.polarity);
            prop_assert!((x.center + y.center).abs() < 1e-6);
            prop_assert!((x.fwhm - y.fwhm).abs() < 1e-6);
        }
    }

    #[test]
    fn two_tone_sweep_ignores_thread_count(threads in 1usize..4, eps_d in 100.0f64..5e3) {
        let p = SystemParams::table_s1();
        let d = DriveParams::new(p.phonon_modes[0].omega_p, eps_d, 10e3).unwrap();
        let grid = segmented_grid(p.phonon_modes[0].omega_p, 50e3, 250.0, 4e6, 250e3).unwrap();
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let a = serial.install(|| two_tone_sweep(&p, &d, &grid, Engine::MeanField)).unwrap();
        let b = pool.install(|| two_tone_sweep(&p, &d, &grid, Engine::MeanField)).unwrap();
        prop_assert_eq!(a.values(), b.values());
    }
}
