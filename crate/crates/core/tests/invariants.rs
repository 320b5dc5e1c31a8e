use nalgebra::DMatrix;
use proptest::prelude::*;

use newmark_bea::bea::{distorted_system, dvf_eval, DistortionCoefficients};
use newmark_bea::harness::observed_order;
use newmark_bea::io::{parse_matrix_market, write_matrix_market};
use newmark_bea::model::Storage;
use newmark_bea::{
    damping_compensation, fourth_order_compensation, integrate, DerivativeMode, Forcing, Matrix, Method,
    SecondOrderSystem, StepperConfig, Vector,
};

fn spd(n: usize, entries: &[f64], shift: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |i, j| entries[i * n + j]);
    &b * b.transpose() + DMatrix::identity(n, n) * shift
}

#[derive(Clone, Debug)]
struct Parts {
    n: usize,
    m: Vec<f64>,
    c: Vec<f64>,
    k: Vec<f64>,
    q0: Vec<f64>,
    v0: Vec<f64>,
    amp: Vec<f64>,
}

fn parts() -> impl Strategy<Value = Parts> {
    (2usize..5).prop_flat_map(|n| {
        let sq = prop::collection::vec(-1.0..1.0f64, n * n);
        let vec = prop::collection::vec(-1.0..1.0f64, n);
        (Just(n), sq.clone(), sq.clone(), sq, vec.clone(), vec.clone(), vec).prop_map(
            |(n, m, c, k, q0, v0, amp)| Parts { n, m, c, k, q0, v0, amp },
        )
    })
}

fn build(p: &Parts, damped: bool, forced: bool, storage: Storage) -> SecondOrderSystem {
    let n = p.n;
    let m = spd(n, &p.m, 1.0);
    let c = if damped { spd(n, &p.c, 0.01) * 0.1 } else { DMatrix::zeros(n, n) };
    let k = spd(n, &p.k, 0.5);
    let forcing = if forced {
        Forcing::sinusoids(p.amp.clone(), vec![1.3; n], vec![0.2; n], DerivativeMode::Analytic).unwrap()
    } else {
        Forcing::zero(n)
    };
    SecondOrderSystem::builder(Matrix::from(m), Matrix::from(c), Matrix::from(k))
        .forcing(forcing)
        .initial_conditions(Vector::from_vec(p.q0.clone()), Vector::from_vec(p.v0.clone()))
        .storage(storage)
        .build()
        .unwrap()
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn energy(sys: &SecondOrderSystem, q: &Vector, v: &Vector) -> f64 {
    0.5 * v.dot(&sys.mass().mul_vec(v)) + 0.5 * q.dot(&sys.stiffness().mul_vec(q))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn distorted_field_at_zero_step_is_the_original_field(p in parts(), gamma in 0.5..0.7f64, beta in 0.25..0.35f64, t in 0.0..5.0f64) {
        let sys = build(&p, true, true, Storage::Dense);
        let q = Vector::from_vec(p.q0.clone());
        let v = Vector::from_vec(p.v0.clone());
        let a = sys.acceleration(t, &q, &v).unwrap();
        let c0 = DistortionCoefficients::new(&sys, gamma, beta, 0.0).unwrap();
        let f0 = dvf_eval(&c0, t, &q, &v).unwrap();
        prop_assert_eq!(&f0.q, &v);
        prop_assert!((&f0.v - &a).amax() <= 1e-12 * (1.0 + a.amax()));

        let h = 1e-6;
        let ch = DistortionCoefficients::new(&sys, gamma, beta, h).unwrap();
        let fh = dvf_eval(&ch, t, &q, &v).unwrap();
        let scale = 1.0 + a.amax() + v.amax();
        prop_assert!((&fh.q - &v).amax() <= 1e-3 * scale);
        prop_assert!((&fh.v - &a).amax() <= 1e-3 * scale);
    }

    #[test]
    fn distorted_system_at_zero_step_is_the_original(p in parts(), gamma in 0.5..0.7f64, beta in 0.25..0.35f64) {
        let sys = build(&p, true, true, Storage::Dense);
        let d = distorted_system(&sys, gamma, beta, 0.0).unwrap().to_system().unwrap();
        prop_assert!(max_abs(&(d.damping().to_dense() - sys.damping().to_dense())) <= 1e-14);
        prop_assert!(max_abs(&(d.stiffness().to_dense() - sys.stiffness().to_dense())) <= 1e-14);
        for t in [0.0, 0.7, 3.1] {
            let diff = d.forcing().value(t).unwrap() - sys.forcing().value(t).unwrap();
            prop_assert!(diff.amax() <= 1e-14);
        }
    }

    #[test]
    fn compensation_at_zero_step_is_the_identity(p in parts(), gamma in 0.5..0.7f64, beta in 0.25..0.35f64) {
        let sys = build(&p, true, true, Storage::Dense);
        let comps = [
            damping_compensation(&sys, gamma, beta, 0.0).unwrap(),
            fourth_order_compensation(&sys, 0.0).unwrap(),
        ];
        for comp in comps {
            prop_assert!(max_abs(&(comp.damping.to_dense() - sys.damping().to_dense())) <= 1e-14);
            prop_assert!(max_abs(&(comp.stiffness.to_dense() - sys.stiffness().to_dense())) <= 1e-14);
            for t in [0.0, 1.5] {
                let diff = comp.forcing.value(t).unwrap() - sys.forcing().value(t).unwrap();
                prop_assert!(diff.amax() <= 1e-14);
            }
        }
    }

    #[test]
    fn fourth_order_damping_stays_symmetric(p in parts(), dt in 0.01..0.5f64) {
        let sys = build(&p, true, false, Storage::Dense);
        let c = fourth_order_compensation(&sys, dt).unwrap().damping.to_dense();
        prop_assert!(max_abs(&(&c - c.transpose())) <= 1e-12 * (1.0 + max_abs(&c)));
    }

    #[test]
    fn sparse_and_dense_storage_agree(p in parts(), gamma in 0.5..0.6f64, beta in 0.25..0.3f64) {
        let dense = build(&p, true, true, Storage::Dense);
        let sparse = build(&p, true, true, Storage::Sparse);
        for method in [Method::Newmark { gamma, beta }, Method::GeneralizedAlpha { rho: 0.8 }] {
            let cfg = StepperConfig::new(0.05, method).unwrap();
            let a = integrate(&dense, &cfg, 2.0).unwrap();
            let b = integrate(&sparse, &cfg, 2.0).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.states.iter().zip(&b.states) {
                let scale = 1.0 + x.q.amax() + x.v.amax();
                prop_assert!((&x.q - &y.q).amax() <= 1e-12 * scale);
                prop_assert!((&x.v - &y.v).amax() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn average_acceleration_conserves_energy(p in parts(), dt in 0.01..1.0f64) {
        let sys = build(&p, false, false, Storage::Dense);
        let cfg = StepperConfig::new(dt, Method::Newmark { gamma: 0.5, beta: 0.25 }).unwrap();
        let traj = integrate(&sys, &cfg, 40.0 * dt).unwrap();
        let e0 = energy(&sys, &traj.states[0].q, &traj.states[0].v);
        for s in &traj.states {
            prop_assert!((energy(&sys, &s.q, &s.v) - e0).abs() <= 1e-10 * e0.max(1e-12));
        }
    }

    #[test]
    fn unforced_response_is_linear_in_the_initial_state(p in parts(), s in -3.0..3.0f64) {
        let sys = build(&p, true, false, Storage::Dense);
        let scaled = SecondOrderSystem::builder(sys.mass().clone(), sys.damping().clone(), sys.stiffness().clone())
            .initial_conditions(sys.q0() * s, sys.v0() * s)
            .build()
            .unwrap();
        let cfg = StepperConfig::new(0.1, Method::Newmark { gamma: 0.55, beta: 0.28 }).unwrap();
        let a = integrate(&sys, &cfg, 3.0).unwrap();
        let b = integrate(&scaled, &cfg, 3.0).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            prop_assert!((&x.q * s - &y.q).amax() <= 1e-12 * (1.0 + y.q.amax()));
        }
    }

    #[test]
    fn matrix_market_round_trip_is_exact(n in 1usize..6, entries in prop::collection::vec(-1e6..1e6f64, 36), sparse in any::<bool>()) {
        let mut d = DMatrix::from_fn(n, n, |i, j| entries[i * 6 + j]);
        if sparse {
            d.iter_mut().enumerate().filter(|(i, _)| i % 3 != 0).for_each(|(_, x)| *x = 0.0);
        }
        let m = Matrix::from(d.clone()).into_storage(sparse);
        let mut buf = Vec::new();
        write_matrix_market(&m, &mut buf).unwrap();
        let back = parse_matrix_market(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(back.is_sparse(), sparse);
        prop_assert_eq!(back.to_dense(), d);
    }

    #[test]
    fn observed_order_recovers_power_laws(p in 0.5..6.0f64, c in 1e-6..1e3f64, dt0 in 1e-3..1.0f64) {
        let pts: Vec<(f64, f64)> = (0..5).map(|k| {
            let dt = dt0 / 2f64.powi(k);
            (dt, c * dt.powf(p))
        }).collect();
        let fitted = observed_order(&pts).unwrap();
        prop_assert!((fitted - p).abs() < 1e-9);
    }
}
