//! Invariants checked on random inputs.

mod common;

use mdplab::config::parse_config_str;
use mdplab::linalg::{dot, norm};
use mdplab::models::{build_nse2d, build_sabra, LinearModel, Nse2dConfig, SabraConfig};
use mdplab::noise::{
    entropy_kernel, girsanov_log_weight, is_moderate_window, q_functional, sample_controlled_prm, sample_prm, AffineJump,
    Control, DeviationScale, MarkSpace, Noise, Tilt,
};
use mdplab::rate::{endpoint_rate, optimal_tilt};
use mdplab::rng::stream;
use mdplab::solvers::{evolve_deterministic, evolve_stochastic, solve_skeleton, TimeGrid, Trajectory};
use mdplab::{bilinear, trilinear, Model};
use proptest::prelude::*;

fn vec_of(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n)
}

fn grid(m: usize) -> Vec<f64> {
    (0..=m).map(|j| j as f64 / m as f64).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nse_trilinear_is_skew(u in vec_of(12), v in vec_of(12), w in vec_of(12)) {
        let m = build_nse2d(Nse2dConfig { k_max: 2, visc: 1.0 }).unwrap();
        prop_assume!(m.dim() == 12);
        let a = trilinear(&m, &u, &v, &w).unwrap();
        let b = trilinear(&m, &u, &w, &v).unwrap();
        let scale = norm(&bilinear(&m, &u, &v).unwrap()) * norm(&w) + norm(&bilinear(&m, &u, &w).unwrap()) * norm(&v);
        prop_assert!((a + b).abs() <= 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn sabra_conserves_energy(u in vec_of(20)) {
        let m = build_sabra(SabraConfig { n_shells: 10, ..SabraConfig::default() }).unwrap();
        let b = bilinear(&m, &u, &u).unwrap();
        prop_assert!(dot(&b, &u).abs() <= 1e-12 * norm(&b).max(1e-300) * norm(&u));
    }

    #[test]
    fn nse_energy_never_grows_past_defect(u0 in vec_of(12), h in 1e-3f64..2e-2) {
        let m = build_nse2d(Nse2dConfig { k_max: 2, visc: 0.5 }).unwrap();
        let path = evolve_deterministic(&m, &u0, &TimeGrid::uniform(0.5, h).unwrap()).unwrap();
        let defect = path.energy_defect.unwrap();
        let e0 = dot(&u0, &u0);
        for s in path.states() {
            prop_assert!(dot(s, s) <= e0 + defect + 1e-12 * e0);
        }
    }

    #[test]
    fn rate_is_quadratic(x in vec_of(2), c in 0.1f64..4.0) {
        prop_assume!(norm(&x) > 1e-3);
        let model = LinearModel::new(vec![1.0, 3.0]).unwrap();
        let jump = AffineJump::additive(vec![vec![1.0, 0.2], vec![-0.5, 1.0]]).unwrap();
        let space = MarkSpace::new(vec![1.0, 2.0]).unwrap();
        let noise = Noise::new(&jump, &space).unwrap();
        let g = TimeGrid::uniform(1.0, 1e-2).unwrap();
        let base = evolve_deterministic(&model, &[0.0, 0.0], &g).unwrap();
        let r1 = endpoint_rate(&model, &noise, &base, &x, &g, 1e-12).unwrap().rate;
        let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
        let r2 = endpoint_rate(&model, &noise, &base, &cx, &g, 1e-12).unwrap().rate;
        prop_assert!((r2 - c * c * r1).abs() <= 1e-8 * r2);
    }

    #[test]
    fn optimal_control_hits_target(x in vec_of(1)) {
        prop_assume!(x[0].abs() > 1e-3);
        let p = common::scalar();
        let g = TimeGrid::uniform(1.0, 1e-2).unwrap();
        let base = evolve_deterministic(p.model.as_ref(), &p.u0, &g).unwrap();
        let noise = p.noise().unwrap();
        let r = endpoint_rate(p.model.as_ref(), &noise, &base, &x, &g, 1e-12).unwrap();
        let y = solve_skeleton(p.model.as_ref(), &noise, &r.phi_star, &base, &g).unwrap();
        prop_assert!((y.final_state()[0] - x[0]).abs() <= 1e-9 * x[0].abs());
    }

    #[test]
    fn skeleton_is_linear_in_control(a in -2.0f64..2.0, b in -2.0f64..2.0, f in 0.5f64..5.0) {
        let p = common::linear2();
        let g = TimeGrid::uniform(1.0, 1e-2).unwrap();
        let base = evolve_deterministic(p.model.as_ref(), &p.u0, &g).unwrap();
        let noise = p.noise().unwrap();
        let phi = Control::from_fn(g.nodes().to_vec(), 2, |t, z| (f * t).sin() + z as f64).unwrap();
        let chi = Control::from_fn(g.nodes().to_vec(), 2, |t, z| (t - 0.5 * z as f64).cos()).unwrap();
        let solve = |c: &Control| solve_skeleton(p.model.as_ref(), &noise, c, &base, &g).unwrap();
        let y = solve(&phi.combine(a, &chi, b).unwrap());
        let (yp, yc) = (solve(&phi), solve(&chi));
        for row in 0..y.len() {
            for i in 0..2 {
                let lin = a * yp.state(row)[i] + b * yc.state(row)[i];
                prop_assert!((y.state(row)[i] - lin).abs() <= 1e-12 * (1.0 + lin.abs()));
            }
        }
    }

    #[test]
    fn tilt_stays_in_bounds(vals in vec_of(20), a in 0.0f64..5.0, n in 1.0f64..20.0) {
        let phi = Control::new(grid(10), 2, vals).unwrap();
        let scale = DeviationScale::new(0.01, a.max(1e-6), "test").unwrap();
        let t = optimal_tilt(&phi, &scale, n).unwrap();
        prop_assert!(t.tilt.field().values().iter().all(|v| *v >= 1.0 / n && *v <= n));
        prop_assert!((0.0..=1.0).contains(&t.clipping_fraction));
    }

    #[test]
    fn entropy_is_nonnegative(x in 0.0f64..50.0) {
        prop_assert!(entropy_kernel(x) >= 0.0);
    }

    #[test]
    fn q_vanishes_only_at_one(vals in prop::collection::vec(0.0f64..4.0, 10)) {
        let space = MarkSpace::new(vec![0.5, 1.5]).unwrap();
        let psi = Control::new(grid(5), 2, vals.clone()).unwrap();
        let q = q_functional(&psi, &space).unwrap();
        prop_assert!(q >= 0.0);
        if vals.iter().any(|v| (v - 1.0).abs() > 1e-3) {
            prop_assert!(q > 0.0);
        }
    }

    #[test]
    fn unit_tilt_weight_is_zero(seed in any::<u64>(), eps in 0.05f64..1.0) {
        let space = MarkSpace::new(vec![1.0, 0.25]).unwrap();
        let psi = Tilt::unit(grid(4), 2).unwrap();
        let s = sample_controlled_prm(&space, eps, &psi, &mut stream(seed, 0, "p")).unwrap();
        prop_assert_eq!(girsanov_log_weight(&s, &psi, eps, &space).unwrap(), 0.0);
    }

    #[test]
    fn samples_are_reproducible(seed in any::<u64>(), replica in 0u64..1000) {
        let space = MarkSpace::new(vec![1.0, 2.0]).unwrap();
        let a = sample_prm(&space, 0.1, 1.0, &mut stream(seed, replica, "x")).unwrap();
        let b = sample_prm(&space, 0.1, 1.0, &mut stream(seed, replica, "x")).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn power_scales_form_a_window(gamma in 0.01f64..0.49, p0 in 1u32..6, len in 2usize..8) {
        let scales: Vec<_> = (0..len).map(|j| DeviationScale::power(0.5f64.powi((p0 as usize + j) as i32), gamma).unwrap()).collect();
        prop_assert!(is_moderate_window(&scales));
    }

    #[test]
    fn trajectory_csv_round_trip(seed in any::<u64>()) {
        let p = common::linear2();
        let g = TimeGrid::uniform(0.2, 1e-2).unwrap();
        let scale = DeviationScale::power(0.05, 0.3).unwrap();
        let path = evolve_stochastic(p.model.as_ref(), &p.noise().unwrap(), &scale, &p.u0, &g, &mut stream(seed, 0, "csv")).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf, Some("abc")).unwrap();
        let back = Trajectory::read_csv(std::str::from_utf8(&buf).unwrap(), "x").unwrap();
        prop_assert_eq!(back.times(), path.times());
        for row in 0..path.len() {
            prop_assert_eq!(back.state(row), path.state(row));
            prop_assert_eq!(back.is_post_jump(row), path.is_post_jump(row));
        }
    }

    #[test]
    fn config_round_trip(
        gamma in 0.01f64..0.49,
        step in 1e-4f64..1e-2,
        seed in 0u64..u32::MAX as u64,
        replicas in 1usize..5000,
        w in prop::collection::vec(0.1f64..3.0, 1..4),
    ) {
        let k = w.len();
        let shifts: Vec<String> = (0..k).map(|j| format!("[{}, {}]", j as f64 + 0.5, -1.0)).collect();
        let text = format!(
            "[model]\nkind = \"linear-test\"\neigenvalues = [1.0, 2.5]\n[noise]\nmark_weights = {w:?}\njump_shift = [{}]\n\
             [scale]\ngamma = {gamma:?}\n[solver]\nstep = {step:?}\n[experiment]\nreplicas = {replicas}\n[seed]\nmaster = {seed}\n",
            shifts.join(", ")
        );
        let c = parse_config_str(&text).unwrap();
        let again = parse_config_str(&c.to_toml().unwrap()).unwrap();
        prop_assert_eq!(c.run_id().unwrap(), again.run_id().unwrap());
        prop_assert_eq!(c, again);
    }
}
