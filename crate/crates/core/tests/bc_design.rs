mod common;

use common::{cgauss, channels, rng};
use iff::bc::{
    broadcast_mse, build_bc_minmax, design_bc, design_max_mse, design_sum_mse, optimal_filter, relay_stationarity, sum_relay_update,
    BcCriterion, BcProblem,
};
use iff::cone::{self, MinMaxProblem};
use iff::linalg::{c64, fro2, identity, kron, lift_matrix, lift_vector, unlift_vector, vec_of, CMat, CVec};
use iff::SystemConfig;

fn random_problem(seed: u64, users: usize, nr: usize, l: usize, power: f64, sigma2_g: f64) -> BcProblem {
    let mut r = rng(seed);
    BcProblem {
        channels: (0..users).map(|_| cgauss(&mut r, 1 + (seed as usize % nr), nr)).collect(),
        equations: l,
        relay_power: power,
        sigma2_u: 1.0,
        sigma2_g,
        delta: 1e-6,
        max_iters: 100,
    }
}

fn random_filters(seed: u64, p: &BcProblem) -> Vec<CMat> {
    let mut r = rng(seed ^ 0xf11);
    p.channels.iter().map(|g| cgauss(&mut r, p.equations, g.nrows())).collect()
}

#[test]
fn identity_channel_example() {
    let d = optimal_filter(&identity(2), &identity(2), 1.0, 0.0);
    assert!((&d - identity(2) * c64(0.5, 0.0)).norm() < 1e-14);
    let p = BcProblem { channels: vec![identity(2)], equations: 2, relay_power: 2.0, sigma2_u: 1.0, sigma2_g: 0.0, delta: 1e-9, max_iters: 50 };
    for crit in [BcCriterion::SumMse, BcCriterion::MaxMse] {
        let out = design_bc(&p, crit).unwrap();
        let mse = out.user_mse(&p)[0];
        assert!((mse - 1.0).abs() < 1e-6, "{crit:?}: {mse}");
    }
}

#[test]
fn relay_update_is_stationary_and_feasible() {
    for seed in 0..30 {
        let power = [0.1, 1.0, 10.0, 1e6][seed as usize % 4];
        let p = random_problem(seed, 4, 3, 2, power, [0.0, 0.1][seed as usize % 2]);
        let d = random_filters(seed, &p);
        let (w, rho) = sum_relay_update(&p, &d);
        assert!(rho >= 0.0);
        assert!(fro2(&w) <= power * (1.0 + 1e-6), "seed {seed}");
        assert!(rho * (power - fro2(&w)).abs() <= 1e-6 * power.max(1.0), "seed {seed}: rho {rho}");
        let scale = d.iter().map(fro2).sum::<f64>().sqrt() * (1.0 + w.norm());
        assert!(relay_stationarity(&p, &d, &w, rho) <= 1e-6 * scale, "seed {seed}");
    }
}

#[test]
fn generous_budget_leaves_constraint_inactive() {
    let p = random_problem(7, 4, 2, 2, 1e9, 0.0);
    let (w, rho) = sum_relay_update(&p, &random_filters(7, &p));
    assert_eq!(rho, 0.0);
    assert!(fro2(&w) < 1e9);
}

#[test]
fn designs_are_monotone_and_feasible() {
    for seed in 0..10 {
        let p = random_problem(seed, 4, 2, 2, 10.0, [0.0, 0.2][seed as usize % 2]);
        for crit in [BcCriterion::SumMse, BcCriterion::MaxMse] {
            let out = design_bc(&p, crit).unwrap();
            for w in out.trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-9), "seed {seed} {crit:?}: {:?}", out.trace);
            }
            assert!(fro2(&out.w) <= p.relay_power * (1.0 + 1e-6));
        }
    }
}

#[test]
fn exit_filters_are_stationary() {
    for seed in 0..10 {
        let p = random_problem(seed, 4, 2, 2, 10.0, 0.1);
        for crit in [BcCriterion::SumMse, BcCriterion::MaxMse] {
            let out = design_bc(&p, crit).unwrap();
            let s = p.sigma2_u + p.sigma2_g * fro2(&out.w);
            for (d, g) in out.d.iter().zip(&p.channels) {
                let gw = g * &out.w;
                // gradient of ||D G W - I||^2 + s ||D||^2 with respect to conj(D)
                let grad = (d * &gw - identity(p.equations)) * gw.adjoint() + d * c64(s, 0.0);
                assert!(grad.norm() < 1e-9 * (1.0 + d.norm()), "seed {seed} {crit:?}");
            }
        }
    }
}

#[test]
fn robust_without_error_is_bit_identical() {
    for seed in 0..4 {
        let mut cfg = SystemConfig::symmetric(2, 2, 1, 15.0);
        cfg.seed = seed;
        let ch = channels(&cfg, seed);
        let (a, b) = (design_sum_mse(&ch, &cfg, true).unwrap(), design_sum_mse(&ch, &cfg, false).unwrap());
        assert_eq!((a.w, a.d, a.trace), (b.w, b.d, b.trace));
        let (a, b) = (design_max_mse(&ch, &cfg, true).unwrap(), design_max_mse(&ch, &cfg, false).unwrap());
        assert_eq!((a.w, a.d, a.trace), (b.w, b.d, b.trace));
    }
}

#[test]
fn single_user_criteria_coincide() {
    for seed in 0..6 {
        let p = random_problem(seed, 1, 2, 2, 5.0, 0.0);
        let s = design_bc(&p, BcCriterion::SumMse).unwrap().user_mse(&p)[0];
        let m = design_bc(&p, BcCriterion::MaxMse).unwrap().user_mse(&p)[0];
        assert!((s - m).abs() <= 1e-4 * s.max(1.0), "seed {seed}: {s} vs {m}");
    }
}

#[test]
fn minmax_cones_evaluate_user_noise() {
    for seed in 0..6 {
        let p = random_problem(seed, 4, 3, 2, 4.0, [0.0, 0.3][seed as usize % 2]);
        let d = random_filters(seed, &p);
        let mut r = rng(seed + 99);
        let w = cgauss(&mut r, 3, 2);
        let mp = build_bc_minmax(&p, &d);
        let u = lift_vector(&vec_of(&w));
        for (k, cone) in mp.cones.iter().enumerate() {
            let direct = broadcast_mse(&w, &d[k], &p.channels[k], p.sigma2_u, p.sigma2_g);
            assert!((cone.value(&u) - direct).abs() < 1e-10 * (1.0 + direct));
        }
        assert!((mp.balls[0].value(&u) - fro2(&w)).abs() < 1e-10);
    }
}

/// The filter step solved as a one-cone problem agrees with the closed form.
#[test]
fn cone_filter_step_matches_closed_form() {
    for seed in 0..8 {
        let p = random_problem(seed, 1, 3, 2, 4.0, 0.1);
        let g = &p.channels[0];
        let mut r = rng(seed + 7);
        let w = cgauss(&mut r, 3, 2);
        let l = p.equations;
        let nk = g.nrows();
        let s = p.sigma2_u + p.sigma2_g * fro2(&w);
        let gw_t = (g * &w).transpose();
        let mut m = CMat::zeros(l * nk + l * l, l * nk);
        m.view_mut((0, 0), (l * nk, l * nk)).copy_from(&(identity(l * nk) * c64(s.sqrt(), 0.0)));
        m.view_mut((l * nk, 0), (l * l, l * nk)).copy_from(&kron(&gw_t, &identity(l)));
        let mut c = CVec::zeros(l * nk + l * l);
        c.rows_mut(l * nk, l * l).copy_from(&(-vec_of(&identity(l))));
        let mp = MinMaxProblem::new(2 * l * nk).with_cone(lift_matrix(&m), lift_vector(&c)).with_ball(lift_matrix(&identity(l * nk)), 1e4);
        let sol = cone::solve(&mp).unwrap();
        let dv = unlift_vector(&sol.u);
        let d = CMat::from_iterator(l, nk, dv.iter().cloned());
        let closed = optimal_filter(&w, g, p.sigma2_u, p.sigma2_g);
        assert!((&d - &closed).norm() <= 1e-4 * (1.0 + closed.norm()), "seed {seed}");
    }
}
