use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use ctr_core::conic::{recover_dual, solve_barrier_newton, solve_socp, strictly_feasible_start, SolveStatus};
use ctr_core::cqdc::{rollout_nonsmooth, step_nonsmooth, step_smoothed};
use ctr_core::geometry::{contact_for_pair, detect_contacts, min_distance};
use ctr_core::planner::{ctr_trajopt, generate_goals, initial_guess_heuristic, mpc_rollout, pose_error, unwrap_goal};
use ctr_core::scenario::{builtin, systems, Scenario, BUILTIN};
use ctr_core::sensitivity::linearize;
use ctr_core::softsim::{step_soft, SoftParams, SoftPlantState};
use ctr_core::trust_region::{build, TrustRegionSpec};
use ctr_core::{rng, PlannerParams, QMode, SystemModel, Variant};

fn scenario(name: &str) -> Scenario {
    builtin(name).unwrap()
}

/// Contact-rich nominal of each scenario with the command at rest.
fn nominal(s: &Scenario) -> (DVector<f64>, DVector<f64>) {
    let q = if s.name == "pushert" {
        DVector::from_vec(systems::pushert_contact_nominal(&mut rng::stream(3, 0)))
    } else {
        s.q0()
    };
    let u = s.system.robot_part(&q);
    (q, u)
}

/// q₀ plus noise, resampled until nothing penetrates.
fn perturbed(s: &Scenario, seed: u64, scale: f64) -> DVector<f64> {
    let q0 = s.q0();
    let mut r = rng::stream(seed, 0);
    loop {
        let q = DVector::from_fn(q0.len(), |k, _| q0[k] + scale * r.sample::<f64, _>(StandardNormal));
        if min_distance(&s.system, &q) >= 0.0 {
            return q;
        }
    }
}

fn direction(n: usize, seed: u64) -> DVector<f64> {
    let mut r = rng::stream(seed, 1);
    DVector::from_fn(n, |_, _| r.sample::<f64, _>(StandardNormal)).normalize()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normal_row_is_the_gradient_of_phi(k in 0usize..BUILTIN.len(), seed in 0u64..10_000) {
        let s = scenario(BUILTIN[k]);
        let q = perturbed(&s, seed, 0.02);
        let step = 1e-6;
        let dq = direction(q.len(), seed) * step;
        for c in detect_contacts(&s.system, &q, s.system.phi_threshold()) {
            let plus = contact_for_pair(&s.system, &(&q + &dq), c.pair).phi;
            let minus = contact_for_pair(&s.system, &(&q - &dq), c.pair).phi;
            let fd = 0.5 * (plus - minus);
            let lin = (c.normal_row() * &dq)[0];
            prop_assert!((lin - fd).abs() <= 1e3 * step * step, "{}: pair {} {lin} vs {fd}", s.name, c.pair);
        }
    }

    #[test]
    fn jacobian_partition_reassembles(k in 0usize..BUILTIN.len(), seed in 0u64..10_000) {
        let s = scenario(BUILTIN[k]);
        let sys = &s.system;
        let q = perturbed(&s, seed, 0.02);
        for c in detect_contacts(sys, &q, sys.phi_threshold()) {
            let (jo, ja) = (c.jac_object(sys), c.jac_robot(sys));
            let mut j = c.jacobian.clone() * 0.0;
            for (col, &i) in sys.object_indices.iter().enumerate() {
                j.set_column(i, &jo.column(col));
            }
            for (col, &i) in sys.robot_indices.iter().enumerate() {
                j.set_column(i, &ja.column(col));
            }
            prop_assert_eq!(&j, &c.jacobian);
        }
    }

    #[test]
    fn contact_detection_is_deterministic(k in 0usize..BUILTIN.len(), seed in 0u64..10_000) {
        let s = scenario(BUILTIN[k]);
        let q = perturbed(&s, seed, 0.02);
        let thr = s.system.phi_threshold();
        prop_assert_eq!(detect_contacts(&s.system, &q, thr), detect_contacts(&s.system, &q, thr));
    }

    #[test]
    fn recovered_duals_are_dual_feasible(
        nu0 in 1e-6f64..10.0,
        ratio in 0.0f64..0.999,
        sign in prop::bool::ANY,
        mu in 0.05f64..2.0,
        kappa in 1.0f64..1e6,
    ) {
        // strictly inside ν₁ > μ|ν₂|
        let nu2 = if sign { 1.0 } else { -1.0 } * ratio * nu0 / mu;
        let l = recover_dual(&DVector::from_vec(vec![nu0, nu2]), mu, kappa);
        prop_assert!(mu * l[0] >= l[1].abs(), "λ = {l:?}");
    }

    #[test]
    fn pusher_steps_are_translation_equivariant(
        qo in 0.2f64..0.3,
        gap in 0.0f64..0.1,
        du in -0.1f64..0.1,
        shift in -1.0f64..1.0,
    ) {
        let sys = systems::pusher1d();
        let q = DVector::from_vec(vec![qo, qo - 0.2 - gap]);
        let u = DVector::from_element(1, q[1] + du);
        let base = step_nonsmooth(&sys, &q, &u).unwrap().q_next;
        let moved = step_nonsmooth(&sys, &q.add_scalar(shift), &u.add_scalar(shift)).unwrap().q_next;
        prop_assert!((moved.add_scalar(-shift) - base).amax() <= 1e-8);
    }
}

#[test]
fn socp_steps_meet_their_tolerance() {
    for name in BUILTIN {
        let s = scenario(name);
        for seed in 0..5 {
            let q = perturbed(&s, seed, 0.01);
            let qa = s.system.robot_part(&q);
            let u = &qa + direction(qa.len(), seed) * 0.03;
            let r = step_nonsmooth(&s.system, &q, &u).unwrap();
            let prog = r.problem.program();
            let sol = solve_socp(&prog, 1e-9);
            assert_eq!(sol.status, SolveStatus::Optimal);
            assert!(sol.complementarity.abs() <= 1e-9, "{name}: gap {}", sol.complementarity);
            for (cone, nu) in prog.cones.iter().zip(&sol.slacks) {
                assert!(cone.margin(nu) >= -1e-9, "{name}: cone residual {}", cone.margin(nu));
            }
        }
    }
}

#[test]
fn barrier_minimizers_approach_the_socp_solution() {
    for name in BUILTIN {
        let s = scenario(name);
        let (q, qa) = nominal(&s);
        let u = &qa + direction(qa.len(), 5) * 0.02;
        let r = step_nonsmooth(&s.system, &q, &u).unwrap();
        let prog = r.problem.program();
        let x0 = strictly_feasible_start(&prog, &q, 1e-6).unwrap();
        let gaps: Vec<f64> = (0..8)
            .map(|k| {
                let kappa = 1e3 * 2f64.powi(k);
                (solve_barrier_newton(&prog, kappa, &x0, 1e-12).unwrap().x - &r.q_next).norm()
            })
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{name}: {gaps:?}");
    }
}

#[test]
fn free_objects_drift_by_the_quasistatic_displacement() {
    let mut sys = systems::pusher1d();
    sys.tau_object = vec![0.003];
    let q = DVector::from_vec(vec![0.5, -0.5]);
    let u = DVector::from_element(1, -0.5);
    let r = step_nonsmooth(&sys, &q, &u).unwrap();
    let expected = sys.h * sys.h * 0.003 / (sys.epsilon * sys.object_mass[0][0]);
    assert!((r.q_next[0] - 0.5 - expected).abs() <= 1e-9, "{} vs {expected}", r.q_next[0] - 0.5);
}

#[test]
fn nominal_duals_match_the_smoothed_step_exactly() {
    for name in BUILTIN {
        let s = scenario(name);
        let (q, qa) = nominal(&s);
        let u = &qa + direction(qa.len(), 2) * 0.01;
        let kappa = s.params.kappa;
        let lin = linearize(&s.system, &q, &u, kappa, QMode::Skip).unwrap();
        let step = step_smoothed(&s.system, &q, &u, kappa).unwrap();
        assert_eq!(lin.lambda_nominal, step.lambdas, "{name}");
    }
}

#[test]
fn action_only_sets_nest() {
    for name in BUILTIN {
        let s = scenario(name);
        let (q, u) = nominal(&s);
        let lin = linearize(&s.system, &q, &u, s.params.kappa, QMode::Skip).unwrap();
        let region = |v| build(&TrustRegionSpec::isotropic(v, &s.system, 0.05, s.params.kappa), &s.system, &lin).unwrap();
        let (actr, ractr, aetr) = (region(Variant::ACtr), region(Variant::RaCtr), region(Variant::AEtr));
        let mut r = rng::stream(11, 0);
        for _ in 0..10_000 {
            let z = aetr.propose(&mut r);
            assert!(!actr.contains(&z) || ractr.contains(&z), "{name}: A-CTR point outside RA-CTR");
            assert!(!ractr.contains(&z) || aetr.contains(&z), "{name}: RA-CTR point outside A-ETR");
        }
    }
}

#[test]
fn regions_are_midpoint_convex_and_grow_with_the_radius() {
    for name in BUILTIN {
        let s = scenario(name);
        let (q, u) = nominal(&s);
        let lin = linearize(&s.system, &q, &u, s.params.kappa, QMode::FiniteDifference).unwrap();
        for v in [Variant::Ctr, Variant::RCtr, Variant::RaCtr] {
            let small = build(&TrustRegionSpec::isotropic(v, &s.system, 0.03, s.params.kappa), &s.system, &lin).unwrap();
            let large = build(&TrustRegionSpec::isotropic(v, &s.system, 0.06, s.params.kappa), &s.system, &lin).unwrap();
            let set = small.sample(200, 4).unwrap();
            let mut r = rng::stream(4, 99);
            for _ in 0..1000 {
                let a = &set.samples[r.random_range(0..set.samples.len())];
                let b = &set.samples[r.random_range(0..set.samples.len())];
                assert!(small.contains(&((a + b) * 0.5)), "{name} {}: midpoint rejected", v.name());
            }
            for z in &set.samples {
                assert!(large.contains(z), "{name} {}: doubling r removed a sample", v.name());
            }
        }
    }
}

fn pushert_goals(n: usize) -> Vec<(DVector<f64>, DVector<f64>)> {
    let s = scenario("pushert");
    (0..n)
        .map(|i| {
            let q = DVector::from_vec(systems::pushert_contact_nominal(&mut rng::stream(7, i as u64)));
            let g = generate_goals(&s.system, &q, 1, 7 + i as u64, &s.params, 4.0).unwrap();
            (q, g[0].goal.clone())
        })
        .collect()
}

/// Model cost of a nominal (δ = 0), the value every subproblem optimum must beat.
fn nominal_cost(sys: &SystemModel, params: &PlannerParams, q0: &DVector<f64>, u: &[DVector<f64>], goal: &DVector<f64>) -> f64 {
    let qs = rollout_nonsmooth(sys, q0, u).unwrap();
    let last = qs.last().unwrap();
    let gap = unwrap_goal(sys, goal, last) - last;
    let mut cost: f64 = gap.iter().zip(&params.q_weights).map(|(d, w)| w * d * d).sum();
    let mut prev = sys.robot_part(q0);
    for ut in u {
        cost += params.r_weight * (ut - &prev).norm_squared();
        prev = ut.clone();
    }
    cost
}

#[test]
fn subproblems_never_worsen_their_nominal() {
    let s = scenario("pushert");
    let mut params = s.params.clone();
    params.max_iterations = 8;
    params.tol = 0.0;
    for horizon in [1, 3] {
        params.horizon = horizon;
        for (q, goal) in pushert_goals(8) {
            let u = initial_guess_heuristic(&s.system, &q, params.kappa_pull).unwrap().u;
            let r = ctr_trajopt(&s.system, &q, &goal, vec![u; horizon], &params).unwrap();
            for (k, obj) in r.objectives.iter().enumerate() {
                let base = nominal_cost(&s.system, &params, &q, &r.history[k], &goal);
                assert!(*obj <= base + 1e-12, "iteration {k}: {obj} > nominal {base}");
            }
        }
    }
}

#[test]
fn executed_inputs_respect_the_rate_bound() {
    let s = scenario("pushert");
    let mut params = s.params.clone();
    params.horizon = 3;
    params.rollout_steps = 6;
    let eta = params.eta();
    for (q, goal) in pushert_goals(3) {
        for proj in [false, true] {
            let log = mpc_rollout(&s.system, &q, &goal, &params, proj).unwrap();
            for w in log.us.windows(2) {
                assert!((&w[1] - &w[0]).amax() <= eta + 1e-9, "step {} > η = {eta}", (&w[1] - &w[0]).amax());
            }
        }
    }
}

#[test]
fn horizon_has_little_effect_on_the_pusher_suite() {
    let s = scenario("pushert");
    let goals = pushert_goals(50);
    let mean_error = |horizon| {
        let mut params = s.params.clone();
        params.horizon = horizon;
        let total: f64 = goals
            .iter()
            .map(|(q, g)| {
                let log = mpc_rollout(&s.system, q, g, &params, false).unwrap();
                pose_error(&s.system, log.final_q(), g).combined()
            })
            .sum();
        total / goals.len() as f64
    };
    let (one, three) = (mean_error(1), mean_error(3));
    assert!((one - three).abs() < 0.5 * one.max(three), "T=1 {one} vs T=3 {three}");
}

#[test]
fn soft_contact_forces_stay_bounded() {
    let sys = systems::pusher1d();
    let params = SoftParams::for_system(&sys);
    let mut state = SoftPlantState::at_rest(DVector::from_vec(vec![0.2, 0.0]));
    let (mut max_force, mut deepest) = (0.0f64, 0.0f64);
    for k in 0..2000 {
        let u = DVector::from_element(1, (k as f64 * 1e-4).min(0.1));
        max_force = max_force.max(sys.stiffness[0] * (u[0] - state.q[1]).abs());
        state = step_soft(&sys, &params, &state, &u, params.dt).unwrap();
        for c in detect_contacts(&sys, &state.q, 0.0) {
            deepest = deepest.max(-c.phi);
        }
    }
    assert!(deepest > 0.0);
    assert!(deepest <= max_force / params.contact_stiffness, "{deepest} > {}", max_force / params.contact_stiffness);
}
