//! Fixtures shared by the criterion benchmarks in `benches/`.

use nalgebra::DVector;

use ctr_core::planner::{generate_goals, initial_guess_heuristic};
use ctr_core::scenario::{builtin, systems, Scenario};
use ctr_core::rng;

/// A pushert contact nominal, its heuristic command and a reachable goal.
pub struct PushFixture {
    pub scenario: Scenario,
    pub q: DVector<f64>,
    pub u: DVector<f64>,
    pub goal: DVector<f64>,
}

pub fn pushert_fixture() -> PushFixture {
    let scenario = builtin("pushert").expect("registry");
    let sys = &scenario.system;
    let q = DVector::from_vec(systems::pushert_contact_nominal(&mut rng::stream(7, 0)));
    let u = initial_guess_heuristic(sys, &q, scenario.params.kappa_pull).expect("heuristic").u;
    let goal = generate_goals(sys, &q, 1, 7, &scenario.params, 4.0).expect("goal")[0].goal.clone();
    PushFixture { scenario, q, u, goal }
}
