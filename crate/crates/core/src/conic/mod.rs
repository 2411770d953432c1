//! Convex solvers: log-barrier Newton, primal-dual SOCP interior point, Chebyshev radius.

mod barrier;
mod program;
mod socp;

use nalgebra::{DMatrix, DVector};

pub use barrier::{
    barrier_grad, barrier_hess, recover_dual, solve_barrier_newton, strictly_feasible_start, strictly_inside,
    BarrierSolveResult,
};
pub use program::{cone_margin, dual_cone_margin, tail_norm, Cone, ConicProgram};
pub use socp::{solve_socp, solve_socp_with, ConicSolution, SocpOptions, SolveStatus, TraceRow};

/// Radius of the largest origin-centred ball inside {z : aᵢᵀz + bᵢ ≤ 0}.
///
/// Solved as the LP max r s.t. ‖aᵢ‖r + bᵢ ≤ 0, r ≥ 0; returns 0 when the
/// origin is on or outside some face.
pub fn chebyshev_radius(halfspaces: &[(DVector<f64>, f64)]) -> f64 {
    if halfspaces.is_empty() || halfspaces.iter().any(|(_, b)| *b >= 0.0) {
        return 0.0;
    }
    let mut cones = Vec::with_capacity(halfspaces.len() + 1);
    for (a, b) in halfspaces {
        cones.push(Cone::new(DMatrix::from_element(1, 1, -a.norm()), DVector::from_element(1, -b), 0.0));
    }
    cones.push(Cone::new(DMatrix::from_element(1, 1, 1.0), DVector::zeros(1), 0.0));
    let prog = ConicProgram::new(DMatrix::zeros(1, 1), DVector::from_element(1, -1.0), None, cones)
        .expect("well-formed LP");
    let sol = solve_socp(&prog, 1e-12);
    if sol.status == SolveStatus::Optimal {
        sol.x[0].max(0.0)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_radius() {
        let hs: Vec<(DVector<f64>, f64)> = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
            .iter()
            .map(|a| (DVector::from_row_slice(a), -0.5))
            .collect();
        assert!((chebyshev_radius(&hs) - 0.5).abs() < 1e-8);
    }

    #[test]
    fn excluded_origin_gives_zero() {
        let hs = vec![(DVector::from_vec(vec![1.0]), 0.1)];
        assert_eq!(chebyshev_radius(&hs), 0.0);
    }
}
