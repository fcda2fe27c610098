mod common;

use std::sync::Arc;

use nalgebra::DVector;

use impulsim_core::gramian::assemble_gramians;
use impulsim_core::semilinear::{verify_semilinear_controllability, SemilinearTerms, SolveOptions};

fn lipschitz_terms() -> SemilinearTerms {
    SemilinearTerms {
        f: Arc::new(|t, x: &DVector<f64>| x.map(|v| 0.1 * (v + t).sin())),
        xi: Arc::new(|_, x: &DVector<f64>| x.map(|v| 0.05 * v.tanh())),
        q: Arc::new(|tau: f64| (-tau).exp()),
        lipschitz_f: 0.1,
        lipschitz_xi: 0.05,
        bound_f: 0.1,
        bound_xi: 0.05,
        q_star: 1.0 - (-1.0f64).exp(),
    }
}

#[test]
fn fixed_points_satisfy_terminal_identity() {
    for prob in common::random_suite().into_iter().step_by(4) {
        let sys = prob.system.clone().with_semilinear(lipschitz_terms());
        let bundle = assemble_gramians(&sys).unwrap();
        let rows = verify_semilinear_controllability(
            &sys,
            &bundle,
            &prob.x0,
            &prob.h,
            &[1.0, 1e-2],
            SolveOptions::default(),
        )
        .unwrap();
        for (lambda, row) in rows {
            let row = row.unwrap_or_else(|e| panic!("λ = {lambda}: {e}"));
            assert!(row.identity_residual <= 1e-6 * (1.0 + prob.h.norm()));
            assert!(row.integral_residual <= 1e-6);
        }
    }
}
