mod common;

use nalgebra::DVector;
use proptest::prelude::*;

use impulsim_core::control::{compute_phi_hat, linear_rhs, objective, terminal_error_linear};
use impulsim_core::gramian::assemble_gramians;
use impulsim_core::random::{random_system, RandomSystemConfig};

#[test]
fn terminal_error_formula_on_random_suite() {
    for prob in common::random_suite() {
        let bundle = assemble_gramians(&prob.system).unwrap();
        for lambda in [1e-1, 1e-3] {
            let te = terminal_error_linear(&prob.system, &bundle, &prob.x0, &prob.h, lambda).unwrap();
            let gap = (&te.simulated - &te.formula).norm();
            assert!(gap <= 1e-6 * (1.0 + prob.h.norm()), "λ = {lambda}: gap {gap:e}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn phi_hat_minimizes_objective(seed in 0u64..1000, lambda_exp in -4i32..1,
                                   dir in prop::collection::vec(-1.0..1.0f64, 3), step in 1e-4..1.0f64) {
        let prob = random_system(&RandomSystemConfig { substeps: 16, seed, ..Default::default() }).unwrap();
        let bundle = assemble_gramians(&prob.system).unwrap();
        let lambda = 10f64.powi(lambda_exp);
        let rhs = linear_rhs(&prob.system, &prob.x0, &prob.h).unwrap();
        let ph = compute_phi_hat(&bundle, lambda, &rhs).unwrap();
        prop_assert!(ph.gradient_norm <= 1e-10 * (1.0 + rhs.norm()));
        let other = &ph.phi + DVector::from_vec(dir) * step;
        prop_assert!(ph.objective <= objective(&bundle.w, lambda, &rhs, &other) + 1e-12);
    }
}
