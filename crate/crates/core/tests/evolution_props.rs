mod common;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use impulsim_core::evolution::MatrixFn;
use impulsim_core::{DenseFamily, EvolutionFamily, Realization, SpectralFamily};

fn heat_family() -> EvolutionFamily {
    let spec = SpectralFamily::heat(6, Arc::new(|t: f64| 1.0 + t.sqrt()), 1.0).unwrap();
    EvolutionFamily::new(Realization::SpectralDiagonal(spec), None).unwrap()
}

fn dense_family(substeps: usize) -> EvolutionFamily {
    let gen: MatrixFn = Arc::new(|t: f64| {
        DMatrix::from_row_slice(3, 3, &[-1.0, 2.0 * t.cos(), 0.3, -0.5, -0.2, t, 0.1, 0.0, -0.7])
    });
    let dense = DenseFamily::new(3, gen, &[0.0, 0.3, 1.0], substeps).unwrap();
    EvolutionFamily::new(Realization::DenseGenerator(dense), None).unwrap()
}

fn ordered(a: f64, b: f64, c: f64) -> (f64, f64, f64) {
    let mut v = [a, b, c];
    v.sort_by(f64::total_cmp);
    (v[0], v[1], v[2])
}

proptest! {
    #[test]
    fn spectral_cocycle(a in 0.0..1.0f64, b in 0.0..1.0f64, c in 0.0..1.0f64,
                        x in prop::collection::vec(-5.0..5.0f64, 6)) {
        let fam = heat_family();
        let (s, r, t) = ordered(a, b, c);
        let x = DVector::from_vec(x);
        let direct = fam.propagate(s, t, &x).unwrap();
        let split = fam.propagate(r, t, &fam.propagate(s, r, &x).unwrap()).unwrap();
        prop_assert!((direct - split).norm() <= 1e-8 * x.norm().max(1e-300));
    }

    #[test]
    fn dense_cocycle_on_step_grid(i in 0usize..=40, j in 0usize..=40, k in 0usize..=40,
                                  x in prop::collection::vec(-5.0..5.0f64, 3)) {
        let fam = dense_family(20);
        let grid = fam.step_grid().unwrap().to_vec();
        let mut idx = [i, j, k];
        idx.sort();
        let (s, r, t) = (grid[idx[0]], grid[idx[1]], grid[idx[2]]);
        let x = DVector::from_vec(x);
        let direct = fam.propagate(s, t, &x).unwrap();
        let split = fam.propagate(r, t, &fam.propagate(s, r, &x).unwrap()).unwrap();
        prop_assert!((direct - split).norm() <= 1e-12 * x.norm().max(1.0));
    }

    #[test]
    fn dense_cocycle_off_grid_within_stepper_tolerance(a in 0.0..1.0f64, b in 0.0..1.0f64, c in 0.0..1.0f64,
                                                      x in prop::collection::vec(-5.0..5.0f64, 3)) {
        let fam = dense_family(32);
        let (s, r, t) = ordered(a, b, c);
        let x = DVector::from_vec(x);
        let direct = fam.propagate(s, t, &x).unwrap();
        let split = fam.propagate(r, t, &fam.propagate(s, r, &x).unwrap()).unwrap();
        prop_assert!((direct - split).norm() <= 1e-7 * x.norm().max(1.0));
    }

    #[test]
    fn identity_is_exact(s in 0.0..1.0f64, x in prop::collection::vec(-5.0..5.0f64, 3)) {
        let x = DVector::from_vec(x);
        prop_assert_eq!(dense_family(8).propagate(s, s, &x).unwrap(), x.clone());
        let y = DVector::from_fn(6, |i, _| x[i % 3]);
        prop_assert_eq!(heat_family().propagate(s, s, &y).unwrap(), y);
    }

    #[test]
    fn adjoint_pairing(a in 0.0..1.0f64, b in 0.0..1.0f64,
                       x in prop::collection::vec(-5.0..5.0f64, 3),
                       y in prop::collection::vec(-5.0..5.0f64, 3)) {
        let fam = dense_family(16);
        let (s, t) = if a <= b { (a, b) } else { (b, a) };
        let x = DVector::from_vec(x);
        let y = DVector::from_vec(y);
        let lhs = fam.propagate(s, t, &x).unwrap().dot(&y);
        let rhs = x.dot(&fam.propagate_adjoint(s, t, &y).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + x.norm() * y.norm()));
    }
}

#[test]
fn constant_generator_matches_power_series() {
    let a = DMatrix::from_row_slice(3, 3, &[-0.4, 1.3, 0.2, -0.9, 0.1, 0.5, 0.3, -0.2, -1.1]);
    let a2 = a.clone();
    let dense = DenseFamily::new(3, Arc::new(move |_| a2.clone()), &[0.0, 1.5], 3).unwrap();
    let fam = EvolutionFamily::new(Realization::DenseGenerator(dense), None).unwrap();
    let got = fam.assemble_matrix(0.2, 1.3).unwrap();
    let want = common::expm_series(&(&a * 1.1));
    assert!((got - want).abs().max() <= 1e-12);
}

#[test]
fn dense_family_matches_rk4() {
    let fam = dense_family(64);
    let gen = |t: f64| {
        DMatrix::from_row_slice(3, 3, &[-1.0, 2.0 * t.cos(), 0.3, -0.5, -0.2, t, 0.1, 0.0, -0.7])
    };
    let x0 = DVector::from_vec(vec![1.0, -0.5, 2.0]);
    let zero_b = DMatrix::zeros(3, 1);
    let (_, rk) = common::rk4_impulsive(
        &gen,
        &zero_b,
        &|_| DVector::zeros(1),
        &[0.3],
        &[DMatrix::zeros(3, 3)],
        &[DMatrix::zeros(3, 1)],
        &[DVector::zeros(1)],
        &x0,
        1.0,
        640,
        &[],
    );
    let got = fam.propagate(0.0, 1.0, &x0).unwrap();
    assert!((got - rk).amax() <= 1e-8);
}

#[test]
fn heat_primitive_with_sqrt_coefficient() {
    // ∫₀¹ (1 + √τ) dτ = 5/3.
    let fam = heat_family();
    let x = DVector::from_fn(6, |i, _| if i == 1 { 1.0 } else { 0.0 });
    let y = fam.propagate(0.0, 1.0, &x).unwrap();
    assert!((y[1] - (-4.0 * 5.0 / 3.0f64).exp()).abs() <= 1e-12);
}
